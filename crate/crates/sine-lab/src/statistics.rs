//! Observables built from configurations: linear statistics, the rescaled
//! counting process `ξ`, the `(η, z)` decomposition and ergodic weights.
//!
//! For a scale `N` with `σ_N = π⁻¹ √ln N`:
//!
//! ```text
//! ξ_t = (#[0, tN] − tN/π) / σ_N
//! η   = τ⁻¹ ∫_0^τ ξ_s ds
//! z_t = σ_N (∫_0^t ξ_s ds − t η)
//! ```
//!
//! All time integrals are exact: the counting function is piecewise constant
//! in `t`, so `∫_0^t #[0, sN] ds = Σ_{x ∈ [0, tN]} (t − x/N)`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::sampler::Configuration;
use crate::spectral::{TestFunction, ZCovarianceModel};
use crate::stats::pairwise_sum;

/// `V_N = π⁻² ln N`, the asymptotic variance of the count in `[0, N]`.
pub fn v_n(n_scale: f64) -> f64 {
    n_scale.ln() / (PI * PI)
}

/// `σ_N = π⁻¹ √ln N`.
pub fn sigma_n(n_scale: f64) -> f64 {
    v_n(n_scale).sqrt()
}

/// `S_h = Σ_{x ∈ cfg} h(x)`.
pub fn linear_statistic(cfg: &Configuration, h: &TestFunction) -> f64 {
    let values: Vec<f64> = cfg.points.iter().map(|&x| h.eval(x)).collect();
    pairwise_sum(&values)
}

/// `E S_h = π⁻¹ ∫ h`, exact because the intensity is `1/π`.
pub fn expected_linear_statistic(h: &TestFunction) -> f64 {
    h.integral() / PI
}

fn check_scale(cfg: &Configuration, n_scale: f64) -> Result<()> {
    if !(n_scale > 1.0) {
        return Err(domain(format!("scale N must exceed 1, got {n_scale}")));
    }
    let slack = 1e-9 * n_scale;
    if cfg.window.lo > slack || cfg.window.hi < n_scale - slack {
        return Err(domain(format!(
            "window [{}, {}] does not contain [0, {n_scale}]",
            cfg.window.lo, cfg.window.hi
        )));
    }
    Ok(())
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(domain("times must lie in [0, 1]"));
    }
    Ok(())
}

/// `ξ_t` at each requested time.
pub fn xi_path(cfg: &Configuration, n_scale: f64, times: &[f64]) -> Result<Vec<f64>> {
    check_scale(cfg, n_scale)?;
    check_times(times)?;
    let sigma = sigma_n(n_scale);
    Ok(times
        .iter()
        .map(|&t| {
            if t == 0.0 {
                0.0
            } else {
                (cfg.count_in(0.0, t * n_scale) as f64 - t * n_scale / PI) / sigma
            }
        })
        .collect())
}

/// Rescaled positions `x/N` of the points in `[0, N]`, ascending.
fn rescaled_points(cfg: &Configuration, n_scale: f64) -> Vec<f64> {
    cfg.points.iter().filter(|&&x| (0.0..=n_scale).contains(&x)).map(|x| x / n_scale).collect()
}

/// `∫_0^t #[0, sN] ds` at each time, by sweeping the events in order.
fn counting_integrals(events: &[f64], times: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut out = vec![0.0; times.len()];
    let (mut acc, mut count, mut clock, mut next) = (0.0, 0usize, 0.0, 0usize);
    for i in order {
        let t = times[i];
        while next < events.len() && events[next] <= t {
            acc += count as f64 * (events[next] - clock);
            clock = events[next];
            count += 1;
            next += 1;
        }
        out[i] = acc + count as f64 * (t - clock);
    }
    out
}

/// `η`, the `z` path and `ξ` for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStatistics {
    pub times: Vec<f64>,
    pub xi: Vec<f64>,
    /// `∫_0^t ξ_s ds` at each time.
    pub xi_integral: Vec<f64>,
    pub eta: f64,
    pub z: Vec<f64>,
    pub n_scale: f64,
    pub tau: f64,
    pub seed: u64,
}

impl PathStatistics {
    /// Largest violation of `∫_0^t ξ = tη + z_t/σ_N`, relative to the size of
    /// the terms.
    pub fn reconstruction_defect(&self) -> f64 {
        let sigma = sigma_n(self.n_scale);
        self.times
            .iter()
            .zip(&self.xi_integral)
            .zip(&self.z)
            .map(|((&t, &i), &z)| {
                let rhs = t * self.eta + z / sigma;
                (i - rhs).abs() / (1.0 + i.abs().max(rhs.abs()))
            })
            .fold(0.0, f64::max)
    }

    /// CSV with columns `t, xi, z` and the metadata as `#` comments.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# N {:.17e}", self.n_scale);
        let _ = writeln!(s, "# tau {:.17e}", self.tau);
        let _ = writeln!(s, "# eta {:.17e}", self.eta);
        let _ = writeln!(s, "# seed {}", self.seed);
        let _ = writeln!(s, "t,xi,z");
        for i in 0..self.times.len() {
            let _ = writeln!(s, "{:.17e},{:.17e},{:.17e}", self.times[i], self.xi[i], self.z[i]);
        }
        s
    }
}

/// The `(η, z)` decomposition from exact time integrals of the counting
/// function, verified against the linear-statistic form
/// `η = (S_{f^N} − E S_{f^N})/σ_N`, `z_t = S_{g_t^N} − E S_{g_t^N}`.
pub fn eta_z_decomposition(cfg: &Configuration, n_scale: f64, tau: f64, times: &[f64]) -> Result<PathStatistics> {
    check_scale(cfg, n_scale)?;
    check_times(times)?;
    let model = ZCovarianceModel::new(tau)?;
    let sigma = sigma_n(n_scale);
    let events = rescaled_points(cfg, n_scale);
    let mut grid = times.to_vec();
    grid.push(tau);
    let counts = counting_integrals(&events, &grid);
    let mean_integral = |t: f64| t * t * n_scale / (2.0 * PI);
    let integral_tau = counts[times.len()] - mean_integral(tau);
    let eta = integral_tau / (tau * sigma);
    let mut xi_integral = Vec::with_capacity(times.len());
    let mut z = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let centred = counts[i] - mean_integral(t);
        xi_integral.push(centred / sigma);
        z.push(centred - t * integral_tau / tau);
    }
    let (eta_b, z_b) = linear_statistic_route(cfg, n_scale, &model, times)?;
    let scale = 1.0 + events.len() as f64;
    let worst = z.iter().zip(&z_b).map(|(a, b)| (a - b).abs()).fold((eta - eta_b).abs() * sigma, f64::max);
    if worst > 1e-9 * scale {
        return Err(Error::Accuracy(format!(
            "time-integral and linear-statistic routes differ by {worst:e}"
        )));
    }
    Ok(PathStatistics {
        times: times.to_vec(),
        xi: xi_path(cfg, n_scale, times)?,
        xi_integral,
        eta,
        z,
        n_scale,
        tau,
        seed: cfg.seed,
    })
}

/// `η` and `z_t` as centred linear statistics of `f^N` and `g_t^N`.
pub fn linear_statistic_route(
    cfg: &Configuration,
    n_scale: f64,
    model: &ZCovarianceModel,
    times: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let f = model.f().scaled(n_scale)?;
    let eta = (linear_statistic(cfg, &f) - expected_linear_statistic(&f)) / sigma_n(n_scale);
    let mut z = Vec::with_capacity(times.len());
    for &t in times {
        let g = model.g_t(t).scaled(n_scale)?;
        z.push(linear_statistic(cfg, &g) - expected_linear_statistic(&g));
    }
    Ok((eta, z))
}

/// `∫_0^1 φ(t) ξ_t dt`, exactly: `Σ_{x ∈ [0,N]} (Φ(1) − Φ(x/N))` minus its
/// mean `(N/π) ∫ t φ(t) dt`, over `σ_N`.
pub fn weighted_time_integral(cfg: &Configuration, n_scale: f64, phi: &TestFunction) -> Result<f64> {
    check_scale(cfg, n_scale)?;
    let s = phi.support();
    if s.lo < -1e-12 || s.hi > 1.0 + 1e-12 {
        return Err(domain("the time weight must be supported in [0, 1]"));
    }
    let total = phi.cumulative(1.0);
    let parts: Vec<f64> = rescaled_points(cfg, n_scale).iter().map(|&p| total - phi.cumulative(p)).collect();
    Ok((pairwise_sum(&parts) - n_scale / PI * phi.first_moment()) / sigma_n(n_scale))
}

/// The ergodic-integral weight `φ_t^N = φ ∗ 1_[0, tN]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicWeight {
    pub base: TestFunction,
    pub t: f64,
    pub n_scale: f64,
}

impl ErgodicWeight {
    /// Requires `∫ φ = 1` to `1e-10`.
    pub fn new(base: TestFunction, t: f64, n_scale: f64) -> Result<Self> {
        base.validate()?;
        let mass = base.integral();
        if (mass - 1.0).abs() > 1e-10 {
            return Err(Error::Config(format!("the weight φ must integrate to 1, got {mass}")));
        }
        if !(t >= 0.0 && n_scale > 0.0) {
            return Err(domain("need t ≥ 0 and N > 0"));
        }
        Ok(Self { base, t, n_scale })
    }

    /// `φ_t^N(x) = ∫_0^{tN} φ(x − u) du = Φ(x) − Φ(x − tN)`.
    pub fn eval(&self, x: f64) -> f64 {
        if self.t == 0.0 {
            return 0.0;
        }
        self.base.cumulative(x) - self.base.cumulative(x - self.t * self.n_scale)
    }

    /// The same function as a test function, for the Fourier side.
    pub fn to_test_function(&self) -> Result<TestFunction> {
        if self.t == 0.0 {
            return Ok(TestFunction::zero());
        }
        self.base.clone().convolved(TestFunction::indicator(0.0, self.t * self.n_scale)?)
    }

    /// `S_{φ_t^N}` for one configuration.
    pub fn statistic(&self, cfg: &Configuration) -> f64 {
        let values: Vec<f64> = cfg.points.iter().map(|&x| self.eval(x)).collect();
        pairwise_sum(&values)
    }

    /// `E S_{φ_t^N} = tN/π`.
    pub fn expectation(&self) -> f64 {
        self.t * self.n_scale / PI
    }
}

/// Free-function form of [`ErgodicWeight::eval`].
pub fn ergodic_weight_eval(w: &ErgodicWeight, x: f64) -> f64 {
    w.eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Window;
    use crate::rng::RngStream;

    fn lattice(n: f64) -> Configuration {
        let w = Window::new(-5.0, n + 5.0).unwrap();
        let pts: Vec<f64> = (0..).map(|k| PI / 2.0 + k as f64 * PI).take_while(|&x| x <= n).collect();
        Configuration::new(pts, w, RngStream::new(0, 0)).unwrap()
    }

    #[test]
    fn linear_statistic_basics() {
        let c = lattice(100.0);
        let empty = Configuration::new(vec![], c.window, RngStream::new(0, 0)).unwrap();
        let h = TestFunction::indicator(10.0, 40.0).unwrap();
        assert_eq!(linear_statistic(&empty, &h), 0.0);
        assert_eq!(linear_statistic(&c, &h), c.count_in(10.0, 40.0) as f64);
    }

    #[test]
    fn xi_on_lattice() {
        let n = 200.0;
        let c = lattice(n);
        let xi = xi_path(&c, n, &[0.0, 1.0]).unwrap();
        assert_eq!(xi[0], 0.0);
        assert!(xi[1].abs() <= PI / n.ln().sqrt());
    }

    #[test]
    fn window_must_cover_scale() {
        let c = lattice(50.0);
        assert!(xi_path(&c, 100.0, &[0.5]).is_err());
    }

    #[test]
    fn decomposition_invariants() {
        let n = 300.0;
        let pts: Vec<f64> = (0..97).map(|k| (k as f64 * 3.1 + (k * k % 7) as f64 * 0.2) % n).collect();
        let c = Configuration::new(pts, Window::new(-20.0, n + 20.0).unwrap(), RngStream::new(1, 1)).unwrap();
        let times: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        for tau in [0.5, 1.0] {
            let p = eta_z_decomposition(&c, n, tau, &times).unwrap();
            assert_eq!(p.z[0], 0.0);
            let i_tau = times.iter().position(|&t| t == tau).unwrap();
            assert!(p.z[i_tau].abs() < 1e-10);
            assert!(p.reconstruction_defect() < 1e-9);
        }
    }

    #[test]
    fn weighted_integral_of_indicator_matches_path_integral() {
        let n = 300.0;
        let pts: Vec<f64> = (0..90).map(|k| k as f64 * 3.3 + 0.1).collect();
        let c = Configuration::new(pts, Window::new(-20.0, n + 20.0).unwrap(), RngStream::new(1, 1)).unwrap();
        let phi = TestFunction::indicator(0.0, 0.5).unwrap();
        let a = weighted_time_integral(&c, n, &phi).unwrap();
        let p = eta_z_decomposition(&c, n, 1.0, &[0.5]).unwrap();
        assert!((a - p.xi_integral[0]).abs() < 1e-10);
    }

    #[test]
    fn ergodic_weight_examples() {
        let phi = TestFunction::indicator(0.0, 1.0).unwrap();
        let w = ErgodicWeight::new(phi.clone(), 0.5, 100.0).unwrap();
        assert!((w.eval(20.0) - 1.0).abs() < 1e-15);
        assert!((w.eval(50.5) - 0.5).abs() < 1e-15);
        let zero = ErgodicWeight::new(phi.clone(), 0.0, 100.0).unwrap();
        assert_eq!(zero.eval(0.5), 0.0);
        let f = w.to_test_function().unwrap();
        for x in [-0.5, 0.3, 1.0, 20.0, 50.2, 51.5] {
            assert!((f.eval(x) - w.eval(x)).abs() < 1e-12, "{x}");
        }
        assert!(ErgodicWeight::new(TestFunction::indicator(0.0, 2.0).unwrap(), 0.5, 10.0).is_err());
    }
}
