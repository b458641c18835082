//! Fourier-side closed forms.
//!
//! Conventions: `ĥ(u) = ∫ h(x) e^{-iux} dx`, and the `H^{1/2}` pairing is
//! `⟨f, g⟩ = (1/2π²) ∫ |u| f̂(u) conj(ĝ(u)) du`. With these, the variance of a
//! linear statistic under the sine process is
//!
//! ```text
//! Var S_h = (1/4π²) [ 2 ∫_{|s|≥2} |ĥ|² ds + ∫_{|s|<2} |s| |ĥ|² ds ]
//! ```
//!
//! which is evaluated here in the equivalent Parseval form
//! `‖h‖²/π − (1/2π²) ∫_0^2 (2 − s) |ĥ(s)|² ds`, so no tail is ever truncated.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::kernels::Window;
use crate::quadrature::{cached, panel_edges, GaussLegendre};

/// A compactly supported real function with a pointwise evaluator and a
/// Fourier transform.
///
/// `PiecewiseLinear` interpolates linearly between breakpoints; repeating a
/// breakpoint with two different values encodes a jump. The function is zero
/// outside `[first, last]`, so nonzero end values are jumps as well.
/// `Tabulated` is the same interpolant on a strictly increasing grid.
/// `Scaled { base, factor: N }` is `x ↦ base(x / N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction {
    Indicator { lo: f64, hi: f64 },
    PiecewiseLinear { breakpoints: Vec<f64>, values: Vec<f64> },
    Convolved { base: Box<TestFunction>, mollifier: Box<TestFunction> },
    Scaled { base: Box<TestFunction>, factor: f64 },
    Tabulated { grid: Vec<f64>, values: Vec<f64> },
}

/// Breakpoint/value form shared by every piecewise-linear kind.
#[derive(Debug, Clone)]
struct Linear {
    x: Vec<f64>,
    v: Vec<f64>,
}

impl TestFunction {
    /// `1_[lo, hi]`.
    pub fn indicator(lo: f64, hi: f64) -> Result<Self> {
        let f = Self::Indicator { lo, hi };
        f.validate()?;
        Ok(f)
    }

    /// Linear interpolation of `values` at `breakpoints`, zero outside.
    pub fn piecewise_linear(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let f = Self::PiecewiseLinear { breakpoints, values };
        f.validate()?;
        Ok(f)
    }

    /// Linear interpolation of samples on a strictly increasing grid.
    pub fn tabulated(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let f = Self::Tabulated { grid, values };
        f.validate()?;
        Ok(f)
    }

    /// `x ↦ self(x / factor)`.
    pub fn scaled(self, factor: f64) -> Result<Self> {
        let f = Self::Scaled { base: Box::new(self), factor };
        f.validate()?;
        Ok(f)
    }

    /// `x ↦ ∫ self(x − u) mollifier(u) du`.
    pub fn convolved(self, mollifier: TestFunction) -> Result<Self> {
        let f = Self::Convolved { base: Box::new(self), mollifier: Box::new(mollifier) };
        f.validate()?;
        Ok(f)
    }

    /// The zero function (an empty piecewise-linear function on `[0, 1]`).
    pub fn zero() -> Self {
        Self::PiecewiseLinear { breakpoints: vec![0.0, 1.0], values: vec![0.0, 0.0] }
    }

    /// Checks structural invariants; deserialized values should be validated
    /// before use.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Indicator { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(domain(format!("indicator needs lo < hi, got [{lo}, {hi}]")));
                }
            }
            Self::PiecewiseLinear { breakpoints, values } => {
                check_table(breakpoints, values, false)?;
            }
            Self::Tabulated { grid, values } => {
                check_table(grid, values, true)?;
            }
            Self::Scaled { base, factor } => {
                if !(factor.is_finite() && *factor > 0.0) {
                    return Err(domain(format!("scale factor must be positive, got {factor}")));
                }
                base.validate()?;
            }
            Self::Convolved { base, mollifier } => {
                base.validate()?;
                mollifier.validate()?;
            }
        }
        Ok(())
    }

    /// Smallest closed interval outside which the function vanishes.
    pub fn support(&self) -> Window {
        let (lo, hi) = self.support_bounds();
        Window { lo, hi }
    }

    fn support_bounds(&self) -> (f64, f64) {
        match self {
            Self::Indicator { lo, hi } => (*lo, *hi),
            Self::PiecewiseLinear { breakpoints: x, .. } | Self::Tabulated { grid: x, .. } => {
                (x[0], x[x.len() - 1])
            }
            Self::Scaled { base, factor } => {
                let (a, b) = base.support_bounds();
                (a * factor, b * factor)
            }
            Self::Convolved { base, mollifier } => {
                let (a, b) = base.support_bounds();
                let (c, d) = mollifier.support_bounds();
                (a + c, b + d)
            }
        }
    }

    fn linear(&self) -> Option<Linear> {
        match self {
            Self::Indicator { lo, hi } => Some(Linear { x: vec![*lo, *hi], v: vec![1.0, 1.0] }),
            Self::PiecewiseLinear { breakpoints: x, values: v } | Self::Tabulated { grid: x, values: v } => {
                Some(Linear { x: x.clone(), v: v.clone() })
            }
            Self::Scaled { base, factor } => base.linear().map(|l| Linear {
                x: l.x.iter().map(|x| x * factor).collect(),
                v: l.v,
            }),
            Self::Convolved { .. } => None,
        }
    }

    /// Pointwise value.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Indicator { lo, hi } => {
                if x >= *lo && x <= *hi {
                    1.0
                } else {
                    0.0
                }
            }
            Self::PiecewiseLinear { breakpoints, values } | Self::Tabulated { grid: breakpoints, values } => {
                eval_linear(breakpoints, values, x)
            }
            Self::Scaled { base, factor } => base.eval(x / factor),
            Self::Convolved { base, mollifier } => {
                let (c, d) = mollifier.support_bounds();
                let mut cuts: Vec<f64> = mollifier.breakpoints();
                cuts.extend(base.breakpoints().iter().map(|b| x - b));
                let edges = panel_edges(c, d, &cuts, f64::INFINITY);
                let rule = cached(8);
                edges
                    .windows(2)
                    .map(|e| rule.integrate(e[0], e[1], |u| base.eval(x - u) * mollifier.eval(u)))
                    .sum()
            }
        }
    }

    /// Positions where the function or its derivative may jump; panels that
    /// avoid these points integrate the function at spectral accuracy.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = match self {
            Self::Indicator { lo, hi } => vec![*lo, *hi],
            Self::PiecewiseLinear { breakpoints: x, .. } | Self::Tabulated { grid: x, .. } => x.clone(),
            Self::Scaled { base, factor } => base.breakpoints().iter().map(|b| b * factor).collect(),
            Self::Convolved { base, mollifier } => {
                let (p, q) = (base.breakpoints(), mollifier.breakpoints());
                p.iter().flat_map(|a| q.iter().map(move |b| a + b)).collect()
            }
        };
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Whether the function is continuous on the whole line.
    pub fn is_continuous(&self) -> bool {
        match self {
            Self::Indicator { .. } => false,
            Self::PiecewiseLinear { breakpoints: x, values: v } | Self::Tabulated { grid: x, values: v } => {
                v[0] == 0.0
                    && v[v.len() - 1] == 0.0
                    && x.windows(2).zip(v.windows(2)).all(|(x, v)| x[0] < x[1] || v[0] == v[1])
            }
            Self::Scaled { base, .. } => base.is_continuous(),
            // a convolution of bounded compactly supported functions is continuous
            Self::Convolved { .. } => true,
        }
    }

    /// `∫ h dx`, exactly.
    pub fn integral(&self) -> f64 {
        match self {
            Self::Convolved { base, mollifier } => base.integral() * mollifier.integral(),
            Self::Scaled { base, factor } => base.integral() * factor,
            _ => {
                let l = self.linear().expect("linear kinds");
                l.x.windows(2).zip(l.v.windows(2)).map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1])).sum()
            }
        }
    }

    /// `ĥ(u) = ∫ h(x) e^{-iux} dx`, exact for every kind.
    pub fn fourier(&self, u: f64) -> Complex64 {
        match self {
            Self::Indicator { lo, hi } => {
                let (m, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                Complex64::from_polar(2.0 * half * sinc(u * half), -u * m)
            }
            Self::PiecewiseLinear { breakpoints, values } | Self::Tabulated { grid: breakpoints, values } => {
                fourier_linear(breakpoints, values, u)
            }
            Self::Scaled { base, factor } => base.fourier(u * factor) * *factor,
            Self::Convolved { base, mollifier } => base.fourier(u) * mollifier.fourier(u),
        }
    }

    /// `Φ(y) = ∫_{−∞}^y h(x) dx`, exact for the piecewise-linear kinds and
    /// by panel quadrature (exact for piecewise polynomials) otherwise.
    pub fn cumulative(&self, y: f64) -> f64 {
        match self {
            Self::Scaled { base, factor } => base.cumulative(y / factor) * factor,
            Self::Convolved { .. } => {
                let (a, b) = self.support_bounds();
                if y <= a {
                    return 0.0;
                }
                let hi = y.min(b);
                let edges = panel_edges(a, hi, &self.breakpoints(), f64::INFINITY);
                let rule = cached(8);
                edges.windows(2).map(|e| rule.integrate(e[0], e[1], |x| self.eval(x))).sum()
            }
            _ => {
                let l = self.linear().expect("linear kinds");
                let mut acc = 0.0;
                for i in 0..l.x.len() - 1 {
                    let (a, b) = (l.x[i], l.x[i + 1]);
                    if y <= a || b == a {
                        if y <= a {
                            break;
                        }
                        continue;
                    }
                    let top = y.min(b);
                    let slope = (l.v[i + 1] - l.v[i]) / (b - a);
                    let end = l.v[i] + slope * (top - a);
                    acc += 0.5 * (top - a) * (l.v[i] + end);
                }
                acc
            }
        }
    }

    /// `∫ x h(x) dx`.
    pub fn first_moment(&self) -> f64 {
        let (a, b) = self.support_bounds();
        let edges = panel_edges(a, b, &self.breakpoints(), f64::INFINITY);
        let rule = cached(8);
        edges.windows(2).map(|e| rule.integrate(e[0], e[1], |x| x * self.eval(x))).sum()
    }

    /// `∫ f g dx`, by Gauss–Legendre on the merged breakpoints (exact for the
    /// piecewise-polynomial kinds).
    pub fn inner(&self, other: &TestFunction) -> f64 {
        let (a, b) = self.support_bounds();
        let (c, d) = other.support_bounds();
        let (lo, hi) = (a.max(c), b.min(d));
        if lo >= hi {
            return 0.0;
        }
        let mut cuts = self.breakpoints();
        cuts.extend(other.breakpoints());
        let edges = panel_edges(lo, hi, &cuts, f64::INFINITY);
        let rule = cached(8);
        edges.windows(2).map(|e| rule.integrate(e[0], e[1], |x| self.eval(x) * other.eval(x))).sum()
    }

    /// `∫ h² dx`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.inner(self)
    }

    /// Slope jumps `(position, jump)` of a continuous piecewise-linear
    /// function; `None` for other kinds.
    fn slope_jumps(&self) -> Option<Vec<(f64, f64)>> {
        if !self.is_continuous() {
            return None;
        }
        let l = self.linear()?;
        let n = l.x.len();
        let slope = |i: usize| -> f64 {
            // slope of segment i (between i and i+1); zero outside
            if i >= n - 1 {
                return 0.0;
            }
            let dx = l.x[i + 1] - l.x[i];
            if dx == 0.0 {
                0.0
            } else {
                (l.v[i + 1] - l.v[i]) / dx
            }
        };
        let mut jumps = Vec::with_capacity(n);
        let mut prev = 0.0;
        for i in 0..n {
            let next = slope(i);
            let c = next - prev;
            if c != 0.0 {
                jumps.push((l.x[i], c));
            }
            prev = next;
        }
        Some(jumps)
    }
}

fn check_table(x: &[f64], v: &[f64], strict: bool) -> Result<()> {
    if x.len() < 2 || x.len() != v.len() {
        return Err(domain(format!(
            "need at least two breakpoints and matching values, got {} and {}",
            x.len(),
            v.len()
        )));
    }
    if x.iter().chain(v).any(|z| !z.is_finite()) {
        return Err(domain("breakpoints and values must be finite"));
    }
    for w in x.windows(2) {
        if w[1] < w[0] || (strict && w[1] == w[0]) {
            return Err(domain("breakpoints must be increasing"));
        }
    }
    if x[0] == x[x.len() - 1] {
        return Err(domain("support must have positive length"));
    }
    Ok(())
}

fn eval_linear(x: &[f64], v: &[f64], t: f64) -> f64 {
    let n = x.len();
    if t < x[0] || t > x[n - 1] {
        return 0.0;
    }
    // index of the last breakpoint <= t
    let i = x.partition_point(|&b| b <= t);
    if i == 0 {
        return v[0];
    }
    if i >= n {
        return v[n - 1];
    }
    let (x0, x1) = (x[i - 1], x[i]);
    if x1 == x0 {
        return v[i];
    }
    v[i - 1] + (v[i] - v[i - 1]) * (t - x0) / (x1 - x0)
}

/// `sin(z)/z` with a series near zero.
pub(crate) fn sinc(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        let z2 = z * z;
        1.0 - z2 / 6.0 + z2 * z2 / 120.0
    } else {
        z.sin() / z
    }
}

/// `∫_0^a x sin(sx) dx`.
fn odd_moment(s: f64, a: f64) -> f64 {
    let sa = s * a;
    if sa.abs() < 0.1 {
        let a3 = a * a * a;
        let z2 = sa * sa;
        s * a3 * (1.0 / 3.0 - z2 / 30.0 + z2 * z2 / 840.0 - z2 * z2 * z2 / 45360.0)
    } else {
        (sa.sin() - sa * sa.cos()) / (s * s)
    }
}

fn fourier_linear(x: &[f64], v: &[f64], u: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..x.len() - 1 {
        let (a, b) = (x[i], x[i + 1]);
        if b == a {
            continue;
        }
        let (m, half) = (0.5 * (a + b), 0.5 * (b - a));
        let mean = 0.5 * (v[i] + v[i + 1]);
        let slope = (v[i + 1] - v[i]) / (b - a);
        let local = Complex64::new(mean * 2.0 * half * sinc(u * half), -2.0 * slope * odd_moment(u, half));
        acc += local * Complex64::from_polar(1.0, -u * m);
    }
    acc
}

/// Oscillation-adapted panels on `[0, 2]` for integrands built from
/// transforms of functions spread over a region of the given width.
fn low_band_edges(width: f64, refinement: usize) -> Vec<f64> {
    let max_len = (PI / (width + 1.0)).min(0.25) / refinement as f64;
    panel_edges(0.0, 2.0, &[], max_len)
}

fn low_band<F: Fn(f64) -> f64>(width: f64, f: F) -> Result<f64> {
    let rule = cached(16);
    let integrate = |refinement| {
        low_band_edges(width, refinement)
            .windows(2)
            .map(|e| rule.integrate(e[0], e[1], |s| (2.0 - s) * f(s)))
            .sum::<f64>()
    };
    let coarse = integrate(1);
    let fine = integrate(2);
    let scale = coarse.abs().max(fine.abs()).max(1e-300);
    if (coarse - fine).abs() > 1e-10 * scale + 1e-14 {
        return Err(Error::Accuracy(format!("low-band integral did not settle: {coarse} vs {fine}")));
    }
    Ok(fine)
}

fn spread(f: &TestFunction, g: &TestFunction) -> f64 {
    let (a, b) = f.support_bounds();
    let (c, d) = g.support_bounds();
    b.max(d) - a.min(c)
}

/// Variance of the linear statistic `S_h` under the sine process.
pub fn variance_sine_fourier(h: &TestFunction) -> Result<f64> {
    covariance_sine_fourier(h, h)
}

/// Covariance of `S_f` and `S_g` under the sine process, from the same
/// Fourier formula.
pub fn covariance_sine_fourier(f: &TestFunction, g: &TestFunction) -> Result<f64> {
    let l2 = f.inner(g) / PI;
    let band = low_band(spread(f, g), |s| (f.fourier(s) * g.fourier(s).conj()).re)?;
    Ok(l2 - band / (2.0 * PI * PI))
}

/// `⟨f, g⟩_{1/2} = (1/2π²) ∫ |u| f̂ conj(ĝ) du`.
///
/// Continuous piecewise-linear inputs use the exact slope-jump formula
/// `(1/2π²) Σ c_k d_l Δ² ln|Δ|` over pairs of kinks; other continuous inputs
/// fall back to adaptive quadrature. Discontinuous inputs are rejected.
pub fn sobolev_half_pairing(f: &TestFunction, g: &TestFunction) -> Result<f64> {
    for h in [f, g] {
        if !h.is_continuous() {
            return Err(Error::NotInH12(format!(
                "{} has a jump, so ∫|u||ĥ|² diverges",
                kind_name(h)
            )));
        }
    }
    if let (Some(p), Some(q)) = (f.slope_jumps(), g.slope_jumps()) {
        let mut acc = 0.0;
        for &(x, c) in &p {
            for &(y, d) in &q {
                let delta = x - y;
                if delta != 0.0 {
                    acc += c * d * delta * delta * delta.abs().ln();
                }
            }
        }
        return Ok(acc / (2.0 * PI * PI));
    }
    pairing_by_quadrature(f, g)
}

fn pairing_by_quadrature(f: &TestFunction, g: &TestFunction) -> Result<f64> {
    let width = spread(f, g);
    let panel = (PI / (width + 1.0)).min(0.5);
    let rule = GaussLegendre::new(16);
    let chunk = |a: f64, b: f64| -> f64 {
        panel_edges(a, b, &[], panel)
            .windows(2)
            .map(|e| rule.integrate(e[0], e[1], |u| u * (f.fourier(u) * g.fourier(u).conj()).re))
            .sum()
    };
    // Shells [U, 2U] of a pairing in H^{1/2} shrink geometrically; the
    // remaining tail is extrapolated from the observed ratio.
    let mut upper = 32.0;
    let mut total = chunk(0.0, upper);
    let mut previous = f64::NAN;
    loop {
        let piece = chunk(upper, 2.0 * upper);
        total += piece;
        upper *= 2.0;
        let ratio = (piece / previous).abs();
        previous = piece;
        let scale = 1e-10 * total.abs().max(1e-300) + 1e-18;
        if piece.abs() <= scale {
            break;
        }
        if ratio < 0.6 && piece.abs() * ratio / (1.0 - ratio) <= scale {
            total += piece * ratio / (1.0 - ratio);
            break;
        }
        if upper > 1e6 {
            return Err(Error::NotInH12(format!("pairing tail does not decay (last chunk {piece:e})")));
        }
    }
    Ok(total / (PI * PI))
}

fn kind_name(h: &TestFunction) -> &'static str {
    match h {
        TestFunction::Indicator { .. } => "indicator",
        TestFunction::PiecewiseLinear { .. } => "piecewise-linear function",
        TestFunction::Convolved { .. } => "convolution",
        TestFunction::Scaled { .. } => "scaled function",
        TestFunction::Tabulated { .. } => "tabulated function",
    }
}

/// `θ(t) = t² ln|t| / 2π²`, with `θ(0) = 0`.
pub fn theta(t: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t * t * t.abs().ln() / (2.0 * PI * PI)
    }
}

/// The bridge covariance kernel and the functions `f`, `g_t` whose linear
/// statistics produce `η` and `z_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZCovarianceModel {
    pub tau: f64,
}

impl ZCovarianceModel {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(domain(format!("tau must lie in (0, 1], got {tau}")));
        }
        Ok(Self { tau })
    }

    fn check_time(t: f64) {
        debug_assert!((-1e-12..=1.0 + 1e-12).contains(&t), "time {t} outside [0, 1]");
    }

    /// `w(t, s) = ½θ(t−s) − (1−s/τ)θ(t) − (s/τ)θ(t−τ) + (t/τ)(1−s/τ)θ(τ)`.
    pub fn w_cov(&self, t: f64, s: f64) -> f64 {
        Self::check_time(t);
        Self::check_time(s);
        let tau = self.tau;
        0.5 * theta(t - s) - (1.0 - s / tau) * theta(t) - (s / tau) * theta(t - tau)
            + (t / tau) * (1.0 - s / tau) * theta(tau)
    }

    /// `w(t, s) + w(s, t)`, which equals the pairing `⟨g_t, g_s⟩_{1/2}`.
    ///
    /// The Fourier variance formula gives `Cov(z_t^N, z_s^N) → ½⟨g_t, g_s⟩_{1/2}`,
    /// so the sampled bridge has half this covariance.
    pub fn z_covariance(&self, t: f64, s: f64) -> f64 {
        self.w_cov(t, s) + self.w_cov(s, t)
    }

    /// `g_t(x) = (t − x)_+ − (t/τ)(τ − x)_+` for `x ≥ 0`, zero for `x < 0`.
    pub fn g_t_eval(&self, t: f64, x: f64) -> f64 {
        Self::check_time(t);
        if x < 0.0 {
            return 0.0;
        }
        (t - x).max(0.0) - (t / self.tau) * (self.tau - x).max(0.0)
    }

    /// `g_t` as a continuous piecewise-linear test function.
    pub fn g_t(&self, t: f64) -> TestFunction {
        let (lo, hi) = (t.min(self.tau), t.max(self.tau));
        let peak = lo * (t / self.tau - 1.0);
        if lo == 0.0 || lo == hi {
            return TestFunction::PiecewiseLinear { breakpoints: vec![0.0, self.tau], values: vec![0.0, 0.0] };
        }
        TestFunction::PiecewiseLinear { breakpoints: vec![0.0, lo, hi], values: vec![0.0, peak, 0.0] }
    }

    /// `f(x) = (1/τ)(τ − x)_+` on `x ≥ 0`; `S_f` recovers `η` after rescaling.
    pub fn f(&self) -> TestFunction {
        TestFunction::PiecewiseLinear { breakpoints: vec![0.0, self.tau], values: vec![1.0, 0.0] }
    }

    /// `ĝ_t(y) = h_t(y) / y²` with `h_t(y) = 1 − e^{−ity} − (t/τ)(1 − e^{−iτy})`.
    pub fn g_t_hat(&self, t: f64, y: f64) -> Complex64 {
        Self::check_time(t);
        let tau = self.tau;
        if y.abs() < 1e-4 {
            // series of h_t(y)/y²; the y⁰ and y¹ terms of h_t cancel
            let c2 = (t * t - t * tau) / 2.0;
            let c3 = -(t.powi(3) - t * tau * tau) / 6.0;
            let c4 = -(t.powi(4) - t * tau.powi(3)) / 24.0;
            let c5 = (t.powi(5) - t * tau.powi(4)) / 120.0;
            return Complex64::new(c2 + c4 * y * y, c3 * y + c5 * y * y * y);
        }
        // 1 − e^{−iθ} = 2 sin²(θ/2) + i sin θ keeps the cancellation benign
        let one_minus = |theta: f64| Complex64::new(2.0 * (theta / 2.0).sin().powi(2), theta.sin());
        let h = one_minus(t * y) - one_minus(tau * y) * (t / tau);
        h / (y * y)
    }

    /// `‖g_t − g_s‖²_{1/2} = 2(Θ(t, s) − θ(t − s))` in closed form.
    pub fn tightness_modulus(&self, t: f64, s: f64) -> f64 {
        let tau = self.tau;
        let r = (t - s) / tau;
        let big = r * (theta(t) - theta(s) + theta(s - tau) - theta(t - tau) - r * theta(tau));
        2.0 * (big - theta(t - s))
    }
}

/// `∫_0^∞ Σ a_i cos(b_i y) / y dy = −Σ a_i ln|b_i|`, which converges exactly
/// when `Σ a_i = 0`.
pub fn log_cosine_integral(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(domain("coefficient and frequency vectors must have equal nonzero length"));
    }
    let total: f64 = a.iter().sum();
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    if total.abs() > 1e-12 * scale {
        return Err(Error::Divergence(format!("coefficients sum to {total:e}, not 0")));
    }
    if b.iter().any(|&x| x == 0.0 || !x.is_finite()) {
        return Err(domain("frequencies must be finite and nonzero"));
    }
    Ok(-a.iter().zip(b).map(|(a, b)| a * b.abs().ln()).sum::<f64>())
}
