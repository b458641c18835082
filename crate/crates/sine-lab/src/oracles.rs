//! Slow, independent reference computations.
//!
//! Nothing here calls the fast paths' quadrature or kernel code: the rules
//! are generated separately (Golub–Welsch instead of Newton iteration), the
//! kernel is written out inline, and every integral is refined until it stops
//! moving. Agreement with the fast paths is therefore evidence, not tautology.

use std::f64::consts::PI;

use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::spectral::TestFunction;

/// Gauss–Legendre rule from the eigenvalues of the Jacobi matrix.
struct Rule {
    x: Vec<f64>,
    w: Vec<f64>,
}

impl Rule {
    fn golub_welsch(n: usize) -> Rule {
        let jacobi = Mat::from_fn(n, n, |i, j| {
            if i.abs_diff(j) == 1 {
                let k = i.max(j) as f64;
                k / (4.0 * k * k - 1.0).sqrt()
            } else {
                0.0
            }
        });
        let evd = jacobi.self_adjoint_eigen(Side::Lower).expect("Jacobi matrix is symmetric");
        let x: Vec<f64> = (0..n).map(|i| evd.S()[i]).collect();
        let w: Vec<f64> = (0..n).map(|i| 2.0 * evd.U()[(0, i)].powi(2)).collect();
        Rule { x, w }
    }

    fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        self.x.iter().zip(&self.w).map(move |(x, w)| (c + h * x, w * h))
    }
}

/// Splits `[a, b]` at `cuts` and then into pieces no longer than `len`.
fn pieces(a: f64, b: f64, cuts: &[f64], len: f64) -> Vec<(f64, f64)> {
    let mut pts: Vec<f64> = cuts.iter().copied().filter(|&c| c > a && c < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut out = Vec::new();
    for p in pts.windows(2) {
        let m = ((p[1] - p[0]) / len).ceil().max(1.0) as usize;
        for i in 0..m {
            let lo = p[0] + (p[1] - p[0]) * i as f64 / m as f64;
            let hi = if i + 1 == m { p[1] } else { p[0] + (p[1] - p[0]) * (i + 1) as f64 / m as f64 };
            out.push((lo, hi));
        }
    }
    out
}

fn sine_kernel_sq(d: f64) -> f64 {
    if d.abs() < 1e-5 {
        let v = 1.0 - d * d / 6.0;
        v * v / (PI * PI)
    } else {
        let v = d.sin() / (PI * d);
        v * v
    }
}

/// `Var S_h = ∫ h² K(x,x) dx − ∫∫ h(x) h(y) K(x,y)² dx dy` by 2-D panel
/// Gauss quadrature, halving the panels until two successive values agree
/// to `1e-7`.
pub fn variance_double_integral(h: &TestFunction) -> Result<f64> {
    let support = h.support();
    let cuts = h.breakpoints();
    let rule = Rule::golub_welsch(12);
    let mut previous: Option<f64> = None;
    let mut len = 2.0;
    for _ in 0..12 {
        let panels = pieces(support.lo, support.hi, &cuts, len);
        let pts: Vec<(f64, f64)> = panels
            .iter()
            .flat_map(|&(a, b)| rule.mapped(a, b).collect::<Vec<_>>())
            .map(|(x, w)| (x, w * h.eval(x)))
            .collect();
        let diag: f64 = pts.iter().map(|&(x, wh)| wh * h.eval(x)).sum::<f64>() / PI;
        let mut off = 0.0;
        for &(x, a) in &pts {
            if a == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for &(y, b) in &pts {
                row += b * sine_kernel_sq(x - y);
            }
            off += a * row;
        }
        let value = diag - off;
        if let Some(p) = previous {
            if (value - p).abs() < 1e-7 * value.abs().max(1.0) {
                return Ok(value);
            }
        }
        previous = Some(value);
        len *= 0.5;
    }
    Err(Error::Accuracy("variance double integral did not settle after 12 refinements".into()))
}

/// `(1/2π²) ∫ |u| f̂(u) conj(ĝ(u)) du` by panel quadrature of the transforms,
/// extending the range by doubling until the newest shell is negligible.
pub fn pairing_quadrature(f: &TestFunction, g: &TestFunction) -> Result<f64> {
    let (sf, sg) = (f.support(), g.support());
    let spread = sf.hi.max(sg.hi) - sf.lo.min(sg.lo);
    let len = (PI / (spread + 1.0)).min(0.5);
    let rule = Rule::golub_welsch(16);
    let shell = |a: f64, b: f64| -> f64 {
        pieces(a, b, &[], len)
            .iter()
            .flat_map(|&(p, q)| rule.mapped(p, q).collect::<Vec<_>>())
            .map(|(u, w)| w * u * (f.fourier(u) * g.fourier(u).conj()).re)
            .sum()
    };
    let mut upper = 16.0;
    let mut total = shell(0.0, upper);
    let mut last = f64::INFINITY;
    while upper < 1e7 {
        let piece = shell(upper, 2.0 * upper);
        total += piece;
        upper *= 2.0;
        if piece.abs() <= 1e-10 * total.abs() + 1e-16 {
            return Ok(total / (PI * PI));
        }
        // shells of a divergent integral stop shrinking
        if upper > 1e4 && piece.abs() > 0.9 * last.abs() && piece.abs() > 1e-8 * total.abs() {
            break;
        }
        last = piece;
    }
    Err(Error::NotInH12(format!("∫|u| f̂ conj(ĝ) du does not converge (partial value {total:e})")))
}

/// Result of [`oscillatory_log_quadrature`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillatoryEstimate {
    /// Quadrature on `[0, cutoff]` plus the leading asymptotic tail terms.
    pub value: f64,
    /// Bound on what the tail terms leave out.
    pub tail_bound: f64,
}

/// `∫_0^cutoff Σ a_i cos(b_i y)/y dy` by panel quadrature on half-periods of
/// the fastest frequency, with the asymptotic tail
/// `∫_R^∞ cos(by)/y dy ≈ −sin(bR)/(bR) + cos(bR)/(bR)²` added back.
pub fn oscillatory_log_quadrature(a: &[f64], b: &[f64], cutoff: f64) -> Result<OscillatoryEstimate> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Domain("coefficient and frequency vectors must match".into()));
    }
    if a.iter().sum::<f64>().abs() > 1e-12 * a.iter().fold(1.0f64, |m, x| m.max(x.abs())) {
        return Err(Error::Divergence("coefficients must sum to 0".into()));
    }
    if b.iter().any(|&x| x == 0.0) {
        return Err(Error::Domain("frequencies must be nonzero".into()));
    }
    let bmin = b.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
    let bmax = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tail_bound: f64 = a.iter().zip(b).map(|(a, b)| 6.0 * a.abs() / (b.abs() * cutoff).powi(3)).sum();
    if tail_bound > 1e-6 || bmin * cutoff < 100.0 {
        return Err(Error::Accuracy(format!("cutoff {cutoff} is too small for frequencies down to {bmin}")));
    }
    let integrand = |y: f64| -> f64 {
        if y * bmax < 1e-3 {
            // Σ a (cos(by) − 1)/y, since Σ a = 0
            a.iter().zip(b).map(|(a, b)| -a * (b * b * y / 2.0 - b.powi(4) * y.powi(3) / 24.0)).sum()
        } else {
            a.iter().zip(b).map(|(a, b)| a * (b * y).cos()).sum::<f64>() / y
        }
    };
    let rule = Rule::golub_welsch(10);
    let half = PI / bmax;
    let panels = (cutoff / half).ceil() as usize;
    let mut total = 0.0;
    let mut comp = 0.0;
    for p in 0..panels {
        let lo = p as f64 * half;
        let hi = ((p + 1) as f64 * half).min(cutoff);
        let piece: f64 = rule.mapped(lo, hi).map(|(y, w)| w * integrand(y)).sum();
        // compensated summation over millions of panels
        let y = piece - comp;
        let t = total + y;
        comp = (t - total) - y;
        total = t;
    }
    let tail: f64 = a
        .iter()
        .zip(b)
        .map(|(a, b)| {
            let z = b.abs() * cutoff;
            a * (-z.sin() / z + z.cos() / (z * z))
        })
        .sum();
    Ok(OscillatoryEstimate { value: total + tail, tail_bound })
}
