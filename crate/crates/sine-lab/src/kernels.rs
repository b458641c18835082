//! The sine kernel, its restriction to a window, and the Nyström operator.

use std::f64::consts::PI;

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quadrature::{cached, panel_edges};
use crate::spectral::TestFunction;

/// Nodes per unit length used when no resolution is requested.
pub const DEFAULT_NODES_PER_UNIT: f64 = 12.0;

/// Largest admissible gap between consecutive quadrature nodes.
pub const MAX_NODE_SPACING: f64 = 0.5;

/// Tolerance on the `0 ≤ λ ≤ 1` check for discretized eigenvalues.
pub const EIGENVALUE_SLACK: f64 = 1e-8;

const MAX_PANEL_NODES: usize = 64;

/// `K(x, y) = sin(x − y) / (π (x − y))`.
pub fn eval_sine_kernel(x: f64, y: f64) -> f64 {
    let d = x - y;
    if d.abs() < 1e-6 {
        let d2 = d * d;
        (1.0 - d2 / 6.0 + d2 * d2 / 120.0 - d2 * d2 * d2 / 5040.0) / PI
    } else {
        d.sin() / (PI * d)
    }
}

/// Stateless evaluator for the sine kernel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SineKernel;

impl SineKernel {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        eval_sine_kernel(x, y)
    }
}

/// A closed interval `[lo, hi]` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(domain(format!("window needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    /// Always false for a validated window.
    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Whether `other` lies inside this window, up to rounding.
    pub fn covers(&self, other: &Window) -> bool {
        let slack = 1e-12 * (1.0 + self.lo.abs().max(self.hi.abs()));
        other.lo >= self.lo - slack && other.hi <= self.hi + slack
    }
}

/// Nyström discretization of `K` restricted to a window, in the symmetric
/// weighted basis `M_ij = √w_i K(x_i, x_j) √w_j`, with its eigendecomposition.
#[derive(Debug, Clone)]
pub struct DiscretizedKernelOperator {
    pub window: Window,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub matrix: Mat<f64>,
    /// Ascending, clamped to `[0, 1]`.
    pub eigenvalues: Vec<f64>,
    /// Column `i` is the eigenvector of `eigenvalues[i]`.
    pub eigenvectors: Mat<f64>,
}

/// Builder for operators with a chosen resolution and panel alignment.
#[derive(Debug, Clone)]
pub struct OperatorBuilder {
    window: Window,
    nodes_per_unit: f64,
    breaks: Vec<f64>,
}

impl OperatorBuilder {
    pub fn new(window: Window) -> Self {
        Self { window, nodes_per_unit: DEFAULT_NODES_PER_UNIT, breaks: Vec::new() }
    }

    /// Average number of nodes per unit length.
    pub fn nodes_per_unit(mut self, density: f64) -> Self {
        self.nodes_per_unit = density;
        self
    }

    /// Panel boundaries are placed at these points, so functions with kinks
    /// or jumps there are integrated at full accuracy.
    pub fn align_to(mut self, breaks: &[f64]) -> Self {
        self.breaks.extend_from_slice(breaks);
        self
    }

    /// Aligns panels with the breakpoints of `h`.
    pub fn align_to_function(self, h: &TestFunction) -> Self {
        let b = h.breakpoints();
        self.align_to(&b)
    }

    fn layout(&self) -> (Vec<f64>, Vec<f64>) {
        let w = self.window;
        let max_len = MAX_PANEL_NODES as f64 / self.nodes_per_unit;
        let edges = panel_edges(w.lo, w.hi, &self.breaks, max_len);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for e in edges.windows(2) {
            let m = ((e[1] - e[0]) * self.nodes_per_unit).ceil().clamp(2.0, MAX_PANEL_NODES as f64) as usize;
            cached(m).push_mapped(e[0], e[1], &mut nodes, &mut weights);
        }
        (nodes, weights)
    }

    /// Builds the operator and its full eigendecomposition.
    pub fn build(&self) -> Result<DiscretizedKernelOperator> {
        let (nodes, weights) = self.layout();
        DiscretizedKernelOperator::from_rule(self.window, nodes, weights)
    }
}

/// Builds the operator on `n_nodes` Gauss–Legendre nodes spread over equal
/// panels of at most 64 nodes.
pub fn build_operator(window: Window, n_nodes: usize) -> Result<DiscretizedKernelOperator> {
    if n_nodes < 2 {
        return Err(Error::Resolution(format!("need at least 2 nodes, got {n_nodes}")));
    }
    let panels = n_nodes.div_ceil(MAX_PANEL_NODES);
    let base = n_nodes / panels;
    let extra = n_nodes % panels;
    let mut nodes = Vec::with_capacity(n_nodes);
    let mut weights = Vec::with_capacity(n_nodes);
    let step = window.len() / panels as f64;
    for p in 0..panels {
        let m = base + usize::from(p < extra);
        let a = window.lo + step * p as f64;
        let b = if p + 1 == panels { window.hi } else { a + step };
        cached(m).push_mapped(a, b, &mut nodes, &mut weights);
    }
    DiscretizedKernelOperator::from_rule(window, nodes, weights)
}

fn check_spacing(window: &Window, nodes: &[f64]) -> Result<()> {
    let mut worst = 0.0f64;
    for w in nodes.windows(2) {
        worst = worst.max(w[1] - w[0]);
    }
    if nodes.len() < 2 || worst >= MAX_NODE_SPACING {
        return Err(Error::Resolution(format!(
            "largest node spacing {worst:.3} on a window of length {:.3} must stay below {MAX_NODE_SPACING}",
            window.len()
        )));
    }
    Ok(())
}

fn weighted_kernel_matrix(nodes: &[f64], weights: &[f64]) -> Mat<f64> {
    let roots: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    Mat::from_fn(nodes.len(), nodes.len(), |i, j| roots[i] * eval_sine_kernel(nodes[i], nodes[j]) * roots[j])
}

fn validate_spectrum(values: &mut [f64]) -> Result<()> {
    for &l in values.iter() {
        if !(-EIGENVALUE_SLACK..=1.0 + EIGENVALUE_SLACK).contains(&l) {
            return Err(Error::Discretization(format!(
                "eigenvalue {l:e} outside [-{EIGENVALUE_SLACK:e}, 1 + {EIGENVALUE_SLACK:e}]"
            )));
        }
    }
    for l in values.iter_mut() {
        *l = l.clamp(0.0, 1.0);
    }
    Ok(())
}

impl DiscretizedKernelOperator {
    /// Builds the operator from an explicit quadrature rule (sorted nodes).
    pub fn from_rule(window: Window, nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        check_spacing(&window, &nodes)?;
        let matrix = weighted_kernel_matrix(&nodes, &weights);
        let evd = matrix
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Discretization(format!("eigensolver failed: {e:?}")))?;
        let n = nodes.len();
        let mut eigenvalues: Vec<f64> = (0..n).map(|i| evd.S()[i]).collect();
        validate_spectrum(&mut eigenvalues)?;
        let eigenvectors = evd.U().to_owned();
        Ok(Self { window, nodes, weights, matrix, eigenvalues, eigenvectors })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ λ_i`.
    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Values of `h` at the nodes, after checking that its support fits.
    pub fn sample(&self, h: &TestFunction) -> Result<Vec<f64>> {
        let s = h.support();
        if !self.window.covers(&s) {
            return Err(domain(format!(
                "support [{}, {}] is not inside the window [{}, {}]",
                s.lo, s.hi, self.window.lo, self.window.hi
            )));
        }
        Ok(self.nodes.iter().map(|&x| h.eval(x)).collect())
    }

    /// `tr(D_1 K D_2 K ⋯ D_j K)` for diagonal weights given at the nodes.
    pub fn trace_diagonal_product(&self, diags: &[Vec<f64>]) -> f64 {
        let n = self.len();
        let m = &self.matrix;
        match diags.len() {
            0 => self.trace(),
            1 => (0..n).map(|i| diags[0][i] * m[(i, i)]).sum(),
            2 => {
                let mut acc = 0.0;
                for j in 0..n {
                    let mut col = 0.0;
                    for i in 0..n {
                        let v = m[(i, j)];
                        col += diags[0][i] * v * v;
                    }
                    acc += diags[1][j] * col;
                }
                acc
            }
            j => {
                let scaled = |d: &Vec<f64>| Mat::from_fn(n, n, |r, c| d[r] * m[(r, c)]);
                let mut acc = scaled(&diags[0]);
                for d in &diags[1..j - 1] {
                    acc = &acc * &scaled(d);
                }
                let last = &diags[j - 1];
                let mut t = 0.0;
                for c in 0..n {
                    for r in 0..n {
                        t += acc[(r, c)] * last[c] * m[(c, r)];
                    }
                }
                t
            }
        }
    }

    /// `tr(h^{a¹} K ⋯ h^{a^j} K_D)` where `h^{a}` stands for `Π_l h_l^{a_l}`.
    pub fn trace_weighted_product(&self, h: &[TestFunction], blocks: &[Vec<u32>]) -> Result<f64> {
        let samples: Vec<Vec<f64>> = h.iter().map(|f| self.sample(f)).collect::<Result<_>>()?;
        let mut diags = Vec::with_capacity(blocks.len());
        for a in blocks {
            if a.len() != h.len() {
                return Err(domain("multi-index length must match the number of functions"));
            }
            let d: Vec<f64> = (0..self.len())
                .map(|i| a.iter().zip(&samples).map(|(&p, s)| s[i].powi(p as i32)).product())
                .collect();
            diags.push(d);
        }
        Ok(self.trace_diagonal_product(&diags))
    }

    /// Defect checks for the inequality chain `0 ≤ tr h²(K − K²) ≤ Var S_h`.
    pub fn defect_checks(&self, h: &TestFunction) -> Result<DefectReport> {
        let hv = self.sample(h)?;
        let n = self.len();
        let m = &self.matrix;
        let (mut diag, mut sq_diag, mut comm, mut cross) = (0.0, 0.0, 0.0, 0.0);
        for j in 0..n {
            for i in 0..n {
                let k2 = m[(i, j)] * m[(i, j)];
                let dh = hv[i] - hv[j];
                comm += k2 * dh * dh;
                cross += hv[i] * hv[j] * k2;
                sq_diag += hv[j] * hv[j] * k2;
            }
            diag += hv[j] * hv[j] * m[(j, j)];
        }
        Ok(DefectReport { defect_trace: diag - sq_diag, commutator_hs_sq: comm, variance: diag - cross })
    }

    /// Variance of `S_h` from the trace formula `tr h²K − tr (hK)²`.
    pub fn variance(&self, h: &TestFunction) -> Result<f64> {
        Ok(self.defect_checks(h)?.variance)
    }
}

/// Output of [`operator_defect_checks`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefectReport {
    /// `tr h² (K − K²)`.
    pub defect_trace: f64,
    /// `‖[K, h]‖²_HS = ∫∫ |K(x,y)|² (h(x) − h(y))² dx dy`.
    pub commutator_hs_sq: f64,
    /// `tr h²K − tr (hK)²`.
    pub variance: f64,
}

/// Free-function form of [`DiscretizedKernelOperator::trace_weighted_product`].
pub fn trace_weighted_product(op: &DiscretizedKernelOperator, h: &[TestFunction], blocks: &[Vec<u32>]) -> Result<f64> {
    op.trace_weighted_product(h, blocks)
}

/// Free-function form of [`DiscretizedKernelOperator::defect_checks`].
pub fn operator_defect_checks(op: &DiscretizedKernelOperator, h: &TestFunction) -> Result<DefectReport> {
    op.defect_checks(h)
}

/// Eigenvalues of the sine kernel restricted to an interval of the given
/// length, in decreasing order, down to `1e-18`.
///
/// The restricted operator commutes with the prolate spheroidal differential
/// operator of bandwidth `c = length / 2`. Its eigenfunctions are computed
/// from that operator's matrix in the normalized Legendre basis, which splits
/// into two symmetric tridiagonal blocks (even and odd degrees). The integral
/// eigenvalue then follows from the transform at the origin:
/// `μ = √2 β₀ / ψ(0)` for even functions, `μ = c √(2/3) β₁ / ψ'(0)` for odd
/// ones, and `λ = (c / 2π) |μ|²`. Unlike a Nyström grid this stays cheap and
/// accurate for intervals of length in the thousands.
pub fn interval_spectrum(length: f64) -> Result<Vec<f64>> {
    if !(length.is_finite() && length > 0.0) {
        return Err(domain(format!("interval length must be positive, got {length}")));
    }
    let c = 0.5 * length;
    let size = (2.0 * c + 2.0 * c.sqrt() + 120.0).ceil() as usize;
    let mut out = Vec::new();
    for parity in 0..2usize {
        let degrees: Vec<usize> = (parity..size).step_by(2).collect();
        let m = degrees.len();
        let a = Mat::from_fn(m, m, |i, j| {
            let k = degrees[i.min(j)] as f64;
            if i == j {
                k * (k + 1.0) + c * c * (2.0 * k * (k + 1.0) - 1.0) / ((2.0 * k + 3.0) * (2.0 * k - 1.0))
            } else if i.abs_diff(j) == 1 {
                c * c * (k + 2.0) * (k + 1.0) / ((2.0 * k + 3.0) * ((2.0 * k + 1.0) * (2.0 * k + 5.0)).sqrt())
            } else {
                0.0
            }
        });
        let evd = a
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Discretization(format!("prolate eigensolver failed: {e:?}")))?;
        let u = evd.U();
        // basis values at the origin: P̄_k(0) for even k, P̄_k'(0) for odd k
        let mut basis = vec![0.0; m];
        let mut p = 1.0; // P_k(0) for even k
        for (i, &k) in degrees.iter().enumerate() {
            let norm = (k as f64 + 0.5).sqrt();
            if parity == 0 {
                if i > 0 {
                    p *= -((k - 1) as f64) / k as f64;
                }
                basis[i] = norm * p;
            } else {
                // P_k'(0) = k P_{k−1}(0)
                if i > 0 {
                    p *= -((k - 2) as f64) / (k - 1) as f64;
                }
                basis[i] = norm * k as f64 * p;
            }
        }
        for col in 0..m {
            let at_origin: f64 = (0..m).map(|i| u[(i, col)] * basis[i]).sum();
            let mu = if parity == 0 {
                2f64.sqrt() * u[(0, col)] / at_origin
            } else {
                c * (2.0 / 3.0f64).sqrt() * u[(0, col)] / at_origin
            };
            let lambda = c / (2.0 * PI) * mu * mu;
            // eigenvalues of the differential operator ascend with the index,
            // so the integral eigenvalues decrease; stop once negligible
            if lambda < 1e-18 && col > (2.0 * c / PI) as usize / 2 + 10 {
                break;
            }
            out.push(lambda.min(1.0));
        }
    }
    out.sort_by(|a, b| b.total_cmp(a));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_examples() {
        assert!((eval_sine_kernel(3.0, 3.0) - 1.0 / PI).abs() < 1e-16);
        assert!(eval_sine_kernel(0.0, PI).abs() < 1e-16);
        assert!((eval_sine_kernel(0.0, PI / 2.0) - 2.0 / (PI * PI)).abs() < 1e-15);
        // the series branch joins the direct formula smoothly
        let (a, b) = (eval_sine_kernel(0.0, 0.999e-6), eval_sine_kernel(0.0, 1.001e-6));
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn window_validation() {
        assert!(Window::new(1.0, 1.0).is_err());
        assert!(Window::new(0.0, 2.0).unwrap().contains(2.0));
    }

    #[test]
    fn operator_trace_and_rank() {
        let op = build_operator(Window::new(0.0, 20.0).unwrap(), 200).unwrap();
        assert!((op.trace() - 20.0 / PI).abs() < 1e-6);
        let big = op.eigenvalues.iter().filter(|&&l| l > 0.5).count() as i64;
        assert!((big - (20.0 / PI).round() as i64).abs() <= 1);
    }

    #[test]
    fn small_window_spectrum_bounded() {
        let op = build_operator(Window::new(0.0, 1.0).unwrap(), 50).unwrap();
        assert!(*op.eigenvalues.last().unwrap() <= 1.0 + 1e-8);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let r = build_operator(Window::new(0.0, 100.0).unwrap(), 100);
        assert!(matches!(r, Err(Error::Resolution(_))));
    }

    #[test]
    fn support_outside_window_is_rejected() {
        let op = build_operator(Window::new(0.0, 5.0).unwrap(), 60).unwrap();
        let h = TestFunction::indicator(1.0, 6.0).unwrap();
        assert!(matches!(op.variance(&h), Err(Error::Domain(_))));
    }

    #[test]
    fn defect_identity_and_bounds() {
        let op = build_operator(Window::new(0.0, 5.0).unwrap(), 60).unwrap();
        let h = TestFunction::indicator(0.0, 5.0).unwrap();
        let r = op.defect_checks(&h).unwrap();
        assert!(r.defect_trace >= -1e-10);
        assert!(r.defect_trace <= r.variance + 1e-9);
        assert!((r.variance - r.defect_trace - 0.5 * r.commutator_hs_sq).abs() < 1e-9 * r.variance);
        let z = op.defect_checks(&TestFunction::PiecewiseLinear { breakpoints: vec![0.0, 5.0], values: vec![0.0, 0.0] }).unwrap();
        assert_eq!((z.defect_trace, z.commutator_hs_sq, z.variance), (0.0, 0.0, 0.0));
    }

    #[test]
    fn traces_are_cyclic() {
        let op = build_operator(Window::new(0.0, 6.0).unwrap(), 72).unwrap();
        let h = vec![
            TestFunction::piecewise_linear(vec![0.0, 3.0, 6.0], vec![0.0, 1.0, 0.5]).unwrap(),
            TestFunction::indicator(1.0, 5.0).unwrap(),
        ];
        let blocks = [vec![1, 0], vec![0, 1], vec![1, 1]];
        let a = op.trace_weighted_product(&h, &blocks).unwrap();
        let b = op.trace_weighted_product(&h, &[blocks[1].clone(), blocks[2].clone(), blocks[0].clone()]).unwrap();
        assert!((a - b).abs() < 1e-10 * a.abs());
    }

    #[test]
    fn single_block_trace_is_diagonal_integral() {
        let op = build_operator(Window::new(0.0, 10.0).unwrap(), 120).unwrap();
        let h = TestFunction::piecewise_linear(vec![0.0, 10.0], vec![1.0, 0.0]).unwrap();
        let t = op.trace_weighted_product(std::slice::from_ref(&h), &[vec![2]]).unwrap();
        assert!((t - 10.0 / 3.0 / PI).abs() < 1e-9);
    }

    #[test]
    fn prolate_spectrum_matches_nystrom() {
        for len in [5.0, 20.0, 50.0] {
            let op = OperatorBuilder::new(Window::new(0.0, len).unwrap()).nodes_per_unit(16.0).build().unwrap();
            let mut nys = op.eigenvalues.clone();
            nys.sort_by(|a, b| b.total_cmp(a));
            let pro = interval_spectrum(len).unwrap();
            for i in 0..pro.len().min(nys.len()) {
                assert!((pro[i] - nys[i]).abs() < 1e-9, "len={len} i={i}: {} vs {}", pro[i], nys[i]);
            }
            let sum: f64 = pro.iter().sum();
            assert!((sum - len / PI).abs() < 1e-9, "len={len}: trace {sum}");
        }
    }
}
