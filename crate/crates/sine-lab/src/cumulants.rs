//! Cumulants of linear statistics: the trace formula, its combinatorial
//! identities, the hyperplane Fourier representation and the sine-kernel
//! overlap identity.
//!
//! For a vector of test functions `h = (h_1, …, h_d)` and a multi-index `k`,
//! the joint cumulant of `(S_{h_1}, …, S_{h_d})` is
//!
//! ```text
//! B_k = k! Σ_j ((−1)^{j+1}/j) Σ_{a¹+⋯+a^j=k} tr(h^{a¹}K ⋯ h^{a^j}K) / (a¹!⋯a^j!)
//! ```
//!
//! where `h^a = Π_l h_l^{a_l}` and `a! = Π_l a_l!`.

use std::f64::consts::PI;

use faer::{Mat, Side};
use num_complex::Complex64;
use num_rational::Ratio;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::kernels::{interval_spectrum, DiscretizedKernelOperator};
use crate::quadrature::{cached, panel_edges};
use crate::spectral::TestFunction;

/// Largest total order handled by the enumeration-based routines.
pub const MAX_ORDER: u32 = 6;

/// A nonzero vector of nonnegative integers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Result<Self> {
        if entries.is_empty() || entries.iter().all(|&e| e == 0) {
            return Err(domain("a multi-index needs at least one nonzero entry"));
        }
        Ok(Self(entries))
    }

    /// The unit vector `e_i` in dimension `d`.
    pub fn unit(d: usize, i: usize) -> Self {
        let mut v = vec![0; d];
        v[i] = 1;
        Self(v)
    }

    /// `|k| = Σ k_i`.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `k! = Π k_i!`.
    pub fn factorial(&self) -> u64 {
        self.0.iter().map(|&e| factorial(e)).product()
    }

    /// Every nonzero multi-index of dimension `d` with order at most `max`,
    /// sorted by order and then lexicographically.
    pub fn all_up_to(d: usize, max: u32) -> Vec<Self> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; d];
        fn rec(i: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
            if i == cur.len() {
                if cur.iter().any(|&e| e > 0) {
                    out.push(MultiIndex(cur.clone()));
                }
                return;
            }
            for e in 0..=left {
                cur[i] = e;
                rec(i + 1, left - e, cur, out);
            }
            cur[i] = 0;
        }
        rec(0, max, &mut cur, &mut out);
        out.sort_by(|a, b| a.order().cmp(&b.order()).then_with(|| b.0.cmp(&a.0)));
        out
    }
}

fn factorial(n: u32) -> u64 {
    (1..=n as u64).product()
}

/// All ordered `j`-tuples of nonzero multi-indices summing to `k`.
pub fn enumerate_compositions(k: &MultiIndex, j: usize) -> Vec<Vec<MultiIndex>> {
    let mut out = Vec::new();
    if j == 0 || j as u32 > k.order() {
        return out;
    }
    let mut stack = Vec::with_capacity(j);
    compose(&k.0, j, &mut stack, &mut out);
    out
}

fn compose(rem: &[u32], parts: usize, stack: &mut Vec<MultiIndex>, out: &mut Vec<Vec<MultiIndex>>) {
    let left: u32 = rem.iter().sum();
    if parts == 1 {
        if left > 0 {
            stack.push(MultiIndex(rem.to_vec()));
            out.push(stack.clone());
            stack.pop();
        }
        return;
    }
    // choose the first part a ≤ rem, nonzero, leaving enough for the others
    let mut a = vec![0u32; rem.len()];
    loop {
        // advance `a` like an odometer bounded by `rem`
        let mut i = 0;
        while i < a.len() {
            if a[i] < rem[i] {
                a[i] += 1;
                break;
            }
            a[i] = 0;
            i += 1;
        }
        if i == a.len() {
            break;
        }
        let used: u32 = a.iter().sum();
        if left - used >= (parts - 1) as u32 {
            let next: Vec<u32> = rem.iter().zip(&a).map(|(r, x)| r - x).collect();
            stack.push(MultiIndex(a.clone()));
            compose(&next, parts - 1, stack, out);
            stack.pop();
        }
    }
}

/// `T_k = Σ_j ((−1)^{j+1}/j) Σ_{a¹+⋯+a^j=k} 1/(a¹!⋯a^j!)`, exactly.
///
/// It is the coefficient of `y^k` in `log(1 + Σ_{a≠0} y^a/a!) = Σ y_i`, hence
/// zero for every `|k| ≥ 2`.
pub fn combinatorial_t(k: &MultiIndex) -> Result<Ratio<i128>> {
    if k.order() < 2 {
        return Err(domain(format!("T_k is defined for |k| ≥ 2, got |k| = {}", k.order())));
    }
    if k.order() > 12 {
        return Err(Error::Size(format!("|k| = {} is too large for exact enumeration", k.order())));
    }
    let mut total = Ratio::<i128>::zero();
    for j in 1..=k.order() as usize {
        let mut inner = Ratio::<i128>::zero();
        for comp in enumerate_compositions(k, j) {
            let denom: i128 = comp.iter().map(|a| a.factorial() as i128).product();
            inner += Ratio::new(1, denom);
        }
        let sign = if j % 2 == 1 { 1 } else { -1 };
        total += inner * Ratio::new(sign, j as i128);
    }
    Ok(total)
}

fn check_order(k: &MultiIndex) -> Result<()> {
    if k.order() > MAX_ORDER {
        return Err(Error::Size(format!("|k| = {} exceeds the guard {MAX_ORDER}", k.order())));
    }
    Ok(())
}

/// The cumulant `B_k` of `(S_{h_1}, …, S_{h_d})` from the trace formula on a
/// discretized operator.
pub fn cumulant_from_traces(op: &DiscretizedKernelOperator, h: &[TestFunction], k: &MultiIndex) -> Result<f64> {
    check_order(k)?;
    if k.dim() != h.len() {
        return Err(domain("multi-index dimension must match the number of functions"));
    }
    let mut total = 0.0;
    for j in 1..=k.order() as usize {
        let mut inner = 0.0;
        for comp in enumerate_compositions(k, j) {
            let blocks: Vec<Vec<u32>> = comp.iter().map(|a| a.0.clone()).collect();
            let denom: f64 = comp.iter().map(|a| a.factorial() as f64).product();
            inner += op.trace_weighted_product(h, &blocks)? / denom;
        }
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        total += sign * inner / j as f64;
    }
    Ok(total * k.factorial() as f64)
}

/// One entry of a [`CumulantTable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulantEntry {
    pub k: MultiIndex,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "A")]
    pub a: f64,
}

/// Raw cumulants `B_k` and normalized ones `A_k = B_k / V^{|k_f|/2}`, where
/// `k_f` is the part of `k` on the first `f_components` functions (the
/// variance-growing family declared by the caller).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulantTable {
    pub dimension: usize,
    #[serde(rename = "V_N")]
    pub v_n: f64,
    pub f_components: usize,
    pub entries: Vec<CumulantEntry>,
}

impl CumulantTable {
    pub fn new(dimension: usize, v_n: f64, f_components: usize) -> Result<Self> {
        if !(v_n > 0.0) || f_components > dimension {
            return Err(domain("normalization must be positive and the split must fit the dimension"));
        }
        Ok(Self { dimension, v_n, f_components, entries: Vec::new() })
    }

    /// Records `B_k` and its normalized value.
    pub fn insert(&mut self, k: MultiIndex, b: f64) {
        let kf: u32 = k.0[..self.f_components].iter().sum();
        let a = b / self.v_n.powf(kf as f64 / 2.0);
        self.entries.retain(|e| e.k != k);
        self.entries.push(CumulantEntry { k, b, a });
    }

    pub fn get(&self, k: &MultiIndex) -> Option<&CumulantEntry> {
        self.entries.iter().find(|e| &e.k == k)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Kernel eigenvalues at or below this are dropped from the log-determinant;
/// their total effect is below `n · 1e-15 · max |e^{y·h} − 1|`.
const KEPT_EIGENVALUE: f64 = 1e-15;

/// Finite-difference step in the generating-function variable.
pub const LOGDET_STEP: f64 = 1e-2;

/// Cumulants up to `max_order` from finite differences of the cumulant
/// generating function `y ↦ log E e^{y·S} = log det(1 + (e^{y·h} − 1) K_D)`.
///
/// The determinant is evaluated in the symmetric form
/// `det(1 + X)`, `X = K^{1/2} D K^{1/2}`, split as
/// `tr X + Σ (ln(1 + μ) − μ)` over the eigenvalues `μ` of `X`. The trace is
/// a sum of exponentials in `y` and is differentiated exactly; only the
/// remainder, which is `O(y²)` and free of the large linear part, goes
/// through fourth-order central differences with step `δ = 1e-2 / max |h|`,
/// extrapolated once with Richardson's rule against step `2δ`. Without the
/// split, rounding in the linear part swamps fourth differences of nearly
/// Gaussian statistics.
pub fn cumulant_from_logdet(
    op: &DiscretizedKernelOperator,
    h: &[TestFunction],
    max_order: u32,
    v_n: f64,
    f_components: usize,
) -> Result<CumulantTable> {
    if max_order == 0 || max_order > 4 {
        return Err(Error::Size(format!("max_order must be in 1..=4, got {max_order}")));
    }
    let d = h.len();
    let samples: Vec<Vec<f64>> = h.iter().map(|f| op.sample(f)).collect::<Result<_>>()?;
    let n = op.len();
    // K = V Λ Vᵀ; with Y = V Λ^{1/2} restricted to the numerically nonzero
    // spectrum, det(1 + K^{1/2} D K^{1/2}) = det(1 + Yᵀ D Y). The reduced
    // matrix is only as large as the number of relevant modes, which keeps
    // rounding in the eigenvalues small.
    let kept: Vec<usize> = (0..n).filter(|&i| op.eigenvalues[i] > KEPT_EIGENVALUE).collect();
    let m = kept.len();
    let y_mat = Mat::from_fn(n, m, |i, c| op.eigenvectors[(i, kept[c])] * op.eigenvalues[kept[c]].sqrt());
    let scale: Vec<f64> = samples.iter().map(|s| s.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300)).collect();
    let cgf = |y: &[f64]| -> Result<f64> {
        let diag: Vec<f64> = (0..n)
            .map(|i| {
                let e: f64 = (0..d).map(|l| y[l] * samples[l][i]).sum();
                e.exp_m1()
            })
            .collect();
        let scaled = Mat::from_fn(n, m, |i, c| y_mat[(i, c)] * diag[i]);
        let x = y_mat.transpose() * &scaled;
        let x = Mat::from_fn(m, m, |i, j| 0.5 * (x[(i, j)] + x[(j, i)]));
        let mu = x
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Rescaling(format!("eigensolver failed on the perturbation: {e:?}")))?;
        let mut acc = Vec::with_capacity(m);
        for mu in mu {
            if mu <= -1.0 {
                return Err(Error::Rescaling(format!("determinant factor 1 + {mu:e} is not positive")));
            }
            acc.push(log1p_minus_identity(mu));
        }
        Ok(crate::stats::pairwise_sum(&acc))
    };
    // diagonal of Y Yᵀ, for the exactly differentiated trace part
    let k_diag: Vec<f64> = (0..n).map(|j| (0..m).map(|c| y_mat[(j, c)] * y_mat[(j, c)]).sum()).collect();
    let mut table = CumulantTable::new(d, v_n, f_components)?;
    let mut cache = std::collections::HashMap::<Vec<i64>, f64>::new();
    for k in MultiIndex::all_up_to(d, max_order) {
        let mut estimates = [0.0; 2];
        for (r, est) in estimates.iter_mut().enumerate() {
            // steps 2δ then δ, cached on the δ grid
            let mult = 2 - r as i64;
            let steps: Vec<f64> = scale.iter().map(|s| LOGDET_STEP / s * mult as f64).collect();
            *est = tensor_difference(&k, &steps, |offsets| {
                let key: Vec<i64> = offsets.iter().map(|o| o * mult).collect();
                if let Some(v) = cache.get(&key) {
                    return Ok(*v);
                }
                let y: Vec<f64> = offsets.iter().zip(&steps).map(|(&o, s)| o as f64 * s).collect();
                let v = cgf(&y)?;
                cache.insert(key, v);
                Ok(v)
            })?;
        }
        let remainder = (16.0 * estimates[1] - estimates[0]) / 15.0;
        let trace_part: Vec<f64> = (0..n)
            .map(|j| k_diag[j] * (0..d).map(|l| samples[l][j].powi(k.0[l] as i32)).product::<f64>())
            .collect();
        table.insert(k, crate::stats::pairwise_sum(&trace_part) + remainder);
    }
    Ok(table)
}

/// `ln(1 + μ) − μ` without cancellation for small `μ`.
fn log1p_minus_identity(m: f64) -> f64 {
    if m.abs() > 0.25 {
        return m.ln_1p() - m;
    }
    // −μ²/2 + μ³/3 − …
    let mut term = -m * m;
    let mut acc = 0.0;
    let mut k = 2.0;
    loop {
        let piece = term / k;
        acc += piece;
        if piece.abs() <= 1e-17 * acc.abs() {
            return acc;
        }
        term *= -m;
        k += 1.0;
    }
}

/// Central-difference stencils `(offset, weight)` with `O(δ⁴)` error.
fn stencil(order: u32) -> &'static [(i64, f64)] {
    match order {
        0 => &[(0, 1.0)],
        1 => &[(-2, 1.0 / 12.0), (-1, -2.0 / 3.0), (1, 2.0 / 3.0), (2, -1.0 / 12.0)],
        2 => &[(-2, -1.0 / 12.0), (-1, 4.0 / 3.0), (0, -2.5), (1, 4.0 / 3.0), (2, -1.0 / 12.0)],
        3 => &[(-3, 0.125), (-2, -1.0), (-1, 1.625), (1, -1.625), (2, 1.0), (3, -0.125)],
        4 => &[(-3, -1.0 / 6.0), (-2, 2.0), (-1, -6.5), (0, 28.0 / 3.0), (1, -6.5), (2, 2.0), (3, -1.0 / 6.0)],
        _ => unreachable!("orders above 4 are rejected earlier"),
    }
}

fn tensor_difference<F: FnMut(&[i64]) -> Result<f64>>(k: &MultiIndex, steps: &[f64], mut f: F) -> Result<f64> {
    let d = k.dim();
    let stencils: Vec<&[(i64, f64)]> = k.0.iter().map(|&o| stencil(o)).collect();
    let mut idx = vec![0usize; d];
    let mut acc = 0.0;
    loop {
        let offsets: Vec<i64> = (0..d).map(|l| stencils[l][idx[l]].0).collect();
        let weight: f64 = (0..d).map(|l| stencils[l][idx[l]].1).product();
        acc += weight * f(&offsets)?;
        let mut l = 0;
        while l < d {
            idx[l] += 1;
            if idx[l] < stencils[l].len() {
                break;
            }
            idx[l] = 0;
            l += 1;
        }
        if l == d {
            break;
        }
    }
    let denom: f64 = (0..d).map(|l| steps[l].powi(k.0[l] as i32)).product();
    Ok(acc / denom)
}

fn check_blocks(block_sizes: &[usize], v: &[f64]) -> Result<()> {
    if block_sizes.is_empty() || block_sizes.contains(&0) {
        return Err(domain("block sizes must be positive"));
    }
    if block_sizes.iter().sum::<usize>() != v.len() {
        return Err(domain(format!(
            "block sizes sum to {} but there are {} variables",
            block_sizes.iter().sum::<usize>(),
            v.len()
        )));
    }
    let total: f64 = v.iter().sum();
    let scale = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    if total.abs() > 1e-12 * scale {
        return Err(domain(format!("variables must sum to 0, got {total:e}")));
    }
    Ok(())
}

fn boundary_sums(block_sizes: &[usize], v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(block_sizes.len().saturating_sub(1));
    let (mut pos, mut acc) = (0, 0.0);
    for &b in &block_sizes[..block_sizes.len() - 1] {
        for x in &v[pos..pos + b] {
            acc += x;
        }
        pos += b;
        out.push(acc);
    }
    out
}

/// `J = −max(0, S_1, …, S_{j−1}) − max(0, −S_1, …, −S_{j−1})` where `S_m` are
/// the partial sums of `v` at the block boundaries; `J = 0` for one block.
pub fn j_function(block_sizes: &[usize], v: &[f64]) -> Result<f64> {
    check_blocks(block_sizes, v)?;
    let sums = boundary_sums(block_sizes, v);
    let hi = sums.iter().fold(0.0f64, |m, &s| m.max(s));
    let lo = sums.iter().fold(0.0f64, |m, &s| m.max(-s));
    Ok(-hi - lo)
}

/// `∫ Π_m K̂(y − c_m) dy` with `K̂ = 1_{[−1,1]}` and `c_m` the boundary
/// partial sums (and `c_0 = 0`), computed by intersecting the shifted
/// intervals. Returns an accuracy error if it disagrees with `max(2 + J, 0)`.
pub fn soshnikov_overlap(block_sizes: &[usize], v: &[f64]) -> Result<f64> {
    overlap_with_fault(block_sizes, v, 0.0)
}

pub(crate) fn overlap_with_fault(block_sizes: &[usize], v: &[f64], fault: f64) -> Result<f64> {
    check_blocks(block_sizes, v)?;
    if block_sizes.len() < 2 {
        return Err(domain("the overlap identity needs at least two blocks"));
    }
    let mut centres = boundary_sums(block_sizes, v);
    centres.push(0.0);
    let lo = centres.iter().fold(f64::NEG_INFINITY, |m, c| m.max(c - 1.0));
    let hi = centres.iter().fold(f64::INFINITY, |m, c| m.min(c + 1.0));
    let overlap = (hi - lo).max(0.0) + fault;
    let expected = (2.0 + j_function(block_sizes, v)?).max(0.0);
    if (overlap - expected).abs() > 1e-12 {
        return Err(Error::Accuracy(format!(
            "interval overlap {overlap} differs from max(2 + J, 0) = {expected}"
        )));
    }
    Ok(overlap)
}

/// Integer compositions of `n` into `j` positive parts.
fn integer_compositions(n: usize, j: usize) -> Vec<Vec<usize>> {
    let k = MultiIndex(vec![n as u32]);
    enumerate_compositions(&k, j).into_iter().map(|c| c.iter().map(|a| a.0[0] as usize).collect()).collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    fn heap(k: usize, p: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(p.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, p, out);
            let j = if k % 2 == 0 { i } else { 0 };
            p.swap(j, k - 1);
        }
    }
    heap(n, &mut p, &mut out);
    out
}

fn g_one_sided(u: &[f64]) -> f64 {
    let n = u.len();
    let perms = permutations(n);
    let mut total = 0.0;
    for j in 2..=n {
        let comps = integer_compositions(n, j);
        let mut inner = 0.0;
        for perm in &perms {
            let prefix: Vec<f64> = perm
                .iter()
                .scan(0.0, |acc, &i| {
                    *acc += u[i];
                    Some(*acc)
                })
                .collect();
            for comp in &comps {
                let denom: f64 = comp.iter().map(|&l| factorial(l as u32) as f64).product();
                let mut pos = 0;
                let mut best = 0.0f64;
                for &l in &comp[..comp.len() - 1] {
                    pos += l;
                    best = best.max(prefix[pos - 1]);
                }
                inner += best / denom;
            }
        }
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * inner / j as f64;
    }
    total
}

/// The combinatorial function of the main cumulant lemma, in the symmetric
/// form `G(u) + G(−u)` that enters the cumulant integrand (both one-sided
/// maxima of the partial sums contribute through `J`):
///
/// ```text
/// G(u) = Σ_j ((−1)^j/j) Σ_{l¹+⋯+l^j=|k|} Σ_{σ∈S_|k|} max(0, block partial sums of u^σ) / (l¹!⋯l^j!)
/// ```
///
/// The result is `|u₁|` for `|k| = 2` and `0` for `|k| > 2`.
pub fn g_function(u: &[f64]) -> Result<f64> {
    let n = u.len();
    if n < 2 {
        return Err(domain("G needs at least two variables"));
    }
    if n > MAX_ORDER as usize {
        return Err(Error::Size(format!("|k| = {n} exceeds the guard {MAX_ORDER}")));
    }
    let total: f64 = u.iter().sum();
    let scale = u.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    if total.abs() > 1e-12 * scale {
        return Err(domain(format!("variables must sum to 0, got {total:e}")));
    }
    let neg: Vec<f64> = u.iter().map(|x| -x).collect();
    Ok(g_one_sided(u) + g_one_sided(&neg))
}

/// Trace `tr(h^{a¹}K ⋯ h^{a^j}K)` for the rescaled functions `h_l(·/N)`, from
/// the hyperplane formula
/// `(2π)^{−|k|} ∫_{Σv=0} Π_i ĥ^N_{l(i)}(v_i) · max(2 + J, 0) dS`,
/// integrated over the first `|k| − 1` coordinates.
pub fn fourier_trace(h: &[TestFunction], composition: &[MultiIndex], n_scale: f64) -> Result<f64> {
    let order: u32 = composition.iter().map(MultiIndex::order).sum();
    if order > 3 {
        return Err(Error::Size(format!("hyperplane quadrature is limited to |k| ≤ 3, got {order}")));
    }
    if composition.is_empty() || composition.iter().any(|a| a.dim() != h.len()) {
        return Err(domain("composition must be nonempty with entries matching the number of functions"));
    }
    if !(n_scale > 0.0) {
        return Err(domain("scale must be positive"));
    }
    // assign one function to each variable, block by block
    let mut owner = Vec::new();
    let mut sizes = Vec::new();
    for a in composition {
        for (l, &m) in a.0.iter().enumerate() {
            owner.extend(std::iter::repeat_n(l, m as usize));
        }
        sizes.push(a.order() as usize);
    }
    let scaled: Vec<TestFunction> =
        h.iter().map(|f| f.clone().scaled(n_scale)).collect::<Result<_>>()?;
    let reach = scaled.iter().map(|f| {
        let s = f.support();
        s.lo.abs().max(s.hi.abs())
    });
    let reach = reach.fold(0.0f64, f64::max);
    let panel = (PI / (2.0 * reach + 1.0)).min(0.25);
    let weight = |v: &[f64]| -> f64 {
        if sizes.len() == 1 {
            2.0
        } else {
            let sums = boundary_sums(&sizes, v);
            let hi = sums.iter().fold(0.0f64, |m, &s| m.max(s));
            let lo = sums.iter().fold(0.0f64, |m, &s| m.min(s));
            (2.0 - (hi - lo)).max(0.0)
        }
    };
    let product = |v: &[f64]| -> Complex64 {
        v.iter().zip(&owner).fold(Complex64::new(1.0, 0.0), |acc, (&x, &l)| acc * scaled[l].fourier(x))
    };
    let value = match order {
        1 => (product(&[0.0]) * weight(&[0.0])).re,
        2 => line_integral(&[-2.0, 0.0, 2.0], panel, 1e-12, |x| {
            let v = [x, -x];
            (product(&v) * weight(&v)).re
        })?,
        _ => line_integral(&[-4.0, -2.0, 0.0, 2.0, 4.0], panel, 1e-9, |x| {
            let breaks = [-x - 2.0, -x, -x + 2.0, -2.0, 0.0, 2.0];
            line_integral(&breaks, panel, 1e-9, |y| {
                let v = [x, y, -x - y];
                (product(&v) * weight(&v)).re
            })
            .unwrap_or(f64::NAN)
        })?,
    };
    if !value.is_finite() {
        return Err(Error::Accuracy("hyperplane quadrature did not converge".into()));
    }
    Ok(value / (2.0 * PI).powi(order as i32))
}

/// `∫_ℝ f` with panels aligned to `breaks`, extended outward by doubling
/// until a new shell contributes less than `tol` relative to the total.
fn line_integral<F: FnMut(f64) -> f64>(breaks: &[f64], panel: f64, tol: f64, mut f: F) -> Result<f64> {
    let rule = cached(16);
    let lo0 = breaks.iter().fold(f64::INFINITY, |m, &b| m.min(b));
    let hi0 = breaks.iter().fold(f64::NEG_INFINITY, |m, &b| m.max(b));
    let mut chunk = |a: f64, b: f64| -> f64 {
        panel_edges(a, b, breaks, panel).windows(2).map(|e| rule.integrate(e[0], e[1], &mut f)).sum()
    };
    let mut width = 4.0 * panel.max(0.05);
    let (mut lo, mut hi) = (lo0 - width, hi0 + width);
    let mut total = chunk(lo, hi);
    for _ in 0..40 {
        let piece = chunk(hi, hi + width) + chunk(lo - width, lo);
        total += piece;
        lo -= width;
        hi += width;
        width *= 2.0;
        if piece.abs() <= tol * total.abs() + 1e-300 {
            return Ok(total);
        }
    }
    Err(Error::Accuracy(format!("line integral tail did not decay (total {total:e})")))
}

/// Cumulants `B_1 … B_4` of the number of points in an interval of the given
/// length. The count is a sum of independent Bernoulli variables with the
/// interval spectrum as parameters, so its cumulants are sums of Bernoulli
/// cumulants.
pub fn interval_count_cumulants(length: f64) -> Result<[f64; 4]> {
    let spectrum = interval_spectrum(length)?;
    let mut out = [0.0; 4];
    for l in spectrum {
        let q = l * (1.0 - l);
        out[0] += l;
        out[1] += q;
        out[2] += q * (1.0 - 2.0 * l);
        out[3] += q * (1.0 - 6.0 * q);
    }
    Ok(out)
}

/// Same as [`interval_count_cumulants`] but from a discretized operator's
/// spectrum.
pub fn bernoulli_cumulants(eigenvalues: &[f64]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for &l in eigenvalues {
        let q = l * (1.0 - l);
        out[0] += l;
        out[1] += q;
        out[2] += q * (1.0 - 2.0 * l);
        out[3] += q * (1.0 - 6.0 * q);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{build_operator, Window};

    #[test]
    fn composition_examples() {
        let c = enumerate_compositions(&MultiIndex(vec![2]), 2);
        assert_eq!(c, vec![vec![MultiIndex(vec![1]), MultiIndex(vec![1])]]);
        let c = enumerate_compositions(&MultiIndex(vec![1, 1]), 2);
        assert_eq!(c.len(), 2);
        assert!(c.contains(&vec![MultiIndex(vec![1, 0]), MultiIndex(vec![0, 1])]));
        assert!(c.contains(&vec![MultiIndex(vec![0, 1]), MultiIndex(vec![1, 0])]));
        let c = enumerate_compositions(&MultiIndex(vec![3]), 2);
        assert_eq!(c.len(), 2);
        // compositions of n into j parts: C(n-1, j-1)
        assert_eq!(enumerate_compositions(&MultiIndex(vec![6]), 3).len(), 10);
    }

    #[test]
    fn t_vanishes() {
        for k in [vec![2], vec![1, 1], vec![3, 2, 1]] {
            assert!(combinatorial_t(&MultiIndex(k)).unwrap().is_zero());
        }
        assert!(combinatorial_t(&MultiIndex(vec![1])).is_err());
    }

    #[test]
    fn j_and_overlap_examples() {
        assert_eq!(j_function(&[2], &[1.0, -1.0]).unwrap(), 0.0);
        assert_eq!(j_function(&[1, 1], &[0.7, -0.7]).unwrap(), -0.7);
        assert_eq!(soshnikov_overlap(&[1, 1], &[0.0, 0.0]).unwrap(), 2.0);
        assert_eq!(soshnikov_overlap(&[1, 1], &[3.0, -3.0]).unwrap(), 0.0);
        assert_eq!(soshnikov_overlap(&[1, 1], &[1.0, -1.0]).unwrap(), 1.0);
        assert!(overlap_with_fault(&[1, 1], &[1.0, -1.0], 1e-6).is_err());
        assert!(j_function(&[1, 2], &[1.0, -1.0]).is_err());
    }

    #[test]
    fn g_examples() {
        assert!((g_function(&[0.8, -0.8]).unwrap() - 0.8).abs() < 1e-12);
        assert!(g_function(&[0.5, 0.7, -1.2]).unwrap().abs() < 1e-12);
        assert_eq!(g_function(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn traces_order_two_is_variance() {
        let op = build_operator(Window::new(0.0, 10.0).unwrap(), 120).unwrap();
        let h = vec![TestFunction::indicator(0.0, 10.0).unwrap()];
        let b2 = cumulant_from_traces(&op, &h, &MultiIndex(vec![2])).unwrap();
        let var = op.variance(&h[0]).unwrap();
        assert!((b2 - var).abs() < 1e-9 * var);
        let hh = vec![h[0].clone(), h[0].clone()];
        let mixed = cumulant_from_traces(&op, &hh, &MultiIndex(vec![1, 1])).unwrap();
        assert!((mixed - b2).abs() < 1e-9 * var);
    }

    #[test]
    fn indicator_cumulants_are_bernoulli_sums() {
        let op = build_operator(Window::new(0.0, 10.0).unwrap(), 120).unwrap();
        let h = vec![TestFunction::indicator(0.0, 10.0).unwrap()];
        let bern = bernoulli_cumulants(&op.eigenvalues);
        for order in 1..=4u32 {
            let b = cumulant_from_traces(&op, &h, &MultiIndex(vec![order])).unwrap();
            let want = bern[order as usize - 1];
            assert!((b - want).abs() < 1e-9 * (1.0 + want.abs()), "order {order}: {b} vs {want}");
        }
    }

    #[test]
    fn logdet_agrees_with_traces() {
        let op = build_operator(Window::new(0.0, 8.0).unwrap(), 96).unwrap();
        let h = vec![TestFunction::indicator(0.0, 8.0).unwrap()];
        let table = cumulant_from_logdet(&op, &h, 4, 1.0, 1).unwrap();
        for order in 1..=4u32 {
            let k = MultiIndex(vec![order]);
            let b = cumulant_from_traces(&op, &h, &k).unwrap();
            let l = table.get(&k).unwrap().b;
            assert!((b - l).abs() < 1e-4 * b.abs(), "order {order}: {b} vs {l}");
        }
    }

    #[test]
    fn fourier_trace_order_two() {
        let m = crate::spectral::ZCovarianceModel::new(1.0).unwrap();
        let g = vec![m.g_t(0.5)];
        let n = 10.0;
        let gn = g[0].clone().scaled(n).unwrap();
        let op = crate::kernels::OperatorBuilder::new(Window::new(0.0, n).unwrap()).align_to_function(&gn).build().unwrap();
        let two = fourier_trace(&g, &[MultiIndex(vec![1]), MultiIndex(vec![1])], n).unwrap();
        let via_op = op.trace_weighted_product(std::slice::from_ref(&gn), &[vec![1], vec![1]]).unwrap();
        assert!((two - via_op).abs() < 1e-4 * via_op.abs(), "{two} vs {via_op}");
        let one = fourier_trace(&g, &[MultiIndex(vec![2])], n).unwrap();
        let direct = gn.l2_norm_sq() / PI;
        assert!((one - direct).abs() < 1e-6 * direct, "{one} vs {direct}");
    }

    #[test]
    fn prolate_cumulants_match_operator() {
        let op = build_operator(Window::new(0.0, 30.0).unwrap(), 360).unwrap();
        let a = bernoulli_cumulants(&op.eigenvalues);
        let b = interval_count_cumulants(30.0).unwrap();
        for i in 0..4 {
            assert!((a[i] - b[i]).abs() < 1e-8, "order {}: {} vs {}", i + 1, a[i], b[i]);
        }
    }
}
