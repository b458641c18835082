//! Suites of exact and numerical identities, each reported with its measured
//! defect.
//!
//! | suite           | what is checked                                                        |
//! |-----------------|------------------------------------------------------------------------|
//! | `combinatorial` | `T_k = 0` exactly for `d ≤ 3`, `2 ≤ |k| ≤ 6`; `G = |u₁|` at `|k| = 2`, `G = 0` above |
//! | `overlap`       | interval intersection equals `max(2 + J, 0)` on random blocks           |
//! | `intlog`        | `∫ Σ a cos(by)/y dy = −Σ a ln|b|` against oscillatory quadrature         |
//! | `trace`         | `tr K_D = |W|/π`, cyclicity of weighted traces, variance three ways      |
//! | `pairing`       | closed-form `H^{1/2}` pairings against the `z` covariance and quadrature |

use std::f64::consts::PI;
use std::str::FromStr;

use num_traits::Zero;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cumulants::{combinatorial_t, g_function, j_function, overlap_with_fault, MultiIndex};
use crate::error::{Error, Result};
use crate::kernels::{OperatorBuilder, Window};
use crate::oracles::{oscillatory_log_quadrature, pairing_quadrature, variance_double_integral};
use crate::rng::RngStream;
use crate::spectral::{log_cosine_integral, sobolev_half_pairing, variance_sine_fourier, TestFunction, ZCovarianceModel};

/// A named group of identities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Combinatorial,
    Overlap,
    Intlog,
    Trace,
    Pairing,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Combinatorial, Suite::Overlap, Suite::Intlog, Suite::Trace, Suite::Pairing];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Combinatorial => "combinatorial",
            Suite::Overlap => "overlap",
            Suite::Intlog => "intlog",
            Suite::Trace => "trace",
            Suite::Pairing => "pairing",
        }
    }
}

/// Which suites to run: a single suite, `all`, or `none`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scope(pub Vec<Suite>);

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Scope(Suite::ALL.to_vec())),
            "none" => Ok(Scope(Vec::new())),
            other => Suite::ALL
                .iter()
                .find(|suite| suite.name() == other)
                .map(|&suite| Scope(vec![suite]))
                .ok_or_else(|| {
                    Error::Config(format!(
                        "unknown scope '{other}'; expected one of all, none, {}",
                        Suite::ALL.map(Suite::name).join(", ")
                    ))
                }),
        }
    }
}

/// One identity instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub suite: Suite,
    pub identity: String,
    /// Worst defect over the instances in this check.
    pub defect: f64,
    pub tolerance: f64,
    pub instances: usize,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl IdentityCheck {
    fn new(suite: Suite, identity: impl Into<String>, defect: f64, tolerance: f64, instances: usize) -> Self {
        Self { suite, identity: identity.into(), defect, tolerance, instances, passed: defect <= tolerance, error: None }
    }

    fn failed(suite: Suite, identity: impl Into<String>, err: &Error, tolerance: f64, instances: usize) -> Self {
        Self {
            suite,
            identity: identity.into(),
            defect: f64::INFINITY,
            tolerance,
            instances,
            passed: false,
            error: Some(err.to_string()),
        }
    }
}

/// Results of a run over a scope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub version: String,
    pub seed: u64,
    pub suites: Vec<Suite>,
    pub checks: Vec<IdentityCheck>,
    pub passed: bool,
}

/// Options for a run.
#[derive(Debug, Clone, Default)]
pub struct IdentityOptions {
    pub seed: u64,
    /// Suite whose checks get a deliberate defect, to exercise failure paths.
    pub inject_fault: Option<Suite>,
}

/// Runs every suite in `scope`.
pub fn run_identities(scope: &Scope, options: &IdentityOptions) -> IdentityReport {
    let mut checks = Vec::new();
    for (i, &suite) in scope.0.iter().enumerate() {
        let rng = RngStream::new(options.seed, 1000 + i as u64);
        let fault = options.inject_fault == Some(suite);
        checks.extend(match suite {
            Suite::Combinatorial => combinatorial_suite(rng, fault),
            Suite::Overlap => overlap_suite(rng, 1000, fault),
            Suite::Intlog => intlog_suite(rng, 50, fault),
            Suite::Trace => trace_suite(rng, fault),
            Suite::Pairing => pairing_suite(fault),
        });
    }
    let passed = checks.iter().all(|c| c.passed);
    IdentityReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: options.seed,
        suites: scope.0.clone(),
        checks,
        passed,
    }
}

fn fault_size(fault: bool) -> f64 {
    if fault {
        1e-3
    } else {
        0.0
    }
}

/// Random zero-sum vector of length `n` with entries of order one.
pub fn random_zero_sum(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut u: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mean = u.iter().sum::<f64>() / n as f64;
    u.iter_mut().for_each(|x| *x -= mean);
    // put the rounding residue on the last entry
    let rest: f64 = u[..n - 1].iter().sum();
    u[n - 1] = -rest;
    u
}

/// `T_k = 0` for all multi-indices with `d ≤ 3`, `2 ≤ |k| ≤ 6`, plus the `G`
/// evaluations on random zero-sum inputs.
pub fn combinatorial_suite(rng: RngStream, fault: bool) -> Vec<IdentityCheck> {
    let suite = Suite::Combinatorial;
    let mut out = Vec::new();
    let mut nonzero = 0usize;
    let mut count = 0usize;
    let mut first_error = None;
    for d in 1..=3 {
        for k in MultiIndex::all_up_to(d, 6).into_iter().filter(|k| k.order() >= 2) {
            count += 1;
            match combinatorial_t(&k) {
                Ok(t) if t.is_zero() => {}
                Ok(_) => nonzero += 1,
                Err(e) => {
                    nonzero += 1;
                    first_error.get_or_insert(e);
                }
            }
        }
    }
    let mut check = IdentityCheck::new(suite, "T_k vanishes exactly (rational)", nonzero as f64 + fault_size(fault), 0.0, count);
    check.error = first_error.map(|e| e.to_string());
    out.push(check);

    let mut gen = rng.generator();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let u = random_zero_sum(&mut gen, 2);
        match g_function(&u) {
            Ok(g) => worst = worst.max((g - u[0].abs()).abs()),
            Err(e) => {
                out.push(IdentityCheck::failed(suite, "G equals |u1| at |k| = 2", &e, 1e-12, 100));
                worst = f64::NAN;
                break;
            }
        }
    }
    if !worst.is_nan() {
        out.push(IdentityCheck::new(suite, "G equals |u1| at |k| = 2", worst + fault_size(fault), 1e-12, 100));
    }
    for n in 3..=5 {
        let name = format!("G vanishes at |k| = {n}");
        let mut worst = 0.0f64;
        let mut error = None;
        for _ in 0..100 {
            let u = random_zero_sum(&mut gen, n);
            match g_function(&u) {
                Ok(g) => worst = worst.max(g.abs()),
                Err(e) => {
                    error = Some(e);
                    break;
                }
            }
        }
        out.push(match error {
            Some(e) => IdentityCheck::failed(suite, name, &e, 1e-9, 100),
            None => IdentityCheck::new(suite, name, worst, 1e-9, 100),
        });
    }
    out
}

/// Interval intersection against `max(2 + J, 0)` on random block structures
/// and zero-sum offsets.
pub fn overlap_suite(rng: RngStream, instances: usize, fault: bool) -> Vec<IdentityCheck> {
    let suite = Suite::Overlap;
    let name = "interval overlap equals max(2 + J, 0)";
    let mut gen = rng.generator();
    let mut worst = 0.0f64;
    for i in 0..instances {
        let blocks_n = gen.random_range(2..=5usize);
        let sizes: Vec<usize> = (0..blocks_n).map(|_| gen.random_range(1..=3usize)).collect();
        let total: usize = sizes.iter().sum();
        let mut v = random_zero_sum(&mut gen, total);
        // keep a share of instances in the regime where the intervals overlap
        if i % 2 == 0 {
            v.iter_mut().for_each(|x| *x *= 0.3);
        }
        let injected = if fault && i == instances / 2 { 1e-6 } else { 0.0 };
        let expected = match j_function(&sizes, &v) {
            Ok(j) => (2.0 + j).max(0.0),
            Err(e) => return vec![IdentityCheck::failed(suite, name, &e, 1e-12, instances)],
        };
        match overlap_with_fault(&sizes, &v, injected) {
            Ok(o) => worst = worst.max((o - expected).abs()),
            Err(e) => return vec![IdentityCheck::failed(suite, name, &e, 1e-12, instances)],
        }
    }
    vec![IdentityCheck::new(suite, name, worst, 1e-12, instances)]
}

/// Closed form `−Σ a ln|b|` against oscillatory quadrature, on the `ln 2`
/// instance and random admissible inputs.
pub fn intlog_suite(rng: RngStream, instances: usize, fault: bool) -> Vec<IdentityCheck> {
    let suite = Suite::Intlog;
    let mut gen = rng.generator();
    let mut inputs: Vec<(Vec<f64>, Vec<f64>)> = vec![(vec![1.0, -1.0], vec![1.0, 2.0])];
    while inputs.len() < instances {
        let n = gen.random_range(2..=4usize);
        let a = random_zero_sum(&mut gen, n);
        let b: Vec<f64> = (0..n).map(|_| gen.random_range(0.5..4.0)).collect();
        inputs.push((a, b));
    }
    let mut worst = 0.0f64;
    for (i, (a, b)) in inputs.iter().enumerate() {
        let closed = log_cosine_integral(a, b).map(|v| v + if i == 0 { fault_size(fault) } else { 0.0 });
        let quad = oscillatory_log_quadrature(a, b, 2e4);
        match (closed, quad) {
            (Ok(c), Ok(q)) => worst = worst.max((c - q.value).abs()),
            (Err(e), _) | (_, Err(e)) => {
                return vec![IdentityCheck::failed(suite, "log-cosine integral closed form", &e, 1e-4, inputs.len())]
            }
        }
    }
    let ln2 = log_cosine_integral(&[1.0, -1.0], &[1.0, 2.0]).map(|v| (v - 2f64.ln()).abs()).unwrap_or(f64::INFINITY);
    vec![
        IdentityCheck::new(suite, "log-cosine integral closed form vs quadrature", worst, 1e-4, inputs.len()),
        IdentityCheck::new(suite, "log-cosine integral ln 2 instance", ln2, 1e-15, 1),
    ]
}

/// A random continuous piecewise-linear function supported in `[lo, hi]`.
pub fn random_piecewise_linear(rng: &mut impl Rng, lo: f64, hi: f64, pieces: usize) -> Result<TestFunction> {
    let mut xs: Vec<f64> = (0..pieces.saturating_sub(1)).map(|_| rng.random_range(lo..hi)).collect();
    xs.push(lo);
    xs.push(hi);
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    let n = xs.len();
    let values: Vec<f64> =
        (0..n).map(|i| if i == 0 || i == n - 1 { 0.0 } else { rng.random_range(-1.0..1.0) }).collect();
    TestFunction::piecewise_linear(xs, values)
}

/// Trace of the discretized kernel, cyclic invariance of weighted traces,
/// and agreement of the operator, Fourier and double-integral variances.
pub fn trace_suite(rng: RngStream, fault: bool) -> Vec<IdentityCheck> {
    let suite = Suite::Trace;
    let mut out = Vec::new();
    let mut gen = rng.generator();
    let run = |gen: &mut rand_chacha::ChaCha8Rng| -> Result<Vec<IdentityCheck>> {
        let window = Window::new(0.0, 20.0)?;
        let op = OperatorBuilder::new(window).build()?;
        let mut checks = Vec::new();
        let tr = (op.trace() - 20.0 / PI).abs() / (20.0 / PI) + fault_size(fault);
        checks.push(IdentityCheck::new(suite, "trace of the kernel equals |W|/pi", tr, 1e-10, 1));
        let h1 = random_piecewise_linear(gen, 1.0, 19.0, 6)?;
        let h2 = random_piecewise_linear(gen, 1.0, 19.0, 6)?;
        let hs = [h1.clone(), h2.clone()];
        let a = op.trace_weighted_product(&hs, &[vec![1, 0], vec![0, 1], vec![2, 0]])?;
        let b = op.trace_weighted_product(&hs, &[vec![0, 1], vec![2, 0], vec![1, 0]])?;
        let cyc = (a - b).abs() / a.abs().max(1e-300);
        checks.push(IdentityCheck::new(suite, "weighted trace is cyclic", cyc, 1e-10, 1));
        let mut worst = 0.0f64;
        for _ in 0..3 {
            let h = random_piecewise_linear(gen, 1.0, 19.0, 7)?;
            let op = OperatorBuilder::new(window).align_to_function(&h).build()?;
            let v_op = op.variance(&h)?;
            let v_f = variance_sine_fourier(&h)?;
            let v_d = variance_double_integral(&h)?;
            let rel = ((v_op - v_f).abs().max((v_d - v_f).abs())) / v_f.abs();
            worst = worst.max(rel);
        }
        checks.push(IdentityCheck::new(suite, "variance: operator trace, Fourier and double integral", worst, 1e-5, 3));
        Ok(checks)
    };
    match run(&mut gen) {
        Ok(c) => out.extend(c),
        Err(e) => out.push(IdentityCheck::failed(suite, "trace identities", &e, 0.0, 0)),
    }
    out
}

/// Closed-form pairings of `g_t, g_s` against the `z` covariance, and one
/// pairing against quadrature of the transforms.
pub fn pairing_suite(fault: bool) -> Vec<IdentityCheck> {
    let suite = Suite::Pairing;
    let run = || -> Result<Vec<IdentityCheck>> {
        let mut worst = 0.0f64;
        let mut count = 0;
        for tau in [0.5, 1.0] {
            let m = ZCovarianceModel::new(tau)?;
            for i in 0..=10 {
                for j in 0..=10 {
                    let (t, s) = (i as f64 / 10.0, j as f64 / 10.0);
                    let p = sobolev_half_pairing(&m.g_t(t), &m.g_t(s))?;
                    worst = worst.max((p - m.z_covariance(t, s)).abs());
                    count += 1;
                }
            }
        }
        let m = ZCovarianceModel::new(1.0)?;
        let (g, h) = (m.g_t(0.3), m.g_t(0.8));
        let q = pairing_quadrature(&g, &h)?;
        let c = sobolev_half_pairing(&g, &h)?;
        Ok(vec![
            IdentityCheck::new(suite, "pairing of g_t, g_s equals the z covariance", worst + fault_size(fault), 1e-6, count),
            IdentityCheck::new(suite, "closed-form pairing vs transform quadrature", (q - c).abs(), 1e-8, 1),
        ])
    };
    run().unwrap_or_else(|e| vec![IdentityCheck::failed(suite, "pairing identities", &e, 0.0, 0)])
}
