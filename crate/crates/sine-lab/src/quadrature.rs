//! Gauss–Legendre rules and panel helpers shared by the fast paths.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// A Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the `n`-point rule by Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "a quadrature rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_and_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_and_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Always false: a rule has at least one node.
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(c + h * x);
        }
        acc * h
    }

    /// Appends the nodes and weights of this rule mapped to `[a, b]`.
    pub fn push_mapped(&self, a: f64, b: f64, nodes: &mut Vec<f64>, weights: &mut Vec<f64>) {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            nodes.push(c + h * x);
            weights.push(w * h);
        }
    }
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, d)
}

/// Cached rule of order `n` for the small orders used on hot paths.
pub fn cached(n: usize) -> &'static GaussLegendre {
    static RULES: [OnceLock<GaussLegendre>; 65] = [const { OnceLock::new() }; 65];
    assert!(n <= 64, "cached rules go up to 64 nodes");
    RULES[n].get_or_init(|| GaussLegendre::new(n))
}

/// Splits `[a, b]` at the sorted `breaks` lying strictly inside it and then
/// subdivides every piece so that no panel is longer than `max_len`.
pub fn panel_edges(a: f64, b: f64, breaks: &[f64], max_len: f64) -> Vec<f64> {
    let mut cuts = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.push(b);
    for x in inner {
        let last = *cuts.last().unwrap();
        if x - last <= 1e-12 * (1.0 + x.abs()) {
            continue;
        }
        let pieces = ((x - last) / max_len).ceil().max(1.0) as usize;
        for p in 1..=pieces {
            cuts.push(if p == pieces { x } else { last + (x - last) * p as f64 / pieces as f64 });
        }
    }
    cuts
}

/// Integrates `f` with `rule` on every panel delimited by `edges`.
pub fn integrate_panels<F: FnMut(f64) -> f64>(rule: &GaussLegendre, edges: &[f64], mut f: F) -> f64 {
    edges.windows(2).map(|e| rule.integrate(e[0], e[1], &mut f)).sum()
}
