//! Property tests for the structural invariants of the library.

use std::sync::OnceLock;

use proptest::prelude::*;
use sine_lab::cumulants::{g_function, j_function, soshnikov_overlap};
use sine_lab::kernels::{DiscretizedKernelOperator, OperatorBuilder, Window};
use sine_lab::rng::RngStream;
use sine_lab::sampler::{sample_dpp, sampling_operator, Configuration};
use sine_lab::spectral::{sobolev_half_pairing, variance_sine_fourier, TestFunction, ZCovarianceModel};
use sine_lab::statistics::{eta_z_decomposition, linear_statistic};
use sine_lab::stats::{empirical_cumulants, ks_test, normal_cdf};

/// A continuous piecewise-linear function vanishing at both ends, starting
/// at `start`, with the given (gap, value) pairs.
fn hat_chain(start: f64, pieces: &[(f64, f64)], scale: f64) -> TestFunction {
    let mut breakpoints = vec![start];
    let mut values = vec![0.0];
    for (i, &(gap, v)) in pieces.iter().enumerate() {
        breakpoints.push(breakpoints[i] + gap);
        values.push(if i + 1 == pieces.len() { 0.0 } else { scale * v });
    }
    TestFunction::piecewise_linear(breakpoints, values).unwrap()
}

fn pieces(max_gap: f64) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.2..max_gap, -2.0f64..2.0), 2..6)
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn small_operator() -> &'static DiscretizedKernelOperator {
    static OP: OnceLock<DiscretizedKernelOperator> = OnceLock::new();
    OP.get_or_init(|| OperatorBuilder::new(Window::new(0.0, 12.0).unwrap()).build().unwrap())
}

fn path_operator() -> &'static DiscretizedKernelOperator {
    static OP: OnceLock<DiscretizedKernelOperator> = OnceLock::new();
    OP.get_or_init(|| sampling_operator(Window::new(-20.0, 50.0).unwrap()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn variance_is_at_most_half_the_sobolev_norm(start in -5.0f64..5.0, p in pieces(3.0)) {
        let h = hat_chain(start, &p, 1.0);
        let var = variance_sine_fourier(&h).unwrap();
        let norm = sobolev_half_pairing(&h, &h).unwrap();
        prop_assert!(var >= 0.0);
        prop_assert!(var <= 0.5 * norm * (1.0 + 1e-10) + 1e-14, "var {var} vs half-norm {}", 0.5 * norm);
    }

    #[test]
    fn variance_is_translation_invariant_and_quadratic(start in -5.0f64..5.0, shift in -50.0f64..50.0,
                                                        c in 0.1f64..4.0, p in pieces(3.0)) {
        let base = variance_sine_fourier(&hat_chain(start, &p, 1.0)).unwrap();
        let moved = variance_sine_fourier(&hat_chain(start + shift, &p, 1.0)).unwrap();
        let scaled = variance_sine_fourier(&hat_chain(start, &p, c)).unwrap();
        prop_assert!(rel_gap(base, moved) < 1e-9);
        prop_assert!(rel_gap(c * c * base, scaled) < 1e-9);
    }

    #[test]
    fn sobolev_norm_is_dilation_invariant(start in -2.0f64..2.0, p in pieces(2.0),
                                          factor in prop::sample::select(vec![0.5, 2.0, 10.0])) {
        let h = hat_chain(start, &p, 1.0);
        let dilated = TestFunction::Scaled { base: Box::new(h.clone()), factor };
        let a = sobolev_half_pairing(&h, &h).unwrap();
        let b = sobolev_half_pairing(&dilated, &dilated).unwrap();
        prop_assert!(rel_gap(a, b) < 1e-8, "{a} vs {b}");
    }

    #[test]
    fn bridge_pairing_matches_covariance(t in 0.0f64..=1.0, s in 0.0f64..=1.0, tau in 0.2f64..=1.0) {
        let model = ZCovarianceModel::new(tau).unwrap();
        let (t, s) = (t * tau, s * tau);
        let pairing = sobolev_half_pairing(&model.g_t(t), &model.g_t(s)).unwrap();
        prop_assert!((pairing - model.z_covariance(t, s)).abs() < 1e-6);
        prop_assert!((model.z_covariance(t, s) - model.z_covariance(s, t)).abs() < 1e-15);
    }

    #[test]
    fn overlap_equals_shifted_j(sizes in prop::collection::vec(1usize..4, 2..5),
                                raw in prop::collection::vec(-1.5f64..1.5, 16)) {
        let n: usize = sizes.iter().sum();
        let mut v = raw[..n].to_vec();
        v[n - 1] = -raw[..n - 1].iter().sum::<f64>();
        let j = j_function(&sizes, &v).unwrap();
        let overlap = soshnikov_overlap(&sizes, &v).unwrap();
        prop_assert!((overlap - (2.0 + j).max(0.0)).abs() < 1e-12);
    }

    #[test]
    fn g_function_vanishes_beyond_order_two(raw in prop::collection::vec(-3.0f64..3.0, 2..5)) {
        let mut u = raw.clone();
        u.push(-raw.iter().sum::<f64>());
        prop_assert!(g_function(&u).unwrap().abs() < 1e-9);
    }

    #[test]
    fn g_function_is_absolute_value_at_order_two(x in -10.0f64..10.0) {
        prop_assert!((g_function(&[x, -x]).unwrap() - x.abs()).abs() < 1e-12);
    }

    #[test]
    fn cumulants_shift_and_scale(xs in prop::collection::vec(-5.0f64..5.0, 30..80), shift in -10.0f64..10.0,
                                 c in 0.5f64..3.0) {
        let k = empirical_cumulants(&xs).unwrap();
        let moved: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        let scaled: Vec<f64> = xs.iter().map(|x| c * x).collect();
        let km = empirical_cumulants(&moved).unwrap();
        let ks = empirical_cumulants(&scaled).unwrap();
        let spread = xs.iter().map(|x| x.abs()).fold(1.0, f64::max);
        prop_assert!((km[0] - k[0] - shift).abs() < 1e-9 * (spread + shift.abs()));
        for r in 1..4 {
            let tol = 1e-7 * spread.powi(r as i32 + 1);
            prop_assert!((km[r] - k[r]).abs() < tol, "order {}: {} vs {}", r + 1, km[r], k[r]);
            prop_assert!((ks[r] - c.powi(r as i32 + 1) * k[r]).abs() < tol * c.powi(r as i32 + 1));
        }
    }

    #[test]
    fn ks_p_value_is_a_probability(xs in prop::collection::vec(-4.0f64..4.0, 30..120)) {
        let r = ks_test(&xs, normal_cdf(1.0)).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.p_value));
        prop_assert!((0.0..=1.0).contains(&r.statistic));
    }

    #[test]
    fn linear_statistic_is_additive_over_disjoint_unions(a in prop::collection::vec(0.0f64..20.0, 0..30),
                                                         b in prop::collection::vec(0.0f64..20.0, 0..30),
                                                         start in 0.0f64..10.0, p in pieces(3.0)) {
        let window = Window::new(0.0, 20.0).unwrap();
        let rng = RngStream::new(0, 0);
        let h = hat_chain(start, &p, 1.0);
        let union: Vec<f64> = a.iter().chain(&b).copied().collect();
        let s = |pts: &[f64]| linear_statistic(&Configuration::new(pts.to_vec(), window, rng).unwrap(), &h);
        let (sa, sb, su) = (s(&a), s(&b), s(&union));
        prop_assert!((su - sa - sb).abs() < 1e-12 * (1.0 + su.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn discretized_defects_are_bounded_by_the_variance(start in 1.0f64..4.0, p in pieces(1.5)) {
        let h = hat_chain(start, &p, 1.0);
        let r = small_operator().defect_checks(&h).unwrap();
        prop_assert!(r.defect_trace >= -1e-9);
        prop_assert!(r.defect_trace <= r.variance + 1e-9);
        prop_assert!(r.commutator_hs_sq <= 2.0 * r.variance + 1e-9);
    }

    #[test]
    fn weighted_trace_is_cyclic(start in 1.0f64..4.0, p in pieces(1.5), q in pieces(1.4),
                                blocks in prop::collection::vec(prop::collection::vec(0u32..3, 2), 2..5),
                                rotation in 1usize..4) {
        let h = [hat_chain(start, &p, 1.0), hat_chain(start + 0.5, &q, 1.0)];
        let op = small_operator();
        let mut rotated = blocks.clone();
        rotated.rotate_left(rotation % blocks.len());
        let a = op.trace_weighted_product(&h, &blocks).unwrap();
        let b = op.trace_weighted_product(&h, &rotated).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-12), "{a} vs {b}");
    }

    #[test]
    fn sampled_paths_satisfy_decomposition_invariants(seed in any::<u64>(), tau in 0.3f64..=1.0) {
        let cfg = sample_dpp(path_operator(), RngStream::new(seed, 0)).unwrap();
        let times: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).chain([tau]).collect();
        let path = eta_z_decomposition(&cfg, 30.0, tau, &times).unwrap();
        for (t, z) in path.times.iter().zip(&path.z) {
            if *t == 0.0 || *t == tau {
                prop_assert!(z.abs() < 1e-10, "z({t}) = {z}");
            }
        }
        prop_assert!(path.reconstruction_defect() <= 1e-9);
    }
}

#[test]
fn sampling_is_deterministic_per_stream() {
    let op = path_operator();
    let a = sample_dpp(op, RngStream::new(42, 3)).unwrap();
    let b = sample_dpp(op, RngStream::new(42, 3)).unwrap();
    let c = sample_dpp(op, RngStream::new(42, 4)).unwrap();
    assert_eq!(a.points.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.points.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    assert_ne!(a.points, c.points);
}

#[test]
fn operator_trace_is_window_length_over_pi() {
    let op = small_operator();
    assert!((op.trace() - 12.0 / std::f64::consts::PI).abs() < 1e-6);
}
