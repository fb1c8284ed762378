use biharm_core::counterexample::*;
use biharm_core::geometry::WarpModel;
use biharm_core::quadrature::GaussLegendre;
use biharm_core::solver::*;
use biharm_core::Error;
use proptest::prelude::*;

/// Direct four-level Gauss–Legendre evaluation of the nested integral with
/// `φ = e^{r^{2+ε}}`, innermost level first.
fn brute_force(epsilon: f64, n: usize, r: f64, gl: &GaussLegendre<f64>) -> f64 {
    let lp = |x: f64| (n - 1) as f64 * x.powf(2.0 + epsilon);
    fn level(k: usize, upper: f64, lp: &dyn Fn(f64) -> f64, gl: &GaussLegendre<f64>) -> f64 {
        if k == 0 {
            return 1.0;
        }
        // odd levels carry φ^{1−n}, even ones φ^{n−1}
        let sign = if k.is_multiple_of(2) { -1.0 } else { 1.0 };
        gl.integrate_panels(0.0, upper, 4, |x| (sign * lp(x)).exp() * level(k - 1, x, lp, gl))
    }
    level(4, r, &lp, gl)
}

#[test]
fn origin_values_vanish() {
    let nf = nested_f(1.0, 2, 4.0, 400).unwrap();
    assert_eq!(nf.f[0], 0.0);
    assert_eq!(nf.df[0], 0.0);
    assert_eq!(nf.lap[0], 0.0);
    assert!(nf.f.windows(2).all(|w| w[1] >= w[0]));
    assert!(nf.f.iter().all(|&f| f < nf.f_sup));
}

#[test]
fn matches_brute_force_nested_quadrature() {
    let nf = nested_f(1.0, 2, 9.0, 900).unwrap();
    assert!((nf.r[100] - 1.0).abs() < 1e-14);
    let gl = GaussLegendre::new(10);
    for (i, r) in [(25, 0.25), (100, 1.0), (150, 1.5)] {
        let want = brute_force(1.0, 2, r, &gl);
        assert!((nf.f[i] / want - 1.0).abs() <= 1e-6, "r={r}: {} vs {want}", nf.f[i]);
    }
    // the oracle itself is converged: 10 vs 12 points per panel
    let a = brute_force(1.0, 2, 1.0, &gl);
    let b = brute_force(1.0, 2, 1.0, &GaussLegendre::new(12));
    assert!((a / b - 1.0).abs() < 1e-12);
}

#[test]
fn f_sup_stable_under_domain_extension() {
    for (e, n) in [(1.0, 2), (1.0, 3), (0.5, 2)] {
        let r = default_r_max(e, n).unwrap();
        let a = nested_f(e, n, r, 800).unwrap();
        let b = nested_f(e, n, 1.5 * r, 1200).unwrap();
        assert!(a.f_sup.is_finite() && a.f_sup > 0.0);
        assert!((a.f_sup / b.f_sup - 1.0).abs() <= 1e-6, "eps={e} n={n}: {} vs {}", a.f_sup, b.f_sup);
        // the tail is a real correction, not round-off
        assert!(a.tail > 1e-3 * a.f_sup);
    }
}

#[test]
fn f_sup_stable_under_refinement() {
    let r = default_r_max(1.0, 2).unwrap();
    let a = nested_f(1.0, 2, r, 400).unwrap();
    let b = nested_f(1.0, 2, r, 1600).unwrap();
    assert!((a.f_sup / b.f_sup - 1.0).abs() <= 1e-8);
    assert!(a.refinement_error <= REFINE_TOLERANCE);
}

#[test]
fn bilaplacian_is_one() {
    let r = default_r_max(1.0, 2).unwrap();
    let model = WarpModel::appendix(2, 1.0).unwrap();
    // 4001 nodes across [−r_max, r_max]
    let nf = nested_f(1.0, 2, r, 2000).unwrap();
    let chk = verify_bilaplacian_one(&nf, &model).unwrap();
    assert_eq!(chk.r.len(), 4001);
    assert!(chk.max_abs_residual <= 1e-3, "{}", chk.max_abs_residual);
    // one Laplacian reproduces the two-level inner integral
    assert!(chk.max_lap_mismatch <= 1e-5, "{}", chk.max_lap_mismatch);
}

#[test]
fn bilaplacian_residual_second_order() {
    let r = default_r_max(1.0, 2).unwrap();
    let model = WarpModel::appendix(2, 1.0).unwrap();
    let res: Vec<f64> = [500, 1000, 2000]
        .iter()
        .map(|&m| verify_bilaplacian_one(&nested_f(1.0, 2, r, m).unwrap(), &model).unwrap().max_abs_residual)
        .collect();
    for w in res.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.5..=4.5).contains(&ratio), "{res:?}");
    }
}

#[test]
fn growth_is_exactly_linear() {
    let nf = nested_f(1.0, 2, default_r_max(1.0, 2).unwrap(), 800).unwrap();
    let fs = nf.f_sup;
    assert_eq!(nf.f_inf(), 0.0);
    let series = growth_run(&nf, 10.0 * fs, 101).unwrap();
    assert_eq!(series[0], (0.0, fs));
    let (t, l) = *series.last().unwrap();
    assert!((t - 10.0 * fs).abs() <= 1e-15 * fs);
    assert!((l - 10.0 * fs).abs() <= 1e-15 * fs);
    for w in series.windows(2).filter(|w| w[0].0 >= 2.0 * fs) {
        let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
        assert!((slope - 1.0).abs() <= 1e-12, "{slope}");
    }
    assert!(matches!(growth_run(&nf, fs, 10), Err(Error::Invalid(_))));
}

#[test]
fn solver_sees_unit_decrease() {
    // u(0) = F: away from the clamped ends ∂ₜu = −Δ²F = −1. The ends hold
    // u = 0 while F(3) ≈ 0.2, and on this warp that disturbance reaches
    // |r| ≈ 2 within t ~ 1e-5, so the run is kept short
    let model = WarpModel::appendix(2, 1.0).unwrap();
    let nf = nested_f(1.0, 2, 3.0, 600).unwrap();
    let (nodes, init) = nf.mirrored(&nf.f);
    let grid = RadialGrid::new(-3.0, 3.0, nodes.len(), Boundary::ClampedClamped).unwrap();
    let disc = build_discretization(&model, &grid).unwrap();
    let t = 1e-6;
    let traj = run_with(&disc, &init, &Schedule::new(1e-8, t, vec![t], 0.5).with_startup(4)).unwrap();
    let u = &traj.last().u;
    let mut worst = 0.0f64;
    for i in 0..nodes.len() {
        if nodes[i].abs() <= 1.5 {
            worst = worst.max(((u[i] - init[i]) / t + 1.0).abs());
        }
    }
    assert!(worst <= 1e-2, "{worst}");
}

#[test]
fn input_errors() {
    assert!(matches!(nested_f(0.0, 2, 5.0, 100), Err(Error::Invalid(_))));
    assert!(matches!(nested_f(1.0, 1, 5.0, 100), Err(Error::Invalid(_))));
    assert!(matches!(nested_f(1.0, 2, 5.0, 1), Err(Error::GridTooCoarse(_))));
    assert!(matches!(nested_f(1.0, 2, 1e200, 100), Err(Error::Overflow(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn f_monotone_and_bounded(eps in 0.3f64..2.0, n in 2usize..=4) {
        let r = default_r_max(eps, n).unwrap();
        let nf = nested_f(eps, n, r, 400).unwrap();
        prop_assert!(nf.f.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(nf.df.iter().all(|&d| d >= 0.0));
        prop_assert!(nf.lap.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(nf.f_sup.is_finite() && nf.f_sup > *nf.f.last().unwrap());
    }
}
