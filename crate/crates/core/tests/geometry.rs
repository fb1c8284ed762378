use biharm_core::geometry::*;
use biharm_core::solver::{build_discretization, Boundary, RadialGrid};
use biharm_core::Error;
use proptest::prelude::*;

#[test]
fn appendix_warp_matches_finite_differences() {
    let model = WarpModel::<f64>::appendix(2, 1.0).unwrap();
    let phi = |r: f64| (r.abs().powi(3)).exp();
    let h = 1e-5;
    for &r in &[1.0, 0.5, -0.7, 1.3] {
        let v = model.warp_eval(r).unwrap();
        let d = (phi(r + h) - phi(r - h)) / (2.0 * h);
        let dd = (phi(r + h) - 2.0 * phi(r) + phi(r - h)) / (h * h);
        assert!((v.phi - phi(r)).abs() <= 1e-15 * v.phi);
        assert!((v.dphi - d).abs() <= 1e-7 * v.dphi.abs(), "r={r}");
        assert!((v.ddphi - dd).abs() <= 1e-5 * v.ddphi.abs(), "r={r}");
    }
    let e = std::f64::consts::E;
    let v = model.warp_eval(1.0).unwrap();
    assert!((v.dphi / e - 3.0).abs() < 1e-14 && (v.ddphi / e - 15.0).abs() < 1e-13);
}

#[test]
fn pole_domain_is_enforced() {
    let model = WarpModel::<f64>::euclidean(3).unwrap();
    assert!(matches!(model.warp_eval(-0.1), Err(Error::Domain(_))));
    assert!(matches!(model.volume_report(0.0), Err(Error::Domain(_))));
    assert!(matches!(model.ricci_lower_bound(f64::NAN), Err(Error::Domain(_))));
}

#[test]
fn euclidean_volume_ratio_is_one() {
    for n in 2..=5 {
        let model = WarpModel::<f64>::euclidean(n).unwrap();
        for &r in &[0.1, 1.0, 7.5] {
            let rep = model.volume_report(r).unwrap();
            assert!((rep.nu.unwrap() - 1.0).abs() <= 1e-10, "n={n} r={r}");
        }
    }
    let line = WarpModel::<f64>::euclidean(1).unwrap();
    let rep = line.volume_report(3.0).unwrap();
    assert!((rep.volume - 6.0).abs() < 1e-12);
    let app = WarpModel::<f64>::appendix(3, 1.0).unwrap();
    assert!(app.volume_report(1.0).unwrap().nu.is_none());
}

#[test]
fn hyperbolic_volume_matches_trapezoid_oracle() {
    let model = WarpModel::<f64>::hyperbolic(3, 1.0).unwrap();
    let rep = model.volume_report(1.0).unwrap();
    let m = 1_000_000;
    let h = 1.0 / m as f64;
    let f = |r: f64| r.sinh().powi(2);
    let mut s = 0.5 * (f(0.0) + f(1.0));
    for i in 1..m {
        s += f(i as f64 * h);
    }
    let oracle = 4.0 * std::f64::consts::PI * s * h;
    assert!((rep.volume - oracle).abs() <= 1e-9 * oracle, "{} vs {oracle}", rep.volume);
    // negative curvature: balls outgrow their Euclidean counterparts
    let nu2 = model.volume_report(2.0).unwrap().nu.unwrap();
    assert!(rep.nu.unwrap() > 1.0 && nu2 > rep.nu.unwrap());
}

#[test]
fn ricci_envelopes() {
    assert_eq!(WarpModel::<f64>::euclidean(3).unwrap().ricci_lower_bound(10.0).unwrap(), 0.0);
    for n in 2..=4 {
        let h = WarpModel::<f64>::hyperbolic(n, 1.0).unwrap();
        assert_eq!(h.ricci_lower_bound(3.0).unwrap(), (n - 1) as f64);
    }
    // dense finite-difference sampling of (n-1)φ''/φ for the appendix warp
    let n = 3;
    let model = WarpModel::<f64>::appendix(n, 1.0).unwrap();
    let phi = |r: f64| (r.abs().powi(3)).exp();
    let mut prev = 0.0;
    for &r in &[0.25, 0.5, 1.0, 1.5] {
        let mut oracle = 0.0f64;
        for k in 0..=4000 {
            let s = r * k as f64 / 4000.0;
            let e = 1e-4;
            let dd = (phi(s + e) - 2.0 * phi(s) + phi(s - e)) / (e * e);
            oracle = oracle.max((n - 1) as f64 * dd / phi(s));
        }
        let k = model.ricci_lower_bound(r).unwrap();
        assert!(k >= oracle * (1.0 - 1e-6), "r={r}: {k} < {oracle}");
        assert!(k >= prev);
        prev = k;
    }
}

fn pole_grid(r_max: f64, nodes: usize) -> RadialGrid<f64> {
    RadialGrid::pole(r_max, nodes).unwrap()
}

#[test]
fn laplacian_of_constant_vanishes() {
    let models = [
        (WarpModel::<f64>::hyperbolic(3, 2.0).unwrap(), pole_grid(4.0, 64)),
        (WarpModel::appendix(3, 0.5).unwrap(), RadialGrid::new(-2.0, 2.0, 64, Boundary::ReflectBoth).unwrap()),
    ];
    for (model, grid) in &models {
        let f = vec![2.5; grid.node_count];
        let lf = radial_laplacian(model, &f, grid).unwrap();
        assert!(lf.iter().all(|&x| x == 0.0));
    }
}

#[test]
fn laplacian_of_r_squared_in_three_dimensions() {
    let model = WarpModel::<f64>::euclidean(3).unwrap();
    let grid = pole_grid(3.0, 64);
    let f: Vec<f64> = grid.nodes().iter().map(|r| r * r).collect();
    let lf = radial_laplacian(&model, &f, &grid).unwrap();
    for (i, v) in lf.iter().enumerate().take(63) {
        assert!((v - 6.0).abs() < 1e-2, "node {i}: {v}");
    }
}

#[test]
fn laplacian_rejects_tiny_fields() {
    let model = WarpModel::<f64>::euclidean(3).unwrap();
    let grid = pole_grid(3.0, 64);
    assert!(matches!(radial_laplacian(&model, &[1.0, 2.0, 3.0], &grid), Err(Error::GridTooCoarse(_))));
    assert!(matches!(RadialGrid::<f64>::pole(1.0, 8), Err(Error::GridTooCoarse(_))));
}

/// Max interior error of `radial_laplacian` against an exact Laplacian.
fn interior_error(
    model: &WarpModel<f64>,
    lo: f64,
    hi: f64,
    nodes: usize,
    boundary: Boundary,
    f: impl Fn(f64) -> f64,
    exact: impl Fn(f64) -> f64,
) -> f64 {
    let grid = RadialGrid::new(lo, hi, nodes, boundary).unwrap();
    let r = grid.nodes();
    let vals: Vec<f64> = r.iter().map(|&x| f(x)).collect();
    let lf = radial_laplacian(model, &vals, &grid).unwrap();
    (1..nodes - 1).map(|i| (lf[i] - exact(r[i])).abs()).fold(0.0, f64::max)
}

#[test]
fn laplacian_is_second_order() {
    // Euclidean ℝ³, f = exp(-r²): Δf = (4r² - 6) exp(-r²); the pole row is included
    let model = WarpModel::<f64>::euclidean(3).unwrap();
    let f = |r: f64| (-r * r).exp();
    let lap = |r: f64| (4.0 * r * r - 6.0) * (-r * r).exp();
    let e1 = interior_error(&model, 0.0, 4.0, 101, Boundary::PoleClamped, f, lap);
    let e2 = interior_error(&model, 0.0, 4.0, 201, Boundary::PoleClamped, f, lap);
    let ratio = e1 / e2;
    assert!((3.4..=4.6).contains(&ratio), "ratio {ratio}");

    // appendix warp, f = r: Δr = (n-1)(2+ε) sgn(r)|r|^{1+ε}
    let (n, eps) = (3usize, 1.0);
    let model = WarpModel::<f64>::appendix(n, eps).unwrap();
    let lap = |r: f64| (n - 1) as f64 * (2.0 + eps) * r.signum() * r.abs().powf(1.0 + eps);
    let e1 = interior_error(&model, -1.5, 1.5, 121, Boundary::ReflectBoth, |r| r, lap);
    let e2 = interior_error(&model, -1.5, 1.5, 241, Boundary::ReflectBoth, |r| r, lap);
    let ratio = e1 / e2;
    assert!(e1 < 0.1 && (3.4..=4.6).contains(&ratio), "e1 {e1} ratio {ratio}");

    // hyperbolic ℍ², f = cosh r: Δf = f'' + coth(r) f' = 2 cosh r
    let model = WarpModel::<f64>::hyperbolic(2, 1.0).unwrap();
    let e1 = interior_error(&model, 0.0, 3.0, 101, Boundary::PoleClamped, f64::cosh, |r| 2.0 * r.cosh());
    let e2 = interior_error(&model, 0.0, 3.0, 201, Boundary::PoleClamped, f64::cosh, |r| 2.0 * r.cosh());
    let ratio = e1 / e2;
    assert!((3.4..=4.6).contains(&ratio), "ratio {ratio}");
}

#[test]
fn volume_ratio_nonincreasing_without_negative_curvature() {
    let model = WarpModel::<f64>::euclidean(4).unwrap();
    let nus: Vec<f64> = (1..20).map(|k| model.volume_report(k as f64 * 0.5).unwrap().nu.unwrap()).collect();
    assert!(nus.windows(2).all(|w| (w[1] - w[0]).abs() < 1e-10));
    // sphere-like custom warp φ = sin r has nonnegative Ricci on [0, π/2]
    let h = 1e-3;
    let samples: Vec<f64> = (0..=1500).map(|i| (i as f64 * h).sin()).collect();
    let warp = SampledWarp::new(h, samples).unwrap();
    let model = WarpModel::custom(3, Topology::Pole, warp, 4.0 * std::f64::consts::PI).unwrap();
    let mut prev = f64::INFINITY;
    for k in 1..=14 {
        let r = k as f64 * 0.1;
        if model.ricci_lower_bound(r).unwrap() > 0.0 {
            break;
        }
        let nu = model.volume_report(r).unwrap().nu.unwrap();
        assert!(nu <= prev + 1e-10, "r={r}");
        prev = nu;
    }
    assert!(prev < 1.0);
}

#[test]
fn single_precision_geometry() {
    let model = WarpModel::<f32>::hyperbolic(3, 1.0).unwrap();
    let rep = model.volume_report(1.0).unwrap();
    let oracle = std::f64::consts::PI * (2f64.sinh() - 2.0);
    assert!((rep.volume as f64 - oracle).abs() < 1e-4 * oracle);
    let grid = RadialGrid::<f32>::pole(3.0, 64).unwrap();
    let f: Vec<f32> = grid.nodes().iter().map(|r| r * r).collect();
    let lf = radial_laplacian(&WarpModel::<f32>::euclidean(3).unwrap(), &f, &grid).unwrap();
    assert!((lf[10] - 6.0).abs() < 1e-2);
}

fn interior_fields(m: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    let field = proptest::collection::vec(-1.0f64..1.0, m - 4).prop_map(|mut v| {
        v.splice(0..0, [0.0, 0.0]);
        v.extend([0.0, 0.0]);
        v
    });
    (field.clone(), field)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn summation_by_parts((f, g) in interior_fields(40), which in 0usize..3) {
        let (model, grid) = match which {
            0 => (WarpModel::<f64>::euclidean(1).unwrap(), RadialGrid::new(-3.0, 3.0, 40, Boundary::ClampedClamped).unwrap()),
            1 => (WarpModel::hyperbolic(3, 1.0).unwrap(), RadialGrid::new(0.5, 5.0, 40, Boundary::ClampedClamped).unwrap()),
            _ => (WarpModel::appendix(2, 1.0).unwrap(), RadialGrid::new(-1.5, 1.5, 40, Boundary::ReflectBoth).unwrap()),
        };
        let disc = build_discretization(&model, &grid).unwrap();
        let lf = radial_laplacian(&model, &f, &grid).unwrap();
        let lg = radial_laplacian(&model, &g, &grid).unwrap();
        let a = disc.inner(&lf, &g);
        let b = disc.inner(&f, &lg);
        let scale: f64 = (0..40).map(|i| disc.weights[i] * (lf[i].abs() * g[i].abs() + f[i].abs() * lg[i].abs())).sum();
        prop_assert!((a - b).abs() <= 1e-13 * scale, "{a} vs {b}");
    }
}

#[test]
fn crate_root_aliases_fix_f64() {
    let m: biharm_core::Model = WarpModel::euclidean(3).unwrap();
    let g = biharm_core::Grid::pole(4.0, 41).unwrap();
    let d: biharm_core::Disc = biharm_core::solver::build_discretization(&m, &g).unwrap();
    let u = vec![0.0; d.len()];
    let run: biharm_core::Run =
        biharm_core::solver::run_with(&d, &u, &biharm_core::Plan::new(0.1, 0.1, vec![], 0.5)).unwrap();
    let last: &biharm_core::State = run.last();
    assert_eq!(last.u, u);
}
