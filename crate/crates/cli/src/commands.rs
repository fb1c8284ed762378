use biharm_core::acceptance::{run_criterion, CRITERIA};
use biharm_core::counterexample::{default_r_max, growth_run, nested_f, verify_bilaplacian_one};
use biharm_core::distance_like::{verify_scaffold, DistanceLike, Scaffold, ScaffoldConfig};
use biharm_core::euclid_kernel::{count_sign_changes, fit_decay_exponent, kernel_point, profile_f};
use biharm_core::geometry::{Topology, WarpModel};
use biharm_core::probe::{
    bump_field, check_conservation, check_conservation_closed_form, check_kernel_decay, estimate_kernel, random_bumps,
    ProbeConfig, WidthPolicy, SOLVER_MASS_TOLERANCE,
};
use biharm_core::solver::{build_discretization, delta_init, run_with, Boundary, Discretization, RadialGrid, Schedule};
use biharm_core::weights::{
    calibrate_a, check_l2_exp_decay, eval_dissipation, monitor_weighted_l2, time_lattice, WeightSpec, WeightVariant,
};
use biharm_core::Error;

use crate::config::RunConfig;
use crate::report::{IoFailure, Line, Reporter};

/// Why a run stopped early.
#[derive(Debug)]
pub enum Failure {
    /// Parameters rejected by a module precondition.
    Config(String),
    Io(IoFailure),
    /// A numerical routine failed; reported as a failed check.
    Numeric(Error),
}

impl From<IoFailure> for Failure {
    fn from(e: IoFailure) -> Self {
        Failure::Io(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Invalid(_)
            | Error::Domain(_)
            | Error::Topology(_)
            | Error::WidthTooSmall { .. }
            | Error::HorizonViolation(_)
            | Error::PastHorizon { .. }
            | Error::GridTooCoarse(_) => Failure::Config(e.to_string()),
            other => Failure::Numeric(other),
        }
    }
}

type Outcome = Result<(), Failure>;

pub fn dispatch(cfg: &RunConfig, rep: &mut Reporter) -> Outcome {
    match cfg.subcommand.as_str() {
        "kernel" => kernel(cfg, rep),
        "geom" => geom(cfg, rep),
        "simulate" => simulate(cfg, rep),
        "probe" => probe(cfg, rep),
        "distlike" => distlike(cfg, rep),
        "weights" => weights(cfg, rep),
        "counterexample" => counterexample(cfg, rep),
        "suite" => suite(cfg, rep),
        other => Err(Failure::Config(format!("unknown subcommand `{other}`"))),
    }
}

fn model(cfg: &RunConfig) -> Result<WarpModel<f64>, Failure> {
    let n = cfg.usize("dim");
    Ok(match cfg.str("model") {
        "hyperbolic" => WarpModel::hyperbolic(n, cfg.real("kappa"))?,
        "appendix" => WarpModel::appendix(n, cfg.real("epsilon"))?,
        _ => WarpModel::euclidean(n)?,
    })
}

fn grid(cfg: &RunConfig, model: &WarpModel<f64>) -> Result<RadialGrid<f64>, Failure> {
    let (r_max, nodes) = (cfg.real("r_max"), cfg.usize("nodes"));
    let boundary = match cfg.str("boundary") {
        "pole" => Boundary::PoleClamped,
        "clamped" => Boundary::ClampedClamped,
        "reflect" => Boundary::ReflectBoth,
        _ if model.topology == Topology::Pole => Boundary::PoleClamped,
        _ => Boundary::ClampedClamped,
    };
    let g = if boundary == Boundary::PoleClamped {
        RadialGrid::pole(r_max, nodes)?
    } else {
        RadialGrid::new(-r_max, r_max, nodes, boundary)?
    };
    g.check_model(model)?;
    Ok(g)
}

fn disc(cfg: &RunConfig) -> Result<Discretization<f64>, Failure> {
    let m = model(cfg)?;
    let g = grid(cfg, &m)?;
    Ok(build_discretization(&m, &g)?)
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()
}

fn kernel(cfg: &RunConfig, rep: &mut Reporter) -> Outcome {
    let n = cfg.usize("dim");
    let (eta_max, t) = (cfg.real("eta_max"), cfg.real("t"));
    if cfg.real("fit_lo") >= cfg.real("fit_hi") {
        return Err(Failure::Config("key `fit_lo`: must be below fit_hi".into()));
    }
    let eta = linspace(0.0, eta_max, cfg.usize("samples"));
    let prof = eta.iter().map(|&e| profile_f(n, e)).collect::<Result<Vec<_>, _>>()?;
    let b = eta.iter().map(|&e| kernel_point(n, e * t.powf(0.25), t)).collect::<Result<Vec<_>, _>>()?;
    rep.csv(&["eta", "profile", "kernel"], &[&eta, &prof, &b])?;

    let mass = check_conservation_closed_form(n, t)?;
    rep.emit(
        Line::new("conservation")
            .real("t", t)
            .real("mass", mass.mass)
            .real("tolerance", mass.tolerance)
            .pass(mass.pass),
    )?;
    let sc = count_sign_changes(n, eta_max, cfg.usize("resolution"))?;
    rep.emit(Line::new("sign_changes").int("count", sc.count as i64).reals("roots", &sc.roots).pass(sc.count >= 3))?;
    let fit = fit_decay_exponent(n, cfg.real("fit_lo"), cfg.real("fit_hi"))?;
    rep.emit(
        Line::new("decay_fit")
            .real("p", fit.p)
            .real("c", fit.c)
            .real("target", 4.0 / 3.0)
            .real("tolerance", 0.07)
            .real("worst_factor", fit.worst_factor())
            .pass((fit.p - 4.0 / 3.0).abs() <= 0.07),
    )?;
    Ok(())
}

fn geom(cfg: &RunConfig, rep: &mut Reporter) -> Outcome {
    let m = model(cfg)?;
    let r_max = cfg.real("r_max");
    let samples = cfg.usize("samples");
    // skip r = 0, where pole models are singular in the mean curvature
    let r: Vec<f64> = (1..=samples).map(|i| r_max * i as f64 / samples as f64).collect();
    let mut cols: Vec<Vec<f64>> = (0..6).map(|_| Vec::with_capacity(samples)).collect();
    for &x in &r {
        let w = m.warp_eval(x)?;
        cols[0].push(w.phi);
        cols[1].push(w.dphi);
        cols[2].push(m.mean_curvature(x)?);
        cols[3].push(m.ricci_lower_bound(x)?);
        let v = m.volume_report(x)?;
        cols[4].push(v.volume);
        cols[5].push(v.nu.unwrap_or(f64::NAN));
    }
    rep.csv(
        &["r", "phi", "dphi", "mean_curvature", "ricci_lower_bound", "volume", "nu"],
        &[&r, &cols[0], &cols[1], &cols[2], &cols[3], &cols[4], &cols[5]],
    )?;
    let k = m.ricci_lower_bound(r_max)?;
    let mut line = Line::new("geometry").real("ricci_lower_bound", k).real("volume", *cols[4].last().unwrap());
    if m.topology == Topology::Pole {
        // volume comparison: with Ric >= 0 the ratio may only decrease
        let increase = cols[5].windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
        line = line.real("nu", *cols[5].last().unwrap()).real("max_nu_increase", increase);
        line = line.flag("comparison_applies", k == 0.0).pass(k > 0.0 || increase <= 1e-10);
    }
    rep.emit(line)?;
    Ok(())
}

fn simulate(cfg: &RunConfig, rep: &mut Reporter) -> Outcome {
    let d = disc(cfg)?;
    let nodes = d.nodes();
    let u0 = match cfg.str("init") {
        "bumps" => {
            let (lo, hi) = (d.grid.r_min, d.grid.r_max);
            let w = cfg.real("bump_width");
            if hi - lo <= 16.0 * w {
                return Err(Failure::Config("key `bump_width`: bumps do not fit in the domain".into()));
            }
            bump_field(&nodes, &random_bumps(cfg.int("seed") as u64, cfg.usize("bump_count"), lo, hi, w))
        }
        _ => {
            let w = if cfg.real("width") > 0.0 { cfg.real("width") } else { 4.0 * d.grid.h };
            delta_init(&d, cfg.real("center"), w)?
        }
    };
    let (dt, t_end) = (cfg.real("dt"), cfg.real("t_end"));
    let k = cfg.usize("outputs");
    let outs: Vec<f64> = (1..=k).map(|j| t_end * j as f64 / k as f64).collect();
    let schedule = Schedule::new(dt, t_end, outs, cfg.real("theta")).with_startup(cfg.usize("startup"));
    let tr = run_with(&d, &u0, &schedule)?;

    let (mut ts, mut rs, mut us) = (Vec::new(), Vec::new(), Vec::new());
    for s in &tr.states {
        for (x, u) in nodes.iter().zip(&s.u) {
            ts.push(s.t);
            rs.push(*x);
            us.push(*u);
        }
    }
    rep.csv(&["t", "r", "u"], &[&ts, &rs, &us])?;

    let growth = tr.diagnostics.windows(2).map(|w| w[1].l2_norm / w[0].l2_norm - 1.0).fold(f64::NEG_INFINITY, f64::max);
    rep.emit(
        Line::new("l2_monotone")
            .int("steps", tr.diagnostics.len() as i64 - 1)
            .real("max_step_growth", growth)
            .pass(growth <= 1e-12),
    )?;
    let (m0, m1) = (tr.diagnostics[0].mass, tr.diagnostics.last().unwrap().mass);
    let imbalance = (m0 - m1 - tr.boundary_flux).abs();
    let scale = tr.diagnostics.iter().map(|x| x.l2_norm).fold(1.0, f64::max);
    rep.emit(
        Line::new("mass_balance")
            .real("mass_initial", m0)
            .real("mass_final", m1)
            .real("boundary_flux", tr.boundary_flux)
            .real("imbalance", imbalance)
            .pass(imbalance <= 1e-9 * scale),
    )?;
    let linf0 = tr.diagnostics[0].linf_norm;
    let sup = tr.diagnostics.iter().map(|x| x.linf_norm).fold(0.0, f64::max);
    rep.emit(
        Line::new("linf")
            .real("initial", linf0)
            .real("final", tr.diagnostics.last().unwrap().linf_norm)
            .real("sup_ratio", if linf0 > 0.0 { sup / linf0 } else { 0.0 })
            .real("boundary_ratio", tr.boundary_ratio),
    )?;
    Ok(())
}

fn probe(cfg: &RunConfig, rep: &mut Reporter) -> Outcome {
    let m = model(cfg)?;
    let g = grid(cfg, &m)?;
    let pc = ProbeConfig {
        steps: cfg.usize("steps"),
        leak_tolerance: cfg.real("leak_tolerance"),
        flux_tolerance: cfg.real("flux_tolerance"),
        ..Default::default()
    };
    let t = cfg.real("t");
    let e = estimate_kernel(&m, &g, t, cfg.real("center"), WidthPolicy::GridMultiple(cfg.real("width_multiple")), &pc)?;
    rep.csv(&["r", "kernel"], &[&e.nodes, &e.field])?;
    let c = check_conservation(&e, SOLVER_MASS_TOLERANCE);
    rep.emit(
        Line::new("conservation")
            .real("t", t)
            .real("mass", c.mass)
            .real("tolerance", c.tolerance)
            .real("boundary_leak", e.quality.boundary_leak)
            .real("boundary_flux", e.quality.boundary_flux)
            .pass(c.pass),
    )?;
    match check_kernel_decay(&e) {
        Ok(fit) => rep.emit(
            Line::new("kernel_decay")
                .real("p", fit.p)
                .real("c", fit.c)
                .real("window_lo", fit.window.0)
                .real("window_hi", fit.window.1)
                .real("residual_bound", fit.residual_bound)
                .real("volume_normalized_prefactor", fit.volume_normalized_prefactor)
                .pass(fit.p > 1.0 && fit.p <= 4.0 / 3.0 + 0.07),
        )?,
        Err(err) => rep.emit(Line::new("kernel_decay").text("error", &err.to_string()).pass(false))?,
    }
    Ok(())
}

fn distlike(cfg: &RunConfig, rep: &mut Reporter) -> Outcome {
    let m = model(cfg)?;
    let r_outer = cfg.real("r_outer");
    let sc =
        ScaffoldConfig::new(m, r_outer)?.with_cutoff(cfg.real("k"), cfg.real("rho")).with_spacing(cfg.real("spacing"));
    sc.validate()?;
    let lo = cfg.real("annulus_lo");
    if lo >= r_outer {
        return Err(Failure::Config("key `annulus_lo`: must be below r_outer".into()));
    }
    let s = Scaffold::build(sc)?;
    let (d, c) = (&s.distance, &s.cutoff);
    rep.csv(
        &["r", "f", "df", "lapf", "phi", "dphi", "lapphi"],
        &[&d.r, &d.f, &d.df, &d.lapf, &c.phi, &c.dphi, &c.lapphi],
    )?;
    let v = verify_scaffold(&s, (lo, r_outer))?;
    rep.emit(
        Line::new("scaffold")
            .real("annulus_lo", lo)
            .real("annulus_hi", r_outer)
            .real("lambda_low", v.measured.lambda_low)
            .real("lambda_up", v.measured.lambda_up)
            .real("grad_bound", v.measured.grad_bound)
            .real("lap_bound", v.measured.lap_bound)
            .real("lambda_hat", v.lambda_hat)
            .real("lower_margin", v.lower_margin)
            .pass(v.pass),
    )?;
    rep.emit(
        Line::new("cutoff")
            .real("grad_constant", c.grad_constant)
            .real("lap_constant", c.lap_constant)
            .pass(c.grad_constant.is_finite() && c.lap_constant.is_finite()),
    )?;
    Ok(())
}

fn weight_spec(cfg: &RunConfig) -> Result<WeightSpec, Failure> {
    let r = cfg.real("r");
    let variant = match cfg.str("variant") {
        "l2decay" => {
            let r1 = if cfg.real("r1") > 0.0 { cfg.real("r1") } else { 0.5 * r };
            WeightVariant::L2Decay { r, r1 }
        }
        "uniqueness" => WeightVariant::Uniqueness { r },
        _ => WeightVariant::Kernel { r, s: cfg.real("s") },
    };
    Ok(WeightSpec::new(variant, cfg.real("horizon"), 1.0)?)
}

fn weights(cfg: &RunConfig, rep: &mut Reporter) -> Outcome {
    let d = disc(cfg)?;
    let f = DistanceLike::exact(&d.model, &d.nodes())?;
    let (horizon, c) = (cfg.real("horizon"), cfg.real("c"));
    match cfg.str("mode") {
        "l2decay" => {
            let init = delta_init(&d, 0.0, f64::max(0.1, 4.0 * d.grid.h))?;
            let r = check_l2_exp_decay(&d, &f, &init, cfg.real("r"), horizon, cfg.real("dt"), c)?;
            rep.emit(Line::new("l2_exp_decay").real("lhs", r.lhs).real("rhs", r.rhs).real("a", r.a).pass(r.pass))?;
        }
        mode => {
            let spec = weight_spec(cfg)?;
            let times = time_lattice(horizon, 0.0);
            let cal = calibrate_a(&spec, &d.model, &f, &times, c)?;
            let spec = spec.with_a(cal.a);
            if mode == "calibrate" {
                let (a, top): (Vec<f64>, Vec<f64>) = cal.trace.iter().copied().unzip();
                rep.csv(&["a", "max_dissipation"], &[&a, &top])?;
                let mut worst = f64::NEG_INFINITY;
                for &t in &times {
                    worst = worst.max(eval_dissipation(&spec, &f, t, c)?.max);
                }
                rep.emit(
                    Line::new("calibration")
                        .real("a", cal.a)
                        .real("max_dissipation", worst)
                        .real("horizon_bound", cal.horizon_bound)
                        .int("trials", cal.trace.len() as i64)
                        .pass(worst <= 0.0),
                )?;
            } else {
                let end = 0.9 * horizon;
                let steps = (end / cfg.real("dt")).round().max(1.0) as usize;
                let dt = end / steps as f64;
                let outs: Vec<f64> = (1..=steps.min(100)).map(|k| end * k as f64 / steps.min(100) as f64).collect();
                let init = delta_init(&d, cfg.real("center"), 0.25)?;
                let traj = run_with(&d, &init, &Schedule::new(dt, end, outs, 0.5).with_startup(4))?;
                let (phi, _, _) =
                    biharm_core::distance_like::cutoff_profile(&f, cfg.real("level"), cfg.real("rho"), 4.0);
                let s = monitor_weighted_l2(&d, &traj, &spec, &f, &phi)?;
                rep.csv(&["t", "weighted_l2"], &[&s.times, &s.values])?;
                rep.emit(
                    Line::new("weighted_monitor")
                        .real("a", cal.a)
                        .real("max_increase", s.max_increase)
                        .real("max_relative_increase", s.max_relative_increase)
                        .pass(s.max_relative_increase <= 1e-8),
                )?;
            }
        }
    }
    Ok(())
}

fn counterexample(cfg: &RunConfig, rep: &mut Reporter) -> Outcome {
    let (eps, n) = (cfg.real("epsilon"), cfg.usize("dim"));
    let r_max = if cfg.real("r_max") > 0.0 { cfg.real("r_max") } else { default_r_max(eps, n)? };
    let nf = nested_f(eps, n, r_max, cfg.usize("intervals"))?;
    rep.csv(&["r", "F", "dF", "lapF"], &[&nf.r, &nf.f, &nf.df, &nf.lap])?;
    let model = nf.model()?;
    let bl = verify_bilaplacian_one(&nf, &model)?;
    rep.emit(
        Line::new("bilaplacian")
            .real("max_abs_residual", bl.max_abs_residual)
            .real("max_lap_mismatch", bl.max_lap_mismatch)
            .pass(bl.max_abs_residual <= 1e-3),
    )?;
    rep.emit(
        Line::new("bounded")
            .real("f_sup", nf.f_sup)
            .real("f_inf", nf.f_inf())
            .real("tail", nf.tail)
            .real("refinement_error", nf.refinement_error)
            .pass(nf.f_sup.is_finite()),
    )?;
    let series = growth_run(&nf, cfg.real("t_factor") * nf.f_sup, cfg.usize("samples"))?;
    let slope_dev = series
        .windows(2)
        .filter(|w| w[0].0 >= 2.0 * nf.f_sup)
        .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0) - 1.0).abs())
        .fold(0.0, f64::max);
    let last = series.last().unwrap();
    rep.emit(
        Line::new("linear_growth")
            .real("t_max", last.0)
            .real("linf_initial", series[0].1)
            .real("linf_final", last.1)
            .real("max_slope_deviation", slope_dev)
            .pass(slope_dev <= 1e-12),
    )?;
    Ok(())
}

fn suite(cfg: &RunConfig, rep: &mut Reporter) -> Outcome {
    let spec = cfg.str("criteria");
    let ids: Vec<u8> = if spec == "all" {
        CRITERIA.iter().map(|c| c.0).collect()
    } else {
        let mut ids = Vec::new();
        for part in spec.split(',') {
            match part.trim().parse::<u8>() {
                Ok(id) if CRITERIA.iter().any(|c| c.0 == id) => ids.push(id),
                _ => return Err(Failure::Config(format!("key `criteria`: `{part}` is not a criterion id"))),
            }
        }
        ids
    };
    for id in ids {
        let out = run_criterion(id);
        // wall time varies between runs, so it goes to stderr only
        eprintln!("{}", out.line());
        rep.emit(
            Line::new("criterion")
                .int("id", out.id as i64)
                .text("name", out.name)
                .text("detail", &out.detail)
                .flag("known_deviation", out.known_deviation())
                .pass(out.pass),
        )?;
    }
    Ok(())
}
