//! Kernel estimation from delta evolutions and checks of kernel-level claims:
//! conservation, stretched-exponential decay, the mean value inequality and
//! uniform `L∞` bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::euclid_kernel::{fit_stretched_exponential, kernel_mass};
use crate::geometry::{Topology, WarpModel};
use crate::solver::{
    build_discretization, delta_init, delta_init_extrapolated, run_with, Discretization, RadialGrid, Schedule,
    Trajectory,
};

/// Stand-in for the unnamed ball-enlargement constant of the mean value inequality.
pub const DEFAULT_LAMBDA: f64 = 2.0;

/// How the approximate point mass is built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WidthPolicy {
    /// Bump width as a multiple of the grid spacing.
    GridMultiple(f64),
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub steps: usize,
    pub theta: f64,
    pub startup_steps: usize,
    /// Extrapolate over widths `w, 2w` to cancel the mollification bias.
    pub extrapolate: bool,
    /// Admissible rim magnitude relative to the field maximum.
    pub leak_tolerance: f64,
    /// Admissible mass carried out through clamped ends. On fast volume
    /// growth the rim magnitude alone says little, since weights are huge there.
    pub flux_tolerance: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            theta: 0.5,
            startup_steps: 4,
            extrapolate: true,
            leak_tolerance: 1e-10,
            flux_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelQuality {
    /// Largest rim magnitude over the run, relative to the field maximum.
    pub boundary_leak: f64,
    /// Mass carried out through the boundary over the run.
    pub boundary_flux: f64,
    pub mass_defect: f64,
}

#[derive(Debug, Clone)]
pub struct KernelEstimate {
    pub model: WarpModel<f64>,
    pub grid: RadialGrid<f64>,
    pub t: f64,
    pub center: f64,
    pub nodes: Vec<f64>,
    pub field: Vec<f64>,
    pub weights: Vec<f64>,
    pub quality: KernelQuality,
}

impl KernelEstimate {
    pub fn mass(&self) -> f64 {
        self.weights.iter().zip(&self.field).map(|(w, u)| w * u).sum()
    }

    pub fn linf(&self) -> f64 {
        self.field.iter().fold(0.0, |m, u| m.max(u.abs()))
    }
}

/// Evolves a unit point mass at `center` to time `t`.
pub fn estimate_kernel(
    model: &WarpModel<f64>,
    grid: &RadialGrid<f64>,
    t: f64,
    center: f64,
    width: WidthPolicy,
    config: &ProbeConfig,
) -> Result<KernelEstimate> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("kernel time t = {t} must be > 0")));
    }
    if model.topology == Topology::Pole && center != 0.0 {
        return Err(Error::Domain("radial kernels on pole models are centred at the pole".into()));
    }
    let disc = build_discretization(model, grid)?;
    let w = match width {
        WidthPolicy::GridMultiple(k) => k * grid.h,
        WidthPolicy::Fixed(w) => w,
    };
    let init =
        if config.extrapolate { delta_init_extrapolated(&disc, center, w)? } else { delta_init(&disc, center, w)? };
    let steps = config.steps.max(1);
    let schedule = Schedule::new(t / steps as f64, t, vec![t], config.theta).with_startup(config.startup_steps);
    let traj = run_with(&disc, &init, &schedule)?;
    let field = traj.last().u.clone();
    let mass = disc.mass(&field);
    let quality = KernelQuality {
        boundary_leak: traj.boundary_ratio,
        boundary_flux: traj.boundary_flux,
        mass_defect: (mass - 1.0).abs(),
    };
    if quality.boundary_leak > config.leak_tolerance {
        return Err(Error::LeakExceeded { leak: quality.boundary_leak, limit: config.leak_tolerance });
    }
    if quality.boundary_flux.abs() > config.flux_tolerance {
        return Err(Error::LeakExceeded { leak: quality.boundary_flux.abs(), limit: config.flux_tolerance });
    }
    Ok(KernelEstimate {
        model: model.clone(),
        grid: *grid,
        t,
        center,
        nodes: disc.nodes(),
        field,
        weights: disc.weights.clone(),
        quality,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservationReport {
    pub mass: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Default tolerance for solver estimates.
pub const SOLVER_MASS_TOLERANCE: f64 = 1e-3;
/// Default tolerance for the Euclidean closed form.
pub const CLOSED_FORM_MASS_TOLERANCE: f64 = 1e-8;

pub fn check_conservation(estimate: &KernelEstimate, tolerance: f64) -> ConservationReport {
    let mass = estimate.mass();
    ConservationReport { mass, tolerance, pass: (mass - 1.0).abs() <= tolerance }
}

/// Conservation of the closed-form Euclidean kernel.
pub fn check_conservation_closed_form(n: usize, t: f64) -> Result<ConservationReport> {
    let mass = kernel_mass(n, t)?;
    Ok(ConservationReport {
        mass,
        tolerance: CLOSED_FORM_MASS_TOLERANCE,
        pass: (mass - 1.0).abs() <= CLOSED_FORM_MASS_TOLERANCE,
    })
}

/// Fit of `ln|b| ≈ ln C - c d^p / t^{1/3}` over envelope maxima.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFitReport {
    pub p: f64,
    pub c: f64,
    pub C: f64,
    /// Distance window `[lo, hi]` spanned by the maxima.
    pub window: (f64, f64),
    /// Worst multiplicative misfit `max exp|ln(fit/data)|`.
    pub residual_bound: f64,
    /// `C · V(t^{1/4})`, the prefactor against the `1/√(V_p V_q)` normalization
    /// (ball volumes about the center; equal to `√(V_p V_q)` on homogeneous models).
    pub volume_normalized_prefactor: f64,
    /// `(d, |b|)` maxima used.
    pub points: Vec<(f64, f64)>,
}

/// Relative floor below which envelope maxima are treated as solver noise.
pub const ENVELOPE_FLOOR: f64 = 1e-9;

/// Local maxima of `|u|` above `floor · max|u|` at distance at least `3 t^{1/4}` from the center,
/// refined by a three-point parabola.
pub fn envelope_points(estimate: &KernelEstimate, floor: f64) -> Vec<(f64, f64)> {
    let u: Vec<f64> = estimate.field.iter().map(|x| x.abs()).collect();
    let floor = floor * estimate.linf();
    let d_min = 3.0 * estimate.t.powf(0.25);
    let h = estimate.grid.h;
    let mut pts = Vec::new();
    for i in 1..u.len() - 1 {
        let d = estimate.nodes[i] - estimate.center;
        if d < d_min || u[i] < floor || !(u[i] > u[i - 1] && u[i] >= u[i + 1]) {
            continue;
        }
        let denom = u[i - 1] - 2.0 * u[i] + u[i + 1];
        let (shift, peak) = if denom < 0.0 {
            let s = 0.5 * (u[i - 1] - u[i + 1]) / denom;
            (s, u[i] - 0.25 * (u[i - 1] - u[i + 1]) * s)
        } else {
            (0.0, u[i])
        };
        pts.push((d + shift * h, peak));
    }
    pts
}

pub fn check_kernel_decay(estimate: &KernelEstimate) -> Result<DecayFitReport> {
    check_kernel_decay_with_floor(estimate, ENVELOPE_FLOOR)
}

/// As [`check_kernel_decay`], keeping maxima above `floor · max|b|`.
pub fn check_kernel_decay_with_floor(estimate: &KernelEstimate, floor: f64) -> Result<DecayFitReport> {
    let points = envelope_points(estimate, floor);
    if points.len() < 5 {
        return Err(Error::InsufficientEnvelope { found: points.len(), needed: 5 });
    }
    let (c_raw, p, big_c) = fit_stretched_exponential(&points)?;
    let residual_bound =
        points.iter().map(|&(d, v)| (big_c.ln() - c_raw * d.powf(p) - v.ln()).abs().exp()).fold(1.0, f64::max);
    let vol = estimate.model.volume_report(estimate.t.powf(0.25))?.volume;
    Ok(DecayFitReport {
        p,
        c: c_raw * estimate.t.powf(1.0 / 3.0),
        C: big_c,
        window: (points[0].0, points[points.len() - 1].0),
        residual_bound,
        volume_normalized_prefactor: big_c * vol,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanValueReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// `√(1 - ln ν(r)) + r²/√t`, the base of the nonnegative-Ricci `Γ` form.
    pub gamma_base: f64,
}

/// Ball `{|r| ≤ ρ}` about the origin (pole or line center).
fn in_ball(r: f64, rho: f64) -> bool {
    r.abs() <= rho * (1.0 + 1e-12)
}

/// Both sides of the mean value inequality for the ball of radius `r` about
/// the origin at time `t`:
/// `sup_{D_{r/2}} |u(t)|` against `(∫₀ᵗ∫_{D_{2Λr}} u²)^{1/2} / (r² √V(D_{2Λr}))`.
/// Sublevel sets of the distance-like function are taken to be balls. The
/// time integral is a trapezoid over the stored states.
pub fn check_mean_value(
    disc: &Discretization<f64>,
    trajectory: &Trajectory<f64>,
    ball_radius: f64,
    t: f64,
    lambda: f64,
) -> Result<MeanValueReport> {
    if !(ball_radius > 0.0) || !(t > 0.0) {
        return Err(Error::Domain("ball radius and time must be positive".into()));
    }
    let outer = 2.0 * lambda * ball_radius;
    let g = &disc.grid;
    if outer > g.r_max || g.r_min > 0.0 || -outer < g.r_min && g.r_min < 0.0 {
        return Err(Error::Window(format!("ball D_{outer} exceeds the grid")));
    }
    let states: Vec<_> = trajectory.states.iter().filter(|s| s.t <= t * (1.0 + 1e-12)).collect();
    let last = states.last().ok_or_else(|| Error::Window("no stored states".into()))?;
    if (last.t - t).abs() > 1e-9 * t.max(1.0) || states.len() < 2 {
        return Err(Error::Window(format!("time {t} not stored in the trajectory")));
    }
    let nodes = disc.nodes();
    let lhs = nodes
        .iter()
        .zip(&last.u)
        .filter(|(r, _)| in_ball(**r, ball_radius / 2.0))
        .fold(0.0f64, |m, (_, u)| m.max(u.abs()));
    let local = |u: &[f64]| -> f64 {
        nodes
            .iter()
            .zip(u)
            .zip(&disc.weights)
            .filter(|((r, _), _)| in_ball(**r, outer))
            .map(|((_, u), w)| w * u * u)
            .sum()
    };
    let mut integral = 0.0;
    for pair in states.windows(2) {
        integral += 0.5 * (pair[1].t - pair[0].t) * (local(&pair[0].u) + local(&pair[1].u));
    }
    let vol = disc.model.volume_report(outer)?.volume;
    let rhs = integral.sqrt() / (ball_radius * ball_radius * vol.sqrt());
    let nu = disc.model.volume_report(ball_radius)?.nu.unwrap_or(1.0);
    let gamma_base = (1.0 - nu.ln()).sqrt() + ball_radius * ball_radius / t.sqrt();
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
    Ok(MeanValueReport { lhs, rhs, ratio, gamma_base })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinftyReport {
    /// `sup_t ‖u(t)‖_∞ / ‖u(0)‖_∞` over every step.
    pub sup_ratio: f64,
    /// `(t, ‖u(t)‖_∞ / ‖u(0)‖_∞)` per step.
    pub ratios: Vec<(f64, f64)>,
}

pub fn check_linfty_contraction(
    disc: &Discretization<f64>,
    init: &[f64],
    schedule: &Schedule<f64>,
) -> Result<LinftyReport> {
    let traj = run_with(disc, init, schedule)?;
    let base = traj.diagnostics[0].linf_norm;
    if base == 0.0 {
        return Ok(LinftyReport { sup_ratio: 0.0, ratios: traj.diagnostics.iter().map(|d| (d.t, 0.0)).collect() });
    }
    let ratios: Vec<(f64, f64)> = traj.diagnostics.iter().map(|d| (d.t, d.linf_norm / base)).collect();
    let sup_ratio = ratios.iter().fold(0.0f64, |m, r| m.max(r.1));
    Ok(LinftyReport { sup_ratio, ratios })
}

/// Parameters of one random bump: center, width, signed amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpSpec {
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
}

/// Seeded family of smooth bumps inside `[lo, hi]`, widths in `[w_min, 2 w_min]`.
pub fn random_bumps(seed: u64, count: usize, lo: f64, hi: f64, w_min: f64) -> Vec<BumpSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let width = w_min * rng.gen_range(1.0..2.0);
            let center = rng.gen_range(lo + 4.0 * width..hi - 4.0 * width);
            let amplitude = rng.gen_range(0.5..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            BumpSpec { center, width, amplitude }
        })
        .collect()
}

/// Sum of `amplitude · exp(-1/(1-s²))`, `s = (r - center)/(4 width)`, sampled on `nodes`.
pub fn bump_field(nodes: &[f64], bumps: &[BumpSpec]) -> Vec<f64> {
    nodes
        .iter()
        .map(|&r| {
            bumps
                .iter()
                .map(|b| {
                    let s = (r - b.center) / (4.0 * b.width);
                    if s.abs() < 1.0 {
                        b.amplitude * (-1.0 / (1.0 - s * s)).exp()
                    } else {
                        0.0
                    }
                })
                .sum()
        })
        .collect()
}
