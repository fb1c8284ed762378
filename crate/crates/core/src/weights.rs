//! Piecewise weights `ξ(f, t)`, `G(f, t)`, the dissipation quantity
//! `𝒩 = ∂ₜξ + CG² + C|∇G|²/G + C|Δξ|²`, calibration of `A` so that
//! `𝒩 ≤ 0`, and weighted `L²` monitoring along solver runs.
//!
//! All weights depend on `x` through a distance-like `f` and on `t` through
//! `τ = T − t`; with `D = Aτ^{1/3}` every `ξ` is `−(profile in f)/D`, so
//! `∂ₜξ = ξ/(3τ)`.

use rayon::prelude::*;

use crate::distance_like::DistanceLike;
use crate::error::{Error, Result};
use crate::geometry::WarpModel;
use crate::solver::{run_with, Discretization, Schedule, Trajectory};

/// Stand-in for the universal constant in `𝒩`.
pub const DEFAULT_C_UNIVERSAL: f64 = 80.0;
/// Samples of the geometric `T − t` lattice used by calibration.
pub const TIME_SAMPLES: usize = 32;
/// Default growth exponent `a` of the uniqueness class.
pub const DEFAULT_GROWTH_EXPONENT: f64 = 1.0;
/// Upper limit of the `A` search.
pub const MAX_A: f64 = 1_152_921_504_606_846_976.0; // 2^60

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightVariant {
    /// Exponential-decay weight: flat on `D_{R₁}` and outside `D_{3R/2}`,
    /// blended by `ψ` in between.
    L2Decay { r: f64, r1: f64 },
    /// Kernel weight: `0` on `D_R`, quartic on `D_{R+S} ∖ D_R`,
    /// `−(f−R)^{4/3}/D` outside.
    Kernel { r: f64, s: f64 },
    /// Uniqueness weight: the kernel weight with `S = R`.
    Uniqueness { r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSpec {
    pub variant: WeightVariant,
    /// Horizon `T`.
    pub horizon: f64,
    /// Calibration constant `A > 0`.
    pub a: f64,
    /// Gradient bound `Λ ≥ |∇f|` entering `G = Λ²(∂_f ξ)²`.
    pub lambda: f64,
}

/// Coefficients of the `ψ` blend `1 + c₁(f−R₁)(3R/2−f)² − c₂(f−R₁)²(3R/2−f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiBlend {
    pub r1: f64,
    pub r: f64,
    pub c1: f64,
    pub c2: f64,
}

impl PsiBlend {
    pub fn new(r: f64, r1: f64) -> Self {
        let w = 1.5 * r - r1;
        Self { r1, r, c1: 4.0 / 3.0 / ((2.0 * r - r1) * w * w), c2: 4.0 / 3.0 / (0.5 * r * w * w) }
    }

    /// `[ψ, ψ', ψ'']` at `f`.
    pub fn eval(&self, f: f64) -> [f64; 3] {
        let u = f - self.r1;
        let v = 1.5 * self.r - f;
        [
            1.0 + self.c1 * u * v * v - self.c2 * u * u * v,
            self.c1 * (v * v - 2.0 * u * v) - self.c2 * (2.0 * u * v - u * u),
            self.c1 * (2.0 * u - 4.0 * v) - self.c2 * (2.0 * v - 4.0 * u),
        ]
    }
}

/// One piece of a weight evaluated at a scalar `f`: `ξ, ∂_f ξ, ∂²_f ξ, G, ∂_f G`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightPoint {
    pub xi: f64,
    pub xi_f: f64,
    pub xi_ff: f64,
    pub g: f64,
    pub g_f: f64,
}

impl WeightSpec {
    pub fn new(variant: WeightVariant, horizon: f64, a: f64) -> Result<Self> {
        let spec = Self { variant, horizon, a, lambda: 1.0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_a(mut self, a: f64) -> Self {
        self.a = a;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(Error::Invalid(format!("A = {} must be > 0", self.a)));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Invalid(format!("T = {} must be > 0", self.horizon)));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::Invalid(format!("Lambda = {} must be > 0", self.lambda)));
        }
        match self.variant {
            WeightVariant::L2Decay { r, r1 } if !(r > 1.0 && r1 > 0.0 && r1 < r) => {
                Err(Error::Invalid(format!("l2decay needs R > 1 and 0 < R1 < R, got R = {r}, R1 = {r1}")))
            }
            WeightVariant::Kernel { r, s } if !(r >= 0.0 && s > 0.0) => {
                Err(Error::Invalid(format!("kernel weight needs R >= 0 and S > 0, got R = {r}, S = {s}")))
            }
            WeightVariant::Uniqueness { r } if !(r > 0.0) => Err(Error::Invalid(format!("R = {r} must be > 0"))),
            _ => Ok(()),
        }
    }

    /// Breakpoints in `f` between regions.
    pub fn seams(&self) -> [f64; 2] {
        match self.variant {
            WeightVariant::L2Decay { r, r1 } => [r1, 1.5 * r],
            WeightVariant::Kernel { r, s } => [r, r + s],
            WeightVariant::Uniqueness { r } => [r, 2.0 * r],
        }
    }

    /// Region index of `f`: 0 inner, 1 transition, 2 outer.
    pub fn region(&self, f: f64) -> usize {
        let [a, b] = self.seams();
        if f < a {
            0
        } else if f < b {
            1
        } else {
            2
        }
    }

    fn tau(&self, t: f64) -> Result<f64> {
        if !(t < self.horizon) || !t.is_finite() {
            return Err(Error::PastHorizon { t, horizon: self.horizon });
        }
        Ok(self.horizon - t)
    }

    /// Evaluates the formula of `region` at `f`, extended past its own range
    /// so that seams can be compared from both sides.
    pub fn piece(&self, region: usize, f: f64, t: f64) -> Result<WeightPoint> {
        let tau = self.tau(t)?;
        let d = self.a * tau.cbrt();
        let l2 = self.lambda * self.lambda;
        let zero = WeightPoint { xi: 0.0, xi_f: 0.0, xi_ff: 0.0, g: 0.0, g_f: 0.0 };
        Ok(match self.variant {
            WeightVariant::L2Decay { r, r1 } => match region {
                0 => {
                    let y = 2.0 * r - r1;
                    WeightPoint { xi: -y.powf(4.0 / 3.0) / d, g: l2 * 16.0 / 9.0 * y.powf(2.0 / 3.0) / (d * d), ..zero }
                }
                1 => {
                    let [p, dp, ddp] = PsiBlend::new(r, r1).eval(f);
                    let y = 2.0 * r - f;
                    let q = y.powf(4.0 / 3.0) * p;
                    let dq = -4.0 / 3.0 * y.cbrt() * p + y.powf(4.0 / 3.0) * dp;
                    let ddq = 4.0 / 9.0 * y.powf(-2.0 / 3.0) * p - 8.0 / 3.0 * y.cbrt() * dp + y.powf(4.0 / 3.0) * ddp;
                    let w = 4.0 / 3.0 * p - y * dp;
                    let dw = 7.0 / 3.0 * dp - y * ddp;
                    WeightPoint {
                        xi: -q / d,
                        xi_f: -dq / d,
                        xi_ff: -ddq / d,
                        g: l2 * y.powf(2.0 / 3.0) * w * w / (d * d),
                        g_f: l2 * (-2.0 / 3.0 * y.powf(-1.0 / 3.0) * w * w + 2.0 * y.powf(2.0 / 3.0) * w * dw)
                            / (d * d),
                    }
                }
                _ => {
                    let y = 0.5 * r;
                    WeightPoint { xi: -y.powf(4.0 / 3.0) / d, g: l2 * 16.0 / 9.0 * y.powf(2.0 / 3.0) / (d * d), ..zero }
                }
            },
            WeightVariant::Kernel { r, s } => quartic_piece(region, f - r, s, d, l2),
            WeightVariant::Uniqueness { r } => quartic_piece(region, f - r, r, d, l2),
        })
    }

    /// The weight at `f` from the region that contains it.
    pub fn at(&self, f: f64, t: f64) -> Result<WeightPoint> {
        self.piece(self.region(f), f, t)
    }

    /// Exponent of the L² decay bound, `R^{4/3}/(2AT^{1/3})`.
    pub fn decay_exponent(&self) -> f64 {
        let r = match self.variant {
            WeightVariant::L2Decay { r, .. } | WeightVariant::Kernel { r, .. } | WeightVariant::Uniqueness { r } => r,
        };
        r.powf(4.0 / 3.0) / (2.0 * self.a * self.horizon.cbrt())
    }

    /// Largest admissible horizon for this variant on `model`.
    ///
    /// * l2decay: `R/(1+K(3R/2))^{3/2}` (strict);
    /// * kernel: `min{S⁴, inf_{r ≥ R+S} (r−R)/(1+K(r))^{3/2}}`, the infimum
    ///   taken up to `r_max`;
    /// * uniqueness: `R/(1+K(4ΛR))^{3/2}`.
    pub fn horizon_bound(&self, model: &WarpModel<f64>, r_max: f64) -> Result<f64> {
        let k = |r: f64| model.ricci_lower_bound(r);
        Ok(match self.variant {
            WeightVariant::L2Decay { r, .. } => r / (1.0 + k(1.5 * r)?).powf(1.5),
            WeightVariant::Kernel { r, s } => {
                let mut best = s.powi(4);
                let top = r_max.max(r + s);
                let samples = 256;
                for j in 0..=samples {
                    let x = r + s + (top - r - s) * j as f64 / samples as f64;
                    best = best.min((x - r) / (1.0 + k(x)?).powf(1.5));
                }
                best
            }
            WeightVariant::Uniqueness { r } => r / (1.0 + k(4.0 * self.lambda * r)?).powf(1.5),
        })
    }
}

/// The uniqueness argument needs the cut-off exponent to beat the growth
/// exponent: `k/2 − 2 > a`.
pub fn uniqueness_cutoff_admissible(k: f64, a: f64) -> bool {
    k / 2.0 - 2.0 > a
}

/// Pieces shared by the kernel and uniqueness weights, in `x = f − R`.
fn quartic_piece(region: usize, x: f64, s: f64, d: f64, l2: f64) -> WeightPoint {
    match region {
        0 => WeightPoint { xi: 0.0, xi_f: 0.0, xi_ff: 0.0, g: 0.0, g_f: 0.0 },
        1 => {
            let sc = s.powf(-8.0 / 3.0);
            let b = 1.0 - 8.0 / 3.0 * (x - s) / s;
            let db = -8.0 / (3.0 * s);
            let p = 4.0 - 32.0 / 3.0 * (x - s) / s - 8.0 / 3.0 * x / s;
            let dp = -40.0 / (3.0 * s);
            let x3 = x * x * x;
            WeightPoint {
                xi: -sc * x3 * x * b / d,
                xi_f: -sc * x3 * p / d,
                xi_ff: -sc * (12.0 * x * x * b + 8.0 * x3 * db) / d,
                g: l2 * sc * sc * x3 * x3 * p * p / (d * d),
                g_f: l2 * sc * sc * (6.0 * x3 * x * x * p * p + 2.0 * x3 * x3 * p * dp) / (d * d),
            }
        }
        _ => WeightPoint {
            xi: -x.powf(4.0 / 3.0) / d,
            xi_f: -4.0 / 3.0 * x.cbrt() / d,
            xi_ff: -4.0 / 9.0 * x.powf(-2.0 / 3.0) / d,
            g: l2 * 16.0 / 9.0 * x.powf(2.0 / 3.0) / (d * d),
            g_f: l2 * 32.0 / 27.0 * x.powf(-1.0 / 3.0) / (d * d),
        },
    }
}

/// Weight samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    pub t: f64,
    pub xi: Vec<f64>,
    /// Radial derivative of `ξ`.
    pub dxi: Vec<f64>,
    pub lapxi: Vec<f64>,
    pub dtxi: Vec<f64>,
    pub g: Vec<f64>,
    /// Radial derivative of `G`.
    pub dg: Vec<f64>,
}

/// `ξ(f(x), t)` and `G(f(x), t)` on the samples of `f`, with `∇ξ = ∂_f ξ f'`,
/// `Δξ = ∂²_f ξ |f'|² + ∂_f ξ Δf` and `∇G = ∂_f G f'`.
pub fn eval_weight(spec: &WeightSpec, f: &DistanceLike, t: f64) -> Result<WeightField> {
    spec.validate()?;
    let tau = spec.tau(t)?;
    let n = f.f.len();
    let mut out = WeightField {
        t,
        xi: Vec::with_capacity(n),
        dxi: Vec::with_capacity(n),
        lapxi: Vec::with_capacity(n),
        dtxi: Vec::with_capacity(n),
        g: Vec::with_capacity(n),
        dg: Vec::with_capacity(n),
    };
    for i in 0..n {
        let w = spec.at(f.f[i], t)?;
        let fp = f.df[i];
        out.xi.push(w.xi);
        out.dxi.push(w.xi_f * fp);
        out.lapxi.push(w.xi_ff * fp * fp + w.xi_f * f.lapf[i]);
        out.dtxi.push(w.xi / (3.0 * tau));
        out.g.push(w.g);
        out.dg.push(w.g_f * fp);
    }
    Ok(out)
}

/// Value and slope jumps of `ξ` across one seam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeamReport {
    pub f: f64,
    pub value_jump: f64,
    pub slope_jump: f64,
    /// Jump of `G`; the l2decay `G` is discontinuous at both seams.
    pub g_jump: f64,
}

/// Compares the neighbouring pieces at each seam.
pub fn seam_report(spec: &WeightSpec, t: f64) -> Result<Vec<SeamReport>> {
    spec.seams()
        .iter()
        .enumerate()
        .map(|(k, &f)| {
            let a = spec.piece(k, f, t)?;
            let b = spec.piece(k + 1, f, t)?;
            Ok(SeamReport {
                f,
                value_jump: (a.xi - b.xi).abs(),
                slope_jump: (a.xi_f - b.xi_f).abs(),
                g_jump: (a.g - b.g).abs(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipationField {
    pub t: f64,
    pub values: Vec<f64>,
    pub max: f64,
    /// Radius of the maximum.
    pub argmax: f64,
}

/// `𝒩 = ∂ₜξ + CG² + C|∇G|²/G + C|Δξ|²` per node. Where `G = 0` the middle
/// term is 0 if `∇G = 0` and an error otherwise.
pub fn eval_dissipation(spec: &WeightSpec, f: &DistanceLike, t: f64, c: f64) -> Result<DissipationField> {
    let w = eval_weight(spec, f, t)?;
    dissipation_from_field(&w, &f.r, c)
}

/// `𝒩` from already evaluated weight samples at nodes `r`.
pub fn dissipation_from_field(w: &WeightField, r: &[f64], c: f64) -> Result<DissipationField> {
    let mut values = Vec::with_capacity(w.xi.len());
    let (mut max, mut argmax) = (f64::NEG_INFINITY, f64::NAN);
    for i in 0..w.xi.len() {
        let grad_term = if w.g[i] == 0.0 {
            if w.dg[i] != 0.0 {
                return Err(Error::GDegenerate(i));
            }
            0.0
        } else {
            w.dg[i] * w.dg[i] / w.g[i]
        };
        let v = w.dtxi[i] + c * (w.g[i] * w.g[i] + grad_term + w.lapxi[i] * w.lapxi[i]);
        if !v.is_finite() {
            return Err(Error::NonFinite(i));
        }
        if v > max {
            max = v;
            argmax = r[i];
        }
        values.push(v);
    }
    Ok(DissipationField { t: w.t, values, max, argmax })
}

/// Geometric lattice of `TIME_SAMPLES` times with `T − t` from `T − t_min`
/// down to `1e-6·(T − t_min)`.
pub fn time_lattice(horizon: f64, t_min: f64) -> Vec<f64> {
    let top = horizon - t_min;
    (0..TIME_SAMPLES).map(|j| horizon - top * 1e-6f64.powf(j as f64 / (TIME_SAMPLES - 1) as f64)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub a: f64,
    /// `(A, max 𝒩 over all sampled times and nodes)` for every trial.
    pub trace: Vec<(f64, f64)>,
    pub horizon_bound: f64,
}

fn max_dissipation(spec: &WeightSpec, f: &DistanceLike, times: &[f64], c: f64) -> Result<f64> {
    let maxima: Result<Vec<f64>> = times.par_iter().map(|&t| eval_dissipation(spec, f, t, c).map(|d| d.max)).collect();
    Ok(maxima?.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Smallest `A` (doubling from 1, then 40 bisection steps) with
/// `max 𝒩 ≤ 0` at every sampled time and node.
///
/// The sampled times must satisfy the variant's horizon restriction on the
/// grid's extent; otherwise the calibration is refused.
pub fn calibrate_a(
    spec: &WeightSpec,
    model: &WarpModel<f64>,
    f: &DistanceLike,
    times: &[f64],
    c: f64,
) -> Result<CalibrationReport> {
    spec.validate()?;
    let r_max = f.r.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let bound = spec.horizon_bound(model, r_max)?;
    let t_min = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let span = spec.horizon - t_min;
    let strict = matches!(spec.variant, WeightVariant::L2Decay { .. });
    if times.is_empty() || span > bound || (strict && span >= bound) {
        return Err(Error::Calibration(format!(
            "T - t = {span} violates the horizon bound {bound}; no A is certified"
        )));
    }
    let mut trace = Vec::new();
    let eval = |a: f64, trace: &mut Vec<(f64, f64)>| -> Result<bool> {
        let m = max_dissipation(&spec.with_a(a), f, times, c)?;
        trace.push((a, m));
        Ok(m <= 0.0)
    };
    let mut hi = 1.0;
    while !eval(hi, &mut trace)? {
        hi *= 2.0;
        if hi > MAX_A {
            return Err(Error::Calibration(format!(
                "no A <= 2^60 gives N <= 0 (last max {:e})",
                trace.last().unwrap().1
            )));
        }
    }
    let mut lo = hi / 2.0;
    if hi > 1.0 {
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if eval(mid, &mut trace)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    Ok(CalibrationReport { a: hi, trace, horizon_bound: bound })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSeries {
    pub times: Vec<f64>,
    /// `∫u²e^ξφ²` per stored state.
    pub values: Vec<f64>,
    /// Largest increase between consecutive states (0 if nonincreasing).
    pub max_increase: f64,
    /// `max_increase` relative to the value it grew from.
    pub max_relative_increase: f64,
}

/// `∫u²e^ξφ²` for every stored state of `trajectory`, with `φ` given on the
/// same nodes.
pub fn monitor_weighted_l2(
    disc: &Discretization<f64>,
    trajectory: &Trajectory<f64>,
    spec: &WeightSpec,
    f: &DistanceLike,
    phi: &[f64],
) -> Result<WeightedSeries> {
    if f.f.len() != disc.len() || phi.len() != disc.len() {
        return Err(Error::Invalid("weight samples and trajectory use different grids".into()));
    }
    let mut times = Vec::with_capacity(trajectory.states.len());
    let mut values = Vec::with_capacity(trajectory.states.len());
    for s in &trajectory.states {
        let w = eval_weight(spec, f, s.t)?;
        let v: f64 = (0..disc.len()).map(|i| disc.weights[i] * s.u[i] * s.u[i] * w.xi[i].exp() * phi[i] * phi[i]).sum();
        times.push(s.t);
        values.push(v);
    }
    let mut max_increase = 0.0f64;
    let mut max_relative_increase = 0.0f64;
    for k in 1..values.len() {
        let inc = values[k] - values[k - 1];
        if inc > max_increase {
            max_increase = inc;
        }
        if values[k - 1] > 0.0 {
            max_relative_increase = max_relative_increase.max(inc / values[k - 1]);
        }
    }
    Ok(WeightedSeries { times, values, max_increase, max_relative_increase })
}

/// `(c(1+K(R+ρ))/ρ²) ∫_{D_{R+ρ}∖D_R} u²e^ξ`, the cut-off annulus term.
pub fn annulus_term(
    disc: &Discretization<f64>,
    u: &[f64],
    xi: &[f64],
    f: &DistanceLike,
    level: f64,
    rho: f64,
    c: f64,
) -> Result<f64> {
    let k = disc.model.ricci_lower_bound(level + rho)?;
    let s: f64 = (0..disc.len())
        .filter(|&i| f.f[i] > level && f.f[i] < level + rho)
        .map(|i| disc.weights[i] * u[i] * u[i] * xi[i].exp())
        .sum();
    Ok(c * (1.0 + k) / (rho * rho) * s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct L2DecayReport {
    /// `∫_{M∖D_{2R}} u²(T/2)`.
    pub lhs: f64,
    /// `e^{−R^{4/3}/(2AT^{1/3})} ∫_{D_R} u²(0)`.
    pub rhs: f64,
    pub a: f64,
    pub pass: bool,
}

/// Evolves `init` (supported in `D_R`) to `T/2` and compares the exterior
/// `L²` mass with the exponential bound. `A` is calibrated for the l2decay
/// weight with `R₁ = R/2` unless `spec` supplies a variant and `A` already.
pub fn check_l2_exp_decay(
    disc: &Discretization<f64>,
    f: &DistanceLike,
    init: &[f64],
    r: f64,
    horizon: f64,
    dt: f64,
    c: f64,
) -> Result<L2DecayReport> {
    let spec = WeightSpec::new(WeightVariant::L2Decay { r, r1: 0.5 * r }, horizon, 1.0)?
        .with_lambda(f.df.iter().fold(1.0f64, |m, d| m.max(d.abs())));
    let r_max = f.r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let bound = spec.horizon_bound(&disc.model, r_max)?;
    if !(horizon < bound) {
        return Err(Error::HorizonViolation(format!("T = {horizon} must be below R/(1+K(3R/2))^(3/2) = {bound}")));
    }
    if let Some(i) = (0..init.len()).find(|&i| init[i] != 0.0 && f.f[i] > r) {
        return Err(Error::Invalid(format!("initial data not supported in D_R (node {i})")));
    }
    let calib = calibrate_a(&spec, &disc.model, f, &time_lattice(horizon, 0.0), c)?;
    let half = 0.5 * horizon;
    let schedule = Schedule::new(dt, half, vec![half], 0.5).with_startup(4);
    let traj = run_with(disc, init, &schedule)?;
    let u_end = &traj.last().u;
    let lhs: f64 = (0..disc.len()).filter(|&i| f.f[i] > 2.0 * r).map(|i| disc.weights[i] * u_end[i] * u_end[i]).sum();
    let inside: f64 = (0..disc.len()).filter(|&i| f.f[i] <= r).map(|i| disc.weights[i] * init[i] * init[i]).sum();
    let rhs = (-spec.with_a(calib.a).decay_exponent()).exp() * inside;
    Ok(L2DecayReport { lhs, rhs, a: calib.a, pass: lhs <= rhs })
}
