//! Distance-like functions and cut-offs on radial models.
//!
//! Pipeline: a radial Dirichlet solve `Δh = λh` on `[1/2, R+ρ+1]`, the
//! Schoen–Yau assembly `f = (−(1−η) ln h² + ln C̄)/√(1+K)`, and the cut-off
//! `φ = η^k(1 + (f−R)/ρ)`. Derivatives are formed by the chain rule from
//! `g = (ln h)'`; on the annulus `r > 2` the Dirichlet equation turns
//! `Δf` into `(2/√(1+K))(g² − λ)`.

use crate::banded::BandedMatrix;
use crate::error::{Error, Result};
use crate::geometry::WarpModel;

/// Inner radius of the Dirichlet annulus.
pub const INNER_RADIUS: f64 = 0.5;
/// Nodes below this cut-off value are excluded from cut-off constants.
pub const CUTOFF_FLOOR: f64 = 1e-8;
const MAX_FINE_NODES: usize = 1 << 23;

/// Quintic smoothstep blend: `η = 1` on `r ≤ 1`, `η = 0` on `r ≥ 2`.
///
/// `|η'| ≤ 15/8` and `|η''| ≤ 10/√3`, inside the bounds `−2 < η' ≤ 0`,
/// `|η''| ≤ 10`.
pub fn eta(r: f64) -> [f64; 3] {
    if r <= 1.0 {
        return [1.0, 0.0, 0.0];
    }
    if r >= 2.0 {
        return [0.0, 0.0, 0.0];
    }
    let x = r - 1.0;
    let s = x * x * x * (10.0 - 15.0 * x + 6.0 * x * x);
    let ds = 30.0 * x * x * (1.0 - x) * (1.0 - x);
    let dds = 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x);
    [1.0 - s, -ds, -dds]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaffoldConfig {
    pub model: WarpModel<f64>,
    /// Cut-off level `R`; `f` is built on `[1/2, R+ρ]`.
    pub r_outer: f64,
    /// Ricci lower-bound constant `K ≥ 0`.
    pub ricci: f64,
    /// Exponent parameter; `λ = A²/4 + 1`.
    pub a: f64,
    /// Stand-in for the unnamed constant in the default `A`.
    pub c_hat: f64,
    /// Cut-off sharpness `k ≥ 4`.
    pub k: f64,
    pub rho: f64,
    /// Target node spacing of the output grid.
    pub spacing: f64,
    /// Richardson tolerance of the Dirichlet solve.
    pub tolerance: f64,
}

/// `A = (4/3)(3Ĉ√(K+1) + Ĉ² + 1)`.
pub fn default_a(ricci: f64, c_hat: f64) -> f64 {
    4.0 / 3.0 * (3.0 * c_hat * (ricci + 1.0).sqrt() + c_hat * c_hat + 1.0)
}

impl ScaffoldConfig {
    /// Defaults: `K` from the model's Ricci bound on the construction ball,
    /// `Ĉ = 1`, `k = 4`, `ρ = 1`, spacing `0.02`.
    pub fn new(model: WarpModel<f64>, r_outer: f64) -> Result<Self> {
        let rho = 1.0;
        let ricci = model.ricci_lower_bound(r_outer + rho + 1.0)?;
        let cfg = Self {
            model,
            r_outer,
            ricci,
            a: default_a(ricci, 1.0),
            c_hat: 1.0,
            k: 4.0,
            rho,
            spacing: 0.02,
            tolerance: 1e-8,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Overrides `K` and recomputes the default `A`.
    pub fn with_ricci(mut self, ricci: f64) -> Self {
        self.ricci = ricci;
        self.a = default_a(ricci, self.c_hat);
        self
    }

    pub fn with_c_hat(mut self, c_hat: f64) -> Self {
        self.c_hat = c_hat;
        self.a = default_a(self.ricci, c_hat);
        self
    }

    pub fn with_a(mut self, a: f64) -> Self {
        self.a = a;
        self
    }

    pub fn with_cutoff(mut self, k: f64, rho: f64) -> Self {
        self.k = k;
        self.rho = rho;
        self
    }

    pub fn with_spacing(mut self, spacing: f64) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn lambda(&self) -> f64 {
        self.a * self.a / 4.0 + 1.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_outer > 3.0) || !self.r_outer.is_finite() {
            return Err(Error::Invalid(format!("R = {} must exceed 3", self.r_outer)));
        }
        if !(self.ricci >= 0.0) || !self.ricci.is_finite() {
            return Err(Error::Invalid(format!("K = {} must be >= 0", self.ricci)));
        }
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(Error::Invalid(format!("A = {} must be > 0", self.a)));
        }
        if !(self.k >= 4.0) {
            return Err(Error::Invalid(format!("k = {} must be >= 4", self.k)));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::Invalid(format!("rho = {} must be > 0", self.rho)));
        }
        if !(self.spacing > 0.0 && self.spacing <= 0.25) {
            return Err(Error::Invalid(format!("spacing {} outside (0, 0.25]", self.spacing)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Invalid("tolerance must be > 0".into()));
        }
        Ok(())
    }

    /// Configuration for the metric `c²g`: radii scale by `c`, curvature by `c⁻²`.
    ///
    /// Supported for Euclidean and hyperbolic models.
    pub fn rescaled(&self, c: f64) -> Result<Self> {
        use crate::geometry::WarpKind;
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Invalid(format!("scale {c} must be > 0")));
        }
        let model = match self.model.kind {
            WarpKind::Euclidean => self.model.clone(),
            WarpKind::Hyperbolic { kappa } => WarpModel::hyperbolic(self.model.n, kappa / (c * c))?,
            _ => return Err(Error::Invalid("rescaling needs a Euclidean or hyperbolic model".into())),
        };
        let mut out = self.clone();
        out.model = model;
        out.r_outer *= c;
        out.rho *= c;
        out.ricci /= c * c;
        out.a = default_a(out.ricci, out.c_hat);
        out.validate()?;
        Ok(out)
    }
}

/// Dirichlet solution `Δh = λh`, `h(inner) = 1`, `h(outer) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletSolution {
    pub lambda: f64,
    pub r: Vec<f64>,
    pub h: Vec<f64>,
    /// `ln h`, finite where `h` underflows; `-∞` at the outer node.
    pub log_h: Vec<f64>,
    /// `(ln h)'`; not finite at the outer node.
    pub dlog_h: Vec<f64>,
    /// Largest relative change between the last two Richardson levels.
    pub residual: f64,
    /// Finest grid used, as a multiple of the output spacing.
    pub refinement: usize,
}

/// Decay rate `μ` of the scaled unknown `q = h e^{μ(r − inner)}`, matched to
/// the far-field equation `μ² − aμ − λ = 0` at the outer radius.
fn decay_rate(a_out: f64, lambda: f64) -> f64 {
    2.0 * lambda / (a_out + (a_out * a_out + 4.0 * lambda).sqrt())
}

/// Central-difference solve of the scaled equation on `n` intervals.
fn solve_scaled(coef: &dyn Fn(f64) -> f64, mu: f64, lambda: f64, inner: f64, outer: f64, n: usize) -> Result<Vec<f64>> {
    let d = (outer - inner) / n as f64;
    let m = n - 1;
    let mut mat = BandedMatrix::<f64>::zeros(m, 1, 1);
    let mut rhs = vec![0.0; m];
    for i in 0..m {
        let r = inner + (i + 1) as f64 * d;
        let a = coef(r);
        let b = a - 2.0 * mu;
        let c = mu * mu - mu * a - lambda;
        let lo = 1.0 / (d * d) - b / (2.0 * d);
        let hi = 1.0 / (d * d) + b / (2.0 * d);
        mat.set(i, i, -2.0 / (d * d) + c);
        if i > 0 {
            mat.set(i, i - 1, lo);
        } else {
            rhs[0] = -lo;
        }
        if i + 1 < m {
            mat.set(i, i + 1, hi);
        }
    }
    let q = mat.factor()?.solve(&rhs);
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    out.extend(q);
    out.push(0.0);
    Ok(out)
}

/// Fourth-order first derivative of equispaced samples.
fn derivative(v: &[f64], d: f64) -> Vec<f64> {
    let n = v.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        out[i] = if i >= 2 && i + 2 < n {
            (v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) / (12.0 * d)
        } else if i + 4 < n {
            (-25.0 * v[i] + 48.0 * v[i + 1] - 36.0 * v[i + 2] + 16.0 * v[i + 3] - 3.0 * v[i + 4]) / (12.0 * d)
        } else {
            (25.0 * v[i] - 48.0 * v[i - 1] + 36.0 * v[i - 2] - 16.0 * v[i - 3] + 3.0 * v[i - 4]) / (12.0 * d)
        };
    }
    out
}

/// Solves `h'' + (n−1)(φ'/φ)h' = λh` on `[inner, outer]` with `h(inner) = 1`,
/// `h(outer) = 0`, sampled on `intervals + 1` equispaced nodes.
///
/// The unknown is rescaled by `e^{μ(r−inner)}` so that the deep tail keeps
/// full relative precision. Grids are doubled and Richardson-extrapolated until
/// consecutive extrapolations agree to `tolerance` relative at every node.
pub fn solve_radial_dirichlet(
    model: &WarpModel<f64>,
    lambda: f64,
    inner: f64,
    outer: f64,
    intervals: usize,
    tolerance: f64,
) -> Result<DirichletSolution> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Invalid(format!("lambda = {lambda} must be > 0")));
    }
    if !(inner > 0.0) || !(outer > inner) || !outer.is_finite() {
        return Err(Error::Domain(format!("need 0 < inner < outer, got [{inner}, {outer}]")));
    }
    if intervals < 8 {
        return Err(Error::GridTooCoarse(format!("{intervals} intervals, need at least 8")));
    }
    let coef = |r: f64| model.mean_curvature(r).unwrap_or(f64::NAN);
    let mu = decay_rate(coef(outer), lambda);
    if !mu.is_finite() {
        return Err(Error::Overflow("mean curvature not finite on the annulus".into()));
    }
    let d0 = (outer - inner) / intervals as f64;
    // Start where the convection term no longer dominates the stencil.
    let peak = (0..=intervals).map(|i| (coef(inner + i as f64 * d0) - 2.0 * mu).abs()).fold(0.0f64, f64::max);
    let mut level = 1usize;
    while peak * d0 / level as f64 > 1.0 {
        level *= 2;
    }
    let restrict = |fine: &[f64], factor: usize| -> Vec<f64> { (0..=intervals).map(|i| fine[i * factor]).collect() };

    let mut coarse = restrict(&solve_scaled(&coef, mu, lambda, inner, outer, intervals * level)?, level);
    let mut previous: Option<Vec<f64>> = None;
    loop {
        if intervals * level * 2 > MAX_FINE_NODES {
            return Err(Error::RefinementStall(format!(
                "no agreement to {tolerance:e} with {} intervals",
                intervals * level
            )));
        }
        let fine = restrict(&solve_scaled(&coef, mu, lambda, inner, outer, intervals * level * 2)?, level * 2);
        let extrap: Vec<f64> = fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect();
        level *= 2;
        if let Some(prev) = &previous {
            let mut change = 0.0f64;
            for i in 1..intervals {
                change = change.max((extrap[i] - prev[i]).abs() / extrap[i].abs());
            }
            if change <= tolerance {
                return finish(lambda, mu, inner, d0, extrap, change, level);
            }
        }
        previous = Some(extrap);
        coarse = fine;
    }
}

fn finish(
    lambda: f64,
    mu: f64,
    inner: f64,
    d: f64,
    q: Vec<f64>,
    residual: f64,
    level: usize,
) -> Result<DirichletSolution> {
    let n = q.len();
    if let Some(i) = (1..n - 1).find(|&i| !(q[i] > 0.0)) {
        return Err(Error::NonPositive(i));
    }
    let r: Vec<f64> = (0..n).map(|i| inner + i as f64 * d).collect();
    let log_q: Vec<f64> = q.iter().map(|v| v.ln()).collect();
    let dq = derivative(&q, d);
    let log_h: Vec<f64> = log_q.iter().zip(&r).map(|(l, ri)| l - mu * (ri - inner)).collect();
    let h: Vec<f64> = log_h.iter().map(|l| l.exp()).collect();
    let dlog_h: Vec<f64> = dq.iter().zip(&q).map(|(dv, v)| dv / v - mu).collect();
    Ok(DirichletSolution { lambda, r, h, log_h, dlog_h, residual, refinement: level })
}

/// Samples of `f`, `f'` and `Δf`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceLike {
    pub r: Vec<f64>,
    pub f: Vec<f64>,
    pub df: Vec<f64>,
    pub lapf: Vec<f64>,
    /// `ln C̄ = max over [2, r_max] of (2 ln h + √(1+K) r)`.
    pub log_cbar: f64,
}

impl DistanceLike {
    /// The exact distance `f = |r|` on a model, with `f' = sign r` and
    /// `Δf = (n−1)φ'/φ`. At the pole `Δf` is undefined and reported as 0.
    pub fn exact(model: &WarpModel<f64>, nodes: &[f64]) -> Result<Self> {
        let mut out = Self {
            r: nodes.to_vec(),
            f: Vec::with_capacity(nodes.len()),
            df: Vec::with_capacity(nodes.len()),
            lapf: Vec::with_capacity(nodes.len()),
            log_cbar: f64::NAN,
        };
        for &r in nodes {
            out.f.push(r.abs());
            out.df.push(if r < 0.0 { -1.0 } else { 1.0 });
            out.lapf.push(if r == 0.0 { 0.0 } else { model.mean_curvature(r.abs())? });
        }
        Ok(out)
    }
}

/// Number of output intervals on `[1/2, outer]` for the configured spacing;
/// the outer radius is rounded up to a whole number of cells.
fn layout(spacing: f64, reach: f64) -> (usize, f64) {
    let cells_per_unit = (1.0 / spacing).ceil();
    let d = 1.0 / cells_per_unit;
    let intervals = ((reach - INNER_RADIUS) / d - 1e-9).ceil() as usize;
    (intervals, INNER_RADIUS + intervals as f64 * d)
}

fn assemble(model: &WarpModel<f64>, ricci: f64, sol: &DirichletSolution, reach: f64) -> Result<DistanceLike> {
    let s = (1.0 + ricci).sqrt();
    let end = sol.r.iter().rposition(|&r| r <= reach + 1e-9).unwrap_or(0);
    if end + 1 >= sol.r.len() || sol.r[end] < 2.0 {
        return Err(Error::Domain(format!("distance-like reach {reach} must lie in [2, outer)")));
    }
    let mut log_cbar = f64::NEG_INFINITY;
    for i in 0..=end {
        if sol.r[i] >= 2.0 - 1e-12 {
            log_cbar = log_cbar.max(2.0 * sol.log_h[i] + s * sol.r[i]);
        }
    }
    let lambda = sol.lambda;
    let mut out = DistanceLike {
        r: sol.r[..=end].to_vec(),
        f: Vec::with_capacity(end + 1),
        df: Vec::with_capacity(end + 1),
        lapf: Vec::with_capacity(end + 1),
        log_cbar,
    };
    for i in 0..=end {
        let r = sol.r[i];
        let [e, de, dde] = eta(r);
        let l = 2.0 * sol.log_h[i];
        let g = sol.dlog_h[i];
        let a = model.mean_curvature(r)?;
        // (ln h)'' from the Dirichlet equation
        let gg = lambda - a * g - g * g;
        let f = (-(1.0 - e) * l + log_cbar) / s;
        let df = (de * l - (1.0 - e) * 2.0 * g) / s;
        let ddf = (dde * l + 2.0 * de * 2.0 * g - (1.0 - e) * 2.0 * gg) / s;
        out.f.push(f);
        out.df.push(df);
        out.lapf.push(ddf + a * df);
    }
    Ok(out)
}

/// Assembles `f` on `[1/2, R+ρ]` from a Dirichlet solution with the
/// config's `λ`. `C̄` is the smallest value with `h² ≤ C̄e^{−√(1+K)r}` on
/// `[2, R+ρ]`, so `f ≥ r` there by construction.
pub fn build_distance_like(config: &ScaffoldConfig, h: &DirichletSolution) -> Result<DistanceLike> {
    if (h.lambda - config.lambda()).abs() > 1e-12 * config.lambda() {
        return Err(Error::Invalid(format!("Dirichlet lambda {} differs from config {}", h.lambda, config.lambda())));
    }
    if let Some(i) = (0..h.h.len() - 1).find(|&i| !(h.log_h[i].is_finite())) {
        return Err(Error::NonPositive(i));
    }
    assemble(&config.model, config.ricci, h, config.r_outer + config.rho)
}

/// Cut-off samples with their derivatives and measured constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Cutoff {
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub lapphi: Vec<f64>,
    /// `max |φ'| ρ / (k φ^{1−1/k})` over nodes with `φ > CUTOFF_FLOOR`.
    pub grad_constant: f64,
    /// `max |Δφ| ρ / (k² √(1+K(R+ρ)) φ^{1−2/k})`, with `ρ` replaced by `ρ²`
    /// in the scale when `ρ < 1`.
    pub lap_constant: f64,
}

/// `φ = η^k(1 + (f − level)/ρ)` with its radial derivative and Laplacian.
pub fn cutoff_profile(f: &DistanceLike, level: f64, rho: f64, k: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = f.f.len();
    let (mut phi, mut dphi, mut lap) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let u = 1.0 + (f.f[i] - level) / rho;
        let [e, de, dde] = eta(u);
        let (fp, lf) = (f.df[i], f.lapf[i]);
        let p = e.powf(k);
        let p1 = if e > 0.0 { e.powf(k - 1.0) } else { 0.0 };
        let p2 = if e > 0.0 { e.powf(k - 2.0) } else { 0.0 };
        phi.push(p);
        dphi.push(k * p1 * de * fp / rho);
        lap.push(
            k * (k - 1.0) * p2 * de * de * fp * fp / (rho * rho)
                + k * p1 * dde * fp * fp / (rho * rho)
                + k * p1 * de * lf / rho,
        );
    }
    (phi, dphi, lap)
}

/// `φ = η^k(1 + (f − R)/ρ)`: `1` on `{f ≤ R}`, `0` on `{f ≥ R + ρ}`.
pub fn build_cutoff(config: &ScaffoldConfig, f: &DistanceLike) -> Result<Cutoff> {
    let (k, rho) = (config.k, config.rho);
    let (phi, dphi, lapphi) = cutoff_profile(f, config.r_outer, rho, k);
    let far_ricci = config.model.ricci_lower_bound(config.r_outer + rho)?;
    let lap_scale = if rho >= 1.0 {
        k * k * (1.0 + far_ricci).sqrt() / rho
    } else {
        (k * k * (1.0 + far_ricci).sqrt() / rho).max(k * k / (rho * rho))
    };
    let mut grad_constant = 0.0f64;
    let mut lap_constant = 0.0f64;
    for i in 0..phi.len() {
        if phi[i] > CUTOFF_FLOOR {
            grad_constant = grad_constant.max(dphi[i].abs() * rho / (k * phi[i].powf(1.0 - 1.0 / k)));
            lap_constant = lap_constant.max(lapphi[i].abs() / (lap_scale * phi[i].powf(1.0 - 2.0 / k)));
        }
    }
    Ok(Cutoff { phi, dphi, lapphi, grad_constant, lap_constant })
}

/// Measured constants of `f` over an annulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredConstants {
    /// `min f/r`.
    pub lambda_low: f64,
    /// `max f/r`.
    pub lambda_up: f64,
    /// `max |f'|`.
    pub grad_bound: f64,
    /// `max |Δf| / √(1+K)`.
    pub lap_bound: f64,
}

impl MeasuredConstants {
    /// `Λ̂`: the largest of the three upper constants.
    pub fn lambda_hat(&self) -> f64 {
        self.lambda_up.max(self.grad_bound).max(self.lap_bound)
    }
}

fn measure(f: &DistanceLike, ricci: f64, lo: f64, hi: f64) -> Result<MeasuredConstants> {
    let s = (1.0 + ricci).sqrt();
    let mut m = MeasuredConstants { lambda_low: f64::INFINITY, lambda_up: 0.0, grad_bound: 0.0, lap_bound: 0.0 };
    let mut any = false;
    for i in 0..f.r.len() {
        let r = f.r[i];
        if r < lo - 1e-9 || r > hi + 1e-9 {
            continue;
        }
        any = true;
        let q = f.f[i] / r;
        m.lambda_low = m.lambda_low.min(q);
        m.lambda_up = m.lambda_up.max(q);
        m.grad_bound = m.grad_bound.max(f.df[i].abs());
        m.lap_bound = m.lap_bound.max(f.lapf[i].abs() / s);
    }
    if !any {
        return Err(Error::Domain(format!("annulus [{lo}, {hi}] contains no grid nodes")));
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scaffold {
    pub config: ScaffoldConfig,
    pub dirichlet: DirichletSolution,
    pub distance: DistanceLike,
    pub cutoff: Cutoff,
    /// Constants over `[2, R]`.
    pub measured: MeasuredConstants,
}

impl Scaffold {
    pub fn build(config: ScaffoldConfig) -> Result<Self> {
        config.validate()?;
        let (intervals, outer) = layout(config.spacing, config.r_outer + config.rho + 1.0);
        let dirichlet =
            solve_radial_dirichlet(&config.model, config.lambda(), INNER_RADIUS, outer, intervals, config.tolerance)?;
        let distance = build_distance_like(&config, &dirichlet)?;
        let cutoff = build_cutoff(&config, &distance)?;
        let measured = measure(&distance, config.ricci, 2.0, config.r_outer)?;
        Ok(Self { config, dirichlet, distance, cutoff, measured })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaffoldReport {
    pub annulus: (f64, f64),
    pub measured: MeasuredConstants,
    pub lambda_hat: f64,
    /// `min (f − r)` over the annulus.
    pub lower_margin: f64,
    /// `max r|Δf| / (1 − ln ν(r))` on pole models with `K = 0`.
    pub decay_constant: Option<f64>,
    pub pass: bool,
}

/// Checks `r ≤ f ≤ Λ̂r`, `|f'| ≤ Λ̂`, `|Δf| ≤ Λ̂√(1+K)` on the annulus, with
/// `Λ̂` measured there. Only the lower bound `f ≥ r` is a hard inequality;
/// the rest certify that the measured constants are finite.
pub fn verify_scaffold(scaffold: &Scaffold, annulus: (f64, f64)) -> Result<ScaffoldReport> {
    verify_field(&scaffold.config.model, &scaffold.distance, scaffold.config.ricci, annulus)
}

/// [`verify_scaffold`] for any sampled distance-like field, such as a glued one.
pub fn verify_field(
    model: &WarpModel<f64>,
    f: &DistanceLike,
    ricci: f64,
    annulus: (f64, f64),
) -> Result<ScaffoldReport> {
    let (lo, hi) = annulus;
    let first = f.r.first().copied().unwrap_or(f64::NAN);
    let last = f.r.last().copied().unwrap_or(f64::NAN);
    if !(lo < hi) || lo < first - 1e-9 || hi > last + 1e-9 {
        return Err(Error::Domain(format!("annulus [{lo}, {hi}] outside [{first}, {last}]")));
    }
    let measured = measure(f, ricci, lo, hi)?;
    let mut lower_margin = f64::INFINITY;
    let mut decay = 0.0f64;
    let flat = ricci == 0.0 && model.topology == crate::geometry::Topology::Pole;
    for i in 0..f.r.len() {
        let r = f.r[i];
        if r < lo - 1e-9 || r > hi + 1e-9 {
            continue;
        }
        lower_margin = lower_margin.min(f.f[i] - r);
        if flat {
            let nu = model.volume_report(r)?.nu.unwrap_or(1.0);
            decay = decay.max(r * f.lapf[i].abs() / (1.0 - nu.ln()));
        }
    }
    let finite = [measured.lambda_up, measured.grad_bound, measured.lap_bound].iter().all(|v| v.is_finite());
    Ok(ScaffoldReport {
        annulus,
        measured,
        lambda_hat: measured.lambda_hat(),
        lower_margin,
        decay_constant: flat.then_some(decay),
        pass: finite && lower_margin >= -1e-10 * hi,
    })
}

/// Shape `(1 + K(1) + |ln V(1)|)/√(1+K(1))` of the inner radius `R₀`; the
/// dimensional constant in front is not numeric.
pub fn inner_radius_shape(model: &WarpModel<f64>) -> Result<f64> {
    let k1 = model.ricci_lower_bound(1.0)?;
    let v1 = model.volume_report(1.0)?.volume;
    Ok((1.0 + k1 + v1.ln().abs()) / (1.0 + k1).sqrt())
}

/// Glued global distance-like function and its radii.
#[derive(Debug, Clone, PartialEq)]
pub struct GluedField {
    /// `R_i = (2Λ̂)^i R₀`, `i = 0..=pieces`.
    pub radii: Vec<f64>,
    pub field: DistanceLike,
    /// `K(R_pieces + 1)`, the largest Ricci constant used.
    pub ricci: f64,
}

/// Partition-of-unity gluing `f = Σ ψ_i f_i` with `R_i = (2Λ̂)^i R₀`.
///
/// Each `f_i` is built on `B(R_{i+1})` with the Ricci bound of that ball.
/// The cut-offs `φ_i` use `k = 2`, level and width `Λ̂R_i`, so `φ_i = 1` on
/// `B(R_i)` whenever `f_i ≤ Λ̂r` and `φ_i = 0` outside `B(R_{i+1})`.
/// `ψ_1 = φ_1`, `ψ_i = φ_i − φ_{i−1}`. The result is valid on `[R₀, R_pieces]`.
pub fn glue(model: &WarpModel<f64>, r0: f64, lambda_hat: f64, pieces: usize, spacing: f64) -> Result<GluedField> {
    if !(r0 >= 2.0) || !(lambda_hat >= 1.0) || pieces == 0 {
        return Err(Error::Invalid(format!(
            "need R0 >= 2, Lambda >= 1, pieces >= 1; got {r0}, {lambda_hat}, {pieces}"
        )));
    }
    let radii: Vec<f64> = (0..=pieces + 1).map(|i| (2.0 * lambda_hat).powi(i as i32) * r0).collect();
    let reach = radii[pieces];
    // f_i for i = 1..=pieces, each on [1/2, R_{i+1}] restricted to a common grid
    let mut parts = Vec::with_capacity(pieces);
    let mut ricci_max = 0.0f64;
    for i in 1..=pieces {
        let ricci = model.ricci_lower_bound(radii[i + 1] + 1.0)?;
        ricci_max = ricci_max.max(ricci);
        let a = default_a(ricci, 1.0);
        let lambda = a * a / 4.0 + 1.0;
        let (intervals, outer) = layout(spacing, radii[i + 1] + 1.0);
        let sol = solve_radial_dirichlet(model, lambda, INNER_RADIUS, outer, intervals, 1e-8)?;
        let mut f = assemble(model, ricci, &sol, radii[i + 1])?;
        let phi = cutoff_profile(&f, lambda_hat * radii[i], lambda_hat * radii[i], 2.0);
        f.log_cbar = f64::NAN;
        parts.push((f, phi));
    }
    let n = layout(spacing, reach).0 + 1;
    let mut out = DistanceLike {
        r: parts[0].0.r[..n].to_vec(),
        f: vec![0.0; n],
        df: vec![0.0; n],
        lapf: vec![0.0; n],
        log_cbar: f64::NAN,
    };
    // beyond its own domain f_i has φ_i = 0, so those terms vanish
    let at = |v: &Vec<f64>, j: usize| v.get(j).copied().unwrap_or(0.0);
    for j in 0..n {
        for (idx, (f, (phi, dphi, lphi))) in parts.iter().enumerate() {
            // ψ_i = φ_i − φ_{i−1}
            let (mut p, mut dp, mut lp) = (at(phi, j), at(dphi, j), at(lphi, j));
            if idx > 0 {
                let (_, (q, dq, lq)) = &parts[idx - 1];
                p -= at(q, j);
                dp -= at(dq, j);
                lp -= at(lq, j);
            }
            if p == 0.0 && dp == 0.0 && lp == 0.0 {
                continue;
            }
            out.f[j] += p * f.f[j];
            out.df[j] += dp * f.f[j] + p * f.df[j];
            out.lapf[j] += lp * f.f[j] + 2.0 * dp * f.df[j] + p * f.lapf[j];
        }
    }
    Ok(GluedField { radii: radii[..=pieces].to_vec(), field: out, ricci: ricci_max })
}
