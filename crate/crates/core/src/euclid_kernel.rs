//! The Euclidean biharmonic heat kernel `b(x,t) = αₙ t^{-n/4} Fₙ(|x|/t^{1/4})`
//! with similarity profile
//!
//! ```text
//! Fₙ(η) = η^{1-n} ∫₀^∞ e^{-s⁴} (ηs)^{n/2} J_{(n-2)/2}(ηs) ds.
//! ```

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;

use crate::bessel::bessel_j;
use crate::error::{Error, Result};
use crate::quadrature::{romberg, GaussLegendre};

/// Truncation point of the `s` integral.
pub const S_MAX: f64 = 8.0;
/// `e^{-s⁴}` underflows to zero past `s⁴ = 745`.
const S4_UNDERFLOW: f64 = 745.2;
const PANEL_MAX: f64 = 0.25;
const PANEL_RTOL: f64 = 1e-10;
const MAX_BISECTIONS: u32 = 30;
const GAUSS_POINTS: usize = 10;

fn gauss() -> &'static GaussLegendre<f64> {
    static RULE: OnceLock<GaussLegendre<f64>> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(GAUSS_POINTS))
}

/// Tabulated similarity profile of the Euclidean kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelProfile {
    pub n: usize,
    pub eta_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub alpha_n: f64,
}

impl KernelProfile {
    /// Tabulates `Fₙ` on `nodes` equispaced points of `[0, eta_max]`.
    pub fn tabulate(n: usize, eta_max: f64, nodes: usize) -> Result<Self> {
        check_dim(n)?;
        if !(eta_max > 0.0) || nodes < 2 {
            return Err(Error::Domain(format!(
                "profile table needs eta_max > 0 and at least 2 nodes (got {eta_max}, {nodes})"
            )));
        }
        let step = eta_max / (nodes - 1) as f64;
        let eta_grid: Vec<f64> = (0..nodes).map(|i| i as f64 * step).collect();
        let values = eta_grid.par_iter().map(|&eta| profile_f(n, eta)).collect::<Result<Vec<_>>>()?;
        Ok(Self { n, eta_grid, values, alpha_n: alpha_n(n)? })
    }
}

fn check_dim(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::Domain("dimension must be >= 1".into()))
    } else {
        Ok(())
    }
}

/// Area of the unit sphere `S^{n-1}` (equals 2 for `n = 1`).
pub fn unit_sphere_area(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(h) / libm::tgamma(h)
}

/// Volume of the Euclidean unit ball `ωₙ`.
pub fn unit_ball_volume(n: usize) -> f64 {
    unit_sphere_area(n) / n as f64
}

/// `Fₙ(0)`: leading series term `J_ν(z) ≈ (z/2)^ν/Γ(ν+1)` inserted into the integral.
pub fn profile_f_zero(n: usize) -> f64 {
    let nf = n as f64;
    let nu = (nf - 2.0) / 2.0;
    libm::tgamma(nf / 4.0) / 4.0 / (2f64.powf(nu) * libm::tgamma(nf / 2.0))
}

/// `Fₙ(η)` by oscillation-resolving panel quadrature.
pub fn profile_f(n: usize, eta: f64) -> Result<f64> {
    check_dim(n)?;
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::Domain(format!("eta = {eta} must be finite and >= 0")));
    }
    if eta == 0.0 {
        return Ok(profile_f_zero(n));
    }
    let nu = (n as f64 - 2.0) / 2.0;
    let pref = eta.powf(1.0 - n as f64 / 2.0);
    let half_n = n as f64 / 2.0;
    let integrand = |s: f64| -> Result<f64> {
        let s2 = s * s;
        Ok((-s2 * s2).exp() * s.powf(half_n) * bessel_j(nu, eta * s)?)
    };
    let width = PANEL_MAX.min(std::f64::consts::PI / (4.0 * eta));
    let s_end = S_MAX.min(S4_UNDERFLOW.powf(0.25));
    let panels = (s_end / width).ceil() as usize;
    let mut coarse = Vec::with_capacity(panels);
    for p in 0..panels {
        let a = p as f64 * width;
        let b = (a + width).min(s_end);
        let q = panel(&integrand, a, b)?;
        let halves = halves(&integrand, a, b)?;
        coarse.push((a, b, q, halves));
    }
    let scale: f64 = coarse.iter().map(|c| c.3.abs()).sum();
    let floor = 1e-17 * scale;
    let mut total = 0.0;
    for (a, b, q, h) in coarse {
        total += refine(&integrand, a, b, q, h, floor, 0)?;
    }
    Ok(pref * total)
}

fn panel<F: Fn(f64) -> Result<f64>>(f: &F, a: f64, b: f64) -> Result<f64> {
    let g = gauss();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in g.nodes.iter().zip(&g.weights) {
        acc += w * f(mid + half * x)?;
    }
    Ok(acc * half)
}

fn halves<F: Fn(f64) -> Result<f64>>(f: &F, a: f64, b: f64) -> Result<f64> {
    let m = 0.5 * (a + b);
    Ok(panel(f, a, m)? + panel(f, m, b)?)
}

/// Two-level Richardson test; bisects panels that fail it.
fn refine<F: Fn(f64) -> Result<f64>>(
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    split: f64,
    floor: f64,
    depth: u32,
) -> Result<f64> {
    if (whole - split).abs() <= PANEL_RTOL * split.abs() + floor {
        return Ok(split);
    }
    if depth >= MAX_BISECTIONS {
        return Err(Error::Convergence(format!(
            "panel [{a}, {b}] failed the refinement test after {depth} bisections"
        )));
    }
    let m = 0.5 * (a + b);
    let left = panel(f, a, m)?;
    let right = panel(f, m, b)?;
    Ok(refine(f, a, m, left, halves(f, a, m)?, floor, depth + 1)?
        + refine(f, m, b, right, halves(f, m, b)?, floor, depth + 1)?)
}

/// Normalization `αₙ` fixed by `∫_{ℝⁿ} b(x, 1) dx = 1`, cached per dimension.
pub fn alpha_n(n: usize) -> Result<f64> {
    check_dim(n)?;
    static CACHE: OnceLock<Mutex<HashMap<usize, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().expect("alpha cache").get(&n) {
        return Ok(*v);
    }
    let moment = profile_moment(n)?;
    let alpha = 1.0 / (unit_sphere_area(n) * moment);
    cache.lock().expect("alpha cache").insert(n, alpha);
    Ok(alpha)
}

/// `∫₀^∞ Fₙ(ρ) ρ^{n-1} dρ` by 16-point Gauss panels on `[0, 48]`.
fn profile_moment(n: usize) -> Result<f64> {
    const RHO_END: f64 = 48.0;
    const WIDTH: f64 = 0.5;
    let g = GaussLegendre::<f64>::new(16);
    let panels = (RHO_END / WIDTH) as usize;
    let mut pts = Vec::with_capacity(panels * g.len());
    for p in 0..panels {
        let a = p as f64 * WIDTH;
        for (x, w) in g.nodes.iter().zip(&g.weights) {
            pts.push((a + 0.5 * WIDTH * (1.0 + x), 0.5 * WIDTH * w));
        }
    }
    let terms = pts
        .par_iter()
        .map(|&(rho, w)| Ok(w * profile_f(n, rho)? * rho.powi(n as i32 - 1)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(terms.iter().sum())
}

/// `b(x, t)` for `|x| = x_norm`.
pub fn kernel_point(n: usize, x_norm: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("t = {t} must be > 0")));
    }
    if !(x_norm >= 0.0) {
        return Err(Error::Domain(format!("|x| = {x_norm} must be >= 0")));
    }
    let q = t.sqrt().sqrt();
    Ok(alpha_n(n)? * profile_f(n, x_norm / q)? / q.powi(n as i32))
}

/// Total mass `|S^{n-1}| ∫₀^∞ b(r,t) r^{n-1} dr` by Romberg on `[0, 48 t^{1/4}]`.
pub fn kernel_mass(n: usize, t: f64) -> Result<f64> {
    let q = t.sqrt().sqrt();
    let end = 48.0 * q;
    let mut err = None;
    let v = romberg(0.0, end, 1e-12, 1e-15, 14, |r| match kernel_point(n, r, t) {
        Ok(b) => b * r.powi(n as i32 - 1),
        Err(e) => {
            err.get_or_insert(e);
            0.0
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(unit_sphere_area(n) * v)
}

/// Independent evaluation of `b(x,t)` from the Fourier representation
/// `b = (2π)^{-n} ∫ e^{-|k|⁴t + ik·x} dk`, reduced to a radial integral.
///
/// Uses Romberg integration and, for `n = 2`, a trapezoid evaluation of `J₀`;
/// shares no code with [`profile_f`].
pub fn kernel_oracle(n: usize, x_norm: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("t = {t} must be > 0")));
    }
    if !(x_norm >= 0.0) {
        return Err(Error::Domain(format!("|x| = {x_norm} must be >= 0")));
    }
    let k_end = (40.0 / t).sqrt().sqrt();
    let scale = t.powf(-(n as f64) / 4.0);
    let pi = std::f64::consts::PI;
    let decay = |k: f64| {
        let k2 = k * k;
        (-k2 * k2 * t).exp()
    };
    let (pref, integral) = match n {
        1 => (1.0 / pi, romberg(0.0, k_end, 1e-13, 1e-17 * scale, 22, |k| decay(k) * (k * x_norm).cos())?),
        2 => (
            1.0 / (2.0 * pi),
            romberg(0.0, k_end, 1e-13, 1e-17 * scale, 22, |k| decay(k) * k * j0_trapezoid(k * x_norm))?,
        ),
        3 => (
            1.0 / (2.0 * pi * pi),
            romberg(0.0, k_end, 1e-13, 1e-17 * scale, 22, |k| decay(k) * k * k * sinc(k * x_norm))?,
        ),
        _ => return Err(Error::Domain(format!("kernel_oracle supports n in {{1,2,3}}, got {n}"))),
    };
    Ok(pref * integral)
}

fn sinc(y: f64) -> f64 {
    if y.abs() < 1e-4 {
        1.0 - y * y / 6.0
    } else {
        y.sin() / y
    }
}

/// `J₀(z) = (1/2π) ∫₀^{2π} cos(z sin θ) dθ` by the periodic trapezoid rule.
fn j0_trapezoid(z: f64) -> f64 {
    let m = (z.abs().ceil() as usize + 40) * 2;
    let step = 2.0 * std::f64::consts::PI / m as f64;
    let mut acc = 0.0;
    for j in 0..m {
        acc += (z * (j as f64 * step).sin()).cos();
    }
    acc / m as f64
}

/// Sign changes of `Fₙ` on `(0, eta_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignChanges {
    pub count: usize,
    pub roots: Vec<f64>,
    pub grid_step: f64,
}

/// Counts sign changes of `Fₙ` on a `resolution`-cell grid and confirms each
/// bracketed root by bisection to width `1e-6`.
pub fn count_sign_changes(n: usize, eta_max: f64, resolution: usize) -> Result<SignChanges> {
    check_dim(n)?;
    if !(eta_max > 0.0) {
        return Err(Error::Domain(format!("eta_max = {eta_max} must be > 0")));
    }
    if resolution < 1000 {
        return Err(Error::Resolution(format!("resolution {resolution} < 1000")));
    }
    let step = eta_max / resolution as f64;
    let vals = (0..=resolution).into_par_iter().map(|i| profile_f(n, i as f64 * step)).collect::<Result<Vec<_>>>()?;
    let mut roots = Vec::new();
    let mut last_sign = vals[0].signum();
    let mut last_idx = 0usize;
    for (i, &v) in vals.iter().enumerate().skip(1) {
        if v == 0.0 {
            continue;
        }
        let s = v.signum();
        if s != last_sign {
            let mut lo = last_idx as f64 * step;
            let mut hi = i as f64 * step;
            let f_lo_sign = last_sign;
            while hi - lo > 1e-6 {
                let mid = 0.5 * (lo + hi);
                let fm = profile_f(n, mid)?;
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if fm.signum() == f_lo_sign {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
            last_sign = s;
        }
        last_idx = i;
    }
    for w in roots.windows(2) {
        if w[1] - w[0] < 10.0 * step {
            return Err(Error::Resolution(format!(
                "roots {} and {} closer than 10 grid cells (step {step})",
                w[0], w[1]
            )));
        }
    }
    Ok(SignChanges { count: roots.len(), roots, grid_step: step })
}

/// Fit of the envelope `|Fₙ(η)| ≈ C e^{-c η^p}`.
#[derive(Debug, Clone, PartialEq)]
#[allow(non_snake_case)]
pub struct DecayFit {
    pub c: f64,
    pub p: f64,
    pub C: f64,
    /// Envelope points `(η, |Fₙ(η)|)` used for the fit.
    pub points: Vec<(f64, f64)>,
}

impl DecayFit {
    pub fn predict(&self, eta: f64) -> f64 {
        self.C * (-self.c * eta.powf(self.p)).exp()
    }

    /// Largest factor by which the fit misses an envelope point.
    pub fn worst_factor(&self) -> f64 {
        self.points
            .iter()
            .map(|&(e, v)| {
                let r = v / self.predict(e);
                r.max(1.0 / r)
            })
            .fold(1.0, f64::max)
    }
}

/// Local maxima of `|g|` sampled on `[lo, hi]` with spacing `step`, each
/// polished by golden-section search.
pub fn envelope_maxima<G: Fn(f64) -> Result<f64> + Sync>(g: G, lo: f64, hi: f64, step: f64) -> Result<Vec<(f64, f64)>> {
    let m = ((hi - lo) / step).ceil() as usize;
    let xs: Vec<f64> = (0..=m).map(|i| (lo + i as f64 * step).min(hi)).collect();
    let vals = xs.par_iter().map(|&x| Ok(g(x)?.abs())).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for i in 1..m {
        if vals[i] > vals[i - 1] && vals[i] >= vals[i + 1] {
            let (x, v) = golden_max(|x| Ok(g(x)?.abs()), xs[i - 1], xs[i + 1], 1e-10)?;
            out.push((x, v));
        }
    }
    Ok(out)
}

fn golden_max<G: Fn(f64) -> Result<f64>>(g: G, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = g(x1)?;
    let mut f2 = g(x2)?;
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = g(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = g(x1)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, g(x)?))
}

/// Least-squares fit of `ln v = ln C - c x^p` over `points`, `p` free.
pub fn fit_stretched_exponential(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 3 {
        return Err(Error::FitDegenerate(format!("{} points", points.len())));
    }
    let sse = |p: f64| -> (f64, f64, f64) {
        let m = points.len() as f64;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for &(e, v) in points {
            let x = e.powf(p);
            let y = v.ln();
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        let icpt = (sy - slope * sx) / m;
        let res: f64 = points
            .iter()
            .map(|&(e, v)| {
                let d = v.ln() - (icpt + slope * e.powf(p));
                d * d
            })
            .sum();
        (res, -slope, icpt)
    };
    let mut best_p = 0.5;
    let mut best = f64::INFINITY;
    let mut p = 0.5;
    while p <= 3.0 + 1e-12 {
        let (r, _, _) = sse(p);
        if r < best {
            best = r;
            best_p = p;
        }
        p += 0.01;
    }
    let (mut a, mut b) = (best_p - 0.01, best_p + 0.01);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    while b - a > 1e-9 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if sse(x1).0 < sse(x2).0 {
            b = x2;
        } else {
            a = x1;
        }
    }
    let p = 0.5 * (a + b);
    let (_, c, icpt) = sse(p);
    Ok((c, p, icpt.exp()))
}

/// Fits the decay of the local maxima of `|Fₙ|` on `[eta_lo, eta_hi]`.
pub fn fit_decay_exponent(n: usize, eta_lo: f64, eta_hi: f64) -> Result<DecayFit> {
    check_dim(n)?;
    if !(3.0..40.0 + 1e-12).contains(&eta_lo) || !(eta_hi > eta_lo && eta_hi <= 40.0) {
        return Err(Error::Domain(format!("fit window [{eta_lo}, {eta_hi}] must satisfy 3 <= lo < hi <= 40")));
    }
    let points = envelope_maxima(|e| profile_f(n, e), eta_lo, eta_hi, 0.02)?;
    if points.len() < 5 {
        return Err(Error::FitDegenerate(format!("{} envelope maxima in [{eta_lo}, {eta_hi}], need 5", points.len())));
    }
    let (c, p, big_c) = fit_stretched_exponential(&points)?;
    Ok(DecayFit { c, p, C: big_c, points })
}
