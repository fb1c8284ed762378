//! The bounded-data, unbounded-growth example on `ℝ × N` with warp
//! `φ(r) = e^{|r|^{2+ε}}`.
//!
//! With `ψ = φ^{n−1} = e^{L}`, `L = (n−1)r^{2+ε}`, the nested integral is
//! built from two applications of `h ↦ ∫₀ʳ e^{L(τ)−L(r)} ∫₀^τ h`:
//!
//! ```text
//! J₁(r) = ∫₀ʳ e^{L(η)−L(r)} dη,   g(r) = ∫₀ʳ J₁,
//! J₂(r) = ∫₀ʳ e^{L(τ)−L(r)} g(τ) dτ,   F(r) = ∫₀ʳ J₂,
//! ```
//!
//! so `F' = J₂`, `ΔF = g` and `Δg = 1`. Only differences of `L` enter, so
//! nothing overflows however large `ψ` gets.

use crate::error::{Error, Result};
use crate::geometry::{radial_laplacian, WarpModel};
use crate::solver::{Boundary, RadialGrid};

/// Largest log-density the default `r_max` reaches.
pub const DEFAULT_LOG_CUTOFF: f64 = 700.0;
/// Relative agreement between successive extrapolations.
pub const REFINE_TOLERANCE: f64 = 1e-8;
const MAX_LEVELS: usize = 12;
const TAIL_TERMS: usize = 12;

/// `r_max` with `(n−1) r_max^{2+ε} = 700`.
pub fn default_r_max(epsilon: f64, n: usize) -> Result<f64> {
    check_params(epsilon, n)?;
    Ok((DEFAULT_LOG_CUTOFF / (n - 1) as f64).powf(1.0 / (2.0 + epsilon)))
}

fn check_params(epsilon: f64, n: usize) -> Result<()> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Invalid(format!("epsilon = {epsilon} must be > 0")));
    }
    if n < 2 {
        return Err(Error::Invalid(format!("dimension {n} must be >= 2")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NestedF {
    pub epsilon: f64,
    pub n: usize,
    /// Uniform nodes on `[0, r_max]`.
    pub r: Vec<f64>,
    pub f: Vec<f64>,
    /// `F' = J₂`.
    pub df: Vec<f64>,
    /// `ΔF = g`, the two-level inner integral.
    pub lap: Vec<f64>,
    /// `lim_{r→∞} F`, i.e. `F(r_max)` plus the asymptotic tail.
    pub f_sup: f64,
    /// The tail part of `f_sup`.
    pub tail: f64,
    /// Final agreement between the last two extrapolations, relative to `max F`.
    pub refinement_error: f64,
    /// Internal intervals per output interval at the last level.
    pub refinement: usize,
}

/// One pass of the prefix recurrences on `m` uniform panels of `[0, r_max]`.
/// Returns `(F, J₂, g)` at every node.
fn sweep(p: f64, c: f64, r_max: f64, m: usize) -> [Vec<f64>; 3] {
    let h = r_max / m as f64;
    let big_l = |r: f64| c * r.powf(p) / p;
    let mut l_prev = 0.0;
    let (mut j1, mut g, mut j2, mut f) = (0.0, 0.0, 0.0, 0.0);
    let mut out = [Vec::with_capacity(m + 1), Vec::with_capacity(m + 1), Vec::with_capacity(m + 1)];
    out[0].push(0.0);
    out[1].push(0.0);
    out[2].push(0.0);
    for k in 1..=m {
        let l = big_l(k as f64 * h);
        let decay = (l_prev - l).exp();
        let j1_new = decay * j1 + 0.5 * h * (decay + 1.0);
        let g_new = g + 0.5 * h * (j1 + j1_new);
        let j2_new = decay * j2 + 0.5 * h * (decay * g + g_new);
        f += 0.5 * h * (j2 + j2_new);
        j1 = j1_new;
        g = g_new;
        j2 = j2_new;
        l_prev = l;
        out[0].push(f);
        out[1].push(j2);
        out[2].push(g);
    }
    out
}

/// A sum of monomials `Σ a s^e`.
#[derive(Debug, Clone, Default)]
struct Powers(Vec<(f64, f64)>);

impl Powers {
    #[cfg(test)]
    fn eval(&self, s: f64) -> f64 {
        self.0.iter().map(|(a, e)| a * s.powf(*e)).sum()
    }

    fn derivative(&self) -> Powers {
        Powers(self.0.iter().filter(|(_, e)| *e != 0.0).map(|(a, e)| (a * e, e - 1.0)).collect())
    }

    fn scale(&self, a: f64, e: f64) -> Powers {
        Powers(self.0.iter().map(|(b, f)| (a * b, e + f)).collect())
    }

    /// `∫_s^∞` of every term; all exponents must be below −1.
    fn tail_integral(&self, s: f64) -> f64 {
        self.0.iter().map(|(a, e)| -a * s.powf(e + 1.0) / (e + 1.0)).sum()
    }

    fn extend(&mut self, other: Powers) {
        self.0.extend(other.0);
    }
}

/// Slow-manifold expansion of `e^{−L(s)} ∫^s e^{L} h` for `L' = c s^q`:
/// `Σ_k (−1)^k T_k` with `T₀ = h/L'` and `T_{k+1} = T_k'/L'`.
fn slow_manifold(h: &Powers, c: f64, q: f64) -> Powers {
    let mut out = Powers::default();
    let mut t = h.scale(1.0 / c, -q);
    for k in 0..TAIL_TERMS {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        out.extend(t.scale(sign, 0.0));
        t = t.derivative().scale(1.0 / c, -q);
    }
    out
}

/// `lim F − F(R)` from the asymptotic expansions of `J₁`, `g` and `J₂`
/// beyond `R`, given `g(R)`. Returns `(tail of F, g_∞)`.
fn asymptotic_tail(p: f64, c: f64, r: f64, g_at_r: f64) -> (f64, f64) {
    let q = p - 1.0;
    let j1 = slow_manifold(&Powers(vec![(1.0, 0.0)]), c, q);
    let g_inf = g_at_r + j1.tail_integral(r);
    // g(s) = g_∞ − ∫_s^∞ J₁
    let mut g = Powers(vec![(g_inf, 0.0)]);
    g.extend(Powers(j1.0.iter().map(|(a, e)| (a / (e + 1.0), e + 1.0)).collect()));
    let j2 = slow_manifold(&g, c, q);
    (j2.tail_integral(r), g_inf)
}

/// The nested integral on `intervals` uniform intervals of `[0, r_max]`,
/// refined by doubling the internal panels with Romberg extrapolation until
/// two successive extrapolations agree to `REFINE_TOLERANCE`.
pub fn nested_f(epsilon: f64, n: usize, r_max: f64, intervals: usize) -> Result<NestedF> {
    check_params(epsilon, n)?;
    if !(r_max > 0.0) || !r_max.is_finite() {
        return Err(Error::Invalid(format!("r_max = {r_max} must be > 0")));
    }
    if intervals < 2 {
        return Err(Error::GridTooCoarse(format!("{intervals} intervals")));
    }
    let p = 2.0 + epsilon;
    let c = (n - 1) as f64 * p;
    let top = (n - 1) as f64 * r_max.powf(p);
    if !top.is_finite() || !(c * r_max.powf(p - 1.0)).is_finite() {
        return Err(Error::Overflow(format!("log-density (n-1) r^(2+eps) at r = {r_max} is not representable")));
    }
    // start where one panel spans at most half an e-fold of ψ
    let slope = c * r_max.powf(p - 1.0);
    let mut sub = 1usize;
    while slope * r_max / (intervals * sub) as f64 > 0.5 {
        sub *= 2;
    }
    let sample = |v: &[f64], s: usize| -> Vec<f64> { (0..=intervals).map(|i| v[i * s]).collect() };
    let mut rows: Vec<Vec<[Vec<f64>; 3]>> = Vec::new();
    let mut last_best: Option<[Vec<f64>; 3]> = None;
    for level in 0..MAX_LEVELS {
        let s = sub << level;
        let raw = sweep(p, c, r_max, intervals * s);
        let mut row = vec![[sample(&raw[0], s), sample(&raw[1], s), sample(&raw[2], s)]];
        if let Some(prev) = rows.last() {
            for k in 0..prev.len() {
                let w = 4f64.powi(k as i32 + 1);
                let next: [Vec<f64>; 3] = std::array::from_fn(|j| {
                    row[k][j].iter().zip(&prev[k][j]).map(|(a, b)| (w * a - b) / (w - 1.0)).collect()
                });
                row.push(next);
            }
        }
        let best = row.last().unwrap().clone();
        rows.push(row);
        if let Some(old) = &last_best {
            let scale = best[0].iter().chain(&best[2]).fold(0.0f64, |m, v| m.max(v.abs()));
            let err =
                (0..3).flat_map(|j| best[j].iter().zip(&old[j]).map(|(a, b)| (a - b).abs())).fold(0.0f64, f64::max)
                    / scale;
            if err <= REFINE_TOLERANCE {
                let [f, df, lap] = best;
                let (tail, _) = asymptotic_tail(p, c, r_max, *lap.last().unwrap());
                let f_sup = f.last().unwrap() + tail;
                let r = (0..=intervals).map(|i| r_max * i as f64 / intervals as f64).collect();
                return Ok(NestedF { epsilon, n, r, f, df, lap, f_sup, tail, refinement_error: err, refinement: s });
            }
        }
        last_best = Some(best);
    }
    Err(Error::RefinementStall(format!("no agreement to {REFINE_TOLERANCE:e} after {MAX_LEVELS} doublings")))
}

impl NestedF {
    /// The appendix model with the same `ε` and `n`.
    pub fn model(&self) -> Result<WarpModel<f64>> {
        WarpModel::appendix(self.n, self.epsilon)
    }

    /// Samples mirrored onto `[−r_max, r_max]`: `(nodes, values)` for an
    /// even function given on `[0, r_max]`.
    pub fn mirrored(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.r.len();
        let mut r = Vec::with_capacity(2 * m - 1);
        let mut out = Vec::with_capacity(2 * m - 1);
        for i in (1..m).rev() {
            r.push(-self.r[i]);
            out.push(v[i]);
        }
        r.extend_from_slice(&self.r);
        out.extend_from_slice(v);
        (r, out)
    }

    /// `inf F` over the line; `F ≥ 0` with `F(0) = 0`.
    pub fn f_inf(&self) -> f64 {
        self.f.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BilaplacianCheck {
    /// `max|Δ²F − 1|` over `|r| ∈ [0.25, 0.75 r_max]`.
    pub max_abs_residual: f64,
    /// `max|ΔF − g|` over the same window, `ΔF` from one finite-volume
    /// Laplacian of the samples.
    pub max_lap_mismatch: f64,
    pub r: Vec<f64>,
    pub lap: Vec<f64>,
    pub bilap: Vec<f64>,
}

/// Applies the finite-volume radial Laplacian twice to the samples of `F`,
/// mirrored onto the whole line.
pub fn verify_bilaplacian_one(nf: &NestedF, model: &WarpModel<f64>) -> Result<BilaplacianCheck> {
    let (r, f) = nf.mirrored(&nf.f);
    let r_max = *nf.r.last().unwrap();
    let grid = RadialGrid::new(-r_max, r_max, r.len(), Boundary::ClampedClamped)?;
    let lap = radial_laplacian(model, &f, &grid)?;
    let bilap = radial_laplacian(model, &lap, &grid)?;
    let (_, g) = nf.mirrored(&nf.lap);
    let window = |x: f64| (0.25..=0.75 * r_max).contains(&x.abs());
    let mut res = 0.0f64;
    let mut mis = 0.0f64;
    for i in 2..r.len() - 2 {
        if window(r[i]) {
            res = res.max((bilap[i] - 1.0).abs());
            mis = mis.max((lap[i] - g[i]).abs());
        }
    }
    Ok(BilaplacianCheck { max_abs_residual: res, max_lap_mismatch: mis, r, lap, bilap })
}

/// `‖F − t‖_∞` over the whole line at `samples` evenly spaced times in
/// `[0, t_max]`, using `sup F = f_sup` and `inf F` from the samples.
pub fn growth_run(nf: &NestedF, t_max: f64, samples: usize) -> Result<Vec<(f64, f64)>> {
    if !(t_max > 2.0 * nf.f_sup) {
        return Err(Error::Invalid(format!("t_max = {t_max} must exceed 2 F_sup = {}", 2.0 * nf.f_sup)));
    }
    if samples < 2 {
        return Err(Error::Invalid("need at least two samples".into()));
    }
    let lo = nf.f_inf();
    Ok((0..samples)
        .map(|k| {
            let t = t_max * k as f64 / (samples - 1) as f64;
            (t, (nf.f_sup - t).abs().max((t - lo).abs()))
        })
        .collect())
}
