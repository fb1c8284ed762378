//! Radially symmetric model geometries `ds² = dr² + φ(r)² ds_N²`.
//!
//! Radial functions only see the one-dimensional operator
//! `Δf = φ^{1-n} (φ^{n-1} f')'`, so the cross-section `N` enters through its
//! volume (and, for Ricci bounds, its curvature sign).

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use crate::scalar::Scalar;
use crate::solver::grid::RadialGrid;
use crate::solver::laplacian::laplacian_operator;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    /// `r ∈ [0, ∞)`, `φ(0) = 0`, `φ'(0) = 1`.
    Pole,
    /// `r ∈ ℝ`, `φ` even and positive.
    Line,
}

/// Warp function sampled on a uniform grid starting at `r = 0`, interpolated by
/// a natural cubic spline. Line models evaluate it at `|r|`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledWarp<T> {
    h: T,
    phi: Vec<T>,
    second: Vec<T>,
}

impl<T: Scalar> SampledWarp<T> {
    pub fn new(h: T, phi: Vec<T>) -> Result<Self> {
        if phi.len() < 4 || !(h > T::zero()) {
            return Err(Error::Invalid("sampled warp needs h > 0 and at least 4 samples".into()));
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("sampled warp has non-finite samples".into()));
        }
        let m = phi.len();
        // natural spline: tridiagonal system for interior second derivatives
        let mut second = vec![T::zero(); m];
        let mut cp = vec![T::zero(); m];
        let mut dp = vec![T::zero(); m];
        let six = T::lit(6.0);
        let four = T::lit(4.0);
        for i in 1..m - 1 {
            let rhs = six * (phi[i + 1] - T::lit(2.0) * phi[i] + phi[i - 1]) / (h * h);
            let denom = four - cp[i - 1];
            cp[i] = T::one() / denom;
            dp[i] = (rhs - dp[i - 1]) / denom;
        }
        for i in (1..m - 1).rev() {
            second[i] = dp[i] - cp[i] * second[i + 1];
        }
        Ok(Self { h, phi, second })
    }

    pub fn r_max(&self) -> T {
        self.h * T::from_usize_lossy(self.phi.len() - 1)
    }

    fn eval(&self, r: T) -> Result<[T; 3]> {
        if r < T::zero() || r > self.r_max() {
            return Err(Error::Domain(format!("r = {} outside sampled warp range", r.as_f64())));
        }
        let h = self.h;
        let last = self.phi.len() - 2;
        let k = ((r / h).floor().to_usize().unwrap_or(0)).min(last);
        let a = (T::from_usize_lossy(k + 1) * h - r) / h;
        let b = T::one() - a;
        let (y0, y1) = (self.phi[k], self.phi[k + 1]);
        let (m0, m1) = (self.second[k], self.second[k + 1]);
        let six = T::lit(6.0);
        let three = T::lit(3.0);
        let phi = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / six;
        let dphi =
            (y1 - y0) / h - (three * a * a - T::one()) / six * h * m0 + (three * b * b - T::one()) / six * h * m1;
        let ddphi = a * m0 + b * m1;
        Ok([phi, dphi, ddphi])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WarpKind<T> {
    Euclidean,
    /// `φ(r) = sinh(√κ r)/√κ`.
    Hyperbolic {
        kappa: T,
    },
    /// `φ(r) = e^{|r|^{2+ε}}` on the line.
    Appendix {
        epsilon: T,
    },
    Custom(SampledWarp<T>),
}

/// `φ` and its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpValues<T> {
    pub phi: T,
    pub dphi: T,
    pub ddphi: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarpModel<T> {
    pub n: usize,
    pub kind: WarpKind<T>,
    pub topology: Topology,
    pub cross_section_volume: T,
}

/// Ball volume and volume ratio `ν(r) = V(r)/(ωₙ rⁿ)` (pole models only).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeReport<T> {
    pub r: T,
    pub volume: T,
    pub nu: Option<T>,
}

fn sphere_area<T: Scalar>(n: usize) -> T {
    let h = n as f64 / 2.0;
    T::lit(2.0 * std::f64::consts::PI.powf(h) / libm::tgamma(h))
}

impl<T: Scalar> WarpModel<T> {
    /// Flat `ℝⁿ`. For `n = 1` this is the line with `φ ≡ 1`.
    pub fn euclidean(n: usize) -> Result<Self> {
        match n {
            0 => Err(Error::Invalid("dimension must be >= 1".into())),
            1 => Ok(Self { n, kind: WarpKind::Euclidean, topology: Topology::Line, cross_section_volume: T::one() }),
            _ => Ok(Self {
                n,
                kind: WarpKind::Euclidean,
                topology: Topology::Pole,
                cross_section_volume: sphere_area(n),
            }),
        }
    }

    /// Space form of sectional curvature `-κ` (Ricci bound `(n-1)κ`).
    pub fn hyperbolic(n: usize, kappa: T) -> Result<Self> {
        if n < 2 {
            return Err(Error::Invalid("hyperbolic model needs n >= 2".into()));
        }
        if !(kappa >= T::zero()) || !kappa.is_finite() {
            return Err(Error::Invalid(format!("curvature scale {} must be >= 0", kappa.as_f64())));
        }
        Ok(Self {
            n,
            kind: WarpKind::Hyperbolic { kappa },
            topology: Topology::Pole,
            cross_section_volume: sphere_area(n),
        })
    }

    /// Line model `φ = e^{|r|^{2+ε}}` with unit cross-section volume.
    pub fn appendix(n: usize, epsilon: T) -> Result<Self> {
        if n < 1 {
            return Err(Error::Invalid("dimension must be >= 1".into()));
        }
        if !(epsilon > T::zero()) || !epsilon.is_finite() {
            return Err(Error::Invalid(format!("epsilon = {} must be > 0", epsilon.as_f64())));
        }
        Ok(Self { n, kind: WarpKind::Appendix { epsilon }, topology: Topology::Line, cross_section_volume: T::one() })
    }

    pub fn custom(n: usize, topology: Topology, warp: SampledWarp<T>, cross_section_volume: T) -> Result<Self> {
        let model = Self { n, kind: WarpKind::Custom(warp), topology, cross_section_volume };
        let v0 = model.warp_eval(T::zero())?;
        let tol = T::lit(1e-6).max(T::epsilon().sqrt());
        match topology {
            Topology::Pole if v0.phi.abs() > tol || (v0.dphi - T::one()).abs() > T::lit(1e-3) => {
                Err(Error::Invalid("pole topology needs phi(0) = 0 and phi'(0) = 1".into()))
            }
            Topology::Line if v0.phi <= T::zero() => Err(Error::Invalid("line topology needs phi(0) > 0".into())),
            _ => Ok(model),
        }
    }

    pub fn with_cross_section_volume(mut self, v: T) -> Self {
        self.cross_section_volume = v;
        self
    }

    fn check_domain(&self, r: T) -> Result<()> {
        if !r.is_finite() {
            return Err(Error::Domain("radius must be finite".into()));
        }
        if self.topology == Topology::Pole && r < T::zero() {
            return Err(Error::Domain(format!("r = {} < 0 on a pole model", r.as_f64())));
        }
        Ok(())
    }

    fn flat_line(&self) -> bool {
        matches!(self.kind, WarpKind::Euclidean) && self.topology == Topology::Line
    }

    /// `φ, φ', φ''` at `r` in closed form for the built-in kinds.
    pub fn warp_eval(&self, r: T) -> Result<WarpValues<T>> {
        self.check_domain(r)?;
        let (phi, dphi, ddphi) = match &self.kind {
            WarpKind::Euclidean if self.flat_line() => (T::one(), T::zero(), T::zero()),
            WarpKind::Euclidean => (r, T::one(), T::zero()),
            WarpKind::Hyperbolic { kappa } => {
                if *kappa == T::zero() {
                    (r, T::one(), T::zero())
                } else {
                    let s = kappa.sqrt();
                    ((s * r).sinh() / s, (s * r).cosh(), s * (s * r).sinh())
                }
            }
            WarpKind::Appendix { epsilon } => {
                let p = T::lit(2.0) + *epsilon;
                let a = r.abs();
                let phi = a.powf(p).exp();
                let d = p * a.powf(p - T::one()) * r.signum() * phi;
                let dd = (p * (p - T::one()) * a.powf(p - T::lit(2.0)) + p * p * a.powf(T::lit(2.0) * p - T::lit(2.0)))
                    * phi;
                (phi, if a == T::zero() { T::zero() } else { d }, dd)
            }
            WarpKind::Custom(w) => {
                let [f, d, dd] = w.eval(r.abs())?;
                let sign = if self.topology == Topology::Line { r.signum() } else { T::one() };
                (f, d * sign, dd)
            }
        };
        Ok(WarpValues { phi, dphi, ddphi })
    }

    /// `ln φ(r)`; finite where `φ` itself would overflow.
    pub fn log_phi(&self, r: T) -> Result<T> {
        self.check_domain(r)?;
        Ok(match &self.kind {
            WarpKind::Euclidean if self.flat_line() => T::zero(),
            WarpKind::Euclidean => r.ln(),
            WarpKind::Hyperbolic { kappa } => {
                if *kappa == T::zero() {
                    r.ln()
                } else {
                    let s = kappa.sqrt();
                    let x = s * r;
                    if x < T::lit(20.0) {
                        (x.sinh() / s).ln()
                    } else {
                        x + (T::one() - (-(x + x)).exp()).ln() - (s + s).ln()
                    }
                }
            }
            WarpKind::Appendix { epsilon } => r.abs().powf(T::lit(2.0) + *epsilon),
            WarpKind::Custom(w) => w.eval(r.abs())?[0].ln(),
        })
    }

    /// `ln ψ(r)` with `ψ = φ^{n-1}` the radial density.
    pub fn log_density(&self, r: T) -> Result<T> {
        if self.n == 1 {
            self.check_domain(r)?;
            return Ok(T::zero());
        }
        Ok(T::from_usize_lossy(self.n - 1) * self.log_phi(r)?)
    }

    /// `(φ'/φ, φ''/φ, φ^{-2})`, evaluated without forming `φ` when it is huge.
    fn curvature_ratios(&self, r: T) -> Result<(T, T, T)> {
        match &self.kind {
            WarpKind::Appendix { epsilon } => {
                let p = T::lit(2.0) + *epsilon;
                let a = r.abs();
                let d = p * a.powf(p - T::one()) * r.signum();
                let dd = p * (p - T::one()) * a.powf(p - T::lit(2.0)) + p * p * a.powf(T::lit(2.0) * p - T::lit(2.0));
                Ok((d, dd, (-(a.powf(p) * T::lit(2.0))).exp()))
            }
            _ => {
                let v = self.warp_eval(r)?;
                Ok((v.dphi / v.phi, v.ddphi / v.phi, T::one() / (v.phi * v.phi)))
            }
        }
    }

    /// Mean curvature `(n-1)φ'/φ` of the level sphere at radius `r`.
    pub fn mean_curvature(&self, r: T) -> Result<T> {
        self.check_domain(r)?;
        if self.n == 1 {
            return Ok(T::zero());
        }
        let (d, _, _) = self.curvature_ratios(r)?;
        Ok(T::from_usize_lossy(self.n - 1) * d)
    }

    /// Curvature of the cross-section used in the tangential Ricci term:
    /// the unit sphere for pole models, a flat closed manifold for line models.
    fn cross_section_curvature(&self) -> T {
        match self.topology {
            Topology::Pole => T::one(),
            Topology::Line => T::zero(),
        }
    }

    /// Pointwise `max(0, -min Ric)` at radius `r`.
    fn ricci_deficit(&self, r: T) -> Result<T> {
        if self.n == 1 {
            return Ok(T::zero());
        }
        let (d, dd, inv2) = self.curvature_ratios(r)?;
        let nm1 = T::from_usize_lossy(self.n - 1);
        let nm2 = T::from_usize_lossy(self.n - 2);
        let radial = nm1 * dd;
        let tangential = dd + nm2 * (d * d - self.cross_section_curvature() * inv2);
        Ok(T::zero().max(radial).max(tangential))
    }

    /// Nondecreasing `K(r)` with `Ric ≥ -K(r)` on the ball of radius `r`.
    pub fn ricci_lower_bound(&self, r: T) -> Result<T> {
        self.check_domain(r)?;
        match &self.kind {
            WarpKind::Euclidean => return Ok(T::zero()),
            WarpKind::Hyperbolic { kappa } => return Ok(T::from_usize_lossy(self.n - 1) * *kappa),
            _ => {}
        }
        let r = r.abs();
        const SAMPLES: usize = 512;
        let mut k = T::zero();
        for j in 0..=SAMPLES {
            let s = r * T::from_usize_lossy(j) / T::from_usize_lossy(SAMPLES);
            if self.topology == Topology::Pole && s == T::zero() {
                continue;
            }
            k = k.max(self.ricci_deficit(s)?);
        }
        Ok(k)
    }

    /// Ball volume about the origin and, on pole models, the volume ratio.
    pub fn volume_report(&self, r: T) -> Result<VolumeReport<T>> {
        if !(r > T::zero()) || !r.is_finite() {
            return Err(Error::Domain(format!("volume radius {} must be > 0", r.as_f64())));
        }
        let g = GaussLegendre::<T>::new(20);
        let tol = (T::epsilon() * T::lit(1000.0)).max(T::lit(1e-13));
        let integral = g.integrate_refined(T::zero(), r, tol, 1 << 16, |s| {
            self.log_density(s).map(|l| l.exp()).unwrap_or(T::nan())
        })?;
        let factor = match self.topology {
            Topology::Pole => T::one(),
            Topology::Line => T::lit(2.0),
        };
        let volume = self.cross_section_volume * factor * integral;
        if !volume.is_finite() {
            return Err(Error::Overflow(format!("ball volume at r = {} not representable", r.as_f64())));
        }
        let nu = match self.topology {
            Topology::Pole => {
                let omega = sphere_area::<T>(self.n) / T::from_usize_lossy(self.n);
                Some(volume / (omega * r.powi(self.n as i32)))
            }
            Topology::Line => None,
        };
        Ok(VolumeReport { r, volume, nu })
    }
}

/// Divergence-form discrete Laplacian of `f` on `grid`.
///
/// Interior rows are second-order accurate; end rows follow the grid's
/// boundary kind (pole row, zero flux, or the clamped closure).
pub fn radial_laplacian<T: Scalar>(model: &WarpModel<T>, f: &[T], grid: &RadialGrid<T>) -> Result<Vec<T>> {
    if f.len() < 4 {
        return Err(Error::GridTooCoarse(format!("{} nodes, need at least 4", f.len())));
    }
    if f.len() != grid.node_count {
        return Err(Error::Invalid(format!("field has {} values for {} nodes", f.len(), grid.node_count)));
    }
    let op = laplacian_operator(model, grid)?;
    Ok(op.apply(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let e = WarpModel::<f64>::euclidean(3).unwrap();
        assert_eq!(e.warp_eval(2.0).unwrap(), WarpValues { phi: 2.0, dphi: 1.0, ddphi: 0.0 });
        let h = WarpModel::<f64>::hyperbolic(3, 1.0).unwrap();
        assert_eq!(h.warp_eval(0.0).unwrap(), WarpValues { phi: 0.0, dphi: 1.0, ddphi: 0.0 });
        assert!(matches!(h.warp_eval(-1.0), Err(Error::Domain(_))));
        let a = WarpModel::<f64>::appendix(2, 1.0).unwrap();
        let v = a.warp_eval(1.0).unwrap();
        let e1 = std::f64::consts::E;
        assert!((v.phi - e1).abs() < 1e-15 && (v.dphi - 3.0 * e1).abs() < 1e-14 && (v.ddphi - 15.0 * e1).abs() < 1e-13);
    }

    #[test]
    fn log_phi_is_stable() {
        let h = WarpModel::<f64>::hyperbolic(2, 4.0).unwrap();
        for &r in &[0.1, 5.0, 9.9, 10.1, 300.0] {
            let direct = if r < 100.0 { h.warp_eval(r).unwrap().phi.ln() } else { 2.0 * r - 4f64.ln() };
            assert!((h.log_phi(r).unwrap() - direct).abs() < 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn ricci_bounds() {
        let e = WarpModel::<f64>::euclidean(4).unwrap();
        assert_eq!(e.ricci_lower_bound(3.0).unwrap(), 0.0);
        let h = WarpModel::<f64>::hyperbolic(3, 1.0).unwrap();
        assert_eq!(h.ricci_lower_bound(3.0).unwrap(), 2.0);
        // generic formula agrees with the closed form for the space form
        assert!((h.ricci_deficit(2.0).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn spline_reproduces_cubic() {
        // natural spline is exact on linear data
        let w = SampledWarp::new(0.1, (0..50).map(|i| 1.0 + 0.3 * i as f64 * 0.1).collect()).unwrap();
        let [f, d, dd] = w.eval(2.345).unwrap();
        assert!((f - (1.0 + 0.3 * 2.345)).abs() < 1e-13 && (d - 0.3).abs() < 1e-12 && dd.abs() < 1e-12);
    }
}
