//! Finite-volume assembly of `Δf = ψ⁻¹(ψ f')'`, `ψ = φ^{n-1}`.
//!
//! Node `i` owns the dual cell `[r_i - h/2, r_i + h/2]` clipped to the grid.
//! With `V_i = ∫_cell ψ`, the row is
//! `(Δf)_i = (ψ(r_{i+½})(f_{i+1}-f_i) - ψ(r_{i-½})(f_i-f_{i-1})) / (h V_i)`,
//! and the measure weight is `w_i = |N| V_i`, so `w_i L_{i,i+1} = w_{i+1} L_{i+1,i}`.
//! All density ratios are formed from `ln ψ`, so huge warps do not overflow.

use crate::banded::BandedMatrix;
use crate::error::{Error, Result};
use crate::geometry::WarpModel;
use crate::quadrature::GaussLegendre;
use crate::scalar::Scalar;
use crate::solver::grid::{Boundary, RadialGrid};

const CELL_POINTS: usize = 8;

#[derive(Debug, Clone)]
pub struct LaplacianOperator<T> {
    pub matrix: BandedMatrix<T>,
    pub weights: Vec<T>,
    /// Face coefficients `c⁺_i = L_{i,i+1}`, `c⁻_i = L_{i,i-1}` (zero where absent).
    pub upper: Vec<T>,
    pub lower: Vec<T>,
}

impl<T: Scalar> LaplacianOperator<T> {
    /// `L f` in flux form `c⁺(f_{i+1} - f_i) + c⁻(f_{i-1} - f_i)`; exact zero on constants.
    pub fn apply(&self, f: &[T]) -> Vec<T> {
        flux_apply(&self.upper, &self.lower, f)
    }
}

pub(crate) fn flux_apply<T: Scalar>(upper: &[T], lower: &[T], f: &[T]) -> Vec<T> {
    let m = f.len();
    (0..m)
        .map(|i| {
            let mut acc = T::zero();
            if i + 1 < m {
                acc = acc + upper[i] * (f[i + 1] - f[i]);
            }
            if i > 0 {
                acc = acc + lower[i] * (f[i - 1] - f[i]);
            }
            acc
        })
        .collect()
}

/// `∫_a^b exp(ln ψ(s) - shift) ds`.
fn cell_integral<T: Scalar>(g: &GaussLegendre<T>, model: &WarpModel<T>, a: T, b: T, shift: T) -> Result<T> {
    let mut err = None;
    let v = g.integrate(a, b, |s| match model.log_density(s) {
        Ok(l) => (l - shift).exp(),
        Err(e) => {
            err = Some(e);
            T::zero()
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

pub fn laplacian_operator<T: Scalar>(model: &WarpModel<T>, grid: &RadialGrid<T>) -> Result<LaplacianOperator<T>> {
    grid.check_model(model)?;
    let m = grid.node_count;
    let h = grid.h;
    let half = h / T::lit(2.0);
    let g = GaussLegendre::<T>::new(CELL_POINTS);
    let pole = grid.boundary == Boundary::PoleClamped;
    let mut matrix = BandedMatrix::zeros(m, 1, 1);
    let mut weights = vec![T::zero(); m];
    let mut upper = vec![T::zero(); m];
    let mut lower = vec![T::zero(); m];
    let cs = model.cross_section_volume;

    for i in 0..m {
        let r = grid.node(i);
        let lo = if i == 0 { r } else { r - half };
        let hi = if i + 1 == m { r } else { r + half };
        // the pole density vanishes; use the cell's outer face as reference
        let (shift, left_face) = if pole && i == 0 {
            (model.log_density(hi)?, None)
        } else {
            (model.log_density(r)?, if i > 0 { Some(model.log_density(lo)?) } else { None })
        };
        let vol = cell_integral(&g, model, lo, hi, shift)?;
        if !(vol > T::zero()) {
            return Err(Error::Invalid(format!("degenerate cell volume at node {i}")));
        }
        let w = cs * shift.exp() * vol;
        if !w.is_finite() {
            return Err(Error::Overflow(format!("measure weight at r = {} not representable", r.as_f64())));
        }
        weights[i] = w;
        let mut diag = T::zero();
        if i + 1 < m {
            let c = (model.log_density(hi)? - shift).exp() / (h * vol);
            matrix.set(i, i + 1, c);
            upper[i] = c;
            diag = diag - c;
        }
        if let Some(lf) = left_face {
            let c = (lf - shift).exp() / (h * vol);
            matrix.set(i, i - 1, c);
            lower[i] = c;
            diag = diag - c;
        }
        matrix.set(i, i, diag);
    }
    Ok(LaplacianOperator { matrix, weights, upper, lower })
}
