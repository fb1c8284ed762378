use crate::banded::BandedMatrix;
use crate::error::Result;
use crate::geometry::WarpModel;
use crate::scalar::Scalar;
use crate::solver::grid::RadialGrid;
use crate::solver::laplacian::{flux_apply, laplacian_operator};

/// Assembled operators on a fixed grid.
///
/// Clamped ends hold the two outermost nodes at zero. The bilaplacian then
/// acts on the active nodes `A` as `B = L_{AE} L_{EA}`, where `E` adds the
/// first clamped node to `A`: `Δu` is formed wherever the stencil reaches and
/// applied again only on `A`. In the weighted inner product this gives
/// `⟨Bu, u⟩_w = Σ_{k∈E} w_k (Lu)_k² ≥ 0`.
#[derive(Debug, Clone)]
pub struct Discretization<T> {
    pub model: WarpModel<T>,
    pub grid: RadialGrid<T>,
    pub weights: Vec<T>,
    pub laplacian: BandedMatrix<T>,
    upper: Vec<T>,
    lower: Vec<T>,
    pub bilaplacian: BandedMatrix<T>,
    pub active: Vec<bool>,
    pub extended: Vec<bool>,
}

pub fn build_discretization<T: Scalar>(model: &WarpModel<T>, grid: &RadialGrid<T>) -> Result<Discretization<T>> {
    let op = laplacian_operator(model, grid)?;
    let m = grid.node_count;
    let mut active = vec![true; m];
    let mut extended = vec![true; m];
    if grid.boundary.left_clamped() {
        active[0] = false;
        active[1] = false;
        extended[0] = false;
    }
    if grid.boundary.right_clamped() {
        active[m - 1] = false;
        active[m - 2] = false;
        extended[m - 1] = false;
    }
    let mask = |rows: &[bool], cols: &[bool]| {
        let mut out = op.matrix.clone();
        for i in 0..m {
            for j in out.row_range(i) {
                if !rows[i] || !cols[j] {
                    out.set(i, j, T::zero());
                }
            }
        }
        out
    };
    let left = mask(&active, &extended);
    let right = mask(&extended, &active);
    let bilaplacian = left.mul(&right);
    Ok(Discretization {
        model: model.clone(),
        grid: *grid,
        weights: op.weights,
        laplacian: op.matrix,
        upper: op.upper,
        lower: op.lower,
        bilaplacian,
        active,
        extended,
    })
}

impl<T: Scalar> Discretization<T> {
    pub fn len(&self) -> usize {
        self.grid.node_count
    }

    pub fn is_empty(&self) -> bool {
        self.grid.node_count == 0
    }

    pub fn nodes(&self) -> Vec<T> {
        self.grid.nodes()
    }

    /// `Σ w_i u_i v_i`.
    pub fn inner(&self, u: &[T], v: &[T]) -> T {
        self.weights.iter().zip(u).zip(v).map(|((&w, &a), &b)| w * a * b).sum()
    }

    pub fn mass(&self, u: &[T]) -> T {
        self.weights.iter().zip(u).map(|(&w, &a)| w * a).sum()
    }

    pub fn l2_norm(&self, u: &[T]) -> T {
        self.inner(u, u).sqrt()
    }

    /// Zero the clamped nodes.
    pub fn project(&self, u: &mut [T]) {
        for (x, &a) in u.iter_mut().zip(&self.active) {
            if !a {
                *x = T::zero();
            }
        }
    }

    /// `L u` with `u` restricted to the active nodes, kept on `E`.
    pub fn apply_laplacian(&self, u: &[T]) -> Vec<T> {
        let mut v = u.to_vec();
        self.project(&mut v);
        let mut out = flux_apply(&self.upper, &self.lower, &v);
        for (x, &e) in out.iter_mut().zip(&self.extended) {
            if !e {
                *x = T::zero();
            }
        }
        out
    }

    /// `B u` as two flux-form Laplacians; agrees with the assembled matrix up
    /// to round-off but keeps the discrete mass balance tighter.
    pub fn apply_bilaplacian(&self, u: &[T]) -> Vec<T> {
        let mut out = flux_apply(&self.upper, &self.lower, &self.apply_laplacian(u));
        self.project(&mut out);
        out
    }

    /// `Σ_{k∈E} w_k (Δ^m u)_k²`, the discrete `m`-th energy.
    pub fn energy(&self, u: &[T], m: usize) -> T {
        let mut v = u.to_vec();
        self.project(&mut v);
        for _ in 0..m {
            v = self.apply_laplacian(&v);
        }
        self.inner(&v, &v)
    }

    /// Boundary flux `Σ_{k∈E} w_k (L 1_A)_k (L v)_k`; equals `Σ_A w (Bv)`
    /// and vanishes for reflecting ends.
    pub fn boundary_flux(&self, v: &[T]) -> T {
        let ones: Vec<T> = self.active.iter().map(|&a| if a { T::one() } else { T::zero() }).collect();
        let l1 = self.apply_laplacian(&ones);
        let lv = self.apply_laplacian(v);
        let mut s = T::zero();
        for k in 0..self.len() {
            if self.extended[k] && l1[k] != T::zero() {
                s = s + self.weights[k] * l1[k] * lv[k];
            }
        }
        s
    }

    /// Active nodes next to a clamped end (or the end nodes of a reflecting grid).
    pub fn rim_nodes(&self) -> Vec<usize> {
        let m = self.len();
        let mut out = Vec::new();
        let b = self.grid.boundary;
        if b.left_clamped() {
            out.extend([2, 3]);
        } else if b == crate::solver::grid::Boundary::ReflectBoth {
            out.push(0);
        }
        if b.right_clamped() {
            out.extend([m - 3, m - 4]);
        } else {
            out.push(m - 1);
        }
        out
    }
}
