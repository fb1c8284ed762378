use crate::error::{Error, Result};
use crate::geometry::{Topology, WarpModel};
use crate::scalar::Scalar;

/// End conditions of a radial grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Regular pole at `r = 0`, clamped outer end.
    PoleClamped,
    ClampedClamped,
    /// Even reflection (zero flux) at both ends.
    ReflectBoth,
}

impl Boundary {
    pub fn left_clamped(self) -> bool {
        self == Boundary::ClampedClamped
    }

    pub fn right_clamped(self) -> bool {
        self != Boundary::ReflectBoth
    }
}

/// Uniform nodes `r_min + i h`, `i = 0..node_count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialGrid<T> {
    pub r_min: T,
    pub r_max: T,
    pub node_count: usize,
    pub h: T,
    pub boundary: Boundary,
}

impl<T: Scalar> RadialGrid<T> {
    pub fn new(r_min: T, r_max: T, node_count: usize, boundary: Boundary) -> Result<Self> {
        if node_count < 16 {
            return Err(Error::GridTooCoarse(format!("{node_count} nodes, need at least 16")));
        }
        if !(r_max > r_min) || !r_min.is_finite() || !r_max.is_finite() {
            return Err(Error::Invalid(format!("empty interval [{}, {}]", r_min.as_f64(), r_max.as_f64())));
        }
        if boundary == Boundary::PoleClamped && r_min != T::zero() {
            return Err(Error::Topology("pole boundary needs r_min = 0".into()));
        }
        let h = (r_max - r_min) / T::from_usize_lossy(node_count - 1);
        Ok(Self { r_min, r_max, node_count, h, boundary })
    }

    /// Pole grid `[0, r_max]` with a clamped outer end.
    pub fn pole(r_max: T, node_count: usize) -> Result<Self> {
        Self::new(T::zero(), r_max, node_count, Boundary::PoleClamped)
    }

    pub fn node(&self, i: usize) -> T {
        if i + 1 == self.node_count {
            self.r_max
        } else {
            self.r_min + T::from_usize_lossy(i) * self.h
        }
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.node_count).map(|i| self.node(i)).collect()
    }

    /// Index of the node nearest to `r`, clamped to the grid.
    pub fn nearest(&self, r: T) -> usize {
        let x = ((r - self.r_min) / self.h).round();
        if x <= T::zero() {
            0
        } else {
            x.to_usize().unwrap_or(usize::MAX).min(self.node_count - 1)
        }
    }

    pub fn check_model(&self, model: &WarpModel<T>) -> Result<()> {
        match (model.topology, self.boundary) {
            (Topology::Line, Boundary::PoleClamped) => Err(Error::Topology("pole boundary on a line model".into())),
            (Topology::Pole, Boundary::PoleClamped) => Ok(()),
            (Topology::Pole, _) if self.r_min <= T::zero() => {
                Err(Error::Topology("pole model grids must start at r = 0 with a pole boundary, or at r > 0".into()))
            }
            _ => Ok(()),
        }
    }
}
