//! Quadrature rules shared by the geometry and kernel layers.
//!
//! The kernel oracle deliberately avoids this module's Gauss rules and uses
//! its own trapezoid/Romberg path (see `euclid_kernel::kernel_oracle`).

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Scalar> GaussLegendre<T> {
    /// Builds the `m`-point rule by Newton iteration on `P_m` (computed in f64).
    pub fn new(m: usize) -> Self {
        assert!(m >= 1, "Gauss rule needs at least one node");
        let mut nodes = vec![0.0f64; m];
        let mut weights = vec![0.0f64; m];
        let mf = m as f64;
        for i in 0..m.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_and_derivative(m, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_and_derivative(m, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[m - 1 - i] = x;
            weights[i] = w;
            weights[m - 1 - i] = w;
        }
        if m % 2 == 1 {
            nodes[m / 2] = 0.0;
        }
        Self { nodes: nodes.into_iter().map(T::lit).collect(), weights: weights.into_iter().map(T::lit).collect() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrates `f` over `[a, b]` with a single application of the rule.
    #[inline]
    pub fn integrate<F: FnMut(T) -> T>(&self, a: T, b: T, mut f: F) -> T {
        let half = (b - a) * T::lit(0.5);
        let mid = (b + a) * T::lit(0.5);
        let mut acc = T::zero();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc = acc + *w * f(mid + half * *x);
        }
        acc * half
    }

    /// Composite rule with `panels` equal panels.
    pub fn integrate_panels<F: FnMut(T) -> T>(&self, a: T, b: T, panels: usize, mut f: F) -> T {
        let width = (b - a) / T::from_usize_lossy(panels);
        let mut acc = T::zero();
        for p in 0..panels {
            let lo = a + width * T::from_usize_lossy(p);
            acc = acc + self.integrate(lo, lo + width, &mut f);
        }
        acc
    }

    /// Doubles the panel count until two successive composite sums agree to `rel_tol`.
    pub fn integrate_refined<F: FnMut(T) -> T>(
        &self,
        a: T,
        b: T,
        rel_tol: T,
        max_panels: usize,
        mut f: F,
    ) -> Result<T> {
        let mut panels = 1;
        let mut prev = self.integrate_panels(a, b, panels, &mut f);
        while panels < max_panels {
            panels *= 2;
            let next = self.integrate_panels(a, b, panels, &mut f);
            if (next - prev).abs() <= rel_tol * next.abs() + T::min_positive_value() {
                return Ok(next);
            }
            prev = next;
        }
        Err(Error::Convergence(format!(
            "composite Gauss rule not converged with {max_panels} panels on [{}, {}]",
            a.as_f64(),
            b.as_f64()
        )))
    }
}

fn legendre_and_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Romberg integration (trapezoid + Richardson) on `[a, b]`.
pub fn romberg<F: FnMut(f64) -> f64>(
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_level: usize,
    mut f: F,
) -> Result<f64> {
    let mut prev_row: Vec<f64> = Vec::with_capacity(max_level + 1);
    let mut h = b - a;
    let mut trap = 0.5 * h * (f(a) + f(b));
    prev_row.push(trap);
    let mut intervals = 1usize;
    for level in 1..=max_level {
        let mut mid_sum = 0.0;
        for k in 0..intervals {
            mid_sum += f(a + (k as f64 + 0.5) * h);
        }
        trap = 0.5 * trap + 0.5 * h * mid_sum;
        h *= 0.5;
        intervals *= 2;
        let mut row = Vec::with_capacity(level + 1);
        row.push(trap);
        let mut factor = 1.0;
        for j in 1..=level {
            factor *= 4.0;
            let val = row[j - 1] + (row[j - 1] - prev_row[j - 1]) / (factor - 1.0);
            row.push(val);
        }
        let best = row[level];
        let prev_best = prev_row[level - 1];
        if level >= 4 && (best - prev_best).abs() <= rel_tol * best.abs() + abs_tol {
            return Ok(best);
        }
        prev_row = row;
    }
    Err(Error::Convergence(format!("Romberg not converged after {max_level} levels on [{a}, {b}]")))
}
