//! Square banded matrices and LU factorization with partial pivoting.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Square matrix with `kl` sub-diagonals and `ku` super-diagonals.
///
/// Row `i` stores columns `i - kl ..= i + ku` contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandedMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self { n, kl, ku, data: vec![T::zero(); n * (kl + ku + 1)] }
    }

    pub fn identity(n: usize, kl: usize, ku: usize) -> Self {
        let mut m = Self::zeros(n, kl, ku);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.kl + self.ku + 1) + (j + self.kl - i)
    }

    /// Entry `(i, j)`; zero outside the band.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        if self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            T::zero()
        }
    }

    /// Sets entry `(i, j)`. Panics outside the band.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    /// Columns with (possibly) nonzero entries in row `i`.
    #[inline]
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n)
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for j in self.row_range(i) {
                acc = acc + self.data[self.idx(i, j)] * x[j];
            }
            *yi = acc;
        }
    }

    /// Product `self * other`; bandwidths add.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut out = Self::zeros(self.n, self.kl + other.kl, self.ku + other.ku);
        for i in 0..self.n {
            for k in self.row_range(i) {
                let a = self.get(i, k);
                if a == T::zero() {
                    continue;
                }
                for j in other.row_range(k) {
                    let v = out.get(i, j) + a * other.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    /// `alpha * self + beta * I`.
    pub fn scaled_plus_identity(&self, alpha: T, beta: T) -> Self {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v = *v * alpha;
        }
        for i in 0..self.n {
            let v = out.get(i, i) + beta;
            out.set(i, i, v);
        }
        out
    }

    /// LU factorization with row partial pivoting.
    pub fn factor(&self) -> Result<BandedLu<T>> {
        BandedLu::new(self)
    }
}

/// Packed LU factors of a banded matrix. `U` has upper bandwidth `kl + ku`.
#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    width: usize,
    // row i holds columns i ..= i + kl + ku of U
    upper: Vec<T>,
    // column k holds multipliers for rows k+1 ..= k+kl
    lower: Vec<T>,
    pivots: Vec<usize>,
}

impl<T: Scalar> BandedLu<T> {
    fn new(a: &BandedMatrix<T>) -> Result<Self> {
        let n = a.n;
        let kl = a.kl;
        let width = a.kl + a.ku + 1;
        // working rows store columns i - kl ..= i + kl + ku
        let wrow = 2 * kl + a.ku + 1;
        let mut work = vec![T::zero(); n * wrow];
        let at = |i: usize, j: usize| i * wrow + (j + kl - i);
        for i in 0..n {
            for j in a.row_range(i) {
                work[at(i, j)] = a.get(i, j);
            }
        }
        let mut lower = vec![T::zero(); n * kl.max(1)];
        let mut pivots = vec![0usize; n];
        let scale = a.data.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = work[at(k, k)].abs();
            for i in k + 1..=last {
                let v = work[at(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == T::zero() || best <= scale * T::epsilon() * T::lit(1e-3) {
                return Err(Error::Singular(k));
            }
            pivots[k] = p;
            let jmax = (k + kl + a.ku).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    work.swap(at(k, j), at(p, j));
                }
            }
            let piv = work[at(k, k)];
            for i in k + 1..=last {
                let m = work[at(i, k)] / piv;
                lower[k * kl.max(1) + (i - k - 1)] = m;
                if m != T::zero() {
                    for j in k + 1..=jmax {
                        let v = work[at(i, j)] - m * work[at(k, j)];
                        work[at(i, j)] = v;
                    }
                }
                work[at(i, k)] = T::zero();
            }
        }
        let uw = width;
        let mut upper = vec![T::zero(); n * uw];
        for i in 0..n {
            for j in i..(i + uw).min(n) {
                upper[i * uw + (j - i)] = work[at(i, j)];
            }
        }
        Ok(Self { n, kl, width, upper, lower, pivots })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let kl = self.kl;
        let stride = kl.max(1);
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != T::zero() {
                for i in k + 1..=(k + kl).min(n - 1) {
                    b[i] = b[i] - self.lower[k * stride + (i - k - 1)] * bk;
                }
            }
        }
        let uw = self.width;
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in i + 1..(i + uw).min(n) {
                acc = acc - self.upper[i * uw + (j - i)] * b[j];
            }
            b[i] = acc / self.upper[i * uw];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_of(m: &BandedMatrix<f64>) -> Vec<Vec<f64>> {
        (0..m.dim()).map(|i| (0..m.dim()).map(|j| m.get(i, j)).collect()).collect()
    }

    #[test]
    fn solve_needs_pivoting() {
        // zero leading diagonal forces a row swap
        let mut a = BandedMatrix::<f64>::zeros(4, 1, 1);
        a.set(0, 0, 0.0);
        a.set(0, 1, 2.0);
        a.set(1, 0, 3.0);
        a.set(1, 1, 1.0);
        a.set(1, 2, -1.0);
        a.set(2, 1, 4.0);
        a.set(2, 2, 5.0);
        a.set(2, 3, 1.0);
        a.set(3, 2, 2.0);
        a.set(3, 3, 7.0);
        let x = vec![1.0, -2.0, 0.5, 3.0];
        let b = a.matvec(&x);
        let got = a.factor().unwrap().solve(&b);
        for (g, e) in got.iter().zip(&x) {
            assert!((g - e).abs() < 1e-13, "{got:?}");
        }
    }

    #[test]
    fn product_matches_dense() {
        let mut a = BandedMatrix::<f64>::zeros(5, 1, 1);
        for i in 0..5 {
            a.set(i, i, -2.0 + i as f64 * 0.1);
            if i > 0 {
                a.set(i, i - 1, 1.0 + i as f64);
            }
            if i < 4 {
                a.set(i, i + 1, 0.5);
            }
        }
        let p = a.mul(&a);
        let d = dense_of(&a);
        for i in 0..5 {
            for j in 0..5 {
                let e: f64 = (0..5).map(|k| d[i][k] * d[k][j]).sum();
                assert!((p.get(i, j) - e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn singular_is_reported() {
        let a = BandedMatrix::<f64>::zeros(3, 1, 1);
        assert!(matches!(a.factor(), Err(Error::Singular(0))));
    }
}
