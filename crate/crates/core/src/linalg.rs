//! Small dense square matrices and a cyclic Jacobi eigensolver.
//!
//! Matrices here are `n x n` with `n` the hypersurface dimension, so they
//! are tiny; everything is stored row-major in a `Vec`.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> SquareMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, T::one())
    }

    pub fn scaled_identity(n: usize, s: T) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = s;
        }
        m
    }

    pub fn diagonal(values: &[T]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row slices. Panics if the rows are ragged.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            assert_eq!(row.len(), n, "matrix rows must have length {n}");
            data.extend_from_slice(row);
        }
        Self { n, data }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    /// `v v^T`.
    pub fn outer(v: &[T]) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: T) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&x| x * s).collect() }
    }

    pub fn trace(&self) -> T {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    /// Frobenius inner product `sum_ij a_ij b_ij`.
    pub fn contract(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum()
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().map(|x| x.abs()).fold(T::zero(), T::max)
    }

    /// Largest deviation from symmetry, `max |a_ij - a_ji|`.
    pub fn asymmetry(&self) -> T {
        self.max_abs_diff(&self.transpose())
    }

    pub fn symmetrized(&self) -> Self {
        Self::from_fn(self.n, |i, j| (self[(i, j)] + self[(j, i)]) * T::lit(0.5))
    }

    /// `Q diag(values) Q^T` where the columns of `q` are the eigenvectors.
    pub fn from_spectrum(values: &[T], q: &Self) -> Self {
        let n = q.n;
        Self::from_fn(n, |i, j| (0..n).map(|k| q[(i, k)] * values[k] * q[(j, k)]).sum())
    }

    pub fn column(&self, k: usize) -> Vec<T> {
        (0..self.n).map(|i| self[(i, k)]).collect()
    }

    /// Eigen-decomposition of the symmetric part of `self`, eigenvalues
    /// sorted in descending order.
    pub fn sym_eigen(&self) -> SymEigen<T> {
        jacobi_eigen(&self.symmetrized())
    }

    /// Eigenvalues of the symmetric part, descending.
    pub fn sym_eigenvalues(&self) -> Vec<T> {
        self.sym_eigen().values
    }
}

impl<T> Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> IndexMut<(usize, usize)> for SquareMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

impl<T: Real> Mul for &SquareMatrix<T> {
    type Output = SquareMatrix<T>;
    fn mul(self, rhs: Self) -> SquareMatrix<T> {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        SquareMatrix::from_fn(n, |i, j| (0..n).map(|k| self[(i, k)] * rhs[(k, j)]).sum())
    }
}

impl<T: Real> Add for &SquareMatrix<T> {
    type Output = SquareMatrix<T>;
    fn add(self, rhs: Self) -> SquareMatrix<T> {
        assert_eq!(self.n, rhs.n);
        SquareMatrix {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect(),
        }
    }
}

impl<T: Real> Sub for &SquareMatrix<T> {
    type Output = SquareMatrix<T>;
    fn sub(self, rhs: Self) -> SquareMatrix<T> {
        assert_eq!(self.n, rhs.n);
        SquareMatrix {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect(),
        }
    }
}

/// Eigenpairs of a symmetric matrix. `vectors` holds one eigenvector per
/// column, in the same (descending) order as `values`.
#[derive(Clone, Debug)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    pub vectors: SquareMatrix<T>,
}

const MAX_SWEEPS: usize = 64;

fn jacobi_eigen<T: Real>(a: &SquareMatrix<T>) -> SymEigen<T> {
    let n = a.dim();
    let mut m = a.clone();
    let mut v = SquareMatrix::identity(n);
    let scale = m.max_abs().max(T::min_positive_value());
    let threshold = T::epsilon() * scale * T::lit(1e-2);

    for _ in 0..MAX_SWEEPS {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)].abs())
            .fold(T::zero(), T::max);
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= threshold {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (apq + apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].partial_cmp(&m[(i, i)]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = SquareMatrix::from_fn(n, |row, col| v[(row, order[col])]);
    SymEigen { values, vectors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two_closed_form() {
        let a = SquareMatrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]);
        let eig = a.sym_eigen();
        let mean = 1.5;
        let rad = (0.25f64 + 0.09).sqrt();
        assert!((eig.values[0] - (mean + rad)).abs() < 1e-14);
        assert!((eig.values[1] - (mean - rad)).abs() < 1e-14);
    }

    #[test]
    fn diagonal_is_sorted_descending() {
        let a = SquareMatrix::diagonal(&[1.0, 4.0, 2.5]);
        assert_eq!(a.sym_eigenvalues(), vec![4.0, 2.5, 1.0]);
    }

    #[test]
    fn works_in_single_precision() {
        let a = SquareMatrix::from_rows(&[vec![2.0f32, 0.3], vec![0.3, 1.0]]);
        let rebuilt = {
            let e = a.sym_eigen();
            SquareMatrix::from_spectrum(&e.values, &e.vectors)
        };
        assert!(rebuilt.max_abs_diff(&a) < 1e-6);
    }

    fn sym_matrix(n: usize) -> impl Strategy<Value = SquareMatrix<f64>> {
        prop::collection::vec(-5.0f64..5.0, n * n).prop_map(move |d| {
            SquareMatrix::from_fn(n, |i, j| d[i * n + j]).symmetrized()
        })
    }

    proptest! {
        #[test]
        fn reconstructs_and_is_orthogonal(a in (1usize..6).prop_flat_map(sym_matrix)) {
            let e = a.sym_eigen();
            let n = a.dim();
            let back = SquareMatrix::from_spectrum(&e.values, &e.vectors);
            prop_assert!(back.max_abs_diff(&a) < 1e-12);
            let qtq = &e.vectors.transpose() * &e.vectors;
            prop_assert!(qtq.max_abs_diff(&SquareMatrix::identity(n)) < 1e-12);
            prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
