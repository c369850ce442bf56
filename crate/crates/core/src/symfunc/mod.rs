//! Symmetric curvature functions on the positive cone.
//!
//! The family implemented is `H_1`, `H_n^{1/n}` and the Hessian quotients
//! `(H_n / H_l)^{1/(n-l)}`, where `H_l` is the normalized `l`-th elementary
//! symmetric polynomial. Each is symmetric, concave, homogeneous of degree
//! one and normalized by `f(1, ..., 1) = 1`.

mod certify;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::linalg::SquareMatrix;
use crate::scalar::Real;

pub use certify::{
    check_structure, ConditionVerdict, ConeSampler, StructureReport, StructureTolerances,
};

/// Eigenvalues at which two curvature directions are treated as one cluster.
pub const EIGEN_CLUSTER_GAP: f64 = 1e-10;

/// A vector of principal curvatures. Components are always finite.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrincipalCurvatures<T> {
    values: Vec<T>,
}

impl<T: Real> PrincipalCurvatures<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(param("curvature vector must have at least one component"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(param(format!("curvature component {i} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn from_f64(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| T::lit(v)).collect())
    }

    pub fn umbilic(n: usize, value: T) -> Self {
        Self { values: vec![value; n.max(1)] }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Membership in the open positive cone.
    pub fn is_admissible(&self) -> bool {
        self.values.iter().all(|&v| v > T::zero())
    }

    fn check_admissible(&self) -> Result<()> {
        match self.values.iter().position(|&v| !(v > T::zero())) {
            Some(index) => Err(Error::NotAdmissible { index, value: self.values[index].to_f64_lossy() }),
            None => Ok(()),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurvatureFamily {
    /// `H_1`, the normalized mean curvature.
    MeanH1,
    /// `H_n^{1/n}`.
    GaussRoot,
    /// `(H_n / H_l)^{1/(n-l)}`.
    HessianQuotient,
}

impl CurvatureFamily {
    pub fn name(self) -> &'static str {
        match self {
            CurvatureFamily::MeanH1 => "mean",
            CurvatureFamily::GaussRoot => "gauss-root",
            CurvatureFamily::HessianQuotient => "hessian-quotient",
        }
    }

    /// Accepts the canonical names plus a few short aliases.
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "mean" | "h1" | "mean-h1" => Some(CurvatureFamily::MeanH1),
            "gauss" | "gauss-root" | "gaussroot" => Some(CurvatureFamily::GaussRoot),
            "quotient" | "hessian-quotient" | "hessianquotient" => {
                Some(CurvatureFamily::HessianQuotient)
            }
            _ => None,
        }
    }
}

/// Which curvature function to use, in dimension `n`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CurvatureFunctionSpec {
    family: CurvatureFamily,
    n: usize,
    l: usize,
}

impl CurvatureFunctionSpec {
    pub fn new(family: CurvatureFamily, n: usize, l: usize) -> Result<Self> {
        if n == 0 {
            return Err(param("dimension n must be positive"));
        }
        match family {
            CurvatureFamily::HessianQuotient if l >= n => {
                Err(param(format!("hessian quotient needs 0 <= l < n, got l = {l}, n = {n}")))
            }
            CurvatureFamily::HessianQuotient => Ok(Self { family, n, l }),
            _ => Ok(Self { family, n, l: 0 }),
        }
    }

    pub fn mean(n: usize) -> Result<Self> {
        Self::new(CurvatureFamily::MeanH1, n, 0)
    }

    pub fn gauss_root(n: usize) -> Result<Self> {
        Self::new(CurvatureFamily::GaussRoot, n, 0)
    }

    pub fn hessian_quotient(n: usize, l: usize) -> Result<Self> {
        Self::new(CurvatureFamily::HessianQuotient, n, l)
    }

    pub fn family(&self) -> CurvatureFamily {
        self.family
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> usize {
        self.l
    }

    /// Whether `f` vanishes on the boundary of the cone. `H_1` does not.
    pub fn vanishes_on_cone_boundary(&self) -> bool {
        self.family != CurvatureFamily::MeanH1
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.n {
            return Err(param(format!("expected {} curvature components, got {got}", self.n)));
        }
        Ok(())
    }

    /// `f(lambda)` without admissibility checks. Components must be
    /// non-negative for the result to be meaningful.
    pub fn value_unchecked<T: Real>(&self, lambda: &[T]) -> T {
        let n = lambda.len();
        match self.family {
            CurvatureFamily::MeanH1 => lambda.iter().copied().sum::<T>() / T::from_usize_lossy(n),
            CurvatureFamily::GaussRoot => {
                let prod = lambda.iter().fold(T::one(), |acc, &x| acc * x);
                root(prod, n)
            }
            CurvatureFamily::HessianQuotient => {
                let l = self.l;
                let prod = lambda.iter().fold(T::one(), |acc, &x| acc * x);
                let el = elementary_symmetric(lambda, l);
                let q = prod * binomial::<T>(n, l) / el;
                root(q, n - l)
            }
        }
    }

    /// Writes `df/dlambda_i` into `out` and returns `f`, without checks.
    pub fn value_and_gradient_unchecked<T: Real>(&self, lambda: &[T], out: &mut [T]) -> T {
        let n = lambda.len();
        let f = self.value_unchecked(lambda);
        match self.family {
            CurvatureFamily::MeanH1 => {
                let c = T::one() / T::from_usize_lossy(n);
                out.iter_mut().for_each(|g| *g = c);
            }
            CurvatureFamily::GaussRoot => {
                let nn = T::from_usize_lossy(n);
                for (g, &x) in out.iter_mut().zip(lambda) {
                    *g = f / (nn * x);
                }
            }
            CurvatureFamily::HessianQuotient => {
                // f_i = f/(n-l) * e_l(lambda | i) / (lambda_i e_l(lambda)),
                // the cancellation-free form of f/(n-l) (1/lambda_i - d_i log e_l).
                let l = self.l;
                let k = T::from_usize_lossy(n - l);
                let el = elementary_symmetric(lambda, l);
                for i in 0..n {
                    let el_without_i = elementary_symmetric_excluding(lambda, l, i);
                    out[i] = f / k * el_without_i / (lambda[i] * el);
                }
            }
        }
        f
    }
}

fn root<T: Real>(x: T, k: usize) -> T {
    match k {
        1 => x,
        2 => x.sqrt(),
        3 => x.cbrt(),
        _ => x.powf(T::one() / T::from_usize_lossy(k)),
    }
}

/// `binomial(n, k)` as a float.
pub fn binomial<T: Real>(n: usize, k: usize) -> T {
    let k = k.min(n - k.min(n));
    let mut acc = T::one();
    for i in 0..k {
        acc = acc * T::from_usize_lossy(n - i) / T::from_usize_lossy(i + 1);
    }
    acc
}

/// Unnormalized `e_l(lambda)` by the standard product recurrence.
pub fn elementary_symmetric<T: Real>(lambda: &[T], l: usize) -> T {
    let mut e = vec![T::zero(); l + 1];
    e[0] = T::one();
    for (i, &x) in lambda.iter().enumerate() {
        for k in (1..=l.min(i + 1)).rev() {
            e[k] = e[k] + x * e[k - 1];
        }
    }
    e[l]
}

/// `e_l` of `lambda` with component `skip` removed.
pub fn elementary_symmetric_excluding<T: Real>(lambda: &[T], l: usize, skip: usize) -> T {
    let mut e = vec![T::zero(); l + 1];
    e[0] = T::one();
    let mut seen = 0;
    for (i, &x) in lambda.iter().enumerate() {
        if i == skip {
            continue;
        }
        for k in (1..=l.min(seen + 1)).rev() {
            e[k] = e[k] + x * e[k - 1];
        }
        seen += 1;
    }
    e[l]
}

/// Normalized elementary symmetric polynomial `H_l = e_l / binomial(n, l)`.
pub fn eval_hl<T: Real>(lambda: &PrincipalCurvatures<T>, l: usize) -> Result<T> {
    let n = lambda.dim();
    if l > n {
        return Err(param(format!("H_l needs 0 <= l <= n, got l = {l}, n = {n}")));
    }
    let v = lambda.values();
    Ok(match l {
        0 => T::one(),
        _ if l == n => v.iter().fold(T::one(), |acc, &x| acc * x),
        _ => elementary_symmetric(v, l) / binomial::<T>(n, l),
    })
}

pub fn eval_f<T: Real>(spec: &CurvatureFunctionSpec, lambda: &PrincipalCurvatures<T>) -> Result<T> {
    spec.check_dim(lambda.dim())?;
    lambda.check_admissible()?;
    Ok(spec.value_unchecked(lambda.values()))
}

pub fn grad_f<T: Real>(spec: &CurvatureFunctionSpec, lambda: &PrincipalCurvatures<T>) -> Result<Vec<T>> {
    spec.check_dim(lambda.dim())?;
    lambda.check_admissible()?;
    let mut g = vec![T::zero(); lambda.dim()];
    spec.value_and_gradient_unchecked(lambda.values(), &mut g);
    Ok(g)
}

/// `F(A) = f(lambda(A))` for a symmetric matrix.
pub fn eval_matrix_function<T: Real>(spec: &CurvatureFunctionSpec, a: &SquareMatrix<T>) -> Result<T> {
    let spectrum = PrincipalCurvatures::new(a.sym_eigenvalues())?;
    admissible_spectrum(&spectrum)?;
    eval_f(spec, &spectrum)
}

fn admissible_spectrum<T: Real>(spectrum: &PrincipalCurvatures<T>) -> Result<()> {
    if spectrum.is_admissible() {
        Ok(())
    } else {
        Err(Error::SpectrumNotAdmissible {
            spectrum: spectrum.values().iter().map(|v| v.to_f64_lossy()).collect(),
        })
    }
}

/// `F^{ij}(A) = dF/da_ij` for symmetric `A` with spectrum in the cone.
///
/// With `A = Q diag(lambda) Q^T` the derivative is `Q diag(f_i) Q^T`.
/// Eigenvalues closer than [`EIGEN_CLUSTER_GAP`] are grouped and share the
/// cluster-average of `f_i`, which is the exact diagonal limit for a
/// symmetric `f` and makes the result independent of the eigenbasis chosen
/// inside a repeated eigenspace.
pub fn f_matrix_derivative<T: Real>(
    spec: &CurvatureFunctionSpec,
    a: &SquareMatrix<T>,
) -> Result<SquareMatrix<T>> {
    spec.check_dim(a.dim())?;
    let eig = a.sym_eigen();
    let spectrum = PrincipalCurvatures::new(eig.values.clone())?;
    admissible_spectrum(&spectrum)?;
    let mut g = vec![T::zero(); a.dim()];
    spec.value_and_gradient_unchecked(&eig.values, &mut g);
    average_clusters(&eig.values, &mut g, T::lit(EIGEN_CLUSTER_GAP));
    Ok(SquareMatrix::from_spectrum(&g, &eig.vectors))
}

/// Replaces `g` over each run of (sorted) values closer than `gap` by its mean.
fn average_clusters<T: Real>(sorted_values: &[T], g: &mut [T], gap: T) {
    let n = sorted_values.len();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (sorted_values[end - 1] - sorted_values[end]).abs() < gap {
            end += 1;
        }
        if end - start > 1 {
            let mean = g[start..end].iter().copied().sum::<T>() / T::from_usize_lossy(end - start);
            g[start..end].iter_mut().for_each(|x| *x = mean);
        }
        start = end;
    }
}
