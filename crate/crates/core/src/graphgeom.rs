//! Vertical graphs `x_{n+1} = u(x)` in the half-space model.
//!
//! With `w = sqrt(1 + |Du|^2)` and `gamma^{ij} = delta_ij - u_i u_j / (w (1 + w))`
//! the Euclidean shape matrix is `A~ = (1/w) gamma D^2u gamma` and the
//! hyperbolic one is `A = (1/w) I + u A~`. The normal points up and the
//! Euclidean second fundamental form is `u_ij / w`, so a graph that bends
//! down toward the boundary at infinity has negative `A~` and hyperbolic
//! curvatures below `1/w`.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::linalg::SquareMatrix;
use crate::scalar::Real;

pub const MIN_NODES: usize = 16;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    /// `[-L, L]`, a curve in the hyperbolic plane. Both ends are boundary.
    Interval1D,
    /// Radially symmetric graphs over the ball `|x| <= R` in `R^n`, sampled
    /// on `r in [0, R]`. Node 0 is the axis, the last node is the boundary.
    RadialBall,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DomainDescriptor<T> {
    kind: DomainKind,
    n: usize,
    extent: T,
    node_count: usize,
}

impl<T: Real> DomainDescriptor<T> {
    pub fn new(kind: DomainKind, n: usize, extent: T, node_count: usize) -> Result<Self> {
        if !(extent > T::zero()) || !extent.is_finite() {
            return Err(param(format!("domain extent must be positive, got {extent}")));
        }
        if node_count < MIN_NODES {
            return Err(param(format!("need at least {MIN_NODES} nodes, got {node_count}")));
        }
        match kind {
            DomainKind::Interval1D if n != 1 => {
                Err(param(format!("an interval domain has n = 1, got n = {n}")))
            }
            DomainKind::RadialBall if n == 0 => Err(param("ball dimension must be at least 1")),
            _ => Ok(Self { kind, n, extent, node_count }),
        }
    }

    pub fn interval(half_length: T, node_count: usize) -> Result<Self> {
        Self::new(DomainKind::Interval1D, 1, half_length, node_count)
    }

    pub fn ball(n: usize, radius: T, node_count: usize) -> Result<Self> {
        Self::new(DomainKind::RadialBall, n, radius, node_count)
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn extent(&self) -> T {
        self.extent
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn spacing(&self) -> T {
        let cells = T::from_usize_lossy(self.node_count - 1);
        match self.kind {
            DomainKind::Interval1D => (self.extent + self.extent) / cells,
            DomainKind::RadialBall => self.extent / cells,
        }
    }

    /// `x` for intervals, `r` for balls.
    pub fn coordinate(&self, j: usize) -> T {
        let h = self.spacing();
        match self.kind {
            DomainKind::Interval1D => -self.extent + T::from_usize_lossy(j) * h,
            DomainKind::RadialBall => T::from_usize_lossy(j) * h,
        }
    }

    pub fn coordinates(&self) -> Vec<T> {
        (0..self.node_count).map(|j| self.coordinate(j)).collect()
    }

    pub fn is_boundary(&self, j: usize) -> bool {
        match self.kind {
            DomainKind::Interval1D => j == 0 || j + 1 == self.node_count,
            DomainKind::RadialBall => j + 1 == self.node_count,
        }
    }

    pub fn interior(&self) -> std::ops::Range<usize> {
        match self.kind {
            DomainKind::Interval1D => 1..self.node_count - 1,
            DomainKind::RadialBall => 0..self.node_count - 1,
        }
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        match self.kind {
            DomainKind::Interval1D => vec![0, self.node_count - 1],
            DomainKind::RadialBall => vec![self.node_count - 1],
        }
    }

    /// Interior nodes next to a boundary node.
    pub fn boundary_adjacent_nodes(&self) -> Vec<usize> {
        match self.kind {
            DomainKind::Interval1D => vec![1, self.node_count - 2],
            DomainKind::RadialBall => vec![self.node_count - 2],
        }
    }

    /// Radius of the largest ball inside the domain touching the boundary.
    pub fn interior_tangent_radius(&self) -> Option<T> {
        match self.kind {
            DomainKind::RadialBall => Some(self.extent),
            DomainKind::Interval1D => None,
        }
    }

    /// Gradient and Hessian at node `j` as `n`-vectors and matrices, placing
    /// radial nodes at `(r, 0, ..., 0)`.
    pub fn cartesian_derivatives(&self, j: usize, du: T, d2u: T) -> (Vec<T>, SquareMatrix<T>) {
        let n = self.n;
        let mut grad = vec![T::zero(); n];
        grad[0] = du;
        let mut hess = SquareMatrix::zeros(n);
        hess[(0, 0)] = d2u;
        if n > 1 {
            let r = self.coordinate(j);
            let tangential = if r > T::zero() { du / r } else { d2u };
            for i in 1..n {
                hess[(i, i)] = tangential;
            }
        }
        (grad, hess)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphState<T> {
    pub u: Vec<T>,
    pub t: T,
    pub epsilon: T,
}

impl<T: Real> GraphState<T> {
    pub fn new(u: Vec<T>, t: T, epsilon: T) -> Self {
        Self { u, t, epsilon }
    }

    /// Checks positivity everywhere and the Dirichlet value on the boundary.
    pub fn validate(&self, domain: &DomainDescriptor<T>) -> Result<()> {
        if self.u.len() != domain.node_count() {
            return Err(param(format!(
                "state has {} nodes, domain has {}",
                self.u.len(),
                domain.node_count()
            )));
        }
        if let Some(j) = self.u.iter().position(|&v| !(v > T::zero()) || !v.is_finite()) {
            return Err(param(format!("height must be positive and finite, node {j} has {}", self.u[j])));
        }
        for j in domain.boundary_nodes() {
            if (self.u[j] - self.epsilon).abs() > T::tol(1e-14) {
                return Err(param(format!("boundary node {j} has u = {}, expected {}", self.u[j], self.epsilon)));
            }
        }
        Ok(())
    }
}

/// First and second derivatives along the grid coordinate at every node.
#[derive(Clone, Debug, PartialEq)]
pub struct Derivatives<T> {
    pub du: Vec<T>,
    pub d2u: Vec<T>,
}

/// Second-order finite differences of `u` on `domain`.
///
/// Interior nodes use the three-point central stencils, which at nodes next
/// to the boundary include the Dirichlet value. The radial axis uses the
/// even reflection `u_{-1} = u_1`. Boundary nodes use one-sided second-order
/// stencils (three points for `Du`, four for `D^2u`); they feed boundary
/// monitors only.
pub fn discrete_derivatives<T: Real>(u: &[T], domain: &DomainDescriptor<T>) -> Derivatives<T> {
    let n = u.len();
    let h = domain.spacing();
    let two = T::lit(2.0);
    let inv_2h = T::one() / (two * h);
    let inv_h2 = T::one() / (h * h);
    let mut du = vec![T::zero(); n];
    let mut d2u = vec![T::zero(); n];
    for j in 1..n - 1 {
        du[j] = (u[j + 1] - u[j - 1]) * inv_2h;
        d2u[j] = (u[j + 1] - two * u[j] + u[j - 1]) * inv_h2;
    }
    let last = n - 1;
    du[last] = (T::lit(3.0) * u[last] - T::lit(4.0) * u[last - 1] + u[last - 2]) * inv_2h;
    d2u[last] = (two * u[last] - T::lit(5.0) * u[last - 1] + T::lit(4.0) * u[last - 2] - u[last - 3]) * inv_h2;
    match domain.kind() {
        DomainKind::RadialBall => {
            du[0] = T::zero();
            d2u[0] = two * (u[1] - u[0]) * inv_h2;
        }
        DomainKind::Interval1D => {
            du[0] = (-T::lit(3.0) * u[0] + T::lit(4.0) * u[1] - u[2]) * inv_2h;
            d2u[0] = (two * u[0] - T::lit(5.0) * u[1] + T::lit(4.0) * u[2] - u[3]) * inv_h2;
        }
    }
    Derivatives { du, d2u }
}

pub fn gradient_weight<T: Real>(du: &[T]) -> T {
    (T::one() + du.iter().map(|&x| x * x).sum::<T>()).sqrt()
}

/// `gamma^{ij} = delta_ij - u_i u_j / (w (1 + w))`.
pub fn gamma_matrix<T: Real>(du: &[T]) -> SquareMatrix<T> {
    let w = gradient_weight(du);
    let c = T::one() / (w * (T::one() + w));
    SquareMatrix::from_fn(du.len(), |i, j| delta::<T>(i, j) - c * du[i] * du[j])
}

/// `gamma_ij = delta_ij + u_i u_j / (1 + w)`, the inverse of [`gamma_matrix`].
pub fn gamma_inverse<T: Real>(du: &[T]) -> SquareMatrix<T> {
    let w = gradient_weight(du);
    let c = T::one() / (T::one() + w);
    SquareMatrix::from_fn(du.len(), |i, j| delta::<T>(i, j) + c * du[i] * du[j])
}

fn delta<T: Real>(i: usize, j: usize) -> T {
    if i == j {
        T::one()
    } else {
        T::zero()
    }
}

/// Euclidean and hyperbolic shape matrices of the graph at one point.
#[derive(Clone, Debug)]
pub struct ShapeOperator<T> {
    pub a_tilde: SquareMatrix<T>,
    pub a: SquareMatrix<T>,
    /// Hyperbolic principal curvatures, descending.
    pub kappa: Vec<T>,
    pub nu_upper: T,
    pub w: T,
}

pub fn hyperbolic_shape<T: Real>(u: T, du: &[T], d2u: &SquareMatrix<T>) -> ShapeOperator<T> {
    let w = gradient_weight(du);
    let gamma = gamma_matrix(du);
    let a_tilde = (&(&gamma * d2u) * &gamma).scale(T::one() / w);
    let a = &SquareMatrix::scaled_identity(du.len(), T::one() / w) + &a_tilde.scale(u);
    let kappa = a.sym_eigenvalues();
    ShapeOperator { a_tilde, a, kappa, nu_upper: T::one() / w, w }
}

/// `M = delta_ij + u_i u_j + u u_ij` and its smallest eigenvalue. `M > 0`
/// is local strict convexity of the graph, equivalently strict convexity of
/// `u^2 + |x|^2`.
pub fn convexity_matrix<T: Real>(u: T, du: &[T], d2u: &SquareMatrix<T>) -> (SquareMatrix<T>, T) {
    let m = SquareMatrix::from_fn(du.len(), |i, j| delta::<T>(i, j) + du[i] * du[j] + u * d2u[(i, j)]);
    let min = m.sym_eigenvalues().last().copied().unwrap_or_else(T::zero);
    (m, min)
}

#[derive(Clone, Debug)]
pub struct PointGeometry<T> {
    pub du: Vec<T>,
    pub w: T,
    pub nu_upper: T,
    pub a_tilde: SquareMatrix<T>,
    pub a: SquareMatrix<T>,
    pub kappa: Vec<T>,
    pub conv_min_eig: T,
}

pub fn point_geometry<T: Real>(u: T, du: &[T], d2u: &SquareMatrix<T>) -> PointGeometry<T> {
    let shape = hyperbolic_shape(u, du, d2u);
    let (_, conv_min_eig) = convexity_matrix(u, du, d2u);
    PointGeometry {
        du: du.to_vec(),
        w: shape.w,
        nu_upper: shape.nu_upper,
        a_tilde: shape.a_tilde,
        a: shape.a,
        kappa: shape.kappa,
        conv_min_eig,
    }
}

/// Principal curvatures of a radial graph `u(|x|)` in `R^n`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct RadialCurvatures<T> {
    /// Along the meridian.
    pub radial: T,
    /// Along the parallels, multiplicity `n - 1`.
    pub angular: T,
    pub nu_upper: T,
    pub w: T,
}

impl<T: Real> RadialCurvatures<T> {
    /// The `n` curvatures in descending order.
    pub fn sorted(&self, n: usize, out: &mut Vec<T>) {
        out.clear();
        out.push(self.radial);
        out.extend(std::iter::repeat(self.angular).take(n.saturating_sub(1)));
        if n > 1 && self.angular > self.radial {
            out.rotate_left(1);
        }
    }

    pub fn max(&self, n: usize) -> T {
        if n > 1 {
            self.radial.max(self.angular)
        } else {
            self.radial
        }
    }

    pub fn min(&self, n: usize) -> T {
        if n > 1 {
            self.radial.min(self.angular)
        } else {
            self.radial
        }
    }
}

/// `kappa_rad = (1/w)(1 + u u'' / w^2)` and `kappa_ang = (1/w)(1 + u u' / r)`.
/// At `r = 0` the quotient `u'/r` is replaced by its limit `u''(0)`.
pub fn radial_curvatures<T: Real>(u: T, du: T, d2u: T, r: T, n: usize) -> Result<RadialCurvatures<T>> {
    if r < T::zero() {
        return Err(param(format!("radius must be non-negative, got {r}")));
    }
    Ok(radial_curvatures_unchecked(u, du, d2u, r, n))
}

#[inline]
pub(crate) fn radial_curvatures_unchecked<T: Real>(u: T, du: T, d2u: T, r: T, n: usize) -> RadialCurvatures<T> {
    let w2 = T::one() + du * du;
    let w = w2.sqrt();
    let nu = T::one() / w;
    let radial = nu * (T::one() + u * d2u / w2);
    let angular = if n > 1 {
        let slope_over_r = if r > T::zero() { du / r } else { d2u };
        nu * (T::one() + u * slope_over_r)
    } else {
        radial
    };
    RadialCurvatures { radial, angular, nu_upper: nu, w }
}

/// Smallest eigenvalue of the convexity matrix for radial data.
#[inline]
pub(crate) fn radial_convexity_min<T: Real>(u: T, du: T, d2u: T, r: T, n: usize) -> T {
    let radial = T::one() + du * du + u * d2u;
    if n > 1 {
        let slope_over_r = if r > T::zero() { du / r } else { d2u };
        radial.min(T::one() + u * slope_over_r)
    } else {
        radial
    }
}

/// Umbilic spherical cap: the Euclidean sphere of radius `rho` centred at
/// height `-sigma rho`, cut at height `lift` over the ball `|x| <= R`.
///
/// Every hyperbolic principal curvature of such a sphere equals `sigma`.
/// With `lift = 0` it meets the boundary at infinity over `|x| = R`, with
/// `rho = R / sqrt(1 - sigma^2)`; with `lift = eps > 0` it is the stationary
/// graph with Dirichlet value `eps`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct CapProfile<T> {
    pub radius: T,
    pub sigma: T,
    pub lift: T,
    pub sphere_radius: T,
}

impl<T: Real> CapProfile<T> {
    pub fn new(radius: T, sigma: T) -> Result<Self> {
        Self::lifted(radius, sigma, T::zero())
    }

    pub fn lifted(radius: T, sigma: T, lift: T) -> Result<Self> {
        if !(sigma > T::zero() && sigma < T::one()) {
            return Err(param(format!("sigma must lie in (0,1), got {sigma}")));
        }
        if !(radius > T::zero()) {
            return Err(param(format!("cap radius must be positive, got {radius}")));
        }
        if lift < T::zero() {
            return Err(param(format!("lift must be non-negative, got {lift}")));
        }
        // R^2 + (lift + sigma rho)^2 = rho^2
        let one_m = T::one() - sigma * sigma;
        let b = lift * sigma;
        let disc = b * b + one_m * (radius * radius + lift * lift);
        let sphere_radius = (b + disc.sqrt()) / one_m;
        Ok(Self { radius, sigma, lift, sphere_radius })
    }

    pub fn center_height(&self) -> T {
        -self.sigma * self.sphere_radius
    }

    fn root(&self, x: T) -> T {
        (self.sphere_radius * self.sphere_radius - x * x).sqrt()
    }

    /// `u(x)` for `|x| <= R`.
    pub fn height(&self, x: T) -> T {
        self.root(x) + self.center_height()
    }

    pub fn slope(&self, x: T) -> T {
        -x / self.root(x)
    }

    pub fn second_derivative(&self, x: T) -> T {
        let s = self.root(x);
        -(self.sphere_radius * self.sphere_radius) / (s * s * s)
    }

    /// `nu^{n+1}` on the boundary circle.
    pub fn boundary_angle(&self) -> T {
        (self.lift - self.center_height()) / self.sphere_radius
    }

    pub fn sample(&self, domain: &DomainDescriptor<T>) -> Vec<T> {
        let mut u: Vec<T> = domain.coordinates().into_iter().map(|x| self.height(x)).collect();
        for j in domain.boundary_nodes() {
            u[j] = self.lift;
        }
        u
    }
}

/// `u(x) = sqrt(R_e^2 - |x|^2) - sigma R_e` with `R_e = R / sqrt(1 - sigma^2)`.
pub fn cap_profile<T: Real>(radius: T, sigma: T, x: T) -> Result<T> {
    let cap = CapProfile::new(radius, sigma)?;
    if x.abs() > radius {
        return Err(param(format!("|x| = {} exceeds the cap radius {radius}", x.abs())));
    }
    if x.abs() == radius {
        return Ok(T::zero());
    }
    Ok(cap.height(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn domain_layout() {
        let d = DomainDescriptor::<f64>::ball(2, 1.0, 401).unwrap();
        assert_eq!(d.spacing(), 1.0 / 400.0);
        assert_eq!(d.interior(), 0..400);
        assert_eq!(d.boundary_nodes(), vec![400]);
        assert!((d.coordinate(400) - 1.0).abs() < 1e-15);
        let i = DomainDescriptor::<f64>::interval(1.0, 101).unwrap();
        assert_eq!(i.coordinate(0), -1.0);
        assert!((i.coordinate(100) - 1.0).abs() < 1e-15);
        assert_eq!(i.boundary_adjacent_nodes(), vec![1, 99]);
        assert!(DomainDescriptor::<f64>::interval(1.0, 10).is_err());
        assert!(DomainDescriptor::<f64>::new(DomainKind::Interval1D, 2, 1.0, 100).is_err());
        assert!(DomainDescriptor::<f64>::ball(2, -1.0, 100).is_err());
    }

    #[test]
    fn derivatives_of_constants_and_quadratics() {
        for domain in [DomainDescriptor::<f64>::ball(3, 1.5, 40).unwrap(), DomainDescriptor::<f64>::interval(0.7, 33).unwrap()] {
            let c = vec![0.3; domain.node_count()];
            let d = discrete_derivatives(&c, &domain);
            assert!(d.du.iter().chain(&d.d2u).all(|x| x.abs() < 1e-12));

            let q: Vec<f64> = domain.coordinates().iter().map(|x| 1.25 * x * x).collect();
            let d = discrete_derivatives(&q, &domain);
            for (j, x) in domain.coordinates().iter().enumerate() {
                assert!((d.d2u[j] - 2.5).abs() < 1e-8, "node {j}: {}", d.d2u[j]);
                assert!((d.du[j] - 2.5 * x).abs() < 1e-10);
            }
        }
    }

    fn cap_second_derivative_error(nodes: usize) -> f64 {
        let cap = CapProfile::<f64>::new(1.0, 0.6).unwrap();
        let domain = DomainDescriptor::<f64>::ball(2, 1.0, nodes).unwrap();
        let u: Vec<f64> = domain.coordinates().iter().map(|&r| cap.height(r)).collect();
        let d = discrete_derivatives(&u, &domain);
        domain
            .interior()
            .map(|j| (d.d2u[j] - cap.second_derivative(domain.coordinate(j))).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn cap_second_derivative_converges_at_second_order() {
        let e: Vec<f64> = [100, 200, 400].iter().map(|&n| cap_second_derivative_error(n)).collect();
        for pair in e.windows(2) {
            let order = (pair[0] / pair[1]).log2();
            assert!(order >= 1.9, "errors {e:?}");
        }
    }

    #[test]
    fn gamma_examples() {
        let g = gamma_matrix::<f64>(&[0.0, 0.0, 0.0]);
        assert!(g.max_abs_diff(&SquareMatrix::identity(3)) < 1e-16);
        let g = gamma_matrix::<f64>(&[0.75]);
        assert!((g[(0, 0)] - 0.8).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn gamma_square_root_of_metric(du in prop::collection::vec(-3.0f64..3.0, 1..5)) {
            let n = du.len();
            let metric = &SquareMatrix::identity(n) + &SquareMatrix::outer(&du);
            let lower = gamma_inverse(&du);
            prop_assert!((&lower * &lower).max_abs_diff(&metric) < 1e-12);
            let upper = gamma_matrix::<f64>(&du);
            prop_assert!((&(&upper * &metric) * &upper).max_abs_diff(&SquareMatrix::identity(n)) < 1e-12);
            prop_assert!((&upper * &lower).max_abs_diff(&SquareMatrix::identity(n)) < 1e-12);
        }

        #[test]
        fn shape_matrix_relations(
            u in 0.01f64..3.0,
            (du, hess) in (1usize..5).prop_flat_map(|n| (
                prop::collection::vec(-2.0f64..2.0, n),
                prop::collection::vec(-4.0f64..4.0, n * n),
            ))
        ) {
            let n = du.len();
            let d2u = SquareMatrix::from_fn(n, |i, j| hess[i * n + j]).symmetrized();
            let s = hyperbolic_shape::<f64>(u, &du, &d2u);
            let rebuilt = &SquareMatrix::scaled_identity(n, 1.0 / s.w) + &s.a_tilde.scale(u);
            prop_assert!(rebuilt.max_abs_diff(&s.a) <= 1e-14 * s.a.max_abs().max(1.0));
            prop_assert!(s.a.asymmetry() < 1e-13);
            let ke = s.a_tilde.sym_eigenvalues();
            for (k, kt) in s.kappa.iter().zip(&ke) {
                prop_assert!((k - (u * kt + 1.0 / s.w)).abs() < 1e-12 * (1.0 + u * kt.abs()));
            }
            prop_assert!(s.w >= 1.0 && s.nu_upper > 0.0 && s.nu_upper <= 1.0);
            prop_assert!((s.w * s.nu_upper - 1.0).abs() < 1e-15);

            // M = gamma^{-1} (w A) gamma^{-1}: congruent, so the signs agree
            let (_, min_m) = convexity_matrix::<f64>(u, &du, &d2u);
            let min_k = *s.kappa.last().unwrap();
            if min_k.abs() > 1e-9 && min_m.abs() > 1e-9 {
                prop_assert_eq!(min_m > 0.0, min_k > 0.0);
            }
        }
    }

    #[test]
    fn horosphere_is_umbilic_with_unit_curvature() {
        let s = hyperbolic_shape::<f64>(0.7, &[0.0, 0.0], &SquareMatrix::zeros(2));
        assert!(s.a.max_abs_diff(&SquareMatrix::identity(2)) < 1e-16);
        assert_eq!(s.kappa, vec![1.0, 1.0]);
        assert_eq!(s.nu_upper, 1.0);
        let rc = radial_curvatures::<f64>(0.7, 0.0, 0.0, 0.3, 3).unwrap();
        assert_eq!((rc.radial, rc.angular), (1.0, 1.0));
        let (_, m) = convexity_matrix::<f64>(0.7, &[0.0], &SquareMatrix::zeros(1));
        assert_eq!(m, 1.0);
    }

    #[test]
    fn cap_top_in_one_dimension() {
        let cap = CapProfile::<f64>::new(1.0, 0.6).unwrap();
        assert!((cap.sphere_radius - 1.25).abs() < 1e-15);
        let u = cap.height(0.0);
        let u2 = cap.second_derivative(0.0);
        assert!((u - 0.5).abs() < 1e-15);
        assert!((u2 + 0.8).abs() < 1e-15);
        let s = hyperbolic_shape::<f64>(u, &[0.0], &SquareMatrix::diagonal(&[u2]));
        assert!((s.a[(0, 0)] - 0.6).abs() < 1e-15);
        let (_, m) = convexity_matrix::<f64>(u, &[0.0], &SquareMatrix::diagonal(&[u2]));
        assert!((m - 0.6).abs() < 1e-15);
    }

    #[test]
    fn concave_paraboloid_is_not_admissible() {
        // u = 1 - 2|x|^2 at the origin
        let (_, m) = convexity_matrix::<f64>(1.0, &[0.0, 0.0], &SquareMatrix::diagonal(&[-4.0, -4.0]));
        assert_eq!(m, -3.0);
    }

    #[test]
    fn cap_is_umbilic_at_sigma() {
        let cap = CapProfile::<f64>::new(1.0, 0.6).unwrap();
        let r = 0.5;
        let rc = radial_curvatures::<f64>(cap.height(r), cap.slope(r), cap.second_derivative(r), r, 2).unwrap();
        assert!((rc.radial - 0.6).abs() < 1e-12 && (rc.angular - 0.6).abs() < 1e-12);
        // the same point through the matrix path on the meridian
        let domain = DomainDescriptor::<f64>::ball(2, 1.0, 401).unwrap();
        let (g, h) = (vec![cap.slope(r), 0.0], SquareMatrix::diagonal(&[cap.second_derivative(r), cap.slope(r) / r]));
        let s = hyperbolic_shape::<f64>(cap.height(r), &g, &h);
        assert!(s.kappa.iter().all(|k| (k - 0.6).abs() < 1e-12));
        let _ = domain;

        let domain = DomainDescriptor::<f64>::ball(2, 1.0, 400).unwrap();
        let mut worst: f64 = 0.0;
        for j in domain.interior() {
            let r = domain.coordinate(j);
            let rc = radial_curvatures::<f64>(cap.height(r), cap.slope(r), cap.second_derivative(r), r, 2).unwrap();
            worst = worst.max((rc.radial - 0.6).abs()).max((rc.angular - 0.6).abs());
        }
        assert!(worst <= 1e-10, "{worst}");
    }

    #[test]
    fn axis_limit_is_symmetric() {
        let cap = CapProfile::<f64>::new(1.0, 0.3).unwrap();
        let rc = radial_curvatures::<f64>(cap.height(0.0), 0.0, cap.second_derivative(0.0), 0.0, 4).unwrap();
        assert!((rc.radial - rc.angular).abs() <= 1e-10);
        assert!(radial_curvatures::<f64>(1.0, 0.0, 0.0, -0.1, 2).is_err());
    }

    #[test]
    fn cap_profile_values() {
        assert!((cap_profile::<f64>(1.0, 0.6, 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(cap_profile::<f64>(1.0, 0.6, 1.0).unwrap(), 0.0);
        assert!(cap_profile::<f64>(1.0, 1.2, 0.0).is_err());
        assert!(cap_profile::<f64>(1.0, 0.0, 0.0).is_err());
        assert!(cap_profile::<f64>(1.0, 0.6, 1.5).is_err());
        let cap = CapProfile::<f64>::new(1.0, 0.6).unwrap();
        // w = R_e / (u + sigma R_e) -> 1/sigma at the boundary
        let x = 1.0 - 1e-9;
        let w = (1.0 + cap.slope(x).powi(2)).sqrt();
        assert!((1.0 / w - 0.6).abs() < 1e-6);
        assert!((cap.boundary_angle() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn lifted_cap_meets_the_lifted_boundary() {
        let cap = CapProfile::<f64>::lifted(1.0, 0.6, 1e-3).unwrap();
        assert!((cap.height(1.0) - 1e-3).abs() < 1e-15);
        assert!(cap.boundary_angle() > 0.6);
        let r = 0.9;
        let rc = radial_curvatures::<f64>(cap.height(r), cap.slope(r), cap.second_derivative(r), r, 2).unwrap();
        assert!((rc.radial - 0.6).abs() < 1e-12 && (rc.angular - 0.6).abs() < 1e-12);
    }

    #[test]
    fn single_precision_geometry() {
        let cap = CapProfile::<f32>::new(1.0, 0.6).unwrap();
        let r = 0.5f32;
        let rc = radial_curvatures::<f32>(cap.height(r), cap.slope(r), cap.second_derivative(r), r, 2).unwrap();
        assert!((rc.radial - 0.6).abs() < 1e-5);
    }
}
