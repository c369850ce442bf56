//! Modified curvature flow of convex vertical graphs in the half-space model
//! of hyperbolic space.
//!
//! The flow `u_t = u w (F(kappa) - sigma)` with Dirichlet value `u = eps` on
//! the boundary is integrated on uniform grids over an interval or a ball
//! (radially symmetric graphs). Its stationary limit is the umbilic cap with
//! every hyperbolic principal curvature equal to `sigma`.
//!
//! The numerical core is generic over [`Real`] (`f32` and `f64`); the `*64`
//! aliases below fix the usual double precision instantiation.

pub mod error;
pub mod flow;
pub mod graphgeom;
pub mod linalg;
pub mod monitors;
pub mod scalar;
pub mod symfunc;
pub mod verdict;

pub use error::{Error, Result};
pub use scalar::Real;
pub use verdict::Verdict;

pub type PrincipalCurvatures64 = symfunc::PrincipalCurvatures<f64>;
pub type PrincipalCurvatures32 = symfunc::PrincipalCurvatures<f32>;
pub type SquareMatrix64 = linalg::SquareMatrix<f64>;
pub type DomainDescriptor64 = graphgeom::DomainDescriptor<f64>;
pub type GraphState64 = graphgeom::GraphState<f64>;
pub type GraphState32 = graphgeom::GraphState<f32>;
pub type PointGeometry64 = graphgeom::PointGeometry<f64>;
pub type CapProfile64 = graphgeom::CapProfile<f64>;
pub type FlowConfig64 = flow::FlowConfig<f64>;
pub type FlowConfig32 = flow::FlowConfig<f32>;
pub type Trajectory64 = flow::Trajectory<f64>;
pub type DiagnosticsRecord64 = monitors::DiagnosticsRecord<f64>;
