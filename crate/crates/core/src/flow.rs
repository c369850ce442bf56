//! Explicit time integration of `u_t = u w (F - sigma)` with `u = eps` on the
//! boundary, steady-state detection, and continuation in `eps`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::graphgeom::{
    discrete_derivatives, gamma_inverse, gradient_weight, point_geometry, radial_convexity_min,
    radial_curvatures_unchecked, CapProfile, DomainDescriptor, GraphState,
};
use crate::linalg::SquareMatrix;
use crate::monitors::{self, DiagnosticsRecord, MonitorContext};
use crate::scalar::Real;
use crate::symfunc::{f_matrix_derivative, CurvatureFunctionSpec};

/// Halvings of the time step tried before a step is declared impossible.
pub const MAX_HALVINGS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowConfig<T> {
    pub domain: DomainDescriptor<T>,
    pub fspec: CurvatureFunctionSpec,
    pub sigma: T,
    /// `sigma'` of the initial cap; must exceed `sigma`.
    pub sigma_init: T,
    pub epsilon: T,
    pub cfl_safety: T,
    pub t_max: T,
    /// Steady once `max |F - sigma|` over interior nodes drops to this.
    pub steady_tol: T,
    /// Steps between diagnostics records and stored snapshots.
    pub diag_stride: usize,
}

impl<T: Real> FlowConfig<T> {
    /// Defaults: `eps = 1e-3 * extent`, `sigma' = (1 + sigma) / 2`, CFL
    /// safety 0.2, `t_max = 200`, steady tolerance `1e-8`, stride 1000.
    pub fn new(domain: DomainDescriptor<T>, fspec: CurvatureFunctionSpec, sigma: T) -> Result<Self> {
        let cfg = Self {
            epsilon: T::lit(1e-3) * domain.extent(),
            domain,
            fspec,
            sigma,
            sigma_init: (T::one() + sigma) * T::lit(0.5),
            cfl_safety: T::lit(0.2),
            t_max: T::lit(200.0),
            steady_tol: T::lit(1e-8),
            diag_stride: 1000,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Unit disk, 400 nodes, `f = sqrt(H_2)`, `sigma = 0.6`, `sigma' = 0.8`.
    pub fn default_ball() -> Self {
        let domain = DomainDescriptor::ball(2, T::one(), 400).expect("valid default domain");
        let fspec = CurvatureFunctionSpec::gauss_root(2).expect("valid default curvature function");
        Self::new(domain, fspec, T::lit(0.6)).expect("valid default configuration")
    }

    pub fn validate(&self) -> Result<()> {
        let zero = T::zero();
        let one = T::one();
        if !(self.sigma > zero && self.sigma < one) {
            return Err(Error::Config(format!("sigma must lie in (0,1), got {}", self.sigma)));
        }
        if !(self.sigma_init > self.sigma && self.sigma_init < one) {
            return Err(Error::Config(format!(
                "sigma_init must lie in (sigma, 1) so the initial surface has f > sigma, got {} with sigma = {}",
                self.sigma_init, self.sigma
            )));
        }
        if !(self.epsilon > zero && self.epsilon < self.domain.extent() / T::lit(10.0)) {
            return Err(Error::Config(format!(
                "epsilon must lie in (0, extent/10), got {} with extent {}",
                self.epsilon,
                self.domain.extent()
            )));
        }
        if self.fspec.n() != self.domain.n() {
            return Err(Error::Config(format!(
                "curvature function has n = {}, domain has n = {}",
                self.fspec.n(),
                self.domain.n()
            )));
        }
        if !(self.cfl_safety > zero && self.cfl_safety <= one) {
            return Err(Error::Config(format!("cfl_safety must lie in (0,1], got {}", self.cfl_safety)));
        }
        if !(self.t_max >= zero) || !self.t_max.is_finite() {
            return Err(Error::Config(format!("t_max must be finite and non-negative, got {}", self.t_max)));
        }
        if !(self.steady_tol > zero) {
            return Err(Error::Config(format!("steady_tol must be positive, got {}", self.steady_tol)));
        }
        if self.diag_stride == 0 {
            return Err(Error::Config("diag_stride must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_epsilon(&self, epsilon: T) -> Result<Self> {
        let cfg = Self { epsilon, ..self.clone() };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The exact stationary solution for this `eps` on a ball: the cap of
    /// curvature `sigma` through the lifted boundary.
    pub fn stationary_cap(&self) -> Result<CapProfile<T>> {
        CapProfile::lifted(self.domain.extent(), self.sigma, self.epsilon)
    }
}

/// Geometry of a discrete state at every node, evaluated through the
/// symmetric reduction (principal directions along the grid and, for balls,
/// the `n - 1` angular directions).
///
/// Boundary entries come from one-sided stencils and are diagnostic only;
/// `f` is NaN there when the boundary curvatures leave the cone.
#[derive(Clone, Debug, Default)]
pub struct NodalGeometry<T> {
    pub du: Vec<T>,
    pub d2u: Vec<T>,
    pub w: Vec<T>,
    pub nu: Vec<T>,
    pub kappa_max: Vec<T>,
    pub kappa_min: Vec<T>,
    pub f: Vec<T>,
    pub sum_fii: Vec<T>,
    pub conv_min: Vec<T>,
    /// `u_t = u w (F - sigma)`, zero on the boundary.
    pub rate: Vec<T>,
}

impl<T: Real> NodalGeometry<T> {
    pub fn evaluate(u: &[T], config: &FlowConfig<T>) -> Self {
        let mut g = Self::default();
        g.evaluate_into(u, config, &mut Scratch::new(config.domain.n()));
        g
    }

    fn evaluate_into(&mut self, u: &[T], config: &FlowConfig<T>, scratch: &mut Scratch<T>) {
        let domain = &config.domain;
        let n = domain.n();
        let len = u.len();
        let d = discrete_derivatives(u, domain);
        for v in [
            &mut self.w,
            &mut self.nu,
            &mut self.kappa_max,
            &mut self.kappa_min,
            &mut self.f,
            &mut self.sum_fii,
            &mut self.conv_min,
            &mut self.rate,
        ] {
            v.resize(len, T::zero());
        }
        for j in 0..len {
            let r = domain.coordinate(j);
            let (du, d2u) = (d.du[j], d.d2u[j]);
            let rc = radial_curvatures_unchecked(u[j], du, d2u, r, n);
            rc.sorted(n, &mut scratch.lambda);
            self.w[j] = rc.w;
            self.nu[j] = rc.nu_upper;
            self.kappa_max[j] = rc.max(n);
            self.kappa_min[j] = rc.min(n);
            self.conv_min[j] = radial_convexity_min(u[j], du, d2u, r, n);
            let boundary = domain.is_boundary(j);
            if boundary && !(self.kappa_min[j] > T::zero()) {
                self.f[j] = T::nan();
                self.sum_fii[j] = T::nan();
            } else {
                self.f[j] = config.fspec.value_and_gradient_unchecked(&scratch.lambda, &mut scratch.grad);
                self.sum_fii[j] = scratch.grad.iter().copied().sum();
            }
            self.rate[j] = if boundary { T::zero() } else { u[j] * rc.w * (self.f[j] - config.sigma) };
        }
        self.du = d.du;
        self.d2u = d.d2u;
    }

    /// Interior node with the smallest convexity eigenvalue, if that node
    /// (or any other) is not admissible.
    pub fn inadmissible_node(&self, u: &[T], domain: &DomainDescriptor<T>) -> Option<(usize, T)> {
        let mut worst: Option<(usize, T)> = None;
        let mut bad = false;
        for j in domain.interior() {
            let c = self.conv_min[j];
            if !(c > T::zero()) || !(self.kappa_min[j] > T::zero()) || !(u[j] > T::zero()) || !self.f[j].is_finite() {
                bad = true;
            }
            if worst.map_or(true, |(_, m)| !(c >= m)) {
                worst = Some((j, c));
            }
        }
        if bad {
            worst
        } else {
            None
        }
    }

    /// `max |F - sigma|` over interior nodes.
    pub fn residual(&self, domain: &DomainDescriptor<T>, sigma: T) -> T {
        domain.interior().map(|j| (self.f[j] - sigma).abs()).fold(T::zero(), T::max)
    }

    /// `(min, max)` of `F - sigma` over interior nodes.
    pub fn f_minus_sigma_range(&self, domain: &DomainDescriptor<T>, sigma: T) -> (T, T) {
        domain.interior().fold((T::infinity(), T::neg_infinity()), |(lo, hi), j| {
            let v = self.f[j] - sigma;
            (lo.min(v), hi.max(v))
        })
    }

    pub fn min_conv_interior(&self, domain: &DomainDescriptor<T>) -> T {
        domain.interior().map(|j| self.conv_min[j]).fold(T::infinity(), T::min)
    }

    /// Stable explicit step `cfl h^2 / max(u^2 sum F^ii / w)`.
    pub fn stable_dt(&self, u: &[T], config: &FlowConfig<T>) -> T {
        let h = config.domain.spacing();
        let diffusion = config
            .domain
            .interior()
            .map(|j| u[j] * u[j] * self.sum_fii[j] / self.w[j])
            .fold(T::zero(), T::max);
        config.cfl_safety * h * h / diffusion
    }
}

struct Scratch<T> {
    lambda: Vec<T>,
    grad: Vec<T>,
}

impl<T: Real> Scratch<T> {
    fn new(n: usize) -> Self {
        Self { lambda: Vec::with_capacity(n), grad: vec![T::zero(); n] }
    }
}

/// `u_0 = cap(R, sigma') + eps` sampled on the grid.
///
/// Fails when the discrete curvature function does not clear
/// `sigma + (sigma' - sigma) / 2` at every interior node, which happens when
/// the grid is too coarse for the cap.
pub fn initial_cap<T: Real>(config: &FlowConfig<T>) -> Result<GraphState<T>> {
    config.validate()?;
    let domain = &config.domain;
    let cap = CapProfile::new(domain.extent(), config.sigma_init)?;
    let mut u: Vec<T> = domain.coordinates().iter().map(|&x| cap.height(x) + config.epsilon).collect();
    for j in domain.boundary_nodes() {
        u[j] = config.epsilon;
    }
    let state = GraphState::new(u, T::zero(), config.epsilon);
    let geom = NodalGeometry::evaluate(&state.u, config);
    if let Some((node, min_eig)) = geom.inadmissible_node(&state.u, domain) {
        return Err(Error::Config(format!(
            "initial cap is not admissible on this grid (node {node}, convexity eigenvalue {min_eig}); use more nodes"
        )));
    }
    let floor = config.sigma + (config.sigma_init - config.sigma) * T::lit(0.5);
    if let Some(j) = domain.interior().find(|&j| !(geom.f[j] > floor)) {
        return Err(Error::Config(format!(
            "discrete F = {} at node {j} of the initial cap does not exceed {floor}; use more nodes",
            geom.f[j]
        )));
    }
    Ok(state)
}

/// `u_t` at every node, zero on the boundary.
pub fn flow_rhs<T: Real>(state: &GraphState<T>, config: &FlowConfig<T>) -> Result<Vec<T>> {
    let geom = NodalGeometry::evaluate(&state.u, config);
    if let Some((node, min_eig)) = geom.inadmissible_node(&state.u, &config.domain) {
        return Err(Error::AdmissibilityLost { node, min_eig: min_eig.to_f64_lossy() });
    }
    Ok(geom.rate)
}

/// Partial derivatives of `G(D^2u, Du, u, u_t) = u_t / (u w) - F(A)` at one
/// node, for a radial state placed on the first coordinate axis.
#[derive(Clone, Debug)]
pub struct LinearizedCoefficients<T> {
    pub g_kl: SquareMatrix<T>,
    pub g_s: Vec<T>,
    pub g_u: T,
    pub g_t: T,
}

pub fn linearized_coefficients<T: Real>(
    state: &GraphState<T>,
    config: &FlowConfig<T>,
    node: usize,
) -> Result<LinearizedCoefficients<T>> {
    let domain = &config.domain;
    if node >= domain.node_count() || domain.is_boundary(node) {
        return Err(param(format!("node {node} is not an interior node")));
    }
    let d = discrete_derivatives(&state.u, domain);
    let (du, d2u) = domain.cartesian_derivatives(node, d.du[node], d.d2u[node]);
    coefficients_at(&config.fspec, config.sigma, state.u[node], &du, &d2u, node)
}

fn coefficients_at<T: Real>(
    fspec: &CurvatureFunctionSpec,
    sigma: T,
    u: T,
    du: &[T],
    d2u: &SquareMatrix<T>,
    node: usize,
) -> Result<LinearizedCoefficients<T>> {
    let n = du.len();
    let geo = point_geometry(u, du, d2u);
    if !(geo.conv_min_eig > T::zero()) {
        return Err(Error::AdmissibilityLost { node, min_eig: geo.conv_min_eig.to_f64_lossy() });
    }
    let fij = f_matrix_derivative(fspec, &geo.a)?;
    let f = fspec.value_unchecked(&geo.kappa);
    let w = geo.w;
    let gamma = crate::graphgeom::gamma_matrix(du);

    let g_kl = (&(&gamma * &fij) * &gamma).scale(-u / w);
    let trace_f = fij.trace();
    let g_u = (-(f + f) + sigma + trace_f / w) / u;
    let g_t = T::one() / (u * w);

    // d gamma^{ij} / d u_s, contracted as tr(F P_s P^{-1} (wA - I)).
    let c = T::one() / (w * (T::one() + w));
    let dc_dw = -(T::one() + w + w) / (w * w * (T::one() + w) * (T::one() + w));
    let p_inv = gamma_inverse(du);
    let wa_minus_i = &geo.a.scale(w) - &SquareMatrix::identity(n);
    let tail = &p_inv * &wa_minus_i;
    let g_s = (0..n)
        .map(|s| {
            let p_s = SquareMatrix::from_fn(n, |i, j| {
                let lin = if i == s { du[j] } else { T::zero() } + if j == s { du[i] } else { T::zero() };
                -c * lin - du[i] * du[j] * dc_dw * du[s] / w
            });
            let x = &(&fij * &p_s) * &tail;
            sigma * du[s] / (w * w) - (T::lit(2.0) / w) * x.trace()
        })
        .collect();
    Ok(LinearizedCoefficients { g_kl, g_s, g_u, g_t })
}

/// `G = u_t / (u w) - F(A[D^2u, Du, u])` for finite-difference checks.
pub fn linearized_operator<T: Real>(
    fspec: &CurvatureFunctionSpec,
    u: T,
    du: &[T],
    d2u: &SquareMatrix<T>,
    u_t: T,
) -> Result<T> {
    let w = gradient_weight(du);
    let f = crate::symfunc::eval_matrix_function(fspec, &point_geometry(u, du, d2u).a)?;
    Ok(u_t / (u * w) - f)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TerminationReason {
    Steady,
    TMaxReached,
    AdmissibilityLost,
    StepUnderflow,
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Steady => "STEADY",
            Self::TMaxReached => "T_MAX_REACHED",
            Self::AdmissibilityLost => "ADMISSIBILITY_LOST",
            Self::StepUnderflow => "STEP_UNDERFLOW",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Snapshot<T> {
    pub step: usize,
    pub t: T,
    pub u: Vec<T>,
    pub rate: Vec<T>,
    /// Extremes of `F` over interior nodes.
    pub f_min: T,
    pub f_max: T,
}

/// Step-by-step extremes, tracked at every step rather than at records.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunStatistics<T> {
    pub min_conv_eig: T,
    pub min_f_minus_sigma: T,
    /// Smallest node-wise change `u(t + dt) - u(t)` over all steps.
    pub min_increment: T,
    pub min_dt: T,
    pub max_dt: T,
    pub halvings: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory<T> {
    pub sigma: T,
    pub epsilon: T,
    pub snapshots: Vec<Snapshot<T>>,
    pub records: Vec<DiagnosticsRecord<T>>,
    pub final_state: GraphState<T>,
    pub termination: TerminationReason,
    pub steps: usize,
    /// `max |F - sigma|` over interior nodes of the final state.
    pub final_residual: T,
    pub stats: RunStatistics<T>,
    #[serde(skip)]
    pub failure: Option<Error>,
}

impl<T: Real> Trajectory<T> {
    pub fn initial(&self) -> Option<&Snapshot<T>> {
        self.snapshots.first()
    }

    pub fn last(&self) -> Option<&Snapshot<T>> {
        self.snapshots.last()
    }

    pub fn is_steady(&self) -> bool {
        self.termination == TerminationReason::Steady
    }
}

/// Forward Euler integrator holding the current state and its geometry.
pub struct Stepper<'a, T> {
    config: &'a FlowConfig<T>,
    u: Vec<T>,
    t: T,
    geom: NodalGeometry<T>,
    trial: Vec<T>,
    trial_geom: NodalGeometry<T>,
    scratch: Scratch<T>,
}

#[derive(Copy, Clone, Debug)]
pub struct StepInfo<T> {
    pub dt: T,
    pub halvings: usize,
    pub min_increment: T,
}

impl<'a, T: Real> Stepper<'a, T> {
    pub fn new(config: &'a FlowConfig<T>, state: GraphState<T>) -> Self {
        let mut scratch = Scratch::new(config.domain.n());
        let mut geom = NodalGeometry::default();
        geom.evaluate_into(&state.u, config, &mut scratch);
        let len = state.u.len();
        Self {
            config,
            u: state.u,
            t: state.t,
            geom,
            trial: vec![T::zero(); len],
            trial_geom: NodalGeometry::default(),
            scratch,
        }
    }

    pub fn u(&self) -> &[T] {
        &self.u
    }

    pub fn t(&self) -> T {
        self.t
    }

    pub fn geometry(&self) -> &NodalGeometry<T> {
        &self.geom
    }

    pub fn state(&self) -> GraphState<T> {
        GraphState::new(self.u.clone(), self.t, self.config.epsilon)
    }

    pub fn inadmissible_node(&self) -> Option<(usize, T)> {
        self.geom.inadmissible_node(&self.u, &self.config.domain)
    }

    /// One step of size at most `dt_cap`, halving up to [`MAX_HALVINGS`]
    /// times until the new state is admissible.
    pub fn advance(&mut self, dt_cap: T) -> Result<StepInfo<T>> {
        self.advance_with(self.geom.stable_dt(&self.u, self.config).min(dt_cap))
    }

    /// One step of exactly `dt`, subject to the same admissibility policy.
    pub fn advance_with(&mut self, dt: T) -> Result<StepInfo<T>> {
        let domain = &self.config.domain;
        let mut dt = dt;
        for halvings in 0..=MAX_HALVINGS {
            for j in 0..self.u.len() {
                self.trial[j] = self.u[j] + dt * self.geom.rate[j];
            }
            for j in domain.boundary_nodes() {
                self.trial[j] = self.config.epsilon;
            }
            self.trial_geom.evaluate_into(&self.trial, self.config, &mut self.scratch);
            if self.trial_geom.inadmissible_node(&self.trial, domain).is_none() {
                let min_increment = self
                    .trial
                    .iter()
                    .zip(&self.u)
                    .map(|(&a, &b)| a - b)
                    .fold(T::infinity(), T::min);
                std::mem::swap(&mut self.u, &mut self.trial);
                std::mem::swap(&mut self.geom, &mut self.trial_geom);
                self.t = self.t + dt;
                return Ok(StepInfo { dt, halvings, min_increment });
            }
            dt = dt * T::lit(0.5);
        }
        Err(Error::StepUnderflow { t: self.t.to_f64_lossy(), dt: (dt + dt).to_f64_lossy() })
    }
}

/// One forward Euler step with the diffusion-limited time step.
pub fn step_explicit<T: Real>(state: &GraphState<T>, config: &FlowConfig<T>) -> Result<(GraphState<T>, T)> {
    let mut stepper = Stepper::new(config, state.clone());
    if let Some((node, min_eig)) = stepper.inadmissible_node() {
        return Err(Error::AdmissibilityLost { node, min_eig: min_eig.to_f64_lossy() });
    }
    let info = stepper.advance(T::infinity())?;
    Ok((stepper.state(), info.dt))
}

pub fn run_flow<T: Real>(config: &FlowConfig<T>) -> Result<Trajectory<T>> {
    let state = initial_cap(config)?;
    run_flow_from(config, state)
}

/// Integrates from `state` until steady, `t_max`, or a failed step.
pub fn run_flow_from<T: Real>(config: &FlowConfig<T>, state: GraphState<T>) -> Result<Trajectory<T>> {
    config.validate()?;
    state.validate(&config.domain)?;
    if (state.epsilon - config.epsilon).abs() > T::tol(1e-14) {
        return Err(param(format!("state has eps = {}, configuration has {}", state.epsilon, config.epsilon)));
    }
    let domain = &config.domain;
    let sigma = config.sigma;
    let mut stepper = Stepper::new(config, state);
    let mut ctx = MonitorContext::new();
    let mut snapshots = Vec::new();
    let mut records = Vec::new();
    let mut stats = RunStatistics {
        min_conv_eig: T::infinity(),
        min_f_minus_sigma: T::infinity(),
        min_increment: T::infinity(),
        min_dt: T::infinity(),
        max_dt: T::zero(),
        halvings: 0,
    };
    let mut failure = None;
    let mut steps = 0usize;
    let mut last_recorded = None;
    let mut dissipation = T::zero();

    let termination = if let Some((node, min_eig)) = stepper.inadmissible_node() {
        failure = Some(Error::AdmissibilityLost { node, min_eig: min_eig.to_f64_lossy() });
        TerminationReason::AdmissibilityLost
    } else {
        loop {
            if stepper.t() >= config.t_max {
                break TerminationReason::TMaxReached;
            }
            if snapshots.is_empty() {
                observe(&stepper, config, &mut stats, &mut ctx);
                ctx.observe_initial(stepper.u(), stepper.geometry(), config);
                push_sample(&stepper, config, steps, &mut ctx, &mut snapshots, &mut records);
                last_recorded = Some(steps);
            }
            if stepper.geometry().residual(domain, sigma) <= config.steady_tol {
                break TerminationReason::Steady;
            }
            let rate_before = max_rate(stepper.geometry(), domain);
            match stepper.advance(config.t_max - stepper.t()) {
                Ok(info) => {
                    steps += 1;
                    stats.min_increment = stats.min_increment.min(info.min_increment);
                    stats.min_dt = stats.min_dt.min(info.dt);
                    stats.max_dt = stats.max_dt.max(info.dt);
                    stats.halvings += info.halvings;
                    dissipation = dissipation + info.dt * T::lit(0.5) * (rate_before + max_rate(stepper.geometry(), domain));
                    ctx.dissipation_partial = dissipation;
                    if info.min_increment < -T::tol(1e-12) {
                        ctx.monotone_ok = false;
                    }
                    observe(&stepper, config, &mut stats, &mut ctx);
                    if steps % config.diag_stride == 0 {
                        push_sample(&stepper, config, steps, &mut ctx, &mut snapshots, &mut records);
                        last_recorded = Some(steps);
                    }
                }
                Err(e) => {
                    failure = Some(e);
                    break TerminationReason::StepUnderflow;
                }
            }
        }
    };
    if !snapshots.is_empty() && last_recorded != Some(steps) {
        push_sample(&stepper, config, steps, &mut ctx, &mut snapshots, &mut records);
    }
    Ok(Trajectory {
        sigma,
        epsilon: config.epsilon,
        snapshots,
        records,
        final_residual: stepper.geometry().residual(domain, sigma),
        final_state: stepper.state(),
        termination,
        steps,
        stats,
        failure,
    })
}

fn max_rate<T: Real>(geom: &NodalGeometry<T>, domain: &DomainDescriptor<T>) -> T {
    domain.interior().map(|j| geom.rate[j]).fold(T::neg_infinity(), T::max)
}

fn observe<T: Real>(stepper: &Stepper<'_, T>, config: &FlowConfig<T>, stats: &mut RunStatistics<T>, ctx: &mut MonitorContext<T>) {
    let geom = stepper.geometry();
    let domain = &config.domain;
    stats.min_conv_eig = stats.min_conv_eig.min(geom.min_conv_interior(domain));
    stats.min_f_minus_sigma = stats.min_f_minus_sigma.min(geom.f_minus_sigma_range(domain, config.sigma).0);
    ctx.observe_step(stepper.u(), geom);
}

fn push_sample<T: Real>(
    stepper: &Stepper<'_, T>,
    config: &FlowConfig<T>,
    step: usize,
    ctx: &mut MonitorContext<T>,
    snapshots: &mut Vec<Snapshot<T>>,
    records: &mut Vec<DiagnosticsRecord<T>>,
) {
    let geom = stepper.geometry();
    let (lo, hi) = geom.f_minus_sigma_range(&config.domain, config.sigma);
    ctx.observe_boundary(stepper.u(), geom, config);
    let a = ctx.min_nu * T::lit(0.5);
    records.push(monitors::record_from_geometry(stepper.t(), step, stepper.u(), geom, config, a, ctx));
    snapshots.push(Snapshot {
        step,
        t: stepper.t(),
        u: stepper.u().to_vec(),
        rate: geom.rate.clone(),
        f_min: lo + config.sigma,
        f_max: hi + config.sigma,
    });
}

/// A converged stationary state and the run that produced it.
#[derive(Clone, Debug)]
pub struct StationarySolution<T> {
    pub state: GraphState<T>,
    pub residual: T,
    pub trajectory: Trajectory<T>,
}

#[derive(Debug)]
pub enum StationaryError<T> {
    Setup(Error),
    /// The flow stopped for a reason other than reaching the steady state.
    NotSteady(Box<Trajectory<T>>),
}

impl<T: Real> fmt::Display for StationaryError<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Setup(e) => write!(f, "{e}"),
            Self::NotSteady(traj) => write!(
                f,
                "flow ended with {} at t = {} after {} steps, residual {}",
                traj.termination, traj.final_state.t, traj.steps, traj.final_residual
            ),
        }
    }
}

impl<T: Real> std::error::Error for StationaryError<T> {}

impl<T> From<Error> for StationaryError<T> {
    fn from(e: Error) -> Self {
        Self::Setup(e)
    }
}

pub fn solve_stationary<T: Real>(config: &FlowConfig<T>) -> Result<StationarySolution<T>, StationaryError<T>> {
    let state = initial_cap(config)?;
    solve_stationary_from(config, state)
}

pub fn solve_stationary_from<T: Real>(
    config: &FlowConfig<T>,
    state: GraphState<T>,
) -> Result<StationarySolution<T>, StationaryError<T>> {
    let trajectory = run_flow_from(config, state)?;
    if !trajectory.is_steady() {
        return Err(StationaryError::NotSteady(Box::new(trajectory)));
    }
    Ok(StationarySolution { state: trajectory.final_state.clone(), residual: trajectory.final_residual, trajectory })
}

#[derive(Clone, Debug)]
pub struct ContinuationLevel<T> {
    pub k: usize,
    pub epsilon: T,
    pub solution: StationarySolution<T>,
    /// `w` at the boundary-adjacent nodes of the stationary state (maximum).
    pub boundary_w: T,
}

#[derive(Clone, Debug)]
pub struct ContinuationResult<T> {
    pub levels: Vec<ContinuationLevel<T>>,
    /// `d_k = sup |u^{eps_k} - u^{eps_{k+1}}|`.
    pub cauchy: Vec<T>,
    /// `d_k / eps_k`.
    pub cauchy_over_eps: Vec<T>,
}

/// Stationary states for `eps_k = eps 2^{-k}`, `k = 0..=k_max`.
///
/// Level 0 starts from the initial cap. Each later level starts from the
/// previous stationary state shifted down by `eps_{k-1} - eps_k`. Lowering
/// a convex cap increases its hyperbolic curvatures, so the shifted state
/// has `F > sigma` and flows upward again.
pub fn epsilon_continuation<T: Real>(
    config: &FlowConfig<T>,
    k_max: usize,
) -> Result<ContinuationResult<T>, StationaryError<T>> {
    if k_max == 0 {
        return Err(StationaryError::Setup(param("continuation needs k_max >= 1")));
    }
    let mut levels: Vec<ContinuationLevel<T>> = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let eps = config.epsilon / T::lit(2f64.powi(k as i32));
        let cfg = config.with_epsilon(eps)?;
        let solution = match levels.last() {
            None => solve_stationary(&cfg)?,
            Some(prev) => {
                let shift = prev.epsilon - eps;
                let u = prev.solution.state.u.iter().map(|&v| v - shift).collect();
                solve_stationary_from(&cfg, GraphState::new(u, T::zero(), eps))?
            }
        };
        let geom = NodalGeometry::evaluate(&solution.state.u, &cfg);
        let boundary_w = cfg.domain.boundary_adjacent_nodes().iter().map(|&j| geom.w[j]).fold(T::zero(), T::max);
        levels.push(ContinuationLevel { k, epsilon: eps, solution, boundary_w });
    }
    let cauchy: Vec<T> = levels
        .windows(2)
        .map(|p| {
            p[0].solution.state.u.iter().zip(&p[1].solution.state.u).map(|(&a, &b)| (a - b).abs()).fold(T::zero(), T::max)
        })
        .collect();
    let cauchy_over_eps = cauchy.iter().zip(&levels).map(|(&d, l)| d / l.epsilon).collect();
    Ok(ContinuationResult { levels, cauchy, cauchy_over_eps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphgeom::DomainKind;
    use crate::symfunc::eval_matrix_function;

    fn ball(nodes: usize) -> FlowConfig<f64> {
        let domain = DomainDescriptor::ball(2, 1.0, nodes).unwrap();
        FlowConfig::new(domain, CurvatureFunctionSpec::gauss_root(2).unwrap(), 0.6).unwrap()
    }

    #[test]
    fn initial_cap_height_and_boundary() {
        let cfg = ball(400);
        assert_eq!(cfg.sigma_init, 0.8);
        let s = initial_cap(&cfg).unwrap();
        assert!((s.u[0] - (0.2 / 0.6 + 1e-3)).abs() < 1e-14);
        assert_eq!(*s.u.last().unwrap(), cfg.epsilon);
        // lifting a sphere by eps lowers its curvature to sigma' - eps / R_e'
        let target = 0.8 - cfg.epsilon * 0.6;
        let geom = NodalGeometry::evaluate(&s.u, &cfg);
        let worst = cfg.domain.interior().map(|j| (geom.f[j] - target).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-5, "{worst}");
    }

    fn assert_coefficients_match_operator(fspec: &CurvatureFunctionSpec, sigma: f64, u: f64, du: &[f64], d2u: &SquareMatrix<f64>) {
        let n = du.len();
        let c = coefficients_at(fspec, sigma, u, du, d2u, 0).unwrap();
        let f = eval_matrix_function(fspec, &point_geometry(u, du, d2u).a).unwrap();
        let u_t = u * gradient_weight(du) * (f - sigma);
        let g = |u: f64, du: &[f64], d2u: &SquareMatrix<f64>, u_t: f64| linearized_operator(fspec, u, du, d2u, u_t).unwrap();
        let h = 1e-6;
        let close = |fd: f64, exact: f64, what: &str| {
            assert!((fd - exact).abs() <= 1e-4 * exact.abs().max(1.0), "{what}: fd {fd} vs {exact}");
        };
        for k in 0..n {
            for l in k..n {
                let mut p = d2u.clone();
                let mut m = d2u.clone();
                p[(k, l)] += h;
                m[(k, l)] -= h;
                if k != l {
                    p[(l, k)] += h;
                    m[(l, k)] -= h;
                }
                let fd = (g(u, du, &p, u_t) - g(u, du, &m, u_t)) / (2.0 * h);
                let exact = if k == l { c.g_kl[(k, k)] } else { c.g_kl[(k, l)] + c.g_kl[(l, k)] };
                close(fd, exact, "g_kl");
            }
            let mut p = du.to_vec();
            let mut m = du.to_vec();
            p[k] += h;
            m[k] -= h;
            close((g(u, &p, d2u, u_t) - g(u, &m, d2u, u_t)) / (2.0 * h), c.g_s[k], "g_s");
        }
        close((g(u + h, du, d2u, u_t) - g(u - h, du, d2u, u_t)) / (2.0 * h), c.g_u, "g_u");
        close((g(u, du, d2u, u_t + h) - g(u, du, d2u, u_t - h)) / (2.0 * h), c.g_t, "g_t");
    }

    #[test]
    fn linearized_coefficients_match_finite_differences() {
        let d2u = SquareMatrix::from_rows(&[vec![-0.5, 0.1], vec![0.1, -0.3]]);
        for fspec in [
            CurvatureFunctionSpec::mean(2).unwrap(),
            CurvatureFunctionSpec::gauss_root(2).unwrap(),
            CurvatureFunctionSpec::hessian_quotient(2, 1).unwrap(),
        ] {
            assert_coefficients_match_operator(&fspec, 0.6, 0.7, &[0.3, -0.2], &d2u);
        }
        let d3 = SquareMatrix::from_rows(&[vec![-0.4, 0.05, 0.0], vec![0.05, -0.2, 0.1], vec![0.0, 0.1, -0.6]]);
        let fspec = CurvatureFunctionSpec::hessian_quotient(3, 2).unwrap();
        assert_coefficients_match_operator(&fspec, 0.5, 0.8, &[0.2, 0.1, -0.3], &d3);
    }

    #[test]
    fn linearized_coefficients_on_flat_and_horosphere() {
        let fspec = CurvatureFunctionSpec::mean(2).unwrap();
        let flat = coefficients_at::<f64>(&fspec, 0.6, 0.5, &[0.0, 0.0], &SquareMatrix::zeros(2), 0).unwrap();
        assert!((flat.g_t - 2.0).abs() < 1e-14);
        // a horizontal plane is a horosphere: A = I and F^{ij} = I / n
        for k in 0..2 {
            assert!((flat.g_kl[(k, k)] + 0.5 / 2.0).abs() < 1e-14, "{}", flat.g_kl[(k, k)]);
            assert!(flat.g_s[k].abs() < 1e-14);
        }
        assert!(flat.g_kl[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ball(100);
        cfg.sigma = 1.2;
        assert!(cfg.validate().unwrap_err().to_string().contains("sigma must lie in (0,1)"));
        let mut cfg = ball(100);
        cfg.sigma_init = 0.5;
        assert!(cfg.validate().is_err());
        let mut cfg = ball(100);
        cfg.epsilon = 0.2;
        assert!(cfg.validate().is_err());
        let cfg = ball(100);
        assert!(cfg.with_epsilon(0.0).is_err());
        let domain = DomainDescriptor::ball(3, 1.0, 100).unwrap();
        assert!(FlowConfig::new(domain, CurvatureFunctionSpec::gauss_root(2).unwrap(), 0.6).is_err());
    }

    #[test]
    fn horosphere_rate() {
        let domain = DomainDescriptor::<f64>::interval(1.0, 50).unwrap();
        let cfg = FlowConfig::new(domain, CurvatureFunctionSpec::mean(1).unwrap(), 0.6).unwrap();
        let geom = NodalGeometry::evaluate(&vec![0.5; 50], &cfg);
        for j in 1..49 {
            assert!((geom.rate[j] - 0.2).abs() < 1e-15);
        }
        assert_eq!(geom.rate[0], 0.0);
    }

    #[test]
    fn fast_path_matches_matrix_path() {
        let cfg = ball(64);
        let s = initial_cap(&cfg).unwrap();
        let geom = NodalGeometry::evaluate(&s.u, &cfg);
        for j in [0, 1, 17, 40, 62] {
            let (du, d2u) = cfg.domain.cartesian_derivatives(j, geom.du[j], geom.d2u[j]);
            let p = point_geometry(s.u[j], &du, &d2u);
            assert!((p.kappa[0] - geom.kappa_max[j]).abs() < 1e-12);
            assert!((p.kappa[1] - geom.kappa_min[j]).abs() < 1e-12);
            assert!((p.conv_min_eig - geom.conv_min[j]).abs() < 1e-12);
            let f = cfg.fspec.value_unchecked(&p.kappa);
            assert!((f - geom.f[j]).abs() < 1e-12);
            let fij = f_matrix_derivative(&cfg.fspec, &p.a).unwrap();
            assert!((fij.trace() - geom.sum_fii[j]).abs() < 1e-12);
        }
    }

    fn stationary_rate_error(nodes: usize) -> f64 {
        // the eps = 0 cap is exactly stationary, so u_t is pure truncation error
        let cfg = ball(nodes);
        let cap = CapProfile::new(1.0, 0.6).unwrap();
        let u: Vec<f64> = cfg.domain.coordinates().iter().map(|&r| cap.height(r)).collect();
        let geom = NodalGeometry::evaluate(&u, &cfg);
        cfg.domain.interior().map(|j| geom.rate[j].abs()).fold(0.0, f64::max)
    }

    #[test]
    fn stationary_cap_rate_is_second_order() {
        let e: Vec<f64> = [100, 200, 400].iter().map(|&n| stationary_rate_error(n)).collect();
        for p in e.windows(2) {
            assert!((p[0] / p[1]).log2() >= 1.9, "{e:?}");
        }
    }

    #[test]
    fn rhs_rejects_non_admissible_states() {
        let cfg = ball(32);
        let mut u: Vec<f64> = cfg.domain.coordinates().iter().map(|&r| 1.001 - r * r).collect();
        *u.last_mut().unwrap() = cfg.epsilon;
        let err = flow_rhs(&GraphState::new(u, 0.0, cfg.epsilon), &cfg).unwrap_err();
        assert!(matches!(err, Error::AdmissibilityLost { node: 0, .. }), "{err}");
    }

    #[test]
    fn constant_f_gives_zero_rate() {
        // the lifted cap at sigma has F = sigma up to truncation
        let cfg = ball(200);
        let cap = cfg.stationary_cap().unwrap();
        let geom = NodalGeometry::evaluate(&cap.sample(&cfg.domain), &cfg);
        assert!(geom.residual(&cfg.domain, 0.6) < 1e-4);
        assert!(cfg.domain.interior().all(|j| geom.rate[j].abs() < 1e-4));
    }

    #[test]
    fn one_step_keeps_convexity_and_increases_u() {
        let cfg = ball(200);
        let s = initial_cap(&cfg).unwrap();
        let (next, dt) = step_explicit(&s, &cfg).unwrap();
        assert!(dt > 0.0 && next.t == dt);
        let geom = NodalGeometry::evaluate(&next.u, &cfg);
        assert!(geom.min_conv_interior(&cfg.domain) > 0.0);
        for j in cfg.domain.interior() {
            assert!(next.u[j] > s.u[j]);
        }
        assert_eq!(*next.u.last().unwrap(), cfg.epsilon);
    }

    #[test]
    fn step_from_stationary_cap_barely_moves() {
        let cfg = ball(200);
        let cap = cfg.stationary_cap().unwrap();
        let s = GraphState::new(cap.sample(&cfg.domain), 0.0, cfg.epsilon);
        let (next, dt) = step_explicit(&s, &cfg).unwrap();
        let h = cfg.domain.spacing();
        let moved = next.u.iter().zip(&s.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(moved <= dt * 10.0 * h * h, "{moved} vs {}", dt * h * h);
    }

    #[test]
    fn zero_t_max_gives_empty_trajectory() {
        let mut cfg = ball(64);
        cfg.t_max = 0.0;
        let traj = run_flow(&cfg).unwrap();
        assert_eq!(traj.termination, TerminationReason::TMaxReached);
        assert!(traj.snapshots.is_empty() && traj.records.is_empty());
        assert_eq!(traj.steps, 0);
    }

    #[test]
    fn stationary_start_is_steady_at_once() {
        let mut cfg = ball(64);
        cfg.steady_tol = 1e-3;
        let cap = cfg.stationary_cap().unwrap();
        let traj = run_flow_from(&cfg, GraphState::new(cap.sample(&cfg.domain), 0.0, cfg.epsilon)).unwrap();
        assert_eq!(traj.termination, TerminationReason::Steady);
        assert!(traj.steps <= 2);
    }

    #[test]
    fn t_max_stops_a_short_run() {
        let mut cfg = ball(48);
        cfg.t_max = 0.05;
        cfg.diag_stride = 10;
        let traj = run_flow(&cfg).unwrap();
        assert_eq!(traj.termination, TerminationReason::TMaxReached);
        assert!((traj.final_state.t - 0.05).abs() < 1e-15);
        assert!(traj.snapshots.windows(2).all(|p| p[1].t > p[0].t));
        assert_eq!(traj.snapshots.len(), traj.records.len());
        assert!(traj.stats.min_increment >= 0.0);
        assert!(traj.snapshots.iter().all(|s| s.u.len() == 48));
    }

    #[test]
    fn inadmissible_start_terminates() {
        let cfg = ball(32);
        let mut u: Vec<f64> = cfg.domain.coordinates().iter().map(|&r| 1.001 - r * r).collect();
        *u.last_mut().unwrap() = cfg.epsilon;
        let traj = run_flow_from(&cfg, GraphState::new(u, 0.0, cfg.epsilon)).unwrap();
        assert_eq!(traj.termination, TerminationReason::AdmissibilityLost);
        assert!(traj.failure.is_some());
    }

    #[test]
    fn interval_flow_runs() {
        let domain = DomainDescriptor::<f64>::new(DomainKind::Interval1D, 1, 1.0, 40).unwrap();
        let mut cfg = FlowConfig::new(domain, CurvatureFunctionSpec::mean(1).unwrap(), 0.6).unwrap();
        cfg.t_max = 0.1;
        let traj = run_flow(&cfg).unwrap();
        assert_eq!(traj.termination, TerminationReason::TMaxReached);
        let u = &traj.final_state.u;
        assert_eq!((u[0], u[39]), (cfg.epsilon, cfg.epsilon));
        assert!((u[10] - u[29]).abs() < 1e-12, "symmetric");
    }

    #[test]
    fn single_precision_step() {
        let domain = DomainDescriptor::<f32>::ball(2, 1.0, 64).unwrap();
        let cfg = FlowConfig::new(domain, CurvatureFunctionSpec::gauss_root(2).unwrap(), 0.6).unwrap();
        let s = initial_cap(&cfg).unwrap();
        let (next, dt) = step_explicit(&s, &cfg).unwrap();
        assert!(dt > 0.0 && next.u[0] > s.u[0]);
    }
}
