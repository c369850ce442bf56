//! Run-time checks of the a priori estimates, the evolution identities of
//! the normal angle and the metric, the comparison principle, and the
//! dissipation identity `u(T) - u(0) = int_0^T (F - sigma) u w dt`.

use serde::Serialize;

use crate::error::{param, Result};
use crate::flow::{initial_cap, FlowConfig, NodalGeometry, Stepper, Trajectory};
use crate::graphgeom::{discrete_derivatives, DomainDescriptor, DomainKind, GraphState};
use crate::scalar::Real;
use crate::verdict::Verdict;

#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct MonitorTolerances {
    /// Relative slack on the interior curvature bound.
    pub ratio: f64,
    /// Slack on the graph ordering in the comparison check.
    pub order: f64,
    /// Absolute slack on pointwise inequalities.
    pub tol: f64,
    /// Sup-norm agreement required of two stationary limits.
    pub limit: f64,
    /// Relative tolerance of the dissipation identity.
    pub dissipation: f64,
    /// Allowed excess of the boundary gradient over `1/sigma`.
    pub gradient_slack: f64,
    /// Allowed growth of the boundary `u |D^2 u|` between run halves.
    pub boundary_growth: f64,
}

impl Default for MonitorTolerances {
    fn default() -> Self {
        Self {
            ratio: 0.05,
            order: 1e-10,
            tol: 1e-8,
            limit: 1e-3,
            dissipation: 2e-2,
            gradient_slack: 0.5,
            boundary_growth: 0.05,
        }
    }
}

/// Running space-time quantities a snapshot is compared against.
///
/// The parabolic boundary is the initial slice plus the boundary nodes at
/// every recorded time.
#[derive(Clone, Debug, Default)]
pub struct MonitorContext<T> {
    pub max_u: T,
    pub min_nu: T,
    /// `(kappa_max, nu)` over the parabolic boundary.
    pub boundary_samples: Vec<(T, T)>,
    pub boundary_inv_nu_max: T,
    /// Largest `(sigma - nu) / u` over the parabolic boundary.
    pub boundary_angle_max: T,
    pub monotone_ok: bool,
    pub dissipation_partial: T,
}

impl<T: Real> MonitorContext<T> {
    pub fn new() -> Self {
        Self {
            max_u: T::neg_infinity(),
            min_nu: T::infinity(),
            boundary_samples: Vec::new(),
            boundary_inv_nu_max: T::neg_infinity(),
            boundary_angle_max: T::neg_infinity(),
            monotone_ok: true,
            dissipation_partial: T::zero(),
        }
    }

    /// A context in which `state` is the whole history.
    pub fn from_state(state: &GraphState<T>, config: &FlowConfig<T>) -> Self {
        let geom = NodalGeometry::evaluate(&state.u, config);
        let mut ctx = Self::new();
        ctx.observe_step(&state.u, &geom);
        ctx.observe_initial(&state.u, &geom, config);
        ctx.observe_boundary(&state.u, &geom, config);
        ctx
    }

    pub fn observe_step(&mut self, u: &[T], geom: &NodalGeometry<T>) {
        self.max_u = u.iter().copied().fold(self.max_u, T::max);
        self.min_nu = geom.nu.iter().copied().fold(self.min_nu, T::min);
    }

    pub fn observe_initial(&mut self, u: &[T], geom: &NodalGeometry<T>, config: &FlowConfig<T>) {
        for j in 0..u.len() {
            self.add_boundary_point(j, u, geom, config.sigma);
        }
    }

    pub fn observe_boundary(&mut self, u: &[T], geom: &NodalGeometry<T>, config: &FlowConfig<T>) {
        for j in config.domain.boundary_nodes() {
            self.add_boundary_point(j, u, geom, config.sigma);
        }
    }

    fn add_boundary_point(&mut self, j: usize, u: &[T], geom: &NodalGeometry<T>, sigma: T) {
        self.boundary_samples.push((geom.kappa_max[j], geom.nu[j]));
        self.boundary_inv_nu_max = self.boundary_inv_nu_max.max(T::one() / geom.nu[j]);
        self.boundary_angle_max = self.boundary_angle_max.max((sigma - geom.nu[j]) / u[j]);
    }

    /// `max kappa_max / (nu - a)` over the parabolic boundary.
    pub fn boundary_ratio(&self, a: T) -> T {
        self.boundary_samples.iter().map(|&(k, nu)| k / (nu - a)).fold(T::neg_infinity(), T::max)
    }
}

/// One row of diagnostics. Column order of [`DiagnosticsRecord::fields`] is
/// the CSV column order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsRecord<T> {
    pub t: T,
    pub step: usize,
    pub min_conv_eig: T,
    pub min_f_minus_sigma: T,
    pub max_f_minus_sigma: T,
    pub max_w_interior: T,
    pub w_at_boundary_adjacent: T,
    pub min_nu_interior: T,
    pub nu_at_boundary: T,
    pub max_kappa: T,
    /// `max kappa_max / (nu - a)` over interior nodes.
    pub max_ratio_interior: T,
    pub boundary_ratio: T,
    pub a_used: T,
    /// `max(4 / a^3, boundary_ratio)`.
    pub curvature_threshold: T,
    pub max_u_d2u_boundary: T,
    /// Interior `1/nu` and its bound at the tightest node.
    pub gradient_lhs: T,
    pub gradient_rhs: T,
    /// Largest `(sigma - nu) / u` inside and on the parabolic boundary.
    pub angle_max_interior: T,
    pub angle_max_boundary: T,
    pub nu_at_angle_max: T,
    /// Right side of the literal angle inequality at the interior maximiser.
    pub angle_literal_rhs: T,
    /// Largest `(sigma - nu)` on the boundary nodes.
    pub boundary_angle_defect: T,
    pub monotone_ok: bool,
    pub dissipation_partial: T,
    pub curvature_ok: bool,
    pub gradient_ok: bool,
    pub angle_ok: bool,
}

impl<T: Real> DiagnosticsRecord<T> {
    pub const COLUMNS: [&'static str; 28] = [
        "t",
        "step",
        "min_conv_eig",
        "min_F_minus_sigma",
        "max_F_minus_sigma",
        "max_w_interior",
        "w_at_boundary_adjacent",
        "min_nu_interior",
        "nu_at_boundary",
        "max_kappa",
        "max_ratio_interior",
        "boundary_ratio",
        "a_used",
        "curvature_threshold",
        "max_uD2u_boundary",
        "gradient_lhs",
        "gradient_rhs",
        "angle_max_interior",
        "angle_max_boundary",
        "nu_at_angle_max",
        "angle_literal_rhs",
        "boundary_angle_defect",
        "monotone_ok",
        "dissipation_partial",
        "curvature_ok",
        "gradient_ok",
        "angle_ok",
        "all_ok",
    ];

    /// Values in [`Self::COLUMNS`] order; flags are 0 or 1.
    pub fn fields(&self) -> [f64; 28] {
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        let f = |x: T| x.to_f64_lossy();
        [
            f(self.t),
            self.step as f64,
            f(self.min_conv_eig),
            f(self.min_f_minus_sigma),
            f(self.max_f_minus_sigma),
            f(self.max_w_interior),
            f(self.w_at_boundary_adjacent),
            f(self.min_nu_interior),
            f(self.nu_at_boundary),
            f(self.max_kappa),
            f(self.max_ratio_interior),
            f(self.boundary_ratio),
            f(self.a_used),
            f(self.curvature_threshold),
            f(self.max_u_d2u_boundary),
            f(self.gradient_lhs),
            f(self.gradient_rhs),
            f(self.angle_max_interior),
            f(self.angle_max_boundary),
            f(self.nu_at_angle_max),
            f(self.angle_literal_rhs),
            f(self.boundary_angle_defect),
            b(self.monotone_ok),
            f(self.dissipation_partial),
            b(self.curvature_ok),
            b(self.gradient_ok),
            b(self.angle_ok),
            b(self.curvature_ok && self.gradient_ok && self.angle_ok),
        ]
    }
}

/// Diagnostics of `state` against the running quantities in `ctx`.
///
/// `a` must satisfy `0 < 2a <= min nu` over the state.
pub fn estimate_monitors<T: Real>(
    state: &GraphState<T>,
    config: &FlowConfig<T>,
    a: T,
    ctx: &MonitorContext<T>,
) -> Result<DiagnosticsRecord<T>> {
    if state.u.len() != config.domain.node_count() {
        return Err(param("state and domain have different node counts"));
    }
    let geom = NodalGeometry::evaluate(&state.u, config);
    let min_nu = geom.nu.iter().copied().fold(T::infinity(), T::min);
    if !(a > T::zero()) || a + a > min_nu * (T::one() + T::epsilon()) {
        return Err(param(format!("need 0 < 2a <= min nu = {min_nu}, got a = {a}")));
    }
    Ok(record_from_geometry(state.t, 0, &state.u, &geom, config, a, ctx))
}

pub(crate) fn record_from_geometry<T: Real>(
    t: T,
    step: usize,
    u: &[T],
    geom: &NodalGeometry<T>,
    config: &FlowConfig<T>,
    a: T,
    ctx: &MonitorContext<T>,
) -> DiagnosticsRecord<T> {
    let tol = MonitorTolerances::default();
    let domain = &config.domain;
    let sigma = config.sigma;
    let n = domain.n();
    let slack = T::lit(tol.tol);
    let interior = domain.interior();

    let (min_fs, max_fs) = geom.f_minus_sigma_range(domain, sigma);
    let mut max_w = T::neg_infinity();
    let mut min_nu = T::infinity();
    let mut max_kappa = T::neg_infinity();
    let mut max_ratio = T::neg_infinity();
    let mut gradient = (T::neg_infinity(), T::neg_infinity(), T::zero());
    let mut angle = (T::neg_infinity(), 0usize);
    for j in interior.clone() {
        max_w = max_w.max(geom.w[j]);
        min_nu = min_nu.min(geom.nu[j]);
        max_kappa = max_kappa.max(geom.kappa_max[j]);
        max_ratio = max_ratio.max(geom.kappa_max[j] / (geom.nu[j] - a));
        let lhs = T::one() / geom.nu[j];
        let rhs = (ctx.max_u / u[j]).max(ctx.boundary_inv_nu_max);
        if lhs - rhs > gradient.2 || gradient.0 == T::neg_infinity() {
            gradient = (lhs, rhs, lhs - rhs);
        }
        let g = (sigma - geom.nu[j]) / u[j];
        if g > angle.0 {
            angle = (g, j);
        }
    }
    let boundary_ratio = ctx.boundary_ratio(a);
    let threshold = (T::lit(4.0) / (a * a * a)).max(boundary_ratio);
    let curvature_ok = max_ratio <= threshold * T::lit(1.0 + tol.ratio);
    let gradient_ok = gradient.0 <= gradient.1 + slack;

    let j_star = angle.1;
    let nu_star = geom.nu[j_star];
    let angle_ok = !(angle.0 > ctx.boundary_angle_max) || nu_star >= sigma / T::lit(3.0) - slack;
    let literal_rhs = (sigma * T::lit(2.0 / 3.0) / u[j_star]).max(ctx.boundary_angle_max);

    let adjacent = domain.boundary_adjacent_nodes();
    let w_adj = adjacent.iter().map(|&j| geom.w[j]).fold(T::neg_infinity(), T::max);
    let u_d2u = adjacent
        .iter()
        .map(|&j| u[j] * hessian_norm(geom.du[j], geom.d2u[j], domain.coordinate(j), n))
        .fold(T::neg_infinity(), T::max);
    let boundary = domain.boundary_nodes();
    let nu_boundary = boundary.iter().map(|&j| geom.nu[j]).fold(T::infinity(), T::min);

    DiagnosticsRecord {
        t,
        step,
        min_conv_eig: geom.min_conv_interior(domain),
        min_f_minus_sigma: min_fs,
        max_f_minus_sigma: max_fs,
        max_w_interior: max_w,
        w_at_boundary_adjacent: w_adj,
        min_nu_interior: min_nu,
        nu_at_boundary: nu_boundary,
        max_kappa,
        max_ratio_interior: max_ratio,
        boundary_ratio,
        a_used: a,
        curvature_threshold: threshold,
        max_u_d2u_boundary: u_d2u,
        gradient_lhs: gradient.0,
        gradient_rhs: gradient.1,
        angle_max_interior: angle.0,
        angle_max_boundary: ctx.boundary_angle_max,
        nu_at_angle_max: nu_star,
        angle_literal_rhs: literal_rhs,
        boundary_angle_defect: sigma - nu_boundary,
        monotone_ok: ctx.monotone_ok,
        dissipation_partial: ctx.dissipation_partial,
        curvature_ok,
        gradient_ok,
        angle_ok,
    }
}

/// Frobenius norm of the Hessian of a radial function.
fn hessian_norm<T: Real>(du: T, d2u: T, r: T, n: usize) -> T {
    if n == 1 {
        return d2u.abs();
    }
    let tangential = if r > T::zero() { du / r } else { d2u };
    (d2u * d2u + T::from_usize_lossy(n - 1) * tangential * tangential).sqrt()
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct EvolutionResiduals<T> {
    /// Metric: `d/dt (1 + u'^2)` against `-2 V u''/w` plus tangential transport.
    pub evo7: T,
    /// Angle: `d/dt nu` against `-u'V'/w^2` plus tangential transport.
    pub evo10: T,
}

/// Residuals of the evolution of `nu = 1/w` and of the radial metric
/// component, with finite differences in time and the right-hand sides at
/// the midpoint state.
///
/// The identities hold along the normal velocity `V = (F - sigma) u`. A
/// graph point moves vertically, which is the normal motion plus the
/// tangential field `xi = V Du / w`, so the graph-coordinate rates carry the
/// extra Lie-derivative terms `xi . D nu` and `L_xi g`.
pub fn evolution_identity_residuals<T: Real>(
    before: &GraphState<T>,
    after: &GraphState<T>,
    dt: T,
    config: &FlowConfig<T>,
) -> Result<EvolutionResiduals<T>> {
    let domain = &config.domain;
    let len = domain.node_count();
    if before.u.len() != len || after.u.len() != len {
        return Err(param("states are not on the configured grid"));
    }
    if !(dt > T::zero()) {
        return Err(param(format!("dt must be positive, got {dt}")));
    }
    let half = T::lit(0.5);
    let mid: Vec<T> = before.u.iter().zip(&after.u).map(|(&a, &b)| (a + b) * half).collect();
    let geom = NodalGeometry::evaluate(&mid, config);
    let v: Vec<T> = (0..len)
        .map(|j| if domain.is_boundary(j) { T::zero() } else { (geom.f[j] - config.sigma) * mid[j] })
        .collect();
    let dv = discrete_derivatives(&v, domain).du;
    let d0 = discrete_derivatives(&before.u, domain).du;
    let d1 = discrete_derivatives(&after.u, domain).du;

    let mut evo7 = T::zero();
    let mut evo10 = T::zero();
    for j in domain.interior() {
        let (p, pp, w) = (geom.du[j], geom.d2u[j], geom.w[j]);
        let dw = p * pp / w;
        let nu0 = T::one() / (T::one() + d0[j] * d0[j]).sqrt();
        let nu1 = T::one() / (T::one() + d1[j] * d1[j]).sqrt();
        let nu_rate = -p * dv[j] / (w * w) - v[j] * p * dw / (w * w * w);
        evo10 = evo10.max(((nu1 - nu0) / dt - nu_rate).abs());

        let g = T::one() + p * p;
        let xi = v[j] * p / w;
        let dxi = dv[j] * p / w + v[j] * pp / w - v[j] * p * dw / (w * w);
        let g_rate = -T::lit(2.0) * v[j] * pp / w + xi * T::lit(2.0) * p * pp + T::lit(2.0) * g * dxi;
        let g_diff = (d1[j] * d1[j] - d0[j] * d0[j]) / dt;
        evo7 = evo7.max((g_diff - g_rate).abs());
    }
    Ok(EvolutionResiduals { evo7, evo10 })
}

/// Residuals of single Euler steps of decreasing size from one state, plus
/// the spatial floor at a step far below the others.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityStudy {
    pub h: f64,
    pub t_start: f64,
    pub dts: Vec<f64>,
    pub evo7: Vec<f64>,
    pub evo10: Vec<f64>,
    pub evo7_orders: Vec<f64>,
    pub evo10_orders: Vec<f64>,
    pub floor_dt: f64,
    pub evo7_floor: f64,
    pub evo10_floor: f64,
}

impl IdentityStudy {
    pub fn min_evo10_order(&self) -> f64 {
        self.evo10_orders.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Flows `warmup` steps from the initial cap, then measures the identity
/// residuals for `levels` steps `dt0, dt0/2, ...` and at `floor_dt`.
pub fn identity_study<T: Real>(
    config: &FlowConfig<T>,
    warmup: usize,
    dt0: T,
    levels: usize,
    floor_dt: T,
) -> Result<IdentityStudy> {
    if levels < 2 {
        return Err(param("identity study needs at least two step sizes"));
    }
    let mut stepper = Stepper::new(config, initial_cap(config)?);
    for _ in 0..warmup {
        stepper.advance(T::infinity())?;
    }
    let before = stepper.state();
    let rate = stepper.geometry().rate.clone();
    let measure = |dt: T| -> Result<EvolutionResiduals<T>> {
        let mut u: Vec<T> = before.u.iter().zip(&rate).map(|(&u, &r)| u + dt * r).collect();
        for j in config.domain.boundary_nodes() {
            u[j] = config.epsilon;
        }
        let after = GraphState::new(u, before.t + dt, config.epsilon);
        evolution_identity_residuals(&before, &after, dt, config)
    };
    let mut dts = Vec::new();
    let mut evo7 = Vec::new();
    let mut evo10 = Vec::new();
    let mut dt = dt0;
    for _ in 0..levels {
        let r = measure(dt)?;
        dts.push(dt.to_f64_lossy());
        evo7.push(r.evo7.to_f64_lossy());
        evo10.push(r.evo10.to_f64_lossy());
        dt = dt * T::lit(0.5);
    }
    let floor = measure(floor_dt)?;
    let orders = |r: &[f64]| r.windows(2).map(|p| (p[0] / p[1]).log2()).collect::<Vec<_>>();
    Ok(IdentityStudy {
        h: config.domain.spacing().to_f64_lossy(),
        t_start: before.t.to_f64_lossy(),
        evo7_orders: orders(&evo7),
        evo10_orders: orders(&evo10),
        dts,
        evo7,
        evo10,
        floor_dt: floor_dt.to_f64_lossy(),
        evo7_floor: floor.evo7.to_f64_lossy(),
        evo10_floor: floor.evo10.to_f64_lossy(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DissipationReport<T> {
    /// Trapezoid integral of `(F - sigma) u w` at each node.
    pub per_node: Vec<T>,
    pub max: T,
    /// The same integral up to the snapshot nearest `T / 2`.
    pub max_at_half_time: T,
    /// `u(T) - u(0)` at each node.
    pub increments: Vec<T>,
    pub max_increment: T,
    /// `max_x |integral - increment|`.
    pub discrepancy: T,
}

pub fn dissipation_integral<T: Real>(trajectory: &Trajectory<T>) -> Result<DissipationReport<T>> {
    let snaps = &trajectory.snapshots;
    if snaps.len() < 2 {
        return Err(param("dissipation integral needs at least two snapshots"));
    }
    let len = snaps[0].u.len();
    let half_t = snaps.last().map(|s| s.t * T::lit(0.5)).unwrap_or_else(T::zero);
    let mut acc = vec![T::zero(); len];
    let mut at_half = None;
    for p in snaps.windows(2) {
        let dt = p[1].t - p[0].t;
        for (j, a) in acc.iter_mut().enumerate() {
            *a = *a + dt * T::lit(0.5) * (p[0].rate[j] + p[1].rate[j]);
        }
        if at_half.is_none() && p[1].t >= half_t {
            at_half = Some(acc.iter().copied().fold(T::neg_infinity(), T::max));
        }
    }
    let first = &snaps[0].u;
    let last = &snaps[snaps.len() - 1].u;
    let increments: Vec<T> = last.iter().zip(first).map(|(&b, &a)| b - a).collect();
    let discrepancy = acc.iter().zip(&increments).map(|(&i, &d)| (i - d).abs()).fold(T::zero(), T::max);
    Ok(DissipationReport {
        max: acc.iter().copied().fold(T::neg_infinity(), T::max),
        max_at_half_time: at_half.unwrap_or_else(T::zero),
        max_increment: increments.iter().map(|d| d.abs()).fold(T::zero(), T::max),
        per_node: acc,
        increments,
        discrepancy,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    pub verdict: Verdict,
    pub ordering: Verdict,
    pub limits: Verdict,
    pub matched_times: usize,
    /// Matched times at which `sup F_1 < inf F_2`.
    pub hypothesis_times: usize,
    pub hypothesis_at_start: bool,
    /// Smallest `u_1 - u_2` over interior nodes at hypothesis times.
    pub min_order_gap: f64,
    /// `sup |u_1 - u_2|` of the final states.
    pub limit_difference: f64,
    pub tol_order: f64,
    pub tol_limit: f64,
}

/// Checks that `traj1` stays above `traj2` whenever `sup F_1 < inf F_2` at
/// matched times, and that the two stationary limits agree.
///
/// `traj2` is linearly interpolated in time at the snapshot times of
/// `traj1` that it covers.
pub fn comparison_check<T: Real>(
    traj1: &Trajectory<T>,
    traj2: &Trajectory<T>,
    domain: &DomainDescriptor<T>,
    tol: &MonitorTolerances,
) -> Result<ComparisonReport> {
    let len = domain.node_count();
    if traj1.final_state.u.len() != len || traj2.final_state.u.len() != len {
        return Err(param("trajectories are not on the same grid"));
    }
    if (traj1.sigma - traj2.sigma).abs() > T::epsilon() || (traj1.epsilon - traj2.epsilon).abs() > T::epsilon() {
        return Err(param("trajectories have different sigma or eps"));
    }
    let tol_order = T::lit(tol.order);
    let mut matched = 0;
    let mut hyp = 0;
    let mut hyp_start = false;
    let mut min_gap = T::infinity();
    let s2 = &traj2.snapshots;
    let mut k = 0;
    for s1 in &traj1.snapshots {
        let Some(last2) = s2.last() else { break };
        if s1.t > last2.t {
            break;
        }
        while k + 1 < s2.len() && s2[k + 1].t < s1.t {
            k += 1;
        }
        let (u2, f2_min): (Vec<T>, T) = if s2.len() == 1 || s1.t <= s2[k].t {
            (s2[k].u.clone(), s2[k].f_min)
        } else {
            let (a, b) = (&s2[k], &s2[k + 1]);
            let theta = (s1.t - a.t) / (b.t - a.t);
            let lerp = |x: T, y: T| x + theta * (y - x);
            (a.u.iter().zip(&b.u).map(|(&x, &y)| lerp(x, y)).collect(), lerp(a.f_min, b.f_min))
        };
        matched += 1;
        if s1.f_max < f2_min {
            hyp += 1;
            if s1.step == 0 {
                hyp_start = true;
            }
            for j in domain.interior() {
                min_gap = min_gap.min(s1.u[j] - u2[j]);
            }
        }
    }
    let ordering = if hyp == 0 {
        Verdict::Inconclusive
    } else {
        Verdict::from_bool(min_gap > -tol_order)
    };
    let limit_difference = traj1
        .final_state
        .u
        .iter()
        .zip(&traj2.final_state.u)
        .map(|(&a, &b)| (a - b).abs())
        .fold(T::zero(), T::max);
    let limits = if traj1.is_steady() && traj2.is_steady() {
        Verdict::from_bool(limit_difference <= T::lit(tol.limit))
    } else {
        Verdict::Inconclusive
    };
    let verdict = if ordering.is_fail() || limits.is_fail() {
        Verdict::Fail
    } else if ordering == Verdict::Inconclusive {
        Verdict::Inconclusive
    } else {
        limits
    };
    Ok(ComparisonReport {
        verdict,
        ordering,
        limits,
        matched_times: matched,
        hypothesis_times: hyp,
        hypothesis_at_start: hyp_start,
        min_order_gap: if hyp == 0 { f64::NAN } else { min_gap.to_f64_lossy() },
        limit_difference: limit_difference.to_f64_lossy(),
        tol_order: tol.order,
        tol_limit: tol.limit,
    })
}

/// One row of the estimate table with the two compared numbers.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerdictRow {
    pub tag: String,
    pub verdict: Verdict,
    pub lhs: f64,
    pub rhs: f64,
    pub note: String,
}

impl VerdictRow {
    fn new(tag: &str, verdict: Verdict, lhs: f64, rhs: f64, note: impl Into<String>) -> Self {
        Self { tag: tag.to_string(), verdict, lhs, rhs, note: note.into() }
    }
}

pub const VERDICT_TAGS: [&str; 9] = ["Int14", "Int18", "Gre0", "Gre1", "Gre11", "C2b22", "c2g13", "Con2", "Unf2"];

#[derive(Clone, Debug, Serialize)]
pub struct EstimateSummary {
    pub rows: Vec<VerdictRow>,
    /// `max(0, (max w_adjacent - 1/sigma) / eps)`.
    pub c_fit: f64,
    /// Smallest rate with `max(F - sigma)(t) <= max(F - sigma)(0) e^{rate t}`
    /// at every record.
    pub lambda_hat: f64,
}

impl EstimateSummary {
    pub fn row(&self, tag: &str) -> Option<&VerdictRow> {
        self.rows.iter().find(|r| r.tag == tag)
    }

    pub fn any_fail(&self) -> bool {
        self.rows.iter().any(|r| r.verdict.is_fail())
    }
}

/// Exponential envelope rate of `max(F - sigma)` over the records.
pub fn envelope_rate<T: Real>(records: &[DiagnosticsRecord<T>]) -> f64 {
    let Some(first) = records.first() else { return f64::NAN };
    let m0 = first.max_f_minus_sigma.to_f64_lossy();
    let t0 = first.t.to_f64_lossy();
    records
        .iter()
        .skip(1)
        .filter(|r| r.t.to_f64_lossy() > t0)
        .map(|r| (r.max_f_minus_sigma.to_f64_lossy().max(f64::MIN_POSITIVE).ln() - m0.ln()) / (r.t.to_f64_lossy() - t0))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// The nine-row estimate table for a single run. The comparison row is
/// inconclusive here; [`comparison_check`] decides it for pairs of runs.
pub fn verdict_table<T: Real>(
    trajectory: &Trajectory<T>,
    config: &FlowConfig<T>,
    tol: &MonitorTolerances,
) -> EstimateSummary {
    let recs = &trajectory.records;
    let sigma = config.sigma.to_f64_lossy();
    let eps = config.epsilon.to_f64_lossy();
    let none = recs.is_empty();
    let inconclusive = |tag: &str| VerdictRow::new(tag, Verdict::Inconclusive, 0.0, 0.0, "no recorded steps");
    let f = |x: T| x.to_f64_lossy();
    let mut rows = Vec::with_capacity(9);

    if none {
        for tag in &VERDICT_TAGS[..8] {
            rows.push(inconclusive(tag));
        }
    } else {
        let min_conv = recs.iter().map(|r| f(r.min_conv_eig)).fold(f(trajectory.stats.min_conv_eig), f64::min);
        rows.push(VerdictRow::new("Int14", Verdict::from_bool(min_conv > 0.0), min_conv, 0.0, "min convexity eigenvalue > 0"));

        let w_adj = recs.iter().map(|r| f(r.w_at_boundary_adjacent)).fold(f64::NEG_INFINITY, f64::max);
        let ceiling = 1.0 / sigma + tol.gradient_slack;
        rows.push(VerdictRow::new(
            "Int18",
            Verdict::from_bool(w_adj.is_finite() && w_adj <= ceiling),
            w_adj,
            ceiling,
            "boundary-adjacent w <= 1/sigma + slack",
        ));

        let worst = |key: fn(&DiagnosticsRecord<T>) -> f64| {
            recs.iter().max_by(|a, b| key(a).partial_cmp(&key(b)).unwrap_or(std::cmp::Ordering::Equal)).expect("records")
        };
        let g = worst(|r| r.gradient_lhs.to_f64_lossy() - r.gradient_rhs.to_f64_lossy());
        rows.push(VerdictRow::new(
            "Gre0",
            Verdict::from_bool(recs.iter().all(|r| r.gradient_ok)),
            f(g.gradient_lhs),
            f(g.gradient_rhs),
            "1/nu <= max(max u / u, boundary 1/nu)",
        ));

        let a = worst(|r| r.angle_max_interior.to_f64_lossy() - r.angle_max_boundary.to_f64_lossy());
        let triggered = recs.iter().filter(|r| r.angle_max_interior > r.angle_max_boundary).count();
        rows.push(VerdictRow::new(
            "Gre1",
            Verdict::from_bool(recs.iter().all(|r| r.angle_ok)),
            f(a.nu_at_angle_max),
            sigma / 3.0,
            format!("nu >= sigma/3 at interior maxima of (sigma - nu)/u; condition active at {triggered} records"),
        ));

        let defect = recs.iter().map(|r| f(r.boundary_angle_defect)).fold(f64::NEG_INFINITY, f64::max);
        rows.push(match config.domain.kind() {
            DomainKind::RadialBall => VerdictRow::new(
                "Gre11",
                Verdict::from_bool(defect <= tol.tol),
                defect,
                tol.tol,
                "sigma - nu <= tol on the boundary (no exterior tangent sphere)",
            ),
            DomainKind::Interval1D => VerdictRow::new(
                "Gre11",
                Verdict::Inconclusive,
                defect,
                tol.tol,
                "boundary angle reported only for intervals",
            ),
        });

        let vals: Vec<f64> = recs.iter().map(|r| f(r.max_u_d2u_boundary)).collect();
        rows.push(if vals.len() < 2 || !trajectory.is_steady() {
            let last = vals[vals.len() - 1];
            VerdictRow::new("C2b22", Verdict::Inconclusive, last, last, "boundedness is judged on converged runs")
        } else {
            let mid = vals.len() / 2;
            let first = vals[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let second = vals[mid..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let bound = first * (1.0 + tol.boundary_growth);
            VerdictRow::new(
                "C2b22",
                Verdict::from_bool(vals.iter().all(|v| v.is_finite()) && second <= bound),
                second,
                bound,
                "boundary-adjacent u|D^2u| saturates: late max <= early max",
            )
        });

        let c = worst(|r| r.max_ratio_interior.to_f64_lossy() / r.curvature_threshold.to_f64_lossy());
        rows.push(VerdictRow::new(
            "c2g13",
            Verdict::from_bool(recs.iter().all(|r| r.curvature_ok)),
            f(c.max_ratio_interior),
            f(c.curvature_threshold) * (1.0 + tol.ratio),
            "kappa_max/(nu - a) <= max(4/a^3, boundary ratio)",
        ));

        rows.push(match dissipation_integral(trajectory) {
            Ok(d) => {
                let bound = tol.dissipation * f(d.max_increment) + 64.0 * f64::EPSILON;
                VerdictRow::new(
                    "Con2",
                    Verdict::from_bool(f(d.discrepancy) <= bound),
                    f(d.discrepancy),
                    bound,
                    "|int (F - sigma) u w dt - (u(T) - u(0))| node-wise",
                )
            }
            Err(_) => VerdictRow::new("Con2", Verdict::Inconclusive, 0.0, 0.0, "needs two snapshots"),
        });
    }
    rows.push(VerdictRow::new("Unf2", Verdict::Inconclusive, 0.0, 0.0, "comparison needs two runs"));

    let w_adj = recs.iter().map(|r| f(r.w_at_boundary_adjacent)).fold(f64::NEG_INFINITY, f64::max);
    let c_fit = if none { f64::NAN } else { ((w_adj - 1.0 / sigma) / eps).max(0.0) };
    EstimateSummary { rows, c_fit, lambda_hat: envelope_rate(recs) }
}
