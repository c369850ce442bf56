//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! The long flows are computed once and shared: the default ball run feeds
//! the stationary, preservation, monotonicity, curvature-bound and
//! dissipation criteria.

use std::process::ExitCode;
use std::time::Instant;

use hypflow::flow::{epsilon_continuation, run_flow, FlowConfig, TerminationReason, Trajectory};
use hypflow::graphgeom::{discrete_derivatives, radial_curvatures, CapProfile, DomainDescriptor};
use hypflow::monitors::{comparison_check, dissipation_integral, identity_study, MonitorTolerances};
use hypflow::symfunc::{check_structure, ConeSampler, CurvatureFunctionSpec, StructureTolerances};
use hypflow::Verdict;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: u32, name: &'static str, pass: bool, detail: String) -> Outcome {
    let o = Outcome { id, name, pass, detail };
    println!("criterion {:>2} {:<28} {}  {}", o.id, o.name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    o
}

fn flat_specs() -> Vec<(&'static str, CurvatureFunctionSpec)> {
    vec![
        ("H1", CurvatureFunctionSpec::mean(2).unwrap()),
        ("sqrt(H2)", CurvatureFunctionSpec::gauss_root(2).unwrap()),
        ("H2/H1", CurvatureFunctionSpec::hessian_quotient(2, 1).unwrap()),
    ]
}

fn cap_flatness() -> Outcome {
    let start = Instant::now();
    let cap = CapProfile::new(1.0, 0.6).unwrap();
    let mut analytic: f64 = 0.0;
    let mut details = Vec::new();
    let mut ok = true;
    for (name, spec) in flat_specs() {
        let mut errors = Vec::new();
        for nodes in [100usize, 200, 400] {
            let domain = DomainDescriptor::ball(2, 1.0, nodes).unwrap();
            let u: Vec<f64> = domain.coordinates().iter().map(|&r| cap.height(r)).collect();
            let d = discrete_derivatives(&u, &domain);
            let mut discrete: f64 = 0.0;
            for j in domain.interior() {
                let r = domain.coordinate(j);
                let exact = radial_curvatures(u[j], cap.slope(r), cap.second_derivative(r), r, 2).unwrap();
                let lam = [exact.radial, exact.angular];
                let f = spec.value_unchecked(&lam);
                analytic = analytic.max((exact.radial - 0.6).abs()).max((exact.angular - 0.6).abs()).max((f - 0.6).abs());
                let approx = radial_curvatures(u[j], d.du[j], d.d2u[j], r, 2).unwrap();
                let mut lam = [approx.radial, approx.angular];
                lam.sort_by(|a, b| b.partial_cmp(a).unwrap());
                let kappa_err = (approx.radial - 0.6).abs().max((approx.angular - 0.6).abs());
                discrete = discrete.max(kappa_err).max((spec.value_unchecked(&lam) - 0.6).abs());
            }
            errors.push(discrete);
        }
        let orders: Vec<f64> = errors.windows(2).map(|p| (p[0] / p[1]).log2()).collect();
        ok &= orders.iter().all(|&o| o >= 1.9);
        details.push(format!("{name} orders {:.3}/{:.3}", orders[0], orders[1]));
    }
    let elapsed = start.elapsed().as_secs_f64();
    ok &= analytic <= 1e-10 && elapsed < 1.0;
    outcome(
        1,
        "cap flatness",
        ok,
        format!("analytic max|kappa - sigma| = {analytic:.2e}; {}; {elapsed:.3}s", details.join(", ")),
    )
}

fn structure_certifier() -> Outcome {
    let start = Instant::now();
    let tol = StructureTolerances::default();
    let mean = check_structure(
        &CurvatureFunctionSpec::mean(2).unwrap(),
        &ConeSampler::default().with_probe(vec![0.1, 1.8]),
        &tol,
    )
    .unwrap();
    let gauss = check_structure(&CurvatureFunctionSpec::gauss_root(2).unwrap(), &ConeSampler::default(), &tol).unwrap();
    let verdict = |r: &hypflow::symfunc::StructureReport, tag: &str| r.condition(tag).map(|c| c.verdict);

    let mut ok = ["Int5", "Int6", "Int9", "Int10", "Int12", "Int13"].iter().all(|t| verdict(&mean, t) == Some(Verdict::Pass));
    ok &= verdict(&mean, "Int7") == Some(Verdict::Fail);
    let int20 = mean.condition("Int20").unwrap();
    let witness_ok = int20.verdict == Verdict::Fail
        && int20.witness.as_deref() == Some(&[0.1, 1.8][..])
        && (int20.lhs.unwrap() - 1.0).abs() < 1e-12
        && (int20.rhs.unwrap() - 1.625).abs() < 1e-12;
    ok &= witness_ok;
    let gauss_tags = ["Int5", "Int6", "Int7", "Int9", "Int10", "Int11", "Int12", "Int13", "Int20"];
    ok &= gauss_tags.iter().all(|t| verdict(&gauss, t) == Some(Verdict::Pass));
    ok &= gauss.condition("Int20").unwrap().checked == 10_000;
    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 5.0;
    outcome(
        8,
        "structure certifier",
        ok,
        format!(
            "H1 Int20 witness {:?} sides {} vs {}; sqrt(H2) all pass on {} samples; {elapsed:.2}s",
            int20.witness.as_deref().unwrap_or(&[]),
            int20.lhs.unwrap_or(f64::NAN),
            int20.rhs.unwrap_or(f64::NAN),
            gauss.samples
        ),
    )
}

fn evolution_identity(config: &FlowConfig<f64>) -> Outcome {
    let study = identity_study(config, 100, 0.04, 3, 1e-8).unwrap();
    let h2 = study.h * study.h;
    let order = study.min_evo10_order();
    let above_floor = study.evo10.iter().all(|&r| r > study.evo10_floor);
    let ok = order >= 0.9 && above_floor && study.evo10_floor <= 10.0 * h2;
    outcome(
        7,
        "evolution identity",
        ok,
        format!(
            "residuals {:.3e}/{:.3e}/{:.3e} at dt {}/{}/{}, orders {:.3}/{:.3}, floor {:.3e} <= 10h^2 = {:.3e}",
            study.evo10[0],
            study.evo10[1],
            study.evo10[2],
            study.dts[0],
            study.dts[1],
            study.dts[2],
            study.evo10_orders[0],
            study.evo10_orders[1],
            study.evo10_floor,
            10.0 * h2
        ),
    )
}

fn sup_cap_error(config: &FlowConfig<f64>, traj: &Trajectory<f64>) -> f64 {
    let cap = CapProfile::new(config.domain.extent(), config.sigma).unwrap();
    config
        .domain
        .interior()
        .map(|j| (traj.final_state.u[j] - cap.height(config.domain.coordinate(j))).abs())
        .fold(0.0, f64::max)
}

fn default_run_criteria(config: &FlowConfig<f64>) -> Vec<Outcome> {
    let start = Instant::now();
    let traj = run_flow(config).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let mut out = Vec::new();

    let err = sup_cap_error(config, &traj);
    out.push(outcome(
        2,
        "stationary convergence",
        traj.termination == TerminationReason::Steady && err <= 5e-3 && elapsed < 300.0,
        format!(
            "{} after {} steps at t = {:.3}, residual {:.2e}, sup|u - cap| = {err:.3e}; {elapsed:.1}s",
            traj.termination, traj.steps, traj.final_state.t, traj.final_residual
        ),
    ));

    let rec_conv = traj.records.iter().map(|r| r.min_conv_eig).fold(f64::INFINITY, f64::min);
    let rec_f = traj.records.iter().map(|r| r.min_f_minus_sigma).fold(f64::INFINITY, f64::min);
    out.push(outcome(
        3,
        "convexity and F > sigma",
        rec_conv > 0.0 && rec_f > 0.0 && traj.stats.min_conv_eig > 0.0 && traj.stats.min_f_minus_sigma > 0.0,
        format!(
            "min convexity eigenvalue {rec_conv:.4e}, min F - sigma {rec_f:.4e} over {} records (every step: {:.4e}, {:.4e})",
            traj.records.len(),
            traj.stats.min_conv_eig,
            traj.stats.min_f_minus_sigma
        ),
    ));

    let snap_inc = traj
        .snapshots
        .windows(2)
        .flat_map(|p| p[1].u.iter().zip(&p[0].u).map(|(a, b)| a - b).collect::<Vec<_>>())
        .fold(f64::INFINITY, f64::min);
    out.push(outcome(
        4,
        "monotonicity",
        traj.stats.min_increment >= -1e-12 && snap_inc >= -1e-12,
        format!("min per-step increment {:.3e}, min between records {snap_inc:.3e}", traj.stats.min_increment),
    ));

    let worst = traj
        .records
        .iter()
        .map(|r| r.max_ratio_interior / (r.curvature_threshold * 1.05))
        .fold(f64::NEG_INFINITY, f64::max);
    let all = traj.records.iter().all(|r| r.curvature_ok);
    let last = traj.records.last().unwrap();
    out.push(outcome(
        6,
        "interior curvature bound",
        all,
        format!(
            "max ratio / bound = {worst:.4e}; final a = {:.4}, ratio {:.4}, 4/a^3 = {:.3}",
            last.a_used,
            last.max_ratio_interior,
            4.0 / last.a_used.powi(3)
        ),
    ));

    let d = dissipation_integral(&traj).unwrap();
    out.push(outcome(
        11,
        "dissipation identity",
        d.discrepancy <= 2e-2 * d.max_increment,
        format!(
            "max node discrepancy {:.3e} <= {:.3e}; integral {:.6} (at T/2: {:.6})",
            d.discrepancy,
            2e-2 * d.max_increment,
            d.max,
            d.max_at_half_time
        ),
    ));
    out
}

fn continuation_criteria(config: &FlowConfig<f64>) -> Vec<Outcome> {
    let base = config.with_epsilon(4e-3).unwrap();
    let res = epsilon_continuation(&base, 2).unwrap();
    let ceiling = 1.0 / config.sigma;
    let mut c_fits = Vec::new();
    let mut max_w: f64 = 0.0;
    for level in &res.levels {
        let traj = &level.solution.trajectory;
        let w = traj.records.iter().map(|r| r.w_at_boundary_adjacent).fold(level.boundary_w, f64::max);
        max_w = max_w.max(w);
        c_fits.push(((w - ceiling) / level.epsilon).max(0.0));
    }
    let grad_ok = c_fits.iter().all(|c| c.is_finite()) && max_w <= ceiling + 0.5;
    let gradient = outcome(
        5,
        "boundary gradient",
        grad_ok,
        format!(
            "eps {:?}: boundary-adjacent w {:?}, C_fit {:?}, max w {max_w:.5} <= {:.5}",
            res.levels.iter().map(|l| l.epsilon).collect::<Vec<_>>(),
            res.levels.iter().map(|l| format!("{:.5}", l.boundary_w)).collect::<Vec<_>>(),
            c_fits,
            ceiling + 0.5
        ),
    );

    let decreasing = res.cauchy.windows(2).all(|p| p[1] < p[0]);
    let lo = res.cauchy_over_eps.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = res.cauchy_over_eps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bounded = hi.is_finite() && lo > 0.0 && hi <= 10.0 * lo;
    let cont = outcome(
        10,
        "eps continuation",
        decreasing && bounded,
        format!("d_k = {:?}, d_k/eps_k = {:?}", res.cauchy, res.cauchy_over_eps),
    );
    vec![gradient, cont]
}

fn comparison_criterion(config: &FlowConfig<f64>) -> Outcome {
    let mut lower = config.clone();
    lower.sigma_init = 0.7;
    let mut upper = config.clone();
    upper.sigma_init = 0.9;
    let t1 = run_flow(&lower).unwrap();
    let t2 = run_flow(&upper).unwrap();
    let rep = comparison_check(&t1, &t2, &config.domain, &MonitorTolerances::default()).unwrap();
    outcome(
        9,
        "comparison and uniqueness",
        rep.ordering != Verdict::Fail && rep.hypothesis_at_start && rep.limits == Verdict::Pass,
        format!(
            "hypothesis held at {}/{} matched times, min u1 - u2 = {:.3e}, sup|limit difference| = {:.3e}",
            rep.hypothesis_times, rep.matched_times, rep.min_order_gap, rep.limit_difference
        ),
    )
}

fn main() -> ExitCode {
    let config = FlowConfig::<f64>::default_ball();
    let mut results = vec![cap_flatness(), structure_certifier(), evolution_identity(&config)];
    results.extend(default_run_criteria(&config));
    results.extend(continuation_criteria(&config));
    results.push(comparison_criterion(&config));

    results.sort_by_key(|o| o.id);
    let failed: Vec<String> = results.iter().filter(|o| !o.pass).map(|o| format!("{} {}", o.id, o.name)).collect();
    println!();
    for o in &results {
        println!("{:>2} {:<28} {}", o.id, o.name, if o.pass { "PASS" } else { "FAIL" });
    }
    if failed.is_empty() {
        println!("all {} criteria passed", results.len());
        ExitCode::SUCCESS
    } else {
        println!("failed: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
