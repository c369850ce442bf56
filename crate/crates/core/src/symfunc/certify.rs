//! Sampling certifier for the structure conditions a curvature function
//! must satisfy: monotonicity, concavity, vanishing on the cone boundary,
//! normalization, homogeneity, the growth condition near `(1, ..., 1)`,
//! the mean and sum bounds, and the uniqueness hypothesis on `{0 < f < 1}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{CurvatureFamily, CurvatureFunctionSpec};
use crate::error::{param, Result};
use crate::verdict::Verdict;

/// Log-uniform sampler over `[lo, hi]^n`, seeded.
#[derive(Clone, Debug)]
pub struct ConeSampler {
    pub samples: usize,
    pub seed: u64,
    pub lo: f64,
    pub hi: f64,
    /// Concavity is checked on this many random pairs.
    pub pairs: usize,
    /// Fixed points evaluated before the random ones, e.g. known witnesses.
    pub probes: Vec<Vec<f64>>,
}

impl ConeSampler {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self { samples, seed, lo: 1e-2, hi: 1e2, pairs: 1000, probes: Vec::new() }
    }

    pub fn with_probe(mut self, point: Vec<f64>) -> Self {
        self.probes.push(point);
        self
    }

    fn draw(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let (a, b) = (self.lo.log10(), self.hi.log10());
        (0..n).map(|_| 10f64.powf(rng.gen_range(a..=b))).collect()
    }
}

impl Default for ConeSampler {
    fn default() -> Self {
        Self::new(10_000, 0)
    }
}

/// Thresholds for the sampled checks.
#[derive(Clone, Debug, Serialize)]
pub struct StructureTolerances {
    pub homogeneity: f64,
    pub concavity: f64,
    pub mean_bound: f64,
    pub sum_bound: f64,
    pub normalization: f64,
    /// `f` at the boundary probe must not exceed this.
    pub boundary_value: f64,
    /// Size of the finite stand-in for `R -> infinity`.
    pub r_big: f64,
    pub delta0: f64,
    pub epsilon0: f64,
}

impl Default for StructureTolerances {
    fn default() -> Self {
        Self {
            homogeneity: 1e-12,
            concavity: 1e-10,
            mean_bound: 1e-12,
            sum_bound: 1e-10,
            normalization: 1e-12,
            boundary_value: 1e-3,
            r_big: 1e6,
            delta0: 0.1,
            epsilon0: 0.05,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionVerdict {
    pub tag: &'static str,
    pub verdict: Verdict,
    /// Set when the inequality held with equality up to tolerance everywhere.
    pub tight: bool,
    pub checked: usize,
    /// On failure the violating point; on success the point of least margin.
    pub witness: Option<Vec<f64>>,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub note: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct StructureReport {
    pub family: CurvatureFamily,
    pub n: usize,
    pub l: usize,
    pub samples: usize,
    pub seed: u64,
    pub conditions: Vec<ConditionVerdict>,
}

impl StructureReport {
    pub fn condition(&self, tag: &str) -> Option<&ConditionVerdict> {
        self.conditions.iter().find(|c| c.tag == tag)
    }

    pub fn any_fail(&self) -> bool {
        self.conditions.iter().any(|c| c.verdict.is_fail())
    }
}

/// Tracks the sample with the least margin `rhs - lhs` for a `lhs <= rhs`
/// style condition, and the first violation.
struct Tracker {
    tag: &'static str,
    checked: usize,
    worst: Option<(f64, Vec<f64>, f64, f64)>,
    violation: Option<(Vec<f64>, f64, f64)>,
    tight: bool,
}

impl Tracker {
    fn new(tag: &'static str) -> Self {
        Self { tag, checked: 0, worst: None, violation: None, tight: true }
    }

    /// Records one evaluation. `ok` decides pass/fail; `margin` ranks points.
    fn record(&mut self, point: &[f64], lhs: f64, rhs: f64, margin: f64, ok: bool, tight: bool) {
        self.checked += 1;
        self.tight &= tight;
        if !ok && self.violation.is_none() {
            self.violation = Some((point.to_vec(), lhs, rhs));
        }
        if self.worst.as_ref().map_or(true, |w| margin < w.0) {
            self.worst = Some((margin, point.to_vec(), lhs, rhs));
        }
    }

    fn finish(self, note: impl Into<String>) -> ConditionVerdict {
        let note = note.into();
        match (self.violation, self.worst) {
            (Some((w, lhs, rhs)), _) => ConditionVerdict {
                tag: self.tag,
                verdict: Verdict::Fail,
                tight: false,
                checked: self.checked,
                witness: Some(w),
                lhs: Some(lhs),
                rhs: Some(rhs),
                note,
            },
            (None, worst) => ConditionVerdict {
                tag: self.tag,
                verdict: if self.checked > 0 { Verdict::Pass } else { Verdict::Inconclusive },
                tight: self.tight && self.checked > 0,
                checked: self.checked,
                witness: worst.as_ref().map(|w| w.1.clone()),
                lhs: worst.as_ref().map(|w| w.2),
                rhs: worst.as_ref().map(|w| w.3),
                note,
            },
        }
    }
}

/// Evaluates every structure condition on sampled points of the cone.
pub fn check_structure(
    spec: &CurvatureFunctionSpec,
    sampler: &ConeSampler,
    tol: &StructureTolerances,
) -> Result<StructureReport> {
    if sampler.samples == 0 && sampler.probes.is_empty() {
        return Err(param("structure check needs at least one sample"));
    }
    if !(sampler.lo > 0.0 && sampler.hi >= sampler.lo) {
        return Err(param("sampler range must satisfy 0 < lo <= hi"));
    }
    let n = spec.n();
    if let Some(bad) = sampler.probes.iter().find(|p| p.len() != n || p.iter().any(|&x| !(x > 0.0))) {
        return Err(param(format!("probe {bad:?} is not a point of the {n}-dimensional positive cone")));
    }

    let f = |x: &[f64]| spec.value_unchecked(x);
    let grad = |x: &[f64]| {
        let mut g = vec![0.0; x.len()];
        let v = spec.value_and_gradient_unchecked(x, &mut g);
        (v, g)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let mut points: Vec<Vec<f64>> = sampler.probes.clone();
    points.extend((0..sampler.samples).map(|_| sampler.draw(&mut rng, n)));

    let mut int5 = Tracker::new("Int5");
    let mut int7 = Tracker::new("Int7");
    let mut int10 = Tracker::new("Int10");
    let mut int12 = Tracker::new("Int12");
    let mut int13 = Tracker::new("Int13");
    let boundary_component = 10f64.powi(-4 * n as i32).max(f64::MIN_POSITIVE);

    for p in &points {
        let (v, g) = grad(p);
        let gmin = g.iter().copied().fold(f64::INFINITY, f64::min);
        int5.record(p, gmin, 0.0, gmin, gmin > 0.0, false);

        for s in [0.5, 2.0, 10.0] {
            let scaled: Vec<f64> = p.iter().map(|x| s * x).collect();
            let lhs = f(&scaled);
            let rhs = s * v;
            let err = (lhs - rhs).abs();
            let bound = tol.homogeneity * rhs;
            int10.record(p, lhs, rhs, bound - err, err <= bound, false);
        }

        let mean = p.iter().sum::<f64>() / n as f64;
        let slack = tol.mean_bound * mean.max(1.0);
        int12.record(p, v, mean, mean - v, v <= mean + slack, (mean - v).abs() <= slack);

        let gsum: f64 = g.iter().sum();
        int13.record(p, gsum, 1.0, gsum - 1.0, gsum >= 1.0 - tol.sum_bound, false);

        // positivity inside the cone, then the value next to the boundary
        // after normalizing the largest component to one
        int7.record(p, v, 0.0, v, v > 0.0, false);
        let top = p.iter().copied().fold(0.0, f64::max);
        let mut edge: Vec<f64> = p.iter().map(|x| x / top).collect();
        let imin = (0..n).min_by(|&i, &j| edge[i].total_cmp(&edge[j])).unwrap_or(0);
        edge[imin] = boundary_component;
        let fe = f(&edge);
        int7.record(&edge, fe, tol.boundary_value, tol.boundary_value - fe, fe <= tol.boundary_value, false);
    }

    let mut int6 = Tracker::new("Int6");
    let pair_count = if sampler.samples == 0 { 0 } else { sampler.pairs };
    for _ in 0..pair_count {
        let a = sampler.draw(&mut rng, n);
        let b = sampler.draw(&mut rng, n);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let lhs = f(&mid);
        let rhs = 0.5 * (f(&a) + f(&b));
        let slack = tol.concavity * rhs.max(1.0);
        int6.record(&mid, lhs, rhs, lhs - rhs, lhs >= rhs - slack, false);
    }

    let mut int9 = Tracker::new("Int9");
    let ones = vec![1.0; n];
    let f1 = f(&ones);
    int9.record(&ones, f1, 1.0, -(f1 - 1.0).abs(), (f1 - 1.0).abs() <= tol.normalization, true);

    let mut int11 = Tracker::new("Int11");
    let threshold = 1.0 + 0.5 * tol.epsilon0;
    for _ in 0..sampler.samples {
        let p = sample_ball(&mut rng, n, tol.delta0);
        let mut pushed = p.clone();
        pushed[n - 1] += tol.r_big;
        let v = f(&pushed);
        int11.record(&p, v, threshold, v - threshold, v >= threshold, false);
    }

    // uniqueness hypothesis, only on {0 < f < 1}
    let mut int20 = Tracker::new("Int20");
    let check20 = |p: &[f64], t: &mut Tracker| {
        let (v, g) = grad(p);
        if v > 0.0 && v < 1.0 {
            let lhs: f64 = g.iter().sum();
            let rhs: f64 = g.iter().zip(p).map(|(gi, x)| gi * x * x).sum();
            t.record(p, lhs, rhs, lhs - rhs, lhs > rhs, false);
            true
        } else {
            false
        }
    };
    for p in &sampler.probes {
        check20(p, &mut int20);
    }
    let mut accepted = 0;
    let mut attempts = 0;
    let max_attempts = sampler.samples.saturating_mul(100);
    while accepted < sampler.samples && attempts < max_attempts {
        attempts += 1;
        let p = sampler.draw(&mut rng, n);
        if check20(&p, &mut int20) {
            accepted += 1;
        }
    }

    let int7_note = if spec.vanishes_on_cone_boundary() {
        format!("smallest component set to {boundary_component:e} after scaling the largest to 1")
    } else {
        "NOT SATISFIED: H_1 stays positive on the cone boundary".to_string()
    };
    let conditions = vec![
        int5.finish("smallest partial derivative must be positive"),
        int6.finish(format!("midpoint concavity on {pair_count} pairs")),
        int7.finish(int7_note),
        int9.finish("f(1, ..., 1) = 1"),
        int10.finish("f(s x) = s f(x) for s in {0.5, 2, 10}"),
        int11.finish(format!("f(x + R e_n) >= 1 + eps0/2 with R = {:e}, |x - 1| < {}", tol.r_big, tol.delta0)),
        int12.finish("f <= mean of the components"),
        int13.finish("sum of partial derivatives >= 1"),
        int20.finish(format!("sum f_i > sum x_i^2 f_i on {} points with 0 < f < 1", int20_count(&sampler.probes, accepted))),
    ];

    Ok(StructureReport {
        family: spec.family(),
        n,
        l: spec.l(),
        samples: sampler.samples,
        seed: sampler.seed,
        conditions,
    })
}

fn int20_count(probes: &[Vec<f64>], accepted: usize) -> String {
    if probes.is_empty() {
        accepted.to_string()
    } else {
        format!("{accepted} sampled (+ probes)")
    }
}

/// Uniform point in the Euclidean ball of radius `delta` around `(1, ..., 1)`.
fn sample_ball(rng: &mut ChaCha8Rng, n: usize, delta: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let r2: f64 = v.iter().map(|x| x * x).sum();
        if r2 <= 1.0 {
            return v.into_iter().map(|x| 1.0 + delta * x).collect();
        }
    }
}
