//! Expected Improvement and its maximization over a box or a hypothesis.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::Result;
use crate::gp::Surrogate;
use crate::space::{AxisBox, Hypothesis, SearchSpace, DEFAULT_MAX_ATTEMPTS};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionKind {
    #[default]
    ExpectedImprovement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionSpec {
    pub kind: AcquisitionKind,
    /// Exploration offset ξ subtracted from the improvement.
    pub jitter: f64,
    pub multistarts: usize,
    pub refine_steps: usize,
}

impl Default for AcquisitionSpec {
    fn default() -> Self {
        Self { kind: AcquisitionKind::ExpectedImprovement, jitter: 0.0, multistarts: 32, refine_steps: 64 }
    }
}

/// Number of multistart candidates that get refined.
const REFINED_CANDIDATES: usize = 3;
const SHRINK: f64 = 0.618_033_988_749_895;

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Closed-form EI for maximization: `Δ Φ(Δ/σ) + σ φ(Δ/σ)` with `Δ = μ − y* − ξ`.
pub fn expected_improvement(mean: f64, std: f64, incumbent: f64, jitter: f64) -> f64 {
    let delta = mean - incumbent - jitter;
    if !(std > 0.0) {
        return delta.max(0.0);
    }
    let z = delta / std;
    (delta * normal_cdf(z) + std * normal_pdf(z)).max(0.0)
}

/// Feasible region for acquisition maximization.
#[derive(Clone, Copy, Debug)]
pub enum Region<'a> {
    Space(&'a SearchSpace),
    Hypothesis(&'a Hypothesis),
}

impl Region<'_> {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Space(s) => s.contains(x),
            Region::Hypothesis(h) => h.contains(x).unwrap_or(false),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            Region::Space(s) => Ok(s.sample_uniform(rng)),
            Region::Hypothesis(h) => h.sample_uniform(rng, DEFAULT_MAX_ATTEMPTS),
        }
    }

    fn bounds(&self) -> AxisBox {
        match self {
            Region::Space(s) => s.as_box(),
            Region::Hypothesis(h) => h.bounding_box().clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub x: Vec<f64>,
    pub value: f64,
}

/// Multistart maximization of EI inside `region`: uniform feasible starts,
/// then coordinate-wise pattern refinement of the best few, rejecting moves
/// that leave the region.
pub fn maximize<S, R>(
    model: &S,
    region: Region<'_>,
    incumbent: f64,
    spec: &AcquisitionSpec,
    rng: &mut R,
) -> Result<Candidate>
where
    S: Surrogate + ?Sized,
    R: Rng + ?Sized,
{
    let ei = |x: &[f64]| {
        let p = model.predict(x);
        expected_improvement(p.mean, p.std(), incumbent, spec.jitter)
    };

    let mut starts = Vec::with_capacity(spec.multistarts.max(1));
    for _ in 0..spec.multistarts.max(1) {
        let x = region.sample(rng)?;
        let value = ei(&x);
        starts.push(Candidate { x, value });
    }
    // stable sort keeps first-found order among ties
    starts.sort_by(|a, b| b.value.total_cmp(&a.value));

    let bounds = region.bounds();
    let free_axes: Vec<usize> = (0..bounds.dim()).filter(|&k| !bounds.is_pinned(k)).collect();
    let mut best: Option<Candidate> = None;
    for start in starts.into_iter().take(REFINED_CANDIDATES) {
        let refined = refine(start, &bounds, &free_axes, region, spec.refine_steps, &ei);
        if best.as_ref().is_none_or(|b| refined.value > b.value) {
            best = Some(refined);
        }
    }
    Ok(best.expect("at least one multistart"))
}

fn refine(
    mut cand: Candidate,
    bounds: &AxisBox,
    free_axes: &[usize],
    region: Region<'_>,
    steps: usize,
    ei: &impl Fn(&[f64]) -> f64,
) -> Candidate {
    if free_axes.is_empty() {
        return cand;
    }
    let mut step: Vec<f64> = bounds.lower.iter().zip(&bounds.upper).map(|(l, u)| 0.25 * (u - l)).collect();
    for it in 0..steps {
        let k = free_axes[it % free_axes.len()];
        let mut moved = false;
        for dir in [1.0, -1.0] {
            let mut x = cand.x.clone();
            x[k] = (x[k] + dir * step[k]).clamp(bounds.lower[k], bounds.upper[k]);
            if x[k] == cand.x[k] || !region.contains(&x) {
                continue;
            }
            let v = ei(&x);
            if v > cand.value {
                cand = Candidate { x, value: v };
                moved = true;
                break;
            }
        }
        if !moved {
            step[k] *= SHRINK;
        }
    }
    cand
}
