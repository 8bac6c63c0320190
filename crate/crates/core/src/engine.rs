//! The bilevel search loop.
//!
//! A run starts with a hypothesis-aware initial design, then alternates a
//! lower level (one local GP per hypothesis, top-`T` EI seeds across
//! hypotheses) and an upper level (global GP-BO over the whole box). Each
//! level continues while it keeps improving the incumbent and yields after
//! `l_max` / `u_max` consecutive non-improving iterations. With no
//! hypotheses the lower level never runs and the loop is plain GP-BO.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{self, AcquisitionSpec, Candidate, Region};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gp::{GpFitOptions, InputScaling, KernelParams, StandardizedGp};
use crate::space::{Hypothesis, SearchSpace, DEFAULT_MAX_ATTEMPTS};
use crate::trace::{Source, Trace, TraceRecord};

/// Which incumbent local models measure improvement against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncumbentScope {
    /// Best value among the observations inside the hypothesis.
    Local,
    /// Best value in the whole dataset.
    #[default]
    Global,
}

/// Kernel and hyperparameter-search settings shared by local and global models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub signal_variance: f64,
    /// Initial lengthscale in unit-cube coordinates.
    pub lengthscale: f64,
    pub noise_variance: f64,
    pub optimize_noise: bool,
    pub isotropic: bool,
    pub restarts: usize,
    /// Likelihood evaluations per restart; 0 = automatic.
    pub max_evals: usize,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            signal_variance: 1.0,
            lengthscale: 1.0,
            noise_variance: 1e-10,
            optimize_noise: false,
            isotropic: false,
            restarts: 5,
            max_evals: 0,
        }
    }
}

impl SurrogateConfig {
    pub fn init_params(&self, dim: usize) -> KernelParams {
        KernelParams {
            signal_variance: self.signal_variance,
            lengthscales: vec![self.lengthscale; dim],
            noise_variance: self.noise_variance,
        }
    }

    /// Fits a standardized GP on `data`. With `reuse` and `optimize == false`
    /// the given parameters are used as-is; an empty dataset yields the prior.
    pub fn fit<R: Rng + ?Sized>(
        &self,
        data: &Dataset,
        space: &SearchSpace,
        reuse: Option<&KernelParams>,
        optimize: bool,
        rng: &mut R,
    ) -> Result<StandardizedGp> {
        let scaling = InputScaling::from_space(space);
        let init = self.init_params(space.dim());
        if data.is_empty() {
            return Ok(StandardizedGp::prior(init, scaling));
        }
        let (start, opts) = match (reuse, optimize) {
            (Some(p), false) => (p.clone(), GpFitOptions::fixed()),
            _ => (
                init,
                GpFitOptions {
                    optimize: true,
                    restarts: self.restarts,
                    optimize_noise: self.optimize_noise,
                    isotropic: self.isotropic,
                    max_evals: self.max_evals,
                },
            ),
        };
        StandardizedGp::fit(data, scaling, &start, &opts, rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub n_init: usize,
    pub i_max: usize,
    pub gamma: f64,
    pub top_seeds: usize,
    pub l_max: usize,
    pub u_max: usize,
    pub seed: u64,
    pub acquisition: AcquisitionSpec,
    /// Re-optimize kernel hyperparameters every this many inner iterations;
    /// in between, the previous parameters are reused.
    pub gp_optimize_every: usize,
    pub incumbent: IncumbentScope,
    pub surrogate: SurrogateConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            n_init: 5,
            i_max: 100,
            gamma: 0.0,
            top_seeds: 1,
            l_max: 2,
            u_max: 5,
            seed: 0,
            acquisition: AcquisitionSpec::default(),
            gp_optimize_every: 1,
            incumbent: IncumbentScope::Global,
            surrogate: SurrogateConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self, n_hypotheses: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_init == 0 {
            return bad("n_init must be positive");
        }
        if self.i_max == 0 {
            return bad("i_max must be positive");
        }
        if self.l_max == 0 || self.u_max == 0 {
            return bad("l_max and u_max must be positive");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be a nonnegative real");
        }
        if self.top_seeds == 0 {
            return bad("top_seeds must be positive");
        }
        if n_hypotheses > 0 && self.top_seeds > n_hypotheses {
            return Err(Error::Config(format!(
                "top_seeds = {} exceeds the number of hypotheses ({n_hypotheses})",
                self.top_seeds
            )));
        }
        if self.gp_optimize_every == 0 {
            return bad("gp_optimize_every must be positive");
        }
        if self.acquisition.multistarts == 0 {
            return bad("acquisition.multistarts must be positive");
        }
        Ok(())
    }
}

/// One uniform draw per hypothesis followed by `max(1, n − J)` global draws.
pub fn initial_design<R: Rng + ?Sized>(
    space: &SearchSpace,
    hypotheses: &[Hypothesis],
    n: usize,
    rng: &mut R,
) -> Result<Vec<(Source, Vec<f64>)>> {
    let j = hypotheses.len();
    let m = n.saturating_sub(j).max(1);
    let mut out = Vec::with_capacity(j + m);
    for (idx, h) in hypotheses.iter().enumerate() {
        out.push((Source::InitHypothesis(idx), h.sample_uniform(rng, DEFAULT_MAX_ATTEMPTS)?));
    }
    for _ in 0..m {
        out.push((Source::InitGlobal, space.sample_uniform(rng)));
    }
    Ok(out)
}

/// Sign-aware multiplicative improvement test: true iff `y_new` beats
/// `(1 + γ) y_max` (for `y_max >= 0`) or `(1 − γ) y_max` (for `y_max < 0`).
pub fn improved(y_max: f64, y_new: f64, gamma: f64) -> bool {
    if y_max >= 0.0 {
        y_new > (1.0 + gamma) * y_max
    } else {
        y_new > (1.0 - gamma) * y_max
    }
}

/// A lower-level candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct Seed {
    pub hypothesis: usize,
    pub x: Vec<f64>,
    pub acq_value: f64,
}

/// Kernel parameters remembered between fits for `gp_optimize_every > 1`.
#[derive(Clone, Debug, Default)]
pub struct ParamMemory {
    pub local: Vec<Option<KernelParams>>,
    pub global: Option<KernelParams>,
}

/// Settings the level steps need beyond the acquisition spec.
#[derive(Clone, Copy, Debug)]
pub struct StepContext<'a> {
    pub space: &'a SearchSpace,
    pub acquisition: &'a AcquisitionSpec,
    pub surrogate: &'a SurrogateConfig,
    pub incumbent: IncumbentScope,
    /// Whether this step re-optimizes hyperparameters.
    pub optimize: bool,
}

/// Fits one local model per hypothesis on `D ∩ H_j`, maximizes EI inside
/// each, and keeps the `top` candidates with the highest EI.
pub fn lower_step<R: Rng + ?Sized>(
    data: &Dataset,
    hypotheses: &[Hypothesis],
    top: usize,
    ctx: StepContext<'_>,
    memory: &mut ParamMemory,
    rng: &mut R,
) -> Result<Vec<Seed>> {
    if hypotheses.is_empty() {
        return Err(Error::InvalidArgument("lower step needs at least one hypothesis".into()));
    }
    memory.local.resize(hypotheses.len(), None);
    let global_best = data.y_max();
    // independent sub-streams, drawn in hypothesis order
    let sub_seeds: Vec<u64> = hypotheses.iter().map(|_| rng.random()).collect();
    let mut seeds = Vec::with_capacity(hypotheses.len());
    for (j, h) in hypotheses.iter().enumerate() {
        let mut sub = ChaCha8Rng::seed_from_u64(sub_seeds[j]);
        let local = h.filter_dataset(data);
        let optimize = ctx.optimize || memory.local[j].is_none();
        let model = ctx.surrogate.fit(&local, ctx.space, memory.local[j].as_ref(), optimize, &mut sub)?;
        if !local.is_empty() {
            memory.local[j] = Some(model.inner().params().clone());
        }
        let incumbent = match ctx.incumbent {
            IncumbentScope::Local => local.y_max().or(global_best),
            IncumbentScope::Global => global_best.or(local.y_max()),
        }
        .unwrap_or(0.0);
        let Candidate { x, value } =
            acquisition::maximize(&model, Region::Hypothesis(h), incumbent, ctx.acquisition, &mut sub)?;
        seeds.push(Seed { hypothesis: j, x, acq_value: value });
    }
    seeds.sort_by(|a, b| b.acq_value.total_cmp(&a.acq_value));
    seeds.truncate(top.max(1));
    Ok(seeds)
}

/// Fits the global model on all of `data` and maximizes EI over the box.
pub fn upper_step<R: Rng + ?Sized>(
    data: &Dataset,
    ctx: StepContext<'_>,
    memory: &mut ParamMemory,
    rng: &mut R,
) -> Result<Candidate> {
    let incumbent = data
        .y_max()
        .ok_or_else(|| Error::InvalidArgument("upper step needs a nonempty dataset".into()))?;
    let optimize = ctx.optimize || memory.global.is_none();
    let model = ctx.surrogate.fit(data, ctx.space, memory.global.as_ref(), optimize, rng)?;
    memory.global = Some(model.inner().params().clone());
    acquisition::maximize(&model, Region::Space(ctx.space), incumbent, ctx.acquisition, rng)
}

/// Runs the full bilevel loop and returns one record per evaluation.
pub fn run<F>(mut objective: F, space: &SearchSpace, hypotheses: &[Hypothesis], config: &EngineConfig) -> Result<Trace>
where
    F: FnMut(&[f64]) -> f64,
{
    config.validate(hypotheses.len())?;
    for h in hypotheses {
        if h.dim() != space.dim() {
            return Err(Error::InvalidArgument(format!(
                "hypothesis `{}` has dimension {}, space has {}",
                h.label(),
                h.dim(),
                space.dim()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut data = Dataset::new();
    let mut trace = Trace::default();
    let mut eval = |x: &[f64]| -> Result<f64> {
        let y = objective(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::Objective { point: x.to_vec(), value: y })
        }
    };

    for (source, x) in initial_design(space, hypotheses, config.n_init, &mut rng)? {
        let y = eval(&x)?;
        data.push(x.clone(), y);
        trace.records.push(TraceRecord {
            iteration: 0,
            source,
            x,
            y,
            incumbent_after: data.y_max().unwrap_or(y),
            acq_value: None,
            l: 0,
            u: 0,
        });
    }

    let mut memory = ParamMemory::default();
    let mut round = 0usize;
    let mut i = 0usize;
    let mut u = 0usize;
    while i < config.i_max {
        if !hypotheses.is_empty() {
            let mut l = 0usize;
            while l < config.l_max && i < config.i_max {
                let ctx = step_context(space, config, round);
                round += 1;
                let seeds = lower_step(&data, hypotheses, config.top_seeds, ctx, &mut memory, &mut rng)?;
                let y_max = data.y_max().expect("initial design is nonempty");
                let take = seeds.len().min(config.i_max - i);
                let mut batch = Vec::with_capacity(take);
                for s in seeds.into_iter().take(take) {
                    let y = eval(&s.x)?;
                    batch.push((s, y));
                }
                let batch_best = batch.iter().map(|(_, y)| *y).fold(f64::NEG_INFINITY, f64::max);
                if improved(y_max, batch_best, config.gamma) {
                    l = 0;
                } else {
                    l += 1;
                }
                for (s, y) in batch {
                    data.push(s.x.clone(), y);
                    i += 1;
                    trace.records.push(TraceRecord {
                        iteration: i,
                        source: Source::Lower(s.hypothesis),
                        x: s.x,
                        y,
                        incumbent_after: data.y_max().expect("nonempty"),
                        acq_value: Some(s.acq_value),
                        l,
                        u,
                    });
                }
            }
        }

        u = 0;
        while u < config.u_max && i < config.i_max {
            let ctx = step_context(space, config, round);
            round += 1;
            let cand = upper_step(&data, ctx, &mut memory, &mut rng)?;
            let y_max = data.y_max().expect("initial design is nonempty");
            let y = eval(&cand.x)?;
            if improved(y_max, y, config.gamma) {
                u = 0;
            } else {
                u += 1;
            }
            data.push(cand.x.clone(), y);
            i += 1;
            trace.records.push(TraceRecord {
                iteration: i,
                source: Source::Upper,
                x: cand.x,
                y,
                incumbent_after: data.y_max().expect("nonempty"),
                acq_value: Some(cand.value),
                l: 0,
                u,
            });
        }
    }
    Ok(trace)
}

fn step_context<'a>(space: &'a SearchSpace, config: &'a EngineConfig, round: usize) -> StepContext<'a> {
    StepContext {
        space,
        acquisition: &config.acquisition,
        surrogate: &config.surrogate,
        incumbent: config.incumbent,
        optimize: round.is_multiple_of(config.gp_optimize_every),
    }
}

/// Uniform random search with the same budget accounting as [`run`]:
/// `n_init` global draws followed by `i_max` draws tagged as upper-level.
pub fn random_search<F>(mut objective: F, space: &SearchSpace, config: &EngineConfig) -> Result<Trace>
where
    F: FnMut(&[f64]) -> f64,
{
    config.validate(0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut data = Dataset::new();
    let mut trace = Trace::default();
    for k in 0..config.n_init + config.i_max {
        let x = space.sample_uniform(&mut rng);
        let y = objective(&x);
        if !y.is_finite() {
            return Err(Error::Objective { point: x, value: y });
        }
        data.push(x.clone(), y);
        let init = k < config.n_init;
        trace.records.push(TraceRecord {
            iteration: if init { 0 } else { k + 1 - config.n_init },
            source: if init { Source::InitGlobal } else { Source::Upper },
            x,
            y,
            incumbent_after: data.y_max().expect("nonempty"),
            acq_value: None,
            l: 0,
            u: 0,
        });
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        -x.iter().map(|v| v * v).sum::<f64>()
    }

    fn fast_config(i_max: usize, seed: u64) -> EngineConfig {
        EngineConfig {
            i_max,
            seed,
            surrogate: SurrogateConfig { restarts: 2, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn improvement_branches() {
        assert!(!improved(5.0, 5.0, 0.0));
        assert!(improved(-4.0, -3.0, 0.1));
        assert!(!improved(10.0, 10.5, 0.1));
        assert!(!improved(0.0, 0.0, 0.0));
        assert!(improved(0.0, 1e-12, 0.1));
    }

    #[test]
    fn initial_design_counts() {
        let space = SearchSpace::cube(1, -5.0, 5.0).unwrap();
        let hyps: Vec<Hypothesis> = (0..7)
            .map(|k| Hypothesis::axis_box(format!("h{k}"), &space, &[-5.0 + k as f64], &[-4.0 + k as f64]).unwrap())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (n, j, total) in [(5, 3, 5), (5, 7, 8), (5, 0, 5)] {
            let d = initial_design(&space, &hyps[..j], n, &mut rng).unwrap();
            assert_eq!(d.len(), total);
            for k in 0..j {
                let pts: Vec<_> = d.iter().filter(|(s, _)| *s == Source::InitHypothesis(k)).collect();
                assert_eq!(pts.len(), 1);
                assert!(hyps[k].contains(&pts[0].1).unwrap());
            }
        }
    }

    #[test]
    fn vanilla_degeneration_counts() {
        let space = SearchSpace::cube(1, -5.0, 5.0).unwrap();
        let t = run(sphere, &space, &[], &fast_config(10, 1)).unwrap();
        assert_eq!(t.records.iter().filter(|r| r.source == Source::InitGlobal).count(), 5);
        assert_eq!(t.records.iter().filter(|r| r.source == Source::Upper).count(), 10);
        assert_eq!(t.len(), 15);
    }

    #[test]
    fn trace_invariants_hold() {
        let space = SearchSpace::cube(2, -5.0, 5.0).unwrap();
        let good = Hypothesis::axis_box("good", &space, &[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let poor = Hypothesis::axis_box("poor", &space, &[-5.0, -5.0], &[-3.0, -3.0]).unwrap();
        let hyps = vec![good, poor];
        let cfg = fast_config(25, 3);
        let t = run(sphere, &space, &hyps, &cfg).unwrap();
        assert_eq!(t.budget_records().count(), 25);
        for w in t.records.windows(2) {
            assert!(w[1].incumbent_after >= w[0].incumbent_after);
        }
        for r in &t.records {
            if let Source::Lower(j) = r.source {
                assert!(hyps[j].contains(&r.x).unwrap());
            }
        }
        let again = run(sphere, &space, &hyps, &cfg).unwrap();
        assert_eq!(t.to_csv_string(0), again.to_csv_string(0));
    }

    #[test]
    fn lower_level_resets_on_improvement() {
        // the first post-init evaluation is a lower seed; if it improves, l stays 0
        let space = SearchSpace::cube(1, -5.0, 5.0).unwrap();
        let good = Hypothesis::axis_box("good", &space, &[-1.0], &[1.0]).unwrap();
        for seed in 0..10 {
            let t = run(sphere, &space, std::slice::from_ref(&good), &fast_config(6, seed)).unwrap();
            let init_best = t.init_records().map(|r| r.y).fold(f64::NEG_INFINITY, f64::max);
            let first = t.budget_records().next().unwrap();
            assert_eq!(first.source, Source::Lower(0));
            if first.y > init_best {
                assert_eq!(first.l, 0);
                let second = t.budget_records().nth(1).unwrap();
                assert_eq!(second.source, Source::Lower(0));
            } else {
                assert_eq!(first.l, 1);
            }
        }
    }

    #[test]
    fn level_blocks_end_on_plateau() {
        let space = SearchSpace::cube(2, -5.0, 5.0).unwrap();
        let good = Hypothesis::axis_box("good", &space, &[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let cfg = fast_config(40, 8);
        let t = run(sphere, &space, &[good], &cfg).unwrap();
        let post: Vec<&TraceRecord> = t.budget_records().collect();
        for w in post.windows(2) {
            let (a, b) = (w[0], w[1]);
            match (a.source, b.source) {
                (Source::Lower(_), Source::Upper) => assert_eq!(a.l, cfg.l_max),
                (Source::Upper, Source::Lower(_)) => assert_eq!(a.u, cfg.u_max),
                _ => {}
            }
        }
    }

    #[test]
    fn lower_step_prior_fallback() {
        let space = SearchSpace::cube(1, -5.0, 5.0).unwrap();
        let a = Hypothesis::axis_box("a", &space, &[-1.0], &[1.0]).unwrap();
        let b = Hypothesis::axis_box("b", &space, &[3.0], &[4.0]).unwrap();
        let data = Dataset::from_points(vec![(vec![-4.0], -16.0)]);
        let cfg = EngineConfig::default();
        let ctx = StepContext {
            space: &space,
            acquisition: &cfg.acquisition,
            surrogate: &cfg.surrogate,
            incumbent: IncumbentScope::Global,
            optimize: true,
        };
        let seeds = lower_step(&data, &[a.clone(), b.clone()], 1, ctx, &mut ParamMemory::default(), &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        let s = &seeds[0];
        let h = if s.hypothesis == 0 { &a } else { &b };
        assert!(h.contains(&s.x).unwrap());
        let prior_ei = acquisition::expected_improvement(0.0, 1.0, -16.0, 0.0);
        assert!((s.acq_value - prior_ei).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_objective() {
        let space = SearchSpace::cube(1, -1.0, 1.0).unwrap();
        let err = run(|_| f64::NAN, &space, &[], &fast_config(3, 0)).unwrap_err();
        assert!(matches!(err, Error::Objective { .. }));
    }

    #[test]
    fn config_validation() {
        let mut cfg = EngineConfig { top_seeds: 3, ..Default::default() };
        assert!(cfg.validate(2).is_err());
        assert!(cfg.validate(0).is_ok());
        cfg.top_seeds = 1;
        cfg.l_max = 0;
        assert!(cfg.validate(1).is_err());
    }

    #[test]
    fn random_search_budget() {
        let space = SearchSpace::cube(2, -1.0, 1.0).unwrap();
        let t = random_search(sphere, &space, &fast_config(12, 4)).unwrap();
        assert_eq!(t.budget_records().count(), 12);
        assert_eq!(t.budget_records().last().unwrap().iteration, 12);
    }
}
