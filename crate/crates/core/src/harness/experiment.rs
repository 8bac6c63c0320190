//! Multi-trial execution of HypBO and its baselines.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::engine::{self, EngineConfig};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Method};
use crate::harness::regret::Band;
use crate::harness::report::{self, Meta, Summary};
use crate::her::{self, ChemistryKind, HerDataset, OracleModel};
use crate::objectives::{ObjectiveSpec, Quality};
use crate::space::{Hypothesis, SearchSpace};
use crate::trace::Trace;

/// Random grid points scored when estimating the oracle optimum.
pub const ORACLE_OPTIMUM_SAMPLES: usize = 100_000;

pub enum Objective {
    Synthetic(ObjectiveSpec),
    Oracle(Box<OracleModel>, HerDataset),
}

impl Objective {
    pub fn space(&self) -> &SearchSpace {
        match self {
            Objective::Synthetic(s) => &s.bounds,
            Objective::Oracle(m, _) => m.space(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Objective::Synthetic(s) => s.key(),
            Objective::Oracle(..) => "her_oracle".into(),
        }
    }

    /// Objective value; NaN outside the oracle's component ranges.
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Objective::Synthetic(s) => s.value(x),
            Objective::Oracle(m, _) => m.evaluate(x).unwrap_or(f64::NAN),
        }
    }
}

/// Largest oracle prediction over the dataset compositions and random
/// points of the dispensing grid. A lower bound on the true maximum.
pub fn oracle_optimum(model: &OracleModel, data: &HerDataset, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = model.space();
    let steps = &data.steps;
    let mut best = data.rows.iter().map(|(c, _)| model.gp().predict_mean(c)).fold(f64::NEG_INFINITY, f64::max);
    let mut x = vec![0.0; 10];
    for _ in 0..samples {
        for (k, v) in x.iter_mut().enumerate() {
            let (lo, hi) = (space.lower()[k], space.upper()[k]);
            let levels = ((hi - lo) / steps[k]).floor() as usize;
            *v = (lo + steps[k] * rng.random_range(0..=levels) as f64).min(hi);
        }
        best = best.max(model.gp().predict_mean(&x));
    }
    best
}

/// Resolves factory keys and hypothesis files against `objective`. Parts
/// joined by `+` are combined; `volume_cap` adds the total-volume row to
/// every other hypothesis in its key.
pub fn resolve_hypotheses(keys: &[String], objective: &Objective, width: f64) -> Result<Vec<Hypothesis>> {
    let mut out = Vec::new();
    for key in keys {
        let capped = key.split('+').any(|p| p == "volume_cap");
        let first = out.len();
        for part in key.split('+').filter(|p| *p != "volume_cap") {
            match objective {
                Objective::Synthetic(spec) => {
                    if let Ok(q) = part.parse::<Quality>() {
                        out.push(spec.quality_hypothesis(q, width)?);
                        continue;
                    }
                }
                Objective::Oracle(..) => {
                    if let Ok(kind) = part.parse::<ChemistryKind>() {
                        out.extend(her::chemistry_hypotheses(kind)?);
                        continue;
                    }
                }
            }
            let path = Path::new(part);
            if !path.exists() {
                return Err(Error::Config(format!("`{part}` is neither a hypothesis key nor an existing file")));
            }
            let h = Hypothesis::load(path)?;
            if h.space().lower() != objective.space().lower() || h.space().upper() != objective.space().upper() {
                return Err(Error::Config(format!("hypothesis file `{part}` uses a different search space")));
            }
            out.push(h);
        }
        if capped {
            if !matches!(objective, Objective::Oracle(..)) || out.len() == first {
                return Err(Error::Config(format!(
                    "`volume_cap` in `{key}` must accompany chemistry hypotheses in the same key"
                )));
            }
            for h in &mut out[first..] {
                *h = her::with_volume_cap(h)?;
            }
        }
    }
    Ok(out)
}

/// Worker count from `HYPBO_THREADS`, else the available parallelism.
pub fn worker_count() -> Result<usize> {
    match std::env::var("HYPBO_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!("HYPBO_THREADS must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub struct Experiment {
    pub objective: Objective,
    pub hypothesis_keys: Vec<String>,
    pub hypotheses: Vec<Hypothesis>,
    pub engine: EngineConfig,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub optimum: f64,
    pub band: Band,
}

impl Experiment {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.engine.seed;
        let (objective, optimum) = if let Some(key) = &cfg.objective.key {
            let spec = ObjectiveSpec::from_key(key)?;
            let opt = spec.optimum_value;
            (Objective::Synthetic(spec), opt)
        } else {
            let data = match (&cfg.objective.oracle_csv, cfg.objective.standin_rows) {
                (Some(p), _) => HerDataset::load_csv(p)?,
                (None, Some(rows)) => her::generate_standin_dataset(rows, &mut ChaCha8Rng::seed_from_u64(seed))?,
                (None, None) => unreachable!("validated"),
            };
            let model = OracleModel::fit(&data, &mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(1)))?;
            let opt = oracle_optimum(&model, &data, ORACLE_OPTIMUM_SAMPLES, seed.wrapping_add(2));
            (Objective::Oracle(Box::new(model), data), opt)
        };
        let hypotheses = resolve_hypotheses(&cfg.hypotheses.keys, &objective, cfg.hypotheses.width)?;
        cfg.engine.validate(hypotheses.len())?;
        Ok(Self {
            objective,
            hypothesis_keys: cfg.hypotheses.keys.clone(),
            hypotheses,
            engine: cfg.engine.clone(),
            methods: cfg.methods.list.clone(),
            trials: cfg.methods.trials,
            optimum,
            band: cfg.output.band,
        })
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.engine.seed.wrapping_add(trial as u64)
    }

    /// One trial; depends only on the method, the trial index and the config.
    pub fn run_trial(&self, method: Method, trial: usize) -> Result<Trace> {
        let cfg = EngineConfig { seed: self.trial_seed(trial), ..self.engine.clone() };
        let f = |x: &[f64]| self.objective.value(x);
        let space = self.objective.space();
        match method {
            Method::Hypbo => engine::run(f, space, &self.hypotheses, &cfg),
            Method::VanillaBo => engine::run(f, space, &[], &cfg),
            Method::RandomSearch => engine::random_search(f, space, &cfg),
        }
    }

    /// Runs every (method, trial) pair on a bounded pool and returns traces
    /// grouped by method in config order.
    pub fn run(&self) -> Result<Vec<(Method, Vec<Trace>)>> {
        let tasks: Vec<(Method, usize)> =
            self.methods.iter().flat_map(|m| (0..self.trials).map(move |t| (*m, t))).collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(worker_count()?)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        let results: Vec<Result<Trace>> = pool.install(|| {
            tasks
                .par_iter()
                .map(|&(m, t)| {
                    log::debug!("{m} trial {t}");
                    self.run_trial(m, t).map_err(|e| Error::Trial {
                        method: m.to_string(),
                        trial: t,
                        seed: self.trial_seed(t),
                        source: Box::new(e),
                    })
                })
                .collect()
        });
        let mut grouped: Vec<(Method, Vec<Trace>)> = self.methods.iter().map(|m| (*m, Vec::new())).collect();
        for ((m, _), r) in tasks.iter().zip(results) {
            let trace = r?;
            grouped.iter_mut().find(|(g, _)| g == m).expect("method listed").1.push(trace);
        }
        Ok(grouped)
    }

    pub fn meta(&self) -> Meta {
        Meta {
            objective: self.objective.label(),
            optimum: self.optimum,
            hypotheses: self.hypothesis_keys.clone(),
            methods: self.methods.clone(),
            trials: self.trials,
            i_max: self.engine.i_max,
            seed: self.engine.seed,
            band: self.band,
        }
    }
}

/// Runs the experiment and writes traces, `meta.json`, `summary.json` and
/// `regret.svg` under `cfg.output.dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Summary> {
    let exp = Experiment::from_config(cfg)?;
    let traces = exp.run()?;
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir)?;
    if let (Objective::Oracle(_, data), Some(_)) = (&exp.objective, cfg.objective.standin_rows) {
        data.write_csv(dir.join("her_standin.csv"))?;
    }
    report::write_all(dir, &exp.meta(), &traces)
}
