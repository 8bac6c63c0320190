//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any fails.

use std::path::Path;
use std::time::{Duration, Instant};

use hypbo::acquisition::expected_improvement;
use hypbo::engine::{self, improved, initial_design, EngineConfig};
use hypbo::gp::{GpFitOptions, GpModel, InputScaling, KernelParams};
use hypbo::harness::config::{HypothesesSection, MethodsSection, ObjectiveSection, OutputSection};
use hypbo::harness::regret::Band;
use hypbo::harness::report::summarize;
use hypbo::harness::{run_experiment, Experiment, ExperimentConfig, Method, Objective};
use hypbo::her::{self, ChemistryKind};
use hypbo::space::{Hypothesis, SearchSpace};
use hypbo::Source;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(id: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    let pass = out.pass && in_time;
    println!(
        "criterion {id:>2} [{}] {name}: {} ({:.1}s of {}s){}",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        budget.as_secs(),
        if in_time { "" } else { " over time budget" }
    );
    pass
}

fn experiment(key: &str, hyps: &[&str], methods: &[Method], trials: usize, i_max: usize) -> Experiment {
    let cfg = ExperimentConfig {
        objective: ObjectiveSection { key: Some(key.into()), ..Default::default() },
        hypotheses: HypothesesSection { keys: hyps.iter().map(|s| s.to_string()).collect(), width: 2.0 },
        engine: EngineConfig { n_init: 5, i_max, seed: 0, ..Default::default() },
        methods: MethodsSection { list: methods.to_vec(), trials },
        output: OutputSection { dir: "unused".into(), band: Band::StandardError },
    };
    Experiment::from_config(&cfg).expect("valid experiment")
}

// Independent posterior via Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

fn matern_ref(x: &[f64], z: &[f64], sv: f64, ls: &[f64]) -> f64 {
    let r = x.iter().zip(z).zip(ls).map(|((a, b), l)| ((a - b) / l).powi(2)).sum::<f64>().sqrt();
    let s5 = 5f64.sqrt() * r;
    sv * (1.0 + s5 + 5.0 * r * r / 3.0) * (-s5).exp()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..25 {
        let d = rng.random_range(1..=3usize);
        let n = rng.random_range(1..=10usize);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let sv = rng.random_range(0.5..2.0);
        let ls: Vec<f64> = (0..d).map(|_| rng.random_range(0.3..2.0)).collect();
        let noise = rng.random_range(1e-3..1e-1);
        let params = KernelParams::new(sv, ls.clone(), noise).unwrap();
        let gp = GpModel::fit(&xs, &ys, InputScaling::Identity, &params, &GpFitOptions::fixed(), &mut rng).unwrap();
        let kmat: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| matern_ref(&xs[i], &xs[j], sv, &ls) + if i == j { noise } else { 0.0 }).collect())
            .collect();
        let alpha = dense_solve(kmat.clone(), ys.clone());
        for _ in 0..10 {
            let q: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let k: Vec<f64> = xs.iter().map(|x| matern_ref(x, &q, sv, &ls)).collect();
            let mean: f64 = k.iter().zip(&alpha).map(|(a, b)| a * b).sum();
            let v = dense_solve(kmat.clone(), k.clone());
            let var = sv - k.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
            let p = gp.predict_unclamped(&q);
            worst = worst.max((p.mean - mean).abs()).max((p.variance - var).abs());
        }
    }
    Outcome { pass: worst <= 1e-8, detail: format!("max |GP - dense| = {worst:.2e} (tol 1e-8)") }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let samples = 1_000_000usize;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mean = rng.random_range(-2.0..2.0);
        let std = rng.random_range(0.05..2.0);
        let inc = rng.random_range(-2.0..2.0);
        // stratified Monte Carlo: one uniform draw per probability stratum
        let mut acc = 0.0;
        for k in 0..samples {
            let u = (k as f64 + rng.random::<f64>()) / samples as f64;
            let z = normal.inverse_cdf(u.clamp(1e-300, 1.0 - 1e-16));
            acc += (mean + std * z - inc).max(0.0);
        }
        let mc = acc / samples as f64;
        worst = worst.max((expected_improvement(mean, std, inc, 0.0) - mc).abs());
    }
    // plain draws as a sanity check on the stratified estimator
    let plain: f64 = (0..samples).map(|_| rng.sample::<f64, _>(StandardNormal).max(0.0)).sum::<f64>() / samples as f64;
    let plain_ok = (plain - expected_improvement(0.0, 1.0, 0.0, 0.0)).abs() < 5e-3;
    Outcome {
        pass: worst <= 1e-3 && plain_ok,
        detail: format!("max |EI - MC| = {worst:.2e} over 20 triples (tol 1e-3)"),
    }
}

fn criterion_3() -> Outcome {
    #[rustfmt::skip]
    let table: [(f64, f64, f64, bool); 18] = [
        (2.0, 0.0, 2.5, true), (2.0, 0.0, 2.0, false), (2.0, 0.0, 1.5, false),
        (2.0, 0.1, 2.5, true), (2.0, 0.1, 2.2, false), (2.0, 0.1, 2.1, false),
        (-2.0, 0.0, -1.5, true), (-2.0, 0.0, -2.0, false), (-2.0, 0.0, -2.5, false),
        (-2.0, 0.1, -1.5, true), (-2.0, 0.1, -1.8, false), (-2.0, 0.1, -1.9, false),
        (0.0, 0.0, 0.5, true), (0.0, 0.0, 0.0, false), (0.0, 0.0, -0.5, false),
        (0.0, 0.1, 0.5, true), (0.0, 0.1, 0.0, false), (0.0, 0.1, -0.5, false),
    ];
    let wrong: Vec<_> = table.iter().filter(|(m, g, y, want)| improved(*m, *y, *g) != *want).collect();
    Outcome { pass: wrong.is_empty(), detail: format!("{}/{} table rows match", table.len() - wrong.len(), table.len()) }
}

fn criterion_4() -> Outcome {
    let space = SearchSpace::cube(2, 0.0, 10.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bad = Vec::new();
    for (n, j) in [(5usize, 0usize), (5, 3), (5, 5), (5, 7), (10, 9)] {
        let hyps: Vec<Hypothesis> = (0..j)
            .map(|k| {
                let lo = k as f64;
                Hypothesis::axis_box(format!("h{k}"), &space, &[lo, 0.0], &[lo + 1.0, 1.0]).unwrap()
            })
            .collect();
        let design = initial_design(&space, &hyps, n, &mut rng).unwrap();
        let expect = j + n.saturating_sub(j).max(1);
        let per_h: Vec<usize> =
            (0..j).map(|k| design.iter().filter(|(s, _)| *s == Source::InitHypothesis(k)).count()).collect();
        let inside = design.iter().all(|(s, x)| match s {
            Source::InitHypothesis(k) => hyps[*k].contains(x).unwrap(),
            _ => true,
        });
        if design.len() != expect || per_h.iter().any(|c| *c != 1) || !inside {
            bad.push((n, j));
        }
    }
    Outcome { pass: bad.is_empty(), detail: format!("mismatched (n, J): {bad:?}") }
}

fn criterion_5() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for key in ["sphere:2", "levy:5"] {
        let exp = experiment(key, &["good"], &[Method::Hypbo, Method::VanillaBo, Method::RandomSearch], 20, 50);
        let traces = exp.run().unwrap();
        let s = summarize(&exp.meta(), &traces).unwrap();
        let h = s.method(Method::Hypbo).unwrap().mean_final_simple_regret;
        for c in &s.comparisons {
            let b = s.method(c.baseline).unwrap().mean_final_simple_regret;
            let p = c.p_value.unwrap_or(1.0);
            ok &= h < b && p < 0.05;
            parts.push(format!("{key} hypbo {h:.2e} vs {} {b:.2e} p={p:.4}", c.baseline));
        }
    }
    Outcome { pass: ok, detail: parts.join("; ") }
}

fn criterion_6() -> Outcome {
    let exp = experiment("sphere:2", &["poor"], &[Method::Hypbo, Method::VanillaBo], 20, 100);
    let traces = exp.run().unwrap();
    let s = summarize(&exp.meta(), &traces).unwrap();
    let h = s.method(Method::Hypbo).unwrap().mean_final_simple_regret;
    let v = s.method(Method::VanillaBo).unwrap().mean_final_simple_regret;
    Outcome {
        pass: h <= 1.5 * v,
        detail: format!("hypbo(poor) {h:.3e} vs 1.5 x vanilla {:.3e} (ratio {:.2})", 1.5 * v, h / v),
    }
}

fn criterion_7() -> Outcome {
    let exp = experiment("sphere:2", &["good+poor"], &[Method::Hypbo], 20, 60);
    let traces = exp.run().unwrap();
    let mut wins = 0;
    for t in &traces[0].1 {
        let window: Vec<_> = t.records.iter().filter(|r| (30..=60).contains(&r.iteration)).collect();
        let total = window.len() as f64;
        let frac = |j| window.iter().filter(|r| r.source == Source::Lower(j)).count() as f64 / total;
        if frac(0) > frac(1) {
            wins += 1;
        }
    }
    Outcome { pass: wins * 5 >= 20 * 4, detail: format!("good fraction > poor fraction in {wins}/20 trials (need 16)") }
}

fn criterion_8() -> Outcome {
    let exp = experiment("branin:2", &[], &[Method::Hypbo, Method::VanillaBo], 3, 20);
    let traces = exp.run().unwrap();
    let mut ok = true;
    for t in 0..3 {
        let (h, v) = (&traces[0].1[t], &traces[1].1[t]);
        ok &= h == v;
        ok &= h.init_records().all(|r| r.source == Source::InitGlobal) && h.init_records().count() == 5;
        ok &= h.budget_records().all(|r| r.source == Source::Upper) && h.budget_records().count() == 20;
    }
    // also against the engine invoked directly
    let direct = engine::run(
        |x| exp.objective.value(x),
        exp.objective.space(),
        &[],
        &EngineConfig { seed: exp.trial_seed(1), ..exp.engine.clone() },
    )
    .unwrap();
    ok &= direct == traces[1].1[1];
    Outcome { pass: ok, detail: format!("J = 0 traces {} vanilla BO record for record", if ok { "equal" } else { "differ from" }) }
}

fn criterion_9() -> Outcome {
    let cfg = ExperimentConfig {
        objective: ObjectiveSection { standin_rows: Some(200), ..Default::default() },
        hypotheses: HypothesesSection { keys: vec!["virtual_chemists".into()], width: 2.0 },
        engine: EngineConfig { i_max: 60, seed: 0, ..Default::default() },
        methods: MethodsSection { list: vec![Method::Hypbo], trials: 5 },
        output: OutputSection { dir: "unused".into(), band: Band::StandardError },
    };
    let exp = Experiment::from_config(&cfg).unwrap();
    let init_ok = matches!(&exp.objective, Objective::Oracle(m, d) if d.len() == 200 && m.noise_variance() > 0.0);
    let traces = match exp.run() {
        Ok(t) => t,
        Err(e) => return Outcome { pass: false, detail: format!("run failed: {e}") },
    };
    let mut lower = 0;
    let mut violations = 0;
    for t in &traces[0].1 {
        for r in &t.records {
            if let Source::Lower(j) | Source::InitHypothesis(j) = r.source {
                lower += 1;
                if !exp.hypotheses[j].contains(&r.x).unwrap() {
                    violations += 1;
                }
            }
        }
    }
    let complete = traces[0].1.iter().all(|t| t.budget_records().count() == 60);
    let ph = her::chemistry_hypotheses(ChemistryKind::PerfectHindsight);
    let bw = her::chemistry_hypotheses(ChemistryKind::BizarroWorld);
    let (feasible, disjoint) = match (ph, bw) {
        (Ok(ph), Ok(bw)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut disjoint = true;
            for _ in 0..10_000 {
                let a = ph[0].sample_uniform(&mut rng, 100_000).unwrap();
                let b = bw[0].sample_uniform(&mut rng, 100_000).unwrap();
                disjoint &= !bw[0].contains(&a).unwrap() && !ph[0].contains(&b).unwrap();
            }
            (true, disjoint)
        }
        _ => (false, false),
    };
    Outcome {
        pass: init_ok && complete && violations == 0 && feasible && disjoint,
        detail: format!(
            "5 trials complete={complete}, {violations}/{lower} hypothesis points outside their constraints, \
             PH/BW feasible={feasible} disjoint={disjoint}"
        ),
    }
}

fn read_traces(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.join("traces"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut ok = true;
    let mut files = 0;
    let configs = [
        (ObjectiveSection { key: Some("ackley:3".into()), ..Default::default() }, vec!["good+poor".to_string()]),
        (ObjectiveSection { standin_rows: Some(60), ..Default::default() }, vec!["perfect_hindsight".to_string()]),
    ];
    for (k, (objective, keys)) in configs.into_iter().enumerate() {
        let mut dirs = Vec::new();
        for rep in 0..2 {
            let dir = tmp.path().join(format!("exp{k}_{rep}"));
            let cfg = ExperimentConfig {
                objective: objective.clone(),
                hypotheses: HypothesesSection { keys: keys.clone(), width: 2.0 },
                engine: EngineConfig { i_max: 12, seed: 42, ..Default::default() },
                methods: MethodsSection { list: vec![Method::Hypbo, Method::VanillaBo, Method::RandomSearch], trials: 2 },
                output: OutputSection { dir: dir.clone(), band: Band::StandardError },
            };
            run_experiment(&cfg).unwrap();
            dirs.push(dir);
        }
        let (a, b) = (read_traces(&dirs[0]), read_traces(&dirs[1]));
        files += a.len();
        ok &= a.len() == 6 && a == b;
        ok &= std::fs::read(dirs[0].join("summary.json")).unwrap() == std::fs::read(dirs[1].join("summary.json")).unwrap();
    }
    Outcome { pass: ok, detail: format!("{files} trace CSVs byte-identical on rerun: {ok}") }
}

fn main() {
    let min = |m: u64| Duration::from_secs(60 * m);
    let results = [
        check(1, "GP posterior vs dense solve", Duration::from_secs(5), criterion_1),
        check(2, "EI closed form vs Monte Carlo", Duration::from_secs(30), criterion_2),
        check(3, "plateau truth table", min(1), criterion_3),
        check(4, "initial-design counts", min(1), criterion_4),
        check(5, "good-hypothesis acceleration", min(10), criterion_5),
        check(6, "poor-hypothesis recovery", min(10), criterion_6),
        check(7, "mixed-hypothesis pruning", min(10), criterion_7),
        check(8, "degeneration to vanilla BO", min(1), criterion_8),
        check(9, "chemistry pipeline", min(15), criterion_9),
        check(10, "determinism", min(5), criterion_10),
    ];
    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
