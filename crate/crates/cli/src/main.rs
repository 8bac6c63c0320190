use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hypbo::engine::EngineConfig;
use hypbo::harness::config::{HypothesesSection, MethodsSection, ObjectiveSection, OutputSection};
use hypbo::harness::experiment::resolve_hypotheses;
use hypbo::harness::{report, run_experiment, Experiment, ExperimentConfig, Method, Summary};
use hypbo::Error;

#[derive(Parser)]
#[command(name = "hypbo", version, about = "Bilevel Bayesian optimization with expert hypotheses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment from a TOML config file.
    Run { config: PathBuf },
    /// Compare HypBO, vanilla BO and random search on a synthetic objective.
    Bench {
        /// Registry key such as `sphere:2` or `ackley:9`.
        #[arg(long)]
        objective: String,
        /// Hypothesis key (`good`, `weak`, `poor`, `good+poor`) or file path.
        #[arg(long)]
        hypothesis: Vec<String>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 50)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "hypbo-bench")]
        out: PathBuf,
    },
    /// Fit the HER oracle and run the chemistry hypothesis sets against it.
    Her {
        /// HER measurements (`P10,...,NaDS,HER`).
        #[arg(long, required_unless_present = "standin", conflicts_with = "standin")]
        data: Option<PathBuf>,
        /// Generate a stand-in dataset with this many rows instead.
        #[arg(long)]
        standin: Option<usize>,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 60)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "hypbo-her")]
        out: PathBuf,
    },
    /// Rebuild summary.json and regret.svg from an output directory.
    Report { dir: PathBuf },
}

const HER_SETS: [&str; 4] = ["what_they_knew", "perfect_hindsight", "bizarro_world", "virtual_chemists"];

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let summary = run_experiment(&cfg)?;
            print_summary(&summary);
            println!("wrote {}", cfg.output.dir.display());
        }
        Command::Bench { objective, hypothesis, trials, iters, seed, out } => {
            let cfg = ExperimentConfig {
                objective: ObjectiveSection { key: Some(objective), ..Default::default() },
                hypotheses: HypothesesSection { keys: hypothesis, ..Default::default() },
                engine: EngineConfig { i_max: iters, seed, ..Default::default() },
                methods: MethodsSection { list: vec![Method::Hypbo, Method::VanillaBo, Method::RandomSearch], trials },
                output: OutputSection { dir: out.clone(), band: Default::default() },
            };
            let summary = run_experiment(&cfg)?;
            print_summary(&summary);
            println!("wrote {}", out.display());
        }
        Command::Her { data, standin, trials, iters, seed, out } => {
            let cfg = ExperimentConfig {
                objective: ObjectiveSection { key: None, oracle_csv: data, standin_rows: standin },
                hypotheses: HypothesesSection::default(),
                engine: EngineConfig { i_max: iters, seed, ..Default::default() },
                methods: MethodsSection { list: vec![Method::Hypbo, Method::VanillaBo, Method::RandomSearch], trials },
                output: OutputSection { dir: out.clone(), band: Default::default() },
            };
            let mut exp = Experiment::from_config(&cfg)?;
            std::fs::create_dir_all(&out)?;
            if let hypbo::harness::Objective::Oracle(_, d) = &exp.objective {
                if standin.is_some() {
                    d.write_csv(out.join("her_standin.csv"))?;
                }
            }
            println!("oracle optimum estimate: {:.6}", exp.optimum);
            for set in HER_SETS {
                exp.hypothesis_keys = vec![set.to_string()];
                exp.hypotheses = resolve_hypotheses(&exp.hypothesis_keys, &exp.objective, 2.0)?;
                exp.engine.validate(exp.hypotheses.len())?;
                let traces = exp.run()?;
                let summary = report::write_all(&out.join(set), &exp.meta(), &traces)?;
                println!("[{set}]");
                print_summary(&summary);
            }
            println!("wrote {}", out.display());
        }
        Command::Report { dir } => {
            let summary = report::regenerate(&dir)?;
            print_summary(&summary);
        }
    }
    Ok(())
}

fn print_summary(s: &Summary) {
    println!("objective {} (optimum {:.6}), {} trials x {} iterations", s.meta.objective, s.meta.optimum, s.meta.trials, s.meta.i_max);
    for r in &s.methods {
        println!("  {:<14} mean final simple regret {:.6e}", r.method.name(), r.regret.mean_final_simple_regret);
    }
    for c in &s.comparisons {
        match c.p_value {
            Some(p) => println!(
                "  hypbo vs {:<14} p = {:.4}{}{}",
                c.baseline.name(),
                p,
                if c.significant { " *" } else { "" },
                if c.significant_bonferroni { " (bonferroni)" } else { "" }
            ),
            None => println!("  hypbo vs {:<14} {}", c.baseline.name(), c.note.as_deref().unwrap_or("not tested")),
        }
    }
}
