use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fairaudit::config::ExperimentConfig;
use fairaudit::formats::{self, PoolFormat};
use fairaudit::runner;
use fairaudit::AppError;
use fairaudit_core::harness::{generate_synthetic_pool, ExperimentSummary, SyntheticSpec};
use fairaudit_core::metrics::{mcdiarmid_sample_size, SampleSizeBound};
use fairaudit_core::Strategy;

#[derive(Parser)]
#[command(
    name = "fairaudit",
    version,
    about = "Query-efficient black-box ΔAUC auditing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic planted-bias pool, its scorer and a starter config.
    Generate {
        #[arg(long)]
        out: PathBuf,
        /// TOML file with generator fields; flags below override it.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        noise_scale: Option<f64>,
        #[arg(long, value_enum, default_value = "csv")]
        format: PoolFormat,
    },
    /// Audit with one strategy over the configured seeds.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `audit.strategy` from the config.
        #[arg(long)]
        strategy: Option<String>,
        /// Comma-separated seeds, overriding the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run several strategies on the same seeds and summarise them.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Passive sample sizes from McDiarmid's inequality.
    Bounds {
        #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.02])]
        epsilon: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1])]
        delta: Vec<f64>,
        /// Report the per-group constraint for unbalanced classes.
        #[arg(long)]
        unbalanced: bool,
    },
    /// Tidy `strategy,seed,q,error,width` rows from a run's logs.
    PlotData {
        /// Output directory of a `run` or `compare`.
        #[arg(long)]
        input: PathBuf,
        /// Standard output when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn parse_strategy(s: &str) -> Result<Strategy, AppError> {
    s.parse()
        .map_err(|e: fairaudit_core::harness::HarnessError| AppError::Config(e.to_string()))
}

fn load_config(
    path: &Path,
    seeds: Option<Vec<u64>>,
    output: Option<PathBuf>,
) -> Result<ExperimentConfig, AppError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seeds {
        cfg.seeds = fairaudit::config::Seeds::List(s);
    }
    if let Some(o) = output {
        cfg.output_dir = o;
    }
    Ok(cfg)
}

fn print_summaries(sums: &[ExperimentSummary]) {
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    let mut out = std::io::stdout().lock();
    let eps: Vec<String> = sums
        .first()
        .map(|s| {
            s.queries_to_epsilon
                .iter()
                .map(|(e, _)| format!("t_{e}"))
                .collect()
        })
        .unwrap_or_default();
    let _ = writeln!(
        out,
        "{:<18} {:>5} {} {:>9} {:>9} {:>9}",
        "strategy",
        "seeds",
        eps.join(" "),
        "auec",
        "coverage",
        "pearson"
    );
    for s in sums {
        let t: Vec<String> = s
            .queries_to_epsilon
            .iter()
            .zip(&eps)
            .map(|((_, t), h)| {
                format!(
                    "{:>w$}",
                    t.map_or("-".into(), |t| t.to_string()),
                    w = h.len()
                )
            })
            .collect();
        let _ = writeln!(
            out,
            "{:<18} {:>5} {} {:>9} {:>9} {:>9}",
            s.strategy.name(),
            s.seeds,
            t.join(" "),
            fmt(s.auec.map(|a| a.total)),
            fmt(s.coverage),
            fmt(s.width_error_pearson),
        );
    }
}

fn generate(
    out: &Path,
    spec_path: Option<&Path>,
    overrides: (Option<usize>, Option<usize>, Option<u64>, Option<f64>),
    format: PoolFormat,
) -> Result<(), AppError> {
    let mut spec = match spec_path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| AppError::Config(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str::<SyntheticSpec>(&text).map_err(|e| AppError::Config(e.to_string()))?
        }
        None => SyntheticSpec::default(),
    };
    let (n, dim, seed, noise) = overrides;
    spec.n = n.unwrap_or(spec.n);
    spec.dim = dim.unwrap_or(spec.dim);
    spec.seed = seed.unwrap_or(spec.seed);
    spec.noise_scale = noise.unwrap_or(spec.noise_scale);
    let syn = generate_synthetic_pool(&spec)?;
    let io = |p: &Path, e: std::io::Error| formats::FormatError::Io {
        path: p.display().to_string(),
        source: e,
    };
    std::fs::create_dir_all(out).map_err(|e| io(out, e))?;

    let pool_name = match format {
        PoolFormat::Csv => "pool.csv",
        PoolFormat::Jsonl => "pool.jsonl",
    };
    formats::save_pool(&syn.pool, &out.join(pool_name), format)?;
    let scorer_json = serde_json::to_string_pretty(&syn.scorer).expect("config serialises");
    std::fs::write(out.join("scorer.json"), scorer_json + "\n").map_err(|e| io(out, e))?;
    let table: BTreeMap<String, f64> = syn
        .pool
        .examples()
        .iter()
        .zip(&syn.scores)
        .map(|(e, &s)| (e.id.clone(), s))
        .collect();
    formats::save_score_cache(&table, &out.join("scores.csv"))?;
    let truth = serde_json::json!({ "truth": syn.truth, "flip_prob_group1": syn.scorer.flip_prob_group1, "spec": spec });
    std::fs::write(
        out.join("truth.json"),
        serde_json::to_string_pretty(&truth).expect("json") + "\n",
    )
    .map_err(|e| io(out, e))?;
    let config = format!(
        "seeds = 10\noutput_dir = \"out\"\n\n[pool]\nkind = \"file\"\npath = \"{pool_name}\"\n\n\
         [scorer]\nkind = \"planted\"\npath = \"scorer.json\"\n\n[audit]\nbudget = 600\nbatch = 16\n"
    );
    std::fs::write(out.join("experiment.toml"), config).map_err(|e| io(out, e))?;
    println!(
        "pool ΔAUC = {:.6} ({} examples, dim {})",
        syn.truth,
        syn.pool.len(),
        syn.pool.dim()
    );
    Ok(())
}

fn bounds(epsilons: &[f64], deltas: &[f64], unbalanced: bool) -> Result<(), AppError> {
    let mut out = std::io::stdout().lock();
    let header = if unbalanced {
        "min m·n/(2(m+n))"
    } else {
        "per (group, label) cell"
    };
    let _ = writeln!(out, "{:>8} {:>8} {:>24}", "epsilon", "delta", header);
    for &e in epsilons {
        for &d in deltas {
            let b = mcdiarmid_sample_size(e, d, !unbalanced)
                .map_err(|err| AppError::Config(err.to_string()))?;
            let v = match b {
                SampleSizeBound::PerCell(k) => k.to_string(),
                SampleSizeBound::Constraint { rhs } => format!("{rhs:.3}"),
            };
            let _ = writeln!(out, "{e:>8} {d:>8} {v:>24}");
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Generate {
            out,
            spec,
            n,
            dim,
            seed,
            noise_scale,
            format,
        } => generate(&out, spec.as_deref(), (n, dim, seed, noise_scale), format),
        Command::Run {
            config,
            strategy,
            seeds,
            output,
        } => {
            let cfg = load_config(&config, seeds, output)?;
            let strategy = match strategy {
                Some(s) => parse_strategy(&s)?,
                None => cfg.audit.strategy,
            };
            print_summaries(&runner::run_experiment(&cfg, &[strategy])?);
            Ok(())
        }
        Command::Compare {
            config,
            strategies,
            seeds,
            output,
        } => {
            let cfg = load_config(&config, seeds, output)?;
            let strategies = match strategies {
                Some(list) => list
                    .iter()
                    .map(|s| parse_strategy(s))
                    .collect::<Result<Vec<_>, _>>()?,
                None => cfg.compare_strategies(),
            };
            print_summaries(&runner::run_experiment(&cfg, &strategies)?);
            Ok(())
        }
        Command::Bounds {
            epsilon,
            delta,
            unbalanced,
        } => bounds(&epsilon, &delta, unbalanced),
        Command::PlotData { input, output } => {
            let rows = runner::collect_plot_rows(&input)?;
            match output {
                Some(p) => formats::write_plot_rows(&rows, formats::create_file(&p)?)?,
                None => formats::write_plot_rows(&rows, std::io::stdout().lock())?,
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
