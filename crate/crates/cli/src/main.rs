//! `phenomodel` command-line front end.
//!
//! Exit codes: 0 on success, 1 for invalid configuration, arguments or
//! input files, 2 when a run fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use phenomodel::config::ExperimentConfig;
use phenomodel::controller::ProbeMode;
use phenomodel::eval::{evaluate_models, ModelKind};
use phenomodel::experiment::{self, Selection};
use phenomodel::{io, Error};

#[derive(Debug, Parser)]
#[command(
    name = "phenomodel",
    version,
    about = "Genotypic and phenotypic surrogate models of evolved maze controllers"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment configuration (JSON); defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replication count, overriding the configuration.
    #[arg(long, global = true)]
    replications: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run MAP-Elites and write one dataset per hidden size and replication.
    Generate {
        /// Output root; datasets go to <out>/datasets.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-sample phenotypes of a stored archive for new probe lengths.
    Phenotype {
        /// Dataset directory holding archive.json and meta.json.
        #[arg(long)]
        data: PathBuf,
        /// Probe lengths, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<usize>,
        #[arg(long, value_parser = parse_probe_mode, default_value = "uniform")]
        mode: ProbeMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one model on one dataset and print its Kendall tau.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        subset: String,
        #[arg(long, value_parser = parse_model)]
        model: ModelKind,
    },
    /// Fit and score models on every dataset, then write the report.
    Evaluate {
        #[command(flatten)]
        scope: Scope,
        #[arg(long, value_delimiter = ',', value_parser = parse_model)]
        model: Vec<ModelKind>,
    },
    /// Principal component counts only.
    Analyze {
        #[command(flatten)]
        scope: Scope,
    },
    /// Aggregate results.csv and pca.csv into summary tables and figure data.
    Report {
        /// Directory with results.csv and/or pca.csv [default: <outDir>/results].
        #[arg(long)]
        results: Option<PathBuf>,
        /// Report directory [default: the results directory].
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Scope {
    /// Dataset root or single dataset directory [default: <outDir>].
    #[arg(long)]
    data: Option<PathBuf>,
    /// Results directory [default: <outDir>/results].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict to these subsets, comma separated.
    #[arg(long, value_delimiter = ',')]
    subset: Vec<String>,
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_probe_mode(s: &str) -> Result<ProbeMode, String> {
    match s {
        "uniform" => Ok(ProbeMode::Uniform),
        "trajectory" => Ok(ProbeMode::Trajectory),
        other => Err(format!(
            "unknown probe mode '{other}' (expected uniform or trajectory)"
        )),
    }
}

fn load_config(common: &Common, fallback: Option<&Path>) -> Result<ExperimentConfig, Error> {
    let path = common
        .config
        .as_deref()
        .or(fallback.filter(|p| p.is_file()));
    let mut config = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.base_seed = seed;
    }
    if let Some(r) = common.replications {
        config.replications = r;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(jobs) = cli.common.jobs {
        if jobs == 0 {
            return Err(Error::InvalidConfig("--jobs must be at least 1".into()));
        }
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match cli.command {
        Command::Generate { out } => {
            let mut config = load_config(&cli.common, None)?;
            if let Some(out) = out {
                config.out_dir = out;
            }
            let runs = experiment::generate(&config, |r| {
                eprintln!("generated {} ({} elites)", r.dir.display(), r.elites);
            })?;
            println!(
                "{} datasets written to {}",
                runs.len(),
                config.out_dir.join(experiment::DATASETS_DIR).display()
            );
        }
        Command::Phenotype { data, k, mode, out } => {
            let config = load_config(&cli.common, None)?;
            let d = experiment::resample_phenotypes(
                &data,
                &k,
                mode,
                config.trajectory_controllers,
                &out,
            )?;
            println!(
                "{} rows, subsets: {}",
                d.rows(),
                d.subset_names().collect::<Vec<_>>().join(", ")
            );
        }
        Command::Fit {
            data,
            subset,
            model,
        } => {
            let config = load_config(&cli.common, None)?;
            let dataset = io::read_dataset(&data)?;
            let mut eval = config.eval_for(dataset.meta.replication);
            eval.subsets = Some(vec![subset]);
            eval.models = vec![model];
            let r = evaluate_models(&dataset, &eval)?.remove(0);
            match (r.kendall_tau, &r.error) {
                (Some(tau), _) => {
                    let coefs = r
                        .n_coefficients
                        .map(|c| format!(" coefficients={c}"))
                        .unwrap_or_default();
                    println!(
                        "{} {} tau={tau:.6} train={} test={}{coefs}",
                        r.subset, r.model, r.train_size, r.test_size
                    );
                }
                (None, Some(err)) if r.n_coefficients.is_some() => {
                    println!(
                        "{} {} tau=NA ({err}) train={} test={} coefficients={}",
                        r.subset,
                        r.model,
                        r.train_size,
                        r.test_size,
                        r.n_coefficients.unwrap_or(0)
                    );
                }
                (None, err) => {
                    return Err(Error::InvalidInput(format!(
                        "fit failed: {}",
                        err.as_deref().unwrap_or("unknown error")
                    )))
                }
            }
        }
        Command::Evaluate { scope, model } => {
            let config = load_config(&cli.common, None)?;
            let data = scope.data.unwrap_or_else(|| config.out_dir.clone());
            let out = scope.out.unwrap_or_else(|| config.out_dir.join("results"));
            let selection = Selection {
                subsets: scope.subset,
                models: model,
            };
            let summary = experiment::evaluate(&config, &data, &out, &selection)?;
            print_tau_table(&summary);
            println!("results written to {}", out.display());
        }
        Command::Analyze { scope } => {
            let config = load_config(&cli.common, None)?;
            let data = scope.data.unwrap_or_else(|| config.out_dir.clone());
            let out = scope.out.unwrap_or_else(|| config.out_dir.join("results"));
            let selection = Selection {
                subsets: scope.subset,
                models: Vec::new(),
            };
            let summary = experiment::analyze(&config, &data, &out, &selection)?;
            for c in &summary.pca {
                let median = c.stats.map(|s| s.median).unwrap_or(f64::NAN);
                println!(
                    "nh={} {:<10} median components {median}",
                    c.n_hidden, c.subset
                );
            }
        }
        Command::Report { results, out } => {
            let defaults = load_config(&cli.common, None)?;
            let results = results.unwrap_or_else(|| defaults.out_dir.join("results"));
            let config = load_config(&cli.common, Some(&results.join(io::CONFIG_FILE)))?;
            let out = out.unwrap_or_else(|| results.clone());
            let summary = experiment::report(&results, &out, &config.aggregate_options())?;
            print_tau_table(&summary);
            println!("report written to {}", out.display());
        }
    }
    Ok(())
}

fn print_tau_table(summary: &phenomodel::eval::Summary) {
    for t in &summary.tau {
        let Some(s) = t.stats else {
            println!(
                "nh={} {:<10} {:<8} no successful fits",
                t.n_hidden, t.subset, t.model
            );
            continue;
        };
        println!(
            "nh={} {:<10} {:<8} median tau {:.4} [q1 {:.4}, q3 {:.4}] n={} failed={}",
            t.n_hidden, t.subset, t.model, s.median, s.q1, s.q3, s.n, t.failures
        );
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
