use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use stratcv::experiments::{
    exp_bias_distribution, exp_importance_correlation, exp_learning_curves, oracle,
    reference_model, ExperimentConfig, Simulation, Strategy,
};
use stratcv::federation::{audit, read_dataset_csv, write_dataset_csv};
use stratcv::partition::{
    compute_thresholds, random_partition, read_folds_csv, stratified_partition, write_folds_csv,
};
use stratcv::rng::SeedStream;

#[derive(Parser)]
#[command(
    name = "stratcv",
    version,
    about = "Duplicate leakage in federated cross-validation"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML file with experiment parameters (flat keys)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overrides the config file
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Shrinks sample sizes, repetitions and rounds for quick runs
    #[arg(long, global = true)]
    scale: Option<f64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo estimate of the optimal accuracy
    Oracle,
    /// Generate one federated dataset (and optionally its folds)
    Gen {
        /// Dump the data before duplicate injection
        #[arg(long)]
        no_duplicates: bool,
        /// Also write folds: `random`, `unbiased`, or `x1`..`x10` for stratified
        #[arg(long)]
        partition: Option<String>,
    },
    /// Check the three deduplication definitions on a dataset
    Audit {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        folds: Option<PathBuf>,
    },
    /// Learning curves for the unbiased, random and stratified strategies
    Fig2,
    /// Accuracy distribution of twelve strategies over repeated simulations
    Fig3,
    /// Correlation of stratification bias with covariate importance
    Fig4,
}

fn load_config(g: &GlobalArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentConfig::from_toml(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.master_seed = s;
    }
    if let Some(s) = g.scale {
        cfg.scale = s;
    }
    Ok(cfg.scaled()?)
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn parse_partition(s: &str) -> anyhow::Result<Strategy> {
    match s {
        "random" => Ok(Strategy::Random),
        "unbiased" => Ok(Strategy::Unbiased),
        _ => s
            .strip_prefix('x')
            .and_then(|c| c.parse().ok())
            .map(Strategy::Stratified)
            .ok_or_else(|| {
                stratcv::Error::InvalidArgument(format!("unknown partition {s:?}")).into()
            }),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring the thread pool")?;
    }
    let cfg = load_config(&cli.global)?;
    let out = &cli.global.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    match cli.command {
        Command::Oracle => {
            let (acc, se) = oracle(&cfg)?;
            let line = format!(
                "optimal_accuracy={acc:.16e} std_error={se:.16e} n_mc={}\n",
                cfg.n_mc
            );
            print!("{line}");
            fs::write(out.join("oracle.txt"), line)?;
        }
        Command::Gen {
            no_duplicates,
            partition,
        } => {
            let model = reference_model(&cfg)?;
            let sim = Simulation::generate(
                &cfg,
                &model,
                SeedStream::root(cfg.master_seed).child("sim", 0),
            )?;
            let fed = if no_duplicates {
                &sim.original
            } else {
                &sim.duplicated
            };
            write_dataset_csv(fed, create(out, "dataset.csv")?)?;
            if let Some(p) = partition {
                let folds = match (parse_partition(&p)?, no_duplicates) {
                    (Strategy::Unbiased, true) => sim.unbiased_folds.clone(),
                    (Strategy::Unbiased, false) => anyhow::bail!(stratcv::Error::InvalidArgument(
                        "unbiased folds exist only for the duplicate-free data (--no-duplicates)"
                            .into()
                    )),
                    (s, false) => sim.partition(s)?.1,
                    (Strategy::Random, true) => {
                        let stream = SeedStream::root(cfg.master_seed).child("gen", 0);
                        random_partition(&sim.original, cfg.k, &mut stream.rng())?
                    }
                    (Strategy::Stratified(c), true) => stratified_partition(
                        &sim.original,
                        &compute_thresholds(&sim.original, c, cfg.k)?,
                    )?,
                };
                write_folds_csv(fed, &folds, create(out, "folds.csv")?)?;
            }
            println!(
                "wrote {} records ({} duplicates) in {} hospitals to {}",
                fed.total_records(),
                fed.n_duplicates,
                fed.n_hospitals(),
                out.display()
            );
        }
        Command::Audit { dataset, folds } => {
            let fed = read_dataset_csv(
                File::open(&dataset).with_context(|| format!("opening {}", dataset.display()))?,
                None,
            )?;
            let assignment = match folds {
                Some(p) => Some(read_folds_csv(
                    File::open(&p).with_context(|| format!("opening {}", p.display()))?,
                    &fed,
                    None,
                )?),
                None => None,
            };
            let report = audit(&fed, assignment.as_ref())?;
            let text = report.render();
            print!("{text}");
            fs::write(out.join("audit.txt"), text)?;
        }
        Command::Fig2 => {
            let lc = exp_learning_curves(&cfg)?;
            lc.write_csv(create(out, "fig2.csv")?)?;
            lc.write_fold_csv(create(out, "fig2_folds.csv")?)?;
            for (s, cv) in &lc.strategies {
                println!(
                    "{s}: final train {:.4} valid {:.4}",
                    cv.mean_train_curve[cv.rounds - 1],
                    cv.mean_valid_accuracy()
                );
            }
            println!("optimal accuracy {:.4}", lc.optimal_accuracy);
        }
        Command::Fig3 => {
            let bd = exp_bias_distribution(&cfg)?;
            bd.write_csv(create(out, "fig3.csv")?)?;
            bd.write_summary_csv(create(out, "fig3_summary.csv")?)?;
            for s in Strategy::all() {
                let a = bd.accuracies(s);
                println!("{s}: mean {:.4}", stratcv::experiments::mean(&a));
            }
        }
        Command::Fig4 => {
            let ic = exp_importance_correlation(&cfg)?;
            ic.write_csv(create(out, "fig4.csv")?)?;
            let line = ic.summary_line();
            fs::write(out.join("fig4_summary.txt"), format!("{line}\n"))?;
            println!("{line}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e
                .downcast_ref::<stratcv::Error>()
                .map_or("error", |e| e.code());
            let message = format!("{e:#}").replace('\n', " ");
            eprintln!("error: kind={code} message={message}");
            ExitCode::FAILURE
        }
    }
}
