use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cff_core::eval::{evaluate_with, EvalOptions};
use cff_core::verify::{check_suite, GradCheckConfig, SuiteConfig};
use cff_lab::config::ExperimentConfig;
use cff_lab::experiment::{compare_variants, confusion_csv, run_experiment};
use cff_lab::io::load_dataset;
use cff_lab::{model, LabError, Result};

/// Forward-forward training with collaborative inter-layer goodness.
#[derive(Parser)]
#[command(name = "cff", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one variant with one seed and export its metrics.
    Train(RunArgs),
    /// Train all three variants over several seeds and compare them.
    ///
    /// The stats table reports the paired t statistic and its degrees of
    /// freedom; compare |t| against two-sided 5% critical values
    /// (df=2: 4.303, df=4: 2.776, df=9: 2.262).
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
    },
    /// Evaluate a saved network on the test split.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        model: PathBuf,
    },
    /// Check every analytic gradient against finite differences.
    Check {
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 1e-5)]
        h: f64,
        #[arg(long, default_value_t = 0x5EED)]
        seed: u64,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    epochs_per_layer: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    gamma_lr: Option<String>,
    #[arg(long)]
    gamma_init: Option<String>,
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    alpha_mode: Option<String>,
    /// Input size and layer widths, e.g. 784,500,500.
    #[arg(long)]
    widths: Option<String>,
    #[arg(long)]
    train_images: Option<String>,
    #[arg(long)]
    train_labels: Option<String>,
    #[arg(long)]
    test_images: Option<String>,
    #[arg(long)]
    test_labels: Option<String>,
    #[arg(long)]
    train_split: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    #[arg(long)]
    eval_every: Option<String>,
    #[arg(long)]
    progress_samples: Option<String>,
    #[arg(long)]
    skip_first_layer: Option<String>,
    /// Also row-normalize the embedded input before layer 1 (true/false).
    #[arg(long)]
    normalize_input: Option<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p).map_err(|e| match e {
                LabError::Io { path, source } => LabError::Config(format!("{path}: {source}")),
                other => other,
            })?,
            None => ExperimentConfig::default(),
        };
        let overrides = [
            ("variant", &self.variant),
            ("seed", &self.seed),
            ("epochs-per-layer", &self.epochs_per_layer),
            ("batch-size", &self.batch_size),
            ("lr", &self.lr),
            ("gamma-lr", &self.gamma_lr),
            ("gamma-init", &self.gamma_init),
            ("theta", &self.theta),
            ("alpha-mode", &self.alpha_mode),
            ("widths", &self.widths),
            ("train-images", &self.train_images),
            ("train-labels", &self.train_labels),
            ("test-images", &self.test_images),
            ("test-labels", &self.test_labels),
            ("train-split", &self.train_split),
            ("out-dir", &self.out_dir),
            ("eval-every", &self.eval_every),
            ("progress-samples", &self.progress_samples),
            ("skip-first-layer", &self.skip_first_layer),
            ("normalize-input", &self.normalize_input),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let r = run_experiment(&cfg)?;
            println!(
                "{}: train_acc {:.4} test_acc {:.4} -> {}",
                r.run_id,
                r.train_eval.accuracy,
                r.test_eval.accuracy,
                r.run_dir.display()
            );
        }
        Command::Compare { run, seeds } => {
            let cfg = run.resolve()?;
            let cmp = compare_variants(&cfg, &seeds)?;
            for s in &cmp.summaries {
                println!(
                    "{:<9} test {:.4} ± {:.4}  improvement {:+.4} ({:+.2}%)",
                    s.variant.name(),
                    s.mean_test,
                    s.sd_test,
                    s.improvement_abs,
                    100.0 * s.improvement_rel
                );
            }
            for p in &cmp.pairs {
                match &p.outcome {
                    Ok(r) => println!(
                        "{} vs {}: diff {:+.4} t {:.3} (df {}) d {:.3}",
                        p.a, p.b, p.mean_difference, r.t_statistic, r.degrees_of_freedom, r.cohens_d
                    ),
                    Err(e) => println!("{} vs {}: diff {:+.4} ({e})", p.a, p.b, p.mean_difference),
                }
            }
        }
        Command::Eval { run, model: path } => {
            let cfg = run.resolve()?;
            let net = model::load(&path)?;
            let test = load_dataset(&cfg.test_images, &cfg.test_labels)?;
            let opts = EvalOptions {
                include_first_layer: !cfg.skip_first_layer,
            };
            let report = evaluate_with(&net, &test, &opts)?;
            println!("accuracy {:.4} over {} samples", report.accuracy, report.total);
            print!("{}", confusion_csv(&report));
        }
        Command::Check { cases, tol, h, seed } => {
            let cfg = SuiteConfig {
                cases,
                seed,
                check: GradCheckConfig {
                    h,
                    tol,
                    ..GradCheckConfig::default()
                },
                ..SuiteConfig::default()
            };
            let r = check_suite(&cfg)?;
            println!(
                "cases {} checked {} excluded {} ({:.1}%) max_relative_error {:.3e} (tol {:.1e}) full-context drift {:.3e}",
                r.cases_run,
                r.checked,
                r.excluded,
                100.0 * r.excluded_fraction(),
                r.max_relative_error,
                r.tol,
                r.full_context_max_error
            );
            if let Some(at) = r.worst_parameter {
                println!("worst parameter {at:?}");
            }
            println!("pass={}", r.pass);
            if !r.pass {
                return Err(LabError::Check(format!(
                    "max relative error {:.3e} above {:.1e}",
                    r.max_relative_error, r.tol
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
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
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
