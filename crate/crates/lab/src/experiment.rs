//! Seeded runs, variant comparisons and their CSV exports.
//!
//! Everything a run writes is a function of its config and seed, except
//! `timing.csv`, which records wall-clock and resident memory per layer.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cff_core::collab::{
    train_network, CollabParams, NetworkState, TrainConfig, TrainObserver, TrainingReport, Variant,
};
use cff_core::data::Dataset;
use cff_core::eval::{evaluate_with, EvalOptions, EvalReport};
use cff_core::ff::{AdamConfig, GoodnessConfig};
use cff_core::stats::{compare_samples, mean, sample_variance, StatReport};
use cff_core::{Rng, NUM_CLASSES};

use crate::config::ExperimentConfig;
use crate::io::load_dataset;
use crate::{model, LabError, Result};

pub struct ExperimentData {
    pub train: Dataset,
    pub test: Dataset,
}

/// Loads the configured files and keeps the first `train_split` training samples.
pub fn load_data(cfg: &ExperimentConfig) -> Result<ExperimentData> {
    let full = load_dataset(&cfg.train_images, &cfg.train_labels)?;
    if cfg.train_split > full.len() {
        return Err(LabError::Config(format!(
            "train-split {} exceeds the {} samples in {}",
            cfg.train_split,
            full.len(),
            cfg.train_images.display()
        )));
    }
    let test = load_dataset(&cfg.test_images, &cfg.test_labels)?;
    let data = ExperimentData {
        train: full.head(cfg.train_split),
        test,
    };
    for ds in [&data.train, &data.test] {
        if ds.dim() != cfg.widths[0] {
            return Err(LabError::Config(format!(
                "widths start at {} but the images have {} pixels",
                cfg.widths[0],
                ds.dim()
            )));
        }
    }
    Ok(data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProgressSample {
    pub layer: usize,
    pub epoch: usize,
    pub train_acc: f64,
    pub test_acc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerCost {
    pub seconds: f64,
    pub peak_rss_kb: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub run_id: String,
    pub config: ExperimentConfig,
    pub training: TrainingReport,
    pub progress: Vec<ProgressSample>,
    pub costs: Vec<LayerCost>,
    pub train_eval: EvalReport,
    pub test_eval: EvalReport,
    pub network: NetworkState,
    pub run_dir: PathBuf,
}

/// Files every run writes whose bytes depend only on config and seed.
pub const METRIC_FILES: [&str; 6] = [
    "config.txt",
    "metrics.csv",
    "gamma.csv",
    "summary.csv",
    "confusion.csv",
    "model.txt",
];

fn peak_rss_kb() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmHWM:"))
        .and_then(|v| v.split_whitespace().next())
        .and_then(|v| v.parse().ok())
}

struct RunObserver<'a> {
    eval_every: usize,
    opts: EvalOptions,
    train_probe: Dataset,
    test_probe: &'a Dataset,
    progress: Vec<ProgressSample>,
    costs: Vec<LayerCost>,
    started: Option<Instant>,
    run_id: &'a str,
}

impl TrainObserver for RunObserver<'_> {
    fn layer_started(&mut self, layer: usize) {
        log::info!("{}: training layer {}", self.run_id, layer + 1);
        self.started = Some(Instant::now());
    }

    fn epoch_finished(
        &mut self,
        net: &NetworkState,
        layer: usize,
        epoch: usize,
        loss: f64,
    ) -> cff_core::Result<()> {
        if self.eval_every > 0 && (epoch + 1).is_multiple_of(self.eval_every) {
            let train_acc = evaluate_with(net, &self.train_probe, &self.opts)?.accuracy;
            let test_acc = evaluate_with(net, self.test_probe, &self.opts)?.accuracy;
            log::info!(
                "{}: layer {} epoch {} loss {loss:.5} train {train_acc:.4} test {test_acc:.4}",
                self.run_id,
                layer + 1,
                epoch + 1
            );
            self.progress.push(ProgressSample {
                layer,
                epoch,
                train_acc,
                test_acc,
            });
        }
        Ok(())
    }

    fn layer_finished(&mut self, _layer: usize) {
        let seconds = self.started.map_or(0.0, |t| t.elapsed().as_secs_f64());
        self.costs.push(LayerCost {
            seconds,
            peak_rss_kb: peak_rss_kb(),
        });
    }
}

pub fn build_network(cfg: &ExperimentConfig, rng: &mut Rng) -> Result<NetworkState> {
    let collab = CollabParams::for_variant(
        cfg.variant,
        cfg.widths.len() - 1,
        cfg.gamma_init,
        cfg.gamma_lr,
        cfg.alpha_mode,
    )?;
    let net = NetworkState::random(&cfg.widths, collab, GoodnessConfig { theta: cfg.theta }, rng)?;
    Ok(net.with_input_normalization(cfg.normalize_input))
}

/// Loads the data, trains, evaluates both splits and writes the run directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    run_with_data(cfg, &data)
}

pub fn run_with_data(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<RunRecord> {
    cfg.validate()?;
    let run_id = cfg.run_id();
    let mut rng = Rng::new(cfg.seed);
    let mut net = build_network(cfg, &mut rng)?;
    let train_cfg = TrainConfig {
        variant: cfg.variant,
        epochs_per_layer: cfg.epochs_per_layer,
        batch_size: cfg.batch_size,
        adam: AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    };
    let opts = EvalOptions {
        include_first_layer: !cfg.skip_first_layer,
    };
    let test_probe = data.test.head(cfg.progress_samples);
    let mut observer = RunObserver {
        eval_every: cfg.eval_every,
        opts,
        train_probe: data.train.head(cfg.progress_samples),
        test_probe: &test_probe,
        progress: Vec::new(),
        costs: Vec::new(),
        started: None,
        run_id: &run_id,
    };
    let training = train_network(&mut net, &data.train, &train_cfg, &mut rng, &mut observer)?;
    let (progress, costs) = (observer.progress, observer.costs);
    let train_eval = evaluate_with(&net, &data.train, &opts)?;
    let test_eval = evaluate_with(&net, &data.test, &opts)?;
    log::info!(
        "{run_id}: train accuracy {:.4}, test accuracy {:.4}",
        train_eval.accuracy,
        test_eval.accuracy
    );
    let record = RunRecord {
        run_dir: cfg.out_dir.join(&run_id),
        run_id,
        config: cfg.clone(),
        training,
        progress,
        costs,
        train_eval,
        test_eval,
        network: net,
    };
    write_run(&record)?;
    Ok(record)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| LabError::io(path.display(), e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per (layer, epoch); accuracy columns are blank between samples.
pub fn metrics_csv(r: &RunRecord) -> String {
    let mut s = String::from("run_id,variant,layer,epoch,loss,gamma,train_acc,test_acc\n");
    for (l, losses) in r.training.losses.iter().enumerate() {
        for (e, loss) in losses.iter().enumerate() {
            let gamma = r.training.gamma.per_layer[l][e].gamma;
            let sample = r.progress.iter().find(|p| p.layer == l && p.epoch == e);
            let _ = writeln!(
                s,
                "{},{},{},{},{loss},{gamma},{},{}",
                r.run_id,
                r.config.variant,
                l + 1,
                e + 1,
                opt(sample.map(|p| p.train_acc)),
                opt(sample.map(|p| p.test_acc)),
            );
        }
    }
    s
}

pub fn gamma_csv(r: &RunRecord) -> String {
    let mut s = String::from("run_id,variant,layer,epoch,gamma,grad\n");
    for (l, samples) in r.training.gamma.per_layer.iter().enumerate() {
        for g in samples {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.run_id,
                r.config.variant,
                l + 1,
                g.epoch + 1,
                g.gamma,
                g.grad
            );
        }
    }
    s
}

/// Improvement of `acc` over `baseline`: absolute difference and ratio.
pub fn improvement(acc: f64, baseline: f64) -> (f64, f64) {
    let abs = acc - baseline;
    (abs, if baseline > 0.0 { abs / baseline } else { 0.0 })
}

fn summary_csv(r: &RunRecord) -> String {
    // a lone run only knows its improvement when it is the baseline itself
    let imp = (r.config.variant == Variant::Baseline)
        .then(|| improvement(r.test_eval.accuracy, r.test_eval.accuracy));
    format!(
        "run_id,variant,seed,train_acc,test_acc,improvement_abs,improvement_rel\n{},{},{},{},{},{},{}\n",
        r.run_id,
        r.config.variant,
        r.config.seed,
        r.train_eval.accuracy,
        r.test_eval.accuracy,
        opt(imp.map(|i| i.0)),
        opt(imp.map(|i| i.1)),
    )
}

pub fn confusion_csv(report: &EvalReport) -> String {
    let mut s = String::from("true_class");
    for c in 0..NUM_CLASSES {
        let _ = write!(s, ",pred_{c}");
    }
    s.push_str(",class_accuracy\n");
    for (t, row) in report.confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(s, "{t},{},{}", cells.join(","), report.per_class_accuracy[t]);
    }
    s
}

fn timing_csv(r: &RunRecord) -> String {
    let mut s = String::from("layer,seconds,peak_rss_kb\n");
    for (l, c) in r.costs.iter().enumerate() {
        let rss = c.peak_rss_kb.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{:.3},{rss}", l + 1, c.seconds);
    }
    s
}

pub fn write_run(r: &RunRecord) -> Result<()> {
    fs::create_dir_all(&r.run_dir).map_err(|e| LabError::io(r.run_dir.display(), e))?;
    let d = &r.run_dir;
    write_file(&d.join("config.txt"), &r.config.to_text())?;
    write_file(&d.join("metrics.csv"), &metrics_csv(r))?;
    write_file(&d.join("gamma.csv"), &gamma_csv(r))?;
    write_file(&d.join("summary.csv"), &summary_csv(r))?;
    write_file(&d.join("confusion.csv"), &confusion_csv(&r.test_eval))?;
    write_file(&d.join("timing.csv"), &timing_csv(r))?;
    model::save(&r.network, &d.join("model.txt"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedResult {
    pub variant: Variant,
    pub seed: u64,
    pub train_acc: f64,
    pub test_acc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariantSummary {
    pub variant: Variant,
    pub runs: usize,
    pub mean_train: f64,
    pub mean_test: f64,
    /// Sample standard deviation of test accuracy; 0 with a single seed.
    pub sd_test: f64,
    pub improvement_abs: f64,
    pub improvement_rel: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairStat {
    pub a: Variant,
    pub b: Variant,
    pub mean_difference: f64,
    /// Paired t and Cohen's d on test accuracy, or why they are undefined.
    pub outcome: std::result::Result<StatReport, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub results: Vec<SeedResult>,
    pub summaries: Vec<VariantSummary>,
    pub pairs: Vec<PairStat>,
}

impl Comparison {
    pub fn test_accuracies(&self, v: Variant) -> Vec<f64> {
        self.results.iter().filter(|r| r.variant == v).map(|r| r.test_acc).collect()
    }

    pub fn summary(&self, v: Variant) -> Option<&VariantSummary> {
        self.summaries.iter().find(|s| s.variant == v)
    }

    pub fn pair(&self, a: Variant, b: Variant) -> Option<&PairStat> {
        self.pairs.iter().find(|p| p.a == a && p.b == b)
    }
}

/// Paired comparison of two per-seed accuracy lists; degenerate inputs are
/// reported, not raised.
pub fn pair_stat(a: Variant, xs: &[f64], b: Variant, ys: &[f64]) -> PairStat {
    let n = xs.len().min(ys.len());
    let mean_difference = if n == 0 {
        0.0
    } else {
        xs.iter().zip(ys).map(|(x, y)| x - y).sum::<f64>() / n as f64
    };
    PairStat {
        a,
        b,
        mean_difference,
        outcome: compare_samples(xs, ys).map_err(|e| e.to_string()),
    }
}

/// Summaries and pairwise statistics for already collected seed results.
pub fn summarize(results: Vec<SeedResult>) -> Comparison {
    let acc = |v: Variant, test: bool| -> Vec<f64> {
        results
            .iter()
            .filter(|r| r.variant == v)
            .map(|r| if test { r.test_acc } else { r.train_acc })
            .collect()
    };
    let base = acc(Variant::Baseline, true);
    let base_mean = if base.is_empty() { f64::NAN } else { mean(&base) };
    let mut summaries = Vec::new();
    for v in Variant::ALL {
        let test = acc(v, true);
        if test.is_empty() {
            continue;
        }
        let m = mean(&test);
        let (improvement_abs, improvement_rel) = if base.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            improvement(m, base_mean)
        };
        summaries.push(VariantSummary {
            variant: v,
            runs: test.len(),
            mean_train: mean(&acc(v, false)),
            mean_test: m,
            sd_test: if test.len() > 1 { sample_variance(&test).sqrt() } else { 0.0 },
            improvement_abs,
            improvement_rel,
        });
    }
    let mut pairs = Vec::new();
    for (a, b) in [
        (Variant::Fixed, Variant::Baseline),
        (Variant::Adaptive, Variant::Baseline),
        (Variant::Adaptive, Variant::Fixed),
    ] {
        let (xs, ys) = (acc(a, true), acc(b, true));
        if !xs.is_empty() && !ys.is_empty() {
            pairs.push(pair_stat(a, &xs, b, &ys));
        }
    }
    Comparison {
        results,
        summaries,
        pairs,
    }
}

/// Runs every variant for every seed on the same data and writes the
/// comparison tables next to the per-run directories.
pub fn compare_variants(base: &ExperimentConfig, seeds: &[u64]) -> Result<Comparison> {
    base.validate()?;
    if seeds.is_empty() {
        return Err(LabError::Config("compare needs at least one seed".into()));
    }
    let data = load_data(base)?;
    let mut results = Vec::new();
    for &seed in seeds {
        for variant in Variant::ALL {
            let cfg = ExperimentConfig {
                seed,
                variant,
                ..base.clone()
            };
            let r = run_with_data(&cfg, &data)?;
            results.push(SeedResult {
                variant,
                seed,
                train_acc: r.train_eval.accuracy,
                test_acc: r.test_eval.accuracy,
            });
        }
    }
    let cmp = summarize(results);
    write_comparison(&cmp, &base.out_dir)?;
    Ok(cmp)
}

pub fn comparison_tables(cmp: &Comparison) -> [(&'static str, String); 3] {
    let mut runs = String::from("variant,seed,train_acc,test_acc\n");
    for r in &cmp.results {
        let _ = writeln!(runs, "{},{},{},{}", r.variant, r.seed, r.train_acc, r.test_acc);
    }
    let mut summary =
        String::from("variant,runs,mean_train_acc,mean_test_acc,sd_test_acc,improvement_abs,improvement_rel\n");
    for s in &cmp.summaries {
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{},{}",
            s.variant, s.runs, s.mean_train, s.mean_test, s.sd_test, s.improvement_abs, s.improvement_rel
        );
    }
    let mut stats = String::from("a,b,mean_difference,t_statistic,df,cohens_d,status\n");
    for p in &cmp.pairs {
        match &p.outcome {
            Ok(r) => {
                let _ = writeln!(
                    stats,
                    "{},{},{},{},{},{},ok",
                    p.a, p.b, p.mean_difference, r.t_statistic, r.degrees_of_freedom, r.cohens_d
                );
            }
            Err(e) => {
                let _ = writeln!(stats, "{},{},{},,,,{}", p.a, p.b, p.mean_difference, e.replace(',', ";"));
            }
        }
    }
    [
        ("compare_runs.csv", runs),
        ("compare_summary.csv", summary),
        ("compare_stats.csv", stats),
    ]
}

pub fn write_comparison(cmp: &Comparison, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir.display(), e))?;
    for (name, text) in comparison_tables(cmp) {
        write_file(&dir.join(name), &text)?;
    }
    Ok(())
}
