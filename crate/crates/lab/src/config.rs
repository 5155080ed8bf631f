//! Experiment configuration: a flat `key = value` file, overridden by flags.
//!
//! Keys use the flag spelling without the leading dashes (`epochs-per-layer`);
//! underscores are accepted in place of hyphens. `#` starts a comment.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cff_core::collab::{AlphaMode, Variant};

use crate::{LabError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    /// Leading samples of the train file used for training; the rest is held out.
    pub train_split: usize,
    pub variant: Variant,
    /// Input dimension followed by the hidden layer widths.
    pub widths: Vec<usize>,
    pub epochs_per_layer: usize,
    /// 0 trains on the whole split every step.
    pub batch_size: usize,
    pub lr: f64,
    pub gamma_lr: f64,
    pub gamma_init: f64,
    pub theta: f64,
    pub alpha_mode: AlphaMode,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Accuracy-progress sampling period in epochs; 0 disables it.
    pub eval_every: usize,
    /// Samples of each split used for progress accuracy (final reports use all).
    pub progress_samples: usize,
    /// Leave layer 1 out of the label score.
    pub skip_first_layer: bool,
    /// Row-normalize the embedded input before layer 1 as well.
    pub normalize_input: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let dir = Path::new("data/mnist");
        ExperimentConfig {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
            train_split: 50_000,
            variant: Variant::Baseline,
            widths: vec![784, 500, 500],
            epochs_per_layer: 1000,
            batch_size: 0,
            lr: 0.03,
            gamma_lr: 0.01,
            gamma_init: 1.0,
            theta: 2.0,
            alpha_mode: AlphaMode::Ones,
            seed: 1,
            out_dir: PathBuf::from("runs"),
            eval_every: 10,
            progress_samples: 1000,
            skip_first_layer: false,
            normalize_input: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| LabError::Config(format!("{key}: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(LabError::Config(format!("{key}: expected true or false, got `{value}`"))),
    }
}

pub fn parse_widths(value: &str) -> Result<Vec<usize>> {
    value
        .split([',', '/'])
        .map(|w| parse_num("widths", w.trim()))
        .collect()
}

impl ExperimentConfig {
    /// Sets one field from its textual key and value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        match key.as_str() {
            "train-images" => self.train_images = value.into(),
            "train-labels" => self.train_labels = value.into(),
            "test-images" => self.test_images = value.into(),
            "test-labels" => self.test_labels = value.into(),
            "train-split" => self.train_split = parse_num(&key, value)?,
            "variant" => {
                self.variant = value
                    .parse()
                    .map_err(|e: cff_core::Error| LabError::Config(format!("variant: {e}")))?
            }
            "widths" => self.widths = parse_widths(value)?,
            "epochs-per-layer" => self.epochs_per_layer = parse_num(&key, value)?,
            "batch-size" => self.batch_size = parse_num(&key, value)?,
            "lr" => self.lr = parse_num(&key, value)?,
            "gamma-lr" => self.gamma_lr = parse_num(&key, value)?,
            "gamma-init" => self.gamma_init = parse_num(&key, value)?,
            "theta" => self.theta = parse_num(&key, value)?,
            "alpha-mode" => {
                self.alpha_mode = value
                    .parse()
                    .map_err(|e: cff_core::Error| LabError::Config(format!("alpha-mode: {e}")))?
            }
            "seed" => self.seed = parse_num(&key, value)?,
            "out-dir" => self.out_dir = value.into(),
            "eval-every" => self.eval_every = parse_num(&key, value)?,
            "progress-samples" => self.progress_samples = parse_num(&key, value)?,
            "skip-first-layer" => self.skip_first_layer = parse_bool(&key, value)?,
            "normalize-input" => self.normalize_input = parse_bool(&key, value)?,
            other => return Err(LabError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| LabError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)
                .map_err(|e| LabError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path.display(), e))?;
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Config(m));
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return bad(format!("widths {:?}: need input size plus at least one nonzero layer", self.widths));
        }
        if self.train_split == 0 {
            return bad("train-split must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.gamma_lr >= 0.0 && self.gamma_lr.is_finite()) {
            return bad(format!("gamma-lr must be non-negative, got {}", self.gamma_lr));
        }
        if !self.gamma_init.is_finite() || !self.theta.is_finite() {
            return bad("gamma-init and theta must be finite".into());
        }
        Ok(())
    }

    /// Round-trippable `key = value` snapshot of every field.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let widths: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        let lines = [
            ("train-images", self.train_images.display().to_string()),
            ("train-labels", self.train_labels.display().to_string()),
            ("test-images", self.test_images.display().to_string()),
            ("test-labels", self.test_labels.display().to_string()),
            ("train-split", self.train_split.to_string()),
            ("variant", self.variant.to_string()),
            ("widths", widths.join(",")),
            ("epochs-per-layer", self.epochs_per_layer.to_string()),
            ("batch-size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("gamma-lr", self.gamma_lr.to_string()),
            ("gamma-init", self.gamma_init.to_string()),
            ("theta", self.theta.to_string()),
            ("alpha-mode", self.alpha_mode.name().to_string()),
            ("seed", self.seed.to_string()),
            ("out-dir", self.out_dir.display().to_string()),
            ("eval-every", self.eval_every.to_string()),
            ("progress-samples", self.progress_samples.to_string()),
            ("skip-first-layer", self.skip_first_layer.to_string()),
            ("normalize-input", self.normalize_input.to_string()),
        ];
        for (k, v) in lines {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn run_id(&self) -> String {
        format!("{}-s{}", self.variant, self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_setup() {
        let c = ExperimentConfig::default();
        assert_eq!(c.widths, vec![784, 500, 500]);
        assert_eq!(c.epochs_per_layer, 1000);
        assert_eq!((c.lr, c.gamma_lr, c.gamma_init, c.theta), (0.03, 0.01, 1.0, 2.0));
        assert_eq!(c.train_split, 50_000);
        assert_eq!(c.batch_size, 0);
        c.validate().unwrap();
    }

    #[test]
    fn snapshot_round_trips() {
        let mut c = ExperimentConfig::default();
        c.apply_text("variant = acff\nwidths = 784/200/200 # comment\nbatch_size=512\nlr = 0.001\n")
            .unwrap();
        assert_eq!(c.variant, Variant::Adaptive);
        assert_eq!(c.widths, vec![784, 200, 200]);
        let mut back = ExperimentConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn errors_name_the_field() {
        let mut c = ExperimentConfig::default();
        let e = c.apply_text("lr = fast").unwrap_err();
        assert!(e.to_string().contains("lr"), "{e}");
        assert!(c.set("colour", "blue").is_err());
        assert!(c.set("variant", "bp").is_err());
        c.lr = -1.0;
        let e = c.validate().unwrap_err();
        assert!(e.to_string().contains("lr") && e.exit_code() == 1);
    }
}
