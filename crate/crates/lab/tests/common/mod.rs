#![allow(dead_code)]

use std::path::{Path, PathBuf};

use cff_core::Rng;
use cff_lab::ExperimentConfig;

fn write_idx(path: &Path, magic: u32, dims: &[u32], payload: &[u8]) {
    let mut bytes = magic.to_be_bytes().to_vec();
    for d in dims {
        bytes.extend_from_slice(&d.to_be_bytes());
    }
    bytes.extend_from_slice(payload);
    std::fs::write(path, bytes).unwrap();
}

/// 28×28 images where class `c` lights a band of rows, plus noise.
fn synthetic(n: usize, rng: &mut Rng) -> (Vec<u8>, Vec<u8>) {
    let mut images = Vec::with_capacity(n * 784);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let c = rng.below(10);
        labels.push(c as u8);
        for r in 0..28 {
            for _ in 0..28 {
                let lit = r >= 2 + 2 * c && r < 5 + 2 * c;
                let base = if lit { 200.0 } else { 10.0 };
                images.push((base + 50.0 * rng.next_f64()) as u8);
            }
        }
    }
    (images, labels)
}

/// Writes a synthetic train/test pair in IDX format and returns a config
/// pointing at it.
pub fn synthetic_config(dir: &Path, n_train: usize, n_test: usize) -> ExperimentConfig {
    let mut rng = Rng::new(77);
    let paths: Vec<PathBuf> = ["train-images", "train-labels", "test-images", "test-labels"]
        .iter()
        .map(|n| dir.join(n))
        .collect();
    for (k, n) in [n_train, n_test].into_iter().enumerate() {
        let (images, labels) = synthetic(n, &mut rng);
        write_idx(&paths[2 * k], 0x0803, &[n as u32, 28, 28], &images);
        write_idx(&paths[2 * k + 1], 0x0801, &[n as u32], &labels);
    }
    ExperimentConfig {
        train_images: paths[0].clone(),
        train_labels: paths[1].clone(),
        test_images: paths[2].clone(),
        test_labels: paths[3].clone(),
        train_split: n_train,
        widths: vec![784, 20, 20],
        epochs_per_layer: 5,
        batch_size: 0,
        eval_every: 2,
        progress_samples: 100,
        out_dir: dir.join("runs"),
        ..ExperimentConfig::default()
    }
}
