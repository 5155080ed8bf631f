//! Label-scan prediction and accuracy reports.

use alloc::vec::Vec;

use crate::collab::NetworkState;
use crate::data::{embed_label_in_place, Dataset};
use crate::error::{contract, Error, Result};
use crate::math::Matrix;
use crate::NUM_CLASSES;

const EVAL_CHUNK: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalOptions {
    /// Whether the first layer's goodness counts toward the label score.
    pub include_first_layer: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            include_first_layer: true,
        }
    }
}

/// Index of the largest score; ties go to the lowest class.
pub fn argmax_label(scores: &[f64; NUM_CLASSES]) -> u8 {
    let mut best = 0;
    for c in 1..NUM_CLASSES {
        if scores[c] > scores[best] {
            best = c;
        }
    }
    best as u8
}

fn check_input(net: &NetworkState, cols: usize) -> Result<()> {
    if cols != net.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "predict",
            left: (1, cols),
            right: net.layers[0].weights().shape(),
        });
    }
    Ok(())
}

/// Accumulated goodness of every candidate label for every row of `images`.
pub fn label_scores_batch(
    net: &NetworkState,
    images: &Matrix,
    opts: &EvalOptions,
) -> Result<Vec<[f64; NUM_CLASSES]>> {
    check_input(net, images.cols())?;
    let first = usize::from(!opts.include_first_layer);
    let mut scores = Vec::with_capacity(images.rows());
    let rows: Vec<usize> = (0..images.rows()).collect();
    for chunk in rows.chunks(EVAL_CHUNK) {
        let base = images.select_rows(chunk)?;
        let mut chunk_scores = alloc::vec![[0.0; NUM_CLASSES]; chunk.len()];
        for c in 0..NUM_CLASSES {
            let mut x = base.clone();
            for i in 0..x.rows() {
                embed_label_in_place(x.row_mut(i), c as u8)?;
            }
            let trace = net.forward_all(&net.prepare_input(x)?)?;
            for (i, s) in chunk_scores.iter_mut().enumerate() {
                s[c] = trace.goodness[first..].iter().map(|g| g[i]).sum();
            }
        }
        scores.extend(chunk_scores);
    }
    Ok(scores)
}

pub fn label_scores(net: &NetworkState, x: &[f64], opts: &EvalOptions) -> Result<[f64; NUM_CLASSES]> {
    let m = Matrix::from_vec(1, x.len(), x.to_vec())?;
    Ok(label_scores_batch(net, &m, opts)?[0])
}

/// Label whose embedding gives the largest goodness summed over layers.
pub fn predict(net: &NetworkState, x: &[f64]) -> Result<u8> {
    predict_with(net, x, &EvalOptions::default())
}

pub fn predict_with(net: &NetworkState, x: &[f64], opts: &EvalOptions) -> Result<u8> {
    Ok(argmax_label(&label_scores(net, x, opts)?))
}

pub fn predict_batch(net: &NetworkState, images: &Matrix, opts: &EvalOptions) -> Result<Vec<u8>> {
    Ok(label_scores_batch(net, images, opts)?
        .iter()
        .map(argmax_label)
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Recall per true class; 0 for classes absent from the data.
    pub per_class_accuracy: [f64; NUM_CLASSES],
    /// `confusion[true][predicted]`.
    pub confusion: [[u64; NUM_CLASSES]; NUM_CLASSES],
    pub total: u64,
}

impl EvalReport {
    pub fn from_predictions(labels: &[u8], predicted: &[u8]) -> Result<Self> {
        if labels.is_empty() {
            return Err(contract!("cannot evaluate on an empty dataset"));
        }
        if labels.len() != predicted.len() {
            return Err(contract!("{} labels, {} predictions", labels.len(), predicted.len()));
        }
        let mut confusion = [[0u64; NUM_CLASSES]; NUM_CLASSES];
        for (&t, &p) in labels.iter().zip(predicted) {
            confusion[t as usize][p as usize] += 1;
        }
        let total = labels.len() as u64;
        let correct: u64 = (0..NUM_CLASSES).map(|c| confusion[c][c]).sum();
        let mut per_class_accuracy = [0.0; NUM_CLASSES];
        for c in 0..NUM_CLASSES {
            let n: u64 = confusion[c].iter().sum();
            if n > 0 {
                per_class_accuracy[c] = confusion[c][c] as f64 / n as f64;
            }
        }
        Ok(EvalReport {
            accuracy: correct as f64 / total as f64,
            per_class_accuracy,
            confusion,
            total,
        })
    }
}

pub fn evaluate(net: &NetworkState, ds: &Dataset) -> Result<EvalReport> {
    evaluate_with(net, ds, &EvalOptions::default())
}

pub fn evaluate_with(net: &NetworkState, ds: &Dataset, opts: &EvalOptions) -> Result<EvalReport> {
    if ds.is_empty() {
        return Err(contract!("cannot evaluate on an empty dataset"));
    }
    let predicted = predict_batch(net, ds.images(), opts)?;
    EvalReport::from_predictions(ds.labels(), &predicted)
}
