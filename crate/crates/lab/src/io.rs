//! IDX files on disk.

use std::fs;
use std::path::Path;

use cff_core::data::{parse_idx_images, parse_idx_labels, Dataset};
use cff_core::Matrix;

use crate::{LabError, Result};

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| LabError::io(path.display(), e))
}

fn data_err(path: &Path, e: cff_core::Error) -> LabError {
    LabError::Data(format!("{}: {e}", path.display()))
}

pub fn load_idx_images(path: &Path) -> Result<Matrix> {
    parse_idx_images(&read(path)?).map_err(|e| data_err(path, e))
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    parse_idx_labels(&read(path)?).map_err(|e| data_err(path, e))
}

/// Loads an image file and its label file, checking that the counts agree.
pub fn load_dataset(images: &Path, labels: &Path) -> Result<Dataset> {
    let x = load_idx_images(images)?;
    let y = load_idx_labels(labels)?;
    if x.rows() != y.len() {
        return Err(LabError::Data(format!(
            "{} holds {} images but {} holds {} labels",
            images.display(),
            x.rows(),
            labels.display(),
            y.len()
        )));
    }
    Dataset::new(x, y).map_err(|e| data_err(images, e))
}
