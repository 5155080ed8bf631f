//! Datasets, IDX decoding and label-embedded positive/negative batches.
//!
//! The IDX decoders work on in-memory bytes; reading files is left to the
//! caller.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{contract, Error, Result};
use crate::math::{Matrix, Rng};
use crate::NUM_CLASSES;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Images with one class id per row. Pixels lie in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: Matrix,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(images: Matrix, labels: Vec<u8>) -> Result<Self> {
        if images.rows() != labels.len() {
            return Err(contract!(
                "{} images but {} labels",
                images.rows(),
                labels.len()
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(contract!("label {bad} outside 0..{NUM_CLASSES}"));
        }
        if let Some(pos) = images.as_slice().iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(contract!(
                "pixel {} of image {} outside [0, 1]",
                pos % images.cols().max(1),
                pos / images.cols().max(1)
            ));
        }
        Ok(Dataset { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.images.cols()
    }

    pub fn images(&self) -> &Matrix {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// The first `n` samples (or all of them when `n` exceeds the length).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let idx: Vec<usize> = (0..n).collect();
        self.select(&idx).expect("indices in range")
    }

    /// Samples `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Dataset> {
        if start > end || end > self.len() {
            return Err(contract!("range {start}..{end} outside {} samples", self.len()));
        }
        let idx: Vec<usize> = (start..end).collect();
        self.select(&idx)
    }

    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        Ok(Dataset {
            images: self.images.select_rows(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        })
    }
}

fn read_be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| {
            Error::Format(format!(
                "header truncated: need {} bytes, file has {}",
                offset + 4,
                bytes.len()
            ))
        })
}

fn check_magic(bytes: &[u8], expected: u32, kind: &str) -> Result<()> {
    let magic = read_be_u32(bytes, 0)?;
    if magic != expected {
        return Err(Error::Format(format!(
            "{kind} file has magic 0x{magic:08X}, expected 0x{expected:08X}"
        )));
    }
    Ok(())
}

fn check_payload(bytes: &[u8], header: usize, payload: usize) -> Result<()> {
    let expected = header + payload;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "payload size mismatch: expected {expected} bytes, found {}",
            bytes.len()
        )));
    }
    Ok(())
}

/// Decodes an IDX image file (`0x00000803`, count, rows, cols, then one byte
/// per pixel) into an `N × (rows·cols)` matrix scaled by `1/255`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Matrix> {
    check_magic(bytes, IDX_IMAGES_MAGIC, "image")?;
    let n = read_be_u32(bytes, 4)? as usize;
    let h = read_be_u32(bytes, 8)? as usize;
    let w = read_be_u32(bytes, 12)? as usize;
    let dim = h
        .checked_mul(w)
        .ok_or_else(|| Error::Format(format!("image dimensions {h}x{w} overflow")))?;
    let payload = n
        .checked_mul(dim)
        .ok_or_else(|| Error::Format(format!("{n} images of {dim} pixels overflow")))?;
    check_payload(bytes, 16, payload)?;
    let data = bytes[16..].iter().map(|&b| b as f64 / 255.0).collect();
    Matrix::from_vec(n, dim, data)
}

/// Decodes an IDX label file (`0x00000801`, count, then one byte per label).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, IDX_LABELS_MAGIC, "label")?;
    let n = read_be_u32(bytes, 4)? as usize;
    check_payload(bytes, 8, n)?;
    let labels = &bytes[8..];
    if let Some(i) = labels.iter().position(|&l| l as usize >= NUM_CLASSES) {
        return Err(Error::Format(format!(
            "label {} at index {i} outside 0..{NUM_CLASSES}",
            labels[i]
        )));
    }
    Ok(labels.to_vec())
}

/// Overwrites the first ten components with the one-hot code of `class`.
pub fn embed_label_in_place(x: &mut [f64], class: u8) -> Result<()> {
    if class as usize >= NUM_CLASSES {
        return Err(contract!("class {class} outside 0..{NUM_CLASSES}"));
    }
    if x.len() < NUM_CLASSES {
        return Err(contract!(
            "input of length {} cannot carry a {NUM_CLASSES}-way label",
            x.len()
        ));
    }
    for (k, v) in x[..NUM_CLASSES].iter_mut().enumerate() {
        *v = if k == class as usize { 1.0 } else { 0.0 };
    }
    Ok(())
}

pub fn embed_label(x: &[f64], class: u8) -> Result<Vec<f64>> {
    let mut out = x.to_vec();
    embed_label_in_place(&mut out, class)?;
    Ok(out)
}

/// Embeds `labels[i]` into row `i` of a copy of `images`.
pub fn embed_labels(images: &Matrix, labels: &[u8]) -> Result<Matrix> {
    if images.rows() != labels.len() {
        return Err(contract!(
            "{} rows but {} labels",
            images.rows(),
            labels.len()
        ));
    }
    let mut out = images.clone();
    for (i, &c) in labels.iter().enumerate() {
        embed_label_in_place(out.row_mut(i), c)?;
    }
    Ok(out)
}

/// Draws a class uniformly from the nine classes other than `true_class`.
pub fn random_wrong_label(true_class: u8, rng: &mut Rng) -> u8 {
    let r = rng.below(NUM_CLASSES - 1) as u8;
    if r >= true_class {
        r + 1
    } else {
        r
    }
}

/// Paired inputs for one training step: the same images carrying the true
/// class (positive) and a random wrong class (negative).
#[derive(Clone, Debug, PartialEq)]
pub struct PosNegBatch {
    pub x_pos: Matrix,
    pub x_neg: Matrix,
    pub true_labels: Vec<u8>,
    pub neg_labels: Vec<u8>,
}

impl PosNegBatch {
    pub fn len(&self) -> usize {
        self.true_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_labels.is_empty()
    }
}

pub fn make_pos_neg_batch(ds: &Dataset, indices: &[usize], rng: &mut Rng) -> Result<PosNegBatch> {
    if indices.is_empty() {
        return Err(contract!("cannot build a batch from zero samples"));
    }
    let base = ds.images.select_rows(indices)?;
    let true_labels: Vec<u8> = indices.iter().map(|&i| ds.labels[i]).collect();
    let neg_labels: Vec<u8> = true_labels
        .iter()
        .map(|&c| random_wrong_label(c, rng))
        .collect();
    Ok(PosNegBatch {
        x_pos: embed_labels(&base, &true_labels)?,
        x_neg: embed_labels(&base, &neg_labels)?,
        true_labels,
        neg_labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;
    use crate::math::Rng;

    fn idx_images(n: u32, h: u32, w: u32, payload: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        for v in [IDX_IMAGES_MAGIC, n, h, w] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out.extend_from_slice(payload);
        out
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        out.extend_from_slice(labels);
        out
    }

    #[test]
    fn decodes_handcrafted_images() {
        let bytes = idx_images(2, 2, 2, &[0, 255, 128, 0, 255, 0, 0, 128]);
        let m = parse_idx_images(&bytes).unwrap();
        assert_eq!(m.shape(), (2, 4));
        assert_eq!(m.row(0), &[0.0, 1.0, 128.0 / 255.0, 0.0]);
        assert_eq!(m.row(1), &[1.0, 0.0, 0.0, 128.0 / 255.0]);
    }

    #[test]
    fn image_loader_rejects_label_magic() {
        let mut bytes = idx_images(1, 1, 1, &[0]);
        bytes[3] = 0x01;
        let err = parse_idx_images(&bytes).unwrap_err();
        assert!(matches!(&err, Error::Format(m) if m.contains("0x00000801")), "{err}");
    }

    #[test]
    fn truncated_images_report_sizes() {
        let bytes = idx_images(2, 2, 2, &[0; 7]);
        let err = parse_idx_images(&bytes).unwrap_err();
        assert!(matches!(&err, Error::Format(m) if m.contains("24") && m.contains("23")), "{err}");
    }

    #[test]
    fn decodes_handcrafted_labels() {
        assert_eq!(parse_idx_labels(&idx_labels(&[7, 1])).unwrap(), vec![7, 1]);
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let err = parse_idx_labels(&idx_labels(&[3, 11])).unwrap_err();
        assert!(matches!(&err, Error::Format(m) if m.contains("11")));
    }

    #[test]
    fn truncated_labels_are_rejected() {
        let mut bytes = idx_labels(&[1, 2, 3]);
        bytes.pop();
        assert!(parse_idx_labels(&bytes).is_err());
        assert!(parse_idx_labels(&bytes[..6]).is_err());
    }

    #[test]
    fn dataset_rejects_count_mismatch() {
        let images = parse_idx_images(&idx_images(2, 2, 2, &[0; 8])).unwrap();
        assert!(Dataset::new(images.clone(), vec![1]).is_err());
        assert!(Dataset::new(images, vec![1, 2]).is_ok());
    }

    #[test]
    fn embed_on_zero_background() {
        let x = embed_label(&[0.0; 784], 3).unwrap();
        for (i, v) in x.iter().enumerate() {
            assert_eq!(*v, if i == 3 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn embed_overwrites() {
        let x = embed_label(&[0.5; 20], 0).unwrap();
        let y = embed_label(&x, 5).unwrap();
        assert_eq!(y[0], 0.0);
        assert_eq!(y[5], 1.0);
        assert!(embed_label(&x, 10).is_err());
        assert!(embed_label(&[0.0; 9], 1).is_err());
    }

    #[test]
    fn single_sample_of_class_nine() {
        let ds = Dataset::new(Matrix::zeros(1, 16), vec![9]).unwrap();
        let mut rng = Rng::new(1);
        for _ in 0..50 {
            let b = make_pos_neg_batch(&ds, &[0], &mut rng).unwrap();
            assert!(b.neg_labels[0] < 9);
            assert_eq!(b.x_pos.get(0, 9), 1.0);
        }
        assert!(make_pos_neg_batch(&ds, &[], &mut rng).is_err());
        assert!(make_pos_neg_batch(&ds, &[1], &mut rng).is_err());
    }

    #[test]
    fn batches_are_reproducible() {
        let ds = Dataset::new(Matrix::zeros(20, 12), (0..20).map(|i| (i % 10) as u8).collect())
            .unwrap();
        let idx: Vec<usize> = (0..20).collect();
        let a = make_pos_neg_batch(&ds, &idx, &mut Rng::new(77)).unwrap();
        let b = make_pos_neg_batch(&ds, &idx, &mut Rng::new(77)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.x_pos.shape(), a.x_neg.shape());
    }

    #[test]
    fn wrong_labels_are_uniform() {
        let n = 10_000;
        let ds = Dataset::new(Matrix::zeros(n, 10), vec![0; n]).unwrap();
        let idx: Vec<usize> = (0..n).collect();
        let b = make_pos_neg_batch(&ds, &idx, &mut Rng::new(9)).unwrap();
        let mut counts = [0usize; 10];
        b.neg_labels.iter().for_each(|&c| counts[c as usize] += 1);
        assert_eq!(counts[0], 0);
        let expected = n as f64 / 9.0;
        for &c in &counts[1..] {
            assert!((c as f64 - expected).abs() <= 0.1 * expected, "{counts:?}");
        }
    }

    proptest! {
        #[test]
        fn embedding_touches_only_label_slots(
            x in proptest::collection::vec(0.0f64..1.0, 784),
            a in 0u8..10,
            b in 0u8..10,
        ) {
            let ea = embed_label(&x, a).unwrap();
            prop_assert_eq!(&ea[10..], &x[10..]);
            prop_assert_eq!(embed_label(&ea, b).unwrap(), embed_label(&x, b).unwrap());
        }

        #[test]
        fn batches_differ_from_source_only_in_label_slots(seed: u64, n in 1usize..20) {
            let mut rng = Rng::new(seed);
            let images = Matrix::from_fn(n, 30, |_, _| rng.next_f64());
            let labels: Vec<u8> = (0..n).map(|_| rng.below(10) as u8).collect();
            let ds = Dataset::new(images, labels).unwrap();
            let idx: Vec<usize> = (0..n).rev().collect();
            let b = make_pos_neg_batch(&ds, &idx, &mut rng).unwrap();
            for (r, &i) in idx.iter().enumerate() {
                prop_assert_ne!(b.true_labels[r], b.neg_labels[r]);
                prop_assert_eq!(&b.x_pos.row(r)[10..], &ds.images().row(i)[10..]);
                prop_assert_eq!(&b.x_neg.row(r)[10..], &ds.images().row(i)[10..]);
            }
        }

        #[test]
        fn corrupted_headers_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = parse_idx_images(&bytes);
            let _ = parse_idx_labels(&bytes);
        }

        #[test]
        fn corrupted_valid_header_is_rejected(pos in 0usize..16, flip in 1u8..=255) {
            let mut bytes = idx_images(2, 2, 2, &[0; 8]);
            bytes[pos] ^= flip;
            prop_assert!(parse_idx_images(&bytes).is_err());
        }
    }
}
