//! Plain-text network snapshots. Floats are written with Rust's shortest
//! round-trip formatting, so a saved network reloads bit-for-bit.

use std::fmt::Write as _;
use std::path::Path;

use cff_core::collab::{CollabParams, NetworkState};
use cff_core::ff::{DenseLayer, GoodnessConfig};
use cff_core::Matrix;

use crate::{LabError, Result};

const HEADER: &str = "cff-network v1";

fn join(xs: &[f64]) -> String {
    xs.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

pub fn to_text(net: &NetworkState) -> String {
    let mut s = String::new();
    let mut widths = vec![net.input_dim()];
    widths.extend(net.layers.iter().map(|l| l.output_dim()));
    let w: Vec<String> = widths.iter().map(|w| w.to_string()).collect();
    let _ = writeln!(s, "{HEADER}");
    let _ = writeln!(s, "widths {}", w.join(" "));
    let _ = writeln!(s, "theta {:?}", net.goodness.theta);
    let _ = writeln!(s, "normalize-input {}", net.normalize_input);
    let _ = writeln!(s, "learnable {}", net.collab.learnable());
    let _ = writeln!(s, "gamma-lr {:?}", net.collab.gamma_lr());
    let _ = writeln!(s, "gamma {}", join(net.collab.gamma()));
    let _ = writeln!(s, "alpha {}", join(net.collab.alpha().as_slice()));
    for layer in &net.layers {
        let _ = writeln!(s, "bias {}", join(layer.bias()));
        for row in layer.weights().row_iter() {
            let _ = writeln!(s, "w {}", join(row));
        }
    }
    s
}

fn bad(msg: impl Into<String>) -> LabError {
    LabError::Data(format!("model file: {}", msg.into()))
}

fn floats(rest: &str) -> Result<Vec<f64>> {
    rest.split_whitespace()
        .map(|t| t.parse().map_err(|_| bad(format!("bad number `{t}`"))))
        .collect()
}

pub fn from_text(text: &str) -> Result<NetworkState> {
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(bad("missing header"));
    }
    let mut field = |name: &str| -> Result<String> {
        let line = lines.next().ok_or_else(|| bad(format!("missing `{name}`")))?;
        line.strip_prefix(name)
            .map(|r| r.trim().to_string())
            .ok_or_else(|| bad(format!("expected `{name}`, found `{line}`")))
    };
    let widths: Vec<usize> = field("widths")?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad("bad width")))
        .collect::<Result<_>>()?;
    let theta = floats(&field("theta")?)?.first().copied().ok_or_else(|| bad("theta"))?;
    let normalize_input = field("normalize-input")? == "true";
    let learnable = field("learnable")? == "true";
    let gamma_lr = floats(&field("gamma-lr")?)?.first().copied().ok_or_else(|| bad("gamma-lr"))?;
    let gamma = floats(&field("gamma")?)?;
    let depth = widths.len().saturating_sub(1);
    let alpha = Matrix::from_vec(depth, depth, floats(&field("alpha")?)?)?;
    let mut layers = Vec::with_capacity(depth);
    for w in widths.windows(2) {
        let bias = floats(&field("bias")?)?;
        let mut data = Vec::with_capacity(w[0] * w[1]);
        for _ in 0..w[1] {
            data.extend(floats(&field("w")?)?);
        }
        layers.push(DenseLayer::from_params(Matrix::from_vec(w[1], w[0], data)?, bias)?);
    }
    let collab = CollabParams::new(gamma, alpha, learnable, gamma_lr)?;
    Ok(NetworkState::new(layers, collab, GoodnessConfig { theta })?.with_input_normalization(normalize_input))
}

pub fn save(net: &NetworkState, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(net)).map_err(|e| LabError::io(path.display(), e))
}

pub fn load(path: &Path) -> Result<NetworkState> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path.display(), e))?;
    from_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cff_core::collab::Variant;
    use cff_core::verify::tiny_network;
    use cff_core::Rng;

    #[test]
    fn reloads_bit_identically() {
        let mut net = tiny_network(&[12, 5, 3], Variant::Adaptive, &mut Rng::new(4)).unwrap();
        net.collab.update_gamma(1, 0.123_456_789).unwrap();
        net.normalize_input = true;
        let back = from_text(&to_text(&net)).unwrap();
        assert!(back.normalize_input);
        // Adam moments are not persisted
        assert_eq!(back.collab, net.collab);
        for (a, b) in back.layers.iter().zip(&net.layers) {
            assert_eq!(a.weights(), b.weights());
            assert_eq!(a.bias(), b.bias());
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let net = tiny_network(&[12, 5], Variant::Fixed, &mut Rng::new(1)).unwrap();
        let text = to_text(&net);
        let cut = &text[..text.len() / 2];
        assert!(from_text(cut).is_err());
        assert!(from_text("hello").is_err());
    }
}
