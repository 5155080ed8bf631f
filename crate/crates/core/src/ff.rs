//! Dense ReLU layers, goodness, the forward-forward loss and its layer-local
//! gradients, Adam, and the single-layer baseline trainer.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract, Error, Result};
use crate::math::{sigmoid, softplus, Matrix, Rng};

/// Default epsilon of the row normalization applied between layers.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoodnessConfig {
    /// Goodness threshold separating positive from negative data.
    pub theta: f64,
}

impl Default for GoodnessConfig {
    fn default() -> Self {
        GoodnessConfig { theta: 2.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.03,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(contract!("learning rate must be positive, got {}", self.lr));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(contract!("Adam betas must lie in (0, 1)"));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(contract!("Adam eps must be positive"));
        }
        Ok(())
    }
}

/// Goodness of the positive and negative member of one sample pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoodnessPair {
    pub pos: f64,
    pub neg: f64,
}

/// Fully connected ReLU layer with its Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    weights: Matrix,
    bias: Vec<f64>,
    m_w: Matrix,
    v_w: Matrix,
    m_b: Vec<f64>,
    v_b: Vec<f64>,
    steps: u64,
}

/// Pre-activations and ReLU activations of one layer for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerOutput {
    pub pre: Matrix,
    pub act: Matrix,
}

/// Batch-mean loss and gradients of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads {
    pub dw: Matrix,
    pub db: Vec<f64>,
    pub loss: f64,
}

impl DenseLayer {
    /// Weights uniform in `±1/√fan_in`, zero bias.
    pub fn random(input: usize, output: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / libm::sqrt(input.max(1) as f64);
        let weights = Matrix::from_fn(output, input, |_, _| rng.uniform(-bound, bound));
        Self::from_params(weights, vec![0.0; output]).expect("shapes agree")
    }

    pub fn from_params(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::ShapeMismatch {
                op: "DenseLayer::from_params",
                left: weights.shape(),
                right: (1, bias.len()),
            });
        }
        if !weights.is_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("layer parameters".into()));
        }
        let (o, i) = weights.shape();
        Ok(DenseLayer {
            weights,
            m_w: Matrix::zeros(o, i),
            v_w: Matrix::zeros(o, i),
            m_b: vec![0.0; o],
            v_b: vec![0.0; o],
            bias,
            steps: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Direct parameter access, used by finite-difference probes.
    pub fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Number of Adam steps applied.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// `pre = X·Wᵀ + b`, `act = max(0, pre)`.
    pub fn forward(&self, x: &Matrix) -> Result<LayerOutput> {
        if x.cols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                op: "layer_forward",
                left: x.shape(),
                right: self.weights.shape(),
            });
        }
        let mut pre = x.matmul_nt(&self.weights)?;
        pre.add_row_vector(&self.bias)?;
        let act = pre.map(|v| v.max(0.0));
        Ok(LayerOutput { pre, act })
    }
}

/// Per-row sum of squared activations.
pub fn goodness(act: &Matrix) -> Vec<f64> {
    act.row_iter().map(|r| r.iter().map(|a| a * a).sum()).collect()
}

/// Probability that a sample with goodness `g` is positive data.
pub fn goodness_probability(g: f64, cfg: &GoodnessConfig) -> f64 {
    sigmoid(g - cfg.theta)
}

/// `½[softplus(−(g⁺−θ)) + softplus(g⁻−θ)]`.
pub fn ff_loss(gp: GoodnessPair, cfg: &GoodnessConfig) -> f64 {
    0.5 * (softplus(-(gp.pos - cfg.theta)) + softplus(gp.neg - cfg.theta))
}

/// Derivatives of [`ff_loss`] with respect to the positive and negative goodness.
pub fn ff_loss_slopes(gp: GoodnessPair, cfg: &GoodnessConfig) -> (f64, f64) {
    (
        -0.5 * sigmoid(-(gp.pos - cfg.theta)),
        0.5 * sigmoid(gp.neg - cfg.theta),
    )
}

/// Loss and gradients of one layer for a batch of paired positive and
/// negative inputs.
///
/// `offset_pos[i]` / `offset_neg[i]` are added to the layer's goodness of
/// sample `i` before the loss is taken and are treated as constants; pass
/// zeros for the plain objective. Loss and gradients are batch means.
pub fn layer_loss_grads(
    layer: &DenseLayer,
    x_pos: &Matrix,
    x_neg: &Matrix,
    cfg: &GoodnessConfig,
    offset_pos: &[f64],
    offset_neg: &[f64],
) -> Result<LayerGrads> {
    let out_pos = layer.forward(x_pos)?;
    let out_neg = layer.forward(x_neg)?;
    grads_from_outputs(x_pos, &out_pos, x_neg, &out_neg, cfg, offset_pos, offset_neg)
}

/// [`layer_loss_grads`] on forward results the caller already holds.
pub fn grads_from_outputs(
    x_pos: &Matrix,
    out_pos: &LayerOutput,
    x_neg: &Matrix,
    out_neg: &LayerOutput,
    cfg: &GoodnessConfig,
    offset_pos: &[f64],
    offset_neg: &[f64],
) -> Result<LayerGrads> {
    let b = x_pos.rows();
    if x_neg.shape() != x_pos.shape() {
        return Err(Error::ShapeMismatch {
            op: "layer_loss_grads",
            left: x_pos.shape(),
            right: x_neg.shape(),
        });
    }
    if offset_pos.len() != b || offset_neg.len() != b {
        return Err(contract!(
            "offsets of length {}/{} for a batch of {b}",
            offset_pos.len(),
            offset_neg.len()
        ));
    }
    if b == 0 {
        return Err(contract!("empty batch"));
    }
    let g_pos = goodness(&out_pos.act);
    let g_neg = goodness(&out_neg.act);

    // ∂G/∂pre = 2·act (zero wherever the ReLU is off), scaled by the loss slope.
    let mut coef_pos = out_pos.act.clone();
    let mut coef_neg = out_neg.act.clone();
    let mut loss = 0.0;
    let inv_b = 1.0 / b as f64;
    for i in 0..b {
        let gp = GoodnessPair {
            pos: g_pos[i] + offset_pos[i],
            neg: g_neg[i] + offset_neg[i],
        };
        loss += ff_loss(gp, cfg);
        let (s_pos, s_neg) = ff_loss_slopes(gp, cfg);
        coef_pos.row_mut(i).iter_mut().for_each(|a| *a *= 2.0 * s_pos * inv_b);
        coef_neg.row_mut(i).iter_mut().for_each(|a| *a *= 2.0 * s_neg * inv_b);
    }
    let mut dw = coef_pos.matmul_tn(x_pos)?;
    let dw_neg = coef_neg.matmul_tn(x_neg)?;
    dw.as_mut_slice()
        .iter_mut()
        .zip(dw_neg.as_slice())
        .for_each(|(a, n)| *a += n);
    let mut db = vec![0.0; coef_pos.cols()];
    for m in [&coef_pos, &coef_neg] {
        for row in m.row_iter() {
            db.iter_mut().zip(row).for_each(|(d, c)| *d += c);
        }
    }
    Ok(LayerGrads {
        dw,
        db,
        loss: loss * inv_b,
    })
}

/// One bias-corrected Adam update. Non-finite gradients are rejected before
/// any state changes.
pub fn adam_step(layer: &mut DenseLayer, dw: &Matrix, db: &[f64], cfg: &AdamConfig) -> Result<()> {
    if dw.shape() != layer.weights.shape() || db.len() != layer.bias.len() {
        return Err(Error::ShapeMismatch {
            op: "adam_step",
            left: layer.weights.shape(),
            right: dw.shape(),
        });
    }
    if !dw.is_finite() || db.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient passed to adam_step".into()));
    }
    layer.steps += 1;
    let t = layer.steps as i32;
    let c1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let c2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    let update = |p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
        for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= cfg.lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
        }
    };
    update(
        layer.weights.as_mut_slice(),
        layer.m_w.as_mut_slice(),
        layer.v_w.as_mut_slice(),
        dw.as_slice(),
    );
    update(&mut layer.bias, &mut layer.m_b, &mut layer.v_b, db);
    if !layer.weights.is_finite() || layer.bias.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("layer parameters after adam_step".into()));
    }
    Ok(())
}

/// Everything one forward sweep over a stack of layers produces.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// Normalized inputs of layers `1..`; layer 0 reads the raw input.
    pub normalized: Vec<Matrix>,
    pub outputs: Vec<LayerOutput>,
    /// Goodness per layer, from un-normalized activations.
    pub goodness: Vec<Vec<f64>>,
}

impl ForwardTrace {
    /// Input that layer `l` received when the sweep started from `x`.
    pub fn layer_input<'a>(&'a self, x: &'a Matrix, l: usize) -> &'a Matrix {
        if l == 0 {
            x
        } else {
            &self.normalized[l - 1]
        }
    }

    pub fn depth(&self) -> usize {
        self.outputs.len()
    }
}

/// Runs `x` through the first `depth` layers. Layer `l > 0` sees the
/// row-normalized activations of layer `l − 1`.
pub fn forward_layers(layers: &[DenseLayer], x: &Matrix, depth: usize) -> Result<ForwardTrace> {
    if depth > layers.len() {
        return Err(contract!("depth {depth} exceeds {} layers", layers.len()));
    }
    let mut trace = ForwardTrace {
        normalized: Vec::with_capacity(depth.saturating_sub(1)),
        outputs: Vec::with_capacity(depth),
        goodness: Vec::with_capacity(depth),
    };
    for (l, layer) in layers[..depth].iter().enumerate() {
        let out = layer.forward(trace.layer_input(x, l))?;
        trace.goodness.push(goodness(&out.act));
        if l + 1 < depth {
            trace.normalized.push(out.act.row_l2_normalize(NORM_EPS)?);
        }
        trace.outputs.push(out);
    }
    Ok(trace)
}

/// Input that layer `l` receives for `x`, i.e. `x` pushed through the
/// trained layers before it.
pub fn propagate_to(layers: &[DenseLayer], x: &Matrix, l: usize) -> Result<Matrix> {
    if l == 0 {
        return Ok(x.clone());
    }
    let mut trace = forward_layers(layers, x, l)?;
    let last = trace.outputs.pop().expect("l > 0");
    last.act.row_l2_normalize(NORM_EPS)
}

/// Supplies the paired positive/negative inputs one layer trains on.
pub trait LayerInputSource {
    fn start_epoch(&mut self) -> Result<()>;
    /// Next `(x_pos, x_neg)` pair of the epoch, already propagated to the
    /// layer being trained; `None` ends the epoch.
    fn next_batch(&mut self) -> Result<Option<(Matrix, Matrix)>>;
}

/// Trains one layer on its own objective for `epochs` epochs and returns the
/// sample-weighted mean loss of every epoch.
pub fn train_layer_baseline<S: LayerInputSource>(
    layer: &mut DenseLayer,
    source: &mut S,
    epochs: usize,
    goodness_cfg: &GoodnessConfig,
    adam: &AdamConfig,
) -> Result<Vec<f64>> {
    adam.validate()?;
    let mut trace = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        source.start_epoch()?;
        let mut total = 0.0;
        let mut seen = 0usize;
        while let Some((x_pos, x_neg)) = source.next_batch()? {
            let zeros = vec![0.0; x_pos.rows()];
            let g = layer_loss_grads(layer, &x_pos, &x_neg, goodness_cfg, &zeros, &zeros)?;
            if !g.loss.is_finite() {
                return Err(Error::NonFinite(format!("loss at epoch {epoch}")));
            }
            adam_step(layer, &g.dw, &g.db, adam)?;
            total += g.loss * x_pos.rows() as f64;
            seen += x_pos.rows();
        }
        if seen == 0 {
            return Err(contract!("input source produced an empty epoch"));
        }
        trace.push(total / seen as f64);
    }
    Ok(trace)
}
