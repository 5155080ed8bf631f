//! Collaborative goodness, the coupling parameters and their dynamics, and
//! the sequential network trainer.
//!
//! Layer `l`'s collaborative goodness is `G_l + γ_l · Σ_{k≠l} α_lk · G_k`.
//! While layer `l` trains, the other layers' goodness is recomputed with the
//! current weights every step but treated as a constant: no gradient flows
//! into or out of another layer.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::data::{make_pos_neg_batch, Dataset};
use crate::error::{contract, Error, Result};
use crate::ff::{
    adam_step, NORM_EPS, ff_loss, ff_loss_slopes, forward_layers, grads_from_outputs, propagate_to,
    AdamConfig, DenseLayer, GoodnessConfig, GoodnessPair, LayerInputSource,
};
use crate::math::{Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Plain forward-forward, represented as γ = 0 everywhere.
    Baseline,
    /// Fixed coupling: γ stays at its initial value.
    Fixed,
    /// Adaptive coupling: γ follows gradient descent on the layer's loss.
    Adaptive,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Baseline, Variant::Fixed, Variant::Adaptive];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Fixed => "fcff",
            Variant::Adaptive => "acff",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" | "ff" => Ok(Variant::Baseline),
            "fcff" | "fixed" => Ok(Variant::Fixed),
            "acff" | "adaptive" => Ok(Variant::Adaptive),
            other => Err(contract!("unknown variant `{other}` (baseline, fcff, acff)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlphaMode {
    /// `α_lk = 1` for every `k ≠ l`.
    Ones,
    /// `α_lk = 1/(L−1)`, so each row of off-diagonal weights sums to one.
    RowNormalized,
}

impl AlphaMode {
    pub fn name(self) -> &'static str {
        match self {
            AlphaMode::Ones => "ones",
            AlphaMode::RowNormalized => "row-normalized",
        }
    }

    pub fn matrix(self, layers: usize) -> Matrix {
        let w = match self {
            AlphaMode::Ones => 1.0,
            AlphaMode::RowNormalized if layers > 1 => 1.0 / (layers - 1) as f64,
            AlphaMode::RowNormalized => 0.0,
        };
        Matrix::from_fn(layers, layers, |l, k| if l == k { 0.0 } else { w })
    }
}

impl FromStr for AlphaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ones" => Ok(AlphaMode::Ones),
            "row-normalized" | "row_normalized" | "normalized" => Ok(AlphaMode::RowNormalized),
            other => Err(contract!("unknown alpha mode `{other}` (ones, row-normalized)")),
        }
    }
}

/// Coupling strengths `γ`, pairwise weights `α` and the `γ` learning rate.
#[derive(Clone, Debug, PartialEq)]
pub struct CollabParams {
    gamma: Vec<f64>,
    alpha: Matrix,
    learnable: bool,
    gamma_lr: f64,
}

impl CollabParams {
    pub fn new(gamma: Vec<f64>, alpha: Matrix, learnable: bool, gamma_lr: f64) -> Result<Self> {
        let l = gamma.len();
        if alpha.shape() != (l, l) {
            return Err(Error::ShapeMismatch {
                op: "CollabParams::new",
                left: (l, l),
                right: alpha.shape(),
            });
        }
        if gamma.iter().any(|g| !g.is_finite()) || !alpha.is_finite() || !gamma_lr.is_finite() {
            return Err(Error::NonFinite("collaboration parameters".into()));
        }
        Ok(CollabParams {
            gamma,
            alpha,
            learnable,
            gamma_lr,
        })
    }

    /// Parameters consistent with `variant`: γ = 0 for the baseline,
    /// `gamma_init` otherwise; learnable only for the adaptive variant.
    pub fn for_variant(
        variant: Variant,
        layers: usize,
        gamma_init: f64,
        gamma_lr: f64,
        alpha: AlphaMode,
    ) -> Result<Self> {
        let g = if variant == Variant::Baseline { 0.0 } else { gamma_init };
        CollabParams::new(
            vec![g; layers],
            alpha.matrix(layers),
            variant == Variant::Adaptive,
            gamma_lr,
        )
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn alpha(&self) -> &Matrix {
        &self.alpha
    }

    pub fn learnable(&self) -> bool {
        self.learnable
    }

    pub fn gamma_lr(&self) -> f64 {
        self.gamma_lr
    }

    /// `γ_l ← γ_l − η_γ · grad`. Only allowed when the parameters are learnable.
    pub fn update_gamma(&mut self, l: usize, grad: f64) -> Result<()> {
        if !self.learnable {
            return Err(contract!("γ is fixed; update_gamma on non-learnable parameters"));
        }
        if l >= self.gamma.len() {
            return Err(contract!("layer {l} out of range for {} layers", self.gamma.len()));
        }
        if !grad.is_finite() {
            return Err(Error::NonFinite(format!("γ gradient for layer {l}")));
        }
        let next = self.gamma[l] - self.gamma_lr * grad;
        if !next.is_finite() {
            return Err(Error::NonFinite(format!("γ of layer {l}")));
        }
        self.gamma[l] = next;
        Ok(())
    }

    fn check_variant(&self, variant: Variant) -> Result<()> {
        let ok = match variant {
            Variant::Baseline => !self.learnable && self.gamma.iter().all(|&g| g == 0.0),
            Variant::Fixed => !self.learnable,
            Variant::Adaptive => self.learnable,
        };
        if ok {
            Ok(())
        } else {
            Err(contract!("collaboration parameters do not match variant {variant}"))
        }
    }
}

/// Trainable stack of layers plus coupling parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    pub layers: Vec<DenseLayer>,
    pub collab: CollabParams,
    pub goodness: GoodnessConfig,
    /// Row-normalize the label-embedded input before the first layer too.
    /// Off by default: only inputs of layers after the first are normalized.
    pub normalize_input: bool,
}

impl NetworkState {
    pub fn new(layers: Vec<DenseLayer>, collab: CollabParams, goodness: GoodnessConfig) -> Result<Self> {
        if layers.is_empty() {
            return Err(contract!("a network needs at least one layer"));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[1].input_dim() != pair[0].output_dim() {
                return Err(contract!(
                    "layer {} expects {} inputs but layer {l} emits {}",
                    l + 1,
                    pair[1].input_dim(),
                    pair[0].output_dim()
                ));
            }
        }
        if collab.gamma.len() != layers.len() {
            return Err(contract!(
                "{} γ values for {} layers",
                collab.gamma.len(),
                layers.len()
            ));
        }
        if !goodness.theta.is_finite() {
            return Err(Error::NonFinite("θ".into()));
        }
        Ok(NetworkState {
            layers,
            collab,
            goodness,
            normalize_input: false,
        })
    }

    /// Randomly initialized network; `widths[0]` is the input dimension.
    pub fn random(
        widths: &[usize],
        collab: CollabParams,
        goodness: GoodnessConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(contract!("widths {widths:?} need an input and at least one layer, all nonzero"));
        }
        let layers = widths
            .windows(2)
            .map(|w| DenseLayer::random(w[0], w[1], rng))
            .collect();
        NetworkState::new(layers, collab, goodness)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn with_input_normalization(mut self, on: bool) -> Self {
        self.normalize_input = on;
        self
    }

    /// `x` as the first layer sees it.
    pub fn prepare_input(&self, x: Matrix) -> Result<Matrix> {
        prepare_input(x, self.normalize_input)
    }

    /// Activations and goodness of every layer for `x`.
    pub fn forward_all(&self, x: &Matrix) -> Result<crate::ff::ForwardTrace> {
        forward_layers(&self.layers, x, self.layers.len())
    }
}

/// `S_l[i] = Σ_{k≠l} α[l][k] · G_k[i]`; `α[l][l]` is ignored.
pub fn context_sum(goodness_per_layer: &[Vec<f64>], l: usize, alpha: &Matrix) -> Result<Vec<f64>> {
    let depth = goodness_per_layer.len();
    if l >= depth {
        return Err(contract!("layer {l} out of range for {depth} layers"));
    }
    if alpha.rows() <= l || alpha.cols() < depth {
        return Err(Error::ShapeMismatch {
            op: "context_sum",
            left: (depth, depth),
            right: alpha.shape(),
        });
    }
    let b = goodness_per_layer[l].len();
    if goodness_per_layer.iter().any(|g| g.len() != b) {
        return Err(contract!("goodness vectors of unequal length"));
    }
    let mut s = vec![0.0; b];
    for (k, g) in goodness_per_layer.iter().enumerate() {
        if k == l {
            continue;
        }
        let a = alpha.get(l, k);
        s.iter_mut().zip(g).for_each(|(s, g)| *s += a * g);
    }
    Ok(s)
}

/// `g_l + γ_l · s_l`, elementwise.
pub fn collab_goodness(g_l: &[f64], s_l: &[f64], gamma_l: f64) -> Result<Vec<f64>> {
    if g_l.len() != s_l.len() {
        return Err(contract!("goodness length {} vs context length {}", g_l.len(), s_l.len()));
    }
    Ok(g_l.iter().zip(s_l).map(|(g, s)| g + gamma_l * s).collect())
}

/// Loss on collaborative goodness values; same form as [`ff_loss`].
pub fn collab_loss(gp_collab: GoodnessPair, cfg: &GoodnessConfig) -> f64 {
    ff_loss(gp_collab, cfg)
}

/// `∂L/∂γ_l = ½[−σ(−(g⁺−θ))·S⁺ + σ(g⁻−θ)·S⁻]` for one sample pair, where
/// `g` are the collaborative goodness values.
pub fn gamma_grad(gp_collab: GoodnessPair, s_pos: f64, s_neg: f64, cfg: &GoodnessConfig) -> f64 {
    let (d_pos, d_neg) = ff_loss_slopes(gp_collab, cfg);
    d_pos * s_pos + d_neg * s_neg
}

/// Batch mean of [`gamma_grad`].
pub fn batch_gamma_grad(
    g_pos: &[f64],
    g_neg: &[f64],
    s_pos: &[f64],
    s_neg: &[f64],
    cfg: &GoodnessConfig,
) -> Result<f64> {
    let b = g_pos.len();
    if b == 0 || g_neg.len() != b || s_pos.len() != b || s_neg.len() != b {
        return Err(contract!("γ gradient needs four non-empty vectors of equal length"));
    }
    let sum: f64 = (0..b)
        .map(|i| {
            gamma_grad(
                GoodnessPair {
                    pos: g_pos[i],
                    neg: g_neg[i],
                },
                s_pos[i],
                s_neg[i],
                cfg,
            )
        })
        .sum();
    Ok(sum / b as f64)
}

/// γ of one layer at the end of an epoch of that layer's training phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaSample {
    pub epoch: usize,
    pub gamma: f64,
    /// Sum of the batch-mean γ gradients computed during the epoch. With one
    /// batch per epoch this is the batch-mean gradient itself.
    pub grad: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GammaTrace {
    pub per_layer: Vec<Vec<GammaSample>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    pub epochs_per_layer: usize,
    /// Samples per step; 0 means the whole training set every step.
    pub batch_size: usize,
    pub adam: AdamConfig,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingReport {
    /// Mean loss of every epoch, per layer.
    pub losses: Vec<Vec<f64>>,
    pub gamma: GammaTrace,
}

/// Hooks called by [`train_network`] so callers can time phases or sample
/// accuracy without the core depending on a clock.
pub trait TrainObserver {
    fn layer_started(&mut self, _layer: usize) {}

    fn epoch_finished(
        &mut self,
        _net: &NetworkState,
        _layer: usize,
        _epoch: usize,
        _loss: f64,
    ) -> Result<()> {
        Ok(())
    }

    fn layer_finished(&mut self, _layer: usize) {}
}

pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

/// Index batches for one epoch. Full-batch mode keeps dataset order and
/// draws nothing from `rng`; otherwise the indices are shuffled and chunked.
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    if batch_size == 0 || batch_size >= n {
        return vec![idx];
    }
    rng.shuffle(&mut idx);
    idx.chunks(batch_size).map(|c| c.to_vec()).collect()
}

fn prepare_input(x: Matrix, normalize: bool) -> Result<Matrix> {
    if normalize {
        x.row_l2_normalize(NORM_EPS)
    } else {
        Ok(x)
    }
}

/// Feeds one layer with label-embedded batches propagated through the layers
/// before it, using the same sampling sequence as [`train_network`].
pub struct DatasetSource<'a> {
    ds: &'a Dataset,
    previous: &'a [DenseLayer],
    batch_size: usize,
    rng: &'a mut Rng,
    plan: Vec<Vec<usize>>,
    cursor: usize,
    normalize_input: bool,
}

impl<'a> DatasetSource<'a> {
    pub fn new(ds: &'a Dataset, previous: &'a [DenseLayer], batch_size: usize, rng: &'a mut Rng) -> Self {
        DatasetSource {
            ds,
            previous,
            batch_size,
            rng,
            plan: Vec::new(),
            cursor: 0,
            normalize_input: false,
        }
    }

    /// Mirrors [`NetworkState::normalize_input`].
    pub fn with_input_normalization(mut self, on: bool) -> Self {
        self.normalize_input = on;
        self
    }
}

impl LayerInputSource for DatasetSource<'_> {
    fn start_epoch(&mut self) -> Result<()> {
        if self.ds.is_empty() {
            return Err(contract!("empty training set"));
        }
        self.plan = epoch_batches(self.ds.len(), self.batch_size, self.rng);
        self.cursor = 0;
        Ok(())
    }

    fn next_batch(&mut self) -> Result<Option<(Matrix, Matrix)>> {
        let Some(indices) = self.plan.get(self.cursor) else {
            return Ok(None);
        };
        self.cursor += 1;
        let batch = make_pos_neg_batch(self.ds, indices, self.rng)?;
        let depth = self.previous.len();
        let x_pos = prepare_input(batch.x_pos, self.normalize_input)?;
        let x_neg = prepare_input(batch.x_neg, self.normalize_input)?;
        Ok(Some((
            propagate_to(self.previous, &x_pos, depth)?,
            propagate_to(self.previous, &x_neg, depth)?,
        )))
    }
}

fn non_finite(what: &str, layer: usize, epoch: usize) -> Error {
    Error::NonFinite(format!("{what} at layer {layer}, epoch {epoch}"))
}

/// Trains the layers one after another, `epochs_per_layer` epochs each.
///
/// Each step of layer `l` embeds true and wrong labels, runs the positive and
/// negative inputs through the current network, forms collaborative goodness
/// with the other layers' goodness held constant, applies one Adam update to
/// layer `l` and, for the adaptive variant, one gradient step to `γ_l`.
pub fn train_network(
    net: &mut NetworkState,
    ds: &Dataset,
    cfg: &TrainConfig,
    rng: &mut Rng,
    observer: &mut dyn TrainObserver,
) -> Result<TrainingReport> {
    net.collab.check_variant(cfg.variant)?;
    cfg.adam.validate()?;
    if ds.is_empty() {
        return Err(contract!("empty training set"));
    }
    if ds.dim() != net.input_dim() {
        return Err(contract!(
            "dataset has {} inputs, network expects {}",
            ds.dim(),
            net.input_dim()
        ));
    }
    let depth = net.depth();
    let theta = net.goodness;
    let mut report = TrainingReport {
        losses: vec![Vec::with_capacity(cfg.epochs_per_layer); depth],
        gamma: GammaTrace {
            per_layer: vec![Vec::with_capacity(cfg.epochs_per_layer); depth],
        },
    };

    for l in 0..depth {
        observer.layer_started(l);
        for epoch in 0..cfg.epochs_per_layer {
            let gamma_l = net.collab.gamma[l];
            let needs_context = net.collab.learnable || gamma_l != 0.0;
            let sweep = if needs_context { depth } else { l + 1 };
            let mut total = 0.0;
            let mut grad_sum = 0.0;
            for indices in epoch_batches(ds.len(), cfg.batch_size, rng) {
                let batch = make_pos_neg_batch(ds, &indices, rng)?;
                let b = batch.len();
                let x_pos = net.prepare_input(batch.x_pos)?;
                let x_neg = net.prepare_input(batch.x_neg)?;
                let trace_pos = forward_layers(&net.layers, &x_pos, sweep)?;
                let trace_neg = forward_layers(&net.layers, &x_neg, sweep)?;
                let (s_pos, s_neg) = if needs_context {
                    (
                        context_sum(&trace_pos.goodness, l, &net.collab.alpha)?,
                        context_sum(&trace_neg.goodness, l, &net.collab.alpha)?,
                    )
                } else {
                    (vec![0.0; b], vec![0.0; b])
                };
                let off_pos: Vec<f64> = s_pos.iter().map(|s| gamma_l * s).collect();
                let off_neg: Vec<f64> = s_neg.iter().map(|s| gamma_l * s).collect();
                let grads = grads_from_outputs(
                    trace_pos.layer_input(&x_pos, l),
                    &trace_pos.outputs[l],
                    trace_neg.layer_input(&x_neg, l),
                    &trace_neg.outputs[l],
                    &theta,
                    &off_pos,
                    &off_neg,
                )?;
                if !grads.loss.is_finite() {
                    return Err(non_finite("loss", l, epoch));
                }
                let g_grad = if needs_context {
                    let c_pos = collab_goodness(&trace_pos.goodness[l], &s_pos, gamma_l)?;
                    let c_neg = collab_goodness(&trace_neg.goodness[l], &s_neg, gamma_l)?;
                    batch_gamma_grad(&c_pos, &c_neg, &s_pos, &s_neg, &theta)?
                } else {
                    0.0
                };
                adam_step(&mut net.layers[l], &grads.dw, &grads.db, &cfg.adam)
                    .map_err(|e| match e {
                        Error::NonFinite(m) => Error::NonFinite(format!("{m} (layer {l}, epoch {epoch})")),
                        other => other,
                    })?;
                if net.collab.learnable {
                    net.collab
                        .update_gamma(l, g_grad)
                        .map_err(|_| non_finite("γ update", l, epoch))?;
                }
                grad_sum += g_grad;
                total += grads.loss * b as f64;
            }
            let loss = total / ds.len() as f64;
            report.losses[l].push(loss);
            report.gamma.per_layer[l].push(GammaSample {
                epoch,
                gamma: net.collab.gamma[l],
                grad: grad_sum,
            });
            observer.epoch_finished(net, l, epoch, loss)?;
        }
        observer.layer_finished(l);
    }
    Ok(report)
}
