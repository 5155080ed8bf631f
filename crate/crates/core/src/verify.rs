//! Finite-difference oracles for the layer-local and coupling gradients.
//!
//! The conformance target holds the other layers' goodness fixed while one
//! parameter is perturbed (the same convention the trainer uses). A second
//! pass re-propagates the perturbation through the whole network and reports
//! how far the full derivative drifts from the detached one; that figure is
//! informational only.

use alloc::vec;
use alloc::vec::Vec;

use crate::collab::{batch_gamma_grad, collab_goodness, context_sum, AlphaMode, CollabParams, NetworkState, Variant};
use crate::error::{contract, Error, Result};
use crate::ff::{ff_loss, goodness, layer_loss_grads, DenseLayer, GoodnessConfig, GoodnessPair, LayerGrads};
use crate::math::{Matrix, Rng};

/// `|a − n| / max(|a|, |n|, DENOM_FLOOR)`: with a relative tolerance of
/// 1e-4, differences below 1e-6 always pass.
pub const DENOM_FLOOR: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub h: f64,
    pub tol: f64,
    /// Upper bound on perturbed parameters per layer.
    pub max_params: usize,
    /// A probe excluding this fraction of coordinates or more is redrawn.
    pub max_excluded_fraction: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            h: 1e-5,
            tol: 1e-4,
            max_params: 10_000,
            max_excluded_fraction: 0.2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamCoord {
    Weight { layer: usize, row: usize, col: usize },
    Bias { layer: usize, index: usize },
    Gamma { layer: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_parameter: Option<ParamCoord>,
    pub cases_run: usize,
    pub checked: usize,
    /// Coordinates skipped because a ±h step would cross a ReLU kink.
    pub excluded: usize,
    /// Largest error of the detached analytic gradient against derivatives
    /// that re-propagate through every layer.
    pub full_context_max_error: f64,
    pub tol: f64,
    pub pass: bool,
}

impl GradCheckReport {
    fn empty(tol: f64) -> Self {
        GradCheckReport {
            max_relative_error: 0.0,
            worst_parameter: None,
            cases_run: 0,
            checked: 0,
            excluded: 0,
            full_context_max_error: 0.0,
            tol,
            pass: true,
        }
    }

    fn record(&mut self, err: f64, at: ParamCoord) {
        self.checked += 1;
        if err > self.max_relative_error || self.worst_parameter.is_none() {
            self.max_relative_error = self.max_relative_error.max(err);
            if err >= self.max_relative_error {
                self.worst_parameter = Some(at);
            }
        }
        self.pass = self.max_relative_error <= self.tol;
    }

    pub fn excluded_fraction(&self) -> f64 {
        let total = self.checked + self.excluded;
        if total == 0 {
            0.0
        } else {
            self.excluded as f64 / total as f64
        }
    }

    pub fn merge(&mut self, other: &GradCheckReport) {
        if other.max_relative_error > self.max_relative_error || self.worst_parameter.is_none() {
            self.max_relative_error = self.max_relative_error.max(other.max_relative_error);
            self.worst_parameter = other.worst_parameter.or(self.worst_parameter);
        }
        self.cases_run += other.cases_run;
        self.checked += other.checked;
        self.excluded += other.excluded;
        self.full_context_max_error = self.full_context_max_error.max(other.full_context_max_error);
        self.pass = self.max_relative_error <= self.tol;
    }
}

type LayerGradFn = fn(&DenseLayer, &Matrix, &Matrix, &GoodnessConfig, &[f64], &[f64]) -> Result<LayerGrads>;
type GammaGradFn = fn(&[f64], &[f64], &[f64], &[f64], &GoodnessConfig) -> Result<f64>;

/// The analytic gradient implementations under test. Swapping one out lets
/// tests confirm the checker catches a wrong gradient.
#[derive(Clone, Copy)]
pub struct GradientRoutes {
    pub layer: LayerGradFn,
    pub gamma: GammaGradFn,
}

impl Default for GradientRoutes {
    fn default() -> Self {
        GradientRoutes {
            layer: layer_loss_grads,
            gamma: batch_gamma_grad,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(DENOM_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Central difference `(f(x+h) − f(x−h)) / 2h`.
pub fn finite_diff_scalar(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> Result<f64> {
    if h.is_nan() || h <= 0.0 {
        return Err(contract!("finite-difference step must be positive, got {h}"));
    }
    let up = f(x + h);
    let down = f(x - h);
    if !up.is_finite() || !down.is_finite() {
        return Err(Error::NonFinite(alloc::format!("oracle value near x = {x}")));
    }
    Ok((up - down) / (2.0 * h))
}

fn mean_loss(g_pos: &[f64], g_neg: &[f64], s_pos: &[f64], s_neg: &[f64], gamma: f64, cfg: &GoodnessConfig) -> f64 {
    let b = g_pos.len();
    let total: f64 = (0..b)
        .map(|i| {
            ff_loss(
                GoodnessPair {
                    pos: g_pos[i] + gamma * s_pos[i],
                    neg: g_neg[i] + gamma * s_neg[i],
                },
                cfg,
            )
        })
        .sum();
    total / b as f64
}

/// Collaborative loss of layer `l` with every layer's goodness recomputed.
pub fn full_context_loss(net: &NetworkState, x_pos: &Matrix, x_neg: &Matrix, l: usize) -> Result<f64> {
    let tp = net.forward_all(x_pos)?;
    let tn = net.forward_all(x_neg)?;
    let sp = context_sum(&tp.goodness, l, net.collab.alpha())?;
    let sn = context_sum(&tn.goodness, l, net.collab.alpha())?;
    Ok(mean_loss(&tp.goodness[l], &tn.goodness[l], &sp, &sn, net.collab.gamma()[l], &net.goodness))
}

pub fn grad_check_layer(
    net: &NetworkState,
    x_pos: &Matrix,
    x_neg: &Matrix,
    l: usize,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    grad_check_layer_with(net, x_pos, x_neg, l, cfg, &GradientRoutes::default())
}

/// Compares the analytic gradients of layer `l`'s weights, bias and `γ_l`
/// against central differences of its collaborative loss.
pub fn grad_check_layer_with(
    net: &NetworkState,
    x_pos: &Matrix,
    x_neg: &Matrix,
    l: usize,
    cfg: &GradCheckConfig,
    routes: &GradientRoutes,
) -> Result<GradCheckReport> {
    let h = cfg.h;
    if h.is_nan() || h <= 0.0 {
        return Err(contract!("finite-difference step must be positive, got {h}"));
    }
    if l >= net.depth() {
        return Err(contract!("layer {l} out of range for {} layers", net.depth()));
    }
    let layer = &net.layers[l];
    let (rows, cols) = layer.weights().shape();
    if rows * cols + rows + 1 > cfg.max_params {
        return Err(contract!(
            "{} parameters exceed the grad-check budget of {}",
            rows * cols + rows + 1,
            cfg.max_params
        ));
    }
    let theta = net.goodness;
    let gamma = net.collab.gamma()[l];
    let tp = net.forward_all(x_pos)?;
    let tn = net.forward_all(x_neg)?;
    let sp = context_sum(&tp.goodness, l, net.collab.alpha())?;
    let sn = context_sum(&tn.goodness, l, net.collab.alpha())?;
    let in_pos = tp.layer_input(x_pos, l);
    let in_neg = tn.layer_input(x_neg, l);

    let off_pos: Vec<f64> = sp.iter().map(|s| gamma * s).collect();
    let off_neg: Vec<f64> = sn.iter().map(|s| gamma * s).collect();
    let analytic = (routes.layer)(layer, in_pos, in_neg, &theta, &off_pos, &off_neg)?;
    let c_pos = collab_goodness(&tp.goodness[l], &sp, gamma)?;
    let c_neg = collab_goodness(&tn.goodness[l], &sn, gamma)?;
    let analytic_gamma = (routes.gamma)(&c_pos, &c_neg, &sp, &sn, &theta)?;

    let detached = |probe: &DenseLayer, g: f64| -> f64 {
        let gp = goodness(&probe.forward(in_pos).expect("shape checked").act);
        let gn = goodness(&probe.forward(in_neg).expect("shape checked").act);
        mean_loss(&gp, &gn, &sp, &sn, g, &theta)
    };

    let pre = [&tp.outputs[l].pre, &tn.outputs[l].pre];
    let inputs = [in_pos, in_neg];
    let crosses_kink = |unit: usize, col: Option<usize>| {
        pre.iter().zip(inputs).any(|(z, x)| {
            (0..z.rows()).any(|i| {
                let step = col.map_or(h, |k| h * x.get(i, k).abs());
                z.get(i, unit).abs() <= step
            })
        })
    };

    let mut report = GradCheckReport::empty(cfg.tol);
    report.cases_run = 1;
    let mut probe = layer.clone();
    let mut full_net = net.clone();

    for o in 0..rows {
        for k in 0..=cols {
            let is_bias = k == cols;
            if crosses_kink(o, (!is_bias).then_some(k)) {
                report.excluded += 1;
                continue;
            }
            let (at, a) = if is_bias {
                (ParamCoord::Bias { layer: l, index: o }, analytic.db[o])
            } else {
                (ParamCoord::Weight { layer: l, row: o, col: k }, analytic.dw.get(o, k))
            };
            let original = if is_bias { layer.bias()[o] } else { layer.weights().get(o, k) };
            let set = |target: &mut DenseLayer, v: f64| {
                if is_bias {
                    target.bias_mut()[o] = v;
                } else {
                    target.weights_mut().set(o, k, v);
                }
            };
            let numeric = finite_diff_scalar(
                |v| {
                    set(&mut probe, v);
                    detached(&probe, gamma)
                },
                original,
                h,
            )?;
            set(&mut probe, original);
            report.record(relative_error(a, numeric), at);

            let full = finite_diff_scalar(
                |v| {
                    set(&mut full_net.layers[l], v);
                    full_context_loss(&full_net, x_pos, x_neg, l).unwrap_or(f64::NAN)
                },
                original,
                h,
            )?;
            set(&mut full_net.layers[l], original);
            report.full_context_max_error = report.full_context_max_error.max(relative_error(a, full));
        }
    }

    let numeric_gamma = finite_diff_scalar(|g| detached(layer, g), gamma, h)?;
    report.record(relative_error(analytic_gamma, numeric_gamma), ParamCoord::Gamma { layer: l });
    Ok(report)
}

/// Random tiny-network probes run by the `check` command and the test suite.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    pub cases: usize,
    pub seed: u64,
    /// Input dimension followed by layer widths.
    pub widths: Vec<usize>,
    pub batch: usize,
    pub theta: f64,
    pub gamma_range: f64,
    pub check: GradCheckConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            cases: 100,
            seed: 0x5EED,
            widths: vec![6, 5, 4, 3],
            batch: 4,
            theta: 2.0,
            gamma_range: 2.0,
            check: GradCheckConfig::default(),
        }
    }
}

const MAX_REDRAWS: usize = 1000;

pub fn check_suite(cfg: &SuiteConfig) -> Result<GradCheckReport> {
    check_suite_with(cfg, &GradientRoutes::default())
}

/// Runs `cfg.cases` random networks (random γ in `±gamma_range`, alternating
/// α modes) and checks every layer of each. Probes excluding too many
/// coordinates are redrawn.
pub fn check_suite_with(cfg: &SuiteConfig, routes: &GradientRoutes) -> Result<GradCheckReport> {
    let mut rng = Rng::new(cfg.seed);
    let depth = cfg.widths.len().saturating_sub(1);
    let mut total = GradCheckReport::empty(cfg.check.tol);
    let mut redraws = 0;
    let mut case = 0;
    while case < cfg.cases {
        let mode = if case % 2 == 0 { AlphaMode::Ones } else { AlphaMode::RowNormalized };
        let gamma: Vec<f64> = (0..depth).map(|_| rng.uniform(-cfg.gamma_range, cfg.gamma_range)).collect();
        let collab = CollabParams::new(gamma, mode.matrix(depth), true, 0.01)?;
        let net = NetworkState::random(&cfg.widths, collab, GoodnessConfig { theta: cfg.theta }, &mut rng)?;
        let x_pos = Matrix::from_fn(cfg.batch, cfg.widths[0], |_, _| rng.next_f64());
        let x_neg = Matrix::from_fn(cfg.batch, cfg.widths[0], |_, _| rng.next_f64());

        let mut case_report = GradCheckReport::empty(cfg.check.tol);
        let mut redraw = false;
        for l in 0..depth {
            let r = grad_check_layer_with(&net, &x_pos, &x_neg, l, &cfg.check, routes)?;
            if r.excluded_fraction() >= cfg.check.max_excluded_fraction {
                redraw = true;
                break;
            }
            case_report.merge(&r);
        }
        if redraw {
            redraws += 1;
            if redraws > MAX_REDRAWS {
                return Err(contract!("too many probes hit ReLU kinks; widen the inputs"));
            }
            continue;
        }
        case_report.cases_run = 1;
        total.merge(&case_report);
        case += 1;
    }
    Ok(total)
}

/// Builds the variant-consistent parameters used by tiny smoke networks.
pub fn tiny_network(widths: &[usize], variant: Variant, rng: &mut Rng) -> Result<NetworkState> {
    let collab = CollabParams::for_variant(variant, widths.len() - 1, 1.0, 0.01, AlphaMode::Ones)?;
    NetworkState::random(widths, collab, GoodnessConfig::default(), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Rng;

    #[test]
    fn quadratic_is_exact() {
        let d = finite_diff_scalar(|x| x * x, 3.0, 1e-5).unwrap();
        assert!((d - 6.0).abs() < 1e-9);
        assert_eq!(finite_diff_scalar(|_| 4.0, 1.0, 1e-3).unwrap(), 0.0);
        assert!(finite_diff_scalar(|x| x, 1.0, 0.0).is_err());
        assert!(finite_diff_scalar(|x| if x > 1.0 { f64::NAN } else { x }, 1.0, 1e-3).is_err());
    }

    #[test]
    fn central_difference_is_second_order() {
        let f = |x: f64| x.sin() * x.exp();
        let exact = |x: f64| x.exp() * (x.sin() + x.cos());
        let e1 = (finite_diff_scalar(f, 0.7, 1e-2).unwrap() - exact(0.7)).abs();
        let e2 = (finite_diff_scalar(f, 0.7, 5e-3).unwrap() - exact(0.7)).abs();
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn gamma_grad_matches_finite_differences() {
        let cfg = GoodnessConfig::default();
        let mut rng = Rng::new(21);
        for _ in 0..100 {
            let g = GoodnessPair { pos: rng.uniform(0.0, 6.0), neg: rng.uniform(0.0, 6.0) };
            let (sp, sn) = (rng.uniform(0.0, 5.0), rng.uniform(0.0, 5.0));
            let gamma = rng.uniform(-2.0, 2.0);
            let loss = |gm: f64| {
                crate::collab::collab_loss(GoodnessPair { pos: g.pos + gm * sp, neg: g.neg + gm * sn }, &cfg)
            };
            let numeric = finite_diff_scalar(loss, gamma, 1e-5).unwrap();
            let collab = GoodnessPair { pos: g.pos + gamma * sp, neg: g.neg + gamma * sn };
            let analytic = crate::collab::gamma_grad(collab, sp, sn, &cfg);
            assert!((numeric - analytic).abs() < 1e-6, "{numeric} vs {analytic}");
        }
    }

    #[test]
    fn dead_layer_is_zero_on_both_sides() {
        let mut rng = Rng::new(1);
        let mut net = tiny_network(&[6, 5, 4], Variant::Fixed, &mut rng).unwrap();
        net.layers[0] = DenseLayer::from_params(Matrix::zeros(5, 6), vec![-1.0; 5]).unwrap();
        let x = Matrix::from_fn(3, 6, |_, _| rng.next_f64());
        let r = grad_check_layer(&net, &x, &x, 0, &GradCheckConfig::default()).unwrap();
        assert_eq!(r.max_relative_error, 0.0);
        assert_eq!(r.excluded, 0);
        assert!(r.pass);
    }

    #[test]
    fn zero_step_is_rejected() {
        let mut rng = Rng::new(2);
        let net = tiny_network(&[6, 5], Variant::Fixed, &mut rng).unwrap();
        let x = Matrix::zeros(2, 6);
        let cfg = GradCheckConfig { h: 0.0, ..GradCheckConfig::default() };
        assert!(matches!(grad_check_layer(&net, &x, &x, 0, &cfg), Err(Error::Contract(_))));
    }

    #[test]
    fn parameter_budget_is_enforced() {
        let mut rng = Rng::new(3);
        let net = tiny_network(&[200, 60], Variant::Fixed, &mut rng).unwrap();
        let x = Matrix::zeros(1, 200);
        assert!(grad_check_layer(&net, &x, &x, 0, &GradCheckConfig::default()).is_err());
    }

    #[test]
    fn small_suite_passes() {
        let cfg = SuiteConfig { cases: 10, ..SuiteConfig::default() };
        let r = check_suite(&cfg).unwrap();
        assert_eq!(r.cases_run, 10);
        assert!(r.pass, "{r:?}");
    }

    fn flipped_gamma(g_pos: &[f64], g_neg: &[f64], s_pos: &[f64], s_neg: &[f64], cfg: &GoodnessConfig) -> Result<f64> {
        batch_gamma_grad(g_pos, g_neg, s_pos, s_neg, cfg).map(|g| -g)
    }

    #[test]
    fn sign_flipped_gamma_gradient_is_caught() {
        let cfg = SuiteConfig { cases: 5, ..SuiteConfig::default() };
        let routes = GradientRoutes { gamma: flipped_gamma, ..GradientRoutes::default() };
        let r = check_suite_with(&cfg, &routes).unwrap();
        assert!(!r.pass);
        assert!(matches!(r.worst_parameter, Some(ParamCoord::Gamma { .. })));
    }

    #[test]
    fn unattainable_tolerance_fails() {
        let mut cfg = SuiteConfig { cases: 5, ..SuiteConfig::default() };
        cfg.check.tol = 1e-12;
        assert!(!check_suite(&cfg).unwrap().pass);
    }
}
