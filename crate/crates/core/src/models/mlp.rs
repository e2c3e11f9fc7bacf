//! Fully-connected ReLU network regressor trained by mini-batch SGD with
//! momentum on standardized inputs and targets.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::features::{fit_normalizer, NormalizationStats};
use crate::models::mape;
use crate::table::Table;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    /// Number of hidden layers (1 or 3 in the reference setups).
    pub hidden_layers: usize,
    pub width: usize,
    pub epochs: usize,
    /// Epoch budget for each learning-rate probe; defaults to `epochs`.
    pub lr_search_epochs: Option<usize>,
    pub batch_size: usize,
    pub momentum: f64,
    pub learning_rates: Vec<f64>,
    pub dropout_rates: Vec<f64>,
    pub weight_decays: Vec<f64>,
    /// Share of training rows held out to pick dropout and weight decay.
    /// Zero validates on the training rows themselves.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden_layers: 1,
            width: 200,
            epochs: 200,
            lr_search_epochs: None,
            batch_size: 32,
            momentum: 0.9,
            learning_rates: vec![1e-2, 1e-3, 1e-4, 1e-5],
            dropout_rates: vec![0.0, 0.1, 0.2],
            weight_decays: vec![0.0, 1e-5, 1e-4],
            validation_fraction: 0.1,
            seed: 228,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 || self.width == 0 {
            return Err(Error::Config("mlp needs at least one non-empty hidden layer".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.lr_search_epochs == Some(0) {
            return Err(Error::Config("mlp epochs and batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if self.learning_rates.is_empty() || self.learning_rates.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.dropout_rates.is_empty() || self.dropout_rates.iter().any(|&p| !(0.0..1.0).contains(&p)) {
            return Err(Error::Config("dropout rates must lie in [0, 1)".into()));
        }
        if self.weight_decays.is_empty() || self.weight_decays.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Config("weight decays must be >= 0".into()));
        }
        if !(0.0..0.5).contains(&self.validation_fraction) {
            return Err(Error::Config("validation_fraction must lie in [0, 0.5)".into()));
        }
        Ok(())
    }
}

/// Affine layer computing `w * x + b` on column-batched inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Dense {
    fn zeros_like(&self) -> Dense {
        Dense {
            w: DMatrix::zeros(self.w.nrows(), self.w.ncols()),
            b: DVector::zeros(self.b.len()),
        }
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.w * x;
        for mut col in z.column_iter_mut() {
            col += &self.b;
        }
        z
    }
}

/// ReLU network with a scalar linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Dense>,
}

impl Network {
    /// He-initialized network with the given layer widths, input first.
    pub fn init(sizes: &[usize], rng: &mut impl Rng) -> Network {
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let std = (2.0 / fan_in.max(1) as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("finite std");
                Dense {
                    w: DMatrix::from_fn(fan_out, fan_in, |_, _| normal.sample(rng)),
                    b: DVector::zeros(fan_out),
                }
            })
            .collect();
        Network { layers }
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_len()];
        s.extend(self.layers.iter().map(|l| l.w.nrows()));
        s
    }

    /// Outputs for column-batched inputs, dropout disabled. Columns are
    /// evaluated one at a time so a batch and a single row agree bitwise.
    pub fn forward(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let last = self.layers.len() - 1;
        DVector::from_iterator(
            x.ncols(),
            x.column_iter().map(|col| {
                let mut a = col.into_owned();
                for (i, layer) in self.layers.iter().enumerate() {
                    a = &layer.w * a + &layer.b;
                    if i < last {
                        a.apply(|v| *v = v.max(0.0));
                    }
                }
                a[0]
            }),
        )
    }

    /// Mean squared error over the batch and its gradient. Hidden activations
    /// are multiplied by `masks[i]` when given (already scaled for dropout).
    pub fn loss_and_gradient(&self, x: &DMatrix<f64>, y: &[f64], masks: Option<&[DMatrix<f64>]>) -> (f64, Vec<Dense>) {
        let n = y.len() as f64;
        let last = self.layers.len() - 1;
        // acts[i] is the input to layer i; pre[i] its pre-activation output.
        let mut acts = vec![x.clone()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&acts[i]);
            if i < last {
                let mut a = z.map(|v| v.max(0.0));
                if let Some(m) = masks {
                    a.component_mul_assign(&m[i]);
                }
                acts.push(a);
            }
            pre.push(z);
        }
        let out = &pre[last];
        let mut delta = DMatrix::from_fn(1, y.len(), |_, c| 2.0 * (out[(0, c)] - y[c]) / n);
        let loss = out.row(0).iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;

        let mut grads: Vec<Dense> = self.layers.iter().map(Dense::zeros_like).collect();
        for i in (0..self.layers.len()).rev() {
            grads[i].w = &delta * acts[i].transpose();
            grads[i].b = delta.column_sum();
            if i > 0 {
                let mut back = self.layers[i].w.transpose() * &delta;
                let z = &pre[i - 1];
                back.zip_apply(z, |d, zv| {
                    if zv <= 0.0 {
                        *d = 0.0
                    }
                });
                if let Some(m) = masks {
                    back.component_mul_assign(&m[i - 1]);
                }
                delta = back;
            }
        }
        (loss, grads)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpHyper {
    pub learning_rate: f64,
    pub dropout: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub net: Network,
    pub stats: NormalizationStats,
    pub hyper: MlpHyper,
}

impl MlpModel {
    pub fn n_features(&self) -> usize {
        self.stats.input_len()
    }

    pub fn predict(&self, features: &Table) -> Result<Vec<f64>> {
        if features.n_cols() != self.n_features() {
            return Err(Error::Shape(format!(
                "mlp model expects {} features, got {}",
                self.n_features(),
                features.n_cols()
            )));
        }
        if features.n_rows() == 0 {
            return Ok(Vec::new());
        }
        let x = normalized_columns(&self.stats, features)?;
        Ok(self
            .net
            .forward(&x)
            .iter()
            .map(|&z| self.stats.inverse_target(z))
            .collect())
    }

    pub fn predict_row(&self, x: &[f64]) -> Result<f64> {
        let z = self.stats.forward_row(x)?;
        let out = self.net.forward(&DMatrix::from_column_slice(z.len(), 1, &z));
        Ok(self.stats.inverse_target(out[0]))
    }
}

/// Normalized features as a `features x rows` matrix.
fn normalized_columns(stats: &NormalizationStats, features: &Table) -> Result<DMatrix<f64>> {
    let mut data = Vec::with_capacity(stats.output_len() * features.n_rows());
    for r in features.rows() {
        data.extend(stats.forward_row(r)?);
    }
    Ok(DMatrix::from_vec(stats.output_len(), features.n_rows(), data))
}

struct Split {
    x: DMatrix<f64>,
    /// Normalized targets.
    y: Vec<f64>,
    /// Raw targets, for MAPE.
    raw: Vec<f64>,
}

struct Trained {
    net: Network,
    train_mse: f64,
    val_mape: f64,
}

fn dropout_masks(net: &Network, batch: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<DMatrix<f64>> {
    let keep = 1.0 / (1.0 - p);
    net.layers[..net.layers.len() - 1]
        .iter()
        .map(|l| {
            DMatrix::from_fn(
                l.w.nrows(),
                batch,
                |_, _| {
                    if rng.random::<f64>() < p {
                        0.0
                    } else {
                        keep
                    }
                },
            )
        })
        .collect()
}

fn mse(net: &Network, data: &Split) -> f64 {
    let out = net.forward(&data.x);
    out.iter().zip(&data.y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / data.y.len() as f64
}

fn val_mape(net: &Network, stats: &NormalizationStats, val: &Split) -> f64 {
    let pred: Vec<f64> = net.forward(&val.x).iter().map(|&z| stats.inverse_target(z)).collect();
    mape(&pred, &val.raw).unwrap_or(f64::INFINITY)
}

/// One SGD run. Returns `None` if the loss diverges. The network with the
/// lowest validation MAPE across epochs is kept.
fn fit_once(
    sizes: &[usize],
    hyper: MlpHyper,
    epochs: usize,
    train: &Split,
    val: &Split,
    stats: &NormalizationStats,
    cfg: &MlpConfig,
) -> Option<Trained> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Network::init(sizes, &mut rng);
    let mut velocity: Vec<Dense> = net.layers.iter().map(Dense::zeros_like).collect();
    let n = train.y.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut best: Option<(f64, Network)> = None;

    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let xb = train.x.select_columns(chunk);
            let yb: Vec<f64> = chunk.iter().map(|&i| train.y[i]).collect();
            let masks = (hyper.dropout > 0.0).then(|| dropout_masks(&net, chunk.len(), hyper.dropout, &mut rng));
            let (loss, grads) = net.loss_and_gradient(&xb, &yb, masks.as_deref());
            if !loss.is_finite() {
                return None;
            }
            for ((layer, g), v) in net.layers.iter_mut().zip(grads).zip(velocity.iter_mut()) {
                let gw = if hyper.weight_decay > 0.0 {
                    g.w + &layer.w * hyper.weight_decay
                } else {
                    g.w
                };
                v.w = &v.w * cfg.momentum + gw;
                v.b = &v.b * cfg.momentum + g.b;
                layer.w -= &v.w * hyper.learning_rate;
                layer.b -= &v.b * hyper.learning_rate;
            }
        }
        if !net.is_finite() {
            return None;
        }
        let score = val_mape(&net, stats, val);
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, net.clone()));
        }
    }
    let (val_mape, net) = best?;
    let train_mse = mse(&net, train);
    train_mse.is_finite().then_some(Trained {
        net,
        train_mse,
        val_mape,
    })
}

pub fn train_mlp(features: &Table, targets: &[f64], cfg: &MlpConfig) -> Result<MlpModel> {
    cfg.validate()?;
    let n = features.n_rows();
    if targets.len() != n {
        return Err(Error::Shape(format!("{n} rows but {} targets", targets.len())));
    }
    if n < 4 {
        return Err(Error::InvalidArgument(format!("mlp needs >= 4 rows, got {n}")));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5a17));
    let n_val = (cfg.validation_fraction * n as f64).round() as usize;
    let (val_idx, train_idx) = if n_val == 0 {
        (order.clone(), order)
    } else {
        let (v, t) = order.split_at(n_val);
        (v.to_vec(), t.to_vec())
    };

    let train_feats = features.take_rows(&train_idx);
    let train_y: Vec<f64> = train_idx.iter().map(|&i| targets[i]).collect();
    let stats = fit_normalizer(&train_feats, &train_y)?;
    if stats.output_len() == 0 {
        return Err(Error::Degenerate("every feature column is constant".into()));
    }
    let make = |feats: &Table, raw: Vec<f64>| -> Result<Split> {
        Ok(Split {
            x: normalized_columns(&stats, feats)?,
            y: stats.apply_targets(&raw, crate::features::Direction::Forward),
            raw,
        })
    };
    let train = make(&train_feats, train_y)?;
    let val = make(
        &features.take_rows(&val_idx),
        val_idx.iter().map(|&i| targets[i]).collect(),
    )?;

    let mut sizes = vec![stats.output_len()];
    sizes.extend(std::iter::repeat_n(cfg.width, cfg.hidden_layers));
    sizes.push(1);

    let probe_epochs = cfg.lr_search_epochs.unwrap_or(cfg.epochs);
    let mut best_lr: Option<(f64, f64)> = None;
    for &lr in &cfg.learning_rates {
        let hyper = MlpHyper {
            learning_rate: lr,
            dropout: 0.0,
            weight_decay: 0.0,
        };
        if let Some(t) = fit_once(&sizes, hyper, probe_epochs, &train, &val, &stats, cfg) {
            if best_lr.is_none_or(|(m, _)| t.train_mse < m) {
                best_lr = Some((t.train_mse, lr));
            }
        }
    }
    let (_, learning_rate) = best_lr.ok_or_else(|| Error::Diverged("every learning rate diverged".into()))?;

    let mut best: Option<(Trained, MlpHyper)> = None;
    for &dropout in &cfg.dropout_rates {
        for &weight_decay in &cfg.weight_decays {
            let hyper = MlpHyper {
                learning_rate,
                dropout,
                weight_decay,
            };
            if let Some(t) = fit_once(&sizes, hyper, cfg.epochs, &train, &val, &stats, cfg) {
                if best.as_ref().is_none_or(|(b, _)| t.val_mape < b.val_mape) {
                    best = Some((t, hyper));
                }
            }
        }
    }
    let (trained, hyper) = best.ok_or_else(|| Error::Diverged("every dropout/decay setting diverged".into()))?;
    Ok(MlpModel {
        net: trained.net,
        stats,
        hyper,
    })
}
