//! Predictor families, the MAPE metric and the model file format.
//!
//! Model files start with the magic `SEML`, a u16 format version and a u8
//! family tag, followed by family-specific hyperparameters and parameters,
//! and end with a CRC-32 of everything before it.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::features::NormalizationStats;
use crate::table::Table;

pub mod gbdt;
pub mod linear;
pub mod mlp;

pub use gbdt::{train_gbdt, train_gbdt_traced, GbdtModel, GbdtParams};
pub use linear::{train_linear, LinearConfig, LinearModel};
pub use mlp::{train_mlp, MlpConfig, MlpModel};

/// Mean absolute percentage error, `mean(|t - p| / |t|)`.
pub fn mape(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() || targets.is_empty() {
        return Err(Error::Shape(format!(
            "mape needs equal non-empty inputs, got {} predictions and {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let mut sum = 0.0;
    for (i, (p, t)) in predictions.iter().zip(targets).enumerate() {
        if *t == 0.0 {
            return Err(Error::ZeroTarget(i));
        }
        sum += ((t - p) / t).abs();
    }
    Ok(sum / targets.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelFamily {
    Linear,
    Gbdt,
    Mlp,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 3] = [ModelFamily::Linear, ModelFamily::Gbdt, ModelFamily::Mlp];

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Linear => "linear",
            ModelFamily::Gbdt => "gbdt",
            ModelFamily::Mlp => "mlp",
        }
    }

    fn tag(self) -> u8 {
        match self {
            ModelFamily::Linear => 1,
            ModelFamily::Gbdt => 2,
            ModelFamily::Mlp => 3,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(ModelFamily::Linear),
            2 => Ok(ModelFamily::Gbdt),
            3 => Ok(ModelFamily::Mlp),
            t => Err(Error::Format(format!("unknown model family tag {t}"))),
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" | "lasso" => Ok(ModelFamily::Linear),
            "gbdt" | "boosting" => Ok(ModelFamily::Gbdt),
            "mlp" | "nn" => Ok(ModelFamily::Mlp),
            other => Err(Error::Config(format!("unknown model family {other:?}"))),
        }
    }
}

/// Training settings for each family; only the selected one is used.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainConfig {
    pub linear: LinearConfig,
    pub gbdt: GbdtParams,
    pub mlp: MlpConfig,
}

impl TrainConfig {
    /// Points every family's RNG at `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.gbdt.seed = seed;
        self.mlp.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearModel),
    Gbdt(GbdtModel),
    Mlp(MlpModel),
}

impl Model {
    pub fn train(family: ModelFamily, features: &Table, targets: &[f64], cfg: &TrainConfig) -> Result<Model> {
        Ok(match family {
            ModelFamily::Linear => Model::Linear(train_linear(features, targets, &cfg.linear)?),
            ModelFamily::Gbdt => Model::Gbdt(train_gbdt(features, targets, &cfg.gbdt)?),
            ModelFamily::Mlp => Model::Mlp(train_mlp(features, targets, &cfg.mlp)?),
        })
    }

    pub fn family(&self) -> ModelFamily {
        match self {
            Model::Linear(_) => ModelFamily::Linear,
            Model::Gbdt(_) => ModelFamily::Gbdt,
            Model::Mlp(_) => ModelFamily::Mlp,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::Linear(m) => m.n_features(),
            Model::Gbdt(m) => m.n_features,
            Model::Mlp(m) => m.n_features(),
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> Result<f64> {
        match self {
            Model::Linear(m) => m.predict_row(x),
            Model::Gbdt(m) => m.predict_row(x),
            Model::Mlp(m) => m.predict_row(x),
        }
    }

    pub fn predict(&self, features: &Table) -> Result<Vec<f64>> {
        match self {
            Model::Linear(m) => m.predict(features),
            Model::Gbdt(m) => m.predict(features),
            Model::Mlp(m) => m.predict(features),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new(MAGIC, VERSION);
        w.u8(self.family().tag());
        match self {
            Model::Linear(m) => {
                w.f64(m.l1_strength);
                w.f64(m.bias);
                w.f64s(&m.weights);
            }
            Model::Gbdt(m) => write_gbdt(&mut w, m),
            Model::Mlp(m) => write_mlp(&mut w, m),
        }
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
        let mut r = Reader::open(bytes, MAGIC, VERSION)?;
        let family = ModelFamily::from_tag(r.u8()?)?;
        let model = match family {
            ModelFamily::Linear => {
                let l1_strength = r.f64()?;
                let bias = r.f64()?;
                let weights = r.f64s()?;
                Model::Linear(LinearModel {
                    weights,
                    bias,
                    l1_strength,
                })
            }
            ModelFamily::Gbdt => Model::Gbdt(read_gbdt(&mut r)?),
            ModelFamily::Mlp => Model::Mlp(read_mlp(&mut r)?),
        };
        r.finish()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model> {
        Model::from_bytes(&fs::read(path)?)
    }

    /// Loads a model and checks it belongs to `expected`.
    pub fn load_family(path: impl AsRef<Path>, expected: ModelFamily) -> Result<Model> {
        let m = Model::load(path)?;
        if m.family() != expected {
            return Err(Error::ModelFamily {
                expected: expected.name(),
                found: m.family().name(),
            });
        }
        Ok(m)
    }

    pub fn into_linear(self) -> Result<LinearModel> {
        match self {
            Model::Linear(m) => Ok(m),
            other => Err(family_error(ModelFamily::Linear, &other)),
        }
    }

    pub fn into_gbdt(self) -> Result<GbdtModel> {
        match self {
            Model::Gbdt(m) => Ok(m),
            other => Err(family_error(ModelFamily::Gbdt, &other)),
        }
    }

    pub fn into_mlp(self) -> Result<MlpModel> {
        match self {
            Model::Mlp(m) => Ok(m),
            other => Err(family_error(ModelFamily::Mlp, &other)),
        }
    }
}

fn family_error(expected: ModelFamily, found: &Model) -> Error {
    Error::ModelFamily {
        expected: expected.name(),
        found: found.family().name(),
    }
}

const MAGIC: &[u8; 4] = b"SEML";
const VERSION: u16 = 1;

fn write_gbdt(w: &mut Writer, m: &GbdtModel) {
    let p = &m.params;
    w.u64(p.iterations as u64);
    w.u64(p.depth as u64);
    w.f64(p.learning_rate);
    w.f64(p.subsample);
    w.f64(p.l2_leaf_reg);
    w.u64(p.border_count as u64);
    w.u64(p.seed);
    w.u64(m.n_features as u64);
    w.f64(m.base);
    w.u64(m.trees().len() as u64);
    for t in m.trees() {
        w.u64(t.nodes.len() as u64);
        for n in &t.nodes {
            w.u32(n.feature);
            w.f64(n.threshold);
            w.u32(n.left);
            w.u32(n.right);
            w.f64(n.value);
        }
    }
}

fn read_gbdt(r: &mut Reader<'_>) -> Result<GbdtModel> {
    let params = GbdtParams {
        iterations: r.u64()? as usize,
        depth: r.u64()? as usize,
        learning_rate: r.f64()?,
        subsample: r.f64()?,
        l2_leaf_reg: r.f64()?,
        border_count: r.u64()? as usize,
        seed: r.u64()?,
    };
    let n_features = r.u64()? as usize;
    let base = r.f64()?;
    let n_trees = r.len_prefix(8)?;
    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let n_nodes = r.len_prefix(28)?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            nodes.push(gbdt::Node {
                feature: r.u32()?,
                threshold: r.f64()?,
                left: r.u32()?,
                right: r.u32()?,
                value: r.f64()?,
            });
        }
        check_tree(&nodes, n_features)?;
        trees.push(gbdt::Tree { nodes });
    }
    Ok(GbdtModel::new(n_features, base, trees, params))
}

/// Rejects trees whose links could loop or index out of range.
fn check_tree(nodes: &[gbdt::Node], n_features: usize) -> Result<()> {
    if nodes.is_empty() {
        return Err(Error::Format("empty tree".into()));
    }
    for (i, n) in nodes.iter().enumerate() {
        if n.is_leaf() {
            continue;
        }
        let ok = (n.feature as usize) < n_features
            && (n.left as usize) > i
            && (n.right as usize) > i
            && (n.left as usize) < nodes.len()
            && (n.right as usize) < nodes.len();
        if !ok {
            return Err(Error::Format(format!("invalid tree node {i}")));
        }
    }
    Ok(())
}

fn write_mlp(w: &mut Writer, m: &MlpModel) {
    w.f64(m.hyper.learning_rate);
    w.f64(m.hyper.dropout);
    w.f64(m.hyper.weight_decay);
    let s = &m.stats;
    w.f64s(&s.feature_mean);
    w.f64s(&s.feature_std);
    w.u64(s.dropped.len() as u64);
    for &d in &s.dropped {
        w.u64(d as u64);
    }
    w.f64(s.target_mean);
    w.f64(s.target_std);
    w.u64(m.net.layers.len() as u64);
    for l in &m.net.layers {
        w.u64(l.w.nrows() as u64);
        w.u64(l.w.ncols() as u64);
        w.f64s(l.w.as_slice());
        w.f64s(l.b.as_slice());
    }
}

fn read_mlp(r: &mut Reader<'_>) -> Result<MlpModel> {
    let hyper = mlp::MlpHyper {
        learning_rate: r.f64()?,
        dropout: r.f64()?,
        weight_decay: r.f64()?,
    };
    let feature_mean = r.f64s()?;
    let feature_std = r.f64s()?;
    let n_dropped = r.len_prefix(8)?;
    let dropped = (0..n_dropped)
        .map(|_| r.u64().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let stats = NormalizationStats {
        feature_mean,
        feature_std,
        dropped,
        target_mean: r.f64()?,
        target_std: r.f64()?,
    };
    if stats.feature_std.len() != stats.input_len()
        || stats.dropped.windows(2).any(|w| w[0] >= w[1])
        || stats.dropped.iter().any(|&d| d >= stats.input_len())
    {
        return Err(Error::Format("inconsistent normalization stats".into()));
    }
    let n_layers = r.len_prefix(16)?;
    let mut layers = Vec::with_capacity(n_layers);
    let mut prev = stats.output_len();
    for _ in 0..n_layers {
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let w = r.f64s()?;
        let b = r.f64s()?;
        if cols != prev || w.len() != rows.saturating_mul(cols) || b.len() != rows {
            return Err(Error::Format("inconsistent mlp layer shapes".into()));
        }
        layers.push(mlp::Dense {
            w: DMatrix::from_vec(rows, cols, w),
            b: DVector::from_vec(b),
        });
        prev = rows;
    }
    if layers.is_empty() || prev != 1 {
        return Err(Error::Format("mlp must end in a single output".into()));
    }
    Ok(MlpModel {
        net: mlp::Network { layers },
        stats,
        hyper,
    })
}
