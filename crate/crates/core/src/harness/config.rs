//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value` pairs; `#` starts a comment and a `[section]`
//! header prefixes the keys that follow it, so `[gbdt]` then `depth = 4` is
//! the same as `gbdt.depth = 4`. Values may be quoted.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::channel::{ScenarioConfig, ScenarioKind, UserCount};
use crate::error::{Error, Result};
use crate::features::{FeatureScheme, FeatureSpec};
use crate::mimo::{DetectorKind, PrecoderKind};
use crate::models::{ModelFamily, TrainConfig};

/// What a row of the learning problem predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetMode {
    /// One row per object, target `se_avg`.
    AverageSe,
    /// One row per user, target that user's SE.
    UserWiseSe,
}

impl fmt::Display for TargetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetMode::AverageSe => "average",
            TargetMode::UserWiseSe => "user",
        })
    }
}

impl FromStr for TargetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "average" | "average_se" | "avg" => Ok(TargetMode::AverageSe),
            "user" | "user_wise" | "user_wise_se" | "userwise" => Ok(TargetMode::UserWiseSe),
            other => Err(Error::Config(format!("unknown target mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioKind,
    pub users: UserCount,
    /// User counts of the test set; defaults to `users`.
    pub test_users: Option<UserCount>,
    pub precoder: PrecoderKind,
    pub detector: DetectorKind,
    pub features: FeatureSpec,
    pub model: ModelFamily,
    pub target: TargetMode,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: ScenarioKind::UrbanAnalog,
            users: UserCount::Fixed(4),
            test_users: None,
            precoder: PrecoderKind::Zf,
            detector: DetectorKind::Mmse,
            features: FeatureSpec::new(FeatureScheme::Sorted),
            model: ModelFamily::Gbdt,
            target: TargetMode::AverageSe,
            n_train: 4000,
            n_test: 1000,
            seed: 1,
            out_dir: None,
            train: TrainConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean {value:?} for {key}"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .trim_matches(|c| c == '[' || c == ']' || c == '{' || c == '}')
        .split(',')
        .map(|v| parse(key, v.trim()))
        .collect()
}

/// Reads `key = value` lines into an ordered map, rejecting duplicates.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut section = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        let k = k.trim();
        let key = if section.is_empty() {
            k.to_string()
        } else {
            format!("{section}.{k}")
        };
        let v = v.trim().trim_matches('"').to_string();
        if out.insert(key.clone(), v).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {key}", n + 1)));
        }
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn from_str_config(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let pairs = parse_pairs(text)?;
        let (mut susinr, mut sigma2) = (true, true);
        let mut seed_overrides = (None, None);
        for (key, value) in &pairs {
            let (k, v) = (key.as_str(), value.as_str());
            match k {
                "scenario" => cfg.scenario = v.parse()?,
                "users" => cfg.users = v.parse()?,
                "test_users" => cfg.test_users = Some(v.parse()?),
                "precoder" => cfg.precoder = v.parse()?,
                "detector" => cfg.detector = v.parse()?,
                "features" => cfg.features.scheme = v.parse()?,
                "susinr" => susinr = parse_bool(k, v)?,
                "sigma2" => sigma2 = parse_bool(k, v)?,
                "model" => cfg.model = v.parse()?,
                "target" => cfg.target = v.parse()?,
                "n_train" => cfg.n_train = parse(k, v)?,
                "n_test" => cfg.n_test = parse(k, v)?,
                "seed" => cfg.seed = parse(k, v)?,
                "out_dir" => cfg.out_dir = Some(PathBuf::from(v)),
                "gbdt.iterations" => cfg.train.gbdt.iterations = parse(k, v)?,
                "gbdt.depth" => cfg.train.gbdt.depth = parse(k, v)?,
                "gbdt.learning_rate" => cfg.train.gbdt.learning_rate = parse(k, v)?,
                "gbdt.subsample" => cfg.train.gbdt.subsample = parse(k, v)?,
                "gbdt.l2_leaf_reg" => cfg.train.gbdt.l2_leaf_reg = parse(k, v)?,
                "gbdt.border_count" => cfg.train.gbdt.border_count = parse(k, v)?,
                "gbdt.seed" => seed_overrides.0 = Some(parse(k, v)?),
                "linear.folds" => cfg.train.linear.folds = parse(k, v)?,
                "linear.n_alphas" => cfg.train.linear.n_alphas = parse(k, v)?,
                "linear.grid_ratio" => cfg.train.linear.grid_ratio = parse(k, v)?,
                "linear.max_sweeps" => cfg.train.linear.max_sweeps = parse(k, v)?,
                "linear.tolerance" => cfg.train.linear.tolerance = parse(k, v)?,
                "mlp.hidden_layers" => cfg.train.mlp.hidden_layers = parse(k, v)?,
                "mlp.width" => cfg.train.mlp.width = parse(k, v)?,
                "mlp.epochs" => cfg.train.mlp.epochs = parse(k, v)?,
                "mlp.lr_search_epochs" => cfg.train.mlp.lr_search_epochs = Some(parse(k, v)?),
                "mlp.batch_size" => cfg.train.mlp.batch_size = parse(k, v)?,
                "mlp.momentum" => cfg.train.mlp.momentum = parse(k, v)?,
                "mlp.learning_rates" => cfg.train.mlp.learning_rates = parse_list(k, v)?,
                "mlp.dropout_rates" => cfg.train.mlp.dropout_rates = parse_list(k, v)?,
                "mlp.weight_decays" => cfg.train.mlp.weight_decays = parse_list(k, v)?,
                "mlp.validation_fraction" => cfg.train.mlp.validation_fraction = parse(k, v)?,
                "mlp.seed" => seed_overrides.1 = Some(parse(k, v)?),
                _ => return Err(Error::Config(format!("unknown key {k:?}"))),
            }
        }
        cfg.features = cfg.features.with_susinr(susinr).with_sigma2(sigma2);
        cfg.train = cfg.train.with_seed(cfg.seed);
        if let Some(s) = seed_overrides.0 {
            cfg.train.gbdt.seed = s;
        }
        if let Some(s) = seed_overrides.1 {
            cfg.train.mlp.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ExperimentConfig::from_str_config(&fs::read_to_string(path)?)
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        ScenarioConfig::preset(self.scenario, self.seed)
    }

    pub fn test_user_count(&self) -> &UserCount {
        self.test_users.as_ref().unwrap_or(&self.users)
    }

    pub fn validate(&self) -> Result<()> {
        self.users.validate()?;
        self.test_user_count().validate()?;
        self.features.validate()?;
        self.scenario_config().validate()?;
        if self.features.requires_fixed_users() && !(self.users.is_fixed() && self.test_user_count() == &self.users) {
            return Err(Error::Config(format!(
                "{} features need the same fixed user count for train and test",
                self.features.scheme
            )));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Config("n_train and n_test must be positive".into()));
        }
        match self.model {
            ModelFamily::Linear => {}
            ModelFamily::Gbdt => self.train.gbdt.validate()?,
            ModelFamily::Mlp => self.train.mlp.validate()?,
        }
        Ok(())
    }

    /// The configuration as sorted `key = value` lines (output directory
    /// excluded), suitable for manifests and for comparing runs.
    pub fn describe(&self) -> Vec<(String, String)> {
        let t = &self.train;
        let mut v: Vec<(String, String)> = vec![
            ("scenario".into(), self.scenario.tag().into()),
            ("users".into(), self.users.to_string()),
            ("test_users".into(), self.test_user_count().to_string()),
            ("precoder".into(), self.precoder.to_string()),
            ("detector".into(), self.detector.to_string()),
            ("features".into(), self.features.scheme.to_string()),
            ("susinr".into(), self.features.include_susinr.to_string()),
            ("sigma2".into(), self.features.include_sigma2.to_string()),
            ("model".into(), self.model.to_string()),
            ("target".into(), self.target.to_string()),
            ("n_train".into(), self.n_train.to_string()),
            ("n_test".into(), self.n_test.to_string()),
            ("seed".into(), self.seed.to_string()),
        ];
        match self.model {
            ModelFamily::Linear => {
                v.push(("linear.folds".into(), t.linear.folds.to_string()));
                v.push(("linear.n_alphas".into(), t.linear.n_alphas.to_string()));
            }
            ModelFamily::Gbdt => {
                let g = &t.gbdt;
                v.push(("gbdt.iterations".into(), g.iterations.to_string()));
                v.push(("gbdt.depth".into(), g.depth.to_string()));
                v.push(("gbdt.learning_rate".into(), g.learning_rate.to_string()));
                v.push(("gbdt.subsample".into(), g.subsample.to_string()));
                v.push(("gbdt.l2_leaf_reg".into(), g.l2_leaf_reg.to_string()));
                v.push(("gbdt.border_count".into(), g.border_count.to_string()));
                v.push(("gbdt.seed".into(), g.seed.to_string()));
            }
            ModelFamily::Mlp => {
                let m = &t.mlp;
                v.push(("mlp.hidden_layers".into(), m.hidden_layers.to_string()));
                v.push(("mlp.width".into(), m.width.to_string()));
                v.push(("mlp.epochs".into(), m.epochs.to_string()));
                v.push(("mlp.batch_size".into(), m.batch_size.to_string()));
                v.push(("mlp.validation_fraction".into(), m.validation_fraction.to_string()));
                v.push(("mlp.seed".into(), m.seed.to_string()));
            }
        }
        v
    }

    /// Keys that fix the train/test data; configs agreeing on these share
    /// identical datasets and labels.
    pub fn data_key(&self) -> Vec<(String, String)> {
        const DATA: [&str; 8] = [
            "scenario",
            "users",
            "test_users",
            "precoder",
            "detector",
            "n_train",
            "n_test",
            "seed",
        ];
        let mut v: Vec<_> = self
            .describe()
            .into_iter()
            .filter(|(k, _)| DATA.contains(&k.as_str()))
            .collect();
        v.push(("target".into(), self.target.to_string()));
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_comments_and_quotes() {
        let cfg = ExperimentConfig::from_str_config(
            "# smoke\nscenario = rural\nusers = {2,4,8}\nfeatures = \"poly3\"\nseed = 9\n\n[gbdt]\ndepth = 4 # shallow\n",
        )
        .unwrap();
        assert_eq!(cfg.scenario, ScenarioKind::RuralAnalog);
        assert_eq!(cfg.users, UserCount::Set(vec![2, 4, 8]));
        assert_eq!(cfg.features.scheme, FeatureScheme::Poly(3));
        assert_eq!(cfg.train.gbdt.depth, 4);
        assert_eq!(cfg.train.gbdt.seed, 9);
        assert!(cfg.features.include_susinr && cfg.features.include_sigma2);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "users = {2,4}\nfeatures = sorted\n",
            "bogus = 1\n",
            "seed = 1\nseed = 2\n",
            "n_train = -3\n",
            "just a line\n",
            "mlp.dropout_rates = 0,1\nmodel = mlp\n",
        ] {
            assert!(
                matches!(ExperimentConfig::from_str_config(text), Err(Error::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn target_mode_names() {
        assert_eq!("user".parse::<TargetMode>().unwrap(), TargetMode::UserWiseSe);
        assert_eq!(TargetMode::AverageSe.to_string(), "average");
    }
}
