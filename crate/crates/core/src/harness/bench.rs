//! Per-object timing of ground truth against feature extraction and model
//! inference.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::hint::black_box;
use std::path::Path;
use std::time::Instant;

use crate::channel::{generate_range, ScenarioConfig, ScenarioKind, UserCount};
use crate::error::{Error, Result};
use crate::features::{assemble_raw, extract_raw, FeatureScheme, FeatureSpec};
use crate::harness::config::parse_pairs;
use crate::mimo::{ground_truth, DetectorKind, PrecoderKind};
use crate::models::Model;

pub const MIN_REPETITIONS: usize = 100;

/// First sample index used for benchmark objects, far from any training
/// or test range.
const BENCH_START: u64 = 1 << 40;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub scenario: ScenarioKind,
    pub seed: u64,
    /// Objects timed per row; each contributes one measurement per stage.
    pub repetitions: usize,
    pub include_susinr: bool,
    pub include_sigma2: bool,
    /// Sorted-feature models keyed by their fixed user count.
    pub sorted: BTreeMap<usize, Model>,
    pub poly3: Option<Model>,
    pub rows: Vec<UserCount>,
}

impl BenchConfig {
    pub fn new(scenario: ScenarioKind, seed: u64) -> Self {
        BenchConfig {
            scenario,
            seed,
            repetitions: 200,
            include_susinr: true,
            include_sigma2: true,
            sorted: BTreeMap::new(),
            poly3: None,
            rows: vec![
                UserCount::Fixed(2),
                UserCount::Fixed(4),
                UserCount::Fixed(8),
                UserCount::Set(vec![2, 4, 8]),
            ],
        }
    }

    /// Parses `scenario`, `seed`, `repetitions`, `susinr`, `sigma2`,
    /// `model.sorted.<K> = path` and `model.poly3 = path`; model paths are
    /// resolved against `base`.
    pub fn from_str_config(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = BenchConfig::new(ScenarioKind::UrbanAnalog, 1);
        let bad = |k: &str, v: &str| Error::Config(format!("bad value {v:?} for {k}"));
        for (k, v) in parse_pairs(text)? {
            match k.as_str() {
                "scenario" => cfg.scenario = v.parse()?,
                "seed" => cfg.seed = v.parse().map_err(|_| bad(&k, &v))?,
                "repetitions" => cfg.repetitions = v.parse().map_err(|_| bad(&k, &v))?,
                "susinr" => cfg.include_susinr = v.parse().map_err(|_| bad(&k, &v))?,
                "sigma2" => cfg.include_sigma2 = v.parse().map_err(|_| bad(&k, &v))?,
                "model.poly3" => cfg.poly3 = Some(Model::load(base.join(&v))?),
                other => {
                    let users = other
                        .strip_prefix("model.sorted.")
                        .and_then(|u| u.parse::<usize>().ok())
                        .ok_or_else(|| Error::Config(format!("unknown key {other:?}")))?;
                    cfg.sorted.insert(users, Model::load(base.join(&v))?);
                }
            }
        }
        Ok(cfg)
    }

    fn spec(&self, scheme: FeatureScheme) -> FeatureSpec {
        FeatureSpec::new(scheme)
            .with_susinr(self.include_susinr)
            .with_sigma2(self.include_sigma2)
    }
}

/// Median per-object seconds; `None` where no model applies.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub users: UserCount,
    pub ground_truth: f64,
    pub preprocessing: f64,
    pub sorted_inference: Option<f64>,
    pub poly3_inference: Option<f64>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

/// Times every row serially on the calling thread, one stage at a time
/// over all objects. Ground truth uses ZF
/// precoding with MMSE detection; preprocessing is the per-object SVD and
/// correlation extraction plus SUSINR; inference is feature assembly plus
/// one model evaluation.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.repetitions < MIN_REPETITIONS {
        return Err(Error::Config(format!(
            "benchmark needs >= {MIN_REPETITIONS} repetitions, got {}",
            cfg.repetitions
        )));
    }
    if cfg.sorted.is_empty() && cfg.poly3.is_none() {
        return Err(Error::MissingModel("benchmark needs a sorted or poly3 model".into()));
    }
    let scenario = ScenarioConfig::preset(cfg.scenario, cfg.seed);
    let sorted_spec = cfg.spec(FeatureScheme::Sorted);
    let poly_spec = cfg.spec(FeatureScheme::Poly(3));

    let mut rows = Vec::with_capacity(cfg.rows.len());
    for users in &cfg.rows {
        let sorted_model = match users {
            UserCount::Fixed(k) => cfg.sorted.get(k),
            UserCount::Set(s) if s.len() == 1 => cfg.sorted.get(&s[0]),
            UserCount::Set(_) => None,
        };
        if sorted_model.is_none() && cfg.poly3.is_none() {
            return Err(Error::MissingModel(format!("no model covers users {users}")));
        }
        let objects = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| generate_range(&scenario, BENCH_START, cfg.repetitions, users))?;

        // Stage-major: each stage sweeps all objects before the next starts,
        // so no stage pays for cache state left behind by another.
        let gt = objects
            .iter()
            .map(|obj| timed(|| ground_truth(obj, PrecoderKind::Zf, DetectorKind::Mmse).map(black_box)).map(|r| r.1))
            .collect::<Result<Vec<f64>>>()?;
        let (raws, pre): (Vec<_>, Vec<f64>) = objects
            .iter()
            .map(|obj| {
                timed(|| {
                    let raw = extract_raw(obj)?;
                    black_box(raw.susinr(obj.sigma2)?);
                    Ok(raw)
                })
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        let infer = |m: &Model, spec: &FeatureSpec| {
            objects
                .iter()
                .zip(&raws)
                .map(|(obj, raw)| {
                    timed(|| m.predict_row(&assemble_raw(raw, obj.sigma2, spec)?).map(black_box)).map(|r| r.1)
                })
                .collect::<Result<Vec<f64>>>()
        };
        let sorted = sorted_model.map(|m| infer(m, &sorted_spec)).transpose()?;
        let poly = cfg.poly3.as_ref().map(|m| infer(m, &poly_spec)).transpose()?;
        rows.push(BenchRow {
            users: users.clone(),
            ground_truth: median(gt),
            preprocessing: median(pre),
            sorted_inference: sorted.map(median),
            poly3_inference: poly.map(median),
        });
    }
    Ok(rows)
}

/// Timing table with blank cells where a model does not apply.
pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("users,ground_truth_zf_s,preprocessing_s,sorted_inference_s,poly3_inference_s\n");
    let cell = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            s,
            "\"{}\",{:e},{:e},{},{}",
            r.users,
            r.ground_truth,
            r.preprocessing,
            cell(r.sorted_inference),
            cell(r.poly3_inference)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LinearModel;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn needs_models_and_repetitions() {
        let mut cfg = BenchConfig::new(ScenarioKind::Iid, 1);
        assert!(matches!(run_benchmark(&cfg), Err(Error::MissingModel(_))));
        cfg.repetitions = 10;
        cfg.poly3 = Some(Model::Linear(LinearModel {
            weights: vec![0.0; 8],
            bias: 1.0,
            l1_strength: 0.0,
        }));
        assert!(matches!(run_benchmark(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn mixed_row_leaves_sorted_blank() {
        let mut cfg = BenchConfig::new(ScenarioKind::Iid, 1);
        cfg.repetitions = MIN_REPETITIONS;
        cfg.rows = vec![UserCount::Fixed(2), UserCount::Set(vec![2, 4, 8])];
        let sorted_len = cfg.spec(FeatureScheme::Sorted).len(2, 2);
        let poly_len = cfg.spec(FeatureScheme::Poly(3)).len(2, 2);
        let constant = |n| {
            Model::Linear(LinearModel {
                weights: vec![0.0; n],
                bias: 1.0,
                l1_strength: 0.0,
            })
        };
        cfg.sorted.insert(2, constant(sorted_len));
        cfg.poly3 = Some(constant(poly_len));
        let rows = run_benchmark(&cfg).unwrap();
        assert!(rows[0].sorted_inference.is_some() && rows[0].poly3_inference.is_some());
        assert!(rows[1].sorted_inference.is_none() && rows[1].poly3_inference.is_some());
        assert!(rows.iter().all(|r| r.ground_truth > 0.0 && r.preprocessing > 0.0));
        let csv = bench_csv(&rows);
        assert!(csv.lines().nth(2).unwrap().contains(",,"));
    }
}
