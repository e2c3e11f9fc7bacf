//! End-to-end experiments and model comparisons.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use crate::channel::save_dataset;
use crate::error::{Error, Result};
use crate::features::{assemble_raw, assemble_user, extract_raw};
use crate::harness::config::{ExperimentConfig, TargetMode};
use crate::harness::data::{build_frame, generate_labeled, Frame, LabeledSet};
use crate::models::{mape, Model, ModelFamily};

/// Test-set MAPE restricted to one user count.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupMape {
    pub num_users: usize,
    pub rows: usize,
    pub mape: f64,
}

/// Mean per-object wall-clock seconds of each stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageTimes {
    pub ground_truth: f64,
    pub preprocessing: f64,
    pub inference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mape: f64,
    /// One entry per user count present in the test set.
    pub per_k: Vec<GroupMape>,
    pub train_rows: usize,
    pub test_rows: usize,
    pub dropped_train: usize,
    pub dropped_test: usize,
    pub times: StageTimes,
}

impl EvalReport {
    /// Deterministic CSV: overall MAPE, per-K MAPE and row/drop counts.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("scope,k,rows,mape\n");
        let _ = writeln!(s, "all,,{},{:?}", self.test_rows, self.mape);
        for g in &self.per_k {
            let _ = writeln!(s, "k,{},{},{:?}", g.num_users, g.rows, g.mape);
        }
        let _ = writeln!(s, "train_rows,,{},", self.train_rows);
        let _ = writeln!(s, "dropped_train,,{},", self.dropped_train);
        let _ = writeln!(s, "dropped_test,,{},", self.dropped_test);
        s
    }

    pub fn timing_csv(&self) -> String {
        format!(
            "stage,seconds_per_object\nground_truth,{:e}\npreprocessing,{:e}\ninference,{:e}\n",
            self.times.ground_truth, self.times.preprocessing, self.times.inference
        )
    }

    pub fn mape_for(&self, k: usize) -> Option<f64> {
        self.per_k.iter().find(|g| g.num_users == k).map(|g| g.mape)
    }
}

/// Overall and per-K MAPE of `predictions` against the frame's targets.
pub fn score(frame: &Frame, predictions: &[f64]) -> Result<(f64, Vec<GroupMape>)> {
    let overall = mape(predictions, &frame.targets)?;
    let mut groups: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((&k, &p), &t) in frame.num_users.iter().zip(predictions).zip(&frame.targets) {
        let g = groups.entry(k).or_default();
        g.0.push(p);
        g.1.push(t);
    }
    let per_k = groups
        .into_iter()
        .map(|(k, (p, t))| {
            Ok(GroupMape {
                num_users: k,
                rows: t.len(),
                mape: mape(&p, &t)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok((overall, per_k))
}

/// Train and test data for an experiment, labeled once and reusable across
/// models and feature schemes.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: LabeledSet,
    pub test: LabeledSet,
}

/// Generates and labels both splits. Training uses sample indices
/// `0..n_train` and testing `n_train..n_train + n_test`.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    cfg.validate()?;
    let scenario = cfg.scenario_config();
    let train = generate_labeled(&scenario, 0, cfg.n_train, &cfg.users, cfg.precoder, cfg.detector)?;
    let test = generate_labeled(
        &scenario,
        cfg.n_train as u64,
        cfg.n_test,
        cfg.test_user_count(),
        cfg.precoder,
        cfg.detector,
    )?;
    Ok(PreparedData { train, test })
}

/// Outputs of a finished experiment.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub report: EvalReport,
    pub model: Model,
    pub train_frame: Frame,
    pub test_frame: Frame,
    pub predictions: Vec<f64>,
}

/// Mean seconds per object for feature extraction over the test objects.
fn time_preprocessing(cfg: &ExperimentConfig, data: &LabeledSet) -> Result<f64> {
    let start = Instant::now();
    for lab in &data.labels.labels {
        let obj = &data.objects[lab.index];
        let raw = extract_raw(obj)?;
        match cfg.target {
            TargetMode::AverageSe => {
                std::hint::black_box(assemble_raw(&raw, obj.sigma2, &cfg.features)?);
            }
            TargetMode::UserWiseSe => {
                for u in 0..obj.num_users() {
                    std::hint::black_box(assemble_user(&raw, obj.sigma2, u, &cfg.features)?);
                }
            }
        }
    }
    Ok(start.elapsed().as_secs_f64() / data.labels.labels.len() as f64)
}

/// Featurizes, trains and evaluates on already prepared data.
pub fn run_on(cfg: &ExperimentConfig, data: &PreparedData) -> Result<ExperimentRun> {
    cfg.validate()?;
    let featurize = |set: &LabeledSet| {
        build_frame(&set.objects, Some(&set.labels), &cfg.features, cfg.target).map_err(|e| e.in_stage("featurize"))
    };
    let train_frame = featurize(&data.train)?;
    let test_frame = featurize(&data.test)?;
    if train_frame.features.columns != test_frame.features.columns {
        return Err(Error::Config("train and test feature layouts differ".into()).in_stage("featurize"));
    }
    let model = Model::train(cfg.model, &train_frame.features, &train_frame.targets, &cfg.train)
        .map_err(|e| e.in_stage("train"))?;

    let start = Instant::now();
    let predictions = model.predict(&test_frame.features).map_err(|e| e.in_stage("predict"))?;
    let n_test_objects = data.test.labels.labels.len() as f64;
    let inference = start.elapsed().as_secs_f64() / n_test_objects;
    let (mape, per_k) = score(&test_frame, &predictions).map_err(|e| e.in_stage("evaluate"))?;

    let gt: f64 = data.test.labels.labels.iter().map(|l| l.seconds).sum::<f64>() / n_test_objects;
    let report = EvalReport {
        mape,
        per_k,
        train_rows: train_frame.len(),
        test_rows: test_frame.len(),
        dropped_train: data.train.labels.dropped.len(),
        dropped_test: data.test.labels.dropped.len(),
        times: StageTimes {
            ground_truth: gt,
            preprocessing: time_preprocessing(cfg, &data.test).map_err(|e| e.in_stage("featurize"))?,
            inference,
        },
    };
    Ok(ExperimentRun {
        report,
        model,
        train_frame,
        test_frame,
        predictions,
    })
}

fn json_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn manifest(cfg: &ExperimentConfig, report: &EvalReport) -> String {
    let mut s = String::from("{\n");
    let _ = writeln!(s, "  \"tool\": \"sepred {}\",", env!("CARGO_PKG_VERSION"));
    s.push_str("  \"config\": {\n");
    let desc = cfg.describe();
    for (i, (k, v)) in desc.iter().enumerate() {
        let comma = if i + 1 < desc.len() { "," } else { "" };
        let _ = writeln!(s, "    \"{}\": \"{}\"{comma}", json_escape(k), json_escape(v));
    }
    s.push_str("  },\n");
    let _ = writeln!(s, "  \"mape\": {:?},", report.mape);
    let _ = writeln!(s, "  \"train_rows\": {},", report.train_rows);
    let _ = writeln!(s, "  \"test_rows\": {},", report.test_rows);
    let _ = writeln!(s, "  \"dropped_train\": {},", report.dropped_train);
    let _ = writeln!(s, "  \"dropped_test\": {},", report.dropped_test);
    s.push_str("  \"files\": [\"train.seds\", \"test.seds\", \"train_labels.csv\", \"test_labels.csv\", \"train_feats.csv\", \"test_feats.csv\", \"model.seml\", \"predictions.csv\", \"report.csv\", \"timing.csv\"]\n}\n");
    s
}

/// Writes every artifact of `run` into `dir`.
pub fn write_artifacts(cfg: &ExperimentConfig, data: &PreparedData, run: &ExperimentRun, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    save_dataset(&data.train.objects, dir.join("train.seds"))?;
    save_dataset(&data.test.objects, dir.join("test.seds"))?;
    data.train
        .labels
        .to_table(false)
        .write_csv(dir.join("train_labels.csv"))?;
    data.test
        .labels
        .to_table(false)
        .write_csv(dir.join("test_labels.csv"))?;
    run.train_frame.to_table().write_csv(dir.join("train_feats.csv"))?;
    run.test_frame.to_table().write_csv(dir.join("test_feats.csv"))?;
    run.model.save(dir.join("model.seml"))?;
    fs::write(
        dir.join("predictions.csv"),
        predictions_csv(&run.test_frame, &run.predictions),
    )?;
    fs::write(dir.join("report.csv"), run.report.to_csv())?;
    fs::write(dir.join("timing.csv"), run.report.timing_csv())?;
    fs::write(dir.join("manifest.json"), manifest(cfg, &run.report))?;
    Ok(())
}

/// Per-row predictions with bookkeeping columns.
pub fn predictions_csv(frame: &Frame, predictions: &[f64]) -> String {
    let mut s = String::from("index,k,user,target,prediction\n");
    for r in 0..frame.len() {
        let user = frame.user.as_ref().map(|u| u[r].to_string()).unwrap_or_default();
        let target = frame.targets.get(r).map(|t| format!("{t:?}")).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{user},{target},{:?}",
            frame.object_index[r], frame.num_users[r], predictions[r]
        );
    }
    s
}

/// Generates data, trains, evaluates and, if `out_dir` is set, writes all
/// artifacts. Deterministic given the configuration.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EvalReport> {
    let data = prepare_data(cfg)?;
    let run = run_on(cfg, &data)?;
    if let Some(dir) = &cfg.out_dir {
        write_artifacts(cfg, &data, &run, dir).map_err(|e| e.in_stage("write"))?;
    }
    Ok(run.report)
}

/// One line of a model comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub model: ModelFamily,
    pub features: String,
    pub target: TargetMode,
    pub mape: f64,
}

/// Runs every configuration on shared data. All configurations must agree
/// on the data-defining keys.
pub fn compare_models(configs: &[ExperimentConfig]) -> Result<Vec<ComparisonRow>> {
    if configs.len() < 2 {
        return Err(Error::Config("comparison needs at least two configurations".into()));
    }
    let key = configs[0].data_key();
    if let Some(i) = configs.iter().position(|c| c.data_key() != key) {
        return Err(Error::Config(format!(
            "configuration {i} does not share the test data of configuration 0"
        )));
    }
    let data = prepare_data(&configs[0])?;
    configs
        .iter()
        .map(|cfg| {
            let run = run_on(cfg, &data)?;
            Ok(ComparisonRow {
                model: cfg.model,
                features: cfg.features.scheme.to_string(),
                target: cfg.target,
                mape: run.report.mape,
            })
        })
        .collect()
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut s = String::from("config,model,features,target,mape\n");
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(s, "{i},{},{},{},{:?}", r.model, r.features, r.target, r.mape);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::data::Frame;
    use crate::table::Table;

    #[test]
    fn score_groups_by_user_count() {
        let frame = Frame {
            features: Table::new(vec![]),
            targets: vec![1.0, 2.0, 4.0],
            object_index: vec![0, 1, 2],
            num_users: vec![2, 4, 2],
            user: None,
        };
        let (all, per_k) = score(&frame, &[1.5, 2.0, 4.0]).unwrap();
        assert!((all - 0.5 / 3.0).abs() < 1e-15);
        assert_eq!(per_k.len(), 2);
        assert_eq!(per_k[0].num_users, 2);
        assert!((per_k[0].mape - 0.25).abs() < 1e-15);
        assert_eq!(per_k[1].mape, 0.0);
    }
}
