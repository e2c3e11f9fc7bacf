use std::path::Path;

use sepred::channel::{ScenarioKind, UserCount};
use sepred::features::FeatureScheme;
use sepred::harness::{
    bench_csv, compare_models, comparison_csv, prepare_data, run_benchmark, run_experiment, run_on, BenchConfig,
    ExperimentConfig, TargetMode,
};
use sepred::models::{Model, ModelFamily};
use sepred::ErrorClass;

fn small(extra: &str) -> ExperimentConfig {
    let text = format!(
        "scenario = urban\nusers = 4\nn_train = 200\nn_test = 50\nseed = 3\n\
         [gbdt]\niterations = 60\ndepth = 4\n{extra}"
    );
    ExperimentConfig::from_str_config(&text).unwrap()
}

#[test]
fn experiment_smoke_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("");
    cfg.out_dir = Some(dir.path().to_path_buf());
    let report = run_experiment(&cfg).unwrap();
    assert!(report.mape.is_finite() && report.mape > 0.0 && report.mape < 1.0);
    assert_eq!(report.train_rows + report.dropped_train, 200);
    assert_eq!(report.test_rows + report.dropped_test, 50);
    assert_eq!(report.per_k.len(), 1);
    assert_eq!(report.mape_for(4), Some(report.mape));
    for f in [
        "train.seds",
        "test.seds",
        "train_labels.csv",
        "test_labels.csv",
        "train_feats.csv",
        "test_feats.csv",
        "model.seml",
        "predictions.csv",
        "report.csv",
        "timing.csv",
        "manifest.json",
    ] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let model = Model::load(dir.path().join("model.seml")).unwrap();
    assert_eq!(model.family(), ModelFamily::Gbdt);
}

#[test]
fn experiment_report_is_deterministic() {
    let a = run_experiment(&small("")).unwrap();
    let b = run_experiment(&small("")).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
}

#[test]
fn user_wise_target_has_one_row_per_user() {
    let cfg = small("");
    let mut cfg = ExperimentConfig {
        target: TargetMode::UserWiseSe,
        ..cfg
    };
    cfg.validate().unwrap();
    let data = prepare_data(&cfg).unwrap();
    let run = run_on(&cfg, &data).unwrap();
    let kept = 50 - run.report.dropped_test;
    assert_eq!(run.report.test_rows, 4 * kept);
    assert_eq!(run.test_frame.len(), 4 * kept);
    assert_eq!(run.predictions.len(), 4 * kept);
    let users = run.test_frame.user.as_ref().unwrap();
    for (r, &u) in users.iter().enumerate() {
        assert_eq!(u, r % 4);
    }
    if kept == 50 {
        assert_eq!(run.report.test_rows, 200);
    }
    cfg.features.scheme = FeatureScheme::Poly(3);
    assert!(run_on(&cfg, &data).unwrap().report.mape.is_finite());
}

#[test]
fn comparison_runs_on_shared_data() {
    let a = small("");
    let rows = compare_models(&[a.clone(), a.clone()]).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].mape, rows[1].mape);

    let linear = ExperimentConfig {
        model: ModelFamily::Linear,
        ..a.clone()
    };
    let mut poly = a.clone();
    poly.features.scheme = FeatureScheme::Poly(3);
    let rows = compare_models(&[a.clone(), linear, poly]).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.mape.is_finite() && r.mape > 0.0));
    assert_eq!(rows[1].model, ModelFamily::Linear);
    assert_eq!(rows[2].features, "poly3");
    assert_eq!(comparison_csv(&rows).lines().count(), 4);

    let other = ExperimentConfig { seed: 4, ..small("") };
    let err = compare_models(&[a.clone(), other]).unwrap_err();
    assert_eq!(err.class(), ErrorClass::Config);
    assert_eq!(compare_models(&[a]).unwrap_err().class(), ErrorClass::Config);
}

#[test]
fn benchmark_table_shape() {
    let train = |users: &str, scheme: &str| {
        let text = format!(
            "scenario = urban\nusers = {users}\nfeatures = {scheme}\nn_train = 150\nn_test = 20\nseed = 5\n\
             [gbdt]\niterations = 30\ndepth = 3\n"
        );
        let cfg = ExperimentConfig::from_str_config(&text).unwrap();
        let data = prepare_data(&cfg).unwrap();
        run_on(&cfg, &data).unwrap().model
    };
    let mut bench = BenchConfig::new(ScenarioKind::UrbanAnalog, 9);
    bench.repetitions = 100;
    bench.sorted.insert(8, train("8", "sorted"));
    bench.poly3 = Some(train("{2,4,8}", "poly3"));
    bench.rows = vec![UserCount::Fixed(8), UserCount::Set(vec![2, 4, 8])];
    let rows = run_benchmark(&bench).unwrap();
    assert_eq!(rows.len(), 2);
    let k8 = &rows[0];
    assert!(k8.ground_truth > 0.0 && k8.preprocessing > 0.0);
    assert!(k8.sorted_inference.unwrap() > 0.0);
    assert!(k8.poly3_inference.unwrap() > 0.0);
    assert!(rows[1].sorted_inference.is_none());
    assert!(rows[1].poly3_inference.unwrap() > 0.0);

    let csv = bench_csv(&rows);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0].split(',').count(), 5);
    let mixed: Vec<&str> = lines[2].rsplitn(3, ',').collect();
    assert_eq!(mixed[1], "", "sorted cell must be blank for mixed K");

    bench.repetitions = 10;
    assert_eq!(run_benchmark(&bench).unwrap_err().class(), ErrorClass::Config);
}

#[test]
fn bench_config_resolves_model_paths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("");
    let data = prepare_data(&cfg).unwrap();
    run_on(&cfg, &data)
        .unwrap()
        .model
        .save(dir.path().join("m.seml"))
        .unwrap();
    let text = "scenario = rural\nrepetitions = 150\nmodel.sorted.4 = m.seml\n";
    let bench = BenchConfig::from_str_config(text, dir.path()).unwrap();
    assert_eq!(bench.repetitions, 150);
    assert_eq!(bench.scenario, ScenarioKind::RuralAnalog);
    assert!(bench.sorted.contains_key(&4));
    let missing = BenchConfig::from_str_config("model.poly3 = nope.seml\n", dir.path()).unwrap_err();
    assert_eq!(missing.class(), ErrorClass::Data);
    let unknown = BenchConfig::from_str_config("speed = 3\n", Path::new(".")).unwrap_err();
    assert_eq!(unknown.class(), ErrorClass::Config);
}
