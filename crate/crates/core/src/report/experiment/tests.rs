use super::*;

fn kv(text: &str) -> KvMap {
    KvMap::parse(text).unwrap()
}

fn tiny_predict(dir: &Path) -> ExperimentConfig {
    let text = format!(
        "experiment = predict_sweep\nseed = 4\nrepetitions = 3\nout_dir = {}\n[predict]\ntaus = 10, 30\ntrain_lengths = 60, 120\nhorizons = 1, 3\n\
         train_length_repetitions = 2\nhorizon_repetitions = 2\ntrace_hours = 3\ntrain_bins = 120\ntest_bins = 40\n\
         p_max = 1\nq_max = 1\nhidden = 6\nwindow = 4\nepochs = 2\n",
        dir.display()
    );
    ExperimentConfig::from_kv(&kv(&text)).unwrap()
}

#[test]
fn config_parsing() {
    let c = ExperimentConfig::from_kv(&kv("experiment = DRX_COMPARE\nseed = 9\n[drx]\nomega = 0.25\nduration_s = 2\n")).unwrap();
    assert_eq!(c.kind, ExperimentKind::DrxCompare);
    assert_eq!(c.seed, 9);
    assert_eq!(c.drx.setup.omega, 0.25);
    assert_eq!(c.drx.setup.sim.duration_ttis, 2000);
    assert!(ExperimentConfig::from_kv(&kv("experiment = drx_compare\n[drx]\nomegaa = 1\n")).is_err());
    assert!(ExperimentConfig::from_kv(&kv("seed = 1\n")).is_err());
    assert!(ExperimentConfig::from_kv(&kv("experiment = drx_compare\nrepetitions = 0\n")).is_err());
    assert!(ExperimentConfig::from_kv(&kv("experiment = predict_sweep\n[predict]\nschemes = arima, prophet\n")).is_err());
    let c = ExperimentConfig::from_kv(&kv("experiment = classify_folds\ntau_s = 0.5\n[classify]\nfeature_sets = FS-4, FS-5\n")).unwrap();
    assert_eq!(c.classify.setup.tau, 0.5);
    assert_eq!(c.classify.feature_sets, vec![FeatureSet::Fs4, FeatureSet::Fs5]);
}

#[test]
fn predict_sweep_means_match_raw_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_predict(dir.path());
    let out = run_experiment(&cfg).unwrap();
    for f in ["arima_grid.csv", "raw_tau.csv", "raw_train_length.csv", "raw_horizon.csv", "metrics.csv", "figures.plot"] {
        assert!(out.files.iter().any(|x| x == f), "{f}");
    }
    let on_disk = MetricTable::read_csv(File::open(dir.path().join("metrics.csv")).unwrap()).unwrap();
    assert_eq!(on_disk, out.table);

    let mut rd = csv::Reader::from_path(dir.path().join("raw_tau.csv")).unwrap();
    let mut per: Vec<(String, f64, f64)> = Vec::new();
    for rec in rd.records() {
        let rec = rec.unwrap();
        per.push((rec[4].to_string(), rec[1].parse().unwrap(), rec[5].parse().unwrap()));
    }
    for row in out.table.rows.iter().filter(|r| r.axis == "tau" && r.metric == "rmse") {
        let xs: Vec<f64> = per.iter().filter(|p| p.0 == row.scheme && p.1 == row.value).map(|p| p.2).collect();
        assert_eq!(xs.len(), 3);
        assert!((xs.iter().sum::<f64>() / 3.0 - row.mean).abs() < 1e-12);
    }
    crate::report::plot::parse_scripts(&std::fs::read_to_string(dir.path().join("figures.plot")).unwrap()).unwrap();
}

#[test]
fn drx_compare_artifacts_and_determinism() {
    let run = |dir: &Path| {
        let text = format!(
            "experiment = drx_compare\nseed = 2\nout_dir = {}\n[drx]\nn_ues = 3\nn_carriers = 2\nduration_s = 8\ntrain_ues = 2\ntrain_s = 8\n\
             predictor_epochs = 2\npredictor_stride = 500\ncdf_max_ms = 20\n",
            dir.display()
        );
        run_experiment(&ExperimentConfig::from_kv(&kv(&text)).unwrap()).unwrap()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (oa, ob) = (run(a.path()), run(b.path()));
    assert_eq!(oa.files, ob.files);
    for f in &oa.files {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
    assert!(oa.table.get("ml", "carriers", 2.0, "mean_power_mw").is_some());
    let cdf = std::fs::read_to_string(a.path().join("delay_cdf.csv")).unwrap();
    assert_eq!(cdf.lines().count(), 1 + 3 * 21);
}

#[test]
fn zero_repetitions_rejected_at_run() {
    let mut c = ExperimentConfig::defaults(ExperimentKind::DrxCompare);
    c.drx.repetitions = 0;
    assert!(run_experiment(&c).is_err());
}
