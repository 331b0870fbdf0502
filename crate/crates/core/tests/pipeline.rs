use drxcast::drx::DrxConfig;
use drxcast::featurize::{bin_trace, read_series_csv, write_series_csv};
use drxcast::linear_forecast::grid_search;
use drxcast::report::drx_compare::user_traffic;
use drxcast::report::metrics::{average_power, delay_cdf, rmse};
use drxcast::report::table::MetricTable;
use drxcast::sim::{run, Scheme, SimConfig};
use drxcast::trace_io::{load_trace, save_trace, synthesize_user_trace, LoadOptions, SynthDefaults};

#[test]
fn trace_to_forecast() {
    let d = SynthDefaults::builtin();
    let trace = synthesize_user_trace(&d, &d.predict_user, 3.0 * 3600.0, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    save_trace(&path, &trace).unwrap();
    let loaded = load_trace(&path, &LoadOptions::default()).unwrap();
    assert_eq!(loaded.len(), trace.len());

    let series = bin_trace(&loaded, 10.0).unwrap();
    let mut buf = Vec::new();
    write_series_csv(&mut buf, &series).unwrap();
    let back = read_series_csv(&buf[..], 10.0).unwrap();
    assert_eq!(back.bins, series.bins);

    let y = series.target_values();
    let (train, test) = y.split_at(y.len() - 100);
    let cut = train.len() * 4 / 5;
    let grid = grid_search(&train[..cut], &train[cut..], 0..=2, 0..=1, 0..=1).unwrap();
    let model = grid.refit_stable(train).unwrap();
    let arima = rmse(&model.rolling_one_step(test), test).unwrap();
    let persistence: Vec<f64> = std::iter::once(train[train.len() - 1]).chain(test[..test.len() - 1].iter().copied()).collect();
    let naive = rmse(&persistence, test).unwrap();
    assert!(arima.is_finite() && arima < 2.0 * naive, "{arima} vs {naive}");
}

#[test]
fn simulation_to_metric_table() {
    let d = SynthDefaults::builtin();
    let sim = SimConfig {
        n_ues: 4,
        n_carriers: 2,
        duration_ttis: 60_000,
        ..SimConfig::default()
    };
    let traffic = user_traffic(&d, &d.drx_user, sim.n_ues, sim.duration_s(), sim.tti_ms, 9).unwrap();
    let mut table = MetricTable::default();
    for set in 1..=4u8 {
        let r = run(&sim, &traffic, Scheme::uniform(format!("set{set}"), DrxConfig::set(set).unwrap(), sim.n_ues), 0).unwrap();
        assert_eq!(r.packets.len() as u64 + r.total_undelivered(), r.total_arrivals());
        let cdf = delay_cdf(&r, &[0.0, 10.0, 100.0, 1e9]).unwrap();
        assert!(cdf.windows(2).all(|w| w[0] <= w[1]));
        let (per, fleet) = average_power(&r).unwrap();
        assert!(per.iter().all(|p| (10.0..=200.0).contains(p)));
        table.push_samples(&r.scheme, "carriers", 2.0, "mean_power_mw", &[fleet]).unwrap();
    }
    let mut buf = Vec::new();
    table.write_csv(&mut buf).unwrap();
    assert_eq!(MetricTable::read_csv(&buf[..]).unwrap(), table);
    let p = |s: &str| table.get(s, "carriers", 2.0, "mean_power_mw").unwrap().mean;
    assert!(p("set2") < p("set3"));
}
