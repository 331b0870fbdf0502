use super::*;
use crate::sim::{run, Scheme, SimConfig, UePolicy};
use crate::trace_io::{synthesize_user_trace, tti_byte_totals, Direction, QuantizationScheme, SynthDefaults};
use proptest::prelude::*;

fn naive_snapshot(labels: &[u8], t: usize) -> [f64; 7] {
    let at = |i: i64| if i < 0 { 1.0 } else { labels[i as usize] as f64 };
    let t = t as i64;
    let sum = |w: i64| (t - w..t).map(at).sum::<f64>();
    [at(t - 1), at(t - 2), at(t - 3), at(t - 4), sum(10), sum(100), sum(1000)]
}

fn drx_user_bytes(seconds: f64, seed: u64) -> (Vec<u64>, Vec<u8>) {
    let d = SynthDefaults::builtin();
    let trace = synthesize_user_trace(&d, &d.drx_user, seconds, seed).unwrap();
    let bytes = tti_byte_totals(&trace, 1.0, Direction::Dl).unwrap();
    let q = QuantizationScheme::default();
    let labels = bytes.iter().map(|&b| q.label(b)).collect();
    (bytes, labels)
}

/// Sets ordered from the most to the least sleep per idle cycle.
fn sleep_rank(set: u8) -> usize {
    [2u8, 4, 1, 3].iter().position(|&s| s == set).unwrap()
}

#[test]
fn snapshot_pads_with_silence() {
    let labels = [5u8, 9, 3];
    let s = snapshot(&labels, 3).unwrap();
    assert_eq!(s.entries, [3.0, 9.0, 5.0, 1.0, 24.0, 114.0, 1014.0]);
    assert_eq!(s.entries, naive_snapshot(&labels, 3));
    assert!(snapshot(&labels, 0).is_err());
    assert!(snapshot(&labels, 4).is_err());
}

#[test]
fn silent_history_is_the_range_floor() {
    let labels = vec![1u8; 2000];
    let p = PredictionVector::from_entries(snapshot(&labels, 1500).unwrap().entries);
    assert_eq!((p.x_short, p.x_long), (14.0, 1100.0));
    assert_eq!(short_score(p.x_short), 0.0);
    assert_eq!(long_score(p.x_long), 0.0);
    let busy = PredictionVector::from_entries([9.0, 9.0, 9.0, 9.0, 90.0, 900.0, 9000.0]);
    assert_eq!((short_score(busy.x_short), long_score(busy.x_long)), (10.0, 10.0));
}

#[test]
fn future_vector_reads_forward() {
    let mut labels = vec![1u8; 20];
    labels[10] = 4;
    labels[12] = 2;
    let f = future_vector(&labels, 10);
    assert_eq!(&f[..4], &[4.0, 1.0, 2.0, 1.0]);
    assert_eq!(f[4], 14.0);
    assert_eq!(f[5], 104.0);
    assert_eq!(f[6], 1004.0);
}

#[test]
fn threshold_table_quadrants_and_boundaries() {
    let h = MappingH::default();
    let at = |s: f64, l: f64| {
        let xs = X_SHORT_RANGE.0 + s / 10.0 * (X_SHORT_RANGE.1 - X_SHORT_RANGE.0);
        let xl = X_LONG_RANGE.0 + l / 10.0 * (X_LONG_RANGE.1 - X_LONG_RANGE.0);
        h.decide(&PredictionVector {
            entries: [0.0; 7],
            x_short: xs,
            x_long: xl,
        })
    };
    assert_eq!(at(0.0, 0.0), 2);
    assert_eq!(at(0.0, 9.0), 4);
    assert_eq!(at(9.0, 0.0), 1);
    assert_eq!(at(9.0, 9.0), 3);
    // On the boundary is the lower region.
    assert_eq!(at(8.0, 3.0), 2);
    assert_eq!(at(8.0 + 1e-9, 3.0), 1);
    assert_eq!(at(8.0, 3.0 + 1e-9), 4);
}

#[test]
fn empty_context_extremes() {
    let cfg = OracleConfig::default();
    let (d, e) = evaluate_context(&vec![0; 1000], &cfg).unwrap();
    assert_eq!(d, [0.0; 4]);
    let p = PowerModel::default();
    // Long enough past the last activity, energy approaches the idle power.
    for s in 1..=4u8 {
        let idle = DrxConfig::set(s).unwrap().steady_idle_power(&p) * 1.5;
        assert!((e[s as usize - 1] - idle).abs() / idle < 0.2, "set {s}: {} vs {idle}", e[s as usize - 1]);
    }
    assert_eq!(best_set(&d, &e, 0.0, &p).unwrap(), 2);
    assert_eq!(best_set(&d, &e, 1.0, &p).unwrap(), 3);
    assert!(best_set(&d, &e, 1.5, &p).is_err());
}

#[test]
fn oracle_single_packet_delay() {
    // A packet at the start of a context reached right after the last
    // activity waits for the first on-duration of the short cycle.
    let cfg = OracleConfig {
        start_offsets: vec![2],
        ..OracleConfig::default()
    };
    let mut ctx = vec![0u64; 1000];
    ctx[0] = 100;
    let (d, _) = evaluate_context(&ctx, &cfg).unwrap();
    // Inactivity of 2 has just expired: set1 sleeps 4 then is on, set2
    // sleeps 9, set3/set4 are still in inactivity.
    assert_eq!(d, [5.0, 10.0, 1.0, 1.0]);
}

#[test]
fn idle_latency_orders_sets() {
    let lat: Vec<f64> = (1..=4).map(|s| idle_access_latency(&DrxConfig::set(s).unwrap())).collect();
    assert!((lat[0] - 7.0).abs() < 1e-12);
    assert!((lat[2] - 2.8).abs() < 1e-12);
    assert!(lat[2] < lat[0] && lat[0] < lat[3] && lat[3] < lat[1]);
}

#[test]
fn extreme_omegas_give_constant_policies() {
    let (bytes, labels) = drx_user_bytes(240.0, 3);
    let contexts = oracle_contexts(&bytes, &labels, None, &OracleConfig::default()).unwrap();
    assert!(contexts.len() > 200);
    let p = PowerModel::default();
    let grid: Vec<PredictionVector> = (0..=20)
        .flat_map(|i| {
            (0..=20).map(move |j| PredictionVector {
                entries: [0.0; 7],
                x_short: 14.0 + 112.0 * i as f64 / 20.0,
                x_long: 1100.0 + 8800.0 * j as f64 / 20.0,
            })
        })
        .collect();
    for (omega, want) in [(0.0, 2u8), (1.0, 3u8)] {
        let h = train_h(&contexts, omega, &p, HTrainParams::default()).unwrap();
        assert!(grid.iter().all(|g| h.decide(g) == want), "omega {omega}");
    }
    let h = train_h(&contexts, 0.5, &p, HTrainParams::default()).unwrap();
    if let MappingH::DecisionTree(t) = &h {
        assert!(t.depth() <= 3);
    }
    assert!(train_h(&[], 0.5, &p, HTrainParams::default()).is_err());
}

#[test]
fn predictor_learns_and_stays_in_range() {
    let (_, labels) = drx_user_bytes(120.0, 5);
    let cfg = PredictorConfig {
        stride: 50,
        ..PredictorConfig::default()
    };
    let (f, report) = TrafficPredictor::train(&labels, &cfg).unwrap();
    assert!(report.final_loss < report.initial_loss);
    for t in (1..labels.len()).step_by(997) {
        let p = f.predict(&snapshot(&labels, t).unwrap()).unwrap();
        for (k, v) in p.entries.iter().enumerate() {
            assert!(*v >= ENTRY_RANGES[k].0 && *v <= ENTRY_RANGES[k].1);
        }
    }
    assert!(TrafficPredictor::train(&labels[..1], &cfg).is_err());
}

#[test]
fn adaptive_policy_runs_in_the_simulator() {
    let (bytes, labels) = drx_user_bytes(20.0, 9);
    let cfg = PredictorConfig {
        stride: 200,
        ..PredictorConfig::default()
    };
    let f = Arc::new(TrafficPredictor::train(&labels, &cfg).unwrap().0);
    let h = Arc::new(MappingH::default());
    let sim = SimConfig {
        n_ues: 1,
        n_carriers: 1,
        duration_ttis: 20_000,
        ..SimConfig::default()
    };
    let scheme = Scheme {
        name: "ml".into(),
        policies: vec![UePolicy::Adaptive(Box::new(AdaptivePolicy::new(f, h)))],
    };
    let report = run(&sim, &[bytes], scheme, 0).unwrap();
    assert_eq!(report.decisions.len(), 19);
    assert_eq!(report.total_undelivered(), 0);
}

proptest! {
    #[test]
    fn snapshot_matches_naive(labels in prop::collection::vec(1u8..=9, 1..1500), frac in 0.0f64..1.0) {
        let t = 1 + ((labels.len() - 1) as f64 * frac) as usize;
        prop_assert_eq!(snapshot(&labels, t).unwrap().entries, naive_snapshot(&labels, t));
    }

    #[test]
    fn prediction_sums_in_range(raw in prop::array::uniform7(-1e5f64..1e5)) {
        let p = PredictionVector::from_entries(raw);
        prop_assert!(p.x_short >= 14.0 && p.x_short <= 126.0);
        prop_assert!(p.x_long >= 1100.0 && p.x_long <= 9900.0);
    }

    #[test]
    fn more_activity_never_sleeps_longer(
        xs in 14.0f64..126.0, dxs in 0.0f64..112.0,
        xl in 1100.0f64..9900.0, dxl in 0.0f64..8800.0,
        sb in 0.0f64..10.0, lb in 0.0f64..10.0,
    ) {
        let h = MappingH::ThresholdTable(ThresholdTable { short_boundary: sb, long_boundary: lb, ..ThresholdTable::default() });
        let pv = |s: f64, l: f64| PredictionVector { entries: [0.0; 7], x_short: s, x_long: l };
        let base = sleep_rank(h.decide(&pv(xs, xl)));
        prop_assert!(sleep_rank(h.decide(&pv(xs + dxs, xl))) >= base);
        prop_assert!(sleep_rank(h.decide(&pv(xs, xl + dxl))) >= base);
    }
}
