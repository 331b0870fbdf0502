use super::*;
use crate::drx::Phase;

fn config(n_ues: usize, n_carriers: usize, duration: u64) -> SimConfig {
    SimConfig {
        n_ues,
        n_carriers,
        duration_ttis: duration,
        ..SimConfig::default()
    }
}

fn trace(len: usize, arrivals: &[(usize, u64)]) -> Vec<u64> {
    let mut t = vec![0; len];
    for &(i, b) in arrivals {
        t[i] += b;
    }
    t
}

#[test]
fn unloaded_single_packet() {
    let cfg = config(1, 1, 200);
    let r = run(&cfg, &[trace(200, &[(100, 125)])], Scheme::uniform("on", DrxConfig::always_on(), 1), 0).unwrap();
    assert_eq!(r.packets, vec![PacketOutcome { ue: 0, enq_tti: 100, del_tti: 101, delay_ms: 1 }]);
}

#[test]
fn contention_serves_oldest_then_lowest_id() {
    let cfg = config(2, 1, 100);
    let on = || Scheme::uniform("on", DrxConfig::always_on(), 2);
    let r = run(&cfg, &[trace(100, &[(10, 1250)]), trace(100, &[(10, 1250)])], on(), 0).unwrap();
    let by_ue = |ue| r.packets.iter().find(|p| p.ue == ue).unwrap().delay_ms;
    assert_eq!((by_ue(0), by_ue(1)), (10, 20));

    let r = run(&cfg, &[trace(100, &[(10, 1250)]), trace(100, &[(5, 1250)])], on(), 0).unwrap();
    let by_ue = |ue| r.packets.iter().find(|p| p.ue == ue).unwrap().delay_ms;
    assert_eq!((by_ue(1), by_ue(0)), (10, 15));
}

#[test]
fn one_carrier_per_ue() {
    // two queued packets of one UE cannot use both carriers at once
    let cfg = config(1, 2, 100);
    let r = run(&cfg, &[trace(100, &[(0, 1250), (1, 1250)])], Scheme::uniform("on", DrxConfig::always_on(), 1), 0).unwrap();
    assert_eq!(r.packets[0].del_tti, 10);
    assert_eq!(r.packets[1].del_tti, 20);
}

#[test]
fn short_traces_fail_unless_padded() {
    let mut cfg = config(1, 1, 100);
    let s = || Scheme::uniform("s2", DrxConfig::set(2).unwrap(), 1);
    assert!(run(&cfg, &[vec![0; 50]], s(), 0).is_err());
    cfg.zero_pad = true;
    assert!(run(&cfg, &[vec![0; 50]], s(), 0).is_ok());
    assert!(run(&cfg, &[vec![0; 50], vec![0; 50]], s(), 0).is_err());
}

fn busy_traffic(n_ues: usize, len: usize, seed: u64) -> Vec<Vec<u64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n_ues)
        .map(|_| {
            (0..len)
                .map(|_| if rng.random::<f64>() < 0.01 { rng.random_range(1..4000) } else { 0 })
                .collect()
        })
        .collect()
}

#[test]
fn conservation_and_determinism() {
    let cfg = config(10, 5, 50_000);
    let traffic = busy_traffic(10, 50_000, 3);
    for set in 1..=4 {
        let s = || Scheme::uniform("x", DrxConfig::set(set).unwrap(), 10);
        let a = run(&cfg, &traffic, s(), 7).unwrap();
        let b = run(&cfg, &traffic, s(), 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.packets.len() as u64 + a.total_undelivered(), a.total_arrivals());
        for u in &a.ues {
            assert_eq!(u.tti_rx + u.tti_active + u.tti_sleep, 50_000);
        }
    }
}

#[test]
fn event_log_has_no_delivery_in_sleep() {
    let cfg = SimConfig {
        log_events: true,
        ..config(3, 1, 20_000)
    };
    let traffic = busy_traffic(3, 20_000, 4);
    let r = run(&cfg, &traffic, Scheme::uniform("s1", DrxConfig::set(1).unwrap(), 3), 0).unwrap();
    for (_, e) in &r.events {
        if let DrxEvent::PhaseChange { to: Phase::Receiving, from, .. } = e {
            assert!(!matches!(from, Phase::ShortSleep | Phase::LongSleep));
        }
    }
    let delivered = r.events.iter().filter(|(_, e)| matches!(e, DrxEvent::Delivered { .. })).count();
    assert_eq!(delivered, r.packets.len());
}

struct Alternate {
    calls: Vec<u64>,
}

impl DrxPolicy for Alternate {
    fn initial_config(&self) -> DrxConfig {
        DrxConfig::set(2).unwrap()
    }
    fn epoch(&self) -> u64 {
        1000
    }
    fn decide(&mut self, tti: u64, labels: &[u8]) -> Result<PolicyDecision> {
        assert_eq!(labels.len() as u64, tti);
        self.calls.push(tti);
        let set_id = if self.calls.len() % 2 == 0 { 2 } else { 3 };
        Ok(PolicyDecision {
            set_id,
            config: DrxConfig::set(set_id).unwrap(),
            x_short: 0.0,
            x_long: 0.0,
        })
    }
}

#[test]
fn adaptive_policy_is_consulted_every_epoch() {
    let cfg = config(2, 1, 10_500);
    let traffic = busy_traffic(2, 10_500, 5);
    let scheme = Scheme {
        name: "alt".into(),
        policies: vec![
            UePolicy::Adaptive(Box::new(Alternate { calls: vec![] })),
            UePolicy::Static(DrxConfig::set(1).unwrap()),
        ],
    };
    let r = run(&cfg, &traffic, scheme, 0).unwrap();
    let ttis: Vec<u64> = r.decisions.iter().map(|d| d.tti).collect();
    assert_eq!(ttis, (1..=10).map(|k| k * 1000).collect::<Vec<_>>());
    assert!(r.decisions.iter().all(|d| d.ue == 0));
    let mut buf = Vec::new();
    r.write_decisions_csv(&mut buf).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("tti,ue,x_short,x_long,set_id\n1000,0,0,0,3\n"));
}

#[test]
fn report_csv_headers() {
    let cfg = config(1, 1, 10);
    let r = run(&cfg, &[trace(10, &[(0, 125)])], Scheme::uniform("on", DrxConfig::always_on(), 1), 0).unwrap();
    let mut p = Vec::new();
    r.write_packets_csv(&mut p).unwrap();
    assert_eq!(String::from_utf8(p).unwrap(), "ue,enq_tti,del_tti,delay_ms\n0,0,1,1\n");
    let mut u = Vec::new();
    r.write_ues_csv(&mut u).unwrap();
    assert_eq!(String::from_utf8(u).unwrap(), "ue,energy_mJ,tti_rx,tti_active,tti_sleep\n0,1.0999999999999999,1,9,0\n");
}

#[test]
fn compare_keeps_scheme_order() {
    let cfg = config(2, 1, 5000);
    let traffic = busy_traffic(2, 5000, 6);
    let reports = compare_schemes(
        &cfg,
        &traffic,
        vec![
            Scheme::uniform("a", DrxConfig::set(3).unwrap(), 2),
            Scheme::uniform("b", DrxConfig::set(2).unwrap(), 2),
        ],
        0,
    )
    .unwrap();
    assert_eq!(reports.iter().map(|r| r.scheme.as_str()).collect::<Vec<_>>(), ["a", "b"]);
}
