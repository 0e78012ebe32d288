use super::{RssiAveraging, SensingWindow, SlotState, SpsConfig, UnsensedPolicy};
use crate::rng::RngStream;
use crate::units::{Csr, SubframeIndex};
use rand::{Rng, RngCore};

/// Outcome of the exemption and ranking steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Kept set after ranking, best first.
    pub candidates: Vec<Csr>,
    /// |S_A|.
    pub initial: usize,
    /// Candidates left after the final exemption round.
    pub survivors: usize,
    /// Working RSRP threshold of the final round.
    pub threshold_dbm: f64,
    pub escalations: u32,
    /// Unsensed-subframe exemption had to be dropped to reach the quota.
    pub unsensed_relaxed: bool,
    pub chosen: Csr,
}

/// Selects a resource in `[n+T1, n+T2]`.
///
/// `own_period_ms` is the period the owner will reserve with; it decides
/// which candidates project onto the owner's unsensed subframes.
pub fn select_resource(
    w: &SensingWindow,
    n: SubframeIndex,
    cfg: &SpsConfig,
    own_period_ms: u32,
    rng: &mut RngStream,
) -> Selection {
    select_in_window(w, n, cfg.t1_ms, cfg.t2_ms, cfg, own_period_ms, rng)
}

/// [`select_resource`] over an explicit window `[n+t1, n+t2]`.
pub fn select_in_window(
    w: &SensingWindow,
    n: SubframeIndex,
    t1: u32,
    t2: u32,
    cfg: &SpsConfig,
    own_period_ms: u32,
    rng: &mut RngStream,
) -> Selection {
    let first = n.0 + t1 as u64;
    let last = n.0 + t2.max(t1) as u64;
    let subchannels = w.subchannels() as usize;
    let width = (last - first + 1) as usize;
    let initial = width * subchannels;
    let index = |t: u64, s: usize| (t - first) as usize * subchannels + s;

    let mut threshold = cfg.th_sps_dbm;
    let mut escalations = 0;
    let mut use_unsensed = cfg.unsensed_policy == UnsensedPolicy::Exclude;
    let mut unsensed_relaxed = false;
    let mut exempt = vec![false; initial];

    // Forward projections j + k·period that land in [first, last].
    let projections = |j: u64, period: u64| {
        let k0 = if first > j { (first - j).div_ceil(period) } else { 1 };
        (k0.max(1)..).map(move |k| j + k * period).take_while(move |&t| t <= last)
    };

    let survivors = loop {
        exempt.iter_mut().for_each(|e| *e = false);
        let mut exempting_rsrp_seen = false;

        if use_unsensed && own_period_ms > 0 {
            for j in w.subframes() {
                if let SlotState::Unsensed { .. } = w.state(j) {
                    for t in projections(j, own_period_ms as u64) {
                        for s in 0..subchannels {
                            exempt[index(t, s)] = true;
                        }
                    }
                }
            }
        }
        for j in w.subframes() {
            for r in w.reservations_at(j) {
                if r.period_ms == 0 || r.rsrp_dbm <= threshold {
                    continue;
                }
                for t in projections(j, r.period_ms as u64) {
                    exempt[index(t, r.subchannel as usize)] = true;
                    exempting_rsrp_seen = true;
                }
            }
        }

        let survivors = exempt.iter().filter(|e| !**e).count();
        if survivors as f64 >= cfg.keep_fraction * initial as f64 - 1e-9 {
            break survivors;
        }
        if exempting_rsrp_seen {
            threshold += cfg.escalation_step_db;
            escalations += 1;
        } else if use_unsensed {
            use_unsensed = false;
            unsensed_relaxed = true;
        } else {
            break survivors;
        }
    };

    // Rank survivors by the average S-RSSI of their sensed back-projections
    // t - k·step. Candidates with no sensed projection rank first. Exact
    // ties are broken by a random key.
    let step = cfg.rssi_projection_step_ms.max(1) as u64;
    let oldest = w.oldest().map(|o| o.0);
    let newest = w.newest().map(|o| o.0);
    let mut ranked: Vec<(f64, u64, Csr)> = Vec::with_capacity(survivors);
    for t in first..=last {
        for s in 0..subchannels {
            if exempt[index(t, s)] {
                continue;
            }
            let mut sum = 0.0;
            let mut count = 0u32;
            if let (Some(oldest), Some(newest)) = (oldest, newest) {
                let mut k = 1;
                while k * step <= t && t - k * step >= oldest {
                    let j = t - k * step;
                    if j <= newest {
                        if let Some(mw) = w.rssi_mw(j, s as u16) {
                            sum += match cfg.rssi_averaging {
                                RssiAveraging::Linear => mw,
                                RssiAveraging::Db => 10.0 * mw.log10(),
                            };
                            count += 1;
                        }
                    }
                    k += 1;
                }
            }
            let metric = if count == 0 { f64::NEG_INFINITY } else { sum / count as f64 };
            ranked.push((metric, rng.next_u64(), Csr::new(t, s as u16)));
        }
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.truncate(cfg.keep_count(initial).min(survivors).max(1));
    let candidates: Vec<Csr> = ranked.into_iter().map(|(_, _, c)| c).collect();
    let chosen = candidates[rng.random_range(0..candidates.len())];

    Selection { candidates, initial, survivors, threshold_dbm: threshold, escalations, unsensed_relaxed, chosen }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{DecodedSource, RxMeasurement};
    use crate::rng::Purpose;
    use crate::sps::Observation;
    use crate::units::PowerDbm;
    use std::collections::HashMap;

    fn noise_window(upto: u64, rssi: f64) -> SensingWindow {
        let mut w = SensingWindow::new(1000, 2);
        for n in 0..upto {
            let m: Vec<_> =
                (0..2).map(|s| RxMeasurement { csr: Csr::new(n, s), srssi: PowerDbm(rssi), decoded: vec![] }).collect();
            w.record_observation(SubframeIndex(n), Observation::Sensed(&m)).unwrap();
        }
        w
    }

    #[test]
    fn empty_window_is_uniform_over_all_200() {
        let w = SensingWindow::new(1000, 2);
        let cfg = SpsConfig::default();
        let mut rng = RngStream::new(1, Purpose::Test, 0);
        let mut counts: HashMap<Csr, u32> = HashMap::new();
        let trials = 200_000;
        for _ in 0..trials {
            let sel = select_resource(&w, SubframeIndex(0), &cfg, 100, &mut rng);
            assert_eq!(sel.initial, 200);
            assert_eq!(sel.candidates.len(), 40);
            *counts.entry(sel.chosen).or_default() += 1;
        }
        assert_eq!(counts.len(), 200);
        // Each CSR expects 1000 hits; 5 sigma ≈ 158.
        for (&c, &k) in &counts {
            assert!((1..=100).contains(&c.subframe.0));
            assert!((k as i64 - 1000).abs() < 160, "{c:?} {k}");
        }
    }

    #[test]
    fn strong_reservations_everywhere_force_escalation() {
        let mut w = SensingWindow::new(1000, 2);
        for n in 900..1000u64 {
            let m: Vec<_> = (0..2)
                .map(|s| RxMeasurement {
                    csr: Csr::new(n, s),
                    srssi: PowerDbm(-60.0),
                    decoded: vec![DecodedSource { ue: 1, rsrp: PowerDbm(-60.0), reservation_period_ms: 100 }],
                })
                .collect();
            w.record_observation(SubframeIndex(n), Observation::Sensed(&m)).unwrap();
        }
        let cfg = SpsConfig::default();
        let mut rng = RngStream::new(1, Purpose::Test, 0);
        let sel = select_resource(&w, SubframeIndex(1000), &cfg, 100, &mut rng);
        assert!(sel.escalations >= 1);
        // -85 → first threshold at or above -60.
        assert_eq!(sel.escalations, 9);
        assert!((sel.threshold_dbm - (-85.0 + 27.0)).abs() < 1e-12);
        assert_eq!(sel.survivors, 200);
    }

    #[test]
    fn picks_quietest_resources() {
        let mut w = noise_window(1000, -98.0);
        // Make subchannel 1 busy in every sensed subframe.
        let cfg = SpsConfig::default();
        for n in 1000..1100u64 {
            let m: Vec<_> = (0..2)
                .map(|s| RxMeasurement {
                    csr: Csr::new(n, s),
                    srssi: PowerDbm(if s == 1 { -70.0 } else { -98.0 + (n % 100) as f64 * 0.01 }),
                    decoded: vec![],
                })
                .collect();
            w.record_observation(SubframeIndex(n), Observation::Sensed(&m)).unwrap();
        }
        let mut rng = RngStream::new(2, Purpose::Test, 0);
        let sel = select_resource(&w, SubframeIndex(1099), &cfg, 100, &mut rng);
        assert_eq!(sel.candidates.len(), 40);
        assert!(sel.candidates.iter().all(|c| c.subchannel == 0));
        assert!(sel.candidates.contains(&sel.chosen));
    }

    #[test]
    fn unsensed_projection_exempts_whole_subframe() {
        let mut w = noise_window(999, -98.0);
        w.record_observation(SubframeIndex(999), Observation::Unsensed { own_subchannel: Some(0) }).unwrap();
        let cfg = SpsConfig::default();
        let mut rng = RngStream::new(3, Purpose::Test, 0);
        for _ in 0..500 {
            let sel = select_resource(&w, SubframeIndex(999), &cfg, 100, &mut rng);
            assert_eq!(sel.survivors, 198);
            assert_ne!(sel.chosen.subframe.0, 1099);
        }
        let ignore = SpsConfig { unsensed_policy: UnsensedPolicy::Ignore, ..SpsConfig::default() };
        let sel = select_resource(&w, SubframeIndex(999), &ignore, 100, &mut rng);
        assert_eq!(sel.survivors, 200);
    }

    #[test]
    fn selection_stays_inside_window() {
        let w = noise_window(500, -95.0);
        let cfg = SpsConfig { t1_ms: 4, t2_ms: 20, ..SpsConfig::default() };
        let mut rng = RngStream::new(9, Purpose::Test, 0);
        for n in 0..200 {
            let sel = select_resource(&w, SubframeIndex(n), &cfg, 100, &mut rng);
            assert!(sel.chosen.subframe.0 >= n + 4 && sel.chosen.subframe.0 <= n + 20);
            assert_eq!(sel.initial, 34);
            assert_eq!(sel.candidates.len(), 7);
        }
    }
}
