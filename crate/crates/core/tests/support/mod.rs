//! Brute-force reference implementations used by the integration and
//! acceptance tests. They share no code with the library beyond its data
//! types: exemption is decided per candidate by modular arithmetic rather
//! than by walking projections forward, and counts are taken directly from
//! the generated tables.

#![allow(dead_code)]

use rand::Rng;
use sidelink_core::channel::{DecodedSource, RxMeasurement};
use sidelink_core::dcc::measure_cbp;
use sidelink_core::rng::{Purpose, RngStream};
use sidelink_core::sps::{
    compute_cr, select_in_window, CrWindow, Observation, SensingWindow, SpsConfig, SpsError, UnsensedPolicy,
};
use sidelink_core::units::{Csr, PowerDbm, SubframeIndex};
use std::collections::BTreeSet;

const SPAN: u64 = 100;
const SUBCHANNELS: u16 = 2;
// Longer than any selection window, so no two candidates share the same
// back-projections.
const RSSI_STEP: u64 = 25;

/// A randomly generated sensing history and selection request.
#[derive(Debug, Clone)]
pub struct SpsInstance {
    pub n: u64,
    pub t1: u32,
    pub t2: u32,
    pub own_period: u32,
    pub cfg: SpsConfig,
    /// Per subframe: `None` when the owner transmitted, else per-subchannel
    /// S-RSSI in dBm.
    pub rssi: Vec<Option<[f64; 2]>>,
    /// Per subframe: decoded reservations (subchannel, RSRP dBm, period ms).
    pub reservations: Vec<Vec<(u16, f64, u32)>>,
}

impl SpsInstance {
    pub fn generate(case: u64) -> Self {
        let mut rng = RngStream::new(0x005E_1EC7, Purpose::Test, case);
        let crowded = rng.random_bool(0.35);
        let n = SPAN + rng.random_range(0..50);
        let t1 = rng.random_range(1..=4);
        let t2 = t1 + rng.random_range(4..=19);
        let own_period = [0, 20, 50, 100][rng.random_range(0..4)];
        let cfg = SpsConfig {
            t1_ms: t1,
            t2_ms: t2,
            th_sps_dbm: rng.random_range(-95.0..-75.0),
            sensing_window_ms: SPAN as u32,
            rssi_projection_step_ms: RSSI_STEP as u32,
            unsensed_policy: if rng.random_bool(0.5) { UnsensedPolicy::Exclude } else { UnsensedPolicy::Ignore },
            ..SpsConfig::default()
        };
        let p_reservation = if crowded { 0.9 } else { 0.15 };
        let mut rssi = Vec::with_capacity(n as usize);
        let mut reservations = Vec::with_capacity(n as usize);
        for _ in 0..n {
            if rng.random_bool(0.04) {
                rssi.push(None);
                reservations.push(Vec::new());
                continue;
            }
            let r = [rng.random_range(-100.0..-60.0), rng.random_range(-100.0..-60.0)];
            let mut res = Vec::new();
            for s in 0..SUBCHANNELS {
                if rng.random_bool(p_reservation) {
                    let rsrp = if crowded { rng.random_range(-80.0..-50.0) } else { rng.random_range(-100.0..-50.0) };
                    let period = [0, 20, 30, 50, 100][rng.random_range(0..5)];
                    res.push((s, rsrp, period));
                }
            }
            rssi.push(Some(r));
            reservations.push(res);
        }
        SpsInstance { n, t1, t2, own_period, cfg, rssi, reservations }
    }

    pub fn window(&self) -> SensingWindow {
        let mut w = SensingWindow::new(SPAN as u32, SUBCHANNELS);
        for j in 0..self.n {
            let obs_storage: Vec<RxMeasurement>;
            let obs = match self.rssi[j as usize] {
                None => Observation::Unsensed { own_subchannel: Some(0) },
                Some(r) => {
                    obs_storage = (0..SUBCHANNELS)
                        .map(|s| RxMeasurement {
                            csr: Csr::new(j, s),
                            srssi: PowerDbm(r[s as usize]),
                            decoded: self.reservations[j as usize]
                                .iter()
                                .filter(|x| x.0 == s)
                                .map(|&(_, rsrp, period)| DecodedSource {
                                    ue: 7,
                                    rsrp: PowerDbm(rsrp),
                                    reservation_period_ms: period,
                                })
                                .collect(),
                        })
                        .collect();
                    Observation::Sensed(&obs_storage)
                }
            };
            w.record_observation(SubframeIndex(j), obs).unwrap();
        }
        w
    }

    fn in_window(&self, j: u64) -> bool {
        j < self.n && j + SPAN >= self.n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSelection {
    pub initial: usize,
    pub survivors: Vec<(u64, u16)>,
    pub escalations: u32,
    pub threshold: f64,
    /// Survivors with their ranking metric, ascending.
    pub ranked: Vec<((u64, u16), f64)>,
    pub keep: usize,
}

pub fn brute_force(inst: &SpsInstance) -> OracleSelection {
    let first = inst.n + inst.t1 as u64;
    let last = inst.n + inst.t2 as u64;
    let all: Vec<(u64, u16)> = (first..=last).flat_map(|t| (0..SUBCHANNELS).map(move |s| (t, s))).collect();
    let initial = all.len();
    let mut threshold = inst.cfg.th_sps_dbm;
    let mut unsensed_on = inst.cfg.unsensed_policy == UnsensedPolicy::Exclude;
    let mut escalations = 0;

    let lands = |t: u64, j: u64, period: u32| period > 0 && t > j && (t - j).is_multiple_of(period as u64);
    let (survivors, _) = loop {
        let hits_reservation = |(t, s): (u64, u16), thr: f64| {
            (0..inst.n).filter(|&j| inst.in_window(j)).any(|j| {
                inst.reservations[j as usize].iter().any(|&(rs, rsrp, p)| rs == s && rsrp > thr && lands(t, j, p))
            })
        };
        let hits_unsensed = |t: u64| {
            (0..inst.n)
                .filter(|&j| inst.in_window(j) && inst.rssi[j as usize].is_none())
                .any(|j| lands(t, j, inst.own_period))
        };
        let exempt = |c: (u64, u16)| (unsensed_on && hits_unsensed(c.0)) || hits_reservation(c, threshold);
        let survivors: Vec<(u64, u16)> = all.iter().copied().filter(|&c| !exempt(c)).collect();
        if 5 * survivors.len() >= initial {
            break (survivors, ());
        }
        if all.iter().any(|&c| hits_reservation(c, threshold)) {
            threshold += 3.0;
            escalations += 1;
        } else if unsensed_on {
            unsensed_on = false;
        } else {
            break (survivors, ());
        }
    };

    let mut ranked: Vec<((u64, u16), f64)> = survivors
        .iter()
        .map(|&(t, s)| {
            let mut sum = 0.0;
            let mut count = 0;
            let mut k = 1;
            while k * RSSI_STEP <= t {
                let j = t - k * RSSI_STEP;
                if !inst.in_window(j) && j < inst.n {
                    break;
                }
                if inst.in_window(j) {
                    if let Some(r) = inst.rssi[j as usize] {
                        sum += 10f64.powf(r[s as usize] / 10.0);
                        count += 1;
                    }
                }
                k += 1;
            }
            ((t, s), if count == 0 { f64::NEG_INFINITY } else { sum / count as f64 })
        })
        .collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
    let keep = initial.div_ceil(5).min(survivors.len()).max(1);
    OracleSelection { initial, survivors, escalations, threshold, ranked, keep }
}

/// Outcome of comparing the library against the enumerator on one case.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleCase {
    pub escalated: bool,
    /// The kept set was fully determined (no tie at the cut-off).
    pub exact: bool,
}

pub fn check_sps_case(case: u64) -> Result<OracleCase, String> {
    let inst = SpsInstance::generate(case);
    let w = inst.window();
    let oracle = brute_force(&inst);
    let mut rng = RngStream::new(case, Purpose::Selection, 0);
    let sel = select_in_window(&w, SubframeIndex(inst.n), inst.t1, inst.t2, &inst.cfg, inst.own_period, &mut rng);
    let ctx = || format!("case {case}: {inst:?}");
    if sel.initial != oracle.initial {
        return Err(format!("|S_A| {} vs {} in {}", sel.initial, oracle.initial, ctx()));
    }
    if sel.survivors != oracle.survivors.len() || sel.escalations != oracle.escalations {
        return Err(format!(
            "survivors/escalations {}/{} vs {}/{} in {}",
            sel.survivors,
            sel.escalations,
            oracle.survivors.len(),
            oracle.escalations,
            ctx()
        ));
    }
    if (sel.threshold_dbm - oracle.threshold).abs() > 1e-9 {
        return Err(format!("threshold {} vs {} in {}", sel.threshold_dbm, oracle.threshold, ctx()));
    }
    let got: BTreeSet<(u64, u16)> = sel.candidates.iter().map(|c| (c.subframe.0, c.subchannel)).collect();
    if got.len() != oracle.keep {
        return Err(format!("kept {} vs {} in {}", got.len(), oracle.keep, ctx()));
    }
    let cut = oracle.ranked[oracle.keep - 1].1;
    let exact = oracle.ranked.get(oracle.keep).is_none_or(|next| next.1 > cut);
    let expected: BTreeSet<(u64, u16)> = oracle.ranked[..oracle.keep].iter().map(|r| r.0).collect();
    if exact {
        if got != expected {
            return Err(format!("kept set {got:?} vs {expected:?} in {}", ctx()));
        }
    } else {
        // Tie at the cut-off: every strictly better candidate must be kept,
        // the rest must come from the tied group.
        for &(c, m) in &oracle.ranked {
            if m < cut && !got.contains(&c) {
                return Err(format!("missing {c:?} in {}", ctx()));
            }
            if m > cut && got.contains(&c) {
                return Err(format!("unexpected {c:?} in {}", ctx()));
            }
        }
    }
    if !got.contains(&(sel.chosen.subframe.0, sel.chosen.subchannel)) {
        return Err(format!("chosen {:?} outside the kept set in {}", sel.chosen, ctx()));
    }
    Ok(OracleCase { escalated: oracle.escalations > 0, exact })
}

/// Random CR table against a direct count.
pub fn check_cr_case(case: u64) -> Result<f64, String> {
    let mut rng = RngStream::new(0xC0FFEE, Purpose::Test, case);
    let subchannels: u16 = rng.random_range(1..=4);
    let n = rng.random_range(1000..5000u64);
    let start = n - rng.random_range(501..1000u64);
    let window = CrWindow { start, end: start + 1000 };
    let p_pool = rng.random_range(0.0..1.0);
    let p_used = rng.random_range(0.0..1.0);
    let cells = 1000 * subchannels as usize;
    let pool: Vec<bool> = (0..cells).map(|_| rng.random_bool(p_pool)).collect();
    let used: Vec<bool> = (0..cells).map(|_| rng.random_bool(p_used)).collect();
    let idx = |j: u64, i: u16| (j - start) as usize * subchannels as usize + i as usize;
    let got = compute_cr(SubframeIndex(n), window, subchannels, |j, i| pool[idx(j, i)], |j, i| used[idx(j, i)]);
    let in_pool = pool.iter().filter(|&&x| x).count();
    let busy = pool.iter().zip(&used).filter(|(x, t)| **x && **t).count();
    match got {
        Err(SpsError::EmptyPool) if in_pool == 0 => Ok(0.0),
        Ok(cr) if in_pool > 0 => {
            let expected = busy as f64 / in_pool as f64;
            if cr != expected || !(0.0..=1.0).contains(&cr) {
                return Err(format!("case {case}: CR {cr} vs {expected}"));
            }
            Ok(cr)
        }
        other => Err(format!("case {case}: unexpected {other:?} with {in_pool} pool cells")),
    }
}

/// Random sensing history against a direct CBP count.
pub fn check_cbp_case(case: u64) -> Result<Option<f64>, String> {
    let mut rng = RngStream::new(0xCB9, Purpose::Test, case);
    let subchannels: u16 = rng.random_range(1..=3);
    let history = rng.random_range(1..300u64);
    let cbp_window: u32 = rng.random_range(1..=100);
    let p_unsensed = if rng.random_bool(0.1) { 1.0 } else { rng.random_range(0.0..0.2) };
    let threshold = -94.0;
    let mut w = SensingWindow::new(1000, subchannels);
    let mut table: Vec<Option<Vec<f64>>> = Vec::new();
    for j in 0..history {
        if rng.random_bool(p_unsensed) {
            w.record_observation(SubframeIndex(j), Observation::Unsensed { own_subchannel: None }).unwrap();
            table.push(None);
        } else {
            let r: Vec<f64> = (0..subchannels).map(|_| rng.random_range(-100.0..-85.0)).collect();
            let m: Vec<RxMeasurement> = r
                .iter()
                .enumerate()
                .map(|(s, &x)| RxMeasurement { csr: Csr::new(j, s as u16), srssi: PowerDbm(x), decoded: vec![] })
                .collect();
            w.record_observation(SubframeIndex(j), Observation::Sensed(&m)).unwrap();
            table.push(Some(r));
        }
    }
    let n = history;
    let (mut sensed, mut busy) = (0u32, 0u32);
    for j in n.saturating_sub(cbp_window as u64)..n {
        if let Some(r) = &table[j as usize] {
            for &x in r {
                sensed += 1;
                busy += u32::from(x > threshold);
            }
        }
    }
    match measure_cbp(&w, SubframeIndex(n), threshold, cbp_window) {
        Ok(c) if sensed > 0 => {
            let expected = 100.0 * busy as f64 / sensed as f64;
            if c != expected || !(0.0..=100.0).contains(&c) {
                return Err(format!("case {case}: CBP {c} vs {expected}"));
            }
            Ok(Some(c))
        }
        Err(_) if sensed == 0 => Ok(None),
        other => Err(format!("case {case}: unexpected {other:?} with {sensed} sensed slots")),
    }
}
