//! Pairwise reception ledgers and the statistics computed from them:
//! PDR and SLT against distance, inter-packet gaps, blind pairs, gains.

pub mod csv;

use crate::channel::RxKind;
use crate::units::UeId;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// The `[metrics]` config section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub bin_width_m: f64,
    /// Links longer than this are not tracked.
    pub max_distance_m: f64,
    /// Region of interest for blind-pair detection.
    pub roi_m: f64,
    /// Average PDR over pairs; `false` pools counts over the bin.
    pub pair_averaged: bool,
    pub timeseries_interval_ms: u32,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            bin_width_m: 25.0,
            max_distance_m: 1000.0,
            roi_m: 100.0,
            pair_averaged: true,
            timeseries_interval_ms: 100,
        }
    }
}

impl MetricsConfig {
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        if !(self.bin_width_m > 0.0) {
            v.push(("bin_width_m", "must be > 0".to_string()));
        }
        if !(self.max_distance_m > 0.0) {
            v.push(("max_distance_m", "must be > 0".to_string()));
        }
        if !(self.roi_m >= 0.0) {
            v.push(("roi_m", "must be >= 0".to_string()));
        }
        if self.timeseries_interval_ms == 0 {
            v.push(("timeseries_interval_ms", "must be > 0".to_string()));
        }
        v
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("bin widths differ: {0} m vs {1} m")]
    BinMismatch(f64, f64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BinCounts {
    pub tx: u64,
    pub rx: u64,
    pub bytes: u64,
}

/// Everything recorded for one ordered (transmitter, receiver) pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairLedger {
    /// Sorted by bin index.
    pub bins: Vec<(u32, BinCounts)>,
    pub last_rx: Option<u64>,
    pub gaps: u64,
    pub gap_sum_ms: u64,
    pub min_gap_ms: Option<u64>,
    pub attempts_in_roi: u64,
    pub attempts_outside_roi: u64,
    pub decoded: u64,
}

impl PairLedger {
    fn bin_mut(&mut self, bin: u32) -> &mut BinCounts {
        let i = match self.bins.binary_search_by_key(&bin, |b| b.0) {
            Ok(i) => i,
            Err(i) => {
                self.bins.insert(i, (bin, BinCounts::default()));
                i
            }
        };
        &mut self.bins[i].1
    }

    fn merge(&mut self, other: &PairLedger) {
        for &(bin, c) in &other.bins {
            let b = self.bin_mut(bin);
            b.tx += c.tx;
            b.rx += c.rx;
            b.bytes += c.bytes;
        }
        self.last_rx = self.last_rx.max(other.last_rx);
        self.gaps += other.gaps;
        self.gap_sum_ms += other.gap_sum_ms;
        self.min_gap_ms = match (self.min_gap_ms, other.min_gap_ms) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.attempts_in_roi += other.attempts_in_roi;
        self.attempts_outside_roi += other.attempts_outside_roi;
        self.decoded += other.decoded;
    }

    pub fn mean_gap_ms(&self) -> Option<f64> {
        (self.gaps > 0).then(|| self.gap_sum_ms as f64 / self.gaps as f64)
    }
}

/// Pair key: (run tag, transmitter, receiver). The tag keeps pairs from
/// different runs apart when stores are merged.
pub type PairKey = (u64, UeId, UeId);

/// One value per distance bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinValue {
    pub bin: u32,
    pub lo_m: f64,
    pub hi_m: f64,
    pub value: f64,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpgStats {
    /// (bin, mean gap ms, gap count)
    pub bins: Vec<(u32, f64, u64)>,
    /// (gap ms, cumulative fraction), one row per distinct gap.
    pub ecdf: Vec<(u64, f64)>,
    pub p80_ms: Option<u64>,
    pub mean_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlindReport {
    /// (run tag, transmitter, receiver, attempts)
    pub pairs: Vec<(u64, UeId, UeId, u64)>,
    /// Receivers blind to at least one neighbour.
    pub blind_ues: usize,
}

/// One sample of the network-state time series, averaged over the UEs
/// inside the measurement region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeseriesRow {
    pub t_s: f64,
    pub mean_cbp_pct: Option<f64>,
    pub mean_power_dbm: f64,
    pub mean_itt_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gain {
    pub bin: u32,
    pub lo_m: f64,
    pub hi_m: f64,
    pub pdr_pp: f64,
    pub slt_bytes_per_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsStore {
    pub bin_width_m: f64,
    pub max_distance_m: f64,
    pub roi_m: f64,
    pub pair_averaged: bool,
    pub payload_bytes: u32,
    run_tag: u64,
    pairs: FxHashMap<PairKey, PairLedger>,
    ipg_hist: BTreeMap<u64, u64>,
    ipg_bins: BTreeMap<u32, (u64, u64)>,
    /// Post-warmup observation time per run tag.
    observation_ms: BTreeMap<u64, u64>,
}

impl MetricsStore {
    pub fn new(cfg: &MetricsConfig, payload_bytes: u32, run_tag: u64, observation_ms: u64) -> Self {
        MetricsStore {
            bin_width_m: cfg.bin_width_m,
            max_distance_m: cfg.max_distance_m,
            roi_m: cfg.roi_m,
            pair_averaged: cfg.pair_averaged,
            payload_bytes,
            run_tag,
            pairs: FxHashMap::default(),
            ipg_hist: BTreeMap::new(),
            ipg_bins: BTreeMap::new(),
            observation_ms: BTreeMap::from([(run_tag, observation_ms)]),
        }
    }

    pub fn bin_of(&self, distance_m: f64) -> u32 {
        (distance_m / self.bin_width_m).floor() as u32
    }

    fn bin_edges(&self, bin: u32) -> (f64, f64) {
        (bin as f64 * self.bin_width_m, (bin + 1) as f64 * self.bin_width_m)
    }

    /// Records one transmission's outcome at one receiver.
    pub fn record(&mut self, tx: UeId, rx: UeId, distance_m: f64, subframe: u64, kind: RxKind) {
        if distance_m > self.max_distance_m {
            return;
        }
        let bin = self.bin_of(distance_m);
        let roi = self.roi_m;
        let payload = self.payload_bytes as u64;
        let pair = self.pairs.entry((self.run_tag, tx, rx)).or_default();
        if distance_m <= roi {
            pair.attempts_in_roi += 1;
        } else {
            pair.attempts_outside_roi += 1;
        }
        let decoded = kind == RxKind::Decoded;
        let counts = pair.bin_mut(bin);
        counts.tx += 1;
        if !decoded {
            return;
        }
        counts.rx += 1;
        counts.bytes += payload;
        pair.decoded += 1;
        if let Some(prev) = pair.last_rx {
            let gap = subframe - prev;
            pair.gaps += 1;
            pair.gap_sum_ms += gap;
            pair.min_gap_ms = Some(pair.min_gap_ms.map_or(gap, |m| m.min(gap)));
            *self.ipg_hist.entry(gap).or_default() += 1;
            let b = self.ipg_bins.entry(bin).or_default();
            b.0 += 1;
            b.1 += gap;
        }
        pair.last_rx = Some(subframe);
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&PairKey, &PairLedger)> {
        self.pairs.iter()
    }

    /// Pairs in key order, so float sums do not depend on hash order.
    fn sorted_pairs(&self) -> Vec<(&PairKey, &PairLedger)> {
        let mut v: Vec<_> = self.pairs.iter().collect();
        v.sort_unstable_by_key(|(k, _)| **k);
        v
    }

    pub fn pair(&self, tx: UeId, rx: UeId) -> Option<&PairLedger> {
        self.pairs.get(&(self.run_tag, tx, rx))
    }

    pub fn total_decoded_bytes(&self) -> u64 {
        self.pairs.values().flat_map(|p| p.bins.iter()).map(|(_, c)| c.bytes).sum()
    }

    /// Order-independent union. Pairs with the same key add up.
    pub fn merge(&mut self, other: &MetricsStore) -> Result<(), MetricsError> {
        if self.bin_width_m != other.bin_width_m {
            return Err(MetricsError::BinMismatch(self.bin_width_m, other.bin_width_m));
        }
        for (k, v) in &other.pairs {
            self.pairs.entry(*k).or_default().merge(v);
        }
        for (g, c) in &other.ipg_hist {
            *self.ipg_hist.entry(*g).or_default() += c;
        }
        for (b, (c, s)) in &other.ipg_bins {
            let e = self.ipg_bins.entry(*b).or_default();
            e.0 += c;
            e.1 += s;
        }
        for (tag, ms) in &other.observation_ms {
            let e = self.observation_ms.entry(*tag).or_default();
            *e = (*e).max(*ms);
        }
        Ok(())
    }

    /// Per-bin mean over pairs of a per-pair-bin value.
    fn per_bin<F>(&self, value: F) -> Vec<BinValue>
    where
        F: Fn(&PairKey, &BinCounts) -> f64,
    {
        let mut acc: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
        for (key, pair) in self.sorted_pairs() {
            for (bin, c) in &pair.bins {
                if c.tx == 0 {
                    continue;
                }
                let e = acc.entry(*bin).or_default();
                e.0 += value(key, c);
                e.1 += 1;
            }
        }
        acc.into_iter()
            .map(|(bin, (sum, n))| {
                let (lo_m, hi_m) = self.bin_edges(bin);
                BinValue { bin, lo_m, hi_m, value: sum / n as f64, n_pairs: n }
            })
            .collect()
    }

    /// Packet delivery ratio per distance bin; empty bins are omitted.
    pub fn pdr(&self) -> Vec<BinValue> {
        let mut out = self.per_bin(|_, c| c.rx as f64 / c.tx as f64);
        if !self.pair_averaged {
            let mut pooled: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
            for pair in self.pairs.values() {
                for (bin, c) in &pair.bins {
                    let e = pooled.entry(*bin).or_default();
                    e.0 += c.rx;
                    e.1 += c.tx;
                }
            }
            for b in &mut out {
                let (rx, tx) = pooled[&b.bin];
                b.value = rx as f64 / tx as f64;
            }
        }
        out
    }

    /// Received bytes per second of observation, averaged over pairs.
    pub fn slt(&self) -> Vec<BinValue> {
        self.per_bin(|key, c| {
            let ms = self.observation_ms.get(&key.0).copied().unwrap_or(0);
            if ms == 0 {
                0.0
            } else {
                c.bytes as f64 / (ms as f64 / 1000.0)
            }
        })
    }

    pub fn ipg_stats(&self) -> IpgStats {
        let bins = self.ipg_bins.iter().map(|(&bin, &(count, sum))| (bin, sum as f64 / count as f64, count)).collect();
        let total: u64 = self.ipg_hist.values().sum();
        let mut ecdf = Vec::with_capacity(self.ipg_hist.len());
        let mut p80_ms = None;
        let mut cum = 0u64;
        let mut sum = 0u64;
        for (&gap, &count) in &self.ipg_hist {
            cum += count;
            sum += gap * count;
            let frac = cum as f64 / total as f64;
            // Integer comparison avoids rounding at exactly 80%.
            if p80_ms.is_none() && cum * 5 >= total * 4 {
                p80_ms = Some(gap);
            }
            ecdf.push((gap, frac));
        }
        let mean_ms = (total > 0).then(|| sum as f64 / total as f64);
        IpgStats { bins, ecdf, p80_ms, mean_ms }
    }

    /// Pairs whose receiver stayed inside the transmitter's region of
    /// interest at every recorded attempt and decoded none of them.
    pub fn blind_nodes(&self) -> BlindReport {
        let mut pairs: Vec<(u64, UeId, UeId, u64)> = self
            .pairs
            .iter()
            .filter(|(_, p)| p.attempts_in_roi > 0 && p.attempts_outside_roi == 0 && p.decoded == 0)
            .map(|(&(tag, tx, rx), p)| (tag, tx, rx, p.attempts_in_roi))
            .collect();
        pairs.sort_unstable();
        let mut receivers: Vec<(u64, UeId)> = pairs.iter().map(|p| (p.0, p.2)).collect();
        receivers.sort_unstable();
        receivers.dedup();
        BlindReport { pairs, blind_ues: receivers.len() }
    }
}

/// Per-bin DCC minus baseline over the bins both runs populated.
pub fn gains(dcc: &MetricsStore, baseline: &MetricsStore) -> Result<Vec<Gain>, MetricsError> {
    if dcc.bin_width_m != baseline.bin_width_m {
        return Err(MetricsError::BinMismatch(dcc.bin_width_m, baseline.bin_width_m));
    }
    Ok(bin_gains(&dcc.pdr(), &baseline.pdr(), &dcc.slt(), &baseline.slt()))
}

fn bin_gains(pdr_d: &[BinValue], pdr_b: &[BinValue], slt_d: &[BinValue], slt_b: &[BinValue]) -> Vec<Gain> {
    let index = |v: &[BinValue]| v.iter().map(|b| (b.bin, *b)).collect::<BTreeMap<_, _>>();
    let (pb, sd, sb) = (index(pdr_b), index(slt_d), index(slt_b));
    pdr_d
        .iter()
        .filter_map(|d| {
            let b = pb.get(&d.bin)?;
            let slt = sd.get(&d.bin)?.value - sb.get(&d.bin)?.value;
            Some(Gain {
                bin: d.bin,
                lo_m: d.lo_m,
                hi_m: d.hi_m,
                pdr_pp: 100.0 * (d.value - b.value),
                slt_bytes_per_s: slt,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn store() -> MetricsStore {
        MetricsStore::new(&MetricsConfig::default(), 190, 0, 10_000)
    }

    fn stream(s: &mut MetricsStore, tx: UeId, rx: UeId, d: f64, times: &[u64], decoded: impl Fn(usize) -> bool) {
        for (i, &t) in times.iter().enumerate() {
            let kind = if decoded(i) { RxKind::Decoded } else { RxKind::Collided };
            s.record(tx, rx, d, t, kind);
        }
    }

    #[test]
    fn pdr_examples() {
        let mut s = store();
        let times: Vec<u64> = (0..10).map(|k| k * 100).collect();
        stream(&mut s, 1, 2, 30.0, &times, |i| i < 4);
        assert_eq!(s.pdr()[0].value, 0.4);

        let mut s = store();
        stream(&mut s, 1, 2, 10.0, &times, |_| true);
        stream(&mut s, 3, 4, 10.0, &times[..2], |_| false);
        let p = s.pdr();
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].value, p[0].n_pairs), (0.5, 2));
        assert_eq!((p[0].lo_m, p[0].hi_m), (0.0, 25.0));

        let pooled = MetricsStore { pair_averaged: false, ..s.clone() };
        assert_eq!(pooled.pdr()[0].value, 10.0 / 12.0);
    }

    #[test]
    fn ipg_examples() {
        let mut s = store();
        let times: Vec<u64> = (0..50).map(|k| 10_000 + k * 100).collect();
        stream(&mut s, 1, 2, 40.0, &times, |_| true);
        let st = s.ipg_stats();
        assert_eq!(st.p80_ms, Some(100));
        assert_eq!(st.bins, vec![(1, 100.0, 49)]);

        let mut s = store();
        stream(&mut s, 1, 2, 40.0, &[0, 100, 300], |_| true);
        assert_eq!(s.pair(1, 2).unwrap().mean_gap_ms(), Some(150.0));
        assert_eq!(s.ipg_stats().mean_ms, Some(150.0));
        assert_eq!(s.ipg_stats().ecdf, vec![(100, 0.5), (200, 1.0)]);
    }

    #[test]
    fn thinning_doubles_gaps() {
        let times: Vec<u64> = (0..200).map(|k| k * 100).collect();
        let mut s = store();
        stream(&mut s, 1, 2, 60.0, &times, |i| i % 2 == 0);
        let st = s.ipg_stats();
        assert_eq!(st.ecdf, vec![(200, 1.0)]);
        assert_eq!(st.p80_ms, Some(200));
    }

    #[test]
    fn slt_examples() {
        let times: Vec<u64> = (0..100).map(|k| k * 100).collect();
        let mut s = store();
        stream(&mut s, 1, 2, 60.0, &times, |_| true);
        assert!((s.slt()[0].value - 1900.0).abs() < 1e-9);

        let mut s = store();
        stream(&mut s, 1, 2, 60.0, &times, |_| false);
        assert_eq!(s.slt()[0].value, 0.0);

        let slow: Vec<u64> = (0..100).map(|k| k * 600).collect();
        let mut s = MetricsStore::new(&MetricsConfig::default(), 190, 0, 60_000);
        stream(&mut s, 1, 2, 60.0, &slow, |_| true);
        assert!((s.slt()[0].value - 316.667).abs() < 1.0);
    }

    #[test]
    fn blind_pairs() {
        let times: Vec<u64> = (0..10).map(|k| k * 100).collect();
        let mut s = store();
        stream(&mut s, 1, 2, 50.0, &times, |_| true);
        assert_eq!(s.blind_nodes().pairs, vec![]);
        stream(&mut s, 3, 2, 80.0, &times, |_| false);
        // Outside the region of interest: never blind.
        stream(&mut s, 4, 2, 300.0, &times, |_| false);
        let b = s.blind_nodes();
        assert_eq!(b.pairs, vec![(0, 3, 2, 10)]);
        assert_eq!(b.blind_ues, 1);
        assert!(s.slt().iter().all(|v| v.value >= 0.0));
        assert_eq!(s.pair(3, 2).unwrap().mean_gap_ms(), None);
    }

    #[test]
    fn gain_examples() {
        let times: Vec<u64> = (0..10).map(|k| k * 100).collect();
        let mut base = store();
        stream(&mut base, 1, 2, 200.0, &times, |i| i < 4);
        let mut dcc = store();
        stream(&mut dcc, 1, 2, 200.0, &times, |i| i < 6);
        let g = gains(&dcc, &base).unwrap();
        assert_eq!(g.len(), 1);
        assert!((g[0].pdr_pp - 20.0).abs() < 1e-9);
        assert!(gains(&base, &base).unwrap().iter().all(|g| g.pdr_pp == 0.0 && g.slt_bytes_per_s == 0.0));
        let other = MetricsStore::new(&MetricsConfig { bin_width_m: 50.0, ..MetricsConfig::default() }, 190, 0, 1);
        assert!(gains(&other, &base).is_err());
    }

    #[test]
    fn out_of_range_links_are_ignored() {
        let mut s = store();
        s.record(1, 2, 1500.0, 0, RxKind::BelowSensitivity);
        assert!(s.pdr().is_empty());
    }

    fn arb_store(tag: u64) -> impl Strategy<Value = MetricsStore> {
        proptest::collection::vec((0u32..4, 0u32..4, 0.0f64..400.0, any::<bool>()), 0..60).prop_map(move |ev| {
            let mut s = MetricsStore::new(&MetricsConfig::default(), 190, tag, 5000);
            for (i, (tx, rx, d, ok)) in ev.into_iter().enumerate() {
                let kind = if ok { RxKind::Decoded } else { RxKind::Collided };
                s.record(tx, rx, d, i as u64 * 10, kind);
            }
            s
        })
    }

    proptest! {
        #[test]
        fn merge_is_commutative_and_associative(a in arb_store(1), b in arb_store(2), c in arb_store(3)) {
            let mut ab = a.clone();
            ab.merge(&b).unwrap();
            let mut ba = b.clone();
            ba.merge(&a).unwrap();
            prop_assert_eq!(ab.pdr(), ba.pdr());
            prop_assert_eq!(ab.slt(), ba.slt());
            prop_assert_eq!(ab.ipg_stats(), ba.ipg_stats());
            prop_assert_eq!(ab.blind_nodes(), ba.blind_nodes());

            let mut ab_c = ab.clone();
            ab_c.merge(&c).unwrap();
            let mut bc = b.clone();
            bc.merge(&c).unwrap();
            let mut a_bc = a.clone();
            a_bc.merge(&bc).unwrap();
            prop_assert_eq!(ab_c.pdr(), a_bc.pdr());
            prop_assert_eq!(ab_c.ipg_stats(), a_bc.ipg_stats());
        }

        #[test]
        fn pdr_and_ecdf_are_bounded(s in arb_store(0)) {
            for b in s.pdr() {
                prop_assert!((0.0..=1.0).contains(&b.value));
            }
            let st = s.ipg_stats();
            let mut prev = 0.0;
            for (_, f) in &st.ecdf {
                prop_assert!(*f >= prev && *f <= 1.0);
                prev = *f;
            }
            if let Some(p80) = st.p80_ms {
                let at = st.ecdf.iter().find(|e| e.0 == p80).unwrap().1;
                prop_assert!(at >= 0.8);
                prop_assert!(st.ecdf.iter().filter(|e| e.0 < p80).all(|e| e.1 < 0.8));
            }
            for (_, p) in s.pairs() {
                for (_, c) in &p.bins {
                    prop_assert!(c.rx <= c.tx);
                }
            }
        }
    }
}
