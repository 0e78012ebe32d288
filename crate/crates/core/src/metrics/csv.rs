//! CSV rendering. Floats use six significant digits in `%g` style.

use super::{BinValue, BlindReport, Gain, IpgStats, MetricsStore, TimeseriesRow};
use std::fmt::Write;

/// `%g` with six significant digits: fixed notation for exponents in
/// [-4, 6), scientific otherwise, trailing zeros removed.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_g).unwrap_or_default()
}

fn bins_csv(header: &str, rows: &[BinValue]) -> String {
    let mut out = format!("bin_lo_m,bin_hi_m,{header},n_pairs\n");
    for b in rows {
        let _ = writeln!(out, "{},{},{},{}", fmt_g(b.lo_m), fmt_g(b.hi_m), fmt_g(b.value), b.n_pairs);
    }
    out
}

pub fn pdr_csv(store: &MetricsStore) -> String {
    bins_csv("pdr", &store.pdr())
}

pub fn slt_csv(store: &MetricsStore) -> String {
    bins_csv("slt_bytes_per_s", &store.slt())
}

/// Three record types share the columns: `bin_mean` rows carry a bin and
/// its mean gap, `ecdf` rows a gap and its cumulative fraction, and the
/// single `p80` row the 80th-percentile gap.
pub fn ipg_csv(store: &MetricsStore) -> String {
    let IpgStats { bins, ecdf, p80_ms, .. } = store.ipg_stats();
    let mut out = String::from("record,bin_lo_m,bin_hi_m,ipg_ms,value,count\n");
    for (bin, mean, count) in bins {
        let lo = bin as f64 * store.bin_width_m;
        let _ = writeln!(out, "bin_mean,{},{},{},,{count}", fmt_g(lo), fmt_g(lo + store.bin_width_m), fmt_g(mean));
    }
    for (gap, frac) in ecdf {
        let _ = writeln!(out, "ecdf,,,{gap},{},", fmt_g(frac));
    }
    if let Some(p80) = p80_ms {
        let _ = writeln!(out, "p80,,,{p80},0.8,");
    }
    out
}

pub fn blind_nodes_csv(report: &BlindReport) -> String {
    let mut out = String::from("run_tag,tx_ue,rx_ue,tx_count\n");
    for (tag, tx, rx, n) in &report.pairs {
        let _ = writeln!(out, "{tag},{tx},{rx},{n}");
    }
    out
}

pub fn timeseries_csv(rows: &[TimeseriesRow]) -> String {
    let mut out = String::from("t_s,mean_cbp_pct,mean_power_dbm,mean_itt_ms\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_g(r.t_s),
            opt(r.mean_cbp_pct),
            fmt_g(r.mean_power_dbm),
            fmt_g(r.mean_itt_ms)
        );
    }
    out
}

/// One line of a sweep's gain table.
#[derive(Debug, Clone, PartialEq)]
pub struct GainRow {
    pub scenario: String,
    pub scheme: String,
    pub gain: Gain,
    pub n_seeds: usize,
}

pub fn gains_csv(rows: &[GainRow]) -> String {
    let mut out = String::from("scenario,scheme,bin_lo_m,bin_hi_m,pdr_gain_pp,slt_gain_bytes_per_s,n_seeds\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.scenario,
            r.scheme,
            fmt_g(r.gain.lo_m),
            fmt_g(r.gain.hi_m),
            fmt_g(r.gain.pdr_pp),
            fmt_g(r.gain.slt_bytes_per_s),
            r.n_seeds
        );
    }
    out
}

pub fn key_value_csv(rows: &[(&str, String)]) -> String {
    let mut out = String::from("key,value\n");
    for (k, v) in rows {
        let _ = writeln!(out, "{k},{v}");
    }
    out
}
