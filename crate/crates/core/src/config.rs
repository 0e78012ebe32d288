//! The resolved run configuration, one section per subsystem.

use crate::channel::ChannelModel;
use crate::dcc::DccConfig;
use crate::metrics::MetricsConfig;
use crate::mobility::ScenarioConfig;
use crate::sps::SpsConfig;
use serde::{Deserialize, Serialize};

/// How much of the event stream a run keeps in memory. The digest covers
/// every record regardless.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LogMode {
    #[default]
    Digest,
    TxOnly,
    Full,
}

/// The `[run]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Name of the scheme preset the `[dcc]` section was derived from.
    pub scheme: String,
    pub seed: u64,
    pub duration_s: f64,
    pub warmup_s: f64,
    pub subchannels: u16,
    pub payload_bytes: u32,
    /// Recorded only; reception is SINR-threshold abstracted.
    pub mcs_index: u8,
    pub mobility_tick_ms: u32,
    pub event_log: LogMode,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            scheme: "baseline".to_string(),
            seed: 1,
            duration_s: 120.0,
            warmup_s: 10.0,
            subchannels: 2,
            payload_bytes: 190,
            mcs_index: 5,
            mobility_tick_ms: 100,
            event_log: LogMode::Digest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub scenario: ScenarioConfig,
    pub channel: ChannelModel,
    pub sps: SpsConfig,
    pub dcc: DccConfig,
    pub metrics: MetricsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run: RunSection::default(),
            scenario: ScenarioConfig::default(),
            channel: ChannelModel::default(),
            sps: SpsConfig::default(),
            dcc: DccConfig { enabled: false, ..DccConfig::default() },
            metrics: MetricsConfig::default(),
        }
    }
}

/// A config violation anchored at a dotted key such as `dcc.range.p_min_dbm`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

impl RunConfig {
    pub fn duration_ms(&self) -> u64 {
        (self.run.duration_s * 1000.0).round() as u64
    }

    pub fn warmup_ms(&self) -> u64 {
        (self.run.warmup_s * 1000.0).round() as u64
    }

    /// Every violation across all sections.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |section: &str, list: Vec<(&'static str, String)>| {
            for (key, message) in list {
                out.push(Violation { key: format!("{section}.{key}"), message });
            }
        };
        let r = &self.run;
        let mut run = Vec::new();
        if !(r.duration_s > 0.0) {
            run.push(("duration_s", "must be > 0".to_string()));
        }
        if !(r.warmup_s >= 0.0) || r.warmup_s >= r.duration_s {
            run.push((
                "warmup_s",
                format!("run.warmup_s ({}) must be >= 0 and < run.duration_s ({})", r.warmup_s, r.duration_s),
            ));
        }
        if r.subchannels == 0 {
            run.push(("subchannels", "must be >= 1".to_string()));
        }
        if r.mobility_tick_ms == 0 {
            run.push(("mobility_tick_ms", "must be > 0".to_string()));
        }
        push("run", run);
        push("scenario", self.scenario.violations());
        push("channel", self.channel.violations());
        push("sps", self.sps.violations());
        push("dcc", self.dcc.violations());
        push("metrics", self.metrics.violations());
        if self.dcc.cbp_window_ms as u64 > self.sps.sensing_window_ms as u64 {
            out.push(Violation {
                key: "dcc.cbp_window_ms".to_string(),
                message: format!(
                    "dcc.cbp_window_ms ({}) exceeds sps.sensing_window_ms ({})",
                    self.dcc.cbp_window_ms, self.sps.sensing_window_ms
                ),
            });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        assert_eq!(RunConfig::default().violations(), vec![]);
    }

    #[test]
    fn warmup_must_precede_end() {
        let mut cfg = RunConfig::default();
        cfg.run.warmup_s = 120.0;
        let v = cfg.violations();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].key, "run.warmup_s");
    }

    #[test]
    fn power_bounds_name_both_keys() {
        let mut cfg = RunConfig::default();
        cfg.dcc.range.p_min_dbm = 30.0;
        let v = cfg.violations();
        assert_eq!(v[0].key, "dcc.range.p_min_dbm");
        assert!(v[0].message.contains("p_max_dbm"));
    }
}
