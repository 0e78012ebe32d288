//! Propagation and reception.
//!
//! Log-distance pathloss (optionally dual-slope), log-normal shadowing,
//! optional Nakagami-m fading, and SINR-threshold decoding with
//! half-duplex. Also produces the per-subchannel S-RSSI and per-source
//! PSSCH-RSRP measurements that sensing consumes.

use crate::rng::{Purpose, RngStream};
use crate::units::{dbm_to_mw, mw_to_dbm, Csr, Position, PowerDbm, PowerMw, UeId};
use rand_distr::{Distribution, Gamma, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShadowingMode {
    /// Fresh draw per (tx, rx, subframe).
    Iid,
    /// One draw per unordered UE pair for the whole run.
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FadingKind {
    None,
    Nakagami,
}

/// Channel and receiver parameters. Also the `[channel]` config section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelModel {
    pub reference_distance_m: f64,
    pub reference_loss_db: f64,
    /// Exponent up to `breakpoint_m`.
    pub pathloss_exponent: f64,
    pub breakpoint_m: f64,
    /// Exponent beyond `breakpoint_m`. Equal to `pathloss_exponent` for a
    /// single-slope model.
    pub far_exponent: f64,
    pub shadowing_sigma_db: f64,
    pub shadowing_mode: ShadowingMode,
    pub fading: FadingKind,
    pub nakagami_m: f64,
    pub noise_floor_dbm: f64,
    pub sensitivity_dbm: f64,
    pub sinr_threshold_db: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            reference_distance_m: 1.0,
            // Free-space loss at 1 m for a 5.86 GHz carrier.
            reference_loss_db: 47.86,
            pathloss_exponent: 2.0,
            breakpoint_m: 100.0,
            far_exponent: 3.8,
            shadowing_sigma_db: 3.0,
            shadowing_mode: ShadowingMode::Iid,
            fading: FadingKind::None,
            nakagami_m: 1.0,
            // Thermal noise over one 5 MHz subchannel plus a 9 dB noise figure.
            noise_floor_dbm: -98.0,
            sensitivity_dbm: -95.0,
            sinr_threshold_db: 2.5,
        }
    }
}

impl ChannelModel {
    /// Noise-free, shadowing-free, fading-free variant; used by tests.
    pub fn deterministic(self) -> Self {
        ChannelModel { shadowing_sigma_db: 0.0, fading: FadingKind::None, ..self }
    }

    pub fn pathloss(&self, d: f64) -> f64 {
        pathloss(d, self)
    }

    /// Invariant violations as `(key, message)` pairs.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        if !(self.reference_distance_m > 0.0) {
            v.push(("reference_distance_m", "must be > 0".to_string()));
        }
        if !(self.pathloss_exponent > 0.0) {
            v.push(("pathloss_exponent", "must be > 0".to_string()));
        }
        if !(self.far_exponent > 0.0) {
            v.push(("far_exponent", "must be > 0".to_string()));
        }
        if self.breakpoint_m < self.reference_distance_m {
            v.push(("breakpoint_m", "must be >= reference_distance_m".to_string()));
        }
        if !(self.shadowing_sigma_db >= 0.0) {
            v.push(("shadowing_sigma_db", "must be >= 0".to_string()));
        }
        if self.fading == FadingKind::Nakagami && !(self.nakagami_m >= 0.5) {
            v.push(("nakagami_m", "must be >= 0.5".to_string()));
        }
        if self.sensitivity_dbm < self.noise_floor_dbm {
            v.push((
                "sensitivity_dbm",
                format!(
                    "sensitivity_dbm ({}) must be >= noise_floor_dbm ({})",
                    self.sensitivity_dbm, self.noise_floor_dbm
                ),
            ));
        }
        v
    }
}

/// Pathloss in dB. Distances below the reference distance clamp to the
/// reference loss.
pub fn pathloss(d: f64, m: &ChannelModel) -> f64 {
    let d0 = m.reference_distance_m;
    let d = d.max(d0);
    if d <= m.breakpoint_m {
        m.reference_loss_db + 10.0 * m.pathloss_exponent * (d / d0).log10()
    } else {
        m.reference_loss_db
            + 10.0 * m.pathloss_exponent * (m.breakpoint_m / d0).log10()
            + 10.0 * m.far_exponent * (d / m.breakpoint_m).log10()
    }
}

pub fn received_power(tx: PowerDbm, d: f64, shadow_db: f64, fade_db: f64, m: &ChannelModel) -> PowerDbm {
    PowerDbm(tx.0 - pathloss(d, m) - shadow_db - fade_db)
}

/// Draws shadowing and fading losses from counter-keyed streams, so a link's
/// draw depends only on `(seed, tx, rx, subframe)`.
#[derive(Debug, Clone)]
pub struct LinkSampler {
    seed: u64,
    mode: ShadowingMode,
    shadow: Option<Normal<f64>>,
    fading: Option<Gamma<f64>>,
}

impl LinkSampler {
    pub fn new(seed: u64, m: &ChannelModel) -> Self {
        let shadow =
            (m.shadowing_sigma_db > 0.0).then(|| Normal::new(0.0, m.shadowing_sigma_db).expect("sigma validated"));
        let fading = (m.fading == FadingKind::Nakagami)
            .then(|| Gamma::new(m.nakagami_m, 1.0 / m.nakagami_m).expect("m validated"));
        LinkSampler { seed, mode: m.shadowing_mode, shadow, fading }
    }

    pub fn shadow_db(&self, tx: UeId, rx: UeId, subframe: u64) -> f64 {
        let Some(normal) = &self.shadow else { return 0.0 };
        let mut rng = match self.mode {
            ShadowingMode::Iid => RngStream::keyed(self.seed, Purpose::Shadowing, &[tx as u64, rx as u64, subframe]),
            ShadowingMode::Static => {
                let (a, b) = if tx < rx { (tx, rx) } else { (rx, tx) };
                RngStream::keyed(self.seed, Purpose::Shadowing, &[a as u64, b as u64])
            }
        };
        normal.sample(&mut rng)
    }

    /// Fading loss in dB (positive = loss) from a unit-mean Nakagami power gain.
    pub fn fade_db(&self, tx: UeId, rx: UeId, subframe: u64) -> f64 {
        let Some(gamma) = &self.fading else { return 0.0 };
        let mut rng = RngStream::keyed(self.seed, Purpose::Fading, &[tx as u64, rx as u64, subframe]);
        let gain: f64 = gamma.sample(&mut rng).max(1e-30);
        -10.0 * gain.log10()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub ue: UeId,
    pub csr: Csr,
    pub power: PowerDbm,
    pub position: Position,
    /// Reservation period announced in the control information, 0 for a
    /// one-shot transmission.
    pub reservation_period_ms: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Receiver {
    pub ue: UeId,
    pub position: Position,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RxKind {
    Decoded,
    Collided,
    BelowSensitivity,
    HalfDuplexBlocked,
}

impl RxKind {
    pub const ALL: [RxKind; 4] =
        [RxKind::Decoded, RxKind::Collided, RxKind::BelowSensitivity, RxKind::HalfDuplexBlocked];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RxKind::Decoded => "decoded",
            RxKind::Collided => "collided",
            RxKind::BelowSensitivity => "below_sensitivity",
            RxKind::HalfDuplexBlocked => "half_duplex_blocked",
        }
    }
}

/// Resolution of one transmission at one receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkOutcome {
    /// Index into the transmission list passed to [`resolve_subframe`].
    pub tx_index: usize,
    pub kind: RxKind,
    pub distance_m: f64,
    pub rx_power: PowerDbm,
    pub sinr_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedSource {
    pub ue: UeId,
    pub rsrp: PowerDbm,
    pub reservation_period_ms: u32,
}

/// What a receiver measured on one subchannel during one subframe.
#[derive(Debug, Clone, PartialEq)]
pub struct RxMeasurement {
    pub csr: Csr,
    /// Total in-band power including noise.
    pub srssi: PowerDbm,
    pub decoded: Vec<DecodedSource>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverReport {
    pub ue: UeId,
    /// The receiver transmitted this subframe and sensed nothing.
    pub transmitting: bool,
    /// One entry per transmission from another UE.
    pub outcomes: Vec<LinkOutcome>,
    /// One entry per subchannel; empty when `transmitting`.
    pub measurements: Vec<RxMeasurement>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("transmissions span subframes {first} and {other}")]
    MixedSubframes { first: u64, other: u64 },
    #[error("subchannel {subchannel} out of range (have {subchannels})")]
    SubchannelOutOfRange { subchannel: u16, subchannels: u16 },
}

const PARALLEL_LINKS: usize = 4096;

/// Resolves every transmission of one subframe at every receiver.
///
/// Signal is the transmission's received power; interference is the mW sum
/// of all other arrivals on the same subchannel. A link decodes iff the
/// receiver is silent this subframe, the signal clears sensitivity, and the
/// SINR clears the threshold.
pub fn resolve_subframe<D>(
    model: &ChannelModel,
    sampler: &LinkSampler,
    transmissions: &[Transmission],
    receivers: &[Receiver],
    subchannels: u16,
    distance: D,
) -> Result<Vec<ReceiverReport>, ChannelError>
where
    D: Fn(Position, Position) -> f64 + Sync,
{
    let subframe = match transmissions.first() {
        Some(t) => t.csr.subframe.0,
        None => 0,
    };
    for t in transmissions {
        if t.csr.subframe.0 != subframe {
            return Err(ChannelError::MixedSubframes { first: subframe, other: t.csr.subframe.0 });
        }
        if t.csr.subchannel >= subchannels {
            return Err(ChannelError::SubchannelOutOfRange { subchannel: t.csr.subchannel, subchannels });
        }
    }

    let noise_mw = dbm_to_mw(PowerDbm(model.noise_floor_dbm)).value();
    let threshold_lin = 10f64.powf(model.sinr_threshold_db / 10.0);

    let resolve_one = |rx: &Receiver| -> ReceiverReport {
        let transmitting = transmissions.iter().any(|t| t.ue == rx.ue);
        let mut arrivals: Vec<(usize, f64, f64)> = Vec::with_capacity(transmissions.len());
        for (i, t) in transmissions.iter().enumerate() {
            if t.ue == rx.ue {
                continue;
            }
            let d = distance(t.position, rx.position);
            let p = received_power(
                t.power,
                d,
                sampler.shadow_db(t.ue, rx.ue, subframe),
                sampler.fade_db(t.ue, rx.ue, subframe),
                model,
            );
            arrivals.push((i, d, dbm_to_mw(p).value()));
        }

        let mut total = vec![0.0f64; subchannels as usize];
        for &(i, _, mw) in &arrivals {
            total[transmissions[i].csr.subchannel as usize] += mw;
        }

        let mut outcomes = Vec::with_capacity(arrivals.len());
        let mut measurements: Vec<RxMeasurement> = if transmitting {
            Vec::new()
        } else {
            (0..subchannels)
                .map(|s| RxMeasurement {
                    csr: Csr::new(subframe, s),
                    srssi: mw_to_dbm(PowerMw::new(total[s as usize] + noise_mw).expect("positive")),
                    decoded: Vec::new(),
                })
                .collect()
        };
        for &(i, d, signal) in &arrivals {
            let t = &transmissions[i];
            let s = t.csr.subchannel as usize;
            let interference = (total[s] - signal).max(0.0);
            let sinr = signal / (interference + noise_mw);
            let rx_power = mw_to_dbm(PowerMw::new(signal).unwrap_or(PowerMw::new(1e-300).unwrap()));
            let kind = if transmitting {
                RxKind::HalfDuplexBlocked
            } else if rx_power.0 < model.sensitivity_dbm {
                RxKind::BelowSensitivity
            } else if sinr < threshold_lin {
                RxKind::Collided
            } else {
                RxKind::Decoded
            };
            if kind == RxKind::Decoded {
                measurements[s].decoded.push(DecodedSource {
                    ue: t.ue,
                    rsrp: rx_power,
                    reservation_period_ms: t.reservation_period_ms,
                });
            }
            outcomes.push(LinkOutcome { tx_index: i, kind, distance_m: d, rx_power, sinr_db: 10.0 * sinr.log10() });
        }
        ReceiverReport { ue: rx.ue, transmitting, outcomes, measurements }
    };

    let reports = if transmissions.len() * receivers.len() >= PARALLEL_LINKS {
        receivers.par_iter().map(resolve_one).collect()
    } else {
        receivers.iter().map(resolve_one).collect()
    };
    Ok(reports)
}
