use super::SpsError;
use crate::channel::RxMeasurement;
use crate::units::{dbm_to_mw, SubframeIndex, UeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotState {
    /// Subframe not observed (before the first observation or skipped).
    NoData,
    Sensed,
    /// The owner transmitted on `own_subchannel` and could not listen.
    Unsensed {
        own_subchannel: Option<u16>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensedReservation {
    pub source: UeId,
    pub subchannel: u16,
    pub rsrp_dbm: f64,
    /// Announced period; 0 means no further reservation.
    pub period_ms: u32,
}

/// What the owner learned in one subframe.
#[derive(Debug, Clone, Copy)]
pub enum Observation<'a> {
    /// One measurement per subchannel.
    Sensed(&'a [RxMeasurement]),
    Unsensed {
        own_subchannel: Option<u16>,
    },
}

/// Trailing window of per-subframe, per-subchannel sensing records.
///
/// Storage is a ring indexed by `subframe % span`, holding exactly
/// `min(elapsed, span)` subframes.
#[derive(Debug, Clone)]
pub struct SensingWindow {
    span: u64,
    subchannels: usize,
    newest: Option<u64>,
    len: u64,
    state: Vec<SlotState>,
    rssi_mw: Vec<f64>,
    reservations: Vec<Vec<SensedReservation>>,
}

impl SensingWindow {
    pub fn new(span_ms: u32, subchannels: u16) -> Self {
        let span = span_ms.max(1) as u64;
        SensingWindow {
            span,
            subchannels: subchannels as usize,
            newest: None,
            len: 0,
            state: vec![SlotState::NoData; span as usize],
            rssi_mw: vec![0.0; span as usize * subchannels as usize],
            reservations: vec![Vec::new(); span as usize],
        }
    }

    pub fn span(&self) -> u64 {
        self.span
    }

    pub fn subchannels(&self) -> u16 {
        self.subchannels as u16
    }

    /// Number of stored subframes.
    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn newest(&self) -> Option<SubframeIndex> {
        self.newest.map(SubframeIndex)
    }

    /// Oldest stored subframe.
    pub fn oldest(&self) -> Option<SubframeIndex> {
        self.newest.map(|n| SubframeIndex(n + 1 - self.len))
    }

    pub fn contains(&self, j: u64) -> bool {
        match self.newest {
            Some(n) => j <= n && j + self.len > n,
            None => false,
        }
    }

    fn slot(&self, j: u64) -> usize {
        (j % self.span) as usize
    }

    pub fn state(&self, j: u64) -> SlotState {
        if self.contains(j) {
            self.state[self.slot(j)]
        } else {
            SlotState::NoData
        }
    }

    /// S-RSSI in mW, `None` unless the subframe was sensed.
    pub fn rssi_mw(&self, j: u64, subchannel: u16) -> Option<f64> {
        match self.state(j) {
            SlotState::Sensed => Some(self.rssi_mw[self.slot(j) * self.subchannels + subchannel as usize]),
            _ => None,
        }
    }

    pub fn reservations_at(&self, j: u64) -> &[SensedReservation] {
        if self.contains(j) {
            &self.reservations[self.slot(j)]
        } else {
            &[]
        }
    }

    /// Stored subframes, oldest first.
    pub fn subframes(&self) -> impl Iterator<Item = u64> + '_ {
        let (lo, hi) = match self.newest {
            Some(n) => (n + 1 - self.len, n + 1),
            None => (0, 0),
        };
        lo..hi
    }

    /// Stores the observation for subframe `n`, evicting anything older than
    /// the span. Re-recording the newest subframe overwrites it; skipped
    /// subframes are stored as [`SlotState::NoData`].
    pub fn record_observation(&mut self, n: SubframeIndex, obs: Observation<'_>) -> Result<(), SpsError> {
        let n = n.0;
        if let Observation::Sensed(m) = obs {
            if m.len() != self.subchannels {
                return Err(SpsError::SubchannelMismatch { got: m.len(), expected: self.subchannels });
            }
        }
        match self.newest {
            Some(newest) if n < newest => return Err(SpsError::OutOfOrder { got: n, newest }),
            Some(newest) if n > newest => {
                let gap = (n - newest - 1).min(self.span);
                for j in (n - gap)..n {
                    self.clear_slot(j, SlotState::NoData);
                }
                self.len = (self.len + n - newest).min(self.span);
            }
            Some(_) => {}
            None => self.len = 1,
        }
        self.newest = Some(n);

        match obs {
            Observation::Unsensed { own_subchannel } => {
                self.clear_slot(n, SlotState::Unsensed { own_subchannel });
            }
            Observation::Sensed(measurements) => {
                self.clear_slot(n, SlotState::Sensed);
                let slot = self.slot(n);
                for (s, m) in measurements.iter().enumerate() {
                    self.rssi_mw[slot * self.subchannels + s] = dbm_to_mw(m.srssi).value();
                    for d in &m.decoded {
                        self.reservations[slot].push(SensedReservation {
                            source: d.ue,
                            subchannel: s as u16,
                            rsrp_dbm: d.rsrp.0,
                            period_ms: d.reservation_period_ms,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn clear_slot(&mut self, j: u64, state: SlotState) {
        let slot = self.slot(j);
        self.state[slot] = state;
        self.reservations[slot].clear();
        for s in 0..self.subchannels {
            self.rssi_mw[slot * self.subchannels + s] = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::DecodedSource;
    use crate::units::{Csr, PowerDbm};

    fn meas(n: u64, rssi: f64) -> Vec<RxMeasurement> {
        (0..2).map(|s| RxMeasurement { csr: Csr::new(n, s), srssi: PowerDbm(rssi), decoded: vec![] }).collect()
    }

    #[test]
    fn first_measurement_gives_one_subframe() {
        let mut w = SensingWindow::new(1000, 2);
        assert!(w.is_empty());
        w.record_observation(SubframeIndex(7), Observation::Sensed(&meas(7, -90.0))).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w.oldest(), Some(SubframeIndex(7)));
        assert!((w.rssi_mw(7, 0).unwrap() - 1e-9).abs() < 1e-18);
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut w = SensingWindow::new(1000, 2);
        for n in 0..1000 {
            w.record_observation(SubframeIndex(n), Observation::Sensed(&meas(n, -90.0))).unwrap();
        }
        assert_eq!(w.len(), 1000);
        w.record_observation(SubframeIndex(1000), Observation::Sensed(&meas(1000, -80.0))).unwrap();
        assert_eq!(w.len(), 1000);
        assert_eq!(w.oldest(), Some(SubframeIndex(1)));
        assert_eq!(w.rssi_mw(0, 0), None);
        assert!(w.rssi_mw(1000, 1).is_some());
    }

    #[test]
    fn own_transmission_is_unsensed() {
        let mut w = SensingWindow::new(1000, 2);
        w.record_observation(SubframeIndex(3), Observation::Unsensed { own_subchannel: Some(1) }).unwrap();
        assert_eq!(w.state(3), SlotState::Unsensed { own_subchannel: Some(1) });
        assert_eq!(w.rssi_mw(3, 0), None);
        assert_eq!(w.rssi_mw(3, 1), None);
    }

    #[test]
    fn out_of_order_rejected_and_equal_overwrites() {
        let mut w = SensingWindow::new(1000, 2);
        w.record_observation(SubframeIndex(10), Observation::Sensed(&meas(10, -90.0))).unwrap();
        let err = w.record_observation(SubframeIndex(9), Observation::Sensed(&meas(9, -90.0)));
        assert_eq!(err, Err(SpsError::OutOfOrder { got: 9, newest: 10 }));
        w.record_observation(SubframeIndex(10), Observation::Unsensed { own_subchannel: None }).unwrap();
        assert_eq!(w.len(), 1);
        assert!(matches!(w.state(10), SlotState::Unsensed { .. }));
    }

    #[test]
    fn gaps_are_no_data_and_reservations_stored() {
        let mut w = SensingWindow::new(10, 2);
        let mut m = meas(0, -90.0);
        m[1].decoded.push(DecodedSource { ue: 4, rsrp: PowerDbm(-70.0), reservation_period_ms: 100 });
        w.record_observation(SubframeIndex(0), Observation::Sensed(&m)).unwrap();
        w.record_observation(SubframeIndex(5), Observation::Sensed(&meas(5, -90.0))).unwrap();
        assert_eq!(w.len(), 6);
        assert_eq!(w.state(3), SlotState::NoData);
        assert_eq!(w.reservations_at(0)[0].source, 4);
        assert_eq!(w.reservations_at(0)[0].subchannel, 1);
        // A jump beyond the span wipes everything.
        w.record_observation(SubframeIndex(100), Observation::Sensed(&meas(100, -90.0))).unwrap();
        assert_eq!(w.len(), 10);
        assert!(w.reservations_at(0).is_empty());
        assert_eq!(w.state(95), SlotState::NoData);
    }
}
