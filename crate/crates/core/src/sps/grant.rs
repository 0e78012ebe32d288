use super::{SpsConfig, SpsError};
use crate::rng::RngStream;
use crate::units::SubframeIndex;
use rand::Rng;

/// A semi-persistent reservation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grant {
    /// Next reserved subframe.
    pub next: SubframeIndex,
    pub subchannel: u16,
    pub period_ms: u32,
    /// Transmissions left before the keep/reselect decision.
    pub slrrc: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrantDecision {
    Keep(Grant),
    Reselect,
}

impl Grant {
    /// Fresh grant with an SLRRC drawn uniformly from `[slrrc_min, slrrc_max]`.
    pub fn new(next: SubframeIndex, subchannel: u16, period_ms: u32, cfg: &SpsConfig, rng: &mut RngStream) -> Self {
        Grant { next, subchannel, period_ms, slrrc: draw_slrrc(cfg, rng) }
    }
}

fn draw_slrrc(cfg: &SpsConfig, rng: &mut RngStream) -> u32 {
    rng.random_range(cfg.slrrc_min..=cfg.slrrc_max)
}

/// Counter bookkeeping after one transmission on the grant.
///
/// Only the counter changes here; the caller moves `next` forward.
pub fn on_transmission(g: Grant, rng: &mut RngStream, cfg: &SpsConfig) -> Result<GrantDecision, SpsError> {
    if g.slrrc == 0 {
        return Err(SpsError::ExhaustedGrant);
    }
    let slrrc = g.slrrc - 1;
    if slrrc > 0 {
        return Ok(GrantDecision::Keep(Grant { slrrc, ..g }));
    }
    if rng.random_bool(cfg.p_resel) {
        Ok(GrantDecision::Reselect)
    } else {
        Ok(GrantDecision::Keep(Grant { slrrc: draw_slrrc(cfg, rng), ..g }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Purpose;

    fn grant(slrrc: u32) -> Grant {
        Grant { next: SubframeIndex(10), subchannel: 0, period_ms: 100, slrrc }
    }

    #[test]
    fn decrements() {
        let mut rng = RngStream::new(0, Purpose::Test, 0);
        let d = on_transmission(grant(5), &mut rng, &SpsConfig::default()).unwrap();
        assert_eq!(d, GrantDecision::Keep(grant(4)));
        assert_eq!(rng.position(), 0);
    }

    #[test]
    fn forced_reselect() {
        let cfg = SpsConfig { p_resel: 1.0, ..SpsConfig::default() };
        let mut rng = RngStream::new(0, Purpose::Test, 0);
        for _ in 0..1000 {
            assert_eq!(on_transmission(grant(1), &mut rng, &cfg).unwrap(), GrantDecision::Reselect);
        }
    }

    #[test]
    fn exhausted_grant_is_an_error() {
        let mut rng = RngStream::new(0, Purpose::Test, 0);
        assert_eq!(on_transmission(grant(0), &mut rng, &SpsConfig::default()), Err(SpsError::ExhaustedGrant));
    }

    #[test]
    fn reselect_fraction_matches_p_resel() {
        let cfg = SpsConfig::default();
        let mut rng = RngStream::new(42, Purpose::Test, 0);
        let trials = 100_000;
        let mut reselect = 0;
        for _ in 0..trials {
            match on_transmission(grant(1), &mut rng, &cfg).unwrap() {
                GrantDecision::Reselect => reselect += 1,
                GrantDecision::Keep(g) => assert!((5..=15).contains(&g.slrrc)),
            }
        }
        let frac = reselect as f64 / trials as f64;
        assert!((frac - 0.2).abs() < 0.01, "{frac}");
    }

    #[test]
    fn mean_transmissions_between_reselections() {
        // Expected lifetime: E[SLRRC] / p_resel = 10 / 0.2 = 50 transmissions.
        let cfg = SpsConfig::default();
        let mut rng = RngStream::new(7, Purpose::Test, 0);
        let lifetimes = 10_000;
        let mut total = 0u64;
        for _ in 0..lifetimes {
            let mut g = Grant::new(SubframeIndex(0), 0, 100, &cfg, &mut rng);
            loop {
                total += 1;
                match on_transmission(g, &mut rng, &cfg).unwrap() {
                    GrantDecision::Keep(next) => g = next,
                    GrantDecision::Reselect => break,
                }
            }
        }
        let mean = total as f64 / lifetimes as f64;
        assert!((mean - 50.0).abs() / 50.0 < 0.05, "{mean}");
    }
}
