//! Highway geometry, scenario generation and vehicle kinematics.

use crate::rng::{Purpose, RngStream};
use crate::units::Position;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean-reverting speed noise, used only to exercise the PTE trigger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub enabled: bool,
    pub sigma_mps: f64,
    pub reversion_per_s: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig { enabled: false, sigma_mps: 0.5, reversion_per_s: 0.5 }
    }
}

/// The `[scenario]` config section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub vehicle_count: u32,
    /// Nominal density as quoted for the preset; informational.
    pub density_veh_per_km_lane: f64,
    pub speed_kmh: f64,
    pub road_length_km: f64,
    pub lanes: u16,
    pub lane_width_m: f64,
    /// Treat the road as a ring instead of respawning at the entry.
    pub wraparound: bool,
    pub perturbation: PerturbationConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "freeway-high".to_string(),
            vehicle_count: 300,
            density_veh_per_km_lane: 7.0,
            speed_kmh: 140.0,
            road_length_km: 3.6,
            lanes: 12,
            lane_width_m: 4.0,
            wraparound: false,
            perturbation: PerturbationConfig::default(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MobilityError {
    #[error("{per_lane} vehicles per lane on {length_m} m leaves less than 1 m headway")]
    JamDensity { per_lane: u32, length_m: f64 },
    #[error("scenario needs at least one lane and a positive road length")]
    EmptyRoad,
}

impl ScenarioConfig {
    pub fn road(&self) -> Road {
        Road {
            length_m: self.road_length_km * 1000.0,
            lanes: self.lanes,
            lane_width_m: self.lane_width_m,
            wraparound: self.wraparound,
        }
    }

    /// Vehicles in each lane; the remainder goes to the lowest lanes.
    pub fn per_lane_counts(&self) -> Vec<u32> {
        let lanes = self.lanes.max(1) as u32;
        let base = self.vehicle_count / lanes;
        let extra = self.vehicle_count % lanes;
        (0..lanes).map(|l| base + u32::from(l < extra)).collect()
    }

    /// Density actually realized by `vehicle_count`.
    pub fn realized_density(&self) -> f64 {
        self.vehicle_count as f64 / (self.road_length_km * self.lanes as f64)
    }

    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        if self.lanes == 0 {
            v.push(("lanes", "must be >= 1".to_string()));
        }
        if !(self.road_length_km > 0.0) {
            v.push(("road_length_km", "must be > 0".to_string()));
        }
        if !(self.speed_kmh >= 0.0) {
            v.push(("speed_kmh", "must be >= 0".to_string()));
        }
        if !(self.lane_width_m > 0.0) {
            v.push(("lane_width_m", "must be > 0".to_string()));
        }
        if self.lanes > 0 && self.road_length_km > 0.0 {
            let max = self.per_lane_counts().into_iter().max().unwrap_or(0);
            if max as f64 > self.road_length_km * 1000.0 {
                v.push(("vehicle_count", format!("{max} vehicles per lane exceed jam density (1 m headway)")));
            }
        }
        if self.perturbation.enabled
            && !(self.perturbation.sigma_mps >= 0.0 && self.perturbation.reversion_per_s >= 0.0)
        {
            v.push(("perturbation.sigma_mps", "perturbation parameters must be >= 0".to_string()));
        }
        v
    }
}

/// Straight multi-lane road, optionally closed into a ring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Road {
    pub length_m: f64,
    pub lanes: u16,
    pub lane_width_m: f64,
    pub wraparound: bool,
}

impl Road {
    /// Euclidean distance with lane offsets; along-road separation is taken
    /// the short way round on a ring.
    pub fn distance(&self, a: Position, b: Position) -> f64 {
        let mut dx = (a.x - b.x).abs();
        if self.wraparound {
            dx = dx.rem_euclid(self.length_m);
            dx = dx.min(self.length_m - dx);
        }
        dx.hypot(a.y - b.y)
    }

    /// Middle third of the road, boundaries inclusive.
    pub fn in_measurement_region(&self, p: Position) -> bool {
        let lo = self.length_m / 3.0;
        let hi = 2.0 * self.length_m / 3.0;
        p.x >= lo - 1e-9 && p.x <= hi + 1e-9
    }

    /// Lanes in the lower half travel towards +x.
    pub fn direction(&self, lane: u16) -> f64 {
        if lane < self.lanes.div_ceil(2) {
            1.0
        } else {
            -1.0
        }
    }

    fn wrap(&self, x: f64) -> f64 {
        let x = x.rem_euclid(self.length_m);
        if x >= self.length_m {
            0.0
        } else {
            x
        }
    }
}

pub fn in_measurement_region(p: Position, road: &Road) -> bool {
    road.in_measurement_region(p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vehicle {
    pub position: Position,
    /// Signed speed along the road.
    pub velocity_mps: f64,
    pub nominal_speed_mps: f64,
}

impl Vehicle {
    /// Position after coasting `dt` seconds at the current speed.
    pub fn coast(&self, dt: f64, road: &Road) -> Position {
        Position { x: road.wrap(self.position.x + self.velocity_mps * dt), ..self.position }
    }
}

pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / 3.6
}

/// Uniform random placement per lane at the configured count; half the
/// lanes per direction, all at the nominal speed.
pub fn generate_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<Vec<Vehicle>, MobilityError> {
    let road = cfg.road();
    if cfg.lanes == 0 || !(road.length_m > 0.0) {
        return Err(MobilityError::EmptyRoad);
    }
    let speed = kmh_to_mps(cfg.speed_kmh);
    let mut out = Vec::with_capacity(cfg.vehicle_count as usize);
    for (lane, count) in cfg.per_lane_counts().into_iter().enumerate() {
        if count as f64 > road.length_m {
            return Err(MobilityError::JamDensity { per_lane: count, length_m: road.length_m });
        }
        let lane = lane as u16;
        let mut rng = RngStream::new(seed, Purpose::Placement, lane as u64);
        let dir = road.direction(lane);
        for _ in 0..count {
            let x = rng.random_range(0.0..road.length_m);
            out.push(Vehicle {
                position: Position::new(x, lane, cfg.lane_width_m),
                velocity_mps: dir * speed,
                nominal_speed_mps: speed,
            });
        }
    }
    Ok(out)
}

/// Advances vehicles by `dt` seconds. Vehicles leaving the road re-enter
/// at the other end of their lane, so the population is conserved.
pub fn step(vehicles: &mut [Vehicle], dt: f64, road: &Road, perturbation: &PerturbationConfig, rngs: &mut [RngStream]) {
    for (i, v) in vehicles.iter_mut().enumerate() {
        if perturbation.enabled && v.nominal_speed_mps > 0.0 {
            let dir = road.direction(v.position.lane);
            let speed = v.velocity_mps.abs();
            let z: f64 = StandardNormal.sample(&mut rngs[i]);
            let next = speed
                + perturbation.reversion_per_s * (v.nominal_speed_mps - speed) * dt
                + perturbation.sigma_mps * dt.sqrt() * z;
            v.velocity_mps = dir * next.clamp(0.0, 1.2 * v.nominal_speed_mps);
        }
        v.position.x = road.wrap(v.position.x + v.velocity_mps * dt);
    }
}

/// Per-vehicle mobility streams.
pub fn mobility_streams(seed: u64, count: usize) -> Vec<RngStream> {
    (0..count).map(|i| RngStream::new(seed, Purpose::Mobility, i as u64)).collect()
}
