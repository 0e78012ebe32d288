//! Named scenario and congestion-control presets.

use crate::config::RunConfig;
use crate::dcc::{DccConfig, RangeControlConfig, RateControlConfig};
use crate::mobility::ScenarioConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioPreset {
    pub name: &'static str,
    pub vehicle_count: u32,
    pub density_veh_per_km_lane: f64,
    pub speed_kmh: f64,
    pub road_length_km: f64,
    pub duration_s: f64,
}

const FULL_SCALE: [(&str, u32, f64, f64); 5] = [
    ("freeway-high", 300, 7.0, 140.0),
    ("freeway-low", 600, 14.0, 70.0),
    ("urban-medium", 1200, 28.0, 15.0),
    ("urban-high", 2400, 56.0, 15.0),
    ("urban-ultrahigh", 4800, 111.0, 15.0),
];

/// The full-scale presets followed by their `-mini` desk-scale variants
/// (a tenth of the road, a tenth of the vehicles capped at 400, 20 s).
pub fn scenario_presets() -> Vec<ScenarioPreset> {
    let full = FULL_SCALE.iter().map(|&(name, count, density, speed)| ScenarioPreset {
        name,
        vehicle_count: count,
        density_veh_per_km_lane: density,
        speed_kmh: speed,
        road_length_km: 3.6,
        duration_s: 120.0,
    });
    let mini = FULL_SCALE.iter().map(|&(name, count, _, speed)| {
        let vehicles = (count / 10).min(400);
        ScenarioPreset {
            name: mini_name(name),
            vehicle_count: vehicles,
            density_veh_per_km_lane: vehicles as f64 / (0.36 * 12.0),
            speed_kmh: speed,
            road_length_km: 0.36,
            duration_s: 20.0,
        }
    });
    full.chain(mini).collect()
}

fn mini_name(name: &str) -> &'static str {
    match name {
        "freeway-high" => "freeway-high-mini",
        "freeway-low" => "freeway-low-mini",
        "urban-medium" => "urban-medium-mini",
        "urban-high" => "urban-high-mini",
        _ => "urban-ultrahigh-mini",
    }
}

pub fn scenario_preset(name: &str) -> Option<ScenarioPreset> {
    scenario_presets().into_iter().find(|p| p.name == name)
}

impl ScenarioPreset {
    pub fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            name: self.name.to_string(),
            vehicle_count: self.vehicle_count,
            density_veh_per_km_lane: self.density_veh_per_km_lane,
            speed_kmh: self.speed_kmh,
            road_length_km: self.road_length_km,
            ..ScenarioConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemePreset {
    pub name: &'static str,
    pub description: &'static str,
    pub enabled: bool,
    pub p_max_dbm: f64,
    pub p_min_dbm: f64,
    pub u_max_pct: f64,
    pub u_min_pct: f64,
    pub density_coefficient_veh: f64,
    /// SLRRC range override.
    pub slrrc: Option<(u32, u32)>,
}

const fn scheme(
    name: &'static str,
    description: &'static str,
    p: (f64, f64),
    u: (f64, f64),
    b: f64,
    slrrc: Option<(u32, u32)>,
) -> SchemePreset {
    SchemePreset {
        name,
        description,
        enabled: true,
        p_max_dbm: p.0,
        p_min_dbm: p.1,
        u_max_pct: u.0,
        u_min_pct: u.1,
        density_coefficient_veh: b,
        slrrc,
    }
}

pub const SCHEME_PRESETS: [SchemePreset; 9] = [
    SchemePreset {
        enabled: false,
        ..scheme("baseline", "no congestion control: 100 ms, 23 dBm", (23.0, 10.0), (80.0, 50.0), 25.0, None)
    },
    scheme("dcc-std", "standard rate and range control", (23.0, 10.0), (80.0, 50.0), 25.0, None),
    scheme("dcc-1", "rate control only", (23.0, 23.0), (80.0, 50.0), 25.0, None),
    scheme("dcc-2", "wider power range, earlier onset", (23.0, 10.0), (50.0, 30.0), 25.0, None),
    scheme("dcc-3", "power down to 5 dBm", (23.0, 5.0), (50.0, 30.0), 25.0, None),
    scheme("dcc-4", "power down to 5 dBm, B = 35", (23.0, 5.0), (50.0, 30.0), 35.0, None),
    scheme("dcc-5", "power down to 5 dBm, B = 45", (23.0, 5.0), (50.0, 30.0), 45.0, None),
    scheme("dcc-6", "power down to 5 dBm, B = 55", (23.0, 5.0), (50.0, 30.0), 55.0, None),
    scheme("dcc-7", "power down to 0 dBm, B = 45, short reservations", (23.0, 0.0), (50.0, 30.0), 45.0, Some((1, 5))),
];

pub fn scheme_preset(name: &str) -> Option<&'static SchemePreset> {
    SCHEME_PRESETS.iter().find(|s| s.name == name)
}

impl SchemePreset {
    pub fn dcc(&self) -> DccConfig {
        DccConfig {
            enabled: self.enabled,
            rate: RateControlConfig {
                density_coefficient_veh: self.density_coefficient_veh,
                ..RateControlConfig::default()
            },
            range: RangeControlConfig {
                p_max_dbm: self.p_max_dbm,
                p_min_dbm: self.p_min_dbm,
                u_max_pct: self.u_max_pct,
                u_min_pct: self.u_min_pct,
                ..RangeControlConfig::default()
            },
            ..DccConfig::default()
        }
    }

    /// Writes this scheme into `cfg`, including the SLRRC override.
    pub fn apply(&self, cfg: &mut RunConfig) {
        cfg.run.scheme = self.name.to_string();
        cfg.dcc = self.dcc();
        if let Some((lo, hi)) = self.slrrc {
            cfg.sps.slrrc_min = lo;
            cfg.sps.slrrc_max = hi;
        }
    }
}

impl ScenarioPreset {
    /// Writes this scenario and its duration into `cfg`.
    pub fn apply(&self, cfg: &mut RunConfig) {
        cfg.scenario = self.scenario();
        cfg.run.duration_s = self.duration_s;
    }
}
