//! The per-subframe simulation loop.
//!
//! Within a subframe the order is fixed: mobility, control (density, CBP,
//! power), transmission of packets already waiting for this subframe and
//! the reservation counter, packet generation and resource selection,
//! channel resolution, then sensing and metrics. UEs are visited in id
//! order.

use crate::channel::{resolve_subframe, ChannelError, LinkSampler, Receiver, RxKind, RxMeasurement, Transmission};
use crate::config::{LogMode, RunConfig, Violation};
use crate::dcc::{
    count_neighbors, measure_cbp, should_transmit, update_power, update_pte, BroadcastState, DccState, KinematicState,
    PtePolicy,
};
use crate::metrics::{MetricsStore, TimeseriesRow};
use crate::mobility::{generate_scenario, mobility_streams, step, MobilityError, Road, Vehicle};
use crate::rng::{Purpose, RngStream};
use crate::sps::{
    compute_cr, cr_limit, on_transmission, select_in_window, select_resource, CalibrationTable, CrWindow, Grant,
    GrantDecision, Observation, SensingWindow, SpsError,
};
use crate::units::{Csr, Position, PowerDbm, SubframeIndex, UeId};
use rand::Rng;
use sha2::{Digest, Sha256};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Config(Vec<Violation>),
    #[error(transparent)]
    Mobility(#[from] MobilityError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Sps(#[from] SpsError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxEvent {
    pub subframe: u64,
    pub ue: UeId,
    pub subchannel: u16,
    pub power_dbm: f64,
    pub position: Position,
    /// Announced reservation period; 0 for a one-shot transmission.
    pub period_ms: u32,
    /// When the application generated the packet.
    pub generated_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RxOutcome {
    pub subframe: u64,
    /// Sequence number of the [`TxEvent`] this resolves.
    pub tx_seq: u64,
    pub tx_ue: UeId,
    pub rx_ue: UeId,
    pub kind: RxKind,
    pub distance_m: f64,
    pub rx_power_dbm: f64,
    pub sinr_db: f64,
}

/// Append-only event record with a running SHA-256 over every event.
#[derive(Debug, Clone)]
pub struct EventLog {
    mode: LogMode,
    tx: Vec<TxEvent>,
    rx: Vec<RxOutcome>,
    tx_count: u64,
    rx_count: u64,
    hasher: Sha256,
    buf: Vec<u8>,
}

const HASH_CHUNK: usize = 1 << 16;

impl EventLog {
    pub fn new(mode: LogMode) -> Self {
        EventLog {
            mode,
            tx: Vec::new(),
            rx: Vec::new(),
            tx_count: 0,
            rx_count: 0,
            hasher: Sha256::new(),
            buf: Vec::with_capacity(HASH_CHUNK + 128),
        }
    }

    fn flush_if_full(&mut self) {
        if self.buf.len() >= HASH_CHUNK {
            self.hasher.update(&self.buf);
            self.buf.clear();
        }
    }

    pub fn push_tx(&mut self, e: TxEvent) -> u64 {
        let b = &mut self.buf;
        b.push(b'T');
        b.extend_from_slice(&e.subframe.to_le_bytes());
        b.extend_from_slice(&e.ue.to_le_bytes());
        b.extend_from_slice(&e.subchannel.to_le_bytes());
        b.extend_from_slice(&e.power_dbm.to_bits().to_le_bytes());
        b.extend_from_slice(&e.position.x.to_bits().to_le_bytes());
        b.extend_from_slice(&e.position.lane.to_le_bytes());
        b.extend_from_slice(&e.period_ms.to_le_bytes());
        b.extend_from_slice(&e.generated_at.to_le_bytes());
        self.flush_if_full();
        if self.mode != LogMode::Digest {
            self.tx.push(e);
        }
        self.tx_count += 1;
        self.tx_count - 1
    }

    pub fn push_rx(&mut self, o: RxOutcome) {
        let b = &mut self.buf;
        b.push(b'R');
        b.extend_from_slice(&o.tx_seq.to_le_bytes());
        b.extend_from_slice(&o.rx_ue.to_le_bytes());
        b.push(o.kind.index() as u8);
        b.extend_from_slice(&o.distance_m.to_bits().to_le_bytes());
        b.extend_from_slice(&o.rx_power_dbm.to_bits().to_le_bytes());
        b.extend_from_slice(&o.sinr_db.to_bits().to_le_bytes());
        self.flush_if_full();
        if self.mode == LogMode::Full {
            self.rx.push(o);
        }
        self.rx_count += 1;
    }

    /// Hex SHA-256 of everything logged so far.
    pub fn digest(&self) -> String {
        let mut h = self.hasher.clone();
        h.update(&self.buf);
        h.update(self.tx_count.to_le_bytes());
        h.update(self.rx_count.to_le_bytes());
        hex::encode(h.finalize())
    }

    pub fn mode(&self) -> LogMode {
        self.mode
    }

    /// Retained transmissions; empty in digest mode.
    pub fn tx_events(&self) -> &[TxEvent] {
        &self.tx
    }

    /// Retained outcomes; only kept in full mode.
    pub fn rx_outcomes(&self) -> &[RxOutcome] {
        &self.rx
    }

    pub fn tx_count(&self) -> u64 {
        self.tx_count
    }

    pub fn rx_count(&self) -> u64 {
        self.rx_count
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    pub tx_events: u64,
    pub one_shot_tx: u64,
    pub packets_generated: u64,
    pub pte_triggers: u64,
    /// Packets replaced by a newer one before they were sent.
    pub superseded: u64,
    /// Reserved occurrences passed with nothing to send.
    pub skipped_opportunities: u64,
    pub cr_drops: u64,
    pub selections: u64,
    pub escalations: u64,
    pub reselections: u64,
    pub queue_delay_sum_ms: u64,
    /// Outcome counts by [`RxKind::index`].
    pub outcomes: [u64; 4],
    /// The same, per simulated second.
    pub outcomes_per_second: Vec<[u64; 4]>,
}

impl RunStats {
    pub fn mean_queue_delay_ms(&self) -> Option<f64> {
        (self.tx_events > 0).then(|| self.queue_delay_sum_ms as f64 / self.tx_events as f64)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: EventLog,
    pub metrics: MetricsStore,
    pub timeseries: Vec<TimeseriesRow>,
    pub stats: RunStats,
    pub vehicles: usize,
}

#[derive(Debug, Clone, Copy)]
struct Packet {
    generated: u64,
}

struct Ue {
    window: SensingWindow,
    dcc: DccState,
    grant: Option<Grant>,
    pending: Option<Packet>,
    one_shot: Option<Csr>,
    phase: u64,
    selection_rng: RngStream,
    counter_rng: RngStream,
    /// Own transmissions still inside the CR window.
    history: VecDeque<(u64, u16)>,
}

/// Along-road separation taken modulo the road length. Respawn at the
/// entry is a wrap in x, so neighbours' extrapolations stay comparable.
fn wrapped_distance(road: &Road) -> impl Fn(Position, Position) -> f64 + '_ {
    move |a, b| {
        let dx = (a.x - b.x).abs().rem_euclid(road.length_m);
        dx.min(road.length_m - dx).hypot(a.y - b.y)
    }
}

/// Runs one simulation.
///
/// Packets generated before the end are still sent at their reserved
/// occurrence after it; metrics only cover `[warmup, duration)`.
pub fn run(cfg: &RunConfig) -> Result<RunOutput, EngineError> {
    let violations = cfg.violations();
    if !violations.is_empty() {
        return Err(EngineError::Config(violations));
    }
    let seed = cfg.run.seed;
    let road = cfg.scenario.road();
    let mut vehicles: Vec<Vehicle> = generate_scenario(&cfg.scenario, seed)?;
    let mut mobility_rngs = mobility_streams(seed, vehicles.len());
    let sampler = LinkSampler::new(seed, &cfg.channel);
    let subchannels = cfg.run.subchannels;
    let duration = cfg.duration_ms();
    let warmup = cfg.warmup_ms();
    let tick = cfg.run.mobility_tick_ms as u64;
    let dcc_cfg = &cfg.dcc;
    let sps = &cfg.sps;
    let pte_active = dcc_cfg.enabled && dcc_cfg.pte.enabled;
    let measure_cbp_for_control = dcc_cfg.enabled || dcc_cfg.cr_limit.enabled;
    let calibration: Option<CalibrationTable> =
        if dcc_cfg.cr_limit.enabled { Some(dcc_cfg.cr_limit.table()?) } else { None };
    let ring = wrapped_distance(&road);
    let road_distance = |a: Position, b: Position| road.distance(a, b);

    let mut ues: Vec<Ue> = (0..vehicles.len())
        .map(|i| {
            let id = i as u64;
            Ue {
                window: SensingWindow::new(sps.sensing_window_ms, subchannels),
                dcc: DccState::new(dcc_cfg),
                grant: None,
                pending: None,
                one_shot: None,
                phase: RngStream::new(seed, Purpose::AppPhase, id).random_range(0..dcc_cfg.baseline_itt_ms as u64),
                selection_rng: RngStream::new(seed, Purpose::Selection, id),
                counter_rng: RngStream::new(seed, Purpose::Reselection, id),
                history: VecDeque::new(),
            }
        })
        .collect();

    let mut log = EventLog::new(cfg.run.event_log);
    let mut metrics = MetricsStore::new(&cfg.metrics, cfg.run.payload_bytes, seed, duration - warmup);
    let mut stats =
        RunStats { outcomes_per_second: vec![[0; 4]; duration.div_ceil(1000) as usize], ..RunStats::default() };
    let mut timeseries = Vec::new();

    let mut positions: Vec<Position> = vehicles.iter().map(|v| v.position).collect();
    let mut receivers: Vec<Receiver> =
        positions.iter().enumerate().map(|(i, &p)| Receiver { ue: i as UeId, position: p }).collect();
    let mut in_region: Vec<bool> = positions.iter().map(|&p| road.in_measurement_region(p)).collect();
    let mut last_tick = 0u64;
    let noise = PowerDbm(cfg.channel.noise_floor_dbm);

    let mut n = 0u64;
    loop {
        let draining = n >= duration;
        if draining && ues.iter().all(|u| u.pending.is_none()) {
            break;
        }
        let now = SubframeIndex(n);

        // Mobility.
        if n > 0 && n.is_multiple_of(tick) {
            step(&mut vehicles, tick as f64 / 1000.0, &road, &cfg.scenario.perturbation, &mut mobility_rngs);
            last_tick = n;
            for (i, v) in vehicles.iter().enumerate() {
                positions[i] = v.position;
                receivers[i].position = v.position;
                in_region[i] = road.in_measurement_region(v.position);
            }
        }

        // Control.
        if dcc_cfg.enabled && n.is_multiple_of(dcc_cfg.rate.density_interval_ms as u64) {
            for (i, ue) in ues.iter_mut().enumerate() {
                let count = count_neighbors(i, &positions, dcc_cfg.rate.neighbor_radius_m, road_distance);
                ue.dcc.observe_density(count, &dcc_cfg.rate);
            }
        }
        if measure_cbp_for_control && n > 0 && n.is_multiple_of(dcc_cfg.range.power_interval_ms as u64) {
            for ue in &mut ues {
                if let Ok(cbp) = measure_cbp(&ue.window, now, dcc_cfg.cbp_rssi_threshold_dbm, dcc_cfg.cbp_window_ms) {
                    ue.dcc.cbp_pct = Some(cbp);
                    if dcc_cfg.enabled {
                        ue.dcc.power_dbm = update_power(ue.dcc.power_dbm, cbp, &dcc_cfg.range);
                    }
                }
            }
        }

        // Packets already waiting for this subframe.
        let mut transmissions: Vec<Transmission> = Vec::new();
        let mut tx_seq: Vec<u64> = Vec::new();
        for (i, ue) in ues.iter_mut().enumerate() {
            let mut sent: Option<(u16, u32, bool)> = None;
            if ue.one_shot.is_some_and(|c| c.subframe == now) {
                let c = ue.one_shot.take().expect("checked");
                sent = Some((c.subchannel, 0, false));
            }
            if let Some(g) = ue.grant.as_mut() {
                if g.next == now {
                    if sent.is_none() && ue.pending.is_some() {
                        sent = Some((g.subchannel, g.period_ms, true));
                    } else {
                        stats.skipped_opportunities += 1;
                        g.next = g.next + g.period_ms.max(1) as u64;
                    }
                }
            }
            let Some((subchannel, period, grant_tx)) = sent else { continue };
            let packet = ue.pending.take().expect("a packet is pending");

            if let Some(table) = &calibration {
                if exceeds_cr_limit(ue, now, subchannel, subchannels, dcc_cfg.cr_limit.cbp_limit, table) {
                    stats.cr_drops += 1;
                    if let Some(g) = ue.grant.as_mut().filter(|_| grant_tx) {
                        g.next = g.next + g.period_ms.max(1) as u64;
                    }
                    continue;
                }
            }

            let event = TxEvent {
                subframe: n,
                ue: i as UeId,
                subchannel,
                power_dbm: ue.dcc.power_dbm,
                position: positions[i],
                period_ms: period,
                generated_at: packet.generated,
            };
            tx_seq.push(log.push_tx(event));
            stats.tx_events += 1;
            stats.one_shot_tx += u64::from(!grant_tx);
            stats.queue_delay_sum_ms += n - packet.generated;
            ue.history.push_back((n, subchannel));
            while ue.history.front().is_some_and(|&(t, _)| t + 1000 <= n) {
                ue.history.pop_front();
            }
            transmissions.push(Transmission {
                ue: i as UeId,
                csr: Csr::new(n, subchannel),
                power: PowerDbm(event.power_dbm),
                position: positions[i],
                reservation_period_ms: period,
            });
            if grant_tx {
                let g = ue.grant.expect("grant transmission");
                match on_transmission(g, &mut ue.counter_rng, sps)? {
                    GrantDecision::Keep(kept) => {
                        let period = ue.dcc.itt_ms;
                        ue.grant = Some(Grant { next: now + period.max(1) as u64, period_ms: period, ..kept });
                    }
                    GrantDecision::Reselect => {
                        stats.reselections += 1;
                        ue.grant = None;
                    }
                }
            }
        }

        // Packet generation and resource selection.
        if !draining {
            let dt = (n - last_tick) as f64 / 1000.0;
            for (i, ue) in ues.iter_mut().enumerate() {
                if n < ue.phase {
                    continue;
                }
                let actual =
                    KinematicState { position: vehicles[i].coast(dt, &road), velocity_mps: vehicles[i].velocity_mps };
                let pte = match (&ue.dcc.last_broadcast, pte_active) {
                    (Some(last), true) => update_pte(&actual, last, now, &ring),
                    _ => 0.0,
                };
                let threshold = if pte_active { dcc_cfg.pte.threshold_m } else { f64::INFINITY };
                if !should_transmit(&ue.dcc, pte, now, threshold) {
                    continue;
                }
                let timer = ue.dcc.last_tx_time.is_none_or(|t| now.since(t) >= ue.dcc.itt_ms as u64);
                stats.packets_generated += 1;
                stats.pte_triggers += u64::from(!timer);
                stats.superseded += u64::from(ue.pending.is_some());
                ue.pending = Some(Packet { generated: n });
                ue.dcc.last_tx_time = Some(now);
                ue.dcc.last_broadcast = Some(BroadcastState {
                    position: actual.position,
                    velocity_mps: actual.velocity_mps,
                    timestamp: now,
                });

                let period = ue.dcc.itt_ms;
                match ue.grant {
                    None => {
                        let sel = select_resource(&ue.window, now, sps, period, &mut ue.selection_rng);
                        stats.selections += 1;
                        stats.escalations += sel.escalations as u64;
                        ue.grant = Some(Grant::new(
                            sel.chosen.subframe,
                            sel.chosen.subchannel,
                            period,
                            sps,
                            &mut ue.counter_rng,
                        ));
                    }
                    Some(g)
                        if !timer
                            && dcc_cfg.pte.policy == PtePolicy::NextOpportunityOrOneShot
                            && ue.one_shot.is_none()
                            && g.next.0 > n + dcc_cfg.pte.max_wait_ms as u64 =>
                    {
                        let sel = select_in_window(
                            &ue.window,
                            now,
                            1,
                            dcc_cfg.pte.max_wait_ms,
                            sps,
                            0,
                            &mut ue.selection_rng,
                        );
                        stats.selections += 1;
                        stats.escalations += sel.escalations as u64;
                        ue.one_shot = Some(sel.chosen);
                    }
                    Some(_) => {}
                }
            }
        }

        // Channel, sensing and metrics.
        if transmissions.is_empty() {
            let m: Vec<RxMeasurement> = (0..subchannels)
                .map(|s| RxMeasurement { csr: Csr::new(n, s), srssi: noise, decoded: Vec::new() })
                .collect();
            for ue in &mut ues {
                ue.window.record_observation(now, Observation::Sensed(&m))?;
            }
        } else {
            let reports =
                resolve_subframe(&cfg.channel, &sampler, &transmissions, &receivers, subchannels, road_distance)?;
            let second = (n / 1000) as usize;
            let measured = n >= warmup && n < duration;
            for report in reports {
                let rx = report.ue as usize;
                if report.transmitting {
                    let own = transmissions.iter().find(|t| t.ue == report.ue).map(|t| t.csr.subchannel);
                    ues[rx].window.record_observation(now, Observation::Unsensed { own_subchannel: own })?;
                } else {
                    ues[rx].window.record_observation(now, Observation::Sensed(&report.measurements))?;
                }
                for o in &report.outcomes {
                    let t = &transmissions[o.tx_index];
                    log.push_rx(RxOutcome {
                        subframe: n,
                        tx_seq: tx_seq[o.tx_index],
                        tx_ue: t.ue,
                        rx_ue: report.ue,
                        kind: o.kind,
                        distance_m: o.distance_m,
                        rx_power_dbm: o.rx_power.0,
                        sinr_db: o.sinr_db,
                    });
                    stats.outcomes[o.kind.index()] += 1;
                    if let Some(s) = stats.outcomes_per_second.get_mut(second) {
                        s[o.kind.index()] += 1;
                    }
                    if measured && in_region[t.ue as usize] {
                        metrics.record(t.ue, report.ue, o.distance_m, n, o.kind);
                    }
                }
            }
        }

        // Time series, sampled at the end of each interval.
        let interval = cfg.metrics.timeseries_interval_ms as u64;
        if !draining && (n + 1).is_multiple_of(interval) {
            timeseries.push(sample_timeseries(&ues, &in_region, SubframeIndex(n + 1), cfg));
        }
        n += 1;
    }

    let vehicles = vehicles.len();
    Ok(RunOutput { log, metrics, timeseries, stats, vehicles })
}

fn exceeds_cr_limit(
    ue: &Ue,
    now: SubframeIndex,
    subchannel: u16,
    subchannels: u16,
    cbp_limit: f64,
    table: &CalibrationTable,
) -> bool {
    let Some(cbp) = ue.dcc.cbp_pct else { return false };
    let Ok(limit) = cr_limit(cbp / 100.0, cbp_limit, table) else { return false };
    if limit >= 1.0 {
        return false;
    }
    let future: Option<(u64, u16)> =
        ue.grant.map(|g| (now.0 + g.period_ms.max(1) as u64, g.subchannel)).filter(|&(t, _)| t <= now.0 + 100);
    let used = |j: u64, i: u16| {
        (j == now.0 && i == subchannel) || ue.history.iter().any(|&h| h == (j, i)) || future == Some((j, i))
    };
    match compute_cr(now, CrWindow::around(now, 100), subchannels, |_, _| true, used) {
        Ok(cr) => cr > limit,
        Err(_) => false,
    }
}

fn sample_timeseries(ues: &[Ue], in_region: &[bool], at: SubframeIndex, cfg: &RunConfig) -> TimeseriesRow {
    let mut cbp_sum = 0.0;
    let mut cbp_n = 0usize;
    let mut power = 0.0;
    let mut itt = 0.0;
    let mut count = 0usize;
    for (ue, _) in ues.iter().zip(in_region).filter(|(_, r)| **r) {
        if let Ok(c) = measure_cbp(&ue.window, at, cfg.dcc.cbp_rssi_threshold_dbm, cfg.dcc.cbp_window_ms) {
            cbp_sum += c;
            cbp_n += 1;
        }
        power += ue.dcc.power_dbm;
        itt += ue.dcc.itt_ms as f64;
        count += 1;
    }
    let mean = |s: f64, k: usize| if k == 0 { f64::NAN } else { s / k as f64 };
    TimeseriesRow {
        t_s: at.as_secs(),
        mean_cbp_pct: (cbp_n > 0).then(|| cbp_sum / cbp_n as f64),
        mean_power_dbm: mean(power, count),
        mean_itt_ms: mean(itt, count),
    }
}

/// Recomputes the metrics of a run from its full event log.
pub fn metrics_from_log(log: &EventLog, cfg: &RunConfig) -> Option<MetricsStore> {
    if log.mode() != LogMode::Full {
        return None;
    }
    let road = cfg.scenario.road();
    let (warmup, duration) = (cfg.warmup_ms(), cfg.duration_ms());
    let mut store = MetricsStore::new(&cfg.metrics, cfg.run.payload_bytes, cfg.run.seed, duration - warmup);
    for o in log.rx_outcomes() {
        let tx = &log.tx_events()[o.tx_seq as usize];
        if o.subframe >= warmup && o.subframe < duration && road.in_measurement_region(tx.position) {
            store.record(o.tx_ue, o.rx_ue, o.distance_m, o.subframe, o.kind);
        }
    }
    Some(store)
}
