//! Single runs and their output directories.

use crate::config_file::{to_toml, PROVENANCE};
use crate::CliError;
use sidelink_core::channel::RxKind;
use sidelink_core::config::RunConfig;
use sidelink_core::engine::{self, RunOutput};
use sidelink_core::metrics::csv;
use std::fmt::Write;
use std::path::Path;

pub const MANIFEST: &str = "manifest.toml";

/// Runs `cfg` and writes its artifacts into `out`.
pub fn run_single(cfg: &RunConfig, out: &Path) -> Result<RunOutput, CliError> {
    let output = engine::run(cfg)?;
    write_artifacts(cfg, &output, out)?;
    Ok(output)
}

/// The resolved config plus a `[provenance]` table. Loading it back
/// reproduces the run.
pub fn manifest(cfg: &RunConfig, digest: &str) -> String {
    format!(
        "{}\n[{PROVENANCE}]\nversion = \"{}\"\nseed = {}\nscenario = \"{}\"\nscheme = \"{}\"\nevent_log_digest = \"{digest}\"\n",
        to_toml(cfg),
        env!("CARGO_PKG_VERSION"),
        cfg.run.seed,
        cfg.scenario.name,
        cfg.run.scheme,
    )
}

pub fn write_artifacts(cfg: &RunConfig, output: &RunOutput, out: &Path) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(out.display().to_string(), e);
    std::fs::create_dir_all(out).map_err(io)?;
    let digest = output.log.digest();
    let files = [
        (MANIFEST, manifest(cfg, &digest)),
        ("pdr.csv", csv::pdr_csv(&output.metrics)),
        ("slt.csv", csv::slt_csv(&output.metrics)),
        ("ipg.csv", csv::ipg_csv(&output.metrics)),
        ("blind_nodes.csv", csv::blind_nodes_csv(&output.metrics.blind_nodes())),
        ("timeseries.csv", csv::timeseries_csv(&output.timeseries)),
        ("outcomes.csv", outcomes_csv(output)),
        ("summary.csv", summary_csv(output)),
    ];
    for (name, body) in files {
        std::fs::write(out.join(name), body).map_err(io)?;
    }
    if !output.log.tx_events().is_empty() {
        std::fs::write(out.join("tx_events.csv"), tx_events_csv(output)).map_err(io)?;
    }
    Ok(())
}

fn summary_csv(output: &RunOutput) -> String {
    let s = &output.stats;
    let mut rows = vec![
        ("event_log_digest", output.log.digest()),
        ("vehicles", output.vehicles.to_string()),
        ("tx_events", s.tx_events.to_string()),
        ("one_shot_tx", s.one_shot_tx.to_string()),
        ("packets_generated", s.packets_generated.to_string()),
        ("superseded", s.superseded.to_string()),
        ("skipped_opportunities", s.skipped_opportunities.to_string()),
        ("pte_triggers", s.pte_triggers.to_string()),
        ("cr_drops", s.cr_drops.to_string()),
        ("selections", s.selections.to_string()),
        ("escalations", s.escalations.to_string()),
        ("reselections", s.reselections.to_string()),
        ("mean_queue_delay_ms", s.mean_queue_delay_ms().map(csv::fmt_g).unwrap_or_default()),
        ("decoded_bytes", output.metrics.total_decoded_bytes().to_string()),
    ];
    for kind in RxKind::ALL {
        rows.push((kind.as_str(), s.outcomes[kind.index()].to_string()));
    }
    csv::key_value_csv(&rows)
}

fn outcomes_csv(output: &RunOutput) -> String {
    let mut out = String::from("second");
    for kind in RxKind::ALL {
        let _ = write!(out, ",{}", kind.as_str());
    }
    out.push('\n');
    for (sec, counts) in output.stats.outcomes_per_second.iter().enumerate() {
        let _ = write!(out, "{sec}");
        for kind in RxKind::ALL {
            let _ = write!(out, ",{}", counts[kind.index()]);
        }
        out.push('\n');
    }
    out
}

fn tx_events_csv(output: &RunOutput) -> String {
    let mut out = String::from("subframe,ue,subchannel,power_dbm,x_m,lane,period_ms,generated_at\n");
    for e in output.log.tx_events() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            e.subframe,
            e.ue,
            e.subchannel,
            csv::fmt_g(e.power_dbm),
            csv::fmt_g(e.position.x),
            e.position.lane,
            e.period_ms,
            e.generated_at
        );
    }
    out
}
