//! Scenario × scheme × seed sweeps with per-seed gains against baseline.

use crate::config_file::{resolve, ConfigError, ConfigInput, Diagnostic};
use crate::run::run_single;
use crate::CliError;
use rayon::prelude::*;
use sidelink_core::config::RunConfig;
use sidelink_core::metrics::csv::{self, GainRow};
use sidelink_core::metrics::{gains, Gain, MetricsStore};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use std::path::{Path, PathBuf};

pub const BASELINE: &str = "baseline";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tuple {
    pub scenario: String,
    pub scheme: String,
    pub seed: u64,
}

impl Tuple {
    pub fn dir_name(&self) -> String {
        format!("{}__{}__seed{}", self.scenario, self.scheme, self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub tuples: Vec<Tuple>,
    /// Worker slots; 0 uses every core.
    pub jobs: usize,
}

impl SweepSpec {
    /// The full cross product, in the order given.
    pub fn grid(scenarios: &[String], schemes: &[String], seeds: &[u64], jobs: usize) -> Self {
        let mut tuples = Vec::new();
        for scenario in scenarios {
            for scheme in schemes {
                for &seed in seeds {
                    tuples.push(Tuple { scenario: scenario.clone(), scheme: scheme.clone(), seed });
                }
            }
        }
        SweepSpec { tuples, jobs }
    }

    fn check(&self) -> Result<(), ConfigError> {
        let err = |key: &str, message: String| ConfigError(vec![Diagnostic { origin: None, key: key.into(), message }]);
        if self.tuples.is_empty() {
            return Err(err("sweep", "no (scenario, scheme, seed) tuples".into()));
        }
        let mut seen = BTreeSet::new();
        for t in &self.tuples {
            if !seen.insert(t) {
                return Err(err("sweep", format!("duplicate tuple {}", t.dir_name())));
            }
        }
        for t in self.tuples.iter().filter(|t| t.scheme != BASELINE) {
            let base = Tuple { scheme: BASELINE.into(), ..t.clone() };
            if !seen.contains(&base) {
                return Err(err("sweep", format!("{} has no baseline tuple {}", t.dir_name(), base.dir_name())));
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct TupleResult {
    pub tuple: Tuple,
    pub dir: PathBuf,
    pub digest: String,
    pub metrics: MetricsStore,
}

#[derive(Debug)]
pub struct SweepReport {
    pub results: Vec<TupleResult>,
    pub gains: Vec<GainRow>,
}

/// Resolves every tuple up front, runs them in parallel, then writes
/// `gains.csv`, `summary.csv` and pooled metrics under `out/merged`.
pub fn run_sweep(spec: &SweepSpec, base: &ConfigInput, out: &Path) -> Result<SweepReport, CliError> {
    spec.check()?;
    let mut configs = Vec::with_capacity(spec.tuples.len());
    let mut diagnostics = Vec::new();
    for t in &spec.tuples {
        let input = ConfigInput {
            scenario: Some(t.scenario.clone()),
            scheme: Some(t.scheme.clone()),
            seed: Some(t.seed),
            ..base.clone()
        };
        match resolve(&input) {
            Ok(cfg) => configs.push((t.clone(), cfg)),
            Err(ConfigError(d)) => diagnostics.extend(d.into_iter().map(|mut d| {
                d.key = format!("{}: {}", t.dir_name(), d.key);
                d
            })),
        }
    }
    if !diagnostics.is_empty() {
        return Err(ConfigError(diagnostics).into());
    }

    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(spec.jobs).build().map_err(|e| CliError::Runtime(e.to_string()))?;
    let outcomes: Vec<Result<TupleResult, (Tuple, CliError)>> = pool
        .install(|| configs.par_iter().map(|(t, cfg)| run_tuple(t, cfg, out).map_err(|e| (t.clone(), e))).collect());
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => results.push(r),
            Err((t, e)) => failures.push(format!("{}: {e}", t.dir_name())),
        }
    }
    if !failures.is_empty() {
        return Err(CliError::Runtime(format!(
            "{} of {} tuples failed:\n{}",
            failures.len(),
            spec.tuples.len(),
            failures.join("\n")
        )));
    }

    let gains = gain_rows(&results)?;
    write_outputs(&results, &gains, out)?;
    Ok(SweepReport { results, gains })
}

fn run_tuple(t: &Tuple, cfg: &RunConfig, out: &Path) -> Result<TupleResult, CliError> {
    let dir = out.join(t.dir_name());
    let output = run_single(cfg, &dir)?;
    Ok(TupleResult { tuple: t.clone(), dir, digest: output.log.digest(), metrics: output.metrics })
}

/// Per seed, scheme minus the same scenario's baseline; then the mean over
/// seeds of each bin.
fn gain_rows(results: &[TupleResult]) -> Result<Vec<GainRow>, CliError> {
    let by_tuple: BTreeMap<&Tuple, &TupleResult> = results.iter().map(|r| (&r.tuple, r)).collect();
    let mut order: Vec<(&str, &str)> = Vec::new();
    let mut per_bin: BTreeMap<(&str, &str), BTreeMap<u32, Vec<Gain>>> = BTreeMap::new();
    for r in results.iter().filter(|r| r.tuple.scheme != BASELINE) {
        let key = (r.tuple.scenario.as_str(), r.tuple.scheme.as_str());
        if !order.contains(&key) {
            order.push(key);
        }
        let base = by_tuple[&Tuple { scheme: BASELINE.into(), ..r.tuple.clone() }];
        let g = gains(&r.metrics, &base.metrics).map_err(|e| CliError::Runtime(e.to_string()))?;
        let bins = per_bin.entry(key).or_default();
        for gain in g {
            bins.entry(gain.bin).or_default().push(gain);
        }
    }
    let mut rows = Vec::new();
    for key in order {
        for list in per_bin[&key].values() {
            let n = list.len() as f64;
            let first = list[0];
            rows.push(GainRow {
                scenario: key.0.to_string(),
                scheme: key.1.to_string(),
                gain: Gain {
                    pdr_pp: list.iter().map(|g| g.pdr_pp).sum::<f64>() / n,
                    slt_bytes_per_s: list.iter().map(|g| g.slt_bytes_per_s).sum::<f64>() / n,
                    ..first
                },
                n_seeds: list.len(),
            });
        }
    }
    Ok(rows)
}

fn write_outputs(results: &[TupleResult], gains: &[GainRow], out: &Path) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(out.display().to_string(), e);
    let mut summary = String::from("scenario,scheme,seed,dir,event_log_digest\n");
    let mut pooled: Vec<((&str, &str), MetricsStore)> = Vec::new();
    for r in results {
        let t = &r.tuple;
        let _ = writeln!(summary, "{},{},{},{},{}", t.scenario, t.scheme, t.seed, t.dir_name(), r.digest);
        let key = (t.scenario.as_str(), t.scheme.as_str());
        match pooled.iter_mut().find(|(k, _)| *k == key) {
            Some((_, store)) => store.merge(&r.metrics).map_err(|e| CliError::Runtime(e.to_string()))?,
            None => pooled.push((key, r.metrics.clone())),
        }
    }
    std::fs::write(out.join("summary.csv"), summary).map_err(io)?;
    if !gains.is_empty() {
        std::fs::write(out.join("gains.csv"), csv::gains_csv(gains)).map_err(io)?;
    }
    for ((scenario, scheme), store) in pooled {
        let dir = out.join("merged").join(format!("{scenario}__{scheme}"));
        std::fs::create_dir_all(&dir).map_err(io)?;
        std::fs::write(dir.join("pdr.csv"), csv::pdr_csv(&store)).map_err(io)?;
        std::fs::write(dir.join("slt.csv"), csv::slt_csv(&store)).map_err(io)?;
        std::fs::write(dir.join("ipg.csv"), csv::ipg_csv(&store)).map_err(io)?;
        std::fs::write(dir.join("blind_nodes.csv"), csv::blind_nodes_csv(&store.blind_nodes())).map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn grid_counts_and_checks() {
        let spec = SweepSpec::grid(&names(&["urban-high"]), &names(&["baseline", "dcc-std"]), &[1, 2, 3], 0);
        assert_eq!(spec.tuples.len(), 6);
        assert!(spec.check().is_ok());
        assert!(SweepSpec::grid(&[], &names(&["baseline"]), &[1], 0).check().is_err());
        let dup = SweepSpec::grid(&names(&["a"]), &names(&["baseline"]), &[1, 1], 0);
        assert!(dup.check().unwrap_err().to_string().contains("duplicate"));
        let orphan = SweepSpec::grid(&names(&["a"]), &names(&["dcc-std"]), &[1], 0);
        assert!(orphan.check().unwrap_err().to_string().contains("no baseline"));
    }
}
