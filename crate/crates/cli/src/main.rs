use clap::{Args, Parser, Subcommand};
use sidelink_cli::config_file::{resolve, to_toml, ConfigError, ConfigInput, Diagnostic};
use sidelink_cli::run::run_single;
use sidelink_cli::sweep::{run_sweep, SweepSpec, Tuple};
use sidelink_cli::CliError;
use sidelink_core::presets::{scenario_presets, SCHEME_PRESETS};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sidelink", version, about = "C-V2X Mode-4 sidelink simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its CSVs and manifest.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory; defaults to <out-root>/<scenario>__<scheme>__seed<N>.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "SIDELINK_OUT_DIR", default_value = "sidelink-out")]
        out_root: PathBuf,
    },
    /// Run every scenario × scheme × seed combination and compute gains.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        scenarios: Vec<String>,
        /// Must include `baseline`.
        #[arg(long, value_delimiter = ',', required = true)]
        schemes: Vec<String>,
        /// Comma-separated seeds or inclusive ranges, e.g. `1-5,9`.
        #[arg(long, default_value = "1")]
        seeds: String,
        /// Parallel worker slots; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long, env = "SIDELINK_OUT_DIR", default_value = "sidelink-out")]
        out: PathBuf,
    },
    /// Check a config and print the resolved result.
    Validate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List scenario and scheme presets.
    Presets,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config or a previous run's manifest.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set dcc.range.p_min_dbm=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn input(&self) -> Result<ConfigInput, CliError> {
        let input = ConfigInput { sets: self.sets.clone(), ..ConfigInput::default() };
        Ok(match &self.config {
            Some(p) => input.with_file(p)?,
            None => input,
        })
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    let bad = || {
        let message = "expected comma-separated seeds or ranges such as 1-5".to_string();
        CliError::Config(ConfigError(vec![Diagnostic { origin: Some("--seeds".into()), key: s.to_string(), message }]))
    };
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(out)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, scenario, scheme, seed, out, out_root } => {
            let cfg = resolve(&ConfigInput { scenario, scheme, seed, ..config.input()? })?;
            let dir = out.unwrap_or_else(|| {
                let t =
                    Tuple { scenario: cfg.scenario.name.clone(), scheme: cfg.run.scheme.clone(), seed: cfg.run.seed };
                out_root.join(t.dir_name())
            });
            let output = run_single(&cfg, &dir)?;
            println!("{}  {}", dir.display(), output.log.digest());
        }
        Command::Sweep { config, scenarios, schemes, seeds, jobs, out } => {
            let spec = SweepSpec::grid(&scenarios, &schemes, &parse_seeds(&seeds)?, jobs);
            let report = run_sweep(&spec, &config.input()?, &out)?;
            println!("{} runs, {} gain rows in {}", report.results.len(), report.gains.len(), out.display());
        }
        Command::Validate { config, scenario, scheme, seed } => {
            let cfg = resolve(&ConfigInput { scenario, scheme, seed, ..config.input()? })?;
            print!("{}", to_toml(&cfg));
        }
        Command::Presets => {
            println!("scenarios:");
            for p in scenario_presets() {
                println!(
                    "  {:<22} {:>5} vehicles  {:>6} km  {:>5} km/h  {:>4} s",
                    p.name, p.vehicle_count, p.road_length_km, p.speed_kmh, p.duration_s
                );
            }
            println!("schemes:");
            for s in SCHEME_PRESETS {
                println!("  {:<10} {}", s.name, s.description);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("1-3,7").unwrap(), vec![1, 2, 3, 7]);
        assert!(parse_seeds("3-1").is_err());
        assert!(parse_seeds("x").is_err());
    }
}
