//! Command-line front end: scenario checks, campaigns, sweeps and allocator runs.
//!
//! Exit codes: 0 success, 2 invalid scenario or arguments, 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use otfs_mimo::channel::Group;
use otfs_mimo::sim::{
    nmse_csv, nmse_vs_antennas, run_campaign_with, sweep, validate_closed_form, validation_csv, CampaignOptions,
    Scenario, SweepAxis,
};
use otfs_mimo::Error;

#[derive(Parser, Debug)]
#[command(name = "otfs-mimo", version, about = "Hybrid OTFS/OFDM massive-MIMO downlink simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Master seed (overrides the scenario).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Scenario file (TOML, or JSON by extension).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Directory for output files; without it the main table goes to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Fill unset values from the small desk preset (default without --scenario).
    #[arg(long, global = true, conflicts_with = "paper_scale")]
    desk: bool,
    /// Fill unset values from the full-size preset (default with --scenario).
    #[arg(long, global = true)]
    paper_scale: bool,
    /// Write allocator bisection and SCA traces.
    #[arg(long, global = true)]
    debug_traces: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compare closed-form and numerical SE under EPA with unit large-scale fading.
    Validate {
        /// SNR values in dB.
        #[arg(long, value_delimiter = ',', default_values_t = [95.0, 105.0, 115.0])]
        rho_db: Vec<f64>,
        /// Exit with status 3 if any relative gap exceeds this.
        #[arg(long)]
        max_gap: Option<f64>,
    },
    /// One campaign per value of a scenario parameter.
    SeSweep {
        /// n_t, k_h, m or rho_db.
        #[arg(long)]
        axis: String,
        /// Comma-separated values; may be empty.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
    },
    /// Run the scenario's campaign and report SE CDFs.
    Cdf,
    /// NMSE of the PZF interference approximation against N_t.
    Nmse {
        #[arg(long, value_delimiter = ',', default_values_t = [16usize, 32])]
        n_t: Vec<usize>,
    },
    /// Run the configured allocator on the first drop and print eta and SE.
    Alloc,
    /// Print the full-size default scenario.
    PaperDefaults,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidInput(_) | Error::Parse(_) | Error::Io(_) => 2,
        _ => 3,
    }
}

fn scenario(c: &Common) -> otfs_mimo::Result<Scenario> {
    let base = if c.paper_scale || (c.scenario.is_some() && !c.desk) {
        Scenario::full()
    } else {
        Scenario::desk()
    };
    let mut s = match &c.scenario {
        Some(p) => Scenario::load(p, &base)?,
        None => base,
    };
    if let Some(seed) = c.seed {
        s.monte_carlo.seed = seed;
    }
    s.validate()?;
    Ok(s)
}

/// Writes `name` under `--out`, or prints it when `stdout` is set and there is
/// no output directory.
fn emit(c: &Common, name: &str, body: &str, stdout: bool) -> otfs_mimo::Result<()> {
    match &c.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), body)?;
            eprintln!("wrote {}", Path::new(dir).join(name).display());
        }
        None if stdout => print!("{body}"),
        None => {}
    }
    Ok(())
}

fn run(cli: Cli) -> otfs_mimo::Result<()> {
    let c = &cli.common;
    match cli.command {
        Command::PaperDefaults => emit(c, "scenario.toml", &Scenario::full().to_toml()?, true),
        Command::Validate { rho_db, max_gap } => {
            let s = scenario(c)?;
            let rows = validate_closed_form(&s, &rho_db)?;
            emit(c, "validate.csv", &validation_csv(&rows), true)?;
            let worst = rows.iter().map(|r| r.relative_gap()).fold(0.0, f64::max);
            eprintln!("largest relative gap {worst:.3e}");
            match max_gap {
                Some(limit) if worst > limit => Err(Error::Approximation(format!(
                    "relative gap {worst:.3e} exceeds {limit:.3e}"
                ))),
                _ => Ok(()),
            }
        }
        Command::SeSweep { axis, values } => {
            let axis: SweepAxis = axis.parse()?;
            let s = scenario(c)?;
            let table = sweep(&s, axis, &values)?;
            emit(c, "sweep.csv", &table.to_csv(), true)
        }
        Command::Cdf => {
            let s = scenario(c)?;
            let opts = CampaignOptions {
                debug_traces: c.debug_traces,
            };
            let r = run_campaign_with(&s, &opts)?;
            emit(c, "campaign.csv", &r.to_csv(), true)?;
            emit(c, "campaign.json", &r.to_json()?, false)?;
            let method = r.rows().next().map(|row| row.method);
            for (group, name) in [(Group::Hm, "cdf_hm.csv"), (Group::Lm, "cdf_lm.csv")] {
                let Some(method) = method else { break };
                let samples = r.samples(group, method);
                if samples.is_empty() {
                    continue;
                }
                match r.cdf(group, method) {
                    Ok(cdf) => {
                        eprintln!(
                            "{} {}: mean {:.4}, 95%-likely {:.4} bit/s/Hz over {} samples",
                            group.label(),
                            method.label(),
                            cdf.mean,
                            cdf.p95_likely,
                            cdf.n()
                        );
                        emit(c, name, &cdf.to_csv("se_bit_per_s_per_hz"), false)?;
                    }
                    Err(e) => eprintln!("{}: {e}", group.label()),
                }
            }
            if !r.failures.is_empty() {
                eprintln!("{} drops failed", r.failures.len());
            }
            Ok(())
        }
        Command::Nmse { n_t } => {
            let s = scenario(c)?;
            let points = nmse_vs_antennas(&s, &n_t)?;
            emit(c, "nmse.csv", &nmse_csv(&points), true)
        }
        Command::Alloc => {
            let mut s = scenario(c)?;
            s.monte_carlo.n_drops = 1;
            let r = run_campaign_with(
                &s,
                &CampaignOptions {
                    debug_traces: c.debug_traces,
                },
            )?;
            let d = r
                .drops
                .first()
                .ok_or_else(|| Error::Solver(r.failures.first().map(|f| f.error.clone()).unwrap_or_default()))?;
            emit(c, "alloc.csv", &r.to_csv(), true)?;
            if let Some(u) = d.unscheduled {
                eprintln!("user {u} unscheduled");
            }
            if let Some(obj) = d.objective {
                eprintln!("weighted objective {obj:.6}");
            }
            if c.debug_traces {
                if let Some(t) = &d.trace {
                    let text = serde_json::to_string_pretty(t).map_err(Error::from)?;
                    match &c.out {
                        Some(_) => emit(c, "alloc_trace.json", &text, false)?,
                        None => eprintln!("{text}"),
                    }
                }
            }
            Ok(())
        }
    }
}
