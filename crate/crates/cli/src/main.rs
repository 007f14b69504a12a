//! `bdoa`: simulate scenarios, build prototype databases, localize speakers
//! and run threshold sweeps.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bdoa_core::array_model::{build_database, build_geometry, GeometryConfig};
use bdoa_core::coherence::Criterion;
use bdoa_core::harness::report::{emit_report, emit_sweep, render_report};
use bdoa_core::harness::sweep::{run_sweep, SweepConfig};
use bdoa_core::harness::{localize_run, CriterionSweep, RunConfig, RunInput};
use bdoa_core::numerics::StftConfig;
use bdoa_core::simulator::{mix_scenario, ScenarioConfig};
use bdoa_core::spectra::Method;
use clap::{Parser, Subcommand};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "bdoa", version, about = "Binaural multi-speaker DOA estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a scenario: mixture.wav, truth.json and optional components.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-source direct/reverberant and noise WAVs.
        #[arg(long)]
        components: bool,
    },
    /// Build the anechoic prototype ATF/RTF database.
    BuildDb {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Localize the speakers in a WAV file or a synthesized scenario.
    Localize {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Multichannel WAV (overrides the config).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Truth file produced by `simulate`.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        criterion: Option<Criterion>,
        /// Selection threshold (`-inf`, linear GMSC or CDR in dB).
        #[arg(long, allow_hyphen_values = true)]
        threshold: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep selection thresholds over a scenario set.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// First seed of the scenario set; later seeds follow consecutively.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a sweep directory into report.txt.
    Report {
        /// Directory holding sweep.csv.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DbConfig {
    sample_rate: Option<f64>,
    num_directions: Option<usize>,
    geometry: GeometryConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct LocalizeConfig {
    input: Option<PathBuf>,
    truth: Option<PathBuf>,
    scenario: Option<ScenarioConfig>,
    run: RunConfig,
}

fn read_toml<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

/// Paths in a config file are relative to the file.
fn resolve(config: Option<&Path>, p: &Path) -> PathBuf {
    match config.and_then(Path::parent) {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    }
}

fn resolve_scenario(config: Option<&Path>, sc: &mut ScenarioConfig) {
    for s in sc.sources.iter_mut() {
        *s = resolve(config, s);
    }
}

fn parse_threshold(s: &str) -> Result<f64> {
    Ok(bdoa_core::harness::report::parse_threshold(s)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, seed, out, components } => {
            let mut sc: ScenarioConfig = read_toml(config.as_deref())?;
            resolve_scenario(config.as_deref(), &mut sc);
            if let Some(s) = seed {
                sc.seed = s;
            }
            let output = mix_scenario(&sc)?;
            output.write(&out, components)?;
            println!("wrote {} ({} samples, {} channels)", out.display(), output.mixture[0].len(), output.mixture.len());
        }
        Command::BuildDb { config, seed: _, out } => {
            let cfg: DbConfig = read_toml(config.as_deref())?;
            let geometry = build_geometry(&cfg.geometry)?;
            let stft = StftConfig::for_rate(cfg.sample_rate.unwrap_or(16_000.0));
            let db = build_database(&geometry, stft, cfg.num_directions.unwrap_or(72))?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            db.save(&out)?;
            println!("wrote {} ({} bins x {} directions x {} mics)", out.display(), db.num_bins(), db.num_directions(), db.num_mics());
        }
        Command::Localize { config, input, truth, method, criterion, threshold, seed, out } => {
            let mut cfg: LocalizeConfig = read_toml(config.as_deref())?;
            let cp = config.as_deref();
            if let Some(db) = cfg.run.database.as_mut() {
                *db = resolve(cp, db);
            }
            if let Some(m) = method {
                cfg.run.methods = vec![m];
            }
            if criterion.is_some() || threshold.is_some() {
                let c = criterion.unwrap_or(Criterion::All);
                let t = match &threshold {
                    Some(t) => parse_threshold(t)?,
                    None => f64::NEG_INFINITY,
                };
                cfg.run.criteria = vec![CriterionSweep::single(c, t)];
            }
            let wav = input.or(cfg.input.as_ref().map(|p| resolve(cp, p)));
            let truth = truth.or(cfg.truth.as_ref().map(|p| resolve(cp, p)));
            let (run_input, label) = match (wav, cfg.scenario.take()) {
                (Some(path), _) => {
                    let label = path.display().to_string();
                    (RunInput::Wav { path, truth }, label)
                }
                (None, Some(mut sc)) => {
                    resolve_scenario(cp, &mut sc);
                    if let Some(s) = seed {
                        sc.seed = s;
                    }
                    (RunInput::Scenario(sc), "scenario".to_string())
                }
                (None, None) => bail!("nothing to localize: pass --input or a config with a [scenario] table"),
            };
            let stft = match &run_input {
                RunInput::Scenario(sc) => sc.stft(),
                RunInput::Wav { path, .. } => StftConfig::for_rate(bdoa_core::audio::read_wav(path)?.sample_rate),
            };
            let results = localize_run(&run_input, &cfg.run)?;
            let db = cfg.run.database(stft)?;
            emit_report(&out, &label, &cfg.run, &results, &db.directions)?;
            for e in &results {
                println!(
                    "{:<9} {:<5} {:>6}  accuracy {:5.1}%  ({} of {} frames)",
                    e.key.method.name(),
                    e.key.criterion.name(),
                    bdoa_core::harness::report::fmt_threshold(e.key.threshold),
                    100.0 * e.summary.accuracy,
                    e.summary.correct_frames,
                    e.summary.scored_frames
                );
            }
        }
        Command::Sweep { config, seed, out } => {
            let mut cfg: SweepConfig = read_toml(config.as_deref())?;
            cfg.run.validate()?;
            if let Some(db) = cfg.run.database.as_mut() {
                *db = resolve(config.as_deref(), db);
            }
            resolve_scenario(config.as_deref(), &mut cfg.scenarios.base);
            if let Some(s) = seed {
                let n = cfg.scenarios.seeds.len().max(1) as u64;
                cfg.scenarios.seeds = (s..s + n).collect();
            }
            let scenarios = cfg.scenarios.scenarios(cfg.run.num_sources);
            log::info!("running {} scenarios", scenarios.len());
            let table = run_sweep(&cfg, &scenarios)?;
            emit_sweep(&out, &cfg, &table)?;
            print!("{}", render_report(&out, &out)?);
        }
        Command::Report { input, config: _, seed: _, out } => {
            print!("{}", render_report(&input, &out)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
