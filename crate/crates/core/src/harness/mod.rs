//! End-to-end localization runs, threshold sweeps and report files.

pub mod report;
pub mod score;
pub mod sweep;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::array_model::{build_database, ArrayGeometry, PrototypeDatabase};
use crate::coherence::{bin_criteria, passes, BinCriteria, Criterion, DiffuseModel};
use crate::covariance::{detect_activity, smoothing_factor, Activity, CovarianceState, DetectorMode};
use crate::error::{Error, Result};
use crate::numerics::{Stft, StftConfig};
use crate::rtf::estimate_rtf_cw;
use crate::simulator::Truth;
use crate::spectra::{hermitian_angle_row, music_row, noise_subspace, pick_peaks, Method};
pub use score::{front_back_mirror, is_front_back_confusion, score_frame, FrameScore};

/// One criterion with the thresholds to evaluate it at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionSweep {
    pub criterion: Criterion,
    pub thresholds: Vec<f64>,
}

impl CriterionSweep {
    pub fn single(criterion: Criterion, threshold: f64) -> Self {
        Self { criterion, thresholds: vec![threshold] }
    }

    pub fn default_grid(criterion: Criterion) -> Self {
        Self { criterion, thresholds: criterion.default_thresholds() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub methods: Vec<Method>,
    pub criteria: Vec<CriterionSweep>,
    /// Number of sources `J`.
    pub num_sources: usize,
    pub exclusion_deg: f64,
    pub num_directions: usize,
    pub detector: DetectorMode,
    /// Noise-only warm-up at the start of the signal, seconds.
    pub warmup: f64,
    pub tau_y: f64,
    pub tau_u: f64,
    pub signal_rank: usize,
    pub tolerance_deg: f64,
    /// Prototype database file; built from `geometry` when absent.
    pub database: Option<PathBuf>,
    pub geometry: crate::array_model::GeometryConfig,
    pub dump_spectra: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Hermitian],
            criteria: vec![CriterionSweep::single(Criterion::All, f64::NEG_INFINITY)],
            num_sources: 2,
            exclusion_deg: 10.0,
            num_directions: 72,
            detector: DetectorMode::Oracle,
            warmup: 0.25,
            tau_y: 0.25,
            tau_u: 0.5,
            signal_rank: 1,
            tolerance_deg: 5.0,
            database: None,
            geometry: Default::default(),
            dump_spectra: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no method selected".into()));
        }
        if self.criteria.is_empty() || self.criteria.iter().any(|c| c.thresholds.is_empty()) {
            return Err(Error::Config("threshold list is empty".into()));
        }
        if self.num_sources == 0 || self.num_sources > self.num_directions {
            return Err(Error::TooManyPeaks { requested: self.num_sources, grid: self.num_directions });
        }
        if self.signal_rank == 0 {
            return Err(Error::Config("signal subspace rank must be at least 1".into()));
        }
        if !(self.tau_y > 0.0 && self.tau_u > 0.0) {
            return Err(Error::Config("time constants must be positive".into()));
        }
        Ok(())
    }

    /// Loads the configured database or builds one for `config`.
    pub fn database(&self, config: StftConfig) -> Result<PrototypeDatabase> {
        match &self.database {
            Some(path) => {
                let db = PrototypeDatabase::load(path)?;
                if db.config.window_len != config.window_len || (db.config.sample_rate - config.sample_rate).abs() > 0.5 {
                    return Err(Error::Database(format!("{} was built for a different STFT", path.display())));
                }
                Ok(db)
            }
            None => {
                let geometry = crate::array_model::build_geometry(&self.geometry)?;
                build_database(&geometry, config, self.num_directions)
            }
        }
    }
}

/// Localization outcome for one frame under one (method, criterion,
/// threshold) setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub frame: usize,
    pub truth: Vec<f64>,
    /// Empty when the selection left no bins.
    pub estimates: Vec<f64>,
    pub correct: bool,
    pub errors: Vec<f64>,
    pub selected: usize,
    pub front_back_confused: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalKey {
    pub method: Method,
    pub criterion: Criterion,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scored_frames: usize,
    pub correct_frames: usize,
    pub accuracy: f64,
    pub front_back_frames: usize,
    pub unlocalizable_frames: usize,
    pub mean_selected: f64,
}

impl Summary {
    pub fn from_frames(frames: &[FrameResult]) -> Self {
        let n = frames.len();
        let correct = frames.iter().filter(|f| f.correct).count();
        let ratio = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
        Summary {
            scored_frames: n,
            correct_frames: correct,
            accuracy: ratio(correct),
            front_back_frames: frames.iter().filter(|f| f.front_back_confused).count(),
            unlocalizable_frames: frames.iter().filter(|f| f.estimates.is_empty()).count(),
            mean_selected: if n == 0 { 0.0 } else { frames.iter().map(|f| f.selected as f64).sum::<f64>() / n as f64 },
        }
    }
}

/// Spectrum of one frame, kept only when dumping is enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRecord {
    pub frame: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub key: EvalKey,
    pub frames: Vec<FrameResult>,
    pub summary: Summary,
    pub spectra: Vec<SpectrumRecord>,
}

/// Per-bin quantities of one frame shared by every mask.
struct FrameCache {
    criteria: Vec<Option<BinCriteria>>,
    angle_rows: Vec<Option<Vec<f64>>>,
    music_rows: Vec<Vec<f64>>,
}

fn criterion_value(cache: &FrameCache, k: usize, criterion: Criterion) -> Option<f64> {
    match criterion {
        Criterion::All => Some(f64::INFINITY),
        _ => cache.criteria[k].map(|c| c.value(criterion)),
    }
}

fn warmup_frames(config: &RunConfig, stft: &StftConfig) -> usize {
    (config.warmup / stft.hop_seconds()).ceil() as usize
}

/// Runs the full pipeline on a multichannel signal.
///
/// Frames inside the warm-up window update the undesired covariance only.
/// With a truth record, frames flagged inactive by the truth are not scored;
/// without one, every non-warm-up frame the detector marks as speech is
/// localized but `correct` stays false.
pub fn evaluate_signal(signal: &[Vec<f64>], truth: Option<&Truth>, db: &PrototypeDatabase, config: &RunConfig) -> Result<Vec<Evaluation>> {
    config.validate()?;
    let m = db.num_mics();
    if signal.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: signal.len() });
    }
    if let Some(t) = truth {
        if t.doas.len() != config.num_sources {
            return Err(Error::CountMismatch { truth: t.doas.len(), estimated: config.num_sources });
        }
    }
    let stft_cfg = db.config;
    let spec = Stft::new(stft_cfg)?.analyze(signal)?;
    let decision = detect_activity(&spec, &config.detector, truth.map(|t| t.frame_active.as_slice()))?;
    let hop = stft_cfg.hop_seconds();
    let warmup = warmup_frames(config, &stft_cfg).min(spec.frames());
    let mut state = CovarianceState::from_warmup(&spec, warmup, smoothing_factor(config.tau_y, hop), smoothing_factor(config.tau_u, hop));
    let model = DiffuseModel::new(&db.geometry, &stft_cfg);
    let pairs = db.geometry.cross_pairs();
    let bins = db.num_bins();
    let want_music = config.methods.contains(&Method::Music);
    let want_hermitian = config.methods.contains(&Method::Hermitian);
    let need_criteria = config.criteria.iter().any(|c| c.criterion != Criterion::All);

    let mut keys = Vec::new();
    for &method in &config.methods {
        for sweep in &config.criteria {
            for &threshold in &sweep.thresholds {
                keys.push(EvalKey { method, criterion: sweep.criterion, threshold });
            }
        }
    }
    let mut frames_out: Vec<Vec<FrameResult>> = vec![Vec::new(); keys.len()];
    let mut spectra_out: Vec<Vec<SpectrumRecord>> = vec![Vec::new(); keys.len()];
    let j = config.num_sources;

    for l in 0..spec.frames() {
        let activity = if l < warmup { Activity::NoiseOnly } else { decision.flags[l] };
        state.update_from(&spec, l, activity)?;
        if l < warmup {
            continue;
        }
        let scored = match truth {
            Some(t) => t.frame_active.get(l).copied().unwrap_or(false),
            None => activity == Activity::SpeechAndNoise,
        };
        if !scored {
            continue;
        }
        let mut cache = FrameCache {
            criteria: vec![None; bins],
            angle_rows: vec![None; bins],
            music_rows: vec![Vec::new(); bins],
        };
        for k in 1..bins {
            let phi_y = &state.phi_y[k];
            if need_criteria {
                cache.criteria[k] = bin_criteria(phi_y, &pairs, &model, k).ok();
            }
            if want_hermitian {
                cache.angle_rows[k] = estimate_rtf_cw(phi_y, &state.phi_u[k])
                    .and_then(|g| hermitian_angle_row(db, k, &g))
                    .ok();
            }
            if want_music {
                cache.music_rows[k] = music_row(db, k, &noise_subspace(phi_y, config.signal_rank));
            }
        }
        let truth_doas = truth.map(|t| t.doas.clone()).unwrap_or_default();
        for (idx, key) in keys.iter().enumerate() {
            let mut values = vec![0.0; db.num_directions()];
            let mut selected = 0;
            for k in 1..bins {
                let Some(v) = criterion_value(&cache, k, key.criterion) else { continue };
                if !passes(key.criterion, v, key.threshold) {
                    continue;
                }
                match key.method {
                    Method::Hermitian => {
                        if let Some(row) = &cache.angle_rows[k] {
                            for (a, p) in values.iter_mut().zip(row) {
                                *a -= p;
                            }
                            selected += 1;
                        }
                    }
                    Method::Music => {
                        for (a, p) in values.iter_mut().zip(&cache.music_rows[k]) {
                            *a += p;
                        }
                        selected += 1;
                    }
                }
            }
            let estimates: Vec<f64> = if selected == 0 {
                Vec::new()
            } else {
                pick_peaks(&values, &db.directions, j, config.exclusion_deg)?.into_iter().map(|i| db.directions[i]).collect()
            };
            let (correct, errors, fb) = if truth.is_some() && !estimates.is_empty() {
                let s = score_frame(&truth_doas, &estimates, config.tolerance_deg)?;
                let fb = is_front_back_confusion(&truth_doas, &estimates, config.tolerance_deg);
                (s.correct, s.errors, fb)
            } else {
                (false, Vec::new(), false)
            };
            frames_out[idx].push(FrameResult {
                frame: l,
                truth: truth_doas.clone(),
                estimates,
                correct,
                errors,
                selected,
                front_back_confused: fb,
            });
            if config.dump_spectra {
                spectra_out[idx].push(SpectrumRecord { frame: l, values });
            }
        }
    }
    Ok(keys
        .into_iter()
        .zip(frames_out.into_iter().zip(spectra_out))
        .map(|(key, (frames, spectra))| Evaluation { key, summary: Summary::from_frames(&frames), frames, spectra })
        .collect())
}

/// What to localize: a WAV file (optionally with a truth file) or a scenario
/// synthesized on the fly.
#[derive(Debug, Clone, PartialEq)]
pub enum RunInput {
    Wav { path: PathBuf, truth: Option<PathBuf> },
    Scenario(crate::simulator::ScenarioConfig),
}

/// Loads or synthesizes the input and evaluates it.
pub fn localize_run(input: &RunInput, config: &RunConfig) -> Result<Vec<Evaluation>> {
    match input {
        RunInput::Wav { path, truth } => {
            let audio = crate::audio::read_wav(path)?;
            let truth = truth.as_deref().map(Truth::load).transpose()?;
            if truth.is_none() && matches!(config.detector, DetectorMode::Oracle) {
                return Err(Error::MissingTruth);
            }
            let db = config.database(StftConfig::for_rate(audio.sample_rate))?;
            evaluate_signal(&audio.channels, truth.as_ref(), &db, config)
        }
        RunInput::Scenario(sc) => {
            let out = crate::simulator::mix_scenario(sc)?;
            let db = config.database(sc.stft())?;
            evaluate_signal(&out.mixture, Some(&out.truth), &db, config)
        }
    }
}

/// Database for the default geometry and STFT.
pub fn default_database() -> Result<PrototypeDatabase> {
    build_database(&ArrayGeometry::default(), StftConfig::default(), 72)
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg: RunConfig = toml::from_str(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{mix_scenario, ScenarioConfig};

    #[test]
    fn anechoic_single_source_is_found() {
        let sc = ScenarioConfig { doas: vec![35.0], snr_db: f64::INFINITY, t60: 0.0, duration: 1.5, seed: 3, ..Default::default() };
        let cfg = RunConfig { num_sources: 1, methods: vec![Method::Hermitian, Method::Music], ..Default::default() };
        let evals = localize_run(&RunInput::Scenario(sc), &cfg).unwrap();
        for e in &evals {
            assert!(e.summary.scored_frames > 20);
            assert!(e.summary.accuracy >= 0.95, "{:?}: {}", e.key.method, e.summary.accuracy);
        }
    }

    #[test]
    fn minus_infinity_threshold_matches_all_bins() {
        let sc = ScenarioConfig { duration: 1.0, seed: 4, ..Default::default() };
        let out = mix_scenario(&sc).unwrap();
        let db = default_database().unwrap();
        let cfg = RunConfig {
            methods: vec![Method::Hermitian, Method::Music],
            criteria: vec![
                CriterionSweep::single(Criterion::All, f64::NEG_INFINITY),
                CriterionSweep::single(Criterion::Cdr2, f64::NEG_INFINITY),
                CriterionSweep::single(Criterion::Cdr2, 1e9),
            ],
            ..Default::default()
        };
        let ev = evaluate_signal(&out.mixture, Some(&out.truth), &db, &cfg).unwrap();
        assert_eq!(ev[0].frames, ev[1].frames);
        assert_eq!(ev[3].frames, ev[4].frames);
        // nothing passes an absurd threshold
        assert_eq!(ev[2].summary.accuracy, 0.0);
        assert!(ev[2].frames.iter().all(|f| f.estimates.is_empty()));
    }

    #[test]
    fn run_is_deterministic_and_checks_channels() {
        let sc = ScenarioConfig { duration: 1.0, seed: 5, ..Default::default() };
        let out = mix_scenario(&sc).unwrap();
        let db = default_database().unwrap();
        let cfg = RunConfig::default();
        let a = evaluate_signal(&out.mixture, Some(&out.truth), &db, &cfg).unwrap();
        let b = evaluate_signal(&out.mixture, Some(&out.truth), &db, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            evaluate_signal(&out.mixture[..2], Some(&out.truth), &db, &cfg),
            Err(Error::DimensionMismatch { .. })
        ));
        let no_truth = evaluate_signal(&out.mixture, None, &db, &cfg);
        assert!(matches!(no_truth, Err(Error::MissingTruth)));
        let one = RunConfig { num_sources: 1, ..Default::default() };
        assert!(matches!(
            evaluate_signal(&out.mixture, Some(&out.truth), &db, &one),
            Err(Error::CountMismatch { truth: 2, estimated: 1 })
        ));
    }
}
