//! Binaural scenario synthesis: image-source reverberation, coherent babble
//! and SNR-calibrated mixing with per-frame ground truth.

pub mod babble;
pub mod rir;
pub mod speech;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::array_model::{build_geometry, circular_distance, GeometryConfig};
use crate::audio::{read_wav, write_wav};
use crate::error::{Error, Result};
use crate::numerics::{StftConfig, C64};
use rir::{simulate_rir, ArrayPose, Room};
pub use speech::SpeechKind;

/// Mean per-mic speech power each source is calibrated to.
const SPEECH_LEVEL: f64 = 0.01;
const BABBLE_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Room dimensions in metres.
    pub room: [f64; 3],
    pub t60: f64,
    pub array_position: [f64; 3],
    pub array_yaw_deg: f64,
    pub doas: Vec<f64>,
    pub source_distance: f64,
    /// `inf` disables the noise.
    pub snr_db: f64,
    /// Speech duration in seconds, after the lead-in.
    pub duration: f64,
    /// Noise-only lead-in in seconds.
    pub lead_in: f64,
    pub seed: u64,
    pub speech: SpeechKind,
    /// Optional mono WAVs, one per DOA; replace the synthetic generator.
    pub sources: Vec<PathBuf>,
    pub min_separation: f64,
    pub sample_rate: f64,
    pub max_order: usize,
    pub babble_talkers: usize,
    /// A source counts as active in a frame whose energy lies within this
    /// many dB of its mean frame energy.
    pub activity_floor_db: f64,
    pub geometry: GeometryConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            room: [5.0, 4.5, 2.8],
            t60: 0.3,
            array_position: [2.5, 2.0, 1.4],
            array_yaw_deg: 0.0,
            doas: vec![-30.0, 20.0],
            source_distance: 1.5,
            snr_db: 5.0,
            duration: 4.0,
            lead_in: 0.5,
            seed: 0,
            speech: SpeechKind::default(),
            sources: Vec::new(),
            min_separation: 15.0,
            sample_rate: 16_000.0,
            max_order: 6,
            babble_talkers: 8,
            activity_floor_db: -30.0,
            geometry: GeometryConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.doas.is_empty() {
            return Err(Error::Scenario("at least one source DOA is required".into()));
        }
        for (i, &a) in self.doas.iter().enumerate() {
            for &b in &self.doas[i + 1..] {
                if circular_distance(a, b) < self.min_separation {
                    return Err(Error::Scenario(format!(
                        "DOAs {a}° and {b}° are closer than {}°",
                        self.min_separation
                    )));
                }
            }
        }
        if !(self.t60 >= 0.0) {
            return Err(Error::Scenario(format!("T60 must be nonnegative, got {}", self.t60)));
        }
        if !(self.duration > 0.0) || !(self.lead_in >= 0.0) {
            return Err(Error::Scenario("duration must be positive and lead-in nonnegative".into()));
        }
        if !(self.source_distance > 0.0) {
            return Err(Error::Scenario("source distance must be positive".into()));
        }
        if self.snr_db.is_nan() {
            return Err(Error::Scenario("SNR is NaN".into()));
        }
        if !self.sources.is_empty() && self.sources.len() != self.doas.len() {
            return Err(Error::Scenario(format!(
                "{} source files for {} DOAs",
                self.sources.len(),
                self.doas.len()
            )));
        }
        Ok(())
    }

    pub fn stft(&self) -> StftConfig {
        StftConfig::for_rate(self.sample_rate)
    }

    pub fn lead_in_samples(&self) -> usize {
        (self.lead_in * self.sample_rate).round() as usize
    }

    pub fn total_samples(&self) -> usize {
        self.lead_in_samples() + (self.duration * self.sample_rate).round() as usize
    }
}

/// Ground truth emitted next to the mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub doas: Vec<f64>,
    /// `None` when the scenario is noiseless.
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub sample_rate: f64,
    pub window_len: usize,
    pub hop: usize,
    pub lead_in_samples: usize,
    /// `source_active[l][d]`
    pub source_active: Vec<Vec<bool>>,
    /// Any source active.
    pub frame_active: Vec<bool>,
}

impl Truth {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub sample_rate: f64,
    /// `mixture[m][n]`
    pub mixture: Vec<Vec<f64>>,
    /// `direct[d][m][n]`
    pub direct: Vec<Vec<Vec<f64>>>,
    pub reverberant: Vec<Vec<Vec<f64>>>,
    pub noise: Vec<Vec<f64>>,
    pub truth: Truth,
}

impl ScenarioOutput {
    /// Writes `mixture.wav` and `truth.json`, plus per-component WAVs when
    /// `components` is set.
    pub fn write(&self, dir: &Path, components: bool) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_wav(&dir.join("mixture.wav"), &self.mixture, self.sample_rate)?;
        self.truth.save(&dir.join("truth.json"))?;
        if components {
            for (d, (dp, rv)) in self.direct.iter().zip(&self.reverberant).enumerate() {
                write_wav(&dir.join(format!("direct_{d}.wav")), dp, self.sample_rate)?;
                write_wav(&dir.join(format!("reverberant_{d}.wav")), rv, self.sample_rate)?;
            }
            write_wav(&dir.join("noise.wav"), &self.noise, self.sample_rate)?;
        }
        Ok(())
    }
}

/// Linear convolution through one zero-padded FFT of the input, reused for
/// several impulse responses.
struct Convolver {
    size: usize,
    spectrum: Vec<C64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Convolver {
    fn new(x: &[f64], max_ir: usize) -> Self {
        let size = (x.len() + max_ir).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let mut spectrum: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
        spectrum.resize(size, C64::new(0.0, 0.0));
        forward.process(&mut spectrum);
        Self { size, spectrum, forward, inverse }
    }

    /// First `len` samples of `x * h`.
    fn apply(&self, h: &[f64], len: usize) -> Vec<f64> {
        if h.iter().all(|&v| v == 0.0) {
            return vec![0.0; len];
        }
        let mut buf: Vec<C64> = h.iter().map(|&v| C64::new(v, 0.0)).collect();
        buf.resize(self.size, C64::new(0.0, 0.0));
        self.forward.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s;
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.size as f64;
        buf.iter().take(len).map(|z| z.re * scale).collect()
    }
}

fn mean_power(channels: &[Vec<f64>], from: usize) -> f64 {
    let n: usize = channels.iter().map(|c| c.len().saturating_sub(from)).sum();
    if n == 0 {
        return 0.0;
    }
    channels.iter().flat_map(|c| c[from.min(c.len())..].iter()).map(|v| v * v).sum::<f64>() / n as f64
}

fn load_source(path: &Path, sample_rate: f64, len: usize) -> Result<Vec<f64>> {
    let audio = read_wav(path)?;
    if (audio.sample_rate - sample_rate).abs() > 0.5 {
        return Err(Error::Scenario(format!(
            "{} is sampled at {} Hz, scenario at {sample_rate} Hz",
            path.display(),
            audio.sample_rate
        )));
    }
    let ch = audio.channels.into_iter().next().unwrap_or_default();
    if ch.is_empty() {
        return Err(Error::Scenario(format!("{} has no samples", path.display())));
    }
    // loop short files
    Ok((0..len).map(|n| ch[n % ch.len()]).collect())
}

/// Per-frame activity of each source from its direct-path component.
fn oracle_activity(direct: &[Vec<Vec<f64>>], stft: &StftConfig, lead_in: usize, floor_db: f64) -> Vec<Vec<bool>> {
    let win: Vec<f64> = stft.window().iter().map(|w| w * w).collect();
    let len = direct[0][0].len();
    let frames = stft.num_frames(len);
    let mut active = vec![vec![false; direct.len()]; frames];
    for (d, src) in direct.iter().enumerate() {
        let energy: Vec<f64> = (0..frames)
            .map(|l| {
                let start = l * stft.hop;
                src.iter()
                    .map(|ch| ch[start..start + stft.window_len].iter().zip(&win).map(|(x, w)| x * x * w).sum::<f64>())
                    .sum()
            })
            .collect();
        let first = lead_in.div_ceil(stft.hop).min(frames);
        let body = &energy[first..];
        let mean = if body.is_empty() { 0.0 } else { body.iter().sum::<f64>() / body.len() as f64 };
        let threshold = mean * 10f64.powf(floor_db / 10.0);
        for (l, &e) in energy.iter().enumerate() {
            active[l][d] = e > threshold && e > 0.0;
        }
    }
    active
}

/// Synthesizes the scenario described by `config`.
pub fn mix_scenario(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    config.validate()?;
    let geometry = build_geometry(&config.geometry)?;
    let stft = config.stft();
    stft.validate()?;
    let room = Room { dims: config.room };
    let pose = ArrayPose { geometry: geometry.clone(), position: config.array_position, yaw_deg: config.array_yaw_deg };
    let fs = config.sample_rate;
    let lead = config.lead_in_samples();
    let total = config.total_samples();
    let speech_len = total - lead;
    let m = geometry.num_mics();

    let mut direct = Vec::with_capacity(config.doas.len());
    let mut reverberant = Vec::with_capacity(config.doas.len());
    for (d, &doa) in config.doas.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(d as u64 + 1);
        let dry = match config.sources.get(d) {
            Some(path) => load_source(path, fs, speech_len)?,
            None => speech::generate(config.speech, speech_len, fs, &mut rng),
        };
        let mut signal = vec![0.0; lead];
        signal.extend(dry);
        let src = pose.source_position(doa, config.source_distance);
        let rir = simulate_rir(&room, &pose, src, config.t60, fs, config.max_order)?;
        let max_ir = rir.direct.iter().chain(&rir.reverberant).map(Vec::len).max().unwrap_or(1);
        let conv = Convolver::new(&signal, max_ir);
        let dp: Vec<Vec<f64>> = rir.direct.iter().map(|h| conv.apply(h, total)).collect();
        let rv: Vec<Vec<f64>> = rir.reverberant.iter().map(|h| conv.apply(h, total)).collect();
        let image: Vec<Vec<f64>> = dp.iter().zip(&rv).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
        let p = mean_power(&image, lead);
        if !(p > 0.0) {
            return Err(Error::SilentSource(d));
        }
        let g = (SPEECH_LEVEL / p).sqrt();
        direct.push(dp.into_iter().map(|c| c.into_iter().map(|v| v * g).collect()).collect::<Vec<Vec<f64>>>());
        reverberant.push(rv.into_iter().map(|c| c.into_iter().map(|v| v * g).collect()).collect::<Vec<Vec<f64>>>());
    }

    let noise = if config.snr_db == f64::INFINITY {
        vec![vec![0.0; total]; m]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(BABBLE_STREAM);
        let raw = babble::diffuse_babble(&geometry, total, stft, config.babble_talkers, config.speech, &mut rng)?;
        let g = (SPEECH_LEVEL / 10f64.powf(config.snr_db / 10.0) / mean_power(&raw, 0)).sqrt();
        raw.into_iter().map(|c| c.into_iter().map(|v| v * g).collect()).collect()
    };

    let mut out = assemble(direct, reverberant, noise, config, &stft, lead);
    let peak = out.mixture.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    if peak > 1.0 {
        log::warn!("mixture peak {peak:.3} would clip; rescaling every component");
        let g = 0.99 / peak;
        let scale = |x: &mut Vec<Vec<f64>>| x.iter_mut().flatten().for_each(|v| *v *= g);
        out.direct.iter_mut().for_each(scale);
        out.reverberant.iter_mut().for_each(scale);
        scale(&mut out.noise);
        out.mixture = sum_components(&out.direct, &out.reverberant, &out.noise);
    }
    Ok(out)
}

fn sum_components(direct: &[Vec<Vec<f64>>], reverberant: &[Vec<Vec<f64>>], noise: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut mixture = noise.to_vec();
    for (dp, rv) in direct.iter().zip(reverberant) {
        for (mix, (a, b)) in mixture.iter_mut().zip(dp.iter().zip(rv)) {
            for (x, (u, v)) in mix.iter_mut().zip(a.iter().zip(b)) {
                *x += u + v;
            }
        }
    }
    mixture
}

fn assemble(
    direct: Vec<Vec<Vec<f64>>>,
    reverberant: Vec<Vec<Vec<f64>>>,
    noise: Vec<Vec<f64>>,
    config: &ScenarioConfig,
    stft: &StftConfig,
    lead: usize,
) -> ScenarioOutput {
    let mixture = sum_components(&direct, &reverberant, &noise);
    let source_active = oracle_activity(&direct, stft, lead, config.activity_floor_db);
    let frame_active = source_active.iter().map(|f| f.iter().any(|&a| a)).collect();
    ScenarioOutput {
        sample_rate: config.sample_rate,
        mixture,
        direct,
        reverberant,
        noise,
        truth: Truth {
            doas: config.doas.clone(),
            snr_db: config.snr_db.is_finite().then_some(config.snr_db),
            seed: config.seed,
            sample_rate: config.sample_rate,
            window_len: stft.window_len,
            hop: stft.hop,
            lead_in_samples: lead,
            source_active,
            frame_active,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(doas: Vec<f64>, snr: f64, t60: f64) -> ScenarioConfig {
        ScenarioConfig { doas, snr_db: snr, t60, duration: 1.5, seed: 7, ..Default::default() }
    }

    #[test]
    fn mixture_is_sum_of_components() {
        let out = mix_scenario(&short(vec![-30.0, 20.0], 5.0, 0.3)).unwrap();
        let sum = sum_components(&out.direct, &out.reverberant, &out.noise);
        for (a, b) in out.mixture.iter().flatten().zip(sum.iter().flatten()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(out.mixture.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn snr_is_calibrated() {
        let out = mix_scenario(&short(vec![-30.0, 20.0], 5.0, 0.3)).unwrap();
        let lead = out.truth.lead_in_samples;
        let noise = mean_power(&out.noise, 0);
        for d in 0..2 {
            let image: Vec<Vec<f64>> = out.direct[d]
                .iter()
                .zip(&out.reverberant[d])
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect();
            let snr = 10.0 * (mean_power(&image, lead) / noise).log10();
            assert!((snr - 5.0).abs() < 0.1, "source {d}: {snr}");
        }
    }

    #[test]
    fn infinite_snr_means_no_noise() {
        let out = mix_scenario(&short(vec![0.0], f64::INFINITY, 0.0)).unwrap();
        assert!(out.noise.iter().flatten().all(|&v| v == 0.0));
        assert!(out.reverberant[0].iter().flatten().all(|&v| v == 0.0));
        assert_eq!(out.truth.snr_db, None);
    }

    #[test]
    fn truth_lists_doas_and_activity() {
        let cfg = ScenarioConfig { speech: SpeechKind::ModulatedNoise, ..short(vec![-30.0, 20.0], 20.0, 0.3) };
        let out = mix_scenario(&cfg).unwrap();
        assert_eq!(out.truth.doas, vec![-30.0, 20.0]);
        let first = out.truth.lead_in_samples.div_ceil(out.truth.hop) + 1;
        let frames = &out.truth.frame_active;
        assert!(frames[..out.truth.lead_in_samples / out.truth.hop - 1].iter().all(|&a| !a));
        assert!(frames[first..].iter().all(|&a| a));
    }

    #[test]
    fn deterministic() {
        let cfg = short(vec![-30.0, 20.0], 0.0, 0.3);
        assert_eq!(mix_scenario(&cfg).unwrap(), mix_scenario(&cfg).unwrap());
        let other = ScenarioConfig { seed: 8, ..cfg.clone() };
        assert_ne!(mix_scenario(&cfg).unwrap().mixture, mix_scenario(&other).unwrap().mixture);
    }

    #[test]
    fn config_validation() {
        assert!(short(vec![0.0, 10.0], 5.0, 0.3).validate().is_err());
        assert!(short(vec![], 5.0, 0.3).validate().is_err());
        assert!(short(vec![0.0], 5.0, -0.1).validate().is_err());
        assert!(ScenarioConfig::from_toml("doas = [10.0, 60.0]\nsnr_db = inf\n").unwrap().snr_db.is_infinite());
        assert!(ScenarioConfig::from_toml("bogus = 1\n").is_err());
    }

    #[test]
    fn wav_sources_are_used() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let tone: Vec<f64> = (0..8000).map(|n| (n as f64 * 0.3).sin() * 0.1).collect();
        write_wav(&p, &[tone], 16_000.0).unwrap();
        let cfg = ScenarioConfig { sources: vec![p], ..short(vec![45.0], f64::INFINITY, 0.0) };
        let out = mix_scenario(&cfg).unwrap();
        assert!(mean_power(&out.mixture, 0) > 0.0);
        let silent = dir.path().join("z.wav");
        write_wav(&silent, &[vec![0.0; 100]], 16_000.0).unwrap();
        let cfg = ScenarioConfig { sources: vec![silent], ..cfg };
        assert!(matches!(mix_scenario(&cfg), Err(Error::SilentSource(0))));
    }

    #[test]
    fn outputs_written() {
        let dir = tempfile::tempdir().unwrap();
        let out = mix_scenario(&short(vec![0.0], 10.0, 0.2)).unwrap();
        out.write(dir.path(), true).unwrap();
        let t = Truth::load(&dir.path().join("truth.json")).unwrap();
        assert_eq!(t, out.truth);
        let a = read_wav(&dir.path().join("mixture.wav")).unwrap();
        assert_eq!(a.channels.len(), 4);
        assert!(dir.path().join("noise.wav").exists());
    }
}
