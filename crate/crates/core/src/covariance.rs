//! Recursive covariance tracking gated by a per-frame activity decision.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{HermitianMatrix, SpectralFrame, C64};

/// First-order recursive-average factor `exp(−hop/τ)`.
pub fn smoothing_factor(time_constant: f64, hop: f64) -> f64 {
    if time_constant.is_infinite() {
        return 1.0;
    }
    (-hop / time_constant).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activity {
    SpeechAndNoise,
    NoiseOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivitySource {
    EnergyDetector,
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityDecision {
    pub flags: Vec<Activity>,
    pub source: ActivitySource,
}

/// Energy detector settings. A frame is speech-and-noise when the pseudo
/// presence probability `1 − floor/energy` exceeds `threshold`; the default
/// 0.5 corresponds to an energy twice the noise floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyDetectorConfig {
    pub threshold: f64,
    /// Length of the running-minimum window, seconds.
    pub floor_window: f64,
    /// Frames kept active after the energy drops below threshold.
    pub hangover_frames: usize,
}

impl Default for EnergyDetectorConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            floor_window: 1.5,
            hangover_frames: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum DetectorMode {
    Energy(EnergyDetectorConfig),
    Oracle,
}

impl Default for DetectorMode {
    fn default() -> Self {
        DetectorMode::Oracle
    }
}

/// Mean per-channel energy of frame `l` over all bins except DC.
pub fn frame_energy(spec: &SpectralFrame, l: usize) -> f64 {
    let m = spec.channels();
    spec.frame(l)[m..].iter().map(|z| z.norm_sqr()).sum::<f64>() / m as f64
}

pub fn detect_activity(spec: &SpectralFrame, mode: &DetectorMode, truth: Option<&[bool]>) -> Result<ActivityDecision> {
    match mode {
        DetectorMode::Oracle => {
            let truth = truth.ok_or(Error::MissingTruth)?;
            let flags = (0..spec.frames())
                .map(|l| match truth.get(l) {
                    Some(true) => Activity::SpeechAndNoise,
                    _ => Activity::NoiseOnly,
                })
                .collect();
            Ok(ActivityDecision { flags, source: ActivitySource::Oracle })
        }
        DetectorMode::Energy(cfg) => {
            if !(cfg.threshold > 0.0 && cfg.threshold < 1.0) {
                return Err(Error::Config(format!("detector threshold {} outside (0, 1)", cfg.threshold)));
            }
            let energies: Vec<f64> = (0..spec.frames()).map(|l| frame_energy(spec, l)).collect();
            let window = ((cfg.floor_window / spec.config.hop_seconds()).round() as usize).max(1);
            Ok(ActivityDecision {
                flags: energy_flags(&energies, window, cfg),
                source: ActivitySource::EnergyDetector,
            })
        }
    }
}

fn energy_flags(energies: &[f64], window: usize, cfg: &EnergyDetectorConfig) -> Vec<Activity> {
    // monotone deque of (index, energy) for the running minimum
    let mut minq: VecDeque<(usize, f64)> = VecDeque::new();
    let mut hang = 0usize;
    let mut flags = Vec::with_capacity(energies.len());
    for (l, &e) in energies.iter().enumerate() {
        while minq.back().is_some_and(|&(_, v)| v >= e) {
            minq.pop_back();
        }
        minq.push_back((l, e));
        while minq.front().is_some_and(|&(i, _)| i + window <= l) {
            minq.pop_front();
        }
        let floor = minq.front().map_or(0.0, |&(_, v)| v);
        let presence = if e > 0.0 { 1.0 - floor / e } else { 0.0 };
        let active = if presence > cfg.threshold {
            hang = cfg.hangover_frames;
            true
        } else if hang > 0 {
            hang -= 1;
            true
        } else {
            false
        };
        flags.push(if active { Activity::SpeechAndNoise } else { Activity::NoiseOnly });
    }
    flags
}

/// Per-bin noisy and undesired covariance estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceState {
    pub phi_y: Vec<HermitianMatrix>,
    pub phi_u: Vec<HermitianMatrix>,
    pub alpha_y: f64,
    pub alpha_u: f64,
    pub frames_seen: usize,
}

impl CovarianceState {
    /// Both matrices start at `initial_power[k]·I`.
    pub fn new(channels: usize, initial_power: &[f64], alpha_y: f64, alpha_u: f64) -> Self {
        let init: Vec<HermitianMatrix> = initial_power
            .iter()
            .map(|&p| HermitianMatrix::scaled_identity(channels, p))
            .collect();
        Self {
            phi_y: init.clone(),
            phi_u: init,
            alpha_y,
            alpha_u,
            frames_seen: 0,
        }
    }

    /// Initializes from the mean per-channel bin power over the first
    /// `warmup_frames` frames.
    pub fn from_warmup(spec: &SpectralFrame, warmup_frames: usize, alpha_y: f64, alpha_u: f64) -> Self {
        let frames = warmup_frames.clamp(1, spec.frames().max(1));
        let m = spec.channels();
        let power: Vec<f64> = (0..spec.bins())
            .map(|k| {
                let mut acc = 0.0;
                for l in 0..frames.min(spec.frames()) {
                    acc += spec.vector(k, l).iter().map(|z| z.norm_sqr()).sum::<f64>();
                }
                (acc / (frames * m) as f64).max(1e-30)
            })
            .collect();
        Self::new(m, &power, alpha_y, alpha_u)
    }

    pub fn bins(&self) -> usize {
        self.phi_y.len()
    }

    pub fn channels(&self) -> usize {
        self.phi_y.first().map_or(0, HermitianMatrix::order)
    }

    /// Updates the matrix selected by `activity` with `y(k) yᴴ(k)` for every
    /// bin; the other matrix is held.
    pub fn update<'a>(&mut self, frame: impl Fn(usize) -> &'a [C64], activity: Activity) -> Result<()> {
        let (target, alpha) = match activity {
            Activity::SpeechAndNoise => (&mut self.phi_y, self.alpha_y),
            Activity::NoiseOnly => (&mut self.phi_u, self.alpha_u),
        };
        let m = target.first().map_or(0, HermitianMatrix::order);
        for (k, phi) in target.iter_mut().enumerate() {
            let y = frame(k);
            if y.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: y.len() });
            }
            phi.blend_outer(alpha, 1.0 - alpha, y);
        }
        self.frames_seen += 1;
        Ok(())
    }

    pub fn update_from(&mut self, spec: &SpectralFrame, l: usize, activity: Activity) -> Result<()> {
        if spec.bins() != self.bins() {
            return Err(Error::DimensionMismatch { expected: self.bins(), got: spec.bins() });
        }
        self.update(|k| spec.vector(k, l), activity)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{CMatrix, StftConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn smoothing_factor_values() {
        assert!((smoothing_factor(0.25, 0.016) - (-0.064f64).exp()).abs() < 1e-15);
        assert!((smoothing_factor(0.25, 0.016) - 0.938).abs() < 5e-4);
        assert!((smoothing_factor(0.5, 0.016) - 0.9685).abs() < 5e-4);
        assert_eq!(smoothing_factor(f64::INFINITY, 0.016), 1.0);
        assert!(smoothing_factor(1e9, 0.016) > 0.999_999);
    }

    #[test]
    fn zero_frame_scales_phi_y() {
        let mut st = CovarianceState::new(2, &[3.0, 5.0], 0.9, 0.8);
        let zero = vec![C64::new(0.0, 0.0); 2];
        st.update(|_| &zero, Activity::SpeechAndNoise).unwrap();
        assert_eq!(st.phi_y[0].matrix(), &CMatrix::identity(2).scale(3.0 * 0.9));
        assert_eq!(st.phi_y[1].matrix(), &CMatrix::identity(2).scale(5.0 * 0.9));
        // phi_u held
        assert_eq!(st.phi_u[1].matrix(), &CMatrix::identity(2).scale(5.0));
    }

    #[test]
    fn repeated_vector_converges_to_outer_product() {
        let v = vec![C64::new(1.0, 0.0), C64::new(0.5, -0.5), C64::new(0.0, 2.0)];
        let mut st = CovarianceState::new(3, &[1.0], 0.9, 0.9);
        let target = CMatrix::outer(&v);
        let mut prev = f64::INFINITY;
        for _ in 0..400 {
            st.update(|_| &v, Activity::SpeechAndNoise).unwrap();
            let err = st.phi_y[0].matrix().sub(&target).frobenius();
            assert!(err <= prev);
            prev = err;
        }
        assert!(prev < 1e-15 * 1e3);
        assert_eq!(st.phi_u[0].matrix(), &CMatrix::identity(3));
    }

    #[test]
    fn dimension_mismatch() {
        let mut st = CovarianceState::new(2, &[1.0], 0.9, 0.9);
        let v = vec![C64::new(1.0, 0.0); 3];
        assert!(matches!(
            st.update(|_| &v, Activity::NoiseOnly),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn white_noise_convergence() {
        // Every bin is an independent realization; the bin-averaged estimate
        // must have forgotten its (wrong) initialization after 10τ.
        let hop = 0.016;
        let tau = 0.5;
        let alpha = smoothing_factor(tau, hop);
        let sigma2 = 2.0;
        let bins = 257;
        let mut st = CovarianceState::new(4, &vec![10.0 * sigma2; bins], alpha, alpha);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let frames = (10.0 * tau / hop).ceil() as usize;
        for _ in 0..frames {
            let ys: Vec<Vec<C64>> = (0..bins)
                .map(|_| {
                    (0..4)
                        .map(|_| {
                            let re: f64 = StandardNormal.sample(&mut rng);
                            let im: f64 = StandardNormal.sample(&mut rng);
                            C64::new(re, im) * (sigma2 / 2.0).sqrt()
                        })
                        .collect()
                })
                .collect();
            st.update(|k| &ys[k], Activity::NoiseOnly).unwrap();
        }
        let mut mean = CMatrix::zeros(4);
        for phi in &st.phi_u {
            assert_eq!(phi.matrix().hermitian_defect(), 0.0);
            mean = mean.add(&phi.matrix().scale(1.0 / bins as f64));
        }
        let target = CMatrix::identity(4).scale(sigma2);
        let err = mean.sub(&target).frobenius() / target.frobenius();
        assert!(err < 0.05, "{err}");
    }

    fn spec_with_energies(energies: &[f64]) -> SpectralFrame {
        let cfg = StftConfig::default();
        let mut s = SpectralFrame::zeros(2, energies.len(), cfg);
        for (l, &e) in energies.iter().enumerate() {
            // put all energy in bin 1 on both channels: per-channel mean = e
            let a = e.sqrt();
            s.set(0, 1, l, C64::new(a, 0.0));
            s.set(1, 1, l, C64::new(a, 0.0));
        }
        s
    }

    #[test]
    fn energy_detector_semantics() {
        let mut e = vec![1.0; 20];
        e[10] = 100.0; // +20 dB
        e[15] = 0.0;
        let s = spec_with_energies(&e);
        let cfg = EnergyDetectorConfig { hangover_frames: 0, ..Default::default() };
        let d = detect_activity(&s, &DetectorMode::Energy(cfg), None).unwrap();
        assert_eq!(d.flags[10], Activity::SpeechAndNoise);
        assert_eq!(d.flags[15], Activity::NoiseOnly);
        assert_eq!(d.flags[5], Activity::NoiseOnly);
        assert_eq!(d.source, ActivitySource::EnergyDetector);
        let d = detect_activity(&s, &DetectorMode::Energy(EnergyDetectorConfig::default()), None).unwrap();
        assert_eq!(&d.flags[10..14], &[Activity::SpeechAndNoise; 4]);
        assert_eq!(d.flags[14], Activity::NoiseOnly);
    }

    #[test]
    fn all_zero_frames_are_noise() {
        let s = spec_with_energies(&[0.0; 5]);
        let d = detect_activity(&s, &DetectorMode::Energy(Default::default()), None).unwrap();
        assert!(d.flags.iter().all(|&f| f == Activity::NoiseOnly));
    }

    #[test]
    fn oracle_overrides_energy() {
        let s = spec_with_energies(&[0.0, 0.0, 50.0]);
        let truth = [true, false, false];
        let d = detect_activity(&s, &DetectorMode::Oracle, Some(&truth)).unwrap();
        assert_eq!(d.flags, vec![Activity::SpeechAndNoise, Activity::NoiseOnly, Activity::NoiseOnly]);
        assert!(matches!(detect_activity(&s, &DetectorMode::Oracle, None), Err(Error::MissingTruth)));
    }
}
