//! Synthetic speech-like source signals.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Shaping corner above which the spectrum falls by 6 dB/octave.
const SHAPING_CORNER_HZ: f64 = 500.0;
const MODULATION_HZ: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpeechKind {
    /// Shaped white noise with a 4 Hz amplitude modulation.
    ModulatedNoise,
    /// Harmonic voiced segments with vowel formants, pitch contours and
    /// syllable pauses; sparse in time-frequency like real speech.
    #[default]
    Voiced,
}

/// Zero-phase spectral shaping: flat below `SHAPING_CORNER_HZ`, magnitude
/// `corner / f` (−6 dB/octave) above. Applied circularly over the whole signal.
pub fn speech_shape(x: &mut [f64], sample_rate: f64) {
    let n = x.len();
    if n < 2 {
        return;
    }
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * sample_rate / n as f64;
        *z *= shaping_gain(f);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    for (v, z) in x.iter_mut().zip(&buf) {
        *v = z.re / n as f64;
    }
}

pub fn shaping_gain(f: f64) -> f64 {
    if f <= SHAPING_CORNER_HZ {
        1.0
    } else {
        SHAPING_CORNER_HZ / f
    }
}

/// White Gaussian noise, speech-shaped, times `½(1 + sin(2π·4t + φ))`.
pub fn modulated_noise(len: usize, sample_rate: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut x: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    speech_shape(&mut x, sample_rate);
    let phase = rng.random::<f64>() * 2.0 * PI;
    for (n, v) in x.iter_mut().enumerate() {
        let t = n as f64 / sample_rate;
        *v *= 0.5 * (1.0 + (2.0 * PI * MODULATION_HZ * t + phase).sin());
    }
    normalize(&mut x);
    x
}

// (F1, F2, F3) in Hz for a handful of vowels.
const VOWELS: [[f64; 3]; 6] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [300.0, 870.0, 2240.0],
    [660.0, 1720.0, 2410.0],
];
const FORMANT_BW: [f64; 3] = [90.0, 110.0, 170.0];
/// Resonance floor relative to a formant peak; keeps the long-term spectrum
/// close to `speech_shape`.
const FORMANT_FLOOR: f64 = 0.25;

fn formant_gain(f: f64, formants: &[f64; 3]) -> f64 {
    let mut g = FORMANT_FLOOR;
    for (fc, bw) in formants.iter().zip(FORMANT_BW) {
        g += 1.0 / (1.0 + ((f - fc) / bw).powi(2));
    }
    g * shaping_gain(f)
}

/// Voiced speech surrogate.
///
/// Syllables of 120–320 ms separated by 40–160 ms pauses; each syllable has
/// its own vowel and a gliding pitch around a speaker-specific mean in
/// 95–230 Hz. A Hann-shaped syllable envelope and a weak unvoiced onset keep
/// transitions smooth.
pub fn voiced(len: usize, sample_rate: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mean_f0 = 95.0 + 135.0 * rng.random::<f64>();
    let nyquist = sample_rate / 2.0;
    let mut out = vec![0.0; len];
    let mut start = (rng.random::<f64>() * 0.1 * sample_rate) as usize;
    let mut phases = Vec::new();
    while start < len {
        let dur = ((0.12 + 0.2 * rng.random::<f64>()) * sample_rate) as usize;
        let pause = ((0.04 + 0.12 * rng.random::<f64>()) * sample_rate) as usize;
        let vowel = VOWELS[rng.random_range(0..VOWELS.len())];
        let f0_start = mean_f0 * (1.0 + 0.15 * (rng.random::<f64>() - 0.5));
        let f0_end = mean_f0 * (1.0 + 0.25 * (rng.random::<f64>() - 0.5));
        let level = 0.6 + 0.8 * rng.random::<f64>();
        let harmonics = (nyquist / f0_start.max(f0_end)).floor() as usize;
        phases.clear();
        phases.extend((0..harmonics).map(|_| rng.random::<f64>() * 2.0 * PI));
        let gains: Vec<f64> = (1..=harmonics).map(|h| formant_gain(h as f64 * mean_f0, &vowel)).collect();
        let end = (start + dur).min(len);
        let mut f0_phase = 0.0;
        for n in start..end {
            let u = (n - start) as f64 / dur as f64;
            let f0 = f0_start + (f0_end - f0_start) * u;
            f0_phase += 2.0 * PI * f0 / sample_rate;
            let env = level * (PI * u).sin().powi(2);
            let mut s = 0.0;
            for (h, (&g, &ph)) in gains.iter().zip(&phases).enumerate() {
                let hf = (h + 1) as f64;
                if hf * f0 >= nyquist {
                    break;
                }
                s += g * (hf * f0_phase + ph).sin();
            }
            out[n] += env * s;
        }
        // unvoiced onset burst
        let burst = (0.02 * sample_rate) as usize;
        let mut noise: Vec<f64> = (0..burst.min(len - start)).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.05 * level).collect();
        speech_shape(&mut noise, sample_rate);
        for (i, v) in noise.into_iter().enumerate() {
            out[start + i] += v;
        }
        start = end + pause;
    }
    normalize(&mut out);
    out
}

pub fn generate(kind: SpeechKind, len: usize, sample_rate: f64, rng: &mut impl Rng) -> Vec<f64> {
    match kind {
        SpeechKind::ModulatedNoise => modulated_noise(len, sample_rate, rng),
        SpeechKind::Voiced => voiced(len, sample_rate, rng),
    }
}

/// Scales to unit mean power; silent input is left alone.
pub fn normalize(x: &mut [f64]) {
    let p = power(x);
    if p > 0.0 {
        let g = p.sqrt().recip();
        x.iter_mut().for_each(|v| *v *= g);
    }
}

pub fn power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}
