//! Short-time Fourier analysis with square-root Hann windows at 50% overlap.
//!
//! Bins are zero-based in code: bin 0 is DC, bin `K - 1` is Nyquist.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::linalg::C64;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    #[default]
    SqrtHann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub sample_rate: f64,
    pub window_len: usize,
    pub hop: usize,
    #[serde(default)]
    pub window_kind: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self::for_rate(16_000.0)
    }
}

impl StftConfig {
    /// 32 ms window, 50% overlap.
    pub fn for_rate(sample_rate: f64) -> Self {
        let mut window_len = (0.032 * sample_rate).round() as usize;
        window_len += window_len % 2;
        Self {
            sample_rate,
            window_len,
            hop: window_len / 2,
            window_kind: WindowKind::SqrtHann,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.window_len % 2 != 0 {
            return Err(Error::OddWindow(self.window_len));
        }
        if self.hop != self.window_len / 2 {
            return Err(Error::Config(format!(
                "hop {} must be half the window length {}",
                self.hop, self.window_len
            )));
        }
        if !(self.sample_rate > 0.0) {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        Ok(())
    }

    /// Number of one-sided bins `K = N/2 + 1`.
    pub fn num_bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop as f64 / self.sample_rate
    }

    /// Angular frequency (rad/s) of zero-based bin `k`.
    pub fn omega(&self, k: usize) -> f64 {
        2.0 * PI * self.bin_hz(k)
    }

    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate / self.window_len as f64
    }

    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.hop + 1
        }
    }

    pub fn window(&self) -> Vec<f64> {
        match self.window_kind {
            WindowKind::SqrtHann => sqrt_hann(self.window_len),
        }
    }
}

/// Periodic square-root Hann window; its square sums to one at 50% overlap.
pub fn sqrt_hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).sqrt())
        .collect()
}

/// Multichannel one-sided STFT coefficients.
///
/// Stored frame-major so the channel vector `y(k, l)` is contiguous.
#[derive(Debug, Clone)]
pub struct SpectralFrame {
    channels: usize,
    bins: usize,
    frames: usize,
    data: Vec<C64>,
    pub config: StftConfig,
}

impl SpectralFrame {
    pub fn zeros(channels: usize, frames: usize, config: StftConfig) -> Self {
        let bins = config.num_bins();
        Self {
            channels,
            bins,
            frames,
            data: vec![C64::new(0.0, 0.0); channels * bins * frames],
            config,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    fn offset(&self, k: usize, l: usize) -> usize {
        (l * self.bins + k) * self.channels
    }

    #[inline]
    pub fn get(&self, m: usize, k: usize, l: usize) -> C64 {
        self.data[self.offset(k, l) + m]
    }

    #[inline]
    pub fn set(&mut self, m: usize, k: usize, l: usize, v: C64) {
        let o = self.offset(k, l);
        self.data[o + m] = v;
    }

    /// `y(k, l)` across channels.
    #[inline]
    pub fn vector(&self, k: usize, l: usize) -> &[C64] {
        let o = self.offset(k, l);
        &self.data[o..o + self.channels]
    }

    #[inline]
    pub fn vector_mut(&mut self, k: usize, l: usize) -> &mut [C64] {
        let o = self.offset(k, l);
        let m = self.channels;
        &mut self.data[o..o + m]
    }

    /// All bins of frame `l`, bin-major.
    pub fn frame(&self, l: usize) -> &[C64] {
        let o = self.offset(0, l);
        &self.data[o..o + self.bins * self.channels]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }
}

/// Reusable forward/inverse transform for one configuration.
pub struct Stft {
    config: StftConfig,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(config: StftConfig) -> Result<Self> {
        config.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            window: config.window(),
            forward: planner.plan_fft_forward(config.window_len),
            inverse: planner.plan_fft_inverse(config.window_len),
            config,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn analyze(&self, signal: &[Vec<f64>]) -> Result<SpectralFrame> {
        let n = self.config.window_len;
        let len = check_channels(signal)?;
        if len < n {
            return Err(Error::SignalTooShort { len, window_len: n });
        }
        let frames = self.config.num_frames(len);
        let bins = self.config.num_bins();
        let mut out = SpectralFrame::zeros(signal.len(), frames, self.config);
        let mut buf = vec![C64::new(0.0, 0.0); n];
        let mut scratch = vec![C64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        for (m, ch) in signal.iter().enumerate() {
            for l in 0..frames {
                let start = l * self.config.hop;
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = C64::new(ch[start + i] * self.window[i], 0.0);
                }
                self.forward.process_with_scratch(&mut buf, &mut scratch);
                for (k, &z) in buf.iter().take(bins).enumerate() {
                    out.set(m, k, l, z);
                }
            }
        }
        Ok(out)
    }

    /// Weighted overlap-add resynthesis with the same window. Samples covered
    /// by two frames are reconstructed exactly from an unmodified analysis.
    pub fn synthesize(&self, spec: &SpectralFrame, len: usize) -> Vec<Vec<f64>> {
        let n = self.config.window_len;
        let hop = self.config.hop;
        let bins = self.config.num_bins();
        let scale = 1.0 / n as f64;
        let mut out = vec![vec![0.0; len]; spec.channels()];
        let mut buf = vec![C64::new(0.0, 0.0); n];
        let mut scratch = vec![C64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        for (m, ch) in out.iter_mut().enumerate() {
            for l in 0..spec.frames() {
                for k in 0..bins {
                    buf[k] = spec.get(m, k, l);
                }
                // Hermitian completion; DC and Nyquist must be real.
                buf[0].im = 0.0;
                buf[n / 2].im = 0.0;
                for k in 1..n / 2 {
                    buf[n - k] = buf[k].conj();
                }
                self.inverse.process_with_scratch(&mut buf, &mut scratch);
                let start = l * hop;
                for i in 0..n {
                    if start + i < len {
                        ch[start + i] += buf[i].re * scale * self.window[i];
                    }
                }
            }
        }
        out
    }
}

pub fn stft_analyze(signal: &[Vec<f64>], config: StftConfig) -> Result<SpectralFrame> {
    Stft::new(config)?.analyze(signal)
}

pub(crate) fn check_channels(signal: &[Vec<f64>]) -> Result<usize> {
    let expected = signal.first().map_or(0, Vec::len);
    for (channel, ch) in signal.iter().enumerate() {
        if ch.len() != expected {
            return Err(Error::ChannelLengthMismatch {
                channel,
                len: ch.len(),
                expected,
            });
        }
    }
    Ok(expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_config_is_32ms_half_overlap() {
        let c = StftConfig::default();
        assert_eq!(c.window_len, 512);
        assert_eq!(c.hop, 256);
        assert_eq!(c.num_bins(), 257);
    }

    #[test]
    fn squared_window_is_cola() {
        let c = StftConfig::default();
        let w = c.window();
        let len = 10 * c.window_len;
        let mut acc = vec![0.0; len];
        for l in 0..c.num_frames(len) {
            for i in 0..c.window_len {
                acc[l * c.hop + i] += w[i] * w[i];
            }
        }
        for &v in &acc[c.window_len..len - c.window_len] {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_signal_zero_spectrum() {
        let s = stft_analyze(&[vec![0.0; 2048], vec![0.0; 2048]], StftConfig::default()).unwrap();
        assert_eq!(s.frames(), 7);
        assert!(s.as_slice().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = StftConfig::default();
        assert!(matches!(
            stft_analyze(&[vec![0.0; 1024], vec![0.0; 1000]], c),
            Err(Error::ChannelLengthMismatch { channel: 1, .. })
        ));
        assert!(matches!(stft_analyze(&[vec![0.0; 100]], c), Err(Error::SignalTooShort { .. })));
        let odd = StftConfig { window_len: 511, hop: 255, ..c };
        assert!(matches!(stft_analyze(&[vec![0.0; 1024]], odd), Err(Error::OddWindow(511))));
    }

    /// Direct O(N²) DFT of one windowed frame.
    fn dft_frame(x: &[f64], w: &[f64]) -> Vec<C64> {
        let n = x.len();
        (0..n / 2 + 1)
            .map(|k| {
                (0..n)
                    .map(|t| {
                        let ph = -2.0 * PI * (k * t) as f64 / n as f64;
                        C64::from_polar(x[t] * w[t], ph)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn bin_centre_tone_concentrates_energy() {
        let c = StftConfig::default();
        let k0 = 40;
        let f = c.bin_hz(k0);
        let x: Vec<f64> = (0..4096).map(|t| (2.0 * PI * f * t as f64 / c.sample_rate).cos()).collect();
        let s = stft_analyze(&[x.clone()], c).unwrap();
        let w = c.window();
        for l in 0..s.frames() {
            let oracle = dft_frame(&x[l * c.hop..l * c.hop + c.window_len], &w);
            for k in 0..c.num_bins() {
                assert!((oracle[k] - s.get(0, k, l)).norm() < 1e-9);
            }
            let total: f64 = oracle.iter().map(|z| z.norm_sqr()).sum();
            // The sqrt-Hann main lobe spans neighbouring bins; count k0 ± 1.
            let centre: f64 = (k0 - 1..=k0 + 1).map(|k| oracle[k].norm_sqr()).sum();
            assert!(centre / total >= 0.99, "{}", centre / total);
        }
    }

    #[test]
    fn frame_parseval() {
        let c = StftConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..2048).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = stft_analyze(&[x.clone()], c).unwrap();
        let w = c.window();
        let n = c.window_len;
        for l in 0..s.frames() {
            let time: f64 = (0..n).map(|i| (x[l * c.hop + i] * w[i]).powi(2)).sum();
            let mut freq = s.get(0, 0, l).norm_sqr() + s.get(0, n / 2, l).norm_sqr();
            for k in 1..n / 2 {
                freq += 2.0 * s.get(0, k, l).norm_sqr();
            }
            freq /= n as f64;
            assert!((time - freq).abs() <= 1e-9 * time);
        }
    }

    #[test]
    fn analysis_synthesis_reconstructs_interior() {
        let c = StftConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..8192).map(|_| rng.random_range(-1.0..1.0)).collect();
        let stft = Stft::new(c).unwrap();
        let y = stft.synthesize(&stft.analyze(&[x.clone()]).unwrap(), x.len());
        for t in c.window_len..x.len() - c.window_len {
            assert!((x[t] - y[0][t]).abs() < 1e-10);
        }
    }
}
