//! Shoebox image-source room impulse responses.

use serde::{Deserialize, Serialize};

use crate::array_model::{wrap_deg, ArrayGeometry};
use crate::error::{Error, Result};

/// Sabine's constant in s/m.
const SABINE: f64 = 0.161;
/// Half-length of the fractional-delay interpolator (8 taps total).
const HALF_TAPS: i64 = 32;
const KAISER_BETA: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub dims: [f64; 3],
}

impl Room {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|d| p[d] > 0.0 && p[d] < self.dims[d])
    }

    pub fn volume(&self) -> f64 {
        self.dims.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dims;
        2.0 * (x * y + x * z + y * z)
    }

    /// Uniform wall reflection coefficient `√(1 − α)` from Sabine's formula.
    pub fn reflection_coefficient(&self, t60: f64) -> Result<f64> {
        if t60 < 0.0 || !t60.is_finite() {
            return Err(Error::Scenario(format!("T60 must be finite and nonnegative, got {t60}")));
        }
        if t60 == 0.0 {
            return Ok(0.0);
        }
        let absorption = SABINE * self.volume() / (self.surface() * t60);
        if absorption > 1.0 {
            return Err(Error::T60TooSmall { t60, absorption });
        }
        Ok((1.0 - absorption).sqrt())
    }
}

/// Array placement: geometry centroid at `position`, front axis rotated by
/// `yaw_deg` about +z.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayPose {
    pub geometry: ArrayGeometry,
    pub position: [f64; 3],
    pub yaw_deg: f64,
}

impl ArrayPose {
    pub fn mic_position(&self, m: usize) -> [f64; 3] {
        let c = self.geometry.centroid();
        let p = self.geometry.mic_positions[m];
        let (s, co) = self.yaw_deg.to_radians().sin_cos();
        let (x, y) = (p[0] - c[0], p[1] - c[1]);
        [
            self.position[0] + co * x - s * y,
            self.position[1] + s * x + co * y,
            self.position[2] + p[2] - c[2],
        ]
    }

    /// World position at azimuth `doa_deg` (array frame) and `distance` in
    /// the horizontal plane of the array.
    pub fn source_position(&self, doa_deg: f64, distance: f64) -> [f64; 3] {
        let a = (doa_deg + self.yaw_deg).to_radians();
        [self.position[0] + distance * a.cos(), self.position[1] + distance * a.sin(), self.position[2]]
    }

    /// Azimuth of a world point as seen from the array, in the array frame.
    pub fn azimuth_of(&self, p: [f64; 3]) -> f64 {
        let dx = p[0] - self.position[0];
        let dy = p[1] - self.position[1];
        wrap_deg(dy.atan2(dx).to_degrees() - self.yaw_deg)
    }
}

/// Per-mic impulse responses split into the direct path and the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomResponse {
    pub direct: Vec<Vec<f64>>,
    pub reverberant: Vec<Vec<f64>>,
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..50 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

fn kaiser(x: f64) -> f64 {
    let r = x / HALF_TAPS as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / bessel_i0(KAISER_BETA)
}

fn sinc_pi(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
    }
}

/// Adds `gain·δ(n − delay)` to `h` with an 8-tap Kaiser-windowed sinc.
pub fn add_fractional_impulse(h: &mut Vec<f64>, delay: f64, gain: f64) {
    let base = delay.floor() as i64;
    for n in base - HALF_TAPS + 1..=base + HALF_TAPS {
        if n < 0 {
            continue;
        }
        let x = n as f64 - delay;
        let w = sinc_pi(x) * kaiser(x);
        let idx = n as usize;
        if idx >= h.len() {
            h.resize(idx + 1, 0.0);
        }
        h[idx] += gain * w;
    }
}

/// Image-source responses from `source` to every mic of `pose`.
///
/// Each axis contributes images `(1 − 2q)·s + 2n·L` for `q ∈ {0, 1}`, with
/// `|2n − q|` wall reflections; images are kept while every axis has at most
/// `max_order` reflections. Image amplitudes are `β^reflections / (4πr)`
/// times the head-shadow gain for the image's arrival azimuth.
pub fn simulate_rir(room: &Room, pose: &ArrayPose, source: [f64; 3], t60: f64, sample_rate: f64, max_order: usize) -> Result<RoomResponse> {
    if !room.contains(source) {
        return Err(Error::Scenario(format!("source {source:?} lies outside the room")));
    }
    let m = pose.geometry.num_mics();
    for i in 0..m {
        if !room.contains(pose.mic_position(i)) {
            return Err(Error::Scenario(format!("microphone {i} lies outside the room")));
        }
    }
    let beta = room.reflection_coefficient(t60)?;
    let c = pose.geometry.speed_of_sound;
    let order = max_order as i64;
    let mut direct = vec![Vec::new(); m];
    let mut reverberant = vec![Vec::new(); m];

    let axis_images = |d: usize| -> Vec<(f64, i64)> {
        let mut v = Vec::new();
        for q in 0..2i64 {
            for n in -order..=order {
                let refl = (2 * n - q).abs();
                if refl <= order {
                    let pos = (1 - 2 * q) as f64 * source[d] + 2.0 * n as f64 * room.dims[d];
                    v.push((pos, refl));
                }
            }
        }
        v
    };
    let (ix, iy, iz) = (axis_images(0), axis_images(1), axis_images(2));

    for &(x, rx) in &ix {
        for &(y, ry) in &iy {
            for &(z, rz) in &iz {
                let refl = rx + ry + rz;
                let is_direct = refl == 0;
                if !is_direct && beta == 0.0 {
                    continue;
                }
                let amp = beta.powi(refl as i32);
                let image = [x, y, z];
                let azimuth = pose.azimuth_of(image);
                for (mic, (dh, rh)) in direct.iter_mut().zip(reverberant.iter_mut()).enumerate() {
                    let p = pose.mic_position(mic);
                    let r = ((x - p[0]).powi(2) + (y - p[1]).powi(2) + (z - p[2]).powi(2)).sqrt();
                    let gain = amp * pose.geometry.shadow_gain(mic, azimuth) / (4.0 * std::f64::consts::PI * r);
                    let delay = r / c * sample_rate;
                    add_fractional_impulse(if is_direct { dh } else { rh }, delay, gain);
                }
            }
        }
    }
    Ok(RoomResponse { direct, reverberant })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose() -> ArrayPose {
        ArrayPose { geometry: ArrayGeometry::default(), position: [2.5, 2.0, 1.4], yaw_deg: 0.0 }
    }

    fn room() -> Room {
        Room { dims: [5.0, 4.5, 2.8] }
    }

    fn peak(h: &[f64]) -> usize {
        h.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap().0
    }

    #[test]
    fn anechoic_room_has_no_tail() {
        let p = pose();
        let src = p.source_position(0.0, 1.5);
        let r = simulate_rir(&room(), &p, src, 0.0, 16_000.0, 6).unwrap();
        for h in &r.reverberant {
            assert!(h.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn direct_delay_matches_distance() {
        let p = pose();
        let src = p.source_position(0.0, 1.5);
        let r = simulate_rir(&room(), &p, src, 0.3, 16_000.0, 6).unwrap();
        for (m, h) in r.direct.iter().enumerate() {
            let mic = p.mic_position(m);
            let dist = ((src[0] - mic[0]).powi(2) + (src[1] - mic[1]).powi(2)).sqrt();
            let expected = dist / 343.0 * 16_000.0;
            assert!((peak(h) as f64 - expected).abs() <= 1.0, "{} vs {expected}", peak(h));
        }
        // 1.5 m at 343 m/s is about 70 samples
        assert!((peak(&r.direct[0]) as i64 - 70).abs() <= 1);
    }

    #[test]
    fn doubling_distance_halves_direct_gain() {
        let p = pose();
        let big = Room { dims: [9.0, 9.0, 3.0] };
        let p = ArrayPose { position: [4.5, 4.5, 1.4], ..p };
        let near = simulate_rir(&big, &p, p.source_position(0.0, 1.0), 0.0, 16_000.0, 0).unwrap();
        let far = simulate_rir(&big, &p, p.source_position(0.0, 2.0), 0.0, 16_000.0, 0).unwrap();
        // DC gain is insensitive to the fractional part of the delay
        let energy = |h: &[f64]| h.iter().sum::<f64>();
        // distances from the mic differ slightly from the centroid distances
        let mic = p.mic_position(0);
        let d = |s: [f64; 3]| ((s[0] - mic[0]).powi(2) + (s[1] - mic[1]).powi(2)).sqrt();
        let ratio = energy(&far.direct[0]) / energy(&near.direct[0]);
        let expected = d(p.source_position(0.0, 1.0)) / d(p.source_position(0.0, 2.0));
        assert!((ratio - expected).abs() < 0.01, "{ratio} vs {expected}");
        assert!((ratio - 0.5).abs() < 0.02);
    }

    #[test]
    fn errors() {
        let p = pose();
        assert!(matches!(simulate_rir(&room(), &p, [6.0, 1.0, 1.0], 0.3, 16_000.0, 6), Err(Error::Scenario(_))));
        assert!(matches!(
            simulate_rir(&room(), &p, p.source_position(0.0, 1.0), 0.01, 16_000.0, 6),
            Err(Error::T60TooSmall { .. })
        ));
    }

    #[test]
    fn tail_decays_with_t60() {
        let p = pose();
        let src = p.source_position(30.0, 1.5);
        let short = simulate_rir(&room(), &p, src, 0.2, 16_000.0, 6).unwrap();
        let long = simulate_rir(&room(), &p, src, 0.6, 16_000.0, 6).unwrap();
        let e = |h: &[f64]| h.iter().map(|v| v * v).sum::<f64>();
        assert!(e(&long.reverberant[0]) > e(&short.reverberant[0]));
        assert_eq!(short.direct, long.direct);
    }

    #[test]
    fn fractional_impulse_interpolates() {
        let mut h = Vec::new();
        add_fractional_impulse(&mut h, 10.0, 1.0);
        assert!((h[10] - 1.0).abs() < 1e-15);
        assert!(h[9].abs() < 1e-15 && h[11].abs() < 1e-15);
        let mut g = Vec::new();
        add_fractional_impulse(&mut g, 10.5, 1.0);
        assert!((g[10] - g[11]).abs() < 1e-15);
        assert!(g[10] > 0.5);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
    }

    #[test]
    fn pose_rotation() {
        let p = ArrayPose { yaw_deg: 90.0, ..pose() };
        let src = p.source_position(0.0, 1.0);
        assert!((src[1] - 3.0).abs() < 1e-12 && (src[0] - 2.5).abs() < 1e-12);
        assert!(p.azimuth_of(src).abs() < 1e-9);
        // front-left mic ends up toward -x after a 90° turn
        assert!(p.mic_position(0)[0] < 2.5);
    }
}
