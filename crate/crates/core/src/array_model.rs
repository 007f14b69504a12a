//! Binaural array geometry and the prototype anechoic ATF/RTF database.
//!
//! Azimuth convention: 0° is straight ahead (+x), positive angles turn to the
//! left (+y), all in the horizontal plane. Plane-wave delays are measured
//! relative to the array centroid.
//!
//! # Database file layout (version 1)
//!
//! All integers are little-endian `u32`, all reals little-endian `f64`.
//!
//! ```text
//! magic        8 bytes  "BDOADB\0\0"
//! version      u32      1
//! sample_rate  f64
//! window_len   u32
//! hop          u32
//! mics M       u32
//! speed        f64      speed of sound, m/s
//! head_radius  f64      m
//! M × { x f64, y f64, z f64, device u8 (0 = left, 1 = right) }
//! directions I u32
//! I × f64               azimuths in degrees
//! bins K       u32
//! K × I × M × { re f64, im f64 }   ATF, bin-major then direction then mic
//! ```
//!
//! RTFs are not stored; they are recomputed from the ATFs on load.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{StftConfig, C64};

/// Which hearing device a microphone sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Device {
    Left,
    Right,
}

impl Device {
    /// Outward-facing azimuth of the device in degrees.
    pub fn facing_deg(self) -> f64 {
        match self {
            Device::Left => 90.0,
            Device::Right => -90.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicSpec {
    pub position: [f64; 3],
    pub device: Device,
}

/// Geometry configuration. With `mics` empty the default two-device,
/// front/rear layout is generated from the spacings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryConfig {
    pub ear_spacing: f64,
    pub front_rear_spacing: f64,
    pub speed_of_sound: f64,
    pub head_radius: f64,
    pub mics: Vec<MicSpec>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            ear_spacing: 0.17,
            front_rear_spacing: 0.012,
            speed_of_sound: 343.0,
            head_radius: 0.0875,
            mics: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub mic_positions: Vec<[f64; 3]>,
    pub device_of_mic: Vec<Device>,
    pub speed_of_sound: f64,
    pub head_radius: f64,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        build_geometry(&GeometryConfig::default()).expect("default geometry is valid")
    }
}

/// Validates a geometry configuration. Mic order for the default layout is
/// front-left, rear-left, front-right, rear-right; mic 0 is the reference.
pub fn build_geometry(config: &GeometryConfig) -> Result<ArrayGeometry> {
    let mics = if config.mics.is_empty() {
        let y = config.ear_spacing / 2.0;
        let x = config.front_rear_spacing / 2.0;
        vec![
            MicSpec { position: [x, y, 0.0], device: Device::Left },
            MicSpec { position: [-x, y, 0.0], device: Device::Left },
            MicSpec { position: [x, -y, 0.0], device: Device::Right },
            MicSpec { position: [-x, -y, 0.0], device: Device::Right },
        ]
    } else {
        config.mics.clone()
    };
    let geometry = ArrayGeometry {
        mic_positions: mics.iter().map(|m| m.position).collect(),
        device_of_mic: mics.iter().map(|m| m.device).collect(),
        speed_of_sound: config.speed_of_sound,
        head_radius: config.head_radius,
    };
    geometry.validate()?;
    Ok(geometry)
}

impl ArrayGeometry {
    pub fn validate(&self) -> Result<()> {
        let m = self.num_mics();
        if m == 0 || m % 2 != 0 {
            return Err(Error::Geometry(format!("microphone count {m} must be even and nonzero")));
        }
        if self.device_of_mic.len() != m {
            return Err(Error::Geometry("device assignment length differs from mic count".into()));
        }
        let left = self.device_of_mic.iter().filter(|&&d| d == Device::Left).count();
        if left != m / 2 {
            return Err(Error::Geometry(format!("{left} of {m} mics on the left device; expected {}", m / 2)));
        }
        for i in 0..m {
            for j in i + 1..m {
                if self.distance(i, j) <= 0.0 {
                    return Err(Error::Geometry(format!("mics {i} and {j} coincide")));
                }
            }
        }
        if !(self.speed_of_sound > 0.0) {
            return Err(Error::Geometry("speed of sound must be positive".into()));
        }
        Ok(())
    }

    pub fn num_mics(&self) -> usize {
        self.mic_positions.len()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.mic_positions[i], self.mic_positions[j]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    pub fn centroid(&self) -> [f64; 3] {
        let n = self.num_mics() as f64;
        let mut c = [0.0; 3];
        for p in &self.mic_positions {
            for d in 0..3 {
                c[d] += p[d] / n;
            }
        }
        c
    }

    pub fn same_device(&self, i: usize, j: usize) -> bool {
        self.device_of_mic[i] == self.device_of_mic[j]
    }

    /// All (left mic, right mic) pairs, ordered by the left mic index.
    pub fn cross_pairs(&self) -> Vec<(usize, usize)> {
        let m = self.num_mics();
        let mut pairs = Vec::new();
        for i in 0..m {
            for j in 0..m {
                if self.device_of_mic[i] == Device::Left && self.device_of_mic[j] == Device::Right {
                    pairs.push((i.min(j), i.max(j)));
                }
            }
        }
        pairs
    }

    pub fn mean_cross_distance(&self) -> f64 {
        let pairs = self.cross_pairs();
        pairs.iter().map(|&(i, j)| self.distance(i, j)).sum::<f64>() / pairs.len() as f64
    }

    /// Head-shadow gain `1 − 0.4·max(0, −cos(θ − φ_m))`.
    pub fn shadow_gain(&self, m: usize, theta_deg: f64) -> f64 {
        let rel = (theta_deg - self.device_of_mic[m].facing_deg()).to_radians();
        1.0 - 0.4 * (-rel.cos()).max(0.0)
    }

    /// Plane-wave arrival delay at mic `m` relative to the centroid.
    pub fn delay(&self, m: usize, theta_deg: f64) -> f64 {
        let c = self.centroid();
        let p = self.mic_positions[m];
        let th = theta_deg.to_radians();
        let proj = (p[0] - c[0]) * th.cos() + (p[1] - c[1]) * th.sin();
        -proj / self.speed_of_sound
    }
}

/// Far-field anechoic ATF `s_m(θ)·exp(−jωτ_m(θ))`.
pub fn prototype_atf(geometry: &ArrayGeometry, theta_deg: f64, omega: f64) -> Vec<C64> {
    (0..geometry.num_mics())
        .map(|m| C64::from_polar(geometry.shadow_gain(m, theta_deg), -omega * geometry.delay(m, theta_deg)))
        .collect()
}

/// Azimuth grid of `count` directions starting at −180°.
pub fn direction_grid(count: usize) -> Result<Vec<f64>> {
    if count == 0 || 360 % count != 0 {
        return Err(Error::Grid(format!("{count} directions do not divide 360° evenly")));
    }
    let step = 360.0 / count as f64;
    Ok((0..count).map(|i| -180.0 + i as f64 * step).collect())
}

/// Wraps an angle to [−180°, 180°).
pub fn wrap_deg(theta: f64) -> f64 {
    let w = (theta + 180.0).rem_euclid(360.0) - 180.0;
    if w >= 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Circular absolute difference in degrees, in [0, 180].
pub fn circular_distance(a: f64, b: f64) -> f64 {
    wrap_deg(a - b).abs()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeDatabase {
    pub geometry: ArrayGeometry,
    pub config: StftConfig,
    pub directions: Vec<f64>,
    bins: usize,
    atf: Vec<C64>,
    rtf: Vec<C64>,
}

const MAGIC: &[u8; 8] = b"BDOADB\0\0";
const VERSION: u32 = 1;

pub fn build_database(geometry: &ArrayGeometry, config: StftConfig, num_directions: usize) -> Result<PrototypeDatabase> {
    geometry.validate()?;
    config.validate()?;
    let directions = direction_grid(num_directions)?;
    let bins = config.num_bins();
    let mut atf = Vec::with_capacity(bins * directions.len() * geometry.num_mics());
    for k in 0..bins {
        let omega = config.omega(k);
        for &theta in &directions {
            atf.extend(prototype_atf(geometry, theta, omega));
        }
    }
    PrototypeDatabase::from_atf(geometry.clone(), config, directions, atf)
}

impl PrototypeDatabase {
    fn from_atf(geometry: ArrayGeometry, config: StftConfig, directions: Vec<f64>, atf: Vec<C64>) -> Result<Self> {
        let m = geometry.num_mics();
        let bins = config.num_bins();
        let count = directions.len();
        if atf.len() != bins * count * m {
            return Err(Error::DimensionMismatch { expected: bins * count * m, got: atf.len() });
        }
        let mut rtf = Vec::with_capacity(atf.len());
        for k in 0..bins {
            for i in 0..count {
                let o = (k * count + i) * m;
                let a = &atf[o..o + m];
                if a[0].norm() == 0.0 {
                    return Err(Error::ZeroReference { bin: k, direction: i });
                }
                rtf.push(C64::new(1.0, 0.0));
                rtf.extend(a[1..].iter().map(|z| z / a[0]));
            }
        }
        Ok(Self { geometry, config, directions, bins, atf, rtf })
    }

    pub fn num_bins(&self) -> usize {
        self.bins
    }

    pub fn num_directions(&self) -> usize {
        self.directions.len()
    }

    pub fn num_mics(&self) -> usize {
        self.geometry.num_mics()
    }

    pub fn step_deg(&self) -> f64 {
        360.0 / self.directions.len() as f64
    }

    #[inline]
    fn offset(&self, k: usize, i: usize) -> usize {
        (k * self.directions.len() + i) * self.num_mics()
    }

    #[inline]
    pub fn atf(&self, k: usize, i: usize) -> &[C64] {
        let o = self.offset(k, i);
        &self.atf[o..o + self.num_mics()]
    }

    #[inline]
    pub fn rtf(&self, k: usize, i: usize) -> &[C64] {
        let o = self.offset(k, i);
        &self.rtf[o..o + self.num_mics()]
    }

    /// Grid index closest to `theta_deg` (circular).
    pub fn nearest_index(&self, theta_deg: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &d) in self.directions.iter().enumerate() {
            let dist = circular_distance(d, theta_deg);
            if dist < best_d - 1e-12 {
                best = i;
                best_d = dist;
            }
        }
        best
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.config.sample_rate.to_le_bytes())?;
        w.write_all(&(self.config.window_len as u32).to_le_bytes())?;
        w.write_all(&(self.config.hop as u32).to_le_bytes())?;
        let g = &self.geometry;
        w.write_all(&(g.num_mics() as u32).to_le_bytes())?;
        w.write_all(&g.speed_of_sound.to_le_bytes())?;
        w.write_all(&g.head_radius.to_le_bytes())?;
        for (p, d) in g.mic_positions.iter().zip(&g.device_of_mic) {
            for v in p {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&[matches!(d, Device::Right) as u8])?;
        }
        w.write_all(&(self.directions.len() as u32).to_le_bytes())?;
        for d in &self.directions {
            w.write_all(&d.to_le_bytes())?;
        }
        w.write_all(&(self.bins as u32).to_le_bytes())?;
        for z in &self.atf {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let bad = |e: std::io::Error| Error::Database(e.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(bad)?;
        if &magic != MAGIC {
            return Err(Error::Database("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Database(format!("unsupported version {version}")));
        }
        let sample_rate = read_f64(&mut r)?;
        let window_len = read_u32(&mut r)? as usize;
        let hop = read_u32(&mut r)? as usize;
        let config = StftConfig { sample_rate, window_len, hop, ..StftConfig::default() };
        config.validate()?;
        let m = read_u32(&mut r)? as usize;
        let speed_of_sound = read_f64(&mut r)?;
        let head_radius = read_f64(&mut r)?;
        let mut mic_positions = Vec::with_capacity(m);
        let mut device_of_mic = Vec::with_capacity(m);
        for _ in 0..m {
            mic_positions.push([read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?]);
            let mut d = [0u8; 1];
            r.read_exact(&mut d).map_err(bad)?;
            device_of_mic.push(if d[0] == 0 { Device::Left } else { Device::Right });
        }
        let geometry = ArrayGeometry { mic_positions, device_of_mic, speed_of_sound, head_radius };
        geometry.validate()?;
        let count = read_u32(&mut r)? as usize;
        let directions = (0..count).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let bins = read_u32(&mut r)? as usize;
        if bins != config.num_bins() {
            return Err(Error::Database(format!("{bins} bins stored, window implies {}", config.num_bins())));
        }
        let total = bins * count * m;
        let mut atf = Vec::with_capacity(total);
        for _ in 0..total {
            atf.push(C64::new(read_f64(&mut r)?, read_f64(&mut r)?));
        }
        Self::from_atf(geometry, config, directions, atf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| Error::Database(e.to_string()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| Error::Database(e.to_string()))?;
    Ok(f64::from_le_bytes(b))
}
