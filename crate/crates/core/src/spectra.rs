//! Spatial spectra over the direction grid and J-peak extraction.

use serde::{Deserialize, Serialize};

use crate::array_model::{circular_distance, PrototypeDatabase};
use crate::coherence::SelectionMask;
use crate::error::{Error, Result};
use crate::numerics::{dot_h, eig_hermitian, norm2, HermitianMatrix, C64};

/// Floor on the MUSIC projection norm.
pub const MUSIC_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Hermitian,
    Music,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Hermitian, Method::Music];

    pub fn name(self) -> &'static str {
        match self {
            Method::Hermitian => "hermitian",
            Method::Music => "music",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hermitian" => Ok(Method::Hermitian),
            "music" => Ok(Method::Music),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSpectrum {
    pub frame: usize,
    pub values: Vec<f64>,
    pub method: Method,
    /// Number of bins that contributed.
    pub selected: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoaEstimate {
    pub frame: usize,
    pub doas: Vec<f64>,
    pub indices: Vec<usize>,
    pub peak_values: Vec<f64>,
    pub method: Method,
}

/// `arccos(|aᴴb| / (‖a‖‖b‖))` in [0, π/2].
pub fn hermitian_angle(a: &[C64], b: &[C64]) -> Result<f64> {
    let (na, nb) = (norm2(a), norm2(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(accurate_angle(a, na, b, nb))
}

// arccos loses half the digits near 0; the sine from the orthogonal residual does not.
fn accurate_angle(a: &[C64], na: f64, b: &[C64], nb: f64) -> f64 {
    let inner = dot_h(b, a);
    let cos = (inner.norm() / (na * nb)).min(1.0);
    if cos < 0.9 {
        return cos.acos();
    }
    let w = inner / (nb * nb);
    let resid: f64 = a.iter().zip(b).map(|(x, y)| (x - y * w).norm_sqr()).sum::<f64>().sqrt();
    (resid / na).atan2(cos)
}

/// Hermitian angles between `g_est` and every prototype RTF at bin `k`.
pub fn hermitian_angle_row(db: &PrototypeDatabase, k: usize, g_est: &[C64]) -> Result<Vec<f64>> {
    let ne = norm2(g_est);
    if ne == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((0..db.num_directions())
        .map(|i| {
            let proto = db.rtf(k, i);
            accurate_angle(g_est, ne, proto, norm2(proto))
        })
        .collect())
}

/// `P(l, θᵢ) = −Σ_{k∈𝒦(l)} p(k, l, θᵢ)`; `rtf_estimates` is indexed by bin.
pub fn hermitian_spectrum(rtf_estimates: &[Vec<C64>], db: &PrototypeDatabase, mask: &SelectionMask) -> Result<SpatialSpectrum> {
    if mask.is_empty() {
        return Err(Error::EmptySelection(mask.frame));
    }
    let mut values = vec![0.0; db.num_directions()];
    for &k in &mask.bins {
        let row = hermitian_angle_row(db, k, &rtf_estimates[k])?;
        for (v, p) in values.iter_mut().zip(row) {
            *v -= p;
        }
    }
    Ok(SpatialSpectrum { frame: mask.frame, values, method: Method::Hermitian, selected: mask.bins.len() })
}

/// Narrowband pseudospectrum `1 / max(‖aᴴQ‖², ε)` for a noise subspace given
/// as orthonormal columns.
pub fn music_narrowband(a: &[C64], noise_subspace: &[Vec<C64>]) -> f64 {
    let proj: f64 = noise_subspace.iter().map(|q| dot_h(a, q).norm_sqr()).sum();
    1.0 / proj.max(MUSIC_EPS)
}

/// Noise subspace of `phi_y`: the `M − rank` weakest eigenvectors.
pub fn noise_subspace(phi_y: &HermitianMatrix, rank: usize) -> Vec<Vec<C64>> {
    let e = eig_hermitian(phi_y);
    (rank..phi_y.order()).map(|i| e.vector(i)).collect()
}

/// Per-bin MUSIC pseudospectrum over the grid, normalized to a maximum of 1.
/// Steering vectors are the unit-norm prototype ATFs.
pub fn music_row(db: &PrototypeDatabase, k: usize, noise: &[Vec<C64>]) -> Vec<f64> {
    let mut row: Vec<f64> = (0..db.num_directions())
        .map(|i| {
            let a = db.atf(k, i);
            let n2 = a.iter().map(|z| z.norm_sqr()).sum::<f64>();
            let proj: f64 = noise.iter().map(|q| dot_h(a, q).norm_sqr()).sum::<f64>() / n2;
            1.0 / proj.max(MUSIC_EPS)
        })
        .collect();
    let max = row.iter().copied().fold(0.0f64, f64::max);
    for v in row.iter_mut() {
        *v /= max;
    }
    row
}

/// Frequency-averaged normalized MUSIC spectrum over the bins in `mask`;
/// `phi_y` is indexed by bin.
pub fn music_spectrum(phi_y: &[HermitianMatrix], db: &PrototypeDatabase, mask: &SelectionMask, rank: usize) -> Result<SpatialSpectrum> {
    if mask.is_empty() {
        return Err(Error::EmptySelection(mask.frame));
    }
    let mut values = vec![0.0; db.num_directions()];
    for &k in &mask.bins {
        let row = music_row(db, k, &noise_subspace(&phi_y[k], rank));
        for (v, p) in values.iter_mut().zip(row) {
            *v += p;
        }
    }
    Ok(SpatialSpectrum { frame: mask.frame, values, method: Method::Music, selected: mask.bins.len() })
}

/// Greedy J-peak selection with circular exclusion.
///
/// Repeatedly takes the largest value not yet suppressed (ties go to the
/// smaller index) and suppresses every grid point within `exclusion`
/// degrees of it. If everything is suppressed before `J` peaks are found,
/// the best remaining unselected points fill the rest.
pub fn pick_peaks(values: &[f64], directions: &[f64], j: usize, exclusion: f64) -> Result<Vec<usize>> {
    let n = values.len();
    if j > n {
        return Err(Error::TooManyPeaks { requested: j, grid: n });
    }
    let mut suppressed = vec![false; n];
    let mut chosen = vec![false; n];
    let mut out = Vec::with_capacity(j);
    for _ in 0..j {
        let pick = argmax_where(values, |i| !suppressed[i]).or_else(|| argmax_where(values, |i| !chosen[i]));
        let Some(p) = pick else { break };
        chosen[p] = true;
        out.push(p);
        for i in 0..n {
            if circular_distance(directions[i], directions[p]) <= exclusion {
                suppressed[i] = true;
            }
        }
    }
    Ok(out)
}

fn argmax_where(values: &[f64], keep: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if keep(i) && best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

impl SpatialSpectrum {
    pub fn peaks(&self, directions: &[f64], j: usize, exclusion: f64) -> Result<DoaEstimate> {
        let indices = pick_peaks(&self.values, directions, j, exclusion)?;
        Ok(DoaEstimate {
            frame: self.frame,
            doas: indices.iter().map(|&i| directions[i]).collect(),
            peak_values: indices.iter().map(|&i| self.values[i]).collect(),
            indices,
            method: self.method,
        })
    }
}
