//! Coherence-based frequency-bin selection.
//!
//! Three per-bin criteria are derived from the noisy covariance: the
//! generalized magnitude squared coherence (GMSC), a CDR estimate from the
//! generalized coherence (CDR₁) and a CDR estimate from the effective
//! cross-device coherence (CDR₂). Both CDR estimators compare the measured
//! coherence against a diffuse-field model: a free-field sinc for
//! microphones on the same device and a head-shadow-modified sinc across
//! devices.

use serde::{Deserialize, Serialize};

use crate::array_model::ArrayGeometry;
use crate::error::{Error, Result};
use crate::numerics::{eig_hermitian, CMatrix, HermitianMatrix, StftConfig, C64};

/// Cap standing in for an infinite CDR.
pub const CDR_CAP: f64 = 1e6;
/// Head-shadow model parameters of the modified sinc.
pub const SHADOW_ALPHA: f64 = 0.5;
pub const SHADOW_BETA: f64 = 2.2;

/// Unit-diagonal Hermitian coherence matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceMatrix(HermitianMatrix);

impl CoherenceMatrix {
    pub fn order(&self) -> usize {
        self.0.order()
    }

    pub fn as_hermitian(&self) -> &HermitianMatrix {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    /// Wraps a matrix already known to be a valid coherence matrix.
    pub fn from_hermitian(m: HermitianMatrix) -> Self {
        Self(m)
    }
}

/// `Γ_ij = Φ_ij / sqrt(Φ_ii Φ_jj)`
pub fn coherence_from_covariance(phi: &HermitianMatrix) -> Result<CoherenceMatrix> {
    let diag = phi.diagonal();
    if let Some((channel, &value)) = diag.iter().enumerate().find(|(_, &d)| !(d > 0.0)) {
        return Err(Error::NonpositiveDiagonal { channel, value });
    }
    let inv: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
    let n = phi.order();
    let m = CMatrix::from_fn(n, |i, j| {
        if i == j {
            C64::new(1.0, 0.0)
        } else {
            phi[(i, j)] * (inv[i] * inv[j])
        }
    });
    Ok(CoherenceMatrix(HermitianMatrix::symmetrized(m)))
}

/// `(λ_max − 1)/(M − 1)`, clamped to [0, 1].
pub fn generalized_coherence(gamma: &CoherenceMatrix) -> f64 {
    let m = gamma.order();
    if m < 2 {
        return 1.0;
    }
    let lmax = eig_hermitian(gamma.as_hermitian()).max_value();
    ((lmax - 1.0) / (m as f64 - 1.0)).clamp(0.0, 1.0)
}

pub fn gmsc(gamma: &CoherenceMatrix) -> f64 {
    generalized_coherence(gamma).powi(2)
}

/// `sin(x)/x` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Free-field diffuse coherence `sinc(ωd/c)`.
pub fn free_field_coherence(omega: f64, distance: f64, speed: f64) -> f64 {
    sinc(omega * distance / speed)
}

/// Head-shadow-modified diffuse coherence
/// `sinc(α ωd/c) / sqrt(1 + (β ωd/c)⁴)`.
pub fn shadowed_coherence(omega: f64, distance: f64, speed: f64) -> f64 {
    let x = omega * distance / speed;
    sinc(SHADOW_ALPHA * x) / (1.0 + (SHADOW_BETA * x).powi(4)).sqrt()
}

/// Diffuse-field model matrix `Γ̃_u` at angular frequency `omega`.
pub fn model_coherence(geometry: &ArrayGeometry, omega: f64) -> Vec<Vec<f64>> {
    let m = geometry.num_mics();
    let c = geometry.speed_of_sound;
    (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    if i == j {
                        1.0
                    } else if geometry.same_device(i, j) {
                        free_field_coherence(omega, geometry.distance(i, j), c)
                    } else {
                        shadowed_coherence(omega, geometry.distance(i, j), c)
                    }
                })
                .collect()
        })
        .collect()
}

/// Per-bin diffuse-field model.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffuseModel {
    /// `Γ̃_u(k)`, real symmetric.
    pub matrices: Vec<Vec<Vec<f64>>>,
    /// Generalized coherence of `Γ̃_u(k)`.
    pub gc: Vec<f64>,
    /// Scalar cross-device model coherence at the mean cross-device distance.
    pub cross: Vec<f64>,
}

impl DiffuseModel {
    pub fn new(geometry: &ArrayGeometry, config: &StftConfig) -> Self {
        let d = geometry.mean_cross_distance();
        let c = geometry.speed_of_sound;
        let mut matrices = Vec::new();
        let mut gc = Vec::new();
        let mut cross = Vec::new();
        for k in 0..config.num_bins() {
            let omega = config.omega(k);
            let g = model_coherence(geometry, omega);
            let gamma = CoherenceMatrix(HermitianMatrix::symmetrized(real_matrix(&g)));
            gc.push(generalized_coherence(&gamma));
            cross.push(shadowed_coherence(omega, d, c));
            matrices.push(g);
        }
        Self { matrices, gc, cross }
    }

    pub fn bins(&self) -> usize {
        self.gc.len()
    }
}

pub(crate) fn real_matrix(g: &[Vec<f64>]) -> CMatrix {
    CMatrix::from_fn(g.len(), |i, j| C64::new(g[i][j], 0.0))
}

/// Generalized-coherence CDR `(GC̃ − GĈ)/(GĈ − 1)`, clamped to [0, CAP].
pub fn cdr1(gc_hat: f64, gc_model: f64) -> f64 {
    if gc_hat >= 1.0 {
        return CDR_CAP;
    }
    let raw = (gc_model - gc_hat) / (gc_hat - 1.0);
    if raw.is_nan() {
        return 0.0;
    }
    raw.clamp(0.0, CDR_CAP)
}

/// Mean coherence over the given microphone pairs.
pub fn effective_coherence(gamma: &CoherenceMatrix, pairs: &[(usize, usize)]) -> Result<C64> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairSet);
    }
    let sum: C64 = pairs.iter().map(|&(i, j)| gamma.get(i, j)).sum();
    Ok(sum / pairs.len() as f64)
}

/// CDR functional of the effective coherence `Γ` and a real diffuse model
/// coherence `Γ̃`:
///
/// ```text
/// f = (Γ̃·Re Γ − |Γ|² − sqrt(Γ̃² Re²Γ − Γ̃²|Γ|² + Γ̃² − 2Γ̃ Re Γ + |Γ|²)) / (|Γ|² − 1)
/// ```
///
/// The radicand is evaluated as `(Γ̃ − Re Γ)² + Im²Γ (1 − Γ̃²)`, which is
/// the same polynomial without cancellation. The result is clamped to [0, CAP].
pub fn cdr_functional(gamma_eff: C64, gamma_model: f64) -> f64 {
    const MAX_MAG: f64 = 1.0 - 1e-9;
    let mag = gamma_eff.norm();
    if !(mag < MAX_MAG) {
        return CDR_CAP;
    }
    let g = gamma_model.clamp(-1.0, 1.0);
    let re = gamma_eff.re;
    let mag2 = mag * mag;
    let im = gamma_eff.im;
    let radicand = ((g - re) * (g - re) + im * im * (1.0 - g * g)).max(0.0);
    let value = (g * re - mag2 - radicand.sqrt()) / (mag2 - 1.0);
    if value.is_nan() {
        return 0.0;
    }
    value.clamp(0.0, CDR_CAP)
}

/// Effective-coherence CDR at bin `k`.
pub fn cdr2(gamma: &CoherenceMatrix, pairs: &[(usize, usize)], model: &DiffuseModel, k: usize) -> Result<f64> {
    Ok(cdr_functional(effective_coherence(gamma, pairs)?, model.cross[k]))
}

/// Power ratio in dB with 0 mapping to −∞.
pub fn to_db(value: f64) -> f64 {
    if value <= 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * value.log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    All,
    Gmsc,
    Cdr1,
    Cdr2,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [Criterion::All, Criterion::Gmsc, Criterion::Cdr1, Criterion::Cdr2];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::All => "all",
            Criterion::Gmsc => "gmsc",
            Criterion::Cdr1 => "cdr1",
            Criterion::Cdr2 => "cdr2",
        }
    }

    pub fn is_cdr(self) -> bool {
        matches!(self, Criterion::Cdr1 | Criterion::Cdr2)
    }

    /// Default sweep grid: linear GMSC thresholds or CDR thresholds in dB.
    pub fn default_thresholds(self) -> Vec<f64> {
        match self {
            Criterion::All => vec![f64::NEG_INFINITY],
            Criterion::Gmsc => (0..10).map(|i| i as f64 / 10.0).collect(),
            Criterion::Cdr1 | Criterion::Cdr2 => {
                vec![f64::NEG_INFINITY, -20.0, -10.0, -5.0, -2.0, 0.0, 2.0, 5.0, 10.0]
            }
        }
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(Criterion::All),
            "gmsc" => Ok(Criterion::Gmsc),
            "cdr1" => Ok(Criterion::Cdr1),
            "cdr2" => Ok(Criterion::Cdr2),
            other => Err(Error::Config(format!("unknown criterion {other:?}"))),
        }
    }
}

/// Criterion values for one bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinCriteria {
    pub gmsc: f64,
    pub cdr1: f64,
    pub cdr2: f64,
}

impl BinCriteria {
    pub fn value(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::All => f64::INFINITY,
            Criterion::Gmsc => self.gmsc,
            Criterion::Cdr1 => self.cdr1,
            Criterion::Cdr2 => self.cdr2,
        }
    }
}

/// All three criteria from one noisy covariance matrix.
pub fn bin_criteria(phi_y: &HermitianMatrix, pairs: &[(usize, usize)], model: &DiffuseModel, k: usize) -> Result<BinCriteria> {
    let gamma = coherence_from_covariance(phi_y)?;
    let gc = generalized_coherence(&gamma);
    Ok(BinCriteria {
        gmsc: gc * gc,
        cdr1: cdr1(gc, model.gc[k]),
        cdr2: cdr2(&gamma, pairs, model, k)?,
    })
}

/// Whether `value` passes `threshold` for `criterion`; CDR values are
/// compared in dB.
#[inline]
pub fn passes(criterion: Criterion, value: f64, threshold: f64) -> bool {
    match criterion {
        Criterion::All => true,
        Criterion::Gmsc => value >= threshold,
        Criterion::Cdr1 | Criterion::Cdr2 => to_db(value) >= threshold,
    }
}

/// The set of bins `𝒦(l)` used for one frame. DC (bin 0) is never included.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionMask {
    pub frame: usize,
    pub bins: Vec<usize>,
    pub criterion: Criterion,
    pub threshold: f64,
}

impl SelectionMask {
    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// No bin left to localize with.
    pub fn unlocalizable(&self) -> bool {
        self.is_empty()
    }

    pub fn all(frame: usize, num_bins: usize) -> Self {
        Self {
            frame,
            bins: (1..num_bins).collect(),
            criterion: Criterion::All,
            threshold: f64::NEG_INFINITY,
        }
    }
}

/// `𝒦(l) = {k ≥ 1 : value(k) ≥ threshold}`; `values` is indexed by bin.
pub fn select_bins(frame: usize, values: &[f64], threshold: f64, criterion: Criterion) -> SelectionMask {
    let bins = values
        .iter()
        .enumerate()
        .skip(1)
        .filter(|&(_, &v)| passes(criterion, v, threshold))
        .map(|(k, _)| k)
        .collect();
    SelectionMask { frame, bins, criterion, threshold }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_model::prototype_atf;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn herm(n: usize, f: impl FnMut(usize, usize) -> C64) -> HermitianMatrix {
        HermitianMatrix::symmetrized(CMatrix::from_fn(n, f))
    }

    #[test]
    fn coherence_examples() {
        let g = coherence_from_covariance(&herm(3, |i, j| if i == j { c(i as f64 + 1.0, 0.0) } else { c(0.0, 0.0) })).unwrap();
        assert_eq!(g.as_hermitian().matrix(), &CMatrix::identity(3));

        let v = vec![c(1.0, 0.5), c(-2.0, 0.0), c(0.0, 3.0)];
        let g = coherence_from_covariance(&HermitianMatrix::outer(&v)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((g.get(i, j).norm() - 1.0).abs() < 1e-12);
            }
        }

        let g = coherence_from_covariance(&herm(2, |i, j| c(if i == j { 2.0 } else { 1.0 }, 0.0))).unwrap();
        assert!((g.get(0, 1) - c(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn coherence_rejects_nonpositive_diagonal() {
        let phi = HermitianMatrix::symmetrized(CMatrix::diag(&[1.0, 0.0]));
        assert!(matches!(coherence_from_covariance(&phi), Err(Error::NonpositiveDiagonal { channel: 1, .. })));
    }

    #[test]
    fn gc_and_gmsc_examples() {
        let id = CoherenceMatrix(HermitianMatrix::identity(4));
        assert_eq!(generalized_coherence(&id), 0.0);
        let ones = CoherenceMatrix(herm(4, |_, _| c(1.0, 0.0)));
        assert!((generalized_coherence(&ones) - 1.0).abs() < 1e-12);
        assert!((gmsc(&ones) - 1.0).abs() < 1e-12);
        let two = CoherenceMatrix(herm(2, |i, j| if i == j { c(1.0, 0.0) } else { c(0.6, 0.0) }));
        assert!((generalized_coherence(&two) - 0.6).abs() < 1e-14);
        assert!((gmsc(&two) - 0.36).abs() < 1e-14);
    }

    #[test]
    fn sinc_models() {
        assert_eq!(sinc(0.0), 1.0);
        assert!(sinc(PI).abs() < 1e-15);
        assert_eq!(free_field_coherence(0.0, 0.17, 343.0), 1.0);
        assert_eq!(shadowed_coherence(0.0, 0.17, 343.0), 1.0);
        // zero of the free-field model at f = c/(2d)
        let d = 0.012;
        let f = 343.0 / (2.0 * d);
        assert!(free_field_coherence(2.0 * PI * f, d, 343.0).abs() < 1e-15);
    }

    #[test]
    fn shadowed_model_at_1khz() {
        // 30-digit mpmath evaluation of the modified sinc, d = 0.17 m, c = 343 m/s
        let expected = 0.013_678_582_473_660_379;
        assert!((shadowed_coherence(2.0 * PI * 1000.0, 0.17, 343.0) - expected).abs() < 1e-14);
    }

    #[test]
    fn model_matrix_structure() {
        let g = ArrayGeometry::default();
        let dc = model_coherence(&g, 0.0);
        assert!(dc.iter().flatten().all(|&v| v == 1.0));
        let m = model_coherence(&g, 2.0 * PI * 3000.0);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m[i][j], m[j][i]);
                assert!((-1.0..=1.0).contains(&m[i][j]));
            }
        }
        // decays for cross pairs
        let hi = model_coherence(&g, 2.0 * PI * 7900.0);
        assert!(hi[0][2].abs() < 1e-3);
    }

    #[test]
    fn cdr1_examples() {
        assert_eq!(cdr1(0.3, 0.3), 0.0);
        assert!((cdr1(0.9, 0.3) - 6.0).abs() < 1e-12);
        assert_eq!(cdr1(0.1, 0.3), 0.0);
        assert_eq!(cdr1(1.0, 0.3), CDR_CAP);
    }

    #[test]
    fn effective_coherence_examples() {
        let g = CoherenceMatrix(herm(4, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Equal => c(1.0, 0.0),
            std::cmp::Ordering::Less => c(0.3, -0.2),
            std::cmp::Ordering::Greater => c(0.3, 0.2),
        }));
        let pairs = [(0, 2), (0, 3), (1, 2), (1, 3)];
        assert!((effective_coherence(&g, &pairs).unwrap() - c(0.3, -0.2)).norm() < 1e-15);
        let vals = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
        let mut m = CMatrix::identity(4);
        for (&(i, j), &v) in pairs.iter().zip(&vals) {
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
        let g = CoherenceMatrix(HermitianMatrix::symmetrized(m));
        assert!(effective_coherence(&g, &pairs).unwrap().norm() < 1e-15);
        assert!(matches!(effective_coherence(&g, &[]), Err(Error::EmptyPairSet)));
    }

    #[test]
    fn cdr_functional_identities() {
        for g in [-0.5, 0.0, 0.3, 0.9] {
            assert!(cdr_functional(c(g, 0.0), g).abs() < 1e-7, "g={g}");
        }
        assert!((cdr_functional(c(0.5, 0.0), 0.0) - 1.0).abs() < 1e-12);
        assert_eq!(cdr_functional(c(0.0, 0.0), 0.0), 0.0);
        assert_eq!(cdr_functional(c(1.0, 0.0), 0.2), CDR_CAP);
    }

    #[test]
    fn cdr2_pure_diffuse_is_small() {
        let geom = ArrayGeometry::default();
        let cfg = StftConfig::default();
        let model = DiffuseModel::new(&geom, &cfg);
        let pairs = geom.cross_pairs();
        for k in [8, 32, 64, 128, 200] {
            let phi = HermitianMatrix::symmetrized(real_matrix(&model.matrices[k]).scale(3.0));
            let gamma = coherence_from_covariance(&phi).unwrap();
            let v = cdr2(&gamma, &pairs, &model, k).unwrap();
            assert!(v < 0.05, "k={k} cdr={v}");
        }
    }

    #[test]
    fn cdr2_plane_wave_is_near_cap() {
        // A lateral plane wave gives identical phases on all cross pairs, so
        // the effective coherence has unit magnitude.
        let geom = ArrayGeometry::default();
        let cfg = StftConfig::default();
        let model = DiffuseModel::new(&geom, &cfg);
        let k = 40;
        let a = prototype_atf(&geom, 90.0, cfg.omega(k));
        let gamma = coherence_from_covariance(&HermitianMatrix::outer(&a)).unwrap();
        assert!(cdr2(&gamma, &geom.cross_pairs(), &model, k).unwrap() >= CDR_CAP / 2.0);
    }

    #[test]
    fn cdr2_mixture_tracks_power_ratio() {
        let geom = ArrayGeometry::default();
        let cfg = StftConfig::default();
        let model = DiffuseModel::new(&geom, &cfg);
        let pairs = geom.cross_pairs();
        for k in [20, 32, 48] {
            // unit-gain plane wave (lateral-free geometry: equal per-mic power)
            let a: Vec<C64> = prototype_atf(&geom, 0.0, cfg.omega(k));
            let coherent = HermitianMatrix::outer(&a);
            let diffuse = HermitianMatrix::symmetrized(real_matrix(&model.matrices[k]));
            let v = cdr2(&coherence_from_covariance(&coherent.add(&diffuse)).unwrap(), &pairs, &model, k).unwrap();
            assert!(v > 0.5 && v < 2.0, "k={k} cdr={v}");
        }
    }

    #[test]
    fn selection_examples() {
        let vals = [9.0, 0.0, 0.2, 0.5, 0.9];
        let m = select_bins(0, &vals, 0.4, Criterion::Gmsc);
        assert_eq!(m.bins, vec![3, 4]);
        let m = select_bins(0, &vals, f64::NEG_INFINITY, Criterion::Cdr2);
        assert_eq!(m.bins, vec![1, 2, 3, 4]);
        let m = select_bins(0, &vals, 10.0, Criterion::Cdr1);
        assert!(m.unlocalizable());
        let m = select_bins(3, &vals, 1e9, Criterion::All);
        assert_eq!(m.bins, SelectionMask::all(3, 5).bins);
    }

    proptest! {
        #[test]
        fn two_channel_gc_is_magnitude(re in -1.0f64..1.0, im in -1.0f64..1.0) {
            let g = c(re, im);
            prop_assume!(g.norm() <= 1.0);
            let m = CoherenceMatrix(herm(2, |i, j| match (i, j) {
                (0, 1) => g,
                (1, 0) => g.conj(),
                _ => c(1.0, 0.0),
            }));
            prop_assert!((generalized_coherence(&m) - g.norm()).abs() < 1e-12);
        }

        #[test]
        fn gc_invariant_under_channel_scaling(s in proptest::collection::vec(0.01f64..100.0, 4), seed in 0u64..1000) {
            let base = CMatrix::from_fn(4, |i, j| c(((i * 7 + j * 3 + seed as usize) % 11) as f64 / 11.0 - 0.5, ((i + 2 * j) % 5) as f64 / 5.0));
            let phi = HermitianMatrix::symmetrized(base.matmul(&base.adjoint()).add(&CMatrix::identity(4)));
            let scaled = HermitianMatrix::symmetrized(CMatrix::from_fn(4, |i, j| phi[(i, j)] * (s[i] * s[j]).sqrt()));
            let a = generalized_coherence(&coherence_from_covariance(&phi).unwrap());
            let b = generalized_coherence(&coherence_from_covariance(&scaled).unwrap());
            prop_assert!((a - b).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&(a * a)));
        }

        #[test]
        fn selection_is_monotone(vals in proptest::collection::vec(0.0f64..1.0, 2..40), t1 in 0.0f64..1.0, dt in 0.0f64..1.0) {
            let t2 = t1 + dt;
            for crit in [Criterion::Gmsc, Criterion::Cdr1] {
                let thr = |t: f64| if crit.is_cdr() { to_db(t) } else { t };
                let a = select_bins(0, &vals, thr(t1), crit);
                let b = select_bins(0, &vals, thr(t2), crit);
                prop_assert!(b.bins.iter().all(|k| a.bins.contains(k)));
                prop_assert!(!a.bins.contains(&0));
            }
        }

        #[test]
        fn cdr_functional_nonnegative_and_continuous(r in 0.0f64..0.99, phase in -3.14f64..3.14, g in -1.0f64..1.0) {
            let z = C64::from_polar(r, phase);
            let v = cdr_functional(z, g);
            prop_assert!(v >= 0.0 && v.is_finite());
            let w = cdr_functional(C64::from_polar(r + 1e-9, phase), g);
            prop_assert!((v - w).abs() < 1e-5 * (1.0 + v));
        }

        #[test]
        fn cross_model_decays(f in 4000.0f64..8000.0) {
            let v = shadowed_coherence(2.0 * PI * f, 0.17, 343.0);
            let far = shadowed_coherence(2.0 * PI * f * 10.0, 0.17, 343.0);
            prop_assert!(far.abs() <= v.abs().max(1e-5));
            prop_assert!(far.abs() < 1e-5);
        }
    }
}
