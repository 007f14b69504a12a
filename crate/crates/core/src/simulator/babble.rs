//! Diffuse-like babble with the model spatial coherence imposed per bin.

use rand::Rng;

use super::speech::{generate, normalize, SpeechKind};
use crate::array_model::ArrayGeometry;
use crate::coherence::model_coherence;
use crate::error::{Error, Result};
use crate::numerics::{cholesky, CMatrix, HermitianMatrix, Stft, StftConfig, C64};

/// Loadings tried in turn when the model matrix is not numerically PD.
const LOADINGS: [f64; 6] = [0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2];

/// Cholesky factor of `Γ̃_u` at every bin, diagonal-loaded where needed.
pub fn coherence_factors(geometry: &ArrayGeometry, config: &StftConfig) -> Result<Vec<CMatrix>> {
    let m = geometry.num_mics();
    let mut factors = Vec::with_capacity(config.num_bins());
    let (mut loaded, mut max_load) = (0usize, 0.0f64);
    for k in 0..config.num_bins() {
        let g = model_coherence(geometry, config.omega(k));
        let h = HermitianMatrix::symmetrized(CMatrix::from_fn(m, |i, j| C64::new(g[i][j], 0.0)));
        let mut found = None;
        for &load in &LOADINGS {
            if let Ok(c) = cholesky(&h, load) {
                if load > 0.0 {
                    log::debug!("model coherence at bin {k} loaded by {load:e}");
                    loaded += 1;
                    max_load = max_load.max(load);
                }
                found = Some(c.lower().clone());
                break;
            }
        }
        factors.push(found.ok_or_else(|| Error::Scenario(format!("model coherence at bin {k} cannot be factored")))?);
    }
    if loaded > 0 {
        log::info!("model coherence not positive definite in {loaded} bins; diagonal loading up to {max_load:e}");
    }
    Ok(factors)
}

/// `M` channels of babble of `len` samples, unit mean power per channel.
///
/// Each of `M` independent streams is a sum of `talkers` signals from the
/// `kind` generator; per STFT bin the stream vector is mixed by the
/// Cholesky factor of the model coherence and resynthesized.
pub fn diffuse_babble(
    geometry: &ArrayGeometry,
    len: usize,
    config: StftConfig,
    talkers: usize,
    kind: SpeechKind,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<f64>>> {
    if len < config.sample_rate as usize {
        return Err(Error::Scenario(format!("babble needs at least one second, got {len} samples")));
    }
    let m = geometry.num_mics();
    let pad = config.window_len;
    let total = len + 2 * pad;
    let streams: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            let mut s = vec![0.0; total];
            for _ in 0..talkers.max(1) {
                for (a, b) in s.iter_mut().zip(generate(kind, total, config.sample_rate, rng)) {
                    *a += b;
                }
            }
            normalize(&mut s);
            s
        })
        .collect();
    let stft = Stft::new(config)?;
    let mut spec = stft.analyze(&streams)?;
    let factors = coherence_factors(geometry, &config)?;
    let mut mixed = vec![C64::new(0.0, 0.0); m];
    for l in 0..spec.frames() {
        for (k, f) in factors.iter().enumerate() {
            let v = spec.vector_mut(k, l);
            for (i, out) in mixed.iter_mut().enumerate() {
                *out = (0..=i).map(|j| f[(i, j)] * v[j]).sum();
            }
            v.copy_from_slice(&mixed);
        }
    }
    let out = stft.synthesize(&spec, total);
    Ok(out
        .into_iter()
        .map(|ch| {
            let mut c = ch[pad..pad + len].to_vec();
            normalize(&mut c);
            c
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherence::shadowed_coherence;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Long-term coherence `Σ X_i X_j* / sqrt(Σ|X_i|² Σ|X_j|²)` per bin.
    fn measured(x: &[Vec<f64>], i: usize, j: usize, config: StftConfig) -> Vec<C64> {
        let spec = Stft::new(config).unwrap().analyze(x).unwrap();
        (0..spec.bins())
            .map(|k| {
                let (mut c, mut pi, mut pj) = (C64::new(0.0, 0.0), 0.0, 0.0);
                for l in 0..spec.frames() {
                    let v = spec.vector(k, l);
                    c += v[i] * v[j].conj();
                    pi += v[i].norm_sqr();
                    pj += v[j].norm_sqr();
                }
                c / (pi * pj).sqrt()
            })
            .collect()
    }

    #[test]
    fn coherence_follows_model() {
        let g = ArrayGeometry::default();
        let cfg = StftConfig::default();
        let x = diffuse_babble(&g, 160_000, cfg, 4, SpeechKind::ModulatedNoise, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let coh = measured(&x, 0, 2, cfg);
        // bin 64 is 2 kHz
        let model = shadowed_coherence(cfg.omega(64), 0.17, 343.0);
        assert!((coh[64].re - model).abs() < 0.05);
        assert!(coh[1].norm() > 0.9);
        let front_rear = measured(&x, 0, 1, cfg);
        assert!(front_rear[1].norm() > 0.99);
    }

    #[test]
    fn seeds_change_samples_not_profile() {
        let g = ArrayGeometry::default();
        let cfg = StftConfig::default();
        let a = diffuse_babble(&g, 96_000, cfg, 4, SpeechKind::ModulatedNoise, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = diffuse_babble(&g, 96_000, cfg, 4, SpeechKind::ModulatedNoise, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert_ne!(a[0][1000], b[0][1000]);
        let (ca, cb) = (measured(&a, 0, 3, cfg), measured(&b, 0, 3, cfg));
        let mean: f64 = (1..=128).map(|k| (ca[k].re - cb[k].re).abs()).sum::<f64>() / 128.0;
        assert!(mean < 0.05);
    }

    #[test]
    fn too_short_rejected() {
        let r = diffuse_babble(&ArrayGeometry::default(), 8000, StftConfig::default(), 2, SpeechKind::ModulatedNoise, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(Error::Scenario(_))));
    }
}
