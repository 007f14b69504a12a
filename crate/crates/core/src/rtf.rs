//! Direct-path RTF estimation by covariance whitening.

use crate::error::{Error, Result};
use crate::numerics::{cholesky, default_loading, dot_h, eig_hermitian, norm2, HermitianEigen, HermitianMatrix, C64};

/// Relative transfer function vector with reference component exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RtfVector {
    pub values: Vec<C64>,
    pub bin: usize,
    pub frame: usize,
}

/// Smallest admissible magnitude of the dewhitened reference component.
pub const MIN_REFERENCE: f64 = 1e-12;

/// Covariance-whitening estimate of the dominant direct-path RTF.
///
/// `Φ_u = L Lᴴ` (with default diagonal loading), the principal eigenvector
/// `p` of `L⁻¹ Φ_y L⁻ᴴ` is dewhitened to `L p` and normalized by its first
/// component.
pub fn estimate_rtf_cw(phi_y: &HermitianMatrix, phi_u: &HermitianMatrix) -> Result<Vec<C64>> {
    if phi_y.order() != phi_u.order() {
        return Err(Error::DimensionMismatch { expected: phi_u.order(), got: phi_y.order() });
    }
    let chol = cholesky(phi_u, default_loading(phi_u))?;
    let whitened = chol.whiten(phi_y);
    let eig = eig_hermitian(&whitened);
    let principal = principal_in_cluster(&eig, chol.lower().as_slice()[..phi_u.order()].to_vec());
    let dewhitened = chol.apply(&principal);
    normalize_reference(dewhitened)
}

/// Relative gap below which the top eigenvalues count as one eigenspace.
const TIE_TOLERANCE: f64 = 1e-6;

/// Principal eigenvector; when the top eigenvalue is (numerically) repeated
/// the eigenspace has no preferred basis, so the unit vector in it whose
/// dewhitened reference component `l₀ᵀp` is largest is returned instead.
fn principal_in_cluster(eig: &HermitianEigen, first_row: Vec<C64>) -> Vec<C64> {
    let top = eig.max_value();
    let cluster: Vec<Vec<C64>> = (0..eig.values.len())
        .take_while(|&i| eig.values[i] >= top - TIE_TOLERANCE * top.abs().max(f64::MIN_POSITIVE))
        .map(|i| eig.vector(i))
        .collect();
    if cluster.len() < 2 {
        return eig.principal();
    }
    // maximize |rᴴ p| over the span: p ∝ Q Qᴴ r with r = conj(l₀)
    let r: Vec<C64> = first_row.iter().map(|z| z.conj()).collect();
    let mut p = vec![C64::new(0.0, 0.0); r.len()];
    for q in &cluster {
        let w = dot_h(q, &r);
        for (pi, qi) in p.iter_mut().zip(q) {
            *pi += qi * w;
        }
    }
    let n = norm2(&p);
    if n == 0.0 {
        return eig.principal();
    }
    p.iter().map(|z| z / n).collect()
}

/// Divides by the first component and pins it to exactly 1.
pub fn normalize_reference(mut v: Vec<C64>) -> Result<Vec<C64>> {
    let r = v[0];
    // Scale-free test: compare against the vector norm.
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(r.norm() > MIN_REFERENCE * norm.max(f64::MIN_POSITIVE)) {
        return Err(Error::DegenerateReference(r.norm()));
    }
    for z in v.iter_mut() {
        *z /= r;
    }
    v[0] = C64::new(1.0, 0.0);
    if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::DegenerateReference(r.norm()));
    }
    Ok(v)
}

impl RtfVector {
    pub fn estimate(phi_y: &HermitianMatrix, phi_u: &HermitianMatrix, bin: usize, frame: usize) -> Result<Self> {
        Ok(Self { values: estimate_rtf_cw(phi_y, phi_u)?, bin, frame })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::CMatrix;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn recovers_planted_rtf_with_identity_noise() {
        let g = vec![c(1.0, 0.0), c(0.0, 2.0), c(-1.0, 0.0), c(0.5, 0.0)];
        let phi_u = HermitianMatrix::identity(4);
        let phi_y = HermitianMatrix::symmetrized(CMatrix::identity(4).add(&CMatrix::outer(&g)));
        let est = estimate_rtf_cw(&phi_y, &phi_u).unwrap();
        assert_eq!(est[0], c(1.0, 0.0));
        for (a, b) in est.iter().zip(&g) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn recovers_generalized_eigenvector() {
        // Φ_y = Φ_u + L h hᴴ Lᴴ  ⇒  estimate ∝ L h.
        let a = CMatrix::from_fn(4, |i, j| c((i + 2 * j) as f64 * 0.1 - 0.3, (i as f64 - j as f64) * 0.2));
        let phi_u = HermitianMatrix::symmetrized(a.matmul(&a.adjoint()).add(&CMatrix::identity(4)));
        let chol = cholesky(&phi_u, 0.0).unwrap();
        let h = vec![c(0.3, 0.1), c(-1.0, 0.4), c(0.2, -0.7), c(0.9, 0.0)];
        let lh = chol.apply(&h);
        let phi_y = phi_u.add(&HermitianMatrix::outer(&lh));
        let est = estimate_rtf_cw(&phi_y, &phi_u).unwrap();
        for (e, t) in est.iter().zip(lh.iter().map(|z| z / lh[0])) {
            assert!((e - t).norm() < 1e-8);
        }
    }

    #[test]
    fn no_speech_still_returns_unit_reference() {
        let phi = HermitianMatrix::symmetrized(CMatrix::diag(&[2.0, 1.0, 3.0, 1.5]));
        let est = estimate_rtf_cw(&phi, &phi).unwrap();
        assert_eq!(est[0], c(1.0, 0.0));
        assert!(est.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
    }

    #[test]
    fn singular_noise_rejected() {
        let phi_u = HermitianMatrix::symmetrized(CMatrix::zeros(2));
        let phi_y = HermitianMatrix::identity(2);
        assert!(matches!(estimate_rtf_cw(&phi_y, &phi_u), Err(Error::SingularCovariance { .. })));
    }

    #[test]
    fn degenerate_reference_rejected() {
        // Speech only on channel 2: dewhitened eigenvector has a zero first entry.
        let g = vec![c(0.0, 0.0), c(1.0, 0.0)];
        let phi_y = HermitianMatrix::symmetrized(CMatrix::identity(2).add(&CMatrix::outer(&g)));
        assert!(matches!(
            estimate_rtf_cw(&phi_y, &HermitianMatrix::identity(2)),
            Err(Error::DegenerateReference(_))
        ));
    }

    proptest! {
        #[test]
        fn scale_invariant(scale in 1e-3f64..1e3, re in -2.0f64..2.0, im in -2.0f64..2.0) {
            let g = vec![c(1.0, 0.0), c(re, im), c(0.4, -0.3), c(-0.2, 0.8)];
            let phi_u = HermitianMatrix::symmetrized(CMatrix::diag(&[1.0, 2.0, 0.5, 1.0]));
            let phi_y = phi_u.add(&HermitianMatrix::outer(&g).scale(3.0));
            let a = estimate_rtf_cw(&phi_y, &phi_u).unwrap();
            let b = estimate_rtf_cw(&phi_y.scale(scale), &phi_u).unwrap();
            prop_assert_eq!(a[0], c(1.0, 0.0));
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).norm() < 1e-8 * (1.0 + x.norm()));
            }
        }
    }
}
