//! Dense complex linear algebra for the small (M ≤ 8) matrices that show up
//! per time-frequency bin: Hermitian storage, Cholesky factorization with
//! diagonal loading and a cyclic Jacobi eigensolver.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Row-major dense square complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    n: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![C64::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    /// Builds a matrix from row-major entries. Panics if the length is not a square.
    pub fn from_rows(n: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), n * n, "expected {} entries", n * n);
        Self { n, data }
    }

    /// `v · vᴴ`
    pub fn outer(v: &[C64]) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j].conj())
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        m
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.n, v.len());
        (0..self.n)
            .map(|i| {
                self.data[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.n).map(|i| self[(i, j)]).collect()
    }

    pub fn scale(&self, s: f64) -> CMatrix {
        CMatrix {
            n: self.n,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.n, rhs.n);
        CMatrix {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.n, rhs.n);
        CMatrix {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    /// Largest absolute deviation from conjugate symmetry.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in i..self.n {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.n + j]
    }
}

/// A conjugate-symmetric matrix with a real diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    /// Relative asymmetry tolerated on construction.
    pub const TOLERANCE: f64 = 1e-12;

    /// Validates and symmetrizes `m`. The stored matrix is exactly Hermitian.
    pub fn new(m: CMatrix) -> Result<Self> {
        let defect = m.hermitian_defect();
        let scale = m.frobenius().max(f64::MIN_POSITIVE);
        if !defect.is_finite() || defect > Self::TOLERANCE * scale {
            return Err(Error::NotHermitian(defect / scale));
        }
        Ok(Self::symmetrized(m))
    }

    /// Averages `m` with its adjoint; no validation.
    pub fn symmetrized(m: CMatrix) -> Self {
        let n = m.order();
        let mut out = m;
        for i in 0..n {
            let d = out[(i, i)].re;
            out[(i, i)] = C64::new(d, 0.0);
            for j in i + 1..n {
                let v = (out[(i, j)] + out[(j, i)].conj()) * 0.5;
                out[(i, j)] = v;
                out[(j, i)] = v.conj();
            }
        }
        Self(out)
    }

    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n))
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        Self(CMatrix::identity(n).scale(s))
    }

    pub fn outer(v: &[C64]) -> Self {
        Self::symmetrized(CMatrix::outer(v))
    }

    pub fn order(&self) -> usize {
        self.0.order()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.order()).map(|i| self.0[(i, i)].re).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    /// `a·self + b·v vᴴ`, updating only the upper triangle and mirroring so
    /// symmetry is exact.
    pub fn blend_outer(&mut self, a: f64, b: f64, v: &[C64]) {
        let n = self.order();
        assert_eq!(v.len(), n);
        for i in 0..n {
            let d = a * self.0[(i, i)].re + b * v[i].norm_sqr();
            self.0[(i, i)] = C64::new(d, 0.0);
            for j in i + 1..n {
                let z = self.0[(i, j)] * a + v[i] * v[j].conj() * b;
                self.0[(i, j)] = z;
                self.0[(j, i)] = z.conj();
            }
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.scale(s))
    }

    pub fn add(&self, rhs: &HermitianMatrix) -> Self {
        Self(self.0.add(&rhs.0))
    }
}

impl Index<(usize, usize)> for HermitianMatrix {
    type Output = C64;

    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.0[idx]
    }
}

/// Lower-triangular Cholesky factor `L` with `L·Lᴴ = A + loading·I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    lower: CMatrix,
}

/// Default diagonal loading: `1e-9 · trace / M`.
pub fn default_loading(m: &HermitianMatrix) -> f64 {
    1e-9 * m.trace() / m.order() as f64
}

pub fn cholesky(m: &HermitianMatrix, loading: f64) -> Result<Cholesky> {
    let n = m.order();
    let a = m.matrix();
    let mut l = CMatrix::zeros(n);
    let scale = m.diagonal().into_iter().fold(0.0f64, f64::max);
    for j in 0..n {
        let mut d = a[(j, j)].re + loading;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 1e-14 * scale) || !d.is_finite() {
            return Err(Error::SingularCovariance { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = C64::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(Cholesky { lower: l })
}

impl Cholesky {
    pub fn lower(&self) -> &CMatrix {
        &self.lower
    }

    pub fn order(&self) -> usize {
        self.lower.order()
    }

    /// `L·x`
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let n = self.order();
        (0..n)
            .map(|i| (0..=i).map(|k| self.lower[(i, k)] * x[k]).sum())
            .collect()
    }

    /// Solves `L·x = b` by forward substitution.
    pub fn solve_lower(&self, b: &[C64]) -> Vec<C64> {
        let n = self.order();
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.lower[(i, k)] * x[k];
            }
            x[i] = s / self.lower[(i, i)].re;
        }
        x
    }

    /// Solves `Lᴴ·x = b` by back substitution.
    pub fn solve_upper(&self, b: &[C64]) -> Vec<C64> {
        let n = self.order();
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.lower[(k, i)].conj() * x[k];
            }
            x[i] = s / self.lower[(i, i)].re;
        }
        x
    }

    /// `L⁻¹·A·L⁻ᴴ`
    pub fn whiten(&self, a: &HermitianMatrix) -> HermitianMatrix {
        let n = self.order();
        // columns of L⁻¹A
        let mut left = CMatrix::zeros(n);
        for j in 0..n {
            let col = self.solve_lower(&a.matrix().column(j));
            for i in 0..n {
                left[(i, j)] = col[i];
            }
        }
        // (L⁻¹ (L⁻¹A)ᴴ)ᴴ = L⁻¹ A L⁻ᴴ
        let left_h = left.adjoint();
        let mut out = CMatrix::zeros(n);
        for j in 0..n {
            let col = self.solve_lower(&left_h.column(j));
            for i in 0..n {
                out[(j, i)] = col[i].conj();
            }
        }
        HermitianMatrix::symmetrized(out)
    }
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Sorted descending.
    pub values: Vec<f64>,
    /// Column `i` is the eigenvector for `values[i]`.
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn vector(&self, i: usize) -> Vec<C64> {
        self.vectors.column(i)
    }

    pub fn principal(&self) -> Vec<C64> {
        self.vector(0)
    }

    pub fn max_value(&self) -> f64 {
        self.values[0]
    }
}

const JACOBI_MAX_SWEEPS: usize = 64;

/// Cyclic complex Jacobi eigensolver.
///
/// Eigenvalues are returned in descending order. Each eigenvector is rotated
/// so that its first component with magnitude above `1e-12` is real and
/// nonnegative.
pub fn eig_hermitian(m: &HermitianMatrix) -> HermitianEigen {
    let n = m.order();
    let mut a = m.matrix().clone();
    let mut v = CMatrix::identity(n);
    let total = a.frobenius();

    if total > 0.0 {
        for _ in 0..JACOBI_MAX_SWEEPS {
            let mut off = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off += a[(p, q)].norm_sqr();
                }
            }
            if off.sqrt() <= 1e-15 * total {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    let r = apq.norm();
                    if r <= 1e-300 || r <= 1e-18 * total {
                        continue;
                    }
                    let phase = apq / r;
                    let app = a[(p, p)].re;
                    let aqq = a[(q, q)].re;
                    let tau = (aqq - app) / (2.0 * r);
                    let t = if tau >= 0.0 {
                        1.0 / (tau + (1.0 + tau * tau).sqrt())
                    } else {
                        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    // G = diag(1, e^{-iφ}) · [[c, s], [-s, c]] restricted to (p, q)
                    let gpp = C64::new(c, 0.0);
                    let gpq = C64::new(s, 0.0);
                    let gqp = -phase.conj() * s;
                    let gqq = phase.conj() * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = akp * gpp + akq * gqp;
                        a[(k, q)] = akp * gpq + akq * gqq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = gpp.conj() * apk + gqp.conj() * aqk;
                        a[(q, k)] = gpq.conj() * apk + gqq.conj() * aqk;
                    }
                    a[(p, q)] = C64::new(0.0, 0.0);
                    a[(q, p)] = C64::new(0.0, 0.0);
                    a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                    a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = vkp * gpp + vkq * gqp;
                        v[(k, q)] = vkp * gpq + vkq * gqq;
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].re.total_cmp(&a[(i, i)].re).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = CMatrix::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src);
        normalize_phase(&mut col);
        for i in 0..n {
            vectors[(i, dst)] = col[i];
        }
    }
    HermitianEigen { values, vectors }
}

/// Rotates `v` so its first non-negligible component is real and nonnegative.
pub fn normalize_phase(v: &mut [C64]) {
    if let Some(lead) = v.iter().find(|z| z.norm() > 1e-12) {
        let rot = lead.conj() / lead.norm();
        for z in v.iter_mut() {
            *z *= rot;
        }
    }
}

pub fn dot_h(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
