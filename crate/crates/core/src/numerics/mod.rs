//! STFT analysis and small Hermitian linear algebra.

pub mod linalg;
pub mod stft;

pub use linalg::{
    cholesky, default_loading, dot_h, eig_hermitian, norm2, normalize_phase, CMatrix, Cholesky,
    HermitianEigen, HermitianMatrix, C64,
};
pub use stft::{sqrt_hann, stft_analyze, SpectralFrame, Stft, StftConfig, WindowKind};
