//! Polarized spherical harmonics.
//!
//! Stokes vector fields on the sphere are expanded in a basis of real scalar
//! harmonics (for `s0`, `s3`) and spin-2 harmonics (for `s1 + i s2`), measured
//! under the θφ frame field. In that basis rotations are block diagonal in `l`,
//! isotropic Mueller operators are sparse, and rotation-equivariant operators
//! reduce to per-`l` convolution coefficients.
//!
//! Modules, bottom up:
//!
//! * [`geom`]: vectors, frames, rotations, quadrature grids, complex pairs.
//! * [`sh`]: scalar harmonics, Wigner D, scalar convolution, 3-j symbols.
//! * [`polar`]: Stokes and Mueller calculus, Stokes fields, a synthetic pBRDF.
//! * [`psh`]: spin-2 harmonics, the PSH basis, projection and rotation.
//! * [`operators`]: PSH coefficient matrices of Mueller operators and shadowing.
//! * [`pconv`]: polarized spherical convolution.
//! * [`s2l2`]: the frame-free S2L2 encoding and polarized image resampling.
//! * [`io`], [`synth`], [`pprt`]: file formats, test data and the transfer pipeline.
//! * [`cli`]: the `polarsh` command line.

pub mod cli;
pub mod geom;
pub mod io;
pub mod operators;
pub mod pconv;
pub mod polar;
pub mod pprt;
pub mod psh;
pub mod s2l2;
pub mod sh;
pub mod synth;

pub use geom::{
    complex_pair_compose, complex_pair_separate, dir_to_sph, frame_theta_phi, gauss_legendre_grid, rotation_zyz,
    sph_to_dir, ComplexPair, Direction, Frame, QuadratureGrid, Rotation, Vec3,
};
pub use num_complex::Complex64;
pub use polar::{MuellerMatrix, StokesComponents, StokesField};
pub use psh::PshCoeffVector;
pub use sh::ShCoeffVector;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("quadrature grid resolves band {grid} but band {requested} was requested")]
    GridTooCoarse { grid: usize, requested: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("frames do not share a propagation direction (|dz| = {0:e})")]
    FrameMismatch(f64),
    #[error("argument outside the domain: {0}")]
    Domain(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// `(-1)^k`.
#[inline]
pub(crate) fn parity(k: i64) -> f64 {
    if k.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}
