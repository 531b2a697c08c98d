//! Solver and verification toolkit for the quasilinear Maxwell system with
//! absorbing (impedance) boundary conditions.
//!
//! The crate is organized around a symmetric-hyperbolic rewrite of the Maxwell
//! system on a truncated half-space box (tangentially periodic, impedance face
//! at the bottom):
//!
//! * [`matrices`], [`grid`], [`field`], [`ops`] — constant system matrices,
//!   structured grids, difference/trace/boundary operators.
//! * [`material`] — material-law registry (nonlinear permittivity, boundary
//!   conductivity) with derivative access and validation.
//! * [`jets`] — time-jet recursions for the linear and quasilinear systems,
//!   coefficient jets by truncated-Taylor composition, compatibility checks.
//! * [`extension`] — the spectral jet-extension operator producing a
//!   space-time field with prescribed time derivatives at `t = 0`.
//! * [`linear`] — method-of-lines solver for the non-autonomous linear system
//!   with penalty-enforced impedance conditions, plus energy-identity and
//!   weighted apriori audits.
//! * [`quasilinear`] — frozen-coefficient fixed-point iteration, smallness
//!   quantities, step-size selection, maximal continuation and blow-up
//!   monitors.
//! * [`localization`] — boundary-flattening charts and machine-precision
//!   verification of the transformed-coefficient identities.
//! * [`norms`], [`studies`], [`scenario`] — discrete Sobolev norms, study
//!   harnesses (convergence, contraction, continuous dependence) and the
//!   JSON scenario configuration shared with the CLI.

pub mod error;
pub mod matrices;
pub mod grid;
pub mod field;
pub mod ops;
pub mod material;
pub mod jets;
pub mod extension;
pub mod norms;
pub mod linear;
pub mod quasilinear;
pub mod localization;
pub mod scenario;
pub mod studies;

pub use error::Error;

/// Fixed-size matrix and vector aliases used throughout the crate.
pub mod alg {
    pub type Mat3 = nalgebra::SMatrix<f64, 3, 3>;
    pub type Mat6 = nalgebra::SMatrix<f64, 6, 6>;
    pub type Mat3x6 = nalgebra::SMatrix<f64, 3, 6>;
    pub type Mat6x3 = nalgebra::SMatrix<f64, 6, 3>;
    pub type Vec3 = nalgebra::SVector<f64, 3>;
    pub type Vec6 = nalgebra::SVector<f64, 6>;

    /// Spectral norm of a symmetric matrix via eigendecomposition.
    pub fn spectral_norm_sym3(m: &Mat3) -> f64 {
        m.symmetric_eigenvalues().iter().fold(0.0, |a, &l| a.max(l.abs()))
    }

    /// Smallest eigenvalue of a symmetric 3x3 matrix.
    pub fn min_eig_sym3(m: &Mat3) -> f64 {
        m.symmetric_eigenvalues().iter().fold(f64::INFINITY, |a, &l| a.min(l))
    }

    /// Smallest eigenvalue of a symmetric 6x6 matrix.
    pub fn min_eig_sym6(m: &Mat6) -> f64 {
        m.symmetric_eigenvalues().iter().fold(f64::INFINITY, |a, &l| a.min(l))
    }

    /// Largest eigenvalue magnitude of a symmetric 6x6 matrix.
    pub fn spectral_norm_sym6(m: &Mat6) -> f64 {
        m.symmetric_eigenvalues().iter().fold(0.0, |a, &l| a.max(l.abs()))
    }
}
