//! Pseudo-spectral laboratory for the one-dimensional fourth-order cubic NLS
//!
//! `i ∂t u = ±∂ₓ⁴u + κ|u|²u` on a large periodic box standing in for the line.
//!
//! Modules, bottom up:
//! - [`spectral`]: grid, transforms, multipliers, norms, Littlewood–Paley pieces, Gaussian data.
//! - [`evolution`]: split-step and integrating-factor RK4 solvers, the Fourier–Galerkin oracle.
//! - [`symmetries`]: mass, Hamiltonian, the `λ²u(λ⁴t, λx)` scaling.
//! - [`imethod`]: the smoothing multiplier `m`, modified energies, multilinear forms over
//!   frequency hyperplanes, almost-conservation sweeps and global-theory bookkeeping.
//! - [`resonance`]: quartic resonance factorization, mean-value bounds, trilinear counterexample.
//! - [`dispersive`]: oscillatory kernel, decay, Strichartz admissibility, bilinear and smoothing fits.
//! - [`illposed`]: modulated approximate solutions built from cubic NLS solitons.
//! - [`fit`]: log-log least squares.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dispersive;
pub mod error;
pub mod evolution;
pub mod fit;
pub mod illposed;
pub mod imethod;
pub mod resonance;
pub mod spectral;
pub mod symmetries;
pub(crate) mod quadrature;

pub use error::{Error, Result};
pub use fit::{fit_loglog, FitResult};
pub use spectral::{Field, Grid, Spectrum, SymbolFn, Weight, C64};
