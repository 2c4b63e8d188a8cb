//! Numerical machinery for counting linear point configurations in sparse sets.
//!
//! The crate is organized around a system of matrices `B_1, ..., B_k` that
//! encodes a family of `k`-point configurations `{x + B_j y}` in `[0,1]^n`:
//!
//! * [`linsys`] — matrix systems, the structural integers `r` and `n'`,
//!   non-degeneracy verification, and orthonormal bases of the constraint
//!   subspace `S`.
//! * [`fractal`] — random Cantor-type measures on a regular grid, their
//!   Fourier transforms, ball-condition constants, decay-exponent fits, and
//!   the mollification split `mu = mu_1 + mu_2`.
//! * [`multiform`] — the configuration-counting form `Lambda` evaluated by
//!   direct quadrature, by integration over `S` on the Fourier side, and over
//!   translates `S + tau`, plus the weighted form `Theta` and the `2^k`
//!   mollification decomposition.
//! * [`configsearch`] — factories for the standard configuration families,
//!   brute-force detection of non-trivial configurations in discretized sets,
//!   exact positive-root counting, and Monte Carlo bounds for the set of
//!   near-integral translation parameters.
//! * [`approxident`] — surface measure on a null space, the constant relating
//!   a concentrating kernel limit to the surface integral, and numerical
//!   verification of that limit.
//!
//! The crate is `no_std` (with `alloc`); all floating point transcendentals
//! go through `libm` so results are bit-reproducible across platforms.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod approxident;
pub mod configsearch;
mod error;
pub mod fractal;
pub mod linalg;
pub mod linsys;
pub mod multiform;
pub mod rng;

pub use error::{Error, Result};
