//! Numerical laboratory for Hermitian random band matrices with a two-level
//! block structure: a periodic 2D lattice of blocks, each block a fully
//! connected cell of width-`W` sites.
//!
//! The crate provides, bottom-up:
//!
//! - [`lattice`]: block/site geometry on the discrete torus and the periodic
//!   L¹ metric that controls every decay estimate downstream.
//! - [`model`]: the semicircle Stieltjes transform, the characteristic flow
//!   `z_t = E + (1 - t) m(E)` that carries a fixed spectral parameter toward
//!   the real axis, and the derived length/size scales.
//! - [`propagator`]: the lattice propagator `(1 - xi S_B)^{-1}` of the block
//!   variance stencil, its Neumann-series and heat-kernel companions, and
//!   fitted exponential-decay diagnostics.
//! - [`sampler`]: counter-based, reproducible Gaussian sampling of band
//!   ensembles, GUE references, and Ornstein-Uhlenbeck interpolations.
//! - [`spectra`]: dense eigensolves, resolvents (dense and recursive
//!   Schur-complement paths for large sizes), and spectral statistics
//!   (local-law deviations, sup norms, eigenvector overlaps, gap ratios).
//! - [`loops`]: resolvent loop observables `tr G(s1) E_{a1} ... G(sn) E_{an}`
//!   evaluated from an eigensystem, and their Ward-identity residuals.
//! - [`primitive`]: the deterministic leading-order loop amplitudes, both in
//!   closed form (ranks 1-3) and as the solution of the loop hierarchy ODE,
//!   plus the block-tensor operators (projections, evolution kernels) acting
//!   on them.
//!
//! Everything is deterministic: samples are indexed, not streamed, and all
//! linear algebra runs on a pinned sequential backend when bit-stable output
//! is required.

pub mod lattice;
pub mod loops;
pub mod model;
pub mod primitive;
pub mod propagator;
pub mod sampler;
pub mod spectra;

pub use num_complex::Complex64;
