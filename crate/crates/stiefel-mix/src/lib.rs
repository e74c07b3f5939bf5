//! Bayesian nonparametric density estimation on Stiefel manifolds.
//!
//! The crate provides, bottom up:
//!
//! - [`manifold`]: orthonormal p-frames in R^d, Haar sampling, projection,
//!   Frobenius geometry;
//! - [`hypergeom`]: the matrix-argument hypergeometric function 0F1 that
//!   normalizes matrix Langevin densities, via a zonal polynomial series;
//! - [`langevin`]: the matrix Langevin (matrix von Mises-Fisher) family:
//!   density, exact rejection sampling, mean;
//! - [`mixture`]: Dirichlet process mixtures of Langevin kernels fitted by
//!   collapsed Gibbs sweeps with auxiliary-component reassignment and
//!   Metropolis-Hastings parameter moves, plus posterior summaries;
//! - [`diagnostics`]: Monte Carlo density diagnostics (Hellinger, KL,
//!   kernel approximation error, Lipschitz ratios, prior tail checks);
//! - [`io`]: frame datasets on disk, orbital-element conversion, run
//!   configuration and chain output emission.

pub mod diagnostics;
pub mod hypergeom;
pub mod io;
pub mod langevin;
pub mod manifold;
pub mod mixture;
pub(crate) mod numeric;
