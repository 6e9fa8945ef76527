//! Discrete FK Ising and percolation interfaces with four marked boundary
//! points, and the hypergeometric SLE processes describing their scaling
//! limits.
//!
//! Module map:
//!
//! - [`lattice`]: square–octagon domains with marked points.
//! - [`fk`]: loop representation sampler, interfaces and arc patterns.
//! - [`specfun`]: Gauss ₂F₁ and Γ on the real line.
//! - [`observables`]: closed-form martingales, drifts and cross-ratios.
//! - [`sde`]: Euler–Maruyama driving processes and Girsanov weights.
//! - [`loewner`]: slit-map composition, forward maps and traces.
//! - [`pair`]: sampling of the conditioned interface pair.
//! - [`percolation`]: triangular-lattice site percolation and crossings.
//! - [`harness`]: replicated experiments and two-sample statistics.

pub mod error;
pub mod fk;
pub mod harness;
pub mod lattice;
pub mod loewner;
pub mod observables;
pub mod pair;
pub mod percolation;
pub mod rng;
pub mod sde;
pub mod specfun;

pub use error::{Error, Result};
