//! Exact laws and Monte Carlo for the peeling process of critical site
//! percolation on the uniform infinite planar triangulation.
//!
//! The boundary of the explored region is encoded by `(S, R, B)`: its size and
//! its red and blue vertex counts. [`exact_laws`] holds the closed-form laws,
//! [`samplers`] draws from them reproducibly, [`peeling`] runs the chain,
//! [`ladder_walks`] covers the two-walk ladder picture, and [`experiments`]
//! turns replicates into survival curves, tail fits and test statistics.

pub mod exact_laws;
pub mod experiments;
pub mod ladder_walks;
pub mod peeling;
pub mod samplers;
pub mod special;
