//! Monte Carlo cross-check of the covariance engine and 2D speckle rendering.

mod pgm;
mod render;
mod sampler;

pub use pgm::{decode_pgm16, encode_pgm16};
pub use render::{
    fft2_unitary, gaussian_intensity, render_farfield, render_nearfield, FarField, FiberId, FiberLattice, NearField,
    PhaseMode, SpeckleStats, SPECKLE_THRESHOLD,
};
pub use sampler::{mc_noise, McConfig, McEstimate, BLOCK_SAMPLES, MAX_SAMPLES, MIN_SAMPLES};
