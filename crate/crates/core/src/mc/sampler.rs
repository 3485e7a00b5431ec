//! Monte Carlo estimate of the slit noise by sampling quadrature fluctuations.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{slit_weights, SlitParams};
use crate::error::{Error, Result};
use crate::lattice::{FieldState, Grid2D};
use crate::scalar::{lit, Real};

pub const MIN_SAMPLES: u64 = 1_000;
pub const MAX_SAMPLES: u64 = 100_000_000;

/// Samples per RNG stream. Block `b` draws from stream `b` of a ChaCha8
/// generator keyed by the seed, and blocks are reduced in index order, so the
/// estimate does not depend on the thread count.
pub const BLOCK_SAMPLES: u64 = 16_384;

const JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig<T> {
    pub n_samples: u64,
    pub rng_seed: u64,
    /// Renderer lattice.
    pub grid2d: Grid2D<T>,
}

impl<T: Real> Default for McConfig<T> {
    fn default() -> Self {
        Self {
            n_samples: 1_000_000,
            rng_seed: 7,
            grid2d: Grid2D {
                nx: 256,
                ny: 256,
                pitch: lit(1.5),
            },
        }
    }
}

impl<T: Real> McConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_SAMPLES..=MAX_SAMPLES).contains(&self.n_samples) {
            return Err(Error::config(
                "mc",
                "n_samples",
                format!("must lie in [{MIN_SAMPLES}, {MAX_SAMPLES}]"),
            ));
        }
        Grid2D::new(self.grid2d.nx, self.grid2d.ny, self.grid2d.pitch)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub v_rel_estimate: f64,
    pub std_error: f64,
    pub n_samples: u64,
}

/// Lower Cholesky factor, retried once with a diagonal jitter.
fn factor(cov: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = cov.clone().cholesky() {
        return Ok(ch.l());
    }
    let n = cov.nrows();
    let jittered = cov + DMatrix::identity(n, n) * JITTER;
    jittered
        .cholesky()
        .map(|ch| ch.l())
        .ok_or_else(|| Error::Factorization("covariance is not positive definite".into()))
}

/// Sample variance of the linearized intensity difference over the QNL.
///
/// Only the quadratures carrying detection weight are sampled; their joint
/// distribution is the corresponding sub-block of the covariance.
pub fn mc_noise<T: Real>(
    state: &FieldState<T>,
    slit_p: &SlitParams<T>,
    slit_c: &SlitParams<T>,
    cfg: &McConfig<T>,
) -> Result<McEstimate> {
    if !(MIN_SAMPLES..=MAX_SAMPLES).contains(&cfg.n_samples) {
        return Err(Error::config("mc", "n_samples", format!("must lie in [{MIN_SAMPLES}, {MAX_SAMPLES}]")));
    }
    let w = slit_weights(state, slit_p, slit_c)?;
    let wv = DVector::from_iterator(w.len(), w.iter().map(|(_, v)| v.to_f64_lossy()));
    let qnl = wv.norm_squared();
    if !(qnl > 0.0) {
        return Err(Error::NoLight);
    }
    let cov = state.cov();
    let k = w.len();
    let sub = DMatrix::from_fn(k, k, |i, j| cov[(w[i].0, w[j].0)].to_f64_lossy());
    let l = factor(sub)?;

    let n = cfg.n_samples;
    let blocks = n.div_ceil(BLOCK_SAMPLES);
    let sums: Vec<(f64, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            rng.set_stream(b);
            let count = BLOCK_SAMPLES.min(n - b * BLOCK_SAMPLES);
            let mut z = DVector::<f64>::zeros(k);
            let mut x = DVector::<f64>::zeros(k);
            let (mut s2, mut s4) = (0.0, 0.0);
            for _ in 0..count {
                for zi in z.iter_mut() {
                    *zi = StandardNormal.sample(&mut rng);
                }
                x.gemv(1.0, &l, &z, 0.0);
                let y = wv.dot(&x);
                let y2 = y * y;
                s2 += y2;
                s4 += y2 * y2;
            }
            (s2, s4)
        })
        .collect();
    let (s2, s4) = sums.iter().fold((0.0, 0.0), |a, s| (a.0 + s.0, a.1 + s.1));
    let nf = n as f64;
    let m2 = s2 / nf;
    let m4 = s4 / nf;
    let se = ((m4 - m2 * m2).max(0.0) / nf).sqrt();
    Ok(McEstimate {
        v_rel_estimate: m2 / qnl,
        std_error: se / qnl,
        n_samples: n,
    })
}
