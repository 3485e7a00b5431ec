use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Gaussian channel `cov -> m cov m^T + added_noise`, `mean -> m mean`, over
/// the full quadrature vector of a state.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMap<T: Real> {
    m: DMatrix<T>,
    added_noise: DMatrix<T>,
}

impl<T: Real> ChannelMap<T> {
    /// Builds a channel and checks it is completely positive:
    /// `added_noise + i(Omega - m Omega m^T) >= 0`, with `Omega` the symplectic
    /// form for the pixel lattice ordering `[X_p, P_p, X_c, P_c]`.
    pub fn new(m: DMatrix<T>, added_noise: DMatrix<T>) -> Result<Self> {
        let dim = m.nrows();
        if m.ncols() != dim || added_noise.shape() != (dim, dim) || !dim.is_multiple_of(4) {
            return Err(Error::ContractViolation {
                op: "ChannelMap::new",
                msg: "map and noise must be square with dimension 4 * pixel_count".into(),
            });
        }
        let ch = Self { m, added_noise };
        ch.validate()?;
        Ok(ch)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn map(&self) -> &DMatrix<T> {
        &self.m
    }

    pub fn added_noise(&self) -> &DMatrix<T> {
        &self.added_noise
    }

    fn validate(&self) -> Result<()> {
        let tol = lit::<T>(1e-8);
        let noise = &self.added_noise;
        if (noise - noise.transpose()).amax() > tol {
            return Err(Error::domain("ChannelMap", "added noise not symmetric"));
        }
        let min_noise = min_eigenvalue(noise);
        if min_noise < -tol {
            return Err(Error::domain(
                "ChannelMap",
                format!("added noise not PSD (min eigenvalue {:.3e})", min_noise.to_f64_lossy()),
            ));
        }
        let omega = symplectic_form::<T>(self.dim() / 4);
        let b = &omega - &self.m * &omega * self.m.transpose();
        // Hermitian N + iB is PSD iff [[N, -B], [B, N]] is.
        let dim = self.dim();
        let mut h = DMatrix::zeros(2 * dim, 2 * dim);
        h.view_mut((0, 0), (dim, dim)).copy_from(noise);
        h.view_mut((dim, dim), (dim, dim)).copy_from(noise);
        h.view_mut((0, dim), (dim, dim)).copy_from(&(-&b));
        h.view_mut((dim, 0), (dim, dim)).copy_from(&b);
        let min_h = min_eigenvalue(&h);
        if min_h < -tol {
            return Err(Error::domain(
                "ChannelMap",
                format!("not a valid Gaussian channel (min eigenvalue {:.3e})", min_h.to_f64_lossy()),
            ));
        }
        Ok(())
    }
}

/// `Omega` with `Omega[x_k, p_k] = 1` for every pixel mode.
pub fn symplectic_form<T: Real>(pixel_count: usize) -> DMatrix<T> {
    let n = pixel_count;
    let mut omega = DMatrix::zeros(4 * n, 4 * n);
    for beam_off in [0, 2 * n] {
        for i in 0..n {
            omega[(beam_off + i, beam_off + n + i)] = T::one();
            omega[(beam_off + n + i, beam_off + i)] = -T::one();
        }
    }
    omega
}

fn min_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(T::max_value().unwrap(), |a, b| a.min(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_channel_is_valid() {
        let dim = 8;
        let eta = 0.3f64;
        let m = DMatrix::identity(dim, dim) * eta.sqrt();
        let n = DMatrix::identity(dim, dim) * (1.0 - eta);
        assert!(ChannelMap::new(m, n).is_ok());
    }

    #[test]
    fn noiseless_attenuation_is_rejected() {
        let dim = 8;
        let m = DMatrix::identity(dim, dim) * 0.5f64;
        let n = DMatrix::zeros(dim, dim);
        assert!(ChannelMap::new(m, n).is_err());
    }

    #[test]
    fn unitary_rotation_is_valid() {
        let mut m = DMatrix::<f64>::identity(8, 8);
        let (s, c) = 0.7f64.sin_cos();
        // rotate X and P of pixel 0 of the probe (indices 0 and 2 for n = 2)
        m[(0, 0)] = c;
        m[(0, 2)] = -s;
        m[(2, 0)] = s;
        m[(2, 2)] = c;
        assert!(ChannelMap::new(m, DMatrix::zeros(8, 8)).is_ok());
    }
}
