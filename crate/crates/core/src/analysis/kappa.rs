use serde::{Deserialize, Serialize};

use super::fit::{fit_beam_profile, DipFit};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dip width relative to the beam size. The beam diameter is the 1/e²
/// intensity diameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaResult<T> {
    pub kappa: T,
    pub dip_fwhm: T,
    pub beam_diameter: T,
}

pub fn kappa_from_diameter<T: Real>(fit: &DipFit<T>, beam_diameter: T) -> Result<KappaResult<T>> {
    if !(fit.sigma > T::zero()) || !(beam_diameter > T::zero()) {
        return Err(Error::domain("compute_kappa", "sigma and beam diameter must be positive"));
    }
    let dip_fwhm = fit.fwhm();
    Ok(KappaResult {
        kappa: dip_fwhm / beam_diameter,
        dip_fwhm,
        beam_diameter,
    })
}

/// κ with the beam diameter taken from a Gaussian fit to the conjugate mean
/// intensity profile.
pub fn compute_kappa<T: Real>(fit: &DipFit<T>, positions: &[T], profile: &[T]) -> Result<KappaResult<T>> {
    let beam = fit_beam_profile(positions, profile)?;
    kappa_from_diameter(fit, beam.diameter())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dip(sigma: f64) -> DipFit<f64> {
        DipFit {
            center: 0.0,
            sigma,
            depth_db: -1.0,
            baseline_db: 0.5,
            rms_residual: 0.0,
            iterations: 1,
        }
    }

    #[test]
    fn fifty_micron_dip_on_400_micron_beam() {
        let k = kappa_from_diameter(&dip(50.0), 400.0).unwrap();
        assert!((k.dip_fwhm - 117.741).abs() < 1e-3);
        assert!((k.kappa - 0.294).abs() < 1e-3);
    }

    #[test]
    fn scale_invariant() {
        let a = kappa_from_diameter(&dip(50.0), 400.0).unwrap();
        let b = kappa_from_diameter(&dip(100.0), 800.0).unwrap();
        assert!((a.kappa - b.kappa).abs() < 1e-15);
    }

    #[test]
    fn from_profile() {
        let xs: Vec<f64> = (0..201).map(|i| -1000.0 + 10.0 * i as f64).collect();
        let prof: Vec<f64> = xs.iter().map(|x| (-2.0 * x * x / (200.0 * 200.0)).exp()).collect();
        let k = compute_kappa(&dip(50.0), &xs, &prof).unwrap();
        assert!((k.beam_diameter - 400.0).abs() < 1e-6);
        assert!((k.kappa - 0.2943).abs() < 1e-3);
    }
}
