use rayon::prelude::*;

use super::{fit_beam_profile, fit_dip, kappa_from_diameter, DipFit, KappaResult};
use crate::detection::ScanResult;
use crate::error::{Error, Result};

/// Outcome of fitting one conjugate trace of a scan.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFit {
    pub probe_center_um: f64,
    pub fit: Option<DipFit<f64>>,
    pub kappa: Option<KappaResult<f64>>,
    /// `ok`, `no_dip`, `not_converged` or `error`.
    pub status: String,
}

/// Fits every probe row of `scan`; κ uses the Gaussian fitted to the
/// conjugate mean profile `(x, intensity)`. Row failures are recorded in the
/// status instead of aborting; a profile that cannot be fitted is an error.
pub fn fit_scan(scan: &ScanResult<f64>, x: &[f64], conj_profile: &[f64]) -> Result<Vec<TraceFit>> {
    let beam = fit_beam_profile(x, conj_profile)?;
    let diameter = beam.diameter();
    Ok(scan
        .probe_positions
        .par_iter()
        .zip(scan.noise_db.par_iter())
        .map(|(&xp, row)| match fit_dip(&scan.conj_positions, row) {
            Ok(f) => TraceFit {
                probe_center_um: xp,
                fit: Some(f),
                kappa: kappa_from_diameter(&f, diameter).ok(),
                status: "ok".into(),
            },
            Err(e) => TraceFit {
                probe_center_um: xp,
                fit: None,
                kappa: None,
                status: match e {
                    Error::NoDip => "no_dip",
                    Error::NotConverged { .. } => "not_converged",
                    _ => "error",
                }
                .into(),
            },
        })
        .collect())
}

/// Mean κ over the rows that fitted, or `None` if none did.
pub fn mean_kappa(fits: &[TraceFit]) -> Option<f64> {
    let ks: Vec<f64> = fits.iter().filter_map(|t| t.kappa.map(|k| k.kappa)).collect();
    (!ks.is_empty()).then(|| ks.iter().sum::<f64>() / ks.len() as f64)
}
