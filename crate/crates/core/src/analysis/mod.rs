//! Dip fitting, κ extraction and attenuation balancing.

mod fit;
mod kappa;
mod lm;
mod optimize;
mod traces;

pub use fit::{fit_beam_profile, fit_dip, fwhm_from_sigma, BeamFit, DipFit};
pub use kappa::{compute_kappa, kappa_from_diameter, KappaResult};
pub use optimize::{attenuation_curve, optimize_attenuation, AttenuationOptimum, OptimizeMethod};
pub use traces::{fit_scan, mean_kappa, TraceFit};
