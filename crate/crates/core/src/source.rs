//! Bright multimode twin beams from a seeded phase-insensitive amplifier.
//!
//! The transverse plane is cut into coherence cells. Each cell carries an
//! independent two-mode squeezer between the same-position cell modes of the
//! probe and the conjugate, with a gain set by the local pump intensity. Cell
//! modes are the seed amplitude windowed to the cell, so the bright mean field
//! lies entirely in the squeezed subspace; pixels' remaining degrees of
//! freedom stay in vacuum.

use std::ops::Range;

use nalgebra::DVector;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Beam, FieldState, Grid1D, Quad};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceParams<T> {
    /// Peak single-pass gain `G0 > 1`.
    pub gain_peak: T,
    /// 1/e² intensity radius of the pump (µm); `None` means uniform gain.
    pub pump_waist_um: Option<T>,
    /// Coherence cell width (µm).
    pub coherence_cell_um: T,
    /// 1/e² intensity radius of the seed (µm); `None` means a flat seed.
    pub seed_waist_um: Option<T>,
    /// Total seed flux over the grid.
    pub seed_power: T,
    /// Documentation only in the 1D model.
    pub wavelength_nm: T,
}

impl<T: Real> Default for SourceParams<T> {
    fn default() -> Self {
        Self {
            gain_peak: lit(1.5),
            pump_waist_um: Some(lit(900.0)),
            coherence_cell_um: lit(120.0),
            seed_waist_um: Some(lit(750.0)),
            seed_power: lit(1.0e6),
            wavelength_nm: lit(795.0),
        }
    }
}

impl<T: Real> SourceParams<T> {
    /// Flat pump and flat seed: every cell sees gain `g`.
    pub fn uniform(g: T, coherence_cell_um: T) -> Self {
        Self {
            gain_peak: g,
            pump_waist_um: None,
            coherence_cell_um,
            seed_waist_um: None,
            ..Self::default()
        }
    }

    pub fn validate(&self, grid: &Grid1D<T>) -> Result<()> {
        if !(self.gain_peak > T::one()) || !self.gain_peak.is_finite() {
            return Err(Error::config("source", "gain_peak", "must be > 1"));
        }
        let min_cell = lit::<T>(2.0) * grid.pitch() * lit(1.0 - 1e-9);
        if !(self.coherence_cell_um >= min_cell) {
            return Err(Error::config(
                "source",
                "coherence_cell_um",
                format!(
                    "{} µm is below two grid pixels ({} µm)",
                    self.coherence_cell_um.to_f64_lossy(),
                    (grid.pitch() * lit(2.0)).to_f64_lossy()
                ),
            ));
        }
        if let Some(w) = self.pump_waist_um {
            if !(w > T::zero()) {
                return Err(Error::config("source", "pump_waist_um", "must be positive"));
            }
        }
        if let Some(w) = self.seed_waist_um {
            if !(w > self.coherence_cell_um) {
                return Err(Error::config(
                    "source",
                    "seed_waist_um",
                    "must exceed the coherence cell width",
                ));
            }
        }
        if !(self.seed_power > T::zero()) {
            return Err(Error::config("source", "seed_power", "must be positive"));
        }
        Ok(())
    }

    /// Local gain `1 + (G0 - 1) exp(-2 x² / w_pump²)`.
    pub fn local_gain(&self, x: T) -> T {
        match self.pump_waist_um {
            None => self.gain_peak,
            Some(w) => {
                T::one() + (self.gain_peak - T::one()) * (lit::<T>(-2.0) * x * x / (w * w)).exp()
            }
        }
    }

    /// Unnormalized seed amplitude.
    fn seed_shape(&self, x: T) -> T {
        match self.seed_waist_um {
            None => T::one(),
            Some(w) => (-(x * x) / (w * w)).exp(),
        }
    }
}

/// Contiguous pixel ranges of width `round(cell / pitch)`, starting at pixel 0.
/// The last range may be shorter.
pub fn cell_partition<T: Real>(grid: &Grid1D<T>, coherence_cell_um: T) -> Vec<Range<usize>> {
    let width = (coherence_cell_um / grid.pitch())
        .round()
        .to_f64_lossy()
        .max(1.0) as usize;
    let n = grid.pixel_count();
    (0..n)
        .step_by(width)
        .map(|start| start..(start + width).min(n))
        .collect()
}

/// Seed amplitude per pixel, scaled to carry `seed_power` in total.
pub fn seed_amplitude<T: Real>(grid: &Grid1D<T>, p: &SourceParams<T>) -> Vec<T> {
    let shape: Vec<T> = grid.coordinates().into_iter().map(|x| p.seed_shape(x)).collect();
    let total = shape.iter().fold(T::zero(), |a, s| a + *s * *s);
    let scale = (p.seed_power / total).sqrt();
    shape.into_iter().map(|s| s * scale).collect()
}

/// Builds the amplified probe/conjugate state.
pub fn build_twin_beams<T: Real>(grid: Grid1D<T>, p: &SourceParams<T>) -> Result<FieldState<T>> {
    p.validate(&grid)?;
    let n = grid.pixel_count();
    let seed = seed_amplitude(&grid, p);
    let mut state = FieldState::vacuum(grid);
    let two = lit::<T>(2.0);

    for cell in cell_partition(&grid, p.coherence_cell_um) {
        let len = cell.len();
        let center = cell
            .clone()
            .fold(T::zero(), |a, i| a + grid.coordinate(i))
            / lit(len as f64);
        let g = p.local_gain(center);

        let mut mode = DVector::from_iterator(len, cell.clone().map(|i| seed[i]));
        let norm = mode.norm();
        if norm > T::zero() {
            mode /= norm;
        } else {
            mode.fill(T::one() / lit::<T>(len as f64).sqrt());
        }

        // cosh(2r) = 2G - 1, sinh(2r) = 2 sqrt(G (G - 1))
        let excess = two * g - two;
        let cross = two * (g * (g - T::one())).sqrt();
        let cov = state.cov_mut();
        for (a, ia) in cell.clone().enumerate() {
            for (b, ib) in cell.clone().enumerate() {
                let uu = mode[a] * mode[b];
                for beam in [Beam::Probe, Beam::Conj] {
                    for quad in [Quad::X, Quad::P] {
                        let (r, c) = (idx(n, beam, quad, ia), idx(n, beam, quad, ib));
                        cov[(r, c)] += excess * uu;
                    }
                }
                let xx = cross * uu;
                let (xp, xc) = (idx(n, Beam::Probe, Quad::X, ia), idx(n, Beam::Conj, Quad::X, ib));
                cov[(xp, xc)] += xx;
                cov[(xc, xp)] += xx;
                let (pp, pc) = (idx(n, Beam::Probe, Quad::P, ia), idx(n, Beam::Conj, Quad::P, ib));
                cov[(pp, pc)] -= xx;
                cov[(pc, pp)] -= xx;
            }
        }

        let (gp, gc) = (g.sqrt(), (g - T::one()).sqrt());
        for i in cell {
            state.mean_mut(Beam::Probe)[i] = Complex::new(gp * seed[i], T::zero());
            state.mean_mut(Beam::Conj)[i] = Complex::new(gc * seed[i], T::zero());
        }
    }
    Ok(state)
}

#[inline]
fn idx(n: usize, beam: Beam, quad: Quad, pixel: usize) -> usize {
    crate::lattice::state_index(n, beam, quad, pixel)
}

/// Intensity-difference variance relative to the QNL for a seeded amplifier of
/// gain `g`, with total probe/conjugate transmissions `eta_p`, `eta_c`.
pub fn closed_form_noise<T: Real>(g: T, eta_p: T, eta_c: T) -> Result<T> {
    if !(g > T::one()) || !g.is_finite() {
        return Err(Error::domain("closed_form_noise", "gain must be > 1"));
    }
    for (name, eta) in [("eta_p", eta_p), ("eta_c", eta_c)] {
        if !(eta > T::zero() && eta <= T::one()) {
            return Err(Error::domain(
                "closed_form_noise",
                format!("{} = {} outside (0, 1]", name, eta.to_f64_lossy()),
            ));
        }
    }
    Ok(closed_form_unchecked(g, eta_p, eta_c))
}

/// The rational noise formula with no domain checks. Defined for `eta_c = 0`.
pub(crate) fn closed_form_unchecked<T: Real>(g: T, p: T, c: T) -> T {
    let one = T::one();
    let two = lit::<T>(2.0);
    let four = lit::<T>(4.0);
    let gm = g - one;
    let amp = two * g - one;
    let num = p * p * g * amp + c * c * gm * amp - four * p * c * g * gm
        + p * (one - p) * g
        + c * (one - c) * gm;
    num / (p * g + c * gm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::check_physicality;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn grid(n: usize, pitch: f64) -> Grid1D<f64> {
        Grid1D::centered(n, pitch).unwrap()
    }

    #[test]
    fn closed_form_examples() {
        let v = closed_form_noise(1.5, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(v, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(crate::to_db(v), -3.0103, epsilon = 1e-4);
        // equals 1 - eta + eta / (2G - 1) for balanced loss
        assert_abs_diff_eq!(closed_form_noise(1.5, 0.5, 0.5).unwrap(), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(closed_form_noise(1.5, 0.95, 0.95).unwrap(), 0.525, epsilon = 1e-15);
        for eta in [0.2, 0.6, 1.0] {
            let v = closed_form_noise(1.0 + 1e-12, eta, eta * 0.7).unwrap();
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn closed_form_domain() {
        assert!(closed_form_noise(1.0, 1.0, 1.0).is_err());
        assert!(closed_form_noise(0.5, 1.0, 1.0).is_err());
        assert!(closed_form_noise(1.5, 0.0, 1.0).is_err());
        assert!(closed_form_noise(1.5, 1.0, 1.1).is_err());
    }

    #[test]
    fn uniform_cell_mode_moments() {
        // Oracle: 4x4 two-mode squeezer S(r) applied to vacuum, S S^T.
        let g = 1.5f64;
        let r = g.sqrt().acosh();
        let (ch, sh) = (r.cosh(), r.sinh());
        // x_p' = ch x_p + sh x_c, p_p' = ch p_p - sh p_c (and symmetric)
        let s = nalgebra::Matrix4::new(
            ch, sh, 0.0, 0.0, //
            sh, ch, 0.0, 0.0, //
            0.0, 0.0, ch, -sh, //
            0.0, 0.0, -sh, ch,
        );
        let v = s * s.transpose();

        let gr = grid(8, 1.0);
        let p = SourceParams::uniform(g, 4.0);
        let st = build_twin_beams(gr, &p).unwrap();
        // Cell mode u = (1,1,1,1)/2 on pixels 0..4.
        let u: Vec<f64> = vec![0.5; 4];
        let proj = |b1: Beam, q1: Quad, b2: Beam, q2: Quad| {
            let mut acc = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    acc += u[i] * u[j] * st.cov()[(st.index(b1, q1, i), st.index(b2, q2, j))];
                }
            }
            acc
        };
        assert_abs_diff_eq!(proj(Beam::Probe, Quad::X, Beam::Probe, Quad::X), v[(0, 0)], epsilon = 1e-12);
        assert_abs_diff_eq!(proj(Beam::Probe, Quad::X, Beam::Probe, Quad::X), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(proj(Beam::Probe, Quad::X, Beam::Conj, Quad::X), v[(0, 1)], epsilon = 1e-12);
        assert_abs_diff_eq!(proj(Beam::Probe, Quad::X, Beam::Conj, Quad::X), 3f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(proj(Beam::Probe, Quad::P, Beam::Conj, Quad::P), v[(2, 3)], epsilon = 1e-12);
        let phys = check_physicality(&st).unwrap();
        assert_abs_diff_eq!(phys.nu_min, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn near_unit_gain_is_vacuum_plus_seed() {
        let gr = grid(16, 1.0);
        let p = SourceParams::uniform(1.0 + 1e-9, 4.0);
        let st = build_twin_beams(gr, &p).unwrap();
        assert!((st.cov() - nalgebra::DMatrix::identity(64, 64)).amax() < 1e-4);
        assert!(st.total_power(Beam::Conj) < 1e-8 * st.total_power(Beam::Probe));
        assert_relative_eq!(st.total_power(Beam::Probe), p.seed_power, max_relative = 1e-8);
    }

    #[test]
    fn gain_profile_and_edge_excess() {
        let p = SourceParams {
            gain_peak: 2.0,
            pump_waist_um: Some(100.0),
            coherence_cell_um: 10.0,
            seed_waist_um: Some(150.0),
            ..SourceParams::default()
        };
        assert_abs_diff_eq!(p.local_gain(100.0), 1.0 + (-2.0f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(p.local_gain(100.0), 1.135, epsilon = 1e-3);
        let gr = grid(100, 4.0);
        let st = build_twin_beams(gr, &p).unwrap();
        // Excess on a cell-diagonal element: larger at the centre.
        let n = gr.pixel_count();
        let diag_excess = |i: usize| st.cov()[(st.index(Beam::Probe, Quad::X, i), st.index(Beam::Probe, Quad::X, i))] - 1.0;
        assert!(diag_excess(n / 2) > diag_excess(3));
    }

    #[test]
    fn flux_ratio_per_cell() {
        let p = SourceParams {
            gain_peak: 1.8,
            pump_waist_um: Some(200.0),
            coherence_cell_um: 20.0,
            seed_waist_um: Some(150.0),
            ..SourceParams::default()
        };
        let gr = grid(120, 4.0);
        let st = build_twin_beams(gr, &p).unwrap();
        for cell in cell_partition(&gr, p.coherence_cell_um) {
            let center = cell.clone().map(|i| gr.coordinate(i)).sum::<f64>() / cell.len() as f64;
            let g = p.local_gain(center);
            for i in cell {
                let ip = st.mean(Beam::Probe)[i].norm_sqr();
                let ic = st.mean(Beam::Conj)[i].norm_sqr();
                assert_abs_diff_eq!(ip / ic, g / (g - 1.0), epsilon = 1e-9 * g / (g - 1.0));
            }
        }
    }

    #[test]
    fn rejects_small_cells() {
        let gr = grid(16, 4.0);
        let p = SourceParams::uniform(1.5, 7.0);
        assert!(matches!(build_twin_beams(gr, &p), Err(Error::Config { .. })));
    }
}
