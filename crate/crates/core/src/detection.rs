//! Slit selection and balanced intensity-difference detection.
//!
//! In the bright-beam limit the photocurrent fluctuation of a pixel with mean
//! field `alpha` is `|alpha| dX_phi`, the quadrature along the local mean
//! phase. The balanced detector subtracts the conjugate slit from the probe
//! slit; the variance is normalized by the shot noise of the same total flux.

use std::collections::BTreeMap;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{check_physicality, Beam, FieldState, Grid1D, Quad};
use crate::scalar::{lit, to_db, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlitParams<T> {
    pub center_um: T,
    pub width_um: T,
}

impl<T: Real> SlitParams<T> {
    pub fn new(center_um: T, width_um: T) -> Self {
        Self { center_um, width_um }
    }

    /// A slit wide open over the whole grid.
    pub fn full_beam(grid: &Grid1D<T>) -> Self {
        let (lo, hi) = grid.extent();
        Self {
            center_um: (lo + hi) / lit(2.0),
            width_um: (hi - lo) + grid.pitch(),
        }
    }

    /// Pixels whose centers satisfy `center - w/2 <= x < center + w/2`.
    pub fn window(&self, grid: &Grid1D<T>) -> Result<Range<usize>> {
        if !(self.width_um > T::zero()) || !self.center_um.is_finite() {
            return Err(Error::config("detection", "slit", "width must be positive, center finite"));
        }
        let half = self.width_um / lit(2.0);
        let (lo, hi) = (self.center_um - half, self.center_um + half);
        let mut start = None;
        let mut end = 0;
        for i in 0..grid.pixel_count() {
            let x = grid.coordinate(i);
            if x >= lo && x < hi {
                start.get_or_insert(i);
                end = i + 1;
            }
        }
        match start {
            Some(s) => Ok(s..end),
            None => Err(Error::config(
                "detection",
                "slit",
                format!(
                    "slit at {} µm (width {} µm) does not intersect the grid",
                    self.center_um.to_f64_lossy(),
                    self.width_um.to_f64_lossy()
                ),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseReading<T> {
    /// Variance relative to the QNL.
    pub v_rel: T,
    pub db: T,
    /// Total mean flux on both detectors.
    pub qnl_flux: T,
}

/// Sparse detection weights: covariance index and weight.
pub(crate) fn slit_weights<T: Real>(
    state: &FieldState<T>,
    slit_p: &SlitParams<T>,
    slit_c: &SlitParams<T>,
) -> Result<Vec<(usize, T)>> {
    let grid = state.grid();
    let mut w = Vec::new();
    for (beam, slit, sign) in [(Beam::Probe, slit_p, T::one()), (Beam::Conj, slit_c, -T::one())] {
        for i in slit.window(grid)? {
            let a = state.mean(beam)[i];
            if a.re != T::zero() {
                w.push((state.index(beam, Quad::X, i), sign * a.re));
            }
            if a.im != T::zero() {
                w.push((state.index(beam, Quad::P, i), sign * a.im));
            }
        }
    }
    Ok(w)
}

/// Intensity-difference noise for one pair of slit positions.
pub fn measure_noise<T: Real>(
    state: &FieldState<T>,
    slit_p: &SlitParams<T>,
    slit_c: &SlitParams<T>,
) -> Result<NoiseReading<T>> {
    let w = slit_weights(state, slit_p, slit_c)?;
    let qnl = w.iter().fold(T::zero(), |acc, (_, v)| acc + *v * *v);
    if !(qnl > T::zero()) {
        return Err(Error::NoLight);
    }
    let cov = state.cov();
    let mut var = T::zero();
    for &(a, wa) in &w {
        let mut row = T::zero();
        for &(b, wb) in &w {
            row += cov[(a, b)] * wb;
        }
        var += wa * row;
    }
    let v_rel = var / qnl;
    Ok(NoiseReading {
        v_rel,
        db: to_db(v_rel),
        qnl_flux: qnl,
    })
}

/// Slit-scan map: `noise_db[i][j]` for probe slit `i`, conjugate slit `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult<T> {
    pub slit_width_um: T,
    pub probe_positions: Vec<T>,
    pub conj_positions: Vec<T>,
    /// dB re QNL; `NaN` marks points with no light on the detector.
    pub noise_db: Vec<Vec<T>>,
    pub qnl_flux: Vec<Vec<T>>,
    pub metadata: BTreeMap<String, String>,
}

impl<T: Real> ScanResult<T> {
    pub fn row(&self, i: usize) -> &[T] {
        &self.noise_db[i]
    }
}

fn check_monotone<T: Real>(name: &str, xs: &[T]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::config("scan", name, "must not be empty"));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::config("scan", name, "must be finite"));
    }
    let up = xs.windows(2).all(|w| w[1] > w[0]);
    let down = xs.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) {
        return Err(Error::config("scan", name, "must be strictly monotone"));
    }
    Ok(())
}

/// Scans the conjugate slit for every probe slit position. Rows run in
/// parallel; output order is fixed by the input lists.
pub fn run_scan<T: Real>(
    state: &FieldState<T>,
    slit_width_um: T,
    probe_centers: &[T],
    conj_centers: &[T],
) -> Result<ScanResult<T>> {
    check_monotone("probe_centers", probe_centers)?;
    check_monotone("conj_centers", conj_centers)?;
    if !(slit_width_um > T::zero()) {
        return Err(Error::config("scan", "slit_width_um", "must be positive"));
    }
    let rows: Vec<Result<(Vec<T>, Vec<T>)>> = probe_centers
        .par_iter()
        .map(|&xp| {
            let sp = SlitParams::new(xp, slit_width_um);
            let mut db = Vec::with_capacity(conj_centers.len());
            let mut flux = Vec::with_capacity(conj_centers.len());
            for &xc in conj_centers {
                let sc = SlitParams::new(xc, slit_width_um);
                match measure_noise(state, &sp, &sc) {
                    Ok(r) => {
                        db.push(r.db);
                        flux.push(r.qnl_flux);
                    }
                    Err(Error::NoLight) => {
                        db.push(T::lit(f64::NAN));
                        flux.push(T::zero());
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok((db, flux))
        })
        .collect();
    let mut noise_db = Vec::with_capacity(rows.len());
    let mut qnl_flux = Vec::with_capacity(rows.len());
    for r in rows {
        let (d, f) = r?;
        noise_db.push(d);
        qnl_flux.push(f);
    }
    Ok(ScanResult {
        slit_width_um,
        probe_positions: probe_centers.to_vec(),
        conj_positions: conj_centers.to_vec(),
        noise_db,
        qnl_flux,
        metadata: BTreeMap::new(),
    })
}

/// Matched-slit noise (dB) for each width, both slits centred on `center_um`.
pub fn slit_width_sweep<T: Real>(state: &FieldState<T>, widths: &[T], center_um: T) -> Result<Vec<T>> {
    if widths.iter().any(|w| !(*w > T::zero())) {
        return Err(Error::config("sweep", "widths", "must be positive"));
    }
    if widths.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::config("sweep", "widths", "must be descending"));
    }
    widths
        .iter()
        .map(|&w| {
            let s = SlitParams::new(center_um, w);
            measure_noise(state, &s, &s).map(|r| r.db)
        })
        .collect()
}

/// [`measure_noise`] preceded by a physicality check of the state.
pub fn measure_noise_checked<T: Real>(
    state: &FieldState<T>,
    slit_p: &SlitParams<T>,
    slit_c: &SlitParams<T>,
) -> Result<NoiseReading<T>> {
    let p = check_physicality(state)?;
    if !p.ok {
        return Err(Error::Unphysical {
            stage: "measure_noise".into(),
            nu_min: p.nu_min.to_f64_lossy(),
        });
    }
    measure_noise(state, slit_p, slit_c)
}
