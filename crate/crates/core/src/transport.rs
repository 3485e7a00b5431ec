//! Everything between the amplifier and the slits: conjugate attenuator,
//! fiber-bundle conduit, imaging blur and detector efficiency.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{ensure_physical, Beam, Beams, FieldState, Grid1D, Profile};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConduitParams<T> {
    pub fiber_pitch_um: T,
    /// Core-area to face-area ratio (calibrated).
    pub fill_transmission: T,
    /// Both facets combined (calibrated).
    pub facet_transmission: T,
    pub crosstalk_angle_rad: T,
    pub phase_seed: u64,
    /// Documentation and speckle rendering only.
    pub output_na: T,
    /// Core diameter over fiber pitch for the 2D renderer. `None` derives it
    /// from `fill_transmission` on the triangular lattice.
    #[serde(default)]
    pub core_fraction: Option<T>,
}

impl<T: Real> Default for ConduitParams<T> {
    fn default() -> Self {
        Self {
            fiber_pitch_um: lit(12.0),
            fill_transmission: lit(0.35),
            facet_transmission: lit(0.857),
            crosstalk_angle_rad: lit(0.15),
            phase_seed: 1,
            output_na: lit(0.55),
            core_fraction: None,
        }
    }
}

impl<T: Real> ConduitParams<T> {
    pub fn total_transmission(&self) -> T {
        self.fill_transmission * self.facet_transmission
    }

    /// Core diameter / pitch. A disk of diameter `f p` per triangular-lattice
    /// cell of area `(sqrt 3 / 2) p²` covers `pi f² / (2 sqrt 3)` of the face.
    pub fn core_fraction(&self) -> T {
        self.core_fraction.unwrap_or_else(|| {
            (self.fill_transmission * lit::<T>(2.0 * 3f64.sqrt()) / T::pi()).sqrt()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fiber_pitch_um > T::zero()) {
            return Err(Error::config("conduit", "fiber_pitch_um", "must be positive"));
        }
        for (name, v) in [
            ("fill_transmission", self.fill_transmission),
            ("facet_transmission", self.facet_transmission),
        ] {
            if !(v > T::zero() && v <= T::one()) {
                return Err(Error::config("conduit", name, "must be in (0, 1]"));
            }
        }
        if !self.crosstalk_angle_rad.is_finite() {
            return Err(Error::config("conduit", "crosstalk_angle_rad", "must be finite"));
        }
        if let Some(f) = self.core_fraction {
            if !(f > T::zero() && f <= T::one()) {
                return Err(Error::config("conduit", "core_fraction", "must be in (0, 1]"));
            }
        }
        Ok(())
    }

    fn check_grid(&self, grid: &Grid1D<T>) -> Result<()> {
        self.validate()?;
        if grid.pitch() > self.fiber_pitch_um / lit(3.0) * lit(1.0 + 1e-9) {
            return Err(Error::config(
                "conduit",
                "fiber_pitch_um",
                format!(
                    "grid pitch {} µm exceeds a third of the fiber pitch {} µm",
                    grid.pitch().to_f64_lossy(),
                    self.fiber_pitch_um.to_f64_lossy()
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttenuatorSetting<T> {
    transmission: T,
}

impl<T: Real> AttenuatorSetting<T> {
    pub fn new(transmission: T) -> Result<Self> {
        if !(transmission >= T::zero() && transmission <= T::one()) {
            return Err(Error::config("attenuator", "transmission", "must be in [0, 1]"));
        }
        Ok(Self { transmission })
    }

    pub fn transmission(&self) -> T {
        self.transmission
    }
}

pub fn apply_attenuator<T: Real>(state: FieldState<T>, beams: Beams, a: AttenuatorSetting<T>) -> Result<FieldState<T>> {
    state.apply_loss(beams, &Profile::Uniform(a.transmission))
}

pub fn apply_detector_efficiency<T: Real>(state: FieldState<T>, qe: T) -> Result<FieldState<T>> {
    state.apply_loss(Beams::Both, &Profile::Uniform(qe))
}

/// Fiber index of a transverse position: fiber `f` is centred on `f * pitch`.
pub fn fiber_index<T: Real>(x: T, fiber_pitch: T) -> i64 {
    (x / fiber_pitch).round().to_f64_lossy() as i64
}

/// Contiguous pixel range of every fiber present on the grid, ascending.
pub fn fiber_groups<T: Real>(grid: &Grid1D<T>, fiber_pitch: T) -> Vec<(i64, std::ops::Range<usize>)> {
    let mut groups: Vec<(i64, std::ops::Range<usize>)> = Vec::new();
    for i in 0..grid.pixel_count() {
        let f = fiber_index(grid.coordinate(i), fiber_pitch);
        match groups.last_mut() {
            Some((last, range)) if *last == f => range.end = i + 1,
            _ => groups.push((f, i..i + 1)),
        }
    }
    groups
}

/// Per-fiber phases, keyed by fiber index.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseScreen<T> {
    phases: BTreeMap<i64, T>,
}

impl<T: Real> PhaseScreen<T> {
    /// Uniform [0, 2 pi) phases for the fibers in `fibers`, drawn in ascending
    /// fiber order from a ChaCha8 stream seeded with `seed`.
    pub fn random(fibers: impl IntoIterator<Item = i64>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ids: Vec<i64> = fibers.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        let phases = ids
            .into_iter()
            .map(|f| (f, lit::<T>(rng.random::<f64>() * TAU)))
            .collect();
        Self { phases }
    }

    pub fn for_grid(grid: &Grid1D<T>, p: &ConduitParams<T>) -> Self {
        Self::random(
            fiber_groups(grid, p.fiber_pitch_um).into_iter().map(|(f, _)| f),
            p.phase_seed,
        )
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (i64, T)>) -> Self {
        Self {
            phases: pairs.into_iter().collect(),
        }
    }

    pub fn get(&self, fiber: i64) -> Option<T> {
        self.phases.get(&fiber).copied()
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, T)> + '_ {
        self.phases.iter().map(|(k, v)| (*k, *v))
    }

    /// `fiber_index,theta_radians` rows, ascending fiber index.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fiber_index,theta_radians\n");
        for (f, t) in self.iter() {
            let _ = writeln!(out, "{},{}", f, t.to_f64_lossy());
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut phases = BTreeMap::new();
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some(h) if h.trim() == "fiber_index,theta_radians" => {}
            other => {
                return Err(Error::Parse(format!(
                    "phase screen header must be 'fiber_index,theta_radians', got {:?}",
                    other
                )))
            }
        }
        for (n, line) in lines.enumerate() {
            let mut parts = line.split(',');
            let (Some(f), Some(t), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Parse(format!("phase screen row {}: expected 2 fields", n + 1)));
            };
            let f: i64 = f
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("phase screen row {}: {}", n + 1, e)))?;
            let t: f64 = t
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("phase screen row {}: {}", n + 1, e)))?;
            if !t.is_finite() {
                return Err(Error::Parse(format!("phase screen row {}: non-finite phase", n + 1)));
            }
            phases.insert(f, lit::<T>(t));
        }
        Ok(Self { phases })
    }
}

/// Uniform conduit loss `fill * facet` on `beam`.
pub fn conduit_loss<T: Real>(state: FieldState<T>, beam: Beam, p: &ConduitParams<T>) -> Result<FieldState<T>> {
    p.check_grid(state.grid())?;
    state.apply_loss(beam.into(), &Profile::Uniform(p.total_transmission()))
}

/// Per-fiber phase scrambling.
pub fn conduit_phase<T: Real>(
    state: FieldState<T>,
    beam: Beam,
    p: &ConduitParams<T>,
    screen: &PhaseScreen<T>,
) -> Result<FieldState<T>> {
    p.check_grid(state.grid())?;
    let groups = fiber_groups(state.grid(), p.fiber_pitch_um);
    let mut theta = vec![T::zero(); state.pixel_count()];
    for (f, range) in groups {
        let t = screen.get(f).ok_or_else(|| {
            Error::config("conduit", "phase_screen", format!("no phase for fiber {}", f))
        })?;
        for i in range {
            theta[i] = t;
        }
    }
    state.apply_phase(beam.into(), &Profile::PerPixel(theta))
}

/// Beamsplitter of angle `crosstalk_angle_rad` between the facing boundary
/// pixels of every adjacent fiber pair, applied in ascending fiber order.
pub fn conduit_crosstalk<T: Real>(state: FieldState<T>, beam: Beam, p: &ConduitParams<T>) -> Result<FieldState<T>> {
    p.check_grid(state.grid())?;
    if p.crosstalk_angle_rad == T::zero() {
        return Ok(state);
    }
    let groups = fiber_groups(state.grid(), p.fiber_pitch_um);
    let mut state = state;
    for pair in groups.windows(2) {
        let (_, left) = &pair[0];
        let (_, right) = &pair[1];
        state = state.apply_beamsplitter(beam, left.end - 1, right.start, p.crosstalk_angle_rad)?;
    }
    Ok(state)
}

/// Loss, per-fiber random phase (from `p.phase_seed`) and cross-talk.
pub fn apply_conduit<T: Real>(state: FieldState<T>, beam: Beam, p: &ConduitParams<T>) -> Result<FieldState<T>> {
    let screen = PhaseScreen::for_grid(state.grid(), p);
    apply_conduit_with_screen(state, beam, p, &screen)
}

pub fn apply_conduit_with_screen<T: Real>(
    state: FieldState<T>,
    beam: Beam,
    p: &ConduitParams<T>,
    screen: &PhaseScreen<T>,
) -> Result<FieldState<T>> {
    let state = conduit_loss(state, beam, p)?;
    let state = conduit_phase(state, beam, p, screen)?;
    conduit_crosstalk(state, beam, p)
}

/// Gaussian convolution matrix and the vacuum noise that keeps the channel
/// physical, `N = max(0, I - M M^T)` (eigenvalue clipping).
///
/// Every row is normalized by the same interior row sum, so `M` is symmetric
/// and contractive; light blurred past the grid edge is lost.
pub fn blur_channel<T: Real>(grid: &Grid1D<T>, sigma_um: T) -> Result<(DMatrix<T>, DMatrix<T>)> {
    if !(sigma_um >= T::zero()) || !sigma_um.is_finite() {
        return Err(Error::domain("apply_imaging_blur", "kernel sigma must be >= 0"));
    }
    let n = grid.pixel_count();
    if sigma_um == T::zero() {
        return Ok((DMatrix::identity(n, n), DMatrix::zeros(n, n)));
    }
    let kernel = |d: T| (-(d * d) / (lit::<T>(2.0) * sigma_um * sigma_um)).exp();
    let reach = (sigma_um * lit(8.0) / grid.pitch()).ceil().to_f64_lossy() as i64;
    let mut z = T::zero();
    for k in -reach..=reach {
        z += kernel(lit::<T>(k as f64) * grid.pitch());
    }
    let m = DMatrix::from_fn(n, n, |i, j| {
        let d = lit::<T>(i as f64 - j as f64) * grid.pitch();
        kernel(d) / z
    });
    let d = DMatrix::identity(n, n) - &m * m.transpose();
    let eig = d.symmetric_eigen();
    let clipped = eig.eigenvalues.map(|v| v.max(T::zero()));
    let q = &eig.eigenvectors;
    let mut noise = q * DMatrix::from_diagonal(&clipped) * q.transpose();
    noise = (&noise + noise.transpose()) * lit::<T>(0.5);
    Ok((m, noise))
}

/// Convolves one beam with a Gaussian of standard deviation `sigma_um`.
pub fn apply_imaging_blur<T: Real>(state: FieldState<T>, beam: Beam, sigma_um: T) -> Result<FieldState<T>> {
    apply_imaging_blur_checked(state, beam, sigma_um).map(|(s, _)| s)
}

/// [`apply_imaging_blur`] also returning the post-blur minimum symplectic eigenvalue.
pub fn apply_imaging_blur_checked<T: Real>(state: FieldState<T>, beam: Beam, sigma_um: T) -> Result<(FieldState<T>, Option<T>)> {
    let (m, noise) = blur_channel(state.grid(), sigma_um)?;
    if sigma_um == T::zero() {
        return Ok((state, None));
    }
    let out = state.apply_passive_map(beam, &m, &noise)?;
    let nu = ensure_physical(&out, "imaging_blur")?;
    Ok((out, Some(nu)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{check_physicality, Quad};
    use crate::source::{build_twin_beams, SourceParams};
    use approx::assert_abs_diff_eq;

    fn small_grid() -> Grid1D<f64> {
        Grid1D::centered(60, 4.0).unwrap()
    }

    fn twin(grid: Grid1D<f64>) -> FieldState<f64> {
        let p = SourceParams {
            coherence_cell_um: 40.0,
            pump_waist_um: Some(200.0),
            seed_waist_um: Some(100.0),
            ..SourceParams::default()
        };
        build_twin_beams(grid, &p).unwrap()
    }

    #[test]
    fn defaults_total_about_thirty_percent() {
        let p = ConduitParams::<f64>::default();
        assert_abs_diff_eq!(p.total_transmission(), 0.30, epsilon = 1e-3);
    }

    #[test]
    fn attenuator_identity_and_range() {
        let s = twin(small_grid());
        let out = apply_attenuator(s.clone(), Beams::Conj, AttenuatorSetting::new(1.0).unwrap()).unwrap();
        assert!((out.cov() - s.cov()).amax() < 1e-14);
        assert!(AttenuatorSetting::new(1.5f64).is_err());
        assert!(AttenuatorSetting::new(-0.1f64).is_err());
    }

    #[test]
    fn detector_efficiency_on_vacuum() {
        let v = FieldState::vacuum(small_grid());
        let out = apply_detector_efficiency(v, 0.5).unwrap();
        assert!((out.cov() - DMatrix::identity(240, 240)).amax() < 1e-15);
        let s = twin(small_grid());
        let same = apply_detector_efficiency(s.clone(), 1.0).unwrap();
        assert!((same.cov() - s.cov()).amax() < 1e-15);
    }

    #[test]
    fn fibers_partition_the_grid() {
        let g = small_grid();
        let groups = fiber_groups(&g, 12.0);
        assert_eq!(groups.iter().map(|(_, r)| r.len()).sum::<usize>(), 60);
        for w in groups.windows(2) {
            assert_eq!(w[0].0 + 1, w[1].0);
            assert_eq!(w[0].1.end, w[1].1.start);
        }
    }

    #[test]
    fn conduit_rejects_coarse_grid() {
        let g = Grid1D::centered(40, 5.0).unwrap();
        let s = FieldState::vacuum(g);
        assert!(matches!(
            apply_conduit(s, Beam::Probe, &ConduitParams::default()),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn conduit_energy_and_determinism() {
        let s = twin(small_grid());
        let p0 = s.total_power(Beam::Probe);
        for eps in [0.0, 0.15, 0.3, 0.5] {
            let p = ConduitParams {
                crosstalk_angle_rad: eps,
                ..ConduitParams::default()
            };
            let a = apply_conduit(s.clone(), Beam::Probe, &p).unwrap();
            let ratio = a.total_power(Beam::Probe) / p0;
            assert!((ratio / p.total_transmission() - 1.0).abs() < 1e-3);
            let b = apply_conduit(s.clone(), Beam::Probe, &p).unwrap();
            assert_eq!(a, b);
            assert!(check_physicality(&a).unwrap().ok);
        }
    }

    #[test]
    fn screen_csv_round_trip() {
        let g = small_grid();
        let screen = PhaseScreen::<f64>::for_grid(&g, &ConduitParams::default());
        let back = PhaseScreen::<f64>::from_csv(&screen.to_csv()).unwrap();
        assert_eq!(screen, back);
        assert!(PhaseScreen::<f64>::from_csv("a,b\n1,2\n").is_err());
        assert!(PhaseScreen::<f64>::from_csv("fiber_index,theta_radians\n1\n").is_err());
    }

    #[test]
    fn imported_screen_matches_seeded_run() {
        let s = twin(small_grid());
        let p = ConduitParams::default();
        let screen = PhaseScreen::<f64>::from_csv(&PhaseScreen::for_grid(s.grid(), &p).to_csv()).unwrap();
        let a = apply_conduit(s.clone(), Beam::Probe, &p).unwrap();
        let b = apply_conduit_with_screen(s, Beam::Probe, &p, &screen).unwrap();
        assert!((a.cov() - b.cov()).amax() < 1e-15);
    }

    #[test]
    fn blur_zero_is_identity_and_vacuum_fixed() {
        let s = twin(small_grid());
        let same = apply_imaging_blur(s.clone(), Beam::Probe, 0.0).unwrap();
        assert_eq!(same, s);
        let v = FieldState::vacuum(small_grid());
        let out = apply_imaging_blur(v, Beam::Probe, 12.0).unwrap();
        assert!((out.cov() - DMatrix::identity(240, 240)).amax() < 1e-12);
        assert!(apply_imaging_blur(s, Beam::Probe, -1.0).is_err());
    }

    #[test]
    fn blur_spreads_correlations() {
        let s = twin(small_grid());
        let out = apply_imaging_blur(s.clone(), Beam::Probe, 8.0).unwrap();
        // probe pixel 9 and conj pixel 10 sit in different cells before blurring
        let before = s.cov()[(s.index(Beam::Probe, Quad::X, 9), s.index(Beam::Conj, Quad::X, 10))];
        let after = out.cov()[(out.index(Beam::Probe, Quad::X, 9), out.index(Beam::Conj, Quad::X, 10))];
        assert_eq!(before, 0.0);
        assert!(after > 0.0);
    }
}
