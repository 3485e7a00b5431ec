//! 2D near-field image of the conduit output face and its far-field speckle.
//!
//! Fibers sit on an equilateral triangular lattice. Each fiber transmits the
//! input intensity falling on its core, reshaped by a random multimode texture
//! that conserves the fiber's power, and carries one phase per fiber.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Grid2D;
use crate::scalar::{lit, Real};
use crate::transport::ConduitParams;

/// Sub-samples per pixel side when computing core coverage.
const COVERAGE_SUBSAMPLES: usize = 4;
/// Plane waves summed for a fiber's multimode texture.
const TEXTURE_MODES: usize = 5;
/// Pixels counted in speckle statistics: mean intensity at least this
/// fraction of its peak.
pub const SPECKLE_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    /// Independent uniform phase per fiber from the conduit phase seed.
    Random,
    /// Every fiber in phase.
    Zero,
}

pub type FiberId = (i64, i64);

/// Equilateral triangular lattice of fiber centers with one center at the origin.
#[derive(Debug, Clone, Copy)]
pub struct FiberLattice<T> {
    pitch: T,
}

impl<T: Real> FiberLattice<T> {
    pub fn new(pitch: T) -> Self {
        Self { pitch }
    }

    pub fn center(&self, id: FiberId) -> (T, T) {
        let (i, j) = (lit::<T>(id.0 as f64), lit::<T>(id.1 as f64));
        let h = lit::<T>(3f64.sqrt() / 2.0);
        ((i + j / lit(2.0)) * self.pitch, j * h * self.pitch)
    }

    /// Nearest fiber and squared distance to its center. The nearest center is
    /// always a corner of the lattice rhombus containing the point.
    pub fn nearest(&self, x: T, y: T) -> (FiberId, T) {
        let h = lit::<T>(3f64.sqrt() / 2.0);
        let v = y / (h * self.pitch);
        let u = x / self.pitch - v / lit(2.0);
        let (i0, j0) = (u.floor().to_f64_lossy() as i64, v.floor().to_f64_lossy() as i64);
        let mut best = ((i0, j0), T::max_value().unwrap());
        for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            let id = (i0 + di, j0 + dj);
            let (cx, cy) = self.center(id);
            let d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            if d2 < best.1 {
                best = (id, d2);
            }
        }
        best
    }
}

fn fiber_stream(id: FiberId) -> u64 {
    ((id.0 as u32 as u64) << 32) | (id.1 as u32 as u64)
}

/// Generator for one fiber: stream `(i as u32) << 32 | (j as u32)` of a
/// ChaCha8 generator keyed by `seed`.
fn fiber_rng(seed: u64, id: FiberId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fiber_stream(id));
    rng
}

// Keeps texture draws independent of phase draws when both seeds coincide.
const TEXTURE_KEY: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq)]
pub struct NearField<T> {
    pub grid: Grid2D<T>,
    /// Complex output field, row-major.
    pub field: Vec<Complex<T>>,
    /// Fiber owning each lit pixel.
    pub fiber: Vec<Option<FiberId>>,
}

impl<T: Real> NearField<T> {
    pub fn intensity(&self) -> Vec<T> {
        self.field.iter().map(|e| e.norm_sqr()).collect()
    }

    pub fn total_power(&self) -> f64 {
        self.field.iter().map(|e| e.norm_sqr().to_f64_lossy()).sum()
    }
}

/// Gaussian intensity `exp(-2 r² / waist²)` sampled on the grid.
pub fn gaussian_intensity<T: Real>(grid: &Grid2D<T>, waist_um: T) -> Vec<T> {
    let mut out = vec![T::zero(); grid.len()];
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let (x, y) = grid.coordinate(ix, iy);
            out[grid.index(ix, iy)] = (lit::<T>(-2.0) * (x * x + y * y) / (waist_um * waist_um)).exp();
        }
    }
    out
}

struct Texture<T> {
    center: (T, T),
    k: [(T, T); TEXTURE_MODES],
    c: [Complex<T>; TEXTURE_MODES],
}

impl<T: Real> Texture<T> {
    fn new(seed: u64, id: FiberId, center: (T, T), core_radius: T) -> Self {
        let mut rng = fiber_rng(seed ^ TEXTURE_KEY, id);
        // transverse wavenumbers of the lowest few guided modes
        let kmax = lit::<T>(3.8) / core_radius;
        let mut k = [(T::zero(), T::zero()); TEXTURE_MODES];
        let mut c = [Complex::new(T::zero(), T::zero()); TEXTURE_MODES];
        for m in 0..TEXTURE_MODES {
            let phi = lit::<T>(rng.random_range(0.0..std::f64::consts::TAU));
            let mag = kmax * lit::<T>(rng.random::<f64>());
            k[m] = (mag * phi.cos(), mag * phi.sin());
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            c[m] = Complex::new(lit(re), lit(im));
        }
        Self { center, k, c }
    }

    fn intensity(&self, x: T, y: T) -> T {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let mut s = Complex::new(T::zero(), T::zero());
        for m in 0..TEXTURE_MODES {
            let ph = self.k[m].0 * dx + self.k[m].1 * dy;
            s += self.c[m] * Complex::new(ph.cos(), ph.sin());
        }
        s.norm_sqr()
    }
}

/// Conduit output face for input intensity `input` (row-major on `grid`).
///
/// Transmitted power equals the input power on the fiber cores; with the
/// default core size that is `fill_transmission` of a uniform input.
pub fn render_nearfield<T: Real>(
    grid: &Grid2D<T>,
    input: &[T],
    p: &ConduitParams<T>,
    rng_seed: u64,
    mode: PhaseMode,
) -> Result<NearField<T>> {
    p.validate()?;
    if grid.pitch > p.fiber_pitch_um / lit(4.0) * lit(1.0 + 1e-9) {
        return Err(Error::config(
            "mc",
            "grid2d.pitch",
            format!(
                "{} µm exceeds a quarter of the fiber pitch {} µm",
                grid.pitch.to_f64_lossy(),
                p.fiber_pitch_um.to_f64_lossy()
            ),
        ));
    }
    if input.len() != grid.len() {
        return Err(Error::ContractViolation {
            op: "render_nearfield",
            msg: format!("input has {} pixels, grid has {}", input.len(), grid.len()),
        });
    }
    if input.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
        return Err(Error::domain("render_nearfield", "input intensity must be finite and non-negative"));
    }
    let lattice = FiberLattice::new(p.fiber_pitch_um);
    let r_core = p.core_fraction() * p.fiber_pitch_um / lit(2.0);
    let r2 = r_core * r_core;

    // pixel owner and core coverage
    let n = grid.len();
    let mut fiber = vec![None; n];
    let mut weight = vec![T::zero(); n];
    let sub = COVERAGE_SUBSAMPLES;
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let (x, y) = grid.coordinate(ix, iy);
            let (id, _) = lattice.nearest(x, y);
            let (cx, cy) = lattice.center(id);
            let mut hits = 0usize;
            for sy in 0..sub {
                for sx in 0..sub {
                    let ox = lit::<T>((sx as f64 + 0.5) / sub as f64 - 0.5) * grid.pitch;
                    let oy = lit::<T>((sy as f64 + 0.5) / sub as f64 - 0.5) * grid.pitch;
                    let (dx, dy) = (x + ox - cx, y + oy - cy);
                    if dx * dx + dy * dy < r2 {
                        hits += 1;
                    }
                }
            }
            if hits > 0 {
                let k = grid.index(ix, iy);
                fiber[k] = Some(id);
                weight[k] = input[k] * lit::<T>(hits as f64 / (sub * sub) as f64);
            }
        }
    }

    // group pixels per fiber
    let mut members: std::collections::BTreeMap<FiberId, Vec<usize>> = Default::default();
    for (k, f) in fiber.iter().enumerate() {
        if let Some(id) = f {
            members.entry(*id).or_default().push(k);
        }
    }

    let mut field = vec![Complex::new(T::zero(), T::zero()); n];
    for (id, pix) in &members {
        let power = pix.iter().fold(T::zero(), |a, k| a + weight[*k]);
        if !(power > T::zero()) {
            continue;
        }
        let tex = Texture::new(rng_seed, *id, lattice.center(*id), r_core);
        let shaped: Vec<T> = pix
            .iter()
            .map(|k| {
                let (ix, iy) = (k % grid.nx, k / grid.nx);
                let (x, y) = grid.coordinate(ix, iy);
                weight[*k] * tex.intensity(x, y)
            })
            .collect();
        let shaped_power = shaped.iter().fold(T::zero(), |a, v| a + *v);
        let scale = if shaped_power > T::zero() {
            power / shaped_power
        } else {
            T::zero()
        };
        let theta = match mode {
            PhaseMode::Random => {
                let mut rng = fiber_rng(p.phase_seed, *id);
                lit::<T>(rng.random_range(0.0..std::f64::consts::TAU))
            }
            PhaseMode::Zero => T::zero(),
        };
        let phase = Complex::new(theta.cos(), theta.sin());
        for (k, s) in pix.iter().zip(&shaped) {
            field[*k] = phase * (*s * scale).sqrt();
        }
    }
    Ok(NearField {
        grid: *grid,
        field,
        fiber,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeckleStats<T> {
    /// std/mean of the intensity divided by its phase-averaged mean, over
    /// pixels where that mean is at least 1% of its peak.
    pub contrast: T,
    /// std/mean of the bare intensity over pixels at least 1% of peak.
    pub raw_contrast: T,
    pub illuminated_pixels: usize,
    pub nearfield_power: f64,
    pub farfield_power: f64,
    /// Expected far-field intensity over independent uniform fiber phases,
    /// in the same (centered) layout as the image.
    #[serde(skip)]
    pub mean_intensity: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FarField<T> {
    pub grid: Grid2D<T>,
    /// Intensity with zero spatial frequency at pixel `(nx/2, ny/2)`.
    pub intensity: Vec<T>,
    pub stats: SpeckleStats<T>,
}

/// Unitary 2D DFT, in place, row-major `nx` by `ny`.
pub fn fft2_unitary<T: Real>(data: &mut [Complex<T>], nx: usize, ny: usize) {
    let mut planner = FftPlanner::<T>::new();
    let row = planner.plan_fft_forward(nx);
    for r in data.chunks_exact_mut(nx) {
        row.process(r);
    }
    let col = planner.plan_fft_forward(ny);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); ny];
    for ix in 0..nx {
        for iy in 0..ny {
            buf[iy] = data[iy * nx + ix];
        }
        col.process(&mut buf);
        for iy in 0..ny {
            data[iy * nx + ix] = buf[iy];
        }
    }
    let s = T::one() / lit::<T>((nx * ny) as f64).sqrt();
    for v in data.iter_mut() {
        *v *= s;
    }
}

fn fftshift<T: Copy>(v: &[T], nx: usize, ny: usize) -> Vec<T> {
    let mut out = v.to_vec();
    for iy in 0..ny {
        for ix in 0..nx {
            out[((iy + ny / 2) % ny) * nx + (ix + nx / 2) % nx] = v[iy * nx + ix];
        }
    }
    out
}

/// Expected far-field intensity over independent fiber phases: the transform
/// of the summed per-fiber field autocorrelations.
fn phase_averaged_intensity<T: Real>(near: &NearField<T>) -> Vec<T> {
    let g = &near.grid;
    let (nx, ny) = (g.nx, g.ny);
    // half-width of a fiber footprint in pixels
    let mut reach = 0usize;
    let mut extents: std::collections::BTreeMap<FiberId, (usize, usize, usize, usize)> = Default::default();
    for (k, f) in near.fiber.iter().enumerate() {
        if let Some(id) = f {
            let (ix, iy) = (k % nx, k / nx);
            let e = extents.entry(*id).or_insert((ix, ix, iy, iy));
            e.0 = e.0.min(ix);
            e.1 = e.1.max(ix);
            e.2 = e.2.min(iy);
            e.3 = e.3.max(iy);
        }
    }
    for e in extents.values() {
        reach = reach.max(e.1 - e.0).max(e.3 - e.2);
    }
    let r = reach as isize;
    let zero = Complex::new(T::zero(), T::zero());
    let mut acf = vec![zero; nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            let k = iy * nx + ix;
            let Some(id) = near.fiber[k] else { continue };
            let e0 = near.field[k].conj();
            if e0 == zero {
                continue;
            }
            for dy in -r..=r {
                let y2 = iy as isize + dy;
                if y2 < 0 || y2 >= ny as isize {
                    continue;
                }
                for dx in -r..=r {
                    let x2 = ix as isize + dx;
                    if x2 < 0 || x2 >= nx as isize {
                        continue;
                    }
                    let k2 = y2 as usize * nx + x2 as usize;
                    if near.fiber[k2] != Some(id) {
                        continue;
                    }
                    let slot = dy.rem_euclid(ny as isize) as usize * nx + dx.rem_euclid(nx as isize) as usize;
                    acf[slot] += e0 * near.field[k2];
                }
            }
        }
    }
    // |F(k)|² = (1/N) Σ_Δ R(Δ) e^{-ikΔ}; the unitary transform supplies 1/√N
    fft2_unitary(&mut acf, nx, ny);
    let s = T::one() / lit::<T>((nx * ny) as f64).sqrt();
    acf.iter().map(|v| (v.re * s).max(T::zero())).collect()
}

fn contrast_over<T: Real>(values: impl Iterator<Item = T>) -> T {
    let (mut n, mut s1, mut s2) = (0.0f64, 0.0f64, 0.0f64);
    for v in values {
        let v = v.to_f64_lossy();
        n += 1.0;
        s1 += v;
        s2 += v * v;
    }
    if n == 0.0 || s1 == 0.0 {
        return T::zero();
    }
    let mean = s1 / n;
    let var = (s2 / n - mean * mean).max(0.0);
    lit(var.sqrt() / mean)
}

/// Far-field intensity and speckle statistics of a near-field image.
pub fn render_farfield<T: Real>(near: &NearField<T>) -> FarField<T> {
    let g = near.grid;
    let mut data = near.field.clone();
    fft2_unitary(&mut data, g.nx, g.ny);
    let far: Vec<T> = data.iter().map(|v| v.norm_sqr()).collect();
    let farfield_power = far.iter().map(|v| v.to_f64_lossy()).sum();
    let env = phase_averaged_intensity(near);

    let env_peak = env.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let env_cut = env_peak * lit(SPECKLE_THRESHOLD);
    let mask: Vec<bool> = env.iter().map(|e| env_peak > T::zero() && *e >= env_cut).collect();
    let illuminated_pixels = mask.iter().filter(|m| **m).count();
    let contrast = contrast_over(
        far.iter()
            .zip(&env)
            .zip(&mask)
            .filter(|(_, m)| **m)
            .map(|((i, e), _)| *i / *e),
    );
    let peak = far.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let cut = peak * lit(SPECKLE_THRESHOLD);
    let raw_contrast = contrast_over(far.iter().copied().filter(|i| peak > T::zero() && *i >= cut));

    FarField {
        grid: g,
        intensity: fftshift(&far, g.nx, g.ny),
        stats: SpeckleStats {
            contrast,
            raw_contrast,
            illuminated_pixels,
            nearfield_power: near.total_power(),
            farfield_power,
            mean_intensity: fftshift(&env, g.nx, g.ny),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n: usize) -> (Grid2D<f64>, ConduitParams<f64>) {
        (Grid2D::new(n, n, 1.5).unwrap(), ConduitParams::default())
    }

    #[test]
    fn nearest_center_matches_brute_force() {
        let lat = FiberLattice::new(12.0);
        for k in 0..500 {
            let x = -40.0 + (k as f64 * 7.31) % 80.0;
            let y = -40.0 + (k as f64 * 3.17) % 80.0;
            let (_, d2) = lat.nearest(x, y);
            let mut best = f64::INFINITY;
            for i in -10..=10 {
                for j in -10..=10 {
                    let (cx, cy) = lat.center((i, j));
                    best = best.min((x - cx).powi(2) + (y - cy).powi(2));
                }
            }
            assert!((d2 - best).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_input_transmits_fill_fraction() {
        let (g, p) = setup(128);
        let input = vec![1.0; g.len()];
        let nf = render_nearfield(&g, &input, &p, 1, PhaseMode::Random).unwrap();
        let frac = nf.total_power() / g.len() as f64;
        assert!((frac - p.fill_transmission).abs() < 0.02, "{frac}");
    }

    #[test]
    fn zero_input_gives_zero_image() {
        let (g, p) = setup(32);
        let nf = render_nearfield(&g, &vec![0.0; g.len()], &p, 1, PhaseMode::Random).unwrap();
        assert!(nf.intensity().iter().all(|v| *v == 0.0));
        let ff = render_farfield(&nf);
        assert!(ff.intensity.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn coarse_grid_rejected() {
        let g = Grid2D::new(16, 16, 4.0).unwrap();
        let p = ConduitParams::<f64>::default();
        assert!(render_nearfield(&g, &vec![1.0; 256], &p, 1, PhaseMode::Zero).is_err());
    }

    #[test]
    fn parseval() {
        let (g, p) = setup(64);
        let input = gaussian_intensity(&g, 30.0);
        let nf = render_nearfield(&g, &input, &p, 2, PhaseMode::Random).unwrap();
        let ff = render_farfield(&nf);
        let rel = (ff.stats.farfield_power - ff.stats.nearfield_power).abs() / ff.stats.nearfield_power;
        assert!(rel < 1e-10);
    }

    #[test]
    fn phase_average_is_exact_for_one_fiber() {
        let (g, p) = setup(32);
        // light only the fiber at the origin
        let lat = FiberLattice::new(p.fiber_pitch_um);
        let mut input = vec![0.0; g.len()];
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                let (x, y) = g.coordinate(ix, iy);
                if lat.nearest(x, y).0 == (0, 0) {
                    input[g.index(ix, iy)] = 1.0;
                }
            }
        }
        let nf = render_nearfield(&g, &input, &p, 3, PhaseMode::Random).unwrap();
        let ff = render_farfield(&nf);
        for (i, e) in ff.intensity.iter().zip(&ff.stats.mean_intensity) {
            assert!((i - e).abs() < 1e-10 * (1.0 + e));
        }
        assert!(ff.stats.contrast < 1e-6);
    }

    #[test]
    fn deterministic() {
        let (g, p) = setup(48);
        let input = gaussian_intensity(&g, 25.0);
        let a = render_nearfield(&g, &input, &p, 4, PhaseMode::Random).unwrap();
        let b = render_nearfield(&g, &input, &p, 4, PhaseMode::Random).unwrap();
        assert_eq!(a, b);
        let c = render_nearfield(&g, &input, &p, 5, PhaseMode::Random).unwrap();
        assert_ne!(a, c);
    }
}
