//! Gaussian state of the probe/conjugate pair on a 1D lattice.
//!
//! Quadratures are normalized so that vacuum has unit variance. With the
//! complex amplitude `a = (X + iP) / 2`, a mean field `alpha` corresponds to
//! quadrature means `<X> = 2 Re alpha`, `<P> = 2 Im alpha`, and `|alpha|^2`
//! is a photon flux per analysis bandwidth.
//!
//! Covariance ordering is `[X_probe, P_probe, X_conj, P_conj]`, each block
//! `pixel_count` long.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use super::grid::Grid1D;
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Beam {
    Probe,
    Conj,
}

impl Beam {
    pub fn other(self) -> Self {
        match self {
            Beam::Probe => Beam::Conj,
            Beam::Conj => Beam::Probe,
        }
    }
}

/// Beam selector for channels that may act on one or both beams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Beams {
    Probe,
    Conj,
    Both,
}

impl Beams {
    pub fn iter(self) -> impl Iterator<Item = Beam> {
        let (p, c) = match self {
            Beams::Probe => (true, false),
            Beams::Conj => (false, true),
            Beams::Both => (true, true),
        };
        p.then_some(Beam::Probe)
            .into_iter()
            .chain(c.then_some(Beam::Conj))
    }
}

impl From<Beam> for Beams {
    fn from(b: Beam) -> Self {
        match b {
            Beam::Probe => Beams::Probe,
            Beam::Conj => Beams::Conj,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quad {
    X,
    P,
}

/// Per-pixel parameter: one value for every pixel, or an explicit list.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile<T> {
    Uniform(T),
    PerPixel(Vec<T>),
}

impl<T: Copy> Profile<T> {
    fn resolve(&self, n: usize, op: &'static str) -> Result<Vec<T>> {
        match self {
            Profile::Uniform(v) => Ok(vec![*v; n]),
            Profile::PerPixel(v) if v.len() == n => Ok(v.clone()),
            Profile::PerPixel(v) => Err(Error::ContractViolation {
                op,
                msg: format!("profile has {} entries for {} pixels", v.len(), n),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState<T: Real> {
    grid: Grid1D<T>,
    mean_probe: Vec<Complex<T>>,
    mean_conj: Vec<Complex<T>>,
    cov: DMatrix<T>,
}

impl<T: Real> FieldState<T> {
    /// Vacuum on both beams: zero means, identity covariance.
    pub fn vacuum(grid: Grid1D<T>) -> Self {
        let n = grid.pixel_count();
        Self {
            grid,
            mean_probe: vec![Complex::new(T::zero(), T::zero()); n],
            mean_conj: vec![Complex::new(T::zero(), T::zero()); n],
            cov: DMatrix::identity(4 * n, 4 * n),
        }
    }

    /// Assembles a state from parts. Only dimensions are checked here; use
    /// [`check_physicality`](super::check_physicality) for the rest.
    pub fn from_parts(
        grid: Grid1D<T>,
        mean_probe: Vec<Complex<T>>,
        mean_conj: Vec<Complex<T>>,
        cov: DMatrix<T>,
    ) -> Result<Self> {
        let n = grid.pixel_count();
        if mean_probe.len() != n || mean_conj.len() != n {
            return Err(Error::ContractViolation {
                op: "FieldState::from_parts",
                msg: "mean length does not match grid".into(),
            });
        }
        if cov.nrows() != 4 * n || cov.ncols() != 4 * n {
            return Err(Error::ContractViolation {
                op: "FieldState::from_parts",
                msg: format!("covariance must be {0}x{0}", 4 * n),
            });
        }
        Ok(Self {
            grid,
            mean_probe,
            mean_conj,
            cov,
        })
    }

    pub fn grid(&self) -> &Grid1D<T> {
        &self.grid
    }

    pub fn pixel_count(&self) -> usize {
        self.grid.pixel_count()
    }

    pub fn cov(&self) -> &DMatrix<T> {
        &self.cov
    }

    /// Mutable covariance access; callers own physicality afterwards.
    pub fn cov_mut(&mut self) -> &mut DMatrix<T> {
        &mut self.cov
    }

    pub fn mean(&self, beam: Beam) -> &[Complex<T>] {
        match beam {
            Beam::Probe => &self.mean_probe,
            Beam::Conj => &self.mean_conj,
        }
    }

    pub fn mean_mut(&mut self, beam: Beam) -> &mut [Complex<T>] {
        match beam {
            Beam::Probe => &mut self.mean_probe,
            Beam::Conj => &mut self.mean_conj,
        }
    }

    /// Row/column of a quadrature in the covariance matrix.
    #[inline]
    pub fn index(&self, beam: Beam, quad: Quad, pixel: usize) -> usize {
        quad_index(self.pixel_count(), beam, quad, pixel)
    }

    /// Mean photon flux `|alpha|^2` per pixel.
    pub fn intensity(&self, beam: Beam) -> Vec<T> {
        self.mean(beam).iter().map(|a| norm_sqr(*a)).collect()
    }

    pub fn total_power(&self, beam: Beam) -> T {
        self.mean(beam)
            .iter()
            .fold(T::zero(), |acc, a| acc + norm_sqr(*a))
    }

    /// Quadrature mean vector in covariance ordering.
    pub fn quadrature_means(&self) -> DVector<T> {
        let n = self.pixel_count();
        let two = lit::<T>(2.0);
        let mut d = DVector::zeros(4 * n);
        for beam in [Beam::Probe, Beam::Conj] {
            for (i, a) in self.mean(beam).iter().enumerate() {
                d[quad_index(n, beam, Quad::X, i)] = two * a.re;
                d[quad_index(n, beam, Quad::P, i)] = two * a.im;
            }
        }
        d
    }

    fn set_quadrature_means(&mut self, d: &DVector<T>) {
        let n = self.pixel_count();
        let half = lit::<T>(0.5);
        for beam in [Beam::Probe, Beam::Conj] {
            for i in 0..n {
                let re = d[quad_index(n, beam, Quad::X, i)] * half;
                let im = d[quad_index(n, beam, Quad::P, i)] * half;
                self.mean_mut(beam)[i] = Complex::new(re, im);
            }
        }
    }

    /// Pure-loss channel: `m = diag(sqrt(eta))`, `added_noise = diag(1 - eta)`.
    pub fn apply_loss(mut self, beams: Beams, transmission: &Profile<T>) -> Result<Self> {
        let n = self.pixel_count();
        let eta = transmission.resolve(n, "apply_loss")?;
        if let Some((i, e)) = eta
            .iter()
            .enumerate()
            .find(|(_, e)| !(**e >= T::zero() && **e <= T::one()))
        {
            return Err(Error::domain(
                "apply_loss",
                format!("transmission {} at pixel {} outside [0, 1]", e.to_f64_lossy(), i),
            ));
        }
        let mut scale = vec![T::one(); 4 * n];
        for beam in beams.iter() {
            for (i, e) in eta.iter().enumerate() {
                let s = e.sqrt();
                scale[quad_index(n, beam, Quad::X, i)] = s;
                scale[quad_index(n, beam, Quad::P, i)] = s;
                let m = &mut self.mean_mut(beam)[i];
                *m = Complex::new(m.re * s, m.im * s);
            }
        }
        let dim = 4 * n;
        for c in 0..dim {
            let sc = scale[c];
            let mut col = self.cov.column_mut(c);
            for r in 0..dim {
                col[r] *= scale[r] * sc;
            }
        }
        for (r, s) in scale.iter().enumerate() {
            self.cov[(r, r)] += T::one() - *s * *s;
        }
        Ok(self)
    }

    /// Rotates the (X, P) pair of each pixel by `theta`: `alpha -> e^{i theta} alpha`.
    pub fn apply_phase(mut self, beams: Beams, theta: &Profile<T>) -> Result<Self> {
        let n = self.pixel_count();
        let theta = theta.resolve(n, "apply_phase")?;
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::domain("apply_phase", "non-finite phase"));
        }
        for beam in beams.iter() {
            for (i, &t) in theta.iter().enumerate() {
                if t == T::zero() {
                    continue;
                }
                let (s, c) = t.sin_cos();
                let xi = quad_index(n, beam, Quad::X, i);
                let pi = quad_index(n, beam, Quad::P, i);
                // X' = c X - s P, P' = s X + c P
                rotate_pair(&mut self.cov, xi, pi, c, -s, s, c);
                let m = self.mean_mut(beam)[i];
                self.mean_mut(beam)[i] = Complex::new(c * m.re - s * m.im, s * m.re + c * m.im);
            }
        }
        self.symmetrize();
        Ok(self)
    }

    /// Real beamsplitter between two pixels of one beam:
    /// `a_i' = cos a_i - sin a_j`, `a_j' = sin a_i + cos a_j`.
    pub fn apply_beamsplitter(mut self, beam: Beam, i: usize, j: usize, angle: T) -> Result<Self> {
        let n = self.pixel_count();
        for idx in [i, j] {
            if idx >= n {
                return Err(Error::IndexOutOfRange {
                    op: "apply_beamsplitter",
                    index: idx,
                    len: n,
                });
            }
        }
        if i == j {
            return Err(Error::ContractViolation {
                op: "apply_beamsplitter",
                msg: "pixels must differ".into(),
            });
        }
        if !angle.is_finite() {
            return Err(Error::domain("apply_beamsplitter", "non-finite angle"));
        }
        let (s, c) = angle.sin_cos();
        for quad in [Quad::X, Quad::P] {
            let a = quad_index(n, beam, quad, i);
            let b = quad_index(n, beam, quad, j);
            rotate_pair(&mut self.cov, a, b, c, -s, s, c);
        }
        let mi = self.mean(beam)[i];
        let mj = self.mean(beam)[j];
        self.mean_mut(beam)[i] = Complex::new(c * mi.re - s * mj.re, c * mi.im - s * mj.im);
        self.mean_mut(beam)[j] = Complex::new(s * mi.re + c * mj.re, s * mi.im + c * mj.im);
        self.symmetrize();
        Ok(self)
    }

    /// Applies the same real `pixel_count x pixel_count` map to the X and P
    /// blocks of one beam, adding `added_noise` to both blocks.
    pub fn apply_passive_map(mut self, beam: Beam, m: &DMatrix<T>, added_noise: &DMatrix<T>) -> Result<Self> {
        let n = self.pixel_count();
        if m.shape() != (n, n) || added_noise.shape() != (n, n) {
            return Err(Error::ContractViolation {
                op: "apply_passive_map",
                msg: format!("maps must be {0}x{0}", n),
            });
        }
        let dim = 4 * n;
        for quad in [Quad::X, Quad::P] {
            let off = quad_index(n, beam, quad, 0);
            // rows
            let rows = self.cov.rows(off, n).into_owned();
            let new_rows = m * rows;
            self.cov.rows_mut(off, n).copy_from(&new_rows);
            // columns
            let cols = self.cov.columns(off, n).into_owned();
            let new_cols = cols * m.transpose();
            self.cov.columns_mut(off, n).copy_from(&new_cols);
            let mut block = self.cov.view_mut((off, off), (n, n));
            block += added_noise;
        }
        debug_assert_eq!(self.cov.nrows(), dim);
        let means: Vec<Complex<T>> = self.mean(beam).to_vec();
        let re = DVector::from_iterator(n, means.iter().map(|a| a.re));
        let im = DVector::from_iterator(n, means.iter().map(|a| a.im));
        let (re, im) = (m * re, m * im);
        for (i, out) in self.mean_mut(beam).iter_mut().enumerate() {
            *out = Complex::new(re[i], im[i]);
        }
        self.symmetrize();
        Ok(self)
    }

    /// General Gaussian channel on the full quadrature vector.
    pub fn apply_channel(mut self, channel: &super::ChannelMap<T>) -> Result<Self> {
        let dim = 4 * self.pixel_count();
        if channel.dim() != dim {
            return Err(Error::ContractViolation {
                op: "apply_channel",
                msg: format!("channel acts on {} quadratures, state has {}", channel.dim(), dim),
            });
        }
        let m = channel.map();
        self.cov = m * &self.cov * m.transpose() + channel.added_noise();
        let d = m * self.quadrature_means();
        self.set_quadrature_means(&d);
        self.symmetrize();
        Ok(self)
    }

    fn symmetrize(&mut self) {
        let dim = self.cov.nrows();
        let half = lit::<T>(0.5);
        for c in 0..dim {
            for r in (c + 1)..dim {
                let v = (self.cov[(r, c)] + self.cov[(c, r)]) * half;
                self.cov[(r, c)] = v;
                self.cov[(c, r)] = v;
            }
        }
    }
}

#[inline]
pub(crate) fn quad_index(n: usize, beam: Beam, quad: Quad, pixel: usize) -> usize {
    let block = match (beam, quad) {
        (Beam::Probe, Quad::X) => 0,
        (Beam::Probe, Quad::P) => 1,
        (Beam::Conj, Quad::X) => 2,
        (Beam::Conj, Quad::P) => 3,
    };
    block * n + pixel
}

#[inline]
pub(crate) fn norm_sqr<T: Real>(a: Complex<T>) -> T {
    a.re * a.re + a.im * a.im
}

/// Congruence by the 2x2 map `[[a, b], [c, d]]` acting on coordinates `i`, `j`.
fn rotate_pair<T: Real>(cov: &mut DMatrix<T>, i: usize, j: usize, a: T, b: T, c: T, d: T) {
    let dim = cov.nrows();
    for k in 0..dim {
        let (vi, vj) = (cov[(i, k)], cov[(j, k)]);
        cov[(i, k)] = a * vi + b * vj;
        cov[(j, k)] = c * vi + d * vj;
    }
    for k in 0..dim {
        let (vi, vj) = (cov[(k, i)], cov[(k, j)]);
        cov[(k, i)] = a * vi + b * vj;
        cov[(k, j)] = c * vi + d * vj;
    }
}
