//! Symplectic spectra and the physicality (uncertainty-principle) check.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::state::{quad_index, Beam, FieldState, Quad};
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Physicality<T> {
    pub ok: bool,
    pub nu_min: T,
}

/// Symplectic eigenvalues of a covariance matrix in `(x_1..x_m, p_1..p_m)`
/// ordering, ascending. Returns an error if `cov` is not positive definite.
pub fn symplectic_eigenvalues<T: Real>(cov: &DMatrix<T>) -> Result<Vec<T>> {
    let dim = cov.nrows();
    if !dim.is_multiple_of(2) || cov.ncols() != dim {
        return Err(Error::ContractViolation {
            op: "symplectic_eigenvalues",
            msg: "covariance must be square with even dimension".into(),
        });
    }
    let m = dim / 2;
    if m == 1 {
        let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
        if !(cov[(0, 0)] > T::zero()) || !(det > T::zero()) {
            return Err(Error::Factorization("covariance not positive definite".into()));
        }
        return Ok(vec![det.sqrt()]);
    }
    let l = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Factorization("covariance not positive definite".into()))?
        .unpack();
    // A = L^T Omega L is antisymmetric with eigenvalues +-i nu, so A^T A has nu^2 twice.
    let mut omega_l = DMatrix::zeros(dim, dim);
    for r in 0..m {
        omega_l.row_mut(r).copy_from(&l.row(m + r));
        omega_l.row_mut(m + r).copy_from(&(-l.row(r)));
    }
    let a = l.transpose() * omega_l;
    let s = a.transpose() * &a;
    let mut eig: Vec<T> = s.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    Ok(eig
        .chunks(2)
        .map(|pair| {
            let v = (pair[0] + pair[1]) / lit(2.0);
            v.max(T::zero()).sqrt()
        })
        .collect())
}

/// Minimum symplectic eigenvalue of the state, computed per connected block
/// of modes (blocks with no covariance between them are independent).
pub fn check_physicality<T: Real>(state: &FieldState<T>) -> Result<Physicality<T>> {
    let cov = state.cov();
    check_symmetric(cov)?;
    let n = state.pixel_count();
    let modes = 2 * n;
    let mode_quads = |k: usize| -> (usize, usize) {
        let (beam, px) = if k < n { (Beam::Probe, k) } else { (Beam::Conj, k - n) };
        (quad_index(n, beam, Quad::X, px), quad_index(n, beam, Quad::P, px))
    };

    let mut parent: Vec<usize> = (0..modes).collect();
    fn find(parent: &mut [usize], mut k: usize) -> usize {
        while parent[k] != k {
            parent[k] = parent[parent[k]];
            k = parent[k];
        }
        k
    }
    for a in 0..modes {
        let (ax, ap) = mode_quads(a);
        for b in (a + 1)..modes {
            let (bx, bp) = mode_quads(b);
            let coupled = cov[(ax, bx)] != T::zero()
                || cov[(ax, bp)] != T::zero()
                || cov[(ap, bx)] != T::zero()
                || cov[(ap, bp)] != T::zero();
            if coupled {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut blocks: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for k in 0..modes {
        let root = find(&mut parent, k);
        blocks.entry(root).or_default().push(k);
    }
    let blocks: Vec<Vec<usize>> = blocks.into_values().collect();

    let nu_min = blocks
        .par_iter()
        .map(|members| {
            let m = members.len();
            let idx: Vec<usize> = members
                .iter()
                .map(|&k| mode_quads(k).0)
                .chain(members.iter().map(|&k| mode_quads(k).1))
                .collect();
            let sub = DMatrix::from_fn(2 * m, 2 * m, |r, c| cov[(idx[r], idx[c])]);
            match symplectic_eigenvalues(&sub) {
                Ok(nus) => nus[0],
                // Not positive definite: report the most negative direction.
                Err(_) => sub
                    .symmetric_eigenvalues()
                    .iter()
                    .copied()
                    .fold(T::max_value().unwrap(), |a, b| a.min(b))
                    .min(T::zero()),
            }
        })
        .reduce(|| T::max_value().unwrap(), |a, b| a.min(b));

    Ok(Physicality {
        ok: nu_min >= T::one() - T::physicality_tol(),
        nu_min,
    })
}

/// Like [`check_physicality`] but turns a failure into [`Error::Unphysical`].
pub fn ensure_physical<T: Real>(state: &FieldState<T>, stage: &str) -> Result<T> {
    let p = check_physicality(state)?;
    if p.ok {
        Ok(p.nu_min)
    } else {
        Err(Error::Unphysical {
            stage: stage.to_string(),
            nu_min: p.nu_min.to_f64_lossy(),
        })
    }
}

pub(crate) fn check_symmetric<T: Real>(cov: &DMatrix<T>) -> Result<()> {
    let scale = cov.amax().max(T::one());
    let tol = T::symmetry_tol() * scale;
    let dim = cov.nrows();
    for c in 0..dim {
        for r in (c + 1)..dim {
            if (cov[(r, c)] - cov[(c, r)]).abs() > tol {
                return Err(Error::ContractViolation {
                    op: "check_physicality",
                    msg: format!("covariance not symmetric at ({}, {})", r, c),
                });
            }
        }
    }
    Ok(())
}
