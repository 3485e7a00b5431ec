use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use crate::source::closed_form_unchecked;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizeMethod {
    StationaryRoot,
    GoldenSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttenuationOptimum<T> {
    /// Attenuator transmission in `[0, 1]`.
    pub a_star: T,
    /// Conjugate transmission at the optimum, `a_star * eta_c_max`.
    pub eta_c_star: T,
    pub v_min: T,
    pub method: OptimizeMethod,
}

fn check_inputs<T: Real>(g: T, eta_p: T, eta_c_max: T) -> Result<()> {
    if !(g > T::one()) {
        return Err(Error::domain("optimize_attenuation", "gain must be > 1"));
    }
    for (name, e) in [("eta_p", eta_p), ("eta_c_max", eta_c_max)] {
        if !(e > T::zero() && e <= T::one()) {
            return Err(Error::domain("optimize_attenuation", format!("{name} must lie in (0, 1]")));
        }
    }
    Ok(())
}

/// Minimizes the full-beam noise over the conjugate attenuator transmission.
///
/// The noise is a ratio of a quadratic and a linear function of the conjugate
/// transmission, so its stationary point solves a quadratic. When that root
/// falls outside the admissible range the minimum is bracketed numerically.
pub fn optimize_attenuation<T: Real>(g: T, eta_p: T, eta_c_max: T) -> Result<AttenuationOptimum<T>> {
    check_inputs(g, eta_p, eta_c_max)?;
    let v = |c: T| closed_form_unchecked(g, eta_p, c);
    let one = T::one();
    let two = lit::<T>(2.0);
    let gm = g - one;
    let qa = two * gm * gm;
    let qb = gm - lit::<T>(4.0) * eta_p * g * gm;
    let qc = eta_p * eta_p * g * (two * g - one) + eta_p * (one - eta_p) * g;
    let d0 = eta_p * g;
    let d1 = gm;
    // qa·d1·c² + 2·qa·d0·c + (qb·d0 − qc·d1) = 0
    let a2 = qa * d1;
    let a1 = two * qa * d0;
    let a0 = qb * d0 - qc * d1;
    let disc = a1 * a1 - lit::<T>(4.0) * a2 * a0;
    if a2 > lit(1e-14) && disc >= T::zero() {
        // numerically stable larger root; the other is always negative here
        let q = -(a1 + disc.sqrt()) / two;
        let root = if q != T::zero() { a0 / q } else { T::zero() };
        if root >= T::zero() && root <= eta_c_max {
            let best = [T::zero(), root, eta_c_max]
                .into_iter()
                .map(|c| (c, v(c)))
                .fold((root, v(root)), |acc, cv| if cv.1 < acc.1 { cv } else { acc });
            return Ok(AttenuationOptimum {
                a_star: best.0 / eta_c_max,
                eta_c_star: best.0,
                v_min: best.1,
                method: OptimizeMethod::StationaryRoot,
            });
        }
    }
    let (c, vmin) = golden_section(&v, T::zero(), eta_c_max);
    // the interval ends are candidates too since the minimum may sit on one
    let (c, vmin) = [(T::zero(), v(T::zero())), (eta_c_max, v(eta_c_max))]
        .into_iter()
        .fold((c, vmin), |acc, cv| if cv.1 < acc.1 { cv } else { acc });
    Ok(AttenuationOptimum {
        a_star: c / eta_c_max,
        eta_c_star: c,
        v_min: vmin,
        method: OptimizeMethod::GoldenSection,
    })
}

fn golden_section<T: Real>(f: &dyn Fn(T) -> T, mut lo: T, mut hi: T) -> (T, T) {
    let inv_phi = lit::<T>((5f64.sqrt() - 1.0) / 2.0);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (hi - lo).abs() <= lit::<T>(1e-14) * (T::one() + hi.abs()) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let x = (lo + hi) / lit(2.0);
    (x, f(x))
}

/// `(a, V(a))` on `n` evenly spaced attenuator settings from 0 to 1.
pub fn attenuation_curve<T: Real>(g: T, eta_p: T, eta_c_max: T, n: usize) -> Result<Vec<(T, T)>> {
    check_inputs(g, eta_p, eta_c_max)?;
    if n < 2 {
        return Err(Error::domain("attenuation_curve", "need at least 2 points"));
    }
    Ok((0..n)
        .map(|i| {
            let a = lit::<T>(i as f64 / (n - 1) as f64);
            (a, closed_form_unchecked(g, eta_p, a * eta_c_max))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_min(g: f64, p: f64, cmax: f64) -> (f64, f64) {
        (0..=10_000)
            .map(|i| {
                let a = i as f64 / 10_000.0;
                (a, closed_form_unchecked(g, p, a * cmax))
            })
            .fold((0.0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc })
    }

    #[test]
    fn conduit_optimum() {
        let o = optimize_attenuation::<f64>(1.5, 0.285, 0.95).unwrap();
        assert_eq!(o.method, OptimizeMethod::StationaryRoot);
        assert!((o.eta_c_star - 0.706).abs() < 1e-3);
        assert!((o.a_star - 0.743).abs() < 1e-3);
        assert!((o.v_min - 0.702).abs() < 1e-3);
        // the stationary point solves c² + 1.71c − 1.7057 = 0
        let c = o.eta_c_star;
        assert!((c * c + 1.71 * c - 1.7057).abs() < 1e-3);
        let (a, vg) = grid_min(1.5, 0.285, 0.95);
        assert!((o.v_min - vg).abs() < 1e-6);
        assert!((o.a_star - a).abs() < 1e-3);
    }

    #[test]
    fn symmetric_needs_no_attenuation() {
        let o = optimize_attenuation::<f64>(1.5, 0.95, 0.95).unwrap();
        assert!((o.a_star - 1.0).abs() < 1e-9);
        let (_, vg) = grid_min(1.5, 0.95, 0.95);
        assert!((o.v_min - vg).abs() < 1e-9);
    }

    #[test]
    fn near_unit_gain_is_flat() {
        let o = optimize_attenuation::<f64>(1.0 + 1e-9, 0.5, 0.9).unwrap();
        assert!((o.v_min - 1.0).abs() < 1e-6);
    }

    #[test]
    fn true_minimum_neighbourhood() {
        for &(g, p, c) in &[(1.5, 0.285, 0.95), (2.0, 0.3, 1.0), (1.8, 0.6, 0.7), (1.2, 0.1, 0.9)] {
            let o = optimize_attenuation::<f64>(g, p, c).unwrap();
            for da in [-1e-3, 1e-3] {
                let a = (o.a_star + da).clamp(0.0, 1.0);
                assert!(closed_form_unchecked(g, p, a * c) >= o.v_min - 1e-9);
            }
        }
    }

    #[test]
    fn bad_inputs() {
        assert!(optimize_attenuation::<f64>(1.0, 0.5, 0.5).is_err());
        assert!(optimize_attenuation::<f64>(1.5, 0.0, 0.5).is_err());
        assert!(optimize_attenuation::<f64>(1.5, 0.5, 1.5).is_err());
    }

    #[test]
    fn curve_endpoints() {
        let c = attenuation_curve::<f64>(1.5, 1.0, 1.0, 11).unwrap();
        assert_eq!(c.len(), 11);
        assert!((c[10].1 - 0.5).abs() < 1e-12);
        assert_eq!(c[0].0, 0.0);
    }
}
