//! Release gate: agreement between the closed form, the covariance engine and
//! the Monte Carlo sampler, plus physicality and phase-screen invariance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::optimize_attenuation;
use crate::detection::{measure_noise, run_scan, SlitParams};
use crate::error::Result;
use crate::lattice::{check_physicality, Beam, Beams, FieldState, Grid1D, Profile};
use crate::mc::{mc_noise, McConfig};
use crate::source::{build_twin_beams, closed_form_noise, SourceParams};
use crate::transport::{apply_conduit, ConduitParams};

/// Deliberate corruption used to prove the gate can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Scales the covariance of every checked state below the vacuum level.
    CovCorruption,
}

#[derive(Debug, Clone, Default)]
pub struct SelftestOptions {
    pub fault: Option<Fault>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "{} {}: {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            ));
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        s.push_str(&format!("{} checks, {} failed\n", self.checks.len(), failed));
        s
    }
}

fn tamper(opts: &SelftestOptions, mut s: FieldState<f64>) -> FieldState<f64> {
    if opts.fault == Some(Fault::CovCorruption) {
        *s.cov_mut() *= 0.5;
    }
    s
}

fn uniform_state(g: f64, eta_p: f64, eta_c: f64) -> Result<FieldState<f64>> {
    let grid = Grid1D::centered(16, 1.0)?;
    let s = build_twin_beams(grid, &SourceParams::uniform(g, 4.0))?;
    s.apply_loss(Beams::from(Beam::Probe), &Profile::Uniform(eta_p))?
        .apply_loss(Beams::from(Beam::Conj), &Profile::Uniform(eta_c))
}

const GAINS: [f64; 3] = [1.2, 1.5, 2.0];
const ETAS: [f64; 3] = [0.3, 0.7, 1.0];

fn check_closed_form(opts: &SelftestOptions) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for g in GAINS {
        for p in ETAS {
            for c in ETAS {
                let s = tamper(opts, uniform_state(g, p, c)?);
                let full = SlitParams::full_beam(s.grid());
                let v = measure_noise(&s, &full, &full)?.v_rel;
                let f = closed_form_noise(g, p, c)?;
                worst = worst.max(((v - f) / f).abs());
            }
        }
    }
    Ok(CheckResult {
        name: "closed_form_vs_engine",
        passed: worst < 1e-6,
        detail: format!("max relative deviation {worst:.2e} over 27 (G, eta_p, eta_c)"),
    })
}

fn check_monte_carlo(opts: &SelftestOptions) -> Result<CheckResult> {
    let cfg = McConfig {
        n_samples: 200_000,
        rng_seed: opts.seed,
        ..McConfig::default()
    };
    let mut worst: f64 = 0.0;
    for (g, p, c) in [(1.5, 1.0, 1.0), (2.0, 0.3, 0.7), (1.2, 0.7, 0.3)] {
        let s = tamper(opts, uniform_state(g, p, c)?);
        let full = SlitParams::full_beam(s.grid());
        let v = measure_noise(&s, &full, &full)?.v_rel;
        let e = mc_noise(&s, &full, &full, &cfg)?;
        worst = worst.max((e.v_rel_estimate - v).abs() / e.std_error);
    }
    Ok(CheckResult {
        name: "monte_carlo_vs_engine",
        passed: worst < 3.0,
        detail: format!("max deviation {worst:.2} standard errors over 3 scenarios"),
    })
}

fn check_physicality_property(opts: &SelftestOptions) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let grid = Grid1D::centered(12, 1.0)?;
    let mut nu_min = f64::INFINITY;
    for _ in 0..20 {
        let g = rng.random_range(1.05..2.5);
        let mut s = build_twin_beams(grid, &SourceParams::uniform(g, 3.0))?;
        for _ in 0..8 {
            let beam = if rng.random::<bool>() { Beam::Probe } else { Beam::Conj };
            s = match rng.random_range(0..3) {
                0 => {
                    let eta: Vec<f64> = (0..12).map(|_| rng.random::<f64>()).collect();
                    s.apply_loss(Beams::from(beam), &Profile::PerPixel(eta))?
                }
                1 => {
                    let th: Vec<f64> = (0..12).map(|_| rng.random_range(-3.2..3.2)).collect();
                    s.apply_phase(Beams::from(beam), &Profile::PerPixel(th))?
                }
                _ => {
                    let i = rng.random_range(0..11);
                    s.apply_beamsplitter(beam, i, i + 1, rng.random_range(-1.6..1.6))?
                }
            };
            let s2 = tamper(opts, s.clone());
            nu_min = nu_min.min(check_physicality(&s2)?.nu_min);
        }
    }
    Ok(CheckResult {
        name: "physicality",
        passed: nu_min >= 1.0 - 1e-9,
        detail: format!("min symplectic eigenvalue {nu_min:.12} over 160 random channels"),
    })
}

fn check_phase_screen(opts: &SelftestOptions) -> Result<CheckResult> {
    let grid = Grid1D::centered(96, 4.0)?;
    let src = SourceParams {
        coherence_cell_um: 48.0,
        seed_waist_um: Some(150.0),
        pump_waist_um: Some(200.0),
        ..SourceParams::default()
    };
    let s = build_twin_beams(grid, &src)?;
    let pos: Vec<f64> = (-4..=4).map(|k| k as f64 * 24.0).collect();
    let lossy = |s: FieldState<f64>| s.apply_loss(Beams::from(Beam::Probe), &Profile::Uniform(0.3));
    let reference = run_scan(&tamper(opts, lossy(s.clone())?), 48.0, &pos, &pos)?;
    let mut worst: f64 = 0.0;
    for k in 0..10u64 {
        let p = ConduitParams {
            crosstalk_angle_rad: 0.0,
            phase_seed: opts.seed.wrapping_add(k),
            fill_transmission: 0.3,
            facet_transmission: 1.0,
            ..ConduitParams::default()
        };
        let out = tamper(opts, apply_conduit(s.clone(), Beam::Probe, &p)?);
        let scan = run_scan(&out, 48.0, &pos, &pos)?;
        for (a, b) in scan.noise_db.iter().flatten().zip(reference.noise_db.iter().flatten()) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(CheckResult {
        name: "phase_screen_invariance",
        passed: worst < 1e-9,
        detail: format!("max map deviation {worst:.2e} dB over 10 phase seeds"),
    })
}

fn check_optimizer() -> Result<CheckResult> {
    let o = optimize_attenuation(1.5, 0.285, 0.95)?;
    let grid_min = (0..=10_000)
        .map(|i| {
            let a = i as f64 / 10_000.0;
            closed_form_noise(1.5, 0.285, (a * 0.95).max(1e-12)).unwrap_or(f64::INFINITY)
        })
        .fold(f64::INFINITY, f64::min);
    let diff = o.v_min - grid_min;
    Ok(CheckResult {
        name: "attenuation_optimum",
        passed: diff <= 1e-9 && diff > -1e-6,
        detail: format!("a*={:.4}, v_min={:.6}, grid-scan v_min={:.6}", o.a_star, o.v_min, grid_min),
    })
}

type Check<'a> = Box<dyn Fn() -> Result<CheckResult> + 'a>;

/// Runs every check; a check that errors counts as failed.
pub fn run_selftest(opts: &SelftestOptions) -> SelftestReport {
    let mut checks = Vec::new();
    let named: [(&'static str, Check); 5] = [
        ("closed_form_vs_engine", Box::new(|| check_closed_form(opts))),
        ("monte_carlo_vs_engine", Box::new(|| check_monte_carlo(opts))),
        ("physicality", Box::new(|| check_physicality_property(opts))),
        ("phase_screen_invariance", Box::new(|| check_phase_screen(opts))),
        ("attenuation_optimum", Box::new(check_optimizer)),
    ];
    for (name, f) in named.iter() {
        checks.push(f().unwrap_or_else(|e| CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        }));
    }
    SelftestReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_run_passes() {
        let r = run_selftest(&SelftestOptions {
            fault: None,
            seed: 1,
        });
        assert!(r.passed(), "{}", r.render());
    }

    #[test]
    fn corruption_is_caught_by_name() {
        let r = run_selftest(&SelftestOptions {
            fault: Some(Fault::CovCorruption),
            seed: 1,
        });
        assert!(!r.passed());
        let failed: Vec<&str> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        assert!(failed.contains(&"physicality"), "{failed:?}");
    }
}
