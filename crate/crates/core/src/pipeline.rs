//! Source to detector: the channel sequence for one configured arm.

use serde::Serialize;

use crate::analysis::{optimize_attenuation, AttenuationOptimum};
use crate::config::{AttenuatorConfig, ExperimentConfig};
use crate::detection::{measure_noise, SlitParams};
use crate::error::Result;
use crate::lattice::{check_physicality, Beam, Beams, FieldState};
use crate::source::build_twin_beams;
use crate::transport::{
    apply_attenuator, apply_detector_efficiency, blur_channel, conduit_crosstalk, conduit_loss, conduit_phase,
    AttenuatorSetting, PhaseScreen,
};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub stage: String,
    pub nu_min: f64,
    pub ok: bool,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub state: FieldState<f64>,
    pub attenuator: f64,
    pub optimum: Option<AttenuationOptimum<f64>>,
    /// Minimum symplectic eigenvalue after every stage, in order.
    pub physicality: Vec<StageRecord>,
    /// Full-beam noise (dB) at the source, just before detection losses, and
    /// as detected.
    pub full_beam_db: FullBeamNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FullBeamNoise {
    pub source: f64,
    pub before_qe: f64,
    pub detected: f64,
}

fn full_beam_db(s: &FieldState<f64>) -> Result<f64> {
    let slit = SlitParams::full_beam(s.grid());
    Ok(measure_noise(s, &slit, &slit)?.db)
}

/// Probe transmission seen by the attenuator optimizer: conduit times QE.
pub fn probe_transmission(cfg: &ExperimentConfig) -> f64 {
    cfg.conduit.as_ref().map_or(1.0, |c| c.total_transmission()) * cfg.detector_qe
}

pub fn resolve_attenuator(cfg: &ExperimentConfig) -> Result<(f64, Option<AttenuationOptimum<f64>>)> {
    match cfg.attenuator {
        AttenuatorConfig::Transmission(a) => Ok((a, None)),
        AttenuatorConfig::Named(_) => {
            let o = optimize_attenuation(cfg.source.gain_peak, probe_transmission(cfg), cfg.detector_qe)?;
            Ok((o.a_star, Some(o)))
        }
    }
}

/// Hook that may alter the state after a named stage; used to exercise the
/// physicality guard.
pub type StageHook<'a> = &'a dyn Fn(&str, &mut FieldState<f64>);

/// Builds the source and applies attenuator, conduit, imaging blur and
/// detector efficiency, checking physicality after every stage.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Simulation> {
    simulate_with_hook(cfg, &|_, _| {})
}

pub fn simulate_with_hook(cfg: &ExperimentConfig, hook: StageHook<'_>) -> Result<Simulation> {
    cfg.validate()?;
    let grid = cfg.grid.build()?;
    let (a, optimum) = resolve_attenuator(cfg)?;
    let mut log = Vec::new();
    let mut record = |stage: &str, s: &mut FieldState<f64>| -> Result<()> {
        hook(stage, s);
        let p = check_physicality(s)?;
        log.push(StageRecord {
            stage: stage.to_string(),
            nu_min: p.nu_min,
            ok: p.ok,
        });
        if !p.ok {
            return Err(Error::Unphysical {
                stage: stage.to_string(),
                nu_min: p.nu_min,
            });
        }
        Ok(())
    };

    let mut s = build_twin_beams(grid, &cfg.source)?;
    record("source", &mut s)?;
    let at_source = full_beam_db(&s)?;
    s = apply_attenuator(s, Beams::from(Beam::Conj), AttenuatorSetting::new(a)?)?;
    record("attenuator", &mut s)?;
    if cfg.imaging_blur_um > 0.0 {
        // Imaging onto the conduit input face, ahead of the phase screen.
        // the stage record below performs the post-blur physicality check
        let (m, noise) = blur_channel(&grid, cfg.imaging_blur_um)?;
        s = s.apply_passive_map(Beam::Probe, &m, &noise)?;
        record("imaging_blur", &mut s)?;
    }
    if let Some(c) = &cfg.conduit {
        s = conduit_loss(s, Beam::Probe, c)?;
        record("conduit_loss", &mut s)?;
        let screen = PhaseScreen::for_grid(&grid, c);
        s = conduit_phase(s, Beam::Probe, c, &screen)?;
        record("conduit_phase", &mut s)?;
        s = conduit_crosstalk(s, Beam::Probe, c)?;
        record("conduit_crosstalk", &mut s)?;
    }
    let before_qe = full_beam_db(&s)?;
    s = apply_detector_efficiency(s, cfg.detector_qe)?;
    record("detector_qe", &mut s)?;
    let detected = full_beam_db(&s)?;
    Ok(Simulation {
        full_beam_db: FullBeamNoise {
            source: at_source,
            before_qe,
            detected,
        },
        state: s,
        attenuator: a,
        optimum,
        physicality: log,
    })
}
