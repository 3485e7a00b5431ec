//! Experiment configuration: JSON schema, validation, seed overrides and the
//! digest embedded in every output.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lattice::Grid1D;
use crate::mc::{McConfig, PhaseMode};
use crate::source::SourceParams;
use crate::transport::ConduitParams;

pub const SEED_ENV: &str = "TWINSIM_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub pixel_count: usize,
    pub pitch_um: f64,
    /// Coordinate of pixel 0. Absent centers the grid on zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_um: Option<f64>,
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid1D<f64>> {
        match self.origin_um {
            Some(o) => Grid1D::new(self.pixel_count, self.pitch_um, o),
            None => Grid1D::centered(self.pixel_count, self.pitch_um),
        }
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            pixel_count: 360,
            pitch_um: 4.0,
            origin_um: None,
        }
    }
}

/// Conjugate attenuator: a fixed transmission or the loss-balancing optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttenuatorConfig {
    Transmission(f64),
    Named(AttenuatorMode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttenuatorMode {
    Optimal,
}

impl Default for AttenuatorConfig {
    fn default() -> Self {
        AttenuatorConfig::Named(AttenuatorMode::Optimal)
    }
}

/// Slit centers as an explicit list or an inclusive arithmetic range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Positions {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Positions {
    pub fn values(&self, field: &str) -> Result<Vec<f64>> {
        match self {
            Positions::List(v) => Ok(v.clone()),
            Positions::Range { start, stop, step } => {
                if !(step.is_finite() && *step != 0.0 && start.is_finite() && stop.is_finite()) {
                    return Err(Error::config("scan", field, "range needs finite start/stop and nonzero step"));
                }
                let n = ((stop - start) / step + 1e-9).floor();
                if n < 0.0 {
                    return Err(Error::config("scan", field, "step points away from stop"));
                }
                if n > 100_000.0 {
                    return Err(Error::config("scan", field, "more than 100000 positions"));
                }
                Ok((0..=n as usize).map(|i| start + step * i as f64).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub slit_width_um: f64,
    pub probe_positions_um: Positions,
    pub conj_positions_um: Positions,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            slit_width_um: 225.0,
            probe_positions_um: Positions::List(vec![-300.0, -150.0, 0.0, 150.0, 300.0]),
            conj_positions_um: Positions::Range {
                start: -700.0,
                stop: 700.0,
                step: 10.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarfieldConfig {
    /// 1/e² intensity radius of the probe on the conduit input face.
    pub input_waist_um: f64,
    pub phase_mode: PhaseMode,
}

impl Default for FarfieldConfig {
    fn default() -> Self {
        Self {
            input_waist_um: 100.0,
            phase_mode: PhaseMode::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub source: SourceParams<f64>,
    /// Absent for the free-space arm.
    #[serde(default)]
    pub conduit: Option<ConduitParams<f64>>,
    #[serde(default)]
    pub attenuator: AttenuatorConfig,
    #[serde(default = "default_qe")]
    pub detector_qe: f64,
    /// Gaussian blur sigma applied to the probe image (µm).
    #[serde(default)]
    pub imaging_blur_um: f64,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub mc: McConfig<f64>,
    #[serde(default)]
    pub farfield: FarfieldConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_qe() -> f64 {
    0.95
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            source: SourceParams::default(),
            conduit: None,
            attenuator: AttenuatorConfig::default(),
            detector_qe: default_qe(),
            imaging_blur_um: 0.0,
            scan: ScanConfig::default(),
            mc: McConfig::default(),
            farfield: FarfieldConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", "path", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid.build()?;
        self.source.validate(&grid)?;
        if let Some(c) = &self.conduit {
            c.validate()?;
            if grid.pitch() > c.fiber_pitch_um / 3.0 * (1.0 + 1e-9) {
                return Err(Error::config("conduit", "fiber_pitch_um", "grid pitch exceeds a third of the fiber pitch"));
            }
        }
        if let AttenuatorConfig::Transmission(a) = self.attenuator {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::config("attenuator", "transmission", "must be in [0, 1] or \"optimal\""));
            }
        }
        if !(self.detector_qe > 0.0 && self.detector_qe <= 1.0) {
            return Err(Error::config("detector", "detector_qe", "must be in (0, 1]"));
        }
        if !(self.imaging_blur_um >= 0.0 && self.imaging_blur_um.is_finite()) {
            return Err(Error::config("transport", "imaging_blur_um", "must be finite and >= 0"));
        }
        if !(self.scan.slit_width_um > 0.0 && self.scan.slit_width_um.is_finite()) {
            return Err(Error::config("scan", "slit_width_um", "must be positive"));
        }
        for (name, pos) in [
            ("probe_positions_um", &self.scan.probe_positions_um),
            ("conj_positions_um", &self.scan.conj_positions_um),
        ] {
            let v = pos.values(name)?;
            if v.is_empty() {
                return Err(Error::config("scan", name, "must not be empty"));
            }
            if !v.windows(2).all(|w| w[1] > w[0]) && !v.windows(2).all(|w| w[1] < w[0]) {
                return Err(Error::config("scan", name, "must be strictly monotone"));
            }
        }
        self.mc.validate()?;
        if !(self.farfield.input_waist_um > 0.0) {
            return Err(Error::config("farfield", "input_waist_um", "must be positive"));
        }
        if self.output.dir.is_empty() {
            return Err(Error::config("output", "dir", "must not be empty"));
        }
        Ok(())
    }

    /// Replaces every RNG seed: the conduit phase screen and the Monte Carlo generator.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(c) = self.conduit.as_mut() {
            c.phase_seed = seed;
        }
        self.mc.rng_seed = seed;
    }

    /// Applies `TWINSIM_SEED` (if set) and then an explicit seed (if given).
    pub fn apply_seed_overrides(&mut self, explicit: Option<u64>) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            let s = v
                .trim()
                .parse::<u64>()
                .map_err(|_| Error::config("env", SEED_ENV, format!("{v:?} is not a u64")))?;
            self.override_seed(s);
        }
        if let Some(s) = explicit {
            self.override_seed(s);
        }
        Ok(())
    }

    /// Compact JSON with the output directory reset, so results do not depend
    /// on where they are written.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.output = OutputConfig::default();
        serde_json::to_string(&c).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of [`canonical_json`](Self::canonical_json).
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn round_trip_keeps_hash() {
        let c = ExperimentConfig {
            conduit: Some(ConduitParams::default()),
            attenuator: AttenuatorConfig::Transmission(0.75),
            ..Default::default()
        };
        let back = ExperimentConfig::from_json(&c.to_json_pretty()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.config_hash(), c.config_hash());
        assert_eq!(c.config_hash().len(), 16);
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output.dir = "elsewhere".into();
        assert_eq!(a.config_hash(), b.config_hash());
        b.detector_qe = 0.9;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = ExperimentConfig::from_json(r#"{"detector_qe": 0.9, "bogus": 1}"#).unwrap_err();
        assert!(e.is_config());
        let e = ExperimentConfig::from_json(r#"{"source": {"gain_peak": 1.5, "typo": 2}}"#).unwrap_err();
        assert!(e.is_config());
    }

    #[test]
    fn attenuator_forms() {
        let c = ExperimentConfig::from_json(r#"{"attenuator": "optimal"}"#).unwrap();
        assert_eq!(c.attenuator, AttenuatorConfig::Named(AttenuatorMode::Optimal));
        let c = ExperimentConfig::from_json(r#"{"attenuator": 0.75}"#).unwrap();
        assert_eq!(c.attenuator, AttenuatorConfig::Transmission(0.75));
        assert!(ExperimentConfig::from_json(r#"{"attenuator": 1.5}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"attenuator": "max"}"#).is_err());
    }

    #[test]
    fn invalid_values_name_the_field() {
        let e = ExperimentConfig::from_json(r#"{"source": {"gain_peak": 0.9, "pump_waist_um": null, "coherence_cell_um": 120, "seed_waist_um": null, "seed_power": 1, "wavelength_nm": 795}}"#)
            .unwrap_err();
        assert!(e.to_string().contains("gain_peak"), "{e}");
        let e = ExperimentConfig::from_json(r#"{"detector_qe": 0}"#).unwrap_err();
        assert!(e.to_string().contains("detector_qe"));
    }

    #[test]
    fn ranges_expand_inclusively() {
        let p = Positions::Range {
            start: -10.0,
            stop: 10.0,
            step: 5.0,
        };
        assert_eq!(p.values("x").unwrap(), vec![-10.0, -5.0, 0.0, 5.0, 10.0]);
        let bad = Positions::Range {
            start: 0.0,
            stop: 10.0,
            step: -1.0,
        };
        assert!(bad.values("x").is_err());
    }

    #[test]
    fn seed_override() {
        let mut c = ExperimentConfig {
            conduit: Some(ConduitParams::default()),
            ..Default::default()
        };
        c.override_seed(99);
        assert_eq!(c.conduit.unwrap().phase_seed, 99);
        assert_eq!(c.mc.rng_seed, 99);
    }
}
