//! CSV encodings of scan maps, fit reports and auxiliary tables.
//!
//! Every file starts with `# config_hash=<16 hex>`; further `# key=value`
//! lines carry metadata. Floats use Rust's shortest round-trip formatting and
//! missing values are written as `NaN`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::analysis::{AttenuationOptimum, TraceFit};
use crate::detection::ScanResult;
use crate::error::{Error, Result};
use crate::mc::SpeckleStats;
use crate::pipeline::StageRecord;

pub const SCAN_HEADER: &str = "probe_center_um,conj_center_um,noise_db,qnl_flux";
pub const FIT_HEADER: &str =
    "probe_center_um,center_um,sigma_um,depth_db,baseline_db,rms_db,fwhm_um,beam_diameter_um,kappa,status";
pub const PROFILE_HEADER: &str = "x_um,probe_intensity,conj_intensity";
pub const PHYSICALITY_HEADER: &str = "stage,nu_min,ok";
pub const OPTIMIZE_HEADER: &str = "a,eta_c,v_rel,noise_db";
pub const SWEEP_HEADER: &str = "slit_width_um,noise_db";
pub const SPECKLE_HEADER: &str =
    "phase_mode,contrast,raw_contrast,illuminated_pixels,nearfield_power,farfield_power,threshold";

fn preamble(hash: &str, meta: &BTreeMap<String, String>) -> String {
    let mut s = format!("# config_hash={hash}\n");
    for (k, v) in meta {
        if k != "config_hash" {
            let _ = writeln!(s, "# {}={}", k, v.replace('\n', " "));
        }
    }
    s
}

/// Splits a file into its `# key=value` metadata and data lines.
pub fn split_preamble(text: &str) -> (BTreeMap<String, String>, Vec<&str>) {
    let mut meta = BTreeMap::new();
    let mut data = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some((k, v)) = rest.split_once('=') {
                meta.insert(k.to_string(), v.to_string());
            }
        } else if !line.trim().is_empty() {
            data.push(line);
        }
    }
    (meta, data)
}

pub fn scan_to_csv(scan: &ScanResult<f64>, hash: &str) -> String {
    let mut meta = scan.metadata.clone();
    meta.insert("slit_width_um".into(), scan.slit_width_um.to_string());
    let mut s = preamble(hash, &meta);
    s.push_str(SCAN_HEADER);
    s.push('\n');
    for (i, xp) in scan.probe_positions.iter().enumerate() {
        for (j, xc) in scan.conj_positions.iter().enumerate() {
            let _ = writeln!(s, "{},{},{},{}", xp, xc, scan.noise_db[i][j], scan.qnl_flux[i][j]);
        }
    }
    s
}

fn parse_f64(field: &str, what: &str, row: usize) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{what} row {row}: bad number {field:?}")))
}

fn check_header(data: &[&str], expected: &str, what: &str) -> Result<()> {
    match data.first() {
        Some(h) if h.trim() == expected => Ok(()),
        other => Err(Error::Parse(format!("{what}: expected header {expected:?}, got {other:?}"))),
    }
}

/// Inverse of [`scan_to_csv`]; also returns the config hash.
pub fn scan_from_csv(text: &str) -> Result<(ScanResult<f64>, String)> {
    let (mut meta, data) = split_preamble(text);
    check_header(&data, SCAN_HEADER, "scan.csv")?;
    let hash = meta.remove("config_hash").unwrap_or_default();
    let width = meta
        .remove("slit_width_um")
        .ok_or_else(|| Error::Parse("scan.csv: missing slit_width_um".into()))
        .and_then(|v| parse_f64(&v, "scan.csv", 0))?;
    let mut probe: Vec<f64> = Vec::new();
    let mut conj: Vec<f64> = Vec::new();
    let mut noise: Vec<Vec<f64>> = Vec::new();
    let mut flux: Vec<Vec<f64>> = Vec::new();
    for (n, line) in data[1..].iter().enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(Error::Parse(format!("scan.csv row {}: expected 4 fields", n + 1)));
        }
        let v: Vec<f64> = f
            .iter()
            .map(|x| parse_f64(x, "scan.csv", n + 1))
            .collect::<Result<_>>()?;
        if probe.last() != Some(&v[0]) {
            probe.push(v[0]);
            noise.push(Vec::new());
            flux.push(Vec::new());
        }
        if probe.len() == 1 {
            conj.push(v[1]);
        }
        noise.last_mut().unwrap().push(v[2]);
        flux.last_mut().unwrap().push(v[3]);
    }
    if noise.iter().any(|r| r.len() != conj.len()) || probe.is_empty() {
        return Err(Error::Parse("scan.csv: rows do not form a rectangular map".into()));
    }
    Ok((
        ScanResult {
            slit_width_um: width,
            probe_positions: probe,
            conj_positions: conj,
            noise_db: noise,
            qnl_flux: flux,
            metadata: meta,
        },
        hash,
    ))
}

pub fn fits_to_csv(fits: &[TraceFit], hash: &str, meta: &BTreeMap<String, String>) -> String {
    let mut s = preamble(hash, meta);
    s.push_str(FIT_HEADER);
    s.push('\n');
    let nan = f64::NAN;
    for t in fits {
        let f = t.fit;
        let k = t.kappa;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            t.probe_center_um,
            f.map_or(nan, |f| f.center),
            f.map_or(nan, |f| f.sigma),
            f.map_or(nan, |f| f.depth_db),
            f.map_or(nan, |f| f.baseline_db),
            f.map_or(nan, |f| f.rms_residual),
            k.map_or(nan, |k| k.dip_fwhm),
            k.map_or(nan, |k| k.beam_diameter),
            k.map_or(nan, |k| k.kappa),
            t.status
        );
    }
    s
}

pub fn profile_to_csv(x: &[f64], probe: &[f64], conj: &[f64], hash: &str) -> String {
    let mut s = preamble(hash, &BTreeMap::new());
    s.push_str(PROFILE_HEADER);
    s.push('\n');
    for ((x, p), c) in x.iter().zip(probe).zip(conj) {
        let _ = writeln!(s, "{x},{p},{c}");
    }
    s
}

/// Returns `(x, probe, conj)` columns.
pub fn profile_from_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (_, data) = split_preamble(text);
    check_header(&data, PROFILE_HEADER, "conj_profile.csv")?;
    let mut cols = (Vec::new(), Vec::new(), Vec::new());
    for (n, line) in data[1..].iter().enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(Error::Parse(format!("conj_profile.csv row {}: expected 3 fields", n + 1)));
        }
        cols.0.push(parse_f64(f[0], "conj_profile.csv", n + 1)?);
        cols.1.push(parse_f64(f[1], "conj_profile.csv", n + 1)?);
        cols.2.push(parse_f64(f[2], "conj_profile.csv", n + 1)?);
    }
    Ok(cols)
}

pub fn physicality_to_csv(log: &[StageRecord], hash: &str) -> String {
    let mut s = preamble(hash, &BTreeMap::new());
    s.push_str(PHYSICALITY_HEADER);
    s.push('\n');
    for r in log {
        let _ = writeln!(s, "{},{},{}", r.stage, r.nu_min, r.ok);
    }
    s
}

pub fn optimize_to_csv(
    opt: &AttenuationOptimum<f64>,
    eta_c_max: f64,
    curve: &[(f64, f64)],
    hash: &str,
    meta: &BTreeMap<String, String>,
) -> String {
    let mut meta = meta.clone();
    meta.insert("a_star".into(), opt.a_star.to_string());
    meta.insert("eta_c_star".into(), opt.eta_c_star.to_string());
    meta.insert("v_min".into(), opt.v_min.to_string());
    meta.insert("v_min_db".into(), crate::to_db(opt.v_min).to_string());
    meta.insert("method".into(), format!("{:?}", opt.method));
    let mut s = preamble(hash, &meta);
    s.push_str(OPTIMIZE_HEADER);
    s.push('\n');
    for (a, v) in curve {
        let _ = writeln!(s, "{},{},{},{}", a, a * eta_c_max, v, crate::to_db(*v));
    }
    s
}

pub fn sweep_to_csv(widths: &[f64], db: &[f64], center: f64, hash: &str) -> String {
    let mut meta = BTreeMap::new();
    meta.insert("center_um".into(), center.to_string());
    let mut s = preamble(hash, &meta);
    s.push_str(SWEEP_HEADER);
    s.push('\n');
    for (w, d) in widths.iter().zip(db) {
        let _ = writeln!(s, "{w},{d}");
    }
    s
}

pub fn speckle_to_csv(rows: &[(String, SpeckleStats<f64>)], threshold: f64, hash: &str) -> String {
    let mut s = preamble(hash, &BTreeMap::new());
    s.push_str(SPECKLE_HEADER);
    s.push('\n');
    for (mode, st) in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            mode, st.contrast, st.raw_contrast, st.illuminated_pixels, st.nearfield_power, st.farfield_power, threshold
        );
    }
    s
}

/// Files produced by one command, written only after every computation
/// succeeded.
#[derive(Debug, Default)]
pub struct OutputSet {
    files: Vec<(String, Vec<u8>)>,
}

impl OutputSet {
    pub fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Writes each file through a temporary sibling and a rename, all inside `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, bytes) in &self.files {
            let tmp = dir.join(format!(".{name}.partial"));
            std::fs::write(&tmp, bytes)?;
            std::fs::rename(&tmp, dir.join(name))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan() -> ScanResult<f64> {
        let mut metadata = BTreeMap::new();
        metadata.insert("beam_diameter_convention".into(), "1/e2".into());
        ScanResult {
            slit_width_um: 225.0,
            probe_positions: vec![-10.0, 0.0],
            conj_positions: vec![-5.0, 0.0, 5.0],
            noise_db: vec![vec![0.1, -1.5, f64::NAN], vec![0.2, -2.0, 0.3]],
            qnl_flux: vec![vec![1.0, 2.0, 0.0], vec![3.0, 4.0, 5.0]],
            metadata,
        }
    }

    #[test]
    fn scan_round_trip() {
        let s = scan();
        let text = scan_to_csv(&s, "0123456789abcdef");
        assert!(text.starts_with("# config_hash=0123456789abcdef\n"));
        let (back, hash) = scan_from_csv(&text).unwrap();
        assert_eq!(hash, "0123456789abcdef");
        assert_eq!(back.probe_positions, s.probe_positions);
        assert_eq!(back.conj_positions, s.conj_positions);
        assert_eq!(back.metadata, s.metadata);
        assert!(back.noise_db[0][2].is_nan());
        assert_eq!(back.noise_db[1], s.noise_db[1]);
        assert_eq!(scan_to_csv(&back, &hash), text);
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(scan_from_csv("# config_hash=x\na,b\n").is_err());
    }

    #[test]
    fn profile_round_trip() {
        let text = profile_to_csv(&[0.0, 1.0], &[2.0, 3.0], &[4.0, 5.0], "h");
        let (x, p, c) = profile_from_csv(&text).unwrap();
        assert_eq!((x, p, c), (vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 5.0]));
    }

    #[test]
    fn output_set_writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut o = OutputSet::default();
        o.add("a.csv", "x");
        o.add("b.csv", "y");
        o.write_to(&dir.path().join("out")).unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join("out/a.csv")).unwrap(), "x");
        assert_eq!(std::fs::read_dir(dir.path().join("out")).unwrap().count(), 2);
    }
}
