//! The CLI subcommands as library calls. Each returns the files it would write
//! and a short human-readable summary; nothing touches the disk here.

use std::collections::BTreeMap;
use std::path::Path;

use crate::analysis::{attenuation_curve, fit_scan, mean_kappa, optimize_attenuation, TraceFit};
use crate::config::ExperimentConfig;
use crate::detection::{run_scan, slit_width_sweep, ScanResult};
use crate::error::{Error, Result};
use crate::lattice::{Beam, Grid1D};
use crate::mc::{encode_pgm16, gaussian_intensity, render_farfield, render_nearfield, PhaseMode, SPECKLE_THRESHOLD};
use crate::output::{self, OutputSet};
use crate::pipeline::{probe_transmission, simulate, Simulation};
use crate::selftest::{run_selftest, SelftestOptions, SelftestReport};
use crate::source::{cell_partition, closed_form_noise};
use crate::transport::PhaseScreen;

pub const BEAM_DIAMETER_CONVENTION: &str = "1/e^2 intensity diameter of a Gaussian fit to the conjugate mean profile";

#[derive(Debug, Default)]
pub struct CommandOutput {
    pub files: OutputSet,
    pub summary: String,
}

/// Everything `scan` computes, kept for callers that want the numbers.
#[derive(Debug, Clone)]
pub struct ScanRun {
    pub sim: Simulation,
    pub scan: ScanResult<f64>,
    pub fits: Vec<TraceFit>,
    pub kappa: Option<f64>,
    pub sweep_widths: Vec<f64>,
    pub sweep_db: Vec<f64>,
    pub sweep_center: f64,
}

/// Matched-slit widths: four, two, one and half a coherence cell, then one pixel.
pub fn sweep_widths(cfg: &ExperimentConfig) -> Vec<f64> {
    let l = cfg.source.coherence_cell_um;
    let mut w = vec![4.0 * l, 2.0 * l, l, 0.5 * l];
    if cfg.grid.pitch_um < 0.5 * l {
        w.push(cfg.grid.pitch_um);
    }
    w
}

/// A quarter cell past the cell boundary nearest the grid middle. Slits
/// centred on a boundary or a cell center capture whole cells at several
/// widths at once, which flattens the sweep.
pub fn sweep_center(cfg: &ExperimentConfig, grid: &Grid1D<f64>) -> f64 {
    let cells = cell_partition(grid, cfg.source.coherence_cell_um);
    let mid = grid.pixel_count() / 2;
    let cell = cells.iter().find(|r| r.contains(&mid)).cloned().unwrap_or(mid..mid + 1);
    grid.coordinate(cell.start) - grid.pitch() / 2.0 + cfg.source.coherence_cell_um / 4.0
}

pub fn run_scan_pipeline(cfg: &ExperimentConfig) -> Result<ScanRun> {
    let sim = simulate(cfg)?;
    let probe = cfg.scan.probe_positions_um.values("probe_positions_um")?;
    let conj = cfg.scan.conj_positions_um.values("conj_positions_um")?;
    let mut scan = run_scan(&sim.state, cfg.scan.slit_width_um, &probe, &conj)?;
    scan.metadata = scan_metadata(cfg, &sim)?;
    let grid = sim.state.grid();
    let x = grid.coordinates();
    let fits = fit_scan(&scan, &x, &sim.state.intensity(Beam::Conj))?;
    let kappa = mean_kappa(&fits);
    let widths = sweep_widths(cfg);
    let center = sweep_center(cfg, grid);
    let sweep_db = slit_width_sweep(&sim.state, &widths, center)?;
    Ok(ScanRun {
        sim,
        scan,
        fits,
        kappa,
        sweep_widths: widths,
        sweep_db,
        sweep_center: center,
    })
}

fn scan_metadata(cfg: &ExperimentConfig, sim: &Simulation) -> Result<BTreeMap<String, String>> {
    let mut m = BTreeMap::new();
    m.insert("config".into(), cfg.canonical_json());
    m.insert("beam_diameter_convention".into(), BEAM_DIAMETER_CONVENTION.into());
    m.insert("db_convention".into(), "10*log10(variance / QNL)".into());
    m.insert("missing_value".into(), "NaN (no light on either slit)".into());
    m.insert("attenuator_transmission".into(), sim.attenuator.to_string());
    m.insert("full_beam_db_source".into(), sim.full_beam_db.source.to_string());
    m.insert("full_beam_db_before_qe".into(), sim.full_beam_db.before_qe.to_string());
    m.insert("full_beam_db_detected".into(), sim.full_beam_db.detected.to_string());
    let g = cfg.source.gain_peak;
    let eta_p = probe_transmission(cfg);
    let eta_c = sim.attenuator * cfg.detector_qe;
    if eta_c > 0.0 {
        let v = closed_form_noise(g, eta_p, eta_c)?;
        m.insert("closed_form_db_peak_gain".into(), crate::to_db(v).to_string());
    }
    Ok(m)
}

pub fn cmd_scan(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let run = run_scan_pipeline(cfg)?;
    let hash = cfg.config_hash();
    let grid = run.sim.state.grid();
    let mut files = OutputSet::default();
    files.add("scan.csv", output::scan_to_csv(&run.scan, &hash));
    let mut fit_meta = BTreeMap::new();
    fit_meta.insert("beam_diameter_convention".into(), BEAM_DIAMETER_CONVENTION.into());
    if let Some(k) = run.kappa {
        fit_meta.insert("kappa_mean".into(), k.to_string());
    }
    files.add("fit_report.csv", output::fits_to_csv(&run.fits, &hash, &fit_meta));
    files.add(
        "conj_profile.csv",
        output::profile_to_csv(
            &grid.coordinates(),
            &run.sim.state.intensity(Beam::Probe),
            &run.sim.state.intensity(Beam::Conj),
            &hash,
        ),
    );
    files.add("physicality.csv", output::physicality_to_csv(&run.sim.physicality, &hash));
    files.add(
        "slit_sweep.csv",
        output::sweep_to_csv(&run.sweep_widths, &run.sweep_db, run.sweep_center, &hash),
    );
    if let Some(c) = &cfg.conduit {
        let screen = PhaseScreen::for_grid(grid, c);
        files.add("phase_screen.csv", format!("# config_hash={hash}\n{}", screen.to_csv()));
    }
    files.add("config.json", cfg.to_json_pretty() + "\n");

    let mut summary = format!(
        "config_hash {hash}\nattenuator transmission {:.4}\nfull-beam noise: source {:.3} dB, before QE {:.3} dB, detected {:.3} dB\n",
        run.sim.attenuator, run.sim.full_beam_db.source, run.sim.full_beam_db.before_qe, run.sim.full_beam_db.detected
    );
    for t in &run.fits {
        match (t.fit, t.kappa) {
            (Some(f), Some(k)) => summary.push_str(&format!(
                "probe {:>8.1} um: dip at {:>8.1} um, depth {:.3} dB, sigma {:.1} um, kappa {:.4}\n",
                t.probe_center_um, f.center, f.depth_db, f.sigma, k.kappa
            )),
            _ => summary.push_str(&format!("probe {:>8.1} um: {}\n", t.probe_center_um, t.status)),
        }
    }
    match run.kappa {
        Some(k) => summary.push_str(&format!("mean kappa {k:.4}\n")),
        None => summary.push_str("mean kappa unavailable (no trace fitted)\n"),
    }
    Ok(CommandOutput { files, summary })
}

pub fn cmd_optimize(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    cfg.validate()?;
    let g = cfg.source.gain_peak;
    let eta_p = probe_transmission(cfg);
    let eta_c_max = cfg.detector_qe;
    let opt = optimize_attenuation(g, eta_p, eta_c_max)?;
    let curve = attenuation_curve(g, eta_p, eta_c_max, 1001)?;
    let hash = cfg.config_hash();
    let mut meta = BTreeMap::new();
    meta.insert("gain".into(), g.to_string());
    meta.insert("eta_p".into(), eta_p.to_string());
    meta.insert("eta_c_max".into(), eta_c_max.to_string());
    let mut files = OutputSet::default();
    files.add("optimize.csv", output::optimize_to_csv(&opt, eta_c_max, &curve, &hash, &meta));
    let summary = format!(
        "config_hash {hash}\ngain {g}, eta_p {eta_p:.4}, eta_c_max {eta_c_max:.4}\na* = {:.4} (conjugate attenuation {:.1}%)\neta_c* = {:.4}\nv_min = {:.5} ({:.3} dB)\n",
        opt.a_star,
        100.0 * (1.0 - opt.a_star),
        opt.eta_c_star,
        opt.v_min,
        crate::to_db(opt.v_min)
    );
    Ok(CommandOutput { files, summary })
}

pub fn cmd_farfield(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    cfg.validate()?;
    let conduit = cfg
        .conduit
        .ok_or_else(|| Error::config("farfield", "conduit", "speckle rendering needs a conduit section"))?;
    let grid = cfg.mc.grid2d;
    let input = gaussian_intensity(&grid, cfg.farfield.input_waist_um);
    let hash = cfg.config_hash();
    let mut files = OutputSet::default();
    let mut rows = Vec::new();
    let mut summary = format!("config_hash {hash}\n");
    for mode in [PhaseMode::Random, PhaseMode::Zero] {
        let near = render_nearfield(&grid, &input, &conduit, cfg.mc.rng_seed, mode)?;
        let far = render_farfield(&near);
        let name = match mode {
            PhaseMode::Random => "random",
            PhaseMode::Zero => "zero",
        };
        if mode == cfg.farfield.phase_mode {
            files.add("nearfield.pgm", encode_pgm16(&near.intensity(), grid.nx, grid.ny)?);
            files.add("farfield.pgm", encode_pgm16(&far.intensity, grid.nx, grid.ny)?);
            files.add(
                "farfield_mean.pgm",
                encode_pgm16(&far.stats.mean_intensity, grid.nx, grid.ny)?,
            );
        }
        summary.push_str(&format!(
            "{name} phases: contrast {:.4} (raw {:.4}) over {} pixels, power near {:.6e} far {:.6e}\n",
            far.stats.contrast,
            far.stats.raw_contrast,
            far.stats.illuminated_pixels,
            far.stats.nearfield_power,
            far.stats.farfield_power
        ));
        rows.push((name.to_string(), far.stats));
    }
    files.add("speckle_stats.csv", output::speckle_to_csv(&rows, SPECKLE_THRESHOLD, &hash));
    Ok(CommandOutput { files, summary })
}

/// Refits the traces of a scan previously written to `dir`.
pub fn cmd_fit(dir: &Path) -> Result<CommandOutput> {
    let read = |name: &str| {
        std::fs::read_to_string(dir.join(name))
            .map_err(|e| Error::config("fit", name.to_string(), format!("cannot read {}: {e}", dir.join(name).display())))
    };
    let (scan, hash) = output::scan_from_csv(&read("scan.csv")?)?;
    let (x, _, conj) = output::profile_from_csv(&read("conj_profile.csv")?)?;
    let fits = fit_scan(&scan, &x, &conj)?;
    let kappa = mean_kappa(&fits);
    let mut meta = BTreeMap::new();
    meta.insert("beam_diameter_convention".into(), BEAM_DIAMETER_CONVENTION.into());
    if let Some(k) = kappa {
        meta.insert("kappa_mean".into(), k.to_string());
    }
    let mut files = OutputSet::default();
    files.add("fit_report.csv", output::fits_to_csv(&fits, &hash, &meta));
    let summary = match kappa {
        Some(k) => format!("{} traces, mean kappa {k:.4}\n", fits.len()),
        None => format!("{} traces, none fitted\n", fits.len()),
    };
    Ok(CommandOutput { files, summary })
}

pub fn cmd_selftest(opts: &SelftestOptions) -> SelftestReport {
    run_selftest(opts)
}
