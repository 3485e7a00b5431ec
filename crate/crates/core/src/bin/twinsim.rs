use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use twinsim::commands::{cmd_farfield, cmd_fit, cmd_optimize, cmd_scan, cmd_selftest, CommandOutput};
use twinsim::config::ExperimentConfig;
use twinsim::selftest::{Fault, SelftestOptions};
use twinsim::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_SELFTEST: u8 = 1;

#[derive(Parser)]
#[command(name = "twinsim", version, about = "Multimode twin-beam squeezing through a fiber conduit")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `output.dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for the phase screen and Monte Carlo; overrides TWINSIM_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Slit-scan noise map, dip fits and kappa.
    Scan,
    /// Optimal conjugate attenuation and the noise-versus-attenuation curve.
    Optimize,
    /// Near-field and far-field speckle images with statistics.
    Farfield,
    /// Refit scan.csv and conj_profile.csv found in the output directory.
    Fit,
    /// Engine, closed-form and Monte Carlo agreement suite.
    Selftest {
        #[arg(long, hide = true, value_enum)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    Cov,
}

fn exit_code(e: &Error) -> u8 {
    if e.is_config() || matches!(e, Error::Io(_)) {
        EXIT_CONFIG
    } else {
        EXIT_NUMERICAL
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_seed_overrides(cli.seed)?;
    if let Some(out) = &cli.out {
        cfg.output.dir = out.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<u8, Error> {
    let (out, dir) = match &cli.command {
        Command::Selftest { inject_fault } => {
            let cfg = load_config(cli)?;
            let report = cmd_selftest(&SelftestOptions {
                fault: inject_fault.map(|FaultArg::Cov| Fault::CovCorruption),
                seed: cfg.mc.rng_seed,
            });
            print!("{}", report.render());
            return Ok(if report.passed() { 0 } else { EXIT_SELFTEST });
        }
        Command::Fit => {
            let dir = match &cli.out {
                Some(d) => d.clone(),
                None => PathBuf::from(load_config(cli)?.output.dir),
            };
            (cmd_fit(&dir)?, dir)
        }
        cmd => {
            let cfg = load_config(cli)?;
            let out: CommandOutput = match cmd {
                Command::Scan => cmd_scan(&cfg)?,
                Command::Optimize => cmd_optimize(&cfg)?,
                Command::Farfield => cmd_farfield(&cfg)?,
                _ => unreachable!(),
            };
            (out, PathBuf::from(&cfg.output.dir))
        }
    };
    out.files.write_to(&dir)?;
    print!("{}", out.summary);
    for name in out.files.names() {
        println!("wrote {}", dir.join(name).display());
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
