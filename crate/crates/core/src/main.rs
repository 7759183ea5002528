//! `stark-hhg`: batch front-end.
//!
//! Exit codes: 0 success, 2 invalid configuration or arguments, 1 numerical
//! or I/O failure. `HHG_STARK_THREADS` sets the worker count.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stark_hhg::commands::{self, DEFAULT_TAU_MAX_CYCLES};
use stark_hhg::config::{load_config, RunConfig};
use stark_hhg::figures::{self, Figure};
use stark_hhg::lewenstein::{Observable, StarkMode, Window};
use stark_hhg::macroprop::TableCache;
use stark_hhg::output::{write_outputs, CsvTable};
use stark_hhg::starkphase::Formulation;
use stark_hhg::{Error, Result};

const THREADS_VAR: &str = "HHG_STARK_THREADS";

#[derive(Parser)]
#[command(name = "stark-hhg", version, about = "Stark phases in high-order harmonic generation from polar molecules")]
struct Cli {
    /// TOML run configuration; built-in reference defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.directory`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classical ionization/return pairs of the configured pulse.
    Trajectories,
    /// Classical Stark phases in one formulation.
    StarkPhase {
        #[arg(long, value_enum)]
        formulation: FormulationArg,
        /// Wrap phases to (−π, π].
        #[arg(long)]
        wrap: bool,
    },
    /// Single-molecule harmonic spectrum.
    Spectrum(SpectralArgs),
    /// Single-molecule Stark phase by spectral subtraction.
    Extract(SpectralArgs),
    /// Jet propagation, far-field filter and radially averaged phase.
    Propagate {
        #[command(flatten)]
        spectral: SpectralArgs,
        /// Coherent sum of both orientations.
        #[arg(long)]
        aligned: bool,
    },
    /// Trajectory figure data.
    #[command(name = "reproduce-fig2")]
    ReproduceFig2,
    /// Single-molecule phase figure data.
    #[command(name = "reproduce-fig3")]
    ReproduceFig3(SpectralArgs),
    /// Jet phase figure data.
    #[command(name = "reproduce-fig4")]
    ReproduceFig4 {
        #[command(flatten)]
        spectral: SpectralArgs,
        #[arg(long)]
        aligned: bool,
    },
}

#[derive(Args, Clone, Default)]
struct SpectralArgs {
    #[arg(long, value_enum)]
    stark_mode: Option<StarkModeArg>,
    #[arg(long, value_enum)]
    observable: Option<ObservableArg>,
    #[arg(long, value_enum)]
    window: Option<WindowArg>,
    #[arg(long)]
    tau_max_cycles: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormulationArg {
    /// Quadrature of the energy shift along the trajectory.
    TimeIntegral,
    /// Dipole times return velocity.
    ReturnVelocity,
    /// Frequency form with the field-dependent ionization potential.
    Frequency,
    /// Closed form with the field-free ionization potential.
    Analytic,
}

#[derive(Clone, Copy, ValueEnum)]
enum StarkModeArg {
    #[value(name = "none")]
    None,
    #[value(name = "first_order")]
    FirstOrder,
    #[value(name = "first_and_second")]
    FirstAndSecond,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObservableArg {
    Dipole,
    Acceleration,
}

#[derive(Clone, Copy, ValueEnum)]
enum WindowArg {
    Cos8,
    Hann,
    Rectangular,
}

impl From<FormulationArg> for Formulation {
    fn from(f: FormulationArg) -> Self {
        match f {
            FormulationArg::TimeIntegral => Formulation::TimeIntegral,
            FormulationArg::ReturnVelocity => Formulation::ReturnVelocity,
            FormulationArg::Frequency => Formulation::FrequencyTimedep,
            FormulationArg::Analytic => Formulation::FrequencyAnalytic,
        }
    }
}

impl From<StarkModeArg> for StarkMode {
    fn from(m: StarkModeArg) -> Self {
        match m {
            StarkModeArg::None => StarkMode::None,
            StarkModeArg::FirstOrder => StarkMode::FirstOrder,
            StarkModeArg::FirstAndSecond => StarkMode::FirstAndSecond,
        }
    }
}

impl SpectralArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(m) = self.stark_mode {
            cfg.numerics.stark_mode = Some(m.into());
        }
        if let Some(o) = self.observable {
            cfg.numerics.spectrum.observable = match o {
                ObservableArg::Dipole => Observable::Dipole,
                ObservableArg::Acceleration => Observable::Acceleration,
            };
        }
        if let Some(w) = self.window {
            cfg.numerics.spectrum.window = match w {
                WindowArg::Cos8 => Window::Cos8,
                WindowArg::Hann => Window::Hann,
                WindowArg::Rectangular => Window::Rectangular,
            };
        }
        if let Some(t) = self.tau_max_cycles {
            if !t.is_finite() {
                return Err(Error::config("--tau-max-cycles", "must be finite"));
            }
            cfg.numerics.tau_max_cycles = Some(t);
        }
        cfg.validate()
    }
}

fn thread_count(value: &str) -> Result<usize> {
    value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::config(THREADS_VAR, "must be a positive integer"))
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n = thread_count(&value)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    configure_threads()?;
    let mut cfg = match &cli.config {
        Some(path) => load_config(path).map_err(|e| match e {
            Error::Io(io) => Error::config("--config", format!("{}: {io}", path.display())),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.out {
        cfg.output.directory = dir.clone();
    }
    let cache = TableCache::new();
    let stark_mode = |cfg: &RunConfig, default| cfg.numerics.stark_mode.unwrap_or(default);
    let (name, tables): (&str, Vec<CsvTable>) = match &cli.command {
        Command::Trajectories => ("trajectories", vec![commands::trajectories(&cfg, "trajectories.csv")?]),
        Command::StarkPhase { formulation, wrap } => (
            "stark-phase",
            vec![commands::stark_phase(&cfg, (*formulation).into(), *wrap, "stark_phase.csv")?],
        ),
        Command::Spectrum(args) => {
            args.apply(&mut cfg)?;
            let mode = stark_mode(&cfg, StarkMode::FirstOrder);
            ("spectrum", vec![commands::spectrum_table(&cfg, mode, DEFAULT_TAU_MAX_CYCLES, "spectrum.csv")?])
        }
        Command::Extract(args) => {
            args.apply(&mut cfg)?;
            let mode = stark_mode(&cfg, StarkMode::FirstOrder);
            ("extract", vec![commands::extract(&cfg, mode, DEFAULT_TAU_MAX_CYCLES, "extract.csv")?])
        }
        Command::Propagate { spectral, aligned } => {
            spectral.apply(&mut cfg)?;
            cfg.macroscopic.aligned |= *aligned;
            let mode = stark_mode(&cfg, StarkMode::FirstOrder);
            ("propagate", commands::propagate(&cfg, mode, cfg.macroscopic.aligned, &cache)?)
        }
        Command::ReproduceFig2 => (
            Figure::Trajectories.command(),
            figures::reproduce(Figure::Trajectories, &cfg, None, false, &cache)?,
        ),
        Command::ReproduceFig3(args) => {
            args.apply(&mut cfg)?;
            (
                Figure::SingleMolecule.command(),
                figures::reproduce(Figure::SingleMolecule, &cfg, cfg.numerics.stark_mode, false, &cache)?,
            )
        }
        Command::ReproduceFig4 { spectral, aligned } => {
            spectral.apply(&mut cfg)?;
            cfg.macroscopic.aligned |= *aligned;
            (
                Figure::Jet.command(),
                figures::reproduce(Figure::Jet, &cfg, cfg.numerics.stark_mode, cfg.macroscopic.aligned, &cache)?,
            )
        }
    };
    write_outputs(&cfg.output.directory, name, &cfg, &tables)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_validation() {
        2
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn run_in(dir: &std::path::Path, args: &[&str]) -> Result<Vec<PathBuf>> {
        let out = dir.to_str().unwrap();
        let mut argv = vec!["stark-hhg", "--out", out];
        argv.extend_from_slice(args);
        run(Cli::parse_from(argv))
    }

    #[test]
    fn parses_every_subcommand() {
        for args in [
            vec!["stark-hhg", "trajectories"],
            vec!["stark-hhg", "stark-phase", "--formulation", "time-integral", "--wrap"],
            vec!["stark-hhg", "spectrum", "--stark-mode", "none", "--window", "hann"],
            vec!["stark-hhg", "extract", "--observable", "acceleration", "--tau-max-cycles", "1.5"],
            vec!["stark-hhg", "propagate", "--aligned", "--stark-mode", "first_and_second"],
            vec!["stark-hhg", "reproduce-fig2"],
            vec!["stark-hhg", "reproduce-fig3", "--stark-mode", "first_order"],
            vec!["stark-hhg", "--config", "run.toml", "reproduce-fig4", "--aligned"],
        ] {
            assert!(Cli::try_parse_from(&args).is_ok(), "{args:?}");
        }
        assert!(Cli::try_parse_from(["stark-hhg", "stark-phase", "--formulation", "bogus"]).is_err());
        assert!(Cli::try_parse_from(["stark-hhg", "spectrum", "--stark-mode", "third"]).is_err());
        assert!(Cli::try_parse_from(["stark-hhg"]).is_err());
    }

    #[test]
    fn thread_variable_is_checked() {
        assert_eq!(thread_count(" 4 ").unwrap(), 4);
        for bad in ["0", "-1", "four", ""] {
            assert_eq!(exit_code(&thread_count(bad).unwrap_err()), 2);
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::config("pulse.cep_rad", "must be finite")), 2);
        assert_eq!(exit_code(&Error::Domain("x".into())), 1);
    }

    #[test]
    fn trajectories_write_csv_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let paths = run_in(dir.path(), &["trajectories"]).unwrap();
        assert_eq!(paths.len(), 2);
        let csv = fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
        let hash = RunConfig::default().hash();
        assert!(csv.contains(&format!("# config_sha256 = {hash}")));
        assert!(csv.contains("# command = trajectories"));
        assert!(csv.lines().any(|l| l.starts_with("t_ion_au,t_rec_au,v_ret_au,omega_au")));
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["config_sha256"], hash);
    }

    #[test]
    fn repeated_runs_are_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        for args in [vec!["trajectories"], vec!["stark-phase", "--formulation", "analytic"]] {
            let pa = run_in(a.path(), &args).unwrap();
            let pb = run_in(b.path(), &args).unwrap();
            for (x, y) in pa.iter().zip(&pb) {
                assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
            }
        }
    }

    #[test]
    fn config_errors_are_validation_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("bad.toml");
        fs::write(&cfg, "[pulse]\npeak_intensity_Wcm2 = 2e14\nbogus = 1\n").unwrap();
        let e = run_in(dir.path(), &["--config", cfg.to_str().unwrap(), "trajectories"]).unwrap_err();
        assert_eq!(exit_code(&e), 2);
        assert!(e.to_string().contains("pulse.bogus"), "{e}");

        let missing = dir.path().join("missing.toml");
        let e = run_in(dir.path(), &["--config", missing.to_str().unwrap(), "trajectories"]).unwrap_err();
        assert_eq!(exit_code(&e), 2);

        let e = run_in(dir.path(), &["extract", "--stark-mode", "none"]).unwrap_err();
        assert_eq!(exit_code(&e), 2);
        let e = run_in(dir.path(), &["extract", "--tau-max-cycles=-1"]).unwrap_err();
        assert_eq!(exit_code(&e), 2);
    }
}
