//! `tlsq` — analysis pipeline for TLS dielectric loss in superconducting
//! resonators: S21 fitting, joint loss-model extraction, effective
//! temperature thermometry, FT-IR hydrogen quantification and synthetic
//! experiment generation.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "tlsq", version, about = "TLS dielectric-loss analysis toolkit")]
struct Cli {
    /// JSON run configuration; command-line flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// RNG seed (required for `simulate`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for per-file parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the S21 line shape of each sweep file; emits one fit JSON per
    /// input plus a summary table.
    FitS21 {
        /// Sweep CSVs (`freq_hz,re_s21,im_s21` with JSON sidecars).
        sweeps: Vec<PathBuf>,
        /// Skip the off-resonance baseline normalization step.
        #[arg(long)]
        no_normalize: bool,
    },
    /// Jointly fit the TLS loss model to power- and temperature-sweep
    /// datasets; emits a report, a model card and dense model curves.
    FitLoss {
        /// Power-sweep CSV (`device_id,n_bar,t_bp_kelvin,qi_inv,qi_inv_sigma`).
        #[arg(long)]
        power: PathBuf,
        /// Temperature-sweep CSV (same schema).
        #[arg(long)]
        temp: Option<PathBuf>,
        /// Device table JSON ({id: {f0_hz, f_sin, q_ext_inv}}).
        #[arg(long)]
        devices: PathBuf,
        /// Disable fitting the resonant term.
        #[arg(long)]
        no_resonant: bool,
        /// Disable fitting the relaxation term.
        #[arg(long)]
        no_relaxation: bool,
        /// Disable fitting the constant background.
        #[arg(long)]
        no_background: bool,
        /// Drop the quasiparticle term from the model.
        #[arg(long)]
        no_quasiparticle: bool,
        /// Freeze a self-heating law A·n̄^β during the fit (K).
        #[arg(long)]
        heat_a: Option<f64>,
        /// Heating exponent for --heat-a.
        #[arg(long, default_value_t = 0.5)]
        heat_beta: f64,
    },
    /// Map power-sweep loss onto effective temperatures using a fitted
    /// loss model, then fit the self-heating power law.
    Thermometry {
        #[arg(long)]
        power: PathBuf,
        #[arg(long)]
        devices: PathBuf,
        /// fit-loss report JSON supplying the temperature-dependent model.
        #[arg(long)]
        model: PathBuf,
        /// Fit the heating exponent β instead of freezing it at 0.5.
        #[arg(long)]
        free_beta: bool,
    },
    /// Baseline-correct spectra, fit the N-H and Si-H peaks and compute
    /// atomic %H per spectrum plus a cross-label comparison.
    Ftir {
        /// Spectrum CSVs (`wavenumber_cm1,absorbance` with JSON sidecars).
        spectra: Vec<PathBuf>,
        #[arg(long, default_value_t = 3)]
        baseline_degree: usize,
        /// Si-H absorption cross-section, cm² per bond.
        #[arg(long, default_value_t = tlsq::ftir::CrossSections::lanford_rand().sigma_sih_cm2)]
        sigma_sih: f64,
        /// N-H absorption cross-section, cm² per bond.
        #[arg(long, default_value_t = tlsq::ftir::CrossSections::lanford_rand().sigma_nh_cm2)]
        sigma_nh: f64,
        /// Matrix atomic density [Si]+[N], atoms/cm³.
        #[arg(long, default_value_t = tlsq::ftir::SIN_MATRIX_DENSITY)]
        matrix_density: f64,
    },
    /// Generate a deterministic synthetic dataset bundle.
    Simulate {
        /// `as-deposited`, `annealed`, or a scenario JSON path.
        #[arg(long)]
        scenario: String,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let config = match RunConfig::resolve(&cli.config, &cli.out, cli.seed, cli.jobs) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };

    if let Some(jobs) = config.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: failed to build thread pool: {e}");
            return ExitCode::from(2);
        }
    }

    let result = match cli.command {
        Command::FitS21 {
            sweeps,
            no_normalize,
        } => commands::fit_s21::run(&config, &sweeps, no_normalize),
        Command::FitLoss {
            power,
            temp,
            devices,
            no_resonant,
            no_relaxation,
            no_background,
            no_quasiparticle,
            heat_a,
            heat_beta,
        } => commands::fit_loss::run(
            &config,
            &commands::fit_loss::Args {
                power,
                temp,
                devices,
                no_resonant,
                no_relaxation,
                no_background,
                no_quasiparticle,
                heat_a,
                heat_beta,
            },
        ),
        Command::Thermometry {
            power,
            devices,
            model,
            free_beta,
        } => commands::thermometry::run(&config, &power, &devices, &model, free_beta),
        Command::Ftir {
            spectra,
            baseline_degree,
            sigma_sih,
            sigma_nh,
            matrix_density,
        } => commands::ftir::run(
            &config,
            &spectra,
            baseline_degree,
            sigma_sih,
            sigma_nh,
            matrix_density,
        ),
        Command::Simulate { scenario } => commands::simulate::run(&config, &scenario),
    };

    match result {
        Ok(failures) if failures == 0 => ExitCode::SUCCESS,
        Ok(failures) => {
            eprintln!("{failures} item(s) failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
