//! Run configuration: a JSON file mirroring the command-line flags, with
//! flags taking precedence. Every report embeds the resolved configuration
//! so a report alone is enough to rerun the analysis.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

/// Fields accepted in the `--config` JSON file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    /// Fit tolerance overrides.
    pub max_fit_iterations: Option<usize>,
    pub detuning_rel_tol: Option<f64>,
}

/// The resolved configuration embedded in every report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub max_fit_iterations: Option<usize>,
    pub detuning_rel_tol: Option<f64>,
    /// Path of the config file that contributed defaults, if any.
    pub config_path: Option<PathBuf>,
}

impl RunConfig {
    pub fn resolve(
        config_path: &Option<PathBuf>,
        out_flag: &Option<PathBuf>,
        seed_flag: Option<u64>,
        jobs_flag: Option<usize>,
    ) -> Result<Self> {
        let file: ConfigFile = match config_path {
            Some(path) => {
                let body = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&body)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => ConfigFile::default(),
        };
        Ok(Self {
            out: out_flag
                .clone()
                .or(file.out)
                .unwrap_or_else(|| PathBuf::from("tlsq-out")),
            seed: seed_flag.or(file.seed),
            jobs: jobs_flag.or(file.jobs),
            max_fit_iterations: file.max_fit_iterations,
            detuning_rel_tol: file.detuning_rel_tol,
            config_path: config_path.clone(),
        })
    }

    /// Create the output directory (and parents) if needed.
    pub fn ensure_out_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("creating output directory {}", self.out.display()))
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Validate that every referenced input exists before any work starts.
    pub fn check_inputs_exist(paths: &[&Path]) -> Result<()> {
        for p in paths {
            if !p.exists() {
                anyhow::bail!("input path does not exist: {}", p.display());
            }
        }
        Ok(())
    }
}
