//! Settings resolution: flags > config file > environment > defaults.

use std::fs;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use fpps_core::nn::NnBackend;
use fpps_core::registration::IcpConfig;

use crate::cli::IcpOpts;

pub const DEFAULT_SAMPLE_N: usize = 4096;
pub const DEFAULT_SEED: u64 = 0;

/// Optional knobs a TOML config file may supply.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub backend: Option<String>,
    pub max_iterations: Option<usize>,
    pub max_corr_dist: Option<f64>,
    pub epsilon: Option<f64>,
    pub sample_n: Option<usize>,
    pub seed: Option<u64>,
}

/// Fully resolved registration settings.
#[derive(Debug, Clone, Copy)]
pub struct Settings {
    pub backend: NnBackend,
    pub max_iterations: usize,
    pub max_corr_dist: f64,
    pub epsilon: f64,
    pub sample_n: usize,
    pub seed: u64,
}

impl Settings {
    pub fn icp_config(&self) -> IcpConfig {
        IcpConfig {
            max_correspondence_distance: self.max_corr_dist,
            max_iterations: self.max_iterations,
            transformation_epsilon: self.epsilon,
            ..IcpConfig::default()
        }
    }
}

fn env_value<T: FromStr>(key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match std::env::var(key) {
        Ok(raw) => match raw.parse() {
            Ok(v) => Ok(Some(v)),
            Err(e) => bail!("invalid {key}={raw}: {e}"),
        },
        Err(_) => Ok(None),
    }
}

pub fn resolve(opts: &IcpOpts) -> Result<Settings> {
    let file: FileConfig = match &opts.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            toml::from_str(&text)
                .with_context(|| format!("parsing config file {}", path.display()))?
        }
        None => FileConfig::default(),
    };

    let backend_name = opts
        .backend
        .clone()
        .or(file.backend)
        .or(env_value::<String>("FPPS_BACKEND")?);
    let backend = match backend_name {
        Some(name) => NnBackend::from_str(&name)?,
        None => NnBackend::Parallel,
    };

    let defaults = IcpConfig::default();
    Ok(Settings {
        backend,
        max_iterations: opts
            .max_iterations
            .or(file.max_iterations)
            .or(env_value("FPPS_MAX_ITERATIONS")?)
            .unwrap_or(defaults.max_iterations),
        max_corr_dist: opts
            .max_corr_dist
            .or(file.max_corr_dist)
            .or(env_value("FPPS_MAX_CORR_DIST")?)
            .unwrap_or(defaults.max_correspondence_distance),
        epsilon: opts
            .epsilon
            .or(file.epsilon)
            .or(env_value("FPPS_EPSILON")?)
            .unwrap_or(defaults.transformation_epsilon),
        sample_n: opts
            .sample_n
            .or(file.sample_n)
            .or(env_value("FPPS_SAMPLE_N")?)
            .unwrap_or(DEFAULT_SAMPLE_N),
        seed: opts
            .seed
            .or(file.seed)
            .or(env_value("FPPS_SEED")?)
            .unwrap_or(DEFAULT_SEED),
    })
}
