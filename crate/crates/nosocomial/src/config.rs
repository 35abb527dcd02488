//! The TOML run file shared by every subcommand.
//!
//! ```toml
//! seed = 20240501
//! output_dir = "runs"
//!
//! [data]
//! dir = "data"
//! wards = ["MICU"]
//! start = "2000-01-01"
//! end = "2001-05-26"
//! beds = 10
//! readmission_window = 180
//!
//! [models]
//! fit = ["full", "no_background", "non_linear"]
//!
//! [sampler]
//! iterations = 200000
//! burn_in = 10000
//! thin = 10
//! snapshot_stride = 10
//! ```
//!
//! Relative paths are resolved against the directory holding the run file.
//! `NOSOCOMIAL_OUTPUT_DIR` overrides `output_dir`.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use nosocomial_core::assess::{DicConfig, PredictiveConfig};
use nosocomial_core::mcmc::SamplerConfig;
use nosocomial_core::simulate::{SimPolicy, SyntheticWardConfig};
use nosocomial_core::{ModelKind, PriorConfig, Theta};
use serde::{Deserialize, Serialize};

use crate::ingest::StudyWindow;

pub const OUTPUT_DIR_ENV: &str = "NOSOCOMIAL_OUTPUT_DIR";
pub const LOG_ENV: &str = "NOSOCOMIAL_LOG";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config: {0}")]
    Invalid(String),
    #[error("config: {what} {path} does not exist")]
    MissingPath { what: &'static str, path: PathBuf },
}

pub type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub data: Option<DataSection>,
    #[serde(default)]
    pub models: ModelsSection,
    pub prior: Option<PriorSection>,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub assess: AssessSection,
    #[serde(default)]
    pub simulation: SimPolicy,
    pub synthetic: Option<SyntheticSection>,
    #[serde(default)]
    pub recover: RecoverSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Directory holding `admissions.csv`, `tests.csv` and `precautions.csv`.
    pub dir: PathBuf,
    /// Wards to fit; all wards in the files when absent.
    pub wards: Option<Vec<String>>,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub beds: Option<u32>,
    #[serde(default = "default_readmission_window")]
    pub readmission_window: f64,
}

fn default_readmission_window() -> f64 {
    180.0
}

impl DataSection {
    pub fn window(&self) -> StudyWindow {
        StudyWindow { start: self.start, end: self.end, readmission_window: self.readmission_window }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsSection {
    pub fit: Vec<ModelKind>,
}

impl Default for ModelsSection {
    fn default() -> Self {
        Self { fit: ModelKind::ALL.to_vec() }
    }
}

/// Prior overrides; unset fields keep the per-model defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub p_alpha: Option<f64>,
    pub p_beta: Option<f64>,
    pub phi_alpha: Option<f64>,
    pub phi_beta: Option<f64>,
    pub beta0_rate: Option<f64>,
    pub beta1_rate: Option<f64>,
    pub beta2_rate: Option<f64>,
}

impl PriorSection {
    pub fn for_model(&self, model: ModelKind) -> PriorConfig {
        let mut p = PriorConfig::default_for(model);
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut p.p_alpha, self.p_alpha);
        set(&mut p.p_beta, self.p_beta);
        set(&mut p.phi_alpha, self.phi_alpha);
        set(&mut p.phi_beta, self.phi_beta);
        set(&mut p.beta_rates[0], self.beta0_rate);
        set(&mut p.beta_rates[1], self.beta1_rate);
        set(&mut p.beta_rates[2], self.beta2_rate);
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub rw_sd: [f64; 3],
    pub phi0: f64,
    pub moves_per_iteration: u32,
    pub snapshot_stride: u64,
    pub recompute_every: u64,
    /// Log progress every this many iterations (0: silent).
    pub progress_every: u64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let d = SamplerConfig::new(ModelKind::Full, 0);
        Self {
            iterations: d.iterations,
            burn_in: d.burn_in,
            thin: d.thin,
            rw_sd: d.rw_sd,
            phi0: d.phi0,
            moves_per_iteration: d.moves_per_iteration,
            snapshot_stride: 10,
            recompute_every: d.recompute_every,
            progress_every: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssessSection {
    pub iteration_stride: u64,
    pub replicates: usize,
    pub trajectory_sims: usize,
    pub interval: f64,
    pub prevalence_block: f64,
    pub dic_min_draws: usize,
    pub dic_iterations: u64,
    pub dic_burn_in: u64,
}

impl Default for AssessSection {
    fn default() -> Self {
        let p = PredictiveConfig::new(0);
        let d = DicConfig::default();
        Self {
            iteration_stride: p.iteration_stride,
            replicates: p.replicates,
            trajectory_sims: p.trajectory_sims,
            interval: p.interval,
            prevalence_block: 30.0,
            dic_min_draws: d.min_draws,
            dic_iterations: d.iterations,
            dic_burn_in: d.burn_in,
        }
    }
}

/// Truth used by `simulate` and `recover`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    #[serde(default = "default_model")]
    pub model: ModelKind,
    pub p: f64,
    pub phi: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    #[serde(default = "default_ward_count")]
    pub wards: u32,
    #[serde(default = "default_beds")]
    pub beds: u32,
    #[serde(default = "default_study_days")]
    pub study_days: u32,
    #[serde(default = "default_arrival_rate")]
    pub arrival_rate: f64,
    #[serde(default = "default_los_median")]
    pub los_median: f64,
    #[serde(default = "default_los_sd")]
    pub los_sd: f64,
    #[serde(default)]
    pub readmission_probability: f64,
    #[serde(default = "default_readmission_window")]
    pub readmission_window: f64,
    /// Test schedule and precaution policy of the synthetic wards.
    pub policy: Option<SimPolicy>,
    /// Calendar date of day 0 in written files.
    #[serde(default = "default_start")]
    pub start: NaiveDate,
}

fn default_model() -> ModelKind {
    ModelKind::Full
}
fn default_ward_count() -> u32 {
    1
}
fn default_beds() -> u32 {
    10
}
fn default_study_days() -> u32 {
    510
}
fn default_arrival_rate() -> f64 {
    2.5
}
fn default_los_median() -> f64 {
    2.5
}
fn default_los_sd() -> f64 {
    3.0
}
fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date")
}

impl SyntheticSection {
    pub fn theta(&self) -> Theta {
        Theta::new(self.p, self.phi, self.beta0, self.beta1, self.beta2, self.model)
    }

    /// Generator settings of synthetic ward `index` (0-based).
    pub fn ward_config(&self, seed: u64, index: u32) -> SyntheticWardConfig {
        let mut c = SyntheticWardConfig::new(self.theta(), job_seed(seed, &ward_name(index), self.model));
        c.ward_id = ward_name(index);
        c.beds = self.beds;
        c.study_days = self.study_days;
        c.arrival_rate = self.arrival_rate;
        c.los_median = self.los_median;
        c.los_sd = self.los_sd;
        c.readmission_probability = self.readmission_probability;
        c.readmission_window = self.readmission_window;
        if let Some(policy) = self.policy {
            c.policy = policy;
        }
        c
    }
}

pub fn ward_name(index: u32) -> String {
    format!("S{:02}", index + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoverSection {
    /// Nominal coverage of the reported credible intervals.
    pub level: f64,
}

impl Default for RecoverSection {
    fn default() -> Self {
        Self { level: 0.95 }
    }
}

/// Seed of one (ward, model) job, independent of scheduling order.
pub fn job_seed(seed: u64, ward: &str, model: ModelKind) -> u64 {
    // FNV-1a over the job key, mixed with the run seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in ward.bytes().chain([0xff]).chain(model.name().bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A parsed run file together with its raw table and location.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub run: RunConfig,
    pub raw: toml::Table,
    pub path: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text, path)
    }

    /// Parses `text` as if read from `path`, resolving paths and checking them.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let parse_err = |e: toml::de::Error| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() };
        let raw: toml::Table = toml::from_str(text).map_err(parse_err)?;
        let mut run: RunConfig = toml::from_str(text).map_err(parse_err)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            run.output_dir = PathBuf::from(dir);
        }
        run.output_dir = base.join(&run.output_dir);
        if let Some(data) = &mut run.data {
            data.dir = base.join(&data.dir);
        }
        let loaded = Self { run, raw, path: path.to_path_buf() };
        loaded.validate()?;
        Ok(loaded)
    }

    fn validate(&self) -> Result<()> {
        let run = &self.run;
        if run.models.fit.is_empty() {
            return Err(ConfigError::Invalid("models.fit lists no models".into()));
        }
        if let Some(data) = &run.data {
            if !data.dir.is_dir() {
                return Err(ConfigError::MissingPath { what: "data directory", path: data.dir.clone() });
            }
            let files = crate::ingest::WardFiles::in_dir(&data.dir);
            for (what, path) in [
                ("admissions file", &files.admissions),
                ("tests file", &files.tests),
                ("precautions file", &files.precautions),
            ] {
                if !path.is_file() {
                    return Err(ConfigError::MissingPath { what, path: path.clone() });
                }
            }
            if data.end <= data.start {
                return Err(ConfigError::Invalid(format!("data.end {} is not after data.start {}", data.end, data.start)));
            }
            if data.beds == Some(0) {
                return Err(ConfigError::Invalid("data.beds must be positive".into()));
            }
            if !(data.readmission_window >= 0.0) {
                return Err(ConfigError::Invalid("data.readmission_window must be non-negative".into()));
            }
        }
        for &model in &run.models.fit {
            self.sampler(model, 0).validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        run.simulation.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let a = &run.assess;
        if a.iteration_stride == 0 || !(a.interval > 0.0) || !(a.prevalence_block > 0.0) || a.dic_burn_in >= a.dic_iterations {
            return Err(ConfigError::Invalid("assess: strides and intervals must be positive and dic_burn_in < dic_iterations".into()));
        }
        if let Some(s) = &run.synthetic {
            if s.wards == 0 {
                return Err(ConfigError::Invalid("synthetic.wards must be at least 1".into()));
            }
            s.ward_config(run.seed, 0).validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            s.theta().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if !(run.recover.level > 0.0 && run.recover.level < 1.0) {
            return Err(ConfigError::Invalid("recover.level must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Sampler settings of one job.
    pub fn sampler(&self, model: ModelKind, seed: u64) -> SamplerConfig {
        let s = &self.run.sampler;
        let mut c = SamplerConfig::new(model, seed);
        c.iterations = s.iterations;
        c.burn_in = s.burn_in;
        c.thin = s.thin;
        c.rw_sd = s.rw_sd;
        c.phi0 = s.phi0;
        c.moves_per_iteration = s.moves_per_iteration;
        c.snapshot_stride = s.snapshot_stride;
        c.recompute_every = s.recompute_every;
        c.prior = self.run.prior.unwrap_or_default().for_model(model);
        c
    }

    pub fn dic(&self) -> DicConfig {
        let a = &self.run.assess;
        DicConfig { min_draws: a.dic_min_draws, iterations: a.dic_iterations, burn_in: a.dic_burn_in }
    }

    pub fn predictive(&self, seed: u64) -> PredictiveConfig {
        let a = &self.run.assess;
        let mut p = PredictiveConfig::new(seed);
        p.iteration_stride = a.iteration_stride;
        p.replicates = a.replicates;
        p.trajectory_sims = a.trajectory_sims;
        p.interval = a.interval;
        p.policy = self.run.simulation;
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data_dir() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("data")).unwrap();
        for f in ["admissions.csv", "tests.csv", "precautions.csv"] {
            std::fs::write(dir.path().join("data").join(f), "").unwrap();
        }
        dir
    }

    const BASE: &str = r#"
seed = 7
[data]
dir = "data"
start = "2000-01-01"
end = "2001-05-26"
"#;

    #[test]
    fn defaults_and_path_resolution() {
        let dir = data_dir();
        let path = dir.path().join("run.toml");
        let c = LoadedConfig::parse(BASE, &path).unwrap();
        assert_eq!(c.run.seed, 7);
        assert_eq!(c.run.data.as_ref().unwrap().dir, dir.path().join("data"));
        assert_eq!(c.run.models.fit, ModelKind::ALL.to_vec());
        assert_eq!(c.sampler(ModelKind::NoBackground, 1).prior.beta_rates[0], 1e6);
        assert_eq!(c.run.simulation, SimPolicy::default());
    }

    #[test]
    fn seed_is_mandatory() {
        let dir = data_dir();
        let text = BASE.replace("seed = 7", "");
        let err = LoadedConfig::parse(&text, &dir.path().join("run.toml")).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn missing_input_file_is_named() {
        let dir = data_dir();
        std::fs::remove_file(dir.path().join("data/tests.csv")).unwrap();
        let err = LoadedConfig::parse(BASE, &dir.path().join("run.toml")).unwrap_err();
        assert!(err.to_string().contains("tests.csv"), "{err}");
    }

    #[test]
    fn zero_beds_is_rejected() {
        let text = "seed = 1\n[synthetic]\np = 0.8\nphi = 0.1\nbeta0 = 0.01\nbeta1 = 0.01\nbeta2 = 0.01\nbeds = 0\n";
        let err = LoadedConfig::parse(text, Path::new("run.toml")).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)), "{err}");
    }

    #[test]
    fn prior_and_policy_overrides() {
        let text = r#"
seed = 1
[prior]
beta1_rate = 0.01
[simulation.tests]
mode = "admission_plus_weekly"
compliance = 0.5
[simulation.precautions]
mode = "replay_observed"
"#;
        let c = LoadedConfig::parse(text, Path::new("run.toml")).unwrap();
        assert_eq!(c.sampler(ModelKind::Full, 1).prior.beta_rates, [1e-6, 0.01, 1e-6]);
        assert_eq!(
            c.run.simulation,
            SimPolicy {
                tests: nosocomial_core::simulate::TestSchedule::AdmissionPlusWeekly { compliance: 0.5 },
                precautions: nosocomial_core::simulate::PrecautionPolicy::ReplayObserved,
            }
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(LoadedConfig::parse("seed = 1\nsed = 2\n", Path::new("run.toml")).is_err());
    }

    #[test]
    fn job_seeds_differ_by_ward_and_model() {
        let a = job_seed(1, "A", ModelKind::Full);
        assert_ne!(a, job_seed(1, "A", ModelKind::NonLinear));
        assert_ne!(a, job_seed(1, "B", ModelKind::Full));
        assert_ne!(a, job_seed(2, "A", ModelKind::Full));
        assert_eq!(a, job_seed(1, "A", ModelKind::Full));
    }
}
