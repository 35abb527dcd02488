//! Output artifacts of fit, assess and simulate runs.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back yields bit-identical values. Every file is written to a temporary name
//! in its target directory and renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use nosocomial_core::assess::AssessmentReport;
use nosocomial_core::mcmc::{AcceptanceStats, Draw, PosteriorSamples, SamplerConfig, Snapshot};
use nosocomial_core::{Augmentation, Colonization, ModelKind, Theta, WardData};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, FormatError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io { path: path.to_path_buf(), source }
}

fn parse_err(path: &Path, message: impl ToString) -> FormatError {
    FormatError::Parse { path: path.to_path_buf(), message: message.to_string() }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| FormatError::Io { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| parse_err(path, e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| parse_err(path, e))
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

pub const SAMPLES_HEADER: [&str; 11] =
    ["iteration", "p", "phi", "beta0", "beta1", "beta2", "loglik", "n1", "n_CA", "n_FN", "colonized_days"];

/// One row per thinned draw.
pub fn samples_csv(samples: &PosteriorSamples) -> Vec<u8> {
    let rows = samples.draws.iter().map(|d| {
        let t = &d.theta;
        vec![
            d.iteration.to_string(),
            t.p.to_string(),
            t.phi.to_string(),
            t.beta0.to_string(),
            t.beta1.to_string(),
            t.beta2.to_string(),
            d.loglik.to_string(),
            d.n1.to_string(),
            d.n_ca.to_string(),
            d.n_fn.to_string(),
            d.colonized_days.to_string(),
        ]
    });
    csv_bytes(&SAMPLES_HEADER, rows)
}

pub fn read_samples_csv(path: &Path, model: ModelKind) -> Result<Vec<Draw>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(path, e))?;
    let header: Vec<String> = reader.headers().map_err(|e| parse_err(path, e))?.iter().map(String::from).collect();
    if header != SAMPLES_HEADER {
        return Err(parse_err(path, format!("unexpected header {header:?}")));
    }
    let mut draws = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(path, e))?;
        let f = |k: usize| -> Result<f64> {
            rec[k].parse::<f64>().map_err(|e| parse_err(path, format!("row {}: {}: {e}", i + 2, SAMPLES_HEADER[k])))
        };
        let u = |k: usize| -> Result<u64> {
            rec[k].parse::<u64>().map_err(|e| parse_err(path, format!("row {}: {}: {e}", i + 2, SAMPLES_HEADER[k])))
        };
        draws.push(Draw {
            iteration: u(0)?,
            theta: Theta::new(f(1)?, f(2)?, f(3)?, f(4)?, f(5)?, model),
            loglik: f(6)?,
            n1: u(7)?,
            n_ca: u(8)?,
            n_fn: u(9)?,
            colonized_days: f(10)?,
        });
    }
    Ok(draws)
}

/// Colonization of one episode as stored in snapshot files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum StoredColonization {
    Time(f64),
    Admission(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredSnapshot {
    iteration: u64,
    theta: Theta,
    /// Colonized episodes only: `[episode_id, time or "admission"]`.
    colonized: Vec<(String, StoredColonization)>,
}

fn store(ward: &WardData, iteration: u64, theta: Theta, aug: &Augmentation) -> StoredSnapshot {
    let colonized = ward
        .episodes()
        .iter()
        .zip(&aug.status)
        .filter_map(|(e, s)| match s {
            Colonization::Uncolonized => None,
            Colonization::OnAdmission => Some((e.id.clone(), StoredColonization::Admission("admission".into()))),
            Colonization::OnWard(c) => Some((e.id.clone(), StoredColonization::Time(*c))),
        })
        .collect();
    StoredSnapshot { iteration, theta, colonized }
}

fn restore(path: &Path, ward: &WardData, stored: StoredSnapshot) -> Result<Snapshot> {
    let mut status = vec![Colonization::Uncolonized; ward.len()];
    let index: std::collections::HashMap<&str, usize> =
        ward.episodes().iter().enumerate().map(|(j, e)| (e.id.as_str(), j)).collect();
    for (id, c) in stored.colonized {
        let j = *index.get(id.as_str()).ok_or_else(|| parse_err(path, format!("unknown episode {id}")))?;
        status[j] = match c {
            StoredColonization::Time(t) => Colonization::OnWard(t),
            StoredColonization::Admission(s) if s == "admission" => Colonization::OnAdmission,
            StoredColonization::Admission(s) => return Err(parse_err(path, format!("bad colonization {s:?} for {id}"))),
        };
    }
    let augmentation = Augmentation { status };
    augmentation.validate(ward).map_err(|e| parse_err(path, e))?;
    Ok(Snapshot { iteration: stored.iteration, theta: stored.theta, augmentation })
}

/// One JSON object per line per snapshot.
pub fn snapshots_jsonl(ward: &WardData, snapshots: &[Snapshot]) -> Vec<u8> {
    let mut out = Vec::new();
    for s in snapshots {
        serde_json::to_writer(&mut out, &store(ward, s.iteration, s.theta, &s.augmentation)).expect("in-memory write");
        out.push(b'\n');
    }
    out
}

pub fn read_snapshots_jsonl(path: &Path, ward: &WardData) -> Result<Vec<Snapshot>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let stored: StoredSnapshot = serde_json::from_str(l).map_err(|e| parse_err(path, e))?;
            restore(path, ward, stored)
        })
        .collect()
}

/// Final chain state, used to seed the augmentation-only chain of DIC₆.
pub fn final_state_json(ward: &WardData, samples: &PosteriorSamples) -> Vec<u8> {
    let last = samples.draws.last().map_or(0, |d| d.iteration);
    let mut bytes = serde_json::to_vec_pretty(&store(ward, last, samples.final_theta, &samples.final_augmentation)).expect("serializable");
    bytes.push(b'\n');
    bytes
}

pub fn read_final_state(path: &Path, ward: &WardData) -> Result<Snapshot> {
    let stored: StoredSnapshot = read_json(path)?;
    restore(path, ward, stored)
}

/// Reproducibility record of one (ward, model) fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub ward: String,
    pub model: ModelKind,
    pub seed: u64,
    pub sampler: SamplerConfig,
    pub draws: usize,
    pub snapshots: usize,
    pub acceptance: AcceptanceStats,
    pub acceptance_rates: AcceptanceRates,
    pub max_recompute_discrepancy: f64,
    /// The run configuration as given.
    pub config: toml::Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRates {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub add: f64,
    pub delete: f64,
    pub shift: f64,
}

impl From<&AcceptanceStats> for AcceptanceRates {
    fn from(a: &AcceptanceStats) -> Self {
        Self {
            beta0: a.beta[0].rate(),
            beta1: a.beta[1].rate(),
            beta2: a.beta[2].rate(),
            add: a.add.rate(),
            delete: a.delete.rate(),
            shift: a.shift.rate(),
        }
    }
}

/// Files of one fitted (ward, model) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunPaths {
    pub dir: PathBuf,
}

impl RunPaths {
    pub fn new(root: &Path, ward: &str, model: ModelKind) -> Self {
        Self { dir: root.join(ward).join(model.name()) }
    }
    pub fn samples(&self) -> PathBuf {
        self.dir.join("samples.csv")
    }
    pub fn snapshots(&self) -> PathBuf {
        self.dir.join("snapshots.jsonl")
    }
    pub fn final_state(&self) -> PathBuf {
        self.dir.join("final_state.json")
    }
    pub fn manifest(&self) -> PathBuf {
        self.dir.join("manifest.json")
    }
    pub fn report(&self) -> PathBuf {
        self.dir.join("report.json")
    }
}

/// Writes samples, snapshots, final state and manifest of a fit.
pub fn write_fit(paths: &RunPaths, ward: &WardData, samples: &PosteriorSamples, manifest: &RunManifest) -> Result<()> {
    write_atomic(&paths.samples(), &samples_csv(samples))?;
    write_atomic(&paths.snapshots(), &snapshots_jsonl(ward, &samples.snapshots))?;
    write_atomic(&paths.final_state(), &final_state_json(ward, samples))?;
    write_json(&paths.manifest(), manifest)
}

/// Reloads a fit written by [`write_fit`].
pub fn read_fit(paths: &RunPaths, ward: &WardData) -> Result<(RunManifest, PosteriorSamples)> {
    let manifest: RunManifest = read_json(&paths.manifest())?;
    let draws = read_samples_csv(&paths.samples(), manifest.model)?;
    let snapshots = if paths.snapshots().exists() { read_snapshots_jsonl(&paths.snapshots(), ward)? } else { Vec::new() };
    let last = read_final_state(&paths.final_state(), ward)?;
    let samples = PosteriorSamples {
        draws,
        snapshots,
        acceptance: manifest.acceptance,
        final_theta: last.theta,
        final_augmentation: last.augmentation,
        max_recompute_discrepancy: manifest.max_recompute_discrepancy,
    };
    Ok((manifest, samples))
}

/// `episode_id,colonization_time` with `admission` or `none` where applicable.
pub fn truth_csv(ward: &WardData, truth: &Augmentation) -> Vec<u8> {
    let rows = ward.episodes().iter().zip(&truth.status).map(|(e, s)| {
        let time = match s {
            Colonization::Uncolonized => "none".to_string(),
            Colonization::OnAdmission => e.admission.to_string(),
            Colonization::OnWard(c) => c.to_string(),
        };
        vec![e.id.clone(), time]
    });
    csv_bytes(&["episode_id", "colonization_time"], rows)
}

/// Per-figure CSVs and the JSON report of one assessment.
pub fn write_report(dir: &Path, report: &AssessmentReport, snapshots: &[Snapshot], ward: &WardData, samples: &PosteriorSamples) -> Result<()> {
    write_json(&dir.join("report.json"), report)?;
    let t = &report.trajectories;
    let rows = (0..t.observed.len()).map(|b| {
        vec![
            (b as f64 * t.interval).to_string(),
            ((b + 1) as f64 * t.interval).min(ward.study_length).to_string(),
            t.observed[b].to_string(),
            t.mean[b].to_string(),
            t.lower[b].to_string(),
            t.upper[b].to_string(),
        ]
    });
    write_atomic(&dir.join("trajectories.csv"), &csv_bytes(&["start", "end", "observed", "mean", "lower", "upper"], rows))?;

    let rows = report.ppp.simulated.iter().enumerate().map(|(r, s)| vec![r.to_string(), s.to_string(), report.ppp.observed.to_string()]);
    write_atomic(&dir.join("ppp.csv"), &csv_bytes(&["replicate", "simulated", "observed"], rows))?;

    let rows = snapshots.iter().filter_map(|s| {
        nosocomial_core::assess::hidden_carriage(ward, &s.augmentation)
            .map(|h| vec![s.iteration.to_string(), h.p_hidden.to_string(), h.p_wait.to_string()])
    });
    write_atomic(&dir.join("hidden_carriage.csv"), &csv_bytes(&["iteration", "p_hidden", "p_wait"], rows))?;

    let rows = samples.draws.iter().map(|d| {
        let (b1, b2) = (d.theta.beta1, d.theta.beta2);
        vec![d.iteration.to_string(), b1.to_string(), b2.to_string(), (b1.ln() - b2.ln()).to_string()]
    });
    write_atomic(&dir.join("efficacy.csv"), &csv_bytes(&["iteration", "beta1", "beta2", "log_ratio"], rows))?;

    let rows = report.prevalence.iter().map(|p| {
        vec![
            p.start.to_string(),
            p.end.to_string(),
            p.observed.to_string(),
            p.predicted.mean.to_string(),
            p.predicted.lower.to_string(),
            p.predicted.upper.to_string(),
        ]
    });
    write_atomic(
        &dir.join("prevalence.csv"),
        &csv_bytes(&["start", "end", "observed", "predicted_mean", "predicted_lower", "predicted_upper"], rows),
    )
}

/// Generic CSV writer for summary tables.
pub fn write_table(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    write_atomic(path, &csv_bytes(header, rows))
}
