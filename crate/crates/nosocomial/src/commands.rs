//! The `fit`, `assess`, `simulate` and `recover` subcommands.

use std::path::{Path, PathBuf};

use nosocomial_core::assess::{assess_fit, pool_efficacy, AssessmentReport, PosteriorSummary};
use nosocomial_core::mcmc::{run_chain_with_progress, PosteriorSamples};
use nosocomial_core::simulate::{generate_synthetic_ward, SyntheticWard};
use nosocomial_core::{ModelKind, WardData, WardSummary};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{job_seed, ward_name, ConfigError, LoadedConfig};
use crate::formats::{self, AcceptanceRates, FormatError, RunManifest, RunPaths};
use crate::ingest::{build_ward_data, write_ward_files, IngestError, WardFiles};

pub const ARTIFACT: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{context}: {source}")]
    Model { context: String, source: nosocomial_core::Error },
    #[error("{0}")]
    Missing(String),
    #[error("{failed} of {total} jobs failed")]
    Jobs { failed: usize, total: usize },
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

impl CommandError {
    /// 1 for problems with the inputs, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) | CommandError::Ingest(_) | CommandError::Missing(_) => 1,
            CommandError::Model { source: nosocomial_core::Error::InvalidConfig(_), .. } => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CommandError>;

fn model_err(context: impl Into<String>) -> impl FnOnce(nosocomial_core::Error) -> CommandError {
    let context = context.into();
    move |source| CommandError::Model { context, source }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(|e| CommandError::Pool(e.to_string()))
}

/// Wards named by the `[data]` section.
pub fn load_wards(config: &LoadedConfig) -> Result<Vec<WardData>> {
    let data = config
        .run
        .data
        .as_ref()
        .ok_or_else(|| CommandError::Config(ConfigError::Invalid("a [data] section is required".into())))?;
    let table = WardFiles::in_dir(&data.dir).read()?;
    let present = table.wards();
    let selected = match &data.wards {
        Some(w) => {
            if let Some(missing) = w.iter().find(|w| !present.contains(w)) {
                return Err(CommandError::Config(ConfigError::Invalid(format!("ward {missing} does not occur in the admissions file"))));
            }
            w.clone()
        }
        None => present,
    };
    let window = data.window();
    let mut wards = Vec::with_capacity(selected.len());
    for name in &selected {
        let (ward, warnings) = build_ward_data(&table, name, &window, data.beds)?;
        for w in warnings {
            log::warn!("{w}");
        }
        wards.push(ward);
    }
    Ok(wards)
}

/// Outcome of one (ward, model) chain.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub ward: String,
    pub model: ModelKind,
    pub paths: RunPaths,
    pub samples: PosteriorSamples,
}

fn fit_one(config: &LoadedConfig, root: &Path, ward: &WardData, model: ModelKind) -> Result<FitOutcome> {
    let seed = job_seed(config.run.seed, &ward.ward_id, model);
    let sampler = config.sampler(model, seed);
    let every = config.run.sampler.progress_every;
    let label = format!("{}/{}", ward.ward_id, model.name());
    let mut progress = |p: nosocomial_core::mcmc::Progress| {
        if every > 0 && p.iteration % every == 0 {
            log::info!("{label}: iteration {} of {}", p.iteration, p.total);
        }
    };
    let samples = run_chain_with_progress(ward, &sampler, &mut progress).map_err(model_err(label.clone()))?;
    let paths = RunPaths::new(root, &ward.ward_id, model);
    let manifest = RunManifest {
        artifact: ARTIFACT.into(),
        version: VERSION.into(),
        ward: ward.ward_id.clone(),
        model,
        seed,
        sampler,
        draws: samples.draws.len(),
        snapshots: samples.snapshots.len(),
        acceptance: samples.acceptance,
        acceptance_rates: AcceptanceRates::from(&samples.acceptance),
        max_recompute_discrepancy: samples.max_recompute_discrepancy,
        config: config.raw.clone(),
    };
    formats::write_fit(&paths, ward, &samples, &manifest)?;
    let r = manifest.acceptance_rates;
    log::info!(
        "{label}: done; acceptance beta0 {:.2} beta1 {:.2} beta2 {:.2} add {:.2} delete {:.2} shift {:.2}",
        r.beta0,
        r.beta1,
        r.beta2,
        r.add,
        r.delete,
        r.shift
    );
    Ok(FitOutcome { ward: ward.ward_id.clone(), model, paths, samples })
}

/// Runs one chain per (ward, model) pair and writes its files under `root`.
/// Every pair runs even if others fail; failures are logged per pair.
pub fn fit_wards(config: &LoadedConfig, wards: &[WardData], models: &[ModelKind], root: &Path, jobs: usize) -> Result<Vec<FitOutcome>> {
    let pairs: Vec<(&WardData, ModelKind)> = wards.iter().flat_map(|w| models.iter().map(move |&m| (w, m))).collect();
    let results: Vec<Result<FitOutcome>> = pool(jobs)?.install(|| pairs.par_iter().map(|&(w, m)| fit_one(config, root, w, m)).collect());
    collect_jobs(results, pairs.iter().map(|(w, m)| format!("{}/{}", w.ward_id, m.name())))
}

fn collect_jobs<T>(results: Vec<Result<T>>, labels: impl Iterator<Item = String>) -> Result<Vec<T>> {
    let total = results.len();
    if total == 1 {
        return results.into_iter().collect();
    }
    let mut ok = Vec::with_capacity(total);
    let mut failed = 0;
    for (r, label) in results.into_iter().zip(labels) {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                log::error!("{label}: {e}");
                failed += 1;
            }
        }
    }
    if failed == 0 {
        Ok(ok)
    } else {
        Err(CommandError::Jobs { failed, total })
    }
}

pub fn cmd_fit(config: &LoadedConfig, jobs: usize) -> Result<Vec<FitOutcome>> {
    let wards = load_wards(config)?;
    fit_wards(config, &wards, &config.run.models.fit, &config.run.output_dir, jobs)
}

/// One row of the DIC table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DicRow {
    pub ward: String,
    /// DIC₆ per model in `models` order; `None` when the model was not fitted.
    pub dic: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssessOutcome {
    pub reports: Vec<AssessmentReport>,
    pub dic_table: Vec<DicRow>,
    pub pooled: Vec<(ModelKind, nosocomial_core::assess::PooledEstimate)>,
}

fn assess_one(config: &LoadedConfig, runs: &Path, ward: &WardData, model: ModelKind) -> Result<AssessmentReport> {
    let paths = RunPaths::new(runs, &ward.ward_id, model);
    if !paths.manifest().exists() {
        return Err(CommandError::Missing(format!("no fit for {}/{} under {}", ward.ward_id, model.name(), runs.display())));
    }
    let (manifest, samples) = formats::read_fit(&paths, ward)?;
    if samples.snapshots.is_empty() {
        return Err(CommandError::Missing(format!(
            "{}/{}: the fit stored no augmentation snapshots; refit with sampler.snapshot_stride > 0",
            ward.ward_id,
            model.name()
        )));
    }
    let predictive = config.predictive(manifest.seed);
    let label = format!("{}/{}", ward.ward_id, model.name());
    let report = assess_fit(ward, &samples, &manifest.sampler, &config.dic(), &predictive, config.run.assess.prevalence_block)
        .map_err(model_err(label.clone()))?;
    formats::write_report(&paths.dir, &report, &samples.snapshots, ward, &samples)?;
    log::info!("{label}: DIC6 {:.2}, PPP {:.3}", report.dic.dic6, report.ppp.p_value);
    Ok(report)
}

/// Assesses every fit under `runs` and writes the cross-ward tables there.
pub fn assess_wards(config: &LoadedConfig, wards: &[WardData], models: &[ModelKind], runs: &Path, jobs: usize) -> Result<AssessOutcome> {
    let pairs: Vec<(&WardData, ModelKind)> = wards.iter().flat_map(|w| models.iter().map(move |&m| (w, m))).collect();
    let results: Vec<Result<AssessmentReport>> =
        pool(jobs)?.install(|| pairs.par_iter().map(|&(w, m)| assess_one(config, runs, w, m)).collect());
    if let Some(Err(e)) = results.iter().find(|r| matches!(r, Err(CommandError::Missing(_)))) {
        return Err(CommandError::Missing(e.to_string()));
    }
    let reports = collect_jobs(results, pairs.iter().map(|(w, m)| format!("{}/{}", w.ward_id, m.name())))?;

    let dic_table: Vec<DicRow> = wards
        .iter()
        .map(|w| DicRow {
            ward: w.ward_id.clone(),
            dic: models
                .iter()
                .map(|m| reports.iter().find(|r| r.ward_id == w.ward_id && r.model == *m).map(|r| r.dic.dic6))
                .collect(),
        })
        .collect();
    let mut header = vec!["ward"];
    header.extend(models.iter().map(|m| m.name()));
    header.push("best");
    let rows = dic_table
        .iter()
        .map(|r| {
            let mut row = vec![r.ward.clone()];
            row.extend(r.dic.iter().map(|d| d.map_or(String::new(), |d| d.to_string())));
            row.push(best_model(models, &r.dic).map_or(String::new(), |m| m.name().to_string()));
            row
        })
        .collect();
    formats::write_table(&runs.join("dic_table.csv"), &header, rows)?;

    let mut pooled = Vec::new();
    for &m in models {
        let est: Vec<(f64, f64)> = reports
            .iter()
            .filter(|r| r.model == m)
            .map(|r| (r.efficacy.log_ratio.mean, r.efficacy.log_ratio.variance))
            .collect();
        if est.is_empty() {
            continue;
        }
        match pool_efficacy(&est) {
            Ok(p) => pooled.push((m, p)),
            Err(e) => log::warn!("{}: efficacy not pooled: {e}", m.name()),
        }
    }
    let rows = pooled
        .iter()
        .map(|(m, p)| {
            vec![
                m.name().to_string(),
                p.estimate.to_string(),
                p.variance.to_string(),
                p.lower.to_string(),
                p.upper.to_string(),
                p.estimate.exp().to_string(),
                p.lower.exp().to_string(),
                p.upper.exp().to_string(),
            ]
        })
        .collect();
    formats::write_table(
        &runs.join("pooled_efficacy.csv"),
        &["model", "log_ratio", "variance", "log_lower", "log_upper", "ratio", "ratio_lower", "ratio_upper"],
        rows,
    )?;
    Ok(AssessOutcome { reports, dic_table, pooled })
}

/// Model with the smallest DIC₆ in a row.
pub fn best_model(models: &[ModelKind], dic: &[Option<f64>]) -> Option<ModelKind> {
    models
        .iter()
        .zip(dic)
        .filter_map(|(m, d)| d.map(|d| (*m, d)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(m, _)| m)
}

pub fn cmd_assess(config: &LoadedConfig, runs: &Path, jobs: usize) -> Result<AssessOutcome> {
    if !runs.is_dir() {
        return Err(CommandError::Missing(format!("runs directory {} does not exist", runs.display())));
    }
    let wards = load_wards(config)?;
    assess_wards(config, &wards, &config.run.models.fit, runs, jobs)
}

fn synthetic_wards(config: &LoadedConfig) -> Result<Vec<SyntheticWard>> {
    let s = config
        .run
        .synthetic
        .as_ref()
        .ok_or_else(|| CommandError::Config(ConfigError::Invalid("a [synthetic] section is required".into())))?;
    (0..s.wards)
        .map(|i| generate_synthetic_ward(&s.ward_config(config.run.seed, i)).map_err(model_err(ward_name(i))))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct SimulateManifest<'a> {
    artifact: &'a str,
    version: &'a str,
    seed: u64,
    wards: Vec<String>,
    config: &'a toml::Table,
}

/// Writes each synthetic ward to `out/<ward>/` with its truth file and prints Table 1 statistics.
pub fn cmd_simulate(config: &LoadedConfig, out: &Path) -> Result<Vec<SyntheticWard>> {
    let wards = synthetic_wards(config)?;
    let start = config.run.synthetic.as_ref().map(|s| s.start).expect("checked by synthetic_wards");
    for w in &wards {
        let dir = out.join(&w.ward.ward_id);
        write_ward_files(&w.ward, start, &dir)?;
        formats::write_atomic(&dir.join("truth.csv"), &formats::truth_csv(&w.ward, &w.truth))?;
    }
    let summaries: Vec<(String, WardSummary)> = wards.iter().map(|w| (w.ward.ward_id.clone(), w.ward.summary())).collect();
    formats::write_table(&out.join("summary.csv"), &SUMMARY_HEADER, summaries.iter().map(|(n, s)| summary_row(n, s)).collect())?;
    formats::write_json(
        &out.join("manifest.json"),
        &SimulateManifest {
            artifact: ARTIFACT,
            version: VERSION,
            seed: config.run.seed,
            wards: wards.iter().map(|w| w.ward.ward_id.clone()).collect(),
            config: &config.raw,
        },
    )?;
    println!("{}", summary_table(&summaries));
    Ok(wards)
}

const SUMMARY_HEADER: [&str; 12] = [
    "ward",
    "patients",
    "persons",
    "los_mean",
    "los_sd",
    "percent_in_precautions",
    "tests_mean",
    "tests_sd",
    "positives_mean",
    "positives_sd",
    "detected",
    "readmissions",
];

fn summary_row(name: &str, s: &WardSummary) -> Vec<String> {
    vec![
        name.to_string(),
        s.patients.to_string(),
        s.persons.to_string(),
        s.los_mean.to_string(),
        s.los_sd.to_string(),
        s.percent_in_precautions.to_string(),
        s.tests_mean.to_string(),
        s.tests_sd.to_string(),
        s.positives_mean.to_string(),
        s.positives_sd.to_string(),
        s.detected.to_string(),
        s.readmissions.to_string(),
    ]
}

/// Per-ward summary statistics laid out as in the usual descriptive table.
pub fn summary_table(rows: &[(String, WardSummary)]) -> String {
    let mut out = format!(
        "{:<10} {:>8} {:>8} {:>13} {:>12} {:>13} {:>15} {:>9} {:>8}\n",
        "ward", "patients", "persons", "LOS mean(SD)", "% isolated", "tests mean(SD)", "positives mean(SD)", "detected", "readmits"
    );
    for (name, s) in rows {
        out.push_str(&format!(
            "{:<10} {:>8} {:>8} {:>13} {:>12.1} {:>13} {:>15} {:>9} {:>8}\n",
            name,
            s.patients,
            s.persons,
            format!("{:.1}({:.1})", s.los_mean, s.los_sd),
            s.percent_in_precautions,
            format!("{:.1}({:.1})", s.tests_mean, s.tests_sd),
            format!("{:.2}({:.2})", s.positives_mean, s.positives_sd),
            s.detected,
            s.readmissions
        ));
    }
    out
}

/// Coverage of the truth by one fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    pub ward: String,
    pub model: ModelKind,
    pub truth: [f64; 5],
    pub summaries: Vec<PosteriorSummary>,
    pub covered: [bool; 5],
}

pub const PARAMETERS: [&str; 5] = ["p", "phi", "beta0", "beta1", "beta2"];

/// Posterior summary of each θ component from a fit.
pub fn parameter_summaries(samples: &PosteriorSamples) -> std::result::Result<Vec<PosteriorSummary>, nosocomial_core::Error> {
    (0..5).map(|k| PosteriorSummary::from_values(&samples.component(k))).collect()
}

/// Simulates the synthetic wards, fits each configured model and tabulates
/// credible-interval coverage of the generating parameters.
pub fn cmd_recover(config: &LoadedConfig, jobs: usize) -> Result<Vec<CoverageRow>> {
    let root = config.run.output_dir.join("recover");
    let synthetic = synthetic_wards(config)?;
    let wards: Vec<WardData> = synthetic.iter().map(|s| s.ward.clone()).collect();
    let fits = fit_wards(config, &wards, &config.run.models.fit, &root, jobs)?;
    let mut rows = Vec::with_capacity(fits.len());
    for f in &fits {
        let truth = synthetic.iter().find(|s| s.ward.ward_id == f.ward).expect("fitted ward exists").theta;
        let truth = [truth.p, truth.phi, truth.beta0, truth.beta1, truth.beta2];
        let summaries = parameter_summaries(&f.samples).map_err(model_err(format!("{}/{}", f.ward, f.model.name())))?;
        let covered = std::array::from_fn(|k| summaries[k].covers(truth[k]));
        rows.push(CoverageRow { ward: f.ward.clone(), model: f.model, truth, summaries, covered });
    }
    for s in &synthetic {
        formats::write_atomic(&root.join(&s.ward.ward_id).join("truth.csv"), &formats::truth_csv(&s.ward, &s.truth))?;
    }
    let mut header = vec!["ward".to_string(), "model".to_string()];
    for p in PARAMETERS {
        for suffix in ["truth", "mean", "lower", "upper", "covered"] {
            header.push(format!("{p}_{suffix}"));
        }
    }
    let table = rows
        .iter()
        .map(|r| {
            let mut row = vec![r.ward.clone(), r.model.name().to_string()];
            for k in 0..5 {
                let s = &r.summaries[k];
                row.extend([r.truth[k], s.mean, s.lower, s.upper].map(|v| v.to_string()));
                row.push(r.covered[k].to_string());
            }
            row
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    formats::write_table(&root.join("coverage.csv"), &header_refs, table)?;
    println!("{}", coverage_table(&rows));
    Ok(rows)
}

pub fn coverage_table(rows: &[CoverageRow]) -> String {
    let mut out = format!("{:<6} {:<14}", "ward", "model");
    for p in PARAMETERS {
        out.push_str(&format!(" {p:>28}"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{:<6} {:<14}", r.ward, r.model.name()));
        for k in 0..5 {
            let s = &r.summaries[k];
            let mark = if r.covered[k] { ' ' } else { '*' };
            out.push_str(&format!(" {:>27}{mark}", format!("{:.4} [{:.4}, {:.4}]", s.mean, s.lower, s.upper)));
        }
        out.push('\n');
    }
    for k in 0..5 {
        let n = rows.iter().filter(|r| r.covered[k]).count();
        out.push_str(&format!("{}: {n}/{} intervals cover the truth\n", PARAMETERS[k], rows.len()));
    }
    out
}

/// Directory where `fit` writes and `assess` reads by default.
pub fn default_runs_dir(config: &LoadedConfig) -> PathBuf {
    config.run.output_dir.clone()
}
