//! Experiment runner behind the `dfchain` binary: configuration, presets,
//! and the writers for `meta.json`, `zmap.csv`, `scalars.csv`,
//! `fragment.json` and sweep manifests.

pub mod config;
pub mod output;
pub mod presets;

use std::fs;
use std::path::{Path, PathBuf};

use dfchain::evolve::SEED_DERIVATION;
use dfchain::fragmentation::{describe, Label, ScalingTable};
use dfchain::{
    build_adjacency, components, ensemble_average_seeded, propagate, subspace_scaling, verify_eq10, Boundary,
    ModelKind, ModelSpec, Period,
};
use serde::Serialize;

use config::{initial_state, parse_observables, ExperimentConfig, NoiseConfig};
use output::{ScalarColumn, FRAGMENT_FILE, MANIFEST_FILE, META_FILE, SCALARS_FILE, ZMAP_FILE};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] dfchain::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    /// Process exit status: 2 invalid config, 3 resource limit, 4 numerical failure, 1 i/o.
    pub fn exit_code(&self) -> i32 {
        use dfchain::Error as E;
        match self {
            CliError::Config(_) | CliError::Core(E::InvalidArgument(_)) => 2,
            CliError::Core(E::ResourceLimit(_)) => 3,
            CliError::Core(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Serialize)]
struct Meta<'a> {
    version: &'a str,
    seed_derivation: &'a str,
    config: &'a ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    trajectory_seeds: Option<Vec<u64>>,
    files: Vec<&'a str>,
}

/// What a run produced, for console reporting.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub num_times: usize,
    pub trajectories: usize,
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Run one (possibly noise-averaged) evolution and write its outputs.
pub fn run_evolve(cfg: &ExperimentConfig) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    let l = cfg.model.num_sites;
    let psi = initial_state(&cfg.initial_state, l)?;
    let observables = parse_observables(&cfg.observables, l)?;

    let (times, z, scalars, seeds) = match &cfg.noise {
        None => {
            let tr = propagate(&psi, &cfg.model, &cfg.evolution, &observables)?;
            let zeros = vec![0.0; tr.times.len()];
            let scalars: Vec<(String, Vec<f64>, Vec<f64>)> =
                tr.scalars.into_iter().map(|s| (s.name, s.values, zeros.clone())).collect();
            (tr.times, tr.z_profile, scalars, None)
        }
        Some(noise) => {
            let seeds = noise.trajectory_seeds(cfg.master_seed);
            let schedule = noise.schedule(cfg.master_seed);
            let ens = ensemble_average_seeded(&psi, &cfg.model, &cfg.evolution, &schedule, &seeds, &observables)?;
            let scalars = ens.scalars.into_iter().map(|s| (s.name, s.mean, s.stderr)).collect();
            (ens.times, ens.z_mean, scalars, Some(seeds))
        }
    };

    let dir = &cfg.output_dir;
    create_dir(dir)?;
    let mut written = Vec::new();
    if !z.is_empty() {
        output::write_zmap(&dir.join(ZMAP_FILE), &times, &z)?;
        written.push(ZMAP_FILE);
    }
    if !scalars.is_empty() {
        let columns: Vec<ScalarColumn<'_>> = scalars
            .iter()
            .map(|(name, values, stderr)| ScalarColumn { name, values, stderr })
            .collect();
        output::write_scalars(&dir.join(SCALARS_FILE), &times, &columns)?;
        written.push(SCALARS_FILE);
    }
    let trajectories = seeds.as_ref().map_or(1, Vec::len);
    let meta = Meta {
        version: VERSION,
        seed_derivation: SEED_DERIVATION,
        config: cfg,
        trajectory_seeds: seeds,
        files: written.clone(),
    };
    output::write_json(&dir.join(META_FILE), &meta)?;
    written.push(META_FILE);
    Ok(RunSummary {
        dir: dir.clone(),
        files: written.iter().map(|f| dir.join(f)).collect(),
        num_times: times.len(),
        trajectories,
    })
}

/// Directory name of a sweep point.
pub fn point_dir_name(period: Period) -> String {
    format!("tx-{period}")
}

#[derive(Serialize)]
struct ManifestPoint {
    index: usize,
    period: Period,
    dir: String,
    trajectory_offset: u64,
    seeds: Vec<u64>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    seed_derivation: &'a str,
    config: &'a ExperimentConfig,
    points: Vec<ManifestPoint>,
}

/// The config of sweep point `index`: its own period and a disjoint block
/// of trajectory seeds.
pub fn sweep_point(cfg: &ExperimentConfig, index: usize) -> Result<ExperimentConfig, CliError> {
    let periods = cfg
        .sweep_periods
        .as_ref()
        .ok_or_else(|| CliError::Config("a sweep needs a list of periods".into()))?;
    let period = *periods
        .get(index)
        .ok_or_else(|| CliError::Config(format!("sweep has no point {index}")))?;
    let base = cfg.noise.unwrap_or_default();
    let mut point = cfg.clone();
    point.sweep_periods = None;
    point.noise = Some(NoiseConfig {
        period,
        trajectory_offset: (index as u64).wrapping_mul(base.num_samples as u64),
        ..base
    });
    point.output_dir = cfg.output_dir.join(point_dir_name(period));
    Ok(point)
}

/// Run every sweep point and write a manifest of the seeds used.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<RunSummary>, CliError> {
    cfg.validate()?;
    let n = cfg.sweep_periods.as_ref().map_or(0, Vec::len);
    if n == 0 {
        return Err(CliError::Config("a sweep needs a list of periods".into()));
    }
    let mut summaries = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    for index in 0..n {
        let point = sweep_point(cfg, index)?;
        let noise = point.noise.expect("sweep points carry noise");
        summaries.push(run_evolve(&point)?);
        points.push(ManifestPoint {
            index,
            period: noise.period,
            dir: point_dir_name(noise.period),
            trajectory_offset: noise.trajectory_offset,
            seeds: noise.trajectory_seeds(cfg.master_seed),
        });
    }
    let manifest = Manifest { version: VERSION, seed_derivation: SEED_DERIVATION, config: cfg, points };
    create_dir(&cfg.output_dir)?;
    output::write_json(&cfg.output_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(summaries)
}

#[derive(Debug, Clone, Serialize)]
pub struct Representative {
    pub index: usize,
    pub config: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_sites: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentEntry {
    pub label: Label,
    pub size: usize,
    pub representative: Representative,
    pub by_weight: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FragmentReport {
    pub version: &'static str,
    pub model: ModelSpec,
    pub components: Vec<ComponentEntry>,
    pub frozen_count: usize,
    pub non_singleton_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingTable>,
}

/// Sizes of a scaling range that the model accepts (periodic DFM needs even `L`).
pub fn admissible_sizes(template: &ModelSpec, sizes: &[usize]) -> Vec<usize> {
    let even_only = template.kind == ModelKind::Dfm && template.boundary == Boundary::Periodic;
    sizes.iter().copied().filter(|l| !even_only || l % 2 == 0).collect()
}

/// Enumerate the sectors of `spec` and optionally tabulate them over `range`.
pub fn fragment_report(spec: &ModelSpec, range: Option<&[usize]>) -> Result<FragmentReport, CliError> {
    spec.validate()?;
    let report = components(&build_adjacency(spec)?);
    let entries = report
        .components
        .iter()
        .map(|c| {
            let (config, group_sites) = describe(c.representative, spec.num_sites);
            ComponentEntry {
                label: c.label,
                size: c.size,
                representative: Representative { index: c.representative, config, group_sites },
                by_weight: c.by_weight.clone(),
            }
        })
        .collect();
    let scaling = match range {
        Some(sizes) => Some(subspace_scaling(spec, &admissible_sizes(spec, sizes))?),
        None => None,
    };
    Ok(FragmentReport {
        version: VERSION,
        model: *spec,
        components: entries,
        frozen_count: report.frozen_count,
        non_singleton_count: report.non_singleton_count(),
        scaling,
    })
}

pub fn run_fragment(spec: &ModelSpec, range: Option<&[usize]>, out: &Path) -> Result<FragmentReport, CliError> {
    let report = fragment_report(spec, range)?;
    create_dir(out)?;
    output::write_json(&out.join(FRAGMENT_FILE), &report)?;
    Ok(report)
}

/// Residual of the squared-triangle identity, and whether it is within tolerance.
pub fn check_eq10() -> (f64, bool) {
    let check = verify_eq10();
    (check.residual, check.holds)
}
