//! Named experiment presets with full-scale defaults.

use std::path::PathBuf;

use dfchain::{Boundary, EvolutionParams, ModelKind, ModelSpec, Period};

use crate::config::{ExperimentConfig, NoiseConfig};
use crate::CliError;

pub const NAMES: [&str; 10] =
    ["fig2a", "fig2b", "fig2c", "fig3a", "fig3b", "fig3c", "fig3d", "fig3e", "fig4a", "fig4b"];

/// Kick periods of the fig4 sweeps.
pub fn fig4_periods() -> Vec<Period> {
    [0.5, 1.0, 2.0, 4.0, 8.0]
        .into_iter()
        .map(Period::Finite)
        .chain([Period::Infinite])
        .collect()
}

fn base(kind: ModelKind, l: usize, init: String, observable: String, t_max: f64, dt: f64) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelSpec::new(kind, l),
        initial_state: init,
        evolution: EvolutionParams::new(t_max, dt),
        noise: None,
        observables: vec![observable],
        master_seed: 0,
        sweep_periods: None,
        output_dir: PathBuf::from("out"),
    }
}

/// Build preset `name` at chain length `size` (or the preset default).
/// Returns the config; sweeps carry `sweep_periods`.
pub fn preset(name: &str, size: Option<usize>) -> Result<ExperimentConfig, CliError> {
    let key = name.to_ascii_lowercase();
    let default_size = if key.starts_with("fig2") { 24 } else { 8 };
    let l = size.unwrap_or(default_size);
    let mid = l / 2;
    let pair = format!("concurrence:{mid}-{}", mid + 1);
    let mut cfg = match key.as_str() {
        "fig2a" => base(ModelKind::Dfm, l, "neel-r".into(), "z-profile".into(), 40.0, 0.1),
        "fig2b" => base(ModelKind::Dfm, l, format!("single-up@{mid}"), "z-profile".into(), 40.0, 0.1),
        "fig2c" => base(ModelKind::Dfm, l, format!("double-up@{mid}"), "z-profile".into(), 40.0, 0.1),
        "fig3a" | "fig3b" => base(ModelKind::Dfm, l, "bell".into(), pair, 100.0, 0.05),
        "fig3c" => base(ModelKind::East, l, "bell".into(), pair, 100.0, 0.05),
        "fig3d" => base(ModelKind::Pxp, l, "bell".into(), pair, 100.0, 0.05),
        "fig3e" => base(ModelKind::Heisenberg, l, "bell".into(), pair, 100.0, 0.05),
        "fig4a" => base(ModelKind::Dfm, l, "ghz".into(), "fidelity:ghz".into(), 100.0, 0.05),
        "fig4b" => base(ModelKind::Dfm, l, "ghz".into(), "renyi2:even".into(), 100.0, 0.05),
        _ => {
            return Err(CliError::Config(format!(
                "unknown preset {name:?}; available: {}",
                NAMES.join(", ")
            )))
        }
    };
    if key == "fig3c" {
        cfg.model.boundary = Boundary::Open;
    }
    if key == "fig3b" {
        cfg.noise = Some(NoiseConfig { period: Period::Finite(1.0), num_samples: 1000, ..Default::default() });
    }
    if key.starts_with("fig4") {
        cfg.noise = Some(NoiseConfig { num_samples: 500, ..Default::default() });
        cfg.sweep_periods = Some(fig4_periods());
    }
    Ok(cfg)
}
