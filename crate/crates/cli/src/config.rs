//! Experiment configuration: the JSON document, its defaults, and the
//! parsers for initial-state and observable strings.

use std::path::PathBuf;

use dfchain::evolve::{DEFAULT_DT, DEFAULT_TOLERANCE};
use dfchain::state::{parse_config, sublattice_mask};
use dfchain::{
    bell_state, derive_seed, ghz_state, product_state, Boundary, EvolutionParams, KickOperator, ModelKind, ModelSpec,
    NoiseSchedule, Observable, Period, State,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything needed to reproduce a run. Serialized verbatim into `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub initial_state: String,
    pub evolution: EvolutionParams,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    pub observables: Vec<String>,
    #[serde(default)]
    pub master_seed: u64,
    /// Kick periods of a sweep; unused by single runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_periods: Option<Vec<Period>>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub period: Period,
    #[serde(default = "default_operator")]
    pub operator: KickOperator,
    #[serde(default = "default_angle")]
    pub kick_angle: f64,
    #[serde(default = "default_samples")]
    pub num_samples: usize,
    /// Trajectory `k` uses seed `derive_seed(master_seed, trajectory_offset + k)`.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub trajectory_offset: u64,
}

fn is_zero(x: &u64) -> bool {
    *x == 0
}

fn default_operator() -> KickOperator {
    KickOperator::FlipX
}

fn default_angle() -> f64 {
    std::f64::consts::FRAC_PI_2
}

fn default_samples() -> usize {
    1
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            period: Period::Infinite,
            operator: default_operator(),
            kick_angle: default_angle(),
            num_samples: default_samples(),
            trajectory_offset: 0,
        }
    }
}

impl NoiseConfig {
    pub fn schedule(&self, master_seed: u64) -> NoiseSchedule {
        NoiseSchedule {
            period: self.period,
            operator: self.operator,
            kick_angle: self.kick_angle,
            seed: master_seed,
            num_samples: self.num_samples,
        }
    }

    pub fn trajectory_seeds(&self, master_seed: u64) -> Vec<u64> {
        (0..self.num_samples as u64)
            .map(|k| derive_seed(master_seed, self.trajectory_offset.wrapping_add(k)))
            .collect()
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::dfm(8),
            initial_state: "bell".into(),
            evolution: EvolutionParams::new(10.0, DEFAULT_DT).with_tolerance(DEFAULT_TOLERANCE),
            noise: None,
            observables: vec!["z-profile".into()],
            master_seed: 0,
            sweep_periods: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Command-line values that override a config file. `None` leaves the
/// file (or default) value in place.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub model: Option<ModelKind>,
    pub size: Option<usize>,
    pub boundary: Option<Boundary>,
    pub coupling: Option<f64>,
    pub init: Option<String>,
    pub t_max: Option<f64>,
    pub dt: Option<f64>,
    pub tolerance: Option<f64>,
    pub noise_period: Option<Period>,
    pub noise_op: Option<KickOperator>,
    pub kick_angle: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub observables: Option<Vec<String>>,
    pub periods: Option<Vec<Period>>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Read a config file. A `meta.json` written by an earlier run is accepted too.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("config is not valid JSON: {e}")))?;
        let value = match value.get("config") {
            Some(inner) if value.get("version").is_some() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(value).map_err(|e| CliError::Config(format!("bad config: {e}")))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(kind) = o.model {
            if kind != self.model.kind {
                self.model = ModelSpec { kind, boundary: kind.default_boundary(), ..self.model };
            }
        }
        if let Some(l) = o.size {
            self.model.num_sites = l;
        }
        if let Some(b) = o.boundary {
            self.model.boundary = b;
        }
        if let Some(c) = o.coupling {
            self.model.coupling = c;
        }
        if let Some(s) = &o.init {
            self.initial_state = s.clone();
        }
        if let Some(t) = o.t_max {
            self.evolution.t_max = t;
        }
        if let Some(dt) = o.dt {
            self.evolution.dt = dt;
        }
        if let Some(tol) = o.tolerance {
            self.evolution.tolerance = tol;
        }
        let touches_noise =
            o.noise_period.is_some() || o.noise_op.is_some() || o.kick_angle.is_some() || o.samples.is_some();
        if touches_noise {
            let noise = self.noise.get_or_insert_with(NoiseConfig::default);
            if let Some(p) = o.noise_period {
                noise.period = p;
            }
            if let Some(op) = o.noise_op {
                noise.operator = op;
            }
            if let Some(a) = o.kick_angle {
                noise.kick_angle = a;
            }
            if let Some(n) = o.samples {
                noise.num_samples = n;
            }
        }
        if let Some(seed) = o.seed {
            self.master_seed = seed;
        }
        if let Some(obs) = &o.observables {
            self.observables = obs.clone();
        }
        if let Some(p) = &o.periods {
            self.sweep_periods = Some(p.clone());
        }
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
    }

    /// Check everything that can be checked without running.
    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        self.evolution.validate()?;
        if let Some(noise) = &self.noise {
            noise.schedule(self.master_seed).validate()?;
        }
        initial_state(&self.initial_state, self.model.num_sites)?;
        parse_observables(&self.observables, self.model.num_sites)?;
        if let Some(periods) = &self.sweep_periods {
            if periods.is_empty() {
                return Err(CliError::Config("a sweep needs at least one period".into()));
            }
            let names: Vec<String> = periods.iter().map(|p| p.to_string()).collect();
            for (k, n) in names.iter().enumerate() {
                if names[..k].contains(n) {
                    return Err(CliError::Config(format!("period {n} listed twice")));
                }
            }
        }
        Ok(())
    }
}

fn site_list(s: &str) -> Result<Vec<usize>, CliError> {
    s.split([',', '-'])
        .map(|x| x.trim().parse::<usize>().map_err(|_| CliError::Config(format!("bad site list {s:?}"))))
        .collect()
}

/// Build an initial state from its name.
///
/// Accepted forms: `all-down`, `neel-l` (`↑↓↑↓…`), `neel-r` (`↓↑↓↑…`),
/// `single-up@i`, `double-up@i` (sites `i, i+1`), `double-up@i,j`, `bell`,
/// `ghz`, and an explicit configuration such as `0101` or `↓↑↓↑`, site 1 first.
pub fn initial_state(name: &str, num_sites: usize) -> Result<State, CliError> {
    let lower = name.trim().to_ascii_lowercase();
    let ups = |sites: &[usize]| -> Result<State, CliError> {
        let mut index = 0usize;
        for &s in sites {
            if s == 0 || s > num_sites {
                return Err(CliError::Config(format!("site {s} outside 1..={num_sites} in {name:?}")));
            }
            if index & (1 << (s - 1)) != 0 {
                return Err(CliError::Config(format!("site {s} repeated in {name:?}")));
            }
            index |= 1 << (s - 1);
        }
        Ok(State::basis(num_sites, index)?)
    };
    let state = match lower.as_str() {
        "all-down" => ups(&[])?,
        "neel-l" => State::basis(num_sites, sublattice_mask(num_sites, true))?,
        "neel-r" => State::basis(num_sites, sublattice_mask(num_sites, false))?,
        "bell" => bell_state(num_sites)?,
        "ghz" => ghz_state(num_sites)?,
        other => {
            if let Some(rest) = other.strip_prefix("single-up@") {
                let sites = site_list(rest)?;
                if sites.len() != 1 {
                    return Err(CliError::Config(format!("{name:?} needs exactly one site")));
                }
                ups(&sites)?
            } else if let Some(rest) = other.strip_prefix("double-up@") {
                let mut sites = site_list(rest)?;
                if sites.len() == 1 {
                    sites.push(sites[0] + 1);
                }
                if sites.len() != 2 {
                    return Err(CliError::Config(format!("{name:?} needs one or two sites")));
                }
                ups(&sites)?
            } else {
                let config = parse_config(name)
                    .map_err(|_| CliError::Config(format!("unknown initial state {name:?}")))?;
                product_state(num_sites, &config)?
            }
        }
    };
    Ok(state)
}

/// Parse observable names: `z-profile`, `concurrence:i-j`, `fidelity:<state>`
/// (any initial-state name), and `renyi2:even`, `renyi2:odd` or `renyi2:i-j-…`.
pub fn parse_observables(names: &[String], num_sites: usize) -> Result<Vec<Observable<f64>>, CliError> {
    let mut out = Vec::with_capacity(names.len());
    for raw in names {
        let name = raw.trim();
        let (head, arg) = match name.split_once(':') {
            Some((h, a)) => (h.to_ascii_lowercase(), Some(a)),
            None => (name.to_ascii_lowercase(), None),
        };
        let check_sites = |sites: &[usize]| {
            if sites.iter().any(|&s| s == 0 || s > num_sites) {
                return Err(CliError::Config(format!("{name:?} names a site outside 1..={num_sites}")));
            }
            Ok(())
        };
        let obs = match (head.as_str(), arg) {
            ("z-profile", None) => Observable::ZProfile,
            ("concurrence", Some(a)) => {
                let sites = site_list(a)?;
                check_sites(&sites)?;
                match sites[..] {
                    [i, j] if i != j => Observable::Concurrence(i, j),
                    _ => return Err(CliError::Config(format!("{name:?} needs two distinct sites"))),
                }
            }
            ("fidelity", Some(a)) => Observable::Fidelity {
                label: a.to_string(),
                reference: initial_state(a, num_sites)?,
            },
            ("renyi2", Some(a)) => {
                let sites: Vec<usize> = match a {
                    "even" => (2..=num_sites).step_by(2).collect(),
                    "odd" => (1..=num_sites).step_by(2).collect(),
                    list => site_list(list)?,
                };
                check_sites(&sites)?;
                Observable::Renyi2(sites)
            }
            _ => return Err(CliError::Config(format!("unknown observable {name:?}"))),
        };
        out.push(obs);
    }
    Ok(out)
}

/// Parse `a..b` (inclusive) or `a..b:step` into a list of sizes.
pub fn parse_size_range(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Config(format!("bad size range {s:?}, expected a..b or a..b:step"));
    let (range, step) = match s.split_once(':') {
        Some((r, st)) => (r, st.parse::<usize>().map_err(|_| bad())?),
        None => (s, 1),
    };
    let (a, b) = range.split_once("..").ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
    if step == 0 || a > b {
        return Err(bad());
    }
    Ok((a..=b).step_by(step).collect())
}

/// Parse a comma-separated list of periods, e.g. `0.5,1,inf`.
pub fn parse_periods(s: &str) -> Result<Vec<Period>, CliError> {
    s.split(',').map(|p| p.trim().parse::<Period>().map_err(CliError::from)).collect()
}
