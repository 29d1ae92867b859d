//! Time evolution with optional periodic random single-site kicks, and
//! seeded ensemble averaging over kick trajectories.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::krylov::KrylovStepper;
use crate::measures;
use crate::models::{Hamiltonian, ModelSpec};
use crate::scalar::{cre, Real, C};
use crate::state::StateVector;

/// Default output sampling interval.
pub const DEFAULT_DT: f64 = 0.05;
/// Default global state-error target.
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
/// Human-readable description of [`derive_seed`], recorded in run metadata.
pub const SEED_DERIVATION: &str = "splitmix64(master + splitmix64(index)), wrapping u64 arithmetic";

/// Relative slack when matching sample and kick times on the grid.
const TIME_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionParams {
    pub t_max: f64,
    pub dt: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

impl EvolutionParams {
    pub fn new(t_max: f64, dt: f64) -> Self {
        Self { t_max, dt, tolerance: DEFAULT_TOLERANCE }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_max >= 0.0) || !self.t_max.is_finite() {
            return invalid(format!("t_max must be finite and non-negative, got {}", self.t_max));
        }
        if !(self.dt > 0.0) || (self.t_max > 0.0 && self.dt > self.t_max * (1.0 + TIME_SLACK)) {
            return invalid(format!("dt must satisfy 0 < dt <= t_max, got dt = {}", self.dt));
        }
        if !(self.tolerance > 0.0) {
            return invalid(format!("tolerance must be positive, got {}", self.tolerance));
        }
        Ok(())
    }

    /// Sampling grid `0, dt, 2 dt, ...` up to `t_max`.
    pub fn sample_times(&self) -> Vec<f64> {
        let n = (self.t_max / self.dt * (1.0 + TIME_SLACK)).floor() as usize;
        (0..=n).map(|k| k as f64 * self.dt).collect()
    }
}

/// Kick period `T_X`, possibly infinite (no kicks).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Period {
    Finite(f64),
    Infinite,
}

impl Period {
    pub fn is_infinite(self) -> bool {
        matches!(self, Period::Infinite)
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Period::Finite(p) => write!(f, "{p}"),
            Period::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Period {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Period::Infinite),
            other => {
                let p: f64 = other
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad noise period {s:?}")))?;
                if p.is_infinite() && p > 0.0 {
                    Ok(Period::Infinite)
                } else if p > 0.0 {
                    Ok(Period::Finite(p))
                } else {
                    invalid(format!("noise period must be positive, got {p}"))
                }
            }
        }
    }
}

impl Serialize for Period {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Period::Finite(p) => s.serialize_f64(*p),
            Period::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Period {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Num(p) => p.to_string().parse::<Period>(),
            Raw::Str(s) => s.parse::<Period>(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KickOperator {
    /// `exp(-iθ X_j)`.
    #[serde(rename = "x")]
    FlipX,
    /// Projection on spin-up at site `j`.
    #[serde(rename = "q")]
    ProjectQ,
    /// Projection on spin-down at site `j`.
    #[serde(rename = "p")]
    ProjectP,
}

impl std::str::FromStr for KickOperator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(KickOperator::FlipX),
            "q" => Ok(KickOperator::ProjectQ),
            "p" => Ok(KickOperator::ProjectP),
            other => invalid(format!("unknown kick operator {other:?}")),
        }
    }
}

/// Periodic random single-site kicks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub period: Period,
    pub operator: KickOperator,
    /// Rotation angle of [`KickOperator::FlipX`]; `π/2` is a spin flip up to phase.
    pub kick_angle: f64,
    pub seed: u64,
    pub num_samples: usize,
}

impl NoiseSchedule {
    pub fn flips(period: Period, seed: u64, num_samples: usize) -> Self {
        Self {
            period,
            operator: KickOperator::FlipX,
            kick_angle: std::f64::consts::FRAC_PI_2,
            seed,
            num_samples,
        }
    }

    pub fn noiseless() -> Self {
        Self::flips(Period::Infinite, 0, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if let Period::Finite(p) = self.period {
            if !(p > 0.0) || !p.is_finite() {
                return invalid(format!("noise period must be positive, got {p}"));
            }
        }
        if self.operator == KickOperator::FlipX
            && !(self.kick_angle > 0.0 && self.kick_angle <= std::f64::consts::PI)
        {
            return invalid(format!("kick angle must lie in (0, π], got {}", self.kick_angle));
        }
        if self.num_samples == 0 {
            return invalid("num_samples must be at least 1");
        }
        Ok(())
    }

    /// Kick times `n T_X`, `n = 1, 2, ...`, not beyond `t_max`.
    pub fn kick_times(&self, t_max: f64) -> Vec<f64> {
        match self.period {
            Period::Infinite => Vec::new(),
            Period::Finite(p) => {
                let n = (t_max / p * (1.0 + TIME_SLACK)).floor() as usize;
                (1..=n).map(|k| k as f64 * p).collect()
            }
        }
    }
}

fn splitmix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trajectory `index` under master seed `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(splitmix64(index)))
}

/// Quantity recorded at every sample time.
#[derive(Debug, Clone)]
pub enum Observable<T: Real> {
    /// `<Z_i>` at every site.
    ZProfile,
    Concurrence(usize, usize),
    Fidelity { label: String, reference: StateVector<T> },
    Renyi2(Vec<usize>),
}

impl<T: Real> Observable<T> {
    /// Column label used in scalar outputs; `None` for the z-profile.
    pub fn name(&self) -> Option<String> {
        let join = |s: &[usize]| s.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("-");
        match self {
            Observable::ZProfile => None,
            Observable::Concurrence(i, j) => Some(format!("concurrence:{i}-{j}")),
            Observable::Fidelity { label, .. } => Some(format!("fidelity:{label}")),
            Observable::Renyi2(sites) => Some(format!("renyi2:{}", join(sites))),
        }
    }

    fn scalar(&self, state: &StateVector<T>) -> Result<T> {
        match self {
            Observable::ZProfile => unreachable!("z-profile is not a scalar"),
            Observable::Concurrence(i, j) => measures::pair_concurrence(state, *i, *j),
            Observable::Fidelity { reference, .. } => measures::fidelity(state, reference),
            Observable::Renyi2(sites) => Ok(measures::renyi2(&state.reduce(sites)?)?.value),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSeries<T> {
    pub name: String,
    pub values: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KickEvent {
    pub time: f64,
    pub site: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<f64>,
    /// `z_profile[k][i - 1]` is `<Z_i>` at `times[k]`; empty unless requested.
    pub z_profile: Vec<Vec<T>>,
    pub scalars: Vec<ScalarSeries<T>>,
    pub kick_log: Vec<KickEvent>,
}

impl<T: Copy> Trajectory<T> {
    pub fn scalar(&self, name: &str) -> Option<&[T]> {
        self.scalars.iter().find(|s| s.name == name).map(|s| s.values.as_slice())
    }
}

/// Apply one kick to `state` at `site`.
///
/// Flips rotate by `exp(-iθX)`. Projections renormalize the surviving
/// component, or report [`Error::AnnihilatedState`] if nothing survives.
pub fn apply_kick<T: Real>(
    state: &StateVector<T>,
    site: usize,
    operator: KickOperator,
    kick_angle: f64,
) -> Result<StateVector<T>> {
    let mut out = state.clone();
    kick_in_place(&mut out, site, operator, kick_angle)?;
    Ok(out)
}

fn kick_in_place<T: Real>(state: &mut StateVector<T>, site: usize, operator: KickOperator, kick_angle: f64) -> Result<()> {
    if site == 0 || site > state.num_sites() {
        return invalid(format!("site {site} outside 1..={}", state.num_sites()));
    }
    let bit = 1usize << (site - 1);
    let amps = state.amplitudes_mut();
    match operator {
        KickOperator::FlipX => {
            let c = cre(T::lit(kick_angle.cos()));
            let s = C::new(T::zero(), -T::lit(kick_angle.sin()));
            for i in 0..amps.len() {
                if i & bit == 0 {
                    let (a, b) = (amps[i], amps[i | bit]);
                    amps[i] = c * a + s * b;
                    amps[i | bit] = c * b + s * a;
                }
            }
        }
        KickOperator::ProjectQ | KickOperator::ProjectP => {
            let keep_up = operator == KickOperator::ProjectQ;
            for (i, a) in amps.iter_mut().enumerate() {
                if (i & bit != 0) != keep_up {
                    *a = C::new(T::zero(), T::zero());
                }
            }
        }
    }
    let n = state.renormalize();
    if n <= T::lit(1e-12) {
        return Err(Error::AnnihilatedState { site });
    }
    Ok(())
}

/// Drive a single trajectory, calling `on_sample(k, t, state)` at each
/// grid time. Kicks scheduled at a sample time are applied before the
/// sample is taken.
pub fn run_trajectory<T, F>(
    initial: &StateVector<T>,
    ham: &Hamiltonian<T>,
    params: &EvolutionParams,
    schedule: Option<(&NoiseSchedule, u64)>,
    mut on_sample: F,
) -> Result<Vec<KickEvent>>
where
    T: Real,
    F: FnMut(usize, f64, &StateVector<T>) -> Result<()>,
{
    params.validate()?;
    if initial.num_sites() != ham.num_sites() {
        return invalid(format!(
            "initial state has {} sites, model has {}",
            initial.num_sites(),
            ham.num_sites()
        ));
    }
    let samples = params.sample_times();
    let (kicks, noise) = match schedule {
        Some((s, seed)) => {
            s.validate()?;
            (s.kick_times(params.t_max), Some((s, ChaCha8Rng::seed_from_u64(seed))))
        }
        None => (Vec::new(), None),
    };
    let mut rng = noise;
    let eps = TIME_SLACK * params.t_max.max(1.0);
    let mut stepper = KrylovStepper::new(T::lit(params.tolerance), T::lit(params.t_max));
    let mut state = initial.clone();
    let mut log = Vec::with_capacity(kicks.len());
    let mut now = 0.0;
    let mut ks = 0usize;
    // kick times are n T_X with n >= 1, so an initial sample always precedes them
    if samples[0] <= eps {
        on_sample(0, samples[0], &state)?;
        ks = 1;
    }
    let ends = kicks.iter().copied().map(Some).chain([None]);
    for kick in ends {
        let end = kick.unwrap_or(params.t_max).min(params.t_max);
        let first = ks;
        while ks < samples.len() && samples[ks] < end - eps {
            ks += 1;
        }
        if end > now {
            let offsets: Vec<T> = samples[first..ks].iter().map(|&t| T::lit(t - now)).collect();
            stepper.advance_sampled(ham, &mut state, T::lit(end - now), &offsets, |k, psi| {
                on_sample(first + k, samples[first + k], psi)
            })?;
            now = end;
        }
        if let Some(kick_time) = kick {
            let (sched, rng) = rng.as_mut().expect("kicks imply a schedule");
            let l = state.num_sites();
            let mut attempts = 0;
            loop {
                let site = rng.gen_range(1..=l);
                if sched.operator == KickOperator::FlipX {
                    kick_in_place(&mut state, site, sched.operator, sched.kick_angle)?;
                    log.push(KickEvent { time: kick_time, site });
                    break;
                }
                // projections may remove the state; redraw the site in that case
                let mut trial = state.clone();
                match kick_in_place(&mut trial, site, sched.operator, sched.kick_angle) {
                    Ok(()) => {
                        state = trial;
                        log.push(KickEvent { time: kick_time, site });
                        break;
                    }
                    Err(Error::AnnihilatedState { .. }) if attempts + 1 < 64 * l => attempts += 1,
                    Err(e) => return Err(e),
                }
            }
        }
        if ks < samples.len() && (samples[ks] - end).abs() <= eps {
            on_sample(ks, samples[ks], &state)?;
            ks += 1;
        }
    }
    debug_assert_eq!(ks, samples.len());
    Ok(log)
}

fn record<T: Real>(observables: &[Observable<T>], n_times: usize) -> (bool, Vec<ScalarSeries<T>>) {
    let z = observables.iter().any(|o| matches!(o, Observable::ZProfile));
    let scalars = observables
        .iter()
        .filter_map(|o| o.name())
        .map(|name| ScalarSeries { name, values: Vec::with_capacity(n_times) })
        .collect();
    (z, scalars)
}

fn propagate_inner<T: Real>(
    initial: &StateVector<T>,
    ham: &Hamiltonian<T>,
    params: &EvolutionParams,
    schedule: Option<(&NoiseSchedule, u64)>,
    observables: &[Observable<T>],
) -> Result<Trajectory<T>> {
    params.validate()?;
    let times = params.sample_times();
    let (want_z, mut scalars) = record(observables, times.len());
    let scalar_obs: Vec<&Observable<T>> = observables.iter().filter(|o| o.name().is_some()).collect();
    let mut z_profile = Vec::new();
    let kick_log = run_trajectory(initial, ham, params, schedule, |_, _, state| {
        if want_z {
            z_profile.push(state.z_profile());
        }
        for (series, obs) in scalars.iter_mut().zip(&scalar_obs) {
            series.values.push(obs.scalar(state)?);
        }
        Ok(())
    })?;
    Ok(Trajectory { times, z_profile, scalars, kick_log })
}

/// Noiseless evolution sampled on the `dt` grid.
pub fn propagate<T: Real>(
    initial: &StateVector<T>,
    spec: &ModelSpec,
    params: &EvolutionParams,
    observables: &[Observable<T>],
) -> Result<Trajectory<T>> {
    let ham = Hamiltonian::new(spec)?;
    propagate_inner(initial, &ham, params, None, observables)
}

/// Evolution with kicks at `n T_X`, sites drawn from a stream seeded by `seed`.
pub fn propagate_noisy<T: Real>(
    initial: &StateVector<T>,
    spec: &ModelSpec,
    params: &EvolutionParams,
    schedule: &NoiseSchedule,
    seed: u64,
    observables: &[Observable<T>],
) -> Result<Trajectory<T>> {
    let ham = Hamiltonian::new(spec)?;
    propagate_inner(initial, &ham, params, Some((schedule, seed)), observables)
}

/// Per-time mean and standard error of a scalar observable.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedSeries<T> {
    pub name: String,
    pub mean: Vec<T>,
    pub stderr: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult<T> {
    pub times: Vec<f64>,
    /// Mean and standard error of `<Z_i>`, indexed `[time][site - 1]`; empty unless requested.
    pub z_mean: Vec<Vec<T>>,
    pub z_stderr: Vec<Vec<T>>,
    pub scalars: Vec<AveragedSeries<T>>,
    /// Seed of every trajectory, in trajectory order.
    pub seeds: Vec<u64>,
    pub kicks_per_trajectory: Vec<usize>,
}

impl<T: Copy> EnsembleResult<T> {
    pub fn scalar(&self, name: &str) -> Option<&AveragedSeries<T>> {
        self.scalars.iter().find(|s| s.name == name)
    }
}

/// Welford accumulator; identical inputs give exactly zero spread.
#[derive(Clone, Copy)]
struct Welford<T> {
    n: usize,
    mean: T,
    m2: T,
}

impl<T: Real> Welford<T> {
    fn new() -> Self {
        Self { n: 0, mean: T::zero(), m2: T::zero() }
    }

    fn push(&mut self, x: T) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / T::from_usize(self.n).expect("count fits");
        self.m2 += delta * (x - self.mean);
    }

    fn stderr(&self) -> T {
        if self.n < 2 {
            return T::zero();
        }
        let n = T::from_usize(self.n).expect("count fits");
        (self.m2 / (n - T::one()) / n).sqrt()
    }
}

/// Mean and standard error over `schedule.num_samples` trajectories.
///
/// Trajectory `k` uses `derive_seed(schedule.seed, k)`. Trajectories run in
/// parallel and are reduced in index order, so the result does not depend on
/// the thread count.
pub fn ensemble_average<T: Real>(
    initial: &StateVector<T>,
    spec: &ModelSpec,
    params: &EvolutionParams,
    schedule: &NoiseSchedule,
    observables: &[Observable<T>],
) -> Result<EnsembleResult<T>> {
    schedule.validate()?;
    let seeds: Vec<u64> = (0..schedule.num_samples as u64).map(|k| derive_seed(schedule.seed, k)).collect();
    ensemble_average_seeded(initial, spec, params, schedule, &seeds, observables)
}

/// [`ensemble_average`] with explicit per-trajectory seeds; `schedule.seed`
/// and `schedule.num_samples` are ignored.
pub fn ensemble_average_seeded<T: Real>(
    initial: &StateVector<T>,
    spec: &ModelSpec,
    params: &EvolutionParams,
    schedule: &NoiseSchedule,
    seeds: &[u64],
    observables: &[Observable<T>],
) -> Result<EnsembleResult<T>> {
    if seeds.is_empty() {
        return invalid("an ensemble needs at least one seed");
    }
    NoiseSchedule { num_samples: seeds.len(), ..*schedule }.validate()?;
    let ham = Hamiltonian::new(spec)?;
    let n = seeds.len();
    let seeds = seeds.to_vec();
    let trajectories: Vec<Trajectory<T>> = if schedule.period.is_infinite() {
        // every trajectory is the same deterministic evolution
        let one = propagate_inner(initial, &ham, params, None, observables)?;
        vec![one; n]
    } else {
        seeds
            .par_iter()
            .map(|&seed| propagate_inner(initial, &ham, params, Some((schedule, seed)), observables))
            .collect::<Result<Vec<_>>>()?
    };
    let times = trajectories[0].times.clone();
    let nt = times.len();

    let mut z_mean = Vec::new();
    let mut z_stderr = Vec::new();
    if !trajectories[0].z_profile.is_empty() {
        let l = initial.num_sites();
        for k in 0..nt {
            let mut acc = vec![Welford::new(); l];
            for tr in &trajectories {
                for (a, &z) in acc.iter_mut().zip(&tr.z_profile[k]) {
                    a.push(z);
                }
            }
            z_mean.push(acc.iter().map(|a| a.mean).collect());
            z_stderr.push(acc.iter().map(|a| a.stderr()).collect());
        }
    }
    let scalars = trajectories[0]
        .scalars
        .iter()
        .enumerate()
        .map(|(s, series)| {
            let mut mean = Vec::with_capacity(nt);
            let mut stderr = Vec::with_capacity(nt);
            for k in 0..nt {
                let mut acc = Welford::new();
                for tr in &trajectories {
                    acc.push(tr.scalars[s].values[k]);
                }
                mean.push(acc.mean);
                stderr.push(acc.stderr());
            }
            AveragedSeries { name: series.name.clone(), mean, stderr }
        })
        .collect();
    let kicks_per_trajectory = trajectories.iter().map(|t| t.kick_log.len()).collect();
    Ok(EnsembleResult { times, z_mean, z_stderr, scalars, seeds, kicks_per_trajectory })
}
