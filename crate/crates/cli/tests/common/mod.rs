//! Shared pieces of the acceptance suite and the golden-value checks: an
//! exact eigendecomposition oracle, series analysis helpers, and the frozen
//! golden values themselves.
#![allow(dead_code)]

use std::collections::BTreeSet;

use dfchain::measures::{local_maxima, periodicity_score};
use dfchain::{build_terms, ModelSpec, Observable, State, C};
use nalgebra::{DMatrix, DVector};

pub type C64 = C<f64>;

// ---------------------------------------------------------------------------
// Frozen golden values. `cargo test -p dfchain-cli --test goldens` recomputes
// the oracle-derived ones; the ensemble-derived ones are recomputed by the
// ignored test in the same file.

/// Thermal-spreading threshold: half the smallest per-site peak departure of
/// `<Z_i>` from -1 over `t <= 40`, DFM `L = 12`, `double-up@6`, exact oracle.
pub const SPREAD_DELTA: f64 = 0.395_254_4;

/// Revival thresholds: third-highest local maximum over `t in (0, 100]` of the
/// exact noiseless `L = 8` series, minus 0.01.
pub const REVIVAL_THRESHOLD_CONCURRENCE: f64 = 0.949_986_8;
pub const REVIVAL_THRESHOLD_FIDELITY: f64 = 0.987_464_4;

/// Periodicity-score ratios DFM / model of the exact `L = 8` concurrence series.
pub const PERIODICITY_FACTOR_EAST: f64 = 2.421_478_1;
pub const PERIODICITY_FACTOR_PXP: f64 = 2.689_751_4;
pub const PERIODICITY_FACTOR_HEISENBERG: f64 = 1.064_950_7;

/// First revival of the exact noiseless concurrence, in samples of `DT`.
pub const FIRST_REVIVAL_SAMPLES: usize = 66;

/// 1000-sample reference, `T_X = 1`: envelope at `t = 50` over its initial value.
pub const NOISE_ENVELOPE_RATIO_REF: f64 = 0.0;
/// Allowed rise between consecutive smoothed block maxima of a 200-sample
/// mean: three times the largest reference standard error, rescaled from
/// 1000 to 200 samples.
pub const NOISE_SMOOTH_TOLERANCE: f64 = 0.009_482_5;

/// Early-window linear-fit RMS residual bound for the `T_X = 8` entropy,
/// 1.5 times the 1000-sample reference value.
pub const LINEAR_FIT_BOUND: f64 = 0.053_211_4;
/// Reference RMS residuals over the same window (context only).
pub const LINEAR_FIT_REF_TX8: f64 = 0.035_474_3;
pub const LINEAR_FIT_REF_TX05: f64 = 0.092_263_5;

// ---------------------------------------------------------------------------
// Experiment constants shared by the suite and the reference runs.

pub const DT: f64 = 0.05;
pub const REVIVAL_T_MAX: f64 = 100.0;
pub const SPREAD_T_MAX: f64 = 40.0;
pub const SPREAD_DT: f64 = 0.1;
pub const NOISE_T_MAX: f64 = 100.0;
pub const NOISE_CHECK_TIME: f64 = 50.0;
pub const ENTROPY_T_MAX: f64 = 200.0;
pub const EARLY_WINDOW: (f64, f64) = (0.0, 32.0);
pub const PLATEAU_WINDOW: (f64, f64) = (150.0, 200.0);
pub const SUITE_SAMPLES: usize = 200;
pub const REFERENCE_SAMPLES: usize = 1000;
pub const SUITE_SEED: u64 = 1;
pub const REFERENCE_SEED: u64 = 1000;

// ---------------------------------------------------------------------------
// Exact oracle.

/// Exact propagator restricted to the basis states reachable from a set of
/// seeds, built from the local terms and diagonalized densely.
pub struct SectorOracle {
    num_sites: usize,
    indices: Vec<usize>,
    eigenvalues: Vec<f64>,
    vectors: DMatrix<C64>,
}

/// `H|a>` as a list of `(b, <b|H|a>)`, straight from the local term matrices.
fn column_from_terms(terms: &[dfchain::LocalTerm<f64>], a: usize) -> Vec<(usize, C64)> {
    let mut out = Vec::new();
    for term in terms {
        let local_in = term
            .support
            .iter()
            .enumerate()
            .fold(0, |acc, (q, &s)| acc | ((a >> (s - 1) & 1) << q));
        let cleared = term.support.iter().fold(a, |acc, &s| acc & !(1 << (s - 1)));
        for r in 0..term.matrix.nrows() {
            let v = term.matrix[(r, local_in)];
            if v.norm_sqr() == 0.0 {
                continue;
            }
            let b = term.support.iter().enumerate().fold(cleared, |acc, (q, &s)| acc | ((r >> q & 1) << (s - 1)));
            out.push((b, v));
        }
    }
    out
}

impl SectorOracle {
    pub fn new(spec: &ModelSpec, seeds: &[usize]) -> Self {
        let terms = build_terms::<f64>(spec).expect("valid model");
        let mut seen: BTreeSet<usize> = seeds.iter().copied().collect();
        let mut frontier: Vec<usize> = seeds.to_vec();
        while let Some(a) = frontier.pop() {
            for (b, _) in column_from_terms(&terms, a) {
                if seen.insert(b) {
                    frontier.push(b);
                }
            }
        }
        let indices: Vec<usize> = seen.into_iter().collect();
        let n = indices.len();
        let mut h = DMatrix::<C64>::zeros(n, n);
        for (c, &a) in indices.iter().enumerate() {
            for (b, v) in column_from_terms(&terms, a) {
                let r = indices.binary_search(&b).expect("sector is closed");
                h[(r, c)] += v;
            }
        }
        let eig = h.symmetric_eigen();
        Self {
            num_sites: spec.num_sites,
            indices,
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        }
    }

    pub fn for_state(spec: &ModelSpec, psi: &State) -> Self {
        let seeds: Vec<usize> = (0..psi.dim()).filter(|&i| psi.amplitudes()[i].norm_sqr() > 0.0).collect();
        Self::new(spec, &seeds)
    }

    pub fn sector_size(&self) -> usize {
        self.indices.len()
    }

    /// Evolve `psi` (which must live in the sector) to every time in `times`.
    pub fn evolve_all(&self, psi: &State, times: &[f64]) -> Vec<State> {
        let local = DVector::from_iterator(self.indices.len(), self.indices.iter().map(|&i| psi.amplitudes()[i]));
        let coeffs = self.vectors.adjoint() * local;
        times
            .iter()
            .map(|&t| {
                let phased = DVector::from_fn(coeffs.len(), |k, _| coeffs[k] * C64::from_polar(1.0, -self.eigenvalues[k] * t));
                let v = &self.vectors * phased;
                let mut full = vec![C64::new(0.0, 0.0); 1 << self.num_sites];
                for (k, &i) in self.indices.iter().enumerate() {
                    full[i] = v[k];
                }
                State::from_amplitudes(self.num_sites, full).expect("unit vector")
            })
            .collect()
    }
}

pub fn grid(t_max: f64, dt: f64) -> Vec<f64> {
    let n = (t_max / dt * (1.0 + 1e-9)).floor() as usize;
    (0..=n).map(|k| k as f64 * dt).collect()
}

/// Exact series of a scalar observable.
pub fn oracle_series(spec: &ModelSpec, psi: &State, obs: &Observable<f64>, t_max: f64, dt: f64) -> Vec<f64> {
    let oracle = SectorOracle::for_state(spec, psi);
    let times = grid(t_max, dt);
    oracle
        .evolve_all(psi, &times)
        .iter()
        .map(|s| match obs {
            Observable::Concurrence(i, j) => dfchain::measures::pair_concurrence(s, *i, *j).unwrap(),
            Observable::Fidelity { reference, .. } => dfchain::fidelity(s, reference).unwrap(),
            Observable::Renyi2(sites) => dfchain::renyi2(&s.reduce(sites).unwrap()).unwrap().value,
            Observable::ZProfile => unreachable!("scalar observables only"),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Series analysis.

/// Local maxima in `(0, t_max]` strictly above `threshold`, as times.
pub fn peaks_above(series: &[f64], dt: f64, threshold: f64) -> Vec<f64> {
    local_maxima(series)
        .into_iter()
        .filter(|&k| k > 0 && series[k] > threshold)
        .map(|k| k as f64 * dt)
        .collect()
}

/// Third-highest interior local maximum minus 0.01.
pub fn revival_threshold(series: &[f64]) -> f64 {
    let mut heights: Vec<f64> = local_maxima(series).into_iter().map(|k| series[k]).collect();
    heights.sort_by(|a, b| b.partial_cmp(a).unwrap());
    heights[2] - 0.01
}

/// Smallest gap between consecutive peaks, i.e. the fundamental revival spacing.
pub fn min_spacing(times: &[f64]) -> Option<f64> {
    times.windows(2).map(|w| w[1] - w[0]).reduce(f64::min)
}

/// First local maximum above 0.5, in samples.
pub fn first_revival(series: &[f64]) -> Option<usize> {
    local_maxima(series).into_iter().find(|&k| series[k] > 0.5)
}

pub fn periodicity_factor(reference: &[f64], other: &[f64]) -> f64 {
    periodicity_score(reference) / periodicity_score(other)
}

/// Maxima over consecutive non-overlapping blocks of `window` samples,
/// smoothed with a centred three-point average.
pub fn smoothed_block_maxima(series: &[f64], window: usize) -> Vec<f64> {
    let blocks: Vec<f64> = series.chunks(window).map(|c| c.iter().copied().fold(f64::MIN, f64::max)).collect();
    (0..blocks.len())
        .map(|j| {
            let lo = j.saturating_sub(1);
            let hi = (j + 1).min(blocks.len() - 1);
            blocks[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Largest rise between consecutive entries.
pub fn max_rise(seq: &[f64]) -> f64 {
    seq.windows(2).map(|w| w[1] - w[0]).fold(f64::MIN, f64::max)
}

/// RMS residual of a least-squares line through the points with `t` in `window`.
pub fn linear_fit_rms(times: &[f64], values: &[f64], window: (f64, f64)) -> f64 {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= window.0 - 1e-9 && **t <= window.1 + 1e-9)
        .map(|(t, v)| (*t, *v))
        .collect();
    let n = pts.len() as f64;
    let (mt, mv) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mt) * (p.1 - mv), a.1 + (p.0 - mt).powi(2)));
    let slope = sxy / sxx;
    let ss: f64 = pts.iter().map(|p| (p.1 - (mv + slope * (p.0 - mt))).powi(2)).sum();
    (ss / n).sqrt()
}

pub fn window_mean(times: &[f64], values: &[f64], window: (f64, f64)) -> f64 {
    let sel: Vec<f64> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= window.0 - 1e-9 && **t <= window.1 + 1e-9)
        .map(|(_, v)| *v)
        .collect();
    sel.iter().sum::<f64>() / sel.len() as f64
}

/// First time the series reaches `level`.
pub fn first_reach(times: &[f64], values: &[f64], level: f64) -> Option<f64> {
    times.iter().zip(values).find(|(_, v)| **v >= level).map(|(t, _)| *t)
}

/// Value at the sample closest to `t`.
pub fn value_at(times: &[f64], values: &[f64], t: f64) -> f64 {
    let k = times
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - t).abs().partial_cmp(&(b.1 - t).abs()).unwrap())
        .map(|(k, _)| k)
        .unwrap();
    values[k]
}
