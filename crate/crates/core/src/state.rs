//! Computational-basis states of an `L`-site spin-1/2 chain.
//!
//! Basis convention: site `i` (1-indexed) is bit `i - 1` of the basis index,
//! spin-up is bit value 1. Site 1 is therefore the least significant bit and
//! odd sites sit on the even bit positions.

use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::kernels;
use crate::scalar::{cabs, czero, cre, Real, C};

/// Smallest chain the library accepts.
pub const MIN_SITES: usize = 3;
/// Largest chain a dense state vector is allocated for.
pub const MAX_SITES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn is_up(self) -> bool {
        self == Spin::Up
    }
}

impl TryFrom<char> for Spin {
    type Error = Error;

    fn try_from(c: char) -> Result<Self> {
        match c {
            '1' | 'u' | 'U' | '↑' => Ok(Spin::Up),
            '0' | 'd' | 'D' | '↓' => Ok(Spin::Down),
            other => invalid(format!("unknown spin label {other:?}")),
        }
    }
}

/// Encode a spin configuration (site 1 first) as a basis index.
pub fn encode(config: &[Spin]) -> usize {
    config
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_up())
        .fold(0, |acc, (i, _)| acc | (1 << i))
}

/// Inverse of [`encode`].
pub fn decode(index: usize, num_sites: usize) -> Vec<Spin> {
    (0..num_sites)
        .map(|i| if index >> i & 1 == 1 { Spin::Up } else { Spin::Down })
        .collect()
}

/// Parse a configuration string such as `"↑↓↑↓"` or `"1010"`, site 1 first.
pub fn parse_config(s: &str) -> Result<Vec<Spin>> {
    s.chars().filter(|c| !c.is_whitespace()).map(Spin::try_from).collect()
}

/// Render a basis index as an arrow string, site 1 first.
pub fn config_string(index: usize, num_sites: usize) -> String {
    decode(index, num_sites)
        .into_iter()
        .map(|s| if s.is_up() { '↑' } else { '↓' })
        .collect()
}

/// Mask with the bits of every site of the given parity set (`odd` picks 1, 3, 5, ...).
pub fn sublattice_mask(num_sites: usize, odd: bool) -> usize {
    let start = if odd { 0 } else { 1 };
    (start..num_sites).step_by(2).fold(0, |m, b| m | (1 << b))
}

fn check_sites(num_sites: usize) -> Result<()> {
    if !(MIN_SITES..=MAX_SITES).contains(&num_sites) {
        return invalid(format!(
            "chain length {num_sites} outside supported range {MIN_SITES}..={MAX_SITES}"
        ));
    }
    Ok(())
}

/// Normalized amplitude vector over the `2^L` computational basis.
#[derive(Clone, PartialEq)]
pub struct StateVector<T: Real> {
    num_sites: usize,
    amplitudes: Vec<C<T>>,
}

impl<T: Real> fmt::Debug for StateVector<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StateVector")
            .field("num_sites", &self.num_sites)
            .field("nonzero", &self.amplitudes.iter().filter(|a| a.norm_sqr() > T::zero()).count())
            .finish()
    }
}

impl<T: Real> StateVector<T> {
    /// Basis state `|index>`.
    pub fn basis(num_sites: usize, index: usize) -> Result<Self> {
        check_sites(num_sites)?;
        let dim = 1usize << num_sites;
        if index >= dim {
            return invalid(format!("basis index {index} out of range for L = {num_sites}"));
        }
        let mut amplitudes = vec![czero(); dim];
        amplitudes[index] = cre(T::one());
        Ok(Self { num_sites, amplitudes })
    }

    /// Build from raw amplitudes, normalizing them.
    pub fn from_amplitudes(num_sites: usize, amplitudes: Vec<C<T>>) -> Result<Self> {
        check_sites(num_sites)?;
        if amplitudes.len() != 1 << num_sites {
            return invalid(format!(
                "expected {} amplitudes for L = {num_sites}, got {}",
                1usize << num_sites,
                amplitudes.len()
            ));
        }
        let mut state = Self { num_sites, amplitudes };
        let n = state.norm();
        if n <= T::zero() || !n.is_finite() {
            return invalid("amplitudes have zero or non-finite norm");
        }
        state.scale(cre(T::one() / n));
        Ok(state)
    }

    /// Equal-weight superposition of the given basis indices.
    pub fn superposition(num_sites: usize, indices: &[usize]) -> Result<Self> {
        check_sites(num_sites)?;
        let dim = 1usize << num_sites;
        let mut amplitudes = vec![czero(); dim];
        for &i in indices {
            if i >= dim {
                return invalid(format!("basis index {i} out of range for L = {num_sites}"));
            }
            amplitudes[i] += cre(T::one());
        }
        Self::from_amplitudes(num_sites, amplitudes)
    }

    /// Haar-like random state from Gaussian amplitudes.
    pub fn random<R: Rng + ?Sized>(num_sites: usize, rng: &mut R) -> Result<Self> {
        check_sites(num_sites)?;
        let gauss = |rng: &mut R| {
            // Box-Muller
            let u1: f64 = 1.0 - rng.gen::<f64>();
            let u2: f64 = rng.gen::<f64>();
            let r = (-2.0 * u1.ln()).sqrt();
            let phi = std::f64::consts::TAU * u2;
            C::new(T::lit(r * phi.cos()), T::lit(r * phi.sin()))
        };
        let amplitudes = (0..1usize << num_sites).map(|_| gauss(rng)).collect();
        Self::from_amplitudes(num_sites, amplitudes)
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C<T>] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [C<T>] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C<T>> {
        self.amplitudes
    }

    pub fn norm(&self) -> T {
        kernels::norm(&self.amplitudes)
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Result<C<T>> {
        if self.num_sites != other.num_sites {
            return invalid(format!(
                "state sizes differ: {} vs {}",
                self.num_sites, other.num_sites
            ));
        }
        Ok(kernels::dot(&self.amplitudes, &other.amplitudes))
    }

    pub(crate) fn scale(&mut self, alpha: C<T>) {
        kernels::scale(alpha, &mut self.amplitudes);
    }

    /// Rescale to unit norm. Returns the norm before rescaling.
    pub(crate) fn renormalize(&mut self) -> T {
        let n = self.norm();
        if n > T::zero() {
            self.scale(cre(T::one() / n));
        }
        n
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site == 0 || site > self.num_sites {
            return invalid(format!("site {site} outside 1..={}", self.num_sites));
        }
        Ok(())
    }

    /// Probability weight on basis indices selected by `pred`.
    pub fn probability_where<F: Fn(usize) -> bool + Sync>(&self, pred: F) -> T {
        let partial = |(k, chunk): (usize, &[C<T>])| {
            chunk.iter().enumerate().fold(T::zero(), |acc, (j, a)| {
                if pred(k * kernels::CHUNK + j) {
                    acc + a.norm_sqr()
                } else {
                    acc
                }
            })
        };
        let parts: Vec<T> = if self.dim() >= kernels::PAR_THRESHOLD {
            self.amplitudes.par_chunks(kernels::CHUNK).enumerate().map(partial).collect()
        } else {
            self.amplitudes.chunks(kernels::CHUNK).enumerate().map(partial).collect()
        };
        parts.into_iter().fold(T::zero(), |a, b| a + b)
    }

    /// `<Z_site>` with `Z = |↑><↑| - |↓><↓|`.
    pub fn expect_z(&self, site: usize) -> Result<T> {
        self.check_site(site)?;
        let bit = 1usize << (site - 1);
        let up = self.probability_where(|i| i & bit != 0);
        let total = self.probability_where(|_| true);
        Ok(up + up - total)
    }

    /// `<Z_i>` for every site, site 1 first, in one pass over the amplitudes.
    pub fn z_profile(&self) -> Vec<T> {
        let l = self.num_sites;
        // slot l holds the total weight
        let partial = |(k, chunk): (usize, &[C<T>])| {
            let mut acc = vec![T::zero(); l + 1];
            for (j, a) in chunk.iter().enumerate() {
                let p = a.norm_sqr();
                let i = k * kernels::CHUNK + j;
                acc[l] += p;
                for (b, slot) in acc[..l].iter_mut().enumerate() {
                    if i >> b & 1 == 1 {
                        *slot += p;
                    }
                }
            }
            acc
        };
        let parts: Vec<Vec<T>> = if self.dim() >= kernels::PAR_THRESHOLD {
            self.amplitudes.par_chunks(kernels::CHUNK).enumerate().map(partial).collect()
        } else {
            self.amplitudes.chunks(kernels::CHUNK).enumerate().map(partial).collect()
        };
        let mut up = vec![T::zero(); l + 1];
        for part in parts {
            up.iter_mut().zip(part).for_each(|(u, x)| *u += x);
        }
        let total = up[l];
        up[..l].iter().map(|&u| u + u - total).collect()
    }

    /// Reduced density matrix on the retained sites (1-indexed, any order;
    /// stored sorted). Local index bit `q` is the `q`-th retained site.
    pub fn reduce(&self, keep: &[usize]) -> Result<ReducedDensityMatrix<T>> {
        let mut sites = keep.to_vec();
        sites.sort_unstable();
        sites.dedup();
        if sites.is_empty() || sites.len() != keep.len() {
            return invalid("retained site set must be non-empty and free of duplicates");
        }
        for &s in &sites {
            self.check_site(s)?;
        }
        if sites.len() == self.num_sites {
            return invalid("retained site set must be a strict subset of the chain");
        }
        let k = sites.len();
        let env: Vec<usize> = (1..=self.num_sites).filter(|s| !sites.contains(s)).collect();
        let keep_off: Vec<usize> = (0..1usize << k).map(|a| scatter(a, &sites)).collect();
        let env_off: Vec<usize> = (0..1usize << env.len()).map(|e| scatter(e, &env)).collect();
        let d = 1usize << k;

        let accumulate = |block: &[usize]| {
            let mut rho = vec![czero::<T>(); d * d];
            let mut g = vec![czero::<T>(); d];
            for &e in block {
                for (a, ga) in g.iter_mut().enumerate() {
                    *ga = self.amplitudes[keep_off[a] | e];
                }
                for a in 0..d {
                    if g[a].norm_sqr() == T::zero() {
                        continue;
                    }
                    for b in 0..d {
                        rho[a * d + b] += g[a] * g[b].conj();
                    }
                }
            }
            rho
        };
        let block = (kernels::CHUNK / d).max(1);
        let partials: Vec<Vec<C<T>>> = if self.dim() >= kernels::PAR_THRESHOLD {
            env_off.par_chunks(block).map(accumulate).collect()
        } else {
            env_off.chunks(block).map(accumulate).collect()
        };
        let mut total = vec![czero::<T>(); d * d];
        for p in partials {
            total.iter_mut().zip(p).for_each(|(t, x)| *t += x);
        }
        let matrix = DMatrix::from_row_slice(d, d, &total);
        Ok(ReducedDensityMatrix { sites, matrix })
    }
}

/// Place the low bits of `local` onto the bit positions of `sites` (1-indexed).
fn scatter(local: usize, sites: &[usize]) -> usize {
    sites
        .iter()
        .enumerate()
        .filter(|(q, _)| local >> q & 1 == 1)
        .fold(0, |acc, (_, s)| acc | (1 << (s - 1)))
}

/// Product state from a per-site spin list (site 1 first).
pub fn product_state<T: Real>(num_sites: usize, config: &[Spin]) -> Result<StateVector<T>> {
    if config.len() != num_sites {
        return invalid(format!(
            "configuration has {} labels for L = {num_sites}",
            config.len()
        ));
    }
    StateVector::basis(num_sites, encode(config))
}

/// `(|..↑_{L/2+1}..> + |..↑_{L/2}..>)/√2` on the all-down background.
pub fn bell_state<T: Real>(num_sites: usize) -> Result<StateVector<T>> {
    if num_sites % 2 != 0 || num_sites < 4 {
        return invalid(format!("Bell state needs even L ≥ 4, got {num_sites}"));
    }
    let mid = num_sites / 2;
    StateVector::superposition(num_sites, &[1 << mid, 1 << (mid - 1)])
}

/// Equal superposition of the two Néel configurations.
pub fn ghz_state<T: Real>(num_sites: usize) -> Result<StateVector<T>> {
    if num_sites % 2 != 0 || num_sites < 4 {
        return invalid(format!("GHZ state needs even L ≥ 4, got {num_sites}"));
    }
    StateVector::superposition(
        num_sites,
        &[sublattice_mask(num_sites, true), sublattice_mask(num_sites, false)],
    )
}

/// Hermitian, unit-trace matrix on a subset of sites.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedDensityMatrix<T: Real> {
    pub sites: Vec<usize>,
    pub matrix: DMatrix<C<T>>,
}

impl<T: Real> ReducedDensityMatrix<T> {
    /// Wrap an explicit matrix; the caller vouches for the density-matrix properties.
    pub fn new(sites: Vec<usize>, matrix: DMatrix<C<T>>) -> Result<Self> {
        let d = 1usize << sites.len();
        if matrix.nrows() != d || matrix.ncols() != d {
            return invalid(format!(
                "{} sites need a {d}x{d} matrix, got {}x{}",
                sites.len(),
                matrix.nrows(),
                matrix.ncols()
            ));
        }
        Ok(Self { sites, matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C<T> {
        self.matrix.trace()
    }

    /// Largest `|rho_ab - conj(rho_ba)|`.
    pub fn hermiticity_residual(&self) -> T {
        let d = self.dim();
        let mut worst = T::zero();
        for a in 0..d {
            for b in 0..d {
                let r = cabs(self.matrix[(a, b)] - self.matrix[(b, a)].conj());
                if r > worst {
                    worst = r;
                }
            }
        }
        worst
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<T> {
        let mut ev: Vec<T> = self.matrix.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        ev
    }

    /// `Tr(rho^2)`, computed as the squared Frobenius norm.
    pub fn purity(&self) -> T {
        self.matrix.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
    }
}
