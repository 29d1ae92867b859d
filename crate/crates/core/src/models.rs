//! Constrained spin-chain Hamiltonians and their matrix-free application.
//!
//! Every model is a sum of local terms supported on one to three sites.
//! A term is compiled into a list of conditional transitions so a single
//! kernel serves all models:
//!
//! ```text
//! out[b] += coeff * psi[b ^ flip]    if b & cond_mask == cond_value
//! ```

use std::fmt;

use nalgebra::{DMatrix, Matrix2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels;
use crate::scalar::{czero, cre, Real, C};
use crate::state::{StateVector, MAX_SITES, MIN_SITES};

/// Largest chain [`dense_h`] will materialize.
pub const DENSE_MAX_SITES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Dipole-facilitated model: `Σ Q_i P_{i+1} X_{i+2} + X_i P_{i+1} Q_{i+2}`.
    Dfm,
    /// Quantum East model at its stochastic point: `Σ n_i (X_{i+1} - 1)`.
    East,
    /// `Σ P_{i-1} X_i P_{i+1}`.
    Pxp,
    /// Antiferromagnetic exchange `Σ X X + Y Y + Z Z`.
    Heisenberg,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Dfm, ModelKind::East, ModelKind::Pxp, ModelKind::Heisenberg];

    pub fn default_boundary(self) -> Boundary {
        match self {
            ModelKind::East => Boundary::Open,
            _ => Boundary::Periodic,
        }
    }

    /// Translation step under which the periodic model is invariant.
    pub fn translation_period(self) -> usize {
        match self {
            ModelKind::Dfm => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Dfm => "dfm",
            ModelKind::East => "east",
            ModelKind::Pxp => "pxp",
            ModelKind::Heisenberg => "heisenberg",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dfm" => Ok(ModelKind::Dfm),
            "east" => Ok(ModelKind::East),
            "pxp" => Ok(ModelKind::Pxp),
            "heisenberg" => Ok(ModelKind::Heisenberg),
            other => invalid(format!("unknown model {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Boundary {
    #[serde(rename = "pbc")]
    Periodic,
    #[serde(rename = "obc")]
    Open,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boundary::Periodic => "pbc",
            Boundary::Open => "obc",
        })
    }
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pbc" | "periodic" => Ok(Boundary::Periodic),
            "obc" | "open" => Ok(Boundary::Open),
            other => invalid(format!("unknown boundary condition {other:?}")),
        }
    }
}

/// Declarative description of a chain Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub num_sites: usize,
    pub boundary: Boundary,
    pub coupling: f64,
}

impl ModelSpec {
    /// Model with its default boundary condition and unit coupling.
    pub fn new(kind: ModelKind, num_sites: usize) -> Self {
        Self { kind, num_sites, boundary: kind.default_boundary(), coupling: 1.0 }
    }

    pub fn dfm(num_sites: usize) -> Self {
        Self::new(ModelKind::Dfm, num_sites)
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_coupling(mut self, coupling: f64) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_SITES..=MAX_SITES).contains(&self.num_sites) {
            return invalid(format!(
                "chain length {} outside supported range {MIN_SITES}..={MAX_SITES}",
                self.num_sites
            ));
        }
        if !self.coupling.is_finite() {
            return invalid("coupling must be finite");
        }
        if self.kind == ModelKind::Dfm && self.boundary == Boundary::Periodic && self.num_sites % 2 != 0 {
            return invalid(format!(
                "periodic DFM needs an even number of sites, got {}",
                self.num_sites
            ));
        }
        Ok(())
    }
}

/// Operator supported on a handful of sites. Bit `q` of the local index
/// belongs to `support[q]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTerm<T: Real> {
    pub support: Vec<usize>,
    pub matrix: DMatrix<C<T>>,
}

/// Single-site operators in the `{↓ = 0, ↑ = 1}` basis.
pub mod ops {
    use super::*;

    fn m<T: Real>(a: [[C<T>; 2]; 2]) -> Matrix2<C<T>> {
        Matrix2::new(a[0][0], a[0][1], a[1][0], a[1][1])
    }

    pub fn identity<T: Real>() -> Matrix2<C<T>> {
        Matrix2::identity()
    }

    pub fn x<T: Real>() -> Matrix2<C<T>> {
        m([[czero(), cre(T::one())], [cre(T::one()), czero()]])
    }

    pub fn y<T: Real>() -> Matrix2<C<T>> {
        // Y = [[0, -i], [i, 0]] in the (↑, ↓) basis; in (↓, ↑) ordering the sign flips.
        m([[czero(), C::new(T::zero(), T::one())], [C::new(T::zero(), -T::one()), czero()]])
    }

    pub fn z<T: Real>() -> Matrix2<C<T>> {
        m([[cre(-T::one()), czero()], [czero(), cre(T::one())]])
    }

    /// Projector on spin-up.
    pub fn q<T: Real>() -> Matrix2<C<T>> {
        m([[czero(), czero()], [czero(), cre(T::one())]])
    }

    /// Projector on spin-down.
    pub fn p<T: Real>() -> Matrix2<C<T>> {
        m([[cre(T::one()), czero()], [czero(), czero()]])
    }

    /// Raising operator `|↑><↓|`.
    pub fn raise<T: Real>() -> Matrix2<C<T>> {
        m([[czero(), czero()], [cre(T::one()), czero()]])
    }

    /// Lowering operator `|↓><↑|`.
    pub fn lower<T: Real>() -> Matrix2<C<T>> {
        m([[czero(), cre(T::one())], [czero(), czero()]])
    }
}

/// Tensor product with factor `q` acting on local bit `q`.
pub fn kron_local<T: Real>(factors: &[Matrix2<C<T>>]) -> DMatrix<C<T>> {
    let d = 1usize << factors.len();
    DMatrix::from_fn(d, d, |r, c| {
        factors
            .iter()
            .enumerate()
            .fold(cre(T::one()), |acc, (q, f)| acc * f[(r >> q & 1, c >> q & 1)])
    })
}

fn term<T: Real>(support: Vec<usize>, factors: &[Matrix2<C<T>>], coupling: T) -> LocalTerm<T> {
    LocalTerm { support, matrix: kron_local(factors) * cre(coupling) }
}

/// Local terms of a model, sites 1-indexed.
pub fn build_terms<T: Real>(spec: &ModelSpec) -> Result<Vec<LocalTerm<T>>> {
    use ops::*;
    spec.validate()?;
    let l = spec.num_sites;
    let j = T::lit(spec.coupling);
    let site = |i: usize| (i - 1) % l + 1;
    let periodic = spec.boundary == Boundary::Periodic;
    let mut terms = Vec::new();
    match spec.kind {
        ModelKind::Dfm => {
            let last = if periodic { l } else { l - 2 };
            for i in 1..=last {
                let s = vec![site(i), site(i + 1), site(i + 2)];
                terms.push(term(s.clone(), &[q(), p(), x()], j));
                terms.push(term(s, &[x(), p(), q()], j));
            }
        }
        ModelKind::Pxp => {
            if periodic {
                for i in 1..=l {
                    terms.push(term(vec![site(i + l - 1), i, site(i + 1)], &[p(), x(), p()], j));
                }
            } else {
                terms.push(term(vec![1, 2], &[x(), p()], j));
                for i in 2..l {
                    terms.push(term(vec![i - 1, i, i + 1], &[p(), x(), p()], j));
                }
                terms.push(term(vec![l - 1, l], &[p(), x()], j));
            }
        }
        ModelKind::East => {
            let last = if periodic { l } else { l - 1 };
            let flip = x::<T>() - identity::<T>();
            for i in 1..=last {
                terms.push(term(vec![i, site(i + 1)], &[q(), flip], j));
            }
        }
        ModelKind::Heisenberg => {
            let last = if periodic { l } else { l - 1 };
            for i in 1..=last {
                let s = vec![i, site(i + 1)];
                let m = kron_local(&[x(), x()]) + kron_local(&[y(), y()]) + kron_local(&[z(), z()]);
                terms.push(LocalTerm { support: s, matrix: m * cre(j) });
            }
        }
    }
    Ok(terms)
}

fn scatter_bits(local: usize, bits: &[usize]) -> usize {
    bits.iter()
        .enumerate()
        .filter(|(q, _)| local >> q & 1 == 1)
        .fold(0, |acc, (_, b)| acc | (1 << b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Transition<T: Real> {
    cond_mask: usize,
    cond_value: usize,
    flip: usize,
    coeff: C<T>,
}

/// Compiled Hamiltonian ready for repeated application.
#[derive(Debug, Clone)]
pub struct Hamiltonian<T: Real> {
    spec: ModelSpec,
    terms: Vec<LocalTerm<T>>,
    transitions: Vec<Transition<T>>,
}

impl<T: Real> Hamiltonian<T> {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        let terms = build_terms(spec)?;
        let mut transitions = Vec::new();
        for t in &terms {
            let bits: Vec<usize> = t.support.iter().map(|s| s - 1).collect();
            let mask = scatter_bits(usize::MAX, &bits);
            let d = t.matrix.nrows();
            for lb in 0..d {
                for la in 0..d {
                    let v = t.matrix[(lb, la)];
                    if v.norm_sqr() == T::zero() {
                        continue;
                    }
                    transitions.push(Transition {
                        cond_mask: mask,
                        cond_value: scatter_bits(lb, &bits),
                        flip: scatter_bits(lb ^ la, &bits),
                        coeff: v,
                    });
                }
            }
        }
        // Group identical (condition, flip) pairs from different terms.
        transitions.sort_by_key(|t| (t.flip, t.cond_mask, t.cond_value));
        let mut merged: Vec<Transition<T>> = Vec::with_capacity(transitions.len());
        for t in transitions {
            match merged.last_mut() {
                Some(m) if (m.flip, m.cond_mask, m.cond_value) == (t.flip, t.cond_mask, t.cond_value) => {
                    m.coeff += t.coeff
                }
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.coeff.norm_sqr() != T::zero());
        Ok(Self { spec: *spec, terms, transitions: merged })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn num_sites(&self) -> usize {
        self.spec.num_sites
    }

    pub fn dim(&self) -> usize {
        1 << self.spec.num_sites
    }

    pub fn terms(&self) -> &[LocalTerm<T>] {
        &self.terms
    }

    #[inline]
    fn row(&self, b: usize, input: &[C<T>]) -> C<T> {
        self.transitions.iter().fold(czero(), |acc, t| {
            if b & t.cond_mask == t.cond_value {
                acc + t.coeff * input[b ^ t.flip]
            } else {
                acc
            }
        })
    }

    /// `out = H input`. Each output element is computed independently, so the
    /// result is the same for any thread count.
    pub fn apply_into(&self, input: &[C<T>], out: &mut [C<T>]) {
        assert_eq!(input.len(), self.dim());
        assert_eq!(out.len(), self.dim());
        if out.len() >= kernels::PAR_THRESHOLD {
            out.par_chunks_mut(kernels::CHUNK).enumerate().for_each(|(k, chunk)| {
                let base = k * kernels::CHUNK;
                for (j, o) in chunk.iter_mut().enumerate() {
                    *o = self.row(base + j, input);
                }
            });
        } else {
            for (b, o) in out.iter_mut().enumerate() {
                *o = self.row(b, input);
            }
        }
    }

    pub fn apply(&self, state: &StateVector<T>) -> Result<Vec<C<T>>> {
        if state.num_sites() != self.spec.num_sites {
            return invalid(format!(
                "state has {} sites, model has {}",
                state.num_sites(),
                self.spec.num_sites
            ));
        }
        let mut out = vec![czero(); self.dim()];
        self.apply_into(state.amplitudes(), &mut out);
        Ok(out)
    }

    /// Nonzero off-diagonal matrix elements `<b|H|a>` in column `a`, sorted by `b`.
    pub fn column(&self, a: usize) -> Vec<(usize, C<T>)> {
        let mut out: Vec<(usize, C<T>)> = Vec::new();
        for t in &self.transitions {
            if t.flip == 0 {
                continue;
            }
            let b = a ^ t.flip;
            if b & t.cond_mask == t.cond_value {
                out.push((b, t.coeff));
            }
        }
        out.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, C<T>)> = Vec::with_capacity(out.len());
        for (b, v) in out {
            match merged.last_mut() {
                Some(m) if m.0 == b => m.1 += v,
                _ => merged.push((b, v)),
            }
        }
        merged.retain(|e| e.1.norm_sqr() != T::zero());
        merged
    }

    /// `<a|H|a>`.
    pub fn diagonal(&self, a: usize) -> C<T> {
        self.transitions
            .iter()
            .filter(|t| t.flip == 0 && a & t.cond_mask == t.cond_value)
            .fold(czero(), |acc, t| acc + t.coeff)
    }

    /// `<psi|H|psi>`.
    pub fn energy(&self, state: &StateVector<T>) -> Result<T> {
        let h = self.apply(state)?;
        Ok(kernels::dot(state.amplitudes(), &h).re)
    }
}

/// Matrix-free `H|psi>` (the result is not normalized).
pub fn apply_h<T: Real>(spec: &ModelSpec, state: &StateVector<T>) -> Result<Vec<C<T>>> {
    Hamiltonian::new(spec)?.apply(state)
}

/// Dense `2^L x 2^L` Hamiltonian, assembled by embedding each local term.
pub fn dense_h<T: Real>(spec: &ModelSpec) -> Result<DMatrix<C<T>>> {
    spec.validate()?;
    if spec.num_sites > DENSE_MAX_SITES {
        return Err(Error::ResourceLimit(format!(
            "dense Hamiltonian limited to L ≤ {DENSE_MAX_SITES}, got {}",
            spec.num_sites
        )));
    }
    let dim = 1usize << spec.num_sites;
    let mut h = DMatrix::from_element(dim, dim, czero::<T>());
    for t in build_terms::<T>(spec)? {
        let bits: Vec<usize> = t.support.iter().map(|s| s - 1).collect();
        let mask = scatter_bits(usize::MAX, &bits);
        let d = t.matrix.nrows();
        for a in 0..dim {
            let la = (0..bits.len()).fold(0, |acc, q| acc | ((a >> bits[q] & 1) << q));
            let rest = a & !mask;
            for lb in 0..d {
                let v = t.matrix[(lb, la)];
                if v.norm_sqr() != T::zero() {
                    h[(rest | scatter_bits(lb, &bits), a)] += v;
                }
            }
        }
    }
    Ok(h)
}
