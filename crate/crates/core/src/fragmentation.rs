//! Hilbert-space structure of constrained chains.
//!
//! Basis states are vertices; two states are adjacent when the Hamiltonian
//! connects them. Connected components are the dynamically disconnected
//! sectors. For the DFM they are labelled
//!
//! * `L`: holds `↑↓↑↓…` (every even site down),
//! * `R`: holds `↓↑↓↑…` (every odd site down),
//! * `T`: the largest remaining sector,
//! * `frozen`: states with `H|s> = 0`,
//! * `other`: anything else, reported rather than merged.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::models::{kron_local, ops, Hamiltonian, ModelKind, ModelSpec};
use crate::scalar::C;
use crate::state::{config_string, sublattice_mask};

/// Largest chain for which the adjacency lists are stored explicitly.
pub const EXPLICIT_MAX_SITES: usize = 14;
/// Largest chain the analyzer accepts at all.
pub const GRAPH_MAX_SITES: usize = 20;
/// Largest chain included in an exhaustive scaling table.
pub const SCALING_MAX_SITES: usize = 14;

/// Two-site block symbol for sites `(2k-1, 2k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupSymbol {
    /// `∘` = (↓↓)
    Empty,
    /// `▷` = (↑↓)
    Right,
    /// `◁` = (↓↑)
    Left,
    /// `•` = (↑↑)
    Full,
}

impl GroupSymbol {
    fn from_bits(odd_up: bool, even_up: bool) -> Self {
        match (odd_up, even_up) {
            (false, false) => GroupSymbol::Empty,
            (true, false) => GroupSymbol::Right,
            (false, true) => GroupSymbol::Left,
            (true, true) => GroupSymbol::Full,
        }
    }

    fn bits(self) -> usize {
        match self {
            GroupSymbol::Empty => 0b00,
            GroupSymbol::Right => 0b01,
            GroupSymbol::Left => 0b10,
            GroupSymbol::Full => 0b11,
        }
    }

    pub fn glyph(self) -> char {
        match self {
            GroupSymbol::Empty => '∘',
            GroupSymbol::Right => '▷',
            GroupSymbol::Left => '◁',
            GroupSymbol::Full => '•',
        }
    }
}

/// Basis configuration written in two-site blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSiteConfig {
    pub symbols: Vec<GroupSymbol>,
}

impl GroupSiteConfig {
    pub fn from_index(index: usize, num_sites: usize) -> Result<Self> {
        if num_sites % 2 != 0 {
            return invalid(format!("group-site form needs even L, got {num_sites}"));
        }
        let symbols = (0..num_sites / 2)
            .map(|k| GroupSymbol::from_bits(index >> (2 * k) & 1 == 1, index >> (2 * k + 1) & 1 == 1))
            .collect();
        Ok(Self { symbols })
    }

    pub fn to_index(&self) -> usize {
        self.symbols
            .iter()
            .enumerate()
            .fold(0, |acc, (k, s)| acc | (s.bits() << (2 * k)))
    }
}

impl fmt::Display for GroupSiteConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.symbols.iter().try_for_each(|s| write!(f, "{}", s.glyph()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    T,
    L,
    R,
    #[serde(rename = "frozen")]
    Frozen,
    #[serde(rename = "other")]
    Other,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::T => "T",
            Label::L => "L",
            Label::R => "R",
            Label::Frozen => "frozen",
            Label::Other => "other",
        })
    }
}

enum Storage {
    Explicit { offsets: Vec<usize>, targets: Vec<u32> },
    Lazy,
}

/// Basis-state connectivity of a Hamiltonian.
pub struct Adjacency {
    ham: Hamiltonian<f64>,
    storage: Storage,
}

impl Adjacency {
    pub fn num_sites(&self) -> usize {
        self.ham.num_sites()
    }

    pub fn spec(&self) -> &ModelSpec {
        self.ham.spec()
    }

    pub fn dim(&self) -> usize {
        self.ham.dim()
    }

    pub fn is_explicit(&self) -> bool {
        matches!(self.storage, Storage::Explicit { .. })
    }

    /// Neighbours of `a`, ascending.
    pub fn neighbors(&self, a: usize) -> Vec<usize> {
        match &self.storage {
            Storage::Explicit { offsets, targets } => {
                targets[offsets[a]..offsets[a + 1]].iter().map(|&b| b as usize).collect()
            }
            Storage::Lazy => self.ham.column(a).into_iter().map(|(b, _)| b).collect(),
        }
    }

    pub fn degree(&self, a: usize) -> usize {
        match &self.storage {
            Storage::Explicit { offsets, .. } => offsets[a + 1] - offsets[a],
            Storage::Lazy => self.ham.column(a).len(),
        }
    }

    /// `H|a> = 0` exactly.
    pub fn is_frozen(&self, a: usize) -> bool {
        self.degree(a) == 0 && self.ham.diagonal(a).norm_sqr() == 0.0
    }
}

/// Adjacency graph with an edge `(a, b)` iff `<b|H|a> ≠ 0`, `a ≠ b`.
pub fn build_adjacency(spec: &ModelSpec) -> Result<Adjacency> {
    spec.validate()?;
    if spec.num_sites > GRAPH_MAX_SITES {
        return Err(Error::ResourceLimit(format!(
            "basis graph limited to L ≤ {GRAPH_MAX_SITES}, got {}",
            spec.num_sites
        )));
    }
    let ham = Hamiltonian::<f64>::new(spec)?;
    let storage = if spec.num_sites <= EXPLICIT_MAX_SITES {
        let columns: Vec<Vec<u32>> = (0..ham.dim())
            .into_par_iter()
            .map(|a| ham.column(a).into_iter().map(|(b, _)| b as u32).collect())
            .collect();
        let mut offsets = Vec::with_capacity(columns.len() + 1);
        offsets.push(0);
        for c in &columns {
            offsets.push(offsets.last().unwrap() + c.len());
        }
        Storage::Explicit { offsets, targets: columns.concat() }
    } else {
        Storage::Lazy
    };
    Ok(Adjacency { ham, storage })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub label: Label,
    pub size: usize,
    /// Smallest basis index in the component.
    pub representative: usize,
    /// `by_weight[w]` counts members with `w` up spins.
    pub by_weight: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceReport {
    pub model: ModelKind,
    pub num_sites: usize,
    /// Non-frozen components in discovery order (ascending representative).
    pub components: Vec<Component>,
    pub frozen_count: usize,
    /// Component index of every basis state; `None` for frozen states.
    #[serde(skip)]
    pub assignment: Vec<Option<u32>>,
}

impl SubspaceReport {
    pub fn component(&self, label: Label) -> Option<&Component> {
        self.components.iter().find(|c| c.label == label)
    }

    pub fn label_of(&self, index: usize) -> Label {
        match self.assignment.get(index).copied().flatten() {
            Some(c) => self.components[c as usize].label,
            None => Label::Frozen,
        }
    }

    pub fn non_singleton_count(&self) -> usize {
        self.components.iter().filter(|c| c.size > 1).count()
    }

    /// Every basis index is either frozen or in exactly one component.
    pub fn is_partition(&self) -> bool {
        let total: usize = self.components.iter().map(|c| c.size).sum::<usize>() + self.frozen_count;
        total == 1 << self.num_sites && self.assignment.len() == 1 << self.num_sites
    }
}

/// Breadth-first enumeration of connected components, with sector labels.
pub fn components(graph: &Adjacency) -> SubspaceReport {
    let l = graph.num_sites();
    let dim = graph.dim();
    let mut assignment: Vec<Option<u32>> = vec![None; dim];
    let mut seen = vec![false; dim];
    let mut raw: Vec<Component> = Vec::new();
    let mut frozen_count = 0;
    let mut queue = VecDeque::new();
    for seed in 0..dim {
        if seen[seed] {
            continue;
        }
        seen[seed] = true;
        if graph.is_frozen(seed) {
            frozen_count += 1;
            continue;
        }
        let id = raw.len() as u32;
        let mut by_weight = vec![0usize; l + 1];
        let mut size = 0;
        queue.push_back(seed);
        while let Some(a) = queue.pop_front() {
            assignment[a] = Some(id);
            size += 1;
            by_weight[a.count_ones() as usize] += 1;
            for b in graph.neighbors(a) {
                if !seen[b] {
                    seen[b] = true;
                    queue.push_back(b);
                }
            }
        }
        raw.push(Component { label: Label::Other, size, representative: seed, by_weight });
    }

    let label_at = |index: usize, label: Label, raw: &mut Vec<Component>| {
        if let Some(c) = assignment[index] {
            if raw[c as usize].label == Label::Other && raw[c as usize].size > 1 {
                raw[c as usize].label = label;
            }
        }
    };
    if l % 2 == 0 {
        label_at(sublattice_mask(l, true), Label::L, &mut raw);
        label_at(sublattice_mask(l, false), Label::R, &mut raw);
    }
    let largest = raw
        .iter()
        .enumerate()
        .filter(|(_, c)| c.label == Label::Other && c.size > 1)
        // first of equal-size candidates wins
        .max_by(|(i, a), (j, b)| a.size.cmp(&b.size).then(j.cmp(i)))
        .map(|(i, _)| i);
    if let Some(i) = largest {
        raw[i].label = Label::T;
    }
    SubspaceReport { model: graph.spec().kind, num_sites: l, components: raw, frozen_count, assignment }
}

/// Sector label of one configuration together with the closed-form guess.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classification {
    pub label: Label,
    /// Label from the sublattice predicate: frozen, else all-even-down → L,
    /// all-odd-down → R, otherwise T.
    pub predicted: Label,
    pub agrees: bool,
}

/// Static sector guess without graph traversal.
pub fn predicted_label(graph: &Adjacency, index: usize) -> Label {
    let l = graph.num_sites();
    if graph.is_frozen(index) {
        Label::Frozen
    } else if index & sublattice_mask(l, false) == 0 {
        Label::L
    } else if index & sublattice_mask(l, true) == 0 {
        Label::R
    } else {
        Label::T
    }
}

/// Label of `index` under `report`, compared with [`predicted_label`].
pub fn classify_in(report: &SubspaceReport, graph: &Adjacency, index: usize) -> Result<Classification> {
    if index >= graph.dim() {
        return invalid(format!("basis index {index} out of range"));
    }
    let label = report.label_of(index);
    let predicted = predicted_label(graph, index);
    Ok(Classification { label, predicted, agrees: label == predicted })
}

/// One-shot classification of a configuration (builds the whole report).
pub fn classify_state(index: usize, spec: &ModelSpec) -> Result<Classification> {
    if spec.num_sites % 2 != 0 {
        return invalid(format!("classification needs even L, got {}", spec.num_sites));
    }
    let graph = build_adjacency(spec)?;
    let report = components(&graph);
    classify_in(&report, &graph, index)
}

/// Outcome of the squared-triangle operator identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eq10Check {
    pub holds: bool,
    /// Largest elementwise `|lhs - rhs|`.
    pub residual: f64,
    /// Smallest eigenvalue of the squared Hamiltonian.
    pub lhs_min_eigenvalue: f64,
}

pub const EQ10_TOLERANCE: f64 = 1e-12;

/// Squared single-triangle Hamiltonian, `(Q₁P₂X₃ + X₁P₂Q₃)²`, and the
/// projector-plus-constrained-hopping form it should equal.
pub fn triangle_identity_sides() -> (DMatrix<C<f64>>, DMatrix<C<f64>>) {
    use ops::*;
    let h = kron_local(&[q(), p(), x()]) + kron_local(&[x(), p(), q()]);
    let lhs = &h * &h;
    let rhs = kron_local(&[q(), p(), identity()])
        + kron_local(&[identity(), p(), q()])
        + kron_local(&[lower(), p(), raise()])
        + kron_local(&[raise(), p(), lower()]);
    (lhs, rhs)
}

/// Check `H² = Q₁P₂ + P₂Q₃ + σ⁻₁P₂σ⁺₃ + σ⁺₁P₂σ⁻₃` on one open triangle.
pub fn verify_eq10() -> Eq10Check {
    let (lhs, rhs) = triangle_identity_sides();
    let residual = (&lhs - &rhs).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let lhs_min_eigenvalue = lhs.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    Eq10Check { holds: residual <= EQ10_TOLERANCE, residual, lhs_min_eigenvalue }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub num_sites: usize,
    pub non_singleton_count: usize,
    pub frozen_count: usize,
    pub sizes: Vec<(Label, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub model: ModelKind,
    pub rows: Vec<ScalingRow>,
    /// Sizes skipped because they exceed the exhaustive limit.
    pub truncated: Vec<usize>,
}

/// Component statistics over a range of chain lengths.
pub fn subspace_scaling(template: &ModelSpec, sizes: &[usize]) -> Result<ScalingTable> {
    let mut rows = Vec::new();
    let mut truncated = Vec::new();
    for &l in sizes {
        if l > SCALING_MAX_SITES {
            truncated.push(l);
            continue;
        }
        let spec = ModelSpec { num_sites: l, ..*template };
        let report = components(&build_adjacency(&spec)?);
        rows.push(ScalingRow {
            num_sites: l,
            non_singleton_count: report.non_singleton_count(),
            frozen_count: report.frozen_count,
            sizes: report.components.iter().map(|c| (c.label, c.size)).collect(),
        });
    }
    Ok(ScalingTable { model: template.kind, rows, truncated })
}

/// Arrow and group-site renderings of a configuration, for reports.
pub fn describe(index: usize, num_sites: usize) -> (String, Option<String>) {
    let arrows = config_string(index, num_sites);
    let groups = GroupSiteConfig::from_index(index, num_sites).ok().map(|g| g.to_string());
    (arrows, groups)
}
