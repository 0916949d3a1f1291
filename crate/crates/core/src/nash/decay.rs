//! Cross-player derivative magnitudes of a grid solution.

use super::ValueField;
use crate::fixedpoint::omega;

/// Index pattern of a derivative `D_j u^{N,i}` or `D_{jk} u^{N,i}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IndexClass {
    /// `j = i`.
    Own,
    /// `j != i`.
    Other,
    /// `j = k = i`.
    OwnOwn,
    /// Exactly one of `j, k` equals `i`.
    OwnOther,
    /// `j = k != i`.
    OtherOther,
    /// `i, j, k` distinct.
    Distinct,
}

impl IndexClass {
    pub fn order(self) -> usize {
        match self {
            IndexClass::Own | IndexClass::Other => 1,
            _ => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            IndexClass::Own => "i=j",
            IndexClass::Other => "i!=j",
            IndexClass::OwnOwn => "i=j=k",
            IndexClass::OwnOther => "i=j!=k",
            IndexClass::OtherOther => "j=k!=i",
            IndexClass::Distinct => "distinct",
        }
    }

    fn of(i: usize, j: usize, k: Option<usize>) -> Self {
        match k {
            None if i == j => IndexClass::Own,
            None => IndexClass::Other,
            Some(k) if i == j && j == k => IndexClass::OwnOwn,
            Some(k) if i == j || i == k => IndexClass::OwnOther,
            Some(k) if j == k => IndexClass::OtherOther,
            Some(_) => IndexClass::Distinct,
        }
    }
}

/// Where to measure: stored slices and nodes.
#[derive(Clone, Debug, Default)]
pub struct DecayProbes {
    pub slices: Vec<usize>,
    pub nodes: Vec<usize>,
}

impl DecayProbes {
    /// Every stored slice and every node within `fraction * R` of the origin.
    pub fn inner(field: &ValueField, fraction: f64) -> Self {
        let g = &field.grid;
        Self {
            slices: (0..field.slice_count()).collect(),
            nodes: (0..g.node_count())
                .filter(|&k| g.within(k, fraction))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayEntry {
    pub players: usize,
    pub class: IndexClass,
    /// Largest Frobenius norm over probes and index tuples in the class.
    pub max_norm: f64,
    pub omega: f64,
}

impl DecayEntry {
    pub fn norm_over_omega(&self) -> f64 {
        self.max_norm / self.omega
    }
}

/// Maximal `|D_j u^{N,i}|` and `|D_{jk} u^{N,i}|` per index class over the
/// probes, obtained from grid differences of `u^{N,1}` through symmetry.
/// Second derivatives are included when `max_order >= 2`.
pub fn derivative_decay_report(
    field: &ValueField,
    probes: &DecayProbes,
    max_order: usize,
) -> Vec<DecayEntry> {
    let n = field.players();
    let mut entries: Vec<DecayEntry> = Vec::new();
    let mut record = |class: IndexClass, indices: &[usize], norm: f64| {
        if let Some(e) = entries.iter_mut().find(|e| e.class == class) {
            e.max_norm = e.max_norm.max(norm);
        } else {
            entries.push(DecayEntry {
                players: n,
                class,
                max_norm: norm,
                omega: omega(n, indices),
            });
        }
    };
    for &k_slice in &probes.slices {
        for &node in &probes.nodes {
            for i in 0..n {
                for j in 0..n {
                    let g = field.gradient(k_slice, node, i, j);
                    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                    record(IndexClass::of(i, j, None), &[i, j], norm);
                    if max_order < 2 {
                        continue;
                    }
                    for k in 0..n {
                        let hnorm = field.hessian(k_slice, node, i, j, k).norm();
                        record(IndexClass::of(i, j, Some(k)), &[i, j, k], hnorm);
                    }
                }
            }
        }
    }
    entries.sort_by_key(|e| e.class);
    entries
}

/// `max_{i != j} |D_j u^{N,i}|` over the probes.
pub fn max_cross_gradient(field: &ValueField, probes: &DecayProbes) -> f64 {
    derivative_decay_report(field, probes, 1)
        .iter()
        .find(|e| e.class == IndexClass::Other)
        .map_or(0.0, |e| e.max_norm)
}
