//! Sampler return contract shared by the RBM and annealing backends.

use std::collections::BTreeMap;

/// One distinct binary assignment with its energy and multiplicity.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub assignment: Vec<u8>,
    pub energy: f64,
    pub occurrences: u64,
}

/// Multiset of binary assignments. Records are kept sorted by
/// `(energy, assignment)` so equal inputs produce identical sets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleSet {
    pub records: Vec<SampleRecord>,
    /// Free-form provenance (backend name, schedule, ...).
    pub metadata: BTreeMap<String, String>,
}

impl SampleSet {
    /// Aggregate raw draws, computing each distinct assignment's energy once.
    pub fn from_draws<F>(draws: impl IntoIterator<Item = Vec<u8>>, energy: F) -> SampleSet
    where
        F: Fn(&[u8]) -> f64,
    {
        let mut counts: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
        for d in draws {
            *counts.entry(d).or_insert(0) += 1;
        }
        let mut records: Vec<SampleRecord> = counts
            .into_iter()
            .map(|(assignment, occurrences)| {
                let energy = energy(&assignment);
                SampleRecord { assignment, energy, occurrences }
            })
            .collect();
        records.sort_by(|a, b| {
            a.energy
                .partial_cmp(&b.energy)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.assignment.cmp(&b.assignment))
        });
        SampleSet { records, metadata: BTreeMap::new() }
    }

    /// Total number of draws represented.
    pub fn total_occurrences(&self) -> u64 {
        self.records.iter().map(|r| r.occurrences).sum()
    }

    /// Lowest-energy record (the records are sorted, so this is the first).
    pub fn best(&self) -> Option<&SampleRecord> {
        self.records.first()
    }

    /// Expand back into one assignment per draw, in record order.
    pub fn expand(&self) -> impl Iterator<Item = &[u8]> + '_ {
        self.records
            .iter()
            .flat_map(|r| std::iter::repeat(r.assignment.as_slice()).take(r.occurrences as usize))
    }

    /// Empirical probability of each distinct assignment.
    pub fn frequencies(&self) -> Vec<(&[u8], f64)> {
        let total = self.total_occurrences() as f64;
        self.records
            .iter()
            .map(|r| (r.assignment.as_slice(), r.occurrences as f64 / total))
            .collect()
    }
}
