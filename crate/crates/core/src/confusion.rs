//! Confusion matrix data model.
//!
//! Rows hold the actual class and columns the predicted class. Counts are
//! exact integers; every metric divides only at the very end.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest grand total accepted. Keeps `s^2 * s^2` inside `u128` for the
/// correlation-style metrics.
pub const MAX_GRAND_TOTAL: u64 = 3_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfusionError {
    #[error("label `{0}` is not in the class registry")]
    UnknownLabel(String),
    #[error("empty input: no pairs to infer the classes from")]
    EmptyInput,
    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },
    #[error("class registries differ")]
    RegistryMismatch,
    #[error("a class registry needs at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("duplicate class label `{0}`")]
    DuplicateLabel(String),
    #[error("count grid must be {expected}x{expected}")]
    BadShape { expected: usize },
    #[error("grand total exceeds {MAX_GRAND_TOTAL}")]
    TotalTooLarge,
}

/// Ordered set of class names; position is the class index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ClassRegistry {
    labels: Vec<String>,
}

impl ClassRegistry {
    pub fn new<I, S>(labels: I) -> Result<Self, ConfusionError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(ConfusionError::DuplicateLabel(l.clone()));
            }
        }
        if labels.len() < 2 {
            return Err(ConfusionError::TooFewClasses(labels.len()));
        }
        Ok(Self { labels })
    }

    /// Registry of the distinct labels, sorted lexicographically.
    pub fn inferred<'a, I>(labels: I) -> Result<Self, ConfusionError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let set: BTreeSet<&str> = labels.into_iter().collect();
        if set.is_empty() {
            return Err(ConfusionError::EmptyInput);
        }
        Self::new(set)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

impl TryFrom<Vec<String>> for ClassRegistry {
    type Error = ConfusionError;

    fn try_from(labels: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(labels)
    }
}

impl From<ClassRegistry> for Vec<String> {
    fn from(r: ClassRegistry) -> Self {
        r.labels
    }
}

/// The four tiles of the matrix when one class is treated as positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OneVsRest {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl OneVsRest {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// K x K tally of (actual, predicted) pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    registry: ClassRegistry,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(registry: ClassRegistry) -> Self {
        let k = registry.len();
        Self {
            registry,
            counts: vec![0; k * k],
        }
    }

    /// Builds a matrix from rows of counts, `rows[actual][predicted]`.
    pub fn from_counts(registry: ClassRegistry, rows: &[Vec<u64>]) -> Result<Self, ConfusionError> {
        let k = registry.len();
        if rows.len() != k || rows.iter().any(|r| r.len() != k) {
            return Err(ConfusionError::BadShape { expected: k });
        }
        let counts: Vec<u64> = rows.iter().flatten().copied().collect();
        check_total(&counts)?;
        Ok(Self { registry, counts })
    }

    /// Tallies `(actual, predicted)` label pairs.
    ///
    /// Without a registry the classes are the sorted union of all labels seen.
    pub fn from_pairs<A, P>(
        pairs: &[(A, P)],
        registry: Option<ClassRegistry>,
    ) -> Result<Self, ConfusionError>
    where
        A: AsRef<str>,
        P: AsRef<str>,
    {
        let registry = match registry {
            Some(r) => r,
            None => {
                ClassRegistry::inferred(pairs.iter().flat_map(|(a, p)| [a.as_ref(), p.as_ref()]))?
            }
        };
        let mut tally = Tally::new(registry);
        for (a, p) in pairs {
            tally.record_labels(a.as_ref(), p.as_ref())?;
        }
        Ok(tally.finish())
    }

    pub fn registry(&self) -> &ClassRegistry {
        &self.registry
    }

    pub fn classes(&self) -> usize {
        self.registry.len()
    }

    /// Count of units with actual class `actual` predicted as `predicted`.
    ///
    /// Panics when either index is out of range.
    pub fn get(&self, actual: usize, predicted: usize) -> u64 {
        let k = self.classes();
        assert!(actual < k && predicted < k, "class index out of range");
        self.counts[actual * k + predicted]
    }

    pub fn row(&self, actual: usize) -> &[u64] {
        let k = self.classes();
        &self.counts[actual * k..(actual + 1) * k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.counts.chunks(self.classes())
    }

    /// Grand total `s`.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Number of correctly classified units (the trace).
    pub fn correct(&self) -> u64 {
        (0..self.classes()).map(|k| self.get(k, k)).sum()
    }

    /// Units whose actual class is `k`.
    pub fn row_total(&self, k: usize) -> u64 {
        self.row(k).iter().sum()
    }

    /// Units predicted as class `k`.
    pub fn col_total(&self, k: usize) -> u64 {
        (0..self.classes()).map(|i| self.get(i, k)).sum()
    }

    pub fn row_totals(&self) -> Vec<u64> {
        (0..self.classes()).map(|k| self.row_total(k)).collect()
    }

    pub fn col_totals(&self) -> Vec<u64> {
        (0..self.classes()).map(|k| self.col_total(k)).collect()
    }

    pub fn one_vs_rest(&self, k: usize) -> Result<OneVsRest, ConfusionError> {
        if k >= self.classes() {
            return Err(ConfusionError::ClassOutOfRange {
                index: k,
                classes: self.classes(),
            });
        }
        let tp = self.get(k, k);
        let fp = self.col_total(k) - tp;
        let fn_ = self.row_total(k) - tp;
        let tn = self.total() - tp - fp - fn_;
        Ok(OneVsRest { tp, fp, fn_, tn })
    }

    /// Elementwise sum of two tallies over the same classes.
    pub fn merge(&self, other: &Self) -> Result<Self, ConfusionError> {
        if self.registry != other.registry {
            return Err(ConfusionError::RegistryMismatch);
        }
        let counts: Vec<u64> = self
            .counts
            .iter()
            .zip(&other.counts)
            .map(|(a, b)| a.checked_add(*b).ok_or(ConfusionError::TotalTooLarge))
            .collect::<Result<_, _>>()?;
        check_total(&counts)?;
        Ok(Self {
            registry: self.registry.clone(),
            counts,
        })
    }
}

fn check_total(counts: &[u64]) -> Result<(), ConfusionError> {
    let mut total: u64 = 0;
    for &c in counts {
        total = total.checked_add(c).ok_or(ConfusionError::TotalTooLarge)?;
    }
    if total > MAX_GRAND_TOTAL {
        return Err(ConfusionError::TotalTooLarge);
    }
    Ok(())
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .registry
            .labels()
            .iter()
            .map(String::len)
            .chain(self.counts.iter().map(|c| c.to_string().len()))
            .max()
            .unwrap_or(1);
        write!(f, "{:>width$}", "")?;
        for l in self.registry.labels() {
            write!(f, " {l:>width$}")?;
        }
        writeln!(f)?;
        for (label, row) in self.registry.labels().iter().zip(self.rows()) {
            write!(f, "{label:>width$}")?;
            for c in row {
                write!(f, " {c:>width$}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Incremental tally, for building a matrix while streaming input.
#[derive(Debug, Clone)]
pub struct Tally {
    matrix: ConfusionMatrix,
    total: u64,
}

impl Tally {
    pub fn new(registry: ClassRegistry) -> Self {
        Self {
            matrix: ConfusionMatrix::zeros(registry),
            total: 0,
        }
    }

    pub fn registry(&self) -> &ClassRegistry {
        &self.matrix.registry
    }

    pub fn record(&mut self, actual: usize, predicted: usize) -> Result<(), ConfusionError> {
        let k = self.matrix.classes();
        for index in [actual, predicted] {
            if index >= k {
                return Err(ConfusionError::ClassOutOfRange { index, classes: k });
            }
        }
        if self.total >= MAX_GRAND_TOTAL {
            return Err(ConfusionError::TotalTooLarge);
        }
        self.matrix.counts[actual * k + predicted] += 1;
        self.total += 1;
        Ok(())
    }

    pub fn record_labels(&mut self, actual: &str, predicted: &str) -> Result<(), ConfusionError> {
        let lookup = |l: &str| {
            self.matrix
                .registry
                .index(l)
                .ok_or_else(|| ConfusionError::UnknownLabel(l.to_owned()))
        };
        let (a, p) = (lookup(actual)?, lookup(predicted)?);
        self.record(a, p)
    }

    pub fn finish(self) -> ConfusionMatrix {
        self.matrix
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reg(labels: &[&str]) -> ClassRegistry {
        ClassRegistry::new(labels.iter().copied()).unwrap()
    }

    #[test]
    fn tally_small_pairs() {
        let m = ConfusionMatrix::from_pairs(&[("a", "a"), ("a", "b"), ("b", "b")], None).unwrap();
        assert_eq!(m.rows().collect::<Vec<_>>(), vec![&[1, 1][..], &[0, 1][..]]);
        assert_eq!(m.total(), 3);
        assert_eq!(m.registry().labels(), ["a", "b"]);
    }

    #[test]
    fn empty_pairs_with_registry_is_zero_matrix() {
        let pairs: [(&str, &str); 0] = [];
        let m = ConfusionMatrix::from_pairs(&pairs, Some(reg(&["a", "b"]))).unwrap();
        assert_eq!(m.total(), 0);
        assert_eq!(m.classes(), 2);
    }

    #[test]
    fn empty_pairs_without_registry_fails() {
        let pairs: [(&str, &str); 0] = [];
        assert_eq!(
            ConfusionMatrix::from_pairs(&pairs, None),
            Err(ConfusionError::EmptyInput)
        );
    }

    #[test]
    fn unknown_label_rejected() {
        let err = ConfusionMatrix::from_pairs(&[("a", "z")], Some(reg(&["a", "b"]))).unwrap_err();
        assert_eq!(err, ConfusionError::UnknownLabel("z".into()));
    }

    #[test]
    fn inferred_registry_is_sorted() {
        let m = ConfusionMatrix::from_pairs(&[("zebra", "ant"), ("mole", "zebra")], None).unwrap();
        assert_eq!(m.registry().labels(), ["ant", "mole", "zebra"]);
        assert_eq!(m.get(2, 0), 1);
        assert_eq!(m.get(1, 2), 1);
    }

    #[test]
    fn absent_registry_class_kept_as_zero_row() {
        let m = ConfusionMatrix::from_pairs(&[("a", "a")], Some(reg(&["a", "b", "c"]))).unwrap();
        assert_eq!(m.classes(), 3);
        assert_eq!(m.row_total(2), 0);
        assert_eq!(m.col_total(2), 0);
    }

    #[test]
    fn registry_rejects_duplicates_and_singletons() {
        assert!(matches!(
            ClassRegistry::new(["a", "a"]),
            Err(ConfusionError::DuplicateLabel(_))
        ));
        assert_eq!(
            ClassRegistry::new(["a"]),
            Err(ConfusionError::TooFewClasses(1))
        );
        // a single observed label cannot define a K >= 2 problem
        assert_eq!(
            ConfusionMatrix::from_pairs(&[("a", "a")], None),
            Err(ConfusionError::TooFewClasses(1))
        );
    }

    #[test]
    fn binary_one_vs_rest() {
        let m = ConfusionMatrix::from_counts(reg(&["pos", "neg"]), &[vec![20, 5], vec![10, 17]])
            .unwrap();
        let o = m.one_vs_rest(0).unwrap();
        assert_eq!(
            o,
            OneVsRest {
                tp: 20,
                fp: 10,
                fn_: 5,
                tn: 17
            }
        );
        assert_eq!(
            m.one_vs_rest(2),
            Err(ConfusionError::ClassOutOfRange {
                index: 2,
                classes: 2
            })
        );
    }

    #[test]
    fn perfect_classifier_has_no_errors() {
        let m = ConfusionMatrix::from_counts(
            reg(&["a", "b", "c"]),
            &[vec![4, 0, 0], vec![0, 7, 0], vec![0, 0, 1]],
        )
        .unwrap();
        for k in 0..3 {
            let o = m.one_vs_rest(k).unwrap();
            assert_eq!((o.fp, o.fn_), (0, 0));
        }
    }

    #[test]
    fn merge_identity_and_mismatch() {
        let m = ConfusionMatrix::from_pairs(&[("a", "b"), ("b", "b")], None).unwrap();
        let zero = ConfusionMatrix::zeros(m.registry().clone());
        assert_eq!(m.merge(&zero).unwrap(), m);
        let other = ConfusionMatrix::zeros(reg(&["a", "c"]));
        assert_eq!(m.merge(&other), Err(ConfusionError::RegistryMismatch));
    }

    #[test]
    fn shape_and_total_checks() {
        assert_eq!(
            ConfusionMatrix::from_counts(reg(&["a", "b"]), &[vec![1, 2, 3], vec![1, 2, 3]]),
            Err(ConfusionError::BadShape { expected: 2 })
        );
        assert_eq!(
            ConfusionMatrix::from_counts(reg(&["a", "b"]), &[vec![MAX_GRAND_TOTAL, 1], vec![0, 0]]),
            Err(ConfusionError::TotalTooLarge)
        );
    }

    #[test]
    fn display_aligns_columns() {
        let m = ConfusionMatrix::from_counts(reg(&["a", "b"]), &[vec![10, 2], vec![0, 3]]).unwrap();
        assert_eq!(m.to_string(), "    a  b\n a 10  2\n b  0  3\n");
    }
}
