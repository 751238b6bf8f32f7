//! Probability-space evaluation: cross-entropy and the argmax rule that turns
//! probability vectors into hard labels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confusion::{ClassRegistry, ConfusionError, ConfusionMatrix, Tally};

/// Allowed deviation of a probability vector's sum from 1.
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

/// Default clipping floor for `log`.
pub const DEFAULT_EPSILON: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProbaError {
    #[error("invalid probability record: {0}")]
    InvalidRecord(String),
    #[error("invalid cross-entropy options: {0}")]
    InvalidOptions(String),
    #[error("cross-entropy of an empty dataset")]
    EmptyDataset,
    #[error("record has {found} classes, expected {expected}")]
    MixedDimensions { expected: usize, found: usize },
    #[error(transparent)]
    Confusion(#[from] ConfusionError),
}

/// One unit: its true class and the predicted distribution over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbRecord {
    true_class: usize,
    probs: Vec<f64>,
}

impl ProbRecord {
    /// Validates that `probs` is a distribution over at least two classes
    /// (sum within [`PROB_SUM_TOLERANCE`] of 1) and that `true_class` indexes it.
    /// The vector is not renormalized.
    pub fn new(true_class: usize, probs: Vec<f64>) -> Result<Self, ProbaError> {
        if probs.len() < 2 {
            return Err(ProbaError::InvalidRecord(format!(
                "need at least two classes, got {}",
                probs.len()
            )));
        }
        if true_class >= probs.len() {
            return Err(ProbaError::InvalidRecord(format!(
                "true class {true_class} out of range for {} classes",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(ProbaError::InvalidRecord(format!(
                "probability {p} outside [0, 1]"
            )));
        }
        let sum = prob_sum(&probs);
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(ProbaError::InvalidRecord(format!(
                "probabilities sum to {sum}"
            )));
        }
        Ok(Self { true_class, probs })
    }

    pub fn true_class(&self) -> usize {
        self.true_class
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn classes(&self) -> usize {
        self.probs.len()
    }

    /// Probability assigned to the true class.
    pub fn true_prob(&self) -> f64 {
        self.probs[self.true_class]
    }

    pub fn predicted_class(&self) -> usize {
        argmax_rule(&self.probs)
    }
}

pub(crate) fn prob_sum(probs: &[f64]) -> f64 {
    let mut s = PairwiseSum::default();
    probs.iter().for_each(|&p| s.add(p));
    s.sum()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

impl Reduction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Mean => "mean",
            Self::Sum => "sum",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XentOptions {
    epsilon: f64,
    reduce: Reduction,
}

impl XentOptions {
    /// `epsilon` must lie in `(0, 1e-6]`.
    pub fn new(epsilon: f64, reduce: Reduction) -> Result<Self, ProbaError> {
        if !(epsilon > 0.0 && epsilon <= 1e-6) {
            return Err(ProbaError::InvalidOptions(format!(
                "epsilon {epsilon} outside (0, 1e-6]"
            )));
        }
        Ok(Self { epsilon, reduce })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn reduce(&self) -> Reduction {
        self.reduce
    }
}

impl Default for XentOptions {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            reduce: Reduction::Mean,
        }
    }
}

/// Cross-entropy of one unit, `-ln(max(p_true, epsilon))`.
///
/// Only the true-class probability matters; the rest of the vector is ignored.
pub fn xent_unit(r: &ProbRecord, opts: &XentOptions) -> f64 {
    0.0 - r.true_prob().max(opts.epsilon).ln()
}

/// Streaming pairwise summation.
///
/// Keeps one partial sum per power-of-two block, so memory is logarithmic in
/// the number of terms while the rounding error grows like `log n`.
#[derive(Debug, Clone, Default)]
pub struct PairwiseSum {
    // (sum, number of terms), block sizes strictly decreasing
    blocks: Vec<(f64, u64)>,
}

impl PairwiseSum {
    pub fn add(&mut self, x: f64) {
        let mut block = (x, 1u64);
        while let Some(&(s, n)) = self.blocks.last() {
            if n != block.1 {
                break;
            }
            self.blocks.pop();
            block = (s + block.0, n + block.1);
        }
        self.blocks.push(block);
    }

    /// Folds another partial sum in, as when combining independent chunks.
    pub fn merge(&mut self, other: &PairwiseSum) {
        let mut all: Vec<(f64, u64)> = self
            .blocks
            .drain(..)
            .chain(other.blocks.iter().copied())
            .collect();
        all.sort_by_key(|b| std::cmp::Reverse(b.1));
        for (s, n) in all {
            let mut block = (s, n);
            while let Some(&(ps, pn)) = self.blocks.last() {
                if pn > block.1 {
                    break;
                }
                self.blocks.pop();
                block = (ps + block.0, pn + block.1);
            }
            self.blocks.push(block);
        }
    }

    pub fn count(&self) -> u64 {
        self.blocks.iter().map(|b| b.1).sum()
    }

    pub fn sum(&self) -> f64 {
        self.blocks.iter().rev().fold(0.0, |acc, b| acc + b.0)
    }
}

/// Incremental dataset cross-entropy.
#[derive(Debug, Clone)]
pub struct XentAccumulator {
    opts: XentOptions,
    classes: Option<usize>,
    sum: PairwiseSum,
}

impl XentAccumulator {
    pub fn new(opts: XentOptions) -> Self {
        Self {
            opts,
            classes: None,
            sum: PairwiseSum::default(),
        }
    }

    pub fn push(&mut self, r: &ProbRecord) -> Result<(), ProbaError> {
        match self.classes {
            Some(k) if k != r.classes() => {
                return Err(ProbaError::MixedDimensions {
                    expected: k,
                    found: r.classes(),
                })
            }
            _ => self.classes = Some(r.classes()),
        }
        self.sum.add(xent_unit(r, &self.opts));
        Ok(())
    }

    /// Combines a chunk computed independently with the same options.
    pub fn merge(&mut self, other: &XentAccumulator) -> Result<(), ProbaError> {
        match (self.classes, other.classes) {
            (Some(a), Some(b)) if a != b => {
                return Err(ProbaError::MixedDimensions {
                    expected: a,
                    found: b,
                })
            }
            (None, b) => self.classes = b,
            _ => {}
        }
        self.sum.merge(&other.sum);
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.sum.count()
    }

    pub fn finish(&self) -> Result<f64, ProbaError> {
        let n = self.count();
        if n == 0 {
            return Err(ProbaError::EmptyDataset);
        }
        let total = self.sum.sum();
        Ok(match self.opts.reduce {
            Reduction::Mean => total / n as f64,
            Reduction::Sum => total,
        })
    }
}

/// Cross-entropy over a dataset, averaged or summed per `opts`.
pub fn xent_dataset(rs: &[ProbRecord], opts: &XentOptions) -> Result<f64, ProbaError> {
    let mut acc = XentAccumulator::new(*opts);
    for r in rs {
        acc.push(r)?;
    }
    acc.finish()
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax_rule(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Tallies `(true class, argmax)` over the records.
pub fn harden(rs: &[ProbRecord], registry: ClassRegistry) -> Result<ConfusionMatrix, ProbaError> {
    let k = registry.len();
    let mut tally = Tally::new(registry);
    for r in rs {
        if r.classes() != k {
            return Err(ProbaError::MixedDimensions {
                expected: k,
                found: r.classes(),
            });
        }
        tally.record(r.true_class(), r.predicted_class())?;
    }
    Ok(tally.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(true_class: usize, probs: &[f64]) -> ProbRecord {
        ProbRecord::new(true_class, probs.to_vec()).unwrap()
    }

    #[test]
    fn record_validation() {
        assert!(ProbRecord::new(0, vec![1.0]).is_err());
        assert!(ProbRecord::new(2, vec![0.5, 0.5]).is_err());
        assert!(ProbRecord::new(0, vec![0.5, 0.4]).is_err());
        assert!(ProbRecord::new(0, vec![1.2, -0.2]).is_err());
        assert!(ProbRecord::new(0, vec![f64::NAN, 1.0]).is_err());
        assert!(ProbRecord::new(0, vec![0.5, 0.5 + 5e-7]).is_ok());
    }

    #[test]
    fn options_validation() {
        assert!(XentOptions::new(0.0, Reduction::Mean).is_err());
        assert!(XentOptions::new(1e-3, Reduction::Mean).is_err());
        assert!(XentOptions::new(1e-6, Reduction::Sum).is_ok());
        assert_eq!(XentOptions::default().epsilon(), 1e-15);
    }

    #[test]
    fn unit_cross_entropy() {
        let opts = XentOptions::default();
        let one_hot = rec(1, &[0.0, 1.0, 0.0]);
        let x = xent_unit(&one_hot, &opts);
        assert_eq!(x, 0.0);
        assert!(x.is_sign_positive());
        let r = rec(2, &[0.3, 0.3, 0.4]);
        assert!((xent_unit(&r, &opts) - 0.916_290_731_874_155).abs() < 1e-12);
        let zero = rec(0, &[0.0, 1.0]);
        assert_eq!(xent_unit(&zero, &opts), -(1e-15f64).ln());
    }

    #[test]
    fn dataset_reductions() {
        let r = rec(0, &[0.25, 0.75]);
        let many = vec![r.clone(); 7];
        let mean = xent_dataset(&many, &XentOptions::default()).unwrap();
        let unit = xent_unit(&r, &XentOptions::default());
        assert!((mean - unit).abs() < 1e-15);
        let sum = xent_dataset(&many, &XentOptions::new(1e-15, Reduction::Sum).unwrap()).unwrap();
        assert!((sum - 7.0 * unit).abs() < 1e-12);
        assert_eq!(
            xent_dataset(&[], &XentOptions::default()),
            Err(ProbaError::EmptyDataset)
        );
        let mixed = vec![rec(0, &[0.5, 0.5]), rec(0, &[0.5, 0.25, 0.25])];
        assert_eq!(
            xent_dataset(&mixed, &XentOptions::default()),
            Err(ProbaError::MixedDimensions {
                expected: 2,
                found: 3
            })
        );
    }

    #[test]
    fn pairwise_sum_matches_exact_small_sums() {
        let mut s = PairwiseSum::default();
        for i in 1..=100 {
            s.add(i as f64);
        }
        assert_eq!(s.sum(), 5050.0);
        assert_eq!(s.count(), 100);

        let mut a = PairwiseSum::default();
        let mut b = PairwiseSum::default();
        (1..=37).for_each(|i| a.add(i as f64));
        (38..=100).for_each(|i| b.add(i as f64));
        a.merge(&b);
        assert_eq!(a.sum(), 5050.0);
        assert_eq!(a.count(), 100);
    }

    #[test]
    fn accumulator_chunks_combine() {
        let rs: Vec<ProbRecord> = (0..50)
            .map(|i| {
                let p = 0.01 + (i as f64) / 60.0;
                rec(i % 2, &[p, 1.0 - p])
            })
            .collect();
        let whole = xent_dataset(&rs, &XentOptions::default()).unwrap();
        let mut left = XentAccumulator::new(XentOptions::default());
        let mut right = XentAccumulator::new(XentOptions::default());
        rs[..20].iter().for_each(|r| left.push(r).unwrap());
        rs[20..].iter().for_each(|r| right.push(r).unwrap());
        left.merge(&right).unwrap();
        assert!((left.finish().unwrap() - whole).abs() < 1e-12);
    }

    #[test]
    fn argmax_ties_and_one_hot() {
        assert_eq!(argmax_rule(&[0.25; 4]), 0);
        assert_eq!(argmax_rule(&[0.0, 0.0, 1.0]), 2);
        assert_eq!(argmax_rule(&[0.1, 0.1, 0.4, 0.2, 0.1, 0.05, 0.05]), 2);
        assert_eq!(argmax_rule(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn harden_tallies_argmax() {
        let reg = ClassRegistry::new((0..7).map(|i| i.to_string())).unwrap();
        // true class 2 holds 0.4, but class 6 holds more
        let r = rec(2, &[0.05, 0.05, 0.4, 0.0, 0.0, 0.0, 0.5]);
        let m = harden(&[r], reg.clone()).unwrap();
        assert_eq!(m.get(2, 6), 1);
        assert_eq!(m.total(), 1);

        let bad = rec(0, &[0.5, 0.5]);
        assert!(matches!(
            harden(&[bad], reg),
            Err(ProbaError::MixedDimensions { .. })
        ));
    }
}
