//! Scalar metrics computed from a [`ConfusionMatrix`].
//!
//! Every count-based metric keeps its numerator and denominator as integers
//! and divides once, so fractions such as `37/52` are reproduced exactly. A
//! vanishing denominator yields [`MetricValue::Undefined`] with a reason
//! instead of a silent `0` or `NaN`.

use std::fmt;

use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confusion::{ConfusionMatrix, OneVsRest};
use crate::rational::{frac, to_f64, Rational};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("invalid class weights: {0}")]
    InvalidWeights(String),
}

/// Why a metric has no value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UndefinedReason {
    /// A count in the denominator is zero (no data, never predicted, ...).
    EmptyDenominator,
    /// Both terms of a harmonic mean are zero.
    DegenerateZeroOverZero,
}

impl UndefinedReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::EmptyDenominator => "empty_denominator",
            Self::DegenerateZeroOverZero => "degenerate_zero_over_zero",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "empty_denominator" => Some(Self::EmptyDenominator),
            "degenerate_zero_over_zero" => Some(Self::DegenerateZeroOverZero),
            _ => None,
        }
    }
}

impl fmt::Display for UndefinedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A metric result.
///
/// `exact` is present whenever the value is a ratio of counts; `value` is then
/// always the nearest `f64` to it.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricValue {
    Defined { value: f64, exact: Option<Rational> },
    Undefined(UndefinedReason),
}

impl MetricValue {
    pub fn from_rational(r: Rational) -> Self {
        Self::Defined {
            value: to_f64(&r),
            exact: Some(r),
        }
    }

    pub fn from_f64(value: f64) -> Self {
        Self::Defined { value, exact: None }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Self::Defined { value, .. } => Some(*value),
            Self::Undefined(_) => None,
        }
    }

    pub fn rational(&self) -> Option<&Rational> {
        match self {
            Self::Defined { exact, .. } => exact.as_ref(),
            Self::Undefined(_) => None,
        }
    }

    pub fn undefined_reason(&self) -> Option<UndefinedReason> {
        match self {
            Self::Defined { .. } => None,
            Self::Undefined(r) => Some(*r),
        }
    }

    pub fn is_defined(&self) -> bool {
        matches!(self, Self::Defined { .. })
    }
}

impl fmt::Display for MetricValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Defined { value, .. } => match f.precision() {
                Some(p) => write!(f, "{value:.p$}"),
                None => write!(f, "{value}"),
            },
            Self::Undefined(r) => write!(f, "undef({r})"),
        }
    }
}

/// How macro averages treat classes whose own value is undefined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Any undefined class makes the average undefined.
    #[default]
    Strict,
    /// Average over the defined classes only, counting the others as skipped.
    Lenient,
}

/// Result of averaging per-class values.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroAverage {
    pub value: MetricValue,
    /// Classes left out because their value was undefined.
    pub skipped: usize,
}

/// Per-class precision, recall and F1, indexed like the class registry.
#[derive(Debug, Clone, PartialEq)]
pub struct PerClassBreakdown {
    pub precision: Vec<MetricValue>,
    pub recall: Vec<MetricValue>,
    pub f1: Vec<MetricValue>,
}

/// Non-negative class weights with a positive sum.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    weights: Vec<f64>,
}

impl ClassWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self, MetricsError> {
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(MetricsError::InvalidWeights(format!(
                "weight {w} is not a finite non-negative number"
            )));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(MetricsError::InvalidWeights("weights sum to zero".into()));
        }
        Ok(Self { weights })
    }

    pub fn uniform(classes: usize) -> Result<Self, MetricsError> {
        Self::new(vec![1.0; classes])
    }

    /// Relative frequency of each actual class, `row_total(k) / s`.
    pub fn frequencies(m: &ConfusionMatrix) -> Result<Self, MetricsError> {
        let s = m.total();
        if s == 0 {
            return Err(MetricsError::InvalidWeights(
                "class frequencies of an empty matrix".into(),
            ));
        }
        Self::new(
            m.row_totals()
                .into_iter()
                .map(|t| to_f64(&frac(t, s)))
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Sum of the weights, `W`.
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

fn ratio_or_empty(num: u64, den: u64) -> MetricValue {
    if den == 0 {
        MetricValue::Undefined(UndefinedReason::EmptyDenominator)
    } else {
        MetricValue::from_rational(frac(num, den))
    }
}

/// Share of units on the diagonal.
pub fn accuracy(m: &ConfusionMatrix) -> MetricValue {
    ratio_or_empty(m.correct(), m.total())
}

/// `1 - accuracy`.
pub fn misclassification_rate(m: &ConfusionMatrix) -> MetricValue {
    match accuracy(m) {
        MetricValue::Defined {
            exact: Some(acc), ..
        } => MetricValue::from_rational(Rational::from_integer(1) - acc),
        other => other,
    }
}

/// `tp / (tp + fp)`; undefined when the class is never predicted.
pub fn precision(o: &OneVsRest) -> MetricValue {
    ratio_or_empty(o.tp, o.tp + o.fp)
}

/// `tp / (tp + fn)`; undefined when the class never occurs.
pub fn recall(o: &OneVsRest) -> MetricValue {
    ratio_or_empty(o.tp, o.tp + o.fn_)
}

/// Harmonic mean of a precision and a recall.
pub fn f1_score(precision: &MetricValue, recall: &MetricValue) -> MetricValue {
    use MetricValue::*;
    match (precision, recall) {
        (Undefined(r), _) | (_, Undefined(r)) => Undefined(*r),
        (Defined { exact: Some(p), .. }, Defined { exact: Some(r), .. }) => {
            let sum = p + r;
            if sum.is_zero() {
                return Undefined(UndefinedReason::DegenerateZeroOverZero);
            }
            let exact = Rational::from_integer(2)
                .checked_mul(p)
                .and_then(|x| x.checked_mul(r))
                .and_then(|x| x.checked_div(&sum));
            match exact {
                Some(x) => MetricValue::from_rational(x),
                None => harmonic_f64(to_f64(p), to_f64(r)),
            }
        }
        (Defined { value: p, .. }, Defined { value: r, .. }) => harmonic_f64(*p, *r),
    }
}

fn harmonic_f64(p: f64, r: f64) -> MetricValue {
    if p + r == 0.0 {
        MetricValue::Undefined(UndefinedReason::DegenerateZeroOverZero)
    } else {
        MetricValue::from_f64(2.0 * p * r / (p + r))
    }
}

pub fn per_class(m: &ConfusionMatrix) -> PerClassBreakdown {
    let k = m.classes();
    let mut out = PerClassBreakdown {
        precision: Vec::with_capacity(k),
        recall: Vec::with_capacity(k),
        f1: Vec::with_capacity(k),
    };
    for class in 0..k {
        let o = m.one_vs_rest(class).expect("class index in range");
        let p = precision(&o);
        let r = recall(&o);
        out.f1.push(f1_score(&p, &r));
        out.precision.push(p);
        out.recall.push(r);
    }
    out
}

/// Unweighted mean of per-class values.
pub fn mean_of(values: &[MetricValue], mode: Averaging) -> MacroAverage {
    let skipped = values.iter().filter(|v| !v.is_defined()).count();
    let first_undefined = values.iter().find_map(MetricValue::undefined_reason);
    let defined: Vec<&MetricValue> = values.iter().filter(|v| v.is_defined()).collect();

    let value = if (mode == Averaging::Strict && skipped > 0) || defined.is_empty() {
        MetricValue::Undefined(first_undefined.unwrap_or(UndefinedReason::EmptyDenominator))
    } else {
        let n = defined.len();
        let exact = defined
            .iter()
            .map(|v| v.rational().cloned())
            .collect::<Option<Vec<_>>>()
            .and_then(|rs| {
                rs.iter()
                    .try_fold(Rational::zero(), |acc, r| acc.checked_add(r))
            })
            .and_then(|sum| sum.checked_div(&Rational::from_integer(n as i128)));
        match exact {
            Some(x) => MetricValue::from_rational(x),
            None => {
                let sum: f64 = defined.iter().filter_map(|v| v.value()).sum();
                MetricValue::from_f64(sum / n as f64)
            }
        }
    };
    MacroAverage { value, skipped }
}

fn per_class_precision(m: &ConfusionMatrix) -> Vec<MetricValue> {
    (0..m.classes())
        .map(|k| precision(&m.one_vs_rest(k).expect("class index in range")))
        .collect()
}

fn per_class_recall(m: &ConfusionMatrix) -> Vec<MetricValue> {
    (0..m.classes())
        .map(|k| recall(&m.one_vs_rest(k).expect("class index in range")))
        .collect()
}

/// Arithmetic mean of the per-class recalls (strict).
pub fn balanced_accuracy(m: &ConfusionMatrix) -> MetricValue {
    balanced_accuracy_with(m, Averaging::Strict).value
}

pub fn balanced_accuracy_with(m: &ConfusionMatrix, mode: Averaging) -> MacroAverage {
    mean_of(&per_class_recall(m), mode)
}

/// Weighted mean of the per-class recalls, `sum(w_k * recall_k) / W`.
///
/// Classes with zero weight may have an undefined recall; any other undefined
/// recall makes the result undefined.
pub fn balanced_accuracy_weighted(
    m: &ConfusionMatrix,
    weights: &ClassWeights,
) -> Result<MetricValue, MetricsError> {
    if weights.len() != m.classes() {
        return Err(MetricsError::InvalidWeights(format!(
            "{} weights for {} classes",
            weights.len(),
            m.classes()
        )));
    }
    let mut acc = 0.0;
    for (r, &w) in per_class_recall(m).iter().zip(weights.as_slice()) {
        if w == 0.0 {
            continue;
        }
        match r {
            MetricValue::Defined { value, .. } => acc += w * value,
            MetricValue::Undefined(reason) => return Ok(MetricValue::Undefined(*reason)),
        }
    }
    Ok(MetricValue::from_f64(acc / weights.total()))
}

pub fn macro_precision(m: &ConfusionMatrix) -> MetricValue {
    macro_precision_with(m, Averaging::Strict).value
}

pub fn macro_precision_with(m: &ConfusionMatrix, mode: Averaging) -> MacroAverage {
    mean_of(&per_class_precision(m), mode)
}

pub fn macro_recall(m: &ConfusionMatrix) -> MetricValue {
    macro_recall_with(m, Averaging::Strict).value
}

pub fn macro_recall_with(m: &ConfusionMatrix, mode: Averaging) -> MacroAverage {
    mean_of(&per_class_recall(m), mode)
}

/// Harmonic mean of macro precision and macro recall.
pub fn macro_f1(m: &ConfusionMatrix) -> MetricValue {
    macro_f1_with(m, Averaging::Strict)
}

pub fn macro_f1_with(m: &ConfusionMatrix, mode: Averaging) -> MetricValue {
    f1_score(
        &macro_precision_with(m, mode).value,
        &macro_recall_with(m, mode).value,
    )
}

/// Pooled precision, `sum(tp_k) / sum(col_total_k)`.
pub fn micro_precision(m: &ConfusionMatrix) -> MetricValue {
    let tp: u64 = (0..m.classes()).map(|k| m.get(k, k)).sum();
    ratio_or_empty(tp, m.col_totals().iter().sum())
}

/// Pooled recall, `sum(tp_k) / sum(row_total_k)`.
pub fn micro_recall(m: &ConfusionMatrix) -> MetricValue {
    let tp: u64 = (0..m.classes()).map(|k| m.get(k, k)).sum();
    ratio_or_empty(tp, m.row_totals().iter().sum())
}

/// Harmonic mean of micro precision and micro recall.
///
/// The two are always equal, so when both are zero the pooled ratio `0` is
/// returned rather than `0/0`.
pub fn micro_f1(m: &ConfusionMatrix) -> MetricValue {
    let p = micro_precision(m);
    let r = micro_recall(m);
    match f1_score(&p, &r) {
        MetricValue::Undefined(UndefinedReason::DegenerateZeroOverZero) => p,
        other => other,
    }
}

/// Integer intermediates shared by the multi-class MCC and Kappa.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgreementTerms {
    /// `c * s - sum(p_k * t_k)`
    pub numerator: i128,
    /// `s^2 - sum(p_k * t_k)`
    pub kappa_denominator: i128,
    /// `s^2 - sum(p_k^2)`
    pub predicted_spread: i128,
    /// `s^2 - sum(t_k^2)`
    pub actual_spread: i128,
    pub total: u64,
    pub correct: u64,
}

impl AgreementTerms {
    pub fn of(m: &ConfusionMatrix) -> Self {
        let s = i128::from(m.total());
        let c = i128::from(m.correct());
        let p: Vec<i128> = m.col_totals().into_iter().map(i128::from).collect();
        let t: Vec<i128> = m.row_totals().into_iter().map(i128::from).collect();
        let pt: i128 = p.iter().zip(&t).map(|(a, b)| a * b).sum();
        let pp: i128 = p.iter().map(|a| a * a).sum();
        let tt: i128 = t.iter().map(|a| a * a).sum();
        Self {
            numerator: c * s - pt,
            kappa_denominator: s * s - pt,
            predicted_spread: s * s - pp,
            actual_spread: s * s - tt,
            total: m.total(),
            correct: m.correct(),
        }
    }
}

fn correlation(numerator: i128, radicand: u128) -> MetricValue {
    if radicand == 0 {
        return MetricValue::from_rational(Rational::zero());
    }
    let value = numerator as f64 / (radicand as f64).sqrt();
    MetricValue::from_f64(value.clamp(-1.0, 1.0))
}

/// Matthews correlation coefficient of a two-class tiling.
///
/// A zero factor under the root gives `0`; an empty tiling is undefined.
pub fn mcc_binary(o: &OneVsRest) -> MetricValue {
    if o.total() == 0 {
        return MetricValue::Undefined(UndefinedReason::EmptyDenominator);
    }
    let (tp, fp, fn_, tn) = (
        u128::from(o.tp),
        u128::from(o.fp),
        u128::from(o.fn_),
        u128::from(o.tn),
    );
    let numerator = (tp * tn) as i128 - (fp * fn_) as i128;
    let radicand = (tp + fn_) * (tp + fp) * (tn + fn_) * (tn + fp);
    correlation(numerator, radicand)
}

/// Multi-class MCC, `(c*s - sum p_k t_k) / sqrt((s^2 - sum p_k^2)(s^2 - sum t_k^2))`.
pub fn mcc_multiclass(m: &ConfusionMatrix) -> MetricValue {
    let terms = AgreementTerms::of(m);
    if terms.total == 0 {
        return MetricValue::Undefined(UndefinedReason::EmptyDenominator);
    }
    let radicand = terms.predicted_spread as u128 * terms.actual_spread as u128;
    correlation(terms.numerator, radicand)
}

/// Observed and chance agreement of a two-class tiling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KappaTerms {
    /// `P_o`, the accuracy.
    pub observed: Rational,
    /// Chance agreement on the positive class.
    pub positive: Rational,
    /// Chance agreement on the negative class.
    pub negative: Rational,
    /// `P_e = positive + negative`.
    pub expected: Rational,
}

impl KappaTerms {
    /// `None` for an empty tiling.
    pub fn of(o: &OneVsRest) -> Option<Self> {
        let s = o.total();
        if s == 0 {
            return None;
        }
        let share = |n: u64| frac(n, s);
        let observed = share(o.tp + o.tn);
        let positive = share(o.tp + o.fn_) * share(o.tp + o.fp);
        let negative = share(o.tn + o.fp) * share(o.tn + o.fn_);
        Some(Self {
            observed,
            expected: positive + negative,
            positive,
            negative,
        })
    }
}

fn kappa_degenerate(perfect: bool) -> MetricValue {
    MetricValue::from_rational(Rational::from_integer(i128::from(perfect)))
}

/// Cohen's Kappa, `(P_o - P_e) / (1 - P_e)`.
///
/// With `P_e = 1` the result is `1` for perfect agreement and `0` otherwise.
pub fn kappa_binary(o: &OneVsRest) -> MetricValue {
    let Some(t) = KappaTerms::of(o) else {
        return MetricValue::Undefined(UndefinedReason::EmptyDenominator);
    };
    let one = Rational::from_integer(1);
    if t.expected == one {
        return kappa_degenerate(t.observed == one);
    }
    MetricValue::from_rational((t.observed - t.expected) / (one - t.expected))
}

/// Multi-class Kappa, `(c*s - sum p_k t_k) / (s^2 - sum p_k t_k)`.
pub fn kappa_multiclass(m: &ConfusionMatrix) -> MetricValue {
    let terms = AgreementTerms::of(m);
    if terms.total == 0 {
        return MetricValue::Undefined(UndefinedReason::EmptyDenominator);
    }
    if terms.kappa_denominator == 0 {
        return kappa_degenerate(terms.correct == terms.total);
    }
    MetricValue::from_rational(Rational::new(terms.numerator, terms.kappa_denominator))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalOptions {
    pub averaging: Averaging,
    /// Weights for the weighted balanced accuracy; actual-class frequencies
    /// when `None`.
    pub weights: Option<ClassWeights>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedClasses {
    pub precision: usize,
    pub recall: usize,
}

/// Every matrix metric for one model on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: MetricValue,
    pub misclassification_rate: MetricValue,
    pub balanced_accuracy: MetricValue,
    pub balanced_accuracy_weighted: MetricValue,
    pub macro_precision: MetricValue,
    pub macro_recall: MetricValue,
    pub macro_f1: MetricValue,
    pub micro_precision: MetricValue,
    pub micro_recall: MetricValue,
    pub micro_f1: MetricValue,
    pub mcc: MetricValue,
    pub kappa: MetricValue,
    pub per_class: PerClassBreakdown,
    pub skipped: SkippedClasses,
}

/// Names of the aggregate metrics, in report order.
pub const METRIC_NAMES: [&str; 12] = [
    "accuracy",
    "misclassification_rate",
    "balanced_accuracy",
    "balanced_accuracy_weighted",
    "macro_precision",
    "macro_recall",
    "macro_f1",
    "micro_precision",
    "micro_recall",
    "micro_f1",
    "mcc",
    "kappa",
];

impl Evaluation {
    /// Aggregate metrics paired with their names, in [`METRIC_NAMES`] order.
    pub fn entries(&self) -> [(&'static str, &MetricValue); 12] {
        let values = [
            &self.accuracy,
            &self.misclassification_rate,
            &self.balanced_accuracy,
            &self.balanced_accuracy_weighted,
            &self.macro_precision,
            &self.macro_recall,
            &self.macro_f1,
            &self.micro_precision,
            &self.micro_recall,
            &self.micro_f1,
            &self.mcc,
            &self.kappa,
        ];
        let mut i = 0;
        values.map(|v| {
            let e = (METRIC_NAMES[i], v);
            i += 1;
            e
        })
    }

    pub fn get(&self, name: &str) -> Option<&MetricValue> {
        self.entries()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| v)
    }

    pub(crate) fn get_mut(&mut self, name: &str) -> Option<&mut MetricValue> {
        Some(match name {
            "accuracy" => &mut self.accuracy,
            "misclassification_rate" => &mut self.misclassification_rate,
            "balanced_accuracy" => &mut self.balanced_accuracy,
            "balanced_accuracy_weighted" => &mut self.balanced_accuracy_weighted,
            "macro_precision" => &mut self.macro_precision,
            "macro_recall" => &mut self.macro_recall,
            "macro_f1" => &mut self.macro_f1,
            "micro_precision" => &mut self.micro_precision,
            "micro_recall" => &mut self.micro_recall,
            "micro_f1" => &mut self.micro_f1,
            "mcc" => &mut self.mcc,
            "kappa" => &mut self.kappa,
            _ => return None,
        })
    }
}

/// Computes the full metric suite.
///
/// Fails only when explicitly supplied weights do not match the class count.
pub fn evaluate(m: &ConfusionMatrix, opts: &EvalOptions) -> Result<Evaluation, MetricsError> {
    let precision = macro_precision_with(m, opts.averaging);
    let recall = macro_recall_with(m, opts.averaging);
    let weighted = match &opts.weights {
        Some(w) => balanced_accuracy_weighted(m, w)?,
        None => match ClassWeights::frequencies(m) {
            Ok(w) => balanced_accuracy_weighted(m, &w)?,
            Err(_) => MetricValue::Undefined(UndefinedReason::EmptyDenominator),
        },
    };
    Ok(Evaluation {
        accuracy: accuracy(m),
        misclassification_rate: misclassification_rate(m),
        balanced_accuracy: recall.value.clone(),
        balanced_accuracy_weighted: weighted,
        macro_f1: f1_score(&precision.value, &recall.value),
        macro_precision: precision.value,
        macro_recall: recall.value,
        micro_precision: micro_precision(m),
        micro_recall: micro_recall(m),
        micro_f1: micro_f1(m),
        mcc: mcc_multiclass(m),
        kappa: kappa_multiclass(m),
        per_class: per_class(m),
        skipped: SkippedClasses {
            precision: precision.skipped,
            recall: recall.skipped,
        },
    })
}
