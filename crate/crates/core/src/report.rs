//! Evaluation and comparison reports, with text and JSON renderings.
//!
//! JSON output is deterministic: keys appear in a fixed order, exact
//! fractions are printed next to a 20-digit decimal expansion, and undefined
//! metrics carry their reason instead of a number.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::confusion::{ClassRegistry, ConfusionMatrix};
use crate::metrics::{
    evaluate, Averaging, EvalOptions, Evaluation, MetricValue, MetricsError, PerClassBreakdown,
    SkippedClasses, UndefinedReason, METRIC_NAMES,
};
use crate::proba::{Reduction, XentOptions};
use crate::rational::{parse_fraction, to_decimal, to_fraction_string, Rational};

pub const TOOL_NAME: &str = "clfmetrics";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Bumped only on incompatible changes; new metrics append keys.
pub const SCHEMA_VERSION: u32 = 1;

/// Fractional digits of the decimal rendering of exact values in JSON.
const JSON_DIGITS: usize = 20;
/// Fractional digits in text tables.
const TEXT_DIGITS: usize = 4;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct WireValue {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exact: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    undefined: Option<UndefinedReason>,
}

impl From<MetricValue> for WireValue {
    fn from(v: MetricValue) -> Self {
        match v {
            MetricValue::Defined { exact: Some(r), .. } => Self {
                value: Some(to_decimal(&r, JSON_DIGITS)),
                exact: Some(to_fraction_string(&r)),
                undefined: None,
            },
            MetricValue::Defined { value, exact: None } => Self {
                value: Some(value.to_string()),
                exact: None,
                undefined: None,
            },
            MetricValue::Undefined(reason) => Self {
                value: None,
                exact: None,
                undefined: Some(reason),
            },
        }
    }
}

impl TryFrom<WireValue> for MetricValue {
    type Error = String;

    fn try_from(w: WireValue) -> Result<Self, Self::Error> {
        match (w.undefined, w.exact, w.value) {
            (Some(reason), None, None) => Ok(MetricValue::Undefined(reason)),
            (None, Some(exact), _) => parse_fraction(&exact)
                .map(MetricValue::from_rational)
                .ok_or_else(|| format!("bad fraction `{exact}`")),
            (None, None, Some(value)) => value
                .parse::<f64>()
                .map(MetricValue::from_f64)
                .map_err(|_| format!("bad number `{value}`")),
            _ => Err("metric needs exactly one of `value` or `undefined`".into()),
        }
    }
}

impl Serialize for MetricValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        WireValue::from(self.clone()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for MetricValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        MetricValue::try_from(WireValue::deserialize(d)?).map_err(D::Error::custom)
    }
}

/// Where the weights of the weighted balanced accuracy came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsSource {
    /// Actual-class frequencies.
    #[default]
    Frequency,
    /// A `class,weight` file.
    File(String),
}

/// Settings that influenced the numbers in a report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub averaging: Averaging,
    pub weights: WeightsSource,
    /// Set for probability input only.
    pub epsilon: Option<f64>,
    pub reduce: Option<Reduction>,
}

impl ReportOptions {
    pub fn with_xent(mut self, opts: &XentOptions) -> Self {
        self.epsilon = Some(opts.epsilon());
        self.reduce = Some(opts.reduce());
        self
    }
}

/// All metrics for one model on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "WireReport", try_from = "WireReport")]
pub struct EvaluationReport {
    pub tool_version: String,
    pub dataset: String,
    pub registry: ClassRegistry,
    pub total: u64,
    /// Actual-class counts, per class.
    pub support: Vec<u64>,
    pub options: ReportOptions,
    pub evaluation: Evaluation,
    pub cross_entropy: Option<MetricValue>,
}

impl EvaluationReport {
    pub fn from_matrix(
        dataset: impl Into<String>,
        m: &ConfusionMatrix,
        eval: &EvalOptions,
        options: ReportOptions,
    ) -> Result<Self, MetricsError> {
        Ok(Self {
            tool_version: TOOL_VERSION.to_owned(),
            dataset: dataset.into(),
            registry: m.registry().clone(),
            total: m.total(),
            support: m.row_totals(),
            options,
            evaluation: evaluate(m, eval)?,
            cross_entropy: None,
        })
    }

    pub fn with_cross_entropy(mut self, xent: f64) -> Self {
        self.cross_entropy = Some(MetricValue::from_f64(xent));
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{TOOL_NAME} {}", self.tool_version).unwrap();
        self.write_body(&mut out);
        out
    }

    fn write_body(&self, out: &mut String) {
        let o = &self.options;
        writeln!(out, "dataset: {}", self.dataset).unwrap();
        writeln!(
            out,
            "classes: {}  units: {}",
            self.registry.len(),
            self.total
        )
        .unwrap();
        let mut opts = format!(
            "averaging={} weights={}",
            averaging_str(o.averaging),
            weights_str(&o.weights)
        );
        if let Some(e) = o.epsilon {
            write!(opts, " epsilon={e:e}").unwrap();
        }
        if let Some(r) = o.reduce {
            write!(opts, " reduce={}", r.as_str()).unwrap();
        }
        writeln!(out, "options: {opts}").unwrap();
        writeln!(out).unwrap();

        let rows: Vec<[String; 3]> = self
            .labeled_metrics()
            .into_iter()
            .map(|(label, v)| [label, fmt_text(v), fmt_exact(v)])
            .collect();
        write_table(out, &["metric", "value", "exact"], &rows);
        if let Some(k) = self.evaluation.kappa.value() {
            writeln!(out, "kappa agreement: {}", agreement_band(k)).unwrap();
        }
        writeln!(out).unwrap();

        let pc = &self.evaluation.per_class;
        let rows: Vec<[String; 5]> = self
            .registry
            .labels()
            .iter()
            .enumerate()
            .map(|(k, label)| {
                [
                    label.clone(),
                    self.support[k].to_string(),
                    fmt_text(&pc.precision[k]),
                    fmt_text(&pc.recall[k]),
                    fmt_text(&pc.f1[k]),
                ]
            })
            .collect();
        write_table(
            out,
            &["class", "support", "precision", "recall", "f1"],
            &rows,
        );
        let skipped = self.evaluation.skipped;
        if o.averaging == Averaging::Lenient && (skipped.precision > 0 || skipped.recall > 0) {
            writeln!(
                out,
                "lenient averaging skipped {} class(es) in precision, {} in recall",
                skipped.precision, skipped.recall
            )
            .unwrap();
        }
    }

    /// Display label and value of every reported metric, in report order.
    fn labeled_metrics(&self) -> Vec<(String, &MetricValue)> {
        let mut v: Vec<(String, &MetricValue)> = self
            .evaluation
            .entries()
            .into_iter()
            .map(|(name, v)| (display_name(name).to_owned(), v))
            .collect();
        if let Some(x) = &self.cross_entropy {
            let reduce = self.options.reduce.unwrap_or_default();
            v.push((format!("Cross-Entropy ({})", reduce.as_str()), x));
        }
        v
    }
}

fn averaging_str(a: Averaging) -> &'static str {
    match a {
        Averaging::Strict => "strict",
        Averaging::Lenient => "lenient",
    }
}

fn weights_str(w: &WeightsSource) -> String {
    match w {
        WeightsSource::Frequency => "frequency".into(),
        WeightsSource::File(p) => format!("file:{p}"),
    }
}

pub fn display_name(metric: &str) -> &str {
    match metric {
        "accuracy" => "Accuracy",
        "misclassification_rate" => "Misclassification Rate",
        "balanced_accuracy" => "Balanced Accuracy",
        "balanced_accuracy_weighted" => "Balanced Accuracy Weighted",
        "macro_precision" => "Macro Precision",
        "macro_recall" => "Macro Recall",
        "macro_f1" => "Macro F1",
        "micro_precision" => "Micro Precision",
        "micro_recall" => "Micro Recall",
        "micro_f1" => "Micro F1",
        "mcc" => "MCC",
        "kappa" => "Cohen's Kappa",
        other => other,
    }
}

/// Conventional reading of a Kappa value. Advisory text only.
pub fn agreement_band(kappa: f64) -> &'static str {
    match kappa {
        k if k < 0.0 => "worse than chance",
        k if k < 0.10 => "chance-level",
        k if k < 0.205 => "slight",
        k if k < 0.405 => "fair",
        k if k < 0.605 => "moderate",
        k if k < 0.805 => "substantial",
        k if k < 1.0 => "near perfect",
        _ => "perfect",
    }
}

/// 4-decimal text rendering; exact values are rounded from the fraction.
pub fn fmt_text(v: &MetricValue) -> String {
    match v {
        MetricValue::Defined { exact: Some(r), .. } => to_decimal(r, TEXT_DIGITS),
        MetricValue::Defined { value, .. } => format!("{value:.TEXT_DIGITS$}"),
        MetricValue::Undefined(r) => format!("undef({r})"),
    }
}

fn fmt_exact(v: &MetricValue) -> String {
    v.rational().map(to_fraction_string).unwrap_or_default()
}

fn write_table<const N: usize>(out: &mut String, header: &[&str; N], rows: &[[String; N]]) {
    let mut widths = header.map(str::len);
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |out: &mut String, cells: [&str; N]| {
        let mut s = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i == 0 {
                write!(s, "{cell:<w$}", w = widths[0]).unwrap();
            } else {
                write!(s, "  {cell:>w$}", w = widths[i]).unwrap();
            }
        }
        writeln!(out, "{}", s.trim_end()).unwrap();
    };
    line(out, *header);
    for row in rows {
        line(out, row.each_ref().map(String::as_str));
    }
}

#[derive(Serialize, Deserialize)]
struct WireClass {
    label: String,
    support: u64,
    precision: MetricValue,
    recall: MetricValue,
    f1: MetricValue,
}

#[derive(Serialize, Deserialize)]
struct WireReport {
    schema_version: u32,
    tool_version: String,
    dataset: String,
    k: usize,
    total: u64,
    classes: ClassRegistry,
    options: ReportOptions,
    #[serde(serialize_with = "ser_ordered", deserialize_with = "de_ordered")]
    metrics: Vec<(String, MetricValue)>,
    cross_entropy: Option<MetricValue>,
    per_class: Vec<WireClass>,
    skipped_classes: SkippedClasses,
}

fn ser_ordered<S: Serializer>(entries: &[(String, MetricValue)], s: S) -> Result<S::Ok, S::Error> {
    let mut map = s.serialize_map(Some(entries.len()))?;
    for (k, v) in entries {
        map.serialize_entry(k, v)?;
    }
    map.end()
}

fn de_ordered<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(String, MetricValue)>, D::Error> {
    Ok(BTreeMap::<String, MetricValue>::deserialize(d)?
        .into_iter()
        .collect())
}

impl From<EvaluationReport> for WireReport {
    fn from(r: EvaluationReport) -> Self {
        let pc = &r.evaluation.per_class;
        let per_class = r
            .registry
            .labels()
            .iter()
            .enumerate()
            .map(|(k, label)| WireClass {
                label: label.clone(),
                support: r.support[k],
                precision: pc.precision[k].clone(),
                recall: pc.recall[k].clone(),
                f1: pc.f1[k].clone(),
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            k: r.registry.len(),
            total: r.total,
            metrics: r
                .evaluation
                .entries()
                .into_iter()
                .map(|(n, v)| (n.to_owned(), v.clone()))
                .collect(),
            per_class,
            skipped_classes: r.evaluation.skipped,
            tool_version: r.tool_version,
            dataset: r.dataset,
            classes: r.registry,
            options: r.options,
            cross_entropy: r.cross_entropy,
        }
    }
}

impl TryFrom<WireReport> for EvaluationReport {
    type Error = String;

    fn try_from(w: WireReport) -> Result<Self, Self::Error> {
        if w.schema_version > SCHEMA_VERSION {
            return Err(format!("unsupported schema version {}", w.schema_version));
        }
        let k = w.classes.len();
        if w.k != k || w.per_class.len() != k {
            return Err(format!("report lists {} classes but k = {}", k, w.k));
        }
        for (c, label) in w.per_class.iter().zip(w.classes.labels()) {
            if &c.label != label {
                return Err(format!("per-class entry `{}` out of order", c.label));
            }
        }
        let undefined = || MetricValue::Undefined(UndefinedReason::EmptyDenominator);
        let mut evaluation = Evaluation {
            accuracy: undefined(),
            misclassification_rate: undefined(),
            balanced_accuracy: undefined(),
            balanced_accuracy_weighted: undefined(),
            macro_precision: undefined(),
            macro_recall: undefined(),
            macro_f1: undefined(),
            micro_precision: undefined(),
            micro_recall: undefined(),
            micro_f1: undefined(),
            mcc: undefined(),
            kappa: undefined(),
            per_class: PerClassBreakdown {
                precision: w.per_class.iter().map(|c| c.precision.clone()).collect(),
                recall: w.per_class.iter().map(|c| c.recall.clone()).collect(),
                f1: w.per_class.iter().map(|c| c.f1.clone()).collect(),
            },
            skipped: w.skipped_classes,
        };
        let mut metrics: BTreeMap<String, MetricValue> = w.metrics.into_iter().collect();
        for name in METRIC_NAMES {
            let v = metrics
                .remove(name)
                .ok_or_else(|| format!("missing metric `{name}`"))?;
            *evaluation.get_mut(name).expect("known metric") = v;
        }
        Ok(Self {
            tool_version: w.tool_version,
            dataset: w.dataset,
            support: w.per_class.iter().map(|c| c.support).collect(),
            registry: w.classes,
            total: w.total,
            options: w.options,
            evaluation,
            cross_entropy: w.cross_entropy,
        })
    }
}

fn delta(a: &MetricValue, b: &MetricValue) -> MetricValue {
    match (a, b) {
        (MetricValue::Undefined(r), _) | (_, MetricValue::Undefined(r)) => {
            MetricValue::Undefined(*r)
        }
        (
            MetricValue::Defined { exact: Some(x), .. },
            MetricValue::Defined { exact: Some(y), .. },
        ) => MetricValue::from_rational(y - x),
        (MetricValue::Defined { value: x, .. }, MetricValue::Defined { value: y, .. }) => {
            MetricValue::from_f64(y - x)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassDelta {
    pub label: String,
    pub precision: MetricValue,
    pub recall: MetricValue,
    pub f1: MetricValue,
}

/// Two reports side by side, with `b - a` deltas.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub a: EvaluationReport,
    pub b: EvaluationReport,
    /// `(metric, b - a)`; undefined where either side is undefined.
    pub deltas: Vec<(String, MetricValue)>,
    /// Present only when both sides share the same classes.
    pub per_class_deltas: Option<Vec<ClassDelta>>,
    /// Same classes and accuracy, yet different Kappa.
    pub equal_accuracy_different_kappa: bool,
    pub notes: Vec<String>,
}

impl ComparisonReport {
    pub fn new(a: EvaluationReport, b: EvaluationReport) -> Self {
        let mut deltas: Vec<(String, MetricValue)> = a
            .evaluation
            .entries()
            .into_iter()
            .zip(b.evaluation.entries())
            .map(|((name, x), (_, y))| (name.to_owned(), delta(x, y)))
            .collect();
        if let (Some(x), Some(y)) = (&a.cross_entropy, &b.cross_entropy) {
            deltas.push(("cross_entropy".to_owned(), delta(x, y)));
        }

        let same_classes = a.registry == b.registry;
        let per_class_deltas = same_classes.then(|| {
            let (pa, pb) = (&a.evaluation.per_class, &b.evaluation.per_class);
            a.registry
                .labels()
                .iter()
                .enumerate()
                .map(|(k, label)| ClassDelta {
                    label: label.clone(),
                    precision: delta(&pa.precision[k], &pb.precision[k]),
                    recall: delta(&pa.recall[k], &pb.recall[k]),
                    f1: delta(&pa.f1[k], &pb.f1[k]),
                })
                .collect()
        });

        let equal_accuracy = matches!(
            (a.evaluation.accuracy.rational(), b.evaluation.accuracy.rational()),
            (Some(x), Some(y)) if x == y
        );
        let kappa_differs = match (a.evaluation.kappa.rational(), b.evaluation.kappa.rational()) {
            (Some(x), Some(y)) => x != y,
            _ => a.evaluation.kappa != b.evaluation.kappa,
        };
        let equal_accuracy_different_kappa = same_classes && equal_accuracy && kappa_differs;

        let mut notes = Vec::new();
        if equal_accuracy_different_kappa {
            notes.push(
                "accuracy is identical but Cohen's Kappa differs: the models split their errors \
                 differently relative to chance agreement"
                    .to_owned(),
            );
        }
        if !same_classes {
            notes.push(
                "class sets differ: per-class deltas suppressed; Cohen's Kappa corrects each side \
                 for its own chance agreement and is the comparable figure across datasets"
                    .to_owned(),
            );
        }
        Self {
            a,
            b,
            deltas,
            per_class_deltas,
            equal_accuracy_different_kappa,
            notes,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("comparison serializes");
        s.push('\n');
        s
    }

    /// Side-by-side table. `color` wraps the flagged row in ANSI bold.
    pub fn to_text(&self, color: bool) -> String {
        let mut out = String::new();
        writeln!(out, "{TOOL_NAME} {}", self.a.tool_version).unwrap();
        writeln!(
            out,
            "A: {}  ({} classes, {} units)",
            self.a.dataset,
            self.a.registry.len(),
            self.a.total
        )
        .unwrap();
        writeln!(
            out,
            "B: {}  ({} classes, {} units)",
            self.b.dataset,
            self.b.registry.len(),
            self.b.total
        )
        .unwrap();
        writeln!(out).unwrap();

        let a_metrics = self.a.labeled_metrics();
        let b_metrics = self.b.labeled_metrics();
        let mut flagged = Vec::new();
        let rows: Vec<[String; 5]> = self
            .deltas
            .iter()
            .enumerate()
            .map(|(i, (name, d))| {
                let flag =
                    self.equal_accuracy_different_kappa && (name == "accuracy" || name == "kappa");
                if flag {
                    flagged.push(i);
                }
                [
                    a_metrics[i].0.clone(),
                    fmt_text(a_metrics[i].1),
                    fmt_text(b_metrics[i].1),
                    fmt_signed(d),
                    if flag { "*".into() } else { String::new() },
                ]
            })
            .collect();
        let mut table = String::new();
        write_table(&mut table, &["metric", "A", "B", "B-A", ""], &rows);
        for (i, line) in table.lines().enumerate() {
            // first line is the header
            if color && i > 0 && flagged.contains(&(i - 1)) {
                writeln!(out, "\x1b[1;33m{line}\x1b[0m").unwrap();
            } else {
                writeln!(out, "{line}").unwrap();
            }
        }
        for (side, r) in [("A", &self.a), ("B", &self.b)] {
            if let Some(k) = r.evaluation.kappa.value() {
                writeln!(out, "kappa agreement {side}: {}", agreement_band(k)).unwrap();
            }
        }

        if let Some(pcd) = &self.per_class_deltas {
            writeln!(out).unwrap();
            let rows: Vec<[String; 4]> = pcd
                .iter()
                .map(|c| {
                    [
                        c.label.clone(),
                        fmt_signed(&c.precision),
                        fmt_signed(&c.recall),
                        fmt_signed(&c.f1),
                    ]
                })
                .collect();
            write_table(
                &mut out,
                &["class", "precision B-A", "recall B-A", "f1 B-A"],
                &rows,
            );
        }
        for note in &self.notes {
            writeln!(out, "note: {note}").unwrap();
        }
        out
    }
}

fn fmt_signed(v: &MetricValue) -> String {
    let s = fmt_text(v);
    if v.value().is_some_and(|x| x >= 0.0) && !s.starts_with('-') {
        format!("+{s}")
    } else {
        s
    }
}

impl Serialize for ComparisonReport {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        struct Deltas<'a>(&'a [(String, MetricValue)]);
        impl Serialize for Deltas<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                ser_ordered(self.0, s)
            }
        }
        let mut map = s.serialize_map(Some(8))?;
        map.serialize_entry("schema_version", &SCHEMA_VERSION)?;
        map.serialize_entry("tool_version", &self.a.tool_version)?;
        map.serialize_entry("a", &self.a)?;
        map.serialize_entry("b", &self.b)?;
        map.serialize_entry("deltas", &Deltas(&self.deltas))?;
        map.serialize_entry("per_class_deltas", &self.per_class_deltas)?;
        map.serialize_entry(
            "equal_accuracy_different_kappa",
            &self.equal_accuracy_different_kappa,
        )?;
        map.serialize_entry("notes", &self.notes)?;
        map.end()
    }
}

/// Exact value of a metric, if it has one.
pub fn exact_of<'a>(report: &'a EvaluationReport, metric: &str) -> Option<&'a Rational> {
    report
        .evaluation
        .get(metric)
        .and_then(MetricValue::rational)
}
