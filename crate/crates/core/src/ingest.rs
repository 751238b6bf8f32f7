//! Readers for the three input formats: label pairs, probability vectors and
//! pre-tallied matrices.
//!
//! All readers stream. Errors from malformed content carry the 1-based line
//! number where they were found.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use csv::{ReaderBuilder, StringRecord, StringRecordsIntoIter, Trim};
use thiserror::Error;

use crate::confusion::{ClassRegistry, ConfusionError, ConfusionMatrix, Tally};
use crate::metrics::{ClassWeights, MetricsError};
use crate::proba::{prob_sum, ProbRecord, PROB_SUM_TOLERANCE};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: usize,
        message: String,
    },
    #[error("line {line}: empty label")]
    EmptyLabel { line: u64 },
    #[error("line {line}: probabilities sum to {sum}, not 1")]
    ProbSumOutOfTolerance { line: u64, sum: f64 },
    #[error("line {line}: actual label `{label}` is not one of the header classes")]
    UnknownActualLabel { line: u64, label: String },
    #[error("line {line}, column {column}: probability {value} outside [0, 1]")]
    InvalidProbability {
        line: u64,
        column: usize,
        value: f64,
    },
    #[error("missing header row")]
    MissingHeader,
    #[error("line {line}: duplicate class `{label}`")]
    DuplicateClass { line: u64, label: String },
    #[error("line {line}: matrix is not square ({detail})")]
    NonSquare { line: u64, detail: String },
    #[error("line {line}, column {column}: negative count")]
    NegativeEntry { line: u64, column: usize },
    #[error("line {line}: row class `{found}` does not match column class `{expected}`")]
    NameMismatch {
        line: u64,
        expected: String,
        found: String,
    },
    #[error("line {line}: unknown class `{label}`")]
    UnknownLabel { line: u64, label: String },
    #[error("no weight given for class `{0}`")]
    MissingWeight(String),
    #[error(transparent)]
    Confusion(#[from] ConfusionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl IngestError {
    /// 1-based line the error points at, when it concerns file content.
    pub fn line(&self) -> Option<u64> {
        use IngestError::*;
        match self {
            Parse { line, .. }
            | EmptyLabel { line }
            | ProbSumOutOfTolerance { line, .. }
            | UnknownActualLabel { line, .. }
            | InvalidProbability { line, .. }
            | DuplicateClass { line, .. }
            | NonSquare { line, .. }
            | NegativeEntry { line, .. }
            | NameMismatch { line, .. }
            | UnknownLabel { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Delimiter {
    #[default]
    Comma,
    Tab,
}

impl Delimiter {
    fn byte(self) -> u8 {
        match self {
            Self::Comma => b',',
            Self::Tab => b'\t',
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadOptions {
    pub delimiter: Delimiter,
    /// Whether a label file starts with a header row. `None` detects the
    /// literal header `actual,predicted` (case-insensitive).
    pub has_header: Option<bool>,
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })
}

/// CSV records paired with their line numbers.
struct Records<R: Read> {
    inner: StringRecordsIntoIter<R>,
}

impl<R: Read> Records<R> {
    fn new(reader: R, delimiter: Delimiter) -> Self {
        let inner = ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(Trim::All)
            .delimiter(delimiter.byte())
            .from_reader(reader)
            .into_records();
        Self { inner }
    }
}

impl<R: Read> Iterator for Records<R> {
    type Item = Result<(u64, StringRecord), IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        let item = self.inner.next()?;
        Some(match item {
            Ok(rec) => {
                let line = rec.position().map_or(0, |p| p.line());
                Ok((line, rec))
            }
            Err(e) => Err(csv_error(e)),
        })
    }
}

fn csv_error(e: csv::Error) -> IngestError {
    let line = e.position().map_or(0, |p| p.line());
    IngestError::Parse {
        line,
        column: 0,
        message: e.to_string(),
    }
}

fn wrong_width(line: u64, expected: usize, found: usize) -> IngestError {
    let column = if found > expected {
        expected + 1
    } else {
        found + 1
    };
    IngestError::Parse {
        line,
        column,
        message: format!("expected {expected} fields, found {found}"),
    }
}

/// One data row of a label file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelPair {
    pub line: u64,
    pub actual: String,
    pub predicted: String,
}

/// Streams `actual,predicted` rows.
pub struct LabelReader<R: Read> {
    records: Records<R>,
    has_header: Option<bool>,
    started: bool,
    rows: u64,
}

impl LabelReader<File> {
    pub fn open(path: impl AsRef<Path>, opts: ReadOptions) -> Result<Self, IngestError> {
        Ok(Self::from_reader(open(path.as_ref())?, opts))
    }
}

impl<R: Read> LabelReader<R> {
    pub fn from_reader(reader: R, opts: ReadOptions) -> Self {
        Self {
            records: Records::new(reader, opts.delimiter),
            has_header: opts.has_header,
            started: false,
            rows: 0,
        }
    }

    /// Data rows yielded so far.
    pub fn rows(&self) -> u64 {
        self.rows
    }

    fn parse(&mut self, line: u64, rec: &StringRecord) -> Result<LabelPair, IngestError> {
        if rec.len() != 2 {
            return Err(wrong_width(line, 2, rec.len()));
        }
        if rec[0].is_empty() || rec[1].is_empty() {
            return Err(IngestError::EmptyLabel { line });
        }
        self.rows += 1;
        Ok(LabelPair {
            line,
            actual: rec[0].to_owned(),
            predicted: rec[1].to_owned(),
        })
    }
}

fn is_label_header(rec: &StringRecord) -> bool {
    rec.len() == 2
        && rec[0].eq_ignore_ascii_case("actual")
        && rec[1].eq_ignore_ascii_case("predicted")
}

impl<R: Read> Iterator for LabelReader<R> {
    type Item = Result<LabelPair, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let (line, rec) = match self.records.next()? {
                Ok(x) => x,
                Err(e) => return Some(Err(e)),
            };
            let first = !self.started;
            self.started = true;
            if first {
                let skip = self.has_header.unwrap_or_else(|| is_label_header(&rec));
                if skip {
                    continue;
                }
            }
            return Some(self.parse(line, &rec));
        }
    }
}

/// Reads every `(actual, predicted)` pair in file order.
pub fn read_labels(
    path: impl AsRef<Path>,
    opts: ReadOptions,
) -> Result<Vec<(String, String)>, IngestError> {
    LabelReader::open(path, opts)?
        .map(|p| p.map(|p| (p.actual, p.predicted)))
        .collect()
}

/// Tallies a label stream without holding the rows in memory.
///
/// Without a registry the classes are the sorted union of the labels seen.
pub fn tally_label_stream<I>(
    pairs: I,
    registry: Option<ClassRegistry>,
) -> Result<ConfusionMatrix, IngestError>
where
    I: IntoIterator<Item = Result<LabelPair, IngestError>>,
{
    if let Some(registry) = registry {
        let mut tally = Tally::new(registry);
        for pair in pairs {
            let p = pair?;
            tally
                .record_labels(&p.actual, &p.predicted)
                .map_err(|e| match e {
                    ConfusionError::UnknownLabel(label) => IngestError::UnknownLabel {
                        line: p.line,
                        label,
                    },
                    other => other.into(),
                })?;
        }
        return Ok(tally.finish());
    }

    // at most K^2 distinct keys
    let mut cells: BTreeMap<(String, String), u64> = BTreeMap::new();
    for pair in pairs {
        let p = pair?;
        *cells.entry((p.actual, p.predicted)).or_default() += 1;
    }
    let registry =
        ClassRegistry::inferred(cells.keys().flat_map(|(a, p)| [a.as_str(), p.as_str()]))?;
    let k = registry.len();
    let mut rows = vec![vec![0u64; k]; k];
    for ((a, p), n) in cells {
        let i = registry.index(&a).expect("label in inferred registry");
        let j = registry.index(&p).expect("label in inferred registry");
        rows[i][j] = n;
    }
    Ok(ConfusionMatrix::from_counts(registry, &rows)?)
}

pub fn tally_labels(
    path: impl AsRef<Path>,
    opts: ReadOptions,
    registry: Option<ClassRegistry>,
) -> Result<ConfusionMatrix, IngestError> {
    tally_label_stream(LabelReader::open(path, opts)?, registry)
}

/// Streams records of a probability file. The header fixes the classes.
pub struct ProbReader<R: Read> {
    records: Records<R>,
    registry: ClassRegistry,
}

impl ProbReader<File> {
    pub fn open(path: impl AsRef<Path>, opts: ReadOptions) -> Result<Self, IngestError> {
        Self::from_reader(open(path.as_ref())?, opts)
    }
}

impl<R: Read> ProbReader<R> {
    pub fn from_reader(reader: R, opts: ReadOptions) -> Result<Self, IngestError> {
        let mut records = Records::new(reader, opts.delimiter);
        let (line, header) = records.next().ok_or(IngestError::MissingHeader)??;
        let registry = header_registry(line, header.iter().skip(1))?;
        Ok(Self { records, registry })
    }

    pub fn registry(&self) -> &ClassRegistry {
        &self.registry
    }

    fn parse(&self, line: u64, rec: &StringRecord) -> Result<ProbRecord, IngestError> {
        let k = self.registry.len();
        if rec.len() != k + 1 {
            return Err(wrong_width(line, k + 1, rec.len()));
        }
        let label = &rec[0];
        if label.is_empty() {
            return Err(IngestError::EmptyLabel { line });
        }
        let true_class =
            self.registry
                .index(label)
                .ok_or_else(|| IngestError::UnknownActualLabel {
                    line,
                    label: label.to_owned(),
                })?;
        let mut probs = Vec::with_capacity(k);
        for (i, field) in rec.iter().enumerate().skip(1) {
            let column = i + 1;
            let p: f64 = field.parse().map_err(|_| IngestError::Parse {
                line,
                column,
                message: format!("`{field}` is not a number"),
            })?;
            if !(0.0..=1.0).contains(&p) {
                return Err(IngestError::InvalidProbability {
                    line,
                    column,
                    value: p,
                });
            }
            probs.push(p);
        }
        let sum = prob_sum(&probs);
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(IngestError::ProbSumOutOfTolerance { line, sum });
        }
        ProbRecord::new(true_class, probs).map_err(|e| IngestError::Parse {
            line,
            column: 0,
            message: e.to_string(),
        })
    }
}

impl<R: Read> Iterator for ProbReader<R> {
    type Item = Result<ProbRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        Some(match self.records.next()? {
            Ok((line, rec)) => self.parse(line, &rec),
            Err(e) => Err(e),
        })
    }
}

fn header_registry<'a, I>(line: u64, names: I) -> Result<ClassRegistry, IngestError>
where
    I: Iterator<Item = &'a str>,
{
    let mut seen = BTreeSet::new();
    let mut labels = Vec::new();
    for name in names {
        if name.is_empty() {
            return Err(IngestError::EmptyLabel { line });
        }
        if !seen.insert(name) {
            return Err(IngestError::DuplicateClass {
                line,
                label: name.to_owned(),
            });
        }
        labels.push(name.to_owned());
    }
    Ok(ClassRegistry::new(labels)?)
}

/// Reads a probability file: header `actual,<class1>,...,<classK>`.
pub fn read_probs(
    path: impl AsRef<Path>,
    opts: ReadOptions,
) -> Result<(ClassRegistry, Vec<ProbRecord>), IngestError> {
    let reader = ProbReader::open(path, opts)?;
    let registry = reader.registry().clone();
    let records = reader.collect::<Result<Vec<_>, _>>()?;
    Ok((registry, records))
}

/// Reads a pre-tallied matrix: header `,<class1>,...,<classK>`, then one row
/// `<classi>,n_i1,...,n_iK` per actual class in the same order.
pub fn read_matrix_from<R: Read>(
    reader: R,
    opts: ReadOptions,
) -> Result<ConfusionMatrix, IngestError> {
    let mut records = Records::new(reader, opts.delimiter);
    let (header_line, header) = records.next().ok_or(IngestError::MissingHeader)??;
    let registry = header_registry(header_line, header.iter().skip(1))?;
    let k = registry.len();

    let mut rows: Vec<Vec<u64>> = Vec::with_capacity(k);
    let mut last_line = header_line;
    for item in records {
        let (line, rec) = item?;
        last_line = line;
        if rows.len() == k {
            return Err(IngestError::NonSquare {
                line,
                detail: format!("more than {k} rows for {k} classes"),
            });
        }
        if rec.len() != k + 1 {
            return Err(IngestError::NonSquare {
                line,
                detail: format!("{} counts for {k} classes", rec.len().saturating_sub(1)),
            });
        }
        let expected = &registry.labels()[rows.len()];
        if &rec[0] != expected {
            return Err(IngestError::NameMismatch {
                line,
                expected: expected.clone(),
                found: rec[0].to_owned(),
            });
        }
        let mut row = Vec::with_capacity(k);
        for (i, field) in rec.iter().enumerate().skip(1) {
            let column = i + 1;
            match field.parse::<u64>() {
                Ok(n) => row.push(n),
                Err(_) if field.parse::<i128>().is_ok_and(|n| n < 0) => {
                    return Err(IngestError::NegativeEntry { line, column })
                }
                Err(_) => {
                    return Err(IngestError::Parse {
                        line,
                        column,
                        message: format!("`{field}` is not a non-negative integer"),
                    })
                }
            }
        }
        rows.push(row);
    }
    if rows.len() != k {
        return Err(IngestError::NonSquare {
            line: last_line,
            detail: format!("{} rows for {k} classes", rows.len()),
        });
    }
    Ok(ConfusionMatrix::from_counts(registry, &rows)?)
}

pub fn read_matrix(
    path: impl AsRef<Path>,
    opts: ReadOptions,
) -> Result<ConfusionMatrix, IngestError> {
    read_matrix_from(open(path.as_ref())?, opts)
}

/// Reads `class,weight` rows covering every class of `registry`. A first row
/// whose weight is not a number is taken as a header.
pub fn read_weights_from<R: Read>(
    reader: R,
    opts: ReadOptions,
    registry: &ClassRegistry,
) -> Result<ClassWeights, IngestError> {
    let mut weights: Vec<Option<f64>> = vec![None; registry.len()];
    for (n, item) in Records::new(reader, opts.delimiter).enumerate() {
        let (line, rec) = item?;
        if rec.len() != 2 {
            return Err(wrong_width(line, 2, rec.len()));
        }
        let w = match rec[1].parse::<f64>() {
            Ok(w) => w,
            Err(_) if n == 0 => continue,
            Err(_) => {
                return Err(IngestError::Parse {
                    line,
                    column: 2,
                    message: format!("`{}` is not a number", &rec[1]),
                })
            }
        };
        let k = registry
            .index(&rec[0])
            .ok_or_else(|| IngestError::UnknownLabel {
                line,
                label: rec[0].to_owned(),
            })?;
        if weights[k].replace(w).is_some() {
            return Err(IngestError::DuplicateClass {
                line,
                label: rec[0].to_owned(),
            });
        }
    }
    let weights = weights
        .into_iter()
        .enumerate()
        .map(|(k, w)| w.ok_or_else(|| IngestError::MissingWeight(registry.labels()[k].clone())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ClassWeights::new(weights)?)
}

pub fn read_weights(
    path: impl AsRef<Path>,
    opts: ReadOptions,
    registry: &ClassRegistry,
) -> Result<ClassWeights, IngestError> {
    read_weights_from(open(path.as_ref())?, opts, registry)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(text: &str, has_header: Option<bool>) -> Result<Vec<LabelPair>, IngestError> {
        let opts = ReadOptions {
            has_header,
            ..Default::default()
        };
        LabelReader::from_reader(text.as_bytes(), opts).collect()
    }

    fn probs(text: &str) -> Result<(ClassRegistry, Vec<ProbRecord>), IngestError> {
        let r = ProbReader::from_reader(text.as_bytes(), ReadOptions::default())?;
        let reg = r.registry().clone();
        Ok((reg, r.collect::<Result<_, _>>()?))
    }

    fn matrix(text: &str) -> Result<ConfusionMatrix, IngestError> {
        read_matrix_from(text.as_bytes(), ReadOptions::default())
    }

    #[test]
    fn label_rows_without_header() {
        let pairs = labels("a,a\na,b\nb,b", None).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[1].actual, "a");
        assert_eq!(pairs[1].predicted, "b");
        assert_eq!(pairs[2].line, 3);
    }

    #[test]
    fn label_header_skipped() {
        let text = "actual,predicted\r\nx,y\r\n";
        assert_eq!(labels(text, Some(true)).unwrap().len(), 1);
        assert_eq!(labels(text, None).unwrap().len(), 1);
        // explicit "no header" keeps the first row as data
        assert_eq!(labels(text, Some(false)).unwrap().len(), 2);
    }

    #[test]
    fn label_errors_carry_line() {
        let err = labels("a,a\na,b,c\n", None).unwrap_err();
        assert!(
            matches!(
                err,
                IngestError::Parse {
                    line: 2,
                    column: 3,
                    ..
                }
            ),
            "{err:?}"
        );
        let err = labels("a,a\n\"\",b\n", None).unwrap_err();
        assert!(
            matches!(err, IngestError::EmptyLabel { line: 2 }),
            "{err:?}"
        );
    }

    #[test]
    fn tab_delimited_labels() {
        let opts = ReadOptions {
            delimiter: Delimiter::Tab,
            has_header: None,
        };
        let pairs: Vec<_> = LabelReader::from_reader("a\tb\n".as_bytes(), opts)
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(pairs[0].predicted, "b");
    }

    #[test]
    fn streaming_tally_matches_from_pairs() {
        let text = "b,a\na,a\nc,b\nb,b\na,c\n";
        let streamed =
            tally_label_stream(labels(text, None).unwrap().into_iter().map(Ok), None).unwrap();
        let pairs: Vec<(String, String)> = labels(text, None)
            .unwrap()
            .into_iter()
            .map(|p| (p.actual, p.predicted))
            .collect();
        assert_eq!(streamed, ConfusionMatrix::from_pairs(&pairs, None).unwrap());

        let err = tally_label_stream(std::iter::empty(), None).unwrap_err();
        assert!(matches!(
            err,
            IngestError::Confusion(ConfusionError::EmptyInput)
        ));

        let reg = ClassRegistry::new(["a", "b"]).unwrap();
        let err = tally_label_stream(labels(text, None).unwrap().into_iter().map(Ok), Some(reg))
            .unwrap_err();
        assert!(
            matches!(err, IngestError::UnknownLabel { line: 3, .. }),
            "{err:?}"
        );
    }

    #[test]
    fn prob_rows() {
        let (reg, rs) = probs("actual,a,b,c\nb,0.2,0.5,0.3\n").unwrap();
        assert_eq!(reg.labels(), ["a", "b", "c"]);
        assert_eq!(rs[0].true_class(), 1);
        assert_eq!(rs[0].probs(), [0.2, 0.5, 0.3]);
    }

    #[test]
    fn prob_errors() {
        let err = probs("actual,a,b,c\nb,0.2,0.4,0.3\n").unwrap_err();
        assert!(
            matches!(err, IngestError::ProbSumOutOfTolerance { line: 2, .. }),
            "{err:?}"
        );
        let err = probs("actual,a,b\nz,0.5,0.5\n").unwrap_err();
        assert!(
            matches!(err, IngestError::UnknownActualLabel { line: 2, .. }),
            "{err:?}"
        );
        let err = probs("actual,a,a\n").unwrap_err();
        assert!(
            matches!(err, IngestError::DuplicateClass { line: 1, .. }),
            "{err:?}"
        );
        let err = probs("actual,a,b\na,1.5,-0.5\n").unwrap_err();
        assert!(
            matches!(
                err,
                IngestError::InvalidProbability {
                    line: 2,
                    column: 2,
                    ..
                }
            ),
            "{err:?}"
        );
        let err = probs("actual,a,b\na,x,0.5\n").unwrap_err();
        assert!(
            matches!(
                err,
                IngestError::Parse {
                    line: 2,
                    column: 2,
                    ..
                }
            ),
            "{err:?}"
        );
        let err = probs("").unwrap_err();
        assert!(matches!(err, IngestError::MissingHeader), "{err:?}");
    }

    #[test]
    fn matrix_file() {
        let m = matrix(",pos,neg\npos,20,5\nneg,10,17\n").unwrap();
        assert_eq!(m.total(), 52);
        assert_eq!(m.get(1, 0), 10);
    }

    #[test]
    fn matrix_errors() {
        let err = matrix(",a,b\na,1,2,3\nb,1,2,3\n").unwrap_err();
        assert!(
            matches!(err, IngestError::NonSquare { line: 2, .. }),
            "{err:?}"
        );
        let err = matrix(",a,b,c\na,1,2,3\nb,1,2,3\n").unwrap_err();
        assert!(
            matches!(err, IngestError::NonSquare { line: 3, .. }),
            "{err:?}"
        );
        let err = matrix(",a,b\na,1,2\nb,1,2\nc,1,2\n").unwrap_err();
        assert!(
            matches!(err, IngestError::NonSquare { line: 4, .. }),
            "{err:?}"
        );
        let err = matrix(",a,b\na,1,-2\nb,1,2\n").unwrap_err();
        assert!(
            matches!(err, IngestError::NegativeEntry { line: 2, column: 3 }),
            "{err:?}"
        );
        let err = matrix(",a,b\nb,1,2\na,1,2\n").unwrap_err();
        assert!(
            matches!(err, IngestError::NameMismatch { line: 2, .. }),
            "{err:?}"
        );
        let err = matrix(",a,b\na,1,2.5\nb,1,2\n").unwrap_err();
        assert!(
            matches!(
                err,
                IngestError::Parse {
                    line: 2,
                    column: 3,
                    ..
                }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn weights_file() {
        let reg = ClassRegistry::new(["a", "b"]).unwrap();
        let read = |t: &str| read_weights_from(t.as_bytes(), ReadOptions::default(), &reg);
        let w = read("class,weight\nb,3\na,1\n").unwrap();
        assert_eq!(w.as_slice(), [1.0, 3.0]);
        assert!(matches!(read("a,1\n"), Err(IngestError::MissingWeight(l)) if l == "b"));
        assert!(matches!(
            read("a,1\nz,1\n"),
            Err(IngestError::UnknownLabel { line: 2, .. })
        ));
        assert!(matches!(
            read("a,1\na,2\n"),
            Err(IngestError::DuplicateClass { line: 2, .. })
        ));
        assert!(matches!(read("a,-1\nb,2\n"), Err(IngestError::Metrics(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = read_matrix("/nonexistent/m.csv", ReadOptions::default()).unwrap_err();
        assert!(matches!(err, IngestError::Io { .. }));
        assert_eq!(err.line(), None);
    }
}
