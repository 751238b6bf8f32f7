use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clfmetrics::metrics;
use clfmetrics::{ClassRegistry, ConfusionMatrix, EvaluationReport};
use tempfile::NamedTempFile;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn clf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clfmetrics"))
        .args(args)
        .env("CLFMETRICS_NO_COLOR", "1")
        .output()
        .unwrap()
}

fn fx(name: &str) -> String {
    fixture(name).display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn temp(content: &str) -> NamedTempFile {
    let mut f = NamedTempFile::new().unwrap();
    f.write_all(content.as_bytes()).unwrap();
    f
}

fn matrix_file(rows: [[u64; 2]; 2]) -> NamedTempFile {
    temp(&format!(
        ",p,n\np,{},{}\nn,{},{}\n",
        rows[0][0], rows[0][1], rows[1][0], rows[1][1]
    ))
}

#[test]
fn exit_codes() {
    assert_eq!(clf(&["evaluate", &fx("labels.csv")]).status.code(), Some(0));
    assert_eq!(clf(&["evaluate", &fx("empty.csv")]).status.code(), Some(2));
    assert_eq!(
        clf(&["evaluate", "/no/such/file.csv"]).status.code(),
        Some(2)
    );
    assert_eq!(
        clf(&["evaluate", "--bogus", &fx("labels.csv")])
            .status
            .code(),
        Some(3)
    );
    let o = clf(&[
        "evaluate",
        "--kind",
        "matrix",
        "--reduce",
        "sum",
        &fx("four_class.csv"),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let o = clf(&[
        "evaluate",
        "--kind",
        "probs",
        "--epsilon",
        "0.5",
        &fx("probs.csv"),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(clf(&["--help"]).status.code(), Some(0));
    assert_eq!(clf(&["--version"]).status.code(), Some(0));
}

#[test]
fn input_errors_name_the_line() {
    let f = temp("a,a\nb,b\nc\n");
    let o = clf(&["evaluate", f.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains('3'), "{err}");
}

#[test]
fn compare_tags_the_failing_side() {
    let o = clf(&["compare", &fx("labels.csv"), &fx("empty.csv")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[B]"));
}

#[test]
fn probability_input_reports_cross_entropy() {
    let o = clf(&[
        "evaluate",
        "--kind",
        "probs",
        "--reduce",
        "sum",
        &fx("probs.csv"),
    ]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("Cross-Entropy (sum)"), "{out}");
    assert!(out.contains("units: 5"));

    let mean = clf(&["evaluate", "--kind", "probs", &fx("probs.csv")]);
    assert!(stdout(&mean).contains("Cross-Entropy (mean)"));
}

#[test]
fn labels_evaluate_text() {
    let out = stdout(&clf(&["evaluate", &fx("labels.csv")]));
    assert!(out.starts_with("clfmetrics "));
    // bird, cat, dog in sorted order, 4 of 6 correct
    assert!(out.contains("2/3"), "{out}");
    let bird = out.find("bird").unwrap();
    assert!(bird < out.find("\ndog").unwrap());
}

#[test]
fn comparing_a_file_with_itself_gives_zero_deltas() {
    let o = clf(&[
        "compare",
        "--kind",
        "matrix",
        &fx("four_class.csv"),
        &fx("four_class.csv"),
    ]);
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().filter(|l| l.ends_with("0.0000")).collect();
    // 12 metrics and 4 classes
    assert_eq!(rows.len(), 16, "{out}");
    for row in rows {
        let deltas = row.split_whitespace().filter(|w| w.starts_with(['+', '-']));
        assert!(deltas.into_iter().all(|w| w == "+0.0000"), "{row}");
    }
    assert!(!out.contains('*'));
}

/// Two 2x2 matrices with the same total and the same trace but different Kappa.
fn equal_accuracy_pair() -> ([[u64; 2]; 2], [[u64; 2]; 2]) {
    let reg = || ClassRegistry::new(["p", "n"]).unwrap();
    let kappa = |m: [[u64; 2]; 2]| {
        let cm = ConfusionMatrix::from_counts(reg(), &[m[0].to_vec(), m[1].to_vec()]).unwrap();
        metrics::kappa_multiclass(&cm).rational().cloned()
    };
    let base = [[6, 2], [3, 9]];
    let k0 = kappa(base).unwrap();
    // same trace (15) and total (20): vary the split of both
    for tp in 0..=15u64 {
        for fp in 0..=5u64 {
            let other = [[tp, fp], [5 - fp, 15 - tp]];
            if kappa(other).is_some_and(|k| k != k0) {
                return (base, other);
            }
        }
    }
    panic!("no pair found");
}

#[test]
fn equal_accuracy_different_kappa_is_flagged() {
    let (a, b) = equal_accuracy_pair();
    assert_eq!(a[0][0] + a[1][1], b[0][0] + b[1][1]);
    let (fa, fb) = (matrix_file(a), matrix_file(b));
    let (pa, pb) = (fa.path().to_str().unwrap(), fb.path().to_str().unwrap());

    let out = stdout(&clf(&["compare", "--kind", "matrix", pa, pb]));
    let kappa_row = out
        .lines()
        .find(|l| l.starts_with("Cohen's Kappa"))
        .unwrap();
    assert!(kappa_row.contains('*'), "{out}");
    assert!(!out.contains("\x1b["), "color must be off");

    let json = stdout(&clf(&[
        "compare", "--kind", "matrix", "--format", "json", pa, pb,
    ]));
    assert!(
        json.contains("\"equal_accuracy_different_kappa\": true"),
        "{json}"
    );
}

#[test]
fn different_class_sets_suppress_per_class_deltas() {
    let o = clf(&[
        "compare",
        "--kind",
        "matrix",
        "--format",
        "json",
        &fx("four_class.csv"),
        &fx("binary.csv"),
    ]);
    let json = stdout(&o);
    assert!(json.contains("\"per_class_deltas\": null"), "{json}");
    let text = stdout(&clf(&[
        "compare",
        "--kind",
        "matrix",
        &fx("four_class.csv"),
        &fx("binary.csv"),
    ]));
    assert!(text.contains("note: class sets differ"));
    assert!(!text.contains("precision B-A"));
}

#[test]
fn mixed_kinds_in_compare() {
    let o = clf(&[
        "compare",
        "--kind-a",
        "probs",
        "--kind-b",
        "matrix",
        &fx("probs.csv"),
        &fx("four_class.csv"),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn weights_file_changes_weighted_balanced_accuracy() {
    let default = clf(&[
        "evaluate",
        "--kind",
        "matrix",
        "--format",
        "json",
        &fx("four_class.csv"),
    ]);
    let weighted = clf(&[
        "evaluate",
        "--kind",
        "matrix",
        "--format",
        "json",
        "--weights",
        &fx("four_class_weights.csv"),
        &fx("four_class.csv"),
    ]);
    assert!(weighted.status.success());
    let d = EvaluationReport::from_json(&stdout(&default)).unwrap();
    let w = EvaluationReport::from_json(&stdout(&weighted)).unwrap();
    let get = |r: &EvaluationReport| {
        r.evaluation
            .get("balanced_accuracy_weighted")
            .unwrap()
            .value()
            .unwrap()
    };
    // frequency weights reproduce accuracy
    assert!((get(&d) - 37.0 / 52.0).abs() < 1e-12);
    let oracle = (6.0 / 9.0 + 9.0 / 14.0 + 2.0 * 10.0 / 13.0) / 4.0;
    assert!((get(&w) - oracle).abs() < 1e-12);

    let partial = temp("a,1\nb,1\n");
    let o = clf(&[
        "evaluate",
        "--kind",
        "matrix",
        "--weights",
        partial.path().to_str().unwrap(),
        &fx("four_class.csv"),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn lenient_skips_undefined_classes() {
    // nobody predicts class z
    let f = temp("x,x\ny,y\nz,x\nx,y\n");
    let p = f.path().to_str().unwrap();
    let strict = stdout(&clf(&["evaluate", p]));
    let lenient = stdout(&clf(&["evaluate", "--lenient", p]));
    let row = |s: &str| {
        s.lines()
            .find(|l| l.starts_with("Macro Precision"))
            .unwrap()
            .to_string()
    };
    assert!(row(&strict).contains("undef"), "{strict}");
    assert!(!row(&lenient).contains("undef"), "{lenient}");
}

#[test]
fn json_output_round_trips() {
    for (kind, file) in [
        ("matrix", "four_class.csv"),
        ("labels", "labels.csv"),
        ("probs", "probs.csv"),
    ] {
        let json = stdout(&clf(&[
            "evaluate",
            "--kind",
            kind,
            "--format",
            "json",
            &fx(file),
        ]));
        let report = EvaluationReport::from_json(&json).unwrap();
        assert_eq!(report.to_json(), json, "{kind}");
    }
}

#[test]
fn tab_delimited_labels_with_explicit_header() {
    let f = temp("truth\tguess\na\ta\nb\ta\n");
    let o = clf(&[
        "evaluate",
        "--delimiter",
        "tab",
        "--header",
        f.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("units: 2"));
}
