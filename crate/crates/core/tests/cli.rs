//! End-to-end runs of the `bsrht` binary.

use std::path::Path;
use std::process::{Command, Output};

use bsrht::data::{read_matrix, write_matrix};
use faer::Mat;

fn bsrht(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bsrht"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let idx = lines
        .next()
        .unwrap()
        .split(',')
        .position(|h| h == name)
        .unwrap();
    lines
        .map(|l| l.split(',').nth(idx).unwrap().to_string())
        .collect()
}

const OSE: &[&str] = &[
    "ose", "--n", "256", "--d", "4", "--l", "64,128", "--p", "2", "--trials", "20",
];

#[test]
fn usage_errors_exit_two() {
    assert_eq!(bsrht(&["ose", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(bsrht(&["ose", "--kind", "nope"]).status.code(), Some(2));
    assert_eq!(bsrht(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(bsrht(&["lowrank", "--alg", "rsvd"]).status.code(), Some(2));
}

#[test]
fn ose_is_deterministic_with_header() {
    let a = stdout(&bsrht(&[OSE, &["--seed", "9"]].concat()));
    let b = stdout(&bsrht(&[OSE, &["--seed", "9"]].concat()));
    assert_eq!(a, b);
    assert_eq!(
        a.lines().next().unwrap(),
        "kind,n,p,d,l,eps,trials,failures,failure_rate"
    );
    assert_eq!(a.lines().count(), 3);
}

#[test]
fn ose_writes_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ose.csv");
    let out = bsrht(&[OSE, &["--out", path.to_str().unwrap()]].concat());
    assert!(stdout(&out).is_empty());
    assert!(std::fs::read_to_string(&path).unwrap().starts_with("kind,"));
}

#[test]
fn lowrank_recovers_exact_rank() {
    let csv = stdout(&bsrht(&[
        "lowrank",
        "--alg",
        "nystrom",
        "--spectrum",
        "rank:8",
        "--n",
        "256",
        "--l",
        "16",
        "--k",
        "8",
        "--kind",
        "bsrht",
        "--p",
        "2",
        "--reps",
        "3",
    ]));
    assert!(csv.starts_with("alg,kind,n,p,l,k,norm,record,rep,rel_error"));
    for err in column(&csv, "rel_error") {
        assert!(err.parse::<f64>().unwrap() <= 1e-8, "{csv}");
    }
}

#[test]
fn lowrank_all_algorithms_run() {
    for alg in ["rsvd", "nystrom", "single-view"] {
        let args = [
            "lowrank",
            "--alg",
            alg,
            "--spectrum",
            "geometric:0.8",
            "--n",
            "128",
            "--l",
            "16",
            "--k",
            "4,8",
            "--kind",
            "bsrht,gaussian",
            "--p",
            "2",
            "--reps",
            "2",
            "--seed",
            "1",
        ];
        let a = stdout(&bsrht(&args));
        assert_eq!(a, stdout(&bsrht(&args)), "{alg}");
        let records = column(&a, "record");
        // 2 kinds × 2 ranks × (2 runs + median + band).
        assert_eq!(records.len(), 2 * 2 * 5, "{alg}: {a}");
    }
}

fn write_asymmetric(path: &Path) {
    let m = Mat::from_fn(32, 32, |i, j| {
        if i == 0 && j == 1 {
            1.0
        } else {
            (i == j) as u8 as f64
        }
    });
    write_matrix(m.as_ref(), path).unwrap();
}

#[test]
fn nystrom_rejects_asymmetric_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.bin");
    write_asymmetric(&path);
    let out = bsrht(&[
        "lowrank",
        "--alg",
        "nystrom",
        "--matrix",
        path.to_str().unwrap(),
        "--l",
        "8",
        "--k",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn kernel_build_feeds_lowrank() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.bin");
    let p = path.to_str().unwrap();
    stdout(&bsrht(&[
        "kernel-build",
        "--generator",
        "mnist",
        "--n",
        "64",
        "--p",
        "2",
        "--out",
        p,
    ]));
    let k = read_matrix(&path).unwrap();
    assert_eq!((k.nrows(), k.ncols()), (64, 64));
    assert!((0..64).all(|i| k[(i, i)] == 1.0));
    let csv = stdout(&bsrht(&[
        "lowrank", "--alg", "nystrom", "--matrix", p, "--l", "16", "--k", "4", "--reps", "2",
    ]));
    assert_eq!(column(&csv, "norm")[0], "trace");
}

#[test]
fn bench_emits_one_row_per_configuration() {
    let csv = stdout(&bsrht(&[
        "bench", "--n", "1024", "--d", "2", "--l", "16", "--p", "1", "--reps", "1",
    ]));
    assert!(csv.starts_with("kind,n,d,l,p,wall_seconds_total"));
    assert_eq!(column(&csv, "kind"), ["gaussian", "bsrht"]);
}

#[test]
fn cost_is_deterministic() {
    let args = ["cost", "--n", "4096", "--l", "64,128", "--p", "1,4"];
    let a = stdout(&bsrht(&args));
    assert_eq!(a, stdout(&bsrht(&args)));
    assert_eq!(a.lines().count(), 1 + 2 * 2 * 2);
}
