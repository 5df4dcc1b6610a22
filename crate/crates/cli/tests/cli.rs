use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn cmtf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmtf"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Generates a small coupled dataset and returns its directory.
fn small_data(root: &Path) -> PathBuf {
    let spec = root.join("spec.cfg");
    fs::write(&spec, "dims = 8, 10, 5, 12\nrank = 2\nnoise_tensor = 0.1\nnoise_matrix = 0.1\ndelta = 2, 0\nseed = 3\n").unwrap();
    let out = root.join("data");
    let o = cmtf(&["synth", "--spec", s(&spec), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    assert_eq!(
        code(&cmtf(&[
            "cp",
            "--input",
            s(&data.join("tensor.t3")),
            "--rank",
            "0"
        ])),
        2
    );
    assert_eq!(
        code(&cmtf(&[
            "acmtf", "--tensor", "x", "--matrix", "y", "--beta", "-1"
        ])),
        2
    );
    assert_eq!(code(&cmtf(&["synth", "--out", "z"])), 2);
    assert_eq!(code(&cmtf(&["frobnicate"])), 2);
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let (t, g) = (data.join("tensor.t3"), data.join("groups.txt"));

    let bad_matrix = dir.path().join("m.txt");
    fs::write(
        &bad_matrix,
        "matrix 7 2\n1 2\n3 4\n5 6\n7 8\n9 10\n11 12\n13 14\n",
    )
    .unwrap();
    let o = cmtf(&[
        "acmtf",
        "--tensor",
        s(&t),
        "--matrix",
        s(&bad_matrix),
        "--rank",
        "2",
        "--inits",
        "1",
    ]);
    assert_eq!(code(&o), 3);

    let bad_labels = dir.path().join("g.txt");
    fs::write(&bad_labels, "0\n1\n0\n").unwrap();
    let fit = dir.path().join("fit");
    assert_eq!(
        code(&cmtf(&[
            "cp",
            "--input",
            s(&t),
            "--rank",
            "2",
            "--inits",
            "2",
            "--out",
            s(&fit)
        ])),
        0
    );
    let o = cmtf(&[
        "stats",
        "--factors",
        s(&fit.join("factor_A.txt")),
        "--groups",
        s(&bad_labels),
    ]);
    assert_eq!(code(&o), 3);
    let o = cmtf(&[
        "cp",
        "--input",
        s(&t),
        "--rank",
        "2",
        "--groups",
        s(&bad_labels),
    ]);
    assert_eq!(code(&o), 3);

    let bad_spec = dir.path().join("bad.cfg");
    fs::write(&bad_spec, "dims = 4, 4, 4, 4\nrank = 2\nlambda = 1\n").unwrap();
    assert_eq!(
        code(&cmtf(&[
            "synth",
            "--spec",
            s(&bad_spec),
            "--out",
            s(&dir.path().join("x"))
        ])),
        3
    );

    assert_eq!(
        code(&cmtf(&[
            "cp",
            "--input",
            s(&dir.path().join("missing.t3")),
            "--rank",
            "2"
        ])),
        3
    );
    assert_eq!(
        code(&cmtf(&["stats", "--factors", s(&g), "--groups", s(&g)])),
        3
    );
}

#[test]
fn starved_fit_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let o = cmtf(&[
        "cp",
        "--input",
        s(&data.join("tensor.t3")),
        "--rank",
        "2",
        "--inits",
        "2",
        "--max-iters",
        "1",
    ]);
    assert_eq!(code(&o), 4);
}

#[test]
fn acmtf_without_sparsity_penalty_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let out = dir.path().join("fit");
    let o = cmtf(&[
        "acmtf",
        "--tensor",
        s(&data.join("tensor.t3")),
        "--matrix",
        s(&data.join("matrix.txt")),
        "--rank",
        "2",
        "--inits",
        "2",
        "--beta",
        "0",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["config"]["beta"].as_f64(), Some(0.0));
    assert_eq!(r["objective_check"]["passed"], Value::Bool(true));
    for f in [
        "factor_A.txt",
        "factor_B.txt",
        "factor_C.txt",
        "factor_V.txt",
        "weights_lambda.txt",
        "weights_sigma.txt",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert!(out.join("traces/component_1.txt").is_file());
}

#[test]
fn stats_on_single_column() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("f.txt");
    let g = dir.path().join("g.txt");
    fs::write(&f, "matrix 8 1\n1\n2\n3\n4\n3\n4\n5\n6\n").unwrap();
    fs::write(&g, "0\n0\n0\n0\n1\n1\n1\n1\n").unwrap();
    let o = cmtf(&["stats", "--factors", s(&f), "--groups", s(&g)]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let row = text.lines().find(|l| l.starts_with("0 ")).unwrap();
    let cols: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(cols[1], "-2.190890");
    let p: f64 = cols[3].parse().unwrap();
    assert!((p - 0.07098765432098765).abs() < 1e-6);
    assert_eq!(cols[5], "false");
}

#[test]
fn repeat_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let t = data.join("tensor.t3");
    let mut outputs = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("cp{i}"));
        let o = cmtf(&[
            "cp",
            "--input",
            s(&t),
            "--rank",
            "2",
            "--inits",
            "3",
            "--seed",
            "5",
            "--out",
            s(&out),
        ]);
        assert_eq!(code(&o), 0);
        outputs.push((
            o.stdout,
            fs::read(out.join("report.json")).unwrap(),
            fs::read(out.join("factor_B.txt")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn sequential_flag_matches_default() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let t = data.join("tensor.t3");
    let a = cmtf(&["cp", "--input", s(&t), "--rank", "2", "--inits", "3"]);
    let b = cmtf(&[
        "cp",
        "--input",
        s(&t),
        "--rank",
        "2",
        "--inits",
        "3",
        "--sequential",
    ]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn synth_preset_has_paper_extents() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("paper");
    let o = cmtf(&["synth", "--preset", "paper", "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("tensor 38x451x11, matrix 38x600, rank 3"));
    let header = fs::read_to_string(out.join("tensor.t3")).unwrap();
    assert!(header.starts_with("tensor3 38 451 11\n"));
    let groups = fs::read_to_string(out.join("groups.txt")).unwrap();
    assert_eq!(groups.lines().filter(|l| l.trim() == "1").count(), 16);
    assert_eq!(
        report(&out.join("truth"))["objective_check"]["passed"],
        Value::Bool(true)
    );
}
