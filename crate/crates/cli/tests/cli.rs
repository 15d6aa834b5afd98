use std::path::Path;
use std::process::{Command, Output};

fn qridge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qridge"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const DATA: &str = "x1,x2,y\n0.9,-0.2,1.0\n0.1,0.8,-0.3\n-0.5,0.4,0.2\n0.3,0.3,0.7\n";

#[test]
fn cv_writes_report_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write(&data, DATA);
    let out = dir.path().join("r.json");
    let res = qridge(&[
        "cv",
        "--data",
        data.to_str().unwrap(),
        "--k",
        "2",
        "--alphas",
        "0.5,8,4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(report["schema_version"], "qridge-report/1");
    assert_eq!(report["cv"]["rows"].as_array().unwrap().len(), 4);
    let table = std::fs::read_to_string(dir.path().join("r.cv.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(dir.path().join("r.bounds.csv").exists());
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    write(
        &cfg,
        r#"{"data": {"kind": "reference", "n": 4, "m": 3, "seed": 2}, "k": 2, "mode": "noise", "s": 6}"#,
    );
    let out = dir.path().join("r.json");
    let mut bytes = Vec::new();
    for _ in 0..2 {
        let res = qridge(&[
            "cv",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "11",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
        bytes.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn fit_prints_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.csv");
    let y = dir.path().join("y.csv");
    write(&x, "0.9,-0.2\n0.1,0.8\n-0.5,0.4\n");
    write(&y, "1.0\n-0.3\n0.2\n");
    let res = qridge(&[
        "fit",
        "--data",
        x.to_str().unwrap(),
        "--y",
        y.to_str().unwrap(),
        "--alpha",
        "2",
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert!((report["fit"]["fidelity"].as_f64().unwrap() - 1.0).abs() < 1e-10);
    assert_eq!(report["dataset"]["m"], 2);
}

#[test]
fn sweeps_run() {
    let res = qridge(&["sweep-fidelity", "--config", "/dev/null"]);
    assert_eq!(code(&res), 2);
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write(&data, DATA);
    let res = qridge(&[
        "sweep-fidelity",
        "--data",
        data.to_str().unwrap(),
        "--s-list",
        "4,6",
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(report["fidelity"].as_array().unwrap().len(), 2);

    let res = qridge(&["sweep-channel", "--q", "2", "--n", "2", "--steps", "10,100"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let res = qridge(&["bounds", "--data", data.to_str().unwrap(), "--k", "2"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn gen_then_fit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.csv");
    let res = qridge(&[
        "gen",
        "--n",
        "6",
        "--m",
        "3",
        "--spectrum",
        "4,2,1",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 7);
    let res = qridge(&["fit", "--data", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0);
}

#[test]
fn exit_codes_follow_the_table() {
    let dir = tempfile::tempdir().unwrap();
    // input: malformed cell
    let bad = dir.path().join("bad.csv");
    write(&bad, "1,2\n3,abc\n4,5\n");
    let res = qridge(&["fit", "--data", bad.to_str().unwrap()]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 2, column 2"));
    // input: missing file, unknown mode, unknown flag, no dataset
    assert_eq!(code(&qridge(&["fit", "--data", "/nonexistent.csv"])), 2);
    assert_eq!(
        code(&qridge(&[
            "fit",
            "--data",
            bad.to_str().unwrap(),
            "--mode",
            "fuzzy"
        ])),
        2
    );
    assert_eq!(code(&qridge(&["fit", "--bogus"])), 2);
    assert_eq!(code(&qridge(&["cv"])), 2);
    // degenerate: y orthogonal to the column space of X
    let kernel = dir.path().join("k.csv");
    write(&kernel, "1,0\n0,1\n0,0\n");
    assert_eq!(
        code(&qridge(&[
            "fit",
            "--data",
            kernel.to_str().unwrap(),
            "--alpha",
            "1"
        ])),
        3
    );
    // resource: channel dimension budget
    let res = qridge(&[
        "sweep-channel",
        "--q",
        "3",
        "--n",
        "4",
        "--budget",
        "10",
        "--steps",
        "10",
    ]);
    assert_eq!(code(&res), 4);
    assert_eq!(code(&qridge(&["--help"])), 0);
}
