use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn qsd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut all: Vec<&str> = args.to_vec();
    all.extend(["--out", dir.to_str().unwrap()]);
    qsd(&all)
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn empty_argv_prints_usage_and_exits_2() {
    let out = qsd(&[]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let cases: [&[&str]; 5] = [
        &["certify", "--chain", "x.txt", "--logistic", "1,1,1"],
        &["qsd", "--logistic", "1,1,1", "--frobnicate"],
        &["qsd", "--logistic", "1;1;1"],
        &["qsd"],
        &["teleport", "--logistic", "1,1,1"],
    ];
    for args in cases {
        let out = run_in(dir.path(), args);
        assert_eq!(code(&out), 2, "{args:?}");
    }
    let out = run_in(
        dir.path(),
        &["qsd", "--logistic", "1,1,1", "--grid", "geometric:x:3"],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--grid"));
}

#[test]
fn computation_failures_exit_1() {
    let dir = TempDir::new().unwrap();
    let reducible = dir.path().join("reducible.txt");
    fs::write(&reducible, "states 3\nrate 1 0 1.0\nrate 2 1 1.0\n").unwrap();
    let out = run_in(dir.path(), &["qsd", "--chain", reducible.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("irreducibility"));
    let out = run_in(dir.path(), &["qsd", "--chain", "/nonexistent/chain.txt"]);
    assert_eq!(code(&out), 1);
    let out = run_in(dir.path(), &["bd", "--chain", reducible.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn qsd_writes_a_normalized_distribution() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &["qsd", "--logistic", "1,1,1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("qsd.csv"));
    let total: f64 = rows.iter().map(|r| r[1].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert_eq!(rows[0][0], "1");
}

#[test]
fn criterion_rejects_birth_death_files() {
    let dir = TempDir::new().unwrap();
    let logistic = dir.path().join("bd.txt");
    fs::write(&logistic, "logistic 1 1 1\nstates 40\n").unwrap();
    // Finite rate table whose top state returns slowly.
    let table = dir.path().join("bd_table.txt");
    fs::write(
        &table,
        "states 5\nrate 1 0 2.0\nrate 1 2 1.0\nrate 2 1 1.0\nrate 2 3 1.0\nrate 3 2 1.0\nrate 3 4 1.0\nrate 4 3 0.5\n",
    )
    .unwrap();
    for file in [&logistic, &table] {
        let out = run_in(
            dir.path(),
            &["criterion", "--chain", file.to_str().unwrap()],
        );
        assert_eq!(code(&out), 0);
        let text = fs::read_to_string(dir.path().join("criterion.txt")).unwrap();
        assert!(text.contains("theorem31_holds = false\n"), "{text}");
    }
}

#[test]
fn decay_stays_below_the_certified_bound() {
    let dir = TempDir::new().unwrap();
    let out = run_in(
        dir.path(),
        &["decay", "--logistic", "1,1,1", "--tmax", "12"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("decay.csv"));
    assert_eq!(rows.len(), 13);
    for r in rows {
        let pair: f64 = r[3].parse().unwrap();
        let bound: f64 = r[4].parse().unwrap();
        assert!(pair <= bound, "t = {}: {pair} > {bound}", r[0]);
    }
    let cert = fs::read_to_string(dir.path().join("certificate.txt")).unwrap();
    assert!(cert.contains("bound(t) = 2*(1-gamma)^floor(t)"));
}

#[test]
fn certify_writes_provenance() {
    let dir = TempDir::new().unwrap();
    let chain = dir.path().join("cat.txt");
    fs::write(
        &chain,
        "states 4\nrate 1 0 1.0\nrate 1 2 1.0\nrate 2 3 1.0\nrate 2 1 3.0\nrate 3 1 3.0\n",
    )
    .unwrap();
    let out = run_in(
        dir.path(),
        &[
            "certify",
            "--chain",
            chain.to_str().unwrap(),
            "--K",
            "1",
            "--x0",
            "1",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("certificate.txt")).unwrap();
    assert!(text.starts_with("K = 1\nx0 = 1\n"));
    assert!(text.contains("provenance.c1 = certified\n"));
    assert!(text.contains("provenance.c4 = certified\n"));
    let c4: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("c4 = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(c4 >= 1.0 && c4.is_finite());
}

#[test]
fn bd_writes_its_tables() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &["bd", "--logistic", "1,1,1", "--states", "21"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let alpha = csv_rows(&dir.path().join("bd_alpha.csv"));
    assert_eq!(alpha[0], ["1", "1.0000000000000000e0"]);
    let hitting = csv_rows(&dir.path().join("bd_hitting.csv"));
    assert!(!hitting.is_empty());
    assert!(fs::read_to_string(dir.path().join("bd_report.txt"))
        .unwrap()
        .contains("z0 = "));
}

#[test]
fn simulation_outputs_are_byte_identical_across_runs_and_threads() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let sim = [
        "simulate",
        "--logistic",
        "1,1,1",
        "--states",
        "30",
        "--paths",
        "2000",
        "--horizon",
        "3",
        "--seed",
        "11",
    ];
    let fvs = [
        "fv",
        "--logistic",
        "1,1,1",
        "--states",
        "30",
        "--particles",
        "200",
        "--horizon",
        "5",
        "--seed",
        "11",
    ];
    let mut args_a: Vec<&str> = sim.to_vec();
    args_a.extend(["--threads", "1"]);
    let mut args_b: Vec<&str> = sim.to_vec();
    args_b.extend(["--threads", "4"]);
    assert_eq!(code(&run_in(a.path(), &args_a)), 0);
    assert_eq!(code(&run_in(b.path(), &args_b)), 0);
    assert_eq!(code(&run_in(a.path(), &fvs)), 0);
    assert_eq!(code(&run_in(b.path(), &fvs)), 0);
    for name in ["batch.csv", "fv.csv"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    let batch = csv_rows(&a.path().join("batch.csv"));
    assert_eq!(batch.len(), 2000);
    assert!(batch.iter().any(|r| r[2] == "survived"));
    let fv = csv_rows(&a.path().join("fv.csv"));
    assert!(fv.iter().all(|r| r[1] != "0"));
}
