use std::path::PathBuf;
use std::process::{Command, Output};

use hedgebet::harness::{
    run_experiment, run_screening, write_episodes_csv, ExperimentConfig, ScreeningConfig,
};
use hedgebet::ingest::read_sequences_csv;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hedgebet"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

/// Body of a CSV artifact with the `#` metadata lines removed.
fn body(bytes: &[u8]) -> String {
    String::from_utf8(bytes.to_vec())
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

#[test]
fn price_prints_the_lattice_value() {
    let v = json(&run(&[
        "price",
        "--model",
        "u=1.5,d=0.5",
        "--contract",
        "call,S=1.25,tau=3",
        "--method",
        "lattice",
    ]));
    assert_eq!(v["value"], 0.265625);
    assert_eq!(v["config"]["contract"]["strike"], 1.25);
    assert!(v["seed"].is_u64());

    let v = json(&run(&[
        "price",
        "--model",
        "u=1.5,d=0.5",
        "--contract",
        "put,S=0.25,tau=3",
    ]));
    assert_eq!(v["value"], 0.015625);

    let v = json(&run(&[
        "price",
        "--model",
        "u=1.5,d=0.5",
        "--contract",
        "call,S=1.25,tau=3",
        "--method",
        "mc",
        "--samples",
        "50000",
        "--seed",
        "3",
    ]));
    let (value, se) = (
        v["value"].as_f64().unwrap(),
        v["std_error"].as_f64().unwrap(),
    );
    assert!((value - 17.0 / 64.0).abs() <= 3.0 * se);

    let v = json(&run(&[
        "price",
        "--model",
        "sigma=1",
        "--contract",
        "call,S=1,tau=1",
        "--method",
        "bs",
    ]));
    assert!((v["value"].as_f64().unwrap() - 0.382_924_922_548_026).abs() < 1e-12);
}

#[test]
fn hedge_solve_prints_both_roots() {
    let v = json(&run(&["hedge-solve", "--floor", "0.25", "--horizon", "20"]));
    let roots: Vec<f64> = v["roots"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r.as_f64().unwrap())
        .collect();
    assert_eq!(roots.len(), 2);
    assert!((roots[0] - 0.30866).abs() < 1e-4 && (roots[1] - 0.97285).abs() < 1e-4);
    for (s, c) in roots.iter().zip(v["premiums"].as_array().unwrap()) {
        assert!(((1.0 - c.as_f64().unwrap()) * s - 0.25).abs() < 1e-9);
    }
}

#[test]
fn simulate_is_repeatable_and_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("table1_kelly.cfg");
    let paths: Vec<PathBuf> = (0..2)
        .map(|i| dir.path().join(format!("run{i}.csv")))
        .collect();
    for p in &paths {
        let out = bin()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .args(["--seed", "7", "--output"])
            .arg(p)
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let first = std::fs::read(&paths[0]).unwrap();
    assert_eq!(first, std::fs::read(&paths[1]).unwrap());
    let text = String::from_utf8(first.clone()).unwrap();
    assert!(text.starts_with("# command = simulate\n# seed = 7\n# config = {"));

    let mut lib_cfg = ExperimentConfig::from_path(&cfg).unwrap();
    lib_cfg.seed = 7;
    let lib = run_experiment(&lib_cfg).unwrap();
    let mut expected = Vec::new();
    write_episodes_csv(&lib.episodes, &[], &mut expected).unwrap();
    assert_eq!(body(&first), String::from_utf8(expected).unwrap());

    let v = json(
        &bin()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .args(["--seed", "7", "--replications", "100", "--format", "json"])
            .output()
            .unwrap(),
    );
    assert_eq!(v["seed"], 7);
    assert_eq!(v["config"]["replications"], 100);
    assert_eq!(v["episodes"].as_array().unwrap().len(), 100);
}

#[test]
fn shift_uses_the_change_point() {
    let from_config = run(&[
        "shift",
        "--config",
        config("table2_kelly.cfg").to_str().unwrap(),
        "--replications",
        "300",
    ]);
    assert!(from_config.status.success());
    let from_flags = run(&[
        "shift",
        "--config",
        config("table1_kelly.cfg").to_str().unwrap(),
        "--replications",
        "300",
        "--change-point",
        "10",
        "--before",
        "0.5",
    ]);
    assert!(from_flags.status.success());
    assert_eq!(body(&from_config.stdout), body(&from_flags.stdout));

    let missing = run(&[
        "shift",
        "--config",
        config("table1_kelly.cfg").to_str().unwrap(),
    ]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn ingest_then_screen() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = dir.path().join("matrix.tsv");
    let mut text =
        String::from("gene\tnormal1\tnormal2\tnormal3\ttumor1\ttumor2\ttumor3\ttumor4\ttumor5\n");
    for g in 0..20 {
        let row: Vec<String> = (0..8)
            .map(|j| format!("{}", ((g * 7 + j * 13) % 17) as f64 + 0.5 * j as f64))
            .collect();
        text.push_str(&format!("g{g}\t{}\n", row.join("\t")));
    }
    text.push_str("flat\t1\t1\t1\t2\t3\t4\t5\t6\n");
    std::fs::write(&matrix, text).unwrap();
    let sequences = dir.path().join("seq.csv");
    let out = bin()
        .args(["ingest", "--input"])
        .arg(&matrix)
        .arg("--output")
        .arg(&sequences)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let written = std::fs::read_to_string(&sequences).unwrap();
    assert!(written.contains("# skipped = [\"flat\"]"));
    let genes = read_sequences_csv(written.as_bytes()).unwrap();
    assert_eq!(genes.len(), 20);
    assert!(genes.iter().all(|g| g.sequence.len() == 6));

    let v = json(
        &bin()
            .args(["screen", "--format", "json", "--input"])
            .arg(&sequences)
            .output()
            .unwrap(),
    );
    let lib = run_screening(&genes, &ScreeningConfig::default()).unwrap();
    assert_eq!(v["report"], serde_json::to_value(lib.report).unwrap());
    assert_eq!(v["genes"].as_array().unwrap().len(), 20);
}

#[test]
fn synthetic_screen_with_a_hedge() {
    let out = run(&[
        "screen",
        "--config",
        config("screening_hedged.cfg").to_str().unwrap(),
        "--synthetic-genes",
        "300",
        "--shifted-fraction",
        "0.3",
        "--seed",
        "5",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("# seed = 5\n"));
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(
        rows[0],
        "gene_id,lambda,lambda_used,final_wealth,max_wealth,rejected,crossing_time"
    );
    assert_eq!(rows.len(), 301);
    for row in &rows[1..] {
        let final_wealth: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
        assert!(final_wealth >= 0.5 - 1e-9);
    }
}

#[test]
fn exit_codes_name_the_failure() {
    let unknown = run(&["frobnicate"]);
    assert_eq!(unknown.status.code(), Some(2));

    let missing = run(&["simulate", "--config", "/nonexistent/x.cfg"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("cannot read"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(
        &bad,
        "truth_p = 0.75\nstrategy = \"kelly\"\nhorizon = 20\nreplications = 10\nexpiry_typo = 3\n",
    )
    .unwrap();
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let contract = run(&[
        "price",
        "--model",
        "u=1.5,d=0.5",
        "--contract",
        "swap,S=1,tau=3",
    ]);
    assert_eq!(contract.status.code(), Some(2));

    let arbitrage = run(&[
        "price",
        "--model",
        "u=0.9,d=0.5",
        "--contract",
        "call,S=1,tau=3",
    ]);
    assert_eq!(arbitrage.status.code(), Some(3));

    let unreachable = run(&["hedge-solve", "--floor", "0.99", "--horizon", "20"]);
    assert_eq!(unreachable.status.code(), Some(3));
    assert!(!unreachable.stderr.is_empty());
}
