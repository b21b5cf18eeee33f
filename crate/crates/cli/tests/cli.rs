use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mycoelec::solver::dc_operating_point;
use mycoelec::Netlist;
use serde_json::Value;

fn mycoelec(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mycoelec"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = mycoelec(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn fails_with(dir: &Path, args: &[&str], prefix: &str) {
    let out = mycoelec(dir, args);
    assert_eq!(out.status.code(), Some(2), "{args:?}");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(prefix), "{args:?}: {stderr}");
}

fn last_row(csv: &str) -> Vec<f64> {
    csv.lines()
        .last()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect()
}

const ONE_EDGE: &str = "# mycograph v1\nN 0 0 0 0\nN 1 100 0 0\nE 0 1\n";
const CHAIN: &str = "# mycograph v1\nN 0 0 0 0\nN 1 100 0 0\nN 2 300 0 0\nE 0 1\nE 1 2\n";

#[test]
fn one_edge_simulation_settles_to_source() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("g.txt"), ONE_EDGE).unwrap();
    ok(d, &["build-netlist", "--graph", "g.txt", "--out", "n.json"]);
    ok(
        d,
        &[
            "simulate", "--netlist", "n.json", "--source", "1", "--probe", "1", "--delay", "0", "--rise", "0",
            "--width", "1", "--t-stop", "1e-6", "--dt", "1e-8", "--out", "v.csv",
        ],
    );
    let netlist: Netlist = serde_json::from_str(&fs::read_to_string(d.join("n.json")).unwrap()).unwrap();
    let dc = dc_operating_point(&netlist, &[(1, 0.06)]).unwrap();
    let row = last_row(&fs::read_to_string(d.join("v.csv")).unwrap());
    assert!((row[1] - dc[1]).abs() <= 1e-12, "{} vs {}", row[1], dc[1]);
}

#[test]
fn divider_simulation_matches_operating_point() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("g.txt"), CHAIN).unwrap();
    ok(d, &["build-netlist", "--graph", "g.txt", "--ground", "0", "--out", "n.json"]);
    ok(
        d,
        &[
            "simulate", "--netlist", "n.json", "--source", "2", "--probe", "1", "--delay", "0", "--width", "1",
            "--t-stop", "1e-6", "--dt", "1e-9", "--out", "v.csv",
        ],
    );
    let netlist: Netlist = serde_json::from_str(&fs::read_to_string(d.join("n.json")).unwrap()).unwrap();
    let dc = dc_operating_point(&netlist, &[(netlist.node_of(2).unwrap(), 0.06)]).unwrap();
    let expected = dc[netlist.node_of(1).unwrap()];
    // 1 kΩ to ground against 2 kΩ to the source
    assert!((expected - 0.02).abs() < 1e-9);
    let row = last_row(&fs::read_to_string(d.join("v.csv")).unwrap());
    assert!((row[1] - expected).abs() <= 1e-9 * expected, "{} vs {expected}", row[1]);
}

#[test]
fn mine_gates_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-graph", "--nodes", "30", "--seed", "5", "--out", "g.txt"]);
    let mine = |out: &str, jobs: &str| {
        ok(
            d,
            &[
                "mine-gates", "--graph", "g.txt", "--topology", "parallel", "--trials", "12", "--seed", "7", "--jobs",
                jobs, "--t-stop", "1e-4", "--dt", "1e-7", "--out", out,
            ],
        );
        fs::read_to_string(d.join(out)).unwrap()
    };
    let a = mine("a.csv", "1");
    let b = mine("b.csv", "1");
    let c = mine("c.csv", "3");
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(a.lines().count(), 501);
    assert!(a.starts_with("theta,AND,OR,ANDNOT,SELECT,XOR,FALSE\n0.0001,"));
    for line in a.lines().skip(1) {
        let total: u64 = line.split(',').skip(1).map(|v| v.parse::<u64>().unwrap()).sum();
        assert_eq!(total, 12);
    }

    let meta: Value = serde_json::from_str(&fs::read_to_string(d.join("a.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["tool"], "mycoelec");
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["parameters"]["theta-count"], 500);
    assert_eq!(meta["parameters"]["method"], "backward-euler");
}

#[test]
fn sidecar_reruns_reproduce_the_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-graph", "--nodes", "25", "--seed", "11", "--branching-probability", "0.4", "--out", "g.txt"]);
    ok(d, &["gen-graph", "--config", "g.txt.meta.json", "--out", "h.txt"]);
    assert_eq!(
        fs::read_to_string(d.join("g.txt")).unwrap(),
        fs::read_to_string(d.join("h.txt")).unwrap()
    );
    // flags override config values
    ok(d, &["gen-graph", "--config", "g.txt.meta.json", "--seed", "12", "--out", "k.txt"]);
    assert_ne!(
        fs::read_to_string(d.join("g.txt")).unwrap(),
        fs::read_to_string(d.join("k.txt")).unwrap()
    );
}

#[test]
fn synth_and_analyze_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = r#"{"duration": 20000, "sample-interval": 2, "noise-sd": 0.1, "seed": 3,
        "events": [{"kind": "train", "start": 4000, "count": 4, "interval": 3000, "amplitude": 2.0, "fwhm": 800}]}"#;
    fs::write(d.join("synth.json"), config).unwrap();
    ok(d, &["synth-signal", "--config", "synth.json", "--out", "sig.csv"]);
    ok(
        d,
        &[
            "analyze-spikes", "--input", "sig.csv", "--baseline-window", "6000", "--threshold", "1", "--min-width", "100",
            "--train-gap", "4000", "--smooth-window", "8000", "--out", "rep.json",
        ],
    );
    let report: Value = serde_json::from_str(&fs::read_to_string(d.join("rep.json")).unwrap()).unwrap();
    let spikes = report["spikes"].as_array().unwrap();
    assert_eq!(spikes.len(), 4);
    for (k, s) in spikes.iter().enumerate() {
        let t = s["peak_time"].as_f64().unwrap();
        assert!((t - (4000.0 + 3000.0 * k as f64)).abs() < 50.0, "{t}");
        assert!((s["amplitude"].as_f64().unwrap() - 2.0).abs() < 0.1);
    }
    assert_eq!(report["trains"].as_array().unwrap().len(), 1);
    let meta: Value = serde_json::from_str(&fs::read_to_string(d.join("sig.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 3);
    assert_eq!(meta["parameters"]["events"][0]["kind"], "train");
}

#[test]
fn cv_sweep_writes_pinched_loop() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["cv-sweep", "--out", "iv.csv"]);
    let csv = fs::read_to_string(d.join("iv.csv")).unwrap();
    assert!(csv.starts_with("t,v,i\n"));
    let meta: Value = serde_json::from_str(&fs::read_to_string(d.join("iv.csv.meta.json")).unwrap()).unwrap();
    let max_i = meta["summary"]["max_abs_current"].as_f64().unwrap();
    assert!(meta["summary"]["loop"]["pinch_current"].as_f64().unwrap() <= 0.01 * max_i);
    assert!(meta["summary"]["loop"]["lobe_area"].as_f64().unwrap() > 0.0);
    assert!(meta["seed"].is_null());
}

#[test]
fn export_spice_writes_deck() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("g.txt"), CHAIN).unwrap();
    ok(d, &["build-netlist", "--graph", "g.txt", "--topology", "serial", "--out", "n.json"]);
    ok(d, &["export-spice", "--netlist", "n.json", "--source", "2", "--out", "deck.cir"]);
    let deck = fs::read_to_string(d.join("deck.cir")).unwrap();
    assert!(deck.contains("PULSE(0 0.06 "));
    assert!(deck.contains(".tran "));
    assert!(deck.trim_end().ends_with(".end"));
}

#[test]
fn errors_exit_2_with_module_prefix_and_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.json"), r#"{"bogus": 1}"#).unwrap();
    fails_with(d, &["gen-graph", "--config", "bad.json", "--out", "g.txt"], "config: unknown key `bogus`");
    fails_with(d, &["gen-graph", "--nodes", "0", "--out", "g.txt"], "graph: ");
    fails_with(d, &["gen-graph", "--bogus-flag", "1", "--out", "g.txt"], "--bogus-flag");
    fails_with(d, &["mine-gates", "--graph", "missing.txt", "--out", "h.csv"], "io: ");
    fails_with(d, &["simulate", "--out", "v.csv"], "config: --netlist is required");

    fs::write(d.join("g.txt"), ONE_EDGE).unwrap();
    ok(d, &["build-netlist", "--graph", "g.txt", "--out", "n.json"]);
    fails_with(d, &["simulate", "--netlist", "n.json", "--probe", "9", "--out", "v.csv"], "circuit: graph node 9");
    fails_with(
        d,
        &["simulate", "--netlist", "n.json", "--source", "1", "--dt", "-1", "--out", "v.csv"],
        "solver: ",
    );
    fails_with(d, &["cv-sweep", "--r-on", "-1", "--out", "iv.csv"], "memristor: ");
    fails_with(d, &["mine-gates", "--graph", "g.txt", "--out", "h.csv"], "gates: ");
    fs::write(d.join("sig.csv"), "t,value\n0,1\n1,2\n5,3\n").unwrap();
    fails_with(
        d,
        &["analyze-spikes", "--input", "sig.csv", "--baseline-window", "2", "--threshold", "1", "--out", "r.json"],
        "spikes: ",
    );

    for f in ["g2.txt", "v.csv", "iv.csv", "h.csv", "r.json"] {
        assert!(!d.join(f).exists(), "{f} written on failure");
    }
    let leftovers: Vec<_> = fs::read_dir(d)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}
