//! Reruns of the built binary must reproduce their output byte for byte.

use std::path::Path;
use std::process::{Command, Stdio};

use lprefine::rng::{synthetic_instance, SyntheticSpec};
use lprefine_cli::io::write_market_array;
use lprefine_testkit::random_graph;

const BIN: &str = env!("CARGO_BIN_EXE_lprefine");

/// Runs the binary with `args`; returns (exit code, bytes of `out`).
fn run(args: &[&str], out: &Path) -> (i32, Vec<u8>) {
    let _ = std::fs::remove_file(out);
    let status = Command::new(BIN).args(args).stderr(Stdio::null()).status().expect("binary runs");
    (status.code().unwrap_or(-1), std::fs::read(out).unwrap_or_default())
}

fn write_vector(path: &Path, v: &lprefine::Vector) {
    let text: String = v.iter().map(|x| format!("{x:.16e}\n")).collect();
    std::fs::write(path, text).unwrap();
}

pub fn criterion_11() -> (bool, String) {
    let dir = tempfile::tempdir().expect("temp dir");
    let d = dir.path();
    let spec = SyntheticSpec {
        n: 10,
        d: 2,
        m1: 4,
        m2: 30,
        p: 4.0,
        linear: true,
    };
    let inst = synthetic_instance(&spec, 11).unwrap();
    std::fs::write(d.join("a.mtx"), write_market_array(inst.a())).unwrap();
    std::fs::write(d.join("m.mtx"), write_market_array(inst.m_mat())).unwrap();
    std::fs::write(d.join("n.mtx"), write_market_array(inst.n_mat())).unwrap();
    write_vector(&d.join("d.txt"), inst.d_vec());
    write_vector(&d.join("b.txt"), inst.b());
    let g = random_graph(11, 12, 10, 3);
    let edges: String = g.edges.iter().map(|(u, v, w)| format!("{u} {v} {w:.16e}\n")).collect();
    let labels: String = g.labels.iter().map(|(v, x)| format!("{v} {x:.16e}\n")).collect();
    std::fs::write(d.join("g.edges"), edges).unwrap();
    std::fs::write(d.join("g.lab"), labels).unwrap();
    let s = |name: &str| d.join(name).display().to_string();
    let report = s("report.json");
    let csv = s("bench.csv");

    let runs: Vec<(&str, Vec<String>, String)> = vec![
        (
            "solve files",
            vec!["solve", "--p", "4", "--eps", "1e-10", "--A", &s("a.mtx"), "--M", &s("m.mtx"), "--N", &s("n.mtx"), "--d", &s("d.txt"), "--b", &s("b.txt"), "--report", &report]
                .into_iter()
                .map(String::from)
                .collect(),
            report.clone(),
        ),
        (
            "solve synthetic maintenance",
            ["solve", "--p", "3", "--synthetic", "0,40,12,3", "--seed", "5", "--backend", "inverse-maintenance", "--warm-start", "homotopy", "--report", &report]
                .into_iter()
                .map(String::from)
                .collect(),
            report.clone(),
        ),
        (
            "solve graph irls",
            ["solve", "--algo", "irls", "--p", "3.5", "--graph", &s("g.edges"), "--labels", &s("g.lab"), "--report", &report]
                .into_iter()
                .map(String::from)
                .collect(),
            report.clone(),
        ),
        (
            "solve classic irls",
            ["solve", "--algo", "classic-irls", "--p", "3.5", "--synthetic", "0,50,20,4", "--seed", "2", "--report", &report]
                .into_iter()
                .map(String::from)
                .collect(),
            report.clone(),
        ),
        (
            "bench mwu",
            ["bench", "--p", "2,4,8", "--m", "64,256", "--seeds", "0,1", "--jobs", "2", "--out", &csv].into_iter().map(String::from).collect(),
            csv.clone(),
        ),
        (
            "bench complete",
            ["bench", "--mode", "complete", "--p", "3,4", "--m", "32", "--n", "8", "--d", "2", "--seeds", "3", "--out", &csv].into_iter().map(String::from).collect(),
            csv.clone(),
        ),
    ];
    let mut bad = Vec::new();
    for (name, args, out) in &runs {
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let (c1, first) = run(&argv, Path::new(out));
        let (c2, second) = run(&argv, Path::new(out));
        if first.is_empty() || first != second || c1 != c2 {
            bad.push(format!("{name} (exit {c1}/{c2}, {} vs {} bytes)", first.len(), second.len()));
        }
    }
    let detail = if bad.is_empty() {
        format!("{} commands rerun byte-identically", runs.len())
    } else {
        format!("differing: {}", bad.join(", "))
    };
    (bad.is_empty(), detail)
}
