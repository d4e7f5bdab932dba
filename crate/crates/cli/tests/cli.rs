use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn graphnlp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphnlp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn column(table: &[Vec<String>], name: &str) -> Vec<String> {
    let j = table[0].iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    table[1..].iter().map(|r| r[j].clone()).collect()
}

fn run_gas(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--generate", "gas", "--horizon", "24", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    graphnlp(&args)
}

fn objective(out: &Path) -> f64 {
    column(&rows(&out.join("run.csv")), "objective")[0].parse().unwrap()
}

#[test]
fn direct_gas_run_writes_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_gas(tmp.path(), &["--linear-solver", "direct"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let table = rows(&tmp.path().join("run.csv"));
    assert_eq!(table.len(), 2);
    assert_eq!(column(&table, "status"), ["optimal"]);
    for t in ["time_total", "time_function", "time_linear"] {
        let v: f64 = column(&table, t)[0].parse().unwrap();
        assert!(v.is_finite() && v >= 0.0, "{t} = {v}");
    }

    let log = fs::read_to_string(tmp.path().join("iterations.log")).unwrap();
    let iterations: usize = column(&table, "iterations")[0].parse().unwrap();
    assert!(log.starts_with(&format!("{:>6}", "iter")));
    assert_eq!(log.lines().count(), iterations + 2);

    let sol: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("solution.json")).unwrap()).unwrap();
    assert_eq!(sol["status"], "optimal");
    let nodes = sol["nodes"].as_array().unwrap();
    assert_eq!(nodes.len(), 24);
    let vars: usize = nodes.iter().map(|n| n["variables"].as_object().unwrap().len()).sum();
    let cons: usize = nodes.iter().map(|n| n["constraints"].as_object().unwrap().len()).sum();
    assert_eq!(vars.to_string(), column(&table, "variables")[0]);
    assert_eq!(cons.to_string(), column(&table, "constraints")[0]);
    let first = nodes[0]["variables"].as_object().unwrap();
    assert!(first.values().all(|v| v["value"].is_f64() && v["bound_dual"].is_f64()));
}

#[test]
fn ras_objective_matches_direct() {
    let direct = tempfile::tempdir().unwrap();
    let ras = tempfile::tempdir().unwrap();
    assert!(run_gas(direct.path(), &["--linear-solver", "direct"]).status.success());
    let out = run_gas(ras.path(), &["--linear-solver", "ras", "--K", "4", "--iterator", "gmres"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (a, b) = (objective(direct.path()), objective(ras.path()));
    assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {b}");
}

#[test]
fn thread_count_does_not_change_iterates() {
    let one = tempfile::tempdir().unwrap();
    let four = tempfile::tempdir().unwrap();
    let ras = ["--linear-solver", "ras", "--K", "4", "--iterator", "richardson"];
    assert!(run_gas(one.path(), &[&ras[..], &["--threads", "1"]].concat()).status.success());
    assert!(run_gas(four.path(), &[&ras[..], &["--threads", "4"]].concat()).status.success());
    let log = |p: &Path| fs::read_to_string(p.join("iterations.log")).unwrap();
    assert_eq!(log(one.path()), log(four.path()));
    assert_eq!(objective(one.path()).to_bits(), objective(four.path()).to_bits());
    let (t1, t4) = (rows(&one.path().join("run.csv")), rows(&four.path().join("run.csv")));
    assert_eq!(column(&t1, "iterations"), column(&t4, "iterations"));
    assert_eq!(column(&t1, "threads"), ["1"]);
    assert_eq!(column(&t4, "threads"), ["4"]);
}

#[test]
fn invalid_flag_values_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    for bad in [["--K", "0"], ["--threads", "0"], ["--omega", "-1"], ["--linear-solver", "cg"]] {
        let out = run_gas(tmp.path(), &bad);
        assert_eq!(out.status.code(), Some(2), "{bad:?}");
    }
    assert!(!tmp.path().join("run.csv").exists());
}

#[test]
fn solver_failure_exits_nonzero_with_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_gas(tmp.path(), &["--max-iter", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("max_iter"));
    assert_eq!(column(&rows(&tmp.path().join("run.csv")), "status"), ["max_iter"]);
}

#[test]
fn bench_matrix_produces_merged_table_and_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let out = graphnlp(&[
        "bench", "--generate", "gas", "--horizons", "4,6,8", "--linear-solvers", "direct,ras",
        "--out", tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = rows(&tmp.path().join("run.csv"));
    assert_eq!(table.len(), 7);
    assert!(column(&table, "status").iter().all(|s| s == "optimal"));
    let vars: Vec<usize> = column(&table, "variables").iter().map(|v| v.parse().unwrap()).collect();
    for half in vars.chunks(3) {
        assert!(half.windows(2).all(|w| w[0] < w[1]), "{vars:?}");
    }
    assert_eq!(vars[..3], vars[3..]);
    let svg = fs::read_to_string(tmp.path().join("bench.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 6);
}

#[test]
fn bench_with_one_config_still_plots() {
    let tmp = tempfile::tempdir().unwrap();
    let out = graphnlp(&[
        "bench", "--generate", "power", "--horizons", "2", "--linear-solvers", "direct",
        "--out", tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(rows(&tmp.path().join("run.csv")).len(), 2);
    let svg = fs::read_to_string(tmp.path().join("bench.svg")).unwrap();
    assert_eq!(svg.matches("<circle").count(), 3);
}

#[test]
fn bench_keeps_rows_of_failed_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = graphnlp(&[
        "bench", "--generate", "gas", "--horizons", "4,6", "--linear-solvers", "direct", "--max-iter", "3",
        "--out", tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let table = rows(&tmp.path().join("run.csv"));
    assert_eq!(column(&table, "status"), ["max_iter", "max_iter"]);
    assert!(tmp.path().join("bench.svg").exists());
}

#[test]
fn plot_is_derived_from_csv_alone() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(graphnlp(&[
        "bench", "--generate", "power", "--horizons", "2,3", "--linear-solvers", "direct",
        "--out", tmp.path().to_str().unwrap(),
    ])
    .status
    .success());
    let again = tmp.path().join("again.svg");
    let out = graphnlp(&[
        "plot", "--csv", tmp.path().join("run.csv").to_str().unwrap(), "--out", again.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(fs::read(&again).unwrap(), fs::read(tmp.path().join("bench.svg")).unwrap());
}

#[test]
fn partition_dump_lists_every_subdomain() {
    let tmp = tempfile::tempdir().unwrap();
    let out = graphnlp(&[
        "partition", "--generate", "gas", "--horizon", "12", "--K", "3", "--omega", "1",
        "--out", tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(tmp.path().join("partition.txt")).unwrap();
    let heads: Vec<&str> = text.lines().filter(|l| l.starts_with("subdomain ")).collect();
    assert_eq!(heads.len(), 3);
    assert!(heads.iter().all(|l| l.contains("omega 1")));
}

#[test]
fn fixture_files_are_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/power_case14.json");
    let out = graphnlp(&[
        "run", "--instance", fixture.to_str().unwrap(), "--horizon", "2",
        "--out", tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(column(&rows(&tmp.path().join("run.csv")), "instance")[0], fixture.display().to_string());
}
