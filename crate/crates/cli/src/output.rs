use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use graphnlp::ipm::{log_header, solve, Solution};
use graphnlp::nlp::{NlpProblem, StandardNLP};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// One line of `run.csv`. Column order is the field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub instance: String,
    pub horizon: usize,
    pub strategy: String,
    pub linear_solver: String,
    pub iterator: String,
    pub k: usize,
    pub omega: String,
    pub tol: f64,
    pub max_iter: usize,
    pub threads: usize,
    pub seed: u64,
    pub variables: usize,
    pub constraints: usize,
    pub status: String,
    pub iterations: usize,
    pub restorations: usize,
    pub linear_iterations: usize,
    pub objective: f64,
    pub kkt_error: f64,
    pub time_total: f64,
    pub time_function: f64,
    pub time_linear: f64,
}

impl ResultRow {
    /// Configuration echo with status `error` and no results.
    pub fn echo(cfg: &RunConfig, variables: usize, constraints: usize) -> Self {
        ResultRow {
            instance: cfg.instance_label(),
            horizon: cfg.horizon,
            strategy: cfg.strategy(),
            linear_solver: cfg.linear_solver_name().into(),
            iterator: cfg.iterator_name().into(),
            k: cfg.k,
            omega: cfg.omega.to_string(),
            tol: cfg.tol,
            max_iter: cfg.max_iter,
            threads: cfg.threads,
            seed: cfg.seed,
            variables,
            constraints,
            status: "error".into(),
            iterations: 0,
            restorations: 0,
            linear_iterations: 0,
            objective: f64::NAN,
            kkt_error: f64::NAN,
            time_total: f64::NAN,
            time_function: f64::NAN,
            time_linear: f64::NAN,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == "optimal"
    }
}

/// Outcome of a single run. `diagnostic` is set when the solve did not reach optimality.
pub struct RunOutcome {
    pub row: ResultRow,
    pub diagnostic: Option<String>,
}

/// Solves `cfg`, writing `iterations.log` and `solution.json` into `dir`.
/// Setup errors on the instance are returned as `Err`; solver failures are
/// reported through `RunOutcome::diagnostic`.
pub fn run_one(cfg: &RunConfig, dir: &Path) -> Result<RunOutcome> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let nlp = cfg.build_problem()?;
    let mut row = ResultRow::echo(cfg, nlp.num_variables(), nlp.num_constraints());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .context("building thread pool")?;
    let options = cfg.ipm_options();
    let start = Instant::now();
    let result = pool.install(|| solve(&nlp, &options));
    let wall = start.elapsed().as_secs_f64();
    let sol = match result {
        Ok(sol) => sol,
        Err(e) => {
            row.time_total = wall;
            fs::write(dir.join("iterations.log"), format!("{}\n", log_header()))?;
            return Ok(RunOutcome {
                row,
                diagnostic: Some(format!("linear algebra failure: {e}")),
            });
        }
    };
    let r = &sol.report;
    row.status = r.status.as_str().into();
    row.iterations = r.iterations;
    row.restorations = r.restorations;
    row.linear_iterations = r.linear_iterations;
    row.objective = r.objective;
    row.kkt_error = r.kkt_error;
    row.time_total = r.time_total;
    row.time_function = r.time_function;
    row.time_linear = r.time_linear;

    let mut log = r.log.join("\n");
    log.push('\n');
    fs::write(dir.join("iterations.log"), log)?;
    let json = serde_json::to_string_pretty(&solution_json(cfg, &nlp, &sol))?;
    fs::write(dir.join("solution.json"), json + "\n")?;

    let diagnostic = (!row.is_optimal()).then(|| {
        format!(
            "solver stopped with status {} after {} iterations (primal inf {:.3e}, dual inf {:.3e})",
            r.status, r.iterations, r.primal_infeasibility, r.dual_infeasibility
        )
    });
    Ok(RunOutcome { row, diagnostic })
}

#[derive(Serialize)]
struct SolutionFile {
    instance: String,
    horizon: usize,
    strategy: String,
    status: String,
    objective: f64,
    nodes: Vec<NodeValues>,
}

#[derive(Serialize, Default)]
struct NodeValues {
    node: usize,
    /// Primal value and net bound multiplier `z_l - z_u` per column name.
    variables: BTreeMap<String, VariableValue>,
    /// Constraint multiplier per row tag.
    constraints: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct VariableValue {
    value: f64,
    bound_dual: f64,
}

fn solution_json(cfg: &RunConfig, nlp: &StandardNLP, sol: &Solution) -> SolutionFile {
    let p = &sol.point;
    let mut nodes: Vec<NodeValues> = (0..nlp.num_nodes())
        .map(|i| NodeValues {
            node: i + 1,
            ..NodeValues::default()
        })
        .collect();
    for j in 0..nlp.num_variables() {
        nodes[nlp.column_node(j)].variables.insert(
            nlp.column_name(j).to_string(),
            VariableValue {
                value: p.x[j],
                bound_dual: p.z_l[j] - p.z_u[j],
            },
        );
    }
    for r in 0..nlp.num_constraints() {
        nodes[nlp.row_node(r)]
            .constraints
            .insert(nlp.row_tag(r).to_string(), p.lambda[r]);
    }
    SolutionFile {
        instance: cfg.instance_label(),
        horizon: cfg.horizon,
        strategy: cfg.strategy(),
        status: sol.report.status.as_str().into(),
        objective: sol.report.objective,
        nodes,
    }
}

/// Appends `row` to the CSV at `path`, writing the header when the file is new or empty.
pub fn append_row(path: &Path, row: &ResultRow) -> Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    w.serialize(row)?;
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(strategy: &str, horizon: usize) -> ResultRow {
        ResultRow {
            instance: "gas".into(),
            horizon,
            strategy: strategy.into(),
            linear_solver: "direct".into(),
            iterator: "gmres".into(),
            k: 4,
            omega: "auto".into(),
            tol: 1e-8,
            max_iter: 1000,
            threads: 4,
            seed: 0,
            variables: 10,
            constraints: 5,
            status: "optimal".into(),
            iterations: 7,
            restorations: 0,
            linear_iterations: 0,
            objective: -1.5,
            kkt_error: 1e-9,
            time_total: 0.25,
            time_function: 0.05,
            time_linear: 0.125,
        }
    }

    #[test]
    fn csv_append_round_trips_with_single_header() {
        let dir = std::env::temp_dir().join(format!("graphnlp-csv-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.csv");
        let _ = fs::remove_file(&path);
        let rows = [row("direct", 4), row("ras-gmres-K4", 6)];
        for r in &rows {
            append_row(&path, r).unwrap();
        }
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("instance,")).count(), 1);
        assert_eq!(read_rows(&path).unwrap(), rows);
        fs::remove_dir_all(&dir).unwrap();
    }
}
