use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use graphnlp::instances::{build_gas, build_power, gas_reference, load_fixture, power_case14, Instance};
use graphnlp::ipm::IpmOptions;
use graphnlp::linalg::{IteratorKind, LinearSolverConfig, OmegaChoice};
use graphnlp::nlp::StandardNLP;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Generator {
    Gas,
    Power,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Direct,
    Ras,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum IteratorArg {
    Richardson,
    Gmres,
}

/// `auto` or a fixed overlap distance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OmegaArg {
    Auto,
    Fixed(usize),
}

impl FromStr for OmegaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(OmegaArg::Auto);
        }
        s.parse::<usize>()
            .map(OmegaArg::Fixed)
            .map_err(|_| format!("expected `auto` or a nonnegative integer, got {s:?}"))
    }
}

impl fmt::Display for OmegaArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OmegaArg::Auto => f.write_str("auto"),
            OmegaArg::Fixed(w) => write!(f, "{w}"),
        }
    }
}

/// Instance source. `--instance` wins over `--generate`.
#[derive(Args, Clone, Debug)]
pub struct SourceArgs {
    /// Instance fixture file (JSON).
    #[arg(long, conflicts_with = "generate")]
    pub instance: Option<PathBuf>,
    /// Bundled network to generate.
    #[arg(long, value_enum, default_value = "gas")]
    pub generate: Generator,
}

/// Solver settings shared by every subcommand.
#[derive(Args, Clone, Debug)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value = "direct")]
    pub linear_solver: SolverKind,
    #[arg(long, value_enum, default_value = "gmres")]
    pub iterator: IteratorArg,
    /// Number of subdomains for `ras`.
    #[arg(long = "K", value_name = "K", default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    /// Overlap distance, or `auto`.
    #[arg(long, default_value = "auto")]
    pub omega: OmegaArg,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: u64,
    /// Recorded in every output row; all components are deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// One fully specified run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub instance: Option<PathBuf>,
    pub generate: Generator,
    pub horizon: usize,
    pub linear_solver: SolverKind,
    pub iterator: IteratorArg,
    pub k: usize,
    pub omega: OmegaArg,
    pub tol: f64,
    pub max_iter: usize,
    pub threads: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(source: &SourceArgs, solver: &SolverArgs, horizon: usize, linear_solver: SolverKind) -> Self {
        RunConfig {
            instance: source.instance.clone(),
            generate: source.generate,
            horizon,
            linear_solver,
            iterator: solver.iterator,
            k: solver.k as usize,
            omega: solver.omega,
            tol: solver.tol,
            max_iter: solver.max_iter,
            threads: solver.threads as usize,
            seed: solver.seed,
        }
    }

    pub fn instance_label(&self) -> String {
        match &self.instance {
            Some(p) => p.display().to_string(),
            None => match self.generate {
                Generator::Gas => "gas".into(),
                Generator::Power => "power".into(),
            },
        }
    }

    /// `direct`, or `ras-<iterator>-K<k>`.
    pub fn strategy(&self) -> String {
        match self.linear_solver {
            SolverKind::Direct => "direct".into(),
            SolverKind::Ras => format!("ras-{}-K{}", self.iterator_name(), self.k),
        }
    }

    pub fn iterator_name(&self) -> &'static str {
        match self.iterator {
            IteratorArg::Richardson => "richardson",
            IteratorArg::Gmres => "gmres",
        }
    }

    pub fn linear_solver_name(&self) -> &'static str {
        match self.linear_solver {
            SolverKind::Direct => "direct",
            SolverKind::Ras => "ras",
        }
    }

    pub fn linear_solver_config(&self) -> LinearSolverConfig {
        match self.linear_solver {
            SolverKind::Direct => LinearSolverConfig::Direct,
            SolverKind::Ras => {
                let iterator = match self.iterator {
                    IteratorArg::Richardson => IteratorKind::Richardson,
                    IteratorArg::Gmres => IteratorKind::Gmres,
                };
                let omega = match self.omega {
                    OmegaArg::Auto => OmegaChoice::Auto,
                    OmegaArg::Fixed(w) => OmegaChoice::Fixed(w),
                };
                LinearSolverConfig::ras(iterator, self.k, omega)
            }
        }
    }

    pub fn ipm_options(&self) -> IpmOptions {
        IpmOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            linear_solver: self.linear_solver_config(),
            ..IpmOptions::default()
        }
    }

    pub fn build_problem(&self) -> Result<StandardNLP> {
        let instance = match &self.instance {
            Some(path) => load_fixture(path).with_context(|| format!("loading {}", path.display()))?,
            None => match self.generate {
                Generator::Gas => Instance::Gas(gas_reference()),
                Generator::Power => Instance::Power(power_case14()),
            },
        };
        let graph = match &instance {
            Instance::Gas(g) => build_gas(g, self.horizon)?.0,
            Instance::Power(p) => build_power(p, self.horizon)?.0,
        };
        Ok(graph.flatten()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omega_parses_auto_and_integers() {
        assert_eq!("auto".parse::<OmegaArg>().unwrap(), OmegaArg::Auto);
        assert_eq!("3".parse::<OmegaArg>().unwrap(), OmegaArg::Fixed(3));
        assert!("-1".parse::<OmegaArg>().is_err());
        assert!("wide".parse::<OmegaArg>().is_err());
    }
}
