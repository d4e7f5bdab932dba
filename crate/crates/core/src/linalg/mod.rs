//! Linear solvers for symmetric indefinite KKT systems.
//!
//! [`KktSolver`] is the front-end used by the interior-point driver. Its
//! direct path factorizes the whole matrix with [`ldl::LdlFactor`]; its RAS
//! path runs Richardson or GMRES preconditioned by a
//! [`ras::RasPreconditioner`] and grows the overlap whenever the iteration
//! fails to converge. Grown overlaps persist for later solves.

pub mod krylov;
pub mod ldl;
pub mod ras;
pub mod sparse;

use std::sync::Arc;

use thiserror::Error;

use crate::nlp::GraphStructure;
use crate::partition::{partition_graph, PartitionError, SubdomainMap};
use krylov::{gmres, richardson, IterStats};
use ldl::{LdlFactor, LdlOptions, Symbolic};
use ras::RasPreconditioner;
use sparse::SymMatrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is numerically singular")]
    SingularMatrix,
    #[error("subdomain {0} matrix is numerically singular")]
    SubdomainSingular(usize),
    #[error("partitioning failed: {0}")]
    Partition(#[from] PartitionError),
    #[error("the RAS solver needs a problem graph")]
    MissingStructure,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IteratorKind {
    Richardson,
    Gmres,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OmegaChoice {
    Auto,
    Fixed(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinearSolverConfig {
    Direct,
    Ras {
        iterator: IteratorKind,
        parts: usize,
        omega: OmegaChoice,
        restart: usize,
        maxit: usize,
    },
}

impl LinearSolverConfig {
    pub fn ras(iterator: IteratorKind, parts: usize, omega: OmegaChoice) -> Self {
        LinearSolverConfig::Ras {
            iterator,
            parts,
            omega,
            restart: 100,
            maxit: 200,
        }
    }
}

/// Per-solve diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearSolveInfo {
    pub iterations: usize,
    pub adaptations: usize,
    pub residual: f64,
    pub converged: bool,
}

struct RasState {
    iterator: IteratorKind,
    restart: usize,
    maxit: usize,
    structure: GraphStructure,
    map: SubdomainMap,
    prec: Option<RasPreconditioner>,
}

pub struct KktSolver {
    config: LinearSolverConfig,
    symbolic: Option<Arc<Symbolic>>,
    ras: Option<RasState>,
}

impl KktSolver {
    pub fn new(config: LinearSolverConfig, structure: Option<&GraphStructure>) -> Result<Self, LinalgError> {
        let ras = match config {
            LinearSolverConfig::Direct => None,
            LinearSolverConfig::Ras {
                iterator,
                parts,
                omega,
                restart,
                maxit,
            } => {
                let structure = structure.ok_or(LinalgError::MissingStructure)?.clone();
                let cells = partition_graph(&structure.graph, parts)?;
                let map = match omega {
                    OmegaChoice::Auto => {
                        SubdomainMap::build_auto(&structure.graph, &structure.node_indices, &cells)
                    }
                    OmegaChoice::Fixed(w) => SubdomainMap::build(
                        &structure.graph,
                        &structure.node_indices,
                        &cells,
                        &vec![w; cells.len()],
                    ),
                };
                Some(RasState {
                    iterator,
                    restart,
                    maxit,
                    structure,
                    map,
                    prec: None,
                })
            }
        };
        Ok(KktSolver {
            config,
            symbolic: None,
            ras,
        })
    }

    pub fn config(&self) -> LinearSolverConfig {
        self.config
    }

    /// Current subdomain map of the RAS path.
    pub fn subdomains(&self) -> Option<&SubdomainMap> {
        self.ras.as_ref().map(|r| &r.map)
    }

    /// Solves `M d = p`; RAS iterations stop at `tol` relative residual.
    pub fn solve(
        &mut self,
        m: &SymMatrix,
        p: &[f64],
        tol: f64,
    ) -> Result<(Vec<f64>, LinearSolveInfo), LinalgError> {
        let Some(state) = self.ras.as_mut() else {
            let sym = self
                .symbolic
                .get_or_insert_with(|| Arc::new(Symbolic::analyze(m)))
                .clone();
            let f = LdlFactor::new(sym, m, LdlOptions::default())?;
            let d = f.solve(p);
            let info = LinearSolveInfo {
                iterations: 0,
                adaptations: 0,
                residual: relative_residual(m, p, &d),
                converged: true,
            };
            return Ok((d, info));
        };

        match state.prec.as_mut() {
            Some(prec) => prec.refresh(m)?,
            None => state.prec = Some(RasPreconditioner::build(m, state.map.clone())?),
        }
        let mut adaptations = 0;
        loop {
            let prec = state.prec.as_ref().unwrap();
            let (d, stats): (Vec<f64>, IterStats) = match state.iterator {
                IteratorKind::Richardson => richardson(m, p, prec, tol, state.maxit),
                IteratorKind::Gmres => gmres(m, p, prec, tol, state.maxit, state.restart),
            };
            if stats.converged || state.map.is_saturated(&state.structure.graph) {
                let info = LinearSolveInfo {
                    iterations: stats.iterations,
                    adaptations,
                    residual: stats.residual,
                    converged: stats.converged,
                };
                return Ok((d, info));
            }
            state.map = state
                .map
                .grow(&state.structure.graph, &state.structure.node_indices);
            state.prec = Some(RasPreconditioner::build(m, state.map.clone())?);
            adaptations += 1;
        }
    }
}

/// `‖p − M d‖₂ / (1 + ‖p‖₂)`.
pub fn relative_residual(m: &SymMatrix, p: &[f64], d: &[f64]) -> f64 {
    let md = m.mul(d);
    let r: Vec<f64> = p.iter().zip(&md).map(|(a, b)| a - b).collect();
    sparse::norm2(&r) / (1.0 + sparse::norm2(p))
}
