//! Flattened nonlinear programs `min f(x) s.t. c(x) = 0, l ≤ x ≤ u`.
//!
//! [`NlpProblem`] is the oracle interface consumed by the interior-point
//! solver. [`StandardNLP`] implements it for flattened [`OptiGraph`]s, with
//! per-node oracle partials computed independently and merged in node order,
//! so results do not depend on the number of worker threads.

use std::ops::Range;

use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{DerivativeWorkspace, DomainError, Tape};
use crate::model::{ConstraintKind, ModelError, OptiGraph, Sense};
use crate::partition::Graph;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("trial point failure at node {node}: {source}")]
    TrialPointFailure {
        node: usize,
        #[source]
        source: DomainError,
    },
}

/// Problem graph and per-node primal-dual index sets `U_i` over `[x; λ]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphStructure {
    pub graph: Graph,
    pub node_indices: Vec<Vec<usize>>,
}

/// Oracle interface of `min f(x) s.t. c(x) = 0, l ≤ x ≤ u`.
///
/// Hessian structure is the lower triangle (`row >= col`) of the Lagrangian
/// Hessian `obj_factor·∇²f + Σ λ_r ∇²c_r`.
pub trait NlpProblem: Sync {
    fn num_variables(&self) -> usize;
    fn num_constraints(&self) -> usize;
    fn lower_bounds(&self) -> &[f64];
    fn upper_bounds(&self) -> &[f64];
    fn initial_point(&self) -> Vec<f64>;
    fn objective(&self, x: &[f64]) -> Result<f64, OracleError>;
    fn gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<(), OracleError>;
    fn constraints(&self, x: &[f64], c: &mut [f64]) -> Result<(), OracleError>;
    fn jacobian_structure(&self) -> &[(usize, usize)];
    fn jacobian_values(&self, x: &[f64], values: &mut [f64]) -> Result<(), OracleError>;
    fn hessian_structure(&self) -> &[(usize, usize)];
    fn hessian_values(
        &self,
        x: &[f64],
        obj_factor: f64,
        lambda: &[f64],
        values: &mut [f64],
    ) -> Result<(), OracleError>;
    /// Graph structure for decomposition-based linear solvers.
    fn structure(&self) -> Option<&GraphStructure> {
        None
    }
}

#[derive(Debug, Clone)]
struct RowOracle {
    tape: Tape,
    rhs: f64,
    /// Slack column and its sign in the row.
    slack: Option<(usize, f64)>,
}

#[derive(Debug, Clone)]
struct NodeOracle {
    objective: Vec<Tape>,
    rows: Vec<RowOracle>,
    vars: Range<usize>,
    cons: Range<usize>,
    /// Jacobian value slots of this node's rows, contiguous.
    jac: Range<usize>,
    /// Global Hessian slot of each local Hessian contribution.
    hess_targets: Vec<usize>,
}

/// Flattened form of an [`OptiGraph`].
///
/// Columns are ordered node by node: the node's variables in creation order,
/// then one slack per inequality constraint of the node. Rows are ordered
/// node by node: inner constraints first, then link constraints.
#[derive(Debug, Clone)]
pub struct StandardNLP {
    n: usize,
    m: usize,
    lb: Vec<f64>,
    ub: Vec<f64>,
    x0: Vec<f64>,
    names: Vec<String>,
    column_node: Vec<usize>,
    column_of_var: Vec<usize>,
    row_tags: Vec<String>,
    row_node: Vec<usize>,
    row_kind: Vec<ConstraintKind>,
    nodes: Vec<NodeOracle>,
    jac_structure: Vec<(usize, usize)>,
    hess_structure: Vec<(usize, usize)>,
    structure: GraphStructure,
}

impl OptiGraph {
    /// Converts the model to a [`StandardNLP`].
    ///
    /// `g(x) ≤ b` becomes `g(x) − b + s = 0` and `g(x) ≥ b` becomes
    /// `g(x) − b − s = 0` with `s ≥ 0` owned by the constraint's node.
    pub fn flatten(&self) -> Result<StandardNLP, ModelError> {
        if self.num_nodes() == 0 {
            return Err(ModelError::EmptyModel);
        }
        let mut column_of_var = vec![usize::MAX; self.num_variables()];
        let mut lb = Vec::new();
        let mut ub = Vec::new();
        let mut x0 = Vec::new();
        let mut names = Vec::new();
        let mut column_node = Vec::new();
        let mut var_ranges = Vec::new();
        let mut slack_col = vec![None; self.num_constraints()];

        for node in self.nodes() {
            let start = lb.len();
            for &v in self.node_variables(node) {
                let var = self.variable(v);
                column_of_var[v.0] = lb.len();
                lb.push(var.lb);
                ub.push(var.ub);
                x0.push(var.start_value());
                names.push(var.name.clone());
                column_node.push(node.0);
            }
            for &c in self.node_constraints(node) {
                let con = self.constraint(c);
                if con.sense != Sense::Eq {
                    slack_col[c.0] = Some(lb.len());
                    lb.push(0.0);
                    ub.push(f64::INFINITY);
                    x0.push(0.0);
                    let label = if con.tag.is_empty() {
                        format!("c{}", c.0)
                    } else {
                        con.tag.clone()
                    };
                    names.push(format!("slack[{label}]"));
                    column_node.push(node.0);
                }
            }
            var_ranges.push(start..lb.len());
        }
        let n = lb.len();

        let mut ws = DerivativeWorkspace::new();
        let mut nodes = Vec::with_capacity(self.num_nodes());
        let mut row_tags = Vec::new();
        let mut row_node = Vec::new();
        let mut row_kind = Vec::new();
        let mut jac_structure = Vec::new();
        let mut raw_hess: Vec<Vec<(usize, usize)>> = Vec::new();

        for node in self.nodes() {
            let objective: Vec<Tape> = self
                .node_objective(node)
                .iter()
                .map(|e| Tape::compile(e, |v| column_of_var[v.0]))
                .collect();
            let row_start = row_tags.len();
            let jac_start = jac_structure.len();
            let mut rows = Vec::new();
            // inner constraints first, then link constraints
            let ordered = self
                .node_constraints(node)
                .iter()
                .filter(|c| self.constraint(**c).kind == ConstraintKind::Inner)
                .chain(
                    self.node_constraints(node)
                        .iter()
                        .filter(|c| self.constraint(**c).kind == ConstraintKind::Link),
                );
            for &c in ordered {
                let con = self.constraint(c);
                let tape = Tape::compile(&con.expr, |v| column_of_var[v.0]);
                let row = row_tags.len();
                let slack = slack_col[c.0].map(|col| {
                    let sign = if con.sense == Sense::Le { 1.0 } else { -1.0 };
                    let g = tape.eval(&x0, &mut ws).unwrap_or(con.rhs);
                    x0[col] = (sign * (con.rhs - g)).max(1e-2);
                    (col, sign)
                });
                for &col in tape.columns() {
                    jac_structure.push((row, col));
                }
                if let Some((col, _)) = slack {
                    jac_structure.push((row, col));
                }
                row_tags.push(con.tag.clone());
                row_node.push(node.0);
                row_kind.push(con.kind);
                rows.push(RowOracle {
                    tape,
                    rhs: con.rhs,
                    slack,
                });
            }
            let mut local = Vec::new();
            for t in objective.iter().chain(rows.iter().map(|r| &r.tape)) {
                local.extend(t.hessian_pattern());
            }
            raw_hess.push(local);
            nodes.push(NodeOracle {
                objective,
                rows,
                vars: var_ranges[node.0].clone(),
                cons: row_start..row_tags.len(),
                jac: jac_start..jac_structure.len(),
                hess_targets: Vec::new(),
            });
        }
        let m = row_tags.len();

        let mut hess_structure: Vec<(usize, usize)> = raw_hess.iter().flatten().copied().collect();
        hess_structure.sort_unstable();
        hess_structure.dedup();
        for (node, local) in nodes.iter_mut().zip(&raw_hess) {
            node.hess_targets = local
                .iter()
                .map(|p| hess_structure.binary_search(p).unwrap())
                .collect();
        }

        let node_indices = nodes
            .iter()
            .map(|nd| nd.vars.clone().chain(nd.cons.clone().map(|r| n + r)).collect())
            .collect();

        Ok(StandardNLP {
            n,
            m,
            lb,
            ub,
            x0,
            names,
            column_node,
            column_of_var,
            row_tags,
            row_node,
            row_kind,
            nodes,
            jac_structure,
            hess_structure,
            structure: GraphStructure {
                graph: self.graph().clone(),
                node_indices,
            },
        })
    }
}

fn domain(node: usize) -> impl Fn(DomainError) -> OracleError {
    move |source| OracleError::TrialPointFailure { node, source }
}

impl StandardNLP {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// `U_i` for every node.
    pub fn node_indices(&self) -> &[Vec<usize>] {
        &self.structure.node_indices
    }

    pub fn graph(&self) -> &Graph {
        &self.structure.graph
    }

    pub fn node_variable_range(&self, node: usize) -> Range<usize> {
        self.nodes[node].vars.clone()
    }

    pub fn node_constraint_range(&self, node: usize) -> Range<usize> {
        self.nodes[node].cons.clone()
    }

    pub fn column_name(&self, col: usize) -> &str {
        &self.names[col]
    }

    pub fn column_node(&self, col: usize) -> usize {
        self.column_node[col]
    }

    /// Column of a model variable.
    pub fn column_of(&self, v: crate::expr::VarId) -> usize {
        self.column_of_var[v.0]
    }

    pub fn row_tag(&self, row: usize) -> &str {
        &self.row_tags[row]
    }

    pub fn row_node(&self, row: usize) -> usize {
        self.row_node[row]
    }

    pub fn row_kind(&self, row: usize) -> ConstraintKind {
        self.row_kind[row]
    }

    fn per_node<T: Send>(
        &self,
        f: impl Fn(&mut DerivativeWorkspace, usize, &NodeOracle) -> Result<T, OracleError> + Sync + Send,
    ) -> Result<Vec<T>, OracleError> {
        self.nodes
            .par_iter()
            .enumerate()
            .map_init(DerivativeWorkspace::new, |ws, (i, nd)| f(ws, i, nd))
            .collect()
    }
}

impl NlpProblem for StandardNLP {
    fn num_variables(&self) -> usize {
        self.n
    }

    fn num_constraints(&self) -> usize {
        self.m
    }

    fn lower_bounds(&self) -> &[f64] {
        &self.lb
    }

    fn upper_bounds(&self) -> &[f64] {
        &self.ub
    }

    fn initial_point(&self) -> Vec<f64> {
        self.x0.clone()
    }

    fn objective(&self, x: &[f64]) -> Result<f64, OracleError> {
        let parts = self.per_node(|ws, i, nd| {
            let mut s = 0.0;
            for t in &nd.objective {
                s += t.eval(x, ws).map_err(domain(i))?;
            }
            Ok(s)
        })?;
        Ok(parts.into_iter().sum())
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<(), OracleError> {
        let parts = self.per_node(|ws, i, nd| {
            let mut g = vec![0.0; nd.vars.len()];
            let mut buf = Vec::new();
            for t in &nd.objective {
                buf.resize(t.columns().len(), 0.0);
                t.gradient(x, ws, &mut buf).map_err(domain(i))?;
                for (&col, &v) in t.columns().iter().zip(&buf) {
                    g[col - nd.vars.start] += v;
                }
            }
            Ok(g)
        })?;
        for (nd, g) in self.nodes.iter().zip(parts) {
            grad[nd.vars.clone()].copy_from_slice(&g);
        }
        Ok(())
    }

    fn constraints(&self, x: &[f64], c: &mut [f64]) -> Result<(), OracleError> {
        let parts = self.per_node(|ws, i, nd| {
            nd.rows
                .iter()
                .map(|r| {
                    let g = r.tape.eval(x, ws).map_err(domain(i))?;
                    let s = r.slack.map_or(0.0, |(col, sign)| sign * x[col]);
                    Ok(g - r.rhs + s)
                })
                .collect::<Result<Vec<f64>, _>>()
        })?;
        for (nd, v) in self.nodes.iter().zip(parts) {
            c[nd.cons.clone()].copy_from_slice(&v);
        }
        Ok(())
    }

    fn jacobian_structure(&self) -> &[(usize, usize)] {
        &self.jac_structure
    }

    fn jacobian_values(&self, x: &[f64], values: &mut [f64]) -> Result<(), OracleError> {
        let parts = self.per_node(|ws, i, nd| {
            let mut out = Vec::with_capacity(nd.jac.len());
            let mut buf = Vec::new();
            for r in &nd.rows {
                buf.resize(r.tape.columns().len(), 0.0);
                r.tape.gradient(x, ws, &mut buf).map_err(domain(i))?;
                out.extend_from_slice(&buf);
                if let Some((_, sign)) = r.slack {
                    out.push(sign);
                }
            }
            Ok(out)
        })?;
        for (nd, v) in self.nodes.iter().zip(parts) {
            values[nd.jac.clone()].copy_from_slice(&v);
        }
        Ok(())
    }

    fn hessian_structure(&self) -> &[(usize, usize)] {
        &self.hess_structure
    }

    fn hessian_values(
        &self,
        x: &[f64],
        obj_factor: f64,
        lambda: &[f64],
        values: &mut [f64],
    ) -> Result<(), OracleError> {
        let parts = self.per_node(|ws, i, nd| {
            let mut out = vec![0.0; nd.hess_targets.len()];
            let mut pos = 0;
            let scaled = nd
                .objective
                .iter()
                .map(|t| (t, obj_factor))
                .chain(nd.rows.iter().zip(nd.cons.clone()).map(|(r, row)| (&r.tape, lambda[row])));
            for (t, scale) in scaled {
                let len = t.hessian_nnz();
                if scale != 0.0 {
                    t.hessian(x, scale, ws, &mut out[pos..pos + len])
                        .map_err(domain(i))?;
                }
                pos += len;
            }
            Ok(out)
        })?;
        values.fill(0.0);
        for (nd, v) in self.nodes.iter().zip(parts) {
            for (&slot, val) in nd.hess_targets.iter().zip(v) {
                values[slot] += val;
            }
        }
        Ok(())
    }

    fn structure(&self) -> Option<&GraphStructure> {
        Some(&self.structure)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::model::{OptiGraph, Sense};

    #[test]
    fn single_node_quadratic() {
        let mut g = OptiGraph::new();
        let n = g.add_node();
        let x = g
            .add_variable(n, "x", f64::NEG_INFINITY, f64::INFINITY, Some(0.0))
            .unwrap();
        g.add_objective_term(n, (Expr::var(x) - 2.0).square()).unwrap();
        let nlp = g.flatten().unwrap();
        assert_eq!((nlp.num_variables(), nlp.num_constraints()), (1, 0));
        assert_eq!(nlp.node_indices(), &[vec![0]]);
        assert_eq!(nlp.objective(&[0.0]).unwrap(), 4.0);
        let mut grad = [0.0];
        nlp.gradient(&[0.0], &mut grad).unwrap();
        assert_eq!(grad, [-4.0]);
    }

    #[test]
    fn inequality_gets_a_slack() {
        let mut g = OptiGraph::new();
        let n = g.add_node();
        let x = g
            .add_variable(n, "x", f64::NEG_INFINITY, f64::INFINITY, Some(1.0))
            .unwrap();
        g.add_constraint(n, Expr::var(x), Sense::Le, 3.0).unwrap();
        let nlp = g.flatten().unwrap();
        assert_eq!((nlp.num_variables(), nlp.num_constraints()), (2, 1));
        assert_eq!(nlp.lower_bounds()[1], 0.0);
        assert_eq!(nlp.upper_bounds()[1], f64::INFINITY);
        let mut c = [0.0];
        nlp.constraints(&[1.0, 1.0], &mut c).unwrap();
        assert_eq!(c, [-1.0]);
        assert_eq!(nlp.jacobian_structure(), &[(0, 0), (0, 1)]);
        let mut j = [0.0; 2];
        nlp.jacobian_values(&[1.0, 1.0], &mut j).unwrap();
        assert_eq!(j, [1.0, 1.0]);
        // start slack equals the residual at the start point
        assert_eq!(nlp.initial_point(), vec![1.0, 2.0]);
        assert_eq!(nlp.node_indices(), &[vec![0, 1, 2]]);
    }

    #[test]
    fn ge_slack_sign() {
        let mut g = OptiGraph::new();
        let n = g.add_node();
        let x = g.add_variable(n, "x", 0.0, 10.0, None).unwrap();
        g.add_constraint(n, Expr::var(x).square(), Sense::Ge, 4.0).unwrap();
        let nlp = g.flatten().unwrap();
        let mut c = [0.0];
        nlp.constraints(&[3.0, 5.0], &mut c).unwrap();
        assert_eq!(c, [0.0]);
        let mut j = [0.0; 2];
        nlp.jacobian_values(&[3.0, 5.0], &mut j).unwrap();
        assert_eq!(j, [6.0, -1.0]);
    }

    #[test]
    fn row_order_inner_then_link_and_shared_hessian_slots() {
        let mut g = OptiGraph::new();
        let a = g.add_node();
        let b = g.add_node();
        g.add_edge(a, b).unwrap();
        let xa = g.add_variable(a, "xa", 0.0, 2.0, None).unwrap();
        let xb = g.add_variable(b, "xb", 0.0, 2.0, None).unwrap();
        let link = g.add_link_constraint(a, Expr::var(xa) * Expr::var(xb), 1.0).unwrap();
        let inner = g.add_constraint(a, Expr::var(xa).square(), Sense::Eq, 1.0).unwrap();
        g.set_tag(link, "link");
        g.set_tag(inner, "inner");
        g.add_objective_term(b, Expr::var(xb).square()).unwrap();
        g.add_objective_term(a, Expr::var(xa).square()).unwrap();
        let nlp = g.flatten().unwrap();
        assert_eq!(nlp.row_tag(0), "inner");
        assert_eq!(nlp.row_tag(1), "link");
        assert_eq!(nlp.hessian_structure(), &[(0, 0), (1, 0), (1, 1)]);
        let mut h = [0.0; 3];
        nlp.hessian_values(&[1.0, 1.0], 1.0, &[0.5, 2.0], &mut h).unwrap();
        // (0,0): objective 2 + 0.5·2; (1,0): 2·1; (1,1): objective 2
        assert_eq!(h, [3.0, 2.0, 2.0]);
        assert_eq!(nlp.node_indices(), &[vec![0, 2, 3], vec![1]]);
    }

    #[test]
    fn domain_errors_become_trial_point_failures() {
        let mut g = OptiGraph::new();
        let n = g.add_node();
        let x = g.add_variable(n, "x", 0.0, f64::INFINITY, None).unwrap();
        g.add_objective_term(n, Expr::var(x).ln()).unwrap();
        let nlp = g.flatten().unwrap();
        assert!(matches!(
            nlp.objective(&[-1.0]),
            Err(OracleError::TrialPointFailure { node: 0, .. })
        ));
    }

    #[test]
    fn empty_model() {
        assert!(matches!(OptiGraph::new().flatten(), Err(ModelError::EmptyModel)));
    }
}
