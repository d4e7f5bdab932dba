//! Graph-structured optimization models.
//!
//! An [`OptiGraph`] owns an ordered node set and undirected edges. Each node
//! owns variables, objective terms and inner constraints that reference only
//! its own variables. Link constraints are attached to a node and may
//! reference variables of that node and of its graph neighbors.
//!
//! [`OptiGraph::flatten`] produces a [`StandardNLP`](crate::nlp::StandardNLP).

pub mod io;

use std::fmt;

use thiserror::Error;

use crate::expr::{Expr, VarId};
use crate::partition::Graph;

/// 0-based node index; displayed 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0 + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConstraintId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConstraintKind {
    Inner,
    Link,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("self-loop at node {0}")]
    SelfLoop(NodeId),
    #[error("duplicate edge {{{0}, {1}}}")]
    DuplicateEdge(NodeId, NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown variable {0}")]
    UnknownVariable(VarId),
    #[error("variable {var} is not visible from node {node}")]
    ScopeViolation { node: NodeId, var: VarId },
    #[error("variable {var}: lower bound {lb} exceeds upper bound {ub}")]
    InvalidBounds { var: VarId, lb: f64, ub: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("model has no nodes")]
    EmptyModel,
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub node: NodeId,
    pub lb: f64,
    pub ub: f64,
    pub start: Option<f64>,
}

impl Variable {
    /// Explicit start, else the midpoint of finite bounds, else 1.0 moved
    /// inside a single finite bound.
    pub fn start_value(&self) -> f64 {
        if let Some(s) = self.start {
            return s;
        }
        match (self.lb.is_finite(), self.ub.is_finite()) {
            (true, true) => 0.5 * (self.lb + self.ub),
            (true, false) => 1f64.max(self.lb + 1.0),
            (false, true) => 1f64.min(self.ub - 1.0),
            (false, false) => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub node: NodeId,
    pub kind: ConstraintKind,
    pub expr: Expr,
    pub sense: Sense,
    pub rhs: f64,
    pub tag: String,
}

#[derive(Debug, Clone, Default)]
struct NodeData {
    variables: Vec<VarId>,
    objective: Vec<Expr>,
    constraints: Vec<ConstraintId>,
}

#[derive(Debug, Clone, Default)]
pub struct OptiGraph {
    nodes: Vec<NodeData>,
    edges: Vec<(NodeId, NodeId)>,
    graph: Graph,
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
}

impl OptiGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self) -> NodeId {
        self.nodes.push(NodeData::default());
        let mut g = Graph::new(self.nodes.len());
        for &(a, b) in &self.edges {
            g.add_edge(a.0, b.0);
        }
        self.graph = g;
        NodeId(self.nodes.len() - 1)
    }

    pub fn add_edge(&mut self, i: NodeId, j: NodeId) -> Result<EdgeId, ModelError> {
        self.check_node(i)?;
        self.check_node(j)?;
        if i == j {
            return Err(ModelError::SelfLoop(i));
        }
        if !self.graph.add_edge(i.0, j.0) {
            return Err(ModelError::DuplicateEdge(i.min(j), i.max(j)));
        }
        self.edges.push((i.min(j), i.max(j)));
        Ok(EdgeId(self.edges.len() - 1))
    }

    /// Adds a variable to `node`; infinite bounds mean unbounded.
    pub fn add_variable(
        &mut self,
        node: NodeId,
        name: impl Into<String>,
        lb: f64,
        ub: f64,
        start: Option<f64>,
    ) -> Result<VarId, ModelError> {
        self.check_node(node)?;
        let id = VarId(self.variables.len());
        if lb.is_nan() || ub.is_nan() || lb == f64::INFINITY || ub == f64::NEG_INFINITY {
            return Err(ModelError::NonFinite("variable bound"));
        }
        if lb > ub {
            return Err(ModelError::InvalidBounds { var: id, lb, ub });
        }
        if start.is_some_and(|s| !s.is_finite()) {
            return Err(ModelError::NonFinite("start value"));
        }
        self.variables.push(Variable {
            name: name.into(),
            node,
            lb,
            ub,
            start,
        });
        self.nodes[node.0].variables.push(id);
        Ok(id)
    }

    /// Inner constraint `expr (sense) rhs`, local to `node`.
    pub fn add_constraint(
        &mut self,
        node: NodeId,
        expr: Expr,
        sense: Sense,
        rhs: f64,
    ) -> Result<ConstraintId, ModelError> {
        self.push_constraint(node, ConstraintKind::Inner, expr, sense, rhs)
    }

    /// Link equality `expr = rhs` over variables of `N_G[node]`.
    pub fn add_link_constraint(
        &mut self,
        node: NodeId,
        expr: Expr,
        rhs: f64,
    ) -> Result<ConstraintId, ModelError> {
        self.push_constraint(node, ConstraintKind::Link, expr, Sense::Eq, rhs)
    }

    /// Link constraint with an arbitrary sense.
    pub fn add_link_inequality(
        &mut self,
        node: NodeId,
        expr: Expr,
        sense: Sense,
        rhs: f64,
    ) -> Result<ConstraintId, ModelError> {
        self.push_constraint(node, ConstraintKind::Link, expr, sense, rhs)
    }

    pub fn add_objective_term(&mut self, node: NodeId, expr: Expr) -> Result<(), ModelError> {
        self.check_node(node)?;
        self.check_scope(node, &expr, false)?;
        self.nodes[node.0].objective.push(expr);
        Ok(())
    }

    /// Labels a constraint; tags survive flattening and serialization.
    pub fn set_tag(&mut self, c: ConstraintId, tag: impl Into<String>) {
        self.constraints[c.0].tag = tag.into();
    }

    fn push_constraint(
        &mut self,
        node: NodeId,
        kind: ConstraintKind,
        expr: Expr,
        sense: Sense,
        rhs: f64,
    ) -> Result<ConstraintId, ModelError> {
        self.check_node(node)?;
        if !rhs.is_finite() {
            return Err(ModelError::NonFinite("constraint right-hand side"));
        }
        self.check_scope(node, &expr, kind == ConstraintKind::Link)?;
        let id = ConstraintId(self.constraints.len());
        self.constraints.push(Constraint {
            node,
            kind,
            expr,
            sense,
            rhs,
            tag: String::new(),
        });
        self.nodes[node.0].constraints.push(id);
        Ok(id)
    }

    fn check_node(&self, node: NodeId) -> Result<(), ModelError> {
        if node.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(ModelError::UnknownNode(node))
        }
    }

    fn check_scope(&self, node: NodeId, expr: &Expr, allow_neighbors: bool) -> Result<(), ModelError> {
        for var in expr.variables() {
            let owner = self
                .variables
                .get(var.0)
                .ok_or(ModelError::UnknownVariable(var))?
                .node;
            let visible = owner == node || (allow_neighbors && self.graph.has_edge(owner.0, node.0));
            if !visible {
                return Err(ModelError::ScopeViolation { node, var });
            }
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn neighbors(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.graph.neighbors(node.0).iter().map(|&j| NodeId(j))
    }

    pub fn variable(&self, v: VarId) -> &Variable {
        &self.variables[v.0]
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraint(&self, c: ConstraintId) -> &Constraint {
        &self.constraints[c.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn node_variables(&self, node: NodeId) -> &[VarId] {
        &self.nodes[node.0].variables
    }

    pub fn node_objective(&self, node: NodeId) -> &[Expr] {
        &self.nodes[node.0].objective
    }

    pub fn node_constraints(&self, node: NodeId) -> &[ConstraintId] {
        &self.nodes[node.0].constraints
    }

    /// Finds a variable by name among the variables of `node`.
    pub fn find_variable(&self, node: NodeId, name: &str) -> Option<VarId> {
        self.nodes[node.0]
            .variables
            .iter()
            .copied()
            .find(|v| self.variables[v.0].name == name)
    }
}
