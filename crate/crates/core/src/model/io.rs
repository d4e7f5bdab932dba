//! JSON model files.
//!
//! ```text
//! {
//!   "format": "graphnlp-model", "version": 1,
//!   "nodes": 3,
//!   "edges": [[1, 2], [2, 3]],
//!   "variables": [{"node": 1, "name": "x", "lb": 0.0, "ub": null, "start": 1.0}, ...],
//!   "objective": [{"node": 1, "expr": "(square (sub x0 2.0))"}, ...],
//!   "constraints": [{"node": 1, "kind": "inner", "sense": "le", "rhs": 3.0,
//!                    "expr": "(add x0 x1)", "tag": ""}, ...]
//! }
//! ```
//!
//! Nodes are 1-based. Expressions use prefix notation where `x<k>` is the
//! `k`-th entry (0-based) of `variables`. A missing bound is `null`.
//! Entries are replayed in file order, so write→read preserves every id.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ConstraintKind, ModelError, NodeId, OptiGraph, Sense};
use crate::expr::{Expr, ParseExprError};

pub const FORMAT: &str = "graphnlp-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{what}: {source}")]
    Expr {
        what: String,
        #[source]
        source: ParseExprError,
    },
    #[error("{what}: {source}")]
    Model {
        what: String,
        #[source]
        source: ModelError,
    },
    #[error("unsupported format `{0}` version {1}")]
    Format(String, u32),
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    nodes: usize,
    edges: Vec<[usize; 2]>,
    variables: Vec<VariableEntry>,
    objective: Vec<ObjectiveEntry>,
    constraints: Vec<ConstraintEntry>,
}

#[derive(Serialize, Deserialize)]
struct VariableEntry {
    node: usize,
    name: String,
    lb: Option<f64>,
    ub: Option<f64>,
    start: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct ObjectiveEntry {
    node: usize,
    expr: String,
}

#[derive(Serialize, Deserialize)]
struct ConstraintEntry {
    node: usize,
    kind: String,
    sense: String,
    rhs: f64,
    expr: String,
    #[serde(default)]
    tag: String,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl OptiGraph {
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: FORMAT.into(),
            version: VERSION,
            nodes: self.num_nodes(),
            edges: self.edges().iter().map(|(a, b)| [a.0 + 1, b.0 + 1]).collect(),
            variables: self
                .variables()
                .iter()
                .map(|v| VariableEntry {
                    node: v.node.0 + 1,
                    name: v.name.clone(),
                    lb: finite(v.lb),
                    ub: finite(v.ub),
                    start: v.start,
                })
                .collect(),
            objective: self
                .nodes()
                .flat_map(|nd| {
                    self.node_objective(nd).iter().map(move |e| ObjectiveEntry {
                        node: nd.0 + 1,
                        expr: e.to_prefix(),
                    })
                })
                .collect(),
            constraints: self
                .constraints()
                .iter()
                .map(|c| ConstraintEntry {
                    node: c.node.0 + 1,
                    kind: match c.kind {
                        ConstraintKind::Inner => "inner",
                        ConstraintKind::Link => "link",
                    }
                    .into(),
                    sense: match c.sense {
                        Sense::Eq => "eq",
                        Sense::Le => "le",
                        Sense::Ge => "ge",
                    }
                    .into(),
                    rhs: c.rhs,
                    expr: c.expr.to_prefix(),
                    tag: c.tag.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<OptiGraph, ModelIoError> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != FORMAT || file.version != VERSION {
            return Err(ModelIoError::Format(file.format, file.version));
        }
        let model_err = |what: String| move |source| ModelIoError::Model { what, source };
        let node = |k: usize| NodeId(k.wrapping_sub(1));
        let mut g = OptiGraph::new();
        for _ in 0..file.nodes {
            g.add_node();
        }
        for (i, [a, b]) in file.edges.iter().enumerate() {
            g.add_edge(node(*a), node(*b))
                .map_err(model_err(format!("edges[{i}]")))?;
        }
        for (i, v) in file.variables.iter().enumerate() {
            g.add_variable(
                node(v.node),
                v.name.clone(),
                v.lb.unwrap_or(f64::NEG_INFINITY),
                v.ub.unwrap_or(f64::INFINITY),
                v.start,
            )
            .map_err(model_err(format!("variables[{i}]")))?;
        }
        let parse = |what: String, src: &str| {
            Expr::parse_prefix(src).map_err(|source| ModelIoError::Expr { what, source })
        };
        for (i, o) in file.objective.iter().enumerate() {
            let what = format!("objective[{i}]");
            let e = parse(what.clone(), &o.expr)?;
            g.add_objective_term(node(o.node), e).map_err(model_err(what))?;
        }
        for (i, c) in file.constraints.iter().enumerate() {
            let what = format!("constraints[{i}]");
            let e = parse(what.clone(), &c.expr)?;
            let sense = match c.sense.as_str() {
                "eq" => Sense::Eq,
                "le" => Sense::Le,
                "ge" => Sense::Ge,
                other => {
                    return Err(ModelIoError::Expr {
                        what,
                        source: ParseExprError(format!("unknown sense `{other}`")),
                    })
                }
            };
            let id = match c.kind.as_str() {
                "inner" => g.add_constraint(node(c.node), e, sense, c.rhs),
                "link" => g.add_link_inequality(node(c.node), e, sense, c.rhs),
                other => {
                    return Err(ModelIoError::Expr {
                        what,
                        source: ParseExprError(format!("unknown kind `{other}`")),
                    })
                }
            }
            .map_err(model_err(what))?;
            g.set_tag(id, c.tag.clone());
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> OptiGraph {
        let mut g = OptiGraph::new();
        let a = g.add_node();
        let b = g.add_node();
        g.add_edge(a, b).unwrap();
        let x = g.add_variable(a, "x", 0.0, f64::INFINITY, Some(0.1)).unwrap();
        let y = g.add_variable(b, "y", -1.5, 2.0, None).unwrap();
        g.add_objective_term(a, (Expr::var(x) - 2.0).square()).unwrap();
        g.add_objective_term(b, Expr::var(y).signed_square() * 0.3).unwrap();
        let c = g.add_link_constraint(b, Expr::var(x) * Expr::var(y), 1.0 / 3.0).unwrap();
        g.set_tag(c, "coupling");
        g.add_constraint(a, Expr::var(x).ln(), Sense::Ge, -7.25e-9).unwrap();
        g
    }

    #[test]
    fn round_trip_is_lossless() {
        let g = sample();
        let text = g.to_json();
        let back = OptiGraph::from_json(&text).unwrap();
        assert_eq!(back.to_json(), text);
        assert_eq!(back.constraint(crate::model::ConstraintId(0)).tag, "coupling");
        assert_eq!(back.constraint(crate::model::ConstraintId(0)).rhs, 1.0 / 3.0);
    }

    #[test]
    fn scope_is_rechecked_on_read() {
        let text = sample().to_json().replace("\"kind\": \"link\"", "\"kind\": \"inner\"");
        assert!(matches!(
            OptiGraph::from_json(&text),
            Err(ModelIoError::Model { source: ModelError::ScopeViolation { .. }, .. })
        ));
    }

    #[test]
    fn bad_node_reference() {
        let text = sample().to_json().replace("[\n      1,\n      2\n    ]", "[\n      1,\n      9\n    ]");
        assert!(matches!(OptiGraph::from_json(&text), Err(ModelIoError::Model { .. })));
    }
}
