//! Graph-structured nonlinear optimization with a filter line-search
//! interior-point solver and restricted additive Schwarz KKT solves.

pub mod expr;
pub mod model;
pub mod nlp;
pub mod partition;
pub mod linalg;
pub mod kkt;
pub mod ipm;
pub mod instances;
