//! Condensed primal-dual Newton systems.
//!
//! ```text
//! [ W + Σ + δ_w I    Aᵀ     ] [dˣ]     [ ∇φ(x) + Aᵀλ ]
//! [ A               −δ_c I  ] [dλ] = − [ c(x)        ]
//! ```
//!
//! with `Σ_j = z_L,j/(x_j − l_j) + z_U,j/(u_j − x_j)` and the two-sided barrier
//! gradient `∇φ = ∇f − μ/(x − l) + μ/(u − x)`. Bound multiplier steps are
//! recovered afterwards from the linearized complementarity equations.

use thiserror::Error;

use crate::linalg::sparse::SymMatrix;
use crate::nlp::{NlpProblem, OracleError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KktError {
    #[error("point is not strictly interior at component {0}")]
    NotInterior(usize),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Primal-dual iterate. `z_l[j]` (`z_u[j]`) is zero when `l_j` (`u_j`) is infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualPoint {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub z_l: Vec<f64>,
    pub z_u: Vec<f64>,
}

/// Checks strict interiority of `x` and positivity of the bound multipliers.
pub fn check_interior(point: &PrimalDualPoint, lb: &[f64], ub: &[f64]) -> Result<(), KktError> {
    for j in 0..point.x.len() {
        let x = point.x[j];
        if lb[j].is_finite() && !(x > lb[j] && point.z_l[j] > 0.0) {
            return Err(KktError::NotInterior(j));
        }
        if ub[j].is_finite() && !(x < ub[j] && point.z_u[j] > 0.0) {
            return Err(KktError::NotInterior(j));
        }
    }
    Ok(())
}

/// `Σ` diagonal.
pub fn sigma(point: &PrimalDualPoint, lb: &[f64], ub: &[f64]) -> Vec<f64> {
    (0..point.x.len())
        .map(|j| {
            let mut s = 0.0;
            if lb[j].is_finite() {
                s += point.z_l[j] / (point.x[j] - lb[j]);
            }
            if ub[j].is_finite() {
                s += point.z_u[j] / (ub[j] - point.x[j]);
            }
            s
        })
        .collect()
}

/// `∇f − μ/(x − l) + μ/(u − x)` on bounded components.
pub fn barrier_gradient(grad: &[f64], x: &[f64], lb: &[f64], ub: &[f64], mu: f64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let mut g = grad[j];
            if lb[j].is_finite() {
                g -= mu / (x[j] - lb[j]);
            }
            if ub[j].is_finite() {
                g += mu / (ub[j] - x[j]);
            }
            g
        })
        .collect()
}

/// Assembled system; `matrix` is lower-triangle with a fixed pattern.
#[derive(Debug, Clone)]
pub struct KktSystem {
    pub n: usize,
    pub m: usize,
    pub matrix: SymMatrix,
    pub rhs: Vec<f64>,
    pub sigma: Vec<f64>,
    pub delta_w: f64,
    pub delta_c: f64,
    pub mu: f64,
    hess_len: usize,
}

impl KktSystem {
    /// `dˣᵀ (W + Σ + δ_w I) dˣ`.
    pub fn primal_curvature(&self, dx: &[f64]) -> f64 {
        let mut q = 0.0;
        let rows = self.matrix.rows();
        let cols = self.matrix.cols();
        let vals = self.matrix.values();
        for k in 0..self.hess_len + self.n {
            let (i, j) = (rows[k], cols[k]);
            let v = vals[k] * dx[i] * dx[j];
            q += if i == j { v } else { 2.0 * v };
        }
        q
    }

    /// `‖W‖∞` estimate from the Hessian block entries.
    pub fn hessian_inf_norm(&self) -> f64 {
        let mut row = vec![0.0f64; self.n];
        for k in 0..self.hess_len {
            let (i, j) = (self.matrix.rows()[k], self.matrix.cols()[k]);
            let v = self.matrix.values()[k].abs();
            row[i] += v;
            if i != j {
                row[j] += v;
            }
        }
        row.into_iter().fold(0.0, f64::max)
    }
}

/// Fixed KKT pattern: Hessian entries, primal diagonal, Jacobian, dual diagonal.
#[derive(Debug, Clone)]
pub struct KktAssembler {
    n: usize,
    m: usize,
    template: SymMatrix,
    hess_len: usize,
    jac_len: usize,
}

/// Oracle values at the current primal point.
#[derive(Debug, Clone, Default)]
pub struct OracleValues {
    pub grad: Vec<f64>,
    pub c: Vec<f64>,
    pub jac: Vec<f64>,
    pub hess: Vec<f64>,
}

impl KktAssembler {
    pub fn new(n: usize, m: usize, hess: &[(usize, usize)], jac: &[(usize, usize)]) -> Self {
        let mut pattern: Vec<(usize, usize)> = hess.to_vec();
        pattern.extend((0..n).map(|j| (j, j)));
        pattern.extend(jac.iter().map(|&(r, c)| (n + r, c)));
        pattern.extend((0..m).map(|r| (n + r, n + r)));
        KktAssembler {
            n,
            m,
            template: SymMatrix::with_pattern(n + m, &pattern),
            hess_len: hess.len(),
            jac_len: jac.len(),
        }
    }

    pub fn for_problem(nlp: &dyn NlpProblem) -> Self {
        Self::new(
            nlp.num_variables(),
            nlp.num_constraints(),
            nlp.hessian_structure(),
            nlp.jacobian_structure(),
        )
    }

    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    /// Builds `M` and `p` from oracle values; `jac_rows` maps each Jacobian
    /// entry to its row for the `Aᵀλ` product.
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        &self,
        vals: &OracleValues,
        jac_structure: &[(usize, usize)],
        lb: &[f64],
        ub: &[f64],
        point: &PrimalDualPoint,
        mu: f64,
        delta_w: f64,
        delta_c: f64,
    ) -> Result<KktSystem, KktError> {
        check_interior(point, lb, ub)?;
        let (n, m) = (self.n, self.m);
        let sig = sigma(point, lb, ub);
        let mut matrix = self.template.clone();
        {
            let v = matrix.values_mut();
            v[..self.hess_len].copy_from_slice(&vals.hess);
            for j in 0..n {
                v[self.hess_len + j] = sig[j] + delta_w;
            }
            let off = self.hess_len + n;
            v[off..off + self.jac_len].copy_from_slice(&vals.jac);
            for r in 0..m {
                v[off + self.jac_len + r] = -delta_c;
            }
        }
        let mut rhs = vec![0.0; n + m];
        let bg = barrier_gradient(&vals.grad, &point.x, lb, ub, mu);
        rhs[..n].copy_from_slice(&bg);
        for (&(r, c), &a) in jac_structure.iter().zip(&vals.jac) {
            rhs[c] += a * point.lambda[r];
        }
        rhs[n..].copy_from_slice(&vals.c);
        for v in &mut rhs {
            *v = -*v;
        }
        Ok(KktSystem {
            n,
            m,
            matrix,
            rhs,
            sigma: sig,
            delta_w,
            delta_c,
            mu,
            hess_len: self.hess_len,
        })
    }
}

/// Evaluates the oracles at `point` and assembles the system.
pub fn assemble(
    nlp: &dyn NlpProblem,
    point: &PrimalDualPoint,
    mu: f64,
    delta_w: f64,
    delta_c: f64,
) -> Result<KktSystem, KktError> {
    let (n, m) = (nlp.num_variables(), nlp.num_constraints());
    let mut vals = OracleValues {
        grad: vec![0.0; n],
        c: vec![0.0; m],
        jac: vec![0.0; nlp.jacobian_structure().len()],
        hess: vec![0.0; nlp.hessian_structure().len()],
    };
    nlp.gradient(&point.x, &mut vals.grad)?;
    nlp.constraints(&point.x, &mut vals.c)?;
    nlp.jacobian_values(&point.x, &mut vals.jac)?;
    nlp.hessian_values(&point.x, 1.0, &point.lambda, &mut vals.hess)?;
    KktAssembler::for_problem(nlp).assemble(
        &vals,
        nlp.jacobian_structure(),
        nlp.lower_bounds(),
        nlp.upper_bounds(),
        point,
        mu,
        delta_w,
        delta_c,
    )
}

/// Newton step of the complementarity equations given `dˣ`.
pub fn recover_bound_step(
    point: &PrimalDualPoint,
    lb: &[f64],
    ub: &[f64],
    dx: &[f64],
    mu: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = point.x.len();
    let mut dzl = vec![0.0; n];
    let mut dzu = vec![0.0; n];
    for j in 0..n {
        if lb[j].is_finite() {
            let s = point.x[j] - lb[j];
            let z = point.z_l[j];
            dzl[j] = (mu - z * s - z * dx[j]) / s;
        }
        if ub[j].is_finite() {
            let s = ub[j] - point.x[j];
            let z = point.z_u[j];
            dzu[j] = (mu - z * s + z * dx[j]) / s;
        }
    }
    (dzl, dzu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::linalg::ldl::factor_direct;
    use crate::model::OptiGraph;

    fn toy() -> crate::nlp::StandardNLP {
        let mut g = OptiGraph::new();
        let n = g.add_node();
        let x = g.add_variable(n, "x", 0.0, f64::INFINITY, Some(1.0)).unwrap();
        g.add_objective_term(n, Expr::var(x).square()).unwrap();
        g.add_constraint(n, Expr::var(x) - 1.0, crate::model::Sense::Eq, 0.0)
            .unwrap();
        g.flatten().unwrap()
    }

    #[test]
    fn hand_example() {
        let nlp = toy();
        let pt = PrimalDualPoint {
            x: vec![1.0],
            lambda: vec![0.0],
            z_l: vec![1.0],
            z_u: vec![0.0],
        };
        let k = assemble(&nlp, &pt, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(k.matrix.to_dense(), vec![3.0, 1.0, 1.0, 0.0]);
        assert_eq!(k.rhs, vec![-1.0, -0.0]);
    }

    #[test]
    fn free_variable_has_zero_sigma() {
        let pt = PrimalDualPoint {
            x: vec![0.3],
            lambda: vec![],
            z_l: vec![0.0],
            z_u: vec![0.0],
        };
        assert_eq!(sigma(&pt, &[f64::NEG_INFINITY], &[f64::INFINITY]), vec![0.0]);
    }

    #[test]
    fn not_interior() {
        let nlp = toy();
        let pt = PrimalDualPoint {
            x: vec![0.0],
            lambda: vec![0.0],
            z_l: vec![1.0],
            z_u: vec![0.0],
        };
        assert_eq!(
            assemble(&nlp, &pt, 1.0, 0.0, 0.0).unwrap_err(),
            KktError::NotInterior(0)
        );
    }

    #[test]
    fn bound_step_examples() {
        let pt = |x: f64| PrimalDualPoint {
            x: vec![x],
            lambda: vec![],
            z_l: vec![1.0],
            z_u: vec![0.0],
        };
        let inf = [f64::INFINITY];
        assert_eq!(recover_bound_step(&pt(1.0), &[0.0], &inf, &[0.0], 1.0).0, vec![0.0]);
        assert_eq!(recover_bound_step(&pt(2.0), &[0.0], &inf, &[0.0], 0.0).0, vec![-1.0]);
    }

    #[test]
    fn curvature_includes_regularization() {
        let nlp = toy();
        let pt = PrimalDualPoint {
            x: vec![1.0],
            lambda: vec![0.0],
            z_l: vec![1.0],
            z_u: vec![0.0],
        };
        let k = assemble(&nlp, &pt, 1.0, 0.5, 0.0).unwrap();
        assert_eq!(k.primal_curvature(&[2.0]), 4.0 * 3.5);
        assert_eq!(k.hessian_inf_norm(), 2.0);
        let d = factor_direct(&k.matrix).unwrap().solve(&k.rhs);
        assert!(d[0].abs() < 1e-15);
    }
}
