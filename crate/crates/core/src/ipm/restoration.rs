//! Elastic feasibility problem
//!
//! ```text
//! min  ρ Σ (p_r + n_r) + ζ/2 ‖D_R (x − x_R)‖²
//! s.t. c(x) − p + n = 0,  p, n ≥ 0,  l ≤ x ≤ u
//! ```
//!
//! with `D_R = diag(1 / max(1, |x_R|))`. Variables are ordered `[x; p; n]`.

use crate::nlp::{NlpProblem, OracleError};

pub const RHO: f64 = 1000.0;

pub struct RestorationProblem<'a> {
    inner: &'a dyn NlpProblem,
    n: usize,
    m: usize,
    x_ref: Vec<f64>,
    d2: Vec<f64>,
    zeta: f64,
    start: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    jac: Vec<(usize, usize)>,
    hess: Vec<(usize, usize)>,
    inner_jac_len: usize,
    inner_hess_len: usize,
}

impl<'a> RestorationProblem<'a> {
    /// Builds the problem at reference point `x_ref` with constraint values `c_ref`.
    pub fn new(inner: &'a dyn NlpProblem, x_ref: &[f64], c_ref: &[f64], mu: f64) -> Self {
        let n = inner.num_variables();
        let m = inner.num_constraints();
        let mut lb = inner.lower_bounds().to_vec();
        let mut ub = inner.upper_bounds().to_vec();
        lb.resize(n + 2 * m, 0.0);
        ub.resize(n + 2 * m, f64::INFINITY);

        // p, n solve the centered complementarity of the elastic pair.
        let mut start = x_ref.to_vec();
        let mut ps = Vec::with_capacity(m);
        let mut ns = Vec::with_capacity(m);
        for &c in c_ref {
            let a = (mu - RHO * c) / (2.0 * RHO);
            let nv = a + (a * a + mu * c / (2.0 * RHO)).sqrt();
            ns.push(nv.max(1e-12));
            ps.push((c + nv).max(1e-12));
        }
        start.extend(ps);
        start.extend(ns);

        let mut jac = inner.jacobian_structure().to_vec();
        let inner_jac_len = jac.len();
        jac.extend((0..m).map(|r| (r, n + r)));
        jac.extend((0..m).map(|r| (r, n + m + r)));
        let mut hess = inner.hessian_structure().to_vec();
        let inner_hess_len = hess.len();
        hess.extend((0..n).map(|j| (j, j)));

        RestorationProblem {
            inner,
            n,
            m,
            x_ref: x_ref.to_vec(),
            d2: x_ref.iter().map(|v| 1.0 / v.abs().max(1.0).powi(2)).collect(),
            zeta: mu.sqrt(),
            start,
            lb,
            ub,
            jac,
            hess,
            inner_jac_len,
            inner_hess_len,
        }
    }

    pub fn primal<'x>(&self, z: &'x [f64]) -> &'x [f64] {
        &z[..self.n]
    }
}

impl NlpProblem for RestorationProblem<'_> {
    fn num_variables(&self) -> usize {
        self.n + 2 * self.m
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
        self.start.clone()
    }

    fn objective(&self, z: &[f64]) -> Result<f64, OracleError> {
        let n = self.n;
        let elastic: f64 = z[n..].iter().sum();
        let mut prox = 0.0;
        for j in 0..n {
            let d = z[j] - self.x_ref[j];
            prox += self.d2[j] * d * d;
        }
        Ok(RHO * elastic + 0.5 * self.zeta * prox)
    }

    fn gradient(&self, z: &[f64], grad: &mut [f64]) -> Result<(), OracleError> {
        let n = self.n;
        for j in 0..n {
            grad[j] = self.zeta * self.d2[j] * (z[j] - self.x_ref[j]);
        }
        for g in &mut grad[n..] {
            *g = RHO;
        }
        Ok(())
    }

    fn constraints(&self, z: &[f64], c: &mut [f64]) -> Result<(), OracleError> {
        let (n, m) = (self.n, self.m);
        self.inner.constraints(&z[..n], c)?;
        for r in 0..m {
            c[r] += z[n + m + r] - z[n + r];
        }
        Ok(())
    }

    fn jacobian_structure(&self) -> &[(usize, usize)] {
        &self.jac
    }

    fn jacobian_values(&self, z: &[f64], values: &mut [f64]) -> Result<(), OracleError> {
        let k = self.inner_jac_len;
        self.inner.jacobian_values(&z[..self.n], &mut values[..k])?;
        values[k..k + self.m].fill(-1.0);
        values[k + self.m..].fill(1.0);
        Ok(())
    }

    fn hessian_structure(&self) -> &[(usize, usize)] {
        &self.hess
    }

    fn hessian_values(
        &self,
        z: &[f64],
        obj_factor: f64,
        lambda: &[f64],
        values: &mut [f64],
    ) -> Result<(), OracleError> {
        let k = self.inner_hess_len;
        self.inner
            .hessian_values(&z[..self.n], 0.0, lambda, &mut values[..k])?;
        for (v, d) in values[k..].iter_mut().zip(&self.d2) {
            *v = obj_factor * self.zeta * d;
        }
        Ok(())
    }
}
