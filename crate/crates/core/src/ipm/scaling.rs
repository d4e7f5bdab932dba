//! Gradient-based scaling: objective and each constraint are scaled so that
//! their gradients at the starting point have max-norm at most `max_gradient`.

use crate::nlp::{GraphStructure, NlpProblem, OracleError};

pub struct ScaledProblem<'a> {
    inner: &'a dyn NlpProblem,
    obj_scale: f64,
    con_scale: Vec<f64>,
    jac_scale: Vec<f64>,
}

fn factor(g: f64, max_gradient: f64) -> f64 {
    if g > max_gradient {
        max_gradient / g
    } else {
        1.0
    }
}

impl<'a> ScaledProblem<'a> {
    /// Computes the factors at `x0`; evaluation failures leave the problem unscaled.
    pub fn new(inner: &'a dyn NlpProblem, x0: &[f64], max_gradient: f64) -> Self {
        let n = inner.num_variables();
        let m = inner.num_constraints();
        let mut grad = vec![0.0; n];
        let obj_scale = match inner.gradient(x0, &mut grad) {
            Ok(()) => factor(grad.iter().fold(0.0f64, |a, v| a.max(v.abs())), max_gradient),
            Err(_) => 1.0,
        };
        let jac_structure = inner.jacobian_structure();
        let mut jac = vec![0.0; jac_structure.len()];
        let mut row_max = vec![0.0f64; m];
        if inner.jacobian_values(x0, &mut jac).is_ok() {
            for (&(r, _), v) in jac_structure.iter().zip(&jac) {
                row_max[r] = row_max[r].max(v.abs());
            }
        }
        let con_scale: Vec<f64> = row_max.iter().map(|&g| factor(g, max_gradient)).collect();
        let jac_scale = jac_structure.iter().map(|&(r, _)| con_scale[r]).collect();
        ScaledProblem {
            inner,
            obj_scale,
            con_scale,
            jac_scale,
        }
    }

    pub fn obj_scale(&self) -> f64 {
        self.obj_scale
    }

    pub fn con_scale(&self) -> &[f64] {
        &self.con_scale
    }

    pub fn is_identity(&self) -> bool {
        self.obj_scale == 1.0 && self.con_scale.iter().all(|&s| s == 1.0)
    }
}

impl NlpProblem for ScaledProblem<'_> {
    fn num_variables(&self) -> usize {
        self.inner.num_variables()
    }

    fn num_constraints(&self) -> usize {
        self.inner.num_constraints()
    }

    fn lower_bounds(&self) -> &[f64] {
        self.inner.lower_bounds()
    }

    fn upper_bounds(&self) -> &[f64] {
        self.inner.upper_bounds()
    }

    fn initial_point(&self) -> Vec<f64> {
        self.inner.initial_point()
    }

    fn objective(&self, x: &[f64]) -> Result<f64, OracleError> {
        Ok(self.obj_scale * self.inner.objective(x)?)
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<(), OracleError> {
        self.inner.gradient(x, grad)?;
        for g in grad.iter_mut() {
            *g *= self.obj_scale;
        }
        Ok(())
    }

    fn constraints(&self, x: &[f64], c: &mut [f64]) -> Result<(), OracleError> {
        self.inner.constraints(x, c)?;
        for (v, s) in c.iter_mut().zip(&self.con_scale) {
            *v *= s;
        }
        Ok(())
    }

    fn jacobian_structure(&self) -> &[(usize, usize)] {
        self.inner.jacobian_structure()
    }

    fn jacobian_values(&self, x: &[f64], values: &mut [f64]) -> Result<(), OracleError> {
        self.inner.jacobian_values(x, values)?;
        for (v, s) in values.iter_mut().zip(&self.jac_scale) {
            *v *= s;
        }
        Ok(())
    }

    fn hessian_structure(&self) -> &[(usize, usize)] {
        self.inner.hessian_structure()
    }

    fn hessian_values(
        &self,
        x: &[f64],
        obj_factor: f64,
        lambda: &[f64],
        values: &mut [f64],
    ) -> Result<(), OracleError> {
        let scaled: Vec<f64> = lambda.iter().zip(&self.con_scale).map(|(l, s)| l * s).collect();
        self.inner
            .hessian_values(x, obj_factor * self.obj_scale, &scaled, values)
    }

    fn structure(&self) -> Option<&GraphStructure> {
        self.inner.structure()
    }
}
