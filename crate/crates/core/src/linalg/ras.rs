//! Restricted additive Schwarz preconditioner
//! `P⁻¹ = Σ_k R̃_k M_k⁻¹ R_kᵀ` with `M_k = M[W_k^ω, W_k^ω]`.
//!
//! Each subdomain gathers the residual on `W_k^ω`, solves with its own
//! factorization and writes back only the `W_k` entries.

use std::sync::Arc;

use rayon::prelude::*;

use super::ldl::{LdlFactor, LdlOptions, Symbolic};
use super::sparse::{SubmatrixPlan, SymMatrix};
use super::LinalgError;
use crate::partition::{Graph, SubdomainMap};

#[derive(Debug, Clone)]
pub struct RasPreconditioner {
    map: SubdomainMap,
    plans: Vec<SubmatrixPlan>,
    factors: Vec<LdlFactor>,
}

impl RasPreconditioner {
    /// Extracts and factorizes every `M_k` (in parallel over `k`).
    pub fn build(m: &SymMatrix, map: SubdomainMap) -> Result<Self, LinalgError> {
        assert_eq!(m.dim(), map.dim, "subdomain map dimension mismatch");
        let plans: Vec<SubmatrixPlan> = map
            .subdomains
            .par_iter()
            .map(|s| SubmatrixPlan::new(m, &s.overlap))
            .collect();
        let factors = plans
            .par_iter()
            .enumerate()
            .map(|(k, plan)| {
                let sub = plan.extract(m);
                LdlFactor::new(Arc::new(Symbolic::analyze(&sub)), &sub, LdlOptions::default())
                    .map_err(|_| LinalgError::SubdomainSingular(k))
            })
            .collect::<Vec<_>>();
        let factors = collect_lowest_error(factors)?;
        Ok(RasPreconditioner { map, plans, factors })
    }

    /// Refactorizes with new values of the same pattern.
    pub fn refresh(&mut self, m: &SymMatrix) -> Result<(), LinalgError> {
        let factors = self
            .plans
            .par_iter()
            .zip(self.factors.par_iter())
            .enumerate()
            .map(|(k, (plan, old))| {
                old.refactor(&plan.extract(m))
                    .map_err(|_| LinalgError::SubdomainSingular(k))
            })
            .collect::<Vec<_>>();
        self.factors = collect_lowest_error(factors)?;
        Ok(())
    }

    pub fn map(&self) -> &SubdomainMap {
        &self.map
    }

    /// Factor dimensions `|W_k^ω|`.
    pub fn factor_dims(&self) -> Vec<usize> {
        self.factors.iter().map(LdlFactor::dim).collect()
    }

    /// `out = P⁻¹ r`.
    pub fn apply(&self, r: &[f64], out: &mut [f64]) {
        let pieces: Vec<Vec<f64>> = self
            .map
            .subdomains
            .par_iter()
            .zip(self.factors.par_iter())
            .map(|(s, f)| {
                let local: Vec<f64> = s.overlap.iter().map(|&i| r[i]).collect();
                let sol = f.solve(&local);
                s.owned_in_overlap.iter().map(|&q| sol[q]).collect()
            })
            .collect();
        for (s, piece) in self.map.subdomains.iter().zip(pieces) {
            for (&i, v) in s.owned.iter().zip(piece) {
                out[i] = v;
            }
        }
    }
}

fn collect_lowest_error<T>(items: Vec<Result<T, LinalgError>>) -> Result<Vec<T>, LinalgError> {
    items.into_iter().collect()
}

/// Rebuilds with every ω incremented (capped at the graph diameter).
pub fn adapt_overlap(
    p: &RasPreconditioner,
    m: &SymMatrix,
    graph: &Graph,
    node_indices: &[Vec<usize>],
) -> Result<RasPreconditioner, LinalgError> {
    RasPreconditioner::build(m, p.map.grow(graph, node_indices))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ldl::factor_direct;
    use crate::partition::{partition_graph, SubdomainMap};

    fn chain(n: usize) -> (Graph, Vec<Vec<usize>>, SymMatrix) {
        let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        let g = Graph::from_edges(n, &edges);
        let u = (0..n).map(|i| vec![i]).collect();
        let mut m = SymMatrix::new(n);
        for i in 0..n {
            m.push(i, i, 2.5);
            if i + 1 < n {
                m.push(i + 1, i, -1.0);
            }
        }
        (g, u, m)
    }

    #[test]
    fn single_subdomain_full_overlap_is_direct() {
        let (g, u, m) = chain(10);
        let map = SubdomainMap::build(&g, &u, &[(0..10).collect()], &[9]);
        let p = RasPreconditioner::build(&m, map).unwrap();
        let r: Vec<f64> = (0..10).map(|i| (i as f64).cos()).collect();
        let mut out = vec![0.0; 10];
        p.apply(&r, &mut out);
        let direct = factor_direct(&m).unwrap().solve(&r);
        for (a, b) in out.iter().zip(&direct) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn diagonal_matrix_exact_with_zero_overlap() {
        let (g, u, _) = chain(6);
        let mut m = SymMatrix::new(6);
        for i in 0..6 {
            m.push(i, i, 1.0 + i as f64);
        }
        let parts = partition_graph(&g, 3).unwrap();
        let p = RasPreconditioner::build(&m, SubdomainMap::build(&g, &u, &parts, &[0, 0, 0])).unwrap();
        let mut out = vec![0.0; 6];
        p.apply(&[1.0; 6], &mut out);
        for (i, v) in out.iter().enumerate() {
            assert_eq!(*v, 1.0 / (1.0 + i as f64));
        }
    }

    #[test]
    fn restricted_scatter_writes_owned_entries_only() {
        let (g, u, m) = chain(8);
        let parts = partition_graph(&g, 2).unwrap();
        let map = SubdomainMap::build(&g, &u, &parts, &[2, 2]);
        let p = RasPreconditioner::build(&m, map).unwrap();
        assert_eq!(p.factor_dims(), vec![6, 6]);
        let r = vec![1.0; 8];
        let mut out = vec![f64::NAN; 8];
        p.apply(&r, &mut out);
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn singular_subdomain_is_reported() {
        let (g, u, _) = chain(4);
        let mut m = SymMatrix::new(4);
        m.push(0, 0, 1.0);
        m.push(1, 1, 1.0);
        m.push(2, 2, 0.0);
        m.push(3, 3, 0.0);
        m.push(3, 2, 0.0);
        let parts = partition_graph(&g, 2).unwrap();
        let err = RasPreconditioner::build(&m, SubdomainMap::build(&g, &u, &parts, &[0, 0]));
        assert!(matches!(err, Err(LinalgError::SubdomainSingular(1))));
    }

    #[test]
    fn adapt_increments_and_caps() {
        let (g, u, m) = chain(5);
        let parts = partition_graph(&g, 2).unwrap();
        let mut p = RasPreconditioner::build(&m, SubdomainMap::build(&g, &u, &parts, &[0, 0])).unwrap();
        p = adapt_overlap(&p, &m, &g, &u).unwrap();
        assert_eq!(p.map().omegas(), vec![1, 1]);
        for _ in 0..10 {
            p = adapt_overlap(&p, &m, &g, &u).unwrap();
        }
        assert_eq!(p.map().omegas(), vec![4, 4]);
        assert_eq!(p.factor_dims(), vec![5, 5]);
    }
}
