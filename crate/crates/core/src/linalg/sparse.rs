//! Symmetric sparse matrices stored as lower-triangle triplets.

use std::fmt::Write as _;

/// Symmetric `n × n` matrix; each stored entry has `row >= col`.
/// Duplicate coordinates are summed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SymMatrix {
    n: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SymMatrix {
    pub fn new(n: usize) -> Self {
        SymMatrix {
            n,
            ..Default::default()
        }
    }

    pub fn with_pattern(n: usize, pattern: &[(usize, usize)]) -> Self {
        let mut m = SymMatrix::new(n);
        for &(i, j) in pattern {
            m.push(i, j, 0.0);
        }
        m
    }

    /// Adds an entry; `(i, j)` with `i < j` is stored as `(j, i)`.
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        self.rows.push(r);
        self.cols.push(c);
        self.vals.push(v);
    }

    /// Lower triangle of a dense row-major matrix, keeping every entry
    /// (zeros included) so the pattern is complete.
    pub fn from_dense(n: usize, a: &[f64]) -> Self {
        let mut m = SymMatrix::new(n);
        for i in 0..n {
            for j in 0..=i {
                m.push(i, j, a[i * n + j]);
            }
        }
        m
    }

    /// Lower triangle of a dense matrix, dropping exact zeros off the diagonal.
    pub fn from_dense_sparse(n: usize, a: &[f64]) -> Self {
        let mut m = SymMatrix::new(n);
        for i in 0..n {
            for j in 0..=i {
                if i == j || a[i * n + j] != 0.0 {
                    m.push(i, j, a[i * n + j]);
                }
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.vals
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .zip(&self.cols)
            .zip(&self.vals)
            .map(|((&i, &j), &v)| (i, j, v))
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut a = vec![0.0; n * n];
        for (i, j, v) in self.entries() {
            a[i * n + j] += v;
            if i != j {
                a[j * n + i] += v;
            }
        }
        a
    }

    /// `y = M x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y[..self.n].fill(0.0);
        for (i, j, v) in self.entries() {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// Largest absolute stored value.
    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Coordinate dump, one `i j value` line per entry, 1-based.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "% {} {} {}", self.n, self.n, self.nnz());
        for (i, j, v) in self.entries() {
            let _ = writeln!(out, "{} {} {:e}", i + 1, j + 1, v);
        }
        out
    }
}

/// Reusable selection of the entries of `M[idx, idx]`.
#[derive(Debug, Clone)]
pub struct SubmatrixPlan {
    dim: usize,
    /// `(entry in M, local row, local col)` with local row >= local col.
    picks: Vec<(usize, usize, usize)>,
}

impl SubmatrixPlan {
    /// `idx` must be sorted and unique.
    pub fn new(m: &SymMatrix, idx: &[usize]) -> Self {
        let mut local = vec![usize::MAX; m.dim()];
        for (k, &i) in idx.iter().enumerate() {
            local[i] = k;
        }
        let picks = m
            .entries()
            .enumerate()
            .filter_map(|(e, (i, j, _))| {
                let (li, lj) = (local[i], local[j]);
                (li != usize::MAX && lj != usize::MAX).then(|| (e, li.max(lj), li.min(lj)))
            })
            .collect();
        SubmatrixPlan {
            dim: idx.len(),
            picks,
        }
    }

    pub fn extract(&self, m: &SymMatrix) -> SymMatrix {
        let mut s = SymMatrix::new(self.dim);
        s.rows.reserve(self.picks.len());
        for &(e, i, j) in &self.picks {
            s.rows.push(i);
            s.cols.push(j);
            s.vals.push(m.vals[e]);
        }
        s
    }

    /// Overwrites values of a matrix previously produced by [`Self::extract`].
    pub fn refresh(&self, m: &SymMatrix, sub: &mut SymMatrix) {
        for (slot, &(e, _, _)) in sub.vals.iter_mut().zip(&self.picks) {
            *slot = m.vals[e];
        }
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_uses_both_triangles() {
        let mut m = SymMatrix::new(2);
        m.push(0, 0, 2.0);
        m.push(0, 1, 1.0);
        m.push(1, 1, 3.0);
        assert_eq!(m.rows(), &[0, 1, 1]);
        assert_eq!(m.mul(&[1.0, 1.0]), vec![3.0, 4.0]);
        assert_eq!(m.to_dense(), vec![2.0, 1.0, 1.0, 3.0]);
    }

    #[test]
    fn duplicates_are_summed() {
        let mut m = SymMatrix::new(1);
        m.push(0, 0, 1.0);
        m.push(0, 0, 2.5);
        assert_eq!(m.mul(&[2.0]), vec![7.0]);
    }

    #[test]
    fn submatrix_plan() {
        let a = [4.0, 1.0, 0.0, 1.0, 5.0, 2.0, 0.0, 2.0, 6.0];
        let m = SymMatrix::from_dense(3, &a);
        let plan = SubmatrixPlan::new(&m, &[1, 2]);
        let s = plan.extract(&m);
        assert_eq!(s.to_dense(), vec![5.0, 2.0, 2.0, 6.0]);
    }

    #[test]
    fn dump_format() {
        let mut m = SymMatrix::new(2);
        m.push(1, 0, 0.5);
        assert_eq!(m.dump(), "% 2 2 1\n2 1 5e-1\n");
    }
}
