//! Sparse symmetric indefinite `LDLᵀ` factorization.
//!
//! Multifrontal method over fundamental supernodes of an AMD ordering. Pivots
//! are 1×1 or 2×2 blocks chosen with a relative threshold test inside each
//! front; fully-summed variables that fail the test are delayed to the
//! parent front. Root fronts use Bunch-Kaufman partial pivoting, which
//! always succeeds unless the remaining block is numerically singular.
//!
//! The symbolic analysis depends only on the sparsity pattern and can be
//! shared by any number of numeric factorizations with that pattern.

use std::sync::Arc;

use super::sparse::{norm2, SymMatrix};
use super::LinalgError;

const NONE: usize = usize::MAX;
const BK_ALPHA: f64 = 0.640_388_203_202_208; // (1 + √17) / 8

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdlOptions {
    /// Relative pivot threshold `u` for non-root fronts.
    pub pivot_threshold: f64,
    /// A pivot column is treated as zero when its largest entry is at most
    /// this fraction of the largest original entry touching the variable.
    pub singular_tol: f64,
    /// One refinement step is taken when `‖b − Mx‖ > refine_tol·(1 + ‖b‖)`.
    pub refine_tol: f64,
}

impl Default for LdlOptions {
    fn default() -> Self {
        LdlOptions {
            pivot_threshold: 0.01,
            singular_tol: 1e-14,
            refine_tol: 1e-12,
        }
    }
}

/// Ordering, elimination tree and supernode structure of a pattern.
#[derive(Debug, Clone)]
pub struct Symbolic {
    n: usize,
    nnz_in: usize,
    /// `perm[k]` is the original index eliminated at position `k`.
    perm: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// Slot in the permuted CSC value array for each input triplet.
    slot: Vec<usize>,
    sn_start: Vec<usize>,
    sn_rows: Vec<Vec<usize>>,
    sn_parent: Vec<usize>,
    sn_children: Vec<Vec<usize>>,
    fill: usize,
}

impl Symbolic {
    pub fn analyze(m: &SymMatrix) -> Symbolic {
        let n = m.dim();
        // diagonal included: the ordering ignores it, and its input checks
        // assume at least n entries
        let mut adj: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for (&i, &j) in m.rows().iter().zip(m.cols()) {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        let mut a_p = Vec::with_capacity(n + 1);
        let mut a_i = Vec::new();
        a_p.push(0);
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            a_i.extend_from_slice(list);
            a_p.push(a_i.len());
        }
        let amd_perm = if n == 0 {
            Vec::new()
        } else {
            amd::order(n, &a_p, &a_i, &amd::Control::default())
                .map(|(p, _, _)| p)
                .unwrap_or_else(|_| (0..n).collect())
        };

        // postorder the elimination tree so supernodes are contiguous
        let parent = etree(n, m, &inverse(&amd_perm));
        let post = postorder(&parent);
        let perm: Vec<usize> = post.iter().map(|&k| amd_perm[k]).collect();
        let iperm = inverse(&perm);
        let parent = etree(n, m, &iperm);

        // permuted lower CSC including the diagonal
        let mut by_col: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut coords = Vec::with_capacity(m.nnz());
        for (&i, &j) in m.rows().iter().zip(m.cols()) {
            let (a, b) = (iperm[i], iperm[j]);
            let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
            by_col[lo].push(hi);
            coords.push((hi, lo));
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for (j, rows) in by_col.iter_mut().enumerate() {
            rows.push(j);
            rows.sort_unstable();
            rows.dedup();
            row_idx.extend_from_slice(rows);
            col_ptr.push(row_idx.len());
        }
        let slot = coords
            .iter()
            .map(|&(hi, lo)| {
                let rows = &row_idx[col_ptr[lo]..col_ptr[lo + 1]];
                col_ptr[lo] + rows.binary_search(&hi).unwrap()
            })
            .collect();

        // strict lower structure of each column of L
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (j, &p) in parent.iter().enumerate() {
            if p != NONE {
                children[p].push(j);
            }
        }
        let mut structure: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut mark = vec![NONE; n];
        for j in 0..n {
            let mut s = Vec::new();
            mark[j] = j;
            for &i in &row_idx[col_ptr[j]..col_ptr[j + 1]] {
                if mark[i] != j {
                    mark[i] = j;
                    s.push(i);
                }
            }
            for &c in &children[j] {
                for &i in &structure[c] {
                    if mark[i] != j {
                        mark[i] = j;
                        s.push(i);
                    }
                }
            }
            s.sort_unstable();
            structure[j] = s;
        }
        let fill = structure.iter().map(Vec::len).sum::<usize>() + n;

        // fundamental supernodes
        let mut sn_start = vec![0];
        for j in 1..n {
            let merge = parent[j - 1] == j
                && children[j].len() == 1
                && structure[j - 1].len() == structure[j].len() + 1;
            if !merge {
                sn_start.push(j);
            }
        }
        if n > 0 {
            sn_start.push(n);
        } else {
            sn_start.clear();
            sn_start.push(0);
        }
        let ns = sn_start.len() - 1;
        let mut sn_of = vec![0; n];
        for s in 0..ns {
            for col in sn_start[s]..sn_start[s + 1] {
                sn_of[col] = s;
            }
        }
        let mut sn_parent = vec![NONE; ns];
        let mut sn_children = vec![Vec::new(); ns];
        let mut sn_rows = Vec::with_capacity(ns);
        for s in 0..ns {
            let last = sn_start[s + 1] - 1;
            sn_rows.push(std::mem::take(&mut structure[last]));
            if parent[last] != NONE {
                sn_parent[s] = sn_of[parent[last]];
                sn_children[sn_of[parent[last]]].push(s);
            }
        }

        Symbolic {
            n,
            nnz_in: m.nnz(),
            perm,
            col_ptr,
            row_idx,
            slot,
            sn_start,
            sn_rows,
            sn_parent,
            sn_children,
            fill,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Predicted nonzeros of `L` (diagonal included) without delays.
    pub fn fill(&self) -> usize {
        self.fill
    }

    pub fn num_supernodes(&self) -> usize {
        self.sn_rows.len()
    }
}

fn inverse(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (k, &i) in p.iter().enumerate() {
        inv[i] = k;
    }
    inv
}

/// Elimination tree of `P M Pᵀ` where `iperm` maps original to new indices.
fn etree(n: usize, m: &SymMatrix, iperm: &[usize]) -> Vec<usize> {
    let mut upper: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (&i, &j) in m.rows().iter().zip(m.cols()) {
        let (a, b) = (iperm[i], iperm[j]);
        if a != b {
            upper[a.max(b)].push(a.min(b));
        }
    }
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for &start in &upper[k] {
            let mut i = start;
            while i != NONE && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == NONE {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    parent
}

/// `post[k]` is the node visited at position `k` of a DFS postorder.
fn postorder(parent: &[usize]) -> Vec<usize> {
    let n = parent.len();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut roots = Vec::new();
    for (j, &p) in parent.iter().enumerate() {
        if p == NONE {
            roots.push(j);
        } else {
            children[p].push(j);
        }
    }
    let mut post = Vec::with_capacity(n);
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for &r in &roots {
        stack.push((r, 0));
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if *next < children[node].len() {
                let c = children[node][*next];
                *next += 1;
                stack.push((c, 0));
            } else {
                post.push(node);
                stack.pop();
            }
        }
    }
    post
}

#[derive(Debug, Clone, Copy)]
enum Pivot {
    One(f64),
    Two(f64, f64, f64),
}

#[derive(Debug, Clone)]
struct FrontFactor {
    /// Permuted variable at each front position; the first `npiv` are pivots.
    vars: Vec<usize>,
    npiv: usize,
    /// Column-major `f × npiv` unit-lower factor columns.
    l: Vec<f64>,
    pivots: Vec<Pivot>,
}

#[derive(Debug)]
struct Contribution {
    vars: Vec<usize>,
    delayed: usize,
    mat: Vec<f64>,
}

/// Factorization statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LdlStats {
    pub two_by_two: usize,
    pub delayed: usize,
    pub factor_nnz: usize,
    pub max_front: usize,
}

/// Reusable `P M Pᵀ = L D Lᵀ` factorization.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    symbolic: Arc<Symbolic>,
    fronts: Vec<FrontFactor>,
    matrix: SymMatrix,
    options: LdlOptions,
    stats: LdlStats,
}

/// Dense symmetric front; only the lower triangle is referenced.
struct Front {
    f: usize,
    a: Vec<f64>,
}

impl Front {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        if i >= j {
            self.a[i + j * self.f]
        } else {
            self.a[j + i * self.f]
        }
    }

    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        self.a[r + c * self.f] += v;
    }

    /// Symmetric exchange of positions `p < q`.
    fn swap(&mut self, p: usize, q: usize) {
        if p == q {
            return;
        }
        let (p, q) = (p.min(q), p.max(q));
        let f = self.f;
        for k in 0..p {
            self.a.swap(p + k * f, q + k * f);
        }
        for k in p + 1..q {
            self.a.swap(k + p * f, q + k * f);
        }
        for k in q + 1..f {
            self.a.swap(k + p * f, k + q * f);
        }
        self.a.swap(p + p * f, q + q * f);
    }

    /// Largest `|F(i, k)|` over `i ∈ [from, f)`, `i ∉ {k, skip}`.
    fn col_max(&self, k: usize, from: usize, skip: usize) -> f64 {
        let mut m = 0.0f64;
        for i in from..self.f {
            if i != k && i != skip {
                m = m.max(self.at(i, k).abs());
            }
        }
        m
    }

    /// Argmax of `|F(i, k)|` over `i ∈ [from, to)`, `i ≠ k`.
    fn col_argmax(&self, k: usize, from: usize, to: usize) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for i in from..to {
            if i != k {
                let v = self.at(i, k).abs();
                if best.map_or(true, |(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
        }
        best
    }

    fn eliminate_one(&mut self, p: usize) -> Pivot {
        let f = self.f;
        let d = self.a[p + p * f];
        let inv = 1.0 / d;
        for j in p + 1..f {
            let w = self.a[j + p * f];
            if w == 0.0 {
                continue;
            }
            let lw = w * inv;
            let (head, tail) = self.a.split_at_mut(j * f);
            let colp = &head[p * f..p * f + f];
            let colj = &mut tail[..f];
            for i in j..f {
                colj[i] -= colp[i] * lw;
            }
        }
        for i in p + 1..f {
            self.a[i + p * f] *= inv;
        }
        Pivot::One(d)
    }

    fn eliminate_two(&mut self, p: usize) -> Pivot {
        let f = self.f;
        let (a, b, c) = (
            self.a[p + p * f],
            self.a[p + 1 + p * f],
            self.a[p + 1 + (p + 1) * f],
        );
        let det = a * c - b * b;
        let q = p + 1;
        let mut l1 = vec![0.0; f];
        let mut l2 = vec![0.0; f];
        for i in q + 1..f {
            let u = self.a[i + p * f];
            let v = self.a[i + q * f];
            l1[i] = (c * u - b * v) / det;
            l2[i] = (a * v - b * u) / det;
        }
        for j in q + 1..f {
            let uj = self.a[j + p * f];
            let vj = self.a[j + q * f];
            if uj == 0.0 && vj == 0.0 {
                continue;
            }
            let col = &mut self.a[j * f..j * f + f];
            for i in j..f {
                col[i] -= l1[i] * uj + l2[i] * vj;
            }
        }
        for i in q + 1..f {
            self.a[i + p * f] = l1[i];
            self.a[i + q * f] = l2[i];
        }
        self.a[q + p * f] = 0.0;
        Pivot::Two(a, b, c)
    }
}

/// Factorizes `m` with a fresh symbolic analysis.
pub fn factor_direct(m: &SymMatrix) -> Result<LdlFactor, LinalgError> {
    LdlFactor::new(Arc::new(Symbolic::analyze(m)), m, LdlOptions::default())
}

impl LdlFactor {
    pub fn new(symbolic: Arc<Symbolic>, m: &SymMatrix, options: LdlOptions) -> Result<Self, LinalgError> {
        assert_eq!(symbolic.n, m.dim(), "pattern dimension mismatch");
        assert_eq!(symbolic.nnz_in, m.nnz(), "pattern size mismatch");
        let sym = &*symbolic;
        let n = sym.n;
        let mut vals = vec![0.0; sym.row_idx.len()];
        for (&s, &v) in sym.slot.iter().zip(m.values()) {
            vals[s] += v;
        }
        let mut scale = vec![0.0f64; n];
        for j in 0..n {
            for k in sym.col_ptr[j]..sym.col_ptr[j + 1] {
                let v = vals[k].abs();
                let i = sym.row_idx[k];
                scale[i] = scale[i].max(v);
                scale[j] = scale[j].max(v);
            }
        }

        let ns = sym.num_supernodes();
        let mut pos = vec![NONE; n];
        let mut contribs: Vec<Option<Contribution>> = (0..ns).map(|_| None).collect();
        let mut fronts = Vec::with_capacity(ns);
        let mut stats = LdlStats::default();

        for s in 0..ns {
            let (first, last) = (sym.sn_start[s], sym.sn_start[s + 1]);
            let kids: Vec<Contribution> = sym.sn_children[s]
                .iter()
                .map(|&c| contribs[c].take().expect("child processed"))
                .collect();
            let mut vars: Vec<usize> = Vec::new();
            for cb in &kids {
                vars.extend_from_slice(&cb.vars[..cb.delayed]);
            }
            vars.extend(first..last);
            let nfs = vars.len();
            vars.extend_from_slice(&sym.sn_rows[s]);
            let f = vars.len();
            for (k, &v) in vars.iter().enumerate() {
                pos[v] = k;
            }
            let mut front = Front {
                f,
                a: vec![0.0; f * f],
            };
            for j in first..last {
                for k in sym.col_ptr[j]..sym.col_ptr[j + 1] {
                    front.add(pos[sym.row_idx[k]], pos[j], vals[k]);
                }
            }
            for cb in &kids {
                let cf = cb.vars.len();
                for b in 0..cf {
                    let lb = pos[cb.vars[b]];
                    for a in b..cf {
                        let v = cb.mat[a + b * cf];
                        if v != 0.0 {
                            front.add(pos[cb.vars[a]], lb, v);
                        }
                    }
                }
            }
            drop(kids);

            let is_root = sym.sn_parent[s] == NONE;
            let (npiv, pivots) =
                factor_front(&mut front, &mut vars, nfs, is_root, &scale, &options)?;
            stats.two_by_two += pivots.iter().filter(|p| matches!(p, Pivot::Two(..))).count();
            stats.delayed += nfs - npiv;
            stats.max_front = stats.max_front.max(f);
            stats.factor_nnz += npiv * f - npiv * (npiv.saturating_sub(1)) / 2;

            let cf = f - npiv;
            if !is_root {
                let mut mat = vec![0.0; cf * cf];
                for b in 0..cf {
                    let src = &front.a[(npiv + b) * f + npiv..(npiv + b) * f + f];
                    mat[b * cf..b * cf + cf].copy_from_slice(src);
                }
                contribs[s] = Some(Contribution {
                    vars: vars[npiv..].to_vec(),
                    delayed: nfs - npiv,
                    mat,
                });
            }
            for &v in &vars {
                pos[v] = NONE;
            }
            front.a.truncate(npiv * f);
            fronts.push(FrontFactor {
                vars,
                npiv,
                l: front.a,
                pivots,
            });
        }

        Ok(LdlFactor {
            symbolic,
            fronts,
            matrix: m.clone(),
            options,
            stats,
        })
    }

    /// Refactorizes new values with the same pattern.
    pub fn refactor(&self, m: &SymMatrix) -> Result<Self, LinalgError> {
        LdlFactor::new(self.symbolic.clone(), m, self.options)
    }

    pub fn symbolic(&self) -> &Arc<Symbolic> {
        &self.symbolic
    }

    pub fn stats(&self) -> LdlStats {
        self.stats
    }

    pub fn dim(&self) -> usize {
        self.symbolic.n
    }

    fn solve_raw(&self, b: &[f64], x: &mut [f64]) {
        let sym = &*self.symbolic;
        let mut y: Vec<f64> = sym.perm.iter().map(|&i| b[i]).collect();
        for fr in &self.fronts {
            let f = fr.vars.len();
            for p in 0..fr.npiv {
                let yp = y[fr.vars[p]];
                if yp == 0.0 {
                    continue;
                }
                let col = &fr.l[p * f..p * f + f];
                for i in p + 1..f {
                    y[fr.vars[i]] -= col[i] * yp;
                }
            }
        }
        for fr in &self.fronts {
            let mut p = 0;
            for piv in &fr.pivots {
                match *piv {
                    Pivot::One(d) => {
                        y[fr.vars[p]] /= d;
                        p += 1;
                    }
                    Pivot::Two(a, b, c) => {
                        let (i, j) = (fr.vars[p], fr.vars[p + 1]);
                        let det = a * c - b * b;
                        let (u, v) = (y[i], y[j]);
                        y[i] = (c * u - b * v) / det;
                        y[j] = (a * v - b * u) / det;
                        p += 2;
                    }
                }
            }
        }
        for fr in self.fronts.iter().rev() {
            let f = fr.vars.len();
            for p in (0..fr.npiv).rev() {
                let col = &fr.l[p * f..p * f + f];
                let mut acc = 0.0;
                for i in p + 1..f {
                    acc += col[i] * y[fr.vars[i]];
                }
                y[fr.vars[p]] -= acc;
            }
        }
        for (k, &i) in sym.perm.iter().enumerate() {
            x[i] = y[k];
        }
    }

    /// Solves `M x = b` with at most one iterative-refinement step.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; b.len()];
        self.solve_into(b, &mut x);
        x
    }

    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        self.solve_raw(b, x);
        let mx = self.matrix.mul(x);
        let r: Vec<f64> = b.iter().zip(&mx).map(|(bi, mi)| bi - mi).collect();
        if norm2(&r) > self.options.refine_tol * (1.0 + norm2(b)) {
            let mut dx = vec![0.0; b.len()];
            self.solve_raw(&r, &mut dx);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
    }
}

/// Eliminates as many fully-summed variables (positions `< nfs`) as the
/// pivot tests allow; returns the pivot count and blocks.
fn factor_front(
    front: &mut Front,
    vars: &mut [usize],
    nfs: usize,
    is_root: bool,
    scale: &[f64],
    opts: &LdlOptions,
) -> Result<(usize, Vec<Pivot>), LinalgError> {
    let f = front.f;
    let u = opts.pivot_threshold;
    let tiny = |v: &[usize], k: usize| opts.singular_tol * scale[v[k]];
    let mut pivots = Vec::new();
    let mut p = 0;
    while p < nfs {
        if is_root {
            // Bunch-Kaufman partial pivoting on the remaining block
            let akk = front.at(p, p).abs();
            let (r, lambda) = front.col_argmax(p, p + 1, f).unwrap_or((p, 0.0));
            if akk.max(lambda) <= tiny(vars, p) {
                return Err(LinalgError::SingularMatrix);
            }
            if akk >= BK_ALPHA * lambda {
                pivots.push(front.eliminate_one(p));
                p += 1;
                continue;
            }
            let sigma = front.col_max(r, p, r);
            if akk * sigma >= BK_ALPHA * lambda * lambda {
                pivots.push(front.eliminate_one(p));
                p += 1;
            } else if front.at(r, r).abs() >= BK_ALPHA * sigma {
                front.swap(p, r);
                vars.swap(p, r);
                pivots.push(front.eliminate_one(p));
                p += 1;
            } else {
                front.swap(p + 1, r);
                vars.swap(p + 1, r);
                pivots.push(front.eliminate_two(p));
                p += 2;
            }
            continue;
        }

        let mut chosen: Option<(usize, Option<usize>)> = None;
        for k in p..nfs {
            let akk = front.at(k, k).abs();
            let gamma = front.col_max(k, p, k);
            if akk.max(gamma) <= tiny(vars, k) {
                continue;
            }
            if akk > tiny(vars, k) && akk >= u * gamma {
                chosen = Some((k, None));
                break;
            }
            if let Some((r, brk)) = front.col_argmax(k, p, nfs) {
                if brk <= tiny(vars, k) {
                    continue;
                }
                let a = front.at(k, k);
                let b = front.at(r, k);
                let c = front.at(r, r);
                let det = a * c - b * b;
                if det.abs() <= opts.singular_tol * (a * c).abs().max(b * b) {
                    continue;
                }
                let gk = front.col_max(k, p, r);
                let gr = front.col_max(r, p, k);
                let bound = det.abs() / u;
                if c.abs() * gk + b.abs() * gr <= bound && b.abs() * gk + a.abs() * gr <= bound {
                    chosen = Some((k, Some(r)));
                    break;
                }
            }
        }
        match chosen {
            None => break,
            Some((k, None)) => {
                front.swap(p, k);
                vars.swap(p, k);
                pivots.push(front.eliminate_one(p));
                p += 1;
            }
            Some((k, Some(r))) => {
                front.swap(p, k);
                vars.swap(p, k);
                let r = if r == p { k } else { r };
                front.swap(p + 1, r);
                vars.swap(p + 1, r);
                pivots.push(front.eliminate_two(p));
                p += 2;
            }
        }
    }
    Ok((p, pivots))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn residual(m: &SymMatrix, x: &[f64], b: &[f64]) -> f64 {
        let mx = m.mul(x);
        let r: Vec<f64> = b.iter().zip(&mx).map(|(a, c)| a - c).collect();
        norm2(&r) / norm2(b)
    }

    #[test]
    fn diagonal_indefinite() {
        let mut m = SymMatrix::new(2);
        m.push(0, 0, 2.0);
        m.push(1, 1, -3.0);
        let f = factor_direct(&m).unwrap();
        assert_eq!(f.solve(&[4.0, 3.0]), vec![2.0, -1.0]);
    }

    #[test]
    fn needs_two_by_two() {
        let mut m = SymMatrix::new(2);
        m.push(0, 0, 0.0);
        m.push(1, 0, 1.0);
        m.push(1, 1, 0.0);
        let f = factor_direct(&m).unwrap();
        assert_eq!(f.solve(&[1.0, 1.0]), vec![1.0, 1.0]);
        assert_eq!(f.stats().two_by_two, 1);
    }

    #[test]
    fn singular_is_reported() {
        let m = SymMatrix::from_dense(2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(factor_direct(&m), Err(LinalgError::SingularMatrix)));
        let z = SymMatrix::from_dense(3, &[0.0; 9]);
        assert!(matches!(factor_direct(&z), Err(LinalgError::SingularMatrix)));
    }

    fn random_quasi_definite(n: usize, m: usize, density: f64, rng: &mut impl Rng) -> SymMatrix {
        let dim = n + m;
        let mut a = vec![0.0; dim * dim];
        for i in 0..n {
            a[i * dim + i] = 1.0 + rng.random::<f64>() * 3.0;
            for j in 0..i {
                if rng.random::<f64>() < density {
                    let v = rng.random::<f64>() - 0.5;
                    a[i * dim + j] = v;
                    a[j * dim + i] = v;
                }
            }
        }
        for r in 0..m {
            let i = n + r;
            a[i * dim + i] = -(0.1 + rng.random::<f64>());
            for j in 0..n {
                if rng.random::<f64>() < density {
                    let v = rng.random::<f64>() * 2.0 - 1.0;
                    a[i * dim + j] = v;
                    a[j * dim + i] = v;
                }
            }
        }
        SymMatrix::from_dense_sparse(dim, &a)
    }

    #[test]
    fn random_quasi_definite_residual() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for _ in 0..10 {
            let m = random_quasi_definite(30, 20, 0.15, &mut rng);
            let b: Vec<f64> = (0..50).map(|_| rng.random::<f64>() - 0.5).collect();
            let x = factor_direct(&m).unwrap().solve(&b);
            assert!(residual(&m, &x, &b) <= 1e-10);
        }
    }

    #[test]
    fn saddle_point_with_zero_block_and_delays() {
        // KKT matrix with an exactly zero (2,2) block forces delayed pivots
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for trial in 0..20 {
            let (n, m) = (12 + trial % 5, 5);
            let dim = n + m;
            let mut a = vec![0.0; dim * dim];
            for i in 0..n {
                a[i * dim + i] = if trial % 2 == 0 { 1e-3 } else { 2.0 };
                if i > 0 {
                    a[i * dim + i - 1] = 0.3;
                    a[(i - 1) * dim + i] = 0.3;
                }
            }
            for r in 0..m {
                for j in 0..n {
                    if (j + r) % 3 == 0 || j == r {
                        let v = rng.random::<f64>() + 0.5;
                        a[(n + r) * dim + j] = v;
                        a[j * dim + n + r] = v;
                    }
                }
            }
            let mm = SymMatrix::from_dense_sparse(dim, &a);
            let b: Vec<f64> = (0..dim).map(|i| (i as f64).sin()).collect();
            let x = factor_direct(&mm).unwrap().solve(&b);
            assert!(residual(&mm, &x, &b) <= 1e-10, "trial {trial}");
        }
    }

    #[test]
    fn refactor_reuses_symbolic() {
        let mut m = SymMatrix::from_dense_sparse(3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let f = factor_direct(&m).unwrap();
        for v in m.values_mut() {
            *v *= -2.0;
        }
        let g = f.refactor(&m).unwrap();
        assert!(Arc::ptr_eq(f.symbolic(), g.symbolic()));
        let b = [1.0, 2.0, 3.0];
        assert!(residual(&m, &g.solve(&b), &b) < 1e-14);
    }

    #[test]
    fn arrow_and_tridiagonal_structures() {
        let n = 200;
        let mut m = SymMatrix::new(n);
        for i in 0..n {
            m.push(i, i, if i % 3 == 0 { -4.0 } else { 4.0 });
            if i + 1 < n {
                m.push(i + 1, i, 1.0);
            }
            if i > 0 {
                m.push(i, 0, 0.1);
            }
        }
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let f = factor_direct(&m).unwrap();
        assert!(residual(&m, &f.solve(&b), &b) <= 1e-12);
        assert!(f.symbolic().num_supernodes() >= 1);
    }
}
