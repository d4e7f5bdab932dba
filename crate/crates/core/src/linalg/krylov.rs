//! Preconditioned Richardson and restarted GMRES iterations.
//!
//! Both stop when `‖p − M d‖₂ ≤ tol·(1 + ‖p‖₂)`.

use super::ras::RasPreconditioner;
use super::sparse::{dot, norm2, SymMatrix};

pub trait Preconditioner: Sync {
    /// `out = P⁻¹ r`.
    fn apply(&self, r: &[f64], out: &mut [f64]);
}

impl Preconditioner for RasPreconditioner {
    fn apply(&self, r: &[f64], out: &mut [f64]) {
        RasPreconditioner::apply(self, r, out);
    }
}

pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], out: &mut [f64]) {
        out.copy_from_slice(r);
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterStats {
    pub iterations: usize,
    /// Final `‖p − M d‖₂ / (1 + ‖p‖₂)`.
    pub residual: f64,
    pub converged: bool,
    pub adaptations: usize,
    /// Relative residual after each iteration (implicit for GMRES).
    pub history: Vec<f64>,
}

fn residual(m: &SymMatrix, p: &[f64], d: &[f64], r: &mut [f64]) -> f64 {
    m.matvec(d, r);
    for (ri, pi) in r.iter_mut().zip(p) {
        *ri = pi - *ri;
    }
    norm2(r)
}

/// Undamped iteration `d ← d + P⁻¹(p − M d)` from `d = 0`.
pub fn richardson(
    m: &SymMatrix,
    p: &[f64],
    prec: &impl Preconditioner,
    tol: f64,
    maxit: usize,
) -> (Vec<f64>, IterStats) {
    let n = p.len();
    let scale = 1.0 + norm2(p);
    let mut d = vec![0.0; n];
    let mut r = p.to_vec();
    let mut z = vec![0.0; n];
    let mut stats = IterStats {
        residual: norm2(&r) / scale,
        ..Default::default()
    };
    while stats.residual > tol {
        if stats.iterations == maxit || !stats.residual.is_finite() || stats.residual > 1e20 {
            return (d, stats);
        }
        prec.apply(&r, &mut z);
        for (di, zi) in d.iter_mut().zip(&z) {
            *di += zi;
        }
        stats.iterations += 1;
        stats.residual = residual(m, p, &d, &mut r) / scale;
        stats.history.push(stats.residual);
    }
    stats.converged = true;
    (d, stats)
}

/// Right-preconditioned restarted GMRES with modified Gram-Schmidt.
pub fn gmres(
    m: &SymMatrix,
    p: &[f64],
    prec: &impl Preconditioner,
    tol: f64,
    maxit: usize,
    restart: usize,
) -> (Vec<f64>, IterStats) {
    let n = p.len();
    let restart = restart.max(1);
    let scale = 1.0 + norm2(p);
    let mut d = vec![0.0; n];
    let mut r = p.to_vec();
    let mut beta = norm2(&r);
    let mut stats = IterStats {
        residual: beta / scale,
        ..Default::default()
    };
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];

    while stats.residual > tol && stats.iterations < maxit {
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
        let mut h: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![beta];
        let mut k = 0;
        while k < restart && stats.iterations < maxit {
            prec.apply(&v[k], &mut z);
            m.matvec(&z, &mut w);
            let mut col = vec![0.0; k + 2];
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(&w, vi);
                col[i] = hij;
                for (wj, vj) in w.iter_mut().zip(vi) {
                    *wj -= hij * vj;
                }
            }
            let hnext = norm2(&w);
            col[k + 1] = hnext;
            for i in 0..k {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let rho = col[k].hypot(col[k + 1]);
            let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (col[k] / rho, col[k + 1] / rho) };
            col[k] = rho;
            col[k + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            g.push(-s * g[k]);
            g[k] *= c;
            h.push(col);
            k += 1;
            stats.iterations += 1;
            let implicit = g[k].abs() / scale;
            stats.history.push(implicit);
            if implicit <= tol || hnext <= 1e-300 {
                break;
            }
            v.push(w.iter().map(|x| x / hnext).collect());
        }
        // back substitution for y, then d += P⁻¹ V y
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for j in i + 1..k {
                acc -= h[j][i] * y[j];
            }
            y[i] = if h[i][i] != 0.0 { acc / h[i][i] } else { 0.0 };
        }
        let mut u = vec![0.0; n];
        for (vj, yj) in v.iter().zip(&y) {
            for (ui, vij) in u.iter_mut().zip(vj) {
                *ui += yj * vij;
            }
        }
        prec.apply(&u, &mut z);
        for (di, zi) in d.iter_mut().zip(&z) {
            *di += zi;
        }
        beta = residual(m, p, &d, &mut r);
        stats.residual = beta / scale;
        if !stats.residual.is_finite() || beta == 0.0 {
            break;
        }
    }
    stats.converged = stats.residual <= tol;
    (d, stats)
}
