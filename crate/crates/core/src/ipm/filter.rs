//! Filter, barrier schedule and step-length rules of the line search.

/// Margin `γ_θ` on constraint violation.
pub const GAMMA_THETA: f64 = 1e-5;
/// Margin `γ_φ` on the barrier objective.
pub const GAMMA_PHI: f64 = 1e-5;
/// Switching-condition exponents and factor.
pub const S_PHI: f64 = 2.3;
pub const S_THETA: f64 = 1.1;
pub const DELTA: f64 = 1.0;
/// Armijo factor.
pub const ETA_PHI: f64 = 1e-4;
/// Safety factor of the minimum step size.
pub const GAMMA_ALPHA: f64 = 0.05;
/// Curvature-test constant.
pub const CURVATURE_KAPPA: f64 = 1e-12;

/// `max(tol/10, min(0.2μ, μ^1.5))`.
pub fn update_barrier(mu: f64, tol: f64) -> f64 {
    (tol / 10.0).max((0.2 * mu).min(mu.powf(1.5)))
}

/// `τ = max(0.99, 1 − μ)`.
pub fn tau(mu: f64) -> f64 {
    0.99f64.max(1.0 - mu)
}

/// `dᵀ H d ≥ κ dᵀd`, given the curvature `q = dᵀ H d`.
pub fn curvature_test(q: f64, dx: &[f64]) -> bool {
    let dd: f64 = dx.iter().map(|v| v * v).sum();
    if dd == 0.0 {
        return true;
    }
    q >= CURVATURE_KAPPA * dd
}

/// Largest `α ∈ (0, 1]` with `v + α d ≥ lo + (1 − τ)(v − lo)` on bounded entries.
pub fn max_step_lower(v: &[f64], lo: &[f64], d: &[f64], tau: f64) -> f64 {
    let mut alpha = 1.0f64;
    for j in 0..v.len() {
        if lo[j].is_finite() && d[j] < 0.0 {
            alpha = alpha.min(tau * (v[j] - lo[j]) / -d[j]);
        }
    }
    alpha
}

/// Primal and dual maximal step sizes.
#[allow(clippy::too_many_arguments)]
pub fn fraction_to_boundary(
    x: &[f64],
    lb: &[f64],
    ub: &[f64],
    dx: &[f64],
    z_l: &[f64],
    z_u: &[f64],
    dz_l: &[f64],
    dz_u: &[f64],
    tau: f64,
) -> (f64, f64) {
    let neg_x: Vec<f64> = x.iter().map(|v| -v).collect();
    let neg_u: Vec<f64> = ub.iter().map(|v| -v).collect();
    let neg_dx: Vec<f64> = dx.iter().map(|v| -v).collect();
    let ap = max_step_lower(x, lb, dx, tau).min(max_step_lower(&neg_x, &neg_u, &neg_dx, tau));
    let zero_if = |b: &[f64]| -> Vec<f64> {
        b.iter()
            .map(|v| if v.is_finite() { 0.0 } else { f64::NEG_INFINITY })
            .collect()
    };
    let ad = max_step_lower(z_l, &zero_if(lb), dz_l, tau).min(max_step_lower(z_u, &zero_if(ub), dz_u, tau));
    (ap, ad)
}

/// Filter of `(θ, φ)` pairs, already shifted by the acceptance margins.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Filter {
    entries: Vec<(f64, f64)>,
}

impl Filter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// True unless some entry has `θ_F ≤ θ` and `φ_F ≤ φ`.
    pub fn acceptable(&self, theta: f64, phi: f64) -> bool {
        self.entries.iter().all(|&(t, p)| theta < t || phi < p)
    }

    /// Adds the margined pair of an iterate and drops entries it dominates.
    pub fn augment(&mut self, theta: f64, phi: f64) {
        let t = (1.0 - GAMMA_THETA) * theta;
        let p = phi - GAMMA_PHI * theta;
        self.entries.retain(|&(et, ep)| !(et >= t && ep >= p));
        self.entries.push((t, p));
    }
}

/// Outcome of testing one trial point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Acceptance {
    Reject,
    /// Accepted by the Armijo rule; the filter is left unchanged.
    Armijo,
    /// Accepted by sufficient reduction; the filter must be augmented.
    Reduction,
}

/// Line-search data of the current iterate.
#[derive(Debug, Clone, Copy)]
pub struct LineSearchPoint {
    pub theta: f64,
    pub phi: f64,
    /// `∇φᵀ dˣ`.
    pub slope: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl LineSearchPoint {
    pub fn switching(&self, alpha: f64) -> bool {
        self.slope < 0.0 && alpha * (-self.slope).powf(S_PHI) > DELTA * self.theta.powf(S_THETA)
    }

    /// Minimum step size before restoration is triggered.
    pub fn alpha_min(&self) -> f64 {
        let g = self.slope;
        let m = if g < 0.0 {
            let base = GAMMA_THETA.min(GAMMA_PHI * self.theta / -g);
            if self.theta <= self.theta_min {
                base.min(DELTA * self.theta.powf(S_THETA) / (-g).powf(S_PHI))
            } else {
                base
            }
        } else {
            GAMMA_THETA
        };
        GAMMA_ALPHA * m
    }
}

pub fn filter_accept(
    filter: &Filter,
    cur: &LineSearchPoint,
    alpha: f64,
    theta_t: f64,
    phi_t: f64,
) -> Acceptance {
    if !(theta_t.is_finite() && phi_t.is_finite()) || theta_t > cur.theta_max {
        return Acceptance::Reject;
    }
    if !filter.acceptable(theta_t, phi_t) {
        return Acceptance::Reject;
    }
    if cur.theta <= cur.theta_min && cur.switching(alpha) {
        if phi_t <= cur.phi + ETA_PHI * alpha * cur.slope {
            return Acceptance::Armijo;
        }
        return Acceptance::Reject;
    }
    if theta_t <= (1.0 - GAMMA_THETA) * cur.theta || phi_t <= cur.phi - GAMMA_PHI * cur.theta {
        Acceptance::Reduction
    } else {
        Acceptance::Reject
    }
}
