//! Transient gas network over a periodic time grid.
//!
//! Per period `t` and discretized pipeline `(i, j)` with inflow/outflow fluxes
//! `φ_in = φᵃ − φ⁻`, `φ_out = φᵃ + φ⁻`:
//!
//! ```text
//! mass_balance      Σ_out A φ_in − Σ_in A φ_out + Σ_out f − Σ_in f = Σ s − Σ d
//! momentum          ρ_i² − ρ_j² = (λ L̂ / D) φᵃ |φᵃ|
//! line_pack         L̂ (ρ̇_i + ρ̇_j) = −4 φ⁻,    ρ̇_t = (ρ_t − ρ_{t−1}) / Δt,  ρ_0 = ρ_T
//! direction         f (ρ_i − ρ_j) ≤ 0
//! compression_ratio ρ_j = α ρ_i
//! compressor_power  Pᵃ = W_a f (α^κ − 1),  Pᵃ ≤ P_max,  |f| ≤ f_max
//! ```
//!
//! Objective per period: `γ Σ Pᵃ + Σ c s − Σ c d`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{tag, InstanceError};
use crate::expr::Expr;
use crate::model::{NodeId, OptiGraph, Sense};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    pub name: String,
    pub rho_min: f64,
    pub rho_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipe {
    pub name: String,
    pub from: String,
    pub to: String,
    pub length: f64,
    pub diameter: f64,
    pub friction: f64,
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Compressor {
    pub name: String,
    pub from: String,
    pub to: String,
    pub power_max: f64,
    pub flow_max: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
}

/// Receipt (supply) or delivery (demand) point with a cyclic price series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    pub name: String,
    pub junction: String,
    pub max: f64,
    pub price: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasInstance {
    pub junctions: Vec<Junction>,
    pub pipes: Vec<Pipe>,
    pub compressors: Vec<Compressor>,
    pub receipts: Vec<Transfer>,
    pub deliveries: Vec<Transfer>,
    /// Economic factor on compressor power.
    pub gamma: f64,
    pub w_a: f64,
    /// Exponent of the compression ratio in the power expression.
    pub kappa: f64,
    pub dt: f64,
    pub segments: usize,
}

/// Sizes of the generated model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GasStats {
    pub periods: usize,
    pub junctions: usize,
    pub pipelines: usize,
    pub compressors: usize,
}

struct Segment {
    from: usize,
    to: usize,
    length: f64,
    resistance: f64,
    area: f64,
    name: String,
}

struct Network {
    /// (name, rho_min, rho_max)
    junctions: Vec<(String, f64, f64)>,
    segments: Vec<Segment>,
    compressors: Vec<(usize, usize)>,
}

impl GasInstance {
    fn junction_index(&self) -> HashMap<&str, usize> {
        self.junctions
            .iter()
            .enumerate()
            .map(|(i, j)| (j.name.as_str(), i))
            .collect()
    }

    fn lookup(index: &HashMap<&str, usize>, name: &str) -> Result<usize, InstanceError> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| InstanceError::UnknownJunction(name.to_string()))
    }

    fn discretize(&self, segments: usize) -> Result<Network, InstanceError> {
        let index = self.junction_index();
        let mut junctions: Vec<(String, f64, f64)> = self
            .junctions
            .iter()
            .map(|j| (j.name.clone(), j.rho_min, j.rho_max))
            .collect();
        let mut segs = Vec::new();
        for p in &self.pipes {
            let a = Self::lookup(&index, &p.from)?;
            let b = Self::lookup(&index, &p.to)?;
            let lo = junctions[a].1.min(junctions[b].1);
            let hi = junctions[a].2.max(junctions[b].2);
            let mut chain = vec![a];
            for k in 1..segments {
                junctions.push((format!("{}.{}", p.name, k), lo, hi));
                chain.push(junctions.len() - 1);
            }
            chain.push(b);
            let length = p.length / segments as f64;
            for k in 0..segments {
                segs.push(Segment {
                    from: chain[k],
                    to: chain[k + 1],
                    length,
                    resistance: p.friction * length / p.diameter,
                    area: p.area,
                    name: format!("{}#{}", p.name, k + 1),
                });
            }
        }
        let compressors = self
            .compressors
            .iter()
            .map(|c| Ok((Self::lookup(&index, &c.from)?, Self::lookup(&index, &c.to)?)))
            .collect::<Result<_, InstanceError>>()?;
        Ok(Network {
            junctions,
            segments: segs,
            compressors,
        })
    }

    /// Discretized junction and pipeline counts.
    pub fn discretized_counts(&self, segments: usize) -> (usize, usize) {
        let extra = self.pipes.len() * segments.saturating_sub(1);
        (self.junctions.len() + extra, self.pipes.len() * segments)
    }
}

fn cyclic(series: &[f64], t: usize) -> f64 {
    series[t % series.len()]
}

struct PeriodVars {
    rho: Vec<Expr>,
    flux_neg: Vec<Expr>,
}

/// One graph node per period; periods are linked in a cycle.
pub fn build_gas(inst: &GasInstance, periods: usize) -> Result<(OptiGraph, GasStats), InstanceError> {
    if periods < 2 {
        return Err(InstanceError::InvalidHorizon(periods));
    }
    if inst.segments == 0 {
        return Err(InstanceError::InvalidSegments);
    }
    let net = inst.discretize(inst.segments)?;
    let index = inst.junction_index();
    let mut g = OptiGraph::new();
    let nodes: Vec<NodeId> = (0..periods).map(|_| g.add_node()).collect();
    for t in 0..periods {
        let a = nodes[t];
        let b = nodes[(t + 1) % periods];
        if !g.graph().has_edge(a.0, b.0) {
            g.add_edge(a, b)?;
        }
    }

    let mut vars: Vec<PeriodVars> = Vec::with_capacity(periods);
    for (t, &node) in nodes.iter().enumerate() {
        let mut rho = Vec::new();
        for (name, lo, hi) in &net.junctions {
            rho.push(Expr::var(g.add_variable(node, format!("rho[{name}]"), *lo, *hi, None)?));
        }
        let mut flux_avg = Vec::new();
        let mut flux_neg = Vec::new();
        for s in &net.segments {
            let inf = f64::INFINITY;
            flux_avg.push(Expr::var(g.add_variable(node, format!("phi_avg[{}]", s.name), -inf, inf, Some(0.3))?));
            flux_neg.push(Expr::var(g.add_variable(node, format!("phi_neg[{}]", s.name), -inf, inf, Some(0.0))?));
        }

        // junction net outflow terms, filled below
        let mut outflow: Vec<Vec<Expr>> = vec![Vec::new(); net.junctions.len()];
        for (k, s) in net.segments.iter().enumerate() {
            outflow[s.from].push(s.area * (&flux_avg[k] - &flux_neg[k]));
            outflow[s.to].push(-s.area * (&flux_avg[k] + &flux_neg[k]));
        }

        let mut power_terms = Vec::new();
        for (c, &(i, j)) in inst.compressors.iter().zip(&net.compressors) {
            let f = Expr::var(g.add_variable(node, format!("flow[{}]", c.name), -c.flow_max, c.flow_max, Some(0.5 * c.flow_max))?);
            let ratio_start = (c.ratio_min + c.ratio_max) / 2.0;
            let alpha = Expr::var(g.add_variable(node, format!("ratio[{}]", c.name), c.ratio_min, c.ratio_max, Some(ratio_start))?);
            let p_start = inst.w_a * 0.5 * c.flow_max * (ratio_start.powf(inst.kappa) - 1.0);
            let power = Expr::var(g.add_variable(
                node,
                format!("power[{}]", c.name),
                f64::NEG_INFINITY,
                c.power_max,
                Some(p_start.min(0.5 * c.power_max)),
            )?);
            outflow[i].push(f.clone());
            outflow[j].push(-&f);
            let id = g.add_constraint(node, &f * (&rho[i] - &rho[j]), Sense::Le, 0.0)?;
            tag(&mut g, id, "direction", &c.name, t);
            let id = g.add_constraint(node, &rho[j] - &alpha * &rho[i], Sense::Eq, 0.0)?;
            tag(&mut g, id, "compression_ratio", &c.name, t);
            let boost = (inst.kappa * alpha.ln()).exp() - 1.0;
            let id = g.add_constraint(node, &power - inst.w_a * (&f * boost), Sense::Eq, 0.0)?;
            tag(&mut g, id, "compressor_power", &c.name, t);
            power_terms.push(power);
        }

        let mut objective = Vec::new();
        if !power_terms.is_empty() {
            objective.push(inst.gamma * Expr::sum(power_terms));
        }
        for r in &inst.receipts {
            let i = GasInstance::lookup(&index, &r.junction)?;
            let s = Expr::var(g.add_variable(node, format!("supply[{}]", r.name), 0.0, r.max, Some(0.5 * r.max))?);
            outflow[i].push(-&s);
            objective.push(cyclic(&r.price, t) * &s);
        }
        for d in &inst.deliveries {
            let i = GasInstance::lookup(&index, &d.junction)?;
            let dv = Expr::var(g.add_variable(node, format!("demand[{}]", d.name), 0.0, d.max, Some(0.5 * d.max))?);
            outflow[i].push(dv.clone());
            objective.push(-cyclic(&d.price, t) * &dv);
        }
        if !objective.is_empty() {
            g.add_objective_term(node, Expr::sum(objective))?;
        }

        for (i, terms) in outflow.into_iter().enumerate() {
            if terms.is_empty() {
                continue;
            }
            let id = g.add_constraint(node, Expr::sum(terms), Sense::Eq, 0.0)?;
            tag(&mut g, id, "mass_balance", &net.junctions[i].0, t);
        }
        for (k, s) in net.segments.iter().enumerate() {
            let e = rho[s.from].square() - rho[s.to].square() - s.resistance * flux_avg[k].signed_square();
            let id = g.add_constraint(node, e, Sense::Eq, 0.0)?;
            tag(&mut g, id, "momentum", &s.name, t);
        }
        vars.push(PeriodVars { rho, flux_neg });
    }

    for t in 0..periods {
        let prev = (t + periods - 1) % periods;
        for (k, s) in net.segments.iter().enumerate() {
            let (cur, old) = (&vars[t], &vars[prev]);
            let drho = &cur.rho[s.from] - &old.rho[s.from] + &cur.rho[s.to] - &old.rho[s.to];
            let e = (s.length / inst.dt) * drho + 4.0 * &cur.flux_neg[k];
            let id = g.add_link_constraint(nodes[t], e, 0.0)?;
            tag(&mut g, id, "line_pack", &s.name, t);
        }
    }

    let stats = GasStats {
        periods,
        junctions: net.junctions.len(),
        pipelines: net.segments.len(),
        compressors: net.compressors.len(),
    };
    Ok((g, stats))
}

/// Residual of the momentum equation from raw values.
pub fn momentum_residual(rho_in: f64, rho_out: f64, flux: f64, resistance: f64) -> f64 {
    rho_in * rho_in - rho_out * rho_out - resistance * flux * flux.abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{gas_reference, tag_family};
    use crate::ipm::{solve, IpmOptions, SolveStatus};
    use crate::kkt::{assemble, PrimalDualPoint};
    use crate::nlp::NlpProblem;
    use rand::{Rng, SeedableRng};

    fn two_junctions() -> GasInstance {
        let junction = |name: &str| Junction {
            name: name.into(),
            rho_min: 0.6,
            rho_max: 1.4,
        };
        let transfer = |name: &str, at: &str, price: f64| Transfer {
            name: name.into(),
            junction: at.into(),
            max: 1.0,
            price: vec![price],
        };
        GasInstance {
            junctions: vec![junction("a"), junction("b")],
            pipes: vec![Pipe {
                name: "p".into(),
                from: "a".into(),
                to: "b".into(),
                length: 2.0,
                diameter: 0.5,
                friction: 0.1,
                area: 1.0,
            }],
            compressors: vec![],
            receipts: vec![transfer("r", "a", 1.0)],
            deliveries: vec![transfer("d", "b", 2.0)],
            gamma: 0.2,
            w_a: 10.0,
            kappa: 0.2857,
            dt: 1.0,
            segments: 1,
        }
    }

    #[test]
    fn hand_count_two_periods() {
        // per period: 2 densities, 2 fluxes, supply, demand; 2 mass balances,
        // 1 momentum, 1 line-pack link
        let (g, stats) = build_gas(&two_junctions(), 2).unwrap();
        assert_eq!(g.num_variables(), 12);
        assert_eq!(g.num_constraints(), 8);
        assert_eq!(g.num_edges(), 1);
        assert_eq!((stats.junctions, stats.pipelines, stats.compressors), (2, 1, 0));
        let nlp = g.flatten().unwrap();
        assert_eq!((nlp.num_variables(), nlp.num_constraints()), (12, 8));
    }

    #[test]
    fn momentum_rows_match_independent_residual() {
        let inst = gas_reference();
        let (g, _) = build_gas(&inst, 3).unwrap();
        let nlp = g.flatten().unwrap();
        let col = |name: &str, node: usize| {
            (0..nlp.num_variables())
                .find(|&j| nlp.column_node(j) == node && nlp.column_name(j) == name)
                .unwrap()
        };
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let x: Vec<f64> = (0..nlp.num_variables())
            .map(|j| match nlp.column_name(j).starts_with("ratio") {
                true => 1.2,
                false => rng.random_range(-1.5..1.5),
            })
            .collect();
        let mut c = vec![0.0; nlp.num_constraints()];
        nlp.constraints(&x, &mut c).unwrap();
        let pipe = &inst.pipes[2];
        let resistance = pipe.friction * (pipe.length / inst.segments as f64) / pipe.diameter;
        let mut checked = 0;
        for row in 0..nlp.num_constraints() {
            let tag = nlp.row_tag(row);
            if tag_family(tag) != "momentum" || !tag.contains("p3#") {
                continue;
            }
            let node = nlp.row_node(row);
            let k: usize = tag["momentum[p3#".len()..tag.find('@').unwrap()].parse().unwrap();
            let from = if k == 1 { "rho[j2]".to_string() } else { format!("rho[p3.{}]", k - 1) };
            let to = if k == inst.segments { "rho[j5]".to_string() } else { format!("rho[p3.{k}]") };
            let flux = x[col(&format!("phi_avg[p3#{k}]"), node)];
            let expected = momentum_residual(x[col(&from, node)], x[col(&to, node)], flux, resistance);
            assert!((c[row] - expected).abs() <= 1e-12, "{tag}: {} vs {expected}", c[row]);
            checked += 1;
        }
        assert_eq!(checked, 3 * inst.segments);
    }

    #[test]
    fn kkt_pattern_couples_only_neighbouring_periods() {
        let periods = 5;
        let (g, _) = build_gas(&gas_reference(), periods).unwrap();
        let nlp = g.flatten().unwrap();
        let (n, m) = (nlp.num_variables(), nlp.num_constraints());
        let x = nlp.initial_point();
        let point = PrimalDualPoint {
            lambda: vec![0.5; m],
            z_l: nlp.lower_bounds().iter().map(|l| if l.is_finite() { 1.0 } else { 0.0 }).collect(),
            z_u: nlp.upper_bounds().iter().map(|u| if u.is_finite() { 1.0 } else { 0.0 }).collect(),
            x,
        };
        let sys = assemble(&nlp, &point, 0.1, 0.0, 1e-8).unwrap();
        assert_eq!(sys.matrix.dim(), n + m);
        let mut owner = vec![usize::MAX; n + m];
        for (node, idx) in nlp.structure().unwrap().node_indices.iter().enumerate() {
            for &i in idx {
                owner[i] = node;
            }
        }
        let mut corner = false;
        for (i, j, _) in sys.matrix.entries() {
            assert!(i >= j);
            let (a, b) = (owner[i], owner[j]);
            let gap = a.abs_diff(b);
            assert!(gap <= 1 || gap == periods - 1, "entry ({i},{j}) couples nodes {a} and {b}");
            corner |= gap == periods - 1;
        }
        assert!(corner, "periodic closure block missing");
    }

    #[test]
    fn bundled_fixture_solves() {
        let (g, _) = build_gas(&gas_reference(), 4).unwrap();
        let sol = solve(&g.flatten().unwrap(), &IpmOptions::default()).unwrap();
        assert_eq!(sol.report.status, SolveStatus::Optimal);
        assert!(sol.report.kkt_error <= 1e-8);
    }
}
