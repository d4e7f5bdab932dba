//! Multi-period AC optimal power flow with storage, polar voltages.
//!
//! Branch `(i, j)` with series admittance `g + jb = 1/(r + jx)`, total charging
//! `b_c` split evenly between the ends, and tap ratio `τ`; with `δ = θ_i − θ_j`:
//!
//! ```text
//! p_ij =  g v_i²/τ² − (v_i v_j/τ)(g cos δ + b sin δ)
//! q_ij = −(b + b_c/2) v_i²/τ² − (v_i v_j/τ)(g sin δ − b cos δ)
//! p_ji =  g v_j² − (v_i v_j/τ)(g cos δ − b sin δ)
//! q_ji = −(b + b_c/2) v_j² + (v_i v_j/τ)(g sin δ + b cos δ)
//! ```
//!
//! Storage: `e_t − e_{t−1} = (η_c sc_t − sd_t/η_d) Δt` links consecutive
//! periods; the first period uses `e_init`. The injection satisfies
//! `ps + sc − sd = loss` and `qs = sqc`.

use serde::{Deserialize, Serialize};

use super::{tag, InstanceError};
use crate::expr::Expr;
use crate::model::{NodeId, OptiGraph, Sense};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub vmin: f64,
    pub vmax: f64,
    pub pd: f64,
    pub qd: f64,
    #[serde(default)]
    pub reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub pmin: f64,
    pub pmax: f64,
    pub qmin: f64,
    pub qmax: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    pub b: f64,
    pub tap: f64,
    pub rate: f64,
    pub angmin: f64,
    pub angmax: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Storage {
    pub bus: usize,
    pub energy_max: f64,
    pub energy_init: f64,
    pub charge_max: f64,
    pub discharge_max: f64,
    pub apparent_max: f64,
    pub eta_charge: f64,
    pub eta_discharge: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerInstance {
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
    pub storage: Vec<Storage>,
    /// Cyclic per-period multiplier on every load.
    pub load_profile: Vec<f64>,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PowerStats {
    pub periods: usize,
    pub buses: usize,
    pub generators: usize,
    pub branches: usize,
    pub storage: usize,
}

impl PowerInstance {
    fn bus_index(&self, id: usize) -> Result<usize, InstanceError> {
        self.buses
            .iter()
            .position(|b| b.id == id)
            .ok_or(InstanceError::UnknownBus(id))
    }
}

struct BranchFlows {
    p_fr: Expr,
    q_fr: Expr,
    p_to: Expr,
    q_to: Expr,
}

fn branch_flows(br: &Branch, vi: &Expr, vj: &Expr, ti: &Expr, tj: &Expr) -> BranchFlows {
    let z2 = br.r * br.r + br.x * br.x;
    let (g, b) = (br.r / z2, -br.x / z2);
    let bc = br.b / 2.0;
    let tau = if br.tap > 0.0 { br.tap } else { 1.0 };
    let delta = ti - tj;
    let (cd, sd) = (delta.cos(), delta.sin());
    let vv = vi * vj * (1.0 / tau);
    BranchFlows {
        p_fr: (g / (tau * tau)) * vi.square() - &vv * (g * &cd + b * &sd),
        q_fr: (-(b + bc) / (tau * tau)) * vi.square() - &vv * (g * &sd - b * &cd),
        p_to: g * vj.square() - &vv * (g * &cd - b * &sd),
        q_to: (-(b + bc)) * vj.square() + &vv * (g * &sd + b * &cd),
    }
}

/// One graph node per period; consecutive periods are linked by storage
/// dynamics, so the problem graph is a path.
pub fn build_power(inst: &PowerInstance, periods: usize) -> Result<(OptiGraph, PowerStats), InstanceError> {
    if periods < 2 {
        return Err(InstanceError::InvalidHorizon(periods));
    }
    let inf = f64::INFINITY;
    let mut g = OptiGraph::new();
    let nodes: Vec<NodeId> = (0..periods).map(|_| g.add_node()).collect();
    for t in 1..periods {
        g.add_edge(nodes[t - 1], nodes[t])?;
    }
    let gen_bus: Vec<usize> = inst
        .generators
        .iter()
        .map(|gn| inst.bus_index(gn.bus))
        .collect::<Result<_, _>>()?;
    let branch_bus: Vec<(usize, usize)> = inst
        .branches
        .iter()
        .map(|br| Ok((inst.bus_index(br.from)?, inst.bus_index(br.to)?)))
        .collect::<Result<_, InstanceError>>()?;
    let storage_bus: Vec<usize> = inst
        .storage
        .iter()
        .map(|s| inst.bus_index(s.bus))
        .collect::<Result<_, _>>()?;

    let mut energy: Vec<Vec<Expr>> = Vec::with_capacity(periods);
    let mut rates: Vec<Vec<(Expr, Expr)>> = Vec::with_capacity(periods);
    for (t, &node) in nodes.iter().enumerate() {
        let load = inst.load_profile[t % inst.load_profile.len()];
        let nb = inst.buses.len();
        let mut vm = Vec::with_capacity(nb);
        let mut va = Vec::with_capacity(nb);
        for bus in &inst.buses {
            vm.push(Expr::var(g.add_variable(node, format!("vm[{}]", bus.id), bus.vmin, bus.vmax, Some(1.0))?));
            va.push(Expr::var(g.add_variable(node, format!("va[{}]", bus.id), -inf, inf, Some(0.0))?));
        }
        for (i, bus) in inst.buses.iter().enumerate() {
            if bus.reference {
                let id = g.add_constraint(node, va[i].clone(), Sense::Eq, 0.0)?;
                tag(&mut g, id, "reference_angle", &bus.id.to_string(), t);
            }
        }

        let mut p_inj: Vec<Vec<Expr>> = vec![Vec::new(); nb];
        let mut q_inj: Vec<Vec<Expr>> = vec![Vec::new(); nb];
        let mut cost = Vec::new();
        for (k, (gn, &i)) in inst.generators.iter().zip(&gen_bus).enumerate() {
            let pg = Expr::var(g.add_variable(node, format!("pg[{}]", k + 1), gn.pmin, gn.pmax, None)?);
            let qg = Expr::var(g.add_variable(node, format!("qg[{}]", k + 1), gn.qmin, gn.qmax, None)?);
            cost.push(gn.c0 + gn.c1 * &pg + gn.c2 * pg.square());
            p_inj[i].push(pg);
            q_inj[i].push(qg);
        }

        let mut p_out: Vec<Vec<Expr>> = vec![Vec::new(); nb];
        let mut q_out: Vec<Vec<Expr>> = vec![Vec::new(); nb];
        for (l, (br, &(i, j))) in inst.branches.iter().zip(&branch_bus).enumerate() {
            let name = format!("{}", l + 1);
            let flows = branch_flows(br, &vm[i], &vm[j], &va[i], &va[j]);
            let flow_var = |label: &str, e: Expr, g: &mut OptiGraph| -> Result<Expr, InstanceError> {
                let v = Expr::var(g.add_variable(node, format!("{label}[{name}]"), -inf, inf, Some(0.0))?);
                let id = g.add_constraint(node, &v - e, Sense::Eq, 0.0)?;
                tag(g, id, "branch_flow", &format!("{label},{name}"), t);
                Ok(v)
            };
            let p_fr = flow_var("p_fr", flows.p_fr, &mut g)?;
            let q_fr = flow_var("q_fr", flows.q_fr, &mut g)?;
            let p_to = flow_var("p_to", flows.p_to, &mut g)?;
            let q_to = flow_var("q_to", flows.q_to, &mut g)?;
            let cap = br.rate * br.rate;
            let id = g.add_constraint(node, p_fr.square() + q_fr.square(), Sense::Le, cap)?;
            tag(&mut g, id, "thermal_limit", &format!("fr,{name}"), t);
            let id = g.add_constraint(node, p_to.square() + q_to.square(), Sense::Le, cap)?;
            tag(&mut g, id, "thermal_limit", &format!("to,{name}"), t);
            let id = g.add_constraint(node, &va[i] - &va[j], Sense::Le, br.angmax)?;
            tag(&mut g, id, "angle_difference", &format!("max,{name}"), t);
            let id = g.add_constraint(node, &va[i] - &va[j], Sense::Ge, br.angmin)?;
            tag(&mut g, id, "angle_difference", &format!("min,{name}"), t);
            p_out[i].push(p_fr);
            q_out[i].push(q_fr);
            p_out[j].push(p_to);
            q_out[j].push(q_to);
        }

        let mut e_t = Vec::new();
        let mut r_t = Vec::new();
        for (k, (st, &i)) in inst.storage.iter().zip(&storage_bus).enumerate() {
            let name = format!("{}", k + 1);
            let e = Expr::var(g.add_variable(node, format!("energy[{name}]"), 0.0, st.energy_max, Some(st.energy_init))?);
            let sc = Expr::var(g.add_variable(node, format!("charge[{name}]"), 0.0, st.charge_max, None)?);
            let sd = Expr::var(g.add_variable(node, format!("discharge[{name}]"), 0.0, st.discharge_max, None)?);
            let sqc = Expr::var(g.add_variable(node, format!("reactive_slack[{name}]"), -inf, inf, Some(0.0))?);
            let ps = Expr::var(g.add_variable(node, format!("ps[{name}]"), -inf, inf, Some(0.0))?);
            let qs = Expr::var(g.add_variable(node, format!("qs[{name}]"), -inf, inf, Some(0.0))?);
            let id = g.add_constraint(node, &ps + &sc - &sd, Sense::Eq, st.loss)?;
            tag(&mut g, id, "storage_power", &format!("re,{name}"), t);
            let id = g.add_constraint(node, &qs - &sqc, Sense::Eq, 0.0)?;
            tag(&mut g, id, "storage_power", &format!("im,{name}"), t);
            let id = g.add_constraint(node, ps.square() + qs.square(), Sense::Le, st.apparent_max * st.apparent_max)?;
            tag(&mut g, id, "storage_apparent_limit", &name, t);
            p_inj[i].push(ps);
            q_inj[i].push(qs);
            e_t.push(e);
            r_t.push((sc, sd));
        }

        for (i, bus) in inst.buses.iter().enumerate() {
            let bal = |inj: &mut Vec<Expr>, out: &mut Vec<Expr>, demand: f64| {
                let mut terms = std::mem::take(inj);
                terms.extend(std::mem::take(out).into_iter().map(|e| -e));
                terms.push(Expr::constant(-demand * load));
                Expr::sum(terms)
            };
            let e = bal(&mut p_inj[i], &mut p_out[i], bus.pd);
            let id = g.add_constraint(node, e, Sense::Eq, 0.0)?;
            tag(&mut g, id, "power_balance", &format!("p,{}", bus.id), t);
            let e = bal(&mut q_inj[i], &mut q_out[i], bus.qd);
            let id = g.add_constraint(node, e, Sense::Eq, 0.0)?;
            tag(&mut g, id, "power_balance", &format!("q,{}", bus.id), t);
        }
        if !cost.is_empty() {
            g.add_objective_term(node, Expr::sum(cost))?;
        }
        energy.push(e_t);
        rates.push(r_t);
    }

    for t in 0..periods {
        for (k, st) in inst.storage.iter().enumerate() {
            let (sc, sd) = &rates[t][k];
            let inflow = (st.eta_charge * inst.dt) * sc - (inst.dt / st.eta_discharge) * sd;
            let name = format!("{}", k + 1);
            if t == 0 {
                let id = g.add_constraint(nodes[0], &energy[0][k] - inflow, Sense::Eq, st.energy_init)?;
                tag(&mut g, id, "storage_dynamics", &name, t);
            } else {
                let e = &energy[t][k] - &energy[t - 1][k] - inflow;
                let id = g.add_link_constraint(nodes[t], e, 0.0)?;
                tag(&mut g, id, "storage_dynamics", &name, t);
            }
        }
    }

    let stats = PowerStats {
        periods,
        buses: inst.buses.len(),
        generators: inst.generators.len(),
        branches: inst.branches.len(),
        storage: inst.storage.len(),
    };
    Ok((g, stats))
}
