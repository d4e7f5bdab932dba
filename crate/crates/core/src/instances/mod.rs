//! Desk-scale generators for a transient gas network and a multi-period AC
//! power flow with storage, plus the bundled fixture files.

pub mod fixture;
pub mod gas;
pub mod power;

use thiserror::Error;

use crate::model::{ConstraintId, ModelError, OptiGraph};
pub use fixture::{load_fixture, parse_fixture, write_fixture, Instance, ParseError};
pub use gas::{build_gas, GasInstance, GasStats};
pub use power::{build_power, PowerInstance, PowerStats};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InstanceError {
    #[error("horizon must have at least 2 periods, got {0}")]
    InvalidHorizon(usize),
    #[error("pipes need at least one segment")]
    InvalidSegments,
    #[error("unknown junction {0:?}")]
    UnknownJunction(String),
    #[error("unknown bus {0}")]
    UnknownBus(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Equation families emitted by the gas generator.
pub const GAS_EQUATIONS: &[&str] = &[
    "mass_balance",
    "momentum",
    "line_pack",
    "direction",
    "compression_ratio",
    "compressor_power",
];

/// Equation families emitted by the power generator.
pub const POWER_EQUATIONS: &[&str] = &[
    "reference_angle",
    "power_balance",
    "branch_flow",
    "thermal_limit",
    "angle_difference",
    "storage_dynamics",
    "storage_power",
    "storage_apparent_limit",
];

/// Tags are `family[name@period]` with 1-based periods.
pub(crate) fn tag(g: &mut OptiGraph, id: ConstraintId, family: &str, name: &str, t: usize) {
    g.set_tag(id, format!("{family}[{name}@{}]", t + 1));
}

/// Equation family of a constraint tag.
pub fn tag_family(tag: &str) -> &str {
    tag.split('[').next().unwrap_or(tag)
}

const GAS_REFERENCE: &str = include_str!("../../data/gas_reference.json");
const POWER_CASE14: &str = include_str!("../../data/power_case14.json");

/// Bundled gas network: 6 junctions, 4 pipes, 2 compressors.
pub fn gas_reference() -> GasInstance {
    match parse_fixture(GAS_REFERENCE) {
        Ok(Instance::Gas(g)) => g,
        other => panic!("bundled gas fixture is invalid: {other:?}"),
    }
}

/// Bundled 14-bus network with one storage unit.
pub fn power_case14() -> PowerInstance {
    match parse_fixture(POWER_CASE14) {
        Ok(Instance::Power(p)) => p,
        other => panic!("bundled power fixture is invalid: {other:?}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ConstraintKind;
    use std::collections::BTreeSet;

    fn families(g: &OptiGraph) -> BTreeSet<String> {
        g.constraints()
            .iter()
            .map(|c| tag_family(&c.tag).to_string())
            .collect()
    }

    #[test]
    fn gas_reference_counts() {
        let inst = gas_reference();
        assert_eq!(inst.junctions.len(), 6);
        assert_eq!(inst.pipes.len(), 4);
        assert_eq!(inst.compressors.len(), 2);
        let (g, stats) = build_gas(&inst, 24).unwrap();
        assert_eq!(stats.pipelines, 32);
        assert_eq!(stats.junctions, 34);
        assert!(g.graph().is_cycle());
        assert_eq!(g.num_nodes(), 24);
    }

    #[test]
    fn gas_tags_cover_every_equation() {
        let (g, _) = build_gas(&gas_reference(), 3).unwrap();
        let fams = families(&g);
        let expected: BTreeSet<String> = GAS_EQUATIONS.iter().map(|s| s.to_string()).collect();
        assert_eq!(fams, expected);
        for c in g.constraints() {
            let link = tag_family(&c.tag) == "line_pack";
            assert_eq!(c.kind == ConstraintKind::Link, link, "{}", c.tag);
        }
    }

    #[test]
    fn power_case14_counts() {
        let inst = power_case14();
        let (g, stats) = build_power(&inst, 2).unwrap();
        assert_eq!(
            (stats.buses, stats.generators, stats.branches, stats.storage),
            (14, 5, 20, 1)
        );
        assert_eq!(g.num_edges(), 1);
        let fams = families(&g);
        let expected: BTreeSet<String> = POWER_EQUATIONS.iter().map(|s| s.to_string()).collect();
        assert_eq!(fams, expected);
    }

    #[test]
    fn horizons_below_two_are_rejected() {
        assert_eq!(build_gas(&gas_reference(), 1).unwrap_err(), InstanceError::InvalidHorizon(1));
        assert_eq!(build_power(&power_case14(), 0).unwrap_err(), InstanceError::InvalidHorizon(0));
    }
}
