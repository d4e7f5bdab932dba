//! Instance files: JSON with a `format`/`version` header and exactly one of
//! the `gas` or `power` sections.
//!
//! ```json
//! { "format": "graphnlp-instance", "version": 1, "gas": { ... } }
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::gas::GasInstance;
use super::power::PowerInstance;
use crate::partition::Graph;

pub const FORMAT: &str = "graphnlp-instance";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Gas(GasInstance),
    Power(PowerInstance),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureFile {
    format: String,
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gas: Option<GasInstance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    power: Option<PowerInstance>,
}

/// Location and reason of an invalid instance file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: Option<usize>,
    pub column: Option<usize>,
    /// Dotted path of the offending field, such as `gas.pipes[2].length`.
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, "line {l}, column {c}: ")?;
        }
        if let Some(field) = &self.field {
            write!(f, "{field}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ParseError {}

impl ParseError {
    fn field(field: String, message: impl Into<String>) -> Self {
        ParseError {
            line: None,
            column: None,
            field: Some(field),
            message: message.into(),
        }
    }
}

pub fn load_fixture(path: impl AsRef<Path>) -> Result<Instance, ParseError> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| ParseError {
        line: None,
        column: None,
        field: None,
        message: format!("{}: {e}", path.as_ref().display()),
    })?;
    parse_fixture(&text)
}

pub fn parse_fixture(text: &str) -> Result<Instance, ParseError> {
    let file: FixtureFile = serde_json::from_str(text).map_err(|e| ParseError {
        line: Some(e.line()),
        column: Some(e.column()),
        field: None,
        message: e.to_string(),
    })?;
    if file.format != FORMAT {
        return Err(ParseError::field("format".into(), format!("expected {FORMAT:?}")));
    }
    if file.version != VERSION {
        return Err(ParseError::field("version".into(), format!("unsupported version {}", file.version)));
    }
    let inst = match (file.gas, file.power) {
        (Some(g), None) => Instance::Gas(g),
        (None, Some(p)) => Instance::Power(p),
        _ => {
            return Err(ParseError::field(
                "gas|power".into(),
                "exactly one instance section is required",
            ))
        }
    };
    validate(&inst)?;
    Ok(inst)
}

pub fn write_fixture(inst: &Instance) -> String {
    let (gas, power) = match inst {
        Instance::Gas(g) => (Some(g.clone()), None),
        Instance::Power(p) => (None, Some(p.clone())),
    };
    let file = FixtureFile {
        format: FORMAT.into(),
        version: VERSION,
        gas,
        power,
    };
    let mut s = serde_json::to_string_pretty(&file).expect("instance serializes");
    s.push('\n');
    s
}

struct Checker {
    prefix: &'static str,
}

impl Checker {
    fn positive(&self, path: impl fmt::Display, v: f64) -> Result<(), ParseError> {
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(ParseError::field(format!("{}.{path}", self.prefix), format!("must be positive, got {v}")))
        }
    }

    fn nonnegative(&self, path: impl fmt::Display, v: f64) -> Result<(), ParseError> {
        if v.is_finite() && v >= 0.0 {
            Ok(())
        } else {
            Err(ParseError::field(format!("{}.{path}", self.prefix), format!("must be nonnegative, got {v}")))
        }
    }

    fn ordered(&self, path: impl fmt::Display, lo: f64, hi: f64) -> Result<(), ParseError> {
        if lo.is_finite() && hi.is_finite() && lo <= hi {
            Ok(())
        } else {
            Err(ParseError::field(format!("{}.{path}", self.prefix), format!("empty range [{lo}, {hi}]")))
        }
    }

    fn fail(&self, path: impl fmt::Display, msg: impl Into<String>) -> ParseError {
        ParseError::field(format!("{}.{path}", self.prefix), msg)
    }
}

pub fn validate(inst: &Instance) -> Result<(), ParseError> {
    match inst {
        Instance::Gas(g) => validate_gas(g),
        Instance::Power(p) => validate_power(p),
    }
}

fn validate_gas(g: &GasInstance) -> Result<(), ParseError> {
    let ck = Checker { prefix: "gas" };
    if g.junctions.is_empty() {
        return Err(ck.fail("junctions", "at least one junction is required"));
    }
    let mut index = BTreeMap::new();
    for (k, j) in g.junctions.iter().enumerate() {
        ck.positive(format_args!("junctions[{k}].rho_min"), j.rho_min)?;
        ck.ordered(format_args!("junctions[{k}]"), j.rho_min, j.rho_max)?;
        if index.insert(j.name.as_str(), k).is_some() {
            return Err(ck.fail(format_args!("junctions[{k}].name"), format!("duplicate name {:?}", j.name)));
        }
    }
    let find = |path: String, name: &str| -> Result<usize, ParseError> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| ParseError::field(format!("gas.{path}"), format!("unknown junction {name:?}")))
    };
    let mut graph = Graph::new(g.junctions.len());
    for (k, p) in g.pipes.iter().enumerate() {
        ck.positive(format_args!("pipes[{k}].length"), p.length)?;
        ck.positive(format_args!("pipes[{k}].diameter"), p.diameter)?;
        ck.positive(format_args!("pipes[{k}].friction"), p.friction)?;
        ck.positive(format_args!("pipes[{k}].area"), p.area)?;
        let a = find(format!("pipes[{k}].from"), &p.from)?;
        let b = find(format!("pipes[{k}].to"), &p.to)?;
        if a == b {
            return Err(ck.fail(format_args!("pipes[{k}]"), "pipe endpoints coincide"));
        }
        graph.add_edge(a, b);
    }
    for (k, c) in g.compressors.iter().enumerate() {
        ck.positive(format_args!("compressors[{k}].power_max"), c.power_max)?;
        ck.positive(format_args!("compressors[{k}].flow_max"), c.flow_max)?;
        ck.positive(format_args!("compressors[{k}].ratio_min"), c.ratio_min)?;
        ck.ordered(format_args!("compressors[{k}].ratio_min"), c.ratio_min, c.ratio_max)?;
        let a = find(format!("compressors[{k}].from"), &c.from)?;
        let b = find(format!("compressors[{k}].to"), &c.to)?;
        if a == b {
            return Err(ck.fail(format_args!("compressors[{k}]"), "compressor endpoints coincide"));
        }
        graph.add_edge(a, b);
    }
    for (label, list) in [("receipts", &g.receipts), ("deliveries", &g.deliveries)] {
        let mut names = HashSet::new();
        for (k, t) in list.iter().enumerate() {
            find(format!("{label}[{k}].junction"), &t.junction)?;
            ck.positive(format_args!("{label}[{k}].max"), t.max)?;
            if t.price.is_empty() {
                return Err(ck.fail(format_args!("{label}[{k}].price"), "price series is empty"));
            }
            for (s, &v) in t.price.iter().enumerate() {
                ck.nonnegative(format_args!("{label}[{k}].price[{s}]"), v)?;
            }
            if !names.insert(t.name.as_str()) {
                return Err(ck.fail(format_args!("{label}[{k}].name"), format!("duplicate name {:?}", t.name)));
            }
        }
    }
    ck.nonnegative("gamma", g.gamma)?;
    ck.positive("w_a", g.w_a)?;
    ck.positive("kappa", g.kappa)?;
    ck.positive("dt", g.dt)?;
    if g.segments == 0 {
        return Err(ck.fail("segments", "must be at least 1"));
    }
    if !graph.is_connected() {
        return Err(ck.fail("pipes", "network is not connected"));
    }
    Ok(())
}

fn validate_power(p: &PowerInstance) -> Result<(), ParseError> {
    let ck = Checker { prefix: "power" };
    if p.buses.is_empty() {
        return Err(ck.fail("buses", "at least one bus is required"));
    }
    let mut ids = BTreeMap::new();
    for (k, b) in p.buses.iter().enumerate() {
        ck.positive(format_args!("buses[{k}].vmin"), b.vmin)?;
        ck.ordered(format_args!("buses[{k}]"), b.vmin, b.vmax)?;
        if !(b.pd.is_finite() && b.qd.is_finite()) {
            return Err(ck.fail(format_args!("buses[{k}]"), "loads must be finite"));
        }
        if ids.insert(b.id, k).is_some() {
            return Err(ck.fail(format_args!("buses[{k}].id"), format!("duplicate bus id {}", b.id)));
        }
    }
    if p.buses.iter().filter(|b| b.reference).count() != 1 {
        return Err(ck.fail("buses", "exactly one reference bus is required"));
    }
    let find = |path: String, id: usize| -> Result<usize, ParseError> {
        ids.get(&id)
            .copied()
            .ok_or_else(|| ParseError::field(format!("power.{path}"), format!("unknown bus {id}")))
    };
    for (k, g) in p.generators.iter().enumerate() {
        find(format!("generators[{k}].bus"), g.bus)?;
        ck.ordered(format_args!("generators[{k}].pmin"), g.pmin, g.pmax)?;
        ck.ordered(format_args!("generators[{k}].qmin"), g.qmin, g.qmax)?;
        ck.nonnegative(format_args!("generators[{k}].c2"), g.c2)?;
    }
    let mut graph = Graph::new(p.buses.len());
    for (k, br) in p.branches.iter().enumerate() {
        let a = find(format!("branches[{k}].from"), br.from)?;
        let b = find(format!("branches[{k}].to"), br.to)?;
        if a == b {
            return Err(ck.fail(format_args!("branches[{k}]"), "branch endpoints coincide"));
        }
        ck.nonnegative(format_args!("branches[{k}].r"), br.r)?;
        if !(br.x.is_finite() && br.r * br.r + br.x * br.x > 0.0) {
            return Err(ck.fail(format_args!("branches[{k}].x"), "impedance must be nonzero"));
        }
        ck.nonnegative(format_args!("branches[{k}].b"), br.b)?;
        ck.nonnegative(format_args!("branches[{k}].tap"), br.tap)?;
        ck.positive(format_args!("branches[{k}].rate"), br.rate)?;
        ck.ordered(format_args!("branches[{k}].angmin"), br.angmin, br.angmax)?;
        graph.add_edge(a, b);
    }
    if !graph.is_connected() {
        return Err(ck.fail("branches", "network is not connected"));
    }
    for (k, s) in p.storage.iter().enumerate() {
        find(format!("storage[{k}].bus"), s.bus)?;
        ck.positive(format_args!("storage[{k}].energy_max"), s.energy_max)?;
        ck.ordered(format_args!("storage[{k}].energy_init"), 0.0, s.energy_init)?;
        ck.ordered(format_args!("storage[{k}].energy_init"), s.energy_init, s.energy_max)?;
        ck.positive(format_args!("storage[{k}].charge_max"), s.charge_max)?;
        ck.positive(format_args!("storage[{k}].discharge_max"), s.discharge_max)?;
        ck.positive(format_args!("storage[{k}].apparent_max"), s.apparent_max)?;
        for (name, eta) in [("eta_charge", s.eta_charge), ("eta_discharge", s.eta_discharge)] {
            ck.positive(format_args!("storage[{k}].{name}"), eta)?;
            ck.ordered(format_args!("storage[{k}].{name}"), eta, 1.0)?;
        }
        ck.nonnegative(format_args!("storage[{k}].loss"), s.loss)?;
    }
    if p.load_profile.is_empty() {
        return Err(ck.fail("load_profile", "profile is empty"));
    }
    for (k, &v) in p.load_profile.iter().enumerate() {
        ck.nonnegative(format_args!("load_profile[{k}]"), v)?;
    }
    ck.positive("dt", p.dt)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{gas_reference, power_case14};

    #[test]
    fn round_trip() {
        for inst in [Instance::Gas(gas_reference()), Instance::Power(power_case14())] {
            let text = write_fixture(&inst);
            let back = parse_fixture(&text).unwrap();
            assert_eq!(back, inst);
            assert_eq!(write_fixture(&back), text);
        }
    }

    #[test]
    fn negative_pipe_length() {
        let mut g = gas_reference();
        g.pipes[2].length = -1.0;
        let err = parse_fixture(&write_fixture(&Instance::Gas(g))).unwrap_err();
        assert_eq!(err.field.as_deref(), Some("gas.pipes[2].length"));
    }

    #[test]
    fn syntax_errors_carry_line() {
        let err = parse_fixture("{\n  \"format\": \"graphnlp-instance\",\n  \"version\": 1,\n  \"gas\": [}\n").unwrap_err();
        assert_eq!(err.line, Some(4));
    }

    #[test]
    fn type_errors_carry_line() {
        let mut text = write_fixture(&Instance::Gas(gas_reference()));
        text = text.replacen("\"segments\": 8", "\"segments\": \"eight\"", 1);
        let err = parse_fixture(&text).unwrap_err();
        let line = text.lines().position(|l| l.contains("eight")).unwrap() + 1;
        assert_eq!(err.line, Some(line));
    }

    #[test]
    fn disconnected_network() {
        let mut g = gas_reference();
        g.compressors.clear();
        let err = parse_fixture(&write_fixture(&Instance::Gas(g))).unwrap_err();
        assert!(err.field.unwrap().starts_with("gas."));
    }

    #[test]
    fn unknown_reference() {
        let mut p = power_case14();
        p.generators[0].bus = 99;
        let err = parse_fixture(&write_fixture(&Instance::Power(p))).unwrap_err();
        assert_eq!(err.field.as_deref(), Some("power.generators[0].bus"));
    }
}
