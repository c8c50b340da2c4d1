//! System description: loading, defaults, validation.
//!
//! A configuration is one JSON document. Load profiles are inline arrays or
//! a sibling CSV (`"loads": {"csv": "loads.csv"}`) with header
//! `t,electric_mw,heat_mw` and `t` counting from 1. Optional keys that were
//! filled with defaults are listed in [`SystemConfig::defaults_applied`].

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::carbon::CarbonPolicy;
use crate::devices::{ElectricStorage, GasCogenUnit, GasNetwork, HeatStorage, NuclearCogenUnit, P2GUnit, ThermalUnit};
use crate::dispatch::Mode;
use crate::milp::SolveLimits;
use crate::uncertainty::HourlyUncertainty;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    #[serde(rename = "T")]
    pub t: usize,
    pub dt_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LoadProfile {
    pub electric: Vec<f64>,
    pub heat: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct LoadRow {
    t: usize,
    electric_mw: f64,
    heat_mw: f64,
}

impl LoadProfile {
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self, String> {
        let mut out = LoadProfile::default();
        for (k, row) in csv::Reader::from_reader(reader).deserialize::<LoadRow>().enumerate() {
            let row = row.map_err(|e| e.to_string())?;
            if row.t != k + 1 {
                return Err(format!("row {} has t = {}, expected {}", k + 1, row.t, k + 1));
            }
            out.electric.push(row.electric_mw);
            out.heat.push(row.heat_mw);
        }
        Ok(out)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,electric_mw,heat_mw")?;
        for (t, (e, h)) in self.electric.iter().zip(&self.heat).enumerate() {
            writeln!(out, "{},{e},{h}", t + 1)?;
        }
        Ok(())
    }
}

fn default_time_limit() -> f64 {
    SolveLimits::default().time_limit_s
}

fn default_gap() -> f64 {
    SolveLimits::default().mip_gap
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    #[serde(default = "default_time_limit")]
    pub time_limit_s: f64,
    #[serde(default = "default_gap")]
    pub mip_gap: f64,
    /// Upper bound on concurrently running solves in sweeps and comparisons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
    /// Adds ordering and mixing cuts over the reserve indicators.
    #[serde(default = "enabled")]
    pub dst_cuts: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            time_limit_s: default_time_limit(),
            mip_gap: default_gap(),
            parallelism: None,
            dst_cuts: true,
        }
    }
}

impl SolverSettings {
    pub fn limits(&self) -> SolveLimits {
        SolveLimits {
            time_limit_s: self.time_limit_s,
            mip_gap: self.mip_gap,
        }
    }
}

fn enabled() -> bool {
    true
}

fn all_enabled() -> [bool; 3] {
    [true; 3]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemConfig {
    pub horizon: Horizon,
    pub thermal: Vec<ThermalUnit>,
    pub gc: Vec<GasCogenUnit>,
    pub np: Vec<NuclearCogenUnit>,
    pub p2g: P2GUnit,
    pub ess: ElectricStorage,
    pub hss: HeatStorage,
    pub gas: GasNetwork,
    pub carbon: CarbonPolicy,
    pub loads: LoadProfile,
    pub uncertainty: Vec<HourlyUncertainty>,
    pub alpha: f64,
    pub step_l: f64,
    pub mode: Mode,
    #[serde(default)]
    pub solver: SolverSettings,
    /// Whether the thermal fleet may run, per mode 1, 2, 3. Disabled units
    /// produce nothing and cost nothing.
    #[serde(default = "all_enabled")]
    pub tp_enabled: [bool; 3],
    #[serde(skip)]
    pub defaults_applied: Vec<String>,
}

/// Equality compares the system description, not how it was loaded.
impl PartialEq for SystemConfig {
    fn eq(&self, o: &Self) -> bool {
        self.horizon == o.horizon
            && self.thermal == o.thermal
            && self.gc == o.gc
            && self.np == o.np
            && self.p2g == o.p2g
            && self.ess == o.ess
            && self.hss == o.hss
            && self.gas == o.gas
            && self.carbon == o.carbon
            && self.loads == o.loads
            && self.uncertainty == o.uncertainty
            && self.alpha == o.alpha
            && self.step_l == o.step_l
            && self.mode == o.mode
            && self.solver == o.solver
            && self.tp_enabled == o.tp_enabled
    }
}

impl SystemConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        Self {
            mode,
            ..self.clone()
        }
    }

    pub fn tp_enabled_in(&self, mode: Mode) -> bool {
        self.tp_enabled[mode.index()]
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed document: {0}")]
    Parse(String),
    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("bad load CSV: {0}")]
    LoadsCsv(String),
    #[error("unit violation: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Units(Vec<Violation>),
}

/// One failed invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Machine-readable identifier such as `ess.capacity_order`.
    pub code: String,
    /// Document path of the offending item.
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}: {}", self.code, self.path, self.message)
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<SystemConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    load_config_str(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Parses a document whose relative CSV references resolve against `base_dir`.
pub fn load_config_str(text: &str, base_dir: &Path) -> Result<SystemConfig, ConfigError> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    inline_load_csv(&mut doc, base_dir)?;
    let defaults = missing_optional_keys(&doc);
    let mut config: SystemConfig = serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().to_string();
        ConfigError::Schema {
            path: qualify_missing_field(&path, &message),
            message,
        }
    })?;
    config.defaults_applied = defaults;
    let units: Vec<Violation> = validate(&config)
        .into_iter()
        .filter(|v| v.code.ends_with(".negative"))
        .collect();
    if units.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError::Units(units))
    }
}

fn qualify_missing_field(path: &str, message: &str) -> String {
    let field = message
        .strip_prefix("missing field `")
        .and_then(|rest| rest.split('`').next());
    match (field, path) {
        (Some(f), "." | "") => f.to_string(),
        (Some(f), p) => format!("{p}.{f}"),
        (None, p) => p.to_string(),
    }
}

fn inline_load_csv(doc: &mut Value, base_dir: &Path) -> Result<(), ConfigError> {
    let Some(file) = doc.pointer("/loads/csv").and_then(Value::as_str).map(str::to_owned) else {
        return Ok(());
    };
    let path = base_dir.join(&file);
    let text = fs::read(&path).map_err(|source| ConfigError::Io { path, source })?;
    let profile = LoadProfile::read_csv(text.as_slice()).map_err(ConfigError::LoadsCsv)?;
    doc["loads"] = serde_json::to_value(profile).expect("profile serializes");
    Ok(())
}

fn missing_optional_keys(doc: &Value) -> Vec<String> {
    let mut out = Vec::new();
    let mut check = |pointer: &str, description: &str| {
        if doc.pointer(pointer).is_none() {
            out.push(description.to_string());
        }
    };
    check("/solver/time_limit_s", "solver.time_limit_s = 120");
    check("/solver/mip_gap", "solver.mip_gap = 0.0001");
    check("/solver/dst_cuts", "solver.dst_cuts = true");
    check("/tp_enabled", "tp_enabled = [true, true, true]");
    check("/ess/strict_paper_efficiency", "ess.strict_paper_efficiency = true");
    check("/carbon/f", "carbon.f = 0");
    check("/carbon/pricing_mode", "carbon.pricing_mode = stepped_literal");
    check("/carbon/k_fixed", "carbon.k_fixed = carbon.k2");
    if let Some(units) = doc.get("thermal").and_then(Value::as_array) {
        for (i, unit) in units.iter().enumerate() {
            if unit.get("segments").is_none() {
                out.push(format!("thermal[{i}].segments = 8"));
            }
        }
    }
    out
}

struct Report(Vec<Violation>);

impl Report {
    fn require(&mut self, ok: bool, code: &str, path: impl Into<String>, message: impl Into<String>) {
        if !ok {
            self.0.push(Violation {
                code: code.to_string(),
                path: path.into(),
                message: message.into(),
            });
        }
    }

    fn nonneg(&mut self, family: &str, path: &str, fields: &[(&str, f64)]) {
        for (name, value) in fields {
            self.require(
                *value >= 0.0,
                &format!("{family}.negative"),
                format!("{path}.{name}"),
                format!("must be non-negative, got {value}"),
            );
        }
    }
}

/// Every invariant violation of `config`; empty when it is usable.
pub fn validate(config: &SystemConfig) -> Vec<Violation> {
    let mut r = Report(Vec::new());
    let t = config.horizon.t;
    r.require(t >= 1, "horizon.periods", "horizon.T", "at least one period is required");
    r.require(
        config.horizon.dt_hours > 0.0,
        "horizon.dt",
        "horizon.dt_hours",
        format!("must be positive, got {}", config.horizon.dt_hours),
    );
    r.require(
        (0.0..=1.0).contains(&config.alpha),
        "alpha.range",
        "alpha",
        format!("must lie in [0, 1], got {}", config.alpha),
    );
    r.require(
        config.step_l > 0.0,
        "step_l.positive",
        "step_l",
        format!("must be positive, got {}", config.step_l),
    );

    for (i, u) in config.thermal.iter().enumerate() {
        let p = format!("thermal[{i}]");
        let fields = [("p_min", u.p_min), ("r_d", u.r_d), ("r_u", u.r_u), ("a", u.a), ("w", u.w), ("b_th", u.b_th)];
        r.nonneg("thermal", &p, &fields);
        r.require(u.p_min <= u.p_max, "thermal.capacity_order", &p, "p_min exceeds p_max");
        r.require(u.segments >= 1, "thermal.segments", format!("{p}.segments"), "at least one segment");
    }
    for (i, u) in config.gc.iter().enumerate() {
        let p = format!("gc[{i}]");
        let fields = [("pe_min", u.pe_min), ("ph_max", u.ph_max), ("r_d_gc", u.r_d_gc), ("r_u_gc", u.r_u_gc), ("delta", u.delta)];
        r.nonneg("gc", &p, &fields);
        r.require(u.pe_min <= u.pe_max, "gc.capacity_order", &p, "pe_min exceeds pe_max");
        r.require(
            (0.0..1.0).contains(&u.eta_loss),
            "gc.loss_range",
            format!("{p}.eta_loss"),
            "must lie in [0, 1)",
        );
        r.require(u.c_g > 0.0, "gc.ratio", format!("{p}.c_g"), "must be positive");
    }
    for (i, u) in config.np.iter().enumerate() {
        let p = format!("np[{i}]");
        r.nonneg("np", &p, &[("pe_min", u.pe_min), ("ph_max", u.ph_max), ("c_v", u.c_v), ("beta", u.beta)]);
        r.require(u.pe_min <= u.pe_max, "np.capacity_order", &p, "pe_min exceeds pe_max");
        r.require(
            (u.pe_max - u.c_v * u.ph_max - u.pe_min).abs() <= 1e-6,
            "np.segment_endpoints",
            &p,
            format!(
                "pe_max - c_v*ph_max = {} differs from pe_min = {}",
                u.pe_max - u.c_v * u.ph_max,
                u.pe_min
            ),
        );
    }
    let g = &config.p2g;
    r.nonneg("p2g", "p2g", &[("p_max_p2g", g.p_max_p2g), ("r_u_p2g", g.r_u_p2g), ("r_d_p2g", g.r_d_p2g)]);
    r.require(
        g.eta_p2g > 0.0 && g.eta_p2g <= 1.0,
        "p2g.efficiency",
        "p2g.eta_p2g",
        "must lie in (0, 1]",
    );

    let e = &config.ess;
    let fields = [("s_min", e.s_min), ("p_d_max", e.p_d_max), ("p_c_max", e.p_c_max), ("g1", e.g1), ("g2", e.g2), ("lambda_res", e.lambda_res)];
    r.nonneg("ess", "ess", &fields);
    r.require(
        e.s_min <= e.s_0 && e.s_0 <= e.s_max,
        "ess.capacity_order",
        "ess",
        format!("need s_min <= s_0 <= s_max, got {} / {} / {}", e.s_min, e.s_0, e.s_max),
    );
    r.require(e.eta_e > 0.0 && e.eta_e <= 1.0, "ess.efficiency", "ess.eta_e", "must lie in (0, 1]");

    let h = &config.hss;
    r.nonneg("hss", "hss", &[("c_0", h.c_0), ("ph_c_max", h.ph_c_max)]);
    r.require(
        h.c_0 <= h.c_max,
        "hss.capacity_order",
        "hss",
        format!("need 0 <= c_0 <= c_max, got {} / {}", h.c_0, h.c_max),
    );

    let gas = &config.gas;
    r.require(gas.hhv > 0.0, "gas.positive", "gas.hhv", "must be positive");
    r.require(gas.epsilon > 0.0, "gas.positive", "gas.epsilon", "must be positive");
    r.nonneg("gas", "gas", &[("mu_gc", gas.mu_gc), ("b_ng", gas.b_ng)]);

    let c = &config.carbon;
    r.nonneg("carbon", "carbon", &[("f", c.f), ("k1", c.k1), ("k2", c.k2), ("k3", c.k3)]);
    if let Some(k) = c.k_fixed {
        r.nonneg("carbon", "carbon", &[("k_fixed", k)]);
    }
    r.require(
        c.k1 <= c.k2 && c.k2 <= c.k3,
        "carbon.price_order",
        "carbon",
        format!("need k1 <= k2 <= k3, got {} / {} / {}", c.k1, c.k2, c.k3),
    );
    r.require(
        c.e1 <= c.e2,
        "carbon.threshold_order",
        "carbon",
        format!("need e1 <= e2, got {} / {}", c.e1, c.e2),
    );

    let l = &config.loads;
    r.require(
        l.electric.len() == t && l.heat.len() == t,
        "loads.length",
        "loads",
        format!("need {t} entries, got {} electric and {} heat", l.electric.len(), l.heat.len()),
    );
    for (name, series) in [("electric", &l.electric), ("heat", &l.heat)] {
        for (k, v) in series.iter().enumerate() {
            r.require(*v >= 0.0, "loads.negative", format!("loads.{name}[{k}]"), format!("negative load {v}"));
        }
    }
    r.require(
        config.uncertainty.len() == t,
        "uncertainty.length",
        "uncertainty",
        format!("need {t} entries, got {}", config.uncertainty.len()),
    );
    for (k, u) in config.uncertainty.iter().enumerate() {
        for m in u.wind.problems() {
            r.require(false, "uncertainty.wind", format!("uncertainty[{k}].wind"), m);
        }
        for m in u.solar.problems() {
            r.require(false, "uncertainty.solar", format!("uncertainty[{k}].solar"), m);
        }
    }

    let s = &config.solver;
    r.require(s.time_limit_s > 0.0, "solver.time_limit", "solver.time_limit_s", "must be positive");
    r.require(s.mip_gap >= 0.0, "solver.gap", "solver.mip_gap", "must be non-negative");
    r.require(s.parallelism != Some(0), "solver.parallelism", "solver.parallelism", "must be at least 1");
    r.0
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const EXAMPLE: &str = include_str!("../../../data/example.json");

    pub(crate) fn example() -> SystemConfig {
        load_config(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/example.json")).unwrap()
    }

    #[test]
    fn example_loads_with_table_values() {
        let c = example();
        let u = &c.thermal[0];
        assert_eq!(
            (u.p_max, u.p_min, u.r_d, u.r_u, u.a, u.b, u.c, u.w, u.b_th),
            (40.0, 12.0, 20.0, 20.0, 0.18, 237.25, 113.02, 40.0, 0.97)
        );
        assert_eq!(c.alpha, 0.9);
        assert!(validate(&c).is_empty(), "{:?}", validate(&c));
    }

    #[test]
    fn missing_key_is_named() {
        let mut doc: Value = serde_json::from_str(EXAMPLE).unwrap();
        doc["ess"].as_object_mut().unwrap().remove("s_min");
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
        match load_config_str(&doc.to_string(), &dir) {
            Err(ConfigError::Schema { path, .. }) => assert_eq!(path, "ess.s_min"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_and_negative_documents() {
        assert!(matches!(load_config_str("{ nope", Path::new(".")), Err(ConfigError::Parse(_))));
        let mut doc: Value = serde_json::from_str(EXAMPLE).unwrap();
        doc["ess"]["p_c_max"] = (-5.0).into();
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
        assert!(matches!(load_config_str(&doc.to_string(), &dir), Err(ConfigError::Units(_))));
        doc["ess"]["p_c_max"] = "fifty".into();
        assert!(matches!(load_config_str(&doc.to_string(), &dir), Err(ConfigError::Schema { .. })));
    }

    #[test]
    fn swapped_storage_bounds_give_one_violation() {
        let mut c = example();
        (c.ess.s_min, c.ess.s_max) = (200.0, 32.0);
        let v = validate(&c);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].code, "ess.capacity_order");
    }

    #[test]
    fn inverted_thresholds_are_reported() {
        let mut c = example();
        (c.carbon.e1, c.carbon.e2) = (3000.0, 1500.0);
        let codes: Vec<_> = validate(&c).into_iter().map(|v| v.code).collect();
        assert_eq!(codes, vec!["carbon.threshold_order"]);
    }

    #[test]
    fn round_trip_and_provenance() {
        let c = example();
        let dir = Path::new(".");
        let again = load_config_str(&c.to_json(), dir).unwrap();
        assert_eq!(again, c);
        assert!(c.defaults_applied.iter().any(|d| d.starts_with("carbon.k_fixed")));
        assert!(validate(&c) == validate(&c));
    }

    #[test]
    fn csv_loads_are_inlined() {
        let dir = tempfile::tempdir().unwrap();
        let c = example();
        c.loads.write_csv(fs::File::create(dir.path().join("loads.csv")).unwrap()).unwrap();
        let mut doc: Value = serde_json::from_str(&c.to_json()).unwrap();
        doc["loads"] = serde_json::json!({ "csv": "loads.csv" });
        fs::write(dir.path().join("c.json"), doc.to_string()).unwrap();
        assert_eq!(load_config(dir.path().join("c.json")).unwrap().loads, c.loads);

        let bad = "t,electric_mw,heat_mw\n2,1,1\n";
        assert!(LoadProfile::read_csv(bad.as_bytes()).is_err());
    }
}
