//! The day-ahead scheduling MILP.
//!
//! Variables are named `<device>_<quantity>_<unit>_t<t>` (unit index only for
//! fleets) and rows `<family>_<unit>_t<t>`, both counting from 1. Energy
//! quantities are per period; every per-period cost is charged for `dt` hours.

mod schedule;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::carbon::{embed_carbon_cost, quota};
use crate::config::{validate, SystemConfig, Violation};
use crate::devices::gc_volume_per_mwh;
use crate::dst::{attach_reserve_chance, strengthen_indicators, ChanceSpec, DstError, IndicatorBlock};
use crate::milp::{add_piecewise_quadratic, LinExpr, LinearModel, ModelError, Relation, VarId};
use crate::uncertainty::{period_sequences, ProbSequence, SequenceError};

pub use schedule::{
    extract_schedule, Audit, CostBreakdown, DispatchSchedule, ExtractError, Extraction, ScheduleCsvError, AUDIT_TOL,
};

/// How the nuclear units take part in the dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Mode {
    /// Thermal and gas units only.
    NoNuclear = 1,
    /// Nuclear units at full electric output, no heat.
    Nuclear = 2,
    /// Nuclear units on their cogeneration segment.
    NuclearCogeneration = 3,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::NoNuclear, Mode::Nuclear, Mode::NuclearCogeneration];

    pub fn number(self) -> u8 {
        self as u8
    }

    /// Zero-based position, for per-mode tables.
    pub fn index(self) -> usize {
        self as usize - 1
    }
}

impl TryFrom<u8> for Mode {
    type Error = String;
    fn try_from(n: u8) -> Result<Self, String> {
        match n {
            1 => Ok(Mode::NoNuclear),
            2 => Ok(Mode::Nuclear),
            3 => Ok(Mode::NuclearCogeneration),
            _ => Err(format!("mode must be 1, 2 or 3, got {n}")),
        }
    }
}

impl From<Mode> for u8 {
    fn from(m: Mode) -> u8 {
        m.number()
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.trim().parse::<u8>().map_err(|e| e.to_string())?.try_into()
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("invalid configuration: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("infeasible by construction in `{family}` at t={t}: {detail}")]
    Infeasible { family: String, t: usize, detail: String },
    #[error("{0} expectations for a horizon of {1}")]
    Horizon(usize, usize),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Dst(#[from] DstError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Variable handles; fleet entries are indexed `[unit][t]`, the rest `[t]`.
#[derive(Debug, Clone, Default)]
pub struct DispatchVars {
    pub tp_p: Vec<Vec<VarId>>,
    pub tp_r: Vec<Vec<VarId>>,
    pub gc_pe: Vec<Vec<VarId>>,
    pub gc_ph: Vec<Vec<VarId>>,
    pub gc_r: Vec<Vec<VarId>>,
    pub np_pe: Vec<Vec<VarId>>,
    pub np_ph: Vec<Vec<VarId>>,
    pub p2g: Vec<VarId>,
    pub ess_c: Vec<VarId>,
    pub ess_d: Vec<VarId>,
    pub ess_r: Vec<VarId>,
    /// Stored energy at the end of each period.
    pub ess_s: Vec<VarId>,
    /// HSS rate, positive when releasing.
    pub hss_q: Vec<VarId>,
    pub hss_c: Vec<VarId>,
    pub re: Vec<VarId>,
}

/// The objective split into its five components.
#[derive(Debug, Clone, Default)]
pub struct CostTerms {
    pub c1: LinExpr,
    pub c2: LinExpr,
    pub c3: LinExpr,
    pub c4: f64,
    pub c5: LinExpr,
}

/// A built scheduling model with the handles needed to read it back.
#[derive(Debug, Clone)]
pub struct DispatchModel {
    pub model: LinearModel,
    pub mode: Mode,
    pub vars: DispatchVars,
    /// Total upward reserve of each period.
    pub reserves: Vec<LinExpr>,
    pub costs: CostTerms,
    pub e_net: LinExpr,
    pub expectations: Vec<f64>,
    pub indicators: Option<IndicatorBlock>,
}

/// Combined renewable sequences and their expectations for every period of `config`.
pub fn prepare_sequences(config: &SystemConfig) -> Result<(Vec<ProbSequence>, Vec<f64>), SequenceError> {
    period_sequences(&config.uncertainty, config.step_l)
}

/// Full model: base dispatch plus the discretized chance constraint on reserve.
pub fn build(config: &SystemConfig, sequences: &[ProbSequence], expectations: &[f64]) -> Result<DispatchModel, BuildError> {
    let mut dm = build_base(config, expectations)?;
    if config.alpha > 0.0 {
        let spec = ChanceSpec::new(config.alpha, sequences.to_vec(), expectations.to_vec())?;
        let block = attach_reserve_chance(&mut dm.model, &spec, &dm.reserves)?;
        if config.solver.dst_cuts {
            strengthen_indicators(&mut dm.model, &spec, &block, &dm.reserves)?;
        }
        dm.indicators = Some(block);
    }
    Ok(dm)
}

/// [`build`] with the sequences derived from the configuration.
pub fn build_from_config(config: &SystemConfig) -> Result<DispatchModel, BuildError> {
    let (seqs, means) = prepare_sequences(config)?;
    build(config, &seqs, &means)
}

fn ramp(
    m: &mut LinearModel,
    family: &str,
    x: &[VarId],
    down: f64,
    up: f64,
) -> Result<(), ModelError> {
    for t in 1..x.len() {
        let step = x[t] - x[t - 1];
        m.add_constraint(format!("{family}_dn_t{}", t + 1), step.clone(), Relation::Ge, -down)?;
        m.add_constraint(format!("{family}_up_t{}", t + 1), step, Relation::Le, up)?;
    }
    Ok(())
}

fn precheck(config: &SystemConfig, mode: Mode, expectations: &[f64]) -> Result<(), BuildError> {
    let tp_on = config.tp_enabled_in(mode);
    let tp_min: f64 = if tp_on { config.thermal.iter().map(|u| u.p_min).sum() } else { 0.0 };
    let tp_max: f64 = if tp_on { config.thermal.iter().map(|u| u.p_max).sum() } else { 0.0 };
    let gc_min: f64 = config.gc.iter().map(|u| u.pe_min).sum();
    let gc_max: f64 = config.gc.iter().map(|u| u.pe_max).sum();
    let (np_min, np_max, np_heat) = match mode {
        Mode::NoNuclear => (0.0, 0.0, 0.0),
        Mode::Nuclear => {
            let pe: f64 = config.np.iter().map(|u| u.pe_max).sum();
            (pe, pe, 0.0)
        }
        Mode::NuclearCogeneration => (
            config.np.iter().map(|u| u.pe_min).sum(),
            config.np.iter().map(|u| u.pe_max).sum(),
            config.np.iter().map(|u| u.ph_max).sum(),
        ),
    };
    let ess = &config.ess;
    let eta = if ess.strict_paper_efficiency { ess.eta_e } else { 1.0 };
    let heat_max = config.gc.iter().map(|u| u.ph_max).sum::<f64>() + np_heat + config.hss.ph_c_max;
    for t in 0..config.horizon.t {
        let (le, lh) = (config.loads.electric[t], config.loads.heat[t]);
        let supply_max = tp_max + gc_max + np_max + eta * ess.p_d_max + expectations[t];
        if supply_max < le {
            return Err(BuildError::Infeasible {
                family: "ebal".into(),
                t: t + 1,
                detail: format!("electric load {le} MW exceeds the largest supply {supply_max} MW"),
            });
        }
        let supply_min = tp_min + gc_min + np_min - eta * ess.p_c_max - config.p2g.p_max_p2g;
        if supply_min > le {
            return Err(BuildError::Infeasible {
                family: "ebal".into(),
                t: t + 1,
                detail: format!("must-run output {supply_min} MW exceeds the electric load {le} MW plus all sinks"),
            });
        }
        if heat_max < lh {
            return Err(BuildError::Infeasible {
                family: "hbal".into(),
                t: t + 1,
                detail: format!("heat load {lh} MW exceeds the largest heat supply {heat_max} MW"),
            });
        }
    }
    Ok(())
}

/// Dispatch model without any reserve-adequacy requirement.
pub fn build_base(config: &SystemConfig, expectations: &[f64]) -> Result<DispatchModel, BuildError> {
    let violations = validate(config);
    if !violations.is_empty() {
        return Err(BuildError::Invalid(violations));
    }
    let n = config.horizon.t;
    if expectations.len() != n {
        return Err(BuildError::Horizon(expectations.len(), n));
    }
    let mode = config.mode;
    precheck(config, mode, expectations)?;

    let dt = config.horizon.dt_hours;
    let mut m = LinearModel::new();
    let mut v = DispatchVars::default();
    let mut costs = CostTerms::default();
    let mut reserves = vec![LinExpr::new(); n];
    let mut elec = vec![LinExpr::new(); n];
    let mut heat = vec![LinExpr::new(); n];
    // Gas balance in MWh of gas energy: burnt by GC less produced by P2G.
    let mut gas = vec![LinExpr::new(); n];
    let mut emissions = LinExpr::new();

    let tp_on = config.tp_enabled_in(mode);
    for (i, u) in config.thermal.iter().enumerate() {
        let id = i + 1;
        let (mut ps, mut rs) = (Vec::new(), Vec::new());
        for t in 0..n {
            let tl = t + 1;
            let (p, r) = if tp_on {
                (
                    m.continuous(format!("tp_p_{id}_t{tl}"), u.p_min, u.p_max)?,
                    m.continuous(format!("tp_r_{id}_t{tl}"), 0.0, u.p_max - u.p_min)?,
                )
            } else {
                (
                    m.continuous(format!("tp_p_{id}_t{tl}"), 0.0, 0.0)?,
                    m.continuous(format!("tp_r_{id}_t{tl}"), 0.0, 0.0)?,
                )
            };
            if tp_on {
                m.add_constraint(format!("tp_head_{id}_t{tl}"), p + r, Relation::Le, u.p_max)?;
                let pw = add_piecewise_quadratic(&mut m, &format!("tp_fuel_{id}_t{tl}"), p, u.a, u.b, u.c, (u.p_min, u.p_max), u.segments)?;
                costs.c1 += pw.cost * dt;
                costs.c1 += r * (u.w * dt);
            }
            elec[t].add_term(p, 1.0);
            reserves[t].add_term(r, 1.0);
            emissions.add_term(p, u.b_th * dt);
            ps.push(p);
            rs.push(r);
        }
        if tp_on {
            ramp(&mut m, &format!("tp_ramp_{id}"), &ps, u.r_d, u.r_u)?;
        }
        v.tp_p.push(ps);
        v.tp_r.push(rs);
    }

    let gas_net = &config.gas;
    for (i, u) in config.gc.iter().enumerate() {
        let id = i + 1;
        let coef = gc_volume_per_mwh(u, gas_net);
        let per_mwh = gas_net.m3_per_mwh();
        let (mut pes, mut phs, mut rs) = (Vec::new(), Vec::new(), Vec::new());
        for t in 0..n {
            let tl = t + 1;
            let pe = m.continuous(format!("gc_pe_{id}_t{tl}"), u.pe_min, u.pe_max)?;
            let ph = m.continuous(format!("gc_ph_{id}_t{tl}"), 0.0, u.ph_max)?;
            let r = m.continuous(format!("gc_r_{id}_t{tl}"), 0.0, u.pe_max - u.pe_min)?;
            m.add_constraint(format!("gc_head_{id}_t{tl}"), pe + r, Relation::Le, u.pe_max)?;
            let volume = LinExpr::term(pe, coef.electric * dt) + ph * (coef.heat * dt);
            gas[t] += volume.clone() * (1.0 / per_mwh);
            costs.c2 += volume.clone() * (gas_net.mu_gc * gas_net.hhv / 1000.0);
            costs.c2 += r * (u.delta * dt);
            emissions += volume * gas_net.b_ng;
            elec[t].add_term(pe, 1.0);
            heat[t].add_term(ph, 1.0);
            reserves[t].add_term(r, 1.0);
            pes.push(pe);
            phs.push(ph);
            rs.push(r);
        }
        ramp(&mut m, &format!("gc_ramp_{id}"), &pes, u.r_d_gc, u.r_u_gc)?;
        v.gc_pe.push(pes);
        v.gc_ph.push(phs);
        v.gc_r.push(rs);
    }

    for (i, u) in config.np.iter().enumerate() {
        let id = i + 1;
        let (mut pes, mut phs) = (Vec::new(), Vec::new());
        for t in 0..n {
            let tl = t + 1;
            let (pe_bounds, ph_bounds) = match mode {
                Mode::NoNuclear => ((0.0, 0.0), (0.0, 0.0)),
                Mode::Nuclear => ((u.pe_max, u.pe_max), (0.0, 0.0)),
                Mode::NuclearCogeneration => ((u.pe_min, u.pe_max), (0.0, u.ph_max)),
            };
            let pe = m.continuous(format!("np_pe_{id}_t{tl}"), pe_bounds.0, pe_bounds.1)?;
            let ph = m.continuous(format!("np_ph_{id}_t{tl}"), ph_bounds.0, ph_bounds.1)?;
            if mode == Mode::NuclearCogeneration {
                m.add_constraint(format!("np_seg_{id}_t{tl}"), pe + ph * u.c_v, Relation::Eq, u.pe_max)?;
            }
            if mode != Mode::NoNuclear {
                // Equivalent power is pinned at pe_max, so the fuel cost is constant.
                costs.c4 += u.beta * u.pe_max * dt;
            }
            elec[t].add_term(pe, 1.0);
            heat[t].add_term(ph, 1.0);
            pes.push(pe);
            phs.push(ph);
        }
        v.np_pe.push(pes);
        v.np_ph.push(phs);
    }

    let p2g = &config.p2g;
    let ess = &config.ess;
    let hss = &config.hss;
    let eta_grid = if ess.strict_paper_efficiency { ess.eta_e } else { 1.0 };
    for t in 0..n {
        let tl = t + 1;
        let p = m.continuous(format!("p2g_p_t{tl}"), 0.0, p2g.p_max_p2g)?;
        let volume = LinExpr::term(p, p2g.eta_p2g * dt * gas_net.m3_per_mwh());
        gas[t].add_term(p, -p2g.eta_p2g * dt);
        costs.c2 += volume.clone() * -(gas_net.mu_gc * gas_net.hhv / 1000.0);
        emissions += volume * -gas_net.b_ng;
        elec[t].add_term(p, -1.0);
        v.p2g.push(p);

        let c = m.continuous(format!("ess_c_t{tl}"), 0.0, ess.p_c_max)?;
        let d = m.continuous(format!("ess_d_t{tl}"), 0.0, ess.p_d_max)?;
        let r = m.continuous(format!("ess_r_t{tl}"), 0.0, ess.p_d_max)?;
        let s = m.continuous(format!("ess_s_t{tl}"), ess.s_min, ess.s_max)?;
        let prev = if t == 0 { LinExpr::constant(ess.s_0) } else { LinExpr::from(v.ess_s[t - 1]) };
        m.add_constraint(
            format!("ess_dyn_t{tl}"),
            s - prev - c * (ess.eta_e * dt) + d * (ess.eta_e * dt),
            Relation::Eq,
            0.0,
        )?;
        m.add_constraint(format!("ess_res_soc_t{tl}"), r - s * (1.0 / dt), Relation::Le, -ess.s_min / dt)?;
        m.add_constraint(format!("ess_res_pow_t{tl}"), r + d, Relation::Le, ess.p_d_max)?;
        costs.c3 += LinExpr::term(c, ess.g1 * dt) + d * (ess.g2 * dt) + r * (ess.lambda_res * dt);
        elec[t].add_term(d, eta_grid);
        elec[t].add_term(c, -eta_grid);
        reserves[t].add_term(r, 1.0);
        v.ess_c.push(c);
        v.ess_d.push(d);
        v.ess_r.push(r);
        v.ess_s.push(s);

        let q = m.continuous(format!("hss_q_t{tl}"), -hss.ph_c_max, hss.ph_c_max)?;
        let level = m.continuous(format!("hss_c_t{tl}"), 0.0, hss.c_max)?;
        let prev = if t == 0 { LinExpr::constant(hss.c_0) } else { LinExpr::from(v.hss_c[t - 1]) };
        m.add_constraint(format!("hss_dyn_t{tl}"), level - prev + q * dt, Relation::Eq, 0.0)?;
        heat[t].add_term(q, 1.0);
        v.hss_q.push(q);
        v.hss_c.push(level);

        let re = m.continuous(format!("re_p_t{tl}"), 0.0, expectations[t].max(0.0))?;
        elec[t].add_term(re, 1.0);
        v.re.push(re);
    }
    ramp(&mut m, "p2g_ramp", &v.p2g, p2g.r_d_p2g, p2g.r_u_p2g)?;
    m.add_constraint("ess_cyclic", LinExpr::from(v.ess_s[n - 1]), Relation::Eq, ess.s_0)?;
    m.add_constraint("hss_cyclic", LinExpr::from(v.hss_c[n - 1]), Relation::Eq, hss.c_0)?;

    for t in 0..n {
        let tl = t + 1;
        m.add_constraint(format!("ebal_t{tl}"), elec[t].clone(), Relation::Eq, config.loads.electric[t])?;
        m.add_constraint(format!("hbal_t{tl}"), heat[t].clone(), Relation::Eq, config.loads.heat[t])?;
        m.add_constraint(format!("gbal_t{tl}"), gas[t].clone(), Relation::Ge, 0.0)?;
    }

    let e_net = emissions - quota(config.carbon.f, &config.loads, dt);
    costs.c5 = embed_carbon_cost(&mut m, "carbon", &e_net, &config.carbon)?;
    let objective = costs.c1.clone() + costs.c2.clone() + costs.c3.clone() + costs.c4 + costs.c5.clone();
    m.set_objective(objective)?;

    Ok(DispatchModel {
        model: m,
        mode,
        vars: v,
        reserves,
        costs,
        e_net,
        expectations: expectations.to_vec(),
        indicators: None,
    })
}
