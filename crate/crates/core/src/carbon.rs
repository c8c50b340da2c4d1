//! Emission accounting and carbon trading cost.
//!
//! The price rule comes in three flavours: the whole-quantity tier price
//! (`SteppedLiteral`), where every tonne is charged at the tier the total
//! falls into; the conventional marginal ladder (`SteppedMarginal`); and a
//! single price (`Fixed`). Net sellers (negative net emissions) are credited
//! at the lowest tier in both stepped modes.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{LoadProfile, SystemConfig};
use crate::dispatch::DispatchSchedule;
use crate::milp::{LinExpr, LinearModel, ModelError, Relation};

/// Gap, in tonnes, separating the open ends of the outer literal tiers from
/// the closed middle tier.
pub const LITERAL_TIER_GAP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PricingMode {
    #[default]
    SteppedLiteral,
    SteppedMarginal,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonPolicy {
    /// Free quota per MWh of load, t/MWh.
    #[serde(default)]
    pub f: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub e1: f64,
    pub e2: f64,
    #[serde(default)]
    pub pricing_mode: PricingMode,
    /// Price used in fixed mode; `None` means `k2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_fixed: Option<f64>,
}

impl CarbonPolicy {
    pub fn fixed_price(&self) -> f64 {
        self.k_fixed.unwrap_or(self.k2)
    }

    pub fn with_mode(&self, mode: PricingMode) -> Self {
        Self {
            pricing_mode: mode,
            ..self.clone()
        }
    }

    /// Fixed-price copy at `price`.
    pub fn fixed_at(&self, price: f64) -> Self {
        Self {
            pricing_mode: PricingMode::Fixed,
            k_fixed: Some(price),
            ..self.clone()
        }
    }

    /// Copy with all three tier prices multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            k1: self.k1 * factor,
            k2: self.k2 * factor,
            k3: self.k3 * factor,
            ..self.clone()
        }
    }

    fn tier_price(&self, e_net: f64) -> f64 {
        if e_net < self.e1 {
            self.k1
        } else if e_net <= self.e2 {
            self.k2
        } else {
            self.k3
        }
    }
}

/// Emission breakdown of a schedule, tonnes, and its trading cost in ¥.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonLedger {
    pub e_th: f64,
    pub e_ng: f64,
    pub e_p2g: f64,
    pub e_r: f64,
    pub e_f: f64,
    pub e_net: f64,
    pub k_applied: f64,
    pub t_c: f64,
}

pub const LEDGER_CSV_HEADER: &str = "e_th,e_ng,e_p2g,e_r,e_f,e_net,k_applied,t_c";

impl CarbonLedger {
    pub fn from_components(e_th: f64, e_ng: f64, e_p2g: f64, e_f: f64, policy: &CarbonPolicy) -> Self {
        let e_r = e_th + e_ng - e_p2g;
        let e_net = e_r - e_f;
        Self {
            e_th,
            e_ng,
            e_p2g,
            e_r,
            e_f,
            e_net,
            k_applied: applied_price(e_net, policy),
            t_c: trading_cost(e_net, policy),
        }
    }

    /// Data row matching [`LEDGER_CSV_HEADER`]; tonnes to 0.001, money to 0.01.
    pub fn csv_row(&self) -> String {
        format!(
            "{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.2},{:.2}",
            self.e_th, self.e_ng, self.e_p2g, self.e_r, self.e_f, self.e_net, self.k_applied, self.t_c
        )
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{LEDGER_CSV_HEADER}")?;
        writeln!(out, "{}", self.csv_row())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CarbonError {
    #[error("schedule does not match the configuration: {0}")]
    Mismatch(String),
}

/// Free allowance: `f` times the electric plus heat energy served.
pub fn quota(f: f64, loads: &LoadProfile, dt: f64) -> f64 {
    let served: f64 = loads.electric.iter().chain(&loads.heat).sum();
    f * served * dt
}

/// Ledger of `schedule` under the configured policy and quota.
pub fn actual_emissions(schedule: &DispatchSchedule, config: &SystemConfig) -> Result<CarbonLedger, CarbonError> {
    let t = config.horizon.t;
    if schedule.periods() != t {
        return Err(CarbonError::Mismatch(format!(
            "{} periods scheduled, horizon is {t}",
            schedule.periods()
        )));
    }
    if schedule.tp.len() != config.thermal.len() {
        return Err(CarbonError::Mismatch(format!(
            "{} thermal units scheduled, {} configured",
            schedule.tp.len(),
            config.thermal.len()
        )));
    }
    let dt = config.horizon.dt_hours;
    let e_th = config
        .thermal
        .iter()
        .zip(&schedule.tp)
        .map(|(unit, p)| unit.b_th * p.iter().sum::<f64>() * dt)
        .sum();
    let e_ng = config.gas.b_ng * schedule.gas_gc.iter().sum::<f64>();
    let e_p2g = config.gas.b_ng * schedule.gas_p2g.iter().sum::<f64>();
    let e_f = quota(config.carbon.f, &config.loads, dt);
    Ok(CarbonLedger::from_components(e_th, e_ng, e_p2g, e_f, &config.carbon))
}

/// Price per tonne applied to `e_net`. In marginal mode this is the price of the last tonne.
pub fn applied_price(e_net: f64, policy: &CarbonPolicy) -> f64 {
    match policy.pricing_mode {
        PricingMode::Fixed => policy.fixed_price(),
        PricingMode::SteppedLiteral | PricingMode::SteppedMarginal => policy.tier_price(e_net),
    }
}

pub fn trading_cost(e_net: f64, policy: &CarbonPolicy) -> f64 {
    match policy.pricing_mode {
        PricingMode::Fixed => policy.fixed_price() * e_net,
        PricingMode::SteppedLiteral => policy.tier_price(e_net) * e_net,
        PricingMode::SteppedMarginal => {
            if e_net < 0.0 {
                return policy.k1 * e_net;
            }
            let (e1, e2) = (policy.e1, policy.e2);
            policy.k1 * e_net.min(e1) + policy.k2 * (e_net - e1).clamp(0.0, e2 - e1) + policy.k3 * (e_net - e2).max(0.0)
        }
    }
}

/// Adds the variables and rows that price `e_net` under `policy` and returns
/// the resulting cost expression. Names are prefixed with `prefix`.
pub fn embed_carbon_cost(
    model: &mut LinearModel,
    prefix: &str,
    e_net: &LinExpr,
    policy: &CarbonPolicy,
) -> Result<LinExpr, ModelError> {
    match policy.pricing_mode {
        PricingMode::Fixed => Ok(e_net.clone() * policy.fixed_price()),
        PricingMode::SteppedLiteral => embed_literal(model, prefix, e_net, policy),
        PricingMode::SteppedMarginal => embed_marginal(model, prefix, e_net, policy),
    }
}

fn embed_literal(
    model: &mut LinearModel,
    prefix: &str,
    e_net: &LinExpr,
    policy: &CarbonPolicy,
) -> Result<LinExpr, ModelError> {
    let (lo, hi) = model.finite_bounds(e_net, "net emissions")?;
    let tiers = [
        (policy.k1, lo, (policy.e1 - LITERAL_TIER_GAP).min(hi)),
        (policy.k2, policy.e1.max(lo), policy.e2.min(hi)),
        (policy.k3, (policy.e2 + LITERAL_TIER_GAP).max(lo), hi),
    ];
    let mut pick = LinExpr::new();
    let mut link = e_net.clone() * -1.0;
    let mut cost = LinExpr::new();
    for (k, &(price, t_lo, t_hi)) in tiers.iter().enumerate() {
        let n = k + 1;
        let y = model.binary(format!("{prefix}_y{n}"))?;
        if t_lo > t_hi {
            // Tier unreachable within the emission bounds.
            model.fix(y, 0.0);
        }
        let (t_lo, t_hi) = if t_lo > t_hi { (0.0, 0.0) } else { (t_lo, t_hi) };
        let e = model.continuous(format!("{prefix}_e{n}"), t_lo.min(0.0), t_hi.max(0.0))?;
        model.add_constraint(format!("{prefix}_tier_lo{n}"), e - y * t_lo, Relation::Ge, 0.0)?;
        model.add_constraint(format!("{prefix}_tier_hi{n}"), e - y * t_hi, Relation::Le, 0.0)?;
        pick.add_term(y, 1.0);
        link.add_term(e, 1.0);
        cost.add_term(e, price);
    }
    model.add_constraint(format!("{prefix}_tier_pick"), pick, Relation::Eq, 1.0)?;
    model.add_constraint(format!("{prefix}_tier_link"), link, Relation::Eq, 0.0)?;
    Ok(cost)
}

fn embed_marginal(
    model: &mut LinearModel,
    prefix: &str,
    e_net: &LinExpr,
    policy: &CarbonPolicy,
) -> Result<LinExpr, ModelError> {
    let (lo, hi) = model.finite_bounds(e_net, "net emissions")?;
    let s1 = model.continuous(format!("{prefix}_s1"), 0.0, policy.e1.max(0.0))?;
    let s2 = model.continuous(format!("{prefix}_s2"), 0.0, (policy.e2 - policy.e1).max(0.0))?;
    let s3 = model.continuous(format!("{prefix}_s3"), 0.0, (hi - policy.e2).max(0.0))?;
    let s_neg = model.continuous(format!("{prefix}_sneg"), 0.0, (-lo).max(0.0))?;
    // Increasing prices make the cheaper segments fill first.
    model.add_constraint(
        format!("{prefix}_fill"),
        s1 + s2 + s3 - s_neg - e_net.clone(),
        Relation::Eq,
        0.0,
    )?;
    Ok(LinExpr::term(s1, policy.k1) + s2 * policy.k2 + s3 * policy.k3 + s_neg * -policy.k1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{solve, HighsBackend, SolveLimits};
    use proptest::prelude::*;

    pub(crate) fn paper_policy(mode: PricingMode) -> CarbonPolicy {
        CarbonPolicy {
            f: 0.0,
            k1: 40.0,
            k2: 120.0,
            k3: 200.0,
            e1: 1500.0,
            e2: 3000.0,
            pricing_mode: mode,
            k_fixed: None,
        }
    }

    #[test]
    fn quota_cases() {
        let flat = LoadProfile {
            electric: vec![100.0; 24],
            heat: vec![50.0; 24],
        };
        assert_eq!(quota(0.0, &flat, 1.0), 0.0);
        assert!((quota(0.5, &flat, 1.0) - 1800.0).abs() < 1e-9);
        assert!((quota(1.0, &flat, 1.0) - 2.0 * quota(0.5, &flat, 1.0)).abs() < 1e-9);
    }

    #[test]
    fn literal_tiers_and_boundaries() {
        let p = paper_policy(PricingMode::SteppedLiteral);
        assert_eq!(applied_price(1000.0, &p), 40.0);
        assert_eq!(applied_price(1500.0, &p), 120.0);
        assert_eq!(applied_price(3000.0, &p), 120.0);
        assert_eq!(applied_price(3500.0, &p), 200.0);
        assert_eq!(trading_cost(1000.0, &p), 40_000.0);
        assert_eq!(trading_cost(-10.0, &p), -400.0);
    }

    #[test]
    fn zero_costs_nothing_in_every_mode() {
        for mode in [PricingMode::SteppedLiteral, PricingMode::SteppedMarginal, PricingMode::Fixed] {
            assert_eq!(trading_cost(0.0, &paper_policy(mode)), 0.0);
        }
    }

    #[test]
    fn marginal_ladder() {
        let p = paper_policy(PricingMode::SteppedMarginal);
        assert_eq!(trading_cost(2000.0, &p), 1500.0 * 40.0 + 500.0 * 120.0);
        assert_eq!(trading_cost(3500.0, &p), 1500.0 * 40.0 + 1500.0 * 120.0 + 500.0 * 200.0);
        assert_eq!(trading_cost(-5.0, &p), -200.0);
    }

    #[test]
    fn fixed_defaults_to_middle_tier() {
        let p = paper_policy(PricingMode::Fixed);
        assert_eq!(p.fixed_price(), 120.0);
        assert_eq!(trading_cost(10.0, &p.fixed_at(30.0)), 300.0);
    }

    #[test]
    fn ledger_identities_and_csv() {
        let p = paper_policy(PricingMode::SteppedLiteral);
        let l = CarbonLedger::from_components(38.8, 10.0, 10.0, 0.0, &p);
        assert!((l.e_r - 38.8).abs() < 1e-12);
        assert_eq!(l.e_net, l.e_r);
        assert_eq!(l.csv_row(), "38.800,10.000,10.000,38.800,0.000,38.800,40.00,1552.00");
        let zero = CarbonLedger::from_components(0.0, 0.0, 0.0, 0.0, &p);
        assert_eq!((zero.e_r, zero.t_c), (0.0, 0.0));
    }

    /// Solves `min cost(e)` with `e` pinned to `value`.
    fn embedded_cost_at(value: f64, policy: &CarbonPolicy) -> f64 {
        let mut m = LinearModel::new();
        let e = m.continuous("e", -500.0, 6000.0).unwrap();
        let cost = embed_carbon_cost(&mut m, "carbon", &e.into(), policy).unwrap();
        m.fix(e, value);
        m.set_objective(cost).unwrap();
        let limits = SolveLimits {
            time_limit_s: 10.0,
            mip_gap: 0.0,
        };
        solve(&m, &HighsBackend::default(), &limits).unwrap().objective_value
    }

    #[test]
    fn literal_embedding_forced_to_2000() {
        let p = paper_policy(PricingMode::SteppedLiteral);
        // Brute force over the three tier choices: only the middle tier admits 2000 t.
        let feasible: Vec<f64> = [(40.0, f64::NEG_INFINITY, 1500.0), (120.0, 1500.0, 3000.0), (200.0, 3000.0, f64::INFINITY)]
            .iter()
            .filter(|(_, lo, hi)| (*lo..=*hi).contains(&2000.0))
            .map(|(k, _, _)| k * 2000.0)
            .collect();
        assert_eq!(feasible, vec![240_000.0]);
        assert!((embedded_cost_at(2000.0, &p) - 240_000.0).abs() < 1e-4);
    }

    #[test]
    fn embeddings_match_post_solve_arithmetic() {
        for mode in [PricingMode::SteppedLiteral, PricingMode::SteppedMarginal, PricingMode::Fixed] {
            let p = paper_policy(mode);
            for e in [-300.0, 0.0, 700.0, 1500.0, 2999.0, 3000.0, 3000.5, 5200.0] {
                let got = embedded_cost_at(e, &p);
                assert!((got - trading_cost(e, &p)).abs() < 1e-4, "{mode:?} at {e}: {got}");
            }
        }
    }

    #[test]
    fn flat_tiers_reduce_to_fixed() {
        let mut p = paper_policy(PricingMode::SteppedLiteral);
        (p.k1, p.k2, p.k3) = (90.0, 90.0, 90.0);
        let fixed = p.fixed_at(90.0);
        for e in [10.0, 1500.0, 4000.0] {
            assert!((embedded_cost_at(e, &p) - embedded_cost_at(e, &fixed)).abs() < 1e-4);
        }
    }

    #[test]
    fn unbounded_emissions_are_rejected() {
        let mut m = LinearModel::new();
        let e = m.continuous("e", 0.0, f64::INFINITY).unwrap();
        let p = paper_policy(PricingMode::SteppedLiteral);
        assert!(matches!(
            embed_carbon_cost(&mut m, "carbon", &e.into(), &p),
            Err(ModelError::UnboundedExpression(_))
        ));
    }

    proptest! {
        #[test]
        fn marginal_is_convex_and_nondecreasing(a in 0.0f64..6000.0, b in 0.0f64..6000.0) {
            let p = paper_policy(PricingMode::SteppedMarginal);
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(trading_cost(lo, &p) <= trading_cost(hi, &p) + 1e-9);
            let mid = 0.5 * (lo + hi);
            prop_assert!(trading_cost(mid, &p) <= 0.5 * (trading_cost(lo, &p) + trading_cost(hi, &p)) + 1e-6);
        }

        #[test]
        fn literal_is_nondecreasing(a in 0.0f64..6000.0, b in 0.0f64..6000.0) {
            let p = paper_policy(PricingMode::SteppedLiteral);
            prop_assert!(trading_cost(a.min(b), &p) <= trading_cost(a.max(b), &p) + 1e-9);
        }
    }
}
