//! Device parameters and the closed-form per-device algebra.
//!
//! Everything here is plain arithmetic over the linear device models. The same
//! functions are used to generate MILP coefficients and to re-derive costs,
//! gas volumes and storage trajectories from an extracted schedule, so the
//! post-solve checks never read quantities back from the solver.
//!
//! Units: powers in MW, energies in MWh, gas in m³, calorific values in
//! MJ/m³ and the conversion coefficient ε in MJ/kWh. One MWh is 1000 kWh.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// kWh per MWh, applied before the MJ/kWh conversion coefficient.
pub const KWH_PER_MWH: f64 = 1000.0;

/// Slack allowed when checking an input against its admissible range.
const RANGE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("{quantity} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        quantity: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("{quantity} must be non-negative, got {value}")]
    Negative { quantity: &'static str, value: f64 },
    #[error("dispatch interval must be positive, got {0}")]
    NonPositiveInterval(f64),
}

fn check_range(quantity: &'static str, value: f64, lo: f64, hi: f64) -> Result<(), DeviceError> {
    if value < lo - RANGE_TOL || value > hi + RANGE_TOL || value.is_nan() {
        Err(DeviceError::OutOfRange {
            quantity,
            value,
            lo,
            hi,
        })
    } else {
        Ok(())
    }
}

fn check_nonneg(quantity: &'static str, value: f64) -> Result<(), DeviceError> {
    if value < 0.0 || value.is_nan() {
        Err(DeviceError::Negative { quantity, value })
    } else {
        Ok(())
    }
}

fn check_dt(dt: f64) -> Result<(), DeviceError> {
    if dt > 0.0 {
        Ok(())
    } else {
        Err(DeviceError::NonPositiveInterval(dt))
    }
}

fn default_segments() -> usize {
    8
}

/// Coal-fired thermal unit with a quadratic fuel cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalUnit {
    pub p_min: f64,
    pub p_max: f64,
    pub r_d: f64,
    pub r_u: f64,
    /// ¥/MW²
    pub a: f64,
    /// ¥/MW
    pub b: f64,
    /// ¥
    pub c: f64,
    /// Spinning reserve price, ¥/MW.
    pub w: f64,
    /// Emission intensity, tCO₂/MWh.
    pub b_th: f64,
    /// Chords used to linearize the fuel cost.
    #[serde(default = "default_segments")]
    pub segments: usize,
}

impl ThermalUnit {
    /// Exact fuel cost of one period at output `p`.
    pub fn fuel_cost(&self, p: f64) -> f64 {
        self.a * p * p + self.b * p + self.c
    }

    /// Largest amount by which the chord interpolation over `[p_min, p_max]`
    /// can exceed the exact fuel cost.
    pub fn chord_error_bound(&self) -> f64 {
        let h = (self.p_max - self.p_min) / self.segments.max(1) as f64;
        self.a * h * h / 4.0
    }
}

/// Gas-fired cogeneration unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasCogenUnit {
    pub pe_min: f64,
    pub pe_max: f64,
    pub ph_max: f64,
    pub r_d_gc: f64,
    pub r_u_gc: f64,
    /// Spinning reserve price, ¥/MW.
    pub delta: f64,
    pub eta_loss: f64,
    /// Thermoelectric ratio.
    pub c_g: f64,
}

/// Nuclear unit retrofitted for steam extraction. In cogeneration mode the
/// operating point slides along `pe + c_v·ph = pe_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuclearCogenUnit {
    pub pe_min: f64,
    pub pe_max: f64,
    pub ph_max: f64,
    pub c_v: f64,
    /// Fuel cost per MW of equivalent electric power, ¥/MW.
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P2GUnit {
    pub eta_p2g: f64,
    pub p_max_p2g: f64,
    pub r_u_p2g: f64,
    pub r_d_p2g: f64,
}

fn default_true() -> bool {
    true
}

/// Battery storage. `s_0` is both the initial and the required final energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectricStorage {
    pub s_min: f64,
    pub s_max: f64,
    pub s_0: f64,
    pub p_d_max: f64,
    pub p_c_max: f64,
    pub eta_e: f64,
    /// Charge cost, ¥/MW.
    pub g1: f64,
    /// Discharge cost, ¥/MW.
    pub g2: f64,
    /// Reserve cost, ¥/MW.
    pub lambda_res: f64,
    /// When set, the efficiency is applied both in the storage dynamics and
    /// on the grid side of the electric balance.
    #[serde(default = "default_true")]
    pub strict_paper_efficiency: bool,
}

/// Heat storage tank. `c_0` is both the initial and the required final heat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatStorage {
    pub c_max: f64,
    pub c_0: f64,
    pub ph_c_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasNetwork {
    /// Calorific value, MJ/m³.
    pub hhv: f64,
    /// Energy conversion coefficient, MJ/kWh.
    pub epsilon: f64,
    /// Gas price, ¥/GJ.
    pub mu_gc: f64,
    /// CO₂ per unit volume burnt, t/m³.
    pub b_ng: f64,
}

impl GasNetwork {
    /// m³ of gas carrying one MWh of energy.
    pub fn m3_per_mwh(&self) -> f64 {
        KWH_PER_MWH * self.epsilon / self.hhv
    }

    /// Purchase cost of `volume` m³, ¥.
    pub fn cost_of_volume(&self, volume: f64) -> f64 {
        self.mu_gc * volume * self.hhv / 1000.0
    }
}

/// Electric output of a nuclear cogeneration unit delivering `ph` MW of heat.
pub fn np_electric_power(unit: &NuclearCogenUnit, ph: f64) -> Result<f64, DeviceError> {
    check_range("nuclear heat output", ph, 0.0, unit.ph_max)?;
    Ok(unit.pe_max - unit.c_v * ph)
}

/// Synthetic gas volume produced by running the P2G unit at `p` MW for `dt` hours.
pub fn p2g_gas_volume(unit: &P2GUnit, gas: &GasNetwork, p: f64, dt: f64) -> Result<f64, DeviceError> {
    check_nonneg("P2G power", p)?;
    check_dt(dt)?;
    Ok(unit.eta_p2g * p * dt * gas.m3_per_mwh())
}

/// Gas burnt by a cogeneration unit producing `pe` MW electric and `ph` MW heat.
pub fn gc_gas_volume(
    unit: &GasCogenUnit,
    gas: &GasNetwork,
    pe: f64,
    ph: f64,
    dt: f64,
) -> Result<f64, DeviceError> {
    check_nonneg("GC electric power", pe)?;
    check_nonneg("GC heat power", ph)?;
    check_dt(dt)?;
    Ok(gc_volume_per_mwh(unit, gas).apply(pe, ph) * dt)
}

/// Linear coefficients of the GC gas map, m³ per MWh of electric and of heat output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GcVolumeCoefficients {
    pub electric: f64,
    pub heat: f64,
}

impl GcVolumeCoefficients {
    fn apply(&self, pe: f64, ph: f64) -> f64 {
        self.electric * pe + self.heat * ph
    }
}

pub fn gc_volume_per_mwh(unit: &GasCogenUnit, gas: &GasNetwork) -> GcVolumeCoefficients {
    let heat = gas.m3_per_mwh() / (1.0 - unit.eta_loss);
    GcVolumeCoefficients {
        electric: heat / unit.c_g,
        heat,
    }
}

/// Battery energy after one period of charging at `p_c` and discharging at `p_d`.
pub fn ess_step(ess: &ElectricStorage, s_t: f64, p_c: f64, p_d: f64, dt: f64) -> Result<f64, DeviceError> {
    check_range("ESS charge power", p_c, 0.0, ess.p_c_max)?;
    check_range("ESS discharge power", p_d, 0.0, ess.p_d_max)?;
    check_dt(dt)?;
    Ok(s_t + ess.eta_e * (p_c - p_d) * dt)
}

/// Tank heat after one period at rate `ph_c`; positive rates release heat.
pub fn hss_step(hss: &HeatStorage, c_t: f64, ph_c: f64, dt: f64) -> Result<f64, DeviceError> {
    check_range("HSS rate", ph_c, -hss.ph_c_max, hss.ph_c_max)?;
    check_dt(dt)?;
    Ok(c_t - ph_c * dt)
}
