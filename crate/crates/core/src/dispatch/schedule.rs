use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DispatchModel, Mode};
use crate::carbon::{actual_emissions, CarbonError, CarbonLedger};
use crate::config::SystemConfig;
use crate::devices::{ess_step, gc_gas_volume, hss_step, p2g_gas_volume, DeviceError};
use crate::milp::{SolveResult, SolveStatus, VarId};

/// Absolute tolerance of the post-solve audit, MW / MWh.
pub const AUDIT_TOL: f64 = 1e-6;

/// Dispatch decisions of every period. Fleet entries are indexed `[unit][t]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DispatchSchedule {
    pub tp: Vec<Vec<f64>>,
    pub tp_res: Vec<Vec<f64>>,
    pub gc_e: Vec<Vec<f64>>,
    pub gc_h: Vec<Vec<f64>>,
    pub gc_res: Vec<Vec<f64>>,
    pub np_e: Vec<Vec<f64>>,
    pub np_h: Vec<Vec<f64>>,
    pub p2g: Vec<f64>,
    pub ess_c: Vec<f64>,
    pub ess_d: Vec<f64>,
    pub ess_res: Vec<f64>,
    /// Stored energy at the end of each period.
    pub ess_soc: Vec<f64>,
    /// Positive when the tank releases heat.
    pub hss_rate: Vec<f64>,
    pub hss_soc: Vec<f64>,
    pub re_absorbed: Vec<f64>,
    pub re_curtailed: Vec<f64>,
    /// Gas burnt by all GC units, m³ per period.
    pub gas_gc: Vec<f64>,
    pub gas_p2g: Vec<f64>,
    pub gas_buy: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum ScheduleCsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("schedule CSV lacks column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: t = {t}, expected {row}")]
    Period { row: usize, t: String },
    #[error("row {row}, column `{column}`: {value:?} is not a number")]
    Number { row: usize, column: String, value: String },
}

fn fleet_columns(prefix: &str, suffixes: &[&str], units: usize) -> Vec<String> {
    (1..=units)
        .flat_map(|i| suffixes.iter().map(move |s| format!("{prefix}_{i}_{s}")))
        .collect()
}

const SCALAR_COLUMNS: [&str; 12] = [
    "p2g_mw",
    "ess_c_mw",
    "ess_d_mw",
    "ess_res_mw",
    "ess_soc_mwh",
    "hss_rate_mw",
    "hss_soc_mwh",
    "re_absorbed_mw",
    "re_curtailed_mw",
    "gas_gc_m3",
    "gas_p2g_m3",
    "gas_buy_m3",
];

impl DispatchSchedule {
    pub fn periods(&self) -> usize {
        self.p2g.len()
    }

    /// Total upward reserve of each period.
    pub fn total_reserve(&self) -> Vec<f64> {
        (0..self.periods())
            .map(|t| {
                self.tp_res.iter().map(|r| r[t]).sum::<f64>()
                    + self.gc_res.iter().map(|r| r[t]).sum::<f64>()
                    + self.ess_res[t]
            })
            .collect()
    }

    /// Expected renewable output of each period, absorbed plus curtailed.
    pub fn expected_re(&self) -> Vec<f64> {
        self.re_absorbed.iter().zip(&self.re_curtailed).map(|(a, c)| a + c).collect()
    }

    /// Energy delivered by the thermal fleet, MWh.
    pub fn tp_energy(&self, dt: f64) -> f64 {
        self.tp.iter().flatten().sum::<f64>() * dt
    }

    /// Electric energy delivered by the gas cogeneration fleet, MWh.
    pub fn gc_energy(&self, dt: f64) -> f64 {
        self.gc_e.iter().flatten().sum::<f64>() * dt
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend(fleet_columns("tp", &["mw", "res_mw"], self.tp.len()));
        h.extend(fleet_columns("gc", &["e_mw", "h_mw", "res_mw"], self.gc_e.len()));
        h.extend(fleet_columns("np", &["e_mw", "h_mw"], self.np_e.len()));
        h.extend(SCALAR_COLUMNS.iter().map(|s| s.to_string()));
        h
    }

    fn scalars(&self) -> [&Vec<f64>; 12] {
        [
            &self.p2g,
            &self.ess_c,
            &self.ess_d,
            &self.ess_res,
            &self.ess_soc,
            &self.hss_rate,
            &self.hss_soc,
            &self.re_absorbed,
            &self.re_curtailed,
            &self.gas_gc,
            &self.gas_p2g,
            &self.gas_buy,
        ]
    }

    /// One row per period. Values are written at full precision so that a
    /// read-back schedule audits exactly like the original.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ScheduleCsvError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for t in 0..self.periods() {
            let mut row = vec![(t + 1).to_string()];
            for i in 0..self.tp.len() {
                row.extend([self.tp[i][t], self.tp_res[i][t]].map(|x| x.to_string()));
            }
            for i in 0..self.gc_e.len() {
                row.extend([self.gc_e[i][t], self.gc_h[i][t], self.gc_res[i][t]].map(|x| x.to_string()));
            }
            for i in 0..self.np_e.len() {
                row.extend([self.np_e[i][t], self.np_h[i][t]].map(|x| x.to_string()));
            }
            row.extend(self.scalars().iter().map(|s| s[t].to_string()));
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, ScheduleCsvError> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| ScheduleCsvError::MissingColumn(name.to_string()))
        };
        let count = |prefix: &str, suffix: &str| (1..).take_while(|i| col(&format!("{prefix}_{i}_{suffix}")).is_ok()).count();
        let (n_tp, n_gc, n_np) = (count("tp", "mw"), count("gc", "e_mw"), count("np", "e_mw"));
        let t_col = col("t")?;
        let mut s = DispatchSchedule {
            tp: vec![Vec::new(); n_tp],
            tp_res: vec![Vec::new(); n_tp],
            gc_e: vec![Vec::new(); n_gc],
            gc_h: vec![Vec::new(); n_gc],
            gc_res: vec![Vec::new(); n_gc],
            np_e: vec![Vec::new(); n_np],
            np_h: vec![Vec::new(); n_np],
            ..Default::default()
        };
        let mut fleet_cols = Vec::new();
        for i in 1..=n_tp {
            fleet_cols.push((col(&format!("tp_{i}_mw"))?, 0, i - 1));
            fleet_cols.push((col(&format!("tp_{i}_res_mw"))?, 1, i - 1));
        }
        for i in 1..=n_gc {
            fleet_cols.push((col(&format!("gc_{i}_e_mw"))?, 2, i - 1));
            fleet_cols.push((col(&format!("gc_{i}_h_mw"))?, 3, i - 1));
            fleet_cols.push((col(&format!("gc_{i}_res_mw"))?, 4, i - 1));
        }
        for i in 1..=n_np {
            fleet_cols.push((col(&format!("np_{i}_e_mw"))?, 5, i - 1));
            fleet_cols.push((col(&format!("np_{i}_h_mw"))?, 6, i - 1));
        }
        let scalar_cols = SCALAR_COLUMNS.iter().map(|c| col(c)).collect::<Result<Vec<_>, _>>()?;
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = k + 1;
            let field = |c: usize| rec.get(c).unwrap_or("").trim();
            if field(t_col).parse::<usize>().ok() != Some(row) {
                return Err(ScheduleCsvError::Period {
                    row,
                    t: field(t_col).to_string(),
                });
            }
            let num = |c: usize| {
                field(c).parse::<f64>().map_err(|_| ScheduleCsvError::Number {
                    row,
                    column: header[c].clone(),
                    value: field(c).to_string(),
                })
            };
            for &(c, family, unit) in &fleet_cols {
                let x = num(c)?;
                let target = match family {
                    0 => &mut s.tp,
                    1 => &mut s.tp_res,
                    2 => &mut s.gc_e,
                    3 => &mut s.gc_h,
                    4 => &mut s.gc_res,
                    5 => &mut s.np_e,
                    _ => &mut s.np_h,
                };
                target[unit].push(x);
            }
            let values = scalar_cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>, _>>()?;
            let targets = [
                &mut s.p2g,
                &mut s.ess_c,
                &mut s.ess_d,
                &mut s.ess_res,
                &mut s.ess_soc,
                &mut s.hss_rate,
                &mut s.hss_soc,
                &mut s.re_absorbed,
                &mut s.re_curtailed,
                &mut s.gas_gc,
                &mut s.gas_p2g,
                &mut s.gas_buy,
            ];
            for (target, x) in targets.into_iter().zip(values) {
                target.push(x);
            }
        }
        Ok(s)
    }

    /// Re-derives every balance, storage trajectory and headroom condition
    /// from the schedule and the configuration alone.
    pub fn audit(&self, config: &SystemConfig, mode: Mode) -> Audit {
        let mut a = Audit::default();
        let dt = config.horizon.dt_hours;
        let ess = &config.ess;
        let eta_grid = if ess.strict_paper_efficiency { ess.eta_e } else { 1.0 };
        let n = self.periods();
        let mut s_prev = ess.s_0;
        let mut c_prev = config.hss.c_0;
        for t in 0..n {
            let supply = self.tp.iter().map(|p| p[t]).sum::<f64>()
                + self.gc_e.iter().map(|p| p[t]).sum::<f64>()
                + eta_grid * (self.ess_d[t] - self.ess_c[t])
                + self.np_e.iter().map(|p| p[t]).sum::<f64>()
                + self.re_absorbed[t];
            a.electric = a.electric.max((supply - config.loads.electric[t] - self.p2g[t]).abs());
            let heat = self.gc_h.iter().map(|p| p[t]).sum::<f64>()
                + self.np_h.iter().map(|p| p[t]).sum::<f64>()
                + self.hss_rate[t];
            a.heat = a.heat.max((heat - config.loads.heat[t]).abs());
            let gas_scale = config.gas.m3_per_mwh();
            a.gas = a
                .gas
                .max((self.gas_gc[t] - self.gas_p2g[t] - self.gas_buy[t]).abs() / gas_scale)
                .max(-self.gas_buy[t] / gas_scale);

            match ess_step(ess, s_prev, self.ess_c[t], self.ess_d[t], dt) {
                Ok(s) => a.storage = a.storage.max((s - self.ess_soc[t]).abs()),
                Err(e) => a.note(format!("t={}: {e}", t + 1)),
            }
            match hss_step(&config.hss, c_prev, self.hss_rate[t], dt) {
                Ok(c) => a.storage = a.storage.max((c - self.hss_soc[t]).abs()),
                Err(e) => a.note(format!("t={}: {e}", t + 1)),
            }
            s_prev = self.ess_soc[t];
            c_prev = self.hss_soc[t];
            a.storage = a
                .storage
                .max(ess.s_min - self.ess_soc[t])
                .max(self.ess_soc[t] - ess.s_max)
                .max(-self.hss_soc[t])
                .max(self.hss_soc[t] - config.hss.c_max);

            for (u, (p, r)) in config.thermal.iter().zip(self.tp.iter().zip(&self.tp_res)) {
                a.headroom = a.headroom.max(p[t] + r[t] - u.p_max).max(-r[t]);
            }
            for (u, (p, r)) in config.gc.iter().zip(self.gc_e.iter().zip(&self.gc_res)) {
                a.headroom = a.headroom.max(p[t] + r[t] - u.pe_max).max(-r[t]);
            }
            let ess_cap = ((self.ess_soc[t] - ess.s_min) / dt).min(ess.p_d_max - self.ess_d[t]);
            a.headroom = a.headroom.max(self.ess_res[t] - ess_cap).max(-self.ess_res[t]);
            a.bounds = a.bounds.max(-self.re_absorbed[t]).max(-self.re_curtailed[t]);
            if mode == Mode::NuclearCogeneration {
                for (u, (pe, ph)) in config.np.iter().zip(self.np_e.iter().zip(&self.np_h)) {
                    a.bounds = a.bounds.max((pe[t] + u.c_v * ph[t] - u.pe_max).abs());
                }
            }
        }
        if n > 0 {
            a.cyclic = (self.ess_soc[n - 1] - ess.s_0).abs().max((self.hss_soc[n - 1] - config.hss.c_0).abs());
        }
        a
    }
}

/// Worst residuals found by [`DispatchSchedule::audit`].
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Audit {
    pub electric: f64,
    pub heat: f64,
    /// Gas balance residual and any negative purchase, in MWh of gas energy.
    pub gas: f64,
    /// Trajectory mismatch and capacity excursions, MWh.
    pub storage: f64,
    pub cyclic: f64,
    pub headroom: f64,
    pub bounds: f64,
    pub notes: Vec<String>,
}

impl Audit {
    fn note(&mut self, s: String) {
        self.notes.push(s);
    }

    pub fn worst(&self) -> f64 {
        [self.electric, self.heat, self.gas, self.storage, self.cyclic, self.headroom, self.bounds]
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.notes.is_empty() && self.worst() <= tol
    }
}

/// C1..C5 in ¥, recomputed from a schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// Thermal fuel (exact quadratic) plus reserve cost.
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub total: f64,
    /// C1 as priced by the chord approximation inside the model.
    pub c1_linearized: f64,
    /// Largest possible excess of `c1_linearized` over `c1`.
    pub c1_error_bound: f64,
}

#[derive(Debug)]
pub struct Extraction {
    pub schedule: DispatchSchedule,
    pub costs: CostBreakdown,
    pub ledger: CarbonLedger,
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("solve status is {0:?}, not optimal")]
    NotOptimal(SolveStatus),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Carbon(#[from] CarbonError),
    #[error("recomputed total {recomputed} ¥ disagrees with the objective {objective} ¥ beyond the bound {bound} ¥")]
    CostMismatch { objective: f64, recomputed: f64, bound: f64 },
}

/// Reads the schedule out of an optimal solve and recomputes its costs and
/// emissions from the device algebra.
pub fn extract_schedule(result: &SolveResult, dm: &DispatchModel, config: &SystemConfig) -> Result<Extraction, ExtractError> {
    let values = match result.values() {
        Some(v) if result.is_optimal() => v,
        _ => return Err(ExtractError::NotOptimal(result.status)),
    };
    let val = |id: VarId| values[id.index()];
    let fleet = |ids: &Vec<Vec<VarId>>| -> Vec<Vec<f64>> {
        ids.iter().map(|u| u.iter().map(|&x| val(x)).collect()).collect()
    };
    let series = |ids: &Vec<VarId>| -> Vec<f64> { ids.iter().map(|&x| val(x)).collect() };
    let v = &dm.vars;
    let dt = config.horizon.dt_hours;
    let n = config.horizon.t;

    let gc_e = fleet(&v.gc_pe);
    let gc_h = fleet(&v.gc_ph);
    let p2g = series(&v.p2g);
    let mut gas_gc = vec![0.0; n];
    let mut gas_p2g = vec![0.0; n];
    for t in 0..n {
        for (i, u) in config.gc.iter().enumerate() {
            gas_gc[t] += gc_gas_volume(u, &config.gas, gc_e[i][t], gc_h[i][t], dt)?;
        }
        gas_p2g[t] = p2g_gas_volume(&config.p2g, &config.gas, p2g[t], dt)?;
    }
    let re_absorbed = series(&v.re);
    let schedule = DispatchSchedule {
        tp: fleet(&v.tp_p),
        tp_res: fleet(&v.tp_r),
        gc_res: fleet(&v.gc_r),
        np_e: fleet(&v.np_pe),
        np_h: fleet(&v.np_ph),
        ess_c: series(&v.ess_c),
        ess_d: series(&v.ess_d),
        ess_res: series(&v.ess_r),
        ess_soc: series(&v.ess_s),
        hss_rate: series(&v.hss_q),
        hss_soc: series(&v.hss_c),
        re_curtailed: dm.expectations.iter().zip(&re_absorbed).map(|(e, a)| (e - a).max(0.0)).collect(),
        re_absorbed,
        gas_buy: gas_gc.iter().zip(&gas_p2g).map(|(g, p)| g - p).collect(),
        gas_gc,
        gas_p2g,
        gc_e,
        gc_h,
        p2g,
    };
    let ledger = actual_emissions(&schedule, config)?;
    let costs = recompute_costs(&schedule, config, dm.mode, &ledger, result.eval(&dm.costs.c1).unwrap_or(0.0));
    let mismatch = result.objective_value - costs.total;
    let tol = 1e-3 + 1e-9 * costs.total.abs();
    if mismatch < -tol || mismatch > costs.c1_error_bound + tol {
        return Err(ExtractError::CostMismatch {
            objective: result.objective_value,
            recomputed: costs.total,
            bound: costs.c1_error_bound,
        });
    }
    Ok(Extraction {
        schedule,
        costs,
        ledger,
    })
}

/// Closed-form cost of `schedule`; `c1_linearized` is passed through for reporting.
pub(crate) fn recompute_costs(
    s: &DispatchSchedule,
    config: &SystemConfig,
    mode: Mode,
    ledger: &CarbonLedger,
    c1_linearized: f64,
) -> CostBreakdown {
    let dt = config.horizon.dt_hours;
    let n = s.periods();
    let tp_on = config.tp_enabled_in(mode);
    let mut c1 = 0.0;
    let mut bound = 0.0;
    if tp_on {
        for (u, (p, r)) in config.thermal.iter().zip(s.tp.iter().zip(&s.tp_res)) {
            for t in 0..n {
                c1 += (u.fuel_cost(p[t]) + u.w * r[t]) * dt;
            }
            bound += u.chord_error_bound() * dt * n as f64;
        }
    }
    let mut c2 = config.gas.cost_of_volume(s.gas_buy.iter().sum());
    for (u, r) in config.gc.iter().zip(&s.gc_res) {
        c2 += u.delta * r.iter().sum::<f64>() * dt;
    }
    let ess = &config.ess;
    let c3: f64 = (0..n)
        .map(|t| (ess.g1 * s.ess_c[t] + ess.g2 * s.ess_d[t] + ess.lambda_res * s.ess_res[t]) * dt)
        .sum();
    let c4: f64 = if mode == Mode::NoNuclear {
        0.0
    } else {
        config
            .np
            .iter()
            .zip(s.np_e.iter().zip(&s.np_h))
            .map(|(u, (pe, ph))| (0..n).map(|t| u.beta * (pe[t] + u.c_v * ph[t]) * dt).sum::<f64>())
            .sum()
    };
    let c5 = ledger.t_c;
    CostBreakdown {
        c1,
        c2,
        c3,
        c4,
        c5,
        total: c1 + c2 + c3 + c4 + c5,
        c1_linearized,
        c1_error_bound: bound,
    }
}
