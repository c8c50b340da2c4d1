//! Deterministic encoding of the per-period spinning-reserve chance constraint.
//!
//! With the renewable output of period `t` discretized to masses `c(m)` at
//! `m·l`, the reserve `R_t` covers support point `m` when
//! `R_t ≥ e_t − m·l`. Binary `z_{m,t}` is tied to that event by a pair of
//! big-M rows, and the covered mass must reach `alpha`.

use thiserror::Error;

use crate::milp::{LinExpr, LinearModel, ModelError, Relation, VarId};
use crate::uncertainty::ProbSequence;

/// Slack on the coverage comparison, equal to the solver's feasibility tolerance.
pub const COVERAGE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DstError {
    #[error("alpha = {0} is outside [0, 1]")]
    Alpha(f64),
    #[error("{sequences} sequences, {expectations} expectations and {reserves} reserve expressions")]
    Length {
        sequences: usize,
        expectations: usize,
        reserves: usize,
    },
    #[error("period {t}: expectation {given} differs from the sequence mean {mean}")]
    Expectation { t: usize, given: f64, mean: f64 },
    #[error("alpha = {alpha} exceeds the total mass {mass}")]
    Unreachable { alpha: f64, mass: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Confidence level plus the combined renewable sequence and its mean per period.
#[derive(Debug, Clone, PartialEq)]
pub struct ChanceSpec {
    pub alpha: f64,
    pub sequences: Vec<ProbSequence>,
    pub expectations: Vec<f64>,
}

impl ChanceSpec {
    pub fn new(alpha: f64, sequences: Vec<ProbSequence>, expectations: Vec<f64>) -> Result<Self, DstError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(DstError::Alpha(alpha));
        }
        if sequences.len() != expectations.len() {
            return Err(DstError::Length {
                sequences: sequences.len(),
                expectations: expectations.len(),
                reserves: sequences.len(),
            });
        }
        for (t, (s, &e)) in sequences.iter().zip(&expectations).enumerate() {
            let mean = s.expectation();
            if (mean - e).abs() > 1e-6 {
                return Err(DstError::Expectation { t: t + 1, given: e, mean });
            }
        }
        Ok(Self {
            alpha,
            sequences,
            expectations,
        })
    }

    /// Spec with expectations taken from the sequences themselves.
    pub fn from_sequences(alpha: f64, sequences: Vec<ProbSequence>) -> Result<Self, DstError> {
        let expectations = sequences.iter().map(ProbSequence::expectation).collect();
        Self::new(alpha, sequences, expectations)
    }
}

/// Indicators of one period, one per positive-mass support point.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodIndicators {
    /// `(m, z_m)` pairs in increasing `m`.
    pub z: Vec<(usize, VarId)>,
    pub big_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorBlock {
    pub periods: Vec<PeriodIndicators>,
}

impl IndicatorBlock {
    pub fn num_binaries(&self) -> usize {
        self.periods.iter().map(|p| p.z.len()).sum()
    }

    /// Rows added: two links per indicator and one coverage row per period.
    pub fn num_constraints(&self) -> usize {
        self.periods.iter().map(|p| 2 * p.z.len() + 1).sum()
    }
}

/// Shortfall level that a reserve must reach to cover support point `m`.
pub fn threshold(e_t: f64, m: usize, l: f64) -> f64 {
    e_t - m as f64 * l
}

/// Adds indicators, big-M links and coverage rows for every period.
///
/// Rows are labelled `dst_lo_<t>_<m>`, `dst_hi_<t>_<m>` and `dst_cov_<t>`.
pub fn attach_reserve_chance(
    model: &mut LinearModel,
    spec: &ChanceSpec,
    reserves: &[LinExpr],
) -> Result<IndicatorBlock, DstError> {
    if reserves.len() != spec.sequences.len() {
        return Err(DstError::Length {
            sequences: spec.sequences.len(),
            expectations: spec.expectations.len(),
            reserves: reserves.len(),
        });
    }
    let mut periods = Vec::with_capacity(reserves.len());
    for (k, ((seq, &e_t), reserve)) in spec.sequences.iter().zip(&spec.expectations).zip(reserves).enumerate() {
        let t = k + 1;
        let (_, r_max) = model.finite_bounds(reserve, &format!("reserve of period {t}"))?;
        let big_m = r_max.max(0.0) + e_t.abs() + seq.max_index() as f64 * seq.step_l() + 1.0;
        let mut coverage = LinExpr::new();
        let mut z = Vec::new();
        for (m, mass) in seq.support() {
            let zm = model.binary(format!("z_{t}_{m}"))?;
            let thr = threshold(e_t, m, seq.step_l());
            let link = zm * big_m - reserve.clone();
            // z = 0 forces R ≤ thr.
            model.add_constraint(format!("dst_lo_{t}_{m}"), link.clone(), Relation::Ge, -thr)?;
            // z = 1 forces R ≥ thr.
            model.add_constraint(format!("dst_hi_{t}_{m}"), link, Relation::Le, big_m - thr)?;
            coverage.add_term(zm, mass);
            z.push((m, zm));
        }
        model.add_constraint(format!("dst_cov_{t}"), coverage, Relation::Ge, spec.alpha)?;
        periods.push(PeriodIndicators { z, big_m });
    }
    Ok(IndicatorBlock { periods })
}

/// Adds valid inequalities that tighten the LP relaxation of `block`.
///
/// The big-M sandwich makes each indicator exact, so `z_m = 1` exactly when
/// `R ≥ thr_m`. Thresholds fall as `m` grows, hence every feasible point has
/// `z` non-decreasing in `m`, and a telescoped sum of threshold gaps over the
/// set indicators equals the threshold of the lowest covered support. Neither
/// family removes a feasible point; both need `alpha > 0`, which rules out the
/// all-zero indicator vector. Rows are labelled `cut_ord_<t>_<m>` and
/// `cut_mix_<t>`; returns how many were added.
pub fn strengthen_indicators(
    model: &mut LinearModel,
    spec: &ChanceSpec,
    block: &IndicatorBlock,
    reserves: &[LinExpr],
) -> Result<usize, DstError> {
    if spec.alpha <= 0.0 {
        return Ok(0);
    }
    let mut added = 0;
    for (k, ((period, seq), reserve)) in block.periods.iter().zip(&spec.sequences).zip(reserves).enumerate() {
        let t = k + 1;
        let e_t = spec.expectations[k];
        for pair in period.z.windows(2) {
            let ((m, lo), (_, hi)) = (pair[0], pair[1]);
            model.add_constraint(format!("cut_ord_{t}_{m}"), LinExpr::from(lo) - hi, Relation::Le, 0.0)?;
            added += 1;
        }
        let mut mix = reserve.clone();
        for (i, &(m, zm)) in period.z.iter().enumerate() {
            let thr = threshold(e_t, m, seq.step_l());
            let next = period.z.get(i + 1).map_or(0.0, |&(n, _)| threshold(e_t, n, seq.step_l()));
            mix.add_term(zm, -(thr - next));
        }
        model.add_constraint(format!("cut_mix_{t}"), mix, Relation::Ge, 0.0)?;
        added += 1;
    }
    Ok(added)
}

/// Smallest `R ≥ 0` whose covered mass `Σ{c(m) : m·l ≥ e_t − R}` reaches `alpha`.
pub fn min_reserve_bruteforce(c: &ProbSequence, alpha: f64, e_t: f64) -> Result<f64, DstError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(DstError::Alpha(alpha));
    }
    if alpha == 0.0 {
        return Ok(0.0);
    }
    let mut covered = 0.0;
    for (m, mass) in c.probs().iter().enumerate().rev() {
        covered += mass;
        if covered >= alpha - COVERAGE_TOL && *mass > 0.0 {
            return Ok(threshold(e_t, m, c.step_l()).max(0.0));
        }
    }
    Err(DstError::Unreachable { alpha, mass: covered })
}
