//! Renewable output models and their discretization into probability sequences.
//!
//! Wind speed is Weibull distributed and mapped through a piecewise power
//! curve; normalized irradiance is Beta distributed and scaled by the PV
//! rating. Both induce an output distribution on `[0, p_rated]` made of a
//! continuous density plus point masses, which [`discretize`] turns into a
//! [`ProbSequence`] on an `l`-spaced grid. Bins are centred on the grid
//! points except the first and last, which are half-width:
//!
//! ```text
//! index 0      : [0, l/2)
//! index i      : [i·l − l/2, i·l + l/2)
//! index N      : [N·l − l/2, N·l]        N = ⌈p_max / l⌉
//! ```

mod sequence;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Continuous};
use thiserror::Error;

pub use sequence::{ProbSequence, MASS_TOL};

/// Absolute tolerance of each bin integral.
pub const QUADRATURE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SequenceError {
    #[error("discretization step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("maximum output must be positive, got {0}")]
    NonPositiveRange(f64),
    #[error("sequence has no entries")]
    Empty,
    #[error("negative mass {mass} at index {index}")]
    NegativeMass { index: usize, mass: f64 },
    #[error("masses sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("sequences use different steps ({0} vs {1})")]
    StepMismatch(f64, f64),
    #[error("invalid output model: {0}")]
    InvalidModel(String),
    #[error("malformed sequence CSV: {0}")]
    BadCsv(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// A point mass of an output distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub power: f64,
    pub mass: f64,
}

/// An output distribution on `[0, p_max]`: a continuous density plus atoms.
pub trait OutputDistribution {
    fn p_max(&self) -> f64;
    /// Density of the continuous part, MW⁻¹. Need not integrate to one on its own.
    fn density(&self, power: f64) -> f64;
    fn atoms(&self) -> Vec<Atom> {
        Vec::new()
    }
}

/// Discretizes `dist` on a grid of step `l`; the result is renormalized to unit mass.
pub fn discretize<D: OutputDistribution + ?Sized>(dist: &D, l: f64) -> Result<ProbSequence, SequenceError> {
    if !(l > 0.0) {
        return Err(SequenceError::NonPositiveStep(l));
    }
    let p_max = dist.p_max();
    if !(p_max > 0.0) {
        return Err(SequenceError::NonPositiveRange(p_max));
    }
    let n = grid_len(p_max, l);
    let mut probs = vec![0.0; n + 1];
    for (i, mass) in probs.iter_mut().enumerate() {
        let (lo, hi) = bin_bounds(i, n, l);
        let (lo, hi) = (lo.max(0.0), hi.min(p_max));
        if hi > lo {
            *mass = quadrature::integrate(|p| dist.density(p), lo, hi, QUADRATURE_TOL).integral;
        }
    }
    for atom in dist.atoms() {
        if atom.mass > 0.0 {
            probs[bin_of(atom.power, n, l)] += atom.mass;
        }
    }
    for p in &mut probs {
        *p = p.max(0.0);
    }
    ProbSequence::normalized(l, probs)
}

/// `N = ⌈p_max / l⌉`, guarded against floating-point noise just above an integer.
pub fn grid_len(p_max: f64, l: f64) -> usize {
    let ratio = p_max / l;
    let n = ratio.round();
    if (ratio - n).abs() <= 1e-9 * ratio.max(1.0) {
        n as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Integration interval of bin `i` on a grid with last index `n`.
pub fn bin_bounds(i: usize, n: usize, l: f64) -> (f64, f64) {
    let centre = i as f64 * l;
    match i {
        0 => (0.0, l / 2.0),
        _ if i == n => (centre - l / 2.0, centre),
        _ => (centre - l / 2.0, centre + l / 2.0),
    }
}

fn bin_of(power: f64, n: usize, l: f64) -> usize {
    ((power / l + 0.5).floor().max(0.0) as usize).min(n)
}

/// Weibull wind speed through a cut-in / rated / cut-out power curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindModel {
    pub k_shape: f64,
    pub c_scale: f64,
    pub v_in: f64,
    pub v_rated: f64,
    pub v_out: f64,
    pub p_rated: f64,
}

impl WindModel {
    /// Human-readable reasons the model is unusable; empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.k_shape > 0.0 && self.c_scale > 0.0) {
            out.push(format!(
                "Weibull parameters must be positive (k = {}, c = {})",
                self.k_shape, self.c_scale
            ));
        }
        if !(0.0 < self.v_in && self.v_in < self.v_rated && self.v_rated < self.v_out) {
            out.push(format!(
                "speeds must satisfy 0 < v_in < v_rated < v_out ({}, {}, {})",
                self.v_in, self.v_rated, self.v_out
            ));
        }
        if !(self.p_rated >= 0.0) {
            out.push(format!("rated power must be non-negative, got {}", self.p_rated));
        }
        out
    }

    pub fn speed_cdf(&self, v: f64) -> f64 {
        if v <= 0.0 {
            0.0
        } else {
            1.0 - (-(v / self.c_scale).powf(self.k_shape)).exp()
        }
    }

    pub fn speed_density(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        let (k, c) = (self.k_shape, self.c_scale);
        let x = v / c;
        k / c * x.powf(k - 1.0) * (-x.powf(k)).exp()
    }

    /// Output at wind speed `v`.
    pub fn power_at_speed(&self, v: f64) -> f64 {
        if v < self.v_in || v > self.v_out {
            0.0
        } else if v < self.v_rated {
            self.p_rated * (v - self.v_in) / (self.v_rated - self.v_in)
        } else {
            self.p_rated
        }
    }

    /// Wind speed at which the ramp delivers `power`.
    pub fn speed_for_power(&self, power: f64) -> f64 {
        self.v_in + power / self.p_rated * (self.v_rated - self.v_in)
    }

    /// Inverse-transform draw of the output.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.p_rated == 0.0 {
            return 0.0;
        }
        let u: f64 = rng.gen();
        let v = self.c_scale * (-(1.0 - u).ln()).powf(1.0 / self.k_shape);
        self.power_at_speed(v)
    }
}

impl OutputDistribution for WindModel {
    fn p_max(&self) -> f64 {
        self.p_rated
    }

    fn density(&self, power: f64) -> f64 {
        if power <= 0.0 || power >= self.p_rated {
            return 0.0;
        }
        let dv_dp = (self.v_rated - self.v_in) / self.p_rated;
        self.speed_density(self.speed_for_power(power)) * dv_dp
    }

    fn atoms(&self) -> Vec<Atom> {
        vec![
            Atom {
                power: 0.0,
                mass: self.speed_cdf(self.v_in) + (1.0 - self.speed_cdf(self.v_out)),
            },
            Atom {
                power: self.p_rated,
                mass: self.speed_cdf(self.v_out) - self.speed_cdf(self.v_rated),
            },
        ]
    }
}

/// PV output `p_rated·x` with normalized irradiance `x ~ Beta(alpha_s, beta_s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolarModel {
    pub alpha_s: f64,
    pub beta_s: f64,
    pub p_rated: f64,
}

impl SolarModel {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.alpha_s > 0.0 && self.beta_s > 0.0) {
            out.push(format!(
                "Beta parameters must be positive (alpha = {}, beta = {})",
                self.alpha_s, self.beta_s
            ));
        }
        if !(self.p_rated >= 0.0) {
            out.push(format!("rated power must be non-negative, got {}", self.p_rated));
        }
        out
    }

    fn beta(&self) -> Beta {
        Beta::new(self.alpha_s, self.beta_s).expect("validated Beta parameters")
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.p_rated == 0.0 {
            return 0.0;
        }
        let dist = rand_distr::Beta::new(self.alpha_s, self.beta_s).expect("validated Beta parameters");
        self.p_rated * rng.sample(dist)
    }
}

impl OutputDistribution for SolarModel {
    fn p_max(&self) -> f64 {
        self.p_rated
    }

    fn density(&self, power: f64) -> f64 {
        if power <= 0.0 || power >= self.p_rated {
            return 0.0;
        }
        self.beta().pdf(power / self.p_rated) / self.p_rated
    }
}

/// Renewable models of one dispatch period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyUncertainty {
    pub wind: WindModel,
    pub solar: SolarModel,
}

impl HourlyUncertainty {
    /// Sequence of the summed wind and PV output.
    pub fn combined_sequence(&self, l: f64) -> Result<ProbSequence, SequenceError> {
        wind_power_sequence(&self.wind, l)?.convolve(&solar_power_sequence(&self.solar, l)?)
    }

    pub fn p_rated(&self) -> f64 {
        self.wind.p_rated + self.solar.p_rated
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.wind.sample(rng) + self.solar.sample(rng)
    }
}

/// Wind sequence; a zero rating yields a point mass at zero.
pub fn wind_power_sequence(model: &WindModel, l: f64) -> Result<ProbSequence, SequenceError> {
    let problems = model.problems();
    if !problems.is_empty() {
        return Err(SequenceError::InvalidModel(problems.join("; ")));
    }
    if !(l > 0.0) {
        return Err(SequenceError::NonPositiveStep(l));
    }
    if model.p_rated == 0.0 {
        return ProbSequence::delta(l, 0);
    }
    discretize(model, l)
}

/// PV sequence; a zero rating (night) yields a point mass at zero.
pub fn solar_power_sequence(model: &SolarModel, l: f64) -> Result<ProbSequence, SequenceError> {
    let problems = model.problems();
    if !problems.is_empty() {
        return Err(SequenceError::InvalidModel(problems.join("; ")));
    }
    if !(l > 0.0) {
        return Err(SequenceError::NonPositiveStep(l));
    }
    if model.p_rated == 0.0 {
        return ProbSequence::delta(l, 0);
    }
    discretize(model, l)
}

/// Combined sequences and their expectations for every period.
pub fn period_sequences(
    hours: &[HourlyUncertainty],
    l: f64,
) -> Result<(Vec<ProbSequence>, Vec<f64>), SequenceError> {
    let seqs = hours
        .iter()
        .map(|h| h.combined_sequence(l))
        .collect::<Result<Vec<_>, _>>()?;
    let means = seqs.iter().map(ProbSequence::expectation).collect();
    Ok((seqs, means))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Uniform(f64);
    impl OutputDistribution for Uniform {
        fn p_max(&self) -> f64 {
            self.0
        }
        fn density(&self, p: f64) -> f64 {
            if (0.0..=self.0).contains(&p) {
                1.0 / self.0
            } else {
                0.0
            }
        }
    }

    struct PointMass {
        at: f64,
        p_max: f64,
    }
    impl OutputDistribution for PointMass {
        fn p_max(&self) -> f64 {
            self.p_max
        }
        fn density(&self, _: f64) -> f64 {
            0.0
        }
        fn atoms(&self) -> Vec<Atom> {
            vec![Atom {
                power: self.at,
                mass: 1.0,
            }]
        }
    }

    #[test]
    fn grid_length_follows_ceiling() {
        assert_eq!(discretize(&Uniform(45.0), 5.0).unwrap().probs().len(), 10);
        assert_eq!(grid_len(47.0, 5.0), 10);
        assert_eq!(grid_len(0.3 * 3.0, 0.3), 3);
    }

    #[test]
    fn uniform_and_delta_bins() {
        let s = discretize(&Uniform(10.0), 5.0).unwrap();
        for (got, want) in s.probs().iter().zip([0.25, 0.5, 0.25]) {
            assert!((got - want).abs() < 1e-9);
        }
        let d = discretize(&PointMass { at: 20.0, p_max: 45.0 }, 5.0).unwrap();
        assert_eq!(d.probs()[4], 1.0);
        assert_eq!(d.probs().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn bad_arguments() {
        assert!(matches!(discretize(&Uniform(10.0), 0.0), Err(SequenceError::NonPositiveStep(_))));
        assert!(matches!(discretize(&Uniform(0.0), 1.0), Err(SequenceError::NonPositiveRange(_))));
        let bad = WindModel {
            k_shape: 2.0,
            c_scale: 8.0,
            v_in: 12.0,
            v_rated: 10.0,
            v_out: 25.0,
            p_rated: 50.0,
        };
        assert!(matches!(wind_power_sequence(&bad, 1.0), Err(SequenceError::InvalidModel(_))));
    }

    #[test]
    fn calm_wind_puts_mass_at_zero() {
        let calm = WindModel {
            k_shape: 3.0,
            c_scale: 0.5,
            v_in: 4.0,
            v_rated: 12.0,
            v_out: 25.0,
            p_rated: 50.0,
        };
        let s = wind_power_sequence(&calm, 5.0).unwrap();
        assert!(s.probs()[0] > 1.0 - 1e-12);
    }

    #[test]
    fn night_pv_is_a_point_mass() {
        let night = SolarModel {
            alpha_s: 2.0,
            beta_s: 2.0,
            p_rated: 0.0,
        };
        assert_eq!(solar_power_sequence(&night, 5.0).unwrap().probs(), &[1.0]);
    }
}
