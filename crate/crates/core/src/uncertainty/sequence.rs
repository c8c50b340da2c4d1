use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::SequenceError;

/// Tolerance on the total mass of a valid sequence.
pub const MASS_TOL: f64 = 1e-9;

/// Probability mass over the output grid `0, l, 2l, …, N·l`.
///
/// Index `i` carries the probability that the output equals `i·step_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbSequence {
    step_l: f64,
    probs: Vec<f64>,
}

impl ProbSequence {
    /// Builds a sequence, checking every mass is non-negative and the total is one.
    pub fn new(step_l: f64, probs: Vec<f64>) -> Result<Self, SequenceError> {
        if !(step_l > 0.0) {
            return Err(SequenceError::NonPositiveStep(step_l));
        }
        if probs.is_empty() {
            return Err(SequenceError::Empty);
        }
        if let Some((index, &mass)) = probs.iter().enumerate().find(|(_, p)| !(**p >= 0.0)) {
            return Err(SequenceError::NegativeMass { index, mass });
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(SequenceError::NotNormalized(total));
        }
        Ok(Self { step_l, probs })
    }

    /// Scales non-negative masses so that they sum to exactly one.
    pub fn normalized(step_l: f64, mut probs: Vec<f64>) -> Result<Self, SequenceError> {
        let total: f64 = probs.iter().sum();
        if !(total > 0.0) {
            return Err(SequenceError::NotNormalized(total));
        }
        for p in &mut probs {
            *p /= total;
        }
        Self::new(step_l, probs)
    }

    /// All mass at `index·step_l`.
    pub fn delta(step_l: f64, index: usize) -> Result<Self, SequenceError> {
        let mut probs = vec![0.0; index + 1];
        probs[index] = 1.0;
        Self::new(step_l, probs)
    }

    pub fn step_l(&self) -> f64 {
        self.step_l
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Largest index `N`; the sequence has `N + 1` entries.
    pub fn max_index(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn power_at(&self, index: usize) -> f64 {
        index as f64 * self.step_l
    }

    /// Support points with strictly positive mass, as `(index, mass)`.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs.iter().copied().enumerate().filter(|(_, p)| *p > 0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Mean output in MW.
    pub fn expectation(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| i as f64 * self.step_l * p)
            .sum()
    }

    /// Probability that the output is strictly below `power`.
    pub fn prob_below(&self, power: f64) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(i, _)| (*i as f64) * self.step_l < power)
            .map(|(_, p)| p)
            .sum()
    }

    /// Distribution of the sum of two independent outputs on the same grid.
    pub fn convolve(&self, other: &ProbSequence) -> Result<ProbSequence, SequenceError> {
        if (self.step_l - other.step_l).abs() > 1e-12 * self.step_l.max(other.step_l) {
            return Err(SequenceError::StepMismatch(self.step_l, other.step_l));
        }
        let mut out = vec![0.0; self.probs.len() + other.probs.len() - 1];
        for (i, a) in self.probs.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (j, b) in other.probs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Ok(ProbSequence {
            step_l: self.step_l,
            probs: out,
        })
    }

    /// Writes `index,power_mw,prob` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SequenceError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "power_mw", "prob"])?;
        for (i, p) in self.probs.iter().enumerate() {
            w.write_record([i.to_string(), format!("{}", self.power_at(i)), format!("{p}")])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads the `index,power_mw,prob` layout written by [`write_csv`](Self::write_csv).
    ///
    /// The step is inferred from the power column; indices must be contiguous from 0.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, SequenceError> {
        #[derive(Deserialize)]
        struct Row {
            index: usize,
            power_mw: f64,
            prob: f64,
        }
        let mut rows = Vec::new();
        for row in csv::Reader::from_reader(reader).deserialize() {
            let row: Row = row?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(SequenceError::Empty);
        }
        let step = rows
            .iter()
            .find(|r| r.index > 0)
            .map(|r| r.power_mw / r.index as f64)
            .unwrap_or(1.0);
        let mut probs = Vec::with_capacity(rows.len());
        for (expected, row) in rows.iter().enumerate() {
            if row.index != expected {
                return Err(SequenceError::BadCsv(format!(
                    "expected index {expected}, found {}",
                    row.index
                )));
            }
            if (row.power_mw - expected as f64 * step).abs() > 1e-6 * step.max(1.0) {
                return Err(SequenceError::BadCsv(format!(
                    "power {} at index {expected} is not on a grid of step {step}",
                    row.power_mw
                )));
            }
            probs.push(row.prob);
        }
        Self::new(step, probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(p: &[f64]) -> ProbSequence {
        ProbSequence::new(5.0, p.to_vec()).unwrap()
    }

    #[test]
    fn construction_rejects_bad_mass() {
        assert!(matches!(
            ProbSequence::new(5.0, vec![0.5, -0.1, 0.6]),
            Err(SequenceError::NegativeMass { index: 1, .. })
        ));
        assert!(matches!(
            ProbSequence::new(5.0, vec![0.5, 0.4]),
            Err(SequenceError::NotNormalized(_))
        ));
        assert!(ProbSequence::new(0.0, vec![1.0]).is_err());
    }

    #[test]
    fn convolution_cases() {
        let a = seq(&[0.2, 0.3, 0.5]);
        let d0 = ProbSequence::delta(5.0, 0).unwrap();
        assert_eq!(a.convolve(&d0).unwrap(), a);

        let coin = seq(&[0.5, 0.5]);
        assert_eq!(coin.convolve(&coin).unwrap().probs(), &[0.25, 0.5, 0.25]);

        let a = ProbSequence::normalized(5.0, vec![1.0; 10]).unwrap();
        let b = ProbSequence::normalized(5.0, vec![1.0; 7]).unwrap();
        assert_eq!(a.convolve(&b).unwrap().max_index(), 15);

        let other = ProbSequence::new(2.0, vec![1.0]).unwrap();
        assert!(matches!(a.convolve(&other), Err(SequenceError::StepMismatch(..))));
    }

    #[test]
    fn expectation_cases() {
        assert_eq!(ProbSequence::delta(5.0, 4).unwrap().expectation(), 20.0);
        assert_eq!(seq(&[0.5, 0.0, 0.5]).expectation(), 5.0);
        assert!((seq(&[0.2, 0.3, 0.5]).expectation() - 6.5).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let a = seq(&[0.2, 0.3, 0.5]);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("index,power_mw,prob\n0,0,0.2\n1,5,0.3\n"));
        assert_eq!(ProbSequence::read_csv(&buf[..]).unwrap(), a);
    }

    fn arb_seq(max_len: usize) -> impl Strategy<Value = ProbSequence> {
        prop::collection::vec(0.0f64..1.0, 1..max_len).prop_filter_map("zero mass", |w| {
            ProbSequence::normalized(2.5, w).ok()
        })
    }

    proptest! {
        #[test]
        fn expectation_is_additive_under_convolution(a in arb_seq(15), b in arb_seq(15)) {
            let c = a.convolve(&b).unwrap();
            prop_assert!((c.expectation() - a.expectation() - b.expectation()).abs() < 1e-9);
            prop_assert!((c.total_mass() - 1.0).abs() < 1e-9);
        }
    }
}
