use super::{LinExpr, LinearModel, ModelError, Relation, VarId};

/// Chord approximation of `a·x² + b·x + c` returned by [`add_piecewise_quadratic`].
#[derive(Debug, Clone)]
pub struct PiecewiseQuadratic {
    /// Approximate cost as a linear expression in the interpolation weights.
    pub cost: LinExpr,
    pub weights: Vec<VarId>,
    pub breakpoints: Vec<f64>,
    /// Largest over-estimate of the exact quadratic anywhere on the range.
    pub error_bound: f64,
}

/// Adds `K + 1` interpolation weights tying `x` to equally spaced breakpoints on
/// `[lo, hi]` and returns the chord interpolation of the quadratic.
///
/// This is the convex-combination form without adjacency binaries; it is exact
/// at breakpoints and never below the quadratic, and is only tight when the
/// cost is being minimized with `a ≥ 0`.
#[allow(clippy::too_many_arguments)]
pub fn add_piecewise_quadratic(
    model: &mut LinearModel,
    name: &str,
    x: VarId,
    a: f64,
    b: f64,
    c: f64,
    range: (f64, f64),
    segments: usize,
) -> Result<PiecewiseQuadratic, ModelError> {
    let (lo, hi) = range;
    if segments == 0 {
        return Err(ModelError::InvalidPiecewise("at least one segment is required".into()));
    }
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(ModelError::InvalidPiecewise(format!("range [{lo}, {hi}] is invalid")));
    }
    if a < 0.0 {
        return Err(ModelError::InvalidPiecewise(format!("quadratic coefficient {a} is negative")));
    }
    let h = (hi - lo) / segments as f64;
    let breakpoints: Vec<f64> = (0..=segments).map(|k| lo + k as f64 * h).collect();
    let mut weights = Vec::with_capacity(breakpoints.len());
    let mut convexity = LinExpr::new();
    let mut link = LinExpr::from(x);
    let mut cost = LinExpr::new();
    for (k, &xk) in breakpoints.iter().enumerate() {
        let w = model.continuous(format!("{name}_w{k}"), 0.0, 1.0)?;
        convexity.add_term(w, 1.0);
        link.add_term(w, -xk);
        cost.add_term(w, a * xk * xk + b * xk + c);
        weights.push(w);
    }
    model.add_constraint(format!("{name}_convex"), convexity, Relation::Eq, 1.0)?;
    model.add_constraint(format!("{name}_link"), link, Relation::Eq, 0.0)?;
    Ok(PiecewiseQuadratic {
        cost,
        weights,
        breakpoints,
        error_bound: a * h * h / 4.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{solve, HighsBackend, SolveLimits};

    fn min_cost_at(x0: f64, a: f64, b: f64, c: f64, k: usize) -> (f64, f64) {
        let mut m = LinearModel::new();
        let x = m.continuous("x", 12.0, 40.0).unwrap();
        m.fix(x, x0);
        let pw = add_piecewise_quadratic(&mut m, "pw", x, a, b, c, (12.0, 40.0), k).unwrap();
        m.set_objective(pw.cost.clone()).unwrap();
        let r = solve(&m, &HighsBackend::default(), &SolveLimits::default()).unwrap();
        (r.objective_value, pw.error_bound)
    }

    #[test]
    fn linear_cost_is_reproduced_exactly() {
        for x0 in [12.0, 17.3, 29.0, 40.0] {
            let (v, bound) = min_cost_at(x0, 0.0, 237.25, 113.02, 3);
            assert!((v - (237.25 * x0 + 113.02)).abs() < 1e-6);
            assert_eq!(bound, 0.0);
        }
    }

    #[test]
    fn exact_at_breakpoint_and_bounded_between() {
        let (v, bound) = min_cost_at(12.0, 0.18, 237.25, 113.02, 8);
        assert!((v - (0.18 * 144.0 + 237.25 * 12.0 + 113.02)).abs() < 1e-6);
        assert!((bound - 0.18 * 3.5 * 3.5 / 4.0).abs() < 1e-12);
        assert!(bound <= 0.552);
        let mid = 12.0 + 1.75;
        let (v, _) = min_cost_at(mid, 0.18, 237.25, 113.02, 8);
        let exact = 0.18 * mid * mid + 237.25 * mid + 113.02;
        assert!(v >= exact - 1e-6 && v <= exact + bound + 1e-6);
        // the midpoint of a chord is where the bound is attained
        assert!((v - exact - bound).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_arguments() {
        let mut m = LinearModel::new();
        let x = m.continuous("x", 0.0, 1.0).unwrap();
        assert!(add_piecewise_quadratic(&mut m, "p", x, 1.0, 0.0, 0.0, (0.0, 1.0), 0).is_err());
        assert!(add_piecewise_quadratic(&mut m, "q", x, 1.0, 0.0, 0.0, (1.0, 0.0), 2).is_err());
        assert!(add_piecewise_quadratic(&mut m, "r", x, -1.0, 0.0, 0.0, (0.0, 1.0), 2).is_err());
    }
}
