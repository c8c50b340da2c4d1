//! Discretized renewable sequences against independent numeric integration.

use ies_dispatch::uncertainty::{solar_power_sequence, wind_power_sequence, SolarModel, WindModel};

/// Composite Simpson rule with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

fn weibull_pdf(k: f64, c: f64) -> impl Fn(f64) -> f64 {
    move |v: f64| {
        if v <= 0.0 {
            0.0
        } else {
            k / c * (v / c).powf(k - 1.0) * (-(v / c).powf(k)).exp()
        }
    }
}

fn wind() -> WindModel {
    WindModel {
        k_shape: 2.2,
        c_scale: 9.0,
        v_in: 3.0,
        v_rated: 12.0,
        v_out: 25.0,
        p_rated: 45.0,
    }
}

#[test]
fn wind_sequence_length_and_mass() {
    let s = wind_power_sequence(&wind(), 5.0).unwrap();
    assert_eq!(s.probs().len(), 10);
    assert!((s.total_mass() - 1.0).abs() < 1e-9);
}

#[test]
fn top_bin_matches_integrated_weibull() {
    let w = wind();
    let f = weibull_pdf(w.k_shape, w.c_scale);
    for l in [5.0, 1.0, 0.25] {
        let s = wind_power_sequence(&w, l).unwrap();
        let top = *s.probs().last().unwrap();
        // Speeds at or above rating, plus the ramp stretch whose output rounds to the top bin.
        let rated = simpson(&f, w.v_rated, w.v_out, 20_000);
        let ramp_from = w.v_in + (w.p_rated - l / 2.0) / w.p_rated * (w.v_rated - w.v_in);
        let ramp = simpson(&f, ramp_from, w.v_rated, 20_000);
        assert!((top - rated - ramp).abs() < 1e-6, "l {l}: {top} vs {}", rated + ramp);
        assert!(top >= rated - 1e-9);
    }
}

#[test]
fn zero_bin_holds_calm_and_storm() {
    let w = wind();
    let f = weibull_pdf(w.k_shape, w.c_scale);
    let l = 1.0;
    let s = wind_power_sequence(&w, l).unwrap();
    let ramp_to = w.v_in + (l / 2.0) / w.p_rated * (w.v_rated - w.v_in);
    let calm = simpson(&f, 0.0, ramp_to, 20_000);
    let storm = 1.0 - simpson(&f, 0.0, w.v_out, 200_000);
    assert!((s.probs()[0] - calm - storm).abs() < 1e-6);
}

#[test]
fn wind_mean_within_a_step() {
    let w = wind();
    let f = weibull_pdf(w.k_shape, w.c_scale);
    let mean = simpson(|v| w.power_at_speed(v) * f(v), 0.0, w.v_out, 200_000);
    for l in [5.0, 1.0, 0.25] {
        let e = wind_power_sequence(&w, l).unwrap().expectation();
        assert!((e - mean).abs() <= l, "l {l}: {e} vs {mean}");
    }
    assert!((wind_power_sequence(&w, 0.25).unwrap().expectation() - mean).abs() < 0.05);
}

#[test]
fn solar_mean_within_a_step() {
    let pv = SolarModel {
        alpha_s: 2.5,
        beta_s: 1.8,
        p_rated: 60.0,
    };
    let mean = pv.p_rated * pv.alpha_s / (pv.alpha_s + pv.beta_s);
    for l in [5.0, 1.0, 0.25] {
        let s = solar_power_sequence(&pv, l).unwrap();
        assert_eq!(s.probs().len(), (60.0f64 / l).ceil() as usize + 1);
        assert!((s.expectation() - mean).abs() <= l);
    }
}
