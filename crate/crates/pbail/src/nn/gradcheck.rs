//! Central finite-difference gradient probes.
//!
//! These are the independent reference used to validate every analytic
//! gradient in the crate: they never touch the tape's backward pass, only
//! repeated forward evaluations of a black-box scalar function.

/// Central-difference gradient of `f` at `at`, one coordinate at a time.
pub fn central_diff(f: &impl Fn(&[f64]) -> f64, at: &[f64], h: f64) -> Vec<f64> {
    let mut point = at.to_vec();
    let mut grad = vec![0.0; at.len()];
    for i in 0..at.len() {
        let orig = point[i];
        point[i] = orig + h;
        let up = f(&point);
        point[i] = orig - h;
        let down = f(&point);
        point[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Relative disagreement of one coordinate pair, with the denominator
/// floored at 1 so near-zero gradients are compared absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0_f64.max(a.abs()).max(b.abs())
}

/// Worst-coordinate [`rel_err`] between two gradient vectors.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &b)| rel_err(a, b))
        .fold(0.0, f64::max)
}
