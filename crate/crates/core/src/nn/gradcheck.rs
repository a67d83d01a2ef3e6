/// `|a - n| / max(1, |a|, |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Compares `analytic` against central differences of `loss` around `theta`
/// and returns the largest [`relative_error`] over all coordinates.
///
/// # Panics
///
/// If `epsilon` is outside `[1e-6, 1e-4]` or the slices differ in length.
pub fn grad_check<F>(theta: &[f64], analytic: &[f64], epsilon: f64, mut loss: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert!((1e-6..=1e-4).contains(&epsilon), "epsilon {epsilon} outside [1e-6, 1e-4]");
    assert_eq!(theta.len(), analytic.len(), "one analytic value per parameter");
    let mut probe = theta.to_vec();
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        probe[i] = theta[i] + epsilon;
        let up = loss(&probe);
        probe[i] = theta[i] - epsilon;
        let down = loss(&probe);
        probe[i] = theta[i];
        let numeric = (up - down) / (2.0 * epsilon);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}
