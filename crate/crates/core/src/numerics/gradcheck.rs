/// Relative error used by every gradient check in the crate.
#[inline]
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Central finite-difference check over every coordinate of `params`.
///
/// `loss` returns the scalar loss and its analytic gradient; only the
/// gradient at the unperturbed point is used. Returns the maximum relative
/// error.
pub fn grad_check<F>(loss: F, params: &[f64], epsilon: f64) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let coords: Vec<usize> = (0..params.len()).collect();
    grad_check_coords(loss, params, epsilon, &coords)
}

/// As [`grad_check`], restricted to the listed coordinates.
pub fn grad_check_coords<F>(mut loss: F, params: &[f64], epsilon: f64, coords: &[usize]) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = loss(params);
    assert_eq!(analytic.len(), params.len(), "gradient length");
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for &i in coords {
        let orig = p[i];
        p[i] = orig + epsilon;
        let plus = loss(&p).0;
        p[i] = orig - epsilon;
        let minus = loss(&p).0;
        p[i] = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}
