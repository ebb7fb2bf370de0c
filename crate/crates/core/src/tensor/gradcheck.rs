//! Central finite differences for checking hand-written backward passes.

use super::Tensor;

/// Denominator floor for [`relative_error`], so coordinates whose true
/// gradient is (near) zero compare absolutely instead of dividing by noise.
pub const ABS_FLOOR: f64 = 1e-8;

/// `|a - b| / max(|a|, |b|, ABS_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(ABS_FLOOR);
    (analytic - numeric).abs() / denom
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for each flat index in `coords`.
pub fn central_differences<F>(x: &Tensor<f64>, coords: &[usize], h: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&Tensor<f64>) -> f64,
{
    let mut probe = x.clone();
    coords
        .iter()
        .map(|&i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + h;
            let plus = f(&probe);
            probe.data_mut()[i] = orig - h;
            let minus = f(&probe);
            probe.data_mut()[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Weighted sum `Σ w_i y_i`, the scalar probe used to turn a tensor-valued
/// function into a loss whose gradient with respect to `y` is `w`.
pub fn dot(y: &Tensor<f64>, w: &Tensor<f64>) -> f64 {
    y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}
