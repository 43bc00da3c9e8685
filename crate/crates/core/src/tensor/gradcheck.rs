//! Central finite differences, the oracle every analytic gradient is checked against.

use super::{Tensor, TensorError, TensorResult};

/// `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h` for every coordinate of `x`.
pub fn finite_difference_grad<E, G>(mut f: G, x: &Tensor<f64>, h: f64) -> TensorResult<Tensor<f64>>
where
    G: FnMut(&Tensor<f64>) -> Result<f64, E>,
    E: std::fmt::Display,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(TensorError::Invalid(format!("step {h} must be positive")));
    }
    let mut eval = |t: &Tensor<f64>| -> TensorResult<f64> {
        let v = f(t).map_err(|e| TensorError::Invalid(format!("objective failed: {e}")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(TensorError::NonFinite {
                op: "finite_difference_grad",
            })
        }
    };
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.update(|j, v| if j == i { orig + h } else { v })?;
        let plus = eval(&probe)?;
        probe.update(|j, v| if j == i { orig - h } else { v })?;
        let minus = eval(&probe)?;
        probe.update(|j, v| if j == i { orig } else { v })?;
        grad.push((plus - minus) / (2.0 * h));
    }
    Tensor::new(x.shape().to_vec(), grad)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vectors vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "relative_error on unequal lengths");
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}
