//! Central-difference verification of analytic gradients.

use crate::error::Result;
use crate::par;

/// One evaluation of a scalar function: its value and the analytic gradient
/// with respect to the flattened input point.
pub struct GradEval {
    pub value: f64,
    pub grad: Vec<f64>,
}

pub const DEFAULT_STEP: f64 = 1e-5;

/// Compare the analytic gradient of `f` at `point` against central finite
/// differences with step `h`.
///
/// Returns `max_i |analytic_i - fd_i| / max(1, |fd_i|)`. `f` must be callable
/// at every coordinate-shifted point; shifted evaluations only use the value.
pub fn grad_check<F>(f: F, point: &[f64], h: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<GradEval> + Sync + Send,
{
    let base = f(point)?;
    assert_eq!(
        base.grad.len(),
        point.len(),
        "analytic gradient has {} entries for a {}-coordinate point",
        base.grad.len(),
        point.len()
    );
    let errors = par::map_indexed(point.len(), |i| -> Result<f64> {
        let mut shifted = point.to_vec();
        shifted[i] = point[i] + h;
        let up = f(&shifted)?.value;
        shifted[i] = point[i] - h;
        let down = f(&shifted)?.value;
        let fd = (up - down) / (2.0 * h);
        Ok((base.grad[i] - fd).abs() / fd.abs().max(1.0))
    });
    let mut max_err = 0.0f64;
    for e in errors {
        max_err = max_err.max(e?);
    }
    Ok(max_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Graph;

    #[test]
    fn linear_function_is_exact() {
        let f = |p: &[f64]| {
            let mut g = Graph::new();
            let x = g.leaf(p.to_vec(), &[p.len()])?;
            let y = g.mul_scalar(x, 3.0);
            let loss = g.sum(y);
            g.backward(loss)?;
            Ok(GradEval { value: g.scalar_value(loss), grad: g.grad(x).to_vec() })
        };
        let err = grad_check(f, &[0.4, -1.2, 2.0], DEFAULT_STEP).unwrap();
        assert!(err < 1e-10, "linear grad_check error {err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let f = |p: &[f64]| {
            let mut g = Graph::new();
            let x = g.leaf(p.to_vec(), &[p.len()])?;
            let zero = g.mul_scalar(x, 0.0);
            let loss = g.sum(zero);
            g.backward(loss)?;
            Ok(GradEval { value: g.scalar_value(loss), grad: g.grad(x).to_vec() })
        };
        let err = grad_check(f, &[1.0, 2.0], DEFAULT_STEP).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn product_of_squares_matches() {
        let f = |p: &[f64]| {
            let mut g = Graph::new();
            let x = g.leaf(p.to_vec(), &[p.len()])?;
            let sq = g.mul(x, x)?;
            let e = g.exp(sq);
            let loss = g.mean(e);
            g.backward(loss)?;
            Ok(GradEval { value: g.scalar_value(loss), grad: g.grad(x).to_vec() })
        };
        let err = grad_check(f, &[0.3, -0.7, 1.1], DEFAULT_STEP).unwrap();
        assert!(err < 1e-8, "grad_check error {err}");
    }
}
