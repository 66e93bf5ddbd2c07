//! Finite-difference gradient verification for the gradient-trained models.

/// Central-difference gradient of `loss` at `params` with the given step.
pub(crate) fn central_diff_grad(
    params: &[f64],
    step: f64,
    mut loss: impl FnMut(&[f64]) -> f64,
) -> Vec<f64> {
    let mut probe = params.to_vec();
    let mut grad = vec![0.0; params.len()];
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = loss(&probe);
        probe[i] = orig - step;
        let down = loss(&probe);
        probe[i] = orig;
        grad[i] = (up - down) / (2.0 * step);
    }
    grad
}

/// Largest elementwise |a - n| / max(|a|, |n|, 1e-6).
pub(crate) fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_squared_loss_gradient_is_reproduced() {
        // loss(w) = (w.x - y)^2 with x = [1, 2, -0.5], y = 0.7.
        let x = [1.0, 2.0, -0.5];
        let y = 0.7;
        let loss = |w: &[f64]| {
            let z: f64 = w.iter().zip(&x).map(|(wi, xi)| wi * xi).sum();
            (z - y) * (z - y)
        };
        let w = [0.3, -0.1, 0.9];
        let z: f64 = w.iter().zip(&x).map(|(wi, xi)| wi * xi).sum();
        let analytic: Vec<f64> = x.iter().map(|xi| 2.0 * (z - y) * xi).collect();
        let numeric = central_diff_grad(&w, 1e-5, loss);
        assert!(max_relative_error(&analytic, &numeric) <= 1e-8);
    }

    #[test]
    fn relative_error_flags_disagreement() {
        assert!(max_relative_error(&[1.0, 2.0], &[1.0, 2.2]) > 0.09);
        assert_eq!(max_relative_error(&[0.0], &[0.0]), 0.0);
    }
}
