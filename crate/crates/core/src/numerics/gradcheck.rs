use crate::error::{Error, Result};

/// Central-difference gradient of `f` at `x`.
pub fn finite_diff_grad<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be > 0, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = f(&probe);
        probe[i] = x[i] - h;
        let minus = f(&probe);
        probe[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "f(x ± h·e_{i}) = ({plus}, {minus})"
            )));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// `|a − b| / max(|a|, |b|, floor)`.
///
/// The floor keeps near-zero gradients from producing huge ratios out of
/// rounding noise.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| relative_error(x, y, floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    #[test]
    fn square() {
        let g = finite_diff_grad(|x| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn sine_at_origin() {
        let g = finite_diff_grad(|x| x[0].sin(), &[0.0], 1e-5).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn quadratic_form_matches_analytic() {
        let mut rng = RngStream::new(11);
        let a: Vec<f64> = (0..9).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let x = [0.3, -1.2, 0.8];
        let f = |x: &[f64]| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += x[i] * a[i * 3 + j] * x[j];
                }
            }
            s
        };
        let numeric = finite_diff_grad(f, &x, 1e-5).unwrap();
        let analytic: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| (a[i * 3 + j] + a[j * 3 + i]) * x[j]).sum())
            .collect();
        assert!(max_relative_error(&numeric, &analytic, 1e-8) < 1e-6);
    }

    #[test]
    fn non_finite_names_coordinate() {
        let err = finite_diff_grad(|x| if x[1] > 0.5 { f64::NAN } else { 0.0 }, &[0.0, 0.5], 1e-3)
            .unwrap_err();
        assert!(err.to_string().contains("e_1"), "{err}");
    }

    #[test]
    fn rejects_bad_step() {
        assert!(finite_diff_grad(|_| 0.0, &[1.0], 0.0).is_err());
        assert!(finite_diff_grad(|_| 0.0, &[1.0], f64::NAN).is_err());
    }
}
