use islet_core::DenseTensor;

/// Relative HS error `|A_hat - A| / |A|`.
pub fn rmse(a_hat: &DenseTensor, a: &DenseTensor) -> f64 {
    assert_eq!(a_hat.dims(), a.dims(), "estimate and truth shapes differ");
    let den = a.norm();
    let num = a_hat
        .data()
        .iter()
        .zip(a.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    num / den
}

/// Squared HS error `|A_hat - A|^2`.
pub fn squared_error(a_hat: &DenseTensor, a: &DenseTensor) -> f64 {
    a_hat.sub(a).norm().powi(2)
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_by_hand() {
        // A = all ones (|A| = sqrt 8), A_hat differs by 1 in one entry and by -1 in another
        let a = DenseTensor::from_fn(&[2, 2, 2], |_| 1.0);
        let mut a_hat = a.clone();
        a_hat.set(&[0, 0, 0], 2.0);
        a_hat.set(&[1, 1, 1], 0.0);
        assert!((rmse(&a_hat, &a) - (2.0f64 / 8.0).sqrt()).abs() < 1e-15);
        assert!((squared_error(&a_hat, &a) - 2.0).abs() < 1e-14);
        assert_eq!(rmse(&a, &a), 0.0);
    }

    #[test]
    fn mean_and_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }
}
