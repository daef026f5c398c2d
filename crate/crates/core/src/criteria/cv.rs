use crate::error::{Error, Result};

/// Coefficient of variation: unbiased sample standard deviation over the mean.
pub fn cv(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("coefficient of variation of an empty sample".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let std = var.sqrt();
    if mean.abs() <= 1e-12 * std || (mean == 0.0 && std == 0.0) {
        return Err(Error::DegenerateCv { mean, std });
    }
    Ok(std / mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn closed_forms() {
        assert_eq!(cv(&[3.0; 5]).unwrap(), 0.0);
        assert!((cv(&[1.0, 3.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(matches!(cv(&[-1.0, 1.0]), Err(Error::DegenerateCv { .. })));
        assert!(cv(&[]).is_err());
    }

    #[test]
    fn gaussian_cv() {
        let mut r = rng::substream(5, 0);
        let z = rng::standard_normal(&mut r, 100_000);
        let s: Vec<f64> = z.iter().map(|v| 10.0 + 2.0 * v).collect();
        assert!((cv(&s).unwrap() - 0.2).abs() < 0.002);
    }
}
