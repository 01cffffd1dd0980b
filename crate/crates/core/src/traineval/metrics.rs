use crate::error::{Error, Result};

fn check(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch(actual.len(), predicted.len()));
    }
    if actual.is_empty() {
        return Err(Error::Empty);
    }
    Ok(())
}

/// Symmetric mean absolute percentage error, in percent. A term whose
/// denominator `|y| + |ŷ|` is zero counts as zero.
pub fn smape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check(actual, predicted)?;
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(&y, &p)| {
            let d = y.abs() + p.abs();
            if d == 0.0 {
                0.0
            } else {
                2.0 * (y - p).abs() / d
            }
        })
        .sum();
    Ok(100.0 * sum / actual.len() as f64)
}

pub fn mse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check(actual, predicted)?;
    let sum: f64 = actual.iter().zip(predicted).map(|(y, p)| (y - p) * (y - p)).sum();
    Ok(sum / actual.len() as f64)
}

pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    mse(actual, predicted).map(f64::sqrt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(smape(&[2.0, 5.0], &[2.0, 5.0]).unwrap(), 0.0);
        assert_eq!(smape(&[1.0], &[3.0]).unwrap(), 100.0);
        assert_eq!(smape(&[0.0], &[0.0]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 4.0]).unwrap(), 2.0);
        assert!((rmse(&[1.0, 2.0], &[1.0, 4.0]).unwrap() - 1.41421).abs() < 1e-5);
        assert_eq!(mse(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(smape(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch(1, 2))));
        assert!(matches!(mse(&[], &[]), Err(Error::Empty)));
        assert!(matches!(rmse(&[1.0, 2.0], &[1.0]), Err(Error::LengthMismatch(2, 1))));
    }

    #[test]
    fn opposite_signs_hit_the_bound() {
        assert_eq!(smape(&[1.0, -2.0], &[-1.0, 0.0]).unwrap(), 200.0);
    }

    fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..40).prop_flat_map(|n| {
            (prop::collection::vec(-50.0f64..50.0, n), prop::collection::vec(-50.0f64..50.0, n))
        })
    }

    proptest! {
        #[test]
        fn smape_bounded_and_symmetric((a, p) in pairs()) {
            let s = smape(&a, &p).unwrap();
            prop_assert!((0.0..=200.0).contains(&s));
            prop_assert_eq!(s, smape(&p, &a).unwrap());
        }

        #[test]
        fn rmse_squares_to_mse((a, p) in pairs()) {
            let m = mse(&a, &p).unwrap();
            let r = rmse(&a, &p).unwrap();
            prop_assert!((r * r - m).abs() <= 1e-12 * m.max(1.0));
        }
    }
}
