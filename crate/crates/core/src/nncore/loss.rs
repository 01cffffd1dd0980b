use super::Tensor;
use crate::error::{Error, Result};

/// Mean squared error over the cells where `mask` is true, and its gradient
/// with respect to `pred` (zero on masked-out cells).
pub fn mse_loss(pred: &Tensor, target: &Tensor, mask: &[bool]) -> Result<(f64, Tensor)> {
    if pred.shape != target.shape || pred.len() != mask.len() {
        return Err(Error::ShapeMismatch(format!(
            "pred {:?}, target {:?}, mask {}",
            pred.shape,
            target.shape,
            mask.len()
        )));
    }
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let nf = n as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(&pred.shape);
    for k in 0..pred.len() {
        if mask[k] {
            let d = pred.data[k] - target.data[k];
            loss += d * d;
            grad.data[k] = 2.0 * d / nf;
        }
    }
    Ok((loss / nf, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::from_vec(&[1, v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn examples() {
        let (l, g) = mse_loss(&t(&[1.0, 2.0]), &t(&[1.0, 2.0]), &[true, true]).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data.iter().all(|&x| x == 0.0));
        let (l, g) = mse_loss(&t(&[1.0, 2.0]), &t(&[1.0, 4.0]), &[true, true]).unwrap();
        assert_eq!(l, 2.0);
        assert_eq!(g.data, vec![0.0, -2.0]);
        let (l, _) = mse_loss(&t(&[1.0, 2.0]), &t(&[1.0, 4.0]), &[true, false]).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn masked_nan_targets_are_ignored() {
        let (l, g) = mse_loss(&t(&[1.0, 2.0]), &t(&[3.0, f64::NAN]), &[true, false]).unwrap();
        assert_eq!(l, 4.0);
        assert_eq!(g.data, vec![-4.0, 0.0]);
    }

    #[test]
    fn errors() {
        assert!(matches!(mse_loss(&t(&[1.0]), &t(&[1.0]), &[false]), Err(Error::EmptyMask)));
        assert!(matches!(mse_loss(&t(&[1.0]), &t(&[1.0, 2.0]), &[true]), Err(Error::ShapeMismatch(_))));
    }
}
