use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Mode, Tensor};
use crate::error::{Error, Result};

/// Inverted dropout. In training mode each element is kept with probability
/// `1 - rate` and scaled by `1 / (1 - rate)`; the returned mask holds that
/// per-element factor. `site` separates the random streams of different
/// dropout layers sharing one seed.
pub fn dropout(x: &Tensor, rate: f64, mode: Mode, site: u64) -> Result<(Tensor, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidRate(rate));
    }
    let seed = match mode {
        Mode::Train { seed } if rate > 0.0 => seed,
        _ => return Ok((x.clone(), None)),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(site);
    let scale = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { scale })
        .collect();
    let mut y = x.clone();
    y.data.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
    Ok((y, Some(mask)))
}

pub fn dropout_backward(dy: &Tensor, mask: &Option<Vec<f64>>) -> Tensor {
    let mut dx = dy.clone();
    if let Some(m) = mask {
        dx.data.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_zero_and_eval_are_identity() {
        let x = Tensor::from_vec(&[2, 2], vec![1.0, -2.0, 3.0, 4.0]).unwrap();
        assert_eq!(dropout(&x, 0.0, Mode::Train { seed: 1 }, 0).unwrap().0, x);
        assert_eq!(dropout(&x, 0.0, Mode::Eval, 0).unwrap().0, x);
        assert_eq!(dropout(&x, 0.2, Mode::Eval, 0).unwrap().0, x);
    }

    #[test]
    fn invalid_rates() {
        let x = Tensor::zeros(&[1, 1]);
        assert!(matches!(dropout(&x, 1.0, Mode::Eval, 0), Err(Error::InvalidRate(_))));
        assert!(matches!(dropout(&x, -0.1, Mode::Eval, 0), Err(Error::InvalidRate(_))));
    }

    #[test]
    fn monte_carlo_keep_fraction_and_mean() {
        let n = 100_000;
        let x = Tensor::from_vec(&[n, 1], (0..n).map(|i| 1.0 + (i % 7) as f64).collect()).unwrap();
        let (y, mask) = dropout(&x, 0.2, Mode::Train { seed: 9 }, 0).unwrap();
        let kept = mask.unwrap().iter().filter(|&&m| m > 0.0).count() as f64 / n as f64;
        assert!((kept - 0.8).abs() < 0.01, "kept {kept}");
        let mx = x.data.iter().sum::<f64>() / n as f64;
        let my = y.data.iter().sum::<f64>() / n as f64;
        assert!(((my - mx) / mx).abs() < 0.01, "{mx} vs {my}");
    }

    #[test]
    fn deterministic_per_seed_and_site() {
        let x = Tensor::filled(&[50, 1], 1.0);
        let a = dropout(&x, 0.5, Mode::Train { seed: 3 }, 0).unwrap().0;
        assert_eq!(a, dropout(&x, 0.5, Mode::Train { seed: 3 }, 0).unwrap().0);
        assert_ne!(a, dropout(&x, 0.5, Mode::Train { seed: 3 }, 1).unwrap().0);
    }
}
