use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SupervisedSet;
use crate::error::{Error, Result};

/// Partitions patients into (train, validation). Validation gets
/// `floor(fraction · n)` patients, at least one, and the result depends only
/// on the id set, the fraction and the seed.
pub fn split_patients(
    patients: &BTreeSet<i64>,
    validation_fraction: f64,
    seed: u64,
) -> Result<(BTreeSet<i64>, BTreeSet<i64>)> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "validation fraction must lie in (0, 1), got {validation_fraction}"
        )));
    }
    let n = patients.len();
    if n < 2 {
        return Err(Error::TooFewPatients { needed: 2, got: n });
    }
    let n_val = ((validation_fraction * n as f64 + 1e-9).floor() as usize).clamp(1, n - 1);
    let mut ids: Vec<i64> = patients.iter().copied().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val: BTreeSet<i64> = ids[..n_val].iter().copied().collect();
    let train = ids[n_val..].iter().copied().collect();
    Ok((train, val))
}

pub fn split(
    set: &SupervisedSet,
    validation_fraction: f64,
    seed: u64,
) -> Result<(SupervisedSet, SupervisedSet)> {
    let (train, val) = split_patients(&set.patient_ids(), validation_fraction, seed)?;
    Ok((set.select_patients(&train), set.select_patients(&val)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: i64) -> BTreeSet<i64> {
        (1..=n).collect()
    }

    #[test]
    fn ten_patients_fifth_validation() {
        let (train, val) = split_patients(&ids(10), 0.2, 3).unwrap();
        assert_eq!(val.len(), 2);
        assert_eq!(train.len(), 8);
    }

    #[test]
    fn minimum_one_validation_patient() {
        let (_, val) = split_patients(&ids(3), 0.1, 0).unwrap();
        assert_eq!(val.len(), 1);
    }

    #[test]
    fn errors() {
        assert!(matches!(split_patients(&ids(1), 0.2, 0), Err(Error::TooFewPatients { .. })));
        assert!(matches!(split_patients(&ids(5), 0.0, 0), Err(Error::InvalidConfig(_))));
        assert!(matches!(split_patients(&ids(5), 1.0, 0), Err(Error::InvalidConfig(_))));
    }

    proptest::proptest! {
        #[test]
        fn deterministic_partition(n in 2i64..200, frac in 0.01f64..0.99, seed in 0u64..1000) {
            let all = ids(n);
            let (a, b) = split_patients(&all, frac, seed).unwrap();
            let (a2, b2) = split_patients(&all, frac, seed).unwrap();
            proptest::prop_assert_eq!(&a, &a2);
            proptest::prop_assert_eq!(&b, &b2);
            proptest::prop_assert!(a.is_disjoint(&b));
            proptest::prop_assert_eq!(a.union(&b).copied().collect::<BTreeSet<_>>(), all);
            proptest::prop_assert!(!b.is_empty() && !a.is_empty());
        }
    }
}
