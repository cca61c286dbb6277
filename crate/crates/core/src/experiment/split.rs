use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// `(train, val, test)` sizes: validation is `round(N / 10)`, the rest is
/// divided 3:1 with the train share rounded half up.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let val = (n + 5) / 10;
    let rest = n - val;
    let train = (3 * rest + 2) / 4;
    (train, val, rest - train)
}

/// Seeded shuffle of the ids, then validation, train and test slices.
pub fn split_dataset(ids: &[String], seed: u64) -> Result<Split> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateEventId(id.clone()));
        }
    }
    let mut order = ids.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, val, _) = split_sizes(order.len());
    let test = order.split_off(val + train);
    let train_ids = order.split_off(val);
    Ok(Split {
        seed,
        train: train_ids,
        val: order,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("e{i}")).collect()
    }

    #[test]
    fn sizes() {
        assert_eq!(split_sizes(40), (27, 4, 9));
        assert_eq!(split_sizes(5802), (3917, 580, 1305));
        assert_eq!(split_sizes(0), (0, 0, 0));
    }

    #[test]
    fn deterministic_and_disjoint() {
        let a = split_dataset(&ids(40), 3).unwrap();
        assert_eq!(a, split_dataset(&ids(40), 3).unwrap());
        assert_ne!(a, split_dataset(&ids(40), 4).unwrap());
        let mut all: Vec<_> = a.train.iter().chain(&a.val).chain(&a.test).cloned().collect();
        all.sort();
        let mut expected = ids(40);
        expected.sort();
        assert_eq!(all, expected);
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(split_dataset(&["a".to_string(), "a".to_string()], 1).is_err());
    }
}
