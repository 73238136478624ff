//! Portfolio container and seeded train/smooth/validate splits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_same_len, Error, Result};
use crate::scalar::{sum, Scalar};

/// Rows of (response, exposure, features). Features are stored column-wise:
/// `features[j][i]` is feature `j` of row `i`. The optional `mu` column holds
/// the true mean when the data were simulated and is never used for fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub y: Vec<T>,
    pub exposure: Vec<T>,
    pub features: Vec<Vec<T>>,
    pub mu: Option<Vec<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(y: Vec<T>, exposure: Vec<T>, features: Vec<Vec<T>>, mu: Option<Vec<T>>) -> Result<Self> {
        check_same_len("dataset y/exposure", y.len(), exposure.len())?;
        for col in &features {
            check_same_len("dataset feature column", y.len(), col.len())?;
        }
        if let Some(mu) = &mu {
            check_same_len("dataset mu column", y.len(), mu.len())?;
        }
        for (i, (&yi, &ei)) in y.iter().zip(&exposure).enumerate() {
            if !(yi >= T::zero()) || !yi.is_finite() {
                return Err(Error::Domain(format!(
                    "row {}: response {yi} is not a nonnegative number",
                    i + 1
                )));
            }
            if !(ei > T::zero()) || !ei.is_finite() {
                return Err(Error::Domain(format!("row {}: exposure {ei} is not positive", i + 1)));
            }
        }
        Ok(Self {
            y,
            exposure,
            features,
            mu,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    /// Σy / Σe.
    pub fn global_rate(&self) -> T {
        sum(self.y.iter().copied()) / sum(self.exposure.iter().copied())
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset<T> {
        let pick = |v: &[T]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Dataset {
            y: pick(&self.y),
            exposure: pick(&self.exposure),
            features: self.features.iter().map(|c| pick(c)).collect(),
            mu: self.mu.as_ref().map(|m| pick(m)),
        }
    }
}

/// Three disjoint row-index sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub smooth: Vec<usize>,
    pub validate: Vec<usize>,
}

impl Split {
    /// Seeded permutation cut into `floor(n * f)` rows per part.
    pub fn from_fractions(n: usize, fractions: [f64; 3], seed: u64) -> Result<Self> {
        if fractions.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
            return Err(Error::Usage(format!(
                "split fractions must be positive, got {fractions:?}"
            )));
        }
        let total: f64 = fractions.iter().sum();
        if total > 1.0 + 1e-12 {
            return Err(Error::Usage(format!("split fractions sum to {total} > 1")));
        }
        let counts = fractions.map(|f| ((n as f64) * f + 1e-9).floor() as usize);
        Self::from_counts(n, counts, seed)
    }

    pub fn from_counts(n: usize, counts: [usize; 3], seed: u64) -> Result<Self> {
        let need: usize = counts.iter().sum();
        if need > n {
            return Err(Error::Usage(format!("split needs {need} rows, dataset has {n}")));
        }
        if counts.contains(&0) {
            return Err(Error::Usage(format!(
                "every split part needs at least one row, got {counts:?}"
            )));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (train, rest) = perm.split_at(counts[0]);
        let (smooth, rest) = rest.split_at(counts[1]);
        let validate = &rest[..counts[2]];
        Ok(Self {
            train: train.to_vec(),
            smooth: smooth.to_vec(),
            validate: validate.to_vec(),
        })
    }

    /// Checks that all indices are below `n` and the parts do not overlap.
    pub fn check(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for (name, part) in [
            ("train", &self.train),
            ("smooth", &self.smooth),
            ("validate", &self.validate),
        ] {
            if part.is_empty() {
                return Err(Error::Usage(format!("{name} split is empty")));
            }
            for &i in part.iter() {
                if i >= n {
                    return Err(Error::Usage(format!("{name} split index {i} out of range ({n} rows)")));
                }
                if seen[i] {
                    return Err(Error::Usage(format!(
                        "row {i} appears in more than one split; smoothing must not reuse training rows"
                    )));
                }
                seen[i] = true;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_rejects_bad_rows() {
        assert!(Dataset::new(vec![1.0], vec![0.0], vec![], None).is_err());
        assert!(Dataset::new(vec![-1.0], vec![1.0], vec![], None).is_err());
        assert!(Dataset::new(vec![1.0, 2.0], vec![1.0], vec![], None).is_err());
        assert!(Dataset::new(vec![1.0], vec![1.0], vec![vec![0.0, 1.0]], None).is_err());
        let d = Dataset::new(vec![1.0, 3.0], vec![1.0, 1.0], vec![vec![0.5, 0.7]], None).unwrap();
        assert_eq!(d.global_rate(), 2.0);
        assert_eq!(d.subset(&[1]).features[0], vec![0.7]);
    }

    #[test]
    fn fractions_split_is_disjoint_and_deterministic() {
        let a = Split::from_fractions(1000, [0.6, 0.2, 0.2], 7).unwrap();
        let b = Split::from_fractions(1000, [0.6, 0.2, 0.2], 7).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.train.len(), a.smooth.len(), a.validate.len()), (600, 200, 200));
        a.check(1000).unwrap();
        let c = Split::from_fractions(1000, [0.6, 0.2, 0.2], 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn overlapping_fractions_rejected() {
        assert!(matches!(
            Split::from_fractions(100, [0.7, 0.4, 0.2], 1),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            Split::from_fractions(100, [0.7, 0.0, 0.2], 1),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn overlap_detected() {
        let s = Split {
            train: vec![0, 1],
            smooth: vec![1, 2],
            validate: vec![3],
        };
        assert!(matches!(s.check(4), Err(Error::Usage(_))));
        let s = Split {
            train: vec![0],
            smooth: vec![1],
            validate: vec![9],
        };
        assert!(s.check(4).is_err());
    }
}
