//! Worker partitioning and synthetic datasets.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::objective::LabeledDataset;
use crate::rng::{Purpose, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionScheme {
    /// Every worker holds the full dataset.
    Homogeneous,
    /// Contiguous blocks in file order, sizes differing by at most one.
    Heterogeneous,
}

pub fn partition(ds: &Arc<LabeledDataset>, n_good: usize, scheme: PartitionScheme) -> Result<Vec<Arc<LabeledDataset>>> {
    if n_good == 0 {
        return Err(Error::InvalidArgument("need at least one good worker".into()));
    }
    match scheme {
        PartitionScheme::Homogeneous => Ok(vec![Arc::clone(ds); n_good]),
        PartitionScheme::Heterogeneous => {
            let n = ds.len();
            if n_good > n {
                return Err(Error::InvalidArgument(format!("{n_good} workers but only {n} samples")));
            }
            let (base, extra) = (n / n_good, n % n_good);
            let mut start = 0;
            Ok((0..n_good)
                .map(|i| {
                    let len = base + usize::from(i < extra);
                    let shard = ds.slice(start..start + len);
                    start += len;
                    Arc::new(shard)
                })
                .collect())
        }
    }
}

/// Number of one-hot attributes of the phishing-shaped generator.
const BINARY_ATTRS: usize = 22;
const TERNARY_ATTRS: usize = 8;
/// Feature dimension of the phishing-shaped generator.
pub const PHISHING_DIM: usize = 2 * BINARY_ATTRS + 3 * TERNARY_ATTRS;
/// Sample count of the full-size phishing-shaped dataset.
pub const PHISHING_SAMPLES: usize = 11_055;

/// Binary dataset shaped like the phishing website data: 22 two-valued and
/// 8 three-valued categorical attributes, one-hot encoded into 68 columns,
/// so every row holds exactly 30 ones. Category frequencies are skewed and
/// labels follow a logistic model on the encoded features.
pub fn phishing_like(samples: usize, seed: u64) -> LabeledDataset {
    let mut rng = RngStream::for_purpose(seed, Purpose::Data, 0);
    // attribute-level category probabilities
    let mut probs: Vec<Vec<f64>> = Vec::with_capacity(BINARY_ATTRS + TERNARY_ATTRS);
    for _ in 0..BINARY_ATTRS {
        let p = 0.55 + 0.4 * rng.uniform();
        probs.push(vec![p, 1.0 - p]);
    }
    for _ in 0..TERNARY_ATTRS {
        let a = 0.4 + 0.45 * rng.uniform();
        let b = (1.0 - a) * (0.3 + 0.5 * rng.uniform());
        probs.push(vec![a, b, 1.0 - a - b]);
    }
    let weights: Vec<f64> = (0..PHISHING_DIM).map(|_| 0.6 * rng.standard_normal()).collect();
    let bias = 0.2 * rng.standard_normal();
    let mut ds = LabeledDataset::new(PHISHING_DIM);
    let mut idx = Vec::with_capacity(probs.len());
    for _ in 0..samples {
        idx.clear();
        let mut offset = 0;
        for p in &probs {
            let u = rng.uniform();
            let mut acc = 0.0;
            let mut cat = p.len() - 1;
            for (k, pk) in p.iter().enumerate() {
                acc += pk;
                if u < acc {
                    cat = k;
                    break;
                }
            }
            idx.push((offset + cat) as u32);
            offset += p.len();
        }
        let margin: f64 = bias + idx.iter().map(|&i| weights[i as usize]).sum::<f64>();
        let label = if rng.uniform() < 1.0 / (1.0 + (-margin).exp()) { 1.0 } else { -1.0 };
        ds.push_row(&idx, &vec![1.0; idx.len()], label).expect("generator emits valid rows");
    }
    ds
}

/// Shift vector `ζ ~ N(0, I_d)` determined by `seed`.
pub fn gaussian_shift(d: usize, seed: u64) -> Vector {
    let mut rng = RngStream::for_purpose(seed, Purpose::Data, 1);
    (0..d).map(|_| rng.standard_normal()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ten() -> Arc<LabeledDataset> {
        let mut ds = LabeledDataset::new(1);
        for j in 0..10 {
            ds.push_row(&[0], &[j as f64], 1.0).unwrap();
        }
        Arc::new(ds)
    }

    #[test]
    fn test_heterogeneous_halves() {
        let shards = partition(&ten(), 2, PartitionScheme::Heterogeneous).unwrap();
        let firsts: Vec<f64> = shards.iter().map(|s| s.row(0).1[0]).collect();
        assert_eq!(firsts, vec![0.0, 5.0]);
        assert!(shards.iter().all(|s| s.len() == 5));
    }

    #[test]
    fn test_homogeneous_shares_data() {
        let ds = ten();
        let shards = partition(&ds, 4, PartitionScheme::Homogeneous).unwrap();
        assert!(shards.iter().all(|s| Arc::ptr_eq(s, &ds)));
    }

    #[test]
    fn test_too_many_workers() {
        assert!(partition(&ten(), 11, PartitionScheme::Heterogeneous).is_err());
        assert!(partition(&ten(), 0, PartitionScheme::Homogeneous).is_err());
    }

    #[test]
    fn test_phishing_like_shape() {
        let ds = phishing_like(500, 3);
        assert_eq!(ds.dim(), 68);
        assert_eq!(ds.len(), 500);
        for j in 0..ds.len() {
            assert_eq!(ds.row_norm_sq(j), 30.0);
        }
        let pos = ds.labels().iter().filter(|&&y| y > 0.0).count();
        assert!(pos > 50 && pos < 450);
        assert_eq!(phishing_like(20, 3), phishing_like(20, 3));
    }
}
