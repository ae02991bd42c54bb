//! Examples in the unit hypercube and the datasets built from them.

use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// A point of `[0, 1]^n` with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: usize,
}

/// Examples stored row-major in one buffer.
///
/// Construction checks that every feature lies in `[0, 1]` and every label is
/// below `class_count`; after that a dataset is immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    feature_dim: usize,
    class_count: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        feature_dim: usize,
        class_count: usize,
    ) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::param("feature_dim must be positive"));
        }
        if class_count == 0 {
            return Err(Error::param("class_count must be positive"));
        }
        Error::check_dim(labels.len() * feature_dim, features.len())?;
        if let Some((index, &value)) = features
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::FeatureRange { index, value });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::LabelRange { label, class_count });
        }
        Ok(Dataset {
            features,
            labels,
            feature_dim,
            class_count,
        })
    }

    pub fn from_examples(
        examples: &[Example],
        feature_dim: usize,
        class_count: usize,
    ) -> Result<Self> {
        let mut features = Vec::with_capacity(examples.len() * feature_dim);
        let mut labels = Vec::with_capacity(examples.len());
        for e in examples {
            Error::check_dim(feature_dim, e.features.len())?;
            features.extend_from_slice(&e.features);
            labels.push(e.label);
        }
        Dataset::new(features, labels, feature_dim, class_count)
    }

    pub fn empty(feature_dim: usize, class_count: usize) -> Self {
        Dataset {
            features: Vec::new(),
            labels: Vec::new(),
            feature_dim,
            class_count,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Feature row `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn example(&self, i: usize) -> Example {
        Example {
            features: self.row(i).to_vec(),
            label: self.labels[i],
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&[f64], usize)> + '_ {
        self.features
            .chunks_exact(self.feature_dim)
            .zip(self.labels.iter().copied())
    }

    /// New dataset made of the rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.feature_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            labels,
            feature_dim: self.feature_dim,
            class_count: self.class_count,
        }
    }

    /// The first `count` rows (or all of them).
    pub fn take(&self, count: usize) -> Dataset {
        let count = count.min(self.len());
        Dataset {
            features: self.features[..count * self.feature_dim].to_vec(),
            labels: self.labels[..count].to_vec(),
            feature_dim: self.feature_dim,
            class_count: self.class_count,
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        Error::check_dim(self.feature_dim, other.feature_dim)?;
        Error::check_dim(self.class_count, other.class_count)?;
        let mut features = self.features.clone();
        features.extend_from_slice(&other.features);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(Dataset {
            features,
            labels,
            feature_dim: self.feature_dim,
            class_count: self.class_count,
        })
    }
}

/// How many examples go to each split, and the seed for the validation draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub train_count: usize,
    pub validation_count: usize,
    pub test_count: usize,
    pub seed: u64,
}

impl SplitSpec {
    /// 55,000 / 5,000 / 10,000.
    pub fn mnist(seed: u64) -> Self {
        SplitSpec {
            train_count: 55_000,
            validation_count: 5_000,
            test_count: 10_000,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    /// Pool indices of the validation examples, ascending.
    pub validation_indices: Vec<usize>,
}

/// Uniform integer in `0..bound` (Lemire's widening multiply with rejection).
fn bounded(rng: &mut impl Rng, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    let threshold = bound.wrapping_neg() % bound;
    loop {
        let m = u128::from(rng.next_u64()) * u128::from(bound);
        if (m as u64) >= threshold {
            return (m >> 64) as u64;
        }
    }
}

/// Splits a training pool into train and validation and trims the predefined
/// test set.
///
/// Validation is a uniform sample without replacement: the first
/// `validation_count` steps of a Fisher-Yates shuffle of `0..pool.len()`
/// driven by ChaCha8 seeded with `spec.seed`, each step drawing with
/// [`bounded`]. Train is the first `train_count` remaining pool examples in
/// their original order. Test is the first `test_count` rows of `test`.
pub fn split(pool: &Dataset, test: &Dataset, spec: &SplitSpec) -> Result<Split> {
    let requested = spec.train_count + spec.validation_count;
    if requested > pool.len() {
        return Err(Error::Capacity {
            requested,
            available: pool.len(),
        });
    }
    if spec.test_count > test.len() {
        return Err(Error::Capacity {
            requested: spec.test_count,
            available: test.len(),
        });
    }
    Error::check_dim(pool.feature_dim(), test.feature_dim())?;

    let mut rng = rng_from_seed(spec.seed);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    let n = order.len();
    for i in 0..spec.validation_count {
        let j = i + bounded(&mut rng, (n - i) as u64) as usize;
        order.swap(i, j);
    }
    let mut validation_indices = order[..spec.validation_count].to_vec();
    validation_indices.sort_unstable();

    let mut in_validation = alloc::vec![false; n];
    for &i in &validation_indices {
        in_validation[i] = true;
    }
    let train_indices: Vec<usize> = (0..n)
        .filter(|&i| !in_validation[i])
        .take(spec.train_count)
        .collect();

    Ok(Split {
        train: pool.select(&train_indices),
        validation: pool.select(&validation_indices),
        test: test.take(spec.test_count),
        validation_indices,
    })
}

/// Standard deviation of each blob coordinate in [`synth_blobs`].
pub const BLOB_STD: f64 = 0.05;

/// Gaussian blobs inside `[0, 1]^dim`, `per_class` samples per class.
///
/// Class centers sit on a circle of diameter `separation` around the cube
/// center in the first two coordinates (on a segment of length `separation`
/// along the first coordinate when `dim == 1`); the remaining coordinates are
/// centered at 0.5. Samples are clipped to the cube, so per-class counts are
/// exact. Examples are emitted class by class.
pub fn synth_blobs(
    class_count: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    synth_blobs_with_std(class_count, per_class, dim, separation, BLOB_STD, seed)
}

pub fn synth_blobs_with_std(
    class_count: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    std: f64,
    seed: u64,
) -> Result<Dataset> {
    if class_count < 2 {
        return Err(Error::param("synth_blobs needs at least 2 classes"));
    }
    if dim == 0 {
        return Err(Error::param("synth_blobs needs dim >= 1"));
    }
    if !(0.0..=1.0).contains(&separation) {
        return Err(Error::param("separation must lie in [0, 1]"));
    }
    if !(std >= 0.0) {
        return Err(Error::param("std must be non-negative"));
    }

    let centers: Vec<Vec<f64>> = (0..class_count)
        .map(|c| {
            let mut center = alloc::vec![0.5; dim];
            if dim == 1 {
                center[0] = 0.5 + separation * (c as f64 / (class_count - 1) as f64 - 0.5);
            } else {
                let angle = 2.0 * core::f64::consts::PI * c as f64 / class_count as f64;
                center[0] = 0.5 + 0.5 * separation * libm::cos(angle);
                center[1] = 0.5 + 0.5 * separation * libm::sin(angle);
            }
            center
        })
        .collect();

    let mut rng = rng_from_seed(seed);
    let mut features = Vec::with_capacity(class_count * per_class * dim);
    let mut labels = Vec::with_capacity(class_count * per_class);
    for (label, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            for &c in center {
                let v = c + std * standard_normal(&mut rng);
                features.push(v.clamp(0.0, 1.0));
            }
            labels.push(label);
        }
    }
    Dataset::new(features, labels, dim, class_count)
}

/// Box-Muller, one draw per call.
pub(crate) fn standard_normal(rng: &mut impl Rng) -> f64 {
    // u1 in (0, 1] keeps the log finite.
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}
