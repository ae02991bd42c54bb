//! Region-based classification.
//!
//! The region classifier labels `x` by sampling `m` points uniformly from
//! the hypercube `B(x, r) = {y in [0,1]^n : |y_j - x_j| <= r}` and taking a
//! majority vote of the base classifier over them. [`learn_radius`] picks
//! the largest `r` on a grid that keeps validation accuracy at least as high
//! as the base classifier's.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::rng::{derive_seed, rng_from_seed};

/// Samples per vote by default.
pub const DEFAULT_SAMPLES: usize = 1000;
/// Samples for the label histograms of the measurement study.
pub const HISTOGRAM_SAMPLES: usize = 10_000;
/// Samples are pushed through the base classifier this many at a time.
const CHUNK: usize = 256;

/// Anything that labels batches of points.
pub trait PointClassifier {
    fn input_dim(&self) -> usize;
    fn class_count(&self) -> usize;
    /// Labels of `count` row-major points.
    fn predict_batch(&self, xs: &[f64], count: usize) -> Result<Vec<usize>>;

    fn predict_one(&self, x: &[f64]) -> Result<usize> {
        Ok(self.predict_batch(x, 1)?[0])
    }
}

impl PointClassifier for Network {
    fn input_dim(&self) -> usize {
        Network::input_dim(self)
    }
    fn class_count(&self) -> usize {
        Network::class_count(self)
    }
    fn predict_batch(&self, xs: &[f64], count: usize) -> Result<Vec<usize>> {
        Network::predict_batch(self, xs, count)
    }
    fn predict_one(&self, x: &[f64]) -> Result<usize> {
        self.predict(x)
    }
}

impl<C: PointClassifier + ?Sized> PointClassifier for &C {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn class_count(&self) -> usize {
        (**self).class_count()
    }
    fn predict_batch(&self, xs: &[f64], count: usize) -> Result<Vec<usize>> {
        (**self).predict_batch(xs, count)
    }
    fn predict_one(&self, x: &[f64]) -> Result<usize> {
        (**self).predict_one(x)
    }
}

/// Per-class sample counts; they sum to the number of samples.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VoteCounts {
    pub counts: Vec<usize>,
}

impl VoteCounts {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Classes sharing the highest count, ascending.
    pub fn leaders(&self) -> Vec<usize> {
        let top = self.counts.iter().copied().max().unwrap_or(0);
        (0..self.counts.len())
            .filter(|&i| self.counts[i] == top)
            .collect()
    }

    /// Highest count; on a tie `preferred` if it is among the leaders, else
    /// the lowest leading index.
    pub fn winner(&self, preferred: Option<usize>) -> usize {
        let leaders = self.leaders();
        match preferred {
            Some(p) if leaders.contains(&p) => p,
            _ => leaders[0],
        }
    }

    pub fn is_tied(&self) -> bool {
        self.leaders().len() > 1
    }

    pub fn fraction(&self, class: usize) -> f64 {
        self.counts[class] as f64 / self.total() as f64
    }
}

/// `m` points drawn uniformly from `B(x, r)`, row-major. Sample `s`,
/// coordinate `j` is `lo_j + u * (hi_j - lo_j)` with `u` the next uniform
/// `f64` of ChaCha8 seeded with `seed`, taken sample by sample.
pub fn sample_hypercube(x: &[f64], r: f64, m: usize, seed: u64) -> Result<Vec<f64>> {
    check_point(x, r)?;
    let mut out = Vec::with_capacity(m * x.len());
    let mut sampler = CubeSampler::new(x, r, seed);
    for _ in 0..m {
        sampler.push_sample(&mut out);
    }
    Ok(out)
}

fn check_point(x: &[f64], r: f64) -> Result<()> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::param("radius must be finite and non-negative"));
    }
    for (index, &value) in x.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::FeatureRange { index, value });
        }
    }
    Ok(())
}

struct CubeSampler {
    lo: Vec<f64>,
    width: Vec<f64>,
    rng: crate::rng::ChaCha8Rng,
}

impl CubeSampler {
    fn new(x: &[f64], r: f64, seed: u64) -> Self {
        let lo: Vec<f64> = x.iter().map(|&v| (v - r).max(0.0)).collect();
        let width = x
            .iter()
            .zip(&lo)
            .map(|(&v, &l)| (v + r).min(1.0) - l)
            .collect();
        CubeSampler {
            lo,
            width,
            rng: rng_from_seed(seed),
        }
    }

    fn push_sample(&mut self, out: &mut Vec<f64>) {
        for (l, w) in self.lo.iter().zip(&self.width) {
            let u: f64 = self.rng.gen();
            out.push(l + u * w);
        }
    }
}

/// Votes of `base` over `m` samples of `B(x, r)` drawn with `seed`.
pub fn vote_counts<C: PointClassifier + ?Sized>(
    base: &C,
    x: &[f64],
    r: f64,
    m: usize,
    seed: u64,
) -> Result<VoteCounts> {
    Error::check_dim(base.input_dim(), x.len())?;
    check_point(x, r)?;
    if m == 0 {
        return Err(Error::param("sample count must be positive"));
    }
    let mut counts = vec![0; base.class_count()];
    let mut sampler = CubeSampler::new(x, r, seed);
    let mut buf = Vec::with_capacity(CHUNK.min(m) * x.len());
    let mut left = m;
    while left > 0 {
        let take = left.min(CHUNK);
        buf.clear();
        for _ in 0..take {
            sampler.push_sample(&mut buf);
        }
        for label in base.predict_batch(&buf, take)? {
            counts[label] += 1;
        }
        left -= take;
    }
    Ok(VoteCounts { counts })
}

/// Label of the vote; a tie goes to the base prediction at `x` when that
/// class is among the leaders, else to the lowest leading class. The extra
/// base evaluation at `x` happens only on ties.
pub fn classify_counts<C: PointClassifier + ?Sized>(
    base: &C,
    x: &[f64],
    votes: &VoteCounts,
) -> Result<usize> {
    if votes.is_tied() {
        Ok(votes.winner(Some(base.predict_one(x)?)))
    } else {
        Ok(votes.winner(None))
    }
}

/// Histogram of base labels over `B(x, r)` for the measurement study.
pub fn label_histogram<C: PointClassifier + ?Sized>(
    base: &C,
    x: &[f64],
    r: f64,
    m: usize,
    seed: u64,
) -> Result<VoteCounts> {
    vote_counts(base, x, r, m, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionClassifier<C = Network> {
    pub base: C,
    pub radius: f64,
    pub samples: usize,
    pub seed: u64,
}

impl<C: PointClassifier> RegionClassifier<C> {
    pub fn new(base: C, radius: f64, samples: usize, seed: u64) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::param("radius must be finite and non-negative"));
        }
        if samples == 0 {
            return Err(Error::param("sample count must be positive"));
        }
        Ok(RegionClassifier {
            base,
            radius,
            samples,
            seed,
        })
    }

    pub fn vote(&self, x: &[f64]) -> Result<VoteCounts> {
        self.vote_seeded(x, self.seed)
    }

    pub fn classify(&self, x: &[f64]) -> Result<usize> {
        self.classify_seeded(x, self.seed)
    }

    /// Vote with an explicit sampling seed instead of `self.seed`.
    pub fn vote_seeded(&self, x: &[f64], seed: u64) -> Result<VoteCounts> {
        vote_counts(&self.base, x, self.radius, self.samples, seed)
    }

    pub fn classify_seeded(&self, x: &[f64], seed: u64) -> Result<usize> {
        let votes = self.vote_seeded(x, seed)?;
        classify_counts(&self.base, x, &votes)
    }

    /// Seed used for example `index` of a dataset: `derive_seed(seed, index)`.
    pub fn example_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed, index as u64)
    }

    /// Accuracy on `data`, example `i` sampled with [`Self::example_seed`].
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let mut correct = 0;
        for (i, (x, label)) in data.iter().enumerate() {
            if self.classify_seeded(x, self.example_seed(i))? == label {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len() as f64)
    }
}

/// One radius tried by [`learn_radius`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusStep {
    pub radius: f64,
    /// Region accuracy was at least the point accuracy.
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiusSearch {
    pub radius: f64,
    pub point_correct: usize,
    pub validation_size: usize,
    pub steps: Vec<RadiusStep>,
}

impl RadiusSearch {
    pub fn point_accuracy(&self) -> f64 {
        self.point_correct as f64 / self.validation_size as f64
    }
}

/// Radius search. Candidate `k` is `r0 + k * step`. While the region
/// classifier at the candidate is at least as accurate on `validation` as
/// the base, move to the next candidate; return the last candidate that
/// passed, or `r0` when none did. Candidates past 1 are not tried: there
/// the cube is the whole unit box for every input.
///
/// Example `i` is always sampled with `derive_seed(seed, i)`, so every
/// radius sees the same random streams.
pub fn learn_radius(
    base: &Network,
    validation: &Dataset,
    m: usize,
    r0: f64,
    step: f64,
    seed: u64,
) -> Result<RadiusSearch> {
    learn_radius_with(base, validation, r0, step, |r, allowed_wrong| {
        let rc = RegionClassifier::new(base, r, m, seed)?;
        let mut wrong = 0;
        for (i, (x, label)) in validation.iter().enumerate() {
            if rc.classify_seeded(x, rc.example_seed(i))? != label {
                wrong += 1;
                if wrong > allowed_wrong {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    })
}

/// [`learn_radius`] with the region check supplied by the caller:
/// `passes(r, allowed_wrong)` must report whether the region classifier at
/// `r` makes at most `allowed_wrong` mistakes on `validation`, sampling
/// example `i` with `derive_seed(seed, i)`.
pub fn learn_radius_with<F>(
    base: &Network,
    validation: &Dataset,
    r0: f64,
    step: f64,
    mut passes: F,
) -> Result<RadiusSearch>
where
    F: FnMut(f64, usize) -> Result<bool>,
{
    if validation.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    if !(r0 >= 0.0 && r0.is_finite()) {
        return Err(Error::param("r0 must be finite and non-negative"));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::param("radius step must be positive"));
    }
    let preds = base.predict_batch(validation.features(), validation.len())?;
    let point_correct = preds
        .iter()
        .zip(validation.labels())
        .filter(|(p, l)| p == l)
        .count();
    let allowed_wrong = validation.len() - point_correct;

    let mut steps = Vec::new();
    let mut radius = r0;
    for k in 0.. {
        let r = r0 + k as f64 * step;
        if r > 1.0 && k > 0 {
            break;
        }
        let passed = passes(r, allowed_wrong)?;
        steps.push(RadiusStep { radius: r, passed });
        if !passed {
            break;
        }
        radius = r;
    }
    Ok(RadiusSearch {
        radius,
        point_correct,
        validation_size: validation.len(),
        steps,
    })
}
