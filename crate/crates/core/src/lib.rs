//! Region-based classification and evasion attacks on small feed-forward
//! classifiers.
//!
//! The crate is `no_std` (with `alloc`). Everything that touches files, the
//! command line or wall clocks lives in the `regionclf` companion crate.
//!
//! Layout:
//!
//! - [`dataset`]: unit-hypercube examples, seeded splits and synthetic blobs.
//! - [`network`]: a dense/ReLU network with exact input, logit and parameter
//!   gradients.
//! - [`training`]: standard, adversarial (DeepFool twins) and distilled
//!   training with plain mini-batch SGD.
//! - [`attacks`]: FGSM, IGSM, JSMA, the three CW attacks, DeepFool, the
//!   untargeted conversion, combined and adapted attacks.
//! - [`region`]: hypercube sampling, majority vote and radius search.
//! - [`evaluation`]: campaigns, success rates and the parameter sweeps.
#![no_std]
#![deny(missing_debug_implementations)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod attacks;
pub mod dataset;
pub mod error;
pub mod evaluation;
mod linalg;
pub mod network;
pub mod region;
pub mod rng;
pub mod training;

pub use attacks::{AttackOutcome, Noise, NoiseMetric};
pub use dataset::{Dataset, Example, SplitSpec};
pub use error::{Error, Result};
pub use network::{LayerSpec, Network};
pub use region::{RegionClassifier, VoteCounts};
