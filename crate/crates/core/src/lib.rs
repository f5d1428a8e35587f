//! Pooled membership inference (PMI) and the ownership fingerprint built on it.
//!
//! Given a trained classifier and `m` equally sized mini-datasets of one
//! class, exactly one of which was part of the training set, PMI names that
//! one from the model's logits alone. Repeating the experiment `t` times per
//! class gives a success rate `acc_r`; a rate sufficiently above the `1/m`
//! guessing baseline is evidence that the model was trained on the owner's
//! data. The model itself is never modified.
//!
//! The crate is organized bottom-up:
//!
//! - [`dataset`]: samples, the train/holdout split, member and non-member
//!   pools, and trial sampling.
//! - [`nn`]: the small ReLU perceptron that plays the protected model, with
//!   training, fine-tuning, and pruning.
//! - [`pmi`]: feature extraction, joint normalization, unbiased MMD,
//!   single-linkage clustering, and the outlier rule.
//! - [`protocol`]: repeated trials per class, `r_opt`, and the verdict.
//! - [`oracle`]: slow reference implementations and the self-check.
//!
//! ```
//! use pmi_core::pmi::{mmd_unbiased, FeatureMatrix};
//!
//! let x = FeatureMatrix::new(vec![vec![1.0, 0.0], vec![1.0, 0.0]], 0)?;
//! let y = FeatureMatrix::new(vec![vec![0.0, 1.0], vec![0.0, 1.0]], 1)?;
//! assert!((mmd_unbiased(&x, &y)? - 2f64.sqrt()).abs() < 1e-15);
//! # Ok::<(), pmi_core::Error>(())
//! ```

pub mod dataset;
pub mod error;
pub mod nn;
pub mod oracle;
pub mod pmi;
pub mod protocol;

pub use error::{Error, PoolKind, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator behind every seeded operation in the crate.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

// The guide's code blocks compile and run as doctests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/pools.md")]
    mod pools {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/mmd.md")]
    mod mmd {}
    #[doc = include_str!("../../../book/src/clustering.md")]
    mod clustering {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/attacks.md")]
    mod attacks {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}
