//! Cross-modal person re-identification on precomputed features.
//!
//! The crate covers the learning and evaluation pipeline that sits after
//! feature extraction:
//!
//! * [`linalg`]: dense symmetric eigensolvers (Jacobi), Cholesky and the
//!   generalized symmetric-definite problem.
//! * [`cca`]: regularized canonical correlation analysis bridging vision and
//!   language features, plus the scenario-specific feature fusion.
//! * [`xqda`]: cross-view quadratic discriminant analysis metric learning.
//! * [`textprep`] and [`textcnn`]: word-embedding tensors, augmentation and a
//!   small convolutional text network trained from scratch.
//! * [`eval`]: score matrices, CMC curves, multi-split scenario evaluation and
//!   the attribute bit-flip simulation.
//! * [`synth`]: a seeded paired-modality generator and brute-force oracles.
//!
//! Everything here is `no_std` with `alloc`; file formats and the command-line
//! driver live in the companion `xmreid` crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod cca;
pub mod dataset;
pub mod eval;
pub mod features;
pub mod linalg;
pub mod rng;
pub mod synth;
pub mod textcnn;
pub mod textprep;
pub mod xqda;

pub use cca::{CcaModel, Scenario};
pub use dataset::{Dataset, Sample, SplitAssignment, View};
pub use eval::{CmcResult, SplitReport};
pub use linalg::{EigenResult, LinalgError, Matrix};
pub use rng::CounterRng;
pub use xqda::XqdaModel;
