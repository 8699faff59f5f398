//! A compact 1D convolutional network for motor-imagery EEG decoding,
//! together with everything needed to train and evaluate it.
//!
//! ```text
//! data        ESC1 trial archives, split plans, synthetic generator
//! preprocess  high-pass -> resample -> epoch -> Euclidean Alignment -> z-score
//! model       network construction, forward passes, test-time BN statistics
//! training    Adam with one step decay, mixup, subject-wise auxiliary head
//! evaluation  W-S / C-S / C-S F-T / MDL paradigms, offline and online rules
//! bench       single-trial latency measurement
//! ```
//!
//! The numeric core (`tensor`, `ops`, `autodiff`, `optim`) is a small dense
//! engine with reverse-mode differentiation written for this network.

pub mod autodiff;
pub mod bench;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod ops;
pub mod optim;
pub mod preprocess;
pub mod tensor;
pub mod training;

pub use error::{Error, FormatError, Result};
pub use tensor::{Scalar, Tensor};
