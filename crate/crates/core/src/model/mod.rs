//! The network: construction, forward passes, parameter
//! counting, test-time BN statistics and checkpoints.

mod checkpoint;
mod config;
mod net;

pub(crate) use checkpoint::Reader;
pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ModelConfig, Preset};
pub use net::{argmax_rows, Conv, Dense, ForwardOutput, GraphForward, Model};
