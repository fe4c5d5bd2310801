//! The enhancement network and its configuration.

pub mod blocks;
pub mod config;
pub mod io;
pub mod net;

pub use config::{FreqScale, Mode, ModelConfig, Target};
pub use io::average_checkpoints;
pub use net::{pack_bands, pack_spectrograms, unpack_bands, EnhancementModel, ModelCache, ModelState};
