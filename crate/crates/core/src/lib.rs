//! Spatial-temporal graph aggregation and graph-based channel selection for
//! multi-channel speaker verification with ad-hoc microphone arrays.
//!
//! Frame-level speaker embeddings from `C` channels and `T` frames form a
//! `C×T×D` tensor. A stack of spatial-temporal blocks mixes information along
//! time (per channel) and across channels (per frame) with adjacency-masked
//! attention, a channel-selection step keeps the useful channels, and average
//! pooling produces the utterance-level embedding used for verification.
//!
//! Every trainable block ships a forward pass and a hand-derived backward pass;
//! [`diffcore::gradcheck`] verifies them against central finite differences.

pub mod bench;
pub mod chansel;
pub mod cli;
pub mod diffcore;
pub mod error;
pub mod frames;
pub mod fsutil;
pub mod graphs;
pub mod scenesim;
pub mod stagg;
pub mod trainer;

pub use error::{Error, Result};
pub use frames::FrameTensor;
pub use graphs::{AdjacencyMatrix, SelectionMask};
pub use scenesim::{Scene, SimConfig};
