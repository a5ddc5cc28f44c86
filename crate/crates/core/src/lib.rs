//! Learn a scalar attractiveness score for items from crowd rating
//! distributions: absolute 1-3 star ratings per item and 5-level relative
//! ratings per pair, combined by a Siamese hybrid distribution-matching loss.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod loss;
pub mod model;
pub mod net;
pub mod numeric;
pub mod rating;
pub mod sampler;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
