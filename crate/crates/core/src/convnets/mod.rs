//! Point-based baselines and the brute-force oracles that verify the
//! landmark module.

mod attention;
mod blocks;
pub mod oracle;

pub use attention::AttentionLayer;
pub use blocks::{DilatedBlock, PointwiseBlock, DILATION};
pub use oracle::region_max_oracle;
