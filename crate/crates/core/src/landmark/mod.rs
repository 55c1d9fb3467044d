//! Region-based landmark feature convolution.

mod dmp;
mod heatmap;
mod layer;
mod partition;

pub use dmp::{dmp_backward, dmp_scan, dmp_scan_parallel, dmp_scan_with, IndexMap, ScanFaults, ScanOutput};
pub use heatmap::{splat_heatmap, write_pgm, DEFAULT_SIGMA_CELLS};
pub use layer::{decode_landmarks, Landmark, LandmarkStore, LfcConfig, LfcLayer, LfcOutput};
pub use partition::{DmpDirection, PartitionScheme, ScanMode};
