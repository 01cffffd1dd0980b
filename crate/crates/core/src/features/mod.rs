//! Analysis artifacts and the supervised lagged dataset.

mod correlation;
mod kde;
mod presence;
mod split;
mod supervised;

pub use correlation::correlation_matrix;
pub use kde::{default_grid, kde, silverman_bandwidth, DensityEstimate};
pub use presence::{peptide_presence, presence_column, top_peptides};
pub use split::{split, split_patients};
pub use supervised::{
    build_supervised, build_supervised_with, enumerate_pairs, FeatureLayout, LagConfig,
    Provenance, SupervisedSet,
};
