//! Dataset files, synthetic data, exact ground truth and recall metrics.

mod recall;
mod report;
mod synth;
mod truth;
mod vecs;

pub use recall::{distance_threshold_recall, recall_at_k};
pub use report::Report;
pub use synth::{gen_clustered_with_labels, gen_random_dataset, synth_shifted_copies, Distribution};
pub use truth::{brute_force_knng, dataset_digest, GroundTruth, GroundTruthCache};
pub use vecs::{read_vecs, vecs_extension, write_vecs};
