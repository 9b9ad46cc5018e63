//! Histogram-based gradient-boosted decision trees for multiclass problems.
//!
//! Trees grow leaf-wise on quantile-binned features. Rows may be thinned
//! with gradient-based one-side sampling or plain bagging, and mutually
//! exclusive sparse features can share a histogram column.

pub mod bins;
pub mod data;
pub mod efb;
pub mod ensemble;
pub mod error;
pub mod histogram;
pub mod objective;
pub mod params;
pub mod sampling;
pub mod split;
pub mod tree;

pub use bins::{build_bins, BinMapper};
pub use data::{Dataset, FeatureMatrix};
pub use efb::{efb_bundle, BundlePlan};
pub use ensemble::{argmax, bin_dataset, train, train_with_validation, BoostedEnsemble, TrainLog, MODEL_FORMAT_VERSION};
pub use error::{BoostError, Result};
pub use histogram::{build_histograms, BinStats, FeatureHistogram, RowStats};
pub use objective::{log_loss, softmax, softmax_gradients};
pub use params::TrainParams;
pub use sampling::{goss_sample, RowSample};
pub use split::{find_best_split, SplitCandidate};
pub use tree::{grow_tree_leafwise, GrowLimits, Node, Tree, LEAF_L2};
