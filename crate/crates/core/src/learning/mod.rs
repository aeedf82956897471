//! Desk-scale learning tasks: datasets, models with analytic gradients,
//! local mini-batch SGD and accuracy measurement.

mod data;
mod idx;
mod model;
mod sgd;

pub use data::{even_partition, make_synthetic, Dataset, SyntheticTask};
pub use idx::{load_mnist_idx, parse_idx_images, parse_idx_labels};
pub use model::{sample_loss_grad, test_accuracy, Model, ModelKind};
pub use sgd::local_sgd;
