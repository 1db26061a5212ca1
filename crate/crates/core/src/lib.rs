//! Curvature-adaptive k-nearest-neighbour classification.
//!
//! Each training sample gets a Gaussian-curvature estimate from its k-NN
//! patch; curvatures are quantized into scores 0..=9 and a sample with score
//! `c` votes with only its `max(1, k - c)` nearest neighbours.
//!
//! ```
//! use kknn::{classifier, dataset::Dataset};
//!
//! let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * i % 7) as f64]).collect();
//! let labels: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
//! let train = Dataset::from_rows(&rows, labels).unwrap();
//! let model = classifier::fit(&train, 4).unwrap();
//! let p = model.predict_one(&[18.5, 2.0]).unwrap();
//! assert_eq!(p.label, 1);
//! assert!(p.effective_k >= 1 && p.effective_k <= 4);
//! ```

pub mod benchmark;
pub mod classifier;
pub mod cli;
pub mod curvature;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod knn_graph;
mod linalg;
pub mod metrics;

pub use classifier::{fit, predict, Method, Prediction, TrainedModel};
pub use dataset::Dataset;
pub use error::{KknnError, Result};
pub use exec::Exec;
