//! Model files, datasets and synthetic data generators.

pub mod data;
pub mod graph;
pub mod image;
pub mod io;
pub mod zoo;

pub use data::{synth_credit, synth_recidivism, FeatureKind, GeneratingRule, TabularDataset};
pub use graph::{barabasi_albert, GraphInstance};
pub use io::{load_model, parse_model, save_model};
