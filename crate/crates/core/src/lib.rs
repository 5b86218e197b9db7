pub mod agreement;
pub mod anchors;
pub mod attribution;
pub mod charts;
pub mod dataset;
pub mod ebm;
pub mod error;
pub mod explain;
pub mod lime;
pub mod models;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod shap;

pub use error::{Error, Result};
