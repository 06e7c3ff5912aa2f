//! Flow file formats, metrics, visualization, dataset ingestion and run
//! configuration.

pub mod config;
pub mod dataset;
pub mod flo;
pub mod imageio;
pub mod kitti;
mod metrics;
mod viz;

pub use config::{Preset, RunConfig};
pub use dataset::{ingest_dataset, Dataset, FramePair, FrameTriplet, Layout};
pub use flo::{read_flo, write_flo};
pub use imageio::{read_flow_file, read_image, write_flow_file, write_image, ImageEncoding};
pub use kitti::{read_kitti_png, write_kitti_png};
pub use metrics::{epe, error_rate, evaluate, ErrorRateMode, EvalStats};
pub use viz::{colorize_flow, hue_of};

use crate::field::{FlowField, Plane};

/// File format a flow was read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowFormat {
    Flo,
    KittiPng,
}

/// A flow read from disk with its per-pixel validity.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowFileRecord {
    pub flow: FlowField,
    pub valid: Plane,
    pub format: FlowFormat,
}

impl FlowFileRecord {
    /// Wraps an in-memory flow as fully valid ground truth.
    pub fn dense(flow: FlowField) -> Self {
        let valid = Plane::filled(flow.height(), flow.width(), 1.0);
        Self {
            flow,
            valid,
            format: FlowFormat::Flo,
        }
    }
}
