//! Multi-view detection post-processing for kaleidoscopic images: box warping
//! through disparity maps, ensemble fusion across viewpoints, COCO-style
//! evaluation with grouped cross-validation, and a synthetic scene generator.

pub mod eval;
pub mod fusion;
pub mod io;
pub mod model;
pub mod rng;
pub mod synthgen;
pub mod warp;

pub use fusion::{mv_infer, FusionMethod, FusionParams, MvConfig};
pub use model::{BBox, ClassTable, DatasetManifest, Detection, DisparityField, ImageSize, KaleidoFrame, ViewpointId};
pub use warp::{BackwardMode, BorderMode, WarpPolicy};
