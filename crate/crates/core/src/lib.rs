//! Semantics-aware distance maps for amodal instance segmentation.
//!
//! A sem-dist map stores, for one object, `C - L` at every pixel of its amodal
//! extent: `L` is the number of objects that must be removed before the pixel
//! becomes visible and `C` is the confidence of occurrence. Thresholding the
//! map yields the modal and amodal masks, and the difference of integer parts
//! between two maps yields their pixel-wise depth order.
//!
//! Modules:
//! - [`types`]: masks, layer-stack scenes, annotations, the evaluation report
//! - [`codec`]: encoding, decoding, depth ordering and layering targets
//! - [`compositor`]: seeded synthetic scenes, rendering and prediction perturbation
//! - [`metrics`]: IoU, greedy matching, AP / AR and order accuracy
//! - [`losses`]: binary cross entropy, smooth L1 and the weighted total
//! - [`io`]: RLE, scene and annotation JSON, the `SDM1` binary format, PNM, COCOA import

pub mod codec;
pub mod compositor;
pub mod error;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod types;

pub use codec::{ConfidencePolicy, LayeringMap, ObjectOrder, SemDistMap};
pub use error::{Error, Result};
pub use types::{BinaryMask, EvalReport, Grid, Instance, InstanceAnnotation, InstanceId, LayerStackScene};
