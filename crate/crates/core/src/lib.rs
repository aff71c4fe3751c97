//! Algorithms behind the mitescan detection toolkit.
//!
//! Everything here is pure computation over values: no files, no threads, no
//! clocks. The crate is `no_std` and only needs an allocator, so it can sit
//! under an embedded monitoring unit as easily as under the desktop CLI in the
//! `mitescan` crate, which layers file formats and parallel drivers on top.
//!
//! Pipeline stages, in the order data flows through them:
//!
//! 1. [`geometry`] – corner/center boxes, IoU, quarter-turn rotation.
//! 2. [`dataset`] – the six-class bee taxonomy, the three label remaps,
//!    histograms and the consistency audit.
//! 3. [`augment`] – deterministic 44x expansion plans for a training split.
//! 4. [`anchors`] – YOLO grid shapes and SSD prior boxes.
//! 5. [`decode`] – raw output tensors to thresholded, suppressed detections.
//! 6. [`metrics`] – matching, precision/recall/F1, AP and mAP.
//! 7. [`report`] – result-table rows and infestation summaries.
#![no_std]

extern crate alloc;

pub mod anchors;
pub mod augment;
pub mod dataset;
pub mod decode;
pub mod geometry;
pub mod metrics;
pub mod report;

#[cfg(any(test, feature = "oracle"))]
pub mod oracle;

pub use geometry::{iou, BoundingBox, GeometryError, ImageDims, NormCenterBox};
