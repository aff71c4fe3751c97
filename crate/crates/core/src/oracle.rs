//! Inverse decoders: build raw tensors that decode to chosen detections.
//!
//! Test-only. Round-trip suites encode ground truth here and check that
//! [`crate::decode`] recovers it.

use alloc::vec;
use alloc::vec::Vec;

use crate::anchors::{yolo_grid_shapes, PriorBox, YoloAnchorConfig};
use crate::decode::{Layout, RawTensor, SsdVariances};
use crate::geometry::{iou, BoundingBox, ImageDims};

/// Logit used for "nothing here".
pub const BACKGROUND_LOGIT: f32 = -30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodedObject {
    pub class: u32,
    pub bbox: BoundingBox,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EncodeError {
    NoAnchorFits(BoundingBox),
    SlotTaken(BoundingBox),
    BadConfidence(f64),
}

fn logit(p: f64) -> f64 {
    libm::log(p / (1.0 - p))
}

/// YOLO tensors (one per scale, config order) holding `objects` and
/// background everywhere else.
pub fn encode_yolo(
    objects: &[EncodedObject],
    cfg: &YoloAnchorConfig,
    num_classes: usize,
    dims: ImageDims,
) -> Result<Vec<RawTensor>, EncodeError> {
    let shapes = yolo_grid_shapes(cfg, num_classes).expect("valid anchor config");
    let mut buffers: Vec<Vec<f32>> = shapes
        .iter()
        .map(|s| {
            let mut v = vec![0.0f32; s.dims().iter().product()];
            for cell in v.chunks_mut(s.channels) {
                cell[4..].fill(BACKGROUND_LOGIT);
            }
            v
        })
        .collect();
    let mut taken = Vec::new();
    let sx = f64::from(cfg.input_size) / f64::from(dims.width());
    let sy = f64::from(cfg.input_size) / f64::from(dims.height());
    for obj in objects {
        if !(obj.confidence > 0.0 && obj.confidence < 1.0) {
            return Err(EncodeError::BadConfidence(obj.confidence));
        }
        let (cx, cy) = obj.bbox.center();
        let (cx, cy) = (cx * sx, cy * sy);
        let (w, h) = (obj.bbox.width() * sx, obj.bbox.height() * sy);
        // Anchor whose log-scale mismatch is smallest, within the (2σ)^2 < 4 range.
        let mut best: Option<(usize, usize, f64)> = None;
        for (si, scale) in cfg.scales.iter().enumerate() {
            for (ai, &(aw, ah)) in scale.anchors.iter().enumerate() {
                let (rw, rh) = (w / aw, h / ah);
                if !(rw > 0.0 && rw < 3.9 && rh > 0.0 && rh < 3.9) {
                    continue;
                }
                let cost = libm::fabs(libm::log(rw)).max(libm::fabs(libm::log(rh)));
                if best.is_none_or(|b| cost < b.2) {
                    best = Some((si, ai, cost));
                }
            }
        }
        let (si, ai, _) = best.ok_or(EncodeError::NoAnchorFits(obj.bbox))?;
        let shape = shapes[si];
        let stride = f64::from(cfg.scales[si].stride);
        let (aw, ah) = cfg.scales[si].anchors[ai];
        let col = libm::floor(cx / stride).clamp(0.0, (shape.grid - 1) as f64);
        let row = libm::floor(cy / stride).clamp(0.0, (shape.grid - 1) as f64);
        let key = (si, ai, row as usize, col as usize);
        if taken.contains(&key) {
            return Err(EncodeError::SlotTaken(obj.bbox));
        }
        taken.push(key);
        let off = ((ai * shape.grid + row as usize) * shape.grid + col as usize) * shape.channels;
        let cell = &mut buffers[si][off..off + shape.channels];
        cell[0] = logit((cx / stride - col + 0.5) / 2.0) as f32;
        cell[1] = logit((cy / stride - row + 0.5) / 2.0) as f32;
        cell[2] = logit(libm::sqrt(w / aw) / 2.0) as f32;
        cell[3] = logit(libm::sqrt(h / ah) / 2.0) as f32;
        let half = logit(libm::sqrt(obj.confidence)) as f32;
        cell[4] = half;
        cell[5 + obj.class as usize] = half;
    }
    Ok(shapes
        .iter()
        .zip(buffers)
        .map(|(s, v)| RawTensor::new(s.dims().to_vec(), Layout::Ahwc, v).expect("consistent shape"))
        .collect())
}

/// SSD location and score tensors. Each object claims the free prior with
/// the highest IoU; every other prior scores as background.
///
/// The object's class gets probability `confidence`; the remaining
/// `num_classes` entries (background included) share `1 - confidence`.
pub fn encode_ssd(
    objects: &[EncodedObject],
    priors: &[PriorBox],
    num_classes: usize,
    dims: ImageDims,
    variances: SsdVariances,
) -> Result<(RawTensor, RawTensor), EncodeError> {
    let columns = num_classes + 1;
    let mut loc = vec![0.0f32; priors.len() * 4];
    let mut scores = vec![0.0f32; priors.len() * columns];
    for row in scores.chunks_mut(columns) {
        row[0] = -BACKGROUND_LOGIT;
    }
    let (w_px, h_px) = (f64::from(dims.width()), f64::from(dims.height()));
    let mut used = vec![false; priors.len()];
    for obj in objects {
        if !(obj.confidence > 0.0 && obj.confidence < 1.0) {
            return Err(EncodeError::BadConfidence(obj.confidence));
        }
        let target = BoundingBox::from_points(
            obj.bbox.x_min / w_px,
            obj.bbox.y_min / h_px,
            obj.bbox.x_max / w_px,
            obj.bbox.y_max / h_px,
        );
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in priors.iter().enumerate() {
            if used[i] {
                continue;
            }
            let v = iou(&target, &p.to_pixels(1.0, 1.0));
            if best.is_none_or(|b| v > b.1) {
                best = Some((i, v));
            }
        }
        let (i, _) = best.ok_or(EncodeError::SlotTaken(obj.bbox))?;
        used[i] = true;
        let pb = priors[i].bbox;
        let (cx, cy) = target.center();
        loc[i * 4] = ((cx - pb.cx) / (variances.center * pb.w)) as f32;
        loc[i * 4 + 1] = ((cy - pb.cy) / (variances.center * pb.h)) as f32;
        loc[i * 4 + 2] = (libm::log(target.width() / pb.w) / variances.size) as f32;
        loc[i * 4 + 3] = (libm::log(target.height() / pb.h) / variances.size) as f32;
        let row = &mut scores[i * columns..(i + 1) * columns];
        row.fill(0.0);
        row[1 + obj.class as usize] =
            libm::log(obj.confidence * num_classes as f64 / (1.0 - obj.confidence)) as f32;
    }
    Ok((
        RawTensor::new(vec![priors.len(), 4], Layout::PriorLocations, loc)
            .expect("consistent shape"),
        RawTensor::new(vec![priors.len(), columns], Layout::PriorScores, scores)
            .expect("consistent shape"),
    ))
}
