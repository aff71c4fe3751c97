//! Raw detector outputs to pixel-space detections.
//!
//! YOLO tensors use the cell-relative convention of YOLOv5: centers are
//! `(cell + 2σ(t) - 0.5) * stride`, sizes are `anchor * (2σ(t))^2`, and the
//! confidence is objectness times the best class probability. SSD location
//! rows are center offsets against a prior scaled by the variances, score rows
//! are logits over `background + N` classes.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::anchors::{yolo_grid_shapes, AnchorError, PriorBox, YoloAnchorConfig};
use crate::geometry::{iou, BoundingBox, ImageDims};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layout {
    /// `anchors, height, width, channels` YOLO scale output.
    Ahwc,
    /// `priors, 4` SSD location regressions.
    PriorLocations,
    /// `priors, classes + 1` SSD score logits.
    PriorScores,
}

impl Layout {
    pub fn tag(self) -> &'static str {
        match self {
            Layout::Ahwc => "A,H,W,C",
            Layout::PriorLocations => "P,4",
            Layout::PriorScores => "P,C",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        [Layout::Ahwc, Layout::PriorLocations, Layout::PriorScores]
            .into_iter()
            .find(|l| l.tag() == tag)
    }

    fn rank(self) -> usize {
        match self {
            Layout::Ahwc => 4,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecodeError {
    ValueCount {
        expected: usize,
        got: usize,
    },
    NonFinite {
        index: usize,
    },
    Rank {
        layout: Layout,
        dims: Vec<usize>,
    },
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    WrongLayout {
        expected: Layout,
        got: Layout,
    },
    TensorCount {
        expected: usize,
        got: usize,
    },
    Anchors(AnchorError),
    InvalidThreshold(f64),
}

impl fmt::Display for DecodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecodeError::ValueCount { expected, got } => {
                write!(f, "tensor holds {got} values but its dims need {expected}")
            }
            DecodeError::NonFinite { index } => write!(f, "non-finite value at flat index {index}"),
            DecodeError::Rank { layout, dims } => {
                write!(
                    f,
                    "layout {} needs rank {}, got dims {dims:?}",
                    layout.tag(),
                    layout.rank()
                )
            }
            DecodeError::ShapeMismatch { expected, got } => {
                write!(
                    f,
                    "tensor shape {got:?} does not match expected {expected:?}"
                )
            }
            DecodeError::WrongLayout { expected, got } => {
                write!(f, "expected a {} tensor, got {}", expected.tag(), got.tag())
            }
            DecodeError::TensorCount { expected, got } => {
                write!(f, "expected {expected} tensors, got {got}")
            }
            DecodeError::Anchors(e) => write!(f, "{e}"),
            DecodeError::InvalidThreshold(t) => write!(f, "threshold {t} is outside [0, 1]"),
        }
    }
}

impl core::error::Error for DecodeError {}

impl From<AnchorError> for DecodeError {
    fn from(e: AnchorError) -> Self {
        DecodeError::Anchors(e)
    }
}

/// Row-major tensor of finite `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    dims: Vec<usize>,
    layout: Layout,
    values: Vec<f32>,
}

impl RawTensor {
    pub fn new(dims: Vec<usize>, layout: Layout, values: Vec<f32>) -> Result<Self, DecodeError> {
        if dims.len() != layout.rank() || dims.contains(&0) {
            return Err(DecodeError::Rank { layout, dims });
        }
        let expected: usize = dims.iter().product();
        if values.len() != expected {
            return Err(DecodeError::ValueCount {
                expected,
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(DecodeError::NonFinite { index });
        }
        Ok(Self {
            dims,
            layout,
            values,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    fn row(&self, i: usize) -> &[f32] {
        let width = *self.dims.last().unwrap_or(&0);
        &self.values[i * width..(i + 1) * width]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: String,
    pub class: u32,
    pub bbox: BoundingBox,
    pub confidence: f64,
}

/// Confidence descending, then box lexicographic, then class.
pub fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| a.bbox.lexicographic_cmp(&b.bbox))
        .then(a.class.cmp(&b.class))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsdVariances {
    pub center: f64,
    pub size: f64,
}

impl Default for SsdVariances {
    fn default() -> Self {
        Self {
            center: 0.1,
            size: 0.2,
        }
    }
}

/// Box parameterisation for YOLO outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum YoloActivation {
    /// `2σ - 0.5` center offsets and `(2σ)^2` anchor scaling.
    #[default]
    ScaledSigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeParams {
    pub confidence_threshold: f64,
    pub nms_iou_threshold: f64,
    pub variances: SsdVariances,
    pub yolo_activation: YoloActivation,
}

impl DecodeParams {
    pub const DEFAULT_NMS_IOU: f64 = 0.45;

    pub fn yolo() -> Self {
        Self {
            confidence_threshold: 0.4,
            nms_iou_threshold: Self::DEFAULT_NMS_IOU,
            variances: SsdVariances::default(),
            yolo_activation: YoloActivation::ScaledSigmoid,
        }
    }

    pub fn ssd() -> Self {
        Self {
            confidence_threshold: 0.3,
            ..Self::yolo()
        }
    }

    fn validate(&self) -> Result<(), DecodeError> {
        for t in [self.confidence_threshold, self.nms_iou_threshold] {
            if !(0.0..=1.0).contains(&t) {
                return Err(DecodeError::InvalidThreshold(t));
            }
        }
        Ok(())
    }
}

/// Largest double below one.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function, capped at the largest double below 1. A threshold of
/// 1.0 rejects everything.
pub fn sigmoid(t: f64) -> f64 {
    (1.0 / (1.0 + libm::exp(-t))).min(BELOW_ONE)
}

/// Greedy non-maximum suppression for detections of one image and class.
///
/// Candidates are visited by confidence descending (ties: smaller `x_min`,
/// then `y_min`); each kept box removes every later one with IoU at or above
/// `iou_threshold`.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<&Detection> = dets.iter().collect();
    order.sort_by(|a, b| detection_order(a, b));
    let mut kept: Vec<Detection> = Vec::new();
    for d in order {
        if kept.iter().all(|k| iou(&k.bbox, &d.bbox) < iou_threshold) {
            kept.push(d.clone());
        }
    }
    kept
}

/// NMS within each class, merged back into [`detection_order`].
pub fn nms_per_class(mut dets: Vec<Detection>, iou_threshold: f64) -> Vec<Detection> {
    dets.sort_by(|a, b| a.class.cmp(&b.class).then_with(|| detection_order(a, b)));
    let mut out = Vec::with_capacity(dets.len());
    let mut start = 0;
    while start < dets.len() {
        let class = dets[start].class;
        let end = start
            + dets[start..]
                .iter()
                .take_while(|d| d.class == class)
                .count();
        out.extend(nms(&dets[start..end], iou_threshold));
        start = end;
    }
    out.sort_by(detection_order);
    out
}

/// Decodes the three YOLO scale tensors of one image. Tensors may come in any
/// order; each is matched to the scale whose grid size it carries.
pub fn decode_yolo(
    raw: &[RawTensor],
    cfg: &YoloAnchorConfig,
    params: &DecodeParams,
    dims: ImageDims,
    image_id: &str,
) -> Result<Vec<Detection>, DecodeError> {
    params.validate()?;
    if raw.len() != cfg.scales.len() {
        return Err(DecodeError::TensorCount {
            expected: cfg.scales.len(),
            got: raw.len(),
        });
    }
    for t in raw {
        if t.layout != Layout::Ahwc {
            return Err(DecodeError::WrongLayout {
                expected: Layout::Ahwc,
                got: t.layout,
            });
        }
    }
    let channels = raw[0].dims[3];
    if channels < 6 {
        return Err(DecodeError::ShapeMismatch {
            expected: [3, 0, 0, 6].to_vec(),
            got: raw[0].dims.clone(),
        });
    }
    let num_classes = channels - 5;
    let shapes = yolo_grid_shapes(cfg, num_classes)?;
    let sx = f64::from(dims.width()) / f64::from(cfg.input_size);
    let sy = f64::from(dims.height()) / f64::from(cfg.input_size);

    let mut candidates = Vec::new();
    let mut used = [false; 3];
    for tensor in raw {
        let scale = shapes
            .iter()
            .enumerate()
            .position(|(i, s)| !used[i] && s.dims()[..] == tensor.dims[..])
            .ok_or_else(|| DecodeError::ShapeMismatch {
                expected: shapes.iter().flat_map(|s| s.dims()).collect(),
                got: tensor.dims.clone(),
            })?;
        used[scale] = true;
        let shape = shapes[scale];
        let stride = f64::from(cfg.scales[scale].stride);
        for a in 0..shape.anchors {
            let (aw, ah) = cfg.scales[scale].anchors[a];
            for row in 0..shape.grid {
                for col in 0..shape.grid {
                    let v = tensor.row((a * shape.grid + row) * shape.grid + col);
                    let objectness = sigmoid(f64::from(v[4]));
                    let (class, class_prob) = v[5..]
                        .iter()
                        .map(|&t| sigmoid(f64::from(t)))
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |best, (i, p)| {
                            if p > best.1 {
                                (i, p)
                            } else {
                                best
                            }
                        });
                    let confidence = objectness * class_prob;
                    if confidence < params.confidence_threshold {
                        continue;
                    }
                    let cx = (col as f64 + 2.0 * sigmoid(f64::from(v[0])) - 0.5) * stride;
                    let cy = (row as f64 + 2.0 * sigmoid(f64::from(v[1])) - 0.5) * stride;
                    let sw = 2.0 * sigmoid(f64::from(v[2]));
                    let sh = 2.0 * sigmoid(f64::from(v[3]));
                    let w = aw * sw * sw;
                    let h = ah * sh * sh;
                    let bbox = BoundingBox::from_points(
                        (cx - w / 2.0) * sx,
                        (cy - h / 2.0) * sy,
                        (cx + w / 2.0) * sx,
                        (cy + h / 2.0) * sy,
                    )
                    .clip(dims);
                    candidates.push(Detection {
                        image_id: image_id.into(),
                        class: class as u32,
                        bbox,
                        confidence,
                    });
                }
            }
        }
    }
    Ok(nms_per_class(candidates, params.nms_iou_threshold))
}

/// Decodes SSD location and score rows against `priors`. Score column 0 is
/// background; column `c + 1` becomes detection class `c`.
pub fn decode_ssd(
    locations: &RawTensor,
    scores: &RawTensor,
    priors: &[PriorBox],
    params: &DecodeParams,
    dims: ImageDims,
    image_id: &str,
) -> Result<Vec<Detection>, DecodeError> {
    params.validate()?;
    if locations.layout != Layout::PriorLocations {
        return Err(DecodeError::WrongLayout {
            expected: Layout::PriorLocations,
            got: locations.layout,
        });
    }
    if scores.layout != Layout::PriorScores {
        return Err(DecodeError::WrongLayout {
            expected: Layout::PriorScores,
            got: scores.layout,
        });
    }
    let p = priors.len();
    if locations.dims != [p, 4] {
        return Err(DecodeError::ShapeMismatch {
            expected: [p, 4].to_vec(),
            got: locations.dims.clone(),
        });
    }
    if scores.dims[0] != p || scores.dims[1] < 2 {
        return Err(DecodeError::ShapeMismatch {
            expected: [p, scores.dims[1].max(2)].to_vec(),
            got: scores.dims.clone(),
        });
    }
    let w_px = f64::from(dims.width());
    let h_px = f64::from(dims.height());
    let v = params.variances;
    let mut candidates = Vec::new();
    let mut probs = Vec::with_capacity(scores.dims[1]);
    for (i, prior) in priors.iter().enumerate() {
        softmax_into(scores.row(i), &mut probs);
        let loc = locations.row(i);
        let mut bbox = None;
        for (c, &prob) in probs.iter().enumerate().skip(1) {
            if prob < params.confidence_threshold {
                continue;
            }
            let b = *bbox.get_or_insert_with(|| {
                let pb = prior.bbox;
                let cx = pb.cx + f64::from(loc[0]) * v.center * pb.w;
                let cy = pb.cy + f64::from(loc[1]) * v.center * pb.h;
                let w = pb.w * libm::exp(f64::from(loc[2]) * v.size);
                let h = pb.h * libm::exp(f64::from(loc[3]) * v.size);
                BoundingBox::from_points(
                    (cx - w / 2.0) * w_px,
                    (cy - h / 2.0) * h_px,
                    (cx + w / 2.0) * w_px,
                    (cy + h / 2.0) * h_px,
                )
                .clip(dims)
            });
            candidates.push(Detection {
                image_id: image_id.into(),
                class: (c - 1) as u32,
                bbox: b,
                confidence: prob,
            });
        }
    }
    Ok(nms_per_class(candidates, params.nms_iou_threshold))
}

fn softmax_into(logits: &[f32], out: &mut Vec<f64>) {
    out.clear();
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    out.extend(logits.iter().map(|&l| libm::exp(f64::from(l - max))));
    let sum: f64 = out.iter().sum();
    for p in out.iter_mut() {
        *p /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchors::{ssd_priors, vgg16_layers};
    use alloc::vec;

    fn det(conf: f64, b: (f64, f64, f64, f64)) -> Detection {
        Detection {
            image_id: "i".into(),
            class: 0,
            bbox: BoundingBox::new(b.0, b.1, b.2, b.3).unwrap(),
            confidence: conf,
        }
    }

    fn zero_yolo(num_classes: usize) -> Vec<RawTensor> {
        let cfg = YoloAnchorConfig::yolov5(640);
        yolo_grid_shapes(&cfg, num_classes)
            .unwrap()
            .iter()
            .map(|s| {
                let d = s.dims().to_vec();
                let n = d.iter().product();
                RawTensor::new(d, Layout::Ahwc, vec![0.0; n]).unwrap()
            })
            .collect()
    }

    #[test]
    fn nms_examples() {
        let single = [det(0.5, (0., 0., 10., 10.))];
        assert_eq!(nms(&single, 0.5), single);
        let twins = [det(0.8, (0., 0., 10., 10.)), det(0.9, (0., 0., 10., 10.))];
        assert_eq!(nms(&twins, 0.5), [twins[1].clone()]);
        let apart = [det(0.8, (0., 0., 10., 10.)), det(0.9, (20., 20., 30., 30.))];
        assert_eq!(nms(&apart, 0.5).len(), 2);
    }

    #[test]
    fn nms_tie_break_prefers_smaller_x_min() {
        let dets = [det(0.9, (1., 0., 11., 10.)), det(0.9, (0., 0., 10., 10.))];
        let kept = nms(&dets, 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].bbox.x_min, 0.0);
    }

    #[test]
    fn yolo_all_zero_is_empty_at_default_threshold() {
        let cfg = YoloAnchorConfig::yolov5(640);
        let dims = ImageDims::new(640, 640).unwrap();
        let out = decode_yolo(&zero_yolo(2), &cfg, &DecodeParams::yolo(), dims, "z").unwrap();
        assert!(out.is_empty());
        // 0.25 passes a 0.25 threshold: every prediction survives thresholding.
        let params = DecodeParams {
            confidence_threshold: 0.25,
            nms_iou_threshold: 1.0,
            ..DecodeParams::yolo()
        };
        let out = decode_yolo(&zero_yolo(1), &cfg, &params, dims, "z").unwrap();
        assert!(!out.is_empty());
    }

    #[test]
    fn yolo_threshold_one_rejects_saturated_logits() {
        let cfg = YoloAnchorConfig::yolov5(640);
        let mut raw = zero_yolo(1);
        let d = raw[2].dims().to_vec();
        let vals = vec![80.0f32; d.iter().product()];
        raw[2] = RawTensor::new(d, Layout::Ahwc, vals).unwrap();
        let params = DecodeParams {
            confidence_threshold: 1.0,
            ..DecodeParams::yolo()
        };
        let out = decode_yolo(&raw, &cfg, &params, ImageDims::new(640, 640).unwrap(), "s").unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn yolo_shape_errors() {
        let cfg = YoloAnchorConfig::yolov5(640);
        let dims = ImageDims::new(640, 640).unwrap();
        let mut raw = zero_yolo(2);
        raw.pop();
        assert_eq!(
            decode_yolo(&raw, &cfg, &DecodeParams::yolo(), dims, "x"),
            Err(DecodeError::TensorCount {
                expected: 3,
                got: 2
            })
        );
        let mut raw = zero_yolo(2);
        raw[0] =
            RawTensor::new(vec![3, 81, 81, 7], Layout::Ahwc, vec![0.0; 3 * 81 * 81 * 7]).unwrap();
        assert!(matches!(
            decode_yolo(&raw, &cfg, &DecodeParams::yolo(), dims, "x"),
            Err(DecodeError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn tensor_validation() {
        assert_eq!(
            RawTensor::new(vec![2, 4], Layout::PriorLocations, vec![0.0; 7]),
            Err(DecodeError::ValueCount {
                expected: 8,
                got: 7
            })
        );
        let mut v = vec![0.0; 8];
        v[5] = f32::NAN;
        assert_eq!(
            RawTensor::new(vec![2, 4], Layout::PriorLocations, v),
            Err(DecodeError::NonFinite { index: 5 })
        );
        assert!(matches!(
            RawTensor::new(vec![2, 4, 1], Layout::PriorLocations, vec![0.0; 8]),
            Err(DecodeError::Rank { .. })
        ));
    }

    fn ssd_fixture(score_logits: f32) -> (RawTensor, RawTensor, Vec<PriorBox>) {
        let priors = ssd_priors(&vgg16_layers()[5..], 300).unwrap();
        let loc = RawTensor::new(vec![4, 4], Layout::PriorLocations, vec![0.0; 16]).unwrap();
        let scores =
            RawTensor::new(vec![4, 3], Layout::PriorScores, vec![score_logits; 12]).unwrap();
        (loc, scores, priors)
    }

    #[test]
    fn ssd_uniform_scores_straddle_threshold() {
        let (loc, scores, priors) = ssd_fixture(0.0);
        let dims = ImageDims::new(300, 300).unwrap();
        let keep_all = DecodeParams {
            nms_iou_threshold: 1.0,
            ..DecodeParams::ssd()
        };
        let out = decode_ssd(&loc, &scores, &priors, &keep_all, dims, "u").unwrap();
        // 1/3 >= 0.3 for both foreground classes of all four priors.
        assert_eq!(out.len(), 8);
        assert!(out.iter().all(|d| (d.confidence - 1.0 / 3.0).abs() < 1e-12));
        let strict = DecodeParams {
            confidence_threshold: 0.34,
            ..keep_all
        };
        assert!(decode_ssd(&loc, &scores, &priors, &strict, dims, "u")
            .unwrap()
            .is_empty());
    }

    #[test]
    fn ssd_zero_offsets_give_priors() {
        let (loc, scores, priors) = ssd_fixture(0.0);
        let dims = ImageDims::new(300, 300).unwrap();
        let params = DecodeParams {
            nms_iou_threshold: 1.0,
            ..DecodeParams::ssd()
        };
        let out = decode_ssd(&loc, &scores, &priors, &params, dims, "u").unwrap();
        for p in &priors {
            let expected = p.to_pixels(300.0, 300.0).clip(dims);
            assert!(out.iter().any(|d| {
                let b = d.bbox;
                (b.x_min - expected.x_min).abs() < 1e-9
                    && (b.y_min - expected.y_min).abs() < 1e-9
                    && (b.x_max - expected.x_max).abs() < 1e-9
                    && (b.y_max - expected.y_max).abs() < 1e-9
            }));
        }
    }

    #[test]
    fn ssd_shape_mismatch() {
        let (_, scores, priors) = ssd_fixture(0.0);
        let loc = RawTensor::new(vec![3, 4], Layout::PriorLocations, vec![0.0; 12]).unwrap();
        let dims = ImageDims::new(300, 300).unwrap();
        assert!(matches!(
            decode_ssd(&loc, &scores, &priors, &DecodeParams::ssd(), dims, "u"),
            Err(DecodeError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn layout_tags_round_trip() {
        for l in [Layout::Ahwc, Layout::PriorLocations, Layout::PriorScores] {
            assert_eq!(Layout::from_tag(l.tag()), Some(l));
        }
    }
}
