//! YOLO anchor grids and SSD prior boxes.

use alloc::vec::Vec;
use core::fmt;

use crate::geometry::{iou, BoundingBox, NormCenterBox};

#[derive(Debug, Clone, PartialEq)]
pub enum AnchorError {
    /// Input size is not a multiple of a stride.
    NonDivisible {
        input_size: u32,
        stride: u32,
    },
    /// Per-cell box count disagrees with the aspect-ratio list.
    BoxesPerCell {
        layer: usize,
        boxes_per_cell: u32,
        implied: u32,
    },
    InvalidLayer {
        layer: usize,
        reason: &'static str,
    },
}

impl fmt::Display for AnchorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnchorError::NonDivisible { input_size, stride } => {
                write!(f, "input size {input_size} is not divisible by stride {stride}")
            }
            AnchorError::BoxesPerCell { layer, boxes_per_cell, implied } => write!(
                f,
                "layer {layer}: {boxes_per_cell} boxes per cell configured but aspect ratios imply {implied}"
            ),
            AnchorError::InvalidLayer { layer, reason } => write!(f, "layer {layer}: {reason}"),
        }
    }
}

impl core::error::Error for AnchorError {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YoloScale {
    pub stride: u32,
    /// (w, h) in input pixels.
    pub anchors: [(f64, f64); 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct YoloAnchorConfig {
    pub input_size: u32,
    pub scales: [YoloScale; 3],
}

impl YoloAnchorConfig {
    /// Stock YOLOv5 anchors at P3/8, P4/16 and P5/32.
    pub fn yolov5(input_size: u32) -> Self {
        Self {
            input_size,
            scales: [
                YoloScale {
                    stride: 8,
                    anchors: [(10., 13.), (16., 30.), (33., 23.)],
                },
                YoloScale {
                    stride: 16,
                    anchors: [(30., 61.), (62., 45.), (59., 119.)],
                },
                YoloScale {
                    stride: 32,
                    anchors: [(116., 90.), (156., 198.), (373., 326.)],
                },
            ],
        }
    }

    pub fn grid_size(&self, scale: usize) -> Result<u32, AnchorError> {
        let stride = self.scales[scale].stride;
        if stride == 0 || !self.input_size.is_multiple_of(stride) {
            return Err(AnchorError::NonDivisible {
                input_size: self.input_size,
                stride,
            });
        }
        Ok(self.input_size / stride)
    }
}

/// Output tensor shape `(anchors, grid, grid, classes + 5)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct YoloShape {
    pub anchors: usize,
    pub grid: usize,
    pub channels: usize,
}

impl YoloShape {
    pub fn dims(&self) -> [usize; 4] {
        [self.anchors, self.grid, self.grid, self.channels]
    }

    pub fn predictions(&self) -> usize {
        self.anchors * self.grid * self.grid
    }
}

/// One shape per scale, in config order.
pub fn yolo_grid_shapes(
    cfg: &YoloAnchorConfig,
    num_classes: usize,
) -> Result<[YoloShape; 3], AnchorError> {
    let mut shapes = [YoloShape {
        anchors: 0,
        grid: 0,
        channels: 0,
    }; 3];
    for (i, shape) in shapes.iter_mut().enumerate() {
        *shape = YoloShape {
            anchors: cfg.scales[i].anchors.len(),
            grid: cfg.grid_size(i)? as usize,
            channels: num_classes + 5,
        };
    }
    Ok(shapes)
}

pub fn yolo_prediction_count(cfg: &YoloAnchorConfig) -> Result<usize, AnchorError> {
    Ok(yolo_grid_shapes(cfg, 0)?
        .iter()
        .map(YoloShape::predictions)
        .sum())
}

/// One SSD feature-map layer.
///
/// `shrinkage` is carried as metadata only: cell centers are placed at
/// `(index + 0.5) / feature_map_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct SsdLayerConfig {
    pub feature_map_size: u32,
    pub shrinkage: u32,
    pub box_min: f64,
    pub box_max: f64,
    pub aspect_ratios: Vec<f64>,
    pub boxes_per_cell: u32,
}

impl SsdLayerConfig {
    /// Ratios above 1 each contribute a landscape/portrait pair.
    pub fn extra_ratios(&self) -> impl Iterator<Item = f64> + '_ {
        self.aspect_ratios.iter().copied().filter(|&r| r > 1.0)
    }

    pub fn implied_boxes_per_cell(&self) -> u32 {
        2 + 2 * self.extra_ratios().count() as u32
    }

    pub fn validate(&self, layer: usize) -> Result<(), AnchorError> {
        if self.feature_map_size == 0 {
            return Err(AnchorError::InvalidLayer {
                layer,
                reason: "feature map size must be positive",
            });
        }
        if !(self.box_min > 0.0 && self.box_min < self.box_max && self.box_max.is_finite()) {
            return Err(AnchorError::InvalidLayer {
                layer,
                reason: "need 0 < box_min < box_max",
            });
        }
        if !matches!(self.boxes_per_cell, 4 | 6) {
            return Err(AnchorError::InvalidLayer {
                layer,
                reason: "boxes per cell must be 4 or 6",
            });
        }
        let implied = self.implied_boxes_per_cell();
        if implied != self.boxes_per_cell {
            return Err(AnchorError::BoxesPerCell {
                layer,
                boxes_per_cell: self.boxes_per_cell,
                implied,
            });
        }
        Ok(())
    }
}

fn layer(
    fm: u32,
    shrinkage: u32,
    box_min: f64,
    box_max: f64,
    boxes_per_cell: u32,
) -> SsdLayerConfig {
    let aspect_ratios = if boxes_per_cell == 6 {
        [1.0, 2.0, 3.0].to_vec()
    } else {
        [1.0, 2.0].to_vec()
    };
    SsdLayerConfig {
        feature_map_size: fm,
        shrinkage,
        box_min,
        box_max,
        aspect_ratios,
        boxes_per_cell,
    }
}

/// VGG16 layer table at 300 px with 4/6/6/6/4/4 boxes per cell.
pub fn vgg16_layers() -> Vec<SsdLayerConfig> {
    [
        layer(38, 16, 15., 30., 4),
        layer(19, 32, 30., 60., 6),
        layer(10, 64, 60., 105., 6),
        layer(5, 100, 105., 150., 6),
        layer(3, 150, 150., 195., 4),
        layer(1, 300, 195., 240., 4),
    ]
    .to_vec()
}

/// MobileNetV2 layer table at 300 px, same per-cell pattern as VGG16.
pub fn mobilenet_v2_layers() -> Vec<SsdLayerConfig> {
    [
        layer(19, 16, 15., 30., 4),
        layer(10, 32, 30., 60., 6),
        layer(5, 64, 60., 105., 6),
        layer(3, 100, 105., 150., 6),
        layer(2, 150, 150., 195., 4),
        layer(1, 300, 195., 240., 4),
    ]
    .to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorBox {
    pub bbox: NormCenterBox,
    pub layer: usize,
    pub row: u32,
    pub col: u32,
    pub slot: u32,
}

impl PriorBox {
    /// Corner box in pixels of a `width` x `height` frame.
    pub fn to_pixels(&self, width: f64, height: f64) -> BoundingBox {
        let (x0, y0, x1, y1) = self.bbox.to_corners();
        BoundingBox::from_points(x0 * width, y0 * height, x1 * width, y1 * height)
    }
}

/// Priors in layer-major, row-major order. Slot order within a cell: the
/// `box_min` square, the `sqrt(box_min * box_max)` square, then each
/// ratio's landscape and portrait boxes with ratios ascending.
pub fn ssd_priors(
    layers: &[SsdLayerConfig],
    input_size: u32,
) -> Result<Vec<PriorBox>, AnchorError> {
    for (i, l) in layers.iter().enumerate() {
        l.validate(i)?;
    }
    let input = f64::from(input_size);
    let count = layers
        .iter()
        .map(|l| (l.feature_map_size as usize).pow(2) * l.boxes_per_cell as usize)
        .sum();
    let mut priors = Vec::with_capacity(count);
    for (li, l) in layers.iter().enumerate() {
        let fm = f64::from(l.feature_map_size);
        let small = l.box_min / input;
        let big = libm::sqrt(l.box_min * l.box_max) / input;
        let mut ratios: Vec<f64> = l.extra_ratios().collect();
        ratios.sort_by(f64::total_cmp);
        let mut sizes = Vec::with_capacity(l.boxes_per_cell as usize);
        sizes.push((small, small));
        sizes.push((big, big));
        for r in ratios {
            let s = libm::sqrt(r);
            sizes.push((small * s, small / s));
            sizes.push((small / s, small * s));
        }
        for row in 0..l.feature_map_size {
            for col in 0..l.feature_map_size {
                let cx = (f64::from(col) + 0.5) / fm;
                let cy = (f64::from(row) + 0.5) / fm;
                for (slot, &(w, h)) in sizes.iter().enumerate() {
                    priors.push(PriorBox {
                        bbox: NormCenterBox { cx, cy, w, h }.clipped(),
                        layer: li,
                        row,
                        col,
                        slot: slot as u32,
                    });
                }
            }
        }
    }
    Ok(priors)
}

/// How well one mite size can be covered by the prior set.
#[derive(Debug, Clone, PartialEq)]
pub struct MiteFit {
    pub size_px: f64,
    pub best_iou: f64,
    pub best_layer: usize,
    /// Best IoU reachable per layer, indexed by layer.
    pub per_layer: Vec<f64>,
}

/// For each extreme of the mite size range, the best IoU between a square
/// mite box and any prior, with the mite centered on the prior.
pub fn mite_anchor_fit(
    priors: &[PriorBox],
    mite_size_range: (f64, f64),
    input_size: u32,
) -> Vec<MiteFit> {
    if priors.is_empty() {
        return Vec::new();
    }
    let input = f64::from(input_size);
    let layers = priors.iter().map(|p| p.layer).max().map_or(0, |m| m + 1);
    [mite_size_range.0, mite_size_range.1]
        .into_iter()
        .map(|size| {
            let mut per_layer = alloc::vec![0.0f64; layers];
            for p in priors {
                let prior = p.to_pixels(input, input);
                let (cx, cy) = prior.center();
                let mite = BoundingBox::from_center(cx, cy, size, size);
                let v = iou(&mite, &prior);
                if v > per_layer[p.layer] {
                    per_layer[p.layer] = v;
                }
            }
            let (best_layer, best_iou) = per_layer.iter().copied().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |best, (i, v)| if v > best.1 { (i, v) } else { best },
            );
            MiteFit {
                size_px: size,
                best_iou,
                best_layer,
                per_layer,
            }
        })
        .collect()
}
