//! Parallel evaluation driver and PR-curve CSV output.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use mitescan_core::dataset::{DatasetVariant, LabeledImage, VariantClass};
use mitescan_core::decode::Detection;
use mitescan_core::metrics::{
    aggregate, image_outcome, EvalConfig, EvalReport, ImageEval, PrPoint,
};
use rayon::prelude::*;

/// Same result as `metrics::evaluate`; per-image matching runs in parallel
/// and the merge is order-independent.
pub fn evaluate_parallel(images: &[ImageEval], classes: &[u32], cfg: &EvalConfig) -> EvalReport {
    let outcomes: Vec<_> = images
        .par_iter()
        .map(|img| image_outcome(img, classes))
        .collect();
    aggregate(&outcomes, classes, cfg)
}

/// Pairs ground truth with detections by image id. Detections for images
/// outside `gt` are returned separately.
pub fn join_images(
    gt: &[LabeledImage<VariantClass>],
    variant: DatasetVariant,
    detections: Vec<Detection>,
) -> (Vec<ImageEval>, Vec<Detection>) {
    let mut by_image: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
    for d in detections {
        by_image.entry(d.image_id.clone()).or_default().push(d);
    }
    let images = gt
        .iter()
        .map(|img| ImageEval {
            image_id: img.image_id.clone(),
            detections: by_image.remove(&img.image_id).unwrap_or_default(),
            ground_truth: img
                .annotations
                .iter()
                .filter_map(|a| Some((variant.class_index(a.class)?, a.bbox)))
                .collect(),
        })
        .collect();
    (images, by_image.into_values().flatten().collect())
}

pub fn pr_csv(curve: &[PrPoint]) -> String {
    let mut s = String::from("confidence,tp,fp,fn,precision,recall\n");
    for p in curve {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            p.confidence, p.tp, p.fp, p.fn_, p.precision, p.recall
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use mitescan_core::geometry::BoundingBox;
    use mitescan_core::metrics::evaluate;

    fn image(i: usize) -> ImageEval {
        let gt = BoundingBox::new(10.0 * i as f64, 0.0, 10.0 * i as f64 + 8.0, 8.0).unwrap();
        ImageEval {
            image_id: format!("im{i}"),
            detections: vec![Detection {
                image_id: format!("im{i}"),
                class: (i % 2) as u32,
                bbox: gt.translate(i as f64 * 0.3, 0.0),
                confidence: 0.1 + 0.02 * i as f64,
            }],
            ground_truth: vec![((i % 2) as u32, gt)],
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let images: Vec<_> = (0..40).map(image).collect();
        let cfg = EvalConfig::default();
        assert_eq!(
            evaluate_parallel(&images, &[0, 1], &cfg),
            evaluate(&images, &[0, 1], &cfg)
        );
    }

    #[test]
    fn csv_header() {
        assert!(pr_csv(&[]).starts_with("confidence,tp,fp,fn,precision,recall\n"));
    }
}
