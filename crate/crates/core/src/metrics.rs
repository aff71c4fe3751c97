//! Ground-truth matching, precision/recall/F1 and average precision.
//!
//! Matching is per image and per class. Within an image, detections are
//! visited by confidence (ties broken by box) and each takes the unmatched
//! ground truth with the highest IoU at or above the threshold; equal IoUs go
//! to the earlier ground truth. Sweeps for AP merge every image's outcomes
//! and sort them by (confidence desc, image id, box), so the result does not
//! depend on the order in which images were processed.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::decode::{detection_order, Detection};
use crate::geometry::{iou, BoundingBox};

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub const IOU_THRESHOLDS: [f64; 10] = {
    let mut t = [0.0; 10];
    let mut i = 0;
    while i < 10 {
        t[i] = (50 + 5 * i) as f64 / 100.0;
        i += 1;
    }
    t
};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchResult {
    /// (detection index, ground-truth index)
    pub true_positives: Vec<(usize, usize)>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
}

impl MatchResult {
    pub fn counts(&self) -> Counts {
        Counts {
            tp: self.true_positives.len(),
            fp: self.false_positives.len(),
            fn_: self.false_negatives.len(),
        }
    }
}

/// Greedy matching of one image's detections of one class against its
/// ground truth at IoU threshold `tau`. Indices refer to the input slices.
pub fn match_detections(dets: &[Detection], gts: &[BoundingBox], tau: f64) -> MatchResult {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| detection_order(&dets[a], &dets[b]).then(a.cmp(&b)));
    let mut taken = alloc::vec![false; gts.len()];
    let mut result = MatchResult::default();
    for d in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = iou(&dets[d].bbox, gt);
            if v >= tau && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        match best {
            Some((g, _)) => {
                taken[g] = true;
                result.true_positives.push((d, g));
            }
            None => result.false_positives.push(d),
        }
    }
    result.false_negatives = (0..gts.len()).filter(|&g| !taken[g]).collect();
    result
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `(TP / (TP + FP), TP / (TP + FN))`, each 0 when its denominator is 0.
pub fn precision_recall(c: Counts) -> (f64, f64) {
    (ratio(c.tp, c.tp + c.fp), ratio(c.tp, c.tp + c.fn_))
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    let sum = precision + recall;
    if sum == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / sum
    }
}

pub fn unweighted_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApMethod {
    /// Area under the precision envelope at every recall step.
    #[default]
    AllPoints,
    /// Mean envelope precision at recall 0, 0.1, ..., 1.
    ElevenPoint,
}

impl ApMethod {
    pub fn name(self) -> &'static str {
        match self {
            ApMethod::AllPoints => "all-points",
            ApMethod::ElevenPoint => "11-point",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [ApMethod::AllPoints, ApMethod::ElevenPoint]
            .into_iter()
            .find(|m| m.name() == name)
    }
}

/// One detection's outcome in a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub confidence: f64,
    pub image_id: String,
    pub bbox: BoundingBox,
    pub true_positive: bool,
}

fn sweep_order(a: &SweepRecord, b: &SweepRecord) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| a.image_id.cmp(&b.image_id))
        .then_with(|| a.bbox.lexicographic_cmp(&b.bbox))
        // TP first among exact duplicates, so the merge is a total function of the record set.
        .then(b.true_positive.cmp(&a.true_positive))
}

pub fn sort_sweep(records: &mut [SweepRecord]) {
    records.sort_by(sweep_order);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub confidence: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Cumulative PR points over sorted records, one per detection.
pub fn pr_curve(sorted: &[SweepRecord], num_gt: usize) -> Vec<PrPoint> {
    let mut tp = 0;
    let mut fp = 0;
    sorted
        .iter()
        .map(|r| {
            if r.true_positive {
                tp += 1;
            } else {
                fp += 1;
            }
            let c = Counts {
                tp,
                fp,
                fn_: num_gt - tp,
            };
            let (precision, recall) = precision_recall(c);
            PrPoint {
                confidence: r.confidence,
                tp,
                fp,
                fn_: c.fn_,
                precision,
                recall,
            }
        })
        .collect()
}

/// AP from a PR curve.
pub fn ap_from_curve(curve: &[PrPoint], method: ApMethod) -> f64 {
    // envelope[i] = max precision at any point with recall >= recall[i]
    let mut envelope: Vec<f64> = curve.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    match method {
        ApMethod::AllPoints => {
            let mut prev_recall = 0.0;
            let mut ap = 0.0;
            for (p, &env) in curve.iter().zip(&envelope) {
                ap += (p.recall - prev_recall) * env;
                prev_recall = p.recall;
            }
            ap
        }
        ApMethod::ElevenPoint => {
            let mut sum = 0.0;
            for step in 0..=10 {
                let r = f64::from(step) / 10.0;
                let first = curve.iter().position(|p| p.recall >= r);
                sum += first.map_or(0.0, |i| envelope[i]);
            }
            sum / 11.0
        }
    }
}

/// Single-class AP over a set of images.
pub fn average_precision(images: &[ImageEval], class: u32, tau: f64, method: ApMethod) -> f64 {
    let mut records = Vec::new();
    let mut num_gt = 0;
    for image in images {
        let (r, n) = image.sweep_records(class, tau);
        records.extend(r);
        num_gt += n;
    }
    sort_sweep(&mut records);
    ap_from_curve(&pr_curve(&records, num_gt), method)
}

/// Detections and ground truth of one image. Classes are detector indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEval {
    pub image_id: String,
    pub detections: Vec<Detection>,
    pub ground_truth: Vec<(u32, BoundingBox)>,
}

impl ImageEval {
    /// Outcome of every detection of `class`, plus the class's GT count.
    pub fn sweep_records(&self, class: u32, tau: f64) -> (Vec<SweepRecord>, usize) {
        let dets: Vec<Detection> = self
            .detections
            .iter()
            .filter(|d| d.class == class)
            .cloned()
            .collect();
        let gts: Vec<BoundingBox> = self
            .ground_truth
            .iter()
            .filter(|(c, _)| *c == class)
            .map(|(_, b)| *b)
            .collect();
        let m = match_detections(&dets, &gts, tau);
        let mut tp = alloc::vec![false; dets.len()];
        for &(d, _) in &m.true_positives {
            tp[d] = true;
        }
        let records = dets
            .iter()
            .zip(tp)
            .map(|(d, true_positive)| SweepRecord {
                confidence: d.confidence,
                image_id: self.image_id.clone(),
                bbox: d.bbox,
                true_positive,
            })
            .collect();
        (records, gts.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub ap_method: ApMethod,
    /// Detections below this confidence are ignored for P/R/F1.
    pub operating_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ap_method: ApMethod::AllPoints,
            operating_threshold: 0.4,
        }
    }
}

/// Per-image outcomes for every (class, IoU threshold) pair; the unit of
/// parallel work.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageOutcome {
    /// `records[class_slot][threshold_slot]`
    pub records: Vec<Vec<Vec<SweepRecord>>>,
    pub num_gt: Vec<usize>,
}

pub fn image_outcome(image: &ImageEval, classes: &[u32]) -> ImageOutcome {
    let mut records = Vec::with_capacity(classes.len());
    let mut num_gt = Vec::with_capacity(classes.len());
    for &class in classes {
        let mut per_tau = Vec::with_capacity(IOU_THRESHOLDS.len());
        let mut n = 0;
        for tau in IOU_THRESHOLDS {
            let (r, count) = image.sweep_records(class, tau);
            per_tau.push(r);
            n = count;
        }
        records.push(per_tau);
        num_gt.push(n);
    }
    ImageOutcome { records, num_gt }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub class: u32,
    pub num_gt: usize,
    pub num_detections: usize,
    /// AP at each of [`IOU_THRESHOLDS`]; `None` for classes without ground truth.
    pub ap: Option<[f64; 10]>,
    /// Operating-point counts at IoU 0.5.
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// PR sweep at IoU 0.5.
    pub curve: Vec<PrPoint>,
}

impl ClassReport {
    pub fn ap50(&self) -> Option<f64> {
        self.ap.map(|a| a[0])
    }

    pub fn ap_range(&self) -> Option<f64> {
        self.ap.map(unweighted_mean)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub classes: Vec<ClassReport>,
    pub config: EvalConfig,
}

impl EvalReport {
    fn scored(&self) -> impl Iterator<Item = &ClassReport> {
        self.classes.iter().filter(|c| c.ap.is_some())
    }

    /// Unweighted class mean of AP at 0.5, over classes with ground truth.
    pub fn map50(&self) -> f64 {
        unweighted_mean(self.scored().filter_map(ClassReport::ap50))
    }

    /// Unweighted mean over classes and the ten IoU thresholds.
    pub fn map_range(&self) -> f64 {
        unweighted_mean(self.scored().filter_map(ClassReport::ap_range))
    }

    pub fn mean_precision(&self) -> f64 {
        unweighted_mean(self.scored().map(|c| c.precision))
    }

    pub fn mean_recall(&self) -> f64 {
        unweighted_mean(self.scored().map(|c| c.recall))
    }

    pub fn mean_f1(&self) -> f64 {
        unweighted_mean(self.scored().map(|c| c.f1))
    }
}

/// Merges per-image outcomes, in any order, into the final report.
pub fn aggregate(outcomes: &[ImageOutcome], classes: &[u32], cfg: &EvalConfig) -> EvalReport {
    let mut reports = Vec::with_capacity(classes.len());
    for (slot, &class) in classes.iter().enumerate() {
        let num_gt: usize = outcomes.iter().map(|o| o.num_gt[slot]).sum();
        let mut ap = [0.0; 10];
        let mut curve50 = Vec::new();
        let mut num_detections = 0;
        let mut counts = Counts {
            tp: 0,
            fp: 0,
            fn_: num_gt,
        };
        for (t, ap_t) in ap.iter_mut().enumerate() {
            let mut records: Vec<SweepRecord> = outcomes
                .iter()
                .flat_map(|o| o.records[slot][t].iter().cloned())
                .collect();
            sort_sweep(&mut records);
            let curve = pr_curve(&records, num_gt);
            *ap_t = ap_from_curve(&curve, cfg.ap_method);
            if t == 0 {
                num_detections = records.len();
                for r in records
                    .iter()
                    .filter(|r| r.confidence >= cfg.operating_threshold)
                {
                    if r.true_positive {
                        counts.tp += 1;
                    } else {
                        counts.fp += 1;
                    }
                }
                counts.fn_ = num_gt - counts.tp;
                curve50 = curve;
            }
        }
        let (precision, recall) = precision_recall(counts);
        reports.push(ClassReport {
            class,
            num_gt,
            num_detections,
            ap: (num_gt > 0).then_some(ap),
            counts,
            precision,
            recall,
            f1: f1(precision, recall),
            curve: curve50,
        });
    }
    EvalReport {
        classes: reports,
        config: *cfg,
    }
}

pub fn evaluate(images: &[ImageEval], classes: &[u32], cfg: &EvalConfig) -> EvalReport {
    let outcomes: Vec<ImageOutcome> = images.iter().map(|i| image_outcome(i, classes)).collect();
    aggregate(&outcomes, classes, cfg)
}

/// `(mAP[0.5], mAP[0.5:0.95])` with all-points AP.
pub fn map_range(images: &[ImageEval], classes: &[u32]) -> (f64, f64) {
    let r = evaluate(
        images,
        classes,
        &EvalConfig {
            operating_threshold: 0.0,
            ..EvalConfig::default()
        },
    );
    (r.map50(), r.map_range())
}
