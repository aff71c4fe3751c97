//! Result-table rows and infestation summaries.

use alloc::string::String;
use alloc::vec::Vec;

use crate::dataset::{ClassLabel, DatasetVariant, VariantClass};
use crate::decode::Detection;
use crate::metrics::{unweighted_mean, EvalReport};

/// One row of a results table: mAP[0.5], mAP[0.5:0.95], F1, precision, recall.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub map50: f64,
    pub map_range: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

impl ReportRow {
    pub fn values(&self) -> [f64; 5] {
        [
            self.map50,
            self.map_range,
            self.f1,
            self.precision,
            self.recall,
        ]
    }
}

/// Column-wise unweighted mean of `rows`, labelled "Average".
pub fn average_row(rows: &[ReportRow]) -> ReportRow {
    let col = |i: usize| unweighted_mean(rows.iter().map(|r| r.values()[i]));
    ReportRow {
        label: "Average".into(),
        map50: col(0),
        map_range: col(1),
        f1: col(2),
        precision: col(3),
        recall: col(4),
    }
}

/// Per-class rows for classes with ground truth, then an Average row when
/// there is more than one class.
pub fn table_rows(report: &EvalReport, variant: DatasetVariant) -> Vec<ReportRow> {
    let mut rows: Vec<ReportRow> = report
        .classes
        .iter()
        .filter_map(|c| {
            let label = variant.class_at(c.class).map_or("?", |v| v.label());
            Some(ReportRow {
                label: label.into(),
                map50: c.ap50()?,
                map_range: c.ap_range()?,
                f1: c.f1,
                precision: c.precision,
                recall: c.recall,
            })
        })
        .collect();
    if rows.len() > 1 {
        let avg = average_row(&rows);
        rows.push(avg);
    }
    rows
}

/// Rounds half away from zero at `decimals` places. Values within 1e-9 of a
/// half step count as the half step, so 0.8015 becomes 0.802 even though its
/// binary value sits slightly below.
pub fn round_half_up(value: f64, decimals: i32) -> f64 {
    let scale = libm::pow(10.0, f64::from(decimals));
    let scaled = value.abs() * scale;
    let rounded = libm::floor(scaled + 0.5 + 1e-9);
    libm::copysign(rounded / scale, value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InfestationSummary {
    HealthyAndIll {
        healthy: usize,
        infected: usize,
        /// `infected / (healthy + infected)`; absent with no bees.
        ratio: Option<f64>,
    },
    BeesAndMites {
        bees: usize,
        mites: usize,
        /// Absent with no bees.
        mites_per_bee: Option<f64>,
    },
    /// No bee counts exist in this label space.
    MitesOnly { mites: usize },
}

/// Summarises one split's detections by class count.
pub fn infestation(dets: &[Detection], variant: DatasetVariant) -> InfestationSummary {
    let count = |class: VariantClass| {
        let idx = variant.class_index(class);
        dets.iter().filter(|d| Some(d.class) == idx).count()
    };
    infestation_from_counts(variant, count)
}

pub fn infestation_from_counts(
    variant: DatasetVariant,
    count: impl Fn(VariantClass) -> usize,
) -> InfestationSummary {
    match variant {
        DatasetVariant::HealthyAndIll => {
            let healthy = count(VariantClass::Healthy);
            let infected = count(VariantClass::Infected);
            let total = healthy + infected;
            InfestationSummary::HealthyAndIll {
                healthy,
                infected,
                ratio: (total > 0).then(|| infected as f64 / total as f64),
            }
        }
        DatasetVariant::BeesAndMites => {
            let bees = count(VariantClass::Bees);
            let mites = count(VariantClass::VMite);
            InfestationSummary::BeesAndMites {
                bees,
                mites,
                mites_per_bee: (bees > 0).then(|| mites as f64 / bees as f64),
            }
        }
        DatasetVariant::MitesOnly => InfestationSummary::MitesOnly {
            mites: count(VariantClass::VMite),
        },
    }
}
