//! Text tables and the machine-readable run record.

use std::fmt::Write as _;

use mitescan_core::dataset::{ClassLabel, DatasetVariant};
use mitescan_core::metrics::EvalReport;
use mitescan_core::report::{round_half_up, table_rows, InfestationSummary, ReportRow};
use serde::{Deserialize, Serialize};

pub const COLUMNS: [&str; 5] = ["mAP[0.5]", "mAP[0.5:0.95]", "F1", "Precision", "Recall"];

/// Everything that determines an evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub variant: String,
    pub architecture: Option<String>,
    pub split: String,
    pub operating_threshold: f64,
    pub nms_iou_threshold: Option<f64>,
    pub ap_method: String,
    pub index: String,
    pub detections: String,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        DatasetVariant::from_name(&self.variant)
            .ok_or_else(|| format!("unknown variant {:?}", self.variant))?;
        for t in [Some(self.operating_threshold), self.nms_iou_threshold]
            .into_iter()
            .flatten()
        {
            if !(0.0..=1.0).contains(&t) {
                return Err(format!("threshold {t} is outside [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecord {
    pub class_index: u32,
    pub label: String,
    pub num_gt: usize,
    pub num_detections: usize,
    /// AP at each IoU threshold 0.50..=0.95; absent without ground truth.
    pub ap: Option<Vec<f64>>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowRecord {
    pub label: String,
    pub map50: f64,
    pub map_range: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

impl From<&ReportRow> for RowRecord {
    fn from(r: &ReportRow) -> Self {
        Self {
            label: r.label.clone(),
            map50: r.map50,
            map_range: r.map_range,
            f1: r.f1,
            precision: r.precision,
            recall: r.recall,
        }
    }
}

impl RowRecord {
    pub fn to_row(&self) -> ReportRow {
        ReportRow {
            label: self.label.clone(),
            map50: self.map50,
            map_range: self.map_range,
            f1: self.f1,
            precision: self.precision,
            recall: self.recall,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InfestationRecord {
    HealthyIll {
        healthy: usize,
        infected: usize,
        ratio: Option<f64>,
    },
    BeesMites {
        bees: usize,
        mites: usize,
        mites_per_bee: Option<f64>,
    },
    MitesOnly {
        mites: usize,
    },
}

impl From<InfestationSummary> for InfestationRecord {
    fn from(s: InfestationSummary) -> Self {
        match s {
            InfestationSummary::HealthyAndIll {
                healthy,
                infected,
                ratio,
            } => InfestationRecord::HealthyIll {
                healthy,
                infected,
                ratio,
            },
            InfestationSummary::BeesAndMites {
                bees,
                mites,
                mites_per_bee,
            } => InfestationRecord::BeesMites {
                bees,
                mites,
                mites_per_bee,
            },
            InfestationSummary::MitesOnly { mites } => InfestationRecord::MitesOnly { mites },
        }
    }
}

/// One self-describing record per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub record: String,
    pub version: String,
    pub config: RunConfig,
    pub classes: Vec<ClassRecord>,
    pub rows: Vec<RowRecord>,
    pub map50: f64,
    pub map_range: f64,
    pub mean_f1: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub infestation: Option<InfestationRecord>,
    /// Detections whose image id is not in the evaluated split.
    pub unmatched_detections: usize,
}

pub const RECORD_KIND: &str = "mitescan-eval-run";

pub fn run_record(report: &EvalReport, config: RunConfig, variant: DatasetVariant) -> RunRecord {
    let classes = report
        .classes
        .iter()
        .map(|c| ClassRecord {
            class_index: c.class,
            label: variant.class_at(c.class).map_or("?", |v| v.label()).into(),
            num_gt: c.num_gt,
            num_detections: c.num_detections,
            ap: c.ap.map(|a| a.to_vec()),
            tp: c.counts.tp,
            fp: c.counts.fp,
            fn_: c.counts.fn_,
            precision: c.precision,
            recall: c.recall,
            f1: c.f1,
        })
        .collect();
    RunRecord {
        record: RECORD_KIND.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config,
        classes,
        rows: table_rows(report, variant)
            .iter()
            .map(RowRecord::from)
            .collect(),
        map50: report.map50(),
        map_range: report.map_range(),
        mean_f1: report.mean_f1(),
        mean_precision: report.mean_precision(),
        mean_recall: report.mean_recall(),
        infestation: None,
        unmatched_detections: 0,
    }
}

pub fn format_cell(v: f64) -> String {
    format!("{:.3}", round_half_up(v, 3))
}

/// Fixed-width table, three decimals per cell.
pub fn render_table(title: &str, rows: &[ReportRow]) -> String {
    let width = rows
        .iter()
        .map(|r| r.label.len())
        .chain([5])
        .max()
        .unwrap_or(5);
    let mut s = String::new();
    writeln!(s, "{title}").unwrap();
    write!(s, "{:<width$}", "Class").unwrap();
    for c in COLUMNS {
        write!(s, "  {c:>13}").unwrap();
    }
    s.push('\n');
    for r in rows {
        write!(s, "{:<width$}", r.label).unwrap();
        for v in r.values() {
            write!(s, "  {:>13}", format_cell(v)).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn render_infestation(inf: &InfestationRecord) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |r| format!("{r:.4}"));
    match inf {
        InfestationRecord::HealthyIll {
            healthy,
            infected,
            ratio,
        } => {
            format!(
                "Infestation: {healthy} healthy, {infected} ill, ratio {}\n",
                opt(*ratio)
            )
        }
        InfestationRecord::BeesMites {
            bees,
            mites,
            mites_per_bee,
        } => {
            format!(
                "Infestation: {bees} bees, {mites} mites, {} mites per bee\n",
                opt(*mites_per_bee)
            )
        }
        InfestationRecord::MitesOnly { mites } => {
            format!("Infestation: {mites} mites, no bee counts\n")
        }
    }
}

/// The human-readable report for a run record.
pub fn render_record(record: &RunRecord) -> String {
    let title = DatasetVariant::from_name(&record.config.variant).map_or("Results", |v| v.title());
    let rows: Vec<ReportRow> = record.rows.iter().map(RowRecord::to_row).collect();
    let mut s = render_table(title, &rows);
    if let Some(inf) = &record.infestation {
        s.push_str(&render_infestation(inf));
    }
    s
}
