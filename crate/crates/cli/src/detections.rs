//! Detection stream: one JSON object per line,
//! `{"image": …, "class": …, "bbox": [x1,y1,x2,y2], "score": …}`.

use std::path::Path;

use mitescan_core::decode::Detection;
use mitescan_core::geometry::BoundingBox;
use serde::{Deserialize, Serialize};

use crate::error::FormatError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image: String,
    pub class: u32,
    pub bbox: [f64; 4],
    pub score: f64,
}

impl From<&Detection> for DetectionRecord {
    fn from(d: &Detection) -> Self {
        let b = d.bbox;
        Self {
            image: d.image_id.clone(),
            class: d.class,
            bbox: [b.x_min, b.y_min, b.x_max, b.y_max],
            score: d.confidence,
        }
    }
}

impl DetectionRecord {
    pub fn to_detection(&self) -> Result<Detection, String> {
        let [x0, y0, x1, y1] = self.bbox;
        let bbox = BoundingBox::new(x0, y0, x1, y1).map_err(|e| e.to_string())?;
        if !(0.0..=1.0).contains(&self.score) {
            return Err(format!("score {} is outside [0, 1]", self.score));
        }
        Ok(Detection {
            image_id: self.image.clone(),
            class: self.class,
            bbox,
            confidence: self.score,
        })
    }
}

pub fn format_detections(dets: &[Detection]) -> String {
    let mut s = String::new();
    for d in dets {
        s.push_str(&serde_json::to_string(&DetectionRecord::from(d)).expect("record serializes"));
        s.push('\n');
    }
    s
}

pub fn parse_detections(text: &str, path: &Path) -> Result<Vec<Detection>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: DetectionRecord = serde_json::from_str(line)
            .map_err(|e| FormatError::line(path, i + 1, e.to_string()))?;
        out.push(
            rec.to_detection()
                .map_err(|m| FormatError::line(path, i + 1, m))?,
        );
    }
    Ok(out)
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    parse_detections(&text, path)
}
