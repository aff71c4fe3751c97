//! Per-image annotation files: `class_id cx cy w h` per line, normalized
//! center form, six decimals when written.

use std::fmt::Write as _;
use std::path::Path;

use mitescan_core::dataset::Annotation;
use mitescan_core::geometry::{from_normalized, to_normalized, ImageDims, NormCenterBox};

use crate::error::FormatError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnotationLine {
    pub class: u32,
    pub bbox: NormCenterBox,
}

pub fn parse_annotations(text: &str, path: &Path) -> Result<Vec<AnnotationLine>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: String| FormatError::line(path, i + 1, m);
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", fields.len())));
        }
        let class = fields[0]
            .parse::<u32>()
            .map_err(|e| err(format!("class id {:?}: {e}", fields[0])))?;
        let mut v = [0.0f64; 4];
        for (slot, field) in v.iter_mut().zip(&fields[1..]) {
            *slot = field
                .parse::<f64>()
                .map_err(|e| err(format!("coordinate {field:?}: {e}")))?;
            if !slot.is_finite() {
                return Err(err(format!("coordinate {field:?} is not finite")));
            }
        }
        if v[2] < 0.0 || v[3] < 0.0 {
            return Err(err("negative box size".into()));
        }
        out.push(AnnotationLine {
            class,
            bbox: NormCenterBox {
                cx: v[0],
                cy: v[1],
                w: v[2],
                h: v[3],
            },
        });
    }
    Ok(out)
}

pub fn format_annotations(lines: &[AnnotationLine]) -> String {
    let mut s = String::new();
    for l in lines {
        let b = l.bbox;
        writeln!(
            s,
            "{} {:.6} {:.6} {:.6} {:.6}",
            l.class, b.cx, b.cy, b.w, b.h
        )
        .unwrap();
    }
    s
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationLine>, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    parse_annotations(&text, path)
}

pub fn write_annotations(path: &Path, lines: &[AnnotationLine]) -> Result<(), FormatError> {
    std::fs::write(path, format_annotations(lines)).map_err(|e| FormatError::io(path, e))
}

/// Pixel-space annotations; `class_of` maps file ids to labels.
pub fn to_pixels<C>(
    lines: &[AnnotationLine],
    dims: ImageDims,
    path: &Path,
    class_of: impl Fn(u32) -> Option<C>,
) -> Result<Vec<Annotation<C>>, FormatError> {
    lines
        .iter()
        .map(|l| {
            let class = class_of(l.class)
                .ok_or_else(|| FormatError::file(path, format!("unknown class id {}", l.class)))?;
            Ok(Annotation {
                class,
                bbox: from_normalized(&l.bbox, dims),
            })
        })
        .collect()
}

/// Normalized lines for in-frame annotations.
pub fn to_lines<C: Copy>(
    anns: &[Annotation<C>],
    dims: ImageDims,
    id_of: impl Fn(C) -> u32,
) -> Result<Vec<AnnotationLine>, mitescan_core::geometry::GeometryError> {
    anns.iter()
        .map(|a| {
            Ok(AnnotationLine {
                class: id_of(a.class),
                bbox: to_normalized(&a.bbox, dims)?,
            })
        })
        .collect()
}
