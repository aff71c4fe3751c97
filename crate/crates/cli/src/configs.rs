//! Anchor and prior configuration files.
//!
//! SSD layers, one per line: `fm shrinkage min max ratios per_cell`, with
//! ratios comma-separated (`1,2,3`). YOLO scales, three lines of
//! `stride w h w h w h`. Blank lines and `#` comments are ignored.

use std::fmt::Write as _;
use std::path::Path;

use mitescan_core::anchors::{SsdLayerConfig, YoloAnchorConfig, YoloScale};

use crate::error::FormatError;

fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim();
        (!l.is_empty() && !l.starts_with('#')).then(|| (i + 1, l.split_whitespace().collect()))
    })
}

fn num<T: std::str::FromStr>(
    field: &str,
    what: &str,
    path: &Path,
    line: usize,
) -> Result<T, FormatError>
where
    T::Err: std::fmt::Display,
{
    field
        .parse()
        .map_err(|e| FormatError::line(path, line, format!("{what} {field:?}: {e}")))
}

pub fn parse_ssd_layers(text: &str, path: &Path) -> Result<Vec<SsdLayerConfig>, FormatError> {
    let mut layers = Vec::new();
    for (line, f) in content_lines(text) {
        if f.len() != 6 {
            return Err(FormatError::line(
                path,
                line,
                format!("expected 6 fields, found {}", f.len()),
            ));
        }
        let aspect_ratios = f[4]
            .split(',')
            .map(|r| num::<f64>(r, "aspect ratio", path, line))
            .collect::<Result<Vec<_>, _>>()?;
        let layer = SsdLayerConfig {
            feature_map_size: num(f[0], "feature map size", path, line)?,
            shrinkage: num(f[1], "shrinkage", path, line)?,
            box_min: num(f[2], "min size", path, line)?,
            box_max: num(f[3], "max size", path, line)?,
            aspect_ratios,
            boxes_per_cell: num(f[5], "boxes per cell", path, line)?,
        };
        layer
            .validate(layers.len())
            .map_err(|e| FormatError::line(path, line, e.to_string()))?;
        layers.push(layer);
    }
    if layers.is_empty() {
        return Err(FormatError::file(path, "no layers"));
    }
    Ok(layers)
}

pub fn format_ssd_layers(layers: &[SsdLayerConfig]) -> String {
    let mut s = String::from("# fm shrinkage min max ratios per_cell\n");
    for l in layers {
        let ratios: Vec<String> = l.aspect_ratios.iter().map(|r| r.to_string()).collect();
        writeln!(
            s,
            "{} {} {} {} {} {}",
            l.feature_map_size,
            l.shrinkage,
            l.box_min,
            l.box_max,
            ratios.join(","),
            l.boxes_per_cell
        )
        .unwrap();
    }
    s
}

pub fn parse_yolo_anchors(
    text: &str,
    path: &Path,
    input_size: u32,
) -> Result<YoloAnchorConfig, FormatError> {
    let mut scales = Vec::new();
    for (line, f) in content_lines(text) {
        if f.len() != 7 {
            return Err(FormatError::line(
                path,
                line,
                format!("expected 7 fields, found {}", f.len()),
            ));
        }
        let stride: u32 = num(f[0], "stride", path, line)?;
        let mut anchors = [(0.0, 0.0); 3];
        for (i, a) in anchors.iter_mut().enumerate() {
            *a = (
                num(f[1 + 2 * i], "anchor width", path, line)?,
                num(f[2 + 2 * i], "anchor height", path, line)?,
            );
            if !(a.0 > 0.0 && a.1 > 0.0) {
                return Err(FormatError::line(
                    path,
                    line,
                    "anchor sizes must be positive",
                ));
            }
        }
        scales.push(YoloScale { stride, anchors });
    }
    let scales: [YoloScale; 3] = scales.try_into().map_err(|v: Vec<_>| {
        FormatError::file(path, format!("expected 3 scales, found {}", v.len()))
    })?;
    let cfg = YoloAnchorConfig { input_size, scales };
    for i in 0..3 {
        cfg.grid_size(i)
            .map_err(|e| FormatError::file(path, e.to_string()))?;
    }
    Ok(cfg)
}

pub fn format_yolo_anchors(cfg: &YoloAnchorConfig) -> String {
    let mut s = String::from("# stride w h w h w h\n");
    for sc in &cfg.scales {
        write!(s, "{}", sc.stride).unwrap();
        for (w, h) in sc.anchors {
            write!(s, " {w} {h}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn read_ssd_layers(path: &Path) -> Result<Vec<SsdLayerConfig>, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    parse_ssd_layers(&text, path)
}

pub fn read_yolo_anchors(path: &Path, input_size: u32) -> Result<YoloAnchorConfig, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    parse_yolo_anchors(&text, path, input_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mitescan_core::anchors::vgg16_layers;

    #[test]
    fn vgg_table_round_trip() {
        let text = format_ssd_layers(&vgg16_layers());
        assert_eq!(
            parse_ssd_layers(&text, Path::new("x")).unwrap(),
            vgg16_layers()
        );
    }

    #[test]
    fn yolo_round_trip() {
        let cfg = YoloAnchorConfig::yolov5(640);
        let text = format_yolo_anchors(&cfg);
        assert!(text.contains("8 10 13 16 30 33 23"));
        assert_eq!(parse_yolo_anchors(&text, Path::new("x"), 640).unwrap(), cfg);
    }

    #[test]
    fn mismatched_per_cell_is_rejected() {
        let e = parse_ssd_layers("38 16 15 30 1,2,3 4\n", Path::new("c")).unwrap_err();
        assert!(e.to_string().contains("aspect ratios imply 6"), "{e}");
        assert!(parse_yolo_anchors("8 10 13 16 30 33 23\n", Path::new("a"), 640).is_err());
        assert!(parse_yolo_anchors(
            &format_yolo_anchors(&YoloAnchorConfig::yolov5(640)),
            Path::new("a"),
            100
        )
        .is_err());
    }
}
