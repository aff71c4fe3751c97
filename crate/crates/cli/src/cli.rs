//! Command-line interface.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mitescan_core::anchors::{
    mite_anchor_fit, ssd_priors, vgg16_layers, yolo_grid_shapes, YoloAnchorConfig,
};
use mitescan_core::augment::PlanConfig;
use mitescan_core::dataset::{
    consistency_audit, histogram, remap, BeeClass, ClassLabel, DatasetVariant, ExpectedTotals,
    Labeling, Severity, Split, SplitDataset,
};
use mitescan_core::decode::{DecodeParams, Detection};
use mitescan_core::geometry::ImageDims;
use mitescan_core::metrics::{ApMethod, EvalConfig};
use mitescan_core::report::infestation;

use crate::annotations::{to_lines, write_annotations};
use crate::configs::{read_ssd_layers, read_yolo_anchors};
use crate::decoding::{decode_files, Decoder};
use crate::detections::{format_detections, read_detections};
use crate::error::{CliError, FormatError};
use crate::evaluation::{evaluate_parallel, join_images, pr_csv};
use crate::index::{format_index, load_dataset, DatasetIndex, IndexEntry, LoadedDataset};
use crate::plan::{plan_parallel, write_plan};
use crate::render::{
    render_record, run_record, InfestationRecord, RunConfig, RunRecord, RECORD_KIND,
};
use crate::rten;

#[derive(Debug, Parser)]
#[command(
    name = "mitescan",
    version,
    about = "Detection-pipeline toolkit for bee and varroa mite datasets"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Label space: bees-mites, healthy-ill or mites-only.
    #[arg(long, global = true, value_parser = parse_variant)]
    pub variant: Option<DatasetVariant>,
    /// Master seed for augmentation planning.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Confidence threshold (decode) or operating point (eval).
    #[arg(long, global = true)]
    pub conf: Option<f64>,
    #[arg(long = "nms-iou", global = true)]
    pub nms_iou: Option<f64>,
    /// all-points or 11-point.
    #[arg(long = "ap-method", global = true, value_parser = parse_ap_method)]
    pub ap_method: Option<ApMethod>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-split class histograms of a dataset.
    Stats {
        #[arg(long)]
        index: PathBuf,
    },
    /// Consistency checks over an all-classes dataset.
    Audit {
        #[arg(long)]
        index: PathBuf,
        /// Reference totals: `class <file_id> <count>` and `images <count>` lines.
        #[arg(long)]
        expected: Option<PathBuf>,
    },
    /// Writes a dataset remapped to `--variant`.
    Remap {
        #[arg(long)]
        index: PathBuf,
    },
    /// Plans the 44x expansion of the training split.
    Augment {
        #[arg(long)]
        index: PathBuf,
        /// Minimum fraction of a box's area that must survive a crop or erase.
        #[arg(long, default_value_t = PlanConfig::default().retention)]
        retention: f64,
    },
    /// SSD prior or YOLO grid counts.
    Priors {
        /// SSD layer table; VGG16 defaults when neither config is given.
        #[arg(long, conflicts_with = "anchors")]
        config: Option<PathBuf>,
        /// YOLO anchor table.
        #[arg(long)]
        anchors: Option<PathBuf>,
        #[arg(long = "input-size")]
        input_size: Option<u32>,
        /// Print every prior.
        #[arg(long)]
        dump: bool,
        /// Mite size range in pixels, `min,max`, for an anchor fit report.
        #[arg(long = "mite-range", value_parser = parse_range)]
        mite_range: Option<(f64, f64)>,
    },
    /// Decodes raw tensor files into a detection stream.
    Decode {
        #[arg(long, value_enum)]
        arch: Arch,
        #[arg(long, num_args = 1.., required = true)]
        raw: Vec<PathBuf>,
        #[arg(long, conflicts_with = "anchors")]
        priors: Option<PathBuf>,
        #[arg(long)]
        anchors: Option<PathBuf>,
        #[arg(long = "input-size")]
        input_size: Option<u32>,
        /// Original image size `WxH`; defaults to the network input size.
        #[arg(long, value_parser = parse_dims)]
        dims: Option<ImageDims>,
    },
    /// Scores a detection stream against a dataset split.
    Eval {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
        /// Architecture tag recorded in the run record.
        #[arg(long)]
        arch: Option<String>,
    },
    /// Renders a run record, optionally with an infestation summary.
    Report {
        #[arg(long)]
        record: Option<PathBuf>,
        #[arg(long)]
        detections: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Arch {
    Yolo,
    Ssd,
}

fn parse_variant(s: &str) -> Result<DatasetVariant, String> {
    DatasetVariant::from_name(s)
        .ok_or_else(|| format!("expected bees-mites, healthy-ill or mites-only, got {s:?}"))
}

fn parse_ap_method(s: &str) -> Result<ApMethod, String> {
    ApMethod::from_name(s).ok_or_else(|| format!("expected all-points or 11-point, got {s:?}"))
}

fn parse_split(s: &str) -> Result<Split, String> {
    Split::from_name(s).ok_or_else(|| format!("expected train, val or test, got {s:?}"))
}

fn parse_dims(s: &str) -> Result<ImageDims, String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    let w = w.parse().map_err(|e| format!("width: {e}"))?;
    let h = h.parse().map_err(|e| format!("height: {e}"))?;
    ImageDims::new(w, h).map_err(|e| e.to_string())
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected min,max")?;
    let a: f64 = a.parse().map_err(|e| format!("{e}"))?;
    let b: f64 = b.parse().map_err(|e| format!("{e}"))?;
    if !(a > 0.0 && a <= b) {
        return Err("need 0 < min <= max".into());
    }
    Ok((a, b))
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn check_threshold(name: &str, v: f64) -> Result<f64, CliError> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(invalid(format!("--{name} {v} is outside [0, 1]")))
    }
}

fn require_out(g: &GlobalArgs) -> Result<&Path, CliError> {
    g.out.as_deref().ok_or_else(|| invalid("--out is required"))
}

fn require_variant(g: &GlobalArgs) -> Result<DatasetVariant, CliError> {
    g.variant.ok_or_else(|| invalid("--variant is required"))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e).into())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| FormatError::io(path, e).into())
}

fn all_classes(ds: LoadedDataset, what: &str) -> Result<SplitDataset<BeeClass>, CliError> {
    match ds {
        LoadedDataset::AllClasses(ds) => Ok(ds),
        LoadedDataset::Variant(_) => Err(invalid(format!("{what} needs an all-classes dataset"))),
    }
}

/// Runs one parsed command, writing human output to `stdout`.
pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let threads = cli.global.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(anyhow::Error::from)?;
    let mut text = String::new();
    let result = pool.install(|| dispatch(&cli, &mut text));
    stdout
        .write_all(text.as_bytes())
        .map_err(anyhow::Error::from)?;
    result
}

fn dispatch(cli: &Cli, out: &mut String) -> Result<(), CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Stats { index } => stats(g, index, out),
        Command::Audit { index, expected } => audit(index, expected.as_deref(), out),
        Command::Remap { index } => remap_cmd(g, index, out),
        Command::Augment { index, retention } => augment(g, index, *retention, out),
        Command::Priors {
            config,
            anchors,
            input_size,
            dump,
            mite_range,
        } => priors(
            config.as_deref(),
            anchors.as_deref(),
            *input_size,
            *dump,
            *mite_range,
            out,
        ),
        Command::Decode {
            arch,
            raw,
            priors,
            anchors,
            input_size,
            dims,
        } => decode(
            g,
            *arch,
            raw,
            priors.as_deref(),
            anchors.as_deref(),
            *input_size,
            *dims,
            out,
        ),
        Command::Eval {
            index,
            detections,
            split,
            arch,
        } => eval(g, index, detections, *split, arch.clone(), out),
        Command::Report { record, detections } => {
            report(g, record.as_deref(), detections.as_deref(), out)
        }
    }
}

fn histogram_block<C: ClassLabel>(
    out: &mut String,
    title: &str,
    classes: &[C],
    ds: &SplitDataset<C>,
) {
    let hs: Vec<_> = Split::ALL.iter().map(|&s| histogram(ds.split(s))).collect();
    writeln!(out, "{title}").unwrap();
    writeln!(
        out,
        "{:<24}{:>8}{:>8}{:>8}{:>8}",
        "Class", "Train", "Val", "Test", "Total"
    )
    .unwrap();
    for &c in classes {
        let v: Vec<usize> = hs.iter().map(|h| h.get(c)).collect();
        writeln!(
            out,
            "{:<24}{:>8}{:>8}{:>8}{:>8}",
            c.label(),
            v[0],
            v[1],
            v[2],
            v.iter().sum::<usize>()
        )
        .unwrap();
    }
    let n: Vec<usize> = hs.iter().map(|h| h.images).collect();
    writeln!(
        out,
        "{:<24}{:>8}{:>8}{:>8}{:>8}",
        "Images",
        n[0],
        n[1],
        n[2],
        n.iter().sum::<usize>()
    )
    .unwrap();
}

fn stats(g: &GlobalArgs, index: &Path, out: &mut String) -> Result<(), CliError> {
    match load_dataset(index)? {
        LoadedDataset::AllClasses(ds) => {
            if g.variant.is_none() {
                histogram_block(out, "All Classes", &BeeClass::ALL, &ds);
            }
            let variants = g.variant.map_or(DatasetVariant::ALL.to_vec(), |v| vec![v]);
            for v in variants {
                out.push('\n');
                histogram_block(out, v.title(), v.classes(), &remap(&ds, v));
            }
        }
        LoadedDataset::Variant(ds) => {
            let Labeling::Variant(v) = ds.labeling else {
                unreachable!()
            };
            if g.variant.is_some_and(|want| want != v) {
                return Err(invalid(format!("dataset is labelled {}", v.name())));
            }
            histogram_block(out, v.title(), v.classes(), &ds);
        }
    }
    Ok(())
}

fn parse_expected(path: &Path) -> Result<ExpectedTotals, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    let mut exp = ExpectedTotals::default();
    for (i, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        let err = || FormatError::line(path, i + 1, format!("cannot parse {line:?}"));
        match f.as_slice() {
            [] => {}
            [c, ..] if c.starts_with('#') => {}
            ["images", n] => exp.images = Some(n.parse().map_err(|_| err())?),
            ["class", id, n] => {
                let class = id
                    .parse::<u8>()
                    .ok()
                    .and_then(BeeClass::from_file_id)
                    .ok_or_else(err)?;
                exp.class_totals
                    .insert(class, n.parse().map_err(|_| err())?);
            }
            _ => return Err(err()),
        }
    }
    Ok(exp)
}

fn audit(index: &Path, expected: Option<&Path>, out: &mut String) -> Result<(), CliError> {
    let ds = all_classes(load_dataset(index)?, "audit")?;
    let expected = expected.map(parse_expected).transpose()?;
    let report = consistency_audit(&ds, expected.as_ref());
    for rule in &report.rules {
        let status = match (rule.passed(), rule.severity) {
            (true, _) => "ok",
            (false, Severity::Error) => "FAIL",
            (false, Severity::Warning) => "warn",
        };
        writeln!(out, "{status:<5}{}", rule.name).unwrap();
        for f in &rule.findings {
            writeln!(out, "     {f}").unwrap();
        }
    }
    if report.passed() {
        Ok(())
    } else {
        Err(invalid(format!(
            "audit failed with {} error(s)",
            report.errors().count()
        )))
    }
}

fn remap_cmd(g: &GlobalArgs, index: &Path, out: &mut String) -> Result<(), CliError> {
    let variant = require_variant(g)?;
    let dir = require_out(g)?;
    let ds = remap(&all_classes(load_dataset(index)?, "remap")?, variant);
    create_dir(&dir.join("labels"))?;
    let mut entries = Vec::new();
    for split in Split::ALL {
        for img in ds.split(split) {
            let rel = Path::new("labels").join(format!("{}.txt", img.image_id));
            let lines = to_lines(&img.annotations, img.dims, |c| {
                variant.class_index(c).expect("variant class")
            })
            .map_err(|e| invalid(format!("{}: {e}", img.image_id)))?;
            write_annotations(&dir.join(&rel), &lines)?;
            entries.push(IndexEntry {
                image_id: img.image_id.clone(),
                dims: img.dims,
                split,
                annotation_path: rel,
            });
        }
    }
    let index = DatasetIndex {
        labeling: Labeling::Variant(variant),
        entries,
    };
    write_file(&dir.join("index.txt"), format_index(&index))?;
    writeln!(
        out,
        "remapped {} images to {}",
        index.entries.len(),
        variant.name()
    )
    .unwrap();
    Ok(())
}

fn augment(g: &GlobalArgs, index: &Path, retention: f64, out: &mut String) -> Result<(), CliError> {
    let dir = require_out(g)?;
    let cfg = PlanConfig {
        retention: check_threshold("retention", retention)?,
        ..PlanConfig::default()
    };
    let ds = all_classes(load_dataset(index)?, "augment")?;
    let plan = plan_parallel(&ds.train, Split::Train, g.seed.unwrap_or(0), &cfg)
        .map_err(|e| invalid(e.to_string()))?;
    write_plan(dir, &plan)?;
    let entries = plan
        .iter()
        .map(|e| IndexEntry {
            image_id: e.output_id.clone(),
            dims: e.dims,
            split: Split::Train,
            annotation_path: crate::plan::annotation_rel_path(e),
        })
        .collect();
    write_file(
        &dir.join("index.txt"),
        format_index(&DatasetIndex {
            labeling: Labeling::AllClasses,
            entries,
        }),
    )?;
    let kept: usize = plan.iter().map(|e| e.annotations.len()).sum();
    let dropped: usize = plan.iter().map(|e| e.dropped).sum();
    writeln!(
        out,
        "entries {}\nannotations {kept}\ndropped {dropped}",
        plan.len()
    )
    .unwrap();
    Ok(())
}

fn priors(
    config: Option<&Path>,
    anchors: Option<&Path>,
    input_size: Option<u32>,
    dump: bool,
    mite_range: Option<(f64, f64)>,
    out: &mut String,
) -> Result<(), CliError> {
    if let Some(path) = anchors {
        let cfg = read_yolo_anchors(path, input_size.unwrap_or(640))?;
        let shapes = yolo_grid_shapes(&cfg, 0).map_err(|e| invalid(e.to_string()))?;
        for (s, sc) in shapes.iter().zip(&cfg.scales) {
            writeln!(
                out,
                "stride {} grid {}x{} anchors {}",
                sc.stride, s.grid, s.grid, s.anchors
            )
            .unwrap();
        }
        writeln!(
            out,
            "predictions {}",
            shapes.iter().map(|s| s.predictions()).sum::<usize>()
        )
        .unwrap();
        return Ok(());
    }
    let layers = config
        .map(read_ssd_layers)
        .transpose()?
        .unwrap_or_else(vgg16_layers);
    let input = input_size.unwrap_or(300);
    let priors = ssd_priors(&layers, input).map_err(|e| invalid(e.to_string()))?;
    writeln!(out, "priors {}", priors.len()).unwrap();
    if let Some(range) = mite_range {
        for fit in mite_anchor_fit(&priors, range, input) {
            writeln!(
                out,
                "mite {}px best IoU {:.4} at layer {}",
                fit.size_px, fit.best_iou, fit.best_layer
            )
            .unwrap();
        }
    }
    if dump {
        for p in &priors {
            let b = p.bbox;
            writeln!(
                out,
                "{} {} {} {} {:.6} {:.6} {:.6} {:.6}",
                p.layer, p.row, p.col, p.slot, b.cx, b.cy, b.w, b.h
            )
            .unwrap();
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn decode(
    g: &GlobalArgs,
    arch: Arch,
    raw: &[PathBuf],
    priors: Option<&Path>,
    anchors: Option<&Path>,
    input_size: Option<u32>,
    dims: Option<ImageDims>,
    out: &mut String,
) -> Result<(), CliError> {
    let (mut params, decoder, input) = match arch {
        Arch::Yolo => {
            if priors.is_some() {
                return Err(invalid("--priors applies to ssd; use --anchors for yolo"));
            }
            let input = input_size.unwrap_or(640);
            let cfg = match anchors {
                Some(p) => read_yolo_anchors(p, input)?,
                None => YoloAnchorConfig::yolov5(input),
            };
            (DecodeParams::yolo(), Decoder::Yolo(cfg), input)
        }
        Arch::Ssd => {
            if anchors.is_some() {
                return Err(invalid("--anchors applies to yolo; use --priors for ssd"));
            }
            let input = input_size.unwrap_or(300);
            let layers = priors
                .map(read_ssd_layers)
                .transpose()?
                .unwrap_or_else(vgg16_layers);
            let priors = ssd_priors(&layers, input).map_err(|e| invalid(e.to_string()))?;
            (DecodeParams::ssd(), Decoder::Ssd(priors), input)
        }
    };
    if let Some(c) = g.conf {
        params.confidence_threshold = check_threshold("conf", c)?;
    }
    if let Some(n) = g.nms_iou {
        params.nms_iou_threshold = check_threshold("nms-iou", n)?;
    }
    let dims = match dims {
        Some(d) => d,
        None => ImageDims::new(input, input).map_err(|e| invalid(e.to_string()))?,
    };
    let files = raw
        .iter()
        .map(|p| rten::read(p))
        .collect::<Result<Vec<_>, _>>()?;
    let dets = decode_files(files, &decoder, &params, dims).map_err(anyhow::Error::from)?;
    let text = format_detections(&dets);
    match &g.out {
        Some(path) => {
            write_file(path, &text)?;
            writeln!(out, "decoded {} detections", dets.len()).unwrap();
        }
        None => out.push_str(&text),
    }
    Ok(())
}

fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '-'
            }
        })
        .collect()
}

fn eval(
    g: &GlobalArgs,
    index: &Path,
    detections: &Path,
    split: Split,
    arch: Option<String>,
    out: &mut String,
) -> Result<(), CliError> {
    let variant = require_variant(g)?;
    let dir = require_out(g)?;
    let cfg = EvalConfig {
        ap_method: g.ap_method.unwrap_or_default(),
        operating_threshold: check_threshold(
            "conf",
            g.conf.unwrap_or(EvalConfig::default().operating_threshold),
        )?,
    };
    if let Some(n) = g.nms_iou {
        check_threshold("nms-iou", n)?;
    }
    let ds = load_dataset(index)?.for_variant(variant).map_err(invalid)?;
    let dets = read_detections(detections)?;
    let num_classes = variant.classes().len() as u32;
    if let Some(d) = dets.iter().find(|d| d.class >= num_classes) {
        return Err(invalid(format!(
            "detection class {} is not a {} class",
            d.class,
            variant.name()
        )));
    }
    let (images, unmatched) = join_images(ds.split(split), variant, dets);
    let classes: Vec<u32> = (0..num_classes).collect();
    let report = evaluate_parallel(&images, &classes, &cfg);
    let config = RunConfig {
        variant: variant.name().into(),
        architecture: arch,
        split: split.name().into(),
        operating_threshold: cfg.operating_threshold,
        nms_iou_threshold: g.nms_iou,
        ap_method: cfg.ap_method.name().into(),
        index: index.display().to_string(),
        detections: detections.display().to_string(),
    };
    let mut record = run_record(&report, config, variant);
    let operating: Vec<Detection> = images
        .iter()
        .flat_map(|i| &i.detections)
        .filter(|d| d.confidence >= cfg.operating_threshold)
        .cloned()
        .collect();
    record.infestation = Some(InfestationRecord::from(infestation(&operating, variant)));
    record.unmatched_detections = unmatched.len();

    create_dir(&dir.join("pr"))?;
    for c in &report.classes {
        let label = variant.class_at(c.class).map_or("unknown", |v| v.label());
        write_file(
            &dir.join("pr").join(format!("{}.csv", slug(label))),
            pr_csv(&c.curve),
        )?;
    }
    let rendered = render_record(&record);
    write_file(&dir.join("report.txt"), &rendered)?;
    let json = serde_json::to_string(&record).map_err(anyhow::Error::from)?;
    write_file(&dir.join("record.json"), json + "\n")?;
    out.push_str(&rendered);
    Ok(())
}

fn report(
    g: &GlobalArgs,
    record: Option<&Path>,
    detections: Option<&Path>,
    out: &mut String,
) -> Result<(), CliError> {
    if record.is_none() && detections.is_none() {
        return Err(invalid("report needs --record, --detections or both"));
    }
    if let Some(path) = record {
        let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
        let rec: RunRecord = serde_json::from_str(&text)
            .with_context(|| format!("{}: not a run record", path.display()))?;
        if rec.record != RECORD_KIND {
            return Err(anyhow!("{}: record kind {:?}", path.display(), rec.record).into());
        }
        rec.config.validate().map_err(invalid)?;
        out.push_str(&render_record(&rec));
    }
    if let Some(path) = detections {
        let variant = require_variant(g)?;
        let threshold = check_threshold("conf", g.conf.unwrap_or(0.0))?;
        let dets: Vec<Detection> = read_detections(path)?
            .into_iter()
            .filter(|d| d.confidence >= threshold)
            .collect();
        let mut per_image: BTreeMap<&str, usize> = BTreeMap::new();
        for d in &dets {
            *per_image.entry(d.image_id.as_str()).or_default() += 1;
        }
        out.push_str(&crate::render::render_infestation(
            &infestation(&dets, variant).into(),
        ));
        writeln!(out, "images with detections: {}", per_image.len()).unwrap();
    }
    Ok(())
}
