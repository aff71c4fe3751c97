//! Augmentation plan output and parallel planning.
//!
//! The plan file is tab-separated: `output_id source_id quarter_turns
//! style_id seed w h params annotation_path`. `params` holds the sampled
//! style parameters (`-` for unstyled entries); `annotation_path` points at
//! the entry's transformed annotations, relative to the plan file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mitescan_core::augment::{plan_image, sort_plan, AugPlanEntry, AugmentError, PlanConfig};
use mitescan_core::dataset::{BeeClass, LabeledImage, Split};
use rayon::prelude::*;

use crate::annotations::{to_lines, write_annotations};
use crate::error::FormatError;

/// Same result as `plan_expansion`, planned per source image in parallel.
pub fn plan_parallel<C: Copy + Send + Sync>(
    train: &[LabeledImage<C>],
    split: Split,
    master_seed: u64,
    cfg: &PlanConfig,
) -> Result<Vec<AugPlanEntry<C>>, AugmentError> {
    if split != Split::Train {
        return Err(AugmentError::NotTrainSplit(split));
    }
    if train.is_empty() {
        return Err(AugmentError::EmptySplit);
    }
    let per_image: Vec<Vec<AugPlanEntry<C>>> = train
        .par_iter()
        .map(|img| plan_image(img, master_seed, cfg))
        .collect::<Result<_, _>>()?;
    let mut plan: Vec<_> = per_image.into_iter().flatten().collect();
    sort_plan(&mut plan);
    Ok(plan)
}

pub fn annotation_rel_path<C>(entry: &AugPlanEntry<C>) -> PathBuf {
    Path::new("labels").join(format!("{}.txt", entry.output_id))
}

pub fn plan_row<C>(entry: &AugPlanEntry<C>) -> String {
    let params = entry.style.map_or_else(|| "-".to_string(), |s| s.params());
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
        entry.output_id,
        entry.source_id,
        entry.quarter_turns,
        entry.style_id(),
        entry.seed,
        entry.dims.width(),
        entry.dims.height(),
        params,
        annotation_rel_path(entry).display()
    )
}

pub fn format_plan<C>(plan: &[AugPlanEntry<C>]) -> String {
    let mut s = String::new();
    for e in plan {
        writeln!(s, "{}", plan_row(e)).unwrap();
    }
    s
}

/// Writes `plan.tsv` and one annotation file per entry under `out/labels`.
pub fn write_plan(out: &Path, plan: &[AugPlanEntry<BeeClass>]) -> Result<PathBuf, FormatError> {
    let labels = out.join("labels");
    std::fs::create_dir_all(&labels).map_err(|e| FormatError::io(&labels, e))?;
    plan.par_iter().try_for_each(|e| {
        let path = out.join(annotation_rel_path(e));
        let lines = to_lines(&e.annotations, e.dims, |c| u32::from(c.file_id()))
            .map_err(|g| FormatError::file(&path, g.to_string()))?;
        write_annotations(&path, &lines)
    })?;
    let path = out.join("plan.tsv");
    std::fs::write(&path, format_plan(plan)).map_err(|e| FormatError::io(&path, e))?;
    Ok(path)
}
