//! Dataset index files: `image_id width height split relative_annotation_path`.
//!
//! Lines starting with `#` are comments, except `#labels <variant>`, which
//! marks annotation files as already remapped to that variant's class ids.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mitescan_core::dataset::{
    BeeClass, DatasetVariant, LabeledImage, Labeling, Split, SplitDataset, VariantClass,
};
use mitescan_core::geometry::ImageDims;
use rayon::prelude::*;

use crate::annotations::{read_annotations, to_pixels};
use crate::error::FormatError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub image_id: String,
    pub dims: ImageDims,
    pub split: Split,
    pub annotation_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetIndex {
    pub labeling: Labeling,
    pub entries: Vec<IndexEntry>,
}

pub fn parse_index(text: &str, path: &Path) -> Result<DatasetIndex, FormatError> {
    let mut labeling = Labeling::AllClasses;
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        let err = |m: String| FormatError::line(path, i + 1, m);
        if let Some(rest) = line.strip_prefix("#labels") {
            let name = rest.trim();
            let v = DatasetVariant::from_name(name)
                .ok_or_else(|| err(format!("unknown variant {name:?}")))?;
            labeling = Labeling::Variant(v);
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", f.len())));
        }
        let width = f[1]
            .parse::<u32>()
            .map_err(|e| err(format!("width {:?}: {e}", f[1])))?;
        let height = f[2]
            .parse::<u32>()
            .map_err(|e| err(format!("height {:?}: {e}", f[2])))?;
        let dims = ImageDims::new(width, height).map_err(|e| err(e.to_string()))?;
        let split =
            Split::from_name(f[3]).ok_or_else(|| err(format!("unknown split {:?}", f[3])))?;
        if !seen.insert((f[0], split)) {
            return Err(err(format!("image {} listed twice in {split}", f[0])));
        }
        entries.push(IndexEntry {
            image_id: f[0].into(),
            dims,
            split,
            annotation_path: f[4].into(),
        });
    }
    Ok(DatasetIndex { labeling, entries })
}

pub fn format_index(index: &DatasetIndex) -> String {
    let mut s = String::new();
    if let Labeling::Variant(v) = index.labeling {
        writeln!(s, "#labels {}", v.name()).unwrap();
    }
    for e in &index.entries {
        writeln!(
            s,
            "{} {} {} {} {}",
            e.image_id,
            e.dims.width(),
            e.dims.height(),
            e.split.name(),
            e.annotation_path.display()
        )
        .unwrap();
    }
    s
}

pub fn read_index(path: &Path) -> Result<DatasetIndex, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    parse_index(&text, path)
}

fn load<C: Send>(
    index: &DatasetIndex,
    base: &Path,
    class_of: impl Fn(u32) -> Option<C> + Sync,
) -> Result<[Vec<LabeledImage<C>>; 3], FormatError> {
    let images: Vec<(Split, LabeledImage<C>)> = index
        .entries
        .par_iter()
        .map(|e| {
            let path = base.join(&e.annotation_path);
            let lines = read_annotations(&path)?;
            let annotations = to_pixels(&lines, e.dims, &path, &class_of)?;
            Ok((
                e.split,
                LabeledImage {
                    image_id: e.image_id.clone(),
                    dims: e.dims,
                    annotations,
                },
            ))
        })
        .collect::<Result<_, FormatError>>()?;
    let mut out = [Vec::new(), Vec::new(), Vec::new()];
    for (split, image) in images {
        out[split as usize].push(image);
    }
    Ok(out)
}

/// A dataset in whichever label space its index declares.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedDataset {
    AllClasses(SplitDataset<BeeClass>),
    Variant(SplitDataset<VariantClass>),
}

impl LoadedDataset {
    /// The dataset in `variant`'s label space, remapping when needed.
    pub fn for_variant(
        &self,
        variant: DatasetVariant,
    ) -> Result<SplitDataset<VariantClass>, String> {
        match self {
            LoadedDataset::AllClasses(ds) => Ok(mitescan_core::dataset::remap(ds, variant)),
            LoadedDataset::Variant(ds) if ds.labeling == Labeling::Variant(variant) => {
                Ok(ds.clone())
            }
            LoadedDataset::Variant(ds) => Err(format!(
                "dataset is labelled {:?}, cannot evaluate it as {}",
                ds.labeling,
                variant.name()
            )),
        }
    }
}

/// Reads the index and every annotation file it lists. Annotation paths are
/// relative to the index's directory.
pub fn load_dataset(index_path: &Path) -> Result<LoadedDataset, FormatError> {
    let index = read_index(index_path)?;
    let base = index_path.parent().unwrap_or(Path::new("."));
    Ok(match index.labeling {
        Labeling::AllClasses => {
            let [train, val, test] = load(&index, base, |id| {
                u8::try_from(id).ok().and_then(BeeClass::from_file_id)
            })?;
            LoadedDataset::AllClasses(SplitDataset::all_classes(train, val, test))
        }
        Labeling::Variant(v) => {
            let [train, val, test] = load(&index, base, |id| v.class_at(id))?;
            LoadedDataset::Variant(SplitDataset {
                labeling: index.labeling,
                train,
                val,
                test,
            })
        }
    })
}
