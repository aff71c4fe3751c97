//! Groups tensor files by image and decodes each image in parallel.

use std::collections::BTreeMap;

use mitescan_core::anchors::{PriorBox, YoloAnchorConfig};
use mitescan_core::decode::{
    decode_ssd, decode_yolo, DecodeError, DecodeParams, Detection, Layout, RawTensor,
};
use mitescan_core::geometry::ImageDims;
use rayon::prelude::*;

use crate::rten::TensorFile;

pub enum Decoder {
    Yolo(YoloAnchorConfig),
    Ssd(Vec<PriorBox>),
}

#[derive(Debug, thiserror::Error)]
pub enum DecodeFilesError {
    #[error("image {image_id}: {source}")]
    Decode {
        image_id: String,
        source: DecodeError,
    },
    #[error("image {image_id}: expected one {layout} tensor, found {count}")]
    SsdPair {
        image_id: String,
        layout: &'static str,
        count: usize,
    },
}

/// Decoded detections for every image, ordered by image id and then by
/// detection order within each image.
pub fn decode_files(
    files: Vec<TensorFile>,
    decoder: &Decoder,
    params: &DecodeParams,
    dims: ImageDims,
) -> Result<Vec<Detection>, DecodeFilesError> {
    let mut groups: BTreeMap<String, Vec<RawTensor>> = BTreeMap::new();
    for f in files {
        groups.entry(f.image_id).or_default().push(f.tensor);
    }
    let groups: Vec<_> = groups.into_iter().collect();
    let per_image = groups
        .par_iter()
        .map(|(image_id, tensors)| decode_one(image_id, tensors, decoder, params, dims))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(per_image.into_iter().flatten().collect())
}

fn decode_one(
    image_id: &str,
    tensors: &[RawTensor],
    decoder: &Decoder,
    params: &DecodeParams,
    dims: ImageDims,
) -> Result<Vec<Detection>, DecodeFilesError> {
    let wrap = |source| DecodeFilesError::Decode {
        image_id: image_id.into(),
        source,
    };
    match decoder {
        Decoder::Yolo(cfg) => decode_yolo(tensors, cfg, params, dims, image_id).map_err(wrap),
        Decoder::Ssd(priors) => {
            let pick = |layout: Layout| {
                let found: Vec<_> = tensors.iter().filter(|t| t.layout() == layout).collect();
                match found.as_slice() {
                    [one] => Ok(*one),
                    _ => Err(DecodeFilesError::SsdPair {
                        image_id: image_id.into(),
                        layout: layout.tag(),
                        count: found.len(),
                    }),
                }
            };
            let loc = pick(Layout::PriorLocations)?;
            let scores = pick(Layout::PriorScores)?;
            decode_ssd(loc, scores, priors, params, dims, image_id).map_err(wrap)
        }
    }
}
