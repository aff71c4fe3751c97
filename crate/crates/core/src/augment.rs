//! Expansion planning for the training split.
//!
//! Each source image becomes 44 plan entries: for every quarter turn
//! k in 0..4 there is the plain rotated image plus ten derivatives, each
//! carrying one randomly drawn style. The planner only decides *what* to
//! render and rewrites the annotations; pixels are left to whatever image tool
//! consumes the plan.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Annotation, LabeledImage, Split};
use crate::geometry::{rotate_box, BoundingBox, GeometryError, ImageDims};

pub const ROTATIONS: u8 = 4;
pub const DERIVATIVES_PER_ROTATION: u8 = 10;
/// Entries generated per source image.
pub const ENTRIES_PER_IMAGE: usize = (ROTATIONS as usize) * (1 + DERIVATIVES_PER_ROTATION as usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StyleKind {
    GaussianBlur,
    MotionBlur,
    GaussianNoise,
    SaltPepper,
    HueShift,
    BrightnessShift,
    ContrastShift,
    FogOverlay,
    RandomErase,
    Translate,
}

impl StyleKind {
    pub const ALL: [StyleKind; 10] = [
        StyleKind::GaussianBlur,
        StyleKind::MotionBlur,
        StyleKind::GaussianNoise,
        StyleKind::SaltPepper,
        StyleKind::HueShift,
        StyleKind::BrightnessShift,
        StyleKind::ContrastShift,
        StyleKind::FogOverlay,
        StyleKind::RandomErase,
        StyleKind::Translate,
    ];

    pub fn id(self) -> &'static str {
        match self {
            StyleKind::GaussianBlur => "gaussian-blur",
            StyleKind::MotionBlur => "motion-blur",
            StyleKind::GaussianNoise => "additive-gaussian-noise",
            StyleKind::SaltPepper => "salt-pepper",
            StyleKind::HueShift => "hue-shift",
            StyleKind::BrightnessShift => "brightness-shift",
            StyleKind::ContrastShift => "contrast-shift",
            StyleKind::FogOverlay => "fog-overlay",
            StyleKind::RandomErase => "random-erase",
            StyleKind::Translate => "translate",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.id() == id)
    }

    pub fn geometry_affecting(self) -> bool {
        matches!(self, StyleKind::RandomErase | StyleKind::Translate)
    }
}

/// A style with its drawn parameters. Pixel quantities refer to the rotated
/// frame the style is applied to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugStyle {
    GaussianBlur {
        sigma: f64,
    },
    MotionBlur {
        kernel: u32,
        angle_deg: f64,
    },
    GaussianNoise {
        std_dev: f64,
    },
    SaltPepper {
        fraction: f64,
    },
    HueShift {
        degrees: f64,
    },
    BrightnessShift {
        delta: f64,
    },
    ContrastShift {
        factor: f64,
    },
    FogOverlay {
        density: f64,
    },
    /// Fills the rectangle with noise; boxes it hides are dropped.
    RandomErase {
        region: BoundingBox,
    },
    /// Shifts content by whole pixels; vacated area is padded.
    Translate {
        dx: i32,
        dy: i32,
    },
}

impl AugStyle {
    pub fn kind(&self) -> StyleKind {
        match self {
            AugStyle::GaussianBlur { .. } => StyleKind::GaussianBlur,
            AugStyle::MotionBlur { .. } => StyleKind::MotionBlur,
            AugStyle::GaussianNoise { .. } => StyleKind::GaussianNoise,
            AugStyle::SaltPepper { .. } => StyleKind::SaltPepper,
            AugStyle::HueShift { .. } => StyleKind::HueShift,
            AugStyle::BrightnessShift { .. } => StyleKind::BrightnessShift,
            AugStyle::ContrastShift { .. } => StyleKind::ContrastShift,
            AugStyle::FogOverlay { .. } => StyleKind::FogOverlay,
            AugStyle::RandomErase { .. } => StyleKind::RandomErase,
            AugStyle::Translate { .. } => StyleKind::Translate,
        }
    }

    pub fn geometry_affecting(&self) -> bool {
        self.kind().geometry_affecting()
    }

    /// `key=value` pairs joined by `;`, six decimals for reals.
    pub fn params(&self) -> String {
        match *self {
            AugStyle::GaussianBlur { sigma } => format!("sigma={sigma:.6}"),
            AugStyle::MotionBlur { kernel, angle_deg } => {
                format!("kernel={kernel};angle={angle_deg:.6}")
            }
            AugStyle::GaussianNoise { std_dev } => format!("std={std_dev:.6}"),
            AugStyle::SaltPepper { fraction } => format!("fraction={fraction:.6}"),
            AugStyle::HueShift { degrees } => format!("degrees={degrees:.6}"),
            AugStyle::BrightnessShift { delta } => format!("delta={delta:.6}"),
            AugStyle::ContrastShift { factor } => format!("factor={factor:.6}"),
            AugStyle::FogOverlay { density } => format!("density={density:.6}"),
            AugStyle::RandomErase { region } => format!(
                "x1={:.0};y1={:.0};x2={:.0};y2={:.0}",
                region.x_min, region.y_min, region.x_max, region.y_max
            ),
            AugStyle::Translate { dx, dy } => format!("dx={dx};dy={dy}"),
        }
    }

    /// Draws a style uniformly from the ten kinds, then its parameters.
    pub fn sample(rng: &mut impl Rng, frame: ImageDims, cfg: &PlanConfig) -> Self {
        let kind = StyleKind::ALL[rng.random_range(0..StyleKind::ALL.len())];
        let w = f64::from(frame.width());
        let h = f64::from(frame.height());
        match kind {
            StyleKind::GaussianBlur => AugStyle::GaussianBlur {
                sigma: rng.random_range(0.5..3.0),
            },
            StyleKind::MotionBlur => AugStyle::MotionBlur {
                kernel: 2 * rng.random_range(1..5u32) + 1,
                angle_deg: rng.random_range(0.0..360.0),
            },
            StyleKind::GaussianNoise => AugStyle::GaussianNoise {
                std_dev: rng.random_range(0.01..0.1),
            },
            StyleKind::SaltPepper => AugStyle::SaltPepper {
                fraction: rng.random_range(0.005..0.05),
            },
            StyleKind::HueShift => AugStyle::HueShift {
                degrees: rng.random_range(-30.0..30.0),
            },
            StyleKind::BrightnessShift => AugStyle::BrightnessShift {
                delta: rng.random_range(-0.3..0.3),
            },
            StyleKind::ContrastShift => AugStyle::ContrastShift {
                factor: rng.random_range(0.6..1.4),
            },
            StyleKind::FogOverlay => AugStyle::FogOverlay {
                density: rng.random_range(0.1..0.5),
            },
            StyleKind::RandomErase => {
                let ew = libm::round(w * rng.random_range(cfg.erase_min_frac..=cfg.erase_max_frac))
                    .max(1.0);
                let eh = libm::round(h * rng.random_range(cfg.erase_min_frac..=cfg.erase_max_frac))
                    .max(1.0);
                let x = libm::floor(rng.random_range(0.0..=(w - ew).max(0.0)));
                let y = libm::floor(rng.random_range(0.0..=(h - eh).max(0.0)));
                AugStyle::RandomErase {
                    region: BoundingBox::from_points(x, y, x + ew, y + eh),
                }
            }
            StyleKind::Translate => {
                let mx = libm::floor(w * cfg.max_translate_frac) as i32;
                let my = libm::floor(h * cfg.max_translate_frac) as i32;
                AugStyle::Translate {
                    dx: rng.random_range(-mx..=mx),
                    dy: rng.random_range(-my..=my),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanConfig {
    /// A geometry-affected box survives iff its remaining area divided by
    /// its original area is at least this.
    pub retention: f64,
    pub max_translate_frac: f64,
    pub erase_min_frac: f64,
    pub erase_max_frac: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            retention: 0.3,
            max_translate_frac: 0.1,
            erase_min_frac: 0.05,
            erase_max_frac: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AugmentError {
    /// Only the training split is ever augmented.
    NotTrainSplit(Split),
    EmptySplit,
    Geometry {
        image_id: String,
        source: GeometryError,
    },
}

impl fmt::Display for AugmentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AugmentError::NotTrainSplit(s) => write!(
                f,
                "refusing to augment the {s} split; only train is augmented"
            ),
            AugmentError::EmptySplit => f.write_str("training split is empty"),
            AugmentError::Geometry { image_id, source } => write!(f, "image {image_id}: {source}"),
        }
    }
}

impl core::error::Error for AugmentError {}

#[derive(Debug, Clone, PartialEq)]
pub struct AugPlanEntry<C> {
    pub output_id: String,
    pub source_id: String,
    pub quarter_turns: u8,
    /// 0 for the plain rotated image, 1..=10 for derivatives.
    pub derivative: u8,
    pub style: Option<AugStyle>,
    pub seed: u64,
    pub dims: ImageDims,
    pub annotations: Vec<Annotation<C>>,
    /// Annotations removed by the retention rule.
    pub dropped: usize,
}

impl<C> AugPlanEntry<C> {
    pub fn style_id(&self) -> &'static str {
        self.style.map_or("orig", |s| s.kind().id())
    }
}

/// `{source}_r{degrees}_aorig` for the plain rotation,
/// `{source}_r{degrees}_a{style}_{derivative}` otherwise.
pub fn output_id(
    source: &str,
    quarter_turns: u8,
    derivative: u8,
    style: Option<StyleKind>,
) -> String {
    let degrees = 90 * u32::from(quarter_turns);
    match style {
        None => format!("{source}_r{degrees}_aorig"),
        Some(kind) => format!("{source}_r{degrees}_a{}_{derivative}", kind.id()),
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-entry seed: FNV-1a over (master seed, source id, rotation, derivative)
/// finished with a splitmix64 mix. Independent of entry order.
pub fn entry_seed(master_seed: u64, source_id: &str, quarter_turns: u8, derivative: u8) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &master_seed.to_le_bytes());
    h = fnv1a(h, source_id.as_bytes());
    h = fnv1a(h, &[0xff, quarter_turns, derivative]);
    splitmix64(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transformed<C> {
    pub annotations: Vec<Annotation<C>>,
    pub dropped: usize,
}

/// Rotates every annotation, then applies the style's box transform.
pub fn transform_annotations<C: Copy>(
    annotations: &[Annotation<C>],
    source_dims: ImageDims,
    quarter_turns: u8,
    style: Option<&AugStyle>,
    retention: f64,
) -> Result<Transformed<C>, GeometryError> {
    let frame = source_dims.rotated(quarter_turns);
    let mut kept = Vec::with_capacity(annotations.len());
    let mut dropped = 0;
    for a in annotations {
        let (rotated, _) = rotate_box(&a.bbox, quarter_turns, source_dims)?;
        match style_box(&rotated, style, frame, retention) {
            Some(bbox) => kept.push(Annotation {
                class: a.class,
                bbox,
            }),
            None => dropped += 1,
        }
    }
    Ok(Transformed {
        annotations: kept,
        dropped,
    })
}

fn style_box(
    b: &BoundingBox,
    style: Option<&AugStyle>,
    frame: ImageDims,
    retention: f64,
) -> Option<BoundingBox> {
    let area = b.area();
    let survives = |remaining: f64| remaining > 0.0 && remaining >= retention * area;
    match style {
        Some(AugStyle::Translate { dx, dy }) => {
            let moved = b.translate(f64::from(*dx), f64::from(*dy)).clip(frame);
            survives(moved.area()).then_some(moved)
        }
        Some(AugStyle::RandomErase { region }) => {
            let hidden = b.intersection(region).map_or(0.0, |i| i.area());
            survives(area - hidden).then_some(*b)
        }
        _ => Some(*b),
    }
}

/// All 44 entries for one source image, in generation order.
pub fn plan_image<C: Copy>(
    image: &LabeledImage<C>,
    master_seed: u64,
    cfg: &PlanConfig,
) -> Result<Vec<AugPlanEntry<C>>, AugmentError> {
    let geometry_err = |source| AugmentError::Geometry {
        image_id: image.image_id.clone(),
        source,
    };
    let mut entries = Vec::with_capacity(ENTRIES_PER_IMAGE);
    for k in 0..ROTATIONS {
        let frame = image.dims.rotated(k);
        for d in 0..=DERIVATIVES_PER_ROTATION {
            let seed = entry_seed(master_seed, &image.image_id, k, d);
            let style =
                (d > 0).then(|| AugStyle::sample(&mut ChaCha8Rng::seed_from_u64(seed), frame, cfg));
            let t = transform_annotations(
                &image.annotations,
                image.dims,
                k,
                style.as_ref(),
                cfg.retention,
            )
            .map_err(geometry_err)?;
            entries.push(AugPlanEntry {
                output_id: output_id(&image.image_id, k, d, style.map(|s| s.kind())),
                source_id: image.image_id.clone(),
                quarter_turns: k,
                derivative: d,
                style,
                seed,
                dims: frame,
                annotations: t.annotations,
                dropped: t.dropped,
            });
        }
    }
    Ok(entries)
}

/// Plans the whole training split, sorted by output id.
pub fn plan_expansion<C: Copy>(
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
    let mut plan = Vec::with_capacity(train.len() * ENTRIES_PER_IMAGE);
    for image in train {
        plan.extend(plan_image(image, master_seed, cfg)?);
    }
    sort_plan(&mut plan);
    Ok(plan)
}

pub fn sort_plan<C>(plan: &mut [AugPlanEntry<C>]) {
    plan.sort_by(|a, b| a.output_id.cmp(&b.output_id));
}
