//! Bee taxonomy, dataset variants, histograms and the consistency audit.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::geometry::{BoundingBox, ImageDims};

/// The six annotated classes. Discriminants are the stable 1-based ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BeeClass {
    WorkerNoPollen = 1,
    WorkerPollen = 2,
    Drone = 3,
    Queen = 4,
    InfectedBee = 5,
    VarroaMite = 6,
}

impl BeeClass {
    pub const ALL: [BeeClass; 6] = [
        BeeClass::WorkerNoPollen,
        BeeClass::WorkerPollen,
        BeeClass::Drone,
        BeeClass::Queen,
        BeeClass::InfectedBee,
        BeeClass::VarroaMite,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(usize::from(id).checked_sub(1)?).copied()
    }

    /// Annotation files number classes from 0.
    pub fn file_id(self) -> u8 {
        self.id() - 1
    }

    pub fn from_file_id(id: u8) -> Option<Self> {
        Self::from_id(id.checked_add(1)?)
    }
}

/// Output classes across all three variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VariantClass {
    Bees,
    VMite,
    Healthy,
    Infected,
}

/// Human-readable class names for tables and logs.
pub trait ClassLabel: Copy + Ord + fmt::Debug {
    fn label(&self) -> &'static str;
}

impl ClassLabel for BeeClass {
    fn label(&self) -> &'static str {
        match self {
            BeeClass::WorkerNoPollen => "Bee Worker (No Pollen)",
            BeeClass::WorkerPollen => "Bee Worker (Pollen)",
            BeeClass::Drone => "Bee Drone",
            BeeClass::Queen => "Bee Queen",
            BeeClass::InfectedBee => "Bee With V.-mites",
            BeeClass::VarroaMite => "V.-Mite",
        }
    }
}

impl ClassLabel for VariantClass {
    fn label(&self) -> &'static str {
        match self {
            VariantClass::Bees => "Bees",
            VariantClass::VMite => "V.-Mites",
            VariantClass::Healthy => "Healthy Bees",
            VariantClass::Infected => "Ill Bees",
        }
    }
}

/// One of the three label reductions of the six-class annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DatasetVariant {
    BeesAndMites,
    HealthyAndIll,
    MitesOnly,
}

impl DatasetVariant {
    pub const ALL: [DatasetVariant; 3] = [
        DatasetVariant::BeesAndMites,
        DatasetVariant::HealthyAndIll,
        DatasetVariant::MitesOnly,
    ];

    /// Class mapping table; `None` means the annotation is dropped.
    pub fn map(self, class: BeeClass) -> Option<VariantClass> {
        use BeeClass::*;
        match (self, class) {
            (DatasetVariant::BeesAndMites, VarroaMite) => Some(VariantClass::VMite),
            (DatasetVariant::BeesAndMites, _) => Some(VariantClass::Bees),
            (DatasetVariant::HealthyAndIll, WorkerNoPollen | WorkerPollen | Drone | Queen) => {
                Some(VariantClass::Healthy)
            }
            (DatasetVariant::HealthyAndIll, InfectedBee) => Some(VariantClass::Infected),
            (DatasetVariant::HealthyAndIll, VarroaMite) => None,
            (DatasetVariant::MitesOnly, VarroaMite) => Some(VariantClass::VMite),
            (DatasetVariant::MitesOnly, _) => None,
        }
    }

    /// Output classes in detector index order.
    pub fn classes(self) -> &'static [VariantClass] {
        match self {
            DatasetVariant::BeesAndMites => &[VariantClass::Bees, VariantClass::VMite],
            DatasetVariant::HealthyAndIll => &[VariantClass::Healthy, VariantClass::Infected],
            DatasetVariant::MitesOnly => &[VariantClass::VMite],
        }
    }

    /// 0-based detector/file index of an output class.
    pub fn class_index(self, class: VariantClass) -> Option<u32> {
        self.classes()
            .iter()
            .position(|&c| c == class)
            .map(|i| i as u32)
    }

    pub fn class_at(self, index: u32) -> Option<VariantClass> {
        self.classes().get(index as usize).copied()
    }

    /// Source classes that map onto `class`.
    pub fn constituents(self, class: VariantClass) -> impl Iterator<Item = BeeClass> {
        BeeClass::ALL
            .into_iter()
            .filter(move |&c| self.map(c) == Some(class))
    }

    pub fn name(self) -> &'static str {
        match self {
            DatasetVariant::BeesAndMites => "bees-mites",
            DatasetVariant::HealthyAndIll => "healthy-ill",
            DatasetVariant::MitesOnly => "mites-only",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == name)
    }

    pub fn title(self) -> &'static str {
        match self {
            DatasetVariant::BeesAndMites => "Bees and Varroa Mites Annotated Dataset",
            DatasetVariant::HealthyAndIll => "Healthy and Ill Bees Annotated Dataset",
            DatasetVariant::MitesOnly => "Varroa Mites Annotated Dataset",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annotation<C> {
    pub class: C,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage<C> {
    pub image_id: String,
    pub dims: ImageDims,
    pub annotations: Vec<Annotation<C>>,
}

/// Which label space a dataset's annotations live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Labeling {
    AllClasses,
    Variant(DatasetVariant),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset<C> {
    pub labeling: Labeling,
    pub train: Vec<LabeledImage<C>>,
    pub val: Vec<LabeledImage<C>>,
    pub test: Vec<LabeledImage<C>>,
}

impl<C> SplitDataset<C> {
    pub fn split(&self, split: Split) -> &[LabeledImage<C>] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, split: Split) -> &mut Vec<LabeledImage<C>> {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }

    pub fn image_count(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }
}

impl SplitDataset<BeeClass> {
    pub fn all_classes(
        train: Vec<LabeledImage<BeeClass>>,
        val: Vec<LabeledImage<BeeClass>>,
        test: Vec<LabeledImage<BeeClass>>,
    ) -> Self {
        Self {
            labeling: Labeling::AllClasses,
            train,
            val,
            test,
        }
    }
}

/// Remaps one image; dropped annotations disappear, the image stays.
pub fn remap_image(
    image: &LabeledImage<BeeClass>,
    variant: DatasetVariant,
) -> LabeledImage<VariantClass> {
    LabeledImage {
        image_id: image.image_id.clone(),
        dims: image.dims,
        annotations: image
            .annotations
            .iter()
            .filter_map(|a| {
                variant.map(a.class).map(|class| Annotation {
                    class,
                    bbox: a.bbox,
                })
            })
            .collect(),
    }
}

pub fn remap_images(
    images: &[LabeledImage<BeeClass>],
    variant: DatasetVariant,
) -> Vec<LabeledImage<VariantClass>> {
    images.iter().map(|img| remap_image(img, variant)).collect()
}

/// Applies a variant's class table to every split. Images left without
/// annotations are kept as negatives so per-split image counts never change.
pub fn remap(ds: &SplitDataset<BeeClass>, variant: DatasetVariant) -> SplitDataset<VariantClass> {
    SplitDataset {
        labeling: Labeling::Variant(variant),
        train: remap_images(&ds.train, variant),
        val: remap_images(&ds.val, variant),
        test: remap_images(&ds.test, variant),
    }
}

/// Instance counts per class plus the number of images counted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassHistogram<C: Ord> {
    pub counts: BTreeMap<C, usize>,
    pub images: usize,
}

impl<C: Ord + Copy> ClassHistogram<C> {
    pub fn new() -> Self {
        Self {
            counts: BTreeMap::new(),
            images: 0,
        }
    }

    pub fn get(&self, class: C) -> usize {
        self.counts.get(&class).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn add(&mut self, class: C, n: usize) {
        *self.counts.entry(class).or_insert(0) += n;
    }

    /// Element-wise sum, for totals across splits.
    pub fn merge(&mut self, other: &ClassHistogram<C>) {
        for (&c, &n) in &other.counts {
            self.add(c, n);
        }
        self.images += other.images;
    }
}

impl<C: Ord + Copy> Default for ClassHistogram<C> {
    fn default() -> Self {
        Self::new()
    }
}

pub fn histogram<C: Ord + Copy>(split: &[LabeledImage<C>]) -> ClassHistogram<C> {
    let mut hist = ClassHistogram::new();
    for image in split {
        for a in &image.annotations {
            hist.add(a.class, 1);
        }
    }
    hist.images = split.len();
    hist
}

/// Expected grand totals across all splits, per source class.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExpectedTotals {
    pub class_totals: BTreeMap<BeeClass, usize>,
    pub images: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    /// Structural problem with the data.
    Error,
    /// Disagreement with a reference table; surfaced, never fatal.
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AuditFinding {
    VariantCountMismatch {
        split: Split,
        variant: DatasetVariant,
        class: VariantClass,
        remapped: usize,
        expected: usize,
    },
    PartitionMismatch {
        split: Split,
        healthy: usize,
        infected: usize,
        bees: usize,
    },
    SplitOverlap {
        image_id: String,
        first: Split,
        second: Split,
    },
    DuplicateInSplit {
        image_id: String,
        split: Split,
    },
    BoxOutOfBounds {
        image_id: String,
        split: Split,
        index: usize,
    },
    DegenerateBox {
        image_id: String,
        split: Split,
        index: usize,
    },
    TotalMismatch {
        class: BeeClass,
        expected: usize,
        actual: usize,
    },
    ImageTotalMismatch {
        expected: usize,
        actual: usize,
    },
}

impl fmt::Display for AuditFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuditFinding::VariantCountMismatch {
                split,
                variant,
                class,
                remapped,
                expected,
            } => write!(
                f,
                "{split}/{}: {} remapped to {remapped}, constituents sum to {expected}",
                variant.name(),
                class.label()
            ),
            AuditFinding::PartitionMismatch {
                split,
                healthy,
                infected,
                bees,
            } => write!(
                f,
                "{split}: healthy {healthy} + infected {infected} != bees {bees}"
            ),
            AuditFinding::SplitOverlap {
                image_id,
                first,
                second,
            } => {
                write!(f, "image {image_id} appears in both {first} and {second}")
            }
            AuditFinding::DuplicateInSplit { image_id, split } => {
                write!(f, "image {image_id} appears more than once in {split}")
            }
            AuditFinding::BoxOutOfBounds {
                image_id,
                split,
                index,
            } => {
                write!(
                    f,
                    "{split}/{image_id}: annotation {index} lies outside the image"
                )
            }
            AuditFinding::DegenerateBox {
                image_id,
                split,
                index,
            } => {
                write!(f, "{split}/{image_id}: annotation {index} has zero area")
            }
            AuditFinding::TotalMismatch {
                class,
                expected,
                actual,
            } => {
                let diff = (*expected as i64 - *actual as i64).abs();
                write!(
                    f,
                    "{}: expected {expected} in total, splits sum to {actual} ({diff}-instance discrepancy)",
                    class.label()
                )
            }
            AuditFinding::ImageTotalMismatch { expected, actual } => {
                write!(f, "expected {expected} images, found {actual}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRule {
    pub name: &'static str,
    pub severity: Severity,
    pub findings: Vec<AuditFinding>,
}

impl AuditRule {
    pub fn passed(&self) -> bool {
        self.findings.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub rules: Vec<AuditRule>,
}

impl AuditReport {
    /// True unless an error-severity rule failed. Warnings do not count.
    pub fn passed(&self) -> bool {
        self.rules
            .iter()
            .all(|r| r.passed() || r.severity == Severity::Warning)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &AuditFinding> {
        self.rules
            .iter()
            .filter(|r| r.severity == Severity::Warning)
            .flat_map(|r| r.findings.iter())
    }

    pub fn errors(&self) -> impl Iterator<Item = &AuditFinding> {
        self.rules
            .iter()
            .filter(|r| r.severity == Severity::Error)
            .flat_map(|r| r.findings.iter())
    }
}

/// Cross-checks an all-classes dataset. Never fails; every problem becomes a
/// finding under the rule that caught it.
pub fn consistency_audit(
    ds: &SplitDataset<BeeClass>,
    expected: Option<&ExpectedTotals>,
) -> AuditReport {
    let mut rules = Vec::new();

    // (a) variant arithmetic
    let mut findings = Vec::new();
    for split in Split::ALL {
        let source = histogram(ds.split(split));
        let mut bees = 0;
        let mut healthy = 0;
        let mut infected = 0;
        for variant in DatasetVariant::ALL {
            let remapped = histogram(&remap_images(ds.split(split), variant));
            for &class in variant.classes() {
                let expected: usize = variant.constituents(class).map(|c| source.get(c)).sum();
                let got = remapped.get(class);
                if got != expected {
                    findings.push(AuditFinding::VariantCountMismatch {
                        split,
                        variant,
                        class,
                        remapped: got,
                        expected,
                    });
                }
                match class {
                    VariantClass::Bees => bees = got,
                    VariantClass::Healthy => healthy = got,
                    VariantClass::Infected => infected = got,
                    VariantClass::VMite => {}
                }
            }
        }
        if healthy + infected != bees {
            findings.push(AuditFinding::PartitionMismatch {
                split,
                healthy,
                infected,
                bees,
            });
        }
    }
    rules.push(AuditRule {
        name: "variant-arithmetic",
        severity: Severity::Error,
        findings,
    });

    // (b) disjoint splits, unique ids
    let mut findings = Vec::new();
    let mut seen: BTreeMap<&str, Split> = BTreeMap::new();
    for split in Split::ALL {
        let mut in_split = BTreeSet::new();
        for image in ds.split(split) {
            if !in_split.insert(image.image_id.as_str()) {
                findings.push(AuditFinding::DuplicateInSplit {
                    image_id: image.image_id.clone(),
                    split,
                });
                continue;
            }
            if let Some(&first) = seen.get(image.image_id.as_str()) {
                findings.push(AuditFinding::SplitOverlap {
                    image_id: image.image_id.clone(),
                    first,
                    second: split,
                });
            } else {
                seen.insert(&image.image_id, split);
            }
        }
    }
    rules.push(AuditRule {
        name: "split-disjointness",
        severity: Severity::Error,
        findings,
    });

    // (c) box bounds
    let mut findings = Vec::new();
    for split in Split::ALL {
        for image in ds.split(split) {
            for (index, a) in image.annotations.iter().enumerate() {
                if !a.bbox.is_within(image.dims) {
                    findings.push(AuditFinding::BoxOutOfBounds {
                        image_id: image.image_id.clone(),
                        split,
                        index,
                    });
                } else if a.bbox.area() <= 0.0 {
                    findings.push(AuditFinding::DegenerateBox {
                        image_id: image.image_id.clone(),
                        split,
                        index,
                    });
                }
            }
        }
    }
    rules.push(AuditRule {
        name: "box-bounds",
        severity: Severity::Error,
        findings,
    });

    // (d) reference totals
    if let Some(exp) = expected {
        let mut totals = ClassHistogram::new();
        for split in Split::ALL {
            totals.merge(&histogram(ds.split(split)));
        }
        let mut findings = Vec::new();
        for (&class, &want) in &exp.class_totals {
            let actual = totals.get(class);
            if actual != want {
                findings.push(AuditFinding::TotalMismatch {
                    class,
                    expected: want,
                    actual,
                });
            }
        }
        if let Some(want) = exp.images {
            if totals.images != want {
                findings.push(AuditFinding::ImageTotalMismatch {
                    expected: want,
                    actual: totals.images,
                });
            }
        }
        rules.push(AuditRule {
            name: "reference-totals",
            severity: Severity::Warning,
            findings,
        });
    }

    AuditReport { rules }
}
