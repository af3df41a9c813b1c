//! In-memory multi-label dataset model.
//!
//! Categories are addressed by dense indices `0..L` everywhere inside the
//! crate. External (COCO) category ids only appear at file boundaries and are
//! translated through [`CategorySet`].

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("category set is empty")]
    NoCategories,
    #[error("duplicate category id {0}")]
    DuplicateCategory(u64),
    #[error("category names length {names} does not match ids length {ids}")]
    NameCount { ids: usize, names: usize },
    #[error("invalid bounding box [{x}, {y}, {w}, {h}]")]
    InvalidBox { x: f64, y: f64, w: f64, h: f64 },
    #[error("image {image_id}: width and height must be positive")]
    EmptyImage { image_id: u64 },
    #[error("image {image_id}: label vector has length {got}, expected {expected}")]
    LabelLength { image_id: u64, got: usize, expected: usize },
    #[error("image {image_id}: instance references category {category} which is out of range")]
    CategoryOutOfRange { image_id: u64, category: usize },
    #[error("image {image_id}: instance of category {category} but its label is 0")]
    UnlabeledInstance { image_id: u64, category: usize },
    #[error("duplicate image id {0}")]
    DuplicateImage(u64),
    #[error("unknown split {0:?}")]
    UnknownSplit(String),
}

/// Bijection between external category ids and dense indices.
///
/// Dense index order is the order in which ids were supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct CategorySet {
    ids: Vec<u64>,
    names: Vec<Option<String>>,
    index: HashMap<u64, usize>,
}

impl CategorySet {
    pub fn new(ids: Vec<u64>, names: Vec<Option<String>>) -> Result<Self, DatasetError> {
        if ids.is_empty() {
            return Err(DatasetError::NoCategories);
        }
        if names.len() != ids.len() {
            return Err(DatasetError::NameCount { ids: ids.len(), names: names.len() });
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (k, &id) in ids.iter().enumerate() {
            if index.insert(id, k).is_some() {
                return Err(DatasetError::DuplicateCategory(id));
            }
        }
        Ok(Self { ids, names, index })
    }

    /// Unnamed categories with the given external ids.
    pub fn from_ids(ids: Vec<u64>) -> Result<Self, DatasetError> {
        let names = vec![None; ids.len()];
        Self::new(ids, names)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// External id of dense index `k`. Panics if `k >= len()`.
    pub fn external(&self, k: usize) -> u64 {
        self.ids[k]
    }

    pub fn index_of(&self, external_id: u64) -> Option<usize> {
        self.index.get(&external_id).copied()
    }

    pub fn name(&self, k: usize) -> Option<&str> {
        self.names.get(k).and_then(|n| n.as_deref())
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }
}

/// Axis-aligned box in pixels, `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, DatasetError> {
        let ok = [x, y, w, h].iter().all(|v| v.is_finite()) && w > 0.0 && h > 0.0 && x >= 0.0 && y >= 0.0;
        if !ok {
            return Err(DatasetError::InvalidBox { x, y, w, h });
        }
        Ok(Self { x, y, w, h })
    }

    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Inclusive on every edge.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        self.x <= px && px <= self.x + self.w && self.y <= py && py <= self.y + self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Instance {
    pub category: usize,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    image_id: u64,
    width: u32,
    height: u32,
    labels: Vec<bool>,
    instances: Vec<Instance>,
}

impl ImageRecord {
    pub fn new(
        image_id: u64,
        width: u32,
        height: u32,
        labels: Vec<bool>,
        instances: Vec<Instance>,
    ) -> Result<Self, DatasetError> {
        if width == 0 || height == 0 {
            return Err(DatasetError::EmptyImage { image_id });
        }
        for inst in &instances {
            match labels.get(inst.category) {
                None => return Err(DatasetError::CategoryOutOfRange { image_id, category: inst.category }),
                Some(false) => return Err(DatasetError::UnlabeledInstance { image_id, category: inst.category }),
                Some(true) => {}
            }
        }
        Ok(Self { image_id, width, height, labels, instances })
    }

    /// Builds an image whose label vector is exactly the set of instance
    /// categories plus `extra_positives`.
    pub fn from_instances(
        image_id: u64,
        width: u32,
        height: u32,
        num_labels: usize,
        instances: Vec<Instance>,
        extra_positives: &[usize],
    ) -> Result<Self, DatasetError> {
        let mut labels = vec![false; num_labels];
        for &c in instances.iter().map(|i| &i.category).chain(extra_positives) {
            match labels.get_mut(c) {
                Some(l) => *l = true,
                None => return Err(DatasetError::CategoryOutOfRange { image_id, category: c }),
            }
        }
        Self::new(image_id, width, height, labels, instances)
    }

    pub fn image_id(&self) -> u64 {
        self.image_id
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn labels(&self) -> &[bool] {
        &self.labels
    }
    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }
    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn center(&self) -> (f64, f64) {
        (f64::from(self.width) / 2.0, f64::from(self.height) / 2.0)
    }

    /// Dense indices with `labels[i] = 1`, strictly increasing.
    pub fn positives(&self) -> Vec<usize> {
        positives_of(self)
    }

    pub fn instances_of(&self, category: usize) -> impl Iterator<Item = &Instance> + '_ {
        self.instances.iter().filter(move |i| i.category == category)
    }
}

pub fn positives_of(image: &ImageRecord) -> Vec<usize> {
    image.labels.iter().enumerate().filter(|(_, &l)| l).map(|(i, _)| i).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Split {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(DatasetError::UnknownSplit(other.to_string())),
        }
    }
}

/// Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    categories: CategorySet,
    images: Vec<ImageRecord>,
    split: Split,
    by_id: HashMap<u64, usize>,
}

impl Dataset {
    pub fn new(categories: CategorySet, images: Vec<ImageRecord>, split: Split) -> Result<Self, DatasetError> {
        let mut by_id = HashMap::with_capacity(images.len());
        for (pos, img) in images.iter().enumerate() {
            if img.labels.len() != categories.len() {
                return Err(DatasetError::LabelLength {
                    image_id: img.image_id,
                    got: img.labels.len(),
                    expected: categories.len(),
                });
            }
            if by_id.insert(img.image_id, pos).is_some() {
                return Err(DatasetError::DuplicateImage(img.image_id));
            }
        }
        Ok(Self { categories, images, split, by_id })
    }

    pub fn categories(&self) -> &CategorySet {
        &self.categories
    }
    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }
    pub fn split(&self) -> Split {
        self.split
    }
    pub fn num_labels(&self) -> usize {
        self.categories.len()
    }

    pub fn image(&self, image_id: u64) -> Option<&ImageRecord> {
        self.by_id.get(&image_id).map(|&i| &self.images[i])
    }

    /// Same content, images in a different order.
    pub fn reordered(&self, order: &[usize]) -> Result<Self, DatasetError> {
        let images = order.iter().map(|&i| self.images[i].clone()).collect();
        Self::new(self.categories.clone(), images, self.split)
    }
}
