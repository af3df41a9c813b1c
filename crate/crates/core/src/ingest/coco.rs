use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{from_json_bytes, IngestError};
use crate::dataset::{BoundingBox, CategorySet, Dataset, ImageRecord, Instance, Split};

#[derive(Debug, Deserialize, Serialize)]
struct CocoDocument {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Debug, Deserialize, Serialize)]
struct CocoImage {
    id: u64,
    width: u32,
    height: u32,
}

#[derive(Debug, Deserialize, Serialize)]
struct CocoAnnotation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<u64>,
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
}

#[derive(Debug, Deserialize, Serialize)]
struct CocoCategory {
    id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
}

/// An annotation whose box was dropped at ingest (`w <= 0`, `h <= 0`,
/// negative corner or non-finite coordinates). Its category still counts as
/// present in the image label vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegenerateAnnotation {
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationStats {
    pub dropped_boxes: usize,
    pub dropped: Vec<DegenerateAnnotation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedAnnotations {
    pub dataset: Dataset,
    pub stats: AnnotationStats,
}

fn cmp_instance(a: &Instance, b: &Instance) -> Ordering {
    let key = |i: &Instance| [i.bbox.x(), i.bbox.y(), i.bbox.w(), i.bbox.h()];
    a.category.cmp(&b.category).then_with(|| {
        key(a).iter().zip(key(b).iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
    })
}

fn cmp_degenerate(a: &DegenerateAnnotation, b: &DegenerateAnnotation) -> Ordering {
    (a.image_id, a.category_id).cmp(&(b.image_id, b.category_id)).then_with(|| {
        a.bbox.iter().zip(b.bbox.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
    })
}

/// Parses a COCO-style instances document.
///
/// Categories get dense indices in ascending external-id order. Image order
/// follows the `images` array; instances within an image are sorted, so the
/// result does not depend on the order of the `annotations` array.
pub fn parse_annotations(bytes: &[u8], split: Split) -> Result<ParsedAnnotations, IngestError> {
    let doc: CocoDocument = from_json_bytes(bytes)?;

    let mut cats: Vec<&CocoCategory> = doc.categories.iter().collect();
    cats.sort_by_key(|c| c.id);
    if let Some(w) = cats.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(IngestError::Integrity(format!("duplicate category id {}", w[0].id)));
    }
    let categories = CategorySet::new(cats.iter().map(|c| c.id).collect(), cats.iter().map(|c| c.name.clone()).collect())
        .map_err(|e| IngestError::Integrity(e.to_string()))?;
    let num_labels = categories.len();

    let mut slot: HashMap<u64, usize> = HashMap::with_capacity(doc.images.len());
    for (k, img) in doc.images.iter().enumerate() {
        if slot.insert(img.id, k).is_some() {
            return Err(IngestError::Integrity(format!("duplicate image id {}", img.id)));
        }
    }

    let mut labels = vec![vec![false; num_labels]; doc.images.len()];
    let mut instances: Vec<Vec<Instance>> = vec![Vec::new(); doc.images.len()];
    let mut stats = AnnotationStats::default();

    for (k, ann) in doc.annotations.iter().enumerate() {
        let Some(&img) = slot.get(&ann.image_id) else {
            return Err(IngestError::Integrity(format!(
                "annotations[{k}] references unknown image id {}",
                ann.image_id
            )));
        };
        let Some(cat) = categories.index_of(ann.category_id) else {
            return Err(IngestError::Integrity(format!(
                "annotations[{k}] references unknown category id {}",
                ann.category_id
            )));
        };
        labels[img][cat] = true;
        let [x, y, w, h] = ann.bbox;
        match BoundingBox::new(x, y, w, h) {
            Ok(bbox) => instances[img].push(Instance { category: cat, bbox }),
            Err(_) => {
                stats.dropped_boxes += 1;
                stats.dropped.push(DegenerateAnnotation {
                    image_id: ann.image_id,
                    category_id: ann.category_id,
                    bbox: ann.bbox,
                });
            }
        }
    }
    if stats.dropped_boxes > 0 {
        log::warn!("dropped {} degenerate bounding boxes", stats.dropped_boxes);
    }
    stats.dropped.sort_by(cmp_degenerate);

    let mut images = Vec::with_capacity(doc.images.len());
    for ((img, labels), mut inst) in doc.images.iter().zip(labels).zip(instances) {
        inst.sort_by(cmp_instance);
        let record = ImageRecord::new(img.id, img.width, img.height, labels, inst)
            .map_err(|e| IngestError::Integrity(e.to_string()))?;
        images.push(record);
    }
    let dataset = Dataset::new(categories, images, split)?;
    Ok(ParsedAnnotations { dataset, stats })
}

/// Serializes `dataset` as a COCO instances document that
/// [`parse_annotations`] reads back into an equal dataset.
///
/// A positive label without instances can only be expressed through a
/// dropped box, so such labels must be covered by `degenerate`.
pub fn write_annotations(dataset: &Dataset, degenerate: &[DegenerateAnnotation]) -> Vec<u8> {
    let cats = dataset.categories();
    let categories = (0..cats.len())
        .map(|k| CocoCategory { id: cats.external(k), name: cats.name(k).map(str::to_string) })
        .collect();
    let images = dataset
        .images()
        .iter()
        .map(|img| CocoImage { id: img.image_id(), width: img.width(), height: img.height() })
        .collect();
    let mut annotations = Vec::new();
    for img in dataset.images() {
        for inst in img.instances() {
            let b = inst.bbox;
            annotations.push(CocoAnnotation {
                id: None,
                image_id: img.image_id(),
                category_id: cats.external(inst.category),
                bbox: [b.x(), b.y(), b.w(), b.h()],
            });
        }
    }
    for d in degenerate {
        annotations.push(CocoAnnotation { id: None, image_id: d.image_id, category_id: d.category_id, bbox: d.bbox });
    }
    for (k, a) in annotations.iter_mut().enumerate() {
        a.id = Some(k as u64 + 1);
    }
    let doc = CocoDocument { images, annotations, categories };
    let mut out = serde_json::to_vec_pretty(&doc).expect("COCO document serializes");
    out.push(b'\n');
    out
}
