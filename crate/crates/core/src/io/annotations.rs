use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::from_json;
use crate::io::rle::{rle_decode, rle_encode, RleMask};
use crate::types::{InstanceAnnotation, InstanceId};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationDoc {
    width: usize,
    height: usize,
    annotations: Vec<AnnotationRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationRecord {
    id: InstanceId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<String>,
    score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    occlusion_rate: Option<f64>,
    amodal: RleMask,
    visible: RleMask,
    /// Path of an `SDM1` map for this instance, relative to the JSON file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    semdist: Option<String>,
}

/// Annotations of one image, as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotationSet {
    pub width: usize,
    pub height: usize,
    pub annotations: Vec<InstanceAnnotation>,
    /// `(id, relative path)` of attached sem-dist maps.
    pub semdist_refs: Vec<(InstanceId, String)>,
}

impl AnnotationSet {
    pub fn new(width: usize, height: usize, annotations: Vec<InstanceAnnotation>) -> Self {
        AnnotationSet { width, height, annotations, semdist_refs: Vec::new() }
    }
}

pub fn write_annotations(set: &AnnotationSet) -> String {
    let doc = AnnotationDoc {
        width: set.width,
        height: set.height,
        annotations: set
            .annotations
            .iter()
            .map(|a| AnnotationRecord {
                id: a.id,
                category: a.category.clone(),
                score: a.score,
                occlusion_rate: Some(a.occlusion_rate),
                amodal: rle_encode(&a.amodal),
                visible: rle_encode(&a.visible),
                semdist: set.semdist_refs.iter().find(|(id, _)| *id == a.id).map(|(_, p)| p.clone()),
            })
            .collect(),
    };
    serde_json::to_string(&doc).expect("annotation serialization is infallible")
}

/// Parses an annotation file. Occlusion rates are recomputed from the masks;
/// a stored rate that disagrees is a schema error.
pub fn read_annotations(text: &str) -> Result<AnnotationSet> {
    let doc: AnnotationDoc = from_json(text)?;
    let mut set = AnnotationSet::new(doc.width, doc.height, Vec::with_capacity(doc.annotations.len()));
    for (i, rec) in doc.annotations.into_iter().enumerate() {
        let path = |field: &str| format!("annotations[{i}].{field}");
        let amodal = rle_decode(&rec.amodal).map_err(|e| Error::schema(path("amodal"), e.to_string()))?;
        let visible = rle_decode(&rec.visible).map_err(|e| Error::schema(path("visible"), e.to_string()))?;
        if amodal.dims() != (doc.width, doc.height) {
            return Err(Error::schema(path("amodal"), "mask size differs from image size"));
        }
        let ann = InstanceAnnotation::new(rec.id, rec.category, amodal, visible, rec.score)
            .map_err(|e| Error::schema(format!("annotations[{i}]"), e.to_string()))?;
        if let Some(stored) = rec.occlusion_rate {
            if (stored - ann.occlusion_rate).abs() > 1e-9 {
                return Err(Error::schema(
                    path("occlusion_rate"),
                    format!("stored {stored} but masks give {}", ann.occlusion_rate),
                ));
            }
        }
        if let Some(p) = rec.semdist {
            set.semdist_refs.push((ann.id, p));
        }
        set.annotations.push(ann);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compositor::annotations_from_scene;
    use crate::types::fixtures::*;

    #[test]
    fn round_trip() {
        let mut set = AnnotationSet::new(3, 3, annotations_from_scene(&s0()).unwrap());
        set.semdist_refs.push((B, "instance_2.sdm".into()));
        let text = write_annotations(&set);
        assert_eq!(read_annotations(&text).unwrap(), set);
    }

    #[test]
    fn inconsistent_rate_rejected() {
        let set = AnnotationSet::new(3, 3, annotations_from_scene(&s0()).unwrap());
        let text = write_annotations(&set).replace("\"occlusion_rate\":0.5", "\"occlusion_rate\":0.1");
        match read_annotations(&text) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "annotations[1].occlusion_rate"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_rle_reports_path() {
        let text = r#"{"width":1,"height":1,"annotations":[{"id":1,"score":1.0,
            "amodal":{"size":[1,1],"counts":[0,2]},"visible":{"size":[1,1],"counts":[1]}}]}"#;
        match read_annotations(text) {
            Err(Error::Schema { path, .. }) => {
                assert!(path.starts_with("annotations[0]"), "{path}")
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
