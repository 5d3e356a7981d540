//! Importer for COCOA-style amodal annotations.
//!
//! Expected layout:
//!
//! ```json
//! {
//!   "images": [{"id": 1, "width": 640, "height": 480, "file_name": "..."}],
//!   "annotations": [{
//!     "image_id": 1,
//!     "regions": [{
//!       "segmentation": [x0, y0, x1, y1, ...],
//!       "name": "person",
//!       "visible_mask": {"size": [h, w], "counts": [...]},
//!       "invisible_mask": {"size": [h, w], "counts": [...]}
//!     }],
//!     "depth_constraint": "1-2,1-3"
//!   }]
//! }
//! ```
//!
//! Each region becomes an [`InstanceAnnotation`] whose id is its 1-based
//! position in `regions`; `depth_constraint` pairs `front-back` refer to the
//! same positions. Polygons are rasterized with an even-odd rule at pixel
//! centers. Only uncompressed RLE is understood.

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::io::rle::{rle_decode, RleMask};
use crate::types::{BinaryMask, InstanceAnnotation, InstanceId};

const KNOWN_REGION_KEYS: &[&str] =
    &["segmentation", "name", "visible_mask", "invisible_mask", "order", "area", "occlude_rate", "isStuff"];

const KNOWN_ANNOTATION_KEYS: &[&str] = &["id", "image_id", "regions", "depth_constraint", "size"];

#[derive(Clone, Debug, PartialEq)]
pub struct CocoaImage {
    pub image_id: i64,
    pub file_name: Option<String>,
    pub width: usize,
    pub height: usize,
    pub annotations: Vec<InstanceAnnotation>,
    /// `(front, back)` instance ids, verbatim from the object-level constraints.
    pub order_pairs: Vec<(InstanceId, InstanceId)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkippedRegion {
    pub path: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CocoaImport {
    pub images: Vec<CocoaImage>,
    /// Unrecognized fields that were ignored.
    pub warnings: usize,
    pub skipped: Vec<SkippedRegion>,
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| Error::schema(path, format!("missing field `{key}`")))
}

fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| Error::schema(path, "expected an object"))
}

fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| Error::schema(path, "expected an array"))
}

fn as_usize(v: &Value, path: &str) -> Result<usize> {
    v.as_u64()
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| Error::schema(path, "expected a nonnegative integer"))
}

pub fn import_cocoa(text: &str) -> Result<CocoaImport> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::schema("$", e.to_string()))?;
    let root = as_object(&doc, "$")?;
    let mut import = CocoaImport::default();

    let mut sizes = Vec::new();
    if let Some(images) = root.get("images") {
        for (i, img) in as_array(images, "images")?.iter().enumerate() {
            let path = format!("images[{i}]");
            let obj = as_object(img, &path)?;
            let id = field(obj, "id", &path)?
                .as_i64()
                .ok_or_else(|| Error::schema(format!("{path}.id"), "expected an integer"))?;
            let width = as_usize(field(obj, "width", &path)?, &format!("{path}.width"))?;
            let height = as_usize(field(obj, "height", &path)?, &format!("{path}.height"))?;
            if width == 0 || height == 0 {
                return Err(Error::schema(path, "image size must be positive"));
            }
            let name = obj.get("file_name").and_then(Value::as_str).map(str::to_owned);
            sizes.push((id, width, height, name));
        }
    }

    let annotations = match root.get("annotations") {
        Some(v) => as_array(v, "annotations")?.as_slice(),
        None => &[],
    };
    for (a, ann) in annotations.iter().enumerate() {
        let path = format!("annotations[{a}]");
        let obj = as_object(ann, &path)?;
        import.warnings += obj.keys().filter(|k| !KNOWN_ANNOTATION_KEYS.contains(&k.as_str())).count();
        let image_id = field(obj, "image_id", &path)?
            .as_i64()
            .ok_or_else(|| Error::schema(format!("{path}.image_id"), "expected an integer"))?;
        let (_, width, height, file_name) =
            sizes.iter().find(|(id, ..)| *id == image_id).cloned().ok_or_else(|| {
                Error::schema(format!("{path}.image_id"), format!("no image with id {image_id}"))
            })?;
        let mut image = CocoaImage {
            image_id,
            file_name,
            width,
            height,
            annotations: Vec::new(),
            order_pairs: Vec::new(),
        };
        let regions = match obj.get("regions") {
            Some(v) => as_array(v, &format!("{path}.regions"))?.as_slice(),
            None => &[],
        };
        for (r, region) in regions.iter().enumerate() {
            let rpath = format!("{path}.regions[{r}]");
            let robj = as_object(region, &rpath)?;
            import.warnings += robj.keys().filter(|k| !KNOWN_REGION_KEYS.contains(&k.as_str())).count();
            let id = r as InstanceId + 1;
            match import_region(robj, id, width, height) {
                Ok(ann) => image.annotations.push(ann),
                Err(reason) => import.skipped.push(SkippedRegion { path: rpath, reason }),
            }
        }
        if let Some(constraint) = obj.get("depth_constraint") {
            let cpath = format!("{path}.depth_constraint");
            let text = constraint.as_str().ok_or_else(|| Error::schema(&cpath, "expected a string"))?;
            image.order_pairs = parse_constraints(text).map_err(|m| Error::schema(&cpath, m))?;
        }
        import.images.push(image);
    }
    Ok(import)
}

fn parse_constraints(text: &str) -> std::result::Result<Vec<(InstanceId, InstanceId)>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let (front, back) =
                pair.split_once('-').ok_or_else(|| format!("pair {pair:?} is not `front-back`"))?;
            let parse =
                |s: &str| s.trim().parse::<InstanceId>().map_err(|_| format!("bad region index {s:?}"));
            Ok((parse(front)?, parse(back)?))
        })
        .collect()
}

fn import_region(
    obj: &Map<String, Value>,
    id: InstanceId,
    width: usize,
    height: usize,
) -> std::result::Result<InstanceAnnotation, String> {
    let seg = obj.get("segmentation").ok_or("missing segmentation")?;
    let amodal = match seg {
        Value::Object(_) => decode_rle_value(seg, width, height)?,
        Value::Array(items) if items.iter().all(Value::is_number) => {
            rasterize_polygons(&[seg], width, height)?
        }
        Value::Array(items) => rasterize_polygons(&items.iter().collect::<Vec<_>>(), width, height)?,
        _ => return Err("unsupported segmentation geometry".into()),
    };
    if amodal.is_empty() {
        return Err("segmentation covers no pixel centers".into());
    }
    let visible = if let Some(v) = obj.get("visible_mask") {
        decode_rle_value(v, width, height)?.intersection(&amodal).map_err(|e| e.to_string())?
    } else if let Some(v) = obj.get("invisible_mask") {
        amodal.difference(&decode_rle_value(v, width, height)?).map_err(|e| e.to_string())?
    } else {
        amodal.clone()
    };
    let category = obj.get("name").and_then(Value::as_str).map(str::to_owned);
    InstanceAnnotation::new(id, category, amodal, visible, 1.0).map_err(|e| e.to_string())
}

fn decode_rle_value(v: &Value, width: usize, height: usize) -> std::result::Result<BinaryMask, String> {
    if v.get("counts").is_some_and(Value::is_string) {
        return Err("compressed RLE is not supported".into());
    }
    let rle: RleMask = serde_json::from_value(v.clone()).map_err(|e| format!("bad RLE: {e}"))?;
    if (rle.width, rle.height) != (width, height) {
        return Err(format!("RLE size {}x{} differs from image {width}x{height}", rle.width, rle.height));
    }
    rle_decode(&rle).map_err(|e| e.to_string())
}

fn rasterize_polygons(
    polys: &[&Value],
    width: usize,
    height: usize,
) -> std::result::Result<BinaryMask, String> {
    let mut parsed = Vec::with_capacity(polys.len());
    for poly in polys {
        let coords = poly
            .as_array()
            .ok_or("polygon must be an array")?
            .iter()
            .map(|c| c.as_f64().ok_or("polygon coordinates must be numbers"))
            .collect::<std::result::Result<Vec<f64>, _>>()?;
        if coords.len() % 2 != 0 {
            return Err(format!("odd polygon coordinate count {}", coords.len()));
        }
        if coords.len() < 6 {
            return Err("polygon needs at least 3 vertices".into());
        }
        parsed.push(coords.chunks_exact(2).map(|p| (p[0], p[1])).collect::<Vec<_>>());
    }
    Ok(BinaryMask::from_fn(width, height, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        parsed.iter().any(|poly| even_odd(poly, px, py))
    }))
}

fn even_odd(poly: &[(f64, f64)], px: f64, py: f64) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_REGIONS: &str = r#"{
        "images": [{"id": 7, "width": 6, "height": 4, "file_name": "toy.jpg"}],
        "annotations": [{
            "id": 1, "image_id": 7,
            "regions": [
                {"segmentation": [0, 0, 4, 0, 4, 2, 0, 2], "name": "box", "order": 1},
                {"segmentation": [2, 1, 6, 1, 6, 4, 2, 4], "name": "slab", "order": 2,
                 "invisible_mask": {"size": [4, 6], "counts": [9, 1, 3, 1, 10]}}
            ],
            "depth_constraint": "1-2"
        }]
    }"#;

    #[test]
    fn two_regions() {
        let import = import_cocoa(TWO_REGIONS).unwrap();
        assert_eq!(import.images.len(), 1);
        assert_eq!(import.warnings, 0);
        let image = &import.images[0];
        assert_eq!((image.width, image.height), (6, 4));
        let [boxed, slab] = image.annotations.as_slice() else { panic!() };
        assert_eq!(boxed.amodal.area(), 8);
        assert_eq!(slab.amodal.area(), 12);
        // invisible pixels: (2,1) and (3,1) in column-major RLE
        assert_eq!(slab.visible.area(), 10);
        assert!(!slab.visible.get(2, 1) && !slab.visible.get(3, 1));
        assert!((slab.occlusion_rate - 2.0 / 12.0).abs() < 1e-12);
        assert_eq!(image.order_pairs, vec![(1, 2)]);
        assert_eq!(slab.category.as_deref(), Some("slab"));
    }

    #[test]
    fn zero_regions() {
        let doc = r#"{"images":[{"id":1,"width":2,"height":2}],"annotations":[{"image_id":1,"regions":[]}]}"#;
        let import = import_cocoa(doc).unwrap();
        assert!(import.images[0].annotations.is_empty());
        let empty = import_cocoa(r#"{"images":[],"annotations":[]}"#).unwrap();
        assert!(empty.images.is_empty());
    }

    #[test]
    fn malformed_polygon_is_skipped() {
        let doc = r#"{"images":[{"id":1,"width":4,"height":4}],"annotations":[{"image_id":1,"regions":[
            {"segmentation":[0,0,3,0,3],"extra":true},
            {"segmentation":[0,0,4,0,4,4,0,4]},
            {"segmentation":{"size":[4,4],"counts":"abc"}}
        ]}]}"#;
        let import = import_cocoa(doc).unwrap();
        assert_eq!(import.images[0].annotations.len(), 1);
        assert_eq!(import.images[0].annotations[0].id, 2);
        assert_eq!(import.skipped.len(), 2);
        assert!(import.skipped[0].reason.contains("odd"));
        assert!(import.skipped[1].reason.contains("compressed"));
        assert_eq!(import.warnings, 1);
    }

    #[test]
    fn structural_errors_have_paths() {
        let doc = r#"{"images":[{"id":1,"width":4,"height":4}],"annotations":[{"image_id":3,"regions":[]}]}"#;
        match import_cocoa(doc) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "annotations[0].image_id"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(import_cocoa("[").is_err());
        assert!(import_cocoa(r#"{"images":[{"id":1,"height":4}]}"#).is_err());
    }

    #[test]
    fn nested_polygons_union() {
        let doc = r#"{"images":[{"id":1,"width":4,"height":1}],"annotations":[{"image_id":1,"regions":[
            {"segmentation":[[0,0,1,0,1,1,0,1],[3,0,4,0,4,1,3,1]]}
        ]}]}"#;
        let import = import_cocoa(doc).unwrap();
        assert_eq!(import.images[0].annotations[0].amodal.bits(), &[true, false, false, true]);
    }
}
