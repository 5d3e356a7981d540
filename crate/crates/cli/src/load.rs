use std::path::{Path, PathBuf};

use semdist::codec::encode_semdist;
use semdist::compositor::annotations_from_scene;
use semdist::io::{read_annotations, read_scene, read_semdist, AnnotationSet};
use semdist::metrics::{match_maps_to_gt, EvalImage, OrderInput};
use semdist::{ConfidencePolicy, InstanceId, LayerStackScene, SemDistMap};

use crate::{in_file, read_bytes, read_text, CliResult, Failure};

pub enum Document {
    Scene(LayerStackScene),
    /// Annotations plus the directory their sem-dist paths are relative to.
    Annotations(AnnotationSet, PathBuf),
}

/// Reads a scene or an annotation file; scenes are recognised by their
/// `stacks` key.
pub fn load_document(path: &Path) -> CliResult<Document> {
    let text = read_text(path)?;
    let is_scene = serde_json::from_str::<serde_json::Value>(&text)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?
        .get("stacks")
        .is_some();
    if is_scene {
        Ok(Document::Scene(in_file(path, read_scene(&text))?))
    } else {
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Document::Annotations(in_file(path, read_annotations(&text))?, base))
    }
}

pub fn load_scene(path: &Path) -> CliResult<LayerStackScene> {
    in_file(path, read_scene(&read_text(path)?))
}

fn maps_of(doc: &Document, confidence: f32) -> CliResult<Vec<(InstanceId, SemDistMap)>> {
    match doc {
        Document::Scene(scene) => {
            let policy = ConfidencePolicy::constant(confidence)?;
            let mut ids: Vec<_> = scene.ids().collect();
            ids.sort_unstable();
            Ok(ids
                .into_iter()
                .map(|id| Ok((id, encode_semdist(scene, id, &policy)?)))
                .collect::<semdist::Result<_>>()?)
        }
        Document::Annotations(set, base) => set
            .semdist_refs
            .iter()
            .map(|(id, rel)| {
                let path = base.join(rel);
                Ok((*id, in_file(&path, read_semdist(&read_bytes(&path)?))?))
            })
            .collect(),
    }
}

/// Builds one evaluation image. Depth order is scored only when the ground
/// truth is a scene and the prediction carries sem-dist maps.
pub fn eval_image(name: &str, gt: &Path, pred: &Path, confidence: f32, c: f64) -> CliResult<EvalImage> {
    let gt_doc = load_document(gt)?;
    let pred_doc = load_document(pred)?;
    let gt_annotations = match &gt_doc {
        Document::Scene(scene) => annotations_from_scene(scene)?,
        Document::Annotations(set, _) => set.annotations.clone(),
    };
    let pred_annotations = match &pred_doc {
        Document::Scene(scene) => annotations_from_scene(scene)?,
        Document::Annotations(set, _) => set.annotations.clone(),
    };
    let pred_maps = maps_of(&pred_doc, confidence)?;
    let order = match gt_doc {
        Document::Scene(scene) if !pred_maps.is_empty() => {
            let maps: Vec<SemDistMap> = pred_maps.into_iter().map(|(_, m)| m).collect();
            let pred_maps = match_maps_to_gt(&scene, &maps, c)?;
            Some(OrderInput { scene, pred_maps })
        }
        _ => None,
    };
    Ok(EvalImage { name: name.to_owned(), gt: gt_annotations, pred: pred_annotations, order })
}
