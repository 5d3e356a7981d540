use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::from_json;
use crate::types::{Instance, InstanceId, LayerStackScene, Violation};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    width: usize,
    height: usize,
    instances: Vec<Instance>,
    stacks: StacksDoc,
}

/// Either one list per pixel, or only the nonempty pixels keyed by row-major index.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum StacksDoc {
    Dense(Vec<Vec<InstanceId>>),
    Sparse(BTreeMap<String, Vec<InstanceId>>),
}

/// Compact JSON with sparse stacks. Output is a pure function of the scene.
pub fn write_scene(scene: &LayerStackScene) -> String {
    let sparse = scene
        .stacks()
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.is_empty())
        .map(|(i, s)| (i, s.clone()))
        .collect::<BTreeMap<usize, _>>()
        .into_iter()
        .map(|(i, s)| (i.to_string(), s))
        .collect();
    let doc = SceneDoc {
        width: scene.width(),
        height: scene.height(),
        instances: scene.instances().to_vec(),
        stacks: StacksDoc::Sparse(sparse),
    };
    serde_json::to_string(&doc).expect("scene serialization is infallible")
}

/// Parses a scene and checks every scene invariant.
pub fn read_scene(text: &str) -> Result<LayerStackScene> {
    let doc: SceneDoc = from_json(text)?;
    let n = doc
        .width
        .checked_mul(doc.height)
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::schema("width", "width and height must be positive"))?;
    let stacks = match doc.stacks {
        StacksDoc::Dense(stacks) => {
            if stacks.len() != n {
                return Err(Error::schema(
                    "stacks",
                    format!("expected {n} pixel stacks, got {}", stacks.len()),
                ));
            }
            stacks
        }
        StacksDoc::Sparse(map) => {
            let mut stacks = vec![Vec::new(); n];
            for (key, stack) in map {
                let index: usize = key
                    .parse()
                    .map_err(|_| Error::schema(format!("stacks.{key}"), "key must be a pixel index"))?;
                let slot = stacks.get_mut(index).ok_or_else(|| {
                    Error::schema(format!("stacks.{index}"), format!("pixel index out of range 0..{n}"))
                })?;
                *slot = stack;
            }
            stacks
        }
    };
    let scene = LayerStackScene::from_parts(doc.width, doc.height, doc.instances, stacks)?;
    if let Some(v) = scene.validate().first() {
        let path = match v {
            Violation::UnknownId { x, y, .. } | Violation::DuplicateInStack { x, y, .. } => {
                format!("stacks.{}", y * scene.width() + x)
            }
            Violation::ZeroId | Violation::DuplicateInstance { .. } => "instances".to_owned(),
        };
        return Err(Error::schema(path, v.to_string()));
    }
    Ok(scene)
}
