//! Browser demo: generate a layered scene, sweep a threshold plane through
//! one instance's sem-dist map, and compare two instances' depth order.
//!
//! Images are returned as RGBA bytes ready for `ImageData`.

use wasm_bindgen::prelude::*;

use semdist::codec::{analyze_order, encode_semdist, relative_order, threshold_plane};
use semdist::compositor::{color_of, generate, render, GenConfig};
use semdist::{ConfidencePolicy, InstanceId, LayerStackScene, SemDistMap};

const BACKGROUND: [u8; 4] = [24, 24, 28, 255];
const A_CLOSER: [u8; 4] = [240, 150, 40, 255];
const B_CLOSER: [u8; 4] = [60, 130, 230, 255];

#[wasm_bindgen]
pub struct Demo {
    scene: LayerStackScene,
    maps: Vec<(InstanceId, SemDistMap)>,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(
        seed: u64,
        size: u32,
        min_objects: u32,
        max_objects: u32,
        max_levels: u32,
    ) -> Result<Demo, String> {
        let config = GenConfig {
            seed,
            width: size as usize,
            height: size as usize,
            objects: (min_objects as usize, max_objects as usize),
            max_levels: max_levels as usize,
            ..GenConfig::default()
        };
        let scene = generate(&config).map_err(|e| e.to_string())?;
        let policy = ConfidencePolicy::default();
        let mut ids: Vec<_> = scene.ids().collect();
        ids.sort_unstable();
        let maps = ids
            .into_iter()
            .map(|id| Ok((id, encode_semdist(&scene, id, &policy)?)))
            .collect::<semdist::Result<_>>()
            .map_err(|e| e.to_string())?;
        Ok(Demo { scene, maps })
    }

    pub fn width(&self) -> u32 {
        self.scene.width() as u32
    }

    pub fn height(&self) -> u32 {
        self.scene.height() as u32
    }

    pub fn max_depth(&self) -> u32 {
        self.scene.max_depth() as u32
    }

    pub fn instance_ids(&self) -> Vec<u32> {
        self.maps.iter().map(|(id, _)| *id).collect()
    }

    pub fn scene_rgba(&self) -> Vec<u8> {
        render(&self.scene)
            .pixels
            .iter()
            .zip(self.scene.stacks())
            .flat_map(|(&[r, g, b], stack)| if stack.is_empty() { BACKGROUND } else { [r, g, b, 255] })
            .collect()
    }

    /// Pixels of `id` with `M >= plane` in the instance colour, the rest of
    /// its amodal mask dimmed. Lowering the plane past `-k` uncovers the parts
    /// hidden behind `k + 1` objects.
    pub fn plane_rgba(&self, id: InstanceId, plane: f32) -> Result<Vec<u8>, String> {
        let map = self.map(id)?;
        let above = threshold_plane(map, plane);
        let [r, g, b] = color_of(id);
        Ok(map
            .values()
            .iter()
            .zip(above.bits())
            .flat_map(|(&m, &hit)| match (m != 0.0, hit) {
                (_, true) => [r, g, b, 255],
                (true, false) => [r / 4 + 40, g / 4 + 40, b / 4 + 40, 255],
                (false, false) => BACKGROUND,
            })
            .collect())
    }

    /// Pixel-wise order of `a` against `b`: orange where `a` is closer, blue
    /// where `b` is.
    pub fn order_rgba(&self, a: InstanceId, b: InstanceId, c: f64) -> Result<Vec<u8>, String> {
        let r = relative_order(self.map(a)?, self.map(b)?, c).map_err(|e| e.to_string())?;
        let base = self.scene_rgba();
        Ok(r.iter()
            .zip(base.chunks_exact(4))
            .flat_map(|(&v, px)| match v.signum() {
                1 => A_CLOSER,
                -1 => B_CLOSER,
                _ => [px[0] / 3, px[1] / 3, px[2] / 3, 255],
            })
            .collect())
    }

    /// One-line verdict, e.g. `A_in_front, overlap 120 px, regions +100 -20`.
    pub fn order_summary(&self, a: InstanceId, b: InstanceId, c: f64) -> Result<String, String> {
        let analysis = analyze_order(self.map(a)?, self.map(b)?, c).map_err(|e| e.to_string())?;
        let regions: Vec<String> = analysis
            .regions
            .iter()
            .map(|r| format!("{}{}", if r.sign > 0 { '+' } else { '-' }, r.area))
            .collect();
        let mut line = format!("{}, overlap {} px", analysis.order, analysis.overlap_area);
        if !regions.is_empty() {
            line += &format!(", regions {}", regions.join(" "));
        }
        Ok(line)
    }
}

impl Demo {
    fn map(&self, id: InstanceId) -> Result<&SemDistMap, String> {
        self.maps.iter().find(|(i, _)| *i == id).map(|(_, m)| m).ok_or_else(|| format!("no instance {id}"))
    }
}
