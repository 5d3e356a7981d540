//! Seeded synthetic occlusion scenes, a flat-color renderer, and degradations
//! that turn ground truth into plausible predictions.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64`. Shape sampling uses only IEEE arithmetic (no
//! trigonometry), so a seed yields the same scene on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{frac, overlap_region, visibility_levels, SemDistMap};
use crate::error::{Error, Result};
use crate::metrics::{OcclusionStratum, PARTIAL_OCCLUSION_MAX};
use crate::types::{
    occlusion_rate_of, BinaryMask, Instance, InstanceAnnotation, InstanceId, LayerStackScene,
};

/// Placement attempts per object before generation gives up.
pub const MAX_ATTEMPTS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Rectangle,
    Ellipse,
    Triangle,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Rectangle, ShapeKind::Ellipse, ShapeKind::Triangle];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Rectangle => "rectangle",
            ShapeKind::Ellipse => "ellipse",
            ShapeKind::Triangle => "triangle",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Inclusive object count range.
    pub objects: (usize, usize),
    pub shapes: Vec<ShapeKind>,
    /// Shape extent as a fraction of the shorter image side, inclusive range.
    pub size_range: (f64, f64),
    /// Maximum stack depth at any pixel.
    pub max_levels: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            width: 64,
            height: 64,
            objects: (3, 6),
            shapes: ShapeKind::ALL.to_vec(),
            size_range: (0.2, 0.6),
            max_levels: 4,
        }
    }
}

impl GenConfig {
    pub fn with_seed(seed: u64) -> Self {
        GenConfig { seed, ..GenConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let (min, max) = self.objects;
        if min < 1 || min > max {
            return Err(Error::invalid(
                "objects",
                format!("range {min}..{max} must satisfy 1 <= min <= max"),
            ));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("dimensions", "width and height must be at least 1"));
        }
        if self.shapes.is_empty() {
            return Err(Error::invalid("shapes", "at least one shape kind is required"));
        }
        let (lo, hi) = self.size_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::invalid(
                "size_range",
                format!("({lo}, {hi}) must lie in (0, 1] with lo <= hi"),
            ));
        }
        if self.max_levels < 1 {
            return Err(Error::invalid("max_levels", "must be at least 1"));
        }
        Ok(())
    }
}

/// Builds a scene back to front: every new shape lands in front of the
/// previous ones. A candidate is rejected when it would push a pixel past
/// `max_levels` or hide an earlier instance completely.
pub fn generate(config: &GenConfig) -> Result<LayerStackScene> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let count = rng.random_range(config.objects.0..=config.objects.1);
    let mut scene = LayerStackScene::new(config.width, config.height)?;
    for object in 0..count {
        let id = object as InstanceId + 1;
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            let kind = config.shapes[rng.random_range(0..config.shapes.len())];
            let mask = sample_shape(kind, config, &mut rng);
            if mask.is_empty() || !fits(&scene, &mask, config.max_levels) {
                continue;
            }
            scene.push_instance(Instance::new(id, Some(kind.name())))?;
            scene.place_front(id, &mask)?;
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::GenerationFailed { object, attempts: MAX_ATTEMPTS });
        }
    }
    Ok(scene)
}

fn fits(scene: &LayerStackScene, mask: &BinaryMask, max_levels: usize) -> bool {
    let stacks = scene.stacks();
    let too_deep =
        mask.bits().iter().zip(stacks).any(|(&covered, stack)| covered && stack.len() >= max_levels);
    if too_deep {
        return false;
    }
    scene.ids().all(|id| {
        stacks.iter().zip(mask.bits()).any(|(stack, &covered)| !covered && stack.first() == Some(&id))
    })
}

fn sample_shape(kind: ShapeKind, config: &GenConfig, rng: &mut ChaCha8Rng) -> BinaryMask {
    let (w, h) = (config.width, config.height);
    let side = w.min(h) as f64;
    let (lo, hi) = config.size_range;
    let extent_x = rng.random_range(lo..=hi) * side;
    let extent_y = rng.random_range(lo..=hi) * side;
    let cx = rng.random_range(0.0..w as f64);
    let cy = rng.random_range(0.0..h as f64);
    let (rx, ry) = (extent_x / 2.0, extent_y / 2.0);
    match kind {
        ShapeKind::Rectangle => BinaryMask::from_fn(w, h, |x, y| {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            (px - cx).abs() <= rx && (py - cy).abs() <= ry
        }),
        ShapeKind::Ellipse => BinaryMask::from_fn(w, h, |x, y| {
            let dx = (x as f64 + 0.5 - cx) / rx;
            let dy = (y as f64 + 0.5 - cy) / ry;
            dx * dx + dy * dy <= 1.0
        }),
        ShapeKind::Triangle => {
            let mut vertex = || (cx + rng.random_range(-rx..=rx), cy + rng.random_range(-ry..=ry));
            let tri = [vertex(), vertex(), vertex()];
            BinaryMask::from_fn(w, h, |x, y| in_triangle(tri, x as f64 + 0.5, y as f64 + 0.5))
        }
    }
}

fn in_triangle(t: [(f64, f64); 3], px: f64, py: f64) -> bool {
    let cross = |(ax, ay): (f64, f64), (bx, by): (f64, f64), (qx, qy): (f64, f64)| {
        (bx - ax) * (qy - ay) - (by - ay) * (qx - ax)
    };
    if cross(t[0], t[1], t[2]) == 0.0 {
        return false;
    }
    let p = (px, py);
    let d = [cross(t[0], t[1], p), cross(t[1], t[2], p), cross(t[2], t[0], p)];
    d.iter().all(|&v| v >= 0.0) || d.iter().all(|&v| v <= 0.0)
}

/// Packed RGB image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Flat color for an instance id. Channels lie in 64..=255, so no instance is black.
pub fn color_of(id: InstanceId) -> [u8; 3] {
    let h = splitmix64(id as u64).to_le_bytes();
    [h[0], h[1], h[2]].map(|b| 64 + (b as u16 * 191 / 255) as u8)
}

/// Each pixel takes the color of its front-most instance; empty stacks are black.
pub fn render(scene: &LayerStackScene) -> RgbImage {
    RgbImage {
        width: scene.width(),
        height: scene.height(),
        pixels: scene.stacks().iter().map(|s| s.first().map_or([0, 0, 0], |&id| color_of(id))).collect(),
    }
}

/// `1 - visible / amodal` for one instance.
pub fn occlusion_rate(scene: &LayerStackScene, id: InstanceId) -> Result<f64> {
    let amodal = scene.amodal_mask_of(id)?;
    if amodal.is_empty() {
        return Err(Error::ZeroArea(id));
    }
    let visible = scene.visible_mask_of(id)?;
    Ok(occlusion_rate_of(&amodal, &visible))
}

/// Ground-truth annotations (score 1) for every instance with a nonempty mask.
pub fn annotations_from_scene(scene: &LayerStackScene) -> Result<Vec<InstanceAnnotation>> {
    let mut out = Vec::new();
    for inst in scene.instances() {
        let amodal = scene.amodal_mask_of(inst.id)?;
        if amodal.is_empty() {
            continue;
        }
        let visible = scene.visible_mask_of(inst.id)?;
        out.push(InstanceAnnotation::new(inst.id, inst.category.clone(), amodal, visible, 1.0)?);
    }
    Ok(out)
}

/// Summary numbers for a generated scene.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneStats {
    pub objects: usize,
    pub max_depth: usize,
    pub gt_none: usize,
    pub gt_partial: usize,
    pub gt_heavy: usize,
}

pub fn scene_stats(scene: &LayerStackScene) -> Result<SceneStats> {
    let mut stats = SceneStats {
        objects: scene.instances().len(),
        max_depth: scene.max_depth(),
        gt_none: 0,
        gt_partial: 0,
        gt_heavy: 0,
    };
    for ann in annotations_from_scene(scene)? {
        match OcclusionStratum::of(ann.occlusion_rate, PARTIAL_OCCLUSION_MAX) {
            OcclusionStratum::None => stats.gt_none += 1,
            OcclusionStratum::Partial => stats.gt_partial += 1,
            OcclusionStratum::Heavy => stats.gt_heavy += 1,
        }
    }
    Ok(stats)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PerturbConfig {
    pub erode_radius: usize,
    pub dilate_radius: usize,
    pub drop_occluded_prob: f64,
    pub level_flip_prob: f64,
    pub score_noise: f64,
    pub seed: u64,
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in
            [("drop_occluded_prob", self.drop_occluded_prob), ("level_flip_prob", self.level_flip_prob)]
        {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(name, format!("{p} outside [0, 1]")));
            }
        }
        if !(self.score_noise >= 0.0 && self.score_noise.is_finite()) {
            return Err(Error::invalid("score_noise", "must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Square (Chebyshev) erosion; pixels beyond the border count as background.
pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    morph(mask, radius, true)
}

/// Square (Chebyshev) dilation.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    morph(mask, radius, false)
}

fn morph(mask: &BinaryMask, radius: usize, erode: bool) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    let pass = |len: usize, c: usize, get: &dyn Fn(usize) -> bool| -> bool {
        let lo = c.saturating_sub(radius);
        let hi = (c + radius).min(len - 1);
        if erode {
            c >= radius && c + radius < len && (lo..=hi).all(get)
        } else {
            (lo..=hi).any(get)
        }
    };
    let rows = BinaryMask::from_fn(w, h, |x, y| pass(w, x, &|i| mask.get(i, y)));
    BinaryMask::from_fn(w, h, |x, y| pass(h, y, &|i| rows.get(x, i)))
}

/// Degrades ground-truth annotations into predictions: erode then dilate each
/// amodal mask, drop occluded instances at random, jitter scores. Instances
/// whose mask vanishes are dropped. Visible masks are cut to the new amodal
/// mask.
pub fn perturb(gt: &[InstanceAnnotation], config: &PerturbConfig) -> Result<Vec<InstanceAnnotation>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::with_capacity(gt.len());
    for ann in gt {
        let drop_roll: f64 = rng.random();
        let noise_roll: f64 = rng.random_range(-1.0..=1.0);
        if ann.occlusion_rate > 0.0 && drop_roll < config.drop_occluded_prob {
            continue;
        }
        let amodal = dilate(&erode(&ann.amodal, config.erode_radius), config.dilate_radius);
        if amodal.is_empty() {
            continue;
        }
        let visible = amodal.intersection(&ann.visible)?;
        let score = (ann.score + config.score_noise * noise_roll).clamp(0.0, 1.0);
        out.push(InstanceAnnotation::new(ann.id, ann.category.clone(), amodal, visible, score)?);
    }
    Ok(out)
}

/// Swaps the integer parts of two maps on their overlap region, which flips
/// the sign of their relative order there while keeping both confidences.
pub fn swap_levels_on_overlap(a: &SemDistMap, b: &SemDistMap, c: f64) -> Result<(SemDistMap, SemDistMap)> {
    let omega = overlap_region(a, b, c)?;
    let (w, h) = a.dims();
    let mut va = a.values().to_vec();
    let mut vb = b.values().to_vec();
    for (i, _) in omega.bits().iter().enumerate().filter(|(_, &inside)| inside) {
        let (ma, mb) = (va[i], vb[i]);
        va[i] = frac(ma) + mb.floor();
        vb[i] = frac(mb) + ma.floor();
    }
    Ok((SemDistMap::new(w, h, va)?, SemDistMap::new(w, h, vb)?))
}

/// With probability `level_flip_prob`, reverses the local order of each
/// overlapping pair of maps (pairs visited in index order).
pub fn perturb_orders(
    maps: &[(InstanceId, SemDistMap)],
    config: &PerturbConfig,
    c: f64,
) -> Result<Vec<(InstanceId, SemDistMap)>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = maps.to_vec();
    for i in 0..out.len() {
        for j in i + 1..out.len() {
            let roll: f64 = rng.random();
            if roll >= config.level_flip_prob {
                continue;
            }
            let (a, b) = swap_levels_on_overlap(&out[i].1, &out[j].1, c)?;
            out[i].1 = a;
            out[j].1 = b;
        }
    }
    Ok(out)
}

/// True when every pixel of `id`'s amodal mask sits at level 0.
pub fn fully_visible(scene: &LayerStackScene, id: InstanceId) -> Result<bool> {
    Ok(visibility_levels(scene, id)?.iter().flatten().all(|&l| l == 0))
}
