//! Shared value types: grids, binary masks, layer-stack scenes and annotations.
//!
//! All grids are row-major with the origin at the top-left corner, `x` growing
//! rightward and `y` growing downward. Pixel `(x, y)` lives at index
//! `y * width + x`.

use std::collections::HashSet;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque positive instance identifier assigned by the scene author.
pub type InstanceId = u32;

/// A dense row-major 2D grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(
            "dimensions",
            format!("width and height must be at least 1, got {width}x{height}"),
        ));
    }
    width
        .checked_mul(height)
        .map(|_| ())
        .ok_or_else(|| Error::invalid("dimensions", "width * height overflows"))
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::invalid(
                "data",
                format!("expected {} values, got {}", width * height, data.len()),
            ));
        }
        Ok(Grid { width, height, data })
    }

    /// Panics if either dimension is zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(width > 0 && height > 0, "grid dimensions must be nonzero");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Grid { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> Option<&T> {
        (x < self.width && y < self.height).then(|| &self.data[y * self.width + x])
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid { width: self.width, height: self.height, data: self.data.iter().map(f).collect() }
    }

    pub(crate) fn ensure_same_dims<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch { expected: self.dims(), actual: other.dims() });
        }
        Ok(())
    }
}

impl<T: Clone> Grid<T> {
    /// Panics if either dimension is zero.
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(width > 0 && height > 0, "grid dimensions must be nonzero");
        Grid { width, height, data: vec![value; width * height] }
    }
}

impl<T> Index<(usize, usize)> for Grid<T> {
    type Output = T;

    fn index(&self, (x, y): (usize, usize)) -> &T {
        assert!(x < self.width && y < self.height, "pixel ({x}, {y}) out of bounds");
        &self.data[y * self.width + x]
    }
}

impl<T> IndexMut<(usize, usize)> for Grid<T> {
    fn index_mut(&mut self, (x, y): (usize, usize)) -> &mut T {
        assert!(x < self.width && y < self.height, "pixel ({x}, {y}) out of bounds");
        &mut self.data[y * self.width + x]
    }
}

/// A real-valued single-channel map, e.g. a decoded modal or amodal heatmap.
pub type Heatmap = Grid<f32>;

/// Row-major boolean mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask(Grid<bool>);

impl BinaryMask {
    pub fn empty(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        Ok(BinaryMask(Grid::filled(width, height, false)))
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        Grid::from_vec(width, height, bits).map(BinaryMask)
    }

    /// Panics if either dimension is zero.
    pub fn from_fn(width: usize, height: usize, f: impl FnMut(usize, usize) -> bool) -> Self {
        BinaryMask(Grid::from_fn(width, height, f))
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn bits(&self) -> &[bool] {
        self.0.as_slice()
    }

    pub fn grid(&self) -> &Grid<bool> {
        &self.0
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.0.get(x, y).copied().unwrap_or(false)
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.0[(x, y)] = value;
    }

    pub fn area(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }

    pub fn intersection_area(&self, other: &BinaryMask) -> Result<usize> {
        self.0.ensure_same_dims(&other.0)?;
        Ok(self.bits().iter().zip(other.bits()).filter(|(&a, &b)| a && b).count())
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn difference(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.bits().iter().zip(other.bits()).all(|(&a, &b)| !a || b)
    }

    /// Coordinates of set pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width();
        self.bits().iter().enumerate().filter(|(_, &b)| b).map(move |(i, _)| (i % w, i / w))
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
        self.0.ensure_same_dims(&other.0)?;
        let bits = self.bits().iter().zip(other.bits()).map(|(&a, &b)| f(a, b)).collect();
        BinaryMask::from_bits(self.width(), self.height(), bits)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub id: InstanceId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl Instance {
    pub fn new(id: InstanceId, category: Option<&str>) -> Self {
        Instance { id, category: category.map(str::to_owned) }
    }
}

/// A scene described by per-pixel front-to-back stacks of instance ids.
///
/// Depth order is a property of each pixel rather than of each object: two
/// instances can swap order across different parts of the image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerStackScene {
    width: usize,
    height: usize,
    instances: Vec<Instance>,
    stacks: Vec<Vec<InstanceId>>,
}

/// A broken [`LayerStackScene`] invariant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    ZeroId,
    DuplicateInstance { id: InstanceId },
    UnknownId { x: usize, y: usize, id: InstanceId },
    DuplicateInStack { x: usize, y: usize, id: InstanceId },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::ZeroId => write!(f, "instance id 0 is reserved"),
            Violation::DuplicateInstance { id } => write!(f, "instance {id} listed more than once"),
            Violation::UnknownId { x, y, id } => {
                write!(f, "unknown id {id} in stack at ({x}, {y})")
            }
            Violation::DuplicateInStack { x, y, id } => {
                write!(f, "duplicate id {id} in stack at ({x}, {y})")
            }
        }
    }
}

impl LayerStackScene {
    /// An empty scene with no instances.
    pub fn new(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        Ok(LayerStackScene { width, height, instances: Vec::new(), stacks: vec![Vec::new(); width * height] })
    }

    /// Assembles a scene from raw parts. Only the shape is checked here; use
    /// [`LayerStackScene::validate`] for the remaining invariants.
    pub fn from_parts(
        width: usize,
        height: usize,
        instances: Vec<Instance>,
        stacks: Vec<Vec<InstanceId>>,
    ) -> Result<Self> {
        check_dims(width, height)?;
        if stacks.len() != width * height {
            return Err(Error::invalid(
                "stacks",
                format!("expected {} stacks, got {}", width * height, stacks.len()),
            ));
        }
        Ok(LayerStackScene { width, height, instances, stacks })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn ids(&self) -> impl Iterator<Item = InstanceId> + '_ {
        self.instances.iter().map(|i| i.id)
    }

    pub fn instance(&self, id: InstanceId) -> Option<&Instance> {
        self.instances.iter().find(|i| i.id == id)
    }

    pub fn contains(&self, id: InstanceId) -> bool {
        self.instance(id).is_some()
    }

    pub fn stacks(&self) -> &[Vec<InstanceId>] {
        &self.stacks
    }

    /// Front-most first.
    pub fn stack(&self, x: usize, y: usize) -> &[InstanceId] {
        &self.stacks[y * self.width + x]
    }

    pub fn max_depth(&self) -> usize {
        self.stacks.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Registers an instance. Fails if the id is zero or already present.
    pub fn push_instance(&mut self, instance: Instance) -> Result<()> {
        if instance.id == 0 {
            return Err(Error::invalid("id", "instance id 0 is reserved"));
        }
        if self.contains(instance.id) {
            return Err(Error::invalid("id", format!("duplicate instance id {}", instance.id)));
        }
        self.instances.push(instance);
        Ok(())
    }

    /// Puts `id` in front of everything already covering the pixels of `mask`.
    /// Pixels whose stack already holds `id` keep their existing slot.
    pub fn place_front(&mut self, id: InstanceId, mask: &BinaryMask) -> Result<()> {
        self.place(id, mask, true)
    }

    /// Puts `id` behind everything already covering the pixels of `mask`.
    pub fn place_back(&mut self, id: InstanceId, mask: &BinaryMask) -> Result<()> {
        self.place(id, mask, false)
    }

    fn place(&mut self, id: InstanceId, mask: &BinaryMask, front: bool) -> Result<()> {
        if !self.contains(id) {
            return Err(Error::UnknownId(id));
        }
        if mask.dims() != self.dims() {
            return Err(Error::DimensionMismatch { expected: self.dims(), actual: mask.dims() });
        }
        for (stack, _) in self.stacks.iter_mut().zip(mask.bits()).filter(|(_, &b)| b) {
            if stack.contains(&id) {
                continue;
            }
            if front {
                stack.insert(0, id);
            } else {
                stack.push(id);
            }
        }
        Ok(())
    }

    /// Drops an instance and all its stack entries.
    pub fn remove_instance(&mut self, id: InstanceId) -> Result<()> {
        let pos = self.instances.iter().position(|i| i.id == id).ok_or(Error::UnknownId(id))?;
        self.instances.remove(pos);
        for stack in &mut self.stacks {
            stack.retain(|&s| s != id);
        }
        Ok(())
    }

    /// Returns one record per broken invariant; empty when the scene is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        let mut known = HashSet::new();
        for inst in &self.instances {
            if inst.id == 0 {
                violations.push(Violation::ZeroId);
            }
            if !known.insert(inst.id) {
                violations.push(Violation::DuplicateInstance { id: inst.id });
            }
        }
        for (i, stack) in self.stacks.iter().enumerate() {
            let (x, y) = (i % self.width, i / self.width);
            for (pos, &id) in stack.iter().enumerate() {
                if !known.contains(&id) {
                    violations.push(Violation::UnknownId { x, y, id });
                }
                if stack[..pos].contains(&id) {
                    violations.push(Violation::DuplicateInStack { x, y, id });
                }
            }
        }
        violations
    }

    fn require(&self, id: InstanceId) -> Result<()> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(Error::UnknownId(id))
        }
    }

    /// Pixels whose stack contains `id` anywhere.
    pub fn amodal_mask_of(&self, id: InstanceId) -> Result<BinaryMask> {
        self.require(id)?;
        let bits = self.stacks.iter().map(|s| s.contains(&id)).collect();
        BinaryMask::from_bits(self.width, self.height, bits)
    }

    /// Pixels where `id` is front-most.
    pub fn visible_mask_of(&self, id: InstanceId) -> Result<BinaryMask> {
        self.require(id)?;
        let bits = self.stacks.iter().map(|s| s.first() == Some(&id)).collect();
        BinaryMask::from_bits(self.width, self.height, bits)
    }
}

pub fn validate_scene(scene: &LayerStackScene) -> Vec<Violation> {
    scene.validate()
}

pub fn amodal_mask_of(scene: &LayerStackScene, id: InstanceId) -> Result<BinaryMask> {
    scene.amodal_mask_of(id)
}

/// Amodal and visible masks of one instance, as produced by a dataset or a model.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceAnnotation {
    pub id: InstanceId,
    pub category: Option<String>,
    pub amodal: BinaryMask,
    pub visible: BinaryMask,
    pub occlusion_rate: f64,
    pub score: f64,
}

impl InstanceAnnotation {
    /// Builds an annotation and derives its occlusion rate from the masks.
    pub fn new(
        id: InstanceId,
        category: Option<String>,
        amodal: BinaryMask,
        visible: BinaryMask,
        score: f64,
    ) -> Result<Self> {
        if amodal.dims() != visible.dims() {
            return Err(Error::DimensionMismatch { expected: amodal.dims(), actual: visible.dims() });
        }
        if !visible.is_subset_of(&amodal) {
            return Err(Error::invalid(
                "visible",
                format!("instance {id}: visible mask not inside amodal mask"),
            ));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::invalid("score", format!("{score} outside [0, 1]")));
        }
        let occlusion_rate = occlusion_rate_of(&amodal, &visible);
        Ok(InstanceAnnotation { id, category, amodal, visible, occlusion_rate, score })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.amodal.dims()
    }
}

/// `1 - |visible| / |amodal|`, or 0 for an empty amodal mask.
pub(crate) fn occlusion_rate_of(amodal: &BinaryMask, visible: &BinaryMask) -> f64 {
    let total = amodal.area();
    if total == 0 {
        return 0.0;
    }
    let seen = visible.intersection_area(amodal).unwrap_or(0);
    1.0 - seen as f64 / total as f64
}

/// Per-image diagnostics attached to an [`EvalReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageDiagnostics {
    pub name: String,
    pub gt_count: usize,
    pub pred_count: usize,
    /// Ground-truth instances matched at IoU 0.5.
    pub matched_at_50: usize,
    /// Mean IoU of the pairs matched at 0.5, if any.
    pub mean_matched_iou: Option<f64>,
    pub order_pairs: Option<usize>,
    pub order_correct: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub iou_thresholds: Vec<f64>,
    /// How AR is averaged; always over the same IoU thresholds as AP.
    pub ar_averaging: String,
    pub partial_occlusion_max: f64,
    pub class_aware: bool,
    pub order_confidence_threshold: f64,
    pub order_pairs_ambiguous: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap: f64,
    pub ar10: f64,
    pub ar100: f64,
    pub ar_none: Option<f64>,
    pub ar_partial: Option<f64>,
    pub ar_heavy: Option<f64>,
    pub order_accuracy: Option<f64>,
    pub per_image: Vec<ImageDiagnostics>,
    pub meta: ReportMeta,
}
