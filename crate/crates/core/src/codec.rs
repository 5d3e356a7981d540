//! Semantics-aware distance maps.
//!
//! For one instance the map holds `M(x, y) = C(x, y) - L(x, y)` where `L` is
//! the visibility level (how many objects must be removed before the pixel
//! becomes visible) and `C` is the confidence of occurrence in `(0, 1)`.
//! Pixels outside the amodal support hold exactly 0. The integer part of `M`
//! carries the level and the fractional part carries the confidence, so a
//! single map decodes to the modal mask, the amodal mask and, paired with a
//! second map, the pixel-wise depth order.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::types::{BinaryMask, Grid, Heatmap, InstanceId, LayerStackScene};

/// Ground-truth confidence used when none is given.
pub const DEFAULT_CONFIDENCE: f32 = 0.95;

/// Confidence threshold `c` used when none is given.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Minimum argmax value for a layering pixel to count as foreground.
pub const LAYERING_FLOOR: f32 = 0.5;

const BELOW_ONE: f32 = 1.0 - f32::EPSILON / 2.0;

/// Per-pixel visibility level; `None` outside the amodal support.
pub type LevelMap = Grid<Option<u32>>;

/// Pixel-wise integer-part difference of two maps. Positive where the first
/// instance is closer to the camera.
pub type RelativeOrderMap = Grid<i32>;

/// Where the confidence term comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum ConfidencePolicy {
    /// One value in `(0, 1)` for every pixel.
    Constant(f32),
    /// A value in `(0, 1)` per pixel.
    PerPixel(Grid<f32>),
    /// Use the observed argmax value of a layering map as the confidence.
    /// Only meaningful for [`semdist_from_layering`].
    Observed,
}

impl Default for ConfidencePolicy {
    fn default() -> Self {
        ConfidencePolicy::Constant(DEFAULT_CONFIDENCE)
    }
}

fn check_confidence(c: f32) -> Result<()> {
    if c > 0.0 && c < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("confidence", format!("{c} outside (0, 1)")))
    }
}

pub(crate) fn check_threshold(c: f64) -> Result<()> {
    if c > 0.0 && c < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("threshold", format!("{c} outside (0, 1)")))
    }
}

impl ConfidencePolicy {
    pub fn constant(c: f32) -> Result<Self> {
        check_confidence(c)?;
        Ok(ConfidencePolicy::Constant(c))
    }

    pub fn per_pixel(grid: Grid<f32>) -> Result<Self> {
        for &c in grid.iter() {
            check_confidence(c)?;
        }
        Ok(ConfidencePolicy::PerPixel(grid))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ConfidencePolicy::Constant(c) => check_confidence(*c),
            ConfidencePolicy::PerPixel(grid) => grid.iter().try_for_each(|&c| check_confidence(c)),
            ConfidencePolicy::Observed => Ok(()),
        }
    }

    fn check_dims(&self, dims: (usize, usize)) -> Result<()> {
        match self {
            ConfidencePolicy::PerPixel(grid) if grid.dims() != dims => {
                Err(Error::DimensionMismatch { expected: dims, actual: grid.dims() })
            }
            _ => Ok(()),
        }
    }
}

/// A single-channel sem-dist map. Every value is finite and below 1.
#[derive(Clone, Debug, PartialEq)]
pub struct SemDistMap(Grid<f32>);

impl SemDistMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        let grid = Grid::from_vec(width, height, values)?;
        Self::from_grid(grid)
    }

    pub fn from_grid(grid: Grid<f32>) -> Result<Self> {
        if let Some(bad) = grid.iter().find(|v| !(v.is_finite() && **v < 1.0)) {
            return Err(Error::invalid("semdist", format!("value {bad} is not finite and below 1")));
        }
        Ok(SemDistMap(grid))
    }

    /// All-background map.
    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0.0; width * height])
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

    pub fn values(&self) -> &[f32] {
        self.0.as_slice()
    }

    pub fn grid(&self) -> &Grid<f32> {
        &self.0
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.0[(x, y)]
    }

    fn ensure_same_dims(&self, other: &SemDistMap) -> Result<()> {
        self.0.ensure_same_dims(&other.0)
    }
}

/// Fractional part `m - floor(m)`, kept strictly below 1.
pub fn frac(m: f32) -> f32 {
    (m - m.floor()).min(BELOW_ONE)
}

fn level_of(m: f32) -> i64 {
    m.floor() as i64
}

// Slack for rounding in `C - L` when the fractional part is compared to a
// threshold equal to `C`.
fn rounding_slack(m: f32) -> f32 {
    4.0 * f32::EPSILON * m.abs().max(1.0)
}

/// Level of `id` at every pixel: its index in the front-to-back stack, which
/// equals how many objects must be removed before it becomes visible there.
pub fn visibility_levels(scene: &LayerStackScene, id: InstanceId) -> Result<LevelMap> {
    if !scene.contains(id) {
        return Err(Error::UnknownId(id));
    }
    let values =
        scene.stacks().iter().map(|stack| stack.iter().position(|&s| s == id).map(|p| p as u32)).collect();
    Grid::from_vec(scene.width(), scene.height(), values)
}

/// Ground-truth map for one instance: `C - L` on its amodal mask, 0 elsewhere.
pub fn encode_semdist(
    scene: &LayerStackScene,
    id: InstanceId,
    policy: &ConfidencePolicy,
) -> Result<SemDistMap> {
    policy.validate()?;
    policy.check_dims(scene.dims())?;
    let levels = visibility_levels(scene, id)?;
    let values = levels
        .iter()
        .enumerate()
        .map(|(i, level)| match (level, policy) {
            (None, _) => Ok(0.0),
            (Some(l), ConfidencePolicy::Constant(c)) => Ok(c - *l as f32),
            (Some(l), ConfidencePolicy::PerPixel(grid)) => Ok(grid.as_slice()[i] - *l as f32),
            (Some(_), ConfidencePolicy::Observed) => Err(Error::invalid(
                "policy",
                "observed confidence needs a layering map; use a constant or per-pixel policy",
            )),
        })
        .collect::<Result<Vec<f32>>>()?;
    SemDistMap::new(scene.width(), scene.height(), values)
}

/// Modal heatmap: `M` where `M` lies in `[0, 1)`, 0 elsewhere.
pub fn decode_modal(map: &SemDistMap) -> Heatmap {
    map.grid().map(|&m| if (0.0..1.0).contains(&m) { m } else { 0.0 })
}

/// Amodal heatmap: the fractional part of `M`.
pub fn decode_amodal(map: &SemDistMap) -> Heatmap {
    map.grid().map(|&m| frac(m))
}

/// Recovers visibility levels where the amodal confidence reaches `threshold`.
pub fn decode_levels(map: &SemDistMap, threshold: f64) -> Result<LevelMap> {
    check_threshold(threshold)?;
    let t = threshold as f32;
    Ok(map.grid().map(|&m| {
        if frac(m) + rounding_slack(m) >= t {
            Some((-level_of(m)).max(0) as u32)
        } else {
            None
        }
    }))
}

/// Thresholds the map with a horizontal plane at height `plane`: pixels with
/// `M >= plane`. Planes in `(0, C]` give the modal mask of a ground-truth map.
pub fn threshold_plane(map: &SemDistMap, plane: f32) -> BinaryMask {
    let (w, h) = map.dims();
    BinaryMask::from_fn(w, h, |x, y| {
        let m = map.get(x, y);
        m != 0.0 && m + rounding_slack(m) >= plane
    })
}

/// Mask where `frac(M) >= t`: the amodal mask for `t` in `(0, C]`.
pub fn amodal_mask(map: &SemDistMap, threshold: f64) -> Result<BinaryMask> {
    let levels = decode_levels(map, threshold)?;
    let (w, h) = map.dims();
    BinaryMask::from_bits(w, h, levels.iter().map(Option::is_some).collect())
}

/// Mask where the decoded modal heatmap reaches `t`.
pub fn modal_mask(map: &SemDistMap, threshold: f64) -> Result<BinaryMask> {
    check_threshold(threshold)?;
    let (w, h) = map.dims();
    let modal = decode_modal(map);
    let t = threshold as f32;
    BinaryMask::from_bits(
        w,
        h,
        modal.iter().zip(map.values()).map(|(&v, &m)| v > 0.0 && v + rounding_slack(m) >= t).collect(),
    )
}

/// Joint-confidence overlap: `frac(M_a) * frac(M_b) > c^2`.
pub fn overlap_region(a: &SemDistMap, b: &SemDistMap, c: f64) -> Result<BinaryMask> {
    a.ensure_same_dims(b)?;
    check_threshold(c)?;
    let bits = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(&ma, &mb)| frac(ma) as f64 * frac(mb) as f64 > c * c)
        .collect();
    BinaryMask::from_bits(a.width(), a.height(), bits)
}

/// `floor(M_a) - floor(M_b)` inside the overlap region, 0 outside.
pub fn relative_order(a: &SemDistMap, b: &SemDistMap, c: f64) -> Result<RelativeOrderMap> {
    let omega = overlap_region(a, b, c)?;
    let values = omega
        .bits()
        .iter()
        .zip(a.values().iter().zip(b.values()))
        .map(|(&inside, (&ma, &mb))| if inside { (level_of(ma) - level_of(mb)) as i32 } else { 0 })
        .collect();
    Grid::from_vec(a.width(), a.height(), values)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ObjectOrder {
    AInFront,
    BInFront,
    Ambiguous,
    Disjoint,
}

impl ObjectOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectOrder::AInFront => "A_in_front",
            ObjectOrder::BInFront => "B_in_front",
            ObjectOrder::Ambiguous => "ambiguous",
            ObjectOrder::Disjoint => "disjoint",
        }
    }

    /// The same relation seen from the other instance.
    pub fn swapped(self) -> Self {
        match self {
            ObjectOrder::AInFront => ObjectOrder::BInFront,
            ObjectOrder::BInFront => ObjectOrder::AInFront,
            other => other,
        }
    }
}

impl std::fmt::Display for ObjectOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A 4-connected region of constant depth-order sign.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OrderRegion {
    /// +1 where A is closer, -1 where B is closer.
    pub sign: i8,
    pub area: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderAnalysis {
    pub order: ObjectOrder,
    pub overlap_area: usize,
    /// Largest first; ties keep discovery (row-major) order.
    pub regions: Vec<OrderRegion>,
}

/// Labels 4-connected components of equal nonzero sign.
pub(crate) fn sign_components(signs: &Grid<i8>) -> Vec<OrderRegion> {
    let (w, h) = signs.dims();
    let cells = signs.as_slice();
    let mut seen = vec![false; cells.len()];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..cells.len() {
        let sign = cells[start];
        if sign == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut area = 0;
        while let Some(i) = queue.pop_front() {
            area += 1;
            let (x, y) = (i % w, i / w);
            let neighbors = [
                (x > 0).then(|| i - 1),
                (x + 1 < w).then(|| i + 1),
                (y > 0).then(|| i - w),
                (y + 1 < h).then(|| i + w),
            ];
            for j in neighbors.into_iter().flatten() {
                if !seen[j] && cells[j] == sign {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        regions.push(OrderRegion { sign, area });
    }
    regions.sort_by_key(|r| std::cmp::Reverse(r.area));
    regions
}

/// Object-level order plus the regions it was derived from.
pub fn analyze_order(a: &SemDistMap, b: &SemDistMap, c: f64) -> Result<OrderAnalysis> {
    let omega = overlap_region(a, b, c)?;
    let overlap_area = omega.area();
    let r = relative_order(a, b, c)?;
    let regions = sign_components(&r.map(|&v| v.signum() as i8));
    let order = if overlap_area == 0 { ObjectOrder::Disjoint } else { decide_by_largest(&regions) };
    Ok(OrderAnalysis { order, overlap_area, regions })
}

pub(crate) fn decide_by_largest(regions: &[OrderRegion]) -> ObjectOrder {
    let Some(top) = regions.first() else {
        return ObjectOrder::Ambiguous;
    };
    let contested = regions.iter().take_while(|r| r.area == top.area).any(|r| r.sign != top.sign);
    match (contested, top.sign > 0) {
        (true, _) => ObjectOrder::Ambiguous,
        (false, true) => ObjectOrder::AInFront,
        (false, false) => ObjectOrder::BInFront,
    }
}

/// Which of two instances is in front, following the sign of the largest
/// region of constant pixel-wise order.
pub fn object_order(a: &SemDistMap, b: &SemDistMap, c: f64) -> Result<ObjectOrder> {
    analyze_order(a, b, c).map(|analysis| analysis.order)
}

/// A `K`-channel map in `[0, 1]`, stored channel-planar.
#[derive(Clone, Debug, PartialEq)]
pub struct LayeringMap {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl LayeringMap {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::invalid(
                "dimensions",
                format!("layering map needs nonzero sizes, got {width}x{height}x{channels}"),
            ));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Error::invalid("dimensions", "size overflows"))?;
        if data.len() != expected {
            return Err(Error::invalid("data", format!("expected {expected} values, got {}", data.len())));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid("layering", format!("value {bad} outside [0, 1]")));
        }
        Ok(LayeringMap { width, height, channels, data })
    }

    fn zeros(width: usize, height: usize, channels: usize) -> Self {
        LayeringMap { width, height, channels, data: vec![0.0; width * height * channels] }
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

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel(&self, k: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[k * n..(k + 1) * n]
    }

    pub fn get(&self, k: usize, x: usize, y: usize) -> f32 {
        self.channel(k)[y * self.width + x]
    }

    fn set(&mut self, k: usize, pixel: usize, value: f32) {
        let n = self.width * self.height;
        self.data[k * n + pixel] = value;
    }

    pub fn channel_mask(&self, k: usize) -> BinaryMask {
        let bits = self.channel(k).iter().map(|&v| v >= LAYERING_FLOOR).collect();
        BinaryMask::from_bits(self.width, self.height, bits).expect("dims checked at construction")
    }
}

fn check_layers(required: usize, given: usize) -> Result<()> {
    if given == 0 {
        return Err(Error::invalid("layers", "layer count must be at least 1"));
    }
    if given < required {
        return Err(Error::LayerCountTooSmall { required, given });
    }
    Ok(())
}

/// Channel `k` marks pixels where some object sits at visibility level `k`.
pub fn global_layering_target(scene: &LayerStackScene, layers: usize) -> Result<LayeringMap> {
    check_layers(scene.max_depth(), layers)?;
    let mut out = LayeringMap::zeros(scene.width(), scene.height(), layers);
    for (p, stack) in scene.stacks().iter().enumerate() {
        for k in 0..stack.len() {
            out.set(k, p, 1.0);
        }
    }
    Ok(out)
}

/// One-hot over levels inside the amodal mask of `id`, zero outside.
pub fn instance_layering_target(
    scene: &LayerStackScene,
    id: InstanceId,
    layers: usize,
) -> Result<LayeringMap> {
    let levels = visibility_levels(scene, id)?;
    let required = levels.iter().flatten().max().map_or(0, |&l| l as usize + 1);
    check_layers(required, layers)?;
    let mut out = LayeringMap::zeros(scene.width(), scene.height(), layers);
    for (p, level) in levels.iter().enumerate() {
        if let Some(l) = level {
            out.set(*l as usize, p, 1.0);
        }
    }
    Ok(out)
}

/// Collapses a per-instance layering map to a sem-dist map: the argmax channel
/// (lowest on ties) gives the level, the policy gives the confidence. Pixels
/// whose argmax value is below [`LAYERING_FLOOR`] are background.
pub fn semdist_from_layering(layering: &LayeringMap, policy: &ConfidencePolicy) -> Result<SemDistMap> {
    policy.validate()?;
    policy.check_dims(layering.dims())?;
    let n = layering.width * layering.height;
    let values = (0..n)
        .map(|p| {
            let (best_k, best_v) = (0..layering.channels)
                .map(|k| (k, layering.data[k * n + p]))
                .fold((0, f32::NEG_INFINITY), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
            if best_v < LAYERING_FLOOR {
                return 0.0;
            }
            let confidence = match policy {
                ConfidencePolicy::Constant(c) => *c,
                ConfidencePolicy::PerPixel(grid) => grid.as_slice()[p],
                ConfidencePolicy::Observed => best_v.min(BELOW_ONE),
            };
            confidence - best_k as f32
        })
        .collect();
    SemDistMap::new(layering.width, layering.height, values)
}
