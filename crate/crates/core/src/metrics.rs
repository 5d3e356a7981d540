//! Evaluation: mask IoU, greedy matching, AP and AR over an IoU sweep,
//! occlusion-stratified AR and pairwise depth-order accuracy.
//!
//! AP integrates the precision/recall curve with monotone-envelope step
//! interpolation: each true positive adds `1 / n_gt` of recall at the maximum
//! precision reached at or after it. AR averages recall over the same ten IoU
//! thresholds as AP.

use std::cmp::Ordering;

use crate::codec::{
    amodal_mask, check_threshold, encode_semdist, object_order, ConfidencePolicy, ObjectOrder, SemDistMap,
    DEFAULT_CONFIDENCE, DEFAULT_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::types::{
    BinaryMask, EvalReport, ImageDiagnostics, InstanceAnnotation, InstanceId, LayerStackScene, ReportMeta,
};

/// Upper bound of the partial-occlusion stratum; above it is heavy occlusion.
pub const PARTIAL_OCCLUSION_MAX: f64 = 0.25;

/// IoU thresholds 0.50, 0.55, ..., 0.95, each the nearest double to its decimal.
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OcclusionStratum {
    None,
    Partial,
    Heavy,
}

impl OcclusionStratum {
    pub fn of(rate: f64, partial_max: f64) -> Self {
        if rate <= 0.0 {
            OcclusionStratum::None
        } else if rate <= partial_max {
            OcclusionStratum::Partial
        } else {
            OcclusionStratum::Heavy
        }
    }
}

/// `|a ∩ b| / |a ∪ b|`, 0 when both are empty.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let inter = a.intersection_area(b)?;
    let union = a.area() + b.area() - inter;
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MatchOptions {
    /// Require equal categories when both sides carry one.
    pub class_aware: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchedPair {
    pub gt_id: InstanceId,
    pub pred_id: InstanceId,
    pub iou: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_gt: Vec<InstanceId>,
    pub unmatched_pred: Vec<InstanceId>,
}

fn score_order(a: &InstanceAnnotation, b: &InstanceAnnotation) -> Ordering {
    b.score.total_cmp(&a.score).then(a.id.cmp(&b.id))
}

/// IoUs of one image, predictions sorted by descending score.
struct ImageTable<'a> {
    gt: Vec<&'a InstanceAnnotation>,
    pred: Vec<&'a InstanceAnnotation>,
    /// `ious[p][g]`, `None` when categories forbid the pair.
    ious: Vec<Vec<Option<f64>>>,
}

impl<'a> ImageTable<'a> {
    fn new(gt: &'a [InstanceAnnotation], pred: &'a [InstanceAnnotation], opts: MatchOptions) -> Result<Self> {
        let mut pred: Vec<_> = pred.iter().collect();
        pred.sort_by(|a, b| score_order(a, b));
        let gt: Vec<_> = gt.iter().collect();
        let ious = pred
            .iter()
            .map(|p| {
                gt.iter()
                    .map(|g| {
                        let compatible = !opts.class_aware
                            || match (&g.category, &p.category) {
                                (Some(a), Some(b)) => a == b,
                                _ => true,
                            };
                        if compatible {
                            iou(&g.amodal, &p.amodal).map(Some)
                        } else {
                            Ok(None)
                        }
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ImageTable { gt, pred, ious })
    }

    /// Greedy assignment over the first `limit` predictions. Returns the matched
    /// gt index (if any) for each considered prediction.
    fn assign(&self, threshold: f64, limit: usize) -> Vec<Option<usize>> {
        let mut taken = vec![false; self.gt.len()];
        self.ious
            .iter()
            .take(limit)
            .map(|row| {
                let mut best: Option<(usize, f64)> = None;
                for (g, iou) in row.iter().enumerate() {
                    let Some(iou) = *iou else { continue };
                    if taken[g] || iou < threshold {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((bg, biou)) => iou > biou || (iou == biou && self.gt[g].id < self.gt[bg].id),
                    };
                    if better {
                        best = Some((g, iou));
                    }
                }
                if let Some((g, _)) = best {
                    taken[g] = true;
                }
                best.map(|(g, _)| g)
            })
            .collect()
    }
}

/// Greedy matching: predictions in descending score (lower id first on ties)
/// each claim the free ground truth with the highest amodal IoU at or above
/// `threshold` (lower gt id first on ties).
pub fn match_instances(
    gt: &[InstanceAnnotation],
    pred: &[InstanceAnnotation],
    threshold: f64,
    opts: MatchOptions,
) -> Result<MatchResult> {
    check_iou_threshold(threshold)?;
    let table = ImageTable::new(gt, pred, opts)?;
    let assignment = table.assign(threshold, usize::MAX);
    let mut result = MatchResult::default();
    let mut gt_matched = vec![false; table.gt.len()];
    for (p, matched) in assignment.iter().enumerate() {
        match matched {
            Some(g) => {
                gt_matched[*g] = true;
                result.pairs.push(MatchedPair {
                    gt_id: table.gt[*g].id,
                    pred_id: table.pred[p].id,
                    iou: table.ious[p][*g].unwrap_or(0.0),
                });
            }
            None => result.unmatched_pred.push(table.pred[p].id),
        }
    }
    result.unmatched_gt = table.gt.iter().zip(&gt_matched).filter(|(_, &m)| !m).map(|(g, _)| g.id).collect();
    Ok(result)
}

fn check_iou_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("iou_threshold", format!("{t} outside (0, 1]")))
    }
}

fn tables<'a>(
    gt: &'a [Vec<InstanceAnnotation>],
    pred: &'a [Vec<InstanceAnnotation>],
    opts: MatchOptions,
) -> Result<Vec<ImageTable<'a>>> {
    if gt.len() != pred.len() {
        return Err(Error::invalid(
            "images",
            format!("{} ground-truth images but {} prediction images", gt.len(), pred.len()),
        ));
    }
    gt.iter().zip(pred).map(|(g, p)| ImageTable::new(g, p, opts)).collect()
}

fn total_gt(gt: &[Vec<InstanceAnnotation>]) -> Result<usize> {
    match gt.iter().map(Vec::len).sum() {
        0 => Err(Error::EmptyGroundTruth),
        n => Ok(n),
    }
}

fn ap_from_tables(tables: &[ImageTable<'_>], n_gt: usize) -> f64 {
    let thresholds = iou_thresholds();
    let per_threshold = thresholds.iter().map(|&t| {
        // (score, image, rank, true positive)
        let mut detections: Vec<(f64, usize, usize, bool)> = Vec::new();
        for (img, table) in tables.iter().enumerate() {
            for (rank, m) in table.assign(t, usize::MAX).into_iter().enumerate() {
                detections.push((table.pred[rank].score, img, rank, m.is_some()));
            }
        }
        detections.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut tp = 0usize;
        let precision: Vec<f64> = detections
            .iter()
            .enumerate()
            .map(|(i, d)| {
                tp += d.3 as usize;
                tp as f64 / (i + 1) as f64
            })
            .collect();
        let mut envelope = 0.0f64;
        let mut area = 0.0;
        for (d, p) in detections.iter().zip(&precision).rev() {
            envelope = envelope.max(*p);
            if d.3 {
                area += envelope;
            }
        }
        area / n_gt as f64
    });
    per_threshold.sum::<f64>() / thresholds.len() as f64
}

fn ar_from_tables(tables: &[ImageTable<'_>], n_gt: usize, k: usize) -> f64 {
    let thresholds = iou_thresholds();
    let recall_sum: f64 = thresholds
        .iter()
        .map(|&t| {
            let matched: usize =
                tables.iter().map(|table| table.assign(t, k).iter().filter(|m| m.is_some()).count()).sum();
            matched as f64 / n_gt as f64
        })
        .sum();
    recall_sum / thresholds.len() as f64
}

/// Mean over the ten IoU thresholds of the area under the pooled
/// precision/recall curve.
pub fn average_precision(
    gt: &[Vec<InstanceAnnotation>],
    pred: &[Vec<InstanceAnnotation>],
    opts: MatchOptions,
) -> Result<f64> {
    let n_gt = total_gt(gt)?;
    Ok(ap_from_tables(&tables(gt, pred, opts)?, n_gt))
}

/// Recall with at most `k` top-scoring predictions per image, averaged over
/// the ten IoU thresholds.
pub fn average_recall(
    gt: &[Vec<InstanceAnnotation>],
    pred: &[Vec<InstanceAnnotation>],
    k: usize,
    opts: MatchOptions,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k", "must be at least 1"));
    }
    let n_gt = total_gt(gt)?;
    Ok(ar_from_tables(&tables(gt, pred, opts)?, n_gt, k))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StratifiedAr {
    pub none: Option<f64>,
    pub partial: Option<f64>,
    pub heavy: Option<f64>,
}

/// AR@k restricted to ground truth of each occlusion stratum. Predictions are
/// not filtered. An empty stratum yields `None`.
pub fn stratified_ar(
    gt: &[Vec<InstanceAnnotation>],
    pred: &[Vec<InstanceAnnotation>],
    k: usize,
    partial_max: f64,
    opts: MatchOptions,
) -> Result<StratifiedAr> {
    let recall_for = |stratum: OcclusionStratum| -> Result<Option<f64>> {
        let subset: Vec<Vec<InstanceAnnotation>> = gt
            .iter()
            .map(|image| {
                image
                    .iter()
                    .filter(|a| OcclusionStratum::of(a.occlusion_rate, partial_max) == stratum)
                    .cloned()
                    .collect()
            })
            .collect();
        match average_recall(&subset, pred, k, opts) {
            Ok(ar) => Ok(Some(ar)),
            Err(Error::EmptyGroundTruth) => Ok(None),
            Err(e) => Err(e),
        }
    };
    Ok(StratifiedAr {
        none: recall_for(OcclusionStratum::None)?,
        partial: recall_for(OcclusionStratum::Partial)?,
        heavy: recall_for(OcclusionStratum::Heavy)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderOptions {
    /// Confidence threshold `c` for the overlap region.
    pub threshold: f64,
    /// Confidence `C` of the ground-truth encodings; must exceed `threshold`.
    pub confidence: f32,
}

impl Default for OrderOptions {
    fn default() -> Self {
        OrderOptions { threshold: DEFAULT_THRESHOLD, confidence: DEFAULT_CONFIDENCE }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OrderTally {
    pub correct: usize,
    pub total: usize,
    /// Overlapping pairs whose ground-truth order is itself a tie; not scored.
    pub ambiguous: usize,
}

impl OrderTally {
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }

    fn add(&mut self, other: OrderTally) {
        self.correct += other.correct;
        self.total += other.total;
        self.ambiguous += other.ambiguous;
    }
}

/// Scores pairwise order for every overlapping ground-truth pair. Missing,
/// ambiguous or disjoint predictions count as wrong.
pub fn order_tally(
    scene: &LayerStackScene,
    pred_maps: &[(InstanceId, SemDistMap)],
    opts: OrderOptions,
) -> Result<OrderTally> {
    check_threshold(opts.threshold)?;
    if (opts.confidence as f64) <= opts.threshold {
        return Err(Error::invalid(
            "confidence",
            format!("ground-truth confidence {} must exceed threshold {}", opts.confidence, opts.threshold),
        ));
    }
    let policy = ConfidencePolicy::constant(opts.confidence)?;
    let mut ids: Vec<InstanceId> = scene.ids().collect();
    ids.sort_unstable();
    let masks = ids.iter().map(|&id| scene.amodal_mask_of(id)).collect::<Result<Vec<_>>>()?;
    let encodings = ids.iter().map(|&id| encode_semdist(scene, id, &policy)).collect::<Result<Vec<_>>>()?;
    let find = |id: InstanceId| pred_maps.iter().find(|(pid, _)| *pid == id).map(|(_, m)| m);
    let mut tally = OrderTally::default();
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            if masks[i].intersection_area(&masks[j])? == 0 {
                continue;
            }
            let truth = object_order(&encodings[i], &encodings[j], opts.threshold)?;
            if truth == ObjectOrder::Ambiguous {
                tally.ambiguous += 1;
                continue;
            }
            tally.total += 1;
            let predicted = match (find(ids[i]), find(ids[j])) {
                (Some(a), Some(b)) => object_order(a, b, opts.threshold)?,
                _ => continue,
            };
            if predicted == truth {
                tally.correct += 1;
            }
        }
    }
    Ok(tally)
}

/// Fraction of overlapping pairs whose front/back relation is predicted
/// correctly from the sem-dist maps.
pub fn order_accuracy(
    scene: &LayerStackScene,
    pred_maps: &[(InstanceId, SemDistMap)],
    opts: OrderOptions,
) -> Result<f64> {
    order_tally(scene, pred_maps, opts)?.accuracy().ok_or(Error::NoOverlappingPairs)
}

/// For each ground-truth instance, the predicted map whose amodal mask (at
/// `threshold`) has the highest IoU with it. Instances with no overlapping
/// prediction are left out.
pub fn match_maps_to_gt(
    scene: &LayerStackScene,
    maps: &[SemDistMap],
    threshold: f64,
) -> Result<Vec<(InstanceId, SemDistMap)>> {
    let pred_masks = maps.iter().map(|m| amodal_mask(m, threshold)).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for id in scene.ids() {
        let gt = scene.amodal_mask_of(id)?;
        let mut best: Option<(usize, f64)> = None;
        for (i, mask) in pred_masks.iter().enumerate() {
            let v = iou(&gt, mask)?;
            if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        if let Some((i, _)) = best {
            out.push((id, maps[i].clone()));
        }
    }
    Ok(out)
}

/// Inputs for the depth-order part of an evaluation.
#[derive(Clone, Debug)]
pub struct OrderInput {
    pub scene: LayerStackScene,
    pub pred_maps: Vec<(InstanceId, SemDistMap)>,
}

#[derive(Clone, Debug)]
pub struct EvalImage {
    pub name: String,
    pub gt: Vec<InstanceAnnotation>,
    pub pred: Vec<InstanceAnnotation>,
    pub order: Option<OrderInput>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    pub matching: MatchOptions,
    pub k_small: usize,
    pub k_large: usize,
    pub partial_max: f64,
    pub order: OrderOptions,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            matching: MatchOptions::default(),
            k_small: 10,
            k_large: 100,
            partial_max: PARTIAL_OCCLUSION_MAX,
            order: OrderOptions::default(),
        }
    }
}

/// Runs the whole protocol over a set of images.
pub fn evaluate(images: &[EvalImage], opts: &EvalOptions) -> Result<EvalReport> {
    if opts.k_small == 0 || opts.k_large == 0 {
        return Err(Error::invalid("k", "must be at least 1"));
    }
    let gt: Vec<_> = images.iter().map(|i| i.gt.clone()).collect();
    let pred: Vec<_> = images.iter().map(|i| i.pred.clone()).collect();
    let n_gt = total_gt(&gt)?;
    let tables = tables(&gt, &pred, opts.matching)?;
    let ap = ap_from_tables(&tables, n_gt);
    let ar10 = ar_from_tables(&tables, n_gt, opts.k_small);
    let ar100 = ar_from_tables(&tables, n_gt, opts.k_large);
    let strata = stratified_ar(&gt, &pred, opts.k_large, opts.partial_max, opts.matching)?;

    let mut order_total = OrderTally::default();
    let mut any_order = false;
    let mut per_image = Vec::with_capacity(images.len());
    for (image, table) in images.iter().zip(&tables) {
        let assignment = table.assign(0.5, usize::MAX);
        let matched: Vec<f64> =
            assignment.iter().enumerate().filter_map(|(p, g)| g.and_then(|g| table.ious[p][g])).collect();
        let tally = match &image.order {
            Some(input) => {
                any_order = true;
                let t = order_tally(&input.scene, &input.pred_maps, opts.order)?;
                order_total.add(t);
                Some(t)
            }
            None => None,
        };
        per_image.push(ImageDiagnostics {
            name: image.name.clone(),
            gt_count: image.gt.len(),
            pred_count: image.pred.len(),
            matched_at_50: matched.len(),
            mean_matched_iou: (!matched.is_empty())
                .then(|| matched.iter().sum::<f64>() / matched.len() as f64),
            order_pairs: tally.map(|t| t.total),
            order_correct: tally.map(|t| t.correct),
        });
    }

    Ok(EvalReport {
        ap,
        ar10,
        ar100,
        ar_none: strata.none,
        ar_partial: strata.partial,
        ar_heavy: strata.heavy,
        order_accuracy: if any_order { order_total.accuracy() } else { None },
        per_image,
        meta: ReportMeta {
            iou_thresholds: iou_thresholds().to_vec(),
            ar_averaging: "mean recall over the AP IoU thresholds".to_owned(),
            partial_occlusion_max: opts.partial_max,
            class_aware: opts.matching.class_aware,
            order_confidence_threshold: opts.order.threshold,
            order_pairs_ambiguous: order_total.ambiguous,
        },
    })
}
