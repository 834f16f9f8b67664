//! Segmentation evaluation: pixel-level precision/recall/F-score,
//! vessel-level matching at IoU > 0.5 and area-weighted Hausdorff distance.
//!
//! Vessels are 8-connected components. Each ground-truth vessel is matched
//! to the predicted component it overlaps most; ties go to the larger IoU,
//! then the lower component id. A predicted component may be the best
//! match of several ground-truth vessels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    extract_contour, hausdorff_points, label_components, min_distance, BinaryMask,
    ComponentLabeling, Connectivity, Point2,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelMetrics {
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
}

fn fscore(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Pixel-level scores of one image. Precision is 0 when nothing is
/// predicted; recall (and so the whole record) is undefined for an empty
/// ground truth.
pub fn pixel_metrics(gt: &BinaryMask, pred: &BinaryMask) -> Result<PixelMetrics> {
    gt.same_shape(pred)?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&g, &p) in gt.data().iter().zip(pred.data()) {
        match (g, p) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (1, 0) => fn_ += 1,
            _ => {}
        }
    }
    if tp + fn_ == 0 {
        return Err(Error::UndefinedMetric(
            "recall is undefined for an empty ground truth",
        ));
    }
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = tp as f64 / (tp + fn_) as f64;
    Ok(PixelMetrics {
        precision,
        recall,
        fscore: fscore(precision, recall),
    })
}

/// Per-image pixel metrics averaged over a test set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PixelSummary {
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    pub images: usize,
    /// Images left out because their ground truth is empty.
    pub excluded: usize,
}

impl PixelSummary {
    pub fn from_images<'a>(
        pairs: impl IntoIterator<Item = (&'a BinaryMask, &'a BinaryMask)>,
    ) -> Result<Self> {
        let mut s = PixelSummary::default();
        for (gt, pred) in pairs {
            match pixel_metrics(gt, pred) {
                Ok(m) => {
                    s.precision += m.precision;
                    s.recall += m.recall;
                    s.fscore += m.fscore;
                    s.images += 1;
                }
                Err(Error::UndefinedMetric(_)) => s.excluded += 1,
                Err(e) => return Err(e),
            }
        }
        if s.images > 0 {
            let n = s.images as f64;
            s.precision /= n;
            s.recall /= n;
            s.fscore /= n;
        }
        Ok(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VesselMatch {
    pub gt_id: u32,
    /// Best-overlapping predicted component, `None` without any overlap.
    pub pred_id: Option<u32>,
    pub intersection: usize,
    pub iou: f64,
    pub is_tp: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VesselMatchReport {
    pub matches: Vec<VesselMatch>,
    pub tp: usize,
    pub gt_count: usize,
    pub pred_count: usize,
    /// Predicted components chosen by more than one ground-truth vessel.
    pub shared_predictions: Vec<u32>,
}

/// Overlap table between ground-truth and predicted components:
/// `overlap[g - 1][p - 1]` pixels.
fn overlaps(gt: &ComponentLabeling, pred: &ComponentLabeling) -> Vec<Vec<usize>> {
    let mut table = vec![vec![0usize; pred.component_count]; gt.component_count];
    for (&g, &p) in gt.labels.iter().zip(&pred.labels) {
        if g != 0 && p != 0 {
            table[g as usize - 1][p as usize - 1] += 1;
        }
    }
    table
}

/// `(pred_id, intersection, iou)` of the best-overlapping predicted
/// component for each ground-truth vessel.
fn best_overlaps(
    gt: &ComponentLabeling,
    pred: &ComponentLabeling,
) -> Vec<(Option<u32>, usize, f64)> {
    let table = overlaps(gt, pred);
    gt.ids()
        .map(|g| {
            let row = &table[g as usize - 1];
            let mut best: Option<(u32, usize, f64)> = None;
            for p in pred.ids() {
                let inter = row[p as usize - 1];
                if inter == 0 {
                    continue;
                }
                let union = gt.area(g) + pred.area(p) - inter;
                let iou = inter as f64 / union as f64;
                let better = match best {
                    None => true,
                    Some((_, bi, biou)) => inter > bi || (inter == bi && iou > biou),
                };
                if better {
                    best = Some((p, inter, iou));
                }
            }
            match best {
                Some((p, inter, iou)) => (Some(p), inter, iou),
                None => (None, 0, 0.0),
            }
        })
        .collect()
}

pub fn vessel_metrics(gt: &BinaryMask, pred: &BinaryMask) -> Result<VesselMatchReport> {
    gt.same_shape(pred)?;
    let gl = label_components(gt, Connectivity::Eight);
    let pl = label_components(pred, Connectivity::Eight);
    let matches: Vec<VesselMatch> = best_overlaps(&gl, &pl)
        .into_iter()
        .zip(gl.ids())
        .map(|((pred_id, intersection, iou), gt_id)| VesselMatch {
            gt_id,
            pred_id,
            intersection,
            iou,
            is_tp: iou > 0.5,
        })
        .collect();
    let mut uses = vec![0usize; pl.component_count];
    for m in &matches {
        if let Some(p) = m.pred_id {
            uses[p as usize - 1] += 1;
        }
    }
    let shared_predictions = uses
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 1)
        .map(|(i, _)| i as u32 + 1)
        .collect();
    Ok(VesselMatchReport {
        tp: matches.iter().filter(|m| m.is_tp).count(),
        gt_count: gl.component_count,
        pred_count: pl.component_count,
        matches,
        shared_predictions,
    })
}

/// Vessel counts accumulated over a test set before forming ratios.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VesselSummary {
    pub tp: usize,
    pub gt_count: usize,
    pub pred_count: usize,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
}

impl VesselSummary {
    pub fn from_reports<'a>(reports: impl IntoIterator<Item = &'a VesselMatchReport>) -> Self {
        let mut s = VesselSummary::default();
        for r in reports {
            s.tp += r.tp;
            s.gt_count += r.gt_count;
            s.pred_count += r.pred_count;
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        s.precision = ratio(s.tp, s.pred_count);
        s.recall = ratio(s.tp, s.gt_count);
        s.fscore = fscore(s.precision, s.recall);
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VesselHausdorff {
    pub gt_id: u32,
    pub area: usize,
    pub pred_id: u32,
    /// True when the predicted component was chosen by proximity because
    /// nothing overlaps the vessel.
    pub by_proximity: bool,
    pub distance: f64,
}

fn component_contour(mask: &BinaryMask, labels: &ComponentLabeling, id: u32) -> Vec<Point2> {
    extract_contour(&mask.component(labels, id))
        .points()
        .to_vec()
}

/// Hausdorff distance between the contour of every ground-truth vessel and
/// the contour of its best-overlapping predicted component, or of the
/// nearest predicted component when nothing overlaps. `None` when either
/// mask is empty.
pub fn vessel_hausdorff(
    gt: &BinaryMask,
    pred: &BinaryMask,
) -> Result<Option<Vec<VesselHausdorff>>> {
    gt.same_shape(pred)?;
    let gl = label_components(gt, Connectivity::Eight);
    let pl = label_components(pred, Connectivity::Eight);
    if gl.component_count == 0 || pl.component_count == 0 {
        return Ok(None);
    }
    let pred_contours: Vec<Vec<Point2>> =
        pl.ids().map(|p| component_contour(pred, &pl, p)).collect();
    let mut out = Vec::with_capacity(gl.component_count);
    for (g, (best, _, _)) in gl.ids().zip(best_overlaps(&gl, &pl)) {
        let contour = component_contour(gt, &gl, g);
        let (pred_id, by_proximity) = match best {
            Some(p) => (p, false),
            None => {
                let mut nearest = (f64::INFINITY, 1u32);
                for p in pl.ids() {
                    let d = min_distance(&contour, &pred_contours[p as usize - 1]);
                    if d < nearest.0 {
                        nearest = (d, p);
                    }
                }
                (nearest.1, true)
            }
        };
        let distance = hausdorff_points(&contour, &pred_contours[pred_id as usize - 1])?;
        out.push(VesselHausdorff {
            gt_id: g,
            area: gl.area(g),
            pred_id,
            by_proximity,
            distance,
        });
    }
    Ok(Some(out))
}

/// `sum_v (area_v / sum areas) * H_v`.
pub fn area_weighted_average(items: &[(usize, f64)]) -> f64 {
    let total: usize = items.iter().map(|(a, _)| a).sum();
    items
        .iter()
        .map(|&(a, h)| a as f64 / total as f64 * h)
        .sum()
}

/// Area-weighted Hausdorff distance of one image; `None` (undefined) when
/// either mask is empty.
pub fn weighted_hausdorff(gt: &BinaryMask, pred: &BinaryMask) -> Result<Option<f64>> {
    Ok(vessel_hausdorff(gt, pred)?.map(|per_vessel| {
        let items: Vec<(usize, f64)> = per_vessel.iter().map(|v| (v.area, v.distance)).collect();
        area_weighted_average(&items)
    }))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HausdorffSummary {
    pub mean: f64,
    pub images: usize,
    /// Images whose distance is undefined (empty prediction or ground truth).
    pub undefined: usize,
}

impl HausdorffSummary {
    pub fn from_values(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let mut s = HausdorffSummary::default();
        for v in values {
            match v {
                Some(h) => {
                    s.mean += h;
                    s.images += 1;
                }
                None => s.undefined += 1,
            }
        }
        if s.images > 0 {
            s.mean /= s.images as f64;
        }
        s
    }
}
