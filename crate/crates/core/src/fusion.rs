//! Ensemble box fusion for multi-view inference.
//!
//! All methods work per class. Candidates are ranked by score, descending;
//! equal scores fall back to box coordinates and then to input position, so
//! the result does not depend on how the inputs happened to be ordered.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use thiserror::Error;

use crate::model::{BBox, Detection, KaleidoFrame, ViewpointId};
use crate::warp::{backward_warp_set, WarpError, WarpPolicy};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("detection {index} of model {model} has no score")]
    MissingScore { model: usize, index: usize },
    #[error("expected {expected} model outputs, got {found}")]
    ModelCountMismatch { expected: usize, found: usize },
    #[error("invalid fusion parameters: {0}")]
    InvalidParams(String),
    #[error("frame {shot_id}: viewpoint {view} has no detections")]
    MissingView { shot_id: String, view: ViewpointId },
    #[error("frame {shot_id}: viewpoint {view} has no disparity field")]
    MissingDisparity { shot_id: String, view: ViewpointId },
    #[error("frame {shot_id}, viewpoint {view}: {cause}")]
    Warp {
        shot_id: String,
        view: ViewpointId,
        cause: WarpError,
    },
}

/// How WBF rescales a cluster's mean score by its support `T` out of `N` models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConfRescale {
    /// `s * min(T, N) / N`
    #[default]
    MinCountOverN,
    /// `min(1, s * T / N)`
    CountOverN,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionMethod {
    #[default]
    Wbf,
    Nmw,
    Nms,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionParams {
    pub iou_threshold: f64,
    pub skip_score_threshold: f64,
    pub num_models: usize,
    pub conf_rescale: ConfRescale,
    pub intermix_match_iou: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            iou_threshold: 0.55,
            skip_score_threshold: 0.0,
            num_models: 9,
            conf_rescale: ConfRescale::MinCountOverN,
            intermix_match_iou: 0.5,
        }
    }
}

impl FusionParams {
    pub fn with_models(self, num_models: usize) -> Self {
        Self { num_models, ..self }
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        let bad = |msg: String| Err(FusionError::InvalidParams(msg));
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return bad(format!("iou_threshold {} not in (0, 1]", self.iou_threshold));
        }
        if !(self.skip_score_threshold >= 0.0 && self.skip_score_threshold < 1.0) {
            return bad(format!(
                "skip_score_threshold {} not in [0, 1)",
                self.skip_score_threshold
            ));
        }
        if self.num_models == 0 {
            return bad("num_models must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.intermix_match_iou) {
            return bad(format!(
                "intermix_match_iou {} not in [0, 1]",
                self.intermix_match_iou
            ));
        }
        Ok(())
    }
}

/// A fused detection and the candidates that formed it.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedBox {
    pub detection: Detection,
    pub cluster_size: usize,
    /// Indices of the models (for multi-view inference, viewpoint index - 1)
    /// that contributed at least one member.
    pub sources: BTreeSet<usize>,
}

impl FusedBox {
    pub fn source_views(&self) -> Vec<ViewpointId> {
        self.sources
            .iter()
            .filter_map(|&m| u8::try_from(m + 1).ok().and_then(|i| ViewpointId::new(i).ok()))
            .collect()
    }

    pub fn score(&self) -> f64 {
        self.detection.score.unwrap_or(0.0)
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let (ax1, ay1, ax2, ay2) = a.corners();
    let (bx1, by1, bx2, by2) = b.corners();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    det: Detection,
    score: f64,
    model: usize,
    index: usize,
}

fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.det.bbox.x.total_cmp(&b.det.bbox.x))
        .then(a.det.bbox.y.total_cmp(&b.det.bbox.y))
        .then(a.det.bbox.w.total_cmp(&b.det.bbox.w))
        .then(a.det.bbox.h.total_cmp(&b.det.bbox.h))
        .then(a.model.cmp(&b.model))
        .then(a.index.cmp(&b.index))
}

/// Flattens model outputs, drops low scores and groups by class, each group ranked.
fn ranked_by_class(
    per_model: &[Vec<Detection>],
    skip_below: f64,
) -> Result<Vec<Vec<Candidate>>, FusionError> {
    let mut pool = Vec::new();
    for (model, dets) in per_model.iter().enumerate() {
        for (index, det) in dets.iter().enumerate() {
            let score = det.score.ok_or(FusionError::MissingScore { model, index })?;
            if score >= skip_below {
                pool.push(Candidate {
                    det: *det,
                    score,
                    model,
                    index,
                });
            }
        }
    }
    let classes: BTreeSet<usize> = pool.iter().map(|c| c.det.class_id).collect();
    Ok(classes
        .into_iter()
        .map(|class| {
            let mut group: Vec<Candidate> = pool.iter().filter(|c| c.det.class_id == class).copied().collect();
            group.sort_by(rank);
            group
        })
        .collect())
}

/// Weighted mean of member boxes, kept inside the members' coordinate range.
///
/// Falls back to equal weights when every weight is zero.
fn weighted_box(members: &[(f64, BBox)]) -> BBox {
    let total: f64 = members.iter().map(|(w, _)| w).sum();
    let uniform = total.is_nan() || total <= 0.0;
    let norm = if uniform { members.len() as f64 } else { total };
    let coord = |get: fn(&BBox) -> f64| {
        let sum: f64 = members
            .iter()
            .map(|(w, b)| if uniform { get(b) } else { w * get(b) })
            .sum();
        let lo = members.iter().map(|(_, b)| get(b)).fold(f64::INFINITY, f64::min);
        let hi = members.iter().map(|(_, b)| get(b)).fold(f64::NEG_INFINITY, f64::max);
        (sum / norm).clamp(lo, hi)
    };
    BBox {
        x: coord(|b| b.x),
        y: coord(|b| b.y),
        w: coord(|b| b.w),
        h: coord(|b| b.h),
    }
}

fn single_model(dets: &[Detection]) -> Vec<Vec<Detection>> {
    vec![dets.to_vec()]
}

/// Greedy per-class non-maximum suppression.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Result<Vec<Detection>, FusionError> {
    Ok(nms_fused(&single_model(dets), iou_threshold, 0.0)?
        .into_iter()
        .map(|f| f.detection)
        .collect())
}

/// NMS over several model outputs; `cluster_size` counts the kept box and
/// everything it suppressed.
pub fn nms_fused(
    per_model: &[Vec<Detection>],
    iou_threshold: f64,
    skip_below: f64,
) -> Result<Vec<FusedBox>, FusionError> {
    let mut out = Vec::new();
    for group in ranked_by_class(per_model, skip_below)? {
        let mut suppressed = vec![false; group.len()];
        for i in 0..group.len() {
            if suppressed[i] {
                continue;
            }
            let top = &group[i];
            let mut sources = BTreeSet::from([top.model]);
            let mut size = 1;
            for j in i + 1..group.len() {
                if !suppressed[j] && iou(&top.det.bbox, &group[j].det.bbox) > iou_threshold {
                    suppressed[j] = true;
                    sources.insert(group[j].model);
                    size += 1;
                }
            }
            out.push(FusedBox {
                detection: top.det,
                cluster_size: size,
                sources,
            });
        }
    }
    Ok(out)
}

/// Non-maximum weighted fusion of a single detection list.
pub fn nmw(dets: &[Detection], iou_threshold: f64) -> Result<Vec<FusedBox>, FusionError> {
    nmw_fused(&single_model(dets), iou_threshold, 0.0)
}

/// Non-maximum weighted fusion: each cluster is the top remaining box plus
/// everything overlapping it above the threshold; members are weighted by
/// `score * IoU(member, top)` and the cluster keeps the top score.
pub fn nmw_fused(
    per_model: &[Vec<Detection>],
    iou_threshold: f64,
    skip_below: f64,
) -> Result<Vec<FusedBox>, FusionError> {
    let mut out = Vec::new();
    for group in ranked_by_class(per_model, skip_below)? {
        let mut taken = vec![false; group.len()];
        for i in 0..group.len() {
            if taken[i] {
                continue;
            }
            taken[i] = true;
            let top = group[i];
            let mut members = vec![(top.score, top.det.bbox)];
            let mut sources = BTreeSet::from([top.model]);
            for j in i + 1..group.len() {
                if taken[j] {
                    continue;
                }
                let overlap = iou(&top.det.bbox, &group[j].det.bbox);
                if overlap > iou_threshold {
                    taken[j] = true;
                    members.push((group[j].score * overlap, group[j].det.bbox));
                    sources.insert(group[j].model);
                }
            }
            out.push(FusedBox {
                detection: top.det.with_bbox(weighted_box(&members)),
                cluster_size: members.len(),
                sources,
            });
        }
    }
    Ok(out)
}

struct Cluster {
    members: Vec<Candidate>,
    fused: BBox,
}

impl Cluster {
    fn refresh(&mut self) {
        let weighted: Vec<(f64, BBox)> = self.members.iter().map(|c| (c.score, c.det.bbox)).collect();
        self.fused = weighted_box(&weighted);
    }

    fn mean_score(&self) -> f64 {
        self.members.iter().map(|c| c.score).sum::<f64>() / self.members.len() as f64
    }
}

/// Weighted boxes fusion over `params.num_models` model outputs.
///
/// Each ranked candidate joins the cluster whose running fused box overlaps it
/// most (above the threshold) or opens a new one. The fused box is the
/// score-weighted mean of its members, its score the mean member score,
/// rescaled by cluster support.
pub fn wbf(per_model: &[Vec<Detection>], params: &FusionParams) -> Result<Vec<FusedBox>, FusionError> {
    params.validate()?;
    if per_model.len() != params.num_models {
        return Err(FusionError::ModelCountMismatch {
            expected: params.num_models,
            found: per_model.len(),
        });
    }
    let n = params.num_models as f64;
    let mut out = Vec::new();
    for group in ranked_by_class(per_model, params.skip_score_threshold)? {
        let mut clusters: Vec<Cluster> = Vec::new();
        for cand in group {
            let mut best: Option<(usize, f64)> = None;
            for (k, cluster) in clusters.iter().enumerate() {
                let overlap = iou(&cluster.fused, &cand.det.bbox);
                if overlap > params.iou_threshold && best.is_none_or(|(_, b)| overlap > b) {
                    best = Some((k, overlap));
                }
            }
            match best {
                Some((k, _)) => {
                    clusters[k].members.push(cand);
                    clusters[k].refresh();
                }
                None => clusters.push(Cluster {
                    members: vec![cand],
                    fused: cand.det.bbox,
                }),
            }
        }
        for cluster in clusters {
            let t = cluster.members.len();
            let mean = cluster.mean_score();
            let score = match params.conf_rescale {
                ConfRescale::MinCountOverN => mean * (t.min(params.num_models) as f64) / n,
                ConfRescale::CountOverN => (mean * t as f64 / n).min(1.0),
                ConfRescale::None => mean,
            };
            let first = cluster.members[0].det;
            out.push(FusedBox {
                detection: Detection {
                    class_id: first.class_id,
                    bbox: cluster.fused,
                    score: Some(score),
                },
                cluster_size: t,
                sources: cluster.members.iter().map(|c| c.model).collect(),
            });
        }
    }
    Ok(out)
}

/// Replaces fused coordinates with those of the best-matching center-view box.
///
/// Fused boxes are visited by descending score; each takes the unused
/// same-class center box with the highest IoU above `match_iou`. Class and
/// score stay those of the fused box. Unmatched fused boxes keep their
/// coordinates; the output has one entry per fused box, in input order.
pub fn intermix(fused: &[FusedBox], center: &[Detection], match_iou: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..fused.len()).collect();
    order.sort_by(|&a, &b| fused[b].score().total_cmp(&fused[a].score()).then(a.cmp(&b)));
    let mut used = vec![false; center.len()];
    let mut out: Vec<Detection> = fused.iter().map(|f| f.detection).collect();
    for i in order {
        let f = &fused[i].detection;
        let mut best: Option<(usize, f64)> = None;
        for (j, c) in center.iter().enumerate() {
            if used[j] || c.class_id != f.class_id {
                continue;
            }
            let overlap = iou(&f.bbox, &c.bbox);
            if overlap > match_iou && best.is_none_or(|(_, b)| overlap > b) {
                best = Some((j, overlap));
            }
        }
        if let Some((j, _)) = best {
            used[j] = true;
            out[i] = f.with_bbox(center[j].bbox);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvConfig {
    pub method: FusionMethod,
    pub params: FusionParams,
    pub policy: WarpPolicy,
}

impl Default for MvConfig {
    fn default() -> Self {
        Self {
            method: FusionMethod::Wbf,
            params: FusionParams::default(),
            policy: WarpPolicy::inference(),
        }
    }
}

/// Warps every viewpoint's detections into center-view coordinates.
/// Entry `i` holds viewpoint `i + 1`; the center view passes through.
pub fn align_views(frame: &KaleidoFrame, policy: &WarpPolicy) -> Result<Vec<Vec<Detection>>, FusionError> {
    ViewpointId::all()
        .map(|view| {
            let dets = frame.views.get(&view).ok_or_else(|| FusionError::MissingView {
                shot_id: frame.shot_id.clone(),
                view,
            })?;
            if view.is_center() {
                return Ok(dets.clone());
            }
            let field = frame
                .disparity(view)
                .ok_or_else(|| FusionError::MissingDisparity {
                    shot_id: frame.shot_id.clone(),
                    view,
                })?;
            backward_warp_set(dets, field, frame.image_size, policy)
                .map(|set| set.boxes)
                .map_err(|cause| FusionError::Warp {
                    shot_id: frame.shot_id.clone(),
                    view,
                    cause,
                })
        })
        .collect()
}

/// Fuses already aligned model outputs with the chosen method.
pub fn fuse(aligned: &[Vec<Detection>], method: FusionMethod, params: &FusionParams) -> Result<Vec<FusedBox>, FusionError> {
    params.validate()?;
    match method {
        FusionMethod::Wbf => wbf(aligned, params),
        FusionMethod::Nmw => nmw_fused(aligned, params.iou_threshold, params.skip_score_threshold),
        FusionMethod::Nms => nms_fused(aligned, params.iou_threshold, params.skip_score_threshold),
    }
}

/// Alignment and fusion, without the final intermixing step.
pub fn align_and_fuse(frame: &KaleidoFrame, config: &MvConfig) -> Result<Vec<FusedBox>, FusionError> {
    let aligned = align_views(frame, &config.policy)?;
    fuse(&aligned, config.method, &config.params)
}

/// Full multi-view inference for one frame: align, fuse, intermix with the
/// raw center-view detections.
pub fn mv_infer(frame: &KaleidoFrame, config: &MvConfig) -> Result<Vec<Detection>, FusionError> {
    let fused = align_and_fuse(frame, config)?;
    Ok(intermix(
        &fused,
        frame.view(ViewpointId::CENTER),
        config.params.intermix_match_iou,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DisparityField, ImageSize};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    fn sd(c: usize, b: BBox, s: f64) -> Detection {
        Detection::scored(c, b, s).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = bb(5.0, 5.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bb(50.0, 50.0, 10.0, 10.0)), 0.0);
        let a = BBox::from_corners(0.0, 0.0, 10.0, 10.0).unwrap();
        let b = BBox::from_corners(5.0, 0.0, 15.0, 10.0).unwrap();
        assert!((iou(&a, &b) - 50.0 / 150.0).abs() < 1e-15);
        // touching edges do not overlap
        assert_eq!(iou(&a, &BBox::from_corners(10.0, 0.0, 20.0, 10.0).unwrap()), 0.0);
    }

    #[test]
    fn nms_examples() {
        let b = bb(10.0, 10.0, 10.0, 10.0);
        assert_eq!(nms(&[sd(0, b, 0.8), sd(0, b, 0.9)], 0.5).unwrap(), vec![sd(0, b, 0.9)]);
        let far = bb(100.0, 10.0, 10.0, 10.0);
        assert_eq!(nms(&[sd(0, b, 0.8), sd(0, far, 0.9)], 0.5).unwrap().len(), 2);
        // same box, different class: no cross-class suppression
        assert_eq!(nms(&[sd(0, b, 0.8), sd(1, b, 0.9)], 0.5).unwrap().len(), 2);
        assert!(matches!(
            nms(&[Detection::label(0, b)], 0.5),
            Err(FusionError::MissingScore { model: 0, index: 0 })
        ));
    }

    #[test]
    fn nms_chain_keeps_ends() {
        // A-B and B-C overlap above the threshold, A-C not at all; B goes with A, C survives
        let a = BBox::from_corners(0.0, 0.0, 10.0, 1.0).unwrap();
        let b = BBox::from_corners(4.0, 0.0, 14.0, 1.0).unwrap();
        let c = BBox::from_corners(10.0, 0.0, 20.0, 1.0).unwrap();
        assert!((iou(&a, &b) - 6.0 / 14.0).abs() < 1e-12);
        assert!((iou(&b, &c) - 0.25).abs() < 1e-12);
        assert_eq!(iou(&a, &c), 0.0);
        let kept = nms(&[sd(0, c, 0.7), sd(0, b, 0.8), sd(0, a, 0.9)], 0.2).unwrap();
        assert_eq!(kept, vec![sd(0, a, 0.9), sd(0, c, 0.7)]);
    }

    #[test]
    fn nmw_examples() {
        let b = bb(100.0, 50.0, 20.0, 20.0);
        let single = nmw(&[sd(1, b, 0.7)], 0.55).unwrap();
        assert_eq!(single[0].detection, sd(1, b, 0.7));
        assert_eq!(single[0].cluster_size, 1);

        let pair = nmw(&[sd(1, b, 0.5), sd(1, b, 0.9)], 0.55).unwrap();
        assert_eq!(pair.len(), 1);
        assert_eq!(pair[0].detection, sd(1, b, 0.9));
        assert_eq!(pair[0].cluster_size, 2);

        let moved = bb(104.0, 50.0, 20.0, 20.0);
        // overlap 16x20 over union 2*400 - 320
        let alpha = 320.0 / 480.0;
        let fused = nmw(&[sd(1, b, 0.9), sd(1, moved, 0.3)], 0.55).unwrap();
        let expected = (0.9 * 100.0 + 0.3 * alpha * 104.0) / (0.9 + 0.3 * alpha);
        assert!((fused[0].detection.bbox.x - expected).abs() < 1e-12);
        assert_eq!(fused[0].detection.score, Some(0.9));
    }

    #[test]
    fn wbf_examples() {
        let params = FusionParams::default().with_models(2);
        let a = sd(2, bb(100.0, 50.0, 20.0, 20.0), 0.9);
        let b = sd(2, bb(104.0, 50.0, 20.0, 20.0), 0.3);
        let fused = wbf(&[vec![a], vec![b]], &params).unwrap();
        assert_eq!(fused.len(), 1);
        assert!((fused[0].detection.bbox.x - 101.0).abs() < 1e-12);
        assert!((fused[0].score() - 0.6).abs() < 1e-12);
        assert_eq!(fused[0].cluster_size, 2);
        assert_eq!(fused[0].sources, BTreeSet::from([0, 1]));

        let identity = FusionParams::default().with_models(1);
        let dets = vec![
            sd(0, bb(10.0, 10.0, 5.0, 5.0), 0.4),
            sd(1, bb(50.0, 10.0, 5.0, 5.0), 0.9),
            sd(0, bb(90.0, 10.0, 5.0, 5.0), 0.7),
        ];
        let fused = wbf(std::slice::from_ref(&dets), &identity).unwrap();
        let mut got: Vec<Detection> = fused.into_iter().map(|f| f.detection).collect();
        let mut want = dets;
        let key = |d: &Detection| (d.class_id, (d.bbox.x * 1000.0) as i64);
        got.sort_by_key(key);
        want.sort_by_key(key);
        assert_eq!(got, want);

        assert!(matches!(
            wbf(&[vec![]], &params),
            Err(FusionError::ModelCountMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn wbf_skips_low_scores_and_rescales_support() {
        let params = FusionParams {
            skip_score_threshold: 0.2,
            ..FusionParams::default().with_models(3)
        };
        let b = bb(10.0, 10.0, 10.0, 10.0);
        let fused = wbf(&[vec![sd(0, b, 0.9)], vec![sd(0, b, 0.1)], vec![]], &params).unwrap();
        assert_eq!(fused[0].cluster_size, 1);
        assert!((fused[0].score() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn intermix_examples() {
        let center = vec![sd(2, bb(100.0, 40.0, 20.0, 10.0), 0.8)];
        let fused = FusedBox {
            detection: sd(2, bb(101.0, 40.0, 21.0, 10.0), 0.6),
            cluster_size: 2,
            sources: BTreeSet::from([0, 4]),
        };
        let out = intermix(std::slice::from_ref(&fused), &center, 0.5);
        assert_eq!(out, vec![sd(2, bb(100.0, 40.0, 20.0, 10.0), 0.6)]);

        let same = FusedBox {
            detection: center[0],
            cluster_size: 1,
            sources: BTreeSet::from([4]),
        };
        assert_eq!(intermix(&[same], &center, 0.5), center);

        let far = vec![sd(2, bb(400.0, 40.0, 20.0, 10.0), 0.8)];
        assert_eq!(intermix(std::slice::from_ref(&fused), &far, 0.5), vec![fused.detection]);
        let other_class = vec![sd(3, bb(100.0, 40.0, 20.0, 10.0), 0.8)];
        assert_eq!(intermix(std::slice::from_ref(&fused), &other_class, 0.5), vec![fused.detection]);
    }

    #[test]
    fn intermix_uses_each_center_box_once() {
        let center = vec![sd(0, bb(100.0, 40.0, 20.0, 20.0), 0.8)];
        let hi = FusedBox {
            detection: sd(0, bb(101.0, 40.0, 20.0, 20.0), 0.9),
            cluster_size: 1,
            sources: BTreeSet::new(),
        };
        let lo = FusedBox {
            detection: sd(0, bb(100.5, 40.0, 20.0, 20.0), 0.3),
            cluster_size: 1,
            sources: BTreeSet::new(),
        };
        let out = intermix(&[lo.clone(), hi], &center, 0.5);
        assert_eq!(out[0], lo.detection);
        assert_eq!(out[1].bbox, center[0].bbox);
    }

    fn frame_with(views: Vec<Vec<Detection>>) -> KaleidoFrame {
        let size = ImageSize::new(640, 416);
        let disparities = ViewpointId::surrounding()
            .map(|v| (v, DisparityField::zeros(v, size).unwrap()))
            .collect();
        let views: BTreeMap<_, _> = ViewpointId::all().zip(views).collect();
        KaleidoFrame::new("shot", size, views, disparities).unwrap()
    }

    #[test]
    fn consensus_frame_returns_center_set() {
        let center = vec![
            sd(0, bb(100.0, 100.0, 30.0, 20.0), 0.8),
            sd(4, bb(300.0, 200.0, 40.0, 40.0), 0.6),
        ];
        let frame = frame_with(vec![center.clone(); 9]);
        let mut out = mv_infer(&frame, &MvConfig::default()).unwrap();
        out.sort_by_key(|d| d.class_id);
        assert_eq!(out.len(), 2);
        for (o, c) in out.iter().zip(&center) {
            assert_eq!(o.bbox, c.bbox);
            assert!((o.score.unwrap() - c.score.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn spurious_single_view_box_is_downweighted() {
        let mut views = vec![vec![]; 9];
        views[2] = vec![sd(1, bb(50.0, 50.0, 10.0, 10.0), 0.9)];
        let fused = align_and_fuse(&frame_with(views), &MvConfig::default()).unwrap();
        assert!((fused[0].score() - 0.1).abs() < 1e-12);
        assert_eq!(fused[0].source_views(), vec![ViewpointId::new(3).unwrap()]);
    }

    #[test]
    fn missing_view_is_named() {
        let mut frame = frame_with(vec![vec![]; 9]);
        frame.views.remove(&ViewpointId::new(7).unwrap());
        let err = mv_infer(&frame, &MvConfig::default()).unwrap_err();
        assert_eq!(
            err,
            FusionError::MissingView {
                shot_id: "shot".into(),
                view: ViewpointId::new(7).unwrap()
            }
        );
    }

    fn arb_dets() -> impl Strategy<Value = Vec<Detection>> {
        prop::collection::vec(
            (0usize..3, 0.0f64..100.0, 0.0f64..100.0, 1.0f64..40.0, 1.0f64..40.0, 0.01f64..1.0)
                .prop_map(|(c, x, y, w, h, s)| sd(c, bb(x, y, w, h), s)),
            0..15,
        )
    }

    proptest! {
        #[test]
        fn iou_is_symmetric_and_bounded(a in (0.0f64..50.0, 0.0f64..50.0, 0.1f64..30.0, 0.1f64..30.0),
                                        b in (0.0f64..50.0, 0.0f64..50.0, 0.1f64..30.0, 0.1f64..30.0)) {
            let a = bb(a.0, a.1, a.2, a.3);
            let b = bb(b.0, b.1, b.2, b.3);
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(iou(&a, &a), 1.0);
        }

        #[test]
        fn nms_output_is_separated(dets in arb_dets(), thr in 0.1f64..0.9) {
            let kept = nms(&dets, thr).unwrap();
            for (i, a) in kept.iter().enumerate() {
                prop_assert!(dets.contains(a));
                for b in &kept[i + 1..] {
                    if a.class_id == b.class_id {
                        prop_assert!(iou(&a.bbox, &b.bbox) <= thr);
                    }
                }
            }
        }

        #[test]
        fn fusion_is_order_independent(dets in arb_dets(), seed in any::<u64>()) {
            let mut shuffled = dets.clone();
            // deterministic permutation from the seed
            let n = shuffled.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            let p = FusionParams::default().with_models(1);
            prop_assert_eq!(nms(&dets, 0.5).unwrap(), nms(&shuffled, 0.5).unwrap());
            let strip = |v: Vec<FusedBox>| v.into_iter().map(|f| (f.detection, f.cluster_size)).collect::<Vec<_>>();
            prop_assert_eq!(strip(nmw(&dets, 0.5).unwrap()), strip(nmw(&shuffled, 0.5).unwrap()));
            prop_assert_eq!(strip(wbf(std::slice::from_ref(&dets), &p).unwrap()), strip(wbf(&[shuffled], &p).unwrap()));
        }

        #[test]
        fn wbf_is_convex_and_never_raises_score(a in arb_dets(), b in arb_dets()) {
            let params = FusionParams::default().with_models(2);
            let fused = wbf(&[a.clone(), b.clone()], &params).unwrap();
            let all: Vec<Detection> = a.into_iter().chain(b).collect();
            prop_assert_eq!(fused.iter().map(|f| f.cluster_size).sum::<usize>(), all.len());
            for f in &fused {
                let members: Vec<&Detection> = all.iter()
                    .filter(|d| d.class_id == f.detection.class_id
                        && iou(&d.bbox, &f.detection.bbox) > 0.0)
                    .collect();
                prop_assert!(!members.is_empty());
                prop_assert!(f.score() <= members.iter().map(|d| d.score.unwrap()).fold(0.0, f64::max) + 1e-12);
            }
        }

        #[test]
        fn intermix_keeps_count(a in arb_dets(), center in arb_dets()) {
            let fused = wbf(&[a], &FusionParams::default().with_models(1)).unwrap();
            prop_assert_eq!(intermix(&fused, &center, 0.5).len(), fused.len());
        }
    }
}
