//! Detection metrics and the shot-grouped k-fold protocol.
//!
//! Matching and AP follow the COCO conventions: greedy score-ranked matching
//! per class, 101 recall sample points, and IoU thresholds 0.50:0.05:0.95.
//! Records are pooled over the whole corpus before ranking.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::ser::{Serialize, SerializeStruct, Serializer};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::fusion::iou;
use crate::model::{ClassTable, Detection};
use crate::rng::DetRng;

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub const IOU_THRESHOLDS: [f64; 10] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];

/// Number of recall sample points for AP.
pub const RECALL_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("prediction set for frame {pred} paired with ground truth for frame {gt}")]
    MixedFrameInput { pred: String, gt: String },
    #[error("frame {frame}: prediction {index} has no score")]
    MissingScore { frame: String, index: usize },
    #[error("class has no ground truth")]
    ZeroGroundTruth,
    #[error("frame ids differ between predictions and ground truth: {0}")]
    FrameIdMismatch(String),
    #[error("cannot split {shots} shot(s) into {k} folds")]
    TooFewShots { shots: usize, k: usize },
    #[error("reports were computed with different class tables")]
    ClassTableMismatch,
    #[error("no reports to aggregate")]
    NoReports,
}

/// Detections of one frame (predictions or ground truth).
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub frame_id: String,
    pub detections: Vec<Detection>,
}

impl FrameSet {
    pub fn new(frame_id: impl Into<String>, detections: Vec<Detection>) -> Self {
        Self {
            frame_id: frame_id.into(),
            detections,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchRecord {
    pub class_id: usize,
    pub score: f64,
    pub is_tp: bool,
    pub frame_id: String,
}

/// Greedy matching of one frame at one IoU threshold.
///
/// Per class, predictions are taken by descending score and each claims the
/// unmatched ground truth with the highest IoU that reaches `iou_thr`.
/// Records come out ranked within each class.
pub fn match_detections(preds: &FrameSet, gts: &FrameSet, iou_thr: f64) -> Result<Vec<MatchRecord>, EvalError> {
    if preds.frame_id != gts.frame_id {
        return Err(EvalError::MixedFrameInput {
            pred: preds.frame_id.clone(),
            gt: gts.frame_id.clone(),
        });
    }
    let ranked = ranked_predictions(preds)?;
    let mut matched = vec![false; gts.detections.len()];
    let mut records = Vec::with_capacity(ranked.len());
    for (score, det) in ranked {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.detections.iter().enumerate() {
            if matched[g] || gt.class_id != det.class_id {
                continue;
            }
            let overlap = iou(&det.bbox, &gt.bbox);
            if overlap >= iou_thr && best.is_none_or(|(_, b)| overlap > b) {
                best = Some((g, overlap));
            }
        }
        if let Some((g, _)) = best {
            matched[g] = true;
        }
        records.push(MatchRecord {
            class_id: det.class_id,
            score,
            is_tp: best.is_some(),
            frame_id: preds.frame_id.clone(),
        });
    }
    Ok(records)
}

fn ranked_predictions(preds: &FrameSet) -> Result<Vec<(f64, &Detection)>, EvalError> {
    let mut ranked = preds
        .detections
        .iter()
        .enumerate()
        .map(|(index, d)| {
            d.score.map(|s| (s, index, d)).ok_or_else(|| EvalError::MissingScore {
                frame: preds.frame_id.clone(),
                index,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    ranked.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.2.class_id.cmp(&b.2.class_id))
            .then(a.2.bbox.x.total_cmp(&b.2.bbox.x))
            .then(a.2.bbox.y.total_cmp(&b.2.bbox.y))
            .then(a.2.bbox.w.total_cmp(&b.2.bbox.w))
            .then(a.2.bbox.h.total_cmp(&b.2.bbox.h))
            .then(a.1.cmp(&b.1))
    });
    Ok(ranked.into_iter().map(|(s, _, d)| (s, d)).collect())
}

/// Orders records by descending score, then frame id; records of the same
/// frame keep their relative order.
fn sort_records(records: &mut [MatchRecord]) {
    records.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.frame_id.cmp(&b.frame_id)));
}

/// COCO 101-point interpolated average precision for one class.
///
/// Recall point `r_i = i / 100` is reached at the first rank where
/// `100 * tp >= i * gt_count`, compared in integers.
pub fn average_precision(records: &[MatchRecord], gt_count: usize) -> Result<f64, EvalError> {
    if gt_count == 0 {
        return Err(EvalError::ZeroGroundTruth);
    }
    let mut ranked = records.to_vec();
    sort_records(&mut ranked);

    let mut tps = Vec::with_capacity(ranked.len());
    let mut precision = Vec::with_capacity(ranked.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for r in &ranked {
        if r.is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        tps.push(tp);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }

    let mut sum = 0.0;
    let mut k = 0;
    for i in 0..RECALL_POINTS {
        while k < tps.len() && tps[k] * (RECALL_POINTS - 1) < i * gt_count {
            k += 1;
        }
        if k < tps.len() {
            sum += precision[k];
        }
    }
    Ok(sum / RECALL_POINTS as f64)
}

/// Mergeable pool of match records across frames.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalAccumulator {
    /// One record list per entry of [`IOU_THRESHOLDS`].
    records: Vec<Vec<MatchRecord>>,
    gt_counts: BTreeMap<usize, usize>,
    frames: BTreeSet<String>,
}

impl EvalAccumulator {
    pub fn new() -> Self {
        Self {
            records: vec![Vec::new(); IOU_THRESHOLDS.len()],
            ..Self::default()
        }
    }

    pub fn add_frame(&mut self, preds: &FrameSet, gts: &FrameSet) -> Result<(), EvalError> {
        for (t, &thr) in IOU_THRESHOLDS.iter().enumerate() {
            let recs = match_detections(preds, gts, thr)?;
            self.records[t].extend(recs);
        }
        for gt in &gts.detections {
            *self.gt_counts.entry(gt.class_id).or_default() += 1;
        }
        self.frames.insert(gts.frame_id.clone());
        Ok(())
    }

    /// Adds already matched records, one list per IoU threshold.
    pub fn add_records(&mut self, per_threshold: Vec<Vec<MatchRecord>>, gt_counts: &BTreeMap<usize, usize>) {
        for (dst, src) in self.records.iter_mut().zip(per_threshold) {
            for r in &src {
                self.frames.insert(r.frame_id.clone());
            }
            dst.extend(src);
        }
        for (&c, &n) in gt_counts {
            *self.gt_counts.entry(c).or_default() += n;
        }
    }

    pub fn merge(mut self, other: EvalAccumulator) -> Self {
        for (dst, src) in self.records.iter_mut().zip(other.records) {
            dst.extend(src);
        }
        for (c, n) in other.gt_counts {
            *self.gt_counts.entry(c).or_default() += n;
        }
        self.frames.extend(other.frames);
        self
    }

    pub fn records(&self, threshold_index: usize) -> &[MatchRecord] {
        &self.records[threshold_index]
    }

    pub fn finish(&self, classes: &ClassTable, conf_threshold: Option<f64>) -> EvalReport {
        let mut per_threshold: Vec<Vec<MatchRecord>> = self.records.clone();
        for recs in &mut per_threshold {
            sort_records(recs);
        }

        let mut pred_counts: BTreeMap<usize, usize> = BTreeMap::new();
        for r in &per_threshold[0] {
            *pred_counts.entry(r.class_id).or_default() += 1;
        }
        let class_ids: BTreeSet<usize> = (0..classes.len())
            .chain(self.gt_counts.keys().copied())
            .chain(pred_counts.keys().copied())
            .collect();

        let mut per_class = Vec::new();
        for class_id in class_ids {
            let gts = self.gt_counts.get(&class_id).copied().unwrap_or(0);
            let aps: Option<Vec<f64>> = (gts > 0).then(|| {
                per_threshold
                    .iter()
                    .map(|recs| {
                        let own: Vec<MatchRecord> =
                            recs.iter().filter(|r| r.class_id == class_id).cloned().collect();
                        average_precision(&own, gts).expect("gt count checked")
                    })
                    .collect()
            });
            per_class.push(ClassMetrics {
                class_id,
                name: classes
                    .name(class_id)
                    .map_or_else(|| format!("class_{class_id}"), str::to_string),
                gts,
                preds: pred_counts.get(&class_id).copied().unwrap_or(0),
                ap50: aps.as_ref().map(|a| a[0]),
                ap50_95: aps.as_ref().map(|a| a.iter().sum::<f64>() / a.len() as f64),
            });
        }

        let scored: Vec<&ClassMetrics> = per_class.iter().filter(|c| c.gts > 0).collect();
        let mean = |get: fn(&ClassMetrics) -> Option<f64>| {
            if scored.is_empty() {
                0.0
            } else {
                scored.iter().filter_map(|c| get(c)).sum::<f64>() / scored.len() as f64
            }
        };
        let map50 = mean(|c| c.ap50);
        let map50_95 = mean(|c| c.ap50_95);

        let cutoff = conf_threshold.unwrap_or(f64::NEG_INFINITY);
        let kept = per_threshold[0].iter().filter(|r| r.score >= cutoff);
        let (tp, npred) = kept.fold((0usize, 0usize), |(tp, n), r| (tp + r.is_tp as usize, n + 1));
        let ngt: usize = self.gt_counts.values().sum();

        EvalReport {
            classes: classes.names().to_vec(),
            frames: self.frames.len(),
            conf_threshold,
            precision: ratio(tp, npred),
            recall: ratio(tp, ngt),
            map50,
            map50_95,
            per_class,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub class_id: usize,
    pub name: String,
    pub gts: usize,
    pub preds: usize,
    /// `None` when the class has no ground truth.
    pub ap50: Option<f64>,
    pub ap50_95: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub classes: Vec<String>,
    pub frames: usize,
    pub conf_threshold: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub map50: f64,
    pub map50_95: f64,
    pub per_class: Vec<ClassMetrics>,
}

/// Evaluates predictions against ground truth over a set of frames.
///
/// Both sides must cover the same frame ids. Precision and recall are taken
/// at IoU 0.5 over predictions scoring at least `conf_threshold` (all when
/// `None`).
pub fn evaluate(
    preds: &[FrameSet],
    gts: &[FrameSet],
    classes: &ClassTable,
    conf_threshold: Option<f64>,
) -> Result<EvalReport, EvalError> {
    Ok(accumulate(preds, gts)?.finish(classes, conf_threshold))
}

/// Pairs frames by id and matches each pair.
pub fn accumulate(preds: &[FrameSet], gts: &[FrameSet]) -> Result<EvalAccumulator, EvalError> {
    let by_id: BTreeMap<&str, &FrameSet> = preds.iter().map(|p| (p.frame_id.as_str(), p)).collect();
    let gt_ids: BTreeSet<&str> = gts.iter().map(|g| g.frame_id.as_str()).collect();
    let pred_ids: BTreeSet<&str> = by_id.keys().copied().collect();
    if by_id.len() != preds.len() || gt_ids.len() != gts.len() {
        return Err(EvalError::FrameIdMismatch("duplicate frame id".into()));
    }
    if gt_ids != pred_ids {
        let only_pred: Vec<&str> = pred_ids.difference(&gt_ids).copied().collect();
        let only_gt: Vec<&str> = gt_ids.difference(&pred_ids).copied().collect();
        return Err(EvalError::FrameIdMismatch(format!(
            "only in predictions: {only_pred:?}; only in ground truth: {only_gt:?}"
        )));
    }
    let mut acc = EvalAccumulator::new();
    for gt in gts {
        acc.add_frame(by_id[gt.frame_id.as_str()], gt)?;
    }
    Ok(acc)
}

/// Unweighted mean over folds. Per-class APs average over the folds where
/// the class had ground truth.
#[derive(Default)]
struct ClassSums {
    name: String,
    gts: usize,
    preds: usize,
    ap50: Vec<f64>,
    ap50_95: Vec<f64>,
}

pub fn aggregate_folds(reports: &[EvalReport]) -> Result<EvalReport, EvalError> {
    let first = reports.first().ok_or(EvalError::NoReports)?;
    if reports.iter().any(|r| r.classes != first.classes) {
        return Err(EvalError::ClassTableMismatch);
    }
    let n = reports.len() as f64;
    let mean = |get: fn(&EvalReport) -> f64| reports.iter().map(get).sum::<f64>() / n;

    let mut classes: BTreeMap<usize, ClassSums> = BTreeMap::new();
    for r in reports {
        for c in &r.per_class {
            let e = classes.entry(c.class_id).or_insert_with(|| ClassSums {
                name: c.name.clone(),
                ..ClassSums::default()
            });
            e.gts += c.gts;
            e.preds += c.preds;
            e.ap50.extend(c.ap50);
            e.ap50_95.extend(c.ap50_95);
        }
    }
    let avg = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let per_class = classes
        .into_iter()
        .map(|(class_id, s)| ClassMetrics {
            class_id,
            ap50: avg(&s.ap50),
            ap50_95: avg(&s.ap50_95),
            name: s.name,
            gts: s.gts,
            preds: s.preds,
        })
        .collect();

    Ok(EvalReport {
        classes: first.classes.clone(),
        frames: reports.iter().map(|r| r.frames).sum(),
        conf_threshold: first.conf_threshold,
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        map50: mean(|r| r.map50),
        map50_95: mean(|r| r.map50_95),
        per_class,
    })
}

/// Shot-to-fold assignment.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FoldSpec {
    pub k: usize,
    pub seed: u64,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldSpec {
    /// Shot ids of each fold, sorted.
    pub fn folds(&self) -> Vec<Vec<String>> {
        let mut folds = vec![Vec::new(); self.k];
        for (shot, &f) in &self.assignment {
            folds[f].push(shot.clone());
        }
        folds
    }

    /// `(train, validation)` shot ids when `fold` is held out.
    pub fn train_val(&self, fold: usize) -> (Vec<String>, Vec<String>) {
        let (val, train): (Vec<_>, Vec<_>) = self.assignment.iter().partition(|(_, &f)| f == fold);
        (
            train.into_iter().map(|(s, _)| s.clone()).collect(),
            val.into_iter().map(|(s, _)| s.clone()).collect(),
        )
    }
}

/// Splits shots into `k` folds: sort the ids, shuffle with the seeded
/// generator, deal round-robin. All views of a shot share its fold.
pub fn kfold_split(shot_ids: &[String], k: usize, seed: u64) -> Result<FoldSpec, EvalError> {
    let mut shots: Vec<String> = shot_ids.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if k < 2 || k > shots.len() {
        return Err(EvalError::TooFewShots { shots: shots.len(), k });
    }
    DetRng::new(seed).shuffle(&mut shots);
    let assignment = shots.into_iter().enumerate().map(|(i, s)| (s, i % k)).collect();
    Ok(FoldSpec { k, seed, assignment })
}

struct Fixed6(f64);

impl Serialize for Fixed6 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let text = format!("{:.6}", self.0);
        let raw = RawValue::from_string(text).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

impl Serialize for ClassMetrics {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("ClassMetrics", 6)?;
        st.serialize_field("class_id", &self.class_id)?;
        st.serialize_field("name", &self.name)?;
        st.serialize_field("gts", &self.gts)?;
        st.serialize_field("preds", &self.preds)?;
        st.serialize_field("ap50", &self.ap50.map(Fixed6))?;
        st.serialize_field("ap50_95", &self.ap50_95.map(Fixed6))?;
        st.end()
    }
}

impl Serialize for EvalReport {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("EvalReport", 8)?;
        st.serialize_field("classes", &self.classes)?;
        st.serialize_field("frames", &self.frames)?;
        st.serialize_field("conf_threshold", &self.conf_threshold.map(Fixed6))?;
        st.serialize_field("precision", &Fixed6(self.precision))?;
        st.serialize_field("recall", &Fixed6(self.recall))?;
        st.serialize_field("map50", &Fixed6(self.map50))?;
        st.serialize_field("map50_95", &Fixed6(self.map50_95))?;
        st.serialize_field("per_class", &self.per_class)?;
        st.end()
    }
}

impl EvalReport {
    /// Canonical pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Plain-text summary: one aggregate row and one AP row per class, in percent.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let pct = |v: f64| format!("{:.2}", 100.0 * v);
        let _ = writeln!(
            out,
            "{:>10} {:>10} {:>10} {:>12}",
            "Precision", "Recall", "mAP@0.5", "mAP@0.5:0.95"
        );
        let _ = writeln!(
            out,
            "{:>10} {:>10} {:>10} {:>12}",
            pct(self.precision),
            pct(self.recall),
            pct(self.map50),
            pct(self.map50_95)
        );
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<8} {:>8} {:>8} {:>10} {:>12}",
            "Class", "GT", "Pred", "AP@0.5", "AP@0.5:0.95"
        );
        for c in &self.per_class {
            let ap = |v: Option<f64>| v.map_or_else(|| "-".to_string(), pct);
            let _ = writeln!(
                out,
                "{:<8} {:>8} {:>8} {:>10} {:>12}",
                c.name,
                c.gts,
                c.preds,
                ap(c.ap50),
                ap(c.ap50_95)
            );
        }
        out
    }
}
