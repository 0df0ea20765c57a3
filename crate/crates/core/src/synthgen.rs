//! Synthetic kaleidoscopic scenes with exact labels, plus a noisy detector.
//!
//! A scene is a set of boxes ("components") in the center view, each raised
//! by some height. A component moves by `gain * height * direction(v)` pixels
//! in viewpoint `v`, and the disparity rasters hold that displacement over the
//! component's footprint, so forward warping the center labels reproduces the
//! per-view labels exactly.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::fusion::iou;
use crate::io::{self, DetectionTag, IoError};
use crate::model::{
    BBox, ClassTable, DatasetManifest, Detection, DisparityField, FrameEntry, ImageSize, KaleidoFrame, ModelError,
    Raster, ViewpointId,
};
use crate::rng::{derive_seed, DetRng};
use crate::warp::nearest_index;

const MAX_PLACEMENT_TRIES: usize = 1000;
const MAX_CENTER_IOU: f64 = 0.3;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("placed only {placed} of {requested} components without overlap")]
    PlacementFailure { placed: usize, requested: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// How displacement signs relate to the viewpoint direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignMode {
    /// Opposite viewpoints move in opposite directions.
    #[default]
    Signed,
    /// Every displacement is non-negative, so clamping at zero changes nothing.
    Folded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    pub image_size: ImageSize,
    pub n_components: usize,
    pub num_classes: usize,
    /// Box width/height range in pixels.
    pub size_range: (f64, f64),
    pub height_range: (f64, f64),
    /// Pixels of displacement per unit of height.
    pub disparity_gain: f64,
    pub sign_mode: SignMode,
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            image_size: ImageSize::new(640, 416),
            n_components: 12,
            num_classes: ClassTable::pcb().len(),
            size_range: (24.0, 64.0),
            height_range: (0.0, 4.0),
            disparity_gain: 2.0,
            sign_mode: SignMode::Signed,
            seed: 0,
        }
    }
}

impl SceneParams {
    /// Largest displacement magnitude along one axis.
    pub fn max_displacement(&self) -> f64 {
        self.disparity_gain * self.height_range.1
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidParams(m.to_string()));
        let (smin, smax) = self.size_range;
        let (hmin, hmax) = self.height_range;
        if self.num_classes == 0 {
            return bad("num_classes must be at least 1");
        }
        if !(smin.is_finite() && smax.is_finite() && smin >= 1.0 && smin <= smax) {
            return bad("size_range must satisfy 1 <= min <= max");
        }
        if !(hmin.is_finite() && hmax.is_finite() && hmin >= 0.0 && hmin <= hmax) {
            return bad("height_range must satisfy 0 <= min <= max");
        }
        if !(self.disparity_gain.is_finite() && self.disparity_gain >= 0.0) {
            return bad("disparity_gain must be finite and non-negative");
        }
        let needed = smax + 2.0 * (self.max_displacement() + 1.0);
        let room = self.image_size.width.min(self.image_size.height) as f64;
        if needed >= room {
            return Err(SynthError::InvalidParams(format!(
                "{} image too small for boxes up to {smax} px plus {} px displacement",
                self.image_size,
                self.max_displacement()
            )));
        }
        Ok(())
    }

    pub fn class_table(&self) -> ClassTable {
        let pcb = ClassTable::pcb();
        if self.num_classes == pcb.len() {
            pcb
        } else {
            ClassTable::new((0..self.num_classes).map(|i| format!("class_{i}"))).expect("contiguous names")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorNoise {
    pub jitter_sigma: f64,
    pub miss_prob: f64,
    /// Expected false positives per view.
    pub fp_rate: f64,
    pub confusion_prob: f64,
    pub tp_mean: f64,
    pub tp_sigma: f64,
    pub fp_mean: f64,
    pub fp_sigma: f64,
    pub fp_size_range: (f64, f64),
}

impl Default for DetectorNoise {
    fn default() -> Self {
        Self {
            jitter_sigma: 2.0,
            miss_prob: 0.3,
            fp_rate: 1.0,
            confusion_prob: 0.05,
            tp_mean: 0.8,
            tp_sigma: 0.1,
            fp_mean: 0.4,
            fp_sigma: 0.15,
            fp_size_range: (24.0, 64.0),
        }
    }
}

impl DetectorNoise {
    /// A perfect detector scoring every box `tp_mean`.
    pub fn none() -> Self {
        Self {
            jitter_sigma: 0.0,
            miss_prob: 0.0,
            fp_rate: 0.0,
            confusion_prob: 0.0,
            tp_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidParams(m.to_string()));
        if !(0.0..=1.0).contains(&self.miss_prob) || !(0.0..=1.0).contains(&self.confusion_prob) {
            return bad("probabilities must lie in [0, 1]");
        }
        if !(self.fp_rate.is_finite() && self.fp_rate >= 0.0) {
            return bad("fp_rate must be finite and non-negative");
        }
        for s in [self.jitter_sigma, self.tp_sigma, self.fp_sigma] {
            if !(s.is_finite() && s >= 0.0) {
                return bad("sigmas must be finite and non-negative");
            }
        }
        if !(self.tp_mean.is_finite() && self.fp_mean.is_finite()) {
            return bad("score means must be finite");
        }
        let (a, b) = self.fp_size_range;
        if !(a.is_finite() && b.is_finite() && a >= 1.0 && a <= b) {
            return bad("fp_size_range must satisfy 1 <= min <= max");
        }
        Ok(())
    }
}

/// A raised box in center-view coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub class_id: usize,
    pub bbox: BBox,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// Ground-truth labels in all nine views plus the disparity fields.
    pub frame: KaleidoFrame,
    pub components: Vec<Component>,
}

/// Displacement of a component of the given height in viewpoint `view`.
pub fn displacement(params: &SceneParams, height: f64, view: ViewpointId) -> (f32, f32) {
    let (gx, gy) = view.grid_direction();
    let (gx, gy) = match params.sign_mode {
        SignMode::Signed => (gx as f64, gy as f64),
        SignMode::Folded => (gx.abs() as f64, gy.abs() as f64),
    };
    let mag = params.disparity_gain * height;
    ((mag * gx) as f32, (mag * gy) as f32)
}

fn place_components(params: &SceneParams, rng: &mut DetRng) -> Result<Vec<Component>, SynthError> {
    let (iw, ih) = (params.image_size.width as f64, params.image_size.height as f64);
    let margin = params.max_displacement() + 1.0;
    let mut placed: Vec<Component> = Vec::with_capacity(params.n_components);
    let mut pixels = Vec::with_capacity(params.n_components);
    for _ in 0..params.n_components {
        let mut accepted = false;
        for _ in 0..MAX_PLACEMENT_TRIES {
            let w = rng.range(params.size_range.0, params.size_range.1);
            let h = rng.range(params.size_range.0, params.size_range.1);
            let x = rng.range(margin + w / 2.0, iw - margin - w / 2.0);
            let y = rng.range(margin + h / 2.0, ih - margin - h / 2.0);
            let class_id = rng.below(params.num_classes as u64) as usize;
            let height = rng.range(params.height_range.0, params.height_range.1);
            let bbox = BBox { x, y, w, h };
            let pixel = (
                nearest_index(x, params.image_size.width),
                nearest_index(y, params.image_size.height),
            );
            let clear = !pixels.contains(&pixel) && placed.iter().all(|c| iou(&c.bbox, &bbox) <= MAX_CENTER_IOU);
            if clear {
                placed.push(Component { class_id, bbox, height });
                pixels.push(pixel);
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(SynthError::PlacementFailure {
                placed: placed.len(),
                requested: params.n_components,
            });
        }
    }
    Ok(placed)
}

/// Disparity channel for one axis: each footprint holds its component's
/// displacement, and every center pixel is stamped last so overlaps never
/// disturb the value a box center samples.
fn fill_channel(size: ImageSize, components: &[Component], values: &[f32]) -> Raster {
    let mut r = Raster::filled(size.width, size.height, 0.0);
    for (c, &v) in components.iter().zip(values) {
        let (x1, y1, x2, y2) = c.bbox.corners();
        let c0 = x1.ceil().max(0.0) as u32;
        let c1 = (x2.floor().min(size.width as f64 - 1.0)) as u32;
        let r0 = y1.ceil().max(0.0) as u32;
        let r1 = (y2.floor().min(size.height as f64 - 1.0)) as u32;
        for row in r0..=r1 {
            for col in c0..=c1 {
                r.set(col, row, v);
            }
        }
    }
    for (c, &v) in components.iter().zip(values) {
        r.set(
            nearest_index(c.bbox.x, size.width),
            nearest_index(c.bbox.y, size.height),
            v,
        );
    }
    r
}

pub fn generate_scene(params: &SceneParams) -> Result<Scene, SynthError> {
    params.validate()?;
    let mut rng = DetRng::new(params.seed);
    let components = place_components(params, &mut rng)?;
    let size = params.image_size;

    let mut views = BTreeMap::new();
    let mut disparities = BTreeMap::new();
    views.insert(
        ViewpointId::CENTER,
        components.iter().map(|c| Detection::label(c.class_id, c.bbox)).collect(),
    );
    for view in ViewpointId::surrounding() {
        let shifts: Vec<(f32, f32)> = components.iter().map(|c| displacement(params, c.height, view)).collect();
        let labels = components
            .iter()
            .zip(&shifts)
            .map(|(c, &(dx, dy))| {
                Detection::label(
                    c.class_id,
                    BBox {
                        x: c.bbox.x - dx as f64,
                        y: c.bbox.y - dy as f64,
                        ..c.bbox
                    },
                )
            })
            .collect();
        views.insert(view, labels);
        let dx: Vec<f32> = shifts.iter().map(|s| s.0).collect();
        let dy: Vec<f32> = shifts.iter().map(|s| s.1).collect();
        let field = DisparityField::new(
            view,
            size,
            view.has_dx().then(|| fill_channel(size, &components, &dx)),
            view.has_dy().then(|| fill_channel(size, &components, &dy)),
        )?;
        disparities.insert(view, field);
    }
    let frame = KaleidoFrame::new(shot_id(0), size, views, disparities)?;
    Ok(Scene { frame, components })
}

fn clamp_score(s: f64) -> f64 {
    s.clamp(0.0, 1.0)
}

/// Noisy detector output for one view's ground truth.
pub fn simulate_detector(
    gt: &[Detection],
    image_size: ImageSize,
    num_classes: usize,
    noise: &DetectorNoise,
    rng: &mut DetRng,
) -> Vec<Detection> {
    let mut out = Vec::with_capacity(gt.len());
    let sigma = noise.jitter_sigma;
    for g in gt {
        if rng.bernoulli(noise.miss_prob) {
            continue;
        }
        let b = g.bbox;
        let x = rng.normal(b.x, sigma);
        let y = rng.normal(b.y, sigma);
        let w = rng.normal(b.w, sigma / 2.0).max(1.0);
        let h = rng.normal(b.h, sigma / 2.0).max(1.0);
        let mut class_id = g.class_id;
        if num_classes > 1 && rng.bernoulli(noise.confusion_prob) {
            let other = rng.below(num_classes as u64 - 1) as usize;
            class_id = if other >= g.class_id { other + 1 } else { other };
        }
        let score = clamp_score(rng.normal(noise.tp_mean, noise.tp_sigma));
        out.push(Detection {
            class_id,
            bbox: BBox { x, y, w, h },
            score: Some(score),
        });
    }
    let (iw, ih) = (image_size.width as f64, image_size.height as f64);
    for _ in 0..rng.poisson(noise.fp_rate) {
        let w = rng.range(noise.fp_size_range.0, noise.fp_size_range.1);
        let h = rng.range(noise.fp_size_range.0, noise.fp_size_range.1);
        let x = rng.range(0.0, iw);
        let y = rng.range(0.0, ih);
        let class_id = rng.below(num_classes.max(1) as u64) as usize;
        let score = clamp_score(rng.normal(noise.fp_mean, noise.fp_sigma));
        out.push(Detection {
            class_id,
            bbox: BBox { x, y, w, h },
            score: Some(score),
        });
    }
    out
}

pub fn shot_id(index: usize) -> String {
    format!("shot_{index:04}")
}

/// One generated dataset frame: the exact scene and simulated detections.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFrame {
    pub scene: Scene,
    pub predictions: BTreeMap<ViewpointId, Vec<Detection>>,
}

impl SyntheticFrame {
    /// The frame as inference sees it: predictions in place of labels.
    pub fn prediction_frame(&self) -> KaleidoFrame {
        KaleidoFrame {
            views: self.predictions.clone(),
            ..self.scene.frame.clone()
        }
    }

    pub fn labels(&self, view: ViewpointId) -> &[Detection] {
        self.scene.frame.view(view)
    }
}

/// Detector output for all nine views of a scene, one derived stream per view.
pub fn simulate_views(
    scene: &Scene,
    num_classes: usize,
    noise: &DetectorNoise,
    seed: u64,
) -> BTreeMap<ViewpointId, Vec<Detection>> {
    ViewpointId::all()
        .map(|v| {
            let mut rng = DetRng::new(derive_seed(seed, v.index() as u64));
            let dets = simulate_detector(scene.frame.view(v), scene.frame.image_size, num_classes, noise, &mut rng);
            (v, dets)
        })
        .collect()
}

/// Frame `index` of the dataset seeded by `params.seed`.
pub fn generate_frame(index: usize, params: &SceneParams, noise: &DetectorNoise) -> Result<SyntheticFrame, SynthError> {
    noise.validate()?;
    let frame_seed = derive_seed(params.seed, index as u64);
    let mut scene = generate_scene(&SceneParams {
        seed: frame_seed,
        ..params.clone()
    })?;
    scene.frame.shot_id = shot_id(index);
    let predictions = simulate_views(&scene, params.num_classes, noise, frame_seed);
    Ok(SyntheticFrame { scene, predictions })
}

/// A smooth field for `view`: `amplitude * direction * s(x, y)` with
/// `s = 0.5 + 0.5 sin(2πx/P + a) cos(2πy/P + b)` and random phases.
///
/// Each channel's slope stays below `amplitude * π / period` per pixel.
pub fn smooth_field(
    view: ViewpointId,
    size: ImageSize,
    amplitude: f64,
    period: f64,
    rng: &mut DetRng,
) -> Result<DisparityField, SynthError> {
    if !(amplitude.is_finite() && period.is_finite() && period > 0.0) {
        return Err(SynthError::InvalidParams("amplitude and period must be finite, period > 0".into()));
    }
    let (a, b) = (rng.range(0.0, std::f64::consts::TAU), rng.range(0.0, std::f64::consts::TAU));
    let k = std::f64::consts::TAU / period;
    let (gx, gy) = view.grid_direction();
    let channel = |g: i8| {
        let mut r = Raster::filled(size.width, size.height, 0.0);
        for row in 0..size.height {
            for col in 0..size.width {
                let s = 0.5 + 0.5 * (k * col as f64 + a).sin() * (k * row as f64 + b).cos();
                r.set(col, row, (amplitude * g as f64 * s) as f32);
            }
        }
        r
    };
    Ok(DisparityField::new(
        view,
        size,
        view.has_dx().then(|| channel(gx)),
        view.has_dy().then(|| channel(gy)),
    )?)
}

fn write_frame(out_dir: &Path, entry: &FrameEntry, frame: &SyntheticFrame) -> Result<(), SynthError> {
    for (sources, rels) in [
        (&frame.scene.frame.views, &entry.labels),
        (&frame.predictions, &entry.predictions),
    ] {
        for (view, rel) in rels {
            let tag = DetectionTag {
                frame: entry.shot_id.clone(),
                view: *view,
            };
            io::write_view(out_dir, rel, &sources[view], &tag, entry.image_size)?;
        }
    }
    for (view, paths) in &entry.disparity {
        io::write_disparity(out_dir, paths, &frame.scene.frame.disparities[view])?;
    }
    Ok(())
}

/// Writes `n_frames` frames plus `manifest.json` under `out_dir`.
///
/// Frames are generated in parallel; each draws from its own seed derived
/// from `params.seed`, so the output does not depend on the thread count.
pub fn generate_dataset(
    out_dir: &Path,
    n_frames: usize,
    params: &SceneParams,
    noise: &DetectorNoise,
) -> Result<DatasetManifest, SynthError> {
    params.validate()?;
    noise.validate()?;
    let frames = (0..n_frames)
        .into_par_iter()
        .map(|i| {
            let frame = generate_frame(i, params, noise)?;
            let entry = FrameEntry::with_standard_layout(&frame.scene.frame.shot_id, params.image_size);
            write_frame(out_dir, &entry, &frame)?;
            Ok(entry)
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    let manifest = DatasetManifest::new(params.class_table(), frames);
    io::write_manifest(&out_dir.join("manifest.json"), &manifest)?;
    log::info!("wrote {n_frames} synthetic frames to {}", out_dir.display());
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warp::{forward_warp_set, WarpPolicy};
    use proptest::prelude::*;

    fn v(i: u8) -> ViewpointId {
        ViewpointId::new(i).unwrap()
    }

    fn small() -> SceneParams {
        SceneParams {
            image_size: ImageSize::new(200, 160),
            n_components: 6,
            num_classes: 3,
            size_range: (12.0, 30.0),
            height_range: (0.5, 3.0),
            disparity_gain: 1.5,
            sign_mode: SignMode::Signed,
            seed: 7,
        }
    }

    #[test]
    fn flat_scene_has_identical_views() {
        let scene = generate_scene(&SceneParams {
            height_range: (0.0, 0.0),
            ..small()
        })
        .unwrap();
        let center = scene.frame.view(ViewpointId::CENTER);
        for view in ViewpointId::all() {
            assert_eq!(scene.frame.view(view), center);
        }
        for field in scene.frame.disparities.values() {
            for r in field.dx().iter().chain(field.dy().iter()) {
                assert!(r.data.iter().all(|&d| d == 0.0));
            }
        }
    }

    #[test]
    fn single_component_shifts_by_gain_times_height() {
        let params = SceneParams {
            n_components: 1,
            height_range: (2.0, 2.0),
            disparity_gain: 1.5,
            ..small()
        };
        let scene = generate_scene(&params).unwrap();
        let c = scene.frame.view(ViewpointId::CENTER)[0].bbox;
        let right = scene.frame.view(v(6))[0].bbox;
        assert_eq!((c.x - right.x, c.y - right.y), (3.0, 0.0));
        let top_left = scene.frame.view(v(1))[0].bbox;
        assert_eq!((c.x - top_left.x, c.y - top_left.y), (-3.0, -3.0));
        assert_eq!((right.w, right.h), (c.w, c.h));
    }

    #[test]
    fn folded_mode_is_non_negative() {
        let params = SceneParams {
            sign_mode: SignMode::Folded,
            ..small()
        };
        for view in ViewpointId::all() {
            let (dx, dy) = displacement(&params, 2.0, view);
            assert!(dx >= 0.0 && dy >= 0.0);
        }
        let scene = generate_scene(&params).unwrap();
        let center = scene.frame.view(ViewpointId::CENTER);
        for (&view, field) in &scene.frame.disparities {
            let warped = forward_warp_set(center, field, scene.frame.image_size, &WarpPolicy::labeling());
            assert_eq!(warped.boxes, scene.frame.view(view));
        }
    }

    #[test]
    fn placement_failure_is_reported() {
        let params = SceneParams {
            n_components: 200,
            size_range: (40.0, 40.0),
            ..small()
        };
        assert!(matches!(
            generate_scene(&params),
            Err(SynthError::PlacementFailure { requested: 200, .. })
        ));
        let tiny = SceneParams {
            image_size: ImageSize::new(20, 20),
            ..small()
        };
        assert!(matches!(generate_scene(&tiny), Err(SynthError::InvalidParams(_))));
    }

    #[test]
    fn zero_noise_detector_is_exact() {
        let scene = generate_scene(&small()).unwrap();
        let gt = scene.frame.view(ViewpointId::CENTER);
        let noise = DetectorNoise::none();
        let dets = simulate_detector(gt, small().image_size, 3, &noise, &mut DetRng::new(1));
        let expected: Vec<Detection> = gt
            .iter()
            .map(|g| Detection {
                score: Some(noise.tp_mean),
                ..*g
            })
            .collect();
        assert_eq!(dets, expected);
    }

    #[test]
    fn full_miss_leaves_only_false_positives() {
        let scene = generate_scene(&small()).unwrap();
        let gt = scene.frame.view(ViewpointId::CENTER);
        let noise = DetectorNoise {
            miss_prob: 1.0,
            fp_rate: 3.0,
            ..DetectorNoise::default()
        };
        let mut rng = DetRng::new(5);
        let mut total = 0;
        for _ in 0..200 {
            let dets = simulate_detector(gt, small().image_size, 3, &noise, &mut rng);
            assert!(dets.iter().all(|d| !gt.iter().any(|g| g.bbox == d.bbox)));
            total += dets.len();
        }
        assert!((total as f64 / 200.0 - 3.0).abs() < 3.0 * (3.0f64 / 200.0).sqrt());
    }

    #[test]
    fn empirical_rates_match_parameters() {
        let gt: Vec<Detection> = (0..10_000)
            .map(|i| Detection::label(i % 3, BBox::new(50.0, 50.0, 20.0, 20.0).unwrap()))
            .collect();
        let noise = DetectorNoise {
            miss_prob: 0.3,
            confusion_prob: 0.1,
            fp_rate: 0.0,
            ..DetectorNoise::default()
        };
        let dets = simulate_detector(&gt, ImageSize::new(100, 100), 3, &noise, &mut DetRng::new(11));
        let n = gt.len() as f64;
        let miss = 1.0 - dets.len() as f64 / n;
        let sd = (0.3 * 0.7 / n).sqrt();
        assert!((miss - 0.3).abs() < 3.0 * sd, "miss rate {miss}");

        // without misses, survivors line up with gt one to one
        let noise = DetectorNoise {
            miss_prob: 0.0,
            ..noise
        };
        let dets = simulate_detector(&gt, ImageSize::new(100, 100), 3, &noise, &mut DetRng::new(12));
        assert_eq!(dets.len(), gt.len());
        let confused = dets.iter().zip(&gt).filter(|(d, g)| d.class_id != g.class_id).count() as f64;
        let sd = (0.1 * 0.9 / n).sqrt();
        assert!((confused / n - 0.1).abs() < 3.0 * sd, "confusion rate {}", confused / n);
        assert!(dets.iter().all(|d| d.class_id < 3));
    }

    #[test]
    fn determinism_and_round_trip() {
        let params = small();
        let noise = DetectorNoise::default();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let m = generate_dataset(a.path(), 7, &params, &noise).unwrap();
        generate_dataset(b.path(), 7, &params, &noise).unwrap();
        let stats = crate::model::validate_manifest(&m, Some(a.path())).unwrap();
        assert_eq!((stats.frames, stats.view_images, stats.disparity_channels), (7, 63, 84));

        for entry in &m.frames {
            let paths = entry
                .labels
                .values()
                .chain(entry.predictions.values())
                .chain(entry.disparity.values().flat_map(|p| p.x.iter().chain(p.y.iter())));
            for rel in paths {
                assert_eq!(
                    std::fs::read(a.path().join(rel)).unwrap(),
                    std::fs::read(b.path().join(rel)).unwrap()
                );
            }
        }
        assert_eq!(
            std::fs::read(a.path().join("manifest.json")).unwrap(),
            std::fs::read(b.path().join("manifest.json")).unwrap()
        );

        let frame = generate_frame(3, &params, &noise).unwrap();
        let labels = io::load_frame(a.path(), &m.frames[3], io::ViewSource::Labels).unwrap();
        assert_eq!(labels, frame.scene.frame);
        let preds = io::load_frame(a.path(), &m.frames[3], io::ViewSource::Predictions).unwrap();
        assert_eq!(preds, frame.prediction_frame());
    }

    #[test]
    fn smooth_field_respects_its_slope_bound() {
        let size = ImageSize::new(120, 90);
        let (amplitude, period) = (6.0, 48.0);
        let bound = amplitude * std::f64::consts::PI / period;
        let field = smooth_field(v(1), size, amplitude, period, &mut DetRng::new(2)).unwrap();
        for r in [field.dx().unwrap(), field.dy().unwrap()] {
            for row in 0..size.height {
                for col in 1..size.width {
                    let step = (r.get(col, row) - r.get(col - 1, row)).abs() as f64;
                    assert!(step <= bound + 1e-5, "{step}");
                }
            }
            assert!(r.data.iter().all(|&d| d.abs() <= amplitude as f32));
        }
        assert!(field.dy().unwrap().data.iter().any(|&d| d < -1.0));
        assert!(smooth_field(v(4), size, 1.0, 8.0, &mut DetRng::new(2)).unwrap().dy().is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn forward_warp_reproduces_views(seed in any::<u64>(), signed in any::<bool>()) {
            let params = SceneParams {
                seed,
                sign_mode: if signed { SignMode::Signed } else { SignMode::Folded },
                ..small()
            };
            let scene = generate_scene(&params).unwrap();
            let center = scene.frame.view(ViewpointId::CENTER);
            let policy = WarpPolicy::labeling().with_clamp(false);
            for (&view, field) in &scene.frame.disparities {
                let warped = forward_warp_set(center, field, scene.frame.image_size, &policy);
                prop_assert_eq!(&warped.boxes, scene.frame.view(view));
                prop_assert!(warped.flags.is_empty());
            }
            for (i, a) in scene.components.iter().enumerate() {
                for b in &scene.components[i + 1..] {
                    prop_assert!(iou(&a.bbox, &b.bbox) <= MAX_CENTER_IOU);
                }
            }
        }
    }
}
