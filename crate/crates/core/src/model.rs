//! Core domain types: boxes, detections, viewpoints, disparity fields, frames
//! and the dataset manifest.
//!
//! Coordinates are pixels in center format with the origin at the top-left
//! corner and `y` growing downward, the same convention used to index
//! disparity rasters. Normalized formats only exist at the I/O boundary.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Current manifest schema version.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid box ({x}, {y}, {w}, {h}): width/height must be > 0 and all values finite")]
    InvalidBox { x: f64, y: f64, w: f64, h: f64 },
    #[error("score {0} outside [0, 1]")]
    InvalidScore(f64),
    #[error("viewpoint index {0} outside 1..=9")]
    InvalidViewpoint(u8),
    #[error("invalid class table: {0}")]
    InvalidClassTable(String),
    #[error("class id {class_id} not in class table of {len} entries")]
    UnknownClass { class_id: usize, len: usize },
    #[error("disparity field for viewpoint {target}: {reason}")]
    ChannelLayout { target: ViewpointId, reason: String },
    #[error("raster is {found_w}x{found_h}, expected {expected_w}x{expected_h}")]
    RasterSize {
        expected_w: u32,
        expected_h: u32,
        found_w: u32,
        found_h: u32,
    },
    #[error("frame {shot_id}: missing disparity field for viewpoint {view}")]
    MissingDisparity { shot_id: String, view: ViewpointId },
}

/// Ordered class taxonomy; ids are contiguous from zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ClassEntry>", into = "Vec<ClassEntry>")]
pub struct ClassTable {
    names: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClassEntry {
    id: usize,
    name: String,
}

impl ClassTable {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, ModelError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut seen = HashSet::new();
        for name in &names {
            if name.trim().is_empty() {
                return Err(ModelError::InvalidClassTable("empty class name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(ModelError::InvalidClassTable(format!(
                    "duplicate class name {name:?}"
                )));
            }
        }
        Ok(Self { names })
    }

    /// The eleven PCB component classes.
    pub fn pcb() -> Self {
        Self::new([
            "C", "D", "IC", "L", "R", "XTAL", "LED", "Q", "AL_C", "RY", "FI",
        ])
        .expect("static table is valid")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, class_id: usize) -> Option<&str> {
        self.names.get(class_id).map(String::as_str)
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn check(&self, class_id: usize) -> Result<(), ModelError> {
        if class_id < self.names.len() {
            Ok(())
        } else {
            Err(ModelError::UnknownClass {
                class_id,
                len: self.names.len(),
            })
        }
    }
}

impl TryFrom<Vec<ClassEntry>> for ClassTable {
    type Error = ModelError;

    fn try_from(entries: Vec<ClassEntry>) -> Result<Self, Self::Error> {
        for (expected, entry) in entries.iter().enumerate() {
            if entry.id != expected {
                return Err(ModelError::InvalidClassTable(format!(
                    "class ids must be contiguous from 0; found id {} at position {expected}",
                    entry.id
                )));
            }
        }
        Self::new(entries.into_iter().map(|e| e.name))
    }
}

impl From<ClassTable> for Vec<ClassEntry> {
    fn from(table: ClassTable) -> Self {
        table
            .names
            .into_iter()
            .enumerate()
            .map(|(id, name)| ClassEntry { id, name })
            .collect()
    }
}

/// Axis-aligned box in pixel center format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, ModelError> {
        let b = Self { x, y, w, h };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(ModelError::InvalidBox { x, y, w, h })
        }
    }

    /// Builds a box from corner coordinates `(x1, y1, x2, y2)`.
    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, ModelError> {
        Self::new((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
            && self.w > 0.0
            && self.h > 0.0
    }

    /// `(x1, y1, x2, y2)`.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        let hw = self.w / 2.0;
        let hh = self.h / 2.0;
        (self.x - hw, self.y - hh, self.x + hw, self.y + hh)
    }

    pub fn area(&self) -> f64 {
        let (x1, y1, x2, y2) = self.corners();
        (x2 - x1) * (y2 - y1)
    }

    pub fn center_inside(&self, size: ImageSize) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.x < size.width as f64 && self.y < size.height as f64
    }
}

/// A labelled box. Ground truth carries no score; predictions always do.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub class_id: usize,
    pub bbox: BBox,
    pub score: Option<f64>,
}

impl Detection {
    pub fn label(class_id: usize, bbox: BBox) -> Self {
        Self {
            class_id,
            bbox,
            score: None,
        }
    }

    pub fn scored(class_id: usize, bbox: BBox, score: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(ModelError::InvalidScore(score));
        }
        Ok(Self {
            class_id,
            bbox,
            score: Some(score),
        })
    }

    pub fn is_ground_truth(&self) -> bool {
        self.score.is_none()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.bbox.is_valid() {
            let BBox { x, y, w, h } = self.bbox;
            return Err(ModelError::InvalidBox { x, y, w, h });
        }
        match self.score {
            Some(s) if !(0.0..=1.0).contains(&s) => Err(ModelError::InvalidScore(s)),
            _ => Ok(()),
        }
    }

    pub fn with_bbox(self, bbox: BBox) -> Self {
        Self { bbox, ..self }
    }
}

/// Image dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl ImageSize {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }
}

impl fmt::Display for ImageSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Position on the 3x3 viewpoint grid, numbered row-major from 1; 5 is the center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ViewpointId(u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewKind {
    Center,
    /// Displaced along a single axis (2, 4, 6, 8).
    Edge,
    /// Displaced along both axes (1, 3, 7, 9).
    Corner,
}

impl ViewpointId {
    pub const CENTER: ViewpointId = ViewpointId(5);

    pub fn new(index: u8) -> Result<Self, ModelError> {
        if (1..=9).contains(&index) {
            Ok(Self(index))
        } else {
            Err(ModelError::InvalidViewpoint(index))
        }
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = ViewpointId> {
        (1..=9).map(ViewpointId)
    }

    /// The eight non-center viewpoints in index order.
    pub fn surrounding() -> impl Iterator<Item = ViewpointId> {
        Self::all().filter(|v| !v.is_center())
    }

    pub fn is_center(self) -> bool {
        self.0 == 5
    }

    pub fn kind(self) -> ViewKind {
        match self.0 {
            5 => ViewKind::Center,
            2 | 4 | 6 | 8 => ViewKind::Edge,
            _ => ViewKind::Corner,
        }
    }

    /// Grid direction relative to the center: v4 = (-1, 0), v6 = (1, 0),
    /// v2 = (0, -1), v8 = (0, 1), corners the diagonal combinations.
    pub fn grid_direction(self) -> (i8, i8) {
        let i = self.0 as i8 - 1;
        (i % 3 - 1, i / 3 - 1)
    }

    /// Whether disparity towards this viewpoint has a horizontal channel.
    pub fn has_dx(self) -> bool {
        self.grid_direction().0 != 0
    }

    /// Whether disparity towards this viewpoint has a vertical channel.
    pub fn has_dy(self) -> bool {
        self.grid_direction().1 != 0
    }

    pub fn channel_count(self) -> usize {
        self.has_dx() as usize + self.has_dy() as usize
    }
}

impl TryFrom<u8> for ViewpointId {
    type Error = ModelError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ViewpointId> for u8 {
    fn from(v: ViewpointId) -> u8 {
        v.0
    }
}

impl fmt::Display for ViewpointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Single-channel float raster, row-major, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl Raster {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Option<Self> {
        (data.len() == width as usize * height as usize && width > 0 && height > 0).then_some(
            Self {
                width,
                height,
                data,
            },
        )
    }

    pub fn filled(width: u32, height: u32, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn get(&self, col: u32, row: u32) -> f32 {
        self.data[row as usize * self.width as usize + col as usize]
    }

    pub fn set(&mut self, col: u32, row: u32, value: f32) {
        self.data[row as usize * self.width as usize + col as usize] = value;
    }

    pub fn size(&self) -> ImageSize {
        ImageSize::new(self.width, self.height)
    }
}

/// Per-pixel displacement from the center view to `target`.
///
/// A missing channel is identically zero. Edge targets 4/6 only carry `dx`,
/// 2/8 only `dy`; corner targets carry both.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityField {
    target: ViewpointId,
    size: ImageSize,
    dx: Option<Raster>,
    dy: Option<Raster>,
}

impl DisparityField {
    pub fn new(
        target: ViewpointId,
        size: ImageSize,
        dx: Option<Raster>,
        dy: Option<Raster>,
    ) -> Result<Self, ModelError> {
        let layout_err = |reason: &str| ModelError::ChannelLayout {
            target,
            reason: reason.to_string(),
        };
        if target.is_center() {
            return Err(layout_err("the center view has no disparity field"));
        }
        match (target.has_dx(), dx.is_some()) {
            (true, false) => return Err(layout_err("missing horizontal channel")),
            (false, true) => return Err(layout_err("unexpected horizontal channel")),
            _ => {}
        }
        match (target.has_dy(), dy.is_some()) {
            (true, false) => return Err(layout_err("missing vertical channel")),
            (false, true) => return Err(layout_err("unexpected vertical channel")),
            _ => {}
        }
        for r in dx.iter().chain(dy.iter()) {
            if r.size() != size {
                return Err(ModelError::RasterSize {
                    expected_w: size.width,
                    expected_h: size.height,
                    found_w: r.width,
                    found_h: r.height,
                });
            }
        }
        Ok(Self {
            target,
            size,
            dx,
            dy,
        })
    }

    /// Constant field; the value of an axis the target does not move along is ignored.
    pub fn constant(target: ViewpointId, size: ImageSize, dx: f32, dy: f32) -> Result<Self, ModelError> {
        let dx = target
            .has_dx()
            .then(|| Raster::filled(size.width, size.height, dx));
        let dy = target
            .has_dy()
            .then(|| Raster::filled(size.width, size.height, dy));
        Self::new(target, size, dx, dy)
    }

    pub fn zeros(target: ViewpointId, size: ImageSize) -> Result<Self, ModelError> {
        Self::constant(target, size, 0.0, 0.0)
    }

    pub fn target(&self) -> ViewpointId {
        self.target
    }

    pub fn size(&self) -> ImageSize {
        self.size
    }

    pub fn dx(&self) -> Option<&Raster> {
        self.dx.as_ref()
    }

    pub fn dy(&self) -> Option<&Raster> {
        self.dy.as_ref()
    }

    pub fn channel_count(&self) -> usize {
        self.dx.is_some() as usize + self.dy.is_some() as usize
    }

    /// Raw signed displacement at a raster pixel.
    pub fn at_pixel(&self, col: u32, row: u32) -> (f64, f64) {
        let dx = self.dx.as_ref().map_or(0.0, |r| r.get(col, row) as f64);
        let dy = self.dy.as_ref().map_or(0.0, |r| r.get(col, row) as f64);
        (dx, dy)
    }
}

/// One kaleidoscopic shot.
#[derive(Debug, Clone, PartialEq)]
pub struct KaleidoFrame {
    pub shot_id: String,
    pub image_size: ImageSize,
    pub views: BTreeMap<ViewpointId, Vec<Detection>>,
    pub disparities: BTreeMap<ViewpointId, DisparityField>,
}

impl KaleidoFrame {
    pub fn new(
        shot_id: impl Into<String>,
        image_size: ImageSize,
        views: BTreeMap<ViewpointId, Vec<Detection>>,
        disparities: BTreeMap<ViewpointId, DisparityField>,
    ) -> Result<Self, ModelError> {
        let frame = Self {
            shot_id: shot_id.into(),
            image_size,
            views,
            disparities,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for v in ViewpointId::surrounding() {
            let field = self
                .disparities
                .get(&v)
                .ok_or_else(|| ModelError::MissingDisparity {
                    shot_id: self.shot_id.clone(),
                    view: v,
                })?;
            if field.target() != v {
                return Err(ModelError::ChannelLayout {
                    target: v,
                    reason: format!("stored under {v} but targets {}", field.target()),
                });
            }
            if field.size() != self.image_size {
                return Err(ModelError::RasterSize {
                    expected_w: self.image_size.width,
                    expected_h: self.image_size.height,
                    found_w: field.size().width,
                    found_h: field.size().height,
                });
            }
        }
        for dets in self.views.values() {
            for d in dets {
                d.validate()?;
            }
        }
        Ok(())
    }

    pub fn view(&self, v: ViewpointId) -> &[Detection] {
        self.views.get(&v).map_or(&[], Vec::as_slice)
    }

    pub fn disparity(&self, v: ViewpointId) -> Option<&DisparityField> {
        self.disparities.get(&v)
    }
}

/// File locations of the one or two channels of a disparity map.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisparityPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<PathBuf>,
}

impl DisparityPaths {
    pub fn channel_count(&self) -> usize {
        self.x.is_some() as usize + self.y.is_some() as usize
    }
}

/// One shot in the manifest. Paths are relative to the manifest directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub shot_id: String,
    pub image_size: ImageSize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<ViewpointId, PathBuf>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub predictions: BTreeMap<ViewpointId, PathBuf>,
    pub disparity: BTreeMap<ViewpointId, DisparityPaths>,
}

impl FrameEntry {
    /// Entry with the canonical on-disk layout used by the generator.
    pub fn with_standard_layout(shot_id: &str, image_size: ImageSize) -> Self {
        let labels = ViewpointId::all()
            .map(|v| (v, PathBuf::from(format!("labels/v{v}/{shot_id}.jsonl"))))
            .collect();
        let predictions = ViewpointId::all()
            .map(|v| (v, PathBuf::from(format!("predictions/v{v}/{shot_id}.jsonl"))))
            .collect();
        let disparity = ViewpointId::surrounding()
            .map(|v| {
                let path = |axis: &str| PathBuf::from(format!("disparity/v{v}/{shot_id}.{axis}.pfm"));
                (
                    v,
                    DisparityPaths {
                        x: v.has_dx().then(|| path("x")),
                        y: v.has_dy().then(|| path("y")),
                    },
                )
            })
            .collect();
        Self {
            shot_id: shot_id.to_string(),
            image_size,
            labels,
            predictions,
            disparity,
        }
    }

    fn referenced_paths(&self) -> impl Iterator<Item = &PathBuf> {
        self.labels
            .values()
            .chain(self.predictions.values())
            .chain(
                self.disparity
                    .values()
                    .flat_map(|p| p.x.iter().chain(p.y.iter())),
            )
    }
}

/// Corpus index. Frames group by `shot_id` for splitting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub classes: ClassTable,
    pub frames: Vec<FrameEntry>,
}

impl DatasetManifest {
    pub fn new(classes: ClassTable, frames: Vec<FrameEntry>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            classes,
            frames,
        }
    }

    pub fn shot_ids(&self) -> Vec<String> {
        self.frames.iter().map(|f| f.shot_id.clone()).collect()
    }

    pub fn frame(&self, shot_id: &str) -> Option<&FrameEntry> {
        self.frames.iter().find(|f| f.shot_id == shot_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ManifestStats {
    pub frames: usize,
    pub view_images: usize,
    pub disparity_maps: usize,
    pub disparity_channels: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ManifestIssue {
    DuplicateShotId {
        shot_id: String,
    },
    MissingDisparity {
        shot_id: String,
        view: ViewpointId,
    },
    ChannelLayout {
        shot_id: String,
        view: ViewpointId,
    },
    MissingFile {
        shot_id: String,
        path: PathBuf,
    },
    DimensionMismatch {
        shot_id: String,
        path: PathBuf,
        expected: ImageSize,
        found: ImageSize,
    },
    Unreadable {
        shot_id: String,
        path: PathBuf,
        reason: String,
    },
}

impl fmt::Display for ManifestIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DuplicateShotId { shot_id } => write!(f, "{shot_id}: duplicate shot id"),
            Self::MissingDisparity { shot_id, view } => {
                write!(f, "{shot_id}: no disparity map for viewpoint {view}")
            }
            Self::ChannelLayout { shot_id, view } => write!(
                f,
                "{shot_id}: viewpoint {view} disparity must declare {} channel(s) ({})",
                view.channel_count(),
                match (view.has_dx(), view.has_dy()) {
                    (true, true) => "x and y",
                    (true, false) => "x only",
                    _ => "y only",
                }
            ),
            Self::MissingFile { shot_id, path } => {
                write!(f, "{shot_id}: missing file {}", path.display())
            }
            Self::DimensionMismatch {
                shot_id,
                path,
                expected,
                found,
            } => write!(
                f,
                "{shot_id}: {} is {found}, frame is {expected}",
                path.display()
            ),
            Self::Unreadable {
                shot_id,
                path,
                reason,
            } => write!(f, "{shot_id}: cannot read {}: {reason}", path.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("manifest validation failed with {} issue(s)", issues.len())]
pub struct ManifestErrors {
    pub issues: Vec<ManifestIssue>,
}

/// Counts the dataset and checks its structure.
///
/// With `root` set, every referenced file must exist under it and every
/// disparity raster must match the frame dimensions.
pub fn validate_manifest(
    manifest: &DatasetManifest,
    root: Option<&Path>,
) -> Result<ManifestStats, ManifestErrors> {
    let mut issues = Vec::new();
    let mut seen = HashSet::new();
    let mut disparity_maps = 0;
    let mut disparity_channels = 0;

    for frame in &manifest.frames {
        let shot_id = &frame.shot_id;
        if !seen.insert(shot_id.as_str()) {
            issues.push(ManifestIssue::DuplicateShotId {
                shot_id: shot_id.clone(),
            });
        }
        for view in ViewpointId::surrounding() {
            match frame.disparity.get(&view) {
                None => issues.push(ManifestIssue::MissingDisparity {
                    shot_id: shot_id.clone(),
                    view,
                }),
                Some(paths) => {
                    if paths.x.is_some() != view.has_dx() || paths.y.is_some() != view.has_dy() {
                        issues.push(ManifestIssue::ChannelLayout {
                            shot_id: shot_id.clone(),
                            view,
                        });
                    }
                    disparity_maps += 1;
                    disparity_channels += paths.channel_count();
                }
            }
        }
        if frame.disparity.contains_key(&ViewpointId::CENTER) {
            issues.push(ManifestIssue::ChannelLayout {
                shot_id: shot_id.clone(),
                view: ViewpointId::CENTER,
            });
        }

        if let Some(root) = root {
            check_files(frame, root, &mut issues);
        }
    }

    if issues.is_empty() {
        let frames = manifest.frames.len();
        Ok(ManifestStats {
            frames,
            view_images: 9 * frames,
            disparity_maps,
            disparity_channels,
        })
    } else {
        Err(ManifestErrors { issues })
    }
}

fn check_files(frame: &FrameEntry, root: &Path, issues: &mut Vec<ManifestIssue>) {
    let shot_id = &frame.shot_id;
    for rel in frame.referenced_paths() {
        if !root.join(rel).is_file() {
            issues.push(ManifestIssue::MissingFile {
                shot_id: shot_id.clone(),
                path: rel.clone(),
            });
        }
    }
    for paths in frame.disparity.values() {
        for rel in paths.x.iter().chain(paths.y.iter()) {
            let full = root.join(rel);
            if !full.is_file() {
                continue;
            }
            match crate::io::read_pfm_size(&full) {
                Ok(found) if found != frame.image_size => {
                    issues.push(ManifestIssue::DimensionMismatch {
                        shot_id: shot_id.clone(),
                        path: rel.clone(),
                        expected: frame.image_size,
                        found,
                    })
                }
                Ok(_) => {}
                Err(e) => issues.push(ManifestIssue::Unreadable {
                    shot_id: shot_id.clone(),
                    path: rel.clone(),
                    reason: e.to_string(),
                }),
            }
        }
    }
}
