//! Disparity-driven box transport between viewpoints.
//!
//! Forward warping moves center-view labels into viewpoint `v` by subtracting
//! the displacement sampled at the box center. Backward warping brings
//! viewpoint detections into center-view coordinates before fusion.
//!
//! Pixel `(i, j)` of a raster is centered on the point `(i, j)`; sampling picks
//! the nearest pixel and clamps out-of-raster points onto the border.

use thiserror::Error;

use crate::model::{BBox, Detection, DisparityField, ImageSize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BorderMode {
    /// Drop boxes whose center leaves the frame; keep the rest as they are.
    DropIfCenterOutside,
    /// Clip the extent to the frame, dropping boxes left with no area.
    ClipToFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleMode {
    #[default]
    NearestPixel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BackwardMode {
    /// Add the displacement sampled at the viewpoint-space center.
    DirectAdd,
    /// Solve `p - d(p) = q` for the center-view point `p` by iteration from `q`.
    FixedPoint { max_iters: u32, tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpPolicy {
    pub clamp_nonnegative: bool,
    pub border_mode: BorderMode,
    pub sample_mode: SampleMode,
    pub backward_mode: BackwardMode,
}

impl Default for WarpPolicy {
    fn default() -> Self {
        Self::labeling()
    }
}

impl WarpPolicy {
    /// Label generalization defaults: clamp on, clip to frame.
    pub fn labeling() -> Self {
        Self {
            clamp_nonnegative: true,
            border_mode: BorderMode::ClipToFrame,
            sample_mode: SampleMode::NearestPixel,
            backward_mode: BackwardMode::DirectAdd,
        }
    }

    /// Inference defaults: clamp on, drop boxes whose center leaves the frame.
    pub fn inference() -> Self {
        Self {
            border_mode: BorderMode::DropIfCenterOutside,
            ..Self::labeling()
        }
    }

    pub fn with_clamp(self, clamp_nonnegative: bool) -> Self {
        Self {
            clamp_nonnegative,
            ..self
        }
    }

    pub fn with_backward(self, backward_mode: BackwardMode) -> Self {
        Self {
            backward_mode,
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), WarpError> {
        if let BackwardMode::FixedPoint { max_iters, tol } = self.backward_mode {
            if max_iters == 0 || !(tol > 0.0 && tol.is_finite()) {
                return Err(WarpError::InvalidPolicy(format!(
                    "fixed point needs max_iters >= 1 and tol > 0 (got {max_iters}, {tol})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WarpError {
    #[error("fixed-point backward warp did not converge in {iters} iterations (last step {last_step} px)")]
    NonConvergence { iters: u32, last_step: f64 },
    #[error("invalid warp policy: {0}")]
    InvalidPolicy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BorderAction {
    Dropped,
    Clipped,
    /// Extent crosses the border but the box was kept unchanged.
    Kept,
}

/// Marks a box that touched the frame border during warping and needs review.
#[derive(Debug, Clone, PartialEq)]
pub struct BorderFlag {
    /// Position of the box in the input list.
    pub index: usize,
    pub action: BorderAction,
    pub warped: Detection,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WarpedSet {
    pub boxes: Vec<Detection>,
    pub flags: Vec<BorderFlag>,
}

pub(crate) fn nearest_index(coord: f64, len: u32) -> u32 {
    // `as` saturates, NaN maps to 0
    let idx = coord.round() as i64;
    idx.clamp(0, len as i64 - 1) as u32
}

/// Displacement `(m, n)` at the raster pixel nearest to `point`.
pub fn sample_displacement(field: &DisparityField, point: (f64, f64), policy: &WarpPolicy) -> (f64, f64) {
    let size = field.size();
    let SampleMode::NearestPixel = policy.sample_mode;
    let col = nearest_index(point.0, size.width);
    let row = nearest_index(point.1, size.height);
    let (dx, dy) = field.at_pixel(col, row);
    if policy.clamp_nonnegative {
        (dx.max(0.0), dy.max(0.0))
    } else {
        (dx, dy)
    }
}

/// Moves a center-view box into the field's target viewpoint.
pub fn forward_warp_box(det: &Detection, field: &DisparityField, policy: &WarpPolicy) -> Detection {
    let (m, n) = sample_displacement(field, (det.bbox.x, det.bbox.y), policy);
    det.with_bbox(BBox {
        x: det.bbox.x - m,
        y: det.bbox.y - n,
        ..det.bbox
    })
}

/// Moves a viewpoint-space box back into center-view coordinates.
pub fn backward_warp_box(
    det: &Detection,
    field: &DisparityField,
    policy: &WarpPolicy,
) -> Result<Detection, WarpError> {
    let q = (det.bbox.x, det.bbox.y);
    let (x, y) = match policy.backward_mode {
        BackwardMode::DirectAdd => {
            let (m, n) = sample_displacement(field, q, policy);
            (q.0 + m, q.1 + n)
        }
        BackwardMode::FixedPoint { max_iters, tol } => {
            let mut p = q;
            let mut last_step = f64::INFINITY;
            let mut solved = None;
            for _ in 0..max_iters {
                let (m, n) = sample_displacement(field, p, policy);
                let next = (q.0 + m, q.1 + n);
                last_step = (next.0 - p.0).abs().max((next.1 - p.1).abs());
                p = next;
                if last_step <= tol {
                    solved = Some(p);
                    break;
                }
            }
            solved.ok_or(WarpError::NonConvergence {
                iters: max_iters,
                last_step,
            })?
        }
    };
    Ok(det.with_bbox(BBox { x, y, ..det.bbox }))
}

fn apply_border(index: usize, det: Detection, size: ImageSize, mode: BorderMode, out: &mut WarpedSet) {
    let (x1, y1, x2, y2) = det.bbox.corners();
    let (fw, fh) = (size.width as f64, size.height as f64);
    let crosses = x1 < 0.0 || y1 < 0.0 || x2 > fw || y2 > fh;
    if !crosses {
        out.boxes.push(det);
        return;
    }
    let flag = |action, warped| BorderFlag {
        index,
        action,
        warped,
    };
    match mode {
        BorderMode::DropIfCenterOutside => {
            if det.bbox.center_inside(size) {
                out.boxes.push(det);
                out.flags.push(flag(BorderAction::Kept, det));
            } else {
                out.flags.push(flag(BorderAction::Dropped, det));
            }
        }
        BorderMode::ClipToFrame => {
            let cx1 = x1.clamp(0.0, fw);
            let cy1 = y1.clamp(0.0, fh);
            let cx2 = x2.clamp(0.0, fw);
            let cy2 = y2.clamp(0.0, fh);
            match BBox::from_corners(cx1, cy1, cx2, cy2) {
                Ok(clipped) => {
                    let clipped = det.with_bbox(clipped);
                    out.boxes.push(clipped);
                    out.flags.push(flag(BorderAction::Clipped, clipped));
                }
                Err(_) => out.flags.push(flag(BorderAction::Dropped, det)),
            }
        }
    }
}

/// Forward-warps every center-view box and applies the border policy.
pub fn forward_warp_set(
    boxes: &[Detection],
    field: &DisparityField,
    image_size: ImageSize,
    policy: &WarpPolicy,
) -> WarpedSet {
    let mut out = WarpedSet::default();
    for (i, det) in boxes.iter().enumerate() {
        let warped = forward_warp_box(det, field, policy);
        apply_border(i, warped, image_size, policy.border_mode, &mut out);
    }
    out
}

/// Backward-warps every viewpoint box into the center view and applies the border policy.
pub fn backward_warp_set(
    boxes: &[Detection],
    field: &DisparityField,
    image_size: ImageSize,
    policy: &WarpPolicy,
) -> Result<WarpedSet, WarpError> {
    policy.validate()?;
    let mut out = WarpedSet::default();
    for (i, det) in boxes.iter().enumerate() {
        let warped = backward_warp_box(det, field, policy)?;
        apply_border(i, warped, image_size, policy.border_mode, &mut out);
    }
    Ok(out)
}
