//! Readers and writers for detections, disparity rasters and manifests.
//!
//! Detection files come in two flavours:
//!
//! - JSON lines (native): one object per line,
//!   `{"frame":..,"view":..,"class":..,"x":..,"y":..,"w":..,"h":..,"score":..}`
//!   in pixels; `score` is omitted for ground truth.
//! - YOLO text: `class x y w h [score]`, coordinates normalized by the image
//!   size and written with six decimals.
//!
//! Disparity channels are single-channel PFM files; corner viewpoints use two
//! files, `*.x.pfm` and `*.y.pfm`.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    BBox, DatasetManifest, Detection, DisparityField, DisparityPaths, FrameEntry, ImageSize, KaleidoFrame, ModelError,
    Raster, ViewpointId, SCHEMA_VERSION,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {cause}", path.display())]
    Io {
        path: PathBuf,
        cause: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: field `{field}` out of range")]
    Range { line: usize, field: &'static str },
    #[error("YOLO text needs the image size to convert normalized coordinates")]
    MissingImageSize,
    #[error("not a single-channel PFM file (magic {0:?})")]
    BadMagic(String),
    #[error("bad PFM dimensions: {0}")]
    BadDimensions(String),
    #[error("non-finite value at raster index {index}")]
    NonFiniteValue { index: usize },
    #[error("manifest schema version {found}, expected {expected}")]
    SchemaVersionMismatch { found: u64, expected: u32 },
    #[error("unknown manifest fields: {}", .0.join(", "))]
    UnknownFields(Vec<String>),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("{context}: {cause}")]
    Model {
        context: String,
        cause: ModelError,
    },
    #[error("{}: {cause}", path.display())]
    InFile {
        path: PathBuf,
        cause: Box<IoError>,
    },
}

impl IoError {
    fn io(path: &Path, cause: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            cause,
        }
    }

    fn in_file(self, path: &Path) -> Self {
        match self {
            e @ (Self::Io { .. } | Self::InFile { .. }) => e,
            e => Self::InFile {
                path: path.to_path_buf(),
                cause: Box::new(e),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionFormat {
    JsonLines,
    YoloTxt,
}

impl DetectionFormat {
    /// `.jsonl` / `.json` → JSON lines, `.txt` → YOLO.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "jsonl" | "json" => Some(Self::JsonLines),
            "txt" => Some(Self::YoloTxt),
            _ => None,
        }
    }
}

/// Frame and viewpoint written alongside each JSON-lines detection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionTag {
    pub frame: String,
    pub view: ViewpointId,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonDetection {
    frame: String,
    view: ViewpointId,
    class: usize,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

/// A detection together with the tag stored next to it.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedDetection {
    pub tag: DetectionTag,
    pub detection: Detection,
}

fn check_detection(line: usize, d: &Detection) -> Result<(), IoError> {
    let b = &d.bbox;
    for (field, v) in [("x", b.x), ("y", b.y), ("w", b.w), ("h", b.h)] {
        if !v.is_finite() {
            return Err(IoError::Range { line, field });
        }
    }
    if b.w.is_nan() || b.w <= 0.0 {
        return Err(IoError::Range { line, field: "w" });
    }
    if b.h.is_nan() || b.h <= 0.0 {
        return Err(IoError::Range { line, field: "h" });
    }
    if let Some(s) = d.score {
        if !(0.0..=1.0).contains(&s) {
            return Err(IoError::Range { line, field: "score" });
        }
    }
    Ok(())
}

/// Parses JSON-lines detections, keeping the frame/view tags.
pub fn parse_json_lines(text: &str) -> Result<Vec<TaggedDetection>, IoError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: JsonDetection = serde_json::from_str(raw).map_err(|e| IoError::Parse {
            line,
            message: format!("column {}: {e}", e.column()),
        })?;
        let detection = Detection {
            class_id: rec.class,
            bbox: BBox {
                x: rec.x,
                y: rec.y,
                w: rec.w,
                h: rec.h,
            },
            score: rec.score,
        };
        check_detection(line, &detection)?;
        out.push(TaggedDetection {
            tag: DetectionTag {
                frame: rec.frame,
                view: rec.view,
            },
            detection,
        });
    }
    Ok(out)
}

fn parse_field<T: std::str::FromStr>(line: usize, token: &str, field: &'static str) -> Result<T, IoError> {
    token.parse().map_err(|_| IoError::Parse {
        line,
        message: format!("cannot parse `{token}` as {field}"),
    })
}

/// Parses YOLO text and converts it to pixels.
pub fn parse_yolo(text: &str, image_size: ImageSize) -> Result<Vec<Detection>, IoError> {
    let (iw, ih) = (image_size.width as f64, image_size.height as f64);
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() != 5 && tokens.len() != 6 {
            return Err(IoError::Parse {
                line,
                message: format!("expected 5 or 6 fields, found {}", tokens.len()),
            });
        }
        let class: usize = parse_field(line, tokens[0], "class")?;
        let mut vals = [0.0f64; 4];
        for (k, (tok, field)) in tokens[1..5].iter().zip(["x", "y", "w", "h"]).enumerate() {
            let v: f64 = parse_field(line, tok, field)?;
            let ok = if k < 2 {
                (0.0..=1.0).contains(&v)
            } else {
                v > 0.0 && v <= 1.0
            };
            if !ok {
                return Err(IoError::Range { line, field });
            }
            vals[k] = v;
        }
        let score = match tokens.get(5) {
            Some(tok) => {
                let s: f64 = parse_field(line, tok, "score")?;
                if !(0.0..=1.0).contains(&s) {
                    return Err(IoError::Range { line, field: "score" });
                }
                Some(s)
            }
            None => None,
        };
        out.push(Detection {
            class_id: class,
            bbox: BBox {
                x: vals[0] * iw,
                y: vals[1] * ih,
                w: vals[2] * iw,
                h: vals[3] * ih,
            },
            score,
        });
    }
    Ok(out)
}

pub fn parse_detections(
    text: &str,
    format: DetectionFormat,
    image_size: Option<ImageSize>,
) -> Result<Vec<Detection>, IoError> {
    match format {
        DetectionFormat::JsonLines => Ok(parse_json_lines(text)?.into_iter().map(|t| t.detection).collect()),
        DetectionFormat::YoloTxt => parse_yolo(text, image_size.ok_or(IoError::MissingImageSize)?),
    }
}

pub fn read_detections(
    path: &Path,
    format: DetectionFormat,
    image_size: Option<ImageSize>,
) -> Result<Vec<Detection>, IoError> {
    if format == DetectionFormat::YoloTxt && image_size.is_none() {
        return Err(IoError::MissingImageSize);
    }
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_detections(&text, format, image_size).map_err(|e| e.in_file(path))
}

pub fn format_detections(
    dets: &[Detection],
    format: DetectionFormat,
    image_size: Option<ImageSize>,
    tag: &DetectionTag,
) -> Result<String, IoError> {
    let mut out = String::new();
    match format {
        DetectionFormat::JsonLines => {
            for d in dets {
                let rec = JsonDetection {
                    frame: tag.frame.clone(),
                    view: tag.view,
                    class: d.class_id,
                    x: d.bbox.x,
                    y: d.bbox.y,
                    w: d.bbox.w,
                    h: d.bbox.h,
                    score: d.score,
                };
                out.push_str(&serde_json::to_string(&rec).expect("detection serializes"));
                out.push('\n');
            }
        }
        DetectionFormat::YoloTxt => {
            let size = image_size.ok_or(IoError::MissingImageSize)?;
            let (iw, ih) = (size.width as f64, size.height as f64);
            for d in dets {
                let b = &d.bbox;
                out.push_str(&format!(
                    "{} {:.6} {:.6} {:.6} {:.6}",
                    d.class_id,
                    b.x / iw,
                    b.y / ih,
                    b.w / iw,
                    b.h / ih
                ));
                if let Some(s) = d.score {
                    out.push_str(&format!(" {s:.6}"));
                }
                out.push('\n');
            }
        }
    }
    Ok(out)
}

pub fn write_detections(
    path: &Path,
    dets: &[Detection],
    format: DetectionFormat,
    image_size: Option<ImageSize>,
    tag: &DetectionTag,
) -> Result<(), IoError> {
    let text = format_detections(dets, format, image_size, tag)?;
    write_file(path, text.as_bytes())
}

/// Writes a file, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| IoError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}

struct PfmHeader {
    width: u32,
    height: u32,
    little_endian: bool,
    data_offset: usize,
}

fn parse_pfm_header(bytes: &[u8]) -> Result<PfmHeader, IoError> {
    let mut pos = 0;
    let mut token = || -> Option<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token().unwrap_or_default();
    if magic != "Pf" {
        return Err(IoError::BadMagic(magic));
    }
    let mut dim = |name: &str| -> Result<u32, IoError> {
        let tok = token().ok_or_else(|| IoError::BadDimensions(format!("missing {name}")))?;
        match tok.parse::<u32>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(IoError::BadDimensions(format!("{name} `{tok}`"))),
        }
    };
    let width = dim("width")?;
    let height = dim("height")?;
    let scale_tok = token().ok_or_else(|| IoError::BadDimensions("missing scale".into()))?;
    let scale: f64 = scale_tok
        .parse()
        .ok()
        .filter(|s: &f64| s.is_finite() && *s != 0.0)
        .ok_or_else(|| IoError::BadDimensions(format!("scale `{scale_tok}`")))?;
    // exactly one whitespace byte separates the header from the data
    if pos >= bytes.len() {
        return Err(IoError::BadDimensions("header not terminated".into()));
    }
    Ok(PfmHeader {
        width,
        height,
        little_endian: scale < 0.0,
        data_offset: pos + 1,
    })
}

/// Decodes a single-channel PFM; rows are returned top row first.
pub fn decode_pfm(bytes: &[u8]) -> Result<Raster, IoError> {
    let header = parse_pfm_header(bytes)?;
    let (w, h) = (header.width as usize, header.height as usize);
    let data = &bytes[header.data_offset.min(bytes.len())..];
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| IoError::BadDimensions("size overflow".into()))?;
    if data.len() != expected {
        return Err(IoError::BadDimensions(format!(
            "{w}x{h} needs {expected} data bytes, found {}",
            data.len()
        )));
    }
    let mut values = vec![0f32; w * h];
    for (i, chunk) in data.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if header.little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        // stored bottom row first
        let (file_row, col) = (i / w, i % w);
        let idx = (h - 1 - file_row) * w + col;
        if !v.is_finite() {
            return Err(IoError::NonFiniteValue { index: idx });
        }
        values[idx] = v;
    }
    Ok(Raster::new(header.width, header.height, values).expect("dimensions checked"))
}

/// Encodes as little-endian PFM (`Pf`, scale `-1.0`), bottom row first.
pub fn encode_pfm(raster: &Raster) -> Vec<u8> {
    let header = format!("Pf\n{} {}\n-1.0\n", raster.width, raster.height);
    let w = raster.width as usize;
    let mut out = Vec::with_capacity(header.len() + raster.data.len() * 4);
    out.extend_from_slice(header.as_bytes());
    for row in raster.data.chunks_exact(w).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_pfm(path: &Path) -> Result<Raster, IoError> {
    let bytes = fs::read(path).map_err(|e| IoError::io(path, e))?;
    decode_pfm(&bytes).map_err(|e| e.in_file(path))
}

/// Reads only the header.
pub fn read_pfm_size(path: &Path) -> Result<ImageSize, IoError> {
    let file = fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut head = Vec::with_capacity(128);
    file.take(128).read_to_end(&mut head).map_err(|e| IoError::io(path, e))?;
    let header = parse_pfm_header(&head).map_err(|e| e.in_file(path))?;
    Ok(ImageSize::new(header.width, header.height))
}

pub fn write_pfm(path: &Path, raster: &Raster) -> Result<(), IoError> {
    write_file(path, &encode_pfm(raster))
}

/// Loads both channels of a disparity map declared in a manifest.
pub fn read_disparity(root: &Path, paths: &DisparityPaths, target: ViewpointId, size: ImageSize) -> Result<DisparityField, IoError> {
    let load = |p: &Option<PathBuf>| p.as_ref().map(|p| read_pfm(&root.join(p))).transpose();
    let dx = load(&paths.x)?;
    let dy = load(&paths.y)?;
    DisparityField::new(target, size, dx, dy).map_err(|cause| IoError::Model {
        context: format!("disparity for viewpoint {target}"),
        cause,
    })
}

pub fn write_disparity(root: &Path, paths: &DisparityPaths, field: &DisparityField) -> Result<(), IoError> {
    for (path, raster) in [(&paths.x, field.dx()), (&paths.y, field.dy())] {
        match (path, raster) {
            (Some(p), Some(r)) => write_pfm(&root.join(p), r)?,
            (None, None) => {}
            _ => {
                return Err(IoError::Manifest(format!(
                    "viewpoint {} channel paths do not match the field",
                    field.target()
                )))
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    /// Unknown fields are an error.
    #[default]
    Strict,
    /// Unknown fields are logged and skipped.
    Lenient,
}

/// Parses a manifest; returns it with the list of ignored field paths.
pub fn parse_manifest(text: &str, strictness: Strictness) -> Result<(DatasetManifest, Vec<String>), IoError> {
    let json_err = |e: serde_json::Error| IoError::Parse {
        line: e.line(),
        message: e.to_string(),
    };
    let value: serde_json::Value = serde_json::from_str(text).map_err(json_err)?;
    match value.get("schema_version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(found) => {
            return Err(IoError::SchemaVersionMismatch {
                found,
                expected: SCHEMA_VERSION,
            })
        }
        None => return Err(IoError::Manifest("missing integer `schema_version`".into())),
    }
    let mut ignored = Vec::new();
    let mut de = serde_json::Deserializer::from_str(text);
    let manifest: DatasetManifest =
        serde_ignored::deserialize(&mut de, |path| ignored.push(path.to_string())).map_err(json_err)?;
    if !ignored.is_empty() {
        match strictness {
            Strictness::Strict => return Err(IoError::UnknownFields(ignored)),
            Strictness::Lenient => {
                for f in &ignored {
                    log::warn!("ignoring unknown manifest field {f}");
                }
            }
        }
    }
    Ok((manifest, ignored))
}

pub fn read_manifest(path: &Path, strictness: Strictness) -> Result<DatasetManifest, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_manifest(&text, strictness)
        .map(|(m, _)| m)
        .map_err(|e| e.in_file(path))
}

/// Canonical pretty JSON with a trailing newline.
pub fn manifest_to_string(manifest: &DatasetManifest) -> String {
    let mut s = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    s.push('\n');
    s
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<(), IoError> {
    write_file(path, manifest_to_string(manifest).as_bytes())
}

/// Which per-view detection files of a frame to load.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewSource {
    Labels,
    Predictions,
}

fn detection_format(path: &Path) -> Result<DetectionFormat, IoError> {
    DetectionFormat::from_path(path).ok_or_else(|| {
        IoError::Manifest(format!(
            "{}: unknown detection file extension (expected .jsonl or .txt)",
            path.display()
        ))
    })
}

/// Loads a manifest frame: the chosen per-view detections plus all disparity fields.
pub fn load_frame(root: &Path, entry: &FrameEntry, source: ViewSource) -> Result<KaleidoFrame, IoError> {
    let files = match source {
        ViewSource::Labels => &entry.labels,
        ViewSource::Predictions => &entry.predictions,
    };
    let mut views = std::collections::BTreeMap::new();
    for (&view, rel) in files {
        let path = root.join(rel);
        let dets = read_detections(&path, detection_format(rel)?, Some(entry.image_size))?;
        views.insert(view, dets);
    }
    let mut disparities = std::collections::BTreeMap::new();
    for (&view, paths) in &entry.disparity {
        disparities.insert(view, read_disparity(root, paths, view, entry.image_size)?);
    }
    KaleidoFrame::new(entry.shot_id.clone(), entry.image_size, views, disparities).map_err(|cause| IoError::Model {
        context: format!("frame {}", entry.shot_id),
        cause,
    })
}

/// Writes one view's detections to the path the manifest declares for it.
pub fn write_view(root: &Path, rel: &Path, dets: &[Detection], tag: &DetectionTag, size: ImageSize) -> Result<(), IoError> {
    write_detections(&root.join(rel), dets, detection_format(rel)?, Some(size), tag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ClassTable;
    use proptest::prelude::*;

    fn tag() -> DetectionTag {
        DetectionTag {
            frame: "shot_0001".into(),
            view: ViewpointId::new(3).unwrap(),
        }
    }

    #[test]
    fn yolo_line_denormalizes() {
        let dets = parse_yolo("2 0.5 0.5 0.1 0.2 0.9\n", ImageSize::new(1000, 800)).unwrap();
        assert_eq!(
            dets,
            vec![Detection::scored(2, BBox::new(500.0, 400.0, 100.0, 160.0).unwrap(), 0.9).unwrap()]
        );
    }

    #[test]
    fn empty_inputs() {
        assert!(parse_yolo("", ImageSize::new(10, 10)).unwrap().is_empty());
        assert!(parse_json_lines("\n\n").unwrap().is_empty());
    }

    #[test]
    fn yolo_errors_carry_line_and_field() {
        let size = ImageSize::new(10, 10);
        assert!(matches!(
            parse_yolo("2 1.5 0.5 0.1 0.1\n", size),
            Err(IoError::Range { line: 1, field: "x" })
        ));
        assert!(matches!(
            parse_yolo("0 0.5 0.5 0.1 0.1\n1 0.5 0.5 0 0.1\n", size),
            Err(IoError::Range { line: 2, field: "w" })
        ));
        assert!(matches!(
            parse_yolo("0 0.5 0.5 0.1 0.1 1.2\n", size),
            Err(IoError::Range { line: 1, field: "score" })
        ));
        assert!(matches!(parse_yolo("0 0.5 0.5\n", size), Err(IoError::Parse { line: 1, .. })));
        assert!(matches!(parse_yolo("x 0.5 0.5 0.1 0.1\n", size), Err(IoError::Parse { line: 1, .. })));
        assert!(matches!(
            parse_detections("0 0.5 0.5 0.1 0.1", DetectionFormat::YoloTxt, None),
            Err(IoError::MissingImageSize)
        ));
    }

    #[test]
    fn json_line_errors() {
        let good = r#"{"frame":"a","view":5,"class":1,"x":1.0,"y":2.0,"w":3.0,"h":4.0}"#;
        assert_eq!(parse_json_lines(good).unwrap()[0].detection.score, None);
        let bad_view = r#"{"frame":"a","view":0,"class":1,"x":1.0,"y":2.0,"w":3.0,"h":4.0}"#;
        assert!(matches!(parse_json_lines(bad_view), Err(IoError::Parse { line: 1, .. })));
        let neg_w = format!("{good}\n{}", good.replace("\"w\":3.0", "\"w\":-3.0"));
        assert!(matches!(parse_json_lines(&neg_w), Err(IoError::Range { line: 2, field: "w" })));
        let extra = good.replace("}", ",\"extra\":1}");
        assert!(parse_json_lines(&extra).is_err());
        assert!(parse_json_lines("{not json").is_err());
    }

    #[test]
    fn yolo_writer_matches_hand_computation() {
        let d = Detection::scored(4, BBox::new(250.0, 100.0, 50.0, 40.0).unwrap(), 0.25).unwrap();
        let text = format_detections(&[d], DetectionFormat::YoloTxt, Some(ImageSize::new(1000, 800)), &tag()).unwrap();
        assert_eq!(text, "4 0.250000 0.125000 0.050000 0.050000 0.250000\n");
        let label = Detection::label(0, BBox::new(1.0, 1.0, 2.0, 2.0).unwrap());
        let text = format_detections(&[label], DetectionFormat::YoloTxt, Some(ImageSize::new(4, 4)), &tag()).unwrap();
        assert_eq!(text, "0 0.250000 0.250000 0.500000 0.500000\n");
    }

    #[test]
    fn json_writer_is_stable() {
        let d = Detection::scored(1, BBox::new(10.5, 20.25, 3.0, 4.0).unwrap(), 0.5).unwrap();
        let text = format_detections(&[d], DetectionFormat::JsonLines, None, &tag()).unwrap();
        assert_eq!(
            text,
            "{\"frame\":\"shot_0001\",\"view\":3,\"class\":1,\"x\":10.5,\"y\":20.25,\"w\":3.0,\"h\":4.0,\"score\":0.5}\n"
        );
    }

    #[test]
    fn pfm_zero_and_flip() {
        let zeros = Raster::filled(2, 2, 0.0);
        assert_eq!(decode_pfm(&encode_pfm(&zeros)).unwrap(), zeros);

        // rows 0 and 1 of a 2x3 raster are distinct; the file must hold row 1 first
        let r = Raster::new(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let bytes = encode_pfm(&r);
        let header = b"Pf\n3 2\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        let first: Vec<f32> = bytes[header.len()..header.len() + 12]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        assert_eq!(first, vec![4.0, 5.0, 6.0]);
        assert_eq!(decode_pfm(&bytes).unwrap(), r);
    }

    #[test]
    fn pfm_big_endian_and_errors() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&1.5f32.to_be_bytes());
        bytes.extend_from_slice(&(-2.0f32).to_be_bytes());
        assert_eq!(decode_pfm(&bytes).unwrap().data, vec![1.5, -2.0]);

        assert!(matches!(decode_pfm(b"PF\n1 1\n-1.0\n\0\0\0\0"), Err(IoError::BadMagic(_))));
        assert!(matches!(decode_pfm(b"Pf\n0 1\n-1.0\n"), Err(IoError::BadDimensions(_))));
        assert!(matches!(decode_pfm(b"Pf\n2 2\n-1.0\n\0\0\0\0"), Err(IoError::BadDimensions(_))));
        let mut nan = b"Pf\n1 1\n-1.0\n".to_vec();
        nan.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_pfm(&nan), Err(IoError::NonFiniteValue { index: 0 })));
        assert!(decode_pfm(b"").is_err());
    }

    fn manifest() -> DatasetManifest {
        DatasetManifest::new(
            ClassTable::pcb(),
            vec![FrameEntry::with_standard_layout("shot_0000", ImageSize::new(64, 48))],
        )
    }

    #[test]
    fn manifest_round_trip_and_strictness() {
        let text = manifest_to_string(&manifest());
        let (back, ignored) = parse_manifest(&text, Strictness::Strict).unwrap();
        assert!(ignored.is_empty());
        assert_eq!(back, manifest());
        assert_eq!(manifest_to_string(&back), text);

        let extra = text.replacen("\"schema_version\": 1,", "\"schema_version\": 1,\n  \"note\": \"x\",", 1);
        assert!(matches!(parse_manifest(&extra, Strictness::Strict), Err(IoError::UnknownFields(_))));
        let (_, ignored) = parse_manifest(&extra, Strictness::Lenient).unwrap();
        assert_eq!(ignored, vec!["note".to_string()]);

        let v2 = text.replacen("\"schema_version\": 1", "\"schema_version\": 2", 1);
        assert!(matches!(
            parse_manifest(&v2, Strictness::Strict),
            Err(IoError::SchemaVersionMismatch { found: 2, .. })
        ));
        assert!(parse_manifest("{", Strictness::Strict).is_err());
    }

    #[test]
    fn corrupted_path_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = manifest();
        let entry = &mut m.frames[0];
        for (view, rel) in entry.labels.clone() {
            let tag = DetectionTag {
                frame: entry.shot_id.clone(),
                view,
            };
            write_view(dir.path(), &rel, &[], &tag, entry.image_size).unwrap();
        }
        for (view, rel) in entry.predictions.clone() {
            let tag = DetectionTag {
                frame: entry.shot_id.clone(),
                view,
            };
            write_view(dir.path(), &rel, &[], &tag, entry.image_size).unwrap();
        }
        for (&view, paths) in &entry.disparity {
            let field = DisparityField::zeros(view, entry.image_size).unwrap();
            write_disparity(dir.path(), paths, &field).unwrap();
        }
        let stats = crate::model::validate_manifest(&m, Some(dir.path())).unwrap();
        assert_eq!((stats.frames, stats.view_images, stats.disparity_channels), (1, 9, 12));

        let frame = load_frame(dir.path(), &m.frames[0], ViewSource::Labels).unwrap();
        assert_eq!(frame.disparities.len(), 8);

        m.frames[0].labels.insert(ViewpointId::CENTER, "labels/v5/nope.jsonl".into());
        let err = crate::model::validate_manifest(&m, Some(dir.path())).unwrap_err();
        assert_eq!(err.issues.len(), 1);
        assert!(matches!(&err.issues[0], crate::model::ManifestIssue::MissingFile { shot_id, .. } if shot_id == "shot_0000"));
    }

    #[test]
    fn dimension_mismatch_detected() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = manifest();
        m.frames[0].labels.clear();
        m.frames[0].predictions.clear();
        for (&view, paths) in &m.frames[0].disparity {
            let size = if view.index() == 1 { ImageSize::new(10, 10) } else { ImageSize::new(64, 48) };
            write_disparity(dir.path(), paths, &DisparityField::zeros(view, size).unwrap()).unwrap();
        }
        let err = crate::model::validate_manifest(&m, Some(dir.path())).unwrap_err();
        assert_eq!(err.issues.len(), 2);
        assert!(err
            .issues
            .iter()
            .all(|i| matches!(i, crate::model::ManifestIssue::DimensionMismatch { .. })));
    }

    fn arb_det() -> impl Strategy<Value = Detection> {
        (0usize..11, 0.0f64..1000.0, 0.0f64..800.0, 0.5f64..200.0, 0.5f64..200.0, prop::option::of(0.0f64..=1.0))
            .prop_map(|(c, x, y, w, h, s)| Detection {
                class_id: c,
                bbox: BBox { x, y, w, h },
                score: s,
            })
    }

    proptest! {
        #[test]
        fn json_lines_round_trip_exactly(dets in prop::collection::vec(arb_det(), 0..100)) {
            let text = format_detections(&dets, DetectionFormat::JsonLines, None, &tag()).unwrap();
            let back = parse_json_lines(&text).unwrap();
            prop_assert!(back.iter().all(|t| t.tag == tag()));
            let back: Vec<Detection> = back.into_iter().map(|t| t.detection).collect();
            prop_assert_eq!(back, dets);
        }

        #[test]
        fn yolo_round_trip_within_six_decimals(dets in prop::collection::vec(arb_det(), 0..100)) {
            let size = ImageSize::new(1000, 800);
            let dets: Vec<Detection> = dets.into_iter()
                .filter(|d| d.bbox.w < 999.0 && d.bbox.h < 799.0)
                .collect();
            let text = format_detections(&dets, DetectionFormat::YoloTxt, Some(size), &tag()).unwrap();
            prop_assert_eq!(&text, &format_detections(&dets, DetectionFormat::YoloTxt, Some(size), &tag()).unwrap());
            let back = parse_yolo(&text, size).unwrap();
            prop_assert_eq!(back.len(), dets.len());
            for (a, b) in back.iter().zip(&dets) {
                prop_assert_eq!(a.class_id, b.class_id);
                prop_assert!((a.bbox.x - b.bbox.x).abs() <= 5e-7 * 1000.0 + 1e-9);
                prop_assert!((a.bbox.y - b.bbox.y).abs() <= 5e-7 * 800.0 + 1e-9);
                prop_assert!((a.bbox.w - b.bbox.w).abs() <= 5e-7 * 1000.0 + 1e-9);
                prop_assert!((a.bbox.h - b.bbox.h).abs() <= 5e-7 * 800.0 + 1e-9);
                match (a.score, b.score) {
                    (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 5e-7 + 1e-12),
                    (None, None) => {}
                    _ => prop_assert!(false),
                }
            }
        }

        #[test]
        fn pfm_round_trip(w in 1u32..8, h in 1u32..8, seed in any::<u32>()) {
            let data: Vec<f32> = (0..w * h).map(|i| (i ^ seed) as f32 * 0.25 - 3.0).collect();
            let r = Raster::new(w, h, data).unwrap();
            prop_assert_eq!(decode_pfm(&encode_pfm(&r)).unwrap(), r);
        }

        #[test]
        fn parsers_never_panic(text in ".{0,200}") {
            let _ = parse_json_lines(&text);
            let _ = parse_yolo(&text, ImageSize::new(10, 10));
            let _ = decode_pfm(text.as_bytes());
            let _ = parse_manifest(&text, Strictness::Lenient);
        }
    }
}
