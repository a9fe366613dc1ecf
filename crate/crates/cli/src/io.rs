//! On-disk formats: dataset directories, feature sidecars, checkpoints,
//! calibrations, hypotheses and report tables.
//!
//! Everything here is `f32`; features survive a write/read cycle bit-exactly.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use mtaf_core::siamese::DenseLayer;
use mtaf_core::synthgen::{GtSpan, SynthDataset};
use mtaf_core::{BBox, CameraId, Detection, Feature, Frame, Provenance, SiameseModel, ThresholdCalibration};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub type S = f32;

pub const FEATURE_MAGIC: &[u8; 4] = b"MTAF";
pub const FEATURE_VERSION: u8 = 1;
pub const MANIFEST_VERSION: u32 = 1;

pub const FEATURES_FILE: &str = "features.bin";
pub const GT_FILE: &str = "gt.csv";
pub const TRACKS_FILE: &str = "tracks.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn camera_file(camera: CameraId) -> String {
    format!("cam_{camera}.csv")
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

pub fn ensure_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Parent directories are created as needed.
pub fn ensure_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<BufWriter<File>>> {
    ensure_parent(path)?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::io(path, source),
        other => CliError::format(path, format!("{other:?}")),
    }
}

fn flush<W: Write>(path: &Path, mut w: csv::Writer<W>) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

/// A header plus rows; all cells are already formatted.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    flush(path, w)
}

fn read_rows<R: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<R>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(open(path)?);
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub fn write_json<V: Serialize>(path: &Path, value: &V) -> CliResult<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::format(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<V: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<V> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))
}

// ---------------------------------------------------------------- features

pub fn write_features(path: &Path, rows: &[&Feature<S>], dim: usize) -> CliResult<()> {
    ensure_parent(path)?;
    let mut w = create(path)?;
    let mut buf = Vec::with_capacity(13 + rows.len() * dim * 4);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.push(FEATURE_VERSION);
    buf.extend_from_slice(&(rows.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    for f in rows {
        if f.dim() != dim {
            return Err(CliError::format(path, format!("feature of dimension {} in a {dim}-d file", f.dim())));
        }
        for v in f.as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

/// Rows are taken as stored: no renormalization, so all-zero rows stay flagged.
pub fn read_features(path: &Path) -> CliResult<(Vec<Feature<S>>, usize)> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes).map_err(|e| CliError::io(path, e))?;
    if bytes.len() < 13 || &bytes[..4] != FEATURE_MAGIC {
        return Err(CliError::format(path, "missing MTAF header"));
    }
    if bytes[4] != FEATURE_VERSION {
        return Err(CliError::format(path, format!("unsupported version {}", bytes[4])));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (count, dim) = (word(5), word(9));
    let body = &bytes[13..];
    if body.len() != count * dim * 4 {
        return Err(CliError::format(
            path,
            format!("expected {} payload bytes for {count} x {dim}, found {}", count * dim * 4, body.len()),
        ));
    }
    let values: Vec<S> = body
        .chunks_exact(4)
        .map(|c| S::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let rows = if dim == 0 {
        vec![Feature::from_unit(Vec::new()); count]
    } else {
        values.chunks_exact(dim).map(|c| Feature::from_unit(c.to_vec())).collect()
    };
    Ok((rows, dim))
}

// ----------------------------------------------------------------- dataset

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DetectionRow {
    frame: Frame,
    target_id: i64,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    conf: f64,
    feature_row: usize,
}

const DETECTION_HEADER: [&str; 8] = ["frame", "target_id", "x", "y", "w", "h", "conf", "feature_row"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtRow {
    pub camera: CameraId,
    pub frame: Frame,
    pub identity: i64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

const GT_HEADER: [&str; 7] = ["camera", "frame", "identity", "x", "y", "w", "h"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub cameras: Vec<CameraId>,
    pub detection_count: usize,
    pub feature_dim: usize,
    pub identity_count: usize,
    pub frame_range: Option<(Frame, Frame)>,
    pub seed: u64,
    pub split: u64,
    pub files: Vec<String>,
}

/// Detections in feature-row order plus the camera list from the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub detections: Vec<Detection<S>>,
    pub cameras: Vec<CameraId>,
    pub feature_dim: usize,
}

fn fmt_f64(v: f64) -> String {
    // shortest representation that parses back to the same value
    format!("{v}")
}

pub fn write_dataset(dir: &Path, data: &SynthDataset<S>) -> CliResult<Manifest> {
    ensure_dir(dir)?;
    let dets = &data.detections;
    let cameras: Vec<CameraId> = (0..data.config.cameras).collect();
    let mut files = Vec::new();
    for &c in &cameras {
        let name = camera_file(c);
        let path = dir.join(&name);
        let mut w = csv_writer(&path)?;
        w.write_record(DETECTION_HEADER).map_err(|e| csv_err(&path, e))?;
        for (row, d) in dets.iter().enumerate().filter(|(_, d)| d.camera == c) {
            w.write_record([
                d.frame.to_string(),
                d.gt_identity.unwrap_or(-1).to_string(),
                fmt_f64(d.bbox.x),
                fmt_f64(d.bbox.y),
                fmt_f64(d.bbox.w),
                fmt_f64(d.bbox.h),
                "1".to_string(),
                row.to_string(),
            ])
            .map_err(|e| csv_err(&path, e))?;
        }
        flush(&path, w)?;
        files.push(name);
    }

    let feats: Vec<&Feature<S>> = dets.iter().map(|d| &d.feature).collect();
    write_features(&dir.join(FEATURES_FILE), &feats, data.config.feature_dim)?;
    files.push(FEATURES_FILE.to_string());

    let gt: Vec<BoxRow> = dets
        .iter()
        .filter_map(|d| d.gt_identity.map(|id| BoxRow::of(d, id)))
        .collect();
    write_boxes(&dir.join(GT_FILE), &gt)?;
    files.push(GT_FILE.to_string());

    let path = dir.join(TRACKS_FILE);
    let mut rows = Vec::new();
    for (id, spans) in &data.gt_tracks {
        for GtSpan { camera, start, end } in spans {
            rows.push(vec![id.to_string(), camera.to_string(), start.to_string(), end.to_string()]);
        }
    }
    write_table(&path, &["identity", "camera", "start", "end"], &rows)?;
    files.push(TRACKS_FILE.to_string());

    let ids: BTreeSet<i64> = dets.iter().filter_map(|d| d.gt_identity).collect();
    let frame_range = match (dets.iter().map(|d| d.frame).min(), dets.iter().map(|d| d.frame).max()) {
        (Some(a), Some(b)) => Some((a, b)),
        _ => None,
    };
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        cameras,
        detection_count: dets.len(),
        feature_dim: data.config.feature_dim,
        identity_count: ids.len(),
        frame_range,
        seed: data.config.seed,
        split: data.config.split,
        files,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Reads a dataset directory. Detections come back in feature-row order,
/// which is the order they were written in.
pub fn read_dataset(dir: &Path) -> CliResult<Dataset> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
    let fpath = dir.join(FEATURES_FILE);
    let (features, dim) = read_features(&fpath)?;
    if dim != manifest.feature_dim {
        return Err(CliError::format(&fpath, format!("dimension {dim} but manifest says {}", manifest.feature_dim)));
    }
    let mut slots: Vec<Option<Detection<S>>> = vec![None; features.len()];
    for &c in &manifest.cameras {
        let path = dir.join(camera_file(c));
        for row in read_rows::<DetectionRow>(&path)? {
            let slot = slots
                .get_mut(row.feature_row)
                .ok_or_else(|| CliError::format(&path, format!("feature_row {} out of range", row.feature_row)))?;
            if slot.is_some() {
                return Err(CliError::format(&path, format!("feature_row {} used twice", row.feature_row)));
            }
            *slot = Some(Detection {
                camera: c,
                frame: row.frame,
                bbox: BBox {
                    x: row.x,
                    y: row.y,
                    w: row.w,
                    h: row.h,
                },
                feature: features[row.feature_row].clone(),
                gt_identity: (row.target_id >= 0).then_some(row.target_id),
            });
        }
    }
    let detections: Vec<Detection<S>> = slots.into_iter().flatten().collect();
    if detections.len() != features.len() || detections.len() != manifest.detection_count {
        return Err(CliError::format(
            dir,
            format!(
                "{} detection rows, {} feature rows, manifest says {}",
                detections.len(),
                features.len(),
                manifest.detection_count
            ),
        ));
    }
    Ok(Dataset {
        detections,
        cameras: manifest.cameras,
        feature_dim: dim,
    })
}

// -------------------------------------------------- ground truth and hypotheses

/// One labelled box; the row type of both ground-truth and hypothesis files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxRow {
    pub camera: CameraId,
    pub frame: Frame,
    pub bbox: BBox,
    pub identity: i64,
}

impl BoxRow {
    pub fn of<T>(d: &Detection<T>, identity: i64) -> Self {
        BoxRow {
            camera: d.camera,
            frame: d.frame,
            bbox: d.bbox,
            identity,
        }
    }

    /// Exact match key: camera, frame and the box's bit patterns.
    pub fn key(&self) -> (CameraId, Frame, [u64; 4]) {
        let b = self.bbox;
        (self.camera, self.frame, [b.x.to_bits(), b.y.to_bits(), b.w.to_bits(), b.h.to_bits()])
    }
}

pub fn write_boxes(path: &Path, rows: &[BoxRow]) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(GT_HEADER).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.camera.to_string(),
            r.frame.to_string(),
            r.identity.to_string(),
            fmt_f64(r.bbox.x),
            fmt_f64(r.bbox.y),
            fmt_f64(r.bbox.w),
            fmt_f64(r.bbox.h),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    flush(path, w)
}

pub fn read_boxes(path: &Path) -> CliResult<Vec<BoxRow>> {
    Ok(read_rows::<GtRow>(path)?
        .into_iter()
        .map(|r| BoxRow {
            camera: r.camera,
            frame: r.frame,
            bbox: BBox {
                x: r.x,
                y: r.y,
                w: r.w,
                h: r.h,
            },
            identity: r.identity,
        })
        .collect())
}

/// Hypothesis rows share the ground-truth schema, one per input detection.
pub fn write_hypothesis(path: &Path, dets: &[Detection<S>], identities: &[u32]) -> CliResult<()> {
    let rows: Vec<BoxRow> = dets
        .iter()
        .zip(identities)
        .map(|(d, &id)| BoxRow::of(d, id as i64))
        .collect();
    write_boxes(path, &rows)
}

// -------------------------------------------------------------- checkpoints

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub input: usize,
    pub output: usize,
    /// Output-major: entry `o * input + i` connects input `i` to output `o`.
    pub weights: Vec<S>,
    pub bias: Vec<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub scheme: String,
    pub tau: Option<Frame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub init: u64,
    pub sampler: u64,
    pub shuffle: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub dims: Vec<usize>,
    pub layers: Vec<LayerRecord>,
    pub temperature: S,
    pub provenance: ProvenanceRecord,
    pub seeds: SeedRecord,
    pub pair_count: usize,
    pub epochs: usize,
    pub final_loss: f64,
    pub final_accuracy: f64,
}

pub const CHECKPOINT_VERSION: u32 = 1;

fn provenance_record(p: Provenance) -> ProvenanceRecord {
    ProvenanceRecord {
        scheme: p.scheme_name().to_string(),
        tau: p.tau(),
    }
}

fn parse_provenance(path: &Path, r: &ProvenanceRecord) -> CliResult<Provenance> {
    let tau = || r.tau.ok_or_else(|| CliError::format(path, format!("scheme {} needs a tau", r.scheme)));
    Ok(match r.scheme.as_str() {
        "intra" => Provenance::Intra { tau: tau()? },
        "inter" => Provenance::Inter { tau: tau()? },
        "global" => Provenance::Global,
        "untrained" => Provenance::Untrained,
        other => return Err(CliError::format(path, format!("unknown scheme {other}"))),
    })
}

impl Checkpoint {
    pub fn from_model(model: &SiameseModel<S>, seeds: SeedRecord, pair_count: usize, epochs: usize, final_loss: f64, final_accuracy: f64) -> Self {
        let layers = model
            .layers()
            .iter()
            .map(|l| {
                let (input, output) = (l.input_dim(), l.output_dim());
                let mut weights = Vec::with_capacity(input * output);
                for o in 0..output {
                    for i in 0..input {
                        weights.push(l.weights[[i, o]]);
                    }
                }
                LayerRecord {
                    input,
                    output,
                    weights,
                    bias: l.bias.to_vec(),
                }
            })
            .collect();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            dims: model.layer_dims(),
            layers,
            temperature: model.temperature(),
            provenance: provenance_record(model.provenance()),
            seeds,
            pair_count,
            epochs,
            final_loss,
            final_accuracy,
        }
    }

    pub fn to_model(&self, path: &Path) -> CliResult<SiameseModel<S>> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for (k, r) in self.layers.iter().enumerate() {
            if r.weights.len() != r.input * r.output || r.bias.len() != r.output {
                return Err(CliError::format(path, format!("layer {k} has inconsistent array lengths")));
            }
            let weights = Array2::from_shape_fn((r.input, r.output), |(i, o)| r.weights[o * r.input + i]);
            layers.push(DenseLayer {
                weights,
                bias: Array1::from(r.bias.clone()),
            });
        }
        let provenance = parse_provenance(path, &self.provenance)?;
        let model = SiameseModel::from_layers(layers, self.temperature, provenance)
            .map_err(|e| CliError::format(path, e.to_string()))?;
        if model.layer_dims() != self.dims {
            return Err(CliError::format(path, "dims disagree with the layer arrays"));
        }
        Ok(model)
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> CliResult<()> {
    write_json(path, ckpt)
}

pub fn read_checkpoint(path: &Path) -> CliResult<(Checkpoint, SiameseModel<S>)> {
    let ckpt: Checkpoint = read_json(path)?;
    let model = ckpt.to_model(path)?;
    Ok((ckpt, model))
}

// -------------------------------------------------------------- calibration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub mu_p: S,
    pub mu_n: S,
    pub thres: S,
    pub pairs_used: usize,
    pub pair_population: u64,
    pub capped: bool,
    pub seed: u64,
}

impl CalibrationRecord {
    pub fn calibration(&self, path: &Path) -> CliResult<ThresholdCalibration<S>> {
        if !(self.thres > 0.0) {
            return Err(CliError::format(path, "threshold must be positive"));
        }
        Ok(ThresholdCalibration {
            mu_p: self.mu_p,
            mu_n: self.mu_n,
            thres: self.thres,
        })
    }
}
