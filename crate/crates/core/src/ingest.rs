//! Readers and writers for the on-disk formats.
//!
//! * `detections.csv` / `gt.csv` / `tracks.csv`: `frame,id,x,y,w,h,conf[,...]`
//!   with 1-based frames. Trailing columns are ignored; `conf` may be
//!   omitted on ground-truth rows (defaults to 1.0).
//! * `features.csv`: header `track_id,frame,f0,...,f{d-1}` then one row per
//!   track and frame.
//! * `semantics.json`: `{video_id, summary, instances: [{track_id, caption}],
//!   interactions: [{subject, object, label}]}`. Written with keys in exactly
//!   that order, instances sorted by id and interactions sorted by
//!   `(subject, object, label)`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::types::{BoundedBox, FeatureSequence, Interaction, SemanticRecord, Track};

/// All detections of one frame. `id == -1` marks an unassigned detection.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFrame {
    pub frame: u32,
    pub detections: Vec<(BoundedBox, i64)>,
}

struct Row {
    line: usize,
    id: i64,
    bbox: BoundedBox,
}

/// Split into `(1-based line number, trimmed line)`, skipping blank lines.
fn lines(text: &[u8]) -> impl Iterator<Item = (usize, Result<&str>)> {
    text.split(|&b| b == b'\n')
        .enumerate()
        .map(|(i, raw)| {
            let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
            let s = std::str::from_utf8(raw).map_err(|_| Error::parse(i + 1, "invalid utf-8"));
            (i + 1, s.map(str::trim))
        })
        .filter(|(_, s)| !matches!(s, Ok("")))
}

fn field<T: std::str::FromStr>(fields: &[&str], idx: usize, name: &str, line: usize) -> Result<T> {
    let raw = fields
        .get(idx)
        .ok_or_else(|| Error::parse(line, format!("missing field {name}")))?;
    raw.trim()
        .parse::<T>()
        .map_err(|_| Error::parse(line, format!("non-numeric field {name}")))
}

fn finite(v: f64, name: &str, line: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::parse(line, format!("non-finite field {name}")))
    }
}

fn parse_box_rows(text: &[u8], conf_required: bool) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for (line, s) in lines(text) {
        let s = s?;
        let fields: Vec<&str> = s.split(',').collect();
        let min_cols = if conf_required { 7 } else { 6 };
        if fields.len() < min_cols {
            return Err(Error::parse(
                line,
                format!(
                    "expected at least {min_cols} columns, found {}",
                    fields.len()
                ),
            ));
        }
        let frame: i64 = field(&fields, 0, "frame", line)?;
        if frame < 1 || frame > u32::MAX as i64 {
            return Err(Error::parse(line, "frame index must be >= 1"));
        }
        let id: i64 = field(&fields, 1, "id", line)?;
        let x = finite(field(&fields, 2, "x", line)?, "x", line)?;
        let y = finite(field(&fields, 3, "y", line)?, "y", line)?;
        let w = finite(field(&fields, 4, "w", line)?, "w", line)?;
        let h = finite(field(&fields, 5, "h", line)?, "h", line)?;
        let conf = if fields.len() > 6 && !fields[6].trim().is_empty() {
            finite(field(&fields, 6, "conf", line)?, "conf", line)?
        } else if conf_required {
            return Err(Error::parse(line, "missing field conf"));
        } else {
            1.0
        };
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::parse(line, "degenerate extent"));
        }
        if !(0.0..=1.0).contains(&conf) {
            return Err(Error::parse(line, "confidence outside [0,1]"));
        }
        rows.push(Row {
            line,
            id,
            bbox: BoundedBox::new(frame as u32, x, y, w, h, conf),
        });
    }
    Ok(rows)
}

/// Detections grouped by frame, frames ascending, file order within a frame.
pub fn parse_detections(text: &[u8]) -> Result<Vec<DetectionFrame>> {
    let mut by_frame: BTreeMap<u32, Vec<(BoundedBox, i64)>> = BTreeMap::new();
    for row in parse_box_rows(text, true)? {
        if row.id < -1 {
            return Err(Error::parse(row.line, "id must be -1 or positive"));
        }
        by_frame
            .entry(row.bbox.frame)
            .or_default()
            .push((row.bbox, row.id));
    }
    Ok(by_frame
        .into_iter()
        .map(|(frame, detections)| DetectionFrame { frame, detections })
        .collect())
}

/// Ground-truth (or tracker output) rows grouped into tracks by id.
pub fn parse_gt_tracks(text: &[u8]) -> Result<Vec<Track>> {
    let mut by_id: BTreeMap<u32, BTreeMap<u32, BoundedBox>> = BTreeMap::new();
    for row in parse_box_rows(text, false)? {
        if row.id < 1 || row.id > u32::MAX as i64 {
            return Err(Error::parse(row.line, "track id must be >= 1"));
        }
        let boxes = by_id.entry(row.id as u32).or_default();
        if boxes.insert(row.bbox.frame, row.bbox).is_some() {
            return Err(Error::parse(
                row.line,
                format!("duplicate frame {} for id {}", row.bbox.frame, row.id),
            ));
        }
    }
    Ok(by_id
        .into_iter()
        .map(|(id, boxes)| Track::new(id, boxes.into_values().collect()))
        .collect())
}

/// Rows sorted by frame then id; reals with 6 decimals.
pub fn write_tracks(tracks: &[Track]) -> Vec<u8> {
    let mut rows: Vec<(u32, u32, &BoundedBox)> = tracks
        .iter()
        .flat_map(|t| t.boxes.iter().map(move |b| (b.frame, t.track_id, b)))
        .collect();
    rows.sort_by_key(|&(f, id, _)| (f, id));
    let mut out = String::new();
    for (frame, id, b) in rows {
        out.push_str(&format!(
            "{frame},{id},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            b.x, b.y, b.w, b.h, b.conf
        ));
    }
    out.into_bytes()
}

/// Detection rows in the same layout as [`write_tracks`].
pub fn write_detections(frames: &[DetectionFrame]) -> Vec<u8> {
    let mut out = String::new();
    for f in frames {
        for (b, id) in &f.detections {
            out.push_str(&format!(
                "{},{id},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                f.frame, b.x, b.y, b.w, b.h, b.conf
            ));
        }
    }
    out.into_bytes()
}

/// Parse `features.csv`. When `expected_dim` is given, the header's feature
/// count must equal it.
pub fn parse_features(text: &[u8], expected_dim: Option<usize>) -> Result<Vec<FeatureSequence>> {
    let mut it = lines(text);
    let Some((hline, header)) = it.next() else {
        return Ok(Vec::new());
    };
    let header = header?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[0] != "track_id" || cols[1] != "frame" {
        return Err(Error::parse(hline, "header must be track_id,frame,f0,..."));
    }
    for (k, c) in cols[2..].iter().enumerate() {
        if *c != format!("f{k}") {
            return Err(Error::parse(hline, format!("unexpected header column {c}")));
        }
    }
    let d = cols.len() - 2;
    if let Some(exp) = expected_dim {
        if exp != d {
            return Err(Error::DimensionMismatch {
                what: "features".into(),
                expected: exp,
                found: d,
            });
        }
    }
    let mut by_track: BTreeMap<u32, BTreeMap<u32, Vec<f64>>> = BTreeMap::new();
    for (line, s) in it {
        let s = s?;
        let fields: Vec<&str> = s.split(',').collect();
        if fields.len() != d + 2 {
            return Err(Error::parse(
                line,
                format!("expected {} columns, found {}", d + 2, fields.len()),
            ));
        }
        let track_id: u32 = field(&fields, 0, "track_id", line)?;
        let frame: u32 = field(&fields, 1, "frame", line)?;
        if track_id < 1 || frame < 1 {
            return Err(Error::parse(line, "track_id and frame must be >= 1"));
        }
        let mut row = Vec::with_capacity(d);
        for k in 0..d {
            let name = format!("f{k}");
            row.push(finite(field(&fields, k + 2, &name, line)?, &name, line)?);
        }
        if by_track
            .entry(track_id)
            .or_default()
            .insert(frame, row)
            .is_some()
        {
            return Err(Error::parse(
                line,
                format!("duplicate frame {frame} for track {track_id}"),
            ));
        }
    }
    Ok(by_track
        .into_iter()
        .map(|(id, rows)| {
            let frames: Vec<u32> = rows.keys().copied().collect();
            let data: Vec<f64> = rows.into_values().flatten().collect();
            FeatureSequence::new(id, frames.clone(), Matrix::from_vec(frames.len(), d, data))
        })
        .collect())
}

/// Reals use the shortest representation that parses back exactly. No
/// sequences give an empty file.
pub fn write_features(seqs: &[FeatureSequence]) -> Vec<u8> {
    if seqs.is_empty() {
        return Vec::new();
    }
    let d = seqs.first().map_or(0, FeatureSequence::dim);
    let mut out = String::from("track_id,frame");
    for k in 0..d {
        out.push_str(&format!(",f{k}"));
    }
    out.push('\n');
    let mut sorted: Vec<&FeatureSequence> = seqs.iter().collect();
    sorted.sort_by_key(|s| s.track_id);
    for s in sorted {
        for (k, frame) in s.frames.iter().enumerate() {
            out.push_str(&format!("{},{}", s.track_id, frame));
            for v in s.feats.row(k) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
    }
    out.into_bytes()
}

#[derive(Serialize, Deserialize)]
struct InstanceJson {
    track_id: u32,
    caption: String,
}

#[derive(Serialize, Deserialize)]
struct InteractionJson {
    subject: u32,
    object: u32,
    label: String,
}

#[derive(Serialize, Deserialize)]
struct SemanticsJson {
    video_id: String,
    summary: String,
    instances: Vec<InstanceJson>,
    interactions: Vec<InteractionJson>,
}

/// Parse `semantics.json`, checking labels against `labels`.
pub fn parse_semantics(text: &[u8], labels: &[String]) -> Result<SemanticRecord> {
    let raw: SemanticsJson = serde_json::from_slice(text)?;
    let mut instance_captions = BTreeMap::new();
    for inst in raw.instances {
        if instance_captions
            .insert(inst.track_id, inst.caption)
            .is_some()
        {
            return Err(Error::InvalidRecord(format!(
                "duplicate instance {}",
                inst.track_id
            )));
        }
    }
    let mut interactions = BTreeSet::new();
    for i in raw.interactions {
        if i.subject == i.object {
            return Err(Error::InvalidRecord(format!(
                "interaction subject equals object ({})",
                i.subject
            )));
        }
        if !labels.contains(&i.label) {
            return Err(Error::UnknownLabel(i.label));
        }
        interactions.insert(Interaction::new(i.subject, i.object, i.label));
    }
    Ok(SemanticRecord {
        video_id: raw.video_id,
        summary: raw.summary,
        instance_captions,
        interactions,
    })
}

pub fn write_semantics(record: &SemanticRecord) -> Vec<u8> {
    let raw = SemanticsJson {
        video_id: record.video_id.clone(),
        summary: record.summary.clone(),
        instances: record
            .instance_captions
            .iter()
            .map(|(&track_id, caption)| InstanceJson {
                track_id,
                caption: caption.clone(),
            })
            .collect(),
        interactions: record
            .interactions
            .iter()
            .map(|i| InteractionJson {
                subject: i.subject,
                object: i.object,
                label: i.label.clone(),
            })
            .collect(),
    };
    let mut out = serde_json::to_vec_pretty(&raw).expect("semantics serialize");
    out.push(b'\n');
    out
}
