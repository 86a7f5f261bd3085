//! Trajectory and semantic data model.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::linalg::Matrix;

/// An axis-aligned box observed at one frame. Frames are 1-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundedBox {
    pub frame: u32,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub conf: f64,
}

impl BoundedBox {
    pub fn new(frame: u32, x: f64, y: f64, w: f64, h: f64, conf: f64) -> Self {
        Self {
            frame,
            x,
            y,
            w,
            h,
            conf,
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.w > 0.0 && self.h > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: u32,
    pub boxes: Vec<BoundedBox>,
}

impl Track {
    pub fn new(track_id: u32, boxes: Vec<BoundedBox>) -> Self {
        Self { track_id, boxes }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn frames(&self) -> impl Iterator<Item = u32> + '_ {
        self.boxes.iter().map(|b| b.frame)
    }

    pub fn at_frame(&self, frame: u32) -> Option<&BoundedBox> {
        self.boxes
            .binary_search_by_key(&frame, |b| b.frame)
            .ok()
            .map(|i| &self.boxes[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ViolationKind {
    Unsorted,
    DuplicateFrame,
    DegenerateExtent,
    ConfidenceOutOfRange,
    ZeroFrame,
    Empty,
    DuplicateTrackId,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationKind::Unsorted => "unsorted",
            ViolationKind::DuplicateFrame => "duplicate frame",
            ViolationKind::DegenerateExtent => "degenerate extent",
            ViolationKind::ConfidenceOutOfRange => "confidence out of range",
            ViolationKind::ZeroFrame => "frame index below 1",
            ViolationKind::Empty => "empty track",
            ViolationKind::DuplicateTrackId => "duplicate track id",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub track_id: u32,
    pub frame: Option<u32>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.frame {
            Some(fr) => write!(f, "{} (track {}, frame {})", self.kind, self.track_id, fr),
            None => write!(f, "{} (track {})", self.kind, self.track_id),
        }
    }
}

/// Every invariant violation across `tracks`; an empty list means valid.
pub fn validate_tracks(tracks: &[Track]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen_ids = BTreeSet::new();
    for t in tracks {
        let v = |frame, kind| Violation {
            track_id: t.track_id,
            frame,
            kind,
        };
        if !seen_ids.insert(t.track_id) {
            out.push(v(None, ViolationKind::DuplicateTrackId));
        }
        if t.boxes.is_empty() {
            out.push(v(None, ViolationKind::Empty));
        }
        for (i, b) in t.boxes.iter().enumerate() {
            if b.frame == 0 {
                out.push(v(Some(b.frame), ViolationKind::ZeroFrame));
            }
            if b.is_degenerate() {
                out.push(v(Some(b.frame), ViolationKind::DegenerateExtent));
            }
            if !(0.0..=1.0).contains(&b.conf) {
                out.push(v(Some(b.frame), ViolationKind::ConfidenceOutOfRange));
            }
            if i > 0 {
                let prev = t.boxes[i - 1].frame;
                if b.frame < prev {
                    out.push(v(Some(b.frame), ViolationKind::Unsorted));
                } else if b.frame == prev {
                    out.push(v(Some(b.frame), ViolationKind::DuplicateFrame));
                }
            }
        }
    }
    out
}

/// Per-frame feature rows of one track: row `k` is the feature at `frames[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub track_id: u32,
    pub frames: Vec<u32>,
    pub feats: Matrix,
}

impl FeatureSequence {
    pub fn new(track_id: u32, frames: Vec<u32>, feats: Matrix) -> Self {
        assert_eq!(frames.len(), feats.rows(), "one feature row per frame");
        Self {
            track_id,
            frames,
            feats,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feats.cols()
    }

    /// Keep only the first `k` frames.
    pub fn truncated(&self, k: usize) -> FeatureSequence {
        let k = k.min(self.len()).max(1);
        let d = self.dim();
        FeatureSequence::new(
            self.track_id,
            self.frames[..k].to_vec(),
            Matrix::from_vec(k, d, self.feats.data()[..k * d].to_vec()),
        )
    }
}

/// A directed interaction `subject -> object` with a label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Interaction {
    pub subject: u32,
    pub object: u32,
    pub label: String,
}

impl Interaction {
    pub fn new(subject: u32, object: u32, label: impl Into<String>) -> Self {
        Self {
            subject,
            object,
            label: label.into(),
        }
    }
}

/// The semantic half of an enhanced trajectory set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SemanticRecord {
    pub video_id: String,
    pub summary: String,
    pub instance_captions: BTreeMap<u32, String>,
    pub interactions: BTreeSet<Interaction>,
}

impl SemanticRecord {
    /// Ids referenced by interactions that are absent from `tracks`.
    pub fn dangling_ids(&self, tracks: &[Track]) -> Vec<u32> {
        let known: BTreeSet<u32> = tracks.iter().map(|t| t.track_id).collect();
        let mut missing: BTreeSet<u32> = BTreeSet::new();
        for i in &self.interactions {
            for id in [i.subject, i.object] {
                if !known.contains(&id) {
                    missing.insert(id);
                }
            }
        }
        for id in self.instance_captions.keys() {
            if !known.contains(id) {
                missing.insert(*id);
            }
        }
        missing.into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(frame: u32, w: f64) -> BoundedBox {
        BoundedBox::new(frame, 0.0, 0.0, w, 5.0, 1.0)
    }

    #[test]
    fn well_formed_is_ok() {
        let tracks = vec![
            Track::new(1, vec![bx(1, 5.0), bx(2, 5.0)]),
            Track::new(2, vec![bx(1, 5.0)]),
        ];
        assert!(validate_tracks(&tracks).is_empty());
    }

    #[test]
    fn unsorted_frames() {
        let tracks = vec![Track::new(7, vec![bx(3, 5.0), bx(2, 5.0)])];
        let v = validate_tracks(&tracks);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::Unsorted);
        assert_eq!(v[0].track_id, 7);
        assert_eq!(v[0].kind.to_string(), "unsorted");
    }

    #[test]
    fn degenerate_extent() {
        let tracks = vec![Track::new(1, vec![bx(1, 0.0)])];
        let v = validate_tracks(&tracks);
        assert_eq!(v[0].kind, ViolationKind::DegenerateExtent);
        assert_eq!(v[0].frame, Some(1));
        assert_eq!(v[0].kind.to_string(), "degenerate extent");
    }

    #[test]
    fn collects_all_violations() {
        let tracks = vec![
            Track::new(1, vec![bx(2, 5.0), bx(2, 5.0), bx(0, -1.0)]),
            Track::new(1, vec![]),
        ];
        let kinds: Vec<_> = validate_tracks(&tracks)
            .into_iter()
            .map(|v| v.kind)
            .collect();
        assert!(kinds.contains(&ViolationKind::DuplicateFrame));
        assert!(kinds.contains(&ViolationKind::Unsorted));
        assert!(kinds.contains(&ViolationKind::ZeroFrame));
        assert!(kinds.contains(&ViolationKind::DegenerateExtent));
        assert!(kinds.contains(&ViolationKind::DuplicateTrackId));
        assert!(kinds.contains(&ViolationKind::Empty));
    }

    #[test]
    fn dangling_ids_reported() {
        let mut rec = SemanticRecord::default();
        rec.interactions.insert(Interaction::new(1, 9, "follow"));
        let tracks = vec![Track::new(1, vec![bx(1, 5.0)])];
        assert_eq!(rec.dangling_ids(&tracks), vec![9]);
    }
}
