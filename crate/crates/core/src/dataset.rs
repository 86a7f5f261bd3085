//! Loading a dataset directory: either one video's files directly inside
//! it, or one subdirectory per video (visited in name order).

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::ingest::{
    parse_detections, parse_features, parse_gt_tracks, parse_semantics, DetectionFrame,
};
use crate::types::{FeatureSequence, SemanticRecord, Track};

pub const DETECTIONS_FILE: &str = "detections.csv";
pub const GT_FILE: &str = "gt.csv";
pub const FEATURES_FILE: &str = "features.csv";
pub const SEMANTICS_FILE: &str = "semantics.json";

#[derive(Debug, Clone, PartialEq)]
pub struct VideoData {
    pub dir: PathBuf,
    pub video_id: String,
    pub detections: Vec<DetectionFrame>,
    pub gt: Vec<Track>,
    pub features: Vec<FeatureSequence>,
    pub semantics: SemanticRecord,
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(fs::read(path)?)
}

/// Reads one video directory; all four files must be present.
pub fn load_video(dir: &Path, cfg: &RunConfig) -> Result<VideoData> {
    let detections = parse_detections(&read_file(&dir.join(DETECTIONS_FILE))?)?;
    let gt = parse_gt_tracks(&read_file(&dir.join(GT_FILE))?)?;
    let features = parse_features(&read_file(&dir.join(FEATURES_FILE))?, Some(cfg.feat_dim))?;
    let semantics = parse_semantics(&read_file(&dir.join(SEMANTICS_FILE))?, &cfg.labels)?;
    Ok(VideoData {
        dir: dir.to_path_buf(),
        video_id: semantics.video_id.clone(),
        detections,
        gt,
        features,
        semantics,
    })
}

/// Video directories under `root`, in name order.
pub fn video_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if !root.is_dir() {
        return Err(Error::MissingFile(root.to_path_buf()));
    }
    if root.join(DETECTIONS_FILE).exists() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(DETECTIONS_FILE).exists())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::MissingFile(root.join(DETECTIONS_FILE)));
    }
    Ok(dirs)
}

pub fn load_dataset(root: &Path, cfg: &RunConfig) -> Result<Vec<VideoData>> {
    video_dirs(root)?
        .iter()
        .map(|d| load_video(d, cfg))
        .collect()
}
