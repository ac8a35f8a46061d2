use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Annotation sources for one video. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoSources {
    pub video_id: String,
    /// Directory holding one polygon JSON per frame.
    pub polygons: PathBuf,
    pub ethogram: PathBuf,
}

/// Per-camera dataset description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub camera_id: u8,
    pub video_ids: Vec<String>,
    pub frame_width: u32,
    pub frame_height: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub videos: Vec<VideoSources>,
    /// Regex with one capture group that extracts the frame number from a
    /// lower-cased file stem or CSV `image` cell. Defaults to the last run
    /// of digits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_pattern: Option<String>,
}

impl DatasetManifest {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let m: DatasetManifest =
            serde_json::from_slice(bytes).map_err(|e| super::labelme::json_error(bytes, &e))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.camera_id) {
            return Err(Error::Schema(format!(
                "camera_id must be 1, 2 or 3, got {}",
                self.camera_id
            )));
        }
        if self.video_ids.is_empty() {
            return Err(Error::Schema("video_ids is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for v in &self.video_ids {
            if !seen.insert(v.as_str()) {
                return Err(Error::Schema(format!("duplicate video id {v:?}")));
            }
        }
        if self.frame_width == 0 || self.frame_height == 0 {
            return Err(Error::Schema("frame dimensions must be positive".into()));
        }
        for src in &self.videos {
            if !seen.contains(src.video_id.as_str()) {
                return Err(Error::Schema(format!(
                    "annotation sources for unknown video {:?}",
                    src.video_id
                )));
            }
        }
        if let Some(p) = &self.frame_pattern {
            self.compile_pattern(p)?;
        }
        Ok(())
    }

    fn compile_pattern(&self, p: &str) -> Result<Regex> {
        let re = Regex::new(p).map_err(|e| Error::Schema(format!("frame_pattern: {e}")))?;
        if re.captures_len() < 2 {
            return Err(Error::Schema("frame_pattern needs a capture group".into()));
        }
        Ok(re)
    }

    pub fn frame_keyer(&self) -> Result<FrameKeyer> {
        let pattern = self
            .frame_pattern
            .as_deref()
            .map(|p| self.compile_pattern(p))
            .transpose()?;
        Ok(FrameKeyer { pattern })
    }
}

/// Normalizes frame identifiers from file names and CSV cells to indices.
#[derive(Debug, Clone, Default)]
pub struct FrameKeyer {
    pattern: Option<Regex>,
}

impl FrameKeyer {
    pub fn frame_index(&self, id: &str) -> Result<u64> {
        let stem = normalize_stem(id);
        let digits = match &self.pattern {
            Some(re) => re
                .captures(&stem)
                .and_then(|c| c.get(1))
                .map(|m| m.as_str().to_string()),
            None => last_digit_run(&stem),
        };
        digits
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| Error::Schema(format!("cannot derive a frame number from {id:?}")))
    }
}

/// Lower-cases and strips any directory part and extension.
pub fn normalize_stem(id: &str) -> String {
    let base = id.trim().rsplit(['/', '\\']).next().unwrap_or("");
    let stem = match base.rfind('.') {
        Some(dot) if dot > 0 => &base[..dot],
        _ => base,
    };
    stem.to_ascii_lowercase()
}

fn last_digit_run(s: &str) -> Option<String> {
    let bytes = s.as_bytes();
    let end = bytes.iter().rposition(u8::is_ascii_digit)? + 1;
    let start = bytes[..end]
        .iter()
        .rposition(|b| !b.is_ascii_digit())
        .map_or(0, |i| i + 1);
    Some(s[start..end].to_string())
}
