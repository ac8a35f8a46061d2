//! Seeded pen scenes and corrupted predictions with a record of where each
//! prediction came from.

mod corrupt;
mod scene;

use std::path::{Path, PathBuf};

pub use corrupt::{
    corrupt, shifted_box_iou, DroppedTruth, Ledger, LedgerEntry, NoiseConfig, Origin, ScoreModel,
};
pub use scene::{generate_scene, Scene, SceneConfig};

use crate::error::{Error, Result};
use crate::schema::{write_ethogram_csv, write_polygon_json, EthogramRow, Flag, RawShape};

pub fn frame_stem(frame_index: u64) -> String {
    format!("frame_{frame_index:06}")
}

fn clock(seconds: u64) -> String {
    format!(
        "{:02}:{:02}:{:02}",
        seconds / 3600,
        seconds / 60 % 60,
        seconds % 60
    )
}

impl Scene {
    /// One row per bird per frame of `video_id`, in frame then bird order.
    pub fn ethogram_rows(&self, video_id: &str) -> Vec<EthogramRow> {
        let mut rows = Vec::new();
        for frame in self.frames.iter().filter(|f| f.video_id == video_id) {
            let mut birds: Vec<_> = frame.birds.iter().collect();
            birds.sort_by_key(|b| b.bird_id);
            for bird in birds {
                let mut row = EthogramRow {
                    line: 0,
                    date: self.config.date.clone(),
                    image: format!("{}.png", frame_stem(frame.frame_index)),
                    time: clock(frame.frame_index),
                    bird_id: bird.bird_id,
                    flags: [false; 10],
                    count: 0,
                };
                if bird.visible {
                    if let Some(p) = bird.posture {
                        row.set(Flag::for_posture(p), true);
                    }
                    if let Some(f) = bird.behavior.and_then(Flag::for_behavior) {
                        row.set(f, true);
                    }
                } else {
                    row.set(Flag::Nvs, true);
                }
                row.count = row.flag_sum();
                rows.push(row);
            }
        }
        rows
    }

    /// Polygon files of `video_id` as (file name, shapes).
    pub fn polygon_files(&self, video_id: &str) -> Vec<(String, Vec<RawShape>)> {
        self.frames
            .iter()
            .filter(|f| f.video_id == video_id)
            .map(|f| {
                let shapes = f
                    .birds
                    .iter()
                    .filter_map(|b| {
                        b.polygon.map(|p| RawShape {
                            bird_id: b.bird_id,
                            points: p.points().to_vec(),
                        })
                    })
                    .collect();
                (format!("{}.json", frame_stem(f.frame_index)), shapes)
            })
            .collect()
    }

    /// Writes the manifest, polygon directories and ethogram sheets under
    /// `dir` and returns the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        for src in &self.manifest.videos {
            let poly_dir = dir.join(&src.polygons);
            std::fs::create_dir_all(&poly_dir).map_err(|e| Error::io(&poly_dir, e))?;
            for (name, shapes) in self.polygon_files(&src.video_id) {
                write_file(&poly_dir.join(name), &write_polygon_json(&shapes))?;
            }
            let csv = write_ethogram_csv(&self.ethogram_rows(&src.video_id));
            write_file(&dir.join(&src.ethogram), &csv)?;
        }
        let path = dir.join("manifest.json");
        write_file(&path, &self.manifest.to_json())?;
        Ok(path)
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
