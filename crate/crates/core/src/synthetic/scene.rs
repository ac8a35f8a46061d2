use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, TAU};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Polygon8};
use crate::schema::{
    Behavior, BirdAnnotation, DatasetManifest, FrameAnnotation, Posture, VideoSources,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub camera_id: u8,
    pub video_ids: Vec<String>,
    pub frame_width: u32,
    pub frame_height: u32,
    pub birds: usize,
    /// Frames per video.
    pub frames: usize,
    pub behaviors: BTreeMap<Behavior, f64>,
    pub postures: BTreeMap<Posture, f64>,
    /// Semi-major axis of a bird outline, in pixels.
    pub body_radius: f64,
    /// Minor to major axis ratio.
    pub aspect: f64,
    /// Each vertex radius is shrunk by up to this fraction.
    pub shape_noise: f64,
    /// Per-frame displacement bound around a bird's home position.
    pub wander: f64,
    /// Minimum gap between the bounding boxes of two birds.
    pub clearance: f64,
    /// Probability that a bird is out of view in a frame.
    pub not_visible_rate: f64,
    pub date: String,
}

impl Default for SceneConfig {
    fn default() -> Self {
        use Behavior::*;
        SceneConfig {
            camera_id: 1,
            video_ids: vec!["1".into()],
            frame_width: 1280,
            frame_height: 720,
            birds: 20,
            frames: 100,
            behaviors: BTreeMap::from([
                (Control, 0.45),
                (Eating, 0.25),
                (Drinking, 0.08),
                (Preening, 0.1),
                (AlloPreening, 0.02),
                (Foraging, 0.07),
                (DustBathing, 0.03),
            ]),
            postures: BTreeMap::from([
                (Posture::Walking, 0.2),
                (Posture::Sitting, 0.3),
                (Posture::Standing, 0.5),
            ]),
            body_radius: 28.0,
            aspect: 0.55,
            shape_noise: 0.15,
            wander: 8.0,
            clearance: 12.0,
            not_visible_rate: 0.02,
            date: "2021-06-01".into(),
        }
    }
}

fn gen_err(msg: impl Into<String>) -> Error {
    Error::Generation(msg.into())
}

fn check_distribution<K: std::fmt::Debug>(name: &str, d: &BTreeMap<K, f64>) -> Result<()> {
    if d.values().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(gen_err(format!("{name} probabilities must lie in [0, 1]")));
    }
    let sum: f64 = d.values().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(gen_err(format!("{name} probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        check_distribution("behavior", &self.behaviors)?;
        check_distribution("posture", &self.postures)?;
        if self.birds == 0 || self.frames == 0 {
            return Err(gen_err("bird and frame counts must be positive"));
        }
        if self.frames >= u32::MAX as usize {
            return Err(gen_err("too many frames"));
        }
        if self.body_radius.is_nan()
            || self.body_radius <= 0.0
            || !(f64::MIN_POSITIVE..=1.0).contains(&self.aspect)
        {
            return Err(gen_err("body_radius must be positive and aspect in (0, 1]"));
        }
        if !(0.0..0.5).contains(&self.shape_noise) {
            return Err(gen_err("shape_noise must lie in [0, 0.5)"));
        }
        if !(0.0..).contains(&self.wander) || !(0.0..).contains(&self.clearance) {
            return Err(gen_err("wander and clearance must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.not_visible_rate) {
            return Err(gen_err("not_visible_rate must lie in [0, 1]"));
        }
        self.manifest().validate()?;
        let (cols, rows) = self.grid();
        if cols * rows < self.birds {
            return Err(gen_err(format!(
                "cannot place {} birds in a {}x{} frame: room for {}",
                self.birds,
                self.frame_width,
                self.frame_height,
                cols * rows
            )));
        }
        Ok(())
    }

    /// Side of the square cell each bird lives in.
    fn cell(&self) -> f64 {
        2.0 * (self.body_radius + self.wander) + self.clearance
    }

    fn grid(&self) -> (usize, usize) {
        let c = self.cell();
        (
            (self.frame_width as f64 / c).floor() as usize,
            (self.frame_height as f64 / c).floor() as usize,
        )
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            camera_id: self.camera_id,
            video_ids: self.video_ids.clone(),
            frame_width: self.frame_width,
            frame_height: self.frame_height,
            videos: self
                .video_ids
                .iter()
                .map(|v| VideoSources {
                    video_id: v.clone(),
                    polygons: format!("{v}/polygons").into(),
                    ethogram: format!("{v}/ethogram.csv").into(),
                })
                .collect(),
            frame_pattern: None,
        }
    }
}

/// A generated dataset. Within a frame, visible birds come first, then
/// birds out of view, each in id order.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub config: SceneConfig,
    pub seed: u64,
    pub manifest: DatasetManifest,
    pub frames: Vec<FrameAnnotation>,
}

/// Independent random stream for a (video, slot) pair. Slot 0 is the
/// video's layout, slot `f + 1` is frame `f`.
pub(crate) fn stream(seed: u64, video: usize, slot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((video as u64) << 32) | slot);
    rng
}

fn weights<K: Ord + Copy>(all: &[K], d: &BTreeMap<K, f64>) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(all.iter().map(|k| d.get(k).copied().unwrap_or(0.0)))
        .map_err(|e| gen_err(e.to_string()))
}

/// Eight vertices around an ellipse, starting at the head end of the major
/// axis and turning clockwise on screen.
fn outline(rng: &mut impl Rng, cfg: &SceneConfig, cx: f64, cy: f64) -> Result<Polygon8> {
    let theta = rng.random_range(0.0..TAU);
    let (a, b) = (cfg.body_radius, cfg.body_radius * cfg.aspect);
    let (c, s) = (theta.cos(), theta.sin());
    let pts: [Point; 8] = std::array::from_fn(|k| {
        let r = 1.0 - cfg.shape_noise * rng.random::<f64>();
        let phi = k as f64 * FRAC_PI_4;
        let (u, v) = (r * a * phi.cos(), r * b * phi.sin());
        Point::new(cx + u * c - v * s, cy + u * s + v * c)
    });
    Polygon8::new(pts)
}

pub fn generate_scene(cfg: &SceneConfig, seed: u64) -> Result<Scene> {
    cfg.validate()?;
    let behaviors = weights(&Behavior::ALL, &cfg.behaviors)?;
    let postures = weights(&Posture::ALL, &cfg.postures)?;
    let (cols, rows) = cfg.grid();
    let cell = cfg.cell();
    let x0 = (cfg.frame_width as f64 - cols as f64 * cell) / 2.0;
    let y0 = (cfg.frame_height as f64 - rows as f64 * cell) / 2.0;

    let mut frames = Vec::with_capacity(cfg.video_ids.len() * cfg.frames);
    for (v, video_id) in cfg.video_ids.iter().enumerate() {
        let mut layout = stream(seed, v, 0);
        let mut cells: Vec<usize> = (0..cols * rows).collect();
        cells.shuffle(&mut layout);
        let homes: Vec<(f64, f64)> = cells[..cfg.birds]
            .iter()
            .map(|&i| {
                let (col, row) = (i % cols, i / cols);
                (
                    x0 + (col as f64 + 0.5) * cell,
                    y0 + (row as f64 + 0.5) * cell,
                )
            })
            .collect();

        let video_frames = (0..cfg.frames)
            .into_par_iter()
            .map(|f| {
                let mut rng = stream(seed, v, f as u64 + 1);
                let mut visible = Vec::new();
                let mut hidden = Vec::new();
                for (i, &(hx, hy)) in homes.iter().enumerate() {
                    let bird_id = i as u32 + 1;
                    if rng.random_bool(cfg.not_visible_rate) {
                        hidden.push(BirdAnnotation::not_visible(bird_id));
                        continue;
                    }
                    let cx = hx + cfg.wander * rng.random_range(-1.0..=1.0);
                    let cy = hy + cfg.wander * rng.random_range(-1.0..=1.0);
                    let polygon = outline(&mut rng, cfg, cx, cy)?;
                    visible.push(BirdAnnotation {
                        bird_id,
                        polygon: Some(polygon),
                        posture: Some(Posture::ALL[postures.sample(&mut rng)]),
                        behavior: Some(Behavior::ALL[behaviors.sample(&mut rng)]),
                        visible: true,
                        anomalies: Vec::new(),
                    });
                }
                visible.extend(hidden);
                Ok(FrameAnnotation {
                    video_id: video_id.clone(),
                    frame_index: f as u64,
                    birds: visible,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        frames.extend(video_frames);
    }
    frames.sort_by(|a, b| (&a.video_id, a.frame_index).cmp(&(&b.video_id, b.frame_index)));

    Ok(Scene {
        config: cfg.clone(),
        seed,
        manifest: cfg.manifest(),
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::validate_polygon;

    #[test]
    fn single_bird_single_frame() {
        let cfg = SceneConfig {
            birds: 1,
            frames: 1,
            ..SceneConfig::default()
        };
        let s = generate_scene(&cfg, 1).unwrap();
        assert_eq!(s.frames.len(), 1);
        assert_eq!(s.frames[0].birds.len(), 1);
    }

    #[test]
    fn outlines_are_valid_and_apart() {
        let cfg = SceneConfig {
            not_visible_rate: 0.1,
            ..SceneConfig::default()
        };
        let s = generate_scene(&cfg, 7).unwrap();
        assert_eq!(s.frames.len(), 100);
        for f in &s.frames {
            assert_eq!(f.birds.len(), 20);
            let boxes: Vec<_> = f
                .birds
                .iter()
                .filter_map(|b| b.polygon.map(|p| p.bbox().unwrap()))
                .collect();
            for b in f.birds.iter().filter(|b| b.visible) {
                let p = b.polygon.unwrap();
                assert!(validate_polygon(p.points(), 1280.0, 720.0).is_empty());
                assert!(p.signed_area() > 0.0);
            }
            for i in 0..boxes.len() {
                for j in i + 1..boxes.len() {
                    let (a, b) = (&boxes[i], &boxes[j]);
                    let gap_x = (a.x_min - b.x_max).max(b.x_min - a.x_max);
                    let gap_y = (a.y_min - b.y_max).max(b.y_min - a.y_max);
                    assert!(gap_x.max(gap_y) >= cfg.clearance - 1e-9);
                }
            }
        }
    }

    #[test]
    fn head_lies_on_the_major_axis() {
        let cfg = SceneConfig {
            shape_noise: 0.0,
            ..SceneConfig::default()
        };
        let s = generate_scene(&cfg, 3).unwrap();
        let p = s.frames[0].birds[0].polygon.unwrap();
        let d = |a: Point, b: Point| ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
        assert!((d(p.head(), p.tail()) - 2.0 * cfg.body_radius).abs() < 1e-9);
    }

    #[test]
    fn same_seed_same_scene() {
        let cfg = SceneConfig::default();
        assert_eq!(
            generate_scene(&cfg, 11).unwrap(),
            generate_scene(&cfg, 11).unwrap()
        );
        assert_ne!(
            generate_scene(&cfg, 11).unwrap().frames,
            generate_scene(&cfg, 12).unwrap().frames
        );
    }

    #[test]
    fn behavior_frequencies() {
        let cfg = SceneConfig {
            behaviors: BTreeMap::from([(Behavior::Control, 0.5), (Behavior::Eating, 0.5)]),
            not_visible_rate: 0.0,
            ..SceneConfig::default()
        };
        let s = generate_scene(&cfg, 5).unwrap();
        let n = 2000.0;
        let eat = s
            .frames
            .iter()
            .flat_map(|f| &f.birds)
            .filter(|b| b.behavior == Some(Behavior::Eating))
            .count() as f64;
        let sigma = (n * 0.25f64).sqrt();
        assert!((eat - n / 2.0).abs() <= 3.0 * sigma, "{eat}");
    }

    #[test]
    fn infeasible_packing() {
        let cfg = SceneConfig {
            birds: 500,
            ..SceneConfig::default()
        };
        assert!(matches!(generate_scene(&cfg, 0), Err(Error::Generation(_))));
        let cfg = SceneConfig {
            behaviors: BTreeMap::from([(Behavior::Eating, 0.7)]),
            ..SceneConfig::default()
        };
        assert!(matches!(generate_scene(&cfg, 0), Err(Error::Generation(_))));
    }
}
