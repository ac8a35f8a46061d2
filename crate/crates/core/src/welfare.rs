//! Group behavior budgets over frame windows, and threshold rules on them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Behavior, BinaryPosture, FrameAnnotation};

/// Half-open frame range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Window {
    pub start: u64,
    pub end: u64,
}

impl Window {
    pub fn new(start: u64, end: u64) -> Result<Self> {
        if start >= end {
            return Err(Error::EmptyInput(format!(
                "window [{start}, {end}) is empty"
            )));
        }
        Ok(Window { start, end })
    }

    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn contains(&self, frame: u64) -> bool {
        (self.start..self.end).contains(&frame)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BehaviorBudget {
    pub window: Window,
    /// Annotated frames inside the window.
    pub frames: u64,
    pub visible_bird_frames: u64,
    /// Visible bird-frames that carry a behavior; the denominator of
    /// `fractions`.
    pub behavior_bird_frames: u64,
    pub behavior_counts: BTreeMap<Behavior, u64>,
    pub fractions: BTreeMap<Behavior, f64>,
    pub posture_counts: BTreeMap<BinaryPosture, u64>,
    pub posture_fractions: BTreeMap<BinaryPosture, f64>,
    pub visible_count_mean: f64,
}

fn fractions<K: Ord + Copy>(all: &[K], counts: &BTreeMap<K, u64>) -> BTreeMap<K, f64> {
    let total: u64 = counts.values().sum();
    all.iter()
        .map(|&k| {
            let n = counts.get(&k).copied().unwrap_or(0);
            (
                k,
                if total == 0 {
                    0.0
                } else {
                    n as f64 / total as f64
                },
            )
        })
        .collect()
}

impl BehaviorBudget {
    fn from_counts(
        window: Window,
        frames: u64,
        visible: u64,
        behavior_counts: BTreeMap<Behavior, u64>,
        posture_counts: BTreeMap<BinaryPosture, u64>,
    ) -> Self {
        BehaviorBudget {
            window,
            frames,
            visible_bird_frames: visible,
            behavior_bird_frames: behavior_counts.values().sum(),
            fractions: fractions(&Behavior::ALL, &behavior_counts),
            posture_fractions: fractions(&BinaryPosture::ALL, &posture_counts),
            behavior_counts,
            posture_counts,
            visible_count_mean: if frames == 0 {
                0.0
            } else {
                visible as f64 / frames as f64
            },
        }
    }

    pub fn fraction(&self, b: Behavior) -> f64 {
        self.fractions.get(&b).copied().unwrap_or(0.0)
    }

    /// Pools several budgets by their counts. The window spans all inputs.
    pub fn combine(parts: &[BehaviorBudget]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::EmptyInput("no budgets to combine".into()))?;
        let mut window = first.window;
        let (mut frames, mut visible) = (0, 0);
        let mut bc = BTreeMap::new();
        let mut pc = BTreeMap::new();
        for p in parts {
            window.start = window.start.min(p.window.start);
            window.end = window.end.max(p.window.end);
            frames += p.frames;
            visible += p.visible_bird_frames;
            for (k, n) in &p.behavior_counts {
                *bc.entry(*k).or_insert(0) += n;
            }
            for (k, n) in &p.posture_counts {
                *pc.entry(*k).or_insert(0) += n;
            }
        }
        Ok(Self::from_counts(window, frames, visible, bc, pc))
    }
}

/// Behavior and posture shares of visible birds over the frames of
/// `frames` that fall in `window`. Birds out of view are not counted.
pub fn behavior_budget(frames: &[FrameAnnotation], window: Window) -> Result<BehaviorBudget> {
    if window.is_empty() {
        return Err(Error::EmptyInput("empty window".into()));
    }
    let (mut n_frames, mut visible) = (0u64, 0u64);
    let mut bc = BTreeMap::new();
    let mut pc = BTreeMap::new();
    for f in frames.iter().filter(|f| window.contains(f.frame_index)) {
        n_frames += 1;
        for b in f.birds.iter().filter(|b| b.visible) {
            visible += 1;
            if let Some(beh) = b.behavior {
                *bc.entry(beh).or_insert(0) += 1;
            }
            if let Some(p) = b.posture {
                *pc.entry(p.binary()).or_insert(0) += 1;
            }
        }
    }
    if n_frames == 0 {
        return Err(Error::EmptyInput(format!(
            "no annotated frames in [{}, {})",
            window.start, window.end
        )));
    }
    Ok(BehaviorBudget::from_counts(
        window, n_frames, visible, bc, pc,
    ))
}

/// Windows of `len` frames every `step` frames over `[first, last]`; the
/// final window is clipped to the range.
pub fn windows(first: u64, last: u64, len: u64, step: u64) -> Result<Vec<Window>> {
    if len == 0 || step == 0 {
        return Err(Error::Schema(
            "window length and step must be positive".into(),
        ));
    }
    let end = last + 1;
    let mut out = Vec::new();
    let mut start = first;
    while start < end {
        out.push(Window {
            start,
            end: (start + len).min(end),
        });
        if start + len >= end {
            break;
        }
        start += step;
    }
    Ok(out)
}

/// Budgets over sliding windows across the frames present. Windows with no
/// annotated frame are skipped.
pub fn budget_series(
    frames: &[FrameAnnotation],
    len: u64,
    step: u64,
) -> Result<Vec<BehaviorBudget>> {
    let first = frames.iter().map(|f| f.frame_index).min();
    let last = frames.iter().map(|f| f.frame_index).max();
    let (Some(first), Some(last)) = (first, last) else {
        return Err(Error::EmptyInput("no frames".into()));
    };
    let mut out = Vec::new();
    for w in windows(first, last, len, step)? {
        match behavior_budget(frames, w) {
            Ok(b) => out.push(b),
            Err(Error::EmptyInput(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparator {
    Below,
    Above,
}

impl Comparator {
    pub fn holds(self, observed: f64, threshold: f64) -> bool {
        match self {
            Comparator::Below => observed < threshold,
            Comparator::Above => observed > threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelfareRule {
    pub behavior: Behavior,
    pub comparator: Comparator,
    pub threshold: f64,
    /// Frames the condition must persist; 0 means a single window suffices.
    #[serde(default)]
    pub min_window: u64,
}

impl WelfareRule {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Schema(format!(
                "rule threshold {} is outside [0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for WelfareRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let op = match self.comparator {
            Comparator::Below => '<',
            Comparator::Above => '>',
        };
        write!(
            f,
            "{}{op}{}",
            crate::schema::Label::from(self.behavior),
            self.threshold
        )?;
        if self.min_window > 0 {
            write!(f, "@{}", self.min_window)?;
        }
        Ok(())
    }
}

/// Parses `DRK<0.01` or `EAT>0.6@600`.
impl FromStr for WelfareRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Schema(format!(
                "cannot parse rule {s:?}; expected e.g. DRK<0.01@300"
            ))
        };
        let (body, min_window) = match s.split_once('@') {
            Some((b, m)) => (b, m.trim().parse().map_err(|_| bad())?),
            None => (s, 0),
        };
        let (code, comparator, thr) = if let Some((c, t)) = body.split_once('<') {
            (c, Comparator::Below, t)
        } else if let Some((c, t)) = body.split_once('>') {
            (c, Comparator::Above, t)
        } else {
            return Err(bad());
        };
        let label = crate::schema::Label::from_code(code)?;
        let behavior = Behavior::try_from(label)?;
        let rule = WelfareRule {
            behavior,
            comparator,
            threshold: thr.trim().parse().map_err(|_| bad())?,
            min_window,
        };
        rule.validate()?;
        Ok(rule)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WelfareFlag {
    pub rule: usize,
    pub window: Window,
    pub observed: f64,
}

/// Flags each window where a rule's comparator holds, provided the run of
/// consecutive such windows spans at least `min_window` frames. Windows
/// without behavior data break runs and are never flagged.
pub fn evaluate_rules(budgets: &[BehaviorBudget], rules: &[WelfareRule]) -> Vec<WelfareFlag> {
    let mut flags = Vec::new();
    for (r, rule) in rules.iter().enumerate() {
        let mut run: Vec<usize> = Vec::new();
        let close = |run: &mut Vec<usize>, flags: &mut Vec<WelfareFlag>| {
            if let (Some(&a), Some(&b)) = (run.first(), run.last()) {
                if budgets[b].window.end - budgets[a].window.start >= rule.min_window {
                    flags.extend(run.iter().map(|&i| WelfareFlag {
                        rule: r,
                        window: budgets[i].window,
                        observed: budgets[i].fraction(rule.behavior),
                    }));
                }
            }
            run.clear();
        };
        for (i, b) in budgets.iter().enumerate() {
            let holds = b.behavior_bird_frames > 0
                && rule
                    .comparator
                    .holds(b.fraction(rule.behavior), rule.threshold);
            if holds {
                run.push(i);
            } else {
                close(&mut run, &mut flags);
            }
        }
        close(&mut run, &mut flags);
    }
    flags
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WelfareConfig {
    /// Window length in frames.
    pub window: u64,
    /// Step between window starts; defaults to the window length.
    pub step: Option<u64>,
    pub rules: Vec<WelfareRule>,
}

impl Default for WelfareConfig {
    fn default() -> Self {
        WelfareConfig {
            window: 300,
            step: None,
            rules: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VideoWelfare {
    pub video_id: String,
    pub budgets: Vec<BehaviorBudget>,
    pub flags: Vec<WelfareFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WelfareReport {
    pub rules: Vec<WelfareRule>,
    pub videos: Vec<VideoWelfare>,
}

/// Budgets and flags per video, videos in first-seen order.
pub fn welfare_report(frames: &[FrameAnnotation], cfg: &WelfareConfig) -> Result<WelfareReport> {
    for r in &cfg.rules {
        r.validate()?;
    }
    let mut order: Vec<&str> = Vec::new();
    for f in frames {
        if !order.contains(&f.video_id.as_str()) {
            order.push(&f.video_id);
        }
    }
    let mut videos = Vec::new();
    for v in order {
        let vf: Vec<FrameAnnotation> = frames.iter().filter(|f| f.video_id == v).cloned().collect();
        let budgets = budget_series(&vf, cfg.window, cfg.step.unwrap_or(cfg.window))?;
        let flags = evaluate_rules(&budgets, &cfg.rules);
        videos.push(VideoWelfare {
            video_id: v.to_string(),
            budgets,
            flags,
        });
    }
    Ok(WelfareReport {
        rules: cfg.rules.clone(),
        videos,
    })
}

impl WelfareReport {
    pub fn budgets_csv(&self) -> String {
        let mut out = String::from(
            "video,start_frame,end_frame,frames,visible_bird_frames,visible_count_mean",
        );
        for b in Behavior::ALL {
            let _ = write!(out, ",{}", crate::schema::Label::from(b));
        }
        for p in BinaryPosture::ALL {
            let _ = write!(out, ",{}", crate::schema::Label::from(p));
        }
        out.push('\n');
        for v in &self.videos {
            for b in &v.budgets {
                let _ = write!(
                    out,
                    "{},{},{},{},{},{:.4}",
                    v.video_id,
                    b.window.start,
                    b.window.end,
                    b.frames,
                    b.visible_bird_frames,
                    b.visible_count_mean
                );
                for x in b.fractions.values().chain(b.posture_fractions.values()) {
                    let _ = write!(out, ",{x:.4}");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn flags_csv(&self) -> String {
        let mut out = String::from("video,rule,start_frame,end_frame,observed\n");
        for v in &self.videos {
            for f in &v.flags {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{:.4}",
                    v.video_id, self.rules[f.rule], f.window.start, f.window.end, f.observed
                );
            }
        }
        out
    }
}
