//! Per-element labelled frame sets: triplet selection, framing, class
//! balancing and stratified splitting.

mod recording;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use recording::{load_recording, sidecar_path, write_recording, Recording, RecordingMeta};

use crate::error::{Error, Result};
use crate::nn::SENSORS;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Element index → three channel indices, closest sensor first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TripletMap {
    triplets: Vec<[usize; 3]>,
}

/// QUGS joint-to-accelerometer selection, 1-based channel numbers.
const QUGS_TRIPLETS: [[usize; 3]; 10] = [
    [21, 22, 26],
    [21, 22, 23],
    [22, 23, 24],
    [23, 24, 25],
    [24, 25, 30],
    [25, 26, 27],
    [26, 27, 28],
    [27, 28, 29],
    [28, 29, 30],
    [25, 29, 30],
];

impl TripletMap {
    pub fn new(triplets: Vec<[usize; 3]>) -> Result<Self> {
        if triplets.is_empty() {
            return Err(Error::Config("triplet map is empty".into()));
        }
        for (i, t) in triplets.iter().enumerate() {
            if t[0] == t[1] || t[0] == t[2] || t[1] == t[2] {
                return Err(Error::Config(format!(
                    "element {i}: channels {t:?} are not distinct"
                )));
            }
        }
        Ok(TripletMap { triplets })
    }

    /// Chain topology: element `i` reads channels `i, i-1, i+1`, replaced at
    /// the ends by the nearest remaining channels (`0 → 0,1,2`,
    /// `n-1 → n-1,n-2,n-3`).
    pub fn chain(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Config(format!(
                "chain triplets need >= 3 channels, got {n}"
            )));
        }
        let triplets = (0..n)
            .map(|i| match i {
                0 => [0, 1, 2],
                i if i == n - 1 => [i, i - 1, i - 2],
                i => [i, i - 1, i + 1],
            })
            .collect();
        TripletMap::new(triplets)
    }

    /// The ten instrumented QUGS joints, as zero-based channel indices.
    pub fn qugs() -> Self {
        let triplets = QUGS_TRIPLETS
            .iter()
            .map(|t| [t[0] - 1, t[1] - 1, t[2] - 1])
            .collect();
        TripletMap { triplets }
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn get(&self, element: usize) -> Option<[usize; 3]> {
        self.triplets.get(element).copied()
    }

    pub fn triplets(&self) -> &[[usize; 3]] {
        &self.triplets
    }

    /// Checks every referenced channel exists in a recording of `channels`.
    pub fn validate_channels(&self, channels: usize) -> Result<()> {
        for (i, t) in self.triplets.iter().enumerate() {
            if let Some(c) = t.iter().find(|&&c| c >= channels) {
                return Err(Error::Config(format!(
                    "element {i} references channel {c}, recording has {channels}"
                )));
            }
        }
        Ok(())
    }
}

/// Columns of the element's triplet as a `[samples, 3]` tensor.
pub fn select_triplet(recording: &Recording, map: &TripletMap, element: usize) -> Result<Tensor> {
    let t = map
        .get(element)
        .ok_or_else(|| Error::Config(format!("element {element} is not in the triplet map")))?;
    let chans = recording.channels();
    for &c in &t {
        if c >= chans.len() {
            return Err(Error::Config(format!(
                "element {element} needs channel {c}, recording has {}",
                chans.len()
            )));
        }
    }
    let s = recording.samples();
    let mut data = Vec::with_capacity(s * SENSORS);
    for k in 0..s {
        data.extend(t.iter().map(|&c| chans[c][k]));
    }
    Tensor::from_vec(&[s, SENSORS], data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// `[1, s_f, 3]`: one input channel, time by sensor.
    pub data: Tensor,
    /// 1 when the element is damaged in the source scenario.
    pub label: usize,
    pub element: usize,
    pub scenario: usize,
    /// Position of the frame within its source signal.
    pub ordinal: usize,
}

/// Cuts a `[s, 3]` signal into `floor(s / s_f)` consecutive frames; the
/// trailing `s mod s_f` samples are dropped.
pub fn partition_frames(
    signal: &Tensor,
    s_f: usize,
    label: usize,
    element: usize,
    scenario: usize,
) -> Result<Vec<Frame>> {
    if signal.rank() != 2 || signal.shape()[1] != SENSORS {
        return Err(Error::Shape(format!(
            "expected [s, 3] signal, got {:?}",
            signal.shape()
        )));
    }
    if s_f == 0 {
        return Err(Error::InvalidParameter("frame length must be >= 1".into()));
    }
    if label > 1 {
        return Err(Error::InvalidParameter(format!(
            "label {label} is not 0 or 1"
        )));
    }
    let s = signal.shape()[0];
    if s < s_f {
        return Err(Error::InsufficientData(format!(
            "{s} samples cannot fill one frame of {s_f}"
        )));
    }
    let width = s_f * SENSORS;
    signal.data()[..(s / s_f) * width]
        .chunks_exact(width)
        .enumerate()
        .map(|(ordinal, chunk)| {
            Ok(Frame {
                data: Tensor::from_vec(&[1, s_f, SENSORS], chunk.to_vec())?,
                label,
                element,
                scenario,
                ordinal,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Validation,
    Unused,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Validation => "validation",
            Split::Unused => "unused",
        }
    }
}

/// Balanced frames for one element with a split assignment per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub element: usize,
    pub frames: Vec<Frame>,
    /// Parallel to `frames`; all `Unused` until [`split`] is applied.
    pub assignment: Vec<Split>,
}

impl FrameSet {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `(N_u, N_d)`: frames labelled 0 and 1.
    pub fn class_counts(&self) -> (usize, usize) {
        let d = self.frames.iter().filter(|f| f.label == 1).count();
        (self.frames.len() - d, d)
    }

    pub fn count(&self, split: Split, label: usize) -> usize {
        self.frames
            .iter()
            .zip(&self.assignment)
            .filter(|(f, &s)| s == split && f.label == label)
            .count()
    }

    pub fn frames_in(&self, split: Split) -> Vec<&Frame> {
        self.frames
            .iter()
            .zip(&self.assignment)
            .filter(|(_, &s)| s == split)
            .map(|(f, _)| f)
            .collect()
    }

    /// Plain CSV audit index: one row per frame.
    pub fn write_manifest(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "index,element,scenario,ordinal,label,split")?;
        for (k, (f, s)) in self.frames.iter().zip(&self.assignment).enumerate() {
            writeln!(
                out,
                "{k},{},{},{},{},{}",
                f.element,
                f.scenario,
                f.ordinal,
                f.label,
                s.as_str()
            )?;
        }
        Ok(())
    }

    pub fn save_manifest(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_manifest(&mut buf).expect("writing to memory");
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Builds the balanced frame set for `element`. Every recording that damages
/// the element contributes all its frames with label 1 (`N_d` in total).
/// Every other recording, including those damaging other elements, is
/// framed and shuffled, and its first `ceil(N_d / H)` frames (for `H`
/// healthy recordings) join a pool that is shuffled and cut to `N_d`.
///
/// Draws from `rng`: one Fisher–Yates shuffle per healthy recording, in
/// recording order, then one over the pool.
pub fn assemble_element_set(
    recordings: &[Recording],
    map: &TripletMap,
    element: usize,
    s_f: usize,
    rng: &mut Rng,
) -> Result<FrameSet> {
    let (damaged, healthy): (Vec<&Recording>, Vec<&Recording>) =
        recordings.iter().partition(|r| r.damages(element));
    if damaged.is_empty() {
        return Err(Error::Coverage(format!(
            "no scenario damages element {element}"
        )));
    }
    if healthy.is_empty() {
        return Err(Error::Coverage(format!(
            "every scenario damages element {element}"
        )));
    }
    let mut frames = Vec::new();
    for rec in &damaged {
        let signal = select_triplet(rec, map, element)?;
        frames.extend(partition_frames(
            &signal,
            s_f,
            1,
            element,
            rec.meta.scenario,
        )?);
    }
    let n_d = frames.len();
    let quota = n_d.div_ceil(healthy.len());
    let mut pool = Vec::with_capacity(quota * healthy.len());
    for rec in &healthy {
        let signal = select_triplet(rec, map, element)?;
        let mut candidates = partition_frames(&signal, s_f, 0, element, rec.meta.scenario)?;
        if candidates.len() < quota {
            return Err(Error::InsufficientData(format!(
                "scenario {} has {} frames, balancing element {element} needs {quota}",
                rec.meta.scenario,
                candidates.len()
            )));
        }
        rng.shuffle(&mut candidates);
        candidates.truncate(quota);
        pool.extend(candidates);
    }
    rng.shuffle(&mut pool);
    pool.truncate(n_d);
    frames.extend(pool);
    let assignment = vec![Split::Unused; frames.len()];
    Ok(FrameSet {
        element,
        frames,
        assignment,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitFractions {
    pub train: f64,
    pub test: f64,
    pub validation: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.5,
            test: 0.125,
            validation: 0.25,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.test, self.validation];
        if parts.iter().any(|f| !(*f > 0.0)) {
            return Err(Error::Split(format!(
                "fractions must all be positive, got {parts:?}"
            )));
        }
        if parts.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(Error::Split(format!("fractions {parts:?} sum above 1")));
        }
        Ok(())
    }
}

/// Stratified split: within each label, frames are shuffled and the first
/// `floor(n·train)` go to train, the next `floor(n·test)` to test, the next
/// `floor(n·validation)` to validation, the rest stay unused. Draws one
/// shuffle for label 0, then one for label 1.
pub fn split(frameset: &mut FrameSet, fractions: &SplitFractions, rng: &mut Rng) -> Result<()> {
    fractions.validate()?;
    let mut assignment = vec![Split::Unused; frameset.frames.len()];
    for label in 0..2 {
        let mut idx: Vec<usize> = (0..frameset.frames.len())
            .filter(|&k| frameset.frames[k].label == label)
            .collect();
        let n = idx.len() as f64;
        let counts = [
            (Split::Train, (n * fractions.train).floor() as usize),
            (Split::Test, (n * fractions.test).floor() as usize),
            (
                Split::Validation,
                (n * fractions.validation).floor() as usize,
            ),
        ];
        if let Some((s, _)) = counts.iter().find(|(_, c)| *c == 0) {
            return Err(Error::Split(format!(
                "element {}: {} split gets no frames of label {label} ({} available)",
                frameset.element,
                s.as_str(),
                idx.len()
            )));
        }
        rng.shuffle(&mut idx);
        let mut it = idx.into_iter();
        for (s, c) in counts {
            for k in it.by_ref().take(c) {
                assignment[k] = s;
            }
        }
    }
    frameset.assignment = assignment;
    Ok(())
}

/// Distinct scenario ids present in a set of frames.
pub fn scenarios_of<'a>(frames: impl IntoIterator<Item = &'a Frame>) -> BTreeSet<usize> {
    frames.into_iter().map(|f| f.scenario).collect()
}
