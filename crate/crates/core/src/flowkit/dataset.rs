//! Directory layouts of the supported datasets.
//!
//! - `sintel`: `<root>/{clean|final}/<seq>/frame_NNNN.png`, ground truth in
//!   `<root>/flow/<seq>/frame_NNNN.flo`.
//! - `kitti15`: `<root>/image_2/NNNNNN_10.png` and `_11.png`, ground truth
//!   in `<root>/flow_occ/NNNNNN_10.png` (non-occluded subset in `flow_noc`).
//!   A `_09.png` frame, when present, completes a triplet.
//! - `flat-pairs`: images directly in `<root>`, ordered by the trailing
//!   number in their names; ground truth in `<root>/flow/<stem>.flo` when present.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Sintel,
    Kitti15,
    FlatPairs,
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sintel" => Ok(Self::Sintel),
            "kitti15" | "kitti" => Ok(Self::Kitti15),
            "flat-pairs" | "flat" => Ok(Self::FlatPairs),
            _ => invalid(format!("unknown dataset layout {s:?} (sintel, kitti15, flat-pairs)")),
        }
    }
}

/// Two consecutive frames and optional ground truth for the first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramePair {
    pub sequence: String,
    pub frame: usize,
    pub first: PathBuf,
    pub second: PathBuf,
    pub gt: Option<PathBuf>,
    /// Ground truth restricted to non-occluded pixels (KITTI).
    pub gt_noc: Option<PathBuf>,
}

/// Frames `t-1`, `t`, `t+1`; `frame` is `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameTriplet {
    pub sequence: String,
    pub frame: usize,
    pub prev: PathBuf,
    pub cur: PathBuf,
    pub next: PathBuf,
}

/// A scanned dataset, ordered by sequence name then frame index.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub pairs: Vec<FramePair>,
    pub triplets: Vec<FrameTriplet>,
    /// Items skipped while scanning.
    pub warnings: Vec<String>,
}

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "ppm", "pgm", "pnm"];

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Trailing decimal number of a file stem, e.g. `frame_0012` -> 12.
fn trailing_number(stem: &str) -> Option<usize> {
    let digits: String = stem
        .chars()
        .rev()
        .take_while(char::is_ascii_digit)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?;
    v.sort();
    Ok(v)
}

fn existing(path: PathBuf) -> Option<PathBuf> {
    path.is_file().then_some(path)
}

struct Sink {
    dataset: Dataset,
}

impl Sink {
    fn warn(&mut self, msg: String) {
        warn!("{msg}");
        self.dataset.warnings.push(msg);
    }

    /// Adds pairs and triplets from one sequence of numbered frames.
    fn add_sequence(
        &mut self,
        sequence: &str,
        frames: &BTreeMap<usize, PathBuf>,
        gt: impl Fn(usize) -> Option<PathBuf>,
    ) {
        for (&i, first) in frames {
            match frames.get(&(i + 1)) {
                Some(second) => self.dataset.pairs.push(FramePair {
                    sequence: sequence.to_string(),
                    frame: i,
                    first: first.clone(),
                    second: second.clone(),
                    gt: gt(i),
                    gt_noc: None,
                }),
                None if frames.range(i + 1..).next().is_some() => {
                    self.warn(format!("{sequence}: frame {} missing, skipping pair ({i}, {})", i + 1, i + 1));
                }
                None => {}
            }
            if i > 0 {
                if let (Some(prev), Some(next)) = (frames.get(&(i - 1)), frames.get(&(i + 1))) {
                    self.dataset.triplets.push(FrameTriplet {
                        sequence: sequence.to_string(),
                        frame: i,
                        prev: prev.clone(),
                        cur: first.clone(),
                        next: next.clone(),
                    });
                }
            }
        }
    }
}

fn numbered_images(dir: &Path, sink: &mut Sink) -> Result<BTreeMap<usize, PathBuf>> {
    let mut frames = BTreeMap::new();
    for path in sorted_entries(dir)? {
        if !path.is_file() || !is_image(&path) {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        match trailing_number(stem) {
            Some(n) => {
                if let Some(old) = frames.insert(n, path.clone()) {
                    sink.warn(format!("{}: duplicate frame index {n}, ignoring {}", dir.display(), old.display()));
                }
            }
            None => sink.warn(format!("{}: no frame index in file name, skipped", path.display())),
        }
    }
    Ok(frames)
}

fn ingest_sintel(root: &Path, sink: &mut Sink) -> Result<()> {
    let pass = ["clean", "final"]
        .iter()
        .map(|p| root.join(p))
        .find(|p| p.is_dir())
        .ok_or_else(|| Error::InvalidInput(format!("{}: no clean/ or final/ directory", root.display())))?;
    let flow_dir = root.join("flow");
    for seq_dir in sorted_entries(&pass)? {
        if !seq_dir.is_dir() {
            continue;
        }
        let seq = seq_dir.file_name().and_then(|s| s.to_str()).unwrap_or("").to_string();
        let frames = numbered_images(&seq_dir, sink)?;
        let gt_dir = flow_dir.join(&seq);
        sink.add_sequence(&seq, &frames, |i| {
            let stem = frames[&i].file_stem()?.to_str()?.to_string();
            existing(gt_dir.join(format!("{stem}.flo")))
        });
    }
    Ok(())
}

fn ingest_kitti(root: &Path, sink: &mut Sink) -> Result<()> {
    let image_dir = root.join("image_2");
    if !image_dir.is_dir() {
        return invalid(format!("{}: no image_2/ directory", root.display()));
    }
    let mut scenes: BTreeMap<usize, BTreeMap<usize, PathBuf>> = BTreeMap::new();
    for path in sorted_entries(&image_dir)? {
        if !path.is_file() || !is_image(&path) {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let parsed = stem
            .split_once('_')
            .and_then(|(s, f)| Some((s.parse::<usize>().ok()?, f.parse::<usize>().ok()?)));
        match parsed {
            Some((scene, frame)) => {
                scenes.entry(scene).or_default().insert(frame, path);
            }
            None => sink.warn(format!("{}: not a KITTI frame name, skipped", path.display())),
        }
    }
    for (scene, frames) in scenes {
        let seq = format!("{scene:06}");
        let (Some(first), Some(second)) = (frames.get(&10), frames.get(&11)) else {
            sink.warn(format!("{seq}: frame 10 or 11 missing, skipped"));
            continue;
        };
        let gt = existing(root.join("flow_occ").join(format!("{seq}_10.png")));
        let gt_noc = existing(root.join("flow_noc").join(format!("{seq}_10.png")));
        sink.dataset.pairs.push(FramePair {
            sequence: seq.clone(),
            frame: 10,
            first: first.clone(),
            second: second.clone(),
            gt,
            gt_noc,
        });
        if let Some(prev) = frames.get(&9) {
            sink.dataset.triplets.push(FrameTriplet {
                sequence: seq,
                frame: 10,
                prev: prev.clone(),
                cur: first.clone(),
                next: second.clone(),
            });
        }
    }
    Ok(())
}

fn ingest_flat(root: &Path, sink: &mut Sink) -> Result<()> {
    let frames = numbered_images(root, sink)?;
    let gt_dir = root.join("flow");
    let seq = root
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("flat")
        .to_string();
    sink.add_sequence(&seq, &frames, |i| {
        let stem = frames[&i].file_stem()?.to_str()?.to_string();
        existing(gt_dir.join(format!("{stem}.flo")))
    });
    Ok(())
}

/// Scans `root` according to `layout`. Items with missing frames are
/// skipped with a warning; a dataset without any pair is an error.
pub fn ingest_dataset(root: impl AsRef<Path>, layout: Layout) -> Result<Dataset> {
    let root = root.as_ref();
    if !root.is_dir() {
        return invalid(format!("{} is not a directory", root.display()));
    }
    let mut sink = Sink {
        dataset: Dataset::default(),
    };
    match layout {
        Layout::Sintel => ingest_sintel(root, &mut sink)?,
        Layout::Kitti15 => ingest_kitti(root, &mut sink)?,
        Layout::FlatPairs => ingest_flat(root, &mut sink)?,
    }
    if sink.dataset.pairs.is_empty() {
        return invalid(format!("{}: no frame pairs found", root.display()));
    }
    Ok(sink.dataset)
}
