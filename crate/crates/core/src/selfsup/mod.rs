//! Self-supervision: augmentation, teacher labels for cropped students, and
//! multi-frame labels whose occluded regions are inpainted by a per-frame
//! inversion of the backward flow.

mod augment;
mod inversion;

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

pub use augment::{
    apply_eraser, augment_pair, flip_flow, flip_image, geometric_augment, photometric_augment,
    sample_record, transform_flow_label, AugmentRanges, AugmentRecord, Rect,
};
pub use inversion::{
    inpaint_occluded_flow, inversion_error, inversion_loss, train_inversion_model, ConvLayer,
    InversionHyper, TinyInversionModel,
};

use crate::error::{invalid, Error, Result};
use crate::field::{FlowField, Image, Plane};
use crate::flowkit::flo;
use crate::objectives::CropWindow;
use crate::solver::{solve, FlowEstimator, SolverConfig};

/// Where a label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelProvenance {
    TwoFrameTeacher,
    MultiFrameInpainted,
}

impl LabelProvenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::TwoFrameTeacher => "twoframe",
            Self::MultiFrameInpainted => "multiframe",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "twoframe" => Some(Self::TwoFrameTeacher),
            "multiframe" => Some(Self::MultiFrameInpainted),
            _ => None,
        }
    }
}

/// A frozen flow target for the self-supervision loss.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfSupLabel {
    pub flow: FlowField,
    pub valid: Plane,
    pub provenance: LabelProvenance,
}

/// Runs `estimator` on the clean full frames and maps its output into the
/// student geometry described by `record`.
pub fn generate_selfsup_label(
    i1_full: &Image,
    i2_full: &Image,
    estimator: &dyn FlowEstimator,
    record: &AugmentRecord,
) -> Result<SelfSupLabel> {
    if i1_full.height() != i2_full.height() || i1_full.width() != i2_full.width() {
        return invalid("teacher frames must share dimensions");
    }
    let teacher = estimator.estimate(i1_full, i2_full)?;
    transform_flow_label(&teacher, record)
}

/// Settings for multi-frame label generation.
#[derive(Debug, Clone, Default)]
pub struct MultiFrameConfig {
    pub solver: SolverConfig,
    pub inversion: InversionHyper,
}

/// Result of [`multi_frame_label`], with the intermediates kept for diagnostics.
#[derive(Debug, Clone)]
pub struct MultiFrameOutput {
    pub label: SelfSupLabel,
    /// Estimated `t -> t+1` flow.
    pub forward: FlowField,
    /// Estimated `t -> t-1` flow.
    pub backward: FlowField,
    /// Visibility of frame `t` in frame `t+1` used for training and blending.
    pub occlusion: Plane,
}

/// Zeroes `mask` wherever `flow` sends a pixel outside the frame.
fn mask_out_of_frame(mask: &mut Plane, flow: &FlowField, sign: f64) {
    let (h, w) = (flow.height() as f64, flow.width() as f64);
    for y in 0..flow.height() {
        for x in 0..flow.width() {
            let (u, v) = flow.get(y, x);
            let (tx, ty) = (x as f64 + sign * u, y as f64 + sign * v);
            if tx < 0.0 || ty < 0.0 || tx > w - 1.0 || ty > h - 1.0 {
                mask.set(y, x, 0.0);
            }
        }
    }
}

/// Label for frame `t` from frames `t-1`, `t`, `t+1`: the forward flow with
/// occluded pixels replaced by the inversion of the backward flow.
pub fn multi_frame_label(
    prev: &Image,
    cur: &Image,
    next: &Image,
    config: &MultiFrameConfig,
) -> Result<MultiFrameOutput> {
    for (name, img) in [("previous", prev), ("next", next)] {
        if img.height() != cur.height() || img.width() != cur.width() {
            return invalid(format!("{name} frame does not match the current frame's dimensions"));
        }
    }
    let crop = CropWindow::full(cur.height(), cur.width());
    let fwd = solve(cur, next, &crop, &config.solver, None)?;
    let bwd = solve(cur, prev, &crop, &config.solver, None)?;
    let forward = fwd.sequence.final_flow().clone();
    let backward = bwd.sequence.final_flow().clone();
    let mut occlusion = fwd.occlusion;
    mask_out_of_frame(&mut occlusion, &forward, 1.0);
    // constant-velocity extrapolation of the backward flow catches exits the
    // forward solve shortened to stay in frame
    mask_out_of_frame(&mut occlusion, &backward, -1.0);
    let model = train_inversion_model(&backward, &forward, &occlusion, &config.inversion)?;
    let label = inpaint_occluded_flow(&forward, &model, &backward, &occlusion)?;
    Ok(MultiFrameOutput {
        label,
        forward,
        backward,
        occlusion,
    })
}

/// Identifies one frame's label in a [`LabelStore`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabelKey {
    pub sequence: String,
    pub frame: usize,
}

impl LabelKey {
    pub fn new(sequence: impl Into<String>, frame: usize) -> Self {
        Self {
            sequence: sequence.into(),
            frame,
        }
    }
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub key: LabelKey,
    pub provenance: LabelProvenance,
    pub seed: u64,
}

/// Directory of `.flo` labels, `<root>/<sequence>/frame_NNNN.flo`, plus an
/// append-only `manifest.txt` with one tab-separated line per write.
///
/// Writers of distinct keys may run concurrently: each flow is written to a
/// private temporary file and renamed into place, and each manifest line is
/// appended with a single write.
#[derive(Debug, Clone)]
pub struct LabelStore {
    root: PathBuf,
}

const MANIFEST: &str = "manifest.txt";

impl LabelStore {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn check_key(key: &LabelKey) -> Result<()> {
        let s = &key.sequence;
        if s.is_empty()
            || s == "."
            || s == ".."
            || s.chars().any(|c| c == '/' || c == '\\' || c == '\t' || c == '\n')
        {
            return invalid(format!("invalid sequence name {s:?}"));
        }
        Ok(())
    }

    pub fn path_for(&self, key: &LabelKey) -> PathBuf {
        self.root
            .join(&key.sequence)
            .join(format!("frame_{:04}.flo", key.frame))
    }

    pub fn write(&self, key: &LabelKey, label: &SelfSupLabel, seed: u64) -> Result<()> {
        Self::check_key(key)?;
        let path = self.path_for(key);
        let dir = path.parent().expect("label path has a parent");
        fs::create_dir_all(dir)?;
        let bytes = flo::write_flo(&label.flow)?;
        let tmp = dir.join(format!(
            ".frame_{:04}.{}.tmp",
            key.frame,
            std::process::id()
        ));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, &path)?;
        let line = format!(
            "{}\t{}\t{}\t{}\n",
            key.sequence,
            key.frame,
            label.provenance.as_str(),
            seed
        );
        let mut manifest = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.root.join(MANIFEST))?;
        manifest.write_all(line.as_bytes())?;
        Ok(())
    }

    /// Manifest entries sorted by key; the last line for a key wins.
    pub fn manifest(&self) -> Result<Vec<ManifestEntry>> {
        let path = self.root.join(MANIFEST);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut entries = std::collections::BTreeMap::new();
        let mut offset = 0usize;
        for line in text.lines() {
            let parse = || -> Option<ManifestEntry> {
                let mut parts = line.split('\t');
                let sequence = parts.next()?.to_string();
                let frame = parts.next()?.parse().ok()?;
                let provenance = LabelProvenance::parse(parts.next()?)?;
                let seed = parts.next()?.parse().ok()?;
                parts.next().is_none().then_some(ManifestEntry {
                    key: LabelKey { sequence, frame },
                    provenance,
                    seed,
                })
            };
            if !line.is_empty() {
                let entry = parse().ok_or_else(|| Error::Format {
                    offset,
                    message: format!("malformed manifest line {line:?}"),
                })?;
                entries.insert(entry.key.clone(), entry);
            }
            offset += line.len() + 1;
        }
        Ok(entries.into_values().collect())
    }

    pub fn read(&self, key: &LabelKey) -> Result<SelfSupLabel> {
        Self::check_key(key)?;
        let entry = self
            .manifest()?
            .into_iter()
            .find(|e| &e.key == key)
            .ok_or_else(|| Error::InvalidInput(format!("no manifest entry for {key:?}")))?;
        let record = flo::read_flo(&fs::read(self.path_for(key))?)?;
        Ok(SelfSupLabel {
            flow: record.flow,
            valid: record.valid,
            provenance: entry.provenance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    struct Fixed(FlowField);

    impl FlowEstimator for Fixed {
        fn estimate(&self, _: &Image, _: &Image) -> Result<FlowField> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn identity_record_returns_teacher() {
        let img = synth::texture(12, 10, 3, 1);
        let teacher = FlowField::from_fn(12, 10, |y, x| (x as f64 * 0.1, -(y as f64) * 0.2));
        let label = generate_selfsup_label(
            &img,
            &img,
            &Fixed(teacher.clone()),
            &AugmentRecord::identity(12, 10),
        )
        .unwrap();
        assert_eq!(label.flow, teacher);
        assert_eq!(label.provenance, LabelProvenance::TwoFrameTeacher);
    }

    #[test]
    fn store_roundtrip_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let store = LabelStore::open(dir.path()).unwrap();
        let label = SelfSupLabel {
            flow: FlowField::from_fn(3, 4, |y, x| (x as f64 + 0.25, y as f64 - 0.5)),
            valid: Plane::filled(3, 4, 1.0),
            provenance: LabelProvenance::MultiFrameInpainted,
        };
        let k1 = LabelKey::new("alley", 2);
        let k0 = LabelKey::new("alley", 1);
        store.write(&k1, &label, 9).unwrap();
        store.write(&k0, &label, 4).unwrap();
        let back = store.read(&k1).unwrap();
        assert_eq!(back, label);
        let m = store.manifest().unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].key, k0);
        assert_eq!(m[1].seed, 9);
        assert!(store.write(&LabelKey::new("../x", 0), &label, 0).is_err());
    }

    #[test]
    fn concurrent_writers_on_distinct_keys() {
        let dir = tempfile::tempdir().unwrap();
        let store = LabelStore::open(dir.path()).unwrap();
        std::thread::scope(|s| {
            for t in 0..8 {
                let store = &store;
                s.spawn(move || {
                    for f in 0..5 {
                        let label = SelfSupLabel {
                            flow: FlowField::constant(4, 4, t as f64, f as f64),
                            valid: Plane::filled(4, 4, 1.0),
                            provenance: LabelProvenance::TwoFrameTeacher,
                        };
                        store
                            .write(&LabelKey::new(format!("seq{t}"), f), &label, (t * 10 + f) as u64)
                            .unwrap();
                    }
                });
            }
        });
        let m = store.manifest().unwrap();
        assert_eq!(m.len(), 40);
        for e in &m {
            let l = store.read(&e.key).unwrap();
            let t: f64 = e.key.sequence[3..].parse().unwrap();
            assert_eq!(l.flow.get(0, 0), (t, e.key.frame as f64));
        }
    }
}
