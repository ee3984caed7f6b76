//! Grounding records: construction from masks and JSONL storage.
//!
//! Each target stores its box and centroid alongside the mask path so records
//! are usable without the mask files. Strict reads re-derive both from the
//! masks and reject any mismatch.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{mask_centroid, mask_to_box, BoundingBox, GeometryError, MaskGrid, Point};
use crate::parser::{is_valid_label, GroundingEntry};
use crate::pgm::{self, PgmError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("target {target_index}: {source}")]
    EmptyMask {
        target_index: usize,
        #[source]
        source: GeometryError,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}, target {target_index}: stored {field} does not match the mask")]
    DerivationMismatch {
        line: usize,
        target_index: usize,
        field: &'static str,
    },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Pgm(#[from] PgmError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordTarget {
    pub affordance: String,
    pub mask_path: String,
    pub bbox: BoundingBox,
    pub centroid: Point,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundingRecord {
    pub id: String,
    pub image_path: String,
    pub instruction: String,
    pub targets: Vec<RecordTarget>,
}

impl GroundingRecord {
    /// Targets as ground-truth grounding entries (box, centroid, label).
    pub fn ground_truth(&self) -> Vec<GroundingEntry> {
        self.targets
            .iter()
            .map(|t| {
                GroundingEntry::new(t.bbox, t.centroid, t.affordance.clone())
                    .expect("record labels are validated on construction")
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.targets.is_empty() {
            return Err(DatasetError::InvalidRecord(format!(
                "record {:?} has no targets",
                self.id
            )));
        }
        for (i, t) in self.targets.iter().enumerate() {
            if !is_valid_label(&t.affordance) {
                return Err(DatasetError::InvalidRecord(format!(
                    "record {:?} target {i}: invalid affordance label {:?}",
                    self.id, t.affordance
                )));
            }
        }
        Ok(())
    }
}

/// A target mask with its label, as input to [`build_record`].
#[derive(Debug, Clone)]
pub struct LabeledMask {
    pub affordance: String,
    pub mask_path: String,
    pub mask: MaskGrid,
}

/// Derives each target's box (extremal foreground pixels) and centroid.
pub fn build_record(
    id: impl Into<String>,
    image_path: impl Into<String>,
    instruction: impl Into<String>,
    masks: &[LabeledMask],
) -> Result<GroundingRecord, DatasetError> {
    let mut targets = Vec::with_capacity(masks.len());
    for (target_index, m) in masks.iter().enumerate() {
        let wrap = |source| DatasetError::EmptyMask {
            target_index,
            source,
        };
        targets.push(RecordTarget {
            affordance: m.affordance.clone(),
            mask_path: m.mask_path.clone(),
            bbox: mask_to_box(&m.mask).map_err(wrap)?,
            centroid: mask_centroid(&m.mask).map_err(wrap)?,
        });
    }
    let record = GroundingRecord {
        id: id.into(),
        image_path: image_path.into(),
        instruction: instruction.into(),
        targets,
    };
    record.validate()?;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReadMode {
    /// Trust stored boxes and centroids.
    Lenient,
    /// Re-derive from mask files resolved against `mask_root`.
    Strict { mask_root: PathBuf },
}

pub fn records_to_jsonl(records: &[GroundingRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serialization cannot fail"));
        out.push('\n');
    }
    out
}

pub fn write_records(
    path: impl AsRef<Path>,
    records: &[GroundingRecord],
) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(records_to_jsonl(records).as_bytes())
        .and_then(|_| w.flush())
        .map_err(io_err(path))
}

/// Parses JSONL text; blank lines are skipped. Line numbers are 1-based.
pub fn parse_records(text: &str, mode: &ReadMode) -> Result<Vec<GroundingRecord>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: GroundingRecord =
            serde_json::from_str(line).map_err(|e| DatasetError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        record.validate().map_err(|e| DatasetError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if let ReadMode::Strict { mask_root } = mode {
            verify_derived(&record, mask_root, line_no)?;
        }
        out.push(record);
    }
    Ok(out)
}

pub fn read_records(
    path: impl AsRef<Path>,
    mode: &ReadMode,
) -> Result<Vec<GroundingRecord>, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_records(&text, mode)
}

fn verify_derived(
    record: &GroundingRecord,
    mask_root: &Path,
    line: usize,
) -> Result<(), DatasetError> {
    for (target_index, t) in record.targets.iter().enumerate() {
        let mask = pgm::read_mask(mask_root.join(&t.mask_path))?;
        let mismatch = |field| DatasetError::DerivationMismatch {
            line,
            target_index,
            field,
        };
        let bbox = mask_to_box(&mask).map_err(|_| mismatch("bbox"))?;
        if bbox != t.bbox {
            return Err(mismatch("bbox"));
        }
        let centroid = mask_centroid(&mask).map_err(|_| mismatch("centroid"))?;
        if centroid != t.centroid {
            return Err(mismatch("centroid"));
        }
    }
    Ok(())
}

/// Builds records from a directory with one sub-directory per sample:
///
/// ```text
/// <root>/<id>/instruction.txt     instruction text
/// <root>/<id>/image.txt           optional image path (default "<id>.jpg")
/// <root>/<id>/<k>_<label>.pgm     target masks, ordered by integer k
/// ```
///
/// Samples are ordered by id; mask paths are stored relative to `root`.
pub fn convert_directory(root: impl AsRef<Path>) -> Result<Vec<GroundingRecord>, DatasetError> {
    let root = root.as_ref();
    let mut ids: Vec<String> = fs::read_dir(root)
        .map_err(io_err(root))?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().map(|t| t.is_dir()).unwrap_or(false))
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    ids.sort();

    let mut records = Vec::with_capacity(ids.len());
    for id in ids {
        let dir = root.join(&id);
        let instruction_path = dir.join("instruction.txt");
        let instruction = fs::read_to_string(&instruction_path)
            .map_err(io_err(&instruction_path))?
            .trim()
            .to_string();
        let image_path = match fs::read_to_string(dir.join("image.txt")) {
            Ok(s) => s.trim().to_string(),
            Err(e) if e.kind() == io::ErrorKind::NotFound => format!("{id}.jpg"),
            Err(e) => return Err(io_err(&dir.join("image.txt"))(e)),
        };

        let mut masks: Vec<(u64, String, String)> = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let entry = entry.map_err(io_err(&dir))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let Some(stem) = name.strip_suffix(".pgm") else {
                continue;
            };
            let (k, label) = stem
                .split_once('_')
                .and_then(|(k, l)| Some((k.parse::<u64>().ok()?, l.to_string())))
                .ok_or_else(|| {
                    DatasetError::InvalidRecord(format!(
                        "{id}/{name}: mask files must be named <index>_<label>.pgm"
                    ))
                })?;
            masks.push((k, label, name));
        }
        masks.sort();

        let labeled = masks
            .into_iter()
            .map(|(_, affordance, name)| {
                let mask = pgm::read_mask(dir.join(&name))?;
                Ok(LabeledMask {
                    affordance,
                    mask_path: format!("{id}/{name}"),
                    mask,
                })
            })
            .collect::<Result<Vec<_>, DatasetError>>()?;
        records.push(build_record(id, image_path, instruction, &labeled)?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rasterize_box;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labeled(label: &str, mask: MaskGrid) -> LabeledMask {
        LabeledMask {
            affordance: label.into(),
            mask_path: format!("{label}.pgm"),
            mask,
        }
    }

    fn random_mask(rng: &mut ChaCha8Rng) -> MaskGrid {
        let (w, h) = (rng.random_range(1..20u32), rng.random_range(1..20u32));
        let mut bits: Vec<bool> = (0..w * h).map(|_| rng.random_bool(0.3)).collect();
        let k = rng.random_range(0..bits.len());
        bits[k] = true;
        MaskGrid::from_bools(w, h, &bits).unwrap()
    }

    #[test]
    fn full_frame_target() {
        let m = MaskGrid::new(9, 5, vec![1.0; 45]).unwrap();
        let r = build_record("a", "a.jpg", "open it", &[labeled("openable", m)]).unwrap();
        assert_eq!(r.targets[0].bbox, BoundingBox::new(0, 0, 8, 4).unwrap());
        assert_eq!(r.targets[0].centroid, Point::new(4, 2));
    }

    #[test]
    fn target_order_and_errors() {
        let a = rasterize_box(&BoundingBox::new(0, 0, 1, 1).unwrap(), 8, 8).unwrap();
        let b = rasterize_box(&BoundingBox::new(4, 4, 7, 7).unwrap(), 8, 8).unwrap();
        let r = build_record(
            "x",
            "x.jpg",
            "i",
            &[labeled("first", a.clone()), labeled("second", b)],
        )
        .unwrap();
        let labels: Vec<&str> = r.targets.iter().map(|t| t.affordance.as_str()).collect();
        assert_eq!(labels, ["first", "second"]);

        let empty = MaskGrid::zeros(4, 4).unwrap();
        let err = build_record(
            "x",
            "x.jpg",
            "i",
            &[labeled("ok", a.clone()), labeled("bad", empty)],
        )
        .unwrap_err();
        assert!(matches!(
            err,
            DatasetError::EmptyMask {
                target_index: 1,
                ..
            }
        ));
        assert!(build_record("x", "x.jpg", "i", &[]).is_err());
        assert!(build_record("x", "x.jpg", "i", &[labeled("Bad", a)]).is_err());
    }

    #[test]
    fn random_records_match_geometry_and_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut records = Vec::new();
        for i in 0..100 {
            let n = rng.random_range(1..4);
            let masks: Vec<LabeledMask> = (0..n)
                .map(|_| labeled("graspable", random_mask(&mut rng)))
                .collect();
            let r = build_record(
                format!("r{i}"),
                format!("img/{i}.jpg"),
                "pick it up",
                &masks,
            )
            .unwrap();
            for (t, m) in r.targets.iter().zip(&masks) {
                let pts: Vec<Point> = m.mask.foreground().collect();
                assert_eq!(t.bbox.x1(), pts.iter().map(|p| p.x).min().unwrap());
                assert_eq!(t.bbox.y2(), pts.iter().map(|p| p.y).max().unwrap());
                let mx = pts.iter().map(|p| p.x as f64).sum::<f64>() / pts.len() as f64;
                assert_eq!(t.centroid.x, mx.round() as u32);
            }
            records.push(r);
        }
        let text = records_to_jsonl(&records);
        assert_eq!(parse_records(&text, &ReadMode::Lenient).unwrap(), records);
    }

    #[test]
    fn empty_input_and_parse_errors() {
        assert!(parse_records("", &ReadMode::Lenient).unwrap().is_empty());
        let err = parse_records("\n{not json}\n", &ReadMode::Lenient).unwrap_err();
        assert!(matches!(err, DatasetError::Parse { line: 2, .. }));
        let no_targets = r#"{"id":"a","image_path":"a","instruction":"i","targets":[]}"#;
        assert!(matches!(
            parse_records(no_targets, &ReadMode::Lenient),
            Err(DatasetError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn stable_field_order() {
        let m = rasterize_box(&BoundingBox::new(1, 1, 2, 2).unwrap(), 4, 4).unwrap();
        let r = build_record("id1", "i.jpg", "grab", &[labeled("graspable", m)]).unwrap();
        assert_eq!(
            records_to_jsonl(&[r]),
            "{\"id\":\"id1\",\"image_path\":\"i.jpg\",\"instruction\":\"grab\",\"targets\":[{\"affordance\":\"graspable\",\"mask_path\":\"graspable.pgm\",\"bbox\":[1,1,2,2],\"centroid\":[2,2]}]}\n"
        );
    }

    #[test]
    fn strict_mode_detects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let m = rasterize_box(&BoundingBox::new(2, 3, 5, 6).unwrap(), 10, 10).unwrap();
        pgm::write_mask(dir.path().join("graspable.pgm"), &m).unwrap();
        let r = build_record("a", "a.jpg", "i", &[labeled("graspable", m)]).unwrap();
        let strict = ReadMode::Strict {
            mask_root: dir.path().to_path_buf(),
        };
        let good = records_to_jsonl(std::slice::from_ref(&r));
        assert_eq!(parse_records(&good, &strict).unwrap(), vec![r.clone()]);

        let mut bad = r;
        bad.targets[0].bbox = BoundingBox::new(2, 3, 5, 7).unwrap();
        let text = records_to_jsonl(&[bad]);
        assert!(parse_records(&text, &ReadMode::Lenient).is_ok());
        assert!(matches!(
            parse_records(&text, &strict),
            Err(DatasetError::DerivationMismatch { field: "bbox", .. })
        ));
    }

    #[test]
    fn convert_directory_layout() {
        let dir = tempfile::tempdir().unwrap();
        let sample = dir.path().join("s1");
        fs::create_dir(&sample).unwrap();
        fs::write(sample.join("instruction.txt"), "  reheat the food\n").unwrap();
        let a = rasterize_box(&BoundingBox::new(0, 0, 3, 3).unwrap(), 8, 8).unwrap();
        let b = rasterize_box(&BoundingBox::new(5, 5, 7, 7).unwrap(), 8, 8).unwrap();
        pgm::write_mask(sample.join("10_graspable.pgm"), &b).unwrap();
        pgm::write_mask(sample.join("2_openable.pgm"), &a).unwrap();
        let records = convert_directory(dir.path()).unwrap();
        assert_eq!(records.len(), 1);
        let r = &records[0];
        assert_eq!(r.image_path, "s1.jpg");
        assert_eq!(r.instruction, "reheat the food");
        assert_eq!(r.targets[0].mask_path, "s1/2_openable.pgm");
        assert_eq!(r.targets[1].affordance, "graspable");
        let strict = ReadMode::Strict {
            mask_root: dir.path().to_path_buf(),
        };
        assert!(parse_records(&records_to_jsonl(&records), &strict).is_ok());
    }
}
