//! Sample records, JSON-lines file formats, PGM image I/O, and the weighted
//! multi-dataset mixing sampler.
//!
//! Sample files hold one JSON object per line. Numbers round-trip exactly
//! (shortest-representation float formatting). Geometric fields share one
//! coordinate frame per file; the toolkit does not pin a global frame — see
//! the augment module for the crop conventions.

use std::io::BufRead;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::GrayImage;
use crate::error::{Error, Result};
use crate::geometry::{Box2, Quaternion};
use crate::losses::{
    LabelMask, LandmarkLabels, PosSize, SampleLabels, LANDMARK_COUNT, SHAPE_DIM,
};

/// Ground truth or prediction for one image.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub mask: LabelMask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quat: Option<Quaternion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<f64>>,
    /// 68 landmarks with 3 (landmarks3d) or 2 (landmarks2d) coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmarks: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<Box2>,
    /// Raw features of the rotation covariance (prediction side).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rot_cov: Option<[f64; 6]>,
    /// Raw features of the position/size covariance (prediction side).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos_cov: Option<[f64; 6]>,
    /// Optional per-landmark confidences for fitting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmark_confidence: Option<Vec<f64>>,
}

impl SampleRecord {
    /// Record with nothing but an id and an empty mask; callers fill in the
    /// labeled groups and must end up with a valid mask.
    pub fn empty(id: impl Into<String>) -> Self {
        SampleRecord {
            id: id.into(),
            mask: LabelMask::default(),
            quat: None,
            pos: None,
            size: None,
            shape: None,
            landmarks: None,
            bbox: None,
            rot_cov: None,
            pos_cov: None,
            landmark_confidence: None,
        }
    }

    /// Structural validation: finite numbers, unit quaternion, and agreement
    /// between the mask and the present fields.
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, reason: String| -> Result<()> {
            Err(Error::InvalidField {
                field: field.to_string(),
                reason,
            })
        };

        if self.id.is_empty() {
            return fail("id", "must not be empty".into());
        }
        self.mask.validate()?;

        match (&self.quat, self.mask.rotation) {
            (Some(q), _) => {
                for (name, v) in [("x", q.x), ("y", q.y), ("z", q.z), ("w", q.w)] {
                    if !v.is_finite() {
                        return fail("quat", format!("component {name} is not finite ({v})"));
                    }
                }
                if (q.norm() - 1.0).abs() > 1e-6 {
                    return fail("quat", format!("must be unit length, norm = {}", q.norm()));
                }
            }
            (None, true) => return fail("quat", "mask.rotation is set but quat is missing".into()),
            (None, false) => {}
        }

        match (&self.pos, self.size, self.mask.pos_size) {
            (Some(p), Some(s), _) => {
                if !p[0].is_finite() || !p[1].is_finite() {
                    return fail("pos", format!("must be finite, got {p:?}"));
                }
                if s.is_nan() || s <= 0.0 || !s.is_finite() {
                    return fail("size", format!("must be positive and finite, got {s}"));
                }
            }
            (None, None, false) => {}
            (_, _, true) => {
                if self.pos.is_none() || self.size.is_none() {
                    return fail("pos/size", "mask.pos_size is set but fields are missing".into());
                }
            }
            _ => return fail("pos/size", "pos and size must be present together".into()),
        }

        if let Some(shape) = &self.shape {
            if shape.len() != SHAPE_DIM {
                return fail("shape", format!("expected {SHAPE_DIM} coefficients, got {}", shape.len()));
            }
            if let Some(i) = shape.iter().position(|v| !v.is_finite()) {
                return fail("shape", format!("coefficient {i} is not finite"));
            }
        } else if self.mask.shape {
            return fail("shape", "mask.shape is set but shape is missing".into());
        }

        if let Some(lms) = &self.landmarks {
            if lms.len() != LANDMARK_COUNT {
                return fail(
                    "landmarks",
                    format!("expected {LANDMARK_COUNT} landmarks, got {}", lms.len()),
                );
            }
            let dim = if self.mask.landmarks3d {
                3
            } else if self.mask.landmarks2d {
                2
            } else {
                return fail(
                    "landmarks",
                    "landmarks present but no landmark mask bit is set".into(),
                );
            };
            for (i, p) in lms.iter().enumerate() {
                if p.len() != dim {
                    return fail(
                        "landmarks",
                        format!("landmark {i} has {} coordinates, expected {dim}", p.len()),
                    );
                }
                if let Some(c) = p.iter().position(|v| !v.is_finite()) {
                    return fail("landmarks", format!("landmark {i} coordinate {c} is not finite"));
                }
            }
        } else if self.mask.has_landmarks() {
            return fail("landmarks", "landmark mask bit set but landmarks are missing".into());
        }

        if let Some(bb) = &self.bbox {
            for (name, v) in [("cx", bb.cx), ("cy", bb.cy), ("w", bb.w), ("h", bb.h)] {
                if !v.is_finite() {
                    return fail("bbox", format!("{name} is not finite ({v})"));
                }
            }
            if bb.w <= 0.0 || bb.h <= 0.0 {
                return fail("bbox", format!("sides must be positive, got {}x{}", bb.w, bb.h));
            }
        } else if self.mask.bbox {
            return fail("bbox", "mask.bbox is set but bbox is missing".into());
        }

        for (name, cov) in [("rot_cov", &self.rot_cov), ("pos_cov", &self.pos_cov)] {
            if let Some(m) = cov {
                if let Some(i) = m.iter().position(|v| !v.is_finite()) {
                    return fail(name, format!("feature {i} is not finite"));
                }
            }
        }

        if let Some(conf) = &self.landmark_confidence {
            if self.landmarks.is_none() {
                return fail(
                    "landmark_confidence",
                    "present without landmarks".into(),
                );
            }
            if conf.len() != LANDMARK_COUNT {
                return fail(
                    "landmark_confidence",
                    format!("expected {LANDMARK_COUNT} values, got {}", conf.len()),
                );
            }
            if let Some(i) = conf.iter().position(|v| v.is_nan() || *v < 0.0 || !v.is_finite()) {
                return fail("landmark_confidence", format!("value {i} must be >= 0"));
            }
        }

        Ok(())
    }

    /// Converts the labeled groups into the loss-module label struct.
    pub fn to_labels(&self) -> Result<SampleLabels> {
        self.validate()?;
        let landmarks = match &self.landmarks {
            None => None,
            Some(lms) => {
                if self.mask.landmarks2d {
                    Some(LandmarkLabels::TwoD(
                        lms.iter().map(|p| [p[0], p[1]]).collect(),
                    ))
                } else {
                    Some(LandmarkLabels::ThreeD(
                        lms.iter().map(|p| [p[0], p[1], p[2]]).collect(),
                    ))
                }
            }
        };
        Ok(SampleLabels {
            mask: self.mask,
            quat: self.quat,
            pos_size: match (self.pos, self.size) {
                (Some(p), Some(s)) => Some(PosSize::new(p[0], p[1], s)),
                _ => None,
            },
            shape: self.shape.clone(),
            landmarks,
            bbox: self.bbox,
        })
    }
}

/// Writes bytes to `path` atomically (same-directory temp file + rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = dir.to_path_buf();
    let stem = path
        .file_name()
        .map(|n| n.to_string_lossy().to_string())
        .unwrap_or_else(|| "out".to_string());
    tmp.push(format!(".{stem}.tmp"));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a JSON-lines sample file. Errors carry the 1-based line number and
/// the offending field.
pub fn read_samples(path: &Path) -> Result<Vec<SampleRecord>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SampleRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                line: idx + 1,
                message: e.to_string(),
            })?;
        record.validate().map_err(|e| Error::MalformedLine {
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Serializes records one JSON object per line. Every record is validated
/// first, so files on disk are always well formed.
pub fn write_samples(path: &Path, records: &[SampleRecord]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        r.validate()?;
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

/// Encodes an image as a binary (P5) portable graymap.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

/// Decodes a binary (P5) portable graymap with maxval 255.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let bad = |reason: &str| Error::InvalidInput(format!("pgm: {reason}"));

    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        // skip whitespace and comment lines
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::InvalidInput("pgm: truncated header".to_string()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).to_string())
    };

    if token(bytes)? != "P5" {
        return Err(bad("expected magic P5"));
    }
    let width: usize = token(bytes)?.parse().map_err(|_| bad("bad width"))?;
    let height: usize = token(bytes)?.parse().map_err(|_| bad("bad height"))?;
    let maxval: usize = token(bytes)?.parse().map_err(|_| bad("bad maxval"))?;
    if maxval != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    if bytes.len() < pos || bytes.len() - pos < width * height {
        return Err(bad("truncated pixel data"));
    }
    GrayImage::new(width, height, bytes[pos..pos + width * height].to_vec())
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    decode_pgm(&std::fs::read(path)?)
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    write_atomic(path, &encode_pgm(img))
}

/// One dataset in a mix.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    pub size: usize,
}

/// Weighted mixture of datasets; probabilities live on the simplex.
///
/// Probability vectors summing to anything in [0.99, 1.01] are renormalized
/// (the `renormalized` flag records that this happened); anything further
/// from 1 is rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMix {
    entries: Vec<DatasetEntry>,
    probs: Vec<f64>,
    renormalized: bool,
}

impl DatasetMix {
    pub fn new(entries: Vec<DatasetEntry>, probs: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyInput("dataset mix"));
        }
        if entries.len() != probs.len() {
            return Err(Error::DimensionMismatch {
                name: "mix probabilities",
                expected: entries.len(),
                got: probs.len(),
            });
        }
        for (i, e) in entries.iter().enumerate() {
            if e.size == 0 {
                return Err(Error::InvalidField {
                    field: format!("datasets[{i}]"),
                    reason: format!("dataset `{}` is empty", e.name),
                });
            }
        }
        for (i, p) in probs.iter().enumerate() {
            if p.is_nan() || *p < 0.0 || !p.is_finite() {
                return Err(Error::InvalidField {
                    field: format!("probs[{i}]"),
                    reason: format!("must be >= 0, got {p}"),
                });
            }
        }
        let sum: f64 = probs.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidInput("mix probabilities sum to zero".to_string()));
        }
        let (probs, renormalized) = if (sum - 1.0).abs() <= 1e-9 {
            (probs, false)
        } else if (0.99..=1.01).contains(&sum) {
            (probs.iter().map(|p| p / sum).collect(), true)
        } else {
            return Err(Error::InvalidInput(format!(
                "mix probabilities sum to {sum}, expected 1 (or within [0.99, 1.01] for renormalization)"
            )));
        };
        Ok(DatasetMix {
            entries,
            probs,
            renormalized,
        })
    }

    pub fn entries(&self) -> &[DatasetEntry] {
        &self.entries
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// True when the input probabilities needed renormalization.
    pub fn renormalized(&self) -> bool {
        self.renormalized
    }
}

/// Mix specification as stored on disk.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MixSpec {
    pub datasets: Vec<DatasetEntry>,
    pub probs: Vec<f64>,
    pub seed: u64,
}

impl MixSpec {
    pub fn to_mix(&self) -> Result<DatasetMix> {
        DatasetMix::new(self.datasets.clone(), self.probs.clone())
    }
}

/// Infinite sampler: picks a dataset by its probability, then a sample
/// uniformly within it, both with replacement.
pub struct MixSampler {
    sizes: Vec<usize>,
    weighted: WeightedIndex<f64>,
    rng: ChaCha8Rng,
}

impl MixSampler {
    pub fn new(mix: &DatasetMix, seed: u64) -> Self {
        let weighted = WeightedIndex::new(mix.probs().iter().copied())
            .expect("mix probabilities validated at construction");
        MixSampler {
            sizes: mix.entries().iter().map(|e| e.size).collect(),
            weighted,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Next (dataset index, sample index) pair.
    pub fn draw(&mut self) -> (usize, usize) {
        let d = self.weighted.sample(&mut self.rng);
        let s = self.rng.random_range(0..self.sizes[d]);
        (d, s)
    }
}

impl Iterator for MixSampler {
    type Item = (usize, usize);

    fn next(&mut self) -> Option<(usize, usize)> {
        Some(self.draw())
    }
}
