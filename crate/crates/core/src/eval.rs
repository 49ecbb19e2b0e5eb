//! Evaluation protocol: the 99° pose filter, Euler/MAE and geodesic metrics,
//! normalized mean 2D landmark error, noise-resistance sweeps, and the
//! uncertainty-error correlation.
//!
//! All reductions run in a fixed order (ground-truth file order), so reports
//! are byte-stable across runs for identical inputs.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::augment::GrayImage;
use crate::data::SampleRecord;
use crate::error::{Error, Result};
use crate::geometry::{
    geodesic_error, mean_quaternion, to_euler, Covariance3, Quaternion, DEFAULT_COV_EPS,
};

/// Aggregate evaluation report.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    pub sample_count: usize,
    pub yaw_mae_deg: f64,
    pub pitch_mae_deg: f64,
    pub roll_mae_deg: f64,
    /// Mean of the three Euler columns.
    pub mae_deg: f64,
    pub geodesic_mean_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nme2d_percent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nme2d_skipped: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sweep: Option<Vec<NoiseSweepPoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<CorrelationReport>,
}

/// One σ level of a noise-resistance sweep.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseSweepPoint {
    pub sigma: f64,
    /// RMS geodesic distance of the trials from their mean, in degrees,
    /// averaged over the dataset.
    pub spread_deg: f64,
    /// Geodesic error of the trial-mean orientation vs ground truth.
    pub geo_error_of_mean_deg: f64,
}

/// Correlation between predicted rotation uncertainty and realized error.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CorrelationReport {
    pub pearson: f64,
    pub spearman: f64,
    /// Set when a correlation was undefined (zero variance) and reported
    /// as 0.
    pub degenerate: bool,
    /// (Frobenius norm of Σ̂_rot, geodesic error in degrees) per sample.
    pub points: Vec<[f64; 2]>,
}

/// Drops records whose ground-truth yaw, pitch or roll exceeds 99° in
/// magnitude.
pub fn filter_protocol(records: &[SampleRecord]) -> Result<Vec<SampleRecord>> {
    let mut kept = Vec::with_capacity(records.len());
    for r in records {
        let q = r.quat.as_ref().ok_or_else(|| Error::InvalidField {
            field: format!("{}.quat", r.id),
            reason: "the 99° filter needs ground-truth rotations".to_string(),
        })?;
        let e = to_euler(q);
        if e.yaw.abs() <= 99.0 && e.pitch.abs() <= 99.0 && e.roll.abs() <= 99.0 {
            kept.push(r.clone());
        }
    }
    Ok(kept)
}

/// Pairs predictions with ground truth by id, in ground-truth order.
fn align<'a>(
    preds: &'a [SampleRecord],
    gts: &'a [SampleRecord],
) -> Result<Vec<(&'a SampleRecord, &'a SampleRecord)>> {
    let by_id: HashMap<&str, &SampleRecord> =
        preds.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut missing = Vec::new();
    let mut pairs = Vec::with_capacity(gts.len());
    for gt in gts {
        match by_id.get(gt.id.as_str()) {
            Some(p) => pairs.push((*p, gt)),
            None => missing.push(gt.id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::IdMismatch { missing });
    }
    Ok(pairs)
}

fn require_quat(r: &SampleRecord) -> Result<&Quaternion> {
    r.quat.as_ref().ok_or_else(|| Error::InvalidField {
        field: format!("{}.quat", r.id),
        reason: "rotation required".to_string(),
    })
}

/// Shortest signed circular difference in degrees.
fn wrap_deg(d: f64) -> f64 {
    let r = (d % 360.0 + 540.0) % 360.0 - 180.0;
    // map the -180 edge onto +180 for a symmetric convention
    if r == -180.0 {
        180.0
    } else {
        r
    }
}

/// Per-angle mean absolute Euler errors.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EulerMetrics {
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub roll_deg: f64,
    pub mae_deg: f64,
}

/// Mean absolute Euler errors with wrap-around differences; MAE is the mean
/// of the three columns.
pub fn euler_metrics(preds: &[SampleRecord], gts: &[SampleRecord]) -> Result<EulerMetrics> {
    let pairs = align(preds, gts)?;
    if pairs.is_empty() {
        return Err(Error::EmptyInput("euler_metrics"));
    }
    let mut acc = [0.0f64; 3];
    for (p, g) in &pairs {
        let pe = to_euler(require_quat(p)?);
        let ge = to_euler(require_quat(g)?);
        acc[0] += wrap_deg(pe.yaw - ge.yaw).abs();
        acc[1] += wrap_deg(pe.pitch - ge.pitch).abs();
        acc[2] += wrap_deg(pe.roll - ge.roll).abs();
    }
    let n = pairs.len() as f64;
    let (yaw, pitch, roll) = (acc[0] / n, acc[1] / n, acc[2] / n);
    Ok(EulerMetrics {
        yaw_deg: yaw,
        pitch_deg: pitch,
        roll_deg: roll,
        mae_deg: (yaw + pitch + roll) / 3.0,
    })
}

/// Mean geodesic rotation error in degrees.
pub fn geodesic_metric(preds: &[SampleRecord], gts: &[SampleRecord]) -> Result<f64> {
    let pairs = align(preds, gts)?;
    if pairs.is_empty() {
        return Err(Error::EmptyInput("geodesic_metric"));
    }
    let mut acc = 0.0;
    for (p, g) in &pairs {
        acc += geodesic_error(require_quat(p)?, require_quat(g)?).to_degrees();
    }
    Ok(acc / pairs.len() as f64)
}

fn landmarks_xy(r: &SampleRecord) -> Result<Vec<[f64; 2]>> {
    let lms = r.landmarks.as_ref().ok_or_else(|| Error::InvalidField {
        field: format!("{}.landmarks", r.id),
        reason: "landmarks required".to_string(),
    })?;
    Ok(lms.iter().map(|p| [p[0], p[1]]).collect())
}

/// Normalized mean 2D landmark error in percent: per sample, the mean
/// Euclidean distance over the 68 landmarks divided by √(w·h) of the
/// ground-truth box. Samples with a degenerate box are skipped; the count of
/// skips is returned alongside.
pub fn nme2d(preds: &[SampleRecord], gts: &[SampleRecord]) -> Result<(f64, usize)> {
    let pairs = align(preds, gts)?;
    let mut acc = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for (p, g) in &pairs {
        let bb = g.bbox.as_ref().ok_or_else(|| Error::InvalidField {
            field: format!("{}.bbox", g.id),
            reason: "ground-truth box required for NME".to_string(),
        })?;
        let norm2 = bb.w * bb.h;
        if norm2.is_nan() || norm2 <= 0.0 || !norm2.is_finite() {
            skipped += 1;
            continue;
        }
        let norm = norm2.sqrt();
        let pl = landmarks_xy(p)?;
        let gl = landmarks_xy(g)?;
        if pl.len() != gl.len() {
            return Err(Error::DimensionMismatch {
                name: "landmarks",
                expected: gl.len(),
                got: pl.len(),
            });
        }
        let mean_dist = pl
            .iter()
            .zip(&gl)
            .map(|(a, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
            .sum::<f64>()
            / pl.len() as f64;
        acc += mean_dist / norm * 100.0;
        used += 1;
    }
    if used == 0 {
        return Err(Error::EmptyInput("nme2d"));
    }
    Ok((acc / used as f64, skipped))
}

/// Prediction sets of one σ level: every trial covers every ground-truth id.
#[derive(Debug, Clone)]
pub struct TrialSet {
    pub sigma: f64,
    pub trials: Vec<Vec<SampleRecord>>,
}

/// Noise-resistance statistics per σ level.
///
/// Per sample: the trial orientations are averaged (hemisphere-aligned
/// quaternion mean); spread is the RMS geodesic distance of the trials from
/// that mean and the error is the geodesic distance of the mean from ground
/// truth. Both are averaged over the dataset and reported in degrees.
pub fn noise_sweep(sets: &[TrialSet], gts: &[SampleRecord]) -> Result<Vec<NoiseSweepPoint>> {
    let mut points = Vec::with_capacity(sets.len());
    for set in sets {
        if set.trials.len() < 2 {
            return Err(Error::TooFewSamples {
                need: 2,
                got: set.trials.len(),
            });
        }
        let aligned: Vec<Vec<(&SampleRecord, &SampleRecord)>> = set
            .trials
            .iter()
            .map(|t| align(t, gts))
            .collect::<Result<_>>()?;

        let mut spread_acc = 0.0;
        let mut err_acc = 0.0;
        for (i, gt) in gts.iter().enumerate() {
            let qs: Vec<Quaternion> = aligned
                .iter()
                .map(|t| require_quat(t[i].0).copied())
                .collect::<Result<_>>()?;
            // bit-identical trials have zero spread by definition; skipping
            // the averaging avoids renormalization noise
            let (mean, spread) = if qs.iter().all(|q| *q == qs[0]) {
                (qs[0], 0.0)
            } else {
                let mean = mean_quaternion(&qs)?;
                let ms = qs
                    .iter()
                    .map(|q| geodesic_error(q, &mean).powi(2))
                    .sum::<f64>()
                    / qs.len() as f64;
                (mean, ms.sqrt())
            };
            spread_acc += spread.to_degrees();
            err_acc += geodesic_error(&mean, require_quat(gt)?).to_degrees();
        }
        let n = gts.len() as f64;
        points.push(NoiseSweepPoint {
            sigma: set.sigma,
            spread_deg: spread_acc / n,
            geo_error_of_mean_deg: err_acc / n,
        });
    }
    Ok(points)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Adds zero-mean Gaussian pixel noise to an image, deterministically keyed
/// by (seed, trial, id).
pub fn noise_inject(
    img: &GrayImage,
    sigma: f64,
    seed: u64,
    trial: usize,
    id: &str,
) -> GrayImage {
    assert!(sigma >= 0.0);
    if sigma == 0.0 {
        return img.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(id.as_bytes()) ^ (trial as u64).wrapping_mul(0x9e3779b97f4a7c15));
    let dist = Normal::new(0.0, sigma).expect("finite sigma");
    let mut out = img.clone();
    for v in out.pixels_mut() {
        let n: f64 = dist.sample(&mut rng);
        *v = (*v as f64 + n).round().clamp(0.0, 255.0) as u8;
    }
    out
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    // variance at or below rounding-noise scale counts as zero
    let tol_x = n * (1e-12 * mx.abs().max(1.0)).powi(2);
    let tol_y = n * (1e-12 * my.abs().max(1.0)).powi(2);
    if sxx <= tol_x || syy <= tol_y {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}

/// Ranks with ties averaged.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Correlates the Frobenius norm of the predicted rotation covariance with
/// the realized geodesic error. Undefined correlations (zero variance)
/// report 0 with the degenerate flag set.
pub fn uncertainty_correlation(
    preds: &[SampleRecord],
    gts: &[SampleRecord],
) -> Result<CorrelationReport> {
    let pairs = align(preds, gts)?;
    let mut xs = Vec::with_capacity(pairs.len());
    let mut ys = Vec::with_capacity(pairs.len());
    let mut points = Vec::with_capacity(pairs.len());
    for (p, g) in &pairs {
        let m = p.rot_cov.as_ref().ok_or_else(|| Error::InvalidField {
            field: format!("{}.rot_cov", p.id),
            reason: "rotation covariance features required".to_string(),
        })?;
        let cov = Covariance3::from_features(m, DEFAULT_COV_EPS);
        let x = cov.frobenius_norm();
        let y = geodesic_error(require_quat(p)?, require_quat(g)?).to_degrees();
        xs.push(x);
        ys.push(y);
        points.push([x, y]);
    }
    if points.len() < 3 {
        return Err(Error::TooFewSamples {
            need: 3,
            got: points.len(),
        });
    }
    let (pearson_v, mut degenerate) = match pearson(&xs, &ys) {
        Some(v) => (v, false),
        None => (0.0, true),
    };
    let spearman_v = match pearson(&ranks(&xs), &ranks(&ys)) {
        Some(v) => v,
        None => {
            degenerate = true;
            0.0
        }
    };
    Ok(CorrelationReport {
        pearson: pearson_v,
        spearman: spearman_v,
        degenerate,
        points,
    })
}
