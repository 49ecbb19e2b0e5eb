//! Command implementations.

use std::path::{Path, PathBuf};

use headpose::augment::{augment_sample, normalize_record_to_crop, AugmentConfig, SeededRng};
use headpose::data::{
    read_pgm, read_samples, write_atomic, write_samples, MixSampler, MixSpec, SampleRecord,
};
use headpose::eval::{self, TrialSet};
use headpose::facemodel::{landmarks68, synthetic_model, DeformableModel, Pose, ShapeCoeffs};
use headpose::fitting::{self, FitConfig, FitProblem, GaussianMixture};
use headpose::geometry::{geodesic_error, to_euler, Quaternion};
use headpose::losses::{gradcheck, SHAPE_DIM};
use headpose::trainer::{self, make_synthetic_task, LinearHead, TaskNoise, TrainConfig, INPUT_DIM};

use crate::{CliError, CliResult};

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn validation(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn write_output(path: &Path, bytes: &[u8]) -> CliResult {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::Runtime(format!("create {}: {e}", parent.display())))?;
        }
    }
    write_atomic(path, bytes).map_err(|e| CliError::Runtime(e.to_string()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    bytes.push(b'\n');
    write_output(path, &bytes)
}

pub fn evaluate(
    pred_path: &Path,
    gt_path: &Path,
    nme: bool,
    filter99: bool,
    out: &Path,
    csv: Option<&Path>,
) -> CliResult {
    let preds = read_samples(pred_path)?;
    let mut gts = read_samples(gt_path)?;
    if filter99 {
        gts = eval::filter_protocol(&gts)?;
    }
    if gts.is_empty() {
        return Err(validation("no ground-truth samples left to evaluate"));
    }

    let euler = eval::euler_metrics(&preds, &gts)?;
    let geo = eval::geodesic_metric(&preds, &gts)?;
    let (nme_value, nme_skipped) = if nme {
        let (v, s) = eval::nme2d(&preds, &gts)?;
        (Some(v), Some(s))
    } else {
        (None, None)
    };
    let correlation = if preds.iter().all(|p| p.rot_cov.is_some()) && gts.len() >= 3 {
        Some(eval::uncertainty_correlation(&preds, &gts)?)
    } else {
        None
    };

    let report = eval::MetricsReport {
        sample_count: gts.len(),
        yaw_mae_deg: euler.yaw_deg,
        pitch_mae_deg: euler.pitch_deg,
        roll_mae_deg: euler.roll_deg,
        mae_deg: euler.mae_deg,
        geodesic_mean_deg: geo,
        nme2d_percent: nme_value,
        nme2d_skipped: nme_skipped,
        noise_sweep: None,
        correlation,
    };

    write_json(
        out,
        &serde_json::json!({
            "version": VERSION,
            "config": {
                "pred": pred_path.display().to_string(),
                "gt": gt_path.display().to_string(),
                "nme": nme,
                "filter99": filter99,
            },
            "metrics": report,
        }),
    )?;

    if let Some(csv_path) = csv {
        let by_id: std::collections::HashMap<&str, &SampleRecord> =
            preds.iter().map(|p| (p.id.as_str(), p)).collect();
        let mut rows = String::from("id,yaw_err_deg,pitch_err_deg,roll_err_deg,geodesic_err_deg\n");
        for gt in &gts {
            let p = by_id
                .get(gt.id.as_str())
                .ok_or_else(|| validation(format!("missing prediction for {}", gt.id)))?;
            let (pq, gq) = match (&p.quat, &gt.quat) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(validation(format!("{}: rotation required", gt.id))),
            };
            let pe = to_euler(pq);
            let ge = to_euler(gq);
            let wrap = |d: f64| {
                let r = (d % 360.0 + 540.0) % 360.0 - 180.0;
                if r == -180.0 {
                    180.0
                } else {
                    r
                }
            };
            rows.push_str(&format!(
                "{},{},{},{},{}\n",
                gt.id,
                wrap(pe.yaw - ge.yaw).abs(),
                wrap(pe.pitch - ge.pitch).abs(),
                wrap(pe.roll - ge.roll).abs(),
                geodesic_error(pq, gq).to_degrees(),
            ));
        }
        write_output(csv_path, rows.as_bytes())?;
    }
    Ok(())
}

/// Sorted (id, image) pairs of every `.pgm` in a directory.
fn read_image_dir(dir: &Path) -> Result<Vec<(String, headpose::augment::GrayImage)>, CliError> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| validation(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    entries.sort();
    let mut out = Vec::with_capacity(entries.len());
    for path in entries {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .ok_or_else(|| validation(format!("bad image name {}", path.display())))?;
        out.push((id, read_pgm(&path)?));
    }
    if out.is_empty() {
        return Err(validation(format!("no .pgm images in {}", dir.display())));
    }
    Ok(out)
}

pub fn noise(images: &Path, sigmas: &str, trials: usize, seed: u64, out: &Path) -> CliResult {
    if trials == 0 {
        return Err(validation("--trials must be positive"));
    }
    let mut parsed: Vec<(String, f64)> = Vec::new();
    for token in sigmas.split(',') {
        let token = token.trim();
        let value: f64 = token
            .parse()
            .map_err(|_| validation(format!("bad sigma `{token}`")))?;
        if value.is_nan() || value < 0.0 {
            return Err(validation(format!("sigma must be >= 0, got {value}")));
        }
        parsed.push((token.to_string(), value));
    }
    let imgs = read_image_dir(images)?;

    for (token, sigma) in &parsed {
        for trial in 0..trials {
            let dir = out.join(format!("sigma_{token}")).join(format!("trial_{trial}"));
            std::fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(e.to_string()))?;
            for (id, img) in &imgs {
                let noisy = eval::noise_inject(img, *sigma, seed, trial, id);
                headpose::data::write_pgm(&dir.join(format!("{id}.pgm")), &noisy)
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
            }
        }
    }
    Ok(())
}

#[derive(serde::Deserialize)]
struct SweepSpec {
    points: Vec<SweepPointSpec>,
}

#[derive(serde::Deserialize)]
struct SweepPointSpec {
    sigma: f64,
    trials: Vec<PathBuf>,
}

pub fn sweep(spec_path: &Path, gt_path: &Path, out: &Path, csv: Option<&Path>) -> CliResult {
    let spec: SweepSpec = serde_json::from_slice(&std::fs::read(spec_path)?)
        .map_err(|e| validation(format!("sweep spec: {e}")))?;
    let base = spec_path.parent().unwrap_or_else(|| Path::new("."));
    let gts = read_samples(gt_path)?;

    let mut sets = Vec::with_capacity(spec.points.len());
    for p in &spec.points {
        let mut trials = Vec::with_capacity(p.trials.len());
        for t in &p.trials {
            let path = if t.is_absolute() { t.clone() } else { base.join(t) };
            trials.push(read_samples(&path)?);
        }
        sets.push(TrialSet {
            sigma: p.sigma,
            trials,
        });
    }
    let points = eval::noise_sweep(&sets, &gts)?;

    write_json(
        out,
        &serde_json::json!({
            "version": VERSION,
            "config": {
                "spec": spec_path.display().to_string(),
                "gt": gt_path.display().to_string(),
            },
            "points": points,
        }),
    )?;

    if let Some(csv_path) = csv {
        let mut rows = String::from("sigma,spread_deg,geo_error_of_mean_deg\n");
        for p in &points {
            rows.push_str(&format!("{},{},{}\n", p.sigma, p.spread_deg, p.geo_error_of_mean_deg));
        }
        write_output(csv_path, rows.as_bytes())?;
    }
    Ok(())
}

pub fn augment(
    samples_path: &Path,
    images: &Path,
    seed: u64,
    count: usize,
    normalize: bool,
    out: &Path,
) -> CliResult {
    if count == 0 {
        return Err(validation("--count must be positive"));
    }
    let records = read_samples(samples_path)?;
    if records.is_empty() {
        return Err(validation("sample file is empty"));
    }
    let by_id: std::collections::HashMap<&str, headpose::augment::GrayImage> = {
        let imgs = read_image_dir(images)?;
        imgs.into_iter()
            .map(|(id, img)| (Box::leak(id.into_boxed_str()) as &str, img))
            .collect()
    };

    let cfg = AugmentConfig::default();
    let root = SeededRng::new(seed);
    std::fs::create_dir_all(out).map_err(|e| CliError::Runtime(e.to_string()))?;

    let mut out_records = Vec::with_capacity(count);
    for i in 0..count {
        let record = &records[i % records.len()];
        let img = by_id
            .get(record.id.as_str())
            .ok_or_else(|| validation(format!("no image for sample `{}`", record.id)))?;
        let mut rng = root.for_sample(i as u64);
        let augmented = augment_sample(img, record, &mut rng, &cfg)?;

        let out_id = format!("{i:05}_{}", record.id);
        headpose::data::write_pgm(&out.join(format!("{out_id}.pgm")), &augmented.image)
            .map_err(|e| CliError::Runtime(e.to_string()))?;

        let mut rec = if normalize {
            normalize_record_to_crop(&augmented.record, cfg.out_size)
        } else {
            augmented.record
        };
        rec.id = out_id;
        out_records.push(rec);
    }
    write_samples(&out.join("augmented.jsonl"), &out_records)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}

fn unit_mixture() -> GaussianMixture {
    GaussianMixture::new(
        vec![1.0],
        vec![vec![0.0; SHAPE_DIM]],
        vec![vec![1.0; SHAPE_DIM]],
    )
    .expect("static unit prior")
}

/// Scale/translation initialization from the annotation vs model extents.
fn init_from_landmarks(model: &DeformableModel, landmarks: &[[f64; 2]]) -> Pose {
    let model_lms = landmarks68(model, &ShapeCoeffs::zeros(), &Pose::identity());
    let extent = |pts: &[[f64; 2]]| {
        let (mut x0, mut x1, mut y0, mut y1) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        let (mut cx, mut cy) = (0.0, 0.0);
        for p in pts {
            x0 = x0.min(p[0]);
            x1 = x1.max(p[0]);
            y0 = y0.min(p[1]);
            y1 = y1.max(p[1]);
            cx += p[0];
            cy += p[1];
        }
        let n = pts.len() as f64;
        (
            ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt(),
            cx / n,
            cy / n,
        )
    };
    let model_xy: Vec<[f64; 2]> = model_lms.iter().map(|p| [p[0], p[1]]).collect();
    let (d_model, mx, my) = extent(&model_xy);
    let (d_ann, ax, ay) = extent(landmarks);
    let s = if d_model > 0.0 && d_ann > 0.0 {
        d_ann / d_model
    } else {
        1.0
    };
    Pose::new(Quaternion::IDENTITY, ax - s * mx, ay - s * my, s)
}

pub fn fit(
    landmarks_path: &Path,
    model_path: &Path,
    prior_path: Option<&Path>,
    mixture_path: Option<&Path>,
    prior_weight: f64,
    mixture_weight: f64,
    out: &Path,
) -> CliResult {
    let records = read_samples(landmarks_path)?;
    if records.is_empty() {
        return Err(validation("landmark file is empty"));
    }
    let model = DeformableModel::load(model_path)?;
    let mixture = match mixture_path {
        Some(p) => serde_json::from_slice::<GaussianMixture>(&std::fs::read(p)?)
            .map_err(|e| validation(format!("mixture: {e}")))?,
        None => unit_mixture(),
    };
    let priors: std::collections::HashMap<String, SampleRecord> = match prior_path {
        Some(p) => read_samples(p)?
            .into_iter()
            .map(|r| (r.id.clone(), r))
            .collect(),
        None => Default::default(),
    };

    let config = FitConfig {
        mixture_weight,
        ..FitConfig::default()
    };

    let mut lines = Vec::new();
    for record in &records {
        let lms = record
            .landmarks
            .as_ref()
            .filter(|_| record.mask.landmarks2d)
            .ok_or_else(|| validation(format!("{}: needs 2D landmarks", record.id)))?;
        let landmarks2d: Vec<[f64; 2]> = lms.iter().map(|p| [p[0], p[1]]).collect();
        let confidence = record
            .landmark_confidence
            .clone()
            .unwrap_or_else(|| vec![1.0; landmarks2d.len()]);

        let prior = priors.get(&record.id);
        let prior_pose = match prior {
            Some(p) => {
                let q = p
                    .quat
                    .ok_or_else(|| validation(format!("{}: prior lacks a rotation", record.id)))?;
                let (tx, ty) = p.pos.map(|v| (v[0], v[1])).unwrap_or((0.0, 0.0));
                Pose::new(q, tx, ty, p.size.unwrap_or(1.0))
            }
            None => init_from_landmarks(&model, &landmarks2d),
        };

        let problem = FitProblem {
            landmarks2d,
            confidence,
            prior_pose,
            prior_pose_weight: if prior.is_some() { prior_weight } else { 0.0 },
            shape_prior: mixture.clone(),
            model: &model,
        };
        let init_coeffs = match &record.shape {
            Some(phi) => ShapeCoeffs::new(phi.clone()).map_err(|e| validation(e.to_string()))?,
            None => ShapeCoeffs::zeros(),
        };
        let result = fitting::fit(&problem, &prior_pose, &init_coeffs, &config)?;
        let flagged = result.is_flagged(&problem);

        let value = serde_json::json!({
            "id": record.id,
            "quat": result.pose.q,
            "pos": [result.pose.tx, result.pose.ty],
            "size": result.pose.s,
            "shape": result.coeffs.phi,
            "final_objective": result.final_objective,
            "converged": result.converged,
            "iterations": result.iterations,
            "landmark_rmse": result.landmark_rmse,
            "flagged": flagged,
        });
        lines.push(serde_json::to_string(&value).map_err(|e| CliError::Runtime(e.to_string()))?);
    }
    let mut bytes = lines.join("\n").into_bytes();
    bytes.push(b'\n');
    write_output(out, &bytes)
}

pub fn mix(spec_path: &Path, count: usize, out: &Path) -> CliResult {
    let spec: MixSpec = serde_json::from_slice(&std::fs::read(spec_path)?)
        .map_err(|e| validation(format!("mix spec: {e}")))?;
    let mix = spec.to_mix()?;
    if mix.renormalized() {
        eprintln!(
            "warning: mix probabilities renormalized (sum was {})",
            spec.probs.iter().sum::<f64>()
        );
    }
    let sampler = MixSampler::new(&mix, spec.seed);
    let mut rows = String::from("draw,dataset_index,dataset_name,sample_index\n");
    for (i, (d, s)) in sampler.take(count).enumerate() {
        rows.push_str(&format!("{i},{d},{},{s}\n", mix.entries()[d].name));
    }
    write_output(out, rows.as_bytes())
}

#[derive(serde::Serialize, serde::Deserialize)]
struct TrainDemoSpec {
    #[serde(default = "default_train_config")]
    train: TrainConfig,
    #[serde(default = "default_task_n")]
    task_samples: usize,
    #[serde(default)]
    task_seed: u64,
    /// "none" or "heteroscedastic".
    #[serde(default = "default_task_noise")]
    task_noise: String,
}

fn default_train_config() -> TrainConfig {
    TrainConfig::default()
}

fn default_task_n() -> usize {
    50_000
}

fn default_task_noise() -> String {
    "none".to_string()
}

impl Default for TrainDemoSpec {
    fn default() -> Self {
        TrainDemoSpec {
            train: default_train_config(),
            task_samples: default_task_n(),
            task_seed: 0,
            task_noise: default_task_noise(),
        }
    }
}

pub fn train_demo(
    config_path: Option<&Path>,
    seed: Option<u64>,
    out_head: &Path,
    out_trace: &Path,
) -> CliResult {
    let mut spec: TrainDemoSpec = match config_path {
        Some(p) => serde_json::from_slice(&std::fs::read(p)?)
            .map_err(|e| validation(format!("train config: {e}")))?,
        None => TrainDemoSpec::default(),
    };
    if let Some(s) = seed {
        spec.train.seed = s;
    }
    let noise = match spec.task_noise.as_str() {
        "none" => TaskNoise::none(),
        "heteroscedastic" => TaskNoise::heteroscedastic(),
        other => return Err(validation(format!("unknown task noise `{other}`"))),
    };

    let task = make_synthetic_task(spec.task_seed, spec.task_samples, &noise);
    let head = LinearHead::random(INPUT_DIM, spec.train.seed);
    let outcome = trainer::train(&head, &task, &spec.train)?;

    let mut head_json = outcome.head.to_json();
    head_json["version"] = serde_json::json!(VERSION);
    head_json["config"] = serde_json::to_value(&spec).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_json(out_head, &head_json)?;

    let mut rows = String::from("step,loss\n");
    for (i, l) in outcome.trace.iter().enumerate() {
        rows.push_str(&format!("{i},{l}\n"));
    }
    write_output(out_trace, rows.as_bytes())?;

    println!(
        "trained {} steps; loss {} -> {}",
        outcome.trace.len(),
        outcome.trace.first().unwrap_or(&f64::NAN),
        outcome.trace.last().unwrap_or(&f64::NAN)
    );
    Ok(())
}

pub fn gradcheck(losses: &str, points: usize, seed: u64, out: Option<&Path>) -> CliResult {
    if points == 0 {
        return Err(validation("--points must be positive"));
    }
    let names: Vec<String> = if losses == "all" {
        gradcheck::LOSS_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        losses.split(',').map(|s| s.trim().to_string()).collect()
    };

    let mut outcomes = Vec::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        let outcome = gradcheck::check_loss(name, points, seed.wrapping_add(i as u64))?;
        println!(
            "{:<18} max rel err {:.3e}  {}",
            outcome.loss,
            outcome.max_err,
            if outcome.passed { "PASS" } else { "FAIL" }
        );
        outcomes.push(outcome);
    }

    if let Some(path) = out {
        write_json(
            path,
            &serde_json::json!({
                "version": VERSION,
                "config": { "losses": losses, "points": points, "seed": seed },
                "results": outcomes,
            }),
        )?;
    }

    if outcomes.iter().all(|o| o.passed) {
        Ok(())
    } else {
        Err(CliError::Runtime("gradient check failed".to_string()))
    }
}

pub fn make_model(seed: u64, out: &Path) -> CliResult {
    let model = synthetic_model(seed);
    let mut bytes = Vec::new();
    model
        .write_to(&mut bytes)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_output(out, &bytes)?;
    println!(
        "model: {} vertices, {} basis vectors, {} landmarks, {} facial-section vertices",
        model.vertex_count(),
        model.basis().len(),
        model.landmark_indices().len(),
        model.face_section_ids().len()
    );
    Ok(())
}

pub fn gmm(samples_path: &Path, components: usize, seed: u64, out: &Path) -> CliResult {
    let records = read_samples(samples_path)?;
    let shapes: Vec<Vec<f64>> = records
        .iter()
        .filter_map(|r| r.shape.clone())
        .collect();
    if shapes.is_empty() {
        return Err(validation("no records with shape coefficients"));
    }
    let fit = fitting::gmm_fit(&shapes, components, seed)?;
    let mut value = serde_json::to_value(&fit.mixture).map_err(|e| CliError::Runtime(e.to_string()))?;
    value["version"] = serde_json::json!(VERSION);
    value["config"] = serde_json::json!({
        "samples": samples_path.display().to_string(),
        "components": components,
        "seed": seed,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "final_log_likelihood": fit.log_likelihood.last(),
    });
    write_json(out, &value)
}
