#![allow(dead_code)] // fixtures are shared unevenly between the test targets

//! Shared fixtures for the CLI tests.

use std::path::{Path, PathBuf};
use std::process::Output;

use headpose::augment::GrayImage;
use headpose::data::{write_pgm, write_samples, SampleRecord};
use headpose::facemodel::{bbox_from_mesh, landmarks68, synthetic_model, Pose, ShapeCoeffs};
use headpose::geometry::{exp_map, Quaternion, RotationVector};
use headpose::losses::{LabelMask, LANDMARK_COUNT, SHAPE_DIM};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_headpose")
}

pub fn run(args: &[&str], cwd: &Path) -> Output {
    std::process::Command::new(bin())
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn headpose binary")
}

pub fn run_ok(args: &[&str], cwd: &Path) {
    let out = run(args, cwd);
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Fresh scratch directory under the target-specific temp root.
pub fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("headpose_cli_{name}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn random_unit_quat(rng: &mut ChaCha8Rng) -> Quaternion {
    Quaternion::from_features(
        rng.random_range(-0.5..0.5),
        rng.random_range(-0.5..0.5),
        rng.random_range(-0.5..0.5),
        rng.random_range(-0.2..0.8),
    )
}

/// Fully labeled ground-truth records derived from the synthetic model, plus
/// perturbed predictions carrying covariance features.
pub fn eval_fixture(dir: &Path, n: usize) -> (PathBuf, PathBuf) {
    let model = synthetic_model(0);
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut gts = Vec::with_capacity(n);
    let mut preds = Vec::with_capacity(n);
    for i in 0..n {
        let pose = Pose::new(
            random_unit_quat(&mut rng),
            rng.random_range(-0.2..0.2),
            rng.random_range(-0.2..0.2),
            rng.random_range(0.8..1.2),
        );
        let coeffs = ShapeCoeffs::new(
            (0..SHAPE_DIM).map(|_| rng.random_range(-0.3..0.3)).collect(),
        )
        .unwrap();

        let mut gt = SampleRecord::empty(format!("e{i:03}"));
        gt.mask = LabelMask {
            rotation: true,
            pos_size: true,
            shape: true,
            landmarks3d: true,
            landmarks2d: false,
            bbox: true,
        };
        gt.quat = Some(pose.q.canonical());
        gt.pos = Some([pose.tx, pose.ty]);
        gt.size = Some(pose.s);
        gt.shape = Some(coeffs.phi.clone());
        gt.landmarks = Some(
            landmarks68(&model, &coeffs, &pose)
                .iter()
                .map(|p| p.to_vec())
                .collect(),
        );
        gt.bbox = Some(bbox_from_mesh(&model, &coeffs, &pose));

        let mut pred = gt.clone();
        let axis = RotationVector::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let mag = rng.random_range(0.0..0.1);
        let v = axis.as_vector().normalize() * mag;
        pred.quat = Some(
            exp_map(&RotationVector::from(v))
                .mul(gt.quat.as_ref().unwrap())
                .canonical(),
        );
        pred.landmarks = Some(
            gt.landmarks
                .as_ref()
                .unwrap()
                .iter()
                .map(|p| {
                    p.iter()
                        .map(|c| c + rng.random_range(-0.01..0.01))
                        .collect()
                })
                .collect(),
        );
        pred.rot_cov = Some(std::array::from_fn(|_| rng.random_range(-0.3..0.3)));

        gts.push(gt);
        preds.push(pred);
    }
    let gt_path = dir.join("gt.jsonl");
    let pred_path = dir.join("pred.jsonl");
    write_samples(&gt_path, &gts).unwrap();
    write_samples(&pred_path, &preds).unwrap();
    (pred_path, gt_path)
}

/// PGM images plus pixel-frame sample records for the augment command.
pub fn augment_fixture(dir: &Path, n: usize) -> (PathBuf, PathBuf) {
    let model = synthetic_model(0);
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let images = dir.join("images");
    std::fs::create_dir_all(&images).unwrap();

    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("img{i:02}");
        let phase = i as f64;
        let img = GrayImage::from_fn(180, 180, |x, y| {
            (128.0
                + 70.0 * ((x as f64 * 0.13 + phase).sin() * (y as f64 * 0.09 - phase).cos()))
            .clamp(0.0, 255.0) as u8
        });
        write_pgm(&images.join(format!("{id}.pgm")), &img).unwrap();

        // pixel-frame pose: head of ~35 px radius near the image center
        let pose = Pose::new(
            random_unit_quat(&mut rng),
            rng.random_range(80.0..100.0),
            rng.random_range(80.0..100.0),
            rng.random_range(30.0..40.0),
        );
        let coeffs = ShapeCoeffs::new(
            (0..SHAPE_DIM).map(|_| rng.random_range(-0.3..0.3)).collect(),
        )
        .unwrap();
        let mut r = SampleRecord::empty(id);
        r.mask = LabelMask {
            rotation: true,
            pos_size: true,
            landmarks3d: true,
            bbox: true,
            ..Default::default()
        };
        r.quat = Some(pose.q.canonical());
        r.pos = Some([pose.tx, pose.ty]);
        r.size = Some(pose.s);
        r.landmarks = Some(
            landmarks68(&model, &coeffs, &pose)
                .iter()
                .map(|p| p.to_vec())
                .collect(),
        );
        r.bbox = Some(bbox_from_mesh(&model, &coeffs, &pose));
        records.push(r);
    }
    let samples = dir.join("aug_samples.jsonl");
    write_samples(&samples, &records).unwrap();
    (samples, images)
}

/// Landmark annotations, pose priors, and shape records for fitting/GMM.
pub fn fit_fixture(dir: &Path, n: usize) -> (PathBuf, PathBuf, PathBuf) {
    let model = synthetic_model(0);
    let mut rng = ChaCha8Rng::seed_from_u64(42);

    let mut landmark_records = Vec::with_capacity(n);
    let mut prior_records = Vec::with_capacity(n);
    for i in 0..n {
        let gt_pose = Pose::new(
            exp_map(&RotationVector::new(
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
            )),
            rng.random_range(-0.2..0.2),
            rng.random_range(-0.2..0.2),
            rng.random_range(0.8..1.2),
        );
        let coeffs = ShapeCoeffs::new(
            (0..SHAPE_DIM).map(|_| rng.random_range(-0.3..0.3)).collect(),
        )
        .unwrap();
        let lms = landmarks68(&model, &coeffs, &gt_pose);

        let id = format!("f{i:02}");
        let mut lm = SampleRecord::empty(&id);
        lm.mask = LabelMask {
            landmarks2d: true,
            ..Default::default()
        };
        lm.landmarks = Some(lms.iter().map(|p| vec![p[0], p[1]]).collect());
        lm.landmark_confidence = Some(vec![1.0; LANDMARK_COUNT]);
        landmark_records.push(lm);

        // prior: the true pose nudged by ~6°
        let nudge = exp_map(&RotationVector::new(
            rng.random_range(-0.07..0.07),
            rng.random_range(-0.07..0.07),
            rng.random_range(-0.07..0.07),
        ));
        let mut prior = SampleRecord::empty(&id);
        prior.mask = LabelMask {
            rotation: true,
            pos_size: true,
            ..Default::default()
        };
        prior.quat = Some(nudge.mul(&gt_pose.q).canonical());
        prior.pos = Some([gt_pose.tx, gt_pose.ty]);
        prior.size = Some(gt_pose.s);
        prior_records.push(prior);
    }

    // shape-coefficient records for the GMM command
    let mut shape_records = Vec::new();
    for i in 0..80 {
        let center = if i % 2 == 0 { 0.4 } else { -0.4 };
        let mut r = SampleRecord::empty(format!("shape{i:02}"));
        r.mask = LabelMask {
            shape: true,
            ..Default::default()
        };
        r.shape = Some(
            (0..SHAPE_DIM)
                .map(|_| center + rng.random_range(-0.1..0.1))
                .collect(),
        );
        shape_records.push(r);
    }

    let lm_path = dir.join("fit_landmarks.jsonl");
    let prior_path = dir.join("fit_priors.jsonl");
    let shapes_path = dir.join("shapes.jsonl");
    write_samples(&lm_path, &landmark_records).unwrap();
    write_samples(&prior_path, &prior_records).unwrap();
    write_samples(&shapes_path, &shape_records).unwrap();
    (lm_path, prior_path, shapes_path)
}

/// Per-sigma, per-trial prediction sets plus the sweep spec file.
pub fn sweep_fixture(dir: &Path, gt_path: &Path) -> PathBuf {
    let gts = headpose::data::read_samples(gt_path).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let mut points = Vec::new();
    for sigma in [0.0f64, 8.0] {
        let sd = 0.003 * sigma;
        let mut trial_paths = Vec::new();
        for t in 0..3 {
            let trials: Vec<SampleRecord> = gts
                .iter()
                .map(|g| {
                    let mut r = SampleRecord::empty(&g.id);
                    r.mask = LabelMask {
                        rotation: true,
                        ..Default::default()
                    };
                    let mut q = *g.quat.as_ref().unwrap();
                    if sd > 0.0 {
                        q = exp_map(&RotationVector::new(
                            rng.random_range(-sd..sd),
                            rng.random_range(-sd..sd),
                            rng.random_range(-sd..sd),
                        ))
                        .mul(&q);
                    }
                    r.quat = Some(q.canonical());
                    r
                })
                .collect();
            let name = format!("sweep_s{sigma}_t{t}.jsonl");
            write_samples(&dir.join(&name), &trials).unwrap();
            trial_paths.push(name);
        }
        points.push(serde_json::json!({ "sigma": sigma, "trials": trial_paths }));
    }
    let spec = dir.join("sweep_spec.json");
    std::fs::write(
        &spec,
        serde_json::to_vec_pretty(&serde_json::json!({ "points": points })).unwrap(),
    )
    .unwrap();
    spec
}

/// All files under a directory as sorted (relative path, bytes) pairs.
pub fn collect_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out
}
