//! Central finite-difference verification of the analytic gradients.
//!
//! The numeric side evaluates the plain value-level losses composed with the
//! constraint mappings, so it never touches the analytic gradient code it
//! checks. A component passes when
//! `|analytic - numeric| <= max(ABS_FLOOR, REL_TOL * max(|analytic|, |numeric|))`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Box2, Covariance3, Quaternion, DEFAULT_COV_EPS};

use super::grad::{self, scale_from_feature};
use super::{
    AuxParams, LabelMask, LandmarkLabels, LandmarkWeights, LossWeights, PosSize, SampleFeatures,
    SampleLabels, LANDMARK_COUNT, SHAPE_DIM,
};

/// Componentwise relative tolerance of the check.
pub const REL_TOL: f64 = 1e-4;
/// Absolute error floor: differences below this always pass.
pub const ABS_FLOOR: f64 = 1e-7;
/// Step used for the central differences.
pub const FD_STEP: f64 = 1e-5;

/// Losses known to the checker.
pub const LOSS_NAMES: [&str; 12] = [
    "rot_loss",
    "rot_nll",
    "pos_size_loss",
    "pos_size_nll",
    "shape_loss",
    "shape_nll",
    "landmark_loss",
    "landmark_nll",
    "bbox_loss",
    "bbox_nll",
    "quat_norm_penalty",
    "total_loss",
];

/// Central finite-difference gradient of `f` at `x`.
pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], step: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xp[i];
            xp[i] = orig + step;
            let fp = f(&xp);
            xp[i] = orig - step;
            let fm = f(&xp);
            xp[i] = orig;
            (fp - fm) / (2.0 * step)
        })
        .collect()
}

/// Error measure of one gradient component; passing means `< REL_TOL`.
#[inline]
pub fn component_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR / REL_TOL)
}

/// Maximum componentwise error between two gradients.
pub fn max_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| component_error(*a, *n))
        .fold(0.0, f64::max)
}

/// Result of checking one loss at several random points.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CheckOutcome {
    pub loss: String,
    pub points: usize,
    pub max_err: f64,
    pub passed: bool,
}

type ValueFn = Box<dyn Fn(&[f64]) -> f64>;

struct Case {
    params: Vec<f64>,
    analytic: Vec<f64>,
    value: ValueFn,
}

fn rvec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn random_quat(rng: &mut ChaCha8Rng) -> Quaternion {
    Quaternion::from_features(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    )
}

/// Landmark ground truth plus predictions offset by at least 0.05 per
/// coordinate, keeping the L1 kink far away from the FD step.
fn random_landmark_pair(rng: &mut ChaCha8Rng) -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
    let gt: Vec<[f64; 3]> = (0..LANDMARK_COUNT)
        .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
        .collect();
    let pred = gt
        .iter()
        .map(|p| {
            std::array::from_fn(|c| {
                let mag = rng.random_range(0.05..0.8);
                let sig = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                p[c] + sig * mag
            })
        })
        .collect();
    (gt, pred)
}

fn random_box(rng: &mut ChaCha8Rng) -> Box2 {
    Box2::new(
        rng.random_range(-0.5..0.5),
        rng.random_range(-0.5..0.5),
        rng.random_range(0.3..1.5),
        rng.random_range(0.3..1.5),
    )
}

fn flatten_lms(lms: &[[f64; 3]]) -> Vec<f64> {
    lms.iter().flatten().copied().collect()
}

fn unflatten_lms(x: &[f64]) -> Vec<[f64; 3]> {
    x.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

fn build_case(name: &str, index: usize, rng: &mut ChaCha8Rng) -> Result<Case> {
    let eps = DEFAULT_COV_EPS;
    match name {
        "rot_loss" => {
            let z = rvec(rng, 4, -2.0, 2.0);
            let gt = random_quat(rng);
            let (_, g) = grad::rot_loss_grad(&[z[0], z[1], z[2], z[3]], &gt);
            Ok(Case {
                params: z,
                analytic: g.to_vec(),
                value: Box::new(move |x| {
                    super::rot_loss(&Quaternion::from_features(x[0], x[1], x[2], x[3]), &gt)
                }),
            })
        }
        "rot_nll" => {
            let mut p = rvec(rng, 4, -2.0, 2.0);
            p.extend(rvec(rng, 6, -1.2, 1.2));
            let gt = random_quat(rng);
            let (_, gz, gm) = grad::rot_nll_grad(
                &[p[0], p[1], p[2], p[3]],
                &[p[4], p[5], p[6], p[7], p[8], p[9]],
                &gt,
                eps,
            );
            let mut analytic = gz.to_vec();
            analytic.extend(gm);
            Ok(Case {
                params: p,
                analytic,
                value: Box::new(move |x| {
                    let q = Quaternion::from_features(x[0], x[1], x[2], x[3]);
                    let cov =
                        Covariance3::from_features(&[x[4], x[5], x[6], x[7], x[8], x[9]], eps);
                    super::rot_nll(&q, &gt, &cov)
                }),
            })
        }
        "pos_size_loss" => {
            let f = rvec(rng, 3, -1.0, 1.5);
            let gt = PosSize::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.2..2.0),
            );
            let (_, g) = grad::pos_size_loss_grad(&[f[0], f[1], f[2]], &gt);
            Ok(Case {
                params: f,
                analytic: g.to_vec(),
                value: Box::new(move |x| {
                    super::pos_size_loss(&PosSize::from_features(&[x[0], x[1], x[2]]), &gt)
                }),
            })
        }
        "pos_size_nll" => {
            let mut p = rvec(rng, 3, -1.0, 1.5);
            p.extend(rvec(rng, 6, -1.2, 1.2));
            let gt = PosSize::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.2..2.0),
            );
            let (_, gf, gm) = grad::pos_size_nll_grad(
                &[p[0], p[1], p[2]],
                &[p[3], p[4], p[5], p[6], p[7], p[8]],
                &gt,
                eps,
            );
            let mut analytic = gf.to_vec();
            analytic.extend(gm);
            Ok(Case {
                params: p,
                analytic,
                value: Box::new(move |x| {
                    let ph = PosSize::from_features(&[x[0], x[1], x[2]]);
                    let cov =
                        Covariance3::from_features(&[x[3], x[4], x[5], x[6], x[7], x[8]], eps);
                    super::pos_size_nll(&ph, &gt, &cov)
                }),
            })
        }
        "shape_loss" => {
            let p = rvec(rng, SHAPE_DIM, -1.0, 1.0);
            let gt = rvec(rng, SHAPE_DIM, -1.0, 1.0);
            let mut arr = [0.0; SHAPE_DIM];
            arr.copy_from_slice(&p);
            let (_, g) = grad::shape_loss_grad(&arr, &gt);
            Ok(Case {
                params: p,
                analytic: g.to_vec(),
                value: Box::new(move |x| super::shape_loss(x, &gt)),
            })
        }
        "shape_nll" => {
            let mut p = rvec(rng, SHAPE_DIM, -1.0, 1.0);
            p.extend(rvec(rng, SHAPE_DIM, -1.5, 1.5));
            let gt = rvec(rng, SHAPE_DIM, -1.0, 1.0);
            let mut phi = [0.0; SHAPE_DIM];
            phi.copy_from_slice(&p[..SHAPE_DIM]);
            let mut t = [0.0; SHAPE_DIM];
            t.copy_from_slice(&p[SHAPE_DIM..]);
            let (_, gp, gt_) = grad::shape_nll_grad(&phi, &t, &gt);
            let mut analytic = gp.to_vec();
            analytic.extend(gt_);
            Ok(Case {
                params: p,
                analytic,
                value: Box::new(move |x| {
                    let sigma: Vec<f64> = x[SHAPE_DIM..]
                        .iter()
                        .map(|t| scale_from_feature(*t))
                        .collect();
                    super::shape_nll(&x[..SHAPE_DIM], &gt, &sigma).unwrap()
                }),
            })
        }
        "landmark_loss" => {
            let (gt3, pred) = random_landmark_pair(rng);
            let w = LandmarkWeights::default();
            let labels = if index.is_multiple_of(2) {
                LandmarkLabels::ThreeD(gt3)
            } else {
                LandmarkLabels::TwoD(gt3.iter().map(|p| [p[0], p[1]]).collect())
            };
            let (_, g) = grad::landmark_loss_grad(&pred, &labels, &w);
            Ok(Case {
                params: flatten_lms(&pred),
                analytic: flatten_lms(&g),
                value: Box::new(move |x| super::landmark_loss(&unflatten_lms(x), &labels, &w)),
            })
        }
        "landmark_nll" => {
            let (gt3, pred) = random_landmark_pair(rng);
            let scale_feat = unflatten_lms(&rvec(rng, 3 * LANDMARK_COUNT, -1.5, 1.5));
            let w = LandmarkWeights::default();
            let labels = if index.is_multiple_of(2) {
                LandmarkLabels::ThreeD(gt3)
            } else {
                LandmarkLabels::TwoD(gt3.iter().map(|p| [p[0], p[1]]).collect())
            };
            let (_, gx, gt_) = grad::landmark_nll_grad(&pred, &scale_feat, &labels, &w);
            let mut params = flatten_lms(&pred);
            params.extend(flatten_lms(&scale_feat));
            let mut analytic = flatten_lms(&gx);
            analytic.extend(flatten_lms(&gt_));
            Ok(Case {
                params,
                analytic,
                value: Box::new(move |x| {
                    let n = 3 * LANDMARK_COUNT;
                    let pred = unflatten_lms(&x[..n]);
                    let b: Vec<[f64; 3]> = x[n..]
                        .chunks_exact(3)
                        .map(|c| {
                            [
                                scale_from_feature(c[0]),
                                scale_from_feature(c[1]),
                                scale_from_feature(c[2]),
                            ]
                        })
                        .collect();
                    super::landmark_nll(&pred, &labels, &b, &w).unwrap()
                }),
            })
        }
        "bbox_loss" => {
            let f = rvec(rng, 4, -1.0, 1.0);
            let gt = random_box(rng);
            let (_, g) = grad::bbox_loss_grad(&[f[0], f[1], f[2], f[3]], &gt);
            Ok(Case {
                params: f,
                analytic: g.to_vec(),
                value: Box::new(move |x| {
                    super::bbox_loss(&grad::bbox_from_features(&[x[0], x[1], x[2], x[3]]), &gt)
                }),
            })
        }
        "bbox_nll" => {
            let mut p = rvec(rng, 4, -1.0, 1.0);
            p.extend(rvec(rng, 4, -1.5, 1.5));
            let gt = random_box(rng);
            let (_, gf, gt_) = grad::bbox_nll_grad(
                &[p[0], p[1], p[2], p[3]],
                &[p[4], p[5], p[6], p[7]],
                &gt,
            );
            let mut analytic = gf.to_vec();
            analytic.extend(gt_);
            Ok(Case {
                params: p,
                analytic,
                value: Box::new(move |x| {
                    let pred = grad::bbox_from_features(&[x[0], x[1], x[2], x[3]]);
                    let sigma = [
                        scale_from_feature(x[4]),
                        scale_from_feature(x[5]),
                        scale_from_feature(x[6]),
                        scale_from_feature(x[7]),
                    ];
                    super::bbox_nll(&pred, &gt, &sigma).unwrap()
                }),
            })
        }
        "quat_norm_penalty" => {
            let z = rvec(rng, 4, -2.0, 2.0);
            let (_, g) = grad::quat_norm_penalty_grad(&[z[0], z[1], z[2], z[3]]);
            Ok(Case {
                params: z,
                analytic: g.to_vec(),
                value: Box::new(move |x| {
                    super::quat_norm_penalty(&[x[0], x[1], x[2], smoothclip_of(x[3])])
                }),
            })
        }
        "total_loss" => build_total_loss_case(rng),
        other => Err(Error::InvalidInput(format!("unknown loss `{other}`"))),
    }
}

#[inline]
fn smoothclip_of(x: f64) -> f64 {
    crate::geometry::smoothclip(x)
}

/// Layout of the flattened total-loss parameter vector:
/// quat 4 | pos_size 3 | shape 50 | bbox 4 | rot_cov 6 | pos_cov 6 |
/// landmarks 204 | shape_sigma 50 | bbox_sigma 4 | landmark_scale 204.
fn build_total_loss_case(rng: &mut ChaCha8Rng) -> Result<Case> {
    let (gt_lms, pred_lms) = random_landmark_pair(rng);
    let labels = SampleLabels {
        mask: LabelMask::full(),
        quat: Some(random_quat(rng)),
        pos_size: Some(PosSize::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(0.2..2.0),
        )),
        shape: Some(rvec(rng, SHAPE_DIM, -1.0, 1.0)),
        landmarks: Some(LandmarkLabels::ThreeD(gt_lms)),
        bbox: Some(random_box(rng)),
    };
    let lw = LandmarkWeights::default();
    let weights = LossWeights::default();

    let mut params = rvec(rng, 4, -2.0, 2.0);
    params.extend(rvec(rng, 3, -1.0, 1.5));
    params.extend(rvec(rng, SHAPE_DIM, -1.0, 1.0));
    params.extend(rvec(rng, 4, -1.0, 1.0));
    params.extend(rvec(rng, 6, -1.2, 1.2));
    params.extend(rvec(rng, 6, -1.2, 1.2));
    params.extend(flatten_lms(&pred_lms));
    params.extend(rvec(rng, SHAPE_DIM, -1.5, 1.5));
    params.extend(rvec(rng, 4, -1.5, 1.5));
    params.extend(rvec(rng, 3 * LANDMARK_COUNT, -1.5, 1.5));

    let unpack = move |x: &[f64]| -> (SampleFeatures, AuxParams) {
        let mut o = 0usize;
        let mut take = |n: usize| {
            let s = &x[o..o + n];
            o += n;
            s.to_vec()
        };
        let quat: [f64; 4] = take(4).try_into().unwrap();
        let pos_size: [f64; 3] = take(3).try_into().unwrap();
        let shape: [f64; SHAPE_DIM] = take(SHAPE_DIM).try_into().unwrap();
        let bbox: [f64; 4] = take(4).try_into().unwrap();
        let rot_cov: [f64; 6] = take(6).try_into().unwrap();
        let pos_cov: [f64; 6] = take(6).try_into().unwrap();
        let landmarks = unflatten_lms(&take(3 * LANDMARK_COUNT));
        let shape_sigma: [f64; SHAPE_DIM] = take(SHAPE_DIM).try_into().unwrap();
        let bbox_sigma: [f64; 4] = take(4).try_into().unwrap();
        let landmark_scale = unflatten_lms(&take(3 * LANDMARK_COUNT));
        (
            SampleFeatures {
                quat,
                pos_size,
                shape,
                bbox,
                rot_cov,
                pos_cov,
                landmarks: Some(landmarks),
            },
            AuxParams {
                shape_sigma,
                bbox_sigma,
                landmark_scale,
            },
        )
    };

    let (feat, aux) = unpack(&params);
    let out = grad::total_loss_grad(
        std::slice::from_ref(&feat),
        std::slice::from_ref(&labels),
        &aux,
        &lw,
        &weights,
    )?;
    let g = &out.sample_gradients[0];
    let mut analytic = g.quat.to_vec();
    analytic.extend(g.pos_size);
    analytic.extend(g.shape);
    analytic.extend(g.bbox);
    analytic.extend(g.rot_cov);
    analytic.extend(g.pos_cov);
    analytic.extend(flatten_lms(g.landmarks.as_ref().unwrap()));
    analytic.extend(out.aux_gradient.shape_sigma);
    analytic.extend(out.aux_gradient.bbox_sigma);
    analytic.extend(flatten_lms(&out.aux_gradient.landmark_scale));

    let labels_c = labels.clone();
    let lw_c = lw.clone();
    Ok(Case {
        params,
        analytic,
        value: Box::new(move |x| {
            // independent re-assembly from the value-level losses
            let (feat, aux) = unpack(x);
            let w = &weights;
            let qhat = Quaternion::from_features(
                feat.quat[0],
                feat.quat[1],
                feat.quat[2],
                feat.quat[3],
            );
            let q_gt = labels_c.quat.as_ref().unwrap();
            let rot_cov = Covariance3::from_features(&feat.rot_cov, DEFAULT_COV_EPS);
            let pos_cov = Covariance3::from_features(&feat.pos_cov, DEFAULT_COV_EPS);
            let phat = PosSize::from_features(&feat.pos_size);
            let p_gt = labels_c.pos_size.as_ref().unwrap();
            let phi_gt = labels_c.shape.as_ref().unwrap();
            let sigma: Vec<f64> = aux
                .shape_sigma
                .iter()
                .map(|t| scale_from_feature(*t))
                .collect();
            let lms_gt = labels_c.landmarks.as_ref().unwrap();
            let pred_lms = feat.landmarks.as_ref().unwrap();
            let b: Vec<[f64; 3]> = aux
                .landmark_scale
                .iter()
                .map(|t| std::array::from_fn(|c| scale_from_feature(t[c])))
                .collect();
            let bhat = grad::bbox_from_features(&feat.bbox);
            let b_gt = labels_c.bbox.as_ref().unwrap();
            let bb_sigma: [f64; 4] = std::array::from_fn(|i| scale_from_feature(aux.bbox_sigma[i]));
            let qp = [
                feat.quat[0],
                feat.quat[1],
                feat.quat[2],
                smoothclip_of(feat.quat[3]),
            ];

            w.alpha_rot * super::rot_loss(&qhat, q_gt)
                + w.alpha_p * super::pos_size_loss(&phat, p_gt)
                + w.alpha_phi * super::shape_loss(&feat.shape, phi_gt)
                + w.alpha_xi * super::landmark_loss(pred_lms, lms_gt, &lw_c)
                + w.alpha_bb * super::bbox_loss(&bhat, b_gt)
                + w.alpha_norm * super::quat_norm_penalty(&qp)
                + w.beta_total
                    * (w.beta_rot * super::rot_nll(&qhat, q_gt, &rot_cov)
                        + w.beta_p * super::pos_size_nll(&phat, p_gt, &pos_cov)
                        + w.beta_phi * super::shape_nll(&feat.shape, phi_gt, &sigma).unwrap()
                        + w.beta_xi * super::landmark_nll(pred_lms, lms_gt, &b, &lw_c).unwrap()
                        + w.beta_bb * super::bbox_nll(&bhat, b_gt, &bb_sigma).unwrap())
        }),
    })
}

/// Checks one loss at `points` random configurations.
pub fn check_loss(name: &str, points: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_err = 0.0f64;
    for index in 0..points {
        let case = build_case(name, index, &mut rng)?;
        let numeric = central_difference(&case.value, &case.params, FD_STEP);
        max_err = max_err.max(max_error(&case.analytic, &numeric));
    }
    Ok(CheckOutcome {
        loss: name.to_string(),
        points,
        max_err,
        passed: max_err < REL_TOL,
    })
}

/// Checks every known loss.
pub fn check_all(points: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    LOSS_NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| check_loss(name, points, seed.wrapping_add(i as u64)))
        .collect()
}
