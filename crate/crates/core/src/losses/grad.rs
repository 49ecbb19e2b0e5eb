//! Feature-space losses with analytic gradients.
//!
//! Each function here mirrors a loss from the parent module but takes the
//! unconstrained raw features and differentiates through the constraint
//! mappings: quaternion features pass through smoothclip + normalization,
//! sizes through smoothclip, covariances through `M Mᵀ + εI`, and variance /
//! scale parameters through `smoothclip + floor`. Ground-truth arguments are
//! constants. These are the gradients used by the trainer; they are audited
//! against central finite differences in [`super::gradcheck`].

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::geometry::{lower_triangular, smoothclip, smoothclip_deriv, Box2, Quaternion};

use super::{
    AuxParams, LandmarkLabels, LandmarkWeights, LossWeights, PosSize, SampleFeatures,
    SampleLabels, LANDMARK_COUNT, SCALE_FLOOR, SHAPE_DIM,
};

#[inline]
fn ln_2pi() -> f64 {
    std::f64::consts::TAU.ln()
}

/// Variance/scale parameter from its raw feature.
#[inline]
pub fn scale_from_feature(t: f64) -> f64 {
    smoothclip(t) + SCALE_FLOOR
}

/// Gradient of a function of the normalized quaternion, pulled back to the
/// four raw features.
fn quat_feature_chain(z: &[f64; 4], grad_qhat: Vector4<f64>) -> [f64; 4] {
    let qp = Vector4::new(z[0], z[1], z[2], smoothclip(z[3]));
    let n = qp.norm();
    let qhat = qp / n;
    let g = (grad_qhat - qhat * qhat.dot(&grad_qhat)) / n;
    [g[0], g[1], g[2], g[3] * smoothclip_deriv(z[3])]
}

/// Right-multiplication matrix: `p ⊗ g = R(g) · p` with p as (x, y, z, w).
fn right_mul_matrix(g: &Quaternion) -> Matrix4<f64> {
    Matrix4::new(
        g.w, g.z, -g.y, g.x, //
        -g.z, g.w, g.x, g.y, //
        g.y, -g.x, g.w, g.z, //
        -g.x, -g.y, -g.z, g.w,
    )
}

/// Jacobian of the full-angle log map at a canonical (w >= 0) unit
/// quaternion, as a 3×4 matrix over (x, y, z, w).
///
/// Off-sphere extension `r(u) = 2·atan2(||v||, w)·v/||v||` is used; its
/// tangential derivatives agree with the intrinsic ones, which is all the
/// chain rule through the normalization needs.
fn log_map_jacobian(u: &Quaternion) -> Matrix3x4<f64> {
    let v = Vector3::new(u.x, u.y, u.z);
    let s2 = v.norm_squared();
    let s = s2.sqrt();
    let ss = s2 + u.w * u.w;
    let theta = 2.0 * s.atan2(u.w);

    let (k, g) = if theta < 1e-4 {
        // series in x = s/w: k = (2/w)(1 - x²/3 + x⁴/5),
        // g = (dk/ds)/s = -4/(3w³) + 8s²/(5w⁵)
        let w = u.w;
        let x2 = s2 / (w * w);
        (
            (2.0 / w) * (1.0 - x2 / 3.0 + x2 * x2 / 5.0),
            -4.0 / (3.0 * w * w * w) + 8.0 * s2 / (5.0 * w.powi(5)),
        )
    } else {
        let k = theta / s;
        (k, 2.0 * u.w / (ss * s2) - k / s2)
    };

    let jv = Matrix3::identity() * k + v * v.transpose() * g;
    let jw = v * (-2.0 / ss);
    Matrix3x4::new(
        jv[(0, 0)], jv[(0, 1)], jv[(0, 2)], jw[0], //
        jv[(1, 0)], jv[(1, 1)], jv[(1, 2)], jw[1], //
        jv[(2, 0)], jv[(2, 1)], jv[(2, 2)], jw[2],
    )
}

/// Gradient of `½ rᵀΣ⁻¹r + ½ log det Σ` with respect to the six covariance
/// features, given `Σ⁻¹` and `Σ⁻¹ r`.
fn covariance_feature_grad(m: &[f64; 6], inv: &Matrix3<f64>, pr: &Vector3<f64>) -> [f64; 6] {
    // dL/dΣ = ½(Σ⁻¹ - Σ⁻¹ r rᵀ Σ⁻¹); grad_M = 2 · dL/dΣ · M
    let g_sigma_times2 = inv - pr * pr.transpose();
    let gm = g_sigma_times2 * lower_triangular(m);
    [
        gm[(0, 0)],
        gm[(1, 0)],
        gm[(1, 1)],
        gm[(2, 0)],
        gm[(2, 1)],
        gm[(2, 2)],
    ]
}

/// `1 - |q̂·q|²` with gradient over the quaternion features.
pub fn rot_loss_grad(z: &[f64; 4], q_gt: &Quaternion) -> (f64, [f64; 4]) {
    let qhat = Quaternion::from_features(z[0], z[1], z[2], z[3]);
    let d = qhat.dot(q_gt);
    let value = (1.0 - d * d).max(0.0);
    let grad_qhat = Vector4::new(q_gt.x, q_gt.y, q_gt.z, q_gt.w) * (-2.0 * d);
    (value, quat_feature_chain(z, grad_qhat))
}

/// Rotation NLL with gradients over the quaternion features and the six
/// covariance features.
pub fn rot_nll_grad(
    z: &[f64; 4],
    m: &[f64; 6],
    q_gt: &Quaternion,
    eps: f64,
) -> (f64, [f64; 4], [f64; 6]) {
    let qhat = Quaternion::from_features(z[0], z[1], z[2], z[3]);
    let u = qhat.inverse().mul(q_gt);
    let uc = u.canonical();
    let flip = if uc == u { 1.0 } else { -1.0 };

    let r3 = crate::geometry::log_map(&u).as_vector();
    let cov = crate::geometry::Covariance3::from_features(m, eps);
    let inv = cov.inverse();
    let pr = inv * r3;
    let value = 0.5 * (r3.dot(&pr) + cov.log_det() + 3.0 * ln_2pi());

    // chain: r ← canonical(u) ← conj(q̂) ⊗ q_gt ← q̂ ← q' ← z
    let grad_u = log_map_jacobian(&uc).transpose() * pr * flip;
    let conj = Matrix4::from_diagonal(&Vector4::new(-1.0, -1.0, -1.0, 1.0));
    let grad_qhat = conj * (right_mul_matrix(q_gt).transpose() * grad_u);

    let grad_z = quat_feature_chain(z, grad_qhat);
    let grad_m = covariance_feature_grad(m, &inv, &pr);
    (value, grad_z, grad_m)
}

/// Squared position/size error with gradient over the three raw features.
pub fn pos_size_loss_grad(f: &[f64; 3], p_gt: &PosSize) -> (f64, [f64; 3]) {
    let phat = PosSize::from_features(f);
    let d = phat.as_vector() - p_gt.as_vector();
    let value = d.norm_squared();
    (
        value,
        [
            2.0 * d[0],
            2.0 * d[1],
            2.0 * d[2] * smoothclip_deriv(f[2]),
        ],
    )
}

/// Position/size NLL with gradients over the three position features and the
/// six covariance features.
pub fn pos_size_nll_grad(
    f: &[f64; 3],
    m: &[f64; 6],
    p_gt: &PosSize,
    eps: f64,
) -> (f64, [f64; 3], [f64; 6]) {
    let phat = PosSize::from_features(f);
    let r = p_gt.as_vector() - phat.as_vector();
    let cov = crate::geometry::Covariance3::from_features(m, eps);
    let inv = cov.inverse();
    let pr = inv * r;
    let value = 0.5 * (r.dot(&pr) + cov.log_det() + 3.0 * ln_2pi());
    let grad_f = [
        -pr[0],
        -pr[1],
        -pr[2] * smoothclip_deriv(f[2]),
    ];
    (value, grad_f, covariance_feature_grad(m, &inv, &pr))
}

/// Shape L2 with gradient over the coefficients.
pub fn shape_loss_grad(phihat: &[f64; SHAPE_DIM], phi: &[f64]) -> (f64, [f64; SHAPE_DIM]) {
    assert_eq!(phi.len(), SHAPE_DIM);
    let mut value = 0.0;
    let mut grad = [0.0; SHAPE_DIM];
    for i in 0..SHAPE_DIM {
        let d = phihat[i] - phi[i];
        value += d * d;
        grad[i] = 2.0 * d;
    }
    (value, grad)
}

/// Shape NLL with gradients over the coefficients and the variance features.
pub fn shape_nll_grad(
    phihat: &[f64; SHAPE_DIM],
    sigma_feat: &[f64; SHAPE_DIM],
    phi: &[f64],
) -> (f64, [f64; SHAPE_DIM], [f64; SHAPE_DIM]) {
    assert_eq!(phi.len(), SHAPE_DIM);
    let mut value = 0.0;
    let mut grad_phi = [0.0; SHAPE_DIM];
    let mut grad_t = [0.0; SHAPE_DIM];
    for i in 0..SHAPE_DIM {
        let s = scale_from_feature(sigma_feat[i]);
        let d = phihat[i] - phi[i];
        value += 0.5 * (d * d / s + s.ln() + ln_2pi());
        grad_phi[i] = d / s;
        grad_t[i] = 0.5 * (1.0 / s - d * d / (s * s)) * smoothclip_deriv(sigma_feat[i]);
    }
    (value, grad_phi, grad_t)
}

/// Weighted landmark L1 with gradient over the predicted coordinates.
/// A zero uses `sign(0) = 0` (subgradient at the kink).
pub fn landmark_loss_grad(
    xihat: &[[f64; 3]],
    xi: &LandmarkLabels,
    w: &LandmarkWeights,
) -> (f64, Vec<[f64; 3]>) {
    assert_eq!(xihat.len(), LANDMARK_COUNT);
    assert_eq!(xi.len(), LANDMARK_COUNT);
    let mut value = 0.0;
    let mut grad = vec![[0.0; 3]; LANDMARK_COUNT];
    for i in 0..LANDMARK_COUNT {
        let wi = w.get(i);
        for c in 0..3 {
            if let Some(gt) = xi.coord(i, c) {
                let d = xihat[i][c] - gt;
                value += wi * d.abs();
                grad[i][c] = wi * sign0(d);
            }
        }
    }
    (value, grad)
}

/// Weighted Laplace landmark NLL with gradients over the predicted
/// coordinates and the raw scale features.
pub fn landmark_nll_grad(
    xihat: &[[f64; 3]],
    scale_feat: &[[f64; 3]],
    xi: &LandmarkLabels,
    w: &LandmarkWeights,
) -> (f64, Vec<[f64; 3]>, Vec<[f64; 3]>) {
    assert_eq!(xihat.len(), LANDMARK_COUNT);
    assert_eq!(scale_feat.len(), LANDMARK_COUNT);
    assert_eq!(xi.len(), LANDMARK_COUNT);
    let mut value = 0.0;
    let mut grad_xi = vec![[0.0; 3]; LANDMARK_COUNT];
    let mut grad_t = vec![[0.0; 3]; LANDMARK_COUNT];
    for i in 0..LANDMARK_COUNT {
        let wi = w.get(i);
        for c in 0..3 {
            if let Some(gt) = xi.coord(i, c) {
                let b = scale_from_feature(scale_feat[i][c]);
                let d = xihat[i][c] - gt;
                value += wi * ((2.0 * b).ln() + d.abs() / b);
                grad_xi[i][c] = wi * sign0(d) / b;
                grad_t[i][c] =
                    wi * (1.0 / b - d.abs() / (b * b)) * smoothclip_deriv(scale_feat[i][c]);
            }
        }
    }
    (value, grad_xi, grad_t)
}

#[inline]
fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Predicted box from its four raw features.
pub fn bbox_from_features(f: &[f64; 4]) -> Box2 {
    Box2::new(f[0], f[1], smoothclip(f[2]), smoothclip(f[3]))
}

/// Pulls per-corner gradients back onto the four box features.
fn bbox_feature_chain(f: &[f64; 4], gc: &[f64; 4]) -> [f64; 4] {
    [
        gc[0] + gc[2],
        gc[1] + gc[3],
        0.5 * (gc[2] - gc[0]) * smoothclip_deriv(f[2]),
        0.5 * (gc[3] - gc[1]) * smoothclip_deriv(f[3]),
    ]
}

/// Box corner L2 with gradient over the four box features.
pub fn bbox_loss_grad(f: &[f64; 4], gt: &Box2) -> (f64, [f64; 4]) {
    let pred = bbox_from_features(f).corners();
    let g = gt.corners();
    let mut value = 0.0;
    let mut gc = [0.0; 4];
    for i in 0..4 {
        let d = pred[i] - g[i];
        value += d * d;
        gc[i] = 2.0 * d;
    }
    (value, bbox_feature_chain(f, &gc))
}

/// Box corner NLL with gradients over the box features and variance features.
pub fn bbox_nll_grad(
    f: &[f64; 4],
    sigma_feat: &[f64; 4],
    gt: &Box2,
) -> (f64, [f64; 4], [f64; 4]) {
    let pred = bbox_from_features(f).corners();
    let g = gt.corners();
    let mut value = 0.0;
    let mut gc = [0.0; 4];
    let mut grad_t = [0.0; 4];
    for i in 0..4 {
        let s = scale_from_feature(sigma_feat[i]);
        let d = pred[i] - g[i];
        value += 0.5 * (d * d / s + s.ln() + ln_2pi());
        gc[i] = d / s;
        grad_t[i] = 0.5 * (1.0 / s - d * d / (s * s)) * smoothclip_deriv(sigma_feat[i]);
    }
    (value, bbox_feature_chain(f, &gc), grad_t)
}

/// Norm penalty `(1 - ||q'||)²` with gradient over the quaternion features.
pub fn quat_norm_penalty_grad(z: &[f64; 4]) -> (f64, [f64; 4]) {
    let qp = Vector4::new(z[0], z[1], z[2], smoothclip(z[3]));
    let n = qp.norm();
    let value = (1.0 - n) * (1.0 - n);
    let g = qp * (-2.0 * (1.0 - n) / n);
    (
        value,
        [g[0], g[1], g[2], g[3] * smoothclip_deriv(z[3])],
    )
}

/// Gradient of the total loss with respect to one sample's features.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGradient {
    pub quat: [f64; 4],
    pub pos_size: [f64; 3],
    pub shape: [f64; SHAPE_DIM],
    pub bbox: [f64; 4],
    pub rot_cov: [f64; 6],
    pub pos_cov: [f64; 6],
    pub landmarks: Option<Vec<[f64; 3]>>,
}

impl SampleGradient {
    fn zeros(with_landmarks: bool) -> Self {
        SampleGradient {
            quat: [0.0; 4],
            pos_size: [0.0; 3],
            shape: [0.0; SHAPE_DIM],
            bbox: [0.0; 4],
            rot_cov: [0.0; 6],
            pos_cov: [0.0; 6],
            landmarks: with_landmarks.then(|| vec![[0.0; 3]; LANDMARK_COUNT]),
        }
    }

    fn scale(&mut self, k: f64) {
        for v in self
            .quat
            .iter_mut()
            .chain(&mut self.pos_size)
            .chain(&mut self.shape)
            .chain(&mut self.bbox)
            .chain(&mut self.rot_cov)
            .chain(&mut self.pos_cov)
        {
            *v *= k;
        }
        if let Some(lms) = &mut self.landmarks {
            for p in lms {
                for v in p {
                    *v *= k;
                }
            }
        }
    }
}

/// Gradient of the total loss with respect to the auxiliary parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxGradient {
    pub shape_sigma: [f64; SHAPE_DIM],
    pub bbox_sigma: [f64; 4],
    pub landmark_scale: Vec<[f64; 3]>,
}

impl AuxGradient {
    fn zeros() -> Self {
        AuxGradient {
            shape_sigma: [0.0; SHAPE_DIM],
            bbox_sigma: [0.0; 4],
            landmark_scale: vec![[0.0; 3]; LANDMARK_COUNT],
        }
    }

    fn scale(&mut self, k: f64) {
        for v in self.shape_sigma.iter_mut().chain(&mut self.bbox_sigma) {
            *v *= k;
        }
        for p in &mut self.landmark_scale {
            for v in p {
                *v *= k;
            }
        }
    }
}

/// Value and gradients of the total loss over a batch.
#[derive(Debug, Clone)]
pub struct TotalLoss {
    pub value: f64,
    pub sample_gradients: Vec<SampleGradient>,
    pub aux_gradient: AuxGradient,
}

fn add4(a: &mut [f64; 4], b: &[f64; 4], k: f64) {
    for i in 0..4 {
        a[i] += k * b[i];
    }
}

fn add6(a: &mut [f64; 6], b: &[f64; 6], k: f64) {
    for i in 0..6 {
        a[i] += k * b[i];
    }
}

fn missing(field: &str) -> Error {
    Error::InvalidField {
        field: field.to_string(),
        reason: "label group is in the mask but the value is missing".to_string(),
    }
}

/// Per-sample weighted loss and gradients (not yet divided by batch size).
fn sample_loss_grad(
    feat: &SampleFeatures,
    labels: &SampleLabels,
    aux: &AuxParams,
    lw: &LandmarkWeights,
    w: &LossWeights,
    eps: f64,
) -> Result<(f64, SampleGradient, AuxGradient)> {
    labels.mask.validate()?;
    let mut value = 0.0;
    let mut grad = SampleGradient::zeros(feat.landmarks.is_some());
    let mut aux_grad = AuxGradient::zeros();
    let bt = w.beta_total;

    if labels.mask.rotation {
        let q_gt = labels.quat.as_ref().ok_or_else(|| missing("quat"))?;
        let (v, gz) = rot_loss_grad(&feat.quat, q_gt);
        value += w.alpha_rot * v;
        add4(&mut grad.quat, &gz, w.alpha_rot);
        if bt * w.beta_rot != 0.0 {
            let (v, gz, gm) = rot_nll_grad(&feat.quat, &feat.rot_cov, q_gt, eps);
            value += bt * w.beta_rot * v;
            add4(&mut grad.quat, &gz, bt * w.beta_rot);
            add6(&mut grad.rot_cov, &gm, bt * w.beta_rot);
        }
    }

    if labels.mask.pos_size {
        let p_gt = labels.pos_size.as_ref().ok_or_else(|| missing("pos_size"))?;
        let (v, gf) = pos_size_loss_grad(&feat.pos_size, p_gt);
        value += w.alpha_p * v;
        for (g, d) in grad.pos_size.iter_mut().zip(&gf) {
            *g += w.alpha_p * d;
        }
        if bt * w.beta_p != 0.0 {
            let (v, gf, gm) = pos_size_nll_grad(&feat.pos_size, &feat.pos_cov, p_gt, eps);
            value += bt * w.beta_p * v;
            for (g, d) in grad.pos_size.iter_mut().zip(&gf) {
                *g += bt * w.beta_p * d;
            }
            add6(&mut grad.pos_cov, &gm, bt * w.beta_p);
        }
    }

    if labels.mask.shape {
        let phi_gt = labels.shape.as_ref().ok_or_else(|| missing("shape"))?;
        if phi_gt.len() != SHAPE_DIM {
            return Err(Error::DimensionMismatch {
                name: "shape",
                expected: SHAPE_DIM,
                got: phi_gt.len(),
            });
        }
        let (v, gp) = shape_loss_grad(&feat.shape, phi_gt);
        value += w.alpha_phi * v;
        for (g, d) in grad.shape.iter_mut().zip(&gp) {
            *g += w.alpha_phi * d;
        }
        if bt * w.beta_phi != 0.0 {
            let (v, gp, gt) = shape_nll_grad(&feat.shape, &aux.shape_sigma, phi_gt);
            value += bt * w.beta_phi * v;
            for i in 0..SHAPE_DIM {
                grad.shape[i] += bt * w.beta_phi * gp[i];
                aux_grad.shape_sigma[i] += bt * w.beta_phi * gt[i];
            }
        }
    }

    if labels.mask.has_landmarks() {
        let xi_gt = labels.landmarks.as_ref().ok_or_else(|| missing("landmarks"))?;
        if labels.mask.landmarks2d != xi_gt.is_two_d() {
            return Err(Error::InvalidField {
                field: "landmarks".to_string(),
                reason: "label dimensionality disagrees with the mask".to_string(),
            });
        }
        let xihat = feat
            .landmarks
            .as_ref()
            .ok_or_else(|| missing("predicted landmarks"))?;
        let (v, gx) = landmark_loss_grad(xihat, xi_gt, lw);
        value += w.alpha_xi * v;
        let glms = grad.landmarks.as_mut().expect("allocated with landmarks");
        for i in 0..LANDMARK_COUNT {
            for c in 0..3 {
                glms[i][c] += w.alpha_xi * gx[i][c];
            }
        }
        if bt * w.beta_xi != 0.0 {
            let (v, gx, gt) = landmark_nll_grad(xihat, &aux.landmark_scale, xi_gt, lw);
            value += bt * w.beta_xi * v;
            for i in 0..LANDMARK_COUNT {
                for c in 0..3 {
                    glms[i][c] += bt * w.beta_xi * gx[i][c];
                    aux_grad.landmark_scale[i][c] += bt * w.beta_xi * gt[i][c];
                }
            }
        }
    }

    if labels.mask.bbox {
        let b_gt = labels.bbox.as_ref().ok_or_else(|| missing("bbox"))?;
        let (v, gf) = bbox_loss_grad(&feat.bbox, b_gt);
        value += w.alpha_bb * v;
        add4(&mut grad.bbox, &gf, w.alpha_bb);
        if bt * w.beta_bb != 0.0 {
            let (v, gf, gt) = bbox_nll_grad(&feat.bbox, &aux.bbox_sigma, b_gt);
            value += bt * w.beta_bb * v;
            add4(&mut grad.bbox, &gf, bt * w.beta_bb);
            add4(&mut aux_grad.bbox_sigma, &gt, bt * w.beta_bb);
        }
    }

    // norm penalty depends only on the prediction, never masked
    let (v, gz) = quat_norm_penalty_grad(&feat.quat);
    value += w.alpha_norm * v;
    add4(&mut grad.quat, &gz, w.alpha_norm);

    Ok((value, grad, aux_grad))
}

/// Weighted total loss of a batch with gradients, averaged over the batch.
pub fn total_loss_grad(
    features: &[SampleFeatures],
    labels: &[SampleLabels],
    aux: &AuxParams,
    lw: &LandmarkWeights,
    weights: &LossWeights,
) -> Result<TotalLoss> {
    if features.is_empty() {
        return Err(Error::EmptyInput("total_loss batch"));
    }
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            name: "total_loss batch",
            expected: features.len(),
            got: labels.len(),
        });
    }
    weights.validate()?;

    let inv_b = 1.0 / features.len() as f64;
    let mut value = 0.0;
    let mut sample_gradients = Vec::with_capacity(features.len());
    let mut aux_gradient = AuxGradient::zeros();

    for (feat, lab) in features.iter().zip(labels) {
        let (v, mut g, ag) = sample_loss_grad(
            feat,
            lab,
            aux,
            lw,
            weights,
            crate::geometry::DEFAULT_COV_EPS,
        )?;
        value += v;
        g.scale(inv_b);
        sample_gradients.push(g);
        for i in 0..SHAPE_DIM {
            aux_gradient.shape_sigma[i] += ag.shape_sigma[i];
        }
        for i in 0..4 {
            aux_gradient.bbox_sigma[i] += ag.bbox_sigma[i];
        }
        for i in 0..LANDMARK_COUNT {
            for c in 0..3 {
                aux_gradient.landmark_scale[i][c] += ag.landmark_scale[i][c];
            }
        }
    }
    aux_gradient.scale(inv_b);

    Ok(TotalLoss {
        value: value * inv_b,
        sample_gradients,
        aux_gradient,
    })
}
