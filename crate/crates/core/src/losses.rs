//! Training losses: regression terms, negative log-likelihoods, the
//! quaternion norm penalty, and the weighted per-batch total.
//!
//! Every loss exists in two forms. The functions in this module take the
//! already-constrained quantities (unit quaternions, positive sizes,
//! positive-definite covariances) and return values. The [`grad`] submodule
//! exposes the same losses as functions of the unconstrained raw features,
//! composing the smoothclip / normalization / `M Mᵀ` mappings, and returns
//! the analytic gradient alongside the value. [`gradcheck`] verifies those
//! gradients against central finite differences.
//!
//! Variance-like parameters (shape variances, bounding-box variances and the
//! per-coordinate Laplace scales) are parameterized in feature space as
//! `smoothclip(t) + 1e-6`, keeping them positive and bounded away from zero.
//! NLL constants (the `log 2π` terms) are kept, so values are exact negative
//! log densities.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{log_map, Box2, Covariance3, Quaternion};

pub mod grad;
pub mod gradcheck;

/// Number of deformation coefficients of the face model.
pub const SHAPE_DIM: usize = 50;
/// Number of landmarks.
pub const LANDMARK_COUNT: usize = 68;
/// Floor added to smoothclip-mapped variance/scale parameters.
pub const SCALE_FLOOR: f64 = 1e-6;

/// Eye-center landmarks (top and bottom of each eye, 0-based indices into the
/// 68-point markup) that carry zero weight in the landmark losses.
pub const EYE_CENTER_LANDMARKS: [usize; 8] = [37, 38, 40, 41, 43, 44, 46, 47];

#[inline]
fn ln_2pi() -> f64 {
    std::f64::consts::TAU.ln()
}

/// Weights of the total loss.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub alpha_rot: f64,
    pub alpha_p: f64,
    pub alpha_phi: f64,
    pub alpha_xi: f64,
    pub alpha_bb: f64,
    pub alpha_norm: f64,
    pub beta_total: f64,
    pub beta_rot: f64,
    pub beta_p: f64,
    pub beta_phi: f64,
    pub beta_xi: f64,
    pub beta_bb: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha_rot: 1.0,
            alpha_p: 1.0,
            alpha_phi: 0.01,
            alpha_xi: 1.0,
            alpha_bb: 0.01,
            alpha_norm: 1e-6,
            beta_total: 0.01,
            beta_rot: 1.0,
            beta_p: 1.0,
            beta_phi: 0.01,
            beta_xi: 1.0,
            beta_bb: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("alpha_rot", self.alpha_rot),
            ("alpha_p", self.alpha_p),
            ("alpha_phi", self.alpha_phi),
            ("alpha_xi", self.alpha_xi),
            ("alpha_bb", self.alpha_bb),
            ("alpha_norm", self.alpha_norm),
            ("beta_total", self.beta_total),
            ("beta_rot", self.beta_rot),
            ("beta_p", self.beta_p),
            ("beta_phi", self.beta_phi),
            ("beta_xi", self.beta_xi),
            ("beta_bb", self.beta_bb),
        ];
        for (name, v) in all {
            if v.is_nan() || v < 0.0 {
                return Err(Error::InvalidField {
                    field: name.to_string(),
                    reason: format!("loss weight must be >= 0, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Per-landmark weights, applied to each coordinate of the landmark.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkWeights {
    w: [f64; LANDMARK_COUNT],
}

impl Default for LandmarkWeights {
    /// Weight 1 everywhere except the eye-center landmarks, which are 0.
    fn default() -> Self {
        let mut w = [1.0; LANDMARK_COUNT];
        for &i in &EYE_CENTER_LANDMARKS {
            w[i] = 0.0;
        }
        LandmarkWeights { w }
    }
}

impl LandmarkWeights {
    pub fn uniform(value: f64) -> Self {
        assert!(value >= 0.0);
        LandmarkWeights {
            w: [value; LANDMARK_COUNT],
        }
    }

    pub fn new(w: [f64; LANDMARK_COUNT]) -> Result<Self> {
        for (i, v) in w.iter().enumerate() {
            if v.is_nan() || *v < 0.0 {
                return Err(Error::InvalidField {
                    field: format!("landmark_weights[{i}]"),
                    reason: format!("must be >= 0, got {v}"),
                });
            }
        }
        Ok(LandmarkWeights { w })
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.w[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }
}

/// Which label groups are present for a sample.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct LabelMask {
    #[serde(default)]
    pub rotation: bool,
    #[serde(default)]
    pub pos_size: bool,
    #[serde(default)]
    pub shape: bool,
    #[serde(default)]
    pub landmarks3d: bool,
    #[serde(default)]
    pub landmarks2d: bool,
    #[serde(default)]
    pub bbox: bool,
}

impl LabelMask {
    pub fn validate(&self) -> Result<()> {
        if !(self.rotation
            || self.pos_size
            || self.shape
            || self.landmarks3d
            || self.landmarks2d
            || self.bbox)
        {
            return Err(Error::InvalidField {
                field: "mask".to_string(),
                reason: "at least one label group must be present".to_string(),
            });
        }
        if self.landmarks3d && self.landmarks2d {
            return Err(Error::InvalidField {
                field: "mask".to_string(),
                reason: "landmarks3d and landmarks2d are mutually exclusive".to_string(),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn has_landmarks(&self) -> bool {
        self.landmarks3d || self.landmarks2d
    }

    /// Mask with every group of a fully labeled (3D) sample.
    pub fn full() -> Self {
        LabelMask {
            rotation: true,
            pos_size: true,
            shape: true,
            landmarks3d: true,
            landmarks2d: false,
            bbox: true,
        }
    }
}

/// 2D position and head size in normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PosSize {
    pub x: f64,
    pub y: f64,
    pub s: f64,
}

impl PosSize {
    pub fn new(x: f64, y: f64, s: f64) -> Self {
        assert!(s > 0.0, "size must be positive");
        PosSize { x, y, s }
    }

    /// Maps raw features: position taken directly, size through smoothclip.
    pub fn from_features(f: &[f64; 3]) -> Self {
        PosSize {
            x: f[0],
            y: f[1],
            s: crate::geometry::smoothclip(f[2]),
        }
    }

    #[inline]
    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.s)
    }
}

/// Ground-truth landmarks: full 3D coordinates or image-plane only.
#[derive(Debug, Clone, PartialEq)]
pub enum LandmarkLabels {
    ThreeD(Vec<[f64; 3]>),
    TwoD(Vec<[f64; 2]>),
}

impl LandmarkLabels {
    pub fn len(&self) -> usize {
        match self {
            LandmarkLabels::ThreeD(v) => v.len(),
            LandmarkLabels::TwoD(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_two_d(&self) -> bool {
        matches!(self, LandmarkLabels::TwoD(_))
    }

    /// Coordinate `c` of landmark `i`; `None` for the z coordinate of 2D
    /// labels.
    #[inline]
    pub fn coord(&self, i: usize, c: usize) -> Option<f64> {
        match self {
            LandmarkLabels::ThreeD(v) => Some(v[i][c]),
            LandmarkLabels::TwoD(v) => {
                if c < 2 {
                    Some(v[i][c])
                } else {
                    None
                }
            }
        }
    }
}

/// `1 - |q̂ · q|²`; zero iff the orientations agree (up to sign), 1 at 180°.
pub fn rot_loss(qhat: &Quaternion, q: &Quaternion) -> f64 {
    let d = qhat.dot(q);
    (1.0 - d * d).max(0.0)
}

fn gaussian_nll3(residual: &Vector3<f64>, cov: &Covariance3) -> f64 {
    0.5 * (residual.dot(&(cov.inverse() * residual)) + cov.log_det() + 3.0 * ln_2pi())
}

/// Gaussian NLL of the tangent-space rotation residual `log(q̂⁻¹ q)` under a
/// zero-centered normal with covariance `cov`.
pub fn rot_nll(qhat: &Quaternion, q: &Quaternion, cov: &Covariance3) -> f64 {
    let r = log_map(&qhat.inverse().mul(q));
    gaussian_nll3(&r.as_vector(), cov)
}

/// Squared Euclidean distance between position/size triplets.
pub fn pos_size_loss(phat: &PosSize, p: &PosSize) -> f64 {
    (p.as_vector() - phat.as_vector()).norm_squared()
}

/// Gaussian NLL of the position/size triplet.
pub fn pos_size_nll(phat: &PosSize, p: &PosSize, cov: &Covariance3) -> f64 {
    gaussian_nll3(&(p.as_vector() - phat.as_vector()), cov)
}

/// L2 loss over the deformation coefficients.
pub fn shape_loss(phihat: &[f64], phi: &[f64]) -> f64 {
    assert_eq!(phihat.len(), phi.len());
    phihat
        .iter()
        .zip(phi)
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Sum of independent scalar Gaussian NLLs; `sigma` holds the variances.
pub fn shape_nll(phihat: &[f64], phi: &[f64], sigma: &[f64]) -> Result<f64> {
    assert_eq!(phihat.len(), phi.len());
    assert_eq!(phihat.len(), sigma.len());
    let mut acc = 0.0;
    for (i, ((a, b), s)) in phihat.iter().zip(phi).zip(sigma).enumerate() {
        if s.is_nan() || *s <= 0.0 {
            return Err(Error::NonPositiveScale {
                name: "shape_sigma",
                index: i,
                value: *s,
            });
        }
        let d = a - b;
        acc += 0.5 * (d * d / s + s.ln() + ln_2pi());
    }
    Ok(acc)
}

/// Weighted L1 over landmark coordinates. 2D labels restrict the sum to the
/// x and y coordinates.
#[allow(clippy::needless_range_loop)] // indices run over parallel landmark tables
pub fn landmark_loss(xihat: &[[f64; 3]], xi: &LandmarkLabels, w: &LandmarkWeights) -> f64 {
    assert_eq!(xihat.len(), LANDMARK_COUNT);
    assert_eq!(xi.len(), LANDMARK_COUNT);
    let mut acc = 0.0;
    for i in 0..LANDMARK_COUNT {
        let wi = w.get(i);
        for c in 0..3 {
            if let Some(gt) = xi.coord(i, c) {
                acc += wi * (xihat[i][c] - gt).abs();
            }
        }
    }
    acc
}

/// Weighted Laplace NLL over landmark coordinates; `b` are the per-coordinate
/// scales.
pub fn landmark_nll(
    xihat: &[[f64; 3]],
    xi: &LandmarkLabels,
    b: &[[f64; 3]],
    w: &LandmarkWeights,
) -> Result<f64> {
    assert_eq!(xihat.len(), LANDMARK_COUNT);
    assert_eq!(xi.len(), LANDMARK_COUNT);
    assert_eq!(b.len(), LANDMARK_COUNT);
    let mut acc = 0.0;
    for i in 0..LANDMARK_COUNT {
        let wi = w.get(i);
        for c in 0..3 {
            if let Some(gt) = xi.coord(i, c) {
                let scale = b[i][c];
                if scale.is_nan() || scale <= 0.0 {
                    return Err(Error::NonPositiveScale {
                        name: "landmark_scale",
                        index: i * 3 + c,
                        value: scale,
                    });
                }
                acc += wi * ((2.0 * scale).ln() + (xihat[i][c] - gt).abs() / scale);
            }
        }
    }
    Ok(acc)
}

/// L2 over the four box corner coordinates.
pub fn bbox_loss(bhat: &Box2, b: &Box2) -> f64 {
    let ch = bhat.corners();
    let cg = b.corners();
    ch.iter().zip(&cg).map(|(a, g)| (a - g) * (a - g)).sum()
}

/// Independent Gaussian NLL over the four box corner coordinates; `sigma`
/// holds the per-corner variances.
pub fn bbox_nll(bhat: &Box2, b: &Box2, sigma: &[f64; 4]) -> Result<f64> {
    let ch = bhat.corners();
    let cg = b.corners();
    let mut acc = 0.0;
    for i in 0..4 {
        if sigma[i].is_nan() || sigma[i] <= 0.0 {
            return Err(Error::NonPositiveScale {
                name: "bbox_sigma",
                index: i,
                value: sigma[i],
            });
        }
        let d = ch[i] - cg[i];
        acc += 0.5 * (d * d / sigma[i] + sigma[i].ln() + ln_2pi());
    }
    Ok(acc)
}

/// `(1 - ||q'||)²` on the unnormalized quaternion.
pub fn quat_norm_penalty(qprime: &[f64; 4]) -> f64 {
    let n = (qprime[0] * qprime[0]
        + qprime[1] * qprime[1]
        + qprime[2] * qprime[2]
        + qprime[3] * qprime[3])
        .sqrt();
    (1.0 - n) * (1.0 - n)
}

/// Per-sample prediction in raw feature space, as produced by a prediction
/// head before any constraint mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFeatures {
    /// Quaternion features; orientation is `from_features(z0..z3)`.
    pub quat: [f64; 4],
    /// Position (taken directly) and size (through smoothclip).
    pub pos_size: [f64; 3],
    /// Deformation coefficients (identity mapping).
    pub shape: [f64; SHAPE_DIM],
    /// Box center (direct) and size (through smoothclip).
    pub bbox: [f64; 4],
    /// Six features of the rotation covariance `M Mᵀ + εI`.
    pub rot_cov: [f64; 6],
    /// Six features of the position/size covariance.
    pub pos_cov: [f64; 6],
    /// Predicted landmark positions, when the prediction path supplies them.
    pub landmarks: Option<Vec<[f64; 3]>>,
}

impl SampleFeatures {
    pub fn zeros() -> Self {
        SampleFeatures {
            quat: [0.0; 4],
            pos_size: [0.0; 3],
            shape: [0.0; SHAPE_DIM],
            bbox: [0.0; 4],
            rot_cov: [0.0; 6],
            pos_cov: [0.0; 6],
            landmarks: None,
        }
    }
}

/// Ground-truth labels of one sample; `mask` states which groups are present.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleLabels {
    pub mask: LabelMask,
    pub quat: Option<Quaternion>,
    pub pos_size: Option<PosSize>,
    pub shape: Option<Vec<f64>>,
    pub landmarks: Option<LandmarkLabels>,
    pub bbox: Option<Box2>,
}

/// Input-independent auxiliary parameters (raw features): shape variances,
/// box-corner variances, and Laplace landmark scales, all mapped through
/// `smoothclip(t) + SCALE_FLOOR`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxParams {
    pub shape_sigma: [f64; SHAPE_DIM],
    pub bbox_sigma: [f64; 4],
    pub landmark_scale: Vec<[f64; 3]>,
}

impl AuxParams {
    /// Features that map to unit variances and unit Laplace scales.
    pub fn standard() -> Self {
        let t = crate::geometry::smoothclip_inv(1.0 - SCALE_FLOOR);
        AuxParams {
            shape_sigma: [t; SHAPE_DIM],
            bbox_sigma: [t; 4],
            landmark_scale: vec![[t; 3]; LANDMARK_COUNT],
        }
    }
}

/// Weighted total loss of a batch, averaged over the batch size.
///
/// Infeasible terms (missing label groups) are dropped per the sample mask.
/// The norm penalty has no label dependency and is always active.
pub fn total_loss(
    features: &[SampleFeatures],
    labels: &[SampleLabels],
    aux: &AuxParams,
    lw: &LandmarkWeights,
    weights: &LossWeights,
) -> Result<f64> {
    grad::total_loss_grad(features, labels, aux, lw, weights).map(|r| r.value)
}
