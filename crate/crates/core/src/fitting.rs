//! Pose/shape recovery from 2D landmark annotations.
//!
//! The optimizer minimizes a weighted sum of squared landmark error
//! (confidence × visibility weighted), a rotation prior, the negative log
//! likelihood of a Gaussian-mixture shape prior, a quaternion norm penalty,
//! and a softplus barrier keeping the head size positive. Parameters are
//! unconstrained: the raw quaternion 4-vector, translation, the raw size
//! feature (through smoothclip), and the deformation coefficients. Descent
//! is plain gradient descent with Armijo backtracking, which keeps every
//! term finite-difference checkable.
//!
//! [`gmm_fit`] trains the diagonal Gaussian mixture itself by EM with
//! k-means seeding.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::facemodel::{DeformableModel, Pose, ShapeCoeffs};
use crate::geometry::{smoothclip, smoothclip_deriv, smoothclip_inv, Quaternion};
use crate::losses::{LANDMARK_COUNT, SHAPE_DIM};

/// Sharpness of the head-size positivity barrier `softplus(-k·s)/k`.
const BARRIER_SHARPNESS: f64 = 20.0;

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let m = GaussianMixture {
            weights,
            means,
            variances,
        };
        m.validate()?;
        Ok(m)
    }

    /// Re-checks the invariants; needed after deserialization, which does
    /// not pass through [`GaussianMixture::new`].
    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::EmptyInput("mixture components"));
        }
        if self.means.len() != self.weights.len() || self.variances.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                name: "mixture components",
                expected: self.weights.len(),
                got: self.means.len().min(self.variances.len()),
            });
        }
        let sum: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| w.is_nan() || *w < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "mixture weights must form a simplex (sum = {sum})"
            )));
        }
        let dim = self.means[0].len();
        for (k, (m, v)) in self.means.iter().zip(&self.variances).enumerate() {
            if m.len() != dim || v.len() != dim {
                return Err(Error::InvalidField {
                    field: format!("component[{k}]"),
                    reason: "mean/variance dimension mismatch".to_string(),
                });
            }
            if let Some(j) = v.iter().position(|x| x.is_nan() || *x <= 0.0) {
                return Err(Error::NonPositiveScale {
                    name: "mixture variance",
                    index: k * dim + j,
                    value: v[j],
                });
            }
        }
        Ok(())
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }

    /// Per-component log of weight times Gaussian density.
    fn component_logs(&self, x: &[f64]) -> Vec<f64> {
        let ln_2pi = std::f64::consts::TAU.ln();
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((w, mu), var)| {
                let mut acc = w.ln();
                for j in 0..x.len() {
                    let d = x[j] - mu[j];
                    acc -= 0.5 * (d * d / var[j] + var[j].ln() + ln_2pi);
                }
                acc
            })
            .collect()
    }

    /// Log mixture density at `x`.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim());
        log_sum_exp(&self.component_logs(x))
    }

    /// Negative log density with its gradient.
    pub fn nll_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(x.len(), self.dim());
        let logs = self.component_logs(x);
        let lse = log_sum_exp(&logs);
        let mut grad = vec![0.0; x.len()];
        for (k, lk) in logs.iter().enumerate() {
            let resp = (lk - lse).exp();
            for j in 0..x.len() {
                grad[j] += resp * (x[j] - self.means[k][j]) / self.variances[k][j];
            }
        }
        (-lse, grad)
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// One landmark-fitting problem.
#[derive(Debug, Clone)]
pub struct FitProblem<'a> {
    pub landmarks2d: Vec<[f64; 2]>,
    pub confidence: Vec<f64>,
    pub prior_pose: Pose,
    pub prior_pose_weight: f64,
    pub shape_prior: GaussianMixture,
    pub model: &'a DeformableModel,
}

impl FitProblem<'_> {
    pub fn validate(&self) -> Result<()> {
        if self.landmarks2d.len() != LANDMARK_COUNT || self.confidence.len() != LANDMARK_COUNT {
            return Err(Error::DimensionMismatch {
                name: "fit landmarks/confidence",
                expected: LANDMARK_COUNT,
                got: self.landmarks2d.len().min(self.confidence.len()),
            });
        }
        if self.confidence.iter().any(|c| c.is_nan() || *c < 0.0) {
            return Err(Error::InvalidField {
                field: "confidence".to_string(),
                reason: "must be >= 0".to_string(),
            });
        }
        let positive = self.confidence.iter().filter(|c| **c > 0.0).count();
        if positive < 6 {
            return Err(Error::TooFewSamples {
                need: 6,
                got: positive,
            });
        }
        if self.prior_pose_weight.is_nan() || self.prior_pose_weight < 0.0 {
            return Err(Error::InvalidField {
                field: "prior_pose_weight".to_string(),
                reason: "must be >= 0".to_string(),
            });
        }
        self.shape_prior.validate()?;
        if self.shape_prior.dim() != SHAPE_DIM {
            return Err(Error::DimensionMismatch {
                name: "shape prior",
                expected: SHAPE_DIM,
                got: self.shape_prior.dim(),
            });
        }
        Ok(())
    }
}

/// Optimizer configuration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitConfig {
    pub max_iterations: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub armijo_c: f64,
    pub backtrack: f64,
    pub landmark_weight: f64,
    pub mixture_weight: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 2000,
            grad_tol: 1e-6,
            step_tol: 1e-10,
            armijo_c: 1e-4,
            backtrack: 0.5,
            landmark_weight: 1.0,
            mixture_weight: 0.01,
        }
    }
}

/// Fit outcome.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub pose: Pose,
    pub coeffs: ShapeCoeffs,
    pub final_objective: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Unweighted RMSE over the positive-confidence landmarks.
    pub landmark_rmse: f64,
}

impl FitResult {
    /// Failed-fit filter: non-convergence, or landmark RMSE above 5% of the
    /// diagonal of the box around the input annotations.
    pub fn is_flagged(&self, problem: &FitProblem) -> bool {
        !self.converged || self.landmark_rmse > 0.05 * annotation_diagonal(&problem.landmarks2d)
    }
}

fn annotation_diagonal(landmarks: &[[f64; 2]]) -> f64 {
    let mut x0 = f64::INFINITY;
    let mut x1 = f64::NEG_INFINITY;
    let mut y0 = f64::INFINITY;
    let mut y1 = f64::NEG_INFINITY;
    for p in landmarks {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt()
}

/// Per-landmark weights in [0, 1] from the outward direction of each
/// landmark vertex under the prior rotation: the clamped cosine toward the
/// camera (z pointing into the image). Identical for q and -q.
pub fn visibility_weights(prior_q: &Quaternion, model: &DeformableModel) -> Vec<f64> {
    let centroid = model.centroid();
    model
        .landmark_indices()
        .iter()
        .map(|&i| {
            let n = model.base_vertices()[i] - centroid;
            let norm = n.norm();
            if norm == 0.0 {
                return 0.0;
            }
            let rotated = prior_q.rotate(&(n / norm));
            (-rotated.z).clamp(0.0, 1.0)
        })
        .collect()
}

const N_PARAMS: usize = 7 + SHAPE_DIM;

/// Landmark rows of the model, gathered once per problem.
struct LandmarkSubModel {
    base: Vec<Vector3<f64>>,
    basis: Vec<Vec<Vector3<f64>>>, // K × 68
}

impl LandmarkSubModel {
    fn gather(model: &DeformableModel) -> Self {
        let idx = model.landmark_indices();
        LandmarkSubModel {
            base: idx.iter().map(|&i| model.base_vertices()[i]).collect(),
            basis: model
                .basis()
                .iter()
                .map(|b| idx.iter().map(|&i| b[i]).collect())
                .collect(),
        }
    }

    fn vertex(&self, i: usize, phi: &[f64]) -> Vector3<f64> {
        let mut v = self.base[i];
        for (k, p) in phi.iter().enumerate() {
            if *p != 0.0 {
                v += self.basis[k][i] * *p;
            }
        }
        v
    }
}

fn pack(pose: &Pose, coeffs: &ShapeCoeffs) -> [f64; N_PARAMS] {
    let mut p = [0.0; N_PARAMS];
    p[0] = pose.q.x;
    p[1] = pose.q.y;
    p[2] = pose.q.z;
    p[3] = pose.q.w;
    p[4] = pose.tx;
    p[5] = pose.ty;
    p[6] = smoothclip_inv(pose.s);
    p[7..].copy_from_slice(&coeffs.phi);
    p
}

fn unpack(p: &[f64; N_PARAMS]) -> (Pose, ShapeCoeffs) {
    let q = Quaternion::new(p[0], p[1], p[2], p[3]).normalized().canonical();
    (
        Pose::new(q, p[4], p[5], smoothclip(p[6])),
        ShapeCoeffs {
            phi: p[7..].to_vec(),
        },
    )
}

struct ObjectiveParts {
    value: f64,
    grad: [f64; N_PARAMS],
    landmark_rmse: f64,
}

#[allow(clippy::needless_range_loop)] // indices run over parallel landmark tables
fn objective(
    params: &[f64; N_PARAMS],
    problem: &FitProblem,
    config: &FitConfig,
    sub: &LandmarkSubModel,
    vis: &[f64],
) -> ObjectiveParts {
    let q_raw = [params[0], params[1], params[2], params[3]];
    let n = (q_raw.iter().map(|x| x * x).sum::<f64>()).sqrt();
    let qhat = Quaternion::new(q_raw[0] / n, q_raw[1] / n, q_raw[2] / n, q_raw[3] / n);
    let (tx, ty) = (params[4], params[5]);
    let fs = params[6];
    let s = smoothclip(fs);
    let phi = &params[7..];

    let mut value = 0.0;
    let mut grad = [0.0; N_PARAMS];
    // gradient w.r.t. the normalized quaternion, pulled back at the end
    let mut grad_qhat = [0.0; 4];

    let u = Vector3::new(qhat.x, qhat.y, qhat.z);
    let w = qhat.w;

    let mut rmse_acc = 0.0;
    let mut rmse_n = 0usize;
    for i in 0..LANDMARK_COUNT {
        let weight = config.landmark_weight * problem.confidence[i] * vis[i];
        let v = sub.vertex(i, phi);
        let rotated = qhat.rotate(&v);
        let px = s * rotated.x + tx;
        let py = s * rotated.y + ty;
        let rx = px - problem.landmarks2d[i][0];
        let ry = py - problem.landmarks2d[i][1];

        if problem.confidence[i] > 0.0 {
            rmse_acc += rx * rx + ry * ry;
            rmse_n += 1;
        }
        if weight == 0.0 {
            continue;
        }
        value += weight * (rx * rx + ry * ry);

        let gx = 2.0 * weight * rx;
        let gy = 2.0 * weight * ry;
        grad[4] += gx;
        grad[5] += gy;
        grad[6] += (gx * rotated.x + gy * rotated.y) * smoothclip_deriv(fs);

        // adjoint of the rotation: a = s·(gx, gy, 0)
        let a = Vector3::new(s * gx, s * gy, 0.0);
        // d(R(q)v)/dq pulled back: u part and w part
        let vxa = v.cross(&a);
        let gu = vxa * (2.0 * w) + (v * u.dot(&a) + a * u.dot(&v) - u * (2.0 * v.dot(&a))) * 2.0;
        let gw = 2.0 * u.cross(&v).dot(&a);
        grad_qhat[0] += gu.x;
        grad_qhat[1] += gu.y;
        grad_qhat[2] += gu.z;
        grad_qhat[3] += gw;

        // shape coefficients: rotate the adjoint back once per landmark
        let back = qhat.conjugate().rotate(&a);
        for k in 0..SHAPE_DIM {
            grad[7 + k] += back.dot(&sub.basis[k][i]);
        }
    }
    let landmark_rmse = if rmse_n > 0 {
        (rmse_acc / rmse_n as f64).sqrt()
    } else {
        0.0
    };

    // rotation prior: 1 - |q̂·q_prior|²
    if problem.prior_pose_weight > 0.0 {
        let qp = problem.prior_pose.q;
        let d = qhat.dot(&qp);
        value += problem.prior_pose_weight * (1.0 - d * d);
        let k = -2.0 * d * problem.prior_pose_weight;
        grad_qhat[0] += k * qp.x;
        grad_qhat[1] += k * qp.y;
        grad_qhat[2] += k * qp.z;
        grad_qhat[3] += k * qp.w;
    }

    // mixture NLL on the coefficients
    if config.mixture_weight > 0.0 {
        let (nll, g) = problem.shape_prior.nll_grad(phi);
        value += config.mixture_weight * nll;
        for k in 0..SHAPE_DIM {
            grad[7 + k] += config.mixture_weight * g[k];
        }
    }

    // pull grad_qhat back through the normalization onto the raw 4-vector
    let dot = q_raw
        .iter()
        .zip(&grad_qhat)
        .map(|(q, g)| q / n * g)
        .sum::<f64>();
    for j in 0..4 {
        grad[j] += (grad_qhat[j] - q_raw[j] / n * dot) / n;
    }

    // norm penalty on the raw quaternion
    value += (1.0 - n) * (1.0 - n);
    let k = -2.0 * (1.0 - n) / n;
    for j in 0..4 {
        grad[j] += k * q_raw[j];
    }

    // size positivity barrier: softplus(-k·s)/k
    let ks = BARRIER_SHARPNESS * s;
    value += softplus(-ks) / BARRIER_SHARPNESS;
    grad[6] += -logistic(-ks) * smoothclip_deriv(fs);

    ObjectiveParts {
        value,
        grad,
        landmark_rmse,
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Objective value and gradient at a pose/coefficients point (the gradient
/// lives in the unconstrained parameter space used by [`fit`]).
pub fn fit_objective(
    pose: &Pose,
    coeffs: &ShapeCoeffs,
    problem: &FitProblem,
    config: &FitConfig,
) -> Result<(f64, Vec<f64>)> {
    problem.validate()?;
    let sub = LandmarkSubModel::gather(problem.model);
    let vis = visibility_weights(&problem.prior_pose.q, problem.model);
    let params = pack(pose, coeffs);
    let parts = objective(&params, problem, config, &sub, &vis);
    Ok((parts.value, parts.grad.to_vec()))
}

/// Gradient descent with Armijo backtracking from the given initialization.
///
/// Accepted steps never increase the objective. Converges when the gradient
/// norm drops below `grad_tol` or the line-search step below `step_tol`;
/// exhausting `max_iterations` reports `converged = false` instead of
/// failing.
pub fn fit(
    problem: &FitProblem,
    init_pose: &Pose,
    init_coeffs: &ShapeCoeffs,
    config: &FitConfig,
) -> Result<FitResult> {
    problem.validate()?;
    if init_coeffs.phi.len() != SHAPE_DIM {
        return Err(Error::DimensionMismatch {
            name: "init coefficients",
            expected: SHAPE_DIM,
            got: init_coeffs.phi.len(),
        });
    }
    let sub = LandmarkSubModel::gather(problem.model);
    let vis = visibility_weights(&problem.prior_pose.q, problem.model);

    let mut params = pack(init_pose, init_coeffs);
    let mut parts = objective(&params, problem, config, &sub, &vis);
    let mut alpha = 1.0f64;
    let mut converged = false;
    let mut iterations = 0usize;

    for _ in 0..config.max_iterations {
        iterations += 1;
        let gnorm = parts.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < config.grad_tol {
            converged = true;
            break;
        }

        // backtracking line search along -grad
        let g2 = gnorm * gnorm;
        let mut accepted = false;
        let mut step = alpha;
        while step * gnorm >= config.step_tol {
            let mut cand = params;
            for (c, g) in cand.iter_mut().zip(&parts.grad) {
                *c -= step * g;
            }
            let cand_parts = objective(&cand, problem, config, &sub, &vis);
            if cand_parts.value <= parts.value - config.armijo_c * step * g2 {
                params = cand;
                parts = cand_parts;
                alpha = (step * 2.0).min(1e3);
                accepted = true;
                break;
            }
            step *= config.backtrack;
        }
        if !accepted {
            // step collapsed below the tolerance
            converged = true;
            break;
        }
    }

    let (pose, coeffs) = unpack(&params);
    Ok(FitResult {
        pose,
        coeffs,
        final_objective: parts.value,
        converged,
        iterations,
        landmark_rmse: parts.landmark_rmse,
    })
}

/// Outcome of an EM run.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub mixture: GaussianMixture,
    /// Total log-likelihood after each EM iteration; non-decreasing.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const VARIANCE_FLOOR: f64 = 1e-6;

/// EM fit of a diagonal Gaussian mixture with k-means-style seeding.
pub fn gmm_fit(samples: &[Vec<f64>], components: usize, seed: u64) -> Result<GmmFit> {
    let n = samples.len();
    if components == 0 {
        return Err(Error::EmptyInput("mixture components"));
    }
    if n < components {
        return Err(Error::TooFewSamples {
            need: components,
            got: n,
        });
    }
    let dim = samples[0].len();
    if samples.iter().any(|s| s.len() != dim) {
        return Err(Error::InvalidInput(
            "samples have inconsistent dimensions".to_string(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = kmeans_seed(samples, components, &mut rng);

    // a few k-means refinement passes
    let mut assignment = vec![0usize; n];
    for _ in 0..5 {
        for (i, s) in samples.iter().enumerate() {
            assignment[i] = nearest(s, &means);
        }
        let mut counts = vec![0usize; components];
        let mut sums = vec![vec![0.0; dim]; components];
        for (s, &a) in samples.iter().zip(&assignment) {
            counts[a] += 1;
            for j in 0..dim {
                sums[a][j] += s[j];
            }
        }
        for k in 0..components {
            if counts[k] == 0 {
                // reseed an empty cluster at the sample farthest from its mean
                let far = (0..n)
                    .max_by(|&a, &b| {
                        dist2(&samples[a], &means[assignment[a]])
                            .partial_cmp(&dist2(&samples[b], &means[assignment[b]]))
                            .unwrap()
                    })
                    .unwrap();
                means[k] = samples[far].clone();
            } else {
                for j in 0..dim {
                    means[k][j] = sums[k][j] / counts[k] as f64;
                }
            }
        }
    }

    // initial mixture from the hard assignment
    for (i, s) in samples.iter().enumerate() {
        assignment[i] = nearest(s, &means);
    }
    let mut weights = vec![0.0; components];
    let mut variances = vec![vec![0.0; dim]; components];
    for k in 0..components {
        let members: Vec<&Vec<f64>> = samples
            .iter()
            .zip(&assignment)
            .filter(|(_, a)| **a == k)
            .map(|(s, _)| s)
            .collect();
        weights[k] = (members.len().max(1)) as f64 / n as f64;
        for j in 0..dim {
            let var = if members.is_empty() {
                1.0
            } else {
                members
                    .iter()
                    .map(|s| (s[j] - means[k][j]).powi(2))
                    .sum::<f64>()
                    / members.len() as f64
            };
            variances[k][j] = var.max(VARIANCE_FLOOR);
        }
    }
    let wsum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= wsum;
    }

    let mut mixture = GaussianMixture::new(weights, means.clone(), variances)?;
    let mut log_likelihood = Vec::new();
    let mut converged = false;
    let max_iters = 200;
    let mut iterations = 0;

    for _ in 0..max_iters {
        iterations += 1;
        // E-step in log space
        let mut resp = vec![vec![0.0; components]; n];
        let mut ll = 0.0;
        for (i, s) in samples.iter().enumerate() {
            let logs = mixture.component_logs(s);
            let lse = log_sum_exp(&logs);
            ll += lse;
            for k in 0..components {
                resp[i][k] = (logs[k] - lse).exp();
            }
        }
        log_likelihood.push(ll);

        // M-step
        let mut weights = vec![0.0; components];
        let mut new_means = vec![vec![0.0; dim]; components];
        let mut new_vars = vec![vec![0.0; dim]; components];
        for k in 0..components {
            let nk: f64 = (0..n).map(|i| resp[i][k]).sum();
            let nk_safe = nk.max(1e-12);
            weights[k] = nk / n as f64;
            for j in 0..dim {
                new_means[k][j] =
                    (0..n).map(|i| resp[i][k] * samples[i][j]).sum::<f64>() / nk_safe;
            }
            for j in 0..dim {
                let var = (0..n)
                    .map(|i| resp[i][k] * (samples[i][j] - new_means[k][j]).powi(2))
                    .sum::<f64>()
                    / nk_safe;
                new_vars[k][j] = var.max(VARIANCE_FLOOR);
            }
        }
        let wsum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= wsum;
        }
        mixture = GaussianMixture::new(weights, new_means, new_vars)?;
        means = mixture.means.clone();

        if log_likelihood.len() >= 2 {
            let prev = log_likelihood[log_likelihood.len() - 2];
            let cur = *log_likelihood.last().unwrap();
            if (cur - prev).abs() < 1e-8 * (1.0 + cur.abs()) {
                converged = true;
                break;
            }
        }
    }
    let _ = means;

    Ok(GmmFit {
        mixture,
        log_likelihood,
        iterations,
        converged,
    })
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(s: &[f64], means: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, m) in means.iter().enumerate() {
        let d = dist2(s, m);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// k-means++ style seeding.
fn kmeans_seed(samples: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = samples.len();
    let mut means = Vec::with_capacity(k);
    means.push(samples[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = samples.iter().map(|s| dist2(s, &means[0])).collect();
    while means.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut target = rng.random_range(0.0..total);
            let mut idx = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        };
        means.push(samples[next].clone());
        for (i, s) in samples.iter().enumerate() {
            d2[i] = d2[i].min(dist2(s, means.last().unwrap()));
        }
    }
    means
}
