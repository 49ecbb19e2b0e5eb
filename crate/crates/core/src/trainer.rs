//! Desk-scale end-to-end exercise of the loss stack: a linear prediction
//! head trained with adaptive-moment updates on synthetic tasks.
//!
//! The head maps input feature vectors to the 73 raw outputs consumed by the
//! geometry mappings (4 quaternion + 3 position/size + 50 shape + 4 box +
//! 6 + 6 covariance features). Auxiliary input-independent variance
//! parameters train alongside. Gradients come from the audited analytic
//! gradients of the losses module; there is no separate backprop path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{exp_map, Quaternion, RotationVector};
use crate::losses::grad::{bbox_from_features, total_loss_grad, SampleGradient};
use crate::losses::{
    AuxParams, LabelMask, LandmarkWeights, LossWeights, PosSize, SampleFeatures, SampleLabels,
    LANDMARK_COUNT, SHAPE_DIM,
};

/// Dimension of the raw prediction-feature vector.
pub const FEATURE_DIM: usize = 4 + 3 + SHAPE_DIM + 4 + 6 + 6;
/// Input dimension of the synthetic tasks.
pub const INPUT_DIM: usize = 16;

/// Anything that maps an input feature vector to raw prediction features.
pub trait Predictor {
    fn predict(&self, input: &[f64]) -> SampleFeatures;
}

/// Linear prediction head: `features = W·x + b` plus trainable auxiliary
/// variance parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub in_dim: usize,
    /// Row-major `FEATURE_DIM × in_dim`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub aux: AuxParams,
}

impl LinearHead {
    pub fn zeros(in_dim: usize) -> Self {
        LinearHead {
            in_dim,
            weight: vec![0.0; FEATURE_DIM * in_dim],
            bias: vec![0.0; FEATURE_DIM],
            aux: AuxParams::standard(),
        }
    }

    pub fn random(in_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut head = LinearHead::zeros(in_dim);
        for w in &mut head.weight {
            *w = rng.random_range(-0.1..0.1);
        }
        // start the covariance factors at a moderate positive scale so the
        // NLL terms see a sane variance from the first step
        for r in [61, 63, 66, 67, 69, 72] {
            head.bias[r] = 0.3;
        }
        head
    }

    /// Raw output vector `W·x + b`.
    pub fn raw_outputs(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.in_dim);
        let mut out = self.bias.clone();
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.weight[r * self.in_dim..(r + 1) * self.in_dim];
            *o += row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        }
        out
    }

    /// JSON value with dimensions and row-major parameters.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "in_dim": self.in_dim,
            "out_dim": FEATURE_DIM,
            "weight": self.weight,
            "bias": self.bias,
            "shape_sigma": self.aux.shape_sigma.to_vec(),
            "bbox_sigma": self.aux.bbox_sigma.to_vec(),
            "landmark_scale": self.aux.landmark_scale.iter().flatten().copied().collect::<Vec<f64>>(),
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let get = |name: &str| -> Result<Vec<f64>> {
            serde_json::from_value(value[name].clone()).map_err(|e| Error::InvalidField {
                field: name.to_string(),
                reason: e.to_string(),
            })
        };
        let in_dim = value["in_dim"].as_u64().ok_or_else(|| Error::InvalidField {
            field: "in_dim".to_string(),
            reason: "missing".to_string(),
        })? as usize;
        let weight = get("weight")?;
        let bias = get("bias")?;
        let shape_sigma = get("shape_sigma")?;
        let bbox_sigma = get("bbox_sigma")?;
        let lm = get("landmark_scale")?;
        if weight.len() != FEATURE_DIM * in_dim
            || bias.len() != FEATURE_DIM
            || shape_sigma.len() != SHAPE_DIM
            || bbox_sigma.len() != 4
            || lm.len() != 3 * LANDMARK_COUNT
        {
            return Err(Error::InvalidInput("head parameter sizes are inconsistent".to_string()));
        }
        let mut aux = AuxParams::standard();
        aux.shape_sigma.copy_from_slice(&shape_sigma);
        aux.bbox_sigma.copy_from_slice(&bbox_sigma);
        for (i, chunk) in lm.chunks_exact(3).enumerate() {
            aux.landmark_scale[i] = [chunk[0], chunk[1], chunk[2]];
        }
        Ok(LinearHead {
            in_dim,
            weight,
            bias,
            aux,
        })
    }
}

/// Splits raw head outputs into the feature groups.
pub fn features_from_raw(raw: &[f64]) -> SampleFeatures {
    assert_eq!(raw.len(), FEATURE_DIM);
    let mut f = SampleFeatures::zeros();
    f.quat.copy_from_slice(&raw[0..4]);
    f.pos_size.copy_from_slice(&raw[4..7]);
    f.shape.copy_from_slice(&raw[7..7 + SHAPE_DIM]);
    f.bbox.copy_from_slice(&raw[57..61]);
    f.rot_cov.copy_from_slice(&raw[61..67]);
    f.pos_cov.copy_from_slice(&raw[67..73]);
    f
}

fn raw_from_gradient(g: &SampleGradient) -> [f64; FEATURE_DIM] {
    let mut out = [0.0; FEATURE_DIM];
    out[0..4].copy_from_slice(&g.quat);
    out[4..7].copy_from_slice(&g.pos_size);
    out[7..57].copy_from_slice(&g.shape);
    out[57..61].copy_from_slice(&g.bbox);
    out[61..67].copy_from_slice(&g.rot_cov);
    out[67..73].copy_from_slice(&g.pos_cov);
    out
}

impl Predictor for LinearHead {
    fn predict(&self, input: &[f64]) -> SampleFeatures {
        features_from_raw(&self.raw_outputs(input))
    }
}

/// Noise configuration of a synthetic task.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TaskNoise {
    /// Range of the per-sample rotation jitter sd in radians; (0, 0) = off.
    pub rotation_sd: (f64, f64),
    /// Isotropic position noise sd; 0 = off.
    pub position_sd: f64,
}

impl TaskNoise {
    pub fn none() -> Self {
        TaskNoise {
            rotation_sd: (0.0, 0.0),
            position_sd: 0.0,
        }
    }

    /// Heavy input-dependent rotation jitter (9° to 34° tangent sd), the
    /// scale of noisy pseudo-labels.
    pub fn heteroscedastic() -> Self {
        TaskNoise {
            rotation_sd: (0.15, 0.6),
            position_sd: 0.05,
        }
    }
}

/// Synthetic regression task with known generating parameters.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<SampleLabels>,
    /// Per-sample rotation jitter sd actually used.
    pub planted_rotation_sd: Vec<f64>,
    /// The drawn tangent-space jitter vectors.
    pub planted_jitter: Vec<[f64; 3]>,
    /// Noiseless generating head.
    pub truth: LinearHead,
}

/// Deterministic synthetic dataset: inputs drawn from a standard normal,
/// labels produced by a hidden linear map through the geometry mappings,
/// plus the configured noise.
pub fn make_synthetic_task(seed: u64, n: usize, noise: &TaskNoise) -> SyntheticTask {
    assert!(n >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();

    let mut truth = LinearHead::zeros(INPUT_DIM);
    let w_sd = 1.0 / (INPUT_DIM as f64).sqrt();
    for w in &mut truth.weight {
        *w = normal.sample(&mut rng) * w_sd;
    }
    for b in &mut truth.bias {
        *b = normal.sample(&mut rng) * 0.2;
    }
    // direction controlling the heteroscedastic noise level
    let noise_dir: Vec<f64> = (0..INPUT_DIM)
        .map(|_| normal.sample(&mut rng) * w_sd)
        .collect();

    let mask = LabelMask {
        rotation: true,
        pos_size: true,
        shape: true,
        landmarks3d: false,
        landmarks2d: false,
        bbox: true,
    };

    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut planted_sd = Vec::with_capacity(n);
    let mut planted_jitter = Vec::with_capacity(n);
    let (sd_lo, sd_hi) = noise.rotation_sd;

    for _ in 0..n {
        let x: Vec<f64> = (0..INPUT_DIM).map(|_| normal.sample(&mut rng)).collect();
        let raw = truth.raw_outputs(&x);
        let clean = features_from_raw(&raw);

        let q_clean = Quaternion::from_features(
            clean.quat[0],
            clean.quat[1],
            clean.quat[2],
            clean.quat[3],
        );
        let t: f64 = noise_dir.iter().zip(&x).map(|(d, xi)| d * xi).sum();
        let sd = if sd_hi > 0.0 {
            sd_lo + (sd_hi - sd_lo) / (1.0 + (-2.0 * t).exp())
        } else {
            0.0
        };
        let jitter = if sd > 0.0 {
            [
                normal.sample(&mut rng) * sd,
                normal.sample(&mut rng) * sd,
                normal.sample(&mut rng) * sd,
            ]
        } else {
            [0.0; 3]
        };
        let q_label = exp_map(&RotationVector::new(jitter[0], jitter[1], jitter[2]))
            .mul(&q_clean)
            .canonical();

        let mut p = PosSize::from_features(&clean.pos_size);
        if noise.position_sd > 0.0 {
            p.x += normal.sample(&mut rng) * noise.position_sd;
            p.y += normal.sample(&mut rng) * noise.position_sd;
        }

        labels.push(SampleLabels {
            mask,
            quat: Some(q_label),
            pos_size: Some(p),
            shape: Some(clean.shape.to_vec()),
            landmarks: None,
            bbox: Some(bbox_from_features(&clean.bbox)),
        });
        inputs.push(x);
        planted_sd.push(sd);
        planted_jitter.push(jitter);
    }

    SyntheticTask {
        inputs,
        labels,
        planted_rotation_sd: planted_sd,
        planted_jitter,
        truth,
    }
}

/// Optimizer selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Momentum,
}

/// Training schedule and options.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub total_samples: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    /// Fraction of samples spent ramping the learning rate up.
    pub warmup_frac: f64,
    /// Fraction of samples after which the rate steps down.
    pub decay_at_frac: f64,
    pub decay_factor: f64,
    /// Fraction of samples after which iterate averaging starts.
    pub swa_start_frac: f64,
    pub seed: u64,
    /// Disables the NLL terms (β_total = 0) when false.
    pub nll_enabled: bool,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_samples: 200_000,
            batch_size: 64,
            peak_lr: 1e-3,
            warmup_frac: 1.0 / 20.0,
            decay_at_frac: 0.5,
            decay_factor: 0.1,
            swa_start_frac: 2.0 / 3.0,
            seed: 0,
            nll_enabled: true,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_samples == 0 || self.batch_size == 0 {
            return Err(Error::InvalidInput("counts must be positive".to_string()));
        }
        for (name, f) in [
            ("warmup_frac", self.warmup_frac),
            ("decay_at_frac", self.decay_at_frac),
            ("swa_start_frac", self.swa_start_frac),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidField {
                    field: name.to_string(),
                    reason: format!("must lie in (0, 1), got {f}"),
                });
            }
        }
        if self.peak_lr.is_nan()
            || self.peak_lr <= 0.0
            || self.decay_factor.is_nan()
            || self.decay_factor <= 0.0
        {
            return Err(Error::InvalidInput("rates must be positive".to_string()));
        }
        Ok(())
    }

    /// Loss weights with the NLL block optionally disabled.
    pub fn loss_weights(&self) -> LossWeights {
        let mut w = LossWeights::default();
        if !self.nll_enabled {
            w.beta_total = 0.0;
        }
        w
    }
}

/// Trained heads plus the per-step loss trace.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Iterate-averaged head (equal to `last` when averaging never started).
    pub head: LinearHead,
    /// Final iterate.
    pub last: LinearHead,
    pub trace: Vec<f64>,
}

const DIVERGENCE_LIMIT: f64 = 1e6;

/// Flat parameter layout: weight | bias | shape_sigma | bbox_sigma |
/// landmark_scale.
fn flatten(head: &LinearHead) -> Vec<f64> {
    let mut p = Vec::with_capacity(head.weight.len() + FEATURE_DIM + SHAPE_DIM + 4 + 204);
    p.extend_from_slice(&head.weight);
    p.extend_from_slice(&head.bias);
    p.extend_from_slice(&head.aux.shape_sigma);
    p.extend_from_slice(&head.aux.bbox_sigma);
    p.extend(head.aux.landmark_scale.iter().flatten());
    p
}

fn unflatten(p: &[f64], in_dim: usize) -> LinearHead {
    let nw = FEATURE_DIM * in_dim;
    let mut head = LinearHead::zeros(in_dim);
    head.weight.copy_from_slice(&p[..nw]);
    head.bias.copy_from_slice(&p[nw..nw + FEATURE_DIM]);
    let mut o = nw + FEATURE_DIM;
    head.aux.shape_sigma.copy_from_slice(&p[o..o + SHAPE_DIM]);
    o += SHAPE_DIM;
    head.aux.bbox_sigma.copy_from_slice(&p[o..o + 4]);
    o += 4;
    for i in 0..LANDMARK_COUNT {
        head.aux.landmark_scale[i] = [p[o + 3 * i], p[o + 3 * i + 1], p[o + 3 * i + 2]];
    }
    head
}

/// Trains the head on the task with the configured schedule.
///
/// Per step: a with-replacement batch, forward through the head, the audited
/// loss gradients, and one optimizer update. Aborts with a diagnostic when
/// the batch loss exceeds 1e6.
pub fn train(head: &LinearHead, task: &SyntheticTask, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if task.inputs.is_empty() {
        return Err(Error::EmptyInput("training task"));
    }
    assert_eq!(head.in_dim, task.inputs[0].len());

    let weights = config.loss_weights();
    let lw = LandmarkWeights::default();
    let steps = (config.total_samples / config.batch_size).max(1);
    let warmup_steps = ((steps as f64 * config.warmup_frac).ceil() as usize).max(1);
    let decay_step = (steps as f64 * config.decay_at_frac).floor() as usize;
    let swa_start = (steps as f64 * config.swa_start_frac).floor() as usize;

    let mut params = flatten(head);
    let dim = params.len();
    let in_dim = head.in_dim;
    let nw = FEATURE_DIM * in_dim;

    // optimizer state
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let (beta1, beta2, adam_eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);

    let mut swa_sum = vec![0.0; dim];
    let mut swa_count = 0usize;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = Vec::with_capacity(steps);

    let mut batch_features: Vec<SampleFeatures> = Vec::with_capacity(config.batch_size);
    let mut batch_labels: Vec<SampleLabels> = Vec::with_capacity(config.batch_size);
    let mut batch_inputs: Vec<usize> = Vec::with_capacity(config.batch_size);

    for step in 0..steps {
        let cur = unflatten(&params, in_dim);
        batch_features.clear();
        batch_labels.clear();
        batch_inputs.clear();
        for _ in 0..config.batch_size {
            let i = rng.random_range(0..task.inputs.len());
            batch_inputs.push(i);
            batch_features.push(cur.predict(&task.inputs[i]));
            batch_labels.push(task.labels[i].clone());
        }

        let out = total_loss_grad(&batch_features, &batch_labels, &cur.aux, &lw, &weights)?;
        if !out.value.is_finite() || out.value > DIVERGENCE_LIMIT {
            return Err(Error::Diverged {
                step,
                loss: out.value,
            });
        }
        trace.push(out.value);

        // accumulate the flat gradient (per-sample gradients are already
        // divided by the batch size)
        let mut grad = vec![0.0; dim];
        for (g, &i) in out.sample_gradients.iter().zip(&batch_inputs) {
            let raw = raw_from_gradient(g);
            let x = &task.inputs[i];
            for r in 0..FEATURE_DIM {
                if raw[r] == 0.0 {
                    continue;
                }
                let row = &mut grad[r * in_dim..(r + 1) * in_dim];
                for (gw, xi) in row.iter_mut().zip(x) {
                    *gw += raw[r] * xi;
                }
                grad[nw + r] += raw[r];
            }
        }
        let mut o = nw + FEATURE_DIM;
        for (j, g) in out.aux_gradient.shape_sigma.iter().enumerate() {
            grad[o + j] += g;
        }
        o += SHAPE_DIM;
        for (j, g) in out.aux_gradient.bbox_sigma.iter().enumerate() {
            grad[o + j] += g;
        }
        o += 4;
        for (i, p3) in out.aux_gradient.landmark_scale.iter().enumerate() {
            for (c, g) in p3.iter().enumerate() {
                grad[o + 3 * i + c] += g;
            }
        }

        // schedule: linear warmup, then a step decay
        let mut lr = config.peak_lr * ((step + 1) as f64 / warmup_steps as f64).min(1.0);
        if step >= decay_step {
            lr *= config.decay_factor;
        }

        match config.optimizer {
            OptimizerKind::Adam => {
                let t = (step + 1) as f64;
                let bc1 = 1.0 - beta1.powf(t);
                let bc2 = 1.0 - beta2.powf(t);
                for j in 0..dim {
                    m[j] = beta1 * m[j] + (1.0 - beta1) * grad[j];
                    v[j] = beta2 * v[j] + (1.0 - beta2) * grad[j] * grad[j];
                    let mhat = m[j] / bc1;
                    let vhat = v[j] / bc2;
                    params[j] -= lr * mhat / (vhat.sqrt() + adam_eps);
                }
            }
            OptimizerKind::Momentum => {
                for j in 0..dim {
                    m[j] = 0.9 * m[j] + grad[j];
                    params[j] -= lr * m[j];
                }
            }
        }

        if step >= swa_start {
            for j in 0..dim {
                swa_sum[j] += params[j];
            }
            swa_count += 1;
        }
    }

    let last = unflatten(&params, in_dim);
    let head = if swa_count > 0 {
        let avg: Vec<f64> = swa_sum.iter().map(|s| s / swa_count as f64).collect();
        unflatten(&avg, in_dim)
    } else {
        last.clone()
    };

    Ok(TrainOutcome { head, last, trace })
}

/// Mean total loss of a head over an index range of the task.
pub fn evaluate_loss(
    head: &LinearHead,
    task: &SyntheticTask,
    range: std::ops::Range<usize>,
    weights: &LossWeights,
) -> Result<f64> {
    let lw = LandmarkWeights::default();
    let features: Vec<SampleFeatures> = task.inputs[range.clone()]
        .iter()
        .map(|x| head.predict(x))
        .collect();
    let labels = task.labels[range].to_vec();
    crate::losses::total_loss(&features, &labels, &head.aux, &lw, weights)
}
