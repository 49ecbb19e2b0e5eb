//! Deterministic augmentation pipeline: stochastic square-ROI/affine crop
//! geometry with consistent label transformation, intensity operations, and
//! calibrated Gaussian noise.
//!
//! All randomness flows through [`SeededRng`], which derives an independent
//! ChaCha stream per sample index, so batches augment identically regardless
//! of processing order.
//!
//! Geometric fields of the input record (position, landmarks, bounding box)
//! are expected in source-image pixel coordinates; transformed labels come
//! out in crop pixel coordinates. [`normalize_record_to_crop`] converts a
//! crop-frame record to the [-1, 1] convention used by the prediction head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::SampleRecord;
use crate::error::{Error, Result};
use crate::geometry::{Box2, Quaternion};

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                name: "image data",
                expected: width * height,
                got: data.len(),
            });
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayImage {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixels(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Pixel value with edge-clamped coordinates.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> u8 {
        let cx = x.clamp(0, self.width as i64 - 1) as usize;
        let cy = y.clamp(0, self.height as i64 - 1) as usize;
        self.data[cy * self.width + cx]
    }
}

/// 2×3 affine map from source pixel coordinates to crop coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine2D {
    m: [[f64; 3]; 2],
}

impl Affine2D {
    pub fn new(m: [[f64; 3]; 2]) -> Result<Self> {
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.abs() <= 1e-9 {
            return Err(Error::InvalidInput(format!(
                "affine transform is not invertible (det = {det:.3e})"
            )));
        }
        Ok(Affine2D { m })
    }

    pub fn identity() -> Self {
        Affine2D {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        }
    }

    pub fn matrix(&self) -> &[[f64; 3]; 2] {
        &self.m
    }

    #[inline]
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.m[0][0] * p[0] + self.m[0][1] * p[1] + self.m[0][2],
            self.m[1][0] * p[0] + self.m[1][1] * p[1] + self.m[1][2],
        ]
    }

    /// Determinant of the 2×2 linear part.
    #[inline]
    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// `self ∘ inner`: applies `inner` first.
    pub fn compose(&self, inner: &Affine2D) -> Affine2D {
        let a = &self.m;
        let b = &inner.m;
        Affine2D {
            m: [
                [
                    a[0][0] * b[0][0] + a[0][1] * b[1][0],
                    a[0][0] * b[0][1] + a[0][1] * b[1][1],
                    a[0][0] * b[0][2] + a[0][1] * b[1][2] + a[0][2],
                ],
                [
                    a[1][0] * b[0][0] + a[1][1] * b[1][0],
                    a[1][0] * b[0][1] + a[1][1] * b[1][1],
                    a[1][0] * b[0][2] + a[1][1] * b[1][2] + a[1][2],
                ],
            ],
        }
    }

    pub fn inverse(&self) -> Affine2D {
        let det = self.det();
        let [a, b, c] = self.m[0];
        let [d, e, f] = self.m[1];
        let (ia, ib) = (e / det, -b / det);
        let (id, ie) = (-d / det, a / det);
        Affine2D {
            m: [
                [ia, ib, -(ia * c + ib * f)],
                [id, ie, -(id * c + ie * f)],
            ],
        }
    }

    /// Isotropic scale factor of a similarity transform.
    #[inline]
    pub fn isotropic_scale(&self) -> f64 {
        self.det().abs().sqrt()
    }
}

/// Crop-space horizontal mirror: `x -> (size - 1) - x`.
pub fn mirror_affine(out_size: usize) -> Affine2D {
    Affine2D {
        m: [[-1.0, 0.0, (out_size - 1) as f64], [0.0, 1.0, 0.0]],
    }
}

/// Augmentation configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AugmentConfig {
    pub scale_mean: f64,
    pub scale_sd: f64,
    pub scale_clip: (f64, f64),
    pub rotation_limit_deg: f64,
    pub min_visible_fraction: f64,
    pub offset_sd_fraction: f64,
    pub mirror_prob: f64,
    pub quarter_turn_prob: f64,
    pub intensity_op_prob: f64,
    /// Gaussian pixel-noise stages as (probability, sigma) pairs.
    pub noise_stages: Vec<(f64, f64)>,
    pub out_size: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            scale_mean: 1.1,
            scale_sd: 0.1,
            scale_clip: (0.6, 1.6),
            rotation_limit_deg: 30.0,
            min_visible_fraction: 0.7,
            offset_sd_fraction: 0.1,
            mirror_prob: 0.5,
            quarter_turn_prob: 0.01,
            intensity_op_prob: 0.1,
            noise_stages: vec![(0.5, 4.0), (0.1, 16.0)],
            out_size: 129,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("mirror_prob", self.mirror_prob),
            ("quarter_turn_prob", self.quarter_turn_prob),
            ("intensity_op_prob", self.intensity_op_prob),
            ("min_visible_fraction", self.min_visible_fraction),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidField {
                    field: name.to_string(),
                    reason: format!("probability must lie in [0, 1], got {p}"),
                });
            }
        }
        for (i, (p, sd)) in self.noise_stages.iter().enumerate() {
            if !(0.0..=1.0).contains(p) || *sd < 0.0 {
                return Err(Error::InvalidField {
                    field: format!("noise_stages[{i}]"),
                    reason: format!("got probability {p}, sigma {sd}"),
                });
            }
        }
        if self.scale_sd < 0.0
            || self.scale_clip.0 <= 0.0
            || self.scale_clip.0 > self.scale_clip.1
            || self.rotation_limit_deg < 0.0
            || self.offset_sd_fraction < 0.0
            || self.out_size < 2
        {
            return Err(Error::InvalidInput(
                "augment config limits must be positive and ordered".to_string(),
            ));
        }
        Ok(())
    }
}

/// Seed wrapper deriving one independent deterministic stream per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SeededRng {
    pub seed: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng { seed }
    }

    /// Stream for one sample index; identical (seed, index) pairs yield
    /// identical draw sequences.
    pub fn for_sample(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

fn draw_normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        mean
    } else {
        Normal::new(mean, sd).expect("finite sd").sample(rng)
    }
}

/// One sampled geometric augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricDraw {
    /// Complete source-to-crop map, including quarter turn and mirror.
    pub affine: Affine2D,
    pub mirror: bool,
    pub quarter_turn: bool,
    /// Drawn (possibly feasibility-bumped) scale factor.
    pub scale: f64,
    /// Total in-plane rotation in radians (with the quarter turn).
    pub rotation: f64,
    /// ROI square corners in source coordinates.
    pub roi: [[f64; 2]; 4],
}

fn roi_polygon(center: [f64; 2], side: f64, angle: f64) -> [[f64; 2]; 4] {
    let (s, c) = angle.sin_cos();
    let h = 0.5 * side;
    let rot = |p: [f64; 2]| [center[0] + c * p[0] - s * p[1], center[1] + s * p[0] + c * p[1]];
    [
        rot([-h, -h]),
        rot([h, -h]),
        rot([h, h]),
        rot([-h, h]),
    ]
}

/// Shoelace area of a simple polygon.
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * acc.abs()
}

/// Sutherland-Hodgman clip of a polygon by the half-plane left of a->b.
fn clip_halfplane(poly: &[[f64; 2]], a: [f64; 2], b: [f64; 2]) -> Vec<[f64; 2]> {
    let side = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let cur = poly[i];
        let nxt = poly[(i + 1) % poly.len()];
        let sc = side(cur);
        let sn = side(nxt);
        if sc >= 0.0 {
            out.push(cur);
        }
        if (sc > 0.0 && sn < 0.0) || (sc < 0.0 && sn > 0.0) {
            let t = sc / (sc - sn);
            out.push([
                cur[0] + t * (nxt[0] - cur[0]),
                cur[1] + t * (nxt[1] - cur[1]),
            ]);
        }
    }
    out
}

/// Clips `subject` by a convex counter-clockwise polygon.
pub fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut poly = subject.to_vec();
    for i in 0..clip.len() {
        if poly.is_empty() {
            break;
        }
        poly = clip_halfplane(&poly, clip[i], clip[(i + 1) % clip.len()]);
    }
    poly
}

/// Fraction of the box area that lies inside the ROI polygon.
pub fn visibility_fraction(bb: &Box2, roi: &[[f64; 2]; 4]) -> f64 {
    let bb_poly = bb.corner_points();
    let inter = clip_convex(&bb_poly, roi);
    polygon_area(&inter) / bb.area()
}

/// Draws the geometric augmentation for one sample.
///
/// The square ROI extends the shortest side of the box, gets scaled by a
/// clipped Gaussian factor, rotated uniformly within the limit (plus an
/// occasional quarter turn), and offset by a Gaussian that is projected back
/// until at least `min_visible_fraction` of the box stays inside the ROI.
/// If even the centered ROI violates the constraint (small scale draws on
/// elongated boxes), the scale is bumped to the smallest feasible value.
pub fn sample_geometric(rng: &mut ChaCha8Rng, bb: &Box2, cfg: &AugmentConfig) -> GeometricDraw {
    assert!(bb.w > 0.0 && bb.h > 0.0, "bounding box must have positive area");
    let base_side = bb.w.max(bb.h);
    let center0 = [bb.cx, bb.cy];

    let mut scale = draw_normal(rng, cfg.scale_mean, cfg.scale_sd)
        .clamp(cfg.scale_clip.0, cfg.scale_clip.1);
    let limit = cfg.rotation_limit_deg.to_radians();
    let mut angle = if limit > 0.0 {
        rng.random_range(-limit..limit)
    } else {
        0.0
    };
    let quarter_turn = cfg.quarter_turn_prob > 0.0 && rng.random_bool(cfg.quarter_turn_prob);
    if quarter_turn {
        angle += std::f64::consts::FRAC_PI_2;
    }
    let mirror = cfg.mirror_prob > 0.0 && rng.random_bool(cfg.mirror_prob);

    let vis_at = |scale: f64, offset: [f64; 2]| {
        let roi = roi_polygon(
            [center0[0] + offset[0], center0[1] + offset[1]],
            base_side * scale,
            angle,
        );
        visibility_fraction(bb, &roi)
    };

    // centered feasibility: grow the scale if the draw cannot satisfy the
    // visibility constraint at any offset
    if vis_at(scale, [0.0, 0.0]) < cfg.min_visible_fraction {
        let mut lo = scale;
        let mut hi = (bb.w + bb.h) / base_side; // covers the box entirely
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if vis_at(mid, [0.0, 0.0]) >= cfg.min_visible_fraction {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        scale = hi;
    }

    let side = base_side * scale;
    let sd = cfg.offset_sd_fraction * side;
    let mut offset = [draw_normal(rng, 0.0, sd), draw_normal(rng, 0.0, sd)];
    if vis_at(scale, offset) < cfg.min_visible_fraction {
        // project back toward the feasible center along the draw direction
        let mut lo = 0.0f64; // feasible end
        let mut hi = 1.0f64; // infeasible end
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            let cand = [offset[0] * mid, offset[1] * mid];
            if vis_at(scale, cand) >= cfg.min_visible_fraction {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        offset = [offset[0] * lo, offset[1] * lo];
    }

    let center = [center0[0] + offset[0], center0[1] + offset[1]];
    let roi = roi_polygon(center, side, angle);

    // source -> crop: undo rotation, scale to pixels, recenter
    let out = cfg.out_size as f64;
    let k = side / out;
    let half = 0.5 * (out - 1.0);
    let (s, c) = angle.sin_cos();
    let (ia, ib) = (c / k, s / k);
    let (id, ie) = (-s / k, c / k);
    let mut affine = Affine2D {
        m: [
            [ia, ib, half - ia * center[0] - ib * center[1]],
            [id, ie, half - id * center[0] - ie * center[1]],
        ],
    };
    if mirror {
        affine = mirror_affine(cfg.out_size).compose(&affine);
    }

    GeometricDraw {
        affine,
        mirror,
        quarter_turn,
        scale,
        rotation: angle,
        roi,
    }
}

/// Resamples the image through the inverse affine with bilinear filtering;
/// reads outside the source clamp to the edge.
pub fn warp_image(img: &GrayImage, t: &Affine2D, out_size: usize) -> GrayImage {
    let inv = t.inverse();
    GrayImage::from_fn(out_size, out_size, |u, v| {
        let src = inv.apply([u as f64, v as f64]);
        bilinear(img, src[0], src[1])
    })
}

fn bilinear(img: &GrayImage, x: f64, y: f64) -> u8 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (ix, iy) = (x0 as i64, y0 as i64);
    let p00 = img.get_clamped(ix, iy) as f64;
    let p10 = img.get_clamped(ix + 1, iy) as f64;
    let p01 = img.get_clamped(ix, iy + 1) as f64;
    let p11 = img.get_clamped(ix + 1, iy + 1) as f64;
    let top = p00 + fx * (p10 - p00);
    let bottom = p01 + fx * (p11 - p01);
    (top + fy * (bottom - top)).round().clamp(0.0, 255.0) as u8
}

/// Horizontal-mirror permutation of the 68-point markup: entry `k` is the
/// landmark whose reflected position plays role `k` in the mirrored image.
pub const LANDMARK_MIRROR_TABLE: [usize; 68] = [
    16, 15, 14, 13, 12, 11, 10, 9, 8, 7, 6, 5, 4, 3, 2, 1, 0, // jaw
    26, 25, 24, 23, 22, 21, 20, 19, 18, 17, // brows
    27, 28, 29, 30, // nose bridge
    35, 34, 33, 32, 31, // nostrils
    45, 44, 43, 42, 47, 46, // right eye <-> left eye
    39, 38, 37, 36, 41, 40, //
    54, 53, 52, 51, 50, 49, 48, 59, 58, 57, 56, 55, // outer mouth
    64, 63, 62, 61, 60, 67, 66, 65, // inner mouth
];

/// Consistently transforms all geometric labels of a record through a draw.
///
/// Points map through the affine; the size scales by the isotropic scale;
/// the quaternion is composed with the in-plane rotation about the view axis
/// and, under mirroring, conjugated as `(x, y, z, w) -> (x, -y, -z, w)` with
/// the landmark order permuted by [`LANDMARK_MIRROR_TABLE`]. The box is
/// re-derived from its transformed corner points.
pub fn transform_labels(record: &SampleRecord, draw: &GeometricDraw) -> Result<SampleRecord> {
    let t = &draw.affine;
    debug_assert_eq!(t.det() < 0.0, draw.mirror, "mirror flag must match det sign");

    // similarity parts of the non-mirrored map
    let lin = if draw.mirror {
        // peel the crop-space mirror off the linear part; its translation
        // component does not matter for scale/rotation extraction
        [
            [-t.m[0][0], -t.m[0][1]],
            [t.m[1][0], t.m[1][1]],
        ]
    } else {
        [
            [t.m[0][0], t.m[0][1]],
            [t.m[1][0], t.m[1][1]],
        ]
    };
    let s_t = (lin[0][0] * lin[1][1] - lin[0][1] * lin[1][0]).abs().sqrt();
    let psi = lin[1][0].atan2(lin[0][0]);

    let mut out = record.clone();

    if let Some(q) = &record.quat {
        let qz = Quaternion::from_axis_angle(nalgebra::Vector3::z(), psi);
        let mut qn = qz.mul(q);
        if draw.mirror {
            qn = Quaternion::new(qn.x, -qn.y, -qn.z, qn.w);
        }
        out.quat = Some(qn.canonical());
    }

    if let Some(p) = &record.pos {
        out.pos = Some(t.apply(*p));
    }
    if let Some(s) = record.size {
        out.size = Some(s * s_t);
    }

    if let Some(lms) = &record.landmarks {
        let mut mapped = Vec::with_capacity(lms.len());
        for k in 0..lms.len() {
            let src = if draw.mirror {
                &lms[LANDMARK_MIRROR_TABLE[k]]
            } else {
                &lms[k]
            };
            let xy = t.apply([src[0], src[1]]);
            let mut point = vec![xy[0], xy[1]];
            if src.len() > 2 {
                point.push(src[2] * s_t);
            }
            mapped.push(point);
        }
        out.landmarks = Some(mapped);
    }

    if let Some(conf) = &record.landmark_confidence {
        if draw.mirror {
            out.landmark_confidence =
                Some((0..conf.len()).map(|k| conf[LANDMARK_MIRROR_TABLE[k]]).collect());
        }
    }

    if let Some(bb) = &record.bbox {
        let pts = bb.corner_points().map(|p| t.apply(p));
        let x0 = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let x1 = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        let y0 = pts.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        let y1 = pts.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
        out.bbox = Some(Box2::from_corners(x0, y0, x1, y1));
    }

    Ok(out)
}

/// Rescales a crop-pixel-frame record to the [-1, 1] normalized convention.
pub fn normalize_record_to_crop(record: &SampleRecord, out_size: usize) -> SampleRecord {
    let half = 0.5 * (out_size - 1) as f64;
    let map = |p: [f64; 2]| [(p[0] - half) / half, (p[1] - half) / half];
    let k = 1.0 / half;

    let mut out = record.clone();
    if let Some(p) = &record.pos {
        out.pos = Some(map(*p));
    }
    if let Some(s) = record.size {
        out.size = Some(s * k);
    }
    if let Some(lms) = &record.landmarks {
        out.landmarks = Some(
            lms.iter()
                .map(|p| {
                    let xy = map([p[0], p[1]]);
                    let mut v = vec![xy[0], xy[1]];
                    if p.len() > 2 {
                        v.push(p[2] * k);
                    }
                    v
                })
                .collect(),
        );
    }
    if let Some(bb) = &record.bbox {
        let c = map([bb.cx, bb.cy]);
        out.bbox = Some(Box2::new(c[0], c[1], bb.w * k, bb.h * k));
    }
    out
}

const INTENSITY_OP_COUNT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum IntensityOp {
    Equalize,
    Posterize,
    Gamma,
    Contrast,
    Brightness,
    Blur,
}

const INTENSITY_OPS: [IntensityOp; INTENSITY_OP_COUNT] = [
    IntensityOp::Equalize,
    IntensityOp::Posterize,
    IntensityOp::Gamma,
    IntensityOp::Contrast,
    IntensityOp::Brightness,
    IntensityOp::Blur,
];

fn apply_lut(img: &mut GrayImage, lut: &[u8; 256]) {
    for v in img.pixels_mut() {
        *v = lut[*v as usize];
    }
}

/// Global histogram equalization.
pub fn equalize(img: &mut GrayImage) {
    let mut hist = [0u64; 256];
    for &v in img.pixels() {
        hist[v as usize] += 1;
    }
    let total = img.pixels().len() as u64;
    let mut cdf = [0u64; 256];
    let mut acc = 0;
    for i in 0..256 {
        acc += hist[i];
        cdf[i] = acc;
    }
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    if total == cdf_min {
        return; // constant image
    }
    let mut lut = [0u8; 256];
    for i in 0..256 {
        let num = (cdf[i].saturating_sub(cdf_min)) as f64;
        lut[i] = ((num / (total - cdf_min) as f64) * 255.0).round() as u8;
    }
    apply_lut(img, &lut);
}

/// Keeps the top `bits` bits of each intensity.
pub fn posterize(img: &mut GrayImage, bits: u32) {
    assert!((1..=8).contains(&bits));
    let mask = 0xFFu8 << (8 - bits);
    for v in img.pixels_mut() {
        *v &= mask;
    }
}

pub fn gamma(img: &mut GrayImage, g: f64) {
    let mut lut = [0u8; 256];
    for (i, l) in lut.iter_mut().enumerate() {
        *l = (255.0 * (i as f64 / 255.0).powf(g)).round().clamp(0.0, 255.0) as u8;
    }
    apply_lut(img, &lut);
}

/// Contrast about the mid level: `v -> 128 + c·(v - 128)`.
pub fn contrast(img: &mut GrayImage, c: f64) {
    let mut lut = [0u8; 256];
    for (i, l) in lut.iter_mut().enumerate() {
        *l = (128.0 + c * (i as f64 - 128.0)).round().clamp(0.0, 255.0) as u8;
    }
    apply_lut(img, &lut);
}

pub fn brightness(img: &mut GrayImage, offset: f64) {
    let mut lut = [0u8; 256];
    for (i, l) in lut.iter_mut().enumerate() {
        *l = (i as f64 + offset).round().clamp(0.0, 255.0) as u8;
    }
    apply_lut(img, &lut);
}

/// Separable Gaussian blur with edge clamping.
pub fn blur(img: &mut GrayImage, sigma: f64) {
    assert!(sigma > 0.0);
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    for i in -radius..=radius {
        kernel.push((-0.5 * (i as f64 / sigma).powi(2)).exp());
    }
    let sum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= sum;
    }

    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut tmp = vec![0.0f64; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                let sx = x + ki as i64 - radius;
                acc += k * img.get_clamped(sx, y) as f64;
            }
            tmp[(y * w + x) as usize] = acc;
        }
    }
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                let sy = (y + ki as i64 - radius).clamp(0, h - 1);
                acc += k * tmp[(sy * w + x) as usize];
            }
            img.pixels_mut()[(y * w + x) as usize] = acc.round().clamp(0.0, 255.0) as u8;
        }
    }
}

/// Picks four of the six intensity operations without replacement; each
/// picked op fires independently with `cfg.intensity_op_prob` and draws its
/// parameters from the configured ranges.
pub fn intensity_ops(img: &GrayImage, rng: &mut ChaCha8Rng, cfg: &AugmentConfig) -> GrayImage {
    let mut indices: [usize; INTENSITY_OP_COUNT] = std::array::from_fn(|i| i);
    // partial Fisher-Yates: the first four entries are the picks
    for i in 0..4 {
        let j = rng.random_range(i..INTENSITY_OP_COUNT);
        indices.swap(i, j);
    }

    let mut out = img.clone();
    for &idx in &indices[..4] {
        if cfg.intensity_op_prob == 0.0 || !rng.random_bool(cfg.intensity_op_prob) {
            continue;
        }
        match INTENSITY_OPS[idx] {
            IntensityOp::Equalize => equalize(&mut out),
            IntensityOp::Posterize => {
                let bits = rng.random_range(4..=6);
                posterize(&mut out, bits);
            }
            IntensityOp::Gamma => {
                let g = rng.random_range(0.5..2.0);
                gamma(&mut out, g);
            }
            IntensityOp::Contrast => {
                let c = rng.random_range(0.7..1.3);
                contrast(&mut out, c);
            }
            IntensityOp::Brightness => {
                let b = rng.random_range(-30.0..30.0);
                brightness(&mut out, b);
            }
            IntensityOp::Blur => {
                let s = rng.random_range(0.5..1.5);
                blur(&mut out, s);
            }
        }
    }
    out
}

/// Adds the configured Gaussian noise stages, each firing with its own
/// probability; values are rounded and clamped to [0, 255].
pub fn add_noise(img: &GrayImage, rng: &mut ChaCha8Rng, cfg: &AugmentConfig) -> GrayImage {
    let mut out = img.clone();
    for &(p, sigma) in &cfg.noise_stages {
        if p == 0.0 || !rng.random_bool(p) {
            continue;
        }
        if sigma == 0.0 {
            continue;
        }
        let dist = Normal::new(0.0, sigma).expect("finite sigma");
        for v in out.pixels_mut() {
            let n: f64 = dist.sample(rng);
            *v = (*v as f64 + n).round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

/// Fully augmented sample: crop, transformed labels, and the draw that
/// produced them.
#[derive(Debug, Clone)]
pub struct AugmentedSample {
    pub image: GrayImage,
    pub record: SampleRecord,
    pub draw: GeometricDraw,
}

/// Runs the full pipeline for one sample: geometric draw, warp, label
/// transformation, intensity ops, then noise.
pub fn augment_sample(
    img: &GrayImage,
    record: &SampleRecord,
    rng: &mut ChaCha8Rng,
    cfg: &AugmentConfig,
) -> Result<AugmentedSample> {
    cfg.validate()?;
    let bb = record.bbox.as_ref().ok_or_else(|| {
        Error::InvalidField {
            field: "bbox".to_string(),
            reason: "augmentation requires a bounding box".to_string(),
        }
    })?;
    let draw = sample_geometric(rng, bb, cfg);
    let warped = warp_image(img, &draw.affine, cfg.out_size);
    let with_intensity = intensity_ops(&warped, rng, cfg);
    let noisy = add_noise(&with_intensity, rng, cfg);
    let labels = transform_labels(record, &draw)?;
    Ok(AugmentedSample {
        image: noisy,
        record: labels,
        draw,
    })
}
