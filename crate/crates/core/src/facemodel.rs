//! Linear deformable face model: base vertices plus a 50-vector deformation
//! basis, orthographic pose transform, 68-landmark extraction, and the
//! mesh-derived bounding box.
//!
//! Orthographic projection is assumed; the z axis points into the image
//! plane, so projected points keep their (scaled, rotated) depth as a third
//! coordinate for 3D landmark use.
//!
//! Models are stored in a flat little-endian binary container ("DFM1"):
//! magic `DFM1`, then `u32` vertex count V, basis count K, landmark count L,
//! face-section count F, followed by `f32` base vertices (V×3, row-major),
//! `f32` basis vectors (K×V×3, basis-major), `u32` landmark indices (L) and
//! `u32` face-section indices (F).

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Box2, Quaternion};
use crate::losses::{LANDMARK_COUNT, SHAPE_DIM};

const MAGIC: &[u8; 4] = b"DFM1";

/// Deformable face model.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformableModel {
    base_vertices: Vec<Vector3<f64>>,
    basis: Vec<Vec<Vector3<f64>>>,
    landmark_indices: Vec<usize>,
    face_section_ids: Vec<usize>,
}

impl DeformableModel {
    pub fn new(
        base_vertices: Vec<Vector3<f64>>,
        basis: Vec<Vec<Vector3<f64>>>,
        landmark_indices: Vec<usize>,
        face_section_ids: Vec<usize>,
    ) -> Result<Self> {
        let v = base_vertices.len();
        if v < LANDMARK_COUNT {
            return Err(Error::InvalidInput(format!(
                "model needs at least {LANDMARK_COUNT} vertices, got {v}"
            )));
        }
        if basis.len() != SHAPE_DIM {
            return Err(Error::DimensionMismatch {
                name: "basis",
                expected: SHAPE_DIM,
                got: basis.len(),
            });
        }
        for (k, b) in basis.iter().enumerate() {
            if b.len() != v {
                return Err(Error::InvalidField {
                    field: format!("basis[{k}]"),
                    reason: format!("expected {v} vectors, got {}", b.len()),
                });
            }
        }
        if landmark_indices.len() != LANDMARK_COUNT {
            return Err(Error::DimensionMismatch {
                name: "landmark_indices",
                expected: LANDMARK_COUNT,
                got: landmark_indices.len(),
            });
        }
        for (pos, &i) in landmark_indices.iter().enumerate() {
            if i >= v {
                return Err(Error::InvalidField {
                    field: format!("landmark_indices[{pos}]"),
                    reason: format!("vertex id {i} out of range (V = {v})"),
                });
            }
        }
        for (pos, &i) in face_section_ids.iter().enumerate() {
            if i >= v {
                return Err(Error::InvalidField {
                    field: format!("face_section_ids[{pos}]"),
                    reason: format!("vertex id {i} out of range (V = {v})"),
                });
            }
        }
        Ok(DeformableModel {
            base_vertices,
            basis,
            landmark_indices,
            face_section_ids,
        })
    }

    #[inline]
    pub fn vertex_count(&self) -> usize {
        self.base_vertices.len()
    }

    pub fn base_vertices(&self) -> &[Vector3<f64>] {
        &self.base_vertices
    }

    pub fn basis(&self) -> &[Vec<Vector3<f64>>] {
        &self.basis
    }

    pub fn landmark_indices(&self) -> &[usize] {
        &self.landmark_indices
    }

    pub fn face_section_ids(&self) -> &[usize] {
        &self.face_section_ids
    }

    /// Centroid of the base vertices.
    pub fn centroid(&self) -> Vector3<f64> {
        let mut c = Vector3::zeros();
        for v in &self.base_vertices {
            c += v;
        }
        c / self.base_vertices.len() as f64
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        let counts = [
            self.base_vertices.len() as u32,
            self.basis.len() as u32,
            self.landmark_indices.len() as u32,
            self.face_section_ids.len() as u32,
        ];
        for c in counts {
            w.write_all(&c.to_le_bytes())?;
        }
        for v in &self.base_vertices {
            for c in 0..3 {
                w.write_all(&(v[c] as f32).to_le_bytes())?;
            }
        }
        for b in &self.basis {
            for v in b {
                for c in 0..3 {
                    w.write_all(&(v[c] as f32).to_le_bytes())?;
                }
            }
        }
        for &i in &self.landmark_indices {
            w.write_all(&(i as u32).to_le_bytes())?;
        }
        for &i in &self.face_section_ids {
            w.write_all(&(i as u32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::InvalidInput(format!(
                "bad model magic {magic:?}, expected {MAGIC:?}"
            )));
        }
        let mut u32_buf = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> Result<u32> {
            r.read_exact(&mut u32_buf)?;
            Ok(u32::from_le_bytes(u32_buf))
        };
        let v = read_u32(&mut r)? as usize;
        let k = read_u32(&mut r)? as usize;
        let l = read_u32(&mut r)? as usize;
        let f = read_u32(&mut r)? as usize;

        let mut f32_buf = [0u8; 4];
        let mut read_vec3 = |r: &mut R| -> Result<Vector3<f64>> {
            let mut out = [0.0f64; 3];
            for o in &mut out {
                r.read_exact(&mut f32_buf)?;
                *o = f32::from_le_bytes(f32_buf) as f64;
            }
            Ok(Vector3::new(out[0], out[1], out[2]))
        };

        let mut base = Vec::with_capacity(v);
        for _ in 0..v {
            base.push(read_vec3(&mut r)?);
        }
        let mut basis = Vec::with_capacity(k);
        for _ in 0..k {
            let mut b = Vec::with_capacity(v);
            for _ in 0..v {
                b.push(read_vec3(&mut r)?);
            }
            basis.push(b);
        }
        let read_ids = |r: &mut R, n: usize| -> Result<Vec<usize>> {
            let mut ids = Vec::with_capacity(n);
            let mut buf = [0u8; 4];
            for _ in 0..n {
                r.read_exact(&mut buf)?;
                ids.push(u32::from_le_bytes(buf) as usize);
            }
            Ok(ids)
        };
        let landmarks = read_ids(&mut r, l)?;
        let face = read_ids(&mut r, f)?;
        DeformableModel::new(base, basis, landmarks, face)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let data = std::fs::read(path)?;
        DeformableModel::read_from(data.as_slice())
    }
}

/// Similarity pose: rotation, 2D translation in normalized image units, and
/// a positive scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub q: Quaternion,
    pub tx: f64,
    pub ty: f64,
    pub s: f64,
}

impl Pose {
    pub fn new(q: Quaternion, tx: f64, ty: f64, s: f64) -> Self {
        assert!(s > 0.0, "pose scale must be positive");
        Pose { q, tx, ty, s }
    }

    pub fn identity() -> Self {
        Pose::new(Quaternion::IDENTITY, 0.0, 0.0, 1.0)
    }
}

/// Deformation coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeCoeffs {
    pub phi: Vec<f64>,
}

impl ShapeCoeffs {
    pub fn new(phi: Vec<f64>) -> Result<Self> {
        if phi.len() != SHAPE_DIM {
            return Err(Error::DimensionMismatch {
                name: "shape coefficients",
                expected: SHAPE_DIM,
                got: phi.len(),
            });
        }
        for (i, v) in phi.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidField {
                    field: format!("phi[{i}]"),
                    reason: format!("must be finite, got {v}"),
                });
            }
        }
        Ok(ShapeCoeffs { phi })
    }

    pub fn zeros() -> Self {
        ShapeCoeffs {
            phi: vec![0.0; SHAPE_DIM],
        }
    }
}

/// Base shape plus the linear combination of deformation vectors.
pub fn reconstruct(model: &DeformableModel, coeffs: &ShapeCoeffs) -> Vec<Vector3<f64>> {
    assert_eq!(coeffs.phi.len(), SHAPE_DIM);
    let mut out = model.base_vertices.clone();
    for (k, phi_k) in coeffs.phi.iter().enumerate() {
        if *phi_k == 0.0 {
            continue;
        }
        for (o, b) in out.iter_mut().zip(&model.basis[k]) {
            *o += b * *phi_k;
        }
    }
    out
}

/// Scales, rotates and translates vertices into image space:
/// `p = s·R(q)·v + (tx, ty, 0)`. Depth is retained in the z coordinate.
pub fn transform_project(vertices: &[Vector3<f64>], pose: &Pose) -> Vec<Vector3<f64>> {
    vertices
        .iter()
        .map(|v| {
            let r = pose.q.rotate(v) * pose.s;
            Vector3::new(r.x + pose.tx, r.y + pose.ty, r.z)
        })
        .collect()
}

/// Reconstructs, projects, and gathers the 68 landmark vertices.
pub fn landmarks68(
    model: &DeformableModel,
    coeffs: &ShapeCoeffs,
    pose: &Pose,
) -> Vec<[f64; 3]> {
    let projected = transform_project(&reconstruct(model, coeffs), pose);
    model
        .landmark_indices
        .iter()
        .map(|&i| {
            let p = projected[i];
            [p.x, p.y, p.z]
        })
        .collect()
}

/// Axis-aligned box around the projected facial-section vertices.
pub fn bbox_from_mesh(model: &DeformableModel, coeffs: &ShapeCoeffs, pose: &Pose) -> Box2 {
    assert!(
        !model.face_section_ids.is_empty(),
        "model has no facial-section vertices"
    );
    let projected = transform_project(&reconstruct(model, coeffs), pose);
    let mut x0 = f64::INFINITY;
    let mut y0 = f64::INFINITY;
    let mut x1 = f64::NEG_INFINITY;
    let mut y1 = f64::NEG_INFINITY;
    for &i in &model.face_section_ids {
        let p = projected[i];
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    Box2::from_corners(x0, y0, x1, y1)
}

/// Deterministic procedurally generated stand-in model: an ellipsoidal head
/// with a smooth random deformation basis, 68 spread-out landmarks on the
/// frontal cap, and the front hemisphere as the facial section. The camera
/// looks along +z, so the face points toward -z.
pub fn synthetic_model(seed: u64) -> DeformableModel {
    const V: usize = 500;
    // head semi-axes: width, height, depth
    const AXES: [f64; 3] = [0.75, 1.0, 0.85];
    const HEAD_RADIUS: f64 = 1.0;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Fibonacci sphere scaled to the ellipsoid
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    let mut unit = Vec::with_capacity(V);
    let mut base = Vec::with_capacity(V);
    for i in 0..V {
        let zs = 1.0 - 2.0 * (i as f64 + 0.5) / V as f64;
        let r = (1.0 - zs * zs).sqrt();
        let a = golden * i as f64;
        let u = Vector3::new(r * a.cos(), r * a.sin(), zs);
        unit.push(u);
        base.push(Vector3::new(u.x * AXES[0], u.y * AXES[1], u.z * AXES[2]));
    }

    let face_section_ids: Vec<usize> = (0..V).filter(|&i| unit[i].z < 0.0).collect();

    // landmarks: farthest-point sampling over the frontal cap (within 55°
    // of the -z pole), seeded at the most frontal vertex
    let cap: Vec<usize> = (0..V)
        .filter(|&i| unit[i].z < -(55.0f64.to_radians().cos()))
        .collect();
    assert!(cap.len() >= LANDMARK_COUNT);
    let mut chosen = Vec::with_capacity(LANDMARK_COUNT);
    let start = *cap
        .iter()
        .min_by(|&&a, &&b| unit[a].z.partial_cmp(&unit[b].z).unwrap())
        .unwrap();
    chosen.push(start);
    let mut dist: Vec<f64> = cap
        .iter()
        .map(|&i| (base[i] - base[start]).norm())
        .collect();
    while chosen.len() < LANDMARK_COUNT {
        let (best_pos, _) = dist
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        let next = cap[best_pos];
        chosen.push(next);
        for (d, &i) in dist.iter_mut().zip(&cap) {
            *d = d.min((base[i] - base[next]).norm());
        }
    }

    // smooth random basis: superposition of two sinusoidal displacement
    // fields per deformation vector, amplitude-bounded to under 10% of the
    // head radius
    let mut basis = Vec::with_capacity(SHAPE_DIM);
    for _ in 0..SHAPE_DIM {
        let mut waves = Vec::new();
        for _ in 0..2 {
            let dir = loop {
                let d = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                if d.norm() > 0.1 {
                    break d.normalize();
                }
            };
            let freq = Vector3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let amp = rng.random_range(0.01..0.04) * HEAD_RADIUS;
            waves.push((dir, freq, phase, amp));
        }
        let field: Vec<Vector3<f64>> = base
            .iter()
            .map(|v| {
                let mut d = Vector3::zeros();
                for (dir, freq, phase, amp) in &waves {
                    d += dir * (*amp * (freq.dot(v) + phase).sin());
                }
                d
            })
            .collect();
        basis.push(field);
    }

    DeformableModel::new(base, basis, chosen, face_section_ids)
        .expect("synthetic model satisfies the invariants by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_pose(rng: &mut impl Rng) -> Pose {
        let q = Quaternion::from_features(
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
        );
        Pose::new(
            q,
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(0.5..2.0),
        )
    }

    fn random_coeffs(rng: &mut impl Rng) -> ShapeCoeffs {
        ShapeCoeffs::new((0..SHAPE_DIM).map(|_| rng.random_range(-0.5..0.5)).collect()).unwrap()
    }

    #[test]
    fn synthetic_model_is_deterministic_and_valid() {
        let a = synthetic_model(0);
        let b = synthetic_model(0);
        assert_eq!(a, b);
        assert_ne!(a, synthetic_model(1));

        assert!(a.vertex_count() >= LANDMARK_COUNT);
        assert_eq!(a.basis().len(), SHAPE_DIM);
        assert_eq!(a.landmark_indices().len(), LANDMARK_COUNT);
        let mut sorted = a.landmark_indices().to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), LANDMARK_COUNT, "landmark ids must be unique");
        assert!(!a.face_section_ids().is_empty());
    }

    #[test]
    fn synthetic_basis_norms_are_bounded() {
        let model = synthetic_model(7);
        for b in model.basis() {
            for v in b {
                assert!(v.norm() <= 0.1, "basis displacement {} too large", v.norm());
            }
        }
    }

    #[test]
    fn reconstruct_is_linear() {
        let model = synthetic_model(3);
        let zero = reconstruct(&model, &ShapeCoeffs::zeros());
        assert_eq!(zero, model.base_vertices().to_vec());

        let mut e1 = ShapeCoeffs::zeros();
        e1.phi[0] = 1.0;
        let r = reconstruct(&model, &e1);
        for ((out, base), b0) in r.iter().zip(model.base_vertices()).zip(&model.basis()[0]) {
            assert!((out - (base + b0)).norm() < 1e-15);
        }

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let a = random_coeffs(&mut rng);
        let b = random_coeffs(&mut rng);
        let sum = ShapeCoeffs::new(
            a.phi.iter().zip(&b.phi).map(|(x, y)| x + y).collect(),
        )
        .unwrap();
        let ra = reconstruct(&model, &a);
        let rb = reconstruct(&model, &b);
        let rs = reconstruct(&model, &sum);
        for i in 0..model.vertex_count() {
            let lin = ra[i] + rb[i] - model.base_vertices()[i];
            assert!((rs[i] - lin).norm() < 1e-12);
        }
    }

    #[test]
    fn transform_project_cases() {
        let model = synthetic_model(5);
        let verts = model.base_vertices().to_vec();

        let id = transform_project(&verts, &Pose::identity());
        assert_eq!(id, verts);

        let doubled = transform_project(&verts, &Pose::new(Quaternion::IDENTITY, 0.0, 0.0, 2.0));
        for (d, v) in doubled.iter().zip(&verts) {
            assert!((d - v * 2.0).norm() < 1e-15);
        }

        // 90° roll about z maps (x, y) to (-y, x)
        let roll =
            Quaternion::from_axis_angle(Vector3::z(), std::f64::consts::FRAC_PI_2);
        let rolled = transform_project(&verts, &Pose::new(roll, 0.0, 0.0, 1.0));
        for (r, v) in rolled.iter().zip(&verts) {
            assert!((r.x - (-v.y)).abs() < 1e-12);
            assert!((r.y - v.x).abs() < 1e-12);
            assert!((r.z - v.z).abs() < 1e-12);
        }
    }

    #[test]
    fn transform_project_rotation_equivariance() {
        let model = synthetic_model(9);
        let verts = model.base_vertices().to_vec();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let p1 = random_pose(&mut rng);
            let p2 = random_pose(&mut rng);
            // rotate twice (unit scale, no translation) vs composed rotation
            let a = transform_project(
                &transform_project(&verts, &Pose::new(p1.q, 0.0, 0.0, 1.0)),
                &Pose::new(p2.q, 0.0, 0.0, 1.0),
            );
            let b = transform_project(&verts, &Pose::new(p2.q.mul(&p1.q), 0.0, 0.0, 1.0));
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn landmarks_match_composition() {
        let model = synthetic_model(11);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(43);

        let base68 = landmarks68(&model, &ShapeCoeffs::zeros(), &Pose::identity());
        for (lm, &i) in base68.iter().zip(model.landmark_indices()) {
            let v = model.base_vertices()[i];
            assert_eq!([v.x, v.y, v.z], *lm);
        }

        let shifted = landmarks68(
            &model,
            &ShapeCoeffs::zeros(),
            &Pose::new(Quaternion::IDENTITY, 0.25, -0.5, 1.0),
        );
        for (s, b) in shifted.iter().zip(&base68) {
            assert!((s[0] - (b[0] + 0.25)).abs() < 1e-15);
            assert!((s[1] - (b[1] - 0.5)).abs() < 1e-15);
            assert_eq!(s[2], b[2]);
        }

        for _ in 0..20 {
            let pose = random_pose(&mut rng);
            let coeffs = random_coeffs(&mut rng);
            let lms = landmarks68(&model, &coeffs, &pose);
            let oracle = transform_project(&reconstruct(&model, &coeffs), &pose);
            for (lm, &i) in lms.iter().zip(model.landmark_indices()) {
                assert_eq!(*lm, [oracle[i].x, oracle[i].y, oracle[i].z]);
            }
        }
    }

    #[test]
    fn bbox_from_mesh_properties() {
        let model = synthetic_model(13);
        let coeffs = ShapeCoeffs::zeros();

        let b0 = bbox_from_mesh(&model, &coeffs, &Pose::identity());
        // brute-force scan oracle
        let pts = transform_project(&reconstruct(&model, &coeffs), &Pose::identity());
        let xs: Vec<f64> = model.face_section_ids().iter().map(|&i| pts[i].x).collect();
        let ys: Vec<f64> = model.face_section_ids().iter().map(|&i| pts[i].y).collect();
        let x0 = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let x1 = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let y0 = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let y1 = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((b0.w - (x1 - x0)).abs() < 1e-15);
        assert!((b0.h - (y1 - y0)).abs() < 1e-15);

        // doubling the scale doubles the box; translation shifts its center
        let b2 = bbox_from_mesh(&model, &coeffs, &Pose::new(Quaternion::IDENTITY, 0.0, 0.0, 2.0));
        assert!((b2.w - 2.0 * b0.w).abs() < 1e-12);
        assert!((b2.h - 2.0 * b0.h).abs() < 1e-12);

        let bt = bbox_from_mesh(
            &model,
            &coeffs,
            &Pose::new(Quaternion::IDENTITY, 0.3, -0.1, 1.0),
        );
        assert!((bt.cx - (b0.cx + 0.3)).abs() < 1e-12);
        assert!((bt.cy - (b0.cy - 0.1)).abs() < 1e-12);
        assert!((bt.w - b0.w).abs() < 1e-15);

        // random-pose brute-force scan
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(47);
        for _ in 0..10 {
            let pose = random_pose(&mut rng);
            let b = bbox_from_mesh(&model, &coeffs, &pose);
            let pts = transform_project(&reconstruct(&model, &coeffs), &pose);
            for &i in model.face_section_ids() {
                let [bx0, by0, bx1, by1] = b.corners();
                assert!(pts[i].x >= bx0 - 1e-12 && pts[i].x <= bx1 + 1e-12);
                assert!(pts[i].y >= by0 - 1e-12 && pts[i].y <= by1 + 1e-12);
            }
        }
    }

    #[test]
    fn model_file_round_trip() {
        let model = synthetic_model(17);
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        let loaded = DeformableModel::read_from(buf.as_slice()).unwrap();

        assert_eq!(loaded.vertex_count(), model.vertex_count());
        assert_eq!(loaded.landmark_indices(), model.landmark_indices());
        assert_eq!(loaded.face_section_ids(), model.face_section_ids());
        // payload is f32, so vertices agree to f32 precision
        for (a, b) in loaded.base_vertices().iter().zip(model.base_vertices()) {
            assert!((a - b).norm() < 1e-6);
        }
        for (ba, bb) in loaded.basis().iter().zip(model.basis()) {
            for (a, b) in ba.iter().zip(bb) {
                assert!((a - b).norm() < 1e-6);
            }
        }

        // a second write is byte-identical
        let mut buf2 = Vec::new();
        loaded.write_to(&mut buf2).unwrap();
        let mut buf3 = Vec::new();
        DeformableModel::read_from(buf2.as_slice())
            .unwrap()
            .write_to(&mut buf3)
            .unwrap();
        assert_eq!(buf2, buf3);

        // corrupt magic is rejected
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(DeformableModel::read_from(bad.as_slice()).is_err());
    }

    #[test]
    fn constructor_validation() {
        let model = synthetic_model(19);
        let mut bad_landmarks = model.landmark_indices().to_vec();
        bad_landmarks[0] = model.vertex_count();
        assert!(DeformableModel::new(
            model.base_vertices().to_vec(),
            model.basis().to_vec(),
            bad_landmarks,
            model.face_section_ids().to_vec(),
        )
        .is_err());

        assert!(DeformableModel::new(
            model.base_vertices().to_vec(),
            model.basis()[..10].to_vec(),
            model.landmark_indices().to_vec(),
            model.face_section_ids().to_vec(),
        )
        .is_err());
    }
}
