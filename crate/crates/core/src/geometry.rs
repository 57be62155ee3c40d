//! Rotations, similarity transforms between point sets, and the
//! scale/rotation/translation split used by the multi-view losses.

use std::ops::Mul;

use nalgebra::{Matrix3, Matrix3x4, Vector3};

use crate::error::{OcuError, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Orthonormality and round-trip tolerance.
pub const ORTHO_TOL: f64 = 1e-9;
/// Precondition tolerance for unit vectors and similarity blocks.
pub const PRECONDITION_TOL: f64 = 1e-6;

/// A proper rotation (orthonormal, determinant +1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Accepts `m` only if it is orthonormal with determinant +1 within [`ORTHO_TOL`].
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(OcuError::param("rotation has non-finite entries"));
        }
        let dev = (m.transpose() * m - Mat3::identity()).abs().max();
        if dev > ORTHO_TOL {
            return Err(OcuError::param(format!(
                "matrix is not orthonormal (max |R^T R - I| = {dev:e})"
            )));
        }
        if (m.determinant() - 1.0).abs() > ORTHO_TOL {
            return Err(OcuError::param("rotation determinant is not +1"));
        }
        Ok(Rotation(m))
    }

    pub(crate) fn from_matrix_unchecked(m: Mat3) -> Self {
        Rotation(m)
    }

    /// Nearest rotation to an arbitrary matrix (polar factor with det +1).
    pub fn nearest(m: &Mat3) -> Result<Self> {
        let svd = m.svd(true, true);
        let (u, vt) = match (svd.u, svd.v_t) {
            (Some(u), Some(vt)) => (u, vt),
            _ => return Err(OcuError::param("svd failed")),
        };
        let d = (u * vt).determinant().signum();
        let fix = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, d));
        Ok(Rotation(u * fix * vt))
    }

    /// Right-handed rotation of `angle` radians about `axis`.
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if !(n > 1e-15) {
            return Err(OcuError::Degenerate("rotation axis has zero length".into()));
        }
        let k = axis / n;
        let (s, c) = angle.sin_cos();
        let kx = cross_matrix(&k);
        Ok(Rotation(
            Mat3::identity() + kx * s + kx * kx * (1.0 - c),
        ))
    }

    pub fn about_x(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        Rotation(Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn about_y(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        Rotation(Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn about_z(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        Rotation(Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    /// Head-pose style rotation: yaw about +y applied after pitch about +x.
    pub fn from_yaw_pitch(yaw_deg: f64, pitch_deg: f64) -> Self {
        Self::about_y(yaw_deg) * Self::about_x(pitch_deg)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Geodesic distance to `other`, in degrees.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        let rel = self.0.transpose() * other.0;
        let c = (rel.trace() - 1.0) * 0.5;
        let skew = rel - rel.transpose();
        let s = Vec3::new(skew[(2, 1)], skew[(0, 2)], skew[(1, 0)]).norm() * 0.5;
        s.atan2(c).to_degrees()
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for Rotation {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

pub(crate) fn cross_matrix(k: &Vec3) -> Mat3 {
    Mat3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0)
}

/// Non-empty set of finite 3D points.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet(Vec<Vec3>);

impl PointSet {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(OcuError::param("point set is empty"));
        }
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(OcuError::param("point set contains non-finite coordinates"));
        }
        Ok(PointSet(points))
    }

    pub fn points(&self) -> &[Vec3] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<Vec3> {
        self.0
    }
}

/// The 3x4 matrix `P = [s R | t]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimilarityTransform {
    matrix: Matrix3x4<f64>,
    scale: f64,
    rotation: Rotation,
    translation: Vec3,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self::from_parts_unchecked(1.0, Rotation::identity(), Vec3::zeros())
    }

    pub fn from_parts(scale: f64, rotation: Rotation, translation: Vec3) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(OcuError::param(format!("scale must be positive, got {scale}")));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(OcuError::param("translation is not finite"));
        }
        Ok(Self::from_parts_unchecked(scale, rotation, translation))
    }

    fn from_parts_unchecked(scale: f64, rotation: Rotation, translation: Vec3) -> Self {
        let block = rotation.matrix() * scale;
        let mut matrix = Matrix3x4::zeros();
        matrix.fixed_view_mut::<3, 3>(0, 0).copy_from(&block);
        matrix.set_column(3, &translation);
        SimilarityTransform {
            matrix,
            scale,
            rotation,
            translation,
        }
    }

    /// Validates and decomposes a raw 3x4 matrix.
    pub fn from_matrix(matrix: Matrix3x4<f64>) -> Result<Self> {
        let (scale, rotation, translation) = decompose(&matrix)?;
        Ok(SimilarityTransform {
            matrix,
            scale,
            rotation,
            translation,
        })
    }

    pub fn matrix(&self) -> &Matrix3x4<f64> {
        &self.matrix
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn rotation(&self) -> Rotation {
        self.rotation
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    /// Left 3x3 block `s R` as stored.
    pub fn linear(&self) -> Mat3 {
        self.matrix.fixed_view::<3, 3>(0, 0).into_owned()
    }

    /// `[x; 1]` mapped by `P`.
    pub fn apply_point(&self, x: &Vec3) -> Vec3 {
        self.matrix.fixed_view::<3, 3>(0, 0) * x + self.matrix.column(3)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &SimilarityTransform) -> SimilarityTransform {
        let scale = self.scale * other.scale;
        let rotation = self.rotation * other.rotation;
        let translation = self.apply_point(&other.translation);
        Self::from_parts_unchecked(scale, rotation, translation)
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let rt = self.rotation.transpose();
        let scale = 1.0 / self.scale;
        let translation = -(rt.apply(&self.translation) * scale);
        Self::from_parts_unchecked(scale, rt, translation)
    }
}

/// Minimal-angle rotation taking unit vector `a` onto unit vector `b`.
///
/// Built as the product of two reflections, `(I - 2bb^T)(I - 2mm^T)` with `m`
/// the normalized bisector of `a` and `b`, which stays accurate close to the
/// antiparallel configuration. Exactly antiparallel inputs get a 180° turn about
/// the projection of +x onto the plane orthogonal to `a` (or +y when `a` is
/// along x).
pub fn rotation_between(a: &Vec3, b: &Vec3) -> Result<Rotation> {
    let a = unit_checked(a, "a")?;
    let b = unit_checked(b, "b")?;
    let sum = a + b;
    let sum_norm = sum.norm();
    if sum_norm <= 1e-12 {
        let x = Vec3::x();
        let mut axis = x - a * a.dot(&x);
        if axis.norm() < 1e-6 {
            let y = Vec3::y();
            axis = y - a * a.dot(&y);
        }
        let axis = axis.normalize();
        return Ok(Rotation(axis * axis.transpose() * 2.0 - Mat3::identity()));
    }
    let m = sum / sum_norm;
    let hb = Mat3::identity() - b * b.transpose() * 2.0;
    let hm = Mat3::identity() - m * m.transpose() * 2.0;
    Ok(Rotation(hb * hm))
}

fn unit_checked(v: &Vec3, name: &str) -> Result<Vec3> {
    let n = v.norm();
    if !n.is_finite() || (n - 1.0).abs() > PRECONDITION_TOL {
        return Err(OcuError::param(format!("`{name}` is not a unit vector (norm {n})")));
    }
    Ok(v / n)
}

/// Closed-form least-squares similarity `dst ≈ s R src + t` (Umeyama), with
/// the reflection case corrected so that `det R = +1`.
pub fn estimate_similarity(src: &PointSet, dst: &PointSet) -> Result<SimilarityTransform> {
    let n = src.len();
    if dst.len() != n {
        return Err(OcuError::Estimation(format!(
            "point counts differ ({n} vs {})",
            dst.len()
        )));
    }
    if n < 3 {
        return Err(OcuError::Estimation(format!("need at least 3 points, got {n}")));
    }
    let inv_n = 1.0 / n as f64;
    let mu_s = src.points().iter().sum::<Vec3>() * inv_n;
    let mu_d = dst.points().iter().sum::<Vec3>() * inv_n;

    let mut cov = Mat3::zeros();
    let mut scatter = Mat3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.points().iter().zip(dst.points()) {
        let cs = s - mu_s;
        let cd = d - mu_d;
        cov += cd * cs.transpose();
        scatter += cs * cs.transpose();
        var_s += cs.norm_squared();
    }
    cov *= inv_n;
    var_s *= inv_n;

    let mut eig = scatter.symmetric_eigen().eigenvalues.as_slice().to_vec();
    eig.sort_by(|a, b| b.total_cmp(a));
    if !(eig[0] > 0.0) || eig[1] <= 1e-12 * eig[0] {
        return Err(OcuError::Estimation(
            "source points are degenerate (collinear or coincident)".into(),
        ));
    }

    let svd = cov.svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(OcuError::Estimation("svd failed".into())),
    };
    let d = if u.determinant() * vt.determinant() < 0.0 {
        -1.0
    } else {
        1.0
    };
    let fix = Vec3::new(1.0, 1.0, d);
    let r = u * Mat3::from_diagonal(&fix) * vt;
    let trace_ds: f64 = svd
        .singular_values
        .iter()
        .zip(fix.iter())
        .map(|(sv, f)| sv * f)
        .sum();
    let scale = trace_ds / var_s;
    if !(scale > 0.0) {
        return Err(OcuError::Estimation(format!("non-positive scale {scale}")));
    }
    let rotation = Rotation(r);
    let translation = mu_d - rotation.apply(&mu_s) * scale;
    SimilarityTransform::from_parts(scale, rotation, translation)
}

/// Splits `P = [A | t]` into `(s, R, t)` with `s = cbrt(det A)` and `R = A / s`.
pub fn decompose(p: &Matrix3x4<f64>) -> Result<(f64, Rotation, Vec3)> {
    if !p.iter().all(|v| v.is_finite()) {
        return Err(OcuError::Decomposition("non-finite entries".into()));
    }
    let a: Mat3 = p.fixed_view::<3, 3>(0, 0).into_owned();
    let det = a.determinant();
    if !(det > 0.0) {
        return Err(OcuError::Decomposition(format!(
            "left block has det {det} (reflection or degenerate)"
        )));
    }
    let s = det.cbrt();
    let r = a / s;
    let dev = (r.transpose() * r - Mat3::identity()).abs().max();
    if dev > PRECONDITION_TOL {
        return Err(OcuError::Decomposition(format!(
            "left block is not a scaled rotation (deviation {dev:e})"
        )));
    }
    Ok((s, Rotation(r), p.column(3).into_owned()))
}

/// `out_i = s R pts_i + t`.
pub fn apply(p: &SimilarityTransform, pts: &PointSet) -> PointSet {
    PointSet(pts.points().iter().map(|x| p.apply_point(x)).collect())
}

/// Yaw (about y) and pitch (about x), in degrees, for `R = Ry(yaw) Rx(pitch) Rz(roll)`.
/// Roll is ignored. At gimbal lock roll is taken as zero and the remaining
/// freedom is assigned to yaw.
pub fn euler_yaw_pitch(r: &Rotation) -> (f64, f64) {
    let m = r.matrix();
    let sp = (-m[(1, 2)]).clamp(-1.0, 1.0);
    let pitch = sp.asin();
    let yaw = if pitch.cos() < 1e-12 {
        (-m[(2, 0)]).atan2(m[(0, 0)])
    } else {
        m[(0, 2)].atan2(m[(2, 2)])
    };
    (yaw.to_degrees(), pitch.to_degrees())
}

/// Forward direction `Ry(yaw) Rx(pitch) (0,0,-1)`.
pub fn direction_from_yaw_pitch(yaw_deg: f64, pitch_deg: f64) -> Vec3 {
    let (sy, cy) = yaw_deg.to_radians().sin_cos();
    let (sp, cp) = pitch_deg.to_radians().sin_cos();
    Vec3::new(-sy * cp, sp, -cy * cp)
}

/// Inverse of [`direction_from_yaw_pitch`] for a unit direction.
pub fn yaw_pitch_of_direction(d: &Vec3) -> (f64, f64) {
    let pitch = d.y.clamp(-1.0, 1.0).asin();
    let yaw = (-d.x).atan2(-d.z);
    (yaw.to_degrees(), pitch.to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = Vec3::new(
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            );
            if v.norm() > 1e-3 {
                return v.normalize();
            }
        }
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
        let axis = random_unit(rng);
        Rotation::from_axis_angle(&axis, rng.random_range(0.0..std::f64::consts::PI)).unwrap()
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> PointSet {
        PointSet::new(
            (0..n)
                .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()) * 2.0 - Vec3::repeat(1.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn rotation_between_orthogonal_axes_is_quarter_turn_about_y() {
        let r = rotation_between(&Vec3::z(), &Vec3::x()).unwrap();
        assert!(r.angle_to(&Rotation::about_y(90.0)) < 1e-9);
    }

    #[test]
    fn rotation_between_equal_vectors_is_identity() {
        let r = rotation_between(&Vec3::y(), &Vec3::y()).unwrap();
        assert!((r.matrix() - Mat3::identity()).abs().max() < 1e-15);
    }

    #[test]
    fn rotation_between_antiparallel_uses_x_tie_break() {
        let a = Vec3::z();
        let b = -Vec3::z();
        let r = rotation_between(&a, &b).unwrap();
        assert!((r.apply(&a) - b).norm() < 1e-9);
        assert!((r.matrix().transpose() * r.matrix() - Mat3::identity()).abs().max() < 1e-9);
        assert!((r.matrix().determinant() - 1.0).abs() < 1e-9);
        assert!(r.angle_to(&Rotation::about_x(180.0)) < 1e-9);
        // a along x falls back to the y axis
        let r = rotation_between(&Vec3::x(), &-Vec3::x()).unwrap();
        assert!(r.angle_to(&Rotation::about_y(180.0)) < 1e-9);
    }

    #[test]
    fn rotation_between_rejects_non_unit() {
        assert!(matches!(
            rotation_between(&Vec3::new(0.0, 0.0, 2.0), &Vec3::x()),
            Err(OcuError::Parameter(_))
        ));
    }

    #[test]
    fn rotation_between_round_trip_composes_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let a = random_unit(&mut rng);
            let b = random_unit(&mut rng);
            let ab = rotation_between(&a, &b).unwrap();
            let ba = rotation_between(&b, &a).unwrap();
            assert!(((ba * ab).matrix() - Mat3::identity()).abs().max() < 1e-9);
        }
    }

    #[test]
    fn estimate_identity_on_equal_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let src = random_points(&mut rng, 10);
        let p = estimate_similarity(&src, &src).unwrap();
        assert!((p.scale() - 1.0).abs() < 1e-12);
        assert!((p.rotation().matrix() - Mat3::identity()).abs().max() < 1e-12);
        assert!(p.translation().norm() < 1e-12);
    }

    #[test]
    fn estimate_recovers_constructed_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let src = random_points(&mut rng, 20);
        let truth =
            SimilarityTransform::from_parts(2.0, Rotation::about_z(30.0), Vec3::new(1.0, 2.0, 3.0))
                .unwrap();
        let dst = apply(&truth, &src);
        let p = estimate_similarity(&src, &dst).unwrap();
        assert!((p.scale() - 2.0).abs() < 1e-9);
        assert!((p.rotation().matrix() - Rotation::about_z(30.0).matrix()).abs().max() < 1e-9);
        assert!((p.translation() - Vec3::new(1.0, 2.0, 3.0)).norm() < 1e-9);
    }

    #[test]
    fn estimate_recovers_from_planar_points() {
        let src = PointSet::new(vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 2.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
        ])
        .unwrap();
        let truth =
            SimilarityTransform::from_parts(0.7, Rotation::from_yaw_pitch(40.0, -25.0), Vec3::new(-1.0, 0.5, 4.0))
                .unwrap();
        let p = estimate_similarity(&src, &apply(&truth, &src)).unwrap();
        assert!((p.matrix() - truth.matrix()).abs().max() < 1e-9);
    }

    #[test]
    fn estimate_errors() {
        let a = PointSet::new(vec![Vec3::zeros(), Vec3::x(), Vec3::y()]).unwrap();
        let b = PointSet::new(vec![Vec3::zeros(), Vec3::x()]).unwrap();
        assert!(matches!(estimate_similarity(&a, &b), Err(OcuError::Estimation(_))));
        assert!(matches!(estimate_similarity(&b, &b), Err(OcuError::Estimation(_))));
        let line = PointSet::new(vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0, Vec3::x() * 5.0]).unwrap();
        assert!(matches!(estimate_similarity(&line, &line), Err(OcuError::Estimation(_))));
    }

    /// Residual RMS of `p` mapping `src` onto `dst`.
    fn rms(p: &SimilarityTransform, src: &PointSet, dst: &PointSet) -> f64 {
        let ss: f64 = src
            .points()
            .iter()
            .zip(dst.points())
            .map(|(s, d)| (p.apply_point(s) - d).norm_squared())
            .sum();
        (ss / src.len() as f64).sqrt()
    }

    /// Independent oracle: coordinate search over (log s, rotation vector, t)
    /// with shrinking step sizes, started from the identity.
    fn grid_refine(src: &PointSet, dst: &PointSet) -> f64 {
        let mut x = [0.0f64; 7];
        let build = |x: &[f64; 7]| {
            let w = Vec3::new(x[1], x[2], x[3]);
            let r = if w.norm() > 0.0 {
                Rotation::from_axis_angle(&w, w.norm()).unwrap()
            } else {
                Rotation::identity()
            };
            SimilarityTransform::from_parts(x[0].exp(), r, Vec3::new(x[4], x[5], x[6])).unwrap()
        };
        let mut best = rms(&build(&x), src, dst);
        let mut step = 1.0;
        while step > 1e-11 {
            let mut improved = true;
            while improved {
                improved = false;
                for k in 0..7 {
                    for dir in [-1.0, 1.0] {
                        let mut y = x;
                        y[k] += dir * step;
                        let v = rms(&build(&y), src, dst);
                        if v < best {
                            best = v;
                            x = y;
                            improved = true;
                        }
                    }
                }
            }
            step *= 0.5;
        }
        best
    }

    #[test]
    fn estimate_is_least_squares_under_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let src = random_points(&mut rng, 20);
        let truth =
            SimilarityTransform::from_parts(2.0, Rotation::about_z(30.0), Vec3::new(1.0, 2.0, 3.0))
                .unwrap();
        let dst = PointSet::new(
            apply(&truth, &src)
                .into_inner()
                .into_iter()
                .map(|p| {
                    p + Vec3::new(
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                    ) * 0.01
                })
                .collect(),
        )
        .unwrap();
        let p = estimate_similarity(&src, &dst).unwrap();
        let oracle = grid_refine(&src, &dst);
        assert!(rms(&p, &src, &dst) <= oracle + 1e-6, "{} vs {}", rms(&p, &src, &dst), oracle);
    }

    #[test]
    fn decompose_examples() {
        let (s, r, t) = decompose(SimilarityTransform::identity().matrix()).unwrap();
        assert_eq!(s, 1.0);
        assert_eq!(r, Rotation::identity());
        assert_eq!(t, Vec3::zeros());

        let p = SimilarityTransform::from_parts(0.5, Rotation::about_x(45.0), Vec3::new(-1.0, 0.0, 2.0))
            .unwrap();
        let (s, r, t) = decompose(p.matrix()).unwrap();
        assert!((s - 0.5).abs() < 1e-12);
        assert!((r.matrix() - Rotation::about_x(45.0).matrix()).abs().max() < 1e-12);
        assert!((t - Vec3::new(-1.0, 0.0, 2.0)).norm() < 1e-12);

        let mut m = Matrix3x4::zeros();
        m[(0, 0)] = 1.0;
        m[(1, 1)] = 1.0;
        m[(2, 2)] = -1.0;
        assert!(matches!(decompose(&m), Err(OcuError::Decomposition(_))));
    }

    #[test]
    fn apply_examples() {
        let pts = PointSet::new(vec![Vec3::new(1.0, 2.0, 3.0), Vec3::zeros()]).unwrap();
        assert_eq!(apply(&SimilarityTransform::identity(), &pts), pts);
        let shift =
            SimilarityTransform::from_parts(1.0, Rotation::identity(), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        let origin = PointSet::new(vec![Vec3::zeros()]).unwrap();
        assert_eq!(apply(&shift, &origin).points()[0], Vec3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn apply_composition_matches_composed_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_points(&mut rng, 30);
        let p1 = SimilarityTransform::from_parts(1.3, random_rotation(&mut rng), Vec3::new(0.1, -2.0, 3.0))
            .unwrap();
        let p2 = SimilarityTransform::from_parts(0.4, random_rotation(&mut rng), Vec3::new(5.0, 1.0, -1.0))
            .unwrap();
        let a = apply(&p2, &apply(&p1, &x));
        let b = apply(&p2.compose(&p1), &x);
        for (u, v) in a.points().iter().zip(b.points()) {
            assert!((u - v).norm() < 1e-9);
        }
        let back = apply(&p1.inverse(), &apply(&p1, &x));
        for (u, v) in back.points().iter().zip(x.points()) {
            assert!((u - v).norm() < 1e-9);
        }
    }

    #[test]
    fn euler_examples() {
        let (y, p) = euler_yaw_pitch(&Rotation::identity());
        assert_eq!((y, p), (0.0, 0.0));
        let (y, p) = euler_yaw_pitch(&Rotation::about_y(20.0));
        assert!((y - 20.0).abs() < 1e-12 && p.abs() < 1e-12);
        let (y, p) = euler_yaw_pitch(&(Rotation::about_y(20.0) * Rotation::about_x(10.0)));
        assert!((y - 20.0).abs() < 1e-9 && (p - 10.0).abs() < 1e-9);
        // roll does not leak into yaw/pitch
        let r = Rotation::from_yaw_pitch(-35.0, 12.0) * Rotation::about_z(50.0);
        let (y, p) = euler_yaw_pitch(&r);
        assert!((y + 35.0).abs() < 1e-9 && (p - 12.0).abs() < 1e-9);
        // gimbal lock assigns the freedom to yaw
        let (y, p) = euler_yaw_pitch(&Rotation::from_yaw_pitch(30.0, 90.0));
        assert!((y - 30.0).abs() < 1e-6 && (p - 90.0).abs() < 1e-6);
    }

    #[test]
    fn yaw_pitch_direction_round_trip() {
        for &(y, p) in &[(0.0, 0.0), (20.0, -10.0), (-75.0, 30.0), (170.0, 5.0)] {
            let d = direction_from_yaw_pitch(y, p);
            let (y2, p2) = yaw_pitch_of_direction(&d);
            assert!((y - y2).abs() < 1e-9 && (p - p2).abs() < 1e-9);
            let r = Rotation::from_yaw_pitch(y, p);
            assert!((r.apply(&-Vec3::z()) - d).norm() < 1e-12);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn rotation_strategy() -> impl Strategy<Value = Rotation> {
            (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, 0.0f64..3.1)
                .prop_filter("axis", |(x, y, z, _)| x * x + y * y + z * z > 1e-2)
                .prop_map(|(x, y, z, a)| Rotation::from_axis_angle(&Vec3::new(x, y, z), a).unwrap())
        }

        proptest! {
            #[test]
            fn estimate_round_trip(
                s in 0.1f64..10.0,
                r in rotation_strategy(),
                t in prop::array::uniform3(-10.0f64..10.0),
                seed in 0u64..1000,
            ) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let src = random_points(&mut rng, 12);
                let truth = SimilarityTransform::from_parts(s, r, Vec3::from(t)).unwrap();
                let p = estimate_similarity(&src, &apply(&truth, &src)).unwrap();
                prop_assert!((p.scale() - s).abs() < 1e-8);
                prop_assert!((p.rotation().matrix() - r.matrix()).abs().max() < 1e-8);
                prop_assert!((p.translation() - Vec3::from(t)).abs().max() < 1e-8);
            }

            #[test]
            fn decompose_is_exact(
                s in 0.1f64..10.0,
                r in rotation_strategy(),
                t in prop::array::uniform3(-10.0f64..10.0),
            ) {
                let p = SimilarityTransform::from_parts(s, r, Vec3::from(t)).unwrap();
                let (s2, r2, t2) = decompose(p.matrix()).unwrap();
                prop_assert!((s2 - s).abs() < 1e-12 * s.max(1.0));
                prop_assert!((r2.matrix() - r.matrix()).abs().max() < 1e-12);
                prop_assert!((t2 - Vec3::from(t)).abs().max() < 1e-12);
            }

            #[test]
            fn apply_scales_distances(
                s in 0.1f64..10.0,
                r in rotation_strategy(),
                seed in 0u64..1000,
            ) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let pts = random_points(&mut rng, 6);
                let p = SimilarityTransform::from_parts(s, r, Vec3::new(1.0, -2.0, 0.5)).unwrap();
                let out = apply(&p, &pts);
                for i in 0..6 {
                    for j in 0..6 {
                        let din = (pts.points()[i] - pts.points()[j]).norm();
                        let dout = (out.points()[i] - out.points()[j]).norm();
                        prop_assert!((dout - s * din).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
