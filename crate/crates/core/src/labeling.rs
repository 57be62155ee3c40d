//! Eye meshes posed from iris landmarks.
//!
//! Two label sources are supported:
//! * ground truth: iris landmarks plus a known gaze direction give the exact
//!   eyeball pose ([`fit_gt_eyeball`]);
//! * pseudo ground truth: 3D face anchors plus 2D iris landmarks, no gaze
//!   ([`pseudo_label`]). The template is aligned to the face, the iris centre
//!   is lifted onto the nearest anterior vertex in image xy, and the aligned
//!   eyeball is rotated so its iris passes through the lifted point.
//!
//! Image space is orthographic: x and y are pixels, z is depth.

use std::sync::Arc;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{OcuError, Result};
use crate::gaze::{fuse_gaze, gaze_from_mesh};
use crate::geometry::{estimate_similarity, rotation_between, PointSet, Rotation, Vec3};
use crate::template::{EyeballTemplate, Region, Side, TemplatePair};

pub type Vec2 = Vector2<f64>;

/// Rigid similarity pose of a template: `v = center + scale * R * v_template`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EyePose {
    pub center: Vec3,
    pub scale: f64,
    pub rotation: Rotation,
}

impl EyePose {
    pub fn place(&self, v: &Vec3) -> Vec3 {
        self.center + self.rotation.apply(v) * self.scale
    }
}

/// Posed eyeball sharing the triangulation of its template.
#[derive(Clone, Debug)]
pub struct EyeMesh {
    template: Arc<EyeballTemplate>,
    vertices: Vec<Vec3>,
    pose: Option<EyePose>,
}

impl EyeMesh {
    pub fn from_pose(template: Arc<EyeballTemplate>, pose: EyePose) -> Self {
        let vertices = template.vertices.iter().map(|v| pose.place(v)).collect();
        EyeMesh {
            template,
            vertices,
            pose: Some(pose),
        }
    }

    /// Raw vertices without a stored pose (centre falls back to a sphere fit).
    pub fn from_vertices(template: Arc<EyeballTemplate>, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != template.vertex_count() {
            return Err(OcuError::param(format!(
                "expected {} vertices, got {}",
                template.vertex_count(),
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(OcuError::param("mesh vertices must be finite"));
        }
        Ok(EyeMesh {
            template,
            vertices,
            pose: None,
        })
    }

    pub fn side(&self) -> Side {
        self.template.side
    }

    pub fn template(&self) -> &Arc<EyeballTemplate> {
        &self.template
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn pose(&self) -> Option<&EyePose> {
        self.pose.as_ref()
    }

    /// Eyeball centre: the stored pose centre, else the least-squares sphere centre.
    pub fn center(&self) -> Vec3 {
        match &self.pose {
            Some(p) => p.center,
            None => fit_sphere(&self.vertices).map(|(c, _)| c).unwrap_or_else(|| {
                self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64
            }),
        }
    }

    pub fn scale(&self) -> f64 {
        match &self.pose {
            Some(p) => p.scale,
            None => fit_sphere(&self.vertices).map(|(_, r)| r).unwrap_or(1.0),
        }
    }

    /// Per-triangle edge lengths in the order (v0v1, v1v2, v2v0): `3 * N_t` values.
    pub fn edge_lengths(&self) -> Vec<f64> {
        let v = &self.vertices;
        self.template
            .triangles
            .iter()
            .flat_map(|&[a, b, c]| {
                [(v[b] - v[a]).norm(), (v[c] - v[b]).norm(), (v[a] - v[c]).norm()]
            })
            .collect()
    }

    /// Rotates the mesh by `q` about its own centre.
    pub fn rotated_about_center(&self, q: &Rotation) -> EyeMesh {
        let c = self.center();
        match &self.pose {
            Some(p) => EyeMesh::from_pose(
                self.template.clone(),
                EyePose {
                    center: p.center,
                    scale: p.scale,
                    rotation: *q * p.rotation,
                },
            ),
            None => EyeMesh {
                template: self.template.clone(),
                vertices: self.vertices.iter().map(|v| c + q.apply(&(v - c))).collect(),
                pose: None,
            },
        }
    }

    /// Maps the mesh through a similarity transform, keeping the pose in sync.
    pub fn transformed(&self, p: &crate::geometry::SimilarityTransform) -> EyeMesh {
        match &self.pose {
            Some(pose) => EyeMesh::from_pose(
                self.template.clone(),
                EyePose {
                    center: p.apply_point(&pose.center),
                    scale: p.scale() * pose.scale,
                    rotation: p.rotation() * pose.rotation,
                },
            ),
            None => EyeMesh {
                template: self.template.clone(),
                vertices: self.vertices.iter().map(|v| p.apply_point(v)).collect(),
                pose: None,
            },
        }
    }
}

/// Algebraic least-squares sphere through `pts`: returns (centre, radius).
fn fit_sphere(pts: &[Vec3]) -> Option<(Vec3, f64)> {
    let mut ata = Matrix4::<f64>::zeros();
    let mut atb = Vector4::<f64>::zeros();
    for p in pts {
        let row = Vector4::new(2.0 * p.x, 2.0 * p.y, 2.0 * p.z, 1.0);
        ata += row * row.transpose();
        atb += row * p.norm_squared();
    }
    let sol = ata.lu().solve(&atb)?;
    let c = Vec3::new(sol[0], sol[1], sol[2]);
    let r2 = sol[3] + c.norm_squared();
    (r2 > 0.0).then(|| (c, r2.sqrt()))
}

#[derive(Clone, Debug)]
pub struct EyeMeshPair {
    pub left: EyeMesh,
    pub right: EyeMesh,
}

impl EyeMeshPair {
    pub fn new(left: EyeMesh, right: EyeMesh) -> Result<Self> {
        if left.side() != Side::Left || right.side() != Side::Right {
            return Err(OcuError::param("eye mesh pair must be (left, right)"));
        }
        Ok(EyeMeshPair { left, right })
    }

    pub fn get(&self, side: Side) -> &EyeMesh {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn eyes(&self) -> [&EyeMesh; 2] {
        [&self.left, &self.right]
    }

    pub fn transformed(&self, p: &crate::geometry::SimilarityTransform) -> EyeMeshPair {
        EyeMeshPair {
            left: self.left.transformed(p),
            right: self.right.transformed(p),
        }
    }

    pub fn rotated_about_centers(&self, q: &Rotation) -> EyeMeshPair {
        EyeMeshPair {
            left: self.left.rotated_about_center(q),
            right: self.right.rotated_about_center(q),
        }
    }
}

/// 3D landmarks of one eye region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EyeAnchors {
    /// Inner and outer eye corners.
    pub corners: [Vec3; 2],
    /// Eye-region centroid (taken as the eyeball centre).
    pub centroid: Vec3,
}

impl EyeAnchors {
    pub fn corner_distance(&self) -> f64 {
        (self.corners[1] - self.corners[0]).norm()
    }
}

/// Observations of one face: 3D eye anchors, 2D iris landmarks and an
/// optional gaze label.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceAnchors {
    pub left: EyeAnchors,
    pub right: EyeAnchors,
    pub iris_left: Vec<Vec2>,
    pub iris_right: Vec<Vec2>,
    pub gaze: Option<Vec3>,
}

impl FaceAnchors {
    pub fn eye(&self, side: Side) -> &EyeAnchors {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn iris(&self, side: Side) -> &[Vec2] {
        match side {
            Side::Left => &self.iris_left,
            Side::Right => &self.iris_right,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelDiagnostics {
    /// Correction applied to the aligned eyeball, degrees, `[left, right]`.
    pub correction_angle: [f64; 2],
    /// Mean xy distance between iris landmarks and their lifted vertices.
    pub lift_residual: [f64; 2],
    pub warnings: Vec<String>,
}

fn centroid2(pts: &[Vec2]) -> Vec2 {
    pts.iter().sum::<Vec2>() / pts.len() as f64
}

fn rms_radius(pts: &[Vec2]) -> f64 {
    let c = centroid2(pts);
    (pts.iter().map(|p| (p - c).norm_squared()).sum::<f64>() / pts.len() as f64).sqrt()
}

fn check_landmarks(iris: &[Vec2]) -> Result<()> {
    if iris.len() < 3 {
        return Err(OcuError::Fit(format!(
            "need at least 3 iris landmarks, got {}",
            iris.len()
        )));
    }
    if iris.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(OcuError::Fit("iris landmarks must be finite".into()));
    }
    let c = centroid2(iris);
    let cov = iris
        .iter()
        .map(|p| (p - c) * (p - c).transpose())
        .sum::<Matrix2<f64>>();
    let eig = cov.symmetric_eigen().eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(hi > 0.0) || lo <= 1e-12 * hi {
        return Err(OcuError::Fit("iris landmarks are collinear or duplicated".into()));
    }
    Ok(())
}

/// Places the template so that its iris border projects onto `iris_2d`
/// while looking along `gaze`.
///
/// The orientation is the minimal rotation from the optical axis to `gaze`.
/// Scale is the ratio of the landmarks' RMS radius to the RMS radius of the
/// template's iris border projected under that orientation (foreshortening
/// included). The eyeball centre sits behind the landmark centroid so that
/// the iris border centroid projects onto it, with the apex at depth 0.
pub fn fit_gt_eyeball(iris_2d: &[Vec2], gaze: &Vec3, template: Arc<EyeballTemplate>) -> Result<EyeMesh> {
    let n = gaze.norm();
    if !n.is_finite() || (n - 1.0).abs() > crate::geometry::PRECONDITION_TOL {
        return Err(OcuError::param(format!("gaze is not a unit vector (norm {n})")));
    }
    check_landmarks(iris_2d)?;
    let gaze = gaze / n;
    let rotation = rotation_between(&template.optical_axis, &gaze)?;

    let border = template.region(Region::IrisBorder);
    if border.len() < 3 {
        return Err(OcuError::Fit("template has no iris border ring".into()));
    }
    let projected: Vec<Vec2> = border
        .iter()
        .map(|&i| rotation.apply(&template.vertices[i]).xy())
        .collect();
    let r_template = rms_radius(&projected);
    if r_template < 1e-9 {
        return Err(OcuError::Fit("iris border is edge-on to the camera".into()));
    }
    let scale = rms_radius(iris_2d) / r_template;
    let m = centroid2(iris_2d);
    let border_offset = rotation.apply(&template.iris_border_centroid()) * scale;
    let apex_offset = rotation.apply(&template.vertices[0]) * scale;
    let center = Vec3::new(m.x - border_offset.x, m.y - border_offset.y, -apex_offset.z);
    Ok(EyeMesh::from_pose(
        template,
        EyePose {
            center,
            scale,
            rotation,
        },
    ))
}

/// Face orientation from eye anchors: x runs from the left to the right
/// eyeball centre, forward (-z) points from the eyeball centres towards the
/// eye corners.
pub fn face_rotation(anchors: &FaceAnchors) -> Result<Rotation> {
    let lateral = anchors.right.centroid - anchors.left.centroid;
    if lateral.norm() < 1e-12 {
        return Err(OcuError::Degenerate("eye centroids coincide".into()));
    }
    let x = lateral.normalize();
    let corners_mid = (anchors.left.corners[0]
        + anchors.left.corners[1]
        + anchors.right.corners[0]
        + anchors.right.corners[1])
        / 4.0;
    let centers_mid = (anchors.left.centroid + anchors.right.centroid) / 2.0;
    let fwd = corners_mid - centers_mid;
    let fwd = fwd - x * x.dot(&fwd);
    if fwd.norm() < 1e-12 {
        return Err(OcuError::Degenerate(
            "eye corners give no forward direction".into(),
        ));
    }
    let z = -fwd.normalize();
    let y = z.cross(&x);
    Rotation::from_matrix(nalgebra::Matrix3::from_columns(&[x, y, z]))
        .or_else(|_| Rotation::nearest(&nalgebra::Matrix3::from_columns(&[x, y, z])))
}

/// Template aligned to the face: centred on the eye-region centroid, radius
/// half the corner-to-corner distance, oriented with the face.
pub fn align_eyeball(eye: &EyeAnchors, face: &Rotation, template: Arc<EyeballTemplate>) -> Result<EyeMesh> {
    let scale = 0.5 * eye.corner_distance();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(OcuError::param("eye corners coincide"));
    }
    Ok(EyeMesh::from_pose(
        template,
        EyePose {
            center: eye.centroid,
            scale,
            rotation: *face,
        },
    ))
}

/// Anterior-facing vertices: outward normal pointing at the camera (z < 0).
fn anterior_vertices(mesh: &EyeMesh) -> Vec<usize> {
    let c = mesh.center();
    mesh.vertices()
        .iter()
        .enumerate()
        .filter(|(_, v)| (*v - c).z < 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Nearest anterior vertex in image xy for each point; ties go to the lower index.
pub fn lift_to_3d(points_2d: &[Vec2], mesh: &EyeMesh) -> (Vec<usize>, Vec<Vec3>) {
    let candidates = anterior_vertices(mesh);
    let verts = mesh.vertices();
    let idx: Vec<usize> = points_2d
        .iter()
        .map(|p| {
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for &i in &candidates {
                let d = (verts[i].xy() - p).norm_squared();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            best
        })
        .collect();
    let pts = idx.iter().map(|&i| verts[i]).collect();
    (idx, pts)
}

/// Result of the per-eye pseudo-label pipeline.
#[derive(Clone, Debug)]
pub struct EyeCorrection {
    pub mesh: EyeMesh,
    pub correction_angle: f64,
    pub lift_residual: f64,
    pub warning: Option<String>,
}

/// Aligns, lifts and corrects one eye.
///
/// The landmark centroid is the projection of the iris border centre, which
/// lies inside the sphere. It is pushed out along its ray from the eyeball
/// centre to the surface point the iris axis passes through before lifting.
pub fn correct_eye(
    eye: &EyeAnchors,
    iris_2d: &[Vec2],
    face: &Rotation,
    template: Arc<EyeballTemplate>,
) -> Result<EyeCorrection> {
    check_landmarks(iris_2d).map_err(|e| OcuError::param(e.to_string()))?;
    let aligned = align_eyeball(eye, face, template.clone())?;
    let pose = *aligned.pose().expect("aligned meshes carry a pose");
    let c2 = pose.center.xy();

    let border_depth = template.iris_border_centroid().norm();
    let m = centroid2(iris_2d);
    let iris_center_2d = c2 + (m - c2) / border_depth;

    let mut warning = None;
    if (iris_center_2d - c2).norm() > pose.scale {
        warning = Some(format!(
            "{} iris centre lies outside the eyeball footprint; using nearest boundary vertex",
            template.side
        ));
    }

    let (_, lifted_center) = lift_to_3d(&[iris_center_2d], &aligned);
    let (_, lifted_landmarks) = lift_to_3d(iris_2d, &aligned);
    let lift_residual = iris_2d
        .iter()
        .zip(&lifted_landmarks)
        .map(|(p, v)| (v.xy() - p).norm())
        .sum::<f64>()
        / iris_2d.len() as f64;

    let aligned_dir = (pose.place(&template.iris_centroid()) - pose.center).normalize();
    let lifted_dir = (lifted_center[0] - pose.center).normalize();
    let correction = rotation_between(&aligned_dir, &lifted_dir)?;
    let correction_angle = crate::gaze::angular_error(&aligned_dir, &lifted_dir)?;

    let mesh = EyeMesh::from_pose(
        template,
        EyePose {
            center: pose.center,
            scale: pose.scale,
            rotation: correction * pose.rotation,
        },
    );
    Ok(EyeCorrection {
        mesh,
        correction_angle,
        lift_residual,
        warning,
    })
}

/// Pseudo ground-truth eye meshes from face anchors and 2D iris landmarks.
pub fn pseudo_label(anchors: &FaceAnchors, templates: &TemplatePair) -> Result<(EyeMeshPair, PseudoLabelDiagnostics)> {
    for side in [Side::Left, Side::Right] {
        if anchors.iris(side).is_empty() {
            return Err(OcuError::param(format!("missing {side} iris landmarks")));
        }
    }
    let face = face_rotation(anchors)?;
    let mut diag = PseudoLabelDiagnostics::default();
    let mut meshes = Vec::with_capacity(2);
    for (k, side) in [Side::Left, Side::Right].into_iter().enumerate() {
        let eye = correct_eye(
            anchors.eye(side),
            anchors.iris(side),
            &face,
            templates.get(side).clone(),
        )?;
        diag.correction_angle[k] = eye.correction_angle;
        diag.lift_residual[k] = eye.lift_residual;
        diag.warnings.extend(eye.warning);
        meshes.push(eye.mesh);
    }
    let right = meshes.pop().expect("two eyes");
    let left = meshes.pop().expect("two eyes");
    Ok((EyeMeshPair::new(left, right)?, diag))
}

/// Combined gaze of a mesh pair (sum of per-eye gaze, renormalized).
pub fn pair_gaze(pair: &EyeMeshPair) -> Result<Vec3> {
    fuse_gaze(&gaze_from_mesh(&pair.left)?, &gaze_from_mesh(&pair.right)?, None)
}

/// Eye meshes plus the gaze they encode: the supervision target of one sample.
#[derive(Clone, Debug)]
pub struct GazeLabel {
    pub eyes: EyeMeshPair,
    pub gaze: Vec3,
}

impl GazeLabel {
    /// Label whose gaze is derived from the meshes themselves.
    pub fn from_eyes(eyes: EyeMeshPair) -> Result<Self> {
        let gaze = pair_gaze(&eyes)?;
        Ok(GazeLabel { eyes, gaze })
    }

    pub fn transformed(&self, p: &crate::geometry::SimilarityTransform) -> GazeLabel {
        GazeLabel {
            eyes: self.eyes.transformed(p),
            gaze: p.rotation().apply(&self.gaze),
        }
    }
}

/// RMS residual of the best similarity fit of the template onto `mesh`.
pub fn verify_rigidity(mesh: &EyeMesh, template: &EyeballTemplate) -> Result<f64> {
    if mesh.side() != template.side {
        return Err(OcuError::param("mesh and template sides differ"));
    }
    if mesh.vertices().len() != template.vertex_count() {
        return Err(OcuError::param("mesh and template vertex counts differ"));
    }
    let src = PointSet::new(template.vertices.clone())?;
    let dst = PointSet::new(mesh.vertices().to_vec())?;
    let p = estimate_similarity(&src, &dst)?;
    let ss: f64 = src
        .points()
        .iter()
        .zip(dst.points())
        .map(|(s, d)| (p.apply_point(s) - d).norm_squared())
        .sum();
    Ok((ss / src.len() as f64).sqrt())
}
