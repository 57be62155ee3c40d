//! Deterministic synthetic world: subjects with known head pose and gaze,
//! noisy landmark observations, and multi-view pairs with exact transforms.
//!
//! Camera model is orthographic (x, y in pixels, z is depth, the camera looks
//! along +z, so a frontal face has its forward axis at -z). Each sample is
//! drawn from its own ChaCha8 stream keyed by `(seed, index)`, so generation
//! is order-independent and parallel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OcuError, Result};
use crate::geometry::{
    direction_from_yaw_pitch, euler_yaw_pitch, rotation_between, yaw_pitch_of_direction, Rotation,
    SimilarityTransform, Vec3,
};
use crate::labeling::{
    face_rotation, EyeAnchors, EyeMesh, EyeMeshPair, EyePose, FaceAnchors, GazeLabel, Vec2,
};
use crate::template::{EyeballTemplate, Region, Side, TemplatePair};

/// Length of [`feature_of`] output.
pub const FEATURE_DIM: usize = 14;
/// Iris landmarks per eye.
pub const IRIS_LANDMARKS: usize = 8;
/// Half the inter-pupillary distance, in eye radii.
pub const HALF_IPD: f64 = 3.2;
/// Forward offset of the eyeball centres from the head pivot, in eye radii.
pub const EYE_DEPTH: f64 = 4.0;
/// Head-pose clamp applied to novel views.
pub const MAX_VIEW_YAW: f64 = 90.0;
pub const MAX_VIEW_PITCH: f64 = 89.0;

const PAIR_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const CORRUPT_SALT: u64 = 0xc2b2_ae3d_27d4_eb4f;

fn default_n() -> usize {
    1000
}
fn default_yaw() -> [f64; 2] {
    [-90.0, 90.0]
}
fn default_pitch() -> [f64; 2] {
    [-20.0, 20.0]
}
fn default_cone() -> f64 {
    20.0
}
fn default_scale() -> f64 {
    20.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n")]
    pub n_samples: usize,
    /// Head yaw range in degrees.
    #[serde(default = "default_yaw")]
    pub yaw_range: [f64; 2],
    /// When set, head yaw is Gaussian with this sigma (degrees), truncated
    /// to `yaw_range`; otherwise uniform over the range.
    #[serde(default)]
    pub yaw_sigma: Option<f64>,
    #[serde(default = "default_pitch")]
    pub pitch_range: [f64; 2],
    /// Maximum angle between gaze and head-forward, degrees.
    #[serde(default = "default_cone")]
    pub gaze_cone: f64,
    /// Per-coordinate iris landmark noise, pixels.
    #[serde(default)]
    pub iris_noise_px: f64,
    /// Pseudo-label gaze noise, degrees (applied by [`corrupt_pseudo_labels`]).
    #[serde(default)]
    pub pitch_label_noise_deg: f64,
    #[serde(default)]
    pub yaw_label_noise_deg: f64,
    /// Per-coordinate noise on the 3D eye anchors, pixels.
    #[serde(default)]
    pub anchor_noise: f64,
    /// Eyeball radius, pixels.
    #[serde(default = "default_scale")]
    pub eye_scale_px: f64,
    /// Attach the true gaze to the observations as a label.
    #[serde(default)]
    pub labeled: bool,
    /// Draw eye-in-head gaze among template vertex directions inside the cone.
    #[serde(default)]
    pub snap_gaze_to_vertices: bool,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            seed: 0,
            n_samples: default_n(),
            yaw_range: default_yaw(),
            yaw_sigma: None,
            pitch_range: default_pitch(),
            gaze_cone: default_cone(),
            iris_noise_px: 0.0,
            pitch_label_noise_deg: 0.0,
            yaw_label_noise_deg: 0.0,
            anchor_noise: 0.0,
            eye_scale_px: default_scale(),
            labeled: false,
            snap_gaze_to_vertices: false,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let ordered = |r: [f64; 2], lim: f64| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1] && r[0] >= -lim && r[1] <= lim;
        if !ordered(self.yaw_range, 180.0) {
            return Err(OcuError::param("yaw_range must be ordered within [-180, 180]"));
        }
        if !ordered(self.pitch_range, 89.0) {
            return Err(OcuError::param("pitch_range must be ordered within [-89, 89]"));
        }
        if self.yaw_sigma.is_some_and(|s| !(s > 0.0 && s.is_finite())) {
            return Err(OcuError::param("yaw_sigma must be positive"));
        }
        if self.yaw_sigma.is_some() && !(self.yaw_range[0] <= 0.0 && self.yaw_range[1] >= 0.0) {
            return Err(OcuError::param("a Gaussian yaw needs a range containing 0"));
        }
        if !(self.gaze_cone >= 0.0 && self.gaze_cone < 90.0) {
            return Err(OcuError::param("gaze_cone must lie in [0, 90)"));
        }
        for (name, s) in [
            ("iris_noise_px", self.iris_noise_px),
            ("pitch_label_noise_deg", self.pitch_label_noise_deg),
            ("yaw_label_noise_deg", self.yaw_label_noise_deg),
            ("anchor_noise", self.anchor_noise),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(OcuError::param(format!("{name} must be a finite non-negative sigma")));
            }
        }
        if !(self.eye_scale_px > 0.0 && self.eye_scale_px.is_finite()) {
            return Err(OcuError::param("eye_scale_px must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadPose {
    pub yaw: f64,
    pub pitch: f64,
}

impl HeadPose {
    pub fn rotation(&self) -> Rotation {
        Rotation::from_yaw_pitch(self.yaw, self.pitch)
    }
}

/// One draw of observation noise, kept so that a novel view can reuse it.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationNoise {
    /// `[eye][point]` with points (corner 0, corner 1, centroid).
    pub anchors: [[Vec3; 3]; 2],
    pub iris: [Vec<Vec2>; 2],
}

impl ObservationNoise {
    fn zero() -> Self {
        ObservationNoise {
            anchors: [[Vec3::zeros(); 3]; 2],
            iris: [vec![Vec2::zeros(); IRIS_LANDMARKS], vec![Vec2::zeros(); IRIS_LANDMARKS]],
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticSample {
    pub id: String,
    pub true_gaze: Vec3,
    pub true_eyeballs: EyeMeshPair,
    pub head_pose: HeadPose,
    /// Eye rotation relative to the head.
    pub eye_in_head: Rotation,
    pub eye_scale: f64,
    pub anchors: FaceAnchors,
    pub feature: Vec<f64>,
    pub noise: ObservationNoise,
}

impl SyntheticSample {
    pub fn true_label(&self) -> GazeLabel {
        GazeLabel {
            eyes: self.true_eyeballs.clone(),
            gaze: self.true_gaze,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ViewPair {
    pub view1: SyntheticSample,
    pub view2: SyntheticSample,
    /// Exact view1 -> view2 transform.
    pub p: SimilarityTransform,
}

/// Observable stand-in for image features: per-eye iris offset from the eye
/// centroid divided by eye scale (4), per-eye unit corner axes (6), and sin/cos
/// of the head yaw and pitch read off the face frame (4).
pub fn feature_of(anchors: &FaceAnchors) -> Result<Vec<f64>> {
    let mut f = Vec::with_capacity(FEATURE_DIM);
    for side in [Side::Left, Side::Right] {
        let eye = anchors.eye(side);
        let iris = anchors.iris(side);
        if iris.is_empty() {
            return Err(OcuError::param(format!("missing {side} iris landmarks")));
        }
        let m = iris.iter().sum::<Vec2>() / iris.len() as f64;
        let s = 0.5 * eye.corner_distance();
        if !(s > 0.0) {
            return Err(OcuError::param("eye corners coincide"));
        }
        let off = (m - eye.centroid.xy()) / s;
        f.extend([off.x, off.y]);
    }
    for side in [Side::Left, Side::Right] {
        let e = anchors.eye(side);
        let axis = (e.corners[1] - e.corners[0]) / e.corner_distance();
        f.extend(axis.iter());
    }
    let (yaw, pitch) = euler_yaw_pitch(&face_rotation(anchors)?);
    let (yaw, pitch) = (yaw.to_radians(), pitch.to_radians());
    f.extend([yaw.sin(), yaw.cos(), pitch.sin(), pitch.cos()]);
    Ok(f)
}

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        // still consume a draw so that the stream layout does not depend on ranges
        let _: f64 = rng.random();
        r[0]
    } else {
        r[0] + (r[1] - r[0]) * rng.random::<f64>()
    }
}

/// Zero-mean Gaussian truncated to `r` by rejection.
fn truncated_gaussian(rng: &mut ChaCha8Rng, sigma: f64, r: [f64; 2]) -> f64 {
    loop {
        let x = gaussian(rng, sigma);
        if x >= r[0] && x <= r[1] {
            return x;
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
    sigma * z
}

/// Template vertex directions within `cone` degrees of the optical axis.
fn vertex_directions_in_cone(t: &EyeballTemplate, cone: f64) -> Vec<Vec3> {
    let cos_cone = cone.to_radians().cos();
    t.vertices
        .iter()
        .filter(|v| v.dot(&t.optical_axis) >= cos_cone - 1e-12)
        .copied()
        .collect()
}

fn draw_eye_in_head(rng: &mut ChaCha8Rng, cfg: &SceneConfig, t: &EyeballTemplate) -> Result<Rotation> {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let axis = t.optical_axis;
    let dir = if cfg.snap_gaze_to_vertices {
        let dirs = vertex_directions_in_cone(t, cfg.gaze_cone);
        dirs[((u1 * dirs.len() as f64) as usize).min(dirs.len() - 1)]
    } else {
        // uniform on the spherical cap
        let cos_t = 1.0 - u1 * (1.0 - cfg.gaze_cone.to_radians().cos());
        let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
        let phi = std::f64::consts::TAU * u2;
        Vec3::new(sin_t * phi.cos(), sin_t * phi.sin(), -cos_t)
    };
    rotation_between(&axis, &dir)
}

fn draw_noise(rng: &mut ChaCha8Rng, cfg: &SceneConfig) -> ObservationNoise {
    let mut n = ObservationNoise::zero();
    for eye in 0..2 {
        for p in 0..3 {
            for c in 0..3 {
                n.anchors[eye][p][c] = gaussian(rng, cfg.anchor_noise);
            }
        }
    }
    for eye in 0..2 {
        for k in 0..IRIS_LANDMARKS {
            n.iris[eye][k] = Vec2::new(gaussian(rng, cfg.iris_noise_px), gaussian(rng, cfg.iris_noise_px));
        }
    }
    n
}

/// Builds truth and observations for a subject in a given pose.
fn render(
    id: String,
    head: HeadPose,
    eye_in_head: Rotation,
    scale: f64,
    noise: ObservationNoise,
    labeled: bool,
    templates: &TemplatePair,
) -> Result<SyntheticSample> {
    let r_head = head.rotation();
    let eye_rot = r_head * eye_in_head;
    let mut eyes = Vec::with_capacity(2);
    let mut anchors = Vec::with_capacity(2);
    let mut iris = Vec::with_capacity(2);
    for (k, side) in [Side::Left, Side::Right].into_iter().enumerate() {
        let lateral = if side == Side::Left { -1.0 } else { 1.0 };
        let center = r_head.apply(&Vec3::new(lateral * HALF_IPD * scale, 0.0, -EYE_DEPTH * scale));
        let t = templates.get(side).clone();
        let mesh = EyeMesh::from_pose(
            t.clone(),
            EyePose {
                center,
                scale,
                rotation: eye_rot,
            },
        );
        // corners: inner (towards the nose) first
        let inner = center + r_head.apply(&Vec3::new(-lateral * scale, 0.0, -0.5 * scale));
        let outer = center + r_head.apply(&Vec3::new(lateral * scale, 0.0, -0.5 * scale));
        let n = &noise.anchors[k];
        anchors.push(EyeAnchors {
            corners: [inner + n[0], outer + n[1]],
            centroid: center + n[2],
        });
        let border = t.region(Region::IrisBorder);
        let step = border.len() / IRIS_LANDMARKS;
        iris.push(
            (0..IRIS_LANDMARKS)
                .map(|j| mesh.vertices()[border[j * step]].xy() + noise.iris[k][j])
                .collect::<Vec<_>>(),
        );
        eyes.push(mesh);
    }
    let true_gaze = eye_rot.apply(&templates.left.optical_axis);
    let right = eyes.pop().expect("two eyes");
    let left = eyes.pop().expect("two eyes");
    let iris_right = iris.pop().expect("two eyes");
    let iris_left = iris.pop().expect("two eyes");
    let anchors = FaceAnchors {
        left: anchors[0],
        right: anchors[1],
        iris_left,
        iris_right,
        gaze: labeled.then_some(true_gaze),
    };
    let feature = feature_of(&anchors)?;
    Ok(SyntheticSample {
        id,
        true_gaze,
        true_eyeballs: EyeMeshPair::new(left, right)?,
        head_pose: head,
        eye_in_head,
        eye_scale: scale,
        anchors,
        feature,
        noise,
    })
}

/// Sample `index` of the world described by `cfg`.
pub fn generate_one(cfg: &SceneConfig, index: u64, templates: &TemplatePair) -> Result<SyntheticSample> {
    let mut rng = sample_rng(cfg.seed, index);
    let yaw = match cfg.yaw_sigma {
        Some(sigma) => truncated_gaussian(&mut rng, sigma, cfg.yaw_range),
        None => uniform(&mut rng, cfg.yaw_range),
    };
    let pitch = uniform(&mut rng, cfg.pitch_range);
    let eye_in_head = draw_eye_in_head(&mut rng, cfg, &templates.left)?;
    let noise = draw_noise(&mut rng, cfg);
    render(
        format!("s{}-{index:06}", cfg.seed),
        HeadPose { yaw, pitch },
        eye_in_head,
        cfg.eye_scale_px,
        noise,
        cfg.labeled,
        templates,
    )
}

pub fn generate(cfg: &SceneConfig) -> Result<Vec<SyntheticSample>> {
    cfg.validate()?;
    let templates = TemplatePair::standard();
    (0..cfg.n_samples as u64)
        .into_par_iter()
        .map(|i| generate_one(cfg, i, &templates))
        .collect()
}

/// Second view of the same subject, head turned by the given deltas about
/// the head pivot; eye-in-head rotation and observation noise are kept.
pub fn make_view_pair_with_delta(s: &SyntheticSample, d_yaw: f64, d_pitch: f64) -> Result<ViewPair> {
    if !d_yaw.is_finite() || !d_pitch.is_finite() {
        return Err(OcuError::param("view deltas must be finite"));
    }
    let head2 = HeadPose {
        yaw: (s.head_pose.yaw + d_yaw).clamp(-MAX_VIEW_YAW, MAX_VIEW_YAW),
        pitch: (s.head_pose.pitch + d_pitch).clamp(-MAX_VIEW_PITCH, MAX_VIEW_PITCH),
    };
    let templates = TemplatePair {
        left: s.true_eyeballs.left.template().clone(),
        right: s.true_eyeballs.right.template().clone(),
    };
    let view2 = render(
        format!("{}-v2", s.id),
        head2,
        s.eye_in_head,
        s.eye_scale,
        s.noise.clone(),
        s.anchors.gaze.is_some(),
        &templates,
    )?;
    // the head pivot is the origin, so the transform is a pure rotation
    let r_delta = if head2 == s.head_pose {
        Rotation::identity()
    } else {
        head2.rotation() * s.head_pose.rotation().transpose()
    };
    let p = SimilarityTransform::from_parts(1.0, r_delta, Vec3::zeros())?;
    Ok(ViewPair {
        view1: s.clone(),
        view2,
        p,
    })
}

pub fn make_view_pair(s: &SyntheticSample, delta_sigma_deg: f64, rng: &mut impl Rng) -> Result<ViewPair> {
    let n = Normal::new(0.0, delta_sigma_deg).map_err(|e| OcuError::param(e.to_string()))?;
    let dy = n.sample(rng);
    let dp = n.sample(rng);
    make_view_pair_with_delta(s, dy, dp)
}

/// One view pair per sample, each from its own `(seed, index)` stream.
pub fn make_view_pairs(samples: &[SyntheticSample], delta_sigma_deg: f64, seed: u64) -> Result<Vec<ViewPair>> {
    samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = sample_rng(seed ^ PAIR_SALT, i as u64);
            make_view_pair(s, delta_sigma_deg, &mut rng)
        })
        .collect()
}

/// Perturbs pseudo-label gaze in yaw/pitch with independent Gaussian noise
/// and rotates the label meshes about their centres to match.
pub fn corrupt_pseudo_labels(labels: &[GazeLabel], cfg: &SceneConfig) -> Result<Vec<GazeLabel>> {
    let (sy, sp) = (cfg.yaw_label_noise_deg, cfg.pitch_label_noise_deg);
    if !(sy >= 0.0 && sp >= 0.0 && sy.is_finite() && sp.is_finite()) {
        return Err(OcuError::param("label noise sigmas must be finite and non-negative"));
    }
    labels
        .par_iter()
        .enumerate()
        .map(|(i, l)| {
            let mut rng = sample_rng(cfg.seed ^ CORRUPT_SALT, i as u64);
            let ny = gaussian(&mut rng, sy);
            let np = gaussian(&mut rng, sp);
            if ny == 0.0 && np == 0.0 {
                return Ok(l.clone());
            }
            let (yaw, pitch) = yaw_pitch_of_direction(&l.gaze);
            let g2 = direction_from_yaw_pitch(yaw + ny, (pitch + np).clamp(-89.9, 89.9));
            let q = rotation_between(&l.gaze, &g2)?;
            Ok(GazeLabel {
                eyes: l.eyes.rotated_about_centers(&q),
                gaze: g2,
            })
        })
        .collect()
}
