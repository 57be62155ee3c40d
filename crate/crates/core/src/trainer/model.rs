//! Small MLP regressor decoding to rigid eye poses and a direct gaze.
//!
//! Output layout (23 values): per eye (left, then right) a 6-value rotation
//! residual, a 3-value centre offset in face-frame eye radii and a log-scale
//! correction; then a 3-value residual of the direct gaze head. All residuals
//! are relative to the face-aligned eyeball, so a zero output decodes to the
//! aligned template looking along the face's forward axis.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OcuError, Result};
use crate::gaze::fuse_gaze;
use crate::geometry::{Mat3, Rotation, Vec3};
use crate::labeling::{face_rotation, EyeMesh, EyeMeshPair, EyePose, FaceAnchors};
use crate::losses::Grad;
use crate::synthworld::{feature_of, FEATURE_DIM};
use crate::template::{Side, TemplatePair};

pub const EYE_OUTPUTS: usize = 10;
pub const OUTPUT_DIM: usize = 2 * EYE_OUTPUTS + 3;

/// Scale of the initial output-layer weights relative to the hidden layers.
const OUTPUT_INIT_GAIN: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    /// Layer widths from input to output.
    pub widths: Vec<usize>,
    pub activation: Activation,
}

impl ModelDescriptor {
    /// Feature input, the given hidden widths, decoder output.
    pub fn with_hidden(hidden: &[usize]) -> Self {
        let mut widths = vec![FEATURE_DIM];
        widths.extend_from_slice(hidden);
        widths.push(OUTPUT_DIM);
        ModelDescriptor {
            widths,
            activation: Activation::Tanh,
        }
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(OcuError::param("a model needs at least an input and an output layer"));
        }
        if self.widths.contains(&0) {
            return Err(OcuError::param("layer widths must be positive"));
        }
        Ok(())
    }

    fn validate_decoder(&self) -> Result<()> {
        self.validate()?;
        if *self.widths.last().expect("non-empty") != OUTPUT_DIM {
            return Err(OcuError::param(format!("output width must be {OUTPUT_DIM}")));
        }
        Ok(())
    }
}

impl Default for ModelDescriptor {
    fn default() -> Self {
        ModelDescriptor::with_hidden(&[32, 32])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub descriptor: ModelDescriptor,
    /// Per layer: row-major `out x in` weights, then `out` biases.
    pub params: Vec<f64>,
}

pub fn init_model(descriptor: &ModelDescriptor, seed: u64) -> Result<Model> {
    descriptor.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::with_capacity(descriptor.param_count());
    let layers = descriptor.widths.len() - 1;
    for (l, w) in descriptor.widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let gain = if l + 1 == layers { OUTPUT_INIT_GAIN } else { 1.0 };
        for _ in 0..fan_in * fan_out {
            params.push(gain * rng.random_range(-limit..limit));
        }
        params.extend(std::iter::repeat_n(0.0, fan_out));
    }
    Ok(Model {
        descriptor: descriptor.clone(),
        params,
    })
}

/// Face-aligned reference the decoder is relative to.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignFrame {
    pub face: Rotation,
    pub centers: [Vec3; 2],
    pub scales: [f64; 2],
}

impl AlignFrame {
    pub fn from_anchors(a: &FaceAnchors) -> Result<Self> {
        let face = face_rotation(a)?;
        let scales = [0.5 * a.left.corner_distance(), 0.5 * a.right.corner_distance()];
        if scales.iter().any(|s| !(*s > 0.0)) {
            return Err(OcuError::param("eye corners coincide"));
        }
        Ok(AlignFrame {
            face,
            centers: [a.left.centroid, a.right.centroid],
            scales,
        })
    }
}

/// Everything the model sees of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput {
    pub feature: Vec<f64>,
    pub frame: AlignFrame,
}

impl ModelInput {
    pub fn from_anchors(a: &FaceAnchors) -> Result<Self> {
        Ok(ModelInput {
            feature: feature_of(a)?,
            frame: AlignFrame::from_anchors(a)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Prediction {
    pub eyes: EyeMeshPair,
    /// Fused gaze: left and right mesh gaze, averaged with the direct head.
    pub gaze: Vec3,
    pub eye_gaze: [Vec3; 2],
    pub direct: Vec3,
}

/// Continuous 6-value rotation encoding: first two columns.
pub fn encode_rotation(r: &Rotation) -> [f64; 6] {
    let m = r.matrix();
    [m[(0, 0)], m[(1, 0)], m[(2, 0)], m[(0, 1)], m[(1, 1)], m[(2, 1)]]
}

struct GramSchmidt {
    a1_norm: f64,
    u_norm: f64,
    a2: Vec3,
    b: [Vec3; 3],
}

fn gram_schmidt(a1: Vec3, a2: Vec3) -> Result<GramSchmidt> {
    let a1_norm = a1.norm();
    if !(a1_norm > 1e-12) {
        return Err(OcuError::Degenerate("rotation encoding has a zero first column".into()));
    }
    let b1 = a1 / a1_norm;
    let u = a2 - b1 * b1.dot(&a2);
    let u_norm = u.norm();
    if !(u_norm > 1e-12) {
        return Err(OcuError::Degenerate("rotation encoding columns are parallel".into()));
    }
    let b2 = u / u_norm;
    Ok(GramSchmidt {
        a1_norm,
        u_norm,
        a2,
        b: [b1, b2, b1.cross(&b2)],
    })
}

impl GramSchmidt {
    fn rotation(&self) -> Rotation {
        Rotation::from_matrix_unchecked(Mat3::from_columns(&self.b))
    }

    /// Gradient with respect to `(a1, a2)` given the gradient with respect to R.
    fn backward(&self, g: &Mat3) -> (Vec3, Vec3) {
        let [b1, b2, _] = self.b;
        let (g1, g2, g3) = (g.column(0).into_owned(), g.column(1).into_owned(), g.column(2).into_owned());
        // b3 = b1 x b2
        let gb1 = g1 + b2.cross(&g3);
        let gb2 = g2 + g3.cross(&b1);
        // b2 = u / |u|, u = a2 - (b1 . a2) b1
        let gu = (gb2 - b2 * b2.dot(&gb2)) / self.u_norm;
        let ga2 = gu - b1 * b1.dot(&gu);
        let gb1 = gb1 - self.a2 * b1.dot(&gu) - gu * b1.dot(&self.a2);
        // b1 = a1 / |a1|
        let ga1 = (gb1 - b1 * b1.dot(&gb1)) / self.a1_norm;
        (ga1, ga2)
    }
}

/// Inverse of [`encode_rotation`]: Gram-Schmidt on the two columns.
pub fn decode_rotation(r6: &[f64; 6]) -> Result<Rotation> {
    let gs = gram_schmidt(Vec3::new(r6[0], r6[1], r6[2]), Vec3::new(r6[3], r6[4], r6[5]))?;
    Ok(gs.rotation())
}

fn normalize_with_norm(v: Vec3, what: &str) -> Result<(Vec3, f64)> {
    let n = v.norm();
    if !(n > 1e-12) || !n.is_finite() {
        return Err(OcuError::Degenerate(format!("{what} has zero length")));
    }
    Ok((v / n, n))
}

/// Gradient through `y = x / |x|`.
fn normalize_backward(y: &Vec3, norm: f64, g: &Vec3) -> Vec3 {
    (g - y * y.dot(g)) / norm
}

struct EyeTrace {
    gs: GramSchmidt,
    rotation: Rotation,
    scale: f64,
}

/// Intermediate values kept for the backward pass.
pub struct Trace {
    activations: Vec<Vec<f64>>,
    eyes: [EyeTrace; 2],
    direct_norm: f64,
    sum_eyes_norm: f64,
    fused_pre_norm: f64,
    mesh_mean: Vec3,
}

impl Model {
    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn mlp(&self, input: &[f64]) -> Result<Vec<Vec<f64>>> {
        if input.len() != self.descriptor.input_dim() {
            return Err(OcuError::param(format!(
                "feature has {} values, model expects {}",
                input.len(),
                self.descriptor.input_dim()
            )));
        }
        let mut acts = vec![input.to_vec()];
        let mut off = 0;
        let layers = self.descriptor.widths.len() - 1;
        for (l, w) in self.descriptor.widths.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[off..off + n_in * n_out];
            let bias = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let x = acts.last().expect("input layer");
            let mut y = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let row = &weights[o * n_in..(o + 1) * n_in];
                let z = bias[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                y.push(if l + 1 == layers { z } else { z.tanh() });
            }
            acts.push(y);
        }
        Ok(acts)
    }

    /// Raw network output for a feature vector.
    pub fn output(&self, feature: &[f64]) -> Result<Vec<f64>> {
        Ok(self.mlp(feature)?.pop().expect("output layer"))
    }

    pub fn forward(&self, input: &ModelInput, templates: &TemplatePair) -> Result<Prediction> {
        Ok(self.forward_traced(input, templates)?.0)
    }

    pub fn forward_traced(&self, input: &ModelInput, templates: &TemplatePair) -> Result<(Prediction, Trace)> {
        self.descriptor.validate_decoder()?;
        let acts = self.mlp(&input.feature)?;
        let out = acts.last().expect("output layer");
        let f = &input.frame;
        let axis = templates.left.optical_axis;
        let mut meshes = Vec::with_capacity(2);
        let mut eye_traces = Vec::with_capacity(2);
        let mut eye_gaze = [Vec3::zeros(); 2];
        for (k, side) in [Side::Left, Side::Right].into_iter().enumerate() {
            let o = &out[k * EYE_OUTPUTS..(k + 1) * EYE_OUTPUTS];
            let gs = gram_schmidt(
                Vec3::new(1.0 + o[0], o[1], o[2]),
                Vec3::new(o[3], 1.0 + o[4], o[5]),
            )?;
            let rotation = f.face * gs.rotation();
            let center = f.centers[k] + f.face.apply(&Vec3::new(o[6], o[7], o[8])) * f.scales[k];
            let scale = f.scales[k] * o[9].exp();
            if !scale.is_finite() || !center.iter().all(|c| c.is_finite()) {
                return Err(OcuError::Training("model produced a non-finite eye pose".into()));
            }
            meshes.push(EyeMesh::from_pose(
                templates.get(side).clone(),
                EyePose {
                    center,
                    scale,
                    rotation,
                },
            ));
            eye_gaze[k] = rotation.apply(&axis);
            eye_traces.push(EyeTrace {
                gs,
                rotation,
                scale,
            });
        }
        let d = &out[2 * EYE_OUTPUTS..];
        let (direct, direct_norm) = normalize_with_norm(f.face.apply(&(axis + Vec3::new(d[0], d[1], d[2]))), "direct gaze")?;
        let (mesh_mean, sum_eyes_norm) = normalize_with_norm(eye_gaze[0] + eye_gaze[1], "summed eye gaze")?;
        let (gaze, fused_pre_norm) = normalize_with_norm(mesh_mean + direct, "fused gaze")?;
        debug_assert!((gaze - fuse_gaze(&eye_gaze[0], &eye_gaze[1], Some(&direct))?).norm() < 1e-12);

        let right = meshes.pop().expect("two eyes");
        let left = meshes.pop().expect("two eyes");
        let er = eye_traces.pop().expect("two eyes");
        let el = eye_traces.pop().expect("two eyes");
        Ok((
            Prediction {
                eyes: EyeMeshPair::new(left, right)?,
                gaze,
                eye_gaze,
                direct,
            },
            Trace {
                activations: acts,
                eyes: [el, er],
                direct_norm,
                sum_eyes_norm,
                fused_pre_norm,
                mesh_mean,
            },
        ))
    }

    /// Accumulates `dL/dparams` into `out` given the loss gradient with respect
    /// to the prediction (vertex gradients may be empty).
    pub fn backward(
        &self,
        input: &ModelInput,
        pred: &Prediction,
        trace: &Trace,
        grad: &Grad,
        templates: &TemplatePair,
        out: &mut [f64],
    ) {
        let f = &input.frame;
        let axis = templates.left.optical_axis;
        let mut g_out = vec![0.0; OUTPUT_DIM];

        // fused = n(mesh_mean + direct), mesh_mean = n(g_l + g_r)
        let g_pre = normalize_backward(&pred.gaze, trace.fused_pre_norm, &grad.gaze);
        let g_sum = normalize_backward(&trace.mesh_mean, trace.sum_eyes_norm, &g_pre);
        let g_direct = g_pre;

        let vertex_grads = [&grad.left, &grad.right];
        for (k, side) in [Side::Left, Side::Right].into_iter().enumerate() {
            let et = &trace.eyes[k];
            let tpl = &templates.get(side).vertices;
            let mut m = Mat3::zeros();
            let mut g_center = Vec3::zeros();
            for (gv, t) in vertex_grads[k].iter().zip(tpl) {
                m += gv * t.transpose();
                g_center += gv;
            }
            let r = et.rotation.matrix();
            let g_scale = r.component_mul(&m).sum();
            // gaze_k = R a
            let g_rot = m * et.scale + g_sum * axis.transpose();
            let g_rd = f.face.matrix().transpose() * g_rot;
            let (ga1, ga2) = et.gs.backward(&g_rd);
            let g_delta = f.face.matrix().transpose() * g_center * f.scales[k];
            let o = &mut g_out[k * EYE_OUTPUTS..(k + 1) * EYE_OUTPUTS];
            o[0..3].copy_from_slice(ga1.as_slice());
            o[3..6].copy_from_slice(ga2.as_slice());
            o[6..9].copy_from_slice(g_delta.as_slice());
            o[9] = g_scale * et.scale;
        }
        let g_u = normalize_backward(&pred.direct, trace.direct_norm, &g_direct);
        let g_o = f.face.matrix().transpose() * g_u;
        g_out[2 * EYE_OUTPUTS..].copy_from_slice(g_o.as_slice());

        self.mlp_backward(&trace.activations, g_out, out);
    }

    fn mlp_backward(&self, acts: &[Vec<f64>], mut g: Vec<f64>, out: &mut [f64]) {
        let widths = &self.descriptor.widths;
        let layers = widths.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for w in widths.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        for l in (0..layers).rev() {
            let (n_in, n_out) = (widths[l], widths[l + 1]);
            if l + 1 != layers {
                // through tanh: d tanh = 1 - y^2
                for (gi, y) in g.iter_mut().zip(&acts[l + 1]) {
                    *gi *= 1.0 - y * y;
                }
            }
            let x = &acts[l];
            let base = offsets[l];
            for o in 0..n_out {
                let row = &mut out[base + o * n_in..base + (o + 1) * n_in];
                for (r, xi) in row.iter_mut().zip(x) {
                    *r += g[o] * xi;
                }
                out[base + n_in * n_out + o] += g[o];
            }
            if l > 0 {
                let weights = &self.params[base..base + n_in * n_out];
                let mut g_in = vec![0.0; n_in];
                for o in 0..n_out {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    for (gi, w) in g_in.iter_mut().zip(row) {
                        *gi += g[o] * w;
                    }
                }
                g = g_in;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaze::gaze_from_mesh;
    use crate::labeling::{align_eyeball, verify_rigidity};
    use crate::synthworld::{generate, SceneConfig};
    use proptest::prelude::*;

    fn sample_input() -> (ModelInput, crate::labeling::FaceAnchors) {
        let s = generate(&SceneConfig {
            seed: 1,
            n_samples: 1,
            iris_noise_px: 1.0,
            anchor_noise: 0.3,
            ..SceneConfig::default()
        })
        .unwrap()
        .remove(0);
        (ModelInput::from_anchors(&s.anchors).unwrap(), s.anchors)
    }

    #[test]
    fn init_is_deterministic_and_sized() {
        let d = ModelDescriptor::default();
        assert_eq!(init_model(&d, 3).unwrap(), init_model(&d, 3).unwrap());
        assert_ne!(init_model(&d, 3).unwrap().params, init_model(&d, 4).unwrap().params);
        let w = ModelDescriptor {
            widths: vec![24, 32, OUTPUT_DIM],
            activation: Activation::Tanh,
        };
        assert_eq!(w.param_count(), 24 * 32 + 32 + 32 * OUTPUT_DIM + OUTPUT_DIM);
        assert_eq!(init_model(&w, 0).unwrap().param_count(), 24 * 32 + 32 + 32 * 23 + 23);
        let bad = ModelDescriptor {
            widths: vec![14, 0, 23],
            activation: Activation::Tanh,
        };
        assert!(init_model(&bad, 0).is_err());
    }

    #[test]
    fn fresh_model_on_zero_feature_returns_aligned_eyes() {
        let t = TemplatePair::standard();
        let (mut input, anchors) = sample_input();
        input.feature = vec![0.0; FEATURE_DIM];
        let m = init_model(&ModelDescriptor::default(), 7).unwrap();
        let p = m.forward(&input, &t).unwrap();
        let aligned = align_eyeball(&anchors.left, &input.frame.face, t.left.clone()).unwrap();
        for (a, b) in p.eyes.left.vertices().iter().zip(aligned.vertices()) {
            assert!((a - b).norm() < 1e-12);
        }
        let forward = input.frame.face.apply(&Vec3::new(0.0, 0.0, -1.0));
        assert!((p.gaze - forward).norm() < 1e-12);
    }

    #[test]
    fn outputs_are_rigid_and_mesh_gaze_matches() {
        let t = TemplatePair::standard();
        let (input, _) = sample_input();
        let mut m = init_model(&ModelDescriptor::default(), 2).unwrap();
        for p in m.params.iter_mut() {
            *p *= 30.0;
        }
        let p = m.forward(&input, &t).unwrap();
        for (eye, tpl) in [(&p.eyes.left, &t.left), (&p.eyes.right, &t.right)] {
            assert!(verify_rigidity(eye, tpl).unwrap() < 1e-6 * eye.scale());
        }
        assert!((gaze_from_mesh(&p.eyes.left).unwrap() - p.eye_gaze[0]).norm() < 1e-9);
        assert!((p.gaze.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let t = TemplatePair::standard();
        let (mut input, _) = sample_input();
        input.feature.pop();
        let m = init_model(&ModelDescriptor::default(), 2).unwrap();
        assert!(matches!(m.forward(&input, &t), Err(OcuError::Parameter(_))));
    }

    #[test]
    fn gram_schmidt_backward_matches_finite_differences() {
        let a1 = Vec3::new(0.9, 0.2, -0.3);
        let a2 = Vec3::new(0.1, 1.2, 0.4);
        let g = Mat3::new(0.3, -1.0, 0.5, 0.7, 0.2, -0.4, 1.1, 0.0, 0.6);
        let f = |a1: Vec3, a2: Vec3| gram_schmidt(a1, a2).unwrap().rotation().matrix().component_mul(&g).sum();
        let (ga1, ga2) = gram_schmidt(a1, a2).unwrap().backward(&g);
        let h = 1e-6;
        for c in 0..3 {
            let mut e = Vec3::zeros();
            e[c] = h;
            assert!(((f(a1 + e, a2) - f(a1 - e, a2)) / (2.0 * h) - ga1[c]).abs() < 1e-8);
            assert!(((f(a1, a2 + e) - f(a1, a2 - e)) / (2.0 * h) - ga2[c]).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn rotation_encoding_round_trips(yaw in -180.0f64..180.0, pitch in -89.0f64..89.0, roll in -180.0f64..180.0) {
            let r = Rotation::from_yaw_pitch(yaw, pitch) * Rotation::about_z(roll);
            let back = decode_rotation(&encode_rotation(&r)).unwrap();
            prop_assert!((back.matrix() - r.matrix()).abs().max() < 1e-9);
        }
    }
}
