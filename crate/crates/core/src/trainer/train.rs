//! Mini-batch training on ground-truth, pseudo-label and multi-view sources.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{Model, ModelInput, Prediction};
use crate::error::{OcuError, Result};
use crate::gaze::angular_error;
use crate::geometry::{SimilarityTransform, Vec3};
use crate::labeling::{
    fit_gt_eyeball, pseudo_label, EyeMesh, EyeMeshPair, EyePose, FaceAnchors, GazeLabel, PseudoLabelDiagnostics,
};
use crate::losses::{combined_supervised_loss, mv_loss, LossWeights, ARCCOS_EPS};
use crate::synthworld::{corrupt_pseudo_labels, SceneConfig, SyntheticSample, ViewPair};
use crate::template::{Side, TemplatePair};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub base: f64,
    /// Linear ramp from `base / warmup_epochs` up to `base`.
    pub warmup_epochs: usize,
    /// Epochs at which the step is multiplied by `decay_factor`.
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            base: 1e-2,
            warmup_epochs: 5,
            decay_epochs: vec![60, 90],
            decay_factor: 0.1,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.base > 0.0 && self.base.is_finite()) {
            return Err(OcuError::param("base step must be positive"));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(OcuError::param("decay_factor must lie in (0, 1]"));
        }
        if self.decay_epochs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(OcuError::param("decay epochs must be strictly increasing"));
        }
        if self.decay_epochs.first().is_some_and(|&d| d < self.warmup_epochs) {
            return Err(OcuError::param("decays must start after warmup"));
        }
        Ok(())
    }

    pub fn step(&self, epoch: usize) -> f64 {
        let warm = if epoch < self.warmup_epochs {
            (epoch + 1) as f64 / self.warmup_epochs as f64
        } else {
            1.0
        };
        let decays = self.decay_epochs.iter().filter(|&&d| epoch >= d).count();
        self.base * warm * self.decay_factor.powi(decays as i32)
    }
}

fn default_momentum() -> f64 {
    0.9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    /// Rescales the batch gradient to at most this norm.
    #[serde(default)]
    pub clip_norm: Option<f64>,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default)]
    pub use_gt: bool,
    #[serde(default)]
    pub use_pgt: bool,
    #[serde(default)]
    pub use_mv: bool,
    /// Run the gradient check every this many epochs (recorded in the history).
    #[serde(default)]
    pub grad_check_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            epochs: 100,
            batch_size: 32,
            schedule: Schedule::default(),
            momentum: default_momentum(),
            clip_norm: None,
            weights: LossWeights::default(),
            use_gt: true,
            use_pgt: false,
            use_mv: false,
            grad_check_every: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(OcuError::param("epochs and batch_size must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(OcuError::param("momentum must lie in [0, 1)"));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(OcuError::param("clip_norm must be positive"));
        }
        self.schedule.validate()?;
        self.weights.validate()
    }
}

/// A model input with a mesh-and-gaze target.
#[derive(Clone, Debug)]
pub struct Supervised {
    pub id: String,
    pub input: ModelInput,
    pub target: GazeLabel,
}

/// Two views of one subject and the exact transform between them.
#[derive(Clone, Debug)]
pub struct MultiView {
    pub id: String,
    pub input1: ModelInput,
    pub input2: ModelInput,
    pub p: SimilarityTransform,
}

#[derive(Clone, Debug)]
pub struct EvalSample {
    pub id: String,
    pub input: ModelInput,
    pub true_gaze: Vec3,
    pub head_yaw: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainData {
    pub gt: Vec<Supervised>,
    pub pgt: Vec<Supervised>,
    pub mv: Vec<MultiView>,
}

fn place_at_depth(mesh: EyeMesh, z: f64) -> EyeMesh {
    let pose = *mesh.pose().expect("fitted meshes carry a pose");
    EyeMesh::from_pose(
        mesh.template().clone(),
        EyePose {
            center: Vec3::new(pose.center.x, pose.center.y, z),
            ..pose
        },
    )
}

/// Ground-truth target of one observation: eyeballs fitted to the iris
/// landmarks and the gaze label. Landmarks fix only image xy, so each fitted
/// eyeball is moved along the viewing axis to the depth of its 3D eye anchor.
pub fn gt_target(anchors: &FaceAnchors, templates: &TemplatePair) -> Result<GazeLabel> {
    let gaze = anchors
        .gaze
        .ok_or_else(|| OcuError::param("observation has no gaze label"))?;
    let mut eyes = Vec::with_capacity(2);
    for side in [Side::Left, Side::Right] {
        let fit = fit_gt_eyeball(anchors.iris(side), &gaze, templates.get(side).clone())?;
        eyes.push(place_at_depth(fit, anchors.eye(side).centroid.z));
    }
    let right = eyes.pop().expect("two eyes");
    let left = eyes.pop().expect("two eyes");
    Ok(GazeLabel {
        eyes: EyeMeshPair::new(left, right)?,
        gaze,
    })
}

/// Pseudo-label target of one observation, without label noise.
pub fn pseudo_target(anchors: &FaceAnchors, templates: &TemplatePair) -> Result<(GazeLabel, PseudoLabelDiagnostics)> {
    let (eyes, diag) = pseudo_label(anchors, templates)?;
    Ok((GazeLabel::from_eyes(eyes)?, diag))
}

pub fn gt_examples(samples: &[SyntheticSample], templates: &TemplatePair) -> Result<Vec<Supervised>> {
    samples
        .par_iter()
        .map(|s| {
            if s.anchors.gaze.is_none() {
                return Err(OcuError::param(format!("sample {} has no gaze label", s.id)));
            }
            let target = gt_target(&s.anchors, templates)?;
            Ok(Supervised {
                id: s.id.clone(),
                input: ModelInput::from_anchors(&s.anchors)?,
                target,
            })
        })
        .collect()
}

/// Pseudo-label targets from anchors and iris landmarks alone, with the
/// world's label noise applied.
pub fn pseudo_examples(samples: &[SyntheticSample], cfg: &SceneConfig, templates: &TemplatePair) -> Result<Vec<Supervised>> {
    let labels: Vec<GazeLabel> = samples
        .par_iter()
        .map(|s| Ok(pseudo_target(&s.anchors, templates)?.0))
        .collect::<Result<_>>()?;
    let labels = corrupt_pseudo_labels(&labels, cfg)?;
    samples
        .par_iter()
        .zip(labels)
        .map(|(s, target)| {
            Ok(Supervised {
                id: s.id.clone(),
                input: ModelInput::from_anchors(&s.anchors)?,
                target,
            })
        })
        .collect()
}

pub fn mv_examples(pairs: &[ViewPair]) -> Result<Vec<MultiView>> {
    pairs
        .par_iter()
        .map(|p| {
            Ok(MultiView {
                id: p.view1.id.clone(),
                input1: ModelInput::from_anchors(&p.view1.anchors)?,
                input2: ModelInput::from_anchors(&p.view2.anchors)?,
                p: p.p,
            })
        })
        .collect()
}

pub fn eval_examples(samples: &[SyntheticSample]) -> Result<Vec<EvalSample>> {
    samples
        .par_iter()
        .map(|s| {
            Ok(EvalSample {
                id: s.id.clone(),
                input: ModelInput::from_anchors(&s.anchors)?,
                true_gaze: s.true_gaze,
                head_yaw: s.head_pose.yaw,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub step: f64,
    pub loss_gt: Option<f64>,
    pub loss_pgt: Option<f64>,
    pub loss_mv: Option<f64>,
    /// Weighted sum of the per-source mean losses.
    pub loss_total: f64,
    pub val_error: Option<f64>,
    pub grad_check: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn final_val_error(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.val_error)
    }
}

fn supervised_grad(
    m: &Model,
    s: &Supervised,
    w: &LossWeights,
    t: &TemplatePair,
    out: &mut [f64],
) -> Result<f64> {
    let (pred, trace) = m.forward_traced(&s.input, t)?;
    let l = combined_supervised_loss(&pred.eyes, &pred.gaze, &s.target.eyes, &s.target.gaze, w)?;
    m.backward(&s.input, &pred, &trace, &l.grad, t, out);
    Ok(l.value)
}

fn mv_grad(m: &Model, s: &MultiView, w: &LossWeights, t: &TemplatePair, out: &mut [f64]) -> Result<f64> {
    let (p1, t1) = m.forward_traced(&s.input1, t)?;
    let (p2, t2) = m.forward_traced(&s.input2, t)?;
    let l = mv_loss(&p1.eyes, &p1.gaze, &p2.eyes, &p2.gaze, &s.p, w)?;
    m.backward(&s.input1, &p1, &t1, &l.grad1, t, out);
    m.backward(&s.input2, &p2, &t2, &l.grad2, t, out);
    Ok(l.value)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Source {
    Gt,
    Pgt,
    Mv,
}

/// Mean loss and gradient over a batch; per-sample gradients are computed in
/// parallel and summed in index order.
fn batch_grad(
    m: &Model,
    data: &TrainData,
    source: Source,
    idx: &[usize],
    w: &LossWeights,
    t: &TemplatePair,
) -> Result<(f64, Vec<f64>)> {
    let n = m.param_count();
    let parts: Vec<(f64, Vec<f64>)> = idx
        .par_iter()
        .map(|&i| {
            let mut g = vec![0.0; n];
            let v = match source {
                Source::Gt => supervised_grad(m, &data.gt[i], w, t, &mut g)?,
                Source::Pgt => supervised_grad(m, &data.pgt[i], w, t, &mut g)?,
                Source::Mv => mv_grad(m, &data.mv[i], w, t, &mut g)?,
            };
            Ok((v, g))
        })
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    let mut grad = vec![0.0; n];
    for (v, g) in &parts {
        total += v;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    let k = idx.len() as f64;
    grad.iter_mut().for_each(|g| *g /= k);
    Ok((total / k, grad))
}

pub fn evaluate(m: &Model, samples: &[EvalSample], t: &TemplatePair) -> Result<Vec<(f64, f64)>> {
    samples
        .par_iter()
        .map(|s| {
            let p = m.forward(&s.input, t)?;
            Ok((s.head_yaw, angular_error(&p.gaze, &s.true_gaze)?))
        })
        .collect()
}

pub fn mean_error(m: &Model, samples: &[EvalSample], t: &TemplatePair) -> Result<f64> {
    let e = evaluate(m, samples, t)?;
    Ok(e.iter().map(|x| x.1).sum::<f64>() / e.len().max(1) as f64)
}

pub fn predict(m: &Model, input: &ModelInput, t: &TemplatePair) -> Result<Prediction> {
    m.forward(input, t)
}

/// Trains `model` on the enabled sources. Batches from each source are
/// interleaved round-robin within an epoch.
pub fn train(
    model: &Model,
    data: &TrainData,
    val: &[EvalSample],
    cfg: &TrainConfig,
    templates: &TemplatePair,
) -> Result<(Model, TrainHistory)> {
    cfg.validate()?;
    let sources: Vec<(Source, usize, f64)> = [
        (cfg.use_gt, Source::Gt, data.gt.len(), cfg.weights.gt),
        (cfg.use_pgt, Source::Pgt, data.pgt.len(), cfg.weights.pgt),
        (cfg.use_mv, Source::Mv, data.mv.len(), cfg.weights.mv),
    ]
    .into_iter()
    .filter(|s| s.0)
    .map(|s| (s.1, s.2, s.3))
    .collect();
    if sources.is_empty() {
        return Err(OcuError::Training("no supervision enabled (use_gt, use_pgt, use_mv all off)".into()));
    }
    if let Some((s, _, _)) = sources.iter().find(|s| s.1 == 0) {
        return Err(OcuError::Training(format!("{s:?} supervision is enabled but has no data")));
    }

    let mut m = model.clone();
    let mut velocity = vec![0.0; m.param_count()];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        let step = cfg.schedule.step(epoch);
        let mut queues: Vec<Vec<Vec<usize>>> = sources
            .iter()
            .map(|&(_, n, _)| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.shuffle(&mut rng);
                idx.chunks(cfg.batch_size).rev().map(|c| c.to_vec()).collect()
            })
            .collect();
        let mut sums = vec![(0.0, 0usize); sources.len()];
        loop {
            let mut any = false;
            for (k, &(source, _, lambda)) in sources.iter().enumerate() {
                let Some(batch) = queues[k].pop() else { continue };
                any = true;
                let (value, mut grad) = batch_grad(&m, data, source, &batch, &cfg.weights, templates)?;
                if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(OcuError::Training(format!(
                        "non-finite loss at epoch {epoch} on {source:?} batch starting with sample {} (value {value})",
                        match source {
                            Source::Gt => &data.gt[batch[0]].id,
                            Source::Pgt => &data.pgt[batch[0]].id,
                            Source::Mv => &data.mv[batch[0]].id,
                        }
                    )));
                }
                sums[k].0 += value * batch.len() as f64;
                sums[k].1 += batch.len();
                grad.iter_mut().for_each(|g| *g *= lambda);
                if let Some(c) = cfg.clip_norm {
                    let n = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                    if n > c {
                        grad.iter_mut().for_each(|g| *g *= c / n);
                    }
                }
                for ((p, v), g) in m.params.iter_mut().zip(&mut velocity).zip(&grad) {
                    *v = cfg.momentum * *v - step * g;
                    *p += *v;
                }
            }
            if !any {
                break;
            }
        }
        let mean = |s: Source| {
            sources
                .iter()
                .position(|x| x.0 == s)
                .map(|k| sums[k].0 / sums[k].1.max(1) as f64)
        };
        let (lg, lp, lm) = (mean(Source::Gt), mean(Source::Pgt), mean(Source::Mv));
        let loss_total = crate::losses::total_loss(lg, lp, lm, &cfg.weights);
        let val_error = if val.is_empty() {
            None
        } else {
            Some(mean_error(&m, val, templates)?)
        };
        let grad_check_value = match cfg.grad_check_every {
            Some(k) if k > 0 && (epoch + 1) % k == 0 => {
                let sup = if cfg.use_gt { &data.gt } else { &data.pgt };
                let n = sup.len().min(8);
                let mv = if cfg.use_mv { &data.mv[..data.mv.len().min(4)] } else { &[][..] };
                Some(grad_check(&m, &sup[..n], mv, &cfg.weights, templates, cfg.seed ^ epoch as u64)?)
            }
            _ => None,
        };
        history.epochs.push(EpochRecord {
            epoch,
            step,
            loss_gt: lg,
            loss_pgt: lp,
            loss_mv: lm,
            loss_total,
            val_error,
            grad_check: grad_check_value,
        });
    }
    Ok((m, history))
}

/// Objective used by [`grad_check`]: mean supervised loss plus mean
/// multi-view loss, with its parameter gradient.
pub fn objective(
    m: &Model,
    sup: &[Supervised],
    mv: &[MultiView],
    w: &LossWeights,
    t: &TemplatePair,
) -> Result<(f64, Vec<f64>)> {
    let mut g = vec![0.0; m.param_count()];
    let mut total = 0.0;
    if !sup.is_empty() {
        let mut gs = vec![0.0; m.param_count()];
        let mut v = 0.0;
        for s in sup {
            v += supervised_grad(m, s, w, t, &mut gs)?;
        }
        let k = sup.len() as f64;
        total += v / k;
        g.iter_mut().zip(&gs).for_each(|(a, b)| *a += b / k);
    }
    if !mv.is_empty() {
        let mut gm = vec![0.0; m.param_count()];
        let mut v = 0.0;
        for s in mv {
            v += mv_grad(m, s, w, t, &mut gm)?;
        }
        let k = mv.len() as f64;
        total += v / k;
        g.iter_mut().zip(&gm).for_each(|(a, b)| *a += b / k);
    }
    Ok((total, g))
}

/// Signs of every non-smooth residual in the objective (L1 coordinates,
/// edge-length differences, and whether the arccos band is active).
fn kink_signature(m: &Model, sup: &[Supervised], mv: &[MultiView], t: &TemplatePair) -> Result<Vec<i8>> {
    fn signs(a: &EyeMeshPair, b: &EyeMeshPair, map: &dyn Fn(&Vec3) -> Vec3, out: &mut Vec<i8>) {
        for (x, y) in a.eyes().into_iter().zip(b.eyes()) {
            for (p, q) in x.vertices().iter().zip(y.vertices()) {
                let d = map(p) - q;
                out.extend(d.iter().map(|c| c.signum() as i8 * (*c != 0.0) as i8));
            }
            for (e, f) in x.edge_lengths().iter().zip(y.edge_lengths()) {
                let d = e - f;
                out.push(d.signum() as i8 * (d != 0.0) as i8);
            }
        }
    }
    let band = |a: &Vec3, b: &Vec3| (a.normalize().dot(&b.normalize()).abs() > 1.0 - ARCCOS_EPS) as i8;
    let mut out = Vec::new();
    for s in sup {
        let p = m.forward(&s.input, t)?;
        signs(&p.eyes, &s.target.eyes, &|v| *v, &mut out);
        out.push(band(&p.gaze, &s.target.gaze));
    }
    for s in mv {
        let p1 = m.forward(&s.input1, t)?;
        let p2 = m.forward(&s.input2, t)?;
        signs(&p1.eyes, &p2.eyes, &|v| s.p.apply_point(v), &mut out);
        out.push(band(&s.p.rotation().apply(&p1.gaze), &p2.gaze));
    }
    Ok(out)
}

pub const GRAD_CHECK_STEP: f64 = 1e-5;
pub const GRAD_CHECK_PARAMS: usize = 64;

/// Largest relative error between analytic and central-difference parameter
/// gradients over a random subset of parameters. Parameters whose
/// perturbation moves any L1 or edge residual across zero are skipped.
pub fn grad_check(
    m: &Model,
    sup: &[Supervised],
    mv: &[MultiView],
    w: &LossWeights,
    t: &TemplatePair,
    seed: u64,
) -> Result<f64> {
    let (_, g) = objective(m, sup, mv, w, t)?;
    let base_sig = kink_signature(m, sup, mv, t)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = m.param_count();
    let mut chosen: Vec<usize> = (0..n).collect();
    chosen.shuffle(&mut rng);
    chosen.truncate(GRAD_CHECK_PARAMS.min(n));
    let results: Vec<Option<f64>> = chosen
        .par_iter()
        .map(|&i| {
            let eval = |d: f64| -> Result<(f64, Vec<i8>)> {
                let mut mm = m.clone();
                mm.params[i] += d;
                Ok((objective(&mm, sup, mv, w, t)?.0, kink_signature(&mm, sup, mv, t)?))
            };
            let (fp, sp) = eval(GRAD_CHECK_STEP)?;
            let (fm, sm) = eval(-GRAD_CHECK_STEP)?;
            if sp != base_sig || sm != base_sig {
                return Ok(None);
            }
            let fd = (fp - fm) / (2.0 * GRAD_CHECK_STEP);
            let denom = g[i].abs().max(fd.abs()).max(1e-6);
            Ok(Some((g[i] - fd).abs() / denom))
        })
        .collect::<Result<_>>()?;
    let checked: Vec<f64> = results.into_iter().flatten().collect();
    if checked.is_empty() {
        return Err(OcuError::Training("every checked parameter sits on a kink".into()));
    }
    Ok(checked.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthworld::{generate, make_view_pairs};
    use crate::trainer::model::{init_model, ModelDescriptor};

    fn world(n: usize, seed: u64) -> Vec<SyntheticSample> {
        generate(&SceneConfig {
            seed,
            n_samples: n,
            yaw_range: [-30.0, 30.0],
            iris_noise_px: 0.5,
            anchor_noise: 0.2,
            labeled: true,
            ..SceneConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn schedule_shape() {
        let s = Schedule {
            base: 1.0,
            warmup_epochs: 4,
            decay_epochs: vec![10, 20],
            decay_factor: 0.1,
        };
        assert_eq!(s.step(0), 0.25);
        assert_eq!(s.step(3), 1.0);
        assert_eq!(s.step(9), 1.0);
        assert!((s.step(10) - 0.1).abs() < 1e-15);
        assert!((s.step(25) - 0.01).abs() < 1e-15);
        assert!(Schedule { decay_epochs: vec![20, 10], ..s.clone() }.validate().is_err());
    }

    #[test]
    fn gt_targets_match_truth_without_noise() {
        let t = TemplatePair::standard();
        let samples = generate(&SceneConfig {
            seed: 4,
            n_samples: 20,
            labeled: true,
            ..SceneConfig::default()
        })
        .unwrap();
        for (ex, s) in gt_examples(&samples, &t).unwrap().iter().zip(&samples) {
            for (a, b) in ex.target.eyes.eyes().into_iter().zip(s.true_eyeballs.eyes()) {
                assert!((a.center() - b.center()).norm() < 1e-9);
                assert!((a.scale() - b.scale()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn grad_check_on_fresh_model() {
        let t = TemplatePair::standard();
        let sup = gt_examples(&world(8, 1), &t).unwrap();
        let m = init_model(&ModelDescriptor::default(), 5).unwrap();
        let e = grad_check(&m, &sup, &[], &LossWeights::default(), &t, 0).unwrap();
        assert!(e < 1e-4, "{e}");
    }

    #[test]
    fn grad_check_with_multi_view_terms() {
        let t = TemplatePair::standard();
        let samples = world(4, 2);
        let mv = mv_examples(&make_view_pairs(&samples, 20.0, 2).unwrap()).unwrap();
        let sup = gt_examples(&samples, &t).unwrap();
        let mut m = init_model(&ModelDescriptor::default(), 6).unwrap();
        for p in m.params.iter_mut() {
            *p *= 5.0;
        }
        let e = grad_check(&m, &sup, &mv, &LossWeights::default(), &t, 1).unwrap();
        assert!(e < 1e-4, "{e}");
    }

    #[test]
    fn stationary_when_targets_equal_predictions() {
        let t = TemplatePair::standard();
        let samples = world(8, 3);
        let m = init_model(&ModelDescriptor::default(), 5).unwrap();
        let mut sup = gt_examples(&samples, &t).unwrap();
        for s in &mut sup {
            let p = m.forward(&s.input, &t).unwrap();
            s.target = GazeLabel {
                eyes: p.eyes,
                gaze: p.gaze,
            };
        }
        let (v, g) = objective(&m, &sup, &[], &LossWeights::default(), &t).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-8);

        let mv: Vec<MultiView> = sup
            .iter()
            .map(|s| MultiView {
                id: s.id.clone(),
                input1: s.input.clone(),
                input2: s.input.clone(),
                p: SimilarityTransform::identity(),
            })
            .collect();
        let (v, g) = objective(&m, &[], &mv, &LossWeights::default(), &t).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-8);
    }

    #[test]
    fn training_requires_supervision() {
        let t = TemplatePair::standard();
        let m = init_model(&ModelDescriptor::default(), 0).unwrap();
        let cfg = TrainConfig {
            use_gt: false,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&m, &TrainData::default(), &[], &cfg, &t), Err(OcuError::Training(_))));
        let cfg = TrainConfig::default();
        assert!(matches!(train(&m, &TrainData::default(), &[], &cfg, &t), Err(OcuError::Training(_))));
    }

    #[test]
    fn training_is_deterministic_and_reduces_error() {
        let t = TemplatePair::standard();
        let data = TrainData {
            gt: gt_examples(&world(200, 7), &t).unwrap(),
            ..TrainData::default()
        };
        let val = eval_examples(&world(100, 8)).unwrap();
        let cfg = TrainConfig {
            epochs: 15,
            batch_size: 20,
            schedule: Schedule {
                warmup_epochs: 2,
                decay_epochs: vec![10],
                ..Schedule::default()
            },
            ..TrainConfig::default()
        };
        let m = init_model(&ModelDescriptor::default(), 1).unwrap();
        let before = mean_error(&m, &val, &t).unwrap();
        let (a, ha) = train(&m, &data, &val, &cfg, &t).unwrap();
        let (b, hb) = train(&m, &data, &val, &cfg, &t).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(ha, hb);
        assert_eq!(ha.epochs.len(), 15);
        assert!(ha.final_val_error().unwrap() < before, "{before} -> {:?}", ha.final_val_error());
    }
}
