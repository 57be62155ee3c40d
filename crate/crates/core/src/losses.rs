//! Supervised and multi-view losses on eye meshes and gaze, with analytic
//! gradients with respect to predicted vertices and gaze.

use serde::{Deserialize, Serialize};

use crate::error::{OcuError, Result};
use crate::geometry::{decompose, Rotation, SimilarityTransform, Vec3};
use crate::labeling::{EyeMesh, EyeMeshPair};

/// Half-width of the band around |cos| = 1 where the angular gradient is zeroed.
pub const ARCCOS_EPS: f64 = 1e-12;

const RAD2DEG: f64 = 180.0 / std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub vertex: f64,
    pub edge: f64,
    pub gaze: f64,
    pub mv_vertex: f64,
    pub mv_gaze: f64,
    pub gt: f64,
    pub pgt: f64,
    pub mv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            vertex: 0.1,
            edge: 0.1,
            gaze: 1.0,
            mv_vertex: 0.1,
            mv_gaze: 1.0,
            gt: 1.0,
            pgt: 1.0,
            mv: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.vertex,
            self.edge,
            self.gaze,
            self.mv_vertex,
            self.mv_gaze,
            self.gt,
            self.pgt,
            self.mv,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(OcuError::param("loss weights must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Gradient with respect to one prediction: per-eye vertices and gaze.
/// Vertex gradients are empty for losses that do not touch the meshes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Grad {
    pub left: Vec<Vec3>,
    pub right: Vec<Vec3>,
    pub gaze: Vec3,
}

impl Grad {
    fn zeros(pair: &EyeMeshPair) -> Self {
        Grad {
            left: vec![Vec3::zeros(); pair.left.vertices().len()],
            right: vec![Vec3::zeros(); pair.right.vertices().len()],
            gaze: Vec3::zeros(),
        }
    }

    fn eye_mut(&mut self, k: usize) -> &mut Vec<Vec3> {
        if k == 0 {
            &mut self.left
        } else {
            &mut self.right
        }
    }

    /// `self += w * other`, growing empty vertex buffers as needed.
    pub fn add_scaled(&mut self, other: &Grad, w: f64) {
        for (dst, src) in [(&mut self.left, &other.left), (&mut self.right, &other.right)] {
            if src.is_empty() {
                continue;
            }
            if dst.is_empty() {
                dst.resize(src.len(), Vec3::zeros());
            }
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s * w;
            }
        }
        self.gaze += other.gaze * w;
    }

    pub fn vertex_norm(&self) -> f64 {
        self.left
            .iter()
            .chain(&self.right)
            .map(|g| g.norm_squared())
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossValueGrad {
    pub value: f64,
    pub grad: Grad,
}

impl LossValueGrad {
    fn weighted(parts: &[(f64, &LossValueGrad)]) -> LossValueGrad {
        let mut out = LossValueGrad {
            value: 0.0,
            grad: Grad::default(),
        };
        for (w, p) in parts {
            out.value += w * p.value;
            out.grad.add_scaled(&p.grad, *w);
        }
        out
    }
}

/// Loss over two predictions (two views of one sample).
#[derive(Clone, Debug, PartialEq)]
pub struct PairLossValueGrad {
    pub value: f64,
    pub grad1: Grad,
    pub grad2: Grad,
}

fn check_topology(a: &EyeMeshPair, b: &EyeMeshPair) -> Result<()> {
    for (x, y) in [(&a.left, &b.left), (&a.right, &b.right)] {
        let same = std::sync::Arc::ptr_eq(x.template(), y.template())
            || x.template().same_topology(y.template());
        if !same || x.side() != y.side() {
            return Err(OcuError::param("eye meshes do not share a template topology"));
        }
    }
    Ok(())
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Shared L1 accumulation: `(1/N_v) sum |map(v1) - v2|_1` over both eyes,
/// with the gradient with respect to the mapped points and `v2`.
fn l1_vertices(
    pred: &EyeMeshPair,
    target: &EyeMeshPair,
    map: impl Fn(&Vec3) -> Vec3,
) -> (f64, [Vec<Vec3>; 2]) {
    let n_v = pred.left.vertices().len() as f64;
    let mut total = 0.0;
    let mut signs: [Vec<Vec3>; 2] = [Vec::new(), Vec::new()];
    for (k, (p, t)) in [(&pred.left, &target.left), (&pred.right, &target.right)]
        .into_iter()
        .enumerate()
    {
        signs[k].reserve(p.vertices().len());
        for (a, b) in p.vertices().iter().zip(t.vertices()) {
            let d = map(a) - b;
            total += d.x.abs() + d.y.abs() + d.z.abs();
            signs[k].push(Vec3::new(sign(d.x), sign(d.y), sign(d.z)) / n_v);
        }
    }
    (total / n_v, signs)
}

pub fn vertex_loss(pred: &EyeMeshPair, target: &EyeMeshPair) -> Result<LossValueGrad> {
    check_topology(pred, target)?;
    let (value, [left, right]) = l1_vertices(pred, target, |v| *v);
    Ok(LossValueGrad {
        value,
        grad: Grad {
            left,
            right,
            gaze: Vec3::zeros(),
        },
    })
}

fn eye_edges(mesh: &EyeMesh, target: &EyeMesh, grad: &mut [Vec3], norm: f64) -> f64 {
    let v = mesh.vertices();
    let w = target.vertices();
    let mut total = 0.0;
    for &[a, b, c] in &mesh.template().triangles {
        for (i, j) in [(a, b), (b, c), (c, a)] {
            let e = v[j] - v[i];
            let len = e.norm();
            let diff = len - (w[j] - w[i]).norm();
            total += diff.abs();
            let s = sign(diff);
            if s != 0.0 && len > 0.0 {
                let g = e * (s / (len * norm));
                grad[j] += g;
                grad[i] -= g;
            }
        }
    }
    total
}

pub fn edge_loss(pred: &EyeMeshPair, target: &EyeMeshPair) -> Result<LossValueGrad> {
    check_topology(pred, target)?;
    let norm = 3.0 * pred.left.template().triangle_count() as f64;
    let mut grad = Grad::zeros(pred);
    let mut total = 0.0;
    for (k, (p, t)) in [(&pred.left, &target.left), (&pred.right, &target.right)]
        .into_iter()
        .enumerate()
    {
        total += eye_edges(p, t, grad.eye_mut(k), norm);
    }
    Ok(LossValueGrad {
        value: total / norm,
        grad,
    })
}

fn unit(g: &Vec3, what: &str) -> Result<(Vec3, f64)> {
    let n = g.norm();
    if !(n > 1e-12) || !n.is_finite() {
        return Err(OcuError::param(format!("{what} must be a non-zero finite vector")));
    }
    Ok((g / n, n))
}

/// Angle between `a` and `b` in degrees with gradients for both arguments.
fn angle_deg(a: &Vec3, b: &Vec3) -> Result<(f64, Vec3, Vec3)> {
    let (u, na) = unit(a, "gaze")?;
    let (v, nb) = unit(b, "target gaze")?;
    let c = u.dot(&v);
    let value = RAD2DEG * u.cross(&v).norm().atan2(c);
    if c.abs() > 1.0 - ARCCOS_EPS {
        return Ok((value, Vec3::zeros(), Vec3::zeros()));
    }
    let k = -RAD2DEG / (1.0 - c * c).sqrt();
    let ga = (v - u * c) * (k / na);
    let gb = (u - v * c) * (k / nb);
    Ok((value, ga, gb))
}

/// Angle between predicted and target gaze in degrees, in `[0, 180]`.
pub fn gaze_loss(g: &Vec3, g_star: &Vec3) -> Result<LossValueGrad> {
    let (value, ga, _) = angle_deg(g, g_star)?;
    Ok(LossValueGrad {
        value,
        grad: Grad {
            gaze: ga,
            ..Grad::default()
        },
    })
}

pub fn combined_supervised_loss(
    pred: &EyeMeshPair,
    g: &Vec3,
    target: &EyeMeshPair,
    g_star: &Vec3,
    w: &LossWeights,
) -> Result<LossValueGrad> {
    w.validate()?;
    let v = vertex_loss(pred, target)?;
    let e = edge_loss(pred, target)?;
    let a = gaze_loss(g, g_star)?;
    Ok(LossValueGrad::weighted(&[(w.vertex, &v), (w.edge, &e), (w.gaze, &a)]))
}

/// L1 distance between view-1 vertices mapped by `p` and view-2 vertices.
pub fn mv_vertex_loss(
    pred1: &EyeMeshPair,
    pred2: &EyeMeshPair,
    p: &SimilarityTransform,
) -> Result<PairLossValueGrad> {
    check_topology(pred1, pred2)?;
    let (value, signs) = l1_vertices(pred1, pred2, |v| p.apply_point(v));
    let lt = p.linear().transpose();
    let [l, r] = signs;
    let grad1 = Grad {
        left: l.iter().map(|s| lt * s).collect(),
        right: r.iter().map(|s| lt * s).collect(),
        gaze: Vec3::zeros(),
    };
    let grad2 = Grad {
        left: l.into_iter().map(|s| -s).collect(),
        right: r.into_iter().map(|s| -s).collect(),
        gaze: Vec3::zeros(),
    };
    Ok(PairLossValueGrad {
        value,
        grad1,
        grad2,
    })
}

/// Angle between `R g1` and `g2` in degrees.
pub fn mv_gaze_loss(g1: &Vec3, g2: &Vec3, r: &Rotation) -> Result<PairLossValueGrad> {
    let (value, ga, gb) = angle_deg(&r.apply(g1), g2)?;
    Ok(PairLossValueGrad {
        value,
        grad1: Grad {
            gaze: r.transpose().apply(&ga),
            ..Grad::default()
        },
        grad2: Grad {
            gaze: gb,
            ..Grad::default()
        },
    })
}

pub fn mv_loss(
    pred1: &EyeMeshPair,
    g1: &Vec3,
    pred2: &EyeMeshPair,
    g2: &Vec3,
    p: &SimilarityTransform,
    w: &LossWeights,
) -> Result<PairLossValueGrad> {
    w.validate()?;
    let (_, r, _) = decompose(p.matrix())?;
    let v = mv_vertex_loss(pred1, pred2, p)?;
    let a = mv_gaze_loss(g1, g2, &r)?;
    let mut grad1 = Grad::default();
    grad1.add_scaled(&v.grad1, w.mv_vertex);
    grad1.add_scaled(&a.grad1, w.mv_gaze);
    let mut grad2 = Grad::default();
    grad2.add_scaled(&v.grad2, w.mv_vertex);
    grad2.add_scaled(&a.grad2, w.mv_gaze);
    Ok(PairLossValueGrad {
        value: w.mv_vertex * v.value + w.mv_gaze * a.value,
        grad1,
        grad2,
    })
}

/// Weighted sum of the ground-truth, pseudo-label and multi-view terms;
/// absent terms contribute nothing.
pub fn total_loss(gt: Option<f64>, pgt: Option<f64>, mv: Option<f64>, w: &LossWeights) -> f64 {
    w.gt * gt.unwrap_or(0.0) + w.pgt * pgt.unwrap_or(0.0) + w.mv * mv.unwrap_or(0.0)
}
