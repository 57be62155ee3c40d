//! File formats: template mesh JSON, sample / pair / label JSONL, transform
//! JSON, report CSV, scatter SVG and the run manifest written next to every
//! artifact.
//!
//! Records keep unrecognised fields in `extra` so that decode followed by
//! encode does not drop data written by newer tools. Numbers are written with
//! shortest round-trip formatting, so numeric fields survive a round trip
//! bit for bit. Non-finite numbers are rejected in both directions.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{Matrix3, Matrix3x4};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{OcuError, Result};
use crate::gaze::YawBin;
use crate::geometry::{yaw_pitch_of_direction, Rotation, SimilarityTransform, Vec3};
use crate::labeling::{EyeAnchors, EyeMesh, EyeMeshPair, EyePose, FaceAnchors, GazeLabel, PseudoLabelDiagnostics, Vec2};
use crate::synthworld::{HeadPose, SyntheticSample, ViewPair};
use crate::template::{is_mirror_pair, EyeballTemplate, Region, Side, TemplatePair};
use crate::trainer::train::EpochRecord;

pub type Extra = Map<String, Value>;

/// Tolerance on |g| - 1 for gaze vectors read from files.
pub const UNIT_TOL: f64 = 1e-9;

fn strip_position(msg: &str) -> &str {
    match msg.rfind(" at line ") {
        Some(i) => &msg[..i],
        None => msg,
    }
}

fn path_error(line: Option<usize>, e: serde_path_to_error::Error<serde_json::Error>) -> OcuError {
    let field = e.path().to_string();
    let inner = e.into_inner();
    let line = line.unwrap_or_else(|| inner.line());
    OcuError::data(line, field, strip_position(&inner.to_string()))
}

/// Decodes one JSON document. Errors cite `line` when given (a JSONL line
/// number), otherwise the line inside `text`.
pub fn decode_json<T: DeserializeOwned>(text: &str, line: Option<usize>) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| path_error(line, e))?;
    de.end()
        .map_err(|e| OcuError::data(line.unwrap_or(e.line()), ".", strip_position(&e.to_string())))?;
    Ok(value)
}

/// Compact single-line JSON.
pub fn encode_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value).map_err(|e| OcuError::param(format!("cannot encode: {e}")))
}

/// Compact JSON with a trailing newline.
pub fn encode_json_line<T: Serialize>(value: &T) -> Result<String> {
    let mut s = encode_json(value)?;
    s.push('\n');
    Ok(s)
}

/// Indented JSON with a trailing newline.
pub fn encode_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| OcuError::param(format!("cannot encode: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Decodes one record per non-blank line; returns `(line number, record)`.
pub fn decode_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<(usize, T)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| Ok((i + 1, decode_json(l, Some(i + 1))?)))
        .collect()
}

pub fn encode_jsonl<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&encode_json(r)?);
        out.push('\n');
    }
    Ok(out)
}

fn finite(values: impl IntoIterator<Item = f64>, field: &str) -> Result<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(OcuError::param(format!("non-finite value in `{field}`")))
    }
}

fn vec3_in(a: [f64; 3], line: usize, field: &str) -> Result<Vec3> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(Vec3::from(a))
    } else {
        Err(OcuError::data(line, field, "non-finite number"))
    }
}

fn vec3_out(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn unit_in(a: [f64; 3], line: usize, field: &str) -> Result<Vec3> {
    let v = vec3_in(a, line, field)?;
    if (v.norm() - 1.0).abs() > UNIT_TOL {
        return Err(OcuError::data(line, field, format!("expected a unit vector, norm is {}", v.norm())));
    }
    Ok(v)
}

// ---------------------------------------------------------------- mesh JSON

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshRecord {
    pub side: Side,
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
    pub regions: BTreeMap<String, Vec<usize>>,
    pub optical_axis: [f64; 3],
    #[serde(flatten)]
    pub extra: Extra,
}

impl MeshRecord {
    pub fn from_template(t: &EyeballTemplate) -> Result<Self> {
        finite(t.vertices.iter().flat_map(|v| v.iter().copied()), "vertices")?;
        Ok(MeshRecord {
            side: t.side,
            vertices: t.vertices.iter().map(vec3_out).collect(),
            triangles: t.triangles.clone(),
            regions: t.regions.clone(),
            optical_axis: vec3_out(&t.optical_axis),
            extra: Extra::new(),
        })
    }

    /// Checks finiteness, index ranges and the named regions the labeler uses.
    pub fn to_template(&self) -> Result<EyeballTemplate> {
        let line = 1;
        let vertices = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| vec3_in(*v, line, &format!("vertices[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let n = vertices.len();
        if let Some(i) = self.triangles.iter().position(|t| t.iter().any(|&k| k >= n)) {
            return Err(OcuError::data(line, format!("triangles[{i}]"), format!("index out of range for {n} vertices")));
        }
        for r in Region::ALL {
            match self.regions.get(r.name()) {
                None => return Err(OcuError::data(line, "regions", format!("missing region `{}`", r.name()))),
                Some(idx) if idx.iter().any(|&k| k >= n) => {
                    return Err(OcuError::data(line, format!("regions.{}", r.name()), "index out of range"))
                }
                Some(_) => {}
            }
        }
        Ok(EyeballTemplate {
            side: self.side,
            vertices,
            triangles: self.triangles.clone(),
            regions: self.regions.clone(),
            optical_axis: unit_in(self.optical_axis, line, "optical_axis")?,
        })
    }
}

pub fn encode_mesh(t: &EyeballTemplate) -> Result<String> {
    encode_json_line(&MeshRecord::from_template(t)?)
}

pub fn decode_mesh(text: &str) -> Result<EyeballTemplate> {
    decode_json::<MeshRecord>(text, None)?.to_template()
}

/// Loads `eyeball_left.json` and `eyeball_right.json` from `dir`.
pub fn load_template_pair(dir: &Path) -> Result<TemplatePair> {
    let load = |side: Side| -> Result<EyeballTemplate> {
        let path = dir.join(template_file_name(side));
        let t = decode_mesh(&std::fs::read_to_string(&path)?)
            .map_err(|e| OcuError::param(format!("{}: {e}", path.display())))?;
        if t.side != side {
            return Err(OcuError::param(format!("{}: expected a {side} template", path.display())));
        }
        Ok(t)
    };
    let (left, right) = (load(Side::Left)?, load(Side::Right)?);
    if !is_mirror_pair(&left, &right) {
        return Err(OcuError::param("left and right templates are not mirror images"));
    }
    Ok(TemplatePair {
        left: Arc::new(left),
        right: Arc::new(right),
    })
}

pub fn template_file_name(side: Side) -> String {
    format!("eyeball_{side}.json")
}

// ------------------------------------------------------------ samples JSONL

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EyeAnchorsRecord {
    pub corners: [[f64; 3]; 2],
    pub centroid: [f64; 3],
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorsRecord {
    pub left: EyeAnchorsRecord,
    pub right: EyeAnchorsRecord,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrisRecord {
    pub left: Vec<[f64; 2]>,
    pub right: Vec<[f64; 2]>,
    #[serde(flatten)]
    pub extra: Extra,
}

/// One observed face.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub anchors: AnchorsRecord,
    pub iris_2d: IrisRecord,
    pub gaze: Option<[f64; 3]>,
    pub head_pose: Option<HeadPose>,
    #[serde(flatten)]
    pub extra: Extra,
}

fn eye_anchors_out(a: &EyeAnchors) -> EyeAnchorsRecord {
    EyeAnchorsRecord {
        corners: [vec3_out(&a.corners[0]), vec3_out(&a.corners[1])],
        centroid: vec3_out(&a.centroid),
        extra: Extra::new(),
    }
}

fn eye_anchors_in(r: &EyeAnchorsRecord, line: usize, field: &str) -> Result<EyeAnchors> {
    Ok(EyeAnchors {
        corners: [
            vec3_in(r.corners[0], line, &format!("{field}.corners[0]"))?,
            vec3_in(r.corners[1], line, &format!("{field}.corners[1]"))?,
        ],
        centroid: vec3_in(r.centroid, line, &format!("{field}.centroid"))?,
    })
}

fn iris_in(pts: &[[f64; 2]], line: usize, field: &str) -> Result<Vec<Vec2>> {
    pts.iter()
        .enumerate()
        .map(|(i, p)| {
            if p.iter().all(|x| x.is_finite()) {
                Ok(Vec2::new(p[0], p[1]))
            } else {
                Err(OcuError::data(line, format!("{field}[{i}]"), "non-finite number"))
            }
        })
        .collect()
}

impl SampleRecord {
    pub fn from_anchors(id: &str, a: &FaceAnchors, head_pose: Option<HeadPose>) -> Result<Self> {
        let eye_pts = [&a.left, &a.right]
            .into_iter()
            .flat_map(|e| e.corners.iter().chain([&e.centroid]).flat_map(|v| v.iter().copied()).collect::<Vec<_>>());
        finite(eye_pts, "anchors")?;
        finite(a.iris_left.iter().chain(&a.iris_right).flat_map(|p| [p.x, p.y]), "iris_2d")?;
        finite(a.gaze.iter().flat_map(|g| g.iter().copied()), "gaze")?;
        Ok(SampleRecord {
            id: id.to_string(),
            anchors: AnchorsRecord {
                left: eye_anchors_out(&a.left),
                right: eye_anchors_out(&a.right),
                extra: Extra::new(),
            },
            iris_2d: IrisRecord {
                left: a.iris_left.iter().map(|p| [p.x, p.y]).collect(),
                right: a.iris_right.iter().map(|p| [p.x, p.y]).collect(),
                extra: Extra::new(),
            },
            gaze: a.gaze.as_ref().map(vec3_out),
            head_pose,
            extra: Extra::new(),
        })
    }

    pub fn from_sample(s: &SyntheticSample) -> Result<Self> {
        SampleRecord::from_anchors(&s.id, &s.anchors, Some(s.head_pose))
    }

    pub fn to_anchors(&self, line: usize) -> Result<FaceAnchors> {
        Ok(FaceAnchors {
            left: eye_anchors_in(&self.anchors.left, line, "anchors.left")?,
            right: eye_anchors_in(&self.anchors.right, line, "anchors.right")?,
            iris_left: iris_in(&self.iris_2d.left, line, "iris_2d.left")?,
            iris_right: iris_in(&self.iris_2d.right, line, "iris_2d.right")?,
            gaze: self.gaze.map(|g| unit_in(g, line, "gaze")).transpose()?,
        })
    }
}

// ------------------------------------------------------------ transform JSON

/// Row-major 3x4 similarity `[sR | t]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub matrix: [[f64; 4]; 3],
    #[serde(flatten)]
    pub extra: Extra,
}

impl TransformRecord {
    pub fn from_transform(p: &SimilarityTransform) -> Result<Self> {
        let m = p.matrix();
        finite(m.iter().copied(), "matrix")?;
        Ok(TransformRecord {
            matrix: std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)])),
            extra: Extra::new(),
        })
    }

    pub fn to_transform(&self, line: usize, field: &str) -> Result<SimilarityTransform> {
        if !self.matrix.iter().flatten().all(|x| x.is_finite()) {
            return Err(OcuError::data(line, field, "non-finite number"));
        }
        let m = Matrix3x4::from_fn(|r, c| self.matrix[r][c]);
        SimilarityTransform::from_matrix(m).map_err(|e| OcuError::data(line, field, e.to_string()))
    }
}

pub fn decode_transform(text: &str) -> Result<SimilarityTransform> {
    decode_json::<TransformRecord>(text, None)?.to_transform(1, "matrix")
}

pub fn encode_transform(p: &SimilarityTransform) -> Result<String> {
    encode_json_pretty(&TransformRecord::from_transform(p)?)
}

// ---------------------------------------------------------------- pairs JSONL

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    pub view1: SampleRecord,
    pub view2: SampleRecord,
    pub p: TransformRecord,
    #[serde(flatten)]
    pub extra: Extra,
}

/// Decoded multi-view pair: observations of both views and the exact
/// view1 to view2 transform.
#[derive(Clone, Debug)]
pub struct ObservedPair {
    pub id: String,
    pub view1: FaceAnchors,
    pub view2: FaceAnchors,
    pub p: SimilarityTransform,
}

impl PairRecord {
    pub fn from_pair(v: &ViewPair) -> Result<Self> {
        Ok(PairRecord {
            id: v.view1.id.clone(),
            view1: SampleRecord::from_sample(&v.view1)?,
            view2: SampleRecord::from_sample(&v.view2)?,
            p: TransformRecord::from_transform(&v.p)?,
            extra: Extra::new(),
        })
    }

    pub fn to_pair(&self, line: usize) -> Result<ObservedPair> {
        Ok(ObservedPair {
            id: self.id.clone(),
            view1: self.view1.to_anchors(line)?,
            view2: self.view2.to_anchors(line)?,
            p: self.p.to_transform(line, "p.matrix")?,
        })
    }
}

// --------------------------------------------------------------- labels JSONL

/// Compact eye mesh: `v = center + scale * rotation * v_template`, with the
/// rotation stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub center: [f64; 3],
    pub scale: f64,
    pub rotation: [[f64; 3]; 3],
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EyesRecord {
    pub left: PoseRecord,
    pub right: PoseRecord,
    #[serde(flatten)]
    pub extra: Extra,
}

/// Eye meshes and gaze of one sample: a label, or a model prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: String,
    /// `gt`, `pseudo` or `model`.
    pub source: String,
    pub eyes: EyesRecord,
    pub gaze: [f64; 3],
    pub head_pose: Option<HeadPose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<PseudoLabelDiagnostics>,
    #[serde(flatten)]
    pub extra: Extra,
}

fn pose_out(mesh: &EyeMesh) -> Result<PoseRecord> {
    let p = mesh
        .pose()
        .ok_or_else(|| OcuError::param("only posed eye meshes can be written in compact form"))?;
    let m = p.rotation.matrix();
    finite(p.center.iter().copied().chain([p.scale]).chain(m.iter().copied()), "eyes")?;
    Ok(PoseRecord {
        center: vec3_out(&p.center),
        scale: p.scale,
        rotation: std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)])),
        extra: Extra::new(),
    })
}

fn pose_in(r: &PoseRecord, template: &Arc<EyeballTemplate>, line: usize, field: &str) -> Result<EyeMesh> {
    let center = vec3_in(r.center, line, &format!("{field}.center"))?;
    if !(r.scale.is_finite() && r.scale > 0.0) {
        return Err(OcuError::data(line, format!("{field}.scale"), "scale must be positive and finite"));
    }
    let rot_field = format!("{field}.rotation");
    if !r.rotation.iter().flatten().all(|x| x.is_finite()) {
        return Err(OcuError::data(line, rot_field, "non-finite number"));
    }
    let rotation = Rotation::from_matrix(Matrix3::from_fn(|i, j| r.rotation[i][j]))
        .map_err(|e| OcuError::data(line, rot_field, e.to_string()))?;
    Ok(EyeMesh::from_pose(
        template.clone(),
        EyePose {
            center,
            scale: r.scale,
            rotation,
        },
    ))
}

impl LabelRecord {
    pub fn from_label(
        id: &str,
        source: &str,
        label: &GazeLabel,
        head_pose: Option<HeadPose>,
        diagnostics: Option<PseudoLabelDiagnostics>,
    ) -> Result<Self> {
        finite(label.gaze.iter().copied(), "gaze")?;
        Ok(LabelRecord {
            id: id.to_string(),
            source: source.to_string(),
            eyes: EyesRecord {
                left: pose_out(&label.eyes.left)?,
                right: pose_out(&label.eyes.right)?,
                extra: Extra::new(),
            },
            gaze: vec3_out(&label.gaze),
            head_pose,
            diagnostics,
            extra: Extra::new(),
        })
    }

    pub fn to_label(&self, templates: &TemplatePair, line: usize) -> Result<GazeLabel> {
        Ok(GazeLabel {
            eyes: EyeMeshPair::new(
                pose_in(&self.eyes.left, &templates.left, line, "eyes.left")?,
                pose_in(&self.eyes.right, &templates.right, line, "eyes.right")?,
            )?,
            gaze: unit_in(self.gaze, line, "gaze")?,
        })
    }

    /// Head yaw used for binning: the recorded head pose, else the yaw of
    /// the gaze direction.
    pub fn yaw(&self, line: usize) -> Result<f64> {
        match self.head_pose {
            Some(h) => Ok(h.yaw),
            None => Ok(yaw_pitch_of_direction(&unit_in(self.gaze, line, "gaze")?).0),
        }
    }
}

/// Operand of the `loss` command: a label record, a bare `{"gaze": ...}`
/// object or a bare `[x, y, z]` gaze vector.
#[derive(Clone, Debug)]
pub struct LossOperand {
    pub eyes: Option<EyeMeshPair>,
    pub gaze: Option<Vec3>,
}

#[derive(Deserialize)]
struct OperandRecord {
    #[serde(default)]
    eyes: Option<EyesRecord>,
    #[serde(default)]
    gaze: Option<[f64; 3]>,
}

pub fn decode_loss_operand(text: &str, templates: &TemplatePair) -> Result<LossOperand> {
    let value: Value = decode_json(text, None)?;
    if value.is_array() {
        let g: [f64; 3] = serde_path_to_error::deserialize(value).map_err(|e| path_error(Some(1), e))?;
        return Ok(LossOperand {
            eyes: None,
            gaze: Some(unit_in(g, 1, "gaze")?),
        });
    }
    let r: OperandRecord = serde_path_to_error::deserialize(value).map_err(|e| path_error(Some(1), e))?;
    let eyes = match &r.eyes {
        Some(e) => Some(EyeMeshPair::new(
            pose_in(&e.left, &templates.left, 1, "eyes.left")?,
            pose_in(&e.right, &templates.right, 1, "eyes.right")?,
        )?),
        None => None,
    };
    Ok(LossOperand {
        eyes,
        gaze: r.gaze.map(|g| unit_in(g, 1, "gaze")).transpose()?,
    })
}

// ---------------------------------------------------------------- CSV tables

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct ReportRow {
    bin_max_yaw: f64,
    mean_error_deg: Option<f64>,
    count: usize,
}

fn csv_error(e: csv::Error) -> OcuError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    let field = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.field().map_or_else(|| "record".to_string(), |f| format!("column {}", f + 1)),
        _ => "record".to_string(),
    };
    OcuError::data(line, field, e.to_string())
}

fn csv_finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| OcuError::param(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| OcuError::param(e.to_string()))
}

/// Columns `bin_max_yaw,mean_error_deg,count`; empty bins have an empty mean.
pub fn encode_report(bins: &[YawBin]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for b in bins {
        finite([b.max_yaw].into_iter().chain(b.mean_error), "report")?;
        w.serialize(ReportRow {
            bin_max_yaw: b.max_yaw,
            mean_error_deg: b.mean_error,
            count: b.count,
        })
        .map_err(csv_error)?;
    }
    csv_finish(w)
}

pub fn decode_report(text: &str) -> Result<Vec<YawBin>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize::<ReportRow>()
        .map(|row| {
            let row = row.map_err(csv_error)?;
            Ok(YawBin {
                max_yaw: row.bin_max_yaw,
                mean_error: row.mean_error_deg,
                count: row.count,
            })
        })
        .collect()
}

/// One row per epoch; absent values are empty cells.
pub fn encode_history(epochs: &[EpochRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in epochs {
        w.serialize(e).map_err(csv_error)?;
    }
    csv_finish(w)
}

pub fn decode_history(text: &str) -> Result<Vec<EpochRecord>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(csv_error))
        .collect()
}

/// Ablation table: scenario, mean error, final training loss, then error
/// and count for each cumulative yaw bin.
pub fn encode_ablation(rows: &[crate::trainer::ablation::AblationRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let bins: Vec<f64> = rows.first().map(|r| r.bins.iter().map(|b| b.max_yaw).collect()).unwrap_or_default();
    let mut header = vec!["scenario".to_string(), "mean_error_deg".into(), "final_train_loss".into()];
    for b in &bins {
        header.push(format!("yaw_lt_{b}_error_deg"));
        header.push(format!("yaw_lt_{b}_count"));
    }
    w.write_record(&header).map_err(csv_error)?;
    for r in rows {
        let mut rec = vec![r.name.clone(), r.mean_error.to_string(), r.final_train_loss.to_string()];
        for b in &r.bins {
            rec.push(b.mean_error.map(|m| m.to_string()).unwrap_or_default());
            rec.push(b.count.to_string());
        }
        w.write_record(&rec).map_err(csv_error)?;
    }
    csv_finish(w)
}

// ---------------------------------------------------------------- scatter SVG

/// Gaze yaw/pitch scatter of ground truth (blue) overlaid with predictions
/// (orange). Write-only.
pub fn scatter_svg(points: &[(Vec3, Vec3)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 40.0;
    let x = |yaw: f64| M + (yaw.clamp(-180.0, 180.0) + 180.0) / 360.0 * (W - 2.0 * M);
    let y = |pitch: f64| M + (90.0 - pitch.clamp(-90.0, 90.0)) / 180.0 * (H - 2.0 * M);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<g stroke="#999" stroke-width="1"><line x1="{M}" y1="{cy}" x2="{x2}" y2="{cy}"/><line x1="{cx}" y1="{M}" x2="{cx}" y2="{y2}"/></g>"##,
        cy = y(0.0),
        cx = x(0.0),
        x2 = W - M,
        y2 = H - M
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">gaze yaw (deg)</text>"#, W / 2.0, H - 10.0);
    let _ = writeln!(s, r#"<text x="12" y="{}" font-size="12" transform="rotate(-90 12 {})" text-anchor="middle">gaze pitch (deg)</text>"#, H / 2.0, H / 2.0);
    for (series, color) in [(0, "#1f77b4"), (1, "#ff7f0e")] {
        let _ = writeln!(s, r#"<g fill="{color}" fill-opacity="0.5">"#);
        for (truth, pred) in points {
            let g = if series == 0 { truth } else { pred };
            let (yaw, pitch) = yaw_pitch_of_direction(g);
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2"/>"#, x(yaw), y(pitch));
        }
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(s, r##"<text x="{}" y="20" font-size="12" fill="#1f77b4">truth</text>"##, W - 140.0);
    let _ = writeln!(s, r##"<text x="{}" y="20" font-size="12" fill="#ff7f0e">prediction</text>"##, W - 90.0);
    s.push_str("</svg>\n");
    s
}

// ---------------------------------------------------------------- manifest

/// Provenance sidecar written next to every artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the compact JSON of the effective configuration.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Seconds; the only field that varies between identical runs.
    pub wall_time_s: f64,
}

pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    Ok(hex::encode(Sha256::digest(encode_json(config)?.as_bytes())))
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

impl RunManifest {
    pub fn write_beside(&self, artifact: &Path) -> Result<()> {
        std::fs::write(manifest_path(artifact), encode_json_pretty(self)?)?;
        Ok(())
    }
}
