//! Canonical eyeball template: an open UV sphere of unit radius centred at
//! the origin, anterior pole (the pupil) on -z, opening at the posterior pole.
//!
//! Vertex 0 is the apex. Rings follow from anterior to posterior, each ring
//! running counter-clockwise when viewed from -z. The right template mirrors
//! the left across x = 0 at identical indices, with triangle winding flipped.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{OcuError, Result};
use crate::geometry::Vec3;

pub const DEFAULT_SECTORS: usize = 32;
pub const DEFAULT_STACKS: usize = 16;

/// Iris half-angle used to pick the iris border ring.
const IRIS_HALF_ANGLE_DEG: f64 = 22.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn mirrored(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl FromStr for Side {
    type Err = OcuError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            other => Err(OcuError::param(format!("unknown side `{other}`"))),
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Named vertex subsets of the template.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    Iris,
    IrisBorder,
    Cornea,
    Sclera,
    Apex,
}

impl Region {
    pub const ALL: [Region; 5] = [
        Region::Iris,
        Region::IrisBorder,
        Region::Cornea,
        Region::Sclera,
        Region::Apex,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Region::Iris => "iris",
            Region::IrisBorder => "iris_border",
            Region::Cornea => "cornea",
            Region::Sclera => "sclera",
            Region::Apex => "apex",
        }
    }
}

impl FromStr for Region {
    type Err = OcuError;
    fn from_str(s: &str) -> Result<Self> {
        Region::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| OcuError::param(format!("unknown region `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EyeballTemplate {
    pub side: Side,
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub regions: BTreeMap<String, Vec<usize>>,
    pub optical_axis: Vec3,
}

/// Ring layout of an open UV sphere: `ring(k)` for k in 1..stacks.
struct Layout {
    sectors: usize,
}

impl Layout {
    fn ring_vertex(&self, ring: usize, j: usize) -> usize {
        1 + (ring - 1) * self.sectors + (j % self.sectors)
    }

    fn ring(&self, ring: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.sectors).map(move |j| self.ring_vertex(ring, j))
    }
}

/// Builds the open UV-sphere template with `sectors` vertices per ring and
/// `stacks` latitude bands (`stacks - 1` rings).
pub fn build_template(sectors: usize, stacks: usize, side: Side) -> Result<EyeballTemplate> {
    if sectors < 3 {
        return Err(OcuError::param(format!("sectors must be >= 3, got {sectors}")));
    }
    if stacks < 2 {
        return Err(OcuError::param(format!("stacks must be >= 2, got {stacks}")));
    }
    let layout = Layout { sectors };
    let rings = stacks - 1;

    let mut vertices = Vec::with_capacity(rings * sectors + 1);
    vertices.push(Vec3::new(0.0, 0.0, -1.0));
    for k in 1..=rings {
        let theta = std::f64::consts::PI * k as f64 / stacks as f64;
        let (st, ct) = theta.sin_cos();
        for j in 0..sectors {
            let phi = std::f64::consts::TAU * j as f64 / sectors as f64;
            let (sp, cp) = phi.sin_cos();
            // counter-clockwise as seen from the camera on -z
            vertices.push(Vec3::new(st * cp, -st * sp, -ct));
        }
    }

    let mut triangles = Vec::with_capacity(sectors + 2 * sectors * (rings - 1));
    for j in 0..sectors {
        triangles.push([0, layout.ring_vertex(1, j), layout.ring_vertex(1, j + 1)]);
    }
    for k in 1..rings {
        for j in 0..sectors {
            let a = layout.ring_vertex(k, j);
            let b = layout.ring_vertex(k + 1, j);
            let c = layout.ring_vertex(k + 1, j + 1);
            let d = layout.ring_vertex(k, j + 1);
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }

    let iris_ring = ((stacks as f64 * IRIS_HALF_ANGLE_DEG / 180.0 + 1e-9).floor() as usize)
        .clamp(1, rings);
    let cornea_ring = (iris_ring + 1).min(rings);
    let mut regions = BTreeMap::new();
    let mut iris = vec![0];
    iris.extend((1..=iris_ring).flat_map(|k| layout.ring(k)));
    regions.insert(Region::Iris.name().to_string(), iris);
    regions.insert(
        Region::IrisBorder.name().to_string(),
        layout.ring(iris_ring).collect(),
    );
    regions.insert(
        Region::Cornea.name().to_string(),
        (1..=cornea_ring).flat_map(|k| layout.ring(k)).collect(),
    );
    regions.insert(
        Region::Sclera.name().to_string(),
        (cornea_ring + 1..=rings).flat_map(|k| layout.ring(k)).collect(),
    );
    regions.insert(Region::Apex.name().to_string(), vec![0]);

    let left = EyeballTemplate {
        side: Side::Left,
        vertices,
        triangles,
        regions,
        optical_axis: Vec3::new(0.0, 0.0, -1.0),
    };
    Ok(match side {
        Side::Left => left,
        Side::Right => left.mirrored(),
    })
}

impl EyeballTemplate {
    /// The 481-vertex, 928-triangle template.
    pub fn standard(side: Side) -> Self {
        build_template(DEFAULT_SECTORS, DEFAULT_STACKS, side).expect("default parameters are valid")
    }

    /// Reflection across x = 0 with flipped winding and the opposite side.
    pub fn mirrored(&self) -> Self {
        EyeballTemplate {
            side: self.side.mirrored(),
            vertices: self.vertices.iter().map(|v| Vec3::new(-v.x, v.y, v.z)).collect(),
            triangles: self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect(),
            regions: self.regions.clone(),
            optical_axis: Vec3::new(-self.optical_axis.x, self.optical_axis.y, self.optical_axis.z),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    /// Sorted vertex indices of a region. Missing regions yield an empty set.
    pub fn region(&self, region: Region) -> &[usize] {
        self.regions
            .get(region.name())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Centroid of the iris border ring, in the canonical frame.
    pub fn iris_border_centroid(&self) -> Vec3 {
        centroid(&self.vertices, self.region(Region::IrisBorder))
    }

    /// Centroid of the iris region, in the canonical frame.
    pub fn iris_centroid(&self) -> Vec3 {
        centroid(&self.vertices, self.region(Region::Iris))
    }

    /// Angle between the optical axis and the iris border ring, in radians.
    pub fn iris_border_angle(&self) -> f64 {
        let c = self.iris_border_centroid();
        let v = self.region(Region::IrisBorder)
            .first()
            .map(|&i| self.vertices[i])
            .unwrap_or(self.optical_axis);
        let along = c.dot(&self.optical_axis);
        (along / v.norm()).clamp(-1.0, 1.0).acos()
    }

    /// True when both templates share connectivity.
    pub fn same_topology(&self, other: &EyeballTemplate) -> bool {
        self.vertices.len() == other.vertices.len() && self.triangles == other.triangles
    }
}

fn centroid(vertices: &[Vec3], idx: &[usize]) -> Vec3 {
    if idx.is_empty() {
        return Vec3::zeros();
    }
    idx.iter().map(|&i| vertices[i]).sum::<Vec3>() / idx.len() as f64
}

/// Deterministic, sorted vertex set of `region` (by name).
pub fn region_indices(t: &EyeballTemplate, region: &str) -> Result<Vec<usize>> {
    let region = Region::from_str(region)?;
    let mut idx = t.region(region).to_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Left and right templates shared by meshes and losses.
#[derive(Clone, Debug)]
pub struct TemplatePair {
    pub left: Arc<EyeballTemplate>,
    pub right: Arc<EyeballTemplate>,
}

impl TemplatePair {
    pub fn standard() -> Self {
        let left = EyeballTemplate::standard(Side::Left);
        let right = left.mirrored();
        TemplatePair {
            left: Arc::new(left),
            right: Arc::new(right),
        }
    }

    pub fn get(&self, side: Side) -> &Arc<EyeballTemplate> {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}

impl Default for TemplatePair {
    fn default() -> Self {
        Self::standard()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeshValidationReport {
    pub vertex_count: usize,
    pub triangle_count: usize,
    pub boundary_loops: Vec<Vec<usize>>,
    pub max_radius_deviation: f64,
    /// Vertex set is symmetric under x -> -x and every triangle is wound outward,
    /// which is what a correctly mirrored template preserves.
    pub is_mirror_consistent: bool,
    pub consistently_oriented: bool,
    pub indices_in_range: bool,
    pub euler_characteristic: i64,
}

/// Mesh report computed by direct traversal. Never fails.
pub fn validate(t: &EyeballTemplate) -> MeshValidationReport {
    let nv = t.vertices.len();
    let indices_in_range = t.triangles.iter().flatten().all(|&i| i < nv);
    let tris: Vec<[usize; 3]> = t
        .triangles
        .iter()
        .copied()
        .filter(|tri| tri.iter().all(|&i| i < nv))
        .collect();

    let max_radius_deviation = t
        .vertices
        .iter()
        .map(|v| (v.norm() - 1.0).abs())
        .fold(0.0, f64::max);

    let mut undirected: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut directed: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for tri in &tris {
        for e in 0..3 {
            let (a, b) = (tri[e], tri[(e + 1) % 3]);
            *undirected.entry((a.min(b), a.max(b))).or_default() += 1;
            *directed.entry((a, b)).or_default() += 1;
        }
    }
    let consistently_oriented = directed.iter().all(|(&(a, b), &n)| {
        n == 1 && directed.get(&(b, a)).copied().unwrap_or(0) <= 1
    });

    let mut next: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for tri in &tris {
        for e in 0..3 {
            let (a, b) = (tri[e], tri[(e + 1) % 3]);
            if undirected[&(a.min(b), a.max(b))] == 1 {
                next.entry(a).or_default().push(b);
            }
        }
    }
    let boundary_loops = trace_loops(next);

    let euler_characteristic = nv as i64 - undirected.len() as i64 + tris.len() as i64;

    let outward = tris.iter().all(|&[a, b, c]| {
        let (pa, pb, pc) = (t.vertices[a], t.vertices[b], t.vertices[c]);
        let n = (pb - pa).cross(&(pc - pa));
        n.dot(&((pa + pb + pc) / 3.0)) > 0.0
    });
    let symmetric = t.vertices.iter().all(|v| {
        let m = Vec3::new(-v.x, v.y, v.z);
        t.vertices.iter().any(|w| (w - m).norm() < 1e-9)
    });

    MeshValidationReport {
        vertex_count: nv,
        triangle_count: t.triangles.len(),
        boundary_loops,
        max_radius_deviation,
        is_mirror_consistent: outward && symmetric,
        consistently_oriented,
        indices_in_range,
        euler_characteristic,
    }
}

fn trace_loops(mut next: BTreeMap<usize, Vec<usize>>) -> Vec<Vec<usize>> {
    let mut loops = Vec::new();
    while let Some((&start, _)) = next.iter().find(|(_, v)| !v.is_empty()) {
        let mut cycle = vec![start];
        let mut cur = start;
        while let Some(outs) = next.get_mut(&cur) {
            if outs.is_empty() {
                break;
            }
            let nxt = outs.remove(0);
            if nxt == start {
                break;
            }
            cycle.push(nxt);
            cur = nxt;
        }
        loops.push(cycle);
    }
    loops
}

/// Exact mirror check: same index carries `(-x, y, z)`, windings reversed.
pub fn is_mirror_pair(left: &EyeballTemplate, right: &EyeballTemplate) -> bool {
    left.side == Side::Left
        && right.side == Side::Right
        && left.vertices.len() == right.vertices.len()
        && left
            .vertices
            .iter()
            .zip(&right.vertices)
            .all(|(l, r)| l.x == -r.x && l.y == r.y && l.z == r.z)
        && left.triangles.len() == right.triangles.len()
        && left
            .triangles
            .iter()
            .zip(&right.triangles)
            .all(|(&[a, b, c], r)| *r == [a, c, b])
        && left.regions == right.regions
}

/// Vertex indices grouped into rings by polar angle (apex excluded).
pub fn rings(t: &EyeballTemplate) -> Vec<Vec<usize>> {
    let mut by_ring: BTreeMap<i64, BTreeSet<usize>> = BTreeMap::new();
    for (i, v) in t.vertices.iter().enumerate().skip(1) {
        let key = (v.dot(&t.optical_axis) * 1e9).round() as i64;
        by_ring.entry(-key).or_default().insert(i);
    }
    by_ring.into_values().map(|s| s.into_iter().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_counts() {
        let t = EyeballTemplate::standard(Side::Left);
        assert_eq!(t.vertex_count(), 481);
        assert_eq!(t.triangle_count(), 928);
        assert_eq!(t.vertices[0], Vec3::new(0.0, 0.0, -1.0));
    }

    #[test]
    fn minimal_cap() {
        let t = build_template(3, 2, Side::Left).unwrap();
        assert_eq!(t.vertex_count(), 4);
        assert_eq!(t.triangle_count(), 3);
        let r = validate(&t);
        assert_eq!(r.boundary_loops.len(), 1);
        assert_eq!(r.boundary_loops[0].len(), 3);
        assert_eq!(r.euler_characteristic, 1);
    }

    #[test]
    fn parameter_errors() {
        assert!(matches!(build_template(2, 16, Side::Left), Err(OcuError::Parameter(_))));
        assert!(matches!(build_template(32, 1, Side::Left), Err(OcuError::Parameter(_))));
    }

    #[test]
    fn right_mirrors_left() {
        let l = EyeballTemplate::standard(Side::Left);
        let r = EyeballTemplate::standard(Side::Right);
        assert!(is_mirror_pair(&l, &r));
        assert_eq!(r.side, Side::Right);
        assert!(validate(&r).is_mirror_consistent);
        assert!(validate(&r).consistently_oriented);
    }

    #[test]
    fn validate_default() {
        let t = EyeballTemplate::standard(Side::Left);
        let r = validate(&t);
        assert_eq!(r.vertex_count, 481);
        assert_eq!(r.triangle_count, 928);
        assert_eq!(r.boundary_loops.len(), 1);
        assert_eq!(r.boundary_loops[0].len(), 32);
        assert!(r.max_radius_deviation < 1e-9);
        assert!(r.is_mirror_consistent);
        assert!(r.consistently_oriented);
        assert_eq!(r.euler_characteristic, 1);
        // the loop is the last ring
        let last: BTreeSet<usize> = (449..481).collect();
        assert_eq!(r.boundary_loops[0].iter().copied().collect::<BTreeSet<_>>(), last);
    }

    #[test]
    fn deleting_a_triangle_opens_a_second_loop() {
        let mut t = EyeballTemplate::standard(Side::Left);
        t.triangles.remove(100);
        let r = validate(&t);
        assert_eq!(r.boundary_loops.len(), 2);
        assert_eq!(r.triangle_count, 927);
    }

    #[test]
    fn scaled_vertices_report_radius_deviation() {
        let mut t = EyeballTemplate::standard(Side::Left);
        for v in &mut t.vertices {
            *v *= 2.0;
        }
        assert!((validate(&t).max_radius_deviation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unflipped_mirror_is_not_consistent() {
        let l = EyeballTemplate::standard(Side::Left);
        let mut bad = l.mirrored();
        bad.triangles = l.triangles.clone();
        assert!(!validate(&bad).is_mirror_consistent);
        assert!(!is_mirror_pair(&l, &bad));
    }

    #[test]
    fn region_examples() {
        let t = EyeballTemplate::standard(Side::Left);
        assert_eq!(region_indices(&t, "apex").unwrap(), vec![0]);
        let border = region_indices(&t, "iris_border").unwrap();
        assert_eq!(border, (33..65).collect::<Vec<_>>());
        for &i in &border {
            let polar = (-t.vertices[i].z).acos().to_degrees();
            assert!((polar - 22.5).abs() < 1e-9);
        }
        let iris: BTreeSet<_> = region_indices(&t, "iris").unwrap().into_iter().collect();
        let sclera: BTreeSet<_> = region_indices(&t, "sclera").unwrap().into_iter().collect();
        let cornea: BTreeSet<_> = region_indices(&t, "cornea").unwrap().into_iter().collect();
        assert!(iris.is_disjoint(&sclera));
        assert!(cornea.is_disjoint(&sclera));
        assert!(iris.contains(&0));
        assert!(border.iter().all(|i| cornea.contains(i) && iris.contains(i)));
        assert_eq!(iris.len() + sclera.len() + 32, 481);
        assert!(matches!(region_indices(&t, "pupil"), Err(OcuError::Parameter(_))));
    }

    #[test]
    fn iris_border_geometry() {
        let t = EyeballTemplate::standard(Side::Left);
        assert!((t.iris_border_angle().to_degrees() - 22.5).abs() < 1e-9);
        let c = t.iris_centroid();
        assert!(c.x.abs() < 1e-12 && c.y.abs() < 1e-12 && c.z < 0.0);
    }

    #[test]
    fn rings_follow_the_generator() {
        let t = EyeballTemplate::standard(Side::Right);
        let rs = rings(&t);
        assert_eq!(rs.len(), 15);
        assert_eq!(rs[1], (33..65).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_build() {
        let a = build_template(32, 16, Side::Left).unwrap();
        let b = build_template(32, 16, Side::Left).unwrap();
        assert!(a
            .vertices
            .iter()
            .zip(&b.vertices)
            .all(|(x, y)| x.iter().zip(y.iter()).all(|(p, q)| p.to_bits() == q.to_bits())));
        assert_eq!(a.triangles, b.triangles);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn counts_and_topology(sectors in 3usize..40, stacks in 2usize..24, right in any::<bool>()) {
                let side = if right { Side::Right } else { Side::Left };
                let t = build_template(sectors, stacks, side).unwrap();
                prop_assert_eq!(t.vertex_count(), (stacks - 1) * sectors + 1);
                prop_assert_eq!(t.triangle_count(), sectors + 2 * sectors * (stacks - 2));
                let r = validate(&t);
                prop_assert_eq!(r.boundary_loops.len(), 1);
                prop_assert_eq!(r.boundary_loops[0].len(), sectors);
                prop_assert_eq!(r.euler_characteristic, 1);
                prop_assert!(r.consistently_oriented);
                prop_assert!(r.indices_in_range);
                prop_assert!(r.max_radius_deviation < 1e-9);
            }
        }
    }
}
