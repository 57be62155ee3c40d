//! Gaze directions from eye meshes, fusion and angular error reports.

use serde::{Deserialize, Serialize};

use crate::error::{OcuError, Result};
use crate::geometry::Vec3;
use crate::labeling::EyeMesh;
use crate::losses::gaze_loss;
use crate::template::Region;

/// Minimum norm of a direction sum before it is considered degenerate.
pub const FUSE_EPS: f64 = 1e-9;

/// Direction from the eyeball centre to the centroid of the iris vertices.
pub fn gaze_from_mesh(mesh: &EyeMesh) -> Result<Vec3> {
    let iris = mesh.template().region(Region::Iris);
    let v = mesh.vertices();
    let iris_center = iris.iter().map(|&i| v[i]).sum::<Vec3>() / iris.len() as f64;
    let d = iris_center - mesh.center();
    let n = d.norm();
    if !(n > 1e-12) {
        return Err(OcuError::Degenerate("iris centre coincides with eyeball centre".into()));
    }
    Ok(d / n)
}

fn normalized_sum(a: &Vec3, b: &Vec3, what: &str) -> Result<Vec3> {
    let s = a + b;
    let n = s.norm();
    if !(n >= FUSE_EPS) {
        return Err(OcuError::Degenerate(format!("{what} directions cancel out")));
    }
    Ok(s / n)
}

/// Sum of the per-eye directions, renormalized; a direct prediction, when
/// given, is averaged with that result at equal weight.
pub fn fuse_gaze(left: &Vec3, right: &Vec3, direct: Option<&Vec3>) -> Result<Vec3> {
    let eyes = normalized_sum(left, right, "left and right gaze")?;
    match direct {
        None => Ok(eyes),
        Some(d) => normalized_sum(&eyes, d, "mesh and direct gaze"),
    }
}

/// Angle between two directions in degrees; same definition as the gaze loss.
pub fn angular_error(g: &Vec3, g_star: &Vec3) -> Result<f64> {
    Ok(gaze_loss(g, g_star)?.value)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YawBin {
    pub max_yaw: f64,
    /// Absent when no sample falls in the bin.
    pub mean_error: Option<f64>,
    pub count: usize,
}

/// Mean error over cumulative bins `|yaw| < threshold`.
pub fn yaw_binned_report(errors: &[(f64, f64)], bins: &[f64]) -> Result<Vec<YawBin>> {
    if bins.is_empty() {
        return Err(OcuError::param("at least one yaw bin is required"));
    }
    if bins.iter().any(|b| !b.is_finite()) || bins.windows(2).any(|w| w[1] <= w[0]) {
        return Err(OcuError::param("yaw bin thresholds must be finite and strictly increasing"));
    }
    let mut sums = vec![0.0; bins.len()];
    let mut counts = vec![0usize; bins.len()];
    for &(yaw, err) in errors {
        let a = yaw.abs();
        for (k, &b) in bins.iter().enumerate() {
            if a < b {
                sums[k] += err;
                counts[k] += 1;
            }
        }
    }
    Ok(bins
        .iter()
        .zip(sums.iter().zip(&counts))
        .map(|(&max_yaw, (&s, &count))| YawBin {
            max_yaw,
            mean_error: (count > 0).then(|| s / count as f64),
            count,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{direction_from_yaw_pitch, Rotation};
    use crate::labeling::{fit_gt_eyeball, EyePose, Vec2};
    use crate::template::{EyeballTemplate, Side, TemplatePair};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn posed(rotation: Rotation) -> EyeMesh {
        EyeMesh::from_pose(
            TemplatePair::standard().left,
            EyePose {
                center: Vec3::new(2.0, -1.0, 7.0),
                scale: 11.0,
                rotation,
            },
        )
    }

    #[test]
    fn canonical_template_looks_down_the_optical_axis() {
        let g = gaze_from_mesh(&posed(Rotation::identity())).unwrap();
        assert!((g - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        let t = Arc::new(EyeballTemplate::standard(Side::Right));
        let raw = EyeMesh::from_vertices(t.clone(), t.vertices.clone()).unwrap();
        let g = gaze_from_mesh(&raw).unwrap();
        assert!((g - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-9);
    }

    #[test]
    fn gaze_round_trips_through_gt_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = TemplatePair::standard().right;
        for _ in 0..20 {
            let g = direction_from_yaw_pitch(rng.random_range(-60.0..60.0), rng.random_range(-40.0..40.0));
            let pts: Vec<Vec2> = (0..8)
                .map(|k| {
                    let a = k as f64 * std::f64::consts::TAU / 8.0;
                    Vec2::new(5.0 * a.cos() + 1.0, 4.0 * a.sin() - 2.0)
                })
                .collect();
            let mesh = fit_gt_eyeball(&pts, &g, t.clone()).unwrap();
            let back = gaze_from_mesh(&mesh).unwrap();
            assert!(angular_error(&back, &g).unwrap() < 1e-9);
        }
    }

    #[test]
    fn fuse_examples() {
        let f = Vec3::new(0.0, 0.0, -1.0);
        assert_eq!(fuse_gaze(&f, &f, None).unwrap(), f);
        let x = Vec3::new(1.0, 0.0, 0.0);
        let got = fuse_gaze(&x, &f, None).unwrap();
        assert!((got - Vec3::new(1.0, 0.0, -1.0) / 2f64.sqrt()).norm() < 1e-15);
        let g = direction_from_yaw_pitch(20.0, -10.0);
        assert!((fuse_gaze(&g, &g, Some(&g)).unwrap() - g).norm() < 1e-15);
        assert!(matches!(fuse_gaze(&x, &-x, None), Err(OcuError::Degenerate(_))));
        assert!(matches!(fuse_gaze(&f, &f, Some(&-f)), Err(OcuError::Degenerate(_))));
    }

    #[test]
    fn angular_error_examples() {
        let x = Vec3::new(1.0, 0.0, 0.0);
        let y = Vec3::new(0.0, 1.0, 0.0);
        assert_eq!(angular_error(&x, &x).unwrap(), 0.0);
        assert!((angular_error(&x, &y).unwrap() - 90.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let a = direction_from_yaw_pitch(rng.random_range(-180.0..180.0), rng.random_range(-89.0..89.0));
            let b = direction_from_yaw_pitch(rng.random_range(-180.0..180.0), rng.random_range(-89.0..89.0));
            let e = angular_error(&a, &b).unwrap();
            assert_eq!(e.to_bits(), gaze_loss(&a, &b).unwrap().value.to_bits());
        }
    }

    #[test]
    fn yaw_bin_examples() {
        let r = yaw_binned_report(&[(3.0, 10.0)], &[5.0, 20.0]).unwrap();
        assert_eq!(r[0].mean_error, Some(10.0));
        assert_eq!((r[0].count, r[1].count), (1, 1));
        let r = yaw_binned_report(&[(10.0, 4.0), (-30.0, 8.0)], &[20.0, 40.0]).unwrap();
        assert_eq!((r[0].mean_error, r[0].count), (Some(4.0), 1));
        assert_eq!((r[1].mean_error, r[1].count), (Some(6.0), 2));
        let r = yaw_binned_report(&[(50.0, 1.0)], &[5.0, 90.0]).unwrap();
        assert_eq!(r[0].mean_error, None);
        assert_eq!(r[0].count, 0);
        assert!(yaw_binned_report(&[], &[20.0, 5.0]).is_err());
    }

    #[test]
    fn yaw_bins_match_filter_and_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(1000);
        let samples: Vec<(f64, f64)> = (0..1000)
            .map(|_| (rng.random_range(-100.0..100.0), rng.random_range(0.0..30.0)))
            .collect();
        let bins = [5.0, 20.0, 40.0, 90.0];
        let r = yaw_binned_report(&samples, &bins).unwrap();
        for (bin, &b) in r.iter().zip(&bins) {
            let sel: Vec<f64> = samples.iter().filter(|s| s.0.abs() < b).map(|s| s.1).collect();
            assert_eq!(bin.count, sel.len());
            let mean = sel.iter().sum::<f64>() / sel.len() as f64;
            assert!((bin.mean_error.unwrap() - mean).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn gaze_is_rotation_equivariant(yaw in -179.0f64..179.0, pitch in -89.0f64..89.0, roll in -180.0f64..180.0) {
            let r = Rotation::from_yaw_pitch(yaw, pitch) * Rotation::about_z(roll);
            let base = gaze_from_mesh(&posed(Rotation::identity())).unwrap();
            let g = gaze_from_mesh(&posed(r)).unwrap();
            prop_assert!((g - r.apply(&base)).norm() < 1e-9);
        }

        #[test]
        fn fused_gaze_is_unit(
            a in (-170.0f64..170.0, -80.0f64..80.0),
            b in (-60.0f64..60.0, -60.0f64..60.0),
            c in (-60.0f64..60.0, -60.0f64..60.0),
        ) {
            let l = direction_from_yaw_pitch(b.0, b.1);
            let r = direction_from_yaw_pitch(c.0, c.1);
            let d = direction_from_yaw_pitch(a.0 / 4.0, a.1 / 4.0);
            let f = fuse_gaze(&l, &r, Some(&d)).unwrap();
            prop_assert!((f.norm() - 1.0).abs() < 1e-12);
            prop_assert!((fuse_gaze(&l, &l, None).unwrap() - l).norm() < 1e-12);
        }

        #[test]
        fn angular_error_obeys_triangle_inequality(
            a in (-180.0f64..180.0, -89.0f64..89.0),
            b in (-180.0f64..180.0, -89.0f64..89.0),
            c in (-180.0f64..180.0, -89.0f64..89.0),
        ) {
            let (a, b, c) = (
                direction_from_yaw_pitch(a.0, a.1),
                direction_from_yaw_pitch(b.0, b.1),
                direction_from_yaw_pitch(c.0, c.1),
            );
            let ac = angular_error(&a, &c).unwrap();
            let ab = angular_error(&a, &b).unwrap();
            let bc = angular_error(&b, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-9);
        }
    }
}
