use ocumesh::gaze::angular_error;
use ocumesh::geometry::{Rotation, Vec3};
use ocumesh::labeling::{pair_gaze, pseudo_label, EyeAnchors, FaceAnchors, Vec2};
use ocumesh::synthworld::{generate, SceneConfig};
use ocumesh::template::TemplatePair;
use proptest::prelude::*;

/// Rotates every 3D anchor by `q` and every 2D iris point by its in-plane part.
fn rotate_anchors(a: &FaceAnchors, q: &Rotation) -> FaceAnchors {
    let eye = |e: &EyeAnchors| EyeAnchors {
        corners: [q.apply(&e.corners[0]), q.apply(&e.corners[1])],
        centroid: q.apply(&e.centroid),
    };
    let iris = |pts: &[Vec2]| -> Vec<Vec2> {
        pts.iter()
            .map(|p| {
                let r = q.apply(&Vec3::new(p.x, p.y, 0.0));
                Vec2::new(r.x, r.y)
            })
            .collect()
    };
    FaceAnchors {
        left: eye(&a.left),
        right: eye(&a.right),
        iris_left: iris(&a.iris_left),
        iris_right: iris(&a.iris_right),
        gaze: a.gaze.map(|g| q.apply(&g)),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pseudo_label_commutes_with_in_plane_rotation(theta in -180.0f64..180.0, seed in 0u64..1000) {
        let t = TemplatePair::standard();
        let samples = generate(&SceneConfig { seed, n_samples: 20, ..Default::default() }).unwrap();
        let q = Rotation::about_z(theta);
        for s in &samples {
            let (base, _) = pseudo_label(&s.anchors, &t).unwrap();
            let (turned, _) = pseudo_label(&rotate_anchors(&s.anchors, &q), &t).unwrap();
            let g0 = pair_gaze(&base).unwrap();
            let g1 = pair_gaze(&turned).unwrap();
            prop_assert!(angular_error(&q.apply(&g0), &g1).unwrap() < 1e-3);
            for (a, b) in base.eyes().iter().zip(turned.eyes()) {
                let tol = 1e-6 * a.scale().max(1.0);
                for (x, y) in a.vertices().iter().zip(b.vertices()) {
                    prop_assert!((q.apply(x) - y).norm() < tol);
                }
            }
        }
    }
}
