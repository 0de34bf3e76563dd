//! Sketch geometry and softmax semantics checked against independent
//! oracles: brute-force containment, winding numbers, shoelace areas and
//! region-membership Monte Carlo.

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use proptest::prelude::*;
use sketchsearch_core::geometry::{convex_hull, deflection_angle, reduce_hull};
use sketchsearch_core::rng::{stream, uniform};
use sketchsearch_core::semantics::{inflate, synthesize, ClassRole, RangeModel, DEFAULT_NEAR_INFLATION};
use sketchsearch_core::{ConvexPolygon, Point2};

fn stroke() -> Vec<Point2> {
    include_str!("data/rect_stroke.txt")
        .lines()
        .filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let mut it = l.split_whitespace().map(|v| v.parse::<f64>().unwrap());
            Point2::new(it.next().unwrap(), it.next().unwrap())
        })
        .collect()
}

/// Winding number of a closed vertex ring around `p`, independent of the
/// half-plane test the polygon type uses.
fn winding(vertices: &[Point2], p: Point2) -> i32 {
    let n = vertices.len();
    let mut w = 0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let is_left = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
        if a.y <= p.y {
            if b.y > p.y && is_left > 0.0 {
                w += 1;
            }
        } else if b.y <= p.y && is_left < 0.0 {
            w -= 1;
        }
    }
    w
}

fn shoelace(v: &[Point2]) -> f64 {
    let n = v.len();
    0.5 * (0..n).map(|i| v[i].x * v[(i + 1) % n].y - v[(i + 1) % n].x * v[i].y).sum::<f64>().abs()
}

/// Distance from `p` to the segment `ab`.
fn segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

#[test]
fn golden_path_stroke_to_five_classes() {
    let started = Instant::now();
    let points = stroke();
    assert_eq!(points.len(), 661);
    let hull = convex_hull(&points).unwrap();
    assert_eq!(hull.len(), 21);
    let poly = reduce_hull(&hull, 4);
    assert_eq!(poly.len(), 4);
    assert!(poly.vertices().iter().all(|v| hull.vertices().contains(v)), "reduction keeps hull vertices");
    let model = synthesize(&poly, 5.0).unwrap();
    assert_eq!(model.num_classes(), 5);
    assert!(started.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn hull_of_a_disc_sample_contains_every_point() {
    let mut rng = stream(1, 1);
    let pts: Vec<Point2> = (0..500)
        .map(|_| {
            let r = 100.0 * uniform(&mut rng).sqrt();
            Point2::new(500.0, 500.0) + Point2::from_polar(r, uniform(&mut rng) * TAU)
        })
        .collect();
    let hull = convex_hull(&pts).unwrap();
    for p in &pts {
        // Brute force: no point lies strictly right of any directed hull edge.
        for k in 0..hull.len() {
            let (a, b) = hull.edge(k);
            assert!((b - a).cross(*p - a) >= -1e-9, "{p:?} outside edge {k}");
        }
    }
}

#[test]
fn hexagon_exterior_angle() {
    let a = Point2::new(0.0, 0.0);
    let b = Point2::new(1.0, 0.0);
    let c = Point2::new(1.0 + (TAU / 6.0).cos(), (TAU / 6.0).sin());
    assert!((deflection_angle(a, b, c).unwrap() - PI / 3.0).abs() < 1e-12);
}

#[test]
fn containment_matches_winding_number_on_a_random_polygon() {
    let mut rng = stream(2, 1);
    let ring: Vec<Point2> = (0..40)
        .map(|_| Point2::new(200.0 + 600.0 * uniform(&mut rng), 300.0 + 400.0 * uniform(&mut rng)))
        .collect();
    let poly = convex_hull(&ring).unwrap();
    for _ in 0..10_000 {
        let p = Point2::new(1000.0 * uniform(&mut rng), 1000.0 * uniform(&mut rng));
        let on_boundary = (0..poly.len()).any(|k| {
            let (a, b) = poly.edge(k);
            segment_distance(p, a, b) < 1e-9
        });
        if !on_boundary {
            assert_eq!(poly.contains(p), winding(poly.vertices(), p) != 0, "{p:?}");
        }
    }
}

#[test]
fn exterior_class_wins_beyond_its_edge() {
    let poly = reduce_hull(&convex_hull(&stroke()).unwrap(), 4);
    let model = synthesize(&poly, 5.0).unwrap();
    let n = poly.len();
    let mut rng = stream(3, 1);
    for k in 0..n {
        let class = model
            .classes()
            .iter()
            .position(|c| c.role == ClassRole::Exterior(k))
            .expect("one exterior class per edge");
        let (a, b) = poly.edge(k);
        let normal = poly.outward_normal(k);
        let mut wins = 0;
        let trials = 1000;
        for _ in 0..trials {
            // Exterior wedge of edge k: beyond the edge line, between the
            // normals at its endpoints.
            let t = uniform(&mut rng);
            let d = 2.0 + 200.0 * uniform(&mut rng);
            let p = a + (b - a) * t + normal * d;
            let probs = model.class_probability(p);
            let best = (0..probs.len()).max_by(|i, j| probs[*i].total_cmp(&probs[*j])).unwrap();
            wins += usize::from(best == class);
        }
        assert!(wins as f64 >= 0.99 * trials as f64, "edge {k}: {wins}/{trials}");
    }
}

#[test]
fn interior_is_maximal_at_the_centroid_and_boundaries_follow_edges() {
    let poly = reduce_hull(&convex_hull(&stroke()).unwrap(), 4);
    let model = synthesize(&poly, 5.0).unwrap();
    let interior = model.interior_index().unwrap();
    let at_centroid = model.class_probability(poly.centroid());
    assert!((0..at_centroid.len()).all(|c| c == interior || at_centroid[c] < at_centroid[interior]));
    // The interior/exterior-k equal-probability locus sits on edge k,
    // measured relative to the polygon's size.
    let scale = poly.mean_vertex_radius();
    for k in 0..poly.len() {
        let ext = model.classes().iter().position(|c| c.role == ClassRole::Exterior(k)).unwrap();
        let (a, b) = poly.edge(k);
        let mid = a + (b - a) * 0.5;
        let normal = poly.outward_normal(k);
        // Bisection along the normal for p(interior) == p(exterior k).
        let (mut lo, mut hi) = (-0.3 * scale, 0.3 * scale);
        for _ in 0..60 {
            let m = 0.5 * (lo + hi);
            let p = model.class_probability(mid + normal * m);
            if p[interior] > p[ext] {
                lo = m;
            } else {
                hi = m;
            }
        }
        assert!(lo.abs() / scale < 0.01, "edge {k}: boundary {lo} m off the edge");
    }
}

#[test]
fn near_region_has_three_times_the_area() {
    let poly = reduce_hull(&convex_hull(&stroke()).unwrap(), 4);
    let big = inflate(&poly, DEFAULT_NEAR_INFLATION);
    let ratio = shoelace(big.vertices()) / shoelace(poly.vertices());
    assert!((ratio - 3.0).abs() <= 0.03, "area ratio {ratio}");
}

#[test]
fn far_from_the_sketch_is_not_near() {
    let poly = reduce_hull(&convex_hull(&stroke()).unwrap(), 4);
    let range = RangeModel::build(&poly, DEFAULT_NEAR_INFLATION, 5.0).unwrap();
    let c = poly.centroid();
    for theta in [0.0, 1.0, 2.5, 4.0] {
        let p = c + Point2::from_polar(500.0 + poly.mean_vertex_radius(), theta);
        assert!(range.p_near(p) < 0.01);
    }
    assert!(range.p_near(c) > 0.99);
}

fn point_strategy() -> impl Strategy<Value = (f64, f64)> {
    (0.0..1000.0f64, 0.0..1000.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hull_contains_its_inputs(pts in prop::collection::vec(point_strategy(), 3..80)) {
        let pts: Vec<Point2> = pts.into_iter().map(|(x, y)| Point2::new(x, y)).collect();
        if let Ok(hull) = convex_hull(&pts) {
            for p in &pts {
                for k in 0..hull.len() {
                    let (a, b) = hull.edge(k);
                    prop_assert!((b - a).cross(*p - a) >= -1e-6 * (b - a).norm());
                }
            }
            prop_assert!(hull.vertices().iter().all(|v| pts.contains(v)));
        }
    }

    #[test]
    fn reduction_keeps_a_convex_subset(pts in prop::collection::vec(point_strategy(), 8..60), target in 3usize..8) {
        let pts: Vec<Point2> = pts.into_iter().map(|(x, y)| Point2::new(x, y)).collect();
        if let Ok(hull) = convex_hull(&pts) {
            let reduced = reduce_hull(&hull, target);
            prop_assert_eq!(reduced.len(), target.min(hull.len()));
            prop_assert!(reduced.vertices().iter().all(|v| hull.vertices().contains(v)));
            prop_assert!(ConvexPolygon::new(reduced.vertices().to_vec()).is_ok());
        }
    }

    #[test]
    fn containment_agrees_with_winding(pts in prop::collection::vec(point_strategy(), 3..30), q in point_strategy()) {
        let pts: Vec<Point2> = pts.into_iter().map(|(x, y)| Point2::new(x, y)).collect();
        if let Ok(hull) = convex_hull(&pts) {
            let p = Point2::new(q.0, q.1);
            let on_boundary = (0..hull.len()).any(|k| { let (a, b) = hull.edge(k); segment_distance(p, a, b) < 1e-7 });
            if !on_boundary {
                prop_assert_eq!(hull.contains(p), winding(hull.vertices(), p) != 0);
            }
        }
    }
}
