use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use safetrack::geom::{HyperRect, SampleMode, Zonotope};
use safetrack::numerics::bounded_feasible;

fn zonotope(n: usize, max_q: usize) -> impl Strategy<Value = Zonotope> {
    (1..=max_q).prop_flat_map(move |q| {
        (
            prop::collection::vec(-2.0..2.0f64, n),
            prop::collection::vec(-1.0..1.0f64, n * q),
        )
            .prop_map(move |(c, g)| {
                Zonotope::new(DVector::from_vec(c), DMatrix::from_vec(n, q, g)).unwrap()
            })
    })
}

fn member(z: &Zonotope, x: &DVector<f64>) -> bool {
    bounded_feasible(z.generators(), &(x - z.center())).is_some()
}

/// Vertices of a 2D zonotope by brute force over all sign vectors, as the
/// convex hull of the candidate points (monotone chain).
fn vertices_2d(z: &Zonotope) -> Vec<[f64; 2]> {
    let q = z.order();
    let mut pts = Vec::new();
    for mask in 0..(1u32 << q) {
        let b = DVector::from_fn(q, |j, _| if mask >> j & 1 == 1 { 1.0 } else { -1.0 });
        let p = z.point_at(&b);
        pts.push([p[0], p[1]]);
    }
    convex_hull(pts)
}

fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 1e-12 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn same_point_set(a: &[[f64; 2]], b: &[[f64; 2]], tol: f64) -> bool {
    a.len() == b.len() && a.iter().all(|p| b.iter().any(|r| (p[0] - r[0]).abs() <= tol && (p[1] - r[1]).abs() <= tol))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn minkowski_difference_is_sound(
        z in zonotope(3, 6),
        w in prop::collection::vec(0.0..0.3f64, 3),
        seed in any::<u64>(),
    ) {
        let w = DVector::from_vec(w);
        let d = z.minkowski_diff_under(&w);
        prop_assume!(d.is_ok());
        let d = d.unwrap();
        let b = HyperRect::symmetric(&w).unwrap();
        for p in d.sample(1000, SampleMode::Uniform, seed).iter().chain(d.sample(50, SampleMode::Extreme, seed).iter()) {
            for v in b.vertices() {
                prop_assert!(member(&z, &(p + &v)), "{p} + {v} left the minuend");
            }
        }
    }

    #[test]
    fn shrink_stays_in_box_and_set(
        z in zonotope(3, 5),
        half in prop::collection::vec(0.05..1.5f64, 3),
        seed in any::<u64>(),
    ) {
        let b = HyperRect::from_center_radius(z.center(), &DVector::from_vec(half)).unwrap();
        let (s, alpha) = z.shrink_into_box(&b).unwrap();
        prop_assert!((0.0..=1.0).contains(&alpha));
        prop_assert!(b.contains_box(&s.interval_hull()));
        for p in s.sample(1000, SampleMode::Uniform, seed) {
            prop_assert!(member(&z, &p));
        }
        let (g, lambda) = z.shrink_into_box_per_generator(&b, None).unwrap();
        prop_assert!(lambda.iter().all(|l| (0.0..=1.0 + 1e-12).contains(l)));
        prop_assert!(b.contains_box(&g.interval_hull()));
        for p in g.sample(1000, SampleMode::Uniform, seed) {
            prop_assert!(member(&z, &p));
        }
    }

    #[test]
    fn interval_hull_encloses_samples_and_is_tight(z in zonotope(3, 6), seed in any::<u64>()) {
        let h = z.interval_hull();
        for p in z.sample(1000, SampleMode::Uniform, seed) {
            prop_assert!(h.contains(&p));
        }
        // Each hull face is attained at the sign vector of that row.
        let g = z.generators();
        for i in 0..z.dim() {
            let b = DVector::from_fn(z.order(), |j, _| if g[(i, j)] >= 0.0 { 1.0 } else { -1.0 });
            prop_assert!((z.point_at(&b)[i] - h.upper()[i]).abs() <= 1e-12);
            prop_assert!((z.point_at(&(-b))[i] - h.lower()[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn linear_map_maps_vertices(
        z in zonotope(2, 3),
        m in prop::collection::vec(-2.0..2.0f64, 4),
    ) {
        let m = DMatrix::from_vec(2, 2, m);
        prop_assume!(m.determinant().abs() > 1e-3);
        let img = z.linear_map(&m).unwrap();
        let mapped: Vec<[f64; 2]> = vertices_2d(&z)
            .iter()
            .map(|p| {
                let v = &m * DVector::from_row_slice(p);
                [v[0], v[1]]
            })
            .collect();
        prop_assert!(same_point_set(&vertices_2d(&img), &convex_hull(mapped), 1e-9));
    }

    #[test]
    fn projected_polygon_matches_brute_force(z in zonotope(2, 4)) {
        let poly = z.projected_polygon(0, 1);
        let brute = vertices_2d(&z);
        // The angle sort may emit extra collinear points; every brute-force
        // vertex must appear.
        prop_assert!(brute.iter().all(|v| poly.iter().any(|p| (p[0] - v[0]).abs() < 1e-9 && (p[1] - v[1]).abs() < 1e-9)));
    }

    #[test]
    fn membership_matches_vertex_hull_on_grid(z in zonotope(2, 3)) {
        let hull = vertices_2d(&z);
        prop_assume!(hull.len() >= 3);
        let h = z.interval_hull();
        for a in 0..50 {
            for b in 0..50 {
                let x = DVector::from_vec(vec![
                    h.lower()[0] + (h.upper()[0] - h.lower()[0]) * (a as f64 + 0.5) / 50.0,
                    h.lower()[1] + (h.upper()[1] - h.lower()[1]) * (b as f64 + 0.5) / 50.0,
                ]);
                // Signed distance to the hull edges, counterclockwise order.
                let mut inside = f64::INFINITY;
                for i in 0..hull.len() {
                    let (p, q) = (hull[i], hull[(i + 1) % hull.len()]);
                    let (ex, ey) = (q[0] - p[0], q[1] - p[1]);
                    let len = ex.hypot(ey);
                    inside = inside.min((ex * (x[1] - p[1]) - ey * (x[0] - p[0])) / len);
                }
                if inside.abs() < 1e-7 {
                    continue;
                }
                prop_assert_eq!(member(&z, &x), inside > 0.0, "grid point {}", x);
            }
        }
    }
}

#[test]
fn difference_of_boxes_example() {
    let z = Zonotope::new(DVector::zeros(2), DMatrix::identity(2, 2) * 2.0).unwrap();
    let d = z.minkowski_diff_under(&DVector::from_vec(vec![1.0, 1.0])).unwrap();
    let h = d.interval_hull();
    let unit = HyperRect::from_slices(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
    assert!(unit.contains_box(&h));
    for v in unit.vertices() {
        assert!(member(&d, &v));
    }
    let small = Zonotope::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
    assert!(small.minkowski_diff_under(&DVector::from_vec(vec![2.0, 2.0])).is_err());
}
