use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use safetrack::geom::HyperRect;
use safetrack::model::{check_jacobian_invertibility, Dubins, DynamicsModel, ProblemSpec};

fn random_point(rng: &mut safetrack::Rng) -> (DVector<f64>, DVector<f64>) {
    let x = DVector::from_vec(vec![
        rng.random_range(0.0..5.0),
        rng.random_range(0.0..2.0),
        rng.random_range(-1.5..1.5),
    ]);
    let u = DVector::from_vec(vec![rng.random_range(-8.0..8.0), rng.random_range(-5.0..5.0)]);
    (x, u)
}

#[test]
fn jacobians_match_central_differences() {
    let model = Dubins::standard();
    let mut rng = safetrack::rng_from_seed(1);
    let h = 1e-6;
    for _ in 0..100 {
        let (x, u) = random_point(&mut rng);
        let (a, b) = model.jacobians(&x, &u);
        let fd_a = DMatrix::from_fn(3, 3, |i, j| {
            let mut e = DVector::zeros(3);
            e[j] = h;
            (model.step(&(&x + &e), &u)[i] - model.step(&(&x - &e), &u)[i]) / (2.0 * h)
        });
        let fd_b = DMatrix::from_fn(3, 2, |i, j| {
            let mut e = DVector::zeros(2);
            e[j] = h;
            (model.step(&x, &(&u + &e))[i] - model.step(&x, &(&u - &e))[i]) / (2.0 * h)
        });
        assert!((&a - fd_a).amax() <= 1e-5 * a.amax().max(1.0));
        assert!((&b - fd_b).amax() <= 1e-5 * b.amax().max(1.0));
    }
}

#[test]
fn hessian_bounds_dominate_sampled_second_differences() {
    let model = Dubins::standard();
    let mut rng = safetrack::rng_from_seed(2);
    let tx = HyperRect::from_slices(&[0.9, 0.9, -0.4], &[1.1, 1.1, 0.3]).unwrap();
    let tu = HyperRect::from_slices(&[1.0, -1.0], &[3.0, 1.0]).unwrap();
    let bounds: Vec<DMatrix<f64>> = (0..3).map(|i| model.hessian_bound(i, &tx, &tu)).collect();
    let h = 1e-4;
    for _ in 0..10_000 {
        let z = DVector::from_fn(5, |j, _| {
            let (lo, hi) = if j < 3 {
                (tx.lower()[j], tx.upper()[j])
            } else {
                (tu.lower()[j - 3], tu.upper()[j - 3])
            };
            rng.random_range(lo..=hi)
        });
        let f = |z: &DVector<f64>| model.step(&z.rows(0, 3).into_owned(), &z.rows(3, 2).into_owned());
        for p in 0..5 {
            for q in 0..5 {
                let mut ep = DVector::zeros(5);
                ep[p] = h;
                let mut eq = DVector::zeros(5);
                eq[q] = h;
                let second = (f(&(&z + &ep + &eq)) - f(&(&z + &ep - &eq)) - f(&(&z - &ep + &eq)) + f(&(&z - &ep - &eq)))
                    / (4.0 * h * h);
                for i in 0..3 {
                    assert!(
                        second[i].abs() <= bounds[i][(p, q)] + 1e-5,
                        "component {i} entry ({p},{q}): {} > {}",
                        second[i],
                        bounds[i][(p, q)]
                    );
                }
            }
        }
    }
    // The heading curvature of px is tau * |v cos(theta)| <= tau * max|v|.
    assert!(bounds[0][(2, 2)] <= model.tau * 3.0 + 1e-12);
}

#[test]
fn widening_input_tube_never_lowers_bounds() {
    let model = Dubins::standard();
    let tx = HyperRect::from_slices(&[0.9, 0.9, -0.4], &[1.1, 1.1, 0.3]).unwrap();
    let narrow = HyperRect::from_slices(&[1.5, -0.5], &[2.5, 0.5]).unwrap();
    let wide = HyperRect::from_slices(&[1.0, -1.0], &[3.0, 1.0]).unwrap();
    for i in 0..3 {
        let a = model.hessian_bound(i, &tx, &narrow);
        let b = model.hessian_bound(i, &tx, &wide);
        assert!(a.iter().zip(b.iter()).all(|(a, b)| a <= b));
    }
}

#[test]
fn dubins_is_invertible_over_the_operating_domain() {
    let spec = ProblemSpec::dubins_benchmark([1.0, 1.0, 0.0]);
    let report = check_jacobian_invertibility(&Dubins::standard(), &spec.operating, &spec.inputs, 2000, 0);
    assert!(report.passed());
    // ||D_x f - I||_inf = tau * |v| <= 0.05 * 8.
    assert!(report.max_perturbation_norm <= 0.4 + 1e-12);
}
