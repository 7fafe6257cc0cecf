//! Estimator and verifier agree with exact answers on low-dimensional nets.

use approxviol::mlp::{Layer, Matrix, MarginNet, Mlp, MlpSpec};
use approxviol::properties::{
    approximate_violation, property_violation, InputBox, Origin, Property, PropertySet,
};
use approxviol::rng_from_seed;
use approxviol::verify::formal_violation;

/// Fraction of a dense cell-centred grid on which the forbidden action wins.
fn grid_fraction(net: &Mlp, prop: &Property, n: usize) -> f64 {
    let lo = prop.pre.lower();
    let hi = prop.pre.upper();
    let mut rows = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let u = (i as f64 + 0.5) / n as f64;
            let v = (j as f64 + 0.5) / n as f64;
            rows.push(vec![lo[0] + u * (hi[0] - lo[0]), lo[1] + v * (hi[1] - lo[1])]);
        }
    }
    let m = MarginNet::new(net, prop.forbidden_action).unwrap();
    m.count_selected(&Matrix::from_rows(&rows).unwrap()).unwrap() as f64 / (n * n) as f64
}

fn two_d_prop(k: usize) -> Property {
    Property::new(InputBox::from_bounds(&[-1.0, -1.0], &[1.0, 1.0]).unwrap(), k, Origin::HardCoded)
}

#[test]
fn estimator_matches_grid_on_2d_nets() {
    for seed in 0..5 {
        let net = Mlp::new(MlpSpec::new(vec![2, 16, 16, 3]).unwrap(), &mut rng_from_seed(seed)).unwrap();
        for k in 0..3 {
            let prop = two_d_prop(k);
            let grid = grid_fraction(&net, &prop, 400);
            let est = property_violation(&net, &prop, 40_000, &mut rng_from_seed(100 + seed)).unwrap();
            // Binomial standard error at m = 40000 is at most 0.0025.
            assert!((est - grid).abs() < 0.0125, "seed {seed} k {k}: {est} vs {grid}");
        }
    }
}

#[test]
fn verifier_brackets_grid_on_2d_nets() {
    for seed in 0..3 {
        let net = Mlp::new(MlpSpec::new(vec![2, 16, 16, 3]).unwrap(), &mut rng_from_seed(seed)).unwrap();
        for k in 0..3 {
            let prop = two_d_prop(k);
            let r = formal_violation(&net, &prop, 0.005, 1_000_000).unwrap();
            assert!(!r.budget_exhausted);
            assert!(r.gap() <= 0.005);
            let grid = grid_fraction(&net, &prop, 400);
            // The grid itself is only accurate to about the boundary cell fraction.
            assert!(grid >= r.violation_lower - 0.01 && grid <= r.violation_upper + 0.01, "{grid} vs {r:?}");
        }
    }
}

#[test]
fn half_plane_is_exact() {
    // y0 = x0, y1 = 0: action 0 is selected on x0 ≥ 0, exactly 3/4 of [-0.5, 1.5].
    let layer = Layer { n_in: 2, n_out: 2, weights: vec![1.0, 0.0, 0.0, 0.0], biases: vec![0.0, 0.0] };
    let net = Mlp::from_layers(vec![layer]).unwrap();
    let prop = Property::new(InputBox::from_bounds(&[-0.5, 0.0], &[1.5, 1.0]).unwrap(), 0, Origin::HardCoded);
    let r = formal_violation(&net, &prop, 0.001, 100_000).unwrap();
    assert!(r.violation_lower <= 0.75 && 0.75 <= r.violation_upper);
    let est = property_violation(&net, &prop, 100_000, &mut rng_from_seed(1)).unwrap();
    assert!((est - 0.75).abs() < 0.01);
}

#[test]
fn per_state_average_over_active_properties() {
    let layer = Layer { n_in: 2, n_out: 2, weights: vec![1.0, 0.0, 0.0, 0.0], biases: vec![0.0, 0.0] };
    let net = Mlp::from_layers(vec![layer]).unwrap();
    // Action 0 always wins on x0 > 0, never on x0 < 0.
    let props = PropertySet::new(vec![
        Property::new(InputBox::from_bounds(&[0.1, 0.0], &[1.0, 1.0]).unwrap(), 0, Origin::HardCoded),
        Property::new(InputBox::from_bounds(&[-1.0, 0.0], &[-0.1, 1.0]).unwrap(), 0, Origin::HardCoded),
        Property::new(InputBox::from_bounds(&[0.1, 0.0], &[1.0, 1.0]).unwrap(), 1, Origin::HardCoded),
    ]);
    let est = approximate_violation(&net, &props, &[0.5, 0.5], 500, &mut rng_from_seed(0)).unwrap();
    assert_eq!(est.active_count, 2);
    assert_eq!(est.value, 0.5);
}
