use ikdiff::assets::{self, DOWN, PALM_NORMAL, RIGHT_FINGERTIP, RIGHT_HAND};
use ikdiff::grad::value_and_gradient;
use ikdiff::{DofLayout, ObjectiveSpec, ObjectiveTerm, Skeleton};
use proptest::prelude::*;

fn setup() -> (Skeleton, DofLayout) {
    let skel = assets::humanoid();
    let layout = assets::right_arm_layout(&skel).unwrap();
    (skel, layout)
}

fn composite(skel: &Skeleton, n: usize, target: [f64; 3], star: Vec<f64>, mask: Vec<bool>) -> ObjectiveSpec {
    let tip = skel.index_of(RIGHT_FINGERTIP).unwrap();
    let hand = skel.index_of(RIGHT_HAND).unwrap();
    assert_eq!(star.len(), n);
    ObjectiveSpec::new(vec![
        ObjectiveTerm::distance(1.0, tip, [0.0; 3], target),
        ObjectiveTerm::look_at(0.1, hand, PALM_NORMAL, DOWN),
        ObjectiveTerm::known_rotation(1.0, star, mask),
    ])
    .unwrap()
}

fn eval(spec: &ObjectiveSpec, skel: &Skeleton, layout: &DofLayout, theta: &[f64]) -> f64 {
    spec.evaluate(skel, layout, ikdiff::Context::Pose(theta)).unwrap()
}

/// Independent central differences.
fn numeric_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .filter(|(a, n)| a.abs().max(n.abs()) > 1e-8)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()))
        .fold(0.0, f64::max)
}

fn in_bounds(layout: &DofLayout) -> impl Strategy<Value = Vec<f64>> {
    let ranges: Vec<_> = layout.lower().iter().zip(layout.upper()).map(|(&l, &u)| l..=u).collect();
    ranges
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composite_gradient_matches_finite_differences(
        theta in in_bounds(&setup().1),
        star in proptest::collection::vec(-0.5f64..0.5, 8),
        mask in proptest::collection::vec(any::<bool>(), 8),
        target in proptest::array::uniform3(-1.0f64..2.0),
    ) {
        let (skel, layout) = setup();
        let spec = composite(&skel, layout.len(), target, star, mask);
        let (value, grad) = value_and_gradient(&spec, &skel, &layout, &theta).unwrap();
        prop_assert!((value - eval(&spec, &skel, &layout, &theta)).abs() <= f64::EPSILON * value.abs().max(1.0));
        let fd = numeric_gradient(|t| eval(&spec, &skel, &layout, t), &theta, 1e-6);
        prop_assert!(max_relative_error(&grad, &fd) < 1e-4, "analytic {:?} numeric {:?}", grad, fd);
    }

    #[test]
    fn gradient_is_linear_in_the_weights(
        theta in in_bounds(&setup().1),
        a in 0.0f64..3.0,
        b in 0.0f64..3.0,
    ) {
        let (skel, layout) = setup();
        let tip = skel.index_of(RIGHT_FINGERTIP).unwrap();
        let hand = skel.index_of(RIGHT_HAND).unwrap();
        let j1 = ObjectiveTerm::distance(1.0, tip, [0.0; 3], [-0.4, 1.2, 0.3]);
        let j2 = ObjectiveTerm::look_at(1.0, hand, PALM_NORMAL, DOWN);
        let g = |terms: Vec<ObjectiveTerm>| value_and_gradient(&ObjectiveSpec::new(terms).unwrap(), &skel, &layout, &theta).unwrap().1;
        let g1 = g(vec![j1.clone()]);
        let g2 = g(vec![j2.clone()]);
        let combined = g(vec![
            ObjectiveTerm { weight: a, ..j1 },
            ObjectiveTerm { weight: b, ..j2 },
        ]);
        for i in 0..theta.len() {
            prop_assert!((combined[i] - (a * g1[i] + b * g2[i])).abs() < 1e-10);
        }
    }
}

#[test]
fn gradient_is_deterministic() {
    let (skel, layout) = setup();
    let theta: Vec<f64> = layout.lower().iter().zip(layout.upper()).map(|(l, u)| l + 0.37 * (u - l)).collect();
    let spec = composite(&skel, layout.len(), [-0.5, 1.5, 0.2], vec![0.1; 8], vec![true; 8]);
    let first = value_and_gradient(&spec, &skel, &layout, &theta).unwrap();
    for _ in 0..5 {
        let again = value_and_gradient(&spec, &skel, &layout, &theta).unwrap();
        assert_eq!(first.0.to_bits(), again.0.to_bits());
        assert!(first.1.iter().zip(&again.1).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn unknown_bone_is_reported() {
    let (skel, layout) = setup();
    let spec = ObjectiveSpec::new(vec![ObjectiveTerm::distance(1.0, 99, [0.0; 3], [0.0; 3])]).unwrap();
    assert!(value_and_gradient(&spec, &skel, &layout, &layout.rest()).is_err());
}
