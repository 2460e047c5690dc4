use proptest::prelude::*;
use quatnet::calculus::{
    component_partials, demo_chain_rule_failure, demo_ghr_product_rule, demo_product_rule_failure, ghr_derivative,
    hr_derivative, HrVariant, DEFAULT_STEP,
};
use quatnet::{Axis, Quaternion};

fn quat(range: f64) -> impl Strategy<Value = Quaternion> {
    prop::array::uniform4(-range..range).prop_map(Quaternion::from_array)
}

fn close(a: Quaternion, b: Quaternion, tol: f64) -> bool {
    a.max_abs_diff(b) <= tol * a.norm().max(b.norm()).max(1.0)
}

type RealFn = fn(Quaternion) -> Quaternion;

const CATALOG: [RealFn; 3] = [
    |q| Quaternion::from_real(q.norm_sqr()),
    |q| Quaternion::from_real(q.q0),
    |q| Quaternion::from_real(q.q0 * q.q0 + q.q1 * q.q1),
];

#[test]
fn hr_derivatives_of_basic_functions() {
    let q = Quaternion::new(0.4, -1.2, 0.7, 2.0);
    let plain = HrVariant { involution: None, conjugate: false };
    let d = |f: RealFn| hr_derivative(&component_partials(f, q, DEFAULT_STEP).unwrap(), plain);
    assert!(close(d(|x| x), Quaternion::one(), 1e-6));
    assert!(close(d(|x| x.conjugate()), Quaternion::from_real(-0.5), 1e-6));
    for axis in Axis::ALL {
        // Involutions are independent of q in the HR sense.
        let p = component_partials(move |x| x.involution(axis), q, DEFAULT_STEP).unwrap();
        assert!(close(hr_derivative(&p, plain), Quaternion::zero(), 1e-6));
        assert!(close(hr_derivative(&p, HrVariant::involution(axis)), Quaternion::one(), 1e-6));
    }
}

#[test]
fn product_rule_at_i() {
    let r = demo_product_rule_failure(Quaternion::i()).unwrap();
    assert!(close(r.naive, Quaternion::new(0.0, 2.0, 0.0, 0.0), 1e-6));
    assert!(close(r.product_rule, Quaternion::new(0.0, 6.0, 0.0, 0.0), 1e-6));
    let r = demo_product_rule_failure(Quaternion::from_real(-1.7)).unwrap();
    assert!(r.degenerate && r.gap < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn conjugate_rule_for_real_functions(q in quat(2.0), mu in quat(2.0), f in 0..3usize) {
        prop_assume!(mu.norm() > 0.1);
        let p = component_partials(CATALOG[f], q, DEFAULT_STEP).unwrap();
        let plain = ghr_derivative(&p, mu, false).unwrap();
        let conj = ghr_derivative(&p, mu, true).unwrap();
        prop_assert!(close(plain.conjugate(), conj, 1e-6));
    }

    #[test]
    fn ghr_chain_rule(w in quat(2.0), q in quat(2.0)) {
        let g = |x: Quaternion| w * x;
        let f = |z: Quaternion| z * z.conjugate();
        let direct = ghr_derivative(&component_partials(|x| f(g(x)), q, DEFAULT_STEP).unwrap(), Quaternion::one(), false).unwrap();
        let z = g(q);
        let mut chained = Quaternion::zero();
        for nu in [Quaternion::one(), Quaternion::i(), Quaternion::j(), Quaternion::k()] {
            let outer = ghr_derivative(&component_partials(f, z, DEFAULT_STEP).unwrap(), nu, false).unwrap();
            // g^ν = ν g ν⁻¹
            let rotated = |x: Quaternion| nu * g(x) * nu.conjugate();
            let inner = ghr_derivative(&component_partials(rotated, q, DEFAULT_STEP).unwrap(), Quaternion::one(), false).unwrap();
            chained += outer * inner;
        }
        prop_assert!(close(direct, chained, 1e-6), "{} vs {}", direct, chained);
    }

    #[test]
    fn naive_product_rule_closed_forms(q in quat(2.0)) {
        let r = demo_product_rule_failure(q).unwrap();
        prop_assert!(close(r.naive, q.scale(2.0), 1e-6));
        prop_assert!(close(r.product_rule, q.scale(4.0) - q.conjugate().scale(2.0), 1e-6));
    }

    #[test]
    fn naive_chain_rule_closed_forms(x in quat(2.0), y in quat(2.0)) {
        let r = demo_chain_rule_failure(x, y).unwrap();
        prop_assert!(close(r.direct, x.scale(2.0 * y.norm_sqr()), 1e-6));
        prop_assert!(close(r.chained, (x * y * y.conjugate()).scale(-4.0), 1e-6));
    }

    #[test]
    fn ghr_derivative_of_norm_squared_is_half_conjugate(q in quat(2.0)) {
        let r = demo_ghr_product_rule(q).unwrap();
        prop_assert!(close(r.direct, q.conjugate().scale(0.5), 1e-6));
        prop_assert!(close(r.product_rule, r.direct, 1e-6));
    }
}
