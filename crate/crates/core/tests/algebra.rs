use num_rational::Ratio;
use proptest::prelude::*;
use quatnet::quaternion::{reconstruct, Identity};
use quatnet::{Axis, Quat, Quaternion};

/// Hamilton product from the unit multiplication table, written out
/// independently of the library.
fn table_product(x: [f64; 4], y: [f64; 4]) -> [f64; 4] {
    // (unit a) * (unit b) = sign * (unit idx)
    const TABLE: [[(f64, usize); 4]; 4] = [
        [(1.0, 0), (1.0, 1), (1.0, 2), (1.0, 3)],
        [(1.0, 1), (-1.0, 0), (1.0, 3), (-1.0, 2)],
        [(1.0, 2), (-1.0, 3), (-1.0, 0), (1.0, 1)],
        [(1.0, 3), (1.0, 2), (-1.0, 1), (-1.0, 0)],
    ];
    let mut out = [0.0; 4];
    for a in 0..4 {
        for b in 0..4 {
            let (s, idx) = TABLE[a][b];
            out[idx] += s * x[a] * y[b];
        }
    }
    out
}

fn quat(range: f64) -> impl Strategy<Value = Quaternion> {
    prop::array::uniform4(-range..range).prop_map(Quaternion::from_array)
}

fn close(a: Quaternion, b: Quaternion, tol: f64) -> bool {
    a.max_abs_diff(b) <= tol
}

#[test]
fn unit_products_follow_the_sign_table() {
    let (one, i, j, k) = (Quaternion::one(), Quaternion::i(), Quaternion::j(), Quaternion::k());
    assert_eq!(i * i, -one);
    assert_eq!(j * j, -one);
    assert_eq!(k * k, -one);
    assert_eq!(i * j * k, -one);
    for (x, y, z) in [(i, j, k), (j, k, i), (k, i, j)] {
        assert_eq!(x * y, z);
        assert_eq!(y * x, -z);
    }
}

#[test]
fn reconstruction_identities_are_exact_over_rationals() {
    let r = |n: i64, d: i64| Ratio::new(n, d);
    let samples = [
        Quat::new(r(1, 2), r(-3, 7), r(5, 3), r(2, 1)),
        Quat::new(r(0, 1), r(1, 1), r(-1, 9), r(4, 5)),
        Quat::new(r(-7, 4), r(0, 1), r(0, 1), r(11, 13)),
    ];
    for q in samples {
        for id in Identity::all() {
            let parts = if id.takes_conjugates() { q.conj_involutions() } else { q.involutions() };
            assert_eq!(reconstruct(parts, id), id.expected(q), "{id:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn product_matches_unit_table(x in quat(10.0), y in quat(10.0)) {
        let got = (x * y).to_array();
        let want = table_product(x.to_array(), y.to_array());
        for (g, w) in got.iter().zip(want) {
            prop_assert!((g - w).abs() <= 1e-12);
        }
    }

    #[test]
    fn associativity(x in quat(10.0), y in quat(10.0), z in quat(10.0)) {
        prop_assert!(close((x * y) * z, x * (y * z), 1e-12));
    }

    #[test]
    fn product_with_conjugate_is_norm_squared(q in quat(10.0)) {
        let p = q * q.conjugate();
        prop_assert!(close(p, Quaternion::from_real(q.norm_sqr()), 1e-12 * q.norm_sqr().max(1.0)));
        let p = q.conjugate() * q;
        prop_assert!(p.is_real() || p.imaginary().norm() <= 1e-12 * q.norm_sqr().max(1.0));
    }

    #[test]
    fn norm_is_multiplicative(x in quat(10.0), y in quat(10.0)) {
        prop_assert!(((x * y).norm() - x.norm() * y.norm()).abs() <= 1e-12 * (x.norm() * y.norm()).max(1.0));
    }

    #[test]
    fn conjugate_reverses_products(x in quat(10.0), y in quat(10.0)) {
        prop_assert!(close((x * y).conjugate(), y.conjugate() * x.conjugate(), 1e-12));
    }

    #[test]
    fn involutions_are_rotations_by_units(q in quat(10.0)) {
        for axis in Axis::ALL {
            let eta = Quaternion::unit(axis);
            // q^η = −η q η
            prop_assert!(close(q.involution(axis), -(eta * q * eta), 1e-12));
            prop_assert_eq!(q.involution(axis).involution(axis), q);
        }
    }

    #[test]
    fn reconstruction_identities_in_floating_point(q in quat(10.0)) {
        for id in Identity::all() {
            let parts = if id.takes_conjugates() { q.conj_involutions() } else { q.involutions() };
            let got = reconstruct(parts, id);
            let want = id.expected(q);
            for (g, w) in got.to_array().iter().zip(want.to_array()) {
                prop_assert!((g - w).abs() <= 4.0 * f64::EPSILON * q.norm().max(1.0), "{:?}: {} vs {}", id, got, want);
            }
        }
    }

    #[test]
    fn inverse_is_two_sided(q in quat(10.0)) {
        prop_assume!(q.norm() > 1e-3);
        let inv = q.inverse().unwrap();
        prop_assert!(close(q * inv, Quaternion::one(), 1e-12));
        prop_assert!(close(inv * q, Quaternion::one(), 1e-12));
    }
}

#[test]
fn generic_over_f32() {
    let x = Quat::<f32>::new(1.0, 2.0, 3.0, 4.0);
    assert_eq!(x * x.conjugate(), Quat::from_real(30.0));
}
