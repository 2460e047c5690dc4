//! Real 4×4 block representation of Hamilton products.

/// `L(w)` with `L(w)·x = w ⊗ x` on component vectors.
pub fn left_block(w: [f64; 4]) -> [[f64; 4]; 4] {
    let [w0, w1, w2, w3] = w;
    [
        [w0, -w1, -w2, -w3],
        [w1, w0, -w3, w2],
        [w2, w3, w0, -w1],
        [w3, -w2, w1, w0],
    ]
}

/// `R(y)` with `R(y)·x = x ⊗ y` on component vectors.
pub fn right_block(y: [f64; 4]) -> [[f64; 4]; 4] {
    let [y0, y1, y2, y3] = y;
    [
        [y0, -y1, -y2, -y3],
        [y1, y0, y3, -y2],
        [y2, -y3, y0, y1],
        [y3, y2, -y1, y0],
    ]
}

pub fn matvec4(m: &[[f64; 4]; 4], v: [f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (o, row) in out.iter_mut().zip(m) {
        *o = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
    }
    out
}

/// `mᵀ v`.
pub fn matvec4_t(m: &[[f64; 4]; 4], v: [f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (r, row) in m.iter().enumerate() {
        for c in 0..4 {
            out[c] += row[c] * v[r];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Quaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn blocks_reproduce_hamilton_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
            let b: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
            let prod = (Quaternion::from_array(a) * Quaternion::from_array(b)).to_array();
            for (got, want) in [(matvec4(&left_block(a), b), prod), (matvec4(&right_block(b), a), prod)] {
                for c in 0..4 {
                    assert!((got[c] - want[c]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn left_block_of_unit_quaternion_is_orthogonal() {
        let w = Quaternion::new(0.5, 0.5, -0.5, 0.5).to_array();
        let l = left_block(w);
        for c in 0..4 {
            let mut e = [0.0; 4];
            e[c] = 1.0;
            let back = matvec4_t(&l, matvec4(&l, e));
            for r in 0..4 {
                assert!((back[r] - e[r]).abs() < 1e-15);
            }
        }
    }
}
