use proptest::prelude::*;
use quatnet::autodiff::emulation::{left_block, matvec4, right_block};
use quatnet::layers::{
    activate, component_max_pool, magnitude_max_pool, Activation, Dropout, DropoutMode, Layer, Model, PoolMode,
    PoolSpec, ProductOrder, QConv1d, QLinear, Signal,
};
use quatnet::{Axis, QTensor, Quaternion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn quat() -> impl Strategy<Value = Quaternion> {
    prop::array::uniform4(-2.0..2.0f64).prop_map(Quaternion::from_array)
}

fn qtensor(shape: Vec<usize>) -> impl Strategy<Value = QTensor> {
    let n: usize = shape.iter().product();
    prop::collection::vec(quat(), n).prop_map(move |d| QTensor::new(shape.clone(), d).unwrap())
}

fn add4(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

fn near(a: [f64; 4], b: [f64; 4], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn linear_case() -> impl Strategy<Value = (QTensor, QTensor, QTensor)> {
    (1..4usize, 1..6usize, 1..6usize).prop_flat_map(|(b, n, m)| (qtensor(vec![m, n]), qtensor(vec![m]), qtensor(vec![b, n])))
}

fn conv_case() -> impl Strategy<Value = (QTensor, QTensor, QTensor, usize)> {
    (1..3usize, 1..4usize, 1..4usize, 1..4usize, 0..4usize, 1..3usize).prop_flat_map(|(b, ci, co, k, extra, s)| {
        (qtensor(vec![co, ci, k]), qtensor(vec![co]), qtensor(vec![b, ci, k + extra]), Just(s))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn qlinear_matches_real_block_emulation((w, bias, x) in linear_case()) {
        let layer = QLinear::new(w.clone(), bias.clone()).unwrap();
        let y = layer.forward(&x).unwrap();
        let [batch, n] = x.dims::<2>().unwrap();
        let m = bias.len();
        for b in 0..batch {
            for i in 0..m {
                let mut acc = bias.data()[i].to_array();
                for j in 0..n {
                    let blk = left_block(w.data()[i * n + j].to_array());
                    acc = add4(acc, matvec4(&blk, x.data()[b * n + j].to_array()));
                }
                prop_assert!(near(y.data()[b * m + i].to_array(), acc, 1e-12));
            }
        }
    }

    #[test]
    fn qconv_matches_real_block_emulation((w, bias, x, stride) in conv_case(), input_left in any::<bool>()) {
        let order = if input_left { ProductOrder::InputLeft } else { ProductOrder::WeightLeft };
        let conv = QConv1d::new(w.clone(), bias.clone(), stride, order).unwrap();
        let y = conv.forward(&x).unwrap();
        let [batch, c_in, len] = x.dims::<3>().unwrap();
        let [c_out, _, k] = w.dims::<3>().unwrap();
        let l_out = (len - k) / stride + 1;
        prop_assert_eq!(y.shape(), &[batch, c_out, l_out]);
        for b in 0..batch {
            for o in 0..c_out {
                for t in 0..l_out {
                    let mut acc = bias.data()[o].to_array();
                    for c in 0..c_in {
                        for kk in 0..k {
                            let wq = w.data()[(o * c_in + c) * k + kk].to_array();
                            let xq = x.data()[(b * c_in + c) * len + t * stride + kk].to_array();
                            // w x = L(w) x and x w = R(w) x
                            let blk = if input_left { right_block(wq) } else { left_block(wq) };
                            acc = add4(acc, matvec4(&blk, xq));
                        }
                    }
                    prop_assert!(near(y.data()[(b * c_out + o) * l_out + t].to_array(), acc, 1e-12));
                }
            }
        }
    }

    #[test]
    fn magnitude_pool_picks_window_members(x in (1..3usize, 1..3usize, 2..9usize).prop_flat_map(|(b, c, l)| qtensor(vec![b, c, l])), k in 1..4usize, s in 1..3usize) {
        let len = x.shape()[2];
        prop_assume!(k <= len);
        let spec = PoolSpec::new(PoolMode::Magnitude, k, s).unwrap();
        let (y, _) = magnitude_max_pool(&spec, &x).unwrap();
        let l_out = y.shape()[2];
        for (row, out) in x.data().chunks(len).zip(y.data().chunks(l_out)) {
            for (t, q) in out.iter().enumerate() {
                let window = &row[t * s..t * s + k];
                prop_assert!(window.contains(q));
                prop_assert!(window.iter().all(|w| w.norm_sqr() <= q.norm_sqr()));
            }
        }
    }

    #[test]
    fn component_pool_dominates_windows(x in (1..3usize, 1..3usize, 2..9usize).prop_flat_map(|(b, c, l)| qtensor(vec![b, c, l])), k in 1..4usize, s in 1..3usize) {
        let len = x.shape()[2];
        prop_assume!(k <= len);
        let spec = PoolSpec::new(PoolMode::Component, k, s).unwrap();
        let (y, _) = component_max_pool(&spec, &x).unwrap();
        let l_out = y.shape()[2];
        for (row, out) in x.data().chunks(len).zip(y.data().chunks(l_out)) {
            for (t, q) in out.iter().enumerate() {
                let window = &row[t * s..t * s + k];
                for c in 0..4 {
                    prop_assert!(window.iter().all(|w| w.component(c) <= q.component(c)));
                    prop_assert!(window.iter().any(|w| w.component(c) == q.component(c)));
                }
            }
        }
    }

    #[test]
    fn odd_activations_commute_with_involutions(z in qtensor(vec![6])) {
        for act in [Activation::Identity, Activation::Tanh, Activation::Tanhshrink] {
            let a = activate(act, &z);
            for axis in Axis::ALL {
                let zi = z.map(|q| q.involution(axis));
                let lhs = a.map(|q| q.involution(axis));
                prop_assert_eq!(activate(act, &zi), lhs);
            }
        }
    }
}

#[test]
fn relu_does_not_commute_with_involutions() {
    let z = QTensor::new(vec![1], vec![Quaternion::new(0.0, 1.0, 0.0, 0.0)]).unwrap();
    let lhs = activate(Activation::ReLU, &z).map(|q| q.involution(Axis::J));
    let rhs = activate(Activation::ReLU, &z.map(|q| q.involution(Axis::J)));
    assert_ne!(lhs, rhs);
}

#[test]
fn magnitude_pool_keeps_sign() {
    let x = QTensor::new(vec![1, 1, 2], vec![Quaternion::from_real(1.0), Quaternion::from_real(-2.0)]).unwrap();
    let (y, _) = magnitude_max_pool(&PoolSpec::new(PoolMode::Magnitude, 2, 2).unwrap(), &x).unwrap();
    assert_eq!(y.data(), &[Quaternion::from_real(-2.0)]);
    let (y, _) = component_max_pool(&PoolSpec::new(PoolMode::Component, 2, 2).unwrap(), &x).unwrap();
    assert_eq!(y.data(), &[Quaternion::from_real(1.0)]);
}

#[test]
fn dropout_forward_is_seed_deterministic() {
    let mut init = ChaCha8Rng::seed_from_u64(3);
    let model = Model::new(vec![
        Layer::Dropout(Dropout::new(0.5).unwrap()),
        Layer::QLinear(QLinear::init(6, 4, &mut init)),
        Layer::Activation(Activation::Tanh),
    ]);
    let x = Signal::Quat(QTensor::from_fn(vec![3, 6], |i| Quaternion::new(1.0, i as f64, -0.5, 0.25)));
    let run = |seed| model.forward(&x, DropoutMode::Train(&mut ChaCha8Rng::seed_from_u64(seed))).unwrap();
    assert_eq!(run(8), run(8));
    assert_ne!(run(8), run(9));
    let inference = model.forward(&x, DropoutMode::Inference).unwrap();
    assert_eq!(inference, model.forward(&x, DropoutMode::Inference).unwrap());
}
