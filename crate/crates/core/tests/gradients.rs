use proptest::prelude::*;
use quatnet::autodiff::{ad_backward, ad_forward, verify_ghr_ad_relation};
use quatnet::backprop::{
    backward, grad_activation_input, grad_final_activations, grad_final_bias, grad_final_weights,
    grad_hidden_activations, grad_hidden_bias, grad_hidden_weights, loss_mse_quat, mse_message, sgd_step, LayerGrads,
};
use quatnet::layers::{Activation, DropoutMode, Layer, Model, PoolMode, QLinear, Signal};
use quatnet::loss::{evaluate_loss, Target};
use quatnet::train::{build_model, Arch, ModelConfig, Numeric, Width};
use quatnet::{QTensor, Quaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_quat(rng: &mut impl Rng) -> Quaternion {
    Quaternion::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

fn tanh_net(rng: &mut ChaCha8Rng, n: usize, h: usize, m: usize) -> Model {
    let mut l1 = QLinear::init(n, h, rng);
    l1.bias = QTensor::from_fn(vec![h], |_| rand_quat(rng));
    Model::new(vec![
        Layer::QLinear(l1),
        Layer::Activation(Activation::Tanh),
        Layer::QLinear(QLinear::init(h, m, rng)),
        Layer::Activation(Activation::Tanh),
    ])
}

fn mse_loss(model: &Model, x: &QTensor, d: &QTensor) -> f64 {
    let y = model.forward(&Signal::Quat(x.clone()), DropoutMode::Inference).unwrap().into_quat().unwrap();
    loss_mse_quat(&y, d).unwrap()
}

#[test]
fn one_small_step_descends() {
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = tanh_net(&mut rng, 4, 5, 3);
        let x = QTensor::from_fn(vec![2, 4], |_| rand_quat(&mut rng));
        let d = QTensor::from_fn(vec![2, 3], |_| rand_quat(&mut rng));
        let before = mse_loss(&model, &x, &d);
        let tape = model.forward_traced(&Signal::Quat(x.clone()), DropoutMode::Inference).unwrap();
        let p = Signal::Quat(mse_message(&tape.output.as_quat().unwrap().clone(), &d).unwrap());
        let back = backward(&model, &tape, p).unwrap();
        sgd_step(&mut model, &back.grads, 1e-3).unwrap();
        let after = mse_loss(&model, &x, &d);
        assert!(after < before, "seed {seed}: {before} -> {after}");
    }
}

#[test]
fn zero_input_kills_first_layer_weight_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = tanh_net(&mut rng, 3, 4, 2);
    let x = Signal::Quat(QTensor::zeros(vec![2, 3]));
    let d = Signal::Quat(QTensor::from_fn(vec![2, 2], |_| rand_quat(&mut rng)));
    let tape = model.forward_traced(&x, DropoutMode::Inference).unwrap();
    let eval = evaluate_loss(&tape.output, &Target::Values(d)).unwrap();
    let back = backward(&model, &tape, eval.ghr).unwrap();
    match &back.grads.layers[0] {
        Some(LayerGrads::Quat { weight, bias }) => {
            assert!(weight.data().iter().all(|q| q.is_zero()));
            assert!(bias.data().iter().any(|q| !q.is_zero()));
        }
        other => panic!("unexpected {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn hidden_formulas_reduce_to_final_layer_formulas(
        e in prop::array::uniform4(-3.0..3.0f64),
        a in prop::array::uniform4(-3.0..3.0f64),
        z in prop::array::uniform4(-3.0..3.0f64),
        ws in prop::collection::vec(prop::array::uniform4(-3.0..3.0f64), 6),
    ) {
        let (e, a, z) = (Quaternion::from_array(e), Quaternion::from_array(a), Quaternion::from_array(z));
        let p = e.conjugate().scale(-0.5);
        let q = grad_activation_input(p, z, Activation::Identity);
        prop_assert_eq!(grad_hidden_weights(q, a), grad_final_weights(e, a));
        prop_assert_eq!(grad_hidden_bias(q), grad_final_bias(e));
        let w = QTensor::new(vec![2, 3], ws.into_iter().map(Quaternion::from_array).collect()).unwrap();
        let es = [e, e.scale(0.5)];
        let qs: Vec<Quaternion> = es.iter().map(|e| grad_activation_input(e.conjugate().scale(-0.5), z, Activation::Identity)).collect();
        prop_assert_eq!(grad_hidden_activations(&qs, &w).unwrap(), grad_final_activations(&es, &w).unwrap());
    }
}

/// AD parameter gradients are the plain component partials of the loss.
#[test]
fn ad_matches_central_differences() {
    let h = 1e-5;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let model = tanh_net(&mut rng, 3, 4, 2);
        let x = QTensor::from_fn(vec![2, 3], |_| rand_quat(&mut rng));
        let d = QTensor::from_fn(vec![2, 2], |_| rand_quat(&mut rng));
        let xs = Signal::Quat(x.clone());
        let out = model.forward(&xs, DropoutMode::Inference).unwrap();
        let eval = evaluate_loss(&out, &Target::Values(Signal::Quat(d.clone()))).unwrap();
        let ad = ad_backward(&model, &ad_forward(&model, &xs, &[]).unwrap(), &eval.ad).unwrap();
        for (l, g) in ad.grads.layers.iter().enumerate() {
            let Some(LayerGrads::Quat { weight, .. }) = g else { continue };
            for (idx, gq) in weight.data().iter().enumerate() {
                for c in 0..4 {
                    let shifted = |delta: f64| {
                        let mut m = model.clone();
                        if let Layer::QLinear(lin) = &mut m.layers[l] {
                            let mut arr = lin.weight.data()[idx].to_array();
                            arr[c] += delta;
                            lin.weight.data_mut()[idx] = Quaternion::from_array(arr);
                        }
                        mse_loss(&m, &x, &d)
                    };
                    let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                    let an = gq.component(c);
                    assert!((an - fd).abs() <= 1e-8 + 1e-5 * an.abs().max(fd.abs()), "layer {l} [{idx}].{c}: {an} vs {fd}");
                }
            }
        }
    }
}

fn model_config() -> impl Strategy<Value = (ModelConfig, u64)> {
    (
        prop::sample::select(vec![Arch::OneConv, Arch::TwoConv, Arch::ThreeConv]),
        prop::sample::select(vec![Numeric::Quaternion, Numeric::RealEqualFeatures, Numeric::RealEqualParams]),
        prop::sample::select(vec![PoolMode::Magnitude, PoolMode::Component]),
        prop::sample::select(vec![Activation::Identity, Activation::Tanh, Activation::Tanhshrink, Activation::ReLU]),
        1..4usize,
        any::<bool>(),
        any::<u64>(),
    )
        .prop_map(|(arch, numeric, pooling, activation, channels, head, seed)| {
            let mut cfg = ModelConfig::new(arch, Width::Low, numeric, 3, channels, 40);
            cfg.pooling = pooling;
            cfg.activation = activation;
            cfg.head = head;
            cfg.conv_channels = Some(vec![3; arch.conv_blocks()]);
            cfg.linear_sizes = Some(vec![4; arch.linear_blocks()]);
            (cfg, seed)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn engines_agree_across_the_config_space((cfg, seed) in model_config()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = build_model(&cfg, &mut rng).unwrap();
        let c = cfg.input_channels();
        let x = if cfg.numeric.is_quaternion() {
            Signal::Quat(QTensor::from_fn(vec![2, c, 40], |_| rand_quat(&mut rng)))
        } else {
            Signal::Real(quatnet::RTensor::from_fn(vec![2, c, 40], |_| rng.gen_range(-1.0..1.0)))
        };
        let target = if cfg.head {
            Target::Labels(vec![0, 2])
        } else {
            let y = model.forward(&x, DropoutMode::Inference).unwrap();
            Target::Values(match y {
                Signal::Quat(t) => Signal::Quat(t.map(|_| rand_quat(&mut rng))),
                Signal::Real(t) => Signal::Real(t.map(|_| rng.gen_range(-1.0..1.0))),
            })
        };
        let report = verify_ghr_ad_relation(&model, &x, &target, 1e-10).unwrap();
        prop_assert!(report.passed(), "{}", report);
    }
}
