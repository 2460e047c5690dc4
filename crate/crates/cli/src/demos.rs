use std::fmt::Write as _;

use quatnet::autodiff::{ad_backward, ad_forward};
use quatnet::backprop::{backward, LayerGrads};
use quatnet::calculus::{demo_chain_rule_failure, demo_ghr_product_rule, demo_product_rule_failure};
use quatnet::layers::{Activation, DropoutMode, Layer, Model, QLinear, Signal};
use quatnet::loss::{evaluate_loss, Target};
use quatnet::{QTensor, Quaternion, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_quat(rng: &mut ChaCha8Rng) -> Quaternion {
    Quaternion::new(
        rng.gen_range(-2.0..2.0),
        rng.gen_range(-2.0..2.0),
        rng.gen_range(-2.0..2.0),
        rng.gen_range(-2.0..2.0),
    )
}

fn l2(values: impl Iterator<Item = f64>) -> f64 {
    values.map(|v| v * v).sum::<f64>().sqrt()
}

fn quat_norm(t: &QTensor) -> f64 {
    l2(t.data().iter().flat_map(|q| q.to_array()))
}

/// Plain-text report of the naive-derivative counterexamples, the GHR
/// product rule and the AD/GHR gradient ratio on a small network.
pub fn report(seed: u64, samples: usize) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    let w = &mut out;

    writeln!(w, "naive product rule, f(q) = q q*").ok();
    writeln!(w, "  direct = 2q, via product rule = 4q - 2q*").ok();
    let mut fixed = vec![Quaternion::new(0.0, 1.0, 0.0, 0.0), Quaternion::from_real(1.5)];
    fixed.extend((0..samples).map(|_| random_quat(&mut rng)));
    for (n, q) in fixed.iter().enumerate() {
        let r = demo_product_rule_failure(*q)?;
        if n < 5 {
            writeln!(w, "  q = {q:.4}: direct {:.4}, product rule {:.4}, gap {:.6}", r.naive, r.product_rule, r.gap).ok();
        }
    }
    let worst = fixed[2..]
        .iter()
        .map(|q| demo_product_rule_failure(*q).map(|r| r.gap))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    writeln!(w, "  smallest gap over {samples} random q: {worst:.6}").ok();

    writeln!(w, "\nnaive chain rule, f = (xy)(xy)* in x").ok();
    writeln!(w, "  direct = 2x|y|^2, chained = -4x y y*").ok();
    for _ in 0..3.min(samples) {
        let (x, y) = (random_quat(&mut rng), random_quat(&mut rng));
        let r = demo_chain_rule_failure(x, y)?;
        writeln!(w, "  x = {x:.4}, y = {y:.4}: direct {:.4}, chained {:.4}, gap {:.6}", r.direct, r.chained, r.gap).ok();
    }

    writeln!(w, "\nGHR derivative of q q* (mu = 1)").ok();
    let q = Quaternion::new(1.0, 2.0, 3.0, 4.0);
    let r = demo_ghr_product_rule(q)?;
    let half_conj = q.conjugate().scale(0.5);
    writeln!(w, "  q = {q:.4}: direct {:.6}, expected q*/2 = {half_conj:.6}", r.direct).ok();
    writeln!(w, "  GHR product rule {:.6}, gap {:.3e}", r.product_rule, (r.product_rule - r.direct).norm()).ok();

    writeln!(w, "\nAD versus GHR gradients (2-layer tanh network, MSE)").ok();
    ratio_table(w, &mut rng)?;
    Ok(out)
}

fn ratio_table(w: &mut String, rng: &mut ChaCha8Rng) -> Result<()> {
    let model = Model::new(vec![
        Layer::QLinear(QLinear::init(3, 4, rng)),
        Layer::Activation(Activation::Tanh),
        Layer::QLinear(QLinear::init(4, 2, rng)),
    ]);
    let x = Signal::Quat(QTensor::from_fn(vec![2, 3], |_| random_quat(rng)));
    let d = Signal::Quat(QTensor::from_fn(vec![2, 2], |_| random_quat(rng)));
    let tape = model.forward_traced(&x, DropoutMode::Inference)?;
    let eval = evaluate_loss(&tape.output, &Target::Values(d))?;
    let ghr = backward(&model, &tape, eval.ghr)?;
    let ad = ad_backward(&model, &ad_forward(&model, &x, &[])?, &eval.ad)?;
    writeln!(w, "  {:<6} {:<8} {:>12} {:>12} {:>8}", "layer", "tensor", "|GHR|", "|AD|", "ratio").ok();
    for (l, (g, a)) in ghr.grads.layers.iter().zip(&ad.grads.layers).enumerate() {
        if let (Some(LayerGrads::Quat { weight: gw, bias: gb }), Some(LayerGrads::Quat { weight: aw, bias: ab })) = (g, a) {
            for (name, g, a) in [("weight", gw, aw), ("bias", gb, ab)] {
                let (ng, na) = (quat_norm(g), quat_norm(a));
                writeln!(w, "  {l:<6} {name:<8} {ng:>12.6} {na:>12.6} {:>8.4}", na / ng).ok();
            }
        }
    }
    for (l, (g, a)) in ghr.messages.iter().zip(&ad.messages).enumerate() {
        if let (Signal::Quat(p), Signal::Quat(s)) = (g, a) {
            let dev = p
                .data()
                .iter()
                .zip(s.data())
                .map(|(p, s)| (p.conjugate().scale(4.0) - *s).norm())
                .fold(0.0, f64::max);
            writeln!(
                w,
                "  {l:<6} {:<8} {:>12.6} {:>12.6} {:>8.4}  max |AD - 4 conj(GHR)| = {dev:.1e}",
                "message",
                quat_norm(p),
                quat_norm(s),
                quat_norm(s) / quat_norm(p)
            )
            .ok();
        }
    }
    Ok(())
}
