use serde::{Deserialize, Serialize};

use crate::{QTensor, RTensor};

/// Elementwise activation; on quaternions it acts on each component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    #[serde(rename = "relu")]
    ReLU,
    Tanh,
    Tanhshrink,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Identity,
        Activation::ReLU,
        Activation::Tanh,
        Activation::Tanhshrink,
    ];

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::ReLU => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Tanhshrink => tanhshrink(x),
        }
    }

    /// Derivative; the ReLU kink at 0 uses the subgradient 0.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::ReLU => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Tanhshrink => {
                let t = x.tanh();
                t * t
            }
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::ReLU => 1,
            Activation::Tanh => 2,
            Activation::Tanhshrink => 3,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.tag() == tag)
    }
}

/// `x − tanh x`, with a series near 0 where the subtraction cancels.
fn tanhshrink(x: f64) -> f64 {
    if x.abs() >= 0.1 {
        return x - x.tanh();
    }
    // Odd part of the tanh series from x³ on, negated.
    const C: [f64; 7] = [
        1.0 / 3.0,
        -2.0 / 15.0,
        17.0 / 315.0,
        -62.0 / 2835.0,
        1382.0 / 155925.0,
        -21844.0 / 6081075.0,
        929569.0 / 638512875.0,
    ];
    let x2 = x * x;
    x * x2 * C.iter().rev().fold(0.0, |acc, c| acc * x2 + c)
}

/// `ψ(q) = ψ(q0) + ψ(q1) i + ψ(q2) j + ψ(q3) k` for every element.
pub fn activate(act: Activation, z: &QTensor) -> QTensor {
    z.map(|q| q.map(|c| act.apply(c)))
}

pub fn activate_real(act: Activation, z: &RTensor) -> RTensor {
    z.map(|&c| act.apply(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quaternion::Axis;
    use crate::Quaternion;

    fn single(q: Quaternion) -> QTensor {
        QTensor::new(vec![1], vec![q]).unwrap()
    }

    #[test]
    fn tanhshrink_near_zero() {
        // x³/3 − 2x⁵/15 is exact to 1e-21 relative here.
        let x: f64 = 1e-4;
        let want = x * x * x / 3.0 - 2.0 * x.powi(5) / 15.0;
        assert!((tanhshrink(x) - want).abs() <= 1e-15 * want);
        assert_eq!(tanhshrink(-x), -tanhshrink(x));
        for x in [0.05, 0.0999999, 0.1] {
            let direct = x - f64::tanh(x);
            assert!((tanhshrink(x) - direct).abs() <= 1e-12 * direct, "{x}");
        }
        assert_eq!(tanhshrink(0.0), 0.0);
    }

    #[test]
    fn relu_is_componentwise() {
        let out = activate(Activation::ReLU, &single(Quaternion::new(1.0, -2.0, 3.0, -4.0)));
        assert_eq!(out.data()[0], Quaternion::new(1.0, 0.0, 3.0, 0.0));
    }

    #[test]
    fn identity_and_tanh_at_zero() {
        let q = Quaternion::new(0.3, -0.1, 2.0, -7.0);
        assert_eq!(activate(Activation::Identity, &single(q)).data()[0], q);
        assert_eq!(activate(Activation::Tanh, &single(Quaternion::zero())).data()[0], Quaternion::zero());
    }

    #[test]
    fn tanhshrink_definition() {
        let x: f64 = 0.7;
        assert_eq!(Activation::Tanhshrink.apply(x), x - x.tanh());
    }

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-6;
        for act in [Activation::Tanh, Activation::Tanhshrink, Activation::Identity] {
            for x in [-1.3, -0.2, 0.4, 2.1] {
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                assert!((fd - act.derivative(x)).abs() < 1e-8, "{act:?} at {x}");
            }
        }
        assert_eq!(Activation::ReLU.derivative(0.0), 0.0);
        assert_eq!(Activation::ReLU.derivative(0.5), 1.0);
    }

    #[test]
    fn commutes_with_involutions() {
        // Odd activations commute with the sign flips of an involution.
        let q = Quaternion::new(0.5, -1.5, 0.25, 2.0);
        for act in [Activation::Identity, Activation::Tanh, Activation::Tanhshrink] {
            for axis in Axis::ALL {
                let lhs = activate(act, &single(q)).data()[0].involution(axis);
                let rhs = activate(act, &single(q.involution(axis))).data()[0];
                assert!(lhs.max_abs_diff(rhs) < 1e-15);
            }
        }
    }
}
