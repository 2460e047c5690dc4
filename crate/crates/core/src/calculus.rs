//! Numerical quaternion derivatives built from central-difference component
//! partials: the naive componentwise derivative, the HR derivatives and the
//! GHR derivatives, plus reproductions of the classic counterexamples showing
//! that the naive derivative breaks the product and chain rules.

use crate::error::{Error, Result};
use crate::quaternion::Axis;
use crate::Quaternion;

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Partial derivatives `∂f/∂q0 … ∂f/∂q3` of a quaternion-valued function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentPartials {
    pub d: [Quaternion; 4],
}

/// Central differences `(f(q + h e_a) − f(q − h e_a)) / 2h` along each
/// component direction.
pub fn component_partials<F>(f: F, q: Quaternion, h: f64) -> Result<ComponentPartials>
where
    F: Fn(Quaternion) -> Quaternion,
{
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("step h must be positive, got {h}")));
    }
    let mut d = [Quaternion::zero(); 4];
    for (a, slot) in d.iter_mut().enumerate() {
        let e = Quaternion::basis(a).scale(h);
        let plus = f(q + e);
        let minus = f(q - e);
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "function is not finite near {q} along component {a}"
            )));
        }
        *slot = (plus - minus).scale(0.5 / h);
    }
    Ok(ComponentPartials { d })
}

/// `∂f/∂q0 + ∂f/∂q1 i + ∂f/∂q2 j + ∂f/∂q3 k`, units multiplied on the right.
pub fn naive_derivative(p: &ComponentPartials) -> Quaternion {
    (0..4).map(|a| p.d[a] * Quaternion::basis(a)).sum()
}

/// Which HR derivative to take: with respect to `q` or one of its
/// involutions, optionally conjugated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HrVariant {
    /// `None` for `q` itself.
    pub involution: Option<Axis>,
    pub conjugate: bool,
}

impl HrVariant {
    pub const Q: HrVariant = HrVariant { involution: None, conjugate: false };
    pub const Q_CONJ: HrVariant = HrVariant { involution: None, conjugate: true };

    pub fn involution(axis: Axis) -> Self {
        Self { involution: Some(axis), conjugate: false }
    }

    pub fn conj_involution(axis: Axis) -> Self {
        Self { involution: Some(axis), conjugate: true }
    }

    /// All eight variants.
    pub fn all() -> [HrVariant; 8] {
        let mut out = [HrVariant::Q; 8];
        for (n, conjugate) in [false, true].into_iter().enumerate() {
            out[4 * n] = HrVariant { involution: None, conjugate };
            for (m, axis) in Axis::ALL.into_iter().enumerate() {
                out[4 * n + m + 1] = HrVariant { involution: Some(axis), conjugate };
            }
        }
        out
    }
}

/// HR derivative `¼(∂0 ± ∂1 i ± ∂2 j ± ∂3 k)`.
///
/// For `∂f/∂q` every imaginary term is subtracted; the involution `q^η`
/// additionally flips the two terms not along `η`. The conjugate forms negate
/// every imaginary sign.
pub fn hr_derivative(p: &ComponentPartials, variant: HrVariant) -> Quaternion {
    let mut signs = [1.0, -1.0, -1.0, -1.0];
    if let Some(axis) = variant.involution {
        for (a, s) in signs.iter_mut().enumerate().skip(1) {
            if a != axis.index() {
                *s = -*s;
            }
        }
    }
    if variant.conjugate {
        for s in signs.iter_mut().skip(1) {
            *s = -*s;
        }
    }
    (0..4)
        .map(|a| (p.d[a] * Quaternion::basis(a)).scale(signs[a]))
        .sum::<Quaternion>()
        .scale(0.25)
}

/// `μ e μ* / ‖μ‖²`, the rotated imaginary unit.
fn rotated_unit(mu: Quaternion, axis: Axis) -> Quaternion {
    (mu * Quaternion::unit(axis) * mu.conjugate()).scale(1.0 / mu.norm_sqr())
}

/// GHR derivative `∂f/∂q^μ = ¼(∂0 − ∂1 i^μ − ∂2 j^μ − ∂3 k^μ)`, or the
/// conjugate form `∂f/∂q^{μ*}` with every `−` replaced by `+`.
pub fn ghr_derivative(p: &ComponentPartials, mu: Quaternion, conjugate_form: bool) -> Result<Quaternion> {
    if mu.norm_sqr() == 0.0 {
        return Err(Error::InvalidArgument("GHR rotation μ must be nonzero".into()));
    }
    let sign = if conjugate_form { 1.0 } else { -1.0 };
    let mut acc = p.d[0];
    for axis in Axis::ALL {
        acc += (p.d[axis.index()] * rotated_unit(mu, axis)).scale(sign);
    }
    Ok(acc.scale(0.25))
}

/// Outcome of [`demo_product_rule_failure`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductRuleReport {
    /// Naive derivative of `q q*` taken directly (`2q`).
    pub naive: Quaternion,
    /// Naive derivative assembled with the real product rule (`4q − 2q*`).
    pub product_rule: Quaternion,
    pub gap: f64,
    /// `q` is real, so both sides coincide.
    pub degenerate: bool,
}

/// Differentiate `f(q) = q q*` directly with the naive derivative and again
/// via `q ∂(q*)/∂q + ∂q/∂q q*`; the two disagree off the real line.
pub fn demo_product_rule_failure(q: Quaternion) -> Result<ProductRuleReport> {
    let h = DEFAULT_STEP;
    let naive = naive_derivative(&component_partials(|x| x * x.conjugate(), q, h)?);
    let d_conj = naive_derivative(&component_partials(|x| x.conjugate(), q, h)?);
    let d_id = naive_derivative(&component_partials(|x| x, q, h)?);
    let product_rule = q * d_conj + d_id * q.conjugate();
    Ok(ProductRuleReport {
        naive,
        product_rule,
        gap: (naive - product_rule).norm(),
        degenerate: q.is_real(),
    })
}

/// Outcome of [`demo_chain_rule_failure`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainRuleReport {
    /// Naive derivative of `(xy)(xy)*` with respect to `x` (`2x‖y‖²`).
    pub direct: Quaternion,
    /// Outer times inner naive derivative (`−4 x y y*`).
    pub chained: Quaternion,
    pub gap: f64,
}

/// Differentiate `f = z z*`, `z = x y` with respect to `x` directly and via
/// `∂f/∂z · ∂z/∂x`; the naive chain rule gives a different answer.
pub fn demo_chain_rule_failure(x: Quaternion, y: Quaternion) -> Result<ChainRuleReport> {
    let h = DEFAULT_STEP;
    let direct = naive_derivative(&component_partials(
        |v| {
            let z = v * y;
            z * z.conjugate()
        },
        x,
        h,
    )?);
    let z = x * y;
    let outer = naive_derivative(&component_partials(|v| v * v.conjugate(), z, h)?);
    let inner = naive_derivative(&component_partials(|v| v * y, x, h)?);
    let chained = outer * inner;
    Ok(ChainRuleReport {
        direct,
        chained,
        gap: (direct - chained).norm(),
    })
}

/// Both sides of the GHR product rule for `f(q) = q q*` at `μ = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GhrProductRuleReport {
    /// `∂(q q*)/∂q` taken directly (`½ q*`).
    pub direct: Quaternion,
    /// `q ∂(q*)/∂q + ∂q/∂q^{q*} q*`.
    pub product_rule: Quaternion,
}

/// The GHR product rule recovers the direct derivative of `q q*`, because
/// the right factor's derivative is taken with respect to the rotated
/// variable `q^{q* μ}`.
pub fn demo_ghr_product_rule(q: Quaternion) -> Result<GhrProductRuleReport> {
    let h = DEFAULT_STEP;
    let one = Quaternion::one();
    let direct = ghr_derivative(&component_partials(|x| x * x.conjugate(), q, h)?, one, false)?;
    let d_conj = ghr_derivative(&component_partials(|x| x.conjugate(), q, h)?, one, false)?;
    let d_id_rotated = ghr_derivative(&component_partials(|x| x, q, h)?, q.conjugate() * one, false)?;
    Ok(GhrProductRuleReport {
        direct,
        product_rule: q * d_conj + d_id_rotated * q.conjugate(),
    })
}
