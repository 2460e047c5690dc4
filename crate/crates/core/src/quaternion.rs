//! Quaternion algebra: Hamilton and Hadamard products, conjugation,
//! the three involutions and the reconstruction identities built from them.
//!
//! [`Quat`] is generic over its scalar. Everything except [`Quat::norm`]
//! only needs ring operations plus division by small integers, so the
//! identities can be checked exactly over rationals as well as over `f32`
//! and `f64`.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_traits::{Float, Num};

use crate::error::Error;

/// Scalar requirements for quaternion arithmetic.
pub trait Ring: Num + Copy + Neg<Output = Self> {}

impl<T> Ring for T where T: Num + Copy + Neg<Output = T> {}

/// A quaternion `q0 + q1 i + q2 j + q3 k`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Quat<T> {
    pub q0: T,
    pub q1: T,
    pub q2: T,
    pub q3: T,
}

/// One of the three imaginary axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    I,
    J,
    K,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::I, Axis::J, Axis::K];

    /// Component index (1, 2 or 3) of this axis.
    pub fn index(self) -> usize {
        match self {
            Axis::I => 1,
            Axis::J => 2,
            Axis::K => 3,
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "i" | "I" => Ok(Axis::I),
            "j" | "J" => Ok(Axis::J),
            "k" | "K" => Ok(Axis::K),
            other => Err(Error::InvalidArgument(format!(
                "invalid involution axis {other:?}, expected one of i, j, k"
            ))),
        }
    }
}

impl<T> Quat<T> {
    #[inline]
    pub const fn new(q0: T, q1: T, q2: T, q3: T) -> Self {
        Self { q0, q1, q2, q3 }
    }
}

impl<T: Copy> Quat<T> {
    #[inline]
    pub fn from_array(c: [T; 4]) -> Self {
        Self::new(c[0], c[1], c[2], c[3])
    }

    #[inline]
    pub fn to_array(self) -> [T; 4] {
        [self.q0, self.q1, self.q2, self.q3]
    }

    /// Component by index, `0` being the real part.
    #[inline]
    pub fn component(self, index: usize) -> T {
        match index {
            0 => self.q0,
            1 => self.q1,
            2 => self.q2,
            3 => self.q3,
            _ => panic!("quaternion component index {index} out of range"),
        }
    }

    #[inline]
    pub fn map(self, mut f: impl FnMut(T) -> T) -> Self {
        Self::new(f(self.q0), f(self.q1), f(self.q2), f(self.q3))
    }

    #[inline]
    pub fn zip_map(self, other: Self, mut f: impl FnMut(T, T) -> T) -> Self {
        Self::new(
            f(self.q0, other.q0),
            f(self.q1, other.q1),
            f(self.q2, other.q2),
            f(self.q3, other.q3),
        )
    }
}

impl<T: Ring> Quat<T> {
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::zero())
    }

    pub fn one() -> Self {
        Self::from_real(T::one())
    }

    pub fn i() -> Self {
        Self::new(T::zero(), T::one(), T::zero(), T::zero())
    }

    pub fn j() -> Self {
        Self::new(T::zero(), T::zero(), T::one(), T::zero())
    }

    pub fn k() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::one())
    }

    /// The unit quaternion along `axis`.
    pub fn unit(axis: Axis) -> Self {
        match axis {
            Axis::I => Self::i(),
            Axis::J => Self::j(),
            Axis::K => Self::k(),
        }
    }

    /// Basis element `e_index` with `e_0 = 1, e_1 = i, e_2 = j, e_3 = k`.
    pub fn basis(index: usize) -> Self {
        let mut c = [T::zero(); 4];
        c[index] = T::one();
        Self::from_array(c)
    }

    pub fn from_real(r: T) -> Self {
        Self::new(r, T::zero(), T::zero(), T::zero())
    }

    pub fn is_zero(self) -> bool {
        self.q0.is_zero() && self.q1.is_zero() && self.q2.is_zero() && self.q3.is_zero()
    }

    /// `q0 == 0`.
    pub fn is_pure(self) -> bool {
        self.q0.is_zero()
    }

    /// `q1 == q2 == q3 == 0`.
    pub fn is_real(self) -> bool {
        self.q1.is_zero() && self.q2.is_zero() && self.q3.is_zero()
    }

    pub fn scale(self, s: T) -> Self {
        self.map(|c| c * s)
    }

    /// Imaginary part `q1 i + q2 j + q3 k`.
    pub fn imaginary(self) -> Self {
        Self::new(T::zero(), self.q1, self.q2, self.q3)
    }

    /// Hamilton product `self ⊗ rhs`.
    #[inline]
    pub fn hamilton(self, rhs: Self) -> Self {
        let (x0, x1, x2, x3) = (self.q0, self.q1, self.q2, self.q3);
        let (y0, y1, y2, y3) = (rhs.q0, rhs.q1, rhs.q2, rhs.q3);
        Self::new(
            x0 * y0 - x1 * y1 - x2 * y2 - x3 * y3,
            x0 * y1 + x1 * y0 + x2 * y3 - x3 * y2,
            x0 * y2 - x1 * y3 + x2 * y0 + x3 * y1,
            x0 * y3 + x1 * y2 - x2 * y1 + x3 * y0,
        )
    }

    /// Componentwise product `x0y0 + x1y1 i + x2y2 j + x3y3 k`.
    #[inline]
    pub fn hadamard(self, rhs: Self) -> Self {
        self.zip_map(rhs, |a, b| a * b)
    }

    #[inline]
    pub fn conjugate(self) -> Self {
        Self::new(self.q0, -self.q1, -self.q2, -self.q3)
    }

    /// `q0² + q1² + q2² + q3²`.
    #[inline]
    pub fn norm_sqr(self) -> T {
        self.q0 * self.q0 + self.q1 * self.q1 + self.q2 * self.q2 + self.q3 * self.q3
    }

    /// Involution `q^η = −η q η`: keeps the real part and the `axis`
    /// component, flips the other two imaginary components.
    #[inline]
    pub fn involution(self, axis: Axis) -> Self {
        match axis {
            Axis::I => Self::new(self.q0, self.q1, -self.q2, -self.q3),
            Axis::J => Self::new(self.q0, -self.q1, self.q2, -self.q3),
            Axis::K => Self::new(self.q0, -self.q1, -self.q2, self.q3),
        }
    }

    /// Conjugate involution `(q^η)*`.
    #[inline]
    pub fn conj_involution(self, axis: Axis) -> Self {
        self.involution(axis).conjugate()
    }

    /// `q^η` for `Some(axis)` and `q` itself for `None`.
    #[inline]
    pub fn involution_or_self(self, axis: Option<Axis>) -> Self {
        match axis {
            Some(axis) => self.involution(axis),
            None => self,
        }
    }

    /// The four involution images `(q, q^i, q^j, q^k)`.
    pub fn involutions(self) -> [Self; 4] {
        [
            self,
            self.involution(Axis::I),
            self.involution(Axis::J),
            self.involution(Axis::K),
        ]
    }

    /// The four conjugate images `(q*, q^{i*}, q^{j*}, q^{k*})`.
    pub fn conj_involutions(self) -> [Self; 4] {
        [
            self.conjugate(),
            self.conj_involution(Axis::I),
            self.conj_involution(Axis::J),
            self.conj_involution(Axis::K),
        ]
    }

    /// Multiplicative inverse `q* / ‖q‖²`, `None` for zero.
    pub fn inverse(self) -> Option<Self> {
        let n = self.norm_sqr();
        if n.is_zero() {
            None
        } else {
            Some(self.conjugate().map(|c| c / n))
        }
    }
}

impl<T: Float> Quat<T> {
    #[inline]
    pub fn norm(self) -> T {
        self.norm_sqr().sqrt()
    }

    pub fn is_unit(self, tol: T) -> bool {
        (self.norm() - T::one()).abs() <= tol
    }

    pub fn is_finite(self) -> bool {
        self.q0.is_finite() && self.q1.is_finite() && self.q2.is_finite() && self.q3.is_finite()
    }

    /// Largest absolute componentwise difference.
    pub fn max_abs_diff(self, other: Self) -> T {
        let d = self - other;
        d.q0.abs().max(d.q1.abs()).max(d.q2.abs()).max(d.q3.abs())
    }
}

impl<T: Ring> Add for Quat<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl<T: Ring> Sub for Quat<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl<T: Ring> Neg for Quat<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.map(|a| -a)
    }
}

/// `*` is the Hamilton product.
impl<T: Ring> Mul for Quat<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        self.hamilton(rhs)
    }
}

impl<T: Ring> AddAssign for Quat<T> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<T: Ring> SubAssign for Quat<T> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<T: Ring> Sum for Quat<T> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), |acc, q| acc + q)
    }
}

impl<T: fmt::Display + Ring + PartialOrd> fmt::Display for Quat<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let write_part = |f: &mut fmt::Formatter<'_>, v: T, unit: &str| {
            if v < T::zero() {
                write!(f, " - ")?;
                fmt_scalar(f, -v)?;
            } else {
                write!(f, " + ")?;
                fmt_scalar(f, v)?;
            }
            write!(f, "{unit}")
        };
        fmt_scalar(f, self.q0)?;
        write_part(f, self.q1, "i")?;
        write_part(f, self.q2, "j")?;
        write_part(f, self.q3, "k")
    }
}

fn fmt_scalar<T: fmt::Display>(f: &mut fmt::Formatter<'_>, v: T) -> fmt::Result {
    match f.precision() {
        Some(p) => write!(f, "{v:.p$}"),
        None => write!(f, "{v}"),
    }
}

/// The reconstruction identities relating a quaternion, its involutions and
/// their conjugates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Identity {
    /// Component `q_c` (as a real quaternion) from `(q, q^i, q^j, q^k)`;
    /// `None` selects the real part.
    ComponentFromInvolutions(Option<Axis>),
    /// Component `q_c` from `(q*, q^{i*}, q^{j*}, q^{k*})`.
    ComponentFromConjugates(Option<Axis>),
    /// `q*` (for `None`) or `q^{η*}` from `(q, q^i, q^j, q^k)`.
    ConjugateFromInvolutions(Option<Axis>),
    /// `q` (for `None`) or `q^η` from `(q*, q^{i*}, q^{j*}, q^{k*})`.
    InvolutionFromConjugates(Option<Axis>),
}

impl Identity {
    /// All sixteen identities.
    pub fn all() -> Vec<Identity> {
        let targets = [None, Some(Axis::I), Some(Axis::J), Some(Axis::K)];
        let mut out = Vec::with_capacity(16);
        for t in targets {
            out.push(Identity::ComponentFromInvolutions(t));
        }
        for t in targets {
            out.push(Identity::ComponentFromConjugates(t));
        }
        for t in targets {
            out.push(Identity::ConjugateFromInvolutions(t));
        }
        for t in targets {
            out.push(Identity::InvolutionFromConjugates(t));
        }
        out
    }

    /// Whether the identity consumes `(q*, q^{i*}, q^{j*}, q^{k*})` rather
    /// than `(q, q^i, q^j, q^k)`.
    pub fn takes_conjugates(self) -> bool {
        matches!(
            self,
            Identity::ComponentFromConjugates(_) | Identity::InvolutionFromConjugates(_)
        )
    }

    /// The quantity this identity should reproduce, computed directly.
    pub fn expected<T: Ring>(self, q: Quat<T>) -> Quat<T> {
        match self {
            Identity::ComponentFromInvolutions(c) | Identity::ComponentFromConjugates(c) => {
                Quat::from_real(q.component(c.map_or(0, Axis::index)))
            }
            Identity::ConjugateFromInvolutions(c) => match c {
                None => q.conjugate(),
                Some(axis) => q.conj_involution(axis),
            },
            Identity::InvolutionFromConjugates(c) => q.involution_or_self(c),
        }
    }
}

/// Sign pattern over the four parts for the component identities: the real
/// part sums all four, the `η` component keeps `+` on `q` and `q^η`.
fn component_signs<T: Ring>(target: Option<Axis>) -> [T; 4] {
    let p = T::one();
    let m = -T::one();
    match target {
        None => [p, p, p, p],
        Some(Axis::I) => [p, p, m, m],
        Some(Axis::J) => [p, m, p, m],
        Some(Axis::K) => [p, m, m, p],
    }
}

/// Sign pattern for the half-sum identities: the target slot gets `−`.
fn half_sum_signs<T: Ring>(target: Option<Axis>) -> [T; 4] {
    let mut s = [T::one(); 4];
    s[target.map_or(0, Axis::index)] = -T::one();
    s
}

/// Evaluate a reconstruction identity on `parts`.
///
/// `parts` must be `(q, q^i, q^j, q^k)` or `(q*, q^{i*}, q^{j*}, q^{k*})` as
/// [`Identity::takes_conjugates`] requires. For example
/// `q0 = ¼(q + q^i + q^j + q^k)` and `q* = ½(−q + q^i + q^j + q^k)`.
pub fn reconstruct<T: Ring>(parts: [Quat<T>; 4], identity: Identity) -> Quat<T> {
    let two = T::one() + T::one();
    let four = two + two;
    let signed_sum = |signs: [T; 4]| -> Quat<T> {
        parts
            .iter()
            .zip(signs)
            .map(|(p, s)| p.scale(s))
            .sum::<Quat<T>>()
    };
    match identity {
        Identity::ComponentFromInvolutions(target) => {
            let sum = signed_sum(component_signs(target)).map(|c| c / four);
            match target {
                None => sum,
                // q_η = −(η/4)(...)
                Some(axis) => -Quat::unit(axis).hamilton(sum),
            }
        }
        Identity::ComponentFromConjugates(target) => {
            let sum = signed_sum(component_signs(target)).map(|c| c / four);
            match target {
                None => sum,
                // q_η = (η/4)(...)
                Some(axis) => Quat::unit(axis).hamilton(sum),
            }
        }
        Identity::ConjugateFromInvolutions(target) | Identity::InvolutionFromConjugates(target) => {
            signed_sum(half_sum_signs(target)).map(|c| c / two)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type Q = Quat<f64>;

    #[test]
    fn additive_examples() {
        let x = Q::new(1.0, 2.0, 0.0, 0.0);
        let y = Q::new(3.0, 0.0, 0.0, 4.0);
        assert_eq!(x + y, Q::new(4.0, 2.0, 0.0, 4.0));
        assert_eq!(x + Q::zero(), x);
        assert_eq!(x + (-x), Q::zero());
    }

    #[test]
    fn hamilton_examples() {
        assert_eq!(Q::i() * Q::j(), Q::k());
        let q = Q::new(0.5, -1.5, 2.0, 3.25);
        assert_eq!(Q::one() * q, q);
        assert_eq!(q * Q::one(), q);
    }

    #[test]
    fn hadamard_examples() {
        let q = Q::new(1.0, 2.0, 3.0, 4.0);
        assert_eq!(q.hadamard(Q::new(1.0, 1.0, 1.0, 1.0)), q);
        assert_eq!(q.hadamard(Q::zero()), Q::zero());
        assert_eq!(
            Q::new(2.0, 3.0, 0.0, 0.0).hadamard(Q::new(4.0, 5.0, 6.0, 0.0)),
            Q::new(8.0, 15.0, 0.0, 0.0)
        );
    }

    #[test]
    fn conjugate_and_norm_examples() {
        let q = Q::new(1.0, 2.0, 3.0, 4.0);
        assert_eq!(q.conjugate(), Q::new(1.0, -2.0, -3.0, -4.0));
        assert_eq!(Q::from_real(7.0).conjugate(), Q::from_real(7.0));
        assert_eq!(Q::new(1.0, 1.0, 1.0, 1.0).norm(), 2.0);
        assert_eq!(Q::zero().norm(), 0.0);
    }

    #[test]
    fn involution_examples() {
        let q = Q::new(1.0, 2.0, 3.0, 4.0);
        assert_eq!(q.involution(Axis::I), Q::new(1.0, 2.0, -3.0, -4.0));
        assert_eq!(q.involution(Axis::J), Q::new(1.0, -2.0, 3.0, -4.0));
        assert_eq!(q.involution(Axis::K), Q::new(1.0, -2.0, -3.0, 4.0));
        assert_eq!(q.involution(Axis::K).involution(Axis::K), q);
        assert_eq!(q.conj_involution(Axis::I), Q::new(1.0, -2.0, 3.0, 4.0));
        assert_eq!(q.conj_involution(Axis::J), Q::new(1.0, 2.0, -3.0, 4.0));
        assert_eq!(q.conj_involution(Axis::K), Q::new(1.0, 2.0, 3.0, -4.0));
        for axis in Axis::ALL {
            assert_eq!(Q::from_real(-3.0).conj_involution(axis), Q::from_real(-3.0));
        }
    }

    #[test]
    fn involution_matches_definition() {
        // q^η = −η q η
        let q = Q::new(0.3, -1.2, 2.5, 0.7);
        for axis in Axis::ALL {
            let eta = Q::unit(axis);
            let by_definition = -(eta * q * eta);
            assert!(by_definition.max_abs_diff(q.involution(axis)) < 1e-15);
        }
    }

    #[test]
    fn axis_parsing() {
        assert_eq!("j".parse::<Axis>().unwrap(), Axis::J);
        assert!(matches!("x".parse::<Axis>(), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn real_part_identity_reads_component() {
        let q = Q::new(1.0, 2.0, 3.0, 4.0);
        let r = reconstruct(q.involutions(), Identity::ComponentFromInvolutions(None));
        assert_eq!(r, Q::from_real(1.0));
        let c = reconstruct(q.involutions(), Identity::ConjugateFromInvolutions(None));
        assert_eq!(c, q.conjugate());
    }

    #[test]
    fn identities_on_zero() {
        for id in Identity::all() {
            let r = reconstruct([Q::zero(); 4], id);
            assert!(r.is_zero(), "{id:?}");
        }
    }

    #[test]
    fn inverse() {
        let q = Q::new(1.0, -2.0, 0.5, 3.0);
        let inv = q.inverse().unwrap();
        assert!((q * inv).max_abs_diff(Q::one()) < 1e-15);
        assert!(Q::zero().inverse().is_none());
    }

    #[test]
    fn display_with_precision() {
        let q = Q::new(-1.0, 9.0, 4.5, 3.4521);
        assert_eq!(format!("{q:.2}"), "-1.00 + 9.00i + 4.50j + 3.45k");
        assert_eq!(format!("{}", Q::new(1.0, -2.0, 0.0, 0.0)), "1 - 2i + 0j + 0k");
    }
}
