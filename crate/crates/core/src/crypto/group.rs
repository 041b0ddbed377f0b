//! Prime-order subgroup of `Z_p^*` with two independent generators.
//!
//! Parameters are sized for simulation (16 to 64 bit moduli), so every value
//! fits a `u64` and products fit a `u128`. Nothing here is constant time.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::hash::{hash_to_scalar_wide, DomainHasher};
use super::rng::SeededRng;

/// Smallest modulus size accepted by [`setup_group`].
pub const MIN_BIT_LENGTH: u32 = 16;
/// Largest modulus size accepted by [`setup_group`]; values are kept in `u64`.
pub const MAX_BIT_LENGTH: u32 = 64;
/// Modulus size used by the simulator unless a scenario says otherwise.
pub const DEFAULT_BIT_LENGTH: u32 = 64;

const TAG_ELEMENT: u8 = 0x20;
const TAG_SCALAR: u8 = 0x21;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("bit length {0} outside supported range {MIN_BIT_LENGTH}..={MAX_BIT_LENGTH}")]
    UnsupportedBitLength(u32),
    #[error("modulus {0} is not prime")]
    CompositeModulus(u64),
    #[error("subgroup order {0} is not prime")]
    CompositeOrder(u64),
    #[error("subgroup order {q} does not divide p - 1 = {}", .p - 1)]
    OrderDoesNotDivide { p: u64, q: u64 },
    #[error("generator {0} is the identity")]
    IdentityGenerator(u64),
    #[error("value {0} is not a member of the order-q subgroup")]
    NotInSubgroup(u64),
    #[error("canonical encoding has wrong length or tag")]
    BadEncoding,
}

/// Scalar modulo the subgroup order `q`. Carries its modulus so arithmetic
/// can be written with operators.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Scalar {
    value: u64,
    order: u64,
}

impl Scalar {
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn order(&self) -> u64 {
        self.order
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn invert(&self) -> Option<Scalar> {
        if self.value == 0 {
            return None;
        }
        // q is prime, so a^(q-2) is the inverse.
        Some(Scalar {
            value: pow_mod(self.value, self.order - 2, self.order),
            order: self.order,
        })
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({})", self.value)
    }
}

impl Add for Scalar {
    type Output = Scalar;
    fn add(self, rhs: Scalar) -> Scalar {
        debug_assert_eq!(self.order, rhs.order);
        let sum = (self.value as u128 + rhs.value as u128) % self.order as u128;
        Scalar { value: sum as u64, order: self.order }
    }
}

impl Sub for Scalar {
    type Output = Scalar;
    fn sub(self, rhs: Scalar) -> Scalar {
        self + (-rhs)
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        let value = if self.value == 0 { 0 } else { self.order - self.value };
        Scalar { value, order: self.order }
    }
}

impl Mul for Scalar {
    type Output = Scalar;
    fn mul(self, rhs: Scalar) -> Scalar {
        debug_assert_eq!(self.order, rhs.order);
        Scalar { value: mul_mod(self.value, rhs.value, self.order), order: self.order }
    }
}

/// Element of the order-`q` subgroup of `Z_p^*`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupElement {
    value: u64,
    modulus: u64,
}

impl GroupElement {
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn is_identity(&self) -> bool {
        self.value == 1
    }

    /// `self^exp mod p`.
    pub fn pow(&self, exp: &Scalar) -> GroupElement {
        GroupElement { value: pow_mod(self.value, exp.value, self.modulus), modulus: self.modulus }
    }

    /// Raises to a small non-negative integer power (plaintext encodings).
    pub fn pow_u64(&self, exp: u64) -> GroupElement {
        GroupElement { value: pow_mod(self.value, exp, self.modulus), modulus: self.modulus }
    }

    pub fn invert(&self) -> GroupElement {
        // p is prime and value is nonzero.
        GroupElement {
            value: pow_mod(self.value, self.modulus - 2, self.modulus),
            modulus: self.modulus,
        }
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupElement({})", self.value)
    }
}

impl Mul for GroupElement {
    type Output = GroupElement;
    fn mul(self, rhs: GroupElement) -> GroupElement {
        debug_assert_eq!(self.modulus, rhs.modulus);
        GroupElement { value: mul_mod(self.value, rhs.value, self.modulus), modulus: self.modulus }
    }
}

/// Public group description `(p, q, g, h)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupParams {
    p: u64,
    q: u64,
    g: u64,
    h: u64,
}

impl fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupParams {{ p: {}, q: {}, g: {}, h: {} }}", self.p, self.q, self.g, self.h)
    }
}

impl GroupParams {
    /// Validates explicit parameters. `h` is taken as given; use
    /// [`setup_group`] to get `h` derived by hashing.
    pub fn new(p: u64, q: u64, g: u64, h: u64) -> Result<Self, GroupError> {
        if p < 5 || !is_prime(p) {
            return Err(GroupError::CompositeModulus(p));
        }
        if !is_prime(q) {
            return Err(GroupError::CompositeOrder(q));
        }
        if !(p - 1).is_multiple_of(q) {
            return Err(GroupError::OrderDoesNotDivide { p, q });
        }
        for gen in [g, h] {
            if gen == 1 {
                return Err(GroupError::IdentityGenerator(gen));
            }
            if gen == 0 || gen >= p || pow_mod(gen, q, p) != 1 {
                return Err(GroupError::NotInSubgroup(gen));
            }
        }
        Ok(GroupParams { p, q, g, h })
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn g(&self) -> GroupElement {
        GroupElement { value: self.g, modulus: self.p }
    }

    pub fn h(&self) -> GroupElement {
        GroupElement { value: self.h, modulus: self.p }
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement { value: 1, modulus: self.p }
    }

    /// Bit length of `p`.
    pub fn bit_length(&self) -> u32 {
        64 - self.p.leading_zeros()
    }

    /// Width in bytes of one canonical integer.
    pub fn width(&self) -> usize {
        self.bit_length().div_ceil(8) as usize
    }

    pub fn scalar(&self, value: u64) -> Scalar {
        Scalar { value: value % self.q, order: self.q }
    }

    pub fn scalar_from_u128(&self, value: u128) -> Scalar {
        Scalar { value: (value % self.q as u128) as u64, order: self.q }
    }

    pub fn zero(&self) -> Scalar {
        self.scalar(0)
    }

    /// Uniform scalar in `[0, q)`.
    pub fn random_scalar(&self, rng: &mut SeededRng) -> Scalar {
        Scalar { value: rng.gen_range(0..self.q), order: self.q }
    }

    /// Uniform scalar in `[1, q)`.
    pub fn random_nonzero_scalar(&self, rng: &mut SeededRng) -> Scalar {
        Scalar { value: rng.gen_range(1..self.q), order: self.q }
    }

    /// Checked conversion; rejects values outside the subgroup.
    pub fn element(&self, value: u64) -> Result<GroupElement, GroupError> {
        if value == 0 || value >= self.p || pow_mod(value, self.q, self.p) != 1 {
            return Err(GroupError::NotInSubgroup(value));
        }
        Ok(GroupElement { value, modulus: self.p })
    }

    pub fn contains(&self, e: &GroupElement) -> bool {
        e.modulus == self.p && self.element(e.value).is_ok()
    }

    /// `g^exp`.
    pub fn exp_g(&self, exp: &Scalar) -> GroupElement {
        self.g().pow(exp)
    }

    /// `g^a · h^b`.
    pub fn commit(&self, a: &Scalar, b: &Scalar) -> GroupElement {
        self.g().pow(a) * self.h().pow(b)
    }

    /// Maps arbitrary bytes into the subgroup. Nobody learns the discrete
    /// log of the result relative to any other generator.
    pub fn hash_to_group(&self, tag: &[u8], data: &[u8]) -> GroupElement {
        hash_into_subgroup(self.p, self.q, tag, data)
    }

    pub fn encode_u64(&self, v: u64) -> Vec<u8> {
        let width = self.width();
        v.to_be_bytes()[8 - width..].to_vec()
    }

    pub fn decode_u64(&self, bytes: &[u8]) -> Result<u64, GroupError> {
        if bytes.len() != self.width() {
            return Err(GroupError::BadEncoding);
        }
        let mut buf = [0u8; 8];
        buf[8 - bytes.len()..].copy_from_slice(bytes);
        Ok(u64::from_be_bytes(buf))
    }

    /// Raw fixed-width encoding, used inside tagged structures.
    pub fn element_bytes(&self, e: &GroupElement) -> Vec<u8> {
        self.encode_u64(e.value)
    }

    pub fn scalar_bytes(&self, s: &Scalar) -> Vec<u8> {
        self.encode_u64(s.value)
    }

    pub fn element_from_bytes(&self, bytes: &[u8]) -> Result<GroupElement, GroupError> {
        self.element(self.decode_u64(bytes)?)
    }

    pub fn scalar_from_bytes(&self, bytes: &[u8]) -> Result<Scalar, GroupError> {
        let v = self.decode_u64(bytes)?;
        if v >= self.q {
            return Err(GroupError::BadEncoding);
        }
        Ok(self.scalar(v))
    }

    /// Tagged canonical encoding of an element, as fed to hashes.
    pub fn canonical_element(&self, e: &GroupElement) -> Vec<u8> {
        let mut out = vec![TAG_ELEMENT];
        out.extend(self.element_bytes(e));
        out
    }

    /// Tagged canonical encoding of a scalar, as fed to hashes.
    pub fn canonical_scalar(&self, s: &Scalar) -> Vec<u8> {
        let mut out = vec![TAG_SCALAR];
        out.extend(self.scalar_bytes(s));
        out
    }

    /// Canonical encoding of the whole parameter set:
    /// `bit_length ‖ p ‖ q ‖ g ‖ h`.
    pub fn canonical(&self) -> Vec<u8> {
        let mut out = vec![self.bit_length() as u8];
        for v in [self.p, self.q, self.g, self.h] {
            out.extend(self.encode_u64(v));
        }
        out
    }

    pub fn from_canonical(bytes: &[u8]) -> Result<Self, GroupError> {
        let (&bits, rest) = bytes.split_first().ok_or(GroupError::BadEncoding)?;
        let width = (bits as usize).div_ceil(8);
        if width == 0 || width > 8 || rest.len() != 4 * width {
            return Err(GroupError::BadEncoding);
        }
        let field = |i: usize| {
            let mut buf = [0u8; 8];
            buf[8 - width..].copy_from_slice(&rest[i * width..(i + 1) * width]);
            u64::from_be_bytes(buf)
        };
        let params = GroupParams::new(field(0), field(1), field(2), field(3))?;
        if params.bit_length() != bits as u32 {
            return Err(GroupError::BadEncoding);
        }
        Ok(params)
    }
}

/// Generates a safe-prime group `p = 2q + 1` with `p` of exactly
/// `bit_length` bits, a random generator `g` of the order-`q` subgroup and
/// `h = hash_to_group(g)`.
pub fn setup_group(bit_length: u32, rng: &mut SeededRng) -> Result<GroupParams, GroupError> {
    if !(MIN_BIT_LENGTH..=MAX_BIT_LENGTH).contains(&bit_length) {
        return Err(GroupError::UnsupportedBitLength(bit_length));
    }
    let q_bits = bit_length - 1;
    let (p, q) = loop {
        let top = 1u64 << (q_bits - 1);
        let mask = if q_bits == 64 { u64::MAX } else { (1u64 << q_bits) - 1 };
        let q = (rng.gen::<u64>() & mask) | top | 1;
        if !is_prime(q) {
            continue;
        }
        let Some(p) = q.checked_mul(2).and_then(|v| v.checked_add(1)) else {
            continue;
        };
        if 64 - p.leading_zeros() == bit_length && is_prime(p) {
            break (p, q);
        }
    };
    let g = loop {
        let x = rng.gen_range(2..p - 1);
        let candidate = mul_mod(x, x, p);
        if candidate != 1 {
            break candidate;
        }
    };
    let h = hash_into_subgroup(p, q, b"anonpool/second-generator", &g.to_be_bytes()).value;
    GroupParams::new(p, q, g, h)
}

fn hash_into_subgroup(p: u64, q: u64, tag: &[u8], data: &[u8]) -> GroupElement {
    let cofactor = (p - 1) / q;
    let mut counter = 0u32;
    loop {
        let mut hasher = DomainHasher::new(b"anonpool/hash-to-group");
        hasher.update(tag);
        hasher.update(data);
        hasher.update(&counter.to_be_bytes());
        let wide = hash_to_scalar_wide(hasher);
        let x = (wide % (p as u128 - 1)) as u64 + 1;
        let candidate = pow_mod(x, cofactor, p);
        if candidate != 1 {
            return GroupElement { value: candidate, modulus: p };
        }
        counter += 1;
    }
}

pub(crate) fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub(crate) fn pow_mod(base: u64, mut exp: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let mut result = 1u64;
    let mut b = base % m;
    while exp > 0 {
        if exp & 1 == 1 {
            result = mul_mod(result, b, m);
        }
        b = mul_mod(b, b, m);
        exp >>= 1;
    }
    result
}

/// Deterministic Miller-Rabin, exact for all `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for small in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n.is_multiple_of(small) {
            return n == small;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Square-and-multiply over plain integers, no shared code with `pow_mod`.
    fn naive_pow(base: u64, exp: u64, m: u64) -> u64 {
        let mut acc = 1u64;
        for _ in 0..exp {
            acc = acc * base % m;
        }
        acc
    }

    fn toy() -> GroupParams {
        GroupParams::new(23, 11, 2, 3).unwrap()
    }

    #[test]
    fn toy_params_pass_validity_check() {
        assert_eq!(naive_pow(2, 11, 23), 1);
        assert_eq!(naive_pow(3, 11, 23), 1);
        let params = toy();
        assert_eq!(params.width(), 1);
    }

    #[test]
    fn identity_generator_rejected() {
        assert_eq!(GroupParams::new(23, 11, 1, 3), Err(GroupError::IdentityGenerator(1)));
    }

    #[test]
    fn non_member_generator_rejected() {
        // 5 is a non-residue mod 23, so it has order 22.
        assert_eq!(GroupParams::new(23, 11, 5, 3), Err(GroupError::NotInSubgroup(5)));
        assert!(matches!(GroupParams::new(23, 7, 2, 3), Err(GroupError::OrderDoesNotDivide { .. })));
        assert!(matches!(GroupParams::new(21, 5, 2, 3), Err(GroupError::CompositeModulus(21))));
    }

    #[test]
    fn exponentiation_matches_naive_oracle() {
        let params = toy();
        let g = params.g();
        assert_eq!(g.pow(&params.scalar(4)).value(), naive_pow(2, 4, 23));
        assert_eq!(g.pow(&params.scalar(4)).value(), 16);
        assert!(g.pow(&params.zero()).is_identity());
        // q reduces to zero as a scalar; raise explicitly instead.
        assert!(g.pow_u64(params.q()).is_identity());
    }

    #[test]
    fn setup_is_deterministic_and_valid() {
        for bits in [16, 24, 32, 48, 64] {
            let a = setup_group(bits, &mut SeededRng::from_label(b"setup")).unwrap();
            let b = setup_group(bits, &mut SeededRng::from_label(b"setup")).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.bit_length(), bits);
            assert_eq!(naive_pow_big(a.g, a.q, a.p), 1);
            assert_eq!(naive_pow_big(a.h, a.q, a.p), 1);
            assert_eq!(a.h(), a.hash_to_group(b"anonpool/second-generator", &a.g.to_be_bytes()));
        }
    }

    #[test]
    fn unsupported_bit_length_rejected() {
        let mut rng = SeededRng::from_label(b"x");
        assert_eq!(setup_group(8, &mut rng), Err(GroupError::UnsupportedBitLength(8)));
        assert_eq!(setup_group(65, &mut rng), Err(GroupError::UnsupportedBitLength(65)));
    }

    /// Binary exponentiation with u128 intermediates written independently.
    fn naive_pow_big(base: u64, exp: u64, m: u64) -> u64 {
        let (mut acc, mut b, mut e) = (1u128, base as u128 % m as u128, exp);
        while e > 0 {
            if e % 2 == 1 {
                acc = acc * b % m as u128;
            }
            b = b * b % m as u128;
            e /= 2;
        }
        acc as u64
    }

    #[test]
    fn primality_matches_trial_division() {
        for n in 0u64..5000 {
            let trial = n >= 2 && (2..n).take_while(|d| d * d <= n).all(|d| n % d != 0);
            assert_eq!(is_prime(n), trial, "n = {n}");
        }
        // Strong pseudoprime to several bases.
        assert!(!is_prime(3_215_031_751));
        assert!(is_prime(18_446_744_073_709_551_557));
    }

    #[test]
    fn encoding_round_trip_and_width() {
        let params = setup_group(64, &mut SeededRng::from_label(b"enc")).unwrap();
        assert_eq!(params.width(), 8);
        let e = params.g();
        assert_eq!(params.element_from_bytes(&params.element_bytes(&e)).unwrap(), e);
        assert_eq!(params.canonical_element(&e)[0], TAG_ELEMENT);
        assert_eq!(params.element_from_bytes(&[1, 2]), Err(GroupError::BadEncoding));
        assert_eq!(GroupParams::from_canonical(&params.canonical()).unwrap(), params);
        let toy = toy();
        assert_eq!(GroupParams::from_canonical(&toy.canonical()).unwrap(), toy);
    }

    proptest! {
        #[test]
        fn exponent_composition(a in 0u64..1_000_000, b in 0u64..1_000_000) {
            let params = setup_group(32, &mut SeededRng::from_label(b"prop")).unwrap();
            let (a, b) = (params.scalar(a), params.scalar(b));
            let g = params.g();
            prop_assert_eq!(g.pow(&a).pow(&b), g.pow(&(a * b)));
            prop_assert_eq!(g.pow(&a) * g.pow(&b), g.pow(&(a + b)));
            prop_assert_eq!(g.pow(&a) * g.pow(&a).invert(), params.identity());
        }

        #[test]
        fn scalar_inverse(a in 1u64..1_000_000) {
            let params = setup_group(32, &mut SeededRng::from_label(b"prop")).unwrap();
            let a = params.scalar(a);
            prop_assert_eq!((a * a.invert().unwrap()).value(), 1);
        }
    }
}
