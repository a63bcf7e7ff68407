//! Fixed-precision arithmetic in the p-adic integers and small linear algebra
//! over `Z_p` and `F_p`.
//!
//! Every [`PadicInt`] is a residue modulo `p^K` together with a shared
//! [`PadicContext`]. Operations silently truncate to `K` digits; the only
//! place where the truncation becomes visible is [`PadicInt::valuation`],
//! which flags zero residues as being at the precision floor.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PadicError {
    #[error("{0} is not a prime >= 5")]
    BadPrime(u64),
    #[error("precision must be at least 1")]
    ZeroPrecision,
    #[error("p-adic context mismatch: (p={0}, K={1}) vs (p={2}, K={3})")]
    ContextMismatch(u64, u32, u64, u32),
    #[error("element has positive valuation and is not a unit")]
    NotAUnit,
    #[error("matrix is not invertible modulo p")]
    NotInvertible,
    #[error("denominator of {0} is divisible by p")]
    DenominatorDivisible(String),
    #[error("value is not divisible by p^{0}")]
    NotDivisible(u32),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Trial division; primes used here are small (below 10^6 in practice).
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut d = 3u64;
    while d.saturating_mul(d) <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

/// A prime `p >= 5` and a working precision `K`, plus cached powers of `p`.
#[derive(Debug)]
pub struct PadicContext {
    p: u64,
    precision: u32,
    powers: Vec<BigUint>,
}

impl PartialEq for PadicContext {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p && self.precision == other.precision
    }
}

impl Eq for PadicContext {}

impl PadicContext {
    pub fn new(p: u64, precision: u32) -> Result<Arc<Self>, PadicError> {
        if p < 5 || !is_prime(p) {
            return Err(PadicError::BadPrime(p));
        }
        if precision == 0 {
            return Err(PadicError::ZeroPrecision);
        }
        let pb = BigUint::from(p);
        let mut powers = Vec::with_capacity(precision as usize + 1);
        powers.push(BigUint::one());
        for i in 0..precision as usize {
            let next = &powers[i] * &pb;
            powers.push(next);
        }
        Ok(Arc::new(PadicContext { p, precision, powers }))
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    /// `p^K`.
    pub fn modulus(&self) -> &BigUint {
        &self.powers[self.precision as usize]
    }

    /// `p^i` for `i <= K`.
    pub fn p_pow(&self, i: u32) -> &BigUint {
        &self.powers[i as usize]
    }

    fn same_as(&self, other: &PadicContext) -> bool {
        self.p == other.p && self.precision == other.precision
    }

    fn mismatch(&self, other: &PadicContext) -> PadicError {
        PadicError::ContextMismatch(self.p, self.precision, other.p, other.precision)
    }

    /// Reduction of an arbitrary integer into `[0, p^K)`.
    pub fn reduce_bigint(&self, n: &BigInt) -> BigUint {
        let m = BigInt::from_biguint(Sign::Plus, self.modulus().clone());
        n.mod_floor(&m).to_biguint().expect("mod_floor is non-negative")
    }
}

/// p-adic valuation of a residue; `at_floor` marks a residue that is zero at
/// the working precision, whose true valuation is only known to be `>= K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Valuation {
    pub value: u32,
    pub at_floor: bool,
}

#[derive(Clone)]
pub struct PadicInt {
    ctx: Arc<PadicContext>,
    residue: BigUint,
}

impl PartialEq for PadicInt {
    fn eq(&self, other: &Self) -> bool {
        self.ctx.same_as(&other.ctx) && self.residue == other.residue
    }
}

impl Eq for PadicInt {}

impl fmt::Debug for PadicInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {}^{})", self.residue, self.ctx.p, self.ctx.precision)
    }
}

impl fmt::Display for PadicInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.residue)
    }
}

impl PadicInt {
    pub fn new(ctx: &Arc<PadicContext>, residue: BigUint) -> Self {
        let residue = if &residue >= ctx.modulus() { residue % ctx.modulus() } else { residue };
        PadicInt { ctx: ctx.clone(), residue }
    }

    pub fn zero(ctx: &Arc<PadicContext>) -> Self {
        PadicInt { ctx: ctx.clone(), residue: BigUint::zero() }
    }

    pub fn one(ctx: &Arc<PadicContext>) -> Self {
        Self::from_u64(ctx, 1)
    }

    pub fn from_u64(ctx: &Arc<PadicContext>, n: u64) -> Self {
        Self::new(ctx, BigUint::from(n))
    }

    pub fn from_i64(ctx: &Arc<PadicContext>, n: i64) -> Self {
        Self::from_bigint(ctx, &BigInt::from(n))
    }

    pub fn from_bigint(ctx: &Arc<PadicContext>, n: &BigInt) -> Self {
        PadicInt { ctx: ctx.clone(), residue: ctx.reduce_bigint(n) }
    }

    /// Maps `a/b` to `a * b^{-1}`; fails when `p` divides `b`.
    pub fn from_rational(ctx: &Arc<PadicContext>, q: &BigRational) -> Result<Self, PadicError> {
        let num = Self::from_bigint(ctx, q.numer());
        let den = Self::from_bigint(ctx, q.denom());
        match den.invert() {
            Ok(inv) => Ok(num * inv),
            Err(_) => Err(PadicError::DenominatorDivisible(q.to_string())),
        }
    }

    pub fn ctx(&self) -> &Arc<PadicContext> {
        &self.ctx
    }

    pub fn residue(&self) -> &BigUint {
        &self.residue
    }

    /// Residue modulo `p`.
    pub fn mod_p(&self) -> u64 {
        let r = &self.residue % self.ctx.p;
        r.try_into().expect("residue mod p fits in u64")
    }

    /// Signed representative in `(-p^K/2, p^K/2]`.
    pub fn to_signed(&self) -> BigInt {
        let m = self.ctx.modulus();
        let r = BigInt::from_biguint(Sign::Plus, self.residue.clone());
        if &self.residue * 2u32 > *m {
            r - BigInt::from_biguint(Sign::Plus, m.clone())
        } else {
            r
        }
    }

    pub fn is_zero(&self) -> bool {
        self.residue.is_zero()
    }

    fn check_ctx(&self, other: &PadicInt) -> Result<(), PadicError> {
        if Arc::ptr_eq(&self.ctx, &other.ctx) || self.ctx.same_as(&other.ctx) {
            Ok(())
        } else {
            Err(self.ctx.mismatch(&other.ctx))
        }
    }

    pub fn checked_add(&self, other: &PadicInt) -> Result<PadicInt, PadicError> {
        self.check_ctx(other)?;
        let mut r = &self.residue + &other.residue;
        if &r >= self.ctx.modulus() {
            r -= self.ctx.modulus();
        }
        Ok(PadicInt { ctx: self.ctx.clone(), residue: r })
    }

    pub fn checked_sub(&self, other: &PadicInt) -> Result<PadicInt, PadicError> {
        self.check_ctx(other)?;
        let r = if self.residue >= other.residue {
            &self.residue - &other.residue
        } else {
            self.ctx.modulus() - &other.residue + &self.residue
        };
        Ok(PadicInt { ctx: self.ctx.clone(), residue: r })
    }

    pub fn checked_mul(&self, other: &PadicInt) -> Result<PadicInt, PadicError> {
        self.check_ctx(other)?;
        Ok(PadicInt {
            ctx: self.ctx.clone(),
            residue: (&self.residue * &other.residue) % self.ctx.modulus(),
        })
    }

    pub fn mul_u64(&self, k: u64) -> PadicInt {
        PadicInt { ctx: self.ctx.clone(), residue: (&self.residue * k) % self.ctx.modulus() }
    }

    pub fn pow(&self, mut e: u64) -> PadicInt {
        let mut base = self.clone();
        let mut acc = PadicInt::one(&self.ctx);
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            base = &base * &base;
            e >>= 1;
        }
        acc
    }

    pub fn valuation(&self) -> Valuation {
        if self.residue.is_zero() {
            return Valuation { value: self.ctx.precision, at_floor: true };
        }
        let mut v = 0;
        let mut r = self.residue.clone();
        let p = BigUint::from(self.ctx.p);
        loop {
            let (q, rem) = r.div_rem(&p);
            if !rem.is_zero() {
                break;
            }
            v += 1;
            r = q;
        }
        Valuation { value: v, at_floor: false }
    }

    /// Inverse of a unit, by Newton lifting of the inverse modulo `p`.
    pub fn invert(&self) -> Result<PadicInt, PadicError> {
        let a0 = self.mod_p();
        if a0 == 0 {
            return Err(PadicError::NotAUnit);
        }
        let p = self.ctx.p;
        let inv0 = mod_pow_u64(a0, p - 2, p);
        let two = PadicInt::from_u64(&self.ctx, 2);
        let mut x = PadicInt::from_u64(&self.ctx, inv0);
        let mut digits = 1u32;
        while digits < self.ctx.precision {
            // x <- x (2 - a x) doubles the number of correct digits
            x = &x * &(&two - &(self * &x));
            digits *= 2;
        }
        Ok(x)
    }

    /// Exact division by `p^v`. The top `v` digits of the result are unknown
    /// and are filled with zeros.
    pub fn div_p_pow(&self, v: u32) -> Result<PadicInt, PadicError> {
        if v == 0 {
            return Ok(self.clone());
        }
        if v > self.ctx.precision {
            return Err(PadicError::NotDivisible(v));
        }
        let (q, r) = self.residue.div_rem(self.ctx.p_pow(v));
        if !r.is_zero() {
            return Err(PadicError::NotDivisible(v));
        }
        Ok(PadicInt { ctx: self.ctx.clone(), residue: q })
    }

    /// Residue reduced modulo `p^digits` (same context).
    pub fn reduce_to(&self, digits: u32) -> PadicInt {
        if digits >= self.ctx.precision {
            return self.clone();
        }
        PadicInt { ctx: self.ctx.clone(), residue: &self.residue % self.ctx.p_pow(digits) }
    }

    pub fn mul_p_pow(&self, v: u32) -> PadicInt {
        if v >= self.ctx.precision {
            return PadicInt::zero(&self.ctx);
        }
        PadicInt {
            ctx: self.ctx.clone(),
            residue: (&self.residue * self.ctx.p_pow(v)) % self.ctx.modulus(),
        }
    }

    /// Re-reads the residue in another context with the same prime, reducing
    /// when the target precision is lower.
    pub fn with_context(&self, ctx: &Arc<PadicContext>) -> PadicInt {
        debug_assert_eq!(self.ctx.p, ctx.p);
        PadicInt::new(ctx, self.residue.clone())
    }
}

pub(crate) fn mod_pow_u64(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1u64 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod(acc, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    acc
}

#[inline]
pub(crate) fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

macro_rules! forward_binop {
    ($tr:ident, $method:ident, $checked:ident) => {
        impl<'a> $tr<&'a PadicInt> for &'a PadicInt {
            type Output = PadicInt;
            fn $method(self, rhs: &'a PadicInt) -> PadicInt {
                self.$checked(rhs).expect("p-adic operands must share a context")
            }
        }
        impl $tr<PadicInt> for PadicInt {
            type Output = PadicInt;
            fn $method(self, rhs: PadicInt) -> PadicInt {
                (&self).$method(&rhs)
            }
        }
        impl<'a> $tr<&'a PadicInt> for PadicInt {
            type Output = PadicInt;
            fn $method(self, rhs: &'a PadicInt) -> PadicInt {
                (&self).$method(rhs)
            }
        }
    };
}

forward_binop!(Add, add, checked_add);
forward_binop!(Sub, sub, checked_sub);
forward_binop!(Mul, mul, checked_mul);

impl Neg for &PadicInt {
    type Output = PadicInt;
    fn neg(self) -> PadicInt {
        PadicInt::zero(&self.ctx) - self
    }
}

impl Neg for PadicInt {
    type Output = PadicInt;
    fn neg(self) -> PadicInt {
        -&self
    }
}

/// A point of `Z_p^g`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PadicVec(pub Vec<PadicInt>);

impl PadicVec {
    pub fn zeros(ctx: &Arc<PadicContext>, g: usize) -> Self {
        PadicVec(vec![PadicInt::zero(ctx); g])
    }

    pub fn from_i64s(ctx: &Arc<PadicContext>, xs: &[i64]) -> Self {
        PadicVec(xs.iter().map(|&x| PadicInt::from_i64(ctx, x)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mod_p(&self) -> Vec<u64> {
        self.0.iter().map(PadicInt::mod_p).collect()
    }
}

/// Square matrix over `Z_p`, row major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PadicMatrix {
    rows: Vec<Vec<PadicInt>>,
}

impl PadicMatrix {
    pub fn new(rows: Vec<Vec<PadicInt>>) -> Result<Self, PadicError> {
        let n = rows.len();
        for r in &rows {
            if r.len() != n {
                return Err(PadicError::DimensionMismatch { expected: n, found: r.len() });
            }
        }
        Ok(PadicMatrix { rows })
    }

    pub fn identity(ctx: &Arc<PadicContext>, g: usize) -> Self {
        let rows = (0..g)
            .map(|i| {
                (0..g)
                    .map(|j| if i == j { PadicInt::one(ctx) } else { PadicInt::zero(ctx) })
                    .collect()
            })
            .collect();
        PadicMatrix { rows }
    }

    pub fn from_i64s(ctx: &Arc<PadicContext>, rows: &[&[i64]]) -> Result<Self, PadicError> {
        Self::new(
            rows.iter()
                .map(|r| r.iter().map(|&x| PadicInt::from_i64(ctx, x)).collect())
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> &PadicInt {
        &self.rows[i][j]
    }

    pub fn rows(&self) -> &[Vec<PadicInt>] {
        &self.rows
    }

    pub fn mul(&self, other: &PadicMatrix) -> PadicMatrix {
        let n = self.dim();
        let ctx = self.rows[0][0].ctx().clone();
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        (0..n).fold(PadicInt::zero(&ctx), |acc, k| {
                            acc + &self.rows[i][k] * &other.rows[k][j]
                        })
                    })
                    .collect()
            })
            .collect();
        PadicMatrix { rows }
    }

    pub fn pow(&self, mut e: u64) -> PadicMatrix {
        let ctx = self.rows[0][0].ctx().clone();
        let mut acc = PadicMatrix::identity(&ctx, self.dim());
        let mut base = self.clone();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            e >>= 1;
        }
        acc
    }

    pub fn mod_p(&self) -> ModPMatrix {
        let p = self.rows.first().map(|r| r[0].ctx().p()).unwrap_or(5);
        ModPMatrix {
            p,
            rows: self.rows.iter().map(|r| r.iter().map(PadicInt::mod_p).collect()).collect(),
        }
    }
}

/// True iff `det(L)` is a p-adic unit.
pub fn matrix_invertible_mod_p(l: &PadicMatrix) -> bool {
    if l.dim() == 0 {
        return true;
    }
    l.mod_p().det() != 0
}

/// Matrix over `F_p` with `u64` entries in `[0, p)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ModPMatrix {
    pub p: u64,
    pub rows: Vec<Vec<u64>>,
}

impl ModPMatrix {
    pub fn identity(p: u64, g: usize) -> Self {
        let rows = (0..g).map(|i| (0..g).map(|j| u64::from(i == j)).collect()).collect();
        ModPMatrix { p, rows }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn det(&self) -> u64 {
        let p = self.p;
        let n = self.dim();
        let mut a = self.rows.clone();
        let mut det = 1u64;
        for col in 0..n {
            let Some(piv) = (col..n).find(|&r| a[r][col] != 0) else {
                return 0;
            };
            if piv != col {
                a.swap(piv, col);
                det = (p - det) % p;
            }
            det = mul_mod(det, a[col][col], p);
            let inv = mod_pow_u64(a[col][col], p - 2, p);
            for r in col + 1..n {
                let f = mul_mod(a[r][col], inv, p);
                if f == 0 {
                    continue;
                }
                for c in col..n {
                    let sub = mul_mod(f, a[col][c], p);
                    a[r][c] = (a[r][c] + p - sub) % p;
                }
            }
        }
        det
    }

    pub fn mul(&self, other: &ModPMatrix) -> ModPMatrix {
        let n = self.dim();
        let p = self.p;
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).fold(0, |acc, k| (acc + mul_mod(self.rows[i][k], other.rows[k][j], p)) % p))
                    .collect()
            })
            .collect();
        ModPMatrix { p, rows }
    }

    pub fn apply(&self, v: &[u64]) -> Vec<u64> {
        let p = self.p;
        self.rows
            .iter()
            .map(|r| r.iter().zip(v).fold(0, |acc, (&a, &x)| (acc + mul_mod(a, x, p)) % p))
            .collect()
    }
}

/// The affine map `x -> C + L x` over `F_p^g`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AffineModP {
    pub linear: ModPMatrix,
    pub offset: Vec<u64>,
}

impl AffineModP {
    pub fn identity(p: u64, g: usize) -> Self {
        AffineModP { linear: ModPMatrix::identity(p, g), offset: vec![0; g] }
    }

    pub fn apply(&self, v: &[u64]) -> Vec<u64> {
        let p = self.linear.p;
        self.linear.apply(v).into_iter().zip(&self.offset).map(|(a, &c)| (a + c) % p).collect()
    }

    /// `self` after `other`.
    pub fn compose(&self, other: &AffineModP) -> AffineModP {
        let p = self.linear.p;
        let linear = self.linear.mul(&other.linear);
        let offset = self.apply(&other.offset);
        debug_assert!(offset.iter().all(|&x| x < p));
        AffineModP { linear, offset }
    }

    pub fn pow(&self, mut e: u64) -> AffineModP {
        let mut acc = AffineModP::identity(self.linear.p, self.linear.dim());
        let mut base = self.clone();
        while e > 0 {
            if e & 1 == 1 {
                acc = base.compose(&acc);
            }
            base = base.compose(&base);
            e >>= 1;
        }
        acc
    }

    pub fn is_identity(&self) -> bool {
        *self == AffineModP::identity(self.linear.p, self.linear.dim())
    }
}

fn factor_u64(mut n: u64, out: &mut Vec<u64>) {
    let mut d = 2u64;
    while d.saturating_mul(d) <= n {
        while n % d == 0 {
            out.push(d);
            n /= d;
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
}

/// Least `M >= 1` with `(x -> C + L x)^M = id` on `F_p^g`.
///
/// The affine group `AGL_g(F_p)` has order `p^g * prod_{i<g} (p^g - p^i)`, so
/// the order is found by stripping prime factors from that group order while
/// the power stays the identity.
pub fn affine_order_mod_p(l: &PadicMatrix, c: &PadicVec) -> Result<u64, PadicError> {
    if l.dim() != c.len() {
        return Err(PadicError::DimensionMismatch { expected: l.dim(), found: c.len() });
    }
    if !matrix_invertible_mod_p(l) {
        return Err(PadicError::NotInvertible);
    }
    let g = l.dim();
    if g == 0 {
        return Ok(1);
    }
    let map = AffineModP { linear: l.mod_p(), offset: c.mod_p() };
    Ok(affine_order(&map))
}

pub(crate) fn affine_order(map: &AffineModP) -> u64 {
    let p = map.linear.p;
    let g = map.linear.dim() as u32;
    let mut factors = Vec::new();
    for _ in 0..g {
        factors.push(p);
    }
    for i in 0..g {
        for _ in 0..i {
            factors.push(p);
        }
        let pg = p.checked_pow(g - i).expect("p^g fits in u64");
        factor_u64(pg - 1, &mut factors);
    }
    factors.sort_unstable();
    let power_by = |fs: &[u64]| fs.iter().fold(map.clone(), |m, &q| m.pow(q));
    let mut i = 0;
    while i < factors.len() {
        let mut trial = factors.clone();
        trial.remove(i);
        if power_by(&trial).is_identity() {
            factors = trial;
        } else {
            i += 1;
        }
    }
    factors.iter().product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctx(p: u64, k: u32) -> Arc<PadicContext> {
        PadicContext::new(p, k).unwrap()
    }

    #[test]
    fn context_rejects_small_or_composite() {
        assert_eq!(PadicContext::new(3, 4).unwrap_err(), PadicError::BadPrime(3));
        assert_eq!(PadicContext::new(9, 4).unwrap_err(), PadicError::BadPrime(9));
        assert_eq!(PadicContext::new(5, 0).unwrap_err(), PadicError::ZeroPrecision);
    }

    #[test]
    fn add_examples() {
        let c = ctx(5, 3);
        assert_eq!((PadicInt::from_u64(&c, 124) + PadicInt::from_u64(&c, 1)).residue(), &BigUint::zero());
        let x = PadicInt::from_u64(&c, 77);
        assert_eq!(&x + &PadicInt::zero(&c), x);
        let c7 = ctx(7, 2);
        assert_eq!(
            (PadicInt::from_u64(&c7, 48) + PadicInt::from_u64(&c7, 3)).residue(),
            &BigUint::from(2u32)
        );
    }

    #[test]
    fn mismatched_contexts_error() {
        let a = PadicInt::one(&ctx(5, 3));
        let b = PadicInt::one(&ctx(7, 3));
        assert!(matches!(a.checked_add(&b), Err(PadicError::ContextMismatch(5, 3, 7, 3))));
        assert!(a.checked_mul(&b).is_err());
    }

    #[test]
    fn mul_examples() {
        let c = ctx(5, 3);
        let x = PadicInt::from_u64(&c, 93);
        assert_eq!(&x * &PadicInt::one(&c), x);
        let c2 = ctx(5, 2);
        assert!((PadicInt::from_u64(&c2, 5) * PadicInt::from_u64(&c2, 5)).is_zero());
        assert_eq!(
            (PadicInt::from_u64(&c, 7) * PadicInt::from_u64(&c, 18)).residue(),
            &BigUint::one()
        );
    }

    #[test]
    fn valuation_examples() {
        let c = ctx(5, 3);
        assert_eq!(PadicInt::from_u64(&c, 50).valuation(), Valuation { value: 2, at_floor: false });
        assert_eq!(PadicInt::one(&c).valuation(), Valuation { value: 0, at_floor: false });
        let c4 = ctx(5, 4);
        assert_eq!(PadicInt::zero(&c4).valuation(), Valuation { value: 4, at_floor: true });
    }

    #[test]
    fn invert_examples() {
        let c = ctx(5, 2);
        assert_eq!(PadicInt::one(&c).invert().unwrap(), PadicInt::one(&c));
        assert_eq!(PadicInt::from_u64(&c, 2).invert().unwrap().residue(), &BigUint::from(13u32));
        assert_eq!(PadicInt::from_u64(&c, 5).invert(), Err(PadicError::NotAUnit));
    }

    #[test]
    fn rationals_map_through_inverse() {
        let c = ctx(5, 2);
        let half = BigRational::new(1.into(), 2.into());
        assert_eq!(PadicInt::from_rational(&c, &half).unwrap().residue(), &BigUint::from(13u32));
        let fifth = BigRational::new(1.into(), 5.into());
        assert!(matches!(
            PadicInt::from_rational(&c, &fifth),
            Err(PadicError::DenominatorDivisible(_))
        ));
        let neg = BigRational::from_integer((-1).into());
        assert_eq!(PadicInt::from_rational(&c, &neg).unwrap().residue(), &BigUint::from(24u32));
    }

    #[test]
    fn invertibility_mod_p() {
        let c = ctx(5, 3);
        assert!(matrix_invertible_mod_p(&PadicMatrix::identity(&c, 3)));
        assert!(!matrix_invertible_mod_p(&PadicMatrix::from_i64s(&c, &[&[5, 0], &[0, 1]]).unwrap()));
        assert!(matrix_invertible_mod_p(&PadicMatrix::from_i64s(&c, &[&[2, 1], &[1, 1]]).unwrap()));
    }

    #[test]
    fn affine_order_examples() {
        let c = ctx(5, 3);
        let id = PadicMatrix::identity(&c, 2);
        assert_eq!(affine_order_mod_p(&id, &PadicVec::zeros(&c, 2)).unwrap(), 1);
        let two = PadicMatrix::from_i64s(&c, &[&[2]]).unwrap();
        assert_eq!(affine_order_mod_p(&two, &PadicVec::from_i64s(&c, &[0])).unwrap(), 4);
        let one = PadicMatrix::from_i64s(&c, &[&[1]]).unwrap();
        assert_eq!(affine_order_mod_p(&one, &PadicVec::from_i64s(&c, &[1])).unwrap(), 5);
        let sing = PadicMatrix::from_i64s(&c, &[&[5]]).unwrap();
        assert_eq!(affine_order_mod_p(&sing, &PadicVec::from_i64s(&c, &[1])), Err(PadicError::NotInvertible));
    }

    /// Brute-force oracle: iterate the pair (matrix, offset) until it returns
    /// to the identity.
    fn brute_affine_order(map: &AffineModP) -> u64 {
        let mut cur = map.clone();
        let mut m = 1;
        while !cur.is_identity() {
            cur = map.compose(&cur);
            m += 1;
        }
        m
    }

    fn arb_unit_affine() -> impl Strategy<Value = (u64, Vec<Vec<u64>>, Vec<u64>)> {
        (prop::sample::select(vec![5u64, 7, 11]), 1usize..=3).prop_flat_map(|(p, g)| {
            (
                Just(p),
                prop::collection::vec(prop::collection::vec(0..p, g), g),
                prop::collection::vec(0..p, g),
            )
        })
    }

    proptest! {
        #[test]
        fn ring_axioms(a in 0u64..1_000_000, b in 0u64..1_000_000, c in 0u64..1_000_000) {
            let cx = ctx(7, 6);
            let (a, b, c) = (PadicInt::from_u64(&cx, a), PadicInt::from_u64(&cx, b), PadicInt::from_u64(&cx, c));
            prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
            prop_assert_eq!(&(&a + &b) + &c, &a + &(&b + &c));
            prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
            prop_assert_eq!(&a * &b, &b * &a);
            prop_assert_eq!(&(&a - &b) + &b, a.clone());
        }

        #[test]
        fn valuation_is_additive(a in 1u64..1_000_000, b in 1u64..1_000_000, ea in 0u32..5, eb in 0u32..5) {
            let cx = ctx(5, 8);
            let x = PadicInt::from_u64(&cx, a).mul_p_pow(ea);
            let y = PadicInt::from_u64(&cx, b).mul_p_pow(eb);
            let expected = (x.valuation().value + y.valuation().value).min(8);
            prop_assert_eq!((&x * &y).valuation().value, expected);
        }

        #[test]
        fn inverse_of_units(a in 1u64..u64::MAX, k in 1u32..50) {
            let cx = ctx(11, k);
            let x = PadicInt::from_u64(&cx, a);
            prop_assume!(x.mod_p() != 0);
            prop_assert_eq!(&x * &x.invert().unwrap(), PadicInt::one(&cx));
        }

        #[test]
        fn affine_order_returns_to_start((p, rows, off) in arb_unit_affine(), seeds in prop::collection::vec(0u64..1000, 20)) {
            let map = AffineModP { linear: ModPMatrix { p, rows }, offset: off };
            prop_assume!(map.linear.det() != 0);
            let m = affine_order(&map);
            prop_assert_eq!(m, brute_affine_order(&map));
            let g = map.offset.len();
            let power = map.pow(m);
            for (i, s) in seeds.iter().enumerate() {
                let v: Vec<u64> = (0..g).map(|k| (s + 31 * (i as u64) + 7 * k as u64) % p).collect();
                let mut w = v.clone();
                for _ in 0..m {
                    w = map.apply(&w);
                }
                prop_assert_eq!(&w, &v);
                prop_assert_eq!(power.apply(&v), v);
            }
        }
    }
}
