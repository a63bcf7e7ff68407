//! Mahler calculus on `Z_p`: functions written in the binomial basis
//! `binom(z, k)`.
//!
//! Coefficients are always obtained from values at `z = 0, 1, ..., m` by
//! forward differences, and values are recovered from coefficients by the
//! shift identity `binom(z+1, k) - binom(z, k) = binom(z, k-1)`.

use std::sync::Arc;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::padic::{PadicContext, PadicInt};
use crate::zeros::{AnalyticWitness, ApproxCoeff};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MahlerError {
    #[error("tail beyond index {last} is not certified below precision (bound {bound} < {precision})")]
    TailNotCertified { last: usize, bound: u32, precision: u32 },
    #[error("power-series coefficient {index} keeps only {precision} digits, below the floor {floor}")]
    PrecisionExhausted { index: usize, precision: u32, floor: u32 },
    #[error("Mahler coefficient {index} has valuation {valuation} below v_p({index}!) = {needed}")]
    NonIntegral { index: usize, valuation: u32, needed: u32 },
}

/// Finite Mahler expansion `sum_k c_k binom(z, k)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MahlerPoly {
    ctx: Arc<PadicContext>,
    coeffs: Vec<PadicInt>,
}

impl MahlerPoly {
    pub fn new(ctx: &Arc<PadicContext>, coeffs: Vec<PadicInt>) -> Self {
        MahlerPoly { ctx: ctx.clone(), coeffs }
    }

    pub fn zero(ctx: &Arc<PadicContext>) -> Self {
        Self::new(ctx, Vec::new())
    }

    pub fn constant(c: PadicInt) -> Self {
        let ctx = c.ctx().clone();
        Self::new(&ctx, vec![c])
    }

    /// `binom(z, k)`.
    pub fn binomial(ctx: &Arc<PadicContext>, k: usize) -> Self {
        let mut coeffs = vec![PadicInt::zero(ctx); k + 1];
        coeffs[k] = PadicInt::one(ctx);
        Self::new(ctx, coeffs)
    }

    pub fn ctx(&self) -> &Arc<PadicContext> {
        &self.ctx
    }

    pub fn coeffs(&self) -> &[PadicInt] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> PadicInt {
        self.coeffs.get(k).cloned().unwrap_or_else(|| PadicInt::zero(&self.ctx))
    }

    /// Largest `k` with a nonzero coefficient.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.iter().rposition(|c| !c.is_zero())
    }

    /// Mahler coefficients of the function taking `vals[z]` at `z = 0..m`.
    pub fn from_values(vals: &[PadicInt]) -> Self {
        let ctx = vals.first().map(|v| v.ctx().clone()).expect("at least one value");
        let mut diff = vals.to_vec();
        let mut coeffs = Vec::with_capacity(vals.len());
        for level in 0..vals.len() {
            coeffs.push(diff[0].clone());
            for i in 0..vals.len() - level - 1 {
                diff[i] = &diff[i + 1] - &diff[i];
            }
        }
        Self::new(&ctx, coeffs)
    }

    /// Values at `z = 0, 1, ..., count - 1`.
    pub fn values(&self, count: usize) -> Vec<PadicInt> {
        let mut col = self.coeffs.clone();
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            out.push(col.first().cloned().unwrap_or_else(|| PadicInt::zero(&self.ctx)));
            for k in 0..col.len().saturating_sub(1) {
                col[k] = &col[k] + &col[k + 1];
            }
        }
        out
    }

    /// Value at the canonical representative in `[0, p^K)` of `z`.
    pub fn eval(&self, z: &PadicInt) -> PadicInt {
        self.eval_binomials(&binomials_at(z, self.coeffs.len().saturating_sub(1)))
    }

    /// Value from precomputed `binom(z, k)`, which must cover the degree.
    pub fn eval_binomials(&self, binoms: &[PadicInt]) -> PadicInt {
        assert!(binoms.len() >= self.coeffs.len(), "too few binomials");
        self.coeffs.iter().zip(binoms).fold(PadicInt::zero(&self.ctx), |acc, (c, b)| acc + c * b)
    }

    /// `z -> f(z + 1)`: `c'_k = c_k + c_{k+1}`.
    pub fn shift(&self) -> Self {
        let n = self.coeffs.len();
        let coeffs = (0..n)
            .map(|k| if k + 1 < n { &self.coeffs[k] + &self.coeffs[k + 1] } else { self.coeffs[k].clone() })
            .collect();
        Self::new(&self.ctx, coeffs)
    }

    /// The antidifference `h = -sum_k q_k binom(z, k+1)`: `h(0) = 0` and
    /// `h(z+1) - h(z) = -Q(z)`.
    pub fn solve_difference(q: &MahlerPoly) -> Self {
        let mut coeffs = Vec::with_capacity(q.coeffs.len() + 1);
        coeffs.push(PadicInt::zero(&q.ctx));
        coeffs.extend(q.coeffs.iter().map(|c| -c));
        let mut h = Self::new(&q.ctx, coeffs);
        h.trim();
        h
    }

    pub fn add(&self, other: &MahlerPoly) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Self::new(&self.ctx, (0..n).map(|k| self.coeff(k) + other.coeff(k)).collect())
    }

    pub fn sub(&self, other: &MahlerPoly) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Self::new(&self.ctx, (0..n).map(|k| self.coeff(k) - other.coeff(k)).collect())
    }

    pub fn scale(&self, s: &PadicInt) -> Self {
        Self::new(&self.ctx, self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn mul_p_pow(&self, v: u32) -> Self {
        Self::new(&self.ctx, self.coeffs.iter().map(|c| c.mul_p_pow(v)).collect())
    }

    /// Product, computed on values at `0..=deg f + deg g`.
    pub fn mul(&self, other: &MahlerPoly) -> Self {
        let (Some(da), Some(db)) = (self.degree(), other.degree()) else {
            return Self::zero(&self.ctx);
        };
        let n = da + db + 1;
        let vals: Vec<PadicInt> =
            self.values(n).iter().zip(other.values(n)).map(|(a, b)| a * &b).collect();
        let mut out = Self::from_values(&vals);
        out.trim();
        out
    }

    pub fn trim(&mut self) {
        while self.coeffs.last().is_some_and(PadicInt::is_zero) {
            self.coeffs.pop();
        }
    }
}

/// Certified lower bound on the valuation of the index-`k` coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TailRule {
    /// `0` at `k = 0`, `ceil((k+1)/2)` for `k >= 1`.
    HalfIndex,
    /// Coefficients beyond the stored ones are exactly zero.
    ZeroBeyond,
}

impl TailRule {
    /// The bound at `k`, given that indices up to `last` are stored.
    pub fn bound(&self, k: usize, last: usize) -> u32 {
        match self {
            TailRule::HalfIndex => {
                if k == 0 {
                    0
                } else {
                    (k as u32 + 2) / 2
                }
            }
            TailRule::ZeroBeyond => {
                if k <= last {
                    0
                } else {
                    u32::MAX
                }
            }
        }
    }
}

/// `sum_{k <= T} b_k binom(z, k)` plus a tail certified by `tail`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MahlerSeries {
    coeffs: Vec<PadicInt>,
    tail: TailRule,
}

impl MahlerSeries {
    pub fn new(coeffs: Vec<PadicInt>, tail: TailRule) -> Self {
        assert!(!coeffs.is_empty(), "a Mahler series stores at least b_0");
        MahlerSeries { coeffs, tail }
    }

    pub fn from_poly(f: &MahlerPoly) -> Self {
        let mut coeffs = f.coeffs.clone();
        if coeffs.is_empty() {
            coeffs.push(PadicInt::zero(&f.ctx));
        }
        Self::new(coeffs, TailRule::ZeroBeyond)
    }

    /// Series from values at `0..=T`.
    pub fn from_values(vals: &[PadicInt], tail: TailRule) -> Self {
        Self::new(MahlerPoly::from_values(vals).coeffs, tail)
    }

    pub fn ctx(&self) -> &Arc<PadicContext> {
        self.coeffs[0].ctx()
    }

    pub fn coeffs(&self) -> &[PadicInt] {
        &self.coeffs
    }

    pub fn last_index(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn tail(&self) -> TailRule {
        self.tail
    }

    pub fn tail_bound(&self, k: usize) -> u32 {
        self.tail.bound(k, self.last_index())
    }

    fn check_tail(&self) -> Result<(), MahlerError> {
        let last = self.last_index();
        let precision = self.ctx().precision();
        let bound = self.tail_bound(last + 1);
        if bound < precision {
            return Err(MahlerError::TailNotCertified { last, bound, precision });
        }
        Ok(())
    }

    /// `sum_{k <= T} b_k binom(z, k) mod p^K`.
    pub fn evaluate(&self, z: &PadicInt) -> Result<PadicInt, MahlerError> {
        self.check_tail()?;
        let binoms = binomials_at(z, self.last_index());
        Ok(self.coeffs.iter().zip(&binoms).fold(PadicInt::zero(self.ctx()), |acc, (c, b)| acc + c * b))
    }

    /// Values at the naturals `0..count`, by running Pascal's rule along the
    /// row of binomials.
    pub fn values_at_naturals(&self, count: usize) -> Result<Vec<PadicInt>, MahlerError> {
        self.check_tail()?;
        let poly = MahlerPoly::new(self.ctx(), self.coeffs.clone());
        Ok(poly.values(count))
    }

    /// Monomial coefficients `a_m = sum_{k >= m} b_k s(k, m) / k!`, each with
    /// the number of p-adic digits that survive the division by `k!` and the
    /// unknown tail. Fails when a coefficient keeps fewer than `floor` digits.
    pub fn to_power_series(&self, floor: u32) -> Result<AnalyticWitness, MahlerError> {
        let ctx = self.ctx().clone();
        let p = ctx.p();
        let precision = ctx.precision();
        let last = self.last_index();

        // b_k / k!, meaningful to K - v_p(k!) digits
        let mut scaled = Vec::with_capacity(last + 1);
        let mut fact_unit = PadicInt::one(&ctx);
        let mut fact_val = 0u32;
        let mut known = Vec::with_capacity(last + 1);
        for k in 0..=last {
            if k > 0 {
                let (v, u) = split_p(k as u64, p);
                fact_val += v;
                fact_unit = fact_unit.mul_u64(u);
            }
            let b = &self.coeffs[k];
            let digits = precision.saturating_sub(fact_val);
            if digits == 0 {
                scaled.push(PadicInt::zero(&ctx));
                known.push(0);
                continue;
            }
            let bv = b.valuation();
            if !bv.at_floor && bv.value < fact_val {
                return Err(MahlerError::NonIntegral { index: k, valuation: bv.value, needed: fact_val });
            }
            let q = if bv.at_floor { PadicInt::zero(&ctx) } else { b.div_p_pow(fact_val).expect("valuation checked") };
            scaled.push(q * fact_unit.invert().expect("unit part of k!"));
            known.push(digits);
        }

        // certified valuation of sum_{k > T} b_k s(k, m) / k!
        let tail_bound = tail_after(self.tail, last, p);

        let stirling = stirling_first_kind(last);
        let mut coeffs = Vec::with_capacity(last + 1);
        let mut worst_known = u32::MAX;
        for m in (0..=last).rev() {
            worst_known = worst_known.min(known[m]);
            let digits = worst_known.min(tail_bound).min(precision);
            let mut acc = PadicInt::zero(&ctx);
            for k in m..=last {
                let s = &stirling[k][m];
                if s.is_zero() || scaled[k].is_zero() {
                    continue;
                }
                acc = acc + &scaled[k] * &PadicInt::from_bigint(&ctx, s);
            }
            if digits < floor {
                return Err(MahlerError::PrecisionExhausted { index: m, precision: digits, floor });
            }
            coeffs.push(ApproxCoeff::new(acc, digits));
        }
        coeffs.reverse();
        Ok(AnalyticWitness::new(coeffs, tail_bound))
    }
}

/// Lower bound for `v(b_k) - v(k!)` over `k > last`, which bounds the tail of
/// every monomial coefficient.
fn tail_after(rule: TailRule, last: usize, p: u64) -> u32 {
    match rule {
        TailRule::ZeroBeyond => u32::MAX,
        TailRule::HalfIndex => {
            let mut fact_val: i64 = (1..=last as u64).map(|k| split_p(k, p).0 as i64).sum();
            let mut best = i64::MAX;
            let mut k = last as u64 + 1;
            loop {
                fact_val += split_p(k, p).0 as i64;
                let b = TailRule::HalfIndex.bound(k as usize, last) as i64;
                best = best.min(b - fact_val);
                // v(k!) <= (k-1)/(p-1) and (k+1)/2 - (k-1)/(p-1) increases for p > 3,
                // so once it passes `best` no later index can lower it
                let (ki, pi) = (k as i64, p as i64);
                if (ki + 1) * (pi - 1) - 2 * (ki - 1) > 2 * best * (pi - 1) {
                    break;
                }
                k += 1;
            }
            best.max(0) as u32
        }
    }
}

/// `n = p^v * u` with `p` not dividing `u`.
fn split_p(mut n: u64, p: u64) -> (u32, u64) {
    let mut v = 0;
    while n % p == 0 {
        n /= p;
        v += 1;
    }
    (v, n)
}

/// `v_p(k!)`.
pub fn factorial_valuation(k: u64, p: u64) -> u32 {
    let mut v = 0u64;
    let mut q = p;
    while q <= k {
        v += k / q;
        q = match q.checked_mul(p) {
            Some(x) => x,
            None => break,
        };
    }
    v as u32
}

/// Signed Stirling numbers of the first kind `s(k, m)` for `k, m <= n`, from
/// `s(k+1, m) = s(k, m-1) - k s(k, m)` over the integers.
pub fn stirling_first_kind(n: usize) -> Vec<Vec<BigInt>> {
    let mut s = vec![vec![BigInt::zero(); n + 1]; n + 1];
    s[0][0] = BigInt::one();
    for k in 0..n {
        for m in 0..=k + 1 {
            let left = if m > 0 { s[k][m - 1].clone() } else { BigInt::zero() };
            let right = if m <= k { &s[k][m] * BigInt::from(k) } else { BigInt::zero() };
            s[k + 1][m] = left - right;
        }
    }
    s
}

/// `binom(r, k)` for `k = 0..=n`, where `r` is the canonical representative of
/// `z`, exactly modulo `p^K`.
pub fn binomials_at(z: &PadicInt, n: usize) -> Vec<PadicInt> {
    let ctx = z.ctx();
    let r = BigInt::from_biguint(Sign::Plus, z.residue().clone());
    let mut out = Vec::with_capacity(n + 1);
    let mut num = BigInt::one();
    let mut fact = BigUint::one();
    out.push(PadicInt::one(ctx));
    for k in 1..=n {
        num *= &r - BigInt::from(k - 1);
        fact *= BigUint::from(k);
        let (q, rem) = num.div_rem(&BigInt::from_biguint(Sign::Plus, fact.clone()));
        debug_assert!(rem.is_zero());
        out.push(PadicInt::from_bigint(ctx, &q));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctx(p: u64, k: u32) -> Arc<PadicContext> {
        PadicContext::new(p, k).unwrap()
    }

    fn ints(c: &Arc<PadicContext>, xs: &[i64]) -> Vec<PadicInt> {
        xs.iter().map(|&x| PadicInt::from_i64(c, x)).collect()
    }

    #[test]
    fn values_to_mahler_examples() {
        let c = ctx(5, 6);
        assert_eq!(MahlerPoly::from_values(&ints(&c, &[9, 9, 9, 9])).coeffs(), ints(&c, &[9, 0, 0, 0]));
        assert_eq!(MahlerPoly::from_values(&ints(&c, &[0, 1, 2, 3])).coeffs(), ints(&c, &[0, 1, 0, 0]));
        assert_eq!(MahlerPoly::from_values(&ints(&c, &[0, 1, 4, 9])).coeffs(), ints(&c, &[0, 1, 2, 0]));
    }

    #[test]
    fn shift_examples() {
        let c = ctx(5, 6);
        let k = MahlerPoly::constant(PadicInt::from_u64(&c, 3));
        assert_eq!(k.shift(), k);
        assert_eq!(MahlerPoly::binomial(&c, 1).shift().coeffs(), ints(&c, &[1, 1]));
        assert_eq!(MahlerPoly::binomial(&c, 2).shift().coeffs(), ints(&c, &[0, 1, 1]));
    }

    #[test]
    fn solve_difference_examples() {
        let c = ctx(5, 6);
        assert_eq!(MahlerPoly::solve_difference(&MahlerPoly::zero(&c)).degree(), None);
        let one = MahlerPoly::constant(PadicInt::one(&c));
        assert_eq!(MahlerPoly::solve_difference(&one).coeffs(), ints(&c, &[0, -1]));
        let z = MahlerPoly::binomial(&c, 1);
        assert_eq!(MahlerPoly::solve_difference(&z).coeffs(), ints(&c, &[0, 0, -1]));
    }

    fn p_powers(c: &Arc<PadicContext>, n: usize) -> Vec<PadicInt> {
        (0..=n).map(|k| PadicInt::one(c).mul_p_pow(k as u32)).collect()
    }

    #[test]
    fn evaluate_series_examples() {
        let c = ctx(5, 4);
        let mut w = vec![PadicInt::from_u64(&c, 17)];
        w.extend((0..8).map(|_| PadicInt::zero(&c)));
        let f = MahlerSeries::new(w, TailRule::HalfIndex);
        assert_eq!(f.evaluate(&PadicInt::from_u64(&c, 321)).unwrap(), PadicInt::from_u64(&c, 17));

        let g = MahlerSeries::new(p_powers(&c, 8), TailRule::HalfIndex);
        assert_eq!(g.evaluate(&PadicInt::one(&c)).unwrap(), PadicInt::from_u64(&c, 6));
        assert_eq!(g.evaluate(&PadicInt::from_u64(&c, 2)).unwrap(), PadicInt::from_u64(&c, 36));
    }

    #[test]
    fn evaluate_series_refuses_uncertified_tail() {
        let c = ctx(5, 10);
        let g = MahlerSeries::new(p_powers(&c, 4), TailRule::HalfIndex);
        assert!(matches!(g.evaluate(&PadicInt::one(&c)), Err(MahlerError::TailNotCertified { last: 4, .. })));
    }

    #[test]
    fn power_series_examples() {
        let c = ctx(5, 12);
        let mut w = vec![PadicInt::from_u64(&c, 7)];
        w.extend((0..24).map(|_| PadicInt::zero(&c)));
        let ps = MahlerSeries::new(w, TailRule::HalfIndex).to_power_series(1).unwrap();
        assert_eq!(ps.coeffs()[0].value(), &PadicInt::from_u64(&c, 7).reduce_to(ps.coeffs()[0].precision()));
        assert!(ps.coeffs()[1..].iter().all(|a| a.value().is_zero()));

        let z = MahlerSeries::from_poly(&MahlerPoly::binomial(&c, 1));
        let ps = z.to_power_series(1).unwrap();
        assert_eq!(ps.coeffs()[1].value(), &PadicInt::one(&c));
        assert!(ps.coeffs()[0].value().is_zero());
    }

    /// `log(1 + x) = sum_{n >= 1} (-1)^{n+1} x^n / n`, summed until the terms
    /// drop below the requested precision.
    fn log1p_oracle(c: &Arc<PadicContext>, x: &PadicInt, digits: u32) -> PadicInt {
        let p = c.p();
        let mut acc = PadicInt::zero(c);
        let xv = x.valuation().value;
        for n in 1..400u64 {
            let vn = split_p(n, p).0;
            if (n as u32) * xv < digits + vn {
                let (_, u) = split_p(n, p);
                let term = x.pow(n).div_p_pow(vn).unwrap() * PadicInt::from_u64(c, u).invert().unwrap();
                acc = if n % 2 == 1 { acc + term } else { acc - term };
            }
        }
        acc
    }

    #[test]
    fn power_series_linear_coefficient_is_a_logarithm() {
        let k = 20;
        let c = ctx(5, k);
        let f = MahlerSeries::new(p_powers(&c, 2 * k as usize), TailRule::HalfIndex);
        let ps = f.to_power_series(1).unwrap();
        let a1 = &ps.coeffs()[1];
        let oracle = log1p_oracle(&c, &PadicInt::from_u64(&c, 5), k);
        assert!(a1.precision() >= 5, "precision {}", a1.precision());
        assert_eq!(a1.value(), &oracle.reduce_to(a1.precision()));
    }

    #[test]
    fn stirling_small_table() {
        let s = stirling_first_kind(4);
        let row: Vec<i64> = s[4].iter().map(|x| i64::try_from(x).unwrap()).collect();
        assert_eq!(row, vec![0, -6, 11, -6, 1]);
    }

    #[test]
    fn factorial_valuations() {
        assert_eq!(factorial_valuation(4, 5), 0);
        assert_eq!(factorial_valuation(25, 5), 6);
        assert_eq!(factorial_valuation(80, 5), 19);
    }

    fn arb_vals() -> impl Strategy<Value = Vec<i64>> {
        prop::collection::vec(-10_000i64..10_000, 1..25)
    }

    proptest! {
        #[test]
        fn values_roundtrip(vals in arb_vals()) {
            let c = ctx(7, 8);
            let v = ints(&c, &vals);
            let f = MahlerPoly::from_values(&v);
            prop_assert_eq!(f.values(v.len()), v.clone());
            for (z, want) in v.iter().enumerate() {
                prop_assert_eq!(&f.eval(&PadicInt::from_u64(&c, z as u64)), want);
            }
        }

        #[test]
        fn shift_matches_reevaluation(vals in arb_vals()) {
            let c = ctx(5, 8);
            let f = MahlerPoly::from_values(&ints(&c, &vals));
            let s = f.shift();
            let fv = f.values(22);
            let sv = s.values(21);
            for z in 0..21 {
                prop_assert_eq!(&sv[z], &fv[z + 1]);
            }
        }

        #[test]
        fn antidifference_postcondition(vals in arb_vals()) {
            let c = ctx(11, 6);
            let q = MahlerPoly::from_values(&ints(&c, &vals));
            let h = MahlerPoly::solve_difference(&q);
            prop_assert!(h.coeff(0).is_zero());
            let hv = h.values(22);
            let qv = q.values(21);
            for z in 0..21 {
                prop_assert!((&(&hv[z + 1] - &hv[z]) + &qv[z]).is_zero());
            }
        }

        #[test]
        fn power_series_matches_mahler_evaluation(
            units in prop::collection::vec(-1000i64..1000, 30), z in 0u64..40,
        ) {
            let k = 14u32;
            let c = ctx(5, k);
            let coeffs: Vec<PadicInt> = units.iter().enumerate()
                .map(|(i, &u)| PadicInt::from_i64(&c, u).mul_p_pow(TailRule::HalfIndex.bound(i, 29)))
                .collect();
            let f = MahlerSeries::new(coeffs, TailRule::HalfIndex);
            let ps = f.to_power_series(1).unwrap();
            let digits = ps.coeffs().iter().map(ApproxCoeff::precision).min().unwrap().min(ps.tail_bound());
            let zz = PadicInt::from_u64(&c, z);
            let mut acc = PadicInt::zero(&c);
            for (m, a) in ps.coeffs().iter().enumerate() {
                acc = acc + a.value() * &zz.pow(m as u64);
            }
            let direct = f.evaluate(&zz).unwrap();
            prop_assert_eq!(acc.reduce_to(digits), direct.reduce_to(digits));
        }
    }
}
