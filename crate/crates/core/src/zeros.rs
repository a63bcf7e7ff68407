//! Zero counting for p-adic analytic functions on `Z_p` given by power-series
//! coefficients of known precision.
//!
//! The criterion is Strassmann's: if `v*` is the least coefficient valuation
//! and `N` the largest index attaining it, the function has at most `N` zeros
//! in `Z_p`. A function all of whose coefficients vanish at the available
//! precision is reported as identically zero *at that precision* only.

use serde::{Deserialize, Serialize};

use crate::mahler::{MahlerError, MahlerSeries};
use crate::padic::PadicInt;

/// A coefficient known modulo `p^precision`; `value` is reduced accordingly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ApproxCoeff {
    value: PadicInt,
    precision: u32,
}

impl ApproxCoeff {
    pub fn new(value: PadicInt, precision: u32) -> Self {
        let precision = precision.min(value.ctx().precision());
        ApproxCoeff { value: value.reduce_to(precision), precision }
    }

    pub fn value(&self) -> &PadicInt {
        &self.value
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    /// Exact valuation when it is visible below `limit` digits.
    fn visible_valuation(&self, limit: u32) -> Option<u32> {
        let digits = self.precision.min(limit);
        let v = self.value.valuation();
        (!v.at_floor && v.value < digits).then_some(v.value)
    }
}

/// Power-series coefficients `a_0..a_T` with per-index precision, and a
/// valuation lower bound for every coefficient past `T`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnalyticWitness {
    coeffs: Vec<ApproxCoeff>,
    tail_bound: u32,
}

impl AnalyticWitness {
    pub fn new(coeffs: Vec<ApproxCoeff>, tail_bound: u32) -> Self {
        AnalyticWitness { coeffs, tail_bound }
    }

    pub fn coeffs(&self) -> &[ApproxCoeff] {
        &self.coeffs
    }

    pub fn tail_bound(&self) -> u32 {
        self.tail_bound
    }

    /// The same witness with every precision (and the tail bound) capped at
    /// `digits`.
    pub fn degrade(&self, digits: u32) -> AnalyticWitness {
        AnalyticWitness {
            coeffs: self.coeffs.iter().map(|a| ApproxCoeff::new(a.value.clone(), a.precision.min(digits))).collect(),
            tail_bound: self.tail_bound.min(digits),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZeroKind {
    IdenticallyZeroAtPrecision,
    FiniteZeros { bound: usize },
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroVerdict {
    #[serde(flatten)]
    pub kind: ZeroKind,
    pub certified: bool,
}

/// Strassmann classification.
///
/// Only valuations below `floor` digits count as visible; a witness whose
/// visible part is empty is identically zero at precision provided every
/// coefficient and the tail are known to at least `floor` digits.
pub fn classify(w: &AnalyticWitness, floor: u32) -> ZeroVerdict {
    let visible: Vec<(usize, u32)> = w
        .coeffs
        .iter()
        .enumerate()
        .filter_map(|(m, a)| a.visible_valuation(floor).map(|v| (m, v)))
        .collect();

    let Some(v_star) = visible.iter().map(|&(_, v)| v).min() else {
        let enough = w.coeffs.iter().all(|a| a.precision >= floor) && w.tail_bound >= floor;
        return if enough {
            ZeroVerdict { kind: ZeroKind::IdenticallyZeroAtPrecision, certified: false }
        } else {
            ZeroVerdict { kind: ZeroKind::Inconclusive, certified: false }
        };
    };
    let n = visible.iter().filter(|&&(_, v)| v == v_star).map(|&(m, _)| m).max().expect("nonempty");

    // hidden coefficients are only known to vanish below min(precision, floor)
    let hidden_ok = w
        .coeffs
        .iter()
        .filter(|a| a.visible_valuation(floor).is_none())
        .all(|a| a.precision.min(floor) > v_star);
    if hidden_ok && w.tail_bound > v_star {
        ZeroVerdict { kind: ZeroKind::FiniteZeros { bound: n }, certified: true }
    } else {
        ZeroVerdict { kind: ZeroKind::Inconclusive, certified: false }
    }
}

/// Naturals `k <= scan_bound` with `f(k) = 0 mod p^K`.
pub fn locate_natural_zeros(f: &MahlerSeries, scan_bound: u64) -> Result<Vec<u64>, MahlerError> {
    let vals = f.values_at_naturals(scan_bound as usize + 1)?;
    Ok(vals.iter().enumerate().filter(|(_, v)| v.is_zero()).map(|(k, _)| k as u64).collect())
}

/// A scan is complete over all of `Z_p` when it found as many zeros as the
/// certified Strassmann bound allows.
pub fn scan_is_complete(verdict: &ZeroVerdict, found: usize) -> bool {
    matches!(verdict.kind, ZeroKind::FiniteZeros { bound } if verdict.certified && bound == found)
}

/// `g(t) = f(center + p^depth t)` as a power series in `t`.
///
/// Coefficient `i` is `p^{depth i} sum_{m >= i} a_m C(m, i) center^{m-i}` and
/// is known to `depth * i` digits more than the worst input coefficient it
/// draws on (or the tail bound).
pub fn recenter(w: &AnalyticWitness, center: &PadicInt, depth: u32) -> AnalyticWitness {
    let n = w.coeffs.len();
    if n == 0 {
        return w.clone();
    }
    let ctx = w.coeffs[0].value.ctx().clone();
    let k = ctx.precision();
    let mut powers = vec![PadicInt::one(&ctx)];
    for m in 1..n {
        let next = &powers[m - 1] * center;
        powers.push(next);
    }
    // suffix minimum of the input precisions, capped by the tail
    let mut worst = vec![w.tail_bound; n + 1];
    for m in (0..n).rev() {
        worst[m] = worst[m + 1].min(w.coeffs[m].precision);
    }
    let mut row = vec![PadicInt::one(&ctx)];
    let mut binom: Vec<Vec<PadicInt>> = Vec::with_capacity(n);
    for m in 0..n {
        if m > 0 {
            let mut next = vec![PadicInt::one(&ctx); m + 1];
            for i in 1..m {
                next[i] = &row[i - 1] + &row[i];
            }
            row = next;
        }
        binom.push(row.clone());
    }
    let coeffs = (0..n)
        .map(|i| {
            let mut acc = PadicInt::zero(&ctx);
            for m in i..n {
                acc = acc + &(&w.coeffs[m].value * &binom[m][i]) * &powers[m - i];
            }
            let shift = depth.saturating_mul(i as u32);
            ApproxCoeff::new(acc.mul_p_pow(shift), worst[i].saturating_add(shift).min(k))
        })
        .collect();
    let tail = w.tail_bound.saturating_add(depth.saturating_mul(n as u32)).min(k);
    AnalyticWitness { coeffs, tail_bound: tail }
}

/// A disc `center + p^depth Z_p` containing exactly `count` zeros in `C_p`
/// counted with multiplicity; when `count` is 1 that zero lies in `Z_p`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroDisc {
    pub center: u128,
    pub depth: u32,
    pub count: usize,
}

/// Splits `Z_p` into discs of radius at most `p^{-max_depth}` until each
/// holds a single zero, dropping zero-free discs. `None` when the function is
/// not certified to have finitely many zeros.
pub fn isolate_zeros(w: &AnalyticWitness, max_depth: u32, floor: u32) -> Option<Vec<ZeroDisc>> {
    let ctx = w.coeffs.first()?.value.ctx().clone();
    let p = ctx.p();
    let count = |c: &PadicInt, d: u32| match classify(&recenter(w, c, d), floor) {
        ZeroVerdict { kind: ZeroKind::FiniteZeros { bound }, certified: true } => Some(bound),
        _ => None,
    };
    let total = count(&PadicInt::zero(&ctx), 0)?;
    let mut out = Vec::new();
    let mut stack = vec![ZeroDisc { center: 0, depth: 0, count: total }];
    let max_depth = max_depth.min(ctx.precision() - 1).min((u128::MAX.ilog(p as u128)) - 1);
    while let Some(disc) = stack.pop() {
        if disc.count == 0 {
            continue;
        }
        if disc.depth >= max_depth {
            out.push(disc);
            continue;
        }
        let step = (p as u128).pow(disc.depth);
        let mut children = Vec::with_capacity(p as usize);
        let mut settled = true;
        for i in 0..p as u128 {
            let center = disc.center + i * step;
            let c = PadicInt::from_bigint(&ctx, &num_bigint::BigInt::from(center));
            match count(&c, disc.depth + 1) {
                Some(n) => children.push(ZeroDisc { center, depth: disc.depth + 1, count: n }),
                None => {
                    settled = false;
                    break;
                }
            }
        }
        if settled {
            stack.extend(children.into_iter().rev());
        } else {
            out.push(disc);
        }
    }
    out.sort_by_key(|d| (d.center, d.depth));
    Some(out)
}

/// Natural zeros accounted for by an isolation: every disc holds one zero,
/// and discs without a scanned zero only admit naturals above `scan_bound`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroAccount {
    /// Every disc holds a single zero and each scanned zero sits in its own disc.
    pub resolved: bool,
    /// Smallest natural that could still be an unlisted zero.
    pub residual_floor: Option<u128>,
}

pub fn account_zeros(discs: &[ZeroDisc], p: u64, found: &[u64], scan_bound: u64) -> ZeroAccount {
    let mut resolved = true;
    let mut floor: Option<u128> = None;
    for d in discs {
        let m = (p as u128).pow(d.depth);
        let inside = found.iter().filter(|&&k| k as u128 % m == d.center).count();
        if d.count != 1 || inside > 1 {
            resolved = false;
            continue;
        }
        if inside == 0 {
            // smallest member of the disc beyond the scanned range
            let b = scan_bound as u128;
            let x = if d.center > b { d.center } else { d.center + ((b - d.center) / m + 1) * m };
            floor = Some(floor.map_or(x, |f| f.min(x)));
        }
    }
    let covered = found.iter().all(|&k| discs.iter().any(|d| k as u128 % (p as u128).pow(d.depth) == d.center));
    ZeroAccount { resolved: resolved && covered, residual_floor: floor }
}
