//! Sparse multivariate polynomials over `Z_p` with total-degree truncation,
//! and polynomial self-maps of `Z_p^g`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::padic::{AffineModP, ModPMatrix, PadicContext, PadicError, PadicInt, PadicMatrix, PadicVec};

pub type Exponents = Vec<u32>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error(transparent)]
    Padic(#[from] PadicError),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("constant term of component {component} is not divisible by p")]
    ConstantTermNotDivisible { component: usize },
    #[error("{0}")]
    ConditionViolated(ConditionViolation),
}

/// Which of the two interpolation hypotheses failed, and where.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionViolation {
    pub condition: Condition,
    pub component: usize,
    pub exponents: Exponents,
    pub valuation: u32,
    pub required: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// `phi_i(x) = x_i (mod p)`.
    IdentityModP,
    /// degree-`d` coefficients divisible by `p^{d-1}`.
    ValuationGrowth,
}

impl fmt::Display for ConditionViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let which = match self.condition {
            Condition::IdentityModP => "condition (a): component is not the identity mod p",
            Condition::ValuationGrowth => "condition (b): coefficient valuation too small",
        };
        write!(
            f,
            "{which} at component {}, term x^{:?} (valuation {}, need >= {})",
            self.component, self.exponents, self.valuation, self.required
        )
    }
}

fn total_degree(e: &[u32]) -> u32 {
    e.iter().sum()
}

/// Polynomial in `g` variables over `Z_p`; terms above `degree_cap` are
/// discarded by every operation, and zero coefficients are never stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiPoly {
    ctx: Arc<PadicContext>,
    g: usize,
    degree_cap: u32,
    terms: BTreeMap<Exponents, PadicInt>,
}

impl MultiPoly {
    pub fn zero(ctx: &Arc<PadicContext>, g: usize, degree_cap: u32) -> Self {
        MultiPoly { ctx: ctx.clone(), g, degree_cap, terms: BTreeMap::new() }
    }

    pub fn constant(ctx: &Arc<PadicContext>, g: usize, degree_cap: u32, c: PadicInt) -> Self {
        let mut f = Self::zero(ctx, g, degree_cap);
        f.add_term(vec![0; g], c);
        f
    }

    pub fn variable(ctx: &Arc<PadicContext>, g: usize, degree_cap: u32, i: usize) -> Self {
        let mut e = vec![0; g];
        e[i] = 1;
        let mut f = Self::zero(ctx, g, degree_cap);
        f.add_term(e, PadicInt::one(ctx));
        f
    }

    /// Builds a polynomial from `(exponents, coefficient)` pairs, summing
    /// repeated exponents.
    pub fn from_terms<I>(ctx: &Arc<PadicContext>, g: usize, degree_cap: u32, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (Exponents, PadicInt)>,
    {
        let mut f = Self::zero(ctx, g, degree_cap);
        for (e, c) in terms {
            if e.len() != g {
                return Err(PolyError::DimensionMismatch { expected: g, found: e.len() });
            }
            f.add_term(e, c);
        }
        Ok(f)
    }

    pub fn from_i64_terms(ctx: &Arc<PadicContext>, g: usize, degree_cap: u32, terms: &[(&[u32], i64)]) -> Self {
        Self::from_terms(
            ctx,
            g,
            degree_cap,
            terms.iter().map(|(e, c)| (e.to_vec(), PadicInt::from_i64(ctx, *c))),
        )
        .expect("exponent lengths match")
    }

    pub fn ctx(&self) -> &Arc<PadicContext> {
        &self.ctx
    }

    pub fn num_vars(&self) -> usize {
        self.g
    }

    pub fn degree_cap(&self) -> u32 {
        self.degree_cap
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &PadicInt)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, e: &[u32]) -> PadicInt {
        self.terms.get(e).cloned().unwrap_or_else(|| PadicInt::zero(&self.ctx))
    }

    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| total_degree(e)).max()
    }

    pub fn add_term(&mut self, e: Exponents, c: PadicInt) {
        if total_degree(&e) > self.degree_cap || c.is_zero() {
            return;
        }
        match self.terms.entry(e) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = o.get() + &c;
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn with_degree_cap(&self, cap: u32) -> MultiPoly {
        let mut f = MultiPoly::zero(&self.ctx, self.g, cap);
        for (e, c) in &self.terms {
            f.add_term(e.clone(), c.clone());
        }
        f
    }

    pub fn add(&self, other: &MultiPoly) -> MultiPoly {
        let mut f = self.clone();
        for (e, c) in &other.terms {
            f.add_term(e.clone(), c.clone());
        }
        f
    }

    pub fn sub(&self, other: &MultiPoly) -> MultiPoly {
        let mut f = self.clone();
        for (e, c) in &other.terms {
            f.add_term(e.clone(), -c);
        }
        f
    }

    pub fn scale(&self, k: &PadicInt) -> MultiPoly {
        let mut f = MultiPoly::zero(&self.ctx, self.g, self.degree_cap);
        for (e, c) in &self.terms {
            f.add_term(e.clone(), c * k);
        }
        f
    }

    pub fn mul(&self, other: &MultiPoly) -> MultiPoly {
        let cap = self.degree_cap.min(other.degree_cap);
        let mut f = MultiPoly::zero(&self.ctx, self.g, cap);
        for (ea, ca) in &self.terms {
            let da = total_degree(ea);
            for (eb, cb) in &other.terms {
                if da + total_degree(eb) > cap {
                    continue;
                }
                let e: Exponents = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                f.add_term(e, ca * cb);
            }
        }
        f
    }

    /// Formal partial derivative in variable `i`.
    pub fn derivative(&self, i: usize) -> MultiPoly {
        let mut f = MultiPoly::zero(&self.ctx, self.g, self.degree_cap);
        for (e, c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut d = e.clone();
            d[i] -= 1;
            f.add_term(d, c.mul_u64(u64::from(e[i])));
        }
        f
    }

    pub fn evaluate(&self, v: &PadicVec) -> Result<PadicInt, PolyError> {
        if v.len() != self.g {
            return Err(PolyError::DimensionMismatch { expected: self.g, found: v.len() });
        }
        let max_exp: Vec<u32> = (0..self.g)
            .map(|i| self.terms.keys().map(|e| e[i]).max().unwrap_or(0))
            .collect();
        let powers: Vec<Vec<PadicInt>> = v
            .0
            .iter()
            .zip(&max_exp)
            .map(|(x, &m)| {
                let mut pw = Vec::with_capacity(m as usize + 1);
                pw.push(PadicInt::one(&self.ctx));
                for k in 0..m as usize {
                    let next = &pw[k] * x;
                    pw.push(next);
                }
                pw
            })
            .collect();
        let mut acc = PadicInt::zero(&self.ctx);
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    t = &t * &powers[i][k as usize];
                }
            }
            acc = acc + t;
        }
        Ok(acc)
    }
}

/// A polynomial self-map of `Z_p^g`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyMap {
    components: Vec<MultiPoly>,
}

impl PolyMap {
    pub fn new(components: Vec<MultiPoly>) -> Result<Self, PolyError> {
        let g = components.len();
        for c in &components {
            if c.num_vars() != g {
                return Err(PolyError::DimensionMismatch { expected: g, found: c.num_vars() });
            }
        }
        Ok(PolyMap { components })
    }

    pub fn identity(ctx: &Arc<PadicContext>, g: usize, degree_cap: u32) -> Self {
        PolyMap { components: (0..g).map(|i| MultiPoly::variable(ctx, g, degree_cap, i)).collect() }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn ctx(&self) -> &Arc<PadicContext> {
        self.components[0].ctx()
    }

    pub fn components(&self) -> &[MultiPoly] {
        &self.components
    }

    pub fn degree_cap(&self) -> u32 {
        self.components.iter().map(MultiPoly::degree_cap).min().unwrap_or(0)
    }

    pub fn evaluate(&self, v: &PadicVec) -> Result<PadicVec, PolyError> {
        self.components.iter().map(|f| f.evaluate(v)).collect::<Result<Vec<_>, _>>().map(PadicVec)
    }

    /// Constant part `C`.
    pub fn constant_part(&self) -> PadicVec {
        let zero = vec![0; self.dim()];
        PadicVec(self.components.iter().map(|f| f.coefficient(&zero)).collect())
    }

    /// Linear part `L`, with `L[i][j]` the coefficient of `x_j` in component `i`.
    pub fn linear_part(&self) -> PadicMatrix {
        let g = self.dim();
        let rows = self
            .components
            .iter()
            .map(|f| {
                (0..g)
                    .map(|j| {
                        let mut e = vec![0; g];
                        e[j] = 1;
                        f.coefficient(&e)
                    })
                    .collect()
            })
            .collect();
        PadicMatrix::new(rows).expect("square by construction")
    }

    /// Reduction of the affine part modulo `p`.
    pub fn affine_mod_p(&self) -> AffineModP {
        let l = self.linear_part();
        let linear = if self.dim() == 0 { ModPMatrix::identity(self.ctx().p(), 0) } else { l.mod_p() };
        AffineModP { linear, offset: self.constant_part().mod_p() }
    }

    /// `self ∘ inner`, truncated at the smaller of the two degree caps.
    pub fn compose(&self, inner: &PolyMap) -> Result<PolyMap, PolyError> {
        let g = self.dim();
        if inner.dim() != g {
            return Err(PolyError::DimensionMismatch { expected: g, found: inner.dim() });
        }
        let cap = self.degree_cap().min(inner.degree_cap());
        let ctx = self.ctx().clone();
        let mut monomials: HashMap<Exponents, MultiPoly> = HashMap::new();
        monomials.insert(vec![0; g], MultiPoly::constant(&ctx, g, cap, PadicInt::one(&ctx)));
        let mut out = Vec::with_capacity(g);
        for f in &self.components {
            let mut acc = MultiPoly::zero(&ctx, g, cap);
            for (e, c) in f.terms() {
                let m = monomial(&mut monomials, e, &inner.components, cap);
                for (me, mc) in m.terms() {
                    acc.add_term(me.clone(), mc * c);
                }
            }
            out.push(acc);
        }
        Ok(PolyMap { components: out })
    }

    /// `m`-fold composition by repeated squaring.
    pub fn iterate(&self, m: u64) -> PolyMap {
        assert!(m >= 1, "iteration count must be positive");
        let mut acc: Option<PolyMap> = None;
        let mut base = self.clone();
        let mut e = m;
        loop {
            if e & 1 == 1 {
                acc = Some(match acc {
                    None => base.clone(),
                    Some(a) => base.compose(&a).expect("same dimension"),
                });
            }
            e >>= 1;
            if e == 0 {
                break;
            }
            base = base.compose(&base).expect("same dimension");
        }
        acc.expect("m >= 1")
    }

    pub fn jacobian_at(&self, v: &PadicVec) -> Result<PadicMatrix, PolyError> {
        let g = self.dim();
        let rows = self
            .components
            .iter()
            .map(|f| (0..g).map(|j| f.derivative(j).evaluate(v)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PadicMatrix::new(rows)?)
    }

    pub fn condition_a(&self) -> Result<(), ConditionViolation> {
        let g = self.dim();
        for (i, f) in self.components.iter().enumerate() {
            let mut diff = f.clone();
            diff.add_term(
                {
                    let mut e = vec![0; g];
                    e[i] = 1;
                    e
                },
                -PadicInt::one(f.ctx()),
            );
            for (e, c) in diff.terms() {
                let v = c.valuation().value;
                if v < 1 {
                    return Err(ConditionViolation {
                        condition: Condition::IdentityModP,
                        component: i,
                        exponents: e.clone(),
                        valuation: v,
                        required: 1,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn condition_b(&self) -> Result<(), ConditionViolation> {
        for (i, f) in self.components.iter().enumerate() {
            for (e, c) in f.terms() {
                let d = total_degree(e);
                if d < 2 {
                    continue;
                }
                let v = c.valuation().value;
                if v < d - 1 {
                    return Err(ConditionViolation {
                        condition: Condition::ValuationGrowth,
                        component: i,
                        exponents: e.clone(),
                        valuation: v,
                        required: d - 1,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn check_condition_a(&self) -> bool {
        self.condition_a().is_ok()
    }

    pub fn check_condition_b(&self) -> bool {
        self.condition_b().is_ok()
    }

    /// `F_i(T) = H_i(pT) / p`: the degree-`d` coefficient is multiplied by
    /// `p^{d-1}` and the constant term is divided by `p`.
    pub fn rescale_conjugate(&self) -> Result<PolyMap, PolyError> {
        let mut out = Vec::with_capacity(self.dim());
        for (i, h) in self.components.iter().enumerate() {
            let mut f = MultiPoly::zero(h.ctx(), h.num_vars(), h.degree_cap());
            for (e, c) in h.terms() {
                let d = total_degree(e);
                let coef = if d == 0 {
                    c.div_p_pow(1).map_err(|_| PolyError::ConstantTermNotDivisible { component: i })?
                } else {
                    c.mul_p_pow(d - 1)
                };
                f.add_term(e.clone(), coef);
            }
            out.push(f);
        }
        Ok(PolyMap { components: out })
    }
}

fn monomial<'a>(
    cache: &'a mut HashMap<Exponents, MultiPoly>,
    e: &Exponents,
    inner: &[MultiPoly],
    cap: u32,
) -> &'a MultiPoly {
    if !cache.contains_key(e) {
        let i = e.iter().position(|&k| k > 0).expect("non-constant monomial");
        let mut prev = e.clone();
        prev[i] -= 1;
        let lower = monomial(cache, &prev, inner, cap).clone();
        let m = lower.mul(&inner[i].with_degree_cap(cap));
        cache.insert(e.clone(), m);
    }
    &cache[e]
}

/// A self-map of `Z_p^g` that the interpolator can drive: it must be
/// evaluable and must certify the two interpolation hypotheses.
pub trait SelfMap: Sync {
    fn dim(&self) -> usize;
    fn ctx(&self) -> &Arc<PadicContext>;
    fn apply(&self, v: &PadicVec) -> PadicVec;
    /// Conditions (a) and (b): `phi = id (mod p)` and degree-`d`
    /// coefficients divisible by `p^{d-1}`.
    fn check_conditions(&self) -> Result<(), ConditionViolation>;
}

impl SelfMap for PolyMap {
    fn dim(&self) -> usize {
        PolyMap::dim(self)
    }

    fn ctx(&self) -> &Arc<PadicContext> {
        PolyMap::ctx(self)
    }

    fn apply(&self, v: &PadicVec) -> PadicVec {
        self.evaluate(v).expect("dimension checked by caller")
    }

    fn check_conditions(&self) -> Result<(), ConditionViolation> {
        self.condition_a()?;
        self.condition_b()
    }
}

/// `base^times`, evaluated by applying `base` repeatedly rather than by
/// expanding the composite polynomial.
///
/// When `base` satisfies condition (b) so does every iterate, and the iterate
/// reduces modulo `p` to the iterated affine part, so condition (a) is decided
/// on `F_p^g` alone.
#[derive(Clone, Debug)]
pub struct IteratedMap {
    base: PolyMap,
    times: u64,
    // Affine maps stay affine under iteration, so the composite is cheap to
    // expand exactly and much faster to evaluate.
    affine: Option<PolyMap>,
}

impl IteratedMap {
    pub fn new(base: PolyMap, times: u64) -> Self {
        assert!(times >= 1, "iteration count must be positive");
        let is_affine = base.components().iter().all(|c| c.degree().map_or(true, |d| d <= 1));
        let affine = (is_affine && times > 1).then(|| base.iterate(times));
        IteratedMap { base, times, affine }
    }

    pub fn base(&self) -> &PolyMap {
        &self.base
    }

    pub fn times(&self) -> u64 {
        self.times
    }

    /// The expanded composite, truncated at the base's degree cap.
    pub fn expand(&self) -> PolyMap {
        self.base.iterate(self.times)
    }
}

impl SelfMap for IteratedMap {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn ctx(&self) -> &Arc<PadicContext> {
        self.base.ctx()
    }

    fn apply(&self, v: &PadicVec) -> PadicVec {
        if let Some(a) = &self.affine {
            return a.apply(v);
        }
        let mut w = v.clone();
        for _ in 0..self.times {
            w = self.base.apply(&w);
        }
        w
    }

    fn check_conditions(&self) -> Result<(), ConditionViolation> {
        self.base.condition_b()?;
        let affine = self.base.affine_mod_p().pow(self.times);
        let g = self.dim();
        for i in 0..g {
            for j in 0..g {
                let want = u64::from(i == j);
                if affine.linear.rows[i][j] != want {
                    let mut e = vec![0; g];
                    e[j] = 1;
                    return Err(ConditionViolation {
                        condition: Condition::IdentityModP,
                        component: i,
                        exponents: e,
                        valuation: 0,
                        required: 1,
                    });
                }
            }
            if affine.offset[i] != 0 {
                return Err(ConditionViolation {
                    condition: Condition::IdentityModP,
                    component: i,
                    exponents: vec![0; g],
                    valuation: 0,
                    required: 1,
                });
            }
        }
        Ok(())
    }
}
