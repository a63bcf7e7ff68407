//! Exact rational polynomial maps and the JSON model format.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::padic::{PadicContext, PadicError, PadicInt};
use crate::poly::{MultiPoly, PolyMap};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid rational {text:?}{}: {reason}", location(*.line))]
    BadRational { text: String, reason: String, line: Option<usize> },
    #[error("{what}: expected {expected}, found {found}")]
    Dimension { what: String, expected: usize, found: usize },
    #[error("inverse does not invert the map: component {component} of phi(inverse(x)) is {found}")]
    InverseMismatch { component: usize, found: String },
    #[error("dimension must be at least 1")]
    EmptyModel,
}

fn location(line: Option<usize>) -> String {
    line.map(|l| format!(" at line {l}")).unwrap_or_default()
}

/// Parses `"a/b"` or `"a"` with `b != 0`.
pub fn parse_rational(text: &str) -> Result<BigRational, ModelError> {
    let bad = |reason: &str| ModelError::BadRational { text: text.to_string(), reason: reason.to_string(), line: None };
    let t = text.trim();
    let (num, den) = match t.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (t, "1"),
    };
    let num = BigInt::from_str(num).map_err(|_| bad("numerator is not an integer"))?;
    let den = BigInt::from_str(den).map_err(|_| bad("denominator is not an integer"))?;
    if den.is_zero() {
        return Err(bad("zero denominator"));
    }
    Ok(BigRational::new(num, den))
}

pub fn format_rational(q: &BigRational) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Sparse polynomial over `Q` in a fixed number of variables.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct RatPoly {
    g: usize,
    terms: BTreeMap<Vec<u32>, BigRational>,
}

impl RatPoly {
    pub fn zero(g: usize) -> Self {
        RatPoly { g, terms: BTreeMap::new() }
    }

    pub fn constant(g: usize, c: BigRational) -> Self {
        let mut f = Self::zero(g);
        f.add_term(vec![0; g], c);
        f
    }

    pub fn variable(g: usize, i: usize) -> Self {
        let mut e = vec![0; g];
        e[i] = 1;
        let mut f = Self::zero(g);
        f.add_term(e, BigRational::one());
        f
    }

    pub fn from_i64_terms(g: usize, terms: &[(&[u32], i64)]) -> Self {
        let mut f = Self::zero(g);
        for (e, c) in terms {
            assert_eq!(e.len(), g, "exponent length");
            f.add_term(e.to_vec(), BigRational::from_integer(BigInt::from(*c)));
        }
        f
    }

    pub fn num_vars(&self) -> usize {
        self.g
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &BigRational)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn add_term(&mut self, e: Vec<u32>, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let slot = self.terms.entry(e).or_insert_with(BigRational::zero);
        *slot += c;
        if slot.is_zero() {
            self.terms.retain(|_, v| !v.is_zero());
        }
    }

    pub fn add(&self, other: &RatPoly) -> RatPoly {
        let mut f = self.clone();
        for (e, c) in &other.terms {
            f.add_term(e.clone(), c.clone());
        }
        f
    }

    pub fn sub(&self, other: &RatPoly) -> RatPoly {
        let mut f = self.clone();
        for (e, c) in &other.terms {
            f.add_term(e.clone(), -c.clone());
        }
        f
    }

    pub fn mul(&self, other: &RatPoly) -> RatPoly {
        let mut f = RatPoly::zero(self.g);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                f.add_term(ea.iter().zip(eb).map(|(a, b)| a + b).collect(), ca * cb);
            }
        }
        f
    }

    pub fn derivative(&self, i: usize) -> RatPoly {
        let mut f = RatPoly::zero(self.g);
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut d = e.clone();
                d[i] -= 1;
                f.add_term(d, c * BigRational::from_integer(BigInt::from(e[i])));
            }
        }
        f
    }

    pub fn eval(&self, x: &[BigRational]) -> BigRational {
        let mut acc = BigRational::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (xi, &k) in x.iter().zip(e) {
                if k > 0 {
                    t *= num_traits::pow(xi.clone(), k as usize);
                }
            }
            acc += t;
        }
        acc
    }

    /// Value modulo `p` at a point of `F_p^g`, or `None` when some
    /// denominator is divisible by `p`.
    pub fn eval_mod_p(&self, x: &[u64], p: u64) -> Option<u64> {
        let pb = BigInt::from(p);
        let mut acc = 0u64;
        for (e, c) in &self.terms {
            let den = reduce(c.denom(), &pb);
            if den == 0 {
                return None;
            }
            let mut t = mul_mod(reduce(c.numer(), &pb), inv_mod(den, p), p);
            for (xi, &k) in x.iter().zip(e) {
                t = mul_mod(t, pow_mod(*xi, u64::from(k), p), p);
            }
            acc = (acc + t) % p;
        }
        Some(acc)
    }

    pub fn denominators_coprime_to(&self, p: u64) -> bool {
        let pb = BigInt::from(p);
        self.terms.values().all(|c| !(c.denom() % &pb).is_zero())
    }

    /// `self(inner_1, .., inner_g)`.
    pub fn compose(&self, inner: &[RatPoly]) -> RatPoly {
        let h = inner.first().map_or(self.g, |f| f.g);
        let mut acc = RatPoly::zero(h);
        let mut powers: Vec<Vec<RatPoly>> = inner.iter().map(|f| vec![RatPoly::constant(h, BigRational::one()), f.clone()]).collect();
        for (e, c) in &self.terms {
            let mut t = RatPoly::constant(h, c.clone());
            for (i, &k) in e.iter().enumerate() {
                while powers[i].len() <= k as usize {
                    let next = powers[i].last().expect("nonempty").mul(&inner[i]);
                    powers[i].push(next);
                }
                if k > 0 {
                    t = t.mul(&powers[i][k as usize]);
                }
            }
            acc = acc.add(&t);
        }
        acc
    }

    /// Image in `Z_p[x]`, keeping every term.
    pub fn to_padic(&self, ctx: &Arc<PadicContext>, cap: u32) -> Result<MultiPoly, PadicError> {
        let mut f = MultiPoly::zero(ctx, self.g, cap.max(self.degree()));
        for (e, c) in &self.terms {
            f.add_term(e.clone(), PadicInt::from_rational(ctx, c)?);
        }
        Ok(f)
    }

    pub fn max_bits(&self) -> u64 {
        self.terms.values().map(|c| c.numer().bits().max(c.denom().bits())).max().unwrap_or(0)
    }
}

impl fmt::Display for RatPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({})", format_rational(c))?;
            for (i, &k) in e.iter().enumerate() {
                match k {
                    0 => {}
                    1 => write!(f, "*x{}", i + 1)?,
                    _ => write!(f, "*x{}^{k}", i + 1)?,
                }
            }
        }
        Ok(())
    }
}

fn reduce(n: &BigInt, p: &BigInt) -> u64 {
    let r = ((n % p) + p) % p;
    r.iter_u64_digits().next().unwrap_or(0)
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((u128::from(a) * u128::from(b)) % u128::from(m)) as u64
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    r
}

fn inv_mod(a: u64, p: u64) -> u64 {
    pow_mod(a, p - 2, p)
}

/// A polynomial self-map of `Q^g`.
pub type RatMap = Vec<RatPoly>;

pub fn eval_map(map: &[RatPoly], x: &[BigRational]) -> Vec<BigRational> {
    map.iter().map(|f| f.eval(x)).collect()
}

/// `outer ∘ inner`.
pub fn compose_maps(outer: &[RatPoly], inner: &[RatPoly]) -> RatMap {
    outer.iter().map(|f| f.compose(inner)).collect()
}

pub fn to_padic_map(map: &[RatPoly], ctx: &Arc<PadicContext>, cap: u32) -> Result<PolyMap, PadicError> {
    let comps = map.iter().map(|f| f.to_padic(ctx, cap)).collect::<Result<Vec<_>, _>>()?;
    Ok(PolyMap::new(comps).expect("components share the dimension"))
}

/// Self-map `phi` of affine `g`-space over `Q`, a start point and generators
/// of the subvariety `V`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AffineModel {
    g: usize,
    phi: RatMap,
    phi_inverse: Option<RatMap>,
    alpha: Vec<BigRational>,
    variety: Vec<RatPoly>,
}

impl AffineModel {
    /// Checks dimensions and, when given, that `phi ∘ phi_inverse` and
    /// `phi_inverse ∘ phi` are the identity.
    pub fn new(
        phi: RatMap,
        phi_inverse: Option<RatMap>,
        alpha: Vec<BigRational>,
        variety: Vec<RatPoly>,
    ) -> Result<Self, ModelError> {
        let g = phi.len();
        if g == 0 {
            return Err(ModelError::EmptyModel);
        }
        let dim = |what: &str, found: usize| {
            if found == g {
                Ok(())
            } else {
                Err(ModelError::Dimension { what: what.to_string(), expected: g, found })
            }
        };
        for f in &phi {
            dim("map variables", f.num_vars())?;
        }
        dim("point length", alpha.len())?;
        for h in &variety {
            dim("variety variables", h.num_vars())?;
        }
        if let Some(inv) = &phi_inverse {
            dim("inverse components", inv.len())?;
            for f in inv {
                dim("inverse variables", f.num_vars())?;
            }
            for (a, b) in [(&phi, inv), (inv, &phi)] {
                for (i, f) in compose_maps(a, b).iter().enumerate() {
                    if *f != RatPoly::variable(g, i) {
                        return Err(ModelError::InverseMismatch { component: i, found: f.to_string() });
                    }
                }
            }
        }
        Ok(AffineModel { g, phi, phi_inverse, alpha, variety })
    }

    pub fn dim(&self) -> usize {
        self.g
    }

    pub fn phi(&self) -> &[RatPoly] {
        &self.phi
    }

    pub fn phi_inverse(&self) -> Option<&[RatPoly]> {
        self.phi_inverse.as_deref()
    }

    pub fn alpha(&self) -> &[BigRational] {
        &self.alpha
    }

    pub fn variety(&self) -> &[RatPoly] {
        &self.variety
    }

    /// The model with `phi` and its inverse swapped.
    pub fn reversed(&self) -> Option<AffineModel> {
        let inv = self.phi_inverse.clone()?;
        Some(AffineModel {
            g: self.g,
            phi: inv,
            phi_inverse: Some(self.phi.clone()),
            alpha: self.alpha.clone(),
            variety: self.variety.clone(),
        })
    }

    pub fn contains(&self, x: &[BigRational]) -> bool {
        self.variety.iter().all(|h| h.eval(x).is_zero())
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| ModelError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        file.into_model(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from_model(self)).expect("model serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermJson {
    pub exponents: Vec<u32>,
    pub coefficient: String,
}

pub type PolyJson = Vec<TermJson>;

/// On-disk model layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFile {
    pub dimension: usize,
    pub map: Vec<PolyJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse: Option<Vec<PolyJson>>,
    #[serde(default)]
    pub point: Vec<String>,
    #[serde(default)]
    pub variety: Vec<PolyJson>,
}

/// A bare map file, as read by the interpolation tool.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapFile {
    pub dimension: usize,
    pub map: Vec<PolyJson>,
}

impl MapFile {
    pub fn parse(text: &str) -> Result<RatMap, ModelError> {
        let file: MapFile = serde_json::from_str(text).map_err(|e| ModelError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let g = file.dimension;
        if g == 0 {
            return Err(ModelError::EmptyModel);
        }
        if file.map.len() != g {
            return Err(ModelError::Dimension { what: "map components".into(), expected: g, found: file.map.len() });
        }
        file.map.iter().map(|f| poly_from_json(f, g, text)).collect()
    }
}

fn with_line(err: ModelError, source: &str) -> ModelError {
    match err {
        ModelError::BadRational { text, reason, .. } => {
            let needle = format!("\"{text}\"");
            let line = source.lines().position(|l| l.contains(&needle)).map(|i| i + 1);
            ModelError::BadRational { text, reason, line }
        }
        other => other,
    }
}

fn poly_from_json(terms: &[TermJson], g: usize, source: &str) -> Result<RatPoly, ModelError> {
    let mut f = RatPoly::zero(g);
    for t in terms {
        if t.exponents.len() != g {
            return Err(ModelError::Dimension { what: "exponent vector".into(), expected: g, found: t.exponents.len() });
        }
        let c = parse_rational(&t.coefficient).map_err(|e| with_line(e, source))?;
        f.add_term(t.exponents.clone(), c);
    }
    Ok(f)
}

fn poly_to_json(f: &RatPoly) -> PolyJson {
    f.terms().map(|(e, c)| TermJson { exponents: e.clone(), coefficient: format_rational(c) }).collect()
}

impl ModelFile {
    fn into_model(self, source: &str) -> Result<AffineModel, ModelError> {
        let g = self.dimension;
        if g == 0 {
            return Err(ModelError::EmptyModel);
        }
        if self.map.len() != g {
            return Err(ModelError::Dimension { what: "map components".into(), expected: g, found: self.map.len() });
        }
        let phi = self.map.iter().map(|f| poly_from_json(f, g, source)).collect::<Result<Vec<_>, _>>()?;
        let inverse = match &self.inverse {
            Some(inv) => Some(inv.iter().map(|f| poly_from_json(f, g, source)).collect::<Result<Vec<_>, _>>()?),
            None => None,
        };
        let alpha = self
            .point
            .iter()
            .map(|s| parse_rational(s).map_err(|e| with_line(e, source)))
            .collect::<Result<Vec<_>, _>>()?;
        let variety = self.variety.iter().map(|f| poly_from_json(f, g, source)).collect::<Result<Vec<_>, _>>()?;
        AffineModel::new(phi, inverse, alpha, variety)
    }

    pub fn from_model(m: &AffineModel) -> Self {
        ModelFile {
            dimension: m.g,
            map: m.phi.iter().map(poly_to_json).collect(),
            inverse: m.phi_inverse.as_ref().map(|inv| inv.iter().map(poly_to_json).collect()),
            point: m.alpha.iter().map(format_rational).collect(),
            variety: m.variety.iter().map(poly_to_json).collect(),
        }
    }
}

/// Exact orbit `phi^n(alpha)` over `Q`, computed lazily and abandoned once a
/// coordinate exceeds `max_bits`.
#[derive(Clone, Debug)]
pub struct RationalOrbit {
    phi: RatMap,
    points: Vec<Vec<BigRational>>,
    max_bits: u64,
    exhausted: bool,
}

impl RationalOrbit {
    pub const DEFAULT_MAX_BITS: u64 = 1 << 18;

    pub fn new(model: &AffineModel, max_bits: u64) -> Self {
        RationalOrbit { phi: model.phi.clone(), points: vec![model.alpha.clone()], max_bits, exhausted: false }
    }

    /// `phi^n(alpha)`, or `None` when the heights grew past the cap first.
    pub fn get(&mut self, n: usize) -> Option<&[BigRational]> {
        while self.points.len() <= n {
            if self.exhausted {
                return None;
            }
            let next = eval_map(&self.phi, self.points.last().expect("nonempty"));
            if next.iter().any(|q| q.numer().bits().max(q.denom().bits()) > self.max_bits) {
                self.exhausted = true;
                return None;
            }
            self.points.push(next);
        }
        Some(&self.points[n])
    }

    pub fn computed(&self) -> usize {
        self.points.len()
    }
}
