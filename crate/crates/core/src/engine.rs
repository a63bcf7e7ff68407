//! Return-time sets `{n : phi^n(alpha) in V}` for polynomial self-maps of
//! affine space over `Q`.
//!
//! The orbit of `alpha` mod `p` is eventually periodic with period `N`. On each
//! periodic residue class, `phi^N` becomes (after rescaling) a map `F_j` that
//! reduces to an affine map mod `p`; its `M_j`-th power is the identity mod
//! `p`, so the subsequence `phi^{N M_j k + n_0}(alpha)` is interpolated by a
//! p-adic analytic function of `k`. Each generator of `V` pulled back along it
//! either vanishes identically or has finitely many zeros, bounded by
//! Strassmann's theorem.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interpolator::{interpolate, InterpolationError};
use crate::mahler::{MahlerError, MahlerSeries, TailRule};
use crate::model::{to_padic_map, AffineModel, ModelError, RatPoly, RationalOrbit};
use crate::padic::{affine_order_mod_p, is_prime, matrix_invertible_mod_p, ModPMatrix, PadicContext, PadicError, PadicInt, PadicVec};
use crate::poly::{IteratedMap, MultiPoly, PolyError, PolyMap, SelfMap};
use crate::zeros::{account_zeros, classify, isolate_zeros, locate_natural_zeros, scan_is_complete, ZeroKind, ZeroVerdict};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no admissible prime below {limit}")]
    NoPrimeFound { limit: u64 },
    #[error("prime {p} rejected: {reason}")]
    PrimeRejected { p: u64, reason: String },
    #[error("phi is not unramified at residue point {point:?} mod {p}")]
    NotUnramifiedAtResidue { p: u64, point: Vec<u64> },
    #[error("residue point {point:?} is not fixed by phi^{period} mod {p}")]
    NotPeriodic { p: u64, point: Vec<u64>, period: usize },
    #[error("leading recurrence coefficient is zero")]
    ZeroLeadingCoefficient,
    #[error("recurrence needs {expected} initial values, got {found}")]
    InitialValues { expected: usize, found: usize },
    #[error("full-orbit mode needs an inverse map")]
    MissingInverse,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("branch ({phase}, {offset}): interpolation disagrees with the orbit at k = {k}")]
    ChartInconsistent { phase: usize, offset: u64, k: usize },
    #[error(transparent)]
    Interpolation(#[from] InterpolationError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Padic(#[from] PadicError),
}

/// Run parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    pub prime: Option<u64>,
    /// Starting precision `K` in p-adic digits.
    pub precision: u32,
    /// Interpolation stages; `None` means `2K`.
    pub stages: Option<u32>,
    /// Largest `k` scanned for zeros on a finite branch.
    pub scan_bound: u64,
    /// Progression members checked in exact arithmetic.
    pub verify_count: usize,
    /// Precision doublings allowed for inconclusive branches.
    pub retry_max: u32,
    /// Primes are searched in `[5, prime_limit)`.
    pub prime_limit: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { prime: None, precision: 40, stages: None, scan_bound: 2000, verify_count: 25, retry_max: 4, prime_limit: 10_000 }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if let Some(p) = self.prime {
            if p < 5 || !is_prime(p) {
                return Err(EngineError::InvalidConfig(format!("prime override {p} is not a prime >= 5")));
            }
        }
        if self.precision < 4 {
            return Err(EngineError::InvalidConfig("precision must be at least 4".into()));
        }
        if self.scan_bound == 0 || self.verify_count == 0 {
            return Err(EngineError::InvalidConfig("scan bound and verify count must be positive".into()));
        }
        if self.stages == Some(0) {
            return Err(EngineError::InvalidConfig("stage count must be positive".into()));
        }
        Ok(())
    }

    fn stages_for(&self, precision: u32) -> u32 {
        match self.stages {
            // a fixed stage count is scaled along with the precision on retry
            Some(j) => j * (precision / self.precision).max(1),
            None => 2 * precision,
        }
    }
}

/// Digits below which a coefficient counts as visible when classifying.
pub fn classify_floor(precision: u32) -> u32 {
    (precision / 4).max(2)
}

/// The reduction of the orbit of `alpha` modulo `p`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidueOrbit {
    pub p: u64,
    pub preperiod: usize,
    pub period: usize,
    /// Residues of `phi^n(alpha)` for `n < preperiod + period`.
    pub points: Vec<Vec<u64>>,
}

impl ResidueOrbit {
    pub fn point(&self, n: usize) -> &[u64] {
        if n < self.points.len() {
            &self.points[n]
        } else {
            &self.points[self.preperiod + (n - self.preperiod) % self.period]
        }
    }

    pub fn cycle(&self) -> &[Vec<u64>] {
        &self.points[self.preperiod..]
    }
}

fn reduce_point(x: &[BigRational], p: u64) -> Option<Vec<u64>> {
    x.iter().map(|q| RatPoly::constant(1, q.clone()).eval_mod_p(&[0], p)).collect()
}

/// Iterates `alpha mod p` until the first repeat. Requires every
/// denominator of `phi` and `alpha` to be prime to `p`.
pub fn residue_orbit(model: &AffineModel, p: u64) -> Result<ResidueOrbit, EngineError> {
    let rejected = |reason: &str| EngineError::PrimeRejected { p, reason: reason.to_string() };
    let mut x = reduce_point(model.alpha(), p).ok_or_else(|| rejected("start point has a denominator divisible by p"))?;
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut points = Vec::new();
    loop {
        if let Some(&first) = seen.get(&x) {
            return Ok(ResidueOrbit { p, preperiod: first, period: points.len() - first, points });
        }
        seen.insert(x.clone(), points.len());
        let next: Option<Vec<u64>> = model.phi().iter().map(|f| f.eval_mod_p(&x, p)).collect();
        points.push(x);
        x = next.ok_or_else(|| rejected("map has a denominator divisible by p"))?;
    }
}

fn jacobian_det_mod_p(model: &AffineModel, x: &[u64], p: u64) -> Option<u64> {
    let g = model.dim();
    let rows = model
        .phi()
        .iter()
        .map(|f| (0..g).map(|j| f.derivative(j).eval_mod_p(x, p)).collect::<Option<Vec<u64>>>())
        .collect::<Option<Vec<_>>>()?;
    Some(ModPMatrix { p, rows }.det())
}

/// Checks `p` against `model`, returning the residue orbit when admissible.
pub fn admissible(model: &AffineModel, p: u64) -> Result<ResidueOrbit, EngineError> {
    let rejected = |reason: String| EngineError::PrimeRejected { p, reason };
    if p < 5 || !is_prime(p) {
        return Err(rejected("not a prime >= 5".into()));
    }
    let polys = model.phi().iter().chain(model.variety());
    if !polys.clone().all(|f| f.denominators_coprime_to(p)) {
        return Err(rejected("a coefficient has a denominator divisible by p".into()));
    }
    let orbit = residue_orbit(model, p)?;
    for x in &orbit.points {
        match jacobian_det_mod_p(model, x, p) {
            Some(d) if d != 0 => {}
            _ => return Err(EngineError::NotUnramifiedAtResidue { p, point: x.clone() }),
        }
    }
    Ok(orbit)
}

/// Smallest admissible prime in `candidates`.
pub fn select_prime(model: &AffineModel, candidates: std::ops::Range<u64>) -> Result<(u64, ResidueOrbit), EngineError> {
    let limit = candidates.end;
    for p in candidates.filter(|&p| p >= 5 && is_prime(p)) {
        if let Ok(orbit) = admissible(model, p) {
            return Ok((p, orbit));
        }
    }
    Err(EngineError::NoPrimeFound { limit })
}

/// Coordinates around a periodic residue point `x`: `iota(beta) = (beta - x_hat)/p`.
#[derive(Clone, Debug)]
pub struct ResidueChart {
    pub x_hat: Vec<u64>,
    pub phase: usize,
    pub period: usize,
}

impl ResidueChart {
    fn lift(&self, ctx: &Arc<PadicContext>) -> PadicVec {
        PadicVec(self.x_hat.iter().map(|&c| PadicInt::from_u64(ctx, c)).collect())
    }

    /// `iota(beta)`; `beta` carries one more digit than the result.
    pub fn to_local(&self, beta: &PadicVec, ctx: &Arc<PadicContext>) -> Result<PadicVec, PadicError> {
        let x_hat = self.lift(beta.0[0].ctx());
        beta.0
            .iter()
            .zip(&x_hat.0)
            .map(|(b, x)| Ok((b - x).div_p_pow(1)?.with_context(ctx)))
            .collect::<Result<Vec<_>, PadicError>>()
            .map(PadicVec)
    }

    /// `iota^{-1}(v) = x_hat + p v`.
    pub fn from_local(&self, v: &PadicVec) -> PadicVec {
        let ctx = v.0[0].ctx().clone();
        let x_hat = self.lift(&ctx);
        PadicVec(v.0.iter().zip(&x_hat.0).map(|(a, x)| x + &a.mul_p_pow(1)).collect())
    }
}

/// `F(v) = (phi^N(x_hat + p v) - x_hat) / p` at precision `K`.
///
/// The substitution is carried out in `Z_p` with one extra digit, where the
/// degree-`d` part of `phi^N(x_hat + p v)` is divisible by `p^d`; terms of
/// degree above `K + 1` vanish and the division by `p` is exact.
pub fn build_local_map(model: &AffineModel, ctx: &Arc<PadicContext>, chart: &ResidueChart) -> Result<PolyMap, EngineError> {
    let p = ctx.p();
    let k = ctx.precision();
    let g = model.dim();
    let wide = PadicContext::new(p, k + 1)?;
    let cap = k + 1;
    let phi = to_padic_map(model.phi(), &wide, cap)?;
    let x_hat = chart.lift(&wide);
    let mut g_map = PolyMap::new(
        (0..g)
            .map(|i| {
                let mut f = MultiPoly::variable(&wide, g, cap, i).scale(&PadicInt::from_u64(&wide, p));
                f.add_term(vec![0; g], x_hat.0[i].clone());
                f
            })
            .collect(),
    )?;
    for _ in 0..chart.period {
        g_map = phi.compose(&g_map)?;
    }
    let mut comps = Vec::with_capacity(g);
    for (i, f) in g_map.components().iter().enumerate() {
        let mut out = MultiPoly::zero(ctx, g, cap);
        for (e, c) in f.terms() {
            let c = if e.iter().all(|&d| d == 0) { c - &x_hat.0[i] } else { c.clone() };
            let c = c.div_p_pow(1).map_err(|_| EngineError::NotPeriodic { p, point: chart.x_hat.clone(), period: chart.period })?;
            out.add_term(e.clone(), c.with_context(ctx));
        }
        comps.push(out);
    }
    let f = PolyMap::new(comps)?;
    if f.condition_b().is_err() || !matrix_invertible_mod_p(&f.linear_part()) {
        return Err(EngineError::NotUnramifiedAtResidue { p, point: chart.x_hat.clone() });
    }
    Ok(f)
}

/// Least `M` with `F^M = id (mod p)`.
pub fn find_identity_power(f: &PolyMap) -> Result<u64, EngineError> {
    let m = affine_order_mod_p(&f.linear_part(), &f.constant_part())?;
    IteratedMap::new(f.clone(), m).check_conditions().map_err(|v| EngineError::Poly(PolyError::ConditionViolated(v)))?;
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Uncertified,
    PrecisionQualified,
    Certified,
}

/// `{start + k * modulus : k >= 0}`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Progression {
    pub modulus: u64,
    pub residue: u64,
    pub status: Status,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExceptionalPoint {
    pub n: u64,
    pub verified: bool,
}

/// Finitely many progressions plus finitely many isolated indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressionSet {
    pub progressions: Vec<Progression>,
    pub exceptional: Vec<ExceptionalPoint>,
}

fn in_progression(n: u64, m: u64, r: u64) -> bool {
    n >= r && (n - r) % m == 0
}

impl ProgressionSet {
    pub fn contains(&self, n: u64) -> bool {
        self.progressions.iter().any(|pr| in_progression(n, pr.modulus, pr.residue)) || self.exceptional.iter().any(|e| e.n == n)
    }

    pub fn members_up_to(&self, bound: u64) -> BTreeSet<u64> {
        (0..=bound).filter(|&n| self.contains(n)).collect()
    }

    /// Deduplicates, merges complete families `{r + i d mod M}` into `(d, r)`,
    /// drops progressions contained in others and exceptional points they cover.
    pub fn normalize(&mut self) {
        let mut map: BTreeMap<(u64, u64), Status> = BTreeMap::new();
        for pr in &self.progressions {
            let s = map.entry((pr.modulus, pr.residue)).or_insert(pr.status);
            *s = (*s).min(pr.status);
        }
        loop {
            let mut changed = false;
            let keys: Vec<(u64, u64)> = map.keys().copied().collect();
            'outer: for &(m, r) in &keys {
                for d in (1..m).filter(|d| m % d == 0) {
                    let family: Vec<(u64, u64)> = (0..m / d).map(|i| (m, r + i * d)).collect();
                    if family.iter().all(|key| map.contains_key(key)) {
                        let status = family.iter().map(|key| map[key]).min().expect("nonempty");
                        for key in &family {
                            map.remove(key);
                        }
                        let s = map.entry((d, r)).or_insert(status);
                        *s = (*s).min(status);
                        changed = true;
                        break 'outer;
                    }
                }
            }
            let keys: Vec<(u64, u64)> = map.keys().copied().collect();
            for &(m, r) in &keys {
                let covered = keys.iter().any(|&(m2, r2)| (m2, r2) != (m, r) && m % m2 == 0 && in_progression(r, m2, r2));
                if covered {
                    map.remove(&(m, r));
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        self.progressions = map.into_iter().map(|((modulus, residue), status)| Progression { modulus, residue, status }).collect();
        let mut ex: BTreeMap<u64, bool> = BTreeMap::new();
        for e in &self.exceptional {
            let v = ex.entry(e.n).or_insert(e.verified);
            *v |= e.verified;
        }
        let progs = &self.progressions;
        self.exceptional = ex
            .into_iter()
            .filter(|&(n, _)| !progs.iter().any(|pr| in_progression(n, pr.modulus, pr.residue)))
            .map(|(n, verified)| ExceptionalPoint { n, verified })
            .collect();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchOutcome {
    Progression,
    Finite,
    Inconclusive,
}

/// One residue branch `n = start + modulus * k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchReport {
    pub phase: usize,
    pub offset: u64,
    pub start: u64,
    pub modulus: u64,
    pub identity_power: u64,
    pub precision: u32,
    pub verdicts: Vec<ZeroVerdict>,
    pub outcome: BranchOutcome,
    /// Whether the zeros found account for every zero in `Z_p`.
    pub complete: bool,
    /// Values of `k` at which every generator vanishes.
    pub zeros: Vec<u64>,
    /// Smallest index `n` on this branch that could still be a return time
    /// not listed in `zeros`. Present when a zero in `Z_p` was isolated but no
    /// natural below the scan bound matched it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_floor: Option<String>,
}

/// Wall-clock time; wasm32 without a host clock reports zero.
#[derive(Clone, Copy)]
struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    fn start() -> Self {
        Stopwatch {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    fn millis(&self) -> u64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.start.elapsed().as_millis() as u64;
        #[cfg(target_arch = "wasm32")]
        return 0;
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub total_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub prime: u64,
    pub precision: u32,
    pub preperiod: usize,
    pub period: usize,
    pub branches: Vec<BranchReport>,
    #[serde(flatten)]
    pub set: ProgressionSet,
    pub status: Status,
    pub complete: bool,
    /// Smallest index that could be a return time missing from the set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_floor: Option<String>,
    pub notes: Vec<String>,
    pub timing: Timing,
}

impl Report {
    /// True when some branch stayed inconclusive after every retry.
    pub fn has_inconclusive(&self) -> bool {
        self.branches.iter().any(|b| b.outcome == BranchOutcome::Inconclusive)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// JSON without the timing field, for reproducibility checks.
    pub fn canonical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v.as_object_mut().expect("object").remove("timing");
        serde_json::to_string_pretty(&v).expect("value serializes")
    }
}

const PROGRESSION_NOTE: &str =
    "progressions rest on a pullback vanishing to the working precision together with exact membership of sampled members";

#[derive(Clone, Copy, Debug)]
struct BranchPlan {
    phase: usize,
    offset: u64,
    start: u64,
    identity_power: u64,
    modulus: u64,
}

/// Everything that depends on the precision `K`.
struct Level {
    ctx: Arc<PadicContext>,
    charts: Vec<ResidueChart>,
    local_maps: BTreeMap<usize, PolyMap>,
    generators: Vec<MultiPoly>,
    /// `phi^n(alpha) mod p^{K+1}`.
    orbit: Vec<PadicVec>,
    stages: u32,
    floor: u32,
}

const CHART_CHECKS: usize = 10;

impl Level {
    fn build(
        model: &AffineModel,
        residues: &ResidueOrbit,
        precision: u32,
        stages: u32,
        phases: &BTreeSet<usize>,
        orbit_len: usize,
    ) -> Result<Self, EngineError> {
        let p = residues.p;
        let ctx = PadicContext::new(p, precision)?;
        let wide = PadicContext::new(p, precision + 1)?;
        let charts: Vec<ResidueChart> = (0..residues.period)
            .map(|j| ResidueChart { x_hat: residues.point(residues.preperiod + j).to_vec(), phase: j, period: residues.period })
            .collect();
        let mut local_maps = BTreeMap::new();
        for &j in phases {
            local_maps.insert(j, build_local_map(model, &ctx, &charts[j])?);
        }
        let generators = model.variety().iter().map(|h| h.to_padic(&ctx, 0)).collect::<Result<Vec<_>, _>>()?;
        let phi = to_padic_map(model.phi(), &wide, 0)?;
        let mut orbit = Vec::with_capacity(orbit_len);
        let mut x = PadicVec(model.alpha().iter().map(|q| PadicInt::from_rational(&wide, q)).collect::<Result<Vec<_>, _>>()?);
        for _ in 0..orbit_len {
            let next = phi.evaluate(&x)?;
            orbit.push(x);
            x = next;
        }
        Ok(Level { ctx, charts, local_maps, generators, orbit, stages, floor: classify_floor(precision) })
    }
}

#[derive(Clone, Debug)]
struct BranchResult {
    plan: BranchPlan,
    precision: u32,
    verdicts: Vec<ZeroVerdict>,
    outcome: BranchOutcome,
    complete: bool,
    zeros: Vec<u64>,
    /// In units of `k`; see [`BranchReport::residual_floor`].
    residual_floor: Option<u128>,
}

fn branch_series(level: &Level, plan: &BranchPlan) -> Result<Vec<MahlerSeries>, EngineError> {
    let chart = &level.charts[plan.phase];
    let f = level.local_maps[&plan.phase].clone();
    let phi = IteratedMap::new(f, plan.identity_power);
    let omega = chart.to_local(&level.orbit[plan.start as usize], &level.ctx)?;
    Ok(interpolate(&phi, &omega, level.stages)?)
}

fn run_branch(level: &Level, plan: &BranchPlan, scan_bound: u64) -> Result<BranchResult, EngineError> {
    let ctx = &level.ctx;
    let precision = ctx.precision();
    let chart = &level.charts[plan.phase];
    let series = branch_series(level, plan)?;
    let top = 2 * precision as usize;
    let u_vals: Vec<Vec<PadicInt>> = series
        .iter()
        .map(|s| s.values_at_naturals(top + 1))
        .collect::<Result<_, MahlerError>>()
        .map_err(|_| EngineError::Interpolation(InterpolationError::PrecisionExhausted { stages: level.stages, precision, needed: precision - 1 }))?;
    let points: Vec<PadicVec> = (0..=top)
        .map(|z| chart.from_local(&PadicVec(u_vals.iter().map(|v| v[z].clone()).collect())))
        .collect();
    for (k, pt) in points.iter().enumerate().take(CHART_CHECKS + 1) {
        let n = plan.start as usize + k * plan.modulus as usize;
        let expected = PadicVec(level.orbit[n].0.iter().map(|c| c.with_context(ctx)).collect());
        if *pt != expected {
            return Err(EngineError::ChartInconsistent { phase: plan.phase, offset: plan.offset, k });
        }
    }

    let mut verdicts = Vec::with_capacity(level.generators.len());
    let mut composites = Vec::with_capacity(level.generators.len());
    let mut witnesses = Vec::with_capacity(level.generators.len());
    for h in &level.generators {
        let vals = points.iter().map(|x| h.evaluate(x)).collect::<Result<Vec<_>, _>>()?;
        let c = MahlerSeries::from_values(&vals, TailRule::HalfIndex);
        let w = c.to_power_series(level.floor).ok();
        let verdict = match &w {
            Some(w) => classify(w, level.floor),
            None => ZeroVerdict { kind: ZeroKind::Inconclusive, certified: false },
        };
        verdicts.push(verdict);
        composites.push(c);
        witnesses.push(w);
    }

    let finite: Vec<usize> =
        (0..verdicts.len()).filter(|&i| verdicts[i].certified && matches!(verdicts[i].kind, ZeroKind::FiniteZeros { .. })).collect();
    let result = |outcome, complete, zeros, residual_floor| BranchResult {
        plan: *plan,
        precision,
        verdicts: verdicts.clone(),
        outcome,
        complete,
        zeros,
        residual_floor,
    };
    if finite.is_empty() {
        let all_zero = verdicts.iter().all(|v| v.kind == ZeroKind::IdenticallyZeroAtPrecision);
        return Ok(if all_zero {
            result(BranchOutcome::Progression, true, Vec::new(), None)
        } else {
            result(BranchOutcome::Inconclusive, false, Vec::new(), None)
        });
    }
    let mut complete = false;
    // a common zero missed by the scan must escape every resolved generator
    let mut residual: Option<Option<u128>> = None;
    let mut candidates: Option<BTreeSet<u64>> = None;
    for &i in &finite {
        let found: Vec<u64> = match verdicts[i].kind {
            ZeroKind::FiniteZeros { bound: 0 } => Vec::new(),
            _ => locate_natural_zeros(&composites[i], scan_bound)
                .map_err(|_| EngineError::Interpolation(InterpolationError::PrecisionExhausted { stages: level.stages, precision, needed: precision - 1 }))?,
        };
        if scan_is_complete(&verdicts[i], found.len()) {
            complete = true;
            residual = Some(None);
        } else if let Some(discs) = witnesses[i].as_ref().and_then(|w| isolate_zeros(w, precision, level.floor)) {
            let account = account_zeros(&discs, ctx.p(), &found, scan_bound);
            if account.resolved {
                complete = true;
                residual = Some(match (residual, account.residual_floor) {
                    (Some(None), _) | (_, None) => None,
                    (Some(Some(a)), Some(b)) => Some(a.max(b)),
                    (None, Some(b)) => Some(b),
                });
            }
        }
        let found: BTreeSet<u64> = found.into_iter().collect();
        candidates = Some(match candidates {
            None => found,
            Some(c) => c.intersection(&found).copied().collect(),
        });
    }
    let mut zeros: Vec<u64> = candidates.unwrap_or_default().into_iter().collect();
    // the remaining generators must vanish there too
    for (i, c) in composites.iter().enumerate() {
        if finite.contains(&i) || zeros.is_empty() {
            continue;
        }
        let vals = c.values_at_naturals(*zeros.last().expect("nonempty") as usize + 1).map_err(|_| {
            EngineError::Interpolation(InterpolationError::PrecisionExhausted { stages: level.stages, precision, needed: precision - 1 })
        })?;
        zeros.retain(|&k| vals[k as usize].is_zero());
    }
    Ok(result(BranchOutcome::Finite, complete, zeros, residual.flatten()))
}

#[cfg(feature = "parallel")]
fn run_all(level: &Level, plans: &[BranchPlan], scan_bound: u64) -> Result<Vec<BranchResult>, EngineError> {
    use rayon::prelude::*;
    plans.par_iter().map(|plan| run_branch(level, plan, scan_bound)).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_all(level: &Level, plans: &[BranchPlan], scan_bound: u64) -> Result<Vec<BranchResult>, EngineError> {
    plans.iter().map(|plan| run_branch(level, plan, scan_bound)).collect()
}

enum Membership {
    In,
    Out,
    Unknown,
}

fn membership(model: &AffineModel, orbit: &mut RationalOrbit, n: u64) -> Membership {
    match orbit.get(n as usize) {
        Some(x) if model.contains(x) => Membership::In,
        Some(_) => Membership::Out,
        None => Membership::Unknown,
    }
}

/// The interpolating series of one branch: `phi^{start + modulus k}(alpha)`
/// equals `chart.from_local(u(k))` modulo `p^K` for every `k` in `Z_p`.
#[derive(Clone, Debug)]
pub struct BranchInterpolant {
    pub phase: usize,
    pub offset: u64,
    pub start: u64,
    pub modulus: u64,
    pub chart: ResidueChart,
    pub series: Vec<MahlerSeries>,
}

impl BranchInterpolant {
    /// `phi^{start + modulus k}(alpha)` modulo `p^K`.
    pub fn point(&self, k: u64) -> Result<PadicVec, MahlerError> {
        let ctx = self.series[0].coeffs()[0].ctx().clone();
        let z = PadicInt::from_u64(&ctx, k);
        let local = self.series.iter().map(|s| s.evaluate(&z)).collect::<Result<Vec<_>, _>>()?;
        Ok(self.chart.from_local(&PadicVec(local)))
    }
}

fn branch_plans(residues: &ResidueOrbit, identity_powers: &[u64]) -> Vec<BranchPlan> {
    let n_period = residues.period as u64;
    let l0 = residues.preperiod as u64;
    let mut plans = Vec::new();
    for (j, &m) in identity_powers.iter().enumerate() {
        for l in 0..m {
            plans.push(BranchPlan { phase: j, offset: l, start: n_period * l + j as u64 + l0, identity_power: m, modulus: n_period * m });
        }
    }
    plans
}

fn identity_powers(model: &AffineModel, residues: &ResidueOrbit, precision: u32) -> Result<Vec<u64>, EngineError> {
    // identity powers depend only on F mod p, so no orbit or stages are needed
    let all_phases: BTreeSet<usize> = (0..residues.period).collect();
    let probe = Level::build(model, residues, precision, 1, &all_phases, 0)?;
    (0..residues.period).map(|j| find_identity_power(&probe.local_maps[&j])).collect()
}

/// Interpolating series for every residue branch of the orbit at prime `p`.
pub fn branch_interpolants(model: &AffineModel, p: u64, precision: u32) -> Result<Vec<BranchInterpolant>, EngineError> {
    let residues = admissible(model, p)?;
    let plans = branch_plans(&residues, &identity_powers(model, &residues, precision)?);
    let phases: BTreeSet<usize> = plans.iter().map(|b| b.phase).collect();
    let orbit_len = plans.iter().map(|b| b.start as usize + 1).max().unwrap_or(0);
    let level = Level::build(model, &residues, precision, precision.saturating_sub(1).max(1), &phases, orbit_len)?;
    plans
        .iter()
        .map(|plan| {
            Ok(BranchInterpolant {
                phase: plan.phase,
                offset: plan.offset,
                start: plan.start,
                modulus: plan.modulus,
                chart: level.charts[plan.phase].clone(),
                series: branch_series(&level, plan)?,
            })
        })
        .collect()
}

/// Extra primes tried when a run leaves a residual floor.
const PRIME_FALLBACKS: usize = 2;

/// Computes `{n >= 0 : phi^n(alpha) in V}`.
///
/// Without a fixed prime, a run whose isolated zeros are not all matched by
/// naturals is repeated at the next admissible primes, and the first fully
/// certified run wins. If none is, the first run is returned.
pub fn analyze(model: &AffineModel, config: &RunConfig) -> Result<Report, EngineError> {
    config.validate()?;
    let started = Stopwatch::start();
    if let Some(p) = config.prime {
        let residues = admissible(model, p)?;
        return analyze_at(model, config, p, residues, started);
    }
    let (p, residues) = select_prime(model, 5..config.prime_limit)?;
    let first = analyze_at(model, config, p, residues, started)?;
    if first.residual_floor.is_none() {
        return Ok(first);
    }
    let mut tried = vec![p];
    for _ in 0..PRIME_FALLBACKS {
        let Ok((q, residues)) = select_prime(model, tried[tried.len() - 1] + 1..config.prime_limit) else {
            break;
        };
        match analyze_at(model, config, q, residues, started) {
            Ok(mut r) if r.residual_floor.is_none() && r.status >= first.status => {
                let earlier: Vec<String> = tried.iter().map(u64::to_string).collect();
                r.notes.push(format!("p = {} left a residual floor, used p = {q}", earlier.join(", ")));
                return Ok(r);
            }
            _ => tried.push(q),
        }
    }
    let mut first = first;
    first.timing.total_ms = started.millis();
    Ok(first)
}

fn analyze_at(model: &AffineModel, config: &RunConfig, p: u64, residues: ResidueOrbit, started: Stopwatch) -> Result<Report, EngineError> {
    let n_period = residues.period;
    let l0 = residues.preperiod as u64;
    let mut pending = branch_plans(&residues, &identity_powers(model, &residues, config.precision)?);
    let orbit_len = pending
        .iter()
        .map(|b| b.start as usize + CHART_CHECKS * b.modulus as usize + 1)
        .max()
        .unwrap_or(residues.preperiod)
        .max(residues.preperiod);

    let mut rational = RationalOrbit::new(model, RationalOrbit::DEFAULT_MAX_BITS);
    let mut finished: BTreeMap<(usize, u64), (BranchResult, Status)> = BTreeMap::new();
    let mut precision = config.precision;
    let mut last_level_orbit: Vec<PadicVec> = Vec::new();
    for attempt in 0..=config.retry_max {
        if pending.is_empty() {
            break;
        }
        let phases: BTreeSet<usize> = pending.iter().map(|b| b.phase).collect();
        let level = Level::build(model, &residues, precision, config.stages_for(precision), &phases, orbit_len)?;
        let results = run_all(&level, &pending, config.scan_bound)?;
        let last = attempt == config.retry_max;
        let mut retry = Vec::new();
        for mut r in results {
            let mut status = Status::PrecisionQualified;
            if r.outcome == BranchOutcome::Progression {
                let mut unknown = false;
                let mut refuted = false;
                for k in 0..config.verify_count as u64 {
                    match membership(model, &mut rational, r.plan.start + k * r.plan.modulus) {
                        Membership::In => {}
                        Membership::Out => refuted = true,
                        Membership::Unknown => unknown = true,
                    }
                    if refuted || unknown {
                        break;
                    }
                }
                if refuted {
                    r.outcome = BranchOutcome::Inconclusive;
                } else if !unknown {
                    status = Status::Certified;
                }
            }
            if r.outcome == BranchOutcome::Inconclusive && !last {
                retry.push(r.plan);
            } else {
                finished.insert((r.plan.phase, r.plan.offset), (r, status));
            }
        }
        pending = retry;
        last_level_orbit = level.orbit;
        if !pending.is_empty() {
            precision *= 2;
        }
    }

    let mut set = ProgressionSet::default();
    for n in 0..l0 {
        match membership(model, &mut rational, n) {
            Membership::In => set.exceptional.push(ExceptionalPoint { n, verified: true }),
            Membership::Out => {}
            Membership::Unknown => {
                let ctx = PadicContext::new(p, config.precision)?;
                let x = PadicVec(last_level_orbit[n as usize].0.iter().map(|c| c.with_context(&ctx)).collect());
                let gens = model.variety().iter().map(|h| h.to_padic(&ctx, 0)).collect::<Result<Vec<_>, _>>()?;
                if gens.iter().map(|h| h.evaluate(&x)).collect::<Result<Vec<_>, _>>()?.iter().all(PadicInt::is_zero) {
                    set.exceptional.push(ExceptionalPoint { n, verified: false });
                }
            }
        }
    }
    let mut branches = Vec::new();
    let mut complete = true;
    let mut status = Status::Certified;
    let mut residual_floor: Option<u128> = None;
    for (r, s) in finished.into_values() {
        match r.outcome {
            BranchOutcome::Progression => {
                set.progressions.push(Progression { modulus: r.plan.modulus, residue: r.plan.start, status: s });
                status = status.min(s);
            }
            BranchOutcome::Finite => {
                complete &= r.complete;
                if let Some(k) = r.residual_floor {
                    let n = u128::from(r.plan.start).saturating_add(u128::from(r.plan.modulus).saturating_mul(k));
                    residual_floor = Some(residual_floor.map_or(n, |f| f.min(n)));
                    status = status.min(Status::PrecisionQualified);
                }
                for &k in &r.zeros {
                    let n = r.plan.start + k * r.plan.modulus;
                    match membership(model, &mut rational, n) {
                        Membership::In => set.exceptional.push(ExceptionalPoint { n, verified: true }),
                        Membership::Out => {}
                        Membership::Unknown => {
                            set.exceptional.push(ExceptionalPoint { n, verified: false });
                            status = status.min(Status::PrecisionQualified);
                        }
                    }
                }
            }
            BranchOutcome::Inconclusive => {
                complete = false;
                status = Status::Uncertified;
            }
        }
        branches.push(BranchReport {
            phase: r.plan.phase,
            offset: r.plan.offset,
            start: r.plan.start,
            modulus: r.plan.modulus,
            identity_power: r.plan.identity_power,
            precision: r.precision,
            verdicts: r.verdicts,
            outcome: r.outcome,
            complete: r.complete,
            zeros: r.zeros,
            residual_floor: r
                .residual_floor
                .map(|k| u128::from(r.plan.start).saturating_add(u128::from(r.plan.modulus).saturating_mul(k)).to_string()),
        });
    }
    if !complete {
        status = status.min(Status::PrecisionQualified);
    }
    set.normalize();
    let mut notes = Vec::new();
    if !set.progressions.is_empty() {
        notes.push(PROGRESSION_NOTE.to_string());
    }
    if !complete {
        notes.push(format!("some finite branches were only scanned up to k = {}", config.scan_bound));
    }
    if let Some(f) = residual_floor {
        notes.push(format!("a zero in Z_p matched no scanned index; return times from n = {f} on are not excluded"));
    }
    Ok(Report {
        prime: p,
        precision: config.precision,
        preperiod: residues.preperiod,
        period: n_period,
        branches,
        set,
        status,
        complete,
        residual_floor: residual_floor.map(|f| f.to_string()),
        notes,
        timing: Timing { total_ms: started.millis() },
    })
}

/// An index class `{n in Z : n = residue mod modulus}`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Congruence {
    pub modulus: u64,
    pub residue: u64,
    pub status: Status,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SignedPoint {
    pub n: i64,
    pub verified: bool,
}

/// Return times over `Z` for an invertible map.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoSidedSet {
    pub progressions: Vec<Congruence>,
    pub exceptional: Vec<SignedPoint>,
}

impl TwoSidedSet {
    pub fn contains(&self, n: i64) -> bool {
        self.progressions.iter().any(|c| n.rem_euclid(c.modulus as i64) as u64 == c.residue) || self.exceptional.iter().any(|e| e.n == n)
    }

    fn normalize(&mut self) {
        let mut map: BTreeMap<(u64, u64), Status> = BTreeMap::new();
        for c in &self.progressions {
            let s = map.entry((c.modulus, c.residue % c.modulus)).or_insert(c.status);
            *s = (*s).min(c.status);
        }
        loop {
            let mut changed = false;
            let keys: Vec<(u64, u64)> = map.keys().copied().collect();
            'outer: for &(m, r) in &keys {
                for d in (1..m).filter(|d| m % d == 0) {
                    let family: Vec<(u64, u64)> = (0..m / d).map(|i| (m, (r % d) + i * d)).collect();
                    if family.iter().all(|key| map.contains_key(key)) {
                        let status = family.iter().map(|key| map[key]).min().expect("nonempty");
                        for key in &family {
                            map.remove(key);
                        }
                        let s = map.entry((d, r % d)).or_insert(status);
                        *s = (*s).min(status);
                        changed = true;
                        break 'outer;
                    }
                }
            }
            let keys: Vec<(u64, u64)> = map.keys().copied().collect();
            for &(m, r) in &keys {
                if keys.iter().any(|&(m2, r2)| (m2, r2) != (m, r) && m % m2 == 0 && r % m2 == r2) {
                    map.remove(&(m, r));
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        self.progressions = map.into_iter().map(|((modulus, residue), status)| Congruence { modulus, residue, status }).collect();
        let mut ex: BTreeMap<i64, bool> = BTreeMap::new();
        for e in &self.exceptional {
            *ex.entry(e.n).or_insert(e.verified) |= e.verified;
        }
        let progs = self.progressions.clone();
        self.exceptional = ex
            .into_iter()
            .filter(|&(n, _)| !progs.iter().any(|c| n.rem_euclid(c.modulus as i64) as u64 == c.residue))
            .map(|(n, verified)| SignedPoint { n, verified })
            .collect();
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoSidedReport {
    pub forward: Report,
    pub backward: Report,
    #[serde(flatten)]
    pub set: TwoSidedSet,
    pub status: Status,
    pub timing: Timing,
}

impl TwoSidedReport {
    pub fn has_inconclusive(&self) -> bool {
        self.forward.has_inconclusive() || self.backward.has_inconclusive()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Computes `{n in Z : phi^n(alpha) in V}` from forward runs of `phi` and of
/// its inverse.
///
/// A forward progression `{r + kM}` pins down the class `r mod M` over `Z`:
/// if `phi^r(alpha)` lies in `V`, so do all `phi^{r + kM}(alpha)`, and applying
/// the inverse to the identically vanishing pullback extends it to negative `k`.
pub fn analyze_full_orbit(model: &AffineModel, config: &RunConfig) -> Result<TwoSidedReport, EngineError> {
    let started = Stopwatch::start();
    let backward_model = model.reversed().ok_or(EngineError::MissingInverse)?;
    let forward = analyze(model, config)?;
    let backward = analyze(&backward_model, config)?;
    let mut set = TwoSidedSet::default();
    for pr in &forward.set.progressions {
        set.progressions.push(Congruence { modulus: pr.modulus, residue: pr.residue % pr.modulus, status: pr.status });
    }
    for pr in &backward.set.progressions {
        let m = pr.modulus as i64;
        set.progressions.push(Congruence { modulus: pr.modulus, residue: (-(pr.residue as i64)).rem_euclid(m) as u64, status: pr.status });
    }
    for e in &forward.set.exceptional {
        set.exceptional.push(SignedPoint { n: e.n as i64, verified: e.verified });
    }
    for e in &backward.set.exceptional {
        set.exceptional.push(SignedPoint { n: -(e.n as i64), verified: e.verified });
    }
    set.normalize();
    Ok(TwoSidedReport {
        status: forward.status.min(backward.status),
        forward,
        backward,
        set,
        timing: Timing { total_ms: started.millis() },
    })
}

/// Companion model of `a_{n+g} = c_1 a_{n+g-1} + ... + c_g a_n`: the map
/// `(x_1..x_g) -> (x_2, .., x_g, c_g x_1 + .. + c_1 x_g)` with its inverse,
/// start `(a_0..a_{g-1})` and `V : x_1 = 0`.
pub fn recurrence_to_model(coefficients: &[BigRational], initial: &[BigRational]) -> Result<AffineModel, EngineError> {
    let g = coefficients.len();
    if g == 0 {
        return Err(EngineError::Model(ModelError::EmptyModel));
    }
    if initial.len() != g {
        return Err(EngineError::InitialValues { expected: g, found: initial.len() });
    }
    let c_g = &coefficients[g - 1];
    if c_g.is_zero() {
        return Err(EngineError::ZeroLeadingCoefficient);
    }
    let mut phi: Vec<RatPoly> = (1..g).map(|i| RatPoly::variable(g, i)).collect();
    let mut last = RatPoly::zero(g);
    for (i, c) in coefficients.iter().enumerate() {
        // c_{i+1} multiplies x_{g-i}
        let mut e = vec![0; g];
        e[g - 1 - i] = 1;
        last.add_term(e, c.clone());
    }
    phi.push(last);

    // x_1 = (y_g - sum_{i=2..g} c_{g+1-i} y_{i-1}) / c_g, x_{i+1} = y_i
    let inv_cg = BigRational::from_integer(BigInt::from(1)) / c_g;
    let mut first = RatPoly::zero(g);
    let mut e = vec![0; g];
    e[g - 1] = 1;
    first.add_term(e, inv_cg.clone());
    for i in 2..=g {
        let mut e = vec![0; g];
        e[i - 2] = 1;
        first.add_term(e, -(&coefficients[g - i] * &inv_cg));
    }
    let mut inverse = vec![first];
    inverse.extend((0..g - 1).map(|i| RatPoly::variable(g, i)));
    Ok(AffineModel::new(phi, Some(inverse), initial.to_vec(), vec![RatPoly::variable(g, 0)])?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(n))
    }

    fn qs(ns: &[i64]) -> Vec<BigRational> {
        ns.iter().map(|&n| q(n)).collect()
    }

    fn model(phi: Vec<RatPoly>, alpha: &[i64], variety: Vec<RatPoly>) -> AffineModel {
        AffineModel::new(phi, None, qs(alpha), variety).unwrap()
    }

    fn translation() -> AffineModel {
        model(vec![RatPoly::from_i64_terms(1, &[(&[1], 1), (&[0], 1)])], &[0], vec![RatPoly::variable(1, 0)])
    }

    fn swap() -> AffineModel {
        model(vec![RatPoly::variable(2, 1), RatPoly::variable(2, 0)], &[0, 1], vec![RatPoly::variable(2, 0)])
    }

    fn quick() -> RunConfig {
        RunConfig { precision: 12, ..RunConfig::default() }
    }

    #[test]
    fn select_prime_examples() {
        assert_eq!(select_prime(&translation(), 5..100).unwrap().0, 5);

        let fifth = BigRational::new(1.into(), 5.into());
        let mut f = RatPoly::variable(1, 0);
        f.add_term(vec![0], fifth);
        let m = model(vec![f], &[0], vec![RatPoly::variable(1, 0)]);
        assert!(matches!(admissible(&m, 5), Err(EngineError::PrimeRejected { p: 5, .. })));
        assert_eq!(select_prime(&m, 5..100).unwrap().0, 7);

        let square = model(vec![RatPoly::from_i64_terms(1, &[(&[2], 1)])], &[0], vec![]);
        assert_eq!(select_prime(&square, 5..200), Err(EngineError::NoPrimeFound { limit: 200 }));
    }

    #[test]
    fn residue_orbit_examples() {
        let o = residue_orbit(&translation(), 5).unwrap();
        assert_eq!((o.preperiod, o.period), (0, 5));
        let id = model(vec![RatPoly::variable(1, 0)], &[3], vec![]);
        let o = residue_orbit(&id, 5).unwrap();
        assert_eq!((o.preperiod, o.period), (0, 1));
        let o = residue_orbit(&swap(), 5).unwrap();
        assert_eq!((o.preperiod, o.period), (0, 2));
        let sq = model(vec![RatPoly::from_i64_terms(1, &[(&[2], 1), (&[0], 1)])], &[0], vec![]);
        let o = residue_orbit(&sq, 7).unwrap();
        // 0, 1, 2, 5, 26=5 mod 7
        assert_eq!((o.preperiod, o.period), (3, 1));
        assert!(o.preperiod + o.period <= 7 + 1);
    }

    #[test]
    fn local_map_examples() {
        let ctx = PadicContext::new(5, 10).unwrap();
        let chart = ResidueChart { x_hat: vec![0], phase: 0, period: 5 };
        let f = build_local_map(&translation(), &ctx, &chart).unwrap();
        let expect = PolyMap::new(vec![MultiPoly::from_i64_terms(&ctx, 1, 11, &[(&[1], 1), (&[0], 1)])]).unwrap();
        assert_eq!(f.components()[0].terms().collect::<Vec<_>>(), expect.components()[0].terms().collect::<Vec<_>>());
        assert_eq!(find_identity_power(&f).unwrap(), 5);

        let id = model(vec![RatPoly::variable(1, 0)], &[0], vec![]);
        let f = build_local_map(&id, &ctx, &ResidueChart { x_hat: vec![0], phase: 0, period: 1 }).unwrap();
        assert_eq!(f.components()[0].terms().count(), 1);
        assert_eq!(find_identity_power(&f).unwrap(), 1);

        let double = model(vec![RatPoly::from_i64_terms(1, &[(&[1], 2)])], &[0], vec![]);
        let f = build_local_map(&double, &ctx, &ResidueChart { x_hat: vec![0], phase: 0, period: 4 }).unwrap();
        assert_eq!(f.components()[0].coefficient(&[1]), PadicInt::from_u64(&ctx, 16));
        let f1 = build_local_map(&double, &ctx, &ResidueChart { x_hat: vec![0], phase: 0, period: 1 }).unwrap();
        assert_eq!(find_identity_power(&f1).unwrap(), 4);
    }

    /// The local map agrees with conjugating `phi^N(x_hat + T) - x_hat` by
    /// `T -> pT` and dividing by `p`.
    #[test]
    fn local_map_matches_rescaled_conjugate() {
        let phi = vec![
            RatPoly::from_i64_terms(2, &[(&[1, 0], 1), (&[0, 2], 1)]),
            RatPoly::from_i64_terms(2, &[(&[0, 1], 1), (&[0, 0], 1)]),
        ];
        let m = model(phi.clone(), &[0, 0], vec![]);
        let (p, k) = (5u64, 8u32);
        let ctx = PadicContext::new(p, k).unwrap();
        let wide = PadicContext::new(p, k + 1).unwrap();
        for x_hat in [vec![0u64, 0], vec![2, 3]] {
            let chart = ResidueChart { x_hat: x_hat.clone(), phase: 0, period: 5 };
            let f = build_local_map(&m, &ctx, &chart).unwrap();
            // H(T) = phi^5(x_hat + T) - x_hat over Q
            let shift: Vec<RatPoly> = (0..2)
                .map(|i| {
                    let mut v = RatPoly::variable(2, i);
                    v.add_term(vec![0, 0], q(x_hat[i] as i64));
                    v
                })
                .collect();
            let mut h = shift.clone();
            for _ in 0..5 {
                h = crate::model::compose_maps(&phi, &h);
            }
            let h: Vec<RatPoly> = h.iter().enumerate().map(|(i, c)| c.sub(&RatPoly::constant(2, q(x_hat[i] as i64)))).collect();
            let hp = to_padic_map(&h, &wide, k + 1).unwrap();
            let r = hp.rescale_conjugate().unwrap();
            for (a, b) in f.components().iter().zip(r.components()) {
                let a: Vec<_> = a.terms().map(|(e, c)| (e.clone(), c.clone())).collect();
                let b: Vec<_> = b.terms().map(|(e, c)| (e.clone(), c.with_context(&ctx))).filter(|(_, c)| !c.is_zero()).collect();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn swap_gives_even_indices() {
        let r = analyze(&swap(), &quick()).unwrap();
        assert_eq!(r.set.progressions, vec![Progression { modulus: 2, residue: 0, status: Status::Certified }]);
        assert!(r.set.exceptional.is_empty());
        assert!(!r.has_inconclusive());
    }

    #[test]
    fn translation_hits_zero_once() {
        let r = analyze(&translation(), &quick()).unwrap();
        assert!(r.set.progressions.is_empty());
        assert_eq!(r.set.exceptional, vec![ExceptionalPoint { n: 0, verified: true }]);
        assert_eq!(r.status, Status::Certified);
    }

    #[test]
    fn preperiod_is_checked_exactly() {
        // x -> x^2 + 1 from 1 is 1, 2, 5, 5, .. mod 7; V: x = 2
        let m = model(vec![RatPoly::from_i64_terms(1, &[(&[2], 1), (&[0], 1)])], &[1], vec![RatPoly::from_i64_terms(1, &[(&[1], 1), (&[0], -2)])]);
        let r = analyze(&m, &quick()).unwrap();
        assert_eq!((r.prime, r.preperiod), (7, 2));
        assert_eq!(r.set.exceptional, vec![ExceptionalPoint { n: 1, verified: true }]);
        assert!(r.set.progressions.is_empty());
    }

    #[test]
    fn recurrence_examples() {
        let m = recurrence_to_model(&qs(&[1]), &qs(&[0])).unwrap();
        let r = analyze(&m, &quick()).unwrap();
        assert_eq!(r.set.progressions, vec![Progression { modulus: 1, residue: 0, status: Status::Certified }]);

        let m = recurrence_to_model(&qs(&[0, 1]), &qs(&[0, 1])).unwrap();
        let r = analyze(&m, &quick()).unwrap();
        assert_eq!(r.set.progressions.len(), 1);
        assert_eq!((r.set.progressions[0].modulus, r.set.progressions[0].residue), (2, 0));

        assert_eq!(recurrence_to_model(&qs(&[1, 0]), &qs(&[0, 1])), Err(EngineError::ZeroLeadingCoefficient));
        let fib = recurrence_to_model(&qs(&[1, 1]), &qs(&[0, 1])).unwrap();
        assert_eq!(fib.phi_inverse().unwrap().len(), 2);
    }

    #[test]
    fn full_orbit_examples() {
        let mut t = translation();
        t = AffineModel::new(
            t.phi().to_vec(),
            Some(vec![RatPoly::from_i64_terms(1, &[(&[1], 1), (&[0], -1)])]),
            t.alpha().to_vec(),
            t.variety().to_vec(),
        )
        .unwrap();
        let r = analyze_full_orbit(&t, &quick()).unwrap();
        assert_eq!(r.set.exceptional, vec![SignedPoint { n: 0, verified: true }]);
        assert!(r.set.progressions.is_empty());

        let half = BigRational::new(1.into(), 2.into());
        let mut inv = RatPoly::zero(1);
        inv.add_term(vec![1], half);
        let d = AffineModel::new(
            vec![RatPoly::from_i64_terms(1, &[(&[1], 2)])],
            Some(vec![inv]),
            qs(&[3]),
            vec![RatPoly::from_i64_terms(1, &[(&[1], 1), (&[0], -3)])],
        )
        .unwrap();
        let r = analyze_full_orbit(&d, &quick()).unwrap();
        assert_eq!(r.set.exceptional, vec![SignedPoint { n: 0, verified: true }]);
        assert!(r.set.progressions.is_empty());
    }

    #[test]
    fn normalize_merges_and_drops_covered() {
        let pr = |modulus, residue| Progression { modulus, residue, status: Status::Certified };
        let mut s = ProgressionSet {
            progressions: vec![pr(4, 0), pr(4, 2), pr(8, 4), pr(4, 0)],
            exceptional: vec![ExceptionalPoint { n: 6, verified: true }, ExceptionalPoint { n: 3, verified: true }],
        };
        s.normalize();
        assert_eq!(s.progressions, vec![pr(2, 0)]);
        assert_eq!(s.exceptional, vec![ExceptionalPoint { n: 3, verified: true }]);
        // a later start is not absorbed by an earlier one with another modulus
        let mut s = ProgressionSet { progressions: vec![pr(3, 1), pr(6, 7)], exceptional: vec![] };
        s.normalize();
        assert_eq!(s.progressions, vec![pr(3, 1)]);
    }

    #[test]
    fn report_json_round_trips() {
        let r = analyze(&translation(), &quick()).unwrap();
        let back: Report = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert!(!r.canonical_json().contains("timing"));
    }

    #[test]
    fn non_natural_zero_leaves_a_residual_floor() {
        // Fibonacci at p = 5: the branches starting at 25, 50, 75 vanish at k = -1/4
        let fib = recurrence_to_model(&qs(&[1, 1]), &qs(&[0, 1])).unwrap();
        let r = analyze(&fib, &RunConfig { prime: Some(5), precision: 20, ..RunConfig::default() }).unwrap();
        assert_eq!(r.set.exceptional, vec![ExceptionalPoint { n: 0, verified: true }]);
        assert_eq!(r.status, Status::PrecisionQualified);
        let floors: Vec<u64> = r.branches.iter().filter(|b| b.residual_floor.is_some()).map(|b| b.start).collect();
        assert_eq!(floors, vec![25, 50, 75]);
        let floor: u128 = r.residual_floor.as_deref().unwrap().parse().unwrap();
        // beyond every scanned index start + 100 k, k <= 2000
        assert!(floor > 25 + 100 * 2000);
        // without the override the next primes are tried
        let auto = analyze(&fib, &RunConfig { precision: 20, ..RunConfig::default() }).unwrap();
        assert_eq!(auto.status, Status::Certified);
        assert_eq!(auto.prime, 11);
        assert!(auto.residual_floor.is_none());
    }

    #[test]
    fn branch_interpolants_follow_the_orbit() {
        let branches = branch_interpolants(&translation(), 7, 10).unwrap();
        // period 7, identity power 7
        assert_eq!(branches.len(), 49);
        for b in &branches {
            assert_eq!(b.modulus, 49);
            for k in 0..12 {
                let n = b.start + k * b.modulus;
                assert_eq!(b.point(k).unwrap().0[0].residue(), &num_bigint::BigUint::from(n));
            }
        }
    }
}
