//! Construction of Mahler series `f_1..f_n` with `f(0) = omega` and
//! `f(z+1) = phi(f(z))` for a self-map `phi` congruent to the identity mod `p`
//! whose degree-`d` coefficients are divisible by `p^{d-1}`.
//!
//! The series are built one p-adic digit at a time. Stage `j` adds
//! `p^j h_{i,j}` to the partial sums `g_{i,j-1}`, where `h_{i,j}` is a Mahler
//! polynomial of degree at most `2j - 1` vanishing at 0. Everything is done in
//! the evaluation representation: residuals are sampled at `z = 0..2j-2` and
//! turned back into Mahler coefficients by forward differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mahler::{binomials_at, MahlerPoly, MahlerSeries, TailRule};
use crate::padic::{PadicInt, PadicVec};
use crate::poly::{ConditionViolation, SelfMap};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterpolationError {
    #[error("map does not satisfy the interpolation hypotheses: {0}")]
    ConditionViolated(ConditionViolation),
    #[error("{stages} stages cannot reach {precision} digits (need at least {needed})")]
    PrecisionExhausted { stages: u32, precision: u32, needed: u32 },
    #[error("stage {stage}: residual of component {component} at z = {z} is not divisible by p^{stage}")]
    DivisibilityFailure { stage: u32, component: usize, z: usize },
    #[error("stage {stage}: {what}")]
    InvariantViolated { stage: u32, what: String },
    #[error("start vector has length {found}, map has dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// State after stage `j`: the increments `h_{i,j}` and the partial sums
/// `g_{i,j} = sum_{k <= j} p^k h_{i,k}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InterpolationStage {
    pub j: u32,
    pub h: Vec<MahlerPoly>,
    pub g_partial: Vec<MahlerPoly>,
}

impl InterpolationStage {
    /// Stage 0: `h_{i,0} = g_{i,0} = omega_i`.
    pub fn initial(omega: &PadicVec) -> Self {
        let h: Vec<MahlerPoly> = omega.0.iter().map(|w| MahlerPoly::constant(w.clone())).collect();
        InterpolationStage { j: 0, g_partial: h.clone(), h }
    }
}

/// Number of random p-adic spot checks of the stage invariant.
const SPOT_CHECKS: usize = 10;

/// `Q_{i,j} mod p` for the next stage `j = stage.j + 1`, from
/// `g_{i,j-1}(z+1) - phi_i(g_{j-1}(z)) = p^j Q_{i,j}(z)` sampled on
/// `z = 0..=2j-2`. Coefficients are returned as symmetric residues mod `p`.
pub fn residual<M: SelfMap + ?Sized>(
    stage: &InterpolationStage,
    phi: &M,
) -> Result<Vec<MahlerPoly>, InterpolationError> {
    residual_cached(stage, phi, &[])
}

// `images[z]` may hold `phi(g_{j-1}(z))` from the previous stage check.
fn residual_cached<M: SelfMap + ?Sized>(
    stage: &InterpolationStage,
    phi: &M,
    images: &[PadicVec],
) -> Result<Vec<MahlerPoly>, InterpolationError> {
    let j = stage.j + 1;
    let ctx = phi.ctx().clone();
    let samples = 2 * j as usize - 1;
    let values: Vec<Vec<PadicInt>> = stage.g_partial.iter().map(|g| g.values(samples + 1)).collect();
    let n = phi.dim();
    let mut q_vals = vec![Vec::with_capacity(samples); n];
    for z in 0..samples {
        let fresh;
        let image = match images.get(z) {
            Some(im) => im,
            None => {
                fresh = phi.apply(&PadicVec((0..n).map(|i| values[i][z].clone()).collect()));
                &fresh
            }
        };
        for i in 0..n {
            let r = &values[i][z + 1] - &image.0[i];
            let q = r
                .div_p_pow(j)
                .map_err(|_| InterpolationError::DivisibilityFailure { stage: j, component: i, z })?;
            q_vals[i].push(PadicInt::from_u64(&ctx, q.mod_p()));
        }
    }
    let p = ctx.p() as i64;
    Ok(q_vals
        .iter()
        .map(|vals| {
            let raw = MahlerPoly::from_values(vals);
            let coeffs = raw.coeffs().iter().map(|c| PadicInt::from_i64(&ctx, symmetric(c.mod_p() as i64, p))).collect();
            let mut q = MahlerPoly::new(&ctx, coeffs);
            q.trim();
            q
        })
        .collect())
}

fn symmetric(r: i64, p: i64) -> i64 {
    if 2 * r > p {
        r - p
    } else {
        r
    }
}

/// Runs stage `j = stage.j + 1`: solves `Q + h(z+1) - h(z) = 0 mod p`
/// componentwise and checks the invariant
/// `g_j(z+1) = phi(g_j(z)) mod p^{j+1}` on `z = 0..=2j+1` and at random
/// points of `Z_p`.
pub fn advance_stage<M: SelfMap + ?Sized>(
    stage: &InterpolationStage,
    phi: &M,
) -> Result<InterpolationStage, InterpolationError> {
    Ok(advance_cached(stage, phi, &[])?.0)
}

fn advance_cached<M: SelfMap + ?Sized>(
    stage: &InterpolationStage,
    phi: &M,
    images: &[PadicVec],
) -> Result<(InterpolationStage, Vec<PadicVec>), InterpolationError> {
    let j = stage.j + 1;
    let q = residual_cached(stage, phi, images)?;
    let mut h = Vec::with_capacity(q.len());
    let mut g_partial = Vec::with_capacity(q.len());
    for (i, qi) in q.iter().enumerate() {
        let hi = MahlerPoly::solve_difference(qi);
        if hi.degree().is_some_and(|d| d > 2 * j as usize - 1) || !hi.coeff(0).is_zero() {
            return Err(InterpolationError::InvariantViolated {
                stage: j,
                what: format!("increment {i} has degree {:?} > {} or h(0) != 0", hi.degree(), 2 * j - 1),
            });
        }
        g_partial.push(stage.g_partial[i].add(&hi.mul_p_pow(j)));
        h.push(hi);
    }
    let next = InterpolationStage { j, h, g_partial };
    let images = check_stage(&next, phi)?;
    Ok((next, images))
}

/// Checks the stage invariant and returns `phi(g_j(z))` for `z = 0..=2j+1`.
fn check_stage<M: SelfMap + ?Sized>(stage: &InterpolationStage, phi: &M) -> Result<Vec<PadicVec>, InterpolationError> {
    let j = stage.j;
    let ctx = phi.ctx().clone();
    let digits = (j + 1).min(ctx.precision());
    let n = phi.dim();
    let count = 2 * j as usize + 2;
    let values: Vec<Vec<PadicInt>> = stage.g_partial.iter().map(|g| g.values(count + 1)).collect();
    let violated = |z: String, i: usize| InterpolationError::InvariantViolated {
        stage: j,
        what: format!("g(z+1) != phi(g(z)) mod p^{digits} in component {i} at z = {z}"),
    };
    let mut images = Vec::with_capacity(count);
    for z in 0..count {
        let x = PadicVec((0..n).map(|i| values[i][z].clone()).collect());
        let image = phi.apply(&x);
        for i in 0..n {
            if !(&values[i][z + 1] - &image.0[i]).reduce_to(digits).is_zero() {
                return Err(violated(z.to_string(), i));
            }
        }
        images.push(image);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + u64::from(j));
    let one = PadicInt::one(&ctx);
    for _ in 0..SPOT_CHECKS {
        let z = PadicInt::from_u64(&ctx, rng.gen()) * PadicInt::from_u64(&ctx, rng.gen()) + PadicInt::from_u64(&ctx, rng.gen());
        let z1 = &z + &one;
        let top = stage.g_partial.iter().map(|g| g.coeffs().len()).max().unwrap_or(0).saturating_sub(1);
        let (b0, b1) = (binomials_at(&z, top), binomials_at(&z1, top));
        let x = PadicVec(stage.g_partial.iter().map(|g| g.eval_binomials(&b0)).collect());
        let image = phi.apply(&x);
        for (i, g) in stage.g_partial.iter().enumerate() {
            if !(&g.eval_binomials(&b1) - &image.0[i]).reduce_to(digits).is_zero() {
                return Err(violated(z.to_string(), i));
            }
        }
    }
    Ok(images)
}

/// Interpolating Mahler series for the orbit of `omega` under `phi`, exact
/// modulo `p^K`.
///
/// Stage `j` contributes `p^j h_{i,j}`, which vanishes modulo `p^K` once
/// `j >= K`, so the run stops after stage `min(stages, K - 1)`; asking for
/// fewer than `K - 1` stages is an error. The returned series store
/// `b_0..b_{2K}` with the tail rule `v(b_k) >= ceil((k+1)/2)`.
pub fn interpolate<M: SelfMap + ?Sized>(
    phi: &M,
    omega: &PadicVec,
    stages: u32,
) -> Result<Vec<MahlerSeries>, InterpolationError> {
    Ok(interpolate_with_stages(phi, omega, stages)?.0)
}

/// As [`interpolate`], also returning every intermediate stage.
pub fn interpolate_with_stages<M: SelfMap + ?Sized>(
    phi: &M,
    omega: &PadicVec,
    stages: u32,
) -> Result<(Vec<MahlerSeries>, Vec<InterpolationStage>), InterpolationError> {
    if omega.len() != phi.dim() {
        return Err(InterpolationError::DimensionMismatch { expected: phi.dim(), found: omega.len() });
    }
    phi.check_conditions().map_err(InterpolationError::ConditionViolated)?;
    let ctx = phi.ctx().clone();
    let precision = ctx.precision();
    let needed = precision - 1;
    if stages < needed {
        return Err(InterpolationError::PrecisionExhausted { stages, precision, needed });
    }
    let mut history = vec![InterpolationStage::initial(omega)];
    let mut images = Vec::new();
    for _ in 0..needed {
        let (next, im) = advance_cached(history.last().expect("nonempty"), phi, &images)?;
        images = im;
        history.push(next);
    }
    let last = history.last().expect("nonempty");
    let top = 2 * precision as usize;
    let mut out = Vec::with_capacity(phi.dim());
    for (i, g) in last.g_partial.iter().enumerate() {
        let coeffs: Vec<PadicInt> = (0..=top).map(|k| g.coeff(k)).collect();
        for (k, b) in coeffs.iter().enumerate() {
            let v = b.valuation();
            let need = TailRule::HalfIndex.bound(k, top);
            if !v.at_floor && v.value < need {
                return Err(InterpolationError::InvariantViolated {
                    stage: last.j,
                    what: format!("coefficient b_{i},{k} has valuation {} < {need}", v.value),
                });
            }
        }
        out.push(MahlerSeries::new(coeffs, TailRule::HalfIndex));
    }
    Ok((out, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::PadicContext;
    use crate::poly::{MultiPoly, PolyMap};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn ctx(p: u64, k: u32) -> Arc<PadicContext> {
        PadicContext::new(p, k).unwrap()
    }

    fn map1(c: &Arc<PadicContext>, terms: &[(&[u32], i64)]) -> PolyMap {
        PolyMap::new(vec![MultiPoly::from_i64_terms(c, 1, c.precision() + 1, terms)]).unwrap()
    }

    #[test]
    fn identity_has_zero_residuals() {
        let c = ctx(5, 8);
        let id = PolyMap::identity(&c, 2, 9);
        let omega = PadicVec::from_i64s(&c, &[3, 17]);
        let (series, history) = interpolate_with_stages(&id, &omega, 16).unwrap();
        for st in &history[1..] {
            assert!(st.h.iter().all(|h| h.degree().is_none()));
        }
        assert_eq!(residual(&history[3], &id).unwrap().iter().filter_map(MahlerPoly::degree).count(), 0);
        for (s, w) in series.iter().zip(&omega.0) {
            assert_eq!(&s.coeffs()[0], w);
            assert!(s.coeffs()[1..].iter().all(PadicInt::is_zero));
        }
    }

    #[test]
    fn translation_first_stage() {
        let c = ctx(5, 8);
        let phi = map1(&c, &[(&[1], 1), (&[0], 5)]);
        let s0 = InterpolationStage::initial(&PadicVec::from_i64s(&c, &[0]));
        let q = residual(&s0, &phi).unwrap();
        assert_eq!(q[0].coeffs(), &[PadicInt::from_i64(&c, -1)]);
        let s1 = advance_stage(&s0, &phi).unwrap();
        assert_eq!(s1.h[0], MahlerPoly::binomial(&c, 1));
        assert_eq!(s1.g_partial[0].coeffs(), &[PadicInt::zero(&c), PadicInt::from_u64(&c, 5)]);
    }

    #[test]
    fn geometric_first_stage() {
        let c = ctx(5, 8);
        let phi = map1(&c, &[(&[1], 6)]);
        let s0 = InterpolationStage::initial(&PadicVec::from_i64s(&c, &[1]));
        assert_eq!(residual(&s0, &phi).unwrap()[0].coeffs(), &[PadicInt::from_i64(&c, -1)]);
        let s1 = advance_stage(&s0, &phi).unwrap();
        assert_eq!(s1.h[0], MahlerPoly::binomial(&c, 1));
        assert_eq!(s1.g_partial[0].coeffs(), &[PadicInt::one(&c), PadicInt::from_u64(&c, 5)]);
    }

    #[test]
    fn translation_series_is_pz() {
        let c = ctx(5, 10);
        let phi = map1(&c, &[(&[1], 1), (&[0], 5)]);
        let f = interpolate(&phi, &PadicVec::from_i64s(&c, &[0]), 20).unwrap();
        let vals = f[0].values_at_naturals(40).unwrap();
        for (k, v) in vals.iter().enumerate() {
            assert_eq!(v, &PadicInt::from_u64(&c, 5 * k as u64));
        }
    }

    #[test]
    fn geometric_series_is_binomial_theorem() {
        let k = 12;
        let c = ctx(5, k);
        let phi = map1(&c, &[(&[1], 6)]);
        let f = interpolate(&phi, &PadicVec::from_i64s(&c, &[1]), 2 * k).unwrap();
        for (i, b) in f[0].coeffs().iter().enumerate() {
            assert_eq!(b, &PadicInt::one(&c).mul_p_pow(i as u32), "b_{i}");
        }
        let six = PadicInt::from_u64(&c, 6);
        for (z, v) in f[0].values_at_naturals(30).unwrap().iter().enumerate() {
            assert_eq!(v, &six.pow(z as u64));
        }
    }

    #[test]
    fn rejects_maps_off_the_identity() {
        let c = ctx(5, 6);
        let phi = map1(&c, &[(&[1], 2)]);
        let err = interpolate(&phi, &PadicVec::from_i64s(&c, &[1]), 12).unwrap_err();
        assert!(matches!(err, InterpolationError::ConditionViolated(v) if v.exponents == vec![1]));
    }

    #[test]
    fn too_few_stages_is_an_error() {
        let c = ctx(5, 6);
        let phi = PolyMap::identity(&c, 1, 7);
        assert!(matches!(
            interpolate(&phi, &PadicVec::from_i64s(&c, &[1]), 3),
            Err(InterpolationError::PrecisionExhausted { needed: 5, .. })
        ));
    }

    #[test]
    fn degree_ledger_holds_for_a_nonlinear_map() {
        let c = ctx(7, 10);
        // x -> x + 7 + 7 x^2 + 49 x^3
        let phi = map1(&c, &[(&[1], 1), (&[0], 7), (&[2], 7), (&[3], 49)]);
        let (_, history) = interpolate_with_stages(&phi, &PadicVec::from_i64s(&c, &[2]), 20).unwrap();
        for st in &history[1..] {
            for h in &st.h {
                assert!(h.degree().map_or(true, |d| d <= 2 * st.j as usize - 1));
                assert!(h.coeff(0).is_zero());
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn functional_equation_on_random_planar_maps(
            coeffs in prop::collection::vec(-9i64..=9, 6),
            w0 in 0i64..10_000, w1 in 0i64..10_000,
        ) {
            // (x, y) -> (x + p a + p b y^2, y + p c + p d x + p^2 e x^2 y + p^2 f y^3)
            let c = ctx(5, 8);
            let cap = c.precision() + 1;
            let (p, pp) = (5, 25);
            let phi = PolyMap::new(vec![
                MultiPoly::from_i64_terms(&c, 2, cap, &[(&[1, 0], 1), (&[0, 0], p * coeffs[0]), (&[0, 2], p * coeffs[1])]),
                MultiPoly::from_i64_terms(&c, 2, cap, &[
                    (&[0, 1], 1), (&[0, 0], p * coeffs[2]), (&[1, 0], p * coeffs[3]),
                    (&[2, 1], pp * coeffs[4]), (&[0, 3], pp * coeffs[5]),
                ]),
            ]).unwrap();
            let omega = PadicVec::from_i64s(&c, &[w0, w1]);
            let series = interpolate(&phi, &omega, 16).unwrap();
            let at = |z: u64| PadicVec(series.iter().map(|s| s.evaluate(&PadicInt::from_u64(&c, z)).unwrap()).collect());
            prop_assert_eq!(at(0), omega);
            for z in 0..12 {
                prop_assert_eq!(at(z + 1), phi.apply(&at(z)));
            }
        }
    }
}
