//! Browser bindings for the demo page in `www/`.
//!
//! Every entry point takes and returns strings; results are JSON. The plain
//! Rust functions are exported too so they can be tested natively.

use dml_core::engine::{admissible, analyze, recurrence_to_model, select_prime, RunConfig};
use dml_core::interpolator::interpolate;
use dml_core::model::{format_rational, parse_rational, to_padic_map, AffineModel, MapFile};
use dml_core::padic::{PadicContext, PadicInt, PadicVec};
use num_rational::BigRational;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Demo runs are kept small so the page stays responsive.
const MAX_PRECISION: u32 = 40;
const PRIME_LIMIT: u64 = 10_000;

fn rationals(list: &str) -> Result<Vec<BigRational>, String> {
    list.split(',').map(|s| parse_rational(s).map_err(|e| e.to_string())).collect()
}

fn check_precision(precision: u32) -> Result<(), String> {
    if (4..=MAX_PRECISION).contains(&precision) {
        Ok(())
    } else {
        Err(format!("precision must be between 4 and {MAX_PRECISION}"))
    }
}

#[derive(Serialize)]
struct ZeroSetSummary {
    prime: u64,
    status: String,
    progressions: Vec<(u64, u64)>,
    exceptional: Vec<u64>,
    residual_floor: Option<String>,
    branches: usize,
    notes: Vec<String>,
    /// First terms of the sequence, for display.
    terms: Vec<String>,
}

/// Zero set of `a_{n+g} = c_1 a_{n+g-1} + ... + c_g a_n`.
pub fn recurrence_zero_set_json(rec: &str, init: &str, precision: u32) -> Result<String, String> {
    check_precision(precision)?;
    let c = rationals(rec)?;
    let a = rationals(init)?;
    let model = recurrence_to_model(&c, &a).map_err(|e| e.to_string())?;
    let report = analyze(&model, &RunConfig { precision, ..RunConfig::default() }).map_err(|e| e.to_string())?;
    let mut terms = a.clone();
    while terms.len() < 16 {
        let n = terms.len();
        let next = (0..c.len()).map(|i| &c[i] * &terms[n - 1 - i]).sum();
        terms.push(next);
    }
    let summary = ZeroSetSummary {
        prime: report.prime,
        status: serde_json::to_value(report.status).expect("status serializes").as_str().unwrap_or_default().to_string(),
        progressions: report.set.progressions.iter().map(|p| (p.modulus, p.residue)).collect(),
        exceptional: report.set.exceptional.iter().map(|e| e.n).collect(),
        residual_floor: report.residual_floor.clone(),
        branches: report.branches.len(),
        notes: report.notes.clone(),
        terms: terms.iter().map(format_rational).collect(),
    };
    Ok(serde_json::to_string(&summary).expect("summary serializes"))
}

#[derive(Serialize)]
struct Coefficient {
    k: usize,
    valuation: u32,
    at_floor: bool,
    value: String,
}

/// Mahler coefficients of the orbit interpolation of a map file, with valuations.
pub fn interpolation_staircase_json(map_json: &str, omega: &str, prime: u64, precision: u32) -> Result<String, String> {
    check_precision(precision)?;
    let phi = MapFile::parse(map_json).map_err(|e| e.to_string())?;
    let omega = rationals(omega)?;
    if omega.len() != phi.len() {
        return Err(format!("the start point needs {} coordinates", phi.len()));
    }
    let ctx = PadicContext::new(prime, precision).map_err(|e| e.to_string())?;
    let map = to_padic_map(&phi, &ctx, precision + 1).map_err(|e| e.to_string())?;
    let start = omega.iter().map(|q| PadicInt::from_rational(&ctx, q)).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    let series = interpolate(&map, &PadicVec(start), precision).map_err(|e| e.to_string())?;
    let table: Vec<Vec<Coefficient>> = series
        .iter()
        .map(|s| {
            s.coeffs()
                .iter()
                .enumerate()
                .map(|(k, b)| {
                    let v = b.valuation();
                    Coefficient { k, valuation: v.value, at_floor: v.at_floor, value: b.to_string() }
                })
                .collect()
        })
        .collect();
    Ok(serde_json::to_string(&table).expect("table serializes"))
}

#[derive(Serialize)]
struct OrbitSummary {
    prime: u64,
    preperiod: usize,
    period: usize,
    points: Vec<Vec<u64>>,
}

/// The orbit of a model's start point modulo `prime`; `prime = 0` picks the
/// smallest admissible prime.
pub fn residue_orbit_json(model_json: &str, prime: u64) -> Result<String, String> {
    let model = AffineModel::from_json(model_json).map_err(|e| e.to_string())?;
    let (p, orbit) = if prime == 0 {
        select_prime(&model, 5..PRIME_LIMIT).map_err(|e| e.to_string())?
    } else {
        (prime, admissible(&model, prime).map_err(|e| e.to_string())?)
    };
    let summary = OrbitSummary {
        prime: p,
        preperiod: orbit.preperiod,
        period: orbit.period,
        points: (0..orbit.preperiod + orbit.period).map(|n| orbit.point(n).to_vec()).collect(),
    };
    Ok(serde_json::to_string(&summary).expect("summary serializes"))
}

#[wasm_bindgen(js_name = recurrenceZeroSet)]
pub fn recurrence_zero_set(rec: &str, init: &str, precision: u32) -> Result<String, JsError> {
    recurrence_zero_set_json(rec, init, precision).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = interpolationStaircase)]
pub fn interpolation_staircase(map_json: &str, omega: &str, prime: u32, precision: u32) -> Result<String, JsError> {
    interpolation_staircase_json(map_json, omega, u64::from(prime), precision).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = residueOrbit)]
pub fn residue_orbit(model_json: &str, prime: u32) -> Result<String, JsError> {
    residue_orbit_json(model_json, u64::from(prime)).map_err(|e| JsError::new(&e))
}
