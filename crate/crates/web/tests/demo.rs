use dml_web::{interpolation_staircase_json, recurrence_zero_set_json, residue_orbit_json};
use serde_json::Value;

const NONLINEAR: &str = r#"{
  "dimension": 2,
  "map": [[{"exponents": [1, 0], "coefficient": "1"}, {"exponents": [0, 2], "coefficient": "1"}],
          [{"exponents": [0, 1], "coefficient": "1"}, {"exponents": [0, 0], "coefficient": "1"}]],
  "point": ["0", "0"],
  "variety": [[{"exponents": [1, 0], "coefficient": "1"}]]
}"#;

#[test]
fn period_two_recurrence() {
    let r: Value = serde_json::from_str(&recurrence_zero_set_json("0,1", "0,1", 12).unwrap()).unwrap();
    assert_eq!(r["progressions"], serde_json::json!([[2, 0]]));
    assert_eq!(r["exceptional"], serde_json::json!([]));
    assert_eq!(r["terms"].as_array().unwrap()[0..4], ["0", "1", "0", "1"]);
}

#[test]
fn fibonacci_recurrence() {
    let r: Value = serde_json::from_str(&recurrence_zero_set_json("1,1", "0,1", 12).unwrap()).unwrap();
    assert_eq!(r["exceptional"], serde_json::json!([0]));
    assert_eq!(r["terms"][10], "55");
}

#[test]
fn bad_input_is_reported() {
    assert!(recurrence_zero_set_json("1,x", "0,1", 12).is_err());
    assert!(recurrence_zero_set_json("1,1", "0,1", 400).is_err());
    assert!(interpolation_staircase_json("{", "1", 5, 8).is_err());
    assert!(residue_orbit_json(NONLINEAR, 6).is_err());
}

#[test]
fn staircase_of_a_geometric_map() {
    let map = r#"{"dimension": 1, "map": [[{"exponents": [1], "coefficient": "6"}]]}"#;
    let t: Value = serde_json::from_str(&interpolation_staircase_json(map, "1", 5, 8).unwrap()).unwrap();
    let vals: Vec<u64> = t[0].as_array().unwrap().iter().take(8).map(|c| c["valuation"].as_u64().unwrap()).collect();
    assert_eq!(vals, (0..8).collect::<Vec<_>>());
}

#[test]
fn residue_orbit_of_the_nonlinear_model() {
    let r: Value = serde_json::from_str(&residue_orbit_json(NONLINEAR, 0).unwrap()).unwrap();
    assert_eq!(r["prime"], 5);
    assert_eq!(r["preperiod"], 0);
    assert_eq!(r["period"], 5);
    // x_n = n(n-1)(2n-1)/6, y_n = n mod 5
    assert_eq!(r["points"], serde_json::json!([[0, 0], [0, 1], [1, 2], [0, 3], [4, 4]]));
}
