use gameclaims_web::{coalition_bounds, project, tranche_tree};
use serde_json::{json, Value};

fn call(f: fn(&str) -> String, input: Value) -> Value {
    serde_json::from_str(&f(&input.to_string())).unwrap()
}

#[test]
fn projection_clips_at_the_lower_bound() {
    // (3, -1) onto x >= (0, 0), x1 + x2 = 1: shift both by -1/2, clip the second.
    let out = call(project, json!({ "point": ["3", "-1"], "lower": ["0", "0"], "total": "1" }));
    assert_eq!(out["projection"], json!(["1", "0"]));
    assert_eq!(out["at_bound"], json!([2]));
}

#[test]
fn projection_inside_the_simplex_is_the_identity() {
    let out = call(project, json!({ "point": ["1/3", "2/3"], "lower": ["0", "0"], "total": "1" }));
    assert_eq!(out["projection"], json!(["1/3", "2/3"]));
    assert_eq!(out["at_bound"], json!([]));
}

#[test]
fn projection_errors_are_reported() {
    let out = call(project, json!({ "point": ["1"], "lower": ["2"], "total": "1" }));
    assert!(out["error"].as_str().unwrap().contains("empty simplex"));
    let out = call(project, json!({ "point": ["x"], "lower": ["0"], "total": "1" }));
    assert!(out["error"].is_string());
    assert!(project("not json").contains("error"));
}

fn reference_contract() -> Value {
    json!({
        "lattice": { "initial_price": "4", "up": "2", "down": "1/2", "steps": 2 },
        "legs": [{ "kind": "call", "strike": "4" }, { "kind": "put", "strike": "4" }],
        "decision_dates": [1, 2],
        "maturity": 2,
        "puts": [[["0", "1"], ["2", "1"]], [["0", "2"], ["-1", "0"], ["10", "0"]]],
    })
}

#[test]
fn tranche_tree_values() {
    let out = call(tranche_tree, reference_contract());
    assert_eq!(out["option_prices"], json!(["4/3", "4/3"]));
    assert_eq!(out["initial"], json!(["1", "5/3"]));
    let top = &out["levels"][1]["nodes"][2];
    assert_eq!(top["price"], json!("16"));
    assert_eq!(top["value"], json!(["12", "0"]));
}

#[test]
fn tranche_tree_reports_zero_sum_failures() {
    let mut input = reference_contract();
    input["puts"][1][2] = json!(["10", "5"]);
    let out = call(tranche_tree, input);
    assert!(out["error"].as_str().unwrap().contains("zero-sum"));
}

#[test]
fn dilemma_bounds_are_inconsistent() {
    let out = call(
        coalition_bounds,
        json!({
            "actions": [["cooperate", "defect"], ["cooperate", "defect"]],
            "payoffs": [["1", "1"], ["-1", "2"], ["2", "-1"], ["0", "0"]],
        }),
    );
    assert_eq!(out["feasible"], json!(false));
    assert_eq!(out["witness"], Value::Null);
    assert_eq!(out["bounds"][2], json!({ "coalition": "{1,2}", "lower": "2", "upper": "2" }));
    assert!(out["conflict"].as_array().unwrap().contains(&json!("lower {1,2}")));
}

#[test]
fn saddle_matrix_bounds_are_consistent() {
    let out = call(
        coalition_bounds,
        json!({
            "actions": [["top", "bottom"], ["left", "right"]],
            "payoffs": [["2", "-2"], ["1", "-1"], ["3", "-3"], ["0", "0"]],
        }),
    );
    assert_eq!(out["feasible"], json!(true));
    assert_eq!(out["witness"], json!(["1", "-1"]));
}

#[test]
fn malformed_matrix_is_rejected() {
    let out = call(coalition_bounds, json!({ "actions": [["a", "b"]], "payoffs": [["1"]] }));
    assert!(out["error"].as_str().unwrap().contains("expected 2"));
}
