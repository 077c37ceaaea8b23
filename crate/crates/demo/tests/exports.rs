use dmwalk_demo::{channel, resources, sweep};

#[test]
fn u2_sweep_vanishes_at_operating_point() {
    let v = sweep("u2", 0.0, std::f64::consts::FRAC_PI_4, 2.0, 5).unwrap();
    assert!(v["max_err"][0].as_f64().unwrap() < 1e-10);
    assert!(v["reflection"][0].as_f64().unwrap() < 1e-20);
    assert!(v["reflection"][4].as_f64().unwrap() > 1e-3);
    assert_eq!(v["k"].as_array().unwrap().len(), 5);
    assert!(sweep("nope", 0.0, 0.1, 1.0, 3).is_err());
}

#[test]
fn dlambda_sweep_is_flat() {
    let v = sweep("dlambda", 0.6, 0.2, 2.9, 20).unwrap();
    assert!(v["max_err"]
        .as_array()
        .unwrap()
        .iter()
        .all(|e| e.as_f64().unwrap() < 1e-10));
}

#[test]
fn depolarizing_readouts() {
    let v = channel("", "depol", 0.3).unwrap();
    assert!((v["purity"].as_f64().unwrap() - 0.68).abs() < 1e-9);
    assert!((v["survival"].as_f64().unwrap() - 0.68).abs() < 1e-9);
    assert!(v["oracle_error"].as_f64().unwrap() < 1e-9);
    let e = channel("h", "erase", 0.0).unwrap();
    assert!((e["amps"][0][0].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((e["rescale"].as_f64().unwrap() - std::f64::consts::SQRT_2).abs() < 1e-12);
    assert!(channel("q", "depol", 0.1).is_err());
}

#[test]
fn resource_rows() {
    let v = resources(1, 4, 0.5).unwrap();
    assert_eq!(v["formulas"]["wires_formula_open"].as_f64(), Some(12.0));
    assert_eq!(
        v["compiled"]["drains_actual"].as_u64().map(|d| d <= 8),
        Some(true)
    );
    assert!(resources(0, 4, 0.5).is_err());
}
