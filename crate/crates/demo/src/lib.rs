//! Browser bindings. Every export takes plain numbers or strings and returns a
//! JSON string, so the page needs no glue beyond `JSON.parse`.

use dmwalk::circuit::parse_circuit;
use dmwalk::compile::{compile, resource_formulas, resource_report};
use dmwalk::linalg::{self, CMat};
use dmwalk::oracle;
use dmwalk::scatter::{purity_from_wires, solve_frequency, survival_probability};
use dmwalk::widget::{self, WidgetGraph};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn widget_and_target(name: &str, param: f64) -> Result<(WidgetGraph, CMat), String> {
    let e = |e: dmwalk::Error| e.to_string();
    Ok(match name {
        "u2" => (widget::u2_widget(), linalg::to_dyn2(&linalg::u2())),
        "u2_core" => (widget::u2_core(), linalg::to_dyn2(&linalg::u2())),
        "phase" => {
            let m = param.round().clamp(1.0, 7.0) as u8;
            (
                widget::phase_widget(m).map_err(e)?,
                linalg::to_dyn2(&linalg::mat2_pow(&linalg::u1(), m as u32)),
            )
        }
        "dlambda" => (
            widget::dlambda_widget(param).map_err(e)?,
            widget::dlambda_target(param),
        ),
        _ => return Err(format!("unknown widget '{name}'")),
    })
}

/// Error against the operating-point target and total reflection across `k`.
pub fn sweep(
    name: &str,
    param: f64,
    k_from: f64,
    k_to: f64,
    steps: usize,
) -> Result<Value, String> {
    let (w, target) = widget_and_target(name, param)?;
    let steps = steps.clamp(2, 2000);
    let mut ks = Vec::with_capacity(steps);
    let mut err = Vec::with_capacity(steps);
    let mut refl = Vec::with_capacity(steps);
    for i in 0..steps {
        let k = k_from + (k_to - k_from) * i as f64 / (steps - 1) as f64;
        let Ok(s) = widget::solve_smatrix(&w, k) else {
            continue;
        };
        let (e, _) = linalg::phase_aligned_error(&s.t, &target);
        ks.push(k);
        err.push(e);
        refl.push(s.r.norm_squared() / s.r.ncols() as f64);
    }
    Ok(json!({ "widget": w.name, "nodes": w.n_nodes, "k": ks, "max_err": err, "reflection": refl }))
}

/// One qubit prepared by `prep` (gate names separated by spaces), then one channel.
pub fn channel(prep: &str, kind: &str, p: f64) -> Result<Value, String> {
    let mut text = String::from("qubits 1\nmode dm\n");
    for g in prep.split_whitespace() {
        text.push_str(&format!("gate {g} 0\n"));
    }
    match kind {
        "depol" => text.push_str(&format!("channel depol 0 p={p}\n")),
        "erase" => text.push_str("channel erase 0\n"),
        "none" => {}
        _ => return Err(format!("unknown channel '{kind}'")),
    }
    let spec = parse_circuit(&text).map_err(|e| e.to_string())?;
    let sg = compile(&spec).map_err(|e| e.to_string())?;
    let w = solve_frequency(&sg, dmwalk::K_OPERATING).map_err(|e| e.to_string())?;
    let rho = oracle::simulate(&spec).map_err(|e| e.to_string())?;
    let cmp = oracle::compare_vec(&w.amps, &rho, 1e-8).map_err(|e| e.to_string())?;
    let before = {
        let mut s = spec.clone();
        s.ops
            .retain(|op| matches!(op, dmwalk::circuit::CircuitOp::Gate(_)));
        oracle::purity(&oracle::simulate(&s).map_err(|e| e.to_string())?)
    };
    Ok(json!({
        "labels": w.label_strings(),
        "amps": w.amps.iter().map(|a| [a.re, a.im]).collect::<Vec<_>>(),
        "purity": purity_from_wires(&w),
        "purity_before": before,
        "survival": survival_probability(&w),
        "drain": w.drain_total,
        "rescale": w.rescale_applied,
        "oracle_error": cmp.max_abs_err,
        "nodes": sg.graph.n_nodes,
        "drains": sg.drain_ports.len(),
    }))
}

/// Open-model and purification sizes, plus compiled node counts for a depolarizing chain.
pub fn resources(n: usize, t: usize, f: f64) -> Result<Value, String> {
    if n == 0 || n > 3 || !(0.0..=1.0).contains(&f) {
        return Err("need 1 ≤ n ≤ 3 and 0 ≤ f ≤ 1".into());
    }
    let ft = (f * t as f64).round() as usize;
    let r = resource_formulas(n, t, ft);
    let compiled = if t <= 64 {
        let mut text = format!("qubits {n}\nmode dm\n");
        let mut channels = 0;
        for i in 0..t {
            text.push_str(&format!("gate h {}\n", i % n));
            if (channels as f64) < f * (i + 1) as f64 - 1e-9 {
                text.push_str(&format!("channel depol {} p=0.3\n", i % n));
                channels += 1;
            }
        }
        let spec = parse_circuit(&text).map_err(|e| e.to_string())?;
        compile(&spec)
            .ok()
            .map(|sg| resource_report(&spec, Some(&sg)))
    } else {
        None
    };
    Ok(json!({ "formulas": r, "compiled": compiled }))
}

fn to_js(v: Result<Value, String>) -> Result<String, JsError> {
    v.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn widget_sweep(
    name: &str,
    param: f64,
    k_from: f64,
    k_to: f64,
    steps: usize,
) -> Result<String, JsError> {
    to_js(sweep(name, param, k_from, k_to, steps))
}

#[wasm_bindgen]
pub fn channel_explore(prep: &str, kind: &str, p: f64) -> Result<String, JsError> {
    to_js(channel(prep, kind, p))
}

#[wasm_bindgen]
pub fn resource_table(n: usize, t: usize, f: f64) -> Result<String, JsError> {
    to_js(resources(n, t, f))
}
