//! Run reports and their byte-stable JSON encoding.
//!
//! Floats are written as `{:.16e}` (17 significant digits, exact round trip),
//! complex numbers as `[re, im]`, non-finite values as `null`. Field order is
//! the struct order.

use std::io;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::circuit::{CircuitSpec, Mode};
use crate::compile::{ResourceReport, ScatterGraph};
use crate::error::Result;
use crate::linalg::C64;
use crate::oracle::CompareReport;
use crate::scatter::{self, TimeDomainResult, WireAmplitudes};

/// Pretty printer with fixed-width float output.
pub struct StableFormatter<'a> {
    inner: PrettyFormatter<'a>,
}

impl Default for StableFormatter<'_> {
    fn default() -> Self {
        Self {
            inner: PrettyFormatter::with_indent(b"  "),
        }
    }
}

impl Formatter for StableFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Serializes `value` with [`StableFormatter`].
pub fn to_stable_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, StableFormatter::default());
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// Ordered `label → [re, im]` map.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(from = "std::collections::BTreeMap<String, [f64; 2]>")]
pub struct WireMap(pub Vec<(String, [f64; 2])>);

impl From<std::collections::BTreeMap<String, [f64; 2]>> for WireMap {
    fn from(m: std::collections::BTreeMap<String, [f64; 2]>) -> Self {
        Self(m.into_iter().collect())
    }
}

impl Serialize for WireMap {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

impl WireMap {
    pub fn from_amplitudes(w: &WireAmplitudes) -> Self {
        Self(
            w.label_strings()
                .into_iter()
                .zip(&w.amps)
                .map(|(l, a)| (l, [a.re, a.im]))
                .collect(),
        )
    }

    pub fn get(&self, label: &str) -> Option<C64> {
        self.0
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, v)| C64::new(v[0], v[1]))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeDomainSummary {
    pub sigma: f64,
    pub lead_len: usize,
    pub t_max: f64,
    pub t_final: f64,
    pub steps: usize,
    pub backscatter: f64,
    pub filtered_backscatter: f64,
    pub max_norm_drift: f64,
    pub wires: WireMap,
    /// Largest `|t_time − t_freq|` over kept wires, when both solvers ran.
    pub max_deviation_from_frequency: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub circuit: String,
    pub n_qubits: usize,
    pub mode: Mode,
    pub k: f64,
    pub solver: String,
    pub wires: WireMap,
    pub purity: f64,
    /// `2^m · Σ_kept |amp|²` after `m` partial traces.
    pub subsystem_purity: Option<f64>,
    pub survival: f64,
    pub drain_total: f64,
    pub reflection: f64,
    pub rescale_applied: f64,
    pub global_phase: f64,
    pub abstract_graph: bool,
    pub time_domain: Option<TimeDomainSummary>,
    pub verification: Option<CompareReport>,
    pub resources: ResourceReport,
}

impl RunReport {
    /// Builds a report from whichever solver outputs are present (frequency preferred for `wires`).
    pub fn new(
        spec: &CircuitSpec,
        graph: &ScatterGraph,
        freq: Option<&WireAmplitudes>,
        time: Option<&TimeDomainResult>,
        verification: Option<CompareReport>,
    ) -> Self {
        let primary = freq
            .or(time.map(|t| &t.amplitudes))
            .expect("at least one solver result");
        let solver = match (freq.is_some(), time.is_some()) {
            (true, true) => "both",
            (true, false) => "frequency",
            _ => "timedomain",
        };
        let time_domain = time.map(|t| TimeDomainSummary {
            sigma: t.run.config.sigma,
            lead_len: t.run.config.lead_len,
            t_max: t.run.config.t_max.unwrap_or(f64::NAN),
            t_final: t.run.t_final,
            steps: t.run.steps,
            backscatter: t.run.backscatter,
            filtered_backscatter: t.filtered_backscatter,
            max_norm_drift: t.run.max_norm_drift,
            wires: WireMap::from_amplitudes(&t.amplitudes),
            max_deviation_from_frequency: freq.map(|f| {
                f.amps
                    .iter()
                    .zip(&t.amplitudes.amps)
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max)
            }),
        });
        Self {
            circuit: spec.name.clone(),
            n_qubits: spec.n_qubits,
            mode: spec.mode,
            k: primary.k,
            solver: solver.into(),
            wires: WireMap::from_amplitudes(primary),
            purity: scatter::purity_from_wires(primary),
            subsystem_purity: (primary.n_kept < spec.n_qubits)
                .then(|| scatter::subsystem_purity(primary)),
            survival: scatter::survival_probability(primary),
            drain_total: primary.drain_total,
            reflection: primary.reflection,
            rescale_applied: primary.rescale_applied,
            global_phase: primary.global_phase,
            abstract_graph: graph.is_abstract,
            time_domain,
            verification,
            resources: crate::compile::resource_report(spec, Some(graph)),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        to_stable_json(self)
    }
}

/// One record of a momentum sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: f64,
    pub wires: WireMap,
    pub purity: f64,
    pub survival: f64,
    pub reflection: f64,
}

impl SweepPoint {
    pub fn new(w: &WireAmplitudes) -> Self {
        Self {
            k: w.k,
            wires: WireMap::from_amplitudes(w),
            purity: scatter::purity_from_wires(w),
            survival: scatter::survival_probability(w),
            reflection: w.reflection,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::parse_circuit;
    use crate::compile::compile;

    fn report(text: &str) -> RunReport {
        let spec = parse_circuit(text).unwrap();
        let g = compile(&spec).unwrap();
        let w = scatter::solve_frequency(&g, crate::K_OPERATING).unwrap();
        RunReport::new(&spec, &g, Some(&w), None, None)
    }

    #[test]
    fn floats_have_17_digits() {
        let s = to_stable_json(&[0.1f64, 1.0, -2.5e-300, f64::NAN]).unwrap();
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        assert!(s.contains("1.0000000000000000e0"));
        assert!(s.contains("-2.5000000000000000e-300"));
        assert!(s.contains("null"));
        let back: Vec<Option<f64>> = serde_json::from_str(&s).unwrap();
        assert_eq!(back[0], Some(0.1));
    }

    #[test]
    fn wire_order_and_determinism() {
        let text = "qubits 1\nmode dm\ngate h 0\nchannel depol 0 p=0.3\n";
        let a = report(text).to_json().unwrap();
        let b = report(text).to_json().unwrap();
        assert_eq!(a, b);
        let v: serde_json::Value = serde_json::from_str(&a).unwrap();
        let pos: Vec<usize> = ["\"circuit\"", "\"n_qubits\"", "\"mode\"", "\"k\""]
            .iter()
            .map(|k| a.find(k).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        let wires = v["wires"].as_object().unwrap();
        assert_eq!(wires.len(), 4);
        assert!((v["purity"].as_f64().unwrap() - v["survival"].as_f64().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn subsystem_purity_present_after_trace() {
        let r = report("qubits 2\nmode dm\ngate h 0\ngate cnot 0 1\ntrace_out 1\n");
        assert!((r.subsystem_purity.unwrap() - 0.5).abs() < 1e-10);
        assert!((r.purity - 0.25).abs() < 1e-10);
        assert!(report("qubits 1\nmode dm\n").subsystem_purity.is_none());
    }
}
