//! Circuit → scattering graph.
//!
//! Every live wire has a *frontier*: the last node placed on it. Elements are
//! appended at the frontier through a unit edge. Each element multiplies the
//! wire amplitudes at k = π/4 by a known matrix times `ω^units`:
//!
//! | element        | nodes | units | map                 |
//! |----------------|-------|-------|---------------------|
//! | chain node     | 1     | 1     | `ω`                 |
//! | `U2` widget    | 6     | 1     | `ω·U2` on a pair    |
//! | damping `D(λ)` | 2     | 2     | `λ·ω²`, drain `√(1−λ²)` |
//! | ideal block    | n_out | 1     | `ω·M`               |
//! | crossing       | 0     | 0     | relabel             |
//!
//! Within a fiber, wires not touched by a `U2` get one chain node so that each
//! step scales the whole column by the same power of ω. The common power over
//! the circuit is the nominal length `L₀`, divided out by the solver.
//!
//! DM mode uses `2^{2n}` wires, wire `i·2ⁿ + j` carrying `ρ_ij`. A gate `U`
//! runs its synthesized sequence on ket fibers `(i0·j, i1·j)` and the
//! conjugate sequence on bra fibers `(i·j0, i·j1)`; the global phases of the
//! two cancel. A channel runs its plan on fibers in local order
//! `(ρ00, ρ11, ρ01, ρ10)`. A trailing partial trace applies `H` to
//! `(α0β0, α1β1)`, keeps the first output and discards the rest.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::channel::{plan_channel, ChannelPlan, PlanUnitary};
use crate::circuit::{self, qubit_mask, CircuitOp, CircuitSpec, Gate, Mode};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::synth::{self, conjugate_sequence, GateSequence, Prim};
use crate::widget::{self, IdealBlock, Port, WidgetGraph};

pub const DEFAULT_MAX_NODES: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompileOptions {
    pub allow_ideal: bool,
    pub max_nodes: usize,
    pub max_qubits: usize,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self {
            allow_ideal: false,
            max_nodes: DEFAULT_MAX_NODES,
            max_qubits: circuit::DEFAULT_MAX_QUBITS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WireLabel {
    /// Basis state `|i⟩` (pure mode).
    Basis { i: usize },
    /// Density-matrix element `ρ_ij`.
    Element { i: usize, j: usize },
}

impl WireLabel {
    pub fn describe(&self, n: usize) -> String {
        let bits = |x: usize| format!("{:0width$b}", x, width = n.max(1));
        match self {
            WireLabel::Basis { i } => format!("|{}>", bits(*i)),
            WireLabel::Element { i, j } => format!("({},{})", bits(*i), bits(*j)),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Terminal {
    /// Index into `graph.out_ports`.
    pub port: usize,
    pub label: WireLabel,
    /// Qubit count of the label's index space.
    pub bits: usize,
    /// False for wires discarded by a partial trace.
    pub kept: bool,
    /// Phase units accumulated along the wire's track.
    pub length: i64,
    /// `length − L₀`; the intended extra phase is `π/4 · offset`.
    pub offset: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScatterGraph {
    pub graph: WidgetGraph,
    pub mode: Mode,
    pub n_qubits: usize,
    /// Qubits left after partial traces.
    pub n_kept: usize,
    pub in_labels: Vec<WireLabel>,
    pub start_port: usize,
    pub terminals: Vec<Terminal>,
    pub drain_ports: Vec<usize>,
    pub rescale_log: Vec<f64>,
    pub nominal_length: i64,
    /// `√2` per traced qubit: kept amplitudes times this give the reduced matrix.
    pub trace_scale: f64,
    pub is_abstract: bool,
    pub gate_count: usize,
    pub channel_count: usize,
}

impl ScatterGraph {
    pub fn rescale_product(&self) -> f64 {
        self.rescale_log.iter().product()
    }

    pub fn kept_terminals(&self) -> impl Iterator<Item = &Terminal> {
        self.terminals.iter().filter(|t| t.kept)
    }

    /// Dimension `d` of the reconstructed state (`ρ` is `d×d`, ψ has `d` entries).
    pub fn state_dim(&self) -> usize {
        1 << self.n_kept
    }
}

#[derive(Debug, Clone)]
struct Slot {
    node: usize,
    len: i64,
}

struct Builder {
    g: WidgetGraph,
    slots: Vec<Slot>,
    drains: Vec<Port>,
    l0: i64,
    max_nodes: usize,
    is_abstract: bool,
}

impl Builder {
    fn new(n_wires: usize, max_nodes: usize) -> Result<Self> {
        if n_wires > max_nodes {
            return Err(Error::GraphTooLarge {
                nodes: n_wires,
                limit: max_nodes,
            });
        }
        let mut g = WidgetGraph::new("circuit", n_wires);
        g.in_ports = (0..n_wires).map(Port::at).collect();
        Ok(Self {
            g,
            slots: (0..n_wires).map(|node| Slot { node, len: 0 }).collect(),
            drains: Vec::new(),
            l0: 0,
            max_nodes,
            is_abstract: false,
        })
    }

    fn new_node(&mut self) -> Result<usize> {
        if self.g.n_nodes >= self.max_nodes {
            return Err(Error::GraphTooLarge {
                nodes: self.g.n_nodes + 1,
                limit: self.max_nodes,
            });
        }
        self.g.n_nodes += 1;
        Ok(self.g.n_nodes - 1)
    }

    fn chain(&mut self, w: usize, m: usize) -> Result<()> {
        for _ in 0..m {
            let n = self.new_node()?;
            self.g.edge(self.slots[w].node, n, 1.0);
            self.slots[w].node = n;
        }
        self.slots[w].len += m as i64;
        Ok(())
    }

    fn u2(&mut self, a: usize, b: usize, template: &WidgetGraph) -> Result<()> {
        let base = self.g.n_nodes;
        for _ in 0..template.n_nodes {
            self.new_node()?;
        }
        for e in &template.edges {
            self.g.edge(base + e.a, base + e.b, e.hopping);
        }
        for (k, w) in [a, b].into_iter().enumerate() {
            self.g
                .edge(self.slots[w].node, base + template.in_ports[k].node, 1.0);
            self.slots[w].node = base + template.out_ports[k].node;
            self.slots[w].len += 1;
        }
        Ok(())
    }

    fn damp(&mut self, w: usize, lambda: f64) -> Result<()> {
        let c = self.new_node()?;
        self.g.edge(self.slots[w].node, c, 1.0);
        let mu = (1.0 - lambda * lambda).max(0.0).sqrt();
        if mu > 0.0 {
            self.drains.push(Port {
                node: c,
                coupling: mu,
            });
        }
        let next = self.new_node()?;
        if lambda > 0.0 {
            self.g.edge(c, next, lambda);
        }
        self.slots[w].node = next;
        self.slots[w].len += 2;
        Ok(())
    }

    fn ideal(&mut self, wires: &[usize], m: &CMat) -> Result<()> {
        let inputs: Vec<usize> = wires.iter().map(|&w| self.slots[w].node).collect();
        let mut outputs = Vec::with_capacity(wires.len());
        for _ in wires {
            outputs.push(self.new_node()?);
        }
        for (k, &w) in wires.iter().enumerate() {
            self.slots[w].node = outputs[k];
            self.slots[w].len += 1;
        }
        self.g.ideal_blocks.push(IdealBlock {
            inputs,
            outputs,
            matrix: m.clone(),
        });
        self.is_abstract = true;
        Ok(())
    }

    /// Runs `seq` on every fiber; returns the column's phase units.
    fn apply_seq(
        &mut self,
        fibers: &[Vec<usize>],
        seq: &GateSequence,
        template: &WidgetGraph,
    ) -> Result<i64> {
        let mut units = 0i64;
        for p in &seq.ops {
            match p {
                Prim::U1Pow { wire, m } => {
                    for f in fibers {
                        self.chain(f[*wire], *m as usize)?;
                    }
                }
                Prim::U2Pow { a, b, m } => {
                    for _ in 0..*m {
                        for f in fibers {
                            self.u2(f[*a], f[*b], template)?;
                            for (k, &w) in f.iter().enumerate() {
                                if k != *a && k != *b {
                                    self.chain(w, 1)?;
                                }
                            }
                        }
                        units += 1;
                    }
                }
                Prim::Cross { perm } => {
                    for f in fibers {
                        let old: Vec<Slot> = f.iter().map(|&w| self.slots[w].clone()).collect();
                        for (k, s) in old.into_iter().enumerate() {
                            self.slots[f[perm[k]]] = s;
                        }
                    }
                }
            }
        }
        for f in fibers {
            for &w in f {
                self.chain(w, seq.pad as usize)?;
            }
        }
        Ok(units)
    }

    fn apply_plan_unitary(
        &mut self,
        fibers: &[Vec<usize>],
        u: &PlanUnitary,
        template: &WidgetGraph,
    ) -> Result<i64> {
        match u {
            PlanUnitary::Widgets(seq) => self.apply_seq(fibers, &seq.clone().exact(), template),
            PlanUnitary::Ideal(m) => {
                for f in fibers {
                    self.ideal(f, m)?;
                }
                Ok(1)
            }
        }
    }

    fn permute(&mut self, image: impl Fn(usize) -> usize) {
        let old = self.slots.clone();
        for (w, s) in old.into_iter().enumerate() {
            self.slots[image(w)] = s;
        }
    }
}

fn gate_sequence(g: &Gate) -> Result<GateSequence> {
    let m = g.matrix().expect("single-qubit gate");
    synth::synthesize_unitary(&linalg::to_dyn2(&m))
}

fn cnot_image(n: usize, control: usize, target: usize) -> impl Fn(usize) -> usize {
    let (cm, tm) = (qubit_mask(n, control), qubit_mask(n, target));
    move |i| if i & cm != 0 { i ^ tm } else { i }
}

pub fn compile(spec: &CircuitSpec) -> Result<ScatterGraph> {
    compile_with(spec, &CompileOptions::default())
}

pub fn compile_with(spec: &CircuitSpec, opts: &CompileOptions) -> Result<ScatterGraph> {
    let diags = circuit::validate_with_limit(spec, opts.max_qubits);
    if !diags.is_empty() {
        return Err(Error::Invalid(
            diags.iter().map(|d| d.to_string()).collect(),
        ));
    }
    let template = widget::u2_widget();
    let n = spec.n_qubits;
    let d = 1usize << n;
    let mut plans: Vec<ChannelPlan> = Vec::new();
    match spec.mode {
        Mode::Pure => {
            let mut b = Builder::new(d, opts.max_nodes)?;
            for op in &spec.ops {
                match op {
                    CircuitOp::Gate(Gate::Cnot { control, target }) => {
                        b.permute(cnot_image(n, *control, *target))
                    }
                    CircuitOp::Gate(g) => {
                        let seq = gate_sequence(g)?.exact();
                        let mask = qubit_mask(n, g.qubits()[0]);
                        let fibers: Vec<Vec<usize>> = (0..d)
                            .filter(|i| i & mask == 0)
                            .map(|i| vec![i, i | mask])
                            .collect();
                        b.l0 += b.apply_seq(&fibers, &seq, &template)?;
                    }
                    _ => unreachable!("validation rejects channels and traces in pure mode"),
                }
            }
            let labels: Vec<WireLabel> = (0..d).map(|i| WireLabel::Basis { i }).collect();
            Ok(finish(
                b,
                spec,
                labels.clone(),
                labels,
                Vec::new(),
                n,
                1.0,
                Vec::new(),
            ))
        }
        Mode::Dm => {
            let mut b = Builder::new(d * d, opts.max_nodes)?;
            let mut alive = n;
            let mut discarded: Vec<(Slot, WireLabel, usize)> = Vec::new();
            let mut trace_scale = 1.0;
            let mut rescale_log = Vec::new();
            for op in &spec.ops {
                let dd = 1usize << alive;
                match op {
                    CircuitOp::Gate(Gate::Cnot { control, target }) => {
                        let pi = cnot_image(n, *control, *target);
                        b.permute(|w| pi(w / dd) * dd + pi(w % dd));
                    }
                    CircuitOp::Gate(g) => {
                        let ket = gate_sequence(g)?;
                        let bra = conjugate_sequence(&ket);
                        let mask = qubit_mask(n, g.qubits()[0]);
                        let mut ket_fibers = Vec::new();
                        let mut bra_fibers = Vec::new();
                        for i in 0..dd {
                            for j in 0..dd {
                                if i & mask == 0 {
                                    ket_fibers.push(vec![i * dd + j, (i | mask) * dd + j]);
                                }
                                if j & mask == 0 {
                                    bra_fibers.push(vec![i * dd + j, i * dd + (j | mask)]);
                                }
                            }
                        }
                        b.l0 += b.apply_seq(&ket_fibers, &ket, &template)?;
                        b.l0 += b.apply_seq(&bra_fibers, &bra, &template)?;
                    }
                    CircuitOp::Channel(ch) => {
                        let plan = plan_channel(ch, opts.allow_ideal)?;
                        let mask = qubit_mask(n, ch.qubit());
                        let mut fibers = Vec::new();
                        for i in (0..dd).filter(|i| i & mask == 0) {
                            for j in (0..dd).filter(|j| j & mask == 0) {
                                fibers.push(
                                    circuit::LOCAL_WIRE_ORDER
                                        .iter()
                                        .map(|&(a, c)| {
                                            let r = if a == 1 { i | mask } else { i };
                                            let s = if c == 1 { j | mask } else { j };
                                            r * dd + s
                                        })
                                        .collect::<Vec<_>>(),
                                );
                            }
                        }
                        b.l0 += b.apply_plan_unitary(&fibers, &plan.pre, &template)?;
                        let damped = plan.damped_wires();
                        if !damped.is_empty() {
                            for f in &fibers {
                                for (k, &w) in f.iter().enumerate() {
                                    if damped.contains(&k) {
                                        b.damp(w, plan.lambdas[k])?;
                                    } else {
                                        b.chain(w, 2)?;
                                    }
                                }
                            }
                            b.l0 += 2;
                        }
                        b.l0 += b.apply_plan_unitary(&fibers, &plan.post, &template)?;
                        if plan.rescale != 1.0 {
                            rescale_log.push(plan.rescale);
                        }
                        plans.push(plan);
                    }
                    CircuitOp::TraceOut { q } => {
                        // position of q among the remaining qubits (traces are trailing and
                        // validated distinct, so earlier traced qubits are all removed)
                        let traced_before = spec
                            .ops
                            .iter()
                            .take_while(|o| !std::ptr::eq(*o, op))
                            .filter_map(|o| match o {
                                CircuitOp::TraceOut { q } => Some(*q),
                                _ => None,
                            })
                            .collect::<Vec<_>>();
                        let pos = q - traced_before.iter().filter(|&&t| t < *q).count();
                        let mask = qubit_mask(alive, pos);
                        let h = synth::synthesize_unitary(&linalg::to_dyn2(&linalg::hadamard()))?
                            .exact();
                        let mut fibers = Vec::new();
                        for a in (0..dd).filter(|a| a & mask == 0) {
                            for c in (0..dd).filter(|c| c & mask == 0) {
                                fibers.push(vec![a * dd + c, (a | mask) * dd + (c | mask)]);
                            }
                        }
                        b.l0 += b.apply_seq(&fibers, &h, &template)?;
                        let drop_bit = |x: usize| {
                            let low = x & (mask - 1);
                            ((x >> 1) & !(mask - 1)) | low
                        };
                        let nd = dd / 2;
                        let mut next = vec![Slot { node: 0, len: 0 }; nd * nd];
                        for (w, slot) in b.slots.iter().enumerate() {
                            let (a, c) = (w / dd, w % dd);
                            if a & mask == 0 && c & mask == 0 {
                                next[drop_bit(a) * nd + drop_bit(c)] = slot.clone();
                            } else {
                                discarded.push((
                                    slot.clone(),
                                    WireLabel::Element { i: a, j: c },
                                    alive,
                                ));
                            }
                        }
                        b.slots = next;
                        alive -= 1;
                        trace_scale *= std::f64::consts::SQRT_2;
                    }
                }
            }
            let in_labels: Vec<WireLabel> = (0..d * d)
                .map(|w| WireLabel::Element { i: w / d, j: w % d })
                .collect();
            let dd = 1usize << alive;
            let out_labels: Vec<WireLabel> = (0..dd * dd)
                .map(|w| WireLabel::Element {
                    i: w / dd,
                    j: w % dd,
                })
                .collect();
            Ok(finish(
                b,
                spec,
                in_labels,
                out_labels,
                discarded,
                alive,
                trace_scale,
                rescale_log,
            ))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    mut b: Builder,
    spec: &CircuitSpec,
    in_labels: Vec<WireLabel>,
    out_labels: Vec<WireLabel>,
    discarded: Vec<(Slot, WireLabel, usize)>,
    n_kept: usize,
    trace_scale: f64,
    rescale_log: Vec<f64>,
) -> ScatterGraph {
    let l0 = b.l0;
    let mut terminals = Vec::new();
    let live: Vec<(Slot, WireLabel, usize, bool)> = b
        .slots
        .iter()
        .cloned()
        .zip(out_labels)
        .map(|(s, l)| (s, l, n_kept, true))
        .chain(
            discarded
                .into_iter()
                .map(|(s, l, bits)| (s, l, bits, false)),
        )
        .collect();
    for (s, label, bits, kept) in live {
        terminals.push(Terminal {
            port: b.g.out_ports.len(),
            label,
            bits,
            kept,
            length: s.len,
            offset: s.len - l0,
        });
        b.g.out_ports.push(Port::at(s.node));
    }
    let mut drain_ports = Vec::new();
    for p in b.drains.drain(..) {
        drain_ports.push(b.g.out_ports.len());
        b.g.out_ports.push(p);
    }
    b.g.name = spec.name.clone();
    ScatterGraph {
        is_abstract: b.is_abstract,
        graph: b.g,
        mode: spec.mode,
        n_qubits: spec.n_qubits,
        n_kept,
        in_labels,
        start_port: 0,
        terminals,
        drain_ports,
        rescale_log,
        nominal_length: l0,
        trace_scale,
        gate_count: spec.gate_count(),
        channel_count: spec.channel_count(),
    }
}

// ---------------------------------------------------------------- resources

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub n: usize,
    pub t: usize,
    pub ft: usize,
    /// `fT / T`; absent when `T = 0`.
    pub f: Option<f64>,
    pub wires_actual: Option<usize>,
    pub nodes_actual: Option<usize>,
    pub drains_actual: Option<usize>,
    pub wires_formula_open: f64,
    /// `2^{2n}·(T + fT)`, i.e. `2^{2n}·T·(1+f)` without the per-widget constant.
    pub nodes_formula_open: f64,
    /// `nodes_actual / nodes_formula_open`, the construction's constant.
    pub nodes_constant: Option<f64>,
    pub wires_formula_purif: f64,
    pub nodes_formula_purif: f64,
    pub survival_lower_bound: f64,
    /// `2^{2·min(fT, n)}`: bound on the expected number of repetitions.
    pub repetition_bound: f64,
    /// `fT > n`: purification wires grow as `2^{fT}` while the open model stays linear in `fT`.
    pub open_model_advantage: bool,
    pub widget_layouts_note: String,
}

pub fn resource_formulas(n: usize, t: usize, ft: usize) -> ResourceReport {
    let four_n = 4f64.powi(n as i32);
    let purif = 2f64.powi((n + ft) as i32);
    let steps = (t + ft) as f64;
    ResourceReport {
        n,
        t,
        ft,
        f: (t > 0).then(|| ft as f64 / t as f64),
        wires_actual: None,
        nodes_actual: None,
        drains_actual: None,
        wires_formula_open: four_n * (1.0 + ft as f64),
        nodes_formula_open: four_n * steps,
        nodes_constant: None,
        wires_formula_purif: purif,
        nodes_formula_purif: purif * steps,
        survival_lower_bound: 0.25f64.powi(ft as i32).max(0.25f64.powi(n as i32)),
        repetition_bound: 4f64.powi(ft.min(n) as i32),
        open_model_advantage: ft > n,
        widget_layouts_note: "node counts use this implementation's widget layouts (U2: 6 nodes, \
                              phase: path length, crossing: relabel, D: 2 nodes)"
            .into(),
    }
}

pub fn resource_report(spec: &CircuitSpec, graph: Option<&ScatterGraph>) -> ResourceReport {
    let mut r = resource_formulas(spec.n_qubits, spec.gate_count(), spec.channel_count());
    if let Some(g) = graph {
        r.wires_actual = Some(g.terminals.len() + g.drain_ports.len());
        r.nodes_actual = Some(g.graph.n_nodes);
        r.drains_actual = Some(g.drain_ports.len());
        if r.nodes_formula_open > 0.0 {
            r.nodes_constant = Some(g.graph.n_nodes as f64 / r.nodes_formula_open);
        }
    }
    r
}

// ---------------------------------------------------------------- DOT

pub fn export_dot(sg: &ScatterGraph) -> String {
    let g = &sg.graph;
    let n = sg.n_qubits;
    let mut s = String::new();
    let _ = writeln!(s, "graph \"{}\" {{", g.name.replace('"', "'"));
    let _ = writeln!(s, "  rankdir=LR;");
    let _ = writeln!(s, "  node [shape=point];");
    for (p, port) in g.in_ports.iter().enumerate() {
        let style = if p == sg.start_port {
            ", color=blue"
        } else {
            ""
        };
        let _ = writeln!(
            s,
            "  in{p} [shape=box, label=\"in {}\"{style}];",
            sg.in_labels[p].describe(n)
        );
        let _ = writeln!(s, "  in{p} -- n{};", port.node);
    }
    for e in &g.edges {
        if e.hopping == 1.0 {
            let _ = writeln!(s, "  n{} -- n{};", e.a, e.b);
        } else {
            let _ = writeln!(s, "  n{} -- n{} [label=\"{}\"];", e.a, e.b, e.hopping);
        }
    }
    for (b, blk) in g.ideal_blocks.iter().enumerate() {
        let _ = writeln!(s, "  block{b} [shape=box3d, label=\"ideal\"];");
        for i in &blk.inputs {
            let _ = writeln!(s, "  n{i} -- block{b} [style=bold];");
        }
        for o in &blk.outputs {
            let _ = writeln!(s, "  block{b} -- n{o} [style=bold];");
        }
    }
    for t in &sg.terminals {
        let port = g.out_ports[t.port];
        let style = if t.kept { "" } else { ", style=dashed" };
        let _ = writeln!(
            s,
            "  out{} [shape=box, label=\"{}\"{style}];",
            t.port,
            t.label.describe(t.bits)
        );
        let _ = writeln!(s, "  n{} -- out{};", port.node, t.port);
    }
    for &p in &sg.drain_ports {
        let port = g.out_ports[p];
        let _ = writeln!(s, "  drain{p} [shape=doublecircle, color=red, label=\"\"];");
        let _ = writeln!(
            s,
            "  n{} -- drain{p} [color=red, label=\"{}\"];",
            port.node, port.coupling
        );
    }
    s.push_str("}\n");
    s
}
