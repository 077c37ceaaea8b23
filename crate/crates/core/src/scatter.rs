//! Solving compiled graphs.
//!
//! Frequency domain: one sparse solve with a unit incident wave on the start
//! port. Time domain: a Gaussian packet on a finite input lead, evolved with a
//! Chebyshev expansion of `e^{iHt}` (so that `e^{ikx}` travels toward +x at
//! `v = 2 sin k`) until it has left the graph, then read out on each output
//! lead against a free packet propagated for the same time.

use serde::{Deserialize, Serialize};

use crate::circuit::Mode;
use crate::compile::{ScatterGraph, WireLabel};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64, ONE, ZERO};
use crate::oracle::DensityMatrix;
use crate::widget::{Port, WidgetGraph};
use crate::K_OPERATING;

/// Reflection amplitude tolerated at the operating momentum.
pub const MODEL_REFLECTION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireAmplitudes {
    pub k: f64,
    pub mode: Mode,
    /// Qubits of the reconstructed state.
    pub n_kept: usize,
    pub labels: Vec<WireLabel>,
    /// Kept wires, global phase removed and rescaling undone.
    pub amps: Vec<C64>,
    /// Same correction, wires discarded by partial traces.
    pub discarded: Vec<C64>,
    pub drain_total: f64,
    /// Probability sent back out through input leads.
    pub reflection: f64,
    /// `k·L₀`, the removed propagation phase, in radians.
    pub global_phase: f64,
    pub rescale_applied: f64,
    pub trace_scale: f64,
}

impl WireAmplitudes {
    /// Reconstructed `ρ` (or reduced `ρ_A` after partial traces) in dm mode.
    pub fn density(&self) -> Option<DensityMatrix> {
        if self.mode != Mode::Dm {
            return None;
        }
        let d = 1usize << self.n_kept;
        let rho = CMat::from_fn(d, d, |i, j| self.amps[i * d + j] * self.trace_scale);
        Some(DensityMatrix {
            n: self.n_kept,
            rho,
        })
    }

    /// Density amplitudes in row-major order, scaled to the (reduced) density matrix.
    pub fn density_vec(&self) -> Vec<C64> {
        self.amps.iter().map(|a| a * self.trace_scale).collect()
    }

    pub fn label_strings(&self) -> Vec<String> {
        self.labels
            .iter()
            .map(|l| l.describe(self.n_kept))
            .collect()
    }
}

/// `Σ |amp|²` over kept wires.
pub fn purity_from_wires(w: &WireAmplitudes) -> f64 {
    w.amps.iter().map(|a| a.norm_sqr()).sum()
}

/// `2^m · Σ_kept |amp|²` after `m` traced qubits.
pub fn subsystem_purity(w: &WireAmplitudes) -> f64 {
    w.trace_scale * w.trace_scale * purity_from_wires(w)
}

/// Probability that the walker was not absorbed by a drain.
pub fn survival_probability(w: &WireAmplitudes) -> f64 {
    1.0 - w.drain_total
}

fn check_k(k: f64) -> Result<()> {
    if !(k > 0.0 && k < std::f64::consts::PI) {
        return Err(Error::Parameter(format!(
            "momentum k = {k} must lie in (0, π)"
        )));
    }
    Ok(())
}

fn graph_checks(sg: &ScatterGraph) -> Result<()> {
    if sg.graph.n_nodes == 0 || sg.graph.in_ports.is_empty() {
        return Err(Error::Graph("empty scattering graph".into()));
    }
    Ok(())
}

/// Turns raw out-port amplitudes into corrected wire amplitudes.
fn assemble(
    sg: &ScatterGraph,
    k: f64,
    out: &[C64],
    drain_total: f64,
    reflection: f64,
) -> WireAmplitudes {
    let rescale = sg.rescale_product();
    let phase = C64::from_polar(1.0, -k * sg.nominal_length as f64);
    let mut amps = Vec::new();
    let mut labels = Vec::new();
    let mut discarded = Vec::new();
    for t in &sg.terminals {
        let a = out[t.port] * phase * rescale;
        if t.kept {
            amps.push(a);
            labels.push(t.label);
        } else {
            discarded.push(a);
        }
    }
    WireAmplitudes {
        k,
        mode: sg.mode,
        n_kept: sg.n_kept,
        labels,
        amps,
        discarded,
        drain_total,
        reflection,
        global_phase: (k * sg.nominal_length as f64).rem_euclid(2.0 * std::f64::consts::PI),
        rescale_applied: rescale,
        trace_scale: sg.trace_scale,
    }
}

/// Frequency-domain solve for an arbitrary superposition of incident waves on the input ports.
pub fn solve_with_input(sg: &ScatterGraph, k: f64, input: &[C64]) -> Result<WireAmplitudes> {
    check_k(k)?;
    graph_checks(sg)?;
    if input.len() != sg.graph.in_ports.len() {
        return Err(Error::Dimension(format!(
            "{} input amplitudes for {} input ports",
            input.len(),
            sg.graph.in_ports.len()
        )));
    }
    let g = &sg.graph;
    let drive: Vec<(Port, C64)> = g
        .in_ports
        .iter()
        .copied()
        .zip(input.iter().copied())
        .filter(|(_, a)| *a != ZERO)
        .collect();
    let psi = g.solve_driven(k, &[drive])?;
    let out: Vec<C64> = g
        .out_ports
        .iter()
        .map(|p| psi[(p.node, 0)] * p.coupling)
        .collect();
    let drain_total = sg.drain_ports.iter().map(|&p| out[p].norm_sqr()).sum();
    let mut refl_amp = 0.0f64;
    let reflection = g
        .in_ports
        .iter()
        .zip(input)
        .map(|(p, a)| {
            let r = psi[(p.node, 0)] * p.coupling - a;
            refl_amp = refl_amp.max(r.norm());
            r.norm_sqr()
        })
        .sum();
    if (k - K_OPERATING).abs() < 1e-12 && refl_amp > MODEL_REFLECTION_TOL {
        return Err(Error::ModelViolation {
            reflection: refl_amp,
        });
    }
    Ok(assemble(sg, k, &out, drain_total, reflection))
}

/// Unit incident wave on the start port.
pub fn solve_frequency(sg: &ScatterGraph, k: f64) -> Result<WireAmplitudes> {
    let mut input = vec![ZERO; sg.graph.in_ports.len()];
    input[sg.start_port] = ONE;
    solve_with_input(sg, k, &input)
}

/// Corrected map from input-port amplitudes to kept-wire amplitudes.
pub fn transfer_matrix(sg: &ScatterGraph, k: f64) -> Result<CMat> {
    check_k(k)?;
    graph_checks(sg)?;
    let g = &sg.graph;
    let drives: Vec<Vec<(Port, C64)>> = g.in_ports.iter().map(|&p| vec![(p, ONE)]).collect();
    let psi = g.solve_driven(k, &drives)?;
    let phase = C64::from_polar(1.0, -k * sg.nominal_length as f64) * sg.rescale_product();
    let kept: Vec<_> = sg.kept_terminals().collect();
    Ok(CMat::from_fn(kept.len(), drives.len(), |r, c| {
        let p = g.out_ports[kept[r].port];
        psi[(p.node, c)] * p.coupling * phase
    }))
}

// ---------------------------------------------------------------- time domain

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeDomainConfig {
    /// Packet width in sites: `|ψ|² ∝ exp(−(x−x₀)²/2σ²)`.
    pub sigma: f64,
    /// Nodes on each finite lead.
    pub lead_len: usize,
    /// Upper bound on the evolution time; derived from the graph when absent.
    pub t_max: Option<f64>,
    /// Stop once the norm left on graph nodes falls below this.
    pub interior_tol: f64,
}

impl Default for TimeDomainConfig {
    fn default() -> Self {
        Self {
            sigma: 40.0,
            lead_len: 400,
            t_max: None,
            interior_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub norm: f64,
    /// Norm on graph nodes (leads excluded).
    pub interior: f64,
    /// Norm on all input leads.
    pub input_leads: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PacketRun {
    pub k: f64,
    pub config: TimeDomainConfig,
    /// Estimated transmission amplitude per output port.
    pub amplitudes: Vec<C64>,
    /// Norm on each output lead at the stop time.
    pub lead_norms: Vec<f64>,
    /// Norm on all input leads at the stop time.
    pub backscatter: f64,
    /// Momentum-filtered reflection amplitude per input port.
    pub reflections: Vec<C64>,
    pub t_final: f64,
    pub steps: usize,
    pub max_norm_drift: f64,
    /// Integer delays used to align each output lead with the free reference packet.
    pub delays: Vec<i64>,
    pub trace: Vec<TracePoint>,
}

/// Real symmetric sparse matrix in CSR form.
struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(a, b, h) in edges {
            rows[a].push((b, h));
            rows[b].push((a, h));
        }
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for r in rows {
            for (c, v) in r {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            row_ptr,
            cols,
            vals,
        }
    }

    fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    fn gershgorin(&self) -> f64 {
        (0..self.n())
            .map(|r| {
                self.vals[self.row_ptr[r]..self.row_ptr[r + 1]]
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// `y = a·H·x + b·z`
    fn apply(&self, a: f64, x: &[C64], b: f64, z: &[C64], y: &mut [C64]) {
        for r in 0..self.n() {
            let mut s = ZERO;
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += x[self.cols[idx]] * self.vals[idx];
            }
            y[r] = s * a + z[r] * b;
        }
    }
}

/// `J_0(x) … J_nmax(x)` by Miller's backward recurrence.
pub fn bessel_j_all(x: f64, nmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; nmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let big = nmax.max(x.abs().ceil() as usize);
    let mut m = big + 30 + (40.0 * big as f64).sqrt() as usize;
    m += m % 2;
    let (mut jp, mut j) = (0.0f64, 1e-300f64);
    let mut vals = vec![0.0; m + 1];
    vals[m] = j;
    let mut norm = 0.0;
    for n in (1..=m).rev() {
        let jm = 2.0 * n as f64 / x * j - jp;
        jp = j;
        j = jm;
        vals[n - 1] = j;
        if j.abs() > 1e250 {
            for v in vals.iter_mut().skip(n - 1) {
                *v *= 1e-250;
            }
            jp *= 1e-250;
            j *= 1e-250;
            norm *= 1e-250;
        }
        if (n - 1) % 2 == 0 && n > 1 {
            norm += 2.0 * j;
        }
    }
    norm += vals[0];
    for n in 0..=nmax {
        out[n] = vals[n] / norm;
    }
    out
}

/// Chebyshev propagator for `e^{iH·dt}` with `H` bounded by `scale`.
struct Propagator {
    h: Csr,
    scale: f64,
    coeffs: Vec<C64>,
}

impl Propagator {
    fn new(h: Csr, dt: f64) -> Self {
        let scale = h.gershgorin().max(1e-12) * 1.01;
        let tau = scale * dt;
        let nmax = (tau.ceil() as usize) + 60;
        let j = bessel_j_all(tau, nmax);
        let mut last = nmax;
        while last > tau as usize + 1 && j[last].abs() < 1e-17 {
            last -= 1;
        }
        let coeffs = (0..=last)
            .map(|n| {
                let c = if n == 0 { 1.0 } else { 2.0 } * j[n];
                C64::new(c, 0.0) * linalg::omega(2 * (n as i64 % 4))
            })
            .collect();
        Self { h, scale, coeffs }
    }

    fn step(&self, psi: &mut Vec<C64>) {
        let n = psi.len();
        let inv = 1.0 / self.scale;
        let mut t_prev = psi.clone();
        let mut t_cur = vec![ZERO; n];
        self.h.apply(inv, psi, 0.0, psi, &mut t_cur);
        let mut acc: Vec<C64> = (0..n)
            .map(|i| t_prev[i] * self.coeffs[0] + t_cur[i] * self.coeffs[1])
            .collect();
        let mut t_next = vec![ZERO; n];
        for c in &self.coeffs[2..] {
            self.h.apply(2.0 * inv, &t_cur, -1.0, &t_prev, &mut t_next);
            for i in 0..n {
                acc[i] += t_next[i] * c;
            }
            std::mem::swap(&mut t_prev, &mut t_cur);
            std::mem::swap(&mut t_cur, &mut t_next);
        }
        *psi = acc;
    }
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn gaussian(u: f64, sigma: f64) -> f64 {
    (-(u * u) / (4.0 * sigma * sigma)).exp()
}

/// Longest hop distance from `start` to any node (unreachable nodes ignored).
fn hop_radius(w: &WidgetGraph, start: usize) -> usize {
    let mut adj = vec![Vec::new(); w.n_nodes];
    for e in &w.edges {
        adj[e.a].push(e.b);
        adj[e.b].push(e.a);
    }
    let mut dist = vec![usize::MAX; w.n_nodes];
    let mut q = std::collections::VecDeque::from([start]);
    dist[start] = 0;
    let mut far = 0;
    while let Some(n) = q.pop_front() {
        far = far.max(dist[n]);
        for &m in &adj[n] {
            if dist[m] == usize::MAX {
                dist[m] = dist[n] + 1;
                q.push_back(m);
            }
        }
    }
    far
}

/// Sends a packet in through input port `start` of `w`.
pub fn propagate_widget(
    w: &WidgetGraph,
    start: usize,
    k: f64,
    cfg: &TimeDomainConfig,
) -> Result<PacketRun> {
    check_k(k)?;
    w.validate_structure()?;
    if w.is_abstract() {
        return Err(Error::Propagation(
            "ideal blocks have no Hamiltonian; use the frequency solver".into(),
        ));
    }
    if cfg.sigma < 4.0 {
        return Err(Error::Parameter(format!(
            "σ = {} below the minimum of 4 sites",
            cfg.sigma
        )));
    }
    if (cfg.lead_len as f64) < 8.0 * cfg.sigma {
        return Err(Error::Parameter(format!(
            "lead length {} shorter than 8σ = {}",
            cfg.lead_len,
            8.0 * cfg.sigma
        )));
    }
    if start >= w.in_ports.len() {
        return Err(Error::Parameter(format!(
            "input port {start} does not exist"
        )));
    }
    let ll = cfg.lead_len;
    let ports: Vec<Port> = w.in_ports.iter().chain(&w.out_ports).copied().collect();
    let n_total = w.n_nodes + ports.len() * ll;
    let lead_node = |p: usize, d: usize| w.n_nodes + p * ll + (d - 1);
    let mut edges: Vec<(usize, usize, f64)> =
        w.edges.iter().map(|e| (e.a, e.b, e.hopping)).collect();
    for (p, port) in ports.iter().enumerate() {
        if port.coupling != 0.0 {
            edges.push((port.node, lead_node(p, 1), port.coupling));
        }
        for d in 1..ll {
            edges.push((lead_node(p, d), lead_node(p, d + 1), 1.0));
        }
    }
    let h = Csr::from_edges(n_total, &edges);

    let v = 2.0 * k.sin();
    let d0 = ll as f64 / 2.0;
    let mut psi = vec![ZERO; n_total];
    for d in 1..=ll {
        psi[lead_node(start, d)] =
            C64::from_polar(gaussian(d as f64 - d0, cfg.sigma), -k * d as f64);
    }
    let nrm = norm_sqr(&psi).sqrt();
    psi.iter_mut().for_each(|z| *z /= nrm);
    let initial_lead: Vec<C64> = (1..=ll).map(|d| psi[lead_node(start, d)]).collect();

    let t_arrive = (d0 + 4.0 * cfg.sigma) / v;
    let t_max = cfg.t_max.unwrap_or(
        (d0 + 7.0 * cfg.sigma + 3.0 * hop_radius(w, w.in_ports[start].node) as f64 + 50.0) / v,
    );
    let scale = h.gershgorin().max(1e-12) * 1.01;
    let dt = 10.0 / scale;
    let prop = Propagator::new(h, dt);

    let in_leads = |psi: &[C64]| -> f64 {
        (0..w.in_ports.len())
            .map(|p| {
                (1..=ll)
                    .map(|d| psi[lead_node(p, d)].norm_sqr())
                    .sum::<f64>()
            })
            .sum()
    };
    let mut t = 0.0;
    let mut steps = 0;
    let mut trace = Vec::new();
    let mut drift: f64 = 0.0;
    loop {
        let total = norm_sqr(&psi);
        let interior = norm_sqr(&psi[..w.n_nodes]);
        drift = drift.max((total.sqrt() - 1.0).abs());
        trace.push(TracePoint {
            t,
            norm: total.sqrt(),
            interior,
            input_leads: in_leads(&psi),
        });
        if t >= t_arrive && interior < cfg.interior_tol {
            break;
        }
        if t >= t_max {
            if t < t_arrive {
                return Err(Error::Propagation(format!(
                    "t_max = {t_max:.1} ends before the packet has passed (needs {t_arrive:.1})"
                )));
            }
            if interior > 0.01 {
                return Err(Error::Propagation(format!(
                    "t_max = {t_max:.1} reached with {:.2}% of the norm still on the graph",
                    100.0 * interior
                )));
            }
            break;
        }
        prop.step(&mut psi);
        t += dt;
        steps += 1;
    }
    if drift > 1e-9 {
        return Err(Error::Propagation(format!(
            "norm drift {drift:.2e} exceeds 1e-9"
        )));
    }

    // Free reference: the same packet on a bare chain for the same time.
    let reach = (v * t - d0 + 8.0 * cfg.sigma + 20.0).max(1.0) as usize;
    let free_len = ll + 1 + reach;
    let chain: Vec<(usize, usize, f64)> = (0..free_len - 1).map(|i| (i, i + 1, 1.0)).collect();
    let free_prop = Propagator::new(Csr::from_edges(free_len, &chain), dt);
    // chain index i ↔ position x = i − ll
    let mut free = vec![ZERO; free_len];
    for (idx, z) in initial_lead.iter().enumerate() {
        let d = idx + 1;
        free[ll - d] = *z;
    }
    for _ in 0..steps {
        free_prop.step(&mut free);
    }
    let free_w: f64 = norm_sqr(&free);
    let free_centroid = free
        .iter()
        .enumerate()
        .map(|(i, z)| (i as f64 - ll as f64) * z.norm_sqr())
        .sum::<f64>()
        / free_w;
    let free_at = |x: i64| -> C64 {
        let i = x + ll as i64;
        if i >= 0 && (i as usize) < free_len {
            free[i as usize]
        } else {
            ZERO
        }
    };

    // Projects lead `pi` onto the free packet shifted by its integer delay.
    let project = |pi: usize| -> (C64, f64, i64) {
        let vals: Vec<C64> = (1..=ll).map(|d| psi[lead_node(pi, d)]).collect();
        let wsum = norm_sqr(&vals);
        if wsum < 1e-20 {
            return (ZERO, wsum, 0);
        }
        let centroid = vals
            .iter()
            .enumerate()
            .map(|(i, z)| (i + 1) as f64 * z.norm_sqr())
            .sum::<f64>()
            / wsum;
        let delay = (free_centroid - centroid).round() as i64;
        let mut num = ZERO;
        let mut den = 0.0;
        for (i, z) in vals.iter().enumerate() {
            let f = free_at(i as i64 + 1 + delay);
            num += z * f.conj();
            den += f.norm_sqr();
        }
        let amp = if den > 0.0 {
            num / den * C64::from_polar(1.0, k * delay as f64)
        } else {
            ZERO
        };
        (amp, wsum, delay)
    };
    let n_in = w.in_ports.len();
    let mut amplitudes = Vec::new();
    let mut lead_norms = Vec::new();
    let mut delays = Vec::new();
    for p in 0..w.out_ports.len() {
        let (a, norm, delay) = project(n_in + p);
        amplitudes.push(a);
        lead_norms.push(norm);
        delays.push(delay);
    }
    let reflections: Vec<C64> = (0..n_in).map(|p| project(p).0).collect();
    let backscatter = in_leads(&psi);
    Ok(PacketRun {
        k,
        config: TimeDomainConfig {
            t_max: Some(t_max),
            ..*cfg
        },
        amplitudes,
        lead_norms,
        backscatter,
        reflections,
        t_final: t,
        steps,
        max_norm_drift: drift,
        delays,
        trace,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeDomainResult {
    pub amplitudes: WireAmplitudes,
    /// `Σ |r̂|²` over input ports, the reflection at the filtered momentum.
    pub filtered_backscatter: f64,
    pub run: PacketRun,
}

/// Time-domain estimate of the compiled graph's wire amplitudes.
pub fn propagate_wavepacket(
    sg: &ScatterGraph,
    k: f64,
    cfg: &TimeDomainConfig,
) -> Result<TimeDomainResult> {
    graph_checks(sg)?;
    let run = propagate_widget(&sg.graph, sg.start_port, k, cfg)?;
    let drain_total = sg.drain_ports.iter().map(|&p| run.lead_norms[p]).sum();
    let amplitudes = assemble(sg, k, &run.amplitudes, drain_total, run.backscatter);
    let filtered_backscatter = run.reflections.iter().map(|r| r.norm_sqr()).sum();
    Ok(TimeDomainResult {
        amplitudes,
        filtered_backscatter,
        run,
    })
}
