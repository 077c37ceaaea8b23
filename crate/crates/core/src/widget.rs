//! Widget graphs and their scattering matrices.
//!
//! A widget is a finite tight-binding graph (H = weighted adjacency matrix)
//! with semi-infinite unit-hopping leads attached at port nodes. A lead joins
//! its port node through a first edge of hopping `j` (the port coupling,
//! usually 1). Eliminating a lead adds the self-energy `j²e^{ik}` to the port
//! diagonal; an incident wave of unit amplitude adds the source `−2i·sin k·j`.
//! With `ψ_a` the port amplitude, the outgoing lead amplitude is `j·ψ_a`
//! (minus the incident unit wave on the driven port).
//!
//! Several leads may attach to one node; that is how the damping junction
//! `D(λ)` is built.

use std::collections::VecDeque;
use std::fmt::Write as _;

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, Mat2, C64, ONE, ZERO};

/// `‖r‖_max` below this counts as zero backscattering.
pub const ZERO_REFLECTION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    #[serde(default = "unit")]
    pub hopping: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Port {
    pub node: usize,
    #[serde(default = "unit")]
    pub coupling: f64,
}

fn unit() -> f64 {
    1.0
}

impl Port {
    pub fn at(node: usize) -> Self {
        Self {
            node,
            coupling: 1.0,
        }
    }
}

/// Abstract boundary map: each input node loses its amplitude into an absorbing
/// lead, and each output node receives an incident wave of amplitude
/// `e^{ik} Σ_i M_ji ψ_{in_i}` (one hop of delay, like a single chain edge).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealBlock {
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
    #[serde(with = "linalg::cmat_serde")]
    pub matrix: CMat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidgetGraph {
    pub name: String,
    pub n_nodes: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<String>,
    pub edges: Vec<Edge>,
    pub in_ports: Vec<Port>,
    pub out_ports: Vec<Port>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ideal_blocks: Vec<IdealBlock>,
}

impl WidgetGraph {
    pub fn new(name: impl Into<String>, n_nodes: usize) -> Self {
        Self {
            name: name.into(),
            n_nodes,
            labels: Vec::new(),
            edges: Vec::new(),
            in_ports: Vec::new(),
            out_ports: Vec::new(),
            ideal_blocks: Vec::new(),
        }
    }

    pub fn edge(&mut self, a: usize, b: usize, hopping: f64) {
        self.edges.push(Edge { a, b, hopping });
    }

    pub fn label(&self, node: usize) -> String {
        self.labels
            .get(node)
            .cloned()
            .unwrap_or_else(|| format!("n{node}"))
    }

    pub fn is_abstract(&self) -> bool {
        !self.ideal_blocks.is_empty()
    }

    /// Local checks on edges, ports and blocks; returns every problem found.
    pub fn validate_structure(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (i, e) in self.edges.iter().enumerate() {
            if e.a >= self.n_nodes || e.b >= self.n_nodes {
                problems.push(format!("edge {i} references a missing node"));
            } else if e.a == e.b {
                problems.push(format!("edge {i} is a self-loop on node {}", e.a));
            }
            if !e.hopping.is_finite() || e.hopping == 0.0 {
                problems.push(format!(
                    "edge {i} has hopping {}; hoppings must be real and nonzero",
                    e.hopping
                ));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for (kind, ports) in [("input", &self.in_ports), ("output", &self.out_ports)] {
            for (i, p) in ports.iter().enumerate() {
                if p.node >= self.n_nodes {
                    problems.push(format!("{kind} port {i} references a missing node"));
                }
                if !p.coupling.is_finite() || p.coupling < 0.0 {
                    problems.push(format!(
                        "{kind} port {i} has invalid coupling {}",
                        p.coupling
                    ));
                }
                if !seen.insert((kind, p.node, p.coupling.to_bits())) {
                    problems.push(format!("{kind} port {i} duplicates another port"));
                }
            }
        }
        for (b, blk) in self.ideal_blocks.iter().enumerate() {
            if blk.matrix.nrows() != blk.outputs.len() || blk.matrix.ncols() != blk.inputs.len() {
                problems.push(format!(
                    "ideal block {b}: matrix shape does not match its node lists"
                ));
            }
            if blk
                .inputs
                .iter()
                .chain(&blk.outputs)
                .any(|&n| n >= self.n_nodes)
            {
                problems.push(format!("ideal block {b} references a missing node"));
            }
        }
        if self.in_ports.is_empty() {
            problems.push("graph has no input port".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Graph(problems.join("; ")))
        }
    }

    /// Structural checks plus: every output port is reachable from an input.
    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        let mut problems = Vec::new();
        {
            let reach = self.reachable_from_inputs();
            for (i, p) in self.out_ports.iter().enumerate() {
                if !reach[p.node] {
                    problems.push(format!(
                        "output port {i} is disconnected from every input port"
                    ));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Graph(problems.join("; ")))
        }
    }

    fn reachable_from_inputs(&self) -> Vec<bool> {
        let mut adj = vec![Vec::new(); self.n_nodes];
        for e in &self.edges {
            adj[e.a].push(e.b);
            adj[e.b].push(e.a);
        }
        for blk in &self.ideal_blocks {
            for &i in &blk.inputs {
                adj[i].extend(blk.outputs.iter().copied());
            }
        }
        let mut seen = vec![false; self.n_nodes];
        let mut queue: VecDeque<usize> = self.in_ports.iter().map(|p| p.node).collect();
        for &n in &queue {
            seen[n] = true;
        }
        while let Some(n) = queue.pop_front() {
            for &m in &adj[n] {
                if !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
        seen
    }

    /// Lead-eliminated system matrix `E·𝕀 − H − Σ` plus ideal-block couplings.
    fn system_triplets(&self, k: f64) -> Vec<Triplet<usize, usize, C64>> {
        let e = 2.0 * k.cos();
        let eik = C64::from_polar(1.0, k);
        let mut diag = vec![C64::new(e, 0.0); self.n_nodes];
        for p in self.in_ports.iter().chain(&self.out_ports) {
            diag[p.node] -= eik * p.coupling * p.coupling;
        }
        let mut trip = Vec::with_capacity(self.n_nodes + 2 * self.edges.len());
        for blk in &self.ideal_blocks {
            for &i in &blk.inputs {
                diag[i] -= eik;
            }
            for (r, &o) in blk.outputs.iter().enumerate() {
                diag[o] -= eik;
                for (c, &i) in blk.inputs.iter().enumerate() {
                    // source −2i·sin k · A_o moved to the left-hand side
                    let v = C64::new(0.0, 2.0 * k.sin()) * eik * blk.matrix[(r, c)];
                    if v != ZERO {
                        trip.push(Triplet::new(o, i, v));
                    }
                }
            }
        }
        for (n, d) in diag.into_iter().enumerate() {
            trip.push(Triplet::new(n, n, d));
        }
        for ed in &self.edges {
            let h = C64::new(-ed.hopping, 0.0);
            trip.push(Triplet::new(ed.a, ed.b, h));
            trip.push(Triplet::new(ed.b, ed.a, h));
        }
        trip
    }

    /// Solves for node amplitudes with incident waves `drive` on the listed ports.
    /// Column `c` of the result corresponds to `drives[c]`, a list of
    /// `(port, incident amplitude)` pairs.
    pub fn solve_driven(&self, k: f64, drives: &[Vec<(Port, C64)>]) -> Result<CMat> {
        if !(k > 0.0 && k < std::f64::consts::PI) {
            return Err(Error::Parameter(format!(
                "momentum k = {k} must lie in (0, π)"
            )));
        }
        let trip = self.system_triplets(k);
        let a =
            SparseColMat::<usize, C64>::try_new_from_triplets(self.n_nodes, self.n_nodes, &trip)
                .map_err(|e| Error::Graph(format!("sparse assembly failed: {e:?}")))?;
        let lu = a.sp_lu().map_err(|_| Error::SingularSystem { k })?;
        // one extra generic column: a singular system shows up as a blown-up probe solution
        let mut rhs = Mat::<C64>::zeros(self.n_nodes, drives.len() + 1);
        for r in 0..self.n_nodes {
            rhs[(r, drives.len())] = C64::new(
                ((r * 7919 + 13) % 97) as f64 / 97.0 - 0.5,
                ((r * 104729 + 5) % 89) as f64 / 89.0 - 0.5,
            );
        }
        let s = C64::new(0.0, -2.0 * k.sin());
        for (c, drive) in drives.iter().enumerate() {
            for (p, amp) in drive {
                rhs[(p.node, c)] += s * p.coupling * amp;
            }
        }
        let x = lu.solve(&rhs);
        let all = CMat::from_fn(self.n_nodes, drives.len() + 1, |r, c| x[(r, c)]);
        let size = linalg::max_abs(&all);
        if !size.is_finite() || size > 1e9 * (1.0 + self.n_nodes as f64) {
            return Err(Error::SingularSystem { k });
        }
        // An LU of a numerically singular matrix can succeed with garbage; check the residual.
        let residual = residual_norm(&trip, &all, &rhs);
        if residual > 1e-8 * (1.0 + size) {
            return Err(Error::SingularSystem { k });
        }
        Ok(all.columns(0, drives.len()).into_owned())
    }
}

fn residual_norm(trip: &[Triplet<usize, usize, C64>], x: &CMat, rhs: &Mat<C64>) -> f64 {
    let mut r = CMat::from_fn(x.nrows(), x.ncols(), |i, j| -rhs[(i, j)]);
    for t in trip {
        for c in 0..x.ncols() {
            r[(t.row, c)] += t.val * x[(t.col, c)];
        }
    }
    linalg::max_abs(&r)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SMatrix {
    pub k: f64,
    #[serde(with = "linalg::cmat_serde")]
    pub r: CMat,
    #[serde(with = "linalg::cmat_serde")]
    pub t: CMat,
    /// Node amplitudes, one column per input port.
    #[serde(with = "linalg::cmat_serde")]
    pub internal: CMat,
}

impl SMatrix {
    pub fn reflection_norm(&self) -> f64 {
        linalg::max_abs(&self.r)
    }

    /// Largest deviation of the stacked `(r; t)` columns from orthonormality.
    pub fn unitarity_defect(&self) -> f64 {
        let stacked = CMat::from_fn(self.r.nrows() + self.t.nrows(), self.r.ncols(), |i, j| {
            if i < self.r.nrows() {
                self.r[(i, j)]
            } else {
                self.t[(i - self.r.nrows(), j)]
            }
        });
        let g = stacked.adjoint() * &stacked - CMat::identity(stacked.ncols(), stacked.ncols());
        linalg::max_abs(&g)
    }
}

pub fn solve_smatrix(w: &WidgetGraph, k: f64) -> Result<SMatrix> {
    w.validate()?;
    let drives: Vec<Vec<(Port, C64)>> = w.in_ports.iter().map(|&p| vec![(p, ONE)]).collect();
    let psi = w.solve_driven(k, &drives)?;
    let n_in = w.in_ports.len();
    let r = CMat::from_fn(n_in, n_in, |i, j| {
        let p = w.in_ports[i];
        p.coupling * psi[(p.node, j)] - if i == j { ONE } else { ZERO }
    });
    let t = CMat::from_fn(w.out_ports.len(), n_in, |i, j| {
        let p = w.out_ports[i];
        p.coupling * psi[(p.node, j)]
    });
    Ok(SMatrix {
        k,
        r,
        t,
        internal: psi,
    })
}

/// S-matrix over all ports (inputs first, then outputs), each port driven in turn.
pub fn full_smatrix(w: &WidgetGraph, k: f64) -> Result<CMat> {
    w.validate()?;
    let ports: Vec<Port> = w.in_ports.iter().chain(&w.out_ports).copied().collect();
    let drives: Vec<Vec<(Port, C64)>> = ports.iter().map(|&p| vec![(p, ONE)]).collect();
    let psi = w.solve_driven(k, &drives)?;
    Ok(CMat::from_fn(ports.len(), ports.len(), |i, j| {
        ports[i].coupling * psi[(ports[i].node, j)] - if i == j { ONE } else { ZERO }
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub max_err: f64,
    pub reflection_norm: f64,
    /// Global phase `θ` with `t ≈ e^{iθ}·target`.
    pub phase_offset: f64,
    pub passed: bool,
}

pub fn verify_widget(w: &WidgetGraph, target: &CMat, k: f64, tol: f64) -> Result<VerifyReport> {
    let s = solve_smatrix(w, k)?;
    if target.shape() != s.t.shape() {
        return Err(Error::Dimension(format!(
            "target is {}×{} but the widget has {} outputs and {} inputs",
            target.nrows(),
            target.ncols(),
            s.t.nrows(),
            s.t.ncols()
        )));
    }
    let (max_err, phase) = linalg::phase_aligned_error(&s.t, target);
    let reflection_norm = s.reflection_norm();
    Ok(VerifyReport {
        max_err,
        reflection_norm,
        phase_offset: phase.arg(),
        passed: max_err <= tol && reflection_norm <= tol.max(ZERO_REFLECTION_TOL),
    })
}

// ---------------------------------------------------------------- catalog

/// Straight wire of `len` edges (`len + 1` nodes).
pub fn wire(len: usize) -> WidgetGraph {
    let mut w = WidgetGraph::new(format!("wire({len})"), len + 1);
    for i in 0..len {
        w.edge(i, i + 1, 1.0);
    }
    w.in_ports.push(Port::at(0));
    w.out_ports.push(Port::at(len));
    w
}

/// The `U2` widget exactly as its defining node equations read: in₀–out₀ and
/// in₁–out₁ edges, `φ₁` joined to both inputs, `φ₂` joined to both outputs,
/// all hoppings 1. At k = π/4 this realizes `[[i, −1], [−1, i]]/√2`.
pub fn u2_core() -> WidgetGraph {
    // nodes: 0 in₀, 1 in₁, 2 out₀, 3 out₁, 4 φ₁, 5 φ₂
    let mut w = WidgetGraph::new("u2_core", 6);
    w.labels = ["in0", "in1", "out0", "out1", "phi1", "phi2"]
        .map(String::from)
        .to_vec();
    w.edge(0, 2, 1.0);
    w.edge(1, 3, 1.0);
    w.edge(4, 0, 1.0);
    w.edge(4, 1, 1.0);
    w.edge(5, 2, 1.0);
    w.edge(5, 3, 1.0);
    w.in_ports = vec![Port::at(0), Port::at(1)];
    w.out_ports = vec![Port::at(2), Port::at(3)];
    w
}

/// [`u2_core`] with the `|1⟩` side of both bridges set to hopping −1, which flips
/// the sign of the cross amplitude and gives exactly `U2 = [[i, 1], [1, i]]/√2`.
pub fn u2_widget() -> WidgetGraph {
    let mut w = u2_core();
    w.name = "u2".into();
    for e in &mut w.edges {
        if (e.a, e.b) == (4, 1) || (e.a, e.b) == (5, 3) {
            e.hopping = -1.0;
        }
    }
    w
}

/// Two-wire phase gate: the `|1⟩` wire is `m` nodes longer than the `|0⟩` wire.
pub fn phase_widget(m: u8) -> Result<WidgetGraph> {
    if !(1..=7).contains(&m) {
        return Err(Error::Parameter(format!(
            "phase widget power {m} outside 1..7"
        )));
    }
    let m = m as usize;
    let mut w = WidgetGraph::new(format!("phase({m})"), 2 + m + 2);
    // |0⟩ wire: 0 – 1; |1⟩ wire: 2 – … – (3 + m)
    w.edge(0, 1, 1.0);
    for i in 2..3 + m {
        w.edge(i, i + 1, 1.0);
    }
    w.in_ports = vec![Port::at(0), Port::at(2)];
    w.out_ports = vec![Port::at(1), Port::at(3 + m)];
    Ok(w)
}

/// Port relabeling: input `w` leaves on output `perm[w]`.
pub fn crossing(perm: &[usize]) -> Result<WidgetGraph> {
    let mut sorted = perm.to_vec();
    sorted.sort_unstable();
    if sorted.iter().enumerate().any(|(i, &p)| i != p) {
        return Err(Error::Parameter(format!("{perm:?} is not a permutation")));
    }
    let n = perm.len();
    let mut w = WidgetGraph::new(format!("crossing{perm:?}"), n);
    w.in_ports = (0..n).map(Port::at).collect();
    w.out_ports = vec![Port::at(0); n];
    for (i, &p) in perm.iter().enumerate() {
        w.out_ports[p] = Port::at(i);
    }
    Ok(w)
}

/// Damping junction: input lead and two output leads on one node `c`, the
/// outputs coupled with `λ` (kept wire) and `√(1−λ²)` (drain).
pub fn dlambda_widget(lambda: f64) -> Result<WidgetGraph> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Parameter(format!("λ = {lambda} outside [0, 1]")));
    }
    let mut w = WidgetGraph::new(format!("D({lambda})"), 1);
    w.labels = vec!["c".into()];
    w.in_ports = vec![Port::at(0)];
    w.out_ports = vec![
        Port {
            node: 0,
            coupling: lambda,
        },
        Port {
            node: 0,
            coupling: (1.0 - lambda * lambda).max(0.0).sqrt(),
        },
    ];
    Ok(w)
}

/// Widget whose transmission is `e^{ik}·M` by construction (M must be an isometry).
pub fn ideal_block(m: &CMat) -> Result<WidgetGraph> {
    let g = m.adjoint() * m - CMat::identity(m.ncols(), m.ncols());
    let defect = linalg::max_abs(&g);
    if defect > 1e-10 {
        return Err(Error::NotUnitary { deviation: defect });
    }
    let (n_out, n_in) = m.shape();
    let mut w = WidgetGraph::new("ideal_block", n_in + n_out);
    w.in_ports = (0..n_in).map(Port::at).collect();
    w.out_ports = (n_in..n_in + n_out).map(Port::at).collect();
    w.ideal_blocks.push(IdealBlock {
        inputs: (0..n_in).collect(),
        outputs: (n_in..n_in + n_out).collect(),
        matrix: m.clone(),
    });
    Ok(w)
}

/// Target matrix for `D(λ)`: the isometry `(λ, √(1−λ²))ᵀ`.
pub fn dlambda_target(lambda: f64) -> CMat {
    CMat::from_column_slice(
        2,
        1,
        &[
            C64::new(lambda, 0.0),
            C64::new((1.0 - lambda * lambda).max(0.0).sqrt(), 0.0),
        ],
    )
}

/// One row of the widget self-check table.
#[derive(Debug, Clone, Serialize)]
pub struct WidgetCheck {
    pub name: String,
    pub report: VerifyReport,
}

/// Solves every catalog widget at `k` against its target.
pub fn catalog_checks(k: f64, tol: f64) -> Result<Vec<WidgetCheck>> {
    let mut rows: Vec<(String, WidgetGraph, CMat)> = vec![
        ("u2".into(), u2_widget(), linalg::to_dyn2(&linalg::u2())),
        ("wire(3)".into(), wire(3), CMat::from_element(1, 1, ONE)),
        (
            "crossing[1,0]".into(),
            crossing(&[1, 0])?,
            linalg::to_dyn2(&linalg::pauli_x()),
        ),
    ];
    for m in 1..=7u8 {
        rows.push((
            format!("phase({m})"),
            phase_widget(m)?,
            linalg::to_dyn2(&linalg::mat2_pow(&linalg::u1(), m as u32)),
        ));
    }
    for lambda in [0.0, 0.3, 0.6, 1.0] {
        rows.push((
            format!("D({lambda})"),
            dlambda_widget(lambda)?,
            dlambda_target(lambda),
        ));
    }
    let h = linalg::to_dyn2(&linalg::hadamard());
    rows.push(("ideal_block(H)".into(), ideal_block(&h)?, h));
    rows.into_iter()
        .map(|(name, w, target)| {
            Ok(WidgetCheck {
                name,
                report: verify_widget(&w, &target, k, tol)?,
            })
        })
        .collect()
}

pub fn to_dot(w: &WidgetGraph) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "graph \"{}\" {{", w.name);
    let _ = writeln!(s, "  rankdir=LR;");
    for n in 0..w.n_nodes {
        let _ = writeln!(s, "  n{n} [label=\"{}\"];", w.label(n));
    }
    for e in &w.edges {
        if e.hopping == 1.0 {
            let _ = writeln!(s, "  n{} -- n{};", e.a, e.b);
        } else {
            let _ = writeln!(s, "  n{} -- n{} [label=\"{}\"];", e.a, e.b, e.hopping);
        }
    }
    for (kind, ports) in [("in", &w.in_ports), ("out", &w.out_ports)] {
        for (i, p) in ports.iter().enumerate() {
            let _ = writeln!(s, "  {kind}{i} [shape=point];");
            if p.coupling == 1.0 {
                let _ = writeln!(s, "  {kind}{i} -- n{} [style=dashed];", p.node);
            } else {
                let _ = writeln!(
                    s,
                    "  {kind}{i} -- n{} [style=dashed, label=\"{}\"];",
                    p.node, p.coupling
                );
            }
        }
    }
    s.push_str("}\n");
    s
}

/// The six node equations of the `U2` widget, assembled literally with the
/// zero-reflection ansatz: unknowns `(t, q, φ₁, φ₂)` for inputs `(I₀, I₁)`.
/// Returns the least-squares solution and the worst residual over all six.
pub fn u2_node_equations(k: f64, i0: C64, i1: C64) -> ([C64; 4], f64) {
    let e = C64::new(2.0 * k.cos(), 0.0);
    let eik = C64::from_polar(1.0, k);
    let emk = eik.conj();
    // Each row: coefficients of (t, q, φ₁, φ₂) and the constant moved right.
    let rows: [([C64; 4], C64); 6] = [
        ([i0, i1, ONE, ZERO], e * i0 - i0 * emk),
        ([ZERO, ZERO, -e, ZERO], -(i0 + i1)),
        ([i1, i0, ONE, ZERO], e * i1 - i1 * emk),
        ([(eik - e) * i0, (eik - e) * i1, ZERO, ONE], -i0),
        ([i0 + i1, i1 + i0, ZERO, -e], ZERO),
        ([(eik - e) * i1, (eik - e) * i0, ZERO, ONE], -i1),
    ];
    let a = CMat::from_fn(6, 4, |r, c| rows[r].0[c]);
    let b = CMat::from_fn(6, 1, |r, _| rows[r].1);
    let ah = a.adjoint();
    let x = (&ah * &a)
        .lu()
        .solve(&(&ah * &b))
        .unwrap_or_else(|| CMat::zeros(4, 1));
    let res = linalg::max_abs(&(&a * &x - &b));
    ([x[0], x[1], x[2], x[3]], res)
}

/// `t` and `q` from the literal node equations, as a 2×2 matrix `[[t, q], [q, t]]`.
pub fn u2_from_node_equations(k: f64) -> (Mat2, f64) {
    let (x, res) = u2_node_equations(k, ONE, ZERO);
    (Mat2::new(x[0], x[1], x[1], x[0]), res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};

    const K: f64 = FRAC_PI_4;

    #[test]
    fn u2_widget_realizes_u2() {
        let rep = verify_widget(&u2_widget(), &linalg::to_dyn2(&linalg::u2()), K, 1e-10).unwrap();
        assert!(
            rep.max_err < 1e-10 && rep.reflection_norm < 1e-10,
            "{rep:?}"
        );
        // exact, not merely up to phase
        let s = solve_smatrix(&u2_widget(), K).unwrap();
        assert!((s.t - linalg::to_dyn2(&linalg::u2())).norm() < 1e-12);
    }

    #[test]
    fn literal_equations_match_core_widget() {
        let (m, res) = u2_from_node_equations(K);
        assert!(
            res < 1e-12,
            "the zero-reflection ansatz must satisfy all six equations"
        );
        // t = i/√2 and the cross amplitude has magnitude 1/√2
        assert!((m[(0, 0)] - C64::new(0.0, FRAC_1_SQRT_2)).norm() < 1e-12);
        assert!((m[(0, 1)].norm() - FRAC_1_SQRT_2).abs() < 1e-12);
        let s = solve_smatrix(&u2_core(), K).unwrap();
        assert!((&s.t - linalg::to_dyn2(&m)).norm() < 1e-12);
        assert!(s.reflection_norm() < 1e-12);
        // φ₁ = 1/(2 cos k) for input (1, 0)
        assert!((s.internal[(4, 0)] - C64::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn wire_phase() {
        for len in 0..10 {
            let s = solve_smatrix(&wire(len), K).unwrap();
            assert!((s.t[(0, 0)] - linalg::omega(len as i64)).norm() < 1e-12);
            assert!(s.reflection_norm() < 1e-12);
        }
    }

    #[test]
    fn phase_widget_relative_phase() {
        for m in 1..=7u8 {
            let s = solve_smatrix(&phase_widget(m).unwrap(), K).unwrap();
            let rel = s.t[(1, 1)] / s.t[(0, 0)];
            assert!((rel - linalg::omega(m as i64)).norm() < 1e-12);
        }
        assert!(phase_widget(0).is_err());
        assert!(phase_widget(8).is_err());
    }

    #[test]
    fn dlambda_is_k_independent() {
        let reference = solve_smatrix(&dlambda_widget(0.6).unwrap(), K).unwrap();
        assert!((reference.t[(0, 0)].re - 0.6).abs() < 1e-12);
        assert!((reference.t[(1, 0)].re - 0.8).abs() < 1e-12);
        for i in 1..=30 {
            let k = 0.1 * i as f64;
            let s = solve_smatrix(&dlambda_widget(0.6).unwrap(), k).unwrap();
            assert!((&s.t - &reference.t).norm() < 1e-10, "k = {k}");
            assert!(s.reflection_norm() < 1e-10);
        }
        let one = solve_smatrix(&dlambda_widget(1.0).unwrap(), K).unwrap();
        assert!((one.t[(0, 0)] - ONE).norm() < 1e-12 && one.t[(1, 0)].norm() < 1e-12);
        let zero = solve_smatrix(&dlambda_widget(0.0).unwrap(), K).unwrap();
        assert!(zero.t[(0, 0)].norm() < 1e-12 && (zero.t[(1, 0)] - ONE).norm() < 1e-12);
        assert!(dlambda_widget(1.5).is_err());
    }

    #[test]
    fn flux_conservation_and_reciprocity() {
        let widgets = [
            u2_widget(),
            u2_core(),
            wire(4),
            phase_widget(3).unwrap(),
            dlambda_widget(0.3).unwrap(),
        ];
        for w in &widgets {
            for i in 1..30 {
                let k = PI * i as f64 / 30.0;
                if (k - PI / 2.0).abs() < 1e-9 && w.name.starts_with("u2") {
                    // φ nodes have E = 0 there: bound state at the band centre
                    continue;
                }
                let s = solve_smatrix(w, k).unwrap();
                assert!(s.unitarity_defect() < 1e-10, "{} at k = {k}", w.name);
                let full = full_smatrix(w, k).unwrap();
                assert!(
                    (&full - full.transpose()).norm() < 1e-10,
                    "{} not reciprocal",
                    w.name
                );
            }
        }
    }

    #[test]
    fn detuned_u2_reflects_a_little() {
        let target = linalg::to_dyn2(&linalg::u2());
        let near = verify_widget(&u2_widget(), &target, K + 0.05, 1e-10).unwrap();
        let far = verify_widget(&u2_widget(), &target, K + 0.1, 1e-10).unwrap();
        assert!(near.reflection_norm > 1e-6 && near.reflection_norm < 0.2);
        assert!(far.max_err > near.max_err);
    }

    #[test]
    fn ideal_block_and_crossing() {
        let h = linalg::to_dyn2(&linalg::hadamard());
        let s = solve_smatrix(&ideal_block(&h).unwrap(), 1.1).unwrap();
        assert!((&s.t - &h * C64::from_polar(1.0, 1.1)).norm() < 1e-12);
        assert!(s.reflection_norm() < 1e-12);
        let c = solve_smatrix(&crossing(&[2, 0, 1]).unwrap(), K).unwrap();
        assert_eq!(c.t[(2, 0)], ONE);
        assert_eq!(c.t[(0, 1)], ONE);
        assert!(crossing(&[0, 0]).is_err());
    }

    #[test]
    fn validation_errors() {
        let mut w = wire(2);
        w.edges[0].hopping = 0.0;
        assert!(matches!(solve_smatrix(&w, K), Err(Error::Graph(_))));
        let mut w = wire(2);
        w.edges.remove(1);
        assert!(solve_smatrix(&w, K)
            .unwrap_err()
            .to_string()
            .contains("disconnected"));
        assert!(matches!(
            solve_smatrix(&wire(1), 0.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn bound_state_is_singular() {
        let mut tri = WidgetGraph::new("tri", 4);
        tri.edge(0, 1, 1.0);
        tri.edge(1, 2, 1.0);
        tri.edge(2, 3, 1.0);
        tri.edge(3, 1, 1.0);
        tri.in_ports.push(Port::at(0));
        tri.out_ports.push(Port::at(0));
        // the triangle 1-2-3 carries the antisymmetric (2,3) state with E = −1, invisible from node 0
        let k = (-0.5f64).acos();
        assert!(matches!(
            solve_smatrix(&tri, k),
            Err(Error::SingularSystem { .. })
        ));
        assert!(solve_smatrix(&tri, 1.0).is_ok());
    }

    #[test]
    fn json_round_trip_and_dot() {
        let w = dlambda_widget(0.3).unwrap();
        let text = serde_json::to_string(&w).unwrap();
        let back: WidgetGraph = serde_json::from_str(&text).unwrap();
        assert_eq!(w, back);
        let dot = to_dot(&u2_widget());
        assert!(dot.contains("label=\"-1\""));
        assert_eq!(dot, to_dot(&u2_widget()));
    }

    #[test]
    fn catalog_all_pass() {
        for row in catalog_checks(K, 1e-10).unwrap() {
            assert!(row.report.passed, "{}: {:?}", row.name, row.report);
        }
    }
}
