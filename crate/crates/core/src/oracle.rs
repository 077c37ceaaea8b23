//! Dense reference simulator: `ρ → UρU†`, Kraus sums and partial traces on
//! `2ⁿ×2ⁿ` matrices. Every graph result is checked against this.

use serde::{Deserialize, Serialize};

use crate::circuit::{qubit_mask, Channel, CircuitOp, CircuitSpec, Gate, LOCAL_WIRE_ORDER};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, Mat2, C64, ONE, ZERO};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    pub n: usize,
    #[serde(with = "linalg::cmat_serde")]
    pub rho: CMat,
}

impl DensityMatrix {
    /// `|b⟩⟨b|` for basis index `b`.
    pub fn basis(n: usize, b: usize) -> Self {
        let d = 1 << n;
        let mut rho = CMat::zeros(d, d);
        rho[(b, b)] = ONE;
        Self { n, rho }
    }

    pub fn from_pure(n: usize, psi: &[C64]) -> Self {
        let d = 1 << n;
        Self {
            n,
            rho: CMat::from_fn(d, d, |i, j| psi[i] * psi[j].conj()),
        }
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    /// Row-major `vec(ρ)`: entry `(i, j)` at index `i·2ⁿ + j`.
    pub fn vec(&self) -> Vec<C64> {
        let d = self.dim();
        (0..d * d).map(|x| self.rho[(x / d, x % d)]).collect()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::max_abs(&(&self.rho - self.rho.adjoint()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.rho + self.rho.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn apply_unitary(&mut self, u: &CMat) {
        self.rho = u * &self.rho * u.adjoint();
    }

    pub fn apply_gate(&mut self, g: &Gate) {
        let u = gate_operator(self.n, g);
        self.apply_unitary(&u);
    }

    pub fn apply_channel(&mut self, ch: &Channel) -> Result<()> {
        match ch.kraus() {
            Some(kraus) => {
                let mut out = CMat::zeros(self.dim(), self.dim());
                for k in &kraus {
                    let kf = embed_1q(self.n, ch.qubit(), k);
                    out += &kf * &self.rho * kf.adjoint();
                }
                self.rho = out;
            }
            None => {
                // Superoperator given directly: act on each 4-element fiber.
                let o = ch.superop()?;
                let mask = qubit_mask(self.n, ch.qubit());
                let d = self.dim();
                let mut out = self.rho.clone();
                for i in (0..d).filter(|i| i & mask == 0) {
                    for j in (0..d).filter(|j| j & mask == 0) {
                        let idx = LOCAL_WIRE_ORDER.map(|(a, b)| {
                            (
                                i | if a == 1 { mask } else { 0 },
                                j | if b == 1 { mask } else { 0 },
                            )
                        });
                        let v = idx.map(|(r, c)| self.rho[(r, c)]);
                        let w = o.apply(&v);
                        for (x, (r, c)) in idx.iter().enumerate() {
                            out[(*r, *c)] = w[x];
                        }
                    }
                }
                self.rho = out;
            }
        }
        Ok(())
    }
}

/// `Tr(ρ²) = Σ ρ_ij ρ_ji`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    let d = rho.dim();
    let mut s = ZERO;
    for i in 0..d {
        for j in 0..d {
            s += rho.rho[(i, j)] * rho.rho[(j, i)];
        }
    }
    s.re
}

/// Contracts qubit `q`; the remaining qubits keep their order.
pub fn partial_trace(rho: &DensityMatrix, q: usize) -> Result<DensityMatrix> {
    if q >= rho.n {
        return Err(Error::Parameter(format!(
            "qubit {q} out of range for {} qubits",
            rho.n
        )));
    }
    if rho.n == 1 {
        return Err(Error::Parameter("cannot trace out the last qubit".into()));
    }
    let n = rho.n - 1;
    let d = 1 << n;
    let expand = |r: usize, bit: usize| -> usize {
        // insert `bit` at the position of qubit q
        let low_bits = rho.n - 1 - q;
        let high = r >> low_bits;
        let low = r & ((1 << low_bits) - 1);
        (high << (low_bits + 1)) | (bit << low_bits) | low
    };
    let out = CMat::from_fn(d, d, |a, b| {
        (0..2).map(|x| rho.rho[(expand(a, x), expand(b, x))]).sum()
    });
    Ok(DensityMatrix { n, rho: out })
}

pub fn embed_1q(n: usize, q: usize, m: &Mat2) -> CMat {
    let d = 1 << n;
    let mask = qubit_mask(n, q);
    CMat::from_fn(d, d, |r, c| {
        if (r & !mask) != (c & !mask) {
            return ZERO;
        }
        m[(usize::from(r & mask != 0), usize::from(c & mask != 0))]
    })
}

pub fn gate_operator(n: usize, g: &Gate) -> CMat {
    match g {
        Gate::Cnot { control, target } => {
            let (cm, tm) = (qubit_mask(n, *control), qubit_mask(n, *target));
            let d = 1 << n;
            CMat::from_fn(d, d, |r, c| {
                let image = if c & cm != 0 { c ^ tm } else { c };
                if r == image {
                    ONE
                } else {
                    ZERO
                }
            })
        }
        other => embed_1q(
            n,
            other.qubits()[0],
            &other.matrix().expect("single-qubit gate"),
        ),
    }
}

/// Runs a dm-mode circuit (pure-mode specs are simulated as `|ψ⟩⟨ψ|`) from
/// `|start⟩⟨start|`, including trailing partial traces.
pub fn simulate_from(spec: &CircuitSpec, start: usize) -> Result<DensityMatrix> {
    let mut rho = DensityMatrix::basis(spec.n_qubits, start);
    let mut alive: Vec<usize> = (0..spec.n_qubits).collect();
    for op in &spec.ops {
        match op {
            CircuitOp::Gate(g) => rho.apply_gate(g),
            CircuitOp::Channel(c) => rho.apply_channel(c)?,
            CircuitOp::TraceOut { q } => {
                let pos = alive
                    .iter()
                    .position(|x| x == q)
                    .ok_or_else(|| Error::Parameter(format!("qubit {q} already traced out")))?;
                rho = partial_trace(&rho, pos)?;
                alive.remove(pos);
            }
        }
    }
    Ok(rho)
}

pub fn simulate(spec: &CircuitSpec) -> Result<DensityMatrix> {
    simulate_from(spec, 0)
}

/// State vector of a pure-mode (gate-only) circuit from `|0…0⟩`.
pub fn simulate_pure(spec: &CircuitSpec) -> Result<Vec<C64>> {
    let d = 1 << spec.n_qubits;
    let mut psi = CMat::zeros(d, 1);
    psi[(0, 0)] = ONE;
    for op in &spec.ops {
        match op {
            CircuitOp::Gate(g) => psi = gate_operator(spec.n_qubits, g) * psi,
            _ => {
                return Err(Error::Parameter(
                    "state-vector simulation accepts gates only".into(),
                ))
            }
        }
    }
    Ok(psi.iter().copied().collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub max_abs_err: f64,
    /// Phase (radians) removed from the graph amplitudes before comparing.
    pub phase_used: f64,
    pub pass: bool,
    /// `(row, col)` of the worst entry.
    pub worst: (usize, usize),
    pub worst_graph: [f64; 2],
    pub worst_oracle: [f64; 2],
}

/// Phase that makes the sum of the diagonal entries of a row-major `d×d` vector real and non-negative.
pub fn trace_phase(vec: &[C64], d: usize) -> C64 {
    let tr: C64 = (0..d).map(|i| vec[i * d + i]).sum();
    if tr.norm() < 1e-300 {
        ONE
    } else {
        tr.conj() / tr.norm()
    }
}

/// Entry-wise comparison of row-major density amplitudes against `ρ`.
pub fn compare_vec(amps: &[C64], rho: &DensityMatrix, tol: f64) -> Result<CompareReport> {
    let d = rho.dim();
    if amps.len() != d * d {
        return Err(Error::Dimension(format!(
            "{} wire amplitudes cannot hold a {d}×{d} density matrix",
            amps.len()
        )));
    }
    let ph = trace_phase(amps, d);
    let mut worst = (0, 0);
    let mut max = -1.0;
    for i in 0..d {
        for j in 0..d {
            let e = (amps[i * d + j] * ph - rho.rho[(i, j)]).norm();
            if e > max {
                max = e;
                worst = (i, j);
            }
        }
    }
    let g = amps[worst.0 * d + worst.1] * ph;
    let o = rho.rho[worst];
    Ok(CompareReport {
        max_abs_err: max,
        phase_used: ph.arg(),
        pass: max <= tol,
        worst,
        worst_graph: [g.re, g.im],
        worst_oracle: [o.re, o.im],
    })
}
