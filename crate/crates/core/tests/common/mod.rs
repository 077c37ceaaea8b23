//! Test-side reference implementations, written from textbook definitions and
//! sharing no code with the library's own simulator.

#![allow(dead_code)]

use dmwalk::circuit::{Channel, CircuitOp, CircuitSpec, Gate};
use dmwalk::linalg::{CMat, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn m2(a: [[C64; 2]; 2]) -> CMat {
    CMat::from_fn(2, 2, |r, col| a[r][col])
}

pub fn omega() -> C64 {
    C64::from_polar(1.0, std::f64::consts::FRAC_PI_4)
}

pub fn u1() -> CMat {
    m2([[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), omega()]])
}

pub fn u2() -> CMat {
    m2([[c(0.0, S), c(S, 0.0)], [c(S, 0.0), c(0.0, S)]])
}

pub fn had() -> CMat {
    m2([[c(S, 0.0), c(S, 0.0)], [c(S, 0.0), c(-S, 0.0)]])
}

pub fn paulis() -> [CMat; 3] {
    let (o, z, i) = (c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0));
    [
        m2([[z, o], [o, z]]),
        m2([[z, -i], [i, z]]),
        m2([[o, z], [z, -o]]),
    ]
}

fn pow(m: &CMat, e: u8) -> CMat {
    (0..e).fold(CMat::identity(2, 2), |acc, _| acc * m)
}

/// `m` acting on qubit `q` of `n` (qubit 0 most significant).
pub fn embed(n: usize, q: usize, m: &CMat) -> CMat {
    let mut out = CMat::identity(1, 1);
    for k in 0..n {
        let f = if k == q {
            m.clone()
        } else {
            CMat::identity(2, 2)
        };
        out = out.kronecker(&f);
    }
    out
}

pub fn cnot(n: usize, ctl: usize, tgt: usize) -> CMat {
    let d = 1 << n;
    let (cb, tb) = (n - 1 - ctl, n - 1 - tgt);
    CMat::from_fn(d, d, |r, col| {
        let img = if (col >> cb) & 1 == 1 {
            col ^ (1 << tb)
        } else {
            col
        };
        if r == img {
            c(1.0, 0.0)
        } else {
            c(0.0, 0.0)
        }
    })
}

pub fn gate_op(n: usize, g: &Gate) -> CMat {
    match *g {
        Gate::Cnot { control, target } => cnot(n, control, target),
        Gate::U1 { q } => embed(n, q, &u1()),
        Gate::U1Pow { q, m } => embed(n, q, &pow(&u1(), m)),
        Gate::U2 { q } => embed(n, q, &u2()),
        Gate::U2Pow { q, m } => embed(n, q, &pow(&u2(), m)),
        Gate::H { q } => embed(n, q, &had()),
    }
}

pub fn kraus_ops(ch: &Channel) -> Vec<CMat> {
    match ch {
        Channel::Depolarizing { p, .. } => {
            let mut v = vec![CMat::identity(2, 2) * c((1.0 - p).sqrt(), 0.0)];
            v.extend(paulis().iter().map(|s| s * c((p / 3.0).sqrt(), 0.0)));
            v
        }
        Channel::Erasure { .. } => {
            let (o, z) = (c(1.0, 0.0), c(0.0, 0.0));
            vec![m2([[o, z], [z, z]]), m2([[z, o], [z, z]])]
        }
        Channel::GeneralKraus { kraus, .. } => kraus
            .iter()
            .map(|k| CMat::from_fn(2, 2, |r, col| k[(r, col)]))
            .collect(),
        Channel::GeneralSuperop { .. } => panic!("test oracle takes Kraus channels only"),
    }
}

/// Traces out qubit at position `pos` of an `n`-qubit ρ.
pub fn ptrace(rho: &CMat, n: usize, pos: usize) -> CMat {
    let d = 1 << (n - 1);
    let b = n - 1 - pos;
    let ins = |x: usize, bit: usize| {
        let low = x & ((1 << b) - 1);
        ((x >> b) << (b + 1)) | (bit << b) | low
    };
    CMat::from_fn(d, d, |r, col| {
        (0..2).map(|s| rho[(ins(r, s), ins(col, s))]).sum()
    })
}

/// Exact ρ after the circuit, started from |0…0⟩⟨0…0|.
pub fn reference_rho(spec: &CircuitSpec) -> CMat {
    let n = spec.n_qubits;
    let d = 1 << n;
    let mut rho = CMat::zeros(d, d);
    rho[(0, 0)] = c(1.0, 0.0);
    let mut alive: Vec<usize> = (0..n).collect();
    for op in &spec.ops {
        match op {
            CircuitOp::Gate(g) => {
                let u = gate_op(n, g);
                rho = &u * rho * u.adjoint();
            }
            CircuitOp::Channel(ch) => {
                let mut out = CMat::zeros(d, d);
                for k in kraus_ops(ch) {
                    let kk = embed(n, ch.qubit(), &k);
                    out += &kk * &rho * kk.adjoint();
                }
                rho = out;
            }
            CircuitOp::TraceOut { q } => {
                let pos = alive.iter().position(|a| a == q).unwrap();
                rho = ptrace(&rho, alive.len(), pos);
                alive.remove(pos);
            }
        }
    }
    rho
}

pub fn purity(rho: &CMat) -> f64 {
    (rho * rho).trace().re
}

/// `max |amps·scale − vec(ρ)|` with amplitudes row-major.
pub fn max_dev(amps: &[C64], scale: f64, rho: &CMat) -> f64 {
    let d = rho.nrows();
    assert_eq!(amps.len(), d * d);
    (0..d * d)
        .map(|i| (amps[i] * scale - rho[(i / d, i % d)]).norm())
        .fold(0.0, f64::max)
}

/// Random circuit text: `n` qubits, up to `gates` gates and `channels` channels,
/// channel set as in the acceptance suite, optional trailing trace.
pub fn random_circuit(
    rng: &mut impl Rng,
    n: usize,
    gates: usize,
    channels: usize,
    trace: bool,
) -> String {
    let mut s = format!("qubits {n}\nmode dm\n");
    let mut ops: Vec<String> = Vec::new();
    for _ in 0..gates {
        let q = rng.gen_range(0..n);
        let line = match rng.gen_range(0..if n > 1 { 5 } else { 4 }) {
            0 => format!("gate h {q}"),
            1 => format!("gate u1 {q} pow={}", rng.gen_range(1..8)),
            2 => format!("gate u2 {q} pow={}", rng.gen_range(1..4)),
            3 => format!("gate u1 {q}"),
            _ => {
                let t = (q + rng.gen_range(1..n)) % n;
                format!("gate cnot {q} {t}")
            }
        };
        ops.push(line);
    }
    for _ in 0..channels {
        let q = rng.gen_range(0..n);
        let line = match rng.gen_range(0..4) {
            0 => format!("channel depol {q} p=0"),
            1 => format!("channel depol {q} p=0.3"),
            2 => format!("channel depol {q} p=0.75"),
            _ => format!("channel erase {q}"),
        };
        let at = rng.gen_range(0..=ops.len());
        ops.insert(at, line);
    }
    if trace && n > 1 {
        ops.push(format!("trace_out {}", rng.gen_range(0..n)));
    }
    for o in ops {
        s.push_str(&o);
        s.push('\n');
    }
    s
}

/// The fixed 25-circuit end-to-end suite.
pub fn fixed_suite() -> Vec<String> {
    let mut v = vec![
        "qubits 1\nmode dm\n".to_string(),
        "qubits 1\nmode dm\ngate h 0\n".into(),
        "qubits 2\nmode dm\ngate h 0\ngate cnot 0 1\n".into(),
        "qubits 1\nmode dm\nchannel depol 0 p=0.3\n".into(),
        "qubits 1\nmode dm\ngate h 0\nchannel erase 0\n".into(),
        "qubits 2\nmode dm\ngate h 0\ngate cnot 0 1\ntrace_out 1\n".into(),
        "qubits 3\nmode dm\ngate h 0\ngate cnot 0 1\ngate cnot 1 2\nchannel depol 2 p=0.75\n"
            .into(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    while v.len() < 25 {
        let n = 1 + v.len() % 3;
        let gates = rng.gen_range(1..=8);
        let channels = rng.gen_range(0..=3);
        v.push(random_circuit(
            &mut rng,
            n,
            gates,
            channels,
            v.len() % 4 == 0,
        ));
    }
    v
}

/// `⟨|r(q)|²⟩` over a packet with `|a(q)|² ∝ exp(−2σ²(q−k)²)`, from the frequency solver.
pub fn averaged_reflection(
    w: &dmwalk::widget::WidgetGraph,
    port: usize,
    k: f64,
    sigma: f64,
) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in -300..=300 {
        let q = k + i as f64 * 4.0 / (300.0 * sigma);
        let wt = (-2.0 * sigma * sigma * (q - k).powi(2)).exp();
        let s = dmwalk::widget::solve_smatrix(w, q).unwrap();
        num += wt * s.r.column(port).norm_squared();
        den += wt;
    }
    num / den
}
