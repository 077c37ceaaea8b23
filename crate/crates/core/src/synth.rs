//! Exact synthesis of wire unitaries into the widget gate set.
//!
//! A [`GateSequence`] is a time-ordered list of primitives on local wires:
//! phase widgets (`U1Pow`), chained `U2` widgets (`U2Pow`) and crossings. Its
//! product equals the target up to a global phase `ω^phase`, ω = e^{iπ/4}.
//! A uniform pad of `pad` chain nodes on every wire multiplies the realized
//! product by `ω^pad` at the operating momentum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, Mat2, C64, ONE, ZERO};
use crate::ring::{Clifford, ExactMat2};

/// Tolerance for unitarity of synthesis inputs.
pub const UNITARY_TOLERANCE: f64 = 1e-10;
/// Entry tolerance for the round trip product × phase = target.
pub const SYNTH_TOLERANCE: f64 = 1e-9;
const MAX_DENOMINATOR: u32 = 24;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Prim {
    /// Phase `ω^m` on one wire (the `U1^m` widget placed on the `|1⟩` wire).
    U1Pow { wire: usize, m: u8 },
    /// `U2^m` on the ordered wire pair `(a, b)`.
    U2Pow { a: usize, b: usize, m: u8 },
    /// The content of wire `w` moves to wire `perm[w]`.
    Cross { perm: Vec<usize> },
}

impl Prim {
    pub fn matrix(&self, n: usize) -> CMat {
        let mut m = CMat::identity(n, n);
        match self {
            Prim::U1Pow { wire, m: p } => m[(*wire, *wire)] = linalg::omega(*p as i64),
            Prim::U2Pow { a, b, m: p } => {
                let u = linalg::mat2_pow(&linalg::u2(), *p as u32);
                let idx = [*a, *b];
                for r in 0..2 {
                    for c in 0..2 {
                        m[(idx[r], idx[c])] = u[(r, c)];
                    }
                }
            }
            Prim::Cross { perm } => {
                m.fill(ZERO);
                for (w, &dest) in perm.iter().enumerate() {
                    m[(dest, w)] = ONE;
                }
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateSequence {
    pub n_wires: usize,
    pub ops: Vec<Prim>,
    /// Extra chain nodes on every wire.
    pub pad: u8,
    /// `ω^pad · Π ops = ω^phase · target`.
    pub phase: u8,
}

impl GateSequence {
    pub fn identity(n_wires: usize) -> Self {
        Self {
            n_wires,
            ops: Vec::new(),
            pad: 0,
            phase: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty() && self.pad == 0
    }

    /// Product of the primitives in application order, without the pad.
    pub fn ops_product(&self) -> CMat {
        self.ops
            .iter()
            .fold(CMat::identity(self.n_wires, self.n_wires), |acc, p| {
                p.matrix(self.n_wires) * acc
            })
    }

    /// Realized matrix: primitives plus the uniform pad.
    pub fn realized(&self) -> CMat {
        self.ops_product() * linalg::omega(self.pad as i64)
    }

    /// Fold the recorded global phase into the pad so that the realized matrix equals the target.
    pub fn exact(mut self) -> Self {
        self.pad = ((self.pad as i32 - self.phase as i32).rem_euclid(8)) as u8;
        self.phase = 0;
        self
    }

    /// Number of U2 widgets and phase nodes used, for resource estimates.
    pub fn widget_count(&self) -> usize {
        self.ops
            .iter()
            .map(|p| match p {
                Prim::U2Pow { m, .. } => *m as usize,
                Prim::U1Pow { .. } => 1,
                Prim::Cross { .. } => 0,
            })
            .sum()
    }
}

/// Realizes the entry-wise complex conjugate of `g`'s realized matrix.
pub fn conjugate_sequence(g: &GateSequence) -> GateSequence {
    let mut sign_flips = 0u32;
    let ops = g
        .ops
        .iter()
        .map(|p| match p {
            Prim::U1Pow { wire, m } => Prim::U1Pow {
                wire: *wire,
                m: ((8 - *m as u32) % 8) as u8,
            },
            Prim::U2Pow { a, b, m } => {
                // conj(U2) = −U2³ and U2⁴ = −I.
                let m = *m as u32 % 4;
                let total = 3 * m;
                sign_flips += m + total / 4;
                Prim::U2Pow {
                    a: *a,
                    b: *b,
                    m: (total % 4) as u8,
                }
            }
            Prim::Cross { perm } => Prim::Cross { perm: perm.clone() },
        })
        .filter(|p| !matches!(p, Prim::U1Pow { m: 0, .. } | Prim::U2Pow { m: 0, .. }))
        .collect();
    let pad = ((8 - g.pad as u32) + 4 * sign_flips) % 8;
    GateSequence {
        n_wires: g.n_wires,
        ops,
        pad: pad as u8,
        phase: ((8 - g.phase as u32) % 8) as u8,
    }
}

/// Synthesizes a 2×2 unitary, or a 4×4 unitary whose wires split into
/// independent one- and two-wire blocks followed by a permutation.
pub fn synthesize_unitary(m: &CMat) -> Result<GateSequence> {
    let n = m.nrows();
    if m.ncols() != n || n == 0 {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}×{}",
            n,
            m.ncols()
        )));
    }
    let defect = linalg::unitarity_defect(m);
    if defect > UNITARY_TOLERANCE {
        return Err(Error::NotUnitary { deviation: defect });
    }
    let fail = || Error::NotExactlyRepresentable {
        matrix: linalg::format_matrix(m),
    };

    // Connected components of the bipartite sparsity pattern (inputs ↔ outputs).
    let mut parent: Vec<usize> = (0..2 * n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for r in 0..n {
        for c in 0..n {
            if m[(r, c)].norm() > 1e-9 {
                let (a, b) = (find(&mut parent, c), find(&mut parent, n + r));
                parent[a] = b;
            }
        }
    }
    let mut blocks: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for c in 0..n {
        let root = find(&mut parent, c);
        if blocks
            .iter()
            .any(|(ins, _)| find(&mut parent, ins[0]) == root)
        {
            continue;
        }
        let ins: Vec<usize> = (0..n).filter(|&x| find(&mut parent, x) == root).collect();
        let outs: Vec<usize> = (0..n)
            .filter(|&x| find(&mut parent, n + x) == root)
            .collect();
        if ins.len() != outs.len() || ins.len() > 2 {
            return Err(fail());
        }
        blocks.push((ins, outs));
    }

    let mut ops = Vec::new();
    let mut global: Option<u8> = None;
    let mut singles = Vec::new();
    for (ins, outs) in &blocks {
        if ins.len() == 2 {
            let block = Mat2::from_fn(|r, c| m[(outs[r], ins[c])]);
            let local = synthesize_2x2(&block).ok_or_else(fail)?;
            let (a, b) = (ins[0], ins[1]);
            for p in &local.ops {
                ops.push(match p {
                    Prim::U1Pow { wire, m } => Prim::U1Pow {
                        wire: if *wire == 0 { a } else { b },
                        m: *m,
                    },
                    Prim::U2Pow { m, .. } => Prim::U2Pow { a, b, m: *m },
                    Prim::Cross { .. } => unreachable!("2×2 synthesis emits no crossings"),
                });
            }
            match global {
                None => global = Some(local.phase),
                Some(g) => {
                    let fix = ((g as i32 - local.phase as i32).rem_euclid(8)) as u8;
                    if fix != 0 {
                        ops.push(Prim::U1Pow { wire: a, m: fix });
                        ops.push(Prim::U1Pow { wire: b, m: fix });
                    }
                }
            }
        } else {
            singles.push((ins[0], outs[0]));
        }
    }
    let phase = global.unwrap_or(0);
    for (wire, out) in singles {
        let z = m[(out, wire)];
        let p = omega_power(z).ok_or_else(fail)?;
        let total = (p + phase as u32) % 8;
        if total != 0 {
            ops.push(Prim::U1Pow {
                wire,
                m: total as u8,
            });
        }
    }
    let mut perm = vec![0; n];
    for (ins, outs) in &blocks {
        for (i, o) in ins.iter().zip(outs) {
            perm[*i] = *o;
        }
    }
    if perm.iter().enumerate().any(|(i, &p)| i != p) {
        ops.push(Prim::Cross { perm });
    }
    let seq = GateSequence {
        n_wires: n,
        ops,
        pad: 0,
        phase,
    };
    let err = (seq.realized() - m * linalg::omega(phase as i64))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if err > SYNTH_TOLERANCE {
        return Err(fail());
    }
    Ok(seq)
}

fn omega_power(z: C64) -> Option<u32> {
    (0..8u32).find(|&p| (z - linalg::omega(p as i64)).norm() < 1e-9)
}

/// Synthesis of a 2×2 unitary on local wires `(0, 1)`.
fn synthesize_2x2(u: &Mat2) -> Option<GateSequence> {
    if let Some(seq) = short_form(u) {
        return Some(seq);
    }
    let exact = ExactMat2::recognize(u, MAX_DENOMINATOR, 1e-9)?;
    let word = crate::ring::synthesize_exact(&exact)?;
    // u = ω^word.phase · Π gates; each H is realized as U1²·U2·U1² = ω² H.
    let mut ops = Vec::new();
    let mut h_count = 0u32;
    for g in &word.gates {
        match g {
            Clifford::T(m) => ops.push(Prim::U1Pow { wire: 1, m: *m % 8 }),
            Clifford::H => {
                h_count += 1;
                ops.push(Prim::U1Pow { wire: 1, m: 2 });
                ops.push(Prim::U2Pow { a: 0, b: 1, m: 1 });
                ops.push(Prim::U1Pow { wire: 1, m: 2 });
            }
        }
    }
    let phase = (2 * h_count + 8 - word.phase % 8) % 8;
    let (ops, extra) = simplify(ops);
    Some(GateSequence {
        n_wires: 2,
        ops,
        pad: 0,
        phase: ((phase + extra) % 8) as u8,
    })
}

/// `U1^a · U2^b · U1^c` forms, tried before the general reduction so that
/// circuit gates keep their textbook decompositions.
fn short_form(u: &Mat2) -> Option<GateSequence> {
    let mut best: Option<(usize, GateSequence)> = None;
    for b in 0..4u8 {
        for a in 0..8u8 {
            for c in 0..8u8 {
                let mut ops = Vec::new();
                if c != 0 {
                    ops.push(Prim::U1Pow { wire: 1, m: c });
                }
                if b != 0 {
                    ops.push(Prim::U2Pow { a: 0, b: 1, m: b });
                }
                if a != 0 {
                    ops.push(Prim::U1Pow { wire: 1, m: a });
                }
                let seq = GateSequence {
                    n_wires: 2,
                    ops,
                    pad: 0,
                    phase: 0,
                };
                let prod = seq.ops_product();
                // prod = ω^p · u for some p?
                let target = linalg::to_dyn2(u);
                for p in 0..8u8 {
                    let err = (&prod - &target * linalg::omega(p as i64))
                        .iter()
                        .map(|z| z.norm())
                        .fold(0.0, f64::max);
                    if err < 1e-10 {
                        let cost = seq.widget_count();
                        if best.as_ref().is_none_or(|(c0, _)| cost < *c0) {
                            best = Some((
                                cost,
                                GateSequence {
                                    phase: p,
                                    ..seq.clone()
                                },
                            ));
                        }
                    }
                }
            }
        }
    }
    best.map(|(_, s)| s)
}

/// Merges adjacent powers; returns the extra global phase (in ω units) picked up
/// by reducing `U2^m` modulo 4.
fn simplify(ops: Vec<Prim>) -> (Vec<Prim>, u32) {
    let mut out: Vec<Prim> = Vec::new();
    let mut extra = 0u32;
    for p in ops {
        match (out.last_mut(), &p) {
            (Some(Prim::U1Pow { wire: w0, m: m0 }), Prim::U1Pow { wire, m }) if w0 == wire => {
                *m0 = (*m0 + *m) % 8;
                if *m0 == 0 {
                    out.pop();
                }
            }
            (
                Some(Prim::U2Pow {
                    a: a0,
                    b: b0,
                    m: m0,
                }),
                Prim::U2Pow { a, b, m },
            ) if a0 == a && b0 == b => {
                let total = *m0 as u32 + *m as u32;
                // U2^total = (−1)^{total/4} U2^{total mod 4}; the dropped sign moves into the phase.
                extra += 4 * (total / 4);
                *m0 = (total % 4) as u8;
                if *m0 == 0 {
                    out.pop();
                }
            }
            _ => out.push(p),
        }
    }
    (out, extra % 8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hadamard, to_dyn2, u1, u2};

    fn assert_roundtrip(target: &CMat, seq: &GateSequence) {
        let err = (seq.realized() - target * linalg::omega(seq.phase as i64))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "round trip error {err}");
    }

    #[test]
    fn hadamard_uses_u1_squared_sandwich() {
        let seq = synthesize_unitary(&to_dyn2(&hadamard())).unwrap();
        assert_eq!(
            seq.ops,
            vec![
                Prim::U1Pow { wire: 1, m: 2 },
                Prim::U2Pow { a: 0, b: 1, m: 1 },
                Prim::U1Pow { wire: 1, m: 2 }
            ]
        );
        // The product is i·H.
        assert_eq!(seq.phase, 2);
        let err = (seq.ops_product() - to_dyn2(&hadamard()) * linalg::I).norm();
        assert!(err < 1e-12);
    }

    #[test]
    fn conjugate_u2_needs_sign_pad() {
        let target = to_dyn2(&u2().map(|z| z.conj()));
        let seq = synthesize_unitary(&target).unwrap();
        assert_eq!(seq.phase, 4);
        let exact = seq.exact();
        assert_eq!(exact.pad, 4);
        assert!((exact.realized() - &target).norm() < 1e-12);
    }

    #[test]
    fn identity_is_empty() {
        let seq = synthesize_unitary(&CMat::identity(2, 2)).unwrap();
        assert!(seq.ops.is_empty());
        assert_eq!(seq.phase, 0);
    }

    #[test]
    fn conjugation_rules() {
        let t = GateSequence {
            n_wires: 2,
            ops: vec![Prim::U1Pow { wire: 1, m: 1 }],
            pad: 0,
            phase: 0,
        };
        assert_eq!(
            conjugate_sequence(&t).ops,
            vec![Prim::U1Pow { wire: 1, m: 7 }]
        );

        let cross = GateSequence {
            n_wires: 2,
            ops: vec![Prim::Cross { perm: vec![1, 0] }],
            pad: 0,
            phase: 0,
        };
        assert_eq!(conjugate_sequence(&cross).ops, cross.ops);

        // i·H conjugates to −i·H.
        let ih = synthesize_unitary(&to_dyn2(&hadamard())).unwrap();
        let conj = conjugate_sequence(&ih);
        let expected = to_dyn2(&hadamard()) * (-linalg::I);
        assert!((conj.realized() - expected).norm() < 1e-12);
    }

    #[test]
    fn conjugate_realizes_entrywise_conjugate() {
        for b in 0..4u8 {
            for a in 0..8u8 {
                let m = to_dyn2(
                    &(linalg::mat2_pow(&u1(), a as u32) * linalg::mat2_pow(&u2(), b as u32)),
                );
                let seq = synthesize_unitary(&m).unwrap();
                let conj = conjugate_sequence(&seq);
                assert!((conj.realized() - seq.realized().map(|z| z.conj())).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn block_diagonal_with_crossing() {
        // H on wires (0,1), identity on 2, phase i on 3, then swap 2↔3.
        let h = hadamard();
        let mut m = CMat::zeros(4, 4);
        m[(0, 0)] = h[(0, 0)];
        m[(0, 1)] = h[(0, 1)];
        m[(1, 0)] = h[(1, 0)];
        m[(1, 1)] = h[(1, 1)];
        m[(3, 2)] = ONE;
        m[(2, 3)] = linalg::I;
        let seq = synthesize_unitary(&m).unwrap();
        assert_roundtrip(&m, &seq);
        assert!(seq.ops.iter().any(|p| matches!(p, Prim::Cross { .. })));
    }

    #[test]
    fn rejects_irrational_rotation() {
        let m = CMat::from_row_slice(
            2,
            2,
            &[
                C64::new(0.6, 0.0),
                C64::new(-0.8, 0.0),
                C64::new(0.8, 0.0),
                C64::new(0.6, 0.0),
            ],
        );
        assert!(matches!(
            synthesize_unitary(&m),
            Err(Error::NotExactlyRepresentable { .. })
        ));
        let not_unitary = CMat::from_element(2, 2, ONE);
        assert!(matches!(
            synthesize_unitary(&not_unitary),
            Err(Error::NotUnitary { .. })
        ));
    }

    #[test]
    fn long_products_round_trip() {
        let gens = [to_dyn2(&u1()), to_dyn2(&u2()), to_dyn2(&hadamard())];
        let mut state = 7u64;
        for len in [3, 10, 25] {
            for _ in 0..6 {
                let mut m = CMat::identity(2, 2);
                for _ in 0..len {
                    state = state
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    let g = &gens[(state >> 33) as usize % 3];
                    m = g * m;
                }
                let seq = synthesize_unitary(&m).unwrap();
                assert_roundtrip(&m, &seq);
            }
        }
    }
}
