//! Exact arithmetic over `ℤ[ω, 1/√2]` (ω = e^{iπ/4}) and exact single-qubit
//! synthesis over `{H, T}`.
//!
//! Every unitary reachable from `U1 = T`, `U2`, `H` and their conjugates has
//! entries of the form `z / √2^k` with `z ∈ ℤ[ω]`. Floating-point matrices are
//! first recognized as such exact matrices, then reduced by the smallest
//! denominator exponent of `|u00|²` until a small lookup table applies.

use std::collections::{HashMap, VecDeque};
use std::sync::OnceLock;

use crate::linalg::{Mat2, C64};

/// `a + bω + cω² + dω³`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ZOmega {
    pub a: i64,
    pub b: i64,
    pub c: i64,
    pub d: i64,
}

#[allow(clippy::should_implement_trait)]
impl ZOmega {
    pub const ZERO: ZOmega = ZOmega {
        a: 0,
        b: 0,
        c: 0,
        d: 0,
    };
    pub const ONE: ZOmega = ZOmega {
        a: 1,
        b: 0,
        c: 0,
        d: 0,
    };
    /// `√2 = ω − ω³`.
    pub const SQRT2: ZOmega = ZOmega {
        a: 0,
        b: 1,
        c: 0,
        d: -1,
    };

    pub fn new(a: i64, b: i64, c: i64, d: i64) -> Self {
        Self { a, b, c, d }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }

    pub fn add(self, o: Self) -> Self {
        Self::new(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)
    }

    pub fn neg(self) -> Self {
        Self::new(-self.a, -self.b, -self.c, -self.d)
    }

    pub fn mul(self, o: Self) -> Self {
        let (a, b, c, d) = (self.a, self.b, self.c, self.d);
        let (e, f, g, h) = (o.a, o.b, o.c, o.d);
        Self::new(
            a * e - b * h - c * g - d * f,
            a * f + b * e - c * h - d * g,
            a * g + b * f + c * e - d * h,
            a * h + b * g + c * f + d * e,
        )
    }

    /// Multiplication by ω.
    pub fn mul_omega(self) -> Self {
        Self::new(-self.d, self.a, self.b, self.c)
    }

    pub fn conj(self) -> Self {
        Self::new(self.a, -self.d, -self.c, -self.b)
    }

    pub fn divisible_by_sqrt2(&self) -> bool {
        (self.a - self.c).rem_euclid(2) == 0 && (self.b - self.d).rem_euclid(2) == 0
    }

    /// Exact division by √2; caller checks divisibility.
    pub fn div_sqrt2(self) -> Self {
        Self::new(
            (self.b - self.d) / 2,
            (self.a + self.c) / 2,
            (self.b + self.d) / 2,
            (self.c - self.a) / 2,
        )
    }

    pub fn to_complex(self) -> C64 {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        C64::new(
            self.a as f64 + h * (self.b - self.d) as f64,
            self.c as f64 + h * (self.b + self.d) as f64,
        )
    }
}

/// `z / √2^k`, kept with the smallest `k ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DOmega {
    pub z: ZOmega,
    pub k: u32,
}

#[allow(clippy::should_implement_trait)]
impl DOmega {
    pub const ZERO: DOmega = DOmega {
        z: ZOmega::ZERO,
        k: 0,
    };
    pub const ONE: DOmega = DOmega {
        z: ZOmega::ONE,
        k: 0,
    };

    pub fn new(z: ZOmega, k: u32) -> Self {
        let mut out = Self { z, k };
        out.reduce();
        out
    }

    fn reduce(&mut self) {
        if self.z.is_zero() {
            self.k = 0;
            return;
        }
        while self.k > 0 && self.z.divisible_by_sqrt2() {
            self.z = self.z.div_sqrt2();
            self.k -= 1;
        }
    }

    fn scaled_to(self, k: u32) -> ZOmega {
        (self.k..k).fold(self.z, |z, _| z.mul(ZOmega::SQRT2))
    }

    pub fn add(self, o: Self) -> Self {
        let k = self.k.max(o.k);
        Self::new(self.scaled_to(k).add(o.scaled_to(k)), k)
    }

    pub fn mul(self, o: Self) -> Self {
        Self::new(self.z.mul(o.z), self.k + o.k)
    }

    pub fn conj(self) -> Self {
        Self {
            z: self.z.conj(),
            k: self.k,
        }
    }

    pub fn mul_omega_pow(self, m: u32) -> Self {
        let z = (0..m % 8).fold(self.z, |z, _| z.mul_omega());
        Self { z, k: self.k }
    }

    pub fn div_sqrt2(self) -> Self {
        Self::new(self.z, self.k + 1)
    }

    pub fn is_zero(&self) -> bool {
        self.z.is_zero()
    }

    pub fn to_complex(self) -> C64 {
        self.z.to_complex() * std::f64::consts::FRAC_1_SQRT_2.powi(self.k as i32)
    }

    /// Smallest denominator exponent of `|self|²`.
    pub fn sde_abs2(self) -> u32 {
        self.mul(self.conj()).k
    }

    /// Recognize a floating-point value as `z / √2^k` with `k ≤ max_k`.
    ///
    /// `bound` caps the modulus of the value's Galois conjugate (√2 ↦ −√2);
    /// it is 1 for entries of a unitary.
    pub fn recognize(v: C64, max_k: u32, bound: f64, tol: f64) -> Option<Self> {
        for k in 0..=max_k {
            let scale = std::f64::consts::SQRT_2.powi(k as i32);
            let re = recognize_real(v.re * scale, bound * scale, tol * scale.max(1.0));
            let im = recognize_real(v.im * scale, bound * scale, tol * scale.max(1.0));
            for &(a, m) in &re {
                for &(c, n) in &im {
                    if (m - n).rem_euclid(2) == 0 {
                        let z = ZOmega::new(a, (m + n) / 2, c, (n - m) / 2);
                        return Some(Self::new(z, k));
                    }
                }
            }
        }
        None
    }
}

/// All `(a, m)` with `x ≈ a + m/√2` and `|a − m/√2| ≤ bound`.
fn recognize_real(x: f64, bound: f64, tol: f64) -> Vec<(i64, i64)> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let m_max = ((x.abs() + bound) * h).ceil() as i64 + 1;
    let mut out = Vec::new();
    for m in -m_max..=m_max {
        let rest = x - m as f64 * h;
        let a = rest.round();
        if (rest - a).abs() < tol && (a - m as f64 * h).abs() <= bound + tol {
            out.push((a as i64, m));
        }
    }
    out
}

/// Exact 2×2 matrix, row major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ExactMat2(pub [DOmega; 4]);

impl ExactMat2 {
    pub fn identity() -> Self {
        Self([DOmega::ONE, DOmega::ZERO, DOmega::ZERO, DOmega::ONE])
    }

    pub fn h() -> Self {
        let s = DOmega::new(ZOmega::ONE, 1);
        Self([s, s, s, DOmega::new(ZOmega::ONE.neg(), 1)])
    }

    pub fn t() -> Self {
        Self([
            DOmega::ONE,
            DOmega::ZERO,
            DOmega::ZERO,
            DOmega::ONE.mul_omega_pow(1),
        ])
    }

    pub fn mul(&self, o: &Self) -> Self {
        let [a, b, c, d] = self.0;
        let [e, f, g, h] = o.0;
        Self([
            a.mul(e).add(b.mul(g)),
            a.mul(f).add(b.mul(h)),
            c.mul(e).add(d.mul(g)),
            c.mul(f).add(d.mul(h)),
        ])
    }

    pub fn adjoint(&self) -> Self {
        let [a, b, c, d] = self.0;
        Self([a.conj(), c.conj(), b.conj(), d.conj()])
    }

    pub fn mul_omega_pow(&self, m: u32) -> Self {
        Self(self.0.map(|x| x.mul_omega_pow(m)))
    }

    pub fn is_unitary(&self) -> bool {
        self.adjoint().mul(self) == Self::identity()
    }

    pub fn to_mat2(&self) -> Mat2 {
        Mat2::new(
            self.0[0].to_complex(),
            self.0[1].to_complex(),
            self.0[2].to_complex(),
            self.0[3].to_complex(),
        )
    }

    pub fn recognize(m: &Mat2, max_k: u32, tol: f64) -> Option<Self> {
        let mut entries = [DOmega::ZERO; 4];
        for (i, e) in entries.iter_mut().enumerate() {
            *e = DOmega::recognize(m[(i / 2, i % 2)], max_k, 1.0, tol)?;
        }
        let out = Self(entries);
        out.is_unitary().then_some(out)
    }

    /// Representative of `{ω^m · self}` and the `m` that produces it.
    fn canonical(&self) -> (Self, u32) {
        (0..8)
            .map(|m| (self.mul_omega_pow(m), m))
            .min_by_key(|(x, _)| x.key())
            .expect("eight candidates")
    }

    fn key(&self) -> [(i64, i64, i64, i64, u32); 4] {
        self.0.map(|x| (x.z.a, x.z.b, x.z.c, x.z.d, x.k))
    }
}

/// Generators of exact words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Clifford {
    H,
    /// `T^m`, m in 1..8.
    T(u8),
}

impl Clifford {
    pub fn exact(&self) -> ExactMat2 {
        match *self {
            Clifford::H => ExactMat2::h(),
            Clifford::T(m) => {
                let mut t = ExactMat2::identity();
                t.0[3] = DOmega::ONE.mul_omega_pow(m as u32);
                t
            }
        }
    }
}

/// An exact word: `target = ω^phase · g_last ⋯ g_first`, `gates` in application order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactWord {
    pub gates: Vec<Clifford>,
    pub phase: u32,
}

impl ExactWord {
    pub fn product(&self) -> ExactMat2 {
        self.gates
            .iter()
            .fold(ExactMat2::identity(), |acc, g| g.exact().mul(&acc))
            .mul_omega_pow(self.phase)
    }
}

/// Table of all unitaries with `sde(|u00|²) ≤ 3`, keyed modulo global phase.
struct BaseTable {
    words: HashMap<ExactMat2, (Vec<Clifford>, u32)>,
}

const TABLE_SDE: u32 = 3;
const SEARCH_SDE: u32 = 6;

fn base_table() -> &'static BaseTable {
    static TABLE: OnceLock<BaseTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        // Breadth-first over left multiplication by H and T. States whose
        // |u00|² denominator exceeds SEARCH_SDE are not expanded further.
        let mut words: HashMap<ExactMat2, (Vec<Clifford>, u32)> = HashMap::new();
        let mut queue = VecDeque::new();
        let (id, m0) = ExactMat2::identity().canonical();
        words.insert(id, (Vec::new(), m0));
        queue.push_back((ExactMat2::identity(), Vec::<Clifford>::new()));
        let mut seen = std::collections::HashSet::new();
        seen.insert(id);
        while let Some((m, word)) = queue.pop_front() {
            for g in [Clifford::H, Clifford::T(1)] {
                let next = g.exact().mul(&m);
                let (canon, phase) = next.canonical();
                if !seen.insert(canon) {
                    continue;
                }
                let mut w = word.clone();
                w.push(g);
                let sde = next.0[0].sde_abs2();
                if sde <= TABLE_SDE {
                    // canon = ω^phase · next = ω^phase · word
                    words.insert(canon, (w.clone(), phase));
                }
                if sde <= SEARCH_SDE {
                    queue.push_back((next, w));
                }
            }
        }
        BaseTable { words }
    })
}

/// Number of entries in the base lookup table.
pub fn base_table_len() -> usize {
    base_table().words.len()
}

/// Exact synthesis of an exact unitary into `{H, T}` plus a global phase.
pub fn synthesize_exact(u: &ExactMat2) -> Option<ExactWord> {
    let mut current = *u;
    // Reduction steps U ← H T^j U, recorded as the inverse factors T^{-j} H.
    let mut prefix: Vec<Clifford> = Vec::new();
    let mut guard = 0;
    loop {
        let s = current.0[0].sde_abs2();
        if s <= TABLE_SDE {
            break;
        }
        guard += 1;
        if guard > 10_000 {
            return None;
        }
        let mut reduced = None;
        for j in 0..8u8 {
            let step = Clifford::H.exact().mul(&Clifford::T(j).exact_or_identity());
            let candidate = step.mul(&current);
            if candidate.0[0].sde_abs2() < s {
                reduced = Some((j, candidate));
                break;
            }
        }
        let (j, next) = reduced?;
        // U = T^{-j} H · next, so the left-to-right matrix factors are T^{-j}, H.
        if j != 0 {
            prefix.push(Clifford::T((8 - j) % 8));
        }
        prefix.push(Clifford::H);
        current = next;
    }
    let (canon, canon_phase) = current.canonical();
    let (base_word, base_phase) = base_table().words.get(&canon)?;
    // canon = ω^canon_phase · current and canon = ω^base_phase · W,
    // so current = ω^(base_phase − canon_phase) · W.
    let phase = (base_phase + 8 - canon_phase) % 8;
    // Application order: W first, then the prefix factors from right to left.
    let mut gates = base_word.clone();
    gates.extend(prefix.iter().rev().copied());
    let word = ExactWord { gates, phase };
    (word.product() == *u).then_some(word)
}

impl Clifford {
    fn exact_or_identity(&self) -> ExactMat2 {
        match self {
            Clifford::T(0) => ExactMat2::identity(),
            other => other.exact(),
        }
    }
}
