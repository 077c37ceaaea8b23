//! Small dense helpers shared by the oracle, the channel planner and the solver.

use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub type C64 = Complex<f64>;
pub type Mat2 = Matrix2<C64>;
pub type Mat4 = Matrix4<C64>;
pub type CMat = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// `e^{iπm/4}`, computed from exact components so that powers of ω compose without drift.
pub fn omega(m: i64) -> C64 {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    match m.rem_euclid(8) {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(h, h),
        2 => C64::new(0.0, 1.0),
        3 => C64::new(-h, h),
        4 => C64::new(-1.0, 0.0),
        5 => C64::new(-h, -h),
        6 => C64::new(0.0, -1.0),
        _ => C64::new(h, -h),
    }
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `U1 = diag(1, e^{iπ/4})`.
pub fn u1() -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, omega(1))
}

/// `U2 = (1/√2)[[i, 1], [1, i]]`.
pub fn u2() -> Mat2 {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Mat2::new(c(0.0, h), c(h, 0.0), c(h, 0.0), c(0.0, h))
}

pub fn hadamard() -> Mat2 {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Mat2::new(c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0))
}

pub fn pauli_x() -> Mat2 {
    Mat2::new(ZERO, ONE, ONE, ZERO)
}

pub fn pauli_y() -> Mat2 {
    Mat2::new(ZERO, -I, I, ZERO)
}

pub fn pauli_z() -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, -ONE)
}

pub fn mat2_pow(m: &Mat2, p: u32) -> Mat2 {
    (0..p).fold(Mat2::identity(), |acc, _| m * acc)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry of `|M†M − I|`.
pub fn unitarity_defect(m: &CMat) -> f64 {
    let n = m.ncols();
    let g = m.adjoint() * m - CMat::identity(n, n);
    max_abs(&g)
}

pub fn to_dyn2(m: &Mat2) -> CMat {
    CMat::from_fn(2, 2, |r, c| m[(r, c)])
}

pub fn to_dyn4(m: &Mat4) -> CMat {
    CMat::from_fn(4, 4, |r, c| m[(r, c)])
}

/// Distance between `a` and `b` after removing the best global phase from `a`.
/// Returns `(max entry error, phase)` where `a ≈ phase · b`.
pub fn phase_aligned_error(a: &CMat, b: &CMat) -> (f64, C64) {
    let overlap: C64 = b.iter().zip(a.iter()).map(|(x, y)| x.conj() * y).sum();
    let phase = if overlap.norm() > 1e-300 {
        overlap / overlap.norm()
    } else {
        ONE
    };
    let err = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - phase * y).norm())
        .fold(0.0, f64::max);
    (err, phase)
}

pub fn format_matrix(m: &CMat) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|r| {
            let cols: Vec<String> = (0..m.ncols())
                .map(|c| format!("{:.6}{:+.6}i", m[(r, c)].re, m[(r, c)].im))
                .collect();
            format!("[{}]", cols.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

/// Serde adapter: complex matrices as row lists of `[re, im]` pairs.
pub mod cmat_serde {
    use super::*;

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows())
            .map(|r| {
                (0..m.ncols())
                    .map(|c| [m[(r, c)].re, m[(r, c)].im])
                    .collect()
            })
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMat, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        rows_to_cmat(&rows).map_err(serde::de::Error::custom)
    }
}

pub fn rows_to_cmat(rows: &[Vec<[f64; 2]>]) -> Result<CMat, String> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != nc) {
        return Err("ragged matrix rows".into());
    }
    Ok(CMat::from_fn(nr, nc, |r, c| {
        C64::new(rows[r][c][0], rows[r][c][1])
    }))
}
