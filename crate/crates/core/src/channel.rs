//! Channel plans: `O = U·S·V†` on the four local wires of one qubit.
//!
//! The walker crosses `V†`, then damping junctions `D(λ)` on every wire whose
//! singular value is below the largest one, then `U`. When the largest
//! singular value exceeds 1 all values are divided by it and the factor is
//! recorded for post-processing.
//!
//! Degenerate singular subspaces are rotated onto "nice" vectors (basis
//! vectors and `(e_i ± e_j)/√2`, `(e_i ± i·e_j)/√2`) where possible, so that
//! `U` and `V` land in the exactly synthesizable group.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::circuit::{Channel, Superoperator4};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64, ONE, ZERO};
use crate::synth::{self, GateSequence};

const CLUSTER_TOL: f64 = 1e-9;
const SNAP_TOL: f64 = 1e-9;

/// How one of the two SVD unitaries is realized on the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PlanUnitary {
    Widgets(GateSequence),
    /// Not exactly representable; realized as an ideal block.
    Ideal(#[serde(with = "linalg::cmat_serde")] CMat),
}

impl PlanUnitary {
    pub fn is_ideal(&self) -> bool {
        matches!(self, PlanUnitary::Ideal(_))
    }

    pub fn is_identity(&self) -> bool {
        match self {
            PlanUnitary::Widgets(g) => g.ops.is_empty() && g.phase == 0 && g.pad == 0,
            PlanUnitary::Ideal(_) => false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelPlan {
    #[serde(with = "linalg::cmat_serde")]
    pub superop: CMat,
    #[serde(with = "linalg::cmat_serde")]
    pub u: CMat,
    #[serde(with = "linalg::cmat_serde")]
    pub v: CMat,
    /// Descending.
    pub singular_values: [f64; 4],
    /// `singular_values / rescale`, each in `[0, 1]`.
    pub lambdas: [f64; 4],
    pub rescale: f64,
    /// Realizes `V†`.
    pub pre: PlanUnitary,
    /// Realizes `U`.
    pub post: PlanUnitary,
}

impl ChannelPlan {
    pub fn is_abstract(&self) -> bool {
        self.pre.is_ideal() || self.post.is_ideal()
    }

    /// Wires that receive a damping junction.
    pub fn damped_wires(&self) -> Vec<usize> {
        (0..4).filter(|&i| self.lambdas[i] < 1.0 - 1e-12).collect()
    }

    /// `‖U·diag(λ·rescale)·V† − O‖_max`.
    pub fn reconstruction_error(&self) -> f64 {
        let s = CMat::from_diagonal(&DVector::from_fn(4, |i, _| {
            C64::new(self.lambdas[i] * self.rescale, 0.0)
        }));
        linalg::max_abs(&(&self.u * s * self.v.adjoint() - &self.superop))
    }
}

/// Plans a single-qubit channel. With `allow_ideal`, unitaries outside the
/// synthesizable group become ideal blocks instead of an error.
pub fn plan_channel(ch: &Channel, allow_ideal: bool) -> Result<ChannelPlan> {
    let o = ch.superop()?;
    plan_superop(&o, allow_ideal)
}

pub fn plan_superop(o: &Superoperator4, allow_ideal: bool) -> Result<ChannelPlan> {
    let om = linalg::to_dyn4(o.matrix());
    let (u, sigma, v) = snapped_svd(&om);
    let smax = sigma[0];
    let (rescale, lambdas) = if smax > 1.0 + 1e-12 {
        (smax, sigma.map(|s| (s / smax).clamp(0.0, 1.0)))
    } else {
        (1.0, sigma.map(|s| s.clamp(0.0, 1.0)))
    };
    let realize = |m: CMat| -> Result<PlanUnitary> {
        match synth::synthesize_unitary(&m) {
            Ok(seq) => Ok(PlanUnitary::Widgets(seq)),
            Err(Error::NotExactlyRepresentable { .. }) if allow_ideal => Ok(PlanUnitary::Ideal(m)),
            Err(e) => Err(e),
        }
    };
    let pre = realize(v.adjoint())?;
    let post = realize(u.clone())?;
    Ok(ChannelPlan {
        superop: om,
        u,
        v,
        singular_values: sigma,
        lambdas,
        rescale,
        pre,
        post,
    })
}

/// SVD with descending singular values and snapped degenerate subspaces.
pub fn snapped_svd(o: &CMat) -> (CMat, [f64; 4], CMat) {
    let svd = o.clone().svd(true, true);
    let u_raw = svd.u.expect("requested U");
    let vt_raw = svd.v_t.expect("requested V†");
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let sigma: [f64; 4] = std::array::from_fn(|i| svd.singular_values[order[i]]);
    let u_sorted = CMat::from_fn(4, 4, |r, c| u_raw[(r, order[c])]);
    let v_sorted = CMat::from_fn(4, 4, |r, c| vt_raw[(order[c], r)].conj());

    let mut u = CMat::zeros(4, 4);
    let mut v = CMat::zeros(4, 4);
    let mut start = 0;
    let null_from = sigma.iter().position(|&s| s < CLUSTER_TOL).unwrap_or(4);
    while start < null_from {
        let mut end = start + 1;
        while end < null_from
            && (sigma[start] - sigma[end]).abs() < CLUSTER_TOL * sigma[start].max(1.0)
        {
            end += 1;
        }
        let basis = snap_subspace(&u_sorted.columns(start, end - start).into_owned());
        for (i, col) in basis.iter().enumerate() {
            u.set_column(start + i, col);
            let vc = o.adjoint() * col / C64::new(sigma[start + i], 0.0);
            v.set_column(start + i, &vc);
        }
        start = end;
    }
    if null_from < 4 {
        let d = 4 - null_from;
        let ub = snap_subspace(&u_sorted.columns(null_from, d).into_owned());
        let vb = snap_subspace(&complement(
            &v.columns(0, null_from).into_owned(),
            &v_sorted.columns(null_from, d).into_owned(),
        ));
        for i in 0..d {
            u.set_column(null_from + i, &ub[i]);
            v.set_column(null_from + i, &vb[i]);
        }
    }
    let sigma = std::array::from_fn(|i| if i >= null_from { 0.0 } else { sigma[i] });
    (u, sigma, v)
}

/// Orthonormal basis of the complement of `span(taken)`, seeded by `hint`.
fn complement(taken: &CMat, hint: &CMat) -> CMat {
    let mut cols: Vec<DVector<C64>> = Vec::new();
    let candidates = hint
        .column_iter()
        .map(|c| c.into_owned())
        .chain((0..4).map(unit));
    for mut c in candidates {
        for t in taken
            .column_iter()
            .map(|c| c.into_owned())
            .chain(cols.iter().cloned())
        {
            let p = t.dotc(&c);
            c -= t * p;
        }
        let n = c.norm();
        if n > 1e-6 {
            cols.push(c / C64::new(n, 0.0));
        }
        if cols.len() == hint.ncols() {
            break;
        }
    }
    CMat::from_columns(&cols)
}

fn unit(i: usize) -> DVector<C64> {
    DVector::from_fn(4, |r, _| if r == i { ONE } else { ZERO })
}

fn nice_vectors() -> Vec<DVector<C64>> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut out: Vec<DVector<C64>> = (0..4).map(unit).collect();
    for i in 0..4 {
        for j in i + 1..4 {
            for coef in [ONE, -ONE, linalg::I, -linalg::I] {
                let mut v = DVector::from_element(4, ZERO);
                v[i] = C64::new(h, 0.0);
                v[j] = coef * h;
                out.push(v);
            }
        }
    }
    out
}

/// Replaces an orthonormal basis by nice vectors spanning the same space when possible;
/// otherwise returns the original columns with a canonical phase.
fn snap_subspace(basis: &CMat) -> Vec<DVector<C64>> {
    let d = basis.ncols();
    let proj = basis * basis.adjoint();
    let mut chosen: Vec<DVector<C64>> = Vec::new();
    for c in nice_vectors() {
        if chosen.len() == d {
            break;
        }
        if ((&proj * &c).norm() - 1.0).abs() < SNAP_TOL
            && chosen.iter().all(|x| x.dotc(&c).norm() < SNAP_TOL)
        {
            chosen.push(c);
        }
    }
    if chosen.len() == d {
        chosen.sort_by_key(|v| v.iter().position(|z| z.norm() > 1e-12).unwrap_or(4));
        return chosen;
    }
    basis
        .column_iter()
        .map(|c| canonical_phase(c.into_owned()))
        .collect()
}

/// Largest entry made real and positive (first one on ties).
fn canonical_phase(v: DVector<C64>) -> DVector<C64> {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].norm() > v[best].norm() + 1e-12 {
            best = i;
        }
    }
    let z = v[best];
    if z.norm() < 1e-300 {
        return v;
    }
    let ph = z.conj() / z.norm();
    v * ph
}

/// Unitary map from the wire vector `(ρ00, ρ11, ρ01, ρ10)` to `(a0, a1, a2, a3)/√2`,
/// where `ρ = (a0·𝕀 + a1·X + a2·Y + a3·Z)/2`.
#[rustfmt::skip]
pub fn pauli_matrix() -> CMat {
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let i = linalg::I;
    DMatrix::from_row_slice(
        4,
        4,
        &[
            h, h, ZERO, ZERO,
            ZERO, ZERO, h, h,
            ZERO, ZERO, i * h, -i * h,
            h, -h, ZERO, ZERO,
        ],
    )
}

pub fn pauli_transform(v: &[C64; 4]) -> [C64; 4] {
    let m = pauli_matrix();
    std::array::from_fn(|r| (0..4).map(|c| m[(r, c)] * v[c]).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{kraus_to_superop, Channel};
    use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

    fn block_h_identity() -> CMat {
        let mut m = CMat::identity(4, 4);
        let h = linalg::to_dyn2(&linalg::hadamard());
        m.view_mut((0, 0), (2, 2)).copy_from(&h);
        m
    }

    #[test]
    fn depolarizing_plan() {
        let plan = plan_channel(&Channel::Depolarizing { q: 0, p: 0.3 }, false).unwrap();
        let expect = [1.0, 0.6, 0.6, 0.6];
        for i in 0..4 {
            assert!((plan.lambdas[i] - expect[i]).abs() < 1e-12);
        }
        assert_eq!(plan.rescale, 1.0);
        assert!((&plan.u - block_h_identity()).norm() < 1e-12);
        assert!((&plan.v - block_h_identity()).norm() < 1e-12);
        assert!(plan.reconstruction_error() < 1e-10);
        assert_eq!(plan.damped_wires(), vec![1, 2, 3]);
    }

    #[test]
    fn erasure_plan() {
        let plan = plan_channel(&Channel::Erasure { q: 0 }, false).unwrap();
        assert_eq!(plan.lambdas, [1.0, 0.0, 0.0, 0.0]);
        assert!((plan.rescale - SQRT_2).abs() < 1e-12);
        assert!((&plan.u - CMat::identity(4, 4)).norm() < 1e-12);
        assert!((&plan.v - block_h_identity()).norm() < 1e-12);
        assert!(plan.post.is_identity());
        assert!(plan.reconstruction_error() < 1e-10);
    }

    #[test]
    fn identity_channel_plan() {
        let plan = plan_channel(&Channel::Depolarizing { q: 0, p: 0.0 }, false).unwrap();
        assert_eq!(plan.lambdas, [1.0; 4]);
        assert!(plan.pre.is_identity() && plan.post.is_identity());
        assert!(plan.damped_wires().is_empty());
    }

    #[test]
    fn strong_depolarizing_absorbs_sign() {
        let plan = plan_channel(&Channel::Depolarizing { q: 0, p: 0.9 }, false).unwrap();
        assert!(plan.lambdas.iter().all(|&l| (0.0..=1.0).contains(&l)));
        assert!(plan.reconstruction_error() < 1e-10);
        assert!((plan.lambdas[1] - (1.0 - 4.0 * 0.9 / 3.0_f64).abs()).abs() < 1e-12);
    }

    #[test]
    fn amplitude_damping_needs_ideal_blocks() {
        let g: f64 = 0.36;
        let k0 = nalgebra::Matrix2::new(ONE, ZERO, ZERO, C64::new((1.0 - g).sqrt(), 0.0));
        let k1 = nalgebra::Matrix2::new(ZERO, C64::new(g.sqrt(), 0.0), ZERO, ZERO);
        let o = kraus_to_superop(&[k0, k1]).unwrap();
        assert!(matches!(
            plan_superop(&o, false),
            Err(Error::NotExactlyRepresentable { .. })
        ));
        let plan = plan_superop(&o, true).unwrap();
        assert!(plan.is_abstract());
        assert!(plan.reconstruction_error() < 1e-10);
    }

    #[test]
    fn pauli_examples() {
        let h = FRAC_1_SQRT_2;
        let half = C64::new(0.5, 0.0);
        let mixed = pauli_transform(&[half, half, ZERO, ZERO]);
        assert!(
            (mixed[0] - C64::new(h, 0.0)).norm() < 1e-15
                && mixed[1..].iter().all(|z| z.norm() < 1e-15)
        );
        let zero = pauli_transform(&[ONE, ZERO, ZERO, ZERO]);
        assert!((zero[0].re - h).abs() < 1e-15 && (zero[3].re - h).abs() < 1e-15);
        let plus = pauli_transform(&[half; 4]);
        assert!((plus[1].re - h).abs() < 1e-15 && plus[2].norm() < 1e-15);
        let m = pauli_matrix();
        assert!(linalg::unitarity_defect(&m) < 1e-12);
    }
}
