mod common;

use common::*;
use dmwalk::circuit::parse_circuit;
use dmwalk::compile::compile;
use dmwalk::linalg::C64;
use dmwalk::scatter::{self, solve_frequency};
use dmwalk::{oracle, K_OPERATING};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check(text: &str) -> f64 {
    let spec = parse_circuit(text).unwrap();
    let g = compile(&spec).unwrap();
    let w = solve_frequency(&g, K_OPERATING).unwrap();
    let rho = reference_rho(&spec);
    max_dev(&w.amps, w.trace_scale, &rho)
}

#[test]
fn fixed_suite_matches_reference() {
    for text in fixed_suite() {
        let dev = check(&text);
        assert!(dev < 1e-8, "deviation {dev:.2e} for\n{text}");
    }
}

#[test]
fn random_circuits_match_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..40 {
        let n = 1 + i % 3;
        let (gates, channels) = (rng.gen_range(0..=8), rng.gen_range(0..=3));
        let text = random_circuit(&mut rng, n, gates, channels, i % 3 == 1);
        let dev = check(&text);
        assert!(dev < 1e-8, "deviation {dev:.2e} for\n{text}");
    }
}

#[test]
fn library_oracle_agrees_with_reference() {
    for text in fixed_suite() {
        let spec = parse_circuit(&text).unwrap();
        let a = oracle::simulate(&spec).unwrap();
        let b = reference_rho(&spec);
        assert!(
            (&a.rho - &b).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-12,
            "{text}"
        );
    }
}

#[test]
fn pure_mode_matches_state_vector() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..20 {
        let n = 1 + i % 3;
        let text = random_circuit(&mut rng, n, 6, 0, false).replace("mode dm", "mode pure");
        let spec = parse_circuit(&text).unwrap();
        let g = compile(&spec).unwrap();
        let w = solve_frequency(&g, K_OPERATING).unwrap();
        let rho = reference_rho(&spec);
        // |ψ⟩ is the first column of ρ = |ψ⟩⟨ψ| up to ψ₀*; compare ψψ† instead
        let d = 1 << n;
        let outer = |i: usize, j: usize| w.amps[i] * w.amps[j].conj();
        let dev = (0..d * d)
            .map(|x| (outer(x / d, x % d) - rho[(x / d, x % d)]).norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-9, "{text}");
        let norm: f64 = w.amps.iter().map(|a| a.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-9);
    }
}

#[test]
fn purity_and_survival_readouts() {
    for text in fixed_suite() {
        let spec = parse_circuit(&text).unwrap();
        let g = compile(&spec).unwrap();
        let w = solve_frequency(&g, K_OPERATING).unwrap();
        let rho = reference_rho(&spec);
        let p = purity(&rho);
        let readout = if g.n_kept < spec.n_qubits {
            scatter::subsystem_purity(&w)
        } else {
            scatter::purity_from_wires(&w)
        };
        assert!((readout - p).abs() < 1e-8, "{text}");
        let unital = !text.contains("erase");
        if unital && g.n_kept == spec.n_qubits {
            assert!(
                (scatter::survival_probability(&w) - p).abs() < 1e-8,
                "{text}"
            );
        }
    }
}

#[test]
fn trace_normalization_on_wires() {
    // after phase removal the diagonal-wire sum is Tr ρ = 1
    for text in fixed_suite() {
        let spec = parse_circuit(&text).unwrap();
        let g = compile(&spec).unwrap();
        let w = solve_frequency(&g, K_OPERATING).unwrap();
        let d = 1 << g.n_kept;
        let tr: C64 = (0..d).map(|i| w.amps[i * d + i] * w.trace_scale).sum();
        assert!((tr - C64::new(1.0, 0.0)).norm() < 1e-8, "{text}: {tr}");
    }
}

#[test]
fn rescale_free_flux_balance() {
    // Σ|amp|² over all terminals + drains = 1 when nothing was rescaled
    for text in fixed_suite().into_iter().filter(|t| !t.contains("erase")) {
        let spec = parse_circuit(&text).unwrap();
        let g = compile(&spec).unwrap();
        let w = solve_frequency(&g, K_OPERATING).unwrap();
        let total: f64 = w
            .amps
            .iter()
            .chain(&w.discarded)
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            + w.drain_total;
        assert!((total - 1.0).abs() < 1e-8, "{text}: {total}");
    }
}

#[test]
fn ket_bra_pairing_gives_conjugation() {
    // every gate alone on random ρ: transfer matrix equals U ⊗ conj(U) on vec(ρ)
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for g in ["h 0", "u1 0", "u2 0", "u2 0 pow=3", "u1 0 pow=5"] {
        let spec = parse_circuit(&format!("qubits 1\nmode dm\ngate {g}\n")).unwrap();
        let sg = compile(&spec).unwrap();
        let t = scatter::transfer_matrix(&sg, K_OPERATING).unwrap();
        let u = match &spec.ops[0] {
            dmwalk::circuit::CircuitOp::Gate(g) => gate_op(1, g),
            _ => unreachable!(),
        };
        for _ in 0..5 {
            let a = random_2x2(&mut rng);
            let rho = &a * a.adjoint();
            let rho = &rho / rho.trace();
            let v: Vec<C64> = (0..4).map(|x| rho[(x / 2, x % 2)]).collect();
            let out = &t * dmwalk::linalg::CMat::from_column_slice(4, 1, &v);
            let want = &u * &rho * u.adjoint();
            for x in 0..4 {
                assert!((out[x] - want[(x / 2, x % 2)]).norm() < 1e-9, "gate {g}");
            }
        }
    }
}

fn random_2x2(rng: &mut impl Rng) -> dmwalk::linalg::CMat {
    dmwalk::linalg::CMat::from_fn(2, 2, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}
