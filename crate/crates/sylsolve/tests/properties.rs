mod common;

use common::{random_general_system, scramble, shared_spectra, star_parity, transpose_reciprocal};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sylsolve::certify::{
    certify_periodic, certify_system, infinity, inverted, is_reciprocal_free, negated, pair_of, root_closure, Method,
    StarMode,
};
use sylsolve::kernel::{Matrix, C64};
use sylsolve::model::{parse_system, serialize_system, PeriodicSystem, StarFlag};
use sylsolve::oracle::{gen_dense, oracle_solve, DEFAULT_CAP};
use sylsolve::reduction::{reduce, Reduction};
use sylsolve::trisolve::{solve_periodic, solve_system};

const TOL: f64 = 1e-8;

fn star_of(k: u8) -> StarFlag {
    [StarFlag::None, StarFlag::Transpose, StarFlag::ConjTranspose][k as usize % 3]
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

/// Finite values, zeros and infinities, plus optionally the `mode`-reciprocal
/// of one member so that violations actually occur.
fn point_set() -> impl Strategy<Value = (Vec<(C64, C64)>, StarMode)> {
    let point = prop_oneof![
        6 => (-3.0f64..3.0, -3.0f64..3.0).prop_map(|(re, im)| pair_of(C64::new(re, im))),
        1 => Just(pair_of(C64::new(0.0, 0.0))),
        1 => Just(infinity()),
    ];
    (prop::collection::vec(point, 1..=6), any::<bool>(), any::<prop::sample::Index>(), any::<bool>()).prop_map(
        |(mut s, plant, idx, herm)| {
            let mode = if herm { StarMode::ConjTranspose } else { StarMode::Transpose };
            if plant {
                let (a, b) = s[idx.index(s.len())];
                s.push(match mode {
                    StarMode::Transpose => (b, a),
                    StarMode::ConjTranspose => (b.conj(), a.conj()),
                });
            }
            (s, mode)
        },
    )
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn reciprocal_freeness_equivalences((s, mode) in point_set()) {
        let base = is_reciprocal_free(&s, mode, &[], TOL).passed();
        prop_assert_eq!(base, is_reciprocal_free(&negated(&s), mode, &[], TOL).passed());
        prop_assert_eq!(base, is_reciprocal_free(&inverted(&s), mode, &[], TOL).passed());
        for p in [2, 3] {
            prop_assert_eq!(base, is_reciprocal_free(&root_closure(&s, p), mode, &[], TOL).passed(), "p = {}", p);
        }
    }
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn text_round_trip(seed in any::<u64>(), n in 1usize..4, m in 1usize..6, k in 0u8..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_general_system(&mut rng, n, m, star_of(k), false);
        let text = serialize_system(&sys);
        prop_assert_eq!(parse_system(&text).unwrap(), sys);
    }

    #[test]
    fn reduction_keeps_star_parity(seed in any::<u64>(), n in 1usize..3, m in 1usize..7, herm in any::<bool>()) {
        let kind = if herm { StarFlag::ConjTranspose } else { StarFlag::Transpose };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_general_system(&mut rng, n, m, kind, true);
        let reduced = reduce(&sys).unwrap();
        prop_assert_eq!(reduced.len(), 1);
        let Reduction::Reduced(rc) = &reduced[0] else { panic!("pure cycle flagged singular") };
        let s = rc.periodic.s;
        prop_assert_eq!(s.is_star(), star_parity(&sys) == 1);
        prop_assert!(!s.is_star() || s == kind);
    }

    #[test]
    fn unitary_equivalence_preserves_solution(seed in any::<u64>(), n in 1usize..5, r in 1usize..4, k in 0u8..3) {
        let ps = gen_dense(n, r, star_of(k), seed);
        let sc = scramble(&ps, seed ^ 0x5eed);
        let x = solve_periodic(&ps).unwrap();
        let y = solve_periodic(&sc).unwrap();
        // X_k = U_k Y_k V_k, so the Frobenius norms agree and the residuals vanish together
        for (xk, yk) in x.iter().zip(&y) {
            let rel = (xk.frobenius() - yk.frobenius()).abs() / xk.frobenius().max(1.0);
            prop_assert!(rel < 1e-9, "norm mismatch {:e}", rel);
        }
        let worst = sc.residuals(&y).iter().map(Matrix::frobenius).fold(0.0, f64::max);
        prop_assert!(worst < 1e-9, "residual {:e}", worst);
    }

    #[test]
    fn unitary_equivalence_preserves_singularity(seed in 0u64..1_000_000, n in 2usize..5, r in 1usize..4, ij in (0usize..4, 0usize..4), transpose in any::<bool>()) {
        let (i, j) = (ij.0 % n, ij.1 % n);
        let (i, j) = (i.max(j), i.min(j));
        let ps = if transpose { transpose_reciprocal(n, r, i, j, seed) } else { shared_spectra(n, r, i, j, seed) };
        for sys in [ps.clone(), scramble(&ps, seed + 1)] {
            for method in [Method::Formal, Method::Pencil] {
                let cert = certify_periodic(&sys, method).unwrap();
                prop_assert!(!cert.is_nonsingular(), "{:?} missed {}", method, cert);
            }
            prop_assert!(solve_periodic(&sys).is_err());
        }
    }

    /// Scalar `r`-cycle: the coefficient matrix is `α_k` on the diagonal and
    /// `−γ_k` cyclically above it, whose determinant is `Πα − Πγ`.
    #[test]
    fn scalar_cycle_determinant(coef in prop::collection::vec((0.3f64..2.0, 0.3f64..2.0, 0.3f64..2.0, 0.3f64..2.0), 1..6), pin in any::<bool>()) {
        let s = |x: f64| Matrix::from_real_rows(&[&[x]]);
        let r = coef.len();
        let mut d: Vec<f64> = coef.iter().map(|c| c.3).collect();
        let alpha: f64 = coef.iter().map(|c| c.0 * c.1).product();
        if pin {
            let gamma_rest: f64 = coef.iter().take(r - 1).map(|c| c.2 * c.3).product();
            d[r - 1] = alpha / (gamma_rest * coef[r - 1].2);
        }
        let gamma: f64 = coef.iter().zip(&d).map(|(c, dk)| c.2 * dk).product();
        let ps = PeriodicSystem {
            n: 1,
            a: coef.iter().map(|c| s(c.0)).collect(),
            b: coef.iter().map(|c| s(c.1)).collect(),
            c: coef.iter().map(|c| s(c.2)).collect(),
            d: d.iter().map(|&x| s(x)).collect(),
            e: (0..r).map(|k| s(1.0 + k as f64)).collect(),
            s: StarFlag::None,
        };
        let singular = (alpha - gamma).abs() <= 1e-12 * alpha.max(gamma);
        prop_assert_eq!(singular, pin);
        let sys = ps.to_system();
        for method in [Method::Formal, Method::Pencil] {
            prop_assert_eq!(certify_system(&sys, method).unwrap().is_nonsingular(), !singular);
        }
        let brute = oracle_solve(&sys, DEFAULT_CAP).unwrap();
        prop_assert_eq!(brute.is_singular(), singular);
        if !singular {
            let x = solve_system(&sys).unwrap();
            let worst = sys.residuals(&x).iter().map(Matrix::frobenius).fold(0.0, f64::max);
            prop_assert!(worst < 1e-12 * (1.0 + (alpha - gamma).abs().recip()), "residual {:e}", worst);
        }
    }

    #[test]
    fn methods_and_oracle_agree(seed in any::<u64>(), n in 1usize..4, m in 1usize..5, k in 0u8..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_general_system(&mut rng, n, m, star_of(k), false);
        let formal = certify_system(&sys, Method::Formal).unwrap();
        let pencil = certify_system(&sys, Method::Pencil).unwrap();
        prop_assert_eq!(formal.verdict, pencil.verdict);
        let brute = oracle_solve(&sys, DEFAULT_CAP).unwrap();
        prop_assert_eq!(formal.is_nonsingular(), !brute.is_singular());
    }
}
