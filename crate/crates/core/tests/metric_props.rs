//! Property tests for the fiber metric, pushforward and quantization.

use proptest::prelude::*;
use skewstab::measure_kit::simplex_norm;
use skewstab::{push_fiber, quantize, wk_distance, wk_norm, AtomicMeasure, FiberGrid};

fn signed_atoms(max: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0f64..=1.0, -2.0f64..2.0), 1..max)
}

fn probability(max: usize) -> impl Strategy<Value = AtomicMeasure> {
    prop::collection::vec((0.0f64..=1.0, 0.01f64..1.0), 1..max).prop_map(|atoms| {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        let atoms = atoms.into_iter().map(|(p, w)| (p, w / total)).collect();
        AtomicMeasure::new(atoms, 1.0).unwrap()
    })
}

fn zero_mass(max: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    signed_atoms(max).prop_map(|mut atoms| {
        let m: f64 = atoms.iter().map(|a| a.1).sum();
        atoms.push((0.5, -m));
        atoms
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn chain_program_matches_simplex(atoms in signed_atoms(30)) {
        let mu = AtomicMeasure::new(atoms.clone(), 1.0).unwrap();
        let fast = wk_norm(&mu, 1.0).unwrap();
        let lp = simplex_norm(atoms, 1.0).unwrap().value;
        prop_assert!((fast - lp).abs() <= 1e-9 * (1.0 + lp), "{} vs {}", fast, lp);
    }

    #[test]
    fn dirac_distance_matches_dual_closed_form(a in 0.0f64..=1.0, b in 0.0f64..=1.0,
                                              zeta in prop::sample::select(vec![0.5, 1.0])) {
        let da = AtomicMeasure::dirac(a, zeta).unwrap();
        let db = AtomicMeasure::dirac(b, zeta).unwrap();
        let expect = if a == b { 0.0 } else { (a - b).abs().powf(zeta).min(2.0) };
        prop_assert!((wk_distance(&da, &db, zeta).unwrap() - expect).abs() <= 1e-9);
    }

    #[test]
    fn metric_axioms_on_probabilities(a in probability(8), b in probability(8), c in probability(8),
                                      zeta in prop::sample::select(vec![0.5, 1.0])) {
        let dab = wk_distance(&a, &b, zeta).unwrap();
        let dba = wk_distance(&b, &a, zeta).unwrap();
        let dac = wk_distance(&a, &c, zeta).unwrap();
        let dcb = wk_distance(&c, &b, zeta).unwrap();
        prop_assert!((dab - dba).abs() <= 1e-12);
        prop_assert!(dab <= dac + dcb + 1e-9);
        prop_assert_eq!(wk_distance(&a, &a, zeta).unwrap(), 0.0);
    }

    #[test]
    fn affine_push_contracts_zero_mass(atoms in zero_mass(12), shift in 0.0f64..0.5,
                                        zeta in prop::sample::select(vec![0.5, 1.0])) {
        let mu = AtomicMeasure::new(atoms, zeta).unwrap();
        let pushed = push_fiber(|y| 0.5 * y + shift, &mu).unwrap();
        let before = wk_norm(&mu, zeta).unwrap();
        let after = wk_norm(&pushed, zeta).unwrap();
        prop_assert!(after <= 0.5f64.powf(zeta) * before + 1e-9);
    }

    #[test]
    fn push_preserves_mass(atoms in signed_atoms(20)) {
        let mu = AtomicMeasure::new(atoms, 1.0).unwrap();
        let pushed = push_fiber(|y| 0.3 * y + 0.2, &mu).unwrap();
        prop_assert!((pushed.total_mass() - mu.total_mass()).abs() <= 1e-12);
    }

    #[test]
    fn quantization_error_is_bounded(atoms in signed_atoms(10), n in 2usize..40,
                                     zeta in prop::sample::select(vec![0.5, 1.0])) {
        let mu = AtomicMeasure::new(atoms, zeta).unwrap();
        let grid = FiberGrid::new(n).unwrap();
        let q = quantize(&mu, &grid);
        let err = wk_distance(&mu, &q, zeta).unwrap();
        prop_assert!(err <= grid.spacing().powf(zeta) * mu.total_variation() + 1e-9);
        prop_assert!((q.total_mass() - mu.total_mass()).abs() <= 1e-12);
        prop_assert!(q.len() <= n);
    }
}
