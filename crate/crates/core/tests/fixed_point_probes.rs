use skewstab::stability::uniform_holder_bound;
use skewstab::*;

fn graph_system(n_base: usize, n_fiber: usize) -> SkewSystem {
    let base = BaseMapSpec::doubling();
    let fiber = FiberMapSpec::affine(&base, 0.5, 0.0, Offset::LinearX(0.5), 1.0).unwrap();
    SkewSystem::new(base, fiber, 1.0, FiberGrid::new(n_fiber).unwrap())
        .unwrap()
        .with_n_base(n_base)
        .unwrap()
}

#[test]
fn three_seeds_reach_the_same_fixed_point() {
    let sys = graph_system(128, 129);
    let tol = default_tol(&sys);
    let seeds = [
        AtomicMeasure::dirac(0.0, 1.0).unwrap(),
        AtomicMeasure::dirac(1.0, 1.0).unwrap(),
        AtomicMeasure::uniform(&sys.grid, 1.0),
    ];
    let fps: Vec<_> = seeds.iter().map(|nu| fixed_point(&sys, nu, tol, 200).unwrap()).collect();
    let grid = sys.h_fib() + sys.h_base();
    for i in 0..3 {
        assert!(fps[i].converged);
        for j in i + 1..3 {
            let d = linf_distance(&fps[i].measure, &fps[j].measure).unwrap();
            assert!(d <= 2.0 * tol + grid, "seeds {i},{j}: {d}");
        }
    }
}

#[test]
fn fixed_point_is_invariant() {
    let sys = graph_system(128, 129);
    let tol = default_tol(&sys);
    let fp = fixed_point(&sys, &AtomicMeasure::uniform(&sys.grid, 1.0), tol, 200).unwrap();
    let next = apply_transfer(&sys, &fp.measure).unwrap();
    assert!(linf_distance(&next, &fp.measure).unwrap() <= tol + sys.h_fib());
}

#[test]
fn residuals_decrease_after_burn_in() {
    let sys = graph_system(64, 257);
    let fp = fixed_point(&sys, &AtomicMeasure::dirac(0.0, 1.0).unwrap(), 1e-9, 60).unwrap();
    let burn = FixedPointResult::burn_in(&sys);
    for w in fp.residuals[burn.min(fp.residuals.len())..].windows(2) {
        assert!(w[1] <= w[0] + sys.h_fib(), "{:?}", w);
    }
}

#[test]
fn graph_family_stays_under_uniform_bound() {
    let sys = graph_system(256, 129);
    let fam = PerturbationFamily::new(sys, PerturbationKind::FiberSlope, 0.1).unwrap();
    let uh = uniform_holder_bound(&fam, &[0.02, 0.05, 0.1], &SweepConfig::default()).unwrap();
    assert!((uh.b_u - 1.02).abs() < 1e-9, "{}", uh.b_u);
    assert!(uh.pass(), "{:?}", uh.estimates);
}

#[test]
fn translation_family_has_flat_paths() {
    let base = BaseMapSpec::doubling();
    let fiber = FiberMapSpec::affine(&base, 0.5, 0.0, Offset::Const(0.25), 1.0).unwrap();
    let sys = SkewSystem::new(base, fiber, 1.0, FiberGrid::new(129).unwrap())
        .unwrap()
        .with_n_base(64)
        .unwrap();
    let fam = PerturbationFamily::new(sys, PerturbationKind::FiberTranslation, 0.1).unwrap();
    let uh = uniform_holder_bound(&fam, &[0.05, 0.1], &SweepConfig::default()).unwrap();
    assert!((uh.b_u - 0.02).abs() < 1e-12);
    assert!(uh.estimates.iter().all(|e| e.1 < 1e-9));
}
