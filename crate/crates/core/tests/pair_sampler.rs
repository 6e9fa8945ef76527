use hsle_core::harness::mean_se;
use hsle_core::observables::MarkedState;
use hsle_core::pair::*;

fn quick(seed: u64) -> PairSpec {
    PairSpec {
        dt: 4e-3,
        second_steps: 500,
        trace_points: 60,
        seed,
        ..Default::default()
    }
}

#[test]
fn accepted_pairs_are_valid_in_both_orders() {
    let st = MarkedState::new(-0.5, 0.2, 1.0).unwrap();
    for order in [1, 2] {
        let ens = pair_ensemble(&st, order, &quick(1), 24).unwrap();
        assert!(ens.violations.is_empty(), "{:?}", ens.violations);
        assert!(ens.n_accepted() >= 20);
        assert!(ens.functionals.iter().all(|&f| (0.0..=1.0).contains(&f)));
    }
}

#[test]
fn curves_start_at_their_marked_points() {
    let st = MarkedState::from_xy(1.0, 2.0).unwrap();
    let mut seen = 0;
    for i in 0..8 {
        if let PairOutcome::Accepted(p) = sample_pair(&st, 2, &quick(3), i).unwrap() {
            assert!((p.gamma1.points[0].re - st.u).abs() < 1e-3 * st.s());
            assert!((p.gamma2.points[0].re - st.w).abs() < 1e-3 * st.s());
            assert_eq!(p.pocket_probes.len(), PROBES.len());
            seen += 1;
        }
    }
    assert!(seen > 0);
}

#[test]
fn orders_agree_on_small_ensembles() {
    let st = MarkedState::from_xy(1.0, 1.0).unwrap();
    let a = pair_ensemble(&st, 1, &quick(10), 60).unwrap();
    let b = pair_ensemble(&st, 2, &quick(20), 60).unwrap();
    let (ma, sa) = mean_se(&a.functionals);
    let (mb, sb) = mean_se(&b.functionals);
    assert!((ma - mb).abs() < 3.0 * sa.hypot(sb), "{ma} ± {sa} vs {mb} ± {sb}");
}
