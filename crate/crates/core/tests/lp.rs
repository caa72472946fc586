mod common;

use pillar_core::lp::{solve_lp, LpProblem, LpStatus, VarBounds};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn simplex_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..60 {
        let lp = common::random_lp(&mut rng);
        let oracle = common::vertex_enumeration(&lp).expect("constructed LPs are feasible");
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal, "case {case}");
        assert!(
            (sol.objective_value - oracle).abs() <= 1e-9 * oracle.abs().max(1.0),
            "case {case}: simplex {} vs vertices {oracle}",
            sol.objective_value
        );
        assert!(
            lp.max_violation(&sol.v) <= 1e-9,
            "case {case}: infeasible point"
        );
    }
}

#[test]
fn free_and_half_bounded_variables() {
    // max x + y  s.t.  x − y ≤ 1,  x + 2y ≤ 4,  x free,  y ≤ 3
    let mut lp = LpProblem::new(vec![1.0, 1.0]);
    lp.bounds = vec![
        VarBounds::FREE,
        VarBounds {
            lower: None,
            upper: Some(3.0),
        },
    ];
    lp.ineq.push((vec![1.0, -1.0], 1.0));
    lp.ineq.push((vec![1.0, 2.0], 4.0));
    let sol = solve_lp(&lp).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    assert!((sol.objective_value - 3.0).abs() < 1e-12);
    assert!((sol.v[0] - 2.0).abs() < 1e-12 && (sol.v[1] - 1.0).abs() < 1e-12);
}

#[test]
fn degenerate_vertex_does_not_cycle() {
    // many constraints active at the origin
    let mut lp = LpProblem::new(vec![1.0, 1.0, 1.0]);
    for row in [
        [1.0, 1.0, 0.0],
        [1.0, 0.0, 1.0],
        [0.0, 1.0, 1.0],
        [1.0, -1.0, 0.0],
        [0.0, 1.0, -1.0],
    ] {
        lp.ineq.push((row.to_vec(), 0.0));
    }
    lp.ineq.push((vec![1.0, 1.0, 1.0], 5.0));
    let sol = solve_lp(&lp).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    assert!(sol.objective_value.abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optimum_is_feasible_and_beats_the_seed_point(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = common::random_lp(&mut rng);
        let sol = solve_lp(&lp).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        prop_assert!(lp.max_violation(&sol.v) <= 1e-9);
        let obj: f64 = lp.objective.iter().zip(&sol.v).map(|(c, x)| c * x).sum();
        prop_assert!((obj - sol.objective_value).abs() <= 1e-9 * obj.abs().max(1.0));
        prop_assert!(common::vertex_enumeration(&lp).unwrap() <= sol.objective_value + 1e-9 * obj.abs().max(1.0));
    }
}
