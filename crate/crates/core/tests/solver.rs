mod common;

use common::q;
use machgame::solver::{epsilon_ne_regret, solve_support_enumeration};
use machgame::{ExactFiniteGame, FloatFiniteGame, Rational};
use num_traits::Zero;
use proptest::prelude::*;

// Largest gain from a pure deviation, computed straight from the bimatrix.
fn oracle_regret(a: &[Vec<i64>], b: &[Vec<i64>], x: &[Rational], y: &[Rational]) -> Rational {
    let (n, m) = (a.len(), a[0].len());
    let row = |r: usize| (0..m).map(|c| q(a[r][c], 1) * y[c].clone()).sum::<Rational>();
    let col = |c: usize| (0..n).map(|r| q(b[r][c], 1) * x[r].clone()).sum::<Rational>();
    let u1: Rational = (0..n).map(|r| x[r].clone() * row(r)).sum();
    let u2: Rational = (0..m).map(|c| y[c].clone() * col(c)).sum();
    let best1 = (0..n).map(row).max().unwrap();
    let best2 = (0..m).map(col).max().unwrap();
    (best1 - u1).max(best2 - u2)
}

fn exact(t: &[Vec<i64>]) -> Vec<Vec<Rational>> {
    t.iter().map(|r| r.iter().map(|&v| q(v, 1)).collect()).collect()
}

fn bimatrix() -> impl Strategy<Value = (Vec<Vec<i64>>, Vec<Vec<i64>>)> {
    (2usize..4, 2usize..4).prop_flat_map(|(n, m)| {
        let t = prop::collection::vec(prop::collection::vec(-6i64..7, m), n);
        (t.clone(), t)
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 150, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn support_enumeration_is_an_exact_equilibrium((a, b) in bimatrix()) {
        let g = ExactFiniteGame::bimatrix(&exact(&a), &exact(&b));
        let eq = solve_support_enumeration(&g).unwrap();
        let (x, y) = (&eq.strategies[0][0], &eq.strategies[1][0]);
        prop_assert_eq!(x.iter().sum::<Rational>(), q(1, 1));
        prop_assert_eq!(y.iter().sum::<Rational>(), q(1, 1));
        prop_assert!(x.iter().chain(y).all(|p| *p >= Rational::zero()));
        prop_assert_eq!(oracle_regret(&a, &b, x, y), Rational::zero());
        prop_assert_eq!(eq.residual, Rational::zero());
    }

    #[test]
    fn float_solver_agrees_up_to_tolerance((a, b) in bimatrix()) {
        let to_f = |t: &[Vec<i64>]| t.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect::<Vec<Vec<f64>>>();
        let g = FloatFiniteGame::bimatrix(&to_f(&a), &to_f(&b));
        let eq = solve_support_enumeration(&g).unwrap();
        prop_assert!(g.verify_nash(&eq.strategies).unwrap() <= 1e-7);
    }

    #[test]
    fn regret_matching_certificate_is_honest((a, b) in bimatrix()) {
        let g = ExactFiniteGame::bimatrix(&exact(&a), &exact(&b));
        let eps = q(1, 20);
        if let Ok(eq) = epsilon_ne_regret(&g, &eps, 20_000) {
            let r = oracle_regret(&a, &b, &eq.strategies[0][0], &eq.strategies[1][0]);
            prop_assert_eq!(&r, &eq.residual);
            prop_assert!(r <= eps);
        }
    }
}

#[test]
fn matching_pennies_is_uniform() {
    let a = vec![vec![1, -1], vec![-1, 1]];
    let b = vec![vec![-1, 1], vec![1, -1]];
    let g = ExactFiniteGame::bimatrix(&exact(&a), &exact(&b));
    let eq = solve_support_enumeration(&g).unwrap();
    assert_eq!(eq.strategies[0][0], vec![q(1, 2), q(1, 2)]);
    assert_eq!(eq.strategies[1][0], vec![q(1, 2), q(1, 2)]);
    let r = epsilon_ne_regret(&g, &q(1, 100), 50_000).unwrap();
    assert!(r.residual <= q(1, 100));
}

#[test]
fn f32_games_solve_too() {
    let g = machgame::solver::FiniteBayesianGame::<f32>::bimatrix(&[vec![2.0, 0.0], vec![0.0, 1.0]], &[vec![1.0, 0.0], vec![0.0, 2.0]]);
    let eq = solve_support_enumeration(&g).unwrap();
    assert!(g.verify_nash(&eq.strategies).unwrap() <= 1e-4);
}
