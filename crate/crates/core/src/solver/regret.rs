//! ε-equilibria by regret matching, certified exactly.

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};

use super::finite::{FiniteBayesianGame, MixedEquilibrium};
use super::SolverError;
use crate::Rational;

/// Denominator used when rounding float strategies to rationals.
pub const ROUNDING_DENOMINATOR: i64 = 1_000_000;
const CHECK_EVERY: u64 = 500;

fn rationalize(d: &[f64]) -> Vec<Rational> {
    let den = ROUNDING_DENOMINATOR;
    let mut nums: Vec<i64> = d.iter().map(|p| (p.max(0.0) * den as f64).round() as i64).collect();
    let diff = den - nums.iter().sum::<i64>();
    let top = (0..nums.len()).max_by_key(|&k| nums[k]).unwrap_or(0);
    nums[top] += diff;
    if nums[top] < 0 {
        // rounding pushed the mass negative; fall back to a point mass
        nums.iter_mut().for_each(|n| *n = 0);
        nums[top] = den;
    }
    nums.into_iter().map(|n| Rational::new(BigInt::from(n), BigInt::from(den))).collect()
}

/// Runs regret matching+ with linear averaging until the rounded average
/// strategy has exact regret at most `eps`.
pub fn epsilon_ne_regret(
    fg: &FiniteBayesianGame<Rational>,
    eps: &Rational,
    iteration_cap: u64,
) -> Result<MixedEquilibrium<Rational>, SolverError> {
    fg.validate()?;
    if *eps <= Rational::zero() {
        return Err(SolverError::Invalid("regret mode needs ε > 0".into()));
    }
    let g = fg.map(|q| q.to_f64().unwrap_or(f64::NAN));
    let shape: Vec<Vec<usize>> =
        (0..g.players).map(|i| vec![g.actions[i].len(); g.type_names[i].len()]).collect();
    let zeros = || -> Vec<Vec<Vec<f64>>> { shape.iter().map(|ts| ts.iter().map(|&n| vec![0.0; n]).collect()).collect() };
    let mut regret = zeros();
    let mut sum = zeros();
    let mut best: Option<(Rational, Vec<Vec<Vec<Rational>>>)> = None;
    for it in 1..=iteration_cap {
        let current: Vec<Vec<Vec<f64>>> = regret
            .iter()
            .map(|ts| {
                ts.iter()
                    .map(|r| {
                        let pos: f64 = r.iter().map(|v| v.max(0.0)).sum();
                        if pos > 0.0 {
                            r.iter().map(|v| v.max(0.0) / pos).collect()
                        } else {
                            vec![1.0 / r.len() as f64; r.len()]
                        }
                    })
                    .collect()
            })
            .collect();
        for i in 0..g.players {
            for t in 0..g.type_names[i].len() {
                let vals = g.action_values(&current, i, t);
                let u: f64 = vals.iter().zip(&current[i][t]).map(|(v, p)| v * p).sum();
                for (a, v) in vals.iter().enumerate() {
                    regret[i][t][a] = (regret[i][t][a] + v - u).max(0.0);
                    sum[i][t][a] += it as f64 * current[i][t][a];
                }
            }
        }
        if it % CHECK_EVERY == 0 || it == iteration_cap {
            let avg: Vec<Vec<Vec<Rational>>> = sum
                .iter()
                .map(|ts| {
                    ts.iter()
                        .map(|s| {
                            let total: f64 = s.iter().sum();
                            let d: Vec<f64> = s.iter().map(|v| v / total).collect();
                            rationalize(&d)
                        })
                        .collect()
                })
                .collect();
            let r = fg.verify_nash(&avg)?;
            if r <= *eps {
                return Ok(MixedEquilibrium { strategies: avg, residual: r });
            }
            if best.as_ref().is_none_or(|(b, _)| r < *b) {
                best = Some((r, avg));
            }
        }
    }
    let residual = best.map(|(r, _)| crate::rational::format_rational(&r)).unwrap_or_default();
    Err(SolverError::IterationCapExceeded { residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{int, ratio};

    #[test]
    fn matching_pennies_within_one_percent() {
        let a: Vec<Vec<Rational>> = vec![vec![int(1), int(-1)], vec![int(-1), int(1)]];
        let b: Vec<Vec<Rational>> = a.iter().map(|r| r.iter().map(|v| -v.clone()).collect()).collect();
        let fg = FiniteBayesianGame::bimatrix(&a, &b);
        let eq = epsilon_ne_regret(&fg, &ratio(1, 100), 100_000).unwrap();
        assert!(eq.residual <= ratio(1, 100));
        assert_eq!(fg.verify_nash(&eq.strategies).unwrap(), eq.residual);
    }

    #[test]
    fn dominant_strategy_gets_nearly_all_mass() {
        // prisoner's dilemma: defect (1) dominates
        let a: Vec<Vec<Rational>> = vec![vec![int(3), int(-5)], vec![int(5), int(-3)]];
        let b: Vec<Vec<Rational>> = vec![vec![int(3), int(5)], vec![int(-5), int(-3)]];
        let fg = FiniteBayesianGame::bimatrix(&a, &b);
        let eq = epsilon_ne_regret(&fg, &ratio(1, 1000), 10_000).unwrap();
        assert!(eq.strategies[0][0][1] >= ratio(999, 1000));
        assert!(eq.strategies[1][0][1] >= ratio(999, 1000));
        assert!(eq.residual <= ratio(1, 1000));
    }

    #[test]
    fn three_player_cyclic_pennies() {
        // player i wins a point from i+1 on a match and loses one to i-1
        let names = vec![vec!["0".to_string(), "1".to_string()]; 3];
        let fg = FiniteBayesianGame::normal_form(names, |p| {
            (0..3)
                .map(|i| {
                    let next = p[i] == p[(i + 1) % 3];
                    let prev = p[(i + 2) % 3] == p[i];
                    int(next as i64 - prev as i64)
                })
                .collect()
        });
        let eq = epsilon_ne_regret(&fg, &ratio(1, 20), 200_000).unwrap();
        assert!(eq.residual <= ratio(1, 20));
    }
}
