//! Support enumeration for two-player games, exact over rationals.

use super::finite::{FiniteBayesianGame, MixedEquilibrium};
use super::linalg::solve;
use super::SolverError;
use crate::scalar::Scalar;

/// Largest number of type-to-action plans per player.
pub const MAX_PLANS: usize = 4096;
/// Largest total plan count for which supports are enumerated.
pub const MAX_SUPPORT_UNIVERSE: usize = 24;

fn plans<S: Scalar>(fg: &FiniteBayesianGame<S>, i: usize) -> Result<Vec<Vec<usize>>, SolverError> {
    let t = fg.type_names[i].len() as u32;
    let a = fg.actions[i].len();
    let count = a.checked_pow(t).filter(|&c| c <= MAX_PLANS).ok_or(SolverError::SizeLimit(format!(
        "player {} has {a}^{t} plans, limit {MAX_PLANS}",
        i + 1
    )))?;
    Ok((0..count)
        .map(|mut k| {
            let mut plan = vec![0; t as usize];
            for slot in plan.iter_mut().rev() {
                *slot = k % a;
                k /= a;
            }
            plan
        })
        .collect())
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for v in start..n {
            cur.push(v);
            rec(v + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Mix over `cols` making the row player indifferent on `rows`; `m[r][c]`
/// is the row player's payoff.
fn indifference<S: Scalar>(m: &[Vec<S>], rows: &[usize], cols: &[usize]) -> Option<(Vec<S>, S)> {
    let k = cols.len();
    let mut a = Vec::with_capacity(rows.len() + 1);
    let mut b = Vec::with_capacity(rows.len() + 1);
    for &r in rows {
        let mut row: Vec<S> = cols.iter().map(|&c| m[r][c].clone()).collect();
        row.push(-S::one());
        a.push(row);
        b.push(S::zero());
    }
    let mut sum = vec![S::one(); k];
    sum.push(S::zero());
    a.push(sum);
    b.push(S::one());
    let x = solve(a, b)?;
    let v = x[k].clone();
    let mix = x[..k].to_vec();
    if mix.iter().any(|p| *p < S::zero() && !p.is_negligible()) {
        return None;
    }
    for r in 0..m.len() {
        let val = cols.iter().zip(&mix).fold(S::zero(), |acc, (&c, p)| acc + m[r][c].clone() * p.clone());
        if !v.ge_tol(&val) {
            return None;
        }
    }
    Some((mix, v))
}

fn single_player<S: Scalar>(fg: &FiniteBayesianGame<S>) -> MixedEquilibrium<S> {
    let n = fg.actions[0].len();
    let strategies = vec![(0..fg.type_names[0].len())
        .map(|t| {
            let vals = fg.action_values(&[Vec::new()], 0, t);
            let mut best = 0;
            for (k, v) in vals.iter().enumerate() {
                if *v > vals[best] {
                    best = k;
                }
            }
            let mut d = vec![S::zero(); n];
            d[best] = S::one();
            d
        })
        .collect()];
    MixedEquilibrium { strategies, residual: S::zero() }
}

/// An equilibrium by support enumeration: supports by increasing total
/// size, lexicographic within a size; the first one passing every Nash
/// inequality is returned.
pub fn solve_support_enumeration<S: Scalar>(fg: &FiniteBayesianGame<S>) -> Result<MixedEquilibrium<S>, SolverError> {
    fg.validate()?;
    match fg.players {
        1 => return Ok(single_player(fg)),
        2 => {}
        m => return Err(SolverError::Unsupported(format!("exact support enumeration handles 2 players, not {m}"))),
    }
    let p1 = plans(fg, 0)?;
    let p2 = plans(fg, 1)?;
    let (n1, n2) = (p1.len(), p2.len());
    if n1 + n2 > MAX_SUPPORT_UNIVERSE {
        return Err(SolverError::SizeLimit(format!("{n1} + {n2} plans exceed {MAX_SUPPORT_UNIVERSE}")));
    }
    let mut a = vec![vec![S::zero(); n2]; n1];
    let mut b = vec![vec![S::zero(); n1]; n2];
    for (w, world) in fg.worlds.iter().enumerate() {
        let (t1, t2) = (world.types[0], world.types[1]);
        for (x, plan1) in p1.iter().enumerate() {
            for (y, plan2) in p2.iter().enumerate() {
                let u = &fg.payoffs[w][fg.index(&[plan1[t1], plan2[t2]])];
                a[x][y] = a[x][y].clone() + world.prob.clone() * u[0].clone();
                b[y][x] = b[y][x].clone() + world.prob.clone() * u[1].clone();
            }
        }
    }
    let subsets1: Vec<Vec<Vec<usize>>> = (0..=n1).map(|k| combinations(n1, k)).collect();
    let subsets2: Vec<Vec<Vec<usize>>> = (0..=n2).map(|k| combinations(n2, k)).collect();
    for total in 2..=n1 + n2 {
        let mut pairs: Vec<(&Vec<usize>, &Vec<usize>)> = Vec::new();
        for k1 in 1..total {
            let k2 = total - k1;
            if k1 > n1 || k2 > n2 || k2 == 0 {
                continue;
            }
            for s1 in &subsets1[k1] {
                for s2 in &subsets2[k2] {
                    pairs.push((s1, s2));
                }
            }
        }
        pairs.sort();
        for (s1, s2) in pairs {
            let Some((y, _)) = indifference(&a, s1, s2) else { continue };
            let Some((x, _)) = indifference(&b, s2, s1) else { continue };
            let mut full_x = vec![S::zero(); n1];
            for (k, &i) in s1.iter().enumerate() {
                full_x[i] = x[k].clone();
            }
            let mut full_y = vec![S::zero(); n2];
            for (k, &j) in s2.iter().enumerate() {
                full_y[j] = y[k].clone();
            }
            let strategies = vec![behavioural(fg, 0, &p1, &full_x), behavioural(fg, 1, &p2, &full_y)];
            let residual = fg.verify_nash(&strategies)?;
            if residual.is_negligible() {
                return Ok(MixedEquilibrium { strategies, residual });
            }
        }
    }
    Err(SolverError::NoEquilibriumInSupports)
}

/// Marginal action law per own type of a mixture over plans.
fn behavioural<S: Scalar>(fg: &FiniteBayesianGame<S>, i: usize, plans: &[Vec<usize>], mix: &[S]) -> Vec<Vec<S>> {
    let mut out = vec![vec![S::zero(); fg.actions[i].len()]; fg.type_names[i].len()];
    for (plan, p) in plans.iter().zip(mix) {
        for (t, &a) in plan.iter().enumerate() {
            out[t][a] = out[t][a].clone() + p.clone();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{int, ratio};
    use crate::Rational;

    fn table(rows: &[&[i64]]) -> Vec<Vec<Rational>> {
        rows.iter().map(|r| r.iter().map(|&v| int(v)).collect()).collect()
    }

    #[test]
    fn matching_pennies_is_half_half() {
        let a = table(&[&[1, -1], &[-1, 1]]);
        let b = table(&[&[-1, 1], &[1, -1]]);
        let eq = solve_support_enumeration(&FiniteBayesianGame::bimatrix(&a, &b)).unwrap();
        let half = ratio(1, 2);
        assert_eq!(eq.strategies[0][0], vec![half.clone(), half.clone()]);
        assert_eq!(eq.strategies[1][0], vec![half.clone(), half]);
        assert_eq!(eq.residual, int(0));
    }

    #[test]
    fn coordination_returns_first_pure_support() {
        let a = table(&[&[2, 0], &[0, 1]]);
        let eq = solve_support_enumeration(&FiniteBayesianGame::bimatrix(&a, &a)).unwrap();
        assert_eq!(eq.strategies[0][0], vec![int(1), int(0)]);
        assert_eq!(eq.strategies[1][0], vec![int(1), int(0)]);
    }

    #[test]
    fn float_path_agrees() {
        let a = vec![vec![1.0f64, -1.0], vec![-1.0, 1.0]];
        let b = vec![vec![-1.0f64, 1.0], vec![1.0, -1.0]];
        let eq = solve_support_enumeration(&FiniteBayesianGame::bimatrix(&a, &b)).unwrap();
        assert!((eq.strategies[0][0][0] - 0.5).abs() < 1e-12);
    }
}
