use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::{Coalition, GameError, GameSpec, Subject};
use crate::expr::{Expr, Value};
use crate::scalar::{int, pow};
use crate::Rational;

/// Everything a utility may depend on in one playout.
#[derive(Debug, Clone, Copy)]
pub struct Outcome<'a> {
    pub types: &'a [String],
    pub nature: Option<&'a str>,
    pub actions: &'a [String],
    pub complexities: &'a [u64],
    /// The coalition controller's complexity, when the subject is a coalition.
    pub coalition_complexity: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub types: Option<Vec<String>>,
    pub actions: Vec<String>,
    #[serde(with = "crate::rational::serde_q")]
    pub value: Rational,
}

/// Discounted repeated-game payoff `Σ_m δ^m r_m` minus a complexity charge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepeatedPayoff {
    /// 1-based player whose payoff this is; the opponent is the other player.
    pub player: usize,
    /// `stage[my move][their move]`, moves 0 and 1.
    #[serde(with = "stage_table")]
    pub stage: [[Rational; 2]; 2],
    #[serde(with = "crate::rational::serde_q")]
    pub delta: Rational,
    /// `(threshold, amount)`: the largest threshold not above the player's
    /// complexity selects the amount charged.
    #[serde(default)]
    pub charges: Vec<Charge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Charge {
    pub at_least: u64,
    #[serde(with = "crate::rational::serde_q")]
    pub amount: Rational,
}

mod stage_table {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &[[Rational; 2]; 2], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<String>> =
            t.iter().map(|r| r.iter().map(crate::rational::format_rational).collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[[Rational; 2]; 2], D::Error> {
        let rows: Vec<Vec<String>> = Vec::deserialize(d)?;
        let cell = |r: usize, c: usize| -> Result<Rational, D::Error> {
            let s = rows.get(r).and_then(|row| row.get(c)).ok_or_else(|| serde::de::Error::custom("stage table must be 2x2"))?;
            crate::rational::parse_rational(s).map_err(serde::de::Error::custom)
        };
        Ok([[cell(0, 0)?, cell(0, 1)?], [cell(1, 0)?, cell(1, 1)?]])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Utility {
    /// Expression over `t1..tm`, `tN`, `a1..am`, `c1..cm`, `cZ`, `m`.
    Expr { expr: Expr },
    /// Looked up by action profile (and optionally type profile), minus `charge`.
    Table {
        rows: Vec<TableRow>,
        #[serde(default, with = "crate::rational::serde_q_opt", skip_serializing_if = "Option::is_none")]
        default: Option<Rational>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        charge: Option<Expr>,
    },
    Repeated(RepeatedPayoff),
    /// Coalition objective `min_{i∈Z} (u_i − baseline_i)`, baselines in member order.
    MinImprovement {
        #[serde(with = "crate::rational::serde_q_vec")]
        baseline: Vec<Rational>,
    },
    /// `scale · inner + shift`.
    Affine {
        #[serde(with = "crate::rational::serde_q")]
        scale: Rational,
        #[serde(with = "crate::rational::serde_q")]
        shift: Rational,
        inner: Box<Utility>,
    },
}

fn expr_env<'a>(out: &'a Outcome<'a>) -> impl Fn(&str) -> Option<Value> + 'a {
    move |name: &str| {
        if name == "m" {
            return Some(Value::Num(int(out.types.len() as i64)));
        }
        if name == "tN" {
            return out.nature.map(|s| Value::Str(s.to_string()));
        }
        if name == "cZ" {
            return out.coalition_complexity.map(|c| Value::Num(int(c as i64)));
        }
        let (head, idx) = name.split_at(1);
        let i: usize = idx.parse().ok()?;
        let i = i.checked_sub(1)?;
        match head {
            "t" => out.types.get(i).map(|s| Value::Str(s.clone())),
            "a" => out.actions.get(i).map(|s| Value::Str(s.clone())),
            "c" => out.complexities.get(i).map(|&c| Value::Num(int(c as i64))),
            _ => None,
        }
    }
}

impl Utility {
    pub fn expr(src: &str) -> Result<Utility, GameError> {
        Ok(Utility::Expr { expr: Expr::parse(src).map_err(|e| GameError::Utility(e.to_string()))? })
    }

    /// Value for `subject` on one playout.
    pub fn value(&self, out: &Outcome<'_>, game: &GameSpec, subject: &Subject) -> Result<Rational, GameError> {
        let err = |e: crate::expr::ExprError| GameError::Utility(e.to_string());
        match self {
            Utility::Expr { expr } => expr.eval_num(&expr_env(out)).map_err(err),
            Utility::Table { rows, default, charge } => {
                let row = rows.iter().find(|r| {
                    r.actions.as_slice() == out.actions && r.types.as_ref().is_none_or(|t| t.as_slice() == out.types)
                });
                let base = match (row, default) {
                    (Some(r), _) => r.value.clone(),
                    (None, Some(d)) => d.clone(),
                    (None, None) => {
                        return Err(GameError::Utility(format!("no table row for actions {:?}", out.actions)))
                    }
                };
                let c = match charge {
                    Some(e) => e.eval_num(&expr_env(out)).map_err(err)?,
                    None => Rational::zero(),
                };
                Ok(base - c)
            }
            Utility::Repeated(r) => r.value(out),
            Utility::MinImprovement { baseline } => {
                let Subject::Coalition(z) = subject else {
                    return Err(GameError::Utility("min_improvement is a coalition utility".into()));
                };
                if baseline.len() != z.len() {
                    return Err(GameError::Utility(format!("min_improvement needs {} baselines", z.len())));
                }
                let mut best: Option<Rational> = None;
                for (k, &i) in z.members().iter().enumerate() {
                    let v = game.utilities[i].value(out, game, &Subject::Player(i))? - baseline[k].clone();
                    best = Some(match best {
                        Some(b) if b <= v => b,
                        _ => v,
                    });
                }
                Ok(best.expect("coalitions are nonempty"))
            }
            Utility::Affine { scale, shift, inner } => Ok(scale.clone() * inner.value(out, game, subject)? + shift.clone()),
        }
    }

    /// Whether the value can depend on any complexity.
    pub fn reads_complexity(&self) -> bool {
        let reads = |e: &Expr| e.variables().iter().any(|v| v == "cZ" || v.strip_prefix('c').is_some_and(|k| k.parse::<usize>().is_ok()));
        match self {
            Utility::Expr { expr } => reads(expr),
            Utility::Table { charge, .. } => charge.as_ref().is_some_and(reads),
            Utility::Repeated(r) => !r.charges.is_empty(),
            Utility::MinImprovement { .. } => true,
            Utility::Affine { inner, .. } => inner.reads_complexity(),
        }
    }

    pub(crate) fn reads_foreign_complexity(&self, own: &Coalition, game: &GameSpec) -> bool {
        let foreign = |e: &Expr| {
            e.variables().iter().any(|v| {
                v.strip_prefix('c')
                    .and_then(|k| k.parse::<usize>().ok())
                    .is_some_and(|k| k == 0 || !own.contains(k - 1))
            })
        };
        match self {
            Utility::Expr { expr } => foreign(expr),
            Utility::Table { charge, .. } => charge.as_ref().is_some_and(foreign),
            Utility::Repeated(r) => !own.contains(r.player - 1),
            Utility::MinImprovement { .. } => {
                own.members().iter().any(|&i| game.utilities[i].reads_foreign_complexity(own, game))
            }
            Utility::Affine { inner, .. } => inner.reads_foreign_complexity(own, game),
        }
    }
}

impl RepeatedPayoff {
    fn value(&self, out: &Outcome<'_>) -> Result<Rational, GameError> {
        let me = self.player.checked_sub(1).filter(|&i| i < out.actions.len() && out.actions.len() == 2);
        let Some(me) = me else {
            return Err(GameError::Utility("repeated payoff needs two players and a valid player index".into()));
        };
        let mine = out.actions[me].as_bytes();
        let theirs = out.actions[1 - me].as_bytes();
        let mut total = Rational::zero();
        let mut weight = self.delta.clone();
        for (a, b) in mine.iter().zip(theirs) {
            let (x, y) = ((*a == b'1') as usize, (*b == b'1') as usize);
            total += weight.clone() * self.stage[x][y].clone();
            weight *= self.delta.clone();
        }
        let c = out.complexities[me];
        let charge = self
            .charges
            .iter()
            .filter(|ch| ch.at_least <= c)
            .max_by_key(|ch| ch.at_least)
            .map(|ch| ch.amount.clone())
            .unwrap_or_else(Rational::zero);
        Ok(total - charge)
    }

    /// The reward part alone for a pair of move strings.
    pub fn rewards(&self, mine: &str, theirs: &str) -> Rational {
        let mut total = Rational::zero();
        for (m, (a, b)) in mine.bytes().zip(theirs.bytes()).enumerate() {
            let (x, y) = ((a == b'1') as usize, (b == b'1') as usize);
            total += pow(&self.delta, m as u32 + 1) * self.stage[x][y].clone();
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ratio;

    fn pd(player: usize) -> RepeatedPayoff {
        RepeatedPayoff {
            player,
            stage: [[int(3), int(-5)], [int(5), int(-3)]],
            delta: ratio(9, 10),
            charges: vec![Charge { at_least: 2, amount: ratio(7, 10) }],
        }
    }

    #[test]
    fn defect_against_tit_for_tat_three_rounds() {
        let d = ratio(9, 10);
        let got = pd(1).rewards("111", "011");
        let want = int(5) * d.clone() - int(3) * pow(&d, 2) - int(3) * pow(&d, 3);
        assert_eq!(got, want);
    }

    #[test]
    fn charge_applies_from_threshold() {
        let types = vec![String::new(), String::new()];
        let actions = vec!["0".to_string(), "0".to_string()];
        let out = Outcome { types: &types, nature: None, actions: &actions, complexities: &[2, 1], coalition_complexity: None };
        assert_eq!(pd(1).value(&out).unwrap(), int(3) * ratio(9, 10) - ratio(7, 10));
        assert_eq!(pd(2).value(&out).unwrap(), int(3) * ratio(9, 10));
    }
}
