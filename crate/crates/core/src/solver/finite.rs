//! Finite Bayesian games and their Nash conditions.

use serde::Serialize;

use super::SolverError;
use crate::complexity::{evaluate_complexity, EvalContext};
use crate::game::{GameSpec, Outcome, Subject};
use crate::scalar::Scalar;
use crate::vm::{run_machine, MachineProgram};
use crate::Rational;

/// One type profile with its prior weight; `types[i]` indexes player i's type list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct World<S> {
    pub types: Vec<usize>,
    pub prob: S,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteBayesianGame<S> {
    pub players: usize,
    pub type_names: Vec<Vec<String>>,
    pub worlds: Vec<World<S>>,
    pub actions: Vec<Vec<String>>,
    /// `payoffs[world][profile][player]`, profiles in mixed radix with player 0 most significant.
    pub payoffs: Vec<Vec<Vec<S>>>,
}

/// Per player, per own type, a distribution over actions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixedEquilibrium<S> {
    pub strategies: Vec<Vec<Vec<S>>>,
    /// Largest ex-ante gain any player has from a unilateral change.
    pub residual: S,
}

impl<S: Scalar> FiniteBayesianGame<S> {
    /// Complete-information game on a single world.
    pub fn normal_form(actions: Vec<Vec<String>>, payoff: impl Fn(&[usize]) -> Vec<S>) -> Self {
        let players = actions.len();
        let mut g = FiniteBayesianGame {
            players,
            type_names: vec![vec![String::new()]; players],
            worlds: vec![World { types: vec![0; players], prob: S::one() }],
            actions,
            payoffs: Vec::new(),
        };
        let table = (0..g.profile_count()).map(|k| payoff(&g.decode(k))).collect();
        g.payoffs = vec![table];
        g
    }

    /// Two-player bimatrix game.
    pub fn bimatrix(a: &[Vec<S>], b: &[Vec<S>]) -> Self {
        let names = |n: usize| (0..n).map(|k| k.to_string()).collect::<Vec<_>>();
        let cols = a.first().map_or(0, |r| r.len());
        Self::normal_form(vec![names(a.len()), names(cols)], |p| vec![a[p[0]][p[1]].clone(), b[p[0]][p[1]].clone()])
    }

    pub fn profile_count(&self) -> usize {
        self.actions.iter().map(|a| a.len()).product()
    }

    pub fn decode(&self, mut k: usize) -> Vec<usize> {
        let mut out = vec![0; self.players];
        for i in (0..self.players).rev() {
            let n = self.actions[i].len();
            out[i] = k % n;
            k /= n;
        }
        out
    }

    pub fn index(&self, profile: &[usize]) -> usize {
        profile.iter().zip(&self.actions).fold(0, |acc, (&a, acts)| acc * acts.len() + a)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let total = self.worlds.iter().fold(S::zero(), |acc, w| acc + w.prob.clone());
        if !(total.clone() - S::one()).is_negligible() {
            return Err(SolverError::Invalid(format!("prior sums to {total}")));
        }
        if self.actions.iter().any(|a| a.is_empty()) {
            return Err(SolverError::Invalid("every player needs an action".into()));
        }
        if self.payoffs.len() != self.worlds.len() || self.payoffs.iter().any(|t| t.len() != self.profile_count()) {
            return Err(SolverError::Invalid("payoff tables are not total".into()));
        }
        Ok(())
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> FiniteBayesianGame<T> {
        FiniteBayesianGame {
            players: self.players,
            type_names: self.type_names.clone(),
            worlds: self.worlds.iter().map(|w| World { types: w.types.clone(), prob: f(&w.prob) }).collect(),
            actions: self.actions.clone(),
            payoffs: self.payoffs.iter().map(|t| t.iter().map(|r| r.iter().map(&f).collect()).collect()).collect(),
        }
    }

    /// Unconditional expected payoff to `i` of each action at own type `ti`
    /// (weighted by the type's prior mass), others playing `strategies`.
    pub fn action_values(&self, strategies: &[Vec<Vec<S>>], i: usize, ti: usize) -> Vec<S> {
        let mut vals = vec![S::zero(); self.actions[i].len()];
        for (w, world) in self.worlds.iter().enumerate() {
            if world.types[i] != ti {
                continue;
            }
            for k in 0..self.profile_count() {
                let prof = self.decode(k);
                let mut weight = world.prob.clone();
                for (j, &a) in prof.iter().enumerate() {
                    if j != i {
                        weight = weight * strategies[j][world.types[j]][a].clone();
                    }
                }
                if weight.is_zero() {
                    continue;
                }
                let u = self.payoffs[w][k][i].clone();
                vals[prof[i]] = vals[prof[i]].clone() + weight * u;
            }
        }
        vals
    }

    /// Per player, the ex-ante gain of the best unilateral change.
    pub fn regrets(&self, strategies: &[Vec<Vec<S>>]) -> Vec<S> {
        (0..self.players)
            .map(|i| {
                let mut total = S::zero();
                for ti in 0..self.type_names[i].len() {
                    let vals = self.action_values(strategies, i, ti);
                    let current = vals
                        .iter()
                        .zip(&strategies[i][ti])
                        .fold(S::zero(), |acc, (v, p)| acc + v.clone() * p.clone());
                    let best = vals.iter().cloned().fold(current.clone(), |m, v| if v > m { v } else { m });
                    total = total + (best - current);
                }
                total
            })
            .collect()
    }

    /// Checks every Nash inequality; returns the largest regret.
    pub fn verify_nash(&self, strategies: &[Vec<Vec<S>>]) -> Result<S, SolverError> {
        if strategies.len() != self.players {
            return Err(SolverError::Invalid("one strategy per player".into()));
        }
        for (i, per_type) in strategies.iter().enumerate() {
            if per_type.len() != self.type_names[i].len() {
                return Err(SolverError::Invalid(format!("player {} needs one distribution per type", i + 1)));
            }
            for d in per_type {
                let sum = d.iter().fold(S::zero(), |a, p| a + p.clone());
                if d.len() != self.actions[i].len() || d.iter().any(|p| *p < S::zero() && !p.is_negligible()) || !(sum - S::one()).is_negligible() {
                    return Err(SolverError::Invalid(format!("player {} has an invalid distribution", i + 1)));
                }
            }
        }
        Ok(self.regrets(strategies).into_iter().fold(S::zero(), |m, r| if r > m { r } else { m }))
    }
}

/// How machine choices become a finite game.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InduceMode {
    /// Utilities ignore complexity; machines with equal outputs on every own
    /// type collapse to one action. With `assume` the check on the utilities
    /// is skipped and complexities are taken as 0.
    Cheap { assume: bool },
    /// Actions are the base machines themselves, charged their own complexity,
    /// so mixtures are what a free-randomization sampler achieves.
    FreeRandomization,
}

/// The finite game and, per player, the base machine behind each action.
pub type InducedGame = (FiniteBayesianGame<Rational>, Vec<Vec<MachineProgram>>);

pub fn induce_finite_game(game: &GameSpec, base: &[MachineProgram], mode: InduceMode) -> Result<InducedGame, SolverError> {
    game.validate()?;
    if game.is_mediated() {
        return Err(SolverError::Invalid("mediated games are not induced".into()));
    }
    if base.is_empty() {
        return Err(SolverError::Invalid("empty machine base".into()));
    }
    if let InduceMode::Cheap { assume: false } = mode {
        for i in 0..game.players {
            if game.utilities[i].reads_complexity() {
                return Err(SolverError::NotComputationallyCheap(format!("utility of player {} reads complexity", i + 1)));
            }
        }
    }
    let m = game.players;
    let mut type_names: Vec<Vec<String>> = vec![Vec::new(); m];
    for tp in &game.types {
        for i in 0..m {
            if !type_names[i].contains(&tp.types[i]) {
                type_names[i].push(tp.types[i].clone());
            }
        }
    }
    // (output, complexity) of each base machine on each own type
    let mut runs: Vec<Vec<Vec<(String, u64)>>> = Vec::with_capacity(m);
    for i in 0..m {
        let mut per_machine = Vec::with_capacity(base.len());
        for prog in base {
            let mut per_type = Vec::new();
            for t in &type_names[i] {
                let res = run_machine(prog, t, &[], None, &game.budget).map_err(|e| {
                    SolverError::Invalid(format!("base machine {:?} is not deterministic and total: {e}", prog.label))
                })?;
                let ctx = EvalContext { type_len: t.len(), budget: game.budget, nature_type: None, enumeration_limit: 1 << 20 };
                let c = match mode {
                    InduceMode::Cheap { .. } => 0,
                    InduceMode::FreeRandomization => {
                        evaluate_complexity(&game.complexity[i], prog, &res.view, &res.meter, &ctx).map_err(crate::game::GameError::from)?
                    }
                };
                per_type.push((res.output().to_string(), c));
            }
            per_machine.push(per_type);
        }
        runs.push(per_machine);
    }
    let mut actions = Vec::with_capacity(m);
    let mut machines = Vec::with_capacity(m);
    let mut chosen: Vec<Vec<usize>> = Vec::with_capacity(m);
    for i in 0..m {
        let mut keep: Vec<usize> = Vec::new();
        for k in 0..base.len() {
            let dup = keep.iter().any(|&j| runs[i][j] == runs[i][k]);
            if !dup {
                keep.push(k);
            }
        }
        actions.push(keep.iter().map(|&k| base[k].label.clone()).collect::<Vec<_>>());
        machines.push(keep.iter().map(|&k| base[k].clone()).collect::<Vec<_>>());
        chosen.push(keep);
    }
    let mut fg = FiniteBayesianGame { players: m, type_names: type_names.clone(), worlds: Vec::new(), actions, payoffs: Vec::new() };
    for tp in &game.types {
        let types: Vec<usize> =
            (0..m).map(|i| type_names[i].iter().position(|t| t == &tp.types[i]).expect("collected above")).collect();
        let mut table = Vec::with_capacity(fg.profile_count());
        for k in 0..fg.profile_count() {
            let prof = fg.decode(k);
            let acts: Vec<String> = (0..m).map(|i| runs[i][chosen[i][prof[i]]][types[i]].0.clone()).collect();
            let cs: Vec<u64> = (0..m).map(|i| runs[i][chosen[i][prof[i]]][types[i]].1).collect();
            let out = Outcome { types: &tp.types, nature: tp.nature.as_deref(), actions: &acts, complexities: &cs, coalition_complexity: None };
            let row = (0..m)
                .map(|i| game.utilities[i].value(&out, game, &Subject::Player(i)))
                .collect::<Result<Vec<_>, _>>()?;
            table.push(row);
        }
        fg.worlds.push(super::finite::World { types, prob: tp.prob.clone() });
        fg.payoffs.push(table);
    }
    Ok((fg, machines))
}
