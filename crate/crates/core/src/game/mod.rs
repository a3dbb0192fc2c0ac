//! The game tuple, strategy profiles and expected utility.

mod coalition;
mod eval;
pub mod file;
mod utility;

use std::collections::BTreeSet;
use std::fmt;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::complexity::{ComplexityError, ComplexityFnSpec};
use crate::mediation::{MediationError, MediatorSpec};
use crate::vm::{MachineProgram, RunBudget, RunError};
use crate::Rational;

pub use coalition::{benign_coalition_machine, CoalitionError};
pub use eval::{
    action_distribution, enumerate_playouts, execute_mediated, expected_utility, play_once, ActionDistribution,
    EvalMode, Playout, SampleOptions, StageRecord, Transcript, UtilityOutcome,
};
pub(crate) use eval::expected_utility_adjusted as eval_adjusted;
pub use file::{export_game, load_game, parse_game, GameFile, LoadedGame};
pub use utility::{Charge, Outcome, RepeatedPayoff, TableRow, Utility};

/// A set of players, stored 0-based and sorted; printed 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "Vec<usize>", try_from = "Vec<usize>")]
pub struct Coalition(Vec<usize>);

impl Coalition {
    pub fn new(members: impl IntoIterator<Item = usize>) -> Self {
        let set: BTreeSet<usize> = members.into_iter().collect();
        Coalition(set.into_iter().collect())
    }

    pub fn singleton(i: usize) -> Self {
        Coalition(vec![i])
    }

    /// From 1-based player numbers.
    pub fn from_one_based(members: &[usize]) -> Option<Self> {
        if members.contains(&0) {
            return None;
        }
        Some(Coalition::new(members.iter().map(|m| m - 1)))
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn is_singleton(&self) -> bool {
        self.0.len() == 1
    }
}

impl From<Coalition> for Vec<usize> {
    fn from(c: Coalition) -> Self {
        c.0.iter().map(|m| m + 1).collect()
    }
}

impl TryFrom<Vec<usize>> for Coalition {
    type Error = String;

    fn try_from(v: Vec<usize>) -> Result<Self, Self::Error> {
        Coalition::from_one_based(&v).ok_or_else(|| "players are numbered from 1".to_string())
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|m| (m + 1).to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// Who a utility or gap is about.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subject {
    Player(usize),
    Coalition(Coalition),
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Player(i) => write!(f, "player {}", i + 1),
            Subject::Coalition(z) => write!(f, "coalition {z}"),
        }
    }
}

/// One entry of the type distribution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeProfile {
    pub types: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nature: Option<String>,
    #[serde(with = "crate::rational::serde_q")]
    pub prob: Rational,
}

impl TypeProfile {
    pub fn new(types: Vec<String>, prob: Rational) -> Self {
        TypeProfile { types, nature: None, prob }
    }
}

/// Coalition entry: who, how its controller is charged, what it maximizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoalitionSpec {
    pub members: Coalition,
    pub complexity: ComplexityFnSpec,
    pub utility: Utility,
}

/// Limits and tolerances for exact evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactLimits {
    /// Maximum number of (type, tape) leaves enumerated per expectation.
    pub max_leaves: u64,
    /// Random bits enumerated per participant before a branch counts as unresolved.
    pub tape_depth: u32,
    /// Largest unresolved probability mass tolerated.
    #[serde(with = "crate::rational::serde_q")]
    pub residual_tolerance: Rational,
}

impl Default for ExactLimits {
    fn default() -> Self {
        ExactLimits { max_leaves: 1 << 22, tape_depth: 16, residual_tolerance: crate::scalar::ratio(1, 1000) }
    }
}

/// A Bayesian machine game.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameSpec {
    pub name: String,
    pub players: usize,
    pub input_length: usize,
    pub types: Vec<TypeProfile>,
    /// The machine class players choose from, by label.
    pub machines: Vec<MachineProgram>,
    /// One complexity function per player.
    pub complexity: Vec<ComplexityFnSpec>,
    /// One utility per player.
    pub utilities: Vec<Utility>,
    #[serde(default)]
    pub coalitions: Vec<CoalitionSpec>,
    #[serde(default)]
    pub normalized: bool,
    #[serde(default)]
    pub monotone: bool,
    #[serde(default)]
    pub budget: RunBudget,
    #[serde(default)]
    pub limits: ExactLimits,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mediator: Option<MediatorSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GameError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("type probabilities sum to {0}, not 1")]
    ProbabilityNotOne(String),
    #[error(transparent)]
    Complexity(#[from] ComplexityError),
    #[error("exact enumeration exceeds {limit} leaves")]
    ExactModeOverflow { limit: u64 },
    #[error("unresolved probability mass {residual} exceeds tolerance {tolerance}")]
    ResidualTooLarge { residual: String, tolerance: String },
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Mediation(#[from] MediationError),
    #[error("utility: {0}")]
    Utility(String),
    #[error("sampled mode needs normalized utilities in [0,1]")]
    NotNormalized,
    #[error("profile: {0}")]
    Profile(String),
    #[error(transparent)]
    Coalition(#[from] CoalitionError),
}

impl GameError {
    /// Errors that disqualify a candidate machine rather than the whole check.
    pub fn is_machine_fault(&self) -> bool {
        matches!(
            self,
            GameError::Run(_) | GameError::Mediation(MediationError::StageLimitExceeded(_)) | GameError::ResidualTooLarge { .. }
        )
    }
}

impl GameSpec {
    /// Checks every structural invariant of the tuple.
    pub fn validate(&self) -> Result<(), GameError> {
        let schema = |m: String| Err(GameError::Schema(m));
        if self.players == 0 {
            return schema("players must be positive".into());
        }
        if self.types.is_empty() {
            return schema("type space is empty".into());
        }
        let mut total = Rational::zero();
        for tp in &self.types {
            if tp.types.len() != self.players {
                return schema(format!("type profile {:?} has {} entries, expected {}", tp.types, tp.types.len(), self.players));
            }
            if tp.prob <= Rational::zero() {
                return schema(format!("type profile {:?} has non-positive probability", tp.types));
            }
            if tp.types.iter().chain(tp.nature.iter()).any(|t| t.chars().any(|c| crate::vm::instr::symbol_of(c).is_none())) {
                return schema(format!("type profile {:?} has a character outside 0-9 ; |", tp.types));
            }
            total += tp.prob.clone();
        }
        if !total.is_one() {
            return Err(GameError::ProbabilityNotOne(crate::rational::format_rational(&total)));
        }
        if self.complexity.len() != self.players || self.utilities.len() != self.players {
            return schema("need one complexity spec and one utility per player".into());
        }
        for spec in self.complexity.iter().chain(self.coalitions.iter().map(|c| &c.complexity)) {
            spec.check()?;
        }
        let mut labels = BTreeSet::new();
        for m in &self.machines {
            m.validate().map_err(|e| GameError::Schema(e.to_string()))?;
            if !labels.insert(m.label.as_str()) {
                return schema(format!("duplicate machine label {:?}", m.label));
            }
        }
        for c in &self.coalitions {
            if c.members.is_empty() || c.members.members().iter().any(|&m| m >= self.players) {
                return schema(format!("coalition {} names an unknown player", c.members));
            }
        }
        if self.budget.max_steps == 0 || self.budget.max_output_bits == 0 || self.budget.max_rand_bits == 0 {
            return schema("all budget bounds must be positive".into());
        }
        Ok(())
    }

    pub fn machine(&self, label: &str) -> Option<&MachineProgram> {
        self.machines.iter().find(|m| m.label == label)
    }

    pub fn coalition(&self, z: &Coalition) -> Option<&CoalitionSpec> {
        self.coalitions.iter().find(|c| &c.members == z)
    }

    pub fn is_mediated(&self) -> bool {
        self.mediator.is_some()
    }

    /// The same game with a different mediator.
    pub fn with_mediator(&self, mediator: Option<MediatorSpec>) -> GameSpec {
        GameSpec { mediator, ..self.clone() }
    }

    /// The same game with every utility (individual and coalition) replaced by `a·u + b`.
    pub fn affine(&self, a: &Rational, b: &Rational) -> GameSpec {
        let wrap = |u: &Utility| Utility::Affine { scale: a.clone(), shift: b.clone(), inner: Box::new(u.clone()) };
        GameSpec {
            utilities: self.utilities.iter().map(wrap).collect(),
            coalitions: self
                .coalitions
                .iter()
                .map(|c| CoalitionSpec { utility: wrap(&c.utility), ..c.clone() })
                .collect(),
            ..self.clone()
        }
    }

    /// Whether coalition `z`'s utility (or player `z`'s, for singletons) reads
    /// the complexity of anyone outside the subject.
    pub fn reads_foreign_complexity(&self, subject: &Subject) -> bool {
        match subject {
            Subject::Player(i) => self.utilities[*i].reads_foreign_complexity(&Coalition::singleton(*i), self),
            Subject::Coalition(z) => match self.coalition(z) {
                Some(c) => c.utility.reads_foreign_complexity(z, self),
                None => true,
            },
        }
    }
}

/// Machines assigned to players, with optional coalition controllers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyProfile {
    pub assignment: Vec<MachineProgram>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coalition_overrides: Vec<(Coalition, MachineProgram)>,
}

impl StrategyProfile {
    pub fn new(assignment: Vec<MachineProgram>) -> Self {
        StrategyProfile { assignment, coalition_overrides: Vec::new() }
    }

    pub fn symmetric(machine: &MachineProgram, players: usize) -> Self {
        StrategyProfile::new(vec![machine.clone(); players])
    }

    /// Replaces player `i`'s machine.
    pub fn with(&self, i: usize, machine: MachineProgram) -> Self {
        let mut p = self.clone();
        p.assignment[i] = machine;
        p
    }

    /// Places a controller for coalition `z`.
    pub fn with_controller(&self, z: Coalition, machine: MachineProgram) -> Self {
        let mut p = self.clone();
        p.coalition_overrides.retain(|(c, _)| c != &z);
        p.coalition_overrides.push((z, machine));
        p
    }

    pub fn labels(&self) -> Vec<String> {
        self.assignment.iter().map(|m| m.label.clone()).collect()
    }

    pub fn validate(&self, players: usize) -> Result<(), GameError> {
        if self.assignment.len() != players {
            return Err(GameError::Profile(format!("{} machines for {players} players", self.assignment.len())));
        }
        let mut seen = BTreeSet::new();
        for (z, _) in &self.coalition_overrides {
            for &m in z.members() {
                if m >= players || !seen.insert(m) {
                    return Err(GameError::Profile(format!("coalition overrides overlap or name unknown players at {z}")));
                }
            }
        }
        Ok(())
    }
}
