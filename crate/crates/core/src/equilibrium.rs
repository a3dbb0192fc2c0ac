//! Best-response gaps and equilibrium checks over declared candidate classes.
//!
//! Every quantifier over machines ranges over a [`CandidateClass`]; reports
//! name the class they were decided over.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complexity::{verify_speedup, ComplexityFnSpec};
use crate::expr::{Expr, Value};
use crate::game::{
    action_distribution, benign_coalition_machine, enumerate_playouts, expected_utility, Coalition, EvalMode, GameError,
    GameSpec, StrategyProfile, Subject, UtilityOutcome,
};
use crate::mediation::{lambda_machine, MediatorSpec};
use crate::vm::{canonical_bot, MachineProgram};
use crate::Rational;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EquilibriumError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("robust mode assumption violated: {0}")]
    ModeAssumptionViolated(String),
    #[error("speedup: {0}")]
    Speedup(String),
}

/// Finite deviation sets per player and per coalition. ⊥ and the incumbent
/// are always added.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateClass {
    pub label: String,
    pub players: Vec<Vec<MachineProgram>>,
    #[serde(default)]
    pub coalitions: Vec<(Coalition, Vec<MachineProgram>)>,
}

impl CandidateClass {
    pub fn new(label: impl Into<String>, players: Vec<Vec<MachineProgram>>) -> Self {
        CandidateClass { label: label.into(), players, coalitions: Vec::new() }
    }

    /// The same machines for every player.
    pub fn symmetric(label: impl Into<String>, machines: &[MachineProgram], players: usize) -> Self {
        CandidateClass::new(label, vec![machines.to_vec(); players])
    }

    pub fn with_coalition(mut self, z: Coalition, machines: Vec<MachineProgram>) -> Self {
        self.coalitions.retain(|(c, _)| c != &z);
        self.coalitions.push((z, machines));
        self
    }

    /// Keeps only the declared machines accepted by `keep`.
    pub fn restrict(&self, label: impl Into<String>, keep: impl Fn(&MachineProgram) -> bool) -> Self {
        CandidateClass {
            label: label.into(),
            players: self.players.iter().map(|ms| ms.iter().filter(|m| keep(m)).cloned().collect()).collect(),
            coalitions: self
                .coalitions
                .iter()
                .map(|(z, ms)| (z.clone(), ms.iter().filter(|m| keep(m)).cloned().collect()))
                .collect(),
        }
    }

    fn declared(&self, profile: &StrategyProfile, subject: &Subject) -> Vec<MachineProgram> {
        match subject {
            Subject::Player(i) => self.players.get(*i).cloned().unwrap_or_default(),
            Subject::Coalition(z) => {
                if let Some((_, ms)) = self.coalitions.iter().find(|(c, _)| c == z) {
                    return ms.clone();
                }
                // members' own candidates, run side by side
                let mut combos: Vec<Vec<MachineProgram>> = vec![Vec::new()];
                for &m in z.members() {
                    let mut opts = self.players.get(m).cloned().unwrap_or_default();
                    opts.push(profile.assignment[m].clone());
                    opts.push(canonical_bot());
                    dedup(&mut opts);
                    combos = combos
                        .into_iter()
                        .flat_map(|c| {
                            opts.iter().map(move |o| {
                                let mut c = c.clone();
                                c.push(o.clone());
                                c
                            })
                        })
                        .collect();
                }
                combos
                    .into_iter()
                    .filter_map(|members| {
                        let mut assignment = profile.assignment.clone();
                        for (k, &m) in z.members().iter().enumerate() {
                            assignment[m] = members[k].clone();
                        }
                        benign_coalition_machine(&StrategyProfile::new(assignment), z).ok()
                    })
                    .collect()
            }
        }
    }

    /// Declared candidates, then the incumbent, then ⊥, without repeats.
    pub fn candidates(&self, profile: &StrategyProfile, subject: &Subject, incumbent: &MachineProgram) -> Vec<MachineProgram> {
        let mut out = self.declared(profile, subject);
        out.push(incumbent.clone());
        out.push(canonical_bot());
        dedup(&mut out);
        out
    }
}

fn dedup(ms: &mut Vec<MachineProgram>) {
    let mut seen = Vec::new();
    ms.retain(|m| {
        if seen.contains(m) {
            false
        } else {
            seen.push(m.clone());
            true
        }
    });
}

/// A utility difference, exact or estimated.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Gap {
    Exact {
        #[serde(with = "crate::rational::serde_q")]
        value: Rational,
    },
    Sampled { estimate: f64, half_width: f64 },
}

impl Gap {
    fn between(dev: &UtilityOutcome, inc: &UtilityOutcome) -> Gap {
        match (dev, inc) {
            (UtilityOutcome::Exact { value: a, .. }, UtilityOutcome::Exact { value: b, .. }) => {
                Gap::Exact { value: a.clone() - b.clone() }
            }
            _ => {
                let hw = |u: &UtilityOutcome| match u {
                    UtilityOutcome::Sampled { half_width, .. } => *half_width,
                    UtilityOutcome::Exact { .. } => 0.0,
                };
                Gap::Sampled { estimate: dev.as_f64() - inc.as_f64(), half_width: hw(dev) + hw(inc) }
            }
        }
    }

    pub fn exact(&self) -> Option<&Rational> {
        match self {
            Gap::Exact { value } => Some(value),
            Gap::Sampled { .. } => None,
        }
    }

    pub fn as_f64(&self) -> f64 {
        match self {
            Gap::Exact { value } => value.to_f64().unwrap_or(f64::NAN),
            Gap::Sampled { estimate, .. } => *estimate,
        }
    }

    /// `gap > ε`; ties hold.
    pub fn exceeds(&self, eps: &Rational) -> bool {
        match self {
            Gap::Exact { value } => value > eps,
            Gap::Sampled { estimate, .. } => *estimate > eps.to_f64().unwrap_or(f64::NAN),
        }
    }

    fn greater_than(&self, other: &Gap) -> bool {
        match (self, other) {
            (Gap::Exact { value: a }, Gap::Exact { value: b }) => a > b,
            _ => self.as_f64() > other.as_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateResult {
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilityOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<Gap>,
    /// Why the candidate was excluded (it faulted or exceeded its budget).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rejected: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubjectReport {
    #[serde(skip)]
    pub subject: Subject,
    #[serde(rename = "subject")]
    pub name: String,
    pub incumbent: String,
    pub incumbent_utility: UtilityOutcome,
    pub candidates: Vec<CandidateResult>,
    pub max_gap: Gap,
    pub witness: String,
    pub holds: bool,
}

impl SubjectReport {
    pub fn gap_of(&self, label: &str) -> Option<&Gap> {
        self.candidates.iter().find(|c| c.label == label).and_then(|c| c.gap.as_ref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClauseStatus {
    Holds,
    Fails,
    Vacuous,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClauseReport {
    pub game: String,
    pub clause: String,
    pub coalitions: Vec<Coalition>,
    pub status: ClauseStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", with = "crate::rational::serde_q_opt")]
    pub total_variation: Option<Rational>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub check: String,
    pub candidate_class: String,
    pub mode: String,
    #[serde(with = "crate::rational::serde_q")]
    pub epsilon: Rational,
    pub holds: bool,
    pub subjects: Vec<SubjectReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub clauses: Vec<ClauseReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl EquilibriumReport {
    pub fn subject(&self, s: &Subject) -> Option<&SubjectReport> {
        self.subjects.iter().find(|r| &r.subject == s)
    }

    pub fn player(&self, i: usize) -> Option<&SubjectReport> {
        self.subject(&Subject::Player(i))
    }
}

pub fn mode_name(mode: &EvalMode) -> String {
    match mode {
        EvalMode::Exact => "exact".into(),
        EvalMode::Sampled(o) => format!("sampled(seed={}, samples={}, confidence={})", o.seed, o.samples, o.confidence),
    }
}

/// A speedup bound `p(n, t)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedupFn {
    Identity,
    /// Expression in `n` and `t`, floored.
    Expr { expr: Expr },
    /// Step function through `(t, p)` points; below the first point p = t.
    Table { points: Vec<(u64, u64)> },
}

impl SpeedupFn {
    pub fn eval(&self, n: u64, t: u64) -> Result<u64, EquilibriumError> {
        match self {
            SpeedupFn::Identity => Ok(t),
            SpeedupFn::Expr { expr } => {
                let env = |name: &str| match name {
                    "n" => Some(Value::Num(crate::scalar::int(n as i64))),
                    "t" => Some(Value::Num(crate::scalar::int(t as i64))),
                    _ => None,
                };
                let q = expr.eval_num(&env).map_err(|e| EquilibriumError::Speedup(e.to_string()))?;
                let f = q.floor().to_integer();
                f.to_u64().ok_or_else(|| EquilibriumError::Speedup(format!("p({n},{t}) = {q} is not a natural number")))
            }
            SpeedupFn::Table { points } => Ok(points.iter().filter(|(x, _)| *x <= t).map(|(_, p)| *p).next_back().unwrap_or(t)),
        }
    }

    /// `min{x ≥ 1 : p(n, x) ≥ c}`, with 0 kept at 0. Falls back to `c` when
    /// p never reaches `c` on `1..=c`.
    pub fn reduce(&self, n: u64, c: u64) -> Result<u64, EquilibriumError> {
        if c == 0 {
            return Ok(0);
        }
        if self.eval(n, c)? < c {
            return Ok(c);
        }
        let (mut lo, mut hi) = (1u64, c);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if self.eval(n, mid)? >= c {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Ok(lo)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedupMode {
    FavorableDeviator,
    /// Complexity vectors (one spec per player) of the sped-up games to re-check.
    ExplicitList { games: Vec<Vec<ComplexityFnSpec>> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeedupSpec {
    pub p: SpeedupFn,
    #[serde(default)]
    pub homogeneous: bool,
    pub mode: SpeedupMode,
}

impl SpeedupSpec {
    pub fn identity() -> Self {
        SpeedupSpec { p: SpeedupFn::Identity, homogeneous: true, mode: SpeedupMode::FavorableDeviator }
    }

    pub fn favorable(p: SpeedupFn) -> Self {
        SpeedupSpec { p, homogeneous: false, mode: SpeedupMode::FavorableDeviator }
    }

    fn validate(&self, n: u64) -> Result<(), EquilibriumError> {
        let mut prev = self.p.eval(n, 0)?;
        if self.homogeneous && prev != 0 {
            return Err(EquilibriumError::Speedup("homogeneous speedup needs p(n,0) = 0".into()));
        }
        for t in 1..=64 {
            let v = self.p.eval(n, t)?;
            if v < prev {
                return Err(EquilibriumError::Speedup(format!("p(n,t) decreases at t={t}")));
            }
            prev = v;
        }
        Ok(())
    }
}

type Adjust<'a> = Option<&'a (dyn Fn(u64) -> u64 + Sync)>;

fn incumbent_of(game: &GameSpec, profile: &StrategyProfile, subject: &Subject) -> Result<MachineProgram, GameError> {
    match subject {
        Subject::Player(i) => Ok(profile.assignment[*i].clone()),
        Subject::Coalition(z) => match profile.coalition_overrides.iter().find(|(c, _)| c == z) {
            Some((_, m)) => Ok(m.clone()),
            None => {
                let _ = game;
                Ok(benign_coalition_machine(profile, z)?)
            }
        },
    }
}

fn deviate(profile: &StrategyProfile, subject: &Subject, m: &MachineProgram) -> StrategyProfile {
    match subject {
        Subject::Player(i) => profile.with(*i, m.clone()),
        Subject::Coalition(z) => profile.with_controller(z.clone(), m.clone()),
    }
}

fn normalize(game: &GameSpec, subject: &Subject) -> Subject {
    match subject {
        Subject::Coalition(z) if z.is_singleton() && game.coalition(z).is_none() => Subject::Player(z.members()[0]),
        s => s.clone(),
    }
}

fn gap_report(
    game: &GameSpec,
    profile: &StrategyProfile,
    subject: &Subject,
    class: &CandidateClass,
    mode: EvalMode,
    eps: &Rational,
    adjust: Adjust<'_>,
) -> Result<SubjectReport, EquilibriumError> {
    let subject = normalize(game, subject);
    let incumbent = incumbent_of(game, profile, &subject)?;
    let inc_u = expected_utility(game, profile, &subject, mode)?;
    let cands = class.candidates(profile, &subject, &incumbent);
    let results: Vec<Result<CandidateResult, EquilibriumError>> = cands
        .par_iter()
        .map(|m| {
            let label = m.label.clone();
            if m == &incumbent {
                let gap = Gap::between(&inc_u, &inc_u);
                return Ok(CandidateResult { label, utility: Some(inc_u.clone()), gap: Some(gap), rejected: None });
            }
            let dev = deviate(profile, &subject, m);
            let u = crate::game::eval_adjusted(game, &dev, &subject, mode, adjust);
            match u {
                Ok(u) => {
                    let gap = Gap::between(&u, &inc_u);
                    Ok(CandidateResult { label, utility: Some(u), gap: Some(gap), rejected: None })
                }
                Err(e) if e.is_machine_fault() => {
                    Ok(CandidateResult { label, utility: None, gap: None, rejected: Some(e.to_string()) })
                }
                Err(e) => Err(e.into()),
            }
        })
        .collect();
    let candidates = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut best: Option<(usize, &Gap)> = None;
    for (k, c) in candidates.iter().enumerate() {
        if let Some(g) = &c.gap {
            if best.is_none_or(|(_, b)| g.greater_than(b)) {
                best = Some((k, g));
            }
        }
    }
    let (k, max_gap) = best.expect("the incumbent always has a gap");
    let max_gap = max_gap.clone();
    let witness = candidates[k].label.clone();
    Ok(SubjectReport {
        name: subject.to_string(),
        subject,
        incumbent: incumbent.label,
        incumbent_utility: inc_u,
        holds: !max_gap.exceeds(eps),
        max_gap,
        witness,
        candidates,
    })
}

/// Largest gain over the class for `subject`, with the best deviation.
pub fn best_response_gap(
    game: &GameSpec,
    profile: &StrategyProfile,
    subject: &Subject,
    class: &CandidateClass,
    mode: EvalMode,
) -> Result<SubjectReport, EquilibriumError> {
    gap_report(game, profile, subject, class, mode, &Rational::zero(), None)
}

fn report(check: &str, class: &CandidateClass, mode: EvalMode, eps: &Rational, subjects: Vec<SubjectReport>) -> EquilibriumReport {
    EquilibriumReport {
        check: check.into(),
        candidate_class: class.label.clone(),
        mode: mode_name(&mode),
        epsilon: eps.clone(),
        holds: subjects.iter().all(|s| s.holds),
        subjects,
        clauses: Vec::new(),
        notes: Vec::new(),
    }
}

pub fn check_epsilon_nash(
    game: &GameSpec,
    profile: &StrategyProfile,
    eps: &Rational,
    class: &CandidateClass,
    mode: EvalMode,
) -> Result<EquilibriumReport, EquilibriumError> {
    let subjects = (0..game.players)
        .map(|i| gap_report(game, profile, &Subject::Player(i), class, mode, eps, None))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(report("epsilon_nash", class, mode, eps, subjects))
}

fn robust_subjects(
    game: &GameSpec,
    profile: &StrategyProfile,
    subjects: &[Subject],
    speedup: &SpeedupSpec,
    eps: &Rational,
    class: &CandidateClass,
    mode: EvalMode,
) -> Result<(Vec<SubjectReport>, Vec<String>), EquilibriumError> {
    let n = game.input_length as u64;
    speedup.validate(n)?;
    match &speedup.mode {
        SpeedupMode::FavorableDeviator => {
            let trivial = speedup.p == SpeedupFn::Identity;
            if !trivial {
                if !game.monotone {
                    return Err(EquilibriumError::ModeAssumptionViolated(format!("game {:?} is not flagged monotone", game.name)));
                }
                for s in subjects {
                    if game.reads_foreign_complexity(&normalize(game, s)) {
                        return Err(EquilibriumError::ModeAssumptionViolated(format!(
                            "utility of {s} depends on other players' complexity"
                        )));
                    }
                }
            }
            let p = speedup.p.clone();
            let f = move |c: u64| p.reduce(n, c).unwrap_or(c);
            let adjust: Adjust<'_> = if trivial { None } else { Some(&f) };
            let reports = subjects
                .iter()
                .map(|s| gap_report(game, profile, s, class, mode, eps, adjust))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((reports, Vec::new()))
        }
        SpeedupMode::ExplicitList { games } => {
            let mut probes: Vec<MachineProgram> = class.players.iter().flatten().cloned().collect();
            probes.extend(profile.assignment.iter().cloned());
            dedup(&mut probes);
            let p = speedup.p.clone();
            let pf = move |t: u64| p.eval(n, t).unwrap_or(t);
            let mut out = Vec::new();
            let mut notes = Vec::new();
            for (g, specs) in games.iter().enumerate() {
                if specs.len() != game.players {
                    return Err(EquilibriumError::Speedup(format!("speedup game {g} needs one spec per player")));
                }
                for (i, fast) in specs.iter().enumerate() {
                    let slow = &game.complexity[i];
                    match verify_speedup(slow, fast, &pf, &probes, &game.budget).map_err(GameError::from)? {
                        None => {}
                        Some((label, f, s)) => {
                            return Err(EquilibriumError::ModeAssumptionViolated(format!(
                                "speedup game {g}, player {}: not a p-speedup on {label:?} (fast {f}, slow {s})",
                                i + 1
                            )))
                        }
                    }
                }
                let sped = GameSpec { complexity: specs.clone(), ..game.clone() };
                for s in subjects {
                    let mut r = gap_report(&sped, profile, s, class, mode, eps, None)?;
                    r.name = format!("{} [speedup game {g}]", r.name);
                    out.push(r);
                }
                notes.push(format!("speedup game {g} verified on {} probe machines", probes.len() + 1));
            }
            let originals = subjects
                .iter()
                .map(|s| gap_report(game, profile, s, class, mode, eps, None))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((originals.into_iter().chain(out).collect(), notes))
        }
    }
}

pub fn check_p_robust(
    game: &GameSpec,
    profile: &StrategyProfile,
    speedup: &SpeedupSpec,
    eps: &Rational,
    class: &CandidateClass,
    mode: EvalMode,
) -> Result<EquilibriumReport, EquilibriumError> {
    let subjects: Vec<Subject> = (0..game.players).map(Subject::Player).collect();
    let (reports, notes) = robust_subjects(game, profile, &subjects, speedup, eps, class, mode)?;
    let mut r = report("p_robust", class, mode, eps, reports);
    r.notes = notes;
    Ok(r)
}

pub fn check_coalition_safe(
    game: &GameSpec,
    profile: &StrategyProfile,
    coalitions: &[Coalition],
    eps: &Rational,
    class: &CandidateClass,
    mode: EvalMode,
) -> Result<EquilibriumReport, EquilibriumError> {
    let subjects = coalitions
        .iter()
        .map(|z| gap_report(game, profile, &Subject::Coalition(z.clone()), class, mode, eps, None))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(report("coalition_safe", class, mode, eps, subjects))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AcceptabilityReport {
    pub accepted: bool,
    pub c0: Option<u64>,
    pub views_checked: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

/// Whether Λ^F (with `f`) and the protocol (with `f_prime`) have the same
/// constant complexity `c0` on every enumerated run. When `c0` is not given
/// it is read off the first Λ^F run.
pub fn check_m_acceptable(
    game: &GameSpec,
    protocol: &StrategyProfile,
    f_prime: &MediatorSpec,
    f: &MediatorSpec,
    c0: Option<u64>,
) -> Result<AcceptabilityReport, EquilibriumError> {
    let lambda = StrategyProfile::symmetric(&lambda_machine(f.id), game.players);
    let mut c0 = c0;
    let mut views = 0u64;
    for (side, prof, med) in [("lambda", &lambda, f), ("protocol", protocol, f_prime)] {
        let g = game.with_mediator(Some(med.clone()));
        for tp in &g.types {
            let (leaves, _) = enumerate_playouts(&g, prof, &Subject::Player(usize::MAX), tp)?;
            for (_, p) in leaves {
                for (i, &c) in p.complexities.iter().enumerate() {
                    views += 1;
                    let want = *c0.get_or_insert(c);
                    if c != want {
                        return Ok(AcceptabilityReport {
                            accepted: false,
                            c0: Some(want),
                            views_checked: views,
                            witness: Some(format!(
                                "{side} machine {:?} of player {} has complexity {c} on types {:?} (view {:?})",
                                prof.assignment[i].label,
                                i + 1,
                                tp.types,
                                p.views.get(i).map(|v| v.type_prefix.clone()).unwrap_or_default()
                            )),
                        });
                    }
                }
            }
        }
    }
    Ok(AcceptabilityReport { accepted: true, c0, views_checked: views, witness: None })
}

/// Total variation between two laws over action profiles.
pub fn total_variation(a: &BTreeMap<Vec<String>, Rational>, b: &BTreeMap<Vec<String>, Rational>) -> Rational {
    let keys: BTreeSet<&Vec<String>> = a.keys().chain(b.keys()).collect();
    let zero = Rational::zero();
    let mut sum = Rational::zero();
    for k in keys {
        let d = a.get(k).unwrap_or(&zero).clone() - b.get(k).unwrap_or(&zero).clone();
        sum += if d < zero { -d } else { d };
    }
    sum / crate::scalar::int(2)
}

/// Parameters shared by the implementation checks.
#[derive(Debug, Clone)]
pub struct ImplementationCheck<'a> {
    pub protocol: &'a StrategyProfile,
    pub f_prime: &'a MediatorSpec,
    pub f: &'a MediatorSpec,
    pub family: &'a [GameSpec],
    /// One class per game, or a single class for all of them.
    pub classes: &'a [CandidateClass],
    pub coalitions: &'a [Coalition],
    pub speedup: &'a SpeedupSpec,
    pub epsilon: &'a Rational,
    pub mode: EvalMode,
    /// Largest sub-collection of `coalitions` enumerated.
    pub subset_cap: usize,
}

impl ImplementationCheck<'_> {
    fn class(&self, g: usize) -> &CandidateClass {
        &self.classes[if self.classes.len() == 1 { 0 } else { g }]
    }

    fn subsets(&self) -> Vec<Vec<usize>> {
        let n = self.coalitions.len();
        let mut out = Vec::new();
        for mask in 1u64..(1u64 << n.min(63)) {
            if (mask.count_ones() as usize) <= self.subset_cap {
                out.push((0..n).filter(|k| mask >> k & 1 == 1).collect());
            }
        }
        out
    }
}

fn subject_of(z: &Coalition) -> Subject {
    Subject::Coalition(z.clone())
}

pub fn check_universal_implementation(chk: &ImplementationCheck<'_>) -> Result<EquilibriumReport, EquilibriumError> {
    if chk.classes.is_empty() || (chk.classes.len() != 1 && chk.classes.len() != chk.family.len()) {
        return Err(EquilibriumError::Game(GameError::Schema("need one candidate class per game or a single class".into())));
    }
    let mut clauses = Vec::new();
    let mut subjects = Vec::new();
    let mut notes = vec![format!(
        "sub-collections of {} coalitions enumerated up to size {}",
        chk.coalitions.len(),
        chk.subset_cap
    )];
    let zero = Rational::zero();
    for (g, game) in chk.family.iter().enumerate() {
        let class = chk.class(g);
        let with_f = game.with_mediator(Some(chk.f.clone()));
        let with_fp = game.with_mediator(Some(chk.f_prime.clone()));
        let lambda = StrategyProfile::symmetric(&lambda_machine(chk.f.id), game.players);
        let zs: Vec<Subject> = chk.coalitions.iter().map(subject_of).collect();
        let (ante, _) = robust_subjects(&with_f, &lambda, &zs, chk.speedup, &zero, class, chk.mode)?;
        let cons: Vec<SubjectReport> = zs
            .iter()
            .map(|s| gap_report(&with_fp, chk.protocol, s, class, chk.mode, chk.epsilon, None))
            .collect::<Result<_, _>>()?;
        let law_f = action_distribution(game, &lambda, Some(chk.f))?;
        let law_fp = action_distribution(game, chk.protocol, Some(chk.f_prime))?;
        let mut worst: Option<(Rational, usize)> = None;
        for (t, (a, b)) in law_f.iter().zip(&law_fp).enumerate() {
            let tv = total_variation(a, b);
            if tv > zero && worst.as_ref().is_none_or(|(w, _)| &tv > w) {
                worst = Some((tv, t));
            }
        }
        for subset in chk.subsets() {
            let members: Vec<Coalition> = subset.iter().map(|&k| chk.coalitions[k].clone()).collect();
            let antecedent = subset.iter().all(|&k| ante[k].holds);
            let c1 = if !antecedent {
                ClauseStatus::Vacuous
            } else if subset.iter().all(|&k| cons[k].holds) {
                ClauseStatus::Holds
            } else {
                ClauseStatus::Fails
            };
            let witness = subset
                .iter()
                .find(|&&k| antecedent && !cons[k].holds)
                .map(|&k| format!("{}: {} gains {}", cons[k].name, cons[k].witness, gap_text(&cons[k].max_gap)));
            clauses.push(ClauseReport {
                game: game.name.clone(),
                clause: "preserving_equilibrium".into(),
                coalitions: members.clone(),
                status: c1,
                witness,
                total_variation: None,
            });
            let c2 = match (antecedent, &worst) {
                (false, _) => ClauseStatus::Vacuous,
                (true, None) => ClauseStatus::Holds,
                (true, Some(_)) => ClauseStatus::Fails,
            };
            clauses.push(ClauseReport {
                game: game.name.clone(),
                clause: "preserving_action_distributions".into(),
                coalitions: members,
                status: c2,
                witness: worst
                    .as_ref()
                    .filter(|_| antecedent)
                    .map(|(_, t)| format!("type profile {:?}", game.types[*t].types)),
                total_variation: worst.as_ref().filter(|_| antecedent).map(|(w, _)| w.clone()),
            });
        }
        for mut r in ante {
            r.name = format!("{} [{}: lambda with F]", r.name, game.name);
            subjects.push(r);
        }
        for mut r in cons {
            r.name = format!("{} [{}: protocol with F']", r.name, game.name);
            subjects.push(r);
        }
    }
    if chk.coalitions.len() > chk.subset_cap {
        notes.push("larger sub-collections were not checked".into());
    }
    Ok(EquilibriumReport {
        check: "universal_implementation".into(),
        candidate_class: chk.classes.iter().map(|c| c.label.as_str()).collect::<Vec<_>>().join(", "),
        mode: mode_name(&chk.mode),
        epsilon: chk.epsilon.clone(),
        holds: clauses.iter().all(|c| c.status != ClauseStatus::Fails),
        subjects,
        clauses,
        notes,
    })
}

fn gap_text(g: &Gap) -> String {
    match g {
        Gap::Exact { value } => crate::rational::format_rational(value),
        Gap::Sampled { estimate, half_width } => format!("{estimate} ± {half_width}"),
    }
}

fn with_bot(game: &GameSpec, profile: &StrategyProfile, z: &Coalition) -> (StrategyProfile, Subject) {
    match normalize(game, &subject_of(z)) {
        Subject::Player(i) => (profile.with(i, canonical_bot()), Subject::Player(i)),
        s => (profile.with_controller(z.clone(), canonical_bot()), s),
    }
}

pub fn check_strong_universal_implementation(chk: &ImplementationCheck<'_>) -> Result<EquilibriumReport, EquilibriumError> {
    let mut base = check_universal_implementation(chk)?;
    let zero = Rational::zero();
    for (g, game) in chk.family.iter().enumerate() {
        let class = chk.class(g);
        let with_f = game.with_mediator(Some(chk.f.clone()));
        let with_fp = game.with_mediator(Some(chk.f_prime.clone()));
        let lambda = StrategyProfile::symmetric(&lambda_machine(chk.f.id), game.players);
        for z in chk.coalitions {
            let (lp, s) = with_bot(&with_f, &lambda, z);
            let (ante, _) = robust_subjects(&with_f, &lp, std::slice::from_ref(&s), chk.speedup, &zero, class, chk.mode)?;
            let ante = ante.into_iter().next().expect("one subject");
            let (mp, s) = with_bot(&with_fp, chk.protocol, z);
            let cons = gap_report(&with_fp, &mp, &s, class, chk.mode, chk.epsilon, None)?;
            let status = if !ante.holds {
                ClauseStatus::Vacuous
            } else if cons.holds {
                ClauseStatus::Holds
            } else {
                ClauseStatus::Fails
            };
            base.clauses.push(ClauseReport {
                game: game.name.clone(),
                clause: "abstention_preserved".into(),
                coalitions: vec![z.clone()],
                status,
                witness: (status == ClauseStatus::Fails)
                    .then(|| format!("{} gains {} against the protocol", cons.witness, gap_text(&cons.max_gap))),
                total_variation: None,
            });
            let mut a = ante;
            a.name = format!("{} abstains [{}: lambda with F]", a.name, game.name);
            let mut c = cons;
            c.name = format!("{} abstains [{}: protocol with F']", c.name, game.name);
            base.subjects.push(a);
            base.subjects.push(c);
        }
    }
    base.check = "strong_universal_implementation".into();
    base.holds = base.clauses.iter().all(|c| c.status != ClauseStatus::Fails);
    Ok(base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduce_inverts_the_speedup() {
        let p = SpeedupFn::Expr { expr: Expr::parse("2*t").unwrap() };
        assert_eq!(p.reduce(0, 0).unwrap(), 0);
        assert_eq!(p.reduce(0, 1).unwrap(), 1);
        assert_eq!(p.reduce(0, 2).unwrap(), 1);
        assert_eq!(p.reduce(0, 1025).unwrap(), 513);
        assert_eq!(SpeedupFn::Identity.reduce(3, 7).unwrap(), 7);
    }

    #[test]
    fn table_speedup_is_a_step_function() {
        let p = SpeedupFn::Table { points: vec![(1, 3), (4, 10)] };
        assert_eq!(p.eval(0, 0).unwrap(), 0);
        assert_eq!(p.eval(0, 2).unwrap(), 3);
        assert_eq!(p.eval(0, 9).unwrap(), 10);
    }

    #[test]
    fn total_variation_of_disjoint_laws_is_one() {
        let a: BTreeMap<_, _> = [(vec!["0".to_string()], crate::scalar::int(1))].into();
        let b: BTreeMap<_, _> = [(vec!["1".to_string()], crate::scalar::int(1))].into();
        assert_eq!(total_variation(&a, &b), crate::scalar::int(1));
        assert_eq!(total_variation(&a, &a), Rational::zero());
    }
}
