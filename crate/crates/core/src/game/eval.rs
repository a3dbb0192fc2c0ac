//! Playouts and expectations.
//!
//! Exact mode enumerates, per type profile, the binary tree of random bits
//! the participants actually read: a run that asks for a bit past its tape
//! is replayed with the tape extended both ways. Branches still unresolved
//! at the depth cap are dropped and the remaining mass renormalized (runs
//! are conditioned on halting); the dropped mass is reported and must stay
//! below the game's tolerance.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{benign_coalition_machine, Coalition, GameError, GameSpec, Outcome, StrategyProfile, Subject, TypeProfile};
use crate::complexity::{evaluate_complexity, ComplexityFnSpec, EvalContext};
use crate::mediation::{MediatorRun, MediatorSpec, NeedBit, TapeCursor};
use crate::vm::{tape_to_string, BudgetKind, Delivered, Machine, MachineProgram, RunError, RunMeter, View, Yield};
use crate::Rational;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleOptions {
    pub seed: u64,
    pub samples: u64,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalMode {
    Exact,
    Sampled(SampleOptions),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum UtilityOutcome {
    Exact {
        #[serde(with = "crate::rational::serde_q")]
        value: Rational,
        /// Probability mass left unresolved at the tape-depth cap.
        #[serde(with = "crate::rational::serde_q")]
        residual: Rational,
        leaves: u64,
    },
    Sampled { estimate: f64, half_width: f64, confidence: f64, samples: u64, seed: u64 },
}

impl UtilityOutcome {
    pub fn exact_value(&self) -> Option<&Rational> {
        match self {
            UtilityOutcome::Exact { value, .. } => Some(value),
            UtilityOutcome::Sampled { .. } => None,
        }
    }

    pub fn as_f64(&self) -> f64 {
        match self {
            UtilityOutcome::Exact { value, .. } => value.to_f64().unwrap_or(f64::NAN),
            UtilityOutcome::Sampled { estimate, .. } => *estimate,
        }
    }
}

/// Result of one complete playout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Playout {
    pub actions: Vec<String>,
    /// Per player; members of a coalition carry the controller's complexity.
    pub complexities: Vec<u64>,
    /// Per controller, in controller order.
    pub controller_complexities: Vec<u64>,
    pub views: Vec<View>,
    pub meters: Vec<RunMeter>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: u32,
    /// Phase 1: what each player sent (`None` when it had halted).
    pub to_mediator: Vec<Option<String>>,
    /// Phase 2: every message delivered to each player, readable next stage.
    pub delivered: Vec<Vec<Delivered>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub stages: Vec<StageRecord>,
    pub outputs: Vec<String>,
    pub actions: Vec<String>,
    pub views: Vec<View>,
    pub mediator_random_prefix: String,
}

/// One machine and the player slots it controls.
#[derive(Debug, Clone)]
pub(crate) struct Controller {
    pub program: MachineProgram,
    pub slots: Vec<usize>,
    pub spec: ComplexityFnSpec,
    pub is_subject: bool,
}

pub(crate) type Adjust<'a> = Option<&'a (dyn Fn(u64) -> u64 + Sync)>;

enum Stop {
    NeedBit(usize),
    Unresolved,
    Fatal(GameError),
}

impl From<GameError> for Stop {
    fn from(e: GameError) -> Self {
        Stop::Fatal(e)
    }
}

/// Resolves the coalition spec used for a coalition subject.
fn coalition_spec(game: &GameSpec, z: &Coalition) -> Result<ComplexityFnSpec, GameError> {
    if let Some(c) = game.coalition(z) {
        return Ok(c.complexity.clone());
    }
    let first = &game.complexity[z.members()[0]];
    if z.members().iter().all(|&i| &game.complexity[i] == first) {
        Ok(first.clone())
    } else {
        Err(GameError::Schema(format!("no complexity spec for coalition {z}")))
    }
}

/// Normalizes singleton coalitions without their own spec to players.
pub(crate) fn normalize_subject(game: &GameSpec, subject: &Subject) -> Subject {
    match subject {
        Subject::Coalition(z) if z.is_singleton() && game.coalition(z).is_none() => Subject::Player(z.members()[0]),
        s => s.clone(),
    }
}

pub(crate) fn controllers(game: &GameSpec, profile: &StrategyProfile, subject: &Subject) -> Result<Vec<Controller>, GameError> {
    profile.validate(game.players)?;
    let mut owned = vec![false; game.players];
    let mut out = Vec::new();
    let subject_z = match subject {
        Subject::Coalition(z) => Some(z),
        Subject::Player(_) => None,
    };
    let mut overrides = profile.coalition_overrides.clone();
    if let Some(z) = subject_z {
        if !overrides.iter().any(|(c, _)| c == z) {
            if overrides.iter().any(|(c, _)| c.members().iter().any(|m| z.contains(*m))) {
                return Err(GameError::Profile(format!("coalition {z} overlaps another controller")));
            }
            overrides.push((z.clone(), benign_coalition_machine(profile, z)?));
        }
    }
    for (z, prog) in &overrides {
        for &m in z.members() {
            owned[m] = true;
        }
        out.push(Controller {
            program: prog.clone(),
            slots: z.members().to_vec(),
            spec: coalition_spec(game, z)?,
            is_subject: subject_z == Some(z),
        });
    }
    for (i, m) in profile.assignment.iter().enumerate() {
        if !owned[i] {
            out.push(Controller {
                program: m.clone(),
                slots: vec![i],
                spec: game.complexity[i].clone(),
                is_subject: matches!(subject, Subject::Player(p) if *p == i),
            });
        }
    }
    out.sort_by_key(|c| c.slots[0]);
    Ok(out)
}

struct PlayCtx<'a> {
    game: &'a GameSpec,
    controllers: &'a [Controller],
    mediator: Option<&'a MediatorSpec>,
    cap: usize,
    adjust: Adjust<'a>,
}

impl PlayCtx<'_> {
    fn participants(&self) -> usize {
        self.controllers.len() + usize::from(self.mediator.is_some())
    }

    fn run_error(&self, c: usize, tapes: &[Vec<bool>], e: RunError) -> Stop {
        match e {
            RunError::BudgetExceeded { kind: BudgetKind::Tape, .. } => {
                if tapes[c].len() < self.cap {
                    Stop::NeedBit(c)
                } else {
                    Stop::Unresolved
                }
            }
            RunError::BudgetExceeded { kind: BudgetKind::RandBits, .. } => Stop::Unresolved,
            e => Stop::Fatal(e.into()),
        }
    }

    fn play(&self, tp: &TypeProfile, tapes: &[Vec<bool>], record: bool) -> Result<(Playout, Option<Transcript>), Stop> {
        let game = self.game;
        let budget = game.budget;
        let has_ports = self.mediator.is_some();
        let mut machines = Vec::with_capacity(self.controllers.len());
        for (c, ctl) in self.controllers.iter().enumerate() {
            let inputs: Vec<&str> = ctl.slots.iter().map(|&s| tp.types[s].as_str()).collect();
            let m = Machine::new(&ctl.program, &inputs, &tapes[c], budget, has_ports)
                .map_err(|e| Stop::Fatal(e.into()))?;
            machines.push(m);
        }
        let mut transcript = record.then(|| Transcript {
            stages: Vec::new(),
            outputs: Vec::new(),
            actions: Vec::new(),
            views: Vec::new(),
            mediator_random_prefix: String::new(),
        });
        let mut recorded_actions = None;
        match self.mediator {
            None => {
                for (c, m) in machines.iter_mut().enumerate() {
                    match m.resume() {
                        Ok(Yield::Halted) => {}
                        Ok(Yield::Sent(_)) => unreachable!("SEND without ports faults"),
                        Err(e) => return Err(self.run_error(c, tapes, e)),
                    }
                }
            }
            Some(spec) => {
                let players = game.players;
                let mut owner = vec![(0usize, 0usize); players];
                for (c, ctl) in self.controllers.iter().enumerate() {
                    for (k, &s) in ctl.slots.iter().enumerate() {
                        owner[s] = (c, k);
                    }
                }
                let med_idx = self.controllers.len();
                let mut med = MediatorRun::new(spec, players);
                let mut med_tape = TapeCursor { bits: &tapes[med_idx], pos: 0 };
                let mut halted = vec![false; machines.len()];
                let mut stage = 0u32;
                loop {
                    let mut incoming: Vec<Option<String>> = vec![None; players];
                    for (c, m) in machines.iter_mut().enumerate() {
                        if halted[c] {
                            continue;
                        }
                        match m.resume() {
                            Ok(Yield::Halted) => halted[c] = true,
                            Ok(Yield::Sent(msgs)) => {
                                for (k, body) in msgs.into_iter().enumerate() {
                                    incoming[self.controllers[c].slots[k]] = Some(body);
                                }
                            }
                            Err(e) => return Err(self.run_error(c, tapes, e)),
                        }
                    }
                    if halted.iter().all(|h| *h) {
                        break;
                    }
                    if stage >= spec.stage_limit {
                        return Err(Stop::Fatal(crate::mediation::MediationError::StageLimitExceeded(spec.stage_limit).into()));
                    }
                    let phase = match med.step(stage, &incoming, &mut med_tape) {
                        Ok(Ok(p)) => p,
                        Ok(Err(NeedBit)) => {
                            return Err(if tapes[med_idx].len() < self.cap { Stop::NeedBit(med_idx) } else { Stop::Unresolved })
                        }
                        Err(e) => return Err(Stop::Fatal(e.into())),
                    };
                    for (p, ds) in phase.deliveries.iter().enumerate() {
                        let (c, k) = owner[p];
                        for d in ds {
                            machines[c].deliver(k, d.clone());
                        }
                    }
                    if let Some(t) = transcript.as_mut() {
                        t.stages.push(StageRecord { stage, to_mediator: incoming, delivered: phase.deliveries });
                    }
                    stage += 1;
                    if med.ends_game(stage) {
                        break;
                    }
                }
                recorded_actions = med.recorded_actions();
                if let Some(t) = transcript.as_mut() {
                    t.mediator_random_prefix = tape_to_string(&tapes[med_idx][..med_tape.pos]);
                }
            }
        }
        let mut outputs = vec![String::new(); game.players];
        let mut complexities = vec![0u64; game.players];
        let mut controller_complexities = Vec::with_capacity(machines.len());
        let mut views = Vec::with_capacity(machines.len());
        let mut meters = Vec::with_capacity(machines.len());
        for (c, m) in machines.into_iter().enumerate() {
            let ctl = &self.controllers[c];
            let res = m.finish();
            let type_len = ctl.slots.iter().map(|&s| tp.types[s].len()).sum();
            let ctx = EvalContext {
                type_len,
                budget,
                nature_type: tp.nature.as_deref(),
                enumeration_limit: game.limits.max_leaves as u128,
            };
            let mut cost = evaluate_complexity(&ctl.spec, &ctl.program, &res.view, &res.meter, &ctx)
                .map_err(|e| Stop::Fatal(e.into()))?;
            if ctl.is_subject {
                if let Some(f) = self.adjust {
                    cost = f(cost);
                }
            }
            controller_complexities.push(cost);
            for (k, &s) in ctl.slots.iter().enumerate() {
                outputs[s] = res.outputs[k].clone();
                complexities[s] = cost;
            }
            views.push(res.view);
            meters.push(res.meter);
        }
        let actions = recorded_actions.unwrap_or_else(|| outputs.clone());
        if let Some(t) = transcript.as_mut() {
            t.outputs = outputs;
            t.actions = actions.clone();
            t.views = views.clone();
        }
        Ok((Playout { actions, complexities, controller_complexities, views, meters }, transcript))
    }
}

fn cap_for(game: &GameSpec) -> usize {
    (game.limits.tape_depth as u64).min(game.budget.max_rand_bits) as usize
}

/// All halting playouts for one type profile with their probabilities
/// (`2^-bits read`), plus the unresolved mass.
fn leaves(ctx: &PlayCtx<'_>, tp: &TypeProfile, counter: &AtomicU64) -> Result<(Vec<(u32, Playout)>, Rational), GameError> {
    let limit = ctx.game.limits.max_leaves;
    let mut out = Vec::new();
    let mut unresolved = Rational::zero();
    let mut stack: Vec<Vec<Vec<bool>>> = vec![vec![Vec::new(); ctx.participants()]];
    while let Some(tapes) = stack.pop() {
        let depth: usize = tapes.iter().map(|t| t.len()).sum();
        match ctx.play(tp, &tapes, false) {
            Ok((p, _)) => {
                if counter.fetch_add(1, Ordering::Relaxed) >= limit {
                    return Err(GameError::ExactModeOverflow { limit });
                }
                out.push((depth as u32, p));
            }
            Err(Stop::NeedBit(j)) => {
                for bit in [true, false] {
                    let mut t = tapes.clone();
                    t[j].push(bit);
                    stack.push(t);
                }
            }
            Err(Stop::Unresolved) => {
                unresolved += Rational::new(BigInt::one(), BigInt::one() << depth);
            }
            Err(Stop::Fatal(e)) => return Err(e),
        }
    }
    Ok((out, unresolved))
}

fn half_pow(depth: u32) -> Rational {
    Rational::new(BigInt::one(), BigInt::one() << depth as usize)
}

fn subject_value(game: &GameSpec, subject: &Subject, tp: &TypeProfile, p: &Playout, ctls: &[Controller]) -> Result<Rational, GameError> {
    let coalition_complexity = match subject {
        Subject::Coalition(_) => ctls.iter().position(|c| c.is_subject).map(|k| p.controller_complexities[k]),
        Subject::Player(_) => None,
    };
    let out = Outcome {
        types: &tp.types,
        nature: tp.nature.as_deref(),
        actions: &p.actions,
        complexities: &p.complexities,
        coalition_complexity,
    };
    match subject {
        Subject::Player(i) => game.utilities[*i].value(&out, game, subject),
        Subject::Coalition(z) => match game.coalition(z) {
            Some(c) => c.utility.value(&out, game, subject),
            None => Err(GameError::Schema(format!("no utility for coalition {z}"))),
        },
    }
}

/// `U_subject(profile)` in the requested mode.
pub fn expected_utility(game: &GameSpec, profile: &StrategyProfile, subject: &Subject, mode: EvalMode) -> Result<UtilityOutcome, GameError> {
    expected_utility_adjusted(game, profile, subject, mode, None)
}

/// As [`expected_utility`], with the subject's complexity passed through `adjust`.
pub(crate) fn expected_utility_adjusted(
    game: &GameSpec,
    profile: &StrategyProfile,
    subject: &Subject,
    mode: EvalMode,
    adjust: Adjust<'_>,
) -> Result<UtilityOutcome, GameError> {
    let subject = normalize_subject(game, subject);
    let ctls = controllers(game, profile, &subject)?;
    let ctx = PlayCtx { game, controllers: &ctls, mediator: game.mediator.as_ref(), cap: cap_for(game), adjust };
    match mode {
        EvalMode::Exact => {
            let counter = AtomicU64::new(0);
            let parts: Vec<Result<(Rational, Rational), GameError>> = game
                .types
                .par_iter()
                .map(|tp| {
                    let (ls, unresolved) = leaves(&ctx, tp, &counter)?;
                    let mut sum = Rational::zero();
                    let mut mass = Rational::zero();
                    for (depth, p) in &ls {
                        let w = half_pow(*depth);
                        sum += w.clone() * subject_value(game, &subject, tp, p, &ctls)?;
                        mass += w;
                    }
                    if mass.is_zero() {
                        return Err(GameError::ResidualTooLarge {
                            residual: "1/1".into(),
                            tolerance: crate::rational::format_rational(&game.limits.residual_tolerance),
                        });
                    }
                    Ok((tp.prob.clone() * sum / mass, tp.prob.clone() * unresolved))
                })
                .collect();
            let mut value = Rational::zero();
            let mut residual = Rational::zero();
            for part in parts {
                let (v, r) = part?;
                value += v;
                residual += r;
            }
            if residual > game.limits.residual_tolerance {
                return Err(GameError::ResidualTooLarge {
                    residual: crate::rational::format_rational(&residual),
                    tolerance: crate::rational::format_rational(&game.limits.residual_tolerance),
                });
            }
            Ok(UtilityOutcome::Exact { value, residual, leaves: counter.load(Ordering::Relaxed) })
        }
        EvalMode::Sampled(opts) => sampled(&ctx, &subject, &ctls, opts),
    }
}

/// Hoeffding half-width for `n` samples of a [0,1] variable.
pub fn hoeffding_half_width(n: u64, confidence: f64) -> f64 {
    ((2.0 / (1.0 - confidence)).ln() / (2.0 * n as f64)).sqrt()
}

fn sampled(ctx: &PlayCtx<'_>, subject: &Subject, ctls: &[Controller], opts: SampleOptions) -> Result<UtilityOutcome, GameError> {
    let game = ctx.game;
    if !game.normalized {
        return Err(GameError::NotNormalized);
    }
    if opts.samples == 0 || !(0.0 < opts.confidence && opts.confidence < 1.0) {
        return Err(GameError::Schema("sampled mode needs samples > 0 and confidence in (0,1)".into()));
    }
    let weights: Vec<f64> = game.types.iter().map(|t| t.prob.to_f64().unwrap_or(0.0)).collect();
    let pick = WeightedIndex::new(&weights).map_err(|e| GameError::Schema(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut total = 0.0f64;
    let zero = Rational::zero();
    let one = Rational::one();
    let mut drawn = 0u64;
    let mut rejected = 0u64;
    while drawn < opts.samples {
        let tp = &game.types[pick.sample(&mut rng)];
        let mut tapes = vec![Vec::new(); ctx.participants()];
        let value = loop {
            match ctx.play(tp, &tapes, false) {
                Ok((p, _)) => break Some(subject_value(game, subject, tp, &p, ctls)?),
                Err(Stop::NeedBit(j)) => tapes[j].push(rng.gen::<bool>()),
                Err(Stop::Unresolved) => break None,
                Err(Stop::Fatal(e)) => return Err(e),
            }
        };
        let Some(v) = value else {
            rejected += 1;
            if rejected > opts.samples.saturating_mul(16) {
                return Err(GameError::ResidualTooLarge { residual: "sampled".into(), tolerance: "sampled".into() });
            }
            continue;
        };
        if v < zero || v > one {
            return Err(GameError::NotNormalized);
        }
        total += v.to_f64().unwrap_or(f64::NAN);
        drawn += 1;
    }
    Ok(UtilityOutcome::Sampled {
        estimate: total / opts.samples as f64,
        half_width: hoeffding_half_width(opts.samples, opts.confidence),
        confidence: opts.confidence,
        samples: opts.samples,
        seed: opts.seed,
    })
}

/// Per type profile (by index), the exact law of action profiles.
pub type ActionDistribution = Vec<BTreeMap<Vec<String>, Rational>>;

/// Exact distribution over action profiles for every type profile, with
/// `mediator` replacing the game's own.
pub fn action_distribution(
    game: &GameSpec,
    profile: &StrategyProfile,
    mediator: Option<&MediatorSpec>,
) -> Result<ActionDistribution, GameError> {
    let ctls = controllers(game, profile, &Subject::Player(usize::MAX))?;
    let ctx = PlayCtx { game, controllers: &ctls, mediator, cap: cap_for(game), adjust: None };
    let counter = AtomicU64::new(0);
    let parts: Vec<Result<BTreeMap<Vec<String>, Rational>, GameError>> = game
        .types
        .par_iter()
        .map(|tp| {
            let (ls, _) = leaves(&ctx, tp, &counter)?;
            let mut law: BTreeMap<Vec<String>, Rational> = BTreeMap::new();
            let mut mass = Rational::zero();
            for (depth, p) in ls {
                let w = half_pow(depth);
                mass += w.clone();
                *law.entry(p.actions).or_insert_with(Rational::zero) += w;
            }
            for v in law.values_mut() {
                *v = v.clone() / mass.clone();
            }
            Ok(law)
        })
        .collect();
    parts.into_iter().collect()
}

/// Every halting playout for one type profile with its probability
/// (unconditioned), plus the unresolved mass.
pub fn enumerate_playouts(
    game: &GameSpec,
    profile: &StrategyProfile,
    subject: &Subject,
    tp: &TypeProfile,
) -> Result<(Vec<(Rational, Playout)>, Rational), GameError> {
    let subject = normalize_subject(game, subject);
    let ctls = controllers(game, profile, &subject)?;
    let ctx = PlayCtx { game, controllers: &ctls, mediator: game.mediator.as_ref(), cap: cap_for(game), adjust: None };
    let counter = AtomicU64::new(0);
    let (ls, unresolved) = leaves(&ctx, tp, &counter)?;
    Ok((ls.into_iter().map(|(d, p)| (half_pow(d), p)).collect(), unresolved))
}

fn tape_error() -> GameError {
    GameError::Run(RunError::BudgetExceeded { kind: BudgetKind::Tape, meter: Box::default() })
}

/// One playout on fixed tapes (one per controller, then the mediator's).
pub fn play_once(game: &GameSpec, profile: &StrategyProfile, tp: &TypeProfile, tapes: &[Vec<bool>]) -> Result<Playout, GameError> {
    let ctls = controllers(game, profile, &Subject::Player(usize::MAX))?;
    let ctx = PlayCtx { game, controllers: &ctls, mediator: game.mediator.as_ref(), cap: usize::MAX, adjust: None };
    let mut t = tapes.to_vec();
    t.resize(ctx.participants(), Vec::new());
    match ctx.play(tp, &t, false) {
        Ok((p, _)) => Ok(p),
        Err(Stop::Fatal(e)) => Err(e),
        Err(_) => Err(tape_error()),
    }
}

/// Runs a mediated game on fixed tapes and returns the full transcript.
pub fn execute_mediated(
    game: &GameSpec,
    profile: &StrategyProfile,
    mediator: &MediatorSpec,
    tp: &TypeProfile,
    tapes: &[Vec<bool>],
) -> Result<Transcript, GameError> {
    let ctls = controllers(game, profile, &Subject::Player(usize::MAX))?;
    let ctx = PlayCtx { game, controllers: &ctls, mediator: Some(mediator), cap: usize::MAX, adjust: None };
    let mut t = tapes.to_vec();
    t.resize(ctx.participants(), Vec::new());
    match ctx.play(tp, &t, true) {
        Ok((_, Some(tr))) => Ok(tr),
        Ok((_, None)) => unreachable!("recording requested"),
        Err(Stop::Fatal(e)) => Err(e),
        Err(_) => Err(tape_error()),
    }
}
