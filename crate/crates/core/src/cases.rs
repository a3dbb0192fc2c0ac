//! Builders for the worked examples, each with the verdicts it should reproduce.

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use serde::Serialize;

use crate::complexity::ComplexityFnSpec;
use crate::equilibrium::{
    check_epsilon_nash, check_m_acceptable, check_universal_implementation, CandidateClass, ClauseStatus,
    EquilibriumError, EquilibriumReport, ImplementationCheck, SpeedupSpec,
};
use crate::game::{
    expected_utility, export_game, play_once, Charge, Coalition, EvalMode, GameError, GameSpec, StrategyProfile,
    Subject, TypeProfile, Utility,
};
use crate::machines::{
    constant, defect_from, fermat_tester, prefix_sender, tit_for_tat, tit_for_tat_defect_from, trial_division,
    uniform_ternary, Automaton,
};
use crate::mediation::{
    flipped_lambda_machine, functionality_mediator, lambda_machine, repeated_game_harness, Functionality, MediatorKind,
    MediatorSpec,
};
use crate::rational::{format_rational, parse_rational};
use crate::scalar::{int, pow, ratio};
use crate::solver::{induce_finite_game, lift_to_sampler_machine, solve_support_enumeration, InduceMode, SolverError};
use crate::vm::{run_machine, MachineProgram, RunBudget};
use crate::Rational;

#[derive(Debug, thiserror::Error)]
pub enum CaseError {
    #[error("unknown case {0:?}")]
    UnknownCase(String),
    #[error("parameter {name}: {message}")]
    Parameter { name: String, message: String },
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Names accepted by [`run_case`].
pub const CASE_NAMES: &[&str] = &["roshambo", "primality", "primality-randomized", "frpd", "revelation", "xor-implementation"];

/// A verdict the case should reproduce and where it comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Expectation {
    pub check: String,
    pub holds: bool,
    pub basis: String,
}

/// A constructed example: game, profile under test and deviation class.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseStudy {
    pub name: String,
    pub parameters: BTreeMap<String, String>,
    pub game: GameSpec,
    pub mediator: Option<MediatorSpec>,
    pub profile: StrategyProfile,
    pub class: CandidateClass,
    pub expected: Vec<Expectation>,
}

impl CaseStudy {
    /// Game file text with the class as the machine list and the profile
    /// under test as `main`.
    pub fn export(&self) -> Result<String, GameError> {
        let mut game = self.game.clone();
        let mut machines: Vec<MachineProgram> = Vec::new();
        for m in self.class.players.iter().flatten().chain(&self.profile.assignment) {
            if !m.is_bot() && !machines.iter().any(|x| x.label == m.label) {
                machines.push(m.clone());
            }
        }
        game.machines = machines;
        export_game(&game, &[("main".to_string(), self.profile.clone())])
    }

    fn expectation(&self, check: &str) -> Option<&Expectation> {
        self.expected.iter().find(|e| e.check == check)
    }
}

/// One check of a case run.
#[derive(Debug, Clone, Serialize)]
pub struct CaseCheck {
    pub check: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<bool>,
    pub observed: bool,
    pub pass: bool,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub basis: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<EquilibriumReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseBundle {
    pub case: String,
    pub parameters: BTreeMap<String, String>,
    pub pass: bool,
    pub checks: Vec<CaseCheck>,
}

impl CaseBundle {
    pub fn check(&self, name: &str) -> Option<&CaseCheck> {
        self.checks.iter().find(|c| c.check == name)
    }
}

fn record(case: &CaseStudy, check: &str, observed: bool, details: Vec<String>, report: Option<EquilibriumReport>) -> CaseCheck {
    let e = case.expectation(check);
    CaseCheck {
        check: check.to_string(),
        expected: e.map(|e| e.holds),
        observed,
        pass: e.is_none_or(|e| e.holds == observed),
        basis: e.map(|e| e.basis.clone()).unwrap_or_default(),
        details,
        report,
    }
}

fn expect(check: &str, holds: bool, basis: &str) -> Expectation {
    Expectation { check: check.into(), holds, basis: basis.into() }
}

fn q(s: &str) -> String {
    format_rational(&parse_rational(s).expect("literal"))
}

fn lit(v: &Rational) -> String {
    format!("({})", format_rational(v))
}

fn params(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn exact() -> EvalMode {
    EvalMode::Exact
}

// ---------------------------------------------------------------- roshambo

pub fn roshambo_machines() -> Vec<MachineProgram> {
    vec![constant("rock", "0"), constant("paper", "1"), constant("scissors", "2"), uniform_ternary("uniform")]
}

fn roshambo_utility(i: usize, cost_det: &Rational, cost_rand: &Rational) -> String {
    let (me, you) = (i + 1, 2 - i);
    let valid = |p: usize| format!("(a{p}==\"0\"||a{p}==\"1\"||a{p}==\"2\")");
    let win = |p: usize, o: usize| format!("num(a{p})==mod(num(a{o})+1,3)");
    let play = format!(
        "if({} && {}, if({}, 1, if({}, -1, 0)), if({}, 1, if({}, -1, 0)))",
        valid(me),
        valid(you),
        win(me, you),
        win(you, me),
        valid(me),
        valid(you)
    );
    if cost_det.is_zero() && cost_rand.is_zero() {
        play
    } else {
        format!("{play} - if(c{me}>=2, {}, if(c{me}>=1, {}, 0))", lit(cost_rand), lit(cost_det))
    }
}

fn roshambo_game(name: &str, cost_det: &Rational, cost_rand: &Rational, free_randomization: bool) -> GameSpec {
    let rand_charge = ComplexityFnSpec::RandCharge { base: 1, surcharge: 1 };
    let spec = if free_randomization {
        ComplexityFnSpec::FreeRandomization { inner: Box::new(rand_charge) }
    } else {
        rand_charge
    };
    GameSpec {
        name: name.into(),
        players: 2,
        input_length: 0,
        types: vec![TypeProfile::new(vec![String::new(), String::new()], int(1))],
        machines: roshambo_machines(),
        complexity: vec![spec; 2],
        utilities: (0..2).map(|i| Utility::expr(&roshambo_utility(i, cost_det, cost_rand)).expect("well formed")).collect(),
        coalitions: Vec::new(),
        normalized: false,
        monotone: true,
        budget: RunBudget::default(),
        limits: Default::default(),
        mediator: None,
    }
}

/// Rock-paper-scissors where a deterministic machine costs `cost_det` and a
/// randomizing one `cost_rand`. An invalid move loses to a valid one.
pub fn build_roshambo(cost_det: &Rational, cost_rand: &Rational) -> CaseStudy {
    let game = roshambo_game("roshambo", cost_det, cost_rand, false);
    let u = uniform_ternary("uniform");
    let mut expected = Vec::new();
    if cost_rand > cost_det {
        expected.push(expect("no_equilibrium_in_class", true, "randomizing costs more than any deterministic reply"));
    } else if *cost_rand <= int(1) {
        expected.push(expect("no_equilibrium_in_class", false, "(uniform, uniform) ties every deviation"));
    }
    expected.push(expect("free_computation_uniform", true, "unique equilibrium of the zero-sum table"));
    expected.push(expect("free_randomization_round_trip", true, "sampler is charged as the machine it selects"));
    CaseStudy {
        name: "roshambo".into(),
        parameters: params(&[("cost_det", format_rational(cost_det)), ("cost_rand", format_rational(cost_rand))]),
        class: CandidateClass::symmetric("{rock, paper, scissors, uniform}", &roshambo_machines(), 2),
        profile: StrategyProfile::symmetric(&u, 2),
        mediator: None,
        game,
        expected,
    }
}

/// Roshambo with computation free, for the solver.
pub fn roshambo_free_computation() -> GameSpec {
    roshambo_game("roshambo-free", &Rational::zero(), &Rational::zero(), false)
}

/// Roshambo where a sampler is charged only for the machine it hands off to.
pub fn roshambo_free_randomization(cost_det: &Rational, cost_rand: &Rational) -> GameSpec {
    roshambo_game("roshambo-free-randomization", cost_det, cost_rand, true)
}

/// Every profile over the class with its ε=0 Nash report.
pub fn roshambo_sweep(case: &CaseStudy) -> Result<Vec<(Vec<String>, EquilibriumReport)>, CaseError> {
    let ms = roshambo_machines();
    let mut out = Vec::new();
    for a in &ms {
        for b in &ms {
            let p = StrategyProfile::new(vec![a.clone(), b.clone()]);
            let r = check_epsilon_nash(&case.game, &p, &Rational::zero(), &case.class, exact())?;
            out.push((p.labels(), r));
        }
    }
    Ok(out)
}

/// Induce on the free-randomization game, solve, lift both players and
/// certify the lifted profile.
pub fn roshambo_round_trip(
    cost_det: &Rational,
    cost_rand: &Rational,
) -> Result<(StrategyProfile, Vec<Vec<Rational>>, EquilibriumReport), CaseError> {
    let game = roshambo_free_randomization(cost_det, cost_rand);
    let base: Vec<MachineProgram> = roshambo_machines().into_iter().take(3).collect();
    let (fg, machines) = induce_finite_game(&game, &base, InduceMode::FreeRandomization)?;
    let eq = solve_support_enumeration(&fg)?;
    let mut lifted = Vec::new();
    let mut dists = Vec::new();
    for i in 0..2 {
        let dist = eq.strategies[i][0].clone();
        lifted.push(lift_to_sampler_machine(format!("sampler-{}", i + 1), &dist, &machines[i])?);
        dists.push(dist);
    }
    let profile = StrategyProfile::new(lifted.clone());
    let mut class_machines = roshambo_machines();
    class_machines.extend(lifted);
    let class = CandidateClass::symmetric("{rock, paper, scissors, uniform, samplers}", &class_machines, 2);
    let report = check_epsilon_nash(&game, &profile, &Rational::zero(), &class, exact())?;
    Ok((profile, dists, report))
}

fn run_roshambo(p: &BTreeMap<String, String>) -> Result<CaseBundle, CaseError> {
    let d = rational_param(p, "cost_det", "1")?;
    let r = rational_param(p, "cost_rand", "2")?;
    let case = build_roshambo(&d, &r);
    let mut checks = Vec::new();
    let sweep = roshambo_sweep(&case)?;
    let details = sweep
        .iter()
        .map(|(labels, rep)| {
            let worst = rep.subjects.iter().find(|s| !s.holds).unwrap_or(&rep.subjects[0]);
            format!(
                "{}: {} ({} deviates to {}, gap {})",
                labels.join(" vs "),
                if rep.holds { "equilibrium" } else { "not an equilibrium" },
                worst.name,
                worst.witness,
                gap_string(&worst.max_gap)
            )
        })
        .collect();
    checks.push(record(&case, "no_equilibrium_in_class", sweep.iter().all(|(_, r)| !r.holds), details, None));

    let free = roshambo_free_computation();
    let base: Vec<MachineProgram> = roshambo_machines().into_iter().take(3).collect();
    let (fg, _) = induce_finite_game(&free, &base, InduceMode::Cheap { assume: false })?;
    let eq = solve_support_enumeration(&fg)?;
    let third = ratio(1, 3);
    let uniform = eq.strategies.iter().all(|s| s[0].iter().all(|x| *x == third));
    let shown = eq.strategies.iter().map(|s| format!("{:?}", s[0].iter().map(format_rational).collect::<Vec<_>>())).collect();
    checks.push(record(&case, "free_computation_uniform", uniform, shown, None));

    let (_, dists, rep) = roshambo_round_trip(&d, &r)?;
    let shown = dists.iter().map(|d| format!("{:?}", d.iter().map(format_rational).collect::<Vec<_>>())).collect();
    checks.push(record(&case, "free_randomization_round_trip", rep.holds, shown, Some(rep)));
    Ok(bundle(case, checks))
}

// ---------------------------------------------------------------- primality

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimalityParams {
    pub n: usize,
    pub safe_reward: Rational,
    pub correct_reward: Rational,
    pub wrong_penalty: Rational,
    pub time_threshold: u64,
    pub time_penalty: Rational,
}

impl Default for PrimalityParams {
    fn default() -> Self {
        PrimalityParams {
            n: 4,
            safe_reward: int(1),
            correct_reward: int(2),
            wrong_penalty: int(-1000),
            time_threshold: 2,
            time_penalty: int(2),
        }
    }
}

/// Odd `n`-bit numbers with the top bit set, in increasing order.
pub fn primality_types(n: usize) -> Vec<String> {
    let lo = 1u64 << (n - 1);
    (lo..lo << 1).filter(|v| v % 2 == 1).map(|v| format!("{v:0n$b}")).collect()
}

fn primality_game(name: &str, p: &PrimalityParams, types: &[String]) -> GameSpec {
    let expr = format!(
        "if(a1==\"2\", {safe}, if(a1==\"1\"||a1==\"0\", if(is_prime(int(t1))==(a1==\"1\"), {right}, {wrong}), {wrong})) - if(c1>=2, {pen}, 0)",
        safe = lit(&p.safe_reward),
        right = lit(&p.correct_reward),
        wrong = lit(&p.wrong_penalty),
        pen = lit(&p.time_penalty)
    );
    let prob = Rational::new(One::one(), (types.len() as i64).into());
    GameSpec {
        name: name.into(),
        players: 1,
        input_length: p.n,
        types: types.iter().map(|t| TypeProfile::new(vec![t.clone()], prob.clone())).collect(),
        machines: Vec::new(),
        complexity: vec![ComplexityFnSpec::CoarseThreshold { threshold: p.time_threshold }],
        utilities: vec![Utility::expr(&expr).expect("well formed")],
        coalitions: Vec::new(),
        normalized: false,
        monotone: true,
        budget: RunBudget { max_steps: 100_000, ..Default::default() },
        limits: Default::default(),
        mediator: None,
    }
}

fn primality_class(extra: Vec<MachineProgram>) -> Vec<MachineProgram> {
    let mut ms = vec![constant("const-0", "0"), constant("const-1", "1"), constant("const-2", "2")];
    ms.extend(extra);
    ms
}

fn is_prime_u64(v: u64) -> bool {
    v >= 2 && (2..v).take_while(|d| d * d <= v).all(|d| !v.is_multiple_of(d))
}

/// Expected utility of guessing `guess` on every type, by counting primes.
fn constant_guess_value(p: &PrimalityParams, types: &[String], guess_prime: bool) -> Rational {
    let total = types.iter().fold(Rational::zero(), |acc, t| {
        let prime = is_prime_u64(u64::from_str_radix(t, 2).expect("binary"));
        acc + if prime == guess_prime { p.correct_reward.clone() } else { p.wrong_penalty.clone() }
    });
    total / int(types.len() as i64)
}

pub fn build_primality(p: &PrimalityParams) -> CaseStudy {
    let types = primality_types(p.n);
    let game = primality_game("primality", p, &types);
    let tester = trial_division("tester");
    let class = CandidateClass::new("{const-0, const-1, const-2, tester}", vec![primality_class(vec![tester])]);
    // constants take two steps; the tester always exceeds a threshold of 2
    let tester_value = p.correct_reward.clone() - if p.time_threshold < 2 { int(0) } else { p.time_penalty.clone() };
    let best_other = [constant_guess_value(p, &types, true), constant_guess_value(p, &types, false), tester_value]
        .into_iter()
        .fold(p.wrong_penalty.clone(), |m, v| if v > m { v } else { m });
    let mut expected = Vec::new();
    if p.time_threshold == 2 {
        expected.push(expect("safe_is_best_response", p.safe_reward >= best_other, "counting primes among the types"));
    }
    let t11 = format!("{:0w$b}", 11, w = p.n);
    if types.contains(&t11) {
        expected.push(expect(
            "safe_is_conditional_best_response_at_11",
            p.safe_reward >= p.correct_reward,
            "11 is prime, so guessing prime earns the correct reward",
        ));
    }
    CaseStudy {
        name: "primality".into(),
        parameters: primality_params_map(p),
        profile: StrategyProfile::new(vec![constant("const-2", "2")]),
        mediator: None,
        game,
        class,
        expected,
    }
}

fn primality_params_map(p: &PrimalityParams) -> BTreeMap<String, String> {
    params(&[
        ("n", p.n.to_string()),
        ("safe_reward", format_rational(&p.safe_reward)),
        ("correct_reward", format_rational(&p.correct_reward)),
        ("wrong_penalty", format_rational(&p.wrong_penalty)),
        ("time_threshold", p.time_threshold.to_string()),
        ("time_penalty", format_rational(&p.time_penalty)),
    ])
}

/// The game restricted to one type, with probability 1.
pub fn condition_on_type(game: &GameSpec, types: &[String]) -> GameSpec {
    let mut g = game.clone();
    g.types = g.types.into_iter().filter(|tp| tp.types == types).map(|mut tp| {
        tp.prob = int(1);
        tp
    }).collect();
    g
}

/// Largest step count of `m` over the types and every tape of `bits` bits,
/// and the set of outputs seen per type.
fn measure(m: &MachineProgram, types: &[String], bits: u32, budget: &RunBudget) -> Result<(u64, u64, Vec<Vec<String>>), CaseError> {
    let mut max = 0;
    let mut min = u64::MAX;
    let mut outs = Vec::new();
    for t in types {
        let mut seen: Vec<String> = Vec::new();
        for r in 0..1u64 << bits {
            let tape: Vec<bool> = (0..bits).rev().map(|k| r >> k & 1 == 1).collect();
            let res = run_machine(m, t, &tape, None, budget).map_err(GameError::from)?;
            max = max.max(res.meter.steps);
            min = min.min(res.meter.steps);
            if !seen.contains(&res.output().to_string()) {
                seen.push(res.output().to_string());
            }
        }
        outs.push(seen);
    }
    Ok((max, min, outs))
}

/// The primality game with a randomized tester and the time threshold set
/// to the tester's measured worst-case step count.
pub fn build_primality_randomized(p: &PrimalityParams) -> Result<CaseStudy, CaseError> {
    let types = primality_types(p.n);
    let fermat = fermat_tester("fermat");
    let det = trial_division("tester");
    let budget = RunBudget { max_steps: 100_000, ..Default::default() };
    let bits = crate::vm::max_random_bits(&fermat, &budget) as u32;
    let (fermat_max, _, fermat_out) = measure(&fermat, &types, bits, &budget)?;
    let (det_max, _, _) = measure(&det, &types, 0, &budget)?;
    let params = PrimalityParams { time_threshold: fermat_max, ..p.clone() };
    let game = primality_game("primality-randomized", &params, &types);
    let fermat_correct = types.iter().zip(&fermat_out).all(|(t, outs)| {
        let want = if is_prime_u64(u64::from_str_radix(t, 2).expect("binary")) { "1" } else { "0" };
        outs.iter().all(|o| o == want)
    });
    let mut expected = Vec::new();
    expected.push(expect(
        "randomized_is_strict_best_response",
        fermat_correct && det_max > fermat_max && params.correct_reward > params.safe_reward,
        "measured step counts: the deterministic tester exceeds the threshold on some type",
    ));
    let mut pm = primality_params_map(&params);
    pm.insert("deterministic_max_steps".into(), det_max.to_string());
    Ok(CaseStudy {
        name: "primality-randomized".into(),
        parameters: pm,
        class: CandidateClass::new("{const-0, const-1, const-2, tester, fermat}", vec![primality_class(vec![det, fermat.clone()])]),
        profile: StrategyProfile::new(vec![fermat]),
        mediator: None,
        game,
        expected,
    })
}

fn run_primality(p: &BTreeMap<String, String>) -> Result<CaseBundle, CaseError> {
    let pp = primality_params(p)?;
    let case = build_primality(&pp);
    let rep = check_epsilon_nash(&case.game, &case.profile, &Rational::zero(), &case.class, exact())?;
    let details = gap_table(&rep);
    let mut checks = vec![record(&case, "safe_is_best_response", rep.holds, details, Some(rep))];
    let t11 = format!("{:0w$b}", 11, w = pp.n);
    if primality_types(pp.n).contains(&t11) {
        let g = condition_on_type(&case.game, std::slice::from_ref(&t11));
        let rep = check_epsilon_nash(&g, &case.profile, &Rational::zero(), &case.class, exact())?;
        let details = gap_table(&rep);
        checks.push(record(&case, "safe_is_conditional_best_response_at_11", rep.holds, details, Some(rep)));
    }
    Ok(bundle(case, checks))
}

fn run_primality_randomized(p: &BTreeMap<String, String>) -> Result<CaseBundle, CaseError> {
    let case = build_primality_randomized(&primality_params(p)?)?;
    let rep = check_epsilon_nash(&case.game, &case.profile, &Rational::zero(), &case.class, exact())?;
    let strict = rep.holds
        && rep.subjects[0].candidates.iter().all(|c| {
            c.label == case.profile.assignment[0].label || c.gap.as_ref().and_then(|g| g.exact().cloned()).is_some_and(|g| g < Rational::zero())
        });
    let details = gap_table(&rep);
    let checks = vec![record(&case, "randomized_is_strict_best_response", strict, details, Some(rep))];
    Ok(bundle(case, checks))
}

// ---------------------------------------------------------------- FRPD

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrpdParams {
    pub rounds: u32,
    pub delta: Rational,
    pub alpha: Rational,
    pub state_cap: usize,
}

impl Default for FrpdParams {
    fn default() -> Self {
        FrpdParams { rounds: 10, delta: ratio(9, 10), alpha: ratio(7, 10), state_cap: 2 }
    }
}

/// Penalty added to the complexity of machines that carry state, large
/// enough to survive any speedup considered.
pub const MEMORY_PENALTY: u64 = 1024;

/// Stage payoffs indexed `[mine][theirs]`, `0` cooperate, `1` defect.
pub fn prisoners_dilemma() -> [[Rational; 2]; 2] {
    [[int(3), int(-5)], [int(5), int(-3)]]
}

fn frpd_game(p: &FrpdParams, memory_free_for_second: bool) -> (GameSpec, MediatorSpec) {
    let charges = vec![Charge { at_least: 2, amount: p.alpha.clone() }];
    let (mut game, med) = repeated_game_harness("frpd", prisoners_dilemma(), p.rounds, p.delta.clone(), charges, MEMORY_PENALTY);
    if memory_free_for_second {
        game.name = "frpd-one-sided".into();
        game.complexity[1] = ComplexityFnSpec::StateCharge { base: 1, penalty: 0 };
    }
    (game, med)
}

/// Per-round automata up to the state cap plus round-counting deviants.
pub fn frpd_class(p: &FrpdParams) -> CandidateClass {
    let mut ms: Vec<MachineProgram> = vec![tit_for_tat()];
    for a in Automaton::all() {
        if p.state_cap >= 2 || a.as_reactive().is_some() {
            let m = a.program();
            if !ms.contains(&m) {
                ms.push(m);
            }
        }
    }
    for k in 1..=p.rounds {
        ms.push(defect_from(k));
    }
    for k in 1..=p.rounds {
        ms.push(tit_for_tat_defect_from(k));
    }
    let label = format!(
        "per-round automata with at most {} states, defect-from-k and tft-defect-from-k for k <= {}",
        p.state_cap.min(2),
        p.rounds
    );
    CandidateClass::symmetric(label, &ms, 2)
}

/// `2δ^N`, the discounted gain from defecting in the last round only.
pub fn last_round_gain(p: &FrpdParams) -> Rational {
    int(2) * pow(&p.delta, p.rounds)
}

/// `6δ^{k+1} − 2δ^k`, the least loss from first defecting at round `k < N`.
pub fn early_defection_loss(p: &FrpdParams, k: u32) -> Rational {
    int(6) * pow(&p.delta, k + 1) - int(2) * pow(&p.delta, k)
}

pub fn build_frpd(p: &FrpdParams) -> CaseStudy {
    let (game, med) = frpd_game(p, false);
    let two_last = int(2) * pow(&p.delta, p.rounds - 1) + last_round_gain(p);
    let expected = vec![
        expect("tit_for_tat_is_equilibrium", p.alpha >= last_round_gain(p), "memory charge against the last-round gain"),
        expect("last_round_deviation_gap", true, "gap of defecting in the last round is 2δ^N − α"),
        expect("early_defection_losses", true, "loss of at least 6δ^{k+1} − 2δ^k"),
        expect(
            "one_sided_memory_equilibrium",
            p.alpha >= two_last,
            "the memory-bound player can count and defect in the last two rounds for 2δ^(N−1) + 2δ^N − α",
        ),
    ];
    CaseStudy {
        name: "frpd".into(),
        parameters: params(&[
            ("N", p.rounds.to_string()),
            ("delta", format_rational(&p.delta)),
            ("alpha", format_rational(&p.alpha)),
            ("state_cap", p.state_cap.to_string()),
        ]),
        class: frpd_class(p),
        profile: StrategyProfile::symmetric(&tit_for_tat(), 2),
        mediator: Some(med),
        game,
        expected,
    }
}

fn frpd_params(p: &BTreeMap<String, String>) -> Result<FrpdParams, CaseError> {
    let fp = FrpdParams {
        rounds: uint_param(p, "N", 10)? as u32,
        delta: rational_param(p, "delta", "9/10")?,
        alpha: rational_param(p, "alpha", "7/10")?,
        state_cap: uint_param(p, "state_cap", 2)? as usize,
    };
    if fp.rounds <= 2 || fp.rounds > 40 || fp.delta <= ratio(1, 2) || fp.delta >= int(1) {
        return Err(CaseError::Parameter { name: "N/delta".into(), message: "need 2 < N <= 40 and 1/2 < delta < 1".into() });
    }
    Ok(fp)
}

fn run_frpd(p: &BTreeMap<String, String>) -> Result<CaseBundle, CaseError> {
    let fp = frpd_params(p)?;
    let case = build_frpd(&fp);
    let rep = check_epsilon_nash(&case.game, &case.profile, &Rational::zero(), &case.class, exact())?;
    let mut checks = Vec::new();
    let s = rep.player(0).expect("two players");
    let last = format!("defect-from-{}", fp.rounds);
    let want = last_round_gain(&fp) - fp.alpha.clone();
    let got = s.gap_of(&last).and_then(|g| g.exact().cloned());
    let gap_ok = got.as_ref() == Some(&want);
    let detail = vec![format!(
        "{last}: gap {} (2δ^N − α = {})",
        got.as_ref().map(format_rational).unwrap_or_else(|| "-".into()),
        format_rational(&want)
    )];
    let mut early = Vec::new();
    let mut early_ok = true;
    for k in 1..fp.rounds {
        for label in [format!("defect-from-{k}"), format!("tft-defect-from-{k}")] {
            let bound = early_defection_loss(&fp, k);
            match s.gap_of(&label).and_then(|g| g.exact().cloned()) {
                Some(g) => {
                    let loss = -g;
                    let ok = loss >= bound;
                    early_ok &= ok;
                    early.push(format!("{label}: loss {} >= {}: {ok}", format_rational(&loss), format_rational(&bound)));
                }
                None => {
                    early_ok = false;
                    early.push(format!("{label}: no exact gap"));
                }
            }
        }
    }
    let details = vec![format!("witness {} with gap {}", s.witness, gap_string(&s.max_gap))];
    checks.push(record(&case, "tit_for_tat_is_equilibrium", rep.holds, details, Some(rep)));
    checks.push(record(&case, "last_round_deviation_gap", gap_ok, detail, None));
    checks.push(record(&case, "early_defection_losses", early_ok, early, None));

    let (g2, _) = frpd_game(&fp, true);
    let prof = StrategyProfile::new(vec![tit_for_tat(), tit_for_tat_defect_from(fp.rounds)]);
    let rep = check_epsilon_nash(&g2, &prof, &Rational::zero(), &case.class, exact())?;
    let details = rep
        .subjects
        .iter()
        .map(|s| format!("{}: witness {} with gap {}", s.name, s.witness, gap_string(&s.max_gap)))
        .collect();
    checks.push(record(&case, "one_sided_memory_equilibrium", rep.holds, details, Some(rep)));
    Ok(bundle(case, checks))
}

// ---------------------------------------------------------------- revelation

/// Pairs of `n`-bit types that are equal or agree in at most `k` positions.
pub fn admissible_pairs(n: usize, k: usize) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for a in 0..1u32 << n {
        for b in 0..1u32 << n {
            let agree = n - (a ^ b).count_ones() as usize;
            if a == b || agree <= k {
                out.push((format!("{a:0n$b}"), format!("{b:0n$b}")));
            }
        }
    }
    out
}

fn revelation_game(n: usize, k: usize, pairs: &[(String, String)], med: &MediatorSpec) -> GameSpec {
    let prob = Rational::new(One::one(), (pairs.len() as i64).into());
    let util = |i: usize| {
        Utility::expr(&format!("if((a{i}==\"1\")==(t1==t2) && c{i}<={}, 1, 0)", k + 2)).expect("well formed")
    };
    GameSpec {
        name: "revelation".into(),
        players: 2,
        input_length: n,
        types: pairs.iter().map(|(a, b)| TypeProfile::new(vec![a.clone(), b.clone()], prob.clone())).collect(),
        machines: Vec::new(),
        complexity: vec![ComplexityFnSpec::WeightedSum { base: 1, steps: 0, size: 0, rand_bits: 0, registers: 0, state_bits: 0, bits_sent: 1 }; 2],
        utilities: vec![util(1), util(2)],
        coalitions: Vec::new(),
        normalized: true,
        monotone: true,
        budget: RunBudget::default(),
        limits: Default::default(),
        mediator: Some(med.clone()),
    }
}

pub fn revelation_class(n: usize) -> CandidateClass {
    let mut ms: Vec<MachineProgram> = (0..=n).map(prefix_sender).collect();
    ms.push(constant("same", "1"));
    ms.push(constant("different", "0"));
    CandidateClass::symmetric(format!("send-prefix-0..{n}, constant guesses"), &ms, 2)
}

pub fn build_revelation(n: usize, k: usize) -> CaseStudy {
    let med = MediatorSpec { id: 0, kind: MediatorKind::Comparator { prefix_len: k + 1 }, stage_limit: 4 };
    let pairs = admissible_pairs(n, k);
    let game = revelation_game(n, k, &pairs, &med);
    let expected = vec![
        expect("comparator_correct", true, "agreeing in at most k positions forces a mismatch in the first k+1"),
        expect("prefix_profile_is_equilibrium", true, "every player is right and within the bit budget"),
        expect("full_report_utility_zero", true, "sending all n bits exceeds the budget k+2"),
        expect("full_report_is_equilibrium", false, "switching to the prefix earns 1"),
        expect("equal_types_constant_earns_one", true, "guessing equal is always right when types are equal"),
    ];
    CaseStudy {
        name: "revelation".into(),
        parameters: params(&[("n", n.to_string()), ("k", k.to_string())]),
        class: revelation_class(n),
        profile: StrategyProfile::symmetric(&prefix_sender(k + 1), 2),
        mediator: Some(med),
        game,
        expected,
    }
}

fn revelation_params(p: &BTreeMap<String, String>) -> Result<(usize, usize), CaseError> {
    let n = uint_param(p, "n", 5)? as usize;
    let k = uint_param(p, "k", 1)? as usize;
    if k + 1 >= n || n > 12 {
        return Err(CaseError::Parameter { name: "n/k".into(), message: "need k + 1 < n <= 12".into() });
    }
    Ok((n, k))
}

fn run_revelation(p: &BTreeMap<String, String>) -> Result<CaseBundle, CaseError> {
    let (n, k) = revelation_params(p)?;
    let case = build_revelation(n, k);
    let mut checks = Vec::new();

    let mut wrong = Vec::new();
    for tp in &case.game.types {
        let play = play_once(&case.game, &case.profile, tp, &[])?;
        let want = if tp.types[0] == tp.types[1] { "1" } else { "0" };
        if play.actions.iter().any(|a| a != want) {
            wrong.push(format!("{:?} -> {:?}", tp.types, play.actions));
        }
    }
    let mut details = vec![format!("{} admissible type pairs", case.game.types.len())];
    details.extend(wrong.iter().take(5).cloned());
    checks.push(record(&case, "comparator_correct", wrong.is_empty(), details, None));

    let rep = check_epsilon_nash(&case.game, &case.profile, &Rational::zero(), &case.class, exact())?;
    let details = gap_table(&rep);
    checks.push(record(&case, "prefix_profile_is_equilibrium", rep.holds, details, Some(rep)));

    let full = StrategyProfile::symmetric(&prefix_sender(n), 2);
    let mut zero = true;
    let mut details = Vec::new();
    for i in 0..2 {
        let u = expected_utility(&case.game, &full, &Subject::Player(i), exact())?;
        let v = u.exact_value().cloned().unwrap_or_else(|| int(-1));
        zero &= v.is_zero();
        details.push(format!("player {}: {}", i + 1, format_rational(&v)));
    }
    checks.push(record(&case, "full_report_utility_zero", zero, details, None));

    let rep = check_epsilon_nash(&case.game, &full, &Rational::zero(), &case.class, exact())?;
    let details = vec![format!("witness {} with gap {}", rep.subjects[0].witness, gap_string(&rep.subjects[0].max_gap))];
    checks.push(record(&case, "full_report_is_equilibrium", rep.holds, details, Some(rep)));

    let mut eq_game = case.game.clone();
    eq_game.types.retain(|tp| tp.types[0] == tp.types[1]);
    let prob = Rational::new(One::one(), (eq_game.types.len() as i64).into());
    eq_game.types.iter_mut().for_each(|tp| tp.prob = prob.clone());
    let same = StrategyProfile::symmetric(&constant("same", "1"), 2);
    let u = expected_utility(&eq_game, &same, &Subject::Player(0), exact())?;
    let one = u.exact_value().is_some_and(|v| v.is_one());
    let shown = u.exact_value().map(format_rational).unwrap_or_default();
    checks.push(record(&case, "equal_types_constant_earns_one", one, vec![format!("same vs same: {shown}")], None));
    Ok(bundle(case, checks))
}

// ---------------------------------------------------------------- universal implementation

/// Two players with one-bit inputs `x;0`, the XOR functionality, and a
/// family of three games.
pub fn xor_family() -> (Vec<GameSpec>, MediatorSpec) {
    let f = functionality_mediator(Functionality::Xor, 1);
    let mut types = Vec::new();
    for x in ["0", "1"] {
        for y in ["0", "1"] {
            types.push(TypeProfile::new(vec![format!("{x};0"), format!("{y};0")], ratio(1, 4)));
        }
    }
    let base = |name: &str, u: [&str; 2]| GameSpec {
        name: name.into(),
        players: 2,
        input_length: 3,
        types: types.clone(),
        machines: Vec::new(),
        complexity: vec![ComplexityFnSpec::Steps; 2],
        utilities: u.iter().map(|s| Utility::expr(s).expect("well formed")).collect(),
        coalitions: Vec::new(),
        normalized: true,
        monotone: true,
        budget: RunBudget::default(),
        limits: Default::default(),
        mediator: None,
    };
    let xor = "xor(substr(t1,0,1), substr(t2,0,1))";
    let family = vec![
        base("xor-reward", [&format!("if(a1=={xor},1,0)"), &format!("if(a2=={xor},1,0)")]),
        base("agreement", ["if(a1==a2,1,0)", "if(a1==a2,1,0)"]),
        base("own-bit", ["if(a1==substr(t1,0,1),1,0)", "if(a2==substr(t2,0,1),1,0)"]),
    ];
    (family, f)
}

pub fn xor_class() -> CandidateClass {
    let ms = vec![lambda_machine(0), flipped_lambda_machine(0), constant("zero", "0"), constant("one", "1")];
    CandidateClass::symmetric("{lambda, flipped lambda, zero, one}", &ms, 2)
}

fn implementation_report(protocol: &StrategyProfile, family: &[GameSpec], f: &MediatorSpec) -> Result<EquilibriumReport, CaseError> {
    let classes = [xor_class()];
    let coalitions = [Coalition::singleton(0), Coalition::singleton(1)];
    let speedup = SpeedupSpec::identity();
    let zero = Rational::zero();
    let chk = ImplementationCheck {
        protocol,
        f_prime: f,
        f,
        family,
        classes: &classes,
        coalitions: &coalitions,
        speedup: &speedup,
        epsilon: &zero,
        mode: exact(),
        subset_cap: 2,
    };
    Ok(check_universal_implementation(&chk)?)
}

fn run_xor(_: &BTreeMap<String, String>) -> Result<CaseBundle, CaseError> {
    let (family, f) = xor_family();
    let identity = StrategyProfile::symmetric(&lambda_machine(0), 2);
    let flipped = StrategyProfile::symmetric(&flipped_lambda_machine(0), 2);
    let case = CaseStudy {
        name: "xor-implementation".into(),
        parameters: BTreeMap::new(),
        game: family[0].with_mediator(Some(f.clone())),
        mediator: Some(f.clone()),
        profile: identity.clone(),
        class: xor_class(),
        expected: vec![
            expect("identity_implements", true, "the protocol is lambda itself"),
            expect("flipped_preserves_distributions", false, "a flipped output bit moves all mass"),
            expect("identity_acceptable", true, "same machine, same step counts"),
            expect("flipped_acceptable", false, "the flip costs extra steps"),
        ],
    };
    let mut checks = Vec::new();
    let rep = implementation_report(&identity, &family, &f)?;
    checks.push(record(&case, "identity_implements", rep.holds, Vec::new(), Some(rep)));

    let rep = implementation_report(&flipped, &family, &f)?;
    let worst = rep
        .clauses
        .iter()
        .filter(|c| c.clause == "preserving_action_distributions" && c.status == ClauseStatus::Fails)
        .filter_map(|c| c.total_variation.clone().map(|tv| (tv, c.witness.clone().unwrap_or_default(), c.game.clone())))
        .fold(None::<(Rational, String, String)>, |best, c| match best {
            Some(b) if b.0 >= c.0 => Some(b),
            _ => Some(c),
        });
    let preserved = worst.is_none();
    let details = worst
        .map(|(tv, w, g)| vec![format!("{g}: total variation {} at {w}", format_rational(&tv))])
        .unwrap_or_default();
    checks.push(record(&case, "flipped_preserves_distributions", preserved, details, Some(rep)));

    for (name, prof) in [("identity_acceptable", &identity), ("flipped_acceptable", &flipped)] {
        let acc = check_m_acceptable(&family[0], prof, &f, &f, None)?;
        let details = acc.witness.clone().into_iter().collect();
        checks.push(record(&case, name, acc.accepted, details, None));
    }
    Ok(bundle(case, checks))
}

// ---------------------------------------------------------------- plumbing

fn bundle(case: CaseStudy, checks: Vec<CaseCheck>) -> CaseBundle {
    CaseBundle { pass: checks.iter().all(|c| c.pass), case: case.name, parameters: case.parameters, checks }
}

fn gap_string(g: &crate::equilibrium::Gap) -> String {
    match g.exact() {
        Some(v) => format_rational(v),
        None => format!("{:.6}", g.as_f64()),
    }
}

fn gap_table(rep: &EquilibriumReport) -> Vec<String> {
    rep.subjects
        .iter()
        .flat_map(|s| {
            s.candidates.iter().map(move |c| match &c.gap {
                Some(g) => format!("{} {}: {}", s.name, c.label, gap_string(g)),
                None => format!("{} {}: rejected ({})", s.name, c.label, c.rejected.clone().unwrap_or_default()),
            })
        })
        .collect()
}

fn rational_param(p: &BTreeMap<String, String>, name: &str, default: &str) -> Result<Rational, CaseError> {
    let s = p.get(name).cloned().unwrap_or_else(|| q(default));
    parse_rational(&s).map_err(|e| CaseError::Parameter { name: name.into(), message: e.to_string() })
}

fn uint_param(p: &BTreeMap<String, String>, name: &str, default: u64) -> Result<u64, CaseError> {
    match p.get(name) {
        None => Ok(default),
        Some(s) => s.parse().map_err(|_| CaseError::Parameter { name: name.into(), message: format!("{s:?} is not a count") }),
    }
}

fn primality_params(p: &BTreeMap<String, String>) -> Result<PrimalityParams, CaseError> {
    let d = PrimalityParams::default();
    let n = uint_param(p, "n", d.n as u64)? as usize;
    if !(3..=12).contains(&n) {
        return Err(CaseError::Parameter { name: "n".into(), message: "need 3 <= n <= 12".into() });
    }
    Ok(PrimalityParams {
        n,
        safe_reward: rational_param(p, "safe_reward", "1")?,
        correct_reward: rational_param(p, "correct_reward", "2")?,
        wrong_penalty: rational_param(p, "wrong_penalty", "-1000")?,
        time_threshold: uint_param(p, "time_threshold", d.time_threshold)?,
        time_penalty: rational_param(p, "time_penalty", "2")?,
    })
}

/// Parameter names each case accepts.
pub fn case_parameters(name: &str) -> Option<&'static [&'static str]> {
    const PRIMALITY: &[&str] = &["n", "safe_reward", "correct_reward", "wrong_penalty", "time_threshold", "time_penalty"];
    Some(match name {
        "roshambo" => &["cost_det", "cost_rand"],
        "primality" | "primality-randomized" => PRIMALITY,
        "frpd" => &["N", "delta", "alpha", "state_cap"],
        "revelation" => &["n", "k"],
        "xor-implementation" => &[],
        _ => return None,
    })
}

fn check_parameters(name: &str, parameters: &BTreeMap<String, String>) -> Result<(), CaseError> {
    let known = case_parameters(name).ok_or_else(|| CaseError::UnknownCase(name.to_string()))?;
    match parameters.keys().find(|k| !known.contains(&k.as_str())) {
        Some(k) => Err(CaseError::Parameter { name: k.clone(), message: format!("{name} takes {known:?}") }),
        None => Ok(()),
    }
}

/// Builds the named case, runs its checks and compares with the expected verdicts.
pub fn run_case(name: &str, parameters: &BTreeMap<String, String>) -> Result<CaseBundle, CaseError> {
    check_parameters(name, parameters)?;
    match name {
        "roshambo" => run_roshambo(parameters),
        "primality" => run_primality(parameters),
        "primality-randomized" => run_primality_randomized(parameters),
        "frpd" => run_frpd(parameters),
        "revelation" => run_revelation(parameters),
        "xor-implementation" => run_xor(parameters),
        other => Err(CaseError::UnknownCase(other.to_string())),
    }
}

/// The case as built from `parameters`, for export.
pub fn build_case(name: &str, parameters: &BTreeMap<String, String>) -> Result<CaseStudy, CaseError> {
    check_parameters(name, parameters)?;
    Ok(match name {
        "roshambo" => build_roshambo(&rational_param(parameters, "cost_det", "1")?, &rational_param(parameters, "cost_rand", "2")?),
        "primality" => build_primality(&primality_params(parameters)?),
        "primality-randomized" => build_primality_randomized(&primality_params(parameters)?)?,
        "frpd" => build_frpd(&frpd_params(parameters)?),
        "revelation" => {
            let (n, k) = revelation_params(parameters)?;
            build_revelation(n, k)
        }
        "xor-implementation" => {
            return Err(CaseError::Parameter {
                name: "export".into(),
                message: "the xor family spans several games and has no single file".into(),
            })
        }
        other => return Err(CaseError::UnknownCase(other.to_string())),
    })
}
