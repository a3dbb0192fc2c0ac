use std::collections::BTreeMap;

use machgame::cases::{build_frpd, build_primality, build_primality_randomized, build_revelation, build_roshambo, xor_family, FrpdParams, PrimalityParams};
use machgame::complexity::{evaluate_complexity, validate_complexity_spec, ComplexityFnSpec, EvalContext};
use machgame::equilibrium::{check_epsilon_nash, check_p_robust, CandidateClass, EquilibriumReport, SpeedupFn, SpeedupSpec};
use machgame::expr::Expr;
use machgame::game::{expected_utility, EvalMode, GameSpec, SampleOptions, StrategyProfile, Subject};
use machgame::mediation::lambda_machine;
use machgame::vm::{canonical_bot, parse_tape, run_machine, RunBudget};
use machgame::Rational;
use num_traits::{ToPrimitive, Zero};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::TestCaseError;
use rayon::prelude::*;

use super::*;

pub fn shipped_specs() -> Vec<ComplexityFnSpec> {
    let rand_charge = ComplexityFnSpec::RandCharge { base: 1, surcharge: 1 };
    vec![
        ComplexityFnSpec::Steps,
        ComplexityFnSpec::Size,
        rand_charge.clone(),
        ComplexityFnSpec::StateCharge { base: 1, penalty: 0 },
        ComplexityFnSpec::StateCharge { base: 1, penalty: 1024 },
        ComplexityFnSpec::WorstCasePlusSize,
        ComplexityFnSpec::CoarseThreshold { threshold: 2 },
        ComplexityFnSpec::WeightedSum { base: 1, steps: 0, size: 0, rand_bits: 0, registers: 0, state_bits: 0, bits_sent: 1 },
        ComplexityFnSpec::WeightedSum { base: 0, steps: 1, size: 1, rand_bits: 2, registers: 1, state_bits: 1, bits_sent: 1 },
        ComplexityFnSpec::ConstantForProtocol { constant: 3, labels: vec!["lambda".into()], fallback: Some(Box::new(ComplexityFnSpec::Steps)) },
        ComplexityFnSpec::ConstantForProtocol { constant: 1, labels: vec![], fallback: None },
        ComplexityFnSpec::FreeRandomization { inner: Box::new(rand_charge) },
    ]
}

fn sample<S: Strategy>(s: S, n: usize, seed: u8) -> Vec<S::Value> {
    let mut r = runner(n as u32, seed);
    (0..n).map(|_| s.new_tree(&mut r).expect("generator").current()).collect()
}

/// ⊥ scores 0 and every generated program scores at least 1 under every spec.
pub fn bot_zero_law() -> Result<String, String> {
    let mut programs = sample(program(true, 3), 100, 1);
    programs.push(lambda_machine(0));
    let budget = RunBudget::default();
    let mut views = 0;
    for spec in shipped_specs() {
        let mut probes = programs.clone();
        probes.push(canonical_bot());
        let v = validate_complexity_spec(&spec, &probes);
        if !v.accepted {
            return Err(format!("{}: {:?}", spec.kind_name(), v.violation));
        }
        views += v.views_checked;
        let bot = run_machine(&canonical_bot(), "0110", &parse_tape("1011").unwrap(), None, &budget).unwrap();
        let ctx = EvalContext { type_len: 4, ..Default::default() };
        match evaluate_complexity(&spec, &canonical_bot(), &bot.view, &bot.meter, &ctx) {
            Ok(0) => {}
            other => return Err(format!("{} on bot: {other:?}", spec.kind_name())),
        }
        for p in &programs {
            if p.uses_ports() {
                continue;
            }
            let tape = vec![true; 16];
            let Ok(run) = run_machine(p, "0110", &tape, None, &budget) else { continue };
            let ctx = EvalContext { type_len: 4, budget, ..Default::default() };
            match evaluate_complexity(&spec, p, &run.view, &run.meter, &ctx) {
                Ok(v) if v >= 1 => {}
                Err(machgame::complexity::ComplexityError::ExactModeOverflow { .. } | machgame::complexity::ComplexityError::Run(_)) => {}
                other => return Err(format!("{} on {}: {other:?}", spec.kind_name(), p.label)),
            }
        }
    }
    Ok(format!("{} specs, {} programs, {views} views", shipped_specs().len(), programs.len()))
}

/// Same (program, type, tape) gives the same run; any input agreeing with
/// the recorded view gives the same run too.
pub fn determinism_and_view_sufficiency() -> Result<String, String> {
    let mut r = runner(1000, 2);
    let strat = (program(false, 6), type_string(), tape(), prop::collection::vec(any::<bool>(), 0..6), type_string());
    let budget = small_budget();
    let halted = std::cell::Cell::new(0u32);
    let out = r.run(&strat, |(p, ty, tape, more_bits, more_type)| {
        let a = run_machine(&p, &ty, &tape, None, &budget);
        let b = run_machine(&p, &ty, &tape, None, &budget);
        prop_assert_eq!(&a, &b);
        if let Ok(run) = a {
            halted.set(halted.get() + 1);
            let ty2 = if run.view.type_exhausted { ty.clone() } else { format!("{}{more_type}", run.view.type_prefix) };
            let mut tape2 = parse_tape(&run.view.random_prefix).map_err(|e| TestCaseError::fail(e.to_string()))?;
            tape2.extend(more_bits);
            let again = run_machine(&p, &ty2, &tape2, None, &budget).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(again.output(), run.output());
            prop_assert_eq!(&again.view, &run.view);
            prop_assert_eq!(again.meter.steps, run.meter.steps);
            prop_assert_eq!(again.meter.rand_bits, run.meter.rand_bits);
        }
        Ok(())
    });
    out.map_err(|e| e.to_string())?;
    let halted = halted.get();
    Ok(format!("1000 triples, {halted} halting runs re-run on view-consistent inputs"))
}

fn normalize(game: &GameSpec, lo: Rational, hi: Rational) -> GameSpec {
    let width = hi - lo.clone();
    let mut g = game.affine(&(Rational::from_integer(1.into()) / width.clone()), &(-lo / width));
    g.normalized = true;
    g
}

/// Each case-study game, rescaled into [0,1], with its profile under test.
pub fn sampling_targets() -> Vec<(String, GameSpec, StrategyProfile)> {
    let mut out = Vec::new();
    let ro = build_roshambo(&q(1, 1), &q(2, 1));
    out.push(("roshambo".into(), normalize(&ro.game, q(-3, 1), q(1, 1)), ro.profile));
    let pp = PrimalityParams::default();
    let pr = build_primality(&pp);
    out.push(("primality".into(), normalize(&pr.game, q(-1002, 1), q(2, 1)), pr.profile));
    let prr = build_primality_randomized(&pp).expect("builds");
    out.push(("primality-randomized".into(), normalize(&prr.game, q(-1002, 1), q(2, 1)), prr.profile));
    let fp = FrpdParams::default();
    let fr = build_frpd(&fp);
    let reach = q(5 * 9, 1) + fp.alpha.clone();
    out.push(("frpd".into(), normalize(&fr.game, -reach.clone(), reach), fr.profile));
    let rv = build_revelation(5, 1);
    out.push(("revelation".into(), rv.game, rv.profile));
    let (family, f) = xor_family();
    out.push(("xor".into(), family[0].with_mediator(Some(f)), StrategyProfile::symmetric(&lambda_machine(0), 2)));
    let ro_mixed = StrategyProfile::new(vec![ro.class.players[0][3].clone(), ro.class.players[0][0].clone()]);
    out.push(("roshambo-mixed".into(), normalize(&ro.game, q(-3, 1), q(1, 1)), ro_mixed));
    out
}

/// Sampled estimates land within the Hoeffding half-width of the exact value.
pub fn hoeffding_agreement(seeds: u64, samples: u64) -> Result<String, String> {
    let mut lines = Vec::new();
    for (name, game, profile) in sampling_targets() {
        let exact = expected_utility(&game, &profile, &Subject::Player(0), EvalMode::Exact).map_err(|e| format!("{name}: {e}"))?;
        let machgame::game::UtilityOutcome::Exact { value, residual, .. } = exact else { unreachable!() };
        let (v, res) = (value.to_f64().unwrap(), residual.to_f64().unwrap());
        let misses: Vec<u64> = (0..seeds)
            .into_par_iter()
            .map(|seed| {
                let opts = SampleOptions { seed, samples, confidence: 0.99 };
                let s = expected_utility(&game, &profile, &Subject::Player(0), EvalMode::Sampled(opts)).expect("samples");
                let machgame::game::UtilityOutcome::Sampled { estimate, half_width, .. } = s else { unreachable!() };
                u64::from((estimate - v).abs() > half_width + res)
            })
            .collect();
        let missed: u64 = misses.iter().sum();
        let rate = missed as f64 / seeds as f64;
        if rate > 0.02 {
            return Err(format!("{name}: {missed}/{seeds} seeds outside the bound"));
        }
        lines.push(format!("{name} {missed}/{seeds}"));
    }
    Ok(lines.join(", "))
}

fn gaps(r: &EquilibriumReport) -> Vec<BTreeMap<String, Rational>> {
    r.subjects
        .iter()
        .map(|s| s.candidates.iter().filter_map(|c| c.gap.as_ref().and_then(|g| g.exact().cloned()).map(|g| (c.label.clone(), g))).collect())
        .collect()
}

fn class_of(g: &GeneratedGame) -> CandidateClass {
    CandidateClass::symmetric("pool", &g.pool, 2)
}

/// Every gap under `a·u + b` is `a` times the original gap.
pub fn affine_gap_scaling(games: u32) -> Result<String, String> {
    let mut r = runner(games, 3);
    let strat = (generated_game(), 1i64..7, 1i64..5, -9i64..10, 1i64..4);
    let compared = std::cell::Cell::new(0usize);
    r.run(&strat, |(g, an, ad, bn, bd)| {
        let (a, b) = (q(an, ad), q(bn, bd));
        let class = class_of(&g);
        let eps = q(1, 3);
        let base = check_epsilon_nash(&g.game, &g.profile, &eps, &class, EvalMode::Exact).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let scaled_game = g.game.affine(&a, &b);
        let scaled = check_epsilon_nash(&scaled_game, &g.profile, &(eps * a.clone()), &class, EvalMode::Exact)
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(base.holds, scaled.holds);
        for (x, y) in gaps(&base).iter().zip(gaps(&scaled)) {
            prop_assert_eq!(x.len(), y.len());
            for (label, gx) in x {
                prop_assert_eq!(Some(&(gx.clone() * a.clone())), y.get(label));
                compared.set(compared.get() + 1);
            }
        }
        Ok(())
    })
    .map_err(|e| e.to_string())?;
    let compared = compared.get();
    Ok(format!("{games} games, {compared} gaps scaled exactly"))
}

/// Faster speedups never shrink a deviation's gain, and smaller candidate
/// classes never grow the largest gain.
pub fn speedup_and_class_monotonicity(games: u32) -> Result<String, String> {
    let mut r = runner(games, 4);
    let strat = (generated_game(), prop::collection::vec(any::<bool>(), 12));
    let flips = std::cell::Cell::new(0usize);
    r.run(&strat, |(g, keep)| {
        let class = class_of(&g);
        let eps = Rational::zero();
        let mut prev: Option<EquilibriumReport> = None;
        for k in 1..=3 {
            let p = if k == 1 { SpeedupFn::Identity } else { SpeedupFn::Expr { expr: Expr::parse(&format!("{k}*t")).unwrap() } };
            let rep = check_p_robust(&g.game, &g.profile, &SpeedupSpec::favorable(p), &eps, &class, EvalMode::Exact)
                .map_err(|e| TestCaseError::fail(e.to_string()))?;
            if let Some(before) = &prev {
                prop_assert!(before.holds || !rep.holds, "robust under a faster speedup but not a slower one");
                flips.set(flips.get() + usize::from(before.holds && !rep.holds));
                for (x, y) in gaps(before).iter().zip(gaps(&rep)) {
                    for (label, gx) in x {
                        let gy = y.get(label).expect("same candidates");
                        prop_assert!(gy >= gx, "{}: gap fell from {} to {}", label, gx, gy);
                    }
                }
            }
            prev = Some(rep);
        }
        let full = check_epsilon_nash(&g.game, &g.profile, &eps, &class, EvalMode::Exact).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let kept: Vec<String> = g.pool.iter().zip(keep.iter().cycle()).filter(|(_, k)| **k).map(|(m, _)| m.label.clone()).collect();
        let sub = class.restrict("subset", |m| kept.contains(&m.label));
        let part = check_epsilon_nash(&g.game, &g.profile, &eps, &sub, EvalMode::Exact).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(!full.holds || part.holds);
        for (a, b) in full.subjects.iter().zip(&part.subjects) {
            let (a, b) = (a.max_gap.exact().unwrap(), b.max_gap.exact().unwrap());
            prop_assert!(b <= a, "subset gap {} above full gap {}", b, a);
        }
        Ok(())
    })
    .map_err(|e| e.to_string())?;
    let flips = flips.get();
    Ok(format!("{games} games, {flips} verdict flips under faster speedups"))
}
