mod common;

use common::q;
use machgame::cases::{xor_class, xor_family};
use machgame::complexity::ComplexityFnSpec;
use machgame::equilibrium::{
    check_coalition_safe, check_epsilon_nash, check_strong_universal_implementation, check_universal_implementation,
    CandidateClass, ImplementationCheck, SpeedupSpec,
};
use machgame::game::{export_game, parse_game, Coalition, CoalitionSpec, EvalMode, GameSpec, StrategyProfile, TypeProfile, Utility};
use machgame::machines::constant;
use machgame::mediation::{flipped_lambda_machine, lambda_machine};
use machgame::vm::RunBudget;
use machgame::Rational;
use num_traits::Zero;

// Players 1 and 2 earn 2 by jointly playing 1, 1 for playing 0 and 0 for
// playing 1 alone; player 3 is indifferent.
fn pair_game() -> GameSpec {
    let u = |me: usize, other: usize| Utility::expr(&format!("if(a{me}==\"1\" && a{other}==\"1\", 2, if(a{me}==\"0\", 1, 0))")).unwrap();
    GameSpec {
        name: "pair".into(),
        players: 3,
        input_length: 0,
        types: vec![TypeProfile::new(vec![String::new(); 3], q(1, 1))],
        machines: vec![constant("zero", "0"), constant("one", "1")],
        complexity: vec![ComplexityFnSpec::Steps; 3],
        utilities: vec![u(1, 2), u(2, 1), Utility::expr("1").unwrap()],
        coalitions: vec![CoalitionSpec {
            members: Coalition::from_one_based(&[1, 2]).unwrap(),
            complexity: ComplexityFnSpec::Steps,
            utility: Utility::MinImprovement { baseline: vec![q(1, 1), q(1, 1)] },
        }],
        normalized: false,
        monotone: true,
        budget: RunBudget::default(),
        limits: Default::default(),
        mediator: None,
    }
}

#[test]
fn pair_deviation_breaks_coalition_safety_but_not_nash() {
    let g = pair_game();
    let zeros = StrategyProfile::symmetric(&constant("zero", "0"), 3);
    let class = CandidateClass::symmetric("{zero, one}", &g.machines, 3);
    let nash = check_epsilon_nash(&g, &zeros, &Rational::zero(), &class, EvalMode::Exact).unwrap();
    assert!(nash.holds);

    let pair = Coalition::from_one_based(&[1, 2]).unwrap();
    let rep = check_coalition_safe(&g, &zeros, &[pair], &Rational::zero(), &class, EvalMode::Exact).unwrap();
    assert!(!rep.holds);
    assert_eq!(rep.subjects[0].max_gap.exact(), Some(&q(1, 1)));

    let singles: Vec<Coalition> = (0..3).map(Coalition::singleton).collect();
    let rep = check_coalition_safe(&g, &zeros, &singles, &Rational::zero(), &class, EvalMode::Exact).unwrap();
    assert_eq!(rep.holds, nash.holds);

    let ones = StrategyProfile::new(vec![constant("one", "1"), constant("one", "1"), constant("zero", "0")]);
    let rep = check_coalition_safe(&g, &ones, &[Coalition::from_one_based(&[1, 2]).unwrap()], &Rational::zero(), &class, EvalMode::Exact)
        .unwrap();
    assert!(rep.holds);
}

#[test]
fn epsilon_absorbs_small_gaps() {
    let g = pair_game();
    let profile = StrategyProfile::new(vec![constant("one", "1"), constant("zero", "0"), constant("zero", "0")]);
    let class = CandidateClass::symmetric("{zero, one}", &g.machines, 3);
    let strict = check_epsilon_nash(&g, &profile, &Rational::zero(), &class, EvalMode::Exact).unwrap();
    assert!(!strict.holds);
    assert_eq!(strict.player(0).unwrap().max_gap.exact(), Some(&q(1, 1)));
    let loose = check_epsilon_nash(&g, &profile, &q(1, 1), &class, EvalMode::Exact).unwrap();
    assert!(loose.holds);
}

#[test]
fn games_with_coalitions_round_trip_through_files() {
    let g = pair_game();
    let p = StrategyProfile::symmetric(&constant("zero", "0"), 3);
    let text = export_game(&g, &[("zeros".into(), p.clone())]).unwrap();
    let back = parse_game(&text, None).unwrap();
    assert_eq!(back.game, g);
    assert_eq!(back.profile("zeros").unwrap(), &p);
}

fn implementation(protocol: &StrategyProfile, strong: bool) -> bool {
    let (family, f) = xor_family();
    let classes = vec![xor_class(); family.len()];
    let coalitions = [Coalition::singleton(0), Coalition::singleton(1)];
    let speedup = SpeedupSpec::identity();
    let zero = Rational::zero();
    let chk = ImplementationCheck {
        protocol,
        f_prime: &f,
        f: &f,
        family: &family,
        classes: &classes,
        coalitions: &coalitions,
        speedup: &speedup,
        epsilon: &zero,
        mode: EvalMode::Exact,
        subset_cap: 2,
    };
    let rep = if strong { check_strong_universal_implementation(&chk) } else { check_universal_implementation(&chk) };
    rep.unwrap().holds
}

#[test]
fn lambda_implements_itself_and_the_flip_does_not() {
    let lam = StrategyProfile::symmetric(&lambda_machine(0), 2);
    let flip = StrategyProfile::symmetric(&flipped_lambda_machine(0), 2);
    assert!(implementation(&lam, false));
    assert!(!implementation(&flip, false));
    assert!(!implementation(&flip, true));
}
