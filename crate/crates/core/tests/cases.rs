mod common;

use std::collections::BTreeMap;

use common::q;
use machgame::cases::{build_case, run_case, CaseError, CASE_NAMES};
use machgame::game::parse_game;
use machgame::Rational;

fn params(kv: &[(&str, &str)]) -> BTreeMap<String, String> {
    kv.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[test]
fn every_case_matches_its_expectations_at_defaults() {
    for name in CASE_NAMES {
        let b = run_case(name, &BTreeMap::new()).unwrap();
        for c in &b.checks {
            assert!(c.pass, "{name}/{}: expected {:?}, observed {}", c.check, c.expected, c.observed);
        }
        assert!(b.pass);
    }
}

#[test]
fn exported_cases_load_back() {
    for name in ["roshambo", "primality", "primality-randomized", "frpd", "revelation"] {
        let case = build_case(name, &BTreeMap::new()).unwrap();
        let loaded = parse_game(&case.export().unwrap(), None).unwrap();
        assert_eq!(loaded.game.utilities, case.game.utilities, "{name}");
        assert_eq!(loaded.game.types, case.game.types, "{name}");
        assert_eq!(loaded.profile("main").unwrap().labels(), case.profile.labels(), "{name}");
    }
}

// (TfT, TfT) holds exactly when α ≥ 2δ^N.
#[test]
fn frpd_verdict_tracks_the_last_round_gain() {
    let d = q(9, 10);
    let threshold = (0..10).fold(q(2, 1), |acc, _| acc * d.clone());
    for alpha in ["1/2", "697/1000", "6973568802/10000000000", "7/10", "1"] {
        let b = run_case("frpd", &params(&[("alpha", alpha)])).unwrap();
        let a: Rational = machgame::rational::parse_rational(alpha).unwrap();
        let c = b.check("tit_for_tat_is_equilibrium").unwrap();
        assert_eq!(c.observed, a >= threshold, "alpha {alpha}");
        assert!(b.pass, "alpha {alpha}");
    }
}

#[test]
fn roshambo_cost_regimes() {
    for (d, r) in [("1", "2"), ("1", "1"), ("0", "1"), ("1/2", "3")] {
        let b = run_case("roshambo", &params(&[("cost_det", d), ("cost_rand", r)])).unwrap();
        assert!(b.pass, "costs ({d}, {r})");
    }
}

#[test]
fn revelation_scales_with_n_and_k() {
    for (n, k) in [("4", "1"), ("6", "2")] {
        let b = run_case("revelation", &params(&[("n", n), ("k", k)])).unwrap();
        assert!(b.pass, "(n, k) = ({n}, {k})");
    }
}

#[test]
fn bad_parameters_are_rejected() {
    assert!(matches!(run_case("frpd", &params(&[("N", "2")])), Err(CaseError::Parameter { .. })));
    assert!(matches!(run_case("frpd", &params(&[("delta", "1")])), Err(CaseError::Parameter { .. })));
    assert!(matches!(run_case("revelation", &params(&[("n", "3"), ("k", "2")])), Err(CaseError::Parameter { .. })));
    assert!(matches!(run_case("roshambo", &params(&[("speed", "1")])), Err(CaseError::Parameter { .. })));
    assert!(matches!(run_case("go", &BTreeMap::new()), Err(CaseError::UnknownCase(_))));
}
