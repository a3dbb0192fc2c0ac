#![allow(dead_code)]

pub mod properties;

use machgame::complexity::ComplexityFnSpec;
use machgame::expr::Expr;
use machgame::game::{GameSpec, StrategyProfile, TableRow, TypeProfile, Utility};
use machgame::vm::{ArithOp, CmpOp, Instr, MachineProgram, RunBudget};
use machgame::Rational;
use num_bigint::BigInt;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

pub const REGS: u16 = 3;

pub fn q(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn runner(cases: u32, seed: u8) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]))
}

#[derive(Debug, Clone)]
enum Op {
    Load(u16, i64),
    AddI(u16, u16, i64),
    Arith(u8, u16, u16, u16),
    CmpI(bool, u16, u16, i64),
    Jump(u8, u16, usize),
    ReadType(u16),
    ReadRand(u16),
    Emit(u8),
    EmitR(u16),
    Halt,
}

fn op() -> impl Strategy<Value = Op> {
    let r = 0..REGS;
    prop_oneof![
        3 => (r.clone(), -3i64..10).prop_map(|(d, i)| Op::Load(d, i)),
        3 => (r.clone(), r.clone(), -2i64..4).prop_map(|(d, s, i)| Op::AddI(d, s, i)),
        2 => (0u8..5, r.clone(), r.clone(), r.clone()).prop_map(|(o, d, a, b)| Op::Arith(o, d, a, b)),
        2 => (any::<bool>(), r.clone(), r.clone(), -2i64..4).prop_map(|(e, d, s, i)| Op::CmpI(e, d, s, i)),
        3 => (0u8..3, r.clone(), any::<usize>()).prop_map(|(k, c, t)| Op::Jump(k, c, t)),
        3 => r.clone().prop_map(Op::ReadType),
        2 => r.clone().prop_map(Op::ReadRand),
        3 => (0u8..3).prop_map(Op::Emit),
        2 => r.prop_map(Op::EmitR),
        1 => Just(Op::Halt),
    ]
}

fn assemble(label: String, ops: Vec<Op>, forward_only: bool, max_rand: usize) -> MachineProgram {
    let len = ops.len();
    let mut rands = 0;
    let mut out = Vec::with_capacity(len);
    for (pc, o) in ops.into_iter().enumerate() {
        let ins = match o {
            Op::Load(dst, imm) => Instr::Load { dst, imm },
            Op::AddI(dst, src, imm) => Instr::AddI { dst, src, imm },
            Op::Arith(k, dst, a, b) => {
                let op = [ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div, ArithOp::Mod][k as usize];
                Instr::Arith { op, dst, a, b }
            }
            Op::CmpI(eq, dst, src, imm) => Instr::CmpI { op: if eq { CmpOp::Eq } else { CmpOp::Lt }, dst, src, imm },
            Op::Jump(k, cond, t) => {
                let target = if forward_only { pc + 1 + t % (len - pc) } else { t % (len + 1) };
                match k {
                    0 => Instr::Jmp { target },
                    1 => Instr::Jz { cond, target },
                    _ => Instr::Jnz { cond, target },
                }
            }
            Op::ReadType(dst) => Instr::ReadType { dst },
            Op::ReadRand(dst) if rands < max_rand => {
                rands += 1;
                Instr::ReadRand { dst }
            }
            Op::ReadRand(dst) => Instr::Load { dst, imm: 1 },
            Op::Emit(d) => Instr::Emit { lit: d.to_string() },
            Op::EmitR(src) => Instr::EmitR { src },
            Op::Halt => Instr::Halt,
        };
        out.push(ins);
    }
    MachineProgram::new(label, REGS, out)
}

/// Random non-⊥ programs; forward-only ones always halt within their length.
pub fn program(forward_only: bool, max_rand: usize) -> impl Strategy<Value = MachineProgram> {
    (prop::collection::vec(op(), 1..14), 0u32..1000)
        .prop_map(move |(ops, tag)| assemble(format!("gen-{tag}"), ops, forward_only, max_rand))
}

pub fn type_string() -> impl Strategy<Value = String> {
    prop::collection::vec(prop_oneof![4 => Just('0'), 4 => Just('1'), 1 => Just(';')], 0..8)
        .prop_map(|cs| cs.into_iter().collect())
}

pub fn tape() -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), 0..12)
}

pub fn small_budget() -> RunBudget {
    RunBudget { max_steps: 400, max_output_bits: 64, max_rand_bits: 16 }
}

fn padded(label: String, body: Vec<Instr>, pad: usize, regs: u16) -> MachineProgram {
    let mut ins = vec![Instr::AddI { dst: 0, src: 0, imm: 0 }; pad];
    ins.extend(body);
    ins.push(Instr::Halt);
    MachineProgram::new(label, regs.max(if pad > 0 { 1 } else { 0 }), ins)
}

/// Strategy machines for generated games: constants, a type echo and a
/// coin, each padded with a random number of idle steps.
pub fn game_machine(k: usize) -> impl Strategy<Value = MachineProgram> {
    (0u8..5, 0usize..4).prop_map(move |(kind, pad)| match kind {
        0..=2 => padded(format!("m{k}-const{kind}-p{pad}"), vec![Instr::Emit { lit: kind.to_string() }], pad, 0),
        3 => padded(format!("m{k}-echo-p{pad}"), vec![Instr::ReadType { dst: 0 }, Instr::EmitR { src: 0 }], pad, 1),
        _ => padded(format!("m{k}-coin-p{pad}"), vec![Instr::ReadRand { dst: 0 }, Instr::EmitR { src: 0 }], pad, 1),
    })
}

/// A generated two-player game with its machine pool and a profile over it.
#[derive(Debug, Clone)]
pub struct GeneratedGame {
    pub game: GameSpec,
    pub pool: Vec<MachineProgram>,
    pub profile: StrategyProfile,
}

fn table(values: Vec<i64>, weight: (i64, i64), player: usize) -> Utility {
    let mut rows = Vec::new();
    for a in 0..3 {
        for b in 0..3 {
            rows.push(TableRow { types: None, actions: vec![a.to_string(), b.to_string()], value: q(values[a * 3 + b], 1) });
        }
    }
    let charge = Expr::parse(&format!("{}/{} * c{}", weight.0, weight.1, player + 1)).expect("well formed");
    Utility::Table { rows, default: Some(q(-6, 1)), charge: Some(charge) }
}

/// Games whose utilities are payoff tables minus a nonnegative multiple of
/// the player's own step count, so they are monotone.
pub fn generated_game() -> impl Strategy<Value = GeneratedGame> {
    let types = prop::collection::vec((0u8..2, 0u8..2, 1i64..5), 1..4);
    let pool = (0usize..6).prop_flat_map(|extra| {
        (0..3 + extra).map(game_machine).collect::<Vec<_>>()
    });
    let payoffs = prop::collection::vec(-5i64..6, 18);
    let weights = prop::collection::vec(prop_oneof![Just((0, 1)), Just((1, 4)), Just((1, 2)), Just((1, 1))], 2);
    (types, pool, payoffs, weights, any::<(usize, usize)>()).prop_map(|(types, pool, payoffs, weights, (x, y))| {
        let mut seen = Vec::new();
        let mut tps: Vec<(Vec<String>, i64)> = Vec::new();
        for (a, b, w) in types {
            let t = vec![a.to_string(), b.to_string()];
            if !seen.contains(&t) {
                seen.push(t.clone());
                tps.push((t, w));
            }
        }
        let total: i64 = tps.iter().map(|(_, w)| w).sum();
        let mut pool_unique: Vec<MachineProgram> = Vec::new();
        for m in pool {
            if !pool_unique.iter().any(|p| p.label == m.label) {
                pool_unique.push(m);
            }
        }
        let game = GameSpec {
            name: "generated".into(),
            players: 2,
            input_length: 1,
            types: tps.into_iter().map(|(t, w)| TypeProfile::new(t, q(w, total))).collect(),
            machines: pool_unique.clone(),
            complexity: vec![ComplexityFnSpec::Steps; 2],
            utilities: vec![table(payoffs[..9].to_vec(), weights[0], 0), table(payoffs[9..].to_vec(), weights[1], 1)],
            coalitions: Vec::new(),
            normalized: false,
            monotone: true,
            budget: RunBudget::default(),
            limits: Default::default(),
            mediator: None,
        };
        let n = pool_unique.len();
        let profile = StrategyProfile::new(vec![pool_unique[x % n].clone(), pool_unique[y % n].clone()]);
        GeneratedGame { game, pool: pool_unique, profile }
    })
}
