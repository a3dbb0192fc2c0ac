//! Mediators for synchronous three-phase games.
//!
//! Each stage: players compute and send (phase 1), the mediator reads what
//! arrived and answers (phase 2), answers become readable at the next stage
//! (phase 3 is the players' final output).

use serde::{Deserialize, Serialize};

use crate::expr::{Expr, Value};
use crate::vm::instr::MEDIATOR_TAG_BASE;
use crate::vm::{Delivered, MachineProgram, ProgramBuilder, Sender};
use crate::vm::{instr::CmpOp, Instr};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functionality {
    /// Bitwise XOR of all inputs, returned to everyone.
    Xor,
    /// Each player gets its own input back.
    Identity,
    /// One shared random bit for everyone.
    Coin,
    /// `outputs[i]` computes player i's reply from `x1..xm` and the random string `r`.
    Expr { outputs: Vec<Expr>, #[serde(default)] rand_bits: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MediatorKind {
    /// Forwards `body;j` to player j, tagged with the sender.
    Comm,
    /// Collects one input per player at the first stage and replies with f.
    Functionality { function: Functionality, input_length: usize },
    /// Compares the first `prefix_len` symbols of the two players' messages.
    Comparator { prefix_len: usize },
    /// Nature for a repeated game: records one move per player per round and
    /// relays the other players' moves as next round's signal.
    Repeated { rounds: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediatorSpec {
    #[serde(default)]
    pub id: u32,
    #[serde(flatten)]
    pub kind: MediatorKind,
    #[serde(default = "default_stage_limit")]
    pub stage_limit: u32,
}

fn default_stage_limit() -> u32 {
    16
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MediationError {
    #[error("stage limit {0} reached with players still running")]
    StageLimitExceeded(u32),
    #[error("functionality: {0}")]
    Functionality(String),
}

pub fn comm_mediator() -> MediatorSpec {
    MediatorSpec { id: 0, kind: MediatorKind::Comm, stage_limit: default_stage_limit() }
}

pub fn functionality_mediator(function: Functionality, input_length: usize) -> MediatorSpec {
    MediatorSpec { id: 0, kind: MediatorKind::Functionality { function, input_length }, stage_limit: default_stage_limit() }
}

impl MediatorSpec {
    pub fn with_id(mut self, id: u32) -> Self {
        self.id = id;
        self
    }

    pub fn tag(&self) -> i64 {
        Sender::Mediator(self.id).tag()
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            MediatorKind::Comm => "comm".into(),
            MediatorKind::Functionality { function, input_length } => {
                let f = match function {
                    Functionality::Xor => "xor".to_string(),
                    Functionality::Identity => "identity".to_string(),
                    Functionality::Coin => "coin".to_string(),
                    Functionality::Expr { outputs, .. } => {
                        outputs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ")
                    }
                };
                format!("functionality[{f}; n={input_length}]#{}", self.id)
            }
            MediatorKind::Comparator { prefix_len } => format!("comparator[{prefix_len}]#{}", self.id),
            MediatorKind::Repeated { rounds } => format!("repeated[{rounds}]#{}", self.id),
        }
    }
}

/// A participant's random tape, read front to back.
#[derive(Debug)]
pub(crate) struct TapeCursor<'a> {
    pub bits: &'a [bool],
    pub pos: usize,
}

impl TapeCursor<'_> {
    pub fn next(&mut self) -> Option<bool> {
        let b = self.bits.get(self.pos).copied();
        if b.is_some() {
            self.pos += 1;
        }
        b
    }
}

/// The mediator needs a random bit past the end of its tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct NeedBit;

/// Result of one mediator phase.
#[derive(Debug, Default)]
pub(crate) struct Phase2 {
    /// Messages readable by each player at the next stage.
    pub deliveries: Vec<Vec<Delivered>>,
    /// Record of what the mediator sent, per player.
    pub sent: Vec<Option<String>>,
}

/// Per-run state of a mediator.
#[derive(Debug)]
pub(crate) struct MediatorRun<'a> {
    spec: &'a MediatorSpec,
    players: usize,
    answered: bool,
    pub moves: Vec<String>,
}

fn normalize_input(msg: Option<&str>, n: usize) -> String {
    match msg {
        Some(s) if s.len() == n && s.chars().all(|c| c == '0' || c == '1') => s.to_string(),
        _ => "0".repeat(n),
    }
}

fn xor_all(inputs: &[String]) -> String {
    let n = inputs.first().map_or(0, |s| s.len());
    (0..n)
        .map(|k| {
            let ones = inputs.iter().filter(|s| s.as_bytes()[k] == b'1').count();
            if ones % 2 == 1 {
                '1'
            } else {
                '0'
            }
        })
        .collect()
}

impl<'a> MediatorRun<'a> {
    pub fn new(spec: &'a MediatorSpec, players: usize) -> Self {
        MediatorRun { spec, players, answered: false, moves: vec![String::new(); players] }
    }

    /// True once the mediator ends the game for everybody (repeated games).
    pub fn ends_game(&self, stages_done: u32) -> bool {
        matches!(self.spec.kind, MediatorKind::Repeated { rounds } if stages_done >= rounds)
    }

    /// Actions fixed by the mediator rather than by player output.
    pub fn recorded_actions(&self) -> Option<Vec<String>> {
        matches!(self.spec.kind, MediatorKind::Repeated { .. }).then(|| self.moves.clone())
    }

    pub fn step(
        &mut self,
        stage: u32,
        incoming: &[Option<String>],
        tape: &mut TapeCursor<'_>,
    ) -> Result<Result<Phase2, NeedBit>, MediationError> {
        let m = self.players;
        let mut out = Phase2 { deliveries: vec![Vec::new(); m], sent: vec![None; m] };
        let from = Sender::Mediator(self.spec.id);
        let reply = |out: &mut Phase2, i: usize, body: String| {
            out.sent[i] = Some(body.clone());
            out.deliveries[i].push(Delivered { from, body });
        };
        match &self.spec.kind {
            MediatorKind::Comm => {
                for (i, msg) in incoming.iter().enumerate() {
                    let Some(msg) = msg else { continue };
                    let Some((body, to)) = msg.rsplit_once(';') else { continue };
                    let Ok(j) = to.parse::<usize>() else { continue };
                    if j == 0 || j > m {
                        continue;
                    }
                    out.deliveries[j - 1].push(Delivered { from: Sender::Player(i + 1), body: body.to_string() });
                }
            }
            MediatorKind::Functionality { function, input_length } => {
                if self.answered {
                    return Ok(Ok(out));
                }
                let xs: Vec<String> = (0..m)
                    .map(|i| normalize_input(incoming.get(i).and_then(|s| s.as_deref()), *input_length))
                    .collect();
                let ys: Vec<String> = match function {
                    Functionality::Xor => vec![xor_all(&xs); m],
                    Functionality::Identity => xs.clone(),
                    Functionality::Coin => {
                        let Some(b) = tape.next() else { return Ok(Err(NeedBit)) };
                        vec![if b { "1" } else { "0" }.to_string(); m]
                    }
                    Functionality::Expr { outputs, rand_bits } => {
                        let mut r = String::new();
                        for _ in 0..*rand_bits {
                            match tape.next() {
                                Some(b) => r.push(if b { '1' } else { '0' }),
                                None => return Ok(Err(NeedBit)),
                            }
                        }
                        let env = |name: &str| -> Option<Value> {
                            if name == "r" {
                                return Some(Value::Str(r.clone()));
                            }
                            if name == "m" {
                                return Some(Value::Num(crate::scalar::int(m as i64)));
                            }
                            let k: usize = name.strip_prefix('x')?.parse().ok()?;
                            xs.get(k.checked_sub(1)?).map(|s| Value::Str(s.clone()))
                        };
                        let mut ys = Vec::with_capacity(m);
                        for i in 0..m {
                            let e = outputs.get(i).or(outputs.last()).ok_or_else(|| {
                                MediationError::Functionality("no output expressions".into())
                            })?;
                            match e.eval(&env) {
                                Ok(Value::Str(s)) => ys.push(s),
                                Ok(Value::Num(q)) => ys.push(crate::rational::format_rational_short(&q)),
                                Ok(Value::Bool(b)) => ys.push(if b { "1" } else { "0" }.into()),
                                Err(e) => return Err(MediationError::Functionality(e.to_string())),
                            }
                        }
                        ys
                    }
                };
                for (i, y) in ys.into_iter().enumerate() {
                    reply(&mut out, i, y);
                }
                self.answered = true;
            }
            MediatorKind::Comparator { prefix_len } => {
                if self.answered {
                    return Ok(Ok(out));
                }
                let prefixes: Vec<String> = (0..m)
                    .map(|i| {
                        incoming.get(i).and_then(|s| s.as_deref()).unwrap_or("").chars().take(*prefix_len).collect()
                    })
                    .collect();
                let same = prefixes.windows(2).all(|w| w[0] == w[1]);
                for i in 0..m {
                    reply(&mut out, i, if same { "1" } else { "0" }.into());
                }
                self.answered = true;
            }
            MediatorKind::Repeated { rounds } => {
                if stage >= *rounds {
                    return Ok(Ok(out));
                }
                let round: Vec<char> = (0..m)
                    .map(|i| match incoming.get(i).and_then(|s| s.as_deref()).and_then(|s| s.chars().next()) {
                        Some('1') => '1',
                        _ => '0',
                    })
                    .collect();
                for (i, c) in round.iter().enumerate() {
                    self.moves[i].push(*c);
                }
                for i in 0..m {
                    let signal: String = (0..m).filter(|j| *j != i).map(|j| round[j]).collect();
                    reply(&mut out, i, signal);
                }
            }
        }
        Ok(Ok(out))
    }
}

/// A two-player repeated game with nature as mediator: `rounds` rounds,
/// each player's payoff is `Σ δ^m stage[mine][theirs]` minus the charge
/// selected by its complexity. Per-round strategies are charged
/// `state_charge{base: 1, penalty}`, so stateless automata cost 1.
pub fn repeated_game_harness(
    name: &str,
    stage: [[crate::Rational; 2]; 2],
    rounds: u32,
    delta: crate::Rational,
    charges: Vec<crate::game::Charge>,
    state_penalty: u64,
) -> (crate::game::GameSpec, MediatorSpec) {
    use crate::complexity::ComplexityFnSpec;
    use crate::game::{GameSpec, RepeatedPayoff, TypeProfile, Utility};
    let mediator = MediatorSpec { id: 0, kind: MediatorKind::Repeated { rounds }, stage_limit: rounds.max(1) };
    let payoff = |player| {
        Utility::Repeated(RepeatedPayoff { player, stage: stage.clone(), delta: delta.clone(), charges: charges.clone() })
    };
    let game = GameSpec {
        name: name.to_string(),
        players: 2,
        input_length: 0,
        types: vec![TypeProfile::new(vec![String::new(), String::new()], crate::scalar::int(1))],
        machines: Vec::new(),
        complexity: vec![ComplexityFnSpec::StateCharge { base: 1, penalty: state_penalty }; 2],
        utilities: vec![payoff(1), payoff(2)],
        coalitions: Vec::new(),
        normalized: false,
        monotone: true,
        budget: crate::vm::RunBudget { max_steps: 64 * rounds.max(1) as u64, ..Default::default() },
        limits: Default::default(),
        mediator: Some(mediator.clone()),
    };
    (game, mediator)
}

/// Λ^F: sends the input part `x` of its type `x;z` to mediator `mediator_id`
/// and outputs the first reply signed by that mediator.
pub fn lambda_machine(mediator_id: u32) -> MachineProgram {
    lambda_variant(mediator_id, format!("lambda-f{mediator_id}"), false)
}

/// Λ^F whose output has its first bit flipped.
pub fn flipped_lambda_machine(mediator_id: u32) -> MachineProgram {
    lambda_variant(mediator_id, format!("lambda-f{mediator_id}-flip"), true)
}

fn lambda_variant(mediator_id: u32, label: String, flip_first: bool) -> MachineProgram {
    let tag = MEDIATOR_TAG_BASE + mediator_id as i64;
    let mut b = ProgramBuilder::new(label, 3);
    b.mark("read")
        .push(Instr::ReadType { dst: 0 })
        .push(Instr::CmpI { op: CmpOp::Lt, dst: 1, src: 0, imm: 0 })
        .jnz(1, "send")
        .push(Instr::Put { src: 0 })
        .jmp("read")
        .mark("send")
        .push(Instr::Send)
        .mark("wait")
        .push(Instr::Recv { dst: 0 })
        .push(Instr::CmpI { op: CmpOp::Lt, dst: 1, src: 0, imm: 0 })
        .jnz(1, "done")
        .push(Instr::CmpI { op: CmpOp::Eq, dst: 1, src: 0, imm: tag })
        .jz(1, "wait");
    if flip_first {
        b.push(Instr::GetM { dst: 0 })
            .push(Instr::CmpI { op: CmpOp::Lt, dst: 1, src: 0, imm: 0 })
            .jnz(1, "done")
            .push(Instr::Load { dst: 2, imm: 1 })
            .push(Instr::Arith { op: crate::vm::instr::ArithOp::Sub, dst: 0, a: 2, b: 0 })
            .push(Instr::EmitR { src: 0 });
    }
    b.mark("out")
        .push(Instr::GetM { dst: 0 })
        .push(Instr::CmpI { op: CmpOp::Lt, dst: 1, src: 0, imm: 0 })
        .jnz(1, "done")
        .push(Instr::EmitR { src: 0 })
        .jmp("out")
        .mark("done")
        .push(Instr::Halt);
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(spec: &MediatorSpec, m: usize, incoming: &[Option<&str>], tape: &[bool]) -> Phase2 {
        let mut run = MediatorRun::new(spec, m);
        let inc: Vec<Option<String>> = incoming.iter().map(|s| s.map(str::to_string)).collect();
        let mut cur = TapeCursor { bits: tape, pos: 0 };
        run.step(0, &inc, &mut cur).unwrap().unwrap()
    }

    #[test]
    fn comm_forwards_tagged_and_drops_untagged() {
        let c = comm_mediator();
        let out = step(&c, 2, &[Some("11;2"), Some("101")], &[]);
        assert_eq!(out.deliveries[1], vec![Delivered { from: Sender::Player(1), body: "11".into() }]);
        assert!(out.deliveries[0].is_empty());
    }

    #[test]
    fn comm_orders_same_stage_messages_by_sender() {
        let c = comm_mediator();
        let out = step(&c, 3, &[Some("0;3"), Some("1;3"), None], &[]);
        let from: Vec<Sender> = out.deliveries[2].iter().map(|d| d.from).collect();
        assert_eq!(from, vec![Sender::Player(1), Sender::Player(2)]);
    }

    #[test]
    fn functionality_substitutes_zero_input() {
        let f = functionality_mediator(Functionality::Xor, 1);
        let out = step(&f, 2, &[None, Some("1")], &[]);
        assert_eq!(out.sent, vec![Some("1".to_string()), Some("1".to_string())]);
        let out = step(&f, 2, &[Some("1"), Some("11")], &[]);
        assert_eq!(out.sent[0].as_deref(), Some("1"));
    }

    #[test]
    fn coin_needs_a_bit() {
        let f = functionality_mediator(Functionality::Coin, 1);
        let mut run = MediatorRun::new(&f, 2);
        let mut cur = TapeCursor { bits: &[], pos: 0 };
        assert_eq!(run.step(0, &[None, None], &mut cur).unwrap().unwrap_err(), NeedBit);
    }

    #[test]
    fn comparator_answers_equal_prefixes() {
        let c = MediatorSpec { id: 0, kind: MediatorKind::Comparator { prefix_len: 3 }, stage_limit: 4 };
        assert_eq!(step(&c, 2, &[Some("101"), Some("101")], &[]).sent[0].as_deref(), Some("1"));
        assert_eq!(step(&c, 2, &[Some("101"), Some("100")], &[]).sent[1].as_deref(), Some("0"));
    }

    #[test]
    fn spec_round_trips_through_toml() {
        let spec = functionality_mediator(Functionality::Xor, 2).with_id(3);
        let s = toml::to_string(&spec).unwrap();
        let back: MediatorSpec = toml::from_str(&s).unwrap();
        assert_eq!(back, spec);
    }
}
