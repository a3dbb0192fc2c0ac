use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::instr::{char_of, symbol_of, ArithOp, CmpOp, Delivered, Instr, Reg, Sender, SYM_END};
use super::program::MachineProgram;

/// Hard limits for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RunBudget {
    pub max_steps: u64,
    pub max_output_bits: u64,
    pub max_rand_bits: u64,
}

impl Default for RunBudget {
    fn default() -> Self {
        RunBudget { max_steps: 10_000, max_output_bits: 256, max_rand_bits: 32 }
    }
}

impl RunBudget {
    pub fn new(max_steps: u64, max_output_bits: u64, max_rand_bits: u64) -> Result<Self, RunError> {
        if max_steps == 0 || max_output_bits == 0 || max_rand_bits == 0 {
            return Err(RunError::InvalidBudget);
        }
        Ok(RunBudget { max_steps, max_output_bits, max_rand_bits })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetKind {
    Steps,
    RandBits,
    /// The run asked for a random bit past the end of the supplied tape.
    Tape,
    Output,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunError {
    #[error("budget exceeded ({kind:?}) after {} steps", .meter.steps)]
    BudgetExceeded { kind: BudgetKind, meter: Box<RunMeter> },
    #[error("instruction {pc} needs a message environment")]
    PortFault { pc: usize },
    #[error("arithmetic fault at instruction {pc}")]
    ArithmeticFault { pc: usize },
    #[error("instruction {pc} produced an unrepresentable symbol {value}")]
    BadSymbol { pc: usize, value: i64 },
    #[error("instruction {pc} selects I/O context {index}, only {count} available")]
    BadContext { pc: usize, index: u16, count: usize },
    #[error("instruction {pc} jumps to {target}, outside the program")]
    BadJump { pc: usize, target: i64 },
    #[error("tape contains a character other than 0/1")]
    BadTape,
    #[error("input contains a character outside 0-9 ; |")]
    BadInput,
    #[error("all budget bounds must be positive")]
    InvalidBudget,
}

impl RunError {
    pub fn is_tape_exhausted(&self) -> bool {
        matches!(self, RunError::BudgetExceeded { kind: BudgetKind::Tape, .. })
    }
}

/// What a run consumed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RunMeter {
    pub steps: u64,
    pub program_size: u64,
    pub rand_bits: u64,
    pub registers_touched: u64,
    pub halted: bool,
    pub budget_exceeded: bool,
    /// Bits of state carried from one stage to the next (0 = stateless).
    pub carried_state_bits: u64,
    /// Symbols sent to mediators.
    pub bits_sent: u64,
    /// Stages the machine took part in.
    pub stages: u32,
    /// Set when the run entered an embedded component via `ENTER`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entered: Option<EnteredComponent>,
}

/// Meter readings at the moment of `ENTER`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnteredComponent {
    pub component: u16,
    pub label: String,
    pub size: u64,
    pub steps_before: u64,
    pub rand_before: u64,
    pub sent_before: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    In,
    Out,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MessageRecord {
    pub stage: u32,
    pub direction: Direction,
    /// Sender for incoming messages; `None` on outgoing ones.
    pub peer: Option<Sender>,
    pub body: String,
}

/// The parts of type, message history and random tape a run actually read.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct View {
    pub type_prefix: String,
    /// The run observed the end of its type.
    pub type_exhausted: bool,
    pub message_history: Vec<MessageRecord>,
    pub random_prefix: String,
}

/// Parses a tape such as `"11 01"`; spaces and underscores are ignored.
pub fn parse_tape(s: &str) -> Result<Vec<bool>, RunError> {
    s.chars()
        .filter(|c| !c.is_whitespace() && *c != '_')
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(RunError::BadTape),
        })
        .collect()
}

pub fn tape_to_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

#[derive(Debug, Clone)]
struct Context {
    input: Vec<i64>,
    cursor: usize,
    exhausted: bool,
    outbox: String,
    inbox: VecDeque<Delivered>,
    current: Vec<i64>,
    current_cursor: usize,
    output: String,
}

impl Context {
    fn new(input: &str) -> Result<Self, RunError> {
        let input = input.chars().map(|c| symbol_of(c).ok_or(RunError::BadInput)).collect::<Result<_, _>>()?;
        Ok(Context {
            input,
            cursor: 0,
            exhausted: false,
            outbox: String::new(),
            inbox: VecDeque::new(),
            current: Vec::new(),
            current_cursor: 0,
            output: String::new(),
        })
    }
}

/// Why [`Machine::resume`] returned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Yield {
    Halted,
    /// The machine ended its stage with one message per context.
    Sent(Vec<String>),
}

/// Final state of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunResult {
    pub outputs: Vec<String>,
    pub view: View,
    pub meter: RunMeter,
}

impl RunResult {
    pub fn output(&self) -> &str {
        &self.outputs[0]
    }
}

/// A resumable execution of one program.
#[derive(Debug, Clone)]
pub struct Machine<'a> {
    program: &'a MachineProgram,
    budget: RunBudget,
    tape: &'a [bool],
    tape_cursor: usize,
    pc: usize,
    regs: Vec<i64>,
    written: Vec<bool>,
    write_stage: Vec<u32>,
    contexts: Vec<Context>,
    active: usize,
    has_ports: bool,
    stage: u32,
    resume_points: BTreeSet<usize>,
    carried: BTreeMap<Reg, u64>,
    history: Vec<MessageRecord>,
    meter: RunMeter,
    halted: bool,
}

fn bit_width(v: i64) -> u64 {
    let mag = v.unsigned_abs();
    let w = 64 - mag.leading_zeros() as u64;
    w.max(1) + u64::from(v < 0)
}

fn ceil_log2(n: usize) -> u64 {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as u64
    }
}

impl<'a> Machine<'a> {
    /// `inputs` holds one type per I/O context; plain strategies use one.
    pub fn new(
        program: &'a MachineProgram,
        inputs: &[&str],
        tape: &'a [bool],
        budget: RunBudget,
        has_ports: bool,
    ) -> Result<Self, RunError> {
        let contexts = inputs.iter().map(|s| Context::new(s)).collect::<Result<Vec<_>, _>>()?;
        let n = program.registers as usize;
        Ok(Machine {
            program,
            budget,
            tape,
            tape_cursor: 0,
            pc: 0,
            regs: vec![0; n],
            written: vec![false; n],
            write_stage: vec![0; n],
            contexts,
            active: 0,
            has_ports,
            stage: 0,
            resume_points: BTreeSet::new(),
            carried: BTreeMap::new(),
            history: Vec::new(),
            meter: RunMeter { program_size: program.size(), ..Default::default() },
            halted: false,
        })
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    pub fn stage(&self) -> u32 {
        self.stage
    }

    pub fn context_count(&self) -> usize {
        self.contexts.len()
    }

    /// Places a message in a context's inbox; readable from the next `RECV`.
    pub fn deliver(&mut self, ctx: usize, msg: Delivered) {
        self.contexts[ctx].inbox.push_back(msg);
    }

    fn exceeded(&self, kind: BudgetKind) -> RunError {
        let mut meter = self.snapshot_meter();
        meter.budget_exceeded = true;
        meter.halted = false;
        RunError::BudgetExceeded { kind, meter: Box::new(meter) }
    }

    fn snapshot_meter(&self) -> RunMeter {
        let mut m = self.meter.clone();
        m.registers_touched = self.written.iter().filter(|w| **w).count() as u64;
        m.carried_state_bits =
            ceil_log2(self.resume_points.len()) + self.carried.values().sum::<u64>();
        m.stages = self.stage;
        m.halted = self.halted;
        m
    }

    fn read(&mut self, r: Reg) -> i64 {
        let i = r as usize;
        let v = self.regs[i];
        if self.written[i] && self.write_stage[i] < self.stage {
            let w = self.carried.entry(r).or_insert(0);
            *w = (*w).max(bit_width(v));
        }
        v
    }

    fn write(&mut self, r: Reg, v: i64) {
        let i = r as usize;
        self.regs[i] = v;
        self.written[i] = true;
        self.write_stage[i] = self.stage;
    }

    fn emit_char(&mut self, c: char) -> Result<(), RunError> {
        let ctx = &mut self.contexts[self.active];
        if ctx.output.len() as u64 >= self.budget.max_output_bits {
            return Err(self.exceeded(BudgetKind::Output));
        }
        ctx.output.push(c);
        Ok(())
    }

    /// Runs until the program halts or ends a stage with `SEND`.
    pub fn resume(&mut self) -> Result<Yield, RunError> {
        if self.halted {
            return Ok(Yield::Halted);
        }
        let len = self.program.instructions.len();
        loop {
            let pc = self.pc;
            if pc >= len {
                self.halted = true;
                return Ok(Yield::Halted);
            }
            if self.meter.steps >= self.budget.max_steps {
                return Err(self.exceeded(BudgetKind::Steps));
            }
            self.meter.steps += 1;
            let ins = &self.program.instructions[pc];
            let mut next = pc + 1;
            match ins {
                Instr::Halt => {
                    self.halted = true;
                    return Ok(Yield::Halted);
                }
                Instr::Load { dst, imm } => self.write(*dst, *imm),
                Instr::Mov { dst, src } => {
                    let v = self.read(*src);
                    self.write(*dst, v);
                }
                Instr::Arith { op, dst, a, b } => {
                    let (x, y) = (self.read(*a), self.read(*b));
                    let v = match op {
                        ArithOp::Add => x.checked_add(y),
                        ArithOp::Sub => x.checked_sub(y),
                        ArithOp::Mul => x.checked_mul(y),
                        ArithOp::Div => x.checked_div_euclid(y),
                        ArithOp::Mod => x.checked_rem_euclid(y),
                    }
                    .ok_or(RunError::ArithmeticFault { pc })?;
                    self.write(*dst, v);
                }
                Instr::AddI { dst, src, imm } => {
                    let v = self.read(*src).checked_add(*imm).ok_or(RunError::ArithmeticFault { pc })?;
                    self.write(*dst, v);
                }
                Instr::Cmp { op, dst, a, b } => {
                    let (x, y) = (self.read(*a), self.read(*b));
                    let v = match op {
                        CmpOp::Eq => x == y,
                        CmpOp::Lt => x < y,
                    };
                    self.write(*dst, v as i64);
                }
                Instr::CmpI { op, dst, src, imm } => {
                    let x = self.read(*src);
                    let v = match op {
                        CmpOp::Eq => x == *imm,
                        CmpOp::Lt => x < *imm,
                    };
                    self.write(*dst, v as i64);
                }
                Instr::Jmp { target } => next = *target,
                Instr::Jz { cond, target } => {
                    if self.read(*cond) == 0 {
                        next = *target;
                    }
                }
                Instr::Jnz { cond, target } => {
                    if self.read(*cond) != 0 {
                        next = *target;
                    }
                }
                Instr::JmpR { src } => {
                    let t = self.read(*src);
                    if t < 0 || t as usize > len {
                        return Err(RunError::BadJump { pc, target: t });
                    }
                    next = t as usize;
                }
                Instr::ReadType { dst } => {
                    let ctx = &mut self.contexts[self.active];
                    let sym = match ctx.input.get(ctx.cursor) {
                        Some(&s) => {
                            ctx.cursor += 1;
                            s
                        }
                        None => {
                            ctx.exhausted = true;
                            SYM_END
                        }
                    };
                    self.write(*dst, sym);
                }
                Instr::ReadRand { dst } => {
                    if self.meter.rand_bits >= self.budget.max_rand_bits {
                        return Err(self.exceeded(BudgetKind::RandBits));
                    }
                    let Some(&bit) = self.tape.get(self.tape_cursor) else {
                        return Err(self.exceeded(BudgetKind::Tape));
                    };
                    self.tape_cursor += 1;
                    self.meter.rand_bits += 1;
                    self.write(*dst, bit as i64);
                }
                Instr::Put { src } => {
                    if !self.has_ports {
                        return Err(RunError::PortFault { pc });
                    }
                    let v = self.read(*src);
                    let c = char_of(v).ok_or(RunError::BadSymbol { pc, value: v })?;
                    self.contexts[self.active].outbox.push(c);
                }
                Instr::PutS { lit } => {
                    if !self.has_ports {
                        return Err(RunError::PortFault { pc });
                    }
                    self.contexts[self.active].outbox.push_str(lit);
                }
                Instr::Send => {
                    if !self.has_ports {
                        return Err(RunError::PortFault { pc });
                    }
                    let msgs: Vec<String> =
                        self.contexts.iter_mut().map(|c| std::mem::take(&mut c.outbox)).collect();
                    for body in &msgs {
                        self.meter.bits_sent += body.chars().count() as u64;
                        if !body.is_empty() {
                            self.history.push(MessageRecord {
                                stage: self.stage,
                                direction: Direction::Out,
                                peer: None,
                                body: body.clone(),
                            });
                        }
                    }
                    self.resume_points.insert(self.program.canonical_pc(pc + 1));
                    self.stage += 1;
                    self.pc = pc + 1;
                    return Ok(Yield::Sent(msgs));
                }
                Instr::Recv { dst } => {
                    if !self.has_ports {
                        return Err(RunError::PortFault { pc });
                    }
                    let stage = self.stage;
                    let ctx = &mut self.contexts[self.active];
                    let tag = match ctx.inbox.pop_front() {
                        Some(msg) => {
                            ctx.current = msg.body.chars().filter_map(symbol_of).collect();
                            ctx.current_cursor = 0;
                            self.history.push(MessageRecord {
                                stage,
                                direction: Direction::In,
                                peer: Some(msg.from),
                                body: msg.body,
                            });
                            msg.from.tag()
                        }
                        None => {
                            ctx.current.clear();
                            ctx.current_cursor = 0;
                            -1
                        }
                    };
                    self.write(*dst, tag);
                }
                Instr::GetM { dst } => {
                    if !self.has_ports {
                        return Err(RunError::PortFault { pc });
                    }
                    let ctx = &mut self.contexts[self.active];
                    let sym = match ctx.current.get(ctx.current_cursor) {
                        Some(&s) => {
                            ctx.current_cursor += 1;
                            s
                        }
                        None => SYM_END,
                    };
                    self.write(*dst, sym);
                }
                Instr::Emit { lit } => {
                    for c in lit.chars() {
                        self.emit_char(c)?;
                    }
                }
                Instr::EmitR { src } => {
                    let v = self.read(*src);
                    let c = char_of(v).ok_or(RunError::BadSymbol { pc, value: v })?;
                    self.emit_char(c)?;
                }
                Instr::Ctx { index } => {
                    if *index as usize >= self.contexts.len() {
                        return Err(RunError::BadContext { pc, index: *index, count: self.contexts.len() });
                    }
                    self.active = *index as usize;
                }
                Instr::Enter { component } => {
                    let c = &self.program.components[*component as usize];
                    if self.meter.entered.is_none() {
                        self.meter.entered = Some(EnteredComponent {
                            component: *component,
                            label: c.label.clone(),
                            size: c.size,
                            steps_before: self.meter.steps,
                            rand_before: self.meter.rand_bits,
                            sent_before: self.meter.bits_sent,
                        });
                    }
                }
            }
            self.pc = next;
        }
    }

    /// Consumes the machine and reports outputs, view and meter.
    pub fn finish(self) -> RunResult {
        let meter = self.snapshot_meter();
        let type_prefix = self
            .contexts
            .iter()
            .map(|c| c.input[..c.cursor].iter().filter_map(|&s| char_of(s)).collect::<String>())
            .collect::<Vec<_>>()
            .join("|");
        let view = View {
            type_prefix,
            type_exhausted: self.contexts.iter().any(|c| c.exhausted),
            message_history: self.history,
            random_prefix: tape_to_string(&self.tape[..self.tape_cursor]),
        };
        RunResult {
            outputs: self.contexts.into_iter().map(|c| c.output).collect(),
            view,
            meter,
        }
    }
}

/// Message environment for single-machine runs.
pub trait MessageEnv {
    /// Called when the machine sends at the end of `stage`. Returns the
    /// deliveries readable in the next stage, or `None` to stop the run.
    fn exchange(&mut self, stage: u32, outgoing: &str) -> Option<Vec<Delivered>>;
}

/// Replays a fixed list of per-stage deliveries and records what was sent.
#[derive(Debug, Clone, Default)]
pub struct ScriptedEnv {
    pub replies: Vec<Vec<Delivered>>,
    pub sent: Vec<String>,
}

impl MessageEnv for ScriptedEnv {
    fn exchange(&mut self, stage: u32, outgoing: &str) -> Option<Vec<Delivered>> {
        self.sent.push(outgoing.to_string());
        self.replies.get(stage as usize).cloned()
    }
}

/// Runs one program to completion on a type and a random tape.
///
/// Reading past the end of `tape` is a budget violation; callers that
/// enumerate tapes extend the tape and retry.
pub fn run_machine(
    program: &MachineProgram,
    type_input: &str,
    tape: &[bool],
    ports: Option<&mut dyn MessageEnv>,
    budget: &RunBudget,
) -> Result<RunResult, RunError> {
    let has_ports = ports.is_some();
    let mut m = Machine::new(program, &[type_input], tape, *budget, has_ports)?;
    let mut ports = ports;
    loop {
        match m.resume()? {
            Yield::Halted => break,
            Yield::Sent(msgs) => {
                let env = ports.as_deref_mut().expect("ports checked at SEND");
                match env.exchange(m.stage() - 1, &msgs[0]) {
                    Some(deliveries) => {
                        for d in deliveries {
                            m.deliver(0, d);
                        }
                    }
                    None => break,
                }
            }
        }
    }
    Ok(m.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::program::canonical_bot;

    fn constant(out: &str) -> MachineProgram {
        MachineProgram::new(format!("const-{out}"), 0, vec![Instr::Emit { lit: out.into() }, Instr::Halt])
    }

    #[test]
    fn bot_does_nothing() {
        let r = run_machine(&canonical_bot(), "1011", &parse_tape("0101").unwrap(), None, &RunBudget::default()).unwrap();
        assert_eq!(r.output(), "");
        assert_eq!(r.view, View::default());
        assert_eq!(r.meter.steps, 0);
        assert_eq!(r.meter.rand_bits, 0);
        assert_eq!(r.meter.registers_touched, 0);
        assert!(r.meter.halted);
    }

    #[test]
    fn constant_program_takes_two_steps() {
        let r = run_machine(&constant("2"), "0110", &[], None, &RunBudget::default()).unwrap();
        assert_eq!(r.output(), "2");
        assert_eq!(r.meter.steps, 2);
        assert_eq!(r.meter.rand_bits, 0);
        assert_eq!(r.view.type_prefix, "");
    }

    #[test]
    fn step_budget_is_enforced() {
        let looping = MachineProgram::new("loop", 0, vec![Instr::Jmp { target: 0 }]);
        let b = RunBudget::new(50, 8, 8).unwrap();
        match run_machine(&looping, "", &[], None, &b) {
            Err(RunError::BudgetExceeded { kind: BudgetKind::Steps, meter }) => {
                assert!(meter.budget_exceeded);
                assert!(!meter.halted);
                assert_eq!(meter.steps, 50);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reading_past_the_tape_is_reported() {
        let p = MachineProgram::new("r", 1, vec![Instr::ReadRand { dst: 0 }, Instr::Halt]);
        let err = run_machine(&p, "", &[], None, &RunBudget::default()).unwrap_err();
        assert!(err.is_tape_exhausted());
    }

    #[test]
    fn recv_without_ports_faults() {
        let p = MachineProgram::new("r", 1, vec![Instr::Recv { dst: 0 }]);
        assert_eq!(
            run_machine(&p, "", &[], None, &RunBudget::default()).unwrap_err(),
            RunError::PortFault { pc: 0 }
        );
    }

    #[test]
    fn scripted_exchange_delivers_next_stage() {
        let p = crate::vm::dsl::parse_program(
            "label: echo\nregisters: 2\nPUTS \"01\"\nSEND\nRECV r0\nGETM r1\nEMITR r1\nHALT\n",
        )
        .unwrap();
        let mut env = ScriptedEnv {
            replies: vec![vec![Delivered { from: Sender::Mediator(0), body: "1".into() }]],
            sent: vec![],
        };
        let r = run_machine(&p, "", &[], Some(&mut env), &RunBudget::default()).unwrap();
        assert_eq!(env.sent, vec!["01".to_string()]);
        assert_eq!(r.output(), "1");
        assert_eq!(r.view.message_history.len(), 2);
        assert_eq!(r.view.message_history[1].stage, 1);
        assert_eq!(r.meter.bits_sent, 2);
    }

    #[test]
    fn bit_widths() {
        assert_eq!(bit_width(0), 1);
        assert_eq!(bit_width(1), 1);
        assert_eq!(bit_width(9), 4);
        assert_eq!(bit_width(-1), 2);
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
    }
}
