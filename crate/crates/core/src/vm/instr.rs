use std::fmt;

use serde::{Deserialize, Serialize};

/// Register index.
pub type Reg = u16;

/// Symbol returned by `READT`/`GETM` once the input is exhausted.
pub const SYM_END: i64 = -1;
/// Symbol for the `;` separator inside types and messages.
pub const SYM_SEP: i64 = -2;
/// Symbol for the `|` separator.
pub const SYM_BAR: i64 = -3;

/// Base of the sender tags written by `RECV` for mediator-signed messages.
pub const MEDIATOR_TAG_BASE: i64 = 1000;

pub fn symbol_of(c: char) -> Option<i64> {
    match c {
        '0'..='9' => Some(c as i64 - '0' as i64),
        ';' => Some(SYM_SEP),
        '|' => Some(SYM_BAR),
        _ => None,
    }
}

pub fn char_of(sym: i64) -> Option<char> {
    match sym {
        0..=9 => Some((b'0' + sym as u8) as char),
        SYM_SEP => Some(';'),
        SYM_BAR => Some('|'),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Lt,
}

/// One instruction of the strategy machine.
///
/// Jump targets are absolute instruction indices; a target equal to the
/// program length halts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Instr {
    Halt,
    Load { dst: Reg, imm: i64 },
    Mov { dst: Reg, src: Reg },
    Arith { op: ArithOp, dst: Reg, a: Reg, b: Reg },
    AddI { dst: Reg, src: Reg, imm: i64 },
    Cmp { op: CmpOp, dst: Reg, a: Reg, b: Reg },
    CmpI { op: CmpOp, dst: Reg, src: Reg, imm: i64 },
    Jmp { target: usize },
    Jz { cond: Reg, target: usize },
    Jnz { cond: Reg, target: usize },
    /// Jump to the address held in a register.
    JmpR { src: Reg },
    /// Next symbol of the active context's type.
    ReadType { dst: Reg },
    /// Next random bit.
    ReadRand { dst: Reg },
    /// Append a symbol to the outgoing message.
    Put { src: Reg },
    PutS { lit: String },
    /// End the stage: hand the outgoing messages to the mediator.
    Send,
    /// Take the next delivered message; `dst` receives the sender tag or -1.
    Recv { dst: Reg },
    /// Next symbol of the current received message.
    GetM { dst: Reg },
    Emit { lit: String },
    EmitR { src: Reg },
    /// Switch the active I/O context (coalition controllers).
    Ctx { index: u16 },
    /// Mark entry into an embedded component machine.
    Enter { component: u16 },
}

impl Instr {
    pub fn mnemonic(&self) -> &'static str {
        match self {
            Instr::Halt => "HALT",
            Instr::Load { .. } => "LOAD",
            Instr::Mov { .. } => "MOV",
            Instr::Arith { op, .. } => match op {
                ArithOp::Add => "ADD",
                ArithOp::Sub => "SUB",
                ArithOp::Mul => "MUL",
                ArithOp::Div => "DIV",
                ArithOp::Mod => "MOD",
            },
            Instr::AddI { .. } => "ADDI",
            Instr::Cmp { op, .. } => match op {
                CmpOp::Eq => "EQ",
                CmpOp::Lt => "LT",
            },
            Instr::CmpI { op, .. } => match op {
                CmpOp::Eq => "EQI",
                CmpOp::Lt => "LTI",
            },
            Instr::Jmp { .. } => "JMP",
            Instr::Jz { .. } => "JZ",
            Instr::Jnz { .. } => "JNZ",
            Instr::JmpR { .. } => "JMPR",
            Instr::ReadType { .. } => "READT",
            Instr::ReadRand { .. } => "RAND",
            Instr::Put { .. } => "PUT",
            Instr::PutS { .. } => "PUTS",
            Instr::Send => "SEND",
            Instr::Recv { .. } => "RECV",
            Instr::GetM { .. } => "GETM",
            Instr::Emit { .. } => "EMIT",
            Instr::EmitR { .. } => "EMITR",
            Instr::Ctx { .. } => "CTX",
            Instr::Enter { .. } => "ENTER",
        }
    }

    /// Registers read by this instruction.
    pub fn reads(&self) -> Vec<Reg> {
        match *self {
            Instr::Mov { src, .. } | Instr::AddI { src, .. } | Instr::CmpI { src, .. } => {
                vec![src]
            }
            Instr::Arith { a, b, .. } | Instr::Cmp { a, b, .. } => vec![a, b],
            Instr::Jz { cond, .. } | Instr::Jnz { cond, .. } => vec![cond],
            Instr::JmpR { src } | Instr::Put { src } | Instr::EmitR { src } => vec![src],
            _ => Vec::new(),
        }
    }

    /// Register written by this instruction, if any.
    pub fn writes(&self) -> Option<Reg> {
        match *self {
            Instr::Load { dst, .. }
            | Instr::Mov { dst, .. }
            | Instr::Arith { dst, .. }
            | Instr::AddI { dst, .. }
            | Instr::Cmp { dst, .. }
            | Instr::CmpI { dst, .. }
            | Instr::ReadType { dst }
            | Instr::ReadRand { dst }
            | Instr::Recv { dst }
            | Instr::GetM { dst } => Some(dst),
            _ => None,
        }
    }

    pub fn jump_target(&self) -> Option<usize> {
        match *self {
            Instr::Jmp { target } | Instr::Jz { target, .. } | Instr::Jnz { target, .. } => {
                Some(target)
            }
            _ => None,
        }
    }

    pub(crate) fn jump_target_mut(&mut self) -> Option<&mut usize> {
        match self {
            Instr::Jmp { target } | Instr::Jz { target, .. } | Instr::Jnz { target, .. } => {
                Some(target)
            }
            _ => None,
        }
    }

    pub(crate) fn map_registers(&mut self, f: impl Fn(Reg) -> Reg) {
        match self {
            Instr::Load { dst, .. }
            | Instr::ReadType { dst }
            | Instr::ReadRand { dst }
            | Instr::Recv { dst }
            | Instr::GetM { dst } => *dst = f(*dst),
            Instr::Mov { dst, src } | Instr::AddI { dst, src, .. } | Instr::CmpI { dst, src, .. } => {
                *dst = f(*dst);
                *src = f(*src);
            }
            Instr::Arith { dst, a, b, .. } | Instr::Cmp { dst, a, b, .. } => {
                *dst = f(*dst);
                *a = f(*a);
                *b = f(*b);
            }
            Instr::Jz { cond, .. } | Instr::Jnz { cond, .. } => *cond = f(*cond),
            Instr::JmpR { src } | Instr::Put { src } | Instr::EmitR { src } => *src = f(*src),
            _ => {}
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Instr::Send | Instr::Recv { .. } | Instr::GetM { .. } | Instr::Put { .. } | Instr::PutS { .. })
    }
}

/// Identity attached to a delivered message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sender {
    /// A player, 1-based.
    Player(usize),
    /// A mediator, by identity.
    Mediator(u32),
}

impl Sender {
    /// Value written by `RECV`.
    pub fn tag(&self) -> i64 {
        match *self {
            Sender::Player(i) => i as i64,
            Sender::Mediator(id) => MEDIATOR_TAG_BASE + id as i64,
        }
    }
}

impl fmt::Display for Sender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sender::Player(i) => write!(f, "player{i}"),
            Sender::Mediator(id) => write!(f, "mediator{id}"),
        }
    }
}

/// A message placed in a machine's inbox.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Delivered {
    pub from: Sender,
    pub body: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbols_round_trip() {
        for c in "0123456789;|".chars() {
            assert_eq!(char_of(symbol_of(c).unwrap()), Some(c));
        }
        assert_eq!(symbol_of('x'), None);
        assert_eq!(char_of(SYM_END), None);
    }

    #[test]
    fn sender_tags_are_disjoint() {
        assert_eq!(Sender::Player(2).tag(), 2);
        assert_eq!(Sender::Mediator(0).tag(), MEDIATOR_TAG_BASE);
    }
}
