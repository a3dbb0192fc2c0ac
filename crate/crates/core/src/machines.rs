//! Stock strategies used by the case studies and tests.

use crate::vm::{ArithOp, CmpOp, Instr, MachineProgram, ProgramBuilder};

/// Outputs `out` and halts.
pub fn constant(label: impl Into<String>, out: &str) -> MachineProgram {
    MachineProgram::new(label, 0, vec![Instr::Emit { lit: out.into() }, Instr::Halt])
}

/// Uniform over `0`, `1`, `2` by rejection on two random bits.
pub fn uniform_ternary(label: impl Into<String>) -> MachineProgram {
    let mut b = ProgramBuilder::new(label, 2);
    b.mark("top")
        .push(Instr::ReadRand { dst: 0 })
        .push(Instr::ReadRand { dst: 1 })
        .push(Instr::Arith { op: ArithOp::Add, dst: 0, a: 0, b: 0 })
        .push(Instr::Arith { op: ArithOp::Add, dst: 0, a: 0, b: 1 })
        .push(Instr::CmpI { op: CmpOp::Eq, dst: 1, src: 0, imm: 3 })
        .jnz(1, "top")
        .push(Instr::AddI { dst: 0, src: 0, imm: 2 })
        .push(Instr::Load { dst: 1, imm: 3 })
        .push(Instr::Arith { op: ArithOp::Mod, dst: 0, a: 0, b: 1 })
        .push(Instr::EmitR { src: 0 })
        .push(Instr::Halt);
    b.finish()
}

/// Reads a binary type into `dst` (most significant bit first); uses `tmp`.
fn read_binary(b: &mut ProgramBuilder, dst: u16, tmp: u16, name: &str) {
    let (top, done) = (format!("{name}-top"), format!("{name}-done"));
    b.push(Instr::Load { dst, imm: 0 })
        .mark(&top)
        .push(Instr::ReadType { dst: tmp })
        .push(Instr::CmpI { op: CmpOp::Lt, dst: tmp + 1, src: tmp, imm: 0 })
        .jnz(tmp + 1, &done)
        .push(Instr::Arith { op: ArithOp::Add, dst, a: dst, b: dst })
        .push(Instr::Arith { op: ArithOp::Add, dst, a: dst, b: tmp })
        .jmp(&top)
        .mark(&done);
}

/// Trial division: outputs `1` for a prime type, `0` otherwise.
pub fn trial_division(label: impl Into<String>) -> MachineProgram {
    // r0 = n, r1/r2 scratch, r3 = d
    let mut b = ProgramBuilder::new(label, 4);
    read_binary(&mut b, 0, 1, "read");
    b.push(Instr::CmpI { op: CmpOp::Lt, dst: 1, src: 0, imm: 2 })
        .jnz(1, "composite")
        .push(Instr::Load { dst: 3, imm: 2 })
        .mark("loop")
        .push(Instr::Cmp { op: CmpOp::Lt, dst: 1, a: 3, b: 0 })
        .jz(1, "prime")
        .push(Instr::Arith { op: ArithOp::Mod, dst: 2, a: 0, b: 3 })
        .jz(2, "composite")
        .push(Instr::AddI { dst: 3, src: 3, imm: 1 })
        .jmp("loop")
        .mark("prime")
        .push(Instr::Emit { lit: "1".into() })
        .push(Instr::Halt)
        .mark("composite")
        .push(Instr::Emit { lit: "0".into() })
        .push(Instr::Halt);
    b.finish()
}

/// One-round Fermat test with a random base from {2, 7}, by square and
/// multiply: outputs `1` when `base^(n-1) ≡ 1 (mod n)`.
pub fn fermat_tester(label: impl Into<String>) -> MachineProgram {
    // r0 = n, r1/r2 scratch, r3 = base, r4 = exponent, r5 = acc
    let mut b = ProgramBuilder::new(label, 6);
    read_binary(&mut b, 0, 1, "read");
    b.push(Instr::ReadRand { dst: 1 })
        .push(Instr::Load { dst: 3, imm: 2 })
        .jz(1, "based")
        .push(Instr::Load { dst: 3, imm: 7 })
        .mark("based")
        .push(Instr::AddI { dst: 4, src: 0, imm: -1 })
        .push(Instr::Load { dst: 5, imm: 1 })
        .mark("loop")
        .jz(4, "check")
        .push(Instr::Load { dst: 2, imm: 2 })
        .push(Instr::Arith { op: ArithOp::Mod, dst: 1, a: 4, b: 2 })
        .push(Instr::Arith { op: ArithOp::Div, dst: 4, a: 4, b: 2 })
        .jz(1, "square")
        .push(Instr::Arith { op: ArithOp::Mul, dst: 5, a: 5, b: 3 })
        .push(Instr::Arith { op: ArithOp::Mod, dst: 5, a: 5, b: 0 })
        .mark("square")
        .push(Instr::Arith { op: ArithOp::Mul, dst: 3, a: 3, b: 3 })
        .push(Instr::Arith { op: ArithOp::Mod, dst: 3, a: 3, b: 0 })
        .jmp("loop")
        .mark("check")
        .push(Instr::CmpI { op: CmpOp::Eq, dst: 1, src: 5, imm: 1 })
        .jz(1, "composite")
        .push(Instr::Emit { lit: "1".into() })
        .push(Instr::Halt)
        .mark("composite")
        .push(Instr::Emit { lit: "0".into() })
        .push(Instr::Halt);
    b.finish()
}

/// Per-round strategy that plays `first`, then answers the opponent's last
/// move `0` with `on0` and `1` with `on1`. Carries no state between rounds.
pub fn reactive(label: impl Into<String>, first: char, on0: char, on1: char) -> MachineProgram {
    let mut b = ProgramBuilder::new(label, 2);
    b.mark("top")
        .push(Instr::Recv { dst: 0 })
        .push(Instr::CmpI { op: CmpOp::Lt, dst: 1, src: 0, imm: 0 })
        .jnz(1, "first")
        .push(Instr::GetM { dst: 1 })
        .jnz(1, "one")
        .push(Instr::PutS { lit: on0.to_string() })
        .jmp("send")
        .mark("one")
        .push(Instr::PutS { lit: on1.to_string() })
        .jmp("send")
        .mark("first")
        .push(Instr::PutS { lit: first.to_string() })
        .mark("send")
        .push(Instr::Send)
        .jmp("top");
    b.finish()
}

pub fn tit_for_tat() -> MachineProgram {
    reactive("tit-for-tat", '0', '0', '1')
}

/// A two-state Moore automaton: `outputs[s]` is played in state `s`,
/// `next[s][obs]` is the state after seeing the opponent play `obs`.
/// Starts in state 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Automaton {
    pub outputs: [char; 2],
    pub next: [[usize; 2]; 2],
}

impl Automaton {
    /// Every two-state automaton over moves `0`/`1`.
    pub fn all() -> Vec<Automaton> {
        let mut out = Vec::new();
        for o in 0..4usize {
            for t in 0..16usize {
                out.push(Automaton {
                    outputs: [bit(o, 0), bit(o, 1)],
                    next: [[t & 1, t >> 1 & 1], [t >> 2 & 1, t >> 3 & 1]],
                });
            }
        }
        out
    }

    fn reachable(&self) -> Vec<usize> {
        let mut seen = vec![0usize];
        let mut k = 0;
        while k < seen.len() {
            for obs in 0..2 {
                let s = self.next[seen[k]][obs];
                if !seen.contains(&s) {
                    seen.push(s);
                }
            }
            k += 1;
        }
        seen
    }

    /// `(first, on0, on1)` when the move after round one depends only on
    /// the opponent's last move.
    pub fn as_reactive(&self) -> Option<(char, char, char)> {
        let states = self.reachable();
        let reply = |obs: usize| {
            let r = self.outputs[self.next[states[0]][obs]];
            states.iter().all(|&s| self.outputs[self.next[s][obs]] == r).then_some(r)
        };
        Some((self.outputs[0], reply(0)?, reply(1)?))
    }

    pub fn label(&self) -> String {
        let n = self.next;
        format!(
            "auto-{}{}-{}{}{}{}",
            self.outputs[0], self.outputs[1], n[0][0], n[0][1], n[1][0], n[1][1]
        )
    }

    /// Compiles to a per-round program; reactive automata compile without
    /// carried state.
    pub fn program(&self) -> MachineProgram {
        if let Some((f, a, b)) = self.as_reactive() {
            return reactive(format!("reactive-{f}{a}{b}"), f, a, b);
        }
        // r0 tag, r1 observation, r2 state
        let mut b = ProgramBuilder::new(self.label(), 3);
        b.push(Instr::Load { dst: 2, imm: 0 })
            .mark("top")
            .push(Instr::Recv { dst: 0 })
            .push(Instr::CmpI { op: CmpOp::Lt, dst: 1, src: 0, imm: 0 })
            .jnz(1, "emit")
            .push(Instr::GetM { dst: 1 })
            .jnz(2, "from1");
        for s in 0..2 {
            if s == 1 {
                b.mark("from1");
            }
            let obs1 = format!("s{s}o1");
            b.jnz(1, &obs1)
                .push(Instr::Load { dst: 2, imm: self.next[s][0] as i64 })
                .jmp("emit")
                .mark(&obs1)
                .push(Instr::Load { dst: 2, imm: self.next[s][1] as i64 })
                .jmp("emit");
        }
        b.mark("emit")
            .jnz(2, "out1")
            .push(Instr::PutS { lit: self.outputs[0].to_string() })
            .jmp("send")
            .mark("out1")
            .push(Instr::PutS { lit: self.outputs[1].to_string() })
            .mark("send")
            .push(Instr::Send)
            .jmp("top");
        b.finish()
    }
}

fn bit(v: usize, k: usize) -> char {
    if v >> k & 1 == 1 {
        '1'
    } else {
        '0'
    }
}

/// Cooperates for rounds `1..k`, then defects from round `k` on, counting
/// rounds in a register.
pub fn defect_from(k: u32) -> MachineProgram {
    let mut b = ProgramBuilder::new(format!("defect-from-{k}"), 3);
    b.push(Instr::Load { dst: 2, imm: 0 })
        .mark("top")
        .push(Instr::Recv { dst: 0 })
        .push(Instr::CmpI { op: CmpOp::Lt, dst: 1, src: 2, imm: k as i64 - 1 })
        .jnz(1, "coop")
        .push(Instr::PutS { lit: "1".into() })
        .jmp("send")
        .mark("coop")
        .push(Instr::PutS { lit: "0".into() })
        .mark("send")
        .push(Instr::AddI { dst: 2, src: 2, imm: 1 })
        .push(Instr::Send)
        .jmp("top");
    b.finish()
}

/// Plays tit-for-tat but defects at every round from `k` on.
pub fn tit_for_tat_defect_from(k: u32) -> MachineProgram {
    let mut b = ProgramBuilder::new(format!("tft-defect-from-{k}"), 3);
    b.push(Instr::Load { dst: 2, imm: 0 })
        .mark("top")
        .push(Instr::Recv { dst: 0 })
        .push(Instr::CmpI { op: CmpOp::Lt, dst: 1, src: 2, imm: k as i64 - 1 })
        .jz(1, "defect")
        .push(Instr::CmpI { op: CmpOp::Lt, dst: 1, src: 0, imm: 0 })
        .jnz(1, "coop")
        .push(Instr::GetM { dst: 1 })
        .jnz(1, "defect")
        .mark("coop")
        .push(Instr::PutS { lit: "0".into() })
        .jmp("send")
        .mark("defect")
        .push(Instr::PutS { lit: "1".into() })
        .mark("send")
        .push(Instr::AddI { dst: 2, src: 2, imm: 1 })
        .push(Instr::Send)
        .jmp("top");
    b.finish()
}

/// Sends the first `j` type symbols, waits for the reply and outputs its
/// first symbol (nothing if no reply arrives).
pub fn prefix_sender(j: usize) -> MachineProgram {
    let mut b = ProgramBuilder::new(format!("send-prefix-{j}"), 3);
    b.push(Instr::Load { dst: 2, imm: j as i64 })
        .mark("read")
        .jz(2, "send")
        .push(Instr::ReadType { dst: 0 })
        .push(Instr::CmpI { op: CmpOp::Lt, dst: 1, src: 0, imm: 0 })
        .jnz(1, "send")
        .push(Instr::Put { src: 0 })
        .push(Instr::AddI { dst: 2, src: 2, imm: -1 })
        .jmp("read")
        .mark("send")
        .push(Instr::Send)
        .push(Instr::Recv { dst: 0 })
        .push(Instr::CmpI { op: CmpOp::Lt, dst: 1, src: 0, imm: 0 })
        .jnz(1, "done")
        .push(Instr::GetM { dst: 0 })
        .push(Instr::CmpI { op: CmpOp::Lt, dst: 1, src: 0, imm: 0 })
        .jnz(1, "done")
        .push(Instr::EmitR { src: 0 })
        .mark("done")
        .push(Instr::Halt);
    b.finish()
}
