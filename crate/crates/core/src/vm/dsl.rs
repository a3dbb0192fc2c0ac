//! Text form of machine programs.
//!
//! ```text
//! ; tit-for-tat, one round per stage
//! label: tit-for-tat
//! registers: 2
//! top:
//!     RECV r0
//!     LTI r1, r0, 0
//!     JNZ r1, coop
//!     GETM r1
//!     PUT r1
//!     JMP send
//! coop:
//!     PUTS "0"
//! send:
//!     SEND
//!     JMP top
//! ```
//!
//! One instruction per line, `;` starts a comment outside string literals,
//! operands are separated by commas or spaces. `name:` alone on a line
//! defines a jump label; `label:`, `registers:` and `component:` are headers.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use super::instr::{ArithOp, CmpOp, Instr, Reg};
use super::program::{Component, MachineProgram, ProgramError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DslError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error(transparent)]
    Invalid(#[from] ProgramError),
}

fn syntax(line: usize, message: impl Into<String>) -> DslError {
    DslError::Syntax { line, message: message.into() }
}

/// Removes a `;` comment, leaving string literals intact.
fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_str = !in_str,
            ';' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}

#[derive(Debug)]
enum Tok {
    Word(String),
    Str(String),
}

fn tokenize(line: usize, s: &str) -> Result<Vec<Tok>, DslError> {
    let mut out = Vec::new();
    let mut chars = s.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() || c == ',' {
            chars.next();
        } else if c == '"' {
            chars.next();
            let mut lit = String::new();
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some(ch) => lit.push(ch),
                    None => return Err(syntax(line, "unterminated string literal")),
                }
            }
            out.push(Tok::Str(lit));
        } else {
            let mut w = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_whitespace() || ch == ',' || ch == '"' {
                    break;
                }
                w.push(ch);
                chars.next();
            }
            out.push(Tok::Word(w));
        }
    }
    Ok(out)
}

enum Target {
    Label(String),
    Abs(usize),
}

struct Pending {
    line: usize,
    ins: Instr,
    target: Option<Target>,
}

fn reg(line: usize, tok: Option<&Tok>) -> Result<Reg, DslError> {
    match tok {
        Some(Tok::Word(w)) => w
            .strip_prefix('r')
            .and_then(|n| n.parse::<Reg>().ok())
            .ok_or_else(|| syntax(line, format!("expected register, found {w:?}"))),
        _ => Err(syntax(line, "expected register operand")),
    }
}

fn imm(line: usize, tok: Option<&Tok>) -> Result<i64, DslError> {
    match tok {
        Some(Tok::Word(w)) => w
            .trim_start_matches('#')
            .parse::<i64>()
            .map_err(|_| syntax(line, format!("expected integer, found {w:?}"))),
        _ => Err(syntax(line, "expected integer operand")),
    }
}

fn lit(line: usize, tok: Option<&Tok>) -> Result<String, DslError> {
    match tok {
        Some(Tok::Str(s)) => Ok(s.clone()),
        _ => Err(syntax(line, "expected string literal")),
    }
}

fn target(line: usize, tok: Option<&Tok>) -> Result<Target, DslError> {
    match tok {
        Some(Tok::Word(w)) => match w.strip_prefix('@') {
            Some(n) => n
                .parse::<usize>()
                .map(Target::Abs)
                .map_err(|_| syntax(line, format!("bad absolute target {w:?}"))),
            None => Ok(Target::Label(w.clone())),
        },
        _ => Err(syntax(line, "expected jump target")),
    }
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
}

/// Parses a program from its text form and validates it.
pub fn parse_program(src: &str) -> Result<MachineProgram, DslError> {
    let mut label: Option<String> = None;
    let mut registers: Option<u16> = None;
    let mut components = Vec::new();
    let mut labels: HashMap<String, usize> = HashMap::new();
    let mut pending: Vec<Pending> = Vec::new();

    for (idx, raw) in src.lines().enumerate() {
        let line = idx + 1;
        let text = strip_comment(raw).trim();
        if text.is_empty() {
            continue;
        }
        // headers and labels
        if let Some((head, rest)) = text.split_once(':') {
            let head = head.trim();
            let rest = rest.trim();
            if !head.contains(char::is_whitespace) && !head.contains('"') {
                match head {
                    "label" => {
                        if rest.is_empty() {
                            return Err(syntax(line, "label header needs a value"));
                        }
                        label = Some(rest.to_string());
                        continue;
                    }
                    "registers" => {
                        registers = Some(rest.parse().map_err(|_| {
                            syntax(line, format!("bad register count {rest:?}"))
                        })?);
                        continue;
                    }
                    "component" => {
                        let mut parts = rest.split_whitespace();
                        let (Some(l), Some(sz), None) = (parts.next(), parts.next(), parts.next())
                        else {
                            return Err(syntax(line, "component header is `component: <label> <size>`"));
                        };
                        let size = sz
                            .parse()
                            .map_err(|_| syntax(line, format!("bad component size {sz:?}")))?;
                        components.push(Component { label: l.to_string(), size });
                        continue;
                    }
                    _ if rest.is_empty() && is_ident(head) => {
                        if labels.insert(head.to_string(), pending.len()).is_some() {
                            return Err(syntax(line, format!("duplicate label {head:?}")));
                        }
                        continue;
                    }
                    _ => {}
                }
            }
        }
        let toks = tokenize(line, text)?;
        let Some(Tok::Word(op)) = toks.first() else {
            return Err(syntax(line, "expected an opcode"));
        };
        let a = |i: usize| toks.get(i);
        let op_upper = op.to_ascii_uppercase();
        let mut tgt = None;
        let arith = |o| -> Result<Instr, DslError> {
            Ok(Instr::Arith { op: o, dst: reg(line, a(1))?, a: reg(line, a(2))?, b: reg(line, a(3))? })
        };
        let ins = match op_upper.as_str() {
            "HALT" => Instr::Halt,
            "LOAD" => Instr::Load { dst: reg(line, a(1))?, imm: imm(line, a(2))? },
            "MOV" | "STORE" => Instr::Mov { dst: reg(line, a(1))?, src: reg(line, a(2))? },
            "ADD" => arith(ArithOp::Add)?,
            "SUB" => arith(ArithOp::Sub)?,
            "MUL" => arith(ArithOp::Mul)?,
            "DIV" => arith(ArithOp::Div)?,
            "MOD" => arith(ArithOp::Mod)?,
            "ADDI" => Instr::AddI { dst: reg(line, a(1))?, src: reg(line, a(2))?, imm: imm(line, a(3))? },
            "EQ" | "LT" => Instr::Cmp {
                op: if op_upper == "EQ" { CmpOp::Eq } else { CmpOp::Lt },
                dst: reg(line, a(1))?,
                a: reg(line, a(2))?,
                b: reg(line, a(3))?,
            },
            "EQI" | "LTI" => Instr::CmpI {
                op: if op_upper == "EQI" { CmpOp::Eq } else { CmpOp::Lt },
                dst: reg(line, a(1))?,
                src: reg(line, a(2))?,
                imm: imm(line, a(3))?,
            },
            "JMP" => {
                tgt = Some(target(line, a(1))?);
                Instr::Jmp { target: 0 }
            }
            "JZ" => {
                let cond = reg(line, a(1))?;
                tgt = Some(target(line, a(2))?);
                Instr::Jz { cond, target: 0 }
            }
            "JNZ" => {
                let cond = reg(line, a(1))?;
                tgt = Some(target(line, a(2))?);
                Instr::Jnz { cond, target: 0 }
            }
            "JMPR" => Instr::JmpR { src: reg(line, a(1))? },
            "READT" | "READ_TYPE" => Instr::ReadType { dst: reg(line, a(1))? },
            "RAND" | "READ_RAND" => Instr::ReadRand { dst: reg(line, a(1))? },
            "PUT" => Instr::Put { src: reg(line, a(1))? },
            "PUTS" => Instr::PutS { lit: lit(line, a(1))? },
            "SEND" => Instr::Send,
            "RECV" => Instr::Recv { dst: reg(line, a(1))? },
            "GETM" => Instr::GetM { dst: reg(line, a(1))? },
            "EMIT" => Instr::Emit { lit: lit(line, a(1))? },
            "EMITR" => Instr::EmitR { src: reg(line, a(1))? },
            "CTX" => Instr::Ctx { index: imm(line, a(1))? as u16 },
            "ENTER" => Instr::Enter { component: imm(line, a(1))? as u16 },
            _ => return Err(syntax(line, format!("unknown opcode {op:?}"))),
        };
        let expected = 1 + match &ins {
            Instr::Halt | Instr::Send => 0,
            Instr::Load { .. } | Instr::Mov { .. } | Instr::Jz { .. } | Instr::Jnz { .. } => 2,
            Instr::Arith { .. } | Instr::Cmp { .. } | Instr::CmpI { .. } | Instr::AddI { .. } => 3,
            _ => 1,
        };
        if toks.len() != expected {
            return Err(syntax(
                line,
                format!("{op_upper} takes {} operand(s), found {}", expected - 1, toks.len() - 1),
            ));
        }
        pending.push(Pending { line, ins, target: tgt });
    }

    let len = pending.len();
    let mut instructions = Vec::with_capacity(len);
    for p in pending {
        let mut ins = p.ins;
        if let Some(t) = p.target {
            let resolved = match t {
                Target::Abs(n) => n,
                Target::Label(name) => *labels
                    .get(&name)
                    .ok_or_else(|| syntax(p.line, format!("undefined label {name:?}")))?,
            };
            *ins.jump_target_mut().expect("target on jump") = resolved;
        }
        instructions.push(ins);
    }
    let label = label.ok_or_else(|| syntax(1, "missing `label:` header"))?;
    let registers = registers.ok_or_else(|| syntax(1, "missing `registers:` header"))?;
    let program = MachineProgram { label, registers, instructions, components };
    program.validate()?;
    Ok(program)
}

/// Renders a program; `parse_program(&to_dsl(p)) == p` for valid programs.
pub fn to_dsl(p: &MachineProgram) -> String {
    let targets: BTreeSet<usize> = p.instructions.iter().filter_map(|i| i.jump_target()).collect();
    let name = |t: usize| format!("L{t}");
    let mut out = String::new();
    let _ = writeln!(out, "label: {}", p.label);
    let _ = writeln!(out, "registers: {}", p.registers);
    for c in &p.components {
        let _ = writeln!(out, "component: {} {}", c.label, c.size);
    }
    for (pc, ins) in p.instructions.iter().enumerate() {
        if targets.contains(&pc) {
            let _ = writeln!(out, "{}:", name(pc));
        }
        let body = match ins {
            Instr::Halt | Instr::Send => ins.mnemonic().to_string(),
            Instr::Load { dst, imm } => format!("LOAD r{dst}, {imm}"),
            Instr::Mov { dst, src } => format!("MOV r{dst}, r{src}"),
            Instr::Arith { dst, a, b, .. } | Instr::Cmp { dst, a, b, .. } => {
                format!("{} r{dst}, r{a}, r{b}", ins.mnemonic())
            }
            Instr::AddI { dst, src, imm } | Instr::CmpI { dst, src, imm, .. } => {
                format!("{} r{dst}, r{src}, {imm}", ins.mnemonic())
            }
            Instr::Jmp { target } => format!("JMP {}", name(*target)),
            Instr::Jz { cond, target } | Instr::Jnz { cond, target } => {
                format!("{} r{cond}, {}", ins.mnemonic(), name(*target))
            }
            Instr::JmpR { src } | Instr::Put { src } | Instr::EmitR { src } => {
                format!("{} r{src}", ins.mnemonic())
            }
            Instr::ReadType { dst } | Instr::ReadRand { dst } | Instr::Recv { dst } | Instr::GetM { dst } => {
                format!("{} r{dst}", ins.mnemonic())
            }
            Instr::PutS { lit } | Instr::Emit { lit } => format!("{} \"{lit}\"", ins.mnemonic()),
            Instr::Ctx { index } => format!("CTX {index}"),
            Instr::Enter { component } => format!("ENTER {component}"),
        };
        let _ = writeln!(out, "    {body}");
    }
    if targets.contains(&p.instructions.len()) {
        let _ = writeln!(out, "{}:", name(p.instructions.len()));
    }
    out
}
