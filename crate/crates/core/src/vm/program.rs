use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::instr::{Instr, Reg};
use super::RunBudget;

/// Label reserved for the do-nothing machine.
pub const BOT_LABEL: &str = "bot";

/// Size and label of a machine embedded in a larger program (see `ENTER`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Component {
    pub label: String,
    pub size: u64,
}

/// A strategy: a finite program for the metered register machine.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MachineProgram {
    pub label: String,
    pub registers: u16,
    pub instructions: Vec<Instr>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<Component>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProgramError {
    #[error("program {label:?}: instruction {pc} uses register r{reg} but only {count} declared")]
    RegisterOutOfRange { label: String, pc: usize, reg: Reg, count: u16 },
    #[error("program {label:?}: instruction {pc} jumps to {target}, past the end ({len})")]
    TargetOutOfRange { label: String, pc: usize, target: usize, len: usize },
    #[error("program {label:?}: instruction {pc} enters component {component} of {count}")]
    ComponentOutOfRange { label: String, pc: usize, component: u16, count: usize },
    #[error("program {label:?}: literal {lit:?} has a character outside 0-9 ; |")]
    BadLiteral { label: String, lit: String },
    #[error("the empty program must be the canonical bot (label \"bot\", 0 registers)")]
    EmptyNotBot,
    #[error("label \"bot\" is reserved for the empty program")]
    BotLabelReserved,
}

/// The unique do-nothing machine.
pub fn canonical_bot() -> MachineProgram {
    MachineProgram {
        label: BOT_LABEL.to_string(),
        registers: 0,
        instructions: Vec::new(),
        components: Vec::new(),
    }
}

impl MachineProgram {
    pub fn new(label: impl Into<String>, registers: u16, instructions: Vec<Instr>) -> Self {
        MachineProgram {
            label: label.into(),
            registers,
            instructions,
            components: Vec::new(),
        }
    }

    pub fn is_bot(&self) -> bool {
        self.instructions.is_empty()
            && self.registers == 0
            && self.label == BOT_LABEL
            && self.components.is_empty()
    }

    pub fn size(&self) -> u64 {
        self.instructions.len() as u64
    }

    pub fn uses_ports(&self) -> bool {
        self.instructions
            .iter()
            .any(|i| matches!(i, Instr::Send | Instr::Recv { .. }))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn validate(&self) -> Result<(), ProgramError> {
        if self.instructions.is_empty() {
            return if self.is_bot() { Ok(()) } else { Err(ProgramError::EmptyNotBot) };
        }
        if self.label == BOT_LABEL {
            return Err(ProgramError::BotLabelReserved);
        }
        let len = self.instructions.len();
        for (pc, ins) in self.instructions.iter().enumerate() {
            for reg in ins.reads().into_iter().chain(ins.writes()) {
                if reg >= self.registers {
                    return Err(ProgramError::RegisterOutOfRange {
                        label: self.label.clone(),
                        pc,
                        reg,
                        count: self.registers,
                    });
                }
            }
            if let Some(target) = ins.jump_target() {
                if target > len {
                    return Err(ProgramError::TargetOutOfRange {
                        label: self.label.clone(),
                        pc,
                        target,
                        len,
                    });
                }
            }
            match ins {
                Instr::Enter { component } if *component as usize >= self.components.len() => {
                    return Err(ProgramError::ComponentOutOfRange {
                        label: self.label.clone(),
                        pc,
                        component: *component,
                        count: self.components.len(),
                    });
                }
                Instr::PutS { lit } | Instr::Emit { lit }
                    if lit.chars().any(|c| super::instr::symbol_of(c).is_none()) =>
                {
                    return Err(ProgramError::BadLiteral {
                        label: self.label.clone(),
                        lit: lit.clone(),
                    });
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Follows unconditional jumps from `pc` to the first real instruction.
    pub(crate) fn canonical_pc(&self, mut pc: usize) -> usize {
        for _ in 0..=self.instructions.len() {
            match self.instructions.get(pc) {
                Some(Instr::Jmp { target }) => pc = *target,
                _ => break,
            }
        }
        pc
    }
}

impl fmt::Display for MachineProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::dsl::to_dsl(self))
    }
}

/// Upper bound on random bits consumed by any run within `budget`.
///
/// Walks every control path (both branches of conditional jumps, any target
/// of `JMPR`) for at most `max_steps` instructions and counts `RAND`s.
pub fn max_random_bits(program: &MachineProgram, budget: &RunBudget) -> u64 {
    let len = program.instructions.len();
    if len == 0 {
        return 0;
    }
    let has_rand = program
        .instructions
        .iter()
        .any(|i| matches!(i, Instr::ReadRand { .. }));
    if !has_rand {
        return 0;
    }
    let indirect = program
        .instructions
        .iter()
        .any(|i| matches!(i, Instr::JmpR { .. }));
    // best[pc] = most RANDs executable from pc with the remaining step count
    let mut best = vec![0u64; len + 1];
    let mut next = vec![0u64; len + 1];
    let steps = budget.max_steps;
    let mut settled = 0u64;
    for _ in 0..steps {
        let any_max = best.iter().copied().max().unwrap_or(0);
        for pc in 0..len {
            let follow = |t: usize| if t >= len { 0 } else { best[t] };
            next[pc] = match &program.instructions[pc] {
                Instr::Halt => 0,
                Instr::ReadRand { .. } => 1 + follow(pc + 1),
                Instr::Jmp { target } => follow(*target),
                Instr::Jz { target, .. } | Instr::Jnz { target, .. } => {
                    follow(*target).max(follow(pc + 1))
                }
                Instr::JmpR { .. } => any_max,
                _ => follow(pc + 1),
            };
        }
        next[len] = 0;
        std::mem::swap(&mut best, &mut next);
        if best[0] >= budget.max_rand_bits {
            return budget.max_rand_bits;
        }
        // without indirect jumps the table stops changing once every path
        // that can still grow has been unrolled; keep going otherwise
        if !indirect && best == next {
            settled += 1;
            if settled > len as u64 {
                break;
            }
        } else {
            settled = 0;
        }
    }
    best[0].min(budget.max_rand_bits)
}

/// Small assembler used by the builders: symbolic labels resolved at `finish`.
#[derive(Debug, Default)]
pub struct ProgramBuilder {
    label: String,
    registers: u16,
    instructions: Vec<Instr>,
    // (instruction index, label name) for unresolved targets
    fixups: Vec<(usize, String)>,
    labels: HashMap<String, usize>,
    components: Vec<Component>,
}

impl ProgramBuilder {
    pub fn new(label: impl Into<String>, registers: u16) -> Self {
        ProgramBuilder {
            label: label.into(),
            registers,
            ..Default::default()
        }
    }

    pub fn here(&self) -> usize {
        self.instructions.len()
    }

    pub fn mark(&mut self, name: &str) -> &mut Self {
        self.labels.insert(name.to_string(), self.instructions.len());
        self
    }

    pub fn push(&mut self, ins: Instr) -> &mut Self {
        self.instructions.push(ins);
        self
    }

    pub fn jmp(&mut self, name: &str) -> &mut Self {
        self.fixups.push((self.instructions.len(), name.to_string()));
        self.push(Instr::Jmp { target: usize::MAX })
    }

    pub fn jz(&mut self, cond: Reg, name: &str) -> &mut Self {
        self.fixups.push((self.instructions.len(), name.to_string()));
        self.push(Instr::Jz { cond, target: usize::MAX })
    }

    pub fn jnz(&mut self, cond: Reg, name: &str) -> &mut Self {
        self.fixups.push((self.instructions.len(), name.to_string()));
        self.push(Instr::Jnz { cond, target: usize::MAX })
    }

    pub fn component(&mut self, c: Component) -> u16 {
        self.components.push(c);
        (self.components.len() - 1) as u16
    }

    pub fn finish(mut self) -> MachineProgram {
        for (at, name) in &self.fixups {
            let target = *self
                .labels
                .get(name)
                .unwrap_or_else(|| panic!("unresolved label {name} in {}", self.label));
            *self.instructions[*at].jump_target_mut().expect("fixup on jump") = target;
        }
        let p = MachineProgram {
            label: self.label,
            registers: self.registers,
            instructions: std::mem::take(&mut self.instructions),
            components: self.components,
        };
        debug_assert!(p.validate().is_ok(), "{:?}", p.validate());
        p
    }
}
