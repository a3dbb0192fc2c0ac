//! The benign coalition controller: one program that runs each member's
//! machine on its own I/O context, interleaving them stage by stage.

use super::{Coalition, StrategyProfile};
use crate::vm::{Component, Instr, MachineProgram, Reg};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CoalitionError {
    #[error("member machine {label:?} uses {what}, which the benign controller cannot embed")]
    Unsupported { label: String, what: &'static str },
    #[error("coalition {0} needs more than 65535 registers")]
    TooManyRegisters(String),
}

/// Compiles the members' machines in `profile` into one controller for `z`.
///
/// Member `k` uses context `k`, its own register window, a resume register
/// and a done flag. Each pass of the dispatcher resumes every live member up
/// to its next `SEND` or halt, then sends once for all of them.
pub fn benign_coalition_machine(profile: &StrategyProfile, z: &Coalition) -> Result<MachineProgram, CoalitionError> {
    let members: Vec<&MachineProgram> = z.members().iter().map(|&i| &profile.assignment[i]).collect();
    for m in &members {
        for ins in &m.instructions {
            let what = match ins {
                Instr::JmpR { .. } => "JMPR",
                Instr::Ctx { .. } => "CTX",
                _ => continue,
            };
            return Err(CoalitionError::Unsupported { label: m.label.clone(), what });
        }
    }
    let k_count = members.len();
    let mut offsets = Vec::with_capacity(k_count);
    let mut next_reg: u32 = 0;
    for m in &members {
        offsets.push(next_reg as Reg);
        next_reg += m.registers as u32;
    }
    let base = next_reg;
    let total = base + 2 * k_count as u32 + 1;
    if total > u16::MAX as u32 {
        return Err(CoalitionError::TooManyRegisters(z.to_string()));
    }
    let resume = |k: usize| (base + 2 * k as u32) as Reg;
    let done = |k: usize| (base + 2 * k as u32 + 1) as Reg;
    let scratch = (base + 2 * k_count as u32) as Reg;

    let dispatch = 2 * k_count;
    let back = |k: usize| dispatch + 3 * (k + 1);
    let check = dispatch + 3 * k_count;
    let halt_at = check + k_count + 4;
    let mut starts = Vec::with_capacity(k_count);
    let mut at = halt_at + 1;
    let mut layouts = Vec::with_capacity(k_count);
    for m in &members {
        starts.push(at);
        let mut map = Vec::with_capacity(m.instructions.len() + 1);
        for ins in &m.instructions {
            map.push(at);
            at += if matches!(ins, Instr::Send | Instr::Halt) { 2 } else { 1 };
        }
        // falling off the end lands on the stub
        map.push(at);
        at += 2;
        layouts.push(map);
    }

    let mut code = Vec::with_capacity(at);
    for (k, m) in members.iter().enumerate() {
        code.push(Instr::Load { dst: resume(k), imm: starts[k] as i64 });
        code.push(Instr::Load { dst: done(k), imm: m.instructions.is_empty() as i64 });
    }
    for k in 0..k_count {
        code.push(Instr::Jnz { cond: done(k), target: back(k) });
        code.push(Instr::Ctx { index: k as u16 });
        code.push(Instr::JmpR { src: resume(k) });
    }
    code.push(Instr::Load { dst: scratch, imm: 1 });
    for k in 0..k_count {
        code.push(Instr::Arith { op: crate::vm::ArithOp::Mul, dst: scratch, a: scratch, b: done(k) });
    }
    code.push(Instr::Jnz { cond: scratch, target: halt_at });
    code.push(Instr::Send);
    code.push(Instr::Jmp { target: dispatch });
    code.push(Instr::Halt);

    let mut components: Vec<Component> = Vec::new();
    for (k, m) in members.iter().enumerate() {
        let map = &layouts[k];
        let comp_base = components.len() as u16;
        components.extend(m.components.iter().cloned());
        for (pc, ins) in m.instructions.iter().enumerate() {
            match ins {
                Instr::Send => {
                    code.push(Instr::Load { dst: resume(k), imm: map[pc + 1] as i64 });
                    code.push(Instr::Jmp { target: back(k) });
                }
                Instr::Halt => {
                    code.push(Instr::Load { dst: done(k), imm: 1 });
                    code.push(Instr::Jmp { target: back(k) });
                }
                _ => {
                    let mut ins = ins.clone();
                    ins.map_registers(|r| r + offsets[k]);
                    if let Some(t) = ins.jump_target_mut() {
                        *t = map[*t];
                    }
                    if let Instr::Enter { component } = &mut ins {
                        *component += comp_base;
                    }
                    code.push(ins);
                }
            }
        }
        code.push(Instr::Load { dst: done(k), imm: 1 });
        code.push(Instr::Jmp { target: back(k) });
    }
    debug_assert_eq!(code.len(), at);
    let labels: Vec<&str> = members.iter().map(|m| m.label.as_str()).collect();
    let mut prog = MachineProgram::new(format!("benign{z}[{}]", labels.join(",")), total as u16, code);
    prog.components = components;
    Ok(prog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::{canonical_bot, parse_program, Machine, RunBudget, Yield};

    fn constant(out: &str) -> MachineProgram {
        parse_program(&format!("label: const-{out}\nregisters: 0\nEMIT \"{out}\"\nHALT\n")).unwrap()
    }

    #[test]
    fn runs_each_member_in_its_context() {
        let profile = StrategyProfile::new(vec![constant("1"), constant("0"), canonical_bot()]);
        let z = Coalition::new([0, 1, 2]);
        let prog = benign_coalition_machine(&profile, &z).unwrap();
        prog.validate().unwrap();
        let mut m = Machine::new(&prog, &["", "", ""], &[], RunBudget::default(), false).unwrap();
        assert_eq!(m.resume().unwrap(), Yield::Halted);
        let res = m.finish();
        assert_eq!(res.outputs, vec!["1".to_string(), "0".to_string(), String::new()]);
    }

    #[test]
    fn rejects_register_jumps() {
        let p = parse_program("label: j\nregisters: 1\nLOAD r0,0\nJMPR r0\n").unwrap();
        let profile = StrategyProfile::new(vec![p.clone(), p]);
        assert!(benign_coalition_machine(&profile, &Coalition::new([0, 1])).is_err());
    }
}
