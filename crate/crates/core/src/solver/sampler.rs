//! The binary-decimal sampler: reads random bits until the number they
//! begin lies in a single cumulative interval, then runs that machine.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};

use super::SolverError;
use crate::vm::{run_machine, BudgetKind, Component, Instr, MachineProgram, ProgramBuilder, RunBudget, RunError};
use crate::Rational;

const LO: u16 = 0;
const W: u16 = 1;
const TMP: u16 = 2;
const BIT: u16 = 3;
const HI: u16 = 4;
const BASE_REGS: u16 = 5;

/// Cumulative integer thresholds `0 = s_0 ≤ … ≤ s_N = D` over the common denominator `D`.
pub fn thresholds(dist: &[Rational]) -> Result<(Vec<i64>, i64), SolverError> {
    if dist.iter().any(|p| *p < Rational::zero()) || dist.iter().fold(Rational::zero(), |a, p| a + p) != Rational::one() {
        return Err(SolverError::Invalid("sampler needs a probability distribution".into()));
    }
    let den = dist.iter().fold(BigInt::one(), |l, p| l.lcm(p.denom()));
    let d = den.to_i64().filter(|&d| d < 1 << 60).ok_or_else(|| SolverError::SizeLimit("denominator too large".into()))?;
    let mut s = vec![0i64];
    let mut acc = 0i64;
    for p in dist {
        acc += (p.numer() * (&den / p.denom())).to_i64().expect("bounded by the denominator");
        s.push(acc);
    }
    Ok((s, d))
}

/// Compiles a sampler choosing `machines[k]` with probability `dist[k]`.
pub fn lift_to_sampler_machine(
    label: impl Into<String>,
    dist: &[Rational],
    machines: &[MachineProgram],
) -> Result<MachineProgram, SolverError> {
    if dist.len() != machines.len() || machines.is_empty() {
        return Err(SolverError::Invalid("one probability per base machine".into()));
    }
    for m in machines {
        if m.instructions.iter().any(|i| matches!(i, Instr::JmpR { .. } | Instr::Ctx { .. } | Instr::Enter { .. })) {
            return Err(SolverError::Invalid(format!("base machine {:?} cannot be embedded", m.label)));
        }
    }
    let (s, d) = thresholds(dist)?;
    let bits = 64 - (d - 1).leading_zeros();
    let extra = machines.iter().map(|m| m.registers).max().unwrap_or(0);
    let mut b = ProgramBuilder::new(label, BASE_REGS + extra);
    let live: Vec<usize> = (0..machines.len()).filter(|&k| !dist[k].is_zero()).collect();
    let comps: Vec<u16> =
        machines.iter().map(|m| b.component(Component { label: m.label.clone(), size: m.size() })).collect();
    b.mark("top")
        .push(Instr::Load { dst: LO, imm: 0 })
        .push(Instr::Load { dst: W, imm: 1i64 << bits })
        .mark("loop")
        .push(Instr::CmpI { op: crate::vm::CmpOp::Lt, dst: TMP, src: LO, imm: d })
        .jz(TMP, "top")
        .push(Instr::Arith { op: crate::vm::ArithOp::Add, dst: HI, a: LO, b: W });
    for &k in &live {
        let next = format!("next{k}");
        b.push(Instr::CmpI { op: crate::vm::CmpOp::Lt, dst: TMP, src: LO, imm: s[k] })
            .jnz(TMP, &next)
            .push(Instr::CmpI { op: crate::vm::CmpOp::Lt, dst: TMP, src: HI, imm: s[k + 1] + 1 })
            .jnz(TMP, &format!("sel{k}"))
            .mark(&next);
    }
    b.push(Instr::Load { dst: TMP, imm: 2 })
        .push(Instr::Arith { op: crate::vm::ArithOp::Div, dst: W, a: W, b: TMP })
        .push(Instr::ReadRand { dst: BIT })
        .jz(BIT, "loop")
        .push(Instr::Arith { op: crate::vm::ArithOp::Add, dst: LO, a: LO, b: W })
        .jmp("loop");
    let end = b.here() + live.iter().map(|&k| machines[k].instructions.len() + 2).sum::<usize>();
    for &k in &live {
        b.mark(&format!("sel{k}"));
        let start = b.here() + 1;
        let len = machines[k].instructions.len();
        b.push(Instr::Enter { component: comps[k] });
        for ins in &machines[k].instructions {
            let mut ins = ins.clone();
            ins.map_registers(|r| r + BASE_REGS);
            if let Some(t) = ins.jump_target_mut() {
                *t = if *t == len { end } else { start + *t };
            }
            b.push(ins);
        }
        b.push(Instr::Jmp { target: end });
    }
    Ok(b.finish())
}

/// Output law of `program` on `ty` over every tape up to `depth` bits,
/// conditioned on halting, plus the unresolved mass.
pub fn sampler_law(
    program: &MachineProgram,
    ty: &str,
    depth: usize,
    budget: &RunBudget,
) -> Result<(BTreeMap<String, Rational>, Rational), SolverError> {
    let mut law: BTreeMap<String, Rational> = BTreeMap::new();
    let mut resolved = Rational::zero();
    let mut unresolved = Rational::zero();
    let mut stack = vec![Vec::<bool>::new()];
    while let Some(tape) = stack.pop() {
        let w = Rational::new(BigInt::one(), BigInt::one() << tape.len());
        match run_machine(program, ty, &tape, None, budget) {
            Ok(res) => {
                *law.entry(res.output().to_string()).or_insert_with(Rational::zero) += w.clone();
                resolved += w;
            }
            Err(RunError::BudgetExceeded { kind, .. }) if matches!(kind, BudgetKind::Tape | BudgetKind::RandBits) => {
                if kind == BudgetKind::Tape && tape.len() < depth {
                    for bit in [false, true] {
                        let mut t = tape.clone();
                        t.push(bit);
                        stack.push(t);
                    }
                } else {
                    unresolved += w;
                }
            }
            Err(e) => return Err(SolverError::Invalid(e.to_string())),
        }
    }
    if resolved.is_zero() {
        return Err(SolverError::Invalid("no run resolved within the depth".into()));
    }
    for v in law.values_mut() {
        *v = v.clone() / resolved.clone();
    }
    Ok((law, unresolved))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machines::constant;
    use crate::scalar::{int, ratio};
    use crate::vm::parse_tape;

    fn rps() -> Vec<MachineProgram> {
        vec![constant("rock", "0"), constant("paper", "1"), constant("scissors", "2")]
    }

    #[test]
    fn point_mass_needs_no_bits() {
        let p = lift_to_sampler_machine("s", &[int(1), int(0), int(0)], &rps()).unwrap();
        let r = run_machine(&p, "", &[], None, &RunBudget::default()).unwrap();
        assert_eq!(r.output(), "0");
        assert_eq!(r.meter.rand_bits, 0);
    }

    #[test]
    fn half_quarter_quarter_selects_within_two_bits() {
        let dist = [ratio(1, 2), ratio(1, 4), ratio(1, 4)];
        assert_eq!(thresholds(&dist).unwrap(), (vec![0, 2, 3, 4], 4));
        let p = lift_to_sampler_machine("s", &dist, &rps()).unwrap();
        for (tape, out, used) in [("0", "0", 1), ("10", "1", 2), ("11", "2", 2)] {
            let r = run_machine(&p, "", &parse_tape(tape).unwrap(), None, &RunBudget::default()).unwrap();
            assert_eq!((r.output(), r.meter.rand_bits), (out, used));
        }
    }

    #[test]
    fn uniform_law_is_exact_at_depth_eight() {
        let third = ratio(1, 3);
        let p = lift_to_sampler_machine("s", &[third.clone(), third.clone(), third.clone()], &rps()).unwrap();
        let (law, unresolved) = sampler_law(&p, "", 8, &RunBudget::default()).unwrap();
        assert_eq!(law.values().cloned().collect::<Vec<_>>(), vec![third.clone(), third.clone(), third]);
        assert!(unresolved <= ratio(1, 256));
    }
}
