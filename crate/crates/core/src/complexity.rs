//! Complexity functions: (machine, view) → ℕ, zero exactly on ⊥.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::vm::{canonical_bot, max_random_bits, run_machine, MachineProgram, RunBudget, RunError, RunMeter, View};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ComplexityFnSpec {
    /// Instructions executed.
    Steps,
    /// Program length.
    Size,
    /// `base` for deterministic runs, `base + surcharge` once any random bit is read.
    RandCharge { base: u64, surcharge: u64 },
    /// `base`, plus `penalty` when the machine carries state across stages.
    StateCharge { base: u64, penalty: u64 },
    /// Worst-case steps over all types of the same length and all tapes, plus size.
    WorstCasePlusSize,
    /// 1 while `steps <= threshold`, 2 beyond.
    CoarseThreshold { threshold: u64 },
    WeightedSum {
        #[serde(default)]
        base: u64,
        #[serde(default)]
        steps: u64,
        #[serde(default)]
        size: u64,
        #[serde(default)]
        rand_bits: u64,
        #[serde(default)]
        registers: u64,
        #[serde(default)]
        state_bits: u64,
        #[serde(default)]
        bits_sent: u64,
    },
    /// `constant` for programs whose label is listed, `fallback` otherwise.
    ConstantForProtocol {
        constant: u64,
        labels: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fallback: Option<Box<ComplexityFnSpec>>,
    },
    /// Charges a sampler only for the component it hands control to.
    FreeRandomization { inner: Box<ComplexityFnSpec> },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ComplexityError {
    #[error("invalid complexity spec: {0}")]
    InvalidSpec(String),
    #[error("exact enumeration needs {needed} runs, limit is {limit}")]
    ExactModeOverflow { needed: u128, limit: u128 },
    #[error(transparent)]
    Run(#[from] RunError),
}

/// What the evaluator may look at besides the meter.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    /// Length of the machine's full type (worst-case specs enumerate this length).
    pub type_len: usize,
    pub budget: RunBudget,
    /// Nature's type, exposed for user-defined extensions; no built-in kind reads it.
    pub nature_type: Option<&'a str>,
    /// Cap on runs for worst-case enumeration.
    pub enumeration_limit: u128,
}

impl Default for EvalContext<'_> {
    fn default() -> Self {
        EvalContext { type_len: 0, budget: RunBudget::default(), nature_type: None, enumeration_limit: 1 << 20 }
    }
}

impl ComplexityFnSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ComplexityFnSpec::Steps => "steps",
            ComplexityFnSpec::Size => "size",
            ComplexityFnSpec::RandCharge { .. } => "rand_charge",
            ComplexityFnSpec::StateCharge { .. } => "state_charge",
            ComplexityFnSpec::WorstCasePlusSize => "worst_case_plus_size",
            ComplexityFnSpec::CoarseThreshold { .. } => "coarse_threshold",
            ComplexityFnSpec::WeightedSum { .. } => "weighted_sum",
            ComplexityFnSpec::ConstantForProtocol { .. } => "constant_for_protocol",
            ComplexityFnSpec::FreeRandomization { .. } => "free_randomization",
        }
    }

    /// Static check that no non-⊥ machine can be assigned 0.
    pub fn check(&self) -> Result<(), ComplexityError> {
        let bad = |m: &str| Err(ComplexityError::InvalidSpec(m.to_string()));
        match self {
            ComplexityFnSpec::RandCharge { base: 0, .. } => bad("rand_charge needs base >= 1"),
            ComplexityFnSpec::StateCharge { base: 0, .. } => bad("state_charge needs base >= 1"),
            ComplexityFnSpec::WeightedSum { base: 0, steps: 0, size: 0, .. } => {
                bad("weighted_sum needs a positive base, steps or size weight")
            }
            ComplexityFnSpec::ConstantForProtocol { constant: 0, .. } => {
                bad("constant_for_protocol needs constant >= 1")
            }
            ComplexityFnSpec::ConstantForProtocol { fallback: Some(f), .. } => f.check(),
            ComplexityFnSpec::FreeRandomization { inner } => inner.check(),
            _ => Ok(()),
        }
    }

    /// True when the value depends only on the meter of this run.
    pub fn is_pointwise(&self) -> bool {
        match self {
            ComplexityFnSpec::WorstCasePlusSize => false,
            ComplexityFnSpec::ConstantForProtocol { fallback: Some(f), .. } => f.is_pointwise(),
            ComplexityFnSpec::FreeRandomization { inner } => inner.is_pointwise(),
            _ => true,
        }
    }
}

fn raw_value(
    spec: &ComplexityFnSpec,
    program: &MachineProgram,
    label: &str,
    size: u64,
    meter: &RunMeter,
    ctx: &EvalContext<'_>,
) -> Result<u64, ComplexityError> {
    Ok(match spec {
        ComplexityFnSpec::Steps => meter.steps,
        ComplexityFnSpec::Size => size,
        ComplexityFnSpec::RandCharge { base, surcharge } => {
            if meter.rand_bits > 0 {
                base + surcharge
            } else {
                *base
            }
        }
        ComplexityFnSpec::StateCharge { base, penalty } => {
            if meter.carried_state_bits > 0 {
                base + penalty
            } else {
                *base
            }
        }
        ComplexityFnSpec::WorstCasePlusSize => worst_case_complexity(program, ctx.type_len, &ctx.budget, ctx.enumeration_limit)?,
        ComplexityFnSpec::CoarseThreshold { threshold } => {
            if meter.steps <= *threshold {
                1
            } else {
                2
            }
        }
        ComplexityFnSpec::WeightedSum { base, steps, size: w_size, rand_bits, registers, state_bits, bits_sent } => {
            base + steps * meter.steps
                + w_size * size
                + rand_bits * meter.rand_bits
                + registers * meter.registers_touched
                + state_bits * meter.carried_state_bits
                + bits_sent * meter.bits_sent
        }
        ComplexityFnSpec::ConstantForProtocol { constant, labels, fallback } => {
            if labels.iter().any(|l| l == label) {
                *constant
            } else {
                match fallback {
                    Some(f) => raw_value(f, program, label, size, meter, ctx)?,
                    None => 1,
                }
            }
        }
        ComplexityFnSpec::FreeRandomization { inner } => match &meter.entered {
            Some(e) => {
                let rest = RunMeter {
                    steps: meter.steps - e.steps_before,
                    program_size: e.size,
                    rand_bits: meter.rand_bits - e.rand_before,
                    bits_sent: meter.bits_sent - e.sent_before,
                    entered: None,
                    ..meter.clone()
                };
                raw_value(inner, program, &e.label, e.size, &rest, ctx)?.max(1)
            }
            None => raw_value(inner, program, label, size, meter, ctx)?,
        },
    })
}

/// Evaluates `spec` on a halting run of `program`.
pub fn evaluate_complexity(
    spec: &ComplexityFnSpec,
    program: &MachineProgram,
    _view: &View,
    meter: &RunMeter,
    ctx: &EvalContext<'_>,
) -> Result<u64, ComplexityError> {
    if program.is_bot() {
        return Ok(0);
    }
    let v = raw_value(spec, program, &program.label, program.size(), meter, ctx)?;
    if v == 0 {
        return Err(ComplexityError::InvalidSpec(format!(
            "{} assigns 0 to non-bot machine {:?}",
            spec.kind_name(),
            program.label
        )));
    }
    Ok(v)
}

/// Maximum steps over every type of length `input_length` and every tape,
/// plus the program size. Port-using programs are measured up to their
/// first `SEND`.
pub fn worst_case_complexity(
    program: &MachineProgram,
    input_length: usize,
    budget: &RunBudget,
    limit: u128,
) -> Result<u64, ComplexityError> {
    if program.is_bot() {
        return Ok(0);
    }
    let bits = max_random_bits(program, budget);
    let needed = 1u128
        .checked_shl((input_length as u64 + bits) as u32)
        .unwrap_or(u128::MAX);
    if needed > limit {
        return Err(ComplexityError::ExactModeOverflow { needed, limit });
    }
    let mut worst = 0;
    let tapes = 1u64 << bits;
    for t in 0..(1u64 << input_length) {
        let ty: String = (0..input_length).rev().map(|k| if t >> k & 1 == 1 { '1' } else { '0' }).collect();
        for r in 0..tapes {
            let tape: Vec<bool> = (0..bits).rev().map(|k| r >> k & 1 == 1).collect();
            let mut env = crate::vm::ScriptedEnv::default();
            let ports = program.uses_ports().then_some(&mut env as &mut dyn crate::vm::MessageEnv);
            let res = run_machine(program, &ty, &tape, ports, budget)?;
            worst = worst.max(res.meter.steps);
        }
    }
    Ok(worst + program.size())
}

/// Outcome of probing a spec for the ⊥-zero law.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecValidation {
    pub accepted: bool,
    pub probes: usize,
    pub views_checked: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violation: Option<String>,
}

/// Deterministic battery of (type, tape) inputs used for probing.
pub fn probe_inputs() -> Vec<(String, Vec<bool>)> {
    let types = ["", "0", "1", "1011", "0110;01", "11111111"];
    let tapes: [&[bool]; 4] = [&[], &[false; 16], &[true; 16], &[true, false, true, true, false, false, true, false, true, true, true, false, false, true, false, true]];
    let mut out = Vec::new();
    for t in types {
        for r in tapes {
            out.push((t.to_string(), r.to_vec()));
        }
    }
    out
}

/// Checks the ⊥-zero law of `spec` on every probe program over the battery.
///
/// Runs that fail (budget, missing ports) are skipped; a probe set without ⊥
/// or without a non-⊥ program is rejected as insufficient.
pub fn validate_complexity_spec(spec: &ComplexityFnSpec, probes: &[MachineProgram]) -> SpecValidation {
    let mut report = SpecValidation { accepted: true, probes: probes.len(), views_checked: 0, violation: None };
    let fail = |mut r: SpecValidation, why: String| {
        r.accepted = false;
        r.violation = Some(why);
        r
    };
    if let Err(e) = spec.check() {
        return fail(report, e.to_string());
    }
    if !probes.iter().any(|p| p.is_bot()) || !probes.iter().any(|p| !p.is_bot()) {
        return fail(report, "probe set must contain bot and a non-bot program".into());
    }
    let budget = RunBudget::default();
    let mut seen = HashSet::new();
    for p in probes {
        if !seen.insert(p.clone()) {
            continue;
        }
        for (ty, tape) in probe_inputs() {
            let mut env = crate::vm::ScriptedEnv::default();
            let ports = p.uses_ports().then_some(&mut env as &mut dyn crate::vm::MessageEnv);
            let Ok(run) = run_machine(p, &ty, &tape, ports, &budget) else { continue };
            let ctx = EvalContext { type_len: ty.len(), budget, ..Default::default() };
            report.views_checked += 1;
            match evaluate_complexity(spec, p, &run.view, &run.meter, &ctx) {
                Ok(0) if !p.is_bot() => {
                    return fail(report, format!("{:?} evaluates to 0 on type {ty:?}", p.label));
                }
                Ok(v) if p.is_bot() && v != 0 => {
                    return fail(report, format!("bot evaluates to {v}"));
                }
                Ok(_) => {}
                Err(ComplexityError::ExactModeOverflow { .. } | ComplexityError::Run(_)) => {}
                Err(e) => return fail(report, format!("{:?}: {e}", p.label)),
            }
        }
    }
    report
}

/// Pointwise check that `fast` is at most a p-speedup of `slow`:
/// `fast ≤ slow ≤ p(fast)` on every probe program and battery input.
/// Returns the first violating (program label, fast, slow) if any.
pub fn verify_speedup(
    slow: &ComplexityFnSpec,
    fast: &ComplexityFnSpec,
    p: &dyn Fn(u64) -> u64,
    probes: &[MachineProgram],
    budget: &RunBudget,
) -> Result<Option<(String, u64, u64)>, ComplexityError> {
    let mut all = probes.to_vec();
    all.push(canonical_bot());
    for prog in &all {
        for (ty, tape) in probe_inputs() {
            let mut env = crate::vm::ScriptedEnv::default();
            let ports = prog.uses_ports().then_some(&mut env as &mut dyn crate::vm::MessageEnv);
            let Ok(run) = run_machine(prog, &ty, &tape, ports, budget) else { continue };
            let ctx = EvalContext { type_len: ty.len(), budget: *budget, ..Default::default() };
            let s = evaluate_complexity(slow, prog, &run.view, &run.meter, &ctx)?;
            let f = evaluate_complexity(fast, prog, &run.view, &run.meter, &ctx)?;
            if !(f <= s && s <= p(f)) {
                return Ok(Some((prog.label.clone(), f, s)));
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::{parse_program, Instr};

    fn constant(out: &str) -> MachineProgram {
        MachineProgram::new(format!("const-{out}"), 0, vec![Instr::Emit { lit: out.into() }, Instr::Halt])
    }

    fn meter_of(p: &MachineProgram, ty: &str, tape: &[bool]) -> (View, RunMeter) {
        let r = run_machine(p, ty, tape, None, &RunBudget::default()).unwrap();
        (r.view, r.meter)
    }

    #[test]
    fn bot_is_zero_under_every_kind() {
        let bot = canonical_bot();
        let (v, m) = meter_of(&bot, "1011", &[]);
        let specs = [
            ComplexityFnSpec::Steps,
            ComplexityFnSpec::Size,
            ComplexityFnSpec::RandCharge { base: 1, surcharge: 1 },
            ComplexityFnSpec::WorstCasePlusSize,
            ComplexityFnSpec::CoarseThreshold { threshold: 2 },
        ];
        for s in specs {
            assert_eq!(evaluate_complexity(&s, &bot, &v, &m, &EvalContext::default()).unwrap(), 0);
        }
    }

    #[test]
    fn rand_charge_separates_deterministic() {
        let spec = ComplexityFnSpec::RandCharge { base: 1, surcharge: 1 };
        let rock = constant("0");
        let (v, m) = meter_of(&rock, "", &[]);
        assert_eq!(evaluate_complexity(&spec, &rock, &v, &m, &EvalContext::default()).unwrap(), 1);
        let coin = MachineProgram::new("coin", 1, vec![Instr::ReadRand { dst: 0 }, Instr::EmitR { src: 0 }]);
        let (v, m) = meter_of(&coin, "", &[true]);
        assert_eq!(evaluate_complexity(&spec, &coin, &v, &m, &EvalContext::default()).unwrap(), 2);
    }

    #[test]
    fn worst_case_of_constant() {
        let c = constant("2");
        assert_eq!(worst_case_complexity(&c, 4, &RunBudget::default(), 1 << 20).unwrap(), 2 + 2);
        assert_eq!(worst_case_complexity(&canonical_bot(), 4, &RunBudget::default(), 1).unwrap(), 0);
    }

    #[test]
    fn overflow_is_reported() {
        let p = parse_program("label: r\nregisters: 1\nRAND r0\nRAND r0\nHALT\n").unwrap();
        let err = worst_case_complexity(&p, 4, &RunBudget::default(), 32).unwrap_err();
        assert_eq!(err, ComplexityError::ExactModeOverflow { needed: 64, limit: 32 });
    }

    #[test]
    fn constant_zero_is_rejected() {
        let spec = ComplexityFnSpec::ConstantForProtocol { constant: 0, labels: vec![], fallback: None };
        let v = validate_complexity_spec(&spec, &[canonical_bot(), constant("1")]);
        assert!(!v.accepted);
        let ok = ComplexityFnSpec::ConstantForProtocol { constant: 1, labels: vec!["lambda".into()], fallback: None };
        assert!(validate_complexity_spec(&ok, &[canonical_bot(), constant("1")]).accepted);
    }

    #[test]
    fn steps_is_a_speedup_of_doubled_steps_under_2t() {
        let slow = ComplexityFnSpec::WeightedSum { base: 0, steps: 2, size: 0, rand_bits: 0, registers: 0, state_bits: 0, bits_sent: 0 };
        let fast = ComplexityFnSpec::Steps;
        let probes = [constant("1")];
        assert_eq!(verify_speedup(&slow, &fast, &|t| 2 * t, &probes, &RunBudget::default()).unwrap(), None);
        assert!(verify_speedup(&slow, &fast, &|t| t, &probes, &RunBudget::default()).unwrap().is_some());
    }
}
