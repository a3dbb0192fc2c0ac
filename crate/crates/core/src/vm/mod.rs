//! Metered register machine that executes strategies.

pub mod dsl;
pub mod instr;
pub mod machine;
pub mod program;

pub use dsl::{parse_program, to_dsl, DslError};
pub use instr::{ArithOp, CmpOp, Delivered, Instr, Reg, Sender};
pub use machine::{
    parse_tape, run_machine, tape_to_string, BudgetKind, Direction, EnteredComponent, Machine,
    MessageEnv, MessageRecord, RunBudget, RunError, RunMeter, RunResult, ScriptedEnv, View, Yield,
};
pub use program::{canonical_bot, max_random_bits, Component, MachineProgram, ProgramBuilder, ProgramError, BOT_LABEL};
