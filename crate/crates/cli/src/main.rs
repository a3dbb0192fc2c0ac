use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use machgame::cases::{build_case, run_case, CaseError};
use machgame::equilibrium::{
    check_coalition_safe, check_epsilon_nash, check_p_robust, check_strong_universal_implementation,
    check_universal_implementation, CandidateClass, EquilibriumError, EquilibriumReport, ImplementationCheck,
    SpeedupFn, SpeedupSpec,
};
use machgame::expr::Expr;
use machgame::game::file::profile_from_labels;
use machgame::game::{expected_utility, load_game, Coalition, EvalMode, GameError, LoadedGame, SampleOptions, StrategyProfile, Subject};
use machgame::mediation::MediatorSpec;
use machgame::rational::{format_rational, parse_rational};
use machgame::solver::{
    epsilon_ne_regret, induce_finite_game, lift_to_sampler_machine, solve_support_enumeration, InduceMode, SolverError,
};
use machgame::vm::to_dsl;
use machgame::Rational;

mod render;

/// Version of the structured report layout.
pub const SCHEMA_VERSION: u32 = 1;
/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "MACHGAME_THREADS";

#[derive(Parser, Debug)]
#[command(name = "machgame", version, about = "Check equilibria of Bayesian machine games")]
struct Cli {
    /// Report format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Human,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Expected utility of one player or coalition under a profile.
    EvalUtility {
        game: PathBuf,
        #[command(flatten)]
        sel: Selection,
        /// 1-based player.
        #[arg(long, default_value_t = 1, conflicts_with = "coalition")]
        player: usize,
        /// Comma-separated 1-based members.
        #[arg(long)]
        coalition: Option<String>,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// ε-Nash check over a candidate class.
    CheckNash {
        game: PathBuf,
        #[command(flatten)]
        sel: Selection,
        #[arg(long, default_value = "0/1")]
        eps: String,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// p-robust check with the deviator favored by the speedup.
    CheckRobust {
        game: PathBuf,
        #[command(flatten)]
        sel: Selection,
        #[arg(long, default_value = "0/1")]
        eps: String,
        /// Speedup p(n,t) as an expression in n and t.
        #[arg(long, default_value = "t")]
        speedup: String,
        #[arg(long)]
        homogeneous: bool,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// Coalition-safe check for the listed coalitions.
    CheckCoalition {
        game: PathBuf,
        #[command(flatten)]
        sel: Selection,
        /// Comma-separated 1-based members; repeatable.
        #[arg(long = "coalition", required = true)]
        coalitions: Vec<String>,
        #[arg(long, default_value = "0/1")]
        eps: String,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// Universal implementation of F by the protocol with F'.
    CheckUniversal(Implementation),
    /// Strong universal implementation, adding the abstention clauses.
    CheckStrongUniversal(Implementation),
    /// Equilibrium of the finite game induced by the machine list.
    Solve {
        game: PathBuf,
        /// Utilities ignore complexity; checked unless `--assume-unchecked`.
        #[arg(long, conflicts_with = "free_randomization")]
        assume_cheap: bool,
        /// Skip the check that utilities ignore complexity.
        #[arg(long, requires = "assume_cheap")]
        assume_unchecked: bool,
        /// Actions are the base machines charged their own complexity.
        #[arg(long)]
        free_randomization: bool,
        /// Comma-separated base machine labels (default: all).
        #[arg(long)]
        base: Option<String>,
        /// Use regret matching with this ε instead of exact support enumeration.
        #[arg(long)]
        regret_eps: Option<String>,
        #[arg(long, default_value_t = 200_000)]
        iteration_cap: u64,
        /// Also emit the sampler machines in DSL form.
        #[arg(long)]
        lift: bool,
    },
    /// Build a case study, run its checks and compare with expectations.
    /// Parameters follow as `--key value` or `key=value`.
    RunCase {
        name: String,
        /// Write the built case as a game file.
        #[arg(long)]
        export: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        params: Vec<String>,
    },
    /// Load and validate a game file.
    Validate { game: PathBuf },
}

#[derive(Args, Debug)]
struct Selection {
    /// Named profile from the game file (default: the first).
    #[arg(long, conflicts_with = "machines")]
    profile: Option<String>,
    /// Comma-separated machine labels, one per player.
    #[arg(long)]
    machines: Option<String>,
    /// Comma-separated labels of the candidate class (default: every machine in the file).
    #[arg(long)]
    class: Option<String>,
}

#[derive(Args, Debug)]
struct ModeArgs {
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    mode: Mode,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 10_000)]
    samples: u64,
    #[arg(long, default_value_t = 0.99)]
    confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Exact,
    Sampled,
}

#[derive(Args, Debug)]
struct Implementation {
    /// Game files of the family; the first one's mediator is F.
    #[arg(required = true)]
    family: Vec<PathBuf>,
    /// Profile of the first game file used as the protocol.
    #[arg(long)]
    protocol: String,
    /// TOML file with the mediator F' (default: F).
    #[arg(long)]
    f_prime: Option<PathBuf>,
    /// Comma-separated 1-based members; repeatable (default: every singleton).
    #[arg(long = "coalition")]
    coalitions: Vec<String>,
    #[arg(long, default_value_t = 2)]
    subset_cap: usize,
    #[arg(long, default_value = "0/1")]
    eps: String,
    #[arg(long, default_value = "t")]
    speedup: String,
    /// Comma-separated labels of the candidate class (default: every machine in each file).
    #[arg(long)]
    class: Option<String>,
    #[command(flatten)]
    mode: ModeArgs,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{}: {}", game_kind(.0), .0)]
    Game(#[from] GameError),
    #[error("{}: {}", equilibrium_kind(.0), .0)]
    Equilibrium(#[from] EquilibriumError),
    #[error("{}: {}", solver_kind(.0), .0)]
    Solver(#[from] SolverError),
    #[error("{}: {}", case_kind(.0), .0)]
    Case(#[from] CaseError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn game_kind(e: &GameError) -> &'static str {
    match e {
        GameError::Schema(_) => "Schema",
        GameError::ProbabilityNotOne(_) => "ProbabilityNotOne",
        GameError::Complexity(_) => "Complexity",
        GameError::ExactModeOverflow { .. } => "ExactModeOverflow",
        GameError::ResidualTooLarge { .. } => "ResidualTooLarge",
        GameError::Run(_) => "Run",
        GameError::Mediation(_) => "Mediation",
        GameError::Utility(_) => "Utility",
        GameError::NotNormalized => "NotNormalized",
        GameError::Profile(_) => "Profile",
        GameError::Coalition(_) => "Coalition",
    }
}

fn equilibrium_kind(e: &EquilibriumError) -> &'static str {
    match e {
        EquilibriumError::Game(g) => game_kind(g),
        EquilibriumError::ModeAssumptionViolated(_) => "ModeAssumptionViolated",
        EquilibriumError::Speedup(_) => "Speedup",
    }
}

fn solver_kind(e: &SolverError) -> &'static str {
    match e {
        SolverError::Invalid(_) => "Invalid",
        SolverError::NotComputationallyCheap(_) => "NotComputationallyCheap",
        SolverError::SizeLimit(_) => "SizeLimit",
        SolverError::Unsupported(_) => "Unsupported",
        SolverError::NoEquilibriumInSupports => "NoEquilibriumInSupports",
        SolverError::IterationCapExceeded { .. } => "IterationCapExceeded",
        SolverError::Game(g) => game_kind(g),
    }
}

fn case_kind(e: &CaseError) -> &'static str {
    match e {
        CaseError::UnknownCase(_) => "UnknownCase",
        CaseError::Parameter { .. } => "Parameter",
        CaseError::Game(g) => game_kind(g),
        CaseError::Equilibrium(e) => equilibrium_kind(e),
        CaseError::Solver(e) => solver_kind(e),
    }
}

/// Outcome of one command: the report and whether its verdict holds.
struct Outcome {
    command: &'static str,
    result: Value,
    holds: bool,
}

fn rational(name: &str, s: &str) -> Result<Rational, CliError> {
    parse_rational(s).map_err(|e| CliError::Usage(format!("--{name}: {e}")))
}

fn labels(s: &str) -> Vec<String> {
    s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()
}

fn coalition(s: &str) -> Result<Coalition, CliError> {
    let members = s
        .split(',')
        .map(|x| x.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::Usage(format!("coalition {s:?} must list 1-based players")))?;
    Coalition::from_one_based(&members).ok_or_else(|| CliError::Usage(format!("coalition {s:?} must list 1-based players")))
}

fn eval_mode(m: &ModeArgs) -> Result<EvalMode, CliError> {
    match m.mode {
        Mode::Exact => Ok(EvalMode::Exact),
        Mode::Sampled => {
            let seed = m.seed.ok_or_else(|| CliError::Usage("sampled mode needs --seed".into()))?;
            if m.samples == 0 || !(0.0..1.0).contains(&m.confidence) || m.confidence <= 0.0 {
                return Err(CliError::Usage("need --samples > 0 and 0 < --confidence < 1".into()));
            }
            Ok(EvalMode::Sampled(SampleOptions { seed, samples: m.samples, confidence: m.confidence }))
        }
    }
}

fn profile(loaded: &LoadedGame, sel: &Selection) -> Result<StrategyProfile, CliError> {
    if let Some(ms) = &sel.machines {
        return Ok(profile_from_labels(&loaded.game, &labels(ms))?);
    }
    match &sel.profile {
        Some(name) => loaded.profile(name).cloned().ok_or_else(|| CliError::Usage(format!("no profile named {name:?}"))),
        None => loaded
            .profiles
            .first()
            .map(|(_, p)| p.clone())
            .ok_or_else(|| CliError::Usage("the game file has no profiles; pass --profile or --machines".into())),
    }
}

fn class(loaded: &LoadedGame, only: Option<&str>) -> Result<CandidateClass, CliError> {
    let ms = match only {
        None => loaded.game.machines.clone(),
        Some(s) => labels(s)
            .iter()
            .map(|l| {
                loaded.game.machine(l).cloned().ok_or_else(|| CliError::Usage(format!("class names unknown machine {l:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?,
    };
    let label = format!("{{{}}}", ms.iter().map(|m| m.label.as_str()).collect::<Vec<_>>().join(", "));
    Ok(CandidateClass::symmetric(label, &ms, loaded.game.players))
}

fn speedup(expr: &str, homogeneous: bool) -> Result<SpeedupSpec, CliError> {
    let p = if expr.trim() == "t" {
        SpeedupFn::Identity
    } else {
        SpeedupFn::Expr { expr: Expr::parse(expr).map_err(|e| CliError::Usage(format!("--speedup: {e}")))? }
    };
    let mut s = SpeedupSpec::favorable(p);
    s.homogeneous = homogeneous;
    Ok(s)
}

fn report(command: &'static str, r: EquilibriumReport) -> Result<Outcome, CliError> {
    Ok(Outcome { command, holds: r.holds, result: serde_json::to_value(&r).expect("reports serialize") })
}

fn case_params(raw: &[String]) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    let mut it = raw.iter();
    while let Some(a) = it.next() {
        if let Some(key) = a.strip_prefix("--") {
            if let Some((k, v)) = key.split_once('=') {
                out.insert(k.to_string(), v.to_string());
            } else {
                let v = it.next().ok_or_else(|| CliError::Usage(format!("--{key} needs a value")))?;
                out.insert(key.to_string(), v.clone());
            }
        } else if let Some((k, v)) = a.split_once('=') {
            out.insert(k.to_string(), v.to_string());
        } else {
            return Err(CliError::Usage(format!("unexpected case argument {a:?}")));
        }
    }
    Ok(out)
}

fn q_vec(v: &[Rational]) -> Value {
    Value::Array(v.iter().map(|x| Value::String(format_rational(x))).collect())
}

fn implementation(a: &Implementation, strong: bool) -> Result<Outcome, CliError> {
    let loaded = a.family.iter().map(|p| load_game(p)).collect::<Result<Vec<_>, _>>()?;
    let f = loaded[0]
        .game
        .mediator
        .clone()
        .ok_or_else(|| CliError::Usage("the first family game must declare its mediator F".into()))?;
    let f_prime: MediatorSpec = match &a.f_prime {
        None => f.clone(),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("--f-prime: {e}")))?
        }
    };
    let protocol = loaded[0]
        .profile(&a.protocol)
        .cloned()
        .ok_or_else(|| CliError::Usage(format!("no profile named {:?} in the first game", a.protocol)))?;
    let family: Vec<_> = loaded.iter().map(|l| l.game.clone()).collect();
    let classes = loaded.iter().map(|l| class(l, a.class.as_deref())).collect::<Result<Vec<_>, _>>()?;
    let players = family[0].players;
    let coalitions = if a.coalitions.is_empty() {
        (0..players).map(Coalition::singleton).collect()
    } else {
        a.coalitions.iter().map(|s| coalition(s)).collect::<Result<Vec<_>, _>>()?
    };
    let sp = speedup(&a.speedup, false)?;
    let eps = rational("eps", &a.eps)?;
    let chk = ImplementationCheck {
        protocol: &protocol,
        f_prime: &f_prime,
        f: &f,
        family: &family,
        classes: &classes,
        coalitions: &coalitions,
        speedup: &sp,
        epsilon: &eps,
        mode: eval_mode(&a.mode)?,
        subset_cap: a.subset_cap,
    };
    if strong {
        report("check-strong-universal", check_strong_universal_implementation(&chk)?)
    } else {
        report("check-universal", check_universal_implementation(&chk)?)
    }
}

fn dispatch(cmd: &Command) -> Result<Outcome, CliError> {
    match cmd {
        Command::EvalUtility { game, sel, player, coalition: z, mode } => {
            let loaded = load_game(game)?;
            let p = profile(&loaded, sel)?;
            let subject = match z {
                Some(s) => Subject::Coalition(coalition(s)?),
                None if *player >= 1 && *player <= loaded.game.players => Subject::Player(player - 1),
                None => return Err(CliError::Usage(format!("--player must be between 1 and {}", loaded.game.players))),
            };
            let u = expected_utility(&loaded.game, &p, &subject, eval_mode(mode)?)?;
            Ok(Outcome {
                command: "eval-utility",
                holds: true,
                result: json!({
                    "game": loaded.game.name,
                    "profile": p.labels(),
                    "subject": subject.to_string(),
                    "utility": u,
                }),
            })
        }
        Command::CheckNash { game, sel, eps, mode } => {
            let loaded = load_game(game)?;
            let p = profile(&loaded, sel)?;
            let c = class(&loaded, sel.class.as_deref())?;
            report("check-nash", check_epsilon_nash(&loaded.game, &p, &rational("eps", eps)?, &c, eval_mode(mode)?)?)
        }
        Command::CheckRobust { game, sel, eps, speedup: sp, homogeneous, mode } => {
            let loaded = load_game(game)?;
            let p = profile(&loaded, sel)?;
            let c = class(&loaded, sel.class.as_deref())?;
            let s = speedup(sp, *homogeneous)?;
            report("check-robust", check_p_robust(&loaded.game, &p, &s, &rational("eps", eps)?, &c, eval_mode(mode)?)?)
        }
        Command::CheckCoalition { game, sel, coalitions, eps, mode } => {
            let loaded = load_game(game)?;
            let p = profile(&loaded, sel)?;
            let c = class(&loaded, sel.class.as_deref())?;
            let zs = coalitions.iter().map(|s| coalition(s)).collect::<Result<Vec<_>, _>>()?;
            report(
                "check-coalition",
                check_coalition_safe(&loaded.game, &p, &zs, &rational("eps", eps)?, &c, eval_mode(mode)?)?,
            )
        }
        Command::CheckUniversal(a) => implementation(a, false),
        Command::CheckStrongUniversal(a) => implementation(a, true),
        Command::Solve { game, assume_cheap, assume_unchecked, free_randomization, base, regret_eps, iteration_cap, lift } => {
            let loaded = load_game(game)?;
            let induce = match (*assume_cheap, *free_randomization) {
                (true, false) => InduceMode::Cheap { assume: *assume_unchecked },
                (false, true) => InduceMode::FreeRandomization,
                _ => return Err(CliError::Usage("pass exactly one of --assume-cheap or --free-randomization".into())),
            };
            let base_ms = match base {
                None => loaded.game.machines.clone(),
                Some(s) => labels(s)
                    .iter()
                    .map(|l| loaded.game.machine(l).cloned().ok_or_else(|| CliError::Usage(format!("unknown machine {l:?}"))))
                    .collect::<Result<Vec<_>, _>>()?,
            };
            let (fg, machines) = induce_finite_game(&loaded.game, &base_ms, induce)?;
            let (eq, method) = match regret_eps {
                Some(e) => (epsilon_ne_regret(&fg, &rational("regret-eps", e)?, *iteration_cap)?, "regret_matching"),
                None => (solve_support_enumeration(&fg)?, "support_enumeration"),
            };
            let regrets = fg.regrets(&eq.strategies);
            let mut players = Vec::new();
            for i in 0..fg.players {
                let mut per_type = Vec::new();
                for (t, name) in fg.type_names[i].iter().enumerate() {
                    let mut entry = json!({
                        "type": name,
                        "actions": fg.actions[i],
                        "distribution": q_vec(&eq.strategies[i][t]),
                    });
                    if *lift {
                        let m = lift_to_sampler_machine(format!("sampler-p{}-t{}", i + 1, t), &eq.strategies[i][t], &machines[i])?;
                        entry["sampler"] = Value::String(to_dsl(&m));
                    }
                    per_type.push(entry);
                }
                players.push(json!({ "player": i + 1, "strategy": per_type }));
            }
            Ok(Outcome {
                command: "solve",
                holds: true,
                result: json!({
                    "game": loaded.game.name,
                    "method": method,
                    "players": players,
                    "certificate": {
                        "max_regret": format_rational(&eq.residual),
                        "regrets": q_vec(&regrets),
                    },
                }),
            })
        }
        Command::RunCase { name, export, params } => {
            let p = case_params(params)?;
            if let Some(path) = export {
                std::fs::write(path, build_case(name, &p)?.export()?)?;
            }
            let b = run_case(name, &p)?;
            Ok(Outcome { command: "run-case", holds: b.pass, result: serde_json::to_value(&b).expect("bundles serialize") })
        }
        Command::Validate { game } => {
            let loaded = load_game(game)?;
            Ok(Outcome {
                command: "validate",
                holds: true,
                result: json!({
                    "valid": true,
                    "game": loaded.game.name,
                    "players": loaded.game.players,
                    "type_profiles": loaded.game.types.len(),
                    "machines": loaded.game.machines.iter().map(|m| m.label.clone()).collect::<Vec<_>>(),
                    "profiles": loaded.profiles.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
                }),
            })
        }
    }
}

fn write_out(text: &str, output: Option<&Path>) -> Result<(), CliError> {
    match output {
        Some(p) => std::fs::write(p, text)?,
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
        }
    }
    Ok(())
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a positive integer")))?;
        if n == 0 {
            return Err(CliError::Usage(format!("{THREADS_ENV} must be a positive integer")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    configure_threads()?;
    let out = dispatch(&cli.command)?;
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": out.command,
        "holds": out.holds,
        "result": out.result,
    });
    let text = match cli.format {
        Format::Json => serde_json::to_string_pretty(&doc).expect("json") + "\n",
        Format::Human => render::human(&doc),
    };
    write_out(&text, cli.output.as_deref())?;
    Ok(out.holds)
}

/// Global options given after the case name land among the case parameters.
fn hoist_globals(cli: &mut Cli) -> Result<(), CliError> {
    let Command::RunCase { params, export, .. } = &mut cli.command else { return Ok(()) };
    let mut rest = Vec::new();
    let mut it = std::mem::take(params).into_iter();
    while let Some(a) = it.next() {
        let (key, inline) = match a.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (a.clone(), None),
        };
        if key != "--format" && key != "--output" && key != "--export" {
            rest.push(a);
            continue;
        }
        let v = match inline {
            Some(v) => v,
            None => it.next().ok_or_else(|| CliError::Usage(format!("{key} needs a value")))?,
        };
        if key == "--export" {
            *export = Some(PathBuf::from(v));
        } else if key == "--format" {
            cli.format = Format::from_str(&v, false).map_err(|e| CliError::Usage(format!("--format: {e}")))?;
        } else {
            cli.output = Some(PathBuf::from(v));
        }
    }
    *params = rest;
    Ok(())
}

fn main() -> ExitCode {
    let mut cli = Cli::parse();
    if let Err(e) = hoist_globals(&mut cli) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
