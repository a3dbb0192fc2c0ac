//! TOML game files.
//!
//! A file holds the game tuple with machines written in the assembly DSL,
//! either inline (`source`) or in a sibling file (`path`), plus any number
//! of named strategy profiles.
//!
//! ```toml
//! name = "matching"
//! players = 2
//! input_length = 0
//!
//! [[types]]
//! types = ["", ""]
//! prob = "1"
//!
//! [[machines]]
//! source = """
//! label: heads
//! registers: 0
//! EMIT "0"
//! """
//!
//! [[complexity]]
//! kind = "steps"
//!
//! [[utilities]]
//! kind = "expr"
//! expr = "if(a1 == a2, 1, 0)"
//!
//! [[profiles]]
//! name = "both-heads"
//! machines = ["heads", "heads"]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Coalition, CoalitionSpec, ExactLimits, GameError, GameSpec, StrategyProfile, TypeProfile, Utility};
use crate::complexity::ComplexityFnSpec;
use crate::mediation::MediatorSpec;
use crate::vm::{canonical_bot, parse_program, to_dsl, MachineProgram, RunBudget, BOT_LABEL};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerEntry {
    pub members: Coalition,
    pub machine: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub name: String,
    /// Machine labels, one per player; `bot` is always available.
    pub machines: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub controllers: Vec<ControllerEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameFile {
    pub name: String,
    pub players: usize,
    pub input_length: usize,
    #[serde(default)]
    pub normalized: bool,
    #[serde(default)]
    pub monotone: bool,
    #[serde(default)]
    pub budget: RunBudget,
    #[serde(default)]
    pub limits: ExactLimits,
    pub types: Vec<TypeProfile>,
    #[serde(default)]
    pub machines: Vec<MachineSource>,
    pub complexity: Vec<ComplexityFnSpec>,
    pub utilities: Vec<Utility>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coalitions: Vec<CoalitionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mediator: Option<MediatorSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub profiles: Vec<ProfileEntry>,
}

/// A validated game with its named profiles.
#[derive(Debug, Clone)]
pub struct LoadedGame {
    pub game: GameSpec,
    pub profiles: Vec<(String, StrategyProfile)>,
}

impl LoadedGame {
    pub fn profile(&self, name: &str) -> Option<&StrategyProfile> {
        self.profiles.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }
}

fn resolve(game: &GameSpec, label: &str) -> Result<MachineProgram, GameError> {
    if label == BOT_LABEL {
        return Ok(canonical_bot());
    }
    game.machine(label)
        .cloned()
        .ok_or_else(|| GameError::Schema(format!("unknown machine label {label:?}")))
}

/// Builds a profile from machine labels.
pub fn profile_from_labels(game: &GameSpec, labels: &[String]) -> Result<StrategyProfile, GameError> {
    let machines = labels.iter().map(|l| resolve(game, l)).collect::<Result<Vec<_>, _>>()?;
    let p = StrategyProfile::new(machines);
    p.validate(game.players)?;
    Ok(p)
}

impl GameFile {
    pub fn into_loaded(self, base: Option<&Path>) -> Result<LoadedGame, GameError> {
        let mut machines = Vec::with_capacity(self.machines.len());
        for m in &self.machines {
            let text = match (&m.source, &m.path) {
                (Some(s), None) => s.clone(),
                (None, Some(p)) => {
                    let full = base.map(|b| b.join(p)).unwrap_or_else(|| p.into());
                    std::fs::read_to_string(&full)
                        .map_err(|e| GameError::Schema(format!("reading {}: {e}", full.display())))?
                }
                _ => return Err(GameError::Schema("each machine needs exactly one of `source` or `path`".into())),
            };
            machines.push(parse_program(&text).map_err(|e| GameError::Schema(e.to_string()))?);
        }
        let game = GameSpec {
            name: self.name,
            players: self.players,
            input_length: self.input_length,
            types: self.types,
            machines,
            complexity: self.complexity,
            utilities: self.utilities,
            coalitions: self.coalitions,
            normalized: self.normalized,
            monotone: self.monotone,
            budget: self.budget,
            limits: self.limits,
            mediator: self.mediator,
        };
        game.validate()?;
        let mut profiles = Vec::with_capacity(self.profiles.len());
        for entry in self.profiles {
            let mut p = profile_from_labels(&game, &entry.machines)?;
            for c in &entry.controllers {
                p = p.with_controller(c.members.clone(), resolve(&game, &c.machine)?);
            }
            p.validate(game.players)?;
            profiles.push((entry.name, p));
        }
        Ok(LoadedGame { game, profiles })
    }

    pub fn from_game(game: &GameSpec, profiles: &[(String, StrategyProfile)]) -> GameFile {
        GameFile {
            name: game.name.clone(),
            players: game.players,
            input_length: game.input_length,
            normalized: game.normalized,
            monotone: game.monotone,
            budget: game.budget,
            limits: game.limits.clone(),
            types: game.types.clone(),
            machines: game.machines.iter().map(|m| MachineSource { source: Some(to_dsl(m)), path: None }).collect(),
            complexity: game.complexity.clone(),
            utilities: game.utilities.clone(),
            coalitions: game.coalitions.clone(),
            mediator: game.mediator.clone(),
            profiles: profiles
                .iter()
                .map(|(name, p)| ProfileEntry {
                    name: name.clone(),
                    machines: p.labels(),
                    controllers: p
                        .coalition_overrides
                        .iter()
                        .map(|(z, m)| ControllerEntry { members: z.clone(), machine: m.label.clone() })
                        .collect(),
                })
                .collect(),
        }
    }
}

pub fn parse_game(text: &str, base: Option<&Path>) -> Result<LoadedGame, GameError> {
    let file: GameFile = toml::from_str(text).map_err(|e| GameError::Schema(e.to_string()))?;
    file.into_loaded(base)
}

pub fn load_game(path: &Path) -> Result<LoadedGame, GameError> {
    let text = std::fs::read_to_string(path).map_err(|e| GameError::Schema(format!("reading {}: {e}", path.display())))?;
    parse_game(&text, path.parent())
}

/// Serializes a game and profiles back to TOML. Profile machines must be
/// in the game's machine list (or be `bot`) to load again.
pub fn export_game(game: &GameSpec, profiles: &[(String, StrategyProfile)]) -> Result<String, GameError> {
    toml::to_string(&GameFile::from_game(game, profiles)).map_err(|e| GameError::Schema(e.to_string()))
}
