//! TalkItOut: a deterministic social grid-world.
//!
//! An embodied agent questions scripted NPCs through a 64-sentence templated
//! language to find which of four doors is the exit, then says the passphrase
//! in front of it. The crate provides the simulator, scripted NPCs, an
//! episodic language-novelty bonus, oracle and random agents, a small PPO
//! learner, evaluation statistics, a line-delimited JSON protocol and a CLI.

pub mod agents;
pub mod cli;
pub mod explore;
pub mod grammar;
pub mod learner;
pub mod npc;
pub mod eval;
pub mod seeding;
pub mod trajectory;
pub mod wire;
pub mod world;

pub use agents::{Agent, AgentKind, PrivilegedOracle, RandomAgent, SocialOracle, Turn};
pub use explore::{BonusConfig, EpisodicLangCounter};
pub use grammar::{HeardLine, Utterance};
pub use world::{
    Action, Color, EnvConfig, HistoryMode, Observation, Primitive, StepResult, Variant, WorldState,
};
