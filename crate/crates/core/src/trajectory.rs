//! JSONL trajectory logs and the episode driver shared by rollouts and evaluation.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::agents::{Agent, Turn};
use crate::world::{EndReason, EnvConfig, Observation, StepResult, WorldError, WorldState};

/// Decimal text for a reward: the shortest representation that parses back
/// to the same `f64`, `"0"` for zero.
pub fn format_reward(r: f64) -> String {
    format!("{r}")
}

/// One line of a trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub episode_seed: u64,
    pub t: u32,
    pub action: [i64; 3],
    pub heard: Vec<String>,
    pub reward: String,
    pub done: bool,
    pub success: bool,
}

impl TrajectoryRecord {
    pub fn new(episode_seed: u64, action: [i64; 3], result: &StepResult) -> Self {
        TrajectoryRecord {
            episode_seed,
            t: result.info.t,
            action,
            heard: result
                .observation
                .heard
                .iter()
                .map(|l| l.serialize())
                .collect(),
            reward: format_reward(result.reward),
            done: result.done,
            success: result.info.success,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

pub fn write_records<W: Write>(out: &mut W, records: &[TrajectoryRecord]) -> io::Result<()> {
    for r in records {
        writeln!(out, "{}", r.to_json_line())?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub seed: u64,
    pub success: bool,
    pub reward: f64,
    pub steps: u32,
    pub end_reason: Option<EndReason>,
    /// Set when the agent itself failed (e.g. an oracle found no path).
    pub error: Option<String>,
}

impl EpisodeOutcome {
    pub fn timed_out(&self) -> bool {
        self.end_reason == Some(EndReason::Timeout)
    }
}

/// Plays one episode to the end, handing every step to `on_step`.
pub fn run_episode(
    agent: &mut dyn Agent,
    config: EnvConfig,
    seed: u64,
    mut on_step: impl FnMut(&WorldState, &StepResult, [i64; 3]),
) -> Result<EpisodeOutcome, WorldError> {
    let (mut state, mut obs): (WorldState, Observation) = WorldState::reset(config, seed)?;
    agent.begin_episode(seed);
    let mut total = 0.0;
    while !state.is_done() {
        let action = match agent.act(&Turn::new(&obs, &state)) {
            Ok(a) => a,
            Err(e) => {
                return Ok(EpisodeOutcome {
                    seed,
                    success: false,
                    reward: total,
                    steps: state.t,
                    end_reason: state.end_reason,
                    error: Some(e.to_string()),
                })
            }
        };
        let result = state.step(&action)?;
        total += result.reward;
        on_step(&state, &result, action.to_triple());
        obs = result.observation;
    }
    Ok(EpisodeOutcome {
        seed,
        success: state.status == crate::world::Status::Success,
        reward: total,
        steps: state.t,
        end_reason: state.end_reason,
        error: None,
    })
}

/// Plays one episode and returns its log lines.
pub fn record_episode(
    agent: &mut dyn Agent,
    config: EnvConfig,
    seed: u64,
) -> Result<(EpisodeOutcome, Vec<TrajectoryRecord>), WorldError> {
    let mut records = Vec::new();
    let outcome = run_episode(agent, config, seed, |_, result, action| {
        records.push(TrajectoryRecord::new(seed, action, result));
    })?;
    Ok((outcome, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::AgentKind;

    #[test]
    fn reward_text() {
        assert_eq!(format_reward(0.0), "0");
        assert_eq!(format_reward(0.775), "0.775");
        let r = 1.0 - 0.9 * 7.0 / 40.0;
        assert_eq!(format_reward(r).parse::<f64>().unwrap(), r);
    }

    #[test]
    fn record_fields() {
        let mut agent = AgentKind::OraclePrivileged.build();
        let (outcome, records) = record_episode(agent.as_mut(), EnvConfig::default(), 3).unwrap();
        assert!(outcome.success);
        let last = records.last().unwrap();
        assert!(last.done && last.success);
        assert_eq!(last.t, outcome.steps);
        let line = last.to_json_line();
        assert!(line.starts_with("{\"episode_seed\":3,\"t\":"));
        assert!(!line.contains('\n'));
        let back: TrajectoryRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(&back, last);
    }
}
