//! Writes JSONL trajectory logs for a few random and social-oracle episodes
//! to stdout.

use std::io;

use talkitout::seeding::episode_seeds;
use talkitout::trajectory::{record_episode, write_records};
use talkitout::{AgentKind, EnvConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for kind in [AgentKind::Random, AgentKind::OracleSocial] {
        for seed in episode_seeds(7, 2) {
            let mut agent = kind.build();
            let (outcome, records) = record_episode(agent.as_mut(), EnvConfig::default(), seed)?;
            write_records(&mut out, &records)?;
            eprintln!("{} seed {seed}: success={} steps={}", kind.as_str(), outcome.success, outcome.steps);
        }
    }
    Ok(())
}
