//! The episodic language bonus: first hearings earn the full scale, repeats
//! almost nothing, and counts start over every episode.

use talkitout::agents::Agent;
use talkitout::explore::{bonus, BonusConfig, EpisodicLangCounter};
use talkitout::learner::EnvWorker;
use talkitout::{EnvConfig, SocialOracle, Turn};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = BonusConfig::default();
    let mut counter = EpisodicLangCounter::new();
    for line in ["Wizard: Ask John.", "Wizard: Ask John.", "John: Go to the blue door.", "Wizard: Ask John."] {
        println!("{:<28} {:e}", line, bonus(line, &mut counter, &cfg));
    }
    counter.reset();
    println!("after reset: {:e}\n", bonus("Wizard: Ask John.", &mut counter, &cfg));

    // the same bonus inside a training environment driven by the social oracle
    let mut env = EnvWorker::new(EnvConfig::default(), Some(cfg), 42)?;
    let mut agent = SocialOracle::new();
    agent.begin_episode(0);
    loop {
        let (obs, state) = (env.obs.clone(), env.state.clone());
        let action = agent.act(&Turn::new(&obs, &state))?;
        let (result, shaped, finished) = env.step(&action)?;
        if !result.observation.heard.is_empty() {
            println!("t={:>2} {}  intrinsic {:e}", result.info.t, result.observation.heard_text, shaped.intrinsic);
        }
        if let Some(ret) = finished {
            println!("episode: success={} extrinsic={} intrinsic={}", ret.success, ret.extrinsic, ret.intrinsic);
            break;
        }
    }
    Ok(())
}
