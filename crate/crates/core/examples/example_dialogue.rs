//! Finds a layout where John is the true guide and the blue door is the exit,
//! and on which the social oracle asks Jack first and Jack names the red door,
//! then prints the dialogue turn by turn.

use talkitout::trajectory::run_episode;
use talkitout::{Action, Color, EnvConfig, SocialOracle, WorldState};

/// Speech and heard lines of one oracle episode, with their step numbers.
fn dialogue(config: EnvConfig, seed: u64) -> (bool, Vec<(u32, String)>) {
    let mut lines = Vec::new();
    let mut agent = SocialOracle::new();
    let outcome = run_episode(&mut agent, config, seed, |_, result, triple| {
        let action = Action::from_triple(triple).expect("oracle actions are valid");
        if let Some(u) = action.speech {
            lines.push((result.info.t, format!("Agent: {}", u.render())));
        }
        lines.extend(result.observation.heard.iter().map(|l| (result.info.t, l.serialize())));
    })
    .expect("episode runs");
    (outcome.success, lines)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = EnvConfig::default();
    for seed in 0.. {
        let (state, _) = WorldState::reset(config, seed)?;
        if state.npcs[state.true_guide.expect("guide")].name != "John" || state.correct_color() != Color::Blue {
            continue;
        }
        let (success, lines) = dialogue(config, seed);
        if !success || lines.get(3).map(|l| l.1.as_str()) != Some("Jack: Go to the red door.") {
            continue;
        }
        println!("seed {seed}\nTrue guide: John\nCorrect door color: blue");
        print!("{}", state.render_ascii());
        for (t, line) in lines {
            println!("t={t:>2} {line}");
        }
        break;
    }
    Ok(())
}
