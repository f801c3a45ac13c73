//! Draws a few layouts and shows the map, the hidden task variables and the
//! agent's egocentric view.
//!
//! ```text
//! cargo run --example random_layouts -- [variant] [count]
//! ```

use talkitout::{EnvConfig, Variant, WorldState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let variant: Variant = args.next().as_deref().unwrap_or("original").parse()?;
    let count: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3);
    for seed in 0..count {
        let (state, obs) = WorldState::reset(EnvConfig::new(variant), seed)?;
        println!("seed {seed}: {}x{}, correct door {}", state.width, state.height, state.correct_color().name());
        for npc in &state.npcs {
            println!("  {:?} {} ({}) at {:?}", npc.kind, npc.name, npc.color.name(), npc.pos);
        }
        print!("{}", state.render_ascii());
        println!("view (type,color,extra), row 0 farthest ahead:");
        for row in obs.image.iter() {
            let cells: Vec<String> = row.iter().map(|c| format!("{},{},{}", c[0], c[1], c[2])).collect();
            println!("  {}", cells.join(" "));
        }
        println!("heard: {}\n", obs.heard_text);
    }
    Ok(())
}
