//! Trains the PPO learner on the single-door debug room and evaluates the
//! greedy policy on fresh seeds.
//!
//! ```text
//! cargo run --release --example train_door_only -- [seed] [total_steps]
//! ```

use std::time::Instant;

use talkitout::eval::{evaluate, TestSet};
use talkitout::learner::{train, PolicyAgent, TrainConfig};
use talkitout::{HistoryMode, Variant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let total_steps: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(500_000);
    let cfg = TrainConfig {
        variant: Variant::DoorOnly,
        total_steps,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let outcome = train(&cfg, seed, |p| {
        if (p.step / cfg.batch_size as u64).is_multiple_of(25) {
            println!(
                "step {:>7}  success {:.3}  return {:.3}",
                p.step, p.success_rate, p.extrinsic_return
            );
        }
    })?;
    println!("trained in {:.1}s", start.elapsed().as_secs_f64());

    let net = outcome.checkpoint.net;
    let tests = TestSet::generate(Variant::DoorOnly, seed ^ 0xD00D, 500);
    let report = evaluate("ppo", || Box::new(PolicyAgent::new(net.clone(), true)), &tests, HistoryMode::Current)?;
    println!("greedy success_rate={:.3} over {} seeds", report.success_rate, tests.seeds.len());
    Ok(())
}
