//! Regenerates the bundled test-set files under `data/` from their master seeds.
//!
//! ```text
//! cargo run --example freeze_testsets -- crates/core/data
//! ```

use std::path::PathBuf;

use talkitout::eval::{test_set_master_seed, TestSet, TEST_SET_SIZE};
use talkitout::Variant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    for (variant, file) in [
        (Variant::Original, "testset_original.json"),
        (Variant::NoLiar, "testset_no_liar.json"),
        (Variant::DoorOnly, "testset_door_only.json"),
    ] {
        let set = TestSet::generate(variant, test_set_master_seed(variant), TEST_SET_SIZE);
        set.save(&dir.join(file))?;
        println!("{file}: {} seeds, first {}", set.seeds.len(), set.seeds[0]);
    }
    Ok(())
}
