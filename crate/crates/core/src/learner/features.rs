//! Sparse binary input features for the policy network.
//!
//! The view contributes 3 active units per cell (type, color and extra
//! one-hots); heard lines contribute presence bits over the NPC reply
//! vocabulary and the three speaker names, accumulated over the episode.

use crate::grammar::HeardLine;
use crate::npc::{parse_reply, ReplyContent, GUIDE_NAMES, WIZARD_NAME};
use crate::world::{Color, Observation, VIEW_SIZE};

const TYPE_VALUES: usize = 12;
const COLOR_VALUES: usize = 6;
const EXTRA_VALUES: usize = 2;
const CELL_DIM: usize = TYPE_VALUES + COLOR_VALUES + EXTRA_VALUES;
pub const VIEW_DIM: usize = VIEW_SIZE * VIEW_SIZE * CELL_DIM;

/// "Ask Jack.", "Ask John." from the wizard, then "Go to the <color> door."
/// for each guide name and color.
pub const REPLY_DIM: usize = 2 + GUIDE_NAMES.len() * 6;
pub const SPEAKER_DIM: usize = 3;
pub const BAG_DIM: usize = REPLY_DIM + SPEAKER_DIM;
pub const INPUT_DIM: usize = VIEW_DIM + BAG_DIM;

fn speaker_slot(speaker: &str) -> Option<usize> {
    if speaker == WIZARD_NAME {
        return Some(0);
    }
    GUIDE_NAMES.iter().position(|n| *n == speaker).map(|i| i + 1)
}

fn reply_slot(line: &HeardLine) -> Option<usize> {
    match parse_reply(&line.text)? {
        ReplyContent::Ask(name) if line.speaker == WIZARD_NAME => {
            GUIDE_NAMES.iter().position(|n| *n == name)
        }
        ReplyContent::GoTo(color) => {
            let guide = GUIDE_NAMES.iter().position(|n| *n == line.speaker)?;
            Some(2 + guide * Color::ALL.len() + color.id() as usize)
        }
        ReplyContent::Ask(_) => None,
    }
}

/// Per-episode encoder holding the bag of heard lines.
#[derive(Debug, Clone, Default)]
pub struct FeatureEncoder {
    bag: [bool; BAG_DIM],
}

impl FeatureEncoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.bag = [false; BAG_DIM];
    }

    /// Folds this observation's heard lines into the bag and returns the
    /// sorted indices of active input units.
    pub fn encode(&mut self, obs: &Observation) -> Vec<u32> {
        for line in &obs.heard {
            if let Some(s) = reply_slot(line) {
                self.bag[s] = true;
            }
            if let Some(s) = speaker_slot(&line.speaker) {
                self.bag[REPLY_DIM + s] = true;
            }
        }
        let mut active = Vec::with_capacity(VIEW_SIZE * VIEW_SIZE * 3 + BAG_DIM);
        for (row, cells) in obs.image.iter().enumerate() {
            for (col, &[ty, color, extra]) in cells.iter().enumerate() {
                let base = (row * VIEW_SIZE + col) * CELL_DIM;
                active.push((base + (ty as usize).min(TYPE_VALUES - 1)) as u32);
                active.push((base + TYPE_VALUES + (color as usize).min(COLOR_VALUES - 1)) as u32);
                active.push(
                    (base + TYPE_VALUES + COLOR_VALUES + (extra as usize).min(EXTRA_VALUES - 1))
                        as u32,
                );
            }
        }
        active.extend(
            self.bag
                .iter()
                .enumerate()
                .filter(|(_, on)| **on)
                .map(|(i, _)| (VIEW_DIM + i) as u32),
        );
        active
    }
}
