//! Scripted NPC dialogue.
//!
//! NPCs speak only when spoken to: a reply requires the agent to be at
//! Manhattan distance 1 and to have said "Where is the exit.". The wizard
//! names the trustworthy guide, the true guide names the correct door color,
//! and the false guide names a uniformly drawn wrong door color on every ask.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grammar::{HeardLine, Utterance};
use crate::world::Color;

pub const WIZARD_NAME: &str = "Wizard";
pub const GUIDE_NAMES: [&str; 2] = ["Jack", "John"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NpcKind {
    Wizard,
    TrueGuide,
    FalseGuide,
}

impl NpcKind {
    /// Extra channel of the view encoding: 0 for the wizard, 1 for either guide.
    pub fn extra_id(self) -> u8 {
        match self {
            NpcKind::Wizard => 0,
            NpcKind::TrueGuide | NpcKind::FalseGuide => 1,
        }
    }
}

/// Everything an NPC may consult when deciding whether and what to reply.
pub struct NpcReplyContext<'a> {
    pub heard: Utterance,
    pub speaker_adjacent: bool,
    /// Name of the NPC that is replying.
    pub name: &'a str,
    pub true_guide_name: &'a str,
    pub correct_color: Color,
    /// Colors of every door in the room, correct one included.
    pub door_colors: &'a [Color],
    pub rng: &'a mut ChaCha8Rng,
}

impl NpcReplyContext<'_> {
    fn triggered(&self) -> bool {
        self.speaker_adjacent && self.heard == Utterance::WHERE_IS_THE_EXIT
    }
}

pub fn wizard_reply(ctx: &mut NpcReplyContext<'_>) -> Option<HeardLine> {
    ctx.triggered()
        .then(|| HeardLine::new(ctx.name, ask_text(ctx.true_guide_name)))
}

pub fn true_guide_reply(ctx: &mut NpcReplyContext<'_>) -> Option<HeardLine> {
    ctx.triggered()
        .then(|| HeardLine::new(ctx.name, go_to_text(ctx.correct_color)))
}

pub fn false_guide_reply(ctx: &mut NpcReplyContext<'_>) -> Option<HeardLine> {
    if !ctx.triggered() {
        return None;
    }
    let wrong: Vec<Color> = ctx
        .door_colors
        .iter()
        .copied()
        .filter(|c| *c != ctx.correct_color)
        .collect();
    // one draw per ask, never skipped, so the episode stream stays aligned
    let color = wrong[ctx.rng.gen_range(0..wrong.len())];
    Some(HeardLine::new(ctx.name, go_to_text(color)))
}

pub fn reply(kind: NpcKind, ctx: &mut NpcReplyContext<'_>) -> Option<HeardLine> {
    match kind {
        NpcKind::Wizard => wizard_reply(ctx),
        NpcKind::TrueGuide => true_guide_reply(ctx),
        NpcKind::FalseGuide => false_guide_reply(ctx),
    }
}

pub fn ask_text(guide_name: &str) -> String {
    format!("Ask {guide_name}.")
}

pub fn go_to_text(color: Color) -> String {
    format!("Go to the {} door.", color.name())
}

/// What an NPC reply says, recovered from its text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplyContent {
    Ask(String),
    GoTo(Color),
}

pub fn parse_reply(text: &str) -> Option<ReplyContent> {
    if let Some(name) = text.strip_prefix("Ask ").and_then(|r| r.strip_suffix('.')) {
        return (!name.is_empty()).then(|| ReplyContent::Ask(name.to_string()));
    }
    let color = text
        .strip_prefix("Go to the ")
        .and_then(|r| r.strip_suffix(" door."))?;
    Color::from_name(color).map(ReplyContent::GoTo)
}
