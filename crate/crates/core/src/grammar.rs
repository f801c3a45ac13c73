//! Templated agent language: 4 templates x 16 nouns = 64 sentences.
//!
//! Game logic always matches on the structured [`Utterance`] pair, never on
//! rendered text, so punctuation differences cannot change behaviour.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TEMPLATES: [&str; 4] = [
    "Where is <noun>.",
    "Open <noun>.",
    "Close <noun>.",
    "What is <noun>.",
];

pub const NOUNS: [&str; 16] = [
    "sesame",
    "the exit",
    "the wall",
    "the floor",
    "the ceiling",
    "the window",
    "the entrance",
    "the closet",
    "the drawer",
    "the fridge",
    "oven",
    "the lamp",
    "the trash can",
    "the chair",
    "the bed",
    "the sofa",
];

pub const NUM_TEMPLATES: usize = TEMPLATES.len();
pub const NUM_NOUNS: usize = NOUNS.len();
pub const NUM_UTTERANCES: usize = NUM_TEMPLATES * NUM_NOUNS;

const NOUN_SLOT: &str = "<noun>";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GrammarError {
    #[error("template index {0} out of range 0..{NUM_TEMPLATES}")]
    InvalidTemplate(i64),
    #[error("noun index {0} out of range 0..{NUM_NOUNS}")]
    InvalidNoun(i64),
    #[error("utterance index {0} out of range 0..{NUM_UTTERANCES}")]
    InvalidUtterance(i64),
    #[error("not a sentence of the agent grammar: {0:?}")]
    Parse(String),
    #[error("malformed heard line: {0:?}")]
    HeardLine(String),
}

/// A sentence of the agent grammar, stored as validated `(template, noun)` indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Utterance {
    template: u8,
    noun: u8,
}

impl Utterance {
    /// "Where is the exit." -- the only question NPCs answer.
    pub const WHERE_IS_THE_EXIT: Utterance = Utterance { template: 0, noun: 1 };
    /// "Open sesame." -- the passphrase.
    pub const OPEN_SESAME: Utterance = Utterance { template: 1, noun: 0 };

    pub fn new(template: usize, noun: usize) -> Result<Self, GrammarError> {
        if template >= NUM_TEMPLATES {
            return Err(GrammarError::InvalidTemplate(template as i64));
        }
        if noun >= NUM_NOUNS {
            return Err(GrammarError::InvalidNoun(noun as i64));
        }
        Ok(Utterance {
            template: template as u8,
            noun: noun as u8,
        })
    }

    /// Template-major flat index in `0..64`.
    pub fn from_index(index: usize) -> Result<Self, GrammarError> {
        if index >= NUM_UTTERANCES {
            return Err(GrammarError::InvalidUtterance(index as i64));
        }
        Self::new(index / NUM_NOUNS, index % NUM_NOUNS)
    }

    pub fn index(self) -> usize {
        self.template as usize * NUM_NOUNS + self.noun as usize
    }

    pub fn template(self) -> usize {
        self.template as usize
    }

    pub fn noun(self) -> usize {
        self.noun as usize
    }

    pub fn all() -> impl Iterator<Item = Utterance> {
        (0..NUM_UTTERANCES).map(|i| Utterance::from_index(i).expect("index in range"))
    }

    pub fn render(self) -> String {
        TEMPLATES[self.template()].replace(NOUN_SLOT, NOUNS[self.noun()])
    }
}

impl fmt::Display for Utterance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Renders from raw indices, as they arrive over the wire or from a policy head.
pub fn render(template: usize, noun: usize) -> Result<String, GrammarError> {
    Utterance::new(template, noun).map(Utterance::render)
}

/// Inverse of [`render`] on the 64-sentence image.
pub fn parse(line: &str) -> Result<Utterance, GrammarError> {
    let line = line.trim();
    for (t, template) in TEMPLATES.iter().enumerate() {
        let (prefix, suffix) = template.split_once(NOUN_SLOT).expect("template has a slot");
        let Some(rest) = line.strip_prefix(prefix).and_then(|r| r.strip_suffix(suffix)) else {
            continue;
        };
        if let Some(n) = NOUNS.iter().position(|noun| *noun == rest) {
            return Utterance::new(t, n);
        }
    }
    Err(GrammarError::Parse(line.to_string()))
}

/// All 64 renderings, template-major.
pub fn vocabulary() -> Vec<String> {
    Utterance::all().map(Utterance::render).collect()
}

/// A line on the language channel: `"<speaker>: <text>"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HeardLine {
    pub speaker: String,
    pub text: String,
}

impl HeardLine {
    pub fn new(speaker: impl Into<String>, text: impl Into<String>) -> Self {
        HeardLine {
            speaker: speaker.into(),
            text: text.into(),
        }
    }

    pub fn serialize(&self) -> String {
        format!("{}: {}", self.speaker, self.text)
    }

    pub fn parse(line: &str) -> Result<Self, GrammarError> {
        match line.split_once(": ") {
            Some((speaker, text)) if !speaker.is_empty() && !text.is_empty() => {
                Ok(HeardLine::new(speaker, text))
            }
            _ => Err(GrammarError::HeardLine(line.to_string())),
        }
    }
}

impl fmt::Display for HeardLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.speaker, self.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn renders_table_rows() {
        assert_eq!(render(0, 1).unwrap(), "Where is the exit.");
        assert_eq!(render(1, 0).unwrap(), "Open sesame.");
        assert_eq!(render(3, 10).unwrap(), "What is oven.");
        assert_eq!(Utterance::OPEN_SESAME.render(), "Open sesame.");
    }

    #[test]
    fn rejects_out_of_range() {
        assert_eq!(render(4, 0), Err(GrammarError::InvalidTemplate(4)));
        assert_eq!(render(0, 16), Err(GrammarError::InvalidNoun(16)));
        assert!(Utterance::from_index(64).is_err());
    }

    #[test]
    fn parses_known_lines() {
        assert_eq!(parse("Where is the exit.").unwrap(), Utterance::new(0, 1).unwrap());
        assert_eq!(parse("Open sesame.").unwrap(), Utterance::OPEN_SESAME);
        assert!(matches!(parse("hello world"), Err(GrammarError::Parse(_))));
        // missing terminal period is not in the language
        assert!(parse("Open sesame").is_err());
        assert!(parse("").is_err());
    }

    #[test]
    fn vocabulary_order_and_size() {
        let vocab = vocabulary();
        assert_eq!(vocab.len(), 64);
        assert_eq!(vocab[0], "Where is sesame.");
        assert_eq!(vocab[63], "What is the sofa.");
        let distinct: HashSet<_> = vocab.iter().collect();
        assert_eq!(distinct.len(), 64);
    }

    #[test]
    fn round_trip_all() {
        for u in Utterance::all() {
            assert_eq!(parse(&u.render()).unwrap(), u);
            assert_eq!(Utterance::from_index(u.index()).unwrap(), u);
        }
    }

    #[test]
    fn heard_line_format() {
        let line = HeardLine::new("Wizard", "Ask John.");
        assert_eq!(line.serialize(), "Wizard: Ask John.");
        assert_eq!(HeardLine::parse("Jack: Go to the red door.").unwrap().speaker, "Jack");
        assert!(HeardLine::parse("no separator").is_err());
    }

    proptest! {
        #[test]
        fn parse_never_panics(s in ".*") {
            let _ = parse(&s);
        }
    }
}
