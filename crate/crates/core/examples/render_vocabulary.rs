//! Prints the 64-sentence agent language with each sentence's index and
//! `(template, noun)` pair, then parses a few lines back.

use talkitout::grammar::{parse, vocabulary, Utterance};

fn main() {
    for (i, text) in vocabulary().iter().enumerate() {
        let u = Utterance::from_index(i).expect("index in range");
        println!("{i:>2} ({}, {:>2}) {text}", u.template(), u.noun());
    }
    for line in ["Where is the exit.", "Open sesame.", "hello world"] {
        match parse(line) {
            Ok(u) => println!("{line:?} -> ({}, {})", u.template(), u.noun()),
            Err(e) => println!("{line:?} -> {e}"),
        }
    }
}
