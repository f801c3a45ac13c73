//! Drives the `serve` subcommand as a child process.

use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use talkitout::wire::{WireRequest, WireResponse};
use talkitout::world::StepInfo;
use talkitout::{Action, EnvConfig, HistoryMode, StepResult, Variant, WorldState};

struct Server {
    child: std::process::Child,
    reader: BufReader<std::process::ChildStdout>,
}

impl Server {
    fn start() -> Self {
        let mut child = Command::new(env!("CARGO_BIN_EXE_talkitout"))
            .arg("serve")
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .expect("spawn serve");
        let reader = BufReader::new(child.stdout.take().unwrap());
        Server { child, reader }
    }

    fn send_raw(&mut self, line: &str) -> String {
        let stdin = self.child.stdin.as_mut().unwrap();
        writeln!(stdin, "{line}").unwrap();
        stdin.flush().unwrap();
        let mut reply = String::new();
        self.reader.read_line(&mut reply).unwrap();
        assert!(reply.ends_with('\n'));
        reply.trim_end().to_string()
    }

    fn send(&mut self, req: &WireRequest) -> String {
        self.send_raw(&serde_json::to_string(req).unwrap())
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn initial(obs: talkitout::Observation) -> StepResult {
    StepResult { observation: obs, reward: 0.0, done: false, info: StepInfo { success: false, t: 0 } }
}

/// A 100-step random script across episode boundaries, served and replayed
/// in process, must produce identical response lines.
#[test]
fn scripted_steps_match_in_process_bit_for_bit() {
    for (variant, history) in [
        (Variant::Original, HistoryMode::Current),
        (Variant::NoLiar, HistoryMode::FullHistory),
    ] {
        let mut server = Server::start();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut seed = 7;
        let config = EnvConfig::new(variant).with_history(history);

        let (mut state, obs) = WorldState::reset(config, seed).unwrap();
        let got = server.send(&WireRequest::reset(seed, variant, history));
        assert_eq!(got, WireResponse::from_step(&initial(obs)).to_line());

        for _ in 0..100 {
            // bias toward talking so NPC replies show up
            let action = if rng.gen_bool(0.3) {
                Action::say(talkitout::grammar::Utterance::WHERE_IS_THE_EXIT)
            } else {
                talkitout::agents::random_act(&mut rng)
            };
            let triple = action.to_triple();
            let got = server.send(&WireRequest::step(triple));
            let want = state.step(&Action::from_triple(triple).unwrap()).unwrap();
            assert_eq!(got, WireResponse::from_step(&want).to_line());
            if want.done {
                seed += 1;
                let (s, obs) = WorldState::reset(config, seed).unwrap();
                state = s;
                let got = server.send(&WireRequest::reset(seed, variant, history));
                assert_eq!(got, WireResponse::from_step(&initial(obs)).to_line());
            }
        }
        assert_eq!(server.send(&WireRequest::close()), r#"{"closed":true}"#);
    }
}

#[test]
fn protocol_examples() {
    let mut server = Server::start();
    let reset: WireResponse =
        serde_json::from_str(&server.send_raw(r#"{"cmd":"reset","seed":7,"variant":"original"}"#)).unwrap();
    let obs = reset.obs.unwrap();
    assert_eq!(obs.heard_text, "NA");
    assert_eq!(obs.image.len(), 7);
    assert!(obs.image.iter().all(|row| row.len() == 7));

    let noop: WireResponse = serde_json::from_str(&server.send_raw(r#"{"cmd":"step","action":[-1,-1,-1]}"#)).unwrap();
    assert_eq!(noop.reward.as_deref(), Some("0"));
    assert_eq!(noop.done, Some(false));

    let bad: WireResponse = serde_json::from_str(&server.send_raw(r#"{"cmd":"step","action":[2,0,-1]}"#)).unwrap();
    assert_eq!(bad.error.unwrap().code, "action");
    let garbage: WireResponse = serde_json::from_str(&server.send_raw("][")).unwrap();
    assert_eq!(garbage.error.unwrap().code, "parse");

    // the session is still alive
    let ok: WireResponse = serde_json::from_str(&server.send_raw(r#"{"cmd":"step","action":[2,0,5]}"#)).unwrap();
    assert!(ok.error.is_none());
    assert_eq!(ok.info.unwrap().t, 2);
}

#[test]
fn step_before_reset_is_state_error() {
    let mut server = Server::start();
    let r: WireResponse = serde_json::from_str(&server.send_raw(r#"{"cmd":"step","action":[-1,-1,-1]}"#)).unwrap();
    assert_eq!(r.error.unwrap().code, "state");
}
