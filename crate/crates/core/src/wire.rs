//! Line-delimited JSON protocol for driving episodes from another process.
//!
//! Each request line gets exactly one response line. Requests:
//!
//! ```text
//! {"cmd":"reset","seed":7,"variant":"original","history_mode":"current"}
//! {"cmd":"step","action":[2,-1,-1]}
//! {"cmd":"close"}
//! ```
//!
//! Failures answer with `{"error":{"code":..,"message":..}}` and leave the
//! session usable. Codes: `parse` for malformed or incomplete requests,
//! `action` for an illegal action triple, `state` for stepping without a
//! running episode.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::trajectory::format_reward;
use crate::world::{
    Action, EnvConfig, HistoryMode, Image, StepInfo, StepResult, Variant, WorldError, WorldState,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireRequest {
    pub cmd: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history_mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<[i64; 3]>,
}

impl WireRequest {
    pub fn reset(seed: u64, variant: Variant, history_mode: HistoryMode) -> Self {
        WireRequest {
            cmd: "reset".into(),
            seed: Some(seed),
            variant: Some(variant.as_str().into()),
            history_mode: Some(history_mode.as_str().into()),
            action: None,
        }
    }

    pub fn step(action: [i64; 3]) -> Self {
        WireRequest { cmd: "step".into(), seed: None, variant: None, history_mode: None, action: Some(action) }
    }

    pub fn close() -> Self {
        WireRequest { cmd: "close".into(), seed: None, variant: None, history_mode: None, action: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireObs {
    pub image: Image,
    pub heard: Vec<String>,
    pub heard_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireError {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WireResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obs: Option<WireObs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub done: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info: Option<StepInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<WireError>,
}

impl WireResponse {
    pub fn from_step(result: &StepResult) -> Self {
        WireResponse {
            obs: Some(WireObs {
                image: result.observation.image,
                heard: result.observation.heard.iter().map(|l| l.serialize()).collect(),
                heard_text: result.observation.heard_text.clone(),
            }),
            reward: Some(format_reward(result.reward)),
            done: Some(result.done),
            info: Some(result.info),
            ..Default::default()
        }
    }

    pub fn error(code: &str, message: impl Into<String>) -> Self {
        WireResponse {
            error: Some(WireError { code: code.into(), message: message.into() }),
            ..Default::default()
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("response serializes")
    }
}

/// One protocol session: at most one live episode.
#[derive(Debug, Default)]
pub struct Session {
    state: Option<WorldState>,
    closed: bool,
}

impl Session {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Answers one raw request line.
    pub fn handle_line(&mut self, line: &str) -> WireResponse {
        match serde_json::from_str::<WireRequest>(line) {
            Ok(req) => self.handle(&req),
            Err(e) => WireResponse::error("parse", e.to_string()),
        }
    }

    pub fn handle(&mut self, req: &WireRequest) -> WireResponse {
        match req.cmd.as_str() {
            "reset" => self.reset(req),
            "step" => self.step(req),
            "close" => {
                self.state = None;
                self.closed = true;
                WireResponse { closed: Some(true), ..Default::default() }
            }
            other => WireResponse::error("parse", format!("unknown cmd {other:?}")),
        }
    }

    fn reset(&mut self, req: &WireRequest) -> WireResponse {
        let Some(seed) = req.seed else {
            return WireResponse::error("parse", "reset needs a seed");
        };
        let variant = match req.variant.as_deref().unwrap_or("original").parse::<Variant>() {
            Ok(v) => v,
            Err(e) => return WireResponse::error("parse", e.to_string()),
        };
        let history = match req.history_mode.as_deref().unwrap_or("current").parse::<HistoryMode>() {
            Ok(h) => h,
            Err(e) => return WireResponse::error("parse", e.to_string()),
        };
        match WorldState::reset(EnvConfig::new(variant).with_history(history), seed) {
            Ok((state, obs)) => {
                let resp = WireResponse::from_step(&StepResult {
                    observation: obs,
                    reward: 0.0,
                    done: false,
                    info: StepInfo { success: false, t: 0 },
                });
                self.state = Some(state);
                resp
            }
            Err(e) => WireResponse::error("state", e.to_string()),
        }
    }

    fn step(&mut self, req: &WireRequest) -> WireResponse {
        let Some(triple) = req.action else {
            return WireResponse::error("parse", "step needs an action");
        };
        let action = match Action::from_triple(triple) {
            Ok(a) => a,
            Err(e) => return WireResponse::error("action", e.to_string()),
        };
        let Some(state) = self.state.as_mut() else {
            return WireResponse::error("state", "step before reset");
        };
        match state.step(&action) {
            Ok(result) => WireResponse::from_step(&result),
            Err(e @ WorldError::IllegalTransition) => WireResponse::error("state", e.to_string()),
            Err(e) => WireResponse::error("action", e.to_string()),
        }
    }
}

/// Reads requests until `close` or end of input, answering each on `output`.
pub fn serve<R: BufRead, W: Write>(input: R, mut output: W) -> io::Result<()> {
    let mut session = Session::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(output, "{}", session.handle_line(&line).to_line())?;
        output.flush()?;
        if session.is_closed() {
            break;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(r: &WireResponse) -> Option<&str> {
        r.error.as_ref().map(|e| e.code.as_str())
    }

    #[test]
    fn reset_then_noop() {
        let mut s = Session::new();
        let r = s.handle_line(r#"{"cmd":"reset","seed":7,"variant":"original"}"#);
        assert_eq!(r.obs.as_ref().unwrap().heard_text, "NA");
        let r = s.handle_line(r#"{"cmd":"step","action":[-1,-1,-1]}"#);
        assert_eq!(r.reward.as_deref(), Some("0"));
        assert_eq!(r.done, Some(false));
        assert_eq!(r.info.unwrap().t, 1);
    }

    #[test]
    fn error_codes() {
        let mut s = Session::new();
        assert_eq!(code(&s.handle_line("{not json")), Some("parse"));
        assert_eq!(code(&s.handle_line(r#"{"cmd":"jump"}"#)), Some("parse"));
        assert_eq!(code(&s.handle_line(r#"{"cmd":"step","action":[-1,-1,-1]}"#)), Some("state"));
        assert_eq!(code(&s.handle_line(r#"{"cmd":"reset","seed":1,"variant":"castle"}"#)), Some("parse"));
        s.handle_line(r#"{"cmd":"reset","seed":1}"#);
        assert_eq!(code(&s.handle_line(r#"{"cmd":"step","action":[2,0,-1]}"#)), Some("action"));
        assert_eq!(code(&s.handle_line(r#"{"cmd":"step","action":[9,-1,-1]}"#)), Some("action"));
        // the session survives the errors
        let r = s.handle_line(r#"{"cmd":"step","action":[2,0,5]}"#);
        assert!(r.error.is_none());
        assert_eq!(r.info.unwrap().t, 1);
    }

    #[test]
    fn step_after_done_is_state_error() {
        let mut s = Session::new();
        s.handle_line(r#"{"cmd":"reset","seed":3}"#);
        let r = s.handle_line(r#"{"cmd":"step","action":[6,-1,-1]}"#);
        assert_eq!(r.done, Some(true));
        assert_eq!(code(&s.handle_line(r#"{"cmd":"step","action":[-1,-1,-1]}"#)), Some("state"));
    }

    #[test]
    fn serve_answers_each_line_and_stops_at_close() {
        let input = "{\"cmd\":\"reset\",\"seed\":7}\n\n{\"cmd\":\"close\"}\n{\"cmd\":\"reset\",\"seed\":7}\n";
        let mut out = Vec::new();
        serve(input.as_bytes(), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], r#"{"closed":true}"#);
    }
}
