//! Agent policies: a uniform random agent, a privileged oracle that reads the
//! hidden correct door, and a social oracle that solves the task from
//! observations and dialogue alone.

use std::collections::{HashMap, HashSet, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{HeardLine, Utterance, NUM_UTTERANCES};
use crate::npc::{parse_reply, ReplyContent, WIZARD_NAME};
use crate::seeding;
use crate::world::{
    type_id, view_to_world, Action, Color, Direction, Observation, Pos, Primitive, WorldState,
    VIEW_SIZE,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AgentError {
    #[error("no path from {from:?} to {what}")]
    Unreachable { from: Pos, what: String },
}

/// What an agent gets to see on each turn. The hidden world state is only
/// reachable through [`Turn::privileged_state`].
pub struct Turn<'a> {
    pub obs: &'a Observation,
    state: &'a WorldState,
}

impl<'a> Turn<'a> {
    pub fn new(obs: &'a Observation, state: &'a WorldState) -> Self {
        Turn { obs, state }
    }

    pub fn privileged_state(&self) -> &'a WorldState {
        self.state
    }
}

pub trait Agent: Send {
    fn begin_episode(&mut self, episode_seed: u64);
    fn act(&mut self, turn: &Turn<'_>) -> Result<Action, AgentError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentKind {
    Random,
    OraclePrivileged,
    OracleSocial,
    AlwaysDone,
}

impl AgentKind {
    pub fn build(self) -> Box<dyn Agent> {
        match self {
            AgentKind::Random => Box::new(RandomAgent::new()),
            AgentKind::OraclePrivileged => Box::new(PrivilegedOracle),
            AgentKind::OracleSocial => Box::new(SocialOracle::new()),
            AgentKind::AlwaysDone => Box::new(AlwaysDone),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Random => "random",
            AgentKind::OraclePrivileged => "oracle-privileged",
            AgentKind::OracleSocial => "oracle-social",
            AgentKind::AlwaysDone => "always-done",
        }
    }
}

impl std::str::FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(AgentKind::Random),
            "oracle-privileged" => Ok(AgentKind::OraclePrivileged),
            "oracle-social" => Ok(AgentKind::OracleSocial),
            "always-done" => Ok(AgentKind::AlwaysDone),
            _ => Err(format!("unknown agent {s:?}")),
        }
    }
}

const RANDOM_AGENT_STREAM: u64 = 0x5241_4E44;

/// Uniform over the 8 x 65 joint action space.
pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new() -> Self {
        RandomAgent {
            rng: seeding::rng(0, RANDOM_AGENT_STREAM),
        }
    }
}

impl Default for RandomAgent {
    fn default() -> Self {
        Self::new()
    }
}

pub fn random_act(rng: &mut ChaCha8Rng) -> Action {
    let p = rng.gen_range(0..=Primitive::ALL.len());
    let u = rng.gen_range(0..=NUM_UTTERANCES);
    Action {
        primitive: Primitive::from_index(p),
        speech: Utterance::from_index(u).ok(),
    }
}

impl Agent for RandomAgent {
    fn begin_episode(&mut self, episode_seed: u64) {
        self.rng = seeding::rng(episode_seed, RANDOM_AGENT_STREAM);
    }

    fn act(&mut self, _turn: &Turn<'_>) -> Result<Action, AgentError> {
        Ok(random_act(&mut self.rng))
    }
}

/// Terminates every episode at once. Handy as an evaluation sanity check.
pub struct AlwaysDone;

impl Agent for AlwaysDone {
    fn begin_episode(&mut self, _episode_seed: u64) {}

    fn act(&mut self, _turn: &Turn<'_>) -> Result<Action, AgentError> {
        Ok(Action::primitive(Primitive::Done))
    }
}

/// Shortest primitive sequence from a pose to any pose satisfying `goal`,
/// by breadth-first search over (cell, heading).
pub fn plan_path(
    start: Pos,
    heading: Direction,
    walkable: impl Fn(Pos) -> bool,
    goal: impl Fn(Pos, Direction) -> bool,
) -> Option<Vec<Primitive>> {
    let mut parent: HashMap<(Pos, Direction), ((Pos, Direction), Primitive)> = HashMap::new();
    let mut seen = HashSet::from([(start, heading)]);
    let mut queue = VecDeque::from([(start, heading)]);
    while let Some((pos, dir)) = queue.pop_front() {
        if goal(pos, dir) {
            let mut actions = Vec::new();
            let mut cur = (pos, dir);
            while let Some(&(prev, a)) = parent.get(&cur) {
                actions.push(a);
                cur = prev;
            }
            actions.reverse();
            return Some(actions);
        }
        let ahead = pos.step(dir);
        let moves = [
            (Primitive::Forward, (ahead, dir), walkable(ahead)),
            (Primitive::TurnLeft, (pos, dir.left()), true),
            (Primitive::TurnRight, (pos, dir.right()), true),
        ];
        for (prim, next, ok) in moves {
            if ok && seen.insert(next) {
                parent.insert(next, ((pos, dir), prim));
                queue.push_back(next);
            }
        }
    }
    None
}

fn apply(pos: Pos, dir: Direction, prim: Primitive) -> (Pos, Direction) {
    match prim {
        Primitive::Forward => (pos.step(dir), dir),
        Primitive::TurnLeft => (pos, dir.left()),
        Primitive::TurnRight => (pos, dir.right()),
        _ => (pos, dir),
    }
}

/// Walks to the correct door's front cell and says the passphrase, arriving
/// and speaking in the same step when possible.
pub struct PrivilegedOracle;

impl PrivilegedOracle {
    pub fn decide(state: &WorldState) -> Result<Action, AgentError> {
        let target = state.doors[state.correct_door].front();
        if state.agent_pos == target {
            return Ok(Action::say(Utterance::OPEN_SESAME));
        }
        let plan = plan_path(
            state.agent_pos,
            state.agent_dir,
            |p| state.is_walkable(p),
            |p, _| p == target,
        )
        .ok_or(AgentError::Unreachable {
            from: state.agent_pos,
            what: format!("door {}", state.correct_door),
        })?;
        let first = plan[0];
        let (next, _) = apply(state.agent_pos, state.agent_dir, first);
        let speech = (next == target).then_some(Utterance::OPEN_SESAME);
        Ok(Action::new(Some(first), speech))
    }
}

impl Agent for PrivilegedOracle {
    fn begin_episode(&mut self, _episode_seed: u64) {}

    fn act(&mut self, turn: &Turn<'_>) -> Result<Action, AgentError> {
        Self::decide(turn.privileged_state())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    SeekWizard,
    AskWizard,
    SeekGuide,
    AskGuide,
    SeekDoor,
    SayPassphrase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleMemory {
    pub phase: Phase,
    pub target_name: Option<String>,
    pub target_color: Option<Color>,
    /// Guide cells already asked, in the oracle's own frame.
    pub visited_guides: Vec<Pos>,
    /// Cells along the current plan, in the oracle's own frame.
    pub path: Vec<Pos>,
    /// Latest answer of every guide heard so far, by name.
    pub claims: Vec<(String, Color)>,
}

impl Default for OracleMemory {
    fn default() -> Self {
        OracleMemory {
            phase: Phase::SeekWizard,
            target_name: None,
            target_color: None,
            visited_guides: Vec::new(),
            path: Vec::new(),
            claims: Vec::new(),
        }
    }
}

/// Solves the task from the observation stream only.
///
/// The oracle keeps a map in its own frame (start cell at the origin, start
/// heading called North) built by dead reckoning: the cell ahead is always in
/// view, so whether a forward move succeeds is known before it is taken.
#[derive(Debug, Clone, Default)]
pub struct SocialOracle {
    pub memory: OracleMemory,
    map: HashMap<Pos, [u8; 3]>,
    pos: Pos,
    dir: Direction,
    /// Every utterance this oracle emitted this episode, in order.
    pub spoken: Vec<Utterance>,
    /// Every line it heard, in order.
    pub heard: Vec<HeardLine>,
}

enum Goal {
    Npc(Pos),
    Door(Pos),
}

impl SocialOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset_memory(&mut self) {
        *self = Self::default();
    }

    fn known_walkable(&self, p: Pos) -> bool {
        matches!(
            self.map.get(&p).map(|c| c[0]),
            Some(type_id::FLOOR | type_id::AGENT)
        )
    }

    fn integrate_view(&mut self, obs: &Observation) {
        for (row, cells) in obs.image.iter().enumerate() {
            for (col, cell) in cells.iter().enumerate() {
                let p = view_to_world(self.pos, self.dir, row, col);
                let triple = if p == self.pos { [type_id::FLOOR, 0, 0] } else { *cell };
                self.map.insert(p, triple);
            }
        }
    }

    fn cells_of(&self, ty: u8, extra: u8) -> Vec<Pos> {
        let mut cells: Vec<Pos> = self
            .map
            .iter()
            .filter(|(_, c)| c[0] == ty && c[2] == extra)
            .map(|(p, _)| *p)
            .collect();
        cells.sort_by_key(|p| (p.y, p.x));
        cells
    }

    fn guides_next_to(&self, p: Pos) -> Vec<Pos> {
        self.cells_of(type_id::NPC, 1)
            .into_iter()
            .filter(|g| g.manhattan(p) == 1)
            .collect()
    }

    fn listen(&mut self, obs: &Observation) {
        for line in &obs.heard {
            self.heard.push(line.clone());
            match parse_reply(&line.text) {
                Some(ReplyContent::Ask(name)) if line.speaker == WIZARD_NAME => {
                    self.memory.target_name = Some(name);
                }
                Some(ReplyContent::GoTo(color)) => {
                    self.memory.claims.retain(|(n, _)| *n != line.speaker);
                    self.memory.claims.push((line.speaker.clone(), color));
                }
                _ => {}
            }
        }
        if self.memory.target_color.is_none() {
            if let Some(name) = &self.memory.target_name {
                self.memory.target_color = self
                    .memory
                    .claims
                    .iter()
                    .find(|(n, _)| n == name)
                    .map(|(_, c)| *c);
            }
        }
    }

    fn door_front(&self, color: Color) -> Option<Pos> {
        let door = self
            .cells_of(type_id::DOOR, 1)
            .into_iter()
            .find(|p| self.map[p][1] == color.id())?;
        door.neighbors().into_iter().find(|n| self.known_walkable(*n))
    }

    fn goal_reached(&self, goal: &Goal, p: Pos) -> bool {
        match goal {
            Goal::Npc(npc) => p.manhattan(*npc) == 1,
            Goal::Door(front) => p == *front,
        }
    }

    fn speech_for(goal: &Goal) -> Utterance {
        match goal {
            Goal::Npc(_) => Utterance::WHERE_IS_THE_EXIT,
            Goal::Door(_) => Utterance::OPEN_SESAME,
        }
    }

    /// Candidate goals for the current phase; empty means explore first.
    fn goals(&mut self) -> Vec<Goal> {
        if let Some(color) = self.memory.target_color {
            self.memory.phase = Phase::SeekDoor;
            return self.door_front(color).map(Goal::Door).into_iter().collect();
        }
        if self.memory.target_name.is_none() {
            self.memory.phase = Phase::SeekWizard;
            return self.cells_of(type_id::NPC, 0).into_iter().map(Goal::Npc).collect();
        }
        self.memory.phase = Phase::SeekGuide;
        self.cells_of(type_id::NPC, 1)
            .into_iter()
            .filter(|g| !self.memory.visited_guides.contains(g))
            .map(Goal::Npc)
            .collect()
    }

    fn emit(&mut self, action: Action) -> Action {
        if let Some(prim) = action.primitive {
            let (next, dir) = apply(self.pos, self.dir, prim);
            let moved = prim != Primitive::Forward || self.known_walkable(next);
            if moved {
                self.pos = next;
                self.dir = dir;
            }
        }
        if let Some(u) = action.speech {
            self.spoken.push(u);
            if u == Utterance::WHERE_IS_THE_EXIT {
                let asked = self.guides_next_to(self.pos);
                for g in asked {
                    if !self.memory.visited_guides.contains(&g) {
                        self.memory.visited_guides.push(g);
                    }
                }
                self.memory.phase = if self.memory.target_name.is_none() {
                    Phase::AskWizard
                } else {
                    Phase::AskGuide
                };
            } else if u == Utterance::OPEN_SESAME {
                self.memory.phase = Phase::SayPassphrase;
            }
        }
        action
    }

    pub fn observe_and_act(&mut self, obs: &Observation) -> Result<Action, AgentError> {
        self.integrate_view(obs);
        self.listen(obs);
        let goals = self.goals();

        if let Some(goal) = goals.iter().find(|g| self.goal_reached(g, self.pos)) {
            let speech = Self::speech_for(goal);
            self.memory.path.clear();
            return Ok(self.emit(Action::say(speech)));
        }

        // Nearest goal by plan length; ties keep the row-major order of `goals`.
        let mut best: Option<(Vec<Primitive>, &Goal)> = None;
        for goal in &goals {
            let plan = plan_path(
                self.pos,
                self.dir,
                |p| self.known_walkable(p),
                |p, _| self.goal_reached(goal, p),
            );
            if let Some(plan) = plan {
                if best.as_ref().is_none_or(|(b, _)| plan.len() < b.len()) {
                    best = Some((plan, goal));
                }
            }
        }

        let (plan, speech) = match best {
            Some((plan, goal)) => {
                let (next, _) = apply(self.pos, self.dir, plan[0]);
                let arrives = plan.len() == 1 && self.goal_reached(goal, next);
                (plan, arrives.then(|| Self::speech_for(goal)))
            }
            None => (self.explore_plan()?, None),
        };
        self.memory.path = plan
            .iter()
            .scan((self.pos, self.dir), |pose, prim| {
                *pose = apply(pose.0, pose.1, *prim);
                Some(pose.0)
            })
            .collect();
        Ok(self.emit(Action::new(Some(plan[0]), speech)))
    }

    /// Unknown cells bordering known floor, i.e. unexplored parts of the room.
    fn frontier(&self) -> HashSet<Pos> {
        self.map
            .iter()
            .filter(|(_, c)| c[0] == type_id::FLOOR)
            .flat_map(|(p, _)| p.neighbors())
            .filter(|n| !self.map.contains_key(n))
            .collect()
    }

    fn explore_plan(&self) -> Result<Vec<Primitive>, AgentError> {
        let frontier = self.frontier();
        let reveals = |p: Pos, d: Direction| {
            (0..VIEW_SIZE).any(|row| {
                (0..VIEW_SIZE).any(|col| frontier.contains(&view_to_world(p, d, row, col)))
            })
        };
        plan_path(self.pos, self.dir, |p| self.known_walkable(p), reveals)
            .filter(|plan| !plan.is_empty())
            .ok_or(AgentError::Unreachable {
                from: self.pos,
                what: "unexplored cells".to_string(),
            })
    }
}

impl Agent for SocialOracle {
    fn begin_episode(&mut self, _episode_seed: u64) {
        self.reset_memory();
    }

    fn act(&mut self, turn: &Turn<'_>) -> Result<Action, AgentError> {
        self.observe_and_act(turn.obs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{EnvConfig, Variant};

    #[test]
    fn random_agent_marginals() {
        let mut rng = seeding::rng(1, 2);
        let n = 100_000;
        let mut prim = [0usize; 8];
        let mut silent = 0usize;
        for _ in 0..n {
            let a = random_act(&mut rng);
            prim[a.primitive.map_or(7, |p| p.index())] += 1;
            silent += usize::from(a.speech.is_none());
        }
        for c in prim {
            assert!((c as f64 / n as f64 - 0.125).abs() < 0.01);
        }
        assert!((silent as f64 / n as f64 - 1.0 / 65.0).abs() < 0.01);
    }

    #[test]
    fn plan_turns_and_moves() {
        let walk = |p: Pos| (1..=3).contains(&p.x) && (1..=3).contains(&p.y);
        let plan = plan_path(Pos::new(1, 1), Direction::North, walk, |p, _| p == Pos::new(3, 1)).unwrap();
        assert_eq!(plan, vec![Primitive::TurnRight, Primitive::Forward, Primitive::Forward]);
        assert!(plan_path(Pos::new(1, 1), Direction::North, walk, |p, _| p == Pos::new(9, 9)).is_none());
        assert_eq!(plan_path(Pos::new(1, 1), Direction::North, walk, |_, _| true), Some(vec![]));
    }

    #[test]
    fn privileged_oracle_at_front_cell_wins_at_t1() {
        let (mut s, _) = WorldState::reset(EnvConfig::default(), 12).unwrap();
        s.agent_pos = s.doors[s.correct_door].front();
        let a = PrivilegedOracle::decide(&s).unwrap();
        assert_eq!(a, Action::say(Utterance::OPEN_SESAME));
        let r = s.step(&a).unwrap();
        assert!(r.info.success);
        assert_eq!(r.info.t, 1);
        assert!((r.reward - 0.9775).abs() < 1e-9);
    }

    #[test]
    fn social_oracle_solves_a_few_rooms() {
        for variant in [Variant::Original, Variant::NoLiar] {
            let mut wins = 0;
            for seed in 0..50 {
                let (mut s, mut obs) = WorldState::reset(EnvConfig::new(variant), seed).unwrap();
                let mut oracle = SocialOracle::new();
                while !s.is_done() {
                    let a = oracle.observe_and_act(&obs).unwrap();
                    if a.speech == Some(Utterance::OPEN_SESAME) {
                        assert!(oracle.memory.target_color.is_some());
                    }
                    obs = s.step(&a).unwrap().observation;
                }
                wins += usize::from(s.status == crate::world::Status::Success);
            }
            assert!(wins >= 40, "{variant}: {wins}/50");
        }
    }
}
