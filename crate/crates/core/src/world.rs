//! Episode state, seeded layout generation, step semantics and the egocentric
//! observation encoding.
//!
//! Coordinates are `(x, y)` with `y` growing southwards. The outer ring of the
//! grid is wall; each wall carries at most one door on a non-corner cell.
//!
//! # Layout draw order
//!
//! Every episode owns one `ChaCha8Rng` seeded with the episode seed. Layout
//! draws happen in this order, with "pick k of n" meaning a partial
//! Fisher-Yates shuffle (`for i in 0..k { swap(i, gen_range(i..n)) }`):
//!
//! 1. width, then height, each `gen_range(min_size..=max_size)`;
//! 2. door offsets along the top, right, bottom and left walls, each
//!    `gen_range(1..len-1)`; redrawn as a group while two front cells coincide;
//! 3. door colors: pick 4 of the 6 colors;
//! 4. correct door: `gen_range(0..4)`;
//! 5. guide names: pick 2 of `["Jack", "John"]`, then the true guide slot
//!    `gen_range(0..2)`;
//! 6. NPC colors: pick `num_npcs` of the 6 colors;
//! 7. placement: pick `num_npcs + 1` of the free interior cells (row-major,
//!    door front cells excluded) for the NPCs in index order and then the
//!    agent; redrawn while some door front or NPC is unreachable, and after
//!    100 failed draws everything from step 2 on is drawn again;
//! 8. agent orientation: `gen_range(0..4)` over N, E, S, W.
//!
//! The door-only debug variant uses a fixed 5x5 room: wall `gen_range(0..4)`,
//! offset along it, a green door, then steps 7 and 8.
//! The false guide's answers are drawn from the same generator afterwards.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{HeardLine, Utterance, NUM_NOUNS, NUM_TEMPLATES};
use crate::npc::{self, NpcKind, NpcReplyContext, GUIDE_NAMES, WIZARD_NAME};

pub const VIEW_SIZE: usize = 7;
pub const T_MAX: u32 = 40;
pub const NUM_DOORS: usize = 4;
pub const EMPTY_INDICATOR: &str = "NA";
const PLACEMENT_ATTEMPTS: usize = 100;

/// Type ids of the view encoding.
pub mod type_id {
    pub const UNSEEN: u8 = 0;
    pub const FLOOR: u8 = 1;
    pub const WALL: u8 = 2;
    pub const DOOR: u8 = 4;
    pub const AGENT: u8 = 10;
    pub const NPC: u8 = 11;
}

pub type Image = [[[u8; 3]; VIEW_SIZE]; VIEW_SIZE];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("episode is over; reset before stepping")]
    IllegalTransition,
    #[error("step count {t} outside 1..={t_max}")]
    StepOutOfRange { t: u32, t_max: u32 },
    #[error("invalid action {0:?}: {1}")]
    InvalidAction([i64; 3], &'static str),
    #[error("layout error: {0}")]
    Layout(String),
    #[error("unknown {kind} {value:?}")]
    Unknown { kind: &'static str, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Color {
    Red,
    Green,
    Blue,
    Purple,
    Yellow,
    Grey,
}

impl Color {
    pub const ALL: [Color; 6] = [
        Color::Red,
        Color::Green,
        Color::Blue,
        Color::Purple,
        Color::Yellow,
        Color::Grey,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Color> {
        Color::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Purple => "purple",
            Color::Yellow => "yellow",
            Color::Grey => "grey",
        }
    }

    pub fn from_name(name: &str) -> Option<Color> {
        Color::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Door glyph in the ASCII map. Grey uses `e` so it cannot clash with green.
    pub fn glyph(self) -> char {
        match self {
            Color::Red => 'r',
            Color::Green => 'g',
            Color::Blue => 'b',
            Color::Purple => 'p',
            Color::Yellow => 'y',
            Color::Grey => 'e',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Direction {
    #[default]
    North,
    East,
    South,
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::North,
        Direction::East,
        Direction::South,
        Direction::West,
    ];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::North => (0, -1),
            Direction::East => (1, 0),
            Direction::South => (0, 1),
            Direction::West => (-1, 0),
        }
    }

    pub fn right(self) -> Direction {
        Direction::ALL[(self as usize + 1) % 4]
    }

    pub fn left(self) -> Direction {
        Direction::ALL[(self as usize + 3) % 4]
    }

    pub fn glyph(self) -> char {
        match self {
            Direction::North => '^',
            Direction::East => '>',
            Direction::South => 'v',
            Direction::West => '<',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Pos {
    pub x: i32,
    pub y: i32,
}

impl Pos {
    pub const fn new(x: i32, y: i32) -> Self {
        Pos { x, y }
    }

    pub fn step(self, dir: Direction) -> Pos {
        let (dx, dy) = dir.delta();
        Pos::new(self.x + dx, self.y + dy)
    }

    pub fn manhattan(self, other: Pos) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }

    pub fn neighbors(self) -> [Pos; 4] {
        Direction::ALL.map(|d| self.step(d))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Original,
    #[serde(alias = "no_liar")]
    NoLiar,
    /// Debug room for learner sanity runs: 5x5, one green door, no NPCs.
    DoorOnly,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::NoLiar => "no-liar",
            Variant::DoorOnly => "door-only",
        }
    }

    pub fn num_npcs(self) -> usize {
        match self {
            Variant::Original => 3,
            Variant::NoLiar => 2,
            Variant::DoorOnly => 0,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = WorldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "original" => Ok(Variant::Original),
            "no-liar" | "no_liar" => Ok(Variant::NoLiar),
            "door-only" | "door_only" => Ok(Variant::DoorOnly),
            _ => Err(WorldError::Unknown {
                kind: "variant",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryMode {
    #[default]
    Current,
    FullHistory,
}

impl HistoryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            HistoryMode::Current => "current",
            HistoryMode::FullHistory => "full_history",
        }
    }
}

impl FromStr for HistoryMode {
    type Err = WorldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "current" => Ok(HistoryMode::Current),
            "full_history" | "full-history" => Ok(HistoryMode::FullHistory),
            _ => Err(WorldError::Unknown {
                kind: "history mode",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub variant: Variant,
    pub min_size: i32,
    pub max_size: i32,
    pub t_max: u32,
    pub history_mode: HistoryMode,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            variant: Variant::Original,
            min_size: 5,
            max_size: 8,
            t_max: T_MAX,
            history_mode: HistoryMode::Current,
        }
    }
}

impl EnvConfig {
    pub fn new(variant: Variant) -> Self {
        EnvConfig {
            variant,
            ..EnvConfig::default()
        }
    }

    pub fn with_history(mut self, history_mode: HistoryMode) -> Self {
        self.history_mode = history_mode;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Wall {
    Top,
    Right,
    Bottom,
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Door {
    pub pos: Pos,
    pub color: Color,
    pub wall: Wall,
}

impl Door {
    /// The interior cell orthogonally adjacent to the door.
    pub fn front(&self) -> Pos {
        let inward = match self.wall {
            Wall::Top => Direction::South,
            Wall::Right => Direction::West,
            Wall::Bottom => Direction::North,
            Wall::Left => Direction::East,
        };
        self.pos.step(inward)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Npc {
    pub pos: Pos,
    pub color: Color,
    pub kind: NpcKind,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Primitive {
    TurnLeft,
    TurnRight,
    Forward,
    Pickup,
    Drop,
    Toggle,
    Done,
}

impl Primitive {
    pub const ALL: [Primitive; 7] = [
        Primitive::TurnLeft,
        Primitive::TurnRight,
        Primitive::Forward,
        Primitive::Pickup,
        Primitive::Drop,
        Primitive::Toggle,
        Primitive::Done,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Primitive> {
        Primitive::ALL.get(i).copied()
    }
}

/// One step's worth of intent: a primitive and an utterance, either of which
/// may be absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Action {
    pub primitive: Option<Primitive>,
    pub speech: Option<Utterance>,
}

impl Action {
    pub const NOOP: Action = Action {
        primitive: None,
        speech: None,
    };

    pub fn new(primitive: Option<Primitive>, speech: Option<Utterance>) -> Self {
        Action { primitive, speech }
    }

    pub fn primitive(p: Primitive) -> Self {
        Action::new(Some(p), None)
    }

    pub fn say(u: Utterance) -> Self {
        Action::new(None, Some(u))
    }

    /// Decodes `[primitive, template, noun]` with -1 marking an undefined slot.
    /// Template and noun must be defined or undefined together.
    pub fn from_triple(triple: [i64; 3]) -> Result<Self, WorldError> {
        let [p, t, n] = triple;
        let primitive = match p {
            -1 => None,
            p if (0..Primitive::ALL.len() as i64).contains(&p) => Primitive::from_index(p as usize),
            _ => return Err(WorldError::InvalidAction(triple, "primitive out of range")),
        };
        let speech = match (t, n) {
            (-1, -1) => None,
            (-1, _) | (_, -1) => {
                return Err(WorldError::InvalidAction(
                    triple,
                    "template and noun must both be defined or both undefined",
                ))
            }
            (t, n) if (0..NUM_TEMPLATES as i64).contains(&t) && (0..NUM_NOUNS as i64).contains(&n) => {
                Some(Utterance::new(t as usize, n as usize).expect("checked range"))
            }
            _ => return Err(WorldError::InvalidAction(triple, "speech index out of range")),
        };
        Ok(Action { primitive, speech })
    }

    pub fn to_triple(self) -> [i64; 3] {
        let p = self.primitive.map_or(-1, |p| p.index() as i64);
        match self.speech {
            Some(u) => [p, u.template() as i64, u.noun() as i64],
            None => [p, -1, -1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    /// `image[row][col]`: row 0 is farthest ahead, the agent sits at row 6, col 3.
    pub image: Image,
    /// Lines heard during the step that produced this observation.
    pub heard: Vec<HeardLine>,
    pub heard_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Success,
    Failure,
}

/// Why an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Passphrase,
    WrongDoor,
    /// `toggle` or `done`.
    Terminated,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepInfo {
    pub success: bool,
    pub t: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Extrinsic reward for succeeding at step `t`: `1 - 0.9 * t / t_max`.
pub fn extrinsic_reward(t: u32, t_max: u32) -> Result<f64, WorldError> {
    if t == 0 || t > t_max {
        return Err(WorldError::StepOutOfRange { t, t_max });
    }
    Ok(1.0 - 0.9 * f64::from(t) / f64::from(t_max))
}

/// Full episode state, hidden task variables included.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub config: EnvConfig,
    pub seed: u64,
    pub width: i32,
    pub height: i32,
    pub doors: Vec<Door>,
    pub npcs: Vec<Npc>,
    pub agent_pos: Pos,
    pub agent_dir: Direction,
    pub t: u32,
    pub correct_door: usize,
    /// Index into `npcs` of the trustworthy guide (`None` in the door-only room).
    pub true_guide: Option<usize>,
    pub status: Status,
    pub end_reason: Option<EndReason>,
    pub history: Vec<HeardLine>,
    pub rng: ChaCha8Rng,
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T], k: usize) -> Vec<T> {
    let mut pool = items.to_vec();
    for i in 0..k {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

fn door_cell(wall: Wall, offset: i32, width: i32, height: i32) -> Pos {
    match wall {
        Wall::Top => Pos::new(offset, 0),
        Wall::Right => Pos::new(width - 1, offset),
        Wall::Bottom => Pos::new(offset, height - 1),
        Wall::Left => Pos::new(0, offset),
    }
}

fn wall_len(wall: Wall, width: i32, height: i32) -> i32 {
    match wall {
        Wall::Top | Wall::Bottom => width,
        Wall::Left | Wall::Right => height,
    }
}

const WALLS: [Wall; 4] = [Wall::Top, Wall::Right, Wall::Bottom, Wall::Left];

impl WorldState {
    /// Draws a fresh episode from `seed` and returns it with its first observation.
    pub fn reset(config: EnvConfig, seed: u64) -> Result<(WorldState, Observation), WorldError> {
        let state = match config.variant {
            Variant::DoorOnly => Self::generate_door_only(config, seed)?,
            _ => Self::generate(config, seed)?,
        };
        let obs = state.observe(Vec::new());
        Ok((state, obs))
    }

    fn generate(config: EnvConfig, seed: u64) -> Result<WorldState, WorldError> {
        if config.min_size < 5 || config.max_size < config.min_size {
            return Err(WorldError::Layout(format!(
                "size range {}..={} must start at 5 or more",
                config.min_size, config.max_size
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let width = rng.gen_range(config.min_size..=config.max_size);
        let height = rng.gen_range(config.min_size..=config.max_size);

        // A few 5x5 door layouts admit no solvable placement; redraw from the doors.
        loop {
            if let Some(state) = Self::try_layout(config, seed, width, height, &mut rng)? {
                return Ok(state);
            }
        }
    }

    fn try_layout(
        config: EnvConfig,
        seed: u64,
        width: i32,
        height: i32,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<WorldState>, WorldError> {
        let door_positions = loop {
            let positions: Vec<(Wall, Pos)> = WALLS
                .iter()
                .map(|&w| {
                    let off = rng.gen_range(1..wall_len(w, width, height) - 1);
                    (w, door_cell(w, off, width, height))
                })
                .collect();
            let fronts: Vec<Pos> = positions
                .iter()
                .map(|&(wall, pos)| Door { pos, color: Color::Red, wall }.front())
                .collect();
            let distinct = (0..fronts.len()).all(|i| !fronts[i + 1..].contains(&fronts[i]));
            if distinct {
                break positions;
            }
        };
        let door_colors = pick(rng, &Color::ALL, NUM_DOORS);
        let doors: Vec<Door> = door_positions
            .iter()
            .zip(&door_colors)
            .map(|(&(wall, pos), &color)| Door { pos, color, wall })
            .collect();
        let correct_door = rng.gen_range(0..NUM_DOORS);

        let names = pick(rng, &GUIDE_NAMES, 2);
        let true_slot = rng.gen_range(0..2usize);
        let mut roles: Vec<(NpcKind, &str)> = vec![(NpcKind::Wizard, WIZARD_NAME)];
        for (slot, name) in names.iter().enumerate() {
            if slot == true_slot {
                roles.push((NpcKind::TrueGuide, name));
            } else if config.variant == Variant::Original {
                roles.push((NpcKind::FalseGuide, name));
            }
        }
        let npc_colors = pick(rng, &Color::ALL, roles.len());

        let mut state = WorldState {
            config,
            seed,
            width,
            height,
            doors,
            npcs: Vec::new(),
            agent_pos: Pos::new(1, 1),
            agent_dir: Direction::North,
            t: 0,
            correct_door,
            true_guide: None,
            status: Status::Running,
            end_reason: None,
            history: Vec::new(),
            rng: rng.clone(),
        };
        let placed = state.place_entities(roles.len());
        *rng = state.rng.clone();
        let Some(cells) = placed else {
            return Ok(None);
        };
        state.npcs = roles
            .iter()
            .zip(&npc_colors)
            .zip(&cells)
            .map(|((&(kind, name), &color), &pos)| Npc {
                pos,
                color,
                kind,
                name: name.to_string(),
            })
            .collect();
        state.true_guide = state.npcs.iter().position(|n| n.kind == NpcKind::TrueGuide);
        state.agent_pos = cells[roles.len()];
        state.agent_dir = Direction::ALL[state.rng.gen_range(0..4)];
        Ok(Some(state))
    }

    fn generate_door_only(config: EnvConfig, seed: u64) -> Result<WorldState, WorldError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (width, height) = (5, 5);
        let wall = WALLS[rng.gen_range(0..4)];
        let off = rng.gen_range(1..wall_len(wall, width, height) - 1);
        let door = Door {
            pos: door_cell(wall, off, width, height),
            color: Color::Green,
            wall,
        };
        let mut state = WorldState {
            config,
            seed,
            width,
            height,
            doors: vec![door],
            npcs: Vec::new(),
            agent_pos: Pos::new(1, 1),
            agent_dir: Direction::North,
            t: 0,
            correct_door: 0,
            true_guide: None,
            status: Status::Running,
            end_reason: None,
            history: Vec::new(),
            rng,
        };
        let cells = state
            .place_entities(0)
            .ok_or_else(|| WorldError::Layout(format!("no placement for seed {seed}")))?;
        state.agent_pos = cells[0];
        state.agent_dir = Direction::ALL[state.rng.gen_range(0..4)];
        Ok(state)
    }

    /// Draws `num_npcs + 1` distinct start cells (NPCs first, agent last).
    fn place_entities(&mut self, num_npcs: usize) -> Option<Vec<Pos>> {
        let fronts: Vec<Pos> = self.doors.iter().map(Door::front).collect();
        let free: Vec<Pos> = (1..self.height - 1)
            .flat_map(|y| (1..self.width - 1).map(move |x| Pos::new(x, y)))
            .filter(|p| !fronts.contains(p))
            .collect();
        let needed = num_npcs + 1;
        assert!(
            free.len() >= needed,
            "{}x{} room leaves {} free cells for {needed} entities",
            self.width,
            self.height,
            free.len()
        );
        // Rare placements box in a door front or an NPC; those are redrawn.
        for _ in 0..PLACEMENT_ATTEMPTS {
            let cells = pick(&mut self.rng, &free, needed);
            if self.placement_is_solvable(&cells[..num_npcs], cells[num_npcs]) {
                return Some(cells);
            }
        }
        None
    }

    fn placement_is_solvable(&self, npcs: &[Pos], agent: Pos) -> bool {
        let reach = self.reachable_from(agent, |p| npcs.contains(&p));
        let ok = |p: Pos| self.is_interior(p) && reach[self.cell_index(p)];
        self.doors.iter().all(|d| ok(d.front()))
            && npcs.iter().all(|n| n.neighbors().into_iter().any(ok))
    }

    fn reachable_from(&self, start: Pos, blocked: impl Fn(Pos) -> bool) -> Vec<bool> {
        let mut seen = vec![false; (self.width * self.height) as usize];
        let mut queue = VecDeque::from([start]);
        seen[self.cell_index(start)] = true;
        while let Some(p) = queue.pop_front() {
            for n in p.neighbors() {
                if self.is_interior(n) && !blocked(n) && !seen[self.cell_index(n)] {
                    seen[self.cell_index(n)] = true;
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    fn cell_index(&self, p: Pos) -> usize {
        (p.y * self.width + p.x) as usize
    }

    pub fn in_bounds(&self, p: Pos) -> bool {
        p.x >= 0 && p.y >= 0 && p.x < self.width && p.y < self.height
    }

    pub fn is_interior(&self, p: Pos) -> bool {
        p.x >= 1 && p.y >= 1 && p.x < self.width - 1 && p.y < self.height - 1
    }

    pub fn npc_at(&self, p: Pos) -> Option<usize> {
        self.npcs.iter().position(|n| n.pos == p)
    }

    pub fn door_at(&self, p: Pos) -> Option<usize> {
        self.doors.iter().position(|d| d.pos == p)
    }

    /// The door whose front cell is `p`, if any.
    pub fn door_in_front_of(&self, p: Pos) -> Option<usize> {
        self.doors.iter().position(|d| d.front() == p)
    }

    /// Interior and unoccupied by an NPC.
    pub fn is_walkable(&self, p: Pos) -> bool {
        self.is_interior(p) && self.npc_at(p).is_none()
    }

    pub fn correct_color(&self) -> Color {
        self.doors[self.correct_door].color
    }

    pub fn is_done(&self) -> bool {
        self.status != Status::Running
    }

    /// Advances one step. Movement resolves before speech; NPC replies
    /// triggered by this step's utterance appear in the returned observation.
    pub fn step(&mut self, action: &Action) -> Result<StepResult, WorldError> {
        if self.is_done() {
            return Err(WorldError::IllegalTransition);
        }
        self.t += 1;
        let mut reward = 0.0;
        let mut heard = Vec::new();

        match action.primitive {
            Some(Primitive::TurnLeft) => self.agent_dir = self.agent_dir.left(),
            Some(Primitive::TurnRight) => self.agent_dir = self.agent_dir.right(),
            Some(Primitive::Forward) => {
                let target = self.agent_pos.step(self.agent_dir);
                if self.is_walkable(target) {
                    self.agent_pos = target;
                }
            }
            Some(Primitive::Pickup | Primitive::Drop) | None => {}
            Some(Primitive::Toggle | Primitive::Done) => self.finish(EndReason::Terminated),
        }

        if let (Some(utterance), false) = (action.speech, self.is_done()) {
            let door = self.door_in_front_of(self.agent_pos);
            match door {
                Some(door) if utterance == Utterance::OPEN_SESAME => {
                    if door == self.correct_door {
                        reward = extrinsic_reward(self.t, self.config.t_max)?;
                        self.finish(EndReason::Passphrase);
                    } else {
                        self.finish(EndReason::WrongDoor);
                    }
                }
                _ => heard = self.deliver(utterance),
            }
        }

        if !self.is_done() && self.t >= self.config.t_max {
            self.finish(EndReason::Timeout);
        }
        self.history.extend(heard.iter().cloned());

        Ok(StepResult {
            observation: self.observe(heard),
            reward,
            done: self.is_done(),
            info: StepInfo {
                success: self.status == Status::Success,
                t: self.t,
            },
        })
    }

    fn finish(&mut self, reason: EndReason) {
        self.end_reason = Some(reason);
        self.status = match reason {
            EndReason::Passphrase => Status::Success,
            _ => Status::Failure,
        };
    }

    /// Every NPC next to the agent hears the utterance and may reply, in NPC index order.
    fn deliver(&mut self, utterance: Utterance) -> Vec<HeardLine> {
        let Some(true_guide) = self.true_guide else {
            return Vec::new();
        };
        let true_guide_name = self.npcs[true_guide].name.clone();
        let correct_color = self.correct_color();
        let door_colors: Vec<Color> = self.doors.iter().map(|d| d.color).collect();
        let agent = self.agent_pos;
        let mut lines = Vec::new();
        for npc in &self.npcs {
            let mut ctx = NpcReplyContext {
                heard: utterance,
                speaker_adjacent: npc.pos.manhattan(agent) == 1,
                name: &npc.name,
                true_guide_name: &true_guide_name,
                correct_color,
                door_colors: &door_colors,
                rng: &mut self.rng,
            };
            lines.extend(npc::reply(npc.kind, &mut ctx));
        }
        lines
    }

    pub fn observe(&self, heard: Vec<HeardLine>) -> Observation {
        let heard_text = match self.config.history_mode {
            HistoryMode::Current if heard.is_empty() => EMPTY_INDICATOR.to_string(),
            HistoryMode::Current => join_lines(&heard),
            HistoryMode::FullHistory => join_lines(&self.history),
        };
        Observation {
            image: self.encode_view(),
            heard,
            heard_text,
        }
    }

    /// Encoding of a single world cell.
    pub fn cell_triple(&self, p: Pos) -> [u8; 3] {
        if !self.in_bounds(p) {
            return [type_id::UNSEEN, 0, 0];
        }
        if p == self.agent_pos {
            return [type_id::AGENT, 0, 0];
        }
        if let Some(i) = self.npc_at(p) {
            let npc = &self.npcs[i];
            return [type_id::NPC, npc.color.id(), npc.kind.extra_id()];
        }
        if let Some(i) = self.door_at(p) {
            return [type_id::DOOR, self.doors[i].color.id(), 1];
        }
        if !self.is_interior(p) {
            return [type_id::WALL, Color::Grey.id(), 0];
        }
        [type_id::FLOOR, 0, 0]
    }

    pub fn encode_view(&self) -> Image {
        let mut image = [[[0u8; 3]; VIEW_SIZE]; VIEW_SIZE];
        for (row, cells) in image.iter_mut().enumerate() {
            for (col, cell) in cells.iter_mut().enumerate() {
                *cell = self.cell_triple(view_to_world(self.agent_pos, self.agent_dir, row, col));
            }
        }
        image
    }

    pub fn render_ascii(&self) -> String {
        let mut out = String::new();
        for y in 0..self.height {
            for x in 0..self.width {
                let p = Pos::new(x, y);
                let glyph = if p == self.agent_pos {
                    self.agent_dir.glyph()
                } else if let Some(i) = self.npc_at(p) {
                    match self.npcs[i].kind {
                        NpcKind::Wizard => 'W',
                        _ => 'G',
                    }
                } else if let Some(i) = self.door_at(p) {
                    self.doors[i].color.glyph()
                } else if self.is_interior(p) {
                    '.'
                } else {
                    '#'
                };
                out.push(glyph);
            }
            out.push('\n');
        }
        let status = match self.status {
            Status::Running => "running",
            Status::Success => "success",
            Status::Failure => "failure",
        };
        out.push_str(&format!("t={}/{} status={}\n", self.t, self.config.t_max, status));
        out
    }
}

fn join_lines(lines: &[HeardLine]) -> String {
    lines
        .iter()
        .map(HeardLine::serialize)
        .collect::<Vec<_>>()
        .join(" ")
}

/// World cell shown at `image[row][col]` for an agent at `pos` facing `dir`.
pub fn view_to_world(pos: Pos, dir: Direction, row: usize, col: usize) -> Pos {
    let ahead = (VIEW_SIZE - 1 - row) as i32;
    let lateral = col as i32 - (VIEW_SIZE / 2) as i32;
    let (fx, fy) = dir.delta();
    let (rx, ry) = dir.right().delta();
    Pos::new(
        pos.x + ahead * fx + lateral * rx,
        pos.y + ahead * fy + lateral * ry,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn original(seed: u64) -> (WorldState, Observation) {
        WorldState::reset(EnvConfig::default(), seed).unwrap()
    }

    /// Moves the agent onto the correct door's front cell.
    pub(crate) fn at_correct_door(seed: u64) -> WorldState {
        let (mut s, _) = original(seed);
        s.agent_pos = s.doors[s.correct_door].front();
        s
    }

    #[test]
    fn reward_formula() {
        assert!((extrinsic_reward(40, 40).unwrap() - 0.1).abs() < 1e-12);
        assert!((extrinsic_reward(10, 40).unwrap() - 0.775).abs() < 1e-12);
        assert!((extrinsic_reward(1, 40).unwrap() - 0.9775).abs() < 1e-12);
        assert!(extrinsic_reward(0, 40).is_err());
        assert!(extrinsic_reward(41, 40).is_err());
    }

    #[test]
    fn reset_is_deterministic() {
        let (a, oa) = original(17);
        let (b, ob) = original(17);
        assert_eq!(a, b);
        assert_eq!(oa, ob);
        assert_ne!(original(18).0, a);
    }

    #[test]
    fn reset_layout_invariants() {
        for seed in 0..500 {
            for variant in [Variant::Original, Variant::NoLiar] {
                let (s, obs) = WorldState::reset(EnvConfig::new(variant), seed).unwrap();
                assert!((5..=8).contains(&s.width) && (5..=8).contains(&s.height));
                assert_eq!(s.doors.len(), 4);
                assert_eq!(s.npcs.len(), variant.num_npcs());
                let mut colors: Vec<_> = s.doors.iter().map(|d| d.color).collect();
                colors.sort();
                colors.dedup();
                assert_eq!(colors.len(), 4);
                let fronts: Vec<_> = s.doors.iter().map(Door::front).collect();
                for d in &s.doors {
                    assert!(!s.is_interior(d.pos) && s.in_bounds(d.pos));
                    assert!(s.is_interior(d.front()));
                }
                let mut cells: Vec<Pos> = s.npcs.iter().map(|n| n.pos).collect();
                cells.push(s.agent_pos);
                for c in &cells {
                    assert!(s.is_interior(*c));
                    assert!(!fronts.contains(c));
                }
                let n = cells.len();
                cells.sort();
                cells.dedup();
                assert_eq!(cells.len(), n);
                let kinds: Vec<_> = s.npcs.iter().map(|n| n.kind).collect();
                assert_eq!(kinds.iter().filter(|k| **k == NpcKind::Wizard).count(), 1);
                assert_eq!(kinds.iter().filter(|k| **k == NpcKind::TrueGuide).count(), 1);
                assert_eq!(s.t, 0);
                assert_eq!(obs.heard_text, "NA");
            }
        }
    }

    #[test]
    fn noop_step() {
        let (mut s, _) = original(1);
        let before = s.clone();
        let r = s.step(&Action::NOOP).unwrap();
        assert_eq!(r.reward, 0.0);
        assert!(!r.done);
        assert_eq!(r.info.t, 1);
        assert_eq!(s.agent_pos, before.agent_pos);
        assert_eq!(s.agent_dir, before.agent_dir);
        assert_eq!(s.npcs, before.npcs);
    }

    #[test]
    fn passphrase_at_correct_door() {
        let mut s = at_correct_door(5);
        for _ in 0..9 {
            s.step(&Action::NOOP).unwrap();
        }
        let r = s.step(&Action::say(Utterance::OPEN_SESAME)).unwrap();
        assert!(r.done && r.info.success);
        assert_eq!(r.info.t, 10);
        assert!((r.reward - 0.775).abs() < 1e-9);
        assert_eq!(s.step(&Action::NOOP), Err(WorldError::IllegalTransition));
    }

    #[test]
    fn passphrase_at_wrong_door_fails() {
        let (mut s, _) = original(5);
        let wrong = (s.correct_door + 1) % 4;
        s.agent_pos = s.doors[wrong].front();
        let r = s.step(&Action::say(Utterance::OPEN_SESAME)).unwrap();
        assert!(r.done && !r.info.success);
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn passphrase_away_from_doors_is_harmless() {
        let (mut s, _) = original(9);
        let r = s.step(&Action::say(Utterance::OPEN_SESAME)).unwrap();
        assert!(!r.done);
    }

    #[test]
    fn toggle_and_done_terminate() {
        for p in [Primitive::Toggle, Primitive::Done] {
            let (mut s, _) = original(2);
            let r = s.step(&Action::primitive(p)).unwrap();
            assert!(r.done && !r.info.success);
            assert_eq!(r.reward, 0.0);
            assert_eq!(r.info.t, 1);
        }
        let (mut s, _) = original(2);
        let before = s.clone();
        s.step(&Action::primitive(Primitive::Pickup)).unwrap();
        s.step(&Action::primitive(Primitive::Drop)).unwrap();
        assert_eq!(s.agent_pos, before.agent_pos);
        assert!(!s.is_done());
    }

    #[test]
    fn timeout_at_t_max() {
        let (mut s, _) = original(4);
        for t in 1..=40 {
            let r = s.step(&Action::NOOP).unwrap();
            assert_eq!(r.done, t == 40);
            assert_eq!(r.reward, 0.0);
        }
        assert_eq!(s.status, Status::Failure);
        assert_eq!(s.end_reason, Some(EndReason::Timeout));
    }

    #[test]
    fn success_at_last_step_still_pays() {
        let mut s = at_correct_door(6);
        for _ in 0..39 {
            s.step(&Action::NOOP).unwrap();
        }
        let r = s.step(&Action::say(Utterance::OPEN_SESAME)).unwrap();
        assert!(r.info.success);
        assert!((r.reward - 0.1).abs() < 1e-9);
    }

    #[test]
    fn forward_blocked_by_walls_and_npcs() {
        let (mut s, _) = original(11);
        // walk into the north wall
        s.agent_dir = Direction::North;
        for _ in 0..10 {
            s.step(&Action::primitive(Primitive::Forward)).unwrap();
        }
        assert_eq!(s.agent_pos.y, 1);
        // put an NPC directly ahead
        let (mut s, _) = original(11);
        let ahead = s.agent_pos.step(s.agent_dir);
        if s.is_interior(ahead) {
            s.npcs[0].pos = ahead;
            let start = s.agent_pos;
            s.step(&Action::primitive(Primitive::Forward)).unwrap();
            assert_eq!(s.agent_pos, start);
        }
    }

    #[test]
    fn wizard_answers_adjacent_question() {
        let (mut s, _) = original(21);
        let wizard = s.npcs.iter().position(|n| n.kind == NpcKind::Wizard).unwrap();
        let spot = s.npcs[wizard]
            .pos
            .neighbors()
            .into_iter()
            .find(|p| s.is_walkable(*p) && s.npcs.iter().all(|n| n.pos.manhattan(*p) != 1 || n.kind == NpcKind::Wizard))
            .expect("free spot next to wizard only");
        s.agent_pos = spot;
        let name = s.npcs[s.true_guide.unwrap()].name.clone();
        let r = s.step(&Action::say(Utterance::WHERE_IS_THE_EXIT)).unwrap();
        assert_eq!(r.observation.heard.len(), 1);
        assert_eq!(r.observation.heard_text, format!("Wizard: Ask {name}."));
        assert_eq!(s.history.len(), 1);
        // not adjacent any more: silence
        let r = s.step(&Action::say(Utterance::new(3, 1).unwrap())).unwrap();
        assert!(r.observation.heard.is_empty());
        assert_eq!(r.observation.heard_text, "NA");
    }

    #[test]
    fn full_history_channel() {
        let cfg = EnvConfig::default().with_history(HistoryMode::FullHistory);
        let (mut s, obs) = WorldState::reset(cfg, 21).unwrap();
        assert_eq!(obs.heard_text, "");
        let wizard = s.npcs[0].pos;
        s.agent_pos = wizard
            .neighbors()
            .into_iter()
            .find(|p| s.is_walkable(*p))
            .unwrap();
        s.step(&Action::say(Utterance::WHERE_IS_THE_EXIT)).unwrap();
        let r = s.step(&Action::NOOP).unwrap();
        assert!(r.observation.heard.is_empty());
        assert!(r.observation.heard_text.starts_with("Wizard: Ask "));
        assert!(!r.observation.heard_text.contains("NA"));
    }

    #[test]
    fn view_encoding_examples() {
        let (mut s, _) = original(3);
        s.npcs[0].color = Color::Blue;
        assert_eq!(s.npcs[0].kind, NpcKind::Wizard);
        assert_eq!(s.cell_triple(s.npcs[0].pos), [11, 2, 0]);
        s.npcs[1].color = Color::Blue;
        assert_eq!(s.cell_triple(s.npcs[1].pos), [11, 2, 1]);
        assert_eq!(s.cell_triple(Pos::new(-1, 0)), [0, 0, 0]);
        assert_eq!(s.cell_triple(Pos::new(0, 0)), [2, 5, 0]);
        let d = s.doors[0];
        assert_eq!(s.cell_triple(d.pos), [4, d.color.id(), 1]);
    }

    #[test]
    fn view_places_agent_rear_center() {
        let (s, obs) = original(8);
        assert_eq!(obs.image[6][3], [10, 0, 0]);
        // in a 5x5 room facing north from the bottom row, the far rows are out of bounds
        let (mut s5, _) = WorldState::reset(EnvConfig { min_size: 5, max_size: 5, ..EnvConfig::default() }, 1).unwrap();
        s5.agent_pos = Pos::new(2, 3);
        s5.agent_dir = Direction::North;
        let img = s5.encode_view();
        assert_eq!(img[0][3], [0, 0, 0]);
        assert_eq!(img[2][3], [0, 0, 0]);
        assert!([type_id::WALL, type_id::DOOR].contains(&img[3][3][0]));
        assert_eq!(img[5][3], s5.cell_triple(Pos::new(2, 2)));
        assert_eq!(img[6][0], [0, 0, 0]);
        let _ = s;
    }

    #[test]
    fn ascii_rendering() {
        let (mut s, _) = WorldState::reset(EnvConfig { min_size: 5, max_size: 5, ..EnvConfig::default() }, 2).unwrap();
        s.agent_dir = Direction::East;
        let text = s.render_ascii();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[..5].iter().all(|l| l.chars().count() == 5));
        let row = lines[s.agent_pos.y as usize];
        assert_eq!(row.chars().nth(s.agent_pos.x as usize), Some('>'));
        assert_eq!(text, s.clone().render_ascii());
        assert_eq!(lines[5], "t=0/40 status=running");
    }

    #[test]
    fn action_triples() {
        assert_eq!(Action::from_triple([-1, -1, -1]).unwrap(), Action::NOOP);
        assert!(Action::from_triple([2, 0, -1]).is_err());
        assert!(Action::from_triple([2, -1, 5]).is_err());
        assert!(Action::from_triple([7, -1, -1]).is_err());
        assert!(Action::from_triple([0, 4, 0]).is_err());
        let a = Action::from_triple([-1, 0, 5]).unwrap();
        assert_eq!(a.speech.unwrap().render(), "Where is the window.");
        assert_eq!(a.to_triple(), [-1, 0, 5]);
    }

    #[test]
    fn door_only_room() {
        let (s, _) = WorldState::reset(EnvConfig::new(Variant::DoorOnly), 9).unwrap();
        assert_eq!((s.width, s.height), (5, 5));
        assert_eq!(s.doors.len(), 1);
        assert_eq!(s.doors[0].color, Color::Green);
        assert!(s.npcs.is_empty());
        assert_ne!(s.agent_pos, s.doors[0].front());
    }
}
