//! Command-line entry point: `play`, `rollout`, `eval`, `train`, `serve`.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::agents::{Agent, AgentKind};
use crate::eval::{evaluate, format_table, MeanStd, TableRow, TestSet};
use crate::grammar::{Utterance, NUM_UTTERANCES};
use crate::learner::{curve_csv, train, Checkpoint, PolicyAgent, TrainConfig};
use crate::seeding;
use crate::trajectory::{record_episode, write_records, EpisodeOutcome};
use crate::world::{Action, Color, EnvConfig, HistoryMode, Primitive, Variant, WorldState};

#[derive(Debug, Parser)]
#[command(name = "talkitout", version, about = "Social grid-world simulator, agents and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Step an episode by hand from the terminal.
    Play(PlayArgs),
    /// Run an agent for N episodes and write JSONL trajectories.
    Rollout(RolloutArgs),
    /// Score an agent on a fixed test set.
    Eval(EvalArgs),
    /// Train the PPO learner.
    Train(TrainArgs),
    /// Speak the JSON line protocol on stdin/stdout.
    Serve,
}

#[derive(Debug, Args)]
struct EnvArgs {
    /// original, no-liar or door-only.
    #[arg(long, default_value = "original")]
    variant: Variant,
    /// current or full-history.
    #[arg(long, default_value = "current")]
    history_mode: HistoryMode,
}

#[derive(Debug, Args)]
struct AgentArgs {
    /// random, oracle-privileged, oracle-social, always-done or ppo.
    #[arg(long, default_value = "random")]
    agent: String,
    /// Trained checkpoint, required by `--agent ppo`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlayArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    env: EnvArgs,
}

#[derive(Debug, Args)]
struct RolloutArgs {
    #[command(flatten)]
    agent: AgentArgs,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    /// Master seed; episode seeds are derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    env: EnvArgs,
    /// JSONL trajectory output.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    agent: AgentArgs,
    #[command(flatten)]
    env: EnvArgs,
    /// Test-set JSON; defaults to the frozen set of the variant.
    #[arg(long)]
    testset: Option<PathBuf>,
    /// Full report with per-episode outcomes, as JSON.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Flat `key = value` training config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Overrides the config's variant.
    #[arg(long)]
    variant: Option<Variant>,
    /// Overrides the config's step budget.
    #[arg(long)]
    total_steps: Option<u64>,
    /// Learning-curve CSV output.
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Checkpoint JSON output.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

type BoxError = Box<dyn std::error::Error + Send + Sync>;

/// Parses `args` (program name first) and runs the command on the process's
/// standard streams. Returns the exit code: 2 for usage errors, 1 for
/// runtime failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdin = io::stdin();
    let stdout = io::stdout();
    run_with(args, &mut stdin.lock(), &mut stdout.lock(), &mut io::stderr())
}

/// [`run`] over caller-supplied streams.
pub fn run_with<I, T>(args: I, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Play(a) => play(a, input, out),
        Command::Rollout(a) => rollout(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Train(a) => train_cmd(a, out),
        Command::Serve => crate::wire::serve(input, out).map_err(Into::into),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

/// Builds one agent per call, so parallel evaluation gets independent copies.
fn agent_factory(args: &AgentArgs) -> Result<Box<dyn Fn() -> Box<dyn Agent> + Sync>, BoxError> {
    if args.agent == "ppo" {
        let path = args.checkpoint.as_ref().ok_or("--agent ppo needs --checkpoint")?;
        let net = Checkpoint::load(path)?.net;
        return Ok(Box::new(move || Box::new(PolicyAgent::new(net.clone(), true))));
    }
    let kind: AgentKind = args.agent.parse()?;
    Ok(Box::new(move || kind.build()))
}

fn rollout(a: RolloutArgs, out: &mut dyn Write) -> Result<(), BoxError> {
    let make = agent_factory(&a.agent)?;
    let config = EnvConfig::new(a.env.variant).with_history(a.env.history_mode);
    let seeds = seeding::episode_seeds(a.seed, a.episodes);
    let episodes = seeds
        .par_iter()
        .map(|&seed| record_episode(make().as_mut(), config, seed))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(path) = &a.log {
        let mut file = io::BufWriter::new(fs::File::create(path)?);
        for (_, records) in &episodes {
            write_records(&mut file, records)?;
        }
        file.flush()?;
    }
    let outcomes: Vec<&EpisodeOutcome> = episodes.iter().map(|(o, _)| o).collect();
    let n = outcomes.len().max(1) as f64;
    let successes = outcomes.iter().filter(|o| o.success).count() as f64;
    let reward = outcomes.iter().map(|o| o.reward).sum::<f64>();
    writeln!(out, "success_rate={:.3}", successes / n)?;
    writeln!(out, "mean_reward={:.3}", reward / n)?;
    writeln!(out, "episodes={}", outcomes.len())?;
    Ok(())
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<(), BoxError> {
    let make = agent_factory(&a.agent)?;
    let tests = match &a.testset {
        Some(path) => TestSet::load(path)?,
        None => TestSet::frozen(a.env.variant),
    };
    let report = evaluate(&a.agent.agent, &*make, &tests, a.env.history_mode)?;
    let summary = serde_json::json!({
        "agent": report.agent,
        "variant": report.variant,
        "episodes": report.outcomes.len(),
        "success_rate": report.success_rate,
        "mean_reward": report.mean_reward,
        "timeout_rate": report.timeout_rate,
    });
    writeln!(out, "{summary}")?;
    let row = TableRow {
        condition: report.agent.clone(),
        cells: vec![Some(MeanStd { mean: report.success_rate, std: 0.0 })],
    };
    write!(out, "{}", format_table(&[tests.variant], &[row]))?;
    if let Some(path) = &a.output {
        fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn train_cmd(a: TrainArgs, out: &mut dyn Write) -> Result<(), BoxError> {
    let mut cfg = match &a.config {
        Some(path) => TrainConfig::load(path)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.variant {
        cfg.variant = v;
    }
    if let Some(n) = a.total_steps {
        cfg.total_steps = n;
    }
    let mut log_err = None;
    let outcome = train(&cfg, a.seed, |p| {
        if let Err(e) = writeln!(
            out,
            "step={} success_rate={:.3} extrinsic_return={:.4} intrinsic_return={:.4}",
            p.step, p.success_rate, p.extrinsic_return, p.intrinsic_return
        ) {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(e.into());
    }
    if let Some(path) = &a.curve {
        fs::write(path, curve_csv(&outcome.curve))?;
    }
    if let Some(path) = &a.checkpoint {
        outcome.checkpoint.save(path)?;
    }
    Ok(())
}

const HELP: &str = "keys: a=left d=right w=forward p=pickup o=drop t=toggle x=done n=nothing\n\
                    say N = utterance N (0-63), e.g. `w say 16`; v = vocabulary; q = quit";

fn ansi(color: Color) -> &'static str {
    match color {
        Color::Red => "\x1b[31m",
        Color::Green => "\x1b[32m",
        Color::Blue => "\x1b[34m",
        Color::Purple => "\x1b[35m",
        Color::Yellow => "\x1b[33m",
        Color::Grey => "\x1b[90m",
    }
}

/// ASCII frame with doors and NPCs tinted by their color.
fn frame(state: &WorldState, color: bool) -> String {
    let text = state.render_ascii();
    if !color {
        return text;
    }
    let mut tinted = String::new();
    for (y, line) in text.lines().enumerate() {
        for (x, ch) in line.chars().enumerate() {
            let p = crate::world::Pos::new(x as i32, y as i32);
            let tint = if y < state.height as usize {
                state
                    .door_at(p)
                    .map(|i| state.doors[i].color)
                    .or_else(|| state.npc_at(p).map(|i| state.npcs[i].color))
            } else {
                None
            };
            match tint {
                Some(c) => tinted.push_str(&format!("{}{ch}\x1b[0m", ansi(c))),
                None => tinted.push(ch),
            }
        }
        tinted.push('\n');
    }
    tinted
}

fn parse_play_command(line: &str) -> Result<Option<Action>, String> {
    let mut action = Action::NOOP;
    let mut words = line.split_whitespace().peekable();
    if words.peek().is_none() {
        return Err("empty command".into());
    }
    while let Some(w) = words.next() {
        let primitive = match w {
            "a" => Primitive::TurnLeft,
            "d" => Primitive::TurnRight,
            "w" => Primitive::Forward,
            "p" => Primitive::Pickup,
            "o" => Primitive::Drop,
            "t" => Primitive::Toggle,
            "x" => Primitive::Done,
            "n" => continue,
            "q" => return Ok(None),
            "say" => {
                let n: usize = words
                    .next()
                    .and_then(|n| n.parse().ok())
                    .filter(|&n| n < NUM_UTTERANCES)
                    .ok_or("say needs an utterance index 0-63")?;
                action.speech = Some(Utterance::from_index(n).expect("index checked"));
                continue;
            }
            other => return Err(format!("unknown key {other:?}")),
        };
        action.primitive = Some(primitive);
    }
    Ok(Some(action))
}

fn play(a: PlayArgs, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), BoxError> {
    let color = std::env::var_os("NO_COLOR").is_none();
    let config = EnvConfig::new(a.env.variant).with_history(a.env.history_mode);
    let (mut state, obs) = WorldState::reset(config, a.seed)?;
    writeln!(out, "{HELP}")?;
    write!(out, "{}", frame(&state, color))?;
    writeln!(out, "heard: {}", obs.heard_text)?;
    let mut line = String::new();
    while !state.is_done() {
        write!(out, "> ")?;
        out.flush()?;
        line.clear();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        if line.trim() == "v" {
            for (i, text) in crate::grammar::vocabulary().iter().enumerate() {
                writeln!(out, "{i:>2} {text}")?;
            }
            continue;
        }
        let action = match parse_play_command(&line) {
            Ok(Some(a)) => a,
            Ok(None) => break,
            Err(e) => {
                writeln!(out, "{e}\n{HELP}")?;
                continue;
            }
        };
        let result = state.step(&action)?;
        write!(out, "{}", frame(&state, color))?;
        writeln!(out, "heard: {}  reward: {}", result.observation.heard_text, result.reward)?;
    }
    Ok(())
}
