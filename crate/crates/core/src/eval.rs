//! Frozen test sets, success-rate evaluation and Welch's t-test.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::agents::Agent;
use crate::seeding;
use crate::trajectory::{run_episode, EpisodeOutcome};
use crate::world::{EnvConfig, HistoryMode, Variant, WorldError};

pub const TEST_SET_SIZE: usize = 1000;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("test set io: {0}")]
    Io(#[from] std::io::Error),
    #[error("test set format: {0}")]
    Format(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSet {
    pub variant: Variant,
    pub seeds: Vec<u64>,
}

/// Master seed of the frozen test set for each variant.
pub fn test_set_master_seed(variant: Variant) -> u64 {
    match variant {
        Variant::Original => 0x7E57_0001,
        Variant::NoLiar => 0x7E57_0002,
        Variant::DoorOnly => 0x7E57_0003,
    }
}

impl TestSet {
    pub fn generate(variant: Variant, master_seed: u64, n: usize) -> Self {
        TestSet {
            variant,
            seeds: seeding::episode_seeds(master_seed, n),
        }
    }

    /// The 1000-seed test set every condition is evaluated on, as checked in
    /// under `data/`.
    pub fn frozen(variant: Variant) -> Self {
        let text = match variant {
            Variant::Original => include_str!("../data/testset_original.json"),
            Variant::NoLiar => include_str!("../data/testset_no_liar.json"),
            Variant::DoorOnly => include_str!("../data/testset_door_only.json"),
        };
        serde_json::from_str(text).expect("bundled test set parses")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("test set serializes") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub agent: String,
    pub variant: Variant,
    pub success_rate: f64,
    pub mean_reward: f64,
    pub timeout_rate: f64,
    pub outcomes: Vec<EpisodeOutcome>,
}

impl EvalReport {
    pub fn from_outcomes(agent: &str, variant: Variant, outcomes: Vec<EpisodeOutcome>) -> Self {
        let n = outcomes.len().max(1) as f64;
        let successes = outcomes.iter().filter(|o| o.success).count();
        EvalReport {
            agent: agent.to_string(),
            variant,
            success_rate: successes as f64 / n,
            mean_reward: outcomes.iter().map(|o| o.reward).sum::<f64>() / n,
            timeout_rate: outcomes.iter().filter(|o| o.timed_out()).count() as f64 / n,
            outcomes,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &EpisodeOutcome> {
        self.outcomes.iter().filter(|o| !o.success)
    }
}

/// Runs one episode per test seed, in parallel; outcomes keep seed order.
pub fn evaluate<F>(
    agent_name: &str,
    make_agent: F,
    testset: &TestSet,
    history_mode: HistoryMode,
) -> Result<EvalReport, EvalError>
where
    F: Fn() -> Box<dyn Agent> + Sync,
{
    let config = EnvConfig::new(testset.variant).with_history(history_mode);
    let outcomes = testset
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut agent = make_agent();
            run_episode(agent.as_mut(), config, seed, |_, _, _| {})
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::from_outcomes(agent_name, testset.variant, outcomes))
}

/// Same as [`evaluate`] on the calling thread with a single agent instance.
pub fn evaluate_serial(
    agent_name: &str,
    agent: &mut dyn Agent,
    testset: &TestSet,
    history_mode: HistoryMode,
) -> Result<EvalReport, EvalError> {
    let config = EnvConfig::new(testset.variant).with_history(history_mode);
    let outcomes = testset
        .seeds
        .iter()
        .map(|&seed| run_episode(agent, config, seed, |_, _, _| {}))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::from_outcomes(agent_name, testset.variant, outcomes))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub dof: f64,
    pub p: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sided Welch's t-test.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult, EvalError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(EvalError::TooFewSamples { need: 2, got: s.len() });
        }
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        return Ok(if ma == mb {
            WelchResult { t: 0.0, dof: na + nb - 2.0, p: 1.0 }
        } else {
            WelchResult {
                t: (ma - mb).signum() * f64::INFINITY,
                dof: na + nb - 2.0,
                p: 0.0,
            }
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let dof = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(WelchResult { t, dof, p: t_two_sided_p(t, dof) })
}

/// `P(|T| >= |t|)` for Student's t with `dof` degrees of freedom.
pub fn t_two_sided_p(t: f64, dof: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let x = dof / (dof + t * t);
    beta_reg(dof / 2.0, 0.5, x).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation of success rates over runs.
pub fn aggregate_runs(reports: &[EvalReport]) -> Result<MeanStd, EvalError> {
    let rates: Vec<f64> = reports.iter().map(|r| r.success_rate).collect();
    aggregate(&rates)
}

pub fn aggregate(values: &[f64]) -> Result<MeanStd, EvalError> {
    if values.len() < 2 {
        return Err(EvalError::TooFewSamples { need: 2, got: values.len() });
    }
    let (mean, var) = mean_var(values);
    Ok(MeanStd { mean, std: var.sqrt() })
}

/// One row of the results table: a condition and its score per variant.
pub struct TableRow {
    pub condition: String,
    pub cells: Vec<Option<MeanStd>>,
}

/// Aligned text table, conditions down and variants across.
pub fn format_table(variants: &[Variant], rows: &[TableRow]) -> String {
    let header: Vec<String> = std::iter::once("Condition \\ Env.".to_string())
        .chain(variants.iter().map(|v| v.to_string()))
        .collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            std::iter::once(row.condition.clone())
                .chain(row.cells.iter().map(|c| match c {
                    Some(ms) => format!("{:.3} ± {:.3}", ms.mean, ms.std),
                    None => "-".to_string(),
                }))
                .collect()
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            std::iter::once(&header)
                .chain(&body)
                .map(|r| r.get(i).map_or(0, |s| s.chars().count()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(&mut out, &header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&mut out, &rule);
    for r in &body {
        line(&mut out, r);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::AgentKind;

    #[test]
    fn bundled_test_sets_match_their_master_seeds() {
        for v in [Variant::Original, Variant::NoLiar, Variant::DoorOnly] {
            let set = TestSet::frozen(v);
            assert_eq!(set, TestSet::generate(v, test_set_master_seed(v), TEST_SET_SIZE));
            assert_eq!(set.variant, v);
        }
        assert_ne!(TestSet::frozen(Variant::Original).seeds, TestSet::frozen(Variant::NoLiar).seeds);
    }

    #[test]
    fn welch_identical_samples() {
        let r = welch_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.t, 0.0);
        assert!((r.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn welch_degenerate_cases() {
        let r = welch_t_test(&[0.5, 0.5], &[0.5, 0.5, 0.5]).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
        let r = welch_t_test(&[0.5, 0.5], &[0.7, 0.7]).unwrap();
        assert_eq!(r.p, 0.0);
        assert!(r.t < 0.0);
        assert!(matches!(welch_t_test(&[1.0], &[1.0, 2.0]), Err(EvalError::TooFewSamples { .. })));
    }

    #[test]
    fn welch_symmetry() {
        let a = [0.236, 0.246, 0.226];
        let b = [0.996, 0.994, 0.998];
        let ab = welch_t_test(&a, &b).unwrap();
        let ba = welch_t_test(&b, &a).unwrap();
        assert_eq!(ab.t, -ba.t);
        assert_eq!(ab.p, ba.p);
        assert!(ab.p < 0.001);
    }

    #[test]
    fn p_monotone_in_t() {
        for dof in [1.0, 2.5, 7.0, 40.0] {
            let mut last = 1.0 + 1e-12;
            for i in 0..200 {
                let p = t_two_sided_p(i as f64 * 0.1, dof);
                assert!(p <= last, "dof {dof} t {}", i as f64 * 0.1);
                last = p;
            }
        }
    }

    #[test]
    fn aggregate_examples() {
        let r = aggregate(&[0.25, 0.25]).unwrap();
        assert_eq!((r.mean, r.std), (0.25, 0.0));
        let r = aggregate(&[0.2, 0.3]).unwrap();
        assert!((r.mean - 0.25).abs() < 1e-15);
        // sqrt(((0.05)^2 * 2) / 1) = 0.0707106781...
        assert!((r.std - 0.070_710_678_118_654_75).abs() < 1e-12);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn always_done_fails_at_t1() {
        let ts = TestSet::generate(Variant::Original, 1, 50);
        let report = evaluate("always-done", || AgentKind::AlwaysDone.build(), &ts, HistoryMode::Current).unwrap();
        assert_eq!(report.success_rate, 0.0);
        assert!(report.outcomes.iter().all(|o| o.steps == 1));
    }

    #[test]
    fn table_layout() {
        let rows = vec![TableRow {
            condition: "Random".into(),
            cells: vec![Some(MeanStd { mean: 0.002, std: 0.001 }), None],
        }];
        let text = format_table(&[Variant::Original, Variant::NoLiar], &rows);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("Condition \\ Env."));
        assert!(lines[2].contains("0.002 ± 0.001"));
    }
}
