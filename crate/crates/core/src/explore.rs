//! Episodic exploration bonus on the language channel.
//!
//! Each heard line earns `C / (N + 1)^M`, where `N` counts earlier hearings of
//! the same line in the current episode. Keys are full serialized lines, so
//! "Jack: ..." and "John: ..." are distinct events.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BonusConfig {
    /// Bonus scale `C`.
    pub scale: f64,
    /// Decay exponent `M`.
    pub exponent: f64,
}

impl Default for BonusConfig {
    fn default() -> Self {
        BonusConfig {
            scale: 0.125,
            exponent: 50.0,
        }
    }
}

impl BonusConfig {
    pub fn new(scale: f64, exponent: f64) -> Self {
        assert!(scale >= 0.0 && exponent >= 0.0, "bonus parameters must be non-negative");
        BonusConfig { scale, exponent }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EpisodicLangCounter {
    counts: HashMap<String, u64>,
}

impl EpisodicLangCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Forget every count; call at each episode start.
    pub fn reset(&mut self) {
        self.counts.clear();
    }

    pub fn count(&self, line: &str) -> u64 {
        self.counts.get(line).copied().unwrap_or(0)
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }
}

/// Bonus for one heard line, counted before the increment.
pub fn bonus(line: &str, counter: &mut EpisodicLangCounter, cfg: &BonusConfig) -> f64 {
    let n = counter.counts.entry(line.to_string()).or_insert(0);
    let value = cfg.scale / (*n as f64 + 1.0).powf(cfg.exponent);
    *n += 1;
    value
}

/// Extrinsic reward plus the bonus of every line, applied in order.
pub fn shaped_reward<S: AsRef<str>>(
    extrinsic: f64,
    lines: &[S],
    counter: &mut EpisodicLangCounter,
    cfg: &BonusConfig,
) -> f64 {
    extrinsic + intrinsic_reward(lines, counter, cfg)
}

pub fn intrinsic_reward<S: AsRef<str>>(
    lines: &[S],
    counter: &mut EpisodicLangCounter,
    cfg: &BonusConfig,
) -> f64 {
    lines
        .iter()
        .map(|l| bonus(l.as_ref(), counter, cfg))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_and_second_hearing() {
        let cfg = BonusConfig::default();
        let mut c = EpisodicLangCounter::new();
        assert_eq!(bonus("Wizard: Ask John.", &mut c, &cfg), 0.125);
        let second = bonus("Wizard: Ask John.", &mut c, &cfg);
        assert_eq!(second, 0.125 / 2f64.powi(50));
        assert!((second - 1.11e-16).abs() < 0.01e-16);
        assert_eq!(c.count("Wizard: Ask John."), 2);
    }

    #[test]
    fn zero_scale() {
        let cfg = BonusConfig::new(0.0, 50.0);
        let mut c = EpisodicLangCounter::new();
        for _ in 0..3 {
            assert_eq!(bonus("x", &mut c, &cfg), 0.0);
        }
    }

    #[test]
    fn shaping_examples() {
        let cfg = BonusConfig::default();
        let mut c = EpisodicLangCounter::new();
        assert_eq!(shaped_reward(0.0, &["Jack: Go to the red door."], &mut c, &cfg), 0.125);
        let mut c = EpisodicLangCounter::new();
        assert_eq!(shaped_reward::<&str>(0.775, &[], &mut c, &cfg), 0.775);
        let mut c = EpisodicLangCounter::new();
        let two = ["Jack: Go to the red door.", "John: Go to the red door."];
        assert_eq!(shaped_reward(0.0, &two, &mut c, &cfg), 0.25);
    }

    #[test]
    fn reset_restores_full_bonus() {
        let cfg = BonusConfig::default();
        let mut c = EpisodicLangCounter::new();
        bonus("a", &mut c, &cfg);
        bonus("a", &mut c, &cfg);
        c.reset();
        assert_eq!(bonus("a", &mut c, &cfg), 0.125);
    }

    proptest! {
        #[test]
        fn strictly_decreasing(scale in 0.001f64..10.0, exponent in 0.01f64..5.0, n in 0u64..1000) {
            let cfg = BonusConfig::new(scale, exponent);
            let at = |k: u64| cfg.scale / (k as f64 + 1.0).powf(cfg.exponent);
            prop_assert!(at(n + 1) < at(n));
        }

        #[test]
        fn episode_total_bounded(lines in proptest::collection::vec(0usize..6, 0..80)) {
            let cfg = BonusConfig::default();
            let mut c = EpisodicLangCounter::new();
            let keys: Vec<String> = lines.iter().map(|i| format!("Jack: line {i}")).collect();
            let total = intrinsic_reward(&keys, &mut c, &cfg);
            prop_assert!(total <= cfg.scale * c.distinct() as f64 + 1e-10);
        }
    }
}
