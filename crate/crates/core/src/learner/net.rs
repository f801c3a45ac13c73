//! Two-layer tanh MLP with multi-head action outputs and a value head.
//!
//! Parameters live in one flat vector so the optimizer and gradient checks can
//! treat them uniformly. The first layer takes sparse binary inputs: its
//! weights are stored input-major, so an active input adds one contiguous
//! column to the pre-activation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grammar::{Utterance, NUM_NOUNS, NUM_TEMPLATES};
use crate::world::{Action, Primitive};

/// 7 primitives plus "no move".
pub const MOVE_DIM: usize = 8;
pub const NO_MOVE: usize = 7;
pub const TEMPLATE_DIM: usize = NUM_TEMPLATES;
pub const WORD_DIM: usize = NUM_NOUNS;
/// move | speak switch | template | word | value
pub const OUT_DIM: usize = MOVE_DIM + 1 + TEMPLATE_DIM + WORD_DIM + 1;

const SWITCH: usize = MOVE_DIM;
const TEMPLATE_START: usize = SWITCH + 1;
const WORD_START: usize = TEMPLATE_START + TEMPLATE_DIM;
const VALUE: usize = WORD_START + WORD_DIM;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub input_dim: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
}

/// Offsets of each parameter block inside `params`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub wh: usize,
    pub bh: usize,
    pub len: usize,
}

impl Layout {
    fn new(input_dim: usize, hidden: usize) -> Self {
        let w1 = 0;
        let b1 = w1 + input_dim * hidden;
        let w2 = b1 + hidden;
        let b2 = w2 + hidden * hidden;
        let wh = b2 + hidden;
        let bh = wh + OUT_DIM * hidden;
        Layout { w1, b1, w2, b2, wh, bh, len: bh + OUT_DIM }
    }
}

/// Encoded action in head coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadAction {
    pub movement: usize,
    /// `(template, word)` when speaking.
    pub speech: Option<(usize, usize)>,
}

impl HeadAction {
    pub fn from_action(a: &Action) -> Self {
        HeadAction {
            movement: a.primitive.map_or(NO_MOVE, Primitive::index),
            speech: a.speech.map(|u| (u.template(), u.noun())),
        }
    }

    pub fn to_action(self) -> Action {
        Action {
            primitive: Primitive::from_index(self.movement),
            speech: self
                .speech
                .map(|(t, w)| Utterance::new(t, w).expect("head indices in range")),
        }
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub out: [f64; OUT_DIM],
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn entropy_of(logp: &[f64]) -> f64 {
    -logp.iter().map(|l| l.exp() * l).sum::<f64>()
}

/// Distributions of the four action heads plus the value estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub move_logp: Vec<f64>,
    pub switch_logit: f64,
    pub template_logp: Vec<f64>,
    pub word_logp: Vec<f64>,
    pub value: f64,
}

impl PolicyOutput {
    pub fn from_raw(out: &[f64; OUT_DIM]) -> Self {
        PolicyOutput {
            move_logp: log_softmax(&out[..MOVE_DIM]),
            switch_logit: out[SWITCH],
            template_logp: log_softmax(&out[TEMPLATE_START..WORD_START]),
            word_logp: log_softmax(&out[WORD_START..VALUE]),
            value: out[VALUE],
        }
    }

    pub fn speak_prob(&self) -> f64 {
        sigmoid(self.switch_logit)
    }

    /// `log p(move) + log p(switch) [+ log p(template) + log p(word)]`.
    /// May be `-inf` when the action has vanishing probability.
    pub fn joint_log_prob(&self, a: &HeadAction) -> f64 {
        let mut lp = self.move_logp[a.movement];
        match a.speech {
            Some((t, w)) => {
                lp += -softplus(-self.switch_logit);
                lp += self.template_logp[t] + self.word_logp[w];
            }
            None => lp += -softplus(self.switch_logit),
        }
        lp
    }

    /// Entropy of the joint action distribution:
    /// `H(move) + H(switch) + p(speak) * (H(template) + H(word))`.
    pub fn entropy(&self) -> f64 {
        let p = self.speak_prob();
        let h_switch = softplus(-self.switch_logit) * p + softplus(self.switch_logit) * (1.0 - p);
        entropy_of(&self.move_logp)
            + h_switch
            + p * (entropy_of(&self.template_logp) + entropy_of(&self.word_logp))
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> HeadAction {
        let draw = |logp: &[f64], rng: &mut ChaCha8Rng| {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (i, l) in logp.iter().enumerate() {
                acc += l.exp();
                if u < acc {
                    return i;
                }
            }
            logp.len() - 1
        };
        let movement = draw(&self.move_logp, rng);
        let speaks = rng.gen::<f64>() < self.speak_prob();
        let speech = speaks.then(|| {
            let t = draw(&self.template_logp, rng);
            let w = draw(&self.word_logp, rng);
            (t, w)
        });
        HeadAction { movement, speech }
    }

    /// Mode of each head; speaks when the switch probability exceeds 0.5.
    pub fn greedy(&self) -> HeadAction {
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
                .0
        };
        HeadAction {
            movement: argmax(&self.move_logp),
            speech: (self.speak_prob() > 0.5)
                .then(|| (argmax(&self.template_logp), argmax(&self.word_logp))),
        }
    }
}

impl PolicyNet {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, and
    /// output weights scaled down so the initial heads are near uniform.
    pub fn new(input_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let l = Layout::new(input_dim, hidden);
        let mut params = vec![0.0; l.len];
        // sparse inputs: about 150 of them are active at once
        let in_scale = 1.0 / (150f64.min(input_dim as f64)).sqrt();
        for p in &mut params[l.w1..l.b1] {
            *p = rng.gen_range(-in_scale..in_scale);
        }
        let h_scale = 1.0 / (hidden as f64).sqrt();
        for p in &mut params[l.w2..l.b2] {
            *p = rng.gen_range(-h_scale..h_scale);
        }
        for p in &mut params[l.wh..l.bh] {
            *p = 0.1 * rng.gen_range(-h_scale..h_scale);
        }
        PolicyNet { input_dim, hidden, params }
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(self.input_dim, self.hidden)
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, active: &[u32]) -> Forward {
        let l = self.layout();
        let h = self.hidden;
        let p = &self.params;
        let mut a1 = p[l.b1..l.b1 + h].to_vec();
        for &i in active {
            let col = &p[l.w1 + i as usize * h..l.w1 + (i as usize + 1) * h];
            for (a, w) in a1.iter_mut().zip(col) {
                *a += w;
            }
        }
        let h1: Vec<f64> = a1.iter().map(|x| x.tanh()).collect();
        let mut h2 = vec![0.0; h];
        for (j, out) in h2.iter_mut().enumerate() {
            let row = &p[l.w2 + j * h..l.w2 + (j + 1) * h];
            let z: f64 = row.iter().zip(&h1).map(|(w, x)| w * x).sum::<f64>() + p[l.b2 + j];
            *out = z.tanh();
        }
        let mut out = [0.0; OUT_DIM];
        for (k, o) in out.iter_mut().enumerate() {
            let row = &p[l.wh + k * h..l.wh + (k + 1) * h];
            *o = row.iter().zip(&h2).map(|(w, x)| w * x).sum::<f64>() + p[l.bh + k];
        }
        Forward { h1, h2, out }
    }

    pub fn output(&self, active: &[u32]) -> PolicyOutput {
        PolicyOutput::from_raw(&self.forward(active).out)
    }

    /// Accumulates `d(loss)/d(params)` into `grad` given `d(loss)/d(out)`.
    pub fn backward(&self, active: &[u32], fwd: &Forward, d_out: &[f64; OUT_DIM], grad: &mut [f64]) {
        let l = self.layout();
        let h = self.hidden;
        let p = &self.params;
        let mut d_h2 = vec![0.0; h];
        for (k, &g) in d_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = l.wh + k * h;
            for j in 0..h {
                grad[row + j] += g * fwd.h2[j];
                d_h2[j] += g * p[row + j];
            }
            grad[l.bh + k] += g;
        }
        let d_a2: Vec<f64> = d_h2
            .iter()
            .zip(&fwd.h2)
            .map(|(g, y)| g * (1.0 - y * y))
            .collect();
        let mut d_h1 = vec![0.0; h];
        for (j, &g) in d_a2.iter().enumerate() {
            let row = l.w2 + j * h;
            for i in 0..h {
                grad[row + i] += g * fwd.h1[i];
                d_h1[i] += g * p[row + i];
            }
            grad[l.b2 + j] += g;
        }
        let d_a1: Vec<f64> = d_h1
            .iter()
            .zip(&fwd.h1)
            .map(|(g, y)| g * (1.0 - y * y))
            .collect();
        for &i in active {
            let col = l.w1 + i as usize * h;
            for (g, d) in grad[col..col + h].iter_mut().zip(&d_a1) {
                *g += d;
            }
        }
        for (g, d) in grad[l.b1..l.b1 + h].iter_mut().zip(&d_a1) {
            *g += d;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

/// Gradient of `coef * log p(a)` with respect to the raw outputs, added into `d_out`.
pub fn add_log_prob_grad(out: &PolicyOutput, a: &HeadAction, coef: f64, d_out: &mut [f64; OUT_DIM]) {
    for (i, lp) in out.move_logp.iter().enumerate() {
        let onehot = if i == a.movement { 1.0 } else { 0.0 };
        d_out[i] += coef * (onehot - lp.exp());
    }
    let p = out.speak_prob();
    match a.speech {
        Some((t, w)) => {
            d_out[SWITCH] += coef * (1.0 - p);
            for (i, lp) in out.template_logp.iter().enumerate() {
                let onehot = if i == t { 1.0 } else { 0.0 };
                d_out[TEMPLATE_START + i] += coef * (onehot - lp.exp());
            }
            for (i, lp) in out.word_logp.iter().enumerate() {
                let onehot = if i == w { 1.0 } else { 0.0 };
                d_out[WORD_START + i] += coef * (onehot - lp.exp());
            }
        }
        None => d_out[SWITCH] -= coef * p,
    }
}

/// Gradient of `coef * entropy` with respect to the raw outputs, added into `d_out`.
pub fn add_entropy_grad(out: &PolicyOutput, coef: f64, d_out: &mut [f64; OUT_DIM]) {
    let cat = |logp: &[f64], scale: f64, start: usize, d_out: &mut [f64; OUT_DIM]| {
        let h = entropy_of(logp);
        for (i, lp) in logp.iter().enumerate() {
            d_out[start + i] += scale * -lp.exp() * (lp + h);
        }
    };
    let p = out.speak_prob();
    cat(&out.move_logp, coef, 0, d_out);
    cat(&out.template_logp, coef * p, TEMPLATE_START, d_out);
    cat(&out.word_logp, coef * p, WORD_START, d_out);
    let dp = p * (1.0 - p);
    let h_lang = entropy_of(&out.template_logp) + entropy_of(&out.word_logp);
    d_out[SWITCH] += coef * (-out.switch_logit * dp + dp * h_lang);
}

pub fn add_value_grad(coef: f64, d_out: &mut [f64; OUT_DIM]) {
    d_out[VALUE] += coef;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn uniform() -> PolicyOutput {
        PolicyOutput::from_raw(&[0.0; OUT_DIM])
    }

    #[test]
    fn uniform_factorization() {
        let out = uniform();
        let fwd = HeadAction { movement: Primitive::Forward.index(), speech: None };
        assert!((out.joint_log_prob(&fwd) - ((1.0f64 / 8.0).ln() + 0.5f64.ln())).abs() < 1e-12);
        let talk = HeadAction { movement: NO_MOVE, speech: Some((0, 1)) };
        let want = (1.0f64 / 8.0).ln() + 0.5f64.ln() + 0.25f64.ln() + (1.0f64 / 16.0).ln();
        assert!((out.joint_log_prob(&talk) - want).abs() < 1e-12);
    }

    fn all_actions() -> impl Iterator<Item = HeadAction> {
        (0..MOVE_DIM).flat_map(|m| {
            std::iter::once(HeadAction { movement: m, speech: None }).chain(
                (0..TEMPLATE_DIM).flat_map(move |t| {
                    (0..WORD_DIM).map(move |w| HeadAction { movement: m, speech: Some((t, w)) })
                }),
            )
        })
    }

    #[test]
    fn joint_distribution_normalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let mut raw = [0.0; OUT_DIM];
            for r in &mut raw {
                *r = rng.gen_range(-3.0..3.0);
            }
            let out = PolicyOutput::from_raw(&raw);
            assert_eq!(all_actions().count(), 8 * 65);
            let total: f64 = all_actions().map(|a| out.joint_log_prob(&a).exp()).sum();
            assert!((total - 1.0).abs() < 1e-9);
            // entropy by enumeration
            let h: f64 = all_actions()
                .map(|a| {
                    let lp = out.joint_log_prob(&a);
                    -lp.exp() * lp
                })
                .sum();
            assert!((h - out.entropy()).abs() < 1e-9);
            for head in [&out.move_logp, &out.template_logp, &out.word_logp] {
                assert!((head.iter().map(|l| l.exp()).sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn head_action_round_trip() {
        for a in all_actions() {
            assert_eq!(HeadAction::from_action(&a.to_action()), a);
        }
    }

    #[test]
    fn greedy_uses_switch_threshold() {
        let mut raw = [0.0; OUT_DIM];
        raw[SWITCH] = -0.1;
        assert_eq!(PolicyOutput::from_raw(&raw).greedy().speech, None);
        raw[SWITCH] = 0.1;
        raw[TEMPLATE_START + 1] = 2.0;
        assert_eq!(PolicyOutput::from_raw(&raw).greedy().speech, Some((1, 0)));
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let mut raw = [0.0; OUT_DIM];
        raw[0] = 800.0;
        raw[SWITCH] = -800.0;
        let out = PolicyOutput::from_raw(&raw);
        let a = HeadAction { movement: 0, speech: None };
        assert!(out.joint_log_prob(&a).is_finite());
        assert!(out.entropy().is_finite());
    }
}
