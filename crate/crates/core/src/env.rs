//! Tabular POMDP models and the two built-in environments.
//!
//! A model holds sparse transition rows `T[s][a] -> (reward, next state)`
//! and observation rows `Obs[s'][a][k] -> observation`, where `a` ranges over
//! the actions plus one reserved "no action" index used for the initial
//! observation. Terminal states are absorbing zero-reward self loops and
//! must emit observations that no live state emits, so the end of an
//! episode is always observable.

use rand::Rng;
use serde::Serialize;
use serde_json::value::RawValue;

use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TransitionEntry {
    /// Index into the model's reward support.
    pub reward: usize,
    pub next_state: usize,
    pub prob: f64,
}

/// Raw tables for [`PomdpModel::from_tables`].
#[derive(Clone, Debug)]
pub struct ModelTables {
    pub name: String,
    pub num_states: usize,
    pub num_actions: usize,
    pub num_modalities: usize,
    pub num_observations: usize,
    pub reward_support: Vec<f64>,
    pub initial_dist: Vec<f64>,
    /// Row `s * num_actions + a`.
    pub transition: Vec<Vec<TransitionEntry>>,
    /// Row `(s' * (num_actions + 1) + a) * num_modalities + k`, with
    /// `a == num_actions` the initial "no action" row.
    pub observation: Vec<Vec<(usize, f64)>>,
    pub terminal: Vec<bool>,
    pub discount: f64,
    pub horizon: usize,
}

#[derive(Clone, Debug)]
pub struct PomdpModel {
    name: String,
    num_states: usize,
    num_actions: usize,
    num_modalities: usize,
    num_observations: usize,
    reward_support: Vec<f64>,
    initial_dist: Vec<f64>,
    transition: Vec<TransitionEntry>,
    transition_offsets: Vec<usize>,
    observation: Vec<(usize, f64)>,
    observation_offsets: Vec<usize>,
    /// The observation of a single-entry row, `usize::MAX` otherwise.
    certain_observation: Vec<usize>,
    terminal: Vec<bool>,
    discount: f64,
    horizon: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct InitialDraw {
    pub state: usize,
    pub modality: usize,
    pub observation: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepOutcome {
    pub reward: f64,
    pub reward_index: usize,
    pub next_state: usize,
    pub observation: usize,
    pub terminal: bool,
}

/// Inverse-CDF draw from a sparse categorical row. Rows with a single entry
/// consume no randomness.
#[inline]
pub(crate) fn draw_sparse<R: Rng + ?Sized, T>(row: &[T], prob: impl Fn(&T) -> f64, rng: &mut R) -> usize {
    if row.len() == 1 {
        return 0;
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, e) in row.iter().enumerate() {
        acc += prob(e);
        if u < acc {
            return i;
        }
    }
    row.len() - 1
}

fn check_distribution(what: &str, probs: impl Iterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    for p in probs {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(Error::InvalidModel(format!("{what}: bad probability {p}")));
        }
        total += p;
    }
    if (total - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidModel(format!("{what}: sums to {total}")));
    }
    Ok(())
}

impl PomdpModel {
    pub fn from_tables(t: ModelTables) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidModel(m));
        if t.num_states == 0 || t.num_actions == 0 || t.num_modalities == 0 || t.num_observations == 0 {
            return bad("all dimensions must be positive".into());
        }
        if t.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&t.discount) {
            return bad(format!("discount {} outside [0, 1]", t.discount));
        }
        if t.reward_support.is_empty()
            || t.reward_support.iter().any(|r| !r.is_finite())
            || t.reward_support.windows(2).any(|w| w[0] >= w[1])
        {
            return bad("reward support must be finite, non-empty and strictly increasing".into());
        }
        if t.initial_dist.len() != t.num_states {
            return bad("initial distribution length differs from num_states".into());
        }
        check_distribution("initial distribution", t.initial_dist.iter().copied())?;
        if t.transition.len() != t.num_states * t.num_actions {
            return bad("transition table does not cover every (state, action)".into());
        }
        let obs_rows = t.num_states * (t.num_actions + 1) * t.num_modalities;
        if t.observation.len() != obs_rows {
            return bad("observation table does not cover every (state, action, modality)".into());
        }
        if t.terminal.len() != t.num_states {
            return bad("terminal flags length differs from num_states".into());
        }

        let mut transition = Vec::new();
        let mut transition_offsets = vec![0];
        for (i, row) in t.transition.iter().enumerate() {
            let (s, a) = (i / t.num_actions, i % t.num_actions);
            check_distribution(&format!("T[{s}][{a}]"), row.iter().map(|e| e.prob))?;
            for e in row {
                if e.reward >= t.reward_support.len() || e.next_state >= t.num_states {
                    return bad(format!("T[{s}][{a}] has an out-of-range entry"));
                }
            }
            if t.terminal[s] {
                let absorbing = row
                    .iter()
                    .filter(|e| e.prob > 0.0)
                    .all(|e| e.next_state == s && t.reward_support[e.reward] == 0.0);
                if !absorbing {
                    return bad(format!("terminal state {s} must be an absorbing zero-reward loop"));
                }
            }
            transition.extend(row.iter().copied().filter(|e| e.prob > 0.0));
            transition_offsets.push(transition.len());
        }

        let mut observation = Vec::new();
        let mut observation_offsets = vec![0];
        let mut certain_observation = Vec::with_capacity(obs_rows);
        let mut live_obs = vec![false; t.num_observations];
        let mut terminal_obs = vec![false; t.num_observations];
        for (i, row) in t.observation.iter().enumerate() {
            check_distribution(&format!("Obs row {i}"), row.iter().map(|e| e.1))?;
            let s = i / ((t.num_actions + 1) * t.num_modalities);
            for &(o, p) in row {
                if o >= t.num_observations {
                    return bad(format!("Obs row {i} has out-of-range observation {o}"));
                }
                if p > 0.0 {
                    if t.terminal[s] {
                        terminal_obs[o] = true;
                    } else {
                        live_obs[o] = true;
                    }
                }
            }
            let start = observation.len();
            observation.extend(row.iter().copied().filter(|e| e.1 > 0.0));
            observation_offsets.push(observation.len());
            certain_observation.push(if observation.len() - start == 1 { observation[start].0 } else { usize::MAX });
        }
        if live_obs.iter().zip(&terminal_obs).any(|(a, b)| *a && *b) {
            return bad("terminal and non-terminal states share an observation symbol".into());
        }

        Ok(Self {
            name: t.name,
            num_states: t.num_states,
            num_actions: t.num_actions,
            num_modalities: t.num_modalities,
            num_observations: t.num_observations,
            reward_support: t.reward_support,
            initial_dist: t.initial_dist,
            transition,
            transition_offsets,
            observation,
            observation_offsets,
            certain_observation,
            terminal: t.terminal,
            discount: t.discount,
            horizon: t.horizon,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn num_states(&self) -> usize {
        self.num_states
    }
    #[inline]
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
    pub fn num_modalities(&self) -> usize {
        self.num_modalities
    }
    pub fn num_observations(&self) -> usize {
        self.num_observations
    }
    #[inline]
    pub fn reward_support(&self) -> &[f64] {
        &self.reward_support
    }
    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }
    #[inline]
    pub fn discount(&self) -> f64 {
        self.discount
    }
    #[inline]
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    #[inline]
    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminal[state]
    }
    /// Index of the reserved "no action" row used for initial observations.
    pub fn no_action(&self) -> usize {
        self.num_actions
    }

    /// Largest absolute reward.
    pub fn r_max(&self) -> f64 {
        self.reward_support.iter().fold(0.0_f64, |m, r| m.max(r.abs()))
    }

    pub fn reward_index(&self, reward: f64) -> Option<usize> {
        self.reward_support.iter().position(|&r| r == reward)
    }

    #[inline]
    pub fn transition_row(&self, state: usize, action: usize) -> &[TransitionEntry] {
        let i = state * self.num_actions + action;
        &self.transition[self.transition_offsets[i]..self.transition_offsets[i + 1]]
    }

    /// `action` may be [`Self::no_action`].
    #[inline]
    pub fn observation_row(&self, state: usize, action: usize, modality: usize) -> &[(usize, f64)] {
        let i = self.observation_index(state, action, modality);
        &self.observation[self.observation_offsets[i]..self.observation_offsets[i + 1]]
    }

    #[inline]
    fn observation_index(&self, state: usize, action: usize, modality: usize) -> usize {
        (state * (self.num_actions + 1) + action) * self.num_modalities + modality
    }

    pub fn observation_prob(&self, state: usize, action: usize, modality: usize, observation: usize) -> f64 {
        self.observation_row(state, action, modality)
            .iter()
            .find(|e| e.0 == observation)
            .map_or(0.0, |e| e.1)
    }

    pub(crate) fn draw_initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.initial_dist.iter().filter(|p| **p > 0.0).count() == 1 {
            return self.initial_dist.iter().position(|p| *p > 0.0).unwrap_or(0);
        }
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = 0;
        for (s, &p) in self.initial_dist.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last = s;
                if u < acc {
                    return s;
                }
            }
        }
        last
    }

    pub(crate) fn draw_modality<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.num_modalities == 1 {
            0
        } else {
            rng.gen_range(0..self.num_modalities)
        }
    }

    #[inline]
    pub(crate) fn draw_observation<R: Rng + ?Sized>(&self, state: usize, action: usize, modality: usize, rng: &mut R) -> usize {
        let i = self.observation_index(state, action, modality);
        match self.certain_observation[i] {
            usize::MAX => {
                let row = &self.observation[self.observation_offsets[i]..self.observation_offsets[i + 1]];
                row[draw_sparse(row, |e| e.1, rng)].0
            }
            o => o,
        }
    }

    #[inline]
    pub(crate) fn draw_transition<R: Rng + ?Sized>(&self, state: usize, action: usize, rng: &mut R) -> TransitionEntry {
        let row = self.transition_row(state, action);
        row[draw_sparse(row, |e| e.prob, rng)]
    }

    /// `s0 ~ mu`, `k ~ U(K)`, `o0 ~ Obs[s0][no-action][k]`.
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> InitialDraw {
        let state = self.draw_initial_state(rng);
        let modality = self.draw_modality(rng);
        let observation = self.draw_observation(state, self.no_action(), modality, rng);
        InitialDraw { state, modality, observation }
    }

    pub fn step<R: Rng + ?Sized>(&self, state: usize, modality: usize, action: usize, rng: &mut R) -> Result<StepOutcome> {
        if state >= self.num_states || action >= self.num_actions || modality >= self.num_modalities {
            return Err(Error::Usage(format!(
                "step(state={state}, modality={modality}, action={action}) out of range"
            )));
        }
        if self.terminal[state] {
            return Err(Error::Usage(format!("cannot step terminal state {state}")));
        }
        let e = self.draw_transition(state, action, rng);
        let observation = self.draw_observation(e.next_state, action, modality, rng);
        Ok(StepOutcome {
            reward: self.reward_support[e.reward],
            reward_index: e.reward,
            next_state: e.next_state,
            observation,
            terminal: self.terminal[e.next_state],
        })
    }

    /// JSON dump of every table as dense row-major arrays, each number
    /// printed with 17 significant digits.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Dump<'a> {
            name: &'a str,
            num_states: usize,
            num_actions: usize,
            num_modalities: usize,
            num_observations: usize,
            horizon: usize,
            discount: Box<RawValue>,
            reward_support: Vec<Box<RawValue>>,
            initial_dist: Vec<Box<RawValue>>,
            terminal: &'a [bool],
            /// shape [S, A, |R|, S]
            transition: Vec<Box<RawValue>>,
            /// shape [S, A + 1, K, O]
            observation: Vec<Box<RawValue>>,
        }
        let num = |x: f64| RawValue::from_string(format!("{x:.16e}"));
        let nums = |xs: &[f64]| xs.iter().map(|&x| num(x)).collect::<std::result::Result<Vec<_>, _>>();

        let (s_n, a_n, r_n, k_n, o_n) = (
            self.num_states,
            self.num_actions,
            self.reward_support.len(),
            self.num_modalities,
            self.num_observations,
        );
        let mut trans = vec![0.0; s_n * a_n * r_n * s_n];
        for s in 0..s_n {
            for a in 0..a_n {
                for e in self.transition_row(s, a) {
                    trans[((s * a_n + a) * r_n + e.reward) * s_n + e.next_state] += e.prob;
                }
            }
        }
        let mut obs = vec![0.0; s_n * (a_n + 1) * k_n * o_n];
        for s in 0..s_n {
            for a in 0..=a_n {
                for k in 0..k_n {
                    for &(o, p) in self.observation_row(s, a, k) {
                        obs[((s * (a_n + 1) + a) * k_n + k) * o_n + o] += p;
                    }
                }
            }
        }
        let dump = Dump {
            name: &self.name,
            num_states: s_n,
            num_actions: a_n,
            num_modalities: k_n,
            num_observations: o_n,
            horizon: self.horizon,
            discount: num(self.discount)?,
            reward_support: nums(&self.reward_support)?,
            initial_dist: nums(&self.initial_dist)?,
            terminal: &self.terminal,
            transition: nums(&trans)?,
            observation: nums(&obs)?,
        };
        Ok(serde_json::to_string_pretty(&dump)?)
    }
}

/// Single-state bandit: action 0 pays 1 with probability `p_hi`, every other
/// action with probability `p_lo`; one observation, one modality.
pub fn build_bandit(p_hi: f64, p_lo: f64, num_actions: usize, horizon: usize, discount: f64) -> Result<PomdpModel> {
    if !(p_hi > p_lo) {
        return Err(Error::InvalidParameter(format!("bandit needs p_hi > p_lo (got {p_hi}, {p_lo})")));
    }
    if !(0.0..=1.0).contains(&p_hi) || !(0.0..=1.0).contains(&p_lo) {
        return Err(Error::InvalidParameter("bandit probabilities must lie in [0, 1]".into()));
    }
    if num_actions < 2 {
        return Err(Error::InvalidParameter("bandit needs at least 2 actions".into()));
    }
    let row = |p: f64| {
        vec![
            TransitionEntry { reward: 1, next_state: 0, prob: p },
            TransitionEntry { reward: 0, next_state: 0, prob: 1.0 - p },
        ]
    };
    let transition = (0..num_actions).map(|a| row(if a == 0 { p_hi } else { p_lo })).collect();
    PomdpModel::from_tables(ModelTables {
        name: format!("bandit(p_hi={p_hi},p_lo={p_lo},A={num_actions},N={horizon},gamma={discount})"),
        num_states: 1,
        num_actions,
        num_modalities: 1,
        num_observations: 1,
        reward_support: vec![0.0, 1.0],
        initial_dist: vec![1.0],
        transition,
        observation: vec![vec![(0, 1.0)]; num_actions + 1],
        terminal: vec![false],
        discount,
        horizon,
    })
}

/// Reward for reaching the end of the corridor.
pub const GOAL_REWARD: f64 = 10.0;

/// Corridor actions.
pub const ADVANCE: usize = 0;
pub const JUMP: usize = 1;
pub const WAIT: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct CorridorParams {
    pub length: usize,
    pub hazard_prob: f64,
    pub num_modalities: usize,
    pub horizon: usize,
    pub discount: f64,
}

impl Default for CorridorParams {
    fn default() -> Self {
        Self { length: 8, hazard_prob: 0.35, num_modalities: 3, horizon: 16, discount: 0.9 }
    }
}

/// Decoded corridor state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorridorState {
    /// Agent at `position`; `next` and `after` are the hazard flags of the
    /// two cells ahead. Only `next` is observed.
    At { position: usize, next: bool, after: bool },
    Goal,
    Dead,
}

/// Index bookkeeping for the gated corridor.
///
/// Cells `0..=length`; the agent starts on cell 0 and the goal is cell
/// `length`. Cells `1..length` carry a hazard with probability
/// `hazard_prob`, except that a hazard is never directly followed by
/// another one. `advance` moves one cell (dies on a hazard), `jump` moves two
/// cells over the next one (dies if it lands on a hazard), `wait` does
/// nothing. Since only the next cell is observed, jumping over a clear cell
/// is a gamble unless the level is known.
#[derive(Clone, Copy, Debug)]
pub struct CorridorLayout {
    pub length: usize,
    pub num_modalities: usize,
}

impl CorridorLayout {
    fn live_positions(&self) -> usize {
        self.length
    }
    pub fn num_states(&self) -> usize {
        3 * self.live_positions() + 2
    }
    pub fn goal(&self) -> usize {
        3 * self.live_positions()
    }
    pub fn dead(&self) -> usize {
        3 * self.live_positions() + 1
    }
    pub fn state_index(&self, s: CorridorState) -> usize {
        match s {
            CorridorState::At { position, next, after } => {
                let combo = match (next, after) {
                    (false, false) => 0,
                    (false, true) => 1,
                    (true, _) => 2,
                };
                position * 3 + combo
            }
            CorridorState::Goal => self.goal(),
            CorridorState::Dead => self.dead(),
        }
    }
    pub fn decode(&self, index: usize) -> CorridorState {
        if index == self.goal() {
            CorridorState::Goal
        } else if index == self.dead() {
            CorridorState::Dead
        } else {
            let (next, after) = match index % 3 {
                0 => (false, false),
                1 => (false, true),
                _ => (true, false),
            };
            CorridorState::At { position: index / 3, next, after }
        }
    }
    /// Symbols per modality block.
    pub fn block(&self) -> usize {
        2 * (self.length + 1)
    }
    fn base_symbol(&self, s: CorridorState) -> usize {
        match s {
            CorridorState::At { position, next, .. } => 2 * position + usize::from(next),
            CorridorState::Goal => 2 * self.live_positions(),
            CorridorState::Dead => 2 * self.live_positions() + 1,
        }
    }
    /// Observation symbol: a modality-specific rotation of the base symbol
    /// inside the modality's own block.
    pub fn observation(&self, s: CorridorState, modality: usize) -> usize {
        let b = self.block();
        modality * b + (self.base_symbol(s) + 3 * modality) % b
    }
    /// Inverse of [`Self::observation`]: `(modality, position, next-hazard)`
    /// for live symbols, `None` for terminal ones.
    pub fn decode_observation(&self, o: usize) -> (usize, Option<(usize, bool)>) {
        let b = self.block();
        let k = o / b;
        let base = (o % b + b - (3 * k) % b) % b;
        if base >= 2 * self.live_positions() {
            (k, None)
        } else {
            (k, Some((base / 2, base % 2 == 1)))
        }
    }
    fn hazard_capable(&self, cell: usize) -> bool {
        cell >= 1 && cell < self.length
    }
}

pub fn build_gated_corridor(params: CorridorParams) -> Result<PomdpModel> {
    let CorridorParams { length, hazard_prob: h, num_modalities, horizon, discount } = params;
    if length < 3 {
        return Err(Error::InvalidParameter(format!("corridor length {length} < 3")));
    }
    if !(0.0..=1.0).contains(&h) {
        return Err(Error::InvalidParameter(format!("hazard probability {h} outside [0, 1]")));
    }
    if num_modalities < 2 {
        return Err(Error::InvalidParameter("corridor needs at least 2 modalities".into()));
    }
    let lay = CorridorLayout { length, num_modalities };
    let n_s = lay.num_states();
    let n_a = 3;
    let goal_r = 1; // index of GOAL_REWARD in the support

    // Distribution of the hazard flag of `cell` given its predecessor's flag.
    let cell_dist = |cell: usize, prev_hazard: bool| -> Vec<(bool, f64)> {
        if !lay.hazard_capable(cell) || prev_hazard || h == 0.0 {
            vec![(false, 1.0)]
        } else if h == 1.0 {
            vec![(true, 1.0)]
        } else {
            vec![(false, 1.0 - h), (true, h)]
        }
    };
    // Landing on `pos` (a safe cell): draw the two cells ahead.
    let landing = |pos: usize, known_next: Option<bool>| -> Vec<(usize, f64)> {
        if pos >= length {
            return vec![(lay.goal(), 1.0)];
        }
        let nexts = match known_next {
            Some(n) => vec![(n, 1.0)],
            None => cell_dist(pos + 1, false),
        };
        let mut out = Vec::new();
        for (next, p1) in nexts {
            for (after, p2) in cell_dist(pos + 2, next) {
                out.push((lay.state_index(CorridorState::At { position: pos, next, after }), p1 * p2));
            }
        }
        out
    };

    let mut transition = Vec::with_capacity(n_s * n_a);
    for s in 0..n_s {
        for a in 0..n_a {
            let row = match lay.decode(s) {
                CorridorState::Goal | CorridorState::Dead => {
                    vec![TransitionEntry { reward: 0, next_state: s, prob: 1.0 }]
                }
                CorridorState::At { position, next, after } => {
                    let moves: Vec<(usize, f64)> = match a {
                        ADVANCE if next => vec![(lay.dead(), 1.0)],
                        ADVANCE => landing(position + 1, Some(after)),
                        JUMP if after => vec![(lay.dead(), 1.0)],
                        JUMP => landing(position + 2, None),
                        _ => vec![(s, 1.0)],
                    };
                    moves
                        .into_iter()
                        .map(|(ns, p)| TransitionEntry {
                            reward: if ns == lay.goal() { goal_r } else { 0 },
                            next_state: ns,
                            prob: p,
                        })
                        .collect()
                }
            };
            transition.push(row);
        }
    }

    let mut observation = Vec::with_capacity(n_s * (n_a + 1) * num_modalities);
    for s in 0..n_s {
        for _a in 0..=n_a {
            for k in 0..num_modalities {
                observation.push(vec![(lay.observation(lay.decode(s), k), 1.0)]);
            }
        }
    }

    let mut initial_dist = vec![0.0; n_s];
    for (s, p) in landing(0, None) {
        initial_dist[s] += p;
    }
    let terminal = (0..n_s).map(|s| s == lay.goal() || s == lay.dead()).collect();

    PomdpModel::from_tables(ModelTables {
        name: format!(
            "corridor(L={length},h={h},K={num_modalities},T={horizon},gamma={discount})"
        ),
        num_states: n_s,
        num_actions: n_a,
        num_modalities,
        num_observations: num_modalities * lay.block(),
        reward_support: vec![0.0, GOAL_REWARD],
        initial_dist,
        transition,
        observation,
        terminal,
        discount,
        horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::stream;
    use std::collections::HashMap;

    fn corridor() -> PomdpModel {
        build_gated_corridor(CorridorParams::default()).unwrap()
    }

    #[test]
    fn bandit_shape() {
        let m = build_bandit(0.9, 0.1, 4, 10, 0.9).unwrap();
        assert_eq!((m.num_states(), m.num_actions(), m.num_observations()), (1, 4, 1));
        let mut rng = stream(3);
        for _ in 0..10 {
            let d = m.sample_initial(&mut rng);
            assert_eq!((d.state, d.observation), (0, 0));
        }
    }

    #[test]
    fn bandit_rejects_equal_probabilities() {
        assert!(matches!(build_bandit(0.5, 0.5, 2, 1, 1.0), Err(Error::InvalidParameter(_))));
        assert!(build_bandit(0.5, 0.1, 1, 1, 1.0).is_err());
    }

    #[test]
    fn deterministic_bandit_pays_every_step() {
        let m = build_bandit(1.0, 0.0, 2, 3, 1.0).unwrap();
        let mut rng = stream(1);
        let total: f64 = (0..3).map(|_| m.step(0, 0, 0, &mut rng).unwrap().reward).sum();
        assert_eq!(total, 3.0);
    }

    #[test]
    fn bandit_reward_frequency() {
        let m = build_bandit(0.9, 0.1, 4, 10, 0.9).unwrap();
        let mut rng = stream(11);
        let n = 100_000;
        let hits = (0..n).filter(|_| m.step(0, 0, 0, &mut rng).unwrap().reward == 1.0).count();
        assert!((hits as f64 / n as f64 - 0.9).abs() < 0.01);
    }

    #[test]
    fn degenerate_initial_distribution() {
        let mut m = build_bandit(0.9, 0.1, 2, 2, 0.9).unwrap();
        m.initial_dist = vec![1.0];
        let mut rng = stream(0);
        assert_eq!(m.sample_initial(&mut rng).state, 0);
    }

    #[test]
    fn corridor_initial_frequencies_match_mu() {
        let m = corridor();
        let mut rng = stream(5);
        let n = 100_000;
        let mut counts = vec![0usize; m.num_states()];
        for _ in 0..n {
            counts[m.sample_initial(&mut rng).state] += 1;
        }
        let l1: f64 = counts
            .iter()
            .zip(m.initial_dist())
            .map(|(c, p)| (*c as f64 / n as f64 - p).abs())
            .sum();
        assert!(l1 < 0.01, "L1 {l1}");
    }

    #[test]
    fn step_frequencies_match_every_row() {
        let m = corridor();
        let mut rng = stream(9);
        let n = 100_000;
        for s in 0..m.num_states() {
            if m.is_terminal(s) {
                continue;
            }
            for a in 0..m.num_actions() {
                let row = m.transition_row(s, a);
                let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
                for _ in 0..n {
                    let out = m.step(s, 0, a, &mut rng).unwrap();
                    *counts.entry((out.reward_index, out.next_state)).or_default() += 1;
                }
                let l1: f64 = row
                    .iter()
                    .map(|e| (counts.get(&(e.reward, e.next_state)).copied().unwrap_or(0) as f64 / n as f64 - e.prob).abs())
                    .sum();
                let bound = 3.0 * (row.len() as f64 / n as f64).sqrt();
                assert!(l1 <= bound.max(1e-15), "T[{s}][{a}] L1 {l1} > {bound}");
            }
        }
    }

    #[test]
    fn stepping_terminal_is_a_usage_error() {
        let m = corridor();
        let lay = CorridorLayout { length: 8, num_modalities: 3 };
        let mut rng = stream(0);
        assert!(matches!(m.step(lay.dead(), 0, ADVANCE, &mut rng), Err(Error::Usage(_))));
    }

    #[test]
    fn hazard_free_corridor_is_walked_in_length_steps() {
        let m = build_gated_corridor(CorridorParams { hazard_prob: 0.0, ..Default::default() }).unwrap();
        let mut rng = stream(2);
        let d = m.sample_initial(&mut rng);
        let mut s = d.state;
        let mut total = 0.0;
        let mut steps = 0;
        while !m.is_terminal(s) {
            let out = m.step(s, d.modality, ADVANCE, &mut rng).unwrap();
            total += out.reward;
            s = out.next_state;
            steps += 1;
        }
        assert_eq!((total, steps), (GOAL_REWARD, 8));
    }

    #[test]
    fn fully_hazarded_corridor_is_cleared_by_jumping() {
        let m = build_gated_corridor(CorridorParams { hazard_prob: 1.0, ..Default::default() }).unwrap();
        let lay = CorridorLayout { length: 8, num_modalities: 3 };
        let mut rng = stream(2);
        let d = m.sample_initial(&mut rng);
        let mut s = d.state;
        let mut total = 0.0;
        while !m.is_terminal(s) {
            // Jump over hazards, advance onto clear cells.
            let a = match lay.decode(s) {
                CorridorState::At { next: true, .. } => JUMP,
                _ => ADVANCE,
            };
            let out = m.step(s, d.modality, a, &mut rng).unwrap();
            total += out.reward;
            s = out.next_state;
        }
        assert_eq!(s, lay.goal());
        assert_eq!(total, GOAL_REWARD);
    }

    #[test]
    fn observation_round_trip_and_modality_blocks() {
        let lay = CorridorLayout { length: 8, num_modalities: 3 };
        for k in 0..3 {
            for p in 0..8 {
                for next in [false, true] {
                    let s = CorridorState::At { position: p, next, after: false };
                    let o = lay.observation(s, k);
                    assert_eq!(lay.decode_observation(o), (k, Some((p, next))));
                    assert_eq!(o / lay.block(), k);
                }
            }
            assert_eq!(lay.decode_observation(lay.observation(CorridorState::Goal, k)).1, None);
        }
    }

    #[test]
    fn model_json_uses_seventeen_digits() {
        let m = build_bandit(0.9, 0.1, 2, 3, 0.9).unwrap();
        let js = m.to_json().unwrap();
        assert!(js.contains("9.0000000000000002e-1"), "{js}");
        let v: serde_json::Value = serde_json::from_str(&js).unwrap();
        assert_eq!(v["transition"].as_array().unwrap().len(), 2 * 2);
    }

    #[test]
    fn invalid_tables_are_rejected() {
        let mut t = ModelTables {
            name: "x".into(),
            num_states: 1,
            num_actions: 1,
            num_modalities: 1,
            num_observations: 1,
            reward_support: vec![0.0],
            initial_dist: vec![1.0],
            transition: vec![vec![TransitionEntry { reward: 0, next_state: 0, prob: 0.9 }]],
            observation: vec![vec![(0, 1.0)]; 2],
            terminal: vec![false],
            discount: 0.9,
            horizon: 1,
        };
        assert!(PomdpModel::from_tables(t.clone()).is_err());
        t.transition[0][0].prob = 1.0;
        assert!(PomdpModel::from_tables(t.clone()).is_ok());
        t.discount = 1.5;
        assert!(PomdpModel::from_tables(t).is_err());
    }
}
