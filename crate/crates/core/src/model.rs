//! The population protocol model: protocols, configurations, the uniformly
//! random scheduler and seeded execution.
//!
//! Agents are indexed `0..n`. The indices are harness handles only; a
//! protocol's transition function sees nothing but the two states.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{usage, Result};

/// Deterministic generator used by every simulation path.
///
/// ChaCha with 8 rounds; seeded from a `u64` through `SeedableRng::seed_from_u64`,
/// whose expansion is fixed by `rand_core`. Streams are identical across
/// platforms.
pub type SimRng = ChaCha8Rng;

pub fn sim_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer, used to derive independent per-trial seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `index` in a sweep started from `base`.
///
/// `mix64(base + (index + 1) * 0x9E3779B97F4A7C15)`, so any single trial can be
/// rerun in isolation.
pub fn trial_seed(base: u64, index: u64) -> u64 {
    mix64(base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateId(pub u32);

impl StateId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutputSymbol {
    #[serde(rename = "L")]
    Leader,
    #[serde(rename = "F")]
    Follower,
}

impl OutputSymbol {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputSymbol::Leader => "L",
            OutputSymbol::Follower => "F",
        }
    }
}

impl fmt::Display for OutputSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A protocol `(Q, s_init, T, Y, π_out)` with a dense transition table.
///
/// Every ordered state pair has an entry; pairs without an explicit rule map
/// to themselves. Values are immutable once built and can be shared freely
/// between concurrent trials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Protocol {
    name: String,
    state_names: Vec<String>,
    initial: StateId,
    outputs: Vec<OutputSymbol>,
    transitions: Vec<(StateId, StateId)>,
}

impl Protocol {
    /// A protocol whose transition table is the identity everywhere.
    pub fn new(
        name: impl Into<String>,
        state_names: Vec<String>,
        initial: StateId,
        outputs: Vec<OutputSymbol>,
    ) -> Result<Self> {
        let q = state_names.len();
        if q == 0 {
            return Err(usage("a protocol needs at least one state"));
        }
        if u32::try_from(q).is_err() {
            return Err(usage("too many states"));
        }
        if initial.index() >= q {
            return Err(usage(format!(
                "initial state {initial} out of range for {q} states"
            )));
        }
        if outputs.len() != q {
            return Err(usage(format!(
                "outputs not total: {} entries for {q} states",
                outputs.len()
            )));
        }
        let mut transitions = Vec::with_capacity(q * q);
        for a in 0..q as u32 {
            for b in 0..q as u32 {
                transitions.push((StateId(a), StateId(b)));
            }
        }
        Ok(Protocol {
            name: name.into(),
            state_names,
            initial,
            outputs,
            transitions,
        })
    }

    /// Sets `T(a, b) = (a2, b2)`.
    pub fn with_rule(mut self, a: StateId, b: StateId, a2: StateId, b2: StateId) -> Result<Self> {
        for s in [a, b, a2, b2] {
            self.check_state(s)?;
        }
        let q = self.num_states();
        self.transitions[a.index() * q + b.index()] = (a2, b2);
        Ok(self)
    }

    fn check_state(&self, s: StateId) -> Result<()> {
        if s.index() < self.num_states() {
            Ok(())
        } else {
            Err(usage(format!(
                "state {s} out of range for {} states",
                self.num_states()
            )))
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn initial_state(&self) -> StateId {
        self.initial
    }

    pub fn state_name(&self, s: StateId) -> &str {
        &self.state_names[s.index()]
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn state_by_name(&self, name: &str) -> Option<StateId> {
        self.state_names
            .iter()
            .position(|s| s == name)
            .map(|i| StateId(i as u32))
    }

    #[inline]
    pub fn transition(&self, initiator: StateId, responder: StateId) -> (StateId, StateId) {
        self.transitions[initiator.index() * self.num_states() + responder.index()]
    }

    #[inline]
    pub fn output(&self, s: StateId) -> OutputSymbol {
        self.outputs[s.index()]
    }

    pub fn is_identity(&self, a: StateId, b: StateId) -> bool {
        self.transition(a, b) == (a, b)
    }

    /// Non-identity rules as `(a, b, a', b')`, in row-major order.
    pub fn rules(&self) -> impl Iterator<Item = (StateId, StateId, StateId, StateId)> + '_ {
        let q = self.num_states();
        self.transitions
            .iter()
            .enumerate()
            .filter_map(move |(i, &(a2, b2))| {
                let a = StateId((i / q) as u32);
                let b = StateId((i % q) as u32);
                ((a, b) != (a2, b2)).then_some((a, b, a2, b2))
            })
    }

    /// Whether any state outputs `L`.
    pub fn elects_leaders(&self) -> bool {
        self.outputs.contains(&OutputSymbol::Leader)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interaction {
    pub initiator: usize,
    pub responder: usize,
}

impl Interaction {
    pub fn new(initiator: usize, responder: usize) -> Result<Self> {
        if initiator == responder {
            return Err(usage(format!(
                "agent {initiator} cannot interact with itself"
            )));
        }
        Ok(Interaction {
            initiator,
            responder,
        })
    }

    pub fn involves(&self, agent: usize) -> bool {
        self.initiator == agent || self.responder == agent
    }

    pub fn check(&self, n: usize) -> Result<()> {
        if self.initiator == self.responder {
            return Err(usage(format!(
                "agent {} cannot interact with itself",
                self.initiator
            )));
        }
        if self.initiator >= n || self.responder >= n {
            return Err(usage(format!(
                "interaction ({}, {}) out of range for n = {n}",
                self.initiator, self.responder
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Interaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.initiator, self.responder)
    }
}

/// Draws an ordered pair uniformly among the `n(n-1)` pairs of distinct agents.
///
/// `u` is uniform on `[0, n)`, `k` uniform on `[0, n-1)`, and the responder is
/// `k` shifted past `u`. Both draws are bias-free.
pub fn sample_interaction<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<Interaction> {
    if n < 2 {
        return Err(usage(format!("the scheduler needs n >= 2, got {n}")));
    }
    Ok(sample_pair(rng, n))
}

#[inline]
pub(crate) fn sample_pair<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Interaction {
    let u = rng.random_range(0..n);
    let k = rng.random_range(0..n - 1);
    let v = if k < u { k } else { k + 1 };
    Interaction {
        initiator: u,
        responder: v,
    }
}

/// A mapping from agents to states.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    states: Vec<StateId>,
}

impl Configuration {
    pub fn uniform(n: usize, s: StateId) -> Self {
        Configuration { states: vec![s; n] }
    }

    /// The configuration where every agent is in `s_init`.
    pub fn initial(protocol: &Protocol, n: usize) -> Self {
        Self::uniform(n, protocol.initial_state())
    }

    pub fn from_states(states: Vec<StateId>) -> Self {
        Configuration { states }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[StateId] {
        &self.states
    }

    pub fn get(&self, agent: usize) -> StateId {
        self.states[agent]
    }

    pub fn set(&mut self, agent: usize, s: StateId) {
        self.states[agent] = s;
    }

    pub fn validate(&self, protocol: &Protocol) -> Result<()> {
        let q = protocol.num_states();
        match self.states.iter().find(|s| s.index() >= q) {
            Some(s) => Err(usage(format!("state {s} out of range for {q} states"))),
            None => Ok(()),
        }
    }

    /// Returns the successor under `e`; `self` is left untouched.
    pub fn apply_interaction(&self, protocol: &Protocol, e: Interaction) -> Result<Configuration> {
        let mut next = self.clone();
        next.apply_in_place(protocol, e)?;
        Ok(next)
    }

    /// In-place variant of [`Configuration::apply_interaction`]. Returns the
    /// participants' `(initiator, responder)` states before and after.
    pub fn apply_in_place(
        &mut self,
        protocol: &Protocol,
        e: Interaction,
    ) -> Result<([StateId; 2], [StateId; 2])> {
        e.check(self.len())?;
        Ok(self.apply_unchecked(protocol, e))
    }

    #[inline]
    pub(crate) fn apply_unchecked(
        &mut self,
        protocol: &Protocol,
        e: Interaction,
    ) -> ([StateId; 2], [StateId; 2]) {
        let a = self.states[e.initiator];
        let b = self.states[e.responder];
        let (a2, b2) = protocol.transition(a, b);
        self.states[e.initiator] = a2;
        self.states[e.responder] = b2;
        ([a, b], [a2, b2])
    }

    pub fn count(&self, s: StateId) -> usize {
        self.states.iter().filter(|&&x| x == s).count()
    }

    /// Per-state agent counts.
    pub fn counts(&self, num_states: usize) -> Vec<usize> {
        let mut c = vec![0; num_states];
        for s in &self.states {
            c[s.index()] += 1;
        }
        c
    }

    pub fn leader_count(&self, protocol: &Protocol) -> usize {
        self.states
            .iter()
            .filter(|&&s| protocol.output(s) == OutputSymbol::Leader)
            .count()
    }

    /// Stable digest: first 16 hex digits of SHA-256 over the little-endian
    /// `u32` state indices.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.states {
            h.update(s.0.to_le_bytes());
        }
        h.finalize()[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub fn output_vector(protocol: &Protocol, config: &Configuration) -> Vec<OutputSymbol> {
    config
        .states()
        .iter()
        .map(|&s| protocol.output(s))
        .collect()
}

pub fn parallel_time(steps: u64, n: usize) -> f64 {
    steps as f64 / n as f64
}

/// Default step budget `64 · n · ⌈ln n⌉`.
pub fn default_step_budget(n: usize) -> u64 {
    let ln = (n.max(2) as f64).ln().ceil() as u64;
    64 * n as u64 * ln
}

/// Whether no interaction available in a configuration with these state
/// counts changes any agent's state.
pub fn is_silent(protocol: &Protocol, counts: &[usize]) -> bool {
    let present: Vec<StateId> = present_states(counts);
    for &a in &present {
        for &b in &present {
            if a == b && counts[a.index()] < 2 {
                continue;
            }
            if !protocol.is_identity(a, b) {
                return false;
            }
        }
    }
    true
}

/// Sound check that a configuration with these counts has exactly one leader
/// and that no continuation can change any agent's output.
///
/// States that are present at count one only pair with themselves if some
/// applicable rule can produce them; states produced by rules are assumed
/// unbounded. The closure therefore over-approximates the reachable states,
/// so `true` implies the configuration is safe. For the catalog protocols
/// the check is also complete.
pub fn is_certainly_stable(protocol: &Protocol, counts: &[usize]) -> bool {
    let leaders: usize = counts
        .iter()
        .enumerate()
        .filter(|(s, _)| protocol.output(StateId(*s as u32)) == OutputSymbol::Leader)
        .map(|(_, c)| c)
        .sum();
    if leaders != 1 {
        return false;
    }
    let q = protocol.num_states();
    let mut present: Vec<bool> = counts.iter().map(|&c| c > 0).collect();
    let mut unbounded: Vec<bool> = counts.iter().map(|&c| c > 1).collect();
    loop {
        let mut changed = false;
        for a in 0..q {
            for b in 0..q {
                if !present[a] || !present[b] || (a == b && !unbounded[a]) {
                    continue;
                }
                let (sa, sb) = (StateId(a as u32), StateId(b as u32));
                let (a2, b2) = protocol.transition(sa, sb);
                if (a2, b2) == (sa, sb) {
                    continue;
                }
                if protocol.output(a2) != protocol.output(sa)
                    || protocol.output(b2) != protocol.output(sb)
                {
                    return false;
                }
                for s in [a2, b2] {
                    if !unbounded[s.index()] {
                        present[s.index()] = true;
                        unbounded[s.index()] = true;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return true;
        }
    }
}

fn present_states(counts: &[usize]) -> Vec<StateId> {
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(s, _)| StateId(s as u32))
        .collect()
}

/// First step at which each named event occurred.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EventSteps(BTreeMap<String, u64>);

impl EventSteps {
    /// Records `name` at `step` unless it was already recorded.
    pub fn mark(&mut self, name: &str, step: u64) {
        self.0.entry(name.to_string()).or_insert(step);
    }

    pub fn get(&self, name: &str) -> Option<u64> {
        self.0.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

/// One applied interaction, as seen by observers.
#[derive(Debug, Clone, Copy)]
pub struct StepEvent {
    /// Number of interactions applied so far, this one included.
    pub step: u64,
    pub interaction: Interaction,
    pub before: [StateId; 2],
    pub after: [StateId; 2],
}

/// Receives every step of a trial after it has been applied.
pub trait Observer {
    fn start(&mut self, _config: &Configuration, _events: &mut EventSteps) {}

    fn observe(&mut self, step: &StepEvent, config: &Configuration, events: &mut EventSteps);
}

/// What a stop predicate can look at.
pub struct TrialView<'a> {
    pub step: u64,
    pub config: &'a Configuration,
    pub counts: &'a [usize],
    pub events: &'a EventSteps,
}

#[derive(Debug, Clone)]
pub struct TrialSettings {
    pub n: usize,
    pub seed: u64,
    pub max_steps: u64,
    /// Agents whose starting state differs from `s_init`.
    pub overrides: Vec<(usize, StateId)>,
}

impl TrialSettings {
    pub fn new(n: usize, seed: u64) -> Self {
        TrialSettings {
            n,
            seed,
            max_steps: default_step_budget(n),
            overrides: Vec::new(),
        }
    }

    pub fn max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn overrides(mut self, overrides: Vec<(usize, StateId)>) -> Self {
        self.overrides = overrides;
        self
    }

    pub fn start_configuration(&self, protocol: &Protocol) -> Result<Configuration> {
        let mut c = Configuration::initial(protocol, self.n);
        for &(agent, s) in &self.overrides {
            if agent >= self.n {
                return Err(usage(format!(
                    "override agent {agent} out of range for n = {}",
                    self.n
                )));
            }
            c.set(agent, s);
        }
        c.validate(protocol)?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialOutcome {
    Stopped,
    Truncated,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub n: usize,
    pub steps_taken: u64,
    pub outcome: TrialOutcome,
    pub event_steps: EventSteps,
    pub final_configuration_digest: String,
    #[serde(skip)]
    pub final_configuration: Configuration,
}

impl TrialRecord {
    pub fn parallel_time(&self) -> f64 {
        parallel_time(self.steps_taken, self.n)
    }
}

/// Runs one execution from the all-`s_init` configuration (plus overrides).
///
/// The stop predicate is evaluated before the first interaction and after
/// every step; the trial halts at the first step where it holds, or after
/// `max_steps` interactions, in which case the record is marked truncated.
pub fn run_trial<F>(
    protocol: &Protocol,
    settings: &TrialSettings,
    mut stop: F,
    observers: &mut [&mut dyn Observer],
) -> Result<TrialRecord>
where
    F: FnMut(&TrialView<'_>) -> bool,
{
    let n = settings.n;
    if n < 2 {
        return Err(usage(format!("a trial needs n >= 2, got {n}")));
    }
    let mut config = settings.start_configuration(protocol)?;
    let mut counts = config.counts(protocol.num_states());
    let mut events = EventSteps::default();
    let mut rng = sim_rng(settings.seed);
    for obs in observers.iter_mut() {
        obs.start(&config, &mut events);
    }

    let mut step = 0u64;
    let mut outcome = TrialOutcome::Truncated;
    loop {
        let view = TrialView {
            step,
            config: &config,
            counts: &counts,
            events: &events,
        };
        if stop(&view) {
            outcome = TrialOutcome::Stopped;
            break;
        }
        if step >= settings.max_steps {
            break;
        }
        let e = sample_pair(&mut rng, n);
        let (before, after) = config.apply_unchecked(protocol, e);
        for s in before {
            counts[s.index()] -= 1;
        }
        for s in after {
            counts[s.index()] += 1;
        }
        debug_assert!(after.iter().all(|s| s.index() < protocol.num_states()));
        step += 1;
        let ev = StepEvent {
            step,
            interaction: e,
            before,
            after,
        };
        for obs in observers.iter_mut() {
            obs.observe(&ev, &config, &mut events);
        }
    }

    Ok(TrialRecord {
        seed: settings.seed,
        n,
        steps_taken: step,
        outcome,
        event_steps: events,
        final_configuration_digest: config.digest(),
        final_configuration: config,
    })
}

/// Marks `stabilized` the first time the configuration is certainly stable
/// (see [`is_certainly_stable`]) and `silent` the first time no interaction
/// can change any state.
pub struct Stability<'p> {
    protocol: &'p Protocol,
    counts: Vec<usize>,
}

impl<'p> Stability<'p> {
    pub fn new(protocol: &'p Protocol) -> Self {
        Stability {
            protocol,
            counts: Vec::new(),
        }
    }

    fn check(&self, step: u64, events: &mut EventSteps) {
        if events.get("stabilized").is_none() && is_certainly_stable(self.protocol, &self.counts) {
            events.mark("stabilized", step);
        }
        if events.get("silent").is_none() && is_silent(self.protocol, &self.counts) {
            events.mark("silent", step);
        }
    }
}

impl Observer for Stability<'_> {
    fn start(&mut self, config: &Configuration, events: &mut EventSteps) {
        self.counts = config.counts(self.protocol.num_states());
        self.check(0, events);
    }

    fn observe(&mut self, ev: &StepEvent, _config: &Configuration, events: &mut EventSteps) {
        if ev.before == ev.after {
            return;
        }
        for s in ev.before {
            self.counts[s.index()] -= 1;
        }
        for s in ev.after {
            self.counts[s.index()] += 1;
        }
        self.check(ev.step, events);
    }
}

/// Marks `init_below` the first time fewer than `limit` agents are in `s_init`.
pub struct InitCount {
    init: StateId,
    limit: usize,
    count: usize,
}

impl InitCount {
    /// `limit` is the integer `⌈f⌉` of a real threshold `f`; `count < f`
    /// and `count < ⌈f⌉` agree on integers.
    pub fn new(protocol: &Protocol, limit: usize) -> Self {
        InitCount {
            init: protocol.initial_state(),
            limit,
            count: 0,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

impl Observer for InitCount {
    fn start(&mut self, config: &Configuration, events: &mut EventSteps) {
        self.count = config.count(self.init);
        if self.count < self.limit {
            events.mark("init_below", 0);
        }
    }

    fn observe(&mut self, ev: &StepEvent, _config: &Configuration, events: &mut EventSteps) {
        for s in ev.before {
            if s == self.init {
                self.count -= 1;
            }
        }
        for s in ev.after {
            if s == self.init {
                self.count += 1;
            }
        }
        if self.count < self.limit {
            events.mark("init_below", ev.step);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::protocols;

    fn s(i: u32) -> StateId {
        StateId(i)
    }

    #[test]
    fn pairwise_elimination_two_leaders_meet() {
        let p = protocols::pairwise_elimination(3);
        let (l, f) = (s(0), s(1));
        let c = Configuration::from_states(vec![l, l, f]);
        let next = c
            .apply_interaction(&p, Interaction::new(0, 1).unwrap())
            .unwrap();
        assert_eq!(next.states(), &[l, f, f]);
        assert_eq!(c.states(), &[l, l, f]);
    }

    #[test]
    fn identity_protocol_changes_nothing() {
        let p = Protocol::new(
            "id",
            vec!["a".into(), "b".into()],
            s(0),
            vec![OutputSymbol::Follower; 2],
        )
        .unwrap();
        let c = Configuration::from_states(vec![s(0), s(1), s(1), s(0)]);
        for u in 0..4 {
            for v in 0..4 {
                if u != v {
                    let e = Interaction::new(u, v).unwrap();
                    assert_eq!(c.apply_interaction(&p, e).unwrap(), c);
                }
            }
        }
    }

    #[test]
    fn epidemic_infects_responder() {
        let p = protocols::one_way_epidemic(4);
        let c = Configuration::from_states(vec![s(1), s(0), s(0), s(0)]);
        let next = c
            .apply_interaction(&p, Interaction::new(0, 3).unwrap())
            .unwrap();
        assert_eq!(next.states(), &[s(1), s(0), s(0), s(1)]);
    }

    #[test]
    fn apply_rejects_bad_indices() {
        let p = protocols::pairwise_elimination(3);
        let mut c = Configuration::initial(&p, 3);
        assert!(matches!(
            c.apply_in_place(
                &p,
                Interaction {
                    initiator: 0,
                    responder: 3
                }
            ),
            Err(Error::Usage(_))
        ));
        assert!(Interaction::new(2, 2).is_err());
    }

    #[test]
    fn sampler_needs_two_agents() {
        let mut rng = sim_rng(1);
        assert!(sample_interaction(&mut rng, 1).is_err());
        assert!(sample_interaction(&mut rng, 0).is_err());
        for _ in 0..100 {
            let e = sample_interaction(&mut rng, 2).unwrap();
            assert!(
                e == Interaction {
                    initiator: 0,
                    responder: 1
                } || e
                    == Interaction {
                        initiator: 1,
                        responder: 0
                    }
            );
        }
    }

    #[test]
    fn sampler_is_deterministic() {
        let draw = |seed| {
            let mut rng = sim_rng(seed);
            (0..100)
                .map(|_| sample_interaction(&mut rng, 5).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(42), draw(42));
        assert_ne!(draw(42), draw(43));
    }

    #[test]
    fn output_vector_maps_states() {
        let p = protocols::pairwise_elimination(2);
        let c = Configuration::from_states(vec![s(0), s(1)]);
        assert_eq!(
            output_vector(&p, &c),
            vec![OutputSymbol::Leader, OutputSymbol::Follower]
        );

        let e = protocols::leave_init(3);
        let c = Configuration::from_states(vec![s(0), s(1), s(1)]);
        assert!(output_vector(&e, &c)
            .iter()
            .all(|&o| o == OutputSymbol::Follower));
        let c0 = Configuration::initial(&e, 3);
        assert!(output_vector(&e, &c0)
            .iter()
            .all(|&o| o == OutputSymbol::Follower));
    }

    #[test]
    fn parallel_time_divides_by_n() {
        assert_eq!(parallel_time(0, 5), 0.0);
        assert!((parallel_time(4, 3) - 4.0 / 3.0).abs() < 1e-15);
        let n = 1000usize;
        let steps = (n as f64 * (n as f64).ln()).round() as u64;
        assert!((parallel_time(steps, n) - (n as f64).ln()).abs() < 1e-3);
    }

    #[test]
    fn zero_budget_returns_initial_configuration() {
        let p = protocols::pairwise_elimination(4);
        let rec = run_trial(
            &p,
            &TrialSettings::new(4, 9).max_steps(0),
            |_| false,
            &mut [],
        )
        .unwrap();
        assert_eq!(rec.steps_taken, 0);
        assert_eq!(rec.outcome, TrialOutcome::Truncated);
        assert_eq!(rec.final_configuration, Configuration::initial(&p, 4));
    }

    #[test]
    fn two_leaders_stabilize_in_one_step() {
        let p = protocols::pairwise_elimination(2);
        for seed in 0..20 {
            let mut stab = Stability::new(&p);
            let rec = run_trial(
                &p,
                &TrialSettings::new(2, seed),
                |v| v.events.get("stabilized").is_some(),
                &mut [&mut stab],
            )
            .unwrap();
            assert_eq!(rec.steps_taken, 1);
            assert_eq!(rec.event_steps.get("stabilized"), Some(1));
        }
    }

    #[test]
    fn trial_rejects_tiny_population() {
        let p = protocols::pairwise_elimination(1);
        assert!(run_trial(&p, &TrialSettings::new(1, 0), |_| true, &mut []).is_err());
    }

    #[test]
    fn certainly_stable_matches_leader_count_for_elimination() {
        let p = protocols::pairwise_elimination(5);
        assert!(is_certainly_stable(&p, &[1, 4]));
        assert!(!is_certainly_stable(&p, &[2, 3]));
        assert!(!is_certainly_stable(&p, &[0, 5]));
    }

    #[test]
    fn silent_respects_counts() {
        let p = protocols::pairwise_elimination(5);
        // one leader cannot meet itself
        assert!(is_silent(&p, &[1, 4]));
        assert!(!is_silent(&p, &[2, 3]));
        let e = protocols::one_way_epidemic(5);
        assert!(is_silent(&e, &[0, 5]));
        assert!(is_silent(&e, &[5, 0]));
        assert!(!is_silent(&e, &[4, 1]));
    }

    #[test]
    fn trial_seeds_differ_per_index() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| trial_seed(7, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_eq!(trial_seed(7, 3), trial_seed(7, 3));
    }

    #[test]
    fn step_budget_formula() {
        assert_eq!(default_step_budget(3), 64 * 3 * 2);
        assert_eq!(default_step_budget(1024), 64 * 1024 * 7);
    }
}
