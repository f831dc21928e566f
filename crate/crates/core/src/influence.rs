//! Influencer sets.
//!
//! `F(v, t)` is the set of agents whose initial state can have affected the
//! state of `v` after `t` interactions. It starts as `{v}` and, whenever `v`
//! interacts with `u`, becomes the union of the two participants' sets.
//!
//! Indexing convention used throughout: entry `j` of an [`InteractionLog`]
//! is the interaction applied between step `j` and step `j + 1`. So
//! `F(v, j + 1)` is obtained from `F(·, j)` by applying entry `j`, and in the
//! layered graph the cross edges between layers `j` and `j + 1` come from
//! entry `j`.
//!
//! The backward sets `I_{v,t}(i)` hold the agents `u` such that `(v, t)` is
//! reachable from `(u, i)` in the layered graph; `I_{v,t}(0) = F(v, t)`.

use std::fmt::Write as _;

use crate::error::{usage, Error, Result};
use crate::model::{
    run_trial, Configuration, EventSteps, Interaction, Observer, Protocol, StepEvent, TrialRecord,
    TrialSettings,
};

/// A set of agents in `0..n`, stored as a bit vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AgentSet {
    n: usize,
    words: Vec<u64>,
}

impl AgentSet {
    pub fn empty(n: usize) -> Self {
        AgentSet {
            n,
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub fn singleton(n: usize, v: usize) -> Self {
        let mut s = Self::empty(n);
        s.insert(v);
        s
    }

    pub fn from_agents(n: usize, agents: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::empty(n);
        for a in agents {
            s.insert(a);
        }
        s
    }

    pub fn insert(&mut self, v: usize) {
        assert!(v < self.n, "agent {v} out of range for n = {}", self.n);
        self.words[v / 64] |= 1 << (v % 64);
    }

    pub fn contains(&self, v: usize) -> bool {
        v < self.n && self.words[v / 64] & (1 << (v % 64)) != 0
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn is_subset(&self, other: &AgentSet) -> bool {
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&v| self.contains(v))
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }
}

/// Forward influencer sets of all agents, one dense bit row per agent.
///
/// Memory is `n² / 8` bytes.
#[derive(Debug, Clone)]
pub struct InfluencerTable {
    n: usize,
    step: u64,
    stride: usize,
    bits: Vec<u64>,
    sizes: Vec<usize>,
}

impl InfluencerTable {
    /// The table at step 0: `F(v, 0) = {v}`.
    pub fn new(n: usize) -> Self {
        let stride = n.div_ceil(64);
        let mut bits = vec![0u64; n * stride];
        for v in 0..n {
            bits[v * stride + v / 64] |= 1 << (v % 64);
        }
        InfluencerTable {
            n,
            step: 0,
            stride,
            bits,
            sizes: vec![1; n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Applies the next interaction: both participants get the union of
    /// their previous sets.
    pub fn forward_update(&mut self, e: Interaction) -> Result<()> {
        e.check(self.n)?;
        self.update_unchecked(e);
        Ok(())
    }

    #[inline]
    fn update_unchecked(&mut self, e: Interaction) {
        let (a, b) = (e.initiator.min(e.responder), e.initiator.max(e.responder));
        let s = self.stride;
        let (lo, hi) = self.bits.split_at_mut(b * s);
        let row_a = &mut lo[a * s..a * s + s];
        let row_b = &mut hi[..s];
        let mut size = 0usize;
        for (x, y) in row_a.iter_mut().zip(row_b.iter_mut()) {
            let u = *x | *y;
            *x = u;
            *y = u;
            size += u.count_ones() as usize;
        }
        self.sizes[a] = size;
        self.sizes[b] = size;
        self.step += 1;
    }

    /// `|F(v, step)|`.
    pub fn size(&self, v: usize) -> usize {
        self.sizes[v]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn max_size(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0)
    }

    pub fn contains(&self, v: usize, u: usize) -> bool {
        self.bits[v * self.stride + u / 64] & (1 << (u % 64)) != 0
    }

    /// `F(v, step)` as a standalone set.
    pub fn set(&self, v: usize) -> AgentSet {
        AgentSet {
            n: self.n,
            words: self.bits[v * self.stride..(v + 1) * self.stride].to_vec(),
        }
    }
}

/// A recorded schedule: entry `j` is the `j`-th interaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionLog {
    n: usize,
    entries: Vec<Interaction>,
}

const LOG_MAGIC: &str = "popsim-log 1";

impl InteractionLog {
    pub fn new(n: usize) -> Self {
        InteractionLog {
            n,
            entries: Vec::new(),
        }
    }

    pub fn from_entries(n: usize, entries: Vec<Interaction>) -> Result<Self> {
        for e in &entries {
            e.check(n)?;
        }
        Ok(InteractionLog { n, entries })
    }

    pub fn push(&mut self, e: Interaction) -> Result<()> {
        e.check(self.n)?;
        self.entries.push(e);
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Interaction] {
        &self.entries
    }

    /// Text form: the line `popsim-log 1`, the line `n <n>`, then one line
    /// `<initiator> <responder>` per entry. ASCII decimal, single spaces,
    /// every line terminated by `\n`.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(16 + 12 * self.entries.len());
        out.push_str(LOG_MAGIC);
        out.push('\n');
        let _ = writeln!(out, "n {}", self.n);
        for e in &self.entries {
            let _ = writeln!(out, "{} {}", e.initiator, e.responder);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l == LOG_MAGIC => {}
            _ => return Err(Error::Parse(format!("missing '{LOG_MAGIC}' header"))),
        }
        let n = match lines.next() {
            Some((_, l)) => l
                .strip_prefix("n ")
                .and_then(|x| x.parse::<usize>().ok())
                .ok_or_else(|| Error::Parse(format!("bad population line '{l}'")))?,
            None => return Err(Error::Parse("missing population line".into())),
        };
        let mut log = InteractionLog::new(n);
        for (i, line) in lines {
            let bad = || {
                Error::Parse(format!(
                    "line {}: expected '<initiator> <responder>', got '{line}'",
                    i + 1
                ))
            };
            let (u, v) = line.split_once(' ').ok_or_else(bad)?;
            let u = u.parse().map_err(|_| bad())?;
            let v = v.parse().map_err(|_| bad())?;
            log.push(Interaction {
                initiator: u,
                responder: v,
            })
            .map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
        }
        Ok(log)
    }

    /// Replays the first `t` entries forward.
    pub fn replay(&self, t: usize) -> Result<InfluencerTable> {
        if t > self.len() {
            return Err(usage(format!("t = {t} exceeds log length {}", self.len())));
        }
        let mut table = InfluencerTable::new(self.n);
        for &e in &self.entries[..t] {
            table.update_unchecked(e);
        }
        Ok(table)
    }
}

/// `I_{v,t}(t), I_{v,t}(t-1), …, I_{v,t}(0)`, in that order.
pub fn backward_sets(log: &InteractionLog, v: usize, t: usize) -> Result<Vec<AgentSet>> {
    if t > log.len() {
        return Err(usage(format!("t = {t} exceeds log length {}", log.len())));
    }
    if v >= log.n() {
        return Err(usage(format!("agent {v} out of range for n = {}", log.n())));
    }
    let mut current = AgentSet::singleton(log.n(), v);
    let mut out = Vec::with_capacity(t + 1);
    out.push(current.clone());
    for e in log.entries()[..t].iter().rev() {
        backward_step(&mut current, *e);
        out.push(current.clone());
    }
    Ok(out)
}

/// One layer of the backward recursion: if the interaction touches the set,
/// both participants join it.
#[inline]
pub fn backward_step(set: &mut AgentSet, e: Interaction) {
    if set.contains(e.initiator) || set.contains(e.responder) {
        set.insert(e.initiator);
        set.insert(e.responder);
    }
}

/// Sizes `|I_{v,t}(i)|` for `i = t, t-1, …, 0`.
pub fn backward_sizes(log: &InteractionLog, v: usize, t: usize) -> Result<Vec<usize>> {
    Ok(backward_sets(log, v, t)?
        .iter()
        .map(AgentSet::len)
        .collect())
}

/// Node `(agent, layer)` of the layered graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Node {
    pub agent: usize,
    pub layer: usize,
}

/// The layered causality graph over `(agent, layer)` for layers `0..=depth`.
#[derive(Debug, Clone)]
pub struct LayeredGraph {
    n: usize,
    depth: usize,
    edges: Vec<(Node, Node)>,
}

/// Vertical edges `(u,i) → (u,i+1)` for every agent and, for entry `i` of the
/// log pairing `u` and `w`, cross edges `(u,i) → (w,i+1)` and `(w,i) → (u,i+1)`.
pub fn build_graph_h(log: &InteractionLog, t: usize) -> Result<LayeredGraph> {
    if t > log.len() {
        return Err(usage(format!("t = {t} exceeds log length {}", log.len())));
    }
    let n = log.n();
    let mut edges = Vec::with_capacity(t * (n + 2));
    for (i, e) in log.entries()[..t].iter().enumerate() {
        for u in 0..n {
            edges.push((
                Node { agent: u, layer: i },
                Node {
                    agent: u,
                    layer: i + 1,
                },
            ));
        }
        let (u, w) = (e.initiator, e.responder);
        edges.push((
            Node { agent: u, layer: i },
            Node {
                agent: w,
                layer: i + 1,
            },
        ));
        edges.push((
            Node { agent: w, layer: i },
            Node {
                agent: u,
                layer: i + 1,
            },
        ));
    }
    Ok(LayeredGraph { n, depth: t, edges })
}

impl LayeredGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn node_count(&self) -> usize {
        self.n * (self.depth + 1)
    }

    pub fn edges(&self) -> &[(Node, Node)] {
        &self.edges
    }

    pub fn out_degree(&self, node: Node) -> usize {
        self.edges.iter().filter(|(a, _)| *a == node).count()
    }

    /// All nodes from which `target` is reachable, as a per-layer membership
    /// table indexed `[layer][agent]`.
    pub fn reaching(&self, target: Node) -> Vec<Vec<bool>> {
        let mut reach = vec![vec![false; self.n]; self.depth + 1];
        if target.layer > self.depth || target.agent >= self.n {
            return reach;
        }
        reach[target.layer][target.agent] = true;
        // Edges only go from layer i to i+1, so one reverse sweep suffices.
        let mut by_layer: Vec<Vec<(Node, Node)>> = vec![Vec::new(); self.depth];
        for &(a, b) in &self.edges {
            by_layer[a.layer].push((a, b));
        }
        for layer in (0..target.layer).rev() {
            for &(a, b) in &by_layer[layer] {
                if reach[b.layer][b.agent] {
                    reach[a.layer][a.agent] = true;
                }
            }
        }
        reach
    }

    /// One `u,i -> w,i+1` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (a, b) in &self.edges {
            let _ = writeln!(out, "{},{} -> {},{}", a.agent, a.layer, b.agent, b.layer);
        }
        out
    }

    /// Graphviz DOT with one rank per layer.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph H {\n  rankdir=LR;\n");
        for layer in 0..=self.depth {
            out.push_str("  { rank=same;");
            for u in 0..self.n {
                let _ = write!(out, " \"{u},{layer}\";");
            }
            out.push_str(" }\n");
        }
        for (a, b) in &self.edges {
            let _ = writeln!(
                out,
                "  \"{},{}\" -> \"{},{}\";",
                a.agent, a.layer, b.agent, b.layer
            );
        }
        out.push_str("}\n");
        out
    }
}

/// Per-step influencer sizes, for time-series export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InfluenceSample {
    pub step: u64,
    pub max_size: usize,
    pub initiator_size: usize,
    pub responder_size: usize,
}

/// Observer maintaining an [`InfluencerTable`] during a trial.
///
/// Marks `t_min` at the first step where some agent's set size strictly
/// exceeds the threshold and, if an agent is watched, `t_watch` at the first
/// step where that agent's does. Only the two participants' sets change, so
/// only they are checked.
pub struct InfluenceTracker {
    table: InfluencerTable,
    limit: usize,
    watch: Option<usize>,
    max_size: usize,
    series: Option<Vec<InfluenceSample>>,
}

impl InfluenceTracker {
    /// `threshold` is real; `|F| > x` is evaluated as `|F| > ⌊x⌋`.
    pub fn new(n: usize, threshold: f64) -> Self {
        InfluenceTracker {
            table: InfluencerTable::new(n),
            limit: threshold.floor().max(0.0) as usize,
            watch: None,
            max_size: 1,
            series: None,
        }
    }

    pub fn watch(mut self, agent: usize) -> Self {
        self.watch = Some(agent);
        self
    }

    pub fn record_series(mut self) -> Self {
        self.series = Some(Vec::new());
        self
    }

    pub fn table(&self) -> &InfluencerTable {
        &self.table
    }

    pub fn series(&self) -> &[InfluenceSample] {
        self.series.as_deref().unwrap_or(&[])
    }
}

impl Observer for InfluenceTracker {
    fn start(&mut self, _config: &Configuration, events: &mut EventSteps) {
        if self.table.n() > 0 && 1 > self.limit {
            events.mark("t_min", 0);
            if self.watch.is_some() {
                events.mark("t_watch", 0);
            }
        }
    }

    fn observe(&mut self, ev: &StepEvent, _config: &Configuration, events: &mut EventSteps) {
        self.table.update_unchecked(ev.interaction);
        let size = self.table.size(ev.interaction.initiator);
        self.max_size = self.max_size.max(size);
        if size > self.limit {
            events.mark("t_min", ev.step);
            if self.watch.is_some_and(|w| ev.interaction.involves(w)) {
                events.mark("t_watch", ev.step);
            }
        }
        if let Some(series) = &mut self.series {
            series.push(InfluenceSample {
                step: ev.step,
                max_size: self.max_size,
                initiator_size: size,
                responder_size: size,
            });
        }
    }
}

/// Records every interaction of a trial.
pub struct LogRecorder {
    pub log: InteractionLog,
}

impl LogRecorder {
    pub fn new(n: usize) -> Self {
        LogRecorder {
            log: InteractionLog::new(n),
        }
    }
}

impl Observer for LogRecorder {
    fn observe(&mut self, ev: &StepEvent, _config: &Configuration, _events: &mut EventSteps) {
        self.log.entries.push(ev.interaction);
    }
}

/// Outcome of [`first_exceed_time`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstExceed {
    Reached(u64),
    NotReached,
}

/// Runs a trial until some agent's influencer set exceeds `threshold` or the
/// step budget runs out.
pub fn first_exceed_time(
    protocol: &Protocol,
    settings: &TrialSettings,
    threshold: f64,
) -> Result<(FirstExceed, TrialRecord)> {
    if threshold < 1.0 {
        return Err(usage(format!("threshold must be >= 1, got {threshold}")));
    }
    let mut tracker = InfluenceTracker::new(settings.n, threshold);
    let rec = run_trial(
        protocol,
        settings,
        |v| v.events.get("t_min").is_some(),
        &mut [&mut tracker],
    )?;
    let out = match rec.event_steps.get("t_min") {
        Some(t) => FirstExceed::Reached(t),
        None => FirstExceed::NotReached,
    };
    Ok((out, rec))
}
