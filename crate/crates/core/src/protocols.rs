//! Built-in protocols and the JSON protocol-definition loader.
//!
//! A definition file looks like
//!
//! ```json
//! {
//!   "name": "pairwise-elimination",
//!   "states": ["leader", "follower"],
//!   "initial": "leader",
//!   "outputs": { "leader": "L", "follower": "F" },
//!   "rules": [["leader", "leader", "leader", "follower"]]
//! }
//! ```
//!
//! Each rule `[a, b, a', b']` sets `T(a, b) = (a', b')` for the ordered pair
//! `(initiator, responder)`. Unlisted pairs map to themselves.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{OutputSymbol, Protocol, StateId};

pub const PAIRWISE_ELIMINATION: &str = "pairwise-elimination";
pub const LEAVE_INIT: &str = "leave-init";
pub const ONE_WAY_EPIDEMIC: &str = "one-way-epidemic";

/// Names accepted by [`by_name`].
pub const CATALOG: [&str; 3] = [PAIRWISE_ELIMINATION, LEAVE_INIT, ONE_WAY_EPIDEMIC];

const L: OutputSymbol = OutputSymbol::Leader;
const F: OutputSymbol = OutputSymbol::Follower;

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Constant-state leader election: two leaders meeting leave one leader.
///
/// States `leader = 0`, `follower = 1`; everyone starts as a leader.
pub fn pairwise_elimination(_n: usize) -> Protocol {
    let (leader, follower) = (StateId(0), StateId(1));
    Protocol::new(
        PAIRWISE_ELIMINATION,
        names(&["leader", "follower"]),
        leader,
        vec![L, F],
    )
    .and_then(|p| p.with_rule(leader, leader, leader, follower))
    .expect("catalog protocol is well-formed")
}

/// Every participant of every interaction leaves `init` for good.
///
/// States `init = 0`, `done = 1`, both output `F`.
pub fn leave_init(_n: usize) -> Protocol {
    let (init, done) = (StateId(0), StateId(1));
    let mut p = Protocol::new(LEAVE_INIT, names(&["init", "done"]), init, vec![F, F])
        .expect("catalog protocol is well-formed");
    for a in [init, done] {
        for b in [init, done] {
            p = p.with_rule(a, b, done, done).expect("states in range");
        }
    }
    p
}

/// Two-way infection: if either participant is infected, both end infected.
///
/// States `susceptible = 0`, `infected = 1`, both output `F`. An infected
/// agent must be seeded through [`default_overrides`].
pub fn one_way_epidemic(_n: usize) -> Protocol {
    let (sus, inf) = (StateId(0), StateId(1));
    Protocol::new(
        ONE_WAY_EPIDEMIC,
        names(&["susceptible", "infected"]),
        sus,
        vec![F, F],
    )
    .and_then(|p| p.with_rule(sus, inf, inf, inf))
    .and_then(|p| p.with_rule(inf, sus, inf, inf))
    .expect("catalog protocol is well-formed")
}

pub fn by_name(name: &str, n: usize) -> Option<Protocol> {
    match name {
        PAIRWISE_ELIMINATION => Some(pairwise_elimination(n)),
        LEAVE_INIT => Some(leave_init(n)),
        ONE_WAY_EPIDEMIC => Some(one_way_epidemic(n)),
        _ => None,
    }
}

/// Starting-state overrides used by experiments: agent 0 is infected for the
/// epidemic, nothing otherwise.
pub fn default_overrides(protocol: &Protocol) -> Vec<(usize, StateId)> {
    if protocol.name() == ONE_WAY_EPIDEMIC {
        vec![(0, StateId(1))]
    } else {
        Vec::new()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolDocument {
    pub name: String,
    pub states: Vec<String>,
    pub initial: String,
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub rules: Vec<[String; 4]>,
}

impl ProtocolDocument {
    /// The document describing an existing protocol.
    pub fn from_protocol(p: &Protocol) -> Self {
        let name = |s: StateId| p.state_name(s).to_string();
        ProtocolDocument {
            name: p.name().to_string(),
            states: p.state_names().to_vec(),
            initial: name(p.initial_state()),
            outputs: (0..p.num_states() as u32)
                .map(|i| (name(StateId(i)), p.output(StateId(i)).to_string()))
                .collect(),
            rules: p
                .rules()
                .map(|(a, b, a2, b2)| [name(a), name(b), name(a2), name(b2)])
                .collect(),
        }
    }

    pub fn into_protocol(self) -> Result<Protocol> {
        let mut seen = HashSet::new();
        for s in &self.states {
            if !seen.insert(s.as_str()) {
                return Err(Error::Load(format!("duplicate state name '{s}'")));
            }
        }
        let lookup = |s: &str| -> Result<StateId> {
            self.states
                .iter()
                .position(|x| x == s)
                .map(|i| StateId(i as u32))
                .ok_or_else(|| Error::Load(format!("unknown state '{s}'")))
        };
        for key in self.outputs.keys() {
            lookup(key)?;
        }
        let mut outputs = Vec::with_capacity(self.states.len());
        for s in &self.states {
            let sym = self.outputs.get(s).ok_or_else(|| {
                Error::Load(format!("outputs not total: no output for state '{s}'"))
            })?;
            outputs.push(match sym.as_str() {
                "L" => OutputSymbol::Leader,
                "F" => OutputSymbol::Follower,
                other => {
                    return Err(Error::Load(format!(
                        "output of state '{s}' must be \"L\" or \"F\", got {other:?}"
                    )))
                }
            });
        }
        let initial = lookup(&self.initial)?;
        let mut p = Protocol::new(self.name.clone(), self.states.clone(), initial, outputs)
            .map_err(|e| Error::Load(e.to_string()))?;
        let mut pairs = HashSet::new();
        for [a, b, a2, b2] in &self.rules {
            let (a, b, a2, b2) = (lookup(a)?, lookup(b)?, lookup(a2)?, lookup(b2)?);
            if !pairs.insert((a, b)) {
                return Err(Error::Load(format!(
                    "duplicate rule for ordered pair ({}, {})",
                    p.state_name(a),
                    p.state_name(b)
                )));
            }
            p = p.with_rule(a, b, a2, b2)?;
        }
        Ok(p)
    }
}

/// Parses and validates a JSON protocol definition.
pub fn load_protocol(document: &str) -> Result<Protocol> {
    let doc: ProtocolDocument =
        serde_json::from_str(document).map_err(|e| Error::Load(e.to_string()))?;
    doc.into_protocol()
}
