//! Exhaustive analysis of tiny populations.
//!
//! Configurations are kept as per-agent vectors. Safety asks that no agent
//! ever changes its output, so a multiset view could hide two agents
//! swapping their outputs.
//!
//! Safety is defined over all infinite schedules, but outputs depend only on
//! the current configuration. A configuration `C` is therefore safe exactly
//! when it has one leader and every configuration reachable from `C` by a
//! finite schedule has the same per-agent outputs as `C`, which is a
//! finite reachability question over the enumerated space.

use std::collections::{HashMap, VecDeque};

use num::{BigInt, BigRational, One, ToPrimitive, Zero};

use crate::error::{usage, Error, Result};
use crate::model::{output_vector, Configuration, Interaction, OutputSymbol, Protocol};

pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// Largest transient set solved with rational arithmetic.
pub const EXACT_LIMIT: usize = 512;

/// `POPSIM_BUDGET` if set and valid, else [`DEFAULT_BUDGET`].
pub fn configured_budget() -> u64 {
    std::env::var("POPSIM_BUDGET")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_BUDGET)
}

/// Reachable configurations with their successor multisets.
///
/// Index 0 is the start configuration. Successors are stored per
/// configuration as distinct targets with multiplicities summing to
/// `n(n-1)`.
#[derive(Debug, Clone)]
pub struct ConfigurationSpace {
    protocol: Protocol,
    n: usize,
    configs: Vec<Configuration>,
    index: HashMap<Configuration, usize>,
    offsets: Vec<usize>,
    succ: Vec<(u32, u32)>,
}

/// Reachable configurations from all-`s_init`.
pub fn enumerate_reachable(protocol: &Protocol, n: usize) -> Result<ConfigurationSpace> {
    enumerate_reachable_from(
        protocol,
        Configuration::initial(protocol, n),
        configured_budget(),
    )
}

/// Breadth-first closure from `start` under every ordered interaction.
pub fn enumerate_reachable_from(
    protocol: &Protocol,
    start: Configuration,
    budget: u64,
) -> Result<ConfigurationSpace> {
    let n = start.len();
    if n < 2 {
        return Err(usage(format!("enumeration needs n >= 2, got {n}")));
    }
    start.validate(protocol)?;
    let q = protocol.num_states();
    let size = (q as f64).powi(n as i32);
    if size > budget as f64 {
        return Err(Error::Budget {
            states: q,
            n,
            size,
            budget,
        });
    }
    let pairs = all_interactions(n);
    let mut space = ConfigurationSpace {
        protocol: protocol.clone(),
        n,
        configs: vec![start.clone()],
        index: HashMap::from([(start, 0)]),
        offsets: vec![0],
        succ: Vec::new(),
    };
    let mut next = 0;
    let mut counts: Vec<(u32, u32)> = Vec::new();
    while next < space.configs.len() {
        counts.clear();
        for &e in &pairs {
            let mut c = space.configs[next].clone();
            c.apply_unchecked(protocol, e);
            let id = match space.index.get(&c) {
                Some(&id) => id,
                None => {
                    let id = space.configs.len();
                    space.index.insert(c.clone(), id);
                    space.configs.push(c);
                    id
                }
            } as u32;
            match counts.iter_mut().find(|(t, _)| *t == id) {
                Some(slot) => slot.1 += 1,
                None => counts.push((id, 1)),
            }
        }
        counts.sort_unstable();
        space.succ.extend_from_slice(&counts);
        space.offsets.push(space.succ.len());
        next += 1;
    }
    Ok(space)
}

/// All `n(n-1)` ordered pairs, lexicographic.
pub fn all_interactions(n: usize) -> Vec<Interaction> {
    let mut v = Vec::with_capacity(n * n.saturating_sub(1));
    for u in 0..n {
        for w in 0..n {
            if u != w {
                v.push(Interaction {
                    initiator: u,
                    responder: w,
                });
            }
        }
    }
    v
}

impl ConfigurationSpace {
    pub fn protocol(&self) -> &Protocol {
        &self.protocol
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn configs(&self) -> &[Configuration] {
        &self.configs
    }

    pub fn index_of(&self, c: &Configuration) -> Option<usize> {
        self.index.get(c).copied()
    }

    /// Distinct successors of configuration `i` with multiplicities.
    pub fn successors(&self, i: usize) -> &[(u32, u32)] {
        &self.succ[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Number of ordered interactions, `n(n-1)`.
    pub fn fan_out(&self) -> u32 {
        (self.n * (self.n - 1)) as u32
    }

    /// State names of a configuration, e.g. `(leader,follower,follower)`.
    pub fn label(&self, c: &Configuration) -> String {
        let names: Vec<&str> = c
            .states()
            .iter()
            .map(|&s| self.protocol.state_name(s))
            .collect();
        format!("({})", names.join(","))
    }

    fn predecessors(&self) -> Vec<Vec<u32>> {
        let mut pred = vec![Vec::new(); self.len()];
        for i in 0..self.len() {
            for &(j, _) in self.successors(i) {
                if j as usize != i {
                    pred[j as usize].push(i as u32);
                }
            }
        }
        pred
    }

    fn outputs(&self) -> Vec<Vec<OutputSymbol>> {
        self.configs
            .iter()
            .map(|c| output_vector(&self.protocol, c))
            .collect()
    }
}

/// Why a configuration is not safe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UnsafeWitness {
    LeaderCount(usize),
    /// Applying `path` from the configuration changes `agent`'s output.
    OutputChange {
        path: Vec<Interaction>,
        agent: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafetyVerdict {
    pub safe: bool,
    pub witness: Option<UnsafeWitness>,
}

/// Per-configuration flag: every configuration reachable from it has the
/// same per-agent outputs.
///
/// A configuration is frozen unless it can reach a configuration that has a
/// successor with different outputs; those are found by one backward sweep.
pub fn output_frozen(space: &ConfigurationSpace) -> Vec<bool> {
    let outs = space.outputs();
    let pred = space.predecessors();
    let mut frozen = vec![true; space.len()];
    let mut queue = VecDeque::new();
    for i in 0..space.len() {
        if space
            .successors(i)
            .iter()
            .any(|&(j, _)| outs[j as usize] != outs[i])
        {
            frozen[i] = false;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        for &p in &pred[i] {
            if frozen[p as usize] {
                frozen[p as usize] = false;
                queue.push_back(p as usize);
            }
        }
    }
    frozen
}

/// Safety flag for every configuration of the space.
pub fn safety_table(space: &ConfigurationSpace) -> Vec<bool> {
    let frozen = output_frozen(space);
    space
        .configs
        .iter()
        .zip(frozen)
        .map(|(c, f)| f && c.leader_count(&space.protocol) == 1)
        .collect()
}

/// Safe iff exactly one agent outputs `L` and no reachable configuration
/// changes any agent's output.
pub fn is_safe(space: &ConfigurationSpace, config: &Configuration) -> Result<SafetyVerdict> {
    let start = space
        .index_of(config)
        .ok_or_else(|| usage("configuration is not in the enumerated space"))?;
    let leaders = config.leader_count(&space.protocol);
    if leaders != 1 {
        return Ok(SafetyVerdict {
            safe: false,
            witness: Some(UnsafeWitness::LeaderCount(leaders)),
        });
    }
    Ok(match output_change_path(space, start) {
        None => SafetyVerdict {
            safe: true,
            witness: None,
        },
        Some((path, agent)) => SafetyVerdict {
            safe: false,
            witness: Some(UnsafeWitness::OutputChange { path, agent }),
        },
    })
}

/// Shortest schedule from configuration `start` to one where some agent's
/// output differs from its output at `start`.
fn output_change_path(
    space: &ConfigurationSpace,
    start: usize,
) -> Option<(Vec<Interaction>, usize)> {
    let p = &space.protocol;
    let base = output_vector(p, &space.configs[start]);
    let pairs = all_interactions(space.n);
    let mut parent: HashMap<usize, (usize, Interaction)> = HashMap::new();
    let mut seen = vec![false; space.len()];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(i) = queue.pop_front() {
        for &e in &pairs {
            let mut c = space.configs[i].clone();
            c.apply_unchecked(p, e);
            let j = space.index[&c];
            if seen[j] {
                continue;
            }
            seen[j] = true;
            parent.insert(j, (i, e));
            let out = output_vector(p, &c);
            if let Some(agent) = (0..space.n).find(|&a| out[a] != base[a]) {
                let mut path = Vec::new();
                let mut cur = j;
                while cur != start {
                    let (prev, e) = parent[&cur];
                    path.push(e);
                    cur = prev;
                }
                path.reverse();
                return Some((path, agent));
            }
            queue.push_back(j);
        }
    }
    None
}

/// Expected number of steps to hit the target from the start configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct HittingTime {
    /// Present when the system was small enough for rational elimination.
    pub exact: Option<BigRational>,
    pub value: f64,
    /// Max absolute residual of the first-step equations, scaled by `n(n-1)`.
    pub residual: f64,
    pub transient_states: usize,
}

/// Solves `h(C) = 0` on the target and
/// `h(C) = 1 + (1/(n(n-1))) Σ_e h(C ∘ e)` elsewhere, returning `h(start)`.
pub fn expected_hitting_steps<F>(space: &ConfigurationSpace, target: F) -> Result<HittingTime>
where
    F: Fn(&Configuration) -> bool,
{
    let flags: Vec<bool> = space.configs.iter().map(target).collect();
    expected_hitting_steps_flags(space, &flags, EXACT_LIMIT)
}

/// Hitting time of the safe set.
pub fn expected_stabilization_steps(space: &ConfigurationSpace) -> Result<HittingTime> {
    expected_hitting_steps_flags(space, &safety_table(space), EXACT_LIMIT)
}

pub fn expected_hitting_steps_flags(
    space: &ConfigurationSpace,
    target: &[bool],
    exact_limit: usize,
) -> Result<HittingTime> {
    if target.len() != space.len() {
        return Err(usage("target flags do not match the space"));
    }
    if target[0] {
        return Ok(HittingTime {
            exact: Some(BigRational::zero()),
            value: 0.0,
            residual: 0.0,
            transient_states: 0,
        });
    }
    // Transient configurations: reachable from the start without passing
    // through the target.
    let mut var = vec![usize::MAX; space.len()];
    let mut transient = vec![0usize];
    var[0] = 0;
    let mut head = 0;
    while head < transient.len() {
        let i = transient[head];
        head += 1;
        for &(j, _) in space.successors(i) {
            let j = j as usize;
            if !target[j] && var[j] == usize::MAX {
                var[j] = transient.len();
                transient.push(j);
            }
        }
    }
    // Every transient configuration must be able to reach the target.
    let mut reaches = vec![false; transient.len()];
    let mut changed = true;
    while changed {
        changed = false;
        for (k, &i) in transient.iter().enumerate() {
            if reaches[k] {
                continue;
            }
            let hit = space.successors(i).iter().any(|&(j, _)| {
                let j = j as usize;
                target[j] || (var[j] != usize::MAX && reaches[var[j]])
            });
            if hit {
                reaches[k] = true;
                changed = true;
            }
        }
    }
    if let Some(k) = reaches.iter().position(|r| !r) {
        return Err(Error::NonAbsorbing(format!(
            "configuration {} cannot reach the target",
            space.label(&space.configs[transient[k]])
        )));
    }

    let m = transient.len();
    let fan = space.fan_out() as f64;
    let rows: Vec<Vec<(usize, f64)>> = transient
        .iter()
        .map(|&i| {
            space
                .successors(i)
                .iter()
                .filter(|&&(j, _)| !target[j as usize])
                .map(|&(j, c)| (var[j as usize], c as f64))
                .collect()
        })
        .collect();

    let (exact, values) = if m <= exact_limit {
        let h = solve_rational(space, &transient, &var, target)?;
        let vals = h.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect();
        (Some(h[0].clone()), vals)
    } else {
        (None, solve_gauss_seidel(&rows, fan))
    };

    let residual = rows
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let s: f64 = row.iter().map(|&(j, c)| c * values[j]).sum();
            (fan * values[k] - s - fan).abs()
        })
        .fold(0.0, f64::max);
    Ok(HittingTime {
        value: values[0],
        exact,
        residual,
        transient_states: m,
    })
}

fn solve_rational(
    space: &ConfigurationSpace,
    transient: &[usize],
    var: &[usize],
    target: &[bool],
) -> Result<Vec<BigRational>> {
    let m = transient.len();
    let fan = BigRational::from_integer(BigInt::from(space.fan_out()));
    // Row k: fan·h_k − Σ_j c_kj h_j = fan
    let mut a = vec![vec![BigRational::zero(); m + 1]; m];
    for (k, &i) in transient.iter().enumerate() {
        a[k][k] = fan.clone();
        a[k][m] = fan.clone();
        for &(j, c) in space.successors(i) {
            if !target[j as usize] {
                a[k][var[j as usize]] -= BigRational::from_integer(BigInt::from(c));
            }
        }
    }
    for col in 0..m {
        let pivot = (col..m)
            .find(|&r| !a[r][col].is_zero())
            .ok_or_else(|| Error::NonAbsorbing("singular first-step system".into()))?;
        a.swap(col, pivot);
        let inv = BigRational::one() / a[col][col].clone();
        for x in a[col][col..].iter_mut() {
            *x *= &inv;
        }
        let pivot_row = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r == col || row[col].is_zero() {
                continue;
            }
            let factor = row[col].clone();
            for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                if !p.is_zero() {
                    *x -= &factor * p;
                }
            }
        }
    }
    Ok(a.into_iter().map(|row| row[m].clone()).collect())
}

fn solve_gauss_seidel(rows: &[Vec<(usize, f64)>], fan: f64) -> Vec<f64> {
    let mut h = vec![0.0; rows.len()];
    for _ in 0..1_000_000 {
        let mut delta = 0.0f64;
        for (k, row) in rows.iter().enumerate() {
            let mut diag = fan;
            let mut s = fan;
            for &(j, c) in row {
                if j == k {
                    diag -= c;
                } else {
                    s += c * h[j];
                }
            }
            let next = s / diag;
            delta = delta.max((next - h[k]).abs() / next.abs().max(1.0));
            h[k] = next;
        }
        if delta < 1e-14 {
            break;
        }
    }
    h
}

/// `n(n-1) · Σ_{k=2..n} 1/(k(k-1))`, which telescopes to `(n-1)²`.
pub fn closed_form_pairwise(n: usize) -> f64 {
    let nf = n as f64;
    let sum: f64 = (2..=n).map(|k| 1.0 / (k as f64 * (k as f64 - 1.0))).sum();
    nf * (nf - 1.0) * sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sim_rng, StateId};
    use crate::protocols;
    use rand::Rng;

    fn big(n: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(n))
    }

    fn cfg(states: &[u32]) -> Configuration {
        Configuration::from_states(states.iter().map(|&s| StateId(s)).collect())
    }

    #[test]
    fn pairwise_two_agents() {
        let space = enumerate_reachable(&protocols::pairwise_elimination(2), 2).unwrap();
        let mut got: Vec<_> = space.configs().to_vec();
        got.sort();
        assert_eq!(got, vec![cfg(&[0, 0]), cfg(&[0, 1]), cfg(&[1, 0])]);
        assert_eq!(safety_table(&space).iter().filter(|&&s| s).count(), 2);
        assert_eq!(
            expected_stabilization_steps(&space).unwrap().exact,
            Some(big(1))
        );
    }

    #[test]
    fn leave_init_two_agents() {
        let space = enumerate_reachable(&protocols::leave_init(2), 2).unwrap();
        assert_eq!(space.configs(), &[cfg(&[0, 0]), cfg(&[1, 1])]);
        assert!(safety_table(&space).iter().all(|&s| !s));
    }

    #[test]
    fn identity_protocol_has_one_configuration() {
        let p = Protocol::new(
            "id",
            vec!["a".into(), "b".into()],
            StateId(0),
            vec![OutputSymbol::Follower; 2],
        )
        .unwrap();
        assert_eq!(enumerate_reachable(&p, 4).unwrap().len(), 1);
    }

    #[test]
    fn budget_is_enforced() {
        let p = protocols::pairwise_elimination(30);
        let err = enumerate_reachable_from(&p, Configuration::initial(&p, 30), 1000).unwrap_err();
        assert!(matches!(
            err,
            Error::Budget {
                states: 2,
                n: 30,
                ..
            }
        ));
    }

    #[test]
    fn pairwise_hitting_matches_closed_form() {
        for n in 2..=6 {
            let space = enumerate_reachable(&protocols::pairwise_elimination(n), n).unwrap();
            let h = expected_stabilization_steps(&space).unwrap();
            let want = ((n - 1) * (n - 1)) as i64;
            assert_eq!(h.exact, Some(big(want)), "n = {n}");
            assert_eq!(h.residual, 0.0);
            assert!((closed_form_pairwise(n) - want as f64).abs() < 1e-9);
        }
        assert_eq!(closed_form_pairwise(10).round(), 81.0);
    }

    #[test]
    fn float_fallback_agrees() {
        let p = protocols::pairwise_elimination(5);
        let space = enumerate_reachable(&p, 5).unwrap();
        let h = expected_hitting_steps_flags(&space, &safety_table(&space), 0).unwrap();
        assert!(h.exact.is_none());
        assert!((h.value - 16.0).abs() < 1e-9, "{h:?}");
        assert!(h.residual < 1e-9);
    }

    /// Init-count chain for leave-init solved directly.
    fn leave_init_oracle(n: usize) -> BigRational {
        let pairs = big((n * (n - 1) / 2) as i64);
        let mut h = vec![BigRational::zero(); n + 1];
        for i in 1..=n {
            let both = big((i * (i - 1) / 2) as i64) / &pairs;
            let one = big((i * (n - i)) as i64) / &pairs;
            let stay = BigRational::one() - &both - &one;
            let mut acc = BigRational::one() + &one * &h[i - 1];
            if i >= 2 {
                acc += &both * &h[i - 2];
            }
            h[i] = acc / (BigRational::one() - stay);
        }
        h[n].clone()
    }

    #[test]
    fn leave_init_hitting_matches_count_chain() {
        for n in 2..=6 {
            let p = protocols::leave_init(n);
            let space = enumerate_reachable(&p, n).unwrap();
            let init = p.initial_state();
            let h = expected_hitting_steps(&space, |c| c.count(init) == 0).unwrap();
            assert_eq!(h.exact.unwrap(), leave_init_oracle(n), "n = {n}");
        }
        assert_eq!(leave_init_oracle(3), big(5) / big(2));
    }

    #[test]
    fn unreachable_target_is_reported() {
        let p = protocols::leave_init(3);
        let space = enumerate_reachable(&p, 3).unwrap();
        let err = expected_hitting_steps(&space, |c| c.leader_count(&p) == 1).unwrap_err();
        assert!(matches!(err, Error::NonAbsorbing(_)));
    }

    #[test]
    fn start_in_target_is_zero() {
        let p = protocols::pairwise_elimination(3);
        let space = enumerate_reachable(&p, 3).unwrap();
        let h = expected_hitting_steps(&space, |_| true).unwrap();
        assert_eq!(h.exact, Some(BigRational::zero()));
    }

    #[test]
    fn pairwise_three_agent_verdicts() {
        let p = protocols::pairwise_elimination(3);
        let space = enumerate_reachable(&p, 3).unwrap();
        assert!(is_safe(&space, &cfg(&[0, 1, 1])).unwrap().safe);
        let v = is_safe(&space, &cfg(&[0, 0, 1])).unwrap();
        assert_eq!(v.witness, Some(UnsafeWitness::LeaderCount(2)));
        let v = is_safe(&space, &cfg(&[0, 0, 0])).unwrap();
        assert!(!v.safe);
        assert!(is_safe(&space, &cfg(&[1, 1, 1])).is_err());
    }

    #[test]
    fn all_init_with_follower_output_is_unsafe() {
        let p = protocols::leave_init(3);
        let space = enumerate_reachable(&p, 3).unwrap();
        let v = is_safe(&space, &Configuration::initial(&p, 3)).unwrap();
        assert_eq!(v.witness, Some(UnsafeWitness::LeaderCount(0)));
    }

    /// A protocol where a lone leader hands leadership to whoever it meets.
    fn baton() -> Protocol {
        let (l, f) = (StateId(0), StateId(1));
        Protocol::new(
            "baton",
            vec!["l".into(), "f".into()],
            l,
            vec![OutputSymbol::Leader, OutputSymbol::Follower],
        )
        .unwrap()
        .with_rule(l, l, l, f)
        .unwrap()
        .with_rule(l, f, f, l)
        .unwrap()
    }

    #[test]
    fn leader_swap_is_not_safe() {
        // the multiset of outputs never changes once one leader remains,
        // but the leader moves between agents
        let p = baton();
        let space = enumerate_reachable(&p, 3).unwrap();
        let c = cfg(&[0, 1, 1]);
        let v = is_safe(&space, &c).unwrap();
        let Some(UnsafeWitness::OutputChange { path, agent }) = v.witness else {
            panic!("expected an output-change witness, got {v:?}");
        };
        let mut d = c.clone();
        for e in &path {
            d.apply_in_place(&p, *e).unwrap();
        }
        assert_ne!(p.output(d.get(agent)), p.output(c.get(agent)));
        assert!(safety_table(&space).iter().all(|&s| !s));
        assert!(matches!(
            expected_stabilization_steps(&space),
            Err(Error::NonAbsorbing(_))
        ));
    }

    #[test]
    fn safe_configurations_survive_random_walks() {
        for (p, n) in [
            (protocols::pairwise_elimination(4), 4),
            (baton(), 3),
            (protocols::leave_init(3), 3),
        ] {
            let space = enumerate_reachable(&p, n).unwrap();
            let table = safety_table(&space);
            let mut rng = sim_rng(99);
            for (i, c) in space.configs().iter().enumerate() {
                let v = is_safe(&space, c).unwrap();
                assert_eq!(v.safe, table[i]);
                if v.safe {
                    let base = output_vector(&p, c);
                    let mut d = c.clone();
                    for _ in 0..1000 {
                        let e = crate::model::sample_interaction(&mut rng, n).unwrap();
                        d.apply_in_place(&p, e).unwrap();
                        assert_eq!(output_vector(&p, &d), base);
                    }
                } else if let Some(UnsafeWitness::OutputChange { path, agent }) = v.witness {
                    let mut d = c.clone();
                    for e in &path {
                        d.apply_in_place(&p, *e).unwrap();
                    }
                    assert_ne!(p.output(d.get(agent)), p.output(c.get(agent)));
                }
            }
            let _ = rng.random::<u8>();
        }
    }

    #[test]
    fn successor_multiplicities_sum_to_fan_out() {
        let p = protocols::pairwise_elimination(4);
        let space = enumerate_reachable(&p, 4).unwrap();
        for i in 0..space.len() {
            let total: u32 = space.successors(i).iter().map(|&(_, c)| c).sum();
            assert_eq!(total, 12);
        }
    }
}
