use popsim::influence::InfluenceTracker;
use popsim::model::{run_trial, sim_rng, trial_seed};
use popsim::protocols::leave_init;
use popsim::stats::{epidemic_spec, ks_critical, ks_statistic, simulate_geometric_sum};
use popsim::TrialSettings;

// |F(v, t)| has the law of an epidemic started from one agent, so the first
// step at which a fixed agent's set exceeds m is a sum of geometrics with
// success probabilities p_epidemic(k, n), k = 1..m.
#[test]
fn single_agent_first_passage_is_a_geometric_sum() {
    let n = 64;
    let m = 16;
    let samples = 10_000;
    let protocol = leave_init(n);
    let mut watched = Vec::with_capacity(samples);
    for i in 0..samples as u64 {
        let settings = TrialSettings::new(n, trial_seed(64, i));
        let mut tracker = InfluenceTracker::new(n, m as f64).watch(5);
        let rec = run_trial(
            &protocol,
            &settings,
            |v| v.events.get("t_watch").is_some(),
            &mut [&mut tracker],
        )
        .unwrap();
        watched.push(rec.event_steps.get("t_watch").unwrap() as f64);
    }
    let spec = epidemic_spec(n, 1, m).unwrap();
    let mut rng = sim_rng(6464);
    let oracle: Vec<f64> = (0..samples)
        .map(|_| simulate_geometric_sum(&mut rng, &spec) as f64)
        .collect();
    let d = ks_statistic(&watched, &oracle);
    assert!(d < ks_critical(0.001, samples, samples), "D = {d}");
}
