use popsim::model::{sample_interaction, sim_rng};
use popsim::stats::{p_epidemic_ratio, p_leave_ratio};
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn ordered_pairs_are_uniform_at_n8() {
    let n = 8;
    let samples = 1_000_000u64;
    let mut rng = sim_rng(20_240_601);
    let mut counts = vec![0u64; n * n];
    for _ in 0..samples {
        let e = sample_interaction(&mut rng, n).unwrap();
        assert_ne!(e.initiator, e.responder);
        counts[e.initiator * n + e.responder] += 1;
    }
    let cells = (n * (n - 1)) as f64;
    let expected = samples as f64 / cells;
    let sd = (expected * (1.0 - 1.0 / cells)).sqrt();
    let mut chi2 = 0.0;
    for u in 0..n {
        for v in 0..n {
            let c = counts[u * n + v] as f64;
            if u == v {
                assert_eq!(c, 0.0);
                continue;
            }
            assert!((c - expected).abs() <= 5.0 * sd, "cell ({u},{v}) = {c}");
            chi2 += (c - expected).powi(2) / expected;
        }
    }
    let critical = ChiSquared::new(cells - 1.0).unwrap().inverse_cdf(0.999);
    assert!(chi2 < critical, "chi2 {chi2} >= {critical}");
}

fn same_ratio((a, b): (u64, u64), (c, d): (u64, u64)) -> bool {
    a as u128 * d as u128 == c as u128 * b as u128
}

/// Counts ordered pairs (u, v), u != v, accepted by `pred`.
fn count_pairs(n: usize, pred: impl Fn(usize, usize) -> bool) -> (u64, u64) {
    let mut hits = 0;
    for u in 0..n {
        for v in 0..n {
            if u != v && pred(u, v) {
                hits += 1;
            }
        }
    }
    (hits, (n * (n - 1)) as u64)
}

#[test]
fn transition_probabilities_match_pair_enumeration() {
    for n in 2..=12 {
        for i in 1..=n {
            // Agents 0..i are still in the initial state.
            let oracle = count_pairs(n, |u, v| u < i || v < i);
            assert!(
                same_ratio(p_leave_ratio(i, n).unwrap(), oracle),
                "leave i={i} n={n}"
            );
        }
        for k in 1..n {
            let oracle = count_pairs(n, |u, v| (u < k) != (v < k));
            assert!(
                same_ratio(p_epidemic_ratio(k, n).unwrap(), oracle),
                "epidemic k={k} n={n}"
            );
        }
    }
}
