//! Property-based invariants over randomized instances.

mod common;

use common::{random_digraph, ring_with_chords};
use proptest::prelude::*;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use leadsel::graph::{gen_geometric, GeometricParams};
use leadsel::{
    build_laplacian, error_bound, expm_neg, select_k_leaders, ErrorEvaluator, ExpertsState,
    Matrix, Topology, WalkChain,
};

fn leaders_from_mask(n: usize, mask: u32) -> Vec<usize> {
    (0..n).filter(|&v| mask & (1 << v) != 0).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_rows_behave(seed in any::<u64>(), n in 2usize..=10, mask in any::<u32>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = random_digraph(n, 0.4, &mut rng);
        let leaders = leaders_from_mask(n, mask);
        let l = build_laplacian(&topo, &leaders).unwrap();
        for i in 0..n {
            let row_sum: f64 = l.row(i).sum();
            prop_assert!(row_sum.abs() < 1e-12);
            for j in 0..n {
                if i != j {
                    prop_assert!(l[[i, j]] <= 0.0);
                }
            }
            if leaders.contains(&i) {
                prop_assert!(l.row(i).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn transition_matrices_are_stochastic(seed in any::<u64>(), n in 2usize..=10, mask in any::<u32>(), t in 0.01f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = random_digraph(n, 0.45, &mut rng);
        let leaders = leaders_from_mask(n, mask);
        let l = build_laplacian(&topo, &leaders).unwrap();
        let p = expm_neg(&l, t).unwrap();
        for i in 0..n {
            let row_sum: f64 = p.row(i).sum();
            prop_assert!((row_sum - 1.0).abs() < 1e-9, "row {} sums to {}", i, row_sum);
            prop_assert!(p.row(i).iter().all(|&v| v >= 0.0));
            if leaders.contains(&i) {
                for j in 0..n {
                    prop_assert_eq!(p[[i, j]], if i == j { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn exponentials_compose_as_a_semigroup(seed in any::<u64>(), n in 2usize..=8, s in 0.05f64..1.5, t in 0.05f64..1.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = ring_with_chords(n, 0.3, 0.3, 1.5, false, &mut rng);
        let l = build_laplacian(&topo, &[0]).unwrap();
        let whole = expm_neg(&l, s + t).unwrap();
        let parts = expm_neg(&l, s).unwrap().dot(&expm_neg(&l, t).unwrap());
        for ((i, j), &v) in whole.indexed_iter() {
            prop_assert!((v - parts[[i, j]]).abs() < 1e-8, "entry ({}, {})", i, j);
        }
    }

    #[test]
    fn bound_never_increases_when_leaders_are_added(seed in any::<u64>(), n in 2usize..=8, small_mask in any::<u32>(), extra in any::<u32>(), t in 0.05f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = ring_with_chords(n, 0.3, 0.3, 1.6, false, &mut rng);
        let small = leaders_from_mask(n, small_mask);
        let large = leaders_from_mask(n, small_mask | extra);
        let b_small = error_bound(&topo, &small, t, 2.0).unwrap();
        let b_large = error_bound(&topo, &large, t, 2.0).unwrap();
        prop_assert!(b_large <= b_small + 1e-9, "{} -> {}", b_small, b_large);
    }

    #[test]
    fn supermodular_inequality_on_random_triples(seed in any::<u64>(), n in 3usize..=8, s_mask in any::<u32>(), extra in any::<u32>(), v in 0usize..8, t in 0.1f64..1.5, p_choice in 0usize..3) {
        let v = v % n;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = ring_with_chords(n, 0.35, 0.3, 1.6, false, &mut rng);
        let p = [1.0, 2.0, 3.0][p_choice];
        let full = (1u32 << n) - 1;
        let s_mask = s_mask & full & !(1 << v);
        let t_mask = (s_mask | (extra & full)) & !(1 << v);
        let f = |mask: u32| error_bound(&topo, &leaders_from_mask(n, mask), t, p).unwrap();
        let gain_small = f(s_mask) - f(s_mask | (1 << v));
        let gain_large = f(t_mask) - f(t_mask | (1 << v));
        prop_assert!(gain_small >= gain_large - 1e-9, "gains {} vs {}", gain_small, gain_large);
    }

    #[test]
    fn geometric_adjacency_is_symmetric_and_seeded(seed in any::<u64>()) {
        let params = GeometricParams {
            n: 14,
            area_side: 100.0,
            comm_range: 45.0,
            weight_range: (0.0, 5.0),
            symmetric_weights: false,
        };
        let a = gen_geometric::<f64>(&params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = gen_geometric::<f64>(&params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(&a, &b);
        for (i, j, _) in a.edges() {
            prop_assert!(a.weight(j, i).is_some(), "missing reverse of ({}, {})", i, j);
        }
    }

    #[test]
    fn walk_rows_remain_distributions(seed in any::<u64>(), n in 2usize..=8, steps in 0usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = ring_with_chords(n, 0.3, 0.4, 1.5, false, &mut rng);
        let chain = WalkChain::from_topology(&topo, &[0], 0.3).unwrap();
        let hits = chain.hit_probabilities(steps);
        for i in 0..n {
            let sum: f64 = hits.row(i).sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(hits.row(i).iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
        }
    }

    #[test]
    fn escape_mass_decomposes_and_shrinks_with_more_absorbers(seed in any::<u64>(), n in 3usize..=8, steps in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = ring_with_chords(n, 0.3, 0.4, 1.5, false, &mut rng);
        let small = WalkChain::from_topology(&topo, &[0], 0.3).unwrap();
        let large = WalkChain::from_topology(&topo, &[0, 1], 0.3).unwrap();
        let hits = small.hit_probabilities(steps);
        for start in 0..n {
            let e_small = small.escape_probability(steps, start).unwrap();
            let e_large = large.escape_probability(steps, start).unwrap();
            prop_assert!(e_large <= e_small + 1e-12);
            let not_absorbed: f64 = (1..n).map(|j| hits[[start, j]]).sum();
            prop_assert!((not_absorbed - e_small).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_gains_are_maximal_at_each_step(seed in any::<u64>(), n in 3usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = ring_with_chords(n, 0.3, 0.4, 1.5, false, &mut rng);
        let ev = ErrorEvaluator::static_network(topo, 0.5, 2.0).unwrap();
        let k = n.min(3);
        let res = select_k_leaders(&ev, k).unwrap();
        let mut prefix: Vec<usize> = Vec::new();
        let mut base = ev.bound(&[]).unwrap();
        for (step, &chosen) in res.leaders.iter().enumerate() {
            let chosen_gain = base - res.bound_trace[step];
            for v in 0..n {
                if prefix.contains(&v) {
                    continue;
                }
                let mut set = prefix.clone();
                set.push(v);
                let gain = base - ev.bound(&set).unwrap();
                prop_assert!(gain <= chosen_gain + 1e-12, "step {} node {}", step, v);
            }
            prefix.push(chosen);
            base = res.bound_trace[step];
        }
    }

    #[test]
    fn topology_json_round_trips(seed in any::<u64>(), n in 2usize..=9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = random_digraph(n, 0.4, &mut rng);
        let json = serde_json::to_string(&topo).unwrap();
        let back: Topology<f64> = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, topo);
    }
}

/// RNG that replays a recorded word stream; used to check that relabeling
/// nodes together with their per-node draws permutes the selected sets.
struct ReplayRng {
    words: Vec<u64>,
    pos: usize,
}

impl RngCore for ReplayRng {
    fn next_u32(&mut self) -> u32 {
        self.next_u64() as u32
    }
    fn next_u64(&mut self) -> u64 {
        let w = self.words[self.pos];
        self.pos += 1;
        w
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}

#[test]
fn weighted_selection_is_permutation_equivariant() {
    // One 64-bit word is consumed per node per slot, in index order. Feeding
    // the permuted word stream to the permuted weight matrix must permute
    // the chosen set.
    let n = 7;
    let k = 3;
    let mut weights = Matrix::<f64>::ones((n, k));
    let mut seeder = ChaCha8Rng::seed_from_u64(123);
    for w in weights.iter_mut() {
        *w = 0.1 + rand::Rng::gen::<f64>(&mut seeder) * 5.0;
    }

    let words: Vec<u64> = {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        (0..n * k).map(|_| rng.next_u64()).collect()
    };

    let run = |weights: Matrix<f64>, words: Vec<u64>| -> Vec<usize> {
        let mut state = ExpertsState::from_weights(weights, 0.8).unwrap();
        let mut rng = ReplayRng { words, pos: 0 };
        state.select(None, 2.0, &mut rng).unwrap()
    };

    let baseline = run(weights.clone(), words.clone());

    let perm: Vec<usize> = vec![3, 0, 6, 1, 5, 2, 4]; // sigma(i)
    let mut permuted_weights = Matrix::<f64>::zeros((n, k));
    for i in 0..n {
        for j in 0..k {
            permuted_weights[[perm[i], j]] = weights[[i, j]];
        }
    }
    let mut permuted_words = vec![0u64; n * k];
    for slot in 0..k {
        for i in 0..n {
            permuted_words[slot * n + perm[i]] = words[slot * n + i];
        }
    }
    let permuted = run(permuted_weights, permuted_words);
    let expected: Vec<usize> = baseline.iter().map(|&v| perm[v]).collect();
    assert_eq!(permuted, expected);
}

#[test]
fn bound_is_invariant_under_relabeling() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let topo = ring_with_chords(7, 0.4, 0.3, 1.7, false, &mut rng);
    let perm: Vec<usize> = vec![2, 5, 0, 6, 3, 1, 4];
    let relabeled = Topology::new(
        7,
        topo.edges().map(|(i, j, w)| (perm[i], perm[j], w)),
    )
    .unwrap();
    for leaders in [vec![0usize], vec![1, 4], vec![0, 2, 6]] {
        let mapped: Vec<usize> = leaders.iter().map(|&v| perm[v]).collect();
        let a = error_bound(&topo, &leaders, 0.7, 2.0).unwrap();
        let b = error_bound(&relabeled, &mapped, 0.7, 2.0).unwrap();
        assert!((a - b).abs() < 1e-10, "S={leaders:?}: {a} vs {b}");
    }
}
