use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use treebridge::diagnostics::{tmrca, TreeSequence};
use treebridge::newick::{parse_newick, to_newick};
use treebridge::smc::{sample_initial_tree, sample_op, simulate_smc, ModelParams};
use treebridge::state::{Block, ChainState};
use treebridge::tree::{apply_spr, spr_ops_between, Clade, SprOp, Tree};

fn random_tree(seed: u64, n: usize) -> Tree {
    sample_initial_tree(&mut ChaCha8Rng::seed_from_u64(seed), n).unwrap()
}

/// A non-identity SPR drawn from the prior kernel with a high rate.
fn random_op(rng: &mut ChaCha8Rng, tree: &Tree) -> SprOp {
    let params = ModelParams::new(1.0, 50.0).unwrap();
    loop {
        let op = sample_op(rng, tree, &params).unwrap();
        if !op.is_identity() {
            return op;
        }
    }
}

fn check_structure(tree: &Tree) {
    let topo = tree.topology();
    let n = topo.n_leaves();
    assert_eq!(topo.root(), 2 * n - 1);
    assert_eq!(topo.clade(topo.root()), Clade::all(n));
    for x in 1..topo.root() {
        let p = topo.parent(x).unwrap();
        assert!(p > n && p > x);
        assert!(tree.time(p) > tree.time(x));
        assert!(topo.clade(x).is_subset(topo.clade(p)));
    }
    for x in topo.internal_nodes() {
        let [a, b] = topo.children(x).unwrap();
        assert!(a < b);
        assert!(!topo.clade(a).intersects(topo.clade(b)));
        assert_eq!(topo.clade(a).union(topo.clade(b)), topo.clade(x));
    }
    let internal: Vec<f64> = topo.internal_nodes().map(|x| tree.time(x)).collect();
    assert!(internal.windows(2).all(|w| w[0] < w[1]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn sampled_trees_are_canonical(seed in any::<u64>(), n in 2usize..12) {
        check_structure(&random_tree(seed, n));
    }

    #[test]
    fn spr_output_is_canonical_and_keeps_other_times(seed in any::<u64>(), n in 3usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(seed ^ 0x5eed, n);
        let op = random_op(&mut rng, &tree);
        let next = apply_spr(&tree, &op).unwrap();
        check_structure(&next);
        let p = tree.topology().parent(op.u).unwrap();
        let mut before: Vec<f64> = tree.topology().internal_nodes().filter(|&x| x != p).map(|x| tree.time(x)).collect();
        before.push(op.w);
        before.sort_by(f64::total_cmp);
        let after: Vec<f64> = next.topology().internal_nodes().map(|x| next.time(x)).collect();
        prop_assert_eq!(before, after);
        let moved = tree.topology().clade(op.u);
        let u_next = next.topology().node_with_clade(moved).unwrap();
        prop_assert_eq!(next.parent_time(u_next), op.w);
    }

    #[test]
    fn spr_is_reversible(seed in any::<u64>(), n in 3usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(seed.rotate_left(7), n);
        let op = random_op(&mut rng, &tree);
        let next = apply_spr(&tree, &op).unwrap();
        if next.topology() != tree.topology() {
            let forward = spr_ops_between(tree.topology(), next.topology());
            prop_assert!(forward.contains(&(op.u, op.v)), "{:?} not in {:?}", (op.u, op.v), forward);
            let back = spr_ops_between(next.topology(), tree.topology());
            prop_assert!(!back.is_empty());
            for (u, v) in back {
                prop_assert!(next.topology().spr_successors(u, v).contains(tree.topology()));
            }
        }
    }

    #[test]
    fn ops_between_round_trip(seed in any::<u64>(), n in 3usize..9) {
        let tree = random_tree(seed, n);
        let topo = tree.topology();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31));
        let u = rng.gen_range(1..topo.root());
        let v = rng.gen_range(1..=topo.root());
        for succ in topo.spr_successors(u, v) {
            if &succ == topo {
                continue;
            }
            let ops = spr_ops_between(topo, &succ);
            prop_assert!(ops.contains(&(u, v)));
            for (a, b) in ops {
                prop_assert!(topo.spr_successors(a, b).contains(&succ));
            }
        }
    }

    #[test]
    fn newick_round_trip(seed in any::<u64>(), n in 2usize..12) {
        let tree = random_tree(seed, n);
        let back = parse_newick(&to_newick(&tree)).unwrap();
        prop_assert_eq!(back.topology(), tree.topology());
        for x in tree.topology().internal_nodes() {
            prop_assert!((back.time(x) - tree.time(x)).abs() <= 1e-12 * (1.0 + tree.time(x)));
        }
    }

    #[test]
    fn tmrca_is_symmetric_and_below_every_site(seed in any::<u64>(), n in 3usize..7) {
        let params = ModelParams::new(0.01, 0.02).unwrap();
        let sim = simulate_smc(&mut ChaCha8Rng::seed_from_u64(seed), n, 200, &params).unwrap();
        let blocks: Vec<Block> = sim
            .trees
            .iter()
            .enumerate()
            .map(|(i, d)| Block { start: i, end: i, tree: d.tree.clone(), op: d.op })
            .collect();
        let state = ChainState::new(blocks, 200).unwrap();
        let seq = TreeSequence::from(&state);
        for a in 1..=n {
            for b in a + 1..=n {
                let t = tmrca(&seq, a, b);
                prop_assert_eq!(t, tmrca(&seq, b, a));
                let naive = sim.trees.iter().map(|d| d.tree.mrca_time(a, b)).fold(f64::INFINITY, f64::min);
                prop_assert_eq!(t, naive);
                prop_assert!(t > 0.0);
            }
        }
    }
}
