#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use platoon_core::Topology;

/// Random topology on `n` followers in which every follower hears the leader.
pub fn random_connected(rng: &mut ChaCha8Rng, n: usize) -> Topology {
    loop {
        let p = rng.gen_range(0.1..0.7);
        let edges: BTreeSet<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|_| rng.gen_bool(p))
            .collect();
        let mut pins: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.25)).collect();
        if pins.is_empty() {
            pins.push(rng.gen_range(0..n));
        }
        let t = Topology::new(n, edges, pins).unwrap();
        if t.satisfies_spanning_tree() {
            return t;
        }
    }
}
