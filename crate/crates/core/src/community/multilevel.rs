//! Multi-level modularity optimization (Louvain).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Network, Partition};
use crate::graph::WeightedGraph;

const MIN_GAIN: f64 = 1e-12;

/// Local moving until no single-node move improves modularity, then
/// aggregation of communities into super-nodes; repeated until a level
/// makes no move. The node sweep order of each level is drawn from `seed`.
pub fn multilevel(g: &WeightedGraph, seed: u64) -> Partition {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::from_graph(g);
    let mut membership: Vec<usize> = (0..net.len()).collect();
    if net.total == 0.0 {
        return Partition::singletons(g);
    }

    loop {
        let (community, moved) = local_moves(&net, &mut rng);
        if !moved {
            break;
        }
        let (relabelled, count) = compact(&community);
        for m in membership.iter_mut() {
            *m = relabelled[*m];
        }
        net = aggregate(&net, &relabelled, count);
    }
    Partition::from_labels(membership, g.fingerprint())
}

fn local_moves(net: &Network, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
    let n = net.len();
    let total = net.total;
    let mut community: Vec<usize> = (0..n).collect();
    let mut community_strength = net.strength.clone();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut link_to = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut moved_any = false;
    loop {
        let mut moved = false;
        for &node in &order {
            let current = community[node];
            let k = net.strength[node];
            for &(nbr, w) in &net.adj[node] {
                let c = community[nbr];
                if link_to[c] == 0.0 {
                    touched.push(c);
                }
                link_to[c] += w;
            }
            community_strength[current] -= k;

            let gain = |c: usize, link: f64| link / total - community_strength[c] * k / (2.0 * total * total);
            let mut best = current;
            let mut best_gain = gain(current, link_to[current]);
            touched.sort_unstable();
            for &c in &touched {
                let delta = gain(c, link_to[c]);
                if delta > best_gain + MIN_GAIN {
                    best = c;
                    best_gain = delta;
                }
            }
            for &c in &touched {
                link_to[c] = 0.0;
            }
            touched.clear();

            community_strength[best] += k;
            if best != current {
                community[node] = best;
                moved = true;
                moved_any = true;
            }
        }
        if !moved {
            break;
        }
    }
    (community, moved_any)
}

/// Relabels communities to `0..count` by first appearance.
fn compact(community: &[usize]) -> (Vec<usize>, usize) {
    let mut map = vec![usize::MAX; community.len()];
    let mut next = 0;
    let relabelled = community
        .iter()
        .map(|&c| {
            if map[c] == usize::MAX {
                map[c] = next;
                next += 1;
            }
            map[c]
        })
        .collect();
    (relabelled, next)
}

fn aggregate(net: &Network, community: &[usize], count: usize) -> Network {
    let mut self_loops = vec![0.0; count];
    let mut strength = vec![0.0; count];
    let mut links: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); count];
    for node in 0..net.len() {
        let c = community[node];
        self_loops[c] += net.self_loops[node];
        strength[c] += net.strength[node];
        for &(nbr, w) in &net.adj[node] {
            let d = community[nbr];
            if c == d {
                // each internal edge is seen from both ends
                self_loops[c] += w / 2.0;
            } else {
                *links[c].entry(d).or_insert(0.0) += w;
            }
        }
    }
    Network {
        adj: links.into_iter().map(|m| m.into_iter().collect()).collect(),
        self_loops,
        strength,
        total: net.total,
    }
}
