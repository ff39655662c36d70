//! Greedy agglomerative modularity maximization (Clauset–Newman–Moore).

use std::collections::BTreeMap;

use super::{Network, Partition};
use crate::graph::WeightedGraph;

/// Repeatedly merges the pair of adjacent communities with the largest
/// modularity gain, records the whole merge sequence and cuts it where
/// modularity peaks. Ties go to the lowest `(i, j)` community pair.
pub fn fastgreedy(g: &WeightedGraph) -> Partition {
    let net = Network::from_graph(g);
    let n = net.len();
    if net.total == 0.0 {
        return Partition::singletons(g);
    }
    let total = net.total;
    let two_w_sq = 2.0 * total * total;

    let mut links: Vec<BTreeMap<usize, f64>> = net
        .adj
        .iter()
        .map(|row| row.iter().copied().collect())
        .collect();
    let mut strength = net.strength.clone();
    let mut alive = vec![true; n];

    let mut q: f64 = strength.iter().map(|s| -(s / (2.0 * total)).powi(2)).sum();
    let mut best_q = q;
    let mut best_step = 0;
    let mut merges: Vec<(usize, usize)> = Vec::new();

    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for (&j, &w) in links[i].range(i + 1..) {
                let gain = w / total - strength[i] * strength[j] / two_w_sq;
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, i, j));
                }
            }
        }
        let Some((gain, i, j)) = best else { break };

        // fold j into i
        let absorbed = std::mem::take(&mut links[j]);
        for (k, w) in absorbed {
            if k == i {
                continue;
            }
            links[k].remove(&j);
            *links[k].entry(i).or_insert(0.0) += w;
            *links[i].entry(k).or_insert(0.0) += w;
        }
        links[i].remove(&j);
        strength[i] += strength[j];
        strength[j] = 0.0;
        alive[j] = false;
        merges.push((i, j));

        q += gain;
        if q > best_q {
            best_q = q;
            best_step = merges.len();
        }
    }

    let mut label: Vec<usize> = (0..n).collect();
    for &(i, j) in &merges[..best_step] {
        let target = label[i];
        let source = label[j];
        for l in label.iter_mut() {
            if *l == source {
                *l = target;
            }
        }
    }
    Partition::from_labels(label, g.fingerprint())
}
