//! Potts-model community detection by simulated annealing.
//!
//! Minimizes `H = −Σ_{i<j} (A_ij − γ k_i k_j / 2W) δ(σ_i, σ_j)` with `γ = 1`
//! using heat-bath single-spin updates. Energies are measured in units of the
//! mean edge weight so the temperature schedule does not depend on the
//! weight scale of the input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Network, Partition};
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinglassParams {
    /// Upper bound on the number of spin states (communities).
    pub spins_max: usize,
    pub start_temp: f64,
    pub end_temp: f64,
    /// Multiplicative factor applied to the temperature after each stage.
    pub cooling: f64,
    /// Full sweeps over the nodes at each temperature.
    pub sweeps_per_temp: usize,
}

impl Default for SpinglassParams {
    fn default() -> Self {
        SpinglassParams { spins_max: 25, start_temp: 1.0, end_temp: 0.01, cooling: 0.99, sweeps_per_temp: 10 }
    }
}

impl SpinglassParams {
    fn validate(&self) -> Result<()> {
        if self.spins_max == 0 {
            return Err(Error::Argument("spins_max must be at least 1".into()));
        }
        if !(self.start_temp > self.end_temp && self.end_temp > 0.0) {
            return Err(Error::Argument("temperatures must satisfy start_temp > end_temp > 0".into()));
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return Err(Error::Argument("cooling factor must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Anneals a connected graph. Disconnected input is refused; use
/// [`spinglass_by_component`] for those.
pub fn spinglass(g: &WeightedGraph, seed: u64, params: &SpinglassParams) -> Result<Partition> {
    params.validate()?;
    if !g.is_connected() {
        return Err(Error::Refused(
            "spinglass needs a connected graph; run it on each connected component".into(),
        ));
    }
    Ok(Partition::from_labels(anneal(g, seed, params), g.fingerprint()))
}

/// Anneals each connected component separately (component `c` uses seed
/// `seed + c`) and concatenates the results.
pub fn spinglass_by_component(g: &WeightedGraph, seed: u64, params: &SpinglassParams) -> Partition {
    let mut labels = vec![0usize; g.node_count()];
    let mut offset = 0;
    for (c, members) in g.components().into_iter().enumerate() {
        let sub = g.subgraph(&members);
        let spins = anneal(&sub, seed.wrapping_add(c as u64), params);
        let width = spins.iter().max().map_or(0, |m| m + 1);
        for (&node, s) in members.iter().zip(spins) {
            labels[node] = offset + s;
        }
        offset += width;
    }
    Partition::from_labels(labels, g.fingerprint())
}

fn anneal(g: &WeightedGraph, seed: u64, params: &SpinglassParams) -> Vec<usize> {
    let n = g.node_count();
    if n <= 1 || g.edge_count() == 0 {
        return vec![0; n];
    }
    let net = Network::from_graph(g);
    let unit = net.total / g.edge_count() as f64;
    let two_w = 2.0 * net.total;
    let q = params.spins_max.min(n);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spin: Vec<usize> = (0..n).map(|_| rng.random_range(0..q)).collect();
    let mut spin_strength = vec![0.0; q];
    for (i, &s) in spin.iter().enumerate() {
        spin_strength[s] += net.strength[i];
    }

    let mut link = vec![0.0; q];
    let mut energy = vec![0.0; q];
    let mut weights = vec![0.0; q];

    // energy[s]: cost of placing node i in spin s, relative to leaving it unassigned
    let mut local_energies = |i: usize, spin: &[usize], spin_strength: &[f64], energy: &mut [f64]| {
        link.iter_mut().for_each(|l| *l = 0.0);
        for &(j, w) in &net.adj[i] {
            link[spin[j]] += w;
        }
        let k = net.strength[i];
        for s in 0..q {
            let others = spin_strength[s] - if s == spin[i] { k } else { 0.0 };
            energy[s] = -(link[s] - k * others / two_w) / unit;
        }
    };

    let mut temp = params.start_temp;
    while temp >= params.end_temp {
        for _ in 0..params.sweeps_per_temp * n {
            let i = rng.random_range(0..n);
            local_energies(i, &spin, &spin_strength, &mut energy);
            let floor = energy.iter().copied().fold(f64::INFINITY, f64::min);
            let mut norm = 0.0;
            for s in 0..q {
                weights[s] = (-(energy[s] - floor) / temp).exp();
                norm += weights[s];
            }
            let mut pick = rng.random::<f64>() * norm;
            let mut chosen = q - 1;
            for (s, &w) in weights.iter().enumerate() {
                if pick < w {
                    chosen = s;
                    break;
                }
                pick -= w;
            }
            move_spin(i, chosen, &mut spin, &mut spin_strength, net.strength[i]);
        }
        temp *= params.cooling;
    }

    // quench to a local minimum
    loop {
        let mut changed = false;
        for i in 0..n {
            local_energies(i, &spin, &spin_strength, &mut energy);
            let current = spin[i];
            let mut best = current;
            for s in 0..q {
                if energy[s] < energy[best] - 1e-12 {
                    best = s;
                }
            }
            if best != current {
                move_spin(i, best, &mut spin, &mut spin_strength, net.strength[i]);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    spin
}

fn move_spin(i: usize, to: usize, spin: &mut [usize], spin_strength: &mut [f64], k: f64) {
    let from = spin[i];
    if from != to {
        spin_strength[from] -= k;
        spin_strength[to] += k;
        spin[i] = to;
    }
}
