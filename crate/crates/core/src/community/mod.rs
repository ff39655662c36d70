//! Community detection on weighted projections and partition comparison.
//!
//! Modularity follows the weighted Newman–Girvan convention
//! `Q = Σ_c [ w_in(c)/W − (s(c)/2W)² ]`, where `W` is the total edge weight,
//! `w_in(c)` the weight inside community `c` and `s(c)` the summed weighted
//! degree of its members.

mod fastgreedy;
mod multilevel;
mod spinglass;

use std::collections::HashMap;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;

pub use fastgreedy::fastgreedy;
pub use multilevel::multilevel;
pub use spinglass::{spinglass, spinglass_by_component, SpinglassParams};

/// Assignment of every node to a community; ids are contiguous from 0 and
/// numbered in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    assignment: Vec<u32>,
    fingerprint: u64,
}

impl Partition {
    /// Normalizes arbitrary labels into contiguous first-appearance ids.
    pub fn from_labels<I>(labels: I, fingerprint: u64) -> Self
    where
        I: IntoIterator<Item = usize>,
    {
        let mut remap: HashMap<usize, u32> = HashMap::new();
        let assignment = labels
            .into_iter()
            .map(|l| {
                let next = remap.len() as u32;
                *remap.entry(l).or_insert(next)
            })
            .collect();
        Partition { assignment, fingerprint }
    }

    pub fn singletons(g: &WeightedGraph) -> Self {
        Self::from_labels(0..g.node_count(), g.fingerprint())
    }

    pub fn whole(g: &WeightedGraph) -> Self {
        Self::from_labels(std::iter::repeat_n(0, g.node_count()), g.fingerprint())
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    pub fn community_of(&self, node: usize) -> usize {
        self.assignment[node] as usize
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn community_count(&self) -> usize {
        self.assignment.iter().map(|&c| c as usize + 1).max().unwrap_or(0)
    }

    /// Members of each community, in community-id order.
    pub fn communities(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.community_count()];
        for (node, &c) in self.assignment.iter().enumerate() {
            out[c as usize].push(node);
        }
        out
    }

    pub fn write_csv<W: Write>(&self, g: &WeightedGraph, sink: W) -> Result<()> {
        check_fingerprint(g, self)?;
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["node_id", "community"])?;
        for (id, c) in g.ids().iter().zip(&self.assignment) {
            w.write_record([id.as_str(), &c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a `node_id,community` file; every node of `g` must appear once.
    pub fn read_csv<R: Read>(g: &WeightedGraph, source: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(source);
        if r.headers()?.iter().collect::<Vec<_>>() != ["node_id", "community"] {
            return Err(Error::Format("partition file must have header `node_id,community`".into()));
        }
        let index: HashMap<&str, usize> =
            g.ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut labels: Vec<Option<usize>> = vec![None; g.node_count()];
        for row in r.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let node = *index
                .get(&row[0])
                .ok_or_else(|| Error::Row { line, message: format!("unknown node `{}`", &row[0]) })?;
            let c = row[1]
                .parse::<usize>()
                .map_err(|_| Error::Row { line, message: format!("bad community `{}`", &row[1]) })?;
            if labels[node].replace(c).is_some() {
                return Err(Error::Row { line, message: format!("node `{}` listed twice", &row[0]) });
            }
        }
        let labels = labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| l.ok_or_else(|| Error::Format(format!("node `{}` has no community", g.ids()[i]))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_labels(labels, g.fingerprint()))
    }
}

fn check_fingerprint(g: &WeightedGraph, p: &Partition) -> Result<()> {
    if p.fingerprint != g.fingerprint() || p.len() != g.node_count() {
        return Err(Error::Argument("partition was computed on a different node set".into()));
    }
    Ok(())
}

pub fn modularity(g: &WeightedGraph, p: &Partition) -> Result<f64> {
    check_fingerprint(g, p)?;
    let total = g.total_weight() as f64;
    if total == 0.0 {
        return Ok(0.0);
    }
    let k = p.community_count();
    let mut inside = vec![0.0; k];
    let mut strength = vec![0.0; k];
    for e in g.edges() {
        let (a, b) = (p.community_of(e.source as usize), p.community_of(e.target as usize));
        let w = e.weight as f64;
        if a == b {
            inside[a] += w;
        }
        strength[a] += w;
        strength[b] += w;
    }
    Ok(inside
        .iter()
        .zip(&strength)
        .map(|(w_in, s)| w_in / total - (s / (2.0 * total)).powi(2))
        .sum())
}

/// Unadjusted Rand index: the fraction of node pairs on which both
/// partitions agree (together in both, or apart in both).
pub fn rand_index(a: &Partition, b: &Partition) -> Result<f64> {
    if a.fingerprint != b.fingerprint || a.len() != b.len() {
        return Err(Error::Argument("partitions cover different node sets".into()));
    }
    let n = a.len() as u64;
    if n < 2 {
        return Ok(1.0);
    }
    let pairs = |c: u64| c * c.saturating_sub(1) / 2;
    let mut joint: HashMap<(u32, u32), u64> = HashMap::new();
    let mut rows = vec![0u64; a.community_count()];
    let mut cols = vec![0u64; b.community_count()];
    for (&x, &y) in a.assignment.iter().zip(&b.assignment) {
        *joint.entry((x, y)).or_default() += 1;
        rows[x as usize] += 1;
        cols[y as usize] += 1;
    }
    let together_both: u64 = joint.values().map(|&c| pairs(c)).sum();
    let together_a: u64 = rows.iter().map(|&c| pairs(c)).sum();
    let together_b: u64 = cols.iter().map(|&c| pairs(c)).sum();
    let total = pairs(n);
    // apart in both = total - together_a - together_b + together_both
    let agree = total + 2 * together_both - together_a - together_b;
    Ok(agree as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    FastGreedy,
    Multilevel,
    Spinglass,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::FastGreedy => "fastgreedy",
            Method::Multilevel => "multilevel",
            Method::Spinglass => "spinglass",
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "fastgreedy" | "fg" => Ok(Method::FastGreedy),
            "multilevel" | "ml" => Ok(Method::Multilevel),
            "spinglass" | "sg" => Ok(Method::Spinglass),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

/// Runs `method` on `g`. Spinglass is applied per connected component, so
/// isolated nodes end up as singletons.
pub fn detect(g: &WeightedGraph, method: Method, seed: u64, params: &SpinglassParams) -> Partition {
    match method {
        Method::FastGreedy => fastgreedy(g),
        Method::Multilevel => multilevel(g, seed),
        Method::Spinglass => spinglass_by_component(g, seed, params),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub method_a: String,
    pub method_b: String,
    pub rand_index: f64,
}

/// Float adjacency with optional self-loop weight, used by the optimizers.
/// `self_loops[i]` is the weight internal to node `i` (counted once).
#[derive(Debug, Clone)]
pub(crate) struct Network {
    pub adj: Vec<Vec<(usize, f64)>>,
    pub self_loops: Vec<f64>,
    pub strength: Vec<f64>,
    pub total: f64,
}

impl Network {
    pub fn from_graph(g: &WeightedGraph) -> Self {
        let adj: Vec<Vec<(usize, f64)>> = g
            .adjacency()
            .into_iter()
            .map(|row| row.into_iter().map(|(j, w)| (j, w as f64)).collect())
            .collect();
        let strength = adj.iter().map(|row| row.iter().map(|(_, w)| w).sum()).collect();
        Network {
            self_loops: vec![0.0; adj.len()],
            adj,
            strength,
            total: g.total_weight() as f64,
        }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }
}
