//! Bipartite pages × users graphs and their weighted one-mode projections.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::{Action, Dataset};

/// Incidence structure `M` for one action type: rows are pages, columns users.
/// Entries are binary; repeated actions by a user on a page collapse to one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    pub action: Action,
    pages: Vec<String>,
    page_names: Vec<String>,
    users: Vec<String>,
    page_users: Vec<Vec<u32>>,
    user_pages: Vec<Vec<u32>>,
}

impl BipartiteGraph {
    /// Builds a graph directly from `(page, user)` incidence pairs. Every page in
    /// `pages` is kept even without incident users.
    pub fn from_incidence<'a>(
        action: Action,
        pages: impl IntoIterator<Item = &'a str>,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Self {
        let mut page_set: BTreeSet<&str> = pages.into_iter().collect();
        let mut edges: BTreeSet<(&str, &str)> = BTreeSet::new();
        let mut user_set: BTreeSet<&str> = BTreeSet::new();
        for (page, user) in pairs {
            page_set.insert(page);
            user_set.insert(user);
            edges.insert((page, user));
        }
        let pages: Vec<String> = page_set.into_iter().map(str::to_string).collect();
        let users: Vec<String> = user_set.into_iter().map(str::to_string).collect();
        let page_index: HashMap<&str, u32> =
            pages.iter().enumerate().map(|(i, p)| (p.as_str(), i as u32)).collect();
        let user_index: HashMap<&str, u32> =
            users.iter().enumerate().map(|(i, u)| (u.as_str(), i as u32)).collect();

        let mut page_users = vec![Vec::new(); pages.len()];
        let mut user_pages = vec![Vec::new(); users.len()];
        for (page, user) in edges {
            let (p, u) = (page_index[page], user_index[user]);
            page_users[p as usize].push(u);
            user_pages[u as usize].push(p);
        }
        for row in page_users.iter_mut().chain(user_pages.iter_mut()) {
            row.sort_unstable();
        }
        BipartiteGraph {
            action,
            page_names: pages.clone(),
            pages,
            users,
            page_users,
            user_pages,
        }
    }

    /// Builds a graph from per-user page index lists. Ids are taken as given
    /// (and should sort in index order); duplicate entries collapse.
    pub fn from_user_lists(action: Action, pages: Vec<String>, users: Vec<String>, lists: &[Vec<u32>]) -> Self {
        assert_eq!(users.len(), lists.len(), "one page list per user");
        let mut page_users = vec![Vec::new(); pages.len()];
        let mut user_pages = Vec::with_capacity(lists.len());
        for (u, list) in lists.iter().enumerate() {
            let mut list = list.clone();
            list.sort_unstable();
            list.dedup();
            for &p in &list {
                page_users[p as usize].push(u as u32);
            }
            user_pages.push(list);
        }
        BipartiteGraph { action, page_names: pages.clone(), pages, users, page_users, user_pages }
    }

    pub fn pages(&self) -> &[String] {
        &self.pages
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    /// Users adjacent to page `p`, sorted by index.
    pub fn page_neighbors(&self, p: usize) -> &[u32] {
        &self.page_users[p]
    }

    pub fn user_neighbors(&self, u: usize) -> &[u32] {
        &self.user_pages[u]
    }

    pub fn edge_count(&self) -> usize {
        self.page_users.iter().map(Vec::len).sum()
    }
}

/// Builds `M` for likes or comments. Pages come from every record of the
/// dataset plus the pages table (restricted to the dataset's country when set),
/// so pages without any action of this type stay as isolated rows.
pub fn build_bipartite(d: &Dataset, action: Action) -> Result<BipartiteGraph> {
    if action == Action::Share {
        return Err(Error::Argument("bipartite graphs are built from likes or comments only".into()));
    }
    let mut pages: BTreeSet<&str> = d.records.iter().map(|r| r.page_id.as_str()).collect();
    for (id, info) in d.pages.iter().flatten() {
        if d.country.is_none() || info.country == d.country {
            pages.insert(id.as_str());
        }
    }
    let pairs = d
        .records
        .iter()
        .filter(|r| r.action == action)
        .map(|r| (r.page_id.as_str(), r.user_id.as_str()));
    let mut graph = BipartiteGraph::from_incidence(action, pages, pairs);
    graph.page_names = graph
        .pages
        .iter()
        .map(|id| d.page_name(id).unwrap_or(id).to_string())
        .collect();
    Ok(graph)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub source: u32,
    pub target: u32,
    pub weight: u64,
}

/// Undirected graph with positive integer weights, no self-loops and
/// edges stored once with `source < target`, sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightedGraph {
    ids: Vec<String>,
    labels: Vec<String>,
    edges: Vec<Edge>,
}

impl WeightedGraph {
    /// Builds a graph from `(a, b, weight)` triples over nodes `0..n`. Parallel
    /// edges are summed; self-loops and zero weights are rejected.
    pub fn from_edges(ids: Vec<String>, triples: &[(usize, usize, u64)]) -> Result<Self> {
        let n = ids.len();
        let mut merged: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        for &(a, b, w) in triples {
            if a >= n || b >= n {
                return Err(Error::Argument(format!("edge ({a}, {b}) out of range for {n} nodes")));
            }
            if a == b {
                return Err(Error::Argument(format!("self-loop on node {a}")));
            }
            if w == 0 {
                return Err(Error::Argument(format!("edge ({a}, {b}) has zero weight")));
            }
            let key = (a.min(b) as u32, a.max(b) as u32);
            *merged.entry(key).or_default() += w;
        }
        let edges = merged
            .into_iter()
            .map(|((source, target), weight)| Edge { source, target, weight })
            .collect();
        Ok(WeightedGraph { labels: ids.clone(), ids, edges })
    }

    /// Convenience constructor with ids `"0".."n-1"` and unit weights.
    pub fn unweighted(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let ids = (0..n).map(|i| i.to_string()).collect();
        let triples: Vec<_> = pairs.iter().map(|&(a, b)| (a, b, 1)).collect();
        Self::from_edges(ids, &triples)
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn total_weight(&self) -> u64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    pub fn weight(&self, a: usize, b: usize) -> u64 {
        let key = (a.min(b) as u32, a.max(b) as u32);
        self.edges
            .binary_search_by(|e| (e.source, e.target).cmp(&key))
            .map_or(0, |i| self.edges[i].weight)
    }

    /// Weighted degree of every node.
    pub fn strengths(&self) -> Vec<u64> {
        let mut s = vec![0; self.node_count()];
        for e in &self.edges {
            s[e.source as usize] += e.weight;
            s[e.target as usize] += e.weight;
        }
        s
    }

    pub fn adjacency(&self) -> Vec<Vec<(usize, u64)>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for e in &self.edges {
            adj[e.source as usize].push((e.target as usize, e.weight));
            adj[e.target as usize].push((e.source as usize, e.weight));
        }
        for row in &mut adj {
            row.sort_unstable();
        }
        adj
    }

    /// Stable hash of the node id sequence.
    pub fn fingerprint(&self) -> u64 {
        fingerprint_ids(&self.ids)
    }

    /// Drops edges lighter than `min_weight`; nodes are kept.
    pub fn with_min_weight(&self, min_weight: u64) -> WeightedGraph {
        WeightedGraph {
            ids: self.ids.clone(),
            labels: self.labels.clone(),
            edges: self.edges.iter().copied().filter(|e| e.weight >= min_weight).collect(),
        }
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.node_count()];
        let mut components = Vec::new();
        for start in 0..self.node_count() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut stack = vec![start];
            let mut members = Vec::new();
            while let Some(v) = stack.pop() {
                members.push(v);
                for &(w, _) in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            members.sort_unstable();
            components.push(members);
        }
        components
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// Induced subgraph on `nodes` (in the given order).
    pub fn subgraph(&self, nodes: &[usize]) -> WeightedGraph {
        let position: HashMap<usize, usize> = nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut edges: Vec<Edge> = self
            .edges
            .iter()
            .filter_map(|e| {
                let a = *position.get(&(e.source as usize))?;
                let b = *position.get(&(e.target as usize))?;
                Some(Edge { source: a.min(b) as u32, target: a.max(b) as u32, weight: e.weight })
            })
            .collect();
        edges.sort_unstable();
        WeightedGraph {
            ids: nodes.iter().map(|&v| self.ids[v].clone()).collect(),
            labels: nodes.iter().map(|&v| self.labels[v].clone()).collect(),
            edges,
        }
    }

    /// Writes `node_id,label` and `src,dst,weight` CSV files.
    pub fn write_csv<N: Write, E: Write>(&self, nodes: N, edges: E) -> Result<()> {
        let mut w = csv::Writer::from_writer(nodes);
        w.write_record(["node_id", "label"])?;
        for (id, label) in self.ids.iter().zip(&self.labels) {
            w.write_record([id, label])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_writer(edges);
        w.write_record(["src", "dst", "weight"])?;
        for e in &self.edges {
            w.write_record([
                self.ids[e.source as usize].as_str(),
                self.ids[e.target as usize].as_str(),
                &e.weight.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<N: Read, E: Read>(nodes: N, edges: E) -> Result<Self> {
        let mut r = csv::Reader::from_reader(nodes);
        if r.headers()?.iter().collect::<Vec<_>>() != ["node_id", "label"] {
            return Err(Error::Format("nodes file must have header `node_id,label`".into()));
        }
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        for row in r.records() {
            let row = row?;
            ids.push(row[0].to_string());
            labels.push(row[1].to_string());
        }
        let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        if index.len() != ids.len() {
            return Err(Error::Format("duplicate node ids".into()));
        }
        let mut r = csv::Reader::from_reader(edges);
        if r.headers()?.iter().collect::<Vec<_>>() != ["src", "dst", "weight"] {
            return Err(Error::Format("edges file must have header `src,dst,weight`".into()));
        }
        let mut triples = Vec::new();
        for row in r.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let lookup = |id: &str| {
                index.get(id).copied().ok_or_else(|| Error::Row { line, message: format!("unknown node `{id}`") })
            };
            let weight = row[2]
                .parse::<u64>()
                .map_err(|_| Error::Row { line, message: format!("bad weight `{}`", &row[2]) })?;
            triples.push((lookup(&row[0])?, lookup(&row[1])?, weight));
        }
        let mut g = Self::from_edges(ids, &triples)?;
        g.labels = labels;
        Ok(g)
    }
}

pub(crate) fn fingerprint_ids(ids: &[String]) -> u64 {
    let mut hasher = Sha256::new();
    for id in ids {
        hasher.update(id.as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Co-occurrence counts between rows of `rows`, where `rows[i]` lists the
/// columns touching row `i` and `cols[c]` the rows touching column `c`.
fn co_occurrence(rows: &[Vec<u32>], cols: &[Vec<u32>]) -> Vec<Edge> {
    let n = rows.len();
    let per_row: Vec<Vec<Edge>> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![0u64; n], Vec::new()),
            |(counts, touched), i| {
                for &c in &rows[i] {
                    for &j in &cols[c as usize] {
                        if j as usize > i {
                            if counts[j as usize] == 0 {
                                touched.push(j);
                            }
                            counts[j as usize] += 1;
                        }
                    }
                }
                touched.sort_unstable();
                let edges = touched
                    .drain(..)
                    .map(|j| {
                        let weight = std::mem::take(&mut counts[j as usize]);
                        Edge { source: i as u32, target: j, weight }
                    })
                    .collect();
                edges
            },
        )
        .collect();
    per_row.into_iter().flatten().collect()
}

/// Page–page projection `MM^T` without its diagonal: the weight of `(p, q)`
/// is the number of users the two pages share.
pub fn project_pages(b: &BipartiteGraph) -> WeightedGraph {
    WeightedGraph {
        ids: b.pages.clone(),
        labels: b.page_names.clone(),
        edges: co_occurrence(&b.page_users, &b.user_pages),
    }
}

/// User–user projection `M^T M`. Refuses graphs with more than `max_users`
/// users since the output can grow quadratically.
pub fn project_users(b: &BipartiteGraph, max_users: usize) -> Result<WeightedGraph> {
    if b.users.len() > max_users {
        return Err(Error::Refused(format!(
            "{} users exceeds the user-projection cap of {max_users}",
            b.users.len()
        )));
    }
    Ok(WeightedGraph {
        ids: b.users.clone(),
        labels: b.users.clone(),
        edges: co_occurrence(&b.user_pages, &b.page_users),
    })
}
