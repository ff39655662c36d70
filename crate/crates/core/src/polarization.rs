//! User localization over page communities and cross-dataset ranking.
//!
//! A user with `k_i` likes on pages of community `i` has shares
//! `φ_i = k_i / K`. The localization `L = (Σ φ_i²)² / Σ φ_i⁴` is 1 when all
//! likes fall in one community and `N` when they spread evenly over `N`.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::community::Partition;
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::ingest::{Action, Dataset};
use crate::stats::{empirical_ccdf, SampleVector};

pub const DEFAULT_MIN_LIKES: u64 = 10;
pub const DEFAULT_THRESHOLD: f64 = 1.05;
pub const PDF_BINS: usize = 200;

/// Page id → community lookup for one partition of a page projection.
#[derive(Debug, Clone)]
pub struct CommunityLookup {
    community: HashMap<String, usize>,
    n_communities: usize,
    fingerprint: u64,
}

impl CommunityLookup {
    pub fn new(g: &WeightedGraph, p: &Partition) -> Result<Self> {
        if p.fingerprint() != g.fingerprint() || p.len() != g.node_count() {
            return Err(Error::Argument("partition was computed on a different graph".into()));
        }
        let community = g
            .ids()
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), p.community_of(i)))
            .collect();
        Ok(CommunityLookup { community, n_communities: p.community_count(), fingerprint: p.fingerprint() })
    }

    pub fn n_communities(&self) -> usize {
        self.n_communities
    }

    pub fn get(&self, page: &str) -> Option<usize> {
        self.community.get(page).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityShares {
    /// Likes per community, `k_i`.
    pub counts: Vec<u64>,
    /// Total likes `K`.
    pub total: u64,
    /// `φ_i = k_i / K`.
    pub shares: Vec<f64>,
}

impl CommunityShares {
    /// Localization computed from the raw counts.
    pub fn localization(&self) -> f64 {
        let counts: Vec<f64> = self.counts.iter().map(|&k| k as f64).collect();
        localization(&counts).expect("shares have at least one like")
    }
}

/// Spreads a user's per-page like counts over the communities of `lookup`.
pub fn community_shares(user_likes: &BTreeMap<String, u64>, lookup: &CommunityLookup) -> Result<CommunityShares> {
    let mut counts = vec![0u64; lookup.n_communities];
    for (page, &k) in user_likes {
        let c = lookup
            .get(page)
            .ok_or_else(|| Error::Argument(format!("page `{page}` is not in the partition")))?;
        counts[c] += k;
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::Argument("user has no likes".into()));
    }
    let shares = counts.iter().map(|&k| k as f64 / total as f64).collect();
    Ok(CommunityShares { counts, total, shares })
}

/// `(Σ φ²)² / Σ φ⁴`. Any non-negative weights are accepted since the ratio is
/// scale-free; they are rescaled by their maximum first, which keeps
/// the evenly spread case exact.
pub fn localization(weights: &[f64]) -> Result<f64> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Argument("shares must be finite and non-negative".into()));
    }
    let max = weights.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::Argument("localization of an all-zero share vector".into()));
    }
    let (mut s2, mut s4) = (0.0, 0.0);
    for &w in weights {
        let x = w / max;
        let x2 = x * x;
        s2 += x2;
        s4 += x2 * x2;
    }
    Ok(s2 * s2 / s4)
}

/// Per-user localization values of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationSample {
    pub label: String,
    pub min_likes: u64,
    pub fingerprint: u64,
    pub n_communities: usize,
    /// `(user_id, L)`, sorted by user id.
    pub users: Vec<(String, f64)>,
    /// Users dropped because they liked a page outside the partition.
    pub skipped_users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationSummary {
    pub label: String,
    pub median: f64,
    pub n_users: usize,
    pub polarized_fraction: f64,
    pub threshold: f64,
}

impl LocalizationSample {
    pub fn values(&self) -> Vec<f64> {
        self.users.iter().map(|(_, l)| *l).collect()
    }

    pub fn median(&self) -> f64 {
        median(&self.values())
    }

    /// `(L, P(L ≥ x))` at each distinct value.
    pub fn ccdf(&self) -> Vec<(f64, f64)> {
        let sample = SampleVector::from_reals(self.values()).expect("localization values are >= 1");
        empirical_ccdf(&sample).unwrap_or_default()
    }

    /// Density over [`PDF_BINS`] log-spaced bins on `[1, N]`, as
    /// `(bin_lo, bin_hi, density)`. With `N = 1` a single degenerate bin
    /// holds probability mass 1.
    pub fn pdf(&self) -> Vec<(f64, f64, f64)> {
        let n_max = self.n_communities.max(1) as f64;
        let values = self.values();
        let total = values.len() as f64;
        if n_max <= 1.0 || total == 0.0 {
            return vec![(1.0, 1.0, if total == 0.0 { 0.0 } else { 1.0 })];
        }
        let log_max = n_max.ln();
        let mut counts = vec![0usize; PDF_BINS];
        for l in values {
            let pos = (l.max(1.0).ln() / log_max * PDF_BINS as f64) as usize;
            counts[pos.min(PDF_BINS - 1)] += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                let lo = (log_max * i as f64 / PDF_BINS as f64).exp();
                let hi = (log_max * (i + 1) as f64 / PDF_BINS as f64).exp();
                (lo, hi, c as f64 / (total * (hi - lo)))
            })
            .collect()
    }

    pub fn summary(&self, threshold: f64) -> Result<LocalizationSummary> {
        Ok(LocalizationSummary {
            label: self.label.clone(),
            median: self.median(),
            n_users: self.users.len(),
            polarized_fraction: polarized_fraction(self, threshold)?,
            threshold,
        })
    }

    pub fn write_users_csv<W: std::io::Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["user_id", "L"])?;
        for (user, l) in &self.users {
            w.write_record([user.clone(), l.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_pdf_csv<W: std::io::Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["bin_lo", "bin_hi", "density"])?;
        for (lo, hi, d) in self.pdf() {
            w.write_record([lo.to_string(), hi.to_string(), d.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sort-based median; mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

/// Localization of every user with at least `min_likes` likes.
pub fn localization_distribution(
    d: &Dataset,
    lookup: &CommunityLookup,
    min_likes: u64,
    label: &str,
) -> Result<LocalizationSample> {
    let mut per_user: BTreeMap<&str, BTreeMap<String, u64>> = BTreeMap::new();
    for r in d.records.iter().filter(|r| r.action == Action::Like) {
        *per_user
            .entry(r.user_id.as_str())
            .or_default()
            .entry(r.page_id.clone())
            .or_default() += 1;
    }
    let mut users = Vec::new();
    let mut skipped_users = 0;
    for (user, likes) in per_user {
        let total: u64 = likes.values().sum();
        if total < min_likes {
            continue;
        }
        match community_shares(&likes, lookup) {
            Ok(shares) => users.push((user.to_string(), shares.localization())),
            Err(_) => skipped_users += 1,
        }
    }
    if users.is_empty() {
        return Err(Error::Degenerate(format!("no user has at least {min_likes} likes on partitioned pages")));
    }
    Ok(LocalizationSample {
        label: label.to_string(),
        min_likes,
        fingerprint: lookup.fingerprint,
        n_communities: lookup.n_communities,
        users,
        skipped_users,
    })
}

/// Fraction of users with `L < threshold`.
pub fn polarized_fraction(s: &LocalizationSample, threshold: f64) -> Result<f64> {
    if threshold.is_nan() || threshold <= 1.0 {
        return Err(Error::Argument(format!("threshold {threshold} must exceed 1")));
    }
    if s.users.is_empty() {
        return Ok(0.0);
    }
    let below = s.users.iter().filter(|(_, l)| *l < threshold).count();
    Ok(below as f64 / s.users.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub label: String,
    pub median: f64,
    /// Another dataset has exactly the same median; order fell back to labels.
    pub tied: bool,
}

/// Orders datasets from most to least polarized (ascending median `L`).
pub fn polarization_rank(medians: &BTreeMap<String, f64>) -> Vec<RankEntry> {
    let mut entries: Vec<RankEntry> = medians
        .iter()
        .map(|(label, &median)| RankEntry { label: label.clone(), median, tied: false })
        .collect();
    entries.sort_by(|a, b| a.median.total_cmp(&b.median).then_with(|| a.label.cmp(&b.label)));
    for i in 1..entries.len() {
        if entries[i].median == entries[i - 1].median {
            entries[i].tied = true;
            entries[i - 1].tied = true;
        }
    }
    entries
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::community::Partition;
    use crate::ingest::InteractionRecord;

    fn lookup(pages: &[(&str, usize)]) -> (WeightedGraph, CommunityLookup) {
        let g = WeightedGraph::from_edges(pages.iter().map(|(p, _)| p.to_string()).collect(), &[]).unwrap();
        let p = Partition::from_labels(pages.iter().map(|&(_, c)| c), g.fingerprint());
        let l = CommunityLookup::new(&g, &p).unwrap();
        (g, l)
    }

    #[test]
    fn shares_of_one_and_two_communities() {
        let (_, l) = lookup(&[("a", 0), ("b", 0), ("c", 1)]);
        let likes: BTreeMap<String, u64> = [("a".to_string(), 6), ("b".to_string(), 4)].into();
        let s = community_shares(&likes, &l).unwrap();
        assert_eq!(s.shares, vec![1.0, 0.0]);
        assert_eq!(s.localization(), 1.0);

        let likes: BTreeMap<String, u64> = [("a".to_string(), 5), ("c".to_string(), 5)].into();
        let s = community_shares(&likes, &l).unwrap();
        assert_eq!(s.shares, vec![0.5, 0.5]);
        assert_eq!(s.localization(), 2.0);

        let unknown: BTreeMap<String, u64> = [("z".to_string(), 1)].into();
        assert!(community_shares(&unknown, &l).is_err());
    }

    #[test]
    fn localization_reference_values() {
        assert_eq!(localization(&[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(localization(&[0.25; 4]).unwrap(), 4.0);
        assert_eq!(localization(&[1.0 / 3.0; 3]).unwrap(), 3.0);
        let l = localization(&[0.75, 0.25]).unwrap();
        assert!((l - 0.390625 / 0.3203125).abs() < 1e-15);
        assert!(localization(&[0.0, 0.0]).is_err());
        assert!(localization(&[-0.5, 1.5]).is_err());
    }

    fn likes(user: &str, page: &str, n: usize) -> Vec<InteractionRecord> {
        (0..n)
            .map(|i| InteractionRecord {
                user_id: user.into(),
                page_id: page.into(),
                post_id: format!("{page}{i}"),
                action: Action::Like,
                timestamp: i as u64,
            })
            .collect()
    }

    #[test]
    fn distribution_threshold_and_skips() {
        let (_, l) = lookup(&[("a", 0), ("b", 1), ("c", 2)]);
        let mut records = likes("focused", "a", 12);
        for page in ["a", "b", "c"] {
            records.extend(likes("spread", page, 4));
        }
        records.extend(likes("casual", "a", 3));
        records.extend(likes("outsider", "zzz", 20));
        let d = Dataset::new(records);
        let s = localization_distribution(&d, &l, 10, "X").unwrap();
        assert_eq!(s.users, vec![("focused".to_string(), 1.0), ("spread".to_string(), 3.0)]);
        assert_eq!(s.skipped_users, 1);
        assert_eq!(s.median(), 2.0);
        assert_eq!(polarized_fraction(&s, 1.05).unwrap(), 0.5);
        assert!(polarized_fraction(&s, 1.0).is_err());
        assert!(localization_distribution(&d, &l, 100, "X").is_err());
    }

    #[test]
    fn pdf_integrates_to_one() {
        let sample = LocalizationSample {
            label: "t".into(),
            min_likes: 10,
            fingerprint: 0,
            n_communities: 4,
            users: vec![("a".into(), 1.0), ("b".into(), 2.5), ("c".into(), 4.0)],
            skipped_users: 0,
        };
        let pdf = sample.pdf();
        assert_eq!(pdf.len(), PDF_BINS);
        let mass: f64 = pdf.iter().map(|(lo, hi, d)| (hi - lo) * d).sum();
        assert!((mass - 1.0).abs() < 1e-12);
        assert_eq!(sample.ccdf()[0], (1.0, 1.0));
    }

    #[test]
    fn ranking() {
        let medians: BTreeMap<String, f64> =
            [("ES", 1.01653), ("DE", 1.00274), ("FR", 1.00222), ("IT", 1.00001)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect();
        let labels: Vec<String> = polarization_rank(&medians).into_iter().map(|e| e.label).collect();
        assert_eq!(labels, ["IT", "FR", "DE", "ES"]);

        let single: BTreeMap<String, f64> = [("only".to_string(), 1.2)].into();
        assert_eq!(polarization_rank(&single)[0].label, "only");

        let tie: BTreeMap<String, f64> = [("b".to_string(), 1.1), ("a".to_string(), 1.1)].into();
        let ranked = polarization_rank(&tie);
        assert_eq!(ranked[0].label, "a");
        assert!(ranked.iter().all(|e| e.tied));
    }
}
