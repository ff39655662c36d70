//! Selective exposure: how many distinct pages a user likes within a week,
//! month or quarter, against the user's lifetime and activity.
//!
//! A window is any interval of the given length, so a longer window never
//! sees fewer pages. Only likes count as consumption.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Action, Dataset};

pub const WEEK_S: u64 = 7 * 86_400;
pub const MONTH_S: u64 = 30 * 86_400;
pub const QUARTER_S: u64 = 91 * 86_400;
/// Number of equal-width bins on the standardized metric axis.
pub const CURVE_BINS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Week,
    Month,
    Quarter,
}

impl WindowKind {
    pub const ALL: [WindowKind; 3] = [WindowKind::Week, WindowKind::Month, WindowKind::Quarter];

    pub fn seconds(self) -> u64 {
        match self {
            WindowKind::Week => WEEK_S,
            WindowKind::Month => MONTH_S,
            WindowKind::Quarter => QUARTER_S,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WindowKind::Week => "week",
            WindowKind::Month => "month",
            WindowKind::Quarter => "quarter",
        }
    }
}

impl fmt::Display for WindowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WindowKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        WindowKind::ALL
            .into_iter()
            .find(|w| w.as_str() == s)
            .ok_or_else(|| format!("unknown window `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Lifetime,
    Activity,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Lifetime => "lifetime",
            Metric::Activity => "activity",
        }
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "lifetime" => Ok(Metric::Lifetime),
            "activity" => Ok(Metric::Activity),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    /// Seconds between the user's first and last like.
    pub lifetime_s: u64,
    /// Total likes.
    pub activity: u64,
    /// Largest number of distinct pages liked inside a single window.
    pub windows: BTreeMap<WindowKind, usize>,
}

impl UserProfile {
    pub fn max_pages(&self, window: WindowKind) -> usize {
        self.windows[&window]
    }

    fn metric(&self, by: Metric) -> f64 {
        match by {
            Metric::Lifetime => self.lifetime_s as f64,
            Metric::Activity => self.activity as f64,
        }
    }
}

/// One profile per user with at least one like, sorted by user id.
pub fn build_profiles(d: &Dataset) -> Vec<UserProfile> {
    let mut page_index: HashMap<&str, u32> = HashMap::new();
    let mut likes: BTreeMap<&str, Vec<(u64, u32)>> = BTreeMap::new();
    for r in d.records.iter().filter(|r| r.action == Action::Like) {
        let next = page_index.len() as u32;
        let page = *page_index.entry(r.page_id.as_str()).or_insert(next);
        likes.entry(r.user_id.as_str()).or_default().push((r.timestamp, page));
    }

    likes
        .into_iter()
        .map(|(user, events)| {
            let first = events.iter().map(|e| e.0).min().unwrap_or(0);
            let last = events.iter().map(|e| e.0).max().unwrap_or(0);
            let windows = WindowKind::ALL
                .into_iter()
                .map(|kind| (kind, max_distinct_in_window(&events, kind.seconds())))
                .collect();
            UserProfile {
                user_id: user.to_string(),
                lifetime_s: last - first,
                activity: events.len() as u64,
                windows,
            }
        })
        .collect()
}

/// Largest number of distinct pages among likes falling in any half-open
/// interval `[t, t + width)`.
fn max_distinct_in_window(events: &[(u64, u32)], width: u64) -> usize {
    let mut sorted = events.to_vec();
    sorted.sort_unstable();
    let mut inside: HashMap<u32, usize> = HashMap::new();
    let mut best = 0;
    let mut lo = 0;
    for &(t, page) in &sorted {
        *inside.entry(page).or_default() += 1;
        while sorted[lo].0 + width <= t {
            let old = sorted[lo].1;
            let n = inside.get_mut(&old).expect("page inside window");
            *n -= 1;
            if *n == 0 {
                inside.remove(&old);
            }
            lo += 1;
        }
        best = best.max(inside.len());
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
}

/// Standardized metric (min-max over users) against the standardized
/// window maximum `pages / total_pages`. Users fall into [`CURVE_BINS`]
/// equal-width bins; each non-empty bin yields the user with the largest
/// `y` (smallest `x` on ties). All-equal metrics standardize to 0.
pub fn exposure_curve(
    profiles: &[UserProfile],
    by: Metric,
    window: WindowKind,
    total_pages: usize,
) -> Result<Vec<CurvePoint>> {
    if profiles.is_empty() {
        return Err(Error::Argument("no user profiles".into()));
    }
    if total_pages == 0 {
        return Err(Error::Argument("total_pages must be at least 1".into()));
    }
    let metrics: Vec<f64> = profiles.iter().map(|p| p.metric(by)).collect();
    let lo = metrics.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = metrics.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;

    let mut bins: Vec<Option<CurvePoint>> = vec![None; CURVE_BINS];
    for (profile, m) in profiles.iter().zip(metrics) {
        let x = if span > 0.0 { (m - lo) / span } else { 0.0 };
        let y = profile.max_pages(window) as f64 / total_pages as f64;
        let bin = ((x * CURVE_BINS as f64) as usize).min(CURVE_BINS - 1);
        let slot = &mut bins[bin];
        let better = match slot {
            None => true,
            Some(p) => y > p.y || (y == p.y && x < p.x),
        };
        if better {
            *slot = Some(CurvePoint { x, y });
        }
    }
    Ok(bins.into_iter().flatten().collect())
}

/// Writes `x,y,window,by` rows for several curves.
pub fn write_curves<W: std::io::Write>(
    curves: &[(WindowKind, Metric, Vec<CurvePoint>)],
    sink: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["x", "y", "window", "by"])?;
    for (window, by, points) in curves {
        for p in points {
            w.write_record([p.x.to_string(), p.y.to_string(), window.to_string(), by.as_str().to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
