//! Empirical CCDFs and maximum-likelihood fits of heavy-tailed samples.
//!
//! Power laws are fitted with the Clauset–Shalizi–Newman recipe: for every
//! candidate lower bound the tail exponent has a closed-form MLE, and the
//! bound minimizing the Kolmogorov–Smirnov distance between tail and fit is
//! kept. Integer samples use the continuous approximation with the lower
//! bound shifted by one half.
//!
//! The power-law log-likelihood is evaluated on the tail only, the other
//! families on the full sample, so those numbers are not directly
//! comparable; [`loglik_table`] also refits every family on the tail.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Candidate lower bounds scanned at most; larger sets are thinned evenly by rank.
pub const MAX_XMIN_CANDIDATES: usize = 2000;
/// Tails shorter than this get flagged in the fit.
pub const MIN_TAIL: usize = 10;

/// Positive observations. Zeros are dropped at construction and counted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleVector {
    values: Vec<f64>,
    dropped_zeros: usize,
}

impl SampleVector {
    pub fn from_counts<I: IntoIterator<Item = u64>>(counts: I) -> Self {
        let mut dropped_zeros = 0;
        let values = counts
            .into_iter()
            .filter(|&c| {
                dropped_zeros += usize::from(c == 0);
                c > 0
            })
            .map(|c| c as f64)
            .collect();
        SampleVector { values, dropped_zeros }
    }

    /// Real-valued observations; zeros are dropped, negatives and
    /// non-finite values rejected.
    pub fn from_reals<I: IntoIterator<Item = f64>>(reals: I) -> Result<Self> {
        let mut dropped_zeros = 0;
        let mut values = Vec::new();
        for x in reals {
            if !x.is_finite() || x < 0.0 {
                return Err(Error::Argument(format!("sample value {x} is not a non-negative number")));
            }
            if x == 0.0 {
                dropped_zeros += 1;
            } else {
                values.push(x);
            }
        }
        Ok(SampleVector { values, dropped_zeros })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dropped_zeros(&self) -> usize {
        self.dropped_zeros
    }

    pub fn is_integral(&self) -> bool {
        self.values.iter().all(|x| x.fract() == 0.0)
    }

    fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// `(x, P(X ≥ x))` at each distinct value, ascending in `x`.
pub fn empirical_ccdf(s: &SampleVector) -> Result<Vec<(f64, f64)>> {
    if s.is_empty() {
        return Err(Error::Argument("CCDF of an empty sample".into()));
    }
    let sorted = s.sorted();
    let n = sorted.len() as f64;
    let mut curve = Vec::new();
    for (i, &x) in sorted.iter().enumerate() {
        if i == 0 || sorted[i - 1] != x {
            curve.push((x, (sorted.len() - i) as f64 / n));
        }
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Poisson,
    LogNormal,
    Exponential,
    PowerLaw,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Poisson, Family::LogNormal, Family::Exponential, Family::PowerLaw];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Poisson => "poisson",
            Family::LogNormal => "lognormal",
            Family::Exponential => "exponential",
            Family::PowerLaw => "powerlaw",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown family `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: Family,
    /// `lambda` (poisson), `mu`/`sigma` (lognormal), `rate` (exponential) or `alpha` (powerlaw).
    pub params: BTreeMap<String, f64>,
    /// Lower bound of the fitted range; the sample minimum for non-power-law families.
    pub x_min: f64,
    pub log_likelihood: f64,
    /// Number of observations at or above `x_min`.
    pub n_tail: usize,
    /// KS distance between the tail and the fitted power law.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks_distance: Option<f64>,
    /// Set when the chosen tail has fewer than [`MIN_TAIL`] points.
    #[serde(default)]
    pub small_tail: bool,
}

impl FitResult {
    pub fn param(&self, name: &str) -> f64 {
        self.params.get(name).copied().unwrap_or(f64::NAN)
    }

    pub fn alpha(&self) -> f64 {
        self.param("alpha")
    }
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

fn closed_form(values: &[f64], family: Family) -> Result<(BTreeMap<String, f64>, f64)> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    match family {
        Family::Poisson => {
            if values.iter().any(|x| x.fract() != 0.0) {
                return Err(Error::Argument("poisson fit needs integer values".into()));
            }
            let ll = values.iter().map(|&x| x * mean.ln() - mean - ln_gamma(x + 1.0)).sum();
            Ok((params(&[("lambda", mean)]), ll))
        }
        Family::Exponential => {
            let rate = 1.0 / mean;
            let ll = n * rate.ln() - rate * values.iter().sum::<f64>();
            Ok((params(&[("rate", rate)]), ll))
        }
        Family::LogNormal => {
            let logs: Vec<f64> = values.iter().map(|x| x.ln()).collect();
            let mu = logs.iter().sum::<f64>() / n;
            let var = logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / n;
            if var == 0.0 {
                return Err(Error::Degenerate("log-normal fit needs values that are not all equal".into()));
            }
            let sigma = var.sqrt();
            let ll = logs
                .iter()
                .map(|&l| -l - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - (l - mu).powi(2) / (2.0 * var))
                .sum();
            Ok((params(&[("mu", mu), ("sigma", sigma)]), ll))
        }
        Family::PowerLaw => unreachable!("power law has no closed form over x_min"),
    }
}

/// Maximum-likelihood fit of one family. Power laws delegate to [`fit_powerlaw`].
pub fn fit_family(s: &SampleVector, family: Family) -> Result<FitResult> {
    if s.is_empty() {
        return Err(Error::Argument("cannot fit an empty sample".into()));
    }
    if family == Family::PowerLaw {
        return fit_powerlaw(s);
    }
    let (params, log_likelihood) = closed_form(s.values(), family)?;
    Ok(FitResult {
        family,
        params,
        x_min: s.values().iter().copied().fold(f64::INFINITY, f64::min),
        log_likelihood,
        n_tail: s.len(),
        ks_distance: None,
        small_tail: false,
    })
}

/// Continuous (or half-shifted discrete) power-law tail model.
#[derive(Debug, Clone, Copy)]
struct TailModel {
    alpha: f64,
    /// Effective lower bound `x_min - offset`.
    base: f64,
}

impl TailModel {
    /// P(X < x) and P(X ≤ x) under the fit, from precomputed
    /// `ln(x - offset)` and `ln(x + offset)`.
    fn cdf_pair(&self, ln_lo: f64, ln_hi: f64, ln_base: f64) -> (f64, f64) {
        let k = 1.0 - self.alpha;
        (1.0 - (k * (ln_lo - ln_base)).exp(), 1.0 - (k * (ln_hi - ln_base)).exp())
    }
}

/// Power-law tail fit with the lower bound chosen by minimum KS distance.
/// Needs at least ten distinct values.
pub fn fit_powerlaw(s: &SampleVector) -> Result<FitResult> {
    let sorted = s.sorted();
    let mut distinct: Vec<f64> = Vec::new();
    let mut first_index: Vec<usize> = Vec::new();
    for (i, &x) in sorted.iter().enumerate() {
        if distinct.last() != Some(&x) {
            distinct.push(x);
            first_index.push(i);
        }
    }
    if distinct.len() < 10 {
        return Err(Error::Degenerate(format!(
            "power-law fit needs at least 10 distinct values, found {}",
            distinct.len()
        )));
    }
    let offset = if s.is_integral() { 0.5 } else { 0.0 };
    let n = sorted.len();

    // suffix sums of ln x over the sorted sample
    let mut log_suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        log_suffix[i] = log_suffix[i + 1] + sorted[i].ln();
    }

    let ln_lo: Vec<f64> = distinct.iter().map(|x| (x - offset).ln()).collect();
    let ln_hi: Vec<f64> = distinct.iter().map(|x| (x + offset).ln()).collect();
    let logs = TailLogs { lo: &ln_lo, hi: &ln_hi };

    let scan = distinct.len() - 1;
    let step = scan.div_ceil(MAX_XMIN_CANDIDATES).max(1);
    let candidates: Vec<usize> = (0..scan).step_by(step).collect();
    let model_at = |k: usize| {
        let start = first_index[k];
        let n_tail = n - start;
        let base = distinct[k] - offset;
        let log_ratio = log_suffix[start] - n_tail as f64 * base.ln();
        TailModel { alpha: 1.0 + n_tail as f64 / log_ratio, base }
    };
    // a coarse pass supplies a tight bound, so most candidates of the full
    // pass are abandoned after a few points
    let mut best: Option<(f64, usize, TailModel)> = None;
    for pass in [candidates.len().div_ceil(64).max(1), 1] {
        for &k in candidates.iter().step_by(pass) {
            let model = model_at(k);
            let bound = best.map_or(f64::INFINITY, |(d, _, _)| d);
            let ks = ks_distance(&logs, k, &first_index, n, &model, bound);
            let better = match best {
                None => true,
                Some((d, bk, _)) => ks < d || (ks == d && k < bk),
            };
            if better {
                best = Some((ks, k, model));
            }
        }
    }
    let (ks, k, model) = best.expect("at least one candidate");
    let start = first_index[k];
    let n_tail = n - start;
    let log_ratio = log_suffix[start] - n_tail as f64 * model.base.ln();
    let log_likelihood = n_tail as f64 * ((model.alpha - 1.0).ln() - model.base.ln()) - model.alpha * log_ratio;
    Ok(FitResult {
        family: Family::PowerLaw,
        params: params(&[("alpha", model.alpha)]),
        x_min: distinct[k],
        log_likelihood,
        n_tail,
        ks_distance: Some(ks),
        small_tail: n_tail < MIN_TAIL,
    })
}

struct TailLogs<'a> {
    lo: &'a [f64],
    hi: &'a [f64],
}

/// KS distance between the tail starting at distinct value `k` and `model`.
/// Stops early once the distance exceeds `bound`, since such a candidate
/// cannot win; the returned value is then only a lower bound.
fn ks_distance(logs: &TailLogs, k: usize, first_index: &[usize], n: usize, model: &TailModel, bound: f64) -> f64 {
    let start = first_index[k];
    let n_tail = (n - start) as f64;
    let ln_base = model.base.ln();
    let mut d: f64 = 0.0;
    for j in k..first_index.len() {
        let below = (first_index[j] - start) as f64 / n_tail;
        let upto = first_index.get(j + 1).map_or(n, |&i| i);
        let at_or_below = (upto - start) as f64 / n_tail;
        let (cdf_below, cdf_upto) = model.cdf_pair(logs.lo[j], logs.hi[j], ln_base);
        d = d.max((below - cdf_below).abs()).max((at_or_below - cdf_upto).abs());
        if d > bound {
            break;
        }
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Full,
    Tail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoglikRow {
    /// The table entry: full-sample likelihood, or tail likelihood for power laws.
    pub log_likelihood: f64,
    pub domain: Domain,
    pub n: usize,
    /// Likelihood after refitting on the power-law tail, when one exists.
    pub tail_log_likelihood: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoglikTable {
    pub rows: BTreeMap<Family, LoglikRow>,
    /// Tail used by the power-law column and by the tail refits.
    pub x_min: Option<f64>,
    pub n_tail: Option<usize>,
    /// Always false when a power-law row sits next to full-sample rows.
    pub commensurable: bool,
}

/// Log-likelihood of each requested family, with every family also refit on
/// the power-law tail so that like-for-like comparisons are possible.
pub fn loglik_table(s: &SampleVector, families: &[Family]) -> Result<LoglikTable> {
    let tail_fit = fit_powerlaw(s).ok();
    let tail: Option<SampleVector> = tail_fit.as_ref().map(|fit| SampleVector {
        values: s.values().iter().copied().filter(|&x| x >= fit.x_min).collect(),
        dropped_zeros: 0,
    });
    let mut rows = BTreeMap::new();
    for &family in families {
        let row = if family == Family::PowerLaw {
            let fit = tail_fit.clone().ok_or_else(|| {
                fit_powerlaw(s).expect_err("power-law fit failed above").to_string()
            });
            let fit = fit.map_err(Error::Degenerate)?;
            LoglikRow {
                log_likelihood: fit.log_likelihood,
                domain: Domain::Tail,
                n: fit.n_tail,
                tail_log_likelihood: Some(fit.log_likelihood),
            }
        } else {
            let fit = fit_family(s, family)?;
            let tail_ll = tail
                .as_ref()
                .and_then(|t| fit_family(t, family).ok())
                .map(|f| f.log_likelihood);
            LoglikRow { log_likelihood: fit.log_likelihood, domain: Domain::Full, n: s.len(), tail_log_likelihood: tail_ll }
        };
        rows.insert(family, row);
    }
    let domains: Vec<Domain> = rows.values().map(|r| r.domain).collect();
    let commensurable = domains.windows(2).all(|w| w[0] == w[1]);
    Ok(LoglikTable {
        rows,
        x_min: tail_fit.as_ref().map(|f| f.x_min),
        n_tail: tail_fit.as_ref().map(|f| f.n_tail),
        commensurable,
    })
}

/// Writes `x,ccdf` rows.
pub fn write_ccdf<W: std::io::Write>(curve: &[(f64, f64)], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["x", "ccdf"])?;
    for (x, p) in curve {
        w.write_record([x.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
