//! Trust-modified bounded confidence model of news consumption.
//!
//! Pages carry a fixed editorial line `c_p`, users an opinion `θ_u`, a trust
//! `τ_u` and an activity `a_u`. A user likes a page when `|c_p − θ_u| < Δ`
//! and then moves towards it: `θ_u ← (1 − τ_u)·θ_u + τ_u·c_p`. The resulting
//! user–page like graph is projected onto pages and its communities counted.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::community::{fastgreedy, multilevel, Method};
use crate::error::{Error, Result};
use crate::graph::{project_pages, BipartiteGraph};
use crate::ingest::Action;

/// How users meet pages over time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interaction {
    /// Fresh page samples every round until opinions stop moving.
    Iterative,
    /// Each user draws one page subset and revisits it every round.
    FixedSubset,
    /// A single round of page samples.
    OneShot,
}

impl FromStr for Interaction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "iterative" => Ok(Interaction::Iterative),
            "fixed-subset" => Ok(Interaction::FixedSubset),
            "one-shot" => Ok(Interaction::OneShot),
            other => Err(format!("unknown interaction mode `{other}`")),
        }
    }
}

impl fmt::Display for Interaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Interaction::Iterative => "iterative",
            Interaction::FixedSubset => "fixed-subset",
            Interaction::OneShot => "one-shot",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_pages: usize,
    pub n_users: usize,
    /// Confidence bound Δ in (0, 1].
    pub tolerance: f64,
    pub trust_mean: f64,
    pub trust_sd: f64,
    /// Exponent γ of the activity distribution `p(a) ∝ a^−γ`.
    pub activity_exponent: f64,
    pub activity_max: usize,
    pub max_rounds: usize,
    pub convergence_eps: f64,
    pub seed: u64,
    pub interaction: Interaction,
    /// Community detection used to count communities of the page projection.
    pub counter: Method,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_pages: 100,
            n_users: 10_000,
            tolerance: 0.2,
            trust_mean: 0.5,
            trust_sd: 0.1,
            activity_exponent: 3.0,
            activity_max: 100,
            max_rounds: 1000,
            convergence_eps: 1e-6,
            seed: 0,
            interaction: Interaction::Iterative,
            counter: Method::Multilevel,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Argument(msg.to_string()));
        if self.n_pages < 2 {
            return fail("n_pages must be at least 2");
        }
        if self.n_users < 1 {
            return fail("n_users must be at least 1");
        }
        if !(self.tolerance > 0.0 && self.tolerance <= 1.0) {
            return fail("tolerance must lie in (0, 1]");
        }
        if !(self.trust_mean > 0.0 && self.trust_mean < 1.0) {
            return fail("trust_mean must lie in (0, 1)");
        }
        if !(self.trust_sd > 0.0 && self.trust_sd.is_finite()) {
            return fail("trust_sd must be positive");
        }
        if !self.activity_exponent.is_finite() {
            return fail("activity_exponent must be finite");
        }
        if self.activity_max < 1 {
            return fail("activity_max must be at least 1");
        }
        if self.max_rounds < 1 {
            return fail("max_rounds must be at least 1");
        }
        if self.convergence_eps.is_nan() || self.convergence_eps <= 0.0 {
            return fail("convergence_eps must be positive");
        }
        if self.counter == Method::Spinglass {
            return fail("community counting supports multilevel or fastgreedy");
        }
        Ok(())
    }

    /// Applies one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Argument(format!("bad value `{value}` for `{key}`")))
        }
        match key {
            "n_pages" => self.n_pages = parse(key, value)?,
            "n_users" => self.n_users = parse(key, value)?,
            "tolerance" => self.tolerance = parse(key, value)?,
            "trust_mean" => self.trust_mean = parse(key, value)?,
            "trust_sd" => self.trust_sd = parse(key, value)?,
            "activity_exponent" => self.activity_exponent = parse(key, value)?,
            "activity_max" => self.activity_max = parse(key, value)?,
            "max_rounds" => self.max_rounds = parse(key, value)?,
            "convergence_eps" => self.convergence_eps = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "interaction" => self.interaction = value.parse().map_err(Error::Argument)?,
            "counter" => self.counter = value.parse().map_err(Error::Argument)?,
            other => return Err(Error::Argument(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Parses a flat `key=value` file; blank lines and `#` comments are ignored.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = SimConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Row { line: n as u64 + 1, message: "expected key=value".into() })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> String {
        format!(
            "n_pages={}\nn_users={}\ntolerance={}\ntrust_mean={}\ntrust_sd={}\nactivity_exponent={}\n\
             activity_max={}\nmax_rounds={}\nconvergence_eps={}\nseed={}\ninteraction={}\ncounter={}\n",
            self.n_pages,
            self.n_users,
            self.tolerance,
            self.trust_mean,
            self.trust_sd,
            self.activity_exponent,
            self.activity_max,
            self.max_rounds,
            self.convergence_eps,
            self.seed,
            self.interaction,
            self.counter.as_str(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub opinion: f64,
    pub trust: f64,
    pub activity: usize,
    /// Indices of liked pages.
    pub liked: BTreeSet<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PageEntity {
    pub editorial_line: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub agents: Vec<Agent>,
    pub pages: Vec<PageEntity>,
}

/// Samples `Normal(mean, sd)` restricted to [0, 1] by rejection.
fn truncated_normal<R: Rng>(rng: &mut R, normal: &Normal<f64>) -> f64 {
    loop {
        let x = normal.sample(rng);
        if (0.0..=1.0).contains(&x) {
            return x;
        }
    }
}

/// Discrete power law `p(a) ∝ a^−γ` on `1..=max`.
pub fn activity_distribution(exponent: f64, max: usize) -> WeightedIndex<f64> {
    let weights: Vec<f64> = (1..=max).map(|a| (a as f64).powf(-exponent)).collect();
    WeightedIndex::new(weights).expect("power-law weights are positive")
}

fn init_with<R: Rng>(cfg: &SimConfig, rng: &mut R) -> Population {
    let pages = (0..cfg.n_pages)
        .map(|_| PageEntity { editorial_line: rng.random::<f64>() })
        .collect();
    let normal = Normal::new(cfg.trust_mean, cfg.trust_sd).expect("validated trust parameters");
    let activity = activity_distribution(cfg.activity_exponent, cfg.activity_max);
    let agents = (0..cfg.n_users)
        .map(|_| {
            let opinion = rng.random::<f64>();
            let trust = truncated_normal(rng, &normal);
            let activity = activity.sample(rng) + 1;
            Agent { opinion, trust, activity, liked: BTreeSet::new() }
        })
        .collect();
    Population { agents, pages }
}

/// Draws editorial lines, opinions, trusts and activities from `cfg.seed`.
pub fn init_population(cfg: &SimConfig) -> Result<Population> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(init_with(cfg, &mut rng))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub initial_opinions: Vec<f64>,
    pub final_opinions: Vec<f64>,
    pub editorial_lines: Vec<f64>,
    /// Liked page indices per user.
    pub likes: Vec<Vec<u32>>,
    pub rounds: usize,
    pub converged: bool,
    pub seed: u64,
    pub counter: Method,
}

impl SimResult {
    pub fn like_count(&self) -> usize {
        self.likes.iter().map(Vec::len).sum()
    }

    /// The users × pages like graph, with ids `p0000…` and `u000000…`.
    pub fn like_graph(&self) -> BipartiteGraph {
        let pages = (0..self.editorial_lines.len()).map(|p| format!("p{p:04}")).collect();
        let users = (0..self.likes.len()).map(|u| format!("u{u:06}")).collect();
        BipartiteGraph::from_user_lists(Action::Like, pages, users, &self.likes)
    }
}

/// Runs the opinion dynamics for `cfg`.
pub fn run(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let population = init_with(cfg, &mut rng);
    Ok(run_population(cfg, population, &mut rng))
}

/// Runs the dynamics on a prepared population, drawing from `rng`.
pub fn run_population<R: Rng>(cfg: &SimConfig, population: Population, rng: &mut R) -> SimResult {
    let Population { mut agents, pages } = population;
    let lines: Vec<f64> = pages.iter().map(|p| p.editorial_line).collect();
    let initial_opinions: Vec<f64> = agents.iter().map(|a| a.opinion).collect();
    let n_pages = lines.len();
    let max_rounds = match cfg.interaction {
        Interaction::OneShot => 1,
        _ => cfg.max_rounds,
    };

    // partial Fisher–Yates over a persistent permutation draws `a` distinct pages
    let mut deck: Vec<u32> = (0..n_pages as u32).collect();
    let mut draw = |rng: &mut R, a: usize, out: &mut Vec<u32>| {
        out.clear();
        for i in 0..a.min(n_pages) {
            let j = rng.random_range(i..n_pages);
            deck.swap(i, j);
            out.push(deck[i]);
        }
    };

    let fixed: Vec<Vec<u32>> = if cfg.interaction == Interaction::FixedSubset {
        agents
            .iter()
            .map(|agent| {
                let mut subset = Vec::new();
                draw(rng, agent.activity, &mut subset);
                subset
            })
            .collect()
    } else {
        Vec::new()
    };

    let mut liked = vec![false; agents.len() * n_pages];
    let mut order: Vec<usize> = (0..agents.len()).collect();
    let mut sample = Vec::new();
    let mut rounds = 0;
    let mut converged = false;
    while rounds < max_rounds {
        rounds += 1;
        order.shuffle(rng);
        let mut max_shift: f64 = 0.0;
        for &u in &order {
            let agent = &mut agents[u];
            let start = agent.opinion;
            let pages: &[u32] = if fixed.is_empty() {
                draw(rng, agent.activity, &mut sample);
                &sample
            } else {
                &fixed[u]
            };
            for &p in pages {
                let c = lines[p as usize];
                if (c - agent.opinion).abs() < cfg.tolerance {
                    liked[u * n_pages + p as usize] = true;
                    agent.opinion = (1.0 - agent.trust) * agent.opinion + agent.trust * c;
                }
            }
            max_shift = max_shift.max((agent.opinion - start).abs());
        }
        if max_shift < cfg.convergence_eps {
            converged = true;
            break;
        }
    }
    for (u, agent) in agents.iter_mut().enumerate() {
        let row = &liked[u * n_pages..(u + 1) * n_pages];
        agent.liked = (0..n_pages as u32).filter(|&p| row[p as usize]).collect();
    }

    SimResult {
        initial_opinions,
        final_opinions: agents.iter().map(|a| a.opinion).collect(),
        editorial_lines: lines,
        likes: agents.into_iter().map(|a| a.liked.into_iter().collect()).collect(),
        rounds,
        converged,
        seed: cfg.seed,
        counter: cfg.counter,
    }
}

/// Number of communities of the page projection of the like graph,
/// isolated pages counted as singletons.
pub fn project_and_count(r: &SimResult) -> usize {
    if r.like_count() == 0 {
        return r.editorial_lines.len();
    }
    let projection = project_pages(&r.like_graph());
    let partition = match r.counter {
        Method::FastGreedy => fastgreedy(&projection),
        _ => multilevel(&projection, r.seed),
    };
    partition.community_count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub trust_mean: f64,
    pub mean_communities: f64,
    pub sd: f64,
    pub iterations: usize,
    pub counts: Vec<usize>,
}

/// Seed of one sweep run. It depends on the grid value rather than its
/// position, so reordering the grid leaves every point unchanged.
pub fn sweep_seed(base: u64, trust_mean: f64, iteration: usize) -> u64 {
    let mut z = base ^ trust_mean.to_bits().rotate_left(17) ^ (iteration as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mean and sample standard deviation of the community count over
/// `iterations` independent runs per trust value.
pub fn trust_sweep(base: &SimConfig, trust_means: &[f64], iterations: usize) -> Result<Vec<SweepPoint>> {
    if trust_means.is_empty() {
        return Err(Error::Argument("trust grid is empty".into()));
    }
    if iterations == 0 {
        return Err(Error::Argument("iterations must be at least 1".into()));
    }
    for &t in trust_means {
        SimConfig { trust_mean: t, ..base.clone() }.validate()?;
    }
    let jobs: Vec<(usize, usize)> = (0..trust_means.len())
        .flat_map(|g| (0..iterations).map(move |i| (g, i)))
        .collect();
    let counts: Vec<usize> = jobs
        .par_iter()
        .map(|&(g, i)| {
            let t = trust_means[g];
            let cfg = SimConfig { trust_mean: t, seed: sweep_seed(base.seed, t, i), ..base.clone() };
            let result = run(&cfg).expect("validated config");
            project_and_count(&result)
        })
        .collect();
    Ok(trust_means
        .iter()
        .zip(counts.chunks(iterations))
        .map(|(&trust_mean, counts)| {
            let (mean, sd) = mean_sd(counts);
            SweepPoint { trust_mean, mean_communities: mean, sd, iterations, counts: counts.to_vec() }
        })
        .collect())
}

fn mean_sd(counts: &[usize]) -> (f64, f64) {
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<usize>() as f64 / n;
    if counts.len() < 2 {
        return (mean, 0.0);
    }
    let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Writes `trust_mean,mean_communities,sd,iterations` rows.
pub fn write_sweep_csv<W: std::io::Write>(points: &[SweepPoint], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["trust_mean", "mean_communities", "sd", "iterations"])?;
    for p in points {
        w.write_record([
            p.trust_mean.to_string(),
            p.mean_communities.to_string(),
            p.sd.to_string(),
            p.iterations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{fit_powerlaw, SampleVector};

    fn small() -> SimConfig {
        SimConfig { n_pages: 20, n_users: 200, activity_max: 10, max_rounds: 50, seed: 7, ..SimConfig::default() }
    }

    fn population(trust: f64, activity: usize, opinions: &[f64], lines: &[f64]) -> Population {
        Population {
            agents: opinions
                .iter()
                .map(|&opinion| Agent { opinion, trust, activity, liked: BTreeSet::new() })
                .collect(),
            pages: lines.iter().map(|&editorial_line| PageEntity { editorial_line }).collect(),
        }
    }

    #[test]
    fn same_seed_same_result() {
        assert_eq!(init_population(&small()).unwrap(), init_population(&small()).unwrap());
        assert_eq!(run(&small()).unwrap(), run(&small()).unwrap());
        let other = SimConfig { seed: 8, ..small() };
        assert_ne!(run(&small()).unwrap().final_opinions, run(&other).unwrap().final_opinions);
    }

    #[test]
    fn degenerate_trust() {
        let cfg = SimConfig { trust_sd: 1e-9, trust_mean: 0.3, ..small() };
        for a in init_population(&cfg).unwrap().agents {
            assert!((a.trust - 0.3).abs() < 1e-6);
            assert!((1..=cfg.activity_max).contains(&a.activity));
        }
    }

    #[test]
    fn zero_trust_is_identity() {
        let cfg = small();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pop = init_with(&cfg, &mut rng);
        for a in &mut pop.agents {
            a.trust = 0.0;
        }
        let r = run_population(&cfg, pop, &mut rng);
        assert_eq!(r.initial_opinions, r.final_opinions);
        assert!(r.converged);
        for (u, liked) in r.likes.iter().enumerate() {
            for &p in liked {
                assert!((r.editorial_lines[p as usize] - r.initial_opinions[u]).abs() < cfg.tolerance);
            }
        }
    }

    #[test]
    fn full_trust_jumps_to_page() {
        let cfg = SimConfig { tolerance: 1.0, interaction: Interaction::OneShot, ..small() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = run_population(&cfg, population(1.0, 1, &[0.1, 0.5, 0.9], &[0.25, 0.75]), &mut rng);
        for (u, liked) in r.likes.iter().enumerate() {
            assert_eq!(liked.len(), 1);
            assert_eq!(r.final_opinions[u], r.editorial_lines[liked[0] as usize]);
        }
    }

    #[test]
    fn single_user_settles_on_its_pages() {
        // identical editorial lines: the average is reached exactly
        let cfg = SimConfig { tolerance: 1.0, n_users: 1, ..small() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = run_population(&cfg, population(0.4, 3, &[0.9], &[0.2; 5]), &mut rng);
        assert!(r.converged);
        assert!((r.final_opinions[0] - 0.2).abs() < cfg.convergence_eps);

        // two pages visited in a fixed cycle settle on the cycle's fixed point
        let cfg = SimConfig { interaction: Interaction::FixedSubset, ..cfg };
        let (t, c) = (0.4, [0.2, 0.6]);
        let r = run_population(&cfg, population(t, 2, &[0.9], &c), &mut rng);
        assert!(r.converged);
        assert_eq!(r.likes[0], vec![0, 1]);
        let final_theta = r.final_opinions[0];
        let cycle = |first: f64, second: f64| ((1.0 - t) * t * first + t * second) / (1.0 - (1.0 - t).powi(2));
        let fixed = [cycle(c[0], c[1]), cycle(c[1], c[0])];
        assert!(fixed.iter().any(|f| (final_theta - f).abs() < 1e-5), "{final_theta} vs {fixed:?}");
    }

    #[test]
    fn opinions_stay_in_unit_interval() {
        for interaction in [Interaction::Iterative, Interaction::FixedSubset, Interaction::OneShot] {
            let r = run(&SimConfig { interaction, tolerance: 0.6, ..small() }).unwrap();
            assert!(r.final_opinions.iter().all(|o| (0.0..=1.0).contains(o)));
        }
    }

    #[test]
    fn counting_blocks_and_empty_graphs() {
        let blocks = SimResult {
            initial_opinions: vec![0.0; 4],
            final_opinions: vec![0.0; 4],
            editorial_lines: vec![0.1, 0.2, 0.8, 0.9],
            likes: vec![vec![0, 1], vec![0, 1], vec![2, 3], vec![2, 3]],
            rounds: 1,
            converged: true,
            seed: 0,
            counter: Method::Multilevel,
        };
        assert_eq!(project_and_count(&blocks), 2);
        assert_eq!(project_and_count(&SimResult { counter: Method::FastGreedy, ..blocks.clone() }), 2);
        let empty = SimResult { likes: vec![Vec::new(); 4], ..blocks };
        assert_eq!(project_and_count(&empty), 4);
    }

    #[test]
    fn full_tolerance_merges_everything() {
        let cfg = SimConfig { tolerance: 1.0, trust_mean: 0.9, n_users: 2000, activity_max: 20, ..small() };
        assert_eq!(project_and_count(&run(&cfg).unwrap()), 1);
    }

    #[test]
    fn activity_follows_power_law() {
        let dist = activity_distribution(3.0, 100_000);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = (0..1_000_000).map(|_| dist.sample(&mut rng) as u64 + 1);
        let fit = fit_powerlaw(&SampleVector::from_counts(draws)).unwrap();
        assert!((fit.alpha() - 3.0).abs() <= 0.15, "alpha {}", fit.alpha());
    }

    #[test]
    fn sweep_is_order_free() {
        let base = SimConfig { n_users: 100, max_rounds: 5, ..small() };
        let forward = trust_sweep(&base, &[0.1, 0.5], 2).unwrap();
        let backward = trust_sweep(&base, &[0.5, 0.1], 2).unwrap();
        assert_eq!(forward[0], backward[1]);
        assert_eq!(forward[1], backward[0]);
        let single = trust_sweep(&base, &[0.1], 1).unwrap();
        let cfg = SimConfig { trust_mean: 0.1, seed: sweep_seed(base.seed, 0.1, 0), ..base.clone() };
        assert_eq!(single[0].mean_communities, project_and_count(&run(&cfg).unwrap()) as f64);
        assert!(trust_sweep(&base, &[], 2).is_err());
    }

    #[test]
    fn key_value_round_trip() {
        let cfg = SimConfig { tolerance: 0.35, interaction: Interaction::OneShot, counter: Method::FastGreedy, ..small() };
        assert_eq!(SimConfig::from_key_values(&cfg.to_key_values()).unwrap(), cfg);
        assert!(SimConfig::from_key_values("bogus=1").is_err());
        assert!(SimConfig::from_key_values("tolerance=0").unwrap().validate().is_err());
    }
}
