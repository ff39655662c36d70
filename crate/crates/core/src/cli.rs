//! Command-line front end. Every subcommand computes its outputs in memory,
//! then writes them together with a `manifest.json` that can replay the run.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::community::{detect, modularity, rand_index, Comparison, Method, Partition, SpinglassParams};
use crate::error::Error;
use crate::exposure::{build_profiles, exposure_curve, write_curves, Metric, WindowKind};
use crate::graph::{build_bipartite, project_pages, project_users, WeightedGraph};
use crate::ingest::{parse_interactions, summarize, Action, Dataset, Filter, ParseMode, SummaryStats};
use crate::polarization::{
    localization_distribution, polarization_rank, CommunityLookup, LocalizationSummary, DEFAULT_MIN_LIKES,
    DEFAULT_THRESHOLD,
};
use crate::simulation::{project_and_count, run as simulate, trust_sweep, write_sweep_csv, SimConfig};
use crate::stats::{empirical_ccdf, fit_family, loglik_table, write_ccdf, Family, SampleVector};

pub const MANIFEST: &str = "manifest.json";
pub const DEFAULT_GRID: [f64; 7] = [0.01, 0.05, 0.1, 0.2, 0.4, 0.6, 0.9];

#[derive(Debug, Parser)]
#[command(name = "echoscope", version, about = "News consumption, communities and polarization on social platforms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Directory receiving the outputs and the run manifest
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Page, post, like, comment and user counts
    Summarize(SummarizeArgs),
    /// Page or user projection of the like/comment bipartite graph
    Project(ProjectArgs),
    /// Community detection on a projected graph (`--in nodes.csv --in edges.csv`)
    Communities(CommunitiesArgs),
    /// Rand index between two partitions, or between all methods
    Compare(CompareArgs),
    /// Maximum-likelihood fits of per-post (page, user) action counts
    Fit(FitArgs),
    /// Empirical CCDF of per-post (page, user) action counts
    Ccdf(SampleArgs),
    /// Selective-exposure curves
    Exposure(ExposureArgs),
    /// Per-user localization over page communities
    Localization(LocalizationArgs),
    /// Order localization summaries from most to least polarized
    Rank(RankArgs),
    /// One run of the bounded confidence model
    Simulate(SimulateArgs),
    /// Community count against mean trust
    Sweep(SweepArgs),
    /// Re-execute the run described by a manifest
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// Interactions CSV (`user_id,page_id,post_id,action,timestamp`)
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Pages table CSV (`page_id,page_name,country`)
    #[arg(long)]
    pub pages: Option<PathBuf>,
    /// Skip malformed rows instead of failing
    #[arg(long)]
    pub lenient: bool,
    /// Keep only pages of this country
    #[arg(long)]
    pub country: Option<String>,
    /// Keep records with timestamp >= FROM
    #[arg(long)]
    pub from: Option<u64>,
    /// Keep records with timestamp < TO
    #[arg(long)]
    pub to: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SummarizeArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Pages,
    Users,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "like")]
    pub action: Action,
    #[arg(long, value_enum, default_value = "pages")]
    pub side: Side,
    /// Refuse user projections above this many users
    #[arg(long, default_value_t = 50_000)]
    pub max_users: usize,
    /// Drop edges lighter than this
    #[arg(long, default_value_t = 1)]
    pub min_weight: u64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SpinglassArgs {
    #[arg(long, default_value_t = SpinglassParams::default().spins_max)]
    pub spins: usize,
    #[arg(long, default_value_t = SpinglassParams::default().start_temp)]
    pub start_temp: f64,
    #[arg(long, default_value_t = SpinglassParams::default().end_temp)]
    pub end_temp: f64,
    #[arg(long, default_value_t = SpinglassParams::default().cooling)]
    pub cooling: f64,
    #[arg(long, default_value_t = SpinglassParams::default().sweeps_per_temp)]
    pub sweeps_per_temp: usize,
}

impl SpinglassArgs {
    fn params(&self) -> SpinglassParams {
        SpinglassParams {
            spins_max: self.spins,
            start_temp: self.start_temp,
            end_temp: self.end_temp,
            cooling: self.cooling,
            sweeps_per_temp: self.sweeps_per_temp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CommunitiesArgs {
    /// Nodes CSV then edges CSV
    #[arg(long = "in", value_name = "FILE", num_args = 1, required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value = "multilevel")]
    pub method: Method,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub spinglass: SpinglassArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CompareArgs {
    /// Nodes and edges CSV, optionally followed by two partition CSVs
    #[arg(long = "in", value_name = "FILE", num_args = 1, required = true)]
    pub inputs: Vec<PathBuf>,
    /// Seed for the detections run when no partitions are given
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub spinglass: SpinglassArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Post,
    Page,
    User,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SampleArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Action to count
    #[arg(long, default_value = "like")]
    pub action: Action,
    /// Unit the actions are counted per
    #[arg(long, value_enum, default_value = "post")]
    pub by: Unit,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub sample: SampleArgs,
    /// Families to fit (all when omitted)
    #[arg(long = "family")]
    pub families: Vec<Family>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ExposureArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Metric on the x axis (both when omitted)
    #[arg(long = "by")]
    pub metrics: Vec<Metric>,
    /// Window kinds (all when omitted)
    #[arg(long = "window")]
    pub windows: Vec<WindowKind>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct LocalizationArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Partition CSV of the page projection; detected with `--method` when omitted
    #[arg(long)]
    pub partition: Option<PathBuf>,
    #[arg(long, default_value = "multilevel")]
    pub method: Method,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_MIN_LIKES)]
    pub min_likes: u64,
    /// L below this counts as polarized
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Dataset label; defaults to the country or the input file stem
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RankArgs {
    /// Localization summary JSON files
    #[arg(long = "in", value_name = "FILE", num_args = 1, required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    /// Flat `key=value` configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set tolerance=0.3`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Seed; overrides the configuration file
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ModelArgs {
    fn resolve(&self) -> Result<SimConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => SimConfig::from_key_values(&read_to_string(path)?).map_err(Failure::from_lib)?,
            None => SimConfig::default(),
        };
        for item in &self.overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Failure::Usage(format!("`--set {item}` is not KEY=VALUE")))?;
            cfg.set(key.trim(), value.trim()).map_err(Failure::from_lib)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate().map_err(Failure::from_lib)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Mean trust values
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_GRID)]
    pub grid: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub iterations: usize,
    /// Worker threads (all cores when omitted)
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
}

/// Written next to every set of outputs. `params` holds the parsed
/// subcommand with all defaults filled in and is enough to replay the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub inputs: Vec<PathBuf>,
    pub params: Command,
    /// Parameters derived at run time, such as a merged simulation config.
    pub resolved: Value,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(Error),
}

impl Failure {
    fn from_lib(e: Error) -> Self {
        match e {
            Error::Argument(msg) => Failure::Usage(msg),
            other => Failure::Data(other),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(msg) => write!(f, "usage error: {msg}"),
            Failure::Data(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

/// Everything a subcommand produced, not yet written.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<(String, Vec<u8>)>,
    pub resolved: Value,
    pub seed: Option<u64>,
}

impl Outcome {
    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(Error::from)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    fn csv(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> crate::Result<()>) -> Result<(), Failure> {
        let mut bytes = Vec::new();
        write(&mut bytes)?;
        self.add(name, bytes);
        Ok(())
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Summarize(_) => "summarize",
            Command::Project(_) => "project",
            Command::Communities(_) => "communities",
            Command::Compare(_) => "compare",
            Command::Fit(_) => "fit",
            Command::Ccdf(_) => "ccdf",
            Command::Exposure(_) => "exposure",
            Command::Localization(_) => "localization",
            Command::Rank(_) => "rank",
            Command::Simulate(_) => "simulate",
            Command::Sweep(_) => "sweep",
            Command::Replay(_) => "replay",
        }
    }

    pub fn inputs(&self) -> Vec<PathBuf> {
        fn data(d: &DataArgs) -> Vec<PathBuf> {
            std::iter::once(d.input.clone()).chain(d.pages.clone()).collect()
        }
        match self {
            Command::Summarize(a) => data(&a.data),
            Command::Project(a) => data(&a.data),
            Command::Communities(a) => a.inputs.clone(),
            Command::Compare(a) => a.inputs.clone(),
            Command::Fit(a) => data(&a.sample.data),
            Command::Ccdf(a) => data(&a.data),
            Command::Exposure(a) => data(&a.data),
            Command::Localization(a) => {
                let mut v = data(&a.data);
                v.extend(a.partition.clone());
                v
            }
            Command::Rank(a) => a.inputs.clone(),
            Command::Simulate(a) => a.model.config.iter().cloned().collect(),
            Command::Sweep(a) => a.model.config.iter().cloned().collect(),
            Command::Replay(a) => vec![a.input.clone()],
        }
    }
}

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path).map_err(|e| Failure::Data(Error::Format(format!("{}: {e}", path.display()))))
}

fn read_to_string(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Data(Error::Format(format!("{}: {e}", path.display()))))
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn load(args: &DataArgs) -> Result<Dataset, Failure> {
    let mode = if args.lenient { ParseMode::Lenient } else { ParseMode::Strict };
    let pages = args.pages.as_deref().map(open).transpose()?;
    let parsed = parse_interactions(open(&args.input)?, pages, mode)?;
    if args.lenient {
        eprintln!("{}: skipped {} malformed rows", args.input.display(), parsed.skipped.len());
        for e in parsed.skipped.iter().take(10) {
            eprintln!("  {e}");
        }
    }
    let window = match (args.from, args.to) {
        (None, None) => None,
        (from, to) => Some((from.unwrap_or(0), to.unwrap_or(u64::MAX))),
    };
    if window.is_none() && args.country.is_none() {
        return Ok(parsed.dataset);
    }
    let filter = Filter { action: None, window, country: args.country.clone() };
    parsed.dataset.filter(&filter).map_err(Failure::from_lib)
}

fn read_graph(inputs: &[PathBuf]) -> Result<WeightedGraph, Failure> {
    if inputs.len() < 2 {
        return Err(Failure::Usage("expected `--in nodes.csv --in edges.csv`".into()));
    }
    Ok(WeightedGraph::read_csv(open(&inputs[0])?, open(&inputs[1])?)?)
}

fn read_partition(g: &WeightedGraph, path: &Path) -> Result<Partition, Failure> {
    Partition::read_csv(g, open(path)?).map_err(Failure::Data)
}

fn sample(args: &SampleArgs, d: &Dataset) -> SampleVector {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for r in &d.records {
        let key = match args.by {
            Unit::Post => r.post_id.as_str(),
            Unit::Page => r.page_id.as_str(),
            Unit::User => r.user_id.as_str(),
        };
        let n = counts.entry(key).or_default();
        if r.action == args.action {
            *n += 1;
        }
    }
    SampleVector::from_counts(counts.into_values())
}

#[derive(Serialize)]
struct Summary {
    total: SummaryStats,
    countries: BTreeMap<String, SummaryStats>,
}

#[derive(Serialize)]
struct CommunityReport {
    method: Method,
    seed: u64,
    nodes: usize,
    communities: usize,
    modularity: f64,
    sizes: Vec<usize>,
    fingerprint: String,
}

fn community_report(g: &WeightedGraph, p: &Partition, method: Method, seed: u64) -> Result<CommunityReport, Failure> {
    let mut sizes: Vec<usize> = p.communities().iter().map(Vec::len).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    Ok(CommunityReport {
        method,
        seed,
        nodes: g.node_count(),
        communities: p.community_count(),
        modularity: modularity(g, p)?,
        sizes,
        fingerprint: format!("{:016x}", p.fingerprint()),
    })
}

/// Runs one subcommand without touching the file system beyond its inputs.
pub fn execute(command: &Command) -> Result<Outcome, Failure> {
    let mut out = Outcome::default();
    match command {
        Command::Summarize(a) => {
            let d = load(&a.data)?;
            let countries = d
                .countries()
                .into_iter()
                .map(|code| {
                    let part = d.filter(&Filter::country(code.clone())).map_err(Failure::from_lib)?;
                    Ok((code, summarize(&part)))
                })
                .collect::<Result<_, Failure>>()?;
            out.json("summary.json", &Summary { total: summarize(&d), countries })?;
        }
        Command::Project(a) => {
            let d = load(&a.data)?;
            let b = build_bipartite(&d, a.action).map_err(Failure::from_lib)?;
            let g = match a.side {
                Side::Pages => project_pages(&b),
                Side::Users => project_users(&b, a.max_users)?,
            };
            let g = if a.min_weight > 1 { g.with_min_weight(a.min_weight) } else { g };
            let (mut nodes, mut edges) = (Vec::new(), Vec::new());
            g.write_csv(&mut nodes, &mut edges)?;
            out.add("nodes.csv", nodes);
            out.add("edges.csv", edges);
            out.json(
                "projection.json",
                &serde_json::json!({
                    "side": a.side,
                    "action": a.action,
                    "nodes": g.node_count(),
                    "edges": g.edge_count(),
                    "total_weight": g.total_weight(),
                    "fingerprint": format!("{:016x}", g.fingerprint()),
                }),
            )?;
        }
        Command::Communities(a) => {
            if a.inputs.len() != 2 {
                return Err(Failure::Usage("communities expects `--in nodes.csv --in edges.csv`".into()));
            }
            let g = read_graph(&a.inputs)?;
            let p = detect(&g, a.method, a.seed, &a.spinglass.params());
            out.csv("partition.csv", |w| p.write_csv(&g, w))?;
            out.json("communities.json", &community_report(&g, &p, a.method, a.seed)?)?;
            out.seed = Some(a.seed);
        }
        Command::Compare(a) => {
            let g = read_graph(&a.inputs)?;
            let comparisons = match a.inputs.len() {
                2 => {
                    out.seed = Some(a.seed);
                    let methods = [Method::FastGreedy, Method::Multilevel, Method::Spinglass];
                    let params = a.spinglass.params();
                    let parts: Vec<Partition> = methods.iter().map(|&m| detect(&g, m, a.seed, &params)).collect();
                    let mut v = Vec::new();
                    for i in 0..methods.len() {
                        for j in i + 1..methods.len() {
                            v.push(Comparison {
                                method_a: methods[i].as_str().into(),
                                method_b: methods[j].as_str().into(),
                                rand_index: rand_index(&parts[i], &parts[j])?,
                            });
                        }
                    }
                    v
                }
                4 => {
                    let pa = read_partition(&g, &a.inputs[2])?;
                    let pb = read_partition(&g, &a.inputs[3])?;
                    vec![Comparison {
                        method_a: stem(&a.inputs[2]),
                        method_b: stem(&a.inputs[3]),
                        rand_index: rand_index(&pa, &pb)?,
                    }]
                }
                _ => {
                    return Err(Failure::Usage(
                        "compare expects nodes and edges, optionally followed by two partitions".into(),
                    ))
                }
            };
            out.json("comparison.json", &comparisons)?;
        }
        Command::Fit(a) => {
            let d = load(&a.sample.data)?;
            let s = sample(&a.sample, &d);
            let families = if a.families.is_empty() { Family::ALL.to_vec() } else { a.families.clone() };
            for &family in &families {
                out.json(&format!("fit_{}.json", family.as_str()), &fit_family(&s, family)?)?;
            }
            out.json("loglik.json", &loglik_table(&s, &families)?)?;
            out.resolved = serde_json::json!({ "n": s.len(), "dropped_zeros": s.dropped_zeros() });
        }
        Command::Ccdf(a) => {
            let d = load(&a.data)?;
            let curve = empirical_ccdf(&sample(a, &d))?;
            out.csv("ccdf.csv", |w| write_ccdf(&curve, w))?;
        }
        Command::Exposure(a) => {
            let d = load(&a.data)?;
            let profiles = build_profiles(&d);
            let total_pages = build_bipartite(&d, Action::Like).map_err(Failure::from_lib)?.pages().len();
            let metrics = if a.metrics.is_empty() { vec![Metric::Lifetime, Metric::Activity] } else { a.metrics.clone() };
            let windows = if a.windows.is_empty() { WindowKind::ALL.to_vec() } else { a.windows.clone() };
            let mut curves = Vec::new();
            for &by in &metrics {
                for &window in &windows {
                    curves.push((window, by, exposure_curve(&profiles, by, window, total_pages)?));
                }
            }
            out.csv("exposure.csv", |w| write_curves(&curves, w))?;
            out.csv("profiles.csv", |w| {
                let mut csv = csv::Writer::from_writer(w);
                csv.write_record(["user_id", "lifetime_s", "activity", "week", "month", "quarter"])?;
                for p in &profiles {
                    let mut row = vec![p.user_id.clone(), p.lifetime_s.to_string(), p.activity.to_string()];
                    row.extend(WindowKind::ALL.iter().map(|&k| p.max_pages(k).to_string()));
                    csv.write_record(row)?;
                }
                csv.flush()?;
                Ok(())
            })?;
            out.resolved = serde_json::json!({ "users": profiles.len(), "total_pages": total_pages });
        }
        Command::Localization(a) => {
            if a.threshold.is_nan() || a.threshold <= 1.0 {
                return Err(Failure::Usage(format!("threshold {} must exceed 1", a.threshold)));
            }
            let d = load(&a.data)?;
            let g = project_pages(&build_bipartite(&d, Action::Like).map_err(Failure::from_lib)?);
            let p = match &a.partition {
                Some(path) => read_partition(&g, path)?,
                None => {
                    out.seed = Some(a.seed);
                    let p = detect(&g, a.method, a.seed, &SpinglassParams::default());
                    out.csv("partition.csv", |w| p.write_csv(&g, w))?;
                    p
                }
            };
            let label = a
                .label
                .clone()
                .or_else(|| a.data.country.clone())
                .unwrap_or_else(|| stem(&a.data.input));
            let lookup = CommunityLookup::new(&g, &p).map_err(Failure::Data)?;
            let sample = localization_distribution(&d, &lookup, a.min_likes, &label).map_err(Failure::Data)?;
            if sample.skipped_users > 0 {
                eprintln!("skipped {} users with likes outside the partition", sample.skipped_users);
            }
            let summary: LocalizationSummary = sample.summary(a.threshold).map_err(Failure::from_lib)?;
            out.csv("localization.csv", |w| sample.write_users_csv(w))?;
            out.json("summary.json", &summary)?;
            out.csv("ccdf.csv", |w| write_ccdf(&sample.ccdf(), w))?;
            out.csv("pdf.csv", |w| sample.write_pdf_csv(w))?;
            out.resolved = serde_json::json!({
                "label": label,
                "communities": sample.n_communities,
                "skipped_users": sample.skipped_users,
                "fingerprint": format!("{:016x}", sample.fingerprint),
            });
        }
        Command::Rank(a) => {
            let mut medians = BTreeMap::new();
            for path in &a.inputs {
                let s: LocalizationSummary = serde_json::from_str(&read_to_string(path)?).map_err(Error::from)?;
                if medians.insert(s.label.clone(), s.median).is_some() {
                    return Err(Failure::Data(Error::Format(format!("label `{}` appears twice", s.label))));
                }
            }
            out.json("rank.json", &polarization_rank(&medians))?;
        }
        Command::Simulate(a) => {
            let cfg = a.model.resolve()?;
            let r = simulate(&cfg).map_err(Failure::from_lib)?;
            let communities = project_and_count(&r);
            out.json(
                "simulation.json",
                &serde_json::json!({
                    "rounds": r.rounds,
                    "converged": r.converged,
                    "likes": r.like_count(),
                    "communities": communities,
                }),
            )?;
            out.csv("opinions.csv", |w| {
                let mut csv = csv::Writer::from_writer(w);
                csv.write_record(["user_id", "initial", "final", "likes"])?;
                for (u, likes) in r.likes.iter().enumerate() {
                    csv.write_record([
                        format!("u{u:06}"),
                        r.initial_opinions[u].to_string(),
                        r.final_opinions[u].to_string(),
                        likes.len().to_string(),
                    ])?;
                }
                csv.flush()?;
                Ok(())
            })?;
            out.csv("pages.csv", |w| {
                let mut csv = csv::Writer::from_writer(w);
                csv.write_record(["page_id", "editorial_line"])?;
                for (p, c) in r.editorial_lines.iter().enumerate() {
                    csv.write_record([format!("p{p:04}"), c.to_string()])?;
                }
                csv.flush()?;
                Ok(())
            })?;
            out.resolved = serde_json::to_value(&cfg).map_err(Error::from)?;
            out.seed = Some(cfg.seed);
        }
        Command::Sweep(a) => {
            let cfg = a.model.resolve()?;
            let sweep = || trust_sweep(&cfg, &a.grid, a.iterations);
            let points = match a.jobs {
                Some(0) => return Err(Failure::Usage("--jobs must be at least 1".into())),
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Failure::Usage(e.to_string()))?
                    .install(sweep),
                None => sweep(),
            }
            .map_err(Failure::from_lib)?;
            out.csv("sweep.csv", |w| write_sweep_csv(&points, w))?;
            out.json("sweep.json", &points)?;
            out.resolved = serde_json::to_value(&cfg).map_err(Error::from)?;
            out.seed = Some(cfg.seed);
        }
        Command::Replay(a) => {
            let manifest: RunManifest = serde_json::from_str(&read_to_string(&a.input)?).map_err(Error::from)?;
            if matches!(manifest.params, Command::Replay(_)) {
                return Err(Failure::Data(Error::Format("a manifest cannot describe a replay".into())));
            }
            return execute(&manifest.params);
        }
    }
    Ok(out)
}

/// Writes outputs and manifest. Files land under temporary names first and
/// are renamed once all of them were written.
pub fn commit(out_dir: &Path, command: &Command, outcome: Outcome) -> Result<Vec<PathBuf>, Failure> {
    let command = match command {
        Command::Replay(a) => serde_json::from_str::<RunManifest>(&read_to_string(&a.input)?)
            .map_err(Error::from)?
            .params,
        other => other.clone(),
    };
    let manifest = RunManifest {
        subcommand: command.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        inputs: command.inputs(),
        params: command,
        resolved: outcome.resolved,
        seed: outcome.seed,
        outputs: outcome.files.iter().map(|(name, _)| name.clone()).collect(),
    };
    let mut files = outcome.files;
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(Error::from)?;
    bytes.push(b'\n');
    files.push((MANIFEST.to_string(), bytes));

    let io = |e: std::io::Error| Failure::Data(Error::Io(e));
    fs::create_dir_all(out_dir).map_err(io)?;
    let mut staged = Vec::new();
    for (name, bytes) in &files {
        let tmp = out_dir.join(format!(".{name}.partial"));
        let written = File::create(&tmp).and_then(|mut f| f.write_all(bytes));
        if let Err(e) = written {
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            let _ = fs::remove_file(&tmp);
            return Err(io(e));
        }
        staged.push((tmp, out_dir.join(name)));
    }
    for (tmp, dest) in &staged {
        fs::rename(tmp, dest).map_err(io)?;
    }
    Ok(staged.into_iter().map(|(_, dest)| dest).collect())
}

/// Parses `args`, runs the subcommand and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = execute(&cli.command).and_then(|outcome| commit(&cli.out, &cli.command, outcome));
    match result {
        Ok(_) => 0,
        Err(failure) => {
            eprintln!("{failure}");
            failure.exit_code()
        }
    }
}
