//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line and
//! fails when its criterion does not hold. Tests take a shared lock so the
//! wall-clock budgets are measured without competing work.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use echoscope::community::{detect, fastgreedy, modularity, multilevel, rand_index, Method, Partition, SpinglassParams};
use echoscope::graph::{project_pages, BipartiteGraph, WeightedGraph};
use echoscope::ingest::Action;
use echoscope::polarization::{localization, polarization_rank};
use echoscope::simulation::{trust_sweep, SimConfig, SweepPoint};
use echoscope::stats::{fit_powerlaw, SampleVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static LOCK: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: u32, pass: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

#[test]
fn criterion_01_localization_oracle() {
    let _guard = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=10);
        let mut phi: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random() }).collect();
        if phi.iter().all(|&x| x == 0.0) {
            phi[0] = 1.0;
        }
        let total: f64 = phi.iter().sum();
        phi.iter_mut().for_each(|x| *x /= total);
        let mut s2 = 0.0;
        let mut s4 = 0.0;
        for &x in &phi {
            s2 += x * x;
            s4 += x * x * x * x;
        }
        worst = worst.max((localization(&phi).unwrap() - s2 * s2 / s4).abs());
    }
    let mut exact = true;
    for n in 1..=10usize {
        for hot in 0..n {
            let mut phi = vec![0.0; n];
            phi[hot] = 1.0;
            exact &= localization(&phi).unwrap() == 1.0;
        }
        exact &= localization(&vec![1.0 / n as f64; n]).unwrap() == n as f64;
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        worst <= 1e-12 && exact && elapsed < Duration::from_secs(1),
        format!("max |L - oracle| = {worst:.2e}, boundaries exact = {exact}, {elapsed:.2?}"),
    );
}

/// Restricted growth strings enumerate every set partition of `n` nodes.
fn all_partitions(n: usize) -> Vec<Vec<usize>> {
    fn extend(prefix: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let next = prefix.iter().max().map_or(0, |m| m + 1);
        for c in 0..=next {
            prefix.push(c);
            extend(prefix, n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::new(), n, &mut out);
    out
}

fn oracle_modularity(a: &[Vec<f64>], labels: &[usize]) -> f64 {
    let k: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let two_w: f64 = k.iter().sum();
    let mut q = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            if labels[i] == labels[j] {
                q += a[i][j] - k[i] * k[j] / two_w;
            }
        }
    }
    q / two_w
}

#[test]
fn criterion_02_modularity_brute_force() {
    let _guard = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let (mut fg_ok, mut ml_ok, mut instances) = (0, 0, 0);
    while instances < 50 {
        let n = rng.random_range(3..=7);
        let mut triples = Vec::new();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(0.5) {
                    let w = rng.random_range(1..=3u64);
                    triples.push((i, j, w));
                    a[i][j] = w as f64;
                    a[j][i] = w as f64;
                }
            }
        }
        let g = WeightedGraph::from_edges((0..n).map(|i| format!("v{i}")).collect(), &triples).unwrap();
        if !g.is_connected() {
            continue;
        }
        instances += 1;
        let mut optimum = f64::NEG_INFINITY;
        for labels in all_partitions(n) {
            let expected = oracle_modularity(&a, &labels);
            let got = modularity(&g, &Partition::from_labels(labels, g.fingerprint())).unwrap();
            worst = worst.max((got - expected).abs());
            optimum = optimum.max(expected);
        }
        fg_ok += usize::from(modularity(&g, &fastgreedy(&g)).unwrap() >= optimum - 0.05);
        ml_ok += usize::from(modularity(&g, &multilevel(&g, instances as u64)).unwrap() >= optimum - 0.05);
    }
    let elapsed = start.elapsed();
    verdict(
        2,
        worst <= 1e-12 && fg_ok >= 45 && ml_ok >= 45 && elapsed < Duration::from_secs(30),
        format!("max |Q - oracle| = {worst:.2e}, near-optimal FG {fg_ok}/50 ML {ml_ok}/50, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_03_rand_index_pairs() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..=30);
        let ka = rng.random_range(1..=n);
        let kb = rng.random_range(1..=n);
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..ka)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..kb)).collect();
        let mut agree = 0u64;
        let mut total = 0u64;
        for i in 0..n {
            for j in i + 1..n {
                total += 1;
                agree += u64::from((a[i] == a[j]) == (b[i] == b[j]));
            }
        }
        let got = rand_index(&Partition::from_labels(a, 0), &Partition::from_labels(b, 0)).unwrap();
        mismatches += usize::from(got != agree as f64 / total as f64);
    }
    verdict(3, mismatches == 0, format!("{mismatches}/200 pairs differ from enumeration"));
}

#[test]
fn criterion_04_projection_oracle() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut wrong = 0usize;
    for _ in 0..50 {
        let n_pages = rng.random_range(1..=50);
        let n_users = rng.random_range(1..=500);
        let density: f64 = rng.random_range(0.01..0.2);
        let pages: Vec<String> = (0..n_pages).map(|p| format!("p{p:03}")).collect();
        let users: Vec<String> = (0..n_users).map(|u| format!("u{u:03}")).collect();
        let mut m = vec![vec![false; n_users]; n_pages];
        let mut pairs = Vec::new();
        for (p, row) in m.iter_mut().enumerate() {
            for (u, cell) in row.iter_mut().enumerate() {
                if rng.random_bool(density) {
                    *cell = true;
                    pairs.push((pages[p].as_str(), users[u].as_str()));
                }
            }
        }
        let g = project_pages(&BipartiteGraph::from_incidence(
            Action::Like,
            pages.iter().map(String::as_str),
            pairs,
        ));
        for a in 0..n_pages {
            for b in a + 1..n_pages {
                let common = (0..n_users).filter(|&u| m[a][u] && m[b][u]).count() as u64;
                wrong += usize::from(g.weight(a, b) != common);
            }
        }
    }
    verdict(4, wrong == 0, format!("{wrong} projected weights differ from common-neighbor counts"));
}

#[test]
fn criterion_05_powerlaw_recovery() {
    let _guard = serial();
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    for alpha in [2.0, 2.5, 3.0] {
        let errors: Vec<f64> = (0..50u64)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let xs = (0..50_000).map(|_| (1.0 - rng.random::<f64>()).powf(-1.0 / (alpha - 1.0)));
                let fit = fit_powerlaw(&SampleVector::from_reals(xs).unwrap()).unwrap();
                (fit.alpha() - alpha).abs()
            })
            .collect();
        let m = median(errors);
        pass &= m <= 0.05;
        lines.push(format!("alpha {alpha}: median |err| {m:.4}"));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(60);
    verdict(5, pass, format!("{}, {elapsed:.2?}", lines.join(", ")));
}

#[test]
fn criterion_06_planted_partition_agreement() {
    let _guard = serial();
    let mut total = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let mut pairs = Vec::new();
        for i in 0..80 {
            for j in i + 1..80 {
                let p = if i / 20 == j / 20 { 0.3 } else { 0.02 };
                if rng.random_bool(p) {
                    pairs.push((i, j));
                }
            }
        }
        let g = WeightedGraph::unweighted(80, &pairs).unwrap();
        let params = SpinglassParams::default();
        let parts: Vec<Partition> = [Method::FastGreedy, Method::Multilevel, Method::Spinglass]
            .into_iter()
            .map(|m| detect(&g, m, seed, &params))
            .collect();
        let mean = (rand_index(&parts[0], &parts[1]).unwrap()
            + rand_index(&parts[0], &parts[2]).unwrap()
            + rand_index(&parts[1], &parts[2]).unwrap())
            / 3.0;
        total += mean;
    }
    let mean = total / 20.0;
    verdict(6, mean >= 0.8, format!("mean pairwise Rand index {mean:.4}"));
}

#[test]
fn criterion_07_rank_regression() {
    let _guard = serial();
    let medians: BTreeMap<String, f64> = [("ES", 1.01653), ("DE", 1.00274), ("FR", 1.00222), ("IT", 1.00001)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    let order: Vec<String> = polarization_rank(&medians).into_iter().map(|e| e.label).collect();
    verdict(7, order == ["IT", "FR", "DE", "ES"], format!("order {order:?}"));
}

fn stderr_of(p: &SweepPoint) -> f64 {
    p.sd / (p.iterations as f64).sqrt()
}

#[test]
fn criterion_08_trust_sweep_shape() {
    let _guard = serial();
    let start = Instant::now();
    let base = SimConfig::default();
    let grid = [0.01, 0.05, 0.1, 0.2, 0.4, 0.6, 0.9];
    let points = trust_sweep(&base, &grid, 100).unwrap();
    let at = |t: f64| points.iter().find(|p| p.trust_mean == t).unwrap();
    let exceeds = |a: &SweepPoint, b: &SweepPoint| {
        let margin = 2.0 * (stderr_of(a).powi(2) + stderr_of(b).powi(2)).sqrt();
        (a.mean_communities - b.mean_communities > margin, margin)
    };
    let (over_low, margin_low) = exceeds(at(0.1), at(0.01));
    let (over_high, margin_high) = exceeds(at(0.1), at(0.9));

    let tolerances = [0.1, 0.3, 0.6, 1.0];
    let delta_means: Vec<f64> = tolerances
        .iter()
        .map(|&tolerance| {
            let cfg = SimConfig { tolerance, ..base.clone() };
            trust_sweep(&cfg, &[0.5], 20).unwrap()[0].mean_communities
        })
        .collect();
    let monotone = delta_means.windows(2).all(|w| w[1] <= w[0]);
    let elapsed = start.elapsed();

    let curve: Vec<String> = points
        .iter()
        .map(|p| format!("{}:{:.2}±{:.2}", p.trust_mean, p.mean_communities, p.sd))
        .collect();
    verdict(
        8,
        over_low && over_high && monotone && elapsed < Duration::from_secs(15 * 60),
        format!(
            "curve [{}]; 0.1 vs 0.01 exceeds 2σ ({margin_low:.3}) = {over_low}; 0.1 vs 0.9 exceeds 2σ ({margin_high:.3}) = {over_high}; \
             Δ means {delta_means:?} non-increasing = {monotone}; {elapsed:.0?}",
            curve.join(" ")
        ),
    );
}

fn toy(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy").join(name)
}

fn echoscope(args: &[&str]) -> bool {
    let o = Command::new(env!("CARGO_BIN_EXE_echoscope")).args(args).output().unwrap();
    if !o.status.success() {
        eprintln!("echoscope {args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    o.status.success()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn criterion_09_replay_is_byte_identical() {
    let _guard = serial();
    let dir = tempfile::tempdir().unwrap();
    let data = toy("interactions.csv");
    let pages = toy("pages.csv");
    let (data, pages) = (p(&data), p(&pages));
    let fr = toy("goldens/FR_summary.json");
    let it = toy("goldens/IT_summary.json");
    let root = dir.path();
    let graph = root.join("project");
    let nodes = graph.join("nodes.csv");
    let edges = graph.join("edges.csv");
    let small = ["--set", "n_users=400", "--set", "n_pages=30", "--set", "activity_max=30", "--set", "max_rounds=30"];
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("summarize", vec!["summarize", "--in", data, "--pages", pages]),
        ("project", vec!["project", "--in", data, "--pages", pages, "--country", "IT"]),
        ("communities", vec!["communities", "--in", p(&nodes), "--in", p(&edges), "--method", "sg", "--seed", "4"]),
        ("compare", vec!["compare", "--in", p(&nodes), "--in", p(&edges), "--seed", "5"]),
        ("fit", vec!["fit", "--in", data]),
        ("ccdf", vec!["ccdf", "--in", data, "--by", "page"]),
        ("exposure", vec!["exposure", "--in", data]),
        ("localization", vec!["localization", "--in", data, "--pages", pages, "--country", "FR", "--seed", "6"]),
        ("rank", vec!["rank", "--in", p(&fr), "--in", p(&it)]),
        ("simulate", [&["simulate", "--seed", "7"][..], &small[..]].concat()),
        ("sweep", [&["sweep", "--seed", "8", "--iterations", "3", "--grid", "0.1,0.5"][..], &small[..]].concat()),
    ]
    .into_iter()
    .map(|(name, args)| (name, args.into_iter().map(String::from).collect()))
    .collect();

    let mut failures = Vec::new();
    for (name, args) in &runs {
        let first = root.join(name);
        let mut argv: Vec<&str> = args.iter().map(String::as_str).collect();
        argv.extend(["--out", p(&first)]);
        if !echoscope(&argv) {
            failures.push(format!("{name}: run failed"));
            continue;
        }
        let replay = root.join(format!("{name}.replay"));
        if !echoscope(&["replay", "--in", p(&first.join("manifest.json")), "--out", p(&replay)]) {
            failures.push(format!("{name}: replay failed"));
            continue;
        }
        let mut names: Vec<_> = fs::read_dir(&first).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        for file in names {
            if fs::read(first.join(&file)).ok() != fs::read(replay.join(&file)).ok() {
                failures.push(format!("{name}: {} differs", file.to_string_lossy()));
            }
        }
    }
    verdict(9, failures.is_empty(), format!("{} subcommands replayed; differences: {failures:?}", runs.len()));
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn read_values(path: &Path) -> Vec<(String, f64)> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|row| {
            let row = row.unwrap();
            (row[0].to_string(), row[1].parse().unwrap())
        })
        .collect()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

#[test]
fn criterion_10_toy_pipeline() {
    let _guard = serial();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let data = toy("interactions.csv");
    let pages = toy("pages.csv");
    let mut problems = Vec::new();

    let summary = out.join("summary");
    if !echoscope(&["summarize", "--in", p(&data), "--pages", p(&pages), "--out", p(&summary)]) {
        problems.push("summarize failed".to_string());
    } else if read_json(&summary.join("summary.json")) != read_json(&toy("goldens/summary.json")) {
        problems.push("summary differs".to_string());
    }

    let mut summaries = Vec::new();
    for country in ["FR", "IT"] {
        let proj = out.join(country).join("project");
        let comm = out.join(country).join("communities");
        let loc = out.join(country).join("localization");
        let ok = echoscope(&["project", "--in", p(&data), "--pages", p(&pages), "--country", country, "--out", p(&proj)])
            && echoscope(&[
                "communities",
                "--in",
                p(&proj.join("nodes.csv")),
                "--in",
                p(&proj.join("edges.csv")),
                "--seed",
                "1",
                "--out",
                p(&comm),
            ])
            && echoscope(&[
                "localization",
                "--in",
                p(&data),
                "--pages",
                p(&pages),
                "--country",
                country,
                "--partition",
                p(&comm.join("partition.csv")),
                "--out",
                p(&loc),
            ]);
        if !ok {
            problems.push(format!("{country}: pipeline failed"));
            continue;
        }
        for (produced, golden) in [
            (proj.join("nodes.csv"), format!("goldens/{country}_nodes.csv")),
            (proj.join("edges.csv"), format!("goldens/{country}_edges.csv")),
            (comm.join("partition.csv"), format!("goldens/{country}_partition.csv")),
        ] {
            if fs::read(&produced).unwrap() != fs::read(toy(&golden)).unwrap() {
                problems.push(format!("{country}: {golden} differs"));
            }
        }
        let got = read_values(&loc.join("localization.csv"));
        let want = read_values(&toy(&format!("goldens/{country}_localization.csv")));
        let same = got.len() == want.len() && got.iter().zip(&want).all(|(a, b)| a.0 == b.0 && close(a.1, b.1));
        if !same {
            problems.push(format!("{country}: localization values differ"));
        }
        let got = read_json(&loc.join("summary.json"));
        let want = read_json(&toy(&format!("goldens/{country}_summary.json")));
        for key in ["median", "n_users", "polarized_fraction", "threshold"] {
            if !close(got[key].as_f64().unwrap(), want[key].as_f64().unwrap()) {
                problems.push(format!("{country}: summary {key} differs"));
            }
        }
        if got["label"] != want["label"] {
            problems.push(format!("{country}: summary label differs"));
        }
        summaries.push(loc.join("summary.json"));
    }

    let rank = out.join("rank");
    let mut args = vec!["rank"];
    for s in &summaries {
        args.extend(["--in", p(s)]);
    }
    args.extend(["--out", p(&rank)]);
    if !echoscope(&args) {
        problems.push("rank failed".to_string());
    } else {
        let got = read_json(&rank.join("rank.json"));
        let want = read_json(&toy("goldens/rank.json"));
        let got = got.as_array().unwrap();
        let want = want.as_array().unwrap();
        let same = got.len() == want.len()
            && got.iter().zip(want).all(|(a, b)| {
                a["label"] == b["label"] && close(a["median"].as_f64().unwrap(), b["median"].as_f64().unwrap())
            });
        if !same {
            problems.push("rank differs".to_string());
        }
    }
    verdict(10, problems.is_empty(), format!("toy pipeline problems: {problems:?}"));
}
