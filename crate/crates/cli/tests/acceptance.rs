//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::BTreeMap;
use std::process::Command;
use std::time::{Duration, Instant};

use gibbslz::disttab::{build_suffix_dp, conditional_entropy_exact, entropy_gap};
use gibbslz::ensemble::solve_mu;
use gibbslz::sampler::{marginal_tables, replica_rng, CanonicalSampler};
use gibbslz::{Dispersion, DistTable, EnsembleSpec, Statistics};
use gibbslz_cli::check::run_checks;
use gibbslz_cli::config::{parse_entries, ExperimentConfig};
use gibbslz_cli::output::Table;
use gibbslz_cli::runner::converge;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

struct Line {
    id: &'static str,
    passed: bool,
    detail: String,
}

fn line(id: &'static str, passed: bool, detail: impl Into<String>) -> Line {
    Line { id, passed, detail: detail.into() }
}

fn fermi(mu: f64) -> EnsembleSpec {
    EnsembleSpec::new(Statistics::Fermi, 1.0, mu, Dispersion::CosineLattice).unwrap()
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_entries(&parse_entries(text).unwrap(), None).unwrap()
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, usize::from)
}

// ---------------------------------------------------------------- criterion 1

fn anchors() -> Vec<Line> {
    let mu = solve_mu(Statistics::Fermi, &Dispersion::CosineLattice, 1.0, 0.5, 1e-12).unwrap();
    let m = fermi(1.0).particle_density(1e-9).unwrap();
    vec![
        line("1a", (mu - 1.0).abs() <= 1e-8, format!("solve_mu(r=0.5) = {mu:.12}")),
        line("1b", (m - 0.5).abs() <= 1e-9, format!("particle_density(μ=1) = {m:.15}")),
    ]
}

// ---------------------------------------------------------------- criterion 2

/// Uniform left Riemann sums of the occupation formulas, written out directly.
fn riemann(stats: Statistics, beta: f64, mu: f64) -> (f64, f64) {
    const N: usize = 1_000_000;
    let (mut m, mut h) = (0.0, 0.0);
    for i in 0..N {
        let y = i as f64 / N as f64;
        let x = beta * (1.0 - (2.0 * std::f64::consts::PI * y).cos() - mu);
        let (l, g) = match stats {
            Statistics::Fermi => {
                let l = 1.0 / (x.exp() + 1.0);
                let g = if l > 0.0 && l < 1.0 { -l * l.log2() - (1.0 - l) * (1.0 - l).log2() } else { 0.0 };
                (l, g)
            }
            Statistics::Bose => {
                let l = 1.0 / x.exp_m1();
                (l, (1.0 + l) * (1.0 + l).log2() - l * l.log2())
            }
        };
        m += l;
        h += g;
    }
    (m / N as f64, h / N as f64)
}

fn quadrature_oracle() -> Vec<Line> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let stats = if i % 2 == 0 { Statistics::Fermi } else { Statistics::Bose };
        let beta = rng.random_range(0.5..4.0);
        let mu = match stats {
            Statistics::Fermi => rng.random_range(-1.0..3.0),
            Statistics::Bose => rng.random_range(-2.0..-0.2),
        };
        let spec = EnsembleSpec::new(stats, beta, mu, Dispersion::CosineLattice).unwrap();
        let (m, h) = riemann(stats, beta, mu);
        worst = worst
            .max((spec.particle_density(1e-9).unwrap() - m).abs())
            .max((spec.entropy_rate(1e-9).unwrap() - h).abs());
    }
    vec![line("2", worst <= 1e-7, format!("max |quadrature − Riemann| = {worst:.3e} over 10 configurations"))]
}

// ---------------------------------------------------------------- criterion 3

fn sampler_fidelity() -> Vec<Line> {
    let spec = fermi(1.0);
    let ps: Vec<f64> = (0..6).map(|j| spec.mean_occupancy(j as f64 / 6.0).unwrap()).collect();
    // Enumerated conditioned law over the C(6,3) = 20 atoms.
    let mut law = BTreeMap::new();
    for mask in 0u32..64 {
        if mask.count_ones() == 3 {
            let w: f64 = (0..6).map(|i| if mask >> i & 1 == 1 { ps[i] } else { 1.0 - ps[i] }).product();
            law.insert(mask, w);
        }
    }
    let z: f64 = law.values().sum();
    let sampler = CanonicalSampler::new(&spec, 6, 3).unwrap();
    let draws = 1_000_000;
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    let mut rng = replica_rng(31, 0);
    let mut out = Vec::new();
    for _ in 0..draws {
        sampler.draw(&mut rng, &mut out).unwrap();
        let mask = out.iter().enumerate().fold(0u32, |m, (i, &k)| m | k << i);
        *counts.entry(mask).or_default() += 1;
    }
    let stray = counts.keys().filter(|m| !law.contains_key(m)).count();
    let tv =
        law.iter().map(|(m, w)| (counts.get(m).copied().unwrap_or(0) as f64 / draws as f64 - w / z).abs()).sum::<f64>()
            / 2.0;

    let (len, n, draws64) = (64, 32, 100_000);
    let exact = build_suffix_dp(&marginal_tables(&spec, len).unwrap(), n).unwrap().conditional_marginals(n).unwrap();
    let sampler = CanonicalSampler::new(&spec, len, n).unwrap();
    let mut sums = vec![0u64; len];
    let mut rng = replica_rng(32, 0);
    for _ in 0..draws64 {
        sampler.draw(&mut rng, &mut out).unwrap();
        for (s, &k) in sums.iter_mut().zip(&out) {
            *s += u64::from(k);
        }
    }
    let worst_z = sums
        .iter()
        .zip(&exact)
        .map(|(&s, t)| {
            let p = t.prob(1);
            (s as f64 / draws64 as f64 - p).abs() / (p * (1.0 - p) / draws64 as f64).sqrt()
        })
        .fold(0.0, f64::max);
    vec![
        line("3a", tv < 5e-3 && stray == 0, format!("TV = {tv:.2e} over 10⁶ draws (ℓ=6, n=3)")),
        line("3b", worst_z <= 4.0, format!("max site deviation = {worst_z:.2} SE (ℓ=64, n=32)")),
    ]
}

// ---------------------------------------------------------------- criterion 4

fn enumerated_entropy(tables: &[Vec<f64>], n: usize) -> f64 {
    let mut weights = Vec::new();
    let mut idx = vec![0usize; tables.len()];
    'outer: loop {
        if idx.iter().sum::<usize>() == n {
            weights.push(idx.iter().zip(tables).map(|(&k, t)| t[k]).product::<f64>());
        }
        for j in 0..idx.len() {
            idx[j] += 1;
            if idx[j] < tables[j].len() {
                continue 'outer;
            }
            idx[j] = 0;
        }
        break;
    }
    let z: f64 = weights.iter().sum();
    weights.iter().filter(|w| **w > 0.0).map(|w| -(w / z) * (w / z).log2()).sum()
}

fn conditional_entropy_oracle() -> Vec<Line> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut instances: Vec<(Vec<Vec<f64>>, usize)> = vec![(vec![vec![0.5, 0.5]; 4], 2)];
    while instances.len() < 50 {
        let len = rng.random_range(2..=6);
        let tables: Vec<Vec<f64>> = (0..len)
            .map(|_| {
                let atoms = rng.random_range(2..=4);
                let raw: Vec<f64> = (0..atoms).map(|_| rng.random_range(0.01..1.0)).collect();
                let z: f64 = raw.iter().sum();
                raw.iter().map(|w| w / z).collect()
            })
            .collect();
        let configs: usize = tables.iter().map(Vec::len).product();
        if configs > 4096 {
            continue;
        }
        let smax = tables.iter().map(|t| t.len() - 1).sum::<usize>();
        let n = rng.random_range(0..=smax);
        instances.push((tables, n));
    }
    let mut worst: f64 = 0.0;
    let mut coin_case = f64::NAN;
    for (i, (tables, n)) in instances.iter().enumerate() {
        let marginals: Vec<DistTable> = tables.iter().map(|t| DistTable::from_probs(t).unwrap()).collect();
        let got = conditional_entropy_exact(&build_suffix_dp(&marginals, *n).unwrap(), *n).unwrap();
        worst = worst.max((got - enumerated_entropy(tables, *n)).abs());
        if i == 0 {
            coin_case = got;
        }
    }
    let coin_ok = (coin_case - 6f64.log2()).abs() <= 1e-10;
    vec![line(
        "4",
        worst <= 1e-10 && coin_ok,
        format!("max |DP − enumeration| = {worst:.2e} bits over 50 instances; 4 coins, n=2 → {coin_case:.12}"),
    )]
}

// ---------------------------------------------------------------- criterion 5

/// `log₂ C(ℓ, ℓ/2) − ℓ` from integer logarithms.
fn coin_gap(len: usize) -> f64 {
    let half = len / 2;
    (1..=half).map(|i| ((half + i) as f64).log2() - (i as f64).log2()).sum::<f64>() - len as f64
}

fn entropy_gap_scaling() -> Vec<Line> {
    let coin = EnsembleSpec::new(Statistics::Fermi, 1.0, 0.0, Dispersion::constant(0.0).unwrap()).unwrap();
    let mut per_site = Vec::new();
    let mut oracle_err: f64 = 0.0;
    for len in [16usize, 32, 64, 128, 256, 1024] {
        let d = entropy_gap(&marginal_tables(&coin, len).unwrap(), len / 2).unwrap();
        oracle_err = oracle_err.max((d - coin_gap(len)).abs());
        per_site.push(d.abs() / len as f64);
    }
    let coin_ok = per_site.windows(2).all(|w| w[1] < w[0]) && per_site[5] < 0.01 && oracle_err < 1e-9;

    let spec = fermi(1.0);
    let mut hetero = Vec::new();
    for len in [16usize, 32, 64, 128, 256] {
        let d = entropy_gap(&marginal_tables(&spec, len).unwrap(), len / 2).unwrap();
        hetero.push(d.abs() / len as f64);
    }
    let hetero_ok = hetero.windows(2).all(|w| w[1] < w[0]);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    vec![
        line("5a", coin_ok, format!("Bernoulli(½) |δ|/ℓ = [{}], max oracle error {oracle_err:.1e}", fmt(&per_site))),
        line("5b", hetero_ok, format!("Fermi β=1 μ=1 |δ|/ℓ = [{}]", fmt(&hetero))),
    ]
}

// ---------------------------------------------------------------- criteria 6, 8

/// `(kind, ℓ) → column value` from a summary table.
fn summary_column(t: &Table, column: &str) -> BTreeMap<(String, u64), f64> {
    let (k, l, c) = (t.column("kind").unwrap(), t.column("ell").unwrap(), t.column(column).unwrap());
    t.rows.iter().filter_map(|r| Some(((r[k].as_str()?.to_string(), r[l].as_u64()?), r[c].as_f64()?))).collect()
}

fn trend_lines(label: &str, ids: [&'static str; 3], t: &Table, h: f64, lengths: &[u64]) -> Vec<Line> {
    let means = summary_column(t, "mean_rate");
    let ses = summary_column(t, "std_err");
    let last = *lengths.last().unwrap();
    let mut trend_ok = true;
    let mut close_ok = true;
    let mut detail_trend = Vec::new();
    let mut detail_close = Vec::new();
    for kind in ["grand", "canonical"] {
        let series: Vec<f64> = lengths.iter().map(|&l| means[&(kind.to_string(), l)]).collect();
        trend_ok &= series.windows(2).all(|w| w[1] < w[0]) && series.iter().all(|&m| m > h);
        let rel = (series.last().unwrap() - h) / h;
        close_ok &= rel.abs() <= 0.20;
        detail_trend
            .push(format!("{kind} [{}]", series.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>().join(", ")));
        detail_close.push(format!("{kind} {:+.1}%", 100.0 * rel));
    }
    let (g, c) = (means[&("grand".into(), last)], means[&("canonical".into(), last)]);
    let pooled = (ses[&("grand".into(), last)].powi(2) + ses[&("canonical".into(), last)].powi(2)).sqrt();
    let rel_diff = (c - g).abs() / g;
    let z = (c - g).abs() / pooled;
    vec![
        line(ids[0], trend_ok, format!("{label}: mean rate decreasing toward h = {h:.4}: {}", detail_trend.join("; "))),
        line(ids[1], close_ok, format!("{label}: relative deviation at ℓ={last}: {}", detail_close.join(", "))),
        line(
            ids[2],
            rel_diff < 0.03 && z <= 3.0,
            format!("{label}: canonical vs grand at ℓ={last}: {:.2}% relative, {z:.2} pooled SE", 100.0 * rel_diff),
        ),
    ]
}

fn rate_trends() -> Vec<Line> {
    let lengths = [1u64 << 10, 1 << 12, 1 << 14, 1 << 16];
    let grid = "run.lengths = 2^10, 2^12, 2^14, 2^16\nrun.replicas = 20\nrun.kind = both\nrun.seed = 6\n";
    let f = converge(&config(&format!("ensemble.stats = fermi\nensemble.density = 0.5\n{grid}")), workers()).unwrap();
    let b = converge(&config(&format!("ensemble.stats = bose\nensemble.mu = -0.5\n{grid}")), workers()).unwrap();
    let mut lines = trend_lines(
        "Fermi β=1 r=0.5",
        ["6a-fermi-trend", "6a-fermi-20pct", "6b-fermi"],
        &f.summary,
        f.h_target,
        &lengths,
    );
    lines.extend(trend_lines(
        "Bose β=1 μ=−0.5",
        ["6a-bose-trend", "6a-bose-20pct", "6b-bose"],
        &b.summary,
        b.h_target,
        &lengths,
    ));
    lines
}

fn word_counts() -> Vec<Line> {
    let cfg = config(
        "ensemble.stats = fermi\nensemble.density = 0.5\nrun.kind = canonical\nrun.replicas = 20\nrun.seed = 8\n\
         run.lengths = 2^10, 2^11, 2^12, 2^13, 2^14, 2^15, 2^16\nanalysis.epsilon = 0.3\n",
    );
    let result = converge(&cfg, workers()).unwrap();
    let t = &result.rows;
    let col = |name: &str| t.column(name).unwrap();
    let (ell, low, non, words) = (col("ell"), col("low_entropy_typical"), col("non_typical"), col("C"));
    let mut per_len: BTreeMap<u64, (f64, f64, f64)> = BTreeMap::new();
    for r in &t.rows {
        if r[low] == Value::Null {
            continue;
        }
        let e = per_len.entry(r[ell].as_u64().unwrap()).or_default();
        e.0 += r[low].as_f64().unwrap();
        e.1 += r[non].as_f64().unwrap() / r[words].as_f64().unwrap();
        e.2 += 1.0;
    }
    let pts: Vec<(f64, f64)> = per_len.iter().map(|(&l, &(c, _, n))| ((l as f64).ln(), (c / n).ln())).collect();
    let k = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / k, pts.iter().map(|p| p.1).sum::<f64>() / k);
    let slope =
        pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let eps = 0.3;
    let bound = 1.0 - eps * eps + 0.05;
    let (_, frac_sum, reps) = per_len[&(1 << 14)];
    let frac = frac_sum / reps;
    vec![
        line("8a", slope < bound, format!("low-entropy typical count exponent {slope:.3} (bound {bound:.2})")),
        line("8b", frac < 0.05, format!("non-typical word fraction at ℓ=2¹⁴: {frac:.4} (bound 0.05)")),
    ]
}

// ---------------------------------------------------------------- criterion 7

fn property_suite() -> Vec<Line> {
    let mut lines = Vec::new();
    for (id, text) in [
        ("7-fermi", "ensemble.stats = fermi\nensemble.mu = 1\nrun.lengths = 2^10, 2^12, 2^14, 2^16\n"),
        ("7-bose", "ensemble.stats = bose\nensemble.mu = -0.5\nrun.lengths = 2^10, 2^12, 2^14, 2^16\n"),
    ] {
        let results = run_checks(&config(text), workers()).unwrap();
        let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
        lines.push(line(
            id,
            failed.is_empty(),
            if failed.is_empty() {
                format!("{} properties pass", results.len())
            } else {
                format!("failing: {}", failed.join(", "))
            },
        ));
    }
    let status = Command::new(env!("CARGO_BIN_EXE_gibbslz"))
        .args(["check", "--set", "ensemble.mu=1", "--set", "check.inject_fault=lc", "--set", "check.scale=0.1"])
        .output()
        .unwrap();
    let code = status.status.code();
    let flagged = String::from_utf8_lossy(&status.stdout).contains("lc_injected,fail");
    lines.push(line("7-negative-control", code == Some(2) && flagged, format!("injected LC fault: exit {code:?}")));
    lines
}

// ---------------------------------------------------------------- criterion 9

fn determinism() -> Vec<Line> {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "ensemble.stats = fermi\nensemble.density = 0.5\nrun.lengths = 2^10, 2^12, 2^14\nrun.replicas = 8\nrun.kind = both\n",
    )
    .unwrap();
    let run = |workers: &str, sub: &str| {
        let out = dir.path().join(sub);
        let status = Command::new(env!("CARGO_BIN_EXE_gibbslz"))
            .args(["converge", "--seed", "1234", "--workers", workers, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        ["converge.csv", "converge-summary.csv", "converge.jsonl"].map(|f| std::fs::read(out.join(f)).unwrap())
    };
    let one = run("1", "w1");
    let eight = run("8", "w8");
    let again = run("1", "w1b");
    let same = one == eight && one == again;
    vec![line(
        "9",
        same,
        format!(
            "converge output {} across --workers 1, 8 and a rerun",
            if same { "byte-identical" } else { "differs" }
        ),
    )]
}

fn main() {
    type Criterion = (&'static str, fn() -> Vec<Line>, Duration);
    let criteria: [Criterion; 9] = [
        ("closed-form anchors", anchors, Duration::from_secs(1)),
        ("quadrature oracle", quadrature_oracle, Duration::from_secs(10)),
        ("exact-sampler fidelity", sampler_fidelity, Duration::from_secs(120)),
        ("conditional-entropy oracle", conditional_entropy_oracle, Duration::from_secs(60)),
        ("entropy gap per site", entropy_gap_scaling, Duration::from_secs(120)),
        ("LZ78 rate trend", rate_trends, Duration::from_secs(600)),
        ("property suite", property_suite, Duration::from_secs(600)),
        ("typical word counts", word_counts, Duration::from_secs(300)),
        ("determinism", determinism, Duration::from_secs(300)),
    ];
    let mut failures = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let lines = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= limit;
        for l in &lines {
            let ok = l.passed && in_time;
            failures += usize::from(!ok);
            println!(
                "criterion {:<20} {}  {name}: {} [{:.1}s / {}s]",
                l.id,
                if ok { "PASS" } else { "FAIL" },
                l.detail,
                elapsed.as_secs_f64(),
                limit.as_secs()
            );
        }
    }
    if failures > 0 {
        println!("{failures} acceptance line(s) failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
