//! Replica sweeps: sampling, parsing, rate convergence and entropy gaps.

use std::collections::BTreeMap;
use std::time::Instant;

use gibbslz::disttab::entropy_gap;
use gibbslz::lzparse::{classify_with_profile, lz78_parse, SiteProfile, WordClassCounts};
use gibbslz::sampler::{choose_n, marginal_tables, replica_rng, CanonicalSampler, GrandSampler};
use gibbslz::{EnsembleKind, EnsembleSpec, TypicalParams};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::output::{num, Table};
use crate::CliError;

/// Seed for all replicas at length `len`; shared by both ensemble kinds.
pub fn length_seed(master: u64, len: usize) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    splitmix(master ^ splitmix(len as u64))
}

pub fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Io(format!("cannot start worker pool: {e}")))
}

enum Drawer {
    Grand(GrandSampler),
    Canonical(CanonicalSampler),
}

impl Drawer {
    fn draw(&self, seed: u64, replica: u64, out: &mut Vec<u32>) -> Result<(), CliError> {
        let mut rng = replica_rng(seed, replica);
        match self {
            Drawer::Grand(g) => {
                g.draw(&mut rng, out);
                Ok(())
            }
            Drawer::Canonical(c) => Ok(c.draw(&mut rng, out)?),
        }
    }
}

/// Shared read-only state for one `(kind, ℓ)` cell of a sweep.
struct Cell {
    kind: EnsembleKind,
    len: usize,
    n: usize,
    seed: u64,
    drawer: Result<Drawer, String>,
}

fn cells(cfg: &ExperimentConfig, spec: &EnsembleSpec) -> Result<Vec<Cell>, CliError> {
    let target = cfg.target(spec)?;
    let mut cells = Vec::new();
    for &len in &cfg.lengths {
        let n = choose_n(&target, len);
        for &kind in &cfg.kinds {
            let drawer = match kind {
                EnsembleKind::Grand => GrandSampler::new(spec, len).map(Drawer::Grand),
                EnsembleKind::Canonical => CanonicalSampler::new(spec, len, n).map(Drawer::Canonical),
            };
            let drawer = match drawer {
                Ok(d) => Ok(d),
                Err(gibbslz::Error::Numeric(m)) => return Err(CliError::Numeric(m)),
                Err(e) => Err(e.to_string()),
            };
            cells.push(Cell { kind, len, n, seed: length_seed(cfg.seed, len), drawer });
        }
    }
    Ok(cells)
}

struct ReplicaOutcome {
    kind: EnsembleKind,
    len: usize,
    n: usize,
    replica: u64,
    result: Result<ReplicaStats, String>,
    wall_ms: f64,
}

struct ReplicaStats {
    particles: u64,
    words: usize,
    rate: f64,
    counts: WordClassCounts,
}

pub struct ConvergeOutput {
    pub rows: Table,
    pub summary: Table,
    pub h_target: f64,
}

const ROW_COLUMNS: &[&str] = &[
    "config_hash",
    "kind",
    "ell",
    "n",
    "replica",
    "status",
    "particles",
    "C",
    "lz_rate",
    "h_target",
    "entropy_gap_per_site",
    "low_entropy_typical",
    "non_typical",
    "other_words",
    "message",
];

const SUMMARY_COLUMNS: &[&str] = &[
    "config_hash",
    "kind",
    "ell",
    "n",
    "replicas_ok",
    "mean_rate",
    "std_err",
    "h_target",
    "rel_dev",
    "kind_diff_se",
    "kind_flag",
    "status",
];

/// Rate convergence sweep over the configured lengths and ensemble kinds.
pub fn converge(cfg: &ExperimentConfig, workers: usize) -> Result<ConvergeOutput, CliError> {
    let hash = cfg.hash();
    let spec = cfg.spec()?;
    let h = spec.entropy_rate(cfg.quad_tol)?;
    let params = TypicalParams::new(&spec, cfg.epsilon)?.with_rule(cfg.typical);
    let cells = cells(cfg, &spec)?;
    let profiles: BTreeMap<usize, SiteProfile> =
        cfg.lengths.iter().map(|&l| Ok((l, SiteProfile::new(&spec, l)?))).collect::<Result<_, CliError>>()?;
    let gaps: BTreeMap<usize, Option<f64>> = if cfg.converge_gap {
        cells
            .iter()
            .filter(|c| c.kind == EnsembleKind::Canonical)
            .map(|c| Ok((c.len, exact_gap(&spec, c.len, c.n, cfg.gap_budget)?.ok())))
            .collect::<Result<_, CliError>>()?
    } else {
        BTreeMap::new()
    };

    let tasks: Vec<(usize, u64)> = (0..cells.len()).flat_map(|c| (0..cfg.replicas).map(move |r| (c, r))).collect();
    let mut outcomes: Vec<ReplicaOutcome> = pool(workers)?.install(|| {
        tasks
            .par_iter()
            .filter_map(|&(c, replica)| {
                let cell = &cells[c];
                let drawer = cell.drawer.as_ref().ok()?;
                let start = Instant::now();
                let mut values = Vec::with_capacity(cell.len);
                let result = drawer.draw(cell.seed, replica, &mut values).map_err(|e| e.to_string()).and_then(|_| {
                    let parse = lz78_parse(&values);
                    let counts = classify_with_profile(&parse, &values, &profiles[&cell.len], &params)
                        .map_err(|e| e.to_string())?;
                    Ok(ReplicaStats {
                        particles: values.iter().map(|&k| u64::from(k)).sum(),
                        words: parse.word_count(),
                        rate: parse.rate().map_err(|e| e.to_string())?,
                        counts,
                    })
                });
                Some(ReplicaOutcome {
                    kind: cell.kind,
                    len: cell.len,
                    n: cell.n,
                    replica,
                    result,
                    wall_ms: start.elapsed().as_secs_f64() * 1e3,
                })
            })
            .collect()
    });
    outcomes.sort_by_key(|o| (o.len, o.kind, o.replica));

    let mut columns = ROW_COLUMNS.to_vec();
    if cfg.record_timing {
        columns.push("wall_ms");
    }
    let mut rows = Table::new(&columns);
    let mut per_cell: BTreeMap<(usize, EnsembleKind), CellRates> = BTreeMap::new();
    for cell in &cells {
        let entry = per_cell.entry((cell.len, cell.kind)).or_insert((cell.n, Vec::new(), None));
        if let Err(msg) = &cell.drawer {
            entry.2 = Some(msg.clone());
        }
    }
    let gap_cell = |kind: EnsembleKind, len: usize| match kind {
        EnsembleKind::Canonical => gaps.get(&len).copied().flatten().map_or(Value::Null, |d| num(d / len as f64)),
        EnsembleKind::Grand => Value::Null,
    };
    // Cells that could not be set up get one error row in place of their replicas.
    let mut emitted: Vec<(usize, EnsembleKind, Option<u64>, Vec<Value>)> = Vec::new();
    for cell in cells.iter().filter(|c| c.drawer.is_err()) {
        let msg = cell.drawer.as_ref().err().cloned().unwrap_or_default();
        let mut row = vec![
            json!(hash),
            json!(cell.kind.name()),
            json!(cell.len),
            json!(cell.n),
            Value::Null,
            json!("error"),
            Value::Null,
            Value::Null,
            Value::Null,
            num(h),
            Value::Null,
            Value::Null,
            Value::Null,
            Value::Null,
            json!(msg),
        ];
        if cfg.record_timing {
            row.push(Value::Null);
        }
        emitted.push((cell.len, cell.kind, None, row));
    }
    for o in &outcomes {
        let mut row = vec![json!(hash), json!(o.kind.name()), json!(o.len), json!(o.n), json!(o.replica)];
        match &o.result {
            Ok(s) => {
                per_cell.get_mut(&(o.len, o.kind)).expect("cell exists").1.push(s.rate);
                row.extend([
                    json!("ok"),
                    json!(s.particles),
                    json!(s.words),
                    num(s.rate),
                    num(h),
                    gap_cell(o.kind, o.len),
                    json!(s.counts.low_entropy_typical),
                    json!(s.counts.non_typical),
                    json!(s.counts.other),
                    json!(""),
                ]);
            }
            Err(msg) => {
                row.extend([
                    json!("error"),
                    Value::Null,
                    Value::Null,
                    Value::Null,
                    num(h),
                    gap_cell(o.kind, o.len),
                    Value::Null,
                    Value::Null,
                    Value::Null,
                    json!(msg),
                ]);
            }
        }
        if cfg.record_timing {
            row.push(num(o.wall_ms));
        }
        emitted.push((o.len, o.kind, Some(o.replica), row));
    }
    emitted.sort_by_key(|e| (e.0, e.1, e.2));
    for (_, _, _, row) in emitted {
        rows.push(row);
    }

    let stats: BTreeMap<(usize, EnsembleKind), (f64, f64)> = per_cell
        .iter()
        .filter(|(_, (_, rates, _))| !rates.is_empty())
        .map(|(k, (_, rates, _))| (*k, mean_and_se(rates)))
        .collect();
    let mut summary = Table::new(SUMMARY_COLUMNS);
    for ((len, kind), (n, rates, err)) in &per_cell {
        let other = match kind {
            EnsembleKind::Grand => EnsembleKind::Canonical,
            EnsembleKind::Canonical => EnsembleKind::Grand,
        };
        let mut row = vec![json!(hash), json!(kind.name()), json!(len), json!(n), json!(rates.len())];
        match stats.get(&(*len, *kind)) {
            Some(&(mean, se)) => {
                let (diff, flag) = match stats.get(&(*len, other)) {
                    Some(&(m2, se2)) => {
                        let pooled = (se * se + se2 * se2).sqrt();
                        let d = (mean - m2).abs() / pooled;
                        (num(d), json!(d > 3.0))
                    }
                    None => (Value::Null, Value::Null),
                };
                row.extend([num(mean), num(se), num(h), num((mean - h) / h), diff, flag, json!("ok")]);
            }
            None => {
                let status = err.clone().unwrap_or_else(|| "no successful replicas".into());
                row.extend([
                    Value::Null,
                    Value::Null,
                    num(h),
                    Value::Null,
                    Value::Null,
                    Value::Null,
                    json!(format!("error: {status}")),
                ]);
            }
        }
        summary.push(row);
    }
    Ok(ConvergeOutput { rows, summary, h_target: h })
}

/// Mean and standard error (replica standard deviation over √R).
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `Ok(δ)`, or `Err(reason)` when over budget or impossible.
/// Outer error aborts the run; inner error becomes a status message.
type GapOutcome = Result<Result<f64, String>, CliError>;

/// Particles, replica rates and the build error of one `(ℓ, kind)` cell.
type CellRates = (usize, Vec<f64>, Option<String>);

fn exact_gap(spec: &EnsembleSpec, len: usize, n: usize, budget: f64) -> GapOutcome {
    let marginals = marginal_tables(spec, len)?;
    let kmax = marginals.iter().map(|m| m.support_max()).max().unwrap_or(0);
    let work = len as f64 * (n + 1) as f64 * (kmax + 1) as f64;
    if work > budget {
        return Ok(Err(format!("skipped: work {work:e} exceeds budget {budget:e}")));
    }
    match entropy_gap(&marginals, n) {
        Ok(d) => Ok(Ok(d)),
        Err(gibbslz::Error::Numeric(m)) => Err(CliError::Numeric(m)),
        Err(e) => Ok(Err(e.to_string())),
    }
}

/// Exact `δ(ℓ, n)` for each configured length.
pub fn entropy_gap_table(cfg: &ExperimentConfig, workers: usize) -> Result<Table, CliError> {
    let hash = cfg.hash();
    let spec = cfg.spec()?;
    let target = cfg.target(&spec)?;
    let results: Vec<(usize, usize, GapOutcome)> = pool(workers)?.install(|| {
        cfg.lengths
            .par_iter()
            .map(|&len| {
                let n = choose_n(&target, len);
                (len, n, exact_gap(&spec, len, n, cfg.gap_budget))
            })
            .collect()
    });
    let mut table = Table::new(&["config_hash", "ell", "n", "delta", "delta_per_site", "status"]);
    for (len, n, r) in results {
        let row = match r? {
            Ok(d) => vec![json!(hash), json!(len), json!(n), num(d), num(d / len as f64), json!("ok")],
            Err(reason) => vec![json!(hash), json!(len), json!(n), Value::Null, Value::Null, json!(reason)],
        };
        table.push(row);
    }
    Ok(table)
}

/// One sampled string per `(ℓ, kind, replica)`.
pub struct SampleRecord {
    pub kind: EnsembleKind,
    pub len: usize,
    pub n: usize,
    pub replica: u64,
    pub seed: u64,
    pub values: Result<Vec<u32>, String>,
}

pub fn sample_all(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<SampleRecord>, CliError> {
    let spec = cfg.spec()?;
    let cells = cells(cfg, &spec)?;
    let tasks: Vec<(usize, u64)> = (0..cells.len()).flat_map(|c| (0..cfg.replicas).map(move |r| (c, r))).collect();
    let mut records: Vec<SampleRecord> = pool(workers)?.install(|| {
        tasks
            .par_iter()
            .map(|&(c, replica)| {
                let cell = &cells[c];
                let values = match &cell.drawer {
                    Ok(d) => {
                        let mut v = Vec::with_capacity(cell.len);
                        d.draw(cell.seed, replica, &mut v).map(|_| v).map_err(|e| e.to_string())
                    }
                    Err(e) => Err(e.clone()),
                };
                SampleRecord { kind: cell.kind, len: cell.len, n: cell.n, replica, seed: cell.seed, values }
            })
            .collect()
    });
    records.sort_by_key(|r| (r.len, r.kind, r.replica));
    Ok(records)
}

pub fn sample_table(cfg: &ExperimentConfig, records: &[SampleRecord]) -> Table {
    let hash = cfg.hash();
    let mut t = Table::new(&["config_hash", "kind", "ell", "n", "replica", "seed", "status", "total", "values"]);
    for r in records {
        let mut row = vec![
            json!(hash),
            json!(r.kind.name()),
            json!(r.len),
            json!(r.n),
            json!(r.replica),
            json!(r.seed.to_string()),
        ];
        match &r.values {
            Ok(v) => row.extend([json!("ok"), json!(v.iter().map(|&k| u64::from(k)).sum::<u64>()), json!(v)]),
            Err(e) => row.extend([json!(format!("error: {e}")), Value::Null, Value::Null]),
        }
        t.push(row);
    }
    t
}

/// `{replica, C, rate, word_lengths_histogram}` for one string.
pub fn parse_row(hash: &str, kind: &str, replica: u64, values: &[u32]) -> Result<Vec<Value>, CliError> {
    let parse = lz78_parse(values);
    let hist: serde_json::Map<String, Value> =
        parse.word_lengths_histogram().into_iter().map(|(len, c)| (len.to_string(), json!(c))).collect();
    Ok(vec![
        json!(hash),
        json!(kind),
        json!(values.len()),
        json!(replica),
        json!(parse.word_count()),
        num(parse.rate()?),
        Value::Object(hist),
    ])
}

pub const PARSE_COLUMNS: &[&str] = &["config_hash", "kind", "ell", "replica", "C", "rate", "word_lengths_histogram"];
