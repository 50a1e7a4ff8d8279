//! The property battery behind `gibbslz check`.

use gibbslz::disttab::{
    conditioned_covariance, covariance_under, efron_monotonicity_check, local_clt_error, mode_mean_check,
    score_ratio_check,
};
use gibbslz::sampler::{choose_n, marginal_tables, replica_rng, CanonicalSampler};
use gibbslz::{DistTable, EnsembleSpec, Statistics};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{ExperimentConfig, Fault};
use crate::output::{num, Table};
use crate::runner::pool;
use crate::CliError;

/// Largest accepted `sup_error / L_n` in the local-CLT check.
pub const LOCAL_CLT_RATIO: f64 = 1.0;
/// Covariance slack for exhaustive negative-association checks.
pub const NA_TOL: f64 = 1e-12;
/// Local-CLT sums use the marginals of this many sites.
pub const CLT_SIZES: [usize; 4] = [25, 100, 400, 1600];

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: bool,
    pub cases: u64,
    /// Property-specific worst value (documented per property in `detail`).
    pub worst: f64,
    pub detail: String,
}

impl PropertyResult {
    fn new(name: &'static str, passed: bool, cases: u64, worst: f64, detail: impl Into<String>) -> Self {
        Self { name, passed, cases, worst, detail: detail.into() }
    }
}

fn scaled(base: u64, scale: f64) -> u64 {
    ((base as f64 * scale).round() as u64).max(1)
}

fn renormalized(probs: &[f64]) -> DistTable {
    let z: f64 = probs.iter().sum();
    DistTable::from_probs(&probs.iter().map(|p| p / z).collect::<Vec<_>>()).expect("normalized table")
}

/// Keeps at most `atoms` support points and renormalizes.
fn truncate(t: &DistTable, atoms: usize) -> DistTable {
    let p = t.probs();
    renormalized(&p[..p.len().min(atoms)])
}

fn truncated_geometric(rng: &mut ChaCha8Rng, atoms: usize) -> DistTable {
    let q: f64 = rng.random_range(0.05..0.95);
    renormalized(&(0..atoms).map(|k| q.powi(k as i32)).collect::<Vec<_>>())
}

fn binomial_like(rng: &mut ChaCha8Rng, coins: usize) -> DistTable {
    (0..coins).fold(DistTable::delta(0), |acc, _| {
        acc.convolve(&DistTable::bernoulli(rng.random_range(0.02..0.98)).expect("valid p"))
    })
}

/// A random log-concave law: Bernoulli sums, geometrics or an ensemble marginal.
fn random_lc(rng: &mut ChaCha8Rng, pool: &[DistTable]) -> DistTable {
    match rng.random_range(0..5) {
        0 => DistTable::bernoulli(rng.random_range(0.01..0.99)).expect("valid p"),
        1 => DistTable::geometric_with_mean(rng.random_range(0.05..5.0), 1e-12).expect("valid mean"),
        2 => {
            let coins = rng.random_range(2..=5);
            binomial_like(rng, coins)
        }
        3 => {
            let atoms = rng.random_range(2..=8);
            truncated_geometric(rng, atoms)
        }
        _ => pool[rng.random_range(0..pool.len())].clone(),
    }
}

/// Log-concave laws with at most four atoms.
fn small_lc(rng: &mut ChaCha8Rng) -> DistTable {
    match rng.random_range(0..3) {
        0 => DistTable::bernoulli(rng.random_range(0.05..0.95)).expect("valid p"),
        1 => {
            let coins = rng.random_range(2..=3);
            binomial_like(rng, coins)
        }
        _ => {
            let atoms = rng.random_range(2..=4);
            truncated_geometric(rng, atoms)
        }
    }
}

struct Battery<'a> {
    cfg: &'a ExperimentConfig,
    spec: EnsembleSpec,
    /// Site marginals of the configured ensemble at ℓ = 64.
    pool: Vec<DistTable>,
}

impl Battery<'_> {
    fn rng(&self, stream: u64) -> ChaCha8Rng {
        replica_rng(self.cfg.seed, 1_000 + stream)
    }

    fn lc_closure(&self) -> PropertyResult {
        let mut rng = self.rng(1);
        let cases = scaled(1000, self.cfg.check_scale);
        let mut failures = 0;
        for _ in 0..cases {
            let k = rng.random_range(2..=6);
            let first = random_lc(&mut rng, &self.pool);
            let sum = (1..k).fold(first, |acc, _| acc.convolve(&random_lc(&mut rng, &self.pool)));
            failures += u64::from(!sum.is_log_concave());
        }
        PropertyResult::new("lc_closure", failures == 0, cases, failures as f64, "worst = failing convolutions")
    }

    fn score_ratio(&self) -> (PropertyResult, PropertyResult) {
        let mut rng = self.rng(2);
        let cases = scaled(500, self.cfg.check_scale);
        let mut worst = f64::INFINITY;
        let mut failures = 0;
        let mut worst_eq: f64 = 0.0;
        let mut iid_cases = 0;
        for i in 0..cases {
            let m = rng.random_range(1..=40);
            let iid = i % 5 == 0;
            let p0 = rng.random_range(0.02..0.98);
            let ps: Vec<f64> = (0..m).map(|_| if iid { p0 } else { rng.random_range(0.01..0.99) }).collect();
            let n = rng.random_range(1..=m);
            match score_ratio_check(&ps, n) {
                Ok(r) => {
                    worst = worst.min((r.lhs - r.rhs) / r.rhs);
                    failures += u64::from(!r.holds);
                    if iid {
                        iid_cases += 1;
                        worst_eq = worst_eq.max((r.lhs - r.rhs).abs() / r.rhs.max(1.0));
                    }
                }
                Err(_) => failures += 1,
            }
        }
        (
            PropertyResult::new("score_ratio_bound", failures == 0, cases, worst, "worst = min (lhs − rhs)/rhs"),
            PropertyResult::new(
                "score_ratio_iid_equality",
                worst_eq <= 1e-12,
                iid_cases,
                worst_eq,
                "worst = max |lhs − rhs| / max(rhs, 1)",
            ),
        )
    }

    /// Families of at most four-atom log-concave marginals for exhaustive checks.
    fn small_families(&self, len: usize, stream: u64) -> Vec<Vec<DistTable>> {
        let mut rng = self.rng(stream);
        let mut fams = vec![marginal_tables(&self.spec, len)
            .expect("valid ensemble")
            .iter()
            .map(|t| truncate(t, 4))
            .collect::<Vec<_>>()];
        for _ in 0..3 {
            fams.push((0..len).map(|_| small_lc(&mut rng)).collect());
        }
        fams
    }

    fn efron(&self) -> PropertyResult {
        type Phi = fn(&[u32]) -> f64;
        let phis: [Phi; 5] = [
            |c| f64::from(c[0]),
            |c| f64::from(*c.iter().max().unwrap_or(&0)),
            |c| f64::from(*c.iter().min().unwrap_or(&0)),
            |c| f64::from(c.iter().take(2).sum::<u32>().min(2)),
            |c| f64::from(u8::from(c[c.len() - 1] >= 1)),
        ];
        let (mut cases, mut failures) = (0, 0);
        let mut detail = String::from("worst = non-monotone instances");
        for len in 1..=5 {
            for (f, fam) in self.small_families(len, 10 + len as u64).iter().enumerate() {
                for (p, phi) in phis.iter().enumerate() {
                    cases += 1;
                    match efron_monotonicity_check(fam, phi) {
                        Ok(r) if r.monotone => {}
                        Ok(_) => {
                            failures += 1;
                            detail = format!("non-monotone at ℓ={len} family {f} φ#{p}");
                        }
                        Err(e) => {
                            failures += 1;
                            detail = format!("ℓ={len} family {f}: {e}");
                        }
                    }
                }
            }
        }
        PropertyResult::new("efron_monotonicity", failures == 0, cases, failures as f64, detail)
    }

    fn na_exhaustive(&self) -> PropertyResult {
        let mut cases = 0;
        let mut worst = f64::NEG_INFINITY;
        for len in 2..=4 {
            for fam in self.small_families(len, 20 + len as u64) {
                let smax: usize = fam.iter().map(DistTable::support_max).sum();
                for code in 0..3usize.pow(len as u32) {
                    // Digit 0: in A, 1: in B, 2: in neither.
                    let role: Vec<usize> = (0..len).map(|i| code / 3usize.pow(i as u32) % 3).collect();
                    if !role.contains(&0) || !role.contains(&1) {
                        continue;
                    }
                    for s in 1..=2u32 {
                        for t in 1..=2u32 {
                            let f = |c: &[u32]| {
                                let sa: u32 = c.iter().zip(&role).filter(|(_, r)| **r == 0).map(|(k, _)| *k).sum();
                                f64::from(u8::from(sa >= s))
                            };
                            let g = |c: &[u32]| {
                                c.iter().zip(&role).filter(|(_, r)| **r == 1).map(|(k, _)| f64::from((*k).min(t))).sum()
                            };
                            for n in 0..=smax {
                                if let Ok(cov) = conditioned_covariance(&fam, n, f, g) {
                                    cases += 1;
                                    worst = worst.max(cov);
                                }
                            }
                        }
                    }
                }
            }
        }
        PropertyResult::new("na_exhaustive", worst <= NA_TOL, cases, worst, "worst = max conditioned covariance")
    }

    fn na_empirical(&self) -> Result<PropertyResult, CliError> {
        const LEN: usize = 64;
        let n = choose_n(&self.cfg.target(&self.spec)?, LEN);
        let sampler = CanonicalSampler::new(&self.spec, LEN, n)?;
        let draws = scaled(20_000, self.cfg.check_scale) as usize;
        let mut rng = self.rng(30);
        let tests: [(&[usize], &[usize]); 6] =
            [(&[0], &[1]), (&[5], &[40]), (&[16], &[48]), (&[31], &[32]), (&[0, 63], &[30, 31]), (&[2, 3, 4], &[60])];
        let mut samples = Vec::with_capacity(draws);
        let mut out = Vec::new();
        for _ in 0..draws {
            sampler.draw(&mut rng, &mut out)?;
            samples.push(
                tests
                    .iter()
                    .map(|(a, b)| {
                        let sa: u32 = a.iter().map(|&i| out[i]).sum();
                        let sb: u32 = b.iter().map(|&i| out[i]).sum();
                        (f64::from(sa), f64::from(sb))
                    })
                    .collect::<Vec<_>>(),
            );
        }
        let mut worst = f64::NEG_INFINITY;
        for t in 0..tests.len() {
            let xs: Vec<(f64, f64)> = samples.iter().map(|s| s[t]).collect();
            let r = draws as f64;
            let mx = xs.iter().map(|p| p.0).sum::<f64>() / r;
            let my = xs.iter().map(|p| p.1).sum::<f64>() / r;
            let prods: Vec<f64> = xs.iter().map(|p| (p.0 - mx) * (p.1 - my)).collect();
            let cov = prods.iter().sum::<f64>() / (r - 1.0);
            let sd = (prods.iter().map(|p| (p - cov).powi(2)).sum::<f64>() / (r - 1.0)).sqrt();
            let se = sd / r.sqrt();
            // Degenerate pairs (zero spread) count as exact zero covariance.
            let z = if se > 0.0 {
                cov / se
            } else if cov > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            worst = worst.max(z);
        }
        Ok(PropertyResult::new(
            "na_empirical",
            worst <= 3.0,
            tests.len() as u64,
            worst,
            format!("worst = max Cov/SE over {draws} canonical draws at ℓ=64, n={n}"),
        ))
    }

    fn chebyshev(&self) -> PropertyResult {
        let mut rng = self.rng(40);
        let cases = scaled(200, self.cfg.check_scale);
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..cases {
            let atoms = rng.random_range(2..=8);
            let raw: Vec<f64> = (0..atoms).map(|_| rng.random_range(0.01..1.0)).collect();
            let law = renormalized(&raw);
            let mut up = vec![0.0; atoms];
            let mut down = vec![0.0; atoms];
            for k in 1..atoms {
                up[k] = up[k - 1] + rng.random_range(0.0..2.0);
                down[k] = down[k - 1] - rng.random_range(0.0..2.0);
            }
            worst = worst.max(covariance_under(&law, |k| up[k], |k| down[k]));
        }
        PropertyResult::new("chebyshev_rearrangement", worst <= 1e-12, cases, worst, "worst = max Cov(F₊, F₋)")
    }

    fn moment_constants(&self) -> Result<PropertyResult, CliError> {
        let mut cases = 0;
        let mut worst = f64::NEG_INFINITY;
        for &len in &self.cfg.lengths {
            for t in marginal_tables(&self.spec, len)? {
                let s = t.summary();
                let c = match self.spec.stats() {
                    Statistics::Fermi => 2.0,
                    Statistics::Bose => 28.0 * s.mean.max(1.0),
                };
                cases += 1;
                if s.variance > 0.0 {
                    worst = worst.max(s.abs_central_moment3 / (c * s.variance));
                }
            }
        }
        Ok(PropertyResult::new(
            "moment_constants",
            worst <= 1.0 + 1e-12,
            cases,
            worst,
            "worst = max E|K−EK|³ / (c·Var)",
        ))
    }

    fn bottomley(&self) -> PropertyResult {
        let mut rng = self.rng(50);
        let cases = scaled(200, self.cfg.check_scale);
        let mut failures = 0;
        for _ in 0..cases {
            let k = rng.random_range(1..=30);
            let sum = (0..k).fold(DistTable::delta(0), |acc, _| acc.convolve(&random_lc(&mut rng, &self.pool)));
            failures += u64::from(!matches!(mode_mean_check(&sum), Ok(true)));
        }
        PropertyResult::new("mode_mean_bound", failures == 0, cases, failures as f64, "worst = failing sums")
    }

    fn local_clt(&self) -> Result<PropertyResult, CliError> {
        let mut errors = Vec::new();
        let mut worst: f64 = 0.0;
        for &n in &CLT_SIZES {
            let r = local_clt_error(&marginal_tables(&self.spec, n)?)?;
            worst = worst.max(r.sup_error / r.lyapunov);
            errors.push(r.sup_error);
        }
        let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
        Ok(PropertyResult::new(
            "local_clt",
            decreasing && worst <= LOCAL_CLT_RATIO,
            CLT_SIZES.len() as u64,
            worst,
            format!("worst = max sup_error/L_n; sup_error = {errors:?}"),
        ))
    }
}

/// Runs every property at the configured scale.
pub fn run_checks(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<PropertyResult>, CliError> {
    let spec = cfg.spec()?;
    let pool_tables = marginal_tables(&spec, 64)?;
    let battery = Battery { cfg, spec, pool: pool_tables };
    type Job<'a> = Box<dyn Fn() -> Result<Vec<PropertyResult>, CliError> + Send + Sync + 'a>;
    let b = &battery;
    let jobs: Vec<Job> = vec![
        Box::new(|| Ok(vec![b.lc_closure()])),
        Box::new(|| {
            let (bound, eq) = b.score_ratio();
            Ok(vec![bound, eq])
        }),
        Box::new(|| Ok(vec![b.efron()])),
        Box::new(|| Ok(vec![b.na_exhaustive()])),
        Box::new(|| Ok(vec![b.na_empirical()?])),
        Box::new(|| Ok(vec![b.chebyshev()])),
        Box::new(|| Ok(vec![b.moment_constants()?])),
        Box::new(|| Ok(vec![b.bottomley()])),
        Box::new(|| Ok(vec![b.local_clt()?])),
    ];
    let mut results: Vec<PropertyResult> = Vec::new();
    let chunks: Vec<Result<Vec<PropertyResult>, CliError>> =
        pool(workers)?.install(|| jobs.par_iter().map(|j| j()).collect());
    for c in chunks {
        results.extend(c?);
    }
    if cfg.inject_fault == Some(Fault::LogConcavity) {
        // A bimodal pmf presented as log-concave.
        let labelled = DistTable::from_probs(&[0.5, 0.1, 0.4])?;
        let ok = labelled.is_log_concave();
        results.push(PropertyResult::new("lc_injected", ok, 1, f64::from(u8::from(!ok)), "pmf (0.5, 0.1, 0.4)"));
    }
    Ok(results)
}

pub fn report_table(cfg: &ExperimentConfig, results: &[PropertyResult]) -> Table {
    let hash = cfg.hash();
    let mut t = Table::new(&["config_hash", "property", "status", "cases", "worst", "detail"]);
    for r in results {
        t.push(vec![
            json!(hash),
            json!(r.name),
            json!(if r.passed { "pass" } else { "fail" }),
            json!(r.cases),
            num(r.worst),
            json!(r.detail),
        ]);
    }
    t
}
