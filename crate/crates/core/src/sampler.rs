//! Seeded generation of occupancy strings.
//!
//! Grand-canonical strings are products of the site marginals. Canonical
//! strings are exact draws from the product law conditioned on `ΣK = n`,
//! produced either from the suffix-sum tables of [`SuffixSumDp`] or, when
//! those would be too large, by rejection from a tilted product law (the
//! conditioned law does not depend on μ, so any tilt is exact).
//!
//! Randomness comes from ChaCha8 keyed by the master seed with the replica
//! index as stream id; the block counter plays the role of the draw counter.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::disttab::{DistTable, SuffixSumDp, BOSE_TAIL_TOL};
use crate::ensemble::{mean_from_reduced, EnsembleSpec, Statistics};
use crate::{Error, Result};

/// Suffix tables are used when `ℓ · (n + 1) · (K̄ + 1)` stays under this.
pub const DP_WORK_BUDGET: usize = 1 << 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EnsembleKind {
    Grand,
    Canonical,
}

impl EnsembleKind {
    pub fn name(self) -> &'static str {
        match self {
            EnsembleKind::Grand => "grand",
            EnsembleKind::Canonical => "canonical",
        }
    }
}

impl fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EnsembleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "grand" | "grand-canonical" | "grand_canonical" => Ok(EnsembleKind::Grand),
            "canonical" => Ok(EnsembleKind::Canonical),
            other => Err(Error::Domain(format!("unknown ensemble kind '{other}'"))),
        }
    }
}

/// Where a string came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub spec_id: String,
    pub kind: EnsembleKind,
    /// Particle number for canonical strings.
    pub n: Option<usize>,
    pub seed: u64,
    pub replica: u64,
}

/// A sampled configuration `(k_0, …, k_{ℓ−1})`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OccupancyString {
    values: Vec<u32>,
    provenance: Provenance,
}

impl OccupancyString {
    pub fn new(values: Vec<u32>, provenance: Provenance) -> Self {
        Self { values, provenance }
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<u32> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn total(&self) -> u64 {
        self.values.iter().map(|&k| u64::from(k)).sum()
    }

    /// Newline-delimited decimal serialisation.
    pub fn to_lines(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 2);
        for k in &self.values {
            out.push_str(&k.to_string());
            out.push('\n');
        }
        out
    }
}

/// Parses newline-delimited (or whitespace-delimited) decimal occupancies.
pub fn parse_lines(text: &str) -> Result<Vec<u32>> {
    text.split_whitespace()
        .map(|tok| tok.parse::<u32>().map_err(|e| Error::Domain(format!("bad occupancy '{tok}': {e}"))))
        .collect()
}

/// Target particle density `r`, mapped to `n(ℓ) = round(r ℓ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParticleTarget {
    density: f64,
}

impl ParticleTarget {
    pub fn new(stats: Statistics, density: f64) -> Result<Self> {
        let ok = match stats {
            Statistics::Fermi => density > 0.0 && density < 1.0,
            Statistics::Bose => density > 0.0 && density.is_finite(),
        };
        if !ok {
            return Err(Error::Range(format!("density {density} is not attainable for {stats}")));
        }
        Ok(Self { density })
    }

    pub fn density(&self) -> f64 {
        self.density
    }

    /// Rounds half away from zero, so `|n/ℓ − r| ≤ 1/(2ℓ)`.
    pub fn particles(&self, len: usize) -> usize {
        (self.density * len as f64).round() as usize
    }
}

/// `n = round(r ℓ)`, half away from zero.
pub fn choose_n(target: &ParticleTarget, len: usize) -> usize {
    target.particles(len)
}

/// Generator for replica `replica` of a run keyed by `seed`.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

fn reduced_energies(spec: &EnsembleSpec, len: usize) -> Vec<f64> {
    (0..len).map(|j| spec.reduced_energy(j as f64 / len as f64)).collect()
}

fn check_len(len: usize) -> Result<()> {
    if len == 0 {
        Err(Error::Domain("string length must be positive".into()))
    } else {
        Ok(())
    }
}

fn table_from_reduced(stats: Statistics, x: f64) -> Result<DistTable> {
    match stats {
        Statistics::Fermi => Ok(DistTable::fermi_from_reduced(x)),
        Statistics::Bose => {
            if !(x > 0.0) {
                return Err(Error::InvalidEnsemble(format!("Bose mode with β·κ = {x} ≤ 0")));
            }
            DistTable::geometric_from_log_ratio(-x, BOSE_TAIL_TOL)
        }
    }
}

/// Law of `K_j` for the eigenvalue `κ = ω_μ(j/ℓ)`.
pub fn marginal_pmf(spec: &EnsembleSpec, j: usize, len: usize) -> Result<DistTable> {
    if j >= len {
        return Err(Error::Domain(format!("site {j} out of range for ℓ = {len}")));
    }
    table_from_reduced(spec.stats(), spec.reduced_energy(j as f64 / len as f64))
}

/// All site marginals of a length-`len` string.
pub fn marginal_tables(spec: &EnsembleSpec, len: usize) -> Result<Vec<DistTable>> {
    (0..len).map(|j| marginal_pmf(spec, j, len)).collect()
}

/// Independent per-site sampler for the grand-canonical product law.
#[derive(Clone, Debug)]
pub struct GrandSampler {
    stats: Statistics,
    /// Fermi: `P(K_j = 1)`. Bose: `−1/(β κ_j)`, the scale of the inverse transform.
    params: Vec<f64>,
}

impl GrandSampler {
    pub fn new(spec: &EnsembleSpec, len: usize) -> Result<Self> {
        check_len(len)?;
        Self::from_reduced(spec.stats(), &reduced_energies(spec, len))
    }

    fn from_reduced(stats: Statistics, reduced: &[f64]) -> Result<Self> {
        let params = match stats {
            Statistics::Fermi => reduced.iter().map(|&x| mean_from_reduced(stats, x)).collect::<Result<_>>()?,
            Statistics::Bose => reduced
                .iter()
                .map(|&x| {
                    if x > 0.0 {
                        Ok(-1.0 / x)
                    } else {
                        Err(Error::InvalidEnsemble(format!("Bose mode with β·κ = {x} ≤ 0")))
                    }
                })
                .collect::<Result<_>>()?,
        };
        Ok(Self { stats, params })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    #[inline]
    fn site<R: Rng + ?Sized>(&self, j: usize, rng: &mut R) -> u32 {
        match self.stats {
            Statistics::Fermi => u32::from(rng.random::<f64>() < self.params[j]),
            Statistics::Bose => {
                // K = ⌊ln U / ln q⌋ with U uniform on (0, 1].
                let u = 1.0 - rng.random::<f64>();
                (u.ln() * self.params[j]).floor().min(u32::MAX as f64) as u32
            }
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<u32>) {
        out.clear();
        out.extend((0..self.params.len()).map(|j| self.site(j, rng)));
    }

    /// Draws until the total equals `n`, giving up after `max_attempts`.
    fn draw_conditioned<R: Rng + ?Sized>(
        &self,
        n: usize,
        max_attempts: u64,
        rng: &mut R,
        out: &mut Vec<u32>,
    ) -> Result<()> {
        let len = self.params.len();
        for _ in 0..max_attempts {
            out.clear();
            let mut total = 0usize;
            let mut rejected = false;
            for j in 0..len {
                let k = self.site(j, rng);
                total += k as usize;
                out.push(k);
                let short = self.stats == Statistics::Fermi && total + (len - j - 1) < n;
                if total > n || short {
                    rejected = true;
                    break;
                }
            }
            if !rejected && total == n {
                return Ok(());
            }
        }
        Err(Error::Numeric(format!("rejection sampler found no string with total {n} in {max_attempts} attempts")))
    }
}

/// One grand-canonical string.
pub fn sample_grand(spec: &EnsembleSpec, len: usize, seed: u64, replica: u64) -> Result<OccupancyString> {
    let sampler = GrandSampler::new(spec, len)?;
    let mut rng = replica_rng(seed, replica);
    let mut values = Vec::with_capacity(len);
    sampler.draw(&mut rng, &mut values);
    Ok(OccupancyString::new(
        values,
        Provenance { spec_id: spec.id(), kind: EnsembleKind::Grand, n: None, seed, replica },
    ))
}

#[derive(Clone, Debug)]
enum Method {
    /// Only one configuration is compatible with the condition.
    Forced(Vec<u32>),
    Tables(SuffixSumDp),
    Rejection {
        proposal: GrandSampler,
        max_attempts: u64,
    },
}

/// Exact sampler for the product law conditioned on `ΣK = n`.
#[derive(Clone, Debug)]
pub struct CanonicalSampler {
    method: Method,
    n: usize,
    truncation_tail: f64,
}

impl CanonicalSampler {
    pub fn new(spec: &EnsembleSpec, len: usize, n: usize) -> Result<Self> {
        check_len(len)?;
        let stats = spec.stats();
        if stats == Statistics::Fermi && n > len {
            return Err(Error::ImpossibleCondition(format!("{n} fermions cannot occupy {len} modes")));
        }
        if n == 0 {
            return Ok(Self { method: Method::Forced(vec![0; len]), n, truncation_tail: 0.0 });
        }
        if stats == Statistics::Fermi && n == len {
            return Ok(Self { method: Method::Forced(vec![1; len]), n, truncation_tail: 0.0 });
        }
        let reduced = reduced_energies(spec, len);
        let mean_support = match stats {
            Statistics::Fermi => 1.0,
            Statistics::Bose => {
                reduced.iter().map(|x| (BOSE_TAIL_TOL.ln() / -x).floor().min(n as f64)).sum::<f64>() / len as f64
            }
        };
        let work = len as f64 * (n + 1) as f64 * (mean_support + 1.0);
        if work <= DP_WORK_BUDGET as f64 {
            let tables = reduced.iter().map(|&x| table_from_reduced(stats, x)).collect::<Result<Vec<_>>>()?;
            return Self::from_marginals(tables, n);
        }
        let tilted = tilt_to_total(stats, &reduced, n)?;
        let variance: f64 = tilted
            .iter()
            .map(|&x| {
                let l = mean_from_reduced(stats, x).unwrap_or(0.0);
                match stats {
                    Statistics::Fermi => l * (1.0 - l),
                    Statistics::Bose => l * (1.0 + l),
                }
            })
            .sum();
        // Acceptance is about 1/(σ√(2π)); allow two hundred times the expected count.
        let expected = (variance.sqrt() * (2.0 * std::f64::consts::PI).sqrt()).max(1.0);
        let max_attempts = (200.0 * expected).max(10_000.0) as u64;
        Ok(Self {
            method: Method::Rejection { proposal: GrandSampler::from_reduced(stats, &tilted)?, max_attempts },
            n,
            truncation_tail: 0.0,
        })
    }

    /// Exact sampler over arbitrary site marginals using suffix-sum tables.
    pub fn from_marginals(marginals: Vec<DistTable>, n: usize) -> Result<Self> {
        let truncation_tail = marginals.iter().map(DistTable::tail_mass).sum();
        let dp = SuffixSumDp::new(marginals, n)?;
        Ok(Self { method: Method::Tables(dp), n, truncation_tail })
    }

    pub fn particles(&self) -> usize {
        self.n
    }

    /// Total geometric mass discarded by the truncated tables (zero otherwise).
    pub fn truncation_tail(&self) -> f64 {
        self.truncation_tail
    }

    /// Whether suffix tables (rather than rejection) back this sampler.
    pub fn uses_tables(&self) -> bool {
        matches!(self.method, Method::Tables(_))
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<u32>) -> Result<()> {
        match &self.method {
            Method::Forced(v) => {
                out.clear();
                out.extend_from_slice(v);
            }
            Method::Tables(dp) => dp.sample(self.n, rng, out)?,
            Method::Rejection { proposal, max_attempts } => {
                proposal.draw_conditioned(self.n, *max_attempts, rng, out)?
            }
        }
        let total: u64 = out.iter().map(|&k| u64::from(k)).sum();
        assert_eq!(total, self.n as u64, "canonical draw must sum to n");
        Ok(())
    }
}

/// Shifts μ so that `Σ_j l(j/ℓ)` equals `n`; returns the shifted reduced energies.
fn tilt_to_total(stats: Statistics, reduced: &[f64], n: usize) -> Result<Vec<f64>> {
    let target = n as f64;
    // Raising μ by Δμ lowers every reduced energy by t = β·Δμ.
    let total =
        |t: f64| -> f64 { reduced.iter().map(|&x| mean_from_reduced(stats, x - t).unwrap_or(f64::INFINITY)).sum() };
    let min_x = reduced.iter().copied().fold(f64::INFINITY, f64::min);
    let upper = match stats {
        Statistics::Bose => Some(min_x * (1.0 - 1e-12) - f64::MIN_POSITIVE),
        Statistics::Fermi => None,
    };
    let (mut lo, mut hi) = (-1.0, upper.map_or(1.0, |u| u.min(1.0)));
    let mut step = 1.0;
    while total(lo) > target {
        step *= 2.0;
        lo -= step;
        if step > 1e6 {
            return Err(Error::Numeric("could not tilt the proposal below the target".into()));
        }
    }
    step = 1.0;
    while total(hi) < target {
        match upper {
            Some(u) if hi >= u => break,
            _ => {}
        }
        step *= 2.0;
        hi = upper.map_or(hi + step, |u| (hi + step).min(u));
        if step > 1e6 {
            return Err(Error::Numeric("could not tilt the proposal above the target".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    Ok(reduced.iter().map(|&x| x - t).collect())
}

/// One canonical string with exactly `n` particles.
pub fn sample_canonical(spec: &EnsembleSpec, len: usize, n: usize, seed: u64, replica: u64) -> Result<OccupancyString> {
    let sampler = CanonicalSampler::new(spec, len, n)?;
    let mut rng = replica_rng(seed, replica);
    let mut values = Vec::with_capacity(len);
    sampler.draw(&mut rng, &mut values)?;
    Ok(OccupancyString::new(
        values,
        Provenance { spec_id: spec.id(), kind: EnsembleKind::Canonical, n: Some(n), seed, replica },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::Dispersion;
    use std::f64::consts::LN_2;

    fn constant(stats: Statistics, beta: f64, x: f64) -> EnsembleSpec {
        // ω₀ ≡ c, μ = 0, so β κ = x everywhere.
        EnsembleSpec::new(stats, beta, 0.0, Dispersion::constant(x / beta).unwrap()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn marginal_tables_match_closed_forms() {
        let t = marginal_pmf(&constant(Statistics::Fermi, 1.0, 0.0), 0, 4).unwrap();
        close(t.prob(0), 0.5, 1e-15);
        close(t.prob(1), 0.5, 1e-15);

        let g = marginal_pmf(&constant(Statistics::Bose, 1.0, LN_2), 2, 4).unwrap();
        for (k, want) in [0.5, 0.25, 0.125, 0.0625].iter().enumerate() {
            close(g.prob(k), *want, 1e-15);
        }
        assert!(g.tail_mass() < BOSE_TAIL_TOL);

        let spec = EnsembleSpec::new(Statistics::Fermi, 1.0, 1.0, Dispersion::CosineLattice).unwrap();
        let t = marginal_pmf(&spec, 2, 8).unwrap();
        close(t.prob(1), 0.5, 1e-15);
        assert!(marginal_pmf(&spec, 8, 8).is_err());
    }

    #[test]
    fn rounding_rule() {
        let half = ParticleTarget::new(Statistics::Fermi, 0.5).unwrap();
        assert_eq!(choose_n(&half, 101), 51);
        assert_eq!(choose_n(&half, 100), 50);
        let t = ParticleTarget::new(Statistics::Fermi, 0.3).unwrap();
        assert_eq!(choose_n(&t, 10), 3);
        assert!(ParticleTarget::new(Statistics::Fermi, 1.0).is_err());
        assert!(ParticleTarget::new(Statistics::Bose, 3.0).is_ok());
    }

    #[test]
    fn grand_is_deterministic_and_concentrated() {
        let spec = constant(Statistics::Fermi, 1.0, 0.0);
        let a = sample_grand(&spec, 100_000, 7, 0).unwrap();
        let b = sample_grand(&spec, 100_000, 7, 0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values(), sample_grand(&spec, 100_000, 7, 1).unwrap().values());
        let mean = a.total() as f64 / 1e5;
        assert!((mean - 0.5).abs() < 5.0 * 0.5 / 1e5f64.sqrt(), "mean {mean}");
    }

    #[test]
    fn grand_bose_mean() {
        let spec = constant(Statistics::Bose, 1.0, LN_2);
        let s = sample_grand(&spec, 100_000, 11, 0).unwrap();
        let mean = s.total() as f64 / 1e5;
        assert!((mean - 1.0).abs() < 5.0 * (2.0f64 / 1e5).sqrt(), "mean {mean}");
    }

    #[test]
    fn canonical_forced_cases() {
        let spec = EnsembleSpec::new(Statistics::Fermi, 1.0, 1.0, Dispersion::CosineLattice).unwrap();
        let full = sample_canonical(&spec, 12, 12, 1, 0).unwrap();
        assert!(full.values().iter().all(|&k| k == 1));
        let empty = sample_canonical(&spec, 12, 0, 1, 0).unwrap();
        assert!(empty.values().iter().all(|&k| k == 0));
        assert!(matches!(sample_canonical(&spec, 12, 13, 1, 0), Err(Error::ImpossibleCondition(_))));
    }

    #[test]
    fn canonical_two_site_exchangeable() {
        let spec = constant(Statistics::Fermi, 1.0, 0.3);
        let sampler = CanonicalSampler::new(&spec, 2, 1).unwrap();
        let mut rng = replica_rng(5, 0);
        let mut out = Vec::new();
        let mut ones = 0;
        for _ in 0..100_000 {
            sampler.draw(&mut rng, &mut out).unwrap();
            ones += out[0];
        }
        close(f64::from(ones) / 1e5, 0.5, 0.01);
    }

    #[test]
    fn canonical_heterogeneous_pair() {
        let tables = vec![DistTable::bernoulli(1.0 / 3.0).unwrap(), DistTable::bernoulli(2.0 / 3.0).unwrap()];
        let sampler = CanonicalSampler::from_marginals(tables, 1).unwrap();
        let mut rng = replica_rng(9, 3);
        let mut out = Vec::new();
        let mut ones = 0;
        for _ in 0..100_000 {
            sampler.draw(&mut rng, &mut out).unwrap();
            ones += out[0];
        }
        close(f64::from(ones) / 1e5, 0.2, 0.01);
    }

    #[test]
    fn rejection_path_for_long_strings() {
        for (stats, mu) in [(Statistics::Fermi, 1.0), (Statistics::Bose, -0.5)] {
            let spec = EnsembleSpec::new(stats, 1.0, mu, Dispersion::CosineLattice).unwrap();
            let len = 1 << 14;
            let n = len / 3;
            let sampler = CanonicalSampler::new(&spec, len, n).unwrap();
            assert!(!sampler.uses_tables());
            let mut rng = replica_rng(1, 0);
            let mut out = Vec::new();
            sampler.draw(&mut rng, &mut out).unwrap();
            assert_eq!(out.len(), len);
            assert_eq!(out.iter().map(|&k| k as usize).sum::<usize>(), n);
        }
    }

    #[test]
    fn serialisation_round_trip() {
        let spec = constant(Statistics::Bose, 1.0, 0.4);
        let s = sample_grand(&spec, 50, 3, 2).unwrap();
        assert_eq!(parse_lines(&s.to_lines()).unwrap(), s.values());
        assert!(parse_lines("1\n-2\n").is_err());
    }
}
