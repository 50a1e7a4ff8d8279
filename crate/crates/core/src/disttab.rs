//! Finite pmfs on `{0, …, K}` stored as log-probabilities, and the exact
//! oracles built on them.
//!
//! [`SuffixSumDp`] realises fixed-sum conditioning: with
//! `T_j(s) = P(K_j + … + K_{ℓ−1} = s)` the law of `(K_0, …, K_{ℓ−1})` given
//! `ΣK = n` is a Markov chain on the remaining sum, stepping from `s` with
//!
//! ```text
//! q_j(k | s) = p_j(k) · T_{j+1}(s − k) / T_j(s).
//! ```
//!
//! Everything conditional (site marginals, joint entropy, sampling) is read
//! off that chain.

use std::f64::consts::{LN_2, PI};

use rand::Rng;

use crate::{Error, Result};

/// Allowed deviation of the total mass from one.
pub const MASS_SLACK: f64 = 1e-12;
/// Geometric tables are truncated once the discarded tail drops below this.
pub const BOSE_TAIL_TOL: f64 = 1e-12;
/// Relative slack in the log-concavity test.
pub const LC_SLACK: f64 = 1e-14;
/// Largest number of configurations the enumeration oracles will visit.
pub const MAX_ENUMERATION: u64 = 1 << 22;
/// Largest truncated geometric support we are willing to tabulate.
const MAX_SUPPORT: usize = 1 << 24;

/// `ln(e^a + e^b)`.
#[inline]
pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Stable `ln Σ e^{x_i}`.
pub(crate) fn log_sum(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// A pmf on `{0, …, support_max}` held in log space.
#[derive(Clone, Debug, PartialEq)]
pub struct DistTable {
    log_probs: Vec<f64>,
    tail_mass: f64,
}

/// Exact moments and entropy of a [`DistTable`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub variance: f64,
    /// `E|X − EX|³`
    pub abs_central_moment3: f64,
    /// `E(X − EX)⁴`
    pub central_moment4: f64,
    pub entropy_bits: f64,
    /// Argmax of the pmf, smallest index on ties.
    pub mode: usize,
}

impl DistTable {
    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        if let Some(bad) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::Domain(format!("probability {bad} is not a finite nonnegative number")));
        }
        Self::from_log_probs(probs.iter().map(|p| p.ln()).collect(), 0.0)
    }

    /// Builds a table from log-probabilities; `tail_mass` is the mass
    /// discarded beyond the support by truncation.
    pub fn from_log_probs(log_probs: Vec<f64>, tail_mass: f64) -> Result<Self> {
        if log_probs.is_empty() {
            return Err(Error::Domain("empty probability table".into()));
        }
        if log_probs.iter().any(|lp| lp.is_nan() || *lp == f64::INFINITY) {
            return Err(Error::Domain("log-probabilities must be finite or −∞".into()));
        }
        if !(0.0..MASS_SLACK.max(BOSE_TAIL_TOL) * 1.0001).contains(&tail_mass) {
            return Err(Error::Domain(format!("truncation tail {tail_mass} exceeds tolerance")));
        }
        let total = log_sum(&log_probs).exp() + tail_mass;
        if (total - 1.0).abs() > MASS_SLACK {
            return Err(Error::Domain(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { log_probs, tail_mass })
    }

    /// Point mass at `k`.
    pub fn delta(k: usize) -> Self {
        let mut log_probs = vec![f64::NEG_INFINITY; k + 1];
        log_probs[k] = 0.0;
        Self { log_probs, tail_mass: 0.0 }
    }

    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("Bernoulli parameter {p} outside [0, 1]")));
        }
        Ok(Self { log_probs: vec![(-p).ln_1p(), p.ln()], tail_mass: 0.0 })
    }

    /// Two-point law with `P(1) = e^{−x}/(1 + e^{−x})`, evaluated in log space.
    pub fn fermi_from_reduced(x: f64) -> Self {
        let log_norm = -crate::ensemble::softplus(-x);
        Self { log_probs: vec![log_norm, log_norm - x], tail_mass: 0.0 }
    }

    /// Geometric law `P(k) = (1 − q) qᵏ`, truncated where the tail falls below `tail_tol`.
    pub fn geometric(q: f64, tail_tol: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&q) {
            return Err(Error::Domain(format!("geometric ratio {q} outside [0, 1)")));
        }
        if q == 0.0 {
            return Ok(Self::delta(0));
        }
        Self::geometric_from_log_ratio(q.ln(), tail_tol)
    }

    /// Geometric law with mean `a`.
    pub fn geometric_with_mean(a: f64, tail_tol: f64) -> Result<Self> {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::Domain(format!("geometric mean {a} must be finite and nonnegative")));
        }
        Self::geometric(a / (1.0 + a), tail_tol)
    }

    /// Geometric law with `ln q = log_ratio < 0`; the Bose marginal has `log_ratio = −βκ`.
    pub fn geometric_from_log_ratio(log_ratio: f64, tail_tol: f64) -> Result<Self> {
        if !(log_ratio < 0.0) {
            return Err(Error::InvalidEnsemble(format!("geometric log-ratio {log_ratio} must be negative")));
        }
        if !(tail_tol > 0.0 && tail_tol < 1.0) {
            return Err(Error::Domain(format!("tail tolerance {tail_tol} outside (0, 1)")));
        }
        // Tail beyond K is q^{K+1}; pick the smallest K with q^{K+1} < tail_tol.
        let needed = (tail_tol.ln() / log_ratio).floor();
        if !(needed < MAX_SUPPORT as f64) {
            return Err(Error::Numeric(format!("geometric support {needed} needed for tail {tail_tol} is too large")));
        }
        let kmax = needed as usize;
        let log_head = (-log_ratio.exp_m1()).ln();
        let log_probs: Vec<f64> = (0..=kmax).map(|k| log_head + k as f64 * log_ratio).collect();
        let tail_mass = ((kmax + 1) as f64 * log_ratio).exp();
        Ok(Self { log_probs, tail_mass })
    }

    pub fn support_max(&self) -> usize {
        self.log_probs.len() - 1
    }

    /// Mass removed by truncation (zero for exact tables).
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn log_prob(&self, k: usize) -> f64 {
        self.log_probs.get(k).copied().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.log_prob(k).exp()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|lp| lp.exp()).collect()
    }

    /// Law of the independent sum, by log-sum-exp over each antidiagonal.
    pub fn convolve(&self, other: &DistTable) -> DistTable {
        let (ka, kb) = (self.support_max(), other.support_max());
        let mut out = Vec::with_capacity(ka + kb + 1);
        let mut terms = Vec::with_capacity(ka.min(kb) + 1);
        for s in 0..=ka + kb {
            terms.clear();
            let lo = s.saturating_sub(kb);
            for k in lo..=s.min(ka) {
                terms.push(self.log_probs[k] + other.log_probs[s - k]);
            }
            out.push(log_sum(&terms));
        }
        DistTable { log_probs: out, tail_mass: self.tail_mass + other.tail_mass }
    }

    pub fn summary(&self) -> Summary {
        let probs = self.probs();
        let mean: f64 = probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        let (mut variance, mut m3, mut m4, mut entropy) = (0.0, 0.0, 0.0, 0.0);
        for (k, &p) in probs.iter().enumerate() {
            let d = k as f64 - mean;
            variance += d * d * p;
            m3 += d.abs().powi(3) * p;
            m4 += d.powi(4) * p;
            if p > 0.0 {
                entropy -= p * self.log_probs[k];
            }
        }
        let mut mode = 0;
        for (k, lp) in self.log_probs.iter().enumerate() {
            if *lp > self.log_probs[mode] {
                mode = k;
            }
        }
        Summary { mean, variance, abs_central_moment3: m3, central_moment4: m4, entropy_bits: entropy / LN_2, mode }
    }

    /// Shannon entropy in bits.
    pub fn entropy_bits(&self) -> f64 {
        self.summary().entropy_bits
    }

    /// `p(s)² ≥ p(s−1) p(s+1)` at every interior point, tested in log space.
    ///
    /// The relative slack is scaled by the magnitude of the log-probabilities,
    /// which is where rounding of the stored values lives.
    pub fn is_log_concave(&self) -> bool {
        self.log_probs.windows(3).all(|w| {
            let (a, b, c) = (w[0], w[1], w[2]);
            if a == f64::NEG_INFINITY || c == f64::NEG_INFINITY {
                return true;
            }
            if b == f64::NEG_INFINITY {
                return false;
            }
            let scale = 1.0 + a.abs().max(b.abs()).max(c.abs());
            2.0 * b - a - c >= -LC_SLACK * scale
        })
    }
}

/// Suffix-sum tables `T_j(s) = P(K_j + … + K_{ℓ−1} = s)` for `s ≤ n`, in log space.
#[derive(Clone, Debug)]
pub struct SuffixSumDp {
    marginals: Vec<DistTable>,
    target: usize,
    width: usize,
    /// Row `j` occupies `[j·width, (j+1)·width)`.
    log_suffix: Vec<f64>,
}

impl SuffixSumDp {
    /// Builds the tables for conditioning on sums up to `n`.
    pub fn new(marginals: Vec<DistTable>, n: usize) -> Result<Self> {
        let len = marginals.len();
        let width = n + 1;
        let mut log_suffix = vec![f64::NEG_INFINITY; (len + 1) * width];
        log_suffix[len * width] = 0.0;
        let mut terms = Vec::new();
        for j in (0..len).rev() {
            let lp = marginals[j].log_probs();
            let (head, tail) = log_suffix.split_at_mut((j + 1) * width);
            let row = &mut head[j * width..];
            let next = &tail[..width];
            for (s, cell) in row.iter_mut().enumerate() {
                let kmax = s.min(lp.len() - 1);
                *cell = if kmax == 1 && lp.len() == 2 {
                    log_add(lp[0] + next[s], lp[1] + next[s - 1])
                } else {
                    terms.clear();
                    terms.extend((0..=kmax).map(|k| lp[k] + next[s - k]));
                    log_sum(&terms)
                };
            }
        }
        let dp = Self { marginals, target: n, width, log_suffix };
        if dp.log_suffix[n] == f64::NEG_INFINITY {
            return Err(Error::ImpossibleCondition(format!("P(ΣK = {n}) = 0 for {} sites", dp.marginals.len())));
        }
        Ok(dp)
    }

    /// Number of sites `ℓ`.
    pub fn len(&self) -> usize {
        self.marginals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marginals.is_empty()
    }

    /// Largest sum the tables cover.
    pub fn target(&self) -> usize {
        self.target
    }

    pub fn marginals(&self) -> &[DistTable] {
        &self.marginals
    }

    /// `ln T_j(s)`.
    pub fn log_suffix(&self, j: usize, s: usize) -> f64 {
        if s > self.target {
            return f64::NEG_INFINITY;
        }
        self.log_suffix[j * self.width + s]
    }

    /// `ln P(K_0 + … + K_{ℓ−1} = n)`.
    pub fn log_prob_sum(&self, n: usize) -> f64 {
        self.log_suffix(0, n)
    }

    fn check_target(&self, n: usize) -> Result<()> {
        if n > self.target {
            return Err(Error::Domain(format!("sum {n} exceeds the tabulated target {}", self.target)));
        }
        if self.log_prob_sum(n) == f64::NEG_INFINITY {
            return Err(Error::ImpossibleCondition(format!("P(ΣK = {n}) = 0")));
        }
        Ok(())
    }

    /// Step law `q_j(k | s)` written into `out` (index `k`).
    fn step_law(&self, j: usize, s: usize, out: &mut Vec<f64>) {
        out.clear();
        let lp = self.marginals[j].log_probs();
        let here = self.log_suffix(j, s);
        let next = &self.log_suffix[(j + 1) * self.width..(j + 2) * self.width];
        for k in 0..=s.min(lp.len() - 1) {
            out.push((lp[k] + next[s - k] - here).exp());
        }
    }

    /// Forward occupancy `π_j(s)` of the remaining-sum chain started at `n`,
    /// passed row by row to `visit` together with the step laws used.
    fn walk<F>(&self, n: usize, mut visit: F) -> Result<()>
    where
        F: FnMut(usize, &[f64], &mut dyn FnMut(usize, &mut Vec<f64>)),
    {
        self.check_target(n)?;
        let mut occ = vec![0.0; n + 1];
        occ[n] = 1.0;
        let mut next = vec![0.0; n + 1];
        let mut law = Vec::new();
        for j in 0..self.len() {
            next.iter_mut().for_each(|x| *x = 0.0);
            {
                let mut step = |s: usize, buf: &mut Vec<f64>| self.step_law(j, s, buf);
                visit(j, &occ, &mut step);
            }
            for s in 0..=n {
                let w = occ[s];
                if w == 0.0 {
                    continue;
                }
                self.step_law(j, s, &mut law);
                for (k, q) in law.iter().enumerate() {
                    next[s - k] += w * q;
                }
            }
            std::mem::swap(&mut occ, &mut next);
        }
        Ok(())
    }

    /// Laws of every `K_i` given `ΣK = n`.
    pub fn conditional_marginals(&self, n: usize) -> Result<Vec<DistTable>> {
        let mut out = Vec::with_capacity(self.len());
        let mut law = Vec::new();
        self.walk(n, |j, occ, step| {
            let mut acc = vec![0.0; self.marginals[j].support_max().min(n) + 1];
            for (s, &w) in occ.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                step(s, &mut law);
                for (k, q) in law.iter().enumerate() {
                    acc[k] += w * q;
                }
            }
            out.push(normalized(acc));
        })?;
        Ok(out)
    }

    /// Law of `K_i` given `ΣK = n`.
    pub fn conditional_marginal(&self, i: usize, n: usize) -> Result<DistTable> {
        if i >= self.len() {
            return Err(Error::Domain(format!("site {i} out of range for {} sites", self.len())));
        }
        Ok(self.conditional_marginals(n)?.swap_remove(i))
    }

    /// `H(K_0, …, K_{ℓ−1} | ΣK = n)` in bits, via the chain rule on the
    /// remaining-sum chain.
    pub fn conditional_entropy(&self, n: usize) -> Result<f64> {
        let mut total = 0.0;
        let mut law = Vec::new();
        self.walk(n, |_, occ, step| {
            for (s, &w) in occ.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                step(s, &mut law);
                let h: f64 = law.iter().filter(|q| **q > 0.0).map(|q| -q * q.ln()).sum();
                total += w * h;
            }
        })?;
        Ok(total / LN_2)
    }

    /// One exact draw from the law of `(K_0, …, K_{ℓ−1})` given `ΣK = n`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R, out: &mut Vec<u32>) -> Result<()> {
        self.check_target(n)?;
        out.clear();
        let mut remaining = n;
        let mut law = Vec::new();
        for j in 0..self.len() {
            self.step_law(j, remaining, &mut law);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = None;
            for (k, q) in law.iter().enumerate() {
                if *q > 0.0 {
                    acc += q;
                    pick = Some(k);
                    if u < acc {
                        break;
                    }
                }
            }
            let k = pick.ok_or_else(|| Error::Numeric(format!("empty step law at site {j}")))?;
            out.push(k as u32);
            remaining -= k;
        }
        debug_assert_eq!(remaining, 0);
        if remaining != 0 {
            return Err(Error::Numeric("conditioned draw did not exhaust the target sum".into()));
        }
        Ok(())
    }
}

fn normalized(mut probs: Vec<f64>) -> DistTable {
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    DistTable { log_probs: probs.iter().map(|p| p.ln()).collect(), tail_mass: 0.0 }
}

/// Builds the suffix-sum tables for the target `n`.
pub fn build_suffix_dp(marginals: &[DistTable], n: usize) -> Result<SuffixSumDp> {
    SuffixSumDp::new(marginals.to_vec(), n)
}

/// `H(K | ΣK = n)` in bits.
pub fn conditional_entropy_exact(dp: &SuffixSumDp, n: usize) -> Result<f64> {
    dp.conditional_entropy(n)
}

/// `δ(ℓ, n) = H(K | ΣK = n) − Σ_j H(K_j)` in bits.
pub fn entropy_gap(marginals: &[DistTable], n: usize) -> Result<f64> {
    let dp = build_suffix_dp(marginals, n)?;
    let joint: f64 = marginals.iter().map(DistTable::entropy_bits).sum();
    Ok(dp.conditional_entropy(n)? - joint)
}

/// Distance between an exact lattice sum and its Gaussian approximation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalCltReport {
    /// `sup_q |σ P(S = q) − φ((q − a)/σ)|`
    pub sup_error: f64,
    /// Lyapunov ratio `L_n = Σ E|X_i − EX_i|³ / σ³`.
    pub lyapunov: f64,
    pub sigma: f64,
    pub mean: f64,
}

/// Exact local-CLT error of the independent sum of `marginals`.
pub fn local_clt_error(marginals: &[DistTable]) -> Result<LocalCltReport> {
    // Linear-space convolution: only the bulk of the pmf matters for the sup.
    let mut sum = vec![1.0];
    let (mut mean, mut var, mut abs3) = (0.0, 0.0, 0.0);
    for m in marginals {
        let s = m.summary();
        mean += s.mean;
        var += s.variance;
        abs3 += s.abs_central_moment3;
        let p = m.probs();
        let mut next = vec![0.0; sum.len() + p.len() - 1];
        for (i, a) in sum.iter().enumerate() {
            for (k, b) in p.iter().enumerate() {
                next[i + k] += a * b;
            }
        }
        sum = next;
    }
    if !(var > 0.0) {
        return Err(Error::Precondition("degenerate sum: σ = 0".into()));
    }
    let sigma = var.sqrt();
    let norm = 1.0 / (2.0 * PI).sqrt();
    let gauss = |q: f64| norm * (-(q - mean).powi(2) / (2.0 * var)).exp();
    let mut sup_error: f64 = gauss(-1.0).max(gauss(sum.len() as f64));
    for (q, p) in sum.iter().enumerate() {
        sup_error = sup_error.max((sigma * p - gauss(q as f64)).abs());
    }
    Ok(LocalCltReport { sup_error, lyapunov: abs3 / (sigma * var), sigma, mean })
}

/// Both sides of the ratio bound `P(S = n−1)/P(S = n) ≥ n / ((M − n + 1) k*)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreRatio {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Relative slack granted to the score-ratio comparison.
pub const SCORE_SLACK: f64 = 1e-12;

/// Exact pmf of a sum of independent Bernoulli variables.
pub fn poisson_binomial(ps: &[f64]) -> Result<Vec<f64>> {
    let mut pmf = vec![1.0];
    for &p in ps {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("Bernoulli parameter {p} outside [0, 1]")));
        }
        let mut next = vec![0.0; pmf.len() + 1];
        for (s, w) in pmf.iter().enumerate() {
            next[s] += w * (1.0 - p);
            next[s + 1] += w * p;
        }
        pmf = next;
    }
    Ok(pmf)
}

/// Checks the Newton-type ratio bound for a Poisson-binomial sum at `n`.
pub fn score_ratio_check(ps: &[f64], n: usize) -> Result<ScoreRatio> {
    if let Some(p) = ps.iter().find(|p| **p >= 1.0) {
        return Err(Error::Domain(format!("k* undefined: Bernoulli parameter {p} equals 1")));
    }
    let pmf = poisson_binomial(ps)?;
    let p_n = pmf.get(n).copied().unwrap_or(0.0);
    if !(p_n > 0.0) {
        return Err(Error::ImpossibleCondition(format!("P(S = {n}) = 0")));
    }
    if n == 0 {
        return Ok(ScoreRatio { lhs: 0.0, rhs: 0.0, holds: true });
    }
    let m = ps.len();
    let k_star = ps.iter().map(|p| p / (1.0 - p)).sum::<f64>() / m as f64;
    let lhs = pmf[n - 1] / p_n;
    let rhs = n as f64 / ((m - n + 1) as f64 * k_star);
    Ok(ScoreRatio { lhs, rhs, holds: lhs >= rhs * (1.0 - SCORE_SLACK) })
}

/// `|mode − mean| ≤ √(3 Var)` for a log-concave (hence unimodal) law.
pub fn mode_mean_check(p: &DistTable) -> Result<bool> {
    if !p.is_log_concave() {
        return Err(Error::Precondition("mode–mean bound needs a unimodal (log-concave) law".into()));
    }
    let s = p.summary();
    Ok((s.mode as f64 - s.mean).abs() <= (3.0 * s.variance).sqrt())
}

/// Visits every configuration of independent marginals with its probability.
pub fn for_each_configuration<F>(marginals: &[DistTable], mut visit: F) -> Result<()>
where
    F: FnMut(&[u32], f64),
{
    let count = marginals
        .iter()
        .try_fold(1u64, |acc, m| acc.checked_mul(m.support_max() as u64 + 1))
        .filter(|c| *c <= MAX_ENUMERATION)
        .ok_or_else(|| Error::Precondition(format!("more than {MAX_ENUMERATION} configurations to enumerate")))?;
    let probs: Vec<Vec<f64>> = marginals.iter().map(DistTable::probs).collect();
    let mut config = vec![0u32; marginals.len()];
    for _ in 0..count {
        let w: f64 = config.iter().zip(&probs).map(|(&k, p)| p[k as usize]).product();
        visit(&config, w);
        for (slot, m) in config.iter_mut().zip(marginals) {
            if (*slot as usize) < m.support_max() {
                *slot += 1;
                break;
            }
            *slot = 0;
        }
    }
    Ok(())
}

/// `E(φ | S = s)` for each attainable `s`, and whether it is nondecreasing.
#[derive(Clone, Debug, PartialEq)]
pub struct EfronReport {
    pub expectations: Vec<(usize, f64)>,
    pub monotone: bool,
}

/// Exhaustive check that `E(φ(V) | ΣV = s)` does not decrease in `s`.
pub fn efron_monotonicity_check<F>(marginals: &[DistTable], phi: F) -> Result<EfronReport>
where
    F: Fn(&[u32]) -> f64,
{
    if let Some(i) = marginals.iter().position(|m| !m.is_log_concave()) {
        return Err(Error::Precondition(format!("marginal {i} is not log-concave")));
    }
    let smax: usize = marginals.iter().map(DistTable::support_max).sum();
    let mut mass = vec![0.0; smax + 1];
    let mut moment = vec![0.0; smax + 1];
    for_each_configuration(marginals, |config, w| {
        let s: u32 = config.iter().sum();
        mass[s as usize] += w;
        moment[s as usize] += w * phi(config);
    })?;
    let expectations: Vec<(usize, f64)> =
        (0..=smax).filter(|&s| mass[s] > 0.0).map(|s| (s, moment[s] / mass[s])).collect();
    let monotone = expectations.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-12 * w[0].1.abs().max(1.0));
    Ok(EfronReport { expectations, monotone })
}

/// Exact `Cov(f(K), g(K) | ΣK = n)` by enumeration.
pub fn conditioned_covariance<F, G>(marginals: &[DistTable], n: usize, f: F, g: G) -> Result<f64>
where
    F: Fn(&[u32]) -> f64,
    G: Fn(&[u32]) -> f64,
{
    let (mut z, mut ef, mut eg, mut efg) = (0.0, 0.0, 0.0, 0.0);
    for_each_configuration(marginals, |config, w| {
        if config.iter().sum::<u32>() as usize != n || w == 0.0 {
            return;
        }
        let (a, b) = (f(config), g(config));
        z += w;
        ef += w * a;
        eg += w * b;
        efg += w * a * b;
    })?;
    if !(z > 0.0) {
        return Err(Error::ImpossibleCondition(format!("P(ΣK = {n}) = 0")));
    }
    Ok(efg / z - (ef / z) * (eg / z))
}

/// Exact `Cov(F₊(X), F₋(X))` under a single law.
pub fn covariance_under<F, G>(p: &DistTable, f: F, g: G) -> f64
where
    F: Fn(usize) -> f64,
    G: Fn(usize) -> f64,
{
    let probs = p.probs();
    let ef: f64 = probs.iter().enumerate().map(|(k, w)| w * f(k)).sum();
    let eg: f64 = probs.iter().enumerate().map(|(k, w)| w * g(k)).sum();
    let efg: f64 = probs.iter().enumerate().map(|(k, w)| w * f(k) * g(k)).sum();
    efg - ef * eg
}
