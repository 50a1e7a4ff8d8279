//! Dispersion relations, marginal occupancy profiles and thermodynamic
//! integrals of the ideal lattice gas in one dimension.
//!
//! A mode `y ∈ [0, 1]` has energy `ω_μ(y) = ω₀(y) − μ`. With `x = β ω_μ(y)`
//! the occupancy of that mode is two-point (Fermi) or geometric (Bose) with
//!
//! ```text
//! l(y) = e^{−x} / (1 ∓ e^{−x})
//! g(y) = ∓log₂(1 ∓ e^{−x}) + (x / ln 2) · l(y)
//! ```
//!
//! (upper sign Bose). All entropies are in bits; Gibbs weights use natural
//! exponentials.

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::str::FromStr;

use crate::quad::{adaptive_simpson, DEFAULT_QUAD_TOL};
use crate::{Error, Result};

/// Particle statistics of the gas.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Statistics {
    Bose,
    Fermi,
}

impl Statistics {
    pub fn name(self) -> &'static str {
        match self {
            Statistics::Bose => "bose",
            Statistics::Fermi => "fermi",
        }
    }
}

impl fmt::Display for Statistics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Statistics {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bose" | "boson" | "bosons" => Ok(Statistics::Bose),
            "fermi" | "fermion" | "fermions" => Ok(Statistics::Fermi),
            other => Err(Error::Domain(format!("unknown statistics '{other}'"))),
        }
    }
}

/// Base single-particle energy `ω₀` on the momentum interval `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub enum Dispersion {
    /// `ω₀(y) = 1 − cos(2πy)`, the nearest-neighbour lattice Laplacian.
    CosineLattice,
    /// Values on the uniform grid `y_i = i / (len − 1)`, linearly interpolated.
    TabulatedGrid(Vec<f64>),
}

impl Dispersion {
    pub fn tabulated(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Domain(format!(
                "tabulated dispersion needs at least 2 grid values, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("tabulated dispersion value {bad} is not finite")));
        }
        Ok(Dispersion::TabulatedGrid(values))
    }

    /// Constant base energy, represented as a two-point grid.
    pub fn constant(c: f64) -> Result<Self> {
        Self::tabulated(vec![c, c])
    }

    /// `ω₀(y)`; `y` is clamped to `[0, 1]`.
    pub fn base_energy(&self, y: f64) -> f64 {
        let y = y.clamp(0.0, 1.0);
        match self {
            Dispersion::CosineLattice => 1.0 - (2.0 * PI * y).cos(),
            Dispersion::TabulatedGrid(v) => {
                let cells = (v.len() - 1) as f64;
                let t = y * cells;
                let i = (t.floor() as usize).min(v.len() - 2);
                let frac = t - i as f64;
                v[i] + (v[i + 1] - v[i]) * frac
            }
        }
    }

    pub fn min_base_energy(&self) -> f64 {
        match self {
            Dispersion::CosineLattice => 0.0,
            Dispersion::TabulatedGrid(v) => v.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn max_base_energy(&self) -> f64 {
        match self {
            Dispersion::CosineLattice => 2.0,
            Dispersion::TabulatedGrid(v) => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Points where `ω₀` may fail to be smooth.
    fn kinks(&self) -> Vec<f64> {
        match self {
            Dispersion::CosineLattice => Vec::new(),
            Dispersion::TabulatedGrid(v) => {
                let cells = (v.len() - 1) as f64;
                (1..v.len() - 1).map(|i| i as f64 / cells).collect()
            }
        }
    }

    fn label(&self) -> String {
        match self {
            Dispersion::CosineLattice => "cosine".to_string(),
            Dispersion::TabulatedGrid(v) => {
                // FNV-1a over the bit patterns keeps the label short and stable.
                let mut h: u64 = 0xcbf2_9ce4_8422_2325;
                for x in v {
                    for b in x.to_bits().to_le_bytes() {
                        h ^= u64::from(b);
                        h = h.wrapping_mul(0x0000_0100_0000_01b3);
                    }
                }
                format!("grid{}-{h:016x}", v.len())
            }
        }
    }
}

/// Mean occupancy `l` of a mode with reduced energy `x = β ω`.
pub fn mean_from_reduced(stats: Statistics, x: f64) -> Result<f64> {
    match stats {
        Statistics::Fermi => Ok(logistic(-x)),
        Statistics::Bose => {
            check_bose(x)?;
            Ok(1.0 / x.exp_m1())
        }
    }
}

/// Shannon entropy (bits) of the occupancy law of a mode with reduced energy `x`.
pub fn entropy_from_reduced(stats: Statistics, x: f64) -> Result<f64> {
    let l = mean_from_reduced(stats, x)?;
    let nats = match stats {
        Statistics::Fermi => softplus(-x) + x * l,
        Statistics::Bose => -(-(-x).exp_m1()).ln() + x * l,
    };
    Ok(nats / LN_2)
}

fn check_bose(x: f64) -> Result<()> {
    if x > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidEnsemble(format!("Bose mode needs β·ω > 0, got {x}")))
    }
}

#[inline]
pub(crate) fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Entropy `e_a` (bits) of the two-point or geometric law with mean `a`.
pub fn entropy_of_mean(stats: Statistics, a: f64) -> Result<f64> {
    match stats {
        Statistics::Fermi => {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::Domain(format!("Fermi mean must lie in (0, 1), got {a}")));
            }
            Ok(-(a * a.log2() + (1.0 - a) * (1.0 - a).log2()))
        }
        Statistics::Bose => {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Domain(format!("Bose mean must be positive, got {a}")));
            }
            Ok((a + 1.0) * (a + 1.0).log2() - a * a.log2())
        }
    }
}

/// One cell `[lo, hi]` of a partition of `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// Statistics, inverse temperature, chemical potential and dispersion.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSpec {
    stats: Statistics,
    beta: f64,
    mu: f64,
    dispersion: Dispersion,
}

impl EnsembleSpec {
    pub fn new(stats: Statistics, beta: f64, mu: f64, dispersion: Dispersion) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidEnsemble(format!("β must be positive and finite, got {beta}")));
        }
        if !mu.is_finite() {
            return Err(Error::InvalidEnsemble(format!("μ must be finite, got {mu}")));
        }
        if stats == Statistics::Bose {
            let gap = dispersion.min_base_energy() - mu;
            if !(gap > 0.0) {
                return Err(Error::InvalidEnsemble(format!(
                    "Bose ensemble needs μ < min ω₀ = {}, got μ = {mu}",
                    dispersion.min_base_energy()
                )));
            }
        }
        Ok(Self { stats, beta, mu, dispersion })
    }

    /// Builds the ensemble whose particle density equals `r`.
    pub fn with_density(stats: Statistics, beta: f64, r: f64, dispersion: Dispersion, tol: f64) -> Result<Self> {
        let mu = solve_mu(stats, &dispersion, beta, r, tol)?;
        Self::new(stats, beta, mu, dispersion)
    }

    pub fn stats(&self) -> Statistics {
        self.stats
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn dispersion(&self) -> &Dispersion {
        &self.dispersion
    }

    /// Same dispersion and statistics at a different chemical potential.
    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Self::new(self.stats, self.beta, mu, self.dispersion.clone())
    }

    /// Short stable identifier used in provenance records.
    pub fn id(&self) -> String {
        format!("{}:beta={}:mu={}:{}", self.stats, self.beta, self.mu, self.dispersion.label())
    }

    /// `ω_μ(y) = ω₀(y) − μ`.
    pub fn energy(&self, y: f64) -> Result<f64> {
        check_unit(y)?;
        Ok(self.dispersion.base_energy(y) - self.mu)
    }

    /// `β ω_μ(y)` without the domain check.
    pub(crate) fn reduced_energy(&self, y: f64) -> f64 {
        self.beta * (self.dispersion.base_energy(y) - self.mu)
    }

    /// Mean occupancy `l(y)`.
    pub fn mean_occupancy(&self, y: f64) -> Result<f64> {
        check_unit(y)?;
        mean_from_reduced(self.stats, self.reduced_energy(y))
    }

    /// Marginal entropy `g(y)` in bits.
    pub fn site_entropy(&self, y: f64) -> Result<f64> {
        check_unit(y)?;
        entropy_from_reduced(self.stats, self.reduced_energy(y))
    }

    /// Particle density `m = ∫₀¹ l(y) dy`.
    pub fn particle_density(&self, quad_tol: f64) -> Result<f64> {
        self.integrate(quad_tol, |x| mean_from_reduced(self.stats, x))
    }

    /// Entropy rate `h = ∫₀¹ g(y) dy` in bits per site.
    pub fn entropy_rate(&self, quad_tol: f64) -> Result<f64> {
        self.integrate(quad_tol, |x| entropy_from_reduced(self.stats, x))
    }

    fn integrate<F>(&self, quad_tol: f64, integrand: F) -> Result<f64>
    where
        F: Fn(f64) -> Result<f64>,
    {
        let mut cuts = vec![0.0];
        cuts.extend(self.dispersion.kinks());
        cuts.push(1.0);
        let share = quad_tol / (cuts.len() - 1) as f64;
        let mut total = 0.0;
        for w in cuts.windows(2) {
            // Integrand failures surface as NaN and are reported by the quadrature.
            total += adaptive_simpson(|y| integrand(self.reduced_energy(y)).unwrap_or(f64::NAN), w[0], w[1], share)?;
        }
        Ok(total)
    }

    /// `L = sup_y l(y)`, located by a dense scan plus the grid nodes.
    pub fn sup_mean(&self) -> f64 {
        const SCAN: usize = 1 << 14;
        let mut best = f64::NEG_INFINITY;
        let mut probe = |y: f64| {
            if let Ok(l) = mean_from_reduced(self.stats, self.reduced_energy(y)) {
                best = best.max(l);
            }
        };
        for i in 0..=SCAN {
            probe(i as f64 / SCAN as f64);
        }
        for y in self.dispersion.kinks() {
            probe(y);
        }
        best
    }

    /// The pair `(L, ε′)` with `ε′ = ε · e_L / (2L)`.
    pub fn typical_tolerance(&self, eps: f64) -> Result<(f64, f64)> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Domain(format!("ε must lie in (0, 1), got {eps}")));
        }
        let sup = self.sup_mean();
        let e_sup = entropy_of_mean(self.stats, sup)
            .map_err(|_| Error::InvalidEnsemble(format!("sup of the mean profile {sup} has no finite entropy")))?;
        Ok((sup, eps * e_sup / (2.0 * sup)))
    }

    /// Partition of `[0, 1]` on whose cells `l` oscillates by at most `ε′`.
    ///
    /// For Fermi ensembles every crossing of the level `l = ½` is a cell
    /// boundary. Oscillation is estimated from 33 samples per cell; cells are
    /// built to half of `ε′` so the sampling error stays inside the bound.
    pub fn partition_intervals(&self, eps: f64) -> Result<Vec<Interval>> {
        let (_, eps_prime) = self.typical_tolerance(eps)?;
        let target = 0.5 * eps_prime;
        let l = |y: f64| mean_from_reduced(self.stats, self.reduced_energy(y)).unwrap_or(f64::NAN);

        let mut cuts = vec![0.0];
        if self.stats == Statistics::Fermi {
            cuts.extend(half_level_crossings(&l));
        }
        cuts.push(1.0);

        let mut out = Vec::new();
        for w in cuts.windows(2) {
            let mut cells = Vec::new();
            cover(&l, w[0], w[1], target, 40, &mut cells);
            // Merge neighbours while the union stays under the target.
            let mut merged: Vec<(f64, f64, f64, f64)> = Vec::new();
            for c in cells {
                match merged.last_mut() {
                    Some(last) if c.3.max(last.3) - c.2.min(last.2) <= target => {
                        last.1 = c.1;
                        last.2 = last.2.min(c.2);
                        last.3 = last.3.max(c.3);
                    }
                    _ => merged.push(c),
                }
            }
            out.extend(merged.into_iter().map(|(lo, hi, _, _)| Interval { lo, hi }));
        }
        Ok(out)
    }
}

fn check_unit(y: f64) -> Result<()> {
    if (0.0..=1.0).contains(&y) {
        Ok(())
    } else {
        Err(Error::Domain(format!("mode y = {y} lies outside [0, 1]")))
    }
}

fn sampled_range<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> (f64, f64) {
    const SAMPLES: usize = 33;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for i in 0..SAMPLES {
        let v = f(lo + (hi - lo) * i as f64 / (SAMPLES - 1) as f64);
        min = min.min(v);
        max = max.max(v);
    }
    (min, max)
}

fn cover<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, target: f64, depth: u32, out: &mut Vec<(f64, f64, f64, f64)>) {
    let (min, max) = sampled_range(f, lo, hi);
    if max - min <= target || depth == 0 {
        out.push((lo, hi, min, max));
        return;
    }
    let mid = 0.5 * (lo + hi);
    cover(f, lo, mid, target, depth - 1, out);
    cover(f, mid, hi, target, depth - 1, out);
}

fn half_level_crossings<F: Fn(f64) -> f64>(l: &F) -> Vec<f64> {
    const SCAN: usize = 1 << 14;
    let sign = |y: f64| {
        let d = l(y) - 0.5;
        if d > 0.0 {
            1i8
        } else if d < 0.0 {
            -1
        } else {
            0
        }
    };
    let mut out = Vec::new();
    let mut last: Option<(f64, i8)> = None;
    for i in 0..=SCAN {
        let y = i as f64 / SCAN as f64;
        let s = sign(y);
        if s == 0 {
            continue;
        }
        if let Some((ly, ls)) = last {
            if ls != s {
                let (mut a, mut b) = (ly, y);
                for _ in 0..80 {
                    let m = 0.5 * (a + b);
                    if sign(m) == ls {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                let root = 0.5 * (a + b);
                if root > 0.0 && root < 1.0 {
                    out.push(root);
                }
            }
        }
        last = Some((y, s));
    }
    out
}

/// Chemical potential at which the particle density equals `r`.
///
/// Brackets geometrically around a heuristic start, then bisects; `tol` bounds
/// `|m(μ) − r|`. Bose brackets are clamped below `min ω₀ − 1e−12`.
pub fn solve_mu(stats: Statistics, dispersion: &Dispersion, beta: f64, r: f64, tol: f64) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidEnsemble(format!("β must be positive and finite, got {beta}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let in_range = match stats {
        Statistics::Fermi => r > 0.0 && r < 1.0,
        Statistics::Bose => r > 0.0 && r.is_finite(),
    };
    if !in_range {
        return Err(Error::Range(format!("density {r} is outside the range of μ ↦ m for {stats}")));
    }
    let quad_tol = (tol * 1e-3).min(DEFAULT_QUAD_TOL);
    let excess = |mu: f64| -> Result<f64> {
        let spec = EnsembleSpec::new(stats, beta, mu, dispersion.clone())?;
        Ok(spec.particle_density(quad_tol)? - r)
    };

    const EXPANSIONS: u32 = 60;
    let (lo_base, hi_base) = (dispersion.min_base_energy(), dispersion.max_base_energy());
    let upper = match stats {
        Statistics::Bose => Some(lo_base - 1e-12),
        Statistics::Fermi => None,
    };
    let start = match stats {
        Statistics::Fermi => lo_base + r * (hi_base - lo_base),
        Statistics::Bose => lo_base - 1.0,
    };
    // Near the bottom of the band the Bose density blows up and the quadrature
    // gives out; such points lie above any finite target.
    let excess_hi = |mu: f64| match excess(mu) {
        Err(Error::Numeric(_)) if upper.is_some() => Ok(f64::INFINITY),
        other => other,
    };
    // Bose brackets approach the band bottom geometrically.
    let step_hi = |hi: f64, width: f64| match upper {
        Some(u) => u - 0.25 * (u - hi),
        None => hi + width,
    };
    let mut lo = start - 1.0;
    let mut hi = match upper {
        Some(u) => u - 0.5,
        None => start + 1.0,
    };
    let mut width = 1.0;
    let mut f_lo = excess(lo)?;
    let mut f_hi = excess_hi(hi)?;
    let mut rounds = 0;
    while f_lo > 0.0 || f_hi < 0.0 {
        if rounds == EXPANSIONS {
            return Err(Error::Range(format!("density {r} not bracketed after {EXPANSIONS} expansions")));
        }
        rounds += 1;
        width *= 2.0;
        if f_lo > 0.0 {
            lo -= width;
            f_lo = excess(lo)?;
        }
        if f_hi < 0.0 {
            hi = step_hi(hi, width);
            f_hi = excess_hi(hi)?;
        }
    }

    let mut best = if f_lo.abs() < f_hi.abs() { (lo, f_lo) } else { (hi, f_hi) };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = excess_hi(mid)?;
        if f_mid.abs() < best.1.abs() {
            best = (mid, f_mid);
        }
        if f_mid == 0.0 || hi - lo < 1e-15 * mid.abs().max(1.0) {
            break;
        }
        if f_mid < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.1.abs() < tol {
        Ok(best.0)
    } else {
        Err(Error::Numeric(format!("bisection stalled at μ = {} with |m − r| = {:e}", best.0, best.1.abs())))
    }
}
