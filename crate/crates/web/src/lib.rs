//! Browser bindings: marginal profiles, LZ78 rate curves and exact entropy gaps.
//!
//! Every export returns a JSON string. Failures come back as `{"error": "..."}`.

use gibbslz::disttab::entropy_gap;
use gibbslz::ensemble::{Dispersion, EnsembleSpec, Statistics};
use gibbslz::lzparse::{lz78_parse, lz_rate};
use gibbslz::sampler::{marginal_tables, replica_rng, CanonicalSampler, GrandSampler, ParticleTarget};
use gibbslz::{Error, Result};
use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

const QUAD_TOL: f64 = 1e-9;
const MAX_LOG2_LEN: u32 = 16;
const GAP_WORK_BUDGET: f64 = 2e7;

fn ensemble(stats: &str, beta: f64, mode: &str, value: f64) -> Result<EnsembleSpec> {
    let stats: Statistics = stats.parse()?;
    match mode {
        "mu" => EnsembleSpec::new(stats, beta, value, Dispersion::CosineLattice),
        "density" => EnsembleSpec::with_density(stats, beta, value, Dispersion::CosineLattice, QUAD_TOL),
        other => Err(Error::Domain(format!("unknown mode '{other}', expected mu or density"))),
    }
}

fn finish(r: Result<Value>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

/// Occupancy `l(y)` and site entropy `g(y)` on `points` momenta, with `m`, `h` and `μ`.
pub fn profile_value(stats: &str, beta: f64, mode: &str, value: f64, points: usize) -> Result<Value> {
    let spec = ensemble(stats, beta, mode, value)?;
    let points = points.clamp(2, 2000);
    let mut ys = Vec::with_capacity(points);
    let mut ls = Vec::with_capacity(points);
    let mut gs = Vec::with_capacity(points);
    for i in 0..points {
        let y = i as f64 / (points - 1) as f64;
        ys.push(y);
        ls.push(spec.mean_occupancy(y)?);
        gs.push(spec.site_entropy(y)?);
    }
    Ok(json!({
        "stats": spec.stats().name(),
        "beta": spec.beta(),
        "mu": spec.mu(),
        "density": spec.particle_density(QUAD_TOL)?,
        "rate": spec.entropy_rate(QUAD_TOL)?,
        "y": ys,
        "l": ls,
        "g": gs,
    }))
}

/// Mean LZ78 rate and its standard error at `ℓ = 2^6 … 2^max_log2`.
#[allow(clippy::too_many_arguments)]
pub fn rate_curve_value(
    stats: &str,
    beta: f64,
    mode: &str,
    value: f64,
    kind: &str,
    max_log2: u32,
    replicas: u32,
    seed: u64,
) -> Result<Value> {
    let spec = ensemble(stats, beta, mode, value)?;
    let density = spec.particle_density(QUAD_TOL)?;
    let target = ParticleTarget::new(spec.stats(), density)?;
    let replicas = replicas.clamp(1, 200) as u64;
    let mut rows = Vec::new();
    for k in 6..=max_log2.clamp(6, MAX_LOG2_LEN) {
        let len = 1usize << k;
        let n = target.particles(len);
        let seed = seed ^ (len as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut rates = Vec::with_capacity(replicas as usize);
        let mut values = Vec::with_capacity(len);
        match kind {
            "grand" => {
                let sampler = GrandSampler::new(&spec, len)?;
                for r in 0..replicas {
                    sampler.draw(&mut replica_rng(seed, r), &mut values);
                    rates.push(lz_rate(&lz78_parse(&values), len)?);
                }
            }
            "canonical" => {
                let sampler = CanonicalSampler::new(&spec, len, n)?;
                for r in 0..replicas {
                    sampler.draw(&mut replica_rng(seed, r), &mut values)?;
                    rates.push(lz_rate(&lz78_parse(&values), len)?);
                }
            }
            other => return Err(Error::Domain(format!("unknown kind '{other}', expected grand or canonical"))),
        }
        let (mean, se) = mean_and_se(&rates);
        rows.push(json!({ "ell": len, "n": n, "mean": mean, "se": se }));
    }
    Ok(json!({ "h": spec.entropy_rate(QUAD_TOL)?, "kind": kind, "points": rows }))
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Exact `δ(ℓ, n)/ℓ` at `ℓ = 2^3 … 2^max_log2`, stopping at the first length over budget.
pub fn gap_curve_value(stats: &str, beta: f64, mode: &str, value: f64, max_log2: u32) -> Result<Value> {
    let spec = ensemble(stats, beta, mode, value)?;
    let target = ParticleTarget::new(spec.stats(), spec.particle_density(QUAD_TOL)?)?;
    let mut rows = Vec::new();
    let mut skipped = None;
    for k in 3..=max_log2.clamp(3, MAX_LOG2_LEN) {
        let len = 1usize << k;
        let n = target.particles(len);
        let marginals = marginal_tables(&spec, len)?;
        let kmax = marginals.iter().map(|m| m.support_max()).max().unwrap_or(0);
        let work = len as f64 * (n + 1) as f64 * (kmax + 1) as f64;
        if work > GAP_WORK_BUDGET {
            skipped = Some(len);
            break;
        }
        let delta = entropy_gap(&marginals, n)?;
        rows.push(json!({ "ell": len, "n": n, "delta": delta, "delta_per_site": delta / len as f64 }));
    }
    Ok(json!({ "points": rows, "skipped_from": skipped }))
}

#[wasm_bindgen]
pub fn profile(stats: &str, beta: f64, mode: &str, value: f64, points: usize) -> String {
    finish(profile_value(stats, beta, mode, value, points))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn rate_curve(
    stats: &str,
    beta: f64,
    mode: &str,
    value: f64,
    kind: &str,
    max_log2: u32,
    replicas: u32,
    seed: u64,
) -> String {
    finish(rate_curve_value(stats, beta, mode, value, kind, max_log2, replicas, seed))
}

#[wasm_bindgen]
pub fn gap_curve(stats: &str, beta: f64, mode: &str, value: f64, max_log2: u32) -> String {
    finish(gap_curve_value(stats, beta, mode, value, max_log2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_filled_fermi_profile() {
        let v = profile_value("fermi", 1.0, "mu", 1.0, 101).unwrap();
        assert!((v["density"].as_f64().unwrap() - 0.5).abs() < 1e-9);
        let l = v["l"].as_array().unwrap();
        assert_eq!(l.len(), 101);
        // l(1/4) = 1/2 when μ equals ω₀(1/4) = 1.
        assert!((l[25].as_f64().unwrap() - 0.5).abs() < 1e-12);
        assert!((v["g"][25].as_f64().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn density_mode_solves_for_mu() {
        let v = profile_value("bose", 2.0, "density", 0.3, 11).unwrap();
        assert!((v["density"].as_f64().unwrap() - 0.3).abs() < 1e-7);
        assert!(v["mu"].as_f64().unwrap() < 0.0);
    }

    #[test]
    fn rate_curve_is_deterministic() {
        let a = rate_curve("fermi", 1.0, "mu", 1.0, "canonical", 8, 3, 7);
        assert_eq!(a, rate_curve("fermi", 1.0, "mu", 1.0, "canonical", 8, 3, 7));
        let v: Value = serde_json::from_str(&a).unwrap();
        assert_eq!(v["points"].as_array().unwrap().len(), 3);
        assert!(v["points"][0]["mean"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn gap_curve_matches_binomial_count() {
        // Constant band: the conditioned law is uniform over C(ℓ, n) strings.
        let spec = EnsembleSpec::new(Statistics::Fermi, 1.0, 0.0, Dispersion::constant(0.0).unwrap()).unwrap();
        let m = marginal_tables(&spec, 8).unwrap();
        let d = entropy_gap(&m, 4).unwrap();
        assert!((d - (70f64.log2() - 8.0)).abs() < 1e-12);

        let v = gap_curve_value("fermi", 1.0, "mu", 1.0, 8).unwrap();
        for p in v["points"].as_array().unwrap() {
            assert!(p["delta"].as_f64().unwrap() < 0.0);
        }
    }

    #[test]
    fn errors_come_back_as_json() {
        let v: Value = serde_json::from_str(&profile("anyon", 1.0, "mu", 1.0, 10)).unwrap();
        assert!(v["error"].as_str().unwrap().contains("anyon"));
        let v: Value = serde_json::from_str(&gap_curve("fermi", 1.0, "chemical", 1.0, 8)).unwrap();
        assert!(v.get("error").is_some());
    }
}
