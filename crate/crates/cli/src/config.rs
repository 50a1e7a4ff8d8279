//! Flat `section.key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gibbslz::ensemble::solve_mu;
use gibbslz::{Dispersion, EnsembleKind, EnsembleSpec, ParticleTarget, Statistics, TypicalRule};
use sha2::{Digest, Sha256};

use crate::output::Format;
use crate::CliError;

const KEYS: &[&str] = &[
    "ensemble.stats",
    "ensemble.beta",
    "ensemble.dispersion",
    "ensemble.grid",
    "ensemble.grid_file",
    "ensemble.mu",
    "ensemble.density",
    "run.lengths",
    "run.replicas",
    "run.seed",
    "run.kind",
    "analysis.epsilon",
    "analysis.quad_tol",
    "analysis.out",
    "analysis.format",
    "analysis.typical",
    "analysis.gap_budget",
    "analysis.converge_gap",
    "analysis.record_timing",
    "check.scale",
    "check.inject_fault",
];

/// How the chemical potential is fixed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Chemical {
    Mu(f64),
    Density(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Labels a non-log-concave pmf as log-concave.
    LogConcavity,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub stats: Statistics,
    pub beta: f64,
    pub dispersion: Dispersion,
    pub chemical: Chemical,
    pub lengths: Vec<usize>,
    pub replicas: u64,
    pub seed: u64,
    pub kinds: Vec<EnsembleKind>,
    pub epsilon: f64,
    pub quad_tol: f64,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub typical: TypicalRule,
    /// Largest `ℓ · (n + 1) · (K_max + 1)` attempted by exact entropy gaps.
    pub gap_budget: f64,
    pub converge_gap: bool,
    pub record_timing: bool,
    pub check_scale: f64,
    pub inject_fault: Option<Fault>,
    canonical: BTreeMap<String, String>,
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_entries(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut entries = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) =
            line.split_once('=').ok_or_else(|| CliError::Config(format!("line {}: expected 'key = value'", no + 1)))?;
        insert_entry(&mut entries, key, value)?;
    }
    Ok(entries)
}

fn insert_entry(entries: &mut BTreeMap<String, String>, key: &str, value: &str) -> Result<(), CliError> {
    let key = key.trim().to_ascii_lowercase();
    if !KEYS.contains(&key.as_str()) {
        return Err(CliError::Config(format!("unknown key '{key}'")));
    }
    if entries.insert(key.clone(), value.trim().to_string()).is_some() {
        return Err(CliError::Config(format!("duplicate key '{key}'")));
    }
    Ok(())
}

/// Applies `key=value` overrides on top of file entries.
pub fn apply_overrides(entries: &mut BTreeMap<String, String>, overrides: &[String]) -> Result<(), CliError> {
    for o in overrides {
        let (key, value) =
            o.split_once('=').ok_or_else(|| CliError::Config(format!("override '{o}' is not key=value")))?;
        entries.remove(&key.trim().to_ascii_lowercase());
        insert_entry(entries, key, value)?;
    }
    Ok(())
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| CliError::Config(format!("{key}: '{value}': {e}")))
}

fn boolean(key: &str, value: &str) -> Result<bool, CliError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(CliError::Config(format!("{key}: '{value}' is not a boolean"))),
    }
}

/// Accepts `1024` or `2^10`.
fn length(value: &str) -> Result<usize, CliError> {
    let v = value.trim();
    let parsed = match v.split_once('^') {
        Some((base, exp)) => {
            let b: usize = number("run.lengths", base.trim())?;
            let e: u32 = number("run.lengths", exp.trim())?;
            b.checked_pow(e)
        }
        None => Some(number("run.lengths", v)?),
    };
    parsed.ok_or_else(|| CliError::Config(format!("run.lengths: '{v}' overflows")))
}

fn floats(key: &str, text: &str) -> Result<Vec<f64>, CliError> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| number::<f64>(key, t))
        .collect()
}

impl ExperimentConfig {
    /// Reads a config file (if any) and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let (mut entries, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                (parse_entries(&text)?, p.parent().map(Path::to_path_buf))
            }
            None => (BTreeMap::new(), None),
        };
        apply_overrides(&mut entries, overrides)?;
        Self::from_entries(&entries, base.as_deref())
    }

    pub fn from_entries(entries: &BTreeMap<String, String>, base: Option<&Path>) -> Result<Self, CliError> {
        let get = |k: &str| entries.get(k).map(String::as_str);
        let stats: Statistics = get("ensemble.stats")
            .unwrap_or("fermi")
            .parse()
            .map_err(|e: gibbslz::Error| CliError::Config(e.to_string()))?;
        let beta: f64 = number("ensemble.beta", get("ensemble.beta").unwrap_or("1"))?;

        let dispersion = match get("ensemble.dispersion").unwrap_or("cosine").to_ascii_lowercase().as_str() {
            "cosine" => {
                if get("ensemble.grid").is_some() || get("ensemble.grid_file").is_some() {
                    return Err(CliError::Config("grid values given for the cosine dispersion".into()));
                }
                Dispersion::CosineLattice
            }
            "grid" => {
                let values = match (get("ensemble.grid"), get("ensemble.grid_file")) {
                    (Some(v), None) => floats("ensemble.grid", v)?,
                    (None, Some(f)) => {
                        let path = base.map_or_else(|| PathBuf::from(f), |b| b.join(f));
                        let text = std::fs::read_to_string(&path)
                            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                        floats("ensemble.grid_file", &text)?
                    }
                    _ => {
                        return Err(CliError::Config(
                            "grid dispersion needs exactly one of ensemble.grid or ensemble.grid_file".into(),
                        ))
                    }
                };
                Dispersion::tabulated(values).map_err(|e| CliError::Config(e.to_string()))?
            }
            other => return Err(CliError::Config(format!("ensemble.dispersion: unknown form '{other}'"))),
        };

        let chemical = match (get("ensemble.mu"), get("ensemble.density")) {
            (Some(mu), None) => Chemical::Mu(number("ensemble.mu", mu)?),
            (None, Some(r)) => Chemical::Density(number("ensemble.density", r)?),
            _ => return Err(CliError::Config("exactly one of ensemble.mu and ensemble.density is required".into())),
        };

        let lengths = get("run.lengths")
            .unwrap_or("1024")
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(length)
            .collect::<Result<Vec<_>, _>>()?;
        if lengths.is_empty() || lengths[0] < 2 || lengths.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Config("run.lengths must be a strictly increasing list of values ≥ 2".into()));
        }
        let replicas: u64 = number("run.replicas", get("run.replicas").unwrap_or("20"))?;
        if replicas == 0 {
            return Err(CliError::Config("run.replicas must be at least 1".into()));
        }
        let seed: u64 = number("run.seed", get("run.seed").unwrap_or("0"))?;
        let kinds = match get("run.kind").unwrap_or("grand").to_ascii_lowercase().as_str() {
            "both" => vec![EnsembleKind::Grand, EnsembleKind::Canonical],
            k => vec![k.parse().map_err(|e: gibbslz::Error| CliError::Config(e.to_string()))?],
        };

        let epsilon: f64 = number("analysis.epsilon", get("analysis.epsilon").unwrap_or("0.3"))?;
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(CliError::Config("analysis.epsilon must lie in (0, 1)".into()));
        }
        let quad_tol: f64 = number("analysis.quad_tol", get("analysis.quad_tol").unwrap_or("1e-9"))?;
        if !(quad_tol > 0.0) {
            return Err(CliError::Config("analysis.quad_tol must be positive".into()));
        }
        let out = get("analysis.out").map(PathBuf::from);
        let format: Format = get("analysis.format").unwrap_or("csv").parse()?;
        let typical: TypicalRule = get("analysis.typical")
            .unwrap_or("one-sided")
            .parse()
            .map_err(|e: gibbslz::Error| CliError::Config(e.to_string()))?;
        let gap_budget: f64 = number("analysis.gap_budget", get("analysis.gap_budget").unwrap_or("1e8"))?;
        let converge_gap = boolean("analysis.converge_gap", get("analysis.converge_gap").unwrap_or("false"))?;
        let record_timing = boolean("analysis.record_timing", get("analysis.record_timing").unwrap_or("false"))?;
        let check_scale: f64 = number("check.scale", get("check.scale").unwrap_or("1"))?;
        if !(check_scale > 0.0) {
            return Err(CliError::Config("check.scale must be positive".into()));
        }
        let inject_fault = match get("check.inject_fault").map(str::to_ascii_lowercase).as_deref() {
            None | Some("none") | Some("") => None,
            Some("lc") => Some(Fault::LogConcavity),
            Some(other) => return Err(CliError::Config(format!("check.inject_fault: unknown fault '{other}'"))),
        };

        let mut canonical = BTreeMap::new();
        canonical.insert("ensemble.stats".into(), stats.to_string());
        canonical.insert("ensemble.beta".into(), beta.to_string());
        canonical.insert(
            "ensemble.dispersion".into(),
            match &dispersion {
                Dispersion::CosineLattice => "cosine".to_string(),
                Dispersion::TabulatedGrid(v) => {
                    let mut s = String::from("grid:");
                    for x in v {
                        let _ = write!(s, "{x},");
                    }
                    s
                }
            },
        );
        match chemical {
            Chemical::Mu(mu) => canonical.insert("ensemble.mu".into(), mu.to_string()),
            Chemical::Density(r) => canonical.insert("ensemble.density".into(), r.to_string()),
        };
        canonical.insert("run.lengths".into(), lengths.iter().map(usize::to_string).collect::<Vec<_>>().join(","));
        canonical.insert("run.replicas".into(), replicas.to_string());
        canonical.insert("run.seed".into(), seed.to_string());
        canonical.insert("run.kind".into(), kinds.iter().map(|k| k.name()).collect::<Vec<_>>().join("+"));
        canonical.insert("analysis.epsilon".into(), epsilon.to_string());
        canonical.insert("analysis.quad_tol".into(), quad_tol.to_string());
        canonical.insert("analysis.typical".into(), format!("{typical:?}"));
        canonical.insert("analysis.gap_budget".into(), gap_budget.to_string());
        canonical.insert("analysis.converge_gap".into(), converge_gap.to_string());
        canonical.insert("analysis.record_timing".into(), record_timing.to_string());
        canonical.insert("check.scale".into(), check_scale.to_string());
        canonical.insert("check.inject_fault".into(), format!("{inject_fault:?}"));

        Ok(Self {
            stats,
            beta,
            dispersion,
            chemical,
            lengths,
            replicas,
            seed,
            kinds,
            epsilon,
            quad_tol,
            out,
            format,
            typical,
            gap_budget,
            converge_gap,
            record_timing,
            check_scale,
            inject_fault,
            canonical,
        })
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.canonical.insert("run.seed".into(), seed.to_string());
    }

    /// Resolved settings that determine results; output location and format are excluded.
    pub fn canonical_entries(&self) -> &BTreeMap<String, String> {
        &self.canonical
    }

    /// First 16 hex digits of the SHA-256 of the canonical settings.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.canonical {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// The ensemble, solving for μ when a density was given.
    pub fn spec(&self) -> Result<EnsembleSpec, CliError> {
        let mu = match self.chemical {
            Chemical::Mu(mu) => mu,
            Chemical::Density(r) => solve_mu(self.stats, &self.dispersion, self.beta, r, self.quad_tol.max(1e-12))?,
        };
        Ok(EnsembleSpec::new(self.stats, self.beta, mu, self.dispersion.clone())?)
    }

    /// Target density: the configured one, or `m(μ)`.
    pub fn target(&self, spec: &EnsembleSpec) -> Result<ParticleTarget, CliError> {
        let r = match self.chemical {
            Chemical::Density(r) => r,
            Chemical::Mu(_) => spec.particle_density(self.quad_tol)?,
        };
        Ok(ParticleTarget::new(self.stats, r)?)
    }
}
