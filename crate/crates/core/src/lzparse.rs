//! LZ78 incremental parsing, the rate statistic `(log₂ ℓ / ℓ)·C`, and
//! typical-set classification of parsed words.

use std::collections::{BTreeMap, HashMap};

use crate::ensemble::EnsembleSpec;
use crate::{Error, Result};

/// One parsed word: `values[start .. start + len]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Word {
    pub start: usize,
    pub len: usize,
    /// False only for a trailing word that repeats a dictionary entry.
    pub complete: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LzParse {
    words: Vec<Word>,
    dictionary_size: usize,
    len: usize,
}

impl LzParse {
    pub fn words(&self) -> &[Word] {
        &self.words
    }

    /// `C`, counting a trailing duplicate word.
    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    /// Number of distinct words stored in the trie.
    pub fn dictionary_size(&self) -> usize {
        self.dictionary_size
    }

    /// Length of the parsed string.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `(log₂ ℓ / ℓ) · C` for the parsed length.
    pub fn rate(&self) -> Result<f64> {
        lz_rate(self, self.len)
    }

    /// Word length → number of words of that length.
    pub fn word_lengths_histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for w in &self.words {
            *h.entry(w.len).or_insert(0) += 1;
        }
        h
    }
}

/// Shortest-new-word LZ78 parsing over an unbounded integer alphabet.
pub fn lz78_parse(values: &[u32]) -> LzParse {
    // Node 0 is the empty word; children are keyed by (parent, symbol).
    let mut children: HashMap<(u32, u32), u32> = HashMap::with_capacity(values.len() / 4 + 1);
    let mut next_node: u32 = 1;
    let mut words = Vec::new();
    let mut start = 0;
    let mut node = 0u32;
    for (i, &sym) in values.iter().enumerate() {
        match children.get(&(node, sym)) {
            Some(&child) => node = child,
            None => {
                children.insert((node, sym), next_node);
                next_node += 1;
                words.push(Word { start, len: i + 1 - start, complete: true });
                start = i + 1;
                node = 0;
            }
        }
    }
    if start < values.len() {
        words.push(Word { start, len: values.len() - start, complete: false });
    }
    LzParse { words, dictionary_size: children.len(), len: values.len() }
}

/// `(log₂ ℓ / ℓ) · C`.
pub fn lz_rate(parse: &LzParse, len: usize) -> Result<f64> {
    if len < 2 {
        return Err(Error::Domain(format!("rate needs ℓ ≥ 2, got {len}")));
    }
    let l = len as f64;
    Ok(parse.word_count() as f64 * l.log2() / l)
}

/// Mean and entropy profiles `l(j/ℓ)`, `g(j/ℓ)` of a length-ℓ string.
#[derive(Clone, Debug)]
pub struct SiteProfile {
    pub mean: Vec<f64>,
    pub entropy: Vec<f64>,
}

impl SiteProfile {
    pub fn new(spec: &EnsembleSpec, len: usize) -> Result<Self> {
        let mut mean = Vec::with_capacity(len);
        let mut entropy = Vec::with_capacity(len);
        for j in 0..len {
            let y = j as f64 / len as f64;
            mean.push(spec.mean_occupancy(y)?);
            entropy.push(spec.site_entropy(y)?);
        }
        Ok(Self { mean, entropy })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// `E⁽ℓ⁾(r)`: the sum of `g(u/ℓ)` over the sites of each word.
pub fn word_ensemble_entropy(parse: &LzParse, spec: &EnsembleSpec, len: usize) -> Result<Vec<f64>> {
    if parse.len() != len {
        return Err(Error::Domain(format!("parse covers {} sites, not ℓ = {len}", parse.len())));
    }
    let profile = SiteProfile::new(spec, len)?;
    Ok(word_entropies(parse, &profile))
}

fn word_entropies(parse: &LzParse, profile: &SiteProfile) -> Vec<f64> {
    parse.words().iter().map(|w| profile.entropy[w.start..w.start + w.len].iter().sum()).collect()
}

/// Form of the window deviation test.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TypicalRule {
    /// `Σ (k_i − l_i) ≤ M ε′`.
    #[default]
    OneSided,
    /// `|Σ (k_i − l_i)| ≤ M ε′`.
    Absolute,
}

impl std::str::FromStr for TypicalRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "one-sided" | "one_sided" | "onesided" => Ok(TypicalRule::OneSided),
            "absolute" | "abs" | "two-sided" | "symmetric" => Ok(TypicalRule::Absolute),
            other => Err(Error::Domain(format!("unknown typical-set rule '{other}'"))),
        }
    }
}

/// Parameters of the typical set: `ε`, `ε′ = ε e_L / (2L)`, `L = sup l`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TypicalParams {
    pub eps: f64,
    pub eps_prime: f64,
    pub sup_mean: f64,
    pub rule: TypicalRule,
}

impl TypicalParams {
    pub fn new(spec: &EnsembleSpec, eps: f64) -> Result<Self> {
        let (sup_mean, eps_prime) = spec.typical_tolerance(eps)?;
        if !(eps_prime > 0.0 && sup_mean.is_finite()) {
            return Err(Error::InvalidEnsemble(format!("degenerate typical tolerance ε′ = {eps_prime}")));
        }
        Ok(Self { eps, eps_prime, sup_mean, rule: TypicalRule::OneSided })
    }

    pub fn with_rule(mut self, rule: TypicalRule) -> Self {
        self.rule = rule;
        self
    }

    fn accepts(&self, deviation: f64, m: usize) -> bool {
        let bound = m as f64 * self.eps_prime;
        match self.rule {
            TypicalRule::OneSided => deviation <= bound,
            TypicalRule::Absolute => deviation.abs() <= bound,
        }
    }
}

fn window_deviation(values: &[u32], mean: &[f64], j: usize, m: usize) -> f64 {
    values[j..j + m].iter().zip(&mean[j..j + m]).map(|(&k, &l)| f64::from(k) - l).sum()
}

fn check_window(values: &[u32], j: usize, m: usize, len: usize) -> Result<()> {
    if values.len() != len {
        return Err(Error::Domain(format!("string has {} sites, not ℓ = {len}", values.len())));
    }
    match j.checked_add(m) {
        Some(end) if end <= len => Ok(()),
        _ => Err(Error::Domain(format!("window [{j}, {j}+{m}) exceeds ℓ = {len}"))),
    }
}

/// Whether the window `[j, j + m)` of `values` passes the deviation test.
pub fn typical_membership(
    values: &[u32],
    j: usize,
    m: usize,
    params: &TypicalParams,
    spec: &EnsembleSpec,
    len: usize,
) -> Result<bool> {
    check_window(values, j, m, len)?;
    let mean = (j..j + m).map(|i| spec.mean_occupancy(i as f64 / len as f64)).collect::<Result<Vec<_>>>()?;
    let deviation: f64 = values[j..j + m].iter().zip(&mean).map(|(&k, &l)| f64::from(k) - l).sum();
    Ok(params.accepts(deviation, m))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WordClassCounts {
    /// `E⁽ℓ⁾(r) ≤ (1 − ε) log₂ ℓ` and the word's window is typical.
    pub low_entropy_typical: usize,
    /// The word's window fails the deviation test.
    pub non_typical: usize,
    /// Typical words of high ensemble entropy.
    pub other: usize,
}

impl WordClassCounts {
    pub fn total(&self) -> usize {
        self.low_entropy_typical + self.non_typical + self.other
    }
}

/// Splits the words of `parse` by ensemble entropy and typicality.
pub fn classify_words(
    parse: &LzParse,
    values: &[u32],
    spec: &EnsembleSpec,
    params: &TypicalParams,
    len: usize,
) -> Result<WordClassCounts> {
    if parse.len() != len {
        return Err(Error::Domain(format!("parse covers {} sites, not ℓ = {len}", parse.len())));
    }
    let profile = SiteProfile::new(spec, len)?;
    classify_with_profile(parse, values, &profile, params)
}

/// [`classify_words`] against a precomputed profile.
pub fn classify_with_profile(
    parse: &LzParse,
    values: &[u32],
    profile: &SiteProfile,
    params: &TypicalParams,
) -> Result<WordClassCounts> {
    let len = profile.len();
    let threshold = (1.0 - params.eps) * (len.max(1) as f64).log2();
    let mut counts = WordClassCounts::default();
    for (w, e) in parse.words().iter().zip(word_entropies(parse, profile)) {
        check_window(values, w.start, w.len, len)?;
        let typical = params.accepts(window_deviation(values, &profile.mean, w.start, w.len), w.len);
        if !typical {
            counts.non_typical += 1;
        } else if e <= threshold {
            counts.low_entropy_typical += 1;
        } else {
            counts.other += 1;
        }
    }
    Ok(counts)
}
