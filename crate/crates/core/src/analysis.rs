//! Downstream statistics: Pareto factor attribution, Majority@K bootstrap
//! variance, relative performance drop, Distinct-N, Min-K%, signed R², and
//! Spearman correlation.
//!
//! Everything here is pure and deterministic given seeds; bootstrap trials
//! use per-trial derived RNG streams.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{mean, pearson, population_std};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("factor table is empty")]
    EmptyTable,

    #[error("row {row} does not assign factor {factor}")]
    MissingFactor { row: usize, factor: String },

    #[error("row {row} uses level {level} outside the domain of factor {factor}")]
    UnknownLevel {
        row: usize,
        factor: String,
        level: String,
    },

    #[error("BF values must be >= 1, got {0}")]
    BfBelowOne(f64),

    #[error("level {level} of factor {factor} appears in no row")]
    LevelUnobserved { factor: String, level: String },

    #[error("vote pool is empty")]
    EmptyPool,

    #[error("instance {0} has an empty answer pool")]
    EmptyAnswers(String),

    #[error("K={k} exceeds samples_per_trial={samples_per_trial}")]
    KExceedsDraws { k: usize, samples_per_trial: usize },

    #[error("need at least one trial and one K")]
    EmptyBootstrapSpec,

    #[error("config {0} missing from accuracy grid")]
    ConfigMissing(String),

    #[error("undefined value: {0}")]
    UndefinedValue(String),

    #[error("n must be >= 1 for n-gram statistics")]
    InvalidNgramOrder,

    #[error("no text has at least {0} tokens")]
    NoTextLongEnough(usize),

    #[error("token logprob list is empty")]
    EmptyLogprobs,

    #[error("K percent must be in (0, 100], got {0}")]
    InvalidKPercent(f64),

    #[error("need at least 3 paired observations, got {0}")]
    TooFewObservations(usize),

    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("degenerate variance in {0}")]
    DegenerateVariance(&'static str),

    #[error("inputs must be finite")]
    NonFinite,

    #[error("invalid extractor pattern: {0}")]
    InvalidPattern(#[from] regex::Error),
}

// ---------------------------------------------------------------------------
// Pareto factor attribution
// ---------------------------------------------------------------------------

/// One experimental configuration and its measured BF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorRow {
    pub levels: BTreeMap<String, String>,
    pub bf: f64,
}

/// BF measurements across factor assignments plus the declared level domains.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorTable {
    rows: Vec<FactorRow>,
    factor_domains: BTreeMap<String, Vec<String>>,
}

impl FactorTable {
    /// Validates that every row assigns every declared factor to a declared
    /// level and that BF values are >= 1.
    pub fn new(
        rows: Vec<FactorRow>,
        factor_domains: BTreeMap<String, Vec<String>>,
    ) -> Result<Self, AnalysisError> {
        for (i, row) in rows.iter().enumerate() {
            if row.bf < 1.0 - 1e-9 {
                return Err(AnalysisError::BfBelowOne(row.bf));
            }
            for (factor, domain) in &factor_domains {
                match row.levels.get(factor) {
                    None => {
                        return Err(AnalysisError::MissingFactor {
                            row: i,
                            factor: factor.clone(),
                        })
                    }
                    Some(level) if !domain.contains(level) => {
                        return Err(AnalysisError::UnknownLevel {
                            row: i,
                            factor: factor.clone(),
                            level: level.clone(),
                        })
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(Self {
            rows,
            factor_domains,
        })
    }

    /// Builds a table inferring each factor's domain from the observed levels.
    pub fn from_rows(rows: Vec<FactorRow>) -> Result<Self, AnalysisError> {
        let mut domains: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for row in &rows {
            for (factor, level) in &row.levels {
                let levels = domains.entry(factor.clone()).or_default();
                if !levels.contains(level) {
                    levels.push(level.clone());
                }
            }
        }
        for levels in domains.values_mut() {
            levels.sort();
        }
        Self::new(rows, domains)
    }

    pub fn rows(&self) -> &[FactorRow] {
        &self.rows
    }

    pub fn factor_domains(&self) -> &BTreeMap<String, Vec<String>> {
        &self.factor_domains
    }
}

/// Raw and normalized per-factor impacts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParetoReport {
    pub raw_impacts: BTreeMap<String, f64>,
    /// Sums to 1 whenever any raw impact is positive; all zeros otherwise.
    pub normalized: BTreeMap<String, f64>,
}

fn level_means(
    table: &FactorTable,
    factor: &str,
    domain: &[String],
) -> Result<Vec<f64>, AnalysisError> {
    let mut means = Vec::with_capacity(domain.len());
    for level in domain {
        let values: Vec<f64> = table
            .rows
            .iter()
            .filter(|r| r.levels.get(factor).map(String::as_str) == Some(level))
            .map(|r| r.bf)
            .collect();
        if values.is_empty() {
            return Err(AnalysisError::LevelUnobserved {
                factor: factor.to_string(),
                level: level.clone(),
            });
        }
        means.push(mean(&values));
    }
    Ok(means)
}

fn normalize_impacts(raw: BTreeMap<String, f64>) -> ParetoReport {
    let total: f64 = raw.values().sum();
    let normalized = raw
        .iter()
        .map(|(k, v)| (k.clone(), if total > 0.0 { v / total } else { 0.0 }))
        .collect();
    ParetoReport {
        raw_impacts: raw,
        normalized,
    }
}

/// Unnormalized impact of each factor: the mean absolute pairwise difference
/// of level-mean BF over ordered level pairs, marginalizing over all rows
/// carrying each level. Single-level factors get impact 0.
pub fn pareto_impacts(table: &FactorTable) -> Result<ParetoReport, AnalysisError> {
    if table.rows.is_empty() {
        return Err(AnalysisError::EmptyTable);
    }
    let mut raw = BTreeMap::new();
    for (factor, domain) in &table.factor_domains {
        if domain.len() < 2 {
            raw.insert(factor.clone(), 0.0);
            continue;
        }
        let means = level_means(table, factor, domain)?;
        let mut total = 0.0;
        for (i, a) in means.iter().enumerate() {
            for (j, b) in means.iter().enumerate() {
                if i != j {
                    total += (a - b).abs();
                }
            }
        }
        let pairs = (domain.len() * (domain.len() - 1)) as f64;
        raw.insert(factor.clone(), total / pairs);
    }
    Ok(normalize_impacts(raw))
}

/// Matched-pairs variant: level differences are averaged only over contexts
/// (assignments of the other factors) observed for both levels, then over
/// ordered level pairs. Pairs sharing no context contribute 0.
pub fn pareto_impacts_matched(table: &FactorTable) -> Result<ParetoReport, AnalysisError> {
    if table.rows.is_empty() {
        return Err(AnalysisError::EmptyTable);
    }
    let mut raw = BTreeMap::new();
    for (factor, domain) in &table.factor_domains {
        if domain.len() < 2 {
            raw.insert(factor.clone(), 0.0);
            continue;
        }
        // context key -> level -> bf values
        let mut contexts: BTreeMap<String, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
        for row in &table.rows {
            let level = row.levels.get(factor).map(String::as_str).unwrap_or("");
            let key = row
                .levels
                .iter()
                .filter(|(f, _)| f.as_str() != factor)
                .map(|(f, l)| format!("{f}={l}"))
                .collect::<Vec<_>>()
                .join(",");
            contexts
                .entry(key)
                .or_default()
                .entry(level)
                .or_default()
                .push(row.bf);
        }
        let mut total = 0.0;
        let mut pair_count = 0usize;
        for a in domain {
            for b in domain {
                if a == b {
                    continue;
                }
                pair_count += 1;
                let diffs: Vec<f64> = contexts
                    .values()
                    .filter_map(|by_level| {
                        match (by_level.get(a.as_str()), by_level.get(b.as_str())) {
                            (Some(xs), Some(ys)) => Some((mean(xs) - mean(ys)).abs()),
                            _ => None,
                        }
                    })
                    .collect();
                if !diffs.is_empty() {
                    total += mean(&diffs);
                }
            }
        }
        raw.insert(factor.clone(), total / pair_count.max(1) as f64);
    }
    Ok(normalize_impacts(raw))
}

// ---------------------------------------------------------------------------
// Majority@K bootstrap
// ---------------------------------------------------------------------------

/// One instance's gold answer and its pool of extracted answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteInstance {
    pub instance_id: String,
    pub gold: String,
    pub answers: Vec<String>,
}

/// Per-instance answer pools for a Majority@K experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VotePool {
    pub instances: Vec<VoteInstance>,
}

/// Mean and population std of Majority@K accuracy over bootstrap trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MajorityStat {
    pub mean_accuracy: f64,
    pub std: f64,
}

/// Majority vote with a deterministic tie-break: among modal answers, the
/// one seen first in draw order wins.
fn majority_vote(draws: &[&str]) -> String {
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for (i, answer) in draws.iter().enumerate() {
        let entry = counts.entry(answer).or_insert((0, i));
        entry.0 += 1;
    }
    let mut best: Option<(&str, usize, usize)> = None;
    for (answer, (count, first)) in counts {
        let better = match best {
            None => true,
            Some((_, bc, bf)) => count > bc || (count == bc && first < bf),
        };
        if better {
            best = Some((answer, count, first));
        }
    }
    best.map(|(a, _, _)| a.to_string()).unwrap_or_default()
}

/// Bootstrap std of Majority@K accuracy: each trial draws
/// `samples_per_trial` answers per instance with replacement, Majority@K
/// votes on the first K drawn, and accuracy is the fraction of instances
/// whose vote matches gold. Deterministic given `seed`.
pub fn majority_at_k_std(
    pool: &VotePool,
    ks: &[usize],
    trials: usize,
    samples_per_trial: usize,
    seed: u64,
) -> Result<BTreeMap<usize, MajorityStat>, AnalysisError> {
    if pool.instances.is_empty() {
        return Err(AnalysisError::EmptyPool);
    }
    if ks.is_empty() || trials == 0 {
        return Err(AnalysisError::EmptyBootstrapSpec);
    }
    for instance in &pool.instances {
        if instance.answers.is_empty() {
            return Err(AnalysisError::EmptyAnswers(instance.instance_id.clone()));
        }
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > samples_per_trial) {
        return Err(AnalysisError::KExceedsDraws {
            k,
            samples_per_trial,
        });
    }

    let mut per_k_accuracy: BTreeMap<usize, Vec<f64>> =
        ks.iter().map(|&k| (k, Vec::with_capacity(trials))).collect();
    for trial in 0..trials {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        let mut correct: BTreeMap<usize, usize> = ks.iter().map(|&k| (k, 0)).collect();
        for instance in &pool.instances {
            let draws: Vec<&str> = (0..samples_per_trial)
                .map(|_| {
                    instance.answers[rng.gen_range(0..instance.answers.len())].as_str()
                })
                .collect();
            for &k in ks {
                if majority_vote(&draws[..k]) == instance.gold {
                    *correct.get_mut(&k).expect("initialized") += 1;
                }
            }
        }
        for (&k, hits) in &correct {
            per_k_accuracy
                .get_mut(&k)
                .expect("initialized")
                .push(*hits as f64 / pool.instances.len() as f64);
        }
    }
    Ok(per_k_accuracy
        .into_iter()
        .map(|(k, accs)| {
            (
                k,
                MajorityStat {
                    mean_accuracy: mean(&accs),
                    std: population_std(&accs),
                },
            )
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Scalar metrics
// ---------------------------------------------------------------------------

/// Maximum relative performance drop in percent:
/// 100·(acc(default) − acc(min)) / acc(default).
pub fn relative_drop(
    grid: &BTreeMap<String, f64>,
    default_config: &str,
    min_config: &str,
) -> Result<f64, AnalysisError> {
    let default = *grid
        .get(default_config)
        .ok_or_else(|| AnalysisError::ConfigMissing(default_config.to_string()))?;
    let min = *grid
        .get(min_config)
        .ok_or_else(|| AnalysisError::ConfigMissing(min_config.to_string()))?;
    if default == 0.0 {
        return Err(AnalysisError::UndefinedValue(
            "relative drop with zero default accuracy".into(),
        ));
    }
    Ok(100.0 * (default - min) / default)
}

/// Distinct-N: unique n-grams across all texts divided by total n-gram
/// occurrences across all texts.
pub fn distinct_n(texts: &[Vec<String>], n: usize) -> Result<f64, AnalysisError> {
    if n == 0 {
        return Err(AnalysisError::InvalidNgramOrder);
    }
    let mut unique: HashSet<&[String]> = HashSet::new();
    let mut occurrences = 0usize;
    for text in texts {
        if text.len() < n {
            continue;
        }
        for gram in text.windows(n) {
            unique.insert(gram);
            occurrences += 1;
        }
    }
    if occurrences == 0 {
        return Err(AnalysisError::NoTextLongEnough(n));
    }
    Ok(unique.len() as f64 / occurrences as f64)
}

/// Average of the ⌈K/100·n⌉ smallest token logprobs (the Min-K% signal).
pub fn min_k_percent(token_logprobs: &[f64], k_percent: f64) -> Result<f64, AnalysisError> {
    if token_logprobs.is_empty() {
        return Err(AnalysisError::EmptyLogprobs);
    }
    if !(k_percent > 0.0 && k_percent <= 100.0) {
        return Err(AnalysisError::InvalidKPercent(k_percent));
    }
    if token_logprobs.iter().any(|lp| !lp.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let n = token_logprobs.len();
    let raw = k_percent * n as f64 / 100.0;
    let count = ((raw - 1e-9).ceil() as usize).clamp(1, n);
    let mut sorted = token_logprobs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    Ok(mean(&sorted[..count]))
}

/// Signed coefficient of determination: sign(OLS slope) · R² of ys ~ xs.
pub fn signed_r2(xs: &[f64], ys: &[f64]) -> Result<f64, AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(AnalysisError::TooFewObservations(xs.len()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    match pearson(xs, ys) {
        Some(r) => Ok(r.signum() * r * r),
        None => Err(AnalysisError::DegenerateVariance("regression inputs")),
    }
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; ties share the average rank of their block.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(AnalysisError::TooFewObservations(xs.len()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    pearson(&rx, &ry)
        .ok_or(AnalysisError::UndefinedValue("spearman of constant input".into()))
}

/// Pluggable answer extraction from completion text: the last regex match
/// wins, using capture group 1 when the pattern has one.
#[derive(Debug, Clone)]
pub struct AnswerExtractor {
    pattern: Regex,
}

impl AnswerExtractor {
    pub fn from_pattern(pattern: &str) -> Result<Self, AnalysisError> {
        Ok(Self {
            pattern: Regex::new(pattern)?,
        })
    }

    pub fn extract(&self, text: &str) -> Option<String> {
        let last = self.pattern.captures_iter(text).last()?;
        let m = last.get(1).or_else(|| last.get(0))?;
        Some(m.as_str().trim().to_string())
    }
}
