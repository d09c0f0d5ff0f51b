//! Privacy/access-cost proxies computed from plain-text slices.
//!
//! A slice is a list of labeled documents (`label<TAB>text` per line). The
//! extractor measures sensitive-pattern hits, duplication (exact, repeated
//! 5-grams, near-duplicate 3-gram Jaccard), quality risk, and rarity, then a
//! weighted group sum turns features into a true proxy cost, a cheap
//! metadata-driven coarse base, and an audit-style verify base. These are
//! simulation proxies, not privacy or legal guarantees.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use crate::env::AssetTable;
use crate::types::Asset;
use crate::{Error, Result};

/// One labeled document.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub label: String,
    pub text: String,
}

/// Slice-level metadata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceMeta {
    pub n_docs: usize,
    pub avg_len: f64,
    /// Shannon entropy of the label histogram, normalized to `[0, 1]`.
    pub label_entropy: f64,
    /// Largest class share.
    pub class_imbalance: f64,
}

/// Normalized feature groups for one slice, all in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceFeatures {
    pub sensitive_rate: f64,
    pub dup_ratio: f64,
    pub rep_ngram_ratio: f64,
    pub near_dup_score: f64,
    pub tox_proxy: f64,
    pub license_prior: f64,
    pub quality_risk: f64,
    pub rarity_risk: f64,
    pub meta: SliceMeta,
}

/// Sensitive-text patterns: email, phone, URL/IP, long numeric identifiers.
#[derive(Debug, Clone)]
pub struct SensitivePatterns {
    patterns: Vec<Regex>,
}

impl Default for SensitivePatterns {
    fn default() -> Self {
        SensitivePatterns {
            patterns: vec![
                Regex::new(r"\S+@\S+\.\S+").unwrap(),
                Regex::new(r"(\+?\d[\d\-\s]{7,}\d)").unwrap(),
                Regex::new(r"https?://\S+|(\d{1,3}\.){3}\d{1,3}").unwrap(),
                Regex::new(r"\d{6,}").unwrap(),
            ],
        }
    }
}

impl SensitivePatterns {
    pub fn from_patterns(patterns: Vec<Regex>) -> Self {
        SensitivePatterns { patterns }
    }

    pub fn matches(&self, text: &str) -> bool {
        self.patterns.iter().any(|re| re.is_match(text))
    }
}

/// Source-level risk knobs looked up per source kind.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SourceProfile {
    pub tox_prior: f64,
    pub license_prior: f64,
}

impl Default for SourceProfile {
    fn default() -> Self {
        SourceProfile {
            tox_prior: 0.2,
            license_prior: 0.3,
        }
    }
}

/// Extraction configuration for one slice.
#[derive(Debug, Clone)]
pub struct ExtractConfig {
    pub patterns: SensitivePatterns,
    /// Optional lexicon; when present the toxicity proxy averages the
    /// lexicon hit rate with the source-level prior.
    pub word_list: Option<HashSet<String>>,
    pub source: SourceProfile,
    /// Cap on sampled near-duplicate pairs.
    pub max_near_dup_pairs: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            patterns: SensitivePatterns::default(),
            word_list: None,
            source: SourceProfile::default(),
            max_near_dup_pairs: 10_000,
        }
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn normalize(text: &str) -> String {
    text.trim()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn word_ngrams(normalized: &str, n: usize) -> Vec<u64> {
    let words: Vec<&str> = normalized.split(' ').filter(|w| !w.is_empty()).collect();
    if words.len() < n {
        return Vec::new();
    }
    words
        .windows(n)
        .map(|w| fnv1a64(w.join(" ").as_bytes()))
        .collect()
}

/// 3-gram shingle set; documents too short for a 3-gram fall back to a
/// single whole-document shingle so identical short texts still match.
fn trigram_set(normalized: &str) -> HashSet<u64> {
    let grams = word_ngrams(normalized, 3);
    if grams.is_empty() {
        let mut s = HashSet::with_capacity(1);
        s.insert(fnv1a64(normalized.as_bytes()));
        return s;
    }
    grams.into_iter().collect()
}

fn jaccard(a: &HashSet<u64>, b: &HashSet<u64>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

fn near_dup_score(normalized: &[String], max_pairs: usize) -> f64 {
    let n = normalized.len();
    if n < 2 {
        return 0.0;
    }
    // Canonical order: both the sampling seed and the sampled pair indices
    // refer to the sorted document set, so the score is invariant to
    // document order.
    let mut sorted = normalized.to_vec();
    sorted.sort();
    let sets: Vec<HashSet<u64>> = sorted.iter().map(|d| trigram_set(d)).collect();
    let total_pairs = n * (n - 1) / 2;
    let mut hits = 0usize;
    let mut checked = 0usize;
    if total_pairs <= max_pairs {
        for i in 0..n {
            for j in i + 1..n {
                checked += 1;
                if jaccard(&sets[i], &sets[j]) >= 0.8 {
                    hits += 1;
                }
            }
        }
    } else {
        let mut key: u64 = 0xcbf29ce484222325;
        for d in &sorted {
            key ^= fnv1a64(d.as_bytes());
            key = key.wrapping_mul(0x100000001b3);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        for _ in 0..max_pairs {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            checked += 1;
            if jaccard(&sets[i], &sets[j]) >= 0.8 {
                hits += 1;
            }
        }
    }
    hits as f64 / checked as f64
}

fn label_stats(docs: &[Document]) -> (f64, f64) {
    let mut hist: BTreeMap<&str, usize> = BTreeMap::new();
    for d in docs {
        *hist.entry(d.label.as_str()).or_insert(0) += 1;
    }
    let n = docs.len() as f64;
    let k = hist.len();
    let max_share = hist.values().map(|&c| c as f64 / n).fold(0.0, f64::max);
    if k < 2 {
        return (0.0, max_share);
    }
    let entropy: f64 = hist
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    ((entropy / (k as f64).ln()).clamp(0.0, 1.0), max_share)
}

fn quality_risk(docs: &[Document]) -> f64 {
    let n = docs.len() as f64;
    let empty = docs.iter().filter(|d| d.text.trim().is_empty()).count() as f64 / n;
    let malformed = docs
        .iter()
        .filter(|d| {
            let total = d.text.chars().count();
            if total == 0 {
                return false;
            }
            let bad = d
                .text
                .chars()
                .filter(|c| c.is_control() && !c.is_whitespace())
                .count();
            bad as f64 / total as f64 > 0.1
        })
        .count() as f64
        / n;
    // Length outliers on log length.
    let logs: Vec<f64> = docs
        .iter()
        .map(|d| (1.0 + d.text.chars().count() as f64).ln())
        .collect();
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let outliers = if std == 0.0 {
        0.0
    } else {
        logs.iter().filter(|l| ((**l - mean) / std).abs() > 3.0).count() as f64 / n
    };
    ((empty + malformed + outliers) / 3.0).clamp(0.0, 1.0)
}

/// Compute all feature groups for one nonempty slice.
pub fn extract_features(docs: &[Document], cfg: &ExtractConfig) -> Result<SliceFeatures> {
    if docs.is_empty() {
        return Err(Error::EmptySlice);
    }
    let n = docs.len();
    let sensitive_rate = docs
        .iter()
        .filter(|d| cfg.patterns.matches(&d.text))
        .count() as f64
        / n as f64;

    let normalized: Vec<String> = docs.iter().map(|d| normalize(&d.text)).collect();
    let distinct: HashSet<&str> = normalized.iter().map(|s| s.as_str()).collect();
    let dup_ratio = 1.0 - distinct.len() as f64 / n as f64;

    let mut gram_counts: HashMap<u64, usize> = HashMap::new();
    let mut total_grams = 0usize;
    for d in &normalized {
        for g in word_ngrams(d, 5) {
            *gram_counts.entry(g).or_insert(0) += 1;
            total_grams += 1;
        }
    }
    let rep_ngram_ratio = if total_grams == 0 {
        0.0
    } else {
        let repeated: usize = gram_counts.values().filter(|&&c| c >= 2).sum();
        repeated as f64 / total_grams as f64
    };

    let near = near_dup_score(&normalized, cfg.max_near_dup_pairs);

    let tox_proxy = match &cfg.word_list {
        Some(words) => {
            let hit_rate = docs
                .iter()
                .filter(|d| {
                    normalize(&d.text)
                        .split(' ')
                        .any(|w| words.contains(w))
                })
                .count() as f64
                / n as f64;
            ((hit_rate + cfg.source.tox_prior) / 2.0).clamp(0.0, 1.0)
        }
        None => cfg.source.tox_prior.clamp(0.0, 1.0),
    };

    let (label_entropy, class_imbalance) = label_stats(docs);
    let avg_len = docs.iter().map(|d| d.text.chars().count() as f64).sum::<f64>() / n as f64;

    Ok(SliceFeatures {
        sensitive_rate,
        dup_ratio,
        rep_ngram_ratio,
        near_dup_score: near,
        tox_proxy,
        license_prior: cfg.source.license_prior.clamp(0.0, 1.0),
        quality_risk: quality_risk(docs),
        rarity_risk: 1.0 - (n as f64 / 300.0).min(1.0),
        meta: SliceMeta {
            n_docs: n,
            avg_len,
            label_entropy,
            class_imbalance,
        },
    })
}

/// Group weights of the proxy-cost sum; must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProxyWeights {
    pub w_sensitive: f64,
    pub w_dup: f64,
    pub w_tox: f64,
    pub w_license: f64,
    pub w_quality: f64,
    pub w_rarity: f64,
}

impl Default for ProxyWeights {
    fn default() -> Self {
        ProxyWeights {
            w_sensitive: 0.30,
            w_dup: 0.25,
            w_tox: 0.15,
            w_license: 0.15,
            w_quality: 0.10,
            w_rarity: 0.05,
        }
    }
}

impl ProxyWeights {
    pub fn sum(&self) -> f64 {
        self.w_sensitive + self.w_dup + self.w_tox + self.w_license + self.w_quality + self.w_rarity
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::BadWeights(s));
        }
        Ok(())
    }
}

/// Duplication group value: unweighted mean of the three duplication signals.
fn dup_group(f: &SliceFeatures) -> f64 {
    (f.dup_ratio + f.rep_ngram_ratio + f.near_dup_score) / 3.0
}

/// Weighted group sum clipped to `[0, 1]` — the true proxy cost of a slice.
pub fn proxy_cost(features: &SliceFeatures, weights: &ProxyWeights) -> Result<f64> {
    weights.validate()?;
    let sum = weights.w_sensitive * features.sensitive_rate
        + weights.w_dup * dup_group(features)
        + weights.w_tox * features.tox_proxy
        + weights.w_license * features.license_prior
        + weights.w_quality * features.quality_risk
        + weights.w_rarity * features.rarity_risk;
    Ok(sum.clamp(0.0, 1.0))
}

/// Affine coefficients of the cheap-metadata coarse base.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct CoarseCoeffs {
    pub intercept: f64,
    pub w_source_prior: f64,
    pub w_rarity: f64,
    pub w_avg_len: f64,
    pub w_label_entropy: f64,
    /// Average length saturating at this scale maps to 1.
    pub len_norm: f64,
}

impl Default for CoarseCoeffs {
    fn default() -> Self {
        CoarseCoeffs {
            intercept: 0.05,
            w_source_prior: 0.5,
            w_rarity: 0.2,
            w_avg_len: 0.15,
            w_label_entropy: 0.1,
            len_norm: 400.0,
        }
    }
}

/// Coarse signal base from cheap metadata only: source prior, rarity,
/// normalized average length, normalized label entropy. Observation noise is
/// added by the environment, not here.
pub fn coarse_base(features: &SliceFeatures, source_prior: f64, coeffs: &CoarseCoeffs) -> f64 {
    let norm_len = (features.meta.avg_len / coeffs.len_norm).min(1.0);
    (coeffs.intercept
        + coeffs.w_source_prior * source_prior
        + coeffs.w_rarity * features.rarity_risk
        + coeffs.w_avg_len * norm_len
        + coeffs.w_label_entropy * features.meta.label_entropy)
        .clamp(0.0, 1.0)
}

/// Verify signal base: the proxy-cost sum with the toxicity and license
/// groups replaced by their slice-independent source-level priors. With a
/// lexicon in play this differs from the true cost only in the toxicity
/// group, making it a strictly better predictor than the coarse base.
pub fn verify_base(
    features: &SliceFeatures,
    weights: &ProxyWeights,
    source: &SourceProfile,
) -> Result<f64> {
    weights.validate()?;
    let sum = weights.w_sensitive * features.sensitive_rate
        + weights.w_dup * dup_group(features)
        + weights.w_tox * source.tox_prior.clamp(0.0, 1.0)
        + weights.w_license * source.license_prior.clamp(0.0, 1.0)
        + weights.w_quality * features.quality_risk
        + weights.w_rarity * features.rarity_risk;
    Ok(sum.clamp(0.0, 1.0))
}

/// Read one slice file: `label<TAB>text` per line, UTF-8.
pub fn read_slice<R: BufRead>(r: R) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(Error::Io)?;
        if line.is_empty() {
            continue;
        }
        let Some((label, text)) = line.split_once('\t') else {
            return Err(Error::Data(format!(
                "slice line {} lacks a label<TAB>text separator",
                i + 1
            )));
        };
        docs.push(Document {
            label: label.to_string(),
            text: text.to_string(),
        });
    }
    Ok(docs)
}

/// Load every `*.tsv`/`*.txt` slice in a directory, sorted by file name.
/// The source name is the file-stem prefix before `__` (or `default`).
pub fn load_slice_dir(dir: &Path) -> Result<Vec<(String, String, Vec<Document>)>> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::Data(format!("cannot read slice dir {}: {e}", dir.display())))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("tsv") | Some("txt")
            )
        })
        .collect();
    entries.sort();
    let mut out = Vec::new();
    for path in entries {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("slice")
            .to_string();
        let source = stem
            .split_once("__")
            .map(|(s, _)| s.to_string())
            .unwrap_or_else(|| "default".to_string());
        let file = std::fs::File::open(&path)
            .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
        let docs = read_slice(std::io::BufReader::new(file))?;
        if docs.is_empty() {
            return Err(Error::Data(format!("empty slice file {}", path.display())));
        }
        out.push((stem, source, docs));
    }
    if out.is_empty() {
        return Err(Error::Data(format!(
            "no slice files found in {}",
            dir.display()
        )));
    }
    Ok(out)
}

/// Configuration of the slices-to-asset-table pipeline.
#[derive(Debug, Clone)]
pub struct SliceTableConfig {
    pub n_task_kinds: usize,
    pub weights: ProxyWeights,
    pub coarse: CoarseCoeffs,
    pub default_profile: SourceProfile,
    /// Per-source profiles keyed by source name.
    pub profiles: BTreeMap<String, SourceProfile>,
    pub word_list: Option<HashSet<String>>,
    pub max_near_dup_pairs: usize,
}

impl Default for SliceTableConfig {
    fn default() -> Self {
        SliceTableConfig {
            n_task_kinds: 3,
            weights: ProxyWeights::default(),
            coarse: CoarseCoeffs::default(),
            default_profile: SourceProfile::default(),
            profiles: BTreeMap::new(),
            word_list: None,
            max_near_dup_pairs: 10_000,
        }
    }
}

/// Build asset-table rows from named slices. Task affinity is the label-mass
/// share routed to each task bucket by label hash, so it is deterministic
/// and independent of document order.
pub fn slices_to_table(
    slices: &[(String, String, Vec<Document>)],
    cfg: &SliceTableConfig,
) -> Result<AssetTable> {
    cfg.weights.validate()?;
    let mut source_kinds: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, source, _) in slices {
        let next = source_kinds.len();
        source_kinds.entry(source.as_str()).or_insert(next);
    }
    let mut table = AssetTable {
        assets: Vec::with_capacity(slices.len()),
        true_costs: Vec::with_capacity(slices.len()),
        coarse_bases: Vec::with_capacity(slices.len()),
        verify_bases: Vec::with_capacity(slices.len()),
        utilities: None,
    };
    for (idx, (_name, source, docs)) in slices.iter().enumerate() {
        let profile = cfg
            .profiles
            .get(source)
            .copied()
            .unwrap_or(cfg.default_profile);
        let extract = ExtractConfig {
            patterns: SensitivePatterns::default(),
            word_list: cfg.word_list.clone(),
            source: profile,
            max_near_dup_pairs: cfg.max_near_dup_pairs,
        };
        let features = extract_features(docs, &extract)?;

        let mut mass = vec![0.0f64; cfg.n_task_kinds];
        for d in docs {
            let bucket = (fnv1a64(d.label.as_bytes()) % cfg.n_task_kinds as u64) as usize;
            mass[bucket] += 1.0 / docs.len() as f64;
        }
        let relevance_profile: Vec<f64> = mass.iter().map(|m| m.clamp(0.0, 1.0)).collect();

        table.assets.push(Asset {
            asset_id: idx as u64,
            source_kind: source_kinds[source.as_str()],
            quality: (1.0 - features.quality_risk).clamp(0.0, 1.0),
            size_norm: (docs.len() as f64 / 300.0).min(1.0),
            rarity: features.rarity_risk,
            relevance_profile,
        });
        table.true_costs.push(proxy_cost(&features, &cfg.weights)?);
        table
            .coarse_bases
            .push(coarse_base(&features, profile.license_prior, &cfg.coarse));
        table
            .verify_bases
            .push(verify_base(&features, &cfg.weights, &profile)?);
    }
    table.validate(cfg.n_task_kinds)?;
    Ok(table)
}
