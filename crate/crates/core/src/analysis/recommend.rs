use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::corpus::StanceLabel;
use crate::retrieval::{cosine, mmr_rerank, Candidate, RecConfig, StanceMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Leaning {
    Progressive,
    Moderate,
    Conservative,
}

impl Leaning {
    pub const ALL: [Leaning; 3] = [Leaning::Progressive, Leaning::Moderate, Leaning::Conservative];
}

/// Per-issue mapping from stance label to political leaning.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LeaningMap(pub BTreeMap<String, BTreeMap<StanceLabel, Leaning>>);

impl LeaningMap {
    pub fn get(&self, issue_id: &str, stance: StanceLabel) -> Result<Leaning, AnalysisError> {
        self.0
            .get(issue_id)
            .and_then(|m| m.get(&stance))
            .copied()
            .ok_or_else(|| AnalysisError::UnmappedPair {
                issue_id: issue_id.into(),
                stance: stance.as_str().into(),
            })
    }

    pub fn insert(&mut self, issue_id: impl Into<String>, mapping: [Leaning; 3]) {
        let m = StanceLabel::ALL.into_iter().zip(mapping).collect();
        self.0.insert(issue_id.into(), m);
    }
}

/// Shannon entropy (natural log) of the leaning distribution of `recommended`
/// `(issue_id, stance)` pairs, divided by `ln 3` when `normalized`.
pub fn diversity_entropy<'a>(
    recommended: impl IntoIterator<Item = (&'a str, StanceLabel)>,
    map: &LeaningMap,
    normalized: bool,
) -> Result<f64, AnalysisError> {
    let mut counts: BTreeMap<Leaning, usize> = BTreeMap::new();
    for (issue, stance) in recommended {
        *counts.entry(map.get(issue, stance)?).or_default() += 1;
    }
    let n: usize = counts.values().sum();
    if n == 0 {
        return Err(AnalysisError::Empty);
    }
    let h: f64 = counts
        .values()
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.ln()
        })
        .sum();
    let h = h.max(0.0);
    Ok(if normalized { h / 3f64.ln() } else { h })
}

/// Fraction of the first `k` recommendations whose issue equals `seed_issue`.
/// Missing positions count as misses.
pub fn precision_at_k(recommended_issues: &[&str], seed_issue: &str, k: usize) -> Result<f64, AnalysisError> {
    if k == 0 {
        return Err(AnalysisError::Empty);
    }
    let hits = recommended_issues.iter().take(k).filter(|i| **i == seed_issue).count();
    Ok(hits as f64 / k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolItem {
    pub id: usize,
    pub issue_id: String,
    pub vector: Vec<f64>,
    /// Stance from whichever source the caller chose (gold or predicted).
    pub stance: StanceLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecMethod {
    Retriever,
    Mmr,
    MmrStance,
}

impl RecMethod {
    pub const ALL: [RecMethod; 3] = [RecMethod::Retriever, RecMethod::Mmr, RecMethod::MmrStance];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecRow {
    pub method: RecMethod,
    pub k: usize,
    pub diversity: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecSimulation {
    pub rows: Vec<RecRow>,
    pub warnings: Vec<String>,
}

/// For each seed item: retrieve the `pool_size` most similar other items,
/// order them per method, and score the top K. Metrics are averaged over
/// seeds. Rows come out grouped by method, then K.
pub fn simulate_recommendation(
    pool: &[PoolItem],
    seeds: &[usize],
    cfg: &RecConfig,
    map: &LeaningMap,
) -> Result<RecSimulation, AnalysisError> {
    cfg.validate().map_err(|e| AnalysisError::Recommendation(e.to_string()))?;
    if seeds.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let by_id: BTreeMap<usize, &PoolItem> = pool.iter().map(|p| (p.id, p)).collect();
    let mut warnings = Vec::new();
    let mut sums: BTreeMap<(RecMethod, usize), (f64, f64)> = BTreeMap::new();
    for &seed_id in seeds {
        let seed = by_id
            .get(&seed_id)
            .ok_or_else(|| AnalysisError::Recommendation(format!("seed {seed_id} not in pool")))?;
        let mut others: Vec<(f64, &PoolItem)> = pool
            .iter()
            .filter(|p| p.id != seed_id)
            .map(|p| (cosine(&p.vector, &seed.vector), p))
            .collect();
        if others.len() < cfg.pool_size {
            warnings.push(format!(
                "seed {seed_id}: only {} candidates for a pool of {}",
                others.len(),
                cfg.pool_size
            ));
        }
        others.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.id.cmp(&b.1.id)));
        others.truncate(cfg.pool_size);
        if others.is_empty() {
            return Err(AnalysisError::Recommendation(format!("seed {seed_id} has no candidates")));
        }
        let candidates: Vec<Candidate> = others
            .iter()
            .map(|(_, p)| Candidate {
                id: p.id,
                vector: p.vector.clone(),
                stance: Some(p.stance),
            })
            .collect();
        for method in RecMethod::ALL {
            let order: Vec<usize> = match method {
                RecMethod::Retriever => others.iter().map(|(_, p)| p.id).collect(),
                RecMethod::Mmr | RecMethod::MmrStance => {
                    let mode = if method == RecMethod::Mmr {
                        StanceMode::Off
                    } else {
                        StanceMode::OneHot
                    };
                    let c = RecConfig {
                        stance_mode: mode,
                        ..cfg.clone()
                    };
                    mmr_rerank(&seed.vector, &candidates, &c)
                        .map_err(|e| AnalysisError::Recommendation(e.to_string()))?
                }
            };
            let items: Vec<&PoolItem> = order.iter().map(|id| by_id[id]).collect();
            for &k in &cfg.ks {
                let top = &items[..k.min(items.len())];
                let diversity = diversity_entropy(top.iter().map(|p| (p.issue_id.as_str(), p.stance)), map, true)?;
                let issues: Vec<&str> = top.iter().map(|p| p.issue_id.as_str()).collect();
                let precision = precision_at_k(&issues, &seed.issue_id, k)?;
                let e = sums.entry((method, k)).or_default();
                e.0 += diversity;
                e.1 += precision;
            }
        }
    }
    let n = seeds.len() as f64;
    let rows = sums
        .into_iter()
        .map(|((method, k), (d, p))| RecRow {
            method,
            k,
            diversity: d / n,
            precision: p / n,
        })
        .collect();
    Ok(RecSimulation { rows, warnings })
}
