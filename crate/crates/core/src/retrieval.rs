//! Ranking in both directions and the usual retrieval metrics.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::encoders::{MolReps, TextReps};
use crate::loss::{combined_similarity, level_similarities, LossConfig, LossError};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error(transparent)]
    Loss(#[from] LossError),
}

pub type Result<T> = std::result::Result<T, RetrievalError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    TextToMol,
    MolToText,
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "t2m" => Ok(Direction::TextToMol),
            "m2t" => Ok(Direction::MolToText),
            other => Err(format!("unknown direction '{}' (t2m, m2t)", other)),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::TextToMol => "t2m",
            Direction::MolToText => "m2t",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pool {
    /// Candidates come from the query split only.
    #[default]
    Test,
    /// Candidates come from every split.
    Full,
}

impl FromStr for Pool {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "test" => Ok(Pool::Test),
            "full" => Ok(Pool::Full),
            other => Err(format!("unknown pool '{}' (test, full)", other)),
        }
    }
}

impl fmt::Display for Pool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pool::Test => "test",
            Pool::Full => "full",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    pub query: String,
    /// Best first.
    pub ranking: Vec<Scored>,
    /// 1-based.
    pub rank_of_truth: usize,
}

/// Sorts by score descending, then id ascending.
pub fn rank_scores(query: &str, truth: &str, mut scored: Vec<Scored>) -> Result<RankedResult> {
    if scored.is_empty() {
        return Err(RetrievalError::EmptyPool);
    }
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    let pos = scored
        .iter()
        .position(|s| s.id == truth)
        .ok_or_else(|| RetrievalError::Contract(format!("truth '{}' is not among the candidates of '{}'", truth, query)))?;
    Ok(RankedResult {
        query: query.to_string(),
        ranking: scored,
        rank_of_truth: pos + 1,
    })
}

/// Combined similarity of one text/molecule pair.
pub fn score_pair(text: &TextReps, mol: &MolReps, cfg: &LossConfig) -> Result<f64> {
    let s = level_similarities(text, mol, cfg)?;
    Ok(combined_similarity(&s, cfg.weights, cfg.levels)?)
}

/// Ranks `candidates` for one query. Each candidate is `(id, score input)`.
pub fn rank_candidates<C: Sync>(
    query: &str,
    truth: &str,
    candidates: &[(String, C)],
    score: impl Fn(&C) -> Result<f64> + Sync,
) -> Result<RankedResult> {
    let scored = candidates
        .par_iter()
        .map(|(id, c)| {
            Ok(Scored {
                id: id.clone(),
                score: score(c)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rank_scores(query, truth, scored)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub hits_at: BTreeMap<usize, f64>,
    /// Same as hits for single-truth queries.
    pub recall_at: BTreeMap<usize, f64>,
    pub mrr: f64,
    pub mean_rank: f64,
    pub n_queries: usize,
}

pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];

pub fn compute_metrics(results: &[RankedResult], ks: &[usize]) -> Result<MetricReport> {
    let ranks: Vec<usize> = results.iter().map(|r| r.rank_of_truth).collect();
    metrics_from_ranks(&ranks, ks)
}

pub fn metrics_from_ranks(ranks: &[usize], ks: &[usize]) -> Result<MetricReport> {
    if ranks.is_empty() {
        return Err(RetrievalError::Contract("no results to score".into()));
    }
    if ranks.contains(&0) {
        return Err(RetrievalError::Contract("ranks are 1-based".into()));
    }
    let n = ranks.len() as f64;
    let mut hits_at = BTreeMap::new();
    for &k in ks {
        let h = ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
        hits_at.insert(k, h);
    }
    Ok(MetricReport {
        recall_at: hits_at.clone(),
        hits_at,
        mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
        mean_rank: ranks.iter().sum::<usize>() as f64 / n,
        n_queries: ranks.len(),
    })
}

impl MetricReport {
    /// `metric<TAB>value` lines.
    pub fn tsv_lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (k, v) in &self.hits_at {
            out.push(format!("hits@{}\t{:.6}", k, v));
        }
        for (k, v) in &self.recall_at {
            out.push(format!("recall@{}\t{:.6}", k, v));
        }
        out.push(format!("mrr\t{:.6}", self.mrr));
        out.push(format!("mean_rank\t{:.6}", self.mean_rank));
        out.push(format!("n_queries\t{}", self.n_queries));
        out
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>10}", "queries", self.n_queries)?;
        for (k, v) in &self.hits_at {
            writeln!(f, "{:<12} {:>9.2}%", format!("hits@{}", k), 100.0 * v)?;
        }
        writeln!(f, "{:<12} {:>10.4}", "mrr", self.mrr)?;
        write!(f, "{:<12} {:>10.3}", "mean rank", self.mean_rank)
    }
}

/// Encoded pairs; text `i` and molecule `i` share `ids[i]`.
#[derive(Debug, Clone, Default)]
pub struct EncodedCorpus {
    pub ids: Vec<String>,
    pub texts: Vec<TextReps>,
    pub mols: Vec<MolReps>,
}

impl EncodedCorpus {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Ranks every query against the pool. `queries` and `pool` index into
/// `corpus`; every query must also be in the pool.
pub fn run_retrieval(
    direction: Direction,
    corpus: &EncodedCorpus,
    queries: &[usize],
    pool: &[usize],
    cfg: &LossConfig,
    ks: &[usize],
) -> Result<(Vec<RankedResult>, MetricReport)> {
    if pool.is_empty() {
        return Err(RetrievalError::EmptyPool);
    }
    if let Some(&bad) = queries.iter().chain(pool).find(|&&i| i >= corpus.len()) {
        return Err(RetrievalError::Contract(format!("index {} outside corpus of {}", bad, corpus.len())));
    }
    let score = |q: usize, c: usize| match direction {
        Direction::TextToMol => score_pair(&corpus.texts[q], &corpus.mols[c], cfg),
        Direction::MolToText => score_pair(&corpus.texts[c], &corpus.mols[q], cfg),
    };
    let results = queries
        .par_iter()
        .map(|&q| {
            let scored = pool
                .iter()
                .map(|&c| {
                    Ok(Scored {
                        id: corpus.ids[c].clone(),
                        score: score(q, c)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rank_scores(&corpus.ids[q], &corpus.ids[q], scored)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = compute_metrics(&results, ks)?;
    Ok((results, report))
}
