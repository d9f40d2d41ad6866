//! PCM-F1 / PCM-EM scoring of a predicted query against a gold query.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::parser::parse;
use crate::subtree::{extract, novalues_view, ClauseCategory, Extraction};
use crate::text::normalize_text;
use crate::tree::SyntaxTree;

/// What a category's precision and recall count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountUnit {
    /// Distinct grounded sub-trees rooted in the category, each matched by
    /// membership in the other side's element set.
    #[default]
    Subtree,
    /// The flattened element sets themselves.
    Element,
}

impl FromStr for CountUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "subtree" => Ok(CountUnit::Subtree),
            "element" => Ok(CountUnit::Element),
            other => Err(format!(
                "unknown count unit `{other}` (expected subtree or element)"
            )),
        }
    }
}

impl fmt::Display for CountUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CountUnit::Subtree => "subtree",
            CountUnit::Element => "element",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub category: ClauseCategory,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub pred_size: usize,
    pub gold_size: usize,
    /// Predicted units found among the gold elements.
    pub pred_matched: usize,
    /// Gold units found among the predicted elements.
    pub gold_matched: usize,
}

impl CategoryScore {
    /// Scores one category from unit counts. `None` when both sides are empty.
    pub fn from_counts(
        category: ClauseCategory,
        pred_matched: usize,
        pred_size: usize,
        gold_matched: usize,
        gold_size: usize,
    ) -> Option<Self> {
        if pred_size == 0 && gold_size == 0 {
            return None;
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(pred_matched, pred_size);
        let recall = ratio(gold_matched, gold_size);
        // 2pr/(p+r) with the denominators multiplied out, so the only
        // rounding is the final division.
        let den =
            pred_matched as u128 * gold_size as u128 + gold_matched as u128 * pred_size as u128;
        let f1 = if pred_size == 0 || gold_size == 0 || den == 0 {
            0.0
        } else {
            (2 * pred_matched as u128 * gold_matched as u128) as f64 / den as f64
        };
        Some(CategoryScore {
            category,
            precision,
            recall,
            f1,
            pred_size,
            gold_size,
            pred_matched,
            gold_matched,
        })
    }

    pub fn is_exact(&self) -> bool {
        self.pred_size > 0
            && self.gold_size > 0
            && self.pred_matched == self.pred_size
            && self.gold_matched == self.gold_size
    }
}

/// F1 between two plain sets, each serving as both its units and elements.
pub fn set_f1(
    category: ClauseCategory,
    pred: &BTreeSet<String>,
    gold: &BTreeSet<String>,
) -> Option<CategoryScore> {
    let common = pred.intersection(gold).count();
    CategoryScore::from_counts(category, common, pred.len(), common, gold.len())
}

/// Scores of one comparison, before parse-status bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct PcmScore {
    pub f1: f64,
    pub em: bool,
    pub per_category: Vec<CategoryScore>,
}

/// Compares two extractions category by category.
///
/// When neither query has anything in any category the comparison is
/// vacuous and scores 1.
pub fn compare(pred: &Extraction, gold: &Extraction, unit: CountUnit) -> PcmScore {
    let mut per_category = Vec::new();
    for category in ClauseCategory::ALL {
        let pred_elements = pred.elements.get(category);
        let gold_elements = gold.elements.get(category);
        let score = match unit {
            CountUnit::Subtree => {
                let pred_units = pred.units.get(category);
                let gold_units = gold.units.get(category);
                CategoryScore::from_counts(
                    category,
                    pred_units
                        .iter()
                        .filter(|u| gold_elements.contains(*u))
                        .count(),
                    pred_units.len(),
                    gold_units
                        .iter()
                        .filter(|u| pred_elements.contains(*u))
                        .count(),
                    gold_units.len(),
                )
            }
            CountUnit::Element => set_f1(category, pred_elements, gold_elements),
        };
        per_category.extend(score);
    }
    let em = per_category.iter().all(CategoryScore::is_exact);
    let f1 = if em {
        1.0
    } else {
        per_category.iter().map(|s| s.f1).sum::<f64>() / per_category.len() as f64
    };
    PcmScore {
        f1,
        em,
        per_category,
    }
}

pub fn pcm_f1(pred: &SyntaxTree, gold: &SyntaxTree) -> f64 {
    compare(&extract(pred), &extract(gold), CountUnit::Subtree).f1
}

pub fn pcm_em(pred: &SyntaxTree, gold: &SyntaxTree) -> bool {
    compare(&extract(pred), &extract(gold), CountUnit::Subtree).em
}

/// PCM-F1 and PCM-EM with values anonymized and join conditions dropped.
pub fn pcm_novalues(pred: &SyntaxTree, gold: &SyntaxTree) -> (f64, bool) {
    let score = compare(
        &extract(&novalues_view(pred)),
        &extract(&novalues_view(gold)),
        CountUnit::Subtree,
    );
    (score.f1, score.em)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pcm_f1: f64,
    pub pcm_em: u8,
    pub pcm_f1_novalues: f64,
    pub pcm_em_novalues: u8,
    pub per_category: Vec<CategoryScore>,
    pub pred_parse_ok: bool,
    pub gold_parse_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_error: Option<String>,
}

impl MetricReport {
    fn zero(pred_error: Option<String>, gold_error: Option<String>) -> Self {
        MetricReport {
            pcm_f1: 0.0,
            pcm_em: 0,
            pcm_f1_novalues: 0.0,
            pcm_em_novalues: 0,
            per_category: Vec::new(),
            pred_parse_ok: pred_error.is_none(),
            gold_parse_ok: gold_error.is_none(),
            pred_error,
            gold_error,
        }
    }
}

pub fn evaluate_pair(pred_text: &str, gold_text: &str) -> MetricReport {
    evaluate_pair_with(pred_text, gold_text, CountUnit::Subtree)
}

/// Normalizes and parses both sides. A gold failure is flagged for the
/// caller to exclude; a prediction failure scores 0 everywhere.
pub fn evaluate_pair_with(pred_text: &str, gold_text: &str, unit: CountUnit) -> MetricReport {
    let gold = parse(&normalize_text(gold_text));
    let pred = parse(&normalize_text(pred_text));
    let (pred, gold) = match (pred, gold) {
        (Ok(p), Ok(g)) => (p, g),
        (p, g) => {
            return MetricReport::zero(
                p.err().map(|e| e.to_string()),
                g.err().map(|e| e.to_string()),
            )
        }
    };
    let full = compare(&extract(&pred), &extract(&gold), unit);
    let novalues = compare(
        &extract(&novalues_view(&pred)),
        &extract(&novalues_view(&gold)),
        unit,
    );
    MetricReport {
        pcm_f1: full.f1,
        pcm_em: full.em.into(),
        pcm_f1_novalues: novalues.f1,
        pcm_em_novalues: novalues.em.into(),
        per_category: full.per_category,
        pred_parse_ok: true,
        gold_parse_ok: true,
        pred_error: None,
        gold_error: None,
    }
}

/// Mean per-category scores over the examples where the category was active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMean {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub n_total: usize,
    pub n_gold_unparsable: usize,
    pub n_pred_unparsable: usize,
    pub mean_pcm_f1: f64,
    pub mean_pcm_em: f64,
    pub mean_pcm_f1_novalues: f64,
    pub mean_pcm_em_novalues: f64,
    pub per_category_means: BTreeMap<ClauseCategory, CategoryMean>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("no evaluable examples: all {total} gold queries failed to parse")]
    EmptyCorpus { total: usize },
}

pub fn evaluate_corpus<P, G>(pairs: &[(P, G)]) -> Result<CorpusReport, MetricsError>
where
    P: AsRef<str> + Sync,
    G: AsRef<str> + Sync,
{
    evaluate_corpus_with(pairs, CountUnit::Subtree).map(|(report, _)| report)
}

/// Evaluates every pair in parallel and returns the aggregate together with
/// the per-pair reports in input order.
pub fn evaluate_corpus_with<P, G>(
    pairs: &[(P, G)],
    unit: CountUnit,
) -> Result<(CorpusReport, Vec<MetricReport>), MetricsError>
where
    P: AsRef<str> + Sync,
    G: AsRef<str> + Sync,
{
    let reports: Vec<MetricReport> = pairs
        .par_iter()
        .map(|(p, g)| evaluate_pair_with(p.as_ref(), g.as_ref(), unit))
        .collect();
    let report = aggregate(&reports)?;
    Ok((report, reports))
}

/// Sum in sorted order so the result does not depend on example order.
fn stable_mean(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    values.into_iter().sum::<f64>() / n
}

pub fn aggregate(reports: &[MetricReport]) -> Result<CorpusReport, MetricsError> {
    let kept: Vec<&MetricReport> = reports.iter().filter(|r| r.gold_parse_ok).collect();
    if kept.is_empty() {
        return Err(MetricsError::EmptyCorpus {
            total: reports.len(),
        });
    }
    let column = |f: fn(&MetricReport) -> f64| stable_mean(kept.iter().map(|r| f(r)).collect());
    let mut per_category_means = BTreeMap::new();
    for category in ClauseCategory::ALL {
        let scores: Vec<&CategoryScore> = kept
            .iter()
            .flat_map(|r| r.per_category.iter())
            .filter(|s| s.category == category)
            .collect();
        if scores.is_empty() {
            continue;
        }
        let mean =
            |f: fn(&CategoryScore) -> f64| stable_mean(scores.iter().map(|s| f(s)).collect());
        per_category_means.insert(
            category,
            CategoryMean {
                precision: mean(|s| s.precision),
                recall: mean(|s| s.recall),
                f1: mean(|s| s.f1),
                count: scores.len(),
            },
        );
    }
    Ok(CorpusReport {
        n_total: reports.len(),
        n_gold_unparsable: reports.len() - kept.len(),
        n_pred_unparsable: kept.iter().filter(|r| !r.pred_parse_ok).count(),
        mean_pcm_f1: column(|r| r.pcm_f1),
        mean_pcm_em: column(|r| r.pcm_em as f64),
        mean_pcm_f1_novalues: column(|r| r.pcm_f1_novalues),
        mean_pcm_em_novalues: column(|r| r.pcm_em_novalues as f64),
        per_category_means,
    })
}
