//! Turns a raw query-execution log into utterance/query pairs.
//!
//! Every row is normalized and run through the enabled filters; among the
//! passing revisions of a saved query only the last one executed is kept.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetExample, LogRow, RawLogEntry};
use crate::parser::parse;
use crate::text::normalize_text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FilterName {
    /// Title is empty or a default placeholder.
    #[serde(rename = "basic.title")]
    BasicTitle,
    /// Query is empty after normalization.
    #[serde(rename = "basic.query")]
    BasicQuery,
    /// Query does not parse.
    #[serde(rename = "basic.parse")]
    BasicParse,
    /// A number in the description never occurs in the query.
    #[serde(rename = "numbers.description")]
    NumbersDescription,
    /// A later passing revision of the same saved query exists.
    #[serde(rename = "dedupe")]
    Dedupe,
}

impl FilterName {
    pub const ALL: [FilterName; 5] = [
        FilterName::BasicTitle,
        FilterName::BasicQuery,
        FilterName::BasicParse,
        FilterName::NumbersDescription,
        FilterName::Dedupe,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FilterName::BasicTitle => "basic.title",
            FilterName::BasicQuery => "basic.query",
            FilterName::BasicParse => "basic.parse",
            FilterName::NumbersDescription => "numbers.description",
            FilterName::Dedupe => "dedupe",
        }
    }
}

impl fmt::Display for FilterName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FilterName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        FilterName::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = FilterName::ALL.iter().map(|f| f.as_str()).collect();
                format!("unknown filter `{s}` (known: {})", known.join(", "))
            })
    }
}

/// Label of the audit entry for an undecodable row.
pub const MALFORMED: &str = "malformed";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanConfig {
    pub enabled: BTreeSet<FilterName>,
    /// Also require numbers in the title to occur in the query.
    pub check_title_numbers: bool,
    /// Case-insensitive titles treated as unset.
    pub placeholder_titles: Vec<String>,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig {
            enabled: FilterName::ALL.into_iter().collect(),
            check_title_numbers: false,
            placeholder_titles: [
                "untitled",
                "untitled query",
                "new query",
                "query",
                "test",
                "test query",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

impl CleanConfig {
    pub fn with_filters(filters: impl IntoIterator<Item = FilterName>) -> Self {
        CleanConfig {
            enabled: filters.into_iter().collect(),
            ..CleanConfig::default()
        }
    }

    pub fn is_enabled(&self, filter: FilterName) -> bool {
        self.enabled.contains(&filter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterOutcome {
    /// Row position in the input log.
    pub entry: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query_set_id: Option<i64>,
    pub verdict: Verdict,
    pub failed_filters: Vec<String>,
}

fn number_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"\d+(?:\.\d+)?").expect("valid pattern"))
}

fn numbers_missing(text: &str, query: &str) -> bool {
    number_pattern()
        .find_iter(text)
        .any(|m| !query.contains(m.as_str()))
}

fn collapse(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Passes unless a number in the description (and, if configured, the
/// title) is absent from the normalized query text.
pub fn filter_number_consistency(entry: &RawLogEntry, config: &CleanConfig) -> bool {
    let query = normalize_text(&entry.query_body);
    if entry
        .description
        .as_deref()
        .is_some_and(|d| numbers_missing(d, &query))
    {
        return false;
    }
    !(config.check_title_numbers && numbers_missing(&entry.title, &query))
}

/// The basic sub-filters an entry fails, in registry order.
pub fn filter_basic(entry: &RawLogEntry, config: &CleanConfig) -> Vec<FilterName> {
    let mut failed = Vec::new();
    let title = collapse(&entry.title);
    if title.is_empty()
        || config
            .placeholder_titles
            .iter()
            .any(|p| p.eq_ignore_ascii_case(&title))
    {
        failed.push(FilterName::BasicTitle);
    }
    let query = normalize_text(&entry.query_body);
    if query.is_empty() {
        failed.push(FilterName::BasicQuery);
    } else if parse(&query).is_err() {
        failed.push(FilterName::BasicParse);
    }
    failed
}

/// Enabled per-entry filters that `entry` fails.
pub fn failed_filters(entry: &RawLogEntry, config: &CleanConfig) -> Vec<FilterName> {
    let mut failed = filter_basic(entry, config);
    if !filter_number_consistency(entry, config) {
        failed.push(FilterName::NumbersDescription);
    }
    failed.retain(|f| config.is_enabled(*f));
    failed
}

/// Indices of the entries to keep: per query set, the passing entry with the
/// highest revision order (later rows win ties).
fn last_passing(entries: &[&RawLogEntry], passes: &[bool]) -> BTreeSet<usize> {
    let mut best: HashMap<i64, usize> = HashMap::new();
    for (i, entry) in entries.iter().enumerate() {
        if !passes[i] {
            continue;
        }
        best.entry(entry.query_set_id)
            .and_modify(|b| {
                if entries[*b].revision_order <= entry.revision_order {
                    *b = i;
                }
            })
            .or_insert(i);
    }
    best.into_values().collect()
}

/// Keeps, for each query set, the last revision passing all enabled filters.
pub fn dedupe_last_passing(entries: &[RawLogEntry], config: &CleanConfig) -> Vec<RawLogEntry> {
    let refs: Vec<&RawLogEntry> = entries.iter().collect();
    let passes: Vec<bool> = entries
        .par_iter()
        .map(|e| failed_filters(e, config).is_empty())
        .collect();
    last_passing(&refs, &passes)
        .into_iter()
        .map(|i| entries[i].clone())
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleanReport {
    pub examples: Vec<DatasetExample>,
    /// One outcome per input row, in input order.
    pub audit: Vec<FilterOutcome>,
    /// Rows failing each filter; a row may count under several.
    pub drop_counts: BTreeMap<String, usize>,
    pub n_rows: usize,
    pub n_malformed: usize,
}

pub fn clean(log: impl IntoIterator<Item = LogRow>, config: &CleanConfig) -> CleanReport {
    let rows: Vec<LogRow> = log.into_iter().collect();
    let mut audit: Vec<FilterOutcome> = rows
        .par_iter()
        .enumerate()
        .map(|(i, row)| match row {
            Ok(entry) => {
                let failed = failed_filters(entry, config);
                FilterOutcome {
                    entry: i,
                    query_set_id: Some(entry.query_set_id),
                    verdict: if failed.is_empty() {
                        Verdict::Pass
                    } else {
                        Verdict::Fail
                    },
                    failed_filters: failed.iter().map(|f| f.as_str().to_string()).collect(),
                }
            }
            Err(_) => FilterOutcome {
                entry: i,
                query_set_id: None,
                verdict: Verdict::Fail,
                failed_filters: vec![MALFORMED.to_string()],
            },
        })
        .collect();

    let decoded: Vec<(usize, &RawLogEntry)> = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().ok().map(|e| (i, e)))
        .collect();
    let passes: Vec<bool> = decoded
        .iter()
        .map(|(i, _)| audit[*i].verdict == Verdict::Pass)
        .collect();
    let kept: Vec<usize> = if config.is_enabled(FilterName::Dedupe) {
        let refs: Vec<&RawLogEntry> = decoded.iter().map(|(_, e)| *e).collect();
        let keep = last_passing(&refs, &passes);
        for (j, (i, _)) in decoded.iter().enumerate() {
            if passes[j] && !keep.contains(&j) {
                audit[*i].verdict = Verdict::Fail;
                audit[*i]
                    .failed_filters
                    .push(FilterName::Dedupe.as_str().to_string());
            }
        }
        keep.into_iter().map(|j| decoded[j].0).collect()
    } else {
        decoded
            .iter()
            .zip(&passes)
            .filter(|(_, p)| **p)
            .map(|((i, _), _)| *i)
            .collect()
    };

    let mut kept = kept;
    kept.sort_unstable();
    let examples = kept
        .into_iter()
        .filter_map(|i| rows[i].as_ref().ok())
        .map(|entry| DatasetExample {
            id: entry.query_set_id,
            title: collapse(&entry.title),
            description: entry
                .description
                .as_deref()
                .map(collapse)
                .filter(|d| !d.is_empty()),
            query: normalize_text(&entry.query_body),
        })
        .collect();

    let mut drop_counts = BTreeMap::new();
    for outcome in &audit {
        for f in &outcome.failed_filters {
            *drop_counts.entry(f.clone()).or_insert(0) += 1;
        }
    }
    CleanReport {
        examples,
        n_rows: rows.len(),
        n_malformed: rows.iter().filter(|r| r.is_err()).count(),
        audit,
        drop_counts,
    }
}
