//! Query templates and corpus diversity statistics.

use std::collections::{HashMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetExample;
use crate::lexer::{tokenize, TokenKind};
use crate::parser::parse;
use crate::serialize::{serialize, split_qualified, unquote_part};
use crate::subtree::{anonymize_values, VALUE_PLACEHOLDER};
use crate::text::normalize_text;
use crate::tree::{label, NodeKind, SyntaxTree, TreeNode};

/// A query with its values anonymized, in canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Template {
    pub canonical: String,
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical)
    }
}

pub fn to_template(query: &SyntaxTree) -> Template {
    Template {
        canonical: serialize(anonymize_values(query).root()),
    }
}

/// Template of raw query text. Text that does not parse is canonized at the
/// token level instead: values become the placeholder and words are
/// case-folded.
pub fn template_of_text(raw: &str) -> Template {
    let text = normalize_text(raw);
    if let Ok(tree) = parse(&text) {
        return to_template(&tree);
    }
    let canonical = match tokenize(&text) {
        Ok(tokens) => tokens
            .iter()
            .filter(|t| t.kind != TokenKind::Eof)
            .map(|t| match t.kind {
                TokenKind::String | TokenKind::Number | TokenKind::Parameter => {
                    VALUE_PLACEHOLDER.to_string()
                }
                _ => t.text.to_lowercase(),
            })
            .collect::<Vec<_>>()
            .join(" "),
        Err(_) => text.to_lowercase(),
    };
    Template { canonical }
}

fn cte_bodies(root: &TreeNode) -> HashMap<String, &TreeNode> {
    root.preorder()
        .filter(|n| n.label == label::CTE && n.kind == NodeKind::Statement)
        .filter_map(|cte| {
            let name = cte.children.first()?;
            let body = cte.children.last()?;
            Some((unquote_part(&name.label), body))
        })
        .collect()
}

/// Table-position operands of a FROM clause: names, subqueries and calls,
/// with joins, aliases, hints and parentheses looked through.
fn table_operands(from: &TreeNode) -> Vec<&TreeNode> {
    fn collect<'a>(node: &'a TreeNode, out: &mut Vec<&'a TreeNode>) {
        match node.label.as_str() {
            label::LIST if node.kind == NodeKind::Expression => {
                node.children.iter().for_each(|c| collect(c, out))
            }
            label::JOIN if node.kind == NodeKind::Expression => {
                collect(&node.children[0], out);
                collect(&node.children[2], out);
            }
            label::ALIAS | label::TABLE_HINT | label::PAREN
                if node.kind == NodeKind::Expression =>
            {
                collect(&node.children[0], out)
            }
            _ => out.push(node),
        }
    }
    let mut out = Vec::new();
    from.children.iter().for_each(|c| collect(c, &mut out));
    out
}

fn is_from_clause(node: &TreeNode) -> bool {
    node.kind == NodeKind::Clause && node.label == label::CLAUSE_FROM
}

/// Name of a CTE referenced by a table operand, if it is one.
fn cte_reference<'a>(
    operand: &TreeNode,
    ctes: &HashMap<String, &'a TreeNode>,
) -> Option<&'a TreeNode> {
    if operand.kind != NodeKind::Identifier {
        return None;
    }
    let parts = split_qualified(&operand.label);
    if parts.len() != 1 {
        return None;
    }
    ctes.get(&unquote_part(parts[0])).copied()
}

/// 1 for a flat query, plus one per level of subquery nesting. A CTE counts
/// where it is used, as if its body were written inline.
pub fn nesting_level(query: &SyntaxTree) -> usize {
    let ctes = cte_bodies(query.root());
    let mut active = Vec::new();
    1 + depth(query.root(), None, &ctes, &mut active)
}

fn depth<'a>(
    node: &'a TreeNode,
    parent: Option<&TreeNode>,
    ctes: &HashMap<String, &'a TreeNode>,
    active: &mut Vec<&'a TreeNode>,
) -> usize {
    if node.kind == NodeKind::Statement && node.label == label::CTE {
        return 0;
    }
    let below = node
        .children
        .iter()
        .map(|c| depth(c, Some(node), ctes, active))
        .max()
        .unwrap_or(0);
    if node.kind == NodeKind::Subquery {
        // operands of a set operation sit at the level of the operation
        let in_compound = parent.is_some_and(|p| p.label == label::COMPOUND);
        return below + usize::from(!in_compound);
    }
    if !is_from_clause(node) {
        return below;
    }
    let mut best = below;
    for operand in table_operands(node) {
        let Some(body) = cte_reference(operand, ctes) else {
            continue;
        };
        if active.iter().any(|b| std::ptr::eq(*b, body)) {
            continue;
        }
        active.push(body);
        best = best.max(depth(body, None, ctes, active));
        active.pop();
    }
    best
}

/// Distinct base tables named in any FROM or JOIN, by case-folded last name
/// part. CTE names, table variables, temp tables and table-valued functions
/// are not base tables.
pub fn tables_per_query(query: &SyntaxTree) -> usize {
    base_tables(query).len()
}

pub fn base_tables(query: &SyntaxTree) -> HashSet<String> {
    let ctes = cte_bodies(query.root());
    let mut tables = HashSet::new();
    for from in query.root().preorder().filter(|n| is_from_clause(n)) {
        for operand in table_operands(from) {
            if operand.kind != NodeKind::Identifier
                || operand.label.starts_with(['@', '#'])
                || cte_reference(operand, &ctes).is_some()
            {
                continue;
            }
            if let Some(last) = split_qualified(&operand.label).last() {
                if !last.starts_with('#') {
                    tables.insert(unquote_part(last));
                }
            }
        }
    }
    tables
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("n-gram size must be at least 1")]
    InvalidN,
    #[error("no examples to summarize")]
    EmptyCorpus,
}

fn ngram_tokens(text: &str) -> Vec<String> {
    normalize_text(text)
        .to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Number of distinct runs of `n` whitespace-separated tokens across `texts`.
pub fn ngram_vocabulary<S: AsRef<str>>(texts: &[S], n: usize) -> Result<usize, StatsError> {
    if n == 0 {
        return Err(StatsError::InvalidN);
    }
    let mut seen = HashSet::new();
    for text in texts {
        let tokens = ngram_tokens(text.as_ref());
        for window in tokens.windows(n) {
            seen.insert(window.join(" "));
        }
    }
    Ok(seen.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub n_examples: usize,
    pub unique_utterances: usize,
    pub unique_queries: usize,
    pub avg_unique_tables_per_utterance: f64,
    /// Distinct utterance n-grams for the configured `ngram_n` (3 by default).
    pub utterance_3grams: usize,
    pub sql_3grams: usize,
    pub avg_nesting_level: f64,
    pub unique_templates: usize,
    pub avg_queries_per_template: f64,
    pub ngram_n: usize,
    /// Examples whose query did not parse; they are left out of the
    /// tree-based means.
    pub n_unparsed: usize,
}

struct ExampleStats {
    utterance_key: (String, String),
    utterance: String,
    query: String,
    template: Template,
    tree: Option<(usize, usize)>,
}

fn collapse(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn example_stats(example: &DatasetExample) -> ExampleStats {
    let query = normalize_text(&example.query);
    let (template, tree) = match parse(&query) {
        Ok(tree) => (
            to_template(&tree),
            Some((nesting_level(&tree), tables_per_query(&tree))),
        ),
        Err(_) => (template_of_text(&query), None),
    };
    ExampleStats {
        utterance_key: (
            collapse(&example.title),
            collapse(example.description.as_deref().unwrap_or("")),
        ),
        utterance: example.utterance(),
        query,
        template,
        tree,
    }
}

fn mean(values: impl Iterator<Item = usize>) -> f64 {
    let (sum, n) = values.fold((0usize, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum as f64 / n as f64
    }
}

pub fn dataset_stats(examples: &[DatasetExample]) -> Result<StatsReport, StatsError> {
    dataset_stats_with(examples, 3)
}

pub fn dataset_stats_with(
    examples: &[DatasetExample],
    n: usize,
) -> Result<StatsReport, StatsError> {
    if n == 0 {
        return Err(StatsError::InvalidN);
    }
    if examples.is_empty() {
        return Err(StatsError::EmptyCorpus);
    }
    let stats: Vec<ExampleStats> = examples.par_iter().map(example_stats).collect();
    let unique_utterances = stats
        .iter()
        .map(|s| &s.utterance_key)
        .collect::<HashSet<_>>()
        .len();
    let mut templates_of_queries = HashMap::new();
    for s in &stats {
        templates_of_queries
            .entry(s.query.as_str())
            .or_insert(&s.template);
    }
    let unique_queries = templates_of_queries.len();
    let unique_templates = templates_of_queries.values().collect::<HashSet<_>>().len();
    let parsed: Vec<(usize, usize)> = stats.iter().filter_map(|s| s.tree).collect();
    let utterances: Vec<&str> = stats.iter().map(|s| s.utterance.as_str()).collect();
    let queries: Vec<&str> = stats.iter().map(|s| s.query.as_str()).collect();
    Ok(StatsReport {
        n_examples: examples.len(),
        unique_utterances,
        unique_queries,
        avg_unique_tables_per_utterance: mean(parsed.iter().map(|t| t.1)),
        utterance_3grams: ngram_vocabulary(&utterances, n)?,
        sql_3grams: ngram_vocabulary(&queries, n)?,
        avg_nesting_level: mean(parsed.iter().map(|t| t.0)),
        unique_templates,
        avg_queries_per_template: unique_queries as f64 / unique_templates as f64,
        ngram_n: n,
        n_unparsed: stats.len() - parsed.len(),
    })
}

impl StatsReport {
    /// Plain-text table, one metric per row.
    pub fn to_table(&self) -> String {
        let n = self.ngram_n;
        let rows = [
            (
                "Unique utterances".to_string(),
                self.unique_utterances.to_string(),
            ),
            (
                "Unique queries".to_string(),
                self.unique_queries.to_string(),
            ),
            (
                "Avg unique tables / utterance".to_string(),
                format!("{:.2}", self.avg_unique_tables_per_utterance),
            ),
            (
                format!("Utterance {n}-grams"),
                self.utterance_3grams.to_string(),
            ),
            (format!("SQL {n}-grams"), self.sql_3grams.to_string()),
            (
                "Avg nesting level".to_string(),
                format!("{:.2}", self.avg_nesting_level),
            ),
            (
                "Unique templates".to_string(),
                self.unique_templates.to_string(),
            ),
            (
                "Avg queries / template".to_string(),
                format!("{:.2}", self.avg_queries_per_template),
            ),
            ("Examples".to_string(), self.n_examples.to_string()),
            ("Unparsed queries".to_string(), self.n_unparsed.to_string()),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let value_width = rows.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<width$}  {v:>value_width$}\n"))
            .collect()
    }
}
