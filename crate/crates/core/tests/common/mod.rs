//! Shared test helpers: fixture access and a brute-force sub-tree enumerator
//! that is deliberately independent of the library's extraction code.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use pcm_core::dataset::{read_jsonl, DatasetExample};
use pcm_core::lexer::{tokenize, TokenKind};
use pcm_core::tree::{NodeKind, SyntaxTree, TreeNode};
use pcm_core::{normalize_text, parse, serialize};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

pub fn sample_corpus() -> Vec<DatasetExample> {
    read_jsonl(&fixture("sede_sample.jsonl")).unwrap()
}

/// Gold queries of the sample corpus that parse, normalized.
pub fn parseable_sample_queries() -> Vec<String> {
    sample_corpus()
        .into_iter()
        .map(|e| normalize_text(&e.query))
        .filter(|q| parse(q).is_ok())
        .collect()
}

pub fn small_queries() -> Vec<String> {
    read_fixture("small_queries.txt")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect()
}

pub fn token_count(text: &str) -> usize {
    tokenize(text)
        .unwrap()
        .iter()
        .filter(|t| t.kind != TokenKind::Eof)
        .count()
}

pub const NESTED_VOTES: &str = "SELECT  p.Id as [Post Link], p.Score from ( SELECT p.ParentId, count(*) as ContACnt from ( SELECT PostId, up = sum(case when VoteTypeId = 2 then 1 else 0 end), down = sum(case when VoteTypeId = 3 then 1 else 0 end) FROM Votes v join Posts p on p.Id = v.PostId WHERE VoteTypeId in (2,3) and PostTypeId = 2 group by PostId ) as ContA JOIN posts p on ContA.PostId = p.Id WHERE down > (up / ##UVDVRatio:int##) and (down + up) > ##MinVotes:int## GROUP BY p.ParentId ) as ContQ JOIN posts p on ContQ.ParentId = p.Id WHERE ContQ.ContACnt > (p.AnswerCount / 2) and p.AnswerCount > 1 ORDER BY Score desc";

/// The query tree flattened into an arena with parent links.
pub struct Arena<'a> {
    pub nodes: Vec<&'a TreeNode>,
    pub parent: Vec<Option<usize>>,
}

impl<'a> Arena<'a> {
    pub fn new(root: &'a TreeNode) -> Self {
        let mut nodes = Vec::new();
        let mut parent = Vec::new();
        let mut stack = vec![(root, None)];
        while let Some((node, up)) = stack.pop() {
            let id = nodes.len();
            nodes.push(node);
            parent.push(up);
            for child in node.children.iter().rev() {
                stack.push((child, Some(id)));
            }
        }
        Arena { nodes, parent }
    }

    fn is_descendant(&self, mut j: usize, i: usize) -> bool {
        loop {
            if j == i {
                return true;
            }
            match self.parent[j] {
                Some(p) => j = p,
                None => return false,
            }
        }
    }

    /// Every node whose ancestor chain passes through `i`, including `i`.
    pub fn closure(&self, i: usize) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&j| self.is_descendant(j, i))
            .collect()
    }

    pub fn grounded(&self, i: usize) -> bool {
        self.closure(i).into_iter().all(|j| {
            let n = self.nodes[j];
            !n.children.is_empty()
                || (!n.label.is_empty()
                    && matches!(
                        n.kind,
                        NodeKind::Operator
                            | NodeKind::Keyword
                            | NodeKind::Identifier
                            | NodeKind::Literal
                            | NodeKind::Parameter
                    ))
        })
    }

    /// Bucket of the nearest clause above `i`, by its keyword text.
    pub fn category(&self, i: usize) -> Option<&'static str> {
        if self.nodes[i].kind == NodeKind::Clause {
            return None;
        }
        let mut up = self.parent[i];
        while let Some(p) = up {
            if self.nodes[p].kind == NodeKind::Clause {
                return match self.nodes[p].label.as_str() {
                    "SELECT" => Some("SELECT"),
                    "TOP" => Some("TOP"),
                    "FROM" => Some("FROM"),
                    "WHERE" => Some("WHERE"),
                    "GROUP BY" => Some("GROUPBY"),
                    "HAVING" => Some("HAVING"),
                    "ORDER BY" => Some("ORDERBY"),
                    _ => None,
                };
            }
            up = self.parent[p];
        }
        None
    }
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct OracleSets {
    pub units: BTreeMap<&'static str, BTreeSet<String>>,
    pub elements: BTreeMap<&'static str, BTreeSet<String>>,
    /// (category, serialization) of every grounded sub-tree, sorted.
    pub subtrees: Vec<(&'static str, String)>,
}

pub fn oracle_sets(tree: &SyntaxTree) -> OracleSets {
    let arena = Arena::new(tree.root());
    let mut out = OracleSets::default();
    for i in 0..arena.nodes.len() {
        let Some(category) = arena.category(i) else {
            continue;
        };
        if !arena.grounded(i) {
            continue;
        }
        let text = serialize(arena.nodes[i]);
        out.subtrees.push((category, text.clone()));
        out.units.entry(category).or_default().insert(text);
        let elements = out.elements.entry(category).or_default();
        for j in arena.closure(i) {
            if arena.nodes[j].kind != NodeKind::Clause {
                elements.insert(serialize(arena.nodes[j]));
            }
        }
    }
    out.subtrees.sort();
    out
}

pub const CATEGORIES: [&str; 7] = [
    "SELECT", "TOP", "FROM", "WHERE", "GROUPBY", "HAVING", "ORDERBY",
];

pub type OracleRow = (&'static str, f64, f64, f64);

/// Per-category (precision, recall, f1) and the mean, recomputed from
/// oracle sets with plain ratios.
pub fn oracle_score(pred: &OracleSets, gold: &OracleSets) -> (Vec<OracleRow>, f64, bool) {
    let empty = BTreeSet::new();
    let mut rows = Vec::new();
    let mut exact = true;
    for c in CATEGORIES {
        let pu = pred.units.get(c).unwrap_or(&empty);
        let gu = gold.units.get(c).unwrap_or(&empty);
        if pu.is_empty() && gu.is_empty() {
            continue;
        }
        let pe = pred.elements.get(c).unwrap_or(&empty);
        let ge = gold.elements.get(c).unwrap_or(&empty);
        let ratio = |hits: usize, n: usize| if n == 0 { 0.0 } else { hits as f64 / n as f64 };
        let p = ratio(pu.iter().filter(|u| ge.contains(*u)).count(), pu.len());
        let r = ratio(gu.iter().filter(|u| pe.contains(*u)).count(), gu.len());
        let f1 = if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        };
        exact &= p == 1.0 && r == 1.0;
        rows.push((c, p, r, f1));
    }
    let mean = if rows.is_empty() || exact {
        1.0
    } else {
        rows.iter().map(|r| r.3).sum::<f64>() / rows.len() as f64
    };
    (rows, mean, exact)
}

/// Oracle PCM-F1 of two raw texts; `None` when the gold side does not parse.
pub fn oracle_pcm(pred: &str, gold: &str) -> Option<(f64, bool)> {
    let gold = parse(&normalize_text(gold)).ok()?;
    let Ok(pred) = parse(&normalize_text(pred)) else {
        return Some((0.0, false));
    };
    let (_, f1, em) = oracle_score(&oracle_sets(&pred), &oracle_sets(&gold));
    Some((f1, em))
}

const SIZED_TYPES: [&str; 10] = [
    "decimal",
    "numeric",
    "varchar",
    "nvarchar",
    "char",
    "nchar",
    "varbinary",
    "float",
    "datetime2",
    "time",
];

/// True for the `10` and `2` of `decimal(10, 2)`: type precision, not a value.
fn in_type_arguments(tokens: &[pcm_core::lexer::Token], k: usize) -> bool {
    let mut j = k;
    while j > 0 {
        j -= 1;
        match tokens[j].text {
            "," => continue,
            "(" => {
                return j > 0
                    && SIZED_TYPES.contains(&tokens[j - 1].text.to_ascii_lowercase().as_str());
            }
            _ if tokens[j].kind == TokenKind::Number => continue,
            _ => return false,
        }
    }
    false
}

/// Rewrites every literal and parameter token of `text` to a different
/// value chosen from `salt`, leaving everything else untouched.
pub fn mutate_literals(text: &str, salt: usize) -> String {
    let tokens = tokenize(text).unwrap();
    let mut out = String::new();
    let mut last = 0;
    for (k, t) in tokens.iter().enumerate() {
        if in_type_arguments(&tokens, k) {
            continue;
        }
        let replacement = match t.kind {
            TokenKind::Number => format!("{}", 7 + salt * 13 + k),
            TokenKind::String => format!("'v{salt}_{k}'"),
            TokenKind::Parameter => format!("##P{salt}x{k}:int##"),
            _ => continue,
        };
        out.push_str(&text[last..t.offset]);
        out.push_str(&replacement);
        last = t.offset + t.text.len();
    }
    out.push_str(&text[last..]);
    out
}
