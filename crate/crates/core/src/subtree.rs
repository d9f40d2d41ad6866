//! Clause-bucketed sub-tree extraction.
//!
//! A *grounded sub-tree* is a node of the query tree together with all of its
//! descendants, where every leaf is a terminal token of the query. Clause
//! nodes are containers and never count as sub-trees themselves. Each
//! grounded sub-tree belongs to the category of the innermost clause that
//! encloses its root, across all query scopes; roots outside the seven
//! category clauses (DECLARE bodies, CTE headers, `INTO` targets) are dropped.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::serialize::serialize;
use crate::tree::{label, NodeKind, SyntaxTree, TreeNode};

/// Placeholder that replaces literal and parameter values.
pub const VALUE_PLACEHOLDER: &str = "value";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClauseCategory {
    #[serde(rename = "SELECT")]
    Select,
    #[serde(rename = "TOP")]
    Top,
    #[serde(rename = "FROM")]
    From,
    #[serde(rename = "WHERE")]
    Where,
    #[serde(rename = "GROUPBY")]
    GroupBy,
    #[serde(rename = "HAVING")]
    Having,
    #[serde(rename = "ORDERBY")]
    OrderBy,
}

impl ClauseCategory {
    pub const ALL: [ClauseCategory; 7] = [
        ClauseCategory::Select,
        ClauseCategory::Top,
        ClauseCategory::From,
        ClauseCategory::Where,
        ClauseCategory::GroupBy,
        ClauseCategory::Having,
        ClauseCategory::OrderBy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClauseCategory::Select => "SELECT",
            ClauseCategory::Top => "TOP",
            ClauseCategory::From => "FROM",
            ClauseCategory::Where => "WHERE",
            ClauseCategory::GroupBy => "GROUPBY",
            ClauseCategory::Having => "HAVING",
            ClauseCategory::OrderBy => "ORDERBY",
        }
    }

    pub fn from_clause_label(clause: &str) -> Option<Self> {
        match clause {
            label::CLAUSE_SELECT => Some(ClauseCategory::Select),
            label::CLAUSE_TOP => Some(ClauseCategory::Top),
            label::CLAUSE_FROM => Some(ClauseCategory::From),
            label::CLAUSE_WHERE => Some(ClauseCategory::Where),
            label::CLAUSE_GROUP_BY => Some(ClauseCategory::GroupBy),
            label::CLAUSE_HAVING => Some(ClauseCategory::Having),
            label::CLAUSE_ORDER_BY => Some(ClauseCategory::OrderBy),
            _ => None,
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for ClauseCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-category sets of canonical sub-tree strings. Serializes as a JSON
/// object from category name to a sorted array, omitting empty categories.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElementSets {
    per_category: BTreeMap<ClauseCategory, BTreeSet<String>>,
}

static EMPTY: BTreeSet<String> = BTreeSet::new();

impl ElementSets {
    pub fn get(&self, category: ClauseCategory) -> &BTreeSet<String> {
        self.per_category.get(&category).unwrap_or(&EMPTY)
    }

    pub fn insert(&mut self, category: ClauseCategory, element: String) {
        self.per_category
            .entry(category)
            .or_default()
            .insert(element);
    }

    pub fn total_count(&self) -> usize {
        self.per_category.values().map(BTreeSet::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClauseCategory, &BTreeSet<String>)> {
        self.per_category.iter().map(|(c, s)| (*c, s))
    }
}

/// Everything the metrics need from one query: per category, the distinct
/// grounded sub-trees rooted there (`units`) and the union of their element
/// sets (`elements`).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub units: ElementSets,
    pub elements: ElementSets,
}

/// Grounded flag of every node, in pre-order.
fn grounded_flags(root: &TreeNode) -> Vec<bool> {
    fn visit(node: &TreeNode, out: &mut Vec<bool>) -> bool {
        let slot = out.len();
        out.push(false);
        let grounded = if node.is_leaf() {
            node.is_terminal()
        } else {
            let mut all = true;
            for child in &node.children {
                all &= visit(child, out);
            }
            all
        };
        out[slot] = grounded;
        grounded
    }
    let mut out = Vec::new();
    visit(root, &mut out);
    out
}

/// Every grounded sub-tree with the category of the clause containing its root.
pub fn grounded_subtrees(tree: &SyntaxTree) -> Vec<(ClauseCategory, &TreeNode)> {
    let grounded = grounded_flags(tree.root());
    tree.categorized_nodes()
        .zip(grounded)
        .filter_map(|((node, category), grounded)| {
            let category = category?;
            (grounded && node.kind != NodeKind::Clause).then_some((category, node))
        })
        .collect()
}

/// Serializations of every sub-tree of `subtree`, including its leaves and
/// itself.
pub fn elements_of(subtree: &TreeNode) -> BTreeSet<String> {
    subtree
        .preorder()
        .filter(|n| n.kind != NodeKind::Clause)
        .map(serialize)
        .collect()
}

pub fn element_sets(tree: &SyntaxTree) -> ElementSets {
    extract(tree).elements
}

/// Units and elements in one pass. Each node is serialized once; its string
/// joins the element set of every category that has a unit among its
/// ancestors-or-self.
pub fn extract(tree: &SyntaxTree) -> Extraction {
    let grounded = grounded_flags(tree.root());
    let index = tree.clause_index();
    let mut out = Extraction::default();
    let mut position = 0usize;
    walk(tree.root(), 0, index, &grounded, &mut position, &mut out);
    out
}

fn walk(
    node: &TreeNode,
    inherited: u8,
    index: &[Option<ClauseCategory>],
    grounded: &[bool],
    position: &mut usize,
    out: &mut Extraction,
) {
    let here = *position;
    *position += 1;
    let is_clause = node.kind == NodeKind::Clause;
    let unit_category = index[here].filter(|_| grounded[here] && !is_clause);
    let mask = inherited | unit_category.map_or(0, ClauseCategory::bit);
    if mask != 0 && !is_clause {
        let text = serialize(node);
        for category in ClauseCategory::ALL {
            if mask & category.bit() != 0 {
                out.elements.insert(category, text.clone());
            }
        }
        if let Some(category) = unit_category {
            out.units.insert(category, text);
        }
    }
    for child in &node.children {
        walk(child, mask, index, grounded, position, out);
    }
}

fn map_leaves(node: &TreeNode, f: &impl Fn(&TreeNode) -> Option<TreeNode>) -> TreeNode {
    if node.is_leaf() {
        return f(node).unwrap_or_else(|| node.clone());
    }
    TreeNode {
        kind: node.kind,
        label: node.label.clone(),
        children: node.children.iter().map(|c| map_leaves(c, f)).collect(),
    }
}

/// Replaces every literal and parameter leaf with [`VALUE_PLACEHOLDER`].
pub fn anonymize_values(tree: &SyntaxTree) -> SyntaxTree {
    let root = map_leaves(tree.root(), &|leaf| match leaf.kind {
        NodeKind::Literal | NodeKind::Parameter => {
            Some(TreeNode::leaf(leaf.kind, VALUE_PLACEHOLDER))
        }
        _ => None,
    });
    SyntaxTree::new(root)
}

/// Removes the `ON` condition of every join, keeping the join and its tables.
pub fn strip_on_clauses(tree: &SyntaxTree) -> SyntaxTree {
    fn strip(node: &TreeNode) -> TreeNode {
        let children = node
            .children
            .iter()
            .filter(|c| !(node.label == label::JOIN && c.label == label::ON && !c.is_leaf()))
            .map(strip)
            .collect();
        TreeNode {
            kind: node.kind,
            label: node.label.clone(),
            children,
        }
    }
    SyntaxTree::new(strip(tree.root()))
}

/// The NoValues view of a query: values anonymized and join conditions dropped.
pub fn novalues_view(tree: &SyntaxTree) -> SyntaxTree {
    strip_on_clauses(&anonymize_values(tree))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn where_condition(sql: &str) -> TreeNode {
        let tree = parse(sql).unwrap();
        tree.root()
            .preorder()
            .find(|n| n.label == label::CLAUSE_WHERE)
            .unwrap()
            .children[0]
            .clone()
    }

    #[test]
    fn comparison_has_four_elements() {
        let cond = where_condition("SELECT a FROM t WHERE b = 1");
        assert_eq!(elements_of(&cond), set(&["b", "=", "1", "b = 1"]));
    }

    #[test]
    fn leaf_yields_itself() {
        assert_eq!(
            elements_of(&TreeNode::leaf(NodeKind::Identifier, "a")),
            set(&["a"])
        );
    }

    #[test]
    fn single_leaf_clauses() {
        let sets = element_sets(&parse("SELECT a FROM t").unwrap());
        assert_eq!(sets.get(ClauseCategory::Select), &set(&["a"]));
        assert_eq!(sets.get(ClauseCategory::From), &set(&["t"]));
        assert!(sets.get(ClauseCategory::Where).is_empty());
        assert_eq!(sets.total_count(), 2);
        assert_eq!(
            serde_json::to_string(&sets).unwrap(),
            r#"{"SELECT":["a"],"FROM":["t"]}"#
        );
    }

    #[test]
    fn select_list_counts_list_and_items() {
        let ext = extract(&parse("SELECT a, b WHERE b = 1").unwrap());
        assert_eq!(
            ext.units.get(ClauseCategory::Select),
            &set(&["a", "b", "a , b"])
        );
        assert_eq!(ext.units.get(ClauseCategory::Where).len(), 4);
        assert_eq!(
            grounded_subtrees(&parse("SELECT a, b WHERE b = 1").unwrap()).len(),
            7
        );
    }

    #[test]
    fn top_holds_count_and_percent() {
        let ext = extract(&parse("SELECT TOP 10 PERCENT a FROM t").unwrap());
        assert_eq!(ext.units.get(ClauseCategory::Top), &set(&["10", "percent"]));
    }

    #[test]
    fn declare_and_cte_header_are_uncategorized() {
        let tree = parse(
            "DECLARE @n int = 5; WITH c (x) AS (SELECT x FROM t) SELECT x FROM c WHERE x > @n",
        )
        .unwrap();
        let ext = extract(&tree);
        let all: BTreeSet<String> = ext.elements.iter().flat_map(|(_, s)| s.clone()).collect();
        assert!(!all.contains("5"));
        assert!(!all.contains("int"));
        // the CTE body still contributes
        assert_eq!(ext.units.get(ClauseCategory::From), &set(&["t", "c"]));
    }

    #[test]
    fn anonymize_replaces_values_only() {
        let tree = parse("SELECT a FROM t WHERE score > 0 AND tags LIKE '%c++%' AND x = ##X:int##")
            .unwrap();
        let anon = anonymize_values(&tree);
        assert_eq!(
            serialize(anon.root()),
            "select a from t where score > value and tags like value and x = value"
        );
        assert_eq!(anonymize_values(&anon), anon);
    }

    #[test]
    fn strip_on_removes_join_conditions() {
        let tree = parse("SELECT a FROM a JOIN b ON a.id = b.id").unwrap();
        let stripped = strip_on_clauses(&tree);
        let from = element_sets(&stripped);
        let from = from.get(ClauseCategory::From);
        assert!(from.contains("a") && from.contains("b") && from.contains("join"));
        assert!(from.iter().all(|e| !e.contains("a.id = b.id")));
        assert_eq!(strip_on_clauses(&stripped), stripped);
    }

    #[test]
    fn strip_on_without_join_is_noop() {
        let tree = parse("SELECT a FROM t WHERE b = 1").unwrap();
        assert_eq!(strip_on_clauses(&tree), tree);
    }

    #[test]
    fn parent_elements_contain_child_elements() {
        let tree = parse("SELECT count(*) FROM t GROUP BY a HAVING count(*) > 2").unwrap();
        for (_, node) in grounded_subtrees(&tree) {
            let parent = elements_of(node);
            for child in &node.children {
                assert!(elements_of(child).is_subset(&parent));
            }
        }
    }
}
