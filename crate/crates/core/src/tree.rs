//! Labeled ordered syntax trees.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::subtree::ClauseCategory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Statement,
    Clause,
    Expression,
    Operator,
    /// Terminal keywords that are neither operators nor names: `*`, `NULL`,
    /// `DESC`, `DISTINCT`, `PERCENT`, data types.
    Keyword,
    Identifier,
    Literal,
    Parameter,
    Function,
    Subquery,
}

impl NodeKind {
    /// Kinds that only ever appear as leaves holding a source token.
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            NodeKind::Operator
                | NodeKind::Keyword
                | NodeKind::Identifier
                | NodeKind::Literal
                | NodeKind::Parameter
        )
    }
}

/// Labels of internal nodes. Terminals carry their token text instead.
pub mod label {
    pub const SCRIPT: &str = "script";
    pub const SELECT: &str = "select";
    pub const COMPOUND: &str = "compound";
    pub const SUBQUERY: &str = "subquery";
    pub const PAREN: &str = "paren";
    pub const TUPLE: &str = "tuple";
    pub const LIST: &str = "list";
    pub const ALIAS: &str = "alias";
    pub const ASSIGN: &str = "assign";
    pub const BINARY: &str = "binary";
    pub const UNARY: &str = "unary";
    pub const IN: &str = "in";
    pub const BETWEEN: &str = "between";
    pub const IS: &str = "is";
    pub const CASE: &str = "case";
    pub const CASE_SIMPLE: &str = "case_simple";
    pub const WHEN: &str = "when";
    pub const ELSE: &str = "else";
    pub const CALL: &str = "call";
    pub const CAST: &str = "cast";
    pub const OVER: &str = "over";
    pub const WITHIN_GROUP: &str = "within_group";
    pub const PARTITION: &str = "partition";
    pub const WINDOW_ORDER: &str = "window_order";
    pub const ORDER_ITEM: &str = "order_item";
    pub const JOIN: &str = "join";
    pub const ON: &str = "on";
    pub const TABLE_HINT: &str = "table_hint";
    pub const COLUMNS: &str = "columns";
    pub const WITH: &str = "with";
    pub const CTE: &str = "cte";
    pub const DECLARE: &str = "declare";
    pub const DECLARATION: &str = "declaration";
    pub const TABLE_TYPE: &str = "table_type";
    pub const COLUMN_DEF: &str = "column_def";
    pub const SET: &str = "set";
    pub const SET_OPTION: &str = "set_option";
    pub const INSERT: &str = "insert";
    pub const VALUES: &str = "values";
    pub const CREATE_TABLE: &str = "create_table";
    pub const DROP_TABLE: &str = "drop_table";
    pub const IF: &str = "if";
    pub const BLOCK: &str = "block";
    pub const PRINT: &str = "print";

    pub const CLAUSE_SELECT: &str = "SELECT";
    pub const CLAUSE_TOP: &str = "TOP";
    pub const CLAUSE_INTO: &str = "INTO";
    pub const CLAUSE_FROM: &str = "FROM";
    pub const CLAUSE_WHERE: &str = "WHERE";
    pub const CLAUSE_GROUP_BY: &str = "GROUP BY";
    pub const CLAUSE_HAVING: &str = "HAVING";
    pub const CLAUSE_ORDER_BY: &str = "ORDER BY";
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TreeNode {
    pub kind: NodeKind,
    pub label: String,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn leaf(kind: NodeKind, label: impl Into<String>) -> Self {
        TreeNode {
            kind,
            label: label.into(),
            children: Vec::new(),
        }
    }

    pub fn node(kind: NodeKind, label: &str, children: Vec<TreeNode>) -> Self {
        TreeNode {
            kind,
            label: label.to_string(),
            children,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// A leaf holding a token of the query text.
    pub fn is_terminal(&self) -> bool {
        self.is_leaf() && self.kind.is_terminal() && !self.label.is_empty()
    }

    pub fn is_label(&self, label: &str) -> bool {
        self.label == label
    }

    /// Category bucket of a clause node, `None` for other nodes and for
    /// clauses outside the category set (e.g. `INTO`).
    pub fn clause_category(&self) -> Option<ClauseCategory> {
        if self.kind != NodeKind::Clause {
            return None;
        }
        ClauseCategory::from_clause_label(&self.label)
    }

    /// Pre-order traversal.
    pub fn preorder(&self) -> Preorder<'_> {
        Preorder { stack: vec![self] }
    }

    pub fn node_count(&self) -> usize {
        self.preorder().count()
    }
}

pub struct Preorder<'a> {
    stack: Vec<&'a TreeNode>,
}

impl<'a> Iterator for Preorder<'a> {
    type Item = &'a TreeNode;

    fn next(&mut self) -> Option<&'a TreeNode> {
        let node = self.stack.pop()?;
        self.stack.extend(node.children.iter().rev());
        Some(node)
    }
}

impl fmt::Display for TreeNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::serialize::serialize(self))
    }
}

/// A parsed query: the `script` root, whose children are the top-level
/// statements, plus the owning clause category of every node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxTree {
    root: TreeNode,
    /// Indexed by pre-order position of the node under `root`.
    clause_index: Vec<Option<ClauseCategory>>,
}

impl SyntaxTree {
    pub fn new(root: TreeNode) -> Self {
        let mut clause_index = Vec::with_capacity(root.node_count());
        index_clauses(&root, None, &mut clause_index);
        SyntaxTree { root, clause_index }
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    pub fn into_root(self) -> TreeNode {
        self.root
    }

    pub fn statements(&self) -> &[TreeNode] {
        &self.root.children
    }

    /// Owning clause category of each node, in pre-order.
    pub fn clause_index(&self) -> &[Option<ClauseCategory>] {
        &self.clause_index
    }

    /// Pairs every node with its owning category, in pre-order.
    pub fn categorized_nodes(&self) -> impl Iterator<Item = (&TreeNode, Option<ClauseCategory>)> {
        self.root.preorder().zip(self.clause_index.iter().copied())
    }
}

// Clause nodes themselves own no category; everything below one takes the
// innermost enclosing clause, and non-category clauses (INTO) reset to none.
fn index_clauses(
    node: &TreeNode,
    current: Option<ClauseCategory>,
    out: &mut Vec<Option<ClauseCategory>>,
) {
    let (own, inherited) = if node.kind == NodeKind::Clause {
        (None, node.clause_category())
    } else {
        (current, current)
    };
    out.push(own);
    for child in &node.children {
        index_clauses(child, inherited, out);
    }
}
