//! Canonical string rendering of tree nodes.
//!
//! The rendering is the identity of a sub-tree for element-set membership:
//! keywords and identifiers are lower-cased, quoting of identifiers is
//! normalized, literal contents keep their case, tokens are separated by
//! single spaces, and the output is valid input for [`crate::parser::parse`].

use crate::parser::is_reserved;
use crate::tree::{label, NodeKind, TreeNode};

pub fn serialize(node: &TreeNode) -> String {
    let mut out = String::new();
    write_node(node, &mut out);
    out
}

fn push_sep(out: &mut String) {
    if !out.is_empty() && !out.ends_with(' ') {
        out.push(' ');
    }
}

fn word(out: &mut String, text: &str) {
    push_sep(out);
    out.push_str(text);
}

fn joined(children: &[TreeNode], sep: &str, out: &mut String) {
    for (i, child) in children.iter().enumerate() {
        if i > 0 {
            word(out, sep);
        }
        write_node(child, out);
    }
}

fn spaced(children: &[TreeNode], out: &mut String) {
    for child in children {
        write_node(child, out);
    }
}

fn write_node(node: &TreeNode, out: &mut String) {
    if node.is_leaf() {
        write_leaf(node, out);
        return;
    }
    let c = &node.children;
    if node.kind == NodeKind::Clause {
        write_clause(node, out);
        return;
    }
    match node.label.as_str() {
        label::SCRIPT => joined(c, ";", out),
        label::SUBQUERY | label::PAREN => {
            word(out, "(");
            spaced(c, out);
            word(out, ")");
        }
        label::TUPLE => {
            word(out, "(");
            joined(c, ",", out);
            word(out, ")");
        }
        label::COLUMNS => {
            word(out, "(");
            joined(c, ",", out);
            word(out, ")");
        }
        label::LIST => joined(c, ",", out),
        label::ALIAS => {
            write_node(&c[0], out);
            word(out, "as");
            spaced(&c[1..], out);
        }
        label::ASSIGN => {
            write_node(&c[0], out);
            word(out, "=");
            spaced(&c[1..], out);
        }
        label::BETWEEN => {
            spaced(&c[..3], out);
            word(out, "and");
            spaced(&c[3..], out);
        }
        label::CASE | label::CASE_SIMPLE => {
            word(out, "case");
            spaced(c, out);
            word(out, "end");
        }
        label::WHEN => {
            word(out, "when");
            write_node(&c[0], out);
            word(out, "then");
            spaced(&c[1..], out);
        }
        label::ELSE => {
            word(out, "else");
            spaced(c, out);
        }
        label::CALL => {
            if c[0].kind == NodeKind::Identifier {
                word(out, &canonical_function_name(&c[0].label));
            } else {
                write_node(&c[0], out);
            }
            word(out, "(");
            let args = &c[1..];
            let (modifier, rest) = match args.first() {
                Some(first)
                    if first.kind == NodeKind::Keyword
                        && (first.label.eq_ignore_ascii_case("distinct")
                            || first.label.eq_ignore_ascii_case("all")) =>
                {
                    (Some(first), &args[1..])
                }
                _ => (None, args),
            };
            if let Some(m) = modifier {
                write_node(m, out);
            }
            joined(rest, ",", out);
            word(out, ")");
        }
        label::CAST => {
            write_node(&c[0], out);
            word(out, "(");
            write_node(&c[1], out);
            word(out, "as");
            spaced(&c[2..], out);
            word(out, ")");
        }
        label::OVER => {
            write_node(&c[0], out);
            word(out, "over");
            word(out, "(");
            spaced(&c[1..], out);
            word(out, ")");
        }
        label::WITHIN_GROUP => {
            write_node(&c[0], out);
            word(out, "within group");
            word(out, "(");
            spaced(&c[1..], out);
            word(out, ")");
        }
        label::PARTITION => {
            word(out, "partition by");
            joined(c, ",", out);
        }
        label::WINDOW_ORDER => {
            word(out, "order by");
            joined(c, ",", out);
        }
        label::ON => {
            word(out, "on");
            spaced(c, out);
        }
        label::TABLE_HINT => {
            write_node(&c[0], out);
            word(out, "with");
            word(out, "(");
            spaced(&c[1..], out);
            word(out, ")");
        }
        label::WITH => {
            word(out, "with");
            let (ctes, body) = c.split_at(c.len() - 1);
            joined(ctes, ",", out);
            spaced(body, out);
        }
        label::CTE => {
            let (head, body) = c.split_at(c.len() - 1);
            spaced(head, out);
            word(out, "as");
            spaced(body, out);
        }
        label::DECLARE => {
            word(out, "declare");
            joined(c, ",", out);
        }
        label::DECLARATION => {
            write_node(&c[0], out);
            write_node(&c[1], out);
            if c.len() > 2 {
                word(out, "=");
                spaced(&c[2..], out);
            }
        }
        label::TABLE_TYPE => {
            word(out, "table");
            word(out, "(");
            joined(c, ",", out);
            word(out, ")");
        }
        label::SET | label::SET_OPTION => {
            word(out, "set");
            spaced(c, out);
        }
        label::INSERT => {
            word(out, "insert into");
            spaced(c, out);
        }
        label::VALUES => {
            word(out, "values");
            joined(c, ",", out);
        }
        label::CREATE_TABLE => {
            word(out, "create table");
            write_node(&c[0], out);
            word(out, "(");
            joined(&c[1..], ",", out);
            word(out, ")");
        }
        label::DROP_TABLE => {
            word(out, "drop table");
            spaced(c, out);
        }
        label::IF => {
            word(out, "if");
            write_node(&c[0], out);
            write_node(&c[1], out);
            if c.len() > 2 {
                word(out, "else");
                spaced(&c[2..], out);
            }
        }
        label::BLOCK => {
            word(out, "begin");
            joined(c, ";", out);
            word(out, "end");
        }
        label::PRINT => {
            word(out, "print");
            spaced(c, out);
        }
        // select, compound, binary, unary, in, is, join, order_item, column_def
        _ => spaced(c, out),
    }
}

fn write_clause(node: &TreeNode, out: &mut String) {
    let c = &node.children;
    match node.label.as_str() {
        label::CLAUSE_TOP => {
            word(out, "top");
            word(out, "(");
            write_node(&c[0], out);
            word(out, ")");
            spaced(&c[1..], out);
        }
        other => {
            word(out, &other.to_ascii_lowercase());
            spaced(c, out);
        }
    }
}

fn write_leaf(node: &TreeNode, out: &mut String) {
    push_sep(out);
    match node.kind {
        NodeKind::Identifier => out.push_str(&canonical_identifier(&node.label)),
        NodeKind::Literal => out.push_str(&canonical_literal(&node.label)),
        // the NoValues placeholder and any internal node that lost its
        // children render as their label
        _ => out.push_str(&node.label.to_lowercase()),
    }
}

fn canonical_literal(text: &str) -> String {
    if let Some(rest) = text.strip_prefix(['N', 'n']) {
        if rest.starts_with('\'') {
            return format!("n{rest}");
        }
    }
    if text.starts_with('\'') {
        text.to_string()
    } else {
        // numbers: 1E5 -> 1e5, 0X1F -> 0x1f
        text.to_lowercase()
    }
}

/// Splits a qualified name into its parts, honoring `[...]` and `"..."`
/// quoting. `db..t` yields an empty middle part.
pub fn split_qualified(name: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut start = 0;
    let mut quote: Option<char> = None;
    let mut chars = name.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match quote {
            Some(close) => {
                if c == close {
                    if chars.peek().is_some_and(|(_, n)| *n == close) {
                        chars.next();
                    } else {
                        quote = None;
                    }
                }
            }
            None => match c {
                '[' => quote = Some(']'),
                '"' => quote = Some('"'),
                '\'' => quote = Some('\''),
                '.' => {
                    parts.push(&name[start..i]);
                    start = i + 1;
                }
                _ => {}
            },
        }
    }
    parts.push(&name[start..]);
    parts
}

/// Unquoted, case-folded content of one name part.
pub fn unquote_part(part: &str) -> String {
    let inner = if part.len() >= 2
        && ((part.starts_with('[') && part.ends_with(']'))
            || (part.starts_with('"') && part.ends_with('"'))
            || (part.starts_with('\'') && part.ends_with('\'')))
    {
        let close = &part[part.len() - 1..];
        part[1..part.len() - 1].replace(&close.repeat(2), close)
    } else {
        part.to_string()
    };
    inner.to_lowercase()
}

fn is_plain_name(name: &str) -> bool {
    let mut chars = name.chars();
    let Some(first) = chars.next() else {
        return false;
    };
    (first.is_alphabetic() || first == '_' || first == '@' || first == '#')
        && chars.all(|c| c.is_alphanumeric() || matches!(c, '_' | '@' | '#' | '$'))
        && !is_reserved(name)
        && !name.starts_with("##")
}

// Built-in names such as LEFT and RIGHT are reserved words but need no
// brackets in call position.
fn canonical_function_name(name: &str) -> String {
    let parts = split_qualified(name);
    if parts.len() == 1 && !parts[0].starts_with(['[', '"']) {
        return parts[0].to_lowercase();
    }
    canonical_identifier(name)
}

/// Canonical rendering of an identifier: parts case-folded, brackets only
/// where needed.
pub fn canonical_identifier(name: &str) -> String {
    split_qualified(name)
        .into_iter()
        .map(|part| {
            if part == "*" || part.is_empty() {
                return part.to_string();
            }
            let content = unquote_part(part);
            if is_plain_name(&content) {
                content
            } else {
                format!("[{}]", content.replace(']', "]]"))
            }
        })
        .collect::<Vec<_>>()
        .join(".")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    fn roundtrip(sql: &str) -> String {
        serialize(parse(sql).unwrap().root())
    }

    #[test]
    fn leaf_renders_as_label() {
        assert_eq!(serialize(&TreeNode::leaf(NodeKind::Identifier, "b")), "b");
    }

    #[test]
    fn comparison_renders_spaced() {
        let tree = parse("SELECT a FROM t WHERE b = 1").unwrap();
        let where_clause = &tree.statements()[0].children[2];
        assert_eq!(serialize(&where_clause.children[0]), "b = 1");
    }

    #[test]
    fn keywords_fold_literals_keep_case() {
        assert_eq!(
            roundtrip("SELECT Title FROM Posts WHERE Tags LIKE '%C++%'"),
            "select title from posts where tags like '%C++%'"
        );
    }

    #[test]
    fn identifier_quoting_is_canonical() {
        assert_eq!(canonical_identifier("[Post Link]"), "[post link]");
        assert_eq!(canonical_identifier("\"Post Link\""), "[post link]");
        assert_eq!(canonical_identifier("'Ratio'"), "ratio");
        assert_eq!(canonical_identifier("[Posts]"), "posts");
        assert_eq!(canonical_identifier("p.[Id]"), "p.id");
        assert_eq!(canonical_identifier("[dbo].[Users]"), "dbo.users");
        assert_eq!(canonical_identifier("[a.b]"), "[a.b]");
        assert_eq!(canonical_identifier("[order]"), "[order]");
        assert_eq!(canonical_identifier("tempdb..#t"), "tempdb..#t");
        assert_eq!(canonical_identifier("u.*"), "u.*");
        assert_eq!(canonical_identifier("[a]]b]"), "[a]]b]");
    }

    #[test]
    fn alias_forms() {
        assert_eq!(
            roundtrip("SELECT p.Id as [Post Link], Score s, up = sum(x) FROM Posts p"),
            "select p.id as [post link] , score as s , up = sum ( x ) from posts as p"
        );
    }

    #[test]
    fn top_is_always_parenthesized() {
        assert_eq!(
            roundtrip("SELECT TOP 10 a FROM t"),
            "select top ( 10 ) a from t"
        );
        assert_eq!(
            roundtrip("SELECT TOP(5) PERCENT a FROM t"),
            "select top ( 5 ) percent a from t"
        );
    }

    #[test]
    fn count_star_and_distinct() {
        assert_eq!(
            roundtrip("SELECT COUNT(*), COUNT(DISTINCT a, b) FROM t"),
            "select count ( * ) , count ( distinct a , b ) from t"
        );
    }
}
