//! Recursive-descent parser for the T-SQL subset used by Data Explorer
//! queries.
//!
//! Coverage: `SELECT` with `DISTINCT`/`TOP`, aliases in every T-SQL form,
//! `INTO`, `FROM` with comma lists, joins and `APPLY`, derived tables,
//! `WHERE`/`GROUP BY`/`HAVING`/`ORDER BY`, set operators, `CASE`, function
//! calls with `DISTINCT`, window functions, `CAST`/`CONVERT`, `DECLARE`,
//! `SET`, common table expressions, `INSERT`, `CREATE TABLE`, `DROP TABLE`,
//! `IF`/`BEGIN ... END` and `PRINT`.

use std::fmt;

use crate::lexer::{tokenize, Token, TokenKind};
use crate::tree::{label, NodeKind, SyntaxTree, TreeNode};

const MAX_DEPTH: usize = 96;
const MAX_CHAIN: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// Byte offset into the parsed text.
    pub offset: usize,
    pub expected: String,
    pub found: String,
}

impl ParseError {
    pub(crate) fn new(offset: usize, expected: &str, found: &str) -> Self {
        ParseError {
            offset,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "expected {}, found {} at byte {}",
            self.expected, self.found, self.offset
        )
    }
}

impl std::error::Error for ParseError {}

/// Words that can never be a bare identifier or alias.
const RESERVED: &[&str] = &[
    "ALL",
    "AND",
    "ANY",
    "APPLY",
    "AS",
    "ASC",
    "BEGIN",
    "BETWEEN",
    "BY",
    "CASE",
    "COLLATE",
    "CREATE",
    "CROSS",
    "DECLARE",
    "DELETE",
    "DESC",
    "DISTINCT",
    "DROP",
    "ELSE",
    "END",
    "ESCAPE",
    "EXCEPT",
    "EXEC",
    "EXECUTE",
    "EXISTS",
    "FETCH",
    "FOR",
    "FROM",
    "FULL",
    "GO",
    "GROUP",
    "HAVING",
    "IF",
    "IN",
    "INNER",
    "INSERT",
    "INTERSECT",
    "INTO",
    "IS",
    "JOIN",
    "LEFT",
    "LIKE",
    "NOT",
    "NULL",
    "OFFSET",
    "ON",
    "OPTION",
    "OR",
    "ORDER",
    "OUTER",
    "OVER",
    "PERCENT",
    "PIVOT",
    "PRINT",
    "RETURN",
    "RIGHT",
    "SELECT",
    "SET",
    "SOME",
    "TABLE",
    "THEN",
    "TOP",
    "UNION",
    "UNPIVOT",
    "UPDATE",
    "USE",
    "VALUES",
    "WHEN",
    "WHERE",
    "WHILE",
    "WITH",
    "WITHIN",
];

pub fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|r| r.eq_ignore_ascii_case(word))
}

/// Parses normalized query text into a syntax tree.
pub fn parse(text: &str) -> Result<SyntaxTree, ParseError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        depth: 0,
    };
    let root = parser.script()?;
    Ok(SyntaxTree::new(root))
}

struct Parser<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    depth: usize,
}

fn leaf(kind: NodeKind, text: &str) -> TreeNode {
    TreeNode::leaf(kind, text)
}

fn node(kind: NodeKind, name: &str, children: Vec<TreeNode>) -> TreeNode {
    TreeNode::node(kind, name, children)
}

fn expr(name: &str, children: Vec<TreeNode>) -> TreeNode {
    node(NodeKind::Expression, name, children)
}

fn list_or_single(mut items: Vec<TreeNode>) -> TreeNode {
    if items.len() == 1 {
        items.pop().unwrap()
    } else {
        expr(label::LIST, items)
    }
}

impl<'a> Parser<'a> {
    // ---- token helpers ----

    fn peek(&self) -> &Token<'a> {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, ahead: usize) -> &Token<'a> {
        let i = (self.pos + ahead).min(self.tokens.len() - 1);
        &self.tokens[i]
    }

    fn advance(&mut self) -> Token<'a> {
        let tok = self.tokens[self.pos].clone();
        if tok.kind != TokenKind::Eof {
            self.pos += 1;
        }
        tok
    }

    fn at_word(&self, word: &str) -> bool {
        self.peek().is_word(word)
    }

    fn at_symbol(&self, symbol: &str) -> bool {
        self.peek().is_symbol(symbol)
    }

    fn eat_word(&mut self, word: &str) -> bool {
        if self.at_word(word) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_symbol(&mut self, symbol: &str) -> bool {
        if self.at_symbol(symbol) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn error(&self, expected: &str) -> ParseError {
        let tok = self.peek();
        let found = if tok.kind == TokenKind::Eof {
            "end of input".to_string()
        } else {
            format!("'{}'", tok.text)
        };
        ParseError::new(tok.offset, expected, &found)
    }

    fn expect_word(&mut self, word: &str) -> Result<Token<'a>, ParseError> {
        if self.at_word(word) {
            Ok(self.advance())
        } else {
            Err(self.error(word))
        }
    }

    fn expect_symbol(&mut self, symbol: &str) -> Result<(), ParseError> {
        if self.eat_symbol(symbol) {
            Ok(())
        } else {
            Err(self.error(&format!("'{symbol}'")))
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.error("shallower nesting"));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    /// Text of a run of tokens joined by single spaces, e.g. `LEFT OUTER JOIN`.
    fn joined(parts: &[Token<'_>]) -> String {
        parts.iter().map(|t| t.text).collect::<Vec<_>>().join(" ")
    }

    fn at_query_start(&self) -> bool {
        self.at_word("SELECT") || (self.at_symbol("(") && self.paren_starts_query(0))
    }

    // `(` at `ahead` opens a query if, after any further `(`, SELECT follows.
    fn paren_starts_query(&self, ahead: usize) -> bool {
        let mut i = ahead;
        while self.peek_at(i).is_symbol("(") {
            i += 1;
        }
        i > ahead && self.peek_at(i).is_word("SELECT")
    }

    // ---- statements ----

    fn script(&mut self) -> Result<TreeNode, ParseError> {
        let mut statements = Vec::new();
        self.skip_separators();
        while self.peek().kind != TokenKind::Eof {
            statements.push(self.statement()?);
            self.skip_separators();
        }
        if statements.is_empty() {
            return Err(self.error("statement"));
        }
        Ok(node(NodeKind::Statement, label::SCRIPT, statements))
    }

    fn skip_separators(&mut self) {
        while self.eat_symbol(";") || self.eat_word("GO") {}
    }

    fn statement(&mut self) -> Result<TreeNode, ParseError> {
        self.enter()?;
        let result = self.statement_inner();
        self.leave();
        result
    }

    fn statement_inner(&mut self) -> Result<TreeNode, ParseError> {
        if self.at_query_start() {
            return self.query();
        }
        let tok = self.peek().clone();
        if tok.kind != TokenKind::Word {
            return Err(self.error("statement"));
        }
        match tok.text.to_ascii_uppercase().as_str() {
            "WITH" => self.with_statement(),
            "DECLARE" => self.declare(),
            "SET" => self.set_statement(),
            "INSERT" => self.insert(),
            "CREATE" => self.create_table(),
            "DROP" => self.drop_table(),
            "IF" => self.if_statement(),
            "BEGIN" => self.block(),
            "PRINT" => {
                self.advance();
                let value = self.expr()?;
                Ok(node(NodeKind::Statement, label::PRINT, vec![value]))
            }
            _ => Err(self.error("statement")),
        }
    }

    fn with_statement(&mut self) -> Result<TreeNode, ParseError> {
        self.expect_word("WITH")?;
        let mut children = Vec::new();
        loop {
            children.push(self.cte()?);
            if !self.eat_symbol(",") {
                break;
            }
        }
        let body = if self.at_word("INSERT") {
            self.insert()?
        } else {
            self.query()?
        };
        children.push(body);
        Ok(node(NodeKind::Statement, label::WITH, children))
    }

    fn cte(&mut self) -> Result<TreeNode, ParseError> {
        let name = self.bare_name("common table expression name")?;
        let mut children = vec![name];
        if self.at_symbol("(") {
            children.push(self.column_names()?);
        }
        self.expect_word("AS")?;
        self.expect_symbol("(")?;
        let body = self.query()?;
        self.expect_symbol(")")?;
        children.push(node(NodeKind::Subquery, label::SUBQUERY, vec![body]));
        Ok(node(NodeKind::Statement, label::CTE, children))
    }

    fn column_names(&mut self) -> Result<TreeNode, ParseError> {
        self.expect_symbol("(")?;
        let mut names = Vec::new();
        loop {
            names.push(self.bare_name("column name")?);
            if !self.eat_symbol(",") {
                break;
            }
        }
        self.expect_symbol(")")?;
        Ok(expr(label::COLUMNS, names))
    }

    fn declare(&mut self) -> Result<TreeNode, ParseError> {
        self.expect_word("DECLARE")?;
        let mut decls = Vec::new();
        loop {
            let var = self.peek().clone();
            if var.kind != TokenKind::Variable {
                return Err(self.error("variable"));
            }
            self.advance();
            self.eat_word("AS");
            let mut children = vec![leaf(NodeKind::Identifier, var.text)];
            if self.eat_word("TABLE") {
                children.push(self.table_type()?);
            } else {
                children.push(self.data_type()?);
                if self.eat_symbol("=") {
                    children.push(self.expr()?);
                }
            }
            decls.push(node(NodeKind::Statement, label::DECLARATION, children));
            if !self.eat_symbol(",") {
                break;
            }
        }
        Ok(node(NodeKind::Statement, label::DECLARE, decls))
    }

    fn table_type(&mut self) -> Result<TreeNode, ParseError> {
        let defs = self.column_defs()?;
        Ok(node(NodeKind::Statement, label::TABLE_TYPE, defs))
    }

    fn column_defs(&mut self) -> Result<Vec<TreeNode>, ParseError> {
        self.expect_symbol("(")?;
        let mut defs = Vec::new();
        loop {
            let name = self.bare_name("column name")?;
            let spec = self.raw_until_comma_or_close()?;
            if spec.is_empty() {
                return Err(self.error("column type"));
            }
            defs.push(node(
                NodeKind::Statement,
                label::COLUMN_DEF,
                vec![name, leaf(NodeKind::Keyword, &spec)],
            ));
            if !self.eat_symbol(",") {
                break;
            }
        }
        self.expect_symbol(")")?;
        Ok(defs)
    }

    // Collects tokens up to a top-level `,` or `)` and renders them compactly.
    fn raw_until_comma_or_close(&mut self) -> Result<String, ParseError> {
        let mut depth = 0usize;
        let mut parts: Vec<&str> = Vec::new();
        loop {
            let tok = self.peek().clone();
            match tok.kind {
                TokenKind::Eof => return Err(self.error("')'")),
                TokenKind::Symbol if depth == 0 && (tok.text == "," || tok.text == ")") => break,
                TokenKind::Symbol if tok.text == "(" => depth += 1,
                TokenKind::Symbol if tok.text == ")" => depth -= 1,
                _ => {}
            }
            parts.push(tok.text);
            self.advance();
        }
        Ok(compact_tokens(&parts))
    }

    fn data_type(&mut self) -> Result<TreeNode, ParseError> {
        let name = self.peek().clone();
        if name.kind != TokenKind::Word && name.kind != TokenKind::QuotedIdent {
            return Err(self.error("data type"));
        }
        self.advance();
        let mut parts = vec![name.text];
        // `double precision`, `char varying`
        while self.peek().kind == TokenKind::Word
            && ["PRECISION", "VARYING"]
                .iter()
                .any(|w| self.peek().text.eq_ignore_ascii_case(w))
        {
            parts.push(self.advance().text);
        }
        let mut text = parts.join(" ");
        if self.eat_symbol("(") {
            let mut args = Vec::new();
            loop {
                let tok = self.peek().clone();
                if tok.kind == TokenKind::Number || tok.is_word("MAX") {
                    args.push(self.advance().text);
                } else {
                    return Err(self.error("type length"));
                }
                if !self.eat_symbol(",") {
                    break;
                }
            }
            self.expect_symbol(")")?;
            text = format!("{text}({})", args.join(","));
        }
        Ok(leaf(NodeKind::Keyword, &text))
    }

    fn set_statement(&mut self) -> Result<TreeNode, ParseError> {
        self.expect_word("SET")?;
        let tok = self.peek().clone();
        if tok.kind == TokenKind::Variable {
            self.advance();
            let op = self.peek().clone();
            if !["=", "+=", "-=", "*=", "/="]
                .iter()
                .any(|s| op.is_symbol(s))
            {
                return Err(self.error("'='"));
            }
            self.advance();
            let value = self.expr()?;
            return Ok(node(
                NodeKind::Statement,
                label::SET,
                vec![
                    leaf(NodeKind::Identifier, tok.text),
                    leaf(NodeKind::Operator, op.text),
                    value,
                ],
            ));
        }
        // SET NOCOUNT ON, SET ANSI_WARNINGS OFF, ...
        let mut words = Vec::new();
        while self.peek().kind == TokenKind::Word && !self.at_statement_keyword() {
            words.push(self.advance());
            if words.len() > 1
                && (words.last().unwrap().is_word("ON") || words.last().unwrap().is_word("OFF"))
            {
                break;
            }
        }
        if words.is_empty() {
            return Err(self.error("variable or option"));
        }
        Ok(node(
            NodeKind::Statement,
            label::SET_OPTION,
            vec![leaf(NodeKind::Keyword, &Self::joined(&words))],
        ))
    }

    fn at_statement_keyword(&self) -> bool {
        [
            "SELECT", "WITH", "DECLARE", "SET", "INSERT", "CREATE", "DROP", "IF", "BEGIN", "PRINT",
            "GO",
        ]
        .iter()
        .any(|w| self.at_word(w))
    }

    fn insert(&mut self) -> Result<TreeNode, ParseError> {
        self.expect_word("INSERT")?;
        self.eat_word("INTO");
        let mut children = vec![self.qualified_name("table name")?];
        if self.at_symbol("(") && !self.paren_starts_query(0) {
            children.push(self.column_names()?);
        }
        if self.eat_word("VALUES") {
            let mut rows = Vec::new();
            loop {
                rows.push(self.tuple()?);
                if !self.eat_symbol(",") {
                    break;
                }
            }
            children.push(node(NodeKind::Statement, label::VALUES, rows));
        } else {
            children.push(self.query()?);
        }
        Ok(node(NodeKind::Statement, label::INSERT, children))
    }

    fn create_table(&mut self) -> Result<TreeNode, ParseError> {
        self.expect_word("CREATE")?;
        self.expect_word("TABLE")?;
        let name = self.qualified_name("table name")?;
        let mut children = vec![name];
        children.extend(self.column_defs()?);
        Ok(node(NodeKind::Statement, label::CREATE_TABLE, children))
    }

    fn drop_table(&mut self) -> Result<TreeNode, ParseError> {
        self.expect_word("DROP")?;
        self.expect_word("TABLE")?;
        let mut children = Vec::new();
        if self.at_word("IF") && self.peek_at(1).is_word("EXISTS") {
            self.pos += 2;
            children.push(leaf(NodeKind::Keyword, "IF EXISTS"));
        }
        children.push(self.qualified_name("table name")?);
        Ok(node(NodeKind::Statement, label::DROP_TABLE, children))
    }

    fn if_statement(&mut self) -> Result<TreeNode, ParseError> {
        self.expect_word("IF")?;
        let cond = self.expr()?;
        let then = self.statement()?;
        let mut children = vec![cond, then];
        if self.eat_word("ELSE") {
            children.push(self.statement()?);
        }
        Ok(node(NodeKind::Statement, label::IF, children))
    }

    fn block(&mut self) -> Result<TreeNode, ParseError> {
        self.expect_word("BEGIN")?;
        let mut statements = Vec::new();
        self.skip_separators();
        while !self.at_word("END") {
            if self.peek().kind == TokenKind::Eof {
                return Err(self.error("END"));
            }
            statements.push(self.statement()?);
            self.skip_separators();
        }
        self.expect_word("END")?;
        Ok(node(NodeKind::Statement, label::BLOCK, statements))
    }

    // ---- queries ----

    fn query(&mut self) -> Result<TreeNode, ParseError> {
        self.enter()?;
        let result = self.query_inner();
        self.leave();
        result
    }

    fn query_inner(&mut self) -> Result<TreeNode, ParseError> {
        let mut left = self.query_term()?;
        let mut chain = 0;
        loop {
            let op = if self.at_word("UNION") {
                let first = self.advance();
                if self.at_word("ALL") {
                    let all = self.advance();
                    Self::joined(&[first, all])
                } else {
                    first.text.to_string()
                }
            } else if self.at_word("EXCEPT") || self.at_word("INTERSECT") {
                self.advance().text.to_string()
            } else {
                break;
            };
            chain += 1;
            if chain > MAX_CHAIN {
                return Err(self.error("shorter set-operator chain"));
            }
            let right = self.query_term()?;
            left = node(
                NodeKind::Statement,
                label::COMPOUND,
                vec![left, leaf(NodeKind::Operator, &op), right],
            );
        }
        Ok(left)
    }

    fn query_term(&mut self) -> Result<TreeNode, ParseError> {
        if self.at_symbol("(") {
            self.advance();
            let inner = self.query()?;
            self.expect_symbol(")")?;
            return Ok(node(NodeKind::Subquery, label::SUBQUERY, vec![inner]));
        }
        self.select_core()
    }

    fn select_core(&mut self) -> Result<TreeNode, ParseError> {
        self.expect_word("SELECT")?;
        let mut select_children = Vec::new();
        if self.at_word("DISTINCT") || self.at_word("ALL") {
            let tok = self.advance();
            select_children.push(leaf(NodeKind::Keyword, tok.text));
        }
        if self.eat_word("TOP") {
            select_children.push(self.top_clause()?);
        }
        let mut items = Vec::new();
        loop {
            items.push(self.select_item()?);
            if !self.eat_symbol(",") {
                break;
            }
        }
        select_children.push(list_or_single(items));
        let mut clauses = vec![node(
            NodeKind::Clause,
            label::CLAUSE_SELECT,
            select_children,
        )];

        if self.eat_word("INTO") {
            let target = self.qualified_name("table name")?;
            clauses.push(node(NodeKind::Clause, label::CLAUSE_INTO, vec![target]));
        }
        if self.eat_word("FROM") {
            let mut sources = Vec::new();
            loop {
                sources.push(self.table_source()?);
                if !self.eat_symbol(",") {
                    break;
                }
            }
            clauses.push(node(
                NodeKind::Clause,
                label::CLAUSE_FROM,
                vec![list_or_single(sources)],
            ));
        }
        if self.eat_word("WHERE") {
            let cond = self.expr()?;
            clauses.push(node(NodeKind::Clause, label::CLAUSE_WHERE, vec![cond]));
        }
        if self.at_word("GROUP") {
            self.advance();
            self.expect_word("BY")?;
            let mut items = Vec::new();
            loop {
                items.push(self.expr()?);
                if !self.eat_symbol(",") {
                    break;
                }
            }
            clauses.push(node(
                NodeKind::Clause,
                label::CLAUSE_GROUP_BY,
                vec![list_or_single(items)],
            ));
        }
        if self.eat_word("HAVING") {
            let cond = self.expr()?;
            clauses.push(node(NodeKind::Clause, label::CLAUSE_HAVING, vec![cond]));
        }
        if self.at_word("ORDER") {
            self.advance();
            self.expect_word("BY")?;
            let items = self.order_items()?;
            clauses.push(node(
                NodeKind::Clause,
                label::CLAUSE_ORDER_BY,
                vec![list_or_single(items)],
            ));
        }
        if self.at_word("OPTION") && self.peek_at(1).is_symbol("(") {
            // query hints carry no meaning for matching
            self.advance();
            self.skip_balanced()?;
        }
        Ok(node(NodeKind::Statement, label::SELECT, clauses))
    }

    fn skip_balanced(&mut self) -> Result<(), ParseError> {
        self.expect_symbol("(")?;
        let mut depth = 1;
        while depth > 0 {
            let tok = self.advance();
            match tok.kind {
                TokenKind::Eof => return Err(self.error("')'")),
                TokenKind::Symbol if tok.text == "(" => depth += 1,
                TokenKind::Symbol if tok.text == ")" => depth -= 1,
                _ => {}
            }
        }
        Ok(())
    }

    fn top_clause(&mut self) -> Result<TreeNode, ParseError> {
        let count = if self.eat_symbol("(") {
            let inner = self.expr()?;
            self.expect_symbol(")")?;
            inner
        } else {
            let tok = self.peek().clone();
            match tok.kind {
                TokenKind::Number => leaf(NodeKind::Literal, self.advance().text),
                TokenKind::Parameter => leaf(NodeKind::Parameter, self.advance().text),
                TokenKind::Variable => leaf(NodeKind::Identifier, self.advance().text),
                _ => return Err(self.error("TOP count")),
            }
        };
        let mut children = vec![count];
        if self.at_word("PERCENT") {
            children.push(leaf(NodeKind::Keyword, self.advance().text));
        }
        if self.at_word("WITH") && self.peek_at(1).is_word("TIES") {
            let with = self.advance();
            let ties = self.advance();
            children.push(leaf(NodeKind::Keyword, &Self::joined(&[with, ties])));
        }
        Ok(node(NodeKind::Clause, label::CLAUSE_TOP, children))
    }

    fn select_item(&mut self) -> Result<TreeNode, ParseError> {
        if self.at_symbol("*") {
            self.advance();
            return Ok(leaf(NodeKind::Keyword, "*"));
        }
        // T-SQL `alias = expr` and `@var = expr`
        let tok = self.peek().clone();
        let alias_like = match tok.kind {
            TokenKind::Word => !is_reserved(tok.text),
            TokenKind::QuotedIdent | TokenKind::String | TokenKind::Variable => true,
            _ => false,
        };
        if alias_like && self.peek_at(1).is_symbol("=") {
            self.advance();
            self.advance();
            let value = self.expr()?;
            return Ok(expr(
                label::ASSIGN,
                vec![leaf(NodeKind::Identifier, tok.text), value],
            ));
        }
        let value = self.expr()?;
        match self.alias()? {
            Some(alias) => Ok(expr(label::ALIAS, vec![value, alias])),
            None => Ok(value),
        }
    }

    fn alias(&mut self) -> Result<Option<TreeNode>, ParseError> {
        let explicit = self.eat_word("AS");
        let tok = self.peek().clone();
        let ok = match tok.kind {
            TokenKind::Word => !is_reserved(tok.text),
            TokenKind::QuotedIdent | TokenKind::String => true,
            _ => false,
        };
        if ok {
            self.advance();
            Ok(Some(leaf(NodeKind::Identifier, tok.text)))
        } else if explicit {
            Err(self.error("alias"))
        } else {
            Ok(None)
        }
    }

    fn order_items(&mut self) -> Result<Vec<TreeNode>, ParseError> {
        let mut items = Vec::new();
        loop {
            let value = self.expr()?;
            if self.at_word("ASC") || self.at_word("DESC") {
                let dir = self.advance();
                items.push(expr(
                    label::ORDER_ITEM,
                    vec![value, leaf(NodeKind::Keyword, dir.text)],
                ));
            } else {
                items.push(value);
            }
            if !self.eat_symbol(",") {
                break;
            }
        }
        Ok(items)
    }

    // ---- table sources ----

    fn table_source(&mut self) -> Result<TreeNode, ParseError> {
        self.enter()?;
        let result = self.table_source_inner();
        self.leave();
        result
    }

    fn table_source_inner(&mut self) -> Result<TreeNode, ParseError> {
        let mut left = self.table_primary()?;
        let mut chain = 0;
        while let Some(join_type) = self.join_type() {
            chain += 1;
            if chain > MAX_CHAIN {
                return Err(self.error("shorter join chain"));
            }
            let right = self.table_primary()?;
            let mut children = vec![left, leaf(NodeKind::Operator, &join_type), right];
            if self.eat_word("ON") {
                let cond = self.expr()?;
                children.push(expr(label::ON, vec![cond]));
            } else if !join_type.to_ascii_uppercase().starts_with("CROSS")
                && !join_type.to_ascii_uppercase().ends_with("APPLY")
            {
                return Err(self.error("ON"));
            }
            left = expr(label::JOIN, children);
        }
        Ok(left)
    }

    fn join_type(&mut self) -> Option<String> {
        let start = self.pos;
        let mut words = Vec::new();
        let take = |p: &mut Self, w: &str, words: &mut Vec<Token<'a>>| {
            if p.at_word(w) {
                words.push(p.advance());
                true
            } else {
                false
            }
        };
        if take(self, "JOIN", &mut words) {
            return Some(Self::joined(&words));
        }
        if take(self, "INNER", &mut words) {
            if take(self, "JOIN", &mut words) {
                return Some(Self::joined(&words));
            }
        } else if take(self, "LEFT", &mut words)
            || take(self, "RIGHT", &mut words)
            || take(self, "FULL", &mut words)
        {
            take(self, "OUTER", &mut words);
            if take(self, "JOIN", &mut words) {
                return Some(Self::joined(&words));
            }
        } else if take(self, "CROSS", &mut words) {
            if take(self, "JOIN", &mut words) || take(self, "APPLY", &mut words) {
                return Some(Self::joined(&words));
            }
        } else if take(self, "OUTER", &mut words) && take(self, "APPLY", &mut words) {
            return Some(Self::joined(&words));
        }
        self.pos = start;
        None
    }

    fn table_primary(&mut self) -> Result<TreeNode, ParseError> {
        let source = if self.at_symbol("(") {
            if self.paren_starts_query(0) {
                self.advance();
                let inner = self.query()?;
                self.expect_symbol(")")?;
                node(NodeKind::Subquery, label::SUBQUERY, vec![inner])
            } else {
                self.advance();
                let inner = self.table_source()?;
                self.expect_symbol(")")?;
                expr(label::PAREN, vec![inner])
            }
        } else {
            let name = self.qualified_name("table name")?;
            if self.at_symbol("(") && name.kind == NodeKind::Identifier {
                let args = self.call_args()?;
                let mut children = vec![name];
                children.extend(args);
                node(NodeKind::Function, label::CALL, children)
            } else {
                name
            }
        };
        let mut result = source;
        if let Some(alias) = self.alias()? {
            let mut children = vec![result, alias];
            if self.at_symbol("(") {
                children.push(self.column_names()?);
            }
            result = expr(label::ALIAS, children);
        }
        if self.at_word("WITH") && self.peek_at(1).is_symbol("(") {
            self.advance();
            self.advance();
            let mut hints = Vec::new();
            loop {
                let tok = self.peek().clone();
                if tok.kind != TokenKind::Word {
                    return Err(self.error("table hint"));
                }
                hints.push(self.advance());
                if !self.eat_symbol(",") {
                    break;
                }
            }
            self.expect_symbol(")")?;
            let text = hints.iter().map(|t| t.text).collect::<Vec<_>>().join(",");
            result = expr(
                label::TABLE_HINT,
                vec![result, leaf(NodeKind::Keyword, &text)],
            );
        }
        Ok(result)
    }

    // ---- names ----

    fn bare_name(&mut self, what: &str) -> Result<TreeNode, ParseError> {
        let tok = self.peek().clone();
        match tok.kind {
            TokenKind::Word if !is_reserved(tok.text) => {}
            TokenKind::QuotedIdent => {}
            _ => return Err(self.error(what)),
        }
        self.advance();
        Ok(leaf(NodeKind::Identifier, tok.text))
    }

    /// `a`, `a.b.c`, `[x].[y]`, `db..t`, `t.*`, `@var`, `#temp`.
    fn qualified_name(&mut self, what: &str) -> Result<TreeNode, ParseError> {
        let first = self.peek().clone();
        match first.kind {
            TokenKind::Word if !is_reserved(first.text) => {}
            TokenKind::QuotedIdent | TokenKind::TempName | TokenKind::Variable => {}
            _ => return Err(self.error(what)),
        }
        self.advance();
        let mut text = first.text.to_string();
        while self.at_symbol(".") {
            let next = self.peek_at(1).clone();
            match next.kind {
                TokenKind::Word | TokenKind::QuotedIdent | TokenKind::TempName => {
                    self.pos += 2;
                    text.push('.');
                    text.push_str(next.text);
                }
                TokenKind::Symbol if next.text == "*" => {
                    self.pos += 2;
                    text.push_str(".*");
                    break;
                }
                TokenKind::Symbol if next.text == "." => {
                    // `db..table`
                    self.pos += 1;
                    text.push('.');
                }
                _ => return Err(self.error("name after '.'")),
            }
        }
        Ok(leaf(NodeKind::Identifier, &text))
    }

    // ---- expressions ----

    fn expr(&mut self) -> Result<TreeNode, ParseError> {
        self.enter()?;
        let result = self.or_expr();
        self.leave();
        result
    }

    fn binary_chain(
        &mut self,
        next: fn(&mut Self) -> Result<TreeNode, ParseError>,
        op: fn(&Self) -> bool,
    ) -> Result<TreeNode, ParseError> {
        let mut left = next(self)?;
        let mut chain = 0;
        while op(self) {
            chain += 1;
            if chain > MAX_CHAIN {
                return Err(self.error("shorter expression"));
            }
            let tok = self.advance();
            let right = next(self)?;
            left = expr(
                label::BINARY,
                vec![left, leaf(NodeKind::Operator, tok.text), right],
            );
        }
        Ok(left)
    }

    fn or_expr(&mut self) -> Result<TreeNode, ParseError> {
        self.binary_chain(Self::and_expr, |p| p.at_word("OR"))
    }

    fn and_expr(&mut self) -> Result<TreeNode, ParseError> {
        self.binary_chain(Self::not_expr, |p| p.at_word("AND"))
    }

    fn not_expr(&mut self) -> Result<TreeNode, ParseError> {
        if self.at_word("NOT") {
            self.enter()?;
            let tok = self.advance();
            let inner = self.not_expr();
            self.leave();
            return Ok(expr(
                label::UNARY,
                vec![leaf(NodeKind::Operator, tok.text), inner?],
            ));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<TreeNode, ParseError> {
        const CMP: [&str; 9] = ["=", "<>", "!=", "<", ">", "<=", ">=", "!<", "!>"];
        let mut left = self.additive()?;
        let mut chain = 0;
        loop {
            chain += 1;
            if chain > MAX_CHAIN {
                return Err(self.error("shorter expression"));
            }
            let tok = self.peek().clone();
            if tok.kind == TokenKind::Symbol && CMP.contains(&tok.text) {
                self.advance();
                let right = if (self.at_word("ALL") || self.at_word("ANY") || self.at_word("SOME"))
                    && self.peek_at(1).is_symbol("(")
                {
                    let quant = self.advance();
                    let sub = self.paren_subquery()?;
                    expr(
                        label::UNARY,
                        vec![leaf(NodeKind::Operator, quant.text), sub],
                    )
                } else {
                    self.additive()?
                };
                left = expr(
                    label::BINARY,
                    vec![left, leaf(NodeKind::Operator, tok.text), right],
                );
                continue;
            }
            let negated = self.at_word("NOT")
                && ["LIKE", "IN", "BETWEEN"]
                    .iter()
                    .any(|w| self.peek_at(1).is_word(w));
            let op_start = self.pos;
            if negated {
                self.advance();
            }
            let op_tok = self.peek().clone();
            let op_text = |p: &Self| Self::joined(&p.tokens[op_start..=p.pos]);
            if op_tok.is_word("LIKE") {
                let text = op_text(self);
                self.advance();
                let pattern = self.additive()?;
                left = expr(
                    label::BINARY,
                    vec![left, leaf(NodeKind::Operator, &text), pattern],
                );
                if self.at_word("ESCAPE") {
                    let esc = self.advance();
                    let ch = self.additive()?;
                    left = expr(
                        label::BINARY,
                        vec![left, leaf(NodeKind::Operator, esc.text), ch],
                    );
                }
            } else if op_tok.is_word("IN") {
                let text = op_text(self);
                self.advance();
                let set = if self.paren_starts_query(0) {
                    self.paren_subquery()?
                } else {
                    self.tuple()?
                };
                left = expr(label::IN, vec![left, leaf(NodeKind::Operator, &text), set]);
            } else if op_tok.is_word("BETWEEN") {
                let text = op_text(self);
                self.advance();
                let low = self.additive()?;
                self.expect_word("AND")?;
                let high = self.additive()?;
                left = expr(
                    label::BETWEEN,
                    vec![left, leaf(NodeKind::Operator, &text), low, high],
                );
            } else if !negated && op_tok.is_word("IS") {
                let mut words = vec![self.advance()];
                if self.at_word("NOT") {
                    words.push(self.advance());
                }
                let null = self.expect_word("NULL")?;
                left = expr(
                    label::IS,
                    vec![
                        left,
                        leaf(NodeKind::Operator, &Self::joined(&words)),
                        leaf(NodeKind::Keyword, null.text),
                    ],
                );
            } else {
                self.pos = op_start;
                break;
            }
        }
        Ok(left)
    }

    fn paren_subquery(&mut self) -> Result<TreeNode, ParseError> {
        self.expect_symbol("(")?;
        let inner = self.query()?;
        self.expect_symbol(")")?;
        Ok(node(NodeKind::Subquery, label::SUBQUERY, vec![inner]))
    }

    fn tuple(&mut self) -> Result<TreeNode, ParseError> {
        self.expect_symbol("(")?;
        let mut items = Vec::new();
        loop {
            items.push(self.expr()?);
            if !self.eat_symbol(",") {
                break;
            }
        }
        self.expect_symbol(")")?;
        Ok(expr(label::TUPLE, items))
    }

    fn additive(&mut self) -> Result<TreeNode, ParseError> {
        self.binary_chain(Self::multiplicative, |p| {
            ["+", "-", "&", "|", "^"].iter().any(|s| p.at_symbol(s))
        })
    }

    fn multiplicative(&mut self) -> Result<TreeNode, ParseError> {
        self.binary_chain(Self::unary, |p| {
            ["*", "/", "%"].iter().any(|s| p.at_symbol(s))
        })
    }

    fn unary(&mut self) -> Result<TreeNode, ParseError> {
        let tok = self.peek().clone();
        if tok.is_symbol("-") || tok.is_symbol("+") || tok.is_symbol("~") {
            self.advance();
            let next = self.peek().clone();
            if tok.text == "-" && next.kind == TokenKind::Number {
                self.advance();
                return Ok(leaf(NodeKind::Literal, &format!("-{}", next.text)));
            }
            self.enter()?;
            let inner = self.unary();
            self.leave();
            return Ok(expr(
                label::UNARY,
                vec![leaf(NodeKind::Operator, tok.text), inner?],
            ));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<TreeNode, ParseError> {
        let tok = self.peek().clone();
        match tok.kind {
            TokenKind::Number | TokenKind::String => {
                self.advance();
                Ok(leaf(NodeKind::Literal, tok.text))
            }
            TokenKind::Parameter => {
                self.advance();
                Ok(leaf(NodeKind::Parameter, tok.text))
            }
            TokenKind::Variable => {
                self.advance();
                Ok(leaf(NodeKind::Identifier, tok.text))
            }
            TokenKind::Symbol if tok.text == "*" => {
                self.advance();
                Ok(leaf(NodeKind::Keyword, "*"))
            }
            TokenKind::Symbol if tok.text == "(" => {
                if self.paren_starts_query(0) {
                    return self.paren_subquery();
                }
                self.advance();
                let first = self.expr()?;
                if self.at_symbol(",") {
                    let mut items = vec![first];
                    while self.eat_symbol(",") {
                        items.push(self.expr()?);
                    }
                    self.expect_symbol(")")?;
                    return Ok(expr(label::TUPLE, items));
                }
                self.expect_symbol(")")?;
                Ok(expr(label::PAREN, vec![first]))
            }
            TokenKind::Word => self.word_primary(),
            TokenKind::QuotedIdent | TokenKind::TempName => self.name_or_call(),
            _ => Err(self.error("expression")),
        }
    }

    fn word_primary(&mut self) -> Result<TreeNode, ParseError> {
        let tok = self.peek().clone();
        let upper = tok.text.to_ascii_uppercase();
        let opens_call = self.peek_at(1).is_symbol("(");
        match upper.as_str() {
            "NULL" => {
                self.advance();
                Ok(leaf(NodeKind::Keyword, tok.text))
            }
            "CASE" => self.case_expr(),
            "EXISTS" => {
                self.advance();
                let sub = self.paren_subquery()?;
                Ok(expr(
                    label::UNARY,
                    vec![leaf(NodeKind::Operator, tok.text), sub],
                ))
            }
            "CAST" | "TRY_CAST" if opens_call => {
                self.advance();
                self.advance();
                let value = self.expr()?;
                self.expect_word("AS")?;
                let ty = self.data_type()?;
                self.expect_symbol(")")?;
                let call = node(
                    NodeKind::Function,
                    label::CAST,
                    vec![leaf(NodeKind::Keyword, tok.text), value, ty],
                );
                self.call_suffix(call)
            }
            "CONVERT" | "TRY_CONVERT" if opens_call => {
                self.advance();
                self.advance();
                let ty = self.data_type()?;
                let mut children = vec![leaf(NodeKind::Identifier, tok.text), ty];
                while self.eat_symbol(",") {
                    children.push(self.expr()?);
                }
                self.expect_symbol(")")?;
                self.call_suffix(node(NodeKind::Function, label::CALL, children))
            }
            // LEFT(...) and RIGHT(...) are string functions outside FROM
            "LEFT" | "RIGHT" if opens_call => self.name_or_call(),
            _ if is_reserved(tok.text) => Err(self.error("expression")),
            _ => self.name_or_call(),
        }
    }

    fn name_or_call(&mut self) -> Result<TreeNode, ParseError> {
        let name = if self.peek().kind == TokenKind::Word && is_reserved(self.peek().text) {
            // LEFT / RIGHT used as functions
            let tok = self.advance();
            leaf(NodeKind::Identifier, tok.text)
        } else {
            self.qualified_name("name")?
        };
        if self.at_symbol("(") && !name.label.ends_with('*') {
            let args = self.call_args()?;
            let mut children = vec![name];
            children.extend(args);
            let call = node(NodeKind::Function, label::CALL, children);
            return self.call_suffix(call);
        }
        Ok(name)
    }

    fn call_args(&mut self) -> Result<Vec<TreeNode>, ParseError> {
        self.expect_symbol("(")?;
        let mut args = Vec::new();
        if self.eat_symbol(")") {
            return Ok(args);
        }
        if self.at_word("DISTINCT") || self.at_word("ALL") {
            let tok = self.advance();
            args.push(leaf(NodeKind::Keyword, tok.text));
        }
        loop {
            args.push(self.expr()?);
            if !self.eat_symbol(",") {
                break;
            }
        }
        self.expect_symbol(")")?;
        Ok(args)
    }

    // WITHIN GROUP (ORDER BY ...) and OVER (...)
    fn call_suffix(&mut self, mut call: TreeNode) -> Result<TreeNode, ParseError> {
        if self.at_word("WITHIN") && self.peek_at(1).is_word("GROUP") {
            self.pos += 2;
            self.expect_symbol("(")?;
            self.expect_word("ORDER")?;
            self.expect_word("BY")?;
            let items = self.order_items()?;
            self.expect_symbol(")")?;
            call = expr(
                label::WITHIN_GROUP,
                vec![call, expr(label::WINDOW_ORDER, items)],
            );
        }
        if self.eat_word("OVER") {
            self.expect_symbol("(")?;
            let mut children = vec![call];
            if self.at_word("PARTITION") {
                self.advance();
                self.expect_word("BY")?;
                let mut items = Vec::new();
                loop {
                    items.push(self.expr()?);
                    if !self.eat_symbol(",") {
                        break;
                    }
                }
                children.push(expr(label::PARTITION, items));
            }
            if self.at_word("ORDER") {
                self.advance();
                self.expect_word("BY")?;
                let items = self.order_items()?;
                children.push(expr(label::WINDOW_ORDER, items));
            }
            if self.at_word("ROWS") || self.at_word("RANGE") {
                let mut frame = Vec::new();
                while !self.at_symbol(")") {
                    if self.peek().kind == TokenKind::Eof {
                        return Err(self.error("')'"));
                    }
                    frame.push(self.advance());
                }
                children.push(leaf(NodeKind::Keyword, &Self::joined(&frame)));
            }
            self.expect_symbol(")")?;
            call = expr(label::OVER, children);
        }
        Ok(call)
    }

    fn case_expr(&mut self) -> Result<TreeNode, ParseError> {
        self.expect_word("CASE")?;
        let mut children = Vec::new();
        let simple = !self.at_word("WHEN");
        if simple {
            children.push(self.expr()?);
        }
        while self.eat_word("WHEN") {
            let cond = self.expr()?;
            self.expect_word("THEN")?;
            let value = self.expr()?;
            children.push(expr(label::WHEN, vec![cond, value]));
        }
        if children.len() == usize::from(simple) {
            return Err(self.error("WHEN"));
        }
        if self.eat_word("ELSE") {
            let value = self.expr()?;
            children.push(expr(label::ELSE, vec![value]));
        }
        self.expect_word("END")?;
        let name = if simple {
            label::CASE_SIMPLE
        } else {
            label::CASE
        };
        Ok(expr(name, children))
    }
}

// `decimal ( 10 , 2 )` -> `decimal(10,2)`; words stay space separated.
fn compact_tokens(parts: &[&str]) -> String {
    let mut out = String::new();
    let mut prev: Option<&str> = None;
    for part in parts {
        let glue = match prev {
            None => false,
            Some(p) => {
                let p_sym = matches!(p, "(" | "," | ".");
                let c_sym = matches!(*part, "(" | ")" | "," | ".");
                !(p_sym || c_sym)
            }
        };
        if glue {
            out.push(' ');
        }
        out.push_str(part);
        prev = Some(part);
    }
    out
}
