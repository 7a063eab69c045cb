use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::QueryError;

pub const MAX_PATTERN_RELATIONSHIPS: usize = 3;

const RESERVED: [&str; 15] = [
    "MATCH", "WHERE", "RETURN", "DISTINCT", "AND", "ORDER", "BY", "ASC", "DESC", "LIMIT", "AS", "TRUE", "FALSE", "NULL",
    "OR",
];

pub const MUTATION_KEYWORDS: [&str; 6] = ["CREATE", "DELETE", "DETACH", "SET", "MERGE", "REMOVE"];

fn is_keyword(s: &str, kw: &str) -> bool {
    s.eq_ignore_ascii_case(kw)
}

pub fn is_reserved(s: &str) -> bool {
    RESERVED.iter().chain(MUTATION_KEYWORDS.iter()).any(|k| is_keyword(s, k))
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

pub fn parse_query(text: &str) -> Result<Query, QueryError> {
    let tokens = tokenize(text)?;
    reject_mutations(&tokens)?;
    let mut p = Parser { tokens, pos: 0 };
    let q = p.query()?;
    validate(&q)?;
    Ok(q)
}

fn reject_mutations(tokens: &[Token]) -> Result<(), QueryError> {
    for (i, t) in tokens.iter().enumerate() {
        let Tok::Ident(s) = &t.tok else { continue };
        let after_qualifier = i > 0 && matches!(tokens[i - 1].tok, Tok::Dot | Tok::Colon);
        if !after_qualifier {
            if let Some(kw) = MUTATION_KEYWORDS.iter().find(|k| is_keyword(s, k)) {
                return Err(QueryError::ForbiddenClause { keyword: kw.to_string(), line: t.line, column: t.column });
            }
        }
    }
    Ok(())
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        &self.tokens[(self.pos + offset).min(self.tokens.len() - 1)].tok
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &[&str]) -> Result<T, QueryError> {
        let t = self.peek();
        Err(QueryError::Syntax {
            line: t.line,
            column: t.column,
            message: format!("unexpected {}", t.tok.describe()),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if is_keyword(s, kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        let hit = self.at_keyword(kw);
        if hit {
            self.advance();
        }
        hit
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), QueryError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            self.fail(&[kw])
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        let hit = &self.peek().tok == tok;
        if hit {
            self.advance();
        }
        hit
    }

    fn expect(&mut self, tok: Tok) -> Result<(), QueryError> {
        if self.eat(&tok) {
            Ok(())
        } else {
            self.fail(&[&tok.describe()])
        }
    }

    /// Any identifier, keywords included.
    fn name(&mut self, what: &str) -> Result<String, QueryError> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                self.advance();
                Ok(s)
            }
            _ => self.fail(&[what]),
        }
    }

    /// An identifier usable as a variable or alias.
    fn variable(&mut self, what: &str) -> Result<String, QueryError> {
        match &self.peek().tok {
            Tok::Ident(s) if !is_reserved(s) => {
                let s = s.clone();
                self.advance();
                Ok(s)
            }
            _ => self.fail(&[what]),
        }
    }

    fn query(&mut self) -> Result<Query, QueryError> {
        self.expect_keyword("MATCH")?;
        let mut patterns = vec![self.pattern()?];
        while self.eat(&Tok::Comma) {
            patterns.push(self.pattern()?);
        }

        let mut conditions = Vec::new();
        if self.eat_keyword("WHERE") {
            conditions.push(self.comparison()?);
            while self.eat_keyword("AND") {
                conditions.push(self.comparison()?);
            }
        }

        if !self.at_keyword("RETURN") {
            return if conditions.is_empty() { self.fail(&["`,`", "WHERE", "RETURN"]) } else { self.fail(&["AND", "RETURN"]) };
        }
        self.advance();
        let distinct = self.eat_keyword("DISTINCT");
        let mut returns = vec![self.return_item()?];
        while self.eat(&Tok::Comma) {
            returns.push(self.return_item()?);
        }

        let mut order_by = None;
        if self.at_keyword("ORDER") {
            let order_tok = self.advance();
            self.expect_keyword("BY")?;
            let key = self.return_expr()?;
            let key_text = key.to_string();
            let column = returns.iter().position(|r| r.column_name() == key_text).ok_or_else(|| QueryError::Syntax {
                line: order_tok.line,
                column: order_tok.column,
                message: format!("ORDER BY key `{key_text}` is not a returned column"),
                expected: returns.iter().map(ReturnItem::column_name).collect(),
            })?;
            let descending = if self.eat_keyword("DESC") || self.eat_keyword("DESCENDING") {
                true
            } else {
                let _ = self.eat_keyword("ASC") || self.eat_keyword("ASCENDING");
                false
            };
            order_by = Some(OrderBy { column, descending });
        }

        let mut limit = None;
        if self.eat_keyword("LIMIT") {
            match self.peek().tok {
                Tok::Int(n) if n > 0 => {
                    self.advance();
                    limit = Some(n);
                }
                _ => return self.fail(&["positive integer"]),
            }
        }
        self.eat(&Tok::Semicolon);
        if self.peek().tok != Tok::Eof {
            let mut expected = Vec::new();
            if order_by.is_none() && limit.is_none() {
                expected.push("ORDER BY");
            }
            if limit.is_none() {
                expected.push("LIMIT");
            }
            expected.push("end of input");
            return self.fail(&expected);
        }
        Ok(Query { patterns, conditions, distinct, returns, order_by, limit })
    }

    fn pattern(&mut self) -> Result<PathPattern, QueryError> {
        let start = self.node()?;
        let mut steps = Vec::new();
        while matches!(self.peek().tok, Tok::Dash | Tok::ArrowLeft) {
            let rel = self.relationship()?;
            let node = self.node()?;
            steps.push((rel, node));
            if steps.len() > MAX_PATTERN_RELATIONSHIPS {
                return Err(QueryError::PatternTooLong { relationships: steps.len() });
            }
        }
        Ok(PathPattern { start, steps })
    }

    fn node(&mut self) -> Result<NodePattern, QueryError> {
        self.expect(Tok::LParen)?;
        let mut node = NodePattern::default();
        if matches!(&self.peek().tok, Tok::Ident(_)) {
            node.variable = Some(self.variable("variable")?);
        }
        if self.eat(&Tok::Colon) {
            node.label = Some(self.name("label")?);
        }
        if self.eat(&Tok::LBrace) {
            if !self.eat(&Tok::RBrace) {
                loop {
                    let key = self.name("property key")?;
                    self.expect(Tok::Colon)?;
                    let value = self.literal()?;
                    node.properties.push((key, value));
                    if self.eat(&Tok::RBrace) {
                        break;
                    }
                    if !self.eat(&Tok::Comma) {
                        return self.fail(&["`,`", "`}`"]);
                    }
                }
            }
        }
        if !self.eat(&Tok::RParen) {
            let mut expected = Vec::new();
            if node.label.is_none() && node.properties.is_empty() {
                expected.push("`:`");
            }
            if node.properties.is_empty() {
                expected.push("`{`");
            }
            expected.push("`)`");
            return self.fail(&expected);
        }
        Ok(node)
    }

    fn relationship(&mut self) -> Result<RelPattern, QueryError> {
        let left = self.advance().tok == Tok::ArrowLeft;
        let mut kind = None;
        if self.eat(&Tok::LBracket) {
            if self.eat(&Tok::Colon) {
                kind = Some(self.name("relationship kind")?);
            }
            if !self.eat(&Tok::RBracket) {
                return self.fail(if kind.is_none() { &["`:`", "`]`"] } else { &["`]`"] });
            }
        }
        let direction = match (left, &self.peek().tok) {
            (false, Tok::ArrowRight) => Direction::Right,
            (false, Tok::Dash) => Direction::Either,
            (true, Tok::Dash) => Direction::Left,
            (false, _) => return self.fail(&["`->`", "`-`"]),
            (true, _) => return self.fail(&["`-`"]),
        };
        self.advance();
        Ok(RelPattern { direction, kind })
    }

    fn literal(&mut self) -> Result<Literal, QueryError> {
        let t = self.peek().clone();
        let lit = match &t.tok {
            Tok::Str(s) => Literal::String(s.clone()),
            Tok::Int(n) => Literal::Integer(i64::try_from(*n).map_err(|_| range_error(&t))?),
            Tok::Dash => {
                self.advance();
                let t = self.peek().clone();
                let Tok::Int(n) = t.tok else { return self.fail(&["integer"]) };
                let v = if n == 1u64 << 63 { i64::MIN } else { -i64::try_from(n).map_err(|_| range_error(&t))? };
                Literal::Integer(v)
            }
            Tok::Ident(s) if is_keyword(s, "true") => Literal::Boolean(true),
            Tok::Ident(s) if is_keyword(s, "false") => Literal::Boolean(false),
            Tok::Ident(s) if is_keyword(s, "null") => Literal::Null,
            _ => return self.fail(&["literal"]),
        };
        self.advance();
        Ok(lit)
    }

    fn operand(&mut self) -> Result<Operand, QueryError> {
        match &self.peek().tok {
            Tok::Ident(s) if !is_reserved(s) => {
                let variable = s.clone();
                self.advance();
                if self.eat(&Tok::Dot) {
                    let key = self.name("property key")?;
                    Ok(Operand::Property { variable, key })
                } else {
                    Ok(Operand::Variable(variable))
                }
            }
            Tok::Str(_) | Tok::Int(_) | Tok::Dash | Tok::Ident(_) => self.literal().map(Operand::Literal).or_else(|_| {
                self.fail(&["variable", "literal"])
            }),
            _ => self.fail(&["variable", "literal"]),
        }
    }

    fn comparison(&mut self) -> Result<Comparison, QueryError> {
        let left = self.operand()?;
        let op = match self.peek().tok {
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            _ => return self.fail(&["`=`", "`<>`"]),
        };
        self.advance();
        let right = self.operand()?;
        Ok(Comparison { left, op, right })
    }

    fn return_expr(&mut self) -> Result<ReturnExpr, QueryError> {
        let is_count = matches!(&self.peek().tok, Tok::Ident(s) if is_keyword(s, "count"))
            && *self.peek_at(1) == Tok::LParen;
        if !is_count {
            return self.operand().map(ReturnExpr::Operand);
        }
        self.advance();
        self.advance();
        let distinct = self.eat_keyword("DISTINCT");
        let arg = if !distinct && self.eat(&Tok::Star) { None } else { Some(self.operand()?) };
        self.expect(Tok::RParen)?;
        Ok(ReturnExpr::Count { distinct, arg })
    }

    fn return_item(&mut self) -> Result<ReturnItem, QueryError> {
        let expr = self.return_expr()?;
        let alias = if self.eat_keyword("AS") { Some(self.variable("alias")?) } else { None };
        Ok(ReturnItem { expr, alias })
    }
}

fn range_error(t: &Token) -> QueryError {
    QueryError::Syntax {
        line: t.line,
        column: t.column,
        message: "integer literal out of range".into(),
        expected: Vec::new(),
    }
}

fn operand_variable(o: &Operand) -> Option<&str> {
    match o {
        Operand::Property { variable, .. } | Operand::Variable(variable) => Some(variable),
        Operand::Literal(_) => None,
    }
}

/// Scope checks: referenced variables are bound and column names are unique.
pub fn validate(q: &Query) -> Result<(), QueryError> {
    let bound = q.variables();
    let check = |o: &Operand| match operand_variable(o) {
        Some(v) if !bound.contains(&v) => Err(QueryError::UnboundVariable { name: v.to_string() }),
        _ => Ok(()),
    };
    for c in &q.conditions {
        check(&c.left)?;
        check(&c.right)?;
    }
    for r in &q.returns {
        match &r.expr {
            ReturnExpr::Operand(o) | ReturnExpr::Count { arg: Some(o), .. } => check(o)?,
            ReturnExpr::Count { arg: None, .. } => {}
        }
    }
    let mut names: Vec<String> = Vec::new();
    for r in &q.returns {
        let n = r.column_name();
        if names.contains(&n) {
            return Err(QueryError::DuplicateColumn { name: n });
        }
        names.push(n);
    }
    for p in &q.patterns {
        if p.steps.len() > MAX_PATTERN_RELATIONSHIPS {
            return Err(QueryError::PatternTooLong { relationships: p.steps.len() });
        }
    }
    Ok(())
}
