//! Recursive-descent parser for the rule language.
//!
//! ```text
//! rules   := rule ((NEWLINE | ";") rule)*
//! expr    := "IF" expr "THEN" expr | iff
//! iff     := impl ("<->" impl)*                 left-assoc
//! impl    := or ("->" impl)?                    right-assoc
//! or      := and (("OR" | "|") and)*
//! and     := unary (("AND" | "&") unary)*
//! unary   := ("NOT" | "!") unary | atom
//! atom    := literal | "TRUE" | "FALSE" | "(" expr ")"
//! literal := IDENT ("=" | "IN") (IDENT | "{" IDENT ("," IDENT)* "}")
//! ```
//!
//! Keywords are case-insensitive, `#` starts a line comment, and newlines
//! inside parentheses or braces do not separate rules.

use std::collections::BTreeSet;

use super::ast::RuleAst;
use crate::error::{Error, Result};
use crate::schema::ConceptSchema;

const MAX_NESTING: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    And,
    Or,
    Not,
    In,
    If,
    Then,
    True,
    False,
    Eq,
    Arrow,
    DoubleArrow,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Sep,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::And => "AND".into(),
            Tok::Or => "OR".into(),
            Tok::Not => "NOT".into(),
            Tok::In => "IN".into(),
            Tok::If => "IF".into(),
            Tok::Then => "THEN".into(),
            Tok::True => "TRUE".into(),
            Tok::False => "FALSE".into(),
            Tok::Eq => "`=`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::DoubleArrow => "`<->`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Sep => "end of rule".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut column) = (1usize, 1usize);
    let mut depth = 0usize;

    while let Some(&c) = chars.peek() {
        let (tl, tc) = (line, column);
        let mut push = |tok: Tok| tokens.push(Token { tok, line: tl, column: tc });
        match c {
            '\n' => {
                chars.next();
                if depth == 0 {
                    push(Tok::Sep);
                }
                line += 1;
                column = 1;
                continue;
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    column += 1;
                }
                continue;
            }
            c if c.is_whitespace() => {
                chars.next();
                column += 1;
                continue;
            }
            ';' => push(Tok::Sep),
            '=' => push(Tok::Eq),
            '&' => push(Tok::And),
            '|' => push(Tok::Or),
            '!' => push(Tok::Not),
            ',' => push(Tok::Comma),
            '(' | '{' => {
                depth += 1;
                push(if c == '(' { Tok::LParen } else { Tok::LBrace });
            }
            ')' | '}' => {
                depth = depth.saturating_sub(1);
                push(if c == ')' { Tok::RParen } else { Tok::RBrace });
            }
            '-' => {
                chars.next();
                column += 1;
                if chars.peek() != Some(&'>') {
                    return Err(syntax(tl, tc, "expected `->`"));
                }
                chars.next();
                column += 1;
                push(Tok::Arrow);
                continue;
            }
            '<' => {
                chars.next();
                column += 1;
                for expected in ['-', '>'] {
                    if chars.peek() != Some(&expected) {
                        return Err(syntax(tl, tc, "expected `<->`"));
                    }
                    chars.next();
                    column += 1;
                }
                push(Tok::DoubleArrow);
                continue;
            }
            c if is_ident_char(c) => {
                let mut word = String::new();
                while let Some(&c) = chars.peek() {
                    if !is_ident_char(c) {
                        break;
                    }
                    word.push(c);
                    chars.next();
                    column += 1;
                }
                let tok = match word.to_ascii_uppercase().as_str() {
                    "AND" => Tok::And,
                    "OR" => Tok::Or,
                    "NOT" => Tok::Not,
                    "IN" => Tok::In,
                    "IF" => Tok::If,
                    "THEN" => Tok::Then,
                    "TRUE" => Tok::True,
                    "FALSE" => Tok::False,
                    _ => Tok::Ident(word),
                };
                push(tok);
                continue;
            }
            other => return Err(syntax(tl, tc, format!("unexpected character `{other}`"))),
        }
        chars.next();
        column += 1;
    }
    tokens.push(Token {
        tok: Tok::Eof,
        line,
        column,
    });
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    schema: &'a ConceptSchema,
    nesting: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if &self.peek().tok == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn unexpected(&self, wanted: &str) -> Error {
        let t = self.peek();
        syntax(
            t.line,
            t.column,
            format!("expected {wanted}, found {}", t.tok.describe()),
        )
    }

    fn expect(&mut self, tok: Tok) -> Result<Token> {
        if self.peek().tok == tok {
            Ok(self.advance())
        } else {
            Err(self.unexpected(&tok.describe()))
        }
    }

    fn enter(&mut self) -> Result<()> {
        self.nesting += 1;
        if self.nesting > MAX_NESTING {
            let t = self.peek();
            return Err(syntax(t.line, t.column, "expression nested too deeply"));
        }
        Ok(())
    }

    fn rules(&mut self) -> Result<RuleAst> {
        let mut rules = Vec::new();
        loop {
            while self.eat(&Tok::Sep) {}
            if self.peek().tok == Tok::Eof {
                break;
            }
            rules.push(self.expr()?);
            match self.peek().tok {
                Tok::Sep | Tok::Eof => {}
                _ => return Err(self.unexpected("operator or end of rule")),
            }
        }
        match rules.len() {
            0 => {
                let t = self.peek();
                Err(syntax(t.line, t.column, "no rules found"))
            }
            1 => Ok(rules.pop().unwrap()),
            _ => Ok(RuleAst::And(rules)),
        }
    }

    fn expr(&mut self) -> Result<RuleAst> {
        self.enter()?;
        let out = if self.eat(&Tok::If) {
            let cond = self.expr()?;
            self.expect(Tok::Then)?;
            let then = self.expr()?;
            RuleAst::implies(cond, then)
        } else {
            self.iff()?
        };
        self.nesting -= 1;
        Ok(out)
    }

    fn iff(&mut self) -> Result<RuleAst> {
        let mut lhs = self.implication()?;
        while self.eat(&Tok::DoubleArrow) {
            let rhs = self.implication()?;
            lhs = RuleAst::iff(lhs, rhs);
        }
        Ok(lhs)
    }

    fn implication(&mut self) -> Result<RuleAst> {
        let lhs = self.or()?;
        if self.eat(&Tok::Arrow) {
            self.enter()?;
            let rhs = self.implication()?;
            self.nesting -= 1;
            return Ok(RuleAst::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<RuleAst> {
        let mut items = vec![self.and()?];
        while self.eat(&Tok::Or) {
            items.push(self.and()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            RuleAst::Or(items)
        })
    }

    fn and(&mut self) -> Result<RuleAst> {
        let mut items = vec![self.unary()?];
        while self.eat(&Tok::And) {
            items.push(self.unary()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            RuleAst::And(items)
        })
    }

    fn unary(&mut self) -> Result<RuleAst> {
        if self.eat(&Tok::Not) {
            self.enter()?;
            let inner = self.unary()?;
            self.nesting -= 1;
            return Ok(RuleAst::not(inner));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<RuleAst> {
        match self.peek().tok.clone() {
            Tok::LParen => {
                self.advance();
                let inner = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Tok::True => {
                self.advance();
                Ok(RuleAst::ConstTrue)
            }
            Tok::False => {
                self.advance();
                Ok(RuleAst::ConstFalse)
            }
            Tok::Ident(_) => self.literal(),
            _ => Err(self.unexpected("a literal or `(`")),
        }
    }

    fn literal(&mut self) -> Result<RuleAst> {
        let name_tok = self.advance();
        let Tok::Ident(name) = name_tok.tok else {
            unreachable!("literal() called on non-identifier")
        };
        let concept = self
            .schema
            .concept_index(&name)
            .ok_or_else(|| Error::UnknownConcept {
                name: name.clone(),
                line: name_tok.line,
                column: name_tok.column,
            })?;
        if !(self.eat(&Tok::Eq) || self.eat(&Tok::In)) {
            return Err(self.unexpected("`=` or IN"));
        }
        let mut values = Vec::new();
        if let Some(open) = self.eat_token(&Tok::LBrace) {
            if self.peek().tok == Tok::RBrace {
                return Err(Error::EmptyValueSet {
                    line: open.line,
                    column: open.column,
                });
            }
            loop {
                values.push(self.value_token()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(Tok::RBrace)?;
        } else {
            values.push(self.value_token()?);
        }

        let c = self.schema.concept(concept);
        let mut outcomes = BTreeSet::new();
        for (value, line, column) in values {
            let outcome = c.outcome_of(&value).ok_or_else(|| Error::UnknownValue {
                concept: c.name.clone(),
                value: value.clone(),
                line,
                column,
            })?;
            outcomes.insert(outcome);
        }
        Ok(RuleAst::Literal(concept, outcomes))
    }

    fn eat_token(&mut self, tok: &Tok) -> Option<Token> {
        (&self.peek().tok == tok).then(|| self.advance())
    }

    fn value_token(&mut self) -> Result<(String, usize, usize)> {
        match self.peek().tok.clone() {
            Tok::Ident(v) => {
                let t = self.advance();
                Ok((v, t.line, t.column))
            }
            _ => Err(self.unexpected("a value name")),
        }
    }
}

/// Parses one or more rules and conjoins them.
pub fn parse_rules(text: &str, schema: &ConceptSchema) -> Result<RuleAst> {
    let tokens = lex(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        schema,
        nesting: 0,
    };
    parser.rules()
}
