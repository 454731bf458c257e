//! N-Triples and a Turtle subset.
//!
//! The Turtle subset covers `@prefix`/`PREFIX`, prefixed names, the `a`
//! keyword, `;` and `,` lists, quoted strings (short and long forms) with
//! language tags or datatypes, numeric and boolean literals, and `_:` blank
//! nodes. Collections, `[ ... ]` property lists, quoted triples and base IRIs
//! are rejected with [`RdfError::Unsupported`].

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use super::{
    is_absolute_iri, Graph, PrefixMap, RdfError, Term, RDF_TYPE, XSD_BOOLEAN, XSD_DECIMAL, XSD_DOUBLE, XSD_INTEGER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RdfFormat {
    NTriples,
    Turtle,
}

impl RdfFormat {
    /// Guesses from a file extension (`.nt`, `.ttl`).
    pub fn from_path(path: impl AsRef<Path>) -> Option<Self> {
        match path.as_ref().extension()?.to_str()? {
            "nt" => Some(RdfFormat::NTriples),
            "ttl" | "turtle" => Some(RdfFormat::Turtle),
            _ => None,
        }
    }
}

impl FromStr for RdfFormat {
    type Err = RdfError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nt" | "ntriples" | "n-triples" => Ok(RdfFormat::NTriples),
            "ttl" | "turtle" | "turtle-subset" => Ok(RdfFormat::Turtle),
            other => Err(RdfError::UnknownFormat(other.to_string())),
        }
    }
}

pub fn parse_graph(mut source: impl Read, format: RdfFormat) -> Result<Graph, RdfError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let text = String::from_utf8(bytes).map_err(|e| RdfError::Syntax {
        line: 1,
        column: 1,
        message: format!("input is not UTF-8: {e}"),
    })?;
    parse_str(&text, format)
}

/// Reads a `.ttl` or `.nt` file, choosing the syntax from the extension.
pub fn load_graph(path: impl AsRef<Path>) -> Result<Graph, RdfError> {
    let path = path.as_ref();
    let format = RdfFormat::from_path(path).ok_or_else(|| RdfError::UnknownFormat(path.display().to_string()))?;
    parse_graph(std::fs::File::open(path)?, format)
}

pub fn parse_str(text: &str, format: RdfFormat) -> Result<Graph, RdfError> {
    let mut parser = Parser {
        src: text,
        pos: 0,
        format,
        namespaces: HashMap::new(),
        prefixes: PrefixMap::new(),
        statements: Vec::new(),
    };
    parser.document()?;
    Graph::from_statements(parser.statements, parser.prefixes)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    format: RdfFormat,
    // expansion table; may hold bindings the PrefixMap rejects as duplicates
    namespaces: HashMap<String, String>,
    prefixes: PrefixMap,
    statements: Vec<(Term, Term, Term)>,
}

impl<'a> Parser<'a> {
    fn turtle(&self) -> bool {
        self.format == RdfFormat::Turtle
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.rest().chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn location(&self, pos: usize) -> (usize, usize) {
        let before = &self.src[..pos];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        (line, column)
    }

    fn syntax_at<T>(&self, pos: usize, message: impl Into<String>) -> Result<T, RdfError> {
        let (line, column) = self.location(pos);
        Err(RdfError::Syntax {
            line,
            column,
            message: message.into(),
        })
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, RdfError> {
        self.syntax_at(self.pos, message)
    }

    fn unsupported<T>(&self, construct: &str) -> Result<T, RdfError> {
        let (line, column) = self.location(self.pos);
        Err(RdfError::Unsupported {
            construct: construct.to_string(),
            line,
            column,
        })
    }

    fn unexpected<T>(&self, wanted: &str) -> Result<T, RdfError> {
        match self.peek() {
            Some(c) => self.syntax(format!("expected {wanted}, found '{c}'")),
            None => self.syntax(format!("expected {wanted}, found end of input")),
        }
    }

    fn skip_ws(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('#') => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), RdfError> {
        if self.eat(c) {
            Ok(())
        } else {
            self.unexpected(&format!("'{c}'"))
        }
    }

    fn starts_with_keyword(&self, kw: &str) -> bool {
        let rest = self.rest();
        rest.len() >= kw.len()
            && rest[..kw.len()].eq_ignore_ascii_case(kw)
            && !rest[kw.len()..]
                .chars()
                .next()
                .is_some_and(|c| is_name_char(c) || c == ':')
    }

    fn document(&mut self) -> Result<(), RdfError> {
        loop {
            self.skip_ws();
            let Some(c) = self.peek() else {
                return Ok(());
            };
            if c == '@' {
                if !self.turtle() {
                    return self.syntax("directives are not allowed in N-Triples");
                }
                self.bump();
                if self.rest().starts_with("prefix") {
                    self.pos += "prefix".len();
                    self.prefix_directive()?;
                    self.skip_ws();
                    self.expect('.')?;
                } else if self.rest().starts_with("base") {
                    self.pos -= 1;
                    return self.unsupported("base IRI declaration");
                } else {
                    return self.syntax("unknown directive");
                }
            } else if self.turtle() && self.starts_with_keyword("prefix") {
                self.pos += "prefix".len();
                self.prefix_directive()?;
            } else if self.turtle() && self.starts_with_keyword("base") {
                return self.unsupported("base IRI declaration");
            } else {
                self.triples()?;
                self.skip_ws();
                self.expect('.')?;
            }
        }
    }

    fn prefix_directive(&mut self) -> Result<(), RdfError> {
        self.skip_ws();
        let start = self.pos;
        let label = self.pn_prefix();
        if !self.eat(':') {
            return self.syntax_at(start, "expected prefix label ending in ':'");
        }
        self.skip_ws();
        let iri = self.iriref()?;
        self.namespaces.insert(label.clone(), iri.clone());
        // first label wins when two labels share a namespace
        let _ = self.prefixes.insert(label, iri);
        Ok(())
    }

    fn triples(&mut self) -> Result<(), RdfError> {
        let subject = self.subject()?;
        self.skip_ws();
        if !self.turtle() {
            let predicate = self.verb()?;
            self.skip_ws();
            let object = self.object()?;
            self.statements.push((subject, predicate, object));
            return Ok(());
        }
        loop {
            let predicate = self.verb()?;
            loop {
                self.skip_ws();
                let object = self.object()?;
                self.statements.push((subject.clone(), predicate.clone(), object));
                self.skip_ws();
                if !self.eat(',') {
                    break;
                }
            }
            self.skip_ws();
            if !self.eat(';') {
                return Ok(());
            }
            // repeated and trailing semicolons are allowed
            loop {
                self.skip_ws();
                if !self.eat(';') {
                    break;
                }
            }
            if matches!(self.peek(), Some('.') | Some(']') | None) {
                return Ok(());
            }
        }
    }

    fn check_unsupported_node(&self) -> Result<(), RdfError> {
        let rest = self.rest();
        if rest.starts_with("<<") {
            self.unsupported("quoted triple")
        } else if rest.starts_with('(') {
            self.unsupported("collection")
        } else if rest.starts_with('[') {
            self.unsupported("blank node property list")
        } else {
            Ok(())
        }
    }

    fn subject(&mut self) -> Result<Term, RdfError> {
        self.check_unsupported_node()?;
        match self.peek() {
            Some('<') => Ok(Term::iri(self.iriref()?)),
            Some('_') => self.blank_node(),
            Some('"') | Some('\'') => self.syntax("a literal cannot be a subject"),
            Some(_) if self.turtle() => Ok(Term::iri(self.prefixed_name()?)),
            _ => self.unexpected("subject"),
        }
    }

    fn verb(&mut self) -> Result<Term, RdfError> {
        match self.peek() {
            Some('<') => Ok(Term::iri(self.iriref()?)),
            Some('a') if self.turtle() && !self.peek_at(1).is_some_and(|c| is_name_char(c) || c == ':') => {
                self.bump();
                Ok(Term::iri(RDF_TYPE))
            }
            Some(_) if self.turtle() => {
                if self.peek() == Some('_') {
                    return self.syntax("a blank node cannot be a predicate");
                }
                Ok(Term::iri(self.prefixed_name()?))
            }
            _ => self.unexpected("predicate IRI"),
        }
    }

    fn object(&mut self) -> Result<Term, RdfError> {
        self.check_unsupported_node()?;
        match self.peek() {
            Some('<') => Ok(Term::iri(self.iriref()?)),
            Some('_') => self.blank_node(),
            Some('"') => self.literal(),
            Some('\'') if self.turtle() => self.literal(),
            Some(c) if self.turtle() && (c.is_ascii_digit() || matches!(c, '+' | '-' | '.')) => self.numeric(),
            Some(_) if self.turtle() && self.starts_with_keyword("true") => {
                self.pos += 4;
                Ok(Term::typed_literal("true", XSD_BOOLEAN))
            }
            Some(_) if self.turtle() && self.starts_with_keyword("false") => {
                self.pos += 5;
                Ok(Term::typed_literal("false", XSD_BOOLEAN))
            }
            Some(_) if self.turtle() => Ok(Term::iri(self.prefixed_name()?)),
            _ => self.unexpected("object"),
        }
    }

    fn iriref(&mut self) -> Result<String, RdfError> {
        let start = self.pos;
        self.expect('<')?;
        let mut iri = String::new();
        loop {
            match self.bump() {
                Some('>') => break,
                Some('\\') => iri.push(self.unicode_escape()?),
                Some(c) if c.is_whitespace() || matches!(c, '<' | '"' | '{' | '}' | '|' | '^' | '`') => {
                    return self.syntax(format!("character '{c}' is not allowed in an IRI"));
                }
                Some(c) => iri.push(c),
                None => return self.syntax_at(start, "unterminated IRI"),
            }
        }
        if !is_absolute_iri(&iri) {
            self.pos = start;
            return self.unsupported("relative IRI reference");
        }
        Ok(iri)
    }

    fn unicode_escape(&mut self) -> Result<char, RdfError> {
        let width = match self.bump() {
            Some('u') => 4,
            Some('U') => 8,
            _ => return self.syntax("invalid escape sequence"),
        };
        let start = self.pos;
        for _ in 0..width {
            if !self.bump().is_some_and(|c| c.is_ascii_hexdigit()) {
                return self.syntax_at(start, "invalid unicode escape");
            }
        }
        let code = u32::from_str_radix(&self.src[start..self.pos], 16).expect("hex digits");
        char::from_u32(code).map_or_else(|| self.syntax_at(start, "invalid code point"), Ok)
    }

    fn blank_node(&mut self) -> Result<Term, RdfError> {
        if !self.rest().starts_with("_:") {
            return self.unexpected("blank node '_:'");
        }
        self.pos += 2;
        let start = self.pos;
        while self.peek().is_some_and(|c| is_name_char(c) || c == '.') {
            self.bump();
        }
        self.backtrack_trailing_dots(start);
        if self.pos == start {
            return self.syntax("empty blank node label");
        }
        Ok(Term::blank(&self.src[start..self.pos]))
    }

    fn backtrack_trailing_dots(&mut self, start: usize) {
        while self.pos > start && self.src[..self.pos].ends_with('.') {
            self.pos -= 1;
        }
    }

    fn pn_prefix(&mut self) -> String {
        let start = self.pos;
        if self.peek().is_some_and(|c| c.is_alphabetic()) {
            while self.peek().is_some_and(|c| is_name_char(c) || c == '.') {
                self.bump();
            }
            self.backtrack_trailing_dots(start);
        }
        self.src[start..self.pos].to_string()
    }

    fn prefixed_name(&mut self) -> Result<String, RdfError> {
        let start = self.pos;
        let label = self.pn_prefix();
        if !self.eat(':') {
            self.pos = start;
            return self.unexpected("IRI or prefixed name");
        }
        let mut local = String::new();
        loop {
            match self.peek() {
                Some(c) if is_name_char(c) || c == '.' || c == ':' => {
                    local.push(c);
                    self.bump();
                }
                Some('%') => {
                    let hex: String = self.rest().chars().skip(1).take(2).collect();
                    if hex.len() != 2 || !hex.chars().all(|c| c.is_ascii_hexdigit()) {
                        return self.syntax("invalid percent escape in local name");
                    }
                    local.push('%');
                    local.push_str(&hex);
                    self.pos += 3;
                }
                Some('\\') => {
                    self.bump();
                    match self.bump() {
                        Some(c) if "_~.-!$&'()*+,;=/?#@%".contains(c) => local.push(c),
                        _ => return self.syntax("invalid local name escape"),
                    }
                }
                _ => break,
            }
        }
        while local.ends_with('.') && self.src[..self.pos].ends_with('.') {
            local.pop();
            self.pos -= 1;
        }
        match self.namespaces.get(&label) {
            Some(ns) => Ok(format!("{ns}{local}")),
            None => self.syntax_at(start, format!("undeclared prefix '{label}:'")),
        }
    }

    fn literal(&mut self) -> Result<Term, RdfError> {
        let start = self.pos;
        let quote = self.bump().expect("caller checked quote");
        let long = self.turtle() && self.rest().starts_with(&format!("{quote}{quote}"));
        if !self.turtle() && self.rest().starts_with("\"\"") {
            return self.syntax("long strings are not allowed in N-Triples");
        }
        if long {
            self.pos += 2;
        }
        let mut value = String::new();
        loop {
            match self.bump() {
                None => return self.syntax_at(start, "unterminated string literal"),
                Some(c) if c == quote => {
                    if !long {
                        break;
                    }
                    if self.rest().starts_with(&format!("{quote}{quote}")) && !self.rest()[2..].starts_with(quote) {
                        self.pos += 2;
                        break;
                    }
                    value.push(c);
                }
                Some('\\') => value.push(self.string_escape()?),
                Some('\n') | Some('\r') if !long => return self.syntax("line break in short string literal"),
                Some(c) => value.push(c),
            }
        }
        if self.eat('@') {
            let tag_start = self.pos;
            while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '-') {
                self.bump();
            }
            let tag = &self.src[tag_start..self.pos];
            if tag.is_empty() || tag.starts_with('-') {
                return self.syntax_at(tag_start, "invalid language tag");
            }
            return Ok(Term::lang_literal(value, tag));
        }
        if self.rest().starts_with("^^") {
            self.pos += 2;
            let datatype = match self.peek() {
                Some('<') => self.iriref()?,
                Some(_) if self.turtle() => self.prefixed_name()?,
                _ => return self.unexpected("datatype IRI"),
            };
            return Ok(Term::typed_literal(value, datatype));
        }
        Ok(Term::literal(value))
    }

    fn string_escape(&mut self) -> Result<char, RdfError> {
        match self.peek() {
            Some('u') | Some('U') => self.unicode_escape(),
            Some(c) => {
                self.bump();
                Ok(match c {
                    't' => '\t',
                    'b' => '\u{8}',
                    'n' => '\n',
                    'r' => '\r',
                    'f' => '\u{c}',
                    '"' => '"',
                    '\'' => '\'',
                    '\\' => '\\',
                    _ => return self.syntax(format!("invalid escape '\\{c}'")),
                })
            }
            None => self.syntax("unterminated escape"),
        }
    }

    fn numeric(&mut self) -> Result<Term, RdfError> {
        let start = self.pos;
        if matches!(self.peek(), Some('+') | Some('-')) {
            self.bump();
        }
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.peek().is_some_and(|c| c.is_ascii_digit()) {
                p.bump();
            }
            p.pos - s
        };
        let int_digits = digits(self);
        let mut frac_digits = 0;
        let mut is_decimal = false;
        if self.peek() == Some('.') && self.peek_at(1).is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
            is_decimal = true;
            frac_digits = digits(self);
        }
        if int_digits + frac_digits == 0 {
            return self.syntax_at(start, "invalid numeric literal");
        }
        let mut is_double = false;
        if matches!(self.peek(), Some('e') | Some('E')) {
            self.bump();
            if matches!(self.peek(), Some('+') | Some('-')) {
                self.bump();
            }
            if digits(self) == 0 {
                return self.syntax_at(start, "invalid exponent");
            }
            is_double = true;
        }
        let lexical = &self.src[start..self.pos];
        let datatype = if is_double {
            XSD_DOUBLE
        } else if is_decimal {
            XSD_DECIMAL
        } else {
            XSD_INTEGER
        };
        Ok(Term::typed_literal(lexical, datatype))
    }
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-' || c == '\u{b7}'
}
