//! Trace-filtering queries over logs.
//!
//! ```text
//! query  := ("count" | "cases") [ "where" filter { "and" filter } ] ;
//! filter := "has" "activity" STRING
//!         | scope "." IDENT op literal
//!         | "start_hour" "in" "[" TIME "," TIME ")" [ "at" ZONE ]
//!         | "on" STRING ":" IDENT op literal ;
//! scope  := "case" | "event" ;
//! op     := "=" | "!=" | "<" | "<=" | ">" | ">=" ;
//! literal := STRING | NUMBER | "true" | "false" ;
//! TIME   := HH:MM[:SS] ;  ZONE := "UTC" | "Z" | (+|-)HH:MM ;
//! ```
//!
//! Filters are conjunctive. `event.k op v` holds when any event satisfies the
//! comparison; `on "A": k op v` restricts that to events with activity `A`.
//! A missing attribute never matches. A present attribute whose type does not
//! fit the literal is a type error: the trace does not match and the error is
//! reported with its coordinates.

use std::cmp::Ordering;
use std::fmt;

use chrono::{FixedOffset, NaiveTime, Timelike};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::time::{format_decimal, parse_timestamp};
use crate::xes::{AttributeValue, Log, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    Count,
    CaseIds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Case,
    Event,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CompareOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CompareOp {
    pub const ALL: [CompareOp; 6] = [
        CompareOp::Eq,
        CompareOp::Ne,
        CompareOp::Lt,
        CompareOp::Le,
        CompareOp::Gt,
        CompareOp::Ge,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CompareOp::Eq | CompareOp::Ne)
    }

    /// Applies the operator to an ordering; `None` (incomparable, e.g. NaN)
    /// only satisfies `!=`.
    pub fn holds(self, ordering: Option<Ordering>) -> bool {
        match ordering {
            None => self == CompareOp::Ne,
            Some(o) => match self {
                CompareOp::Eq => o == Ordering::Equal,
                CompareOp::Ne => o != Ordering::Equal,
                CompareOp::Lt => o == Ordering::Less,
                CompareOp::Le => o != Ordering::Greater,
                CompareOp::Gt => o == Ordering::Greater,
                CompareOp::Ge => o != Ordering::Less,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Literal {
    Text(String),
    Int(i64),
    Float(f64),
    Boolean(bool),
}

impl Literal {
    pub fn type_tag(&self) -> &'static str {
        match self {
            Literal::Text(_) => "string",
            Literal::Int(_) | Literal::Float(_) => "number",
            Literal::Boolean(_) => "boolean",
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Text(s) => write!(f, "{}", quote(s)),
            Literal::Int(v) => write!(f, "{v}"),
            Literal::Float(v) => write!(f, "{}", format_decimal(*v)),
            Literal::Boolean(b) => write!(f, "{b}"),
        }
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceFilter {
    HasActivity(String),
    AttrCompare {
        scope: Scope,
        key: String,
        op: CompareOp,
        literal: Literal,
    },
    /// Tests the first event's wall-clock time in `zone`. With `wrap` an
    /// interval whose end precedes its start crosses midnight and equal ends
    /// cover the whole day; without it such intervals are empty.
    StartTimeOfDayIn {
        from: NaiveTime,
        to: NaiveTime,
        wrap: bool,
        zone: FixedOffset,
    },
    EventAttrOnActivity {
        activity: String,
        key: String,
        op: CompareOp,
        literal: Literal,
    },
}

impl TraceFilter {
    pub fn time_of_day(from: NaiveTime, to: NaiveTime) -> Self {
        TraceFilter::StartTimeOfDayIn {
            from,
            to,
            wrap: true,
            zone: utc(),
        }
    }
}

fn utc() -> FixedOffset {
    FixedOffset::east_opt(0).expect("zero offset")
}

fn format_time(t: NaiveTime) -> String {
    if t.second() == 0 && t.nanosecond() == 0 {
        t.format("%H:%M").to_string()
    } else {
        t.format("%H:%M:%S").to_string()
    }
}

impl fmt::Display for TraceFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceFilter::HasActivity(a) => write!(f, "has activity {}", quote(a)),
            TraceFilter::AttrCompare {
                scope,
                key,
                op,
                literal,
            } => {
                let scope = match scope {
                    Scope::Case => "case",
                    Scope::Event => "event",
                };
                write!(f, "{scope}.{key} {} {literal}", op.symbol())
            }
            TraceFilter::StartTimeOfDayIn { from, to, zone, .. } => {
                write!(f, "start_hour in [{}, {})", format_time(*from), format_time(*to))?;
                if zone.local_minus_utc() != 0 {
                    write!(f, " at {zone}")?;
                }
                Ok(())
            }
            TraceFilter::EventAttrOnActivity {
                activity,
                key,
                op,
                literal,
            } => write!(f, "on {}: {key} {} {literal}", quote(activity), op.symbol()),
        }
    }
}

/// Parsed query. An empty filter list is the explicit match-all form.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub filters: Vec<TraceFilter>,
    pub projection: Projection,
}

impl Query {
    pub fn match_all(projection: Projection) -> Self {
        Self {
            filters: Vec::new(),
            projection,
        }
    }

    pub fn is_match_all(&self) -> bool {
        self.filters.is_empty()
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self.projection {
            Projection::Count => "count",
            Projection::CaseIds => "cases",
        })?;
        for (i, filter) in self.filters.iter().enumerate() {
            f.write_str(if i == 0 { " where " } else { " and " })?;
            write!(f, "{filter}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryErrorKind {
    Syntax,
    UnknownOperator,
    MalformedTime,
}

/// Parse failure at a 1-based character column.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("column {column}: {message}")]
pub struct QueryError {
    pub kind: QueryErrorKind,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Str(String),
    Int(i64),
    Float(f64),
    /// `[+-]HH:MM[:SS]`, kept as text.
    Time(String),
    Sym(&'static str),
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Word(w) => format!("{w:?}"),
            Tok::Str(s) => format!("string {}", quote(s)),
            Tok::Int(v) => format!("number {v}"),
            Tok::Float(v) => format!("number {}", format_decimal(*v)),
            Tok::Time(t) => format!("time {t}"),
            Tok::Sym(s) => format!("{s:?}"),
            Tok::End => "end of query".into(),
        }
    }
}

fn err(kind: QueryErrorKind, column: usize, message: impl Into<String>) -> QueryError {
    QueryError {
        kind,
        column,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, QueryError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '"' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(err(QueryErrorKind::Syntax, column, "unterminated string")),
                    Some('"') => break,
                    Some('\\') => {
                        let escaped = match chars.get(i + 1) {
                            Some('"') => '"',
                            Some('\\') => '\\',
                            Some('n') => '\n',
                            Some('t') => '\t',
                            _ => return Err(err(QueryErrorKind::Syntax, i + 1, "invalid escape in string")),
                        };
                        s.push(escaped);
                        i += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            i += 1;
            out.push((Tok::Str(s), column));
            continue;
        }
        let signed = (c == '-' || c == '+') && chars.get(i + 1).is_some_and(char::is_ascii_digit);
        if c.is_ascii_digit() || signed {
            let start = i;
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || matches!(chars[i], '.' | ':' | '_')) {
                // exponent sign
                if matches!(chars[i], 'e' | 'E') && matches!(chars.get(i + 1), Some('+' | '-')) {
                    i += 1;
                }
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            if word.contains(':') {
                out.push((Tok::Time(word), column));
            } else if let Ok(v) = word.parse::<i64>() {
                if c == '+' {
                    return Err(err(QueryErrorKind::Syntax, column, format!("invalid number {word:?}")));
                }
                out.push((Tok::Int(v), column));
            } else if let Ok(v) = word.parse::<f64>() {
                if c == '+' || !v.is_finite() {
                    return Err(err(QueryErrorKind::Syntax, column, format!("invalid number {word:?}")));
                }
                out.push((Tok::Float(v), column));
            } else {
                return Err(err(QueryErrorKind::Syntax, column, format!("invalid number {word:?}")));
            }
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len()
                && (chars[i].is_alphanumeric()
                    || chars[i] == '_'
                    || (chars[i] == ':' && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric() || *n == '_')))
            {
                i += 1;
            }
            out.push((Tok::Word(chars[start..i].iter().collect()), column));
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let sym = match two.as_str() {
            "!=" => Some("!="),
            "<=" => Some("<="),
            ">=" => Some(">="),
            "==" => {
                return Err(err(
                    QueryErrorKind::UnknownOperator,
                    column,
                    "unknown operator \"==\"; use \"=\"",
                ))
            }
            "<>" => {
                return Err(err(
                    QueryErrorKind::UnknownOperator,
                    column,
                    "unknown operator \"<>\"; use \"!=\"",
                ))
            }
            _ => None,
        };
        if let Some(sym) = sym {
            out.push((Tok::Sym(sym), column));
            i += 2;
            continue;
        }
        let sym = match c {
            '[' => "[",
            ']' => "]",
            '(' => "(",
            ')' => ")",
            ',' => ",",
            '.' => ".",
            ':' => ":",
            '=' => "=",
            '<' => "<",
            '>' => ">",
            '!' | '~' | '&' | '|' | '+' | '-' | '*' | '/' | '%' | '^' => {
                return Err(err(
                    QueryErrorKind::UnknownOperator,
                    column,
                    format!("unknown operator {c:?}"),
                ))
            }
            _ => {
                return Err(err(
                    QueryErrorKind::Syntax,
                    column,
                    format!("unexpected character {c:?}"),
                ))
            }
        };
        out.push((Tok::Sym(sym), column));
        i += 1;
    }
    out.push((Tok::End, chars.len() + 1));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn column(&self) -> usize {
        self.toks[self.pos].1
    }

    fn next(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, wanted: &str) -> QueryError {
        err(
            QueryErrorKind::Syntax,
            self.column(),
            format!("expected {wanted}, found {}", self.peek().describe()),
        )
    }

    fn at_word(&self, word: &str) -> bool {
        matches!(self.peek(), Tok::Word(w) if w == word)
    }

    fn word(&mut self, word: &str) -> Result<(), QueryError> {
        if self.at_word(word) {
            self.next();
            Ok(())
        } else {
            Err(self.unexpected(&format!("{word:?}")))
        }
    }

    fn sym(&mut self, sym: &str) -> Result<(), QueryError> {
        if matches!(self.peek(), Tok::Sym(s) if *s == sym) {
            self.next();
            Ok(())
        } else {
            Err(self.unexpected(&format!("{sym:?}")))
        }
    }

    fn string(&mut self) -> Result<String, QueryError> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.next();
                Ok(s)
            }
            _ => Err(self.unexpected("a quoted string")),
        }
    }

    fn ident(&mut self) -> Result<String, QueryError> {
        match self.peek().clone() {
            Tok::Word(w) => {
                self.next();
                Ok(w)
            }
            _ => Err(self.unexpected("an attribute key")),
        }
    }

    fn op(&mut self) -> Result<CompareOp, QueryError> {
        let op = match self.peek() {
            Tok::Sym("=") => CompareOp::Eq,
            Tok::Sym("!=") => CompareOp::Ne,
            Tok::Sym("<") => CompareOp::Lt,
            Tok::Sym("<=") => CompareOp::Le,
            Tok::Sym(">") => CompareOp::Gt,
            Tok::Sym(">=") => CompareOp::Ge,
            Tok::Sym(s) => {
                return Err(err(
                    QueryErrorKind::UnknownOperator,
                    self.column(),
                    format!("unknown operator {s:?}"),
                ))
            }
            Tok::Word(w) => {
                return Err(err(
                    QueryErrorKind::UnknownOperator,
                    self.column(),
                    format!("unknown operator {w:?}"),
                ))
            }
            _ => return Err(self.unexpected("a comparison operator")),
        };
        self.next();
        Ok(op)
    }

    fn literal(&mut self, op: CompareOp, op_column: usize) -> Result<Literal, QueryError> {
        let literal = match self.peek().clone() {
            Tok::Str(s) => Literal::Text(s),
            Tok::Int(v) => Literal::Int(v),
            Tok::Float(v) => Literal::Float(v),
            Tok::Word(w) if w == "true" => Literal::Boolean(true),
            Tok::Word(w) if w == "false" => Literal::Boolean(false),
            _ => return Err(self.unexpected("a string, number or boolean")),
        };
        if matches!(literal, Literal::Boolean(_)) && op.is_ordering() {
            return Err(err(
                QueryErrorKind::UnknownOperator,
                op_column,
                format!("operator {:?} does not apply to booleans", op.symbol()),
            ));
        }
        self.next();
        Ok(literal)
    }

    fn comparison(&mut self) -> Result<(String, CompareOp, Literal), QueryError> {
        let key = self.ident()?;
        let op_column = self.column();
        let op = self.op()?;
        let literal = self.literal(op, op_column)?;
        Ok((key, op, literal))
    }

    fn time(&mut self) -> Result<NaiveTime, QueryError> {
        let column = self.column();
        match self.peek().clone() {
            Tok::Time(text) => {
                self.next();
                parse_time_of_day(&text).ok_or_else(|| {
                    err(
                        QueryErrorKind::MalformedTime,
                        column,
                        format!("malformed time of day {text:?}; expected HH:MM or HH:MM:SS"),
                    )
                })
            }
            Tok::Int(_) | Tok::Float(_) => Err(err(
                QueryErrorKind::MalformedTime,
                column,
                "malformed time of day; expected HH:MM or HH:MM:SS",
            )),
            _ => Err(self.unexpected("a time of day")),
        }
    }

    fn zone(&mut self) -> Result<FixedOffset, QueryError> {
        let column = self.column();
        let malformed = || {
            err(
                QueryErrorKind::MalformedTime,
                column,
                "malformed zone; expected UTC, Z or an offset like +08:00",
            )
        };
        let zone = match self.peek().clone() {
            Tok::Word(w) if w == "UTC" || w == "Z" => utc(),
            Tok::Time(text) => {
                let (sign, rest) = match text.chars().next() {
                    Some('+') => (1, &text[1..]),
                    Some('-') => (-1, &text[1..]),
                    _ => return Err(malformed()),
                };
                let (h, m) = rest.split_once(':').ok_or_else(malformed)?;
                if h.len() != 2 || m.len() != 2 {
                    return Err(malformed());
                }
                let (h, m) = match (h.parse::<i32>(), m.parse::<i32>()) {
                    (Ok(h), Ok(m)) if m < 60 && h <= 23 => (h, m),
                    _ => return Err(malformed()),
                };
                FixedOffset::east_opt(sign * (h * 3600 + m * 60)).ok_or_else(malformed)?
            }
            _ => return Err(malformed()),
        };
        self.next();
        Ok(zone)
    }

    fn filter(&mut self) -> Result<TraceFilter, QueryError> {
        let column = self.column();
        let Tok::Word(head) = self.peek().clone() else {
            return Err(self.unexpected("a filter"));
        };
        match head.as_str() {
            "has" => {
                self.next();
                self.word("activity")?;
                Ok(TraceFilter::HasActivity(self.string()?))
            }
            "case" | "event" => {
                self.next();
                self.sym(".")?;
                let (key, op, literal) = self.comparison()?;
                let scope = if head == "case" { Scope::Case } else { Scope::Event };
                Ok(TraceFilter::AttrCompare {
                    scope,
                    key,
                    op,
                    literal,
                })
            }
            "start_hour" => {
                self.next();
                self.word("in")?;
                self.sym("[")?;
                let from = self.time()?;
                self.sym(",")?;
                let to = self.time()?;
                self.sym(")")?;
                let zone = if self.at_word("at") {
                    self.next();
                    self.zone()?
                } else {
                    utc()
                };
                Ok(TraceFilter::StartTimeOfDayIn {
                    from,
                    to,
                    wrap: true,
                    zone,
                })
            }
            "on" => {
                self.next();
                let activity = self.string()?;
                self.sym(":")?;
                let (key, op, literal) = self.comparison()?;
                Ok(TraceFilter::EventAttrOnActivity {
                    activity,
                    key,
                    op,
                    literal,
                })
            }
            "or" | "not" => Err(err(
                QueryErrorKind::Syntax,
                column,
                format!("{head:?} is reserved; filters combine with \"and\" only"),
            )),
            _ => Err(self.unexpected("a filter (has, case., event., start_hour, on)")),
        }
    }
}

fn parse_time_of_day(text: &str) -> Option<NaiveTime> {
    let parts: Vec<&str> = text.split(':').collect();
    if !(2..=3).contains(&parts.len())
        || parts
            .iter()
            .any(|p| p.len() != 2 || !p.bytes().all(|b| b.is_ascii_digit()))
    {
        return None;
    }
    let n = |i: usize| parts.get(i).map_or(Some(0), |p| p.parse::<u32>().ok());
    NaiveTime::from_hms_opt(n(0)?, n(1)?, n(2)?)
}

pub fn parse_query(text: &str) -> Result<Query, QueryError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let projection = match p.peek() {
        Tok::Word(w) if w == "count" => Projection::Count,
        Tok::Word(w) if w == "cases" => Projection::CaseIds,
        _ => return Err(p.unexpected("\"count\" or \"cases\"")),
    };
    p.next();
    let mut filters = Vec::new();
    if p.at_word("where") {
        p.next();
        filters.push(p.filter()?);
        while p.at_word("and") {
            p.next();
            filters.push(p.filter()?);
        }
    }
    if *p.peek() != Tok::End {
        return Err(p.unexpected(if filters.is_empty() {
            "\"where\" or end of query"
        } else {
            "\"and\" or end of query"
        }));
    }
    Ok(Query { filters, projection })
}

/// A comparison that could not be evaluated because the attribute's type
/// does not fit the literal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QueryTypeError {
    pub trace: usize,
    pub case_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event: Option<usize>,
    pub key: String,
    pub expected: &'static str,
    pub found: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub query: String,
    pub projection: Projection,
    pub count: usize,
    pub case_ids: Vec<String>,
    pub errors: Vec<QueryTypeError>,
}

impl QueryResult {
    /// `{query, count}` or `{query, case_ids}`, plus `errors` when any.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = match self.projection {
            Projection::Count => json!({ "query": self.query, "count": self.count }),
            Projection::CaseIds => json!({ "query": self.query, "case_ids": self.case_ids }),
        };
        if !self.errors.is_empty() {
            v["errors"] = serde_json::to_value(&self.errors).expect("serializable");
        }
        v
    }
}

/// Compares an attribute against a literal; `Err` carries the mismatching
/// attribute type.
pub fn compare(value: &AttributeValue, op: CompareOp, literal: &Literal) -> Result<bool, &'static str> {
    let ordering = match (value, literal) {
        (AttributeValue::String(a), Literal::Text(b)) => Some(a.as_str().cmp(b.as_str())),
        (AttributeValue::Int(a), Literal::Int(b)) => Some(a.cmp(b)),
        (AttributeValue::Int(a), Literal::Float(b)) => (*a as f64).partial_cmp(b),
        (AttributeValue::Float(a), Literal::Int(b)) => a.partial_cmp(&(*b as f64)),
        (AttributeValue::Float(a), Literal::Float(b)) => a.partial_cmp(b),
        (AttributeValue::Boolean(a), Literal::Boolean(b)) if !op.is_ordering() => Some(a.cmp(b)),
        (AttributeValue::Date(a), Literal::Text(b)) => match parse_timestamp(b) {
            Some(b) => Some(a.cmp(&b)),
            None => return Err(value.type_tag()),
        },
        _ => return Err(value.type_tag()),
    };
    Ok(op.holds(ordering))
}

struct Eval<'a> {
    trace: &'a Trace,
    trace_index: usize,
    errors: Vec<QueryTypeError>,
}

impl Eval<'_> {
    fn check(
        &mut self,
        value: Option<&AttributeValue>,
        op: CompareOp,
        literal: &Literal,
        key: &str,
        event: Option<usize>,
    ) -> bool {
        let Some(value) = value else { return false };
        match compare(value, op, literal) {
            Ok(b) => b,
            Err(found) => {
                self.errors.push(QueryTypeError {
                    trace: self.trace_index,
                    case_id: self.trace.case_id.clone(),
                    event,
                    key: key.to_owned(),
                    expected: literal.type_tag(),
                    found,
                });
                false
            }
        }
    }

    fn any_event(&mut self, activity: Option<&str>, key: &str, op: CompareOp, literal: &Literal) -> bool {
        let mut hit = false;
        for (e, event) in self.trace.events.iter().enumerate() {
            if activity.is_some_and(|a| a != event.activity) {
                continue;
            }
            // every event is checked so all type errors surface
            hit |= self.check(event.attributes.get(key), op, literal, key, Some(e));
        }
        hit
    }

    fn filter(&mut self, filter: &TraceFilter) -> bool {
        match filter {
            TraceFilter::HasActivity(a) => self.trace.events.iter().any(|e| &e.activity == a),
            TraceFilter::AttrCompare {
                scope: Scope::Case,
                key,
                op,
                literal,
            } => self.check(self.trace.attributes.get(key), *op, literal, key, None),
            TraceFilter::AttrCompare {
                scope: Scope::Event,
                key,
                op,
                literal,
            } => self.any_event(None, key, *op, literal),
            TraceFilter::EventAttrOnActivity {
                activity,
                key,
                op,
                literal,
            } => self.any_event(Some(activity), key, *op, literal),
            TraceFilter::StartTimeOfDayIn { from, to, wrap, zone } => match self.trace.events.first() {
                None => false,
                Some(first) => in_interval(first.timestamp.with_timezone(zone).time(), *from, *to, *wrap),
            },
        }
    }
}

/// Half-open `[from, to)` membership, wrapping past midnight when allowed.
pub fn in_interval(t: NaiveTime, from: NaiveTime, to: NaiveTime, wrap: bool) -> bool {
    match from.cmp(&to) {
        Ordering::Less => from <= t && t < to,
        _ if !wrap => false,
        Ordering::Equal => true,
        Ordering::Greater => t >= from || t < to,
    }
}

/// Whether one trace satisfies every filter, with any type errors. All
/// filters are evaluated so the errors do not depend on filter order.
pub fn trace_matches(trace: &Trace, trace_index: usize, query: &Query) -> (bool, Vec<QueryTypeError>) {
    let mut eval = Eval {
        trace,
        trace_index,
        errors: Vec::new(),
    };
    let mut all = true;
    for filter in &query.filters {
        all &= eval.filter(filter);
    }
    let ok = all && eval.errors.is_empty();
    (ok, eval.errors)
}

pub fn run_query(log: &Log, query: &Query) -> QueryResult {
    let mut case_ids = Vec::new();
    let mut errors = Vec::new();
    for (i, trace) in log.traces.iter().enumerate() {
        let (ok, errs) = trace_matches(trace, i, query);
        if ok {
            case_ids.push(trace.case_id.clone());
        }
        errors.extend(errs);
    }
    QueryResult {
        query: query.to_string(),
        projection: query.projection,
        count: case_ids.len(),
        case_ids,
        errors,
    }
}
