//! Text formats: the query language and the update stream.
//!
//! Queries are written as `Q(A,B) := R@d(A), S@s(A,B), T@d(B).` where
//! `@d` marks a dynamic relation and `@s` a static one. `%` starts a
//! comment that runs to the end of the line.
//!
//! An update stream has one event per line: `+R(v1,..)` inserts a tuple,
//! `-R(v1,..)` deletes one, `?` requests the current result and `!`
//! requests engine statistics. Lines starting with `#` are comments.
//! Values inside the parentheses follow CSV quoting rules.

use std::collections::HashMap;

use crate::error::{Error, ParseError, Result};
use crate::query::{AtomKind, Query, Var};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum UpdateEvent {
    Insert { relation: String, tuple: Vec<String> },
    Delete { relation: String, tuple: Vec<String> },
    Enumerate,
    Checkpoint,
}

impl UpdateEvent {
    pub fn relation(&self) -> Option<&str> {
        match self {
            UpdateEvent::Insert { relation, .. } | UpdateEvent::Delete { relation, .. } => Some(relation),
            _ => None,
        }
    }
}

impl std::fmt::Display for UpdateEvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let fmt_tuple = |t: &[String]| {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(vec![]);
            w.write_record(t).expect("write to memory");
            let bytes = w.into_inner().expect("flush to memory");
            String::from_utf8(bytes).expect("utf8 input").trim_end().to_string()
        };
        match self {
            UpdateEvent::Insert { relation, tuple } => write!(f, "+{relation}({})", fmt_tuple(tuple)),
            UpdateEvent::Delete { relation, tuple } => write!(f, "-{relation}({})", fmt_tuple(tuple)),
            UpdateEvent::Enumerate => f.write_str("?"),
            UpdateEvent::Checkpoint => f.write_str("!"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Constant(String),
    LParen,
    RParen,
    Comma,
    Define,
    At,
    Dot,
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn err<T>(line: usize, col: usize, message: impl Into<String>) -> Result<T> {
    Err(ParseError {
        line,
        col,
        message: message.into(),
    }
    .into())
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let step = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => step(1, &mut i, &mut col),
            '%' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '(' | ')' | ',' | '@' | '.' => {
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    '@' => Tok::At,
                    _ => Tok::Dot,
                };
                out.push(Token { tok, line: l0, col: c0 });
                step(1, &mut i, &mut col);
            }
            ':' if chars.get(i + 1) == Some(&'=') => {
                out.push(Token {
                    tok: Tok::Define,
                    line: l0,
                    col: c0,
                });
                step(2, &mut i, &mut col);
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                    i += 1;
                }
                col += i - start;
                out.push(Token {
                    tok: Tok::Ident(chars[start..i].iter().collect()),
                    line: l0,
                    col: c0,
                });
            }
            c if c.is_ascii_digit() || c == '"' || c == '\'' || c == '-' => {
                let start = i;
                i += 1;
                while i < chars.len() && !matches!(chars[i], ',' | ')' | '\n') {
                    i += 1;
                }
                col += i - start;
                out.push(Token {
                    tok: Tok::Constant(chars[start..i].iter().collect()),
                    line: l0,
                    col: c0,
                });
            }
            other => return err(l0, c0, format!("unexpected character `{other}`")),
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Token> {
        let t = self.next();
        if t.tok == want {
            Ok(t)
        } else {
            err(t.line, t.col, format!("expected {what}, found {}", describe(&t.tok)))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Token)> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(s) => Ok((s.clone(), t.clone())),
            Tok::Constant(c) => err(t.line, t.col, format!("constants are not supported (`{c}`)")),
            other => err(t.line, t.col, format!("expected {what}, found {}", describe(other))),
        }
    }

    fn var_list(&mut self) -> Result<Vec<(String, Token)>> {
        self.expect(Tok::LParen, "`(`")?;
        let mut vars = Vec::new();
        if self.peek().tok == Tok::RParen {
            self.next();
            return Ok(vars);
        }
        loop {
            vars.push(self.ident("a variable")?);
            let t = self.next();
            match t.tok {
                Tok::Comma => continue,
                Tok::RParen => return Ok(vars),
                other => {
                    return err(
                        t.line,
                        t.col,
                        format!("expected `,` or `)`, found {}", describe(&other)),
                    )
                }
            }
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Constant(s) => format!("constant `{s}`"),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Comma => "`,`".into(),
        Tok::Define => "`:=`".into(),
        Tok::At => "`@`".into(),
        Tok::Dot => "`.`".into(),
        Tok::Eof => "end of input".into(),
    }
}

/// Parses a query, rejecting repeated relation symbols.
pub fn parse_query(text: &str) -> Result<Query> {
    parse_query_with(text, false)
}

/// Parses a query; `allow_repeats` permits a relation symbol to occur in
/// several atoms.
pub fn parse_query_with(text: &str, allow_repeats: bool) -> Result<Query> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let (name, _) = p.ident("a query name")?;
    let head = p.var_list()?;
    p.expect(Tok::Define, "`:=`")?;

    let mut names: Vec<String> = Vec::new();
    let mut ids: HashMap<String, Var> = HashMap::new();
    let mut intern = |n: &str| -> Var {
        *ids.entry(n.to_string()).or_insert_with(|| {
            names.push(n.to_string());
            Var(names.len() as u32 - 1)
        })
    };
    let mut head_vars = Vec::new();
    for (v, t) in &head {
        let id = intern(v);
        if head_vars.contains(&id) {
            return err(t.line, t.col, format!("head variable `{v}` is repeated"));
        }
        head_vars.push(id);
    }

    let mut body: Vec<(String, AtomKind, Vec<Var>)> = Vec::new();
    let mut seen_rel: HashMap<String, (usize, AtomKind)> = HashMap::new();
    let mut body_vars = std::collections::HashSet::new();
    loop {
        let (rel, rel_tok) = p.ident("a relation name")?;
        p.expect(Tok::At, "`@` followed by an adornment")?;
        let (adorn, at) = p.ident("an adornment")?;
        let kind = match adorn.as_str() {
            "d" => AtomKind::Dynamic,
            "s" => AtomKind::Static,
            other => {
                return err(
                    at.line,
                    at.col,
                    format!("unknown adornment `@{other}`, expected `@d` or `@s`"),
                )
            }
        };
        let vars = p.var_list()?;
        if vars.is_empty() {
            return err(rel_tok.line, rel_tok.col, format!("atom `{rel}` has no variables"));
        }
        let mut ids_here = Vec::new();
        for (v, t) in &vars {
            let id = intern(v);
            if ids_here.contains(&id) {
                return err(t.line, t.col, format!("variable `{v}` occurs twice in atom `{rel}`"));
            }
            ids_here.push(id);
            body_vars.insert(v.clone());
        }
        match seen_rel.get(&rel) {
            Some(_) if !allow_repeats => {
                return err(
                    rel_tok.line,
                    rel_tok.col,
                    format!("relation `{rel}` occurs more than once"),
                );
            }
            Some(&(arity, k)) if arity != vars.len() || k != kind => {
                return err(
                    rel_tok.line,
                    rel_tok.col,
                    format!("relation `{rel}` is used with a different arity or adornment"),
                );
            }
            _ => {
                seen_rel.insert(rel.clone(), (vars.len(), kind));
            }
        }
        body.push((rel, kind, ids_here));
        let t = p.next();
        match t.tok {
            Tok::Comma => continue,
            Tok::Dot => break,
            other => {
                return err(
                    t.line,
                    t.col,
                    format!("expected `,` or `.`, found {}", describe(&other)),
                )
            }
        }
    }
    let t = p.next();
    if t.tok != Tok::Eof {
        return err(
            t.line,
            t.col,
            format!("unexpected {} after the query", describe(&t.tok)),
        );
    }
    for (v, t) in &head {
        if !body_vars.contains(v) {
            return err(t.line, t.col, format!("head variable `{v}` does not occur in the body"));
        }
    }
    Query::from_parts(name, head_vars, body, names, allow_repeats)
}

fn parse_values(inner: &str, line: usize, col: usize) -> Result<Vec<String>> {
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(inner.as_bytes());
    let mut rec = csv::StringRecord::new();
    match rdr.read_record(&mut rec) {
        Ok(true) => {}
        Ok(false) => return Ok(Vec::new()),
        Err(e) => return err(line, col, format!("malformed values: {e}")),
    }
    if rdr.read_record(&mut csv::StringRecord::new()).unwrap_or(false) {
        return err(line, col, "values span more than one record");
    }
    Ok(rec.iter().map(str::to_string).collect())
}

/// Parses an update stream against the relations of `query`.
pub fn parse_update_stream(text: &str, query: &Query) -> Result<Vec<UpdateEvent>> {
    let mut events = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let indent = raw.len() - raw.trim_start().len();
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let col = indent + 1;
        match s {
            "?" => {
                events.push(UpdateEvent::Enumerate);
                continue;
            }
            "!" => {
                events.push(UpdateEvent::Checkpoint);
                continue;
            }
            _ => {}
        }
        let insert = match s.as_bytes()[0] {
            b'+' => true,
            b'-' => false,
            _ => return err(line, col, format!("expected `+`, `-`, `?` or `!`, found `{s}`")),
        };
        let rest = &s[1..];
        let (Some(open), true) = (rest.find('('), rest.ends_with(')')) else {
            return err(line, col + 1, "expected `Rel(values)`");
        };
        let relation = rest[..open].trim().to_string();
        if relation.is_empty() {
            return err(line, col + 1, "missing relation name");
        }
        let tuple = parse_values(&rest[open + 1..rest.len() - 1], line, col + 2 + open)?;
        let Some((arity, kind)) = query.relation_kind(&relation) else {
            return err(line, col + 1, format!("unknown relation `{relation}`"));
        };
        if kind == AtomKind::Static {
            return Err(Error::StaticUpdate(relation));
        }
        if tuple.len() != arity {
            return err(
                line,
                col + 1,
                format!("relation `{relation}` has arity {arity}, got {} values", tuple.len()),
            );
        }
        events.push(if insert {
            UpdateEvent::Insert { relation, tuple }
        } else {
            UpdateEvent::Delete { relation, tuple }
        });
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perr(text: &str) -> ParseError {
        match parse_query(text) {
            Err(Error::Parse(e)) => e,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parses_with_comments() {
        let q = parse_query("% running example\nQ(A,B) := R@d(A), % dyn\n  S@s(A,B), T@d(B).").unwrap();
        assert_eq!(q.body().len(), 3);
        assert_eq!(q.to_string(), "Q(A,B) := R@d(A), S@s(A,B), T@d(B).");
    }

    #[test]
    fn boolean_head() {
        let q = parse_query("Q() := R@d(A), S@s(A,B), T@d(B).").unwrap();
        assert!(q.head().is_empty());
    }

    #[test]
    fn positioned_errors() {
        let e = perr("Q(A) := R@x(A).");
        assert_eq!((e.line, e.col), (1, 11));
        assert!(e.message.contains("adornment"));

        let e = perr("Q(A) :=\n R@d(A,A).");
        assert_eq!((e.line, e.col), (2, 8));

        let e = perr("Q(A,B) := R@d(A).");
        assert_eq!((e.line, e.col), (1, 5));

        let e = perr("Q(A) := R@d(A), R@d(A).");
        assert_eq!((e.line, e.col), (1, 17));

        let e = perr("Q(A) := R@d(A, 3).");
        assert!(e.message.contains("constant"));

        let e = perr("Q(A) := R@d(A)");
        assert!(e.message.contains("end of input"));

        let e = perr("Q() := R@d().");
        assert!(e.message.contains("no variables"));
    }

    #[test]
    fn repeats_when_allowed() {
        let q = parse_query_with("Q(A) := R@d(A,B), R@d(B,A).", true).unwrap();
        assert!(q.has_repeats());
        assert!(parse_query_with("Q(A) := R@d(A,B), R@s(B,A).", true).is_err());
    }

    #[test]
    fn update_stream() {
        let q = parse_query("Q(A,B) := R@d(A), S@s(A,B), T@d(B).").unwrap();
        let text = "# header\n+R(a1)\n-T( b3 )\n?\n+R(\"x,y\")\n!\n";
        let ev = parse_update_stream(text, &q).unwrap();
        assert_eq!(
            ev,
            vec![
                UpdateEvent::Insert {
                    relation: "R".into(),
                    tuple: vec!["a1".into()]
                },
                UpdateEvent::Delete {
                    relation: "T".into(),
                    tuple: vec!["b3".into()]
                },
                UpdateEvent::Enumerate,
                UpdateEvent::Insert {
                    relation: "R".into(),
                    tuple: vec!["x,y".into()]
                },
                UpdateEvent::Checkpoint,
            ]
        );
        assert_eq!(ev[3].to_string(), "+R(\"x,y\")");
    }

    #[test]
    fn update_stream_errors() {
        let q = parse_query("Q(A,B) := R@d(A), S@s(A,B), T@d(B).").unwrap();
        assert!(matches!(parse_update_stream("+S(a,b)", &q), Err(Error::StaticUpdate(r)) if r == "S"));
        match parse_update_stream("?\n+U(a)", &q) {
            Err(Error::Parse(e)) => assert_eq!(e.line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_update_stream("+R(a,b)", &q).is_err());
        assert!(parse_update_stream("*R(a)", &q).is_err());
        assert!(parse_update_stream("+R a", &q).is_err());
    }
}
