//! Concrete syntax for `.gpi` programs and pretty-printers for both calculi.
//!
//! ```text
//! program  ::= block+                 (parse accepts exactly one block)
//! block    ::= decl* "run" par
//! decl     ::= "chan" IDENT ":" type ";"
//! type     ::= "dyn" | "i" "(" types ")" | "o" "(" types ")"
//! par      ::= choice ("|" par)?
//! choice   ::= prefix ("+" choice)?
//! prefix   ::= "0" | "(" par ")" | "new" "(" IDENT ":" type ")" prefix | "!" prefix
//!            | IDENT "?" "(" binders ")" cont
//!            | IDENT "!" "<" names ">" cont
//!            | IDENT "!" "!" "<" names ">" cont
//! cont     ::= ("." prefix)?          (a missing continuation is 0)
//! ```
//!
//! Line comments start with `--`.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use crate::syntax::{CastChannel, CastProcess, Name, SurfaceProcess, Type, TypeEnv};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Half-open source range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub start: Pos,
    pub end: Pos,
}

impl Span {
    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

/// One `decl* run P` block: the environment for the free channels of `proc`
/// and the process itself. `spans[k]` is the source range of the `k`-th
/// process node in pre-order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub env: TypeEnv,
    pub proc: SurfaceProcess,
    pub spans: Vec<Span>,
}

impl Program {
    pub fn span_of(&self, node: usize) -> Option<Span> {
        self.spans.get(node).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("{pos}: expected {}, found {found}", expected.join(" or "))]
    Syntax {
        pos: Pos,
        expected: Vec<String>,
        found: String,
    },
    #[error("{pos}: channel `{name}` is used but not declared")]
    Undeclared { pos: Pos, name: String },
    #[error("{pos}: channel `{name}` is declared twice")]
    Duplicate { pos: Pos, name: String },
}

impl ParseError {
    pub fn pos(&self) -> Pos {
        match self {
            ParseError::Syntax { pos, .. }
            | ParseError::Undeclared { pos, .. }
            | ParseError::Duplicate { pos, .. } => *pos,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Zero,
    Chan,
    Run,
    New,
    LParen,
    RParen,
    Lt,
    Gt,
    Comma,
    Colon,
    Semi,
    Dot,
    Question,
    Bang,
    Plus,
    Bar,
    Eof,
    Bad(char),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Zero => f.write_str("`0`"),
            Tok::Chan => f.write_str("`chan`"),
            Tok::Run => f.write_str("`run`"),
            Tok::New => f.write_str("`new`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Lt => f.write_str("`<`"),
            Tok::Gt => f.write_str("`>`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::Question => f.write_str("`?`"),
            Tok::Bang => f.write_str("`!`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Bar => f.write_str("`|`"),
            Tok::Eof => f.write_str("end of input"),
            Tok::Bad(c) => write!(f, "character {c:?}"),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    start: Pos,
    end: Pos,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

fn lex(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = Pos { line, col };
        let (tok, len) = if is_ident_start(c) {
            let mut j = i + 1;
            while j < chars.len() && is_ident_continue(chars[j]) {
                j += 1;
            }
            let word: String = chars[i..j].iter().collect();
            let tok = match word.as_str() {
                "chan" => Tok::Chan,
                "run" => Tok::Run,
                "new" => Tok::New,
                _ => Tok::Ident(word),
            };
            (tok, j - i)
        } else {
            let tok = match c {
                '0' => Tok::Zero,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '<' => Tok::Lt,
                '>' => Tok::Gt,
                ',' => Tok::Comma,
                ':' => Tok::Colon,
                ';' => Tok::Semi,
                '.' => Tok::Dot,
                '?' => Tok::Question,
                '!' => Tok::Bang,
                '+' => Tok::Plus,
                '|' => Tok::Bar,
                other => Tok::Bad(other),
            };
            (tok, 1)
        };
        i += len;
        col += len;
        tokens.push(Token {
            tok,
            start,
            end: Pos { line, col },
        });
    }
    tokens.push(Token {
        tok: Tok::Eof,
        start: Pos { line, col },
        end: Pos { line, col },
    });
    tokens
}

/// Parse tree with positions; flattened into `SurfaceProcess` + spans.
#[derive(Debug)]
struct Node {
    span: Span,
    kind: NodeKind,
}

#[derive(Debug)]
enum NodeKind {
    Nil,
    Input {
        subject: (Name, Pos),
        binders: Vec<(Name, Type)>,
        body: Box<Node>,
    },
    Output {
        reverse: bool,
        subject: (Name, Pos),
        args: Vec<(Name, Pos)>,
        body: Box<Node>,
    },
    Par(Box<Node>, Box<Node>),
    Choice(Box<Node>, Box<Node>),
    Restrict {
        name: Name,
        ty: Type,
        body: Box<Node>,
    },
    Replicate(Box<Node>),
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.at].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let idx = (self.at + k).min(self.tokens.len() - 1);
        &self.tokens[idx].tok
    }

    fn pos(&self) -> Pos {
        self.tokens[self.at].start
    }

    fn prev_end(&self) -> Pos {
        if self.at == 0 {
            self.tokens[0].start
        } else {
            self.tokens[self.at - 1].end
        }
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn error<T>(&self, expected: &[&str]) -> PResult<T> {
        Err(ParseError::Syntax {
            pos: self.pos(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().to_string(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<Token> {
        if *self.peek() == tok {
            Ok(self.bump())
        } else {
            self.error(&[what])
        }
    }

    fn ident(&mut self) -> PResult<(Name, Pos)> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let pos = self.pos();
                self.bump();
                Ok((Name::new(s), pos))
            }
            _ => self.error(&["identifier"]),
        }
    }

    fn block(&mut self) -> PResult<(TypeEnv, Node)> {
        let mut env = TypeEnv::new();
        let mut declared = BTreeSet::new();
        while *self.peek() == Tok::Chan {
            self.bump();
            let (name, pos) = self.ident()?;
            self.expect(Tok::Colon, "`:`")?;
            let ty = self.ty()?;
            self.expect(Tok::Semi, "`;`")?;
            if !declared.insert(name.clone()) {
                return Err(ParseError::Duplicate {
                    pos,
                    name: name.base,
                });
            }
            env.extend(name, ty);
        }
        if *self.peek() != Tok::Run {
            return self.error(&["`chan`", "`run`"]);
        }
        self.bump();
        let proc = self.par()?;
        Ok((env, proc))
    }

    fn ty(&mut self) -> PResult<Type> {
        let Tok::Ident(word) = self.peek().clone() else {
            return self.error(&["`dyn`", "`i(`", "`o(`"]);
        };
        let cap = match word.as_str() {
            "dyn" => {
                self.bump();
                return Ok(Type::Dyn);
            }
            "i" => crate::syntax::Capability::Input,
            "o" => crate::syntax::Capability::Output,
            _ => return self.error(&["`dyn`", "`i(`", "`o(`"]),
        };
        self.bump();
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                args.push(self.ty()?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        Ok(Type::Chan(cap, args))
    }

    fn par(&mut self) -> PResult<Node> {
        let left = self.choice()?;
        if *self.peek() == Tok::Bar {
            self.bump();
            let right = self.par()?;
            let span = Span {
                start: left.span.start,
                end: right.span.end,
            };
            return Ok(Node {
                span,
                kind: NodeKind::Par(Box::new(left), Box::new(right)),
            });
        }
        Ok(left)
    }

    fn choice(&mut self) -> PResult<Node> {
        let left = self.prefix()?;
        if *self.peek() == Tok::Plus {
            self.bump();
            let right = self.choice()?;
            let span = Span {
                start: left.span.start,
                end: right.span.end,
            };
            return Ok(Node {
                span,
                kind: NodeKind::Choice(Box::new(left), Box::new(right)),
            });
        }
        Ok(left)
    }

    fn prefix(&mut self) -> PResult<Node> {
        let start = self.pos();
        match self.peek().clone() {
            Tok::Zero => {
                let t = self.bump();
                Ok(Node {
                    span: Span { start, end: t.end },
                    kind: NodeKind::Nil,
                })
            }
            Tok::LParen => {
                self.bump();
                let mut inner = self.par()?;
                let close = self.expect(Tok::RParen, "`)`")?;
                inner.span = Span {
                    start,
                    end: close.end,
                };
                Ok(inner)
            }
            Tok::New => {
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let (name, _) = self.ident()?;
                self.expect(Tok::Colon, "`:`")?;
                let ty = self.ty()?;
                self.expect(Tok::RParen, "`)`")?;
                let body = self.prefix()?;
                Ok(Node {
                    span: Span {
                        start,
                        end: body.span.end,
                    },
                    kind: NodeKind::Restrict {
                        name,
                        ty,
                        body: Box::new(body),
                    },
                })
            }
            Tok::Bang => {
                self.bump();
                let body = self.prefix()?;
                Ok(Node {
                    span: Span {
                        start,
                        end: body.span.end,
                    },
                    kind: NodeKind::Replicate(Box::new(body)),
                })
            }
            Tok::Ident(_) => {
                let subject = self.ident()?;
                match self.peek() {
                    Tok::Question => {
                        self.bump();
                        self.expect(Tok::LParen, "`(`")?;
                        let mut binders: Vec<(Name, Type)> = Vec::new();
                        if *self.peek() != Tok::RParen {
                            loop {
                                let (name, pos) = self.ident()?;
                                self.expect(Tok::Colon, "`:`")?;
                                let ty = self.ty()?;
                                if binders.iter().any(|(n, _)| *n == name) {
                                    return Err(ParseError::Duplicate {
                                        pos,
                                        name: name.base,
                                    });
                                }
                                binders.push((name, ty));
                                if *self.peek() == Tok::Comma {
                                    self.bump();
                                } else {
                                    break;
                                }
                            }
                        }
                        self.expect(Tok::RParen, "`)`")?;
                        let body = self.cont()?;
                        Ok(Node {
                            span: Span {
                                start,
                                end: body.span.end,
                            },
                            kind: NodeKind::Input {
                                subject,
                                binders,
                                body: Box::new(body),
                            },
                        })
                    }
                    Tok::Bang => {
                        self.bump();
                        let reverse = *self.peek() == Tok::Bang && *self.peek_at(1) == Tok::Lt;
                        if reverse {
                            self.bump();
                        }
                        self.expect(Tok::Lt, "`<`")?;
                        let mut args = Vec::new();
                        if *self.peek() != Tok::Gt {
                            loop {
                                args.push(self.ident()?);
                                if *self.peek() == Tok::Comma {
                                    self.bump();
                                } else {
                                    break;
                                }
                            }
                        }
                        self.expect(Tok::Gt, "`>`")?;
                        let body = self.cont()?;
                        Ok(Node {
                            span: Span {
                                start,
                                end: body.span.end,
                            },
                            kind: NodeKind::Output {
                                reverse,
                                subject,
                                args,
                                body: Box::new(body),
                            },
                        })
                    }
                    _ => self.error(&["`?`", "`!`", "`!!`"]),
                }
            }
            _ => self.error(&["`0`", "`(`", "`new`", "`!`", "identifier"]),
        }
    }

    fn cont(&mut self) -> PResult<Node> {
        if *self.peek() == Tok::Dot {
            self.bump();
            self.prefix()
        } else {
            let end = self.prev_end();
            Ok(Node {
                span: Span { start: end, end },
                kind: NodeKind::Nil,
            })
        }
    }
}

fn flatten(node: Node, spans: &mut Vec<Span>) -> SurfaceProcess {
    spans.push(node.span);
    match node.kind {
        NodeKind::Nil => SurfaceProcess::Nil,
        NodeKind::Input {
            subject,
            binders,
            body,
        } => SurfaceProcess::Input {
            subject: subject.0,
            binders,
            body: Box::new(flatten(*body, spans)),
        },
        NodeKind::Output {
            reverse,
            subject,
            args,
            body,
        } => {
            let args = args.into_iter().map(|(n, _)| n).collect();
            let body = Box::new(flatten(*body, spans));
            if reverse {
                SurfaceProcess::ReverseOutput {
                    subject: subject.0,
                    args,
                    body,
                }
            } else {
                SurfaceProcess::Output {
                    subject: subject.0,
                    args,
                    body,
                }
            }
        }
        NodeKind::Par(l, r) => {
            let l = flatten(*l, spans);
            SurfaceProcess::par(l, flatten(*r, spans))
        }
        NodeKind::Choice(l, r) => {
            let l = flatten(*l, spans);
            SurfaceProcess::choice(l, flatten(*r, spans))
        }
        NodeKind::Restrict { name, ty, body } => SurfaceProcess::Restrict {
            name,
            ty,
            body: Box::new(flatten(*body, spans)),
        },
        NodeKind::Replicate(body) => SurfaceProcess::replicate(flatten(*body, spans)),
    }
}

/// First free occurrence of an undeclared name, in source order.
fn first_undeclared(node: &Node, env: &TypeEnv, bound: &mut Vec<Name>) -> Option<(Name, Pos)> {
    let check = |(n, p): &(Name, Pos), bound: &Vec<Name>| {
        (!bound.contains(n) && !env.contains(n)).then(|| (n.clone(), *p))
    };
    match &node.kind {
        NodeKind::Nil => None,
        NodeKind::Input {
            subject,
            binders,
            body,
        } => check(subject, bound).or_else(|| {
            let mark = bound.len();
            bound.extend(binders.iter().map(|(n, _)| n.clone()));
            let res = first_undeclared(body, env, bound);
            bound.truncate(mark);
            res
        }),
        NodeKind::Output {
            subject, args, body, ..
        } => check(subject, bound)
            .or_else(|| args.iter().find_map(|a| check(a, bound)))
            .or_else(|| first_undeclared(body, env, bound)),
        NodeKind::Par(l, r) | NodeKind::Choice(l, r) => {
            first_undeclared(l, env, bound).or_else(|| first_undeclared(r, env, bound))
        }
        NodeKind::Restrict { name, body, .. } => {
            bound.push(name.clone());
            let res = first_undeclared(body, env, bound);
            bound.pop();
            res
        }
        NodeKind::Replicate(body) => first_undeclared(body, env, bound),
    }
}

fn finish_block(env: TypeEnv, node: Node) -> PResult<Program> {
    if let Some((name, pos)) = first_undeclared(&node, &env, &mut Vec::new()) {
        return Err(ParseError::Undeclared {
            pos,
            name: name.to_string(),
        });
    }
    let mut spans = Vec::new();
    let proc = flatten(node, &mut spans);
    Ok(Program { env, proc, spans })
}

/// Parse a single `decl* run P` program.
pub fn parse(text: &str) -> Result<Program, ParseError> {
    let mut parser = Parser {
        tokens: lex(text),
        at: 0,
    };
    let (env, node) = parser.block()?;
    if *parser.peek() != Tok::Eof {
        return parser.error(&["`|`", "`+`", "`.`", "end of input"]);
    }
    finish_block(env, node)
}

/// Parse a file of one or more blocks. Each block is checked and compiled
/// under its own environment; at run time the blocks execute in parallel
/// and share free channels by name.
pub fn parse_system(text: &str) -> Result<Vec<Program>, ParseError> {
    let mut parser = Parser {
        tokens: lex(text),
        at: 0,
    };
    let mut programs = Vec::new();
    loop {
        let (env, node) = parser.block()?;
        programs.push(finish_block(env, node)?);
        match parser.peek() {
            Tok::Eof => return Ok(programs),
            Tok::Chan | Tok::Run => continue,
            _ => return parser.error(&["`|`", "`+`", "`.`", "`chan`", "`run`", "end of input"]),
        }
    }
}

// Precedence levels: `|` < `+` < prefix.
const PAR: u8 = 0;
const CHOICE: u8 = 1;
const PREFIX: u8 = 2;

fn write_names<'a>(out: &mut String, names: impl Iterator<Item = &'a Name>) {
    for (i, n) in names.enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{n}");
    }
}

fn write_binders(out: &mut String, binders: &[(Name, Type)]) {
    for (i, (n, t)) in binders.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{n}:{t}");
    }
}

fn surface(p: &SurfaceProcess, level: u8, out: &mut String) {
    let mine = match p {
        SurfaceProcess::Par(..) => PAR,
        SurfaceProcess::Choice(..) => CHOICE,
        _ => PREFIX,
    };
    if mine < level {
        out.push('(');
    }
    match p {
        SurfaceProcess::Nil => out.push('0'),
        SurfaceProcess::Input {
            subject,
            binders,
            body,
        } => {
            let _ = write!(out, "{subject}?(");
            write_binders(out, binders);
            out.push_str(").");
            surface(body, PREFIX, out);
        }
        SurfaceProcess::Output {
            subject,
            args,
            body,
        } => {
            let _ = write!(out, "{subject}!<");
            write_names(out, args.iter());
            out.push_str(">.");
            surface(body, PREFIX, out);
        }
        SurfaceProcess::ReverseOutput {
            subject,
            args,
            body,
        } => {
            let _ = write!(out, "{subject}!!<");
            write_names(out, args.iter());
            out.push_str(">.");
            surface(body, PREFIX, out);
        }
        SurfaceProcess::Par(l, r) => {
            surface(l, CHOICE, out);
            out.push_str(" | ");
            surface(r, PAR, out);
        }
        SurfaceProcess::Choice(l, r) => {
            surface(l, PREFIX, out);
            out.push_str(" + ");
            surface(r, CHOICE, out);
        }
        SurfaceProcess::Restrict { name, ty, body } => {
            let _ = write!(out, "new ({name}:{ty}) ");
            surface(body, PREFIX, out);
        }
        SurfaceProcess::Replicate(body) => {
            out.push('!');
            surface(body, PREFIX, out);
        }
    }
    if mine < level {
        out.push(')');
    }
}

fn cast(p: &CastProcess, level: u8, out: &mut String) {
    let mine = match p {
        CastProcess::Par(..) => PAR,
        CastProcess::Choice(..) => CHOICE,
        _ => PREFIX,
    };
    if mine < level {
        out.push('(');
    }
    match p {
        CastProcess::Nil => out.push('0'),
        CastProcess::TypeError => out.push_str("typeError"),
        CastProcess::Input {
            subject,
            binders,
            body,
        } => {
            let _ = write!(out, "{subject}?(");
            write_binders(out, binders);
            out.push_str(").");
            cast(body, PREFIX, out);
        }
        CastProcess::Output {
            subject,
            args,
            body,
        } => {
            let _ = write!(out, "{subject}!<");
            write_channels(out, args);
            out.push_str(">.");
            cast(body, PREFIX, out);
        }
        CastProcess::Par(l, r) => {
            cast(l, CHOICE, out);
            out.push_str(" | ");
            cast(r, PAR, out);
        }
        CastProcess::Choice(l, r) => {
            cast(l, PREFIX, out);
            out.push_str(" + ");
            cast(r, CHOICE, out);
        }
        CastProcess::Restrict { name, ty, body } => {
            let _ = write!(out, "new ({name}:{ty}) ");
            cast(body, PREFIX, out);
        }
        CastProcess::Replicate(body) => {
            out.push('!');
            cast(body, PREFIX, out);
        }
    }
    if mine < level {
        out.push(')');
    }
}

fn write_channels(out: &mut String, args: &[CastChannel]) {
    for (i, c) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{c}");
    }
}

pub fn print_surface(p: &SurfaceProcess) -> String {
    let mut out = String::new();
    surface(p, PAR, &mut out);
    out
}

pub fn print_cast(p: &CastProcess) -> String {
    let mut out = String::new();
    cast(p, PAR, &mut out);
    out
}

/// Render a type environment as `chan` declarations, one per line.
pub fn print_env(env: &TypeEnv) -> String {
    let mut out = String::new();
    for (n, t) in env.iter() {
        let _ = writeln!(out, "chan {n} : {t};");
    }
    out
}

/// Render a whole program in the concrete grammar.
pub fn print_program(program: &Program) -> String {
    format!("{}run {}\n", print_env(&program.env), print_surface(&program.proc))
}

impl fmt::Display for SurfaceProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_surface(self))
    }
}

impl fmt::Display for CastProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_cast(self))
    }
}
