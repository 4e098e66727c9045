//! The `shs v1` text format: parser with line/column diagnostics and a
//! canonical printer. `parse_model(&print_model(&m)) == m` for every model
//! produced by the parser.

use crate::linsets::{fmt_atom, LinAtom, LinSet, Polyhedron, Rel};
use crate::rational::{fmt_rat, parse_rat, Rat};
use crate::shs::{Assign, Block, DelaySpec, Edge, InitPart, InitShape, Location, ResetSpec, Shs, StrongKind, Target};
use num_traits::{One, Zero};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, column {col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(String),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

const SYMBOLS: [&str; 19] = [
    ":=", "->", "<=", ">=", "||", "{", "}", "(", ")", "[", "]", ",", ";", ":", "<", ">", "=", "+", "-",
];

fn lex(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let bump = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            bump(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c == '#' || (c == '/' && chars.get(i + 1) == Some(&'/')) {
            while i < chars.len() && chars[i] != '\n' {
                let ch = chars[i];
                bump(&mut i, &mut line, &mut col, ch);
            }
            continue;
        }
        let (l0, c0) = (line, col);
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                let ch = chars[i];
                s.push(ch);
                bump(&mut i, &mut line, &mut col, ch);
            }
            out.push(Spanned { tok: Tok::Ident(s), line: l0, col: c0 });
            continue;
        }
        if c.is_ascii_digit() {
            let mut s = String::new();
            let digits = |s: &mut String, i: &mut usize, line: &mut usize, col: &mut usize| {
                while *i < chars.len() && chars[*i].is_ascii_digit() {
                    let ch = chars[*i];
                    s.push(ch);
                    bump(i, line, col, ch);
                }
            };
            digits(&mut s, &mut i, &mut line, &mut col);
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                s.push('.');
                bump(&mut i, &mut line, &mut col, '.');
                digits(&mut s, &mut i, &mut line, &mut col);
            } else if i + 1 < chars.len() && chars[i] == '/' && chars[i + 1].is_ascii_digit() {
                s.push('/');
                bump(&mut i, &mut line, &mut col, '/');
                digits(&mut s, &mut i, &mut line, &mut col);
            }
            out.push(Spanned { tok: Tok::Num(s), line: l0, col: c0 });
            continue;
        }
        if c == '*' {
            bump(&mut i, &mut line, &mut col, c);
            out.push(Spanned { tok: Tok::Sym("*"), line: l0, col: c0 });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) else {
            return Err(ParseError {
                line,
                col,
                message: format!("unexpected character `{c}`"),
            });
        };
        for ch in sym.chars() {
            bump(&mut i, &mut line, &mut col, ch);
        }
        out.push(Spanned { tok: Tok::Sym(sym), line: l0, col: c0 });
    }
    out.push(Spanned { tok: Tok::Eof, line, col });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    vars: Vec<String>,
    locations: Vec<String>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn err<T>(&self, message: impl Into<String>) -> PResult<T> {
        let t = &self.toks[self.pos];
        Err(ParseError {
            line: t.line,
            col: t.col,
            message: message.into(),
        })
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Num(s) => format!("`{s}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(format!("expected `{s}`, found {}", self.describe()))
        }
    }

    fn expect_kw(&mut self, s: &str) -> PResult<()> {
        if self.is_kw(s) {
            self.next();
            Ok(())
        } else {
            self.err(format!("expected `{s}`, found {}", self.describe()))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.next();
                Ok(s)
            }
            _ => self.err(format!("expected identifier, found {}", self.describe())),
        }
    }

    fn unsigned_rat(&mut self) -> PResult<Rat> {
        match self.peek().clone() {
            Tok::Num(s) => match parse_rat(&s) {
                Ok(r) => {
                    self.next();
                    Ok(r)
                }
                Err(e) => self.err(e.to_string()),
            },
            _ => self.err(format!("expected a number, found {}", self.describe())),
        }
    }

    fn rat(&mut self) -> PResult<Rat> {
        if self.eat_sym("-") {
            Ok(-self.unsigned_rat()?)
        } else {
            self.eat_sym("+");
            self.unsigned_rat()
        }
    }

    fn var_index(&mut self) -> PResult<usize> {
        let name = self.ident()?;
        match self.vars.iter().position(|v| *v == name) {
            Some(i) => Ok(i),
            None => {
                self.pos -= 1;
                self.err(format!("unknown variable `{name}`"))
            }
        }
    }

    fn location_ref(&mut self) -> PResult<usize> {
        let name = self.ident()?;
        match self.locations.iter().position(|v| *v == name) {
            Some(i) => Ok(i),
            None => {
                self.pos -= 1;
                self.err(format!("unknown location `{name}`"))
            }
        }
    }

    /// Linear expression as (coefficients, constant).
    fn linexpr(&mut self) -> PResult<(Vec<Rat>, Rat)> {
        let n = self.vars.len();
        let mut coeffs = vec![Rat::zero(); n];
        let mut constant = Rat::zero();
        let mut first = true;
        loop {
            let mut sign = Rat::one();
            if self.eat_sym("-") {
                sign = -sign;
            } else if !self.eat_sym("+") && !first {
                break;
            }
            first = false;
            match self.peek().clone() {
                Tok::Num(_) => {
                    let k = self.unsigned_rat()? * &sign;
                    if self.eat_sym("*") || matches!(self.peek(), Tok::Ident(s) if self.vars.contains(s)) {
                        let v = self.var_index()?;
                        coeffs[v] += k;
                    } else {
                        constant += k;
                    }
                }
                Tok::Ident(_) => {
                    let v = self.var_index()?;
                    coeffs[v] += sign;
                }
                _ => return self.err(format!("expected a term, found {}", self.describe())),
            }
        }
        Ok((coeffs, constant))
    }

    fn relation(&mut self) -> Option<(&'static str, Rel, bool)> {
        let r = match self.peek() {
            Tok::Sym("<") => ("<", Rel::Lt, false),
            Tok::Sym("<=") => ("<=", Rel::Le, false),
            Tok::Sym("=") => ("=", Rel::Eq, false),
            Tok::Sym(">=") => (">=", Rel::Le, true),
            Tok::Sym(">") => (">", Rel::Lt, true),
            _ => return None,
        };
        self.next();
        Some(r)
    }

    /// One comparison chain `e1 ⋈ e2 [⋈ e3 …]`, or `true`/`false`.
    /// Returns `None` for `false`.
    fn comparison(&mut self, atoms: &mut Vec<LinAtom>) -> PResult<bool> {
        if self.is_kw("true") {
            self.next();
            return Ok(true);
        }
        if self.is_kw("false") {
            self.next();
            return Ok(false);
        }
        let mut left = self.linexpr()?;
        let mut count = 0;
        while let Some((_, rel, flip)) = self.relation() {
            let right = self.linexpr()?;
            let (a, b) = if flip { (&right, &left) } else { (&left, &right) };
            let coeffs = a.0.iter().zip(&b.0).map(|(x, y)| x - y).collect();
            atoms.push(LinAtom::new(coeffs, &a.1 - &b.1, rel));
            left = right;
            count += 1;
        }
        if count == 0 {
            return self.err(format!("expected a comparison operator, found {}", self.describe()));
        }
        Ok(true)
    }

    fn constraints(&mut self) -> PResult<LinSet> {
        let n = self.vars.len();
        let mut disjuncts = Vec::new();
        loop {
            let mut atoms = Vec::new();
            let mut alive = true;
            loop {
                alive &= self.comparison(&mut atoms)?;
                if !self.eat_sym(",") {
                    break;
                }
            }
            if alive {
                disjuncts.push(Polyhedron::new(n, atoms));
            }
            if !self.eat_sym("||") {
                break;
            }
        }
        Ok(LinSet::from_polyhedra(n, disjuncts))
    }

    fn braced_constraints(&mut self) -> PResult<LinSet> {
        self.expect_sym("{")?;
        let s = self.constraints()?;
        self.expect_sym("}")?;
        Ok(s)
    }

    fn bbox(&mut self) -> PResult<Vec<(Rat, Rat)>> {
        let mut out = Vec::new();
        if self.is_kw("box") {
            self.next();
            while self.eat_sym("[") {
                let lo = self.rat()?;
                self.expect_sym(",")?;
                let hi = self.rat()?;
                self.expect_sym("]")?;
                out.push((lo, hi));
            }
            if out.is_empty() {
                return self.err("expected `[lo, hi]` after `box`");
            }
        }
        Ok(out)
    }

    fn location(&mut self) -> PResult<Location> {
        let name = self.ident()?;
        let n = self.vars.len();
        let mut loc = Location {
            name,
            rates: vec![Rat::one(); n],
            invariant: LinSet::full(n),
            delay: DelaySpec::Auto,
        };
        self.expect_sym("{")?;
        while !self.eat_sym("}") {
            if self.eat_sym(";") {
                continue;
            }
            if self.is_kw("rate") {
                self.next();
                loop {
                    let v = self.var_index()?;
                    self.expect_sym("=")?;
                    loc.rates[v] = self.rat()?;
                    if !self.eat_sym(",") {
                        break;
                    }
                }
            } else if self.is_kw("inv") {
                self.next();
                loc.invariant = self.braced_constraints()?;
            } else if self.is_kw("delay") {
                self.next();
                loc.delay = match self.ident()?.as_str() {
                    "auto" => DelaySpec::Auto,
                    "uniform" => DelaySpec::Uniform,
                    "exp" => DelaySpec::Exp(self.rat()?),
                    other => {
                        self.pos -= 1;
                        return self.err(format!("unknown delay family `{other}`"));
                    }
                };
            } else {
                return self.err(format!("expected `rate`, `inv`, `delay` or `}}`, found {}", self.describe()));
            }
        }
        Ok(loc)
    }

    fn reset(&mut self) -> PResult<ResetSpec> {
        let n = self.vars.len();
        if self.is_kw("assign") {
            self.next();
            let mut a = vec![Assign::Keep; n];
            self.expect_sym("{")?;
            while !self.eat_sym("}") {
                if self.eat_sym(",") || self.eat_sym(";") {
                    continue;
                }
                if self.is_kw("keep") && matches!(self.peek_at(1), Tok::Ident(_)) {
                    self.next();
                    let v = self.var_index()?;
                    a[v] = Assign::Keep;
                    continue;
                }
                let v = self.var_index()?;
                self.expect_sym(":=")?;
                let (coeffs, constant) = self.linexpr()?;
                let mut others = coeffs.iter().enumerate().filter(|(_, c)| !c.is_zero());
                a[v] = match (others.next(), others.next()) {
                    (None, _) => Assign::Set(constant),
                    (Some((j, c)), None) if j == v && c.is_one() => {
                        if constant.is_zero() {
                            Assign::Keep
                        } else {
                            Assign::Shift(constant)
                        }
                    }
                    _ => return self.err("resets must have the form `x := c` or `x := x + c`"),
                };
            }
            return Ok(ResetSpec::Assign(a));
        }
        if self.is_kw("strong") {
            self.next();
            let kind = match self.ident()?.as_str() {
                "uniform" => StrongKind::UniformContinuous,
                "discrete" => StrongKind::UniformDiscrete,
                other => {
                    self.pos -= 1;
                    return self.err(format!("unknown strong reset kind `{other}`"));
                }
            };
            let support = self.braced_constraints()?;
            let bbox = self.bbox()?;
            return Ok(ResetSpec::Strong { support, kind, bbox });
        }
        self.err(format!("expected `assign` or `strong`, found {}", self.describe()))
    }

    fn edge(&mut self) -> PResult<Edge> {
        let name = self.ident()?;
        self.expect_sym(":")?;
        let src = self.location_ref()?;
        self.expect_sym("->")?;
        let dst = self.location_ref()?;
        let n = self.vars.len();
        let mut edge = Edge {
            name,
            src,
            dst,
            guard: LinSet::full(n),
            reset: ResetSpec::identity(n),
        };
        self.expect_sym("{")?;
        while !self.eat_sym("}") {
            if self.eat_sym(";") {
                continue;
            }
            if self.is_kw("guard") {
                self.next();
                edge.guard = self.braced_constraints()?;
            } else if self.is_kw("reset") {
                self.next();
                edge.reset = self.reset()?;
            } else {
                return self.err(format!("expected `guard`, `reset` or `}}`, found {}", self.describe()));
            }
        }
        Ok(edge)
    }

    fn weight(&mut self) -> PResult<Rat> {
        if self.is_kw("w") {
            self.next();
            self.rat()
        } else {
            Ok(Rat::one())
        }
    }

    fn init(&mut self, out: &mut Vec<InitPart>) -> PResult<()> {
        let location = self.location_ref()?;
        self.expect_sym("{")?;
        while !self.eat_sym("}") {
            if self.eat_sym(";") {
                continue;
            }
            if self.is_kw("point") {
                self.next();
                self.expect_sym("(")?;
                let mut p = Vec::new();
                if !self.is_sym(")") {
                    loop {
                        p.push(self.rat()?);
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                }
                self.expect_sym(")")?;
                let weight = self.weight()?;
                out.push(InitPart {
                    location,
                    weight,
                    shape: InitShape::Point(p),
                });
            } else if self.is_kw("uniform") {
                self.next();
                let support = self.braced_constraints()?;
                let bbox = self.bbox()?;
                let weight = self.weight()?;
                out.push(InitPart {
                    location,
                    weight,
                    shape: InitShape::Uniform { support, bbox },
                });
            } else {
                return self.err(format!("expected `point`, `uniform` or `}}`, found {}", self.describe()));
            }
        }
        Ok(())
    }

    fn target(&mut self) -> PResult<Target> {
        let name = self.ident()?;
        let mut blocks = Vec::new();
        self.expect_sym("{")?;
        while !self.eat_sym("}") {
            if self.eat_sym(";") || self.eat_sym(",") {
                continue;
            }
            self.expect_kw("loc")?;
            let location = self.location_ref()?;
            let region = if self.is_sym("{") {
                self.braced_constraints()?
            } else {
                LinSet::full(self.vars.len())
            };
            blocks.push(Block { location, region });
        }
        Ok(Target { name, blocks })
    }
}

/// Collects location names in a first pass so edges may refer forward.
fn declared_locations(toks: &[Spanned]) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    for w in toks.windows(2) {
        match &w[0].tok {
            Tok::Sym("{") => depth += 1,
            Tok::Sym("}") => depth = depth.saturating_sub(1),
            Tok::Ident(k) if k == "loc" && depth == 0 => {
                if let Tok::Ident(name) = &w[1].tok {
                    out.push(name.clone());
                }
            }
            _ => {}
        }
    }
    out
}

pub fn parse_model(src: &str) -> Result<Shs, ParseError> {
    let toks = lex(src)?;
    let locations = declared_locations(&toks);
    let mut p = Parser {
        toks,
        pos: 0,
        vars: Vec::new(),
        locations,
    };
    p.expect_kw("shs")?;
    match p.peek().clone() {
        Tok::Ident(v) if v == "v1" => {
            p.next();
        }
        _ => return p.err(format!("expected version `v1`, found {}", p.describe())),
    }
    p.expect_kw("vars")?;
    loop {
        let v = p.ident()?;
        p.vars.push(v);
        if !p.eat_sym(",") {
            break;
        }
    }
    let mut m = Shs {
        vars: p.vars.clone(),
        locations: Vec::new(),
        edges: Vec::new(),
        init: Vec::new(),
        targets: Vec::new(),
    };
    loop {
        if p.eat_sym(";") {
            continue;
        }
        let kw = match p.peek().clone() {
            Tok::Eof => break,
            Tok::Ident(k) => k,
            _ => return p.err(format!("expected `loc`, `edge`, `init` or `target`, found {}", p.describe())),
        };
        p.next();
        match kw.as_str() {
            "loc" => m.locations.push(p.location()?),
            "edge" => m.edges.push(p.edge()?),
            "init" => p.init(&mut m.init)?,
            "target" => m.targets.push(p.target()?),
            _ => {
                p.pos -= 1;
                return p.err(format!("expected `loc`, `edge`, `init` or `target`, found `{kw}`"));
            }
        }
    }
    Ok(m)
}

/// A parsed model together with its source text.
#[derive(Debug, Clone)]
pub struct ModelDoc {
    pub source: String,
    pub model: Shs,
}

impl ModelDoc {
    pub fn parse(source: &str) -> Result<Self, ParseError> {
        Ok(Self {
            source: source.to_string(),
            model: parse_model(source)?,
        })
    }
}

fn fmt_constraints(s: &LinSet, names: &[String]) -> String {
    if s.disjuncts.is_empty() {
        return "false".into();
    }
    s.disjuncts
        .iter()
        .map(|p| {
            if p.atoms.is_empty() {
                "true".to_string()
            } else {
                p.atoms.iter().map(|a| fmt_atom(a, names)).collect::<Vec<_>>().join(", ")
            }
        })
        .collect::<Vec<_>>()
        .join(" || ")
}

fn fmt_box(bbox: &[(Rat, Rat)]) -> String {
    if bbox.is_empty() {
        return String::new();
    }
    let sides: Vec<String> = bbox
        .iter()
        .map(|(a, b)| format!("[{}, {}]", fmt_rat(a), fmt_rat(b)))
        .collect();
    format!(" box {}", sides.join(" "))
}

pub fn print_model(m: &Shs) -> String {
    let names = &m.vars;
    let mut out = String::from("shs v1\n");
    let _ = writeln!(out, "vars {}", names.join(", "));
    if !m.locations.is_empty() {
        out.push('\n');
    }
    for l in &m.locations {
        let rates: Vec<String> = names
            .iter()
            .zip(&l.rates)
            .map(|(v, r)| format!("{v} = {}", fmt_rat(r)))
            .collect();
        let _ = writeln!(
            out,
            "loc {} {{ rate {} ; inv {{ {} }} ; delay {} }}",
            l.name,
            rates.join(", "),
            fmt_constraints(&l.invariant, names),
            l.delay.describe()
        );
    }
    if !m.edges.is_empty() {
        out.push('\n');
    }
    for e in &m.edges {
        let reset = match &e.reset {
            ResetSpec::Assign(a) => {
                let parts: Vec<String> = a
                    .iter()
                    .zip(names)
                    .filter_map(|(a, v)| match a {
                        Assign::Keep => None,
                        Assign::Set(c) => Some(format!("{v} := {}", fmt_rat(c))),
                        Assign::Shift(c) if c < &Rat::zero() => Some(format!("{v} := {v} - {}", fmt_rat(&-c))),
                        Assign::Shift(c) => Some(format!("{v} := {v} + {}", fmt_rat(c))),
                    })
                    .collect();
                if parts.is_empty() {
                    "assign { }".to_string()
                } else {
                    format!("assign {{ {} }}", parts.join(", "))
                }
            }
            ResetSpec::Strong { support, kind, bbox } => {
                let k = match kind {
                    StrongKind::UniformContinuous => "uniform",
                    StrongKind::UniformDiscrete => "discrete",
                };
                format!("strong {k} {{ {} }}{}", fmt_constraints(support, names), fmt_box(bbox))
            }
        };
        let _ = writeln!(
            out,
            "edge {} : {} -> {} {{ guard {{ {} }} ; reset {} }}",
            e.name,
            loc_name(m, e.src),
            loc_name(m, e.dst),
            fmt_constraints(&e.guard, names),
            reset
        );
    }
    if !m.init.is_empty() {
        out.push('\n');
    }
    for p in &m.init {
        let shape = match &p.shape {
            InitShape::Point(v) => {
                let coords: Vec<String> = v.iter().map(fmt_rat).collect();
                format!("point ({})", coords.join(", "))
            }
            InitShape::Uniform { support, bbox } => {
                format!("uniform {{ {} }}{}", fmt_constraints(support, names), fmt_box(bbox))
            }
        };
        let _ = writeln!(out, "init {} {{ {} w {} }}", loc_name(m, p.location), shape, fmt_rat(&p.weight));
    }
    if !m.targets.is_empty() {
        out.push('\n');
    }
    for t in &m.targets {
        let blocks: Vec<String> = t
            .blocks
            .iter()
            .map(|b| format!("loc {} {{ {} }}", loc_name(m, b.location), fmt_constraints(&b.region, names)))
            .collect();
        let _ = writeln!(out, "target {} {{ {} }}", t.name, blocks.join(" "));
    }
    out
}

fn loc_name(m: &Shs, i: usize) -> String {
    m.locations
        .get(i)
        .map(|l| l.name.clone())
        .unwrap_or_else(|| format!("#{i}"))
}
