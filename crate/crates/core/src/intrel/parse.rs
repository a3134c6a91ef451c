//! Brace-notation reader: `{ [x,y] -> [x,y-1] : x >= 0 and y < 4 }`.
//!
//! Pieces are separated by `;` and unioned. Tuple entries and guards are
//! affine in the piece's variables. Tuples may nest (`[[s] -> [t]]`) and may
//! carry an optional name prefix (`S0[i,j]`), which is ignored.

use std::collections::{BTreeMap, BTreeSet};

use super::{check_budget, IntRelError, IntRelation, IntSet, Shape, Tuple};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Sym(&'static str),
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, IntRelError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let v = text[start..i]
                .parse::<i64>()
                .map_err(|e| IntRelError::Parse { column: col, message: e.to_string() })?;
            out.push((Tok::Int(v), col));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'\'') {
                i += 1;
            }
            let word = &text[start..i];
            if word == "and" {
                out.push((Tok::Sym("and"), col));
            } else {
                out.push((Tok::Ident(word.to_string()), col));
            }
        } else {
            let two = if i + 1 < bytes.len() { &text[i..i + 2] } else { "" };
            let sym: &'static str = match two {
                "->" => "->",
                "<=" => "<=",
                ">=" => ">=",
                "==" => "=",
                "&&" => "and",
                _ => match c {
                    '{' => "{",
                    '}' => "}",
                    '[' => "[",
                    ']' => "]",
                    '(' => "(",
                    ')' => ")",
                    ',' => ",",
                    ';' => ";",
                    ':' => ":",
                    '+' => "+",
                    '-' => "-",
                    '*' => "*",
                    '<' => "<",
                    '>' => ">",
                    '=' => "=",
                    _ => {
                        return Err(IntRelError::Parse { column: col, message: format!("unexpected character '{c}'") })
                    }
                },
            };
            i += if matches!(two, "->" | "<=" | ">=" | "==" | "&&") { 2 } else { 1 };
            out.push((Tok::Sym(sym), col));
        }
    }
    Ok(out)
}

/// Affine expression `sum(coeff * var) + constant`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct Lin {
    coeffs: BTreeMap<String, i64>,
    constant: i64,
}

impl Lin {
    fn constant(c: i64) -> Self {
        Lin { coeffs: BTreeMap::new(), constant: c }
    }

    fn var(name: &str) -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(name.to_string(), 1);
        Lin { coeffs, constant: 0 }
    }

    fn is_constant(&self) -> bool {
        self.coeffs.values().all(|c| *c == 0)
    }

    fn scale(mut self, k: i64) -> Self {
        for c in self.coeffs.values_mut() {
            *c *= k;
        }
        self.constant *= k;
        self
    }

    fn add(mut self, other: Lin, sign: i64) -> Self {
        for (v, c) in other.coeffs {
            *self.coeffs.entry(v).or_insert(0) += sign * c;
        }
        self.constant += sign * other.constant;
        self.coeffs.retain(|_, c| *c != 0);
        self
    }

    /// The variable name if this is exactly `1 * v`.
    fn bare_var(&self) -> Option<&str> {
        if self.constant == 0 && self.coeffs.len() == 1 {
            let (v, c) = self.coeffs.iter().next().unwrap();
            if *c == 1 {
                return Some(v);
            }
        }
        None
    }

    fn eval(&self, env: &BTreeMap<String, i64>) -> Option<i64> {
        let mut acc = self.constant;
        for (v, c) in &self.coeffs {
            acc += c * env.get(v)?;
        }
        Some(acc)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TupleExpr {
    Flat(Vec<Lin>),
    Wrap(Box<TupleExpr>, Box<TupleExpr>),
}

impl TupleExpr {
    fn shape(&self) -> Shape {
        match self {
            TupleExpr::Flat(v) => Shape::Flat(v.len()),
            TupleExpr::Wrap(l, r) => Shape::wrap(l.shape(), r.shape()),
        }
    }

    fn flatten(&self) -> Vec<&Lin> {
        match self {
            TupleExpr::Flat(v) => v.iter().collect(),
            TupleExpr::Wrap(l, r) => {
                let mut a = l.flatten();
                a.extend(r.flatten());
                a
            }
        }
    }
}

/// `expr >= 0` or `expr == 0`.
#[derive(Debug, Clone, PartialEq)]
struct Constraint {
    expr: Lin,
    equality: bool,
}

impl Constraint {
    fn holds(&self, env: &BTreeMap<String, i64>) -> Option<bool> {
        let v = self.expr.eval(env)?;
        Some(if self.equality { v == 0 } else { v >= 0 })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Piece {
    input: TupleExpr,
    output: Option<TupleExpr>,
    guards: Vec<Constraint>,
}

impl Piece {
    fn vars(&self) -> BTreeSet<String> {
        let mut vars = BTreeSet::new();
        let mut add = |l: &Lin| vars.extend(l.coeffs.keys().cloned());
        self.input.flatten().into_iter().for_each(&mut add);
        if let Some(o) = &self.output {
            o.flatten().into_iter().for_each(&mut add);
        }
        for g in &self.guards {
            add(&g.expr);
        }
        vars
    }

    fn guards_hold(&self, env: &BTreeMap<String, i64>) -> bool {
        self.guards.iter().all(|g| g.holds(env).unwrap_or(false))
    }

    /// Per-variable inclusive bounds implied by single-variable guards.
    fn bounds(&self) -> Result<BTreeMap<String, (i64, i64)>, IntRelError> {
        let mut lo: BTreeMap<String, i64> = BTreeMap::new();
        let mut hi: BTreeMap<String, i64> = BTreeMap::new();
        for g in &self.guards {
            if g.expr.coeffs.len() != 1 {
                continue;
            }
            let (v, c) = g.expr.coeffs.iter().next().unwrap();
            let (c, k) = (*c, g.expr.constant);
            let lo_e = lo.entry(v.clone()).or_insert(i64::MIN);
            let hi_e = hi.entry(v.clone()).or_insert(i64::MAX);
            if g.equality {
                // c*v + k == 0 has an integer solution only when c divides k.
                if k.rem_euclid(c.abs()) == 0 {
                    let x = -k / c;
                    *lo_e = (*lo_e).max(x);
                    *hi_e = (*hi_e).min(x);
                } else {
                    *lo_e = 1;
                    *hi_e = 0;
                }
            } else if c > 0 {
                // v >= ceil(-k / c)
                *lo_e = (*lo_e).max(-div_floor(k, c));
            } else {
                // v <= floor(k / -c)
                *hi_e = (*hi_e).min(div_floor(k, -c));
            }
        }
        lo.retain(|_, x| *x != i64::MIN);
        hi.retain(|_, x| *x != i64::MAX);
        let mut out = BTreeMap::new();
        for v in self.vars() {
            match (lo.get(&v), hi.get(&v)) {
                (Some(a), Some(b)) => {
                    out.insert(v, (*a, *b));
                }
                _ => {
                    return Err(IntRelError::Parse {
                        column: 0,
                        message: format!("variable '{v}' is not bounded by the guard"),
                    })
                }
            }
        }
        Ok(out)
    }

    /// All satisfying assignments, by brute force over the inferred bounds.
    fn assignments(&self) -> Result<Vec<BTreeMap<String, i64>>, IntRelError> {
        let bounds: Vec<(String, (i64, i64))> = self.bounds()?.into_iter().collect();
        let mut total: usize = 1;
        for (_, (a, b)) in &bounds {
            if b < a {
                return Ok(Vec::new());
            }
            total = total.saturating_mul((b - a + 1) as usize);
        }
        check_budget(total)?;
        let mut out = Vec::new();
        let mut env: BTreeMap<String, i64> = bounds.iter().map(|(v, (a, _))| (v.clone(), *a)).collect();
        loop {
            if self.guards_hold(&env) {
                out.push(env.clone());
            }
            let mut d = bounds.len();
            loop {
                if d == 0 {
                    return Ok(out);
                }
                d -= 1;
                let (v, (a, b)) = &bounds[d];
                let x = env.get_mut(v).unwrap();
                if *x < *b {
                    *x += 1;
                    break;
                }
                *x = *a;
            }
        }
    }
}

fn div_floor(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

fn eval_tuple(t: &TupleExpr, env: &BTreeMap<String, i64>) -> Option<Tuple> {
    t.flatten().iter().map(|l| l.eval(env)).collect::<Option<Vec<_>>>().map(Tuple)
}

/// Bind bare variables of `t` against a concrete tuple; checks every other entry.
fn bind(t: &TupleExpr, values: &Tuple, env: &mut BTreeMap<String, i64>) -> bool {
    let entries = t.flatten();
    if entries.len() != values.arity() {
        return false;
    }
    // Bare variables first so that compound entries can be checked afterwards.
    for (e, v) in entries.iter().zip(values.values()) {
        if let Some(name) = e.bare_var() {
            match env.get(name) {
                Some(old) if old != v => return false,
                Some(_) => {}
                None => {
                    env.insert(name.to_string(), *v);
                }
            }
        }
    }
    entries.iter().zip(values.values()).all(|(e, v)| e.eval(env) == Some(*v))
}

/// A parsed, not yet enumerated, set or relation in brace notation.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineRelation {
    pieces: Vec<Piece>,
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|t| &t.0)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.1).unwrap_or_else(|| self.toks.last().map(|t| t.1 + 1).unwrap_or(1))
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, IntRelError> {
        Err(IntRelError::Parse { column: self.col(), message: message.into() })
    }

    fn eat(&mut self, sym: &'static str) -> bool {
        if self.peek() == Some(&Tok::Sym(sym)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, sym: &'static str) -> Result<(), IntRelError> {
        if self.eat(sym) {
            Ok(())
        } else {
            self.err(format!("expected '{sym}'"))
        }
    }

    fn document(&mut self) -> Result<AffineRelation, IntRelError> {
        self.expect("{")?;
        let mut pieces = Vec::new();
        if !self.eat("}") {
            loop {
                pieces.push(self.piece()?);
                if self.eat(";") {
                    continue;
                }
                self.expect("}")?;
                break;
            }
        }
        if self.pos != self.toks.len() {
            return self.err("trailing input after '}'");
        }
        Ok(AffineRelation { pieces })
    }

    fn piece(&mut self) -> Result<Piece, IntRelError> {
        let input = self.tuple()?;
        let output = if self.eat("->") { Some(self.tuple()?) } else { None };
        let mut guards = Vec::new();
        if self.eat(":") {
            loop {
                self.condition(&mut guards)?;
                if !self.eat("and") {
                    break;
                }
            }
        }
        Ok(Piece { input, output, guards })
    }

    fn tuple(&mut self) -> Result<TupleExpr, IntRelError> {
        if matches!(self.peek(), Some(Tok::Ident(_))) && self.peek2() == Some(&Tok::Sym("[")) {
            self.pos += 1;
        }
        self.expect("[")?;
        if self.peek() == Some(&Tok::Sym("[")) || (matches!(self.peek(), Some(Tok::Ident(_))) && self.peek2() == Some(&Tok::Sym("["))) {
            let l = self.tuple()?;
            self.expect("->")?;
            let r = self.tuple()?;
            self.expect("]")?;
            return Ok(TupleExpr::Wrap(Box::new(l), Box::new(r)));
        }
        let mut entries = Vec::new();
        if !self.eat("]") {
            loop {
                entries.push(self.expr()?);
                if self.eat(",") {
                    continue;
                }
                self.expect("]")?;
                break;
            }
        }
        Ok(TupleExpr::Flat(entries))
    }

    fn condition(&mut self, out: &mut Vec<Constraint>) -> Result<(), IntRelError> {
        let mut lhs = self.expr()?;
        let mut any = false;
        loop {
            let op = match self.peek() {
                Some(Tok::Sym(s)) if matches!(*s, "<" | "<=" | ">" | ">=" | "=") => *s,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.expr()?;
            // Normalise to `e >= 0` / `e == 0`.
            let c = match op {
                "<" => Constraint { expr: rhs.clone().add(lhs.clone(), -1).add(Lin::constant(1), -1), equality: false },
                "<=" => Constraint { expr: rhs.clone().add(lhs.clone(), -1), equality: false },
                ">" => Constraint { expr: lhs.clone().add(rhs.clone(), -1).add(Lin::constant(1), -1), equality: false },
                ">=" => Constraint { expr: lhs.clone().add(rhs.clone(), -1), equality: false },
                _ => Constraint { expr: lhs.clone().add(rhs.clone(), -1), equality: true },
            };
            out.push(c);
            lhs = rhs;
            any = true;
        }
        if !any {
            return self.err("expected a comparison");
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Lin, IntRelError> {
        let mut acc = self.term()?;
        loop {
            if self.eat("+") {
                acc = acc.add(self.term()?, 1);
            } else if self.peek() == Some(&Tok::Sym("-")) {
                self.pos += 1;
                acc = acc.add(self.term()?, -1);
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Lin, IntRelError> {
        let mut acc = self.factor()?;
        while self.eat("*") {
            let rhs = self.factor()?;
            acc = if acc.is_constant() {
                rhs.scale(acc.constant)
            } else if rhs.is_constant() {
                acc.scale(rhs.constant)
            } else {
                return self.err("non-affine product");
            };
        }
        // Juxtaposition: `2x`.
        if acc.is_constant() {
            if let Some(Tok::Ident(_)) = self.peek() {
                if self.peek2() != Some(&Tok::Sym("[")) {
                    let rhs = self.factor()?;
                    acc = rhs.scale(acc.constant);
                }
            }
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Lin, IntRelError> {
        match self.peek().cloned() {
            Some(Tok::Int(v)) => {
                self.pos += 1;
                Ok(Lin::constant(v))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                Ok(Lin::var(&name))
            }
            Some(Tok::Sym("-")) => {
                self.pos += 1;
                Ok(self.factor()?.scale(-1))
            }
            Some(Tok::Sym("(")) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            _ => self.err("expected an expression"),
        }
    }
}

impl AffineRelation {
    pub fn parse(text: &str) -> Result<Self, IntRelError> {
        let toks = lex(text)?;
        Parser { toks, pos: 0 }.document()
    }

    pub fn is_relation(&self) -> bool {
        self.pieces.first().map(|p| p.output.is_some()).unwrap_or(true)
    }

    fn check_uniform(&self, relation: bool) -> Result<(Shape, Shape), IntRelError> {
        let mut shapes: Option<(Shape, Shape)> = None;
        for p in &self.pieces {
            if p.output.is_some() != relation {
                return Err(IntRelError::Parse {
                    column: 0,
                    message: if relation { "expected a relation".into() } else { "expected a set".into() },
                });
            }
            let s = (p.input.shape(), p.output.as_ref().map(|o| o.shape()).unwrap_or(Shape::Flat(0)));
            match &shapes {
                None => shapes = Some(s),
                Some(prev) if prev.0.arity() != s.0.arity() || prev.1.arity() != s.1.arity() => {
                    return Err(IntRelError::Arity { expected: prev.0.arity(), found: s.0.arity() })
                }
                _ => {}
            }
        }
        Ok(shapes.unwrap_or((Shape::Flat(0), Shape::Flat(0))))
    }

    /// Enumerate as a set; every variable must be bounded by the guard.
    pub fn to_set(&self) -> Result<IntSet, IntRelError> {
        let (shape, _) = self.check_uniform(false)?;
        let mut tuples = Vec::new();
        for p in &self.pieces {
            for env in p.assignments()? {
                tuples.push(eval_tuple(&p.input, &env).expect("bounded variables are assigned"));
            }
        }
        IntSet::from_tuples(shape, tuples)
    }

    /// Enumerate as a relation; every variable must be bounded by the guard.
    pub fn to_relation(&self) -> Result<IntRelation, IntRelError> {
        let (ins, outs) = self.check_uniform(true)?;
        let mut pairs = Vec::new();
        for p in &self.pieces {
            for env in p.assignments()? {
                let a = eval_tuple(&p.input, &env).expect("assigned");
                let b = eval_tuple(p.output.as_ref().unwrap(), &env).expect("assigned");
                pairs.push((a, b));
            }
        }
        IntRelation::from_pairs(ins, outs, pairs)
    }

    /// Enumerate as a relation whose inputs range over `inputs` and whose
    /// outputs are kept only when they lie in `outputs`.
    pub fn over(&self, inputs: &IntSet, outputs: &IntSet) -> Result<(IntRelation, usize), IntRelError> {
        let (_, _) = self.check_uniform(true)?;
        let mut pairs = Vec::new();
        let mut dropped = 0usize;
        for p in &self.pieces {
            let out_t = p.output.as_ref().unwrap();
            for a in inputs.iter() {
                let mut env = BTreeMap::new();
                if !bind(&p.input, a, &mut env) {
                    continue;
                }
                if let Some(b) = eval_tuple(out_t, &env) {
                    if p.guards_hold(&env) {
                        if outputs.contains(&b) {
                            pairs.push((a.clone(), b));
                        } else {
                            dropped += 1;
                        }
                    }
                } else {
                    for b in outputs.iter() {
                        let mut env2 = env.clone();
                        if bind(out_t, b, &mut env2) && p.guards_hold(&env2) {
                            pairs.push((a.clone(), b.clone()));
                        }
                    }
                }
            }
        }
        let r = IntRelation::from_pairs(inputs.shape().clone(), outputs.shape().clone(), pairs)?;
        Ok((r, dropped))
    }
}

/// Parse and enumerate a bounded set.
pub fn parse_set(text: &str) -> Result<IntSet, IntRelError> {
    AffineRelation::parse(text)?.to_set()
}

/// Parse and enumerate a bounded relation.
pub fn parse_relation(text: &str) -> Result<IntRelation, IntRelError> {
    AffineRelation::parse(text)?.to_relation()
}

/// Parse a relation and enumerate it over finite input/output domains.
/// Returns the relation and the number of images that fell outside `outputs`.
pub fn parse_relation_over(text: &str, inputs: &IntSet, outputs: &IntSet) -> Result<(IntRelation, usize), IntRelError> {
    AffineRelation::parse(text)?.over(inputs, outputs)
}
