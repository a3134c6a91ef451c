//! Bounded integer sets and relations.
//!
//! Everything here is explicit enumeration: a set is a sorted, deduplicated
//! list of integer tuples and a relation is a sorted, deduplicated list of
//! tuple pairs. The operations mirror the usual polyhedral vocabulary
//! (union, intersection, composition, inversion, counting) but are exact only
//! because the inputs are finite.
//!
//! Composition convention, used everywhere in this crate:
//! `compose(f, g) = { a -> c : a -> b in g and b -> c in f }`, i.e. the right
//! operand is applied first.

mod parse;

use std::cmp::Ordering;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

use thiserror::Error;

pub use parse::{parse_relation, parse_relation_over, parse_set, AffineRelation};

/// Default cap on the number of tuples a single set or relation may hold.
pub const DEFAULT_BUDGET: usize = 5_000_000;

static BUDGET: AtomicUsize = AtomicUsize::new(DEFAULT_BUDGET);

/// Current enumeration budget (tuples per set/relation).
pub fn budget() -> usize {
    BUDGET.load(AtomicOrdering::Relaxed)
}

/// Override the enumeration budget for the whole process.
pub fn set_budget(limit: usize) {
    BUDGET.store(limit.max(1), AtomicOrdering::Relaxed);
}

pub(crate) fn check_budget(requested: usize) -> Result<(), IntRelError> {
    let limit = budget();
    if requested > limit {
        Err(IntRelError::Budget { limit, requested })
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IntRelError {
    #[error("arity mismatch: expected {expected}, found {found}")]
    Arity { expected: usize, found: usize },
    #[error("shape mismatch: {left} vs {right}")]
    Shape { left: Shape, right: Shape },
    #[error("set is not a wrapped relation (shape {0})")]
    NotWrapped(Shape),
    #[error("enumeration budget exceeded: {requested} tuples requested, limit {limit}")]
    Budget { limit: usize, requested: usize },
    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },
}

/// An integer coordinate vector.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Tuple(pub Vec<i64>);

impl Tuple {
    pub fn new(values: Vec<i64>) -> Self {
        Tuple(values)
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[i64] {
        &self.0
    }

    pub fn concat(&self, other: &Tuple) -> Tuple {
        let mut v = Vec::with_capacity(self.0.len() + other.0.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&other.0);
        Tuple(v)
    }

    /// Split into `(prefix of length n, rest)`.
    pub fn split(&self, n: usize) -> (Tuple, Tuple) {
        (Tuple(self.0[..n].to_vec()), Tuple(self.0[n..].to_vec()))
    }
}

impl From<Vec<i64>> for Tuple {
    fn from(v: Vec<i64>) -> Self {
        Tuple(v)
    }
}

impl<const N: usize> From<[i64; N]> for Tuple {
    fn from(v: [i64; N]) -> Self {
        Tuple(v.to_vec())
    }
}

/// Nesting structure of a tuple: `[a,b]` is `Flat(2)`, `[[s] -> [t]]` is a
/// `Wrap` of two flat parts. Only the leaf arities carry data; the tree is
/// used for rendering and for `unwrap`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Shape {
    Flat(usize),
    Wrap(Box<Shape>, Box<Shape>),
}

impl Shape {
    pub fn flat(n: usize) -> Self {
        Shape::Flat(n)
    }

    pub fn wrap(left: Shape, right: Shape) -> Self {
        Shape::Wrap(Box::new(left), Box::new(right))
    }

    pub fn arity(&self) -> usize {
        match self {
            Shape::Flat(n) => *n,
            Shape::Wrap(l, r) => l.arity() + r.arity(),
        }
    }

    fn render_values(&self, values: &[i64], out: &mut String) {
        match self {
            Shape::Flat(_) => {
                out.push('[');
                for (i, v) in values.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    out.push_str(&v.to_string());
                }
                out.push(']');
            }
            Shape::Wrap(l, r) => {
                let n = l.arity();
                out.push('[');
                l.render_values(&values[..n], out);
                out.push_str(" -> ");
                r.render_values(&values[n..], out);
                out.push(']');
            }
        }
    }

    /// Render `values` laid out according to this shape.
    pub fn render(&self, values: &[i64]) -> String {
        let mut s = String::new();
        self.render_values(values, &mut s);
        s
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Flat(n) => write!(f, "[{n}]"),
            Shape::Wrap(l, r) => write!(f, "[{l} -> {r}]"),
        }
    }
}

fn sort_dedup<T: Ord>(v: &mut Vec<T>) {
    v.sort_unstable();
    v.dedup();
}

fn merge_union<T: Ord + Clone>(a: &[T], b: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => {
                out.push(a[i].clone());
                i += 1;
            }
            Ordering::Greater => {
                out.push(b[j].clone());
                j += 1;
            }
            Ordering::Equal => {
                out.push(a[i].clone());
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

fn merge_intersect<T: Ord + Clone>(a: &[T], b: &[T]) -> Vec<T> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                out.push(a[i].clone());
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn merge_subtract<T: Ord + Clone>(a: &[T], b: &[T]) -> Vec<T> {
    let mut out = Vec::new();
    let mut j = 0;
    for x in a {
        while j < b.len() && b[j] < *x {
            j += 1;
        }
        if j < b.len() && b[j] == *x {
            continue;
        }
        out.push(x.clone());
    }
    out
}

/// A finite set of integer tuples of one arity.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IntSet {
    shape: Shape,
    elems: Vec<Tuple>,
}

impl IntSet {
    pub fn empty(shape: Shape) -> Self {
        IntSet { shape, elems: Vec::new() }
    }

    pub fn from_tuples<I>(shape: Shape, tuples: I) -> Result<Self, IntRelError>
    where
        I: IntoIterator<Item = Tuple>,
    {
        let arity = shape.arity();
        let mut elems = Vec::new();
        for t in tuples {
            if t.arity() != arity {
                return Err(IntRelError::Arity { expected: arity, found: t.arity() });
            }
            elems.push(t);
            if elems.len() > budget() {
                check_budget(elems.len())?;
            }
        }
        sort_dedup(&mut elems);
        Ok(IntSet { shape, elems })
    }

    /// Flat set over the half-open box `[0, extents[d])`.
    pub fn boxed(extents: &[i64]) -> Result<Self, IntRelError> {
        let total: i64 = extents.iter().map(|e| (*e).max(0)).product();
        check_budget(total as usize)?;
        let mut elems = Vec::with_capacity(total as usize);
        if total > 0 {
            let mut cur = vec![0i64; extents.len()];
            loop {
                elems.push(Tuple(cur.clone()));
                let mut d = extents.len();
                loop {
                    if d == 0 {
                        return Ok(IntSet { shape: Shape::Flat(extents.len()), elems });
                    }
                    d -= 1;
                    cur[d] += 1;
                    if cur[d] < extents[d] {
                        break;
                    }
                    cur[d] = 0;
                }
            }
        }
        Ok(IntSet { shape: Shape::Flat(extents.len()), elems })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn arity(&self) -> usize {
        self.shape.arity()
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    /// Exact number of elements.
    pub fn cardinality(&self) -> u64 {
        self.elems.len() as u64
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tuple> {
        self.elems.iter()
    }

    pub fn contains(&self, t: &Tuple) -> bool {
        self.elems.binary_search(t).is_ok()
    }

    /// Lexicographically largest element.
    pub fn lex_max(&self) -> Option<&Tuple> {
        self.elems.last()
    }

    pub fn lex_min(&self) -> Option<&Tuple> {
        self.elems.first()
    }

    fn conform(&self, other: &IntSet) -> Result<(), IntRelError> {
        if self.arity() != other.arity() {
            return Err(IntRelError::Arity { expected: self.arity(), found: other.arity() });
        }
        // An empty flat set conforms to anything of the same arity.
        if self.shape != other.shape && !self.is_empty() && !other.is_empty() {
            return Err(IntRelError::Shape { left: self.shape.clone(), right: other.shape.clone() });
        }
        Ok(())
    }

    fn shape_of(&self, other: &IntSet) -> Shape {
        if self.is_empty() {
            other.shape.clone()
        } else {
            self.shape.clone()
        }
    }

    pub fn union(&self, other: &IntSet) -> Result<IntSet, IntRelError> {
        self.conform(other)?;
        check_budget(self.len() + other.len())?;
        Ok(IntSet { shape: self.shape_of(other), elems: merge_union(&self.elems, &other.elems) })
    }

    pub fn intersect(&self, other: &IntSet) -> Result<IntSet, IntRelError> {
        self.conform(other)?;
        Ok(IntSet { shape: self.shape.clone(), elems: merge_intersect(&self.elems, &other.elems) })
    }

    pub fn subtract(&self, other: &IntSet) -> Result<IntSet, IntRelError> {
        self.conform(other)?;
        Ok(IntSet { shape: self.shape.clone(), elems: merge_subtract(&self.elems, &other.elems) })
    }

    pub fn filter<F: FnMut(&Tuple) -> bool>(&self, mut keep: F) -> IntSet {
        IntSet { shape: self.shape.clone(), elems: self.elems.iter().filter(|t| keep(t)).cloned().collect() }
    }

    /// Interpret a wrapped set `{[[a] -> [b]]}` as the relation `{[a] -> [b]}`.
    pub fn unwrap(&self) -> Result<IntRelation, IntRelError> {
        match &self.shape {
            Shape::Wrap(l, r) => {
                let n = l.arity();
                let pairs = self.elems.iter().map(|t| t.split(n)).collect();
                // Splitting a sorted list at a fixed position keeps pair order.
                Ok(IntRelation { in_shape: (**l).clone(), out_shape: (**r).clone(), pairs })
            }
            other => Err(IntRelError::NotWrapped(other.clone())),
        }
    }

    /// Pairs every element with every lexicographically later element.
    pub fn lex_lt(&self) -> Result<IntRelation, IntRelError> {
        let n = self.len();
        check_budget(n.saturating_mul(n.saturating_sub(1)) / 2)?;
        let mut pairs = Vec::new();
        for (i, a) in self.elems.iter().enumerate() {
            for b in &self.elems[i + 1..] {
                pairs.push((a.clone(), b.clone()));
            }
        }
        Ok(IntRelation { in_shape: self.shape.clone(), out_shape: self.shape.clone(), pairs })
    }

    /// Maps each element to its immediate lexicographic predecessor in the set.
    pub fn lex_closest_pred(&self) -> IntRelation {
        let pairs = self.elems.windows(2).map(|w| (w[1].clone(), w[0].clone())).collect::<Vec<_>>();
        let mut r = IntRelation { in_shape: self.shape.clone(), out_shape: self.shape.clone(), pairs };
        r.pairs.sort_unstable();
        r
    }

    /// `{ t -> t }` over the set.
    pub fn identity(&self) -> IntRelation {
        IntRelation {
            in_shape: self.shape.clone(),
            out_shape: self.shape.clone(),
            pairs: self.elems.iter().map(|t| (t.clone(), t.clone())).collect(),
        }
    }
}

impl fmt::Display for IntSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.elems.is_empty() {
            return write!(f, "{{ }}");
        }
        write!(f, "{{ ")?;
        for (i, t) in self.elems.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{}", self.shape.render(&t.0))?;
        }
        write!(f, " }}")
    }
}

/// A finite binary relation between integer tuples.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IntRelation {
    in_shape: Shape,
    out_shape: Shape,
    pairs: Vec<(Tuple, Tuple)>,
}

impl IntRelation {
    pub fn empty(in_shape: Shape, out_shape: Shape) -> Self {
        IntRelation { in_shape, out_shape, pairs: Vec::new() }
    }

    pub fn from_pairs<I>(in_shape: Shape, out_shape: Shape, pairs: I) -> Result<Self, IntRelError>
    where
        I: IntoIterator<Item = (Tuple, Tuple)>,
    {
        let (ia, oa) = (in_shape.arity(), out_shape.arity());
        let mut v = Vec::new();
        for (a, b) in pairs {
            if a.arity() != ia {
                return Err(IntRelError::Arity { expected: ia, found: a.arity() });
            }
            if b.arity() != oa {
                return Err(IntRelError::Arity { expected: oa, found: b.arity() });
            }
            v.push((a, b));
            if v.len() > budget() {
                check_budget(v.len())?;
            }
        }
        sort_dedup(&mut v);
        Ok(IntRelation { in_shape, out_shape, pairs: v })
    }

    pub fn in_shape(&self) -> &Shape {
        &self.in_shape
    }

    pub fn out_shape(&self) -> &Shape {
        &self.out_shape
    }

    pub fn in_arity(&self) -> usize {
        self.in_shape.arity()
    }

    pub fn out_arity(&self) -> usize {
        self.out_shape.arity()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn cardinality(&self) -> u64 {
        self.pairs.len() as u64
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Tuple, Tuple)> {
        self.pairs.iter()
    }

    pub fn contains(&self, a: &Tuple, b: &Tuple) -> bool {
        self.pairs.binary_search_by(|(x, y)| x.cmp(a).then_with(|| y.cmp(b))).is_ok()
    }

    fn conform(&self, other: &IntRelation) -> Result<(), IntRelError> {
        if self.in_arity() != other.in_arity() {
            return Err(IntRelError::Arity { expected: self.in_arity(), found: other.in_arity() });
        }
        if self.out_arity() != other.out_arity() {
            return Err(IntRelError::Arity { expected: self.out_arity(), found: other.out_arity() });
        }
        if !self.is_empty() && !other.is_empty() {
            if self.in_shape != other.in_shape {
                return Err(IntRelError::Shape { left: self.in_shape.clone(), right: other.in_shape.clone() });
            }
            if self.out_shape != other.out_shape {
                return Err(IntRelError::Shape { left: self.out_shape.clone(), right: other.out_shape.clone() });
            }
        }
        Ok(())
    }

    fn shapes_of(&self, other: &IntRelation) -> (Shape, Shape) {
        if self.is_empty() {
            (other.in_shape.clone(), other.out_shape.clone())
        } else {
            (self.in_shape.clone(), self.out_shape.clone())
        }
    }

    pub fn union(&self, other: &IntRelation) -> Result<IntRelation, IntRelError> {
        self.conform(other)?;
        check_budget(self.len() + other.len())?;
        let (i, o) = self.shapes_of(other);
        Ok(IntRelation { in_shape: i, out_shape: o, pairs: merge_union(&self.pairs, &other.pairs) })
    }

    pub fn intersect(&self, other: &IntRelation) -> Result<IntRelation, IntRelError> {
        self.conform(other)?;
        Ok(IntRelation {
            in_shape: self.in_shape.clone(),
            out_shape: self.out_shape.clone(),
            pairs: merge_intersect(&self.pairs, &other.pairs),
        })
    }

    pub fn subtract(&self, other: &IntRelation) -> Result<IntRelation, IntRelError> {
        self.conform(other)?;
        Ok(IntRelation {
            in_shape: self.in_shape.clone(),
            out_shape: self.out_shape.clone(),
            pairs: merge_subtract(&self.pairs, &other.pairs),
        })
    }

    /// `self ∘ g`: apply `g` first, then `self`.
    pub fn compose(&self, g: &IntRelation) -> Result<IntRelation, IntRelError> {
        if g.out_arity() != self.in_arity() {
            return Err(IntRelError::Arity { expected: self.in_arity(), found: g.out_arity() });
        }
        // g sorted by its output so both sides can be merge-joined on the middle tuple.
        let mut g_by_mid: Vec<&(Tuple, Tuple)> = g.pairs.iter().collect();
        g_by_mid.sort_unstable_by(|x, y| x.1.cmp(&y.1).then_with(|| x.0.cmp(&y.0)));
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        let f = &self.pairs;
        while i < g_by_mid.len() && j < f.len() {
            match g_by_mid[i].1.cmp(&f[j].0) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    let mid = &f[j].0;
                    let i_end = i + g_by_mid[i..].iter().take_while(|p| p.1 == *mid).count();
                    let j_end = j + f[j..].iter().take_while(|p| p.0 == *mid).count();
                    check_budget(out.len() + (i_end - i) * (j_end - j))?;
                    for gp in &g_by_mid[i..i_end] {
                        for fp in &f[j..j_end] {
                            out.push((gp.0.clone(), fp.1.clone()));
                        }
                    }
                    i = i_end;
                    j = j_end;
                }
            }
        }
        sort_dedup(&mut out);
        Ok(IntRelation { in_shape: g.in_shape.clone(), out_shape: self.out_shape.clone(), pairs: out })
    }

    pub fn inverse(&self) -> IntRelation {
        let mut pairs: Vec<_> = self.pairs.iter().map(|(a, b)| (b.clone(), a.clone())).collect();
        pairs.sort_unstable();
        IntRelation { in_shape: self.out_shape.clone(), out_shape: self.in_shape.clone(), pairs }
    }

    pub fn domain(&self) -> IntSet {
        let mut elems: Vec<Tuple> = self.pairs.iter().map(|p| p.0.clone()).collect();
        elems.dedup();
        IntSet { shape: self.in_shape.clone(), elems }
    }

    pub fn range(&self) -> IntSet {
        let mut elems: Vec<Tuple> = self.pairs.iter().map(|p| p.1.clone()).collect();
        sort_dedup(&mut elems);
        IntSet { shape: self.out_shape.clone(), elems }
    }

    /// Image of `s` under the relation.
    pub fn apply(&self, s: &IntSet) -> Result<IntSet, IntRelError> {
        if s.arity() != self.in_arity() {
            return Err(IntRelError::Arity { expected: self.in_arity(), found: s.arity() });
        }
        let mut elems: Vec<Tuple> = self.pairs.iter().filter(|p| s.contains(&p.0)).map(|p| p.1.clone()).collect();
        sort_dedup(&mut elems);
        Ok(IntSet { shape: self.out_shape.clone(), elems })
    }

    /// Keep only pairs whose input lies in `s`.
    pub fn restrict_domain(&self, s: &IntSet) -> Result<IntRelation, IntRelError> {
        if s.arity() != self.in_arity() {
            return Err(IntRelError::Arity { expected: self.in_arity(), found: s.arity() });
        }
        Ok(self.filter(|a, _| s.contains(a)))
    }

    /// Keep only pairs whose output lies in `s`.
    pub fn restrict_range(&self, s: &IntSet) -> Result<IntRelation, IntRelError> {
        if s.arity() != self.out_arity() {
            return Err(IntRelError::Arity { expected: self.out_arity(), found: s.arity() });
        }
        Ok(self.filter(|_, b| s.contains(b)))
    }

    pub fn filter<F: FnMut(&Tuple, &Tuple) -> bool>(&self, mut keep: F) -> IntRelation {
        IntRelation {
            in_shape: self.in_shape.clone(),
            out_shape: self.out_shape.clone(),
            pairs: self.pairs.iter().filter(|(a, b)| keep(a, b)).cloned().collect(),
        }
    }

    /// `{[[a] -> [b]]}` from `{[a] -> [b]}`.
    pub fn wrap(&self) -> IntSet {
        IntSet {
            shape: Shape::wrap(self.in_shape.clone(), self.out_shape.clone()),
            elems: self.pairs.iter().map(|(a, b)| a.concat(b)).collect(),
        }
    }
}

impl fmt::Display for IntRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pairs.is_empty() {
            return write!(f, "{{ }}");
        }
        write!(f, "{{ ")?;
        for (i, (a, b)) in self.pairs.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{} -> {}", self.in_shape.render(&a.0), self.out_shape.render(&b.0))?;
        }
        write!(f, " }}")
    }
}
