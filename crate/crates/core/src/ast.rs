//! Program syntax trees, values and structural utilities.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::Serialize;

use crate::prob::Prob;

/// Identifier of a `flip` node, unique within a program and assigned in
/// pre-order. Zero marks a flip that has not been numbered yet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct FlipId(pub u32);

impl FlipId {
    pub const UNASSIGNED: FlipId = FlipId(0);
}

impl fmt::Display for FlipId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Location of a node: the sequence of child indices from the root.
///
/// Child numbering: `Let` 0 = bound, 1 = body; `Ite` 0 = guard, 1 = then,
/// 2 = else; binary nodes 0 = left, 1 = right; unary nodes 0.
pub type Address = Vec<u8>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Let(String, Box<Expr>, Box<Expr>),
    Ite(Box<Expr>, Box<Expr>, Box<Expr>),
    Flip(FlipId, Prob),
    Discrete(Vec<Prob>),
    Tuple(Box<Expr>, Box<Expr>),
    Fst(Box<Expr>),
    Snd(Box<Expr>),
    IntEq(String, u64),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    True,
    False,
    Var(String),
}

/// Result of running a program.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Bool(bool),
    Pair(Box<Value>, Box<Value>),
    /// Only produced by the discrete-aware surface interpreter.
    Int(u64),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{}", b),
            Value::Int(n) => write!(f, "{}", n),
            Value::Pair(a, b) => write!(f, "({}, {})", a, b),
        }
    }
}

impl Value {
    pub fn pair(a: Value, b: Value) -> Value {
        Value::Pair(Box::new(a), Box::new(b))
    }

    /// Right-nested tuple of the given values; a single value is returned
    /// unchanged.
    pub fn tuple(mut values: Vec<Value>) -> Value {
        let mut acc = values.pop().expect("empty tuple");
        while let Some(v) = values.pop() {
            acc = Value::pair(v, acc);
        }
        acc
    }
}

pub fn let_(var: impl Into<String>, bound: Expr, body: Expr) -> Expr {
    Expr::Let(var.into(), Box::new(bound), Box::new(body))
}

pub fn ite(guard: Expr, then: Expr, els: Expr) -> Expr {
    Expr::Ite(Box::new(guard), Box::new(then), Box::new(els))
}

pub fn flip(theta: Prob) -> Expr {
    Expr::Flip(FlipId::UNASSIGNED, theta)
}

pub fn var(name: impl Into<String>) -> Expr {
    Expr::Var(name.into())
}

pub fn tuple(a: Expr, b: Expr) -> Expr {
    Expr::Tuple(Box::new(a), Box::new(b))
}

pub fn not(e: Expr) -> Expr {
    Expr::Not(Box::new(e))
}

pub fn and(a: Expr, b: Expr) -> Expr {
    Expr::And(Box::new(a), Box::new(b))
}

pub fn or(a: Expr, b: Expr) -> Expr {
    Expr::Or(Box::new(a), Box::new(b))
}

pub fn fst(e: Expr) -> Expr {
    Expr::Fst(Box::new(e))
}

pub fn snd(e: Expr) -> Expr {
    Expr::Snd(Box::new(e))
}

/// Right-nested tuple expression.
pub fn tuple_of(mut items: Vec<Expr>) -> Expr {
    let mut acc = items.pop().expect("empty tuple");
    while let Some(e) = items.pop() {
        acc = tuple(e, acc);
    }
    acc
}

/// Left-associated conjunction; `true` when empty.
pub fn conjunction(items: Vec<Expr>) -> Expr {
    items.into_iter().reduce(and).unwrap_or(Expr::True)
}

impl Expr {
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Let(_, a, b) | Expr::Tuple(a, b) | Expr::And(a, b) | Expr::Or(a, b) => {
                vec![a, b]
            }
            Expr::Ite(g, t, e) => vec![g, t, e],
            Expr::Fst(a) | Expr::Snd(a) | Expr::Not(a) => vec![a],
            Expr::Flip(..)
            | Expr::Discrete(_)
            | Expr::IntEq(..)
            | Expr::True
            | Expr::False
            | Expr::Var(_) => vec![],
        }
    }

    pub fn children_mut(&mut self) -> Vec<&mut Expr> {
        match self {
            Expr::Let(_, a, b) | Expr::Tuple(a, b) | Expr::And(a, b) | Expr::Or(a, b) => {
                vec![a, b]
            }
            Expr::Ite(g, t, e) => vec![g, t, e],
            Expr::Fst(a) | Expr::Snd(a) | Expr::Not(a) => vec![a],
            Expr::Flip(..)
            | Expr::Discrete(_)
            | Expr::IntEq(..)
            | Expr::True
            | Expr::False
            | Expr::Var(_) => vec![],
        }
    }

    pub fn get(&self, addr: &[u8]) -> Option<&Expr> {
        let mut node = self;
        for &i in addr {
            node = *node.children().get(i as usize)?;
        }
        Some(node)
    }

    pub fn get_mut(&mut self, addr: &[u8]) -> Option<&mut Expr> {
        let mut node = self;
        for &i in addr {
            node = node.children_mut().into_iter().nth(i as usize)?;
        }
        Some(node)
    }

    /// Pre-order visit of every node with its address.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr, &Address)) {
        fn go<'a>(e: &'a Expr, addr: &mut Address, f: &mut impl FnMut(&'a Expr, &Address)) {
            f(e, addr);
            for (i, c) in e.children().into_iter().enumerate() {
                addr.push(i as u8);
                go(c, addr, f);
                addr.pop();
            }
        }
        go(self, &mut Vec::new(), f)
    }

    /// True when the program contains no `discrete` and no `==` nodes.
    pub fn is_core(&self) -> bool {
        let mut core = true;
        self.walk(&mut |e, _| {
            if matches!(e, Expr::Discrete(_) | Expr::IntEq(..)) {
                core = false;
            }
        });
        core
    }

    /// Every variable name bound or referenced anywhere in the program.
    pub fn names(&self) -> HashSet<String> {
        let mut out = HashSet::new();
        self.walk(&mut |e, _| match e {
            Expr::Let(x, _, _) | Expr::Var(x) | Expr::IntEq(x, _) => {
                out.insert(x.clone());
            }
            _ => {}
        });
        out
    }

    /// Variables referenced but not bound by an enclosing `let`, in order of
    /// first occurrence.
    pub fn free_vars(&self) -> Vec<String> {
        fn go(e: &Expr, bound: &mut Vec<String>, out: &mut Vec<String>) {
            match e {
                Expr::Var(x) | Expr::IntEq(x, _) => {
                    if !bound.contains(x) && !out.contains(x) {
                        out.push(x.clone());
                    }
                }
                Expr::Let(x, b, body) => {
                    go(b, bound, out);
                    bound.push(x.clone());
                    go(body, bound, out);
                    bound.pop();
                }
                _ => {
                    for c in e.children() {
                        go(c, bound, out);
                    }
                }
            }
        }
        let mut out = Vec::new();
        go(self, &mut Vec::new(), &mut out);
        out
    }
}

/// Number `flip` nodes 1..n in pre-order (program order).
pub fn assign_flip_ids(p: &Expr) -> Expr {
    let mut q = p.clone();
    renumber_flips(&mut q);
    q
}

/// In-place variant of [`assign_flip_ids`]; returns the number of flips.
pub fn renumber_flips(p: &mut Expr) -> u32 {
    fn go(e: &mut Expr, next: &mut u32) {
        if let Expr::Flip(id, _) = e {
            *next += 1;
            *id = FlipId(*next);
        }
        for c in e.children_mut() {
            go(c, next);
        }
    }
    let mut next = 0;
    go(p, &mut next);
    next
}

pub fn flip_count(p: &Expr) -> usize {
    let mut n = 0;
    p.walk(&mut |e, _| {
        if matches!(e, Expr::Flip(..)) {
            n += 1;
        }
    });
    n
}

/// A `flip` node located in a program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlipNode {
    pub id: FlipId,
    pub theta: Prob,
    pub addr: Address,
    /// 0-based pre-order position among all flips.
    pub position: usize,
}

/// All flips in program order.
pub fn flip_nodes(p: &Expr) -> Vec<FlipNode> {
    let mut out = Vec::new();
    p.walk(&mut |e, addr| {
        if let Expr::Flip(id, theta) = e {
            out.push(FlipNode {
                id: *id,
                theta: theta.clone(),
                addr: addr.clone(),
                position: out.len(),
            });
        }
    });
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamCensus {
    pub total: usize,
    pub distinct: usize,
}

/// Counts flip parameters and discrete entries. Distinct values are tallied
/// separately for each `let` right-hand side (each parameter belongs to its
/// innermost enclosing right-hand side, or to the top-level scope) and the
/// per-scope tallies are summed.
pub fn param_census(p: &Expr) -> ParamCensus {
    fn go<'a>(e: &'a Expr, scope: &mut BTreeSet<&'a Prob>, done: &mut usize, total: &mut usize) {
        match e {
            Expr::Flip(_, theta) => {
                *total += 1;
                scope.insert(theta);
            }
            Expr::Discrete(ps) => {
                *total += ps.len();
                scope.extend(ps.iter());
            }
            Expr::Let(_, bound, body) => {
                let mut inner = BTreeSet::new();
                go(bound, &mut inner, done, total);
                *done += inner.len();
                go(body, scope, done, total);
            }
            _ => {
                for c in e.children() {
                    go(c, scope, done, total);
                }
            }
        }
    }
    let (mut done, mut total) = (0, 0);
    let mut top = BTreeSet::new();
    go(p, &mut top, &mut done, &mut total);
    ParamCensus {
        total,
        distinct: done + top.len(),
    }
}

/// Occurrences of each raw parameter across all flips and discrete entries.
pub fn param_frequencies(p: &Expr) -> BTreeMap<Prob, usize> {
    let mut counts = BTreeMap::new();
    p.walk(&mut |e, _| match e {
        Expr::Flip(_, theta) => *counts.entry(theta.clone()).or_insert(0) += 1,
        Expr::Discrete(ps) => {
            for q in ps {
                *counts.entry(q.clone()).or_insert(0) += 1;
            }
        }
        _ => {}
    });
    counts
}

/// Consistently rename every occurrence (binder and uses) of `from` to `to`.
/// Intended for fresh, non-shadowed names.
pub fn rename_var(p: &Expr, from: &str, to: &str) -> Expr {
    let mut q = p.clone();
    fn go(e: &mut Expr, from: &str, to: &str) {
        match e {
            Expr::Let(x, _, _) | Expr::Var(x) | Expr::IntEq(x, _) if x == from => {
                *x = to.to_string();
            }
            _ => {}
        }
        for c in e.children_mut() {
            go(c, from, to);
        }
    }
    go(&mut q, from, to);
    q
}
