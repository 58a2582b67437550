//! Reference semantics by exhaustive path enumeration.
//!
//! Enumeration branches lazily at each `flip` (and, for surface programs, at
//! each `discrete`), so a path records only the flips it actually evaluates.
//! Boolean operators evaluate both operands.

use std::collections::BTreeMap;

use crate::ast::{flip_count, Expr, FlipId, Value};
use crate::prob::Prob;

pub const DEFAULT_FLIP_BOUND: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("program has {flips} flips, more than the enumeration bound of {bound}")]
    BoundExceeded { flips: usize, bound: usize },
    #[error("program is not a core program (contains discrete or `==`)")]
    NotCore,
    #[error("type error: {0}")]
    Type(String),
    #[error("unbound variable `{0}`")]
    Unbound(String),
}

/// One execution: the flips encountered in order, its probability and its
/// result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub assignment: Vec<(FlipId, bool)>,
    pub weight: Prob,
    pub result: Value,
}

impl Path {
    pub fn assigns(&self, id: FlipId) -> bool {
        self.assignment.iter().any(|(f, _)| *f == id)
    }
}

/// A distribution over result values. Entries are never zero.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Distribution(pub BTreeMap<Value, Prob>);

impl Distribution {
    pub fn point(v: Value) -> Self {
        Distribution(BTreeMap::from([(v, Prob::one())]))
    }

    pub fn add(&mut self, v: Value, w: Prob) {
        if w.is_zero() {
            return;
        }
        let slot = self.0.entry(v).or_insert_with(Prob::zero);
        *slot = &*slot + &w;
    }

    pub fn prob(&self, v: &Value) -> Prob {
        self.0.get(v).cloned().unwrap_or_else(Prob::zero)
    }

    pub fn total(&self) -> Prob {
        self.0.values().sum()
    }

    /// Probability of the set of values selected by `pred`.
    pub fn prob_where(&self, pred: impl Fn(&Value) -> bool) -> Prob {
        self.0.iter().filter(|(v, _)| pred(v)).map(|(_, w)| w).sum()
    }

    /// Push each value through `f`, merging values that collide.
    pub fn map_values(&self, f: impl Fn(&Value) -> Value) -> Distribution {
        let mut out = Distribution::default();
        for (v, w) in &self.0 {
            out.add(f(v), w.clone());
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Value, &Prob)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn distributions_equal(a: &Distribution, b: &Distribution) -> bool {
    a == b
}

type Cont<'k> = dyn FnMut(&mut Vec<(String, Value)>, &mut Vec<(FlipId, bool)>, &Prob, Value) -> Result<(), OracleError>
    + 'k;

struct Enumerator {
    surface: bool,
}

impl Enumerator {
    fn eval(
        &self,
        e: &Expr,
        env: &mut Vec<(String, Value)>,
        trail: &mut Vec<(FlipId, bool)>,
        weight: &Prob,
        k: &mut Cont<'_>,
    ) -> Result<(), OracleError> {
        match e {
            Expr::True => k(env, trail, weight, Value::Bool(true)),
            Expr::False => k(env, trail, weight, Value::Bool(false)),
            Expr::Var(x) => {
                let v = lookup(env, x)?.clone();
                k(env, trail, weight, v)
            }
            Expr::Flip(id, theta) => {
                for (b, w) in [(true, theta.clone()), (false, theta.complement())] {
                    if w.is_zero() {
                        continue;
                    }
                    trail.push((*id, b));
                    let r = k(env, trail, &(weight * &w), Value::Bool(b));
                    trail.pop();
                    r?;
                }
                Ok(())
            }
            Expr::Discrete(ps) => {
                if !self.surface {
                    return Err(OracleError::NotCore);
                }
                for (i, p) in ps.iter().enumerate() {
                    if p.is_zero() {
                        continue;
                    }
                    k(env, trail, &(weight * p), Value::Int(i as u64))?;
                }
                Ok(())
            }
            Expr::IntEq(x, n) => {
                if !self.surface {
                    return Err(OracleError::NotCore);
                }
                let b = match lookup(env, x)? {
                    Value::Int(v) => v == n,
                    Value::Bool(b) if *n < 2 => *b == (*n == 0),
                    other => return Err(OracleError::Type(format!("cannot compare {} with {}", other, n))),
                };
                k(env, trail, weight, Value::Bool(b))
            }
            Expr::Let(x, bound, body) => self.eval(bound, env, trail, weight, &mut |env, trail, w, v| {
                env.push((x.clone(), v));
                let r = self.eval(body, env, trail, w, k);
                env.pop();
                r
            }),
            Expr::Ite(g, t, els) => self.eval(g, env, trail, weight, &mut |env, trail, w, v| {
                if as_bool(&v)? {
                    self.eval(t, env, trail, w, k)
                } else {
                    self.eval(els, env, trail, w, k)
                }
            }),
            Expr::Not(a) => self.eval(a, env, trail, weight, &mut |env, trail, w, v| {
                let b = as_bool(&v)?;
                k(env, trail, w, Value::Bool(!b))
            }),
            Expr::And(a, b) | Expr::Or(a, b) => {
                let is_and = matches!(e, Expr::And(..));
                self.eval(a, env, trail, weight, &mut |env, trail, w, va| {
                    let x = as_bool(&va)?;
                    self.eval(b, env, trail, w, &mut |env, trail, w, vb| {
                        let y = as_bool(&vb)?;
                        k(env, trail, w, Value::Bool(if is_and { x && y } else { x || y }))
                    })
                })
            }
            Expr::Tuple(a, b) => self.eval(a, env, trail, weight, &mut |env, trail, w, va| {
                self.eval(b, env, trail, w, &mut |env, trail, w, vb| {
                    k(env, trail, w, Value::pair(va.clone(), vb))
                })
            }),
            Expr::Fst(a) | Expr::Snd(a) => {
                let first = matches!(e, Expr::Fst(_));
                self.eval(a, env, trail, weight, &mut |env, trail, w, v| match v {
                    Value::Pair(l, r) => k(env, trail, w, if first { *l } else { *r }),
                    other => Err(OracleError::Type(format!("projection from non-pair {}", other))),
                })
            }
        }
    }
}

fn lookup<'a>(env: &'a [(String, Value)], x: &str) -> Result<&'a Value, OracleError> {
    env.iter()
        .rev()
        .find(|(n, _)| n == x)
        .map(|(_, v)| v)
        .ok_or_else(|| OracleError::Unbound(x.to_string()))
}

fn as_bool(v: &Value) -> Result<bool, OracleError> {
    match v {
        Value::Bool(b) => Ok(*b),
        other => Err(OracleError::Type(format!("expected a Boolean, found {}", other))),
    }
}

fn run(
    p: &Expr,
    surface: bool,
    bound: usize,
    mut sink: impl FnMut(&[(FlipId, bool)], &Prob, Value),
) -> Result<(), OracleError> {
    let flips = flip_count(p);
    if flips > bound {
        return Err(OracleError::BoundExceeded { flips, bound });
    }
    let en = Enumerator { surface };
    en.eval(
        p,
        &mut Vec::new(),
        &mut Vec::new(),
        &Prob::one(),
        &mut |_, trail, w, v| {
            sink(trail, w, v);
            Ok(())
        },
    )
}

/// Every execution path of a core program, each exactly once.
pub fn enumerate(p: &Expr) -> Result<Vec<Path>, OracleError> {
    enumerate_bounded(p, DEFAULT_FLIP_BOUND)
}

pub fn enumerate_bounded(p: &Expr, bound: usize) -> Result<Vec<Path>, OracleError> {
    let mut paths = Vec::new();
    run(p, false, bound, |trail, w, v| {
        paths.push(Path {
            assignment: trail.to_vec(),
            weight: w.clone(),
            result: v,
        })
    })?;
    Ok(paths)
}

/// Distribution of a core program's result.
pub fn distribution(p: &Expr) -> Result<Distribution, OracleError> {
    distribution_bounded(p, DEFAULT_FLIP_BOUND)
}

pub fn distribution_bounded(p: &Expr, bound: usize) -> Result<Distribution, OracleError> {
    let mut d = Distribution::default();
    run(p, false, bound, |_, w, v| d.add(v, w.clone()))?;
    Ok(d)
}

/// Distribution of a surface program, sampling `discrete` natively and
/// producing integer values for its results.
pub fn surface_distribution(p: &Expr, bound: usize) -> Result<Distribution, OracleError> {
    let mut d = Distribution::default();
    run(p, true, bound, |_, w, v| d.add(v, w.clone()))?;
    Ok(d)
}
