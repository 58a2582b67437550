//! Lowering of `discrete` and `==` into Boolean programs.
//!
//! Every integer is a right-nested tuple of bits, most significant bit
//! first. One bit width is used for the whole program (enough for its largest
//! `discrete`), so integers from different branches of an `if` always have
//! the same shape. A width of one is a bare Boolean.
//!
//! A `discrete` becomes a chain of flips in a chosen category order, each
//! parameter renormalized by the probability mass not yet emitted.

use serde::Serialize;

use crate::ast::{self, param_frequencies, renumber_flips, Expr, Value};
use crate::prob::Prob;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CategoryOrder {
    /// Categories in the order they are written.
    Declared,
    /// Most frequent parameters (over the whole program) first.
    Frequency,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("`{var} == {value}` but `{var}` has only {categories} values")]
    OutOfRange {
        var: String,
        value: u64,
        categories: u64,
    },
    #[error("type error: {0}")]
    Type(String),
    #[error("unbound variable `{0}`")]
    Unbound(String),
}

/// Shape of a surface value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum SurfaceType {
    Bool,
    /// An integer in `0..k`.
    Int(u64),
    Pair(Box<SurfaceType>, Box<SurfaceType>),
}

impl SurfaceType {
    fn join(&self, other: &SurfaceType) -> Result<SurfaceType, EncodeError> {
        match (self, other) {
            (SurfaceType::Bool, SurfaceType::Bool) => Ok(SurfaceType::Bool),
            (SurfaceType::Int(a), SurfaceType::Int(b)) => Ok(SurfaceType::Int(*a.max(b))),
            (SurfaceType::Pair(a1, b1), SurfaceType::Pair(a2, b2)) => {
                Ok(SurfaceType::Pair(Box::new(a1.join(a2)?), Box::new(b1.join(b2)?)))
            }
            (a, b) => Err(EncodeError::Type(format!(
                "branches have different shapes: {:?} and {:?}",
                a, b
            ))),
        }
    }
}

/// Bits needed for `k` categories, at least one.
pub fn width_for(k: u64) -> usize {
    let mut w = 1;
    while (1u64 << w) < k {
        w += 1;
    }
    w
}

/// Bits of `n`, most significant first.
pub fn code_bits(n: u64, width: usize) -> Vec<bool> {
    (0..width).rev().map(|i| (n >> i) & 1 == 1).collect()
}

/// Integer from bits, most significant first.
pub fn bits_value(bits: &[bool]) -> u64 {
    bits.iter().fold(0, |acc, b| (acc << 1) | *b as u64)
}

fn code_expr(n: u64, width: usize) -> Expr {
    ast::tuple_of(
        code_bits(n, width)
            .into_iter()
            .map(|b| if b { Expr::True } else { Expr::False })
            .collect(),
    )
}

/// Flip chain for one `discrete`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EncodingPlan {
    /// Category indices in emission order.
    pub order: Vec<usize>,
    /// One `(category, renormalized parameter)` per emitted flip.
    pub steps: Vec<(usize, Prob)>,
    /// Category returned when every flip comes up false.
    pub last: usize,
}

impl EncodingPlan {
    /// Plan for a distribution over categories. Zero-probability categories
    /// are never emitted, and a step whose parameter would be 1 ends the
    /// chain without a flip.
    pub fn new(ps: &[Prob], order: Vec<usize>) -> EncodingPlan {
        let mut remaining = Prob::one();
        let mut steps = Vec::new();
        let mut last = None;
        for &c in &order {
            if ps[c].is_zero() {
                continue;
            }
            let step = &ps[c] / &remaining;
            if step.is_one() {
                last = Some(c);
                break;
            }
            remaining = &remaining - &ps[c];
            steps.push((c, step));
        }
        EncodingPlan {
            last: last.unwrap_or_else(|| order.last().copied().unwrap_or(0)),
            order,
            steps,
        }
    }

    fn to_expr(&self, width: usize) -> Expr {
        let mut acc = code_expr(self.last as u64, width);
        for (c, step) in self.steps.iter().rev() {
            acc = ast::ite(ast::flip(step.clone()), code_expr(*c as u64, width), acc);
        }
        acc
    }
}

fn discretes(p: &Expr) -> Vec<&Vec<Prob>> {
    let mut out = Vec::new();
    p.walk(&mut |e, _| {
        if let Expr::Discrete(ps) = e {
            out.push(ps);
        }
    });
    out
}

/// For every `discrete` in program order, its categories sorted by how often
/// their parameter occurs anywhere in the program (descending, ties by
/// index).
pub fn frequency_order(p: &Expr) -> Vec<Vec<usize>> {
    let counts = param_frequencies(p);
    discretes(p)
        .into_iter()
        .map(|ps| {
            let mut idx: Vec<usize> = (0..ps.len()).collect();
            idx.sort_by_key(|&i| std::cmp::Reverse(counts[&ps[i]]));
            idx
        })
        .collect()
}

/// Plans for every `discrete` in program order.
pub fn plans(p: &Expr, order: CategoryOrder) -> Vec<EncodingPlan> {
    let orders = match order {
        CategoryOrder::Declared => discretes(p).iter().map(|ps| (0..ps.len()).collect()).collect(),
        CategoryOrder::Frequency => frequency_order(p),
    };
    discretes(p)
        .into_iter()
        .zip(orders)
        .map(|(ps, o)| EncodingPlan::new(ps, o))
        .collect()
}

/// An encoded program together with what is needed to read its results back
/// as surface values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lowered {
    pub program: Expr,
    pub output: SurfaceType,
    pub width: usize,
}

impl Lowered {
    /// Surface value of a result of the encoded program.
    pub fn decode(&self, v: &Value) -> Value {
        decode(v, &self.output, self.width)
    }
}

/// Read a core value as a value of the given surface type.
pub fn decode(v: &Value, ty: &SurfaceType, width: usize) -> Value {
    match (ty, v) {
        (SurfaceType::Bool, _) => v.clone(),
        (SurfaceType::Int(_), _) => {
            let mut bits = Vec::with_capacity(width);
            let mut cur = v;
            for _ in 1..width {
                match cur {
                    Value::Pair(a, b) => {
                        bits.push(*a.as_ref() == Value::Bool(true));
                        cur = b;
                    }
                    _ => panic!("integer code of the wrong width"),
                }
            }
            bits.push(*cur == Value::Bool(true));
            Value::Int(bits_value(&bits))
        }
        (SurfaceType::Pair(ta, tb), Value::Pair(a, b)) => {
            Value::pair(decode(a, ta, width), decode(b, tb, width))
        }
        (SurfaceType::Pair(..), _) => panic!("expected a pair"),
    }
}

struct Lowerer {
    width: usize,
    plans: std::vec::IntoIter<EncodingPlan>,
}

impl Lowerer {
    fn go(
        &mut self,
        e: &Expr,
        env: &mut Vec<(String, SurfaceType)>,
    ) -> Result<(Expr, SurfaceType), EncodeError> {
        use SurfaceType as T;
        let bool_of = |this: &mut Self, a: &Expr, env: &mut Vec<(String, SurfaceType)>| {
            let (a, t) = this.go(a, env)?;
            if t != T::Bool {
                return Err(EncodeError::Type(format!("expected a Boolean, found {:?}", t)));
            }
            Ok(a)
        };
        Ok(match e {
            Expr::True | Expr::False => (e.clone(), T::Bool),
            Expr::Flip(..) => (e.clone(), T::Bool),
            Expr::Var(x) => (e.clone(), lookup(env, x)?.clone()),
            Expr::Discrete(ps) => {
                let plan = self.plans.next().expect("one plan per discrete");
                (plan.to_expr(self.width), T::Int(ps.len() as u64))
            }
            Expr::IntEq(x, n) => {
                let t = lookup(env, x)?.clone();
                let lowered = match t {
                    T::Bool if *n < 2 => {
                        if *n == 0 {
                            ast::var(x.clone())
                        } else {
                            ast::not(ast::var(x.clone()))
                        }
                    }
                    T::Bool => {
                        return Err(EncodeError::OutOfRange {
                            var: x.clone(),
                            value: *n,
                            categories: 2,
                        })
                    }
                    T::Int(k) if *n >= k => {
                        return Err(EncodeError::OutOfRange {
                            var: x.clone(),
                            value: *n,
                            categories: k,
                        })
                    }
                    T::Int(_) => bit_test(x, *n, self.width),
                    T::Pair(..) => {
                        return Err(EncodeError::Type(format!("`{}` is a tuple, not an integer", x)))
                    }
                };
                (lowered, T::Bool)
            }
            Expr::Let(x, bound, body) => {
                let (b, t) = self.go(bound, env)?;
                env.push((x.clone(), t));
                let r = self.go(body, env);
                env.pop();
                let (body, tb) = r?;
                (ast::let_(x.clone(), b, body), tb)
            }
            Expr::Ite(g, t, f) => {
                let g = bool_of(self, g, env)?;
                let (t, tt) = self.go(t, env)?;
                let (f, tf) = self.go(f, env)?;
                (ast::ite(g, t, f), tt.join(&tf)?)
            }
            Expr::Not(a) => (ast::not(bool_of(self, a, env)?), T::Bool),
            Expr::And(a, b) => {
                let a = bool_of(self, a, env)?;
                (ast::and(a, bool_of(self, b, env)?), T::Bool)
            }
            Expr::Or(a, b) => {
                let a = bool_of(self, a, env)?;
                (ast::or(a, bool_of(self, b, env)?), T::Bool)
            }
            Expr::Tuple(a, b) => {
                let (a, ta) = self.go(a, env)?;
                let (b, tb) = self.go(b, env)?;
                (ast::tuple(a, b), T::Pair(Box::new(ta), Box::new(tb)))
            }
            Expr::Fst(a) | Expr::Snd(a) => {
                let first = matches!(e, Expr::Fst(_));
                let (a, t) = self.go(a, env)?;
                match t {
                    T::Pair(l, _) if first => (ast::fst(a), *l),
                    T::Pair(_, r) => (ast::snd(a), *r),
                    other => return Err(EncodeError::Type(format!("projection from {:?}", other))),
                }
            }
        })
    }
}

/// `x == n` over the bits of `x`.
fn bit_test(x: &str, n: u64, width: usize) -> Expr {
    let lits = code_bits(n, width)
        .into_iter()
        .enumerate()
        .map(|(i, b)| {
            let mut acc = ast::var(x.to_string());
            for _ in 0..i {
                acc = ast::snd(acc);
            }
            if i + 1 < width {
                acc = ast::fst(acc);
            }
            if b {
                acc
            } else {
                ast::not(acc)
            }
        })
        .collect();
    ast::conjunction(lits)
}

fn lookup<'a>(env: &'a [(String, SurfaceType)], x: &str) -> Result<&'a SurfaceType, EncodeError> {
    env.iter()
        .rev()
        .find(|(n, _)| n == x)
        .map(|(_, t)| t)
        .ok_or_else(|| EncodeError::Unbound(x.to_string()))
}

/// Encode a surface program, keeping the result type for decoding.
pub fn lower(p: &Expr, order: CategoryOrder) -> Result<Lowered, EncodeError> {
    let k = discretes(p).iter().map(|ps| ps.len() as u64).max().unwrap_or(1);
    let width = width_for(k);
    let mut l = Lowerer {
        width,
        plans: plans(p, order).into_iter(),
    };
    let (mut program, output) = l.go(p, &mut Vec::new())?;
    renumber_flips(&mut program);
    Ok(Lowered {
        program,
        output,
        width,
    })
}

/// Encode a surface program into a core program.
pub fn encode(p: &Expr, order: CategoryOrder) -> Result<Expr, EncodeError> {
    lower(p, order).map(|l| l.program)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::flip_count;
    use crate::oracle::{distribution, surface_distribution};
    use crate::parse::parse;
    use proptest::prelude::*;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    #[test]
    fn declared_chain() {
        let e = encode(&p("discrete(0.1, 0.4, 0.5)"), CategoryOrder::Declared).unwrap();
        assert_eq!(
            e,
            p("if flip 0.1 then (false, false) else if flip 4/9 then (false, true) else (true, false)")
        );
    }

    #[test]
    fn frequency_chain() {
        let src = "let a = discrete(0.1, 0.4, 0.5) in let b = flip 0.4 in a";
        let plan = &plans(&p(src), CategoryOrder::Frequency)[0];
        assert_eq!(plan.order, vec![1, 0, 2]);
        assert_eq!(plan.steps, vec![(1, Prob::new(2, 5)), (0, Prob::new(1, 6))]);
        assert_eq!(plan.last, 2);
    }

    #[test]
    fn frequency_ties_keep_declared_order() {
        assert_eq!(frequency_order(&p("discrete(0.5, 0.5)")), vec![vec![0, 1]]);
        assert_eq!(
            frequency_order(&p("discrete(0.1, 0.2, 0.7)")),
            vec![vec![0, 1, 2]]
        );
        let chain = "let a = discrete(0.2, 0.3, 0.5) in
            let b = if a == 0 then discrete(0.1, 0.9) else if a == 1 then discrete(0.2, 0.8)
                else discrete(0.2, 0.8) in (a, b)";
        assert_eq!(
            frequency_order(&p(chain)),
            vec![vec![0, 1, 2], vec![0, 1], vec![0, 1], vec![0, 1]]
        );
    }

    #[test]
    fn single_category_is_constant() {
        let e = encode(&p("discrete(1.0)"), CategoryOrder::Declared).unwrap();
        assert_eq!(e, Expr::False);
        assert_eq!(flip_count(&e), 0);
    }

    #[test]
    fn zero_entries_are_skipped() {
        let e = encode(&p("discrete(0, 0.5, 0, 0.5)"), CategoryOrder::Declared).unwrap();
        assert_eq!(e, p("if flip 0.5 then (false, true) else (true, true)"));
        let e = encode(&p("discrete(0.25, 0.75, 0)"), CategoryOrder::Declared).unwrap();
        assert_eq!(flip_count(&e), 1);
    }

    #[test]
    fn comparisons_become_bit_tests() {
        let e = encode(
            &p("let a = discrete(0.2, 0.3, 0.5) in a == 2"),
            CategoryOrder::Declared,
        )
        .unwrap();
        let Expr::Let(_, _, body) = e else { panic!() };
        assert_eq!(
            *body,
            p("let a = (true, true) in fst a && !snd a")
                .get(&[1])
                .unwrap()
                .clone()
        );
        let e = encode(
            &p("let b = flip 0.1 in (b == 0, b == 1)"),
            CategoryOrder::Declared,
        )
        .unwrap();
        assert_eq!(e, p("let b = flip 0.1 in (b, !b)"));
    }

    #[test]
    fn out_of_range_comparison() {
        let err = encode(
            &p("let a = discrete(0.5, 0.5) in a == 2"),
            CategoryOrder::Declared,
        );
        assert!(matches!(err, Err(EncodeError::OutOfRange { categories: 2, .. })));
        let err = encode(&p("let a = flip 0.5 in a == 2"), CategoryOrder::Declared);
        assert!(matches!(err, Err(EncodeError::OutOfRange { .. })));
    }

    #[test]
    fn global_width_joins_branches() {
        let src = "let c = flip 0.5 in
            let a = if c then discrete(0.5, 0.5) else discrete(0.25, 0.25, 0.25, 0.25, 0) in
            (a == 1, a)";
        let s = p(src);
        let l = lower(&s, CategoryOrder::Declared).unwrap();
        assert_eq!(l.width, 3);
        let d = distribution(&l.program).unwrap().map_values(|v| l.decode(v));
        assert_eq!(d, surface_distribution(&s, 24).unwrap());
    }

    #[test]
    fn decoding() {
        let ty = SurfaceType::Pair(Box::new(SurfaceType::Int(3)), Box::new(SurfaceType::Bool));
        let v = Value::pair(
            Value::pair(Value::Bool(true), Value::Bool(false)),
            Value::Bool(true),
        );
        assert_eq!(decode(&v, &ty, 2), Value::pair(Value::Int(2), Value::Bool(true)));
        assert_eq!(code_bits(2, 2), vec![true, false]);
        assert_eq!(width_for(1), 1);
        assert_eq!(width_for(2), 1);
        assert_eq!(width_for(3), 2);
        assert_eq!(width_for(5), 3);
    }

    fn dist() -> impl Strategy<Value = Vec<Prob>> {
        prop::collection::vec(1i64..20, 1..7).prop_map(|ws| {
            let total: i64 = ws.iter().sum();
            ws.into_iter().map(|w| Prob::new(w, total)).collect()
        })
    }

    proptest! {
        #[test]
        fn renormalization_telescopes(ps in dist(), seed in any::<u64>()) {
            let mut order: Vec<usize> = (0..ps.len()).collect();
            let mut s = seed;
            for i in (1..order.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                order.swap(i, (s >> 33) as usize % (i + 1));
            }
            let plan = EncodingPlan::new(&ps, order.clone());
            prop_assert_eq!(plan.steps.len(), ps.len() - 1);
            let mut reach = Prob::one();
            for (c, step) in &plan.steps {
                prop_assert_eq!(&reach * step, ps[*c].clone());
                reach = &reach * &step.complement();
            }
            prop_assert_eq!(reach, ps[plan.last].clone());
        }

        #[test]
        fn single_discrete_preserved(ps in dist(), freq in any::<bool>()) {
            let src = Expr::Discrete(ps);
            let order = if freq { CategoryOrder::Frequency } else { CategoryOrder::Declared };
            let l = lower(&src, order).unwrap();
            let d = distribution(&l.program).unwrap().map_values(|v| l.decode(v));
            prop_assert_eq!(d, surface_distribution(&src, 24).unwrap());
        }
    }
}
