//! Seeded generators of random well-typed programs and small networks, plus
//! independent reference computations used by the integration suites.

#![allow(dead_code)]

use std::collections::BTreeMap;

use hoistc::ast::{self, Expr};
use hoistc::bif::{row_states, BifNetwork};
use hoistc::Prob;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MAX_FLIPS: usize = 12;
pub const MAX_DEPTH: usize = 6;

pub fn params() -> Vec<Prob> {
    vec![
        Prob::new(1, 10),
        Prob::new(1, 5),
        Prob::new(3, 10),
        Prob::new(1, 2),
    ]
}

#[derive(Clone, Copy, PartialEq)]
enum Ty {
    Bool,
    Pair,
    Int(u64),
}

/// Random core programs: Booleans, pairs of Booleans, lets, conditionals and
/// connectives, at most [`MAX_FLIPS`] flips and nesting depth [`MAX_DEPTH`].
pub struct ProgramGen {
    rng: ChaCha8Rng,
    flips: usize,
    max_flips: usize,
    fresh: usize,
    params: Vec<Prob>,
    /// Allow `discrete` and `==` (surface programs).
    surface: bool,
    discretes: usize,
}

impl ProgramGen {
    pub fn new(seed: u64) -> ProgramGen {
        ProgramGen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            flips: 0,
            max_flips: MAX_FLIPS,
            fresh: 0,
            params: params(),
            surface: false,
            discretes: 0,
        }
    }

    /// Surface programs with up to four `discrete`s of at most four
    /// categories each, and fewer flips.
    pub fn surface(seed: u64) -> ProgramGen {
        ProgramGen {
            max_flips: 6,
            surface: true,
            ..ProgramGen::new(seed)
        }
    }

    pub fn program(&mut self) -> Expr {
        self.flips = 0;
        self.fresh = 0;
        self.discretes = 0;
        let mut env = Vec::new();
        let out = if self.rng.gen_bool(0.3) {
            Ty::Pair
        } else {
            Ty::Bool
        };
        let mut p = self.expr(out, MAX_DEPTH, &mut env);
        ast::renumber_flips(&mut p);
        p
    }

    fn name(&mut self) -> String {
        self.fresh += 1;
        format!("v{}", self.fresh)
    }

    fn param(&mut self) -> Prob {
        self.params.choose(&mut self.rng).unwrap().clone()
    }

    fn flip(&mut self) -> Option<Expr> {
        if self.flips >= self.max_flips {
            return None;
        }
        self.flips += 1;
        Some(ast::flip(self.param()))
    }

    fn discrete(&mut self) -> Option<(Expr, u64)> {
        if self.discretes >= 4 {
            return None;
        }
        self.discretes += 1;
        let k = self.rng.gen_range(1..=4usize);
        let weights: Vec<i64> = (0..k).map(|_| self.rng.gen_range(1..=4)).collect();
        let total: i64 = weights.iter().sum();
        let ps = weights.into_iter().map(|w| Prob::new(w, total)).collect();
        Some((Expr::Discrete(ps), k as u64))
    }

    fn vars_of(env: &[(String, Ty)], ty: Ty) -> Vec<String> {
        env.iter()
            .filter(|(_, t)| match (t, ty) {
                (Ty::Int(_), Ty::Int(_)) => true,
                (a, b) => *a == b,
            })
            .map(|(n, _)| n.clone())
            .collect()
    }

    fn leaf(&mut self, ty: Ty, env: &mut Vec<(String, Ty)>) -> Expr {
        let vars = Self::vars_of(env, ty);
        match ty {
            Ty::Bool => {
                if !vars.is_empty() && self.rng.gen_bool(0.5) {
                    return ast::var(vars.choose(&mut self.rng).unwrap().clone());
                }
                if let Some(f) = self.flip() {
                    return f;
                }
                if !vars.is_empty() {
                    return ast::var(vars.choose(&mut self.rng).unwrap().clone());
                }
                if self.rng.gen_bool(0.5) {
                    Expr::True
                } else {
                    Expr::False
                }
            }
            Ty::Pair => {
                if !vars.is_empty() && self.rng.gen_bool(0.5) {
                    return ast::var(vars.choose(&mut self.rng).unwrap().clone());
                }
                let a = self.leaf(Ty::Bool, env);
                let b = self.leaf(Ty::Bool, env);
                ast::tuple(a, b)
            }
            Ty::Int(_) => match self.discrete() {
                Some((d, _)) => d,
                None => Expr::Discrete(vec![Prob::one()]),
            },
        }
    }

    /// A guard: mostly variables, negated variables, conjunctions and
    /// integer tests, sometimes an arbitrary Boolean expression.
    fn guard(&mut self, depth: usize, env: &mut Vec<(String, Ty)>) -> Expr {
        let bools = Self::vars_of(env, Ty::Bool);
        let ints: Vec<(String, u64)> = env
            .iter()
            .filter_map(|(n, t)| match t {
                Ty::Int(k) => Some((n.clone(), *k)),
                _ => None,
            })
            .collect();
        let roll = self.rng.gen_range(0..10);
        if roll < 3 && !ints.is_empty() {
            let (x, k) = ints.choose(&mut self.rng).unwrap().clone();
            let v = self.rng.gen_range(0..k);
            return Expr::IntEq(x, v);
        }
        if roll < 8 && !bools.is_empty() {
            let lit = |g: &mut Self| {
                let v = ast::var(bools.choose(&mut g.rng).unwrap().clone());
                if g.rng.gen_bool(0.4) {
                    ast::not(v)
                } else {
                    v
                }
            };
            let a = lit(self);
            return if self.rng.gen_bool(0.3) {
                let b = lit(self);
                ast::and(a, b)
            } else {
                a
            };
        }
        self.expr(Ty::Bool, depth.saturating_sub(1), env)
    }

    fn expr(&mut self, ty: Ty, depth: usize, env: &mut Vec<(String, Ty)>) -> Expr {
        if depth == 0 {
            return self.leaf(ty, env);
        }
        let d = depth - 1;
        match self.rng.gen_range(0..10) {
            0..=2 => {
                let bound_ty = if self.surface && self.rng.gen_bool(0.4) && self.discretes < 4 {
                    Ty::Int(0)
                } else if self.rng.gen_bool(0.15) {
                    Ty::Pair
                } else {
                    Ty::Bool
                };
                let (bound, bound_ty) = match bound_ty {
                    Ty::Int(_) => self.int_expr(d, env),
                    t => (self.expr(t, d, env), t),
                };
                let x = self.name();
                env.push((x.clone(), bound_ty));
                let body = self.expr(ty, d, env);
                env.pop();
                ast::let_(x, bound, body)
            }
            3..=5 => {
                let g = self.guard(d, env);
                let t = self.expr(ty, d, env);
                let e = self.expr(ty, d, env);
                ast::ite(g, t, e)
            }
            6 | 7 if ty == Ty::Bool => {
                let a = self.expr(Ty::Bool, d, env);
                let b = self.expr(Ty::Bool, d, env);
                if self.rng.gen_bool(0.5) {
                    ast::and(a, b)
                } else {
                    ast::or(a, b)
                }
            }
            8 if ty == Ty::Bool => {
                let pairs = Self::vars_of(env, Ty::Pair);
                if let Some(pv) = pairs.choose(&mut self.rng) {
                    let v = ast::var(pv.clone());
                    if self.rng.gen_bool(0.5) {
                        ast::fst(v)
                    } else {
                        ast::snd(v)
                    }
                } else {
                    ast::not(self.expr(Ty::Bool, d, env))
                }
            }
            6..=8 if ty == Ty::Pair => {
                let a = self.expr(Ty::Bool, d, env);
                let b = self.expr(Ty::Bool, d, env);
                ast::tuple(a, b)
            }
            _ => self.leaf(ty, env),
        }
    }

    /// An integer-valued expression: a `discrete`, or a conditional choosing
    /// between two of them.
    fn int_expr(&mut self, depth: usize, env: &mut Vec<(String, Ty)>) -> (Expr, Ty) {
        let (d, k) = self
            .discrete()
            .unwrap_or_else(|| (Expr::Discrete(vec![Prob::one()]), 1));
        if depth > 0 && self.discretes < 4 && self.rng.gen_bool(0.3) {
            let g = self.guard(depth - 1, env);
            let (d2, k2) = self.discrete().unwrap();
            return (ast::ite(g, d, d2), Ty::Int(k.max(k2)));
        }
        (d, Ty::Int(k))
    }

    /// A surface program whose result includes its integer variables.
    pub fn surface_program(&mut self) -> Expr {
        assert!(self.surface);
        self.flips = 0;
        self.fresh = 0;
        self.discretes = 0;
        let mut env = Vec::new();
        let mut lets = Vec::new();
        let n = self.rng.gen_range(1..=3);
        for _ in 0..n {
            let (e, t) = self.int_expr(2, &mut env);
            let x = self.name();
            lets.push((x.clone(), e));
            env.push((x, t));
        }
        let body = self.expr(Ty::Bool, 3, &mut env);
        let ints: Vec<Expr> = env.iter().map(|(n, _)| ast::var(n.clone())).collect();
        let mut p = ast::tuple(body, ast::tuple_of(ints));
        for (x, e) in lets.into_iter().rev() {
            p = ast::let_(x, e, p);
        }
        ast::renumber_flips(&mut p);
        p
    }
}

/// A chain network `X0 -> X1 -> ... -> X(n-1)` of binary variables. About
/// half of the conditional rows reuse a parameter from a small shared pool.
pub fn chain_network_bif(n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shared = ["0.25", "0.4", "0.65", "0.8"];
    let mut fresh = 0;
    let mut param = |rng: &mut ChaCha8Rng| -> String {
        if rng.gen_bool(0.5) {
            shared.choose(rng).unwrap().to_string()
        } else {
            fresh += 1;
            // Distinct values not in the shared pool.
            format!("0.{:04}", 1000 + fresh)
        }
    };
    let mut s = String::from("network chain {\n}\n");
    for i in 0..n {
        s += &format!("variable X{} {{\n  type discrete [ 2 ] {{ yes, no }};\n}}\n", i);
    }
    let row = |p: &str| {
        let q = Prob::parse_decimal(p).unwrap().complement();
        format!("{}, {}", p, q.to_finite_decimal().unwrap())
    };
    s += &format!("probability ( X0 ) {{\n  table {};\n}}\n", row(&param(&mut rng)));
    for i in 1..n {
        let (a, b) = (param(&mut rng), param(&mut rng));
        s += &format!(
            "probability ( X{} | X{} ) {{\n  (yes) {};\n  (no) {};\n}}\n",
            i,
            i - 1,
            row(&a),
            row(&b)
        );
    }
    s
}

/// Marginal distribution of every variable by summing the full joint table.
pub fn brute_force_marginals(n: &BifNetwork) -> Vec<Vec<Prob>> {
    let cards: Vec<usize> = n.variables.iter().map(|v| v.states.len()).collect();
    let mut out: Vec<Vec<Prob>> = cards.iter().map(|&k| vec![Prob::zero(); k]).collect();
    let total: usize = cards.iter().product();
    let mut states = vec![0usize; cards.len()];
    for mut code in 0..total {
        for (s, &k) in states.iter_mut().zip(&cards).rev() {
            *s = code % k;
            code /= k;
        }
        let mut w = Prob::one();
        for (v, cpt) in n.cpts.iter().enumerate() {
            let mut row = 0;
            for &p in &cpt.parents {
                row = row * cards[p] + states[p];
            }
            w = &w * &cpt.rows[row][states[v]];
        }
        if w.is_zero() {
            continue;
        }
        for (v, &s) in states.iter().enumerate() {
            out[v][s] = &out[v][s] + &w;
        }
    }
    out
}

/// Random small networks: up to five variables with two or three states and
/// at most two parents each, rows drawn from a small parameter pool.
pub fn random_network_bif(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=5);
    let cards: Vec<usize> = (0..n).map(|_| rng.gen_range(2..=3)).collect();
    let mut s = String::from("network random {\n}\n");
    for (i, &k) in cards.iter().enumerate() {
        let labels: Vec<String> = (0..k).map(|j| format!("s{}", j)).collect();
        s += &format!(
            "variable V{} {{ type discrete [ {} ] {{ {} }}; }}\n",
            i,
            k,
            labels.join(", ")
        );
    }
    let rows2 = [["0.2", "0.8"], ["0.5", "0.5"], ["0.7", "0.3"]];
    let rows3 = [
        ["0.2", "0.3", "0.5"],
        ["0.5", "0.25", "0.25"],
        ["0.2", "0.2", "0.6"],
    ];
    for i in 0..n {
        let mut parents: Vec<usize> = (0..i).filter(|_| rng.gen_bool(0.4)).collect();
        parents.truncate(2);
        let head = if parents.is_empty() {
            format!("V{}", i)
        } else {
            let ps: Vec<String> = parents.iter().map(|p| format!("V{}", p)).collect();
            format!("V{} | {}", i, ps.join(", "))
        };
        let n_rows: usize = parents.iter().map(|&p| cards[p]).product();
        let mut body = String::new();
        for r in 0..n_rows {
            let row = if cards[i] == 2 {
                rows2.choose(&mut rng).unwrap().join(", ")
            } else {
                rows3.choose(&mut rng).unwrap().join(", ")
            };
            if parents.is_empty() {
                body += &format!("  table {};\n", row);
            } else {
                let vars: Vec<hoistc::bif::Variable> = cards
                    .iter()
                    .map(|&k| hoistc::bif::Variable {
                        name: String::new(),
                        states: (0..k).map(|j| format!("s{}", j)).collect(),
                    })
                    .collect();
                let labels: Vec<String> = row_states(&vars, &parents, r)
                    .iter()
                    .map(|s| format!("s{}", s))
                    .collect();
                body += &format!("  ({}) {};\n", labels.join(", "), row);
            }
        }
        s += &format!("probability ( {} ) {{\n{}}}\n", head, body);
    }
    s
}

/// Tally of how often each item occurs.
pub fn histogram<T: Ord>(items: impl IntoIterator<Item = T>) -> BTreeMap<T, usize> {
    let mut m = BTreeMap::new();
    for i in items {
        *m.entry(i).or_insert(0) += 1;
    }
    m
}
