//! Compilation of core programs to BDDs and exact inference by weighted
//! model counting.
//!
//! Each flip becomes one BDD variable, numbered by its position in program
//! order. A program's result is a tree of BDDs shaped like its value.

use std::time::Instant;

use serde::Serialize;

use crate::ast::{Expr, FlipId, Value};
use crate::bdd::{Bdd, BddError, NodeRef, DEFAULT_NODE_CAP};
use crate::oracle::Distribution;
use crate::prob::Prob;

/// Largest output width for which [`infer`] builds the joint distribution.
pub const JOINT_WIDTH_CAP: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub enum Shape {
    Leaf(NodeRef),
    Pair(Box<Shape>, Box<Shape>),
}

impl Shape {
    pub fn leaves(&self) -> Vec<NodeRef> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut Vec<NodeRef>) {
        match self {
            Shape::Leaf(r) => out.push(*r),
            Shape::Pair(a, b) => {
                a.collect(out);
                b.collect(out);
            }
        }
    }

    /// Value of this shape given one Boolean per leaf, in leaf order.
    pub fn value(&self, bits: &mut impl Iterator<Item = bool>) -> Value {
        match self {
            Shape::Leaf(_) => Value::Bool(bits.next().expect("one bit per leaf")),
            Shape::Pair(a, b) => {
                let a = a.value(bits);
                Value::pair(a, b.value(bits))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompileError {
    #[error(transparent)]
    Bdd(#[from] BddError),
    #[error("program is not a core program (contains discrete or `==`)")]
    NotCore,
    #[error("type error: {0}")]
    Type(String),
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("output has {width} bits, more than the joint limit of {cap}; use marginals")]
    WidthExceeded { width: usize, cap: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct CompileOptions {
    pub node_cap: usize,
    pub deadline: Option<Instant>,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            node_cap: node_cap_from_env(),
            deadline: None,
        }
    }
}

/// Node budget, overridable with `HOISTC_NODE_CAP`.
pub fn node_cap_from_env() -> usize {
    std::env::var("HOISTC_NODE_CAP")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_NODE_CAP)
}

#[derive(Debug, Clone)]
pub struct CompiledProgram {
    pub roots: Shape,
    pub bdd: Bdd,
    /// `(θ, 1 − θ)` for each variable.
    pub weights: Vec<(Prob, Prob)>,
    /// Flip id of each variable.
    pub flips: Vec<FlipId>,
}

impl CompiledProgram {
    pub fn size(&self) -> usize {
        self.bdd.size(&self.roots.leaves())
    }

    pub fn wmc(&self, root: NodeRef) -> Prob {
        self.bdd.wmc(root, &self.weights)
    }

    /// Probability that each output bit is true, in leaf order.
    pub fn marginals(&self) -> Vec<Prob> {
        self.bdd.wmc_all(&self.roots.leaves(), &self.weights)
    }

    pub fn to_dot(&self) -> String {
        let roots: Vec<(String, NodeRef)> = self
            .roots
            .leaves()
            .into_iter()
            .enumerate()
            .map(|(i, r)| (format!("out{}", i), r))
            .collect();
        self.bdd.to_dot(&roots, |v| {
            format!("flip{} ({})", self.flips[v as usize], self.weights[v as usize].0)
        })
    }
}

struct Compiler<'a> {
    bdd: &'a mut Bdd,
    weights: Vec<(Prob, Prob)>,
    flips: Vec<FlipId>,
}

impl Compiler<'_> {
    fn leaf(&mut self, e: &Expr, env: &mut Vec<(String, Shape)>) -> Result<NodeRef, CompileError> {
        match self.go(e, env)? {
            Shape::Leaf(r) => Ok(r),
            Shape::Pair(..) => Err(CompileError::Type("expected a Boolean, found a pair".into())),
        }
    }

    fn ite(&mut self, g: NodeRef, t: Shape, f: Shape) -> Result<Shape, CompileError> {
        Ok(match (t, f) {
            (Shape::Leaf(t), Shape::Leaf(f)) => Shape::Leaf(self.bdd.ite(g, t, f)?),
            (Shape::Pair(t1, t2), Shape::Pair(f1, f2)) => {
                Shape::Pair(Box::new(self.ite(g, *t1, *f1)?), Box::new(self.ite(g, *t2, *f2)?))
            }
            _ => return Err(CompileError::Type("branches have different shapes".into())),
        })
    }

    fn go(&mut self, e: &Expr, env: &mut Vec<(String, Shape)>) -> Result<Shape, CompileError> {
        Ok(match e {
            Expr::True => Shape::Leaf(NodeRef::TRUE),
            Expr::False => Shape::Leaf(NodeRef::FALSE),
            Expr::Flip(id, theta) => {
                let v = self.flips.len() as u32;
                self.flips.push(*id);
                self.weights.push((theta.clone(), theta.complement()));
                Shape::Leaf(self.bdd.var(v)?)
            }
            Expr::Var(x) => env
                .iter()
                .rev()
                .find(|(n, _)| n == x)
                .map(|(_, s)| s.clone())
                .ok_or_else(|| CompileError::Unbound(x.clone()))?,
            Expr::Let(x, bound, body) => {
                let b = self.go(bound, env)?;
                env.push((x.clone(), b));
                let r = self.go(body, env);
                env.pop();
                r?
            }
            Expr::Ite(g, t, f) => {
                let g = self.leaf(g, env)?;
                let t = self.go(t, env)?;
                let f = self.go(f, env)?;
                self.ite(g, t, f)?
            }
            Expr::Not(a) => {
                let a = self.leaf(a, env)?;
                Shape::Leaf(self.bdd.not(a)?)
            }
            Expr::And(a, b) => {
                let a = self.leaf(a, env)?;
                let b = self.leaf(b, env)?;
                Shape::Leaf(self.bdd.and(a, b)?)
            }
            Expr::Or(a, b) => {
                let a = self.leaf(a, env)?;
                let b = self.leaf(b, env)?;
                Shape::Leaf(self.bdd.or(a, b)?)
            }
            Expr::Tuple(a, b) => {
                let a = self.go(a, env)?;
                Shape::Pair(Box::new(a), Box::new(self.go(b, env)?))
            }
            Expr::Fst(a) | Expr::Snd(a) => match self.go(a, env)? {
                Shape::Pair(l, r) => {
                    if matches!(e, Expr::Fst(_)) {
                        *l
                    } else {
                        *r
                    }
                }
                Shape::Leaf(_) => return Err(CompileError::Type("projection from a Boolean".into())),
            },
            Expr::Discrete(_) | Expr::IntEq(..) => return Err(CompileError::NotCore),
        })
    }
}

pub fn compile(p: &Expr) -> Result<CompiledProgram, CompileError> {
    compile_with(p, CompileOptions::default())
}

pub fn compile_with(p: &Expr, opts: CompileOptions) -> Result<CompiledProgram, CompileError> {
    let mut bdd = Bdd::with_cap(opts.node_cap);
    bdd.set_deadline(opts.deadline);
    let mut c = Compiler {
        bdd: &mut bdd,
        weights: Vec::new(),
        flips: Vec::new(),
    };
    let roots = c.go(p, &mut Vec::new())?;
    let (weights, flips) = (c.weights, c.flips);
    Ok(CompiledProgram {
        roots,
        bdd,
        weights,
        flips,
    })
}

/// Internal nodes reachable from the program's output BDDs.
pub fn bdd_size(c: &CompiledProgram) -> usize {
    c.size()
}

/// Joint distribution of the output. Output values whose probability is zero
/// are left out.
pub fn infer(c: &mut CompiledProgram) -> Result<Distribution, CompileError> {
    let leaves = c.roots.leaves();
    if leaves.len() > JOINT_WIDTH_CAP {
        return Err(CompileError::WidthExceeded {
            width: leaves.len(),
            cap: JOINT_WIDTH_CAP,
        });
    }
    let mut out = Distribution::default();
    let mut bits = Vec::with_capacity(leaves.len());
    joint(c, &leaves, NodeRef::TRUE, &mut bits, &mut out)?;
    Ok(out)
}

fn joint(
    c: &mut CompiledProgram,
    leaves: &[NodeRef],
    acc: NodeRef,
    bits: &mut Vec<bool>,
    out: &mut Distribution,
) -> Result<(), CompileError> {
    if acc == NodeRef::FALSE {
        return Ok(());
    }
    let i = bits.len();
    if i == leaves.len() {
        let w = c.wmc(acc);
        out.add(c.roots.value(&mut bits.iter().copied()), w);
        return Ok(());
    }
    for b in [true, false] {
        let lit = if b { leaves[i] } else { c.bdd.not(leaves[i])? };
        let next = c.bdd.and(acc, lit)?;
        bits.push(b);
        let r = joint(c, leaves, next, bits, out);
        bits.pop();
        r?;
    }
    Ok(())
}
