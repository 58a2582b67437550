//! Reduced ordered binary decision diagrams with hash-consed nodes and a
//! memoized if-then-else, plus exact weighted model counting.
//!
//! There are no complement edges and the variable order is fixed: variable
//! `i` is tested before variable `j` whenever `i < j`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::prob::Prob;

pub const DEFAULT_NODE_CAP: usize = 10_000_000;

/// Index of a node in its [`Bdd`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct NodeRef(pub u32);

impl NodeRef {
    pub const FALSE: NodeRef = NodeRef(0);
    pub const TRUE: NodeRef = NodeRef(1);

    pub fn is_terminal(self) -> bool {
        self.0 < 2
    }

    pub fn constant(b: bool) -> NodeRef {
        if b {
            NodeRef::TRUE
        } else {
            NodeRef::FALSE
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Node {
    pub var: u32,
    pub lo: NodeRef,
    pub hi: NodeRef,
}

const TERMINAL_VAR: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BddError {
    #[error("BDD node budget of {0} nodes exceeded")]
    NodeCap(usize),
    #[error("time budget exceeded")]
    Timeout,
}

/// Weight of each variable's positive and negative literal.
pub type Weights = [(Prob, Prob)];

#[derive(Debug, Clone)]
pub struct Bdd {
    nodes: Vec<Node>,
    unique: HashMap<Node, NodeRef>,
    memo: HashMap<(NodeRef, NodeRef, NodeRef), NodeRef>,
    cap: usize,
    deadline: Option<Instant>,
    steps: u64,
}

impl Default for Bdd {
    fn default() -> Self {
        Bdd::new()
    }
}

impl Bdd {
    pub fn new() -> Bdd {
        Bdd::with_cap(DEFAULT_NODE_CAP)
    }

    pub fn with_cap(cap: usize) -> Bdd {
        let term = |b| Node {
            var: TERMINAL_VAR,
            lo: NodeRef::constant(b),
            hi: NodeRef::constant(b),
        };
        Bdd {
            nodes: vec![term(false), term(true)],
            unique: HashMap::new(),
            memo: HashMap::new(),
            cap,
            deadline: None,
            steps: 0,
        }
    }

    pub fn set_deadline(&mut self, deadline: Option<Instant>) {
        self.deadline = deadline;
    }

    /// Nodes allocated so far, terminals included.
    pub fn allocated(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, r: NodeRef) -> Node {
        self.nodes[r.0 as usize]
    }

    fn top(&self, r: NodeRef) -> u32 {
        self.nodes[r.0 as usize].var
    }

    /// The canonical node testing `var`.
    pub fn mk(&mut self, var: u32, lo: NodeRef, hi: NodeRef) -> Result<NodeRef, BddError> {
        if lo == hi {
            return Ok(lo);
        }
        let n = Node { var, lo, hi };
        if let Some(&r) = self.unique.get(&n) {
            return Ok(r);
        }
        if self.nodes.len() >= self.cap {
            return Err(BddError::NodeCap(self.cap));
        }
        let r = NodeRef(self.nodes.len() as u32);
        self.nodes.push(n);
        self.unique.insert(n, r);
        Ok(r)
    }

    pub fn var(&mut self, var: u32) -> Result<NodeRef, BddError> {
        self.mk(var, NodeRef::FALSE, NodeRef::TRUE)
    }

    fn cofactors(&self, r: NodeRef, var: u32) -> (NodeRef, NodeRef) {
        let n = self.node(r);
        if n.var == var {
            (n.lo, n.hi)
        } else {
            (r, r)
        }
    }

    pub fn ite(&mut self, f: NodeRef, g: NodeRef, h: NodeRef) -> Result<NodeRef, BddError> {
        if f == NodeRef::TRUE || g == h {
            return Ok(g);
        }
        if f == NodeRef::FALSE {
            return Ok(h);
        }
        if g == NodeRef::TRUE && h == NodeRef::FALSE {
            return Ok(f);
        }
        if let Some(&r) = self.memo.get(&(f, g, h)) {
            return Ok(r);
        }
        self.steps += 1;
        if self.steps % 1024 == 1 {
            if let Some(d) = self.deadline {
                if Instant::now() >= d {
                    return Err(BddError::Timeout);
                }
            }
        }
        let v = self.top(f).min(self.top(g)).min(self.top(h));
        let (f0, f1) = self.cofactors(f, v);
        let (g0, g1) = self.cofactors(g, v);
        let (h0, h1) = self.cofactors(h, v);
        let hi = self.ite(f1, g1, h1)?;
        let lo = self.ite(f0, g0, h0)?;
        let r = self.mk(v, lo, hi)?;
        self.memo.insert((f, g, h), r);
        Ok(r)
    }

    pub fn not(&mut self, f: NodeRef) -> Result<NodeRef, BddError> {
        self.ite(f, NodeRef::FALSE, NodeRef::TRUE)
    }

    pub fn and(&mut self, f: NodeRef, g: NodeRef) -> Result<NodeRef, BddError> {
        self.ite(f, g, NodeRef::FALSE)
    }

    pub fn or(&mut self, f: NodeRef, g: NodeRef) -> Result<NodeRef, BddError> {
        self.ite(f, NodeRef::TRUE, g)
    }

    /// Internal nodes reachable from any of the roots, each counted once.
    pub fn size(&self, roots: &[NodeRef]) -> usize {
        self.reachable(roots).len()
    }

    /// Reachable internal nodes, in discovery order.
    pub fn reachable(&self, roots: &[NodeRef]) -> Vec<NodeRef> {
        let mut seen = vec![false; self.nodes.len()];
        let mut out = Vec::new();
        let mut stack: Vec<NodeRef> = roots.iter().rev().copied().collect();
        while let Some(r) = stack.pop() {
            if r.is_terminal() || seen[r.0 as usize] {
                continue;
            }
            seen[r.0 as usize] = true;
            out.push(r);
            let n = self.node(r);
            stack.push(n.lo);
            stack.push(n.hi);
        }
        out
    }

    /// Weighted model count of `root`.
    pub fn wmc(&self, root: NodeRef, weights: &Weights) -> Prob {
        self.wmc_all(&[root], weights).pop().expect("one root")
    }

    /// Weighted model counts of several roots, sharing one memo table.
    pub fn wmc_all(&self, roots: &[NodeRef], weights: &Weights) -> Vec<Prob> {
        let mut memo: HashMap<NodeRef, Prob> = HashMap::new();
        memo.insert(NodeRef::FALSE, Prob::zero());
        memo.insert(NodeRef::TRUE, Prob::one());
        // Children before parents: nodes are allocated after their children.
        let mut order = self.reachable(roots);
        order.sort();
        for r in order {
            let n = self.node(r);
            let (wt, wf) = &weights[n.var as usize];
            let v = wt * &memo[&n.hi] + wf * &memo[&n.lo];
            memo.insert(r, v);
        }
        roots.iter().map(|r| memo[r].clone()).collect()
    }

    /// Truth value under a full assignment.
    pub fn eval(&self, mut r: NodeRef, assignment: impl Fn(u32) -> bool) -> bool {
        while !r.is_terminal() {
            let n = self.node(r);
            r = if assignment(n.var) { n.hi } else { n.lo };
        }
        r == NodeRef::TRUE
    }

    /// Check the reduced and ordered invariants below the roots.
    pub fn check_invariants(&self, roots: &[NodeRef]) -> Result<(), String> {
        let mut keys = HashMap::new();
        for r in self.reachable(roots) {
            let n = self.node(r);
            if n.lo == n.hi {
                return Err(format!("node {} has equal children", r.0));
            }
            for c in [n.lo, n.hi] {
                if !c.is_terminal() && self.node(c).var <= n.var {
                    return Err(format!("node {} is out of order", r.0));
                }
            }
            if let Some(other) = keys.insert(n, r) {
                return Err(format!("nodes {} and {} are duplicates", other.0, r.0));
            }
        }
        Ok(())
    }

    /// Graphviz rendering. Dashed edges are the false branches.
    pub fn to_dot(&self, roots: &[(String, NodeRef)], label: impl Fn(u32) -> String) -> String {
        let refs: Vec<NodeRef> = roots.iter().map(|(_, r)| *r).collect();
        let mut s = String::from("digraph bdd {\n");
        s.push_str("  f [shape=box,label=\"0\"];\n  t [shape=box,label=\"1\"];\n");
        let id = |r: NodeRef| match r {
            NodeRef::FALSE => "f".to_string(),
            NodeRef::TRUE => "t".to_string(),
            r => format!("n{}", r.0),
        };
        for (name, r) in roots {
            let _ = writeln!(
                s,
                "  \"{}\" [shape=plaintext];\n  \"{}\" -> {};",
                name,
                name,
                id(*r)
            );
        }
        for r in self.reachable(&refs) {
            let n = self.node(r);
            let _ = writeln!(s, "  {} [label=\"{}\"];", id(r), label(n.var));
            let _ = writeln!(s, "  {} -> {} [style=dashed];", id(r), id(n.lo));
            let _ = writeln!(s, "  {} -> {};", id(r), id(n.hi));
        }
        s.push_str("}\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn half(n: usize) -> Vec<(Prob, Prob)> {
        vec![(Prob::new(1, 2), Prob::new(1, 2)); n]
    }

    #[test]
    fn terminals() {
        let b = Bdd::new();
        assert_eq!(b.size(&[NodeRef::TRUE, NodeRef::FALSE]), 0);
        assert_eq!(b.wmc(NodeRef::TRUE, &[]), Prob::one());
        assert_eq!(b.wmc(NodeRef::FALSE, &[]), Prob::zero());
    }

    #[test]
    fn conjunction_chain() {
        let mut b = Bdd::new();
        let x = b.var(0).unwrap();
        let y = b.var(1).unwrap();
        let xy = b.and(x, y).unwrap();
        assert_eq!(b.size(&[xy]), 2);
        assert_eq!(b.wmc(xy, &half(2)), Prob::new(1, 4));
        let again = b.and(y, x).unwrap();
        assert_eq!(xy, again);
    }

    #[test]
    fn negation_and_identities() {
        let mut b = Bdd::new();
        let x = b.var(0).unwrap();
        let nx = b.not(x).unwrap();
        assert_eq!(b.or(x, nx).unwrap(), NodeRef::TRUE);
        assert_eq!(b.and(x, nx).unwrap(), NodeRef::FALSE);
        assert_eq!(b.not(nx).unwrap(), x);
        let w = vec![(Prob::new(3, 10), Prob::new(7, 10))];
        assert_eq!(b.wmc(x, &w), Prob::new(3, 10));
        assert_eq!(b.wmc(nx, &w), Prob::new(7, 10));
    }

    #[test]
    fn node_cap() {
        let mut b = Bdd::with_cap(3);
        b.var(0).unwrap();
        assert_eq!(b.var(1), Err(BddError::NodeCap(3)));
    }

    #[test]
    fn dot_output() {
        let mut b = Bdd::new();
        let x = b.var(0).unwrap();
        let dot = b.to_dot(&[("out".into(), x)], |v| format!("v{}", v));
        assert!(dot.contains("label=\"v0\""));
        assert!(dot.starts_with("digraph"));
    }

    #[derive(Debug, Clone)]
    enum F {
        Var(u32),
        Not(Box<F>),
        And(Box<F>, Box<F>),
        Or(Box<F>, Box<F>),
        Ite(Box<F>, Box<F>, Box<F>),
    }

    fn formula() -> impl Strategy<Value = F> {
        (0u32..5).prop_map(F::Var).prop_recursive(5, 40, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| F::Not(Box::new(a))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| F::And(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| F::Or(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone(), inner).prop_map(|(a, b, c)| F::Ite(
                    Box::new(a),
                    Box::new(b),
                    Box::new(c)
                )),
            ]
        })
    }

    fn build(b: &mut Bdd, f: &F) -> NodeRef {
        match f {
            F::Var(v) => b.var(*v).unwrap(),
            F::Not(a) => {
                let a = build(b, a);
                b.not(a).unwrap()
            }
            F::And(x, y) => {
                let (x, y) = (build(b, x), build(b, y));
                b.and(x, y).unwrap()
            }
            F::Or(x, y) => {
                let (x, y) = (build(b, x), build(b, y));
                b.or(x, y).unwrap()
            }
            F::Ite(x, y, z) => {
                let (x, y, z) = (build(b, x), build(b, y), build(b, z));
                b.ite(x, y, z).unwrap()
            }
        }
    }

    fn truth(f: &F, bits: u32) -> bool {
        match f {
            F::Var(v) => bits >> v & 1 == 1,
            F::Not(a) => !truth(a, bits),
            F::And(a, b) => truth(a, bits) && truth(b, bits),
            F::Or(a, b) => truth(a, bits) || truth(b, bits),
            F::Ite(a, b, c) => {
                if truth(a, bits) {
                    truth(b, bits)
                } else {
                    truth(c, bits)
                }
            }
        }
    }

    proptest! {
        #[test]
        fn matches_truth_table(f in formula()) {
            let mut b = Bdd::new();
            let r = build(&mut b, &f);
            b.check_invariants(&[r]).unwrap();
            let mut models = 0u32;
            for bits in 0..32u32 {
                prop_assert_eq!(b.eval(r, |v| bits >> v & 1 == 1), truth(&f, bits));
                models += truth(&f, bits) as u32;
            }
            prop_assert_eq!(b.wmc(r, &half(5)), Prob::new(models as i64, 32));
            prop_assert_eq!(build(&mut b, &f), r);
        }
    }
}
