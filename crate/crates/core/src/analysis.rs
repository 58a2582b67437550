//! Branch-sensitive data-flow analysis over flips.
//!
//! Two kinds of facts are tracked while walking the program in evaluation
//! order:
//!
//! * aliasing facts, mapping a let-bound variable to the flip literal it must
//!   equal (`let x = flip θ`, `let x = y`, `let x = !y`);
//! * constraint facts, a partial assignment to flips implied by the guards of
//!   the enclosing `if`s.
//!
//! A guard contributes facts only when it is a conjunction of literals. The
//! then-branch learns every literal; the else-branch learns the negation only
//! when the guard is a single literal. At the end of an `if` the two branch
//! states are intersected.
//!
//! Two flips whose constraint facts disagree on some flip can never be
//! evaluated on the same execution, and neither can two flips sitting in the
//! opposite branches of one `if`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::ast::{flip_nodes, Address, Expr, FlipId};
use crate::prob::Prob;

/// A flip together with the polarity a value must have to equal it.
pub type Literal = (FlipId, bool);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Local,
    Global,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalysisError {
    #[error("no flip with id {0}")]
    UnknownFlip(FlipId),
}

/// Partial assignment to flips.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ConstraintFact(pub BTreeMap<FlipId, bool>);

impl ConstraintFact {
    pub fn get(&self, id: FlipId) -> Option<bool> {
        self.0.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when some flip is assigned opposite values.
    pub fn disagrees_with(&self, other: &ConstraintFact) -> bool {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .0
            .iter()
            .any(|(k, v)| large.0.get(k).is_some_and(|w| w != v))
    }

    pub fn is_subset_of(&self, other: &ConstraintFact) -> bool {
        self.0.iter().all(|(k, v)| other.0.get(k) == Some(v))
    }

    fn intersect(&self, other: &ConstraintFact) -> ConstraintFact {
        ConstraintFact(
            self.0
                .iter()
                .filter(|(k, v)| other.0.get(k) == Some(v))
                .map(|(k, v)| (*k, *v))
                .collect(),
        )
    }

    /// Adds literals, keeping an existing assignment on conflict. A conflict
    /// means the program point is unreachable, where any fact set is valid.
    fn extend(&mut self, lits: &[Literal]) {
        for (id, b) in lits {
            self.0.entry(*id).or_insert(*b);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FactState {
    pub aliases: BTreeMap<String, Literal>,
    pub constraints: ConstraintFact,
}

impl FactState {
    fn join(&self, other: &FactState) -> FactState {
        FactState {
            aliases: self
                .aliases
                .iter()
                .filter(|(k, v)| other.aliases.get(*k) == Some(v))
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
            constraints: self.constraints.intersect(&other.constraints),
        }
    }
}

/// A flip with the constraint facts that hold where it is evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlipSite {
    pub id: FlipId,
    pub theta: Prob,
    pub facts: ConstraintFact,
    pub path: Address,
    /// 0-based program-order position.
    pub position: usize,
}

/// Branch exit states and the merged state of one `if`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinRecord {
    pub addr: Address,
    pub then_exit: ConstraintFact,
    pub else_exit: ConstraintFact,
    pub merged: ConstraintFact,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AnalysisStats {
    /// Literal-shaped conjuncts summed over all guards.
    pub guard_literals: usize,
    /// Flips constrained by guard-derived facts, summed over all `if`s.
    pub derived_facts: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Analysis {
    pub sites: BTreeMap<FlipId, FlipSite>,
    pub joins: Vec<JoinRecord>,
    pub stats: AnalysisStats,
}

impl Analysis {
    pub fn site(&self, id: FlipId) -> Result<&FlipSite, AnalysisError> {
        self.sites.get(&id).ok_or(AnalysisError::UnknownFlip(id))
    }

    /// Sites in program order.
    pub fn ordered_sites(&self) -> Vec<&FlipSite> {
        let mut v: Vec<_> = self.sites.values().collect();
        v.sort_by_key(|s| s.position);
        v
    }
}

/// The literal an expression is statically known to equal, if any.
fn literal_of(e: &Expr, aliases: &BTreeMap<String, Literal>) -> Option<Literal> {
    match e {
        Expr::Flip(id, _) => Some((*id, true)),
        Expr::Var(x) => aliases.get(x).copied(),
        Expr::Not(a) => literal_of(a, aliases).map(|(id, b)| (id, !b)),
        _ => None,
    }
}

fn conjuncts<'a>(g: &'a Expr, out: &mut Vec<&'a Expr>) {
    match g {
        Expr::And(a, b) => {
            conjuncts(a, out);
            conjuncts(b, out);
        }
        _ => out.push(g),
    }
}

fn is_literal_shaped(e: &Expr) -> bool {
    match e {
        Expr::Flip(..) | Expr::Var(_) => true,
        Expr::Not(a) => is_literal_shaped(a),
        _ => false,
    }
}

/// Literals of a guard that is a conjunction of literals; `None` otherwise.
fn guard_literals(g: &Expr, aliases: &BTreeMap<String, Literal>) -> Option<Vec<Literal>> {
    let mut cs = Vec::new();
    conjuncts(g, &mut cs);
    cs.into_iter().map(|c| literal_of(c, aliases)).collect()
}

struct Walker {
    sites: BTreeMap<FlipId, FlipSite>,
    joins: Vec<JoinRecord>,
    stats: AnalysisStats,
    position: usize,
}

impl Walker {
    fn go(&mut self, e: &Expr, addr: &mut Address, state: &mut FactState) {
        match e {
            Expr::Flip(id, theta) => {
                debug_assert!(!self.sites.contains_key(id), "duplicate flip id {}", id);
                self.sites.insert(
                    *id,
                    FlipSite {
                        id: *id,
                        theta: theta.clone(),
                        facts: state.constraints.clone(),
                        path: addr.clone(),
                        position: self.position,
                    },
                );
                self.position += 1;
            }
            Expr::Let(x, bound, body) => {
                let alias = literal_of(bound, &state.aliases);
                addr.push(0);
                self.go(bound, addr, state);
                addr.pop();
                let shadowed = match alias {
                    Some(lit) => state.aliases.insert(x.clone(), lit),
                    None => state.aliases.remove(x),
                };
                addr.push(1);
                self.go(body, addr, state);
                addr.pop();
                match shadowed {
                    Some(lit) => state.aliases.insert(x.clone(), lit),
                    None => state.aliases.remove(x),
                };
            }
            Expr::Ite(g, t, els) => {
                addr.push(0);
                self.go(g, addr, state);
                addr.pop();

                let mut cs = Vec::new();
                conjuncts(g, &mut cs);
                self.stats.guard_literals += cs.iter().filter(|c| is_literal_shaped(c)).count();

                let lits = guard_literals(g, &state.aliases).unwrap_or_default();
                let mut then_state = state.clone();
                then_state.constraints.extend(&lits);
                let mut else_state = state.clone();
                if let [(id, b)] = lits.as_slice() {
                    else_state.constraints.extend(&[(*id, !*b)]);
                }
                let mut constrained: Vec<FlipId> = lits.iter().map(|(id, _)| *id).collect();
                constrained.sort();
                constrained.dedup();
                self.stats.derived_facts += constrained.len();

                addr.push(1);
                self.go(t, addr, &mut then_state);
                addr.pop();
                addr.push(2);
                self.go(els, addr, &mut else_state);
                addr.pop();

                let merged = then_state.join(&else_state);
                self.joins.push(JoinRecord {
                    addr: addr.clone(),
                    then_exit: then_state.constraints,
                    else_exit: else_state.constraints,
                    merged: merged.constraints.clone(),
                });
                *state = merged;
            }
            _ => {
                for (i, c) in e.children().into_iter().enumerate() {
                    addr.push(i as u8);
                    self.go(c, addr, state);
                    addr.pop();
                }
            }
        }
    }
}

/// Annotate every flip with the constraint facts holding at its site.
/// Flip ids must be unique (as produced by parsing or renumbering).
pub fn analyze(p: &Expr) -> Analysis {
    let mut w = Walker {
        sites: BTreeMap::new(),
        joins: Vec::new(),
        stats: AnalysisStats::default(),
        position: 0,
    };
    w.go(p, &mut Vec::new(), &mut FactState::default());
    Analysis {
        sites: w.sites,
        joins: w.joins,
        stats: w.stats,
    }
}

/// True when the nodes at `a` and `b` sit in the then- and else-branch of
/// their lowest common ancestor, which must be an `if`.
pub fn disjoint_branches(p: &Expr, a: &[u8], b: &[u8]) -> bool {
    let common = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    if common >= a.len() || common >= b.len() {
        return false;
    }
    let (x, y) = (a[common], b[common]);
    matches!(p.get(&a[..common]), Some(Expr::Ite(..))) && ((x == 1 && y == 2) || (x == 2 && y == 1))
}

/// Same parameter, opposite branches of one `if`.
pub fn locally_redundant(p: &Expr, i: FlipId, j: FlipId) -> Result<bool, AnalysisError> {
    let nodes = flip_nodes(p);
    let find = |id| {
        nodes
            .iter()
            .find(|n| n.id == id)
            .ok_or(AnalysisError::UnknownFlip(id))
    };
    let (a, b) = (find(i)?, find(j)?);
    Ok(i != j && a.theta == b.theta && disjoint_branches(p, &a.addr, &b.addr))
}

/// Sound test that no execution evaluates both flips: either they sit in
/// opposite branches of one `if`, or their constraint facts disagree.
pub fn never_cooccur(p: &Expr, analysis: &Analysis, i: FlipId, j: FlipId) -> Result<bool, AnalysisError> {
    let (a, b) = (analysis.site(i)?, analysis.site(j)?);
    Ok(i != j && sites_never_cooccur(p, a, b, Mode::Global))
}

pub(crate) fn sites_never_cooccur(p: &Expr, a: &FlipSite, b: &FlipSite, mode: Mode) -> bool {
    if a.id == b.id {
        return false;
    }
    disjoint_branches(p, &a.path, &b.path) || (mode == Mode::Global && a.facts.disagrees_with(&b.facts))
}

/// Groups of at least two same-parameter flips that pairwise never co-occur.
/// Flips are scanned in program order and join the first compatible group.
/// `Local` uses only the opposite-branch test; `Global` also uses
/// constraint facts.
pub fn redundancy_groups(p: &Expr, mode: Mode) -> Vec<Vec<FlipId>> {
    redundancy_groups_with(p, &analyze(p), mode)
}

pub fn redundancy_groups_with(p: &Expr, analysis: &Analysis, mode: Mode) -> Vec<Vec<FlipId>> {
    let mut groups: Vec<Vec<&FlipSite>> = Vec::new();
    for site in analysis.ordered_sites() {
        let slot = groups
            .iter_mut()
            .find(|g| g[0].theta == site.theta && g.iter().all(|m| sites_never_cooccur(p, m, site, mode)));
        match slot {
            Some(g) => g.push(site),
            None => groups.push(vec![site]),
        }
    }
    groups
        .into_iter()
        .filter(|g| g.len() >= 2)
        .map(|g| g.into_iter().map(|s| s.id).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse;

    pub(crate) const BRANCHY: &str = "let x = flip 0.1 in let z = flip 0.2 in
        let y = if x && z then flip 0.3
            else if x && !z then flip 0.2
            else flip 0.3
        in y";

    pub(crate) const OPPOSED: &str = "let x = flip 0.1 in
        let y = if x then flip 0.2 else flip 0.3 in
        let z = if !x then flip 0.2 else flip 0.4 in (y, z)";

    fn facts(pairs: &[(u32, bool)]) -> ConstraintFact {
        ConstraintFact(pairs.iter().map(|(i, b)| (FlipId(*i), *b)).collect())
    }

    #[test]
    fn global_example_facts() {
        let a = analyze(&parse(OPPOSED).unwrap());
        assert_eq!(a.site(FlipId(1)).unwrap().facts, facts(&[]));
        assert_eq!(a.site(FlipId(2)).unwrap().facts, facts(&[(1, true)]));
        assert_eq!(a.site(FlipId(3)).unwrap().facts, facts(&[(1, false)]));
        assert_eq!(a.site(FlipId(4)).unwrap().facts, facts(&[(1, false)]));
        assert_eq!(a.site(FlipId(5)).unwrap().facts, facts(&[(1, true)]));
    }

    #[test]
    fn conjunction_guards() {
        let a = analyze(&parse(BRANCHY).unwrap());
        assert_eq!(a.site(FlipId(3)).unwrap().facts, facts(&[(1, true), (2, true)]));
        assert_eq!(a.site(FlipId(4)).unwrap().facts, facts(&[(1, true), (2, false)]));
        assert_eq!(a.site(FlipId(5)).unwrap().facts, facts(&[]));
    }

    #[test]
    fn aliases_follow_copies_and_negation() {
        let p = parse(
            "let x = flip 0.5 in let y = x in let w = !y in
             (if w then flip 0.1 else flip 0.2, if y then flip 0.3 else flip 0.4)",
        )
        .unwrap();
        let a = analyze(&p);
        assert_eq!(a.site(FlipId(2)).unwrap().facts, facts(&[(1, false)]));
        assert_eq!(a.site(FlipId(3)).unwrap().facts, facts(&[(1, true)]));
        assert_eq!(a.site(FlipId(4)).unwrap().facts, facts(&[(1, true)]));
        assert_eq!(a.site(FlipId(5)).unwrap().facts, facts(&[(1, false)]));
    }

    #[test]
    fn shadowing_drops_alias() {
        let p = parse("let x = flip 0.5 in let x = true in if x then flip 0.1 else flip 0.2").unwrap();
        let a = analyze(&p);
        assert!(a.site(FlipId(2)).unwrap().facts.is_empty());
        let p = parse("let x = flip 0.5 in (let x = true in x, if x then flip 0.1 else flip 0.2)").unwrap();
        let a = analyze(&p);
        assert_eq!(a.site(FlipId(2)).unwrap().facts, facts(&[(1, true)]));
    }

    #[test]
    fn disjunctions_and_tests_give_no_facts() {
        let p =
            parse("let x = flip 0.5 in let z = flip 0.5 in if x || z then flip 0.1 else flip 0.2").unwrap();
        let a = analyze(&p);
        assert!(a.site(FlipId(3)).unwrap().facts.is_empty());
        assert!(a.site(FlipId(4)).unwrap().facts.is_empty());
        let p = parse("let x = flip 0.5 in if x && (x || x) then flip 0.1 else flip 0.2").unwrap();
        assert!(analyze(&p).site(FlipId(2)).unwrap().facts.is_empty());
    }

    #[test]
    fn direct_flip_guard() {
        let p = parse("if flip 0.1 then flip 0.2 else flip 0.3").unwrap();
        let a = analyze(&p);
        assert_eq!(a.site(FlipId(2)).unwrap().facts, facts(&[(1, true)]));
        assert_eq!(a.site(FlipId(3)).unwrap().facts, facts(&[(1, false)]));
    }

    #[test]
    fn local_redundancy() {
        let p = parse(BRANCHY).unwrap();
        assert!(locally_redundant(&p, FlipId(3), FlipId(5)).unwrap());
        assert!(!locally_redundant(&p, FlipId(2), FlipId(4)).unwrap());
        assert!(!locally_redundant(&p, FlipId(3), FlipId(3)).unwrap());
        assert_eq!(
            locally_redundant(&p, FlipId(3), FlipId(9)),
            Err(AnalysisError::UnknownFlip(FlipId(9)))
        );
    }

    #[test]
    fn cooccurrence() {
        let p = parse(OPPOSED).unwrap();
        let a = analyze(&p);
        assert!(never_cooccur(&p, &a, FlipId(2), FlipId(4)).unwrap());
        assert!(!never_cooccur(&p, &a, FlipId(3), FlipId(4)).unwrap());

        let p = parse(BRANCHY).unwrap();
        let a = analyze(&p);
        assert!(never_cooccur(&p, &a, FlipId(4), FlipId(5)).unwrap());
        assert!(!never_cooccur(&p, &a, FlipId(2), FlipId(4)).unwrap());
        assert!(!never_cooccur(&p, &a, FlipId(2), FlipId(2)).unwrap());
        assert!(never_cooccur(&p, &a, FlipId(2), FlipId(7)).is_err());
    }

    #[test]
    fn groups() {
        let branchy = parse(BRANCHY).unwrap();
        let opposed = parse(OPPOSED).unwrap();
        assert_eq!(
            redundancy_groups(&branchy, Mode::Local),
            vec![vec![FlipId(3), FlipId(5)]]
        );
        assert_eq!(
            redundancy_groups(&branchy, Mode::Global),
            vec![vec![FlipId(3), FlipId(5)]]
        );
        assert_eq!(
            redundancy_groups(&opposed, Mode::Global),
            vec![vec![FlipId(2), FlipId(4)]]
        );
        assert!(redundancy_groups(&opposed, Mode::Local).is_empty());
    }

    #[test]
    fn joins_only_shrink() {
        let a = analyze(&parse(BRANCHY).unwrap());
        assert_eq!(a.joins.len(), 2);
        for j in &a.joins {
            assert!(j.merged.is_subset_of(&j.then_exit));
            assert!(j.merged.is_subset_of(&j.else_exit));
        }
        assert!(a.stats.derived_facts <= a.stats.guard_literals);
    }
}
