//! Flip hoisting: replace a group of same-parameter flips that never
//! co-occur by one shared flip bound above all of them.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::analysis::{analyze, redundancy_groups_with, sites_never_cooccur, Analysis, Mode};
use crate::ast::{flip_nodes, renumber_flips, Address, Expr, FlipId};
use crate::prob::Prob;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HoistGroup {
    pub members: Vec<FlipId>,
    pub theta: Prob,
    /// Address of the expression wrapped by the new `let`.
    pub anchor: Address,
    pub fresh_var: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderPolicy {
    /// Only hoist when the flip variable order is preserved.
    Strict,
    /// Hoist every sound group. Compiled BDDs may grow.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipReason {
    OrderViolation,
    Scope,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedGroup {
    pub group: HoistGroup,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct HoistReport {
    pub applied: Vec<HoistGroup>,
    pub skipped: Vec<SkippedGroup>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HoistError {
    #[error("a hoist group needs at least two members")]
    TooFewMembers,
    #[error("no flip with id {0}")]
    UnknownFlip(FlipId),
    #[error("flip {id} has parameter {found}, group parameter is {expected}")]
    ThetaMismatch {
        id: FlipId,
        expected: Box<Prob>,
        found: Box<Prob>,
    },
    #[error("anchor does not enclose flip {0}")]
    BadAnchor(FlipId),
    #[error("variable `{0}` already occurs in the program")]
    NameInUse(String),
}

/// Lowest common ancestor of the addresses, lifted out of `let` right-hand
/// sides so the new binding sits in front of the `let` it would otherwise be
/// nested in.
pub fn anchor_for(p: &Expr, addrs: &[&Address]) -> Address {
    let mut anchor: Address = addrs[0].clone();
    for a in &addrs[1..] {
        let common = anchor.iter().zip(a.iter()).take_while(|(x, y)| x == y).count();
        anchor.truncate(common);
    }
    while let Some(&last) = anchor.last() {
        let parent = &anchor[..anchor.len() - 1];
        if last == 0 && matches!(p.get(parent), Some(Expr::Let(..))) {
            anchor.pop();
        } else {
            break;
        }
    }
    anchor
}

/// Build a group for the given flips, anchored at their lifted common
/// ancestor.
pub fn make_group(p: &Expr, members: &[FlipId], fresh_var: &str) -> Result<HoistGroup, HoistError> {
    if members.len() < 2 {
        return Err(HoistError::TooFewMembers);
    }
    let nodes = flip_nodes(p);
    let found: Vec<_> = members
        .iter()
        .map(|id| {
            nodes
                .iter()
                .find(|n| n.id == *id)
                .ok_or(HoistError::UnknownFlip(*id))
        })
        .collect::<Result<_, _>>()?;
    let addrs: Vec<&Address> = found.iter().map(|n| &n.addr).collect();
    Ok(HoistGroup {
        members: members.to_vec(),
        theta: found[0].theta.clone(),
        anchor: anchor_for(p, &addrs),
        fresh_var: fresh_var.to_string(),
    })
}

/// Replace members (given by address) by `fresh` and wrap the anchor in
/// `let fresh = flip θ in ...`. Flip ids are left for the caller to renumber.
fn apply_at(q: &mut Expr, anchor: &[u8], members: &[Address], theta: &Prob, fresh: &str) {
    for m in members {
        *q.get_mut(m).expect("member address") = Expr::Var(fresh.to_string());
    }
    let slot = q.get_mut(anchor).expect("anchor address");
    let inner = std::mem::replace(slot, Expr::True);
    *slot = Expr::Let(
        fresh.to_string(),
        Box::new(Expr::Flip(FlipId::UNASSIGNED, theta.clone())),
        Box::new(inner),
    );
}

/// Merge the group's flips into one fresh flip bound at the group anchor.
/// The result has its flips renumbered in program order.
pub fn hoist(p: &Expr, g: &HoistGroup) -> Result<Expr, HoistError> {
    if g.members.len() < 2 {
        return Err(HoistError::TooFewMembers);
    }
    if p.names().contains(&g.fresh_var) {
        return Err(HoistError::NameInUse(g.fresh_var.clone()));
    }
    let nodes = flip_nodes(p);
    let mut addrs = Vec::new();
    for id in &g.members {
        let n = nodes
            .iter()
            .find(|n| n.id == *id)
            .ok_or(HoistError::UnknownFlip(*id))?;
        if n.theta != g.theta {
            return Err(HoistError::ThetaMismatch {
                id: *id,
                expected: Box::new(g.theta.clone()),
                found: Box::new(n.theta.clone()),
            });
        }
        if !n.addr.starts_with(&g.anchor) {
            return Err(HoistError::BadAnchor(*id));
        }
        addrs.push(n.addr.clone());
    }
    let mut q = p.clone();
    apply_at(&mut q, &g.anchor, &addrs, &g.theta, &g.fresh_var);
    renumber_flips(&mut q);
    Ok(q)
}

/// Whether hoisting keeps the relative order of every pair of flips that can
/// be evaluated together: each non-member flip inside the anchor that comes
/// before a member in program order must never co-occur with that member.
pub fn order_preserving(p: &Expr, g: &HoistGroup, analysis: &Analysis) -> bool {
    let members: BTreeSet<FlipId> = g.members.iter().copied().collect();
    let inside: Vec<_> = analysis
        .ordered_sites()
        .into_iter()
        .filter(|s| s.path.starts_with(&g.anchor))
        .collect();
    inside.iter().filter(|m| members.contains(&m.id)).all(|m| {
        inside
            .iter()
            .filter(|k| !members.contains(&k.id) && k.position < m.position)
            .all(|k| sites_never_cooccur(p, k, m, Mode::Global))
    })
}

struct Candidate {
    members: Vec<FlipId>,
    anchor: Address,
}

/// Split a group that violates order preservation into order-preserving
/// subgroups, first-fit in program order.
fn salvage(p: &Expr, analysis: &Analysis, members: &[FlipId]) -> Vec<Vec<FlipId>> {
    let mut subs: Vec<Vec<FlipId>> = Vec::new();
    for &m in members {
        let slot = subs.iter_mut().find(|s| {
            let mut trial = (*s).clone();
            trial.push(m);
            make_group(p, &trial, "")
                .map(|g| order_preserving(p, &g, analysis))
                .unwrap_or(false)
        });
        match slot {
            Some(s) => s.push(m),
            None => subs.push(vec![m]),
        }
    }
    subs.into_iter().filter(|s| s.len() >= 2).collect()
}

fn fresh_name(used: &std::collections::HashSet<String>, counter: &mut usize) -> String {
    loop {
        let name = format!("_h{}", *counter);
        *counter += 1;
        if !used.contains(&name) {
            return name;
        }
    }
}

/// One round: collect candidates, apply a set with pairwise disjoint anchors
/// (innermost first). Returns false when nothing was applied.
fn round(
    q: &mut Expr,
    mode: Mode,
    order: OrderPolicy,
    counter: &mut usize,
    report: &mut HoistReport,
) -> bool {
    let analysis = analyze(q);
    let mut tiers: Vec<Vec<Candidate>> = Vec::new();
    let mut skipped = Vec::new();
    let modes: &[Mode] = match mode {
        Mode::Local => &[Mode::Local],
        Mode::Global => &[Mode::Local, Mode::Global],
    };
    let mut seen: BTreeSet<Vec<FlipId>> = BTreeSet::new();
    for &m in modes {
        let mut tier = Vec::new();
        for members in redundancy_groups_with(q, &analysis, m) {
            if !seen.insert(members.clone()) {
                continue;
            }
            let group = make_group(q, &members, "").expect("group members exist");
            let parts = if order == OrderPolicy::Off || order_preserving(q, &group, &analysis) {
                vec![members]
            } else {
                skipped.push(SkippedGroup {
                    group,
                    reason: SkipReason::OrderViolation,
                });
                salvage(q, &analysis, &members)
            };
            for part in parts {
                let g = make_group(q, &part, "").expect("group members exist");
                tier.push(Candidate {
                    members: part,
                    anchor: g.anchor,
                });
            }
        }
        tier.sort_by_key(|c| std::cmp::Reverse(c.anchor.len()));
        tiers.push(tier);
    }

    let mut chosen: Vec<Candidate> = Vec::new();
    for c in tiers.into_iter().flatten() {
        let overlaps = chosen
            .iter()
            .any(|o| o.anchor.starts_with(&c.anchor) || c.anchor.starts_with(&o.anchor));
        if !overlaps {
            chosen.push(c);
        }
    }
    if chosen.is_empty() {
        report.skipped = skipped;
        return false;
    }

    let used = q.names();
    for c in chosen {
        let fresh = fresh_name(&used, counter);
        let site = analysis.site(c.members[0]).expect("member site");
        let theta = site.theta.clone();
        let addrs: Vec<Address> = c
            .members
            .iter()
            .map(|id| analysis.site(*id).expect("member site").path.clone())
            .collect();
        apply_at(q, &c.anchor, &addrs, &theta, &fresh);
        report.applied.push(HoistGroup {
            members: c.members,
            theta,
            anchor: c.anchor,
            fresh_var: fresh,
        });
    }
    renumber_flips(q);
    true
}

/// Hoist redundancy groups until none applies. Global mode first runs local
/// hoisting to a fixpoint, then keeps going with global groups (local groups
/// still preferred in each round).
pub fn optimize(p: &Expr, mode: Mode, order: OrderPolicy) -> (Expr, HoistReport) {
    let mut q = p.clone();
    renumber_flips(&mut q);
    let mut report = HoistReport::default();
    let mut counter = 0;
    while round(&mut q, Mode::Local, order, &mut counter, &mut report) {}
    if mode == Mode::Global {
        while round(&mut q, Mode::Global, order, &mut counter, &mut report) {}
    }
    (q, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{flip_count, rename_var};
    use crate::oracle::distribution;
    use crate::parse::parse;

    const BRANCHY: &str = "let x = flip 0.1 in let z = flip 0.2 in
        let y = if x && z then flip 0.3
            else if x && !z then flip 0.2
            else flip 0.3
        in y";
    const BRANCHY_HOISTED: &str = "let x = flip 0.1 in let z = flip 0.2 in
        let tmp = flip 0.3 in
        let y = if x && z then tmp
            else if x && !z then flip 0.2
            else tmp
        in y";
    const OPPOSED: &str = "let x = flip 0.1 in
        let y = if x then flip 0.2 else flip 0.3 in
        let z = if !x then flip 0.2 else flip 0.4 in (y, z)";
    const OPPOSED_HOISTED: &str = "let x = flip 0.1 in
        let tmp = flip 0.2 in
        let y = if x then tmp else flip 0.3 in
        let z = if !x then tmp else flip 0.4 in (y, z)";

    #[test]
    fn hoist_local_example() {
        let p = parse(BRANCHY).unwrap();
        let g = make_group(&p, &[FlipId(3), FlipId(5)], "tmp").unwrap();
        assert_eq!(g.anchor, vec![1, 1]);
        let q = hoist(&p, &g).unwrap();
        assert_eq!(q, parse(BRANCHY_HOISTED).unwrap());
        assert_eq!(flip_count(&q), 4);
    }

    #[test]
    fn hoist_global_example() {
        let p = parse(OPPOSED).unwrap();
        let g = make_group(&p, &[FlipId(2), FlipId(4)], "tmp").unwrap();
        assert_eq!(hoist(&p, &g).unwrap(), parse(OPPOSED_HOISTED).unwrap());
    }

    #[test]
    fn hoist_validates() {
        let p = parse(BRANCHY).unwrap();
        let mut g = make_group(&p, &[FlipId(3), FlipId(5)], "tmp").unwrap();
        g.members = vec![FlipId(3), FlipId(4)];
        assert!(matches!(hoist(&p, &g), Err(HoistError::ThetaMismatch { .. })));
        g.members = vec![FlipId(3), FlipId(8)];
        assert_eq!(hoist(&p, &g), Err(HoistError::UnknownFlip(FlipId(8))));
        g.members = vec![FlipId(3)];
        assert_eq!(hoist(&p, &g), Err(HoistError::TooFewMembers));
        let g = make_group(&p, &[FlipId(3), FlipId(5)], "x").unwrap();
        assert_eq!(hoist(&p, &g), Err(HoistError::NameInUse("x".into())));
        let mut g = make_group(&p, &[FlipId(3), FlipId(5)], "tmp").unwrap();
        g.anchor = vec![1, 1, 0, 1];
        assert_eq!(hoist(&p, &g), Err(HoistError::BadAnchor(FlipId(5))));
    }

    #[test]
    fn order_checks() {
        let p = parse(BRANCHY).unwrap();
        let a = analyze(&p);
        let g = make_group(&p, &[FlipId(3), FlipId(5)], "").unwrap();
        assert!(order_preserving(&p, &g, &a));

        let p = parse(OPPOSED).unwrap();
        let a = analyze(&p);
        let g = make_group(&p, &[FlipId(2), FlipId(4)], "").unwrap();
        assert!(!order_preserving(&p, &g, &a));

        let p = parse("let c = flip 0.5 in if c then flip 0.3 else flip 0.3").unwrap();
        let a = analyze(&p);
        let g = make_group(&p, &[FlipId(2), FlipId(3)], "").unwrap();
        assert!(order_preserving(&p, &g, &a));
    }

    #[test]
    fn optimize_local_example() {
        let p = parse(BRANCHY).unwrap();
        let (q, report) = optimize(&p, Mode::Local, OrderPolicy::Strict);
        assert_eq!(report.applied.len(), 1);
        assert_eq!(report.applied[0].fresh_var, "_h0");
        assert_eq!(rename_var(&q, "_h0", "tmp"), parse(BRANCHY_HOISTED).unwrap());
        assert_eq!(distribution(&p).unwrap(), distribution(&q).unwrap());
    }

    #[test]
    fn optimize_global_example() {
        let p = parse(OPPOSED).unwrap();
        let (q, report) = optimize(&p, Mode::Global, OrderPolicy::Off);
        assert_eq!(report.applied.len(), 1);
        assert_eq!(rename_var(&q, "_h0", "tmp"), parse(OPPOSED_HOISTED).unwrap());

        let (q, report) = optimize(&p, Mode::Global, OrderPolicy::Strict);
        assert_eq!(q, p);
        assert!(report.applied.is_empty());
        assert_eq!(report.skipped.len(), 1);
        assert_eq!(report.skipped[0].reason, SkipReason::OrderViolation);
        assert_eq!(report.skipped[0].group.members, vec![FlipId(2), FlipId(4)]);
    }

    #[test]
    fn distinct_parameters_are_left_alone() {
        let p = parse("let a = flip 0.1 in if a then flip 0.2 else flip 0.3").unwrap();
        let (q, report) = optimize(&p, Mode::Global, OrderPolicy::Strict);
        assert_eq!(q, p);
        assert_eq!(report, HoistReport::default());
    }

    #[test]
    fn fresh_names_avoid_existing() {
        let p = parse("let _h0 = flip 0.5 in if _h0 then flip 0.3 else flip 0.3").unwrap();
        let (q, report) = optimize(&p, Mode::Local, OrderPolicy::Strict);
        assert_eq!(report.applied[0].fresh_var, "_h1");
        assert_eq!(flip_count(&q), 2);
    }

    #[test]
    fn disjoint_groups_in_one_round() {
        let p = parse(
            "let a = flip 0.5 in
             (if a then flip 0.3 else flip 0.3, if a then flip 0.7 else flip 0.7)",
        )
        .unwrap();
        let (q, report) = optimize(&p, Mode::Local, OrderPolicy::Strict);
        assert_eq!(report.applied.len(), 2);
        assert_eq!(flip_count(&q), 3);
        assert_eq!(distribution(&p).unwrap(), distribution(&q).unwrap());
    }

    #[test]
    fn nested_multiway_chain() {
        let p = parse(
            "let a = flip 0.5 in let b = flip 0.5 in
             if a && b then flip 0.2 else if a then flip 0.2 else if b then flip 0.2 else flip 0.9",
        )
        .unwrap();
        let (q, report) = optimize(&p, Mode::Local, OrderPolicy::Strict);
        assert_eq!(report.applied.len(), 1);
        assert_eq!(report.applied[0].members.len(), 3);
        assert_eq!(flip_count(&q), 4);
        assert_eq!(distribution(&p).unwrap(), distribution(&q).unwrap());
    }
}
