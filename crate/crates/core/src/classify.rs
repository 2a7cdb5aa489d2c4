//! Structural properties of queries and class membership.

use std::fmt;

use serde::Serialize;

use crate::query::Query;
use crate::set::VarSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Class {
    #[serde(rename = "C_lin")]
    Lin,
    #[serde(rename = "C_poly")]
    Poly,
    #[serde(rename = "C_exp")]
    Exp,
    #[serde(rename = "outside_C_exp")]
    Outside,
}

impl Class {
    /// Classes maintained by view trees.
    pub fn is_poly(self) -> bool {
        matches!(self, Class::Lin | Class::Poly)
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Class::Lin => "C_lin",
            Class::Poly => "C_poly",
            Class::Exp => "C_exp",
            Class::Outside => "outside_C_exp",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// A path between two dynamic atoms that avoids their shared variables.
    Body,
    /// A path from a dynamic atom to a free variable that avoids the
    /// atom's free variables.
    Head,
}

/// A path that breaks body- or head-safety.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct UnsafeWitness {
    pub kind: ViolationKind,
    /// The offending atoms; a head violation lists one atom.
    pub atoms: Vec<String>,
    pub path: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClassificationReport {
    pub is_hierarchical: bool,
    pub is_q_hierarchical: bool,
    pub is_alpha_acyclic: bool,
    pub is_free_connex: bool,
    pub is_well_behaved: bool,
    pub unsafe_witness: Option<UnsafeWitness>,
    pub class: Class,
    pub dichotomy_applies: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn atom_sets(q: &Query) -> Vec<crate::set::AtomSet> {
    (0..q.num_var_ids()).map(|v| q.atoms_of(v)).collect()
}

pub fn is_hierarchical(q: &Query) -> bool {
    let atoms = atom_sets(q);
    let vars: Vec<usize> = q.vars().iter().collect();
    vars.iter().all(|&x| {
        vars.iter().all(|&y| {
            let (a, b) = (atoms[x], atoms[y]);
            a.is_subset(b) || b.is_subset(a) || !a.intersects(b)
        })
    })
}

pub fn is_q_hierarchical(q: &Query) -> bool {
    if !is_hierarchical(q) {
        return false;
    }
    let atoms = atom_sets(q);
    let free = q.free();
    let vars = q.vars();
    vars.iter().all(|x| {
        vars.iter()
            .all(|y| !(atoms[y].is_strict_subset(atoms[x]) && free.contains(y) && !free.contains(x)))
    })
}

/// GYO reduction: drop variables that occur in a single edge and edges
/// contained in another edge (smallest index first) until nothing changes.
/// The hypergraph is acyclic iff at most one edge survives.
pub fn gyo_acyclic(edges: &[VarSet]) -> bool {
    let mut edges: Vec<VarSet> = edges.to_vec();
    loop {
        let mut changed = false;
        for i in 0..edges.len() {
            let others = edges
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .fold(VarSet::EMPTY, |s, (_, e)| s.union(*e));
            let lonely = edges[i].minus(others);
            if !lonely.is_empty() {
                edges[i] = edges[i].minus(lonely);
                changed = true;
            }
        }
        let ear = (0..edges.len()).find(|&i| (0..edges.len()).any(|j| j != i && edges[i].is_subset(edges[j])));
        if let Some(i) = ear {
            edges.remove(i);
            changed = true;
        }
        if edges.len() == 1 && edges[0].is_empty() {
            edges.clear();
        }
        if !changed {
            break;
        }
    }
    edges.len() <= 1
}

pub fn is_alpha_acyclic(q: &Query) -> bool {
    let edges: Vec<VarSet> = q.body().iter().map(|a| a.var_set()).collect();
    gyo_acyclic(&edges)
}

pub fn is_free_connex(q: &Query) -> bool {
    let mut edges: Vec<VarSet> = q.body().iter().map(|a| a.var_set()).collect();
    if !gyo_acyclic(&edges) {
        return false;
    }
    edges.push(q.free());
    gyo_acyclic(&edges)
}

fn witness(q: &Query, kind: ViolationKind, atoms: &[usize], path: Vec<crate::query::Var>) -> UnsafeWitness {
    UnsafeWitness {
        kind,
        atoms: atoms.iter().map(|&i| q.fmt_atom(q.atom(i))).collect(),
        path: path.iter().map(|v| q.var_name(*v).to_string()).collect(),
    }
}

/// All body- and head-safety violations: body violations for each pair of
/// dynamic atoms in declaration order, then head violations per dynamic
/// atom.
pub fn safety_violations(q: &Query) -> Vec<UnsafeWitness> {
    let mut out = Vec::new();
    let dynamic: Vec<usize> = q.dynamic_atoms().iter().collect();
    for (k, &i) in dynamic.iter().enumerate() {
        for &j in &dynamic[k + 1..] {
            let (x, y) = (q.atom(i).var_set(), q.atom(j).var_set());
            let shared = x.intersect(y);
            if let Some(path) = q.shortest_path(x.minus(shared), y.minus(shared), shared) {
                out.push(witness(q, ViolationKind::Body, &[i, j], path));
            }
        }
    }
    let free = q.free();
    for &i in &dynamic {
        let x = q.atom(i).var_set();
        let removed = free.intersect(x);
        if let Some(path) = q.shortest_path(x.minus(free), free.minus(x), removed) {
            out.push(witness(q, ViolationKind::Head, &[i], path));
        }
    }
    out
}

/// Returns whether `q` is well-behaved and, if not, the first violation.
pub fn check_well_behaved(q: &Query) -> (bool, Option<UnsafeWitness>) {
    let first = safety_violations(q).into_iter().next();
    (first.is_none(), first)
}

pub fn is_well_behaved(q: &Query) -> bool {
    check_well_behaved(q).0
}

/// Every variable of a dynamic atom also occurs in a static atom.
pub fn dynamic_vars_covered_by_static(q: &Query) -> bool {
    q.dynamic_vars().is_subset(q.static_vars())
}

/// The dynamic sub-query after dropping variables that also occur in
/// static atoms, keeping only atoms that still have variables.
pub fn reduced_dynamic_subquery(q: &Query) -> Option<Query> {
    let stat = q.static_vars();
    let mut names: Vec<String> = Vec::new();
    let mut body = Vec::new();
    let mut head = Vec::new();
    let intern = |v: crate::query::Var, names: &mut Vec<String>| -> crate::query::Var {
        let name = q.var_name(v);
        let i = names.iter().position(|n| n == name).unwrap_or_else(|| {
            names.push(name.to_string());
            names.len() - 1
        });
        crate::query::Var(i as u32)
    };
    for a in q.body().iter().filter(|a| a.is_dynamic()) {
        let vars: Vec<_> = a
            .vars
            .iter()
            .filter(|v| !stat.contains(v.index()))
            .map(|&v| intern(v, &mut names))
            .collect();
        if !vars.is_empty() {
            body.push((a.relation.clone(), a.kind, vars));
        }
    }
    if body.is_empty() {
        return None;
    }
    for &v in q.head() {
        if !stat.contains(v.index()) && names.iter().any(|n| n == q.var_name(v)) {
            head.push(intern(v, &mut names));
        }
    }
    Query::from_parts(format!("{}_rdyn", q.name()), head, body, names, true).ok()
}

pub fn classify(q: &Query) -> ClassificationReport {
    let (well_behaved, unsafe_witness) = check_well_behaved(q);
    let free_connex = is_free_connex(q);
    let class = if well_behaved && free_connex {
        Class::Lin
    } else if well_behaved {
        Class::Poly
    } else if dynamic_vars_covered_by_static(q) {
        Class::Exp
    } else {
        Class::Outside
    };
    let note = (class == Class::Outside).then(|| match reduced_dynamic_subquery(q) {
        Some(r) if !is_q_hierarchical(&r) => {
            "reduced dynamic sub-query is not q-hierarchical; no constant update and delay expected".to_string()
        }
        _ => "outside C_exp; tractability unknown".to_string(),
    });
    ClassificationReport {
        is_hierarchical: is_hierarchical(q),
        is_q_hierarchical: is_q_hierarchical(q),
        is_alpha_acyclic: is_alpha_acyclic(q),
        is_free_connex: free_connex,
        is_well_behaved: well_behaved,
        unsafe_witness,
        class,
        dichotomy_applies: !q.has_repeats(),
        note,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> Query {
        Query::parse(s).unwrap()
    }

    #[test]
    fn hierarchy_checks() {
        assert!(is_q_hierarchical(&q("Q(A,B) := R@d(A,B), S@d(A,C).")));
        assert!(!is_q_hierarchical(&q("Q(A,B) := R@d(A), S@d(A,B), T@d(B).")));
        assert!(is_q_hierarchical(&q("Q(A) := R@d(A,B).")));
        // hierarchical but a free variable sits below a bound one
        let h = q("Q(B) := R@d(A,B), S@d(A).");
        assert!(is_hierarchical(&h));
        assert!(!is_q_hierarchical(&h));
    }

    #[test]
    fn acyclicity() {
        assert!(!is_alpha_acyclic(&q("Q() := R@s(A,B), S@s(B,C), T@s(A,C).")));
        assert!(is_alpha_acyclic(&q("Q() := R@s(A,B), S@s(B,C), T@s(A,C), U@d(A,B,C).")));
        let q2 = q("Q(A,C,D) := R@d(A,D), S@s(A,B), T@s(B,C), U@d(D).");
        assert!(is_alpha_acyclic(&q2));
        assert!(!is_free_connex(&q2));
        assert!(is_free_connex(&q("Q(A,B,C) := R@d(A,D), S@d(A,B), T@s(B,C).")));
        assert!(gyo_acyclic(&[]));
    }

    #[test]
    fn witnesses() {
        let q3 = q("Q(A,B) := R@d(A), S@s(A,B), T@d(B).");
        let (ok, w) = check_well_behaved(&q3);
        assert!(!ok);
        let w = w.unwrap();
        assert_eq!(w.kind, ViolationKind::Body);
        assert_eq!(w.path, vec!["A", "B"]);
        assert_eq!(w.atoms, vec!["R@d(A)", "T@d(B)"]);

        let q5 = q("Q(B,C) := R@d(A,B), S@d(A,C), T@s(B,C).");
        let all = safety_violations(&q5);
        assert!(all.contains(&UnsafeWitness {
            kind: ViolationKind::Head,
            atoms: vec!["S@d(A,C)".into()],
            path: vec!["A".into(), "B".into()],
        }));
    }

    #[test]
    fn notes_for_outside_queries() {
        let q6 = q("Q(A,B) := R@d(A), S@d(A,B), T@d(B,C), U@s(C).");
        let r = classify(&q6);
        assert_eq!(r.class, Class::Outside);
        assert!(r.note.unwrap().contains("not q-hierarchical"));
        assert!(classify(&q("Q(A) := R@d(A).")).note.is_none());
    }

    #[test]
    fn report_json_field_names() {
        let r = classify(&q("Q(A,B) := R@d(A), S@s(A,B), T@d(B)."));
        let j = serde_json::to_value(&r).unwrap();
        assert_eq!(j["class"], "C_exp");
        assert_eq!(j["unsafe_witness"]["kind"], "body");
        assert_eq!(j["dichotomy_applies"], true);
    }
}
