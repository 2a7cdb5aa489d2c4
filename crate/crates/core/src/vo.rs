//! Variable orders: forests over the query variables in which every atom's
//! variables lie on a root-to-leaf path, with each atom hanging under its
//! lowest variable.

use std::fmt::Write as _;

use crate::classify::is_well_behaved;
use crate::error::{Error, Result};
use crate::query::{Query, Var};
use crate::set::{AtomSet, VarSet};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OrderViolation {
    MissingVariable(String),
    UnknownVariable(String),
    DuplicateVariable(String),
    UnknownParent(String),
    Cycle(String),
    AtomNotOnPath(String),
}

/// A valid variable order for a specific query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VariableOrder {
    vars: VarSet,
    parent: Vec<Option<Var>>,
    children: Vec<Vec<Var>>,
    roots: Vec<Var>,
    depth: Vec<usize>,
    atom_parent: Vec<Var>,
    atoms_at: Vec<Vec<usize>>,
}

/// Checks that `parents` describes a forest over exactly `vars(q)` in which
/// every atom lies on a root-to-leaf path.
pub fn validate_parents(q: &Query, parents: &[(Var, Option<Var>)]) -> Vec<OrderViolation> {
    let mut out = Vec::new();
    let name = |v: Var| q.names().get(v.index()).cloned().unwrap_or_else(|| format!("#{}", v.0));
    let vars = q.vars();
    let mut seen = VarSet::EMPTY;
    let mut parent = vec![None; q.num_var_ids()];
    for &(v, p) in parents {
        if !vars.contains(v.index()) {
            out.push(OrderViolation::UnknownVariable(name(v)));
            continue;
        }
        if seen.contains(v.index()) {
            out.push(OrderViolation::DuplicateVariable(name(v)));
            continue;
        }
        seen.insert(v.index());
        parent[v.index()] = p;
    }
    for v in vars.minus(seen) {
        out.push(OrderViolation::MissingVariable(q.var_name(Var(v as u32)).to_string()));
    }
    for v in seen {
        if let Some(p) = parent[v] {
            if !seen.contains(p.index()) {
                out.push(OrderViolation::UnknownParent(name(p)));
                parent[v] = None;
            }
        }
    }
    let mut acyclic = true;
    for v in seen {
        let mut cur = parent[v];
        let mut steps = 0;
        while let Some(p) = cur {
            steps += 1;
            if p.index() == v || steps > seen.len() {
                out.push(OrderViolation::Cycle(q.var_name(Var(v as u32)).to_string()));
                acyclic = false;
                break;
            }
            cur = parent[p.index()];
        }
    }
    if !acyclic {
        return out;
    }
    let ancestors_or_self = |v: usize| {
        let mut s = VarSet::singleton(v);
        let mut cur = parent[v];
        while let Some(p) = cur {
            s.insert(p.index());
            cur = parent[p.index()];
        }
        s
    };
    for a in q.body() {
        let set = a.var_set().intersect(seen);
        let on_path = set.iter().any(|v| set.is_subset(ancestors_or_self(v)));
        if !on_path && !set.is_empty() {
            out.push(OrderViolation::AtomNotOnPath(q.fmt_atom(a)));
        }
    }
    out
}

impl VariableOrder {
    /// Builds an order from `(variable, parent)` pairs. Children keep the
    /// order in which they appear in `parents`.
    pub fn new(q: &Query, parents: &[(Var, Option<Var>)]) -> Result<VariableOrder> {
        let violations = validate_parents(q, parents);
        if !violations.is_empty() {
            return Err(Error::InvalidOrder(format!("{violations:?}")));
        }
        let n = q.num_var_ids();
        let mut parent = vec![None; n];
        let mut children = vec![Vec::new(); n];
        let mut roots = Vec::new();
        for &(v, p) in parents {
            parent[v.index()] = p;
            match p {
                Some(p) => children[p.index()].push(v),
                None => roots.push(v),
            }
        }
        let mut depth = vec![0; n];
        let mut stack: Vec<Var> = roots.clone();
        while let Some(v) = stack.pop() {
            for &c in &children[v.index()] {
                depth[c.index()] = depth[v.index()] + 1;
                stack.push(c);
            }
        }
        let mut atoms_at = vec![Vec::new(); n];
        let atom_parent: Vec<Var> = q
            .body()
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let low = *a
                    .vars
                    .iter()
                    .max_by_key(|v| depth[v.index()])
                    .expect("atoms are non-empty");
                atoms_at[low.index()].push(i);
                low
            })
            .collect();
        Ok(VariableOrder {
            vars: q.vars(),
            parent,
            children,
            roots,
            depth,
            atom_parent,
            atoms_at,
        })
    }

    pub fn vars(&self) -> VarSet {
        self.vars
    }

    pub fn roots(&self) -> &[Var] {
        &self.roots
    }

    pub fn parent(&self, v: Var) -> Option<Var> {
        self.parent[v.index()]
    }

    pub fn children(&self, v: Var) -> &[Var] {
        &self.children[v.index()]
    }

    pub fn depth(&self, v: Var) -> usize {
        self.depth[v.index()]
    }

    /// Atoms whose lowest variable is `v`, in declaration order.
    pub fn atoms_at(&self, v: Var) -> &[usize] {
        &self.atoms_at[v.index()]
    }

    pub fn atom_parent(&self, atom: usize) -> Var {
        self.atom_parent[atom]
    }

    pub fn ancestors(&self, v: Var) -> VarSet {
        let mut s = VarSet::EMPTY;
        let mut cur = self.parent(v);
        while let Some(p) = cur {
            s.insert(p.index());
            cur = self.parent(p);
        }
        s
    }

    /// Variables of the subtree rooted at `v`, including `v`.
    pub fn subtree_vars(&self, v: Var) -> VarSet {
        let mut s = VarSet::singleton(v.index());
        for &c in self.children(v) {
            s = s.union(self.subtree_vars(c));
        }
        s
    }

    /// Atoms hanging anywhere in the subtree rooted at `v`.
    pub fn subtree_atoms(&self, v: Var) -> AtomSet {
        let mut s: AtomSet = self.atoms_at(v).iter().copied().collect();
        for &c in self.children(v) {
            s = s.union(self.subtree_atoms(c));
        }
        s
    }

    /// Variables in preorder (roots in order, children in order).
    pub fn preorder(&self) -> Vec<Var> {
        let mut out = Vec::with_capacity(self.vars.len());
        fn walk(o: &VariableOrder, v: Var, out: &mut Vec<Var>) {
            out.push(v);
            for &c in o.children(v) {
                walk(o, c, out);
            }
        }
        for &r in &self.roots {
            walk(self, r, &mut out);
        }
        out
    }

    pub fn parent_pairs(&self) -> Vec<(Var, Option<Var>)> {
        self.preorder().into_iter().map(|v| (v, self.parent(v))).collect()
    }

    /// Checks this order against `q`.
    pub fn validate(&self, q: &Query) -> Vec<OrderViolation> {
        validate_parents(q, &self.parent_pairs())
    }

    /// `dep(X)`: ancestors of `X` that share an atom with some variable in
    /// the subtree of `X`. Indexed by variable id.
    pub fn dep(&self, q: &Query) -> Vec<VarSet> {
        let mut dep = vec![VarSet::EMPTY; q.num_var_ids()];
        fn walk(o: &VariableOrder, q: &Query, v: Var, anc: VarSet, dep: &mut [VarSet]) -> AtomSet {
            let mut atoms: AtomSet = o.atoms_at(v).iter().copied().collect();
            let below = anc.union(VarSet::singleton(v.index()));
            for &c in o.children(v) {
                atoms = atoms.union(walk(o, q, c, below, dep));
            }
            dep[v.index()] = q.vars_of(atoms).intersect(anc);
            atoms
        }
        for &r in &self.roots {
            walk(self, q, r, VarSet::EMPTY, &mut dep);
        }
        dep
    }

    /// Each dynamic atom's variables are exactly the variables on the path
    /// from a root down to the atom.
    pub fn is_canonical(&self, q: &Query) -> bool {
        q.body()
            .iter()
            .enumerate()
            .filter(|(_, a)| a.is_dynamic())
            .all(|(i, a)| {
                let low = self.atom_parent(i);
                self.ancestors(low).union(VarSet::singleton(low.index())) == a.var_set()
            })
    }

    /// No bound variable is an ancestor of a free variable.
    pub fn is_free_top(&self, q: &Query) -> bool {
        let free = q.free();
        free.iter().all(|v| self.ancestors(Var(v as u32)).is_subset(free))
    }

    pub fn is_well_structured(&self, q: &Query) -> bool {
        self.is_canonical(q) && self.is_free_top(q)
    }

    /// Graphviz rendering: variables as ellipses (free ones underlined),
    /// atoms as boxes.
    pub fn to_dot(&self, q: &Query) -> String {
        let free = q.free();
        let mut s = String::from("digraph vo {\n  node [shape=ellipse];\n");
        for v in self.preorder() {
            let name = q.var_name(v);
            let label = if free.contains(v.index()) {
                format!("<<u>{name}</u>>")
            } else {
                format!("\"{name}\"")
            };
            let _ = writeln!(s, "  v{} [label={label}];", v.0);
            for &c in self.children(v) {
                let _ = writeln!(s, "  v{} -> v{};", v.0, c.0);
            }
            for &a in self.atoms_at(v) {
                let atom = q.atom(a);
                let color = if atom.is_dynamic() { "red" } else { "blue" };
                let _ = writeln!(
                    s,
                    "  a{a} [shape=box, color={color}, label=\"{}\"];\n  v{} -> a{a};",
                    q.fmt_atom(atom),
                    v.0
                );
            }
        }
        s.push_str("}\n");
        s
    }
}

/// Mutable forest used while assembling orders.
#[derive(Clone, Debug, Default)]
struct Forest {
    present: VarSet,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    roots: Vec<usize>,
}

impl Forest {
    fn new(n: usize) -> Forest {
        Forest {
            present: VarSet::EMPTY,
            parent: vec![None; n],
            children: vec![Vec::new(); n],
            roots: Vec::new(),
        }
    }

    fn add(&mut self, v: usize, p: Option<usize>) {
        self.present.insert(v);
        self.parent[v] = p;
        match p {
            Some(p) => self.children[p].push(v),
            None => self.roots.push(v),
        }
    }

    fn pairs(&self) -> Vec<(Var, Option<Var>)> {
        let mut out = Vec::new();
        let mut stack: Vec<usize> = self.roots.iter().rev().copied().collect();
        while let Some(v) = stack.pop() {
            out.push((Var(v as u32), self.parent[v].map(|p| Var(p as u32))));
            stack.extend(self.children[v].iter().rev());
        }
        out
    }

    fn depth(&self, v: usize) -> usize {
        let mut d = 0;
        let mut cur = self.parent[v];
        while let Some(p) = cur {
            d += 1;
            cur = self.parent[p];
        }
        d
    }
}

/// Builds a forest over `vars` by repeatedly choosing a root for each
/// connected component (connectivity through `atoms`) and recursing on the
/// rest of the component.
fn split_forest(
    q: &Query,
    atoms: AtomSet,
    vars: VarSet,
    parent: Option<usize>,
    choose: &dyn Fn(VarSet) -> usize,
    out: &mut Forest,
) {
    for comp in components_within(q, atoms, vars) {
        let root = choose(comp);
        out.add(root, parent);
        split_forest(q, atoms, comp.minus(VarSet::singleton(root)), Some(root), choose, out);
    }
}

/// Components of `vars` where two variables are adjacent if some atom in
/// `atoms` contains both.
pub(crate) fn components_within(q: &Query, atoms: AtomSet, vars: VarSet) -> Vec<VarSet> {
    let edges: Vec<VarSet> = atoms.iter().map(|i| q.atom(i).var_set().intersect(vars)).collect();
    let mut out = Vec::new();
    let mut left = vars;
    while let Some(s) = left.first() {
        let mut comp = VarSet::singleton(s);
        loop {
            let grown = edges
                .iter()
                .filter(|e| e.intersects(comp))
                .fold(comp, |c, e| c.union(*e));
            if grown == comp {
                break;
            }
            comp = grown;
        }
        left = left.minus(comp);
        out.push(comp);
    }
    out
}

fn by_name<'a>(q: &'a Query) -> impl Fn(&usize, &usize) -> std::cmp::Ordering + 'a {
    move |a, b| q.names()[*a].cmp(&q.names()[*b])
}

/// Picks the free variable first, then the alphabetically smallest.
fn free_first(q: &Query, candidates: VarSet) -> usize {
    let free = q.free();
    let mut c: Vec<usize> = candidates.iter().collect();
    c.sort_by(|a, b| free.contains(*b).cmp(&free.contains(*a)).then(by_name(q)(a, b)));
    c[0]
}

/// Order for the dynamic sub-query: each component is rooted at a variable
/// occurring in all of the component's atoms.
fn dynamic_order(q: &Query, out: &mut Forest) {
    let dyn_atoms = q.dynamic_atoms();
    let choose = |comp: VarSet| {
        let touching: AtomSet = dyn_atoms
            .iter()
            .filter(|&i| q.atom(i).var_set().intersects(comp))
            .collect();
        let covering: VarSet = comp.iter().filter(|&v| touching.is_subset(q.atoms_of(v))).collect();
        if covering.is_empty() {
            let best = comp
                .iter()
                .map(|v| q.atoms_of(v).intersect(dyn_atoms).len())
                .max()
                .unwrap_or(0);
            free_first(
                q,
                comp.iter()
                    .filter(|&v| q.atoms_of(v).intersect(dyn_atoms).len() == best)
                    .collect(),
            )
        } else {
            free_first(q, covering)
        }
    };
    split_forest(q, dyn_atoms, q.dynamic_vars(), None, &choose, out);
}

/// Width-1 free-top order of a static part extended with an atom over its
/// interface, built from an elimination order: bound variables go first,
/// then free ones, then the interface from the bottom of the neck up. A
/// variable may be eliminated when one edge contains all edges that meet
/// it. Returns `None` when the part is not acyclic in the required way.
fn eliminate_part(q: &Query, atoms: AtomSet, vars: VarSet, neck: &[usize]) -> Option<Vec<(usize, Option<usize>)>> {
    let interface: VarSet = neck.iter().copied().collect();
    let mut edges: Vec<VarSet> = atoms.iter().map(|i| q.atom(i).var_set()).collect();
    if !interface.is_empty() {
        edges.push(interface);
    }
    let free = q.free();
    let rest = vars.minus(interface);
    let mut classes: Vec<Vec<usize>> = vec![rest.minus(free).iter().collect(), rest.intersect(free).iter().collect()];
    for c in &mut classes {
        c.sort_by(by_name(q));
    }
    let mut order: Vec<usize> = Vec::new();
    let mut nbrs: Vec<VarSet> = vec![VarSet::EMPTY; q.num_var_ids()];
    let mut eliminate = |v: usize, edges: &mut Vec<VarSet>, order: &mut Vec<usize>| -> bool {
        let meeting: Vec<VarSet> = edges.iter().copied().filter(|e| e.contains(v)).collect();
        let union = meeting.iter().fold(VarSet::EMPTY, |s, e| s.union(*e));
        if !meeting.iter().any(|e| union.is_subset(*e)) {
            return false;
        }
        nbrs[v] = union.minus(VarSet::singleton(v));
        for e in edges.iter_mut() {
            e.remove(v);
        }
        edges.retain(|e| !e.is_empty());
        order.push(v);
        true
    };
    for class in &mut classes {
        while !class.is_empty() {
            let pos = class.iter().position(|&v| {
                let mut trial = edges.clone();
                let mut o = Vec::new();
                eliminate(v, &mut trial, &mut o)
            })?;
            let v = class.remove(pos);
            eliminate(v, &mut edges, &mut order);
        }
    }
    for &v in neck.iter().rev() {
        if !eliminate(v, &mut edges, &mut order) {
            return None;
        }
    }
    let rank: Vec<usize> = {
        let mut r = vec![usize::MAX; q.num_var_ids()];
        for (i, &v) in order.iter().enumerate() {
            r[v] = i;
        }
        r
    };
    let lowest_neck = neck.last().copied();
    let mut out: Vec<(usize, Option<usize>)> = order
        .iter()
        .map(|&v| {
            let p = nbrs[v].iter().min_by_key(|&w| rank[w]);
            // Keep the neck a chain: anything else hanging off a neck
            // variable moves under its lowest variable.
            let p = match (p, lowest_neck) {
                (Some(p), Some(low)) if interface.contains(p) && !interface.contains(v) => Some(low),
                (None, Some(low)) if !interface.contains(v) => Some(low),
                (p, _) => p,
            };
            (v, p)
        })
        .collect();
    out.reverse();
    Some(out)
}

/// Neck, then a free-first component split of the remaining variables.
fn split_part(q: &Query, atoms: AtomSet, vars: VarSet, neck: &[usize]) -> Vec<(usize, Option<usize>)> {
    let mut f = Forest::new(q.num_var_ids());
    let mut prev = None;
    for &v in neck {
        f.add(v, prev);
        prev = Some(v);
    }
    let rest = vars.minus(neck.iter().copied().collect());
    split_forest(q, atoms, rest, prev, &|c| free_first(q, c), &mut f);
    f.pairs()
        .into_iter()
        .map(|(v, p)| (v.index(), p.map(Var::index)))
        .collect()
}

/// Builds a well-structured order for a well-behaved query: an order for
/// the dynamic atoms, extended by one order per static part that is
/// grafted below the lowest variable the part shares with the dynamic
/// atoms.
pub fn create_vo(q: &Query) -> Result<VariableOrder> {
    if !is_well_behaved(q) {
        return Err(Error::NotWellBehaved);
    }
    let mut omega = Forest::new(q.num_var_ids());
    dynamic_order(q, &mut omega);
    for part in q.static_parts() {
        let mut neck: Vec<usize> = part.interface.iter().collect();
        neck.sort_by_key(|&v| omega.depth(v));
        let layout = eliminate_part(q, part.atoms, part.vars, &neck)
            .unwrap_or_else(|| split_part(q, part.atoms, part.vars, &neck));
        combine(&mut omega, &layout, &neck);
    }
    let vo = VariableOrder::new(q, &omega.pairs())?;
    debug_assert!(vo.is_well_structured(q), "{}", vo.to_dot(q));
    Ok(vo)
}

fn combine(omega: &mut Forest, layout: &[(usize, Option<usize>)], neck: &[usize]) {
    let new: Vec<(usize, Option<usize>)> = layout
        .iter()
        .copied()
        .filter(|(v, _)| !omega.present.contains(*v))
        .collect();
    if new.is_empty() {
        return;
    }
    // Parents precede children in `layout`, so adding in order keeps the
    // grafted subtrees intact. Roots of a neck-less part become new trees.
    for (v, p) in new {
        let p = match (p, neck.last()) {
            (Some(p), _) if omega.present.contains(p) && !neck.contains(&p) => Some(p),
            (Some(_), Some(&low)) => Some(low),
            (p, _) => p,
        };
        omega.add(v, p);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> Query {
        Query::parse(s).unwrap()
    }

    fn order(q: &Query, pairs: &[(&str, Option<&str>)]) -> Vec<(Var, Option<Var>)> {
        let v = |n: &str| q.var_by_name(n).unwrap();
        pairs.iter().map(|(a, p)| (v(a), p.map(v))).collect()
    }

    fn names(q: &Query, s: VarSet) -> Vec<&str> {
        let mut n = q.names_of(s);
        n.sort();
        n
    }

    fn rsyz() -> Query {
        q("Q(A,B) := R@d(A,B), S@d(A,C), Y@s(A,D), Z@s(C,D).")
    }

    fn rsyz_vo(q: &Query) -> VariableOrder {
        let p = order(q, &[("A", None), ("B", Some("A")), ("C", Some("A")), ("D", Some("C"))]);
        VariableOrder::new(q, &p).unwrap()
    }

    #[test]
    fn rsyz_dep_sets() {
        let q = rsyz();
        let vo = rsyz_vo(&q);
        let dep = vo.dep(&q);
        let d = |n: &str| names(&q, dep[q.var_by_name(n).unwrap().index()]);
        assert!(d("A").is_empty());
        assert_eq!(d("B"), vec!["A"]);
        assert_eq!(d("C"), vec!["A"]);
        assert_eq!(d("D"), vec!["A", "C"]);
        assert!(vo.is_well_structured(&q));
        assert!(vo.validate(&q).is_empty());
    }

    #[test]
    fn chain_dep() {
        let q = q("Q(A,B,C) := R@d(A,B,C).");
        let vo = VariableOrder::new(&q, &order(&q, &[("A", None), ("B", Some("A")), ("C", Some("B"))])).unwrap();
        assert_eq!(names(&q, vo.dep(&q)[2]), vec!["A", "B"]);
    }

    #[test]
    fn atom_off_path() {
        let q = q("Q(A,B,C) := R@d(A,B), S@d(B,C).");
        let p = order(&q, &[("A", None), ("B", Some("A")), ("C", Some("A"))]);
        assert_eq!(
            validate_parents(&q, &p),
            vec![OrderViolation::AtomNotOnPath("S@d(B,C)".into())]
        );
        assert!(VariableOrder::new(&q, &p).is_err());
    }

    #[test]
    fn structural_violations() {
        let q = q("Q(A,B) := R@d(A,B).");
        let a = q.var_by_name("A").unwrap();
        let b = q.var_by_name("B").unwrap();
        assert!(validate_parents(&q, &[(a, Some(b)), (b, Some(a))])
            .iter()
            .any(|v| matches!(v, OrderViolation::Cycle(_))));
        assert_eq!(
            validate_parents(&q, &[(a, None)]),
            vec![OrderViolation::MissingVariable("B".into())]
        );
        assert!(validate_parents(&q, &[(a, None), (b, Some(a)), (b, None)])
            .contains(&OrderViolation::DuplicateVariable("B".into())));
    }

    #[test]
    fn well_structuredness() {
        let q1 = q("Q(A,B,C) := R@d(A,D), S@d(A,B), T@s(B,C).");
        let bad = order(
            &q1,
            &[("D", None), ("A", Some("D")), ("B", Some("A")), ("C", Some("B"))],
        );
        let vo = VariableOrder::new(&q1, &bad).unwrap();
        assert!(!vo.is_free_top(&q1));
        assert!(!vo.is_well_structured(&q1));

        let qc = q("Q(A,B,C) := R@d(A,B), S@s(A,C).");
        let vo = VariableOrder::new(&qc, &order(&qc, &[("A", None), ("C", Some("A")), ("B", Some("C"))])).unwrap();
        assert!(vo.is_free_top(&qc));
        assert!(!vo.is_canonical(&qc));
    }

    #[test]
    fn create_vo_for_rsyz_is_the_hand_order() {
        let q = rsyz();
        let vo = create_vo(&q).unwrap();
        assert_eq!(vo.parent_pairs(), rsyz_vo(&q).parent_pairs());
    }

    #[test]
    fn create_vo_all_dynamic() {
        let q = q("Q(A,B) := R@d(A,B), S@d(A,C).");
        let vo = create_vo(&q).unwrap();
        let a = q.var_by_name("A").unwrap();
        assert_eq!(vo.roots(), &[a]);
        assert!(vo.is_well_structured(&q));
    }

    #[test]
    fn create_vo_rejects_ill_behaved() {
        assert!(matches!(
            create_vo(&q("Q(A,B) := R@d(A), S@s(A,B), T@d(B).")),
            Err(Error::NotWellBehaved)
        ));
    }

    #[test]
    fn q2_order_is_a_chain() {
        let q2 = q("Q(A,C,D) := R@d(A,D), S@s(A,B), T@s(B,C), U@d(D).");
        let vo = create_vo(&q2).unwrap();
        let expect = order(
            &q2,
            &[("D", None), ("A", Some("D")), ("C", Some("A")), ("B", Some("C"))],
        );
        assert_eq!(vo.parent_pairs(), expect);
    }

    #[test]
    fn static_only_query_is_its_own_tree() {
        let q = q("Q(A,B) := R@s(A,B), S@s(B,C).");
        let vo = create_vo(&q).unwrap();
        assert!(vo.is_well_structured(&q));
        assert_eq!(vo.roots().len(), 1);
    }

    #[test]
    fn dot_marks_free_variables() {
        let q = rsyz();
        let dot = create_vo(&q).unwrap().to_dot(&q);
        assert!(dot.contains("<<u>A</u>>"));
        assert!(dot.contains("\"D\""));
        assert!(dot.contains("shape=box, color=blue, label=\"Z@s(C,D)\""));
    }
}
