//! Conjunctive queries with static and dynamic atoms.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::set::{AtomSet, VarSet, MAX_IDS};

/// A query variable, an index into the query's name table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Var(pub u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum AtomKind {
    Static,
    Dynamic,
}

impl AtomKind {
    pub fn adornment(self) -> char {
        match self {
            AtomKind::Static => 's',
            AtomKind::Dynamic => 'd',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Atom {
    pub relation: String,
    pub vars: Vec<Var>,
    pub kind: AtomKind,
    set: VarSet,
}

impl Atom {
    pub fn var_set(&self) -> VarSet {
        self.set
    }

    pub fn is_dynamic(&self) -> bool {
        self.kind == AtomKind::Dynamic
    }

    pub fn arity(&self) -> usize {
        self.vars.len()
    }
}

/// A conjunctive query `Q(head) := body`.
///
/// Variable identifiers are stable across sub-queries derived with
/// [`Query::restrict`], so sets computed on a sub-query can be compared
/// with sets of the original.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    name: String,
    head: Vec<Var>,
    body: Vec<Atom>,
    names: Vec<String>,
    allow_repeats: bool,
}

/// A connected component of the static atoms after dropping the
/// variables that occur in dynamic atoms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StaticPart {
    pub atoms: AtomSet,
    pub vars: VarSet,
    /// Variables shared with the dynamic atoms.
    pub interface: VarSet,
    pub free: VarSet,
}

impl Query {
    /// Builds a query from named parts, interning variables by first
    /// occurrence (head first, then body).
    pub fn new<S: AsRef<str>>(
        name: &str,
        head: &[S],
        body: &[(&str, AtomKind, &[S])],
        allow_repeats: bool,
    ) -> Result<Query> {
        let mut names: Vec<String> = Vec::new();
        let mut ids: HashMap<String, Var> = HashMap::new();
        let mut intern = |n: &str, names: &mut Vec<String>| -> Var {
            *ids.entry(n.to_string()).or_insert_with(|| {
                names.push(n.to_string());
                Var(names.len() as u32 - 1)
            })
        };
        let head_vars: Vec<Var> = head.iter().map(|v| intern(v.as_ref(), &mut names)).collect();
        let atoms: Vec<(String, AtomKind, Vec<Var>)> = body
            .iter()
            .map(|(r, k, vs)| {
                let vars = vs.iter().map(|v| intern(v.as_ref(), &mut names)).collect();
                (r.to_string(), *k, vars)
            })
            .collect();
        Query::from_parts(name.to_string(), head_vars, atoms, names, allow_repeats)
    }

    /// Builds and validates a query over an explicit name table.
    pub fn from_parts(
        name: String,
        head: Vec<Var>,
        body: Vec<(String, AtomKind, Vec<Var>)>,
        names: Vec<String>,
        allow_repeats: bool,
    ) -> Result<Query> {
        let invalid = |m: String| Err(Error::InvalidQuery(m));
        if names.len() > MAX_IDS {
            return invalid(format!("at most {MAX_IDS} variables are supported"));
        }
        if body.is_empty() {
            return invalid("the body has no atoms".into());
        }
        if body.len() > MAX_IDS {
            return invalid(format!("at most {MAX_IDS} atoms are supported"));
        }
        let mut atoms = Vec::with_capacity(body.len());
        let mut schema: HashMap<&str, (usize, AtomKind)> = HashMap::new();
        for (relation, kind, vars) in &body {
            if vars.is_empty() {
                return invalid(format!("atom `{relation}` has no variables"));
            }
            let mut set = VarSet::EMPTY;
            for v in vars {
                if v.index() >= names.len() {
                    return invalid(format!("variable id {} out of range", v.0));
                }
                if set.contains(v.index()) {
                    return invalid(format!(
                        "variable `{}` occurs twice in atom `{relation}`",
                        names[v.index()]
                    ));
                }
                set.insert(v.index());
            }
            match schema.get(relation.as_str()) {
                Some(_) if !allow_repeats => {
                    return invalid(format!("relation `{relation}` occurs more than once"));
                }
                Some(&(arity, k)) if arity != vars.len() || k != *kind => {
                    return invalid(format!("relation `{relation}` is used inconsistently"));
                }
                _ => {
                    schema.insert(relation, (vars.len(), *kind));
                }
            }
            atoms.push(Atom {
                relation: relation.clone(),
                vars: vars.clone(),
                kind: *kind,
                set,
            });
        }
        let body_vars = atoms.iter().fold(VarSet::EMPTY, |s, a| s.union(a.set));
        let mut seen = VarSet::EMPTY;
        for v in &head {
            if !body_vars.contains(v.index()) {
                return invalid(format!(
                    "head variable `{}` does not occur in the body",
                    names.get(v.index()).map_or("?", |s| s.as_str())
                ));
            }
            if seen.contains(v.index()) {
                return invalid(format!("head variable `{}` is repeated", names[v.index()]));
            }
            seen.insert(v.index());
        }
        Ok(Query {
            name,
            head,
            body: atoms,
            names,
            allow_repeats,
        })
    }

    pub fn parse(text: &str) -> Result<Query> {
        crate::parser::parse_query(text)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn head(&self) -> &[Var] {
        &self.head
    }

    pub fn body(&self) -> &[Atom] {
        &self.body
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.body[i]
    }

    pub fn allow_repeats(&self) -> bool {
        self.allow_repeats
    }

    /// Size of the name table; every `Var` index is below this.
    pub fn num_var_ids(&self) -> usize {
        self.names.len()
    }

    pub fn var_name(&self, v: Var) -> &str {
        &self.names[v.index()]
    }

    pub fn var_by_name(&self, name: &str) -> Option<Var> {
        self.names.iter().position(|n| n == name).map(|i| Var(i as u32))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn vars(&self) -> VarSet {
        self.body.iter().fold(VarSet::EMPTY, |s, a| s.union(a.set))
    }

    pub fn free(&self) -> VarSet {
        self.head.iter().map(|v| v.index()).collect()
    }

    pub fn bound(&self) -> VarSet {
        self.vars().minus(self.free())
    }

    pub fn all_atoms(&self) -> AtomSet {
        AtomSet::full(self.body.len())
    }

    pub fn dynamic_atoms(&self) -> AtomSet {
        self.body
            .iter()
            .enumerate()
            .filter(|(_, a)| a.is_dynamic())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn static_atoms(&self) -> AtomSet {
        self.all_atoms().minus(self.dynamic_atoms())
    }

    pub fn vars_of(&self, atoms: AtomSet) -> VarSet {
        atoms.iter().fold(VarSet::EMPTY, |s, i| s.union(self.body[i].set))
    }

    pub fn dynamic_vars(&self) -> VarSet {
        self.vars_of(self.dynamic_atoms())
    }

    pub fn static_vars(&self) -> VarSet {
        self.vars_of(self.static_atoms())
    }

    /// Atoms (by index) containing `v`.
    pub fn atoms_of(&self, v: usize) -> AtomSet {
        self.body
            .iter()
            .enumerate()
            .filter(|(_, a)| a.set.contains(v))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn has_repeats(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.body.iter().any(|a| !seen.insert(a.relation.as_str()))
    }

    /// Distinct relations with arity and kind, in order of first use.
    pub fn relations(&self) -> Vec<(&str, usize, AtomKind)> {
        let mut out: Vec<(&str, usize, AtomKind)> = Vec::new();
        for a in &self.body {
            if !out.iter().any(|(r, _, _)| *r == a.relation) {
                out.push((&a.relation, a.arity(), a.kind));
            }
        }
        out
    }

    pub fn relation_kind(&self, relation: &str) -> Option<(usize, AtomKind)> {
        self.body
            .iter()
            .find(|a| a.relation == relation)
            .map(|a| (a.arity(), a.kind))
    }

    /// Neighbours of `v` in the Gaifman graph.
    pub fn neighbors(&self, v: usize) -> VarSet {
        let mut n = VarSet::EMPTY;
        for a in &self.body {
            if a.set.contains(v) {
                n = n.union(a.set);
            }
        }
        n.minus(VarSet::singleton(v))
    }

    /// Is there a path from `from` to `to` in the Gaifman graph that avoids
    /// `forbidden`? Endpoints inside `forbidden` are never reachable.
    pub fn exists_path_avoiding(&self, from: Var, to: Var, forbidden: VarSet) -> Result<bool> {
        let vars = self.vars();
        for v in [from, to] {
            if !vars.contains(v.index()) {
                return Err(Error::InvalidQuery(format!(
                    "`{}` is not a variable of {}",
                    self.names.get(v.index()).map_or("?", |s| s.as_str()),
                    self.name
                )));
            }
        }
        Ok(self
            .shortest_path(
                VarSet::singleton(from.index()),
                VarSet::singleton(to.index()),
                forbidden,
            )
            .is_some())
    }

    /// Breadth-first search from any variable of `from` to any of `to`,
    /// never entering `forbidden`. Sources are tried in id order and
    /// neighbours are expanded in id order, so the path is deterministic.
    pub fn shortest_path(&self, from: VarSet, to: VarSet, forbidden: VarSet) -> Option<Vec<Var>> {
        let from = from.minus(forbidden);
        let to = to.minus(forbidden);
        if from.is_empty() || to.is_empty() {
            return None;
        }
        let mut parent: Vec<Option<usize>> = vec![None; self.names.len()];
        let mut seen = from;
        let mut queue: VecDeque<usize> = from.iter().collect();
        while let Some(v) = queue.pop_front() {
            if to.contains(v) {
                let mut path = vec![Var(v as u32)];
                let mut cur = v;
                while let Some(p) = parent[cur] {
                    path.push(Var(p as u32));
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            for w in self.neighbors(v).minus(forbidden).minus(seen) {
                seen.insert(w);
                parent[w] = Some(v);
                queue.push_back(w);
            }
        }
        None
    }

    /// Connected components of the Gaifman graph induced on `vars`, where
    /// two variables are adjacent if some atom contains both.
    pub fn var_components(&self, vars: VarSet) -> Vec<VarSet> {
        let mut out = Vec::new();
        let mut left = vars;
        while let Some(start) = left.first() {
            let mut comp = VarSet::singleton(start);
            let mut frontier = comp;
            while !frontier.is_empty() {
                let mut next = VarSet::EMPTY;
                for v in frontier {
                    next = next.union(self.neighbors(v).intersect(vars));
                }
                frontier = next.minus(comp);
                comp = comp.union(next);
            }
            left = left.minus(comp);
            out.push(comp);
        }
        out
    }

    /// Connected components of `atoms`, where two atoms are connected if
    /// they share a variable of `via`. Ordered by smallest atom index.
    pub fn atom_components(&self, atoms: AtomSet, via: VarSet) -> Vec<AtomSet> {
        let mut out = Vec::new();
        let mut left = atoms;
        while let Some(start) = left.first() {
            let mut comp = AtomSet::singleton(start);
            let mut reach = self.body[start].set.intersect(via);
            loop {
                let grow: AtomSet = left
                    .minus(comp)
                    .iter()
                    .filter(|&i| self.body[i].set.intersects(reach))
                    .collect();
                if grow.is_empty() {
                    break;
                }
                comp = comp.union(grow);
                reach = reach.union(self.vars_of(grow).intersect(via));
            }
            left = left.minus(comp);
            out.push(comp);
        }
        out
    }

    /// Components of the query (atoms connected through shared variables).
    pub fn components(&self) -> Vec<AtomSet> {
        self.atom_components(self.all_atoms(), self.vars())
    }

    /// The sub-query over `atoms`. Head variables are the original head
    /// variables that still occur, in head order.
    pub fn restrict(&self, name: &str, atoms: AtomSet) -> Query {
        let vars = self.vars_of(atoms);
        let head = self.head.iter().copied().filter(|v| vars.contains(v.index())).collect();
        self.restrict_with_head(name, atoms, head)
    }

    pub fn restrict_with_head(&self, name: &str, atoms: AtomSet, head: Vec<Var>) -> Query {
        Query {
            name: name.to_string(),
            head,
            body: atoms.iter().map(|i| self.body[i].clone()).collect(),
            names: self.names.clone(),
            allow_repeats: self.allow_repeats,
        }
    }

    pub fn dynamic_subquery(&self) -> Query {
        self.restrict(&format!("{}_dyn", self.name), self.dynamic_atoms())
    }

    pub fn static_subquery(&self) -> Query {
        self.restrict(&format!("{}_stat", self.name), self.static_atoms())
    }

    /// Connected components of the static atoms once the variables of
    /// dynamic atoms are removed. A static atom all of whose variables are
    /// dynamic forms a part on its own.
    pub fn static_parts(&self) -> Vec<StaticPart> {
        let dyn_vars = self.dynamic_vars();
        let free = self.free();
        let via = self.vars().minus(dyn_vars);
        self.atom_components(self.static_atoms(), via)
            .into_iter()
            .map(|atoms| {
                let vars = self.vars_of(atoms);
                StaticPart {
                    atoms,
                    vars,
                    interface: vars.intersect(dyn_vars),
                    free: vars.intersect(free),
                }
            })
            .collect()
    }

    pub fn names_of(&self, vars: VarSet) -> Vec<&str> {
        vars.iter().map(|v| self.names[v].as_str()).collect()
    }

    pub fn fmt_atom(&self, a: &Atom) -> String {
        let vars: Vec<&str> = a.vars.iter().map(|v| self.var_name(*v)).collect();
        format!("{}@{}({})", a.relation, a.kind.adornment(), vars.join(","))
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head: Vec<&str> = self.head.iter().map(|v| self.var_name(*v)).collect();
        let body: Vec<String> = self.body.iter().map(|a| self.fmt_atom(a)).collect();
        write!(f, "{}({}) := {}.", self.name, head.join(","), body.join(", "))
    }
}
