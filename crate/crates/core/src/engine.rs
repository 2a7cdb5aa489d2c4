//! Maintenance of a safe view tree under single-tuple updates.
//!
//! Every view is stored in a [`RelationStore`]. An update enters at the
//! leaves of its relation and travels up the tree as a single tuple: a join
//! view probes each sibling for the projection of the tuple, a projection
//! view adjusts the support count of the projected tuple and passes the
//! change on only when the tuple appears or disappears. Enumeration walks
//! the free-only views below each root in preorder, each level fixing the
//! variables that are new at its view through a prefix index.

use std::sync::atomic::{AtomicU64, Ordering};

use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::data::{Database, Interner, Relations, Tuple, Value};
use crate::error::{Error, Result};
use crate::join::{generic_join_each, JoinInput};
use crate::parser::UpdateEvent;
use crate::query::{Query, Var};
use crate::rewrite::{check_safe, NodeId, ViewKind, ViewTree};
use crate::store::{IndexId, RelationStore};

#[derive(Clone, Debug, Default, Serialize, PartialEq, Eq)]
pub struct EngineStats {
    pub updates: u64,
    /// Updates that changed at least one leaf.
    pub effective_updates: u64,
    pub lookups_last: u64,
    pub lookups_max: u64,
    pub lookups_total: u64,
    pub enumerated: u64,
}

/// How a change to one child reaches its parent.
#[derive(Clone, Debug)]
struct UpLink {
    /// Positions in the child tuple of the parent's schema.
    to_parent: Vec<usize>,
    /// For each sibling: positions in the child tuple of its schema.
    probes: Vec<(NodeId, Vec<usize>)>,
}

#[derive(Clone, Debug)]
enum Level {
    /// Iterate the residuals of the group selected by bound variables; a
    /// root level has an empty key and iterates the whole view.
    Group {
        node: NodeId,
        index: IndexId,
        key: Vec<Var>,
        vars: Vec<Var>,
    },
    /// The tuple over bound variables must be in the view.
    Check { node: NodeId, vars: Vec<Var> },
}

pub struct Engine {
    query: Query,
    plan: ViewTree,
    interner: Interner,
    stores: Vec<RelationStore>,
    /// Static views whose contents were dropped after preprocessing.
    transient: Vec<bool>,
    up: Vec<Option<UpLink>>,
    leaves: FxHashMap<String, Vec<NodeId>>,
    levels: Vec<Level>,
    stats: EngineStats,
    enumerated: AtomicU64,
    epoch: u64,
}

fn positions(of: &[Var], within: &[Var]) -> Option<Vec<usize>> {
    of.iter().map(|v| within.iter().position(|w| w == v)).collect()
}

type Rows<'a> = Box<dyn Iterator<Item = &'a Tuple> + 'a>;

fn join_inputs<'a>(plan: &'a ViewTree, stores: &'a [RelationStore], id: NodeId) -> Vec<JoinInput<'a, Rows<'a>>> {
    plan.node(id)
        .children
        .iter()
        .map(|&c| JoinInput {
            vars: &plan.node(c).schema[..],
            tuples: Box::new(stores[c].iter().map(|(t, _)| t)) as Rows<'a>,
        })
        .collect()
}

impl Engine {
    /// Loads the leaves from `db` and computes every view bottom-up.
    pub fn materialize(q: &Query, plan: ViewTree, db: &Database) -> Result<Engine> {
        let violations = check_safe(&plan, q);
        if !violations.is_empty() {
            return Err(Error::UnsafePlan(format!("{violations:?}")));
        }
        db.check_against(q)?;
        let n = plan.nodes().len();
        // Static views that nothing reads after preprocessing: no dynamic
        // sibling probes them and no enumeration visits them. Their
        // contents are dropped once the parent is built, and such a join
        // below a projection is never stored at all.
        let mut transient: Vec<bool> = plan
            .nodes()
            .iter()
            .map(|v| !v.is_dynamic && v.parent.is_some() && !matches!(v.kind, ViewKind::Atom(_)))
            .collect();
        for v in plan.nodes() {
            if let (true, Some(p)) = (v.is_dynamic, v.parent) {
                for &s in &plan.node(p).children {
                    transient[s] = false;
                }
            }
        }
        for &id in plan.enumeration_subtrees().iter().flatten() {
            transient[id] = false;
        }
        let fused = |id: NodeId| {
            transient[id]
                && plan.node(id).kind == ViewKind::Join
                && plan
                    .node(id)
                    .parent
                    .is_some_and(|p| plan.node(p).kind == ViewKind::Projection)
        };

        let mut stores: Vec<RelationStore> = plan
            .nodes()
            .iter()
            .map(|v| RelationStore::new(v.schema.len()))
            .collect();
        let mut leaves: FxHashMap<String, Vec<NodeId>> = FxHashMap::default();
        for id in plan.postorder() {
            let node = plan.node(id);
            match node.kind {
                ViewKind::Atom(a) => {
                    let rel = &q.atom(a).relation;
                    leaves.entry(rel.clone()).or_default().push(id);
                    for t in db.tuples(rel) {
                        stores[id].insert(t.clone());
                    }
                }
                ViewKind::Join if fused(id) => {}
                ViewKind::Join => {
                    let mut out = RelationStore::new(node.schema.len());
                    generic_join_each(join_inputs(&plan, &stores, id), &node.schema, &mut |t| {
                        out.insert(t.iter().copied().collect());
                    });
                    stores[id] = out;
                }
                ViewKind::Projection => {
                    let c = node.children[0];
                    let cols = positions(&node.schema, &plan.node(c).schema).expect("checked safe");
                    let mut out = RelationStore::new(node.schema.len());
                    if fused(c) {
                        generic_join_each(join_inputs(&plan, &stores, c), &plan.node(c).schema, &mut |t| {
                            out.increment(cols.iter().map(|&k| t[k]).collect());
                        });
                    } else {
                        for (t, _) in stores[c].iter() {
                            out.increment(cols.iter().map(|&k| t[k]).collect());
                        }
                    }
                    stores[id] = out;
                }
            }
            if fused(id) {
                continue;
            }
            // A fused child was never stored; its own children were read
            // through it just now.
            let kids = node.children.iter().flat_map(|&c| {
                if fused(c) {
                    plan.node(c).children.clone()
                } else {
                    vec![c]
                }
            });
            for c in kids.collect::<Vec<_>>() {
                if transient[c] {
                    stores[c] = RelationStore::new(plan.node(c).schema.len());
                }
            }
        }

        let mut up = vec![None; n];
        for node in plan.nodes() {
            let Some(p) = node.parent else { continue };
            if !node.is_dynamic {
                continue;
            }
            let parent = plan.node(p);
            let to_parent = positions(&parent.schema, &node.schema).ok_or_else(|| {
                Error::UnsafePlan(format!("{} cannot pass single tuples to {}", node.name, parent.name))
            })?;
            let mut probes = Vec::new();
            for &s in &parent.children {
                if s != node.id {
                    let cols = positions(&plan.node(s).schema, &node.schema).ok_or_else(|| {
                        Error::UnsafePlan(format!("{} cannot probe sibling {}", node.name, plan.node(s).name))
                    })?;
                    probes.push((s, cols));
                }
            }
            up[node.id] = Some(UpLink { to_parent, probes });
        }

        let free = q.free();
        let mut levels = Vec::new();
        let mut fixed: Vec<Var> = Vec::new();
        for sub in plan.enumeration_subtrees() {
            for &id in sub {
                let node = plan.node(id);
                let new: Vec<Var> = node.schema.iter().copied().filter(|v| !fixed.contains(v)).collect();
                let key: Vec<Var> = node.schema.iter().copied().filter(|v| fixed.contains(v)).collect();
                if new.is_empty() {
                    levels.push(Level::Check {
                        node: id,
                        vars: node.schema.clone(),
                    });
                } else {
                    let key_cols = positions(&key, &node.schema).expect("key within schema");
                    let index = stores[id].add_index(key_cols);
                    let vars = stores[id]
                        .index_rest_cols(index)
                        .iter()
                        .map(|&c| node.schema[c])
                        .collect();
                    levels.push(Level::Group {
                        node: id,
                        index,
                        key,
                        vars,
                    });
                }
                fixed.extend(new);
            }
        }
        if q.head().iter().any(|v| !fixed.contains(v)) || !fixed.iter().all(|v| free.contains(v.index())) {
            return Err(Error::UnsafePlan(
                "free variables are not covered by enumeration views".into(),
            ));
        }

        Ok(Engine {
            query: q.clone(),
            plan,
            interner: db.interner.clone(),
            stores,
            transient,
            up,
            leaves,
            levels,
            stats: EngineStats::default(),
            enumerated: AtomicU64::new(0),
            epoch: 0,
        })
    }

    pub fn query(&self) -> &Query {
        &self.query
    }

    pub fn plan(&self) -> &ViewTree {
        &self.plan
    }

    pub fn interner(&self) -> &Interner {
        &self.interner
    }

    pub fn stats(&self) -> EngineStats {
        EngineStats {
            enumerated: self.enumerated.load(Ordering::Relaxed),
            ..self.stats.clone()
        }
    }

    /// Incremented by every update.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn store(&self, id: NodeId) -> &RelationStore {
        &self.stores[id]
    }

    pub fn view(&self, name: &str) -> Option<&RelationStore> {
        self.plan.by_name(name).map(|n| &self.stores[n.id])
    }

    /// Applies an insert or delete given as strings. Other events are
    /// ignored.
    pub fn apply(&mut self, ev: &UpdateEvent) -> Result<()> {
        match ev {
            UpdateEvent::Insert { relation, tuple } => {
                let t = self.interner.intern_tuple(tuple);
                self.apply_values(relation, &t, true)
            }
            UpdateEvent::Delete { relation, tuple } => {
                let t: Option<Tuple> = tuple.iter().map(|s| self.interner.get(s)).collect();
                match t {
                    Some(t) => self.apply_values(relation, &t, false),
                    None => {
                        self.check_update(relation, tuple.len())?;
                        self.count_noop();
                        Ok(())
                    }
                }
            }
            UpdateEvent::Enumerate | UpdateEvent::Checkpoint => Ok(()),
        }
    }

    fn check_update(&self, relation: &str, arity: usize) -> Result<()> {
        match self.query.relation_kind(relation) {
            None => Err(Error::UnknownRelation(relation.to_string())),
            Some((_, crate::query::AtomKind::Static)) => Err(Error::StaticUpdate(relation.to_string())),
            Some((a, _)) if a != arity => Err(Error::ArityMismatch {
                relation: relation.to_string(),
                expected: a,
                found: arity,
            }),
            Some(_) => Ok(()),
        }
    }

    fn count_noop(&mut self) {
        self.stats.updates += 1;
        self.stats.lookups_last = 0;
        self.epoch += 1;
    }

    /// Applies an insert (`insert = true`) or delete of an interned tuple.
    pub fn apply_values(&mut self, relation: &str, t: &[Value], insert: bool) -> Result<()> {
        self.check_update(relation, t.len())?;
        self.epoch += 1;
        self.stats.updates += 1;
        let mut lookups = 0u64;
        let leaves = self.leaves.get(relation).cloned().unwrap_or_default();
        let mut changed = false;
        for leaf in leaves {
            lookups += 1;
            let done = if insert {
                self.stores[leaf].insert(t.iter().copied().collect())
            } else {
                self.stores[leaf].remove(t)
            };
            if done {
                changed = true;
                lookups += self.propagate(leaf, t.iter().copied().collect(), insert);
            }
        }
        if changed {
            self.stats.effective_updates += 1;
        }
        self.stats.lookups_last = lookups;
        self.stats.lookups_total += lookups;
        self.stats.lookups_max = self.stats.lookups_max.max(lookups);
        Ok(())
    }

    /// Passes a change of `t` at `node` towards the root; returns the
    /// number of store operations performed.
    fn propagate(&mut self, mut node: NodeId, mut t: Tuple, insert: bool) -> u64 {
        let mut lookups = 0;
        while let Some(p) = self.plan.node(node).parent {
            let link = self.up[node].as_ref().expect("dynamic views have links");
            for (s, cols) in &link.probes {
                lookups += 1;
                let key: Tuple = cols.iter().map(|&c| t[c]).collect();
                if !self.stores[*s].contains(&key) {
                    return lookups;
                }
            }
            let pt: Tuple = link.to_parent.iter().map(|&c| t[c]).collect();
            lookups += 1;
            let passed = match (self.plan.node(p).kind, insert) {
                (ViewKind::Projection, true) => self.stores[p].increment(pt.clone()),
                (ViewKind::Projection, false) => self.stores[p].decrement(&pt),
                (_, true) => self.stores[p].insert(pt.clone()),
                (_, false) => self.stores[p].remove(&pt),
            };
            if !passed {
                return lookups;
            }
            node = p;
            t = pt;
        }
        lookups
    }

    /// Distinct result tuples over the head variables in head order.
    pub fn enumerate(&self) -> Enumerator<'_> {
        let empty_root = self.plan.roots().iter().any(|&r| self.stores[r].is_empty());
        Enumerator {
            engine: self,
            depth: 0,
            pos: Vec::new(),
            binding: Vec::new(),
            done: empty_root,
            started: false,
        }
    }

    /// Result tuples collected and sorted.
    pub fn result(&self) -> Vec<Tuple> {
        let mut v: Vec<Tuple> = self.enumerate().collect();
        v.sort_unstable();
        v
    }

    /// Sorted contents of the view called `name`; dropped views are
    /// recomputed.
    pub fn view_tuples(&self, name: &str) -> Option<Vec<Tuple>> {
        let id = self.plan.by_name(name)?.id;
        Some(self.contents(id).into_iter().map(|(t, _)| t).collect())
    }

    /// Whether the contents of view `id` were dropped after
    /// preprocessing.
    pub fn is_transient(&self, id: NodeId) -> bool {
        self.transient[id]
    }

    /// Contents of `id` with counts, recomputed for transient views.
    fn contents(&self, id: NodeId) -> Vec<(Tuple, u32)> {
        if self.transient[id] {
            self.recompute(id)
        } else {
            self.stores[id].sorted_with_counts()
        }
    }

    /// Contents of `id` derived from its children.
    fn recompute(&self, id: NodeId) -> Vec<(Tuple, u32)> {
        let node = self.plan.node(id);
        match node.kind {
            ViewKind::Atom(_) => self.stores[id].sorted_with_counts(),
            ViewKind::Join => {
                let kids: Vec<Vec<Tuple>> = node
                    .children
                    .iter()
                    .map(|&c| self.contents(c).into_iter().map(|(t, _)| t).collect())
                    .collect();
                let inputs = node
                    .children
                    .iter()
                    .zip(&kids)
                    .map(|(&c, rows)| JoinInput {
                        vars: &self.plan.node(c).schema[..],
                        tuples: rows.iter(),
                    })
                    .collect();
                let mut rows: Vec<(Tuple, u32)> = Vec::new();
                generic_join_each(inputs, &node.schema, &mut |t| {
                    rows.push((t.iter().copied().collect(), 1))
                });
                rows.sort_unstable();
                rows
            }
            ViewKind::Projection => {
                let c = node.children[0];
                let cols = positions(&node.schema, &self.plan.node(c).schema).expect("checked safe");
                let mut counts: std::collections::BTreeMap<Tuple, u32> = Default::default();
                for (t, _) in self.contents(c) {
                    *counts.entry(cols.iter().map(|&k| t[k]).collect()).or_default() += 1;
                }
                counts.into_iter().collect()
            }
        }
    }

    /// Recomputes every stored view from its children and compares
    /// contents and support counts; also checks all indexes.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for node in self.plan.nodes() {
            if self.transient[node.id] {
                if !self.stores[node.id].is_empty() {
                    return Err(format!("{}: dropped view holds tuples", node.name));
                }
                continue;
            }
            let st = &self.stores[node.id];
            if !st.indexes_consistent() {
                return Err(format!("{}: index out of sync", node.name));
            }
            if st.sorted_with_counts() != self.recompute(node.id) {
                return Err(format!("{}: contents differ from recomputation", node.name));
            }
        }
        Ok(())
    }
}

/// Iterator over the result. Holds the engine borrowed, so no update can
/// interleave with an enumeration.
pub struct Enumerator<'a> {
    engine: &'a Engine,
    depth: usize,
    pos: Vec<usize>,
    binding: Vec<Value>,
    done: bool,
    started: bool,
}

impl Enumerator<'_> {
    /// Tries to place level `d` at its candidate `i` or later; binds its
    /// variables and returns true on success.
    fn advance(&mut self, d: usize) -> bool {
        let e = self.engine;
        let i = self.pos[d];
        match &e.levels[d] {
            Level::Group { node, index, key, vars } => {
                let k: Tuple = key.iter().map(|v| self.binding[v.index()]).collect();
                let Some(group) = e.stores[*node].lookup(*index, &k) else {
                    return false;
                };
                let Some(t) = group.get(i) else { return false };
                for (v, &x) in vars.iter().zip(t.iter()) {
                    self.binding[v.index()] = x;
                }
                true
            }
            Level::Check { node, vars } => {
                if i > 0 {
                    return false;
                }
                let t: Tuple = vars.iter().map(|v| self.binding[v.index()]).collect();
                e.stores[*node].contains(&t)
            }
        }
    }
}

impl Iterator for Enumerator<'_> {
    type Item = Tuple;

    fn next(&mut self) -> Option<Tuple> {
        if self.done {
            return None;
        }
        let n = self.engine.levels.len();
        if !self.started {
            self.started = true;
            self.pos = vec![0; n];
            self.binding = vec![0; self.engine.query.num_var_ids()];
            self.depth = 0;
        } else if n == 0 {
            self.done = true;
            return None;
        } else {
            self.depth = n - 1;
            self.pos[self.depth] += 1;
        }
        loop {
            if self.depth == n {
                self.engine.enumerated.fetch_add(1, Ordering::Relaxed);
                let b = &self.binding;
                return Some(self.engine.query.head().iter().map(|v| b[v.index()]).collect());
            }
            if self.advance(self.depth) {
                self.depth += 1;
                if self.depth < n {
                    self.pos[self.depth] = 0;
                }
            } else if self.depth == 0 {
                self.done = true;
                return None;
            } else {
                self.depth -= 1;
                self.pos[self.depth] += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewrite::{rewrite, ViewTreeBuilder};
    use crate::vo::create_vo;

    fn rsyz() -> Query {
        Query::parse("Q(A,B) := R@d(A,B), S@d(A,C), Y@s(A,D), Z@s(C,D).").unwrap()
    }

    #[test]
    fn rsyz_hand_example() {
        let q = rsyz();
        let mut db = Database::new();
        db.insert_str("R", &["a1", "b1"]);
        db.insert_str("S", &["a1", "c1"]);
        db.insert_str("Y", &["a1", "d1"]);
        db.insert_str("Z", &["c1", "d1"]);
        let plan = rewrite(&q, &create_vo(&q).unwrap());
        let mut e = Engine::materialize(&q, plan, &db).unwrap();
        let r = e.result();
        assert_eq!(r.len(), 1);
        assert_eq!(e.interner().resolve_tuple(&r[0]), vec!["a1", "b1"]);
        e.apply(&UpdateEvent::Delete {
            relation: "S".into(),
            tuple: vec!["a1".into(), "c1".into()],
        })
        .unwrap();
        assert!(e.result().is_empty());
        e.check_invariants().unwrap();
    }

    #[test]
    fn empty_database() {
        let q = rsyz();
        let plan = rewrite(&q, &create_vo(&q).unwrap());
        let e = Engine::materialize(&q, plan, &Database::new()).unwrap();
        assert!(e.plan().nodes().iter().all(|n| e.store(n.id).is_empty()));
        assert_eq!(e.enumerate().count(), 0);
    }

    fn third_rewriting_plan(q: &Query) -> ViewTree {
        // Q(A,D) := R(A,D), S(A,B), T(B,C), U(D)
        let mut b = ViewTreeBuilder::new(q);
        let (r, s, t, u) = (b.atom(0), b.atom(1), b.atom(2), b.atom(3));
        let a = q.var_by_name("A").unwrap();
        let c = q.var_by_name("C").unwrap();
        let d = q.var_by_name("D").unwrap();
        let st = b.join("V_ST", vec![s, t]);
        let st1 = b.project("V'_ST", st, vec![a, c]);
        let st2 = b.project("V''_ST", st1, vec![a]);
        let rst = b.join("V_RST", vec![r, st2]);
        let rst1 = b.project("V'_RST", rst, vec![d]);
        let root = b.join("V_D", vec![rst1, u]);
        b.finish(vec![root])
    }

    #[test]
    fn hand_built_rewriting() {
        let q = Query::parse("Q(D) := R@d(A,D), S@s(A,B), T@s(B,C), U@d(D).").unwrap();
        let mut db = Database::new();
        db.insert_str("S", &["a1", "b1"]);
        db.insert_str("T", &["b1", "c1"]);
        let mut e = Engine::materialize(&q, third_rewriting_plan(&q), &db).unwrap();
        let names = |view: &str| -> Vec<Vec<String>> {
            e.view_tuples(view)
                .unwrap()
                .iter()
                .map(|t| e.interner().resolve_tuple(t))
                .collect()
        };
        assert_eq!(names("V_ST"), vec![vec!["a1", "b1", "c1"]]);
        assert_eq!(names("V'_ST"), vec![vec!["a1", "c1"]]);
        assert_eq!(names("V''_ST"), vec![vec!["a1"]]);
        assert!(e.view("V''_ST").unwrap().len() == 1);
        let ins = |rel: &str, v: &[&str]| UpdateEvent::Insert {
            relation: rel.into(),
            tuple: v.iter().map(|s| s.to_string()).collect(),
        };
        e.apply(&ins("R", &["a1", "d1"])).unwrap();
        assert_eq!(e.view("V_RST").unwrap().len(), 1);
        assert!(e.result().is_empty());
        e.apply(&ins("U", &["d1"])).unwrap();
        assert_eq!(e.result().len(), 1);
        e.apply(&ins("R", &["a2", "d1"])).unwrap();
        assert_eq!(e.view("V_RST").unwrap().len(), 1);
        e.check_invariants().unwrap();
    }

    #[test]
    fn unsafe_plan_is_rejected() {
        let q = Query::parse("Q(D) := R@d(A,D), S@s(A,B), T@s(B,C), U@d(D).").unwrap();
        let mut b = ViewTreeBuilder::new(&q);
        let (r, s, t, u) = (b.atom(0), b.atom(1), b.atom(2), b.atom(3));
        let st = b.join("V_ST", vec![s, t]);
        let rst = b.join("V_RST", vec![r, st]);
        let root = b.join("V_D", vec![rst, u]);
        let plan = b.finish(vec![root]);
        assert!(matches!(
            Engine::materialize(&q, plan, &Database::new()),
            Err(Error::UnsafePlan(_))
        ));
    }

    #[test]
    fn static_update_is_rejected() {
        let q = rsyz();
        let plan = rewrite(&q, &create_vo(&q).unwrap());
        let mut e = Engine::materialize(&q, plan, &Database::new()).unwrap();
        assert!(matches!(
            e.apply_values("Y", &[0, 0], true),
            Err(Error::StaticUpdate(_))
        ));
        assert!(matches!(
            e.apply_values("W", &[0], true),
            Err(Error::UnknownRelation(_))
        ));
    }
}
