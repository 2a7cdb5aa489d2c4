//! Transition systems for queries whose dynamic variables all occur in
//! static atoms but that are not well-behaved.
//!
//! Only dynamic facts that join with the static data can ever contribute,
//! and there are finitely many of them: the maximal dynamic database.
//! Each subset of it is a state carrying the query result over the static
//! data plus that subset, so an update is a move between states and the
//! result is always materialized.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use fixedbitset::FixedBitSet;
use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::classify::{classify, Class};
use crate::data::{Database, Interner, Relations, Tuple, Value};
use crate::error::{Error, Result};
use crate::join;
use crate::par::{self, Parallelism};
use crate::parser::UpdateEvent;
use crate::query::{AtomKind, Query};

pub type StateId = u32;

pub const DEFAULT_EAGER_CAP: usize = 20;

/// The eager cap, overridable through `MIXIVM_EAGER_CAP`.
pub fn eager_cap() -> usize {
    std::env::var("MIXIVM_EAGER_CAP")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_EAGER_CAP)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TransitionMode {
    /// Build all states and transitions up front.
    Eager,
    /// Build states on first visit.
    Lazy,
    /// Eager when the maximal dynamic database is within the cap, lazy
    /// otherwise.
    Auto,
}

/// Dynamic facts that can join with the static data, in a fixed order.
#[derive(Clone, Debug, Default)]
pub struct MaxDynamicDatabase {
    facts: Vec<(String, Tuple)>,
    position: FxHashMap<String, FxHashMap<Tuple, usize>>,
}

impl MaxDynamicDatabase {
    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn facts(&self) -> &[(String, Tuple)] {
        &self.facts
    }

    pub fn position(&self, relation: &str, t: &[Value]) -> Option<usize> {
        self.position.get(relation)?.get(t).copied()
    }

    /// Facts of `relation`, sorted.
    pub fn relation(&self, relation: &str) -> Vec<Tuple> {
        let mut v: Vec<Tuple> = self
            .facts
            .iter()
            .filter(|(r, _)| r == relation)
            .map(|(_, t)| t.clone())
            .collect();
        v.sort_unstable();
        v
    }

    fn push(&mut self, relation: &str, t: Tuple) {
        let map = self.position.entry(relation.to_string()).or_default();
        if !map.contains_key(&t) {
            map.insert(t.clone(), self.facts.len());
            self.facts.push((relation.to_string(), t));
        }
    }
}

fn require_exp(q: &Query) -> Result<()> {
    let class = classify(q).class;
    if class != Class::Exp {
        return Err(Error::WrongClass {
            class: class.to_string(),
            needed: "C_exp without C_poly",
        });
    }
    Ok(())
}

/// For each dynamic atom `R(X)`: the result of all static atoms with free
/// variables `X`, collected per relation.
pub fn max_dynamic_database(q: &Query, db: &Database) -> Result<MaxDynamicDatabase> {
    require_exp(q)?;
    Ok(max_dynamic_database_unchecked(q, db))
}

fn max_dynamic_database_unchecked(q: &Query, db: &Database) -> MaxDynamicDatabase {
    let mut out = MaxDynamicDatabase::default();
    for i in q.dynamic_atoms().iter() {
        let atom = q.atom(i);
        let sub = q.restrict_with_head(&format!("Q_{}", atom.relation), q.static_atoms(), atom.vars.clone());
        for t in join::evaluate(&sub, db) {
            out.push(&atom.relation, t);
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct TransitionState {
    pub subset: FixedBitSet,
    /// Sorted, duplicate-free result over the head variables.
    pub result: Vec<Tuple>,
}

#[derive(Clone, Copy, Debug)]
pub struct TransitionConfig {
    pub mode: TransitionMode,
    pub eager_cap: usize,
    pub parallelism: Parallelism,
}

impl Default for TransitionConfig {
    fn default() -> Self {
        TransitionConfig {
            mode: TransitionMode::Auto,
            eager_cap: eager_cap(),
            parallelism: Parallelism::default(),
        }
    }
}

struct Overlay<'a> {
    base: &'a Database,
    dynamic: BTreeMap<&'a str, Vec<Tuple>>,
}

impl Relations for Overlay<'_> {
    fn tuples(&self, relation: &str) -> &[Tuple] {
        match self.dynamic.get(relation) {
            Some(v) => v,
            None => self.base.tuples(relation),
        }
    }
}

pub struct TransitionSystem {
    query: Query,
    statics: Database,
    interner: Interner,
    dmax: MaxDynamicDatabase,
    mode: TransitionMode,
    states: Vec<TransitionState>,
    index: FxHashMap<FixedBitSet, StateId>,
    /// Per state and fact position: the state reached by flipping it.
    transitions: Vec<Vec<Option<StateId>>>,
    initial: StateId,
}

impl TransitionSystem {
    pub fn build(q: &Query, db: &Database, mode: TransitionMode) -> Result<TransitionSystem> {
        Self::build_with(
            q,
            db,
            &TransitionConfig {
                mode,
                ..Default::default()
            },
        )
    }

    pub fn build_with(q: &Query, db: &Database, cfg: &TransitionConfig) -> Result<TransitionSystem> {
        require_exp(q)?;
        db.check_against(q)?;
        let mut statics = Database::new();
        statics.interner = db.interner.clone();
        for i in q.static_atoms().iter() {
            let rel = &q.atom(i).relation;
            statics.set(rel, db.tuples(rel).to_vec());
        }
        let dmax = max_dynamic_database_unchecked(q, &statics);
        let p = dmax.len();
        let mode = match cfg.mode {
            TransitionMode::Auto if p <= cfg.eager_cap => TransitionMode::Eager,
            TransitionMode::Auto => TransitionMode::Lazy,
            TransitionMode::Eager if p > cfg.eager_cap => {
                return Err(Error::EagerCapExceeded { p, cap: cfg.eager_cap });
            }
            m => m,
        };
        let mut initial_set = FixedBitSet::with_capacity(p);
        for (j, (rel, t)) in dmax.facts().iter().enumerate() {
            if db.tuples(rel).binary_search(t).is_ok() {
                initial_set.insert(j);
            }
        }
        let mut ts = TransitionSystem {
            query: q.clone(),
            interner: db.interner.clone(),
            statics,
            dmax,
            mode,
            states: Vec::new(),
            index: FxHashMap::default(),
            transitions: Vec::new(),
            initial: 0,
        };
        match mode {
            TransitionMode::Eager => {
                let n = 1usize << p;
                let states = par::map_range(cfg.parallelism, n, |i| {
                    let mut s = FixedBitSet::with_capacity(p);
                    for j in 0..p {
                        if i >> j & 1 == 1 {
                            s.insert(j);
                        }
                    }
                    let result = ts.evaluate(&s);
                    TransitionState { subset: s, result }
                });
                for (i, st) in states.iter().enumerate() {
                    ts.index.insert(st.subset.clone(), i as StateId);
                }
                let index = &ts.index;
                ts.transitions = par::map(cfg.parallelism, &states, |st| {
                    (0..p)
                        .map(|j| {
                            let mut s = st.subset.clone();
                            s.toggle(j);
                            Some(index[&s])
                        })
                        .collect()
                });
                ts.states = states;
                ts.initial = ts.index[&initial_set];
            }
            _ => {
                ts.initial = ts.intern_state(initial_set);
            }
        }
        Ok(ts)
    }

    fn evaluate(&self, subset: &FixedBitSet) -> Vec<Tuple> {
        let mut dynamic: BTreeMap<&str, Vec<Tuple>> = BTreeMap::new();
        for i in self.query.dynamic_atoms().iter() {
            dynamic.entry(self.query.atom(i).relation.as_str()).or_default();
        }
        for j in subset.ones() {
            let (rel, t) = &self.dmax.facts[j];
            dynamic.get_mut(rel.as_str()).expect("dynamic relation").push(t.clone());
        }
        for v in dynamic.values_mut() {
            v.sort_unstable();
        }
        join::evaluate(
            &self.query,
            &Overlay {
                base: &self.statics,
                dynamic,
            },
        )
    }

    fn intern_state(&mut self, subset: FixedBitSet) -> StateId {
        if let Some(&id) = self.index.get(&subset) {
            return id;
        }
        let result = self.evaluate(&subset);
        let id = self.states.len() as StateId;
        self.index.insert(subset.clone(), id);
        self.states.push(TransitionState { subset, result });
        self.transitions.push(vec![None; self.dmax.len()]);
        id
    }

    pub fn query(&self) -> &Query {
        &self.query
    }

    pub fn interner(&self) -> &Interner {
        &self.interner
    }

    /// The mode in effect after resolving [`TransitionMode::Auto`].
    pub fn mode(&self) -> TransitionMode {
        self.mode
    }

    pub fn max_dynamic_database(&self) -> &MaxDynamicDatabase {
        &self.dmax
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, id: StateId) -> &TransitionState {
        &self.states[id as usize]
    }

    pub fn state_of(&self, subset: &FixedBitSet) -> Option<StateId> {
        self.index.get(subset).copied()
    }

    /// Facts of the subset of `id`.
    pub fn subset_facts(&self, id: StateId) -> Vec<&(String, Tuple)> {
        self.state(id).subset.ones().map(|j| &self.dmax.facts[j]).collect()
    }

    pub fn result(&self, id: StateId) -> &[Tuple] {
        &self.state(id).result
    }

    pub fn enumerate(&self, id: StateId) -> std::slice::Iter<'_, Tuple> {
        self.state(id).result.iter()
    }

    fn check_update(&self, relation: &str, arity: usize) -> Result<()> {
        match self.query.relation_kind(relation) {
            None => Err(Error::UnknownRelation(relation.to_string())),
            Some((_, AtomKind::Static)) => Err(Error::StaticUpdate(relation.to_string())),
            Some((a, _)) if a != arity => Err(Error::ArityMismatch {
                relation: relation.to_string(),
                expected: a,
                found: arity,
            }),
            Some(_) => Ok(()),
        }
    }

    /// The state after an update given as strings; other events keep the
    /// state.
    pub fn apply_update(&mut self, current: StateId, ev: &UpdateEvent) -> Result<StateId> {
        let (relation, tuple, insert) = match ev {
            UpdateEvent::Insert { relation, tuple } => (relation, tuple, true),
            UpdateEvent::Delete { relation, tuple } => (relation, tuple, false),
            _ => return Ok(current),
        };
        self.check_update(relation, tuple.len())?;
        let t: Option<Tuple> = tuple.iter().map(|s| self.interner.get(s)).collect();
        match t {
            Some(t) => self.apply_values(current, relation, &t, insert),
            None => Ok(current),
        }
    }

    /// The state after inserting or deleting an interned fact.
    pub fn apply_values(&mut self, current: StateId, relation: &str, t: &[Value], insert: bool) -> Result<StateId> {
        self.check_update(relation, t.len())?;
        let Some(j) = self.dmax.position(relation, t) else {
            return Ok(current);
        };
        if self.states[current as usize].subset.contains(j) == insert {
            return Ok(current);
        }
        if let Some(next) = self.transitions[current as usize][j] {
            return Ok(next);
        }
        let mut s = self.states[current as usize].subset.clone();
        s.toggle(j);
        let next = self.intern_state(s);
        self.transitions[current as usize][j] = Some(next);
        Ok(next)
    }

    /// Graphviz rendering of all states built so far, for systems with at
    /// most four facts.
    pub fn to_dot(&self) -> Option<String> {
        if self.dmax.len() > 4 {
            return None;
        }
        let fact = |j: usize| {
            let (r, t) = &self.dmax.facts[j];
            format!("{}({})", r, self.interner.resolve_tuple(t).join(","))
        };
        let mut s = String::from("digraph transitions {\n  node [shape=box];\n");
        for (i, st) in self.states.iter().enumerate() {
            let facts: Vec<String> = st.subset.ones().map(fact).collect();
            let result: Vec<String> = st
                .result
                .iter()
                .map(|t| format!("({})", self.interner.resolve_tuple(t).join(",")))
                .collect();
            let _ = writeln!(
                s,
                "  s{i} [label=\"{{{}}}\\n{}\"{}];",
                facts.join(", "),
                if result.is_empty() {
                    "∅".to_string()
                } else {
                    result.join(" ")
                },
                if i as StateId == self.initial {
                    ", color=blue"
                } else {
                    ""
                }
            );
        }
        for (i, row) in self.transitions.iter().enumerate() {
            for (j, next) in row.iter().enumerate() {
                if let Some(n) = next {
                    let sign = if self.states[i].subset.contains(j) { '-' } else { '+' };
                    let _ = writeln!(s, "  s{i} -> s{n} [label=\"{sign}{}\"];", fact(j));
                }
            }
        }
        s.push_str("}\n");
        Some(s)
    }
}
