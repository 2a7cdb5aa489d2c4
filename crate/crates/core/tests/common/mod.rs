#![allow(dead_code)]

use std::path::PathBuf;

use mixivm::data::Relations;
use mixivm::set::VarSet;
use mixivm::{Database, Query, Tuple, UpdateEvent};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn fixture(name: &str) -> Query {
    let text = std::fs::read_to_string(fixture_path(&format!("{name}.cq"))).expect("fixture exists");
    Query::parse(&text).expect("fixture parses")
}

pub fn q3_small_db() -> Database {
    let mut db = Database::new();
    db.insert_str("R", &["a1"]);
    db.insert_str("S", &["a1", "b1"]);
    db.insert_str("S", &["a1", "b2"]);
    db.insert_str("T", &["b3"]);
    db
}

/// Variables that share a body atom with `v`.
fn adjacent(q: &Query, v: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for a in q.body() {
        if a.vars.iter().any(|w| w.index() == v) {
            for w in &a.vars {
                if w.index() != v && !out.contains(&w.index()) {
                    out.push(w.index());
                }
            }
        }
    }
    out
}

/// Whether every simple path from a variable of `x` to a variable of `y`
/// meets `x ∩ y`, found by listing all simple paths.
pub fn all_paths_safe(q: &Query, x: VarSet, y: VarSet) -> bool {
    fn dfs(q: &Query, path: &mut Vec<usize>, x: VarSet, y: VarSet) -> bool {
        let last = *path.last().unwrap();
        if y.contains(last) && !path.iter().any(|&v| x.contains(v) && y.contains(v)) {
            return false;
        }
        for w in adjacent(q, last) {
            if !path.contains(&w) {
                path.push(w);
                let ok = dfs(q, path, x, y);
                path.pop();
                if !ok {
                    return false;
                }
            }
        }
        true
    }
    x.iter().all(|s| dfs(q, &mut vec![s], x, y))
}

/// Well-behavedness by exhaustive path listing.
pub fn brute_well_behaved(q: &Query) -> bool {
    let dynamic: Vec<VarSet> = q
        .body()
        .iter()
        .filter(|a| a.is_dynamic())
        .map(|a| a.var_set())
        .collect();
    for i in 0..dynamic.len() {
        for j in i + 1..dynamic.len() {
            if !all_paths_safe(q, dynamic[i], dynamic[j]) {
                return false;
            }
        }
        if !all_paths_safe(q, dynamic[i], q.free()) {
            return false;
        }
    }
    true
}

/// Replays inserts and deletes on a copy of the database.
pub struct Replay {
    pub db: Database,
}

impl Replay {
    pub fn new(db: &Database) -> Self {
        Replay { db: db.clone() }
    }

    pub fn apply(&mut self, ev: &UpdateEvent) {
        match ev {
            UpdateEvent::Insert { relation, tuple } => {
                self.db.insert_str(relation, tuple);
            }
            UpdateEvent::Delete { relation, tuple } => {
                if let Some(t) = tuple.iter().map(|s| self.db.interner.get(s)).collect::<Option<Tuple>>() {
                    self.db.remove(relation, &t);
                }
            }
            _ => {}
        }
    }

    /// Oracle result as sorted string rows.
    pub fn expected(&self, q: &Query) -> Vec<Vec<String>> {
        let mut rows: Vec<Vec<String>> = mixivm::oracle::evaluate(q, &self.db)
            .unwrap()
            .iter()
            .map(|t| self.db.interner.resolve_tuple(t))
            .collect();
        rows.sort();
        rows
    }
}

pub fn relation_strings(db: &Database, rel: &str) -> Vec<Vec<String>> {
    db.tuples(rel).iter().map(|t| db.interner.resolve_tuple(t)).collect()
}
