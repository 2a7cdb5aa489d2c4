//! Seeded generators for random queries, databases and update streams.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Database;
use crate::parser::UpdateEvent;
use crate::query::{AtomKind, Query};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Copy, Debug)]
pub struct QueryShape {
    pub max_vars: usize,
    pub max_atoms: usize,
    pub max_arity: usize,
    pub free_prob: f64,
    pub dynamic_prob: f64,
}

impl Default for QueryShape {
    fn default() -> Self {
        QueryShape {
            max_vars: 6,
            max_atoms: 5,
            max_arity: 3,
            free_prob: 0.5,
            dynamic_prob: 0.5,
        }
    }
}

const VAR_NAMES: [&str; 8] = ["A", "B", "C", "D", "E", "F", "G", "H"];

/// A query over distinct relation symbols `R0, R1, ...` with random
/// adornments and head.
pub fn random_query<R: Rng>(rng: &mut R, shape: &QueryShape) -> Query {
    let nv = rng.gen_range(1..=shape.max_vars.min(VAR_NAMES.len()));
    let na = rng.gen_range(1..=shape.max_atoms);
    let rels: Vec<String> = (0..na).map(|i| format!("R{i}")).collect();
    let mut atoms: Vec<(AtomKind, Vec<&str>)> = Vec::with_capacity(na);
    for _ in 0..na {
        let arity = rng.gen_range(1..=shape.max_arity.min(nv));
        let vars: Vec<&str> = VAR_NAMES[..nv].choose_multiple(rng, arity).copied().collect();
        let kind = if rng.gen_bool(shape.dynamic_prob) {
            AtomKind::Dynamic
        } else {
            AtomKind::Static
        };
        atoms.push((kind, vars));
    }
    let mut used: Vec<&str> = Vec::new();
    for (_, vs) in &atoms {
        for v in vs {
            if !used.contains(v) {
                used.push(v);
            }
        }
    }
    used.sort_unstable();
    let head: Vec<&str> = used.into_iter().filter(|_| rng.gen_bool(shape.free_prob)).collect();
    let body: Vec<(&str, AtomKind, &[&str])> = rels
        .iter()
        .zip(&atoms)
        .map(|(r, (k, vs))| (r.as_str(), *k, vs.as_slice()))
        .collect();
    Query::new("Q", &head, &body, false).expect("generated queries are valid")
}

/// Draws random queries until one satisfies `pred`.
pub fn random_query_where<R: Rng>(rng: &mut R, shape: &QueryShape, pred: impl Fn(&Query) -> bool) -> Query {
    loop {
        let q = random_query(rng, shape);
        if pred(&q) {
            return q;
        }
    }
}

fn random_tuple<R: Rng>(rng: &mut R, arity: usize, domain: usize) -> Vec<String> {
    (0..arity).map(|_| rng.gen_range(0..domain).to_string()).collect()
}

/// Up to `tuples` distinct random tuples per relation of `q`, with values
/// drawn from `0..domain`.
pub fn random_database<R: Rng>(rng: &mut R, q: &Query, tuples: usize, domain: usize) -> Database {
    let mut db = Database::new();
    for (rel, arity, _) in q.relations() {
        let rows = (0..tuples)
            .map(|_| db.interner.intern_tuple(&random_tuple(rng, arity, domain)))
            .collect();
        db.set(rel, rows);
    }
    db
}

/// Tuples of one relation as a list for sampling and a set for lookups.
type Present = (Vec<Vec<String>>, HashSet<Vec<String>>);

/// A stream of `count` inserts and deletes on the dynamic relations of `q`.
/// A delete removes a tuple present at that point (initially from `db`)
/// with probability `delete_prob`; inserts draw values from `0..domain`.
pub fn random_updates<R: Rng>(
    rng: &mut R,
    q: &Query,
    db: &Database,
    count: usize,
    domain: usize,
    delete_prob: f64,
) -> Vec<UpdateEvent> {
    let dynamic: Vec<(&str, usize)> = q
        .relations()
        .into_iter()
        .filter(|(_, _, k)| *k == AtomKind::Dynamic)
        .map(|(r, a, _)| (r, a))
        .collect();
    if dynamic.is_empty() {
        return Vec::new();
    }
    let mut present: Vec<Present> = dynamic
        .iter()
        .map(|(r, _)| {
            let list: Vec<Vec<String>> = crate::data::Relations::tuples(db, r)
                .iter()
                .map(|t| db.interner.resolve_tuple(t))
                .collect();
            let set = list.iter().cloned().collect();
            (list, set)
        })
        .collect();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let k = rng.gen_range(0..dynamic.len());
        let (rel, arity) = dynamic[k];
        let (list, set) = &mut present[k];
        if !list.is_empty() && rng.gen_bool(delete_prob) {
            let i = rng.gen_range(0..list.len());
            let t = list.swap_remove(i);
            set.remove(&t);
            out.push(UpdateEvent::Delete {
                relation: rel.to_string(),
                tuple: t,
            });
        } else {
            let t = random_tuple(rng, arity, domain);
            if set.insert(t.clone()) {
                list.push(t.clone());
            }
            out.push(UpdateEvent::Insert {
                relation: rel.to_string(),
                tuple: t,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_are_respected() {
        let mut r = rng(1);
        for _ in 0..200 {
            let q = random_query(&mut r, &QueryShape::default());
            assert!(q.vars().len() <= 6);
            assert!(q.body().len() <= 5);
            assert!(q.body().iter().all(|a| a.arity() <= 3));
        }
    }

    #[test]
    fn deletes_hit_present_tuples() {
        let mut r = rng(2);
        let q = Query::parse("Q(A) := R@d(A,B), S@s(B).").unwrap();
        let db = random_database(&mut r, &q, 20, 5);
        let stream = random_updates(&mut r, &q, &db, 300, 5, 0.5);
        let mut live: HashSet<Vec<String>> = crate::data::Relations::tuples(&db, "R")
            .iter()
            .map(|t| db.interner.resolve_tuple(t))
            .collect();
        for ev in stream {
            match ev {
                UpdateEvent::Insert { tuple, .. } => {
                    live.insert(tuple);
                }
                UpdateEvent::Delete { tuple, .. } => assert!(live.remove(&tuple)),
                _ => unreachable!(),
            }
        }
    }
}
