//! Reference evaluators used to check every other component.
//!
//! [`evaluate`] is a plain nested-loop join over the body atoms in
//! declaration order. [`evaluate_sort_merge`] is written independently:
//! it folds the atoms into a sorted table of bindings with a sort-merge
//! join on the shared variables. The two must agree.

use std::cmp::Ordering;

use crate::data::{Relations, Tuple, Value};
use crate::error::{Error, Result};
use crate::query::{Query, Var};

fn check_arities<R: Relations + ?Sized>(q: &Query, rels: &R) -> Result<()> {
    for a in q.body() {
        if let Some(t) = rels.tuples(&a.relation).iter().find(|t| t.len() != a.arity()) {
            return Err(Error::ArityMismatch {
                relation: a.relation.clone(),
                expected: a.arity(),
                found: t.len(),
            });
        }
    }
    Ok(())
}

fn finish(mut out: Vec<Tuple>) -> Vec<Tuple> {
    out.sort_unstable();
    out.dedup();
    out
}

/// Sorted, duplicate-free result of `q` over the head variables in head
/// order.
pub fn evaluate<R: Relations + ?Sized>(q: &Query, rels: &R) -> Result<Vec<Tuple>> {
    check_arities(q, rels)?;
    let mut binding: Vec<Option<Value>> = vec![None; q.num_var_ids()];
    let mut out = Vec::new();
    fn go<R: Relations + ?Sized>(
        q: &Query,
        rels: &R,
        i: usize,
        binding: &mut Vec<Option<Value>>,
        out: &mut Vec<Tuple>,
    ) {
        if i == q.body().len() {
            out.push(
                q.head()
                    .iter()
                    .map(|v| binding[v.index()].expect("head var bound"))
                    .collect(),
            );
            return;
        }
        let atom = q.atom(i);
        'tuples: for t in rels.tuples(&atom.relation) {
            let mut set_here = Vec::new();
            for (v, &x) in atom.vars.iter().zip(t.iter()) {
                match binding[v.index()] {
                    Some(y) if y != x => {
                        for &w in &set_here {
                            binding[w] = None;
                        }
                        continue 'tuples;
                    }
                    Some(_) => {}
                    None => {
                        binding[v.index()] = Some(x);
                        set_here.push(v.index());
                    }
                }
            }
            go(q, rels, i + 1, binding, out);
            for &w in &set_here {
                binding[w] = None;
            }
        }
    }
    go(q, rels, 0, &mut binding, &mut out);
    Ok(finish(out))
}

/// Same result as [`evaluate`], computed by successive sort-merge joins.
pub fn evaluate_sort_merge<R: Relations + ?Sized>(q: &Query, rels: &R) -> Result<Vec<Tuple>> {
    check_arities(q, rels)?;
    let mut schema: Vec<Var> = Vec::new();
    let mut table: Vec<Vec<Value>> = vec![Vec::new()];
    for atom in q.body() {
        // Atom rows over its distinct variables; rows with inconsistent
        // repeated variables are dropped.
        let mut avars: Vec<Var> = Vec::new();
        for v in &atom.vars {
            if !avars.contains(v) {
                avars.push(*v);
            }
        }
        let mut rows: Vec<Vec<Value>> = rels
            .tuples(&atom.relation)
            .iter()
            .filter_map(|t| {
                let mut row = vec![0; avars.len()];
                let mut seen = vec![false; avars.len()];
                for (v, &x) in atom.vars.iter().zip(t.iter()) {
                    let k = avars.iter().position(|w| w == v).unwrap();
                    if seen[k] && row[k] != x {
                        return None;
                    }
                    seen[k] = true;
                    row[k] = x;
                }
                Some(row)
            })
            .collect();
        let shared: Vec<Var> = avars.iter().copied().filter(|v| schema.contains(v)).collect();
        let lkey: Vec<usize> = shared
            .iter()
            .map(|v| schema.iter().position(|w| w == v).unwrap())
            .collect();
        let rkey: Vec<usize> = shared
            .iter()
            .map(|v| avars.iter().position(|w| w == v).unwrap())
            .collect();
        let extra: Vec<usize> = (0..avars.len()).filter(|&k| !shared.contains(&avars[k])).collect();
        let key = |r: &[Value], cols: &[usize]| -> Vec<Value> { cols.iter().map(|&c| r[c]).collect() };
        table.sort_by_key(|r| key(r, &lkey));
        rows.sort_by_key(|r| key(r, &rkey));
        let mut next = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < table.len() && j < rows.len() {
            let (ki, kj) = (key(&table[i], &lkey), key(&rows[j], &rkey));
            match ki.cmp(&kj) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    let i_end = i + table[i..].iter().take_while(|r| key(r, &lkey) == ki).count();
                    let j_end = j + rows[j..].iter().take_while(|r| key(r, &rkey) == kj).count();
                    for l in &table[i..i_end] {
                        for r in &rows[j..j_end] {
                            let mut row = l.clone();
                            row.extend(extra.iter().map(|&c| r[c]));
                            next.push(row);
                        }
                    }
                    i = i_end;
                    j = j_end;
                }
            }
        }
        schema.extend(extra.iter().map(|&c| avars[c]));
        table = next;
    }
    let cols: Vec<usize> = q
        .head()
        .iter()
        .map(|v| schema.iter().position(|w| w == v).expect("head var in body"))
        .collect();
    Ok(finish(
        table.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect(),
    ))
}
