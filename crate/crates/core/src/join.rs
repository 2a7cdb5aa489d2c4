//! Attribute-at-a-time multiway join over sorted inputs.
//!
//! Each input is sorted on its columns in the global variable order. The
//! search binds one variable at a time, iterating the distinct values of
//! the input with the smallest candidate range and narrowing the other
//! inputs by binary search. Output variables come first in the order, so
//! once they are bound a single existence check on the remaining variables
//! decides the output tuple and no deduplication is needed. Within each of
//! the two groups, variables linked to already bound ones go first.

use crate::data::{Relations, Tuple, Value};
use crate::query::{Query, Var};
use crate::set::VarSet;

/// One join input: distinct variables and tuples over them.
pub struct JoinInput<'a, I> {
    pub vars: &'a [Var],
    pub tuples: I,
}

struct Sorted {
    rows: Vec<Tuple>,
    depths: Vec<usize>,
}

struct Search<'a> {
    inputs: &'a [Sorted],
    n: usize,
    k: usize,
    ranges: Vec<(usize, usize)>,
    cols: Vec<usize>,
    binding: Vec<Value>,
}

impl Search<'_> {
    fn run(&mut self, d: usize, exist_only: bool, out: &mut dyn FnMut(&[Value])) -> bool {
        if d == self.n {
            if !exist_only {
                out(&self.binding[..self.k]);
            }
            return true;
        }
        if d == self.k && !exist_only {
            if self.run(d, true, out) {
                out(&self.binding[..self.k]);
                return true;
            }
            return false;
        }
        let parts: Vec<usize> = (0..self.inputs.len())
            .filter(|&i| {
                let c = self.cols[i];
                c < self.inputs[i].depths.len() && self.inputs[i].depths[c] == d
            })
            .collect();
        let &p = parts
            .iter()
            .min_by_key(|&&i| self.ranges[i].1 - self.ranges[i].0)
            .expect("every variable comes from an input");
        let saved: Vec<(usize, usize)> = parts.iter().map(|&i| self.ranges[i]).collect();
        let (lo, hi) = self.ranges[p];
        let pc = self.cols[p];
        let rows = &self.inputs[p].rows;
        let mut any = false;
        let mut j = lo;
        while j < hi {
            let v = rows[j][pc];
            let end = j + rows[j..hi].partition_point(|r| r[pc] <= v);
            let mut ok = true;
            for (&i, &(a, b)) in parts.iter().zip(&saved) {
                if i == p {
                    self.ranges[i] = (j, end);
                    continue;
                }
                let c = self.cols[i];
                let r = &self.inputs[i].rows[a..b];
                let s = a + r.partition_point(|t| t[c] < v);
                let e = a + r.partition_point(|t| t[c] <= v);
                if s == e {
                    ok = false;
                    break;
                }
                self.ranges[i] = (s, e);
            }
            if ok {
                for &i in &parts {
                    self.cols[i] += 1;
                }
                self.binding[d] = v;
                let found = self.run(d + 1, exist_only, out);
                for &i in &parts {
                    self.cols[i] -= 1;
                }
                any |= found;
                if found && exist_only {
                    for (&i, &r) in parts.iter().zip(&saved) {
                        self.ranges[i] = r;
                    }
                    return true;
                }
            }
            for (&i, &r) in parts.iter().zip(&saved) {
                self.ranges[i] = r;
            }
            j = end;
        }
        any
    }
}

/// Joins `inputs` and projects onto `out`, which must be a subset of the
/// input variables. The result has no duplicates; its order is
/// unspecified.
pub fn generic_join<'a, I>(inputs: Vec<JoinInput<'a, I>>, out: &[Var]) -> Vec<Tuple>
where
    I: IntoIterator,
    I::Item: AsRef<[Value]>,
{
    let mut result = Vec::new();
    generic_join_each(inputs, out, &mut |t| result.push(t.iter().copied().collect()));
    result
}

/// Like [`generic_join`], but hands each output tuple to `sink` instead of
/// collecting.
pub fn generic_join_each<'a, I>(inputs: Vec<JoinInput<'a, I>>, out: &[Var], sink: &mut dyn FnMut(&[Value]))
where
    I: IntoIterator,
    I::Item: AsRef<[Value]>,
{
    let edges: Vec<&[Var]> = inputs.iter().map(|i| i.vars).collect();
    let mut order = greedy_order(out, &edges);
    let mut rest: Vec<Var> = Vec::new();
    for e in &edges {
        for v in e.iter() {
            if !out.contains(v) && !rest.contains(v) {
                rest.push(*v);
            }
        }
    }
    order.extend(greedy_order(&rest, &edges));
    let slot: Vec<usize> = out
        .iter()
        .map(|v| order.iter().position(|o| o == v).expect("in order"))
        .collect();
    let mut sorted = Vec::with_capacity(inputs.len());
    for inp in inputs {
        let mut perm: Vec<usize> = (0..inp.vars.len()).collect();
        let depth_of = |v: &Var| order.iter().position(|o| o == v).expect("collected above");
        perm.sort_by_key(|&c| depth_of(&inp.vars[c]));
        let depths: Vec<usize> = perm.iter().map(|&c| depth_of(&inp.vars[c])).collect();
        let mut rows: Vec<Tuple> = inp
            .tuples
            .into_iter()
            .map(|t| {
                let t = t.as_ref();
                perm.iter().map(|&c| t[c]).collect()
            })
            .collect();
        if depths.is_empty() {
            if rows.is_empty() {
                return;
            }
            continue;
        }
        rows.sort_unstable();
        rows.dedup();
        sorted.push(Sorted { rows, depths });
    }
    let mut search = Search {
        inputs: &sorted,
        n: order.len(),
        k: out.len(),
        ranges: sorted.iter().map(|s| (0, s.rows.len())).collect(),
        cols: vec![0; sorted.len()],
        binding: vec![0; order.len()],
    };
    if slot.iter().enumerate().all(|(i, &j)| i == j) {
        search.run(0, false, sink);
    } else {
        let mut buf = vec![0; slot.len()];
        search.run(0, false, &mut |t| {
            for (b, &j) in buf.iter_mut().zip(&slot) {
                *b = t[j];
            }
            sink(&buf)
        });
    }
}

/// Orders `vars` so each next variable shares the most inputs with those
/// already placed, breaking ties by the number of inputs it occurs in. This
/// keeps the search from enumerating products of unrelated columns.
fn greedy_order(vars: &[Var], edges: &[&[Var]]) -> Vec<Var> {
    let mut left = vars.to_vec();
    let mut placed: Vec<Var> = Vec::new();
    while !left.is_empty() {
        let score = |v: &Var| {
            let mut linked = 0;
            let mut occurs = 0;
            for e in edges.iter().filter(|e| e.contains(v)) {
                occurs += 1;
                linked += e.iter().filter(|w| placed.contains(w)).count();
            }
            (linked, occurs)
        };
        let best = (0..left.len())
            .max_by(|&a, &b| score(&left[a]).cmp(&score(&left[b])).then(b.cmp(&a)))
            .expect("nonempty");
        placed.push(left.remove(best));
    }
    placed
}

/// Evaluates `q` over `rels` one connected component at a time and
/// combines the components by a product. Returns the sorted, duplicate-free
/// result over the head variables in head order.
pub fn evaluate<R: Relations + ?Sized>(q: &Query, rels: &R) -> Vec<Tuple> {
    let free = q.free();
    let mut parts: Vec<(Vec<Var>, Vec<Tuple>)> = Vec::new();
    for comp in q.components() {
        let vars = q.vars_of(comp);
        let out: Vec<Var> = q.head().iter().copied().filter(|v| vars.contains(v.index())).collect();
        let inputs = comp
            .iter()
            .map(|i| {
                let a = q.atom(i);
                JoinInput {
                    vars: &a.vars,
                    tuples: rels.tuples(&a.relation),
                }
            })
            .collect();
        let rows = generic_join(inputs, &out);
        if rows.is_empty() {
            return Vec::new();
        }
        parts.push((out, rows));
    }
    let mut acc: Vec<Vec<Value>> = vec![vec![0; q.num_var_ids()]];
    let mut bound = VarSet::EMPTY;
    for (vars, rows) in &parts {
        let mut next = Vec::with_capacity(acc.len() * rows.len());
        for a in &acc {
            for r in rows {
                let mut b = a.clone();
                for (v, &x) in vars.iter().zip(r.iter()) {
                    b[v.index()] = x;
                }
                next.push(b);
            }
        }
        acc = next;
        bound = bound.union(vars.iter().map(|v| v.index()).collect());
    }
    debug_assert!(free.is_subset(bound));
    let mut result: Vec<Tuple> = acc
        .into_iter()
        .map(|b| q.head().iter().map(|v| b[v.index()]).collect())
        .collect();
    result.sort_unstable();
    result.dedup();
    result
}
