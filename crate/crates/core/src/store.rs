//! Hash-based relation storage with prefix indexes.
//!
//! Every tuple carries a count: 1 for base relations and join views, the
//! number of supporting child tuples for projection views. Indexes map the
//! values of some key columns to the set of residual values and are kept
//! in sync on every change, so both membership tests and iteration over a
//! key group take constant time per step.

use rustc_hash::FxHashMap;
use smallvec::SmallVec;

use crate::data::{Tuple, Value};

pub type IndexId = usize;

/// Indexes per store; the engine needs one.
pub const MAX_INDEXES: usize = 2;

#[derive(Clone, Copy, Debug, Default)]
struct Entry {
    count: u32,
    /// Slot of the residual inside its group, per index.
    pos: [u32; MAX_INDEXES],
}

#[derive(Clone, Debug)]
struct PrefixIndex {
    key_cols: Vec<usize>,
    rest_cols: Vec<usize>,
    groups: FxHashMap<Tuple, SmallVec<[Tuple; 1]>>,
}

impl PrefixIndex {
    fn split(&self, t: &[Value]) -> (Tuple, Tuple) {
        (
            self.key_cols.iter().map(|&c| t[c]).collect(),
            self.rest_cols.iter().map(|&c| t[c]).collect(),
        )
    }

    fn full(key_cols: &[usize], rest_cols: &[usize], key: &[Value], rest: &[Value]) -> Tuple {
        let mut t: Tuple = smallvec::smallvec![0; key_cols.len() + rest_cols.len()];
        for (&c, &v) in key_cols.iter().zip(key) {
            t[c] = v;
        }
        for (&c, &v) in rest_cols.iter().zip(rest) {
            t[c] = v;
        }
        t
    }

    /// Appends `t` to its group and returns its slot.
    fn add(&mut self, t: &[Value]) -> u32 {
        let (k, r) = self.split(t);
        let g = self.groups.entry(k).or_default();
        g.push(r);
        (g.len() - 1) as u32
    }
}

#[derive(Clone, Debug)]
pub struct RelationStore {
    arity: usize,
    tuples: FxHashMap<Tuple, Entry>,
    indexes: Vec<PrefixIndex>,
}

impl RelationStore {
    pub fn new(arity: usize) -> Self {
        RelationStore {
            arity,
            tuples: FxHashMap::default(),
            indexes: Vec::new(),
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn contains(&self, t: &[Value]) -> bool {
        self.tuples.contains_key(t)
    }

    pub fn count(&self, t: &[Value]) -> u32 {
        self.tuples.get(t).map_or(0, |e| e.count)
    }

    /// Adds `t` with count 1; false if already present.
    pub fn insert(&mut self, t: Tuple) -> bool {
        if self.tuples.contains_key(&t) {
            return false;
        }
        let mut entry = Entry {
            count: 1,
            ..Entry::default()
        };
        for (i, ix) in self.indexes.iter_mut().enumerate() {
            entry.pos[i] = ix.add(&t);
        }
        self.tuples.insert(t, entry);
        true
    }

    /// Removes `t` regardless of its count; false if absent.
    pub fn remove(&mut self, t: &[Value]) -> bool {
        let Some(entry) = self.tuples.remove(t) else {
            return false;
        };
        for (i, ix) in self.indexes.iter_mut().enumerate() {
            let (k, _) = ix.split(t);
            let g = ix.groups.get_mut(&k).expect("indexed tuple has a group");
            let p = entry.pos[i] as usize;
            g.swap_remove(p);
            if p < g.len() {
                let moved = PrefixIndex::full(&ix.key_cols, &ix.rest_cols, &k, &g[p]);
                self.tuples.get_mut(&moved).expect("grouped tuple is stored").pos[i] = p as u32;
            } else if g.is_empty() {
                ix.groups.remove(&k);
            }
        }
        true
    }

    /// Adds one to the count of `t`; true if `t` was absent before.
    pub fn increment(&mut self, t: Tuple) -> bool {
        if let Some(e) = self.tuples.get_mut(&t) {
            e.count += 1;
            return false;
        }
        self.insert(t)
    }

    /// Subtracts one from the count of `t`, dropping it at zero; true if
    /// `t` disappeared.
    pub fn decrement(&mut self, t: &[Value]) -> bool {
        match self.tuples.get_mut(t) {
            Some(e) if e.count > 1 => {
                e.count -= 1;
                false
            }
            Some(_) => self.remove(t),
            None => false,
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&Tuple, u32)> {
        self.tuples.iter().map(|(t, e)| (t, e.count))
    }

    /// Declares an index keyed by `key_cols`; residuals are the remaining
    /// columns in order. An empty key gives a single group holding every
    /// tuple.
    ///
    /// # Panics
    ///
    /// If the store already has [`MAX_INDEXES`] other indexes.
    pub fn add_index(&mut self, key_cols: Vec<usize>) -> IndexId {
        if let Some(i) = self.indexes.iter().position(|ix| ix.key_cols == key_cols) {
            return i;
        }
        assert!(self.indexes.len() < MAX_INDEXES, "too many indexes on one store");
        let rest_cols = (0..self.arity).filter(|c| !key_cols.contains(c)).collect();
        let mut ix = PrefixIndex {
            key_cols,
            rest_cols,
            groups: FxHashMap::default(),
        };
        let id = self.indexes.len();
        for (t, e) in self.tuples.iter_mut() {
            e.pos[id] = ix.add(t);
        }
        self.indexes.push(ix);
        id
    }

    pub fn index_rest_cols(&self, id: IndexId) -> &[usize] {
        &self.indexes[id].rest_cols
    }

    /// Residual tuples for `key`, or `None` if the group is empty.
    pub fn lookup(&self, id: IndexId, key: &[Value]) -> Option<&[Tuple]> {
        self.indexes[id].groups.get(key).map(|g| g.as_slice())
    }

    /// Tuples sorted, for comparisons in tests and diagnostics.
    pub fn sorted(&self) -> Vec<Tuple> {
        let mut v: Vec<Tuple> = self.tuples.keys().cloned().collect();
        v.sort_unstable();
        v
    }

    pub fn sorted_with_counts(&self) -> Vec<(Tuple, u32)> {
        let mut v: Vec<(Tuple, u32)> = self.tuples.iter().map(|(t, e)| (t.clone(), e.count)).collect();
        v.sort_unstable();
        v
    }

    /// Checks every index against the tuple set, including the recorded
    /// slots.
    pub fn indexes_consistent(&self) -> bool {
        self.indexes.iter().enumerate().all(|(i, ix)| {
            let grouped: usize = ix.groups.values().map(|g| g.len()).sum();
            grouped == self.tuples.len()
                && ix.groups.values().all(|g| !g.is_empty())
                && self.tuples.iter().all(|(t, e)| {
                    let (k, r) = ix.split(t);
                    ix.groups.get(&k).and_then(|g| g.get(e.pos[i] as usize)) == Some(&r)
                })
        })
    }
}
