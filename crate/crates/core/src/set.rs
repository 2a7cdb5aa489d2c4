//! Small bit sets over variable and atom identifiers.
//!
//! Queries are limited to 64 variables and 64 atoms, which keeps every set
//! operation in the classifier and planner a single machine word.

use std::fmt;

pub const MAX_IDS: usize = 64;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct IdSet(u64);

pub type VarSet = IdSet;
pub type AtomSet = IdSet;

impl IdSet {
    pub const EMPTY: IdSet = IdSet(0);

    pub fn from_bits(bits: u64) -> Self {
        IdSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn singleton(i: usize) -> Self {
        debug_assert!(i < MAX_IDS);
        IdSet(1 << i)
    }

    /// The set `{0, .., n-1}`.
    pub fn full(n: usize) -> Self {
        if n >= MAX_IDS {
            IdSet(u64::MAX)
        } else {
            IdSet((1u64 << n) - 1)
        }
    }

    pub fn insert(&mut self, i: usize) {
        self.0 |= 1 << i;
    }

    pub fn remove(&mut self, i: usize) {
        self.0 &= !(1 << i);
    }

    pub fn contains(self, i: usize) -> bool {
        i < MAX_IDS && self.0 & (1 << i) != 0
    }

    pub fn union(self, o: IdSet) -> IdSet {
        IdSet(self.0 | o.0)
    }

    pub fn intersect(self, o: IdSet) -> IdSet {
        IdSet(self.0 & o.0)
    }

    pub fn minus(self, o: IdSet) -> IdSet {
        IdSet(self.0 & !o.0)
    }

    pub fn is_subset(self, o: IdSet) -> bool {
        self.0 & !o.0 == 0
    }

    pub fn is_strict_subset(self, o: IdSet) -> bool {
        self.is_subset(o) && self != o
    }

    pub fn intersects(self, o: IdSet) -> bool {
        self.0 & o.0 != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Smallest member.
    pub fn first(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize)
    }

    pub fn iter(self) -> IdIter {
        IdIter(self.0)
    }
}

impl FromIterator<usize> for IdSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = IdSet::EMPTY;
        for i in iter {
            s.insert(i);
        }
        s
    }
}

impl IntoIterator for IdSet {
    type Item = usize;
    type IntoIter = IdIter;
    fn into_iter(self) -> IdIter {
        self.iter()
    }
}

pub struct IdIter(u64);

impl Iterator for IdIter {
    type Item = usize;
    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let i = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(i)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.0.count_ones() as usize;
        (n, Some(n))
    }
}

impl fmt::Debug for IdSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}
