//! Interned values, tuples and in-memory databases.

use std::collections::BTreeMap;
use std::path::Path;

use compact_str::CompactString;
use rustc_hash::FxHashMap;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::query::Query;

/// An interned domain value.
pub type Value = u32;

/// A tuple of interned values; short tuples stay inline.
pub type Tuple = SmallVec<[Value; 4]>;

#[derive(Clone, Debug, Default)]
pub struct Interner {
    // Short strings are stored inline, so a lookup touches one table slot.
    ids: FxHashMap<CompactString, Value>,
    names: Vec<CompactString>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, s: &str) -> Value {
        if let Some(&v) = self.ids.get(s) {
            return v;
        }
        let v = self.names.len() as Value;
        self.names.push(s.into());
        self.ids.insert(s.into(), v);
        v
    }

    pub fn get(&self, s: &str) -> Option<Value> {
        self.ids.get(s).copied()
    }

    pub fn resolve(&self, v: Value) -> &str {
        &self.names[v as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn intern_tuple<S: AsRef<str>>(&mut self, values: &[S]) -> Tuple {
        values.iter().map(|s| self.intern(s.as_ref())).collect()
    }

    pub fn resolve_tuple(&self, t: &[Value]) -> Vec<String> {
        t.iter().map(|&v| self.resolve(v).to_string()).collect()
    }
}

/// Read access to relation contents by name. A relation that is absent
/// is treated as empty.
pub trait Relations {
    fn tuples(&self, relation: &str) -> &[Tuple];
}

/// Named relations of interned tuples, kept duplicate-free.
#[derive(Clone, Debug, Default)]
pub struct Database {
    pub interner: Interner,
    relations: BTreeMap<String, Vec<Tuple>>,
}

impl Database {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replaces the contents of `relation`, dropping duplicates.
    pub fn set(&mut self, relation: &str, mut tuples: Vec<Tuple>) {
        tuples.sort_unstable();
        tuples.dedup();
        self.relations.insert(relation.to_string(), tuples);
    }

    /// Adds a tuple given as strings. Returns false if it was present.
    pub fn insert_str<S: AsRef<str>>(&mut self, relation: &str, values: &[S]) -> bool {
        let t = self.interner.intern_tuple(values);
        self.insert(relation, t)
    }

    /// Linear in the relation size; bulk loads should go through
    /// [`Database::set`].
    pub fn insert(&mut self, relation: &str, t: Tuple) -> bool {
        let rel = self.relations.entry(relation.to_string()).or_default();
        match rel.binary_search(&t) {
            Ok(_) => false,
            Err(i) => {
                rel.insert(i, t);
                true
            }
        }
    }

    pub fn remove(&mut self, relation: &str, t: &Tuple) -> bool {
        let Some(rel) = self.relations.get_mut(relation) else {
            return false;
        };
        match rel.binary_search(t) {
            Ok(i) => {
                rel.remove(i);
                true
            }
            Err(_) => false,
        }
    }

    pub fn relation_names(&self) -> impl Iterator<Item = &str> {
        self.relations.keys().map(String::as_str)
    }

    pub fn size(&self) -> usize {
        self.relations.values().map(Vec::len).sum()
    }

    /// Checks that every relation used by `query` has tuples of the right
    /// arity.
    pub fn check_against(&self, query: &Query) -> Result<()> {
        for (rel, arity, _) in query.relations() {
            if let Some(t) = self.tuples(rel).iter().find(|t| t.len() != arity) {
                return Err(Error::ArityMismatch {
                    relation: rel.to_string(),
                    expected: arity,
                    found: t.len(),
                });
            }
        }
        Ok(())
    }

    /// Loads `<Rel>.csv` (no header row) from `dir` for each relation of
    /// `query`. A missing file yields an empty relation.
    pub fn load_dir(dir: &Path, query: &Query) -> Result<Database> {
        let mut db = Database::new();
        for (rel, arity, _) in query.relations() {
            let path = dir.join(format!("{rel}.csv"));
            let mut tuples = Vec::new();
            if path.exists() {
                let mut rdr = csv::ReaderBuilder::new()
                    .has_headers(false)
                    .trim(csv::Trim::All)
                    .from_path(&path)?;
                for rec in rdr.records() {
                    let rec = rec?;
                    if rec.len() != arity {
                        return Err(Error::ArityMismatch {
                            relation: rel.to_string(),
                            expected: arity,
                            found: rec.len(),
                        });
                    }
                    tuples.push(rec.iter().map(|s| db.interner.intern(s)).collect());
                }
            }
            db.set(rel, tuples);
        }
        Ok(db)
    }

    /// Writes each relation to `<Rel>.csv` in `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (rel, tuples) in &self.relations {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_path(dir.join(format!("{rel}.csv")))?;
            for t in tuples {
                w.write_record(self.interner.resolve_tuple(t))?;
            }
            w.flush()?;
        }
        Ok(())
    }
}

impl Relations for Database {
    fn tuples(&self, relation: &str) -> &[Tuple] {
        self.relations.get(relation).map_or(&[], Vec::as_slice)
    }
}

impl Relations for BTreeMap<String, Vec<Tuple>> {
    fn tuples(&self, relation: &str) -> &[Tuple] {
        self.get(relation).map_or(&[], Vec::as_slice)
    }
}
