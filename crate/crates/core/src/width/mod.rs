//! Fractional edge covers and preprocessing widths.

mod lp;
mod rational;

use std::collections::HashMap;
use std::sync::Mutex;

pub use lp::{fractional_edge_cover, fractional_edge_cover_number, vertex_enumeration_cover, EdgeCoverSolution};
pub use rational::Rational;

use crate::classify::is_well_behaved;
use crate::error::{Error, Result};
use crate::par::{self, Parallelism};
use crate::query::{Query, Var};
use crate::set::{AtomSet, VarSet};
use crate::vo::{components_within, create_vo, VariableOrder};

/// Fractional edge cover number of `cover` using the atoms in `atoms`.
pub fn rho_star(q: &Query, atoms: AtomSet, cover: VarSet) -> Result<Rational> {
    let edges: Vec<VarSet> = atoms.iter().map(|i| q.atom(i).var_set()).collect();
    fractional_edge_cover_number(&edges, cover).map_err(|e| match e {
        Error::Uncoverable(_) => {
            let v = cover.minus(q.vars_of(atoms)).first().unwrap_or(0);
            Error::Uncoverable(q.names()[v].clone())
        }
        e => e,
    })
}

type Cache = Mutex<HashMap<(AtomSet, VarSet), Rational>>;

fn cached_rho(q: &Query, atoms: AtomSet, cover: VarSet, cache: Option<&Cache>) -> Rational {
    if let Some(c) = cache {
        if let Some(r) = c.lock().expect("cache lock").get(&(atoms, cover)) {
            return r.clone();
        }
    }
    let r = rho_star(q, atoms, cover).expect("subtree atoms cover their own variables");
    if let Some(c) = cache {
        c.lock().expect("cache lock").insert((atoms, cover), r.clone());
    }
    r
}

fn width_with(q: &Query, vo: &VariableOrder, cache: Option<&Cache>, mode: Parallelism) -> Rational {
    let dep = vo.dep(q);
    let vars: Vec<Var> = vo.preorder();
    let per_var = par::map(mode, &vars, |&x| {
        let cover = dep[x.index()].union(VarSet::singleton(x.index()));
        cached_rho(q, vo.subtree_atoms(x), cover, cache)
    });
    per_var.into_iter().max().unwrap_or_else(Rational::zero)
}

/// `w(ω)`: the largest fractional edge cover number of `{X} ∪ dep(X)`
/// over the atoms below `X`, across all variables `X`.
pub fn preprocessing_width_of_vo(q: &Query, vo: &VariableOrder) -> Rational {
    width_with(q, vo, None, Parallelism::Sequential)
}

/// The per-variable quantities behind [`preprocessing_width_of_vo`], by
/// variable id.
pub fn width_profile(q: &Query, vo: &VariableOrder) -> Vec<(Var, Rational)> {
    let dep = vo.dep(q);
    vo.preorder()
        .into_iter()
        .map(|x| {
            let cover = dep[x.index()].union(VarSet::singleton(x.index()));
            (x, rho_star(q, vo.subtree_atoms(x), cover).expect("coverable"))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WidthConfig {
    /// Queries with more variables skip the search.
    pub max_vars: usize,
    /// The search gives up after generating this many candidate orders.
    pub max_candidates: usize,
    pub parallelism: Parallelism,
}

impl Default for WidthConfig {
    fn default() -> Self {
        WidthConfig {
            max_vars: 12,
            max_candidates: 10_000,
            parallelism: Parallelism::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct WidthResult {
    pub width: Rational,
    pub vo: VariableOrder,
    /// Set when the search was skipped or cut short; the width is then an
    /// upper bound.
    pub possibly_suboptimal: bool,
    pub candidates: usize,
}

/// `w(Q)` with the default search limits.
pub fn preprocessing_width(q: &Query) -> Result<WidthResult> {
    preprocessing_width_with(q, &WidthConfig::default())
}

/// Minimum width over well-structured orders found by the search, which
/// always includes the order built by [`create_vo`].
pub fn preprocessing_width_with(q: &Query, cfg: &WidthConfig) -> Result<WidthResult> {
    if !is_well_behaved(q) {
        return Err(Error::NotWellBehaved);
    }
    let fallback = create_vo(q)?;
    let mut candidates = vec![fallback.parent_pairs()];
    let mut suboptimal = q.vars().len() > cfg.max_vars;
    if !suboptimal {
        match enumerate_well_structured(q, cfg.max_candidates) {
            Some(found) => candidates.extend(found),
            None => suboptimal = true,
        }
    }
    let cache: Cache = Mutex::new(HashMap::new());
    let scored = par::map(cfg.parallelism, &candidates, |pairs| {
        let vo = VariableOrder::new(q, pairs).expect("search yields valid orders");
        let w = width_with(q, &vo, Some(&cache), Parallelism::Sequential);
        (w, vo)
    });
    let n = scored.len();
    // Ties go to the earliest candidate, i.e. the constructed order.
    let (width, vo) = scored
        .into_iter()
        .reduce(|best, c| if c.0 < best.0 { c } else { best })
        .expect("at least the constructed order");
    Ok(WidthResult {
        width,
        vo,
        possibly_suboptimal: suboptimal,
        candidates: n,
    })
}

type Pairs = Vec<(Var, Option<Var>)>;

/// All well-structured orders reachable by recursively picking a root for
/// each connected component and splitting the remainder into components.
/// A bound root is only allowed in a component without free variables, and
/// a root must occur in every dynamic atom that meets its component.
/// Returns `None` once more than `cap` orders are produced.
pub fn enumerate_well_structured(q: &Query, cap: usize) -> Option<Vec<Pairs>> {
    let all = q.all_atoms();
    let forests = forests(q, all, components_within(q, all, q.vars()), None, cap)?;
    Some(forests)
}

fn forests(q: &Query, atoms: AtomSet, comps: Vec<VarSet>, parent: Option<Var>, cap: usize) -> Option<Vec<Pairs>> {
    let mut acc: Vec<Pairs> = vec![Vec::new()];
    for c in comps {
        let trees = trees(q, atoms, c, parent, cap)?;
        if trees.is_empty() {
            return Some(Vec::new());
        }
        if acc.len().saturating_mul(trees.len()) > cap {
            return None;
        }
        acc = acc
            .iter()
            .flat_map(|a| {
                trees.iter().map(move |t| {
                    let mut x = a.clone();
                    x.extend_from_slice(t);
                    x
                })
            })
            .collect();
    }
    Some(acc)
}

fn trees(q: &Query, atoms: AtomSet, comp: VarSet, parent: Option<Var>, cap: usize) -> Option<Vec<Pairs>> {
    let free = q.free();
    let has_free = comp.intersects(free);
    let touching: Vec<VarSet> = q
        .dynamic_atoms()
        .iter()
        .map(|i| q.atom(i).var_set())
        .filter(|s| s.intersects(comp))
        .collect();
    let mut out = Vec::new();
    for x in comp {
        if has_free && !free.contains(x) {
            continue;
        }
        if !touching.iter().all(|s| s.contains(x)) {
            continue;
        }
        let rest = comp.minus(VarSet::singleton(x));
        let xv = Var(x as u32);
        for f in forests(q, atoms, components_within(q, atoms, rest), Some(xv), cap)? {
            let mut t = Vec::with_capacity(f.len() + 1);
            t.push((xv, parent));
            t.extend(f);
            out.push(t);
            if out.len() > cap {
                return None;
            }
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> Query {
        Query::parse(s).unwrap()
    }

    #[test]
    fn fixture_widths() {
        let cases = [
            ("Q(A,B,C) := R@d(A,D), S@d(A,B), T@s(B,C).", Rational::one()),
            (
                "Q(A,C,D) := R@d(A,D), S@s(A,B), T@s(B,C), U@d(D).",
                Rational::from_int(2),
            ),
            ("Q(A,B,C) := R@s(A,B), S@s(B,C), T@s(A,C), U@d(A,B,C).", Rational::one()),
            ("Q(A,C) := R@s(A,B), S@s(B,C), T@d(A,C).", Rational::from_int(2)),
            (
                "Q(A,B) := R@d(A,B), S@d(A,C), Y@s(A,D), Z@s(C,D).",
                Rational::from_int(2),
            ),
        ];
        for (text, want) in cases {
            let query = q(text);
            let r = preprocessing_width(&query).unwrap();
            assert_eq!(r.width, want, "{text}");
            assert!(!r.possibly_suboptimal);
            assert!(r.vo.is_well_structured(&query));
        }
    }

    #[test]
    fn rsyz_width_attained_at_d() {
        let query = q("Q(A,B) := R@d(A,B), S@d(A,C), Y@s(A,D), Z@s(C,D).");
        let vo = create_vo(&query).unwrap();
        let prof = width_profile(&query, &vo);
        let d = query.var_by_name("D").unwrap();
        assert_eq!(prof.iter().find(|(v, _)| *v == d).unwrap().1, Rational::from_int(2));
        assert_eq!(preprocessing_width_of_vo(&query, &vo), Rational::from_int(2));
    }

    #[test]
    fn single_atom_width_one() {
        let query = q("Q(A) := R@d(A,B).");
        assert_eq!(preprocessing_width(&query).unwrap().width, Rational::one());
    }

    #[test]
    fn rejects_ill_behaved() {
        assert!(matches!(
            preprocessing_width(&q("Q(A,B) := R@d(A), S@s(A,B), T@d(B).")),
            Err(Error::NotWellBehaved)
        ));
    }

    #[test]
    fn caps_fall_back_to_construction() {
        let query = q("Q(A,B,C,D) := R@s(A,B), S@s(B,C), T@s(C,D).");
        let cfg = WidthConfig {
            max_candidates: 1,
            ..WidthConfig::default()
        };
        let r = preprocessing_width_with(&query, &cfg).unwrap();
        assert!(r.possibly_suboptimal);
        assert_eq!(r.candidates, 1);
        let cfg = WidthConfig {
            max_vars: 2,
            ..WidthConfig::default()
        };
        assert!(preprocessing_width_with(&query, &cfg).unwrap().possibly_suboptimal);
    }

    #[test]
    fn enumerated_orders_are_well_structured() {
        let query = q("Q(A,B) := R@d(A,B), S@d(A,C), Y@s(A,D), Z@s(C,D).");
        let all = enumerate_well_structured(&query, 10_000).unwrap();
        assert!(!all.is_empty());
        for pairs in all {
            let vo = VariableOrder::new(&query, &pairs).unwrap();
            assert!(vo.is_well_structured(&query));
        }
    }
}
