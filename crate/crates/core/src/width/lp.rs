//! Fractional edge covers solved exactly.
//!
//! The cover LP `min Σλ_e  s.t.  Σ_{e∋v} λ_e ≥ 1 (v ∈ F), λ ≥ 0` is solved
//! through its dual `max Σy_v  s.t.  Σ_{v∈e} y_v ≤ 1, y ≥ 0`, whose origin
//! is feasible, so a single simplex phase suffices. Primal weights are read
//! off the reduced costs of the slack columns. An optimal cover never puts
//! weight above 1 on an edge, so the upper bound needs no constraint.

use crate::error::{Error, Result};
use crate::set::VarSet;

use super::Rational;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeCoverSolution {
    /// One weight per input edge.
    pub weights: Vec<Rational>,
    pub objective: Rational,
}

/// Exact fractional edge cover number of `cover` using `edges`.
#[allow(clippy::needless_range_loop)]
pub fn fractional_edge_cover(edges: &[VarSet], cover: VarSet) -> Result<EdgeCoverSolution> {
    let all = edges.iter().fold(VarSet::EMPTY, |s, e| s.union(*e));
    if let Some(v) = cover.minus(all).first() {
        return Err(Error::Uncoverable(format!("#{v}")));
    }
    let mut weights = vec![Rational::zero(); edges.len()];
    if cover.is_empty() {
        return Ok(EdgeCoverSolution {
            weights,
            objective: Rational::zero(),
        });
    }
    if let Some(i) = edges.iter().position(|e| cover.is_subset(*e)) {
        weights[i] = Rational::one();
        return Ok(EdgeCoverSolution {
            weights,
            objective: Rational::one(),
        });
    }

    let cols: Vec<usize> = cover.iter().collect();
    let rows: Vec<usize> = (0..edges.len()).filter(|&i| edges[i].intersects(cover)).collect();
    let (n, m) = (cols.len(), rows.len());
    let width = n + m;
    let mut t: Vec<Vec<Rational>> = rows
        .iter()
        .enumerate()
        .map(|(r, &e)| {
            let mut row = vec![Rational::zero(); width];
            for (c, &v) in cols.iter().enumerate() {
                if edges[e].contains(v) {
                    row[c] = Rational::one();
                }
            }
            row[n + r] = Rational::one();
            row
        })
        .collect();
    let mut rhs = vec![Rational::one(); m];
    let mut cost: Vec<Rational> = (0..width)
        .map(|j| {
            if j < n {
                Rational::from_int(-1)
            } else {
                Rational::zero()
            }
        })
        .collect();
    let mut z = Rational::zero();
    let mut basis: Vec<usize> = (n..width).collect();

    // Bland's rule: lowest-index entering column, lowest-index leaving
    // basic variable among ratio ties.
    while let Some(j) = (0..width).find(|&j| cost[j].is_negative()) {
        let mut leave: Option<(usize, Rational)> = None;
        for i in 0..m {
            if !t[i][j].is_positive() {
                continue;
            }
            let ratio = &rhs[i] / &t[i][j];
            let better = match &leave {
                None => true,
                Some((k, best)) => ratio < *best || (ratio == *best && basis[i] < basis[*k]),
            };
            if better {
                leave = Some((i, ratio));
            }
        }
        let (p, _) = leave.expect("dual of a coverable instance is bounded");
        let pivot = t[p][j].clone();
        for x in t[p].iter_mut() {
            *x = &*x / &pivot;
        }
        rhs[p] = &rhs[p] / &pivot;
        for i in 0..m {
            if i == p || t[i][j].is_zero() {
                continue;
            }
            let f = t[i][j].clone();
            for k in 0..width {
                let d = &f * &t[p][k];
                t[i][k] = &t[i][k] - &d;
            }
            let d = &f * &rhs[p];
            rhs[i] = &rhs[i] - &d;
        }
        let f = cost[j].clone();
        for k in 0..width {
            let d = &f * &t[p][k];
            cost[k] = &cost[k] - &d;
        }
        z = &z - &(&f * &rhs[p]);
        basis[p] = j;
    }
    for (r, &e) in rows.iter().enumerate() {
        weights[e] = cost[n + r].clone();
    }
    debug_assert!(weights.iter().cloned().sum::<Rational>() == z);
    Ok(EdgeCoverSolution { weights, objective: z })
}

pub fn fractional_edge_cover_number(edges: &[VarSet], cover: VarSet) -> Result<Rational> {
    Ok(fractional_edge_cover(edges, cover)?.objective)
}

/// Reference solver: enumerates every vertex of the primal polytope
/// `{λ ∈ [0,1]^m : cover constraints}` by solving each square subsystem of
/// tight constraints. Exponential; meant for cross-checking.
pub fn vertex_enumeration_cover(edges: &[VarSet], cover: VarSet) -> Option<Rational> {
    let m = edges.len();
    let cover_vars: Vec<usize> = cover.iter().collect();
    if cover_vars.is_empty() {
        return Some(Rational::zero());
    }
    // Constraint rows a·λ = b candidates: covers, λ_e = 0, λ_e = 1.
    let mut cons: Vec<(Vec<Rational>, Rational)> = Vec::new();
    for &v in &cover_vars {
        let a = edges
            .iter()
            .map(|e| {
                if e.contains(v) {
                    Rational::one()
                } else {
                    Rational::zero()
                }
            })
            .collect();
        cons.push((a, Rational::one()));
    }
    for e in 0..m {
        for b in [Rational::zero(), Rational::one()] {
            let mut a = vec![Rational::zero(); m];
            a[e] = Rational::one();
            cons.push((a, b));
        }
    }
    let feasible = |x: &[Rational]| {
        x.iter().all(|w| !w.is_negative() && *w <= Rational::one())
            && cover_vars.iter().all(|&v| {
                edges
                    .iter()
                    .zip(x)
                    .filter(|(e, _)| e.contains(v))
                    .map(|(_, w)| w.clone())
                    .sum::<Rational>()
                    >= Rational::one()
            })
    };
    let mut best: Option<Rational> = None;
    let mut pick = Vec::with_capacity(m);
    fn rec(
        start: usize,
        m: usize,
        cons: &[(Vec<Rational>, Rational)],
        pick: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if pick.len() == m {
            visit(pick);
            return;
        }
        for i in start..cons.len() {
            pick.push(i);
            rec(i + 1, m, cons, pick, visit);
            pick.pop();
        }
    }
    rec(0, m, &cons, &mut pick, &mut |rows: &[usize]| {
        if let Some(x) = solve_square(rows.iter().map(|&i| &cons[i]).collect()) {
            if feasible(&x) {
                let obj: Rational = x.into_iter().sum();
                if best.as_ref().is_none_or(|b| obj < *b) {
                    best = Some(obj);
                }
            }
        }
    });
    best
}

/// Gaussian elimination; `None` when the system is singular.
#[allow(clippy::needless_range_loop)]
fn solve_square(rows: Vec<&(Vec<Rational>, Rational)>) -> Option<Vec<Rational>> {
    let n = rows.len();
    let mut a: Vec<Vec<Rational>> = rows
        .iter()
        .map(|(r, b)| {
            let mut v = r.clone();
            v.push(b.clone());
            v
        })
        .collect();
    for c in 0..n {
        let p = (c..n).find(|&i| !a[i][c].is_zero())?;
        a.swap(c, p);
        let piv = a[c][c].clone();
        for k in c..=n {
            a[c][k] = &a[c][k] / &piv;
        }
        for i in 0..n {
            if i != c && !a[i][c].is_zero() {
                let f = a[i][c].clone();
                for k in c..=n {
                    let d = &f * &a[c][k];
                    a[i][k] = &a[i][k] - &d;
                }
            }
        }
    }
    Some(a.into_iter().map(|r| r[n].clone()).collect())
}
