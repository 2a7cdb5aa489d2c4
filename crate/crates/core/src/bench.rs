//! Workloads from the online matrix-vector lower bounds and a timing
//! harness for smoke-testing update time, delay and preprocessing growth.
//!
//! OuMv: a static `S` holds the matrix and each round sets the dynamic
//! unary relations `R` and `T` to the two vectors; the Boolean query is
//! true iff `u M v = 1`. OMv: the matrix is again in the static `S`, each
//! round sets `T` to the vector and the enumerated `A` values are the
//! non-zero entries of `M v`.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::data::{Database, Tuple};
use crate::error::{Error, Result};
use crate::parser::UpdateEvent;
use crate::query::Query;
use crate::runtime::{Runtime, RuntimeConfig};

pub type Matrix = Vec<Vec<bool>>;

fn random_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<bool> {
    (0..n).map(|_| rng.gen_bool(0.5)).collect()
}

fn random_matrix<R: Rng>(rng: &mut R, n: usize) -> Matrix {
    (0..n).map(|_| random_vec(rng, n)).collect()
}

fn check_dims(n: usize, m: &Matrix, vecs: impl Iterator<Item = usize>) -> Result<()> {
    let bad = |what: &str| Err(Error::InvalidQuery(format!("instance {what} does not match n = {n}")));
    if n == 0 {
        return Err(Error::InvalidQuery("n must be at least 1".into()));
    }
    if m.len() != n || m.iter().any(|r| r.len() != n) {
        return bad("matrix");
    }
    for len in vecs {
        if len != n {
            return bad("vector");
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OuMvInstance {
    pub n: usize,
    pub matrix: Matrix,
    pub pairs: Vec<(Vec<bool>, Vec<bool>)>,
}

impl OuMvInstance {
    pub fn new(matrix: Matrix, pairs: Vec<(Vec<bool>, Vec<bool>)>) -> Result<Self> {
        let n = matrix.len();
        check_dims(n, &matrix, pairs.iter().flat_map(|(u, v)| [u.len(), v.len()]))?;
        Ok(OuMvInstance { n, matrix, pairs })
    }

    /// A uniform random instance with `n` rounds.
    pub fn random<R: Rng>(rng: &mut R, n: usize) -> Result<Self> {
        let matrix = random_matrix(rng, n);
        let pairs = (0..n).map(|_| (random_vec(rng, n), random_vec(rng, n))).collect();
        Self::new(matrix, pairs)
    }

    /// `u_r M v_r` per round.
    pub fn direct_answers(&self) -> Vec<bool> {
        self.pairs
            .iter()
            .map(|(u, v)| (0..self.n).any(|i| u[i] && (0..self.n).any(|j| self.matrix[i][j] && v[j])))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OmvInstance {
    pub n: usize,
    pub matrix: Matrix,
    pub vectors: Vec<Vec<bool>>,
}

impl OmvInstance {
    pub fn new(matrix: Matrix, vectors: Vec<Vec<bool>>) -> Result<Self> {
        let n = matrix.len();
        check_dims(n, &matrix, vectors.iter().map(Vec::len))?;
        Ok(OmvInstance { n, matrix, vectors })
    }

    pub fn random<R: Rng>(rng: &mut R, n: usize) -> Result<Self> {
        let matrix = random_matrix(rng, n);
        let vectors = (0..n).map(|_| random_vec(rng, n)).collect();
        Self::new(matrix, vectors)
    }

    /// 1-based indices of the non-zero entries of `M v_r` per round.
    pub fn direct_answers(&self) -> Vec<Vec<usize>> {
        self.vectors
            .iter()
            .map(|v| {
                (0..self.n)
                    .filter(|&i| (0..self.n).any(|j| self.matrix[i][j] && v[j]))
                    .map(|i| i + 1)
                    .collect()
            })
            .collect()
    }
}

pub fn oumv_query() -> Query {
    Query::parse("Q_RST() := R@d(A), S@s(A,B), T@d(B).").expect("fixed query")
}

pub fn omv_query() -> Query {
    Query::parse("Q_ST(A) := S@s(A,B), T@d(B).").expect("fixed query")
}

/// A workload ready to run: query, static data and an update stream with
/// one enumerate event per round.
#[derive(Clone, Debug)]
pub struct Encoding {
    pub query: Query,
    pub data: Database,
    pub stream: Vec<UpdateEvent>,
    /// Inserts and deletes issued in each round.
    pub round_updates: Vec<usize>,
}

impl Encoding {
    /// Writes `query.cq`, `data/<Rel>.csv` and `updates.upd` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("query.cq"), format!("{}\n", self.query))?;
        let data = dir.join("data");
        std::fs::create_dir_all(&data)?;
        self.data.write_dir(&data)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("updates.upd"))?);
        for ev in &self.stream {
            writeln!(f, "{ev}")?;
        }
        f.flush()?;
        Ok(())
    }

    /// Replays the stream and returns the sorted result rows at every
    /// enumerate event.
    pub fn run(&self, cfg: &RuntimeConfig) -> Result<Vec<Vec<Vec<String>>>> {
        let mut rt = Runtime::with_config(&self.query, &self.data, cfg)?;
        let mut out = Vec::new();
        for ev in &self.stream {
            match ev {
                UpdateEvent::Enumerate => out.push(rt.result_strings()),
                UpdateEvent::Checkpoint => {}
                _ => rt.apply(ev)?,
            }
        }
        Ok(out)
    }
}

/// Updates that turn the unary relation from `prev` into `next`.
fn set_relation(rel: &str, prev: &[bool], next: &[bool], out: &mut Vec<UpdateEvent>) -> usize {
    let mut k = 0;
    for (i, (&a, &b)) in prev.iter().zip(next).enumerate() {
        let tuple = vec![(i + 1).to_string()];
        let relation = rel.to_string();
        match (a, b) {
            (false, true) => out.push(UpdateEvent::Insert { relation, tuple }),
            (true, false) => out.push(UpdateEvent::Delete { relation, tuple }),
            _ => continue,
        }
        k += 1;
    }
    k
}

fn matrix_data(m: &Matrix) -> Database {
    let mut db = Database::new();
    for (i, row) in m.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if x {
                db.insert_str("S", &[(i + 1).to_string(), (j + 1).to_string()]);
            }
        }
    }
    db
}

pub fn encode_oumv(inst: &OuMvInstance) -> Encoding {
    let mut stream = Vec::new();
    let mut round_updates = Vec::new();
    let zero = vec![false; inst.n];
    let (mut pu, mut pv) = (&zero, &zero);
    for (u, v) in &inst.pairs {
        let k = set_relation("R", pu, u, &mut stream) + set_relation("T", pv, v, &mut stream);
        stream.push(UpdateEvent::Enumerate);
        round_updates.push(k);
        (pu, pv) = (u, v);
    }
    Encoding {
        query: oumv_query(),
        data: matrix_data(&inst.matrix),
        stream,
        round_updates,
    }
}

pub fn encode_omv(inst: &OmvInstance) -> Encoding {
    let mut stream = Vec::new();
    let mut round_updates = Vec::new();
    let zero = vec![false; inst.n];
    let mut pv = &zero;
    for v in &inst.vectors {
        round_updates.push(set_relation("T", pv, v, &mut stream));
        stream.push(UpdateEvent::Enumerate);
        pv = v;
    }
    Encoding {
        query: omv_query(),
        data: matrix_data(&inst.matrix),
        stream,
        round_updates,
    }
}

/// Round answers of an OuMv instance computed by maintaining the query.
pub fn solve_oumv(inst: &OuMvInstance, cfg: &RuntimeConfig) -> Result<Vec<bool>> {
    Ok(encode_oumv(inst)
        .run(cfg)?
        .into_iter()
        .map(|rows| !rows.is_empty())
        .collect())
}

/// Round answers of an OMv instance computed by maintaining the query.
pub fn solve_omv(inst: &OmvInstance, cfg: &RuntimeConfig) -> Result<Vec<Vec<usize>>> {
    let rounds = encode_omv(inst).run(cfg)?;
    Ok(rounds
        .into_iter()
        .map(|rows| {
            let mut v: Vec<usize> = rows.iter().map(|r| r[0].parse().expect("encoded indices")).collect();
            v.sort_unstable();
            v
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingRow {
    pub n: usize,
    pub preprocessing_secs: f64,
    pub median_update_ns: f64,
    pub median_delay_ns: f64,
    pub update_samples: usize,
    pub delay_samples: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TimingProfile {
    pub rows: Vec<TimingRow>,
}

impl TimingProfile {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Least-squares slope of log preprocessing time against log N.
    pub fn preprocessing_slope(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.preprocessing_secs > 0.0)
            .map(|r| ((r.n as f64).ln(), r.preprocessing_secs.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }

    /// Largest over smallest per-update median.
    pub fn update_spread(&self) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.update_samples > 0)
            .map(|r| r.median_update_ns)
            .collect();
        let max = v.iter().cloned().fold(f64::NAN, f64::max);
        let min = v.iter().cloned().fold(f64::NAN, f64::min);
        (!v.is_empty()).then_some(max / min)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    v[v.len() / 2]
}

#[derive(Clone, Copy, Debug)]
pub struct SweepConfig {
    pub runtime: RuntimeConfig,
    /// Enumeration delays are sampled over at most this many tuples.
    pub max_delay_samples: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            runtime: RuntimeConfig::default(),
            max_delay_samples: 10_000,
        }
    }
}

/// For each N: builds data, times preprocessing, times each update of the
/// stream and the gaps between enumerated tuples.
pub fn timing_sweep<D, S>(
    q: &Query,
    ns: &[usize],
    cfg: &SweepConfig,
    mut data: D,
    mut stream: S,
) -> Result<TimingProfile>
where
    D: FnMut(usize) -> Database,
    S: FnMut(usize, &Database) -> Vec<UpdateEvent>,
{
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let db = data(n);
        let updates = stream(n, &db);
        let start = Instant::now();
        let mut rt = Runtime::with_config(q, &db, &cfg.runtime)?;
        let preprocessing_secs = start.elapsed().as_secs_f64();
        drop(db);
        let mut times = Vec::with_capacity(updates.len());
        for ev in &updates {
            if matches!(ev, UpdateEvent::Insert { .. } | UpdateEvent::Delete { .. }) {
                let t = Instant::now();
                rt.apply(ev)?;
                times.push(t.elapsed().as_nanos() as f64);
            }
        }
        let mut delays = Vec::new();
        let mut it = rt.enumerate();
        let mut last = Instant::now();
        while delays.len() < cfg.max_delay_samples {
            let got = it.next();
            let now = Instant::now();
            delays.push((now - last).as_nanos() as f64);
            last = now;
            if got.is_none() {
                break;
            }
        }
        rows.push(TimingRow {
            n,
            preprocessing_secs,
            update_samples: times.len(),
            median_update_ns: median(times),
            delay_samples: delays.len(),
            median_delay_ns: median(delays),
        });
    }
    Ok(TimingProfile { rows })
}

pub fn q1() -> Query {
    Query::parse("Q1(A,B,C) := R@d(A,D), S@d(A,B), T@s(B,C).").expect("fixed query")
}

pub fn q2() -> Query {
    Query::parse("Q2(A,C,D) := R@d(A,D), S@s(A,B), T@s(B,C), U@d(D).").expect("fixed query")
}

/// Size of the `B` domain in [`q2_data`].
pub const Q2_JOIN_DOMAIN: usize = 100;

/// `N` uniform random tuples per relation of Q1 over a domain of size `N`.
pub fn q1_data<R: Rng>(rng: &mut R, n: usize) -> Database {
    crate::gen::random_database(rng, &q1(), n, n)
}

/// Data for Q2 whose static join on `B` has about `N² / Q2_JOIN_DOMAIN`
/// tuples: `S` and `T` spread `N` tuples evenly over a fixed `B` domain.
pub fn q2_data<R: Rng>(rng: &mut R, n: usize) -> Database {
    let k = Q2_JOIN_DOMAIN;
    let mut db = Database::new();
    let a_dom = n.div_ceil(k);
    let mut rows: [Vec<Tuple>; 4] = Default::default();
    let mut v = |x: usize| db.interner.intern(&x.to_string());
    for i in 0..n {
        rows[0].push(smallvec::smallvec![v(i / k), v(i % k)]);
        rows[1].push(smallvec::smallvec![v(i % k), v(i / k)]);
        rows[2].push(smallvec::smallvec![v(rng.gen_range(0..a_dom)), v(rng.gen_range(0..n))]);
        rows[3].push(smallvec::smallvec![v(rng.gen_range(0..n))]);
    }
    for (rel, r) in ["S", "T", "R", "U"].into_iter().zip(rows) {
        db.set(rel, r);
    }
    db
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one() {
        let inst = OuMvInstance::new(vec![vec![true]], vec![(vec![true], vec![true])]).unwrap();
        let enc = encode_oumv(&inst);
        assert_eq!(enc.stream.len(), 3);
        assert_eq!(enc.round_updates, vec![2]);
        assert_eq!(solve_oumv(&inst, &RuntimeConfig::default()).unwrap(), vec![true]);
        let inst = OmvInstance::new(vec![vec![true]], vec![vec![true]]).unwrap();
        assert_eq!(solve_omv(&inst, &RuntimeConfig::default()).unwrap(), vec![vec![1]]);
    }

    #[test]
    fn two_by_two() {
        let id = vec![vec![true, false], vec![false, true]];
        let inst = OuMvInstance::new(id, vec![(vec![true, false], vec![false, true])]).unwrap();
        assert_eq!(solve_oumv(&inst, &RuntimeConfig::default()).unwrap(), vec![false]);
        let swap = vec![vec![false, true], vec![true, false]];
        let inst = OmvInstance::new(swap, vec![vec![true, false]]).unwrap();
        assert_eq!(solve_omv(&inst, &RuntimeConfig::default()).unwrap(), vec![vec![2]]);
    }

    #[test]
    fn zero_dimension_is_rejected() {
        assert!(OuMvInstance::new(vec![], vec![]).is_err());
        assert!(OuMvInstance::random(&mut crate::gen::rng(0), 0).is_err());
    }

    #[test]
    fn empty_stream_profile() {
        let q = q1();
        let mut r = crate::gen::rng(3);
        let p = timing_sweep(
            &q,
            &[10],
            &SweepConfig::default(),
            |n| q1_data(&mut r, n),
            |_, _| Vec::new(),
        )
        .unwrap();
        assert_eq!(p.rows.len(), 1);
        assert_eq!(p.rows[0].update_samples, 0);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("n,preprocessing_secs"));
    }
}
