//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any
//! criterion fails.

mod common;

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use mixivm::bench::{self, OmvInstance, OuMvInstance, SweepConfig};
use mixivm::classify::{check_well_behaved, is_q_hierarchical, is_well_behaved, ViolationKind};
use mixivm::engine::Engine;
use mixivm::gen::{self, QueryShape};
use mixivm::rewrite::check_safe;
use mixivm::runtime::RuntimeConfig;
use mixivm::transition::{TransitionConfig, TransitionMode};
use mixivm::vo::create_vo;
use mixivm::{
    classify, oracle, preprocessing_width, rewrite, AtomKind, Class, Database, Query, Rational, TransitionSystem,
    UpdateEvent,
};
use rand::Rng;

use common::{all_paths_safe, brute_well_behaved, fixture, q3_small_db, Replay};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c1_classification() -> Outcome {
    let want = [
        ("q1", Class::Lin),
        ("q2", Class::Poly),
        ("q3", Class::Exp),
        ("q4", Class::Outside),
        ("q5", Class::Outside),
        ("q6", Class::Outside),
        ("q7", Class::Lin),
        ("q8", Class::Poly),
    ];
    for (name, class) in want {
        let got = classify(&fixture(name)).class;
        ensure(got == class, || format!("{name}: expected {class}, got {got}"))?;
    }
    Ok("Q1..Q8 match".into())
}

fn c2_widths() -> Outcome {
    let want = [("q1", 1), ("q7", 1), ("rsyz", 2), ("q8", 2), ("q2", 2)];
    for (name, w) in want {
        let r = preprocessing_width(&fixture(name)).map_err(|e| format!("{name}: {e}"))?;
        ensure(r.width == Rational::from_int(w), || {
            format!("{name}: expected {w}, got {}", r.width)
        })?;
        ensure(!r.possibly_suboptimal, || format!("{name}: search incomplete"))?;
    }
    Ok("w(Q1)=1 w(Q7)=1 w(RSYZ)=2 w(Q8)=2 w(Q2)=2".into())
}

fn random_shape<R: Rng>(rng: &mut R) -> QueryShape {
    QueryShape {
        dynamic_prob: [0.3, 0.5, 0.8, 1.0][rng.gen_range(0..4)],
        free_prob: [0.2, 0.5, 0.8][rng.gen_range(0..3)],
        ..QueryShape::default()
    }
}

fn c3_well_behaved() -> Outcome {
    let mut rng = gen::rng(3);
    let (mut behaved, mut all_dynamic) = (0, 0);
    for k in 0..1000 {
        let shape = random_shape(&mut rng);
        let q = gen::random_query(&mut rng, &shape);
        let (ok, witness) = check_well_behaved(&q);
        ensure(ok == brute_well_behaved(&q), || {
            format!("query {k} `{q}`: checker says {ok}")
        })?;
        if let Some(w) = witness {
            // The witness must be a genuine unsafe path.
            let atom_set = |s: &str| {
                q.body()
                    .iter()
                    .find(|a| q.fmt_atom(a) == s)
                    .map(|a| a.var_set())
                    .expect("witness atom")
            };
            let x = atom_set(&w.atoms[0]);
            let y = match w.kind {
                ViolationKind::Body => atom_set(&w.atoms[1]),
                ViolationKind::Head => q.free(),
            };
            ensure(!all_paths_safe(&q, x, y), || {
                format!("query {k} `{q}`: witness pair is safe")
            })?;
            let path: Vec<usize> = w.path.iter().map(|n| q.var_by_name(n).unwrap().index()).collect();
            ensure(
                x.contains(path[0])
                    && y.contains(*path.last().unwrap())
                    && path.iter().all(|&v| !(x.contains(v) && y.contains(v))),
                || format!("query {k} `{q}`: witness path {:?} is not unsafe", w.path),
            )?;
        }
        if ok {
            behaved += 1;
            ensure(is_q_hierarchical(&q.dynamic_subquery()), || {
                format!("query {k} `{q}`: dynamic sub-query of a well-behaved query is not q-hierarchical")
            })?;
        }
        if q.static_atoms().is_empty() {
            all_dynamic += 1;
            ensure(is_q_hierarchical(&q) == ok, || {
                format!("query {k} `{q}`: q-hierarchical and well-behaved disagree")
            })?;
        }
    }
    Ok(format!(
        "1000 queries, {behaved} well-behaved, {all_dynamic} without static atoms"
    ))
}

fn c4_safe_rewriting() -> Outcome {
    let mut rng = gen::rng(4);
    for k in 0..200 {
        let shape = random_shape(&mut rng);
        let q = gen::random_query_where(&mut rng, &shape, is_well_behaved);
        let vo = create_vo(&q).map_err(|e| format!("query {k} `{q}`: {e}"))?;
        ensure(vo.is_well_structured(&q), || {
            format!("query {k} `{q}`: order is not well-structured")
        })?;
        let v = check_safe(&rewrite(&q, &vo), &q);
        ensure(v.is_empty(), || format!("query {k} `{q}`: {v:?}"))?;
    }
    Ok("200 well-behaved queries, all rewritings safe".into())
}

fn c5_engine_oracle() -> Outcome {
    let mut rng = gen::rng(5);
    let mut checks = 0;
    for k in 0..100 {
        let shape = random_shape(&mut rng);
        let q = gen::random_query_where(&mut rng, &shape, |q| classify(q).class.is_poly());
        let domain = rng.gen_range(3..=6);
        let size = rng.gen_range(1..=100);
        let db = gen::random_database(&mut rng, &q, size, domain);
        let stream = gen::random_updates(&mut rng, &q, &db, 500, domain, 0.4);
        let width = preprocessing_width(&q).map_err(|e| e.to_string())?;
        let mut engine = Engine::materialize(&q, rewrite(&q, &width.vo), &db).map_err(|e| e.to_string())?;
        let mut replay = Replay::new(&db);
        for (i, ev) in stream.iter().enumerate() {
            engine.apply(ev).map_err(|e| e.to_string())?;
            replay.apply(ev);
            if (i + 1) % 50 == 0 {
                let raw: Vec<Vec<String>> = engine
                    .enumerate()
                    .map(|t| engine.interner().resolve_tuple(&t))
                    .collect();
                let distinct: HashSet<&Vec<String>> = raw.iter().collect();
                ensure(distinct.len() == raw.len(), || {
                    format!("query {k} `{q}`: duplicates after {} updates", i + 1)
                })?;
                let mut got = raw.clone();
                got.sort();
                ensure(got == replay.expected(&q), || {
                    format!("query {k} `{q}`: result differs after {} updates", i + 1)
                })?;
                checks += 1;
            }
        }
        engine.check_invariants().map_err(|e| format!("query {k} `{q}`: {e}"))?;
    }
    Ok(format!("100 triples, {checks} checkpoints agree, no duplicates"))
}

/// Adds `k` join rows over fresh values: their static tuples go into `db`
/// and their dynamic tuples are inserted, deleted and inserted again by the
/// returned events. Every such change travels the longest path to the root.
fn planted_updates(q: &Query, db: &mut Database, k: usize) -> Vec<UpdateEvent> {
    let mut out = Vec::new();
    for i in 0..k {
        let mut dynamic = Vec::new();
        for a in q.body() {
            let tuple: Vec<String> = a.vars.iter().map(|v| format!("p{i}_{}", v.index())).collect();
            match a.kind {
                AtomKind::Static => {
                    db.insert_str(&a.relation, &tuple);
                }
                AtomKind::Dynamic => dynamic.push((a.relation.clone(), tuple)),
            }
        }
        for (relation, tuple) in &dynamic {
            out.push(UpdateEvent::Insert {
                relation: relation.clone(),
                tuple: tuple.clone(),
            });
        }
        for (relation, tuple) in &dynamic {
            out.push(UpdateEvent::Delete {
                relation: relation.clone(),
                tuple: tuple.clone(),
            });
            out.push(UpdateEvent::Insert {
                relation: relation.clone(),
                tuple: tuple.clone(),
            });
        }
    }
    out
}

fn max_lookups(q: &Query, n: usize, seed: u64) -> Result<u64, String> {
    let mut rng = gen::rng(seed);
    let mut db = gen::random_database(&mut rng, q, n, n);
    let planted = planted_updates(q, &mut db, 50);
    let mut stream = gen::random_updates(&mut rng, q, &db, 10_000 - planted.len(), n, 0.5);
    stream.extend(planted);
    let width = preprocessing_width(q).map_err(|e| e.to_string())?;
    let mut engine = Engine::materialize(q, rewrite(q, &width.vo), &db).map_err(|e| e.to_string())?;
    for ev in &stream {
        engine.apply(ev).map_err(|e| e.to_string())?;
    }
    Ok(engine.stats().lookups_max)
}

fn c6_delta_locality() -> Outcome {
    let mut report = Vec::new();
    for name in ["q1", "rsyz"] {
        let q = fixture(name);
        let small = max_lookups(&q, 1_000, 6)?;
        let large = max_lookups(&q, 100_000, 6)?;
        ensure(small == large, || {
            format!("{name}: max lookups {small} at N=1e3 but {large} at N=1e5")
        })?;
        report.push(format!("{name}: {small}"));
    }
    Ok(format!("max lookups per update equal across N: {}", report.join(", ")))
}

fn c7_transition() -> Outcome {
    let q = fixture("q3");
    let db = q3_small_db();
    let eager = TransitionConfig {
        mode: TransitionMode::Eager,
        eager_cap: 20,
        ..Default::default()
    };
    let mut ts = TransitionSystem::build_with(&q, &db, &eager).map_err(|e| e.to_string())?;
    ensure(ts.num_states() == 8, || format!("{} states", ts.num_states()))?;
    let s0 = ts.initial();
    let init: Vec<String> = ts
        .subset_facts(s0)
        .iter()
        .map(|(r, t)| format!("{r}({})", ts.interner().resolve_tuple(t).join(",")))
        .collect();
    ensure(init == ["R(a1)"], || format!("initial subset {init:?}"))?;
    ensure(ts.result(s0).is_empty(), || "initial result is not empty".into())?;
    let ev = mixivm::UpdateEvent::Insert {
        relation: "T".into(),
        tuple: vec!["b1".into()],
    };
    let s1 = ts.apply_update(s0, &ev).map_err(|e| e.to_string())?;
    let rows: Vec<Vec<String>> = ts.result(s1).iter().map(|t| ts.interner().resolve_tuple(t)).collect();
    ensure(rows == [["a1", "b1"]], || format!("after +T(b1): {rows:?}"))?;

    let mut rng = gen::rng(7);
    let mut states = 0;
    for k in 0..20 {
        let dom = rng.gen_range(2..=6);
        let mut db = Database::new();
        for _ in 0..rng.gen_range(1..=20) {
            db.insert_str(
                "S",
                &[
                    format!("a{}", rng.gen_range(0..dom)),
                    format!("b{}", rng.gen_range(0..dom)),
                ],
            );
        }
        let ts = TransitionSystem::build_with(&q, &db, &eager).map_err(|e| e.to_string())?;
        let p = ts.max_dynamic_database().len();
        ensure(p <= 12 && ts.num_states() == 1 << p, || {
            format!("instance {k}: p = {p}, {} states", ts.num_states())
        })?;
        for id in 0..ts.num_states() as u32 {
            let mut state_db = db.clone();
            for (r, t) in ts.subset_facts(id) {
                state_db.insert(r, t.clone());
            }
            let expected = oracle::evaluate(&q, &state_db).map_err(|e| e.to_string())?;
            ensure(ts.result(id) == expected.as_slice(), || {
                format!("instance {k}: state {id} differs")
            })?;
            states += 1;
        }
    }
    Ok(format!(
        "Q3 system on the small database matches the hand-drawn one; {states} random states agree with the oracle"
    ))
}

fn all_vectors(n: usize) -> Vec<Vec<bool>> {
    (0..1usize << n)
        .map(|m| (0..n).map(|i| m >> i & 1 == 1).collect())
        .collect()
}

fn c8_omv() -> Outcome {
    let cfg = RuntimeConfig::default();
    let mut instances = 0;
    for n in 1..=3 {
        let vecs = all_vectors(n);
        let pairs: Vec<(Vec<bool>, Vec<bool>)> = vecs
            .iter()
            .flat_map(|u| vecs.iter().map(move |v| (u.clone(), v.clone())))
            .collect();
        for m in 0..1usize << (n * n) {
            let matrix: Vec<Vec<bool>> = (0..n)
                .map(|i| (0..n).map(|j| m >> (i * n + j) & 1 == 1).collect())
                .collect();
            let inst = OuMvInstance::new(matrix.clone(), pairs.clone()).map_err(|e| e.to_string())?;
            let got = bench::solve_oumv(&inst, &cfg).map_err(|e| e.to_string())?;
            ensure(got == inst.direct_answers(), || format!("OuMv n={n} matrix {m}"))?;
            let inst = OmvInstance::new(matrix, vecs.clone()).map_err(|e| e.to_string())?;
            let got = bench::solve_omv(&inst, &cfg).map_err(|e| e.to_string())?;
            ensure(got == inst.direct_answers(), || format!("OMv n={n} matrix {m}"))?;
            instances += 2;
        }
    }
    let mut rng = gen::rng(8);
    for k in 0..100 {
        let inst = OuMvInstance::random(&mut rng, 16).map_err(|e| e.to_string())?;
        let enc = bench::encode_oumv(&inst);
        ensure(enc.round_updates.iter().all(|&u| u <= 4 * 16), || {
            format!("OuMv {k}: round over budget")
        })?;
        ensure(
            bench::solve_oumv(&inst, &cfg).map_err(|e| e.to_string())? == inst.direct_answers(),
            || format!("OuMv random instance {k}"),
        )?;
        let inst = OmvInstance::random(&mut rng, 16).map_err(|e| e.to_string())?;
        let enc = bench::encode_omv(&inst);
        ensure(enc.round_updates.iter().all(|&u| u <= 2 * 16), || {
            format!("OMv {k}: round over budget")
        })?;
        ensure(
            bench::solve_omv(&inst, &cfg).map_err(|e| e.to_string())? == inst.direct_answers(),
            || format!("OMv random instance {k}"),
        )?;
        instances += 2;
    }
    Ok(format!("{instances} instances agree with direct products"))
}

const SWEEP: [usize; 3] = [1_000, 10_000, 100_000];

fn c9_once(attempt: u64) -> Outcome {
    let cfg = SweepConfig::default();
    let q1 = bench::q1();
    let mut rng = gen::rng(90 + attempt);
    let p1 = bench::timing_sweep(
        &q1,
        &SWEEP,
        &cfg,
        |n| bench::q1_data(&mut rng, n),
        |n, db| gen::random_updates(&mut gen::rng(n as u64), &q1, db, 20_000, n, 0.5),
    )
    .map_err(|e| e.to_string())?;
    let spread = p1.update_spread().unwrap_or(f64::INFINITY);
    let q2 = bench::q2();
    let mut rng = gen::rng(95 + attempt);
    let p2 = bench::timing_sweep(&q2, &SWEEP, &cfg, |n| bench::q2_data(&mut rng, n), |_, _| Vec::new())
        .map_err(|e| e.to_string())?;
    let slope = p2.preprocessing_slope().unwrap_or(f64::NAN);
    let detail = format!(
        "Q1 update medians {:?} ns (spread {spread:.2}), Q2 preprocessing {:?} s (slope {slope:.2})",
        p1.rows.iter().map(|r| r.median_update_ns.round()).collect::<Vec<_>>(),
        p2.rows
            .iter()
            .map(|r| (r.preprocessing_secs * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>(),
    );
    if spread < 2.0 && (1.6..=2.4).contains(&slope) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c9_asymptotics() -> Outcome {
    let mut last = String::new();
    for attempt in 0..3 {
        match c9_once(attempt) {
            Ok(d) => return Ok(format!("attempt {}: {d}", attempt + 1)),
            Err(d) => last = d,
        }
    }
    Err(format!("3 attempts failed; last: {last}"))
}

/// Id, name, time limit in seconds and check.
type Criterion = (u32, &'static str, u64, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "classification fixtures", 1, c1_classification),
        (2, "preprocessing widths", 60, c2_widths),
        (3, "well-behavedness oracle", 30, c3_well_behaved),
        (4, "safe rewritings", 30, c4_safe_rewriting),
        (5, "engine-oracle equivalence", 120, c5_engine_oracle),
        (6, "delta locality", 120, c6_delta_locality),
        (7, "transition system", 60, c7_transition),
        (8, "OuMv/OMv harness", 120, c8_omv),
        (9, "asymptotic smoke tests", 300, c9_asymptotics),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, limit, f) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed();
        let outcome = match outcome {
            Ok(d) if secs > Duration::from_secs(limit) => Err(format!("over the {limit} s limit; {d}")),
            o => o,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {id} {tag} {name} ({:.2} s): {detail}", secs.as_secs_f64());
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
