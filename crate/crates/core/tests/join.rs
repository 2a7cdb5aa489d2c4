mod common;

use proptest::prelude::*;

use common::fixture;
use mixivm::join::evaluate;
use mixivm::{gen, oracle, Query};

fn query_and_seed() -> impl Strategy<Value = (Query, u64)> {
    (any::<u64>(), any::<u64>())
        .prop_map(|(qs, ds)| (gen::random_query(&mut gen::rng(qs), &gen::QueryShape::default()), ds))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn generic_join_matches_nested_loops((q, seed) in query_and_seed(), size in 0usize..25, domain in 1usize..5) {
        let db = gen::random_database(&mut gen::rng(seed), &q, size, domain);
        let expected = oracle::evaluate(&q, &db).unwrap();
        prop_assert_eq!(evaluate(&q, &db), expected, "{}", q);
    }

    #[test]
    fn oracles_agree((q, seed) in query_and_seed(), size in 0usize..25, domain in 1usize..5) {
        let db = gen::random_database(&mut gen::rng(seed), &q, size, domain);
        prop_assert_eq!(oracle::evaluate(&q, &db).unwrap(), oracle::evaluate_sort_merge(&q, &db).unwrap());
    }
}

#[test]
fn oracles_agree_on_fixtures() {
    for name in ["q1", "q2", "q3", "q4", "q5", "q6", "q7", "q8", "rsyz", "twelve"] {
        let q = fixture(name);
        for seed in 0..5 {
            let db = gen::random_database(&mut gen::rng(seed), &q, 15, 3);
            let nested = oracle::evaluate(&q, &db).unwrap();
            assert_eq!(
                nested,
                oracle::evaluate_sort_merge(&q, &db).unwrap(),
                "{name} seed {seed}"
            );
            assert_eq!(nested, evaluate(&q, &db), "{name} seed {seed}");
        }
    }
}
