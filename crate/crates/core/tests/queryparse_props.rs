use pimolap_core::parse_query;
use pimolap_core::workload::{random_query, random_table};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]
    #[test]
    fn printed_queries_parse_back_identically(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_table(&mut rng, 0);
        let groups: Vec<String> = t.schema.iter().take(2).map(|a| a.name.clone()).collect();
        let ir = random_query(&mut rng, &t.schema, &groups, 4, 5, 2);
        let text = ir.to_string();
        let back = parse_query(&text).unwrap();
        prop_assert_eq!(&back, &ir, "{}", text);
        prop_assert_eq!(back.to_string(), text);
    }

    #[test]
    fn arbitrary_input_never_panics(s in "\\PC{0,80}") {
        if let Err(e) = parse_query(&s) {
            prop_assert!(e.offset <= s.len());
        }
    }

    #[test]
    fn mutated_queries_never_panic(seed in any::<u64>(), cut in 0usize..200, junk in "[()*,=<>!A-Za-z0-9 .-]{0,6}") {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_table(&mut rng, 0);
        let text = random_query(&mut rng, &t.schema, &[], 3, 3, 0).to_string();
        let mut at = cut.min(text.len());
        while !text.is_char_boundary(at) {
            at -= 1;
        }
        let mutated = format!("{}{}{}", &text[..at], junk, &text[at..]);
        if let Err(e) = parse_query(&mutated) {
            prop_assert!(e.offset <= mutated.len());
        }
    }
}

#[test]
fn keywords_are_case_insensitive() {
    let a = parse_query("select sum(x) from t where x between 1 and 3 group by g").unwrap();
    let b = parse_query("SELECT SUM(x) FROM t WHERE x BETWEEN 1 AND 3 GROUP BY g").unwrap();
    assert_eq!(a, b);
}

#[test]
fn deep_nesting_is_rejected_without_overflow() {
    let deep = format!("SELECT SUM(x) FROM t WHERE {}x = 1{}", "(".repeat(5000), ")".repeat(5000));
    assert!(parse_query(&deep).is_err());
    let ok = format!("SELECT SUM(x) FROM t WHERE {}x = 1{}", "(".repeat(50), ")".repeat(50));
    assert!(parse_query(&ok).is_ok());
}

#[test]
fn error_reports_expected_token() {
    let e = parse_query("SELECT SUM(a) FROM").unwrap_err();
    assert_eq!(e.offset, 18);
    assert!(e.to_string().contains("expected"));
}
