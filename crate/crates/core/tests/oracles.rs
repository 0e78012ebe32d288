mod support;

use support::{check_cbp_case, check_cr_case, check_sps_case};

#[test]
fn selection_matches_brute_force_enumeration() {
    let mut escalated = 0;
    let mut exact = 0;
    for case in 0..1000 {
        let r = check_sps_case(case).unwrap_or_else(|e| panic!("{e}"));
        escalated += usize::from(r.escalated);
        exact += usize::from(r.exact);
    }
    assert!(escalated >= 50, "only {escalated} cases escalated");
    assert!(exact >= 995, "only {exact} cases had a strict cut-off");
    println!("{escalated} escalation cases, {exact} with a strict cut-off");
}

#[test]
fn cr_matches_direct_count() {
    for case in 0..10_000 {
        check_cr_case(case).unwrap_or_else(|e| panic!("{e}"));
    }
}

#[test]
fn cbp_matches_direct_count() {
    let mut undefined = 0;
    for case in 0..10_000 {
        if check_cbp_case(case).unwrap_or_else(|e| panic!("{e}")).is_none() {
            undefined += 1;
        }
    }
    assert!(undefined > 0 && undefined < 2000);
}
