//! One test per acceptance criterion. Each prints its report line; run with
//! `--nocapture` to see the notes of passing criteria as well.

use cvdmh::reproduce::{
    greedy_bound, metric_correctness, retrieval_lift, ridge_identity, search_exactness, solver_behavior,
    sparse_coding_contract, submodularity_suite, theta_feasibility, CriterionReport,
};

const SEED: u64 = 0;

fn check(report: CriterionReport) {
    println!("{report}");
    for note in &report.notes {
        println!("    {note}");
    }
    assert!(report.passed, "{report}\n{}", report.notes.join("\n"));
}

#[test]
fn criterion_1_greedy_bound() {
    check(greedy_bound(200, SEED));
}

#[test]
fn criterion_2_submodularity_and_monotonicity() {
    check(submodularity_suite(200, SEED));
}

#[test]
fn criterion_3_sparse_coding_contract() {
    check(sparse_coding_contract(50, SEED));
}

#[test]
fn criterion_4_ridge_identity() {
    check(ridge_identity(100, SEED));
}

#[test]
fn criterion_5_theta_feasibility() {
    check(theta_feasibility(20, 10_000, SEED));
}

#[test]
fn criterion_6_solver_behavior() {
    check(solver_behavior(SEED));
}

#[test]
fn criterion_7_retrieval_lift() {
    check(retrieval_lift(&(SEED..SEED + 5).collect::<Vec<_>>()));
}

#[test]
fn criterion_8_search_exactness() {
    check(search_exactness(SEED));
}

#[test]
fn criterion_9_metric_correctness() {
    check(metric_correctness());
}
