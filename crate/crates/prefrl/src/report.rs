//! Plain-text renderings of reports.

use std::fmt::Write as _;

use prefrl_core::evalbench::BenchReport;

/// Aligned accuracy table: one row per category, then overall and macro.
pub fn bench_table(r: &BenchReport) -> String {
    let width = r
        .categories
        .iter()
        .map(|c| c.name.len())
        .chain(["category".len(), "overall".len()])
        .max()
        .unwrap();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>6}  {:>7}  {:>8}  {:>10}  {:>12}",
        "category", "pairs", "correct", "accuracy", "chosen_len", "rejected_len"
    );
    for c in &r.categories {
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>7}  {:>8.4}  {:>10.2}  {:>12.2}",
            c.name, c.pairs, c.correct, c.accuracy, c.mean_chosen_len, c.mean_rejected_len
        );
    }
    let pairs: usize = r.categories.iter().map(|c| c.pairs).sum();
    let correct: usize = r.categories.iter().map(|c| c.correct).sum();
    let _ = writeln!(out, "{:<width$}  {:>6}  {:>7}  {:>8.4}", "overall", pairs, correct, r.overall_acc);
    let _ = writeln!(out, "{:<width$}  {:>6}  {:>7}  {:>8.4}", "macro", "", "", r.macro_acc);
    out
}
