//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so every line is printed whether or not it passes.

#[path = "../../../core/tests/common/mod.rs"]
mod common;

mod algorithms;
mod cli;

use std::panic;
use std::time::Instant;

pub type Outcome = Result<String, String>;

type Criterion = (u32, &'static str, fn() -> Outcome);

/// `Ok(detail)` when `ok`, otherwise `Err(detail)`.
pub fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

fn main() {
    let criteria: [Criterion; 12] = [
        (
            1,
            "SBM update equals brute-force collapsed conditional",
            algorithms::sbm_oracle,
        ),
        (
            2,
            "SSMB update equals brute-force collapsed conditional",
            algorithms::ssmb_oracle,
        ),
        (
            3,
            "SMMB update equals brute-force pair conditional (eta = 0)",
            algorithms::smmb_oracle,
        ),
        (
            4,
            "softmax gradient matches central differences",
            algorithms::gradient_check,
        ),
        (
            5,
            "conjugate gradient never decreases the objective",
            algorithms::ascent,
        ),
        (
            6,
            "SBM recovers assortative and disassortative blocks",
            empirical::planted_recovery,
        ),
        (
            7,
            "SSMB beats SBM on heterogeneous classes, ties on homogeneous",
            empirical::heterogeneity,
        ),
        (
            8,
            "SMMB takes longer to fit than SSMB",
            empirical::runtime_ordering,
        ),
        (
            9,
            "reductions to SBM and to the unsupervised mixed-membership fit",
            algorithms::reductions,
        ),
        (
            10,
            "statistics, caches and simplices stay consistent",
            algorithms::consistency,
        ),
        (
            11,
            "benchmark defaults and SBM pinned at K = C",
            cli::protocol,
        ),
        (12, "end-to-end smoke run", cli::smoke),
    ];
    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, check) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = panic::catch_unwind(check).unwrap_or_else(|p| Err(panic_message(p)));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id:>2}  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id:>2}  {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
