//! One line per acceptance criterion; exits nonzero if any fails.
//!
//! `cargo test -p wvn-core --test acceptance [-- 3 5]` runs all or the listed criteria.

use std::process::ExitCode;

use wvn_core::verify::{run_criterion, CRITERIA};

fn main() -> ExitCode {
    let picked: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let ids: Vec<u8> = if picked.is_empty() { CRITERIA.to_vec() } else { picked };
    let mut failed = 0;
    for id in ids {
        let r = run_criterion(id);
        println!("{}", r.line());
        if !r.passed {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion/criteria failed");
        ExitCode::FAILURE
    }
}
