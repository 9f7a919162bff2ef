//! Acceptance criteria, run sequentially so that each one's runtime is
//! measured without other tests competing for the thread pool.
//!
//! Prints one PASS/FAIL line per criterion and exits non-zero if any fails.
//! Pass criterion ids as arguments to run a subset:
//! `cargo test -p schrodecay --test acceptance -- 7 8`.

use schrodecay::suite::{self, Outcome, SuiteOptions, CRITERIA};

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let opts = SuiteOptions::default();
    let outcomes: Vec<Outcome> = if wanted.is_empty() {
        let mut all = Vec::new();
        // Run in order, printing as we go; shared criteria are computed once.
        let (c2, c3) = suite::calculus_oracle(&opts);
        let (c5, c6) = suite::free_decay();
        let mut pending = [Some(c2), Some(c3), Some(c5), Some(c6)];
        for (id, _) in CRITERIA {
            let o = match id {
                2 => pending[0].take().unwrap(),
                3 => pending[1].take().unwrap(),
                5 => pending[2].take().unwrap(),
                6 => pending[3].take().unwrap(),
                _ => suite::run(id, &opts).expect("known criterion"),
            };
            println!("{}", o.line());
            all.push(o);
        }
        all
    } else {
        wanted
            .iter()
            .map(|&id| {
                let o = suite::run(id, &opts).expect("known criterion");
                println!("{}", o.line());
                o
            })
            .collect()
    };
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!("acceptance: {} passed, {} failed", outcomes.len() - failed, failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
