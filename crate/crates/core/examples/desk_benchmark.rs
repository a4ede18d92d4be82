//! Run every scenario of the desk benchmark in one session and print the
//! comparison table. `cargo run --release --example desk_benchmark [epochs]`

use std::time::Instant;

use qcseg::pipeline::{compare, desk_benchmark, Scenario, Session};

fn main() {
    let mut session = Session::new();
    let mut records = Vec::new();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(30);
    for s in Scenario::ALL {
        let mut cfg = desk_benchmark(s);
        cfg.seg_train.epochs = epochs;
        let t = Instant::now();
        let out = session.run(&cfg).unwrap();
        for l in &out.log {
            println!("[{}] {l}", s.as_str());
        }
        println!("[{}] {:.1}s", s.as_str(), t.elapsed().as_secs_f64());
        records.push(out.record);
    }
    let c = compare(&records, "semiqcseg").unwrap();
    print!("{}", c.summary_csv());
}
