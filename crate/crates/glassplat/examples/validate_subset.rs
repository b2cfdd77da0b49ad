//! Runs a subset of the acceptance criteria and prints the JSON report.
//!
//! cargo run --release --example validate_subset -- jacobian equirect optics

use glassplat::validate;

fn main() -> glassplat::Result<()> {
    let mut only: Vec<String> = std::env::args().skip(1).collect();
    if only.is_empty() {
        only = vec!["jacobian".into(), "equirect".into(), "hit_point".into(), "optics".into(), "formats".into()];
    }
    let report = validate::run(&validate::select(&only)?, |r| {
        eprintln!("{:>2} {:<20} {}", r.id, r.key, if r.passed { "pass" } else { "fail" });
    });
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(())
}
