fn main() {
    let t0 = std::time::Instant::now();
    let outcomes = sbnlab_core::harness::run_verify(0);
    for o in &outcomes {
        println!("{} {} ({})", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    println!("total: {:.1}s", t0.elapsed().as_secs_f64());
}
