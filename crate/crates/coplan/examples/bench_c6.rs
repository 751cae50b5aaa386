use coplan::npccg::{solve_coplan, AlgoConfig};
use coplan::suites::fixtures;
use std::time::Instant;

fn main() {
    let base = fixtures::fourteen_bus_reduced();
    let all = Instant::now();
    for (upsilon, k) in [(0.8, 5), (0.9, 5), (0.95, 5), (0.9, 3), (0.9, 4), (0.9, 6)] {
        let mut inst = base.clone();
        inst.resilience_target = upsilon;
        inst.k = k;
        let cfg = AlgoConfig::default();
        let t = Instant::now();
        match solve_coplan(&inst, &cfg) {
            Ok(sol) => println!(
                "upsilon {upsilon} k {k}: {:?} src {:.2} outer {} inner {} in {:.1}s",
                sol.status, sol.src, sol.outer_iterations, sol.inner_iterations_total,
                t.elapsed().as_secs_f64()
            ),
            Err(e) => println!("upsilon {upsilon} k {k}: error {e} after {:.1}s", t.elapsed().as_secs_f64()),
        }
    }
    println!("total {:.1}s", all.elapsed().as_secs_f64());
}
