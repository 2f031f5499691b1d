use std::time::Instant;

use evomg_core::numerics::{solve_instance, SolveOptions};
use evomg_core::problem::build_instance;
use evomg_core::semantics::{build_reference_cycle, CycleType};

fn main() {
    let cases = [
        (80.0, CycleType::V, 0, 1, 1.25),
        (80.0, CycleType::V, 2, 2, 0.5),
        (80.0, CycleType::W, 3, 3, 0.45),
        (160.0, CycleType::V, 0, 1, 1.25),
        (160.0, CycleType::W, 3, 3, 0.45),
    ];
    for (k, cy, nu1, nu2, omega) in cases {
        let p = build_instance(k).unwrap();
        let prog = build_reference_cycle(cy, nu1, nu2, omega, p.depth);
        let t0 = Instant::now();
        let rep = solve_instance(&p, &prog, &SolveOptions::benchmark()).unwrap();
        let dt = t0.elapsed().as_secs_f64();
        println!(
            "k={k} {cy}({nu1},{nu2}) w={omega}: iters={} conv={} wu/it={:.1} time={:.2}s ({:.2} ms/it)",
            rep.iterations, rep.converged, rep.work_units_per_iter, dt,
            1e3 * dt / rep.iterations.max(1) as f64
        );
    }
}
