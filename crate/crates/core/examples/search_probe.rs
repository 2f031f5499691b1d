use evomg_core::numerics::{solve_instance, SolveOptions};
use evomg_core::problem::build_instance;
use evomg_core::semantics::{build_reference_cycle, CycleType};
use evomg_core::{run_search, SearchConfig};

fn main() {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1000);
    let pool: usize = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(64);
    let max_height: usize = std::env::args()
        .nth(3)
        .and_then(|s| s.parse().ok())
        .unwrap_or(12);
    let p_crossover: f64 = std::env::args()
        .nth(4)
        .and_then(|s| s.parse().ok())
        .unwrap_or(2.0 / 3.0);
    let p_terminal: f64 = std::env::args()
        .nth(5)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1.0 / 3.0);

    let p = build_instance(80.0).unwrap();
    let reference = build_reference_cycle(CycleType::V, 0, 1, 1.25, p.depth);
    let rep = solve_instance(&p, &reference, &SolveOptions::search()).unwrap();
    let ref_product = rep.iterations as f64 * rep.work_units_per_iter;
    println!(
        "reference: iters={} cost={:.0} product={:.4e}",
        rep.iterations, rep.work_units_per_iter, ref_product
    );

    let cfg = SearchConfig {
        mu: 32,
        lambda: 32,
        generations: 30,
        difficulty_period: 1000,
        init_pool: pool,
        initial_k: 80.0,
        master_seed: seed,
        workers: 1,
        grow_limits: evomg_core::GrowLimits { min_height: 4, max_height },
        p_crossover,
        p_terminal,
        ..Default::default()
    };
    let t0 = std::time::Instant::now();
    let out = run_search(&cfg).unwrap();
    println!("run took {:.1}s", t0.elapsed().as_secs_f64());

    for snap in &out.history {
        let best = snap
            .front
            .iter()
            .filter(|m| m.convergent)
            .map(|m| m.iterations * m.cost)
            .fold(f64::INFINITY, f64::min);
        let nconv = snap.front.iter().filter(|m| m.convergent).count();
        println!(
            "gen {:2}: front {:2} ({} convergent), best product {:.4e}",
            snap.generation,
            snap.front.len(),
            nconv,
            best
        );
    }
    println!("final front:");
    for ind in out.front() {
        println!(
            "  iters={:6.0} cost={:9.0} product={:.4e} conv={} sexp_len={}",
            ind.fitness.iterations,
            ind.fitness.cost,
            ind.fitness.product(),
            ind.convergent,
            ind.genotype.to_sexp().len()
        );
    }
}
