//! One noisy drop-wave run: per-level work, leaf count and mismatch error.
//!
//! `cargo run --release -p levelset-core --features parallel --example drop_wave -- 5`

use levelset_core::bench::{drop_wave, drop_wave_config, drop_wave_oracle};
use levelset_core::metrics::{error_key, estimate_error, PointFamily};
use levelset_core::run_adaptive;

fn main() {
    let max_level: u32 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(4);
    let cfg = drop_wave_config(max_level);
    let (estimate, ledger) = run_adaptive(&cfg, &drop_wave_oracle()).expect("preset config is valid");
    println!("L = {max_level}, base level {}", estimate.base_level);
    println!("level  phase     visited   refined   cost");
    for t in &ledger.per_level {
        println!("{:>5}  {:<8?} {:>8}  {:>8}   {:.3e}", t.level, t.phase, t.cells_visited, t.cells_refined, t.cost());
    }
    let error = estimate_error(&estimate, &drop_wave, 512, error_key(cfg.seed), PointFamily::ScrambledSobol);
    println!("{} leaves, total work {:.3e}, mismatch volume {error:.3e}", estimate.leaves.len(), ledger.total_cost);
}
