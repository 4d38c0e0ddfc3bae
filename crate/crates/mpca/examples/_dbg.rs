use mpca::det::{power_iterate, DetOptions};
use mpca::matrix::DiagonalOp;
use mpca::rng::{random_unit, run_rng};
use mpca::tuner::{best_heavy_ball, TunerConfig};

fn main() {
    let d = 1000;
    let mut diag: Vec<f64> = (0..d)
        .map(|i| 0.999 * (1.0 - (i as f64 - 1.0) / (d as f64 - 2.0)))
        .collect();
    diag[0] = 1.0;
    let op = DiagonalOp::new(diag);
    let cfg = TunerConfig { rounds: 40, ..Default::default() };
    for seed in 0..10u64 {
        let tuned = best_heavy_ball(&op, &cfg, seed).unwrap();
        let mut rng = run_rng(seed);
        let w0 = random_unit(&mut rng, d);
        let power = power_iterate(&op, &w0, tuned.matvec_count as usize - 1, &DetOptions::default()).unwrap();
        let rq_power = power.trace.rows().last().unwrap().rayleigh;
        println!("seed {seed}: tuner rq={:.8} beta={:.4} | power rq={:.8}  {}", tuned.rayleigh, tuned.beta, rq_power, if tuned.rayleigh >= rq_power - 1e-12 { "WIN" } else { "LOSS" });
        if false {
            for r in &tuned.rounds {
                println!("   round {:2}: beta={:.5} mult={:.2} rq={:.8}", r.round, r.beta_center, r.multiplier, r.rayleigh);
            }
        }
    }
}
