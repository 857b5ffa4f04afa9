use bkad::bench::run_benchmark;

fn main() {
    let suite = std::env::args().nth(1).expect("suite name");
    let seeds: usize =
        std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(10);
    let per_seed = std::env::var("PROBE_SEEDS").is_ok();
    let reports = run_benchmark(&suite, seeds, 42).expect("suite runs");
    for r in reports {
        println!(
            "{:<24} fdr {:.3} fnr {:.3} auc {:?} ({:.1}s)",
            r.label, r.fdr, r.fnr, r.auc, r.runtime_s
        );
        if per_seed {
            for row in &r.rows {
                println!("  seed {:>3} fdp {:.3} fnp {:.3}", row.seed, row.fdp, row.fnp);
            }
        }
    }
}
