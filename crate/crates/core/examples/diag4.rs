use bkad::changepoint::{detect_breakpoints, KcpState};
use bkad::core::RunRng;
use bkad::datagen::{generate, GeneratorSpec};
use bkad::kernels::{median_heuristic, KernelSpec};

fn main() {
    let mog = std::env::args().nth(1).map_or(true, |a| a == "mog");
    let master = RunRng::new(42);
    for rep in 0u64..10 {
        let mut data_rng = master.child_for(2 * rep);
        let mut rng = master.child_for(1000 + rep);
        let spec = if mog {
            GeneratorSpec::mog_mean_shift(3000, 500.0, 5.0)
        } else {
            GeneratorSpec::gaussian_mean_shift(3000, 500.0, 5.0)
        };
        let g = generate(&spec, &mut data_rng).unwrap();
        let h = median_heuristic(&g.series, &mut rng).unwrap();
        let seg = detect_breakpoints(
            &g.series,
            &KernelSpec::gaussian(h),
            KcpState::default_d_max(3000),
            2,
        )
        .unwrap();
        let found = seg.breakpoints();
        // match each true bp to nearest found
        let errs: Vec<i64> = g
            .truth
            .breakpoints
            .iter()
            .map(|&b| {
                found
                    .iter()
                    .map(|&f| f as i64 - b as i64)
                    .min_by_key(|d| d.abs())
                    .unwrap_or(9999)
            })
            .collect();
        println!(
            "rep {rep} h={h:.2} true D={} found D={} errs={errs:?}",
            g.truth.breakpoints.len(),
            found.len()
        );
    }
}
