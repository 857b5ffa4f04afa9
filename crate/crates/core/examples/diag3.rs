use bkad::core::{RunRng, SegmentView};
use bkad::datagen::{generate, GeneratorSpec};
use bkad::scoring::Ncm;

fn main() {
    let master = RunRng::new(42);
    let mut data_rng = master.child_for(0);
    let mut rng = master.child_for(2);
    let g = generate(&GeneratorSpec::mog_mean_shift(3000, 500.0, 5.0), &mut data_rng).unwrap();
    // score the whole first stationary segment in-sample with knn
    let end = g.truth.breakpoints.first().copied().unwrap_or(3000).min(1500);
    let seg = SegmentView { start: 1, end, series: &g.series };
    let positions: Vec<usize> = (1..=end).collect();
    let ncm = Ncm::default_knn();
    let scored = ncm.score_segment(&seg, &positions, &mut rng).unwrap();
    let mut nominal: Vec<f64> = vec![];
    let mut anom: Vec<f64> = vec![];
    for (p, s) in scored {
        if g.truth.labels[p - 1] { anom.push(s) } else { nominal.push(s) }
    }
    nominal.sort_by(|a, b| a.partial_cmp(b).unwrap());
    anom.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |v: &[f64], p: f64| v[((v.len() - 1) as f64 * p).round() as usize];
    eprintln!("nominal n={} q25={:.3} q50={:.3} q75={:.3} q90={:.3} q95={:.3} q99={:.3} q99.5={:.3} q99.8={:.3} max={:.3}",
        nominal.len(), q(&nominal,0.25), q(&nominal,0.5), q(&nominal,0.75), q(&nominal,0.9),
        q(&nominal,0.95), q(&nominal,0.99), q(&nominal,0.995), q(&nominal,0.998), nominal.last().unwrap());
    eprintln!("anomaly n={} scores={:?}", anom.len(), anom.iter().map(|x| (x*1000.0).round()/1000.0).collect::<Vec<_>>());
    let q1 = q(&nominal, 0.25); let q3 = q(&nominal, 0.75);
    eprintln!("additive fence {:.3}  multiplicative fence {:.3}", q3 + 2.5*(q3-q1), q3*(q3/q1).powf(2.5));
}
