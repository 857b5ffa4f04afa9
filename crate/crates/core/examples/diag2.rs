use bkad::core::RunRng;
use bkad::datagen::{generate, GeneratorSpec};
use bkad::detector::{run_series, DetectorConfig};
use bkad::scoring::Ncm;

fn main() {
    let rep: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let alpha: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(0.2);
    let master = RunRng::new(42);
    let mut data_rng = master.child_for(2 * rep);
    let mut det_rng = master.child_for(2 * rep + 1);
    let g = generate(&GeneratorSpec::mog_mean_shift(3000, 500.0, 5.0), &mut data_rng).unwrap();
    let (series, truth) = (g.series, g.truth);
    let config = DetectorConfig { ncm: Ncm::default_knn(), ..DetectorConfig::preset(alpha) };
    let out = run_series(&config, &series, Some(&truth), &mut det_rng).unwrap();
    let w = out.warmup_len;
    eprintln!("true breakpoints: {:?}", truth.breakpoints);
    eprintln!("final breakpoints: {:?}", out.trace.last().unwrap().breakpoints);
    let (mut fp, mut tp, mut fnc) = (0, 0, 0);
    let mut fps: Vec<usize> = vec![];
    let mut fns: Vec<usize> = vec![];
    let statuses = out.statuses();
    for (i, (&s, &l)) in statuses[w..].iter().zip(&truth.labels[w..]).enumerate() {
        let pos = w + i + 1;
        match (s, l) {
            (true, true) => tp += 1,
            (true, false) => { fp += 1; if fps.len() < 60 { fps.push(pos); } }
            (false, true) => { fnc += 1; if fns.len() < 60 { fns.push(pos); } }
            _ => {}
        }
    }
    eprintln!("post-warmup: tp {tp} fp {fp} fn {fnc}");
    eprintln!("fp positions: {fps:?}");
    eprintln!("fn positions: {fns:?}");
    for &pos in &fns {
        let r = &out.records[pos - 1];
        eprintln!("  fn {pos}: score {:.3} p {:.4} decided_at {}", r.score, r.p_value, r.decided_at);
    }
    for tt in [1330usize, 1566, 1652, 1716] {
        let tr = &out.trace[tt - 1];
        eprintln!("  trace t={tt}: m_t {} cal_len {} thr {:.5}", tr.m_t, tr.calibration_len, tr.threshold);
    }
    for &pos in &fps {
        let r = &out.records[pos - 1];
        eprintln!("  fp {pos}: score {:.3} p {:.4} decided_at {}", r.score, r.p_value, r.decided_at);
    }
}
