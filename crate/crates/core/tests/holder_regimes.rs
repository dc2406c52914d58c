//! Hölder fits of additive fields for random admissible tuples in each β
//! regime land in their theoretical windows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fracsk::analysis::{holder_fit_batch, Axis};
use fracsk::grid::GridSpec;
use fracsk::kernels::{select_eta, FracParams, SpectralKernel};
use fracsk::sim::AdditiveSampler;
use fracsk::stats::{collect, BatchPlan};
use fracsk::Verdict;

#[test]
fn random_tuples_per_regime() {
    let mut r = ChaCha8Rng::seed_from_u64(31);
    let g = GridSpec::new(1, 8.0, 128, 1.0 / 64.0, 64).unwrap();
    let plan = BatchPlan { pointwise: false, ..BatchPlan::standard(&g) };
    let k = SpectralKernel::white();
    let mut report = Vec::new();
    let mut bad = 0;
    for (lo, hi) in [(0.1, 0.45), (0.5, 0.5), (0.55, 0.95)] {
        let mut n = 0;
        while n < 10 {
            let beta: f64 = if lo == hi { lo } else { r.random_range(lo..hi) };
            let p = FracParams::new(beta, r.random_range(1.0..2.5), r.random_range(0.0..1.0), 1.0, 1.0, 1).unwrap();
            if select_eta(&p, &k).is_err() {
                continue;
            }
            n += 1;
            let s = AdditiveSampler::new(&g, &p, &k).unwrap();
            let b = collect(&g, &plan, 1000, |i| s.sample(40 + n as u64, i)).unwrap();
            for axis in [Axis::Time, Axis::Space] {
                let f = holder_fit_batch(&b, &p, &k, axis).unwrap();
                if f.verdict == Verdict::Violated {
                    bad += 1;
                }
                report.push(format!(
                    "b={beta:.3} a={:.3} g={:.3} {axis:?}: slope {:.3}±{:.3} window {:?} {:?}",
                    p.alpha, p.gamma, f.fitted_slope, f.slope_stderr, f.theoretical_window, f.verdict
                ));
            }
        }
    }
    assert!(bad == 0, "{bad} violations:\n{}", report.join("\n"));
}
