//! Streaming statistics over replica batches.
//!
//! Replicas are processed in fixed-size chunks in parallel; chunk results
//! are merged in chunk order with compensated sums, so the output does not
//! depend on the thread count.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::scalar::KahanSum;
use crate::sim::Field;

/// Raw power sums of a scalar sample.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Accumulator {
    n: u64,
    s: [KahanSum; 4],
}

impl Accumulator {
    #[inline]
    pub fn add(&mut self, x: f64) {
        self.n += 1;
        let x2 = x * x;
        self.s[0].add(x);
        self.s[1].add(x2);
        self.s[2].add(x2 * x);
        self.s[3].add(x2 * x2);
    }

    pub fn merge(&mut self, o: &Accumulator) {
        self.n += o.n;
        for (a, b) in self.s.iter_mut().zip(&o.s) {
            a.merge(b);
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    /// E[X^k] estimate, k = 1..=4.
    pub fn raw(&self, k: usize) -> f64 {
        self.s[k - 1].value() / self.n as f64
    }

    pub fn mean(&self) -> f64 {
        self.raw(1)
    }

    pub fn m2(&self) -> f64 {
        self.raw(2)
    }

    pub fn m4(&self) -> f64 {
        self.raw(4)
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let n = self.n as f64;
        if self.n < 2 {
            return f64::NAN;
        }
        ((self.m2() - self.mean().powi(2)) * n / (n - 1.0)).max(0.0)
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }

    /// Standard error of the second-moment estimate.
    pub fn stderr_m2(&self) -> f64 {
        let n = self.n as f64;
        if self.n < 2 {
            return f64::NAN;
        }
        ((self.m4() - self.m2().powi(2)).max(0.0) / (n - 1.0)).sqrt()
    }

    pub fn excess_kurtosis(&self) -> f64 {
        let m1 = self.mean();
        let (m2, m3, m4) = (self.raw(2), self.raw(3), self.raw(4));
        let c2 = m2 - m1 * m1;
        let c4 = m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1.powi(4);
        c4 / (c2 * c2) - 3.0
    }
}

/// Which statistics a batch records; lags are in time steps or grid cells
/// along the first axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchPlan {
    /// Flat index of the site used for pointwise quantities.
    pub probe: usize,
    pub time_lags: Vec<usize>,
    pub space_lags: Vec<usize>,
    pub cov_lags: Vec<usize>,
    /// Base sites for covariance and stationarity.
    pub bases: Vec<usize>,
    /// Keep per-(t, x) moments.
    pub pointwise: bool,
}

impl BatchPlan {
    pub fn standard(grid: &GridSpec) -> Self {
        let n = grid.n;
        let site = |i: usize| if grid.d == 1 { i } else { i * n + n / 2 };
        let dyadic = |cap: usize| [1usize, 2, 4, 8].into_iter().filter(|&l| l <= cap).collect::<Vec<_>>();
        Self {
            probe: site(n / 2),
            time_lags: dyadic(grid.nt / 2),
            space_lags: dyadic(n / 4),
            cov_lags: [0usize, 2, 4, 8, 16].into_iter().filter(|&l| l < n / 2).collect(),
            bases: (0..4).map(|k| site(k * n / 4 + n / 8)).collect(),
            pointwise: true,
        }
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        let n = grid.points();
        if self.probe >= n || self.bases.iter().any(|&b| b >= n) {
            return Err(Error::invalid("batch plan: site index outside the grid"));
        }
        if self.time_lags.iter().any(|&l| l == 0 || l > grid.nt) {
            return Err(Error::invalid("batch plan: time lags must lie in 1..=nt"));
        }
        if self.space_lags.iter().chain(&self.cov_lags).any(|&l| l >= grid.n) {
            return Err(Error::invalid("batch plan: space lags must be below n"));
        }
        Ok(())
    }
}

/// Per-replica summary row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSummary {
    pub replica: u64,
    /// u(T, probe)
    pub probe: f64,
    /// spatial mean of u(T, ·)²
    pub mean_sq: f64,
    pub max_abs: f64,
}

/// Shift a flat index by `lag` cells along the first axis.
#[inline]
pub fn shift_index(grid: &GridSpec, idx: usize, lag: usize) -> usize {
    let n = grid.n;
    match grid.d {
        1 => (idx + lag) % n,
        _ => ((idx / n + lag) % n) * n + idx % n,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchStats {
    pub grid: GridSpec,
    pub plan: BatchPlan,
    /// per (t, x), row-major; empty unless `plan.pointwise`. Not serialized.
    #[serde(skip, default)]
    pub pointwise: Vec<Accumulator>,
    /// per x at the final time
    pub terminal: Vec<Accumulator>,
    /// spatial mean of |u(T) − u(T − τ)|² per time lag
    pub time_inc: Vec<Accumulator>,
    /// spatial mean of |u(T, x + h) − u(T, x)|² per space lag
    pub space_inc: Vec<Accumulator>,
    /// mean over bases of u(T, b)u(T, b + ℓ) per covariance lag
    pub cov: Vec<Accumulator>,
    /// u(T, b)u(T, b + ℓ), indexed [lag][base]
    pub pair_cov: Vec<Vec<Accumulator>>,
    pub replicas: Vec<ReplicaSummary>,
}

impl BatchStats {
    pub fn new(grid: &GridSpec, plan: &BatchPlan) -> Result<Self> {
        plan.validate(grid)?;
        let n = grid.points();
        let acc = |k: usize| vec![Accumulator::default(); k];
        Ok(Self {
            grid: *grid,
            plan: plan.clone(),
            pointwise: if plan.pointwise { acc((grid.nt + 1) * n) } else { Vec::new() },
            terminal: acc(n),
            time_inc: acc(plan.time_lags.len()),
            space_inc: acc(plan.space_lags.len()),
            cov: acc(plan.cov_lags.len()),
            pair_cov: vec![acc(plan.bases.len()); plan.cov_lags.len()],
            replicas: Vec::new(),
        })
    }

    pub fn count(&self) -> u64 {
        self.replicas.len() as u64
    }

    pub fn ingest(&mut self, replica: u64, f: &Field) -> Result<()> {
        if f.grid != self.grid {
            return Err(Error::invalid("field grid does not match the batch"));
        }
        let g = &self.grid;
        let n = g.points();
        let nt = g.nt;
        if self.plan.pointwise {
            for (a, &v) in self.pointwise.iter_mut().zip(f.values()) {
                a.add(v);
            }
        }
        let last = f.slice(nt);
        for (a, &v) in self.terminal.iter_mut().zip(last) {
            a.add(v);
        }
        for (a, &l) in self.time_inc.iter_mut().zip(&self.plan.time_lags) {
            let prev = f.slice(nt - l);
            let s: KahanSum = last.iter().zip(prev).map(|(x, y)| (x - y) * (x - y)).collect();
            a.add(s.value() / n as f64);
        }
        for (a, &l) in self.space_inc.iter_mut().zip(&self.plan.space_lags) {
            let s: KahanSum = (0..n).map(|i| (last[shift_index(g, i, l)] - last[i]).powi(2)).collect();
            a.add(s.value() / n as f64);
        }
        for (k, &l) in self.plan.cov_lags.iter().enumerate() {
            let mut s = KahanSum::new();
            for (b, &base) in self.plan.bases.iter().enumerate() {
                let p = last[base] * last[shift_index(g, base, l)];
                self.pair_cov[k][b].add(p);
                s.add(p);
            }
            self.cov[k].add(s.value() / self.plan.bases.len() as f64);
        }
        let mean_sq: KahanSum = last.iter().map(|v| v * v).collect();
        self.replicas.push(ReplicaSummary {
            replica,
            probe: last[self.plan.probe],
            mean_sq: mean_sq.value() / n as f64,
            max_abs: f.max_abs(),
        });
        Ok(())
    }

    pub fn merge(&mut self, o: &BatchStats) {
        let m = |a: &mut [Accumulator], b: &[Accumulator]| a.iter_mut().zip(b).for_each(|(x, y)| x.merge(y));
        m(&mut self.pointwise, &o.pointwise);
        m(&mut self.terminal, &o.terminal);
        m(&mut self.time_inc, &o.time_inc);
        m(&mut self.space_inc, &o.space_inc);
        m(&mut self.cov, &o.cov);
        for (a, b) in self.pair_cov.iter_mut().zip(&o.pair_cov) {
            m(a, b);
        }
        self.replicas.extend_from_slice(&o.replicas);
    }

    /// Pointwise accumulator at the probe site and final time.
    pub fn probe(&self) -> &Accumulator {
        &self.terminal[self.plan.probe]
    }

    /// Rows t, x, mean, m2, m4, stderr (of m2) for every (t, x).
    pub fn write_moments_csv<W: Write>(&self, w: W) -> Result<()> {
        if !self.plan.pointwise {
            return Err(Error::invalid("batch was collected without pointwise moments"));
        }
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        wr.write_record(["t", "x", "mean", "m2", "m4", "stderr"]).map_err(io)?;
        let g = &self.grid;
        let n = g.points();
        for m in 0..=g.nt {
            let t = g.time(m).to_string();
            for idx in 0..n {
                let x = match g.d {
                    1 => g.coord(idx).to_string(),
                    _ => format!("{};{}", g.coord(idx / g.n), g.coord(idx % g.n)),
                };
                let a = &self.pointwise[m * n + idx];
                wr.write_record([
                    t.clone(),
                    x,
                    a.mean().to_string(),
                    a.m2().to_string(),
                    a.m4().to_string(),
                    a.stderr_m2().to_string(),
                ])
                .map_err(io)?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Rows replica, probe, mean_sq, max_abs.
    pub fn write_replicas_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        wr.write_record(["replica", "probe", "mean_sq", "max_abs"]).map_err(io)?;
        for r in &self.replicas {
            wr.write_record([r.replica.to_string(), r.probe.to_string(), r.mean_sq.to_string(), r.max_abs.to_string()])
                .map_err(io)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Replicas per parallel task.
pub const CHUNK: u64 = 32;

/// Runs `sample` for replicas 0..count in parallel chunks and reduces in
/// chunk order.
pub fn collect<F>(grid: &GridSpec, plan: &BatchPlan, count: u64, sample: F) -> Result<BatchStats>
where
    F: Fn(u64) -> Result<Field> + Sync,
{
    let chunks: Vec<(u64, u64)> = (0..count.div_ceil(CHUNK)).map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(count))).collect();
    let parts: Vec<Result<BatchStats>> = chunks
        .par_iter()
        .map(|&(a, b)| {
            let mut s = BatchStats::new(grid, plan)?;
            for r in a..b {
                s.ingest(r, &sample(r)?)?;
            }
            Ok(s)
        })
        .collect();
    let mut out = BatchStats::new(grid, plan)?;
    for p in parts {
        out.merge(&p?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{FracParams, SpectralKernel};
    use crate::sim::AdditiveSampler;
    use proptest::prelude::*;

    #[test]
    fn accumulator_moments() {
        let mut a = Accumulator::default();
        for x in [1.0, 2.0, 3.0, 4.0] {
            a.add(x);
        }
        assert_eq!(a.mean(), 2.5);
        assert_eq!(a.m2(), 7.5);
        assert!((a.variance() - 5.0 / 3.0).abs() < 1e-15);
        let mut b = Accumulator::default();
        b.add(1.0);
        b.add(2.0);
        let mut c = Accumulator::default();
        c.add(3.0);
        c.add(4.0);
        b.merge(&c);
        assert_eq!(b.mean(), a.mean());
        assert_eq!(b.m4(), a.m4());
    }

    #[test]
    fn shift_wraps() {
        let g = GridSpec::new(2, 1.0, 8, 0.1, 1).unwrap();
        assert_eq!(shift_index(&g, 7 * 8 + 3, 2), 8 + 3);
        let g1 = GridSpec::new(1, 1.0, 8, 0.1, 1).unwrap();
        assert_eq!(shift_index(&g1, 7, 1), 0);
    }

    #[test]
    fn collection_is_reproducible() {
        let g = GridSpec::new(1, 8.0, 32, 0.1, 8).unwrap();
        let p = FracParams::new(0.75, 1.5, 0.5, 1.0, 1.0, 1).unwrap();
        let s = AdditiveSampler::new(&g, &p, &SpectralKernel::riesz(0.5, 1).unwrap()).unwrap();
        let plan = BatchPlan::standard(&g);
        let run = || collect(&g, &plan, 70, |r| s.sample(5, r)).unwrap();
        let (a, b) = (run(), run());
        let mut x = Vec::new();
        let mut y = Vec::new();
        a.write_moments_csv(&mut x).unwrap();
        b.write_moments_csv(&mut y).unwrap();
        assert_eq!(x, y);
        assert_eq!(a.count(), 70);
        let mut serial = BatchStats::new(&g, &plan).unwrap();
        for r in 0..70 {
            serial.ingest(r, &s.sample(5, r).unwrap()).unwrap();
        }
        assert!((serial.probe().m2() - a.probe().m2()).abs() < 1e-14 * a.probe().m2());
    }

    proptest! {
        #[test]
        fn merge_matches_sequential(xs in prop::collection::vec(-1e3f64..1e3, 1..200), cut in 0usize..200) {
            let cut = cut.min(xs.len());
            let mut all = Accumulator::default();
            xs.iter().for_each(|&x| all.add(x));
            let (mut a, mut b) = (Accumulator::default(), Accumulator::default());
            xs[..cut].iter().for_each(|&x| a.add(x));
            xs[cut..].iter().for_each(|&x| b.add(x));
            a.merge(&b);
            prop_assert_eq!(a.count(), all.count());
            for k in 1..=4 {
                let scale: f64 = xs.iter().map(|x| x.abs().powi(k as i32)).sum::<f64>() / xs.len() as f64;
                prop_assert!((a.raw(k) - all.raw(k)).abs() <= 1e-13 * scale.max(1e-300));
            }
        }
    }
}
