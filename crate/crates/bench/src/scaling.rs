use std::fmt;
use std::hint::black_box;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use lfc_core::convnets::{AttentionLayer, DilatedBlock, PointwiseBlock};
use lfc_core::landmark::{LfcConfig, LfcLayer, PartitionScheme};
use lfc_core::tensor::{Bound, Graph, ParamSet};
use lfc_core::{Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alloc;
use crate::error::{BenchError, Result};

pub const DEFAULT_SIZES: [usize; 4] = [16, 32, 64, 128];
pub const DEFAULT_CHANNELS: usize = 16;
pub const DEFAULT_REPEATS: usize = 7;
pub const MIN_REPEATS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Operator {
    /// Quadrant LFC with sequential scans.
    Lfc,
    /// Same layer with the channel-parallel scan.
    LfcParallel,
    Attention,
    Pointwise,
    Dilated,
}

impl Operator {
    pub const ALL: [Operator; 5] = [
        Operator::Lfc,
        Operator::LfcParallel,
        Operator::Attention,
        Operator::Pointwise,
        Operator::Dilated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Operator::Lfc => "lfc",
            Operator::LfcParallel => "lfc_parallel",
            Operator::Attention => "attention",
            Operator::Pointwise => "pointwise",
            Operator::Dilated => "dilated",
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Operator {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        Operator::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| BenchError::UnknownOperator(s.to_string()))
    }
}

/// One row of the scaling table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub operator: String,
    pub size: usize,
    pub nodes: usize,
    pub channels: usize,
    /// Median over the timed repeats; the warm-up run is discarded.
    pub wall_ns: u64,
    /// Allocation high-water mark above the pre-call level, worst repeat.
    pub peak_bytes: u64,
}

enum Layer {
    Lfc(LfcLayer),
    Attention(AttentionLayer),
    Pointwise(PointwiseBlock),
    Dilated(DilatedBlock),
}

impl Layer {
    fn new(op: Operator, params: &mut ParamSet<f32>, c: usize) -> Self {
        match op {
            Operator::Lfc | Operator::LfcParallel => {
                let cfg = LfcConfig {
                    scheme: PartitionScheme::Quadrants,
                    c_in: c,
                    c_mid: c,
                    c_out: c,
                    residual: false,
                };
                let mut l = LfcLayer::new(params, "lfc", cfg);
                l.parallel = op == Operator::LfcParallel;
                Layer::Lfc(l)
            }
            Operator::Attention => Layer::Attention(AttentionLayer::new(params, "attention", c, c, c)),
            Operator::Pointwise => Layer::Pointwise(PointwiseBlock::new(params, "pointwise", c, c)),
            Operator::Dilated => Layer::Dilated(DilatedBlock::new(params, "dilated", c, c)),
        }
    }

    fn forward(&self, g: &mut Graph<f32>, p: &Bound, x: Var) -> Result<Var> {
        Ok(match self {
            Layer::Lfc(l) => l.forward(g, p, x, false)?.y,
            Layer::Attention(a) => a.forward(g, p, x)?,
            Layer::Pointwise(b) => b.forward(g, p, x)?,
            Layer::Dilated(b) => b.forward(g, p, x)?,
        })
    }
}

fn measure(layer: &Layer, params: &ParamSet<f32>, x: &Tensor<f32>) -> Result<(u64, u64)> {
    let mut g = Graph::new();
    let p = params.bind_frozen(&mut g);
    let xv = g.constant(x.clone());
    let base = alloc::reset_peak();
    let t0 = Instant::now();
    let y = layer.forward(&mut g, &p, xv)?;
    black_box(g.data(y));
    let ns = t0.elapsed().as_nanos() as u64;
    let peak = alloc::peak_bytes().saturating_sub(base) as u64;
    Ok((ns, peak))
}

fn median(mut v: Vec<u64>) -> u64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2
    }
}

fn bench_one(op: Operator, size: usize, channels: usize, repeats: usize, seed: u64) -> Result<BenchRecord> {
    let mut params = ParamSet::new(seed);
    let layer = Layer::new(op, &mut params, channels);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (size as u64) << 8);
    let n = channels * size * size;
    let x = Tensor::new(&[channels, size, size], (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    measure(&layer, &params, &x)?;
    let mut times = Vec::with_capacity(repeats);
    let mut peak = 0;
    for _ in 0..repeats {
        let (ns, bytes) = measure(&layer, &params, &x)?;
        times.push(ns);
        peak = peak.max(bytes);
    }
    alloc::flush_cache();
    Ok(BenchRecord {
        operator: op.name().to_string(),
        size,
        nodes: size * size,
        channels,
        wall_ns: median(times),
        peak_bytes: peak,
    })
}

/// Forward-only timing and peak memory of every operator at every `H = W`
/// in `sizes`, on seeded random inputs. Runs on the calling thread; only
/// [`Operator::LfcParallel`] fans out to the rayon pool.
pub fn run_scaling(
    operators: &[Operator],
    sizes: &[usize],
    channels: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<BenchRecord>> {
    if repeats < MIN_REPEATS {
        return Err(BenchError::Config(format!("need at least {MIN_REPEATS} repeats, got {repeats}")));
    }
    if channels == 0 || sizes.contains(&0) {
        return Err(BenchError::Config("sizes and channels must be positive".into()));
    }
    let mut out = Vec::with_capacity(operators.len() * sizes.len());
    for &op in operators {
        for &size in sizes {
            out.push(bench_one(op, size, channels, repeats, seed)?);
        }
    }
    Ok(out)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return Err(BenchError::TooFewPoints(xs.len()));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(BenchError::Config("log-log fit needs positive values".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Slope of log wall time against log node count.
pub fn fit_loglog_slope(records: &[BenchRecord]) -> Result<f64> {
    fit_loglog_slope_by(records, |r| r.wall_ns as f64)
}

/// Slope of any per-record measurement against log node count.
pub fn fit_loglog_slope_by(records: &[BenchRecord], metric: impl Fn(&BenchRecord) -> f64) -> Result<f64> {
    let points: Vec<(f64, f64)> = records.iter().map(|r| (r.nodes as f64, metric(r))).collect();
    loglog_slope(&points)
}

/// Records of one operator, in input order.
pub fn records_for(records: &[BenchRecord], op: Operator) -> Vec<BenchRecord> {
    records.iter().filter(|r| r.operator == op.name()).cloned().collect()
}

/// Time and memory slopes of one operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slopes {
    pub time: f64,
    pub memory: f64,
}

pub fn slopes(records: &[BenchRecord], op: Operator) -> Result<Slopes> {
    let rs = records_for(records, op);
    Ok(Slopes {
        time: fit_loglog_slope(&rs)?,
        memory: fit_loglog_slope_by(&rs, |r| r.peak_bytes as f64)?,
    })
}

/// CSV with header `operator,size,nodes,channels,wall_ns,peak_bytes`.
pub fn write_csv(w: impl Write, records: &[BenchRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
