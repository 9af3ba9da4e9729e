//! Monte Carlo experiments on conditioned trees: the law of large numbers
//! for F(𝒯_n)/n, the CLT for (F(𝒯_n) − nμ)/√n and joint normality of
//! several additive functionals.
//!
//! Replicate i always draws from `stream(seed, Purpose::Tree, i)`, and
//! per-replicate values are collected in replicate order before any
//! statistic is formed, so results do not depend on the worker count.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{FringeData, TollFunction};
use crate::offspring::OffspringDistribution;
use crate::rng::{stream, Purpose};
use crate::sampler::{conditioned_degrees_into, SamplerConfig};
use crate::scalar::Scalar;
use crate::stats;
use crate::theory::TheoryResult;

pub const MIN_REPLICATES: usize = 100;

/// What F is centered on before standardizing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// n·μ from the supplied theory; the sample mean when there is none.
    #[default]
    Theory,
    /// The sample mean.
    Empirical,
    /// A given value, e.g. the exact E F(𝒯_n).
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentOptions {
    /// `None` uses the global rayon pool.
    pub workers: Option<usize>,
    pub sampler: SamplerConfig,
    pub centering: Centering,
    /// Add U(−1/2, 1/2) noise before the KS test. `None` jitters exactly
    /// when every F value is an integer.
    pub jitter: Option<bool>,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self { workers: None, sampler: SamplerConfig::default(), centering: Centering::Theory, jitter: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleStats {
    pub dist: String,
    pub functional: String,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub mean_over_n: f64,
    /// Standard error of `mean_over_n`.
    pub mean_se: f64,
    pub var_over_n: f64,
    pub theory_mu: Option<f64>,
    pub theory_gamma_sq: Option<f64>,
    pub centering: Centering,
    pub jittered: bool,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Component names, means and covariance/n for joint experiments.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub means_over_n: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance_over_n: Option<Vec<Vec<f64>>>,
    pub elapsed_ms: u64,
    /// F values in replicate order.
    #[serde(skip)]
    pub values: Vec<f64>,
    /// Standardized values in replicate order.
    #[serde(skip)]
    pub standardized: Vec<f64>,
}

pub const CSV_HEADER: &str =
    "dist,functional,n,N,seed,mean_over_n,var_over_n,theory_mu,theory_gamma_sq,ks_D,ks_p,skew,exkurt,elapsed_ms";

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl SampleStats {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&self.dist),
            csv_field(&self.functional),
            self.n,
            self.replicates,
            self.seed,
            self.mean_over_n,
            self.var_over_n,
            opt(self.theory_mu),
            opt(self.theory_gamma_sq),
            self.ks_statistic,
            self.ks_p_value,
            self.skewness,
            self.excess_kurtosis,
            self.elapsed_ms
        )
    }
}

fn check_replicates(replicates: usize) -> Result<()> {
    if replicates < MIN_REPLICATES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_REPLICATES} replicates, got {replicates}")));
    }
    Ok(())
}

fn with_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Draws `replicates` trees of size n and maps each degree sequence to a
/// row of values, in replicate order. Replicate i uses stream offset
/// `stream_base + i`.
fn simulate(
    dist: &OffspringDistribution,
    n: usize,
    replicates: usize,
    seed: u64,
    stream_base: u64,
    opts: &ExperimentOptions,
    eval: &(dyn Fn(&[u32]) -> Vec<f64> + Sync),
) -> Result<Vec<Vec<f64>>> {
    let cfg = opts.sampler;
    with_pool(opts.workers, || {
        (0..replicates)
            .into_par_iter()
            .map_init(
                || Vec::with_capacity(n),
                |buf, i| {
                    let mut rng = stream(seed, Purpose::Tree, stream_base + i as u64);
                    conditioned_degrees_into(dist, n, &mut rng, &cfg, buf)?;
                    Ok(eval(buf))
                },
            )
            .collect::<Result<Vec<_>>>()
    })?
}

/// F(T) for every toll in `fs`, from one pass over the fringe subtrees.
fn additive_values(degrees: &[u32], fs: &[TollFunction]) -> Vec<f64> {
    let data = FringeData::from_degrees(degrees, fs.iter().any(TollFunction::needs_s1));
    fs.iter().map(|f| <f64 as Scalar>::sum(data.nodes().map(|v| f.eval(&v)))).collect()
}

fn jitter_values(values: &[f64], seed: u64) -> Vec<f64> {
    values
        .iter()
        .enumerate()
        .map(|(i, &x)| x + stream(seed, Purpose::Jitter, i as u64).gen_range(-0.5..0.5))
        .collect()
}

/// Summary statistics for a column of F values.
fn summarize(
    dist: &OffspringDistribution,
    functional: &str,
    n: usize,
    seed: u64,
    values: Vec<f64>,
    theory: Option<&TheoryResult>,
    opts: &ExperimentOptions,
) -> SampleStats {
    let nf = n as f64;
    let replicates = values.len();
    let mean = stats::mean(&values);
    let var = stats::variance(&values);
    let jitter = opts.jitter.unwrap_or_else(|| values.iter().all(|x| x.fract() == 0.0));
    let tested = if jitter { jitter_values(&values, seed) } else { values.clone() };
    let (center, scale) = match (opts.centering, theory) {
        (Centering::Theory, Some(t)) => (nf * t.mu, (nf * t.gamma_sq).sqrt()),
        (Centering::Value(c), Some(t)) => (c, (nf * t.gamma_sq).sqrt()),
        (Centering::Value(c), None) => (c, stats::variance(&tested).sqrt()),
        _ => (stats::mean(&tested), stats::variance(&tested).sqrt()),
    };
    let standardized: Vec<f64> = if scale > 0.0 && scale.is_finite() {
        tested.iter().map(|x| (x - center) / scale).collect()
    } else {
        tested.iter().map(|x| x - center).collect()
    };
    let mut sorted = standardized.clone();
    sorted.sort_by(f64::total_cmp);
    let ks = stats::ks_normal(&sorted);
    let (skewness, excess_kurtosis) = stats::shape(&values);
    SampleStats {
        dist: dist.name().to_string(),
        functional: functional.to_string(),
        n,
        replicates,
        seed,
        mean_over_n: mean / nf,
        mean_se: (var / replicates as f64).sqrt() / nf,
        var_over_n: var / nf,
        theory_mu: theory.map(|t| t.mu),
        theory_gamma_sq: theory.map(|t| t.gamma_sq),
        centering: opts.centering,
        jittered: jitter,
        ks_statistic: ks.statistic,
        ks_p_value: ks.p_value,
        skewness,
        excess_kurtosis,
        labels: None,
        means_over_n: None,
        covariance_over_n: None,
        elapsed_ms: 0,
        values,
        standardized,
    }
}

/// Samples F(𝒯_n) `replicates` times. With a theory result, the KS test
/// standardizes by (nμ, nγ²) (or the chosen centering); otherwise by the
/// sample moments.
pub fn run_clt_experiment(
    dist: &OffspringDistribution,
    f: &TollFunction,
    n: usize,
    replicates: usize,
    seed: u64,
    theory: Option<&TheoryResult>,
    opts: &ExperimentOptions,
) -> Result<SampleStats> {
    check_replicates(replicates)?;
    let start = Instant::now();
    let fs = std::slice::from_ref(f);
    let rows = simulate(dist, n, replicates, seed, 0, opts, &|d| additive_values(d, fs))?;
    let values = rows.into_iter().map(|r| r[0]).collect();
    let mut out = summarize(dist, f.name(), n, seed, values, theory, opts);
    out.elapsed_ms = start.elapsed().as_millis() as u64;
    Ok(out)
}

/// Samples the vector (F₁, …, F_d)(𝒯_n) and reports its covariance/n. The
/// scalar fields describe the first component.
pub fn run_multi_experiment(
    dist: &OffspringDistribution,
    fs: &[TollFunction],
    n: usize,
    replicates: usize,
    seed: u64,
    opts: &ExperimentOptions,
) -> Result<SampleStats> {
    check_replicates(replicates)?;
    if fs.is_empty() {
        return Err(Error::InvalidArgument("need at least one functional".into()));
    }
    let start = Instant::now();
    let rows = simulate(dist, n, replicates, seed, 0, opts, &|d| additive_values(d, fs))?;
    let columns: Vec<Vec<f64>> = (0..fs.len()).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let nf = n as f64;
    let cov = stats::covariance_matrix(&columns)
        .into_iter()
        .map(|row| row.into_iter().map(|c| c / nf).collect())
        .collect();
    let means = columns.iter().map(|c| stats::mean(c) / nf).collect();
    let label = fs.iter().map(TollFunction::name).collect::<Vec<_>>().join(";");
    let first = columns.into_iter().next().expect("non-empty");
    let mut out = summarize(dist, &label, n, seed, first, None, opts);
    out.labels = Some(fs.iter().map(|f| f.name().to_string()).collect());
    out.means_over_n = Some(means);
    out.covariance_over_n = Some(cov);
    out.elapsed_ms = start.elapsed().as_millis() as u64;
    Ok(out)
}

/// Joint subtree counts n_{T_j}(𝒯_n) for distinct patterns.
pub fn run_joint_experiment(
    dist: &OffspringDistribution,
    patterns: &[crate::tree::Tree],
    n: usize,
    replicates: usize,
    seed: u64,
    opts: &ExperimentOptions,
) -> Result<SampleStats> {
    for (i, p) in patterns.iter().enumerate() {
        if patterns[..i].contains(p) {
            return Err(Error::InvalidArgument(format!("duplicate pattern {p}")));
        }
    }
    let fs: Vec<TollFunction> = patterns.iter().cloned().map(TollFunction::pattern).collect();
    run_multi_experiment(dist, &fs, n, replicates, seed, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LlnPoint {
    pub n: usize,
    pub mean_over_n: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlnTrajectory {
    pub dist: String,
    pub functional: String,
    pub replicates: usize,
    pub seed: u64,
    pub points: Vec<LlnPoint>,
    pub elapsed_ms: u64,
}

impl LlnTrajectory {
    pub fn terminal(&self) -> Option<&LlnPoint> {
        self.points.last()
    }
}

/// F(𝒯_n)/n along an increasing grid of sizes. Grid point g uses stream
/// offsets starting at g·2³².
pub fn run_lln_experiment(
    dist: &OffspringDistribution,
    f: &TollFunction,
    grid: &[usize],
    replicates: usize,
    seed: u64,
    opts: &ExperimentOptions,
) -> Result<LlnTrajectory> {
    check_replicates(replicates)?;
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("grid must be non-empty and increasing".into()));
    }
    let start = Instant::now();
    let fs = std::slice::from_ref(f);
    let mut points = Vec::with_capacity(grid.len());
    for (g, &n) in grid.iter().enumerate() {
        let rows = simulate(dist, n, replicates, seed, (g as u64) << 32, opts, &|d| additive_values(d, fs))?;
        let values: Vec<f64> = rows.into_iter().map(|r| r[0] / n as f64).collect();
        points.push(LlnPoint {
            n,
            mean_over_n: stats::mean(&values),
            standard_error: (stats::variance(&values) / replicates as f64).sqrt(),
        });
    }
    Ok(LlnTrajectory {
        dist: dist.name().to_string(),
        functional: f.name().to_string(),
        replicates,
        seed,
        points,
        elapsed_ms: start.elapsed().as_millis() as u64,
    })
}

/// KS statistic and p-value for an already sorted standardized sample.
pub fn ks_statistic(sorted: &[f64]) -> Result<stats::KsResult> {
    if sorted.len() < 10 {
        return Err(Error::InvalidArgument("KS needs at least 10 values".into()));
    }
    Ok(stats::ks_normal(sorted))
}
