//! `fringe`: sample, enumerate and analyse conditioned Galton–Watson trees.

mod config;

use std::fmt::Display;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;
use rand::Rng;
use serde::Serialize;

use config::Config;
use fringe_core::battery::{self, BatteryConfig};
use fringe_core::montecarlo::{self, Centering, ExperimentOptions, SampleStats, CSV_HEADER};
use fringe_core::oracle::{self, SizeTable};
use fringe_core::rng::{stream, Purpose};
use fringe_core::sampler::{kesten_pmf_truncated, sample_conditioned, Method, SamplerConfig};
use fringe_core::scalar::Scalar;
use fringe_core::theory::{self, TheoryOptions, TheoryResult};
use fringe_core::tree::{cycle_lemma_rotate, validate};
use fringe_core::{OffspringDistribution, TollFunction, Tree};

/// An error in the invocation rather than in the computation; exits with 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Parser)]
#[command(name = "fringe", version, about = "Conditioned Galton-Watson trees and fringe subtree functionals")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Master seed for all random streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads for Monte Carlo runs.
    #[arg(long, global = true, env = "FRINGE_WORKERS")]
    workers: Option<usize>,
    /// key = value file supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Include wall-clock timings in experiment output.
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw conditioned trees and print their degree sequences.
    Sample {
        #[arg(long)]
        dist: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        count: Option<usize>,
        /// shortcut or rejection
        #[arg(long)]
        method: Option<String>,
    },
    /// List every ordered tree with n nodes.
    Enumerate {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        cap: Option<usize>,
        /// Also print P(𝒯_n = t) under this distribution.
        #[arg(long)]
        dist: Option<String>,
    },
    /// Exact law of F(𝒯_n) by enumeration.
    Exact {
        #[arg(long)]
        dist: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        functional: Option<String>,
        #[arg(long)]
        cap: Option<usize>,
    },
    /// Check the exact identities on every n up to --cap.
    Verify {
        /// Largest tree size checked.
        #[arg(long)]
        cap: Option<usize>,
        /// Defaults to the four named distributions with bounded support.
        #[arg(long)]
        dist: Option<String>,
        /// Repeatable; defaults to leaf, outdeg:1, pattern:1 0, protected.
        #[arg(long)]
        functional: Vec<String>,
        /// Random sequences for the cycle-lemma check.
        #[arg(long)]
        sequences: Option<usize>,
    },
    /// μ and γ² for a functional.
    Theory {
        #[arg(long)]
        dist: Option<String>,
        #[arg(long)]
        functional: Option<String>,
        /// Truncation level for functionals without finite support.
        #[arg(long)]
        truncate: Option<usize>,
        #[arg(long)]
        cap: Option<usize>,
        #[arg(long)]
        kesten_draws: Option<usize>,
        /// Center bounded local functionals on E f(Ĥ) (default: auto).
        #[arg(long)]
        center_on_kesten: Option<bool>,
    },
    /// Monte Carlo CLT experiment for F(𝒯_n).
    Clt {
        #[arg(long)]
        dist: Option<String>,
        #[arg(long)]
        functional: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        replicates: Option<usize>,
        /// theory, exact or empirical
        #[arg(long)]
        centering: Option<String>,
        /// Add uniform noise before the KS test (default: when F is integral).
        #[arg(long)]
        jitter: Option<bool>,
        #[arg(long)]
        truncate: Option<usize>,
        #[arg(long)]
        method: Option<String>,
    },
    /// Joint subtree counts and their covariance.
    Joint {
        #[arg(long)]
        dist: Option<String>,
        /// Semicolon-separated degree sequences, e.g. "0;1 0".
        #[arg(long)]
        patterns: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        method: Option<String>,
    },
    /// F(𝒯_n)/n along a grid of sizes.
    Lln {
        #[arg(long)]
        dist: Option<String>,
        #[arg(long)]
        functional: Option<String>,
        /// Comma-separated increasing sizes.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        method: Option<String>,
    },
    /// Run the acceptance battery and print a summary table.
    Report {
        /// Multiplier on Monte Carlo replicate counts.
        #[arg(long)]
        scale: Option<f64>,
    },
}

struct Ctx {
    cfg: Config,
    seed: u64,
    format: Option<Format>,
    workers: Option<usize>,
    timing: bool,
    out: Vec<u8>,
}

impl Ctx {
    fn format(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }

    fn line(&mut self, s: impl AsRef<str>) {
        self.out.extend_from_slice(s.as_ref().as_bytes());
        self.out.push(b'\n');
    }

    fn json<T: Serialize>(&mut self, v: &T) -> Result<()> {
        let s = serde_json::to_string_pretty(v)?;
        self.line(s);
        Ok(())
    }

    fn dist(&self, flag: Option<String>) -> Result<OffspringDistribution> {
        let s: String = self.cfg.require(flag, "dist")?;
        s.parse().map_err(|e| UsageError(format!("--dist {s}: {e}")).into())
    }

    fn functional(&self, flag: Option<String>) -> Result<TollFunction> {
        let s: String = self.cfg.require(flag, "functional")?;
        parse_functional(&s)
    }

    fn sampler(&self, flag: Option<String>) -> Result<SamplerConfig> {
        let method = match self.cfg.pick(flag, "method")?.as_deref() {
            None | Some("shortcut") => Method::MultinomialShortcut,
            Some("rejection") => Method::Rejection,
            Some(m) => return Err(UsageError(format!("unknown method `{m}` (shortcut or rejection)")).into()),
        };
        Ok(SamplerConfig { method, ..SamplerConfig::default() })
    }

    fn experiment(&self, method: Option<String>) -> Result<ExperimentOptions> {
        Ok(ExperimentOptions { workers: self.workers, sampler: self.sampler(method)?, ..ExperimentOptions::default() })
    }
}

fn parse_functional(s: &str) -> Result<TollFunction> {
    s.parse().map_err(|e| UsageError(format!("--functional {s}: {e}")).into())
}

fn parse_tree(s: &str) -> Result<Tree> {
    s.trim().parse().map_err(|e| UsageError(format!("tree `{s}`: {e}")).into())
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn cmd_sample(ctx: &mut Ctx, dist: Option<String>, n: Option<usize>, count: Option<usize>, method: Option<String>) -> Result<()> {
    let dist = ctx.dist(dist)?;
    let n: usize = ctx.cfg.require(n, "n")?;
    let count = ctx.cfg.or(count, "count", 1usize)?;
    let sampler = ctx.sampler(method)?;
    let trees = (0..count)
        .map(|i| sample_conditioned(&dist, n, &mut stream(ctx.seed, Purpose::Tree, i as u64), &sampler))
        .collect::<fringe_core::Result<Vec<Tree>>>()?;
    match ctx.format(Format::Text) {
        Format::Text => trees.iter().for_each(|t| ctx.line(t.to_string())),
        Format::Json => ctx.json(&trees)?,
        Format::Csv => {
            ctx.line("replicate,n,degrees");
            for (i, t) in trees.iter().enumerate() {
                ctx.line(format!("{i},{},{t}", t.len()));
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct EnumeratedTree {
    degrees: Tree,
    #[serde(skip_serializing_if = "Option::is_none")]
    probability: Option<String>,
}

fn cmd_enumerate(ctx: &mut Ctx, n: Option<usize>, cap: Option<usize>, dist: Option<String>) -> Result<()> {
    let n: usize = ctx.cfg.require(n, "n")?;
    let cap = ctx.cfg.or(cap, "cap", oracle::DEFAULT_CAP)?;
    let dist = match ctx.cfg.pick(dist, "dist")? {
        Some(d) => Some(ctx.dist(Some(d))?),
        None => None,
    };
    let rows: Vec<EnumeratedTree> = match &dist {
        None => oracle::enumerate_trees(n, cap)?
            .into_iter()
            .map(|degrees| EnumeratedTree { degrees, probability: None })
            .collect(),
        Some(d) if d.is_rational() => oracle::exact_conditioned_law::<BigRational>(d, n, cap)?
            .into_iter()
            .map(|(degrees, p)| EnumeratedTree { degrees, probability: Some(p.to_string()) })
            .collect(),
        Some(d) => oracle::exact_conditioned_law::<f64>(d, n, cap)?
            .into_iter()
            .map(|(degrees, p)| EnumeratedTree { degrees, probability: Some(p.to_string()) })
            .collect(),
    };
    match ctx.format(Format::Text) {
        Format::Text => {
            for r in &rows {
                match &r.probability {
                    Some(p) => ctx.line(format!("{}\t{p}", r.degrees)),
                    None => ctx.line(r.degrees.to_string()),
                }
            }
        }
        Format::Json => ctx.json(&rows)?,
        Format::Csv => {
            ctx.line("degrees,probability");
            for r in &rows {
                ctx.line(format!("{},{}", r.degrees, r.probability.as_deref().unwrap_or("")));
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct LawRow {
    value: String,
    probability: String,
    value_f64: f64,
    probability_f64: f64,
}

#[derive(Serialize)]
struct ExactOutput {
    dist: String,
    functional: String,
    n: usize,
    exact: bool,
    law: Vec<LawRow>,
    mean: String,
    variance: String,
    mean_f64: f64,
    variance_f64: f64,
}

fn exact_output<S: Scalar + Display>(dist: &OffspringDistribution, f: &TollFunction, n: usize, cap: usize) -> Result<ExactOutput> {
    let law = oracle::exact_F_law::<S>(dist, n, f, cap)?;
    Ok(ExactOutput {
        dist: dist.name().to_string(),
        functional: f.name().to_string(),
        n,
        exact: S::EXACT,
        law: law
            .law
            .iter()
            .map(|(v, p)| LawRow { value: v.to_string(), probability: p.to_string(), value_f64: v.to_f64(), probability_f64: p.to_f64() })
            .collect(),
        mean: law.mean.to_string(),
        variance: law.variance.to_string(),
        mean_f64: law.mean.to_f64(),
        variance_f64: law.variance.to_f64(),
    })
}

fn cmd_exact(ctx: &mut Ctx, dist: Option<String>, n: Option<usize>, functional: Option<String>, cap: Option<usize>) -> Result<()> {
    let dist = ctx.dist(dist)?;
    let f = ctx.functional(functional)?;
    let n: usize = ctx.cfg.require(n, "n")?;
    let cap = ctx.cfg.or(cap, "cap", oracle::DEFAULT_CAP)?;
    let out = if dist.is_rational() && f.is_rational() {
        exact_output::<BigRational>(&dist, &f, n, cap)?
    } else {
        exact_output::<f64>(&dist, &f, n, cap)?
    };
    match ctx.format(Format::Json) {
        Format::Json => ctx.json(&out)?,
        Format::Text => {
            for r in &out.law {
                ctx.line(format!("{}\t{}", r.value, r.probability));
            }
            ctx.line(format!("mean\t{}", out.mean));
            ctx.line(format!("variance\t{}", out.variance));
        }
        Format::Csv => {
            ctx.line("value,probability,value_f64,probability_f64");
            for r in &out.law {
                ctx.line(format!("{},{},{},{}", r.value, r.probability, r.value_f64, r.probability_f64));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct VerifyCheck {
    check: String,
    dist: String,
    functional: Option<String>,
    count: usize,
    max_residual: f64,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    max_n: usize,
    max_residual: f64,
    passed: bool,
    checks: Vec<VerifyCheck>,
}

/// Residual bookkeeping: exact residuals must vanish, float ones must be
/// below `FLOAT_TOLERANCE`.
struct Residuals {
    count: usize,
    max: f64,
    all_zero: bool,
}

const FLOAT_TOLERANCE: f64 = 1e-10;

impl Residuals {
    fn new() -> Self {
        Self { count: 0, max: 0.0, all_zero: true }
    }

    fn add<S: Scalar>(&mut self, r: &S) {
        self.count += 1;
        self.max = self.max.max(r.abs_f64());
        self.all_zero &= r.is_zero();
    }

    fn finish(self, check: &str, dist: &OffspringDistribution, functional: Option<&TollFunction>, exact: bool) -> VerifyCheck {
        let passed = if exact { self.all_zero } else { self.max <= FLOAT_TOLERANCE };
        VerifyCheck {
            check: check.to_string(),
            dist: dist.name().to_string(),
            functional: functional.map(|f| f.name().to_string()),
            count: self.count,
            max_residual: self.max,
            passed,
        }
    }
}

fn verify_dist<S: Scalar>(dist: &OffspringDistribution, tolls: &[TollFunction], max_n: usize) -> Result<Vec<VerifyCheck>> {
    let mut out = Vec::new();
    let mut otter = Residuals::new();
    for n in 1..=max_n {
        otter.add(&oracle::exact_pi_n::<S>(dist, n, oracle::DEFAULT_CAP)?.residual());
    }
    out.push(otter.finish("otter", dist, None, S::EXACT));
    for f in tolls {
        let table = SizeTable::<S>::build(dist, f, max_n, oracle::DEFAULT_CAP, true)?;
        let (mut lefkn, mut lcov) = (Residuals::new(), Residuals::new());
        for n in (1..=max_n).filter(|&n| !table.pi(n).is_zero()) {
            for k in 1..=n {
                lefkn.add(&oracle::lefkn_from_table(dist, &table, n, k)?.difference);
                for m in 1..=k {
                    lcov.add(&oracle::lcov_from_table(dist, &table, n, k, m)?.difference);
                }
            }
        }
        out.push(lefkn.finish("expectation", dist, Some(f), S::EXACT));
        out.push(lcov.finish("covariance", dist, Some(f), S::EXACT));
    }
    if let Some(max_degree) = dist.max_degree() {
        let mut mass = Residuals::new();
        for depth in 1..=2 {
            let trees = oracle::enumerate_height_bounded(max_degree, depth);
            let pmf = trees.iter().map(|t| kesten_pmf_truncated::<S>(dist, t, depth)).collect::<fringe_core::Result<Vec<S>>>()?;
            mass.add(&(S::sum(pmf) - S::one()));
        }
        out.push(mass.finish("kesten_mass", dist, None, S::EXACT));
    }
    Ok(out)
}

fn cycle_lemma_check(seed: u64, sequences: usize) -> VerifyCheck {
    let mut rng = stream(seed, Purpose::Misc, 0);
    let mut failures = 0usize;
    for _ in 0..sequences {
        let n = rng.gen_range(1..=30usize);
        let mut seq = vec![0u32; n];
        for _ in 0..n - 1 {
            seq[rng.gen_range(0..n)] += 1;
        }
        let valid: Vec<usize> = (0..n)
            .filter(|&s| {
                let mut rot = seq.clone();
                rot.rotate_left(s);
                validate(&rot)
            })
            .collect();
        if valid.len() != 1 || cycle_lemma_rotate(&seq).ok() != Some(valid[0]) {
            failures += 1;
        }
    }
    VerifyCheck {
        check: "cycle_lemma".into(),
        dist: "-".into(),
        functional: None,
        count: sequences,
        max_residual: failures as f64,
        passed: failures == 0,
    }
}

fn cmd_verify(
    ctx: &mut Ctx,
    cap: Option<usize>,
    dist: Option<String>,
    functionals: Vec<String>,
    sequences: Option<usize>,
) -> Result<bool> {
    let max_n = ctx.cfg.or(cap, "cap", 10usize)?;
    if max_n > oracle::DEFAULT_CAP {
        return Err(UsageError(format!("--cap {max_n} exceeds the enumeration cap {}", oracle::DEFAULT_CAP)).into());
    }
    let dists: Vec<OffspringDistribution> = match ctx.cfg.pick(dist, "dist")? {
        Some(d) => vec![ctx.dist(Some(d))?],
        None => ["binomial_two_half", "geometric_half", "full_rary:2", "full_rary:3"]
            .iter()
            .map(|s| s.parse())
            .collect::<fringe_core::Result<_>>()?,
    };
    let functionals = if functionals.is_empty() {
        match ctx.cfg.pick::<String>(None, "functional")? {
            Some(s) => s.split(';').map(str::to_string).collect(),
            None => vec!["leaf".into(), "outdeg:1".into(), "pattern:1 0".into(), "protected".into()],
        }
    } else {
        functionals
    };
    let tolls = functionals.iter().map(|s| parse_functional(s)).collect::<Result<Vec<_>>>()?;
    let mut checks = Vec::new();
    for d in &dists {
        if d.is_rational() && tolls.iter().all(TollFunction::is_rational) {
            checks.extend(verify_dist::<BigRational>(d, &tolls, max_n)?);
        } else {
            checks.extend(verify_dist::<f64>(d, &tolls, max_n)?);
        }
    }
    let sequences = ctx.cfg.or(sequences, "sequences", 10_000usize)?;
    checks.push(cycle_lemma_check(ctx.seed, sequences));
    let report = VerifyReport {
        max_n,
        max_residual: checks.iter().filter(|c| c.check != "cycle_lemma").map(|c| c.max_residual).fold(0.0, f64::max),
        passed: checks.iter().all(|c| c.passed),
        checks,
    };
    match ctx.format(Format::Json) {
        Format::Json => ctx.json(&report)?,
        Format::Text => {
            for c in &report.checks {
                ctx.line(format!(
                    "{} {} {} {}: {} checks, max residual {:e}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.check,
                    c.dist,
                    c.functional.as_deref().unwrap_or("-"),
                    c.count,
                    c.max_residual
                ));
            }
            ctx.line(format!("max residual {:e}; {}", report.max_residual, if report.passed { "all passed" } else { "FAILED" }));
        }
        Format::Csv => {
            ctx.line("check,dist,functional,count,max_residual,passed");
            for c in &report.checks {
                ctx.line(format!(
                    "{},{},{},{},{},{}",
                    c.check,
                    csv_text(&c.dist),
                    csv_text(c.functional.as_deref().unwrap_or("")),
                    c.count,
                    c.max_residual,
                    c.passed
                ));
            }
        }
    }
    Ok(report.passed)
}

fn theory_options(ctx: &Ctx, truncate: Option<usize>, cap: Option<usize>, draws: Option<usize>, center: Option<bool>) -> Result<TheoryOptions> {
    let d = TheoryOptions::default();
    Ok(TheoryOptions {
        truncate: ctx.cfg.or(truncate, "truncate", d.truncate)?,
        cap: ctx.cfg.or(cap, "cap", d.cap)?,
        kesten_draws: ctx.cfg.or(draws, "kesten_draws", d.kesten_draws)?,
        seed: ctx.seed,
        center_on_kesten: ctx.cfg.pick(center, "center_on_kesten")?,
    })
}

fn emit_theory(ctx: &mut Ctx, r: &TheoryResult) -> Result<()> {
    match ctx.format(Format::Json) {
        Format::Json => ctx.json(r)?,
        Format::Text => {
            ctx.line(format!("dist\t{}", r.dist));
            ctx.line(format!("functional\t{}", r.functional));
            ctx.line(format!("mu\t{}", r.mu));
            ctx.line(format!("gamma_sq\t{}", r.gamma_sq));
            ctx.line(format!("provenance\t{}", serde_json::to_string(&r.provenance)?));
            if let Some(b) = r.truncation_error_bound {
                ctx.line(format!("truncation_error_bound\t{b}"));
            }
            if let Some(g) = r.truncation_gap() {
                ctx.line(format!("truncation_gap\t{g}"));
            }
        }
        Format::Csv => {
            ctx.line("dist,functional,mu,gamma_sq,provenance,truncation_error_bound");
            ctx.line(format!(
                "{},{},{},{},{},{}",
                csv_text(&r.dist),
                csv_text(&r.functional),
                r.mu,
                r.gamma_sq,
                csv_text(&serde_json::to_string(&r.provenance)?),
                r.truncation_error_bound.map(|b| b.to_string()).unwrap_or_default()
            ));
        }
    }
    Ok(())
}

fn emit_stats(ctx: &mut Ctx, s: &SampleStats, extra: Option<serde_json::Value>) -> Result<()> {
    let mut s = s.clone();
    if !ctx.timing {
        s.elapsed_ms = 0;
    }
    match ctx.format(Format::Json) {
        Format::Json => match extra {
            None => ctx.json(&s)?,
            Some(extra) => {
                let mut v = serde_json::to_value(&s)?;
                if let (Some(obj), serde_json::Value::Object(more)) = (v.as_object_mut(), extra) {
                    obj.extend(more);
                }
                ctx.json(&v)?
            }
        },
        Format::Csv => {
            ctx.line(CSV_HEADER);
            ctx.line(s.csv_row());
        }
        Format::Text => {
            ctx.line(format!("dist\t{}", s.dist));
            ctx.line(format!("functional\t{}", s.functional));
            ctx.line(format!("n\t{}\nreplicates\t{}\nseed\t{}", s.n, s.replicates, s.seed));
            ctx.line(format!("mean_over_n\t{} (SE {})", s.mean_over_n, s.mean_se));
            ctx.line(format!("var_over_n\t{}", s.var_over_n));
            if let (Some(mu), Some(g)) = (s.theory_mu, s.theory_gamma_sq) {
                ctx.line(format!("theory\tmu {mu} gamma_sq {g}"));
            }
            ctx.line(format!("ks\tD {} p {}", s.ks_statistic, s.ks_p_value));
            ctx.line(format!("shape\tskew {} excess kurtosis {}", s.skewness, s.excess_kurtosis));
            if let (Some(labels), Some(cov)) = (&s.labels, &s.covariance_over_n) {
                ctx.line(format!("covariance/n\t{}", labels.join("\t")));
                for (l, row) in labels.iter().zip(cov) {
                    ctx.line(format!("{l}\t{}", row.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("\t")));
                }
            }
            if ctx.timing {
                ctx.line(format!("elapsed_ms\t{}", s.elapsed_ms));
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_clt(
    ctx: &mut Ctx,
    dist: Option<String>,
    functional: Option<String>,
    n: Option<usize>,
    replicates: Option<usize>,
    centering: Option<String>,
    jitter: Option<bool>,
    truncate: Option<usize>,
    method: Option<String>,
) -> Result<()> {
    let dist = ctx.dist(dist)?;
    let f = ctx.functional(functional)?;
    let n: usize = ctx.cfg.require(n, "n")?;
    let replicates = ctx.cfg.or(replicates, "replicates", 10_000usize)?;
    let th = theory::evaluate(&dist, &f, &theory_options(ctx, truncate, None, None, None)?)?;
    let centering = match ctx.cfg.or(centering, "centering", "theory".to_string())?.as_str() {
        "theory" => Centering::Theory,
        "empirical" => Centering::Empirical,
        "exact" => Centering::Value(if f.finite_support_bound().is_some() {
            theory::exact_mean(&dist, &f, n, oracle::DEFAULT_CAP)?
        } else {
            n as f64 * theory::local_mean_exact_in::<f64>(&dist, &f, n)?
        }),
        other => return Err(UsageError(format!("unknown centering `{other}` (theory, exact or empirical)")).into()),
    };
    let opts = ExperimentOptions { centering, jitter: ctx.cfg.pick(jitter, "jitter")?, ..ctx.experiment(method)? };
    let s = montecarlo::run_clt_experiment(&dist, &f, n, replicates, ctx.seed, Some(&th), &opts)?;
    emit_stats(ctx, &s, None)
}

fn cmd_joint(
    ctx: &mut Ctx,
    dist: Option<String>,
    patterns: Option<String>,
    n: Option<usize>,
    replicates: Option<usize>,
    method: Option<String>,
) -> Result<()> {
    let dist = ctx.dist(dist)?;
    let patterns: String = ctx.cfg.require(patterns, "patterns")?;
    let patterns = patterns.split(';').map(parse_tree).collect::<Result<Vec<_>>>()?;
    let n: usize = ctx.cfg.require(n, "n")?;
    let replicates = ctx.cfg.or(replicates, "replicates", 10_000usize)?;
    let s = montecarlo::run_joint_experiment(&dist, &patterns, n, replicates, ctx.seed, &ctx.experiment(method)?)?;
    let theory_cov = patterns
        .iter()
        .map(|a| patterns.iter().map(|b| theory::gamma_subtree_pair(&dist, a, b)).collect())
        .collect::<fringe_core::Result<Vec<Vec<f64>>>>()?;
    emit_stats(ctx, &s, Some(serde_json::json!({ "theory_covariance_over_n": theory_cov })))
}

fn cmd_lln(
    ctx: &mut Ctx,
    dist: Option<String>,
    functional: Option<String>,
    grid: Option<String>,
    replicates: Option<usize>,
    method: Option<String>,
) -> Result<()> {
    let dist = ctx.dist(dist)?;
    let f = ctx.functional(functional)?;
    let grid: String = ctx.cfg.require(grid, "grid")?;
    let grid = grid
        .split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|e| UsageError(format!("--grid `{s}`: {e}")).into()))
        .collect::<Result<Vec<_>>>()?;
    let replicates = ctx.cfg.or(replicates, "replicates", 1000usize)?;
    let th = theory::evaluate(&dist, &f, &TheoryOptions { center_on_kesten: Some(false), ..theory_options(ctx, None, None, None, None)? })?;
    let mut traj = montecarlo::run_lln_experiment(&dist, &f, &grid, replicates, ctx.seed, &ctx.experiment(method)?)?;
    if !ctx.timing {
        traj.elapsed_ms = 0;
    }
    match ctx.format(Format::Json) {
        Format::Json => ctx.json(&serde_json::json!({ "trajectory": traj, "theory_mu": th.mu, "theory_mu_error_bound": th.truncation_error_bound }))?,
        Format::Csv | Format::Text => {
            ctx.line("dist,functional,n,N,seed,mean_over_n,standard_error,theory_mu");
            for p in &traj.points {
                ctx.line(format!(
                    "{},{},{},{},{},{},{},{}",
                    csv_text(&traj.dist),
                    csv_text(&traj.functional),
                    p.n,
                    traj.replicates,
                    traj.seed,
                    p.mean_over_n,
                    p.standard_error,
                    th.mu
                ));
            }
        }
    }
    Ok(())
}

fn cmd_report(ctx: &mut Ctx, scale: Option<f64>) -> Result<bool> {
    let cfg = BatteryConfig { seed: ctx.seed, scale: ctx.cfg.or(scale, "scale", 1.0)?, workers: ctx.workers };
    let results = battery::run(&cfg, &mut |r| eprintln!("[{}] {}", r.status(), r.name));
    let passed = results.iter().all(|r| !r.unexpected_failure());
    match ctx.format(Format::Text) {
        Format::Json => ctx.json(&serde_json::json!({ "passed": passed, "checks": results }))?,
        Format::Csv => {
            ctx.line("criterion,check,status,detail");
            for r in &results {
                ctx.line(format!("{},{},{},{}", r.criterion, csv_text(&r.name), r.status(), csv_text(&r.detail)));
            }
        }
        Format::Text => {
            let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
            for r in &results {
                ctx.line(format!("{:<26} {:<width$}  {}", r.status(), r.name, r.detail));
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            ctx.line(format!("{} checks, {} failed, {}", results.len(), failed, if passed { "ok" } else { "FAILED" }));
        }
    }
    Ok(passed)
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = match &cli.global.config {
        Some(p) => Config::load(p).map_err(|e| UsageError(format!("{e:#}")))?,
        None => Config::default(),
    };
    let mut ctx = Ctx {
        seed: cfg.or(cli.global.seed, "seed", 0u64)?,
        format: cfg.pick(cli.global.format, "format")?,
        workers: cfg.pick(cli.global.workers, "workers")?,
        timing: cli.global.timing,
        out: Vec::new(),
        cfg,
    };
    let ok = match cli.command {
        Command::Sample { dist, n, count, method } => cmd_sample(&mut ctx, dist, n, count, method).map(|_| true),
        Command::Enumerate { n, cap, dist } => cmd_enumerate(&mut ctx, n, cap, dist).map(|_| true),
        Command::Exact { dist, n, functional, cap } => cmd_exact(&mut ctx, dist, n, functional, cap).map(|_| true),
        Command::Verify { cap, dist, functional, sequences } => cmd_verify(&mut ctx, cap, dist, functional, sequences),
        Command::Theory { dist, functional, truncate, cap, kesten_draws, center_on_kesten } => (|| {
            let dist = ctx.dist(dist)?;
            let f = ctx.functional(functional)?;
            let opts = theory_options(&ctx, truncate, cap, kesten_draws, center_on_kesten)?;
            let r = theory::evaluate(&dist, &f, &opts)?;
            emit_theory(&mut ctx, &r)
        })()
        .map(|_| true),
        Command::Clt { dist, functional, n, replicates, centering, jitter, truncate, method } => {
            cmd_clt(&mut ctx, dist, functional, n, replicates, centering, jitter, truncate, method).map(|_| true)
        }
        Command::Joint { dist, patterns, n, replicates, method } => {
            cmd_joint(&mut ctx, dist, patterns, n, replicates, method).map(|_| true)
        }
        Command::Lln { dist, functional, grid, replicates, method } => {
            cmd_lln(&mut ctx, dist, functional, grid, replicates, method).map(|_| true)
        }
        Command::Report { scale } => cmd_report(&mut ctx, scale),
    }?;
    match &cli.global.output {
        Some(path) => std::fs::write(path, &ctx.out).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(&ctx.out)?,
    }
    Ok(ok)
}

fn is_usage(e: &anyhow::Error) -> bool {
    use fringe_core::Error as E;
    if e.downcast_ref::<UsageError>().is_some() {
        return true;
    }
    matches!(
        e.downcast_ref::<E>(),
        Some(
            E::Parse(_)
                | E::InvalidArgument(_)
                | E::InvalidTable(_)
                | E::InvalidTree(_)
                | E::BadSum { .. }
                | E::NonCritical { .. }
                | E::ZeroVariance
                | E::MissingZero
                | E::CapExceeded { .. }
                | E::SpanMismatch { .. }
                | E::ZeroProbability { .. }
        )
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage(&e) { 2 } else { 1 })
        }
    }
}
