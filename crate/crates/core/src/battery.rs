//! The acceptance battery: exact identities, sampler checks, and the
//! Monte Carlo experiments compared with their theoretical constants. Each
//! check yields one [`CheckResult`].

use std::time::Instant;

use num_rational::BigRational;
use num_traits::Zero;
use rand::Rng;
use serde::Serialize;

use crate::functionals::{FringeData, TollFunction};
use crate::montecarlo::{self, Centering, ExperimentOptions};
use crate::oracle::{self, SizeTable};
use crate::rng::{stream, Purpose};
use crate::sampler::{kesten_pmf_truncated, sample_conditioned, sample_kesten_truncated, SamplerConfig};
use crate::scalar::ratio_to_f64;
use crate::stats::chi_square;
use crate::theory::{self, TheoryOptions};
use crate::tree::{cycle_lemma_rotate, validate, Tree};
use crate::OffspringDistribution;

type Q = BigRational;


/// Checks whose failure is explained by an O(1) finite-n bias rather than
/// a defect: E F(𝒯_n) − nμ tends to a nonzero constant, which at n = 2000
/// and 10⁵ replicates is several standard errors.
pub const KNOWN_UNATTAINABLE: &[&str] = &["4 poisson_one mean_over_n within 3 SE of 1/e"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub criterion: u32,
    pub name: String,
    pub passed: bool,
    pub known_unattainable: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn status(&self) -> &'static str {
        match (self.passed, self.known_unattainable) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known unattainable)",
            (false, false) => "FAIL",
        }
    }

    /// A failure that is not explained by [`KNOWN_UNATTAINABLE`].
    pub fn unexpected_failure(&self) -> bool {
        !self.passed && !self.known_unattainable
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryConfig {
    /// Added to every fixed seed.
    pub seed: u64,
    /// Multiplies the Monte Carlo replicate counts (at least 100 remain).
    pub scale: f64,
    pub workers: Option<usize>,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self { seed: 0, scale: 1.0, workers: None }
    }
}

impl BatteryConfig {
    fn reps(&self, full: usize) -> usize {
        ((full as f64 * self.scale).round() as usize).max(100)
    }

    fn opts(&self) -> ExperimentOptions {
        ExperimentOptions { workers: self.workers, ..ExperimentOptions::default() }
    }
}

struct Report<'a> {
    results: Vec<CheckResult>,
    on_result: &'a mut dyn FnMut(&CheckResult),
}

impl Report<'_> {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        let criterion = name.split_whitespace().next().and_then(|c| c.parse().ok()).unwrap_or(0);
        let result = CheckResult {
            criterion,
            name: name.to_string(),
            passed: ok,
            known_unattainable: KNOWN_UNATTAINABLE.contains(&name),
            detail,
        };
        (self.on_result)(&result);
        self.results.push(result);
    }
}

fn d(s: &str) -> OffspringDistribution {
    s.parse().unwrap()
}

fn t(s: &str) -> Tree {
    s.parse().unwrap()
}

fn within_rel(x: f64, target: f64, rel: f64) -> bool {
    (x - target).abs() <= rel * target.abs()
}

fn criterion_1(r: &mut Report, _cfg: &BatteryConfig) {
    let start = Instant::now();
    let dists = ["binomial_two_half", "geometric_half", "full_rary:2", "full_rary:3"];
    let tolls = [TollFunction::leaf(), TollFunction::outdegree(1), TollFunction::pattern(t("1 0")), TollFunction::protected()];
    let (mut otter, mut lefkn, mut lcov) = (0usize, 0usize, 0usize);
    let mut nonzero = Vec::new();
    for name in dists {
        let dist = d(name);
        for n in 1..=10 {
            let pi = oracle::exact_pi_n::<Q>(&dist, n, oracle::DEFAULT_CAP).unwrap();
            otter += 1;
            if !pi.residual().is_zero() {
                nonzero.push(format!("otter {name} n={n}"));
            }
        }
        for f in &tolls {
            let table = SizeTable::<Q>::build(&dist, f, 10, oracle::DEFAULT_CAP, true).unwrap();
            for n in 1..=10 {
                if table.pi(n).is_zero() {
                    continue;
                }
                for k in 1..=n {
                    let c = oracle::lefkn_from_table(&dist, &table, n, k).unwrap();
                    lefkn += 1;
                    if !c.difference.is_zero() {
                        nonzero.push(format!("lefkn {name} {} n={n} k={k}", f.name()));
                    }
                    for m in 1..=k {
                        let c = oracle::lcov_from_table(&dist, &table, n, k, m).unwrap();
                        lcov += 1;
                        if !c.difference.is_zero() {
                            nonzero.push(format!("lcov {name} {} n={n} k={k} m={m}", f.name()));
                        }
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    r.check(
        "1 exact identities (rational residual 0)",
        nonzero.is_empty() && secs < 60.0,
        format!("{otter} Otter, {lefkn} expectation, {lcov} covariance checks; nonzero: {nonzero:?}; {secs:.1}s"),
    );
}

fn criterion_2(r: &mut Report, cfg: &BatteryConfig) {
    let start = Instant::now();
    let mut rng = stream(cfg.seed + 2, Purpose::Misc, 0);
    let mut bad = 0usize;
    for _ in 0..cfg.reps(100_000) {
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
            bad += 1;
        }
    }
    r.check("2 cycle lemma unique rotation", bad == 0, format!("{} sequences, {bad} failures", cfg.reps(100_000)));

    let mut invalid = 0usize;
    let mut drawn = 0usize;
    for name in ["poisson_one", "geometric_half", "binomial_two_half", "full_rary:2", "full_rary:3", "custom:0=1/3,1=1/3,2=1/3"] {
        let dist = d(name);
        let h = dist.span() as usize;
        for (i, n) in (1..=200usize).filter(|n| (n - 1) % h == 0).enumerate() {
            let mut rng = stream(cfg.seed + 3, Purpose::Tree, i as u64);
            for cfg in [SamplerConfig::default(), SamplerConfig::rejection()] {
                let tree = sample_conditioned(&dist, n, &mut rng, &cfg).unwrap();
                drawn += 1;
                if tree.len() != n || !validate(tree.degrees()) {
                    invalid += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    r.check(
        "2 sampler output is a valid degree sequence",
        invalid == 0 && secs < 10.0,
        format!("{drawn} draws, {invalid} invalid; {secs:.1}s"),
    );
}

fn criterion_3(r: &mut Report, cfg: &BatteryConfig) {
    let start = Instant::now();
    let g = d("geometric_half");
    let law = oracle::exact_conditioned_law::<Q>(&g, 6, oracle::DEFAULT_CAP).unwrap();
    let uniform = law.len() == 42 && law.iter().all(|(_, p)| *p == law[0].1);
    r.check("3 exact law uniform on 42 trees", uniform, format!("{} trees", law.len()));
    let trees: Vec<Tree> = law.iter().map(|(t, _)| t.clone()).collect();
    let mut counts = vec![0u64; trees.len()];
    for i in 0..cfg.reps(100_000) as u64 {
        let tree = sample_conditioned(&g, 6, &mut stream(cfg.seed + 4, Purpose::Tree, i), &SamplerConfig::default()).unwrap();
        counts[trees.binary_search(&tree).unwrap()] += 1;
    }
    let chi = chi_square(&counts, &vec![1.0 / 42.0; 42]);
    let secs = start.elapsed().as_secs_f64();
    r.check(
        "3 sampled law uniform (chi-square)",
        chi.p_value > 1e-3 && secs < 60.0,
        format!("X2={:.2} df={} p={:.4}; {secs:.1}s", chi.statistic, chi.degrees_of_freedom, chi.p_value),
    );
}

fn criterion_4(r: &mut Report, cfg: &BatteryConfig) {
    let leaf = TollFunction::leaf();
    let n = 2000;
    let reps = cfg.reps(100_000);
    for (name, target, seed) in [("poisson_one", 0.097_208, 41), ("geometric_half", 0.125, 42), ("binomial_two_half", 0.0625, 43)] {
        let dist = d(name);
        let th = theory::evaluate(&dist, &leaf, &TheoryOptions::default()).unwrap();
        // the exact E F(𝒯_n) replaces nμ for the KS standardization
        let exact = theory::exact_mean(&dist, &leaf, n, oracle::DEFAULT_CAP).unwrap();
        let opts = ExperimentOptions { centering: Centering::Value(exact), ..cfg.opts() };
        let s = montecarlo::run_clt_experiment(&dist, &leaf, n, reps, cfg.seed + seed, Some(&th), &opts).unwrap();
        r.check(
            &format!("4 {name} var_over_n within 5% of {target}"),
            within_rel(s.var_over_n, target, 0.05),
            format!("var_over_n={:.6} (theory {:.6}); {} ms", s.var_over_n, th.gamma_sq, s.elapsed_ms),
        );
        if name == "poisson_one" {
            let z = (s.mean_over_n - th.mu) / s.mean_se;
            r.check(
                "4 poisson_one mean_over_n within 3 SE of 1/e",
                z.abs() < 3.0,
                format!(
                    "mean_over_n={:.7} SE={:.2e} z={z:.2}; exact E F/n={:.7} gives z={:.2}",
                    s.mean_over_n,
                    s.mean_se,
                    exact / n as f64,
                    (s.mean_over_n - exact / n as f64) / s.mean_se
                ),
            );
            r.check(
                "4 poisson_one KS p > 1e-3",
                s.ks_p_value > 1e-3,
                format!("D={:.5} p={:.4} (centered on exact mean {exact:.4}, jittered)", s.ks_statistic, s.ks_p_value),
            );
            r.check(
                "4 poisson_one |skew| < 0.05 and |excess kurtosis| < 0.1",
                s.skewness.abs() < 0.05 && s.excess_kurtosis.abs() < 0.1,
                format!("skew={:.4} exkurt={:.4}", s.skewness, s.excess_kurtosis),
            );
        }
    }
}

fn criterion_5(r: &mut Report, cfg: &BatteryConfig) {
    let start = Instant::now();
    let dist = d("full_rary:2");
    let s = montecarlo::run_multi_experiment(
        &dist,
        &[TollFunction::leaf(), TollFunction::outdegree(2)],
        1001,
        cfg.reps(1000),
        cfg.seed + 5,
        &cfg.opts(),
    )
    .unwrap();
    let means = s.means_over_n.clone().unwrap();
    let cov = s.covariance_over_n.clone().unwrap();
    let ok = s.values.iter().all(|&v| v == 501.0)
        && means[1] * 1001.0 == 500.0
        && cov.iter().flatten().all(|&c| c == 0.0)
        && s.var_over_n == 0.0;
    let secs = start.elapsed().as_secs_f64();
    r.check(
        "5 full binary leaf and outdegree-2 counts deterministic",
        ok && secs < 10.0,
        format!("leaves/n={} outdeg2/n={} covariance={cov:?}; {secs:.1}s", means[0], means[1]),
    );
}

fn criterion_6(r: &mut Report, cfg: &BatteryConfig) {
    let dist = d("poisson_one");
    let fs = [TollFunction::outdegree(0), TollFunction::outdegree(1), TollFunction::outdegree(2)];
    let s = montecarlo::run_multi_experiment(&dist, &fs, 2000, cfg.reps(100_000), cfg.seed + 6, &cfg.opts()).unwrap();
    let cov = s.covariance_over_n.unwrap();
    for rr in 0..3u32 {
        let target = theory::gamma_degree(&dist, rr).unwrap();
        let got = cov[rr as usize][rr as usize];
        r.check(
            &format!("6 poisson_one Var n_{rr}/n within 5%"),
            within_rel(got, target, 0.05),
            format!("{got:.6} vs {target:.6}"),
        );
    }
    let target = theory::gamma_degree_pair(&dist, 0, 2).unwrap();
    r.check(
        "6 poisson_one Cov(n_0,n_2)/n within 0.01 absolute",
        (cov[0][2] - target).abs() <= 0.01,
        format!("{:.6} vs {target:.3e}; {} ms", cov[0][2], s.elapsed_ms),
    );
}

fn criterion_7(r: &mut Report, cfg: &BatteryConfig) {
    let dist = d("binomial_two_half");
    let patterns = [t("0"), t("1 0")];
    let s = montecarlo::run_joint_experiment(&dist, &patterns, 2000, cfg.reps(100_000), cfg.seed + 7, &cfg.opts()).unwrap();
    let cov = s.covariance_over_n.unwrap();
    let mut worst = Vec::new();
    let mut ok = cov[0][1] == cov[1][0];
    for i in 0..2 {
        for j in 0..2 {
            let target = theory::gamma_subtree_pair(&dist, &patterns[i], &patterns[j]).unwrap();
            let tol = (0.1 * target.abs()).max(0.01);
            ok &= (cov[i][j] - target).abs() <= tol;
            worst.push(format!("[{i}][{j}] {:.6} vs {target:.6}", cov[i][j]));
        }
    }
    r.check(
        "7 joint subtree covariance matrix vs formula",
        ok,
        format!("{}; {} ms", worst.join(", "), s.elapsed_ms),
    );
}

fn criterion_8(r: &mut Report, _cfg: &BatteryConfig) {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, n) in [("binomial_two_half", 10_000), ("poisson_one", 10_000), ("geometric_half", 10_000), ("full_rary:2", 10_001)] {
        let ratio = theory::llt_ratio(&d(name), n).unwrap();
        ok &= (ratio - 1.0).abs() <= 0.02;
        lines.push(format!("{name} n={n}: {ratio:.6}"));
    }
    let secs = start.elapsed().as_secs_f64();
    r.check("8 local limit ratio within 2% of 1", ok && secs < 10.0, format!("{}; {secs:.2}s", lines.join(", ")));
}

fn criterion_9(r: &mut Report, cfg: &BatteryConfig) {
    let start = Instant::now();
    let dist = d("binomial_two_half");
    for depth in 1..=2usize {
        let trees = oracle::enumerate_height_bounded(2, depth);
        let exact: Vec<Q> = trees.iter().map(|t| kesten_pmf_truncated::<Q>(&dist, t, depth).unwrap()).collect();
        let total = exact.iter().fold(Q::zero(), |a, b| a + b);
        let float_total: f64 = trees.iter().map(|t| kesten_pmf_truncated::<f64>(&dist, t, depth).unwrap()).sum();
        r.check(
            &format!("9 Kesten pmf mass over height <= {depth} trees"),
            total == Q::from_integer(1.into()) && (float_total - 1.0).abs() < 1e-10,
            format!("{} trees, exact total {total}, float total {float_total}", trees.len()),
        );
        let mut counts = vec![0u64; trees.len()];
        let mut rng = stream(cfg.seed + 9, Purpose::Kesten, depth as u64);
        for _ in 0..cfg.reps(100_000) {
            let sample = sample_kesten_truncated(&dist, depth, &mut rng).unwrap();
            counts[trees.iter().position(|t| *t == sample).unwrap()] += 1;
        }
        let probs: Vec<f64> = exact.iter().map(|p| ratio_to_f64(p)).collect();
        let chi = chi_square(&counts, &probs);
        r.check(
            &format!("9 Kesten sampler law, M = {depth} (chi-square)"),
            chi.p_value > 1e-3,
            format!("X2={:.2} df={} p={:.4}", chi.statistic, chi.degrees_of_freedom, chi.p_value),
        );
    }

    let protected = TollFunction::protected();
    let est = theory::kesten_mean(&dist, &protected, cfg.reps(100_000), cfg.seed + 9).unwrap();
    let grid = [500usize, 2000, 8000];
    let scaled: Vec<(usize, f64, f64)> = grid
        .iter()
        .map(|&n| {
            let e = theory::local_mean_exact_in::<f64>(&dist, &protected, n).unwrap();
            let gap = (e - est.mean).abs();
            let root = (n as f64).sqrt();
            // the part of the gap not explained by the Monte Carlo error of Ê
            (n, gap * root, (gap - 3.0 * est.standard_error).max(0.0) * root)
        })
        .collect();
    let reference = (scaled[0].1 / (grid[0] as f64).sqrt() + 3.0 * est.standard_error) * (grid[0] as f64).sqrt();
    let bounded = scaled.iter().all(|&(_, _, excess)| excess <= 2.0 * reference);
    r.check(
        "9 |E f(T_n) - Ê f(Ĥ)|·√n bounded for protected",
        bounded,
        format!(
            "Ê={:.5}±{:.5}; scaled gaps {:?}; beyond 3 SE {:?}",
            est.mean,
            est.standard_error,
            scaled.iter().map(|s| format!("n={} {:.4}", s.0, s.1)).collect::<Vec<_>>(),
            scaled.iter().map(|s| format!("{:.4}", s.2)).collect::<Vec<_>>()
        ),
    );
    let secs = start.elapsed().as_secs_f64();
    r.check("9 runtime under 1 minute", secs < 60.0, format!("{secs:.1}s"));
}

fn criterion_10(r: &mut Report, cfg: &BatteryConfig) {
    let dist = d("poisson_one");
    let wagner = TollFunction::wagner_log_s1();
    let seq = theory::truncation_sequence(&dist, &wagner, &[10, 12], None, oracle::DEFAULT_CAP).unwrap();
    let gap = (seq[1].gamma_sq - seq[0].gamma_sq).abs();
    r.check(
        "10 Wagner truncation gap |γ12² − γ10²| < 0.1·|γ12²|",
        gap < 0.1 * seq[1].gamma_sq.abs(),
        format!("γ10²={:.6} γ12²={:.6} gap={gap:.2e}", seq[0].gamma_sq, seq[1].gamma_sq),
    );
    let opts = ExperimentOptions { centering: Centering::Empirical, ..cfg.opts() };
    let s = montecarlo::run_clt_experiment(&dist, &wagner, 2000, cfg.reps(50_000), cfg.seed + 10, None, &opts).unwrap();
    r.check(
        "10 Wagner CLT KS p > 1e-3 (empirical centering)",
        s.ks_p_value > 1e-3,
        format!("D={:.5} p={:.4} var_over_n={:.6}; {} ms", s.ks_statistic, s.ks_p_value, s.var_over_n, s.elapsed_ms),
    );
    let mut violations = 0usize;
    let mut nodes = 0usize;
    for i in 0..cfg.reps(2000) as u64 {
        let tree = sample_conditioned(&dist, 2000, &mut stream(cfg.seed + 10, Purpose::Tree, i), &SamplerConfig::default()).unwrap();
        let data = FringeData::new(&tree, true);
        for v in data.nodes() {
            let f = wagner.eval(&v);
            nodes += 1;
            if !(f > 0.0 && f <= 1.0 / v.size() as f64) {
                violations += 1;
            }
        }
    }
    r.check(
        "10 Wagner toll bounds 0 < f(T) <= 1/|T|",
        violations == 0,
        format!("{nodes} fringe subtrees checked, {violations} violations"),
    );
}

/// Runs every check in order, calling `on_result` as each one finishes.
pub fn run(cfg: &BatteryConfig, on_result: &mut dyn FnMut(&CheckResult)) -> Vec<CheckResult> {
    let mut report = Report { results: Vec::new(), on_result };
    criterion_1(&mut report, cfg);
    criterion_2(&mut report, cfg);
    criterion_3(&mut report, cfg);
    criterion_4(&mut report, cfg);
    criterion_5(&mut report, cfg);
    criterion_6(&mut report, cfg);
    criterion_7(&mut report, cfg);
    criterion_8(&mut report, cfg);
    criterion_9(&mut report, cfg);
    criterion_10(&mut report, cfg);
    report.results
}
