//! Acceptance criteria as a standalone test binary: one PASS/FAIL line per criterion,
//! indented detail lines beneath, nonzero exit if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use podds_core::grid::TimeGrid;
use podds_core::ide::{observed_orders, BoundaryRule};
use podds_core::ide::{H0Solution, SolverOptions};
use podds_core::likelihood::naive_score;
use podds_core::score::{efficient_score, Compensator, EstimatorKind};
use podds_core::tangent::{oracle_h0, Space};
use podds_harness::verify::{
    algebra_errors, ide_residual_at, manufactured_error, orthogonality_suite, sampling_ks, tower_suite, truth_h0,
    zero_target_max, VerifyConfig, KS_CRITICAL_1PCT, REFINEMENT,
};
use podds_harness::{run_scenario, Scenario};

const SHIPPED: [&str; 3] = ["s1", "s2", "s3-spline"];
const MC_N: usize = 100_000;

struct Outcome {
    details: Vec<(bool, String)>,
}

impl Outcome {
    fn new() -> Self {
        Self { details: Vec::new() }
    }

    fn check(&mut self, pass: bool, text: String) {
        self.details.push((pass, text));
    }

    fn pass(&self) -> bool {
        self.details.iter().all(|d| d.0)
    }
}

fn runtime(out: &mut Outcome, elapsed: Duration, limit: Duration) {
    out.check(
        elapsed < limit,
        format!("runtime {:.2}s < {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64()),
    );
}

fn scenario(name: &str) -> Scenario {
    Scenario::builtin(name).unwrap()
}

fn exact_algebra() -> Outcome {
    let mut out = Outcome::new();
    let start = Instant::now();
    for name in SHIPPED {
        let e = algebra_errors(&scenario(name), 64, 1).unwrap();
        out.check(
            e.log_odds_ratio <= 1e-12,
            format!(
                "{name}: max |log odds ratio - beta| = {:.2e} <= 1e-12",
                e.log_odds_ratio
            ),
        );
        out.check(
            e.survival_identity <= 1e-12,
            format!("{name}: max |exp(-Lambda) - S| = {:.2e} <= 1e-12", e.survival_identity),
        );
        out.check(
            e.hazard_fd <= 1e-6,
            format!("{name}: max hazard vs FD = {:.2e} <= 1e-6", e.hazard_fd),
        );
    }
    runtime(&mut out, start.elapsed(), Duration::from_secs(1));
    out
}

fn sampling_law() -> Outcome {
    let mut out = Outcome::new();
    let start = Instant::now();
    for name in SHIPPED {
        let d = sampling_ks(&scenario(name), 10_000, 2).unwrap();
        out.check(
            d < KS_CRITICAL_1PCT,
            format!("{name}: max sqrt(n) D = {d:.4} < {KS_CRITICAL_1PCT}"),
        );
    }
    runtime(&mut out, start.elapsed(), Duration::from_secs(10));
    out
}

fn ide_solver() -> Outcome {
    let mut out = Outcome::new();
    let start = Instant::now();
    let s1 = scenario("s1");
    let zero = zero_target_max(&s1, 2000).unwrap();
    out.check(zero == 0.0, format!("(a) zero target: max |h0| = {zero:e}"));
    let dt = s1.model.tau / 2000.0;
    let man = manufactured_error(&s1, 2000).unwrap();
    out.check(
        man <= 10.0 * dt * dt,
        format!(
            "(b) manufactured t^2 error {man:.3e} <= 10 dt^2 = {:.3e}",
            10.0 * dt * dt
        ),
    );
    let residuals: Vec<f64> = REFINEMENT.iter().map(|&m| ide_residual_at(&s1, m).unwrap()).collect();
    let orders = observed_orders(&residuals);
    let worst = orders.iter().copied().fold(f64::INFINITY, f64::min);
    out.check(
        worst >= 2.0,
        format!("(c) residual orders over M = {REFINEMENT:?}: {orders:.4?}, min {worst:.4} >= 2"),
    );
    let (_, proj) = truth_h0(&s1, 2000, BoundaryRule::Projection).unwrap();
    let cond = proj.iter().map(|(_, r)| r.corrected).fold(0.0, f64::max);
    out.check(
        cond < 1e-4,
        format!("(d) projection condition residual {cond:.3e} < 1e-4 at M = 2000"),
    );
    runtime(&mut out, start.elapsed(), Duration::from_secs(30));
    out
}

fn score_structure() -> Outcome {
    let mut out = Outcome::new();
    let start = Instant::now();
    let s1 = scenario("s1");
    let truth = s1.generator().unwrap();
    let beta = s1.model.beta;
    let (nuis, sol) = oracle_h0(&truth, 2000, &SolverOptions::default()).unwrap();
    let grid = TimeGrid::new(s1.model.tau, 2000).unwrap();
    let zero = H0Solution::zero(&grid, &s1.treatment.law.profiles(), &nuis);
    let data = truth.generate(MC_N, 3).unwrap();
    let mut gap: f64 = 0.0;
    let mut scores = Vec::with_capacity(data.len());
    for o in &data {
        let naive = naive_score(o, beta, &nuis).unwrap();
        let reduced = efficient_score(o, beta, &nuis, &zero, Compensator::ClosedForm).unwrap();
        gap = gap.max((naive - reduced).abs());
        scores.push(efficient_score(o, beta, &nuis, &sol, Compensator::ClosedForm).unwrap());
    }
    out.check(
        gap <= 1e-6,
        format!("h0 = 0 reproduces the naive score: max gap {gap:.2e} <= 1e-6"),
    );
    let (m, se) = podds_core::tangent::mean_and_se(&scores);
    out.check(
        m.abs() <= 4.0 * se,
        format!(
            "efficient score mean {m:.2e}, |mean|/se = {:.2} <= 4 at n = {MC_N}",
            m.abs() / se
        ),
    );
    runtime(&mut out, start.elapsed(), Duration::from_secs(60));
    out
}

fn orthogonality() -> Outcome {
    let mut out = Outcome::new();
    let start = Instant::now();
    let cfg = VerifyConfig {
        n: MC_N,
        seed: 5,
        ..VerifyConfig::default()
    };
    for name in ["s1", "s2"] {
        let report = orthogonality_suite(&scenario(name), &cfg).unwrap();
        let eff: Vec<_> = report
            .inner_products
            .iter()
            .filter(|r| r.score == EstimatorKind::Efficient)
            .collect();
        let spaces = [Space::Lambda1, Space::Lambda2, Space::Lambda3]
            .iter()
            .all(|s| eff.iter().filter(|r| r.space == *s).count() >= 4);
        let worst = eff.iter().map(|r| (r.estimate / r.se).abs()).fold(0.0, f64::max);
        out.check(
            eff.len() >= 12 && spaces && eff.iter().all(|r| r.pass),
            format!(
                "{name}: efficient score vs {} elements, max |z| = {worst:.2} <= 4",
                eff.len()
            ),
        );
        if name == "s2" {
            let probe = report.check("naive_contrast_max_z").unwrap();
            out.check(
                probe.pass,
                format!("{name}: naive contrast max |z| = {:.1} > 4", probe.value),
            );
        }
    }
    runtime(&mut out, start.elapsed(), Duration::from_secs(300));
    out
}

fn tower_law() -> Outcome {
    let mut out = Outcome::new();
    let start = Instant::now();
    let cfg = VerifyConfig {
        n: MC_N,
        seed: 6,
        ..VerifyConfig::default()
    };
    let report = tower_suite(&scenario("s2"), &cfg).unwrap();
    for c in &report.checks {
        out.check(c.pass, format!("{}: gap / se = {:.2} <= 4", c.name, c.value));
    }
    runtime(&mut out, start.elapsed(), Duration::from_secs(30));
    out
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn estimation() -> Outcome {
    let mut out = Outcome::new();
    let start = Instant::now();
    let big = run_scenario(&scenario("s1"), jobs()).unwrap().summary;
    let small = run_scenario(&scenario("s1-n500"), jobs()).unwrap().summary;
    let eff = big.get(EstimatorKind::Efficient).unwrap();
    let eff_small = small.get(EstimatorKind::Efficient).unwrap();
    out.check(
        eff.failures == 0,
        format!("efficient failures: {} of {}", eff.failures, eff.replicates),
    );
    let bias = eff.bias.unwrap();
    out.check(
        bias.abs() < 0.05,
        format!("|mean beta_hat - log 2| = {:.4} < 0.05", bias.abs()),
    );
    let cov = eff.coverage.unwrap();
    out.check(
        (0.925..=0.975).contains(&cov),
        format!("Wald 95% coverage {cov:.3} in [0.925, 0.975]"),
    );
    let ratio = eff_small.mc_sd.unwrap() / eff.mc_sd.unwrap();
    out.check(
        (1.6..=2.4).contains(&ratio),
        format!("MC sd ratio n=500 / n=2000 = {ratio:.3} in [1.6, 2.4]"),
    );
    let vr = eff.variance_ratio.unwrap();
    out.check(
        vr <= 1.05,
        format!("variance ratio efficient / naive = {vr:.3} <= 1.05"),
    );
    runtime(&mut out, start.elapsed(), Duration::from_secs(1800));
    out
}

fn simulate(scenario: &Path, out: &Path, jobs: &str) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_podds"))
        .args([
            "simulate",
            "--scenario",
            scenario.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--jobs",
            jobs,
        ])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    std::fs::read(out.join("replicates.csv")).unwrap()
}

fn determinism() -> Outcome {
    let mut out = Outcome::new();
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/s1.json"))
        .unwrap()
        .replace("\"n\": 2000", "\"n\": 500")
        .replace("\"replicates\": 500", "\"replicates\": 12");
    let path = dir.path().join("det.json");
    std::fs::write(&path, text).unwrap();
    let a = simulate(&path, &dir.path().join("a"), "1");
    let b = simulate(&path, &dir.path().join("b"), "1");
    let c = simulate(&path, &dir.path().join("c"), "4");
    out.check(
        a == b,
        format!("two runs, --jobs 1: {} bytes, identical = {}", a.len(), a == b),
    );
    out.check(a == c, format!("--jobs 1 vs --jobs 4: identical = {}", a == c));
    out
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 exact algebra", exact_algebra),
        ("2 sampling law", sampling_law),
        ("3 IDE solver", ide_solver),
        ("4 score structure", score_structure),
        ("5 orthogonality battery", orthogonality),
        ("6 tower law", tower_law),
        ("7 estimation", estimation),
        ("8 determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = run();
        let verdict = if outcome.pass() { "PASS" } else { "FAIL" };
        println!("criterion {name}: {verdict}");
        for (ok, text) in &outcome.details {
            println!("    [{}] {text}", if *ok { "ok" } else { "FAIL" });
        }
        if !outcome.pass() {
            failed.push(name);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: {} failing: {}", failed.len(), failed.join(", "));
        std::process::exit(1);
    }
}
