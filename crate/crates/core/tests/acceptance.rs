//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use imbalance_sim::cli::{execute, resolve_scenario, CommonArgs, Command};
use imbalance_sim::dispatch::{dispatch_minute, dispatch_oracle, DispatchTarget};
use imbalance_sim::calibration::{select, CandidateScore, CvarReading};
use imbalance_sim::config::Config;
use imbalance_sim::pricing::{compute_alpha, spot_weight, FormulaKind, PriceComponents, PriceRule};
use imbalance_sim::simulator::simulate;
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config as RunnerConfig, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CONFIG: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/acceptance.toml");
const SWEEP_CAPACITIES: [f64; 5] = [0.0, 100.0, 200.0, 400.0, 600.0];
const GROUPS: [&str; 3] = ["neutral", "medium", "averse"];
const BINS: [&str; 3] = ["below_25", "25_to_150", "above_150"];

type Outcome = Result<String, String>;
type MetricKey = (u64, String, String, String);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut runner = TestRunner::new_with_rng(RunnerConfig::default(), TestRng::from_seed(RngAlgorithm::ChaCha, &[1; 32]));
    let strategy = common::ladder_and_target(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (ladder, target) = strategy.new_tree(&mut runner).unwrap().current();
        let t = DispatchTarget::new(target).unwrap();
        let greedy = dispatch_minute(t, &ladder);
        let exact = dispatch_oracle(t, &ladder).map_err(|e| e.to_string())?;
        worst = worst.max((greedy.cost_per_minute - exact.cost_per_minute).abs());
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-9 && elapsed < Duration::from_secs(10),
        format!("1000 instances, max cost gap {worst:.2e} EUR, {elapsed:.2?}"),
    )
}

fn random_components(rng: &mut ChaCha8Rng) -> PriceComponents {
    PriceComponents {
        lambda_afrr: rng.random_range(-200.0..600.0),
        lambda_mfrr: rng.random_bool(0.7).then(|| rng.random_range(-500.0..1000.0)),
        lambda_spot: rng.random_range(-200.0..600.0),
        alpha: 0.0,
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let current = PriceRule::new(FormulaKind::Current);
    let mmsd = PriceRule::new(FormulaKind::Mmsd);
    let wadw = PriceRule::new(FormulaKind::Wadw);
    let (mut a_fail, mut c_fail, mut d_fail) = (0, 0, 0);
    let mut max_jump: f64 = 0.0;
    let mut max_slope: f64 = 0.0;
    // Steepest points of the spot weight and the deadband edges.
    let probes = [-25.0, -23.3, -0.01, 0.0, 23.3, 25.0];
    for _ in 0..10_000 {
        let c = random_components(&mut rng);
        let si = rng.random_range(-25.0..=25.0);
        if current.price(&c, &common::acc_at(si, rng.random_range(-300.0..300.0), 0.5)) != c.lambda_spot {
            a_fail += 1;
        }
        let extra: Vec<f64> = (0..4).map(|_| rng.random_range(-150.0..149.99)).collect();
        let frr = [c.lambda_mfrr.map_or(c.lambda_afrr, |m| m.max(c.lambda_afrr)), c.lambda_mfrr.map_or(c.lambda_afrr, |m| m.min(c.lambda_afrr))];
        let spread = frr.iter().map(|f| (f - c.lambda_spot).abs()).fold(0.0, f64::max);
        for s in probes.iter().chain(&extra) {
            let p0 = mmsd.price(&c, &common::acc_at(*s, 0.0, 0.0));
            let p1 = mmsd.price(&c, &common::acc_at(s + 0.01, 0.0, 0.0));
            let jump = (p1 - p0).abs();
            max_jump = max_jump.max(jump);
            if spread > 0.0 {
                max_slope = max_slope.max(jump / (spread * 0.01));
            }
        }
        let share = rng.random_range(0.0..1.0);
        let p = wadw.base_price(&c, &common::acc_at(rng.random_range(-150.0..150.0), 0.0, share));
        let m = c.lambda_mfrr.unwrap_or(c.lambda_afrr);
        let tol = 1e-9 * (c.lambda_afrr.abs() + m.abs()).max(1.0);
        if p < c.lambda_afrr.min(m) - tol || p > c.lambda_afrr.max(m) + tol {
            c_fail += 1;
        }
        let lambda = rng.random_range(-1000.0..1000.0);
        if compute_alpha(lambda, rng.random_range(-150.0..=150.0), rng.random_range(-2000.0..2000.0)) != 0.0 {
            d_fail += 1;
        }
    }
    let weights = spot_weight(0.0) == 1.0
        && spot_weight(25.0) == (-1.0f64).exp()
        && spot_weight(-25.0) == (-1.0f64).exp();
    let elapsed = start.elapsed();
    let b = weights && max_jump < 0.01;
    check(
        a_fail == 0 && b && c_fail == 0 && d_fail == 0 && elapsed < Duration::from_secs(5),
        format!(
            "(a) {a_fail} failures, (b) weights {} max MMSD jump {max_jump:.4} EUR/MWh on 0.01 MW grid (limit 0.01; jump per unit spread and MW {max_slope:.4}), (c) {c_fail} failures, (d) {d_fail} failures, {elapsed:.2?}",
            if weights { "ok" } else { "wrong" }
        ),
    )
}

fn criteria_3_and_4(config: &Config) -> (Outcome, Outcome) {
    let run = || -> Result<(usize, usize, imbalance_sim::simulator::FleetAudit), String> {
        let base = resolve_scenario(config).map_err(|e| e.to_string())?;
        let inputs = base.load_inputs().map_err(|e| e.to_string())?;
        let (mut isps, mut mismatches) = (0, 0);
        let mut audit_400 = None;
        for capacity in [0.0, 400.0] {
            for formula in FormulaKind::ALL {
                let mut cfg = base.clone();
                cfg.fleet.total_capacity = capacity;
                cfg.rule.formula = formula;
                let result = simulate(&inputs, &cfg).map_err(|e| e.to_string())?;
                for r in &result.records {
                    isps += 1;
                    if r.minutes.last().map(|m| m.intermediate_price) != Some(r.settlement_price) {
                        mismatches += 1;
                    }
                }
                if capacity == 400.0 && formula == FormulaKind::Current {
                    audit_400 = Some(result.audit);
                }
            }
        }
        Ok((isps, mismatches, audit_400.unwrap()))
    };
    match run() {
        Err(e) => (Err(e.clone()), Err(e)),
        Ok((isps, mismatches, a)) => (
            check(mismatches == 0, format!("{mismatches} mismatches over {isps} period settlements (3 formulas, 0 and 400 MW)")),
            check(
                a.soc_violations == 0 && a.cycle_violations == 0 && a.max_conservation_residual < 1e-9,
                format!(
                    "{} assets at 400 MW: {} SoC violations, {} cycle violations, max residual {:.2e} MWh",
                    a.assets, a.soc_violations, a.cycle_violations, a.max_conservation_residual
                ),
            ),
        ),
    }
}

/// `(capacity, formula, metric, aggregation) -> value` from a metrics CSV.
fn read_metrics(path: &Path) -> Result<HashMap<MetricKey, f64>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let mut out = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let cap: f64 = rec[0].parse().map_err(|_| format!("bad capacity {}", &rec[0]))?;
        let value: f64 = rec[4].parse().map_err(|_| format!("bad value {}", &rec[4]))?;
        out.insert((cap as u64, rec[1].to_string(), rec[2].to_string(), rec[3].to_string()), value);
    }
    Ok(out)
}

struct Sweep {
    metrics: HashMap<MetricKey, f64>,
}

impl Sweep {
    fn get(&self, cap: f64, formula: &str, metric: &str, agg: &str) -> Result<f64, String> {
        self.metrics
            .get(&(cap as u64, formula.to_string(), metric.to_string(), agg.to_string()))
            .copied()
            .ok_or_else(|| format!("metric {metric}/{agg} missing for {cap} MW {formula}"))
    }
}

fn sweep_into(out: &Path) -> Result<Duration, String> {
    let start = Instant::now();
    let args = CommonArgs {
        config: PathBuf::from(CONFIG),
        jobs: None,
        out: Some(out.to_path_buf()),
        seed: None,
    };
    execute(&Command::Sweep(args)).map_err(|e| e.to_string())?;
    Ok(start.elapsed())
}

fn criterion_5(s: &Sweep) -> Outcome {
    let f = "current";
    let top = *SWEEP_CAPACITIES.last().unwrap();
    let tail_base = s.get(0.0, f, "si_share_1min", "above_150")?;
    let tail_200 = s.get(200.0, f, "si_share_1min", "above_150")?;
    let std_base = s.get(0.0, f, "within_isp_std", "mean")?;
    let std_top = s.get(top, f, "within_isp_std", "mean")?;
    let mut shift: f64 = 0.0;
    for b in BINS {
        shift = shift.max((s.get(top, f, "si_share_15min", b)? - s.get(0.0, f, "si_share_15min", b)?).abs());
    }
    check(
        tail_200 < tail_base && std_top >= 1.25 * std_base && shift < 0.10,
        format!(
            "|SI|>150 share {tail_base:.4} -> {tail_200:.4} at 200 MW; within-period std {std_base:.1} -> {std_top:.1} MW at {top} MW (x{:.2}); max 15-min bin shift {shift:.4}",
            std_top / std_base
        ),
    )
}

fn criterion_6(s: &Sweep) -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for f in FormulaKind::ALL {
        let cost: Vec<f64> = SWEEP_CAPACITIES
            .iter()
            .map(|&c| s.get(c, f.as_str(), "balancing_cost", "mean"))
            .collect::<Result<_, _>>()?;
        let dips = SWEEP_CAPACITIES.iter().zip(&cost).any(|(&c, &v)| c > 0.0 && c <= 200.0 && v < cost[0]);
        let min = cost.iter().copied().fold(f64::INFINITY, f64::min);
        let rises = *cost.last().unwrap() > min;
        ok &= dips && rises;
        parts.push(format!("{}: {}", f.as_str(), cost.iter().map(|v| format!("{v:.0}")).collect::<Vec<_>>().join("/")));
    }
    check(ok, format!("mean cost per period over capacities: {}", parts.join("; ")))
}

fn criterion_7(s: &Sweep) -> Outcome {
    let mut bad = Vec::new();
    for f in FormulaKind::ALL {
        for g in GROUPS {
            let p: Vec<f64> = SWEEP_CAPACITIES
                .iter()
                .filter(|&&c| c > 0.0)
                .map(|&c| s.get(c, f.as_str(), "fleet_profit", g))
                .collect::<Result<_, _>>()?;
            if !(p.iter().all(|&v| v > 0.0) && p.windows(2).all(|w| w[1] <= w[0])) {
                bad.push(format!("{} {g}: {}", f.as_str(), p.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join("/")));
            }
        }
    }
    check(bad.is_empty(), if bad.is_empty() { "9 of 9 formula/group series positive and non-increasing".into() } else { bad.join("; ") })
}

fn criterion_8() -> Outcome {
    let table = |shift: f64| -> Vec<CandidateScore> {
        [(300.0, 30.0, -200.0), (200.0, 15.0, -20.0), (100.0, 5.0, 0.0)]
            .iter()
            .map(|&(upper, body, tail)| {
                let mut v = vec![body + shift; 19];
                v.push(tail + shift);
                CandidateScore::from_samples(upper, 0.0, &v, 0.05, CvarReading::ExpectedShortfall).unwrap()
            })
            .collect()
    };
    let expected = [(0.0, 300.0), (0.5, 200.0), (0.8, 200.0), (1.0, 100.0)];
    let mut ok = true;
    for shift in [0.0, -1000.0, 123.25] {
        for (w, upper) in expected {
            ok &= select(&table(shift), w).map_err(|e| e.to_string())?.upper == upper;
        }
    }
    check(ok, "w 0/0.5/0.8/1 -> candidates A/B/B/C, unchanged under shifts -1000 and +123.25".into())
}

fn criterion_9(a: &Path, b: &Path, first: Duration, second: Duration) -> Outcome {
    let mut same = true;
    for name in ["isp_records.csv", "metrics.csv"] {
        let x = std::fs::read(a.join(name)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(name)).map_err(|e| e.to_string())?;
        same &= x == y;
    }
    let slowest = first.max(second);
    check(
        same && slowest < Duration::from_secs(600),
        format!("outputs {}; sweep wall time {first:.1?} and {second:.1?}", if same { "byte-identical" } else { "DIFFER" }),
    )
}

fn main() {
    let config = Config::load(CONFIG).expect("acceptance config");
    let dir = tempfile::tempdir().expect("temp dir");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));

    let mut results: Vec<(u8, &str, Outcome)> = vec![
        (1, "dispatch oracle equivalence", criterion_1()),
        (2, "pricing identities", criterion_2()),
    ];
    let (c3, c4) = criteria_3_and_4(&config);
    results.push((3, "settlement consistency", c3));
    results.push((4, "fleet invariants", c4));

    let sweeps = sweep_into(&a).and_then(|t1| sweep_into(&b).map(|t2| (t1, t2)));
    let sweep = sweeps.clone().and_then(|_| read_metrics(&a.join("metrics.csv")).map(|metrics| Sweep { metrics }));
    let with_sweep = |f: fn(&Sweep) -> Outcome| sweep.as_ref().map_err(Clone::clone).and_then(f);
    results.push((5, "imbalance distribution", with_sweep(criterion_5)));
    results.push((6, "balancing cost shape", with_sweep(criterion_6)));
    results.push((7, "fleet profit", with_sweep(criterion_7)));
    results.push((8, "calibration correctness", criterion_8()));
    results.push((9, "determinism", sweeps.and_then(|(t1, t2)| criterion_9(&a, &b, t1, t2))));

    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS criterion {n} ({name}): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
