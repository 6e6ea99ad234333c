//! Acceptance suite: one PASS/FAIL line per criterion; exits nonzero if any
//! criterion fails.

use std::collections::HashSet;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;

use bipop_core::config::{EvaluatorSpec, MigrationMode, RunConfig, SpaceChoice};
use bipop_core::driver::run_from_config;
use bipop_core::experiments::{self, SampleMethod, TrainSampling};
use bipop_core::metrics::{self, Bounds};
use bipop_core::moea::{dominates, non_dominated_sort, ObjectiveVector};
use bipop_core::seed::rng_from_seed;
use bipop_core::space::{self, random_genome_with};
use bipop_core::surrogate::{
    self, build_pairwise_dataset, pair_count, train_comparator, Comparator, ConstantComparator,
};
use bipop_core::{Evaluator, Genome, SearchSpaceConfig, Source, SurrogateKind, SyntheticEvaluator, SyntheticOracleConfig};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn budget_exactness() -> Verdict {
    let cfg = RunConfig::with_iterations(25);
    let start = Instant::now();
    let out = run_from_config(&cfg).expect("default run");
    let elapsed = start.elapsed();
    verdict(
        out.evaluations == 350 && elapsed < Duration::from_secs(300),
        format!(
            "{} evaluator calls (expected 350), archive {}, {:.1} s",
            out.evaluations,
            out.archive.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn nds_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = rng_from_seed(2);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=200);
        // A coarse grid forces ties and duplicates.
        let grid = rng.gen_range(3..50) as f64;
        let pts: Vec<ObjectiveVector> = (0..n)
            .map(|_| ObjectiveVector::new((rng.gen::<f64>() * grid).floor(), (rng.gen::<f64>() * grid).floor()))
            .collect();
        let fa = non_dominated_sort(&pts);
        let fast: HashSet<usize> = fa.fronts[0].iter().copied().collect();
        let brute: HashSet<usize> = (0..n)
            .filter(|&i| !(0..n).any(|j| dominates(&pts[j], &pts[i])))
            .collect();
        mismatches += usize::from(fast != brute);
    }
    let elapsed = start.elapsed();
    verdict(
        mismatches == 0 && elapsed < Duration::from_secs(10),
        format!("{mismatches}/100 rank-1 mismatches, {:.2} s", elapsed.as_secs_f64()),
    )
}

fn metric_exactness() -> Verdict {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
    let mut checks = vec![
        close(metrics::hypervolume_2d(&[[0.0, 0.0]], [1.0, 1.0]), 1.0),
        close(metrics::hypervolume_2d(&[[0.2, 0.6], [0.6, 0.2]], [1.0, 1.0]), 0.48),
        close(
            metrics::hypervolume_2d(&[[0.2, 0.6], [0.6, 0.2], [0.7, 0.7]], [1.0, 1.0]),
            0.48,
        ),
        close(metrics::distribution_entropy(&[[0.4, 3.0]; 100], 10).unwrap(), 0.0),
        close(
            metrics::distribution_entropy(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], 2).unwrap(),
            2.0,
        ),
    ];
    let eight = [
        [0.0, 0.0],
        [0.1, 0.1],
        [0.5, 0.0],
        [1.0, 0.0],
        [0.0, 0.5],
        [0.5, 0.5],
        [1.0, 0.5],
        [0.0, 1.0],
    ];
    checks.push(close(metrics::distribution_entropy(&eight, 3).unwrap(), 2.75));
    let examples_ok = checks.iter().all(|&c| c);

    let mut rng = rng_from_seed(3);
    let mut decreases = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(0..30);
        let mut pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect();
        let before = metrics::hypervolume_2d(&pts, [1.0, 1.0]);
        pts.push([rng.gen::<f64>() * 1.2, rng.gen::<f64>() * 1.2]);
        let after = metrics::hypervolume_2d(&pts, [1.0, 1.0]);
        decreases += usize::from(after < before);
    }
    verdict(
        examples_ok && decreases == 0,
        format!(
            "{}/{} worked examples within 1e-9, {decreases}/1000 HV decreases on add-a-point",
            checks.iter().filter(|&&c| c).count(),
            checks.len()
        ),
    )
}

fn tiny_optimality() -> Verdict {
    let start = Instant::now();
    let space = SearchSpaceConfig::tiny();
    let oracle = SyntheticOracleConfig {
        noise_amp: 0.0,
        ..Default::default()
    };
    let evaluator = SyntheticEvaluator::new(space.clone(), oracle.clone()).unwrap();
    let all = space::enumerate_genomes(&space, 10_000).unwrap();
    let points: Vec<[f64; 2]> = all
        .iter()
        .map(|g| {
            let r = evaluator.evaluate(g).unwrap();
            [r.error_rate, r.madds]
        })
        .collect();
    let objs: Vec<ObjectiveVector> = points.iter().map(|p| ObjectiveVector::new(p[0], p[1])).collect();
    let true_front: Vec<[f64; 2]> = non_dominated_sort(&objs).fronts[0].iter().map(|&i| points[i]).collect();
    let bounds = Bounds::from_points(&true_front).unwrap();
    let reference: Vec<[f64; 2]> = true_front.iter().map(|&p| bounds.normalize(p)).collect();

    let mut igds = Vec::new();
    for seed in 0..20 {
        let mut cfg = RunConfig::with_iterations(10);
        cfg.generations = 20;
        cfg.seed = seed;
        cfg.space = SpaceChoice::Named("tiny".into());
        cfg.evaluator = EvaluatorSpec::Synthetic(oracle.clone());
        let out = run_from_config(&cfg).expect("tiny run");
        let approx: Vec<[f64; 2]> = out.pareto.iter().map(|r| bounds.normalize(r.point())).collect();
        igds.push(metrics::igd(&reference, &approx).unwrap());
    }
    let good = igds.iter().filter(|&&d| d <= 0.02).count();
    let elapsed = start.elapsed();
    verdict(
        good >= 18 && elapsed < Duration::from_secs(120),
        format!(
            "{} genomes, true front {}; IGD <= 0.02 in {good}/20 seeds (max {:.4}), {:.1} s",
            all.len(),
            true_front.len(),
            igds.iter().copied().fold(0.0, f64::max),
            elapsed.as_secs_f64()
        ),
    )
}

fn sampling_direction() -> Verdict {
    let cfg = RunConfig::with_iterations(0);
    let space = cfg.resolved_space().unwrap();
    let evaluator = SyntheticEvaluator::new(space, SyntheticOracleConfig::default()).unwrap();
    let methods = [SampleMethod::Uniform, SampleMethod::Random];
    let rows = experiments::sample_compare(&cfg, &methods, 20, &evaluator).unwrap();
    let col = |m: SampleMethod, f: fn(&experiments::SampleCompareRow) -> f64| -> Vec<f64> {
        rows.iter().filter(|r| r.method == m).map(f).collect()
    };
    let (ue, re) = (col(methods[0], |r| r.entropy), col(methods[1], |r| r.entropy));
    let (uh, rh) = (col(methods[0], |r| r.hv), col(methods[1], |r| r.hv));
    let (um, rm) = (col(methods[0], |r| r.madds_entropy), col(methods[1], |r| r.madds_entropy));
    let wins = |a: &[f64], b: &[f64]| a.iter().zip(b).filter(|(x, y)| x > y).count();
    let entropy_wins = wins(&ue, &re);
    verdict(
        mean(&ue) > mean(&re) && mean(&uh) > mean(&rh) && entropy_wins >= 19,
        format!(
            "entropy {:.4} vs {:.4} (uniform wins {entropy_wins}/20), hv {:.4} vs {:.4} (wins {}/20); \
             MAdds-marginal entropy {:.4} vs {:.4} (wins {}/20)",
            mean(&ue),
            mean(&re),
            mean(&uh),
            mean(&rh),
            wins(&uh, &rh),
            mean(&um),
            mean(&rm),
            wins(&um, &rm)
        ),
    )
}

fn surrogate_direction() -> Verdict {
    let cfg = RunConfig::with_iterations(0);
    let space = cfg.resolved_space().unwrap();
    let evaluator = SyntheticEvaluator::new(space, SyntheticOracleConfig::default()).unwrap();
    let report = experiments::surrogate_eval(&cfg, &evaluator).unwrap();
    let m = |k, s| report.mean(k, s).unwrap();
    let pu = m(SurrogateKind::Pairwise, TrainSampling::Uniform);
    let pr = m(SurrogateKind::Pairwise, TrainSampling::Random);
    let ru = m(SurrogateKind::Regression, TrainSampling::Uniform);
    let rr = m(SurrogateKind::Regression, TrainSampling::Random);
    let pairwise = 0.5 * (pu + pr);
    let regression = 0.5 * (ru + rr);
    let checks = [pu >= pr, pairwise >= regression, pu >= 0.6];
    verdict(
        checks.iter().all(|&c| c),
        format!(
            "pairwise+uniform {pu:.4} {} pairwise+random {pr:.4}; pairwise {pairwise:.4} {} regression {regression:.4} \
             (regression+uniform {ru:.4}, regression+random {rr:.4}); pairwise+uniform {} 0.6",
            if checks[0] { ">=" } else { "<" },
            if checks[1] { ">=" } else { "<" },
            if checks[2] { ">=" } else { "<" },
        ),
    )
}

fn strength_conservation() -> Verdict {
    let space = SearchSpaceConfig::mobilenet_v3();
    let evaluator = SyntheticEvaluator::new(space.clone(), SyntheticOracleConfig::default()).unwrap();
    let mut rng = rng_from_seed(7);
    let train: Vec<(Genome, f64)> = (0..40)
        .map(|_| {
            let g = random_genome_with(&space, &mut rng);
            let e = evaluator.evaluate(&g).unwrap().error_rate;
            (g, e)
        })
        .collect();
    let hp = bipop_core::SvmHyperParams {
        epochs: 20,
        ..Default::default()
    };
    let svm = train_comparator(&build_pairwise_dataset(&train, true, true).unwrap(), &hp, 1).unwrap();
    let reg = surrogate::train_regressor(&train, &hp, 1).unwrap();
    let models: [&dyn Comparator; 3] = [&svm, &reg, &ConstantComparator(0.5)];
    let mut violations = 0;
    for trial in 0..1000 {
        let n = rng.gen_range(2..80);
        let candidates: Vec<Genome> = (0..n).map(|_| random_genome_with(&space, &mut rng)).collect();
        let s = models[trial % 3].strengths(&candidates).unwrap();
        violations += usize::from(s.total() != pair_count(n) as f64);
    }
    verdict(violations == 0, format!("{violations}/1000 trials with sum != C(n,2)"))
}

fn migration_asymmetry() -> Verdict {
    let start = Instant::now();
    let mut leaks = 0;
    let mut entropy = [Vec::new(), Vec::new()];
    for seed in 0..20 {
        for (k, mode) in [MigrationMode::OneWay, MigrationMode::Mutual].into_iter().enumerate() {
            let mut cfg = RunConfig::with_iterations(25);
            cfg.seed = seed;
            cfg.migration = mode;
            let out = run_from_config(&cfg).expect("migration run");
            if mode == MigrationMode::OneWay {
                for snap in &out.history {
                    leaks += snap
                        .p1
                        .iter()
                        .filter(|g| out.archive.get(g).map(|r| r.source) == Some(Source::EliteP2))
                        .count();
                }
            }
            entropy[k].push(out.trace.last().unwrap().entropy);
        }
    }
    let (one_way, mutual) = (mean(&entropy[0]), mean(&entropy[1]));
    verdict(
        leaks == 0 && mutual <= one_way,
        format!(
            "{leaks} elite_p2-only genomes in P1 under one_way; final entropy mutual {mutual:.4} vs one_way {one_way:.4}; {:.0} s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn bipop(args: &[&str]) -> u8 {
    bipop_cli::execute(std::iter::once("bipop").chain(args.iter().copied()))
}

fn files_equal(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<_> = std::fs::read_dir(a)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(format!("{} is empty", a.display()));
    }
    for n in &names {
        let x = std::fs::read(a.join(n)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(n)).map_err(|e| e.to_string())?;
        if x != y {
            return Err(format!("{} differs", n.to_string_lossy()));
        }
    }
    Ok(names.len())
}

fn cli_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let search_cfg = root.join("search.json");
    std::fs::write(
        &search_cfg,
        r#"{"iterations": 3, "space": "tiny", "generations": 10, "sub_pop_size": 30, "seed": 11}"#,
    )
    .unwrap();
    let exp_cfg = root.join("experiments.json");
    std::fs::write(
        &exp_cfg,
        r#"{"iterations": 0, "pool_size": 2000, "seed": 5,
            "surrogate": {"hyper": {"epochs": 20}},
            "surrogate_eval": {"seeds": 2, "train_size": 100, "test_size": 300}}"#,
    )
    .unwrap();
    let mut failures = Vec::new();
    let mut compared = 0;
    let cfg = |p: &Path| p.to_str().unwrap().to_string();
    let commands: Vec<(&str, Vec<String>)> = vec![
        ("search", vec!["search".into(), "--config".into(), cfg(&search_cfg)]),
        (
            "sample-compare",
            vec!["sample-compare".into(), "--config".into(), cfg(&exp_cfg), "--seeds".into(), "3".into()],
        ),
        ("surrogate-eval", vec!["surrogate-eval".into(), "--config".into(), cfg(&exp_cfg)]),
    ];
    for (name, args) in &commands {
        let outs: Vec<_> = ["a", "b"].iter().map(|t| root.join(format!("{name}-{t}"))).collect();
        for o in &outs {
            let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
            full.extend(["--out", o.to_str().unwrap()]);
            let code = bipop(&full);
            if code != 0 {
                failures.push(format!("{name} exited {code}"));
            }
        }
        match files_equal(&outs[0], &outs[1]) {
            Ok(n) => compared += n,
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    let archive = root.join("search-a").join("archive.csv");
    let metric_outs: Vec<_> = ["a", "b"].iter().map(|t| root.join(format!("metrics-{t}.csv"))).collect();
    for o in &metric_outs {
        let code = bipop(&[
            "metrics",
            "--archive",
            archive.to_str().unwrap(),
            "--metric",
            "entropy",
            "--out",
            o.to_str().unwrap(),
        ]);
        if code != 0 {
            failures.push(format!("metrics exited {code}"));
        }
    }
    if std::fs::read(&metric_outs[0]).ok() != std::fs::read(&metric_outs[1]).ok() {
        failures.push("metrics output differs".into());
    } else {
        compared += 1;
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!("4 commands, {compared} output files byte-identical across repeated runs")
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("budget exactness", budget_exactness),
        ("non-dominated sort oracle equivalence", nds_oracle),
        ("metric exactness", metric_exactness),
        ("tiny-space end-to-end optimality", tiny_optimality),
        ("sampling direction", sampling_direction),
        ("surrogate direction", surrogate_direction),
        ("strength conservation", strength_conservation),
        ("migration asymmetry", migration_asymmetry),
        ("CLI determinism", cli_determinism),
    ];
    let filter: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let v = check();
        println!(
            "criterion {n} ({name}): {} - {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
