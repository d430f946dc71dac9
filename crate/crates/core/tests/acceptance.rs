//! Acceptance run: every criterion at its stated tolerance, one line each.
//! Criteria run one after another so the runtime limits are measured
//! without competition from each other.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use catenc::data::{ColumnSchema, Dataset};
use catenc::encoders::{contrast_encode, ContrastScheme, Method};
use catenc::eval::{
    paired_t_test, run_benchmark, stratified_kfold, BenchConfig, BenchReport, DataSource,
    MethodEntry,
};
use catenc::numlin::mnl;
use catenc::numlin::spca::sparse_pca;
use catenc::numlin::svd::svd;
use catenc::oracle::{
    build_world, check_world, mnl_moment_check, WorldCheck, TOL_DECOMPOSITION, TOL_LOWRANK,
    TOL_MEANS, TOL_PSI,
};
use catenc::par::Execution;
use catenc::rng;
use catenc::sim::{Setup, SimConfig};
use nalgebra::DMatrix;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn contrast_tables() -> Outcome {
    #[rustfmt::skip]
    let tables: [(ContrastScheme, [[f64; 4]; 5]); 5] = [
        (ContrastScheme::Onehot, [
            [0.0, 0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]),
        (ContrastScheme::Deviation, [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [-1.0, -1.0, -1.0, -1.0],
        ]),
        (ContrastScheme::Difference, [
            [-0.5, -0.333, -0.25, -0.2],
            [0.5, -0.333, -0.25, -0.2],
            [0.0, 0.667, -0.25, -0.2],
            [0.0, 0.000, 0.75, -0.2],
            [0.0, 0.000, 0.00, 0.8],
        ]),
        (ContrastScheme::Helmert, [
            [0.80, 0.00, 0.00, 0.00],
            [-0.20, 0.75, 0.00, 0.00],
            [-0.20, -0.25, 0.67, 0.00],
            [-0.20, -0.25, -0.33, 0.50],
            [-0.20, -0.25, -0.33, -0.50],
        ]),
        (ContrastScheme::Repeated, [
            [0.8, 0.6, 0.4, 0.2],
            [-0.2, 0.6, 0.4, 0.2],
            [-0.2, -0.4, 0.4, 0.2],
            [-0.2, -0.4, -0.6, 0.2],
            [-0.2, -0.4, -0.6, -0.8],
        ]),
    ];
    let mut worst: f64 = 0.0;
    for (scheme, table) in tables {
        let got = contrast_encode(scheme, 5).map_err(|e| e.to_string())?;
        if got.shape() != (5, 4) {
            return Err(format!("{scheme:?} has shape {:?}", got.shape()));
        }
        for (r, row) in table.iter().enumerate() {
            for (c, want) in row.iter().enumerate() {
                worst = worst.max((got[(r, c)] - want).abs());
            }
        }
    }
    check(
        worst <= 0.005,
        format!("max |Δ| = {worst:.4} over 5 tables"),
    )
}

fn identity_suite() -> Outcome {
    let mut rng = rng::stream(2024, 0);
    let mut worst = WorldCheck::default();
    for i in 0..50 {
        let k = [1, 2, 3, 5][rng.random_range(0..4)];
        let m = rng.random_range(k..=4 * k);
        // the support must span the k latent means
        let support = rng.random_range(4.max(k)..=8);
        let w = build_world(k, m, k + 1, support, &mut rng::stream(2024, 1 + i))
            .map_err(|e| e.to_string())?;
        worst = worst.merge(check_world(&w, Execution::Sequential).map_err(|e| e.to_string())?);
    }
    let ok = worst.psi <= TOL_PSI
        && worst.means <= TOL_MEANS
        && worst.lowrank <= TOL_LOWRANK
        && worst.decomposition <= TOL_DECOMPOSITION;
    check(
        ok,
        format!(
            "psi {:.1e}, means {:.1e}, lowrank {:.1e}, Ω−AΨ {:.1e}",
            worst.psi, worst.means, worst.lowrank, worst.decomposition
        ),
    )
}

fn moment_identity() -> Outcome {
    #[rustfmt::skip]
    let theta = DMatrix::from_row_slice(4, 4, &[
        0.5, 1.0, -0.5, 0.3,
        -0.2, -0.7, 0.8, 0.1,
        0.1, 0.4, 0.4, -0.9,
        0.0, 0.0, 0.0, 0.0,
    ]);
    let small = mnl_moment_check(&theta, 10_000, 7).map_err(|e| e.to_string())?;
    let large = mnl_moment_check(&theta, 100_000, 7).map_err(|e| e.to_string())?;
    check(
        large.discrepancy <= 0.05 && small.discrepancy > large.discrepancy && large.converged,
        format!(
            "n=1e4: {:.4}, n=1e5: {:.4} (in-sample {:.1e})",
            small.discrepancy, large.discrepancy, large.in_sample_discrepancy
        ),
    )
}

fn kernel_properties() -> Outcome {
    let mut r = rng::stream(77, 0);
    let mut random =
        |rows: usize, cols: usize| DMatrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0));

    let mut svd_err: f64 = 0.0;
    for (rows, cols) in [(6, 4), (4, 6), (12, 12), (30, 5)] {
        let m = random(rows, cols);
        let f = svd(&m).map_err(|e| e.to_string())?;
        svd_err = svd_err.max((f.reconstruct() - &m).norm() / m.norm());
    }

    let x = random(200, 3);
    let g: Vec<usize> = (0..200).map(|i| i % 4).collect();
    let theta = {
        let mut t = random(4, 4);
        t.row_mut(3).fill(0.0);
        t
    };
    let analytic = mnl::gradient(&x, &g, &theta, 0.1);
    let h = 1e-6;
    let mut fd_err: f64 = 0.0;
    for r in 0..3 {
        for c in 0..4 {
            let (mut up, mut down) = (theta.clone(), theta.clone());
            up[(r, c)] += h;
            down[(r, c)] -= h;
            let fd =
                (mnl::objective(&x, &g, &up, 0.1) - mnl::objective(&x, &g, &down, 0.1)) / (2.0 * h);
            fd_err = fd_err.max((fd - analytic[(r, c)]).abs() / analytic[(r, c)].abs().max(1.0));
        }
    }

    let m = random(12, 6);
    let f = sparse_pca(&m, 2, 0.0, &[0.0, 0.0]).map_err(|e| e.to_string())?;
    let projector = |q: &DMatrix<f64>| {
        let qr = q.clone().qr();
        let qm = qr.q();
        &qm * qm.transpose()
    };
    let v = svd(&m)
        .map_err(|e| e.to_string())?
        .v
        .columns(0, 2)
        .into_owned();
    let subspace = (projector(&f.b) - projector(&v)).amax();

    let mut monotone = true;
    for _ in 0..5 {
        let m = random(15, 7);
        let f = sparse_pca(&m, 3, 0.5, &[0.8, 0.5, 0.3]).map_err(|e| e.to_string())?;
        monotone &= f
            .objective_trace
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-10 * w[0].abs().max(1.0));
    }
    check(
        svd_err <= 1e-10 && fd_err <= 1e-4 && subspace <= 1e-6 && monotone,
        format!(
            "svd {svd_err:.1e}, gradient {fd_err:.1e}, spca subspace {subspace:.1e}, trace monotone {monotone}"
        ),
    )
}

fn improvements(num_latent: usize) -> Result<BenchReport, String> {
    let sim = SimConfig::new(Setup::LatentLinear, 5000, num_latent, 100, 10);
    let mut cfg = BenchConfig::new(
        DataSource::Simulate(sim),
        vec![
            MethodEntry::new(Method::Means),
            MethodEntry::new(Method::Lowrank).with_select_k(),
            MethodEntry::new(Method::Mnl),
        ],
    );
    cfg.seeds = 20;
    cfg.folds = 4;
    run_benchmark(&cfg, Execution::default()).map_err(|e| e.to_string())
}

fn simulation_trend() -> Outcome {
    let ten = improvements(10)?;
    let two = improvements(2)?;
    let mut positive = true;
    let mut larger = 0;
    let mut parts = Vec::new();
    for name in ["means", "lowrank", "mnl"] {
        let a = ten
            .summary(name)
            .and_then(|s| s.improvement)
            .unwrap_or(f64::NAN);
        let b = two
            .summary(name)
            .and_then(|s| s.improvement)
            .unwrap_or(f64::NAN);
        positive &= a > 0.0 && b > 0.0;
        larger += usize::from(a > b);
        parts.push(format!("{name} {a:.2}% vs {b:.2}%"));
    }
    check(
        positive && larger >= 2,
        format!(
            "|L|=10 vs |L|=2: {}; larger at 10 for {larger}/3",
            parts.join(", ")
        ),
    )
}

fn statistics() -> Outcome {
    let r = paired_t_test(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).map_err(|e| e.to_string())?;
    let worked = (r.t - 3.4641).abs() <= 1e-3 && (r.p - 0.0742).abs() <= 1e-3;
    let mut worst: f64 = 0.0;
    for df in [1.0, 2.0, 3.0, 4.0, 7.0, 15.0, 19.0, 50.0, 79.0, 500.0] {
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| e.to_string())?;
        for t in [0.05, 0.3, 0.8, 1.5, 2.0, 2.8, 4.0, 7.0] {
            let want = 2.0 * (1.0 - dist.cdf(t));
            let got = catenc::eval::stats::student_t_two_sided(t, df);
            worst = worst.max((got - want).abs());
        }
    }
    check(
        worked && worst <= 1e-6,
        format!(
            "t = {:.4}, p = {:.4}; max |Δp| vs reference CDF {worst:.1e}",
            r.t, r.p
        ),
    )
}

fn fold_fidelity() -> Outcome {
    let mut r = rng::stream(99, 0);
    let mut violations = 0;
    let mut tested_rows = 0;
    for trial in 0..100 {
        let n = r.random_range(20..400);
        let levels = r.random_range(2..60);
        // skewed frequencies so some categories are rare
        let g: Vec<usize> = (0..n)
            .map(|_| {
                let u: f64 = r.random();
                ((u * u) * levels as f64) as usize
            })
            .collect();
        let plan =
            stratified_kfold(&g, 4, &mut rng::stream(99, 1 + trial)).map_err(|e| e.to_string())?;
        for f in 0..4 {
            let mut in_train = vec![false; levels];
            for i in plan.train_rows(f) {
                in_train[g[i]] = true;
            }
            for i in plan.test_rows(f) {
                tested_rows += 1;
                violations += usize::from(!in_train[g[i]]);
            }
        }
    }
    check(
        violations == 0,
        format!("{violations} unseen test categories across {tested_rows} test rows in 100 plans"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let sim = SimConfig::new(Setup::LatentPiecewise, 600, 3, 12, 5).with_seed(4);
    let data = catenc::sim::simulate(&sim)
        .map_err(|e| e.to_string())?
        .dataset;
    let path = dir.path().join("d.csv");
    data.save_csv(&path).map_err(|e| e.to_string())?;
    let schema: ColumnSchema = data.schema();
    Dataset::load_csv(&path, &schema).map_err(|e| e.to_string())?;
    let methods: Vec<MethodEntry> = [
        "means",
        "lowrank:k=cv",
        "sparselowrank:k=2",
        "mnl",
        "multiperm",
        "fisher",
        "helmert",
    ]
    .iter()
    .map(|s| s.parse().expect("valid entry"))
    .collect();
    let mut same = true;
    for source in [
        DataSource::Simulate(sim.clone()),
        DataSource::Csv { path, schema },
    ] {
        let mut cfg = BenchConfig::new(source, methods.clone());
        cfg.seeds = 2;
        cfg.seed = 13;
        let a = run_benchmark(&cfg, Execution::default()).map_err(|e| e.to_string())?;
        let b = run_benchmark(&cfg, Execution::default()).map_err(|e| e.to_string())?;
        let c = run_benchmark(&cfg, Execution::Sequential).map_err(|e| e.to_string())?;
        for r in [&b, &c] {
            same &= a.to_json().unwrap() == r.to_json().unwrap()
                && a.to_csv() == r.to_csv()
                && a.cells_to_csv() == r.cells_to_csv();
        }
    }
    check(
        same,
        "two runs and a sequential run give byte-identical JSON and CSV".to_string(),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 contrast tables", contrast_tables, Duration::from_secs(1)),
        ("2 identity suite", identity_suite, Duration::from_secs(30)),
        (
            "3 moment identity",
            moment_identity,
            Duration::from_secs(60),
        ),
        (
            "4 kernel properties",
            kernel_properties,
            Duration::from_secs(30),
        ),
        (
            "5 simulation trend",
            simulation_trend,
            Duration::from_secs(300),
        ),
        ("6 statistics", statistics, Duration::MAX),
        ("7 fold fidelity", fold_fidelity, Duration::MAX),
        ("8 determinism", determinism, Duration::MAX),
    ];
    let only: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, run, limit) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) => (elapsed <= limit, d),
            Err(d) => (false, d),
        };
        let limit_note = if limit == Duration::MAX {
            String::new()
        } else {
            format!(" (limit {}s)", limit.as_secs())
        };
        println!(
            "criterion {name}: {} [{detail}] {:.2}s{limit_note}",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        failed += usize::from(!ok);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
