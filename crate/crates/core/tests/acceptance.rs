//! End-to-end acceptance checks on the Lorenz and Rossler model systems.
//!
//! Runs as a plain binary (no libtest harness) so every criterion prints its
//! PASS/FAIL line whether or not it fails. Exits non-zero if any fails.
//!
//! Run: cargo test --release --test acceptance

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shapedyn::chaos::{correlation_integral, lle_auto, log_spaced};
use shapedyn::classify::Metric;
use shapedyn::embedding::{default_max_lag, delay_embed, estimate_delay, EmbeddingParams, PhaseSpace};
use shapedyn::experiments::{
    run_classify, run_stability, ClassifyConfig, FeatureSet, StabilityConfig, SyntheticSpec,
};
use shapedyn::models::{rk4_integrate, System};
use shapedyn::series::TimeSeries;
use shapedyn::shape::{
    exhaustive_d2, sample_shape, shape_distribution, total_variation, ShapeConfig, ShapeKind, DEFAULT_BINS,
};

const TRUE_LORENZ_LAMBDA: f64 = 1.50;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn x_channel(system: System, n: usize, seed: Option<u64>) -> TimeSeries {
    let mut g = system.default_config(n);
    g.seed = seed;
    system.generate(&g).unwrap().channels()[0].clone()
}

fn lambda(x: &TimeSeries, tau: usize) -> f64 {
    lle_auto(x, EmbeddingParams::new(3, tau).unwrap()).unwrap().lambda1
}

fn c1_lorenz_lambda() -> Outcome {
    let start = Instant::now();
    let l = lambda(&x_channel(System::Lorenz, 5000, None), 11);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        (1.2..=1.8).contains(&l) && secs < 60.0,
        format!("lambda1 = {l:.4} (band [1.2, 1.8]), {secs:.2} s (< 60 s)"),
    )
}

fn c2_rossler_lambda() -> Outcome {
    let long = lambda(&x_channel(System::Rossler, 2000, None), 8);
    let short = lambda(&x_channel(System::Rossler, 400, None), 8);
    outcome(
        (0.06..=0.12).contains(&long) && short < 0.06,
        format!("N=2000: {long:.4} (band [0.06, 0.12]); N=400: {short:.4} (< 0.06)"),
    )
}

fn c3_lorenz_trend() -> Outcome {
    let mut votes = 0;
    let mut rows = Vec::new();
    for seed in 0..5u64 {
        let x = x_channel(System::Lorenz, 5000, Some(seed));
        let short = lambda(&x.truncated(1000).unwrap(), 11);
        let long = lambda(&x, 11);
        let closer = (short - TRUE_LORENZ_LAMBDA).abs() > (long - TRUE_LORENZ_LAMBDA).abs();
        votes += closer as usize;
        rows.push(format!("seed {seed}: {short:.3} -> {long:.3}"));
    }
    outcome(votes >= 3, format!("{votes}/5 seeds improve with length [{}]", rows.join("; ")))
}

fn c4_delay() -> Outcome {
    let mut ok = true;
    let mut rows = Vec::new();
    for (system, n, want) in [(System::Lorenz, 5000, 11), (System::Rossler, 2000, 8)] {
        let taus: Vec<usize> = (0..5u64)
            .map(|seed| {
                let x = x_channel(system, n, Some(seed));
                estimate_delay(&x, default_max_lag(n)).unwrap().tau
            })
            .collect();
        ok &= taus.iter().all(|&t| t == want);
        rows.push(format!("{} want {want}, got {taus:?}", system.name()));
    }
    outcome(ok, rows.join("; "))
}

fn c5_stability() -> Outcome {
    let r = run_stability(&StabilityConfig::default()).unwrap();
    let (w, c) = (r.max_within.unwrap(), r.min_cross.unwrap());
    outcome(
        w < c,
        format!("max within-system chi2 = {w:.5}, min cross-system chi2 = {c:.5}"),
    )
}

fn c6_classification() -> Outcome {
    let spec = SyntheticSpec::default();
    let d2 = run_classify(&ClassifyConfig::synthetic(spec.clone())).unwrap();
    let chaos = run_classify(&ClassifyConfig {
        features: FeatureSet::Chaos,
        ..ClassifyConfig::synthetic(spec)
    })
    .unwrap();
    assert_eq!(d2.metric_used, Metric::Chi2);
    outcome(
        d2.accuracy >= 0.95 && d2.accuracy >= chaos.accuracy,
        format!(
            "LOOCV 1-NN over {} instances: D2+chi2 {:.3} (>= 0.95), Chaos+L2 {:.3} (<= D2)",
            d2.instances.len(),
            d2.accuracy,
            chaos.accuracy
        ),
    )
}

fn fixtures() -> Vec<(&'static str, PhaseSpace)> {
    let embed = |x: TimeSeries, tau| delay_embed(&x, EmbeddingParams::new(3, tau).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cloud: Vec<Vec<f64>> = (0..1000).map(|_| (0..3).map(|_| rng.gen::<f64>()).collect()).collect();
    let circle: Vec<Vec<f64>> = (0..500)
        .map(|i| {
            let t = i as f64 * 0.0137;
            vec![t.cos(), t.sin()]
        })
        .collect();
    vec![
        ("lorenz", embed(x_channel(System::Lorenz, 2000, None), 11)),
        ("rossler", embed(x_channel(System::Rossler, 2000, None), 8)),
        ("cube", PhaseSpace::from_points(&cloud).unwrap()),
        ("arc", PhaseSpace::from_points(&circle).unwrap()),
    ]
}

fn c7_sampling_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for (name, ps) in fixtures() {
        assert!(ps.len() <= 2000);
        let cfg = ShapeConfig::new(ShapeKind::D2, EmbeddingParams::new(3, 1).unwrap());
        let exact = exhaustive_d2(&ps, &cfg).unwrap();
        let tvs: Vec<f64> = (0..3)
            .map(|seed| {
                let sampled = shape_distribution(&ps, &cfg.with_seed(seed)).unwrap();
                total_variation(&exact.mass, &sampled.mass).unwrap()
            })
            .collect();
        worst = tvs.iter().cloned().fold(worst, f64::max);
        rows.push(format!("{name}: {}", tvs.iter().map(|t| format!("{t:.4}")).collect::<Vec<_>>().join("/")));
    }
    outcome(worst < 0.05, format!("max TV {worst:.4} (< 0.05) [{}]", rows.join("; ")))
}

fn c8_invariants() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    let x = x_channel(System::Lorenz, 2000, None);
    let embed = EmbeddingParams::new(3, 11).unwrap();
    let ps = delay_embed(&x, embed).unwrap();

    for kind in ShapeKind::ALL {
        let d = shape_distribution(&ps, &ShapeConfig::new(kind, embed).with_seed(4)).unwrap();
        check("mass sums to 1", (d.mass.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        check("50 bins", d.mass.len() == DEFAULT_BINS && d.bins == DEFAULT_BINS);
    }

    let plain = sample_shape(&ps, &ShapeConfig::new(ShapeKind::D2, embed).with_seed(8)).unwrap();
    let decayed = sample_shape(&ps, &ShapeConfig::new(ShapeKind::DT2, embed).with_seed(8)).unwrap();
    check("DT2 <= D2 per pair", plain.iter().zip(&decayed).all(|(p, d)| d <= p));

    let l1 = lambda(&x, 11);
    let l2 = lambda(&x.scaled(2.0).unwrap(), 11);
    check("lambda1 scale invariance", (l1 - l2).abs() < 1e-9);

    let d = ps.diameter();
    let c = correlation_integral(&ps, &log_spaced(1e-3 * d, d, 16), 50).unwrap();
    check("C(r) monotone", c.windows(2).all(|w| w[0] <= w[1]));

    // y' = -y from y(0) = 1 to t = 1
    let err = |steps: usize| (rk4_integrate(|y: &[f64; 1]| [-y[0]], [1.0], 1.0 / steps as f64, steps)[0] - (-1.0f64).exp()).abs();
    let ratio = err(10) / err(20);
    check("RK4 order ratio 16 +- 20%", (ratio - 16.0).abs() <= 3.2);

    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    for kind in ShapeKind::ALL {
        let cfg = ShapeConfig::new(kind, embed).with_seed(21);
        let pooled = shape_distribution(&ps, &cfg).unwrap();
        let serial = pool.install(|| shape_distribution(&ps, &cfg)).unwrap();
        check("parallel == sequential shapes", pooled == serial);
        check("repeat run identical", shape_distribution(&ps, &cfg).unwrap() == pooled);
    }
    let serial_lle = pool.install(|| lambda(&x, 11));
    check("parallel == sequential lambda1", serial_lle.to_bits() == l1.to_bits());
    let small = ClassifyConfig::synthetic(SyntheticSpec {
        per_class: 4,
        lorenz_lengths: (600, 900),
        rossler_lengths: (400, 600),
        seed: 13,
    });
    let pooled = run_classify(&small).unwrap();
    let serial = pool.install(|| run_classify(&small)).unwrap();
    check("parallel == sequential report", pooled == serial);

    failures.dedup();
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("all hold (RK4 ratio {ratio:.3})")
        } else {
            format!("violated: {}", failures.join(", "))
        },
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 Lorenz lambda1, N=5000", c1_lorenz_lambda),
        ("2 Rossler lambda1, N=2000 and N=400", c2_rossler_lambda),
        ("3 Lorenz lambda1 improves with length", c3_lorenz_trend),
        ("4 embedding delay 11 / 8", c4_delay),
        ("5 D2 length stability ordering", c5_stability),
        ("6 synthetic LOOCV classification", c6_classification),
        ("7 sampled vs exhaustive D2", c7_sampling_oracle),
        ("8 invariant suite", c8_invariants),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let o = run();
        failed += !o.pass as usize;
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
