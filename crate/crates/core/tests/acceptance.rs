//! End-to-end acceptance criteria. Runs without the libtest harness so every
//! criterion prints one PASS/FAIL line; exits nonzero if any fails.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sddej::analysis::{
    assumption_margin, check_assumption, estimate_errors, interpolation_gap, l2_rate_exponent,
    lp_rate_condition_holds, lp_rate_exponent, moment_estimate, strong_error, AssumptionKind, MomentSetup,
    StrongErrorSetup,
};
use sddej::experiment::{parse_config, resolve, run};
use sddej::linalg;
use sddej::model::{builtin, geometric_jump_diffusion, superlinear_scalar, GjdParams, InitialSegment};
use sddej::noise::{NoiseBundle, NoiseKey};
use sddej::scheme::{integrate_increments, interp_continuous, SchemeKind, StepSize};
use sddej::truncation::{Phi, Regime, Scratch, TruncationConfig};
use sddej::{Coefficients, ModelSpec};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn dyadic(levels: std::ops::RangeInclusive<i32>) -> Vec<f64> {
    levels.map(|l| 2f64.powi(-l)).collect()
}

fn cubic_trunc(regime: Regime) -> TruncationConfig {
    TruncationConfig::new(Phi::power(5.0, 3.0).unwrap(), None, 0.125, regime).unwrap()
}

fn section5(tau: f64, xi: f64) -> ModelSpec {
    superlinear_scalar(tau, InitialSegment::constant(vec![xi])).unwrap().0
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let scale = log_uniform(rng, 1e-3, 1e6);
    (0..n).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect()
}

fn criterion_1() -> Outcome {
    const N: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let mut violations = [0usize; 5];

    // projection properties in dimensions 1..=4
    let trunc = cubic_trunc(Regime::TruncateFG);
    for _ in 0..N {
        let n = rng.random_range(1..=4);
        let delta = 2f64.powf(-20.0 * rng.random::<f64>());
        let level = trunc.at(delta).unwrap();
        let x = random_vec(&mut rng, n);
        let y = if rng.random::<bool>() {
            random_vec(&mut rng, n)
        } else {
            let s = log_uniform(&mut rng, 1e-8, 1.0) * linalg::norm(&x);
            x.iter().map(|v| v + s * (2.0 * rng.random::<f64>() - 1.0)).collect()
        };
        let (mut px, mut py) = (vec![0.0; n], vec![0.0; n]);
        level.project(&x, &mut px);
        level.project(&y, &mut py);
        if linalg::dist(&px, &py) > linalg::dist(&x, &y) {
            violations[0] += 1;
        }
        if linalg::norm(&px) > linalg::norm(&x) {
            violations[1] += 1;
        }
        if linalg::norm(&x) <= level.radius && px != x {
            violations[2] += 1;
        }
    }

    // coefficient caps on both built-in models and both regimes
    let gjd = builtin("gjd", &BTreeMap::new()).unwrap();
    let sec5 = builtin("section5", &BTreeMap::new()).unwrap();
    for b in [&gjd, &sec5] {
        for regime in [Regime::TruncateFG, Regime::TruncateFGH] {
            let t = TruncationConfig::new(b.default_envelope(regime).clone(), None, 0.125, regime).unwrap();
            let mut scratch = Scratch::new(1);
            let mut c = Coefficients::zeros(1, 1);
            for _ in 0..N / 4 {
                let delta = 2f64.powf(-20.0 * rng.random::<f64>());
                let level = t.at(delta).unwrap();
                let x = random_vec(&mut rng, 1);
                let y = random_vec(&mut rng, 1);
                level.coefficients_into(&b.model, &x, &y, &mut scratch, &mut c);
                if linalg::norm(&c.drift).max(linalg::norm(&c.diffusion)) > level.alpha {
                    violations[3] += 1;
                }
                if regime == Regime::TruncateFGH && linalg::norm(&c.jump) > level.alpha {
                    violations[4] += 1;
                }
            }
        }
    }
    let detail = format!(
        "non-expansive {}, |π(x)|≤|x| {}, identity {}, |f_Δ|∨|g_Δ|≤α {}, |h_Δ|≤α {} violations over 1e5 inputs each",
        violations[0], violations[1], violations[2], violations[3], violations[4]
    );
    if violations.iter().all(|v| *v == 0) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gjd_setup() -> StrongErrorSetup {
    StrongErrorSetup {
        deltas: dyadic(4..=9),
        ref_delta: None,
        horizon: 1.0,
        p: 2.0,
        paths: 2000,
        seed: 2024,
    }
}

fn criterion_2() -> Outcome {
    let m = geometric_jump_diffusion(GjdParams::default()).unwrap();
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let report = single
        .install(|| strong_error(&m, None, SchemeKind::PlainEm, &gjd_setup()))
        .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "slope {:.4} ± {:.4} (band [0.7, 1.3]), single-threaded {secs:.2}s",
        report.slope, report.slope_ci
    );
    if (0.7..=1.3).contains(&report.slope) && secs < 60.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_3() -> Outcome {
    let m = section5(0.25, 1.0);
    let trunc = cubic_trunc(Regime::TruncateFG);
    let setup = StrongErrorSetup {
        deltas: dyadic(4..=8),
        ref_delta: None,
        horizon: 1.0,
        p: 2.0,
        paths: 2000,
        seed: 33,
    };
    let theory = l2_rate_exponent(25.0, 2.0, 0.125, 1.0).map_err(|e| e.to_string())?;
    let report = strong_error(&m, Some(&trunc), SchemeKind::TruncatedFg, &setup)
        .map_err(|e| e.to_string())?
        .with_theory(theory);
    let detail = format!(
        "slope {:.4} ± {:.4} (need ≥ 0.6), theoretical exponent {theory}, reference Δ = {}",
        report.slope, report.slope_ci, report.ref_delta
    );
    if report.slope >= 0.6 && (theory - 0.75).abs() < 1e-15 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_4() -> Outcome {
    let m = section5(0.25, 1.0);
    let trunc = cubic_trunc(Regime::TruncateFGH);
    let deltas = dyadic(4..=8);
    let c2 = 0.2f64.cbrt();
    let mut condition = true;
    for &d in &deltas {
        condition &= lp_rate_condition_holds(trunc.phi(), c2, 0.125, trunc.k0(), 1.0, 1.0, d).map_err(|e| e.to_string())?;
    }
    let theory = lp_rate_exponent(1.0, 0.125, 1.0).map_err(|e| e.to_string())?;
    let setup = StrongErrorSetup {
        deltas,
        ref_delta: None,
        horizon: 1.0,
        p: 1.0,
        paths: 2000,
        seed: 44,
    };
    let report = strong_error(&m, Some(&trunc), SchemeKind::TruncatedFgh, &setup).map_err(|e| e.to_string())?;
    let detail = format!(
        "rate condition on grid: {condition} (K0 = {}), L¹ slope {:.4} ± {:.4} (need ≥ {})",
        trunc.k0(),
        report.slope,
        report.slope_ci,
        theory - 0.05
    );
    if condition && report.slope >= theory - 0.05 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_5() -> Outcome {
    let b = builtin("section5", &BTreeMap::new()).unwrap();
    let constants = b.constants.clone().unwrap();
    let mut parts = Vec::new();
    let mut ok = true;
    for kind in [
        AssumptionKind::LocalLipschitz,
        AssumptionKind::Monotone,
        AssumptionKind::Khasminskii,
        AssumptionKind::JumpKhasminskii,
        AssumptionKind::JumpMonotone,
    ] {
        let r = check_assumption(kind, &b.model, &constants, 10.0, 100_000, 5).map_err(|e| e.to_string())?;
        ok &= r.violations == 0;
        parts.push(format!("{} {}", kind.label(), r.violations));
    }
    let mut no_gap = constants.clone();
    no_gap.u = None;
    let r = check_assumption(AssumptionKind::Monotone, &b.model, &no_gap, 1e9, 100_000, 5).map_err(|e| e.to_string())?;
    let again = assumption_margin(AssumptionKind::Monotone, &b.model, &no_gap, &r.witness).map_err(|e| e.to_string())?;
    let witnessed = r.violations > 0 && again < 0.0 && again == r.worst_margin;
    ok &= witnessed;
    let detail = format!(
        "violations at radius 10: {}; U≡0 at radius 1e9: {} violations, witness margin {:.4e} (re-evaluated {:.4e})",
        parts.join(", "),
        r.violations,
        r.worst_margin,
        again
    );
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_6() -> Outcome {
    let m = section5(1.0, 10.0);
    let trunc = cubic_trunc(Regime::TruncateFG);
    let setup = MomentSetup {
        delta: 2f64.powi(-4),
        horizon: 1.0,
        q: 2.0,
        paths: 200,
        seed: 66,
    };
    let em = moment_estimate(&m, None, SchemeKind::PlainEm, &setup).map_err(|e| e.to_string())?;
    let tem = moment_estimate(&m, Some(&trunc), SchemeKind::TruncatedFg, &setup).map_err(|e| e.to_string())?;
    let detail = format!(
        "plain EM overflow fraction {:.3}; truncated overflow fraction {:.3}, sup E|X|² = {:.4}",
        em.overflow_fraction, tem.overflow_fraction, tem.estimate
    );
    if em.overflow_fraction > 0.5 && tem.overflow_fraction == 0.0 && tem.estimate.is_finite() {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_7() -> Outcome {
    let seg = InitialSegment::holder(vec![1.0], 0.5, 0.5, vec![1.0]).unwrap();
    let (m, _) = superlinear_scalar(0.25, seg).unwrap();
    let delta = 2f64.powi(-6);
    let base = 2f64.powi(-9);
    let step = StepSize::from_delta(0.25, delta, 1.0).unwrap();
    let mut mismatches = 0usize;
    let mut checked = 0usize;
    for i in 0..100u64 {
        let kind = [SchemeKind::TruncatedFg, SchemeKind::TruncatedFgh, SchemeKind::PlainEm][(i % 3) as usize];
        let trunc = cubic_trunc(kind.regime().unwrap_or(Regime::TruncateFG));
        let noise = NoiseBundle::generate(NoiseKey::new(77, i), 1.0, base, 1, m.jump_intensity()).unwrap();
        let incr = noise.aggregate(delta).unwrap();
        let path = integrate_increments(kind, &m, Some(&trunc), &step, &incr).map_err(|e| e.to_string())?;
        for k in path.indices() {
            let t = path.time(k);
            let state = path.state(k);
            let pc = path.interp_pc(t).map_err(|e| e.to_string())?;
            let same_pc = pc.iter().zip(state).all(|(a, b)| a.to_bits() == b.to_bits());
            let same_cont = if k >= 0 {
                let c = interp_continuous(&path, &m, Some(&trunc), &noise, t).map_err(|e| e.to_string())?;
                c.iter().zip(state).all(|(a, b)| a.to_bits() == b.to_bits())
            } else {
                true
            };
            if !(same_pc && same_cont) {
                mismatches += 1;
            }
            checked += 1;
        }
    }
    let detail = format!("{mismatches} bit mismatches over {checked} grid points of 100 paths");
    if mismatches == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_8() -> Outcome {
    let m = section5(0.25, 1.0);
    let trunc = cubic_trunc(Regime::TruncateFG);
    let mut rng = ChaCha8Rng::seed_from_u64(0xC8);
    let mut ok = true;
    let mut parts = Vec::new();
    for level in [6, 8, 10] {
        let delta = 2f64.powi(-level);
        let refine = 8usize;
        let base = delta / refine as f64;
        let cells = (1.0 / base) as usize;
        let times: Vec<f64> = (0..10)
            .map(|_| loop {
                let j = rng.random_range(1..cells);
                if j % refine != 0 {
                    break j as f64 * base;
                }
            })
            .collect();
        let setup = MomentSetup {
            delta,
            horizon: 1.0,
            q: 2.0,
            paths: 2000,
            seed: 88,
        };
        let gaps = interpolation_gap(&m, Some(&trunc), SchemeKind::TruncatedFg, &setup, base, &times)
            .map_err(|e| e.to_string())?;
        let alpha = trunc.alpha(delta).map_err(|e| e.to_string())?;
        let bound = 10.0 * (alpha * alpha * delta + delta);
        let worst = gaps.iter().map(|g| g.mean).fold(0.0, f64::max);
        ok &= worst <= bound;
        parts.push(format!("Δ=2^-{level}: max {worst:.3e} ≤ {bound:.3e}"));
    }
    let detail = parts.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_9() -> Outcome {
    let dt = 2f64.powi(-10);
    let lambda = 0.2;
    let mut dn = Vec::new();
    let mut db = Vec::new();
    for i in 0..1000u64 {
        let b = NoiseBundle::generate(NoiseKey::new(99, i), 1.0, dt, 1, lambda).unwrap();
        dn.extend(b.dn().iter().map(|&c| c as f64));
        db.extend_from_slice(b.db());
    }
    let n = dn.len() as f64;
    let mu = lambda * dt;
    let mean_n = linalg::pairwise_sum(&dn) / n;
    let dev: Vec<f64> = dn.iter().map(|c| (c - mean_n) * (c - mean_n)).collect();
    let var_n = linalg::pairwise_sum(&dev) / (n - 1.0);
    let sq: Vec<f64> = db.iter().map(|b| b * b).collect();
    let var_b = linalg::pairwise_sum(&sq) / n;
    let cross: Vec<f64> = dn.iter().zip(&db).map(|(c, b)| (c - mean_n) * b).collect();
    let corr = linalg::pairwise_sum(&cross) / n / (var_n * var_b).sqrt();

    // Poisson: Var(ΔN) = μ, central fourth moment μ(1 + 3μ); Brownian: Var(ΔB²) = 2Δ²
    let se_mean = (mu / n).sqrt();
    let se_var = ((mu + 2.0 * mu * mu) / n).sqrt();
    let se_b = (2.0f64).sqrt() * dt / n.sqrt();
    let se_corr = 1.0 / n.sqrt();
    let z = [
        (mean_n - mu) / se_mean,
        (var_n - mu) / se_var,
        (var_b - dt) / se_b,
        corr / se_corr,
    ];
    let detail = format!(
        "{} cells: z(mean ΔN) {:.2}, z(var ΔN) {:.2}, z(var ΔB) {:.2}, z(corr) {:.2}",
        dn.len(),
        z[0],
        z[1],
        z[2],
        z[3]
    );
    if dn.len() >= 1_000_000 && z[0].abs() <= 3.0 && z[1].abs() <= 3.0 && z[2].abs() <= 3.0 && z[3].abs() <= 4.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_10() -> Outcome {
    let src = r#"{
  "experiment": "converge",
  "model": "gjd",
  "params": {"a": 0.05, "b": 0.2, "c": -0.1, "lambda": 1.0, "x0": 1.0},
  "scheme": "em",
  "levels": [4, 5, 6, 7, 8, 9],
  "T": 1.0,
  "p": 2.0,
  "paths": 2000,
  "seed": 2024
}"#;
    let resolved = resolve(parse_config(src).map_err(|e| e.to_string())?, src).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut csvs = Vec::new();
    for threads in [1, 3, 8] {
        let out = dir.path().join(format!("t{threads}"));
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run(&resolved, &out)).map_err(|e| e.to_string())?;
        csvs.push(std::fs::read(out.join("results.csv")).map_err(|e| e.to_string())?);
    }
    let again = dir.path().join("again");
    run(&resolved, &again).map_err(|e| e.to_string())?;
    csvs.push(std::fs::read(again.join("results.csv")).map_err(|e| e.to_string())?);
    let identical = csvs.windows(2).all(|w| w[0] == w[1]);
    let detail = format!("results.csv with 1, 3, 8 threads and a rerun: identical = {identical} ({} bytes)", csvs[0].len());
    // the experiment must also match the library call it wraps
    let m = geometric_jump_diffusion(GjdParams::default()).unwrap();
    let est = estimate_errors(&m, None, SchemeKind::PlainEm, &gjd_setup()).map_err(|e| e.to_string())?;
    let first_row = String::from_utf8_lossy(&csvs[0]).lines().nth(1).unwrap_or("").to_string();
    let expected = format!("{},{},{},{}", est.deltas[0], est.errors[0], est.stderrs[0], est.paths);
    if identical && first_row == expected {
        Ok(detail)
    } else {
        Err(format!("{detail}; first row `{first_row}` vs `{expected}`"))
    }
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("truncation properties", criterion_1),
        ("oracle convergence (gjd, p=2)", criterion_2),
        ("super-linear model convergence (FG, p=2)", criterion_3),
        ("L^p rate probe (FGH, p=1)", criterion_4),
        ("assumption checker", criterion_5),
        ("divergence demo", criterion_6),
        ("interpolant identity", criterion_7),
        ("interpolation gap bound", criterion_8),
        ("noise statistics", criterion_9),
        ("determinism across thread counts", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
