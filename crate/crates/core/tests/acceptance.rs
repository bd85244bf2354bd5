//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits nonzero if any fails.

mod common;

use std::process::Command as Proc;
use std::time::Instant;

use rand::Rng;
use vecspin::cascade::{gaussian_linear_recursion, parisi_functional};
use vecspin::model::ConjugateOptions;
use vecspin::optimize::{
    minimize_parisi, remove_correction_hopf, remove_correction_hopflax, MinimizeOptions, RemovalOptions,
};
use vecspin::simulate::{
    ass_difference, corrected_free_energy, guerra_curve, hj_residual, perturbed_gibbs_stats, ConfigSpace,
    GuerraOptions, PerturbationDraw, PerturbationSpec,
};
use vecspin::{ModelXi, ParisiPath, QuadratureSpec, SpinMeasure, SymMatrix};

use common::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn gh(n: usize) -> QuadratureSpec {
    QuadratureSpec::GaussHermite { nodes_per_dim: n }
}

fn quad_for(dim: usize) -> QuadratureSpec {
    if dim == 1 {
        gh(40)
    } else {
        gh(20)
    }
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// 1. Gaussian-linear surrogate against its closed form.
fn cascade_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let models = [sk(1.0), mixed_two_dim()];
    for (mi, m) in models.iter().enumerate() {
        let mut r = rng(100 + mi as u64);
        for k in 1..=4 {
            for _ in 0..50 {
                let path = random_path(&mut r, k, m.dim());
                let got = gaussian_linear_recursion(m, &path, &gh(40)).map_err(|e| e.to_string())?;
                let bp = path.breakpoints();
                let vals = path.values();
                let mut expect = 0.0;
                let mut prev = 0.0;
                for l in 0..k {
                    let t = theta(m, &vals[l]);
                    expect += 0.5 * bp[l] * (t - prev);
                    prev = t;
                }
                worst = worst.max((got - expect).abs());
            }
        }
    }
    verdict(
        worst <= 1e-6,
        format!("max |recursion - closed form| = {worst:.2e} over 400 paths"),
    )
}

/// 2. Replica-symmetric minimum against the grid / fixed-point oracle, and
///    the functional at fixed `q` against its one-dimensional integral.
fn rs_closed_form() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for beta in [0.1, 0.3, 0.5] {
        let (_, oracle) = rs_ising_min(beta);
        let r = minimize_parisi(
            &sk(beta),
            &SpinMeasure::ising(),
            1,
            &SymMatrix::zeros(1),
            &gh(40),
            &MinimizeOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        let err = (r.value - oracle).abs();
        worst = worst.max(err);
        // The functional itself, away from the minimizer.
        for q in [0.1, 0.3, 0.6] {
            let path = ParisiPath::replica_symmetric(SymMatrix::scalar(q)).unwrap();
            let v = parisi_functional(&sk(beta), &SpinMeasure::ising(), &path, &SymMatrix::zeros(1), &gh(40))
                .map_err(|e| e.to_string())?;
            worst = worst.max((v - rs_ising(beta, q)).abs());
        }
        detail.push(format!("beta={beta}: {:.6} vs {:.6}", r.value, oracle));
    }
    verdict(worst <= 1e-3, format!("{} (max err {worst:.1e})", detail.join(", ")))
}

/// 3. `F_N <= P(pi*) + 3 stderr` at the optimizer's path.
fn guerra_bound() -> Outcome {
    let (m2, p2) = two_atom(0.7);
    let cases: [(&str, ModelXi, SpinMeasure); 2] = [("ising", sk(0.5), SpinMeasure::ising()), ("two-atom", m2, p2)];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, m, p1) in &cases {
        let q = quad_for(m.dim());
        let opt = minimize_parisi(m, p1, 1, &SymMatrix::zeros(m.dim()), &q, &MinimizeOptions::default())
            .map_err(|e| e.to_string())?;
        for n in [6, 8, 10] {
            let cs = ConfigSpace::new(p1, n).map_err(|e| e.to_string())?;
            let f = corrected_free_energy(m, &cs, 2000, 31 + n as u64).map_err(|e| e.to_string())?;
            let pass = f.mean <= opt.value + 3.0 * f.stderr;
            ok &= pass;
            detail.push(format!("{name} N={n}: {:.4}<={:.4}", f.mean, opt.value));
        }
    }
    verdict(ok, detail.join(", "))
}

/// 4. `phi(r)` nonincreasing on a six-point grid.
fn guerra_monotone() -> Outcome {
    let grid = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    let (m2, p2) = two_atom(0.7);
    let q2 = SymMatrix::from_row_major(2, &[0.5, 0.3, 0.3, 0.4]).unwrap();
    let cases = [
        ("ising", sk(0.8), SpinMeasure::ising(), SymMatrix::scalar(0.5)),
        ("two-atom", m2, p2, q2),
    ];
    let mut ok = true;
    let mut worst = f64::NEG_INFINITY;
    for (i, (_, m, p1, q)) in cases.iter().enumerate() {
        let path = ParisiPath::replica_symmetric(q.clone()).unwrap();
        let cs = ConfigSpace::new(p1, 6).map_err(|e| e.to_string())?;
        let c = guerra_curve(m, &cs, &path, &grid, 2000, 40 + i as u64, &GuerraOptions::default())
            .map_err(|e| e.to_string())?;
        ok &= c.is_nonincreasing(3.0);
        for inc in &c.increments {
            worst = worst.max(inc.mean / inc.stderr.max(1e-300));
        }
    }
    verdict(ok, format!("largest increment / stderr = {worst:.2} (allowed 3)"))
}

/// 5. Hopf-Lax and Hopf agree; for Ising both equal the corrected minimum
///    plus `beta^2 / 2`.
fn removal_consistency() -> Outcome {
    let beta: f64 = 0.5;
    let (m2, p2) = two_atom(0.7);
    let cases = [("ising", sk(beta), SpinMeasure::ising()), ("two-atom", m2, p2)];
    let opts = RemovalOptions::default();
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, m, p1) in &cases {
        // Eight nodes per dimension reproduce the twenty-node values to 1e-8
        // here at a quarter of the cost.
        let q = if m.dim() == 1 { gh(40) } else { gh(8) };
        let hl = remove_correction_hopflax(m, p1, &q, &opts).map_err(|e| e.to_string())?;
        let hopf = remove_correction_hopf(m, p1, &q, &opts).map_err(|e| e.to_string())?;
        let gap = (hl.value - hopf.value).abs();
        ok &= gap <= 1e-3;
        detail.push(format!("{name}: hopf-lax {:.5} hopf {:.5}", hl.value, hopf.value));
        if *name == "ising" {
            let min = minimize_parisi(m, p1, opts.k, &SymMatrix::zeros(1), &q, &MinimizeOptions::default())
                .map_err(|e| e.to_string())?;
            let target = min.value + beta * beta / 2.0;
            let err = (hl.value - target).abs().max((hopf.value - target).abs());
            ok &= err <= 1e-3;
            detail.push(format!("corrected + beta^2/2 = {target:.5}"));
        }
    }
    verdict(ok, detail.join(", "))
}

/// 6. `xi*(grad xi(x)) = theta(x)` on random PSD `x`.
fn conjugate_duality() -> Outcome {
    let (m2, _) = two_atom(0.7);
    let models = [sk(0.9), m2, mixed_two_dim()];
    let mut worst: f64 = 0.0;
    for (i, m) in models.iter().enumerate() {
        let mut r = rng(600 + i as u64);
        for _ in 0..100 {
            let x = random_psd(&mut r, m.dim(), 0.6);
            let c = m
                .conjugate(&m.grad(&x), &ConjugateOptions::default())
                .map_err(|e| e.to_string())?;
            worst = worst.max((c.value - theta(m, &x)).abs());
        }
    }
    verdict(
        worst <= 1e-6,
        format!("max |xi*(grad xi) - theta| = {worst:.2e} over 300 points"),
    )
}

/// 7. Hamilton-Jacobi residual band.
fn hj_band() -> Outcome {
    let (m2, p2) = two_atom(0.7);
    let cases = [("ising", sk(0.6), SpinMeasure::ising(), 6), ("two-atom", m2, p2, 5)];
    let mut ok = true;
    let mut detail = Vec::new();
    for (ci, (name, m, p1, n)) in cases.iter().enumerate() {
        let cs = ConfigSpace::new(p1, *n).map_err(|e| e.to_string())?;
        let mut r = rng(700 + ci as u64);
        let mut worst = f64::NEG_INFINITY;
        for i in 0..5 {
            let t = r.random_range(0.2..1.0);
            let mut e = vec![0.0; m.dim() * m.dim()];
            for a in 0..m.dim() {
                for b in a..m.dim() {
                    let v = r.random_range(-0.3..0.3);
                    e[a * m.dim() + b] = v;
                    e[b * m.dim() + a] = v;
                }
            }
            let x = SymMatrix::from_row_major(m.dim(), &e).unwrap();
            let res = hj_residual(m, &cs, t, &x, 1e-3, 1000, 70 + i).map_err(|e| e.to_string())?;
            let tol = 3.0 * res.combined_error;
            ok &= res.residual >= -tol;
            if *name == "ising" {
                ok &= res.residual <= tol;
            }
            worst = worst.max(-res.residual / res.combined_error.max(1e-300));
        }
        detail.push(format!("{name}: min residual / error = {:.2}", -worst));
    }
    verdict(ok, detail.join(", "))
}

/// 8. Cavity identity at `N = 6` and the gap trend from 4 to 8.
fn ass_check() -> Outcome {
    let m = sk(0.4);
    let p1 = SpinMeasure::ising();
    let spec = PerturbationSpec::new(1);
    let zero = PerturbationDraw::zeros(&spec);
    let mut gaps = Vec::new();
    for n in [4, 6, 8] {
        let cs = ConfigSpace::new(&p1, n).map_err(|e| e.to_string())?;
        let cs1 = ConfigSpace::new(&p1, n + 1).map_err(|e| e.to_string())?;
        let r = ass_difference(&m, &p1, &cs, &cs1, &spec, &zero, 2000, 80 + n as u64).map_err(|e| e.to_string())?;
        gaps.push(r);
    }
    let six = &gaps[1];
    let at_six = six.gap.abs() <= 3.0 * six.stderr + 0.1;
    let (g4, g8) = (&gaps[0], &gaps[2]);
    let trend = g8.gap.abs() <= g4.gap.abs() + 3.0 * (g4.stderr.powi(2) + g8.stderr.powi(2)).sqrt();
    // The perturbed version at one draw, reported only.
    let cs = ConfigSpace::new(&p1, 6).map_err(|e| e.to_string())?;
    let cs1 = ConfigSpace::new(&p1, 7).map_err(|e| e.to_string())?;
    let draw = PerturbationDraw::sample(&spec, &mut rng(88));
    let pert = ass_difference(&m, &p1, &cs, &cs1, &spec, &draw, 500, 89).map_err(|e| e.to_string())?;
    verdict(
        at_six && trend,
        format!(
            "gap N=4 {:.4}+-{:.4}, N=6 {:.4}+-{:.4}, N=8 {:.4}+-{:.4}; perturbed N=6 gap {:.3}+-{:.3} (reported)",
            g4.gap, g4.stderr, six.gap, six.stderr, g8.gap, g8.stderr, pert.gap, pert.stderr
        ),
    )
}

/// 9. Self-overlap concentration decreases in `N`; zero for Ising.
fn concentration_trend() -> Outcome {
    let (m, p1) = two_atom(0.7);
    let spec = PerturbationSpec::new(2);
    let mut stats = Vec::new();
    for n in [4, 6, 8, 10] {
        let cs = ConfigSpace::new(&p1, n).map_err(|e| e.to_string())?;
        let s = perturbed_gibbs_stats(&m, &cs, &spec, &[], 4, 200, 0, 90).map_err(|e| e.to_string())?;
        stats.push((n, s.concentration));
    }
    let (a, b) = (stats[0].1, stats[3].1);
    let decreasing = b.mean <= a.mean + 3.0 * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt() && b.mean < a.mean;
    let ising_cs = ConfigSpace::new(&SpinMeasure::ising(), 8).map_err(|e| e.to_string())?;
    let ising = perturbed_gibbs_stats(&sk(0.7), &ising_cs, &PerturbationSpec::new(1), &[], 2, 50, 0, 91)
        .map_err(|e| e.to_string())?;
    let zero = ising.concentration.mean.abs() < 1e-12;
    let trail: Vec<String> = stats
        .iter()
        .map(|(n, e)| format!("N={n} {:.4}+-{:.4}", e.mean, e.stderr))
        .collect();
    verdict(
        decreasing && zero,
        format!("{}; ising {:.1e}", trail.join(", "), ising.concentration.mean),
    )
}

/// 10. Byte-identical CSV across two runs of every stochastic command.
fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let model = dir.path().join("model.toml");
    std::fs::write(
        &model,
        "dim = 2\n[[terms]]\np = 2\ncoef = [[0.49, 0.245], [0.245, 0.49]]\n\
         [[atoms]]\ntau = [1.0, 0.0]\nweight = 0.5\n[[atoms]]\ntau = [0.6, 0.8]\nweight = 0.5\n",
    )
    .map_err(|e| e.to_string())?;
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        r#"model = "model.toml"
seed = 99

[[commands]]
command = "minimize"
k = 1
quadrature = { mode = "monte-carlo", samples = 32, seed = 5 }
options = { multistarts = 2 }

[[commands]]
command = "mc-free-energy"
n = [3, 4]
reps = 200

[[commands]]
command = "guerra-check"
n = 4
reps = 100
k = 1

[[commands]]
command = "perturbation-stats"
n = 3
x_draws = 2
reps = 20
n_replicas = 10
deltas = [{ factors = [[0, 1, 0, 1]], n = 2, h = [1, 1, 1] }]

[[commands]]
command = "ass-check"
n = 3
reps = 100
perturbed = true

[[commands]]
command = "hj-residual"
n = 4
reps = 50
points = [{ t = 0.4, x = [[0.1, 0.0], [0.0, -0.1]] }]
"#,
    )
    .map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Proc::new(env!("CARGO_BIN_EXE_vecspin"))
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("run {run} exited with {:?}", status.status.code()));
        }
        outputs.push(std::fs::read(out.join("results.csv")).map_err(|e| e.to_string())?);
    }
    let rows = String::from_utf8_lossy(&outputs[0]).lines().count() - 1;
    verdict(
        outputs[0] == outputs[1],
        format!("{rows} rows, identical = {}", outputs[0] == outputs[1]),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("cascade oracle", cascade_oracle),
        ("RS closed form", rs_closed_form),
        ("Guerra finite-N bound", guerra_bound),
        ("Guerra monotonicity", guerra_monotone),
        ("correction removal consistency", removal_consistency),
        ("conjugate duality", conjugate_duality),
        ("HJ residual band", hj_band),
        ("ASS cavity check", ass_check),
        ("concentration trend", concentration_trend),
        ("determinism", determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let start = Instant::now();
        let res = f();
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(d) => println!("criterion {:>2} {name}: PASS ({d}) [{secs:.1}s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({d}) [{secs:.1}s]", i + 1)
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
