use rand::Rng;

use super::config::*;
use super::{Check, Outcome, Row};
use crate::cascade::{enriched_variational, parisi_functional, parisi_functional_with_error, QuadratureSpec};
use crate::cone::SymMatrix;
use crate::error::Result;
use crate::io::{load_path, MatrixRepr, ModelSpec};
use crate::optimize::{
    minimize_ladder, minimize_parisi, remove_correction_hopf, remove_correction_hopflax, MinimizeOptions,
};
use crate::simulate::{
    ass_difference, corrected_free_energy, free_energy_txy, guerra_curve, hj_residual, perturbed_gibbs_stats,
    ConfigSpace, GuerraOptions, PerturbationDraw, PerturbationSpec, Verdict,
};
use crate::{substream, Estimate};

struct Sink<'a> {
    command: &'static str,
    seed: u64,
    out: &'a mut Outcome,
}

impl Sink<'_> {
    fn row(&mut self, quantity: &str, params: String, e: Estimate) {
        self.out.rows.push(Row {
            command: self.command.to_string(),
            quantity: quantity.to_string(),
            params,
            mean: e.mean,
            stderr: e.stderr,
            reps: e.reps,
            seed: self.seed,
        });
    }

    fn exact(&mut self, quantity: &str, params: String, v: f64) {
        self.row(quantity, params, Estimate::exact(v));
    }

    fn check(&mut self, description: String, passed: bool) {
        self.out.checks.push(Check {
            command: self.command.to_string(),
            description,
            passed,
        });
    }
}

fn matrix(m: &Option<MatrixRepr>, dim: usize) -> Result<SymMatrix> {
    m.as_ref().map_or(Ok(SymMatrix::zeros(dim)), |r| r.to_sym(dim))
}

fn quad(q: &Option<QuadratureSpec>, dim: usize) -> QuadratureSpec {
    q.unwrap_or_else(|| QuadratureSpec::default_for(dim))
}

pub(super) fn run(c: &Command, model: &ModelSpec, out: &mut Outcome) -> Result<()> {
    let mut c = c.clone();
    let seed = c.seed_mut().expect("seeds are resolved before running");
    let mut sink = Sink {
        command: c.name(),
        seed,
        out,
    };
    let (m, p1) = (&model.xi, &model.measure);
    let d = m.dim();
    match &c {
        Command::ParisiEval(c) => {
            let path = load_path(&c.path)?;
            let (v, err) = parisi_functional_with_error(m, p1, &path, &matrix(&c.tilt, d)?, &quad(&c.quadrature, d))?;
            let reps = match c.quadrature {
                Some(QuadratureSpec::MonteCarlo { samples, .. }) => samples,
                _ => 0,
            };
            sink.row(
                "parisi_functional",
                format!("k={}", path.k()),
                Estimate {
                    mean: v,
                    stderr: err,
                    reps,
                },
            );
        }
        Command::Minimize(c) => {
            let opts = MinimizeOptions { seed, ..c.options };
            let results = minimize_ladder(
                m,
                p1,
                &c.k.to_vec(),
                &matrix(&c.tilt, d)?,
                &quad(&c.quadrature, d),
                &opts,
            )?;
            for r in results {
                let p = format!("k={}", r.path.k());
                sink.exact("parisi_min", p.clone(), r.value);
                sink.exact("hull_distance", p, r.hull_distance);
            }
        }
        Command::RemoveCorrection(c) => {
            let mut opts = c.options;
            opts.inner.seed = seed;
            let q = quad(&c.quadrature, d);
            let p = format!("k={}", opts.k);
            let hl = match c.form {
                RemovalForm::Hopf => None,
                _ => Some(remove_correction_hopflax(m, p1, &q, &opts)?.value),
            };
            let hopf = match c.form {
                RemovalForm::HopfLax => None,
                _ => Some(remove_correction_hopf(m, p1, &q, &opts)?.value),
            };
            if let Some(v) = hl {
                sink.exact("hopf_lax", p.clone(), v);
            }
            if let Some(v) = hopf {
                sink.exact("hopf", p.clone(), v);
            }
            if let (Some(a), Some(b)) = (hl, hopf) {
                sink.exact("hopf_lax_minus_hopf", p, a - b);
            }
        }
        Command::McFreeEnergy(c) => {
            let x = matrix(&c.x, d)?;
            for n in c.n.to_vec() {
                let cs = ConfigSpace::new(p1, n)?;
                let e = free_energy_txy(m, &cs, c.t, &x, c.reps, seed)?;
                sink.row("free_energy", format!("N={n};t={}", c.t), e);
            }
        }
        Command::GuerraCheck(c) => {
            let q = quad(&c.quadrature, d);
            let path = match &c.path {
                Some(p) => load_path(p)?,
                None => {
                    let opts = MinimizeOptions {
                        seed,
                        ..Default::default()
                    };
                    minimize_parisi(m, p1, c.k, &SymMatrix::zeros(d), &q, &opts)?.path
                }
            };
            let parisi = parisi_functional(m, p1, &path, &SymMatrix::zeros(d), &q)?;
            sink.exact("parisi_value", format!("k={}", path.k()), parisi);
            let opts = GuerraOptions { branching: c.branching };
            for n in c.n.to_vec() {
                let cs = ConfigSpace::new(p1, n)?;
                let curve = guerra_curve(m, &cs, &path, &c.r_grid, c.reps, seed, &opts)?;
                for pt in &curve.points {
                    sink.row(
                        "phi",
                        format!("N={n};r={}", pt.r),
                        Estimate {
                            mean: pt.mean,
                            stderr: pt.stderr,
                            reps: c.reps,
                        },
                    );
                }
                for (w, inc) in c.r_grid.windows(2).zip(&curve.increments) {
                    sink.row("phi_increment", format!("N={n};r={}..{}", w[0], w[1]), *inc);
                }
                if curve.truncation_warning {
                    sink.exact("truncation_warning", format!("N={n}"), 1.0);
                }
                let f = corrected_free_energy(m, &cs, c.reps, substream(seed, 1).random())?;
                sink.row("free_energy", format!("N={n}"), f);
                if c.required {
                    sink.check(
                        format!("N={n} phi nonincreasing within 3 stderr"),
                        curve.is_nonincreasing(3.0),
                    );
                    sink.check(
                        format!("N={n} F_N <= P(pi) + 3 stderr"),
                        f.mean <= parisi + 3.0 * f.stderr,
                    );
                }
            }
        }
        Command::PerturbationStats(c) => {
            let spec = PerturbationSpec::with_cap(d, c.cap, c.exponent);
            for n in c.n.to_vec() {
                let cs = ConfigSpace::new(p1, n)?;
                let s = perturbed_gibbs_stats(m, &cs, &spec, &c.deltas, c.x_draws, c.reps, c.n_replicas, seed)?;
                sink.row("concentration", format!("N={n}"), s.concentration);
                for (i, e) in s.deltas.iter().enumerate() {
                    sink.row("delta", format!("N={n};spec={}", i + 1), *e);
                }
            }
        }
        Command::AssCheck(c) => {
            let spec = PerturbationSpec::with_cap(d, c.cap, c.exponent);
            let draw = if c.perturbed {
                PerturbationDraw::sample(&spec, &mut substream(seed, u64::MAX))
            } else {
                PerturbationDraw::zeros(&spec)
            };
            for n in c.n.to_vec() {
                let cs = ConfigSpace::new(p1, n)?;
                let cs1 = ConfigSpace::new(p1, n + 1)?;
                let r = ass_difference(m, p1, &cs, &cs1, &spec, &draw, c.reps, seed)?;
                let p = format!("N={n};perturbed={}", c.perturbed);
                sink.row("lhs", p.clone(), r.lhs);
                sink.row("rhs", p.clone(), r.rhs);
                sink.row(
                    "gap",
                    p,
                    Estimate {
                        mean: r.gap,
                        stderr: r.stderr,
                        reps: c.reps,
                    },
                );
            }
        }
        Command::HjResidual(c) => {
            for n in c.n.to_vec() {
                let cs = ConfigSpace::new(p1, n)?;
                for (i, pt) in c.points.iter().enumerate() {
                    let x = matrix(&pt.x, d)?;
                    let r = hj_residual(m, &cs, pt.t, &x, c.fd_step, c.reps, seed)?;
                    let verdict = match r.verdict {
                        Verdict::Pass => "pass",
                        Verdict::Fail => "fail",
                        Verdict::Inconclusive => "inconclusive",
                    };
                    let p = format!("N={n};point={};t={};verdict={verdict}", i + 1, pt.t);
                    sink.row(
                        "residual",
                        p.clone(),
                        Estimate {
                            mean: r.residual,
                            stderr: r.combined_error,
                            reps: r.reps,
                        },
                    );
                    sink.row(
                        "band",
                        p,
                        Estimate {
                            mean: r.band,
                            stderr: 0.0,
                            reps: r.reps,
                        },
                    );
                    if c.required {
                        sink.check(
                            format!("N={n} point {} residual not below -3 errors", i + 1),
                            r.verdict != Verdict::Fail,
                        );
                    }
                }
            }
        }
        Command::Enriched(c) => {
            let mu = load_path(&c.mu)?;
            let opts = MinimizeOptions { seed, ..c.options };
            let r = enriched_variational(m, p1, c.t, &mu, c.k, &quad(&c.quadrature, d), &opts)?;
            sink.exact("enriched", format!("t={};k={}", c.t, c.k), r.value);
        }
    }
    Ok(())
}
