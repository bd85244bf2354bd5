//! Statistical checks of the finite-N machinery against hand-built oracles.

mod common;

use nalgebra::DMatrix;
use vecspin::simulate::{corrected_free_energy, ConfigSpace, FieldKind, GaussianField, TensorHamiltonian};
use vecspin::{SpinMeasure, SymMatrix};

use common::*;

/// `N xi(sigma sigma'^T / N)` computed entrywise from the spins.
fn oracle_kernel(m: &vecspin::ModelXi, cs: &ConfigSpace) -> DMatrix<f64> {
    let n = cs.n() as f64;
    DMatrix::from_fn(cs.len(), cs.len(), |a, b| {
        let g = cs.spins(a) * cs.spins(b).transpose() / n;
        let d = m.dim();
        let total: f64 = m
            .terms()
            .iter()
            .map(|t| {
                let mut s = 0.0;
                for k in 0..d {
                    for l in 0..d {
                        s += t.coef.get(k, l) * g[(k, l)].powi(t.p as i32);
                    }
                }
                s
            })
            .sum();
        n * total
    })
}

fn empirical_cov(samples: &[Vec<f64>]) -> DMatrix<f64> {
    let len = samples[0].len();
    let count = samples.len() as f64;
    DMatrix::from_fn(len, len, |a, b| {
        samples.iter().map(|s| s[a] * s[b]).sum::<f64>() / count
    })
}

fn assert_cov_close(emp: &DMatrix<f64>, exact: &DMatrix<f64>, count: usize) {
    for a in 0..exact.nrows() {
        for b in 0..exact.ncols() {
            // Var(X Y) = K_aa K_bb + K_ab^2 for centered Gaussians.
            let sd = ((exact[(a, a)] * exact[(b, b)] + exact[(a, b)].powi(2)) / count as f64).sqrt();
            assert!(
                (emp[(a, b)] - exact[(a, b)]).abs() <= 5.0 * sd + 1e-12,
                "entry ({a}, {b}): {} vs {}",
                emp[(a, b)],
                exact[(a, b)]
            );
        }
    }
}

#[test]
fn covariance_factor_reproduces_the_kernel() {
    let (m, p1) = two_atom(0.8);
    let cs = ConfigSpace::new(&p1, 3).unwrap();
    let field = GaussianField::new(&m, &cs, FieldKind::Hamiltonian).unwrap();
    let mut r = rng(1);
    let count = 6000;
    let samples: Vec<Vec<f64>> = (0..count).map(|_| field.sample(&mut r)).collect();
    assert_cov_close(&empirical_cov(&samples), &oracle_kernel(&m, &cs), count);
}

#[test]
fn explicit_tensor_reproduces_the_kernel() {
    let m = mixed_two_dim();
    let p1 = SpinMeasure::uniform(2, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, -0.8]]).unwrap();
    let cs = ConfigSpace::new(&p1, 2).unwrap();
    let t = TensorHamiltonian::new(&m, 2.0).unwrap();
    let mut r = rng(2);
    let count = 6000;
    let samples: Vec<Vec<f64>> = (0..count).map(|_| t.sample(&cs, &mut r)).collect();
    assert_cov_close(&empirical_cov(&samples), &oracle_kernel(&m, &cs), count);
}

/// At `N = 2` with Ising spins, `H(s) = H(-s)` and the two remaining values
/// are independent with variance `2 beta^2`, so
/// `F_2 = (E log((e^X + e^Y) / 2) - beta^2) / 2`.
#[test]
fn two_spin_free_energy_matches_the_double_integral() {
    let beta: f64 = 0.9;
    let sd = (2.0 * beta * beta).sqrt();
    let inner = |x: f64| {
        gauss_expect(|y| {
            let (a, b) = (sd * x, sd * y);
            let mx = a.max(b);
            mx + ((a - mx).exp() + (b - mx).exp()).ln() - std::f64::consts::LN_2
        })
    };
    let exact = 0.5 * (gauss_expect(inner) - beta * beta);
    let cs = ConfigSpace::new(&SpinMeasure::ising(), 2).unwrap();
    let f = corrected_free_energy(&sk(beta), &cs, 20000, 3).unwrap();
    assert!(
        (f.mean - exact).abs() <= 4.0 * f.stderr,
        "{} +- {} vs {exact}",
        f.mean,
        f.stderr
    );
}

#[test]
fn self_overlap_is_the_atom_average() {
    let (_, p1) = two_atom(1.0);
    let cs = ConfigSpace::new(&p1, 4).unwrap();
    for c in 0..cs.len() {
        let r = cs.self_overlap(c);
        let mut acc = SymMatrix::zeros(2);
        for i in 0..4 {
            acc = &acc + &p1.outer(cs.atom_index(c, i)).scale(0.25);
        }
        assert!((&r - &acc).norm() < 1e-14);
    }
}
