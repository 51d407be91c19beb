use itertools::Itertools;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use torsionlab::metric_complex::{metric_variation_term, torsion_scalar, MetricCochainComplex};
use torsionlab::{CMat, Error};

fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMat {
    DMatrix::from_fn(r, c, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn random_metric(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    let a = random_mat(rng, n, n);
    &a * a.adjoint() + CMat::identity(n, n) * Complex64::new(0.5, 0.0)
}

fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    random_mat(rng, n, n).qr().q()
}

/// Acyclic complex with ranks r_p of the differentials, conjugated by random
/// invertible basis changes.
fn random_acyclic(rng: &mut ChaCha8Rng, ranks: &[usize]) -> (Vec<usize>, Vec<CMat>) {
    let mut dims = vec![ranks[0]];
    for w in ranks.windows(2) {
        dims.push(w[0] + w[1]);
    }
    dims.push(*ranks.last().unwrap());
    let g: Vec<CMat> = dims
        .iter()
        .map(|&n| random_mat(rng, n, n) + CMat::identity(n, n) * Complex64::new(2.0, 0.0))
        .collect();
    let mut d = Vec::new();
    for p in 0..ranks.len() {
        let r = ranks[p];
        let before = if p == 0 { 0 } else { ranks[p - 1] };
        let mut e = CMat::zeros(dims[p + 1], dims[p]);
        for i in 0..r {
            e[(i, before + i)] = Complex64::new(1.0, 0.0);
        }
        let inv = g[p].clone().try_inverse().unwrap();
        d.push(&g[p + 1] * e * inv);
    }
    (dims, d)
}

fn minor_det(m: &CMat, rows: &[usize], cols: &[usize]) -> Complex64 {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])]).determinant()
}

/// Product of the nonzero squared singular values of `m` (rank `r`) as the
/// sum of squared r x r minors.
fn cauchy_binet(m: &CMat, r: usize) -> f64 {
    let mut s = 0.0;
    for rows in (0..m.nrows()).combinations(r) {
        for cols in (0..m.ncols()).combinations(r) {
            s += minor_det(m, &rows, &cols).norm_sqr();
        }
    }
    s
}

fn oracle_torsion(d: &[CMat], h: &[CMat], ranks: &[usize]) -> f64 {
    let l: Vec<CMat> = h.iter().map(|hp| hp.clone().cholesky().unwrap().l()).collect();
    let mut acc = 0.0;
    for p in 0..d.len() {
        let linv = l[p].adjoint().try_inverse().unwrap();
        let dp = l[p + 1].adjoint() * &d[p] * linv;
        let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * cauchy_binet(&dp, ranks[p]).ln();
    }
    0.5 * acc
}

#[test]
fn torsion_matches_minor_oracle_on_random_complexes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let shapes: [&[usize]; 5] = [&[1], &[2, 1], &[1, 2, 1], &[2, 3, 1], &[1, 1, 2, 1]];
    for trial in 0..20 {
        let ranks = shapes[trial % shapes.len()];
        let (dims, d) = random_acyclic(&mut rng, ranks);
        assert!(dims.iter().sum::<usize>() <= 12);
        let h: Vec<CMat> = dims.iter().map(|&n| random_metric(&mut rng, n)).collect();
        let c = MetricCochainComplex::new(dims, d.clone(), h.clone()).unwrap();
        let t = torsion_scalar(&c).unwrap();
        let o = oracle_torsion(&d, &h, ranks);
        assert!((t - o).abs() < 1e-8, "trial {trial}: {t} vs {o}");
    }
}

#[test]
fn torsion_is_invariant_under_unitary_change_of_basis() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let (dims, d) = random_acyclic(&mut rng, &[2, 2, 1]);
        let h: Vec<CMat> = dims.iter().map(|&n| random_metric(&mut rng, n)).collect();
        let t0 = torsion_scalar(&MetricCochainComplex::new(dims.clone(), d.clone(), h.clone()).unwrap()).unwrap();
        let u: Vec<CMat> = dims.iter().map(|&n| random_unitary(&mut rng, n)).collect();
        let d2: Vec<CMat> = (0..d.len()).map(|p| &u[p + 1] * &d[p] * u[p].adjoint()).collect();
        let h2: Vec<CMat> = (0..h.len()).map(|p| &u[p] * &h[p] * u[p].adjoint()).collect();
        let t1 = torsion_scalar(&MetricCochainComplex::new(dims, d2, h2).unwrap()).unwrap();
        assert!((t0 - t1).abs() < 1e-9, "{t0} vs {t1}");
    }
}

#[test]
fn metric_variation_is_a_cocycle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dims = [3, 4, 2];
    for _ in 0..20 {
        let hs: Vec<Vec<CMat>> = (0..3).map(|_| dims.iter().map(|&n| random_metric(&mut rng, n)).collect()).collect();
        let a = metric_variation_term(&hs[0], &hs[1]).unwrap();
        let b = metric_variation_term(&hs[1], &hs[2]).unwrap();
        let c = metric_variation_term(&hs[0], &hs[2]).unwrap();
        assert!((a + b - c).abs() < 1e-10);
    }
}

#[test]
fn non_complex_is_rejected() {
    let d0 = CMat::from_element(1, 1, Complex64::new(1.0, 0.0));
    let d1 = CMat::from_element(1, 1, Complex64::new(1.0, 0.0));
    let err = MetricCochainComplex::with_identity_metrics(vec![1, 1, 1], vec![d0, d1]).unwrap_err();
    assert!(matches!(err, Error::NotAComplex { degree: 0, .. }));
}

#[test]
fn two_slot_sequence_example() {
    // 0 -> C -> C -> 0 with map 1 and Grams (2L, L): torsion -1/2 log 2.
    for l in [0.3, 1.0, 7.0] {
        let d = vec![CMat::from_element(1, 1, Complex64::new(1.0, 0.0))];
        let h = vec![CMat::from_element(1, 1, Complex64::new(2.0 * l, 0.0)), CMat::from_element(1, 1, Complex64::new(l, 0.0))];
        let t = torsion_scalar(&MetricCochainComplex::new(vec![1, 1], d, h).unwrap()).unwrap();
        assert!((t + 0.5 * std::f64::consts::LN_2).abs() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn uniform_metric_scaling_leaves_torsion_unchanged(seed in any::<u64>(), s in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (dims, d) = random_acyclic(&mut rng, &[1, 2, 1]);
        let h: Vec<CMat> = dims.iter().map(|&n| random_metric(&mut rng, n)).collect();
        let scaled: Vec<CMat> = h.iter().map(|m| m * Complex64::new(s.exp(), 0.0)).collect();
        let t0 = torsion_scalar(&MetricCochainComplex::new(dims.clone(), d.clone(), h).unwrap()).unwrap();
        let t1 = torsion_scalar(&MetricCochainComplex::new(dims, d, scaled).unwrap()).unwrap();
        prop_assert!((t0 - t1).abs() < 1e-9);
    }
}
