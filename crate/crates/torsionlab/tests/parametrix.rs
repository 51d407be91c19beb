use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use torsionlab::heat_parametrix::{
    cancellation_integral, e_dif, kernel_halfline, kernel_line, linear_fit, parametrix_error_scan, product_kernel,
    product_trace, psi1, AxialModel, Bc, Component, Kernel1D, PairKind, Side,
};
use torsionlab::quadrature::gl_integrate;

/// Order-16 Gauss–Legendre on panels of width 1/8.
fn panels<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let n = ((b - a) * 8.0).ceil() as usize;
    let h = (b - a) / n as f64;
    (0..n).map(|i| gl_integrate(&f, a + i as f64 * h, a + (i + 1) as f64 * h, 16)).sum()
}

fn kernels() -> Vec<(Kernel1D, f64, f64)> {
    vec![
        (Kernel1D::Line, -8.0, 8.0),
        (Kernel1D::HalfLine(Bc::Dirichlet), 0.0, 8.0),
        (Kernel1D::HalfLine(Bc::Neumann), 0.0, 8.0),
        (Kernel1D::Interval { len: 1.5, bc: Bc::Dirichlet }, 0.0, 1.5),
        (Kernel1D::Interval { len: 1.5, bc: Bc::Neumann }, 0.0, 1.5),
        (Kernel1D::Circle { len: 2.0 }, 0.0, 2.0),
    ]
}

#[test]
fn semigroup_for_every_kernel() {
    for (k, lo, hi) in kernels() {
        for &(t, s) in &[(0.3, 0.2), (0.1, 0.05), (0.5, 0.4)] {
            for &(u, v) in &[(0.4, 0.9), (0.1, 0.1), (1.2, 0.3)] {
                let lhs = k.eval(t + s, u, v).unwrap();
                let rhs = panels(|z| k.eval(t, u, z).unwrap() * k.eval(s, z, v).unwrap(), lo, hi);
                assert!((lhs - rhs).abs() < 1e-8, "{k:?} t={t} s={s}: {lhs} vs {rhs}");
            }
        }
    }
}

#[test]
fn kernels_are_symmetric() {
    for (k, lo, hi) in kernels() {
        let lo = lo.max(-2.0);
        let hi = hi.min(2.0);
        for i in 0..6 {
            for j in 0..6 {
                let u = lo + (hi - lo) * i as f64 / 5.0;
                let v = lo + (hi - lo) * j as f64 / 5.0;
                let a = k.eval(0.37, u, v).unwrap();
                let b = k.eval(0.37, v, u).unwrap();
                assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
            }
        }
    }
}

#[test]
fn boundary_conditions_at_the_cut() {
    let h = 1e-4;
    for &t in &[0.05, 0.3, 2.0] {
        for &v in &[0.2, 0.7, 1.5] {
            let d = Kernel1D::HalfLine(Bc::Dirichlet);
            assert_eq!(d.eval(t, 0.0, v).unwrap(), 0.0);
            let n = Kernel1D::HalfLine(Bc::Neumann);
            let k = |u: f64| n.eval(t, u, v).unwrap();
            let fd = (-3.0 * k(0.0) + 4.0 * k(h) - k(2.0 * h)) / (2.0 * h);
            assert!(fd.abs() < 1e-8, "t={t} v={v}: {fd}");
        }
    }
    let (one, dx) = kernel_halfline(0.3, 0.0, 0.5, PairKind::Absolute).unwrap();
    assert!(one > 0.0 && dx == 0.0);
    let (one, dx) = kernel_halfline(0.3, 0.0, 0.5, PairKind::Relative).unwrap();
    assert!(one == 0.0 && dx > 0.0);
}

#[test]
fn line_kernel_normalisation_and_values() {
    for &t in &[0.1, 1.0, 3.0] {
        let (d1, d2) = kernel_line(t, 0.4, 0.4).unwrap();
        assert_eq!(d1, d2);
        assert!((d1 - 1.0 / (4.0 * PI * t).sqrt()).abs() < 1e-15);
        let mass = panels(|v| kernel_line(t, 0.4, v).unwrap().0, -40.0, 40.0);
        assert!((mass - 1.0).abs() < 1e-10);
    }
    let direct = kernel_line(0.1, 0.0, 1.0).unwrap().0;
    let composed = panels(|z| kernel_line(0.05, 0.0, z).unwrap().0 * kernel_line(0.05, z, 1.0).unwrap().0, -8.0, 8.0);
    assert!((direct - (-2.5f64).exp() / (0.4 * PI).sqrt()).abs() < 1e-15);
    assert!((direct - composed).abs() < 1e-12);
}

#[test]
fn neumann_diagonal_far_from_the_cut() {
    let n = Kernel1D::HalfLine(Bc::Neumann);
    for &t in &[0.2, 0.5, 1.0] {
        for &u in &[1.5, 3.0, 5.0] {
            let diff = n.eval(t, u, u).unwrap() - 1.0 / (4.0 * PI * t).sqrt();
            assert!(diff >= 0.0 && diff <= (-u * u / t).exp());
        }
    }
}

#[test]
fn off_diagonal_gaussian_decay() {
    let models = [Kernel1D::Circle { len: 12.0 }, Kernel1D::Interval { len: 6.0, bc: Bc::Neumann }, Kernel1D::Line];
    let mut worst = f64::NEG_INFINITY;
    for k in models {
        for &t in &[0.25, 0.5, 1.0, 2.0] {
            for i in 0..=12 {
                for j in 0..=12 {
                    let (u, v) = (0.5 * i as f64, 0.5 * j as f64);
                    let d = match k {
                        Kernel1D::Circle { len } => (u - v).abs().min(len - (u - v).abs()),
                        _ => (u - v).abs(),
                    };
                    if d < 1.0 {
                        continue;
                    }
                    let val = k.eval(t, u, v).unwrap();
                    worst = worst.max(val.ln() + d * d / (4.0 * t) + 0.5 * (4.0 * PI * t).ln());
                }
            }
        }
    }
    // at most four images sit at the nearest distance (interval, both ends)
    assert!(worst < 4f64.ln() + 1e-9, "{worst}");
}

#[test]
fn one_sided_kernels_approach_the_full_one_away_from_the_cut() {
    let mut pts = Vec::new();
    for &t in &[0.5, 1.0, 2.0] {
        for &r in &[1.0, 2.0, 3.0] {
            let full = Kernel1D::Line.eval(t, -r, -r).unwrap();
            let (one, _) = kernel_halfline(t, r, r, PairKind::Absolute).unwrap();
            pts.push((r * r / t, (one - full).abs().ln()));
        }
    }
    let (slope, _) = linear_fit(&pts);
    assert!(slope < -0.5, "{slope}");
}

#[test]
fn product_kernel_trace_and_large_time() {
    let mu: Vec<f64> = (-30..=30).map(|k| (2.0 * PI * (k as f64 + 0.3)).powi(2)).collect();
    let ax = Kernel1D::Interval { len: 2.0, bc: Bc::Neumann };
    let t = 0.4;
    let tr = product_trace(&mu, &ax, t, 0.7).unwrap();
    let sum: f64 = (0..mu.len()).map(|k| product_kernel(&mu, &ax, t, (k, 0.7), (k, 0.7)).unwrap()).sum();
    assert!((tr - sum).abs() < 1e-14 * tr);
    assert_eq!(product_kernel(&mu, &ax, t, (0, 0.7), (1, 0.7)).unwrap(), 0.0);
    let smallest = mu.iter().cloned().fold(f64::INFINITY, f64::min);
    let lead = (-10.0 * smallest).exp() * ax.eval(10.0, 0.7, 0.7).unwrap();
    let big = product_trace(&mu, &ax, 10.0, 0.7).unwrap();
    assert!((big - lead).abs() < 1e-6 * lead);
    assert!(product_trace(&mu[29..32], &ax, 1e-3, 0.7).is_err());
}

fn lattice_heat(n: usize, len: f64, t: f64, ring_alpha: Option<f64>) -> DMatrix<Complex64> {
    let h = len / n as f64;
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = Complex64::new(2.0, 0.0);
        if i + 1 < n {
            m[(i, i + 1)] = Complex64::new(-1.0, 0.0);
            m[(i + 1, i)] = Complex64::new(-1.0, 0.0);
        }
    }
    match ring_alpha {
        // quasi-periodic: v_n = exp(2 pi i alpha) v_0
        Some(a) => {
            let z = Complex64::from_polar(1.0, 2.0 * PI * a);
            m[(n - 1, 0)] = -z;
            m[(0, n - 1)] = -z.conj();
        }
        None => {
            m[(0, 0)] = Complex64::new(1.0, 0.0);
            m[(n - 1, n - 1)] = Complex64::new(1.0, 0.0);
        }
    }
    (m * Complex64::new(-t / (h * h), 0.0)).exp() / Complex64::new(h, 0.0)
}

#[test]
fn product_kernel_matches_lattice_matrix_exponential() {
    // twisted circle of length 1 times a Neumann interval of length 1, on a 50 x 50 grid
    let (n, alpha, t) = (50, 0.3, 0.1);
    let h = 1.0 / n as f64;
    let ky = lattice_heat(n, 1.0, t, Some(alpha));
    let kx = lattice_heat(n, 1.0, t, None);
    let mu: Vec<(f64, f64)> = (-60..=60).map(|k| (k as f64 + alpha, (2.0 * PI * (k as f64 + alpha)).powi(2))).collect();
    let modes: Vec<f64> = mu.iter().map(|m| m.1).collect();
    let ax = Kernel1D::Interval { len: 1.0, bc: Bc::Neumann };
    let mut worst: f64 = 0.0;
    for &(i, j) in &[(10, 10), (10, 14), (3, 40), (25, 27)] {
        for &(a, b) in &[(20, 20), (5, 8), (0, 49), (30, 24)] {
            let lat = ky[(i, j)] * kx[(a, b)];
            let (y, y2) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            let (u, v) = ((a as f64 + 0.5) * h, (b as f64 + 0.5) * h);
            let mut cont = Complex64::new(0.0, 0.0);
            for (k, &(q, _)) in mu.iter().enumerate() {
                let phase = Complex64::from_polar(1.0, 2.0 * PI * q * (y - y2));
                cont += phase * product_kernel(&modes, &ax, t, (k, u), (k, v)).unwrap();
            }
            worst = worst.max((lat - cont).norm() / cont.norm().max(1.0));
        }
    }
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn duhamel_identity_on_both_sides() {
    let pts = [(0.3, 0.3), (0.5, 0.8), (0.1, 0.45), (0.9, 0.2), (0.6, 0.05)];
    for side in [Side::Full, Side::Z1, Side::Z2] {
        for component in [Component::Function, Component::Dx] {
            let p: Vec<(f64, f64)> = match side {
                Side::Z1 => pts.iter().map(|&(x, y)| (-x, -y)).collect(),
                Side::Full => pts.iter().map(|&(x, y)| (x, -y)).collect(),
                Side::Z2 => pts.to_vec(),
            };
            let rep = parametrix_error_scan(side, component, 1.0, &[2.0, 4.0], &[0.5, 2.0], &p, 64).unwrap();
            assert!(rep.max_residual <= 1e-6, "{side:?} {component:?}: {}", rep.max_residual);
        }
    }
}

#[test]
fn error_term_support_and_diagonal() {
    for side in [Side::Full, Side::Z1, Side::Z2] {
        for component in [Component::Function, Component::Dx] {
            for &r in &[2.0, 5.0] {
                let m = AxialModel::new(r, 1.0, side, component).unwrap();
                let (lo, hi) = m.domain();
                let bands = m.error_support();
                for i in 0..=200 {
                    let x = lo + (hi - lo) * i as f64 / 200.0;
                    assert_eq!(m.error_term(0.7, x, x), 0.0);
                    let inside = bands.iter().any(|&(a, b)| x >= a && x <= b);
                    for j in 0..=60 {
                        let y = lo + (hi - lo) * j as f64 / 60.0;
                        let c = m.error_term(0.7, x, y);
                        if !inside || (x - y).abs() < r / 7.0 {
                            assert_eq!(c, 0.0, "x={x} y={y}");
                        }
                    }
                }
                for &(a, b) in &bands {
                    assert!(a.abs() >= r / 7.0 - 1e-12 && b.abs() <= 6.0 * r / 7.0 + 1e-12);
                }
            }
        }
    }
}

#[test]
fn error_decays_in_r_squared_over_t() {
    let rep = parametrix_error_scan(Side::Full, Component::Function, 1.0, &[4.0, 6.0, 8.0], &[1.0, 2.0, 4.0], &[(0.3, 0.3)], 32)
        .unwrap();
    assert!(rep.slope < 0.0, "{}", rep.slope);
    for &t in &[1.0, 2.0, 4.0] {
        let sups: Vec<f64> = rep.sup_errors.iter().filter(|e| e.1 == t).map(|e| e.2).collect();
        assert!(sups.windows(2).all(|w| w[1] < w[0]), "t={t}: {sups:?}");
    }
}

#[test]
fn cancellation_is_exact_and_the_odd_control_is_not() {
    let traces = [[1.0].as_slice(), [3.0, 3.0].as_slice(), [2.0, 4.0, 2.0].as_slice()];
    for &r in &[2.0, 5.0, 9.0] {
        for &t in &[0.1, 1.0, 10.0] {
            for y in traces {
                let even = cancellation_integral(r, t, psi1(r), y, 48);
                assert!(even.abs() < 1e-12, "{even}");
                let other = cancellation_integral(r, t, |x: f64| (-x * x / r).exp(), y, 48);
                assert!(other.abs() < 1e-12);
            }
            let base = psi1(r);
            let odd = cancellation_integral(r, t, |x| base(x) + 0.3 * x / r * base(x), &[1.0], 48);
            assert!(odd.abs() > 1e-6, "{odd}");
        }
    }
    for &x in &[-2.0, -0.3, 0.2, 1.7] {
        let (a, b) = e_dif(0.6, x);
        assert!((a + b).abs() < 1e-15 && a != 0.0);
    }
}
