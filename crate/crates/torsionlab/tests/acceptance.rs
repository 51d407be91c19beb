//! One line per acceptance criterion; exits nonzero if any fails.

use std::f64::consts::{LN_2, PI};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use torsionlab::adiabatic::*;
use torsionlab::gluing::*;
use torsionlab::heat_parametrix::{cancellation_integral, parametrix_error_scan, psi1, AxialModel, Component, Side};
use torsionlab::model_spectra::*;
use torsionlab::simplicial::{reidemeister_torsion, FlatBundle, Triangulation};

const K: usize = 10_000;

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: String) -> Outcome {
    Outcome { ok, detail }
}

fn zeta_backend() -> Outcome {
    let ld = |s: SpectrumFamily| zeta_log_det(&s, 0, K).unwrap().value;
    let trivial = ld(circle_spectrum(2.0 * PI, 0.0).unwrap());
    let e1 = (trivial - 2.0 * (2.0 * PI).ln()).abs();
    let q1 = ld(circle_spectrum(1.0, 0.25).unwrap());
    let q2 = ld(circle_spectrum(2.0 * PI, 0.25).unwrap());
    let e2 = (q1 - LN_2).abs().max((q2 - LN_2).abs());
    let e3 = (q1 - q2).abs();
    let dir = ld(interval_spectrum(1.0, Boundary::Relative).unwrap());
    let e4 = (dir - LN_2).abs();
    outcome(
        e1 < 1e-8 && e2 < 1e-8 && e3 < 1e-9 && e4 < 1e-8,
        format!("trivial circle err {e1:.1e}, twisted err {e2:.1e}, L-spread {e3:.1e}, Dirichlet err {e4:.1e}"),
    )
}

fn cheeger_muller() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut subdiv: f64 = 0.0;
    for alpha in [0.25, 1.0 / 3.0, 0.5] {
        worst = worst.max(cheeger_muller_check(alpha, 1.0, 6, K).unwrap().difference.abs());
        let rt = |k: usize| {
            let t = Triangulation::circle(k, 1.0).unwrap();
            reidemeister_torsion(&t, &FlatBundle::with_phases(&t, &[alpha])).unwrap()
        };
        subdiv = subdiv.max((rt(3) - rt(12)).abs());
    }
    outcome(worst < 1e-7 && subdiv < 1e-10, format!("max |analytic - Reidemeister| {worst:.1e}, k=3 vs k=12 {subdiv:.1e}"))
}

fn circle_gluing() -> Outcome {
    let (mut left, mut tf, mut res) = (0.0f64, 0.0f64, 0.0f64);
    for l in [0.5, 1.0, 2.0] {
        let g = run_circle_gluing(l, K).unwrap();
        left = left.max(g.left_side().abs());
        tf = tf.max((g.t_f + LN_2).abs());
        res = res.max(g.residual.abs());
    }
    outcome(
        left < 1e-10 && tf < 1e-6 && res < 1e-6,
        format!("left side {left:.1e}, |T_f + log 2| {tf:.1e}, residual {res:.1e}"),
    )
}

fn torus_gluing() -> Outcome {
    let (mut res, mut abs) = (0.0f64, 0.0f64);
    for (alpha, a1, a2) in [(0.3, 1.0, 1.5), (0.5, 1.0, 1.0)] {
        let g = run_torus_gluing(1.0, alpha, a1, a2, K).unwrap();
        res = res.max(g.residual.abs());
        abs = abs.max((g.log_t_abs - (2.0 * (PI * alpha).sin()).ln()).abs());
    }
    let vals: Vec<f64> = [0.5, 1.0, 3.0].iter().map(|&a1| run_torus_gluing(1.0, 0.3, a1, 1.5, K).unwrap().log_t_abs).collect();
    let spread = vals.iter().map(|v| (v - vals[0]).abs()).fold(0.0, f64::max);
    outcome(
        res < 1e-5 && abs < 1e-6 && spread < 1e-8,
        format!("residual {res:.1e}, logT_abs err {abs:.1e}, a1 spread {spread:.1e}"),
    )
}

fn adiabatic_invariance() -> Outcome {
    let s = adiabatic_invariance_sweep(SweepModel::Circle { l1: 1.0, l2: 1.0 }, &[0.0, 1.0, 2.0, 4.0], K).unwrap();
    outcome(
        s.max_deviation < 1e-6 && s.max_variation_residual < 1e-8,
        format!("deviation {:.1e}, metric variation identity {:.1e}", s.max_deviation, s.max_variation_residual),
    )
}

fn spectral_gap() -> Outcome {
    let model = GapModel { ly: 1.0, alpha: 0.5, mesh: 1.0 / 40.0, bc: AxialBc::Closed };
    let reps = gap_scan(&model, &[2.0, 4.0, 8.0], false).unwrap();
    let zeros: usize = reps.iter().map(|g| g.zero_modes).sum();
    let window: usize = reps.iter().map(|g| g.window_count).sum();
    let lo = reps.iter().map(|g| g.min_positive).fold(f64::INFINITY, f64::min);
    let hi = reps.iter().map(|g| g.min_positive).fold(0.0, f64::max);
    let spread = (hi - lo) / lo;
    let control = GapModel { alpha: 0.0, ..model };
    let reps = gap_scan(&control, &[2.0, 4.0, 8.0], true).unwrap();
    let rs: Vec<f64> = reps.iter().map(|g| g.r).collect();
    let gaps: Vec<f64> = reps.iter().map(|g| g.min_positive).collect();
    let (slope, _) = power_fit(&rs, &gaps);
    outcome(
        zeros == 0 && window == 0 && spread < 0.05 && (-2.2..=-1.8).contains(&slope),
        format!("zero modes {zeros}, window {window}, gap spread {:.2}%, control exponent {slope:.3}", 100.0 * spread),
    )
}

fn mode_decay() -> Outcome {
    let mut mu: Vec<f64> = (-20i32..20).map(|k| (2.0 * PI * (k as f64 + 0.5)).powi(2)).collect();
    mu.sort_by(|a, b| a.partial_cmp(b).unwrap());
    mu.truncate(10);
    let delta = mu[0];
    let xs: Vec<f64> = (0..=60).map(|i| -0.75 + 1.5 * i as f64 / 60.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failures = 0;
    let mut min_margin = f64::INFINITY;
    for r in [8.0, 16.0] {
        for _ in 0..100 {
            let lambda = rng.random_range(0.0..0.75 * delta);
            let coeffs = (0..10).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
            let e = ModeExpansion::new(mu.clone(), coeffs, lambda).unwrap().normalized(r);
            let rep = cross_section_decay_check(&e, r, &xs).unwrap();
            if !rep.holds() {
                failures += 1;
            }
            min_margin = min_margin.min(rep.margin());
        }
    }
    let single = ModeExpansion::new(vec![delta], vec![[1.0, 0.5, -0.3, 0.2]], 0.5 * delta).unwrap().normalized(8.0);
    let margin = cross_section_decay_check(&single, 8.0, &xs).unwrap().margin();
    outcome(
        failures == 0 && margin > 0.0,
        format!("{failures}/200 random expansions violate the chain (min margin {min_margin:.3}), single-mode margin {margin:.3}"),
    )
}

fn quasi_mode() -> Outcome {
    let mu = PI * PI;
    let s = QuasiMode::single(mu);
    let rs = [8.0, 16.0, 32.0];
    let logs: Vec<f64> = rs.iter().map(|&r| quasi_mode_rayleigh(&s, r).unwrap().ln()).collect();
    let (rate, _) = torsionlab::heat_parametrix::linear_fit(&rs.iter().copied().zip(logs).collect::<Vec<_>>());
    let expect = -mu.sqrt() / 2.0;
    let rel = ((rate - expect) / expect).abs();
    let lattice = [4.0, 8.0, 16.0]
        .iter()
        .map(|&r| {
            let c = quasi_mode_rayleigh(&s, r).unwrap();
            (lattice_quasi_mode_rayleigh(mu, r, 1.0 / 80.0).unwrap() / c - 1.0).abs()
        })
        .fold(0.0, f64::max);
    outcome(
        rel < 0.2 && lattice < 0.1,
        format!("rate {rate:.3} vs {expect:.3} ({:.1}%), lattice deviation {:.2}%", 100.0 * rel, 100.0 * lattice),
    )
}

fn parametrix() -> Outcome {
    let pts = [(0.3, 0.3), (0.5, 0.8), (0.1, 0.45), (0.9, 0.2)];
    let mut residual: f64 = 0.0;
    let mut diag = 0.0f64;
    let mut support_ok = true;
    for side in [Side::Full, Side::Z1, Side::Z2] {
        for component in [Component::Function, Component::Dx] {
            let p: Vec<(f64, f64)> = match side {
                Side::Z1 => pts.iter().map(|&(x, y)| (-x, -y)).collect(),
                Side::Full => pts.iter().map(|&(x, y)| (x, -y)).collect(),
                Side::Z2 => pts.to_vec(),
            };
            let rep = parametrix_error_scan(side, component, 1.0, &[2.0, 4.0], &[0.5, 2.0], &p, 64).unwrap();
            residual = residual.max(rep.max_residual);
            let m = AxialModel::new(4.0, 1.0, side, component).unwrap();
            let (lo, hi) = m.domain();
            let bands = m.error_support();
            for i in 0..=120 {
                let x = lo + (hi - lo) * i as f64 / 120.0;
                diag = diag.max(m.error_term(0.7, x, x).abs());
                let inside = bands.iter().any(|&(a, b)| x >= a && x <= b);
                for j in 0..=40 {
                    let y = lo + (hi - lo) * j as f64 / 40.0;
                    if (!inside || (x - y).abs() < 4.0 / 7.0) && m.error_term(0.7, x, y) != 0.0 {
                        support_ok = false;
                    }
                }
            }
        }
    }
    let slope = parametrix_error_scan(Side::Full, Component::Function, 1.0, &[4.0, 6.0, 8.0], &[1.0, 2.0, 4.0], &[(0.3, 0.3)], 32)
        .unwrap()
        .slope;
    let mut cancel: f64 = 0.0;
    for r in [2.0, 5.0, 9.0] {
        for t in [0.1, 1.0, 10.0] {
            for y in [[1.0].as_slice(), [3.0, 3.0].as_slice(), [2.0, 4.0, 2.0].as_slice()] {
                cancel = cancel.max(cancellation_integral(r, t, psi1(r), y, 48).abs());
            }
        }
    }
    outcome(
        residual <= 1e-6 && diag == 0.0 && support_ok && slope < 0.0 && cancel < 1e-12,
        format!(
            "Duhamel residual {residual:.1e}, diagonal error {diag:e}, support {}, slope {slope:.4}, cancellation {cancel:.1e}",
            if support_ok { "ok" } else { "violated" }
        ),
    )
}

fn time_split() -> Outcome {
    let m = ModelFibration { ly: 1.0, alpha: 0.5, a1: 1.0, a2: 1.0 };
    let rows: Vec<TimeSplit> = [2.0, 4.0, 8.0].iter().map(|&r| time_split_contributions(&m, r, 0.5, K).unwrap()).collect();
    let small: Vec<f64> = rows.iter().map(|s| s.small.abs()).collect();
    let large: Vec<f64> = rows.iter().map(|s| s.large.abs()).collect();
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    let ok = decreasing(&small) && decreasing(&large) && small[2] < 1e-3 && large[2] < 1e-3;
    let show = |v: &[f64]| v.iter().map(|x| format!("{x:.1e}")).collect::<Vec<_>>().join(", ");
    outcome(ok, format!("|S| = [{}], |L| = [{}] over R = 2, 4, 8", show(&small), show(&large)))
}

type Criterion = (&'static str, fn() -> Outcome, u64);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("zeta-regularized determinants", zeta_backend, 4),
        ("Cheeger-Muller desk check", cheeger_muller, 1),
        ("circle gluing", circle_gluing, 5),
        ("torus gluing", torus_gluing, 30),
        ("adiabatic invariance", adiabatic_invariance, 10),
        ("spectral gap", spectral_gap, 60),
        ("mode decay", mode_decay, 5),
        ("quasi-mode bound", quasi_mode, 30),
        ("parametrix suite", parametrix, 60),
        ("time-split limits", time_split, 60),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let in_time = took <= Duration::from_secs(*budget);
        let ok = out.ok && in_time;
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} ({name}): {} [{:.2}s of {budget}s]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            out.detail,
            took.as_secs_f64()
        );
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
