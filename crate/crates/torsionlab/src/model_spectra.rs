//! Explicit spectra of flat model fibers, their zeta-regularized
//! determinants, analytic torsion and the weighted heat supertraces.
//!
//! A family is a set of eigenvalues `offset + sum_i (a_i (k_i + alpha_i))^2`
//! over a product of index ranges. Products of circles and intervals stay in
//! this form, which is what makes the theta-function continuation cheap.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::pairwise_sum;
use crate::quadrature::{integrate, Tolerance};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
pub const DEFAULT_TRUNCATION: usize = 10_000;
const INT_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IndexRange {
    Full,
    From(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub a: f64,
    pub alpha: f64,
    pub range: IndexRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub mult: usize,
    pub offset: f64,
    /// No axes means a single exceptional eigenvalue `offset`.
    pub axes: Vec<Axis>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    Closed,
    Absolute,
    Relative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFamily {
    pub boundary: Boundary,
    /// Families per form degree.
    pub degrees: Vec<Vec<Family>>,
}

fn is_integer(x: f64) -> bool {
    (x - x.round()).abs() < INT_TOL
}

impl Axis {
    /// Number of indices giving a zero factor (0 or 1).
    fn zero_modes(&self) -> usize {
        match self.range {
            IndexRange::Full => usize::from(is_integer(self.alpha)),
            IndexRange::From(k0) => usize::from(is_integer(self.alpha) && -self.alpha.round() >= k0 as f64),
        }
    }

    fn values(&self, k: usize) -> Vec<f64> {
        match self.range {
            IndexRange::Full => {
                let r = self.alpha - self.alpha.round();
                let mut v = vec![(self.a * r).powi(2)];
                for n in 1..=k {
                    v.push((self.a * (n as f64 + r)).powi(2));
                    v.push((self.a * (-(n as f64) + r)).powi(2));
                }
                v
            }
            IndexRange::From(k0) => (0..=k).map(|n| (self.a * ((k0 + n as u64) as f64 + self.alpha)).powi(2)).collect(),
        }
    }
}

impl Family {
    pub fn zero_modes(&self) -> usize {
        if self.offset != 0.0 {
            return 0;
        }
        self.mult * self.axes.iter().map(|a| a.zero_modes()).product::<usize>()
    }

    /// Eigenvalues with every index truncated at `k` steps from its start.
    pub fn enumerate(&self, k: usize) -> Vec<f64> {
        let mut out = vec![self.offset];
        for ax in &self.axes {
            let vals = ax.values(k);
            out = out.iter().flat_map(|x| vals.iter().map(move |v| x + v)).collect();
        }
        let mut full = Vec::with_capacity(out.len() * self.mult);
        for _ in 0..self.mult {
            full.extend_from_slice(&out);
        }
        full.sort_by(|a, b| a.partial_cmp(b).unwrap());
        full
    }
}

impl SpectrumFamily {
    pub fn degree(&self, p: usize) -> &[Family] {
        self.degrees.get(p).map_or(&[], |v| v.as_slice())
    }

    pub fn zero_modes(&self, p: usize) -> usize {
        self.degree(p).iter().map(|f| f.zero_modes()).sum()
    }

    /// Sorted eigenvalues of degree p, each index truncated at `k`.
    pub fn enumerate(&self, p: usize, k: usize) -> Vec<f64> {
        let mut v: Vec<f64> = self.degree(p).iter().flat_map(|f| f.enumerate(k)).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }
}

fn check_length(l: f64) -> Result<()> {
    if l > 0.0 && l.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("length must be positive, got {l}")))
    }
}

pub fn circle_spectrum(l: f64, alpha: f64) -> Result<SpectrumFamily> {
    check_length(l)?;
    let fam = Family { mult: 1, offset: 0.0, axes: vec![Axis { a: 2.0 * PI / l, alpha, range: IndexRange::Full }] };
    Ok(SpectrumFamily { boundary: Boundary::Closed, degrees: vec![vec![fam.clone()], vec![fam]] })
}

pub fn interval_spectrum(l: f64, bc: Boundary) -> Result<SpectrumFamily> {
    check_length(l)?;
    let fam = |k0| Family { mult: 1, offset: 0.0, axes: vec![Axis { a: PI / l, alpha: 0.0, range: IndexRange::From(k0) }] };
    let degrees = match bc {
        Boundary::Absolute => vec![vec![fam(0)], vec![fam(1)]],
        Boundary::Relative => vec![vec![fam(1)], vec![fam(0)]],
        Boundary::Closed => return Err(Error::Invalid("an interval needs absolute or relative conditions".into())),
    };
    Ok(SpectrumFamily { boundary: bc, degrees })
}

pub fn product_spectrum(y: &SpectrumFamily, axial: &SpectrumFamily) -> Result<SpectrumFamily> {
    let boundary = match (y.boundary, axial.boundary) {
        (Boundary::Closed, b) => b,
        (b, Boundary::Closed) => b,
        _ => return Err(Error::Unsupported("product of two manifolds with boundary".into())),
    };
    let n = y.degrees.len() + axial.degrees.len() - 1;
    let mut degrees = vec![Vec::new(); n];
    for (q, yq) in y.degrees.iter().enumerate() {
        for (r, ar) in axial.degrees.iter().enumerate() {
            for f in yq {
                for g in ar {
                    degrees[q + r].push(Family {
                        mult: f.mult * g.mult,
                        offset: f.offset + g.offset,
                        axes: f.axes.iter().chain(&g.axes).copied().collect(),
                    });
                }
            }
        }
    }
    Ok(SpectrumFamily { boundary, degrees })
}

/// Twisted circle of length `ly` times an interval of length `a`.
pub fn cylinder_spectrum(ly: f64, alpha: f64, a: f64, bc: Boundary) -> Result<SpectrumFamily> {
    product_spectrum(&circle_spectrum(ly, alpha)?, &interval_spectrum(a, bc)?)
}

/// Flat torus: circle of length `ly` with holonomy `alpha` times a trivial circle of length `lx`.
pub fn torus_spectrum(ly: f64, alpha: f64, lx: f64) -> Result<SpectrumFamily> {
    product_spectrum(&circle_spectrum(ly, alpha)?, &circle_spectrum(lx, 0.0)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaLogDet {
    /// `log det' = -zeta'(0)`.
    pub value: f64,
    pub truncation: usize,
    pub error: f64,
}

const BERNOULLI: [f64; 7] = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0, 7.0 / 6.0];

/// Derivative in s at s = 0 of the Hurwitz zeta function, by Euler–Maclaurin
/// after at most `n` explicit terms. From 12 terms on the remainder series is
/// below 1e-17 while `x log x - x` keeps losing digits, so the explicit count
/// is capped there.
pub fn hurwitz_zeta_prime_zero(beta: f64, n: usize) -> f64 {
    let n = n.clamp(1, 12);
    let logs: Vec<f64> = (0..n).map(|k| (k as f64 + beta).ln()).collect();
    let x = n as f64 + beta;
    let mut tail = x * x.ln() - x - 0.5 * x.ln();
    let mut xp = x;
    for (j, b) in BERNOULLI.iter().enumerate() {
        let j = (j + 1) as f64;
        tail += b / (2.0 * j * (2.0 * j - 1.0)) / xp;
        xp *= x * x;
    }
    -pairwise_sum(&logs) + tail
}

/// `zeta'(0)` of `sum (a (k + beta))^{-2s}` over k >= 0: `-2 log a (1/2 - beta) + 2 zeta_H'(0, beta)`.
fn one_axis_term(a: f64, beta: f64, n: usize) -> f64 {
    -2.0 * a.ln() * (0.5 - beta) + 2.0 * hurwitz_zeta_prime_zero(beta, n)
}

fn one_axis_zeta_prime(ax: &Axis, n: usize) -> Result<f64> {
    match ax.range {
        IndexRange::Full => {
            let r = ax.alpha - ax.alpha.floor();
            if is_integer(r) {
                Ok(2.0 * one_axis_term(ax.a, 1.0, n))
            } else {
                Ok(one_axis_term(ax.a, r, n) + one_axis_term(ax.a, 1.0 - r, n))
            }
        }
        IndexRange::From(k0) => {
            let beta = k0 as f64 + ax.alpha;
            if beta > INT_TOL {
                Ok(one_axis_term(ax.a, beta, n))
            } else if beta.abs() <= INT_TOL {
                Ok(one_axis_term(ax.a, 1.0, n))
            } else {
                Err(Error::Unsupported("half-line family with negative shifted index".into()))
            }
        }
    }
}

/// Theta function of one axis at time t: the sum, its t-derivative and the
/// split into a power part plus an exponentially small remainder.
#[derive(Debug, Clone, Copy)]
struct Theta {
    value: f64,
    deriv: f64,
    /// `value` minus the power part `u t^{-1/2} + v`; NaN without Poisson summation.
    rem: f64,
}

impl Axis {
    fn power_coefficients(&self) -> Option<(f64, f64)> {
        let u = PI.sqrt() / self.a;
        match self.range {
            IndexRange::Full => Some((u, 0.0)),
            IndexRange::From(0) if is_integer(self.alpha) && self.alpha.round() == 0.0 => Some((0.5 * u, 0.5)),
            IndexRange::From(1) if is_integer(self.alpha) && self.alpha.round() == 0.0 => Some((0.5 * u, -0.5)),
            _ => None,
        }
    }

    fn theta(&self, t: f64, k: usize) -> Result<Theta> {
        let power = self.power_coefficients();
        let a2t = self.a * self.a * t;
        if let (Some((u, v)), true) = (power, a2t < 1.0) {
            // Poisson form of the full-line sum, halved for the half-lines
            let half = if matches!(self.range, IndexRange::Full) { 1.0 } else { 0.5 };
            let b = PI * PI / (self.a * self.a);
            let c = PI.sqrt() / (self.a * t.sqrt());
            let mut rem = 0.0;
            let mut rem_d = 0.0;
            let mut m = 1usize;
            loop {
                let mf = m as f64;
                let e = (-b * mf * mf / t).exp();
                let cs = (2.0 * PI * mf * self.alpha).cos();
                rem += 2.0 * c * e * cs;
                rem_d += 2.0 * c * e * cs * (-0.5 / t + b * mf * mf / (t * t));
                if e < 1e-18 {
                    break;
                }
                if m >= k {
                    return Err(Error::Truncation { k, needed: 2 * m });
                }
                m += 1;
            }
            rem *= half;
            rem_d *= half;
            let p = u / t.sqrt() + v;
            let pd = -0.5 * u / (t * t.sqrt());
            return Ok(Theta { value: p + rem, deriv: pd + rem_d, rem });
        }
        let (value, deriv) = self.direct(t, k)?;
        let rem = match power {
            Some((u, v)) => value - u / t.sqrt() - v,
            None => f64::NAN,
        };
        Ok(Theta { value, deriv, rem })
    }

    fn direct(&self, t: f64, k: usize) -> Result<(f64, f64)> {
        let mut terms = Vec::new();
        let mut dterms = Vec::new();
        let mut push = |x: f64| {
            let x2 = self.a * self.a * x * x;
            let e = (-t * x2).exp();
            terms.push(e);
            dterms.push(-x2 * e);
            e
        };
        let (start, two_sided) = match self.range {
            IndexRange::Full => (self.alpha - self.alpha.round(), true),
            IndexRange::From(k0) => (k0 as f64 + self.alpha, false),
        };
        push(start);
        let mut n = 1usize;
        loop {
            let mut e = push(start + n as f64);
            if two_sided {
                e = e.max(push(start - n as f64));
            }
            if e < 1e-18 && (start + n as f64) > 0.0 {
                break;
            }
            if n >= k {
                if e > 1e-14 {
                    let needed = ((40.0 / t).sqrt() / self.a).ceil() as usize + 1;
                    return Err(Error::Truncation { k, needed });
                }
                break;
            }
            n += 1;
        }
        Ok((pairwise_sum(&terms), pairwise_sum(&dterms)))
    }
}

/// `zeta'(0)` of a two-axis family with zero offset, by a Mellin transform of
/// the theta product split at t = 1.
fn two_axis_zeta_prime(ax: &[Axis], k: usize) -> Result<(f64, f64)> {
    let (u1, v1) = ax[0].power_coefficients().ok_or_else(|| Error::Unsupported("axis without a theta expansion".into()))?;
    let (u2, v2) = ax[1].power_coefficients().ok_or_else(|| Error::Unsupported("axis without a theta expansion".into()))?;
    let n0 = (ax[0].zero_modes() * ax[1].zero_modes()) as f64;
    let t_split = 1.0;
    let tol = Tolerance { abs: 1e-14, rel: 1e-12, max_intervals: 4000 };

    // smallest positive eigenvalue bounds the large-time tail
    let lam_min = ax
        .iter()
        .map(|a| {
            let v = a.values(2);
            let mut pos: Vec<f64> = v.into_iter().filter(|&x| x > 1e-300).collect();
            pos.sort_by(|x, y| x.partial_cmp(y).unwrap());
            pos[0]
        })
        .fold(f64::INFINITY, f64::min);
    let u_hi = ((60.0 / lam_min) / t_split).ln().max(1.0);
    let err = std::cell::Cell::new(None);
    let large = |u: f64| {
        let t = t_split * u.exp();
        match (ax[0].theta(t, k), ax[1].theta(t, k)) {
            (Ok(a), Ok(b)) => a.value * b.value - n0,
            (Err(e), _) | (_, Err(e)) => {
                err.set(Some(e));
                0.0
            }
        }
    };
    let (i_large, e_large) = integrate(large, 0.0, u_hi, &[], tol)?;

    let a_max = ax.iter().map(|a| a.a).fold(0.0, f64::max);
    let t_min = PI * PI / (50.0 * a_max * a_max);
    let u_lo = (t_split / t_min).ln().max(1.0);
    let small = |u: f64| {
        let t = t_split * (-u).exp();
        match (ax[0].theta(t, k), ax[1].theta(t, k)) {
            (Ok(a), Ok(b)) => {
                let p1 = u1 / t.sqrt() + v1;
                let p2 = u2 / t.sqrt() + v2;
                p1 * b.rem + a.rem * p2 + a.rem * b.rem
            }
            (Err(e), _) | (_, Err(e)) => {
                err.set(Some(e));
                0.0
            }
        }
    };
    let (i_small, e_small) = integrate(small, 0.0, u_lo, &[], tol)?;
    if let Some(e) = err.take() {
        return Err(e);
    }
    let c_m1 = u1 * u2;
    let c_mh = u1 * v2 + v1 * u2;
    let c_0 = v1 * v2 - n0;
    let value = i_large + i_small - c_m1 / t_split - 2.0 * c_mh / t_split.sqrt() + c_0 * (EULER_GAMMA + t_split.ln());
    Ok((value, e_large + e_small))
}

fn family_log_det(f: &Family, k: usize) -> Result<f64> {
    let m = f.mult as f64;
    match f.axes.len() {
        0 => Ok(if f.offset > 0.0 { m * f.offset.ln() } else { 0.0 }),
        _ if f.offset != 0.0 => Err(Error::Unsupported("shifted families with continuous indices".into())),
        1 => Ok(-m * one_axis_zeta_prime(&f.axes[0], k)?),
        2 => Ok(-m * two_axis_zeta_prime(&f.axes, k)?.0),
        n => Err(Error::Unsupported(format!("{n}-index families"))),
    }
}

/// `log det'` of the degree-p Laplacian. The error estimate compares
/// truncations `k` and `2k` and adds the quadrature error.
pub fn zeta_log_det(s: &SpectrumFamily, p: usize, k: usize) -> Result<ZetaLogDet> {
    if k == 0 {
        return Err(Error::Invalid("truncation must be positive".into()));
    }
    let mut value = 0.0;
    let mut error = 0.0;
    for f in s.degree(p) {
        let v = family_log_det(f, k)?;
        let v2 = family_log_det(f, 2 * k)?;
        let quad = if f.axes.len() == 2 && f.offset == 0.0 {
            f.mult as f64 * two_axis_zeta_prime(&f.axes, k)?.1
        } else {
            0.0
        };
        if !(v.is_finite() && v2.is_finite()) {
            return Err(Error::Continuation(format!("non-finite log-determinant in degree {p}")));
        }
        value += v;
        error += (v - v2).abs() + quad + 1e-14 * v.abs().max(1.0);
    }
    Ok(ZetaLogDet { value, truncation: k, error })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorsionValue {
    pub value: f64,
    pub error: f64,
}

/// `log T = -1/2 sum_p (-1)^p p log det' Delta_p`.
pub fn analytic_torsion_log(s: &SpectrumFamily, k: usize) -> Result<TorsionValue> {
    let mut value = 0.0;
    let mut error = 0.0;
    for p in 1..s.degrees.len() {
        let ld = zeta_log_det(s, p, k)?;
        let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
        value += sign * p as f64 * ld.value;
        error += p as f64 * ld.error;
    }
    Ok(TorsionValue { value: -0.5 * value, error: 0.5 * error })
}

fn family_heat(f: &Family, t: f64, k: usize) -> Result<(f64, f64)> {
    let m = f.mult as f64;
    let shift = (-t * f.offset).exp();
    let mut val = 1.0;
    let mut der = 0.0;
    for ax in &f.axes {
        let th = ax.theta(t, k)?;
        der = der * th.value + val * th.deriv;
        val *= th.value;
    }
    Ok((m * shift * val, m * shift * (der - f.offset * val)))
}

/// `sum_p (-1)^p tr exp(-t Delta_p)`.
pub fn heat_supertrace(s: &SpectrumFamily, t: f64, k: usize) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Invalid("heat time must be positive".into()));
    }
    let mut acc = 0.0;
    for (p, fams) in s.degrees.iter().enumerate() {
        let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
        for f in fams {
            acc += sign * family_heat(f, t, k)?.0;
        }
    }
    Ok(acc)
}

/// `sum_p (-1)^p (p/2) sum_lambda (1 - t lambda / 2) exp(-t lambda / 4)`.
pub fn weighted_heat_supertrace(s: &SpectrumFamily, t: f64, k: usize) -> Result<f64> {
    Ok(weighted_parts(s, t, k)?.0)
}

/// The weighted supertrace and the sum of the absolute values of its family terms.
fn weighted_parts(s: &SpectrumFamily, t: f64, k: usize) -> Result<(f64, f64)> {
    if !(t > 0.0) {
        return Err(Error::Invalid("heat time must be positive".into()));
    }
    let tau = 0.25 * t;
    let mut acc = 0.0;
    let mut size = 0.0;
    for (p, fams) in s.degrees.iter().enumerate().skip(1) {
        let w = if p % 2 == 0 { 0.5 } else { -0.5 } * p as f64;
        for f in fams {
            let (th, dth) = family_heat(f, tau, k)?;
            let term = w * (th + 2.0 * tau * dth);
            acc += term;
            size += term.abs();
        }
    }
    Ok((acc, size))
}

/// Torus model cut along two transverse circles: `Z_R` is the torus of axial
/// length `a1 + a2 + 2R`, `Z1` and `Z2` are the two cylinders with absolute
/// and relative conditions, each lengthened by R.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelFibration {
    pub ly: f64,
    pub alpha: f64,
    pub a1: f64,
    pub a2: f64,
}

impl ModelFibration {
    pub fn spectra(&self, r: f64) -> Result<[SpectrumFamily; 3]> {
        if !(r >= 0.0) {
            return Err(Error::Invalid("stretch parameter must be non-negative".into()));
        }
        Ok([
            torus_spectrum(self.ly, self.alpha, self.a1 + self.a2 + 2.0 * r)?,
            cylinder_spectrum(self.ly, self.alpha, self.a1 + r, Boundary::Absolute)?,
            cylinder_spectrum(self.ly, self.alpha, self.a2 + r, Boundary::Relative)?,
        ])
    }

    /// `f(Z_R) - f(Z1_R) - f(Z2_R)` for the weighted heat supertrace f.
    pub fn integrand(&self, r: f64, t: f64, k: usize) -> Result<f64> {
        let [z, z1, z2] = self.spectra(r)?;
        Ok(weighted_heat_supertrace(&z, t, k)? - weighted_heat_supertrace(&z1, t, k)? - weighted_heat_supertrace(&z2, t, k)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSplit {
    pub r: f64,
    pub split_time: f64,
    pub small: f64,
    pub large: f64,
    pub full: f64,
    pub error: f64,
}

/// Integrals of the integrand against dt/t below and above `t = R^(2 - eps)`.
pub fn time_split_contributions(m: &ModelFibration, r: f64, eps: f64, k: usize) -> Result<TimeSplit> {
    if !(eps > 0.0 && eps < 2.0) {
        return Err(Error::Invalid("split exponent must lie in (0, 2)".into()));
    }
    let [z, _, _] = m.spectra(r)?;
    let lam_min = z
        .degree(0)
        .iter()
        .flat_map(|f| f.enumerate(2))
        .filter(|&x| x > 1e-300)
        .fold(f64::INFINITY, f64::min);
    let t_lo: f64 = 1e-6;
    let t_hi = (400.0 / lam_min).max(10.0);
    let t_split = r.powf(2.0 - eps).clamp(t_lo, t_hi);
    // the three traces grow like 1/t and cancel; their size sets the noise floor
    let [z, z1, z2] = m.spectra(r)?;
    let scale = weighted_parts(&z, t_lo, k)?.1 + weighted_parts(&z1, t_lo, k)?.1 + weighted_parts(&z2, t_lo, k)?.1;
    let tol = Tolerance { abs: (100.0 * f64::EPSILON * scale).max(1e-13), rel: 1e-10, max_intervals: 2000 };
    let err = std::cell::Cell::new(None);
    let f = |u: f64| match m.integrand(r, u.exp(), k) {
        Ok(v) => v,
        Err(e) => {
            err.set(Some(e));
            0.0
        }
    };
    let (lo, split, hi) = (t_lo.ln(), t_split.ln(), t_hi.ln());
    let (small, e1) = if r > 0.0 { integrate(f, lo, split, &[], tol)? } else { (0.0, 0.0) };
    let (large, e2) = integrate(f, if r > 0.0 { split } else { lo }, hi, &[], tol)?;
    let (full, e3) = integrate(f, lo, hi, &[], tol)?;
    if let Some(e) = err.take() {
        return Err(e);
    }
    // roundoff of the cancelling traces, integrated over the log-t range
    let floor = 8.0 * f64::EPSILON * scale * (hi - lo);
    Ok(TimeSplit { r, split_time: if r > 0.0 { t_split } else { 0.0 }, small, large, full, error: e1 + e2 + e3 + floor })
}
