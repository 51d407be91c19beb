//! One-dimensional heat kernels along the stretched axis, the cutoff
//! parametrix built from them and the Duhamel identity that recovers the true
//! kernel from the parametrix.
//!
//! The transverse direction is diagonal in the eigenmodes of Y, so every
//! statement reduces to the axial factor multiplied by `exp(-t mu_k)`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, integrate, Tolerance};
use crate::smooth::Cutoff;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bc {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kernel1D {
    Line,
    /// Half-line [0, inf).
    HalfLine(Bc),
    /// Interval [0, len] with the same condition at both ends.
    Interval { len: f64, bc: Bc },
    Circle { len: f64 },
}

/// The two form components on a line: functions and multiples of dx.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    Function,
    Dx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairKind {
    Line,
    Absolute,
    Relative,
}

impl PairKind {
    /// Absolute conditions are Neumann on functions and Dirichlet on dx; relative is the swap.
    pub fn bc(&self, c: Component) -> Option<Bc> {
        match (self, c) {
            (PairKind::Line, _) => None,
            (PairKind::Absolute, Component::Function) | (PairKind::Relative, Component::Dx) => Some(Bc::Neumann),
            _ => Some(Bc::Dirichlet),
        }
    }
}

/// `exp(-d^2 / 4t) / sqrt(4 pi t)` and its derivative in d.
fn gauss(t: f64, d: f64) -> (f64, f64) {
    let g = (-d * d / (4.0 * t)).exp() / (4.0 * PI * t).sqrt();
    (g, -d / (2.0 * t) * g)
}

fn bc_sign(bc: Bc) -> f64 {
    match bc {
        Bc::Neumann => 1.0,
        Bc::Dirichlet => -1.0,
    }
}

impl Kernel1D {
    fn domain(&self) -> (f64, f64) {
        match *self {
            Kernel1D::Line | Kernel1D::Circle { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Kernel1D::HalfLine(_) => (0.0, f64::INFINITY),
            Kernel1D::Interval { len, .. } => (0.0, len),
        }
    }

    pub fn eval(&self, t: f64, u: f64, v: f64) -> Result<f64> {
        Ok(self.eval_with_derivative(t, u, v)?.0)
    }

    /// Kernel value and its derivative in the first argument.
    pub fn eval_with_derivative(&self, t: f64, u: f64, v: f64) -> Result<(f64, f64)> {
        if !(t > 0.0) {
            return Err(Error::Invalid("heat time must be positive".into()));
        }
        let (lo, hi) = self.domain();
        if u < lo || u > hi || v < lo || v > hi {
            return Err(Error::Invalid(format!("points ({u}, {v}) outside the domain [{lo}, {hi}]")));
        }
        Ok(self.raw(t, u, v))
    }

    fn raw(&self, t: f64, u: f64, v: f64) -> (f64, f64) {
        match *self {
            Kernel1D::Line => gauss(t, u - v),
            Kernel1D::HalfLine(bc) => {
                let (a, da) = gauss(t, u - v);
                let (b, db) = gauss(t, u + v);
                let s = bc_sign(bc);
                (a + s * b, da + s * db)
            }
            Kernel1D::Interval { len, bc } => {
                let s = bc_sign(bc);
                let n = image_count(t, 2.0 * len);
                let mut val = 0.0;
                let mut der = 0.0;
                for k in -n..=n {
                    let shift = 2.0 * len * k as f64;
                    let (a, da) = gauss(t, u - v + shift);
                    let (b, db) = gauss(t, u + v + shift);
                    val += a + s * b;
                    der += da + s * db;
                }
                (val, der)
            }
            Kernel1D::Circle { len } => {
                let d = u - v - len * ((u - v) / len).round();
                let n = image_count(t, len);
                let mut val = 0.0;
                let mut der = 0.0;
                for k in -n..=n {
                    let (a, da) = gauss(t, d + len * k as f64);
                    val += a;
                    der += da;
                }
                (val, der)
            }
        }
    }
}

/// Number of images on each side needed for a period `p`.
fn image_count(t: f64, p: f64) -> i64 {
    (((12.0 * t.sqrt()) / p).ceil() as i64 + 1).max(1)
}

/// Line kernel on the component pair; both components are the Gaussian.
pub fn kernel_line(t: f64, u: f64, v: f64) -> Result<(f64, f64)> {
    let k = Kernel1D::Line.eval(t, u, v)?;
    Ok((k, k))
}

/// Half-line kernel on the (function, dx) pair for absolute or relative conditions.
pub fn kernel_halfline(t: f64, u: f64, v: f64, kind: PairKind) -> Result<(f64, f64)> {
    let k = |c| match kind.bc(c) {
        Some(bc) => Kernel1D::HalfLine(bc).eval(t, u, v),
        None => Kernel1D::Line.eval(t, u, v),
    };
    Ok((k(Component::Function)?, k(Component::Dx)?))
}

/// Heat kernel of a product Y x axial in the eigenbasis of Y: `exp(-t mu_k)`
/// on the diagonal of the mode index times the axial kernel.
pub fn product_kernel(y_modes: &[f64], axial: &Kernel1D, t: f64, (k, u): (usize, f64), (k2, v): (usize, f64)) -> Result<f64> {
    if k >= y_modes.len() || k2 >= y_modes.len() {
        return Err(Error::Invalid("mode index outside the truncation".into()));
    }
    if k != k2 {
        return Ok(0.0);
    }
    Ok((-t * y_modes[k]).exp() * axial.eval(t, u, v)?)
}

/// Fiberwise trace of the product kernel at axial point u.
pub fn product_trace(y_modes: &[f64], axial: &Kernel1D, t: f64, u: f64) -> Result<f64> {
    let largest = y_modes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if (-t * largest).exp() > 1e-14 {
        let needed = y_modes.len() * 2;
        return Err(Error::Truncation { k: y_modes.len(), needed });
    }
    let y: f64 = y_modes.iter().map(|m| (-t * m).exp()).sum();
    Ok(y * axial.eval(t, u, u)?)
}

/// Which piece of the stretched model the parametrix lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    /// Closed manifold: the collar [-R, R] inside a circle of length 2(R + outer).
    Full,
    /// [-(R + outer), 0] with absolute conditions.
    Z1,
    /// [0, R + outer] with relative conditions.
    Z2,
}

/// Axial model of the collar Y x [-R, R] for one form component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxialModel {
    pub r: f64,
    pub outer: f64,
    pub side: Side,
    pub component: Component,
}

#[derive(Debug, Clone, Copy)]
struct Cutoffs {
    phi1: Cutoff,
    phi2: Cutoff,
    psi: Cutoff,
}

const CUTOFFS: Cutoffs = Cutoffs {
    phi1: Cutoff { a: 5.0 / 7.0, d: 6.0 / 7.0 },
    phi2: Cutoff { a: 1.0 / 7.0, d: 2.0 / 7.0 },
    psi: Cutoff { a: 3.0 / 7.0, d: 4.0 / 7.0 },
};

/// Values and x-derivatives of the four cutoffs at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffValues {
    pub phi1: (f64, f64, f64),
    pub phi2: (f64, f64, f64),
    pub psi1: f64,
    pub psi2: f64,
}

impl AxialModel {
    pub fn new(r: f64, outer: f64, side: Side, component: Component) -> Result<Self> {
        if !(r > 0.0 && outer > 0.0) {
            return Err(Error::Invalid("collar half-length and outer length must be positive".into()));
        }
        Ok(AxialModel { r, outer, side, component })
    }

    pub fn domain(&self) -> (f64, f64) {
        let l = self.r + self.outer;
        match self.side {
            Side::Full => (-l, l),
            Side::Z1 => (-l, 0.0),
            Side::Z2 => (0.0, l),
        }
    }

    fn pair(&self) -> PairKind {
        match self.side {
            Side::Full => PairKind::Line,
            Side::Z1 => PairKind::Absolute,
            Side::Z2 => PairKind::Relative,
        }
    }

    /// Cutoffs at x; outside the collar `phi1 = psi1 = 0`, `phi2 = psi2 = 1`.
    pub fn cutoffs(&self, x: f64) -> CutoffValues {
        let r = self.r;
        if x.abs() > r {
            return CutoffValues { phi1: (0.0, 0.0, 0.0), phi2: (1.0, 0.0, 0.0), psi1: 0.0, psi2: 1.0 };
        }
        let v = x / r;
        let (a, a1, a2) = CUTOFFS.phi1.eval(v);
        let (b, b1, b2) = CUTOFFS.phi2.eval(v);
        let (c, _, _) = CUTOFFS.psi.eval(v);
        CutoffValues {
            phi1: (1.0 - a, -a1 / r, -a2 / r / r),
            phi2: (b, b1 / r, b2 / r / r),
            psi1: 1.0 - c,
            psi2: c,
        }
    }

    /// Intervals outside which the error term vanishes in x.
    pub fn error_support(&self) -> Vec<(f64, f64)> {
        let r = self.r;
        let bands = [(-6.0 * r / 7.0, -r / 7.0), (r / 7.0, 6.0 * r / 7.0)];
        let (lo, hi) = self.domain();
        bands
            .iter()
            .filter_map(|&(a, b)| {
                let (a, b) = (a.max(lo), b.min(hi));
                (b > a).then_some((a, b))
            })
            .collect()
    }

    /// Intervals on which a cutoff derivative can be nonzero.
    fn transition_bands(&self) -> Vec<(f64, f64)> {
        let r = self.r;
        let mut out = Vec::new();
        for (a, d) in [(5.0, 6.0), (1.0, 2.0)] {
            out.push((-d * r / 7.0, -a * r / 7.0));
            out.push((a * r / 7.0, d * r / 7.0));
        }
        let (lo, hi) = self.domain();
        out.into_iter()
            .filter_map(|(a, b): (f64, f64)| {
                let (a, b) = (a.max(lo), b.min(hi));
                (b > a).then_some((a, b))
            })
            .collect()
    }

    /// Model kernel E_c near the cut and its x-derivative.
    fn model(&self, t: f64, x: f64, y: f64) -> (f64, f64) {
        match (self.side, self.pair().bc(self.component)) {
            (Side::Z1, Some(bc)) => {
                let (k, dk) = Kernel1D::HalfLine(bc).raw(t, -x, -y);
                (k, -dk)
            }
            (_, Some(bc)) => Kernel1D::HalfLine(bc).raw(t, x, y),
            (_, None) => Kernel1D::Line.raw(t, x, y),
        }
    }

    /// True kernel of the piece and its x-derivative.
    pub fn true_kernel(&self, t: f64, x: f64, y: f64) -> (f64, f64) {
        let l = self.r + self.outer;
        match (self.side, self.pair().bc(self.component)) {
            (Side::Full, _) | (_, None) => Kernel1D::Circle { len: 2.0 * l }.raw(t, x, y),
            (Side::Z1, Some(bc)) => {
                let (k, dk) = Kernel1D::Interval { len: l, bc }.raw(t, -x, -y);
                (k, -dk)
            }
            (Side::Z2, Some(bc)) => Kernel1D::Interval { len: l, bc }.raw(t, x, y),
        }
    }

    pub fn parametrix(&self, t: f64, x: f64, y: f64) -> f64 {
        let cx = self.cutoffs(x);
        let cy = self.cutoffs(y);
        let mut q = 0.0;
        if cx.phi1.0 != 0.0 && cy.psi1 != 0.0 {
            q += cx.phi1.0 * self.model(t, x, y).0 * cy.psi1;
        }
        if cx.phi2.0 != 0.0 && cy.psi2 != 0.0 {
            q += cx.phi2.0 * self.true_kernel(t, x, y).0 * cy.psi2;
        }
        q
    }

    /// `(d_t + Laplacian_x)` applied to the parametrix, written through the
    /// cutoff derivatives only.
    pub fn error_term(&self, t: f64, x: f64, y: f64) -> f64 {
        let cx = self.cutoffs(x);
        let cy = self.cutoffs(y);
        let mut c = 0.0;
        if (cx.phi1.1 != 0.0 || cx.phi1.2 != 0.0) && cy.psi1 != 0.0 {
            let (e, de) = self.model(t, x, y);
            c -= (cx.phi1.2 * e + 2.0 * cx.phi1.1 * de) * cy.psi1;
        }
        if (cx.phi2.1 != 0.0 || cx.phi2.2 != 0.0) && cy.psi2 != 0.0 {
            let (k, dk) = self.true_kernel(t, x, y);
            c -= (cx.phi2.2 * k + 2.0 * cx.phi2.1 * dk) * cy.psi2;
        }
        c
    }

    /// `int_0^t int K(t-s, x, z) C(s, z, y) dz ds`.
    pub fn duhamel_convolution(&self, t: f64, x: f64, y: f64, nodes: usize) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Invalid("heat time must be positive".into()));
        }
        let bands = self.transition_bands();
        let tol = Tolerance { abs: 1e-14, rel: 1e-11, max_intervals: 2000 };
        // double-exponential map of s in (0, t)
        let n = nodes.max(8);
        let smax = 3.0;
        let h = 2.0 * smax / (n - 1) as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let sigma = -smax + h * i as f64;
            let arg = 0.5 * PI * sigma.sinh();
            let th = arg.tanh();
            let s = 0.5 * t * (1.0 + th);
            let ts = 0.5 * t * (1.0 - th);
            let w = h * 0.5 * t * 0.5 * PI * sigma.cosh() / arg.cosh().powi(2);
            if s <= 0.0 || ts <= 0.0 || w < 1e-300 {
                continue;
            }
            let mut inner = 0.0;
            for &(a, b) in &bands {
                let f = |z: f64| self.true_kernel(ts, x, z).0 * self.error_term(s, z, y);
                let (v, _) = integrate(f, a, b, &[x], tol)?;
                inner += v;
            }
            acc += w * inner;
        }
        Ok(acc)
    }

    /// `|K - (Q - K * C)|` at one sample.
    pub fn duhamel_residual(&self, t: f64, x: f64, y: f64, nodes: usize) -> Result<DuhamelSample> {
        let k = self.true_kernel(t, x, y).0;
        let q = self.parametrix(t, x, y);
        let conv = self.duhamel_convolution(t, x, y, nodes)?;
        Ok(DuhamelSample { t, x, x_prime: y, true_kernel: k, parametrix: q, error: self.error_term(t, x, y), residual: (k - q + conv).abs() })
    }

    /// Largest |C(t, x, y)| over a sample grid of x in the support and y in the domain.
    pub fn sup_error(&self, t: f64, samples: usize) -> f64 {
        let (lo, hi) = self.domain();
        let ys: Vec<f64> = (0..=samples).map(|j| lo + (hi - lo) * j as f64 / samples as f64).collect();
        let mut best: f64 = 0.0;
        for (a, b) in self.error_support() {
            for i in 0..=samples {
                let x = a + (b - a) * i as f64 / samples as f64;
                for &y in &ys {
                    best = best.max(self.error_term(t, x, y).abs());
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuhamelSample {
    pub t: f64,
    pub x: f64,
    pub x_prime: f64,
    pub true_kernel: f64,
    pub parametrix: f64,
    pub error: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametrixRow {
    pub r: f64,
    pub sample: DuhamelSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametrixReport {
    pub rows: Vec<ParametrixRow>,
    /// (R, t, sup |C|) per grid point.
    pub sup_errors: Vec<(f64, f64, f64)>,
    /// Least-squares slope of log sup |C| against R^2 / t.
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
}

/// Duhamel residuals on a point grid and the decay of the error term over
/// the (R, t) grid.
pub fn parametrix_error_scan(
    side: Side,
    component: Component,
    outer: f64,
    r_grid: &[f64],
    t_grid: &[f64],
    points: &[(f64, f64)],
    nodes: usize,
) -> Result<ParametrixReport> {
    if r_grid.is_empty() || t_grid.is_empty() {
        return Err(Error::Invalid("R and t grids must be nonempty".into()));
    }
    let mut jobs = Vec::new();
    for &r in r_grid {
        if r < 1.0 {
            return Err(Error::Invalid("parametrix scan needs R >= 1".into()));
        }
        for &t in t_grid {
            for &(x, y) in points {
                jobs.push((r, t, x * r, y * r));
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(r, t, x, y)| {
            let m = AxialModel::new(r, outer, side, component)?;
            let (lo, hi) = m.domain();
            if x < lo || x > hi || y < lo || y > hi {
                return Err(Error::Invalid(format!("sample ({x}, {y}) outside the model")));
            }
            Ok(ParametrixRow { r, sample: m.duhamel_residual(t, x, y, nodes)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sup_errors = Vec::new();
    for &r in r_grid {
        let m = AxialModel::new(r, outer, side, component)?;
        for &t in t_grid {
            sup_errors.push((r, t, m.sup_error(t, 120)));
        }
    }
    let pts: Vec<(f64, f64)> = sup_errors.iter().map(|&(r, t, c)| (r * r / t, c.ln())).collect();
    let (slope, intercept) = linear_fit(&pts);
    let max_residual = rows.iter().map(|r| r.sample.residual).fold(0.0, f64::max);
    Ok(ParametrixReport { rows, sup_errors, slope, intercept, max_residual })
}

/// Least-squares line through the points.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Diagonal difference between the line kernel and the one-sided kernels,
/// absolute on x < 0 and relative on x >= 0, on the (function, dx) pair.
pub fn e_dif(t: f64, x: f64) -> (f64, f64) {
    let line = Kernel1D::Line.raw(t, x, x).0;
    let (kind, u) = if x < 0.0 { (PairKind::Absolute, -x) } else { (PairKind::Relative, x) };
    let one = Kernel1D::HalfLine(kind.bc(Component::Function).unwrap()).raw(t, u, u).0;
    let dx = Kernel1D::HalfLine(kind.bc(Component::Dx).unwrap()).raw(t, u, u).0;
    (line - one, line - dx)
}

/// `int psi(x) tr_s[(N/2) e_dif(t, x)] dx` over [-R, R]. The weights give the
/// Y heat traces per degree (`y_traces[p] = tr exp(-t Delta_Y)` on p-forms); a
/// point fiber is `&[1.0]`. Gauss–Legendre nodes are mirrored across 0.
pub fn cancellation_integral<F: Fn(f64) -> f64>(r: f64, t: f64, psi: F, y_traces: &[f64], order: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(order);
    let mut one = 0.0;
    let mut dx = 0.0;
    for (s, w) in nodes.iter().zip(&weights) {
        let x = 0.5 * r * (s + 1.0);
        let wt = 0.5 * r * w;
        for xx in [x, -x] {
            let (a, b) = e_dif(t, xx);
            one += wt * psi(xx) * a;
            dx += wt * psi(xx) * b;
        }
    }
    // a form of total degree p is either Y-degree p times 1 or Y-degree p-1 times dx
    let mut acc = 0.0;
    for p in 0..=y_traces.len() {
        let w = if p % 2 == 0 { 0.5 } else { -0.5 } * p as f64;
        let with_one = y_traces.get(p).copied().unwrap_or(0.0);
        let with_dx = if p > 0 { y_traces[p - 1] } else { 0.0 };
        acc += w * (with_one * one + with_dx * dx);
    }
    acc
}

/// The even cutoff `psi_{1,R}`.
pub fn psi1(r: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| if x.abs() > r { 0.0 } else { 1.0 - CUTOFFS.psi.eval(x / r).0 }
}
