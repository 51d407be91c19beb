//! Stretching of the collar, lattice spectral gap scans and the
//! exponential-mode estimates on the cylinder.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, CMat};
use crate::quadrature::gl_integrate;
use crate::smooth::Cutoff;

// ---------------------------------------------------------------------------
// Stretch profile

/// Diffeomorphism phi_R : [-eps, eps] -> [-R, R] used to stretch the collar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StretchProfile {
    pub eps: f64,
    pub r: f64,
}

/// Value of the profile split as phi = a(x) + R b(x), with derivatives.
#[derive(Debug, Clone, Copy)]
struct Split {
    a: f64,
    b: f64,
    da: f64,
    db: f64,
}

/// Coefficients of the stretched metric factor (dphi/dx)^2 = 1 + l0 + l1 R + l2 R^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricFactor {
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub total: f64,
}

pub fn stretch_profile(eps: f64, r: f64) -> Result<StretchProfile> {
    if !(eps > 0.0 && eps.is_finite()) || !(r > 0.0 && r.is_finite()) {
        return Err(Error::Invalid(format!("stretch profile needs eps > 0 and R > 0, got eps={eps}, R={r}")));
    }
    Ok(StretchProfile { eps, r })
}

impl StretchProfile {
    fn rho(&self) -> Cutoff {
        Cutoff::new(self.eps / 8.0, self.eps / 4.0)
    }

    fn chi(&self) -> Cutoff {
        Cutoff::new(6.0 * self.eps / 8.0, 7.0 * self.eps / 8.0)
    }

    /// Split on x >= 0.
    fn split(&self, x: f64) -> Split {
        let e = self.eps;
        let (rho, drho, _) = self.rho().eval(x);
        let (chi, dchi, _) = self.chi().eval(x);
        // g_R = R (4x/(3e) - 1/6) + (e/6 - x/3)
        let gb = 4.0 * x / (3.0 * e) - 1.0 / 6.0;
        let ga = e / 6.0 - x / 3.0;
        let ha = x * (1.0 - rho) + rho * ga;
        let hb = rho * gb;
        let dha = (1.0 - rho) - x * drho + drho * ga - rho / 3.0;
        let dhb = drho * gb + rho * 4.0 / (3.0 * e);
        Split {
            a: ha * (1.0 - chi) + chi * (x - e),
            b: hb * (1.0 - chi) + chi,
            da: dha * (1.0 - chi) - ha * dchi + dchi * (x - e) + chi,
            db: dhb * (1.0 - chi) - hb * dchi + dchi,
        }
    }

    fn check(&self, x: f64) {
        assert!(x.abs() <= self.eps * (1.0 + 1e-12), "x = {x} outside [-eps, eps]");
    }

    pub fn phi(&self, x: f64) -> f64 {
        self.check(x);
        let s = self.split(x.abs());
        x.signum() * (s.a + self.r * s.b)
    }

    pub fn dphi(&self, x: f64) -> f64 {
        self.check(x);
        let s = self.split(x.abs());
        s.da + self.r * s.db
    }

    /// (mu0, mu1) with dphi = 1 + mu0 + mu1 R. Both are even in x.
    pub fn mu(&self, x: f64) -> (f64, f64) {
        self.check(x);
        let s = self.split(x.abs());
        (s.da - 1.0, s.db)
    }

    pub fn metric_factor(&self, x: f64) -> MetricFactor {
        let (m0, m1) = self.mu(x);
        let lambda2 = m1 * m1;
        let lambda1 = 2.0 * m1 * (1.0 + m0);
        let lambda0 = m0 * (2.0 + m0);
        let d = self.dphi(x);
        MetricFactor { lambda0, lambda1, lambda2, total: d * d }
    }
}

pub fn stretched_metric_factor(p: &StretchProfile, x: f64) -> Result<MetricFactor> {
    if x.abs() > p.eps * (1.0 + 1e-12) {
        return Err(Error::Invalid(format!("|x| = {} exceeds eps = {}", x.abs(), p.eps)));
    }
    Ok(p.metric_factor(x))
}

// ---------------------------------------------------------------------------
// Lattice operators

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxialBc {
    Closed,
    Absolute,
    Relative,
}

impl std::str::FromStr for AxialBc {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed" => Ok(AxialBc::Closed),
            "absolute" | "abs" => Ok(AxialBc::Absolute),
            "relative" | "rel" => Ok(AxialBc::Relative),
            _ => Err(Error::Invalid(format!("unknown axial boundary condition '{s}'"))),
        }
    }
}

/// Real symmetric tridiagonal matrix, optionally with the cyclic corner entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
    pub corner: f64,
}

impl Tridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    fn cyclic(&self) -> bool {
        self.corner != 0.0
    }

    fn scale(&self) -> f64 {
        let mut s: f64 = 0.0;
        for i in 0..self.len() {
            let mut r = self.diag[i].abs();
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < self.len() {
                r += self.off[i].abs();
            }
            s = s.max(r);
        }
        s.max(2.0 * self.corner.abs()).max(f64::MIN_POSITIVE)
    }

    /// Number of eigenvalues strictly below x, from the inertia of an LDL^T
    /// factorisation of the shifted matrix.
    pub fn count_below(&self, x: f64) -> usize {
        let n = self.len();
        if n == 0 {
            return 0;
        }
        let tiny = f64::EPSILON * self.scale() * 1e-3;
        let fix = |d: f64| if d.abs() < tiny { -tiny } else { d };
        if !self.cyclic() || n < 3 {
            let mut neg = 0;
            let mut d = fix(self.diag[0] - x);
            if n == 2 && self.cyclic() {
                // two-site ring: corner and off entry couple the same pair
                let b = self.off[0] + self.corner;
                neg += (d < 0.0) as usize;
                let d1 = fix(self.diag[1] - x - b * b / d);
                return neg + (d1 < 0.0) as usize;
            }
            neg += (d < 0.0) as usize;
            for i in 1..n {
                let b = self.off[i - 1];
                d = fix(self.diag[i] - x - b * b / d);
                neg += (d < 0.0) as usize;
            }
            return neg;
        }
        // Cyclic: fold the ring into pairs (i, n-1-i), which makes the matrix
        // block tridiagonal with 2x2 blocks, then run the block Sturm recurrence.
        let m = n / 2;
        let scale = self.scale();
        let a = |i: usize| self.diag[i] - x;
        // symmetric 2x2 block stored as (p, q, r)
        let mut blk = (a(0), self.corner, a(n - 1));
        let mut neg = 0;
        let mut settle = |b: &mut (f64, f64, f64)| -> f64 {
            let mut det = b.0 * b.2 - b.1 * b.1;
            if det.abs() < 64.0 * f64::EPSILON * scale * scale {
                // singular pivot block: shift it down by a representable amount
                b.0 -= 64.0 * f64::EPSILON * scale;
                b.2 -= 64.0 * f64::EPSILON * scale;
                det = b.0 * b.2 - b.1 * b.1;
            }
            neg += if det < 0.0 {
                1
            } else if b.0 + b.2 < 0.0 {
                2
            } else {
                0
            };
            det
        };
        for i in 1..m {
            let det = settle(&mut blk);
            let (b1, b2) = (self.off[i - 1], self.off[n - 1 - i]);
            let inner = if n.is_multiple_of(2) && i == m - 1 { self.off[i] } else { 0.0 };
            blk = (
                a(i) - b1 * b1 * blk.2 / det,
                inner + b1 * b2 * blk.1 / det,
                a(n - 1 - i) - b2 * b2 * blk.0 / det,
            );
        }
        let det = settle(&mut blk);
        if n % 2 == 1 {
            let (b1, b2) = (self.off[m - 1], self.off[m]);
            let schur = a(m) - (b1 * b1 * blk.2 - 2.0 * b1 * b2 * blk.1 + b2 * b2 * blk.0) / det;
            neg += (fix(schur) < 0.0) as usize;
        }
        neg
    }

    /// The k-th smallest eigenvalue (k from 0) by bisection on the inertia count.
    pub fn eigenvalue(&self, k: usize) -> Option<f64> {
        if k >= self.len() {
            return None;
        }
        let s = self.scale();
        let (mut lo, mut hi) = (-s, s);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * s {
                break;
            }
        }
        Some(0.5 * (lo + hi))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
        }
        for i in 0..n.saturating_sub(1) {
            m[(i, i + 1)] += self.off[i];
            m[(i + 1, i)] += self.off[i];
        }
        if self.cyclic() {
            m[(0, n - 1)] += self.corner;
            m[(n - 1, 0)] += self.corner;
        }
        m
    }
}

fn path_graph(n: usize, inv_h2: f64) -> Tridiagonal {
    let mut diag = vec![2.0 * inv_h2; n];
    if n == 1 {
        diag[0] = 0.0;
    } else {
        diag[0] = inv_h2;
        diag[n - 1] = inv_h2;
    }
    Tridiagonal { diag, off: vec![-inv_h2; n.saturating_sub(1)], corner: 0.0 }
}

fn dirichlet_chain(n: usize, inv_h2: f64) -> Tridiagonal {
    Tridiagonal { diag: vec![2.0 * inv_h2; n], off: vec![-inv_h2; n.saturating_sub(1)], corner: 0.0 }
}

fn ring(n: usize, inv_h2: f64) -> Tridiagonal {
    Tridiagonal { diag: vec![2.0 * inv_h2; n], off: vec![-inv_h2; n - 1], corner: -inv_h2 }
}

/// Second order finite difference Laplacian on Y x I, Y a circle with a flat
/// U(1) twist. The transverse factor is diagonalised by twisted Fourier modes,
/// the axial factor is a (cyclic) tridiagonal matrix per form component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeOperator {
    pub mesh: f64,
    pub ly: f64,
    pub alpha: f64,
    pub length: f64,
    pub bc: AxialBc,
}

impl LatticeOperator {
    pub fn new(mesh: f64, ly: f64, alpha: f64, length: f64, bc: AxialBc) -> Result<Self> {
        if !(mesh > 0.0 && ly > 0.0 && length > 0.0) {
            return Err(Error::Invalid("lattice needs positive mesh and lengths".into()));
        }
        let op = LatticeOperator { mesh, ly, alpha, length, bc };
        if op.transverse_sites() < 3 || op.axial_sites() < 3 {
            return Err(Error::Invalid(format!("mesh {mesh} too coarse for lengths ({ly}, {length})")));
        }
        Ok(op)
    }

    pub fn transverse_sites(&self) -> usize {
        (self.ly / self.mesh).round() as usize
    }

    /// Axial vertex count; the grid is cell centred so the effective length is exact.
    pub fn axial_sites(&self) -> usize {
        (self.length / self.mesh).round() as usize
    }

    fn hy(&self) -> f64 {
        self.ly / self.transverse_sites() as f64
    }

    fn hx(&self) -> f64 {
        self.length / self.axial_sites() as f64
    }

    /// Eigenvalues of the twisted transverse lattice Laplacian, the same in both degrees.
    pub fn transverse_spectrum(&self) -> Vec<f64> {
        let n = self.transverse_sites();
        let h = self.hy();
        (0..n)
            .map(|k| {
                let s = (PI * (k as f64 + self.alpha) / n as f64).sin();
                (2.0 * s / h).powi(2)
            })
            .collect()
    }

    /// Discrete transverse gap: smallest positive transverse eigenvalue.
    pub fn transverse_gap(&self) -> f64 {
        let tol = self.zero_tol();
        self.transverse_spectrum().into_iter().filter(|&m| m > tol).fold(f64::INFINITY, f64::min)
    }

    /// Axial operator acting on the component of axial degree `r` (0 = function, 1 = dx).
    pub fn axial(&self, r: usize) -> Tridiagonal {
        let n = self.axial_sites();
        let inv = 1.0 / (self.hx() * self.hx());
        match (self.bc, r) {
            (AxialBc::Closed, _) => ring(n, inv),
            (AxialBc::Absolute, 0) | (AxialBc::Relative, 1) => path_graph(n, inv),
            (AxialBc::Absolute, _) | (AxialBc::Relative, _) => dirichlet_chain(n - 1, inv),
        }
    }

    /// (transverse degree, axial degree) blocks making up form degree p.
    pub fn blocks(degree: usize) -> Vec<(usize, usize)> {
        (0..=1usize)
            .flat_map(|q| (0..=1usize).map(move |r| (q, r)))
            .filter(|(q, r)| q + r == degree)
            .collect()
    }

    pub fn zero_tol(&self) -> f64 {
        1e-9 / (self.mesh * self.mesh).min(1.0)
    }

    /// Number of eigenvalues of the degree-p operator strictly below x.
    pub fn count_below(&self, degree: usize, x: f64) -> usize {
        let mus = self.transverse_spectrum();
        Self::blocks(degree)
            .into_iter()
            .map(|(_, r)| {
                let a = self.axial(r);
                mus.iter().map(|&m| a.count_below(x - m)).sum::<usize>()
            })
            .sum()
    }

    pub fn dimension(&self, degree: usize) -> usize {
        let ny = self.transverse_sites();
        Self::blocks(degree).into_iter().map(|(_, r)| ny * self.axial(r).len()).sum()
    }

    pub fn zero_modes(&self, degree: usize) -> usize {
        let t = self.zero_tol();
        self.count_below(degree, t) - self.count_below(degree, -t)
    }

    /// Lowest `count` eigenvalues of the degree-p operator, ascending.
    pub fn lowest_eigenvalues(&self, degree: usize, count: usize) -> Vec<f64> {
        let mus = self.transverse_spectrum();
        let mut all = Vec::new();
        for (_, r) in Self::blocks(degree) {
            let a = self.axial(r);
            let low: Vec<f64> = (0..count.min(a.len())).filter_map(|k| a.eigenvalue(k)).collect();
            for &m in &mus {
                all.extend(low.iter().map(|&l| l + m));
            }
        }
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all.truncate(count);
        all
    }

    /// Smallest eigenvalue above the zero tolerance in the given degree.
    pub fn min_positive(&self, degree: usize) -> Option<f64> {
        let tol = self.zero_tol();
        let mus = self.transverse_spectrum();
        let mut best: Option<f64> = None;
        for (_, r) in Self::blocks(degree) {
            let a = self.axial(r);
            for &m in &mus {
                let below = a.count_below(tol - m);
                if let Some(v) = a.eigenvalue(below) {
                    let v = v + m;
                    best = Some(best.map_or(v, |b: f64| b.min(v)));
                }
            }
        }
        best
    }

    /// Assembled degree-p matrix on the full 2-d lattice (for small meshes).
    pub fn assemble(&self, degree: usize) -> CMat {
        let ny = self.transverse_sites();
        let hy = self.hy();
        let inv = 1.0 / (hy * hy);
        let phase = c((2.0 * PI * self.alpha).cos(), (2.0 * PI * self.alpha).sin());
        let mut t = CMat::zeros(ny, ny);
        for j in 0..ny {
            t[(j, j)] = c(2.0 * inv, 0.0);
            let next = (j + 1) % ny;
            // hopping across the cut picks up the holonomy
            let hop = if next == 0 { phase } else { c(1.0, 0.0) };
            t[(j, next)] -= hop * inv;
            t[(next, j)] -= hop.conj() * inv;
        }
        let blocks: Vec<CMat> = Self::blocks(degree)
            .into_iter()
            .map(|(_, r)| {
                let a = self.axial(r).to_dense().map(|v| c(v, 0.0));
                let na = a.nrows();
                kron(&t, &CMat::identity(na, na)) + kron(&CMat::identity(ny, ny), &a)
            })
            .collect();
        let n: usize = blocks.iter().map(|b| b.nrows()).sum();
        let mut m = CMat::zeros(n, n);
        let mut off = 0;
        for b in blocks {
            let k = b.nrows();
            m.view_mut((off, off), (k, k)).copy_from(&b);
            off += k;
        }
        m
    }
}

fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

// ---------------------------------------------------------------------------
// Gap scan

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub r: f64,
    pub alpha: f64,
    pub mesh: f64,
    pub zero_modes: usize,
    pub zero_modes_by_degree: [usize; 3],
    pub min_positive: f64,
    pub delta: f64,
    pub window: f64,
    pub window_count: usize,
}

/// Model for the gap scan: Y a circle of length `ly` with twist `alpha`,
/// cylinder of length 2R with the given axial boundary condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapModel {
    pub ly: f64,
    pub alpha: f64,
    pub mesh: f64,
    pub bc: AxialBc,
}

impl GapModel {
    pub fn lattice(&self, r: f64) -> Result<LatticeOperator> {
        LatticeOperator::new(self.mesh, self.ly, self.alpha, 2.0 * r, self.bc)
    }
}

pub fn gap_report(model: &GapModel, r: f64) -> Result<GapReport> {
    let op = model.lattice(r)?;
    let delta = op.transverse_gap();
    if !delta.is_finite() {
        return Err(Error::Eigensolve { degree: 0, detail: "empty transverse spectrum".into() });
    }
    let window = (-r * delta.sqrt() / 16.0).exp();
    let tol = op.zero_tol();
    let mut zero = [0usize; 3];
    let mut min_pos = f64::INFINITY;
    let mut census = 0;
    for p in 0..3 {
        zero[p] = op.zero_modes(p);
        if let Some(v) = op.min_positive(p) {
            min_pos = min_pos.min(v);
        }
        if window > tol {
            census += op.count_below(p, window * (1.0 + 1e-12)) - op.count_below(p, tol);
        }
    }
    if !min_pos.is_finite() {
        return Err(Error::Eigensolve { degree: 0, detail: "no positive eigenvalue found".into() });
    }
    Ok(GapReport {
        r,
        alpha: model.alpha,
        mesh: model.mesh,
        zero_modes: zero.iter().sum(),
        zero_modes_by_degree: zero,
        min_positive: min_pos,
        delta,
        window,
        window_count: census,
    })
}

/// Gap reports over an R grid. A twist in Z is rejected unless `allow_trivial`
/// is set, which is how the untwisted control is requested.
pub fn gap_scan(model: &GapModel, r_grid: &[f64], allow_trivial: bool) -> Result<Vec<GapReport>> {
    let frac = model.alpha - model.alpha.round();
    if frac.abs() < 1e-12 && !allow_trivial {
        return Err(Error::Invalid(format!(
            "twist alpha = {} is an integer, the fiber is not acyclic",
            model.alpha
        )));
    }
    r_grid.par_iter().map(|&r| gap_report(model, r)).collect()
}

/// Least squares fit of log y = c + s log x; returns (s, c).
pub fn power_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(x, y)| (x.ln(), y.ln())).collect();
    crate::heat_parametrix::linear_fit(&pts)
}

// ---------------------------------------------------------------------------
// Exponential mode expansions on the cylinder

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExpansionDomain {
    /// Y x [-R, R].
    Cylinder,
    /// Y x [-R, 0] with the boundary condition at x = 0.
    HalfAbsolute,
    HalfRelative,
}

/// psi = sum_k (a e^{-kx} + b e^{kx}) phi_k + (c e^{-kx} + d e^{kx}) dx ^ phi_k,
/// kappa_k = sqrt(mu_k - lambda), real coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeExpansion {
    pub mu: Vec<f64>,
    pub coeffs: Vec<[f64; 4]>,
    pub lambda: f64,
    pub domain: ExpansionDomain,
}

/// C0 = inf_{x>0} (e^x - e^{-x}) / (x e^{7x/8}).
pub fn c0_constant() -> f64 {
    let g = |x: f64| 2.0 * x.sinh() / (x * (7.0 * x / 8.0).exp());
    // g decreases then increases; golden section on a bracket
    let (mut a, mut b) = (1e-6, 50.0);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let x1 = b - r * (b - a);
        let x2 = a + r * (b - a);
        if g(x1) < g(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    g(0.5 * (a + b))
}

impl ModeExpansion {
    pub fn new(mu: Vec<f64>, coeffs: Vec<[f64; 4]>, lambda: f64) -> Result<Self> {
        let e = ModeExpansion { mu, coeffs, lambda, domain: ExpansionDomain::Cylinder };
        e.validate()?;
        Ok(e)
    }

    /// Half cylinder with absolute matching at 0: a = b, c = -d.
    pub fn absolute(mu: Vec<f64>, ac: Vec<[f64; 2]>, lambda: f64) -> Result<Self> {
        let coeffs = ac.iter().map(|&[a, c]| [a, a, c, -c]).collect();
        let e = ModeExpansion { mu, coeffs, lambda, domain: ExpansionDomain::HalfAbsolute };
        e.validate()?;
        Ok(e)
    }

    /// Relative mirror: a = -b, c = d.
    pub fn relative(mu: Vec<f64>, ac: Vec<[f64; 2]>, lambda: f64) -> Result<Self> {
        let coeffs = ac.iter().map(|&[a, c]| [a, -a, c, c]).collect();
        let e = ModeExpansion { mu, coeffs, lambda, domain: ExpansionDomain::HalfRelative };
        e.validate()?;
        Ok(e)
    }

    fn validate(&self) -> Result<()> {
        if self.mu.is_empty() || self.mu.len() != self.coeffs.len() {
            return Err(Error::Shape(format!("{} eigenvalues for {} coefficient sets", self.mu.len(), self.coeffs.len())));
        }
        let mu1 = self.delta();
        if !(mu1 > 0.0) || self.lambda >= mu1 || self.lambda < 0.0 {
            return Err(Error::Invalid(format!("need 0 <= lambda < mu_1, got lambda={} mu_1={mu1}", self.lambda)));
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        self.mu.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn kappa(&self, k: usize) -> f64 {
        (self.mu[k] - self.lambda).sqrt()
    }

    pub fn sigma2(&self, k: usize) -> f64 {
        self.coeffs[k].iter().map(|v| v * v).sum()
    }

    fn x_range(&self, r: f64) -> (f64, f64) {
        match self.domain {
            ExpansionDomain::Cylinder => (-r, r),
            _ => (-r, 0.0),
        }
    }

    /// Squared L2 norm over Y x {x}.
    pub fn cross_section_norm2(&self, x: f64) -> f64 {
        (0..self.mu.len())
            .map(|k| {
                let kp = self.kappa(k);
                let [a, b, c, d] = self.coeffs[k];
                let (em, ep) = ((-kp * x).exp(), (kp * x).exp());
                (a * em + b * ep).powi(2) + (c * em + d * ep).powi(2)
            })
            .sum()
    }

    /// Closed form squared L2 norm over the (half) cylinder of half-length R.
    pub fn norm2(&self, r: f64) -> f64 {
        let (lo, hi) = self.x_range(r);
        (0..self.mu.len())
            .map(|k| {
                let kp = self.kappa(k);
                let [a, b, c, d] = self.coeffs[k];
                // int e^{-2kx} = (e^{-2k lo} - e^{-2k hi}) / 2k
                let im = ((-2.0 * kp * lo).exp() - (-2.0 * kp * hi).exp()) / (2.0 * kp);
                let ip = ((2.0 * kp * hi).exp() - (2.0 * kp * lo).exp()) / (2.0 * kp);
                (a * a + c * c) * im + (b * b + d * d) * ip + 2.0 * (a * b + c * d) * (hi - lo)
            })
            .sum()
    }

    pub fn normalized(mut self, r: f64) -> Self {
        let n = self.norm2(r).sqrt();
        for q in &mut self.coeffs {
            for v in q.iter_mut() {
                *v /= n;
            }
        }
        self
    }

    /// Residual of the boundary condition at x = 0 (zero for matched data).
    pub fn boundary_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.mu.len() {
            let kp = self.kappa(k);
            let [a, b, c, d] = self.coeffs[k];
            let (f, df, g, dg) = (a + b, kp * (b - a), c + d, kp * (d - c));
            let r = match self.domain {
                ExpansionDomain::HalfAbsolute => df.abs().max(g.abs()),
                ExpansionDomain::HalfRelative => f.abs().max(dg.abs()),
                ExpansionDomain::Cylinder => 0.0,
            };
            worst = worst.max(r);
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub r: f64,
    pub delta: f64,
    pub c0: f64,
    /// sum_k e^{(3R/2) kappa_k} |sigma_k|^2, with |sigma|^2 = a^2 + c^2 on half cylinders.
    pub weighted_sum: f64,
    /// 2 / (C0 R) e^{-R sqrt(delta)/8}
    pub weighted_bound: f64,
    /// sup over the grid of the cross-section norm squared.
    pub cross_section_max: f64,
    /// 2 * weighted_sum, what the chain gives for the cross-section norm squared.
    pub cross_section_chain: f64,
    /// 4 / C0 e^{-R sqrt(delta)/8}.
    pub cross_section_bound: f64,
    pub boundary_residual: f64,
}

impl DecayReport {
    pub fn holds(&self) -> bool {
        self.weighted_sum <= self.weighted_bound
            && self.cross_section_max <= self.cross_section_chain * (1.0 + 1e-12)
            && self.cross_section_chain <= self.cross_section_bound
    }

    /// weighted_bound - weighted_sum, relative to the bound.
    pub fn margin(&self) -> f64 {
        (self.weighted_bound - self.weighted_sum) / self.weighted_bound
    }
}

/// Checks the chain sum e^{3R k/2}|sigma|^2 <= 2/(C0 R) e^{-R sqrt(delta)/8} and
/// the resulting cross-section bound on |x| <= 3R/4 for an expansion normalised
/// on the cylinder. `xs` are sample points as fractions of R.
pub fn cross_section_decay_check(e: &ModeExpansion, r: f64, xs: &[f64]) -> Result<DecayReport> {
    e.validate()?;
    let delta = e.delta();
    if e.lambda >= 0.75 * delta {
        return Err(Error::Invalid(format!("lambda = {} must stay below 3 delta / 4 = {}", e.lambda, 0.75 * delta)));
    }
    let n2 = e.norm2(r);
    if (n2 - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("expansion is not normalised on the cylinder (norm^2 = {n2})")));
    }
    let c0 = c0_constant();
    let half = e.domain != ExpansionDomain::Cylinder;
    let weighted_sum: f64 = (0..e.mu.len())
        .map(|k| {
            let [a, b, c, d] = e.coeffs[k];
            let s2 = if half { a * a + c * c } else { a * a + b * b + c * c + d * d };
            (1.5 * r * e.kappa(k)).exp() * s2
        })
        .sum();
    let decay = (-r * delta.sqrt() / 8.0).exp();
    let (lo, hi) = if half { (-0.75, 0.0) } else { (-0.75, 0.75) };
    let mut cross: f64 = 0.0;
    for &u in xs {
        if u < lo - 1e-12 || u > hi + 1e-12 {
            return Err(Error::Invalid(format!("sample x/R = {u} outside [{lo}, {hi}]")));
        }
        cross = cross.max(e.cross_section_norm2(u * r));
    }
    // On a half cylinder both exponentials carry (a, c), so the chain doubles.
    let chain_factor = if half { 4.0 } else { 2.0 };
    Ok(DecayReport {
        r,
        delta,
        c0,
        weighted_sum,
        weighted_bound: 2.0 / (c0 * r) * decay,
        cross_section_max: cross,
        cross_section_chain: chain_factor * weighted_sum,
        cross_section_bound: 2.0 * chain_factor / c0 * decay,
        boundary_residual: e.boundary_residual(),
    })
}

// ---------------------------------------------------------------------------
// Quasi modes

/// L2 kernel data on Z_{1,infinity} restricted to the cylinder:
/// s = sum_k w_k e^{-sqrt(mu_k)(x + R)} phi_k on [-R, 0].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiMode {
    pub mu: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Cut-off f: 0 on |u| <= 1/4, 1 on 1/2 <= |u|, applied as f(x/R).
pub fn quasi_cutoff() -> Cutoff {
    Cutoff::new(0.25, 0.5)
}

const QM_NODES: usize = 48;
const QM_PANELS: usize = 16;

fn panels<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let w = (b - a) / QM_PANELS as f64;
    (0..QM_PANELS).map(|i| gl_integrate(&f, a + i as f64 * w, a + (i + 1) as f64 * w, QM_NODES)).sum()
}

impl QuasiMode {
    pub fn single(mu: f64) -> Self {
        QuasiMode { mu: vec![mu], weights: vec![1.0] }
    }

    /// Pointwise coefficient of phi_k in Delta(f_R s) at x in [-R, 0].
    pub fn laplacian_coefficient(&self, k: usize, r: f64, x: f64) -> f64 {
        let (_, f1, f2) = quasi_cutoff().eval(x / r);
        let q = self.mu[k].sqrt();
        let e = self.weights[k] * (-q * (x + r)).exp();
        // Delta(f s) = -f'' s - 2 f' s' with s' = -q s
        -(f2 / (r * r)) * e + 2.0 * (f1 / r) * q * e
    }
}

/// ||Delta(f_R s)|| / ||f_R s|| on Y x [-R, 0], by mode orthogonality and
/// Gauss-Legendre panels in x.
pub fn quasi_mode_rayleigh(s: &QuasiMode, r: f64) -> Result<f64> {
    if s.mu.is_empty() || s.mu.len() != s.weights.len() {
        return Err(Error::Invalid("quasi mode needs matching, non-empty mode data".into()));
    }
    if s.mu.iter().any(|&m| !(m > 0.0)) || !(r > 0.0) {
        return Err(Error::Invalid("quasi mode needs positive mu_k and R".into()));
    }
    let cut = quasi_cutoff();
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..s.mu.len() {
        num += panels(|x| s.laplacian_coefficient(k, r, x).powi(2), -0.5 * r, -0.25 * r);
        let q = s.mu[k].sqrt();
        let w2 = s.weights[k] * s.weights[k];
        // f = 1 on [-R, -R/2]
        den += w2 * (1.0 - (-q * r).exp()) / (2.0 * q);
        den += panels(|x| (cut.eval(x / r).0 * s.weights[k]).powi(2) * (-2.0 * q * (x + r)).exp(), -0.5 * r, -0.25 * r);
    }
    Ok((num / den).sqrt())
}

/// Same ratio for the discrete quasi mode on the lattice cylinder [-R, 0]:
/// the decaying solution of the difference equation for the lattice
/// transverse eigenvalue, multiplied by the sampled cut-off.
pub fn lattice_quasi_mode_rayleigh(mu: f64, r: f64, mesh: f64) -> Result<f64> {
    if !(mu > 0.0 && r > 0.0 && mesh > 0.0) {
        return Err(Error::Invalid("lattice quasi mode needs positive mu, R and mesh".into()));
    }
    let n = (r / mesh).round() as usize;
    if n < 8 {
        return Err(Error::Invalid(format!("mesh {mesh} too coarse for R = {r}")));
    }
    let h = r / n as f64;
    // (2 - z - 1/z)/h^2 + mu = 0, decaying root
    let b = 2.0 + mu * h * h;
    let z = 0.5 * (b - (b * b - 4.0).sqrt());
    let cut = quasi_cutoff();
    let f: Vec<f64> = (0..=n).map(|j| cut.eval((-r + j as f64 * h) / r).0).collect();
    let s: Vec<f64> = (0..=n).map(|j| z.powi(j as i32)).collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 1..n {
        // the exponential solves the difference equation, so only differences of f remain
        let lap = s[j] * ((f[j] - f[j - 1]) / z + (f[j] - f[j + 1]) * z) / (h * h);
        num += h * lap * lap;
        den += h * (f[j] * s[j]).powi(2);
    }
    let u = [f[0] * s[0], f[n] * s[n]];
    den += 0.5 * h * (u[0] * u[0] + u[1] * u[1]);
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_identity_at_r_equal_eps() {
        let p = stretch_profile(1.0, 1.0).unwrap();
        for i in 0..=40 {
            let x = -1.0 + i as f64 / 20.0;
            assert!((p.phi(x) - x).abs() < 1e-14);
        }
    }

    #[test]
    fn profile_derivative_matches_difference() {
        let p = stretch_profile(1.0, 7.0).unwrap();
        for &x in &[0.1, 0.2, 0.3, 0.5, 0.8, 0.86, -0.2] {
            let h = 1e-6;
            let fd = (p.phi(x + h) - p.phi(x - h)) / (2.0 * h);
            assert!((fd - p.dphi(x)).abs() < 1e-6 * (1.0 + fd.abs()), "x={x}");
        }
    }

    #[test]
    fn tridiagonal_counts_match_dense() {
        let t = ring(7, 3.0);
        let mut ev: Vec<f64> = t.to_dense().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (k, &v) in ev.iter().enumerate() {
            // double eigenvalues of the ring are resolved to about sqrt(eps)
            assert!((t.eigenvalue(k).unwrap() - v).abs() < 1e-7, "k={k}");
        }
        let p = path_graph(6, 1.0);
        let mut ev: Vec<f64> = p.to_dense().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (k, &v) in ev.iter().enumerate() {
            assert!((p.eigenvalue(k).unwrap() - v).abs() < 1e-12);
        }
    }

    #[test]
    fn c0_value() {
        let c0 = c0_constant();
        assert!(c0 > 0.0 && c0 <= 2.0);
        for i in 1..200 {
            let x = i as f64 * 0.1;
            assert!(2.0 * x.sinh() / (x * (7.0 * x / 8.0).exp()) >= c0 - 1e-12);
        }
    }
}
