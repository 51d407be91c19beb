//! Finite dimensional metric cochain complexes.
//!
//! A complex lives in degrees `0..=n` with differentials `d_p : C^p -> C^{p+1}`
//! and Hermitian metrics `h_p`. Adjoints are `d* = h_p^{-1} d^dagger h_{p+1}`;
//! all spectral work happens in the basis orthonormalised by the Cholesky
//! factor of `h`, where the Laplacians are plain Hermitian matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};

pub const DEFAULT_RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricCochainComplex {
    dims: Vec<usize>,
    d: Vec<CMat>,
    h: Vec<CMat>,
}

impl MetricCochainComplex {
    pub fn new(dims: Vec<usize>, d: Vec<CMat>, h: Vec<CMat>) -> Result<Self> {
        let n = dims.len();
        if d.len() != n.saturating_sub(1) {
            return Err(Error::Shape(format!(
                "{} degrees need {} differentials, got {}",
                n,
                n.saturating_sub(1),
                d.len()
            )));
        }
        if h.len() != n {
            return Err(Error::Shape(format!("{} degrees need {} metrics, got {}", n, n, h.len())));
        }
        for (p, dp) in d.iter().enumerate() {
            if dp.nrows() != dims[p + 1] || dp.ncols() != dims[p] {
                return Err(Error::Shape(format!(
                    "d_{p} is {}x{}, expected {}x{}",
                    dp.nrows(),
                    dp.ncols(),
                    dims[p + 1],
                    dims[p]
                )));
            }
        }
        for (p, hp) in h.iter().enumerate() {
            if hp.nrows() != dims[p] || hp.ncols() != dims[p] {
                return Err(Error::Shape(format!("h_{p} must be {0}x{0}", dims[p])));
            }
            linalg::cholesky_lower(hp, p)?;
        }
        for p in 0..d.len().saturating_sub(1) {
            let dd = &d[p + 1] * &d[p];
            let scale = linalg::max_abs(&d[p + 1]).max(1.0) * linalg::max_abs(&d[p]).max(1.0);
            let res = linalg::max_abs(&dd);
            if res > 1e-12 * scale {
                return Err(Error::NotAComplex { degree: p, residual: res });
            }
        }
        Ok(MetricCochainComplex { dims, d, h })
    }

    pub fn with_identity_metrics(dims: Vec<usize>, d: Vec<CMat>) -> Result<Self> {
        let h = dims.iter().map(|&m| CMat::identity(m, m)).collect();
        Self::new(dims, d, h)
    }

    pub fn empty() -> Self {
        MetricCochainComplex { dims: Vec::new(), d: Vec::new(), h: Vec::new() }
    }

    /// Number of degrees (top degree + 1).
    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn differential(&self, p: usize) -> &CMat {
        &self.d[p]
    }

    pub fn differentials(&self) -> &[CMat] {
        &self.d
    }

    pub fn metric(&self, p: usize) -> &CMat {
        &self.h[p]
    }

    pub fn metrics(&self) -> &[CMat] {
        &self.h
    }

    /// Same differentials, new metrics.
    pub fn with_metrics(&self, h: Vec<CMat>) -> Result<Self> {
        Self::new(self.dims.clone(), self.d.clone(), h)
    }

    /// Differentials in h-orthonormal coordinates: `D_p = L_{p+1}^dagger d_p L_p^{-dagger}`.
    pub fn orthonormal_differentials(&self) -> Result<Vec<CMat>> {
        let ls: Vec<CMat> = self
            .h
            .iter()
            .enumerate()
            .map(|(p, hp)| linalg::cholesky_lower(hp, p))
            .collect::<Result<_>>()?;
        Ok(self
            .d
            .iter()
            .enumerate()
            .map(|(p, dp)| {
                let linv = linalg::lower_inverse(&ls[p]);
                ls[p + 1].adjoint() * dp * linv.adjoint()
            })
            .collect())
    }

    /// Adjoint of `d_p` with respect to the metrics.
    pub fn adjoint(&self, p: usize) -> Result<CMat> {
        let hinv = self.h[p]
            .clone()
            .try_inverse()
            .ok_or(Error::NotPositive(p))?;
        Ok(hinv * self.d[p].adjoint() * &self.h[p + 1])
    }

    /// Laplacian `d_p^* d_p + d_{p-1} d_{p-1}^*` in the original basis.
    pub fn laplacian(&self, p: usize) -> Result<CMat> {
        let m = self.dims[p];
        let mut lap = CMat::zeros(m, m);
        if p < self.d.len() {
            lap += self.adjoint(p)? * &self.d[p];
        }
        if p > 0 {
            lap += &self.d[p - 1] * self.adjoint(p - 1)?;
        }
        Ok(lap)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ComplexJson::from(self)).expect("complex serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: ComplexJson = serde_json::from_str(s).map_err(|e| Error::Invalid(e.to_string()))?;
        j.into_complex()
    }
}

#[derive(Serialize, Deserialize)]
struct ComplexJson {
    degrees: Vec<usize>,
    dims: Vec<usize>,
    differentials: Vec<Vec<[f64; 2]>>,
    metrics: Vec<Vec<[f64; 2]>>,
}

fn row_major(m: &CMat) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push([m[(i, j)].re, m[(i, j)].im]);
        }
    }
    out
}

fn from_row_major(rows: usize, cols: usize, v: &[[f64; 2]]) -> Result<CMat> {
    if v.len() != rows * cols {
        return Err(Error::Shape(format!("expected {} entries, got {}", rows * cols, v.len())));
    }
    Ok(CMat::from_row_iterator(rows, cols, v.iter().map(|z| C64::new(z[0], z[1]))))
}

impl From<&MetricCochainComplex> for ComplexJson {
    fn from(c: &MetricCochainComplex) -> Self {
        ComplexJson {
            degrees: (0..c.len()).collect(),
            dims: c.dims.clone(),
            differentials: c.d.iter().map(row_major).collect(),
            metrics: c.h.iter().map(row_major).collect(),
        }
    }
}

impl ComplexJson {
    fn into_complex(self) -> Result<MetricCochainComplex> {
        if self.degrees != (0..self.dims.len()).collect::<Vec<_>>() {
            return Err(Error::Invalid("degrees must be the contiguous range 0..n".into()));
        }
        let n = self.dims.len();
        if self.differentials.len() != n.saturating_sub(1) || self.metrics.len() != n {
            return Err(Error::Shape("differential or metric count does not match dims".into()));
        }
        let d = (0..n.saturating_sub(1))
            .map(|p| from_row_major(self.dims[p + 1], self.dims[p], &self.differentials[p]))
            .collect::<Result<Vec<_>>>()?;
        let h = (0..n)
            .map(|p| from_row_major(self.dims[p], self.dims[p], &self.metrics[p]))
            .collect::<Result<Vec<_>>>()?;
        MetricCochainComplex::new(self.dims, d, h)
    }
}

#[derive(Debug, Clone)]
pub struct HodgeData {
    /// Columns span ker Laplacian_p, orthonormal for h_p, in the original basis.
    pub harmonic: Vec<CMat>,
    /// L2 Gram matrices of the harmonic bases.
    pub gram: Vec<CMat>,
    /// Positive Laplacian eigenvalues per degree, ascending, with multiplicity.
    pub positive_spectrum: Vec<Vec<f64>>,
    /// rank of d_p.
    pub ranks: Vec<usize>,
}

impl HodgeData {
    pub fn betti(&self, p: usize) -> usize {
        self.harmonic[p].ncols()
    }

    pub fn log_det_prime(&self, p: usize) -> f64 {
        self.positive_spectrum[p].iter().map(|x| x.ln()).sum()
    }
}

pub fn hodge_decompose(c: &MetricCochainComplex) -> Result<HodgeData> {
    hodge_decompose_with(c, DEFAULT_RANK_TOL)
}

pub fn hodge_decompose_with(c: &MetricCochainComplex, rank_tol: f64) -> Result<HodgeData> {
    let n = c.len();
    let dd = c.orthonormal_differentials()?;
    let ranks: Vec<usize> = dd.iter().map(|m| linalg::rank(m, rank_tol)).collect();
    let mut harmonic = Vec::with_capacity(n);
    let mut gram = Vec::with_capacity(n);
    let mut spectra = Vec::with_capacity(n);
    for p in 0..n {
        let m = c.dims[p];
        let mut lap = CMat::zeros(m, m);
        if p < dd.len() {
            lap += dd[p].adjoint() * &dd[p];
        }
        if p > 0 {
            lap += &dd[p - 1] * dd[p - 1].adjoint();
        }
        let (vals, vecs) = linalg::hermitian_eigen(&lap, p)?;
        let r_out = if p < ranks.len() { ranks[p] } else { 0 };
        let r_in = if p > 0 { ranks[p - 1] } else { 0 };
        let b = m.checked_sub(r_out + r_in).ok_or(Error::NotAComplex { degree: p, residual: f64::NAN })?;

        let scale = linalg::max_abs(&lap).max(1.0);
        for k in 0..m {
            let v = vecs.column(k);
            let res = (&lap * v - v * C64::new(vals[k], 0.0)).norm();
            if res > 1e-10 * scale {
                return Err(Error::Eigensolve {
                    degree: p,
                    detail: format!("eigenvector residual {res:.3e}"),
                });
            }
        }
        if b < m && vals[b] <= 0.0 {
            return Err(Error::Eigensolve {
                degree: p,
                detail: format!("expected {} positive eigenvalues, smallest is {:.3e}", m - b, vals[b]),
            });
        }
        let l = linalg::cholesky_lower(&c.h[p], p)?;
        let linv_adj = linalg::lower_inverse(&l).adjoint();
        let basis = &linv_adj * vecs.columns(0, b);
        gram.push(basis.adjoint() * &c.h[p] * &basis);
        harmonic.push(basis);
        spectra.push(vals[b..].to_vec());
    }
    Ok(HodgeData { harmonic, gram, positive_spectrum: spectra, ranks })
}

/// `log tau = -1/2 sum_p (-1)^p p log det' Laplacian_p`.
pub fn torsion_scalar(c: &MetricCochainComplex) -> Result<f64> {
    let hd = hodge_decompose(c)?;
    Ok(torsion_from_hodge(&hd))
}

pub fn torsion_from_hodge(hd: &HodgeData) -> f64 {
    let mut acc = 0.0;
    for p in 0..hd.positive_spectrum.len() {
        let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * p as f64 * hd.log_det_prime(p);
    }
    -0.5 * acc
}

/// Degree-0 metric variation `1/2 sum_p (-1)^p tr log(h_p^{-1} h'_p)`.
pub fn metric_variation_term(h: &[CMat], h2: &[CMat]) -> Result<f64> {
    if h.len() != h2.len() {
        return Err(Error::Shape(format!("{} vs {} degrees", h.len(), h2.len())));
    }
    let mut acc = 0.0;
    for p in 0..h.len() {
        if h[p].shape() != h2[p].shape() {
            return Err(Error::Shape(format!("degree {p}: {:?} vs {:?}", h[p].shape(), h2[p].shape())));
        }
        let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * (linalg::log_det_hpd(&h2[p], p)? - linalg::log_det_hpd(&h[p], p)?);
    }
    Ok(0.5 * acc)
}

/// A cohomology space in a chosen basis, with the Gram matrix of that basis.
#[derive(Debug, Clone)]
pub struct CohomologySpace {
    pub label: String,
    pub gram: CMat,
}

impl CohomologySpace {
    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct ExactSequenceWithMetrics {
    pub complex: MetricCochainComplex,
    pub labels: Vec<String>,
}

impl ExactSequenceWithMetrics {
    pub fn torsion(&self) -> Result<f64> {
        if self.complex.is_empty() {
            return Ok(0.0);
        }
        torsion_scalar(&self.complex)
    }

    pub fn is_trivial(&self) -> bool {
        self.complex.dims().iter().all(|&m| m == 0)
    }
}

/// Regrades a long exact sequence `V_0 -> V_1 -> ...` as an acyclic metric
/// complex. `maps[i] : V_i -> V_{i+1}`.
pub fn sequence_from_cohomology(spaces: Vec<CohomologySpace>, maps: Vec<CMat>) -> Result<ExactSequenceWithMetrics> {
    sequence_from_cohomology_with(spaces, maps, DEFAULT_RANK_TOL)
}

pub fn sequence_from_cohomology_with(
    spaces: Vec<CohomologySpace>,
    maps: Vec<CMat>,
    rank_tol: f64,
) -> Result<ExactSequenceWithMetrics> {
    let dims: Vec<usize> = spaces.iter().map(|s| s.dim()).collect();
    if dims.iter().all(|&m| m == 0) {
        return Ok(ExactSequenceWithMetrics {
            complex: MetricCochainComplex::empty(),
            labels: spaces.into_iter().map(|s| s.label).collect(),
        });
    }
    if maps.len() + 1 != spaces.len() {
        return Err(Error::Shape(format!("{} spaces need {} maps", spaces.len(), spaces.len() - 1)));
    }
    let ranks: Vec<usize> = maps.iter().map(|m| linalg::rank(m, rank_tol)).collect();
    for i in 0..dims.len() {
        let r_out = if i < ranks.len() { ranks[i] } else { 0 };
        let r_in = if i > 0 { ranks[i - 1] } else { 0 };
        let defect = dims[i] as i64 - (r_out + r_in) as i64;
        if defect != 0 {
            return Err(Error::Inexact { position: i, defect });
        }
    }
    let labels = spaces.iter().map(|s| s.label.clone()).collect();
    let h = spaces.into_iter().map(|s| s.gram).collect();
    let complex = MetricCochainComplex::new(dims, maps, h).map_err(|e| match e {
        Error::NotAComplex { degree, .. } => Error::Inexact { position: degree + 1, defect: 0 },
        other => other,
    })?;
    Ok(ExactSequenceWithMetrics { complex, labels })
}
