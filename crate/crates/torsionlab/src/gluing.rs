//! End-to-end gluing experiments: circle and torus models, the adiabatic
//! sweep and the torsion of the Mayer–Vietoris sequence under stretching.

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metric_complex::metric_variation_term;
use crate::model_spectra::{
    analytic_torsion_log, circle_spectrum, interval_spectrum, Boundary, ModelFibration, TorsionValue,
};
use crate::simplicial::{CellMetric, FlatBundle, MayerVietoris, Triangulation};

/// Edges per arc in the simplicial circle used for the sequence torsion.
pub const CIRCLE_CELLS: usize = 4;
/// Cells of the simplicial torus (per arc, per transverse circle).
pub const TORUS_CELLS: (usize, usize) = (2, 3);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GluingReport {
    pub model: String,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub alpha: f64,
    pub rank: usize,
    #[serde(rename = "logT_Z")]
    pub log_t_z: f64,
    #[serde(rename = "logT_abs")]
    pub log_t_abs: f64,
    #[serde(rename = "logT_rel")]
    pub log_t_rel: f64,
    #[serde(rename = "T_f")]
    pub t_f: f64,
    pub euler_term: f64,
    pub residual: f64,
    pub error_budget: f64,
}

impl GluingReport {
    /// `logT_Z - logT_abs - logT_rel`.
    pub fn left_side(&self) -> f64 {
        self.log_t_z - self.log_t_abs - self.log_t_rel
    }

    pub fn within_budget(&self, factor: f64) -> bool {
        self.residual.abs() <= factor * self.error_budget
    }
}

/// `(log 2 / 2) rk(F) chi(Y)`.
pub fn euler_term(rank: usize, chi_y: i64) -> f64 {
    0.5 * LN_2 * rank as f64 * chi_y as f64
}

fn assemble(
    model: &str,
    (l, r, alpha, rank): (f64, f64, f64, usize),
    [z, abs, rel]: [TorsionValue; 3],
    t_f: f64,
    euler: f64,
) -> GluingReport {
    let residual = z.value - abs.value - rel.value - euler - t_f;
    // sequence torsion is finite dimensional linear algebra
    let budget = z.error + abs.error + rel.error + 1e-10 * (1.0 + t_f.abs());
    GluingReport {
        model: model.into(),
        l,
        r,
        alpha,
        rank,
        log_t_z: z.value,
        log_t_abs: abs.value,
        log_t_rel: rel.value,
        t_f,
        euler_term: euler,
        residual,
        error_budget: budget,
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{name} must be positive, got {v}")))
    }
}

/// Sequence torsion T_f for the circle cut into arcs of lengths l1 and l2.
pub fn circle_t_f(l1: f64, l2: f64) -> Result<f64> {
    let t = Triangulation::circle_split(CIRCLE_CELLS, CIRCLE_CELLS, l1, l2)?;
    MayerVietoris::new(&t, &FlatBundle::trivial(&t, 1), CellMetric::Volume)?.t_f()
}

fn circle_report(l1: f64, l2: f64, r: f64, k: usize) -> Result<GluingReport> {
    let (a1, a2) = (l1 + r, l2 + r);
    let z = analytic_torsion_log(&circle_spectrum(a1 + a2, 0.0)?, k)?;
    let abs = analytic_torsion_log(&interval_spectrum(a1, Boundary::Absolute)?, k)?;
    let rel = analytic_torsion_log(&interval_spectrum(a2, Boundary::Relative)?, k)?;
    let t_f = circle_t_f(a1, a2)?;
    // Y is two points
    Ok(assemble("circle", (l1, r, 0.0, 1), [z, abs, rel], t_f, euler_term(1, 2)))
}

/// Circle of length 2L cut into two arcs of length L, trivial rank one bundle.
pub fn run_circle_gluing(l: f64, k: usize) -> Result<GluingReport> {
    check_positive("L", l)?;
    circle_report(l, l, 0.0, k)
}

/// Reduces a twist to [0, 1) and rejects integers, for which the transverse
/// circle is not acyclic.
pub fn reduce_twist(alpha: f64) -> Result<f64> {
    if !alpha.is_finite() {
        return Err(Error::Invalid("twist must be finite".into()));
    }
    let a = alpha.rem_euclid(1.0);
    if a < 1e-12 || 1.0 - a < 1e-12 {
        return Err(Error::Invalid(format!(
            "twist alpha = {alpha} is an integer: the transverse circle has cohomology, the acyclicity hypothesis fails"
        )));
    }
    Ok(a)
}

/// Dimensions `[H(Z2,Y), H(Z), H(Z1)]` per degree and T_f on the simplicial torus.
pub fn torus_sequence(ly: f64, alpha: f64, a1: f64, a2: f64) -> Result<(Vec<[usize; 3]>, f64)> {
    let (n, ny) = TORUS_CELLS;
    let t = Triangulation::torus_split(n, n, a1, a2, ny, ly)?;
    let f = FlatBundle::with_phases(&t, &[0.0, alpha]);
    let mv = MayerVietoris::new(&t, &f, CellMetric::Volume)?;
    Ok((mv.dims(), mv.t_f()?))
}

fn torus_report(m: &ModelFibration, r: f64, k: usize) -> Result<GluingReport> {
    let [z, abs, rel] = m.spectra(r)?;
    let tz = analytic_torsion_log(&z, k)?;
    let ta = analytic_torsion_log(&abs, k)?;
    let tr = analytic_torsion_log(&rel, k)?;
    let (_, t_f) = torus_sequence(m.ly, m.alpha, m.a1 + r, m.a2 + r)?;
    Ok(assemble("torus", (m.a1, r, m.alpha, 1), [tz, ta, tr], t_f, euler_term(1, 0)))
}

/// Torus of axial length a1 + a2 with transverse circle of length ly and twist alpha.
pub fn run_torus_gluing(ly: f64, alpha: f64, a1: f64, a2: f64, k: usize) -> Result<GluingReport> {
    check_positive("L_Y", ly)?;
    check_positive("a1", a1)?;
    check_positive("a2", a2)?;
    let alpha = reduce_twist(alpha)?;
    torus_report(&ModelFibration { ly, alpha, a1, a2 }, 0.0, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SweepModel {
    /// Circle cut into arcs of lengths l1, l2; each arc grows by R.
    Circle { l1: f64, l2: f64 },
    Torus(ModelFibration),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub report: GluingReport,
    /// `logT_Z - logT_abs - logT_rel - T_f`.
    pub combination: f64,
    /// `T_f(h_0) - T_f(h_R) + metric variation of the class Grams` (circle only).
    pub variation_identity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdiabaticSweep {
    pub model: SweepModel,
    pub r_grid: Vec<f64>,
    pub rows: Vec<SweepRow>,
    pub max_deviation: f64,
    pub max_variation_residual: f64,
}

fn circle_mv(l1: f64, l2: f64) -> Result<MayerVietoris> {
    let t = Triangulation::circle_split(CIRCLE_CELLS, CIRCLE_CELLS, l1, l2)?;
    MayerVietoris::new(&t, &FlatBundle::trivial(&t, 1), CellMetric::Volume)
}

/// Stretching Z -> Z + 2R realised as longer cylinders.
pub fn adiabatic_invariance_sweep(model: SweepModel, r_grid: &[f64], k: usize) -> Result<AdiabaticSweep> {
    if r_grid.is_empty() || r_grid.iter().any(|&r| !(r >= 0.0)) {
        return Err(Error::Invalid("R grid must be non-empty and non-negative".into()));
    }
    let base = match model {
        SweepModel::Circle { l1, l2 } => {
            check_positive("l1", l1)?;
            check_positive("l2", l2)?;
            Some(circle_mv(l1, l2)?)
        }
        SweepModel::Torus(m) => {
            reduce_twist(m.alpha)?;
            None
        }
    };
    let rows: Vec<SweepRow> = r_grid
        .par_iter()
        .map(|&r| -> Result<SweepRow> {
            match model {
                SweepModel::Circle { l1, l2 } => {
                    let report = circle_report(l1, l2, r, k)?;
                    let h0 = base.as_ref().unwrap();
                    let hr = circle_mv(l1 + r, l2 + r)?;
                    let t0 = h0.t_f()?;
                    let tr = hr.t_f()?;
                    let var = metric_variation_term(&h0.grams(), &hr.grams())?;
                    let combination = report.left_side() - report.t_f;
                    Ok(SweepRow { report, combination, variation_identity: Some(t0 - tr + var) })
                }
                SweepModel::Torus(m) => {
                    let report = torus_report(&m, r, k)?;
                    let combination = report.left_side() - report.t_f;
                    Ok(SweepRow { report, combination, variation_identity: None })
                }
            }
        })
        .collect::<Result<_>>()?;
    let c0 = rows[0].combination;
    let max_deviation = rows.iter().map(|w| (w.combination - c0).abs()).fold(0.0, f64::max);
    let max_variation_residual =
        rows.iter().filter_map(|w| w.variation_identity).map(f64::abs).fold(0.0, f64::max);
    Ok(AdiabaticSweep { model, r_grid: r_grid.to_vec(), rows, max_deviation, max_variation_residual })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceLimitRow {
    #[serde(rename = "R")]
    pub r: f64,
    pub alpha: f64,
    /// Total dimension of the sequence.
    pub dimension: usize,
    pub dims: Vec<[usize; 3]>,
    #[serde(rename = "T_f")]
    pub t_f: f64,
}

/// T_f of the Mayer–Vietoris sequence of the torus model along an R grid.
/// With an integer twist (`allow_trivial`) this is the untwisted control.
pub fn torsion_sequence_limit(m: &ModelFibration, r_grid: &[f64], allow_trivial: bool) -> Result<Vec<SequenceLimitRow>> {
    let alpha = if allow_trivial { m.alpha.rem_euclid(1.0) } else { reduce_twist(m.alpha)? };
    r_grid
        .par_iter()
        .map(|&r| {
            if !(r >= 0.0) {
                return Err(Error::Invalid("R must be non-negative".into()));
            }
            let (dims, t_f) = torus_sequence(m.ly, alpha, m.a1 + r, m.a2 + r)?;
            let dimension = dims.iter().flatten().sum();
            Ok(SequenceLimitRow { r, alpha, dimension, dims, t_f })
        })
        .collect()
}

/// Relative sign between the analytic and the combinatorial torsion, fixed
/// once on the twisted circle.
pub const CHEEGER_MULLER_SIGN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheegerMullerRow {
    pub alpha: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub cells: usize,
    pub analytic: f64,
    pub reidemeister: f64,
    pub difference: f64,
    pub error_budget: f64,
}

/// Analytic torsion of the twisted circle of length `l` against the
/// Reidemeister torsion of a `cells`-edge triangulation.
pub fn cheeger_muller_check(alpha: f64, l: f64, cells: usize, k: usize) -> Result<CheegerMullerRow> {
    check_positive("L", l)?;
    let alpha = reduce_twist(alpha)?;
    let an = analytic_torsion_log(&circle_spectrum(l, alpha)?, k)?;
    let t = Triangulation::circle(cells, l)?;
    let rt = crate::simplicial::reidemeister_torsion(&t, &FlatBundle::with_phases(&t, &[alpha]))?;
    Ok(CheegerMullerRow {
        alpha,
        l,
        cells,
        analytic: an.value,
        reidemeister: rt,
        difference: an.value - CHEEGER_MULLER_SIGN * rt,
        error_budget: an.error + 64.0 * f64::EPSILON * cells as f64 * rt.abs().max(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twist_reduction() {
        assert!((reduce_twist(1.25).unwrap() - 0.25).abs() < 1e-15);
        assert!((reduce_twist(-0.25).unwrap() - 0.75).abs() < 1e-15);
        assert!(reduce_twist(2.0).is_err());
    }

    #[test]
    fn euler_term_values() {
        assert!((euler_term(1, 2) - LN_2).abs() < 1e-16);
        assert_eq!(euler_term(3, 0), 0.0);
    }
}
