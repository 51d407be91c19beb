//! Experiment configuration and the dispatcher that turns a configuration
//! into an output table.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::adiabatic::{gap_scan, AxialBc, GapModel};
use crate::error::{Error, Result};
use crate::gluing::{self, SweepModel};
use crate::heat_parametrix::{parametrix_error_scan, Component, Side};
use crate::model_spectra::{
    analytic_torsion_log, circle_spectrum, cylinder_spectrum, interval_spectrum, time_split_contributions,
    torus_spectrum, zeta_log_det, Boundary, ModelFibration, SpectrumFamily, DEFAULT_TRUNCATION,
};
use crate::output::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    CircleGluing,
    TorusGluing,
    AdiabaticSweep,
    GapScan,
    ParametrixScan,
    TimeSplit,
    CheegerMuller,
    Spectrum,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::CircleGluing => "circle-gluing",
            Experiment::TorusGluing => "torus-gluing",
            Experiment::AdiabaticSweep => "adiabatic-sweep",
            Experiment::GapScan => "gap-scan",
            Experiment::ParametrixScan => "parametrix-scan",
            Experiment::TimeSplit => "time-split",
            Experiment::CheegerMuller => "cheeger-muller",
            Experiment::Spectrum => "spectrum",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumModel {
    Circle,
    IntervalAbs,
    IntervalRel,
    CylinderAbs,
    CylinderRel,
    Torus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Circle,
    Torus,
}

/// All parameters of every experiment; each experiment reads the ones it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    /// Arc length L (circle), or interval / axial length.
    pub length: f64,
    /// Second arc for unequal circle sweeps; defaults to `length`.
    pub length2: Option<f64>,
    pub r_grid: Vec<f64>,
    pub alpha: f64,
    pub ly: f64,
    pub a1: f64,
    pub a2: f64,
    pub mesh: f64,
    pub truncation: usize,
    /// Split exponent: t_split = R^(2 - eps).
    pub eps: f64,
    pub t_grid: Vec<f64>,
    pub bc: AxialBc,
    pub side: Side,
    pub component: Component,
    pub outer: f64,
    /// Sample points (x/R, y/R) for the Duhamel check.
    pub points: Vec<(f64, f64)>,
    pub nodes: usize,
    pub cells: Vec<usize>,
    pub sweep: SweepKind,
    pub spectrum: SpectrumModel,
    pub allow_trivial: bool,
    pub out: Option<PathBuf>,
    pub json: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: None,
            length: 1.0,
            length2: None,
            r_grid: vec![2.0, 4.0, 8.0],
            alpha: 0.5,
            ly: 1.0,
            a1: 1.0,
            a2: 1.0,
            mesh: 1.0 / 40.0,
            truncation: DEFAULT_TRUNCATION,
            eps: 0.5,
            t_grid: vec![1.0, 2.0, 4.0],
            bc: AxialBc::Closed,
            side: Side::Full,
            component: Component::Function,
            outer: 1.0,
            points: vec![(0.3, 0.3), (0.5, 0.8), (0.1, 0.45), (0.9, 0.2)],
            nodes: 64,
            cells: vec![3, 12],
            sweep: SweepKind::Circle,
            spectrum: SpectrumModel::Circle,
            allow_trivial: false,
            out: None,
            json: false,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{name} must be positive, got {v}")))
    }
}

fn grid(name: &str, g: &[f64], allow_zero: bool) -> Result<()> {
    if g.is_empty() {
        return Err(Error::Invalid(format!("{name} grid is empty")));
    }
    for &v in g {
        if !v.is_finite() || v < 0.0 || (!allow_zero && v == 0.0) {
            return Err(Error::Invalid(format!("{name} grid entry {v} is not admissible")));
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Invalid(format!("config: {e}")))
    }

    pub fn experiment(&self) -> Result<Experiment> {
        self.experiment.ok_or_else(|| Error::Invalid("no experiment selected".into()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.truncation == 0 {
            return Err(Error::Invalid("truncation K must be positive".into()));
        }
        match self.experiment()? {
            Experiment::CircleGluing => positive("length", self.length),
            Experiment::TorusGluing => {
                positive("ly", self.ly)?;
                positive("a1", self.a1)?;
                positive("a2", self.a2)?;
                gluing::reduce_twist(self.alpha).map(|_| ())
            }
            Experiment::AdiabaticSweep => {
                grid("R", &self.r_grid, true)?;
                match self.sweep {
                    SweepKind::Circle => {
                        positive("length", self.length)?;
                        positive("length2", self.length2.unwrap_or(self.length))
                    }
                    SweepKind::Torus => {
                        positive("ly", self.ly)?;
                        positive("a1", self.a1)?;
                        positive("a2", self.a2)?;
                        gluing::reduce_twist(self.alpha).map(|_| ())
                    }
                }
            }
            Experiment::GapScan => {
                grid("R", &self.r_grid, false)?;
                positive("mesh", self.mesh)?;
                positive("ly", self.ly)
            }
            Experiment::ParametrixScan => {
                grid("R", &self.r_grid, false)?;
                grid("t", &self.t_grid, false)?;
                positive("outer", self.outer)?;
                if self.nodes < 4 {
                    return Err(Error::Invalid("need at least 4 quadrature nodes".into()));
                }
                if self.points.is_empty() {
                    return Err(Error::Invalid("no sample points".into()));
                }
                Ok(())
            }
            Experiment::TimeSplit => {
                grid("R", &self.r_grid, false)?;
                positive("ly", self.ly)?;
                positive("a1", self.a1)?;
                positive("a2", self.a2)?;
                if !(self.eps > 0.0 && self.eps < 2.0) {
                    return Err(Error::Invalid("eps must lie in (0, 2)".into()));
                }
                gluing::reduce_twist(self.alpha).map(|_| ())
            }
            Experiment::CheegerMuller => {
                positive("length", self.length)?;
                if self.cells.is_empty() || self.cells.iter().any(|&c| c < 2) {
                    return Err(Error::Invalid("cells must be a nonempty list of counts >= 2".into()));
                }
                gluing::reduce_twist(self.alpha).map(|_| ())
            }
            Experiment::Spectrum => {
                positive("length", self.length)?;
                positive("ly", self.ly)
            }
        }
    }

    /// Runs the configured experiment.
    pub fn run(&self) -> Result<Table> {
        self.validate()?;
        let k = self.truncation;
        let exp = self.experiment()?;
        let mut table = match exp {
            Experiment::CircleGluing => {
                let r = gluing::run_circle_gluing(self.length, k)?;
                let mut t = gluing_table(exp.name());
                push_gluing(&mut t, &r)?;
                t
            }
            Experiment::TorusGluing => {
                let r = gluing::run_torus_gluing(self.ly, self.alpha, self.a1, self.a2, k)?;
                let mut t = gluing_table(exp.name());
                push_gluing(&mut t, &r)?;
                t.meta("L_Y", self.ly).meta("a2", self.a2);
                t
            }
            Experiment::AdiabaticSweep => self.sweep_table()?,
            Experiment::GapScan => {
                let model = GapModel { ly: self.ly, alpha: self.alpha, mesh: self.mesh, bc: self.bc };
                let reps = gap_scan(&model, &self.r_grid, self.allow_trivial)?;
                let mut t = Table::new(exp.name(), &["R", "alpha", "mesh", "zero_modes", "min_positive", "window_count"]);
                t.meta("L_Y", self.ly).meta("axial_bc", format!("{:?}", self.bc).to_lowercase());
                for r in &reps {
                    t.push(vec![r.r.into(), r.alpha.into(), r.mesh.into(), r.zero_modes.into(), r.min_positive.into(), r.window_count.into()])?;
                }
                if let Some(r) = reps.first() {
                    t.meta("delta", crate::output::format_float(r.delta));
                }
                t
            }
            Experiment::ParametrixScan => {
                let pts: Vec<(f64, f64)> = match self.side {
                    Side::Z1 => self.points.iter().map(|&(x, y)| (-x.abs(), -y.abs())).collect(),
                    Side::Z2 => self.points.iter().map(|&(x, y)| (x.abs(), y.abs())).collect(),
                    Side::Full => self.points.clone(),
                };
                let rep = parametrix_error_scan(self.side, self.component, self.outer, &self.r_grid, &self.t_grid, &pts, self.nodes)?;
                let mut t = Table::new(exp.name(), &["R", "t", "x", "x_prime", "true_kernel", "parametrix", "error", "residual"]);
                t.meta("side", format!("{:?}", self.side))
                    .meta("component", format!("{:?}", self.component))
                    .meta("outer", self.outer)
                    .meta("nodes", self.nodes)
                    .meta("sup_error_slope_vs_R2_over_t", crate::output::format_float(rep.slope))
                    .meta("max_residual", crate::output::format_float(rep.max_residual));
                for row in &rep.rows {
                    let s = &row.sample;
                    t.push(vec![row.r.into(), s.t.into(), s.x.into(), s.x_prime.into(), s.true_kernel.into(), s.parametrix.into(), s.error.into(), s.residual.into()])?;
                }
                t
            }
            Experiment::TimeSplit => {
                let m = ModelFibration { ly: self.ly, alpha: gluing::reduce_twist(self.alpha)?, a1: self.a1, a2: self.a2 };
                let mut t = Table::new(exp.name(), &["R", "split_time", "small", "large", "full", "error"]);
                t.meta("eps", self.eps).meta("L_Y", self.ly).meta("alpha", m.alpha).meta("a1", self.a1).meta("a2", self.a2);
                use rayon::prelude::*;
                let rows = self
                    .r_grid
                    .par_iter()
                    .map(|&r| time_split_contributions(&m, r, self.eps, k))
                    .collect::<Result<Vec<_>>>()?;
                for s in rows {
                    t.push(vec![s.r.into(), s.split_time.into(), s.small.into(), s.large.into(), s.full.into(), s.error.into()])?;
                }
                t
            }
            Experiment::CheegerMuller => {
                let mut t = Table::new(exp.name(), &["alpha", "L", "cells", "analytic", "reidemeister", "difference", "error_budget"]);
                t.meta("sign_calibration", gluing::CHEEGER_MULLER_SIGN);
                for &c in &self.cells {
                    let r = gluing::cheeger_muller_check(self.alpha, self.length, c, k)?;
                    t.push(vec![r.alpha.into(), r.l.into(), r.cells.into(), r.analytic.into(), r.reidemeister.into(), r.difference.into(), r.error_budget.into()])?;
                }
                t
            }
            Experiment::Spectrum => self.spectrum_table()?,
        };
        table.meta("truncation_K", k);
        Ok(table)
    }

    fn sweep_table(&self) -> Result<Table> {
        let model = match self.sweep {
            SweepKind::Circle => SweepModel::Circle { l1: self.length, l2: self.length2.unwrap_or(self.length) },
            SweepKind::Torus => SweepModel::Torus(ModelFibration {
                ly: self.ly,
                alpha: gluing::reduce_twist(self.alpha)?,
                a1: self.a1,
                a2: self.a2,
            }),
        };
        let sw = gluing::adiabatic_invariance_sweep(model, &self.r_grid, self.truncation)?;
        let mut t = Table::new(
            Experiment::AdiabaticSweep.name(),
            &["model", "L", "R", "alpha", "logT_Z", "logT_abs", "logT_rel", "T_f", "combination", "variation_identity"],
        );
        t.meta("max_deviation", crate::output::format_float(sw.max_deviation))
            .meta("max_variation_residual", crate::output::format_float(sw.max_variation_residual));
        for row in &sw.rows {
            let r = &row.report;
            t.push(vec![
                r.model.clone().into(),
                r.l.into(),
                r.r.into(),
                r.alpha.into(),
                r.log_t_z.into(),
                r.log_t_abs.into(),
                r.log_t_rel.into(),
                r.t_f.into(),
                row.combination.into(),
                row.variation_identity.map_or(Value::Text("NA".into()), Value::Float),
            ])?;
        }
        Ok(t)
    }

    fn spectrum_table(&self) -> Result<Table> {
        let (l, ly, a) = (self.length, self.ly, self.alpha);
        let s: SpectrumFamily = match self.spectrum {
            SpectrumModel::Circle => circle_spectrum(l, a)?,
            SpectrumModel::IntervalAbs => interval_spectrum(l, Boundary::Absolute)?,
            SpectrumModel::IntervalRel => interval_spectrum(l, Boundary::Relative)?,
            SpectrumModel::CylinderAbs => cylinder_spectrum(ly, a, l, Boundary::Absolute)?,
            SpectrumModel::CylinderRel => cylinder_spectrum(ly, a, l, Boundary::Relative)?,
            SpectrumModel::Torus => torus_spectrum(ly, a, l)?,
        };
        let k = self.truncation;
        let mut t = Table::new(Experiment::Spectrum.name(), &["degree", "zero_modes", "log_det_prime", "error", "lowest_positive"]);
        for p in 0..s.degrees.len() {
            let ld = zeta_log_det(&s, p, k)?;
            let low = s.enumerate(p, 4).into_iter().find(|&v| v > 1e-12).unwrap_or(f64::NAN);
            t.push(vec![p.into(), s.zero_modes(p).into(), ld.value.into(), ld.error.into(), low.into()])?;
        }
        let tor = analytic_torsion_log(&s, k)?;
        t.meta("model", format!("{:?}", self.spectrum))
            .meta("log_torsion", crate::output::format_float(tor.value))
            .meta("log_torsion_error", crate::output::format_float(tor.error));
        Ok(t)
    }
}

fn gluing_table(name: &str) -> Table {
    Table::new(
        name,
        &["model", "L", "R", "alpha", "logT_Z", "logT_abs", "logT_rel", "T_f", "euler_term", "residual", "error_budget"],
    )
}

fn push_gluing(t: &mut Table, r: &gluing::GluingReport) -> Result<()> {
    t.push(vec![
        r.model.clone().into(),
        r.l.into(),
        r.r.into(),
        r.alpha.into(),
        r.log_t_z.into(),
        r.log_t_abs.into(),
        r.log_t_rel.into(),
        r.t_f.into(),
        r.euler_term.into(),
        r.residual.into(),
        r.error_budget.into(),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_config_fills_defaults() {
        let c = ExperimentConfig::from_json(r#"{"experiment": "gap-scan", "alpha": 0.25, "r_grid": [2, 4]}"#).unwrap();
        assert_eq!(c.experiment, Some(Experiment::GapScan));
        assert_eq!(c.r_grid, vec![2.0, 4.0]);
        assert_eq!(c.mesh, 1.0 / 40.0);
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn integer_twist_is_a_validation_error() {
        let c = ExperimentConfig { experiment: Some(Experiment::TorusGluing), alpha: 1.0, ..Default::default() };
        assert!(c.validate().unwrap_err().is_validation());
        let c = ExperimentConfig { experiment: Some(Experiment::TorusGluing), alpha: 1.5, ..Default::default() };
        assert!(c.validate().is_ok());
    }
}
