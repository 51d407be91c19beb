use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use torsionlab::adiabatic::AxialBc;
use torsionlab::config::{Experiment, ExperimentConfig, SpectrumModel, SweepKind};
use torsionlab::heat_parametrix::{Component, Side};
use torsionlab::Error;

#[derive(Parser, Debug)]
#[command(name = "torsionlab", version, about = "Analytic torsion experiments on model fibrations")]
struct Cli {
    /// JSON configuration; command-line flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the table here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Emit JSON instead of CSV.
    #[arg(long, global = true)]
    json: bool,
    /// Spectral truncation K.
    #[arg(long = "K", alias = "truncation", global = true)]
    truncation: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Gluing formula on the circle or the twisted torus.
    Glue {
        #[command(subcommand)]
        model: GlueModel,
    },
    /// Invariance of the gluing combination along the stretching parameter.
    Sweep {
        #[command(subcommand)]
        kind: SweepCmd,
    },
    /// Lattice spectrum of the stretched cylinder.
    GapScan(GapArgs),
    /// Duhamel check of the heat parametrix.
    ParametrixScan(ParametrixArgs),
    /// Small and large time pieces of the torsion integrand.
    TimeSplit(TimeSplitArgs),
    /// Analytic against combinatorial torsion of the twisted circle.
    CheegerMuller(CmArgs),
    /// Zeta-regularized determinants of a model spectrum.
    Spectrum(SpectrumArgs),
}

#[derive(Subcommand, Debug)]
enum GlueModel {
    Circle {
        #[arg(long = "L", alias = "length")]
        length: Option<f64>,
    },
    Torus(TorusArgs),
}

#[derive(Subcommand, Debug)]
enum SweepCmd {
    Adiabatic(SweepArgs),
}

#[derive(Args, Debug, Default)]
struct TorusArgs {
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long = "LY", alias = "ly")]
    ly: Option<f64>,
    #[arg(long)]
    a1: Option<f64>,
    #[arg(long)]
    a2: Option<f64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_enum, default_value = "circle")]
    model: SweepModelArg,
    #[arg(long = "L", alias = "length")]
    length: Option<f64>,
    /// Second arc length for the circle.
    #[arg(long = "L2", alias = "length2")]
    length2: Option<f64>,
    #[arg(long = "R", alias = "r-grid", value_delimiter = ',')]
    r_grid: Option<Vec<f64>>,
    #[command(flatten)]
    torus: TorusArgs,
}

#[derive(Args, Debug)]
struct GapArgs {
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long = "LY", alias = "ly")]
    ly: Option<f64>,
    #[arg(long)]
    mesh: Option<f64>,
    #[arg(long, value_enum)]
    bc: Option<BcArg>,
    #[arg(long = "R", alias = "r-grid", value_delimiter = ',')]
    r_grid: Option<Vec<f64>>,
    /// Allow an integer twist (the acyclicity hypothesis fails).
    #[arg(long)]
    allow_trivial: bool,
}

#[derive(Args, Debug)]
struct ParametrixArgs {
    #[arg(long, value_enum)]
    side: Option<SideArg>,
    #[arg(long, value_enum)]
    component: Option<ComponentArg>,
    #[arg(long)]
    outer: Option<f64>,
    #[arg(long = "R", alias = "r-grid", value_delimiter = ',')]
    r_grid: Option<Vec<f64>>,
    #[arg(long = "t", alias = "t-grid", value_delimiter = ',')]
    t_grid: Option<Vec<f64>>,
    #[arg(long)]
    nodes: Option<usize>,
}

#[derive(Args, Debug)]
struct TimeSplitArgs {
    #[arg(long = "R", alias = "r-grid", value_delimiter = ',')]
    r_grid: Option<Vec<f64>>,
    #[arg(long)]
    eps: Option<f64>,
    #[command(flatten)]
    torus: TorusArgs,
}

#[derive(Args, Debug)]
struct CmArgs {
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long = "L", alias = "length")]
    length: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    cells: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[arg(long, value_enum)]
    model: Option<SpectrumArg>,
    #[arg(long = "L", alias = "length")]
    length: Option<f64>,
    #[arg(long = "LY", alias = "ly")]
    ly: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SweepModelArg {
    Circle,
    Torus,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum BcArg {
    Closed,
    #[value(alias = "abs")]
    Absolute,
    #[value(alias = "rel")]
    Relative,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SideArg {
    Full,
    Z1,
    Z2,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ComponentArg {
    Function,
    Dx,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SpectrumArg {
    Circle,
    IntervalAbs,
    IntervalRel,
    CylinderAbs,
    CylinderRel,
    Torus,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_torus(c: &mut ExperimentConfig, t: TorusArgs) {
    set(&mut c.alpha, t.alpha);
    set(&mut c.ly, t.ly);
    set(&mut c.a1, t.a1);
    set(&mut c.a2, t.a2);
}

fn build_config(cli: Cli) -> Result<ExperimentConfig, Error> {
    let mut c = match &cli.config {
        Some(p) => {
            let s = std::fs::read_to_string(p).map_err(|e| Error::Invalid(format!("{}: {e}", p.display())))?;
            ExperimentConfig::from_json(&s)?
        }
        None => ExperimentConfig::default(),
    };
    set(&mut c.truncation, cli.truncation);
    if cli.out.is_some() {
        c.out = cli.out;
    }
    c.json |= cli.json;
    let exp = match cli.command {
        Command::Glue { model: GlueModel::Circle { length } } => {
            set(&mut c.length, length);
            Experiment::CircleGluing
        }
        Command::Glue { model: GlueModel::Torus(t) } => {
            apply_torus(&mut c, t);
            Experiment::TorusGluing
        }
        Command::Sweep { kind: SweepCmd::Adiabatic(a) } => {
            c.sweep = match a.model {
                SweepModelArg::Circle => SweepKind::Circle,
                SweepModelArg::Torus => SweepKind::Torus,
            };
            set(&mut c.length, a.length);
            if a.length2.is_some() {
                c.length2 = a.length2;
            }
            set(&mut c.r_grid, a.r_grid);
            apply_torus(&mut c, a.torus);
            Experiment::AdiabaticSweep
        }
        Command::GapScan(g) => {
            set(&mut c.alpha, g.alpha);
            set(&mut c.ly, g.ly);
            set(&mut c.mesh, g.mesh);
            set(
                &mut c.bc,
                g.bc.map(|b| match b {
                    BcArg::Closed => AxialBc::Closed,
                    BcArg::Absolute => AxialBc::Absolute,
                    BcArg::Relative => AxialBc::Relative,
                }),
            );
            set(&mut c.r_grid, g.r_grid);
            c.allow_trivial |= g.allow_trivial;
            Experiment::GapScan
        }
        Command::ParametrixScan(p) => {
            set(
                &mut c.side,
                p.side.map(|s| match s {
                    SideArg::Full => Side::Full,
                    SideArg::Z1 => Side::Z1,
                    SideArg::Z2 => Side::Z2,
                }),
            );
            set(
                &mut c.component,
                p.component.map(|s| match s {
                    ComponentArg::Function => Component::Function,
                    ComponentArg::Dx => Component::Dx,
                }),
            );
            set(&mut c.outer, p.outer);
            set(&mut c.r_grid, p.r_grid);
            set(&mut c.t_grid, p.t_grid);
            set(&mut c.nodes, p.nodes);
            Experiment::ParametrixScan
        }
        Command::TimeSplit(t) => {
            set(&mut c.r_grid, t.r_grid);
            set(&mut c.eps, t.eps);
            apply_torus(&mut c, t.torus);
            Experiment::TimeSplit
        }
        Command::CheegerMuller(m) => {
            set(&mut c.alpha, m.alpha);
            set(&mut c.length, m.length);
            set(&mut c.cells, m.cells);
            Experiment::CheegerMuller
        }
        Command::Spectrum(s) => {
            set(
                &mut c.spectrum,
                s.model.map(|m| match m {
                    SpectrumArg::Circle => SpectrumModel::Circle,
                    SpectrumArg::IntervalAbs => SpectrumModel::IntervalAbs,
                    SpectrumArg::IntervalRel => SpectrumModel::IntervalRel,
                    SpectrumArg::CylinderAbs => SpectrumModel::CylinderAbs,
                    SpectrumArg::CylinderRel => SpectrumModel::CylinderRel,
                    SpectrumArg::Torus => SpectrumModel::Torus,
                }),
            );
            set(&mut c.length, s.length);
            set(&mut c.ly, s.ly);
            set(&mut c.alpha, s.alpha);
            Experiment::Spectrum
        }
    };
    c.experiment = Some(exp);
    Ok(c)
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = build_config(cli)?;
    let table = cfg.run()?;
    let text = if cfg.json {
        let mut s = serde_json::to_string_pretty(&table.to_json()).expect("json serialization");
        s.push('\n');
        s
    } else {
        table.to_csv_string()?
    };
    match &cfg.out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Invalid(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(n) = std::env::var("TORSIONLAB_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: TORSIONLAB_THREADS must be a positive integer");
                return ExitCode::from(2);
            }
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
