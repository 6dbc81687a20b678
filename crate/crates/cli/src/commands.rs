//! Command dispatch.

use std::fmt;

use algcalc_core::dtensor::{transform_round_trip, DConnection, NormalDConnection};
use algcalc_core::lagrange::{
    build_gl_space, finsler_checks, hessian_metric, levi_civita_normal, recover_torsions,
    regularity_check, torsion_deform, FinslerTolerances, FundamentalFunction, TorsionConvention,
};
use algcalc_core::metric::{
    base_deform, berwald_canonical, canonical_dconnection, metrizability_residual, obata_deform, MetricStructure,
};
use algcalc_core::sampling::{self, generate, Residual, SampleSet};
use algcalc_core::{Error as CoreError, Point, Tensor};
use thiserror::Error;

use crate::config::{ConfigError, GeometryConfig, MetricSource, Tolerances};
use crate::report::{Entry, JsonPoint, Nested, Num, Report, Summary, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    CheckStructure,
    Connection,
    Metrizability,
    FinslerCheck,
    TransformCheck,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::CheckStructure => "check-structure",
            Command::Connection => "connection",
            Command::Metrizability => "metrizability",
            Command::FinslerCheck => "finsler-check",
            Command::TransformCheck => "transform-check",
            Command::Report => "report",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ConnectionKind {
    Berwald,
    Canonical,
    Obata,
    BaseDeform,
    LeviCivita,
    TorsionDeform,
}

impl ConnectionKind {
    pub const ALL: [ConnectionKind; 6] = [
        ConnectionKind::Canonical,
        ConnectionKind::Berwald,
        ConnectionKind::Obata,
        ConnectionKind::BaseDeform,
        ConnectionKind::LeviCivita,
        ConnectionKind::TorsionDeform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConnectionKind::Berwald => "berwald",
            ConnectionKind::Canonical => "canonical",
            ConnectionKind::Obata => "obata",
            ConnectionKind::BaseDeform => "base-deform",
            ConnectionKind::LeviCivita => "levi-civita",
            ConnectionKind::TorsionDeform => "torsion-deform",
        }
    }

    fn normal(self) -> bool {
        matches!(self, ConnectionKind::LeviCivita | ConnectionKind::TorsionDeform)
    }
}

impl fmt::Display for ConnectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Command-line overrides of the configuration.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub kind: Option<ConnectionKind>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub points: Option<usize>,
    /// Replaces the configured probes when non-empty.
    pub probes: Vec<Vec<f64>>,
    pub dump_samples: bool,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl RunError {
    /// 1 when evaluation itself failed at a sample, 2 for anything that
    /// makes the input unusable.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Core(CoreError::NonSmoothPoint(_) | CoreError::OrderExceeded { .. }) => 1,
            _ => 2,
        }
    }
}

type Result<T> = std::result::Result<T, RunError>;

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(RunError::Usage(msg.into()))
}

/// The configuration with overrides applied, plus its samples.
pub struct Session {
    pub cfg: GeometryConfig,
    pub samples: SampleSet,
    pub probes: Vec<Point>,
    pub tol: Tolerances,
    pub kind: Option<ConnectionKind>,
    pub dump_samples: bool,
}

impl Session {
    pub fn new(mut cfg: GeometryConfig, opts: &RunOptions) -> Result<Self> {
        if let Some(s) = opts.seed {
            cfg.sampling.seed = s;
        }
        if let Some(n) = opts.points {
            cfg.sampling.count = n;
        }
        let tol = opts.tol.map(Tolerances::uniform).unwrap_or(cfg.tolerances);
        let probes = if opts.probes.is_empty() {
            cfg.probes.clone()
        } else {
            opts.probes
                .iter()
                .map(|c| crate::config::probe_point(c, cfg.dims).map_err(|m| RunError::Usage(format!("--probe: {m}"))))
                .collect::<Result<_>>()?
        };
        let samples = generate(&cfg.sampling)?;
        Ok(Session {
            cfg,
            samples,
            probes,
            tol,
            kind: opts.kind,
            dump_samples: opts.dump_samples,
        })
    }

    fn report(&self, cmd: Command) -> Report {
        Report::new(cmd.name(), self.samples.spec.seed, self.samples.points.len())
    }

    /// Sample points followed by probes.
    fn checkpoints(&self) -> Vec<Point> {
        let mut pts = self.samples.points.clone();
        pts.extend(self.probes.iter().cloned());
        pts
    }

    fn fundamental(&self) -> Option<&FundamentalFunction> {
        match &self.cfg.metric {
            Some(MetricSource::Lagrangian(f) | MetricSource::Finsler(f)) => Some(f),
            _ => None,
        }
    }

    /// The metric structure; a fundamental function yields the structure
    /// with its Hessian on both blocks.
    fn metric(&self) -> Result<MetricStructure> {
        match &self.cfg.metric {
            Some(MetricSource::Blocks(g)) => Ok(g.clone()),
            Some(MetricSource::Lagrangian(f) | MetricSource::Finsler(f)) => {
                Ok(build_gl_space(&self.cfg.frame, &hessian_metric(f), &self.checkpoints())?)
            }
            None => usage("this command needs one of metric, lagrangian or finsler"),
        }
    }

    /// The vertical metric block used by the normal constructions.
    fn vertical_metric(&self) -> Result<Tensor> {
        match &self.cfg.metric {
            Some(MetricSource::Blocks(g)) => Ok(g.gv().clone()),
            Some(MetricSource::Lagrangian(f) | MetricSource::Finsler(f)) => Ok(hessian_metric(f)),
            None => usage("this command needs one of metric, lagrangian or finsler"),
        }
    }

    fn normal(&self, kind: ConnectionKind) -> Result<NormalDConnection> {
        let gv = self.vertical_metric()?;
        let lc = levi_civita_normal(&self.cfg.frame, &gv)?;
        match kind {
            ConnectionKind::LeviCivita => Ok(lc),
            _ => match &self.cfg.torsions {
                Some(ts) => Ok(torsion_deform(&lc, &gv, ts, &self.checkpoints())?),
                None => usage("torsion-deform needs torsions {T, S} in the config"),
            },
        }
    }

    /// The connection of `kind` and the metric it is compatible with.
    fn connection(&self, kind: ConnectionKind) -> Result<(DConnection, Option<MetricStructure>)> {
        let frame = &self.cfg.frame;
        if kind.normal() {
            let conn = self.normal(kind)?.to_dconnection();
            let g = build_gl_space(frame, &self.vertical_metric()?, &self.checkpoints())?;
            return Ok((conn, Some(g)));
        }
        if kind == ConnectionKind::Berwald && self.cfg.metric.is_none() {
            return Ok((DConnection::berwald(frame)?, None));
        }
        let g = self.metric()?;
        let conn = match kind {
            ConnectionKind::Berwald => berwald_canonical(&g, frame)?,
            ConnectionKind::Canonical => canonical_dconnection(&g, &self.cfg.base)?,
            ConnectionKind::Obata => obata_deform(&g, frame, &self.cfg.obata, self.cfg.obata_convention)?,
            _ => base_deform(&g, &self.cfg.base)?,
        };
        Ok((conn, Some(g)))
    }

    /// Kinds checked when no `--kind` is given.
    fn default_kinds(&self) -> Vec<ConnectionKind> {
        let square = self.cfg.p == self.cfg.dims.r;
        ConnectionKind::ALL
            .into_iter()
            .filter(|k| match k {
                ConnectionKind::LeviCivita => square && self.fundamental().is_some(),
                ConnectionKind::TorsionDeform => square && self.fundamental().is_some() && self.cfg.torsions.is_some(),
                _ => true,
            })
            .collect()
    }

    fn tables(&self, name: &str, items: &[(&str, &Tensor)]) -> Result<Vec<Table>> {
        let mut out = Vec::with_capacity(self.probes.len());
        for at in &self.probes {
            let mut entries = Vec::with_capacity(items.len());
            for (block, t) in items {
                let shape = t.shape().to_vec();
                let values = t.eval(at, 0)?.values();
                entries.push(Entry {
                    name: block.to_string(),
                    values: Nested::from_flat(&values, &shape),
                    shape,
                });
            }
            out.push(Table {
                name: name.to_string(),
                probe: JsonPoint::from(at),
                entries,
            });
        }
        Ok(out)
    }

    fn summarize(&self, name: &str, t: &Tensor) -> Result<Summary> {
        let e = sampling::tensor_max(t, &self.samples.points)?;
        Ok(Summary {
            name: name.to_string(),
            max: Num(e.value),
            argmax: e.argmax.map(|i| JsonPoint::from(&self.samples.points[i])),
        })
    }

    fn metrizability_into(&self, rep: &mut Report, kind: ConnectionKind, conn: &DConnection, g: &MetricStructure) -> Result<()> {
        let m = metrizability_residual(conn, g, &self.samples)?;
        for r in m.report(&self.samples, self.tol.metrizability).residuals {
            rep.push(&Residual { name: format!("{kind}.{}", r.name), ..r });
        }
        Ok(())
    }

    pub fn check_structure(&self, rep: &mut Report) -> Result<()> {
        let frame = &self.cfg.frame;
        let alg = frame.algebroid();
        let pts = &self.samples.points;
        rep.extend(&alg.validate_structure(&self.samples, self.tol.structure)?.residuals);
        let jac = alg.jacobi_residual_basis(&self.samples)?;
        rep.push(&Residual::new("jacobi", jac, self.tol.jacobi, None));
        let dual = sampling::sweep_max(pts, |at| frame.duality_residual(at))?;
        rep.push(&Residual::from_extremum("duality", &dual, self.tol.duality, pts));
        Ok(())
    }

    pub fn connection_report(&self, rep: &mut Report, kind: ConnectionKind) -> Result<()> {
        let (conn, g) = self.connection(kind)?;
        let blocks = conn.blocks();
        for (name, t) in blocks {
            rep.summary.push(self.summarize(&format!("{kind}.{name}"), t)?);
        }
        rep.tables.extend(self.tables(kind.name(), &blocks)?);
        if kind == ConnectionKind::Berwald && g.is_none() {
            rep.notes.push("no metric given: berwald is the plain Berwald connection".to_string());
        }
        if let Some(g) = &g {
            self.metrizability_into(rep, kind, &conn, g)?;
        }
        if kind.normal() {
            self.torsions_into(rep, kind)?;
        }
        Ok(())
    }

    fn torsions_into(&self, rep: &mut Report, kind: ConnectionKind) -> Result<()> {
        let conn = self.normal(kind)?;
        let pts = &self.samples.points;
        let ours = recover_torsions(&conn, TorsionConvention::Consistent)?;
        let theirs = recover_torsions(&conn, TorsionConvention::Printed)?;
        let name = format!("{kind}.torsion");
        rep.tables.extend(self.tables(&name, &[("T", &ours.t), ("S", &ours.s)])?);
        let gap = sampling::tensor_gap(&ours.t, &theirs.t, &self.checkpoints())?;
        if gap.value > 0.0 {
            rep.notes.push(format!(
                "{kind}: torsion T differs between the consistent (+L) and alternative (-L) sign of the structure term by up to {:.16e}",
                gap.value
            ));
            rep.tables.extend(self.tables(&format!("{name}.alternative"), &[("T", &theirs.t)])?);
        }
        match kind {
            ConnectionKind::LeviCivita => {
                for (n, t) in [("T", &ours.t), ("S", &ours.s)] {
                    let e = sampling::tensor_max(t, pts)?;
                    rep.push(&Residual::from_extremum(format!("{name}.{n}"), &e, self.tol.torsion, pts));
                }
            }
            _ => {
                let ts = self.cfg.torsions.as_ref().expect("checked by normal()");
                for (n, got, want) in [("T", &ours.t, &ts.t), ("S", &ours.s, &ts.s)] {
                    let e = sampling::tensor_gap(got, want, pts)?;
                    rep.push(&Residual::from_extremum(format!("{name}.{n}_recovery"), &e, self.tol.round_trip, pts));
                }
            }
        }
        Ok(())
    }

    pub fn metrizability(&self, rep: &mut Report) -> Result<()> {
        if self.cfg.metric.is_none() {
            return usage("metrizability needs one of metric, lagrangian or finsler");
        }
        // a singular metric is reported before any construction
        self.metric()?;
        let kinds = match self.kind {
            Some(k) => vec![k],
            None => self.default_kinds(),
        };
        for kind in kinds {
            let (conn, g) = self.connection(kind)?;
            let g = g.expect("metric present");
            self.metrizability_into(rep, kind, &conn, &g)?;
        }
        Ok(())
    }

    pub fn finsler_check(&self, rep: &mut Report) -> Result<()> {
        let Some(f) = self.fundamental() else {
            return usage("finsler-check needs a lagrangian or finsler function");
        };
        if let Some(MetricSource::Finsler(_)) = &self.cfg.metric {
            let tol = FinslerTolerances {
                homogeneity: self.tol.homogeneity,
                euler: self.tol.euler,
                contraction: self.tol.contraction,
            };
            rep.extend(&finsler_checks(f, &self.samples, &self.cfg.homogeneity_factors, tol)?.residuals);
        }
        rep.extend(&regularity_check(&hessian_metric(f), &self.samples)?.residuals);
        Ok(())
    }

    pub fn transform_check(&self, rep: &mut Report) -> Result<()> {
        let Some(fc) = &self.cfg.frame_change else {
            return usage("transform-check needs frame_change in the config");
        };
        rep.extend(&transform_round_trip(fc, &self.cfg.base, &self.samples, self.tol.round_trip)?.residuals);
        Ok(())
    }

    pub fn full(&self, rep: &mut Report) -> Result<()> {
        self.check_structure(rep)?;
        if self.cfg.metric.is_some() {
            let g = self.metric()?;
            let v = g.validate(&self.samples)?;
            rep.extend(&v.residuals);
            let sig = g.signature(&self.samples)?;
            rep.notes.push(format!(
                "signature (positive, negative, zero): horizontal {:?}, vertical {:?}, constant over samples: {}",
                sig.h, sig.v, sig.constant
            ));
            self.metrizability(rep)?;
        }
        if self.fundamental().is_some() {
            self.finsler_check(rep)?;
        }
        if self.cfg.frame_change.is_some() {
            self.transform_check(rep)?;
        }
        Ok(())
    }

    pub fn run(&self, cmd: Command) -> Result<Report> {
        let mut rep = self.report(cmd);
        match cmd {
            Command::CheckStructure => self.check_structure(&mut rep)?,
            Command::Connection => match self.kind {
                Some(k) => self.connection_report(&mut rep, k)?,
                None => return usage("connection needs --kind"),
            },
            Command::Metrizability => self.metrizability(&mut rep)?,
            Command::FinslerCheck => self.finsler_check(&mut rep)?,
            Command::TransformCheck => self.transform_check(&mut rep)?,
            Command::Report => self.full(&mut rep)?,
        }
        if self.dump_samples {
            rep.samples = Some(self.samples.points.iter().map(JsonPoint::from).collect());
        }
        Ok(rep)
    }
}

/// Report and exit code: 0 when every check passes, 1 otherwise.
pub fn run_command(cmd: Command, cfg: GeometryConfig, opts: &RunOptions) -> Result<(Report, i32)> {
    let rep = Session::new(cfg, opts)?.run(cmd)?;
    let code = if rep.pass { 0 } else { 1 };
    Ok((rep, code))
}

