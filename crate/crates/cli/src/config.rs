//! Loading and validating geometry configuration files.

use std::path::Path;

use algcalc_core::algebroid::{FrameDiffeoData, GeneralizedAlgebroid};
use algcalc_core::dtensor::DConnection;
use algcalc_core::field::{tensor_fn, FieldArray};
use algcalc_core::lagrange::{FundamentalFunction, TorsionPair};
use algcalc_core::lang::{self, Expr};
use algcalc_core::metric::{self, MetricStructure, ObataConvention, ObataData};
use algcalc_core::nlconn::{AdaptedFrame, FrameChange, NonlinearConnection};
use algcalc_core::sampling::{SampleSpec, DEFAULT_FIBER_FLOOR};
use algcalc_core::{linalg, Dims, Error as CoreError, Point, Tensor, Var};
use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("shape error at {field}: {message}")]
    Shape { field: String, message: String },

    #[error("dimension mismatch at {field}: {message}")]
    DimensionMismatch { field: String, message: String },

    #[error("{field}: {source}")]
    Expression {
        field: String,
        #[source]
        source: CoreError,
    },

    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    Version(u64),
}

impl ConfigError {
    fn shape(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Shape {
            field: field.into(),
            message: message.into(),
        }
    }

    fn dims(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::DimensionMismatch {
            field: field.into(),
            message: message.into(),
        }
    }

    fn expr(field: impl Into<String>, source: CoreError) -> Self {
        ConfigError::Expression {
            field: field.into(),
            source,
        }
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: u64,
    dims: RawDims,
    anchor: Option<Value>,
    structure: Option<Value>,
    frame: Option<RawFrame>,
    gamma: Option<Value>,
    metric: Option<RawMetric>,
    lagrangian: Option<String>,
    finsler: Option<String>,
    base: Option<Value>,
    obata: Option<RawObata>,
    frame_change: Option<RawFrameChange>,
    torsions: Option<RawTorsions>,
    #[serde(default)]
    sampling: RawSampling,
    #[serde(default)]
    tolerances: Tolerances,
    #[serde(default)]
    probes: Vec<Vec<f64>>,
    #[serde(default = "default_factors")]
    homogeneity_factors: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDims {
    m: usize,
    p: usize,
    r: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrame {
    theta: Value,
    theta_inv: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetric {
    h: Value,
    v: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObata {
    #[serde(default)]
    convention: RawObataConvention,
    xh: Option<Value>,
    yh: Option<Value>,
    xv: Option<Value>,
    yv: Option<Value>,
}

#[derive(Deserialize, Default, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum RawObataConvention {
    #[default]
    Consistent,
    Printed,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrameChange {
    lambda: Value,
    mmat: Value,
    basemap: Value,
    basemap_inverse: Value,
    lambda_inv: Option<Value>,
    mmat_inv: Option<Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTorsions {
    #[serde(rename = "T")]
    t: Value,
    #[serde(rename = "S")]
    s: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSampling {
    x_box: Option<Vec<[f64; 2]>>,
    y_box: Option<Vec<[f64; 2]>>,
    #[serde(default = "default_count")]
    count: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_floor")]
    fiber_floor: Option<f64>,
}

impl Default for RawSampling {
    fn default() -> Self {
        RawSampling {
            x_box: None,
            y_box: None,
            count: default_count(),
            seed: 0,
            fiber_floor: default_floor(),
        }
    }
}

fn default_count() -> usize {
    100
}

fn default_floor() -> Option<f64> {
    Some(DEFAULT_FIBER_FLOOR)
}

fn default_factors() -> Vec<f64> {
    vec![0.5, 2.0, 3.0]
}

/// Pass thresholds for every check.
#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub structure: f64,
    pub jacobi: f64,
    pub duality: f64,
    pub metrizability: f64,
    pub round_trip: f64,
    pub torsion: f64,
    pub homogeneity: f64,
    pub euler: f64,
    pub contraction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            structure: 1e-8,
            jacobi: 1e-8,
            duality: 1e-13,
            metrizability: 1e-8,
            round_trip: 1e-10,
            torsion: 1e-8,
            homogeneity: 1e-12,
            euler: 1e-10,
            contraction: 1e-8,
        }
    }
}

impl Tolerances {
    /// Every threshold set to `tol`.
    pub fn uniform(tol: f64) -> Self {
        Tolerances {
            structure: tol,
            jacobi: tol,
            duality: tol,
            metrizability: tol,
            round_trip: tol,
            torsion: tol,
            homogeneity: tol,
            euler: tol,
            contraction: tol,
        }
    }
}

/// Where the metric comes from.
#[derive(Clone)]
pub enum MetricSource {
    Blocks(MetricStructure),
    Lagrangian(FundamentalFunction),
    Finsler(FundamentalFunction),
}

/// A fully validated configuration.
#[derive(Clone)]
pub struct GeometryConfig {
    pub dims: Dims,
    pub p: usize,
    pub frame: AdaptedFrame,
    pub metric: Option<MetricSource>,
    /// Base connection for the canonical and base-deformed constructions.
    pub base: DConnection,
    pub obata: ObataData,
    pub obata_convention: ObataConvention,
    pub frame_change: Option<FrameChange>,
    pub torsions: Option<TorsionPair>,
    pub sampling: SampleSpec,
    pub tolerances: Tolerances,
    pub probes: Vec<Point>,
    pub homogeneity_factors: Vec<f64>,
}

pub fn load_config(path: &Path) -> Result<GeometryConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<GeometryConfig> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    build(raw)
}

/// Flattens a nested list of expression strings of the given shape,
/// recording the position of every entry.
fn entries(v: &Value, field: &str, shape: &[usize], out: &mut Vec<(String, String)>) -> Result<()> {
    match (shape.split_first(), v) {
        (None, Value::String(s)) => {
            out.push((field.to_string(), s.clone()));
            Ok(())
        }
        (None, _) => Err(ConfigError::shape(field, "expected an expression string")),
        (Some((&n, rest)), Value::Array(items)) => {
            if items.len() != n {
                return Err(ConfigError::shape(
                    field,
                    format!("expected {n} entries, found {}", items.len()),
                ));
            }
            for (i, item) in items.iter().enumerate() {
                entries(item, &format!("{field}[{i}]"), rest, out)?;
            }
            Ok(())
        }
        (Some((&n, _)), _) => Err(ConfigError::shape(field, format!("expected a list of {n} entries"))),
    }
}

struct Ctx {
    dims: Dims,
}

impl Ctx {
    fn exprs(&self, v: &Value, field: &str, shape: &[usize], x_only: bool) -> Result<Vec<(String, Expr)>> {
        let mut raw = Vec::new();
        entries(v, field, shape, &mut raw)?;
        raw.into_iter()
            .map(|(at, src)| {
                let e = lang::parse(&src, self.dims).map_err(|err| ConfigError::expr(&at, err))?;
                if x_only && e.variables().iter().any(|v| matches!(v, Var::Y(_))) {
                    return Err(ConfigError::expr(&at, CoreError::FiberDependence(at.clone())));
                }
                Ok((at, e))
            })
            .collect()
    }

    fn tensor_of(&self, exprs: Vec<(String, Expr)>, field: &str, shape: &[usize]) -> Result<Tensor> {
        let fields = exprs.into_iter().map(|(_, e)| lang::to_field(e, self.dims)).collect();
        FieldArray::new(self.dims, shape.to_vec(), fields)
            .map(FieldArray::into_tensor)
            .map_err(|e| ConfigError::expr(field, e))
    }

    fn tensor(&self, v: &Value, field: &str, shape: &[usize], x_only: bool) -> Result<Tensor> {
        let exprs = self.exprs(v, field, shape, x_only)?;
        self.tensor_of(exprs, field, shape)
    }

    /// A tensor that may also be given as the string `"zero"`.
    fn tensor_or_zero(&self, v: Option<&Value>, field: &str, shape: &[usize], x_only: bool) -> Result<Tensor> {
        match v {
            None => Ok(FieldArray::zeros(self.dims, shape.to_vec()).into_tensor()),
            Some(Value::String(s)) if s == "zero" => Ok(FieldArray::zeros(self.dims, shape.to_vec()).into_tensor()),
            Some(v) => self.tensor(v, field, shape, x_only),
        }
    }

    fn symmetric(&self, v: &Value, field: &str, n: usize) -> Result<Tensor> {
        let exprs = self.exprs(v, field, &[n, n], false)?;
        for i in 0..n {
            for j in i + 1..n {
                if exprs[i * n + j].1 != exprs[j * n + i].1 {
                    return Err(ConfigError::shape(
                        &exprs[i * n + j].0,
                        format!("differs from {}; metric blocks must be symmetric", exprs[j * n + i].0),
                    ));
                }
            }
        }
        self.tensor_of(exprs, field, &[n, n])
    }

    fn scalar(&self, src: &str, field: &str) -> Result<algcalc_core::Field> {
        lang::field(src, self.dims).map_err(|e| ConfigError::expr(field, e))
    }
}

/// Pointwise inverse of a square matrix field.
fn numeric_inverse(t: Tensor, n: usize, name: &'static str) -> Tensor {
    tensor_fn(t.dims(), vec![n, n], t.dependence(), move |at, order| {
        linalg::inverse_jets(&t.eval(at, order)?.data, n)
            .map_err(|_| CoreError::SingularTransition(format!("{name} is singular at {at:?}")))
    })
}

fn build(raw: RawConfig) -> Result<GeometryConfig> {
    if raw.schema_version != SCHEMA_VERSION {
        return Err(ConfigError::Version(raw.schema_version));
    }
    let RawDims { m, p, r } = raw.dims;
    if m == 0 || p == 0 || r == 0 {
        return Err(ConfigError::dims("dims", "m, p and r must be positive"));
    }
    let dims = Dims::new(m, r);
    let ctx = Ctx { dims };

    let mut probes = Vec::with_capacity(raw.probes.len());
    for (i, c) in raw.probes.iter().enumerate() {
        probes.push(probe_point(c, dims).map_err(|msg| ConfigError::dims(format!("probes[{i}]"), msg))?);
    }

    let algebroid = match (&raw.frame, &raw.anchor) {
        (Some(_), _) if raw.anchor.is_some() || raw.structure.is_some() => {
            return Err(ConfigError::shape("frame", "frame excludes anchor and structure"))
        }
        (Some(f), _) => {
            if p != m {
                return Err(ConfigError::dims("frame", format!("a base frame needs p = m (got p = {p}, m = {m})")));
            }
            let theta = ctx.tensor(&f.theta, "frame.theta", &[m, m], true)?;
            let inv = ctx.tensor(&f.theta_inv, "frame.theta_inv", &[m, m], true)?;
            FrameDiffeoData::new(dims, theta, inv)
                .and_then(|fd| fd.algebroid(&probes))
                .map_err(|e| ConfigError::expr("frame", e))?
        }
        (None, Some(a)) => {
            let anchor = ctx.tensor(a, "anchor", &[p, m], true)?;
            let structure = ctx.tensor_or_zero(raw.structure.as_ref(), "structure", &[p, p, p], true)?;
            GeneralizedAlgebroid::new(dims, p, anchor, structure).map_err(|e| ConfigError::expr("anchor", e))?
        }
        (None, None) => return Err(ConfigError::shape("anchor", "either anchor or frame is required")),
    };

    let connection = match &raw.gamma {
        Some(Value::Object(obj)) => {
            let e = match (obj.get("ehresmann"), obj.len()) {
                (Some(e), 1) => e,
                _ => return Err(ConfigError::shape("gamma", "expected \"zero\", an r x p list or {\"ehresmann\": r x m}")),
            };
            let t = ctx.tensor(e, "gamma.ehresmann", &[r, m], false)?;
            NonlinearConnection::from_ehresmann(&algebroid, t).map_err(|e| ConfigError::expr("gamma.ehresmann", e))?
        }
        g => {
            let t = ctx.tensor_or_zero(g.as_ref(), "gamma", &[r, p], false)?;
            NonlinearConnection::new(dims, p, t).map_err(|e| ConfigError::expr("gamma", e))?
        }
    };
    let frame = AdaptedFrame::new(algebroid, connection).map_err(|e| ConfigError::expr("gamma", e))?;

    let given = [raw.metric.is_some(), raw.lagrangian.is_some(), raw.finsler.is_some()];
    if given.iter().filter(|g| **g).count() > 1 {
        return Err(ConfigError::shape("metric", "metric, lagrangian and finsler are mutually exclusive"));
    }
    let metric = if let Some(g) = &raw.metric {
        let gh = ctx.symmetric(&g.h, "metric.h", p)?;
        let gv = ctx.symmetric(&g.v, "metric.v", r)?;
        Some(MetricSource::Blocks(MetricStructure::new(gh, gv).map_err(|e| ConfigError::expr("metric", e))?))
    } else if let Some(l) = &raw.lagrangian {
        Some(MetricSource::Lagrangian(FundamentalFunction::lagrange(ctx.scalar(l, "lagrangian")?)))
    } else {
        raw.finsler
            .as_ref()
            .map(|f| ctx.scalar(f, "finsler").map(|f| MetricSource::Finsler(FundamentalFunction::finsler(f))))
            .transpose()?
    };

    let base = match &raw.base {
        None => metric::berwald_base(&frame),
        Some(Value::String(s)) if s == "zero" => DConnection::zero(&frame),
        Some(Value::String(s)) if s == "berwald" => {
            DConnection::berwald(&frame).map_err(|e| ConfigError::expr("base", e))?
        }
        Some(Value::Object(obj)) => {
            for k in obj.keys() {
                if !["hh", "hv", "vh", "vv"].contains(&k.as_str()) {
                    return Err(ConfigError::shape(format!("base.{k}"), "unknown block"));
                }
            }
            let block = |name: &str, shape: [usize; 3]| {
                ctx.tensor_or_zero(obj.get(name), &format!("base.{name}"), &shape, false)
            };
            DConnection::new(
                frame.clone(),
                block("hh", [p, p, p])?,
                block("hv", [r, r, p])?,
                block("vh", [p, p, r])?,
                block("vv", [r, r, r])?,
            )
            .map_err(|e| ConfigError::expr("base", e))?
        }
        Some(_) => {
            return Err(ConfigError::shape(
                "base",
                "expected \"berwald\", \"zero\" or an object of blocks hh, hv, vh, vv",
            ))
        }
    };

    let (obata, obata_convention) = match &raw.obata {
        None => (ObataData::zero(dims, p), ObataConvention::Consistent),
        Some(o) => {
            let data = ObataData {
                xh: ctx.tensor_or_zero(o.xh.as_ref(), "obata.xh", &[p, p, p], false)?,
                yh: ctx.tensor_or_zero(o.yh.as_ref(), "obata.yh", &[r, r, p], false)?,
                xv: ctx.tensor_or_zero(o.xv.as_ref(), "obata.xv", &[p, p, r], false)?,
                yv: ctx.tensor_or_zero(o.yv.as_ref(), "obata.yv", &[r, r, r], false)?,
            };
            let conv = match o.convention {
                RawObataConvention::Consistent => ObataConvention::Consistent,
                RawObataConvention::Printed => ObataConvention::Printed,
            };
            (data, conv)
        }
    };

    let frame_change = raw
        .frame_change
        .as_ref()
        .map(|fc| -> Result<FrameChange> {
            let lambda = ctx.tensor(&fc.lambda, "frame_change.lambda", &[p, p], true)?;
            let mmat = ctx.tensor(&fc.mmat, "frame_change.mmat", &[r, r], true)?;
            let lambda_inv = match &fc.lambda_inv {
                Some(v) => ctx.tensor(v, "frame_change.lambda_inv", &[p, p], true)?,
                None => numeric_inverse(lambda.clone(), p, "lambda"),
            };
            let mmat_inv = match &fc.mmat_inv {
                Some(v) => ctx.tensor(v, "frame_change.mmat_inv", &[r, r], true)?,
                None => numeric_inverse(mmat.clone(), r, "mmat"),
            };
            let map = ctx.tensor(&fc.basemap, "frame_change.basemap", &[m], true)?;
            let back = ctx.tensor(&fc.basemap_inverse, "frame_change.basemap_inverse", &[m], true)?;
            FrameChange::new(dims, p, lambda, lambda_inv, mmat, mmat_inv, map, back)
                .map_err(|e| ConfigError::expr("frame_change", e))
        })
        .transpose()?;

    let torsions = raw
        .torsions
        .as_ref()
        .map(|t| -> Result<TorsionPair> {
            let tt = ctx.tensor(&t.t, "torsions.T", &[r, r, r], false)?;
            let ss = ctx.tensor(&t.s, "torsions.S", &[r, r, r], false)?;
            TorsionPair::new(tt, ss).map_err(|e| ConfigError::expr("torsions", e))
        })
        .transpose()?;

    let s = &raw.sampling;
    let boxes = |b: &Option<Vec<[f64; 2]>>, n: usize, name: &str| -> Result<Vec<(f64, f64)>> {
        match b {
            None => Ok(vec![(-1.0, 1.0); n]),
            Some(v) if v.len() == n => Ok(v.iter().map(|[lo, hi]| (*lo, *hi)).collect()),
            Some(v) => Err(ConfigError::dims(
                format!("sampling.{name}"),
                format!("expected {n} intervals, found {}", v.len()),
            )),
        }
    };
    let mut sampling = SampleSpec::new(boxes(&s.x_box, m, "x_box")?, boxes(&s.y_box, r, "y_box")?, s.count, s.seed);
    if let Some(f) = s.fiber_floor {
        sampling = sampling.with_fiber_floor(f);
    }

    Ok(GeometryConfig {
        dims,
        p,
        frame,
        metric,
        base,
        obata,
        obata_convention,
        frame_change,
        torsions,
        sampling,
        tolerances: raw.tolerances,
        probes,
        homogeneity_factors: raw.homogeneity_factors,
    })
}

/// Splits `x1, .., xm, y1, .., yr` into a point.
pub fn probe_point(coords: &[f64], dims: Dims) -> std::result::Result<Point, String> {
    if coords.len() != dims.nvars() {
        return Err(format!(
            "expected {} coordinates (m = {}, r = {}), found {}",
            dims.nvars(),
            dims.m,
            dims.r,
            coords.len()
        ));
    }
    if coords.iter().any(|c| !c.is_finite()) {
        return Err("coordinates must be finite".to_string());
    }
    Ok(Point::new(coords[..dims.m].to_vec(), coords[dims.m..].to_vec()))
}
