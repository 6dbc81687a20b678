//! Lagrange and Finsler metrics on the fibers, and the normal connections
//! built from them. Everything here needs `p = r`.

use std::collections::BTreeSet;

use crate::dtensor::{sub_tensor, NormalDConnection};
use crate::error::{Error, Result};
use crate::field::{tensor_fn, Dims, Field, Point, Tensor};
use crate::jet::Jet;
use crate::linalg;
use crate::metric::{self, MetricStructure};
use crate::nlconn::AdaptedFrame;
use crate::sampling::{self, Residual, SampleSet, ValidationReport};

/// Relative pivot threshold for positive-definiteness.
pub const PD_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Lagrange,
    Finsler,
}

/// A Lagrangian `L(x, y)` or a Finsler norm `F(x, y)`.
#[derive(Clone)]
pub struct FundamentalFunction {
    kind: Kind,
    f: Field,
}

impl FundamentalFunction {
    pub fn lagrange(f: Field) -> Self {
        FundamentalFunction {
            kind: Kind::Lagrange,
            f,
        }
    }

    pub fn finsler(f: Field) -> Self {
        FundamentalFunction {
            kind: Kind::Finsler,
            f,
        }
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn field(&self) -> &Field {
        &self.f
    }

    pub fn dims(&self) -> Dims {
        self.f.dims()
    }

    /// `L`, or `F^2` for the Finsler kind.
    fn energy(&self, at: &Point, order: usize) -> Result<Jet> {
        let j = self.f.jet(at, order)?;
        Ok(match self.kind {
            Kind::Lagrange => j,
            Kind::Finsler => &j * &j,
        })
    }
}

/// `g_ab = 1/2 d^2 L / dy^a dy^b`, with `F^2` in place of `L` for Finsler
/// functions.
pub fn hessian_metric(f: &FundamentalFunction) -> Tensor {
    let d = f.dims();
    let (m, r) = (d.m, d.r);
    let f = f.clone();
    tensor_fn(d, vec![r, r], f.f.dependence(), move |at, order| {
        let e = f.energy(at, order + 2)?;
        let mut out = vec![Jet::constant(0.0, d.nvars(), order); r * r];
        for a in 0..r {
            let ea = e.partial(m + a)?;
            for b in a..r {
                let h = ea.partial(m + b)?.scale(0.5);
                out[b * r + a] = h.clone();
                out[a * r + b] = h;
            }
        }
        Ok(out)
    })
}

/// `r - rank(g)` at the worst sample; passes only when it is zero.
pub fn regularity_check(g: &Tensor, samples: &SampleSet) -> Result<ValidationReport> {
    let r = g.shape()[0];
    let ext = sampling::sweep_max(&samples.points, |at| {
        let v = g.eval(at, 0)?.values();
        Ok((r - linalg::rank(&v, r, r, linalg::RANK_TOL)) as f64)
    })?;
    let mut rep = ValidationReport::new(samples);
    rep.push(Residual::from_extremum("rank_deficit", &ext, 0.0, &samples.points));
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FinslerTolerances {
    pub homogeneity: f64,
    pub euler: f64,
    /// Tolerance on `|y^a y^b g_ab - F^2|`.
    pub contraction: f64,
}

impl Default for FinslerTolerances {
    fn default() -> Self {
        FinslerTolerances {
            homogeneity: 1e-12,
            euler: 1e-10,
            contraction: 1e-8,
        }
    }
}

/// Homogeneity, Euler, metric-contraction and positive-definiteness checks
/// for a Finsler norm. `indefinite` is 1 when some pivot of the metric falls
/// below [`PD_TOL`] (relative) at a sample, with the first such sample as
/// its argmax.
pub fn finsler_checks(
    f: &FundamentalFunction,
    samples: &SampleSet,
    lambdas: &[f64],
    tol: FinslerTolerances,
) -> Result<ValidationReport> {
    if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Error::Invalid(format!("homogeneity factor {l} is not positive")));
    }
    let d = f.dims();
    let (m, r) = (d.m, d.r);
    let g = hessian_metric(f);
    let field = f.field().clone();
    let ext = sampling::sweep(&samples.points, 4, |at| {
        let fj = field.jet(at, 1)?;
        let f0 = fj.value();
        let mut hom = 0.0_f64;
        for &l in lambdas {
            let scaled = Point::new(at.x.clone(), at.y.iter().map(|v| l * v).collect());
            let fl = field.jet(&scaled, 0)?.value();
            hom = hom.max((fl - l * f0).abs());
        }
        let euler: f64 = (0..r).map(|a| at.y[a] * fj.d1(m + a)).sum::<f64>() - f0;
        let gv = g.eval(at, 0)?.values();
        let mut yy = 0.0;
        for a in 0..r {
            for b in 0..r {
                yy += at.y[a] * at.y[b] * gv[a * r + b];
            }
        }
        let indefinite = !positive_definite(&gv, r);
        Ok(vec![hom, euler.abs(), (yy - f0 * f0).abs(), if indefinite { 1.0 } else { 0.0 }])
    })?;
    let mut rep = ValidationReport::new(samples);
    let pts = &samples.points;
    rep.push(Residual::from_extremum("homogeneity", &ext[0], tol.homogeneity, pts));
    rep.push(Residual::from_extremum("euler", &ext[1], tol.euler, pts));
    rep.push(Residual::from_extremum("metric_contraction", &ext[2], tol.contraction, pts));
    rep.push(Residual::from_extremum("indefinite", &ext[3], 0.0, pts));
    Ok(rep)
}

/// All symmetric pivots above [`PD_TOL`] relative to the largest entry.
pub fn positive_definite(a: &[f64], n: usize) -> bool {
    let scale = sampling::max_abs(a.iter().copied()).max(f64::MIN_POSITIVE);
    linalg::symmetric_pivots(a, n).iter().all(|p| *p > PD_TOL * scale)
}

fn require_square(frame: &AdaptedFrame) -> Result<()> {
    if frame.p() != frame.r() {
        return Err(Error::DimensionMismatch(format!(
            "needs p = r (got p = {}, r = {})",
            frame.p(),
            frame.r()
        )));
    }
    Ok(())
}

/// The structure `G = g dz dz + g dy dy` with one block used twice. Fails
/// with `SingularMetric` if `g` degenerates at any probe.
pub fn build_gl_space(frame: &AdaptedFrame, g: &Tensor, probes: &[Point]) -> Result<MetricStructure> {
    require_square(frame)?;
    let gs = MetricStructure::new(g.clone(), g.clone())?;
    for at in probes {
        gs.inverse_at(at)?;
    }
    Ok(gs)
}

/// The torsion-free normal connection of Levi-Civita type for `g`.
pub fn levi_civita_normal(frame: &AdaptedFrame, g: &Tensor) -> Result<NormalDConnection> {
    require_square(frame)?;
    let gs = MetricStructure::new(g.clone(), g.clone())?;
    let r = frame.r();
    let joint = metric::levi_civita_joint(&gs, frame)?;
    let h = sub_tensor(&joint, 0, vec![r, r, r]);
    let v = sub_tensor(&joint, r * r * r, vec![r, r, r]);
    NormalDConnection::new(frame.clone(), h, v)
}

/// Prescribed torsions `T^a_{bc}` and `S^a_{bc}`, stored `[a][b][c]`.
#[derive(Clone)]
pub struct TorsionPair {
    pub t: Tensor,
    pub s: Tensor,
}

impl TorsionPair {
    pub fn new(t: Tensor, s: Tensor) -> Result<Self> {
        let r = t.dims().r;
        for (name, x) in [("T", &t), ("S", &s)] {
            if x.shape() != [r, r, r] || x.dims() != t.dims() {
                return Err(Error::DimensionMismatch(format!(
                    "torsion {name} has shape {:?}, expected [{r}, {r}, {r}]",
                    x.shape()
                )));
            }
        }
        Ok(TorsionPair { t, s })
    }

    /// Largest `|X^a_{bc} + X^a_{cb}|` over both tensors at the points.
    pub fn antisymmetry_residual(&self, points: &[Point]) -> Result<f64> {
        let r = self.t.dims().r;
        let mut worst = 0.0_f64;
        for at in points {
            for x in [&self.t, &self.s] {
                let v = x.eval(at, 0)?.values();
                for a in 0..r {
                    for b in 0..r {
                        for c in 0..r {
                            worst = worst.max((v[(a * r + b) * r + c] + v[(a * r + c) * r + b]).abs());
                        }
                    }
                }
            }
        }
        Ok(worst)
    }

    pub fn check_antisymmetry(&self, points: &[Point], tol: f64) -> Result<()> {
        let res = self.antisymmetry_residual(points)?;
        if !(res <= tol) {
            return Err(Error::AntisymmetryViolation(format!(
                "|X^a_bc + X^a_cb| reaches {res:e}"
            )));
        }
        Ok(())
    }
}

/// Tolerance for the antisymmetry check in [`torsion_deform`].
pub const ANTISYMMETRY_TOL: f64 = 1e-12;

/// `base + 1/2 g~^{ae}(g_ed X^d_bc - g_bd X^d_ec + g_cd X^d_be)` for both
/// blocks, with `X = T` on `H` and `X = S` on `V`. Antisymmetry is checked
/// at `probes`.
pub fn torsion_deform(
    base: &NormalDConnection,
    g: &Tensor,
    ts: &TorsionPair,
    probes: &[Point],
) -> Result<NormalDConnection> {
    let frame = base.frame();
    require_square(frame)?;
    ts.check_antisymmetry(probes, ANTISYMMETRY_TOL)?;
    let gs = MetricStructure::new(g.clone(), g.clone())?;
    let r = frame.r();
    let deform = |b: &Tensor, x: &Tensor| {
        let (b, x) = (b.clone(), x.clone());
        let mut deps = b.dependence();
        deps.extend(x.dependence());
        metric::raise_v_fn(&gs, r, deps, move |at, order, gv| {
            let base = b.eval(at, order)?.data;
            let xv = x.eval(at, order)?.data;
            let lower = |e: usize, b: usize, c: usize| {
                (0..r).fold(Jet::constant(0.0, gv[0].nvars(), order), |s, d| {
                    &s + &(&gv[e * r + d] * &xv[(d * r + b) * r + c])
                })
            };
            let mut t = Vec::with_capacity(r * r * r);
            for e in 0..r {
                for b in 0..r {
                    for c in 0..r {
                        let s = &lower(e, b, c) - &lower(b, e, c);
                        t.push(&s + &lower(c, b, e));
                    }
                }
            }
            Ok((base, t))
        })
    };
    NormalDConnection::new(frame.clone(), deform(base.h(), &ts.t), deform(base.v(), &ts.s))
}

/// Sign of the structure-function term when reading torsion back.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TorsionConvention {
    /// `T = H_bc - H_cb + L_bc`; zero for the Levi-Civita type connection.
    #[default]
    Consistent,
    /// `T = H_bc - H_cb - L_bc`.
    Printed,
}

/// `T^a_{bc}` and `S^a_{bc}` of a normal connection.
pub fn recover_torsions(conn: &NormalDConnection, convention: TorsionConvention) -> Result<TorsionPair> {
    let frame = conn.frame();
    require_square(frame)?;
    let r = frame.r();
    let sign = match convention {
        TorsionConvention::Consistent => 1.0,
        TorsionConvention::Printed => -1.0,
    };
    let skew = |x: &Tensor, l: Option<Tensor>| {
        let x = x.clone();
        let mut deps: BTreeSet<_> = x.dependence();
        if let Some(l) = &l {
            deps.extend(l.dependence());
        }
        tensor_fn(x.dims(), vec![r, r, r], deps, move |at, order| {
            let v = x.eval(at, order)?.data;
            let lv = match &l {
                Some(l) => Some(l.eval(at, order)?.data),
                None => None,
            };
            let mut out = Vec::with_capacity(r * r * r);
            for a in 0..r {
                for b in 0..r {
                    for c in 0..r {
                        let mut s = &v[(a * r + b) * r + c] - &v[(a * r + c) * r + b];
                        if let Some(lv) = &lv {
                            s = &s + &lv[(a * r + b) * r + c].scale(sign);
                        }
                        out.push(s);
                    }
                }
            }
            Ok(out)
        })
    };
    let l = frame.algebroid().structure().clone();
    TorsionPair::new(skew(conn.h(), Some(l)), skew(conn.v(), None))
}
