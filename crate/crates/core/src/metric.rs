//! Block (pseudo)metrics on the adapted frame and connections compatible
//! with them.
//!
//! A [`MetricStructure`] holds `g_{alpha beta}` on the horizontal family and
//! `g_{ab}` on the vertical one. The constructors here all produce a
//! [`DConnection`] whose four covariant derivatives of the metric vanish;
//! [`metrizability_residual`] measures how far any connection is from that.

use std::collections::BTreeSet;

use crate::algebroid::next_order;
use crate::dtensor::{berwald_block, cov_deriv_jets, Blocks, DConnection, Family, IndexSignature, Slot};
use crate::error::{Error, Result};
use crate::field::{tensor_fn, Dims, Field, FieldArray, Point, Tensor, Var};
use crate::jet::Jet;
use crate::linalg;
use crate::nlconn::{AdaptedFrame, FrameJets};
use crate::sampling::{self, Extremum, Residual, SampleSet, ValidationReport};

/// Tolerance on `|g g~ - I|` for cached inverses.
pub const INVERSE_TOL: f64 = 1e-12;

/// Relative threshold below which a pivot counts as zero in signature counts.
pub const SIGNATURE_TOL: f64 = 1e-10;

/// Names of the four metrizability residuals, in order.
pub const METRIZABILITY_NAMES: [&str; 4] = ["gH|h", "gV|h", "gH|v", "gV|v"];

/// A pair of symmetric metric blocks.
#[derive(Clone)]
pub struct MetricStructure {
    dims: Dims,
    p: usize,
    r: usize,
    gh: Tensor,
    gv: Tensor,
    h_riemannian: bool,
    v_riemannian: bool,
}

fn symmetrized(t: Tensor, n: usize) -> Tensor {
    tensor_fn(t.dims(), vec![n, n], t.dependence(), move |at, order| {
        let mut d = t.eval(at, order)?.data;
        for i in 0..n {
            for j in i + 1..n {
                d[j * n + i] = d[i * n + j].clone();
            }
        }
        Ok(d)
    })
}

fn square_side(name: &str, t: &Tensor) -> Result<usize> {
    match t.shape()[..] {
        [a, b] if a == b && a > 0 => Ok(a),
        _ => Err(Error::DimensionMismatch(format!(
            "metric block {name} has shape {:?}, expected a square matrix",
            t.shape()
        ))),
    }
}

fn x_only(t: &Tensor) -> bool {
    t.dependence().iter().all(|v| matches!(v, Var::X(_)))
}

impl MetricStructure {
    /// Builds the structure from two square blocks. Only the upper triangle
    /// of each block is read; the lower one mirrors it.
    pub fn new(gh: Tensor, gv: Tensor) -> Result<Self> {
        let p = square_side("h", &gh)?;
        let r = square_side("v", &gv)?;
        let dims = gh.dims();
        if gv.dims() != dims {
            return Err(Error::DimensionMismatch("metric blocks over different coordinates".into()));
        }
        if r != dims.r {
            return Err(Error::DimensionMismatch(format!(
                "vertical block is {r}x{r} but the fiber has rank {}",
                dims.r
            )));
        }
        let (h_riemannian, v_riemannian) = (x_only(&gh), x_only(&gv));
        Ok(MetricStructure {
            dims,
            p,
            r,
            gh: symmetrized(gh, p),
            gv: symmetrized(gv, r),
            h_riemannian,
            v_riemannian,
        })
    }

    /// Row-major field lists of sizes `p * p` and `r * r`.
    pub fn from_fields(dims: Dims, p: usize, gh: Vec<Field>, gv: Vec<Field>) -> Result<Self> {
        let r = dims.r;
        let gh = FieldArray::new(dims, vec![p, p], gh)?.into_tensor();
        let gv = FieldArray::new(dims, vec![r, r], gv)?.into_tensor();
        Self::new(gh, gv)
    }

    /// Overrides the Riemannian flags, which default to whether each block
    /// is declared independent of the fiber coordinates.
    pub fn with_flags(mut self, h_riemannian: bool, v_riemannian: bool) -> Self {
        self.h_riemannian = h_riemannian;
        self.v_riemannian = v_riemannian;
        self
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn gh(&self) -> &Tensor {
        &self.gh
    }

    pub fn gv(&self) -> &Tensor {
        &self.gv
    }

    pub fn h_riemannian(&self) -> bool {
        self.h_riemannian
    }

    pub fn v_riemannian(&self) -> bool {
        self.v_riemannian
    }

    pub fn dependence(&self) -> BTreeSet<Var> {
        let mut d = self.gh.dependence();
        d.extend(self.gv.dependence());
        d
    }

    /// Both inverse blocks at one point.
    pub fn inverse_at(&self, at: &Point) -> Result<InverseCache> {
        let gh = self.gh.eval(at, 0)?.values();
        let gv = self.gv.eval(at, 0)?.values();
        let inv = |g: &[f64], n: usize, name: &str| {
            linalg::inverse(g, n).ok_or_else(|| {
                Error::SingularMetric(format!("{name} block is singular at {at:?}"))
            })
        };
        let h = inv(&gh, self.p, "horizontal")?;
        let v = inv(&gv, self.r, "vertical")?;
        let residual = linalg::identity_residual(&linalg::matmul(&gh, &h, self.p, self.p, self.p), &linalg::identity(self.p), self.p)
            .max(linalg::identity_residual(&linalg::matmul(&gv, &v, self.r, self.r, self.r), &linalg::identity(self.r), self.r));
        Ok(InverseCache { h, v, residual })
    }

    /// `(positive, negative, zero)` pivot counts of both blocks at a point.
    pub fn inertia_at(&self, at: &Point) -> Result<[(usize, usize, usize); 2]> {
        let gh = self.gh.eval(at, 0)?.values();
        let gv = self.gv.eval(at, 0)?.values();
        Ok([
            linalg::inertia(&gh, self.p, SIGNATURE_TOL),
            linalg::inertia(&gv, self.r, SIGNATURE_TOL),
        ])
    }

    /// Signature at every sample; `constant` says whether it never changes.
    pub fn signature(&self, samples: &SampleSet) -> Result<SignatureReport> {
        let mut first = None;
        let mut constant = true;
        for at in &samples.points {
            let s = self.inertia_at(at)?;
            match first {
                None => first = Some(s),
                Some(f) if f != s => constant = false,
                _ => {}
            }
        }
        Ok(SignatureReport {
            h: first.map(|s| s[0]),
            v: first.map(|s| s[1]),
            constant,
        })
    }

    /// Inverse residuals and, for flagged blocks, the largest fiber partial.
    pub fn validate(&self, samples: &SampleSet) -> Result<ValidationReport> {
        let (r, m) = (self.r, self.dims.m);
        let ext = sampling::sweep(&samples.points, 3, |at| {
            let c = self.inverse_at(at)?;
            let fiber = |t: &Tensor| -> Result<f64> {
                let mut worst = 0.0_f64;
                for j in t.eval(at, 1)?.data {
                    for a in 0..r {
                        worst = worst.max(j.d1(m + a).abs());
                    }
                }
                Ok(worst)
            };
            Ok(vec![c.residual, fiber(&self.gh)?, fiber(&self.gv)?])
        })?;
        let mut rep = ValidationReport::new(samples);
        rep.push(Residual::from_extremum("metric_inverse", &ext[0], INVERSE_TOL, &samples.points));
        if self.h_riemannian {
            rep.push(Residual::from_extremum("h_fiber_dependence", &ext[1], 0.0, &samples.points));
        }
        if self.v_riemannian {
            rep.push(Residual::from_extremum("v_fiber_dependence", &ext[2], 0.0, &samples.points));
        }
        Ok(rep)
    }

    fn check_frame(&self, frame: &AdaptedFrame) -> Result<()> {
        if frame.dims() != self.dims || frame.p() != self.p || frame.r() != self.r {
            return Err(Error::DimensionMismatch(format!(
                "metric has p = {}, r = {} over {:?}; frame has p = {}, r = {} over {:?}",
                self.p,
                self.r,
                self.dims,
                frame.p(),
                frame.r(),
                frame.dims()
            )));
        }
        Ok(())
    }

    fn jets(&self, frame: &AdaptedFrame, at: &Point, order: usize) -> Result<PointData> {
        let up = next_order(order)?;
        let gh = self.gh.eval(at, up)?.data;
        let gv = self.gv.eval(at, up)?.data;
        let gh0: Vec<Jet> = gh.iter().map(|j| j.truncate(order)).collect();
        let gv0: Vec<Jet> = gv.iter().map(|j| j.truncate(order)).collect();
        let hi = linalg::inverse_jets(&gh0, self.p)?;
        let vi = linalg::inverse_jets(&gv0, self.r)?;
        Ok(PointData {
            fr: frame.jets(at, order)?,
            l: frame.algebroid().structure().eval(at, order)?.data,
            gh,
            gv,
            gh0,
            gv0,
            hi,
            vi,
            zero: Jet::constant(0.0, self.dims.nvars(), order),
        })
    }
}

/// Pointwise inverses `g~^{alpha beta}` and `g~^{ab}`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct InverseCache {
    pub h: Vec<f64>,
    pub v: Vec<f64>,
    /// `max |g g~ - I|` over both blocks.
    pub residual: f64,
}

/// Pivot-sign counts of the first sample and whether they stayed put.
#[derive(Clone, Debug, PartialEq)]
pub struct SignatureReport {
    pub h: Option<(usize, usize, usize)>,
    pub v: Option<(usize, usize, usize)>,
    pub constant: bool,
}

/// Everything a connection formula needs at one point. Metric blocks carry
/// one order more than the rest.
struct PointData {
    fr: FrameJets,
    l: Vec<Jet>,
    gh: Vec<Jet>,
    gv: Vec<Jet>,
    gh0: Vec<Jet>,
    gv0: Vec<Jet>,
    hi: Vec<Jet>,
    vi: Vec<Jet>,
    zero: Jet,
}

fn h_sig() -> IndexSignature {
    IndexSignature::new(vec![Slot::H_DOWN, Slot::H_DOWN]).expect("two slots")
}

fn v_sig() -> IndexSignature {
    IndexSignature::new(vec![Slot::V_DOWN, Slot::V_DOWN]).expect("two slots")
}

impl PointData {
    /// Covariant derivatives of both metric blocks along one family.
    fn cov(&self, p: usize, r: usize, b: &Blocks, dir: Family) -> (Vec<Jet>, Vec<Jet>) {
        (
            cov_deriv_jets(&h_sig(), p, r, &self.gh, &self.fr, b, dir),
            cov_deriv_jets(&v_sig(), p, r, &self.gv, &self.fr, b, dir),
        )
    }
}

/// `out[a][b][c] = c0 * sum_e inv[a][e] t[e][b][c]` for `t` of shape
/// `[n, nb, nc]`.
fn raise(inv: &[Jet], n: usize, t: &[Jet], nb: usize, nc: usize, c0: f64, zero: &Jet) -> Vec<Jet> {
    let mut out = Vec::with_capacity(n * nb * nc);
    for a in 0..n {
        for b in 0..nb {
            for c in 0..nc {
                let mut s = zero.clone();
                for e in 0..n {
                    s = &s + &(&inv[a * n + e] * &t[(e * nb + b) * nc + c]);
                }
                out.push(s.scale(c0));
            }
        }
    }
    out
}

fn add_into(acc: &mut [Jet], extra: &[Jet]) {
    for (a, e) in acc.iter_mut().zip(extra) {
        *a = &*a + e;
    }
}

/// `[i][j][k] -> [j][i][k]` on a `[n, n, s]` array.
fn swap01(t: &[Jet], n: usize, s: usize) -> Vec<Jet> {
    let mut out = Vec::with_capacity(t.len());
    for j in 0..n {
        for i in 0..n {
            for k in 0..s {
                out.push(t[(i * n + j) * s + k].clone());
            }
        }
    }
    out
}

/// Horizontal block of the canonical connection.
fn canonical_hh(d: &PointData, p: usize) -> Result<Vec<Jet>> {
    // dg[e][b][c] = delta_c g_{eb}
    let mut dg = Vec::with_capacity(p * p * p);
    for j in &d.gh {
        dg.extend(d.fr.deltas(j)?);
    }
    let g = &d.gh0;
    let l = &d.l;
    let gi = |i: usize, j: usize| &g[i * p + j];
    let li = |t: usize, a: usize, b: usize| &l[(t * p + a) * p + b];
    let mut inner = Vec::with_capacity(p * p * p);
    for e in 0..p {
        for b in 0..p {
            for c in 0..p {
                let mut s = &(&dg[(e * p + b) * p + c] + &dg[(e * p + c) * p + b]) - &dg[(b * p + c) * p + e];
                for t in 0..p {
                    s = &s + &(gi(t, e) * li(t, c, b));
                    s = &s - &(gi(b, t) * li(t, c, e));
                    s = &s - &(gi(t, c) * li(t, b, e));
                }
                inner.push(s);
            }
        }
    }
    Ok(raise(&d.hi, p, &inner, p, p, 0.5, &d.zero))
}

/// Vertical Christoffel block `1/2 g~^{ad}(d_c g_db + d_b g_dc - d_d g_bc)`.
fn canonical_vv(d: &PointData, r: usize) -> Result<Vec<Jet>> {
    let mut dg = Vec::with_capacity(r * r * r);
    for j in &d.gv {
        dg.extend(d.fr.verticals(j)?);
    }
    let mut inner = Vec::with_capacity(r * r * r);
    for e in 0..r {
        for b in 0..r {
            for c in 0..r {
                inner.push(&(&dg[(e * r + b) * r + c] + &dg[(e * r + c) * r + b]) - &dg[(b * r + c) * r + e]);
            }
        }
    }
    Ok(raise(&d.vi, r, &inner, r, r, 0.5, &d.zero))
}

fn canonical_blocks(d: &PointData, p: usize, r: usize, base: &Blocks) -> Result<Blocks> {
    let gv_h = cov_deriv_jets(&v_sig(), p, r, &d.gv, &d.fr, base, Family::H);
    let gh_v = cov_deriv_jets(&h_sig(), p, r, &d.gh, &d.fr, base, Family::V);
    let mut hv = base.hv.clone();
    // g_{bc|gamma} stored [b][c][gamma]; contract the second index
    add_into(&mut hv, &raise(&d.vi, r, &swap01(&gv_h, r, p), r, p, 0.5, &d.zero));
    let mut vh = base.vh.clone();
    add_into(&mut vh, &raise(&d.hi, p, &swap01(&gh_v, p, r), p, r, 0.5, &d.zero));
    Ok(Blocks {
        hh: canonical_hh(d, p)?,
        hv,
        vh,
        vv: canonical_vv(d, r)?,
    })
}

fn base_blocks(d: &PointData, p: usize, r: usize, base: &Blocks) -> Blocks {
    let (gh_h, gv_h) = d.cov(p, r, base, Family::H);
    let (gh_v, gv_v) = d.cov(p, r, base, Family::V);
    let mut out = Blocks {
        hh: base.hh.clone(),
        hv: base.hv.clone(),
        vh: base.vh.clone(),
        vv: base.vv.clone(),
    };
    add_into(&mut out.hh, &raise(&d.hi, p, &gh_h, p, p, 0.5, &d.zero));
    add_into(&mut out.hv, &raise(&d.vi, r, &gv_h, r, p, 0.5, &d.zero));
    add_into(&mut out.vh, &raise(&d.hi, p, &gh_v, p, r, 0.5, &d.zero));
    add_into(&mut out.vv, &raise(&d.vi, r, &gv_v, r, r, 0.5, &d.zero));
    out
}

/// Builds a connection whose blocks are computed jointly at each point from
/// the metric data and an optional base connection.
fn build<F>(g: &MetricStructure, frame: &AdaptedFrame, base: Option<&DConnection>, extra: BTreeSet<Var>, f: F) -> Result<DConnection>
where
    F: Fn(&PointData, &Blocks, &Point, usize) -> Result<Blocks> + Send + Sync + 'static,
{
    g.check_frame(frame)?;
    let (p, r) = (g.p, g.r);
    let mut deps = g.dependence();
    deps.extend(frame.dependence());
    deps.extend(extra);
    let base = base.cloned();
    if let Some(b) = &base {
        deps.extend(b.dependence());
    }
    let g = g.clone();
    let fr = frame.clone();
    let total = p * p * p + r * r * p + p * p * r + r * r * r;
    let joint = tensor_fn(g.dims, vec![total], deps, move |at, order| {
        let d = g.jets(&fr, at, order)?;
        let b = match &base {
            Some(b) => b.eval_blocks(at, order)?,
            None => Blocks {
                hh: vec![d.zero.clone(); p * p * p],
                hv: vec![d.zero.clone(); r * r * p],
                vh: vec![d.zero.clone(); p * p * r],
                vv: vec![d.zero.clone(); r * r * r],
            },
        };
        Ok(f(&d, &b, at, order)?.concat())
    });
    DConnection::from_joint(frame.clone(), joint)
}

/// The canonical metric connection built over `base`.
pub fn canonical_dconnection(g: &MetricStructure, base: &DConnection) -> Result<DConnection> {
    let (p, r) = (g.p, g.r);
    build(g, base.frame(), Some(base), BTreeSet::new(), move |d, b, _, _| canonical_blocks(d, p, r, b))
}

/// Base connection with `d Gamma / dy` in the mixed horizontal block and
/// zeros elsewhere. Defined for any `p`, `r`.
pub fn berwald_base(frame: &AdaptedFrame) -> DConnection {
    let (p, r, d) = (frame.p(), frame.r(), frame.dims());
    let z = |s: Vec<usize>| FieldArray::zeros(d, s).into_tensor();
    DConnection::new(frame.clone(), z(vec![p, p, p]), berwald_block(frame), z(vec![p, p, r]), z(vec![r, r, r]))
        .expect("block shapes")
}

/// The canonical connection over [`berwald_base`].
pub fn berwald_canonical(g: &MetricStructure, frame: &AdaptedFrame) -> Result<DConnection> {
    canonical_dconnection(g, &berwald_base(frame))
}

/// Every block moved by half the raised covariant derivative of the metric
/// with respect to `base`.
pub fn base_deform(g: &MetricStructure, base: &DConnection) -> Result<DConnection> {
    let (p, r) = (g.p, g.r);
    build(g, base.frame(), Some(base), BTreeSet::new(), move |d, b, _, _| Ok(base_blocks(d, p, r, b)))
}

/// Obata operators at one point, stored `[upper1][upper2][lower1][lower2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObataPair {
    pub p: usize,
    pub r: usize,
    pub h: Vec<f64>,
    pub h_star: Vec<f64>,
    pub v: Vec<f64>,
    pub v_star: Vec<f64>,
}

impl ObataPair {
    /// `O^{alpha eps}_{beta gamma}` (zero-based).
    pub fn oh(&self, al: usize, ep: usize, be: usize, ga: usize) -> f64 {
        self.h[obata_index(self.p, al, ep, be, ga)]
    }

    pub fn oh_star(&self, al: usize, ep: usize, be: usize, ga: usize) -> f64 {
        self.h_star[obata_index(self.p, al, ep, be, ga)]
    }

    pub fn ov(&self, a: usize, e: usize, b: usize, c: usize) -> f64 {
        self.v[obata_index(self.r, a, e, b, c)]
    }

    pub fn ov_star(&self, a: usize, e: usize, b: usize, c: usize) -> f64 {
        self.v_star[obata_index(self.r, a, e, b, c)]
    }

    /// Largest `|O + O* - delta delta|` over both families.
    pub fn sum_defect(&self) -> f64 {
        let one = |n: usize, o: &[f64], s: &[f64]| {
            let mut worst = 0.0_f64;
            for (k, (a, b)) in o.iter().zip(s).enumerate() {
                worst = worst.max((a + b - kron_pattern(n, k)).abs());
            }
            worst
        };
        one(self.p, &self.h, &self.h_star).max(one(self.r, &self.v, &self.v_star))
    }
}

fn obata_index(n: usize, a: usize, e: usize, b: usize, c: usize) -> usize {
    ((a * n + e) * n + b) * n + c
}

/// `delta^a_b delta^e_c` at flat index `[a][e][b][c]`.
fn kron_pattern(n: usize, k: usize) -> f64 {
    let c = k % n;
    let b = (k / n) % n;
    let e = (k / (n * n)) % n;
    let a = k / (n * n * n);
    if a == b && e == c {
        1.0
    } else {
        0.0
    }
}

/// Splits `1/2 (dd -+ g g~)` so that the two halves add up to `dd` with no
/// rounding.
fn obata_arrays(g: &[f64], gi: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let len = n * n * n * n;
    let mut o = Vec::with_capacity(len);
    let mut s = Vec::with_capacity(len);
    for k in 0..len {
        let c = k % n;
        let b = (k / n) % n;
        let e = (k / (n * n)) % n;
        let a = k / (n * n * n);
        let q = 0.5 * (g[b * n + c] * gi[a * n + e]);
        if kron_pattern(n, k) == 0.0 {
            o.push(-q);
            s.push(q);
        } else {
            // 1 - t is exact for t in [1/2, 2^53], and t + (1 - t) rounds to 1
            let t = 0.5 + q.abs();
            if q >= 0.0 {
                o.push(1.0 - t);
                s.push(t);
            } else {
                o.push(t);
                s.push(1.0 - t);
            }
        }
    }
    (o, s)
}

pub fn obata_pair(g: &MetricStructure, at: &Point) -> Result<ObataPair> {
    let inv = g.inverse_at(at)?;
    let gh = g.gh.eval(at, 0)?.values();
    let gv = g.gv.eval(at, 0)?.values();
    let (h, h_star) = obata_arrays(&gh, &inv.h, g.p);
    let (v, v_star) = obata_arrays(&gv, &inv.v, g.r);
    Ok(ObataPair {
        p: g.p,
        r: g.r,
        h,
        h_star,
        v,
        v_star,
    })
}

/// Index placement used when contracting the Obata operators.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ObataConvention {
    /// `O^{alpha eps}_{eta beta} X^eta_{eps gamma}` in every block; the
    /// result is metric compatible.
    #[default]
    Consistent,
    /// `O^{alpha eps}_{gamma eta} X^eta_{eps beta}` in the horizontal
    /// blocks and the starred operator in the vertical ones.
    Printed,
}

/// Deformation tensors, each stored `[upper][lower][dir]`.
#[derive(Clone)]
pub struct ObataData {
    /// `X^eta_{eps beta}`, `p x p x p`.
    pub xh: Tensor,
    /// `Y^d_{e gamma}`, `r x r x p`.
    pub yh: Tensor,
    /// `X^eta_{eps c}`, `p x p x r`.
    pub xv: Tensor,
    /// `Y^d_{e c}`, `r x r x r`.
    pub yv: Tensor,
}

impl ObataData {
    pub fn zero(dims: Dims, p: usize) -> Self {
        let r = dims.r;
        let z = |s: Vec<usize>| FieldArray::zeros(dims, s).into_tensor();
        ObataData {
            xh: z(vec![p, p, p]),
            yh: z(vec![r, r, p]),
            xv: z(vec![p, p, r]),
            yv: z(vec![r, r, r]),
        }
    }

    fn check(&self, dims: Dims, p: usize) -> Result<()> {
        let r = dims.r;
        for (name, t, s) in [
            ("X (horizontal)", &self.xh, [p, p, p]),
            ("Y (horizontal)", &self.yh, [r, r, p]),
            ("X (vertical)", &self.xv, [p, p, r]),
            ("Y (vertical)", &self.yv, [r, r, r]),
        ] {
            if t.shape() != s || t.dims() != dims {
                return Err(Error::DimensionMismatch(format!(
                    "{name} has shape {:?}, expected {s:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    fn dependence(&self) -> BTreeSet<Var> {
        let mut d = self.xh.dependence();
        for t in [&self.yh, &self.xv, &self.yv] {
            d.extend(t.dependence());
        }
        d
    }
}

/// `O` (sign -1) or `O*` (sign +1) entry `[a][e][b][c]` from jets.
fn obata_jet(g: &[Jet], gi: &[Jet], n: usize, sign: f64, a: usize, e: usize, b: usize, c: usize) -> Jet {
    let gg = (&g[b * n + c] * &gi[a * n + e]).scale(sign);
    let dd = if a == b && e == c { 1.0 } else { 0.0 };
    gg.add_scalar(dd).scale(0.5)
}

/// `sum_{e,h} op(a, e, b, h) * x[h][e][c]` for every `[a][b][c]`, where `x`
/// has shape `[n, n, s]`.
fn obata_contract<F>(n: usize, s: usize, x: &[Jet], zero: &Jet, op: F) -> Vec<Jet>
where
    F: Fn(usize, usize, usize, usize, usize) -> Jet,
{
    let mut out = Vec::with_capacity(n * n * s);
    for a in 0..n {
        for b in 0..n {
            for c in 0..s {
                let mut acc = zero.clone();
                for e in 0..n {
                    for h in 0..n {
                        acc = &acc + &(&op(a, e, b, h, c) * &x[(h * n + e) * s + c]);
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

fn obata_corrections(d: &PointData, p: usize, r: usize, x: [&[Jet]; 4], conv: ObataConvention) -> [Vec<Jet>; 4] {
    let (gh, hi, gv, vi, z) = (&d.gh0, &d.hi, &d.gv0, &d.vi, &d.zero);
    match conv {
        ObataConvention::Consistent => [
            obata_contract(p, p, x[0], z, |a, e, b, h, _| obata_jet(gh, hi, p, -1.0, a, e, h, b)),
            obata_contract(r, p, x[1], z, |a, e, b, h, _| obata_jet(gv, vi, r, -1.0, a, e, h, b)),
            obata_contract(p, r, x[2], z, |a, e, b, h, _| obata_jet(gh, hi, p, -1.0, a, e, h, b)),
            obata_contract(r, r, x[3], z, |a, e, b, h, _| obata_jet(gv, vi, r, -1.0, a, e, h, b)),
        ],
        ObataConvention::Printed => [
            // O^{a e}_{c h} X^h_{e b}: the direction sits on the operator
            printed_hh(p, x[0], gh, hi, z),
            obata_contract(r, p, x[1], z, |a, e, b, h, _| obata_jet(gv, vi, r, -1.0, a, e, b, h)),
            obata_contract(p, r, x[2], z, |a, e, b, h, _| obata_jet(gh, hi, p, 1.0, a, e, b, h)),
            obata_contract(r, r, x[3], z, |a, e, b, h, _| obata_jet(gv, vi, r, 1.0, a, e, b, h)),
        ],
    }
}

fn printed_hh(p: usize, x: &[Jet], g: &[Jet], gi: &[Jet], zero: &Jet) -> Vec<Jet> {
    let mut out = Vec::with_capacity(p * p * p);
    for a in 0..p {
        for b in 0..p {
            for c in 0..p {
                let mut acc = zero.clone();
                for e in 0..p {
                    for h in 0..p {
                        acc = &acc + &(&obata_jet(g, gi, p, -1.0, a, e, c, h) * &x[(h * p + e) * p + b]);
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

/// [`berwald_canonical`] deformed by Obata contractions of `data`.
pub fn obata_deform(
    g: &MetricStructure,
    frame: &AdaptedFrame,
    data: &ObataData,
    convention: ObataConvention,
) -> Result<DConnection> {
    data.check(g.dims, g.p)?;
    g.check_frame(frame)?;
    let (p, r) = (g.p, g.r);
    let data = data.clone();
    let base = berwald_base(frame);
    build(g, frame, Some(&base), data.dependence(), move |d, b, at, order| {
        let mut out = canonical_blocks(d, p, r, b)?;
        let xs = [
            data.xh.eval(at, order)?.data,
            data.yh.eval(at, order)?.data,
            data.xv.eval(at, order)?.data,
            data.yv.eval(at, order)?.data,
        ];
        let [hh, hv, vh, vv] = obata_corrections(d, p, r, [&xs[0], &xs[1], &xs[2], &xs[3]], convention);
        add_into(&mut out.hh, &hh);
        add_into(&mut out.hv, &hv);
        add_into(&mut out.vh, &vh);
        add_into(&mut out.vv, &vv);
        Ok(out)
    })
}

/// Largest component of each covariant derivative of the metric, in the
/// order of [`METRIZABILITY_NAMES`].
#[derive(Clone, Debug, PartialEq)]
pub struct Metrizability {
    pub residuals: [Extremum; 4],
}

impl Metrizability {
    pub fn h_metrizable(&self, tol: f64) -> bool {
        self.residuals[0].value <= tol && self.residuals[1].value <= tol
    }

    pub fn v_metrizable(&self, tol: f64) -> bool {
        self.residuals[2].value <= tol && self.residuals[3].value <= tol
    }

    pub fn metrizable(&self, tol: f64) -> bool {
        self.h_metrizable(tol) && self.v_metrizable(tol)
    }

    pub fn max(&self) -> f64 {
        self.residuals.iter().map(|e| e.value).fold(0.0, f64::max)
    }

    pub fn report(&self, samples: &SampleSet, tol: f64) -> ValidationReport {
        let mut rep = ValidationReport::new(samples);
        for (name, e) in METRIZABILITY_NAMES.iter().zip(&self.residuals) {
            rep.push(Residual::from_extremum(*name, e, tol, &samples.points));
        }
        rep
    }
}

/// The four covariant derivatives of the metric at one point.
pub fn metrizability_at(conn: &DConnection, g: &MetricStructure, at: &Point) -> Result<[f64; 4]> {
    g.check_frame(conn.frame())?;
    let (p, r) = (g.p, g.r);
    let fr = conn.frame().jets(at, 0)?;
    let b = conn.eval_blocks(at, 0)?;
    let gh = g.gh.eval(at, 1)?.data;
    let gv = g.gv.eval(at, 1)?.data;
    // a singular metric is not a metrical structure
    linalg::inverse_jets(&gh, p)?;
    linalg::inverse_jets(&gv, r)?;
    let worst = |v: Vec<Jet>| sampling::max_abs(v.iter().map(Jet::value));
    Ok([
        worst(cov_deriv_jets(&h_sig(), p, r, &gh, &fr, &b, Family::H)),
        worst(cov_deriv_jets(&v_sig(), p, r, &gv, &fr, &b, Family::H)),
        worst(cov_deriv_jets(&h_sig(), p, r, &gh, &fr, &b, Family::V)),
        worst(cov_deriv_jets(&v_sig(), p, r, &gv, &fr, &b, Family::V)),
    ])
}

pub fn metrizability_residual(conn: &DConnection, g: &MetricStructure, samples: &SampleSet) -> Result<Metrizability> {
    let ext = sampling::sweep(&samples.points, 4, |at| Ok(metrizability_at(conn, g, at)?.to_vec()))?;
    let residuals: [Extremum; 4] = ext.try_into().expect("four slots");
    Ok(Metrizability { residuals })
}

/// `H ++ V` of the Levi-Civita type normal connection, both `r x r x r`;
/// they are the canonical `hh` and `vv` blocks when `p = r`.
pub(crate) fn levi_civita_joint(g: &MetricStructure, frame: &AdaptedFrame) -> Result<Tensor> {
    g.check_frame(frame)?;
    let r = g.r;
    let mut deps = g.dependence();
    deps.extend(frame.dependence());
    let (g, fr) = (g.clone(), frame.clone());
    Ok(tensor_fn(g.dims, vec![2 * r * r * r], deps, move |at, order| {
        let d = g.jets(&fr, at, order)?;
        let mut out = canonical_hh(&d, r)?;
        out.extend(canonical_vv(&d, r)?);
        Ok(out)
    }))
}

/// Raises the first index of `t[e][b][c]` with the vertical inverse metric
/// and scales by `c0`, jointly with a base tensor: `base + c0 g~ t`.
pub(crate) fn raise_v_fn<F>(g: &MetricStructure, shape_n: usize, deps: BTreeSet<Var>, f: F) -> Tensor
where
    F: Fn(&Point, usize, &[Jet]) -> Result<(Vec<Jet>, Vec<Jet>)> + Send + Sync + 'static,
{
    let g = g.clone();
    let n = shape_n;
    let mut all = g.dependence();
    all.extend(deps);
    tensor_fn(g.dims, vec![n, n, n], all, move |at, order| {
        let gv: Vec<Jet> = g.gv.eval(at, order)?.data;
        let vi = linalg::inverse_jets(&gv, n)?;
        let (base, t) = f(at, order, &gv)?;
        let zero = Jet::constant(0.0, g.dims.nvars(), order);
        let mut out = base;
        add_into(&mut out, &raise(&vi, n, &t, n, n, 0.5, &zero));
        Ok(out)
    })
}
