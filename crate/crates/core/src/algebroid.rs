//! Generalized Lie algebroids in local coordinates.
//!
//! An algebroid of rank `p` over the base `x1..xm` is given by its anchor
//! `rho^i_alpha(x)` (stored `[alpha][i]`) and structure functions
//! `L^gamma_{alpha beta}(x)` (stored `[gamma][alpha][beta]`). Sections of the
//! generalized tangent bundle have `p` horizontal components `Z^alpha` and
//! `r` vertical components `Y^a`.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::field::{
    self, component, tensor_fn, union_deps, Dims, Field, FieldArray, Point, Tensor, Var,
};
use crate::jet::{Jet, MAX_ORDER};
use crate::linalg;
use crate::nlconn::NonlinearConnection;
use crate::sampling::{self, max_abs, Residual, SampleSet, ValidationReport};

fn order_up(order: usize) -> Result<usize> {
    if order + 1 > MAX_ORDER {
        Err(Error::OrderExceeded {
            requested: order + 1,
            max: MAX_ORDER,
        })
    } else {
        Ok(order + 1)
    }
}

pub(crate) fn next_order(order: usize) -> Result<usize> {
    order_up(order)
}

fn require_x_only(name: &str, t: &Tensor) -> Result<()> {
    if t.dependence().iter().any(|v| matches!(v, Var::Y(_))) {
        return Err(Error::FiberDependence(name.to_string()));
    }
    Ok(())
}

fn check_shape(name: &str, t: &Tensor, dims: Dims, shape: &[usize]) -> Result<()> {
    if t.shape() != shape || t.dims() != dims {
        return Err(Error::DimensionMismatch(format!(
            "{name}: shape {:?} over {:?}, expected {:?} over {:?}",
            t.shape(),
            t.dims(),
            shape,
            dims
        )));
    }
    Ok(())
}

/// Builds a tensor from nested per-component fields, rejecting ragged input.
pub fn nested2(dims: Dims, name: &str, rows: Vec<Vec<Field>>, shape: [usize; 2]) -> Result<Tensor> {
    if rows.len() != shape[0] || rows.iter().any(|r| r.len() != shape[1]) {
        return Err(Error::DimensionMismatch(format!("{name} must be {}x{}", shape[0], shape[1])));
    }
    Ok(FieldArray::new(dims, shape.to_vec(), rows.into_iter().flatten().collect())?.into_tensor())
}

pub fn nested3(
    dims: Dims,
    name: &str,
    blocks: Vec<Vec<Vec<Field>>>,
    shape: [usize; 3],
) -> Result<Tensor> {
    if blocks.len() != shape[0]
        || blocks
            .iter()
            .any(|b| b.len() != shape[1] || b.iter().any(|r| r.len() != shape[2]))
    {
        return Err(Error::DimensionMismatch(format!(
            "{name} must be {}x{}x{}",
            shape[0], shape[1], shape[2]
        )));
    }
    Ok(FieldArray::new(
        dims,
        shape.to_vec(),
        blocks.into_iter().flatten().flatten().collect(),
    )?
    .into_tensor())
}

#[derive(Clone)]
pub struct GeneralizedAlgebroid {
    dims: Dims,
    p: usize,
    anchor: Tensor,
    structure: Tensor,
}

impl GeneralizedAlgebroid {
    /// `anchor` has shape `[p, m]`, `structure` shape `[p, p, p]`; both must
    /// depend on the base coordinates only.
    pub fn new(dims: Dims, p: usize, anchor: Tensor, structure: Tensor) -> Result<Self> {
        if dims.m == 0 {
            return Err(Error::DimensionMismatch("base dimension m must be >= 1".to_string()));
        }
        if p == 0 {
            return Err(Error::DimensionMismatch("rank p must be >= 1".to_string()));
        }
        check_shape("anchor", &anchor, dims, &[p, dims.m])?;
        check_shape("structure", &structure, dims, &[p, p, p])?;
        require_x_only("anchor", &anchor)?;
        require_x_only("structure", &structure)?;
        Ok(GeneralizedAlgebroid {
            dims,
            p,
            anchor,
            structure,
        })
    }

    /// The tangent algebroid: identity anchor, zero structure functions.
    pub fn standard(dims: Dims) -> Self {
        let m = dims.m;
        let anchor = (0..m * m)
            .map(|k| field::constant(dims, if k / m == k % m { 1.0 } else { 0.0 }))
            .collect();
        let anchor = FieldArray::new(dims, vec![m, m], anchor).expect("shape").into_tensor();
        let structure = FieldArray::zeros(dims, vec![m, m, m]).into_tensor();
        Self::new(dims, m, anchor, structure).expect("valid")
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn m(&self) -> usize {
        self.dims.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn r(&self) -> usize {
        self.dims.r
    }

    pub fn anchor(&self) -> &Tensor {
        &self.anchor
    }

    pub fn structure(&self) -> &Tensor {
        &self.structure
    }

    /// `rho^i_alpha` as a scalar field (zero-based indices).
    pub fn rho(&self, alpha: usize, i: usize) -> Field {
        component(&self.anchor, &[alpha, i])
    }

    /// `L^gamma_{alpha beta}` as a scalar field (zero-based indices).
    pub fn l(&self, gamma: usize, alpha: usize, beta: usize) -> Field {
        component(&self.structure, &[gamma, alpha, beta])
    }

    /// Antisymmetry and anchor-compatibility residuals at one point.
    pub fn structure_residuals_at(&self, at: &Point) -> Result<[f64; 2]> {
        let (m, p) = (self.m(), self.p);
        let rho = self.anchor.eval(at, 1)?.data;
        let l = self.structure.eval(at, 0)?.values();
        let lv = |g: usize, a: usize, b: usize| l[(g * p + a) * p + b];
        let mut anti = 0.0_f64;
        let mut compat = 0.0_f64;
        for a in 0..p {
            for b in 0..p {
                for g in 0..p {
                    anti = anti.max((lv(g, a, b) + lv(g, b, a)).abs());
                }
                for k in 0..m {
                    let lhs: f64 = (0..p).map(|g| lv(g, a, b) * rho[g * m + k].value()).sum();
                    let rhs: f64 = (0..m)
                        .map(|i| {
                            rho[a * m + i].value() * rho[b * m + k].d1(i)
                                - rho[b * m + i].value() * rho[a * m + k].d1(i)
                        })
                        .sum();
                    compat = compat.max((lhs - rhs).abs());
                }
            }
        }
        Ok([anti, compat])
    }

    /// Reports `antisymmetry` and `anchor_compatibility` maxima over the
    /// samples.
    pub fn validate_structure(&self, samples: &SampleSet, tol: f64) -> Result<ValidationReport> {
        let pts = &samples.points;
        for p in pts {
            self.dims.check(p)?;
        }
        let ex = sampling::sweep(pts, 2, |p| Ok(self.structure_residuals_at(p)?.to_vec()))?;
        let mut rep = ValidationReport::new(samples);
        rep.push(Residual::from_extremum("antisymmetry", &ex[0], tol, pts));
        rep.push(Residual::from_extremum("anchor_compatibility", &ex[1], tol, pts));
        Ok(rep)
    }

    /// The anchor action of `x` on `f`: `Z^alpha rho^i_alpha df/dx^i + Y^a
    /// df/dy^a`. With a connection, `x` is read in the adapted basis, so the
    /// horizontal part acts through `rho^i_alpha d_i - Gamma^a_alpha d_a`.
    pub fn anchor_action(
        &self,
        conn: Option<&NonlinearConnection>,
        x: &Section,
        f: &Field,
    ) -> Result<Field> {
        self.check_section(x)?;
        if f.dims() != self.dims {
            return Err(Error::DimensionMismatch("anchor action argument".to_string()));
        }
        if let Some(c) = conn {
            c.check_against(self)?;
        }
        let this = self.clone();
        let conn = conn.cloned();
        let (x, f) = (x.clone(), f.clone());
        let mut deps = union_deps([&f]);
        deps.extend(x.comps.dependence());
        deps.extend(self.anchor.dependence());
        if let Some(c) = &conn {
            deps.extend(c.gamma().dependence());
        }
        Ok(field::from_fn(self.dims, deps, move |at, order| {
            let (z, y) = x.eval(at, order)?;
            let rho = this.anchor.eval(at, order)?.data;
            let gamma = match &conn {
                Some(c) => Some(c.gamma().eval(at, order)?.data),
                None => None,
            };
            let grad = f.jet(at, order_up(order)?)?.gradient()?;
            Ok(this.apply_anchor(&z, &y, &rho, gamma.as_deref(), &grad, order))
        }))
    }

    /// Jet-level anchor action given the gradient of the argument.
    pub(crate) fn apply_anchor(
        &self,
        z: &[Jet],
        y: &[Jet],
        rho: &[Jet],
        gamma: Option<&[Jet]>,
        grad: &[Jet],
        order: usize,
    ) -> Jet {
        let (m, p) = (self.m(), self.p);
        let mut acc = Jet::constant(0.0, self.dims.nvars(), order);
        for alpha in 0..p {
            let mut c = Jet::constant(0.0, self.dims.nvars(), order);
            for i in 0..m {
                c = &c + &(&rho[alpha * m + i] * &grad[i]);
            }
            if let Some(g) = gamma {
                for a in 0..self.r() {
                    c = &c - &(&g[a * p + alpha] * &grad[m + a]);
                }
            }
            acc = &acc + &(&z[alpha] * &c);
        }
        for a in 0..self.r() {
            acc = &acc + &(&y[a] * &grad[m + a]);
        }
        acc
    }

    fn check_section(&self, x: &Section) -> Result<()> {
        if x.p != self.p || x.r != self.r() || x.comps.dims() != self.dims {
            return Err(Error::DimensionMismatch(format!(
                "section with ({}, {}) components, algebroid expects ({}, {})",
                x.p,
                x.r,
                self.p,
                self.r()
            )));
        }
        Ok(())
    }

    /// The bracket of two sections of the generalized tangent bundle.
    pub fn bracket(&self, x1: &Section, x2: &Section) -> Result<Section> {
        self.check_section(x1)?;
        self.check_section(x2)?;
        let (p, r) = (self.p, self.r());
        let this = self.clone();
        let (a, b) = (x1.clone(), x2.clone());
        let mut deps = a.comps.dependence();
        deps.extend(b.comps.dependence());
        deps.extend(self.anchor.dependence());
        deps.extend(self.structure.dependence());
        let t = tensor_fn(self.dims, vec![p + r], deps, move |at, order| {
            let up = order_up(order)?;
            let (z1, y1) = a.eval(at, up)?;
            let (z2, y2) = b.eval(at, up)?;
            let rho = this.anchor.eval(at, order)?.data;
            let l = this.structure.eval(at, order)?.data;
            let act = |z: &[Jet], y: &[Jet], g: &Jet| -> Result<Jet> {
                Ok(this.apply_anchor(z, y, &rho, None, &g.gradient()?, order))
            };
            let mut out = Vec::with_capacity(p + r);
            for g in 0..p {
                let mut h = Jet::constant(0.0, this.dims.nvars(), order);
                for al in 0..p {
                    for be in 0..p {
                        let c = &l[(g * p + al) * p + be];
                        h = &h + &(&(&z1[al] * &z2[be]) * c);
                    }
                }
                h = &h + &act(&z1, &y1, &z2[g])?;
                h = &h - &act(&z2, &y2, &z1[g])?;
                out.push(h);
            }
            for c in 0..r {
                out.push(&act(&z1, &y1, &y2[c])? - &act(&z2, &y2, &y1[c])?);
            }
            Ok(out)
        });
        Section::from_tensor(p, r, t)
    }

    /// Cyclic sum `[[X,Y],Z] + [[Y,Z],X] + [[Z,X],Y]`.
    pub fn jacobiator(&self, x: &Section, y: &Section, z: &Section) -> Result<Section> {
        let a = self.bracket(&self.bracket(x, y)?, z)?;
        let b = self.bracket(&self.bracket(y, z)?, x)?;
        let c = self.bracket(&self.bracket(z, x)?, y)?;
        Ok(a.add(&b)?.add(&c)?)
    }

    /// Max-norm of the cyclic sum of one triple over the samples.
    pub fn jacobi_residual(&self, samples: &SampleSet, triple: [&Section; 3]) -> Result<f64> {
        let j = self.jacobiator(triple[0], triple[1], triple[2])?;
        let e = sampling::sweep_max(&samples.points, |pt| {
            Ok(max_abs(j.comps.eval(pt, 0)?.values()))
        })?;
        Ok(e.value)
    }

    /// Constant basis sections: `p` horizontal then `r` vertical.
    pub fn basis(&self) -> Vec<Section> {
        (0..self.p)
            .map(|a| Section::basis_h(self.dims, self.p, a))
            .chain((0..self.r()).map(|a| Section::basis_v(self.dims, self.p, a)))
            .collect()
    }

    /// Largest Jacobi residual over all triples of basis sections.
    pub fn jacobi_residual_basis(&self, samples: &SampleSet) -> Result<f64> {
        let basis = self.basis();
        let n = basis.len();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let v = self.jacobi_residual(samples, [&basis[i], &basis[j], &basis[k]])?;
                    worst = if v.is_nan() { f64::INFINITY } else { worst.max(v) };
                }
            }
        }
        Ok(worst)
    }
}

/// A section `Z^alpha e_alpha + Y^a e_a` with components stored as one
/// tensor of shape `[p + r]`.
#[derive(Clone)]
pub struct Section {
    p: usize,
    r: usize,
    comps: Tensor,
}

impl Section {
    pub fn new(dims: Dims, z: Vec<Field>, y: Vec<Field>) -> Result<Self> {
        if y.len() != dims.r {
            return Err(Error::DimensionMismatch(format!(
                "{} vertical components, fiber has {}",
                y.len(),
                dims.r
            )));
        }
        let p = z.len();
        let comps: Vec<Field> = z.into_iter().chain(y).collect();
        let t = FieldArray::new(dims, vec![comps.len()], comps)?.into_tensor();
        Ok(Section { p, r: dims.r, comps: t })
    }

    pub fn from_tensor(p: usize, r: usize, comps: Tensor) -> Result<Self> {
        if comps.shape() != [p + r] {
            return Err(Error::DimensionMismatch(format!(
                "section tensor shape {:?}, expected [{}]",
                comps.shape(),
                p + r
            )));
        }
        Ok(Section { p, r, comps })
    }

    fn unit(dims: Dims, p: usize, k: usize) -> Self {
        let comps = (0..p + dims.r)
            .map(|j| field::constant(dims, if j == k { 1.0 } else { 0.0 }))
            .collect();
        let t = FieldArray::new(dims, vec![p + dims.r], comps)
            .expect("shape")
            .into_tensor();
        Section { p, r: dims.r, comps: t }
    }

    /// The horizontal basis section `e_alpha` (zero-based).
    pub fn basis_h(dims: Dims, p: usize, alpha: usize) -> Self {
        Self::unit(dims, p, alpha)
    }

    /// The vertical basis section `e_a` (zero-based).
    pub fn basis_v(dims: Dims, p: usize, a: usize) -> Self {
        Self::unit(dims, p, p + a)
    }

    pub fn zero(dims: Dims, p: usize) -> Self {
        Self::unit(dims, p, usize::MAX)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn dims(&self) -> Dims {
        self.comps.dims()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.comps
    }

    pub fn z(&self, alpha: usize) -> Field {
        component(&self.comps, &[alpha])
    }

    pub fn y(&self, a: usize) -> Field {
        component(&self.comps, &[self.p + a])
    }

    /// Horizontal and vertical component jets.
    pub fn eval(&self, at: &Point, order: usize) -> Result<(Vec<Jet>, Vec<Jet>)> {
        let mut all = self.comps.eval(at, order)?.data;
        let y = all.split_off(self.p);
        Ok((all, y))
    }

    /// Component values `(Z, Y)` at a point.
    pub fn values(&self, at: &Point) -> Result<(Vec<f64>, Vec<f64>)> {
        let (z, y) = self.eval(at, 0)?;
        Ok((
            z.iter().map(Jet::value).collect(),
            y.iter().map(Jet::value).collect(),
        ))
    }

    fn zip(&self, other: &Section, op: fn(&Jet, &Jet) -> Jet) -> Result<Section> {
        if self.p != other.p || self.r != other.r {
            return Err(Error::DimensionMismatch("section shapes differ".to_string()));
        }
        let (a, b) = (self.comps.clone(), other.comps.clone());
        let mut deps = a.dependence();
        deps.extend(b.dependence());
        let t = tensor_fn(a.dims(), vec![self.p + self.r], deps, move |at, order| {
            let (u, v) = (a.eval(at, order)?.data, b.eval(at, order)?.data);
            Ok(u.iter().zip(&v).map(|(x, y)| op(x, y)).collect())
        });
        Section::from_tensor(self.p, self.r, t)
    }

    pub fn add(&self, other: &Section) -> Result<Section> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Section) -> Result<Section> {
        self.zip(other, |a, b| a - b)
    }

    /// Pointwise product `f X`.
    pub fn scale_by(&self, f: &Field) -> Section {
        let (a, f) = (self.comps.clone(), f.clone());
        let mut deps: BTreeSet<Var> = a.dependence();
        deps.extend(f.dependence());
        let t = tensor_fn(a.dims(), vec![self.p + self.r], deps, move |at, order| {
            let s = f.jet(at, order)?;
            Ok(a.eval(at, order)?.data.iter().map(|x| x * &s).collect())
        });
        Section {
            p: self.p,
            r: self.r,
            comps: t,
        }
    }
}

/// A local frame `theta_alpha = theta^i_alpha d/dx^i` of the base together
/// with its pointwise inverse `theta_inv[j][gamma]`.
#[derive(Clone)]
pub struct FrameDiffeoData {
    dims: Dims,
    theta: Tensor,
    theta_inv: Tensor,
}

/// Tolerance for `theta * theta_inv = I` at probe points.
pub const FRAME_INVERSE_TOL: f64 = 1e-10;

impl FrameDiffeoData {
    /// `theta` has shape `[p, m]` (`theta^i_alpha` at `[alpha][i]`) and
    /// `theta_inv` shape `[m, p]` (`theta~^gamma_j` at `[j][gamma]`), with
    /// `p = m`.
    pub fn new(dims: Dims, theta: Tensor, theta_inv: Tensor) -> Result<Self> {
        let m = dims.m;
        check_shape("theta", &theta, dims, &[m, m])?;
        check_shape("theta_inv", &theta_inv, dims, &[m, m])?;
        require_x_only("theta", &theta)?;
        require_x_only("theta_inv", &theta_inv)?;
        Ok(FrameDiffeoData {
            dims,
            theta,
            theta_inv,
        })
    }

    pub fn theta(&self) -> &Tensor {
        &self.theta
    }

    /// Checks invertibility of `theta` and the supplied inverse at `at`.
    pub fn check_at(&self, at: &Point) -> Result<f64> {
        let m = self.dims.m;
        let th = self.theta.eval(at, 0)?.values();
        let inv = self.theta_inv.eval(at, 0)?.values();
        if linalg::inverse(&th, m).is_none() {
            return Err(Error::SingularFrame(format!("theta is singular at {at:?}")));
        }
        // sum_i theta^i_alpha theta~^gamma_i = delta^gamma_alpha
        let res = linalg::identity_residual(&th, &inv, m);
        if !(res <= FRAME_INVERSE_TOL) {
            return Err(Error::SingularFrame(format!(
                "theta_inv is not the inverse of theta at {at:?} (residual {res:e})"
            )));
        }
        Ok(res)
    }

    /// Structure functions of the frame, after checking it at `probes`.
    pub fn structure(&self, probes: &[Point]) -> Result<Tensor> {
        for p in probes {
            self.dims.check(p)?;
            self.check_at(p)?;
        }
        let m = self.dims.m;
        let (th, inv) = (self.theta.clone(), self.theta_inv.clone());
        let mut deps = th.dependence();
        deps.extend(inv.dependence());
        let nv = self.dims.nvars();
        Ok(tensor_fn(self.dims, vec![m, m, m], deps, move |at, order| {
            let t1 = th.eval(at, order_up(order)?)?.data;
            let ti = inv.eval(at, order)?.data;
            let t0: Vec<Jet> = t1.iter().map(|j| j.truncate(order)).collect();
            // commutator [theta_a, theta_b]^j
            let comm = |a: usize, b: usize, j: usize| -> Result<Jet> {
                let mut s = Jet::constant(0.0, nv, order);
                for i in 0..m {
                    s = &s + &(&t0[a * m + i] * &t1[b * m + j].partial(i)?);
                    s = &s - &(&t0[b * m + i] * &t1[a * m + j].partial(i)?);
                }
                Ok(s)
            };
            let mut out = vec![Jet::constant(0.0, nv, order); m * m * m];
            for a in 0..m {
                for b in a + 1..m {
                    let c: Vec<Jet> = (0..m).map(|j| comm(a, b, j)).collect::<Result<_>>()?;
                    for g in 0..m {
                        let mut s = Jet::constant(0.0, nv, order);
                        for j in 0..m {
                            s = &s + &(&c[j] * &ti[j * m + g]);
                        }
                        out[(g * m + b) * m + a] = -&s;
                        out[(g * m + a) * m + b] = s;
                    }
                }
            }
            Ok(out)
        }))
    }

    /// The algebroid with anchor `theta` and the frame's structure functions.
    pub fn algebroid(&self, probes: &[Point]) -> Result<GeneralizedAlgebroid> {
        let l = self.structure(probes)?;
        GeneralizedAlgebroid::new(self.dims, self.dims.m, self.theta.clone(), l)
    }
}

impl std::fmt::Debug for GeneralizedAlgebroid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GeneralizedAlgebroid")
            .field("dims", &self.dims)
            .field("p", &self.p)
            .finish()
    }
}
