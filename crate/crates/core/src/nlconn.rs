//! Nonlinear connections, adapted frames and changes of chart.
//!
//! A nonlinear connection is the array `Gamma^a_alpha(x, y)` (stored
//! `[a][alpha]`). It defines the adapted frame `delta_alpha = e_alpha -
//! Gamma^a_alpha e_a` with vertical part `e_a`, and the dual coframe
//! `dz^alpha`, `delta y^a = Gamma^a_alpha dz^alpha + dy^a`.

use std::collections::BTreeSet;

use crate::algebroid::{next_order, GeneralizedAlgebroid};
use crate::error::{Error, Result};
use crate::field::{self, compose_tensor, tensor_fn, Dims, Field, FieldArray, Point, Tensor, Var};
use crate::jet::Jet;
use crate::linalg;
use crate::sampling::{self, SampleSet};

#[derive(Clone)]
pub struct NonlinearConnection {
    dims: Dims,
    p: usize,
    gamma: Tensor,
}

impl NonlinearConnection {
    /// `gamma` has shape `[r, p]`.
    pub fn new(dims: Dims, p: usize, gamma: Tensor) -> Result<Self> {
        if gamma.shape() != [dims.r, p] || gamma.dims() != dims {
            return Err(Error::DimensionMismatch(format!(
                "connection shape {:?}, expected [{}, {}]",
                gamma.shape(),
                dims.r,
                p
            )));
        }
        Ok(NonlinearConnection { dims, p, gamma })
    }

    pub fn zero(dims: Dims, p: usize) -> Self {
        let g = FieldArray::zeros(dims, vec![dims.r, p]).into_tensor();
        NonlinearConnection { dims, p, gamma: g }
    }

    /// The connection induced by Ehresmann coefficients `Gamma^a_k` (shape
    /// `[r, m]`): `Gamma^a_gamma = rho^k_gamma Gamma^a_k`.
    pub fn from_ehresmann(alg: &GeneralizedAlgebroid, ehresmann: Tensor) -> Result<Self> {
        let (m, p, r) = (alg.m(), alg.p(), alg.r());
        if ehresmann.shape() != [r, m] || ehresmann.dims() != alg.dims() {
            return Err(Error::DimensionMismatch(format!(
                "Ehresmann coefficients shape {:?}, expected [{r}, {m}]",
                ehresmann.shape()
            )));
        }
        let rho = alg.anchor().clone();
        let mut deps = rho.dependence();
        deps.extend(ehresmann.dependence());
        let nv = alg.dims().nvars();
        let t = tensor_fn(alg.dims(), vec![r, p], deps, move |at, order| {
            let rho = rho.eval(at, order)?.data;
            let e = ehresmann.eval(at, order)?.data;
            let mut out = Vec::with_capacity(r * p);
            for a in 0..r {
                for g in 0..p {
                    let mut s = Jet::constant(0.0, nv, order);
                    for k in 0..m {
                        s = &s + &(&rho[g * m + k] * &e[a * m + k]);
                    }
                    out.push(s);
                }
            }
            Ok(out)
        });
        Self::new(alg.dims(), p, t)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn gamma(&self) -> &Tensor {
        &self.gamma
    }

    /// `Gamma^a_alpha` as a scalar field (zero-based indices).
    pub fn coefficient(&self, a: usize, alpha: usize) -> Field {
        field::component(&self.gamma, &[a, alpha])
    }

    pub(crate) fn check_against(&self, alg: &GeneralizedAlgebroid) -> Result<()> {
        if self.dims != alg.dims() || self.p != alg.p() {
            return Err(Error::DimensionMismatch(format!(
                "connection over {:?} with p = {}, algebroid over {:?} with p = {}",
                self.dims,
                self.p,
                alg.dims(),
                alg.p()
            )));
        }
        Ok(())
    }
}

/// Anchor and connection jets at one point, for applying `delta_alpha`.
pub struct FrameJets {
    m: usize,
    p: usize,
    r: usize,
    order: usize,
    nv: usize,
    pub rho: Vec<Jet>,
    pub gamma: Vec<Jet>,
}

impl FrameJets {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nvars(&self) -> usize {
        self.nv
    }

    fn zero(&self) -> Jet {
        Jet::constant(0.0, self.nv, self.order)
    }

    /// `rho^i_alpha d_i f - Gamma^a_alpha d_a f` from the gradient of `f`.
    pub fn delta(&self, alpha: usize, grad: &[Jet]) -> Jet {
        let mut s = self.zero();
        for i in 0..self.m {
            s = &s + &(&self.rho[alpha * self.m + i] * &grad[i]);
        }
        for a in 0..self.r {
            s = &s - &(&self.gamma[a * self.p + alpha] * &grad[self.m + a]);
        }
        s
    }

    /// `delta_alpha f` for every `alpha`; `f` carries one order more than
    /// the frame.
    pub fn deltas(&self, f: &Jet) -> Result<Vec<Jet>> {
        let grad = f.gradient()?;
        Ok((0..self.p).map(|al| self.delta(al, &grad)).collect())
    }

    /// `d f / dy^c` for every `c`.
    pub fn verticals(&self, f: &Jet) -> Result<Vec<Jet>> {
        let grad = f.gradient()?;
        Ok(grad[self.m..].to_vec())
    }
}

/// An algebroid together with a nonlinear connection.
#[derive(Clone)]
pub struct AdaptedFrame {
    algebroid: GeneralizedAlgebroid,
    connection: NonlinearConnection,
}

impl AdaptedFrame {
    pub fn new(algebroid: GeneralizedAlgebroid, connection: NonlinearConnection) -> Result<Self> {
        connection.check_against(&algebroid)?;
        Ok(AdaptedFrame {
            algebroid,
            connection,
        })
    }

    pub fn algebroid(&self) -> &GeneralizedAlgebroid {
        &self.algebroid
    }

    pub fn connection(&self) -> &NonlinearConnection {
        &self.connection
    }

    pub fn dims(&self) -> Dims {
        self.algebroid.dims()
    }

    pub fn p(&self) -> usize {
        self.algebroid.p()
    }

    pub fn r(&self) -> usize {
        self.algebroid.r()
    }

    pub fn dependence(&self) -> BTreeSet<Var> {
        let mut d = self.algebroid.anchor().dependence();
        d.extend(self.connection.gamma.dependence());
        d
    }

    pub fn jets(&self, at: &Point, order: usize) -> Result<FrameJets> {
        Ok(FrameJets {
            m: self.algebroid.m(),
            p: self.p(),
            r: self.r(),
            order,
            nv: self.dims().nvars(),
            rho: self.algebroid.anchor().eval(at, order)?.data,
            gamma: self.connection.gamma.eval(at, order)?.data,
        })
    }

    /// `delta_alpha f` as a field (zero-based `alpha`).
    pub fn delta_action(&self, alpha: usize, f: &Field) -> Result<Field> {
        if alpha >= self.p() {
            return Err(Error::IndexOutOfRange {
                index: alpha + 1,
                bound: self.p(),
            });
        }
        if f.dims() != self.dims() {
            return Err(Error::DimensionMismatch("delta action argument".to_string()));
        }
        let this = self.clone();
        let f = f.clone();
        let mut deps = f.dependence();
        deps.extend(self.dependence());
        Ok(field::from_fn(self.dims(), deps, move |at, order| {
            let fr = this.jets(at, order)?;
            let grad = f.jet(at, next_order(order)?)?.gradient()?;
            Ok(fr.delta(alpha, &grad))
        }))
    }

    fn gamma_values(&self, at: &Point) -> Result<Vec<f64>> {
        Ok(self.connection.gamma.eval(at, 0)?.values())
    }

    /// Columns are the adapted frame `(delta_alpha, e_a)` in the natural
    /// basis: `[[I, 0], [-Gamma, I]]`, row-major of size `p + r`.
    pub fn frame_matrix(&self, at: &Point) -> Result<Vec<f64>> {
        self.block_matrix(at, -1.0)
    }

    /// Rows are the adapted coframe `(dz^alpha, delta y^a)` in the natural
    /// dual basis: `[[I, 0], [Gamma, I]]`.
    pub fn coframe_matrix(&self, at: &Point) -> Result<Vec<f64>> {
        self.block_matrix(at, 1.0)
    }

    fn block_matrix(&self, at: &Point, sign: f64) -> Result<Vec<f64>> {
        let (p, r) = (self.p(), self.r());
        let n = p + r;
        let g = self.gamma_values(at)?;
        let mut mat = linalg::identity(n);
        for a in 0..r {
            for al in 0..p {
                mat[(p + a) * n + al] = sign * g[a * p + al];
            }
        }
        Ok(mat)
    }

    /// `max |coframe * frame - I|` at a point.
    pub fn duality_residual(&self, at: &Point) -> Result<f64> {
        let n = self.p() + self.r();
        Ok(linalg::identity_residual(
            &self.coframe_matrix(at)?,
            &self.frame_matrix(at)?,
            n,
        ))
    }

    pub fn max_duality_residual(&self, samples: &SampleSet) -> Result<f64> {
        Ok(sampling::sweep_max(&samples.points, |p| self.duality_residual(p))?.value)
    }

    fn check_lengths(&self, h: &[f64], v: &[f64]) -> Result<()> {
        if h.len() != self.p() || v.len() != self.r() {
            return Err(Error::DimensionMismatch(format!(
                "components ({}, {}), expected ({}, {})",
                h.len(),
                v.len(),
                self.p(),
                self.r()
            )));
        }
        Ok(())
    }

    /// Natural vector components `(Z, Y)` to adapted ones `(Z, Y + Gamma Z)`.
    pub fn to_adapted(&self, at: &Point, z: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.vector_map(at, z, y, 1.0)
    }

    pub fn from_adapted(&self, at: &Point, z: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.vector_map(at, z, y, -1.0)
    }

    fn vector_map(
        &self,
        at: &Point,
        z: &[f64],
        y: &[f64],
        sign: f64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_lengths(z, y)?;
        let p = self.p();
        let g = self.gamma_values(at)?;
        let yy = (0..self.r())
            .map(|a| y[a] + sign * (0..p).map(|al| g[a * p + al] * z[al]).sum::<f64>())
            .collect();
        Ok((z.to_vec(), yy))
    }

    /// Natural covector components `(omega, eta)` to adapted ones
    /// `(omega - eta Gamma, eta)`.
    pub fn covector_to_adapted(
        &self,
        at: &Point,
        omega: &[f64],
        eta: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.covector_map(at, omega, eta, -1.0)
    }

    pub fn covector_from_adapted(
        &self,
        at: &Point,
        omega: &[f64],
        eta: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.covector_map(at, omega, eta, 1.0)
    }

    fn covector_map(
        &self,
        at: &Point,
        omega: &[f64],
        eta: &[f64],
        sign: f64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_lengths(omega, eta)?;
        let p = self.p();
        let g = self.gamma_values(at)?;
        let w = (0..p)
            .map(|al| {
                omega[al] + sign * (0..self.r()).map(|a| eta[a] * g[a * p + al]).sum::<f64>()
            })
            .collect();
        Ok((w, eta.to_vec()))
    }
}

/// Tolerance for the mutual-inverse checks of a [`FrameChange`].
pub const TRANSITION_TOL: f64 = 1e-10;

/// A change of chart and of algebroid and fiber bases.
///
/// `lambda[alpha'][alpha]` and `mmat[a'][a]` are the forward matrices,
/// `lambda_inv[alpha][alpha']` and `mmat_inv[a][a']` their inverses, all
/// functions of `x`. The primed base coordinates are `x' = basemap(x)` with
/// `x = basemap_inverse(x')`, and `y' = M(x) y`.
#[derive(Clone)]
pub struct FrameChange {
    dims: Dims,
    p: usize,
    lambda: Tensor,
    lambda_inv: Tensor,
    mmat: Tensor,
    mmat_inv: Tensor,
    basemap: Tensor,
    basemap_inverse: Tensor,
}

impl FrameChange {
    pub fn new(
        dims: Dims,
        p: usize,
        lambda: Tensor,
        lambda_inv: Tensor,
        mmat: Tensor,
        mmat_inv: Tensor,
        basemap: Tensor,
        basemap_inverse: Tensor,
    ) -> Result<Self> {
        let (m, r) = (dims.m, dims.r);
        for (name, t, shape) in [
            ("lambda", &lambda, vec![p, p]),
            ("lambda_inv", &lambda_inv, vec![p, p]),
            ("mmat", &mmat, vec![r, r]),
            ("mmat_inv", &mmat_inv, vec![r, r]),
            ("basemap", &basemap, vec![m]),
            ("basemap_inverse", &basemap_inverse, vec![m]),
        ] {
            if t.shape() != shape.as_slice() || t.dims() != dims {
                return Err(Error::DimensionMismatch(format!(
                    "{name}: shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            if t.dependence().iter().any(|v| matches!(v, Var::Y(_))) {
                return Err(Error::FiberDependence(name.to_string()));
            }
        }
        Ok(FrameChange {
            dims,
            p,
            lambda,
            lambda_inv,
            mmat,
            mmat_inv,
            basemap,
            basemap_inverse,
        })
    }

    pub fn identity(dims: Dims, p: usize) -> Self {
        let eye = |n: usize| {
            FieldArray::new(
                dims,
                vec![n, n],
                (0..n * n)
                    .map(|k| field::constant(dims, if k / n == k % n { 1.0 } else { 0.0 }))
                    .collect(),
            )
            .expect("shape")
            .into_tensor()
        };
        let xs = || {
            FieldArray::new(
                dims,
                vec![dims.m],
                (0..dims.m).map(|i| field::coordinate(dims, Var::X(i))).collect(),
            )
            .expect("shape")
            .into_tensor()
        };
        FrameChange {
            dims,
            p,
            lambda: eye(p),
            lambda_inv: eye(p),
            mmat: eye(dims.r),
            mmat_inv: eye(dims.r),
            basemap: xs(),
            basemap_inverse: xs(),
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Largest of the three mutual-inverse residuals at a point.
    pub fn residual_at(&self, at: &Point) -> Result<f64> {
        let (p, r) = (self.p, self.dims.r);
        let l = self.lambda.eval(at, 0)?.values();
        let li = self.lambda_inv.eval(at, 0)?.values();
        let mm = self.mmat.eval(at, 0)?.values();
        let mi = self.mmat_inv.eval(at, 0)?.values();
        let xp = self.basemap.eval(at, 0)?.values();
        let back = self
            .basemap_inverse
            .eval(&Point::new(xp, at.y.clone()), 0)?
            .values();
        let map_res = sampling::max_abs(back.iter().zip(&at.x).map(|(a, b)| a - b));
        Ok(linalg::identity_residual(&l, &li, p)
            .max(linalg::identity_residual(&mm, &mi, r))
            .max(map_res))
    }

    /// Checks the mutual-inverse relations at every sample point.
    pub fn validate(&self, samples: &SampleSet) -> Result<f64> {
        let e = sampling::sweep_max(&samples.points, |pt| self.residual_at(pt))?;
        if !(e.value <= TRANSITION_TOL) {
            let at = e.argmax.map(|i| &samples.points[i]);
            return Err(Error::SingularTransition(format!(
                "inverse residual {:e} at {at:?}",
                e.value
            )));
        }
        Ok(e.value)
    }

    /// The reverse change, expressed over the primed coordinates.
    pub fn inverse(&self) -> FrameChange {
        let back = self.backmap_x_only();
        let d = self.dims;
        FrameChange {
            dims: d,
            p: self.p,
            lambda: compose_tensor(&self.lambda_inv, d, &back),
            lambda_inv: compose_tensor(&self.lambda, d, &back),
            mmat: compose_tensor(&self.mmat_inv, d, &back),
            mmat_inv: compose_tensor(&self.mmat, d, &back),
            basemap: self.basemap_inverse.clone(),
            basemap_inverse: self.basemap.clone(),
        }
    }

    /// `(x(x'), y')`: enough to pull back fields that ignore `y`.
    fn backmap_x_only(&self) -> Vec<Field> {
        let d = self.dims;
        let mut map = field::components(&self.basemap_inverse);
        map.extend((0..d.r).map(|a| field::coordinate(d, Var::Y(a))));
        map
    }

    /// `(x(x'), M^{-1}(x(x')) y')` as fields over the primed coordinates.
    pub fn backmap(&self) -> Vec<Field> {
        let d = self.dims;
        let r = d.r;
        let xb = self.backmap_x_only();
        let minv = compose_tensor(&self.mmat_inv, d, &xb);
        let mut deps = minv.dependence();
        deps.extend((0..r).map(Var::Y));
        let ys = tensor_fn(d, vec![r], deps, move |at, order| {
            let mi = minv.eval(at, order)?.data;
            let yj = Jet::seed(&at.coords(), order)?;
            Ok((0..r)
                .map(|a| {
                    let mut s = Jet::constant(0.0, d.nvars(), order);
                    for b in 0..r {
                        s = &s + &(&mi[a * r + b] * &yj[d.m + b]);
                    }
                    s
                })
                .collect())
        });
        let mut map = field::components(&self.basemap_inverse);
        map.extend(field::components(&ys));
        map
    }

    /// Expresses an unprimed-coordinate tensor over the primed chart.
    pub fn pull_to_primed(&self, t: &Tensor) -> Tensor {
        compose_tensor(t, self.dims, &self.backmap())
    }

    fn check_algebroid(&self, alg: &GeneralizedAlgebroid) -> Result<()> {
        if alg.dims() != self.dims || alg.p() != self.p {
            return Err(Error::DimensionMismatch(
                "frame change and algebroid dimensions differ".to_string(),
            ));
        }
        Ok(())
    }

    /// Anchor and structure functions in the primed chart:
    /// `rho' = Lambda^alpha_alpha' rho^i_alpha dx'^i'/dx^i` and
    /// `L' = Lambda^gamma'_gamma [Lambda Lambda L + Lambda^alpha_alpha'
    /// rho_alpha(Lambda^gamma_beta') - Lambda^beta_beta' rho_beta(Lambda^gamma_alpha')]`.
    pub fn transform_algebroid(&self, alg: &GeneralizedAlgebroid) -> Result<GeneralizedAlgebroid> {
        self.check_algebroid(alg)?;
        let (m, p) = (self.dims.m, self.p);
        let nv = self.dims.nvars();
        let d = self.dims;
        let (rho, phi, li) = (alg.anchor().clone(), self.basemap.clone(), self.lambda_inv.clone());
        let mut deps = rho.dependence();
        deps.extend(phi.dependence());
        deps.extend(li.dependence());
        let anchor = tensor_fn(d, vec![p, m], deps.clone(), move |at, order| {
            let rho = rho.eval(at, order)?.data;
            let li = li.eval(at, order)?.data;
            let ph = phi.eval(at, next_order(order)?)?.data;
            let mut out = Vec::with_capacity(p * m);
            for ap in 0..p {
                for ip in 0..m {
                    let mut s = Jet::constant(0.0, nv, order);
                    for a in 0..p {
                        let mut t = Jet::constant(0.0, nv, order);
                        for i in 0..m {
                            t = &t + &(&rho[a * m + i] * &ph[ip].partial(i)?);
                        }
                        s = &s + &(&li[a * p + ap] * &t);
                    }
                    out.push(s);
                }
            }
            Ok(out)
        });
        let (rho, l, lam, li) = (
            alg.anchor().clone(),
            alg.structure().clone(),
            self.lambda.clone(),
            self.lambda_inv.clone(),
        );
        deps.extend(l.dependence());
        deps.extend(lam.dependence());
        let structure = tensor_fn(d, vec![p, p, p], deps, move |at, order| {
            let rho = rho.eval(at, order)?.data;
            let l = l.eval(at, order)?.data;
            let lam = lam.eval(at, order)?.data;
            let li1 = li.eval(at, next_order(order)?)?.data;
            let li: Vec<Jet> = li1.iter().map(|j| j.truncate(order)).collect();
            // rho_alpha(Lambda^gamma_beta') for all alpha, gamma, beta'
            let mut act = Vec::with_capacity(p * p * p);
            for a in 0..p {
                for g in 0..p {
                    for bp in 0..p {
                        let mut s = Jet::constant(0.0, nv, order);
                        for i in 0..m {
                            s = &s + &(&rho[a * m + i] * &li1[g * p + bp].partial(i)?);
                        }
                        act.push(s);
                    }
                }
            }
            let act = |a: usize, g: usize, bp: usize| &act[(a * p + g) * p + bp];
            let mut out = vec![Jet::constant(0.0, nv, order); p * p * p];
            for gp in 0..p {
                for ap in 0..p {
                    for bp in 0..p {
                        let mut s = Jet::constant(0.0, nv, order);
                        for g in 0..p {
                            let mut inner = Jet::constant(0.0, nv, order);
                            for a in 0..p {
                                for b in 0..p {
                                    let c = &(&li[a * p + ap] * &li[b * p + bp]) * &l[(g * p + a) * p + b];
                                    inner = &inner + &c;
                                }
                                inner = &inner + &(&li[a * p + ap] * act(a, g, bp));
                                inner = &inner - &(&li[a * p + bp] * act(a, g, ap));
                            }
                            s = &s + &(&lam[gp * p + g] * &inner);
                        }
                        out[(gp * p + ap) * p + bp] = s;
                    }
                }
            }
            Ok(out)
        });
        GeneralizedAlgebroid::new(
            d,
            p,
            self.pull_to_primed_x(&anchor),
            self.pull_to_primed_x(&structure),
        )
    }

    fn pull_to_primed_x(&self, t: &Tensor) -> Tensor {
        compose_tensor(t, self.dims, &self.backmap_x_only())
    }

    /// The connection in the primed chart:
    /// `Gamma'^a'_gamma' = M^a'_a [rho^k_gamma d_k(M^a_b') y'^b' +
    /// Gamma^a_gamma] Lambda^gamma_gamma'`, as fields over primed coordinates.
    pub fn transform_gamma(
        &self,
        alg: &GeneralizedAlgebroid,
        conn: &NonlinearConnection,
    ) -> Result<NonlinearConnection> {
        self.check_algebroid(alg)?;
        conn.check_against(alg)?;
        let (m, p, r) = (self.dims.m, self.p, self.dims.r);
        let d = self.dims;
        let nv = d.nvars();
        let (rho, gam, mm, mi, li) = (
            alg.anchor().clone(),
            conn.gamma.clone(),
            self.mmat.clone(),
            self.mmat_inv.clone(),
            self.lambda_inv.clone(),
        );
        let mut deps = rho.dependence();
        for t in [&gam, &mm, &mi, &li] {
            deps.extend(t.dependence());
        }
        deps.extend((0..r).map(Var::Y));
        let g = tensor_fn(d, vec![r, p], deps, move |at, order| {
            let rho = rho.eval(at, order)?.data;
            let gam = gam.eval(at, order)?.data;
            let mm = mm.eval(at, order)?.data;
            let mi1 = mi.eval(at, next_order(order)?)?.data;
            let li = li.eval(at, order)?.data;
            let yj = Jet::seed(&at.coords(), order)?;
            let yp: Vec<Jet> = (0..r)
                .map(|bp| {
                    let mut s = Jet::constant(0.0, nv, order);
                    for b in 0..r {
                        s = &s + &(&mm[bp * r + b] * &yj[m + b]);
                    }
                    s
                })
                .collect();
            // bracket[a][gamma] = rho^k_gamma d_k(M^a_b') y'^b' + Gamma^a_gamma
            let mut br = Vec::with_capacity(r * p);
            for a in 0..r {
                for g in 0..p {
                    let mut s = gam[a * p + g].clone();
                    for bp in 0..r {
                        let mut dk = Jet::constant(0.0, nv, order);
                        for k in 0..m {
                            dk = &dk + &(&rho[g * m + k] * &mi1[a * r + bp].partial(k)?);
                        }
                        s = &s + &(&dk * &yp[bp]);
                    }
                    br.push(s);
                }
            }
            let mut out = Vec::with_capacity(r * p);
            for ap in 0..r {
                for gp in 0..p {
                    let mut s = Jet::constant(0.0, nv, order);
                    for a in 0..r {
                        for g in 0..p {
                            s = &s + &(&(&mm[ap * r + a] * &br[a * p + g]) * &li[g * p + gp]);
                        }
                    }
                    out.push(s);
                }
            }
            Ok(out)
        });
        NonlinearConnection::new(d, p, self.pull_to_primed(&g))
    }

    /// The adapted frame of the primed chart.
    pub fn transform_frame(&self, frame: &AdaptedFrame) -> Result<AdaptedFrame> {
        let alg = self.transform_algebroid(frame.algebroid())?;
        let conn = self.transform_gamma(frame.algebroid(), frame.connection())?;
        AdaptedFrame::new(alg, conn)
    }

    pub(crate) fn parts(&self) -> [&Tensor; 4] {
        [&self.lambda, &self.lambda_inv, &self.mmat, &self.mmat_inv]
    }

    pub fn p(&self) -> usize {
        self.p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::nested2;
    use crate::lang;
    use crate::sampling::{generate, SampleSpec};

    fn t2(d: Dims, rows: &[&[&str]]) -> Tensor {
        let f = rows
            .iter()
            .map(|r| r.iter().map(|s| lang::field(s, d).unwrap()).collect())
            .collect();
        nested2(d, "t", f, [rows.len(), rows[0].len()]).unwrap()
    }

    fn t1(d: Dims, row: &[&str]) -> Tensor {
        FieldArray::new(
            d,
            vec![row.len()],
            row.iter().map(|s| lang::field(s, d).unwrap()).collect(),
        )
        .unwrap()
        .into_tensor()
    }

    #[test]
    fn ehresmann_contraction() {
        let d = Dims::new(2, 1);
        let anchor = t2(d, &[&["1", "0"], &["0", "x1"]]);
        let l = FieldArray::zeros(d, vec![2, 2, 2]).into_tensor();
        let alg = GeneralizedAlgebroid::new(d, 2, anchor, l).unwrap();
        let c = NonlinearConnection::from_ehresmann(&alg, t2(d, &[&["0", "y1"]])).unwrap();
        let at = Point::new(vec![3.0, 0.5], vec![2.0]);
        assert_eq!(c.gamma().eval(&at, 0).unwrap().values(), vec![0.0, 6.0]);
    }

    #[test]
    fn delta_action_examples() {
        let d = Dims::new(1, 1);
        let alg = GeneralizedAlgebroid::standard(d);
        let at = Point::new(vec![0.2], vec![0.7]);
        let flat = AdaptedFrame::new(alg.clone(), NonlinearConnection::zero(d, 1)).unwrap();
        let x1 = lang::field("x1", d).unwrap();
        let v = flat.delta_action(0, &x1).unwrap();
        assert_eq!(field::eval(v.as_ref(), &at).unwrap(), 1.0);
        let c = NonlinearConnection::new(d, 1, t2(d, &[&["y1"]])).unwrap();
        let fr = AdaptedFrame::new(alg, c).unwrap();
        let y1 = lang::field("y1", d).unwrap();
        let v = fr.delta_action(0, &y1).unwrap();
        assert_eq!(field::eval(v.as_ref(), &at).unwrap(), -0.7);
        assert!(matches!(
            fr.delta_action(1, &y1),
            Err(Error::IndexOutOfRange { index: 2, bound: 1 })
        ));
    }

    #[test]
    fn adapted_components() {
        let d = Dims::new(1, 2);
        let alg = GeneralizedAlgebroid::standard(d);
        let c = NonlinearConnection::new(d, 1, t2(d, &[&["2"], &["-3"]])).unwrap();
        let fr = AdaptedFrame::new(alg, c).unwrap();
        let at = Point::new(vec![0.0], vec![0.0, 0.0]);
        let (z, y) = fr.to_adapted(&at, &[1.0], &[0.0, 0.0]).unwrap();
        assert_eq!((z, y.clone()), (vec![1.0], vec![2.0, -3.0]));
        let (z, y) = fr.from_adapted(&at, &[1.0], &y).unwrap();
        assert_eq!((z, y), (vec![1.0], vec![0.0, 0.0]));
        assert_eq!(fr.duality_residual(&at).unwrap(), 0.0);
    }

    #[test]
    fn fiber_rescale() {
        let d = Dims::new(1, 1);
        let alg = GeneralizedAlgebroid::standard(d);
        let c = NonlinearConnection::new(d, 1, t2(d, &[&["y1"]])).unwrap();
        let fc = FrameChange::new(
            d,
            1,
            t2(d, &[&["1"]]),
            t2(d, &[&["1"]]),
            t2(d, &[&["2"]]),
            t2(d, &[&["0.5"]]),
            t1(d, &["x1"]),
            t1(d, &["x1"]),
        )
        .unwrap();
        let cp = fc.transform_gamma(&alg, &c).unwrap();
        // at primed point y' = 3, Gamma' = 2 * y = y' = 3
        let v = cp.gamma().eval(&Point::new(vec![0.4], vec![3.0]), 0).unwrap().values();
        assert!((v[0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn transform_round_trip() {
        let d = Dims::new(2, 1);
        let alg = GeneralizedAlgebroid::standard(d);
        let c = NonlinearConnection::new(d, 2, t2(d, &[&["x1*y1^2", "sin(x2) + y1"]])).unwrap();
        let fc = FrameChange::new(
            d,
            2,
            t2(d, &[&["1 + x1^2", "x2"], &["0", "1"]]),
            t2(d, &[&["1/(1 + x1^2)", "-x2/(1 + x1^2)"], &["0", "1"]]),
            t2(d, &[&["exp(x2)"]]),
            t2(d, &[&["exp(-x2)"]]),
            t1(d, &["x1 + x2^3", "2*x2"]),
            t1(d, &["x1 - (x2/2)^3", "x2/2"]),
        )
        .unwrap();
        let s = generate(&SampleSpec::cube(2, 1, -1.0, 1.0, 20, 3)).unwrap();
        fc.validate(&s).unwrap();
        let alg_p = fc.transform_algebroid(&alg).unwrap();
        let cp = fc.transform_gamma(&alg, &c).unwrap();
        let inv = fc.inverse();
        let back = inv.transform_gamma(&alg_p, &cp).unwrap();
        let alg_b = inv.transform_algebroid(&alg_p).unwrap();
        for pt in &s.points {
            let a = c.gamma().eval(pt, 0).unwrap().values();
            let b = back.gamma().eval(pt, 0).unwrap().values();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-10, "{u} vs {v}");
            }
            let l = alg_b.structure().eval(pt, 0).unwrap().values();
            assert!(l.iter().all(|v| v.abs() < 1e-10));
            let rho = alg_b.anchor().eval(pt, 0).unwrap().values();
            assert!((rho[0] - 1.0).abs() < 1e-10 && rho[1].abs() < 1e-10);
        }
        // the primed algebroid is still an algebroid
        let sp = generate(&SampleSpec::cube(2, 1, -0.5, 0.5, 10, 4)).unwrap();
        assert!(alg_p.validate_structure(&sp, 1e-9).unwrap().pass());
    }
}
