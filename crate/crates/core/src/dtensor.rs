//! Distinguished tensors and distinguished linear connections.
//!
//! Components are always taken in the adapted basis `(delta_alpha, e_a)` and
//! its dual. A connection stores four blocks indexed `[upper][lower][dir]`:
//!
//! | block | entry                | shape       |
//! |-------|----------------------|-------------|
//! | `hh`  | `H^alpha_{beta gamma}` | `p x p x p` |
//! | `hv`  | `H^a_{b gamma}`        | `r x r x p` |
//! | `vh`  | `V^alpha_{beta c}`     | `p x p x r` |
//! | `vv`  | `V^a_{b c}`            | `r x r x r` |

use std::collections::BTreeSet;
use std::fmt;

use crate::algebroid::{next_order, Section};
use crate::error::{Error, Result};
use crate::field::{self, offset, tensor_fn, unravel, Dims, Field, FieldArray, Point, Tensor, Var};
use crate::jet::{self, Jet};
use crate::nlconn::{AdaptedFrame, FrameChange, FrameJets, TRANSITION_TOL};
use crate::sampling::{self, Extremum, Residual, SampleSet, ValidationReport};

/// Largest number of index slots a d-tensor may carry.
pub const MAX_SLOTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    H,
    V,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variance {
    Contra,
    Co,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Slot {
    pub family: Family,
    pub variance: Variance,
}

impl Slot {
    pub const H_UP: Slot = Slot {
        family: Family::H,
        variance: Variance::Contra,
    };
    pub const H_DOWN: Slot = Slot {
        family: Family::H,
        variance: Variance::Co,
    };
    pub const V_UP: Slot = Slot {
        family: Family::V,
        variance: Variance::Contra,
    };
    pub const V_DOWN: Slot = Slot {
        family: Family::V,
        variance: Variance::Co,
    };

    pub fn dim(&self, p: usize, r: usize) -> usize {
        match self.family {
            Family::H => p,
            Family::V => r,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct IndexSignature {
    slots: Vec<Slot>,
}

impl IndexSignature {
    pub fn new(slots: Vec<Slot>) -> Result<Self> {
        if slots.len() > MAX_SLOTS {
            return Err(Error::DimensionMismatch(format!(
                "{} index slots exceed the cap of {MAX_SLOTS}",
                slots.len()
            )));
        }
        Ok(IndexSignature { slots })
    }

    pub fn scalar() -> Self {
        IndexSignature::default()
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn shape(&self, p: usize, r: usize) -> Vec<usize> {
        self.slots.iter().map(|s| s.dim(p, r)).collect()
    }

    pub fn push(&self, slot: Slot) -> Result<Self> {
        let mut s = self.slots.clone();
        s.push(slot);
        Self::new(s)
    }

    pub fn concat(&self, other: &IndexSignature) -> Result<Self> {
        let mut s = self.slots.clone();
        s.extend_from_slice(&other.slots);
        Self::new(s)
    }
}

impl fmt::Display for IndexSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.slots {
            let c = match (s.family, s.variance) {
                (Family::H, Variance::Contra) => "H^",
                (Family::H, Variance::Co) => "H_",
                (Family::V, Variance::Contra) => "V^",
                (Family::V, Variance::Co) => "V_",
            };
            f.write_str(c)?;
        }
        Ok(())
    }
}

/// A d-tensor field with components in the adapted basis.
#[derive(Clone)]
pub struct DTensorField {
    sig: IndexSignature,
    p: usize,
    r: usize,
    comps: Tensor,
}

impl DTensorField {
    pub fn new(sig: IndexSignature, p: usize, r: usize, comps: Tensor) -> Result<Self> {
        if comps.shape() != sig.shape(p, r).as_slice() {
            return Err(Error::DimensionMismatch(format!(
                "components of shape {:?} for signature {sig} (expected {:?})",
                comps.shape(),
                sig.shape(p, r)
            )));
        }
        Ok(DTensorField { sig, p, r, comps })
    }

    pub fn from_fields(sig: IndexSignature, p: usize, r: usize, dims: Dims, comps: Vec<Field>) -> Result<Self> {
        let t = FieldArray::new(dims, sig.shape(p, r), comps)?.into_tensor();
        Self::new(sig, p, r, t)
    }

    pub fn scalar(f: &Field, p: usize, r: usize) -> Self {
        let t = FieldArray::new(f.dims(), vec![], vec![f.clone()])
            .expect("shape")
            .into_tensor();
        DTensorField {
            sig: IndexSignature::scalar(),
            p,
            r,
            comps: t,
        }
    }

    pub fn signature(&self) -> &IndexSignature {
        &self.sig
    }

    pub fn tensor(&self) -> &Tensor {
        &self.comps
    }

    pub fn shape(&self) -> Vec<usize> {
        self.sig.shape(self.p, self.r)
    }

    pub fn dims(&self) -> Dims {
        self.comps.dims()
    }

    pub fn eval(&self, at: &Point, order: usize) -> Result<Vec<Jet>> {
        Ok(self.comps.eval(at, order)?.data)
    }

    pub fn values(&self, at: &Point) -> Result<Vec<f64>> {
        Ok(self.comps.eval(at, 0)?.values())
    }

    pub fn component(&self, idx: &[usize]) -> Field {
        field::component(&self.comps, idx)
    }

    /// `S (x) T` with the slots of `self` first.
    pub fn tensor_product(&self, other: &DTensorField) -> Result<DTensorField> {
        let sig = self.sig.concat(&other.sig)?;
        let (a, b) = (self.comps.clone(), other.comps.clone());
        let mut deps = a.dependence();
        deps.extend(b.dependence());
        let t = tensor_fn(a.dims(), sig.shape(self.p, self.r), deps, move |at, order| {
            let (u, v) = (a.eval(at, order)?.data, b.eval(at, order)?.data);
            let mut out = Vec::with_capacity(u.len() * v.len());
            for x in &u {
                for y in &v {
                    out.push(x * y);
                }
            }
            Ok(out)
        });
        DTensorField::new(sig, self.p, self.r, t)
    }

    /// Slot relabelling: slot `k` of the result is slot `perm[k]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<DTensorField> {
        let n = self.sig.len();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&k| k >= n || std::mem::replace(&mut seen[k], true)) {
            return Err(Error::Invalid(format!("{perm:?} is not a permutation of {n} slots")));
        }
        let sig = IndexSignature::new(perm.iter().map(|&k| self.sig.slots[k]).collect())?;
        let old_shape = self.shape();
        let new_shape = sig.shape(self.p, self.r);
        let a = self.comps.clone();
        let perm = perm.to_vec();
        let t = tensor_fn(a.dims(), new_shape.clone(), a.dependence(), move |at, order| {
            let u = a.eval(at, order)?.data;
            let total: usize = new_shape.iter().product();
            Ok((0..total)
                .map(|flat| {
                    let ni = unravel(&new_shape, flat);
                    let mut oi = vec![0; ni.len()];
                    for (k, &src) in perm.iter().enumerate() {
                        oi[src] = ni[k];
                    }
                    u[offset(&old_shape, &oi)].clone()
                })
                .collect())
        });
        DTensorField::new(sig, self.p, self.r, t)
    }

    /// Contracts slot `upper` (contravariant) with slot `lower` (covariant) of
    /// the same family.
    pub fn contract(&self, upper: usize, lower: usize) -> Result<DTensorField> {
        let n = self.sig.len();
        if upper >= n || lower >= n || upper == lower {
            return Err(Error::Invalid(format!("cannot pair slots {upper} and {lower} of {n}")));
        }
        let (su, sl) = (self.sig.slots[upper], self.sig.slots[lower]);
        if su.family != sl.family || su.variance != Variance::Contra || sl.variance != Variance::Co {
            return Err(Error::DimensionMismatch(format!(
                "slots {upper} and {lower} of {} do not pair",
                self.sig
            )));
        }
        let keep: Vec<usize> = (0..n).filter(|&k| k != upper && k != lower).collect();
        let sig = IndexSignature::new(keep.iter().map(|&k| self.sig.slots[k]).collect())?;
        let old_shape = self.shape();
        let new_shape = sig.shape(self.p, self.r);
        let dim = su.dim(self.p, self.r);
        let a = self.comps.clone();
        let nv = a.dims().nvars();
        let t = tensor_fn(a.dims(), new_shape.clone(), a.dependence(), move |at, order| {
            let u = a.eval(at, order)?.data;
            let total: usize = new_shape.iter().product();
            Ok((0..total)
                .map(|flat| {
                    let ni = unravel(&new_shape, flat);
                    let mut oi = vec![0; n];
                    for (k, &src) in keep.iter().enumerate() {
                        oi[src] = ni[k];
                    }
                    let mut s = Jet::constant(0.0, nv, order);
                    for i in 0..dim {
                        oi[upper] = i;
                        oi[lower] = i;
                        s = &s + &u[offset(&old_shape, &oi)];
                    }
                    s
                })
                .collect())
        });
        DTensorField::new(sig, self.p, self.r, t)
    }

    pub fn add(&self, other: &DTensorField) -> Result<DTensorField> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DTensorField) -> Result<DTensorField> {
        self.zip(other, |a, b| a - b)
    }

    fn zip(&self, other: &DTensorField, op: fn(&Jet, &Jet) -> Jet) -> Result<DTensorField> {
        if self.sig != other.sig {
            return Err(Error::DimensionMismatch(format!(
                "signatures {} and {} differ",
                self.sig, other.sig
            )));
        }
        let (a, b) = (self.comps.clone(), other.comps.clone());
        let mut deps = a.dependence();
        deps.extend(b.dependence());
        let t = tensor_fn(a.dims(), self.shape(), deps, move |at, order| {
            let (u, v) = (a.eval(at, order)?.data, b.eval(at, order)?.data);
            Ok(u.iter().zip(&v).map(|(x, y)| op(x, y)).collect())
        });
        DTensorField::new(self.sig.clone(), self.p, self.r, t)
    }
}

/// Connection blocks evaluated at one point.
pub struct Blocks {
    pub hh: Vec<Jet>,
    pub hv: Vec<Jet>,
    pub vh: Vec<Jet>,
    pub vv: Vec<Jet>,
}

impl Blocks {
    /// Splits the concatenation `hh ++ hv ++ vh ++ vv`.
    pub fn split(mut all: Vec<Jet>, p: usize, r: usize) -> Blocks {
        let [a, b, c, _] = block_sizes(p, r);
        let vv = all.split_off(a + b + c);
        let vh = all.split_off(a + b);
        let hv = all.split_off(a);
        Blocks { hh: all, hv, vh, vv }
    }

    pub fn concat(self) -> Vec<Jet> {
        let mut v = self.hh;
        v.extend(self.hv);
        v.extend(self.vh);
        v.extend(self.vv);
        v
    }
}

fn block_sizes(p: usize, r: usize) -> [usize; 4] {
    [p * p * p, r * r * p, p * p * r, r * r * r]
}

fn block_shapes(p: usize, r: usize) -> [[usize; 3]; 4] {
    [[p, p, p], [r, r, p], [p, p, r], [r, r, r]]
}

/// A distinguished linear connection over an adapted frame.
///
/// The four blocks are evaluated together from one tensor of shape
/// `[p^3 + r^2 p + p^2 r + r^3]`, so any shared work (metric inverses, frame
/// jets) happens once per point.
#[derive(Clone)]
pub struct DConnection {
    frame: AdaptedFrame,
    joint: Tensor,
    views: [Tensor; 4],
}

impl DConnection {
    pub fn new(frame: AdaptedFrame, hh: Tensor, hv: Tensor, vh: Tensor, vv: Tensor) -> Result<Self> {
        let (p, r) = (frame.p(), frame.r());
        let blocks = [hh, hv, vh, vv];
        for (k, name) in ["hh", "hv", "vh", "vv"].into_iter().enumerate() {
            let t = &blocks[k];
            let shape = block_shapes(p, r)[k];
            if t.shape() != shape || t.dims() != frame.dims() {
                return Err(Error::DimensionMismatch(format!(
                    "block {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        let mut deps = BTreeSet::new();
        for t in &blocks {
            deps.extend(t.dependence());
        }
        let total = block_sizes(p, r).iter().sum();
        let joint = tensor_fn(frame.dims(), vec![total], deps, move |at, order| {
            let mut out = Vec::with_capacity(total);
            for t in &blocks {
                out.extend(t.eval(at, order)?.data);
            }
            Ok(out)
        });
        Self::from_joint(frame, joint)
    }

    /// Wraps a tensor producing `hh ++ hv ++ vh ++ vv`.
    pub fn from_joint(frame: AdaptedFrame, joint: Tensor) -> Result<Self> {
        let (p, r) = (frame.p(), frame.r());
        let sizes = block_sizes(p, r);
        let total: usize = sizes.iter().sum();
        if joint.shape() != [total] || joint.dims() != frame.dims() {
            return Err(Error::DimensionMismatch(format!(
                "joint connection tensor of shape {:?}, expected [{total}]",
                joint.shape()
            )));
        }
        let shapes = block_shapes(p, r);
        let mut start = 0;
        let views = [0, 1, 2, 3].map(|k| {
            let v = sub_tensor(&joint, start, shapes[k].to_vec());
            start += sizes[k];
            v
        });
        Ok(DConnection {
            frame,
            joint,
            views,
        })
    }

    pub fn zero(frame: &AdaptedFrame) -> Self {
        let (p, r, d) = (frame.p(), frame.r(), frame.dims());
        let total = block_sizes(p, r).iter().sum();
        let joint = FieldArray::zeros(d, vec![total]).into_tensor();
        Self::from_joint(frame.clone(), joint).expect("shape")
    }

    /// The Berwald connection: both horizontal blocks are
    /// `d Gamma^a_gamma / dy^b`, both vertical blocks vanish. Needs `p = r`.
    pub fn berwald(frame: &AdaptedFrame) -> Result<Self> {
        let (p, r) = (frame.p(), frame.r());
        if p != r {
            return Err(Error::DimensionMismatch(format!(
                "Berwald connection needs p = r (got p = {p}, r = {r})"
            )));
        }
        let h = berwald_block(frame);
        let d = frame.dims();
        let z = FieldArray::zeros(d, vec![p, p, p]).into_tensor();
        DConnection::new(frame.clone(), h.clone(), h, z.clone(), z)
    }

    pub fn frame(&self) -> &AdaptedFrame {
        &self.frame
    }

    pub fn p(&self) -> usize {
        self.frame.p()
    }

    pub fn r(&self) -> usize {
        self.frame.r()
    }

    pub fn dims(&self) -> Dims {
        self.frame.dims()
    }

    pub fn joint(&self) -> &Tensor {
        &self.joint
    }

    pub fn hh(&self) -> &Tensor {
        &self.views[0]
    }

    pub fn hv(&self) -> &Tensor {
        &self.views[1]
    }

    pub fn vh(&self) -> &Tensor {
        &self.views[2]
    }

    pub fn vv(&self) -> &Tensor {
        &self.views[3]
    }

    pub fn blocks(&self) -> [(&'static str, &Tensor); 4] {
        [
            ("hh", &self.views[0]),
            ("hv", &self.views[1]),
            ("vh", &self.views[2]),
            ("vv", &self.views[3]),
        ]
    }

    pub fn dependence(&self) -> BTreeSet<Var> {
        let mut d = self.frame.dependence();
        d.extend(self.joint.dependence());
        d
    }

    pub fn eval_blocks(&self, at: &Point, order: usize) -> Result<Blocks> {
        Ok(Blocks::split(self.joint.eval(at, order)?.data, self.p(), self.r()))
    }

    fn check_tensor(&self, t: &DTensorField) -> Result<()> {
        if t.p != self.p() || t.r != self.r() || t.dims() != self.dims() {
            return Err(Error::DimensionMismatch(format!(
                "d-tensor over (p, r) = ({}, {}), connection over ({}, {})",
                t.p,
                t.r,
                self.p(),
                self.r()
            )));
        }
        Ok(())
    }

    /// `T_{|gamma}`: the h-covariant derivative, with `gamma` as a new last
    /// covariant horizontal slot.
    pub fn h_cov_deriv(&self, t: &DTensorField) -> Result<DTensorField> {
        self.cov_deriv(t, Family::H)
    }

    /// `T|_c`: the v-covariant derivative, with `c` as a new last covariant
    /// vertical slot.
    pub fn v_cov_deriv(&self, t: &DTensorField) -> Result<DTensorField> {
        self.cov_deriv(t, Family::V)
    }

    /// `T_{|gamma}` for one fixed `gamma` (zero-based).
    pub fn h_cov_deriv_at(&self, t: &DTensorField, gamma: usize) -> Result<DTensorField> {
        if gamma >= self.p() {
            return Err(Error::IndexOutOfRange {
                index: gamma + 1,
                bound: self.p(),
            });
        }
        slice_last(&self.h_cov_deriv(t)?, gamma)
    }

    /// `T|_c` for one fixed `c` (zero-based).
    pub fn v_cov_deriv_at(&self, t: &DTensorField, c: usize) -> Result<DTensorField> {
        if c >= self.r() {
            return Err(Error::IndexOutOfRange {
                index: c + 1,
                bound: self.r(),
            });
        }
        slice_last(&self.v_cov_deriv(t)?, c)
    }

    fn cov_deriv(&self, t: &DTensorField, dir: Family) -> Result<DTensorField> {
        self.check_tensor(t)?;
        let new_slot = Slot {
            family: dir,
            variance: Variance::Co,
        };
        let sig = t.sig.push(new_slot)?;
        let this = self.clone();
        let src = t.clone();
        let mut deps = self.dependence();
        deps.extend(t.comps.dependence());
        let comps = tensor_fn(self.dims(), sig.shape(t.p, t.r), deps, move |at, order| {
            let tj = src.eval(at, next_order(order)?)?;
            let fr = this.frame.jets(at, order)?;
            let b = this.eval_blocks(at, order)?;
            Ok(cov_deriv_jets(&src.sig, src.p, src.r, &tj, &fr, &b, dir))
        });
        DTensorField::new(sig, t.p, t.r, comps)
    }

    /// `Z^gamma T_{|gamma} + Y^c T|_c` for a section given in the adapted
    /// basis.
    pub fn cov_deriv_along(&self, x: &Section, t: &DTensorField) -> Result<DTensorField> {
        self.check_tensor(t)?;
        if x.p() != self.p() || x.r() != self.r() {
            return Err(Error::DimensionMismatch("direction section".to_string()));
        }
        let h = self.h_cov_deriv(t)?;
        let v = self.v_cov_deriv(t)?;
        let (p, r) = (self.p(), self.r());
        let x = x.clone();
        let mut deps = h.comps.dependence();
        deps.extend(v.comps.dependence());
        deps.extend(x.tensor().dependence());
        let (hc, vc) = (h.comps.clone(), v.comps.clone());
        let comps = tensor_fn(self.dims(), t.shape(), deps, move |at, order| {
            let (z, y) = x.eval(at, order)?;
            let hd = hc.eval(at, order)?.data;
            let vd = vc.eval(at, order)?.data;
            let n = hd.len() / p;
            Ok((0..n)
                .map(|k| {
                    let mut s = &z[0] * &hd[k * p];
                    for g in 1..p {
                        s = &s + &(&z[g] * &hd[k * p + g]);
                    }
                    for c in 0..r {
                        s = &s + &(&y[c] * &vd[k * r + c]);
                    }
                    s
                })
                .collect())
        });
        DTensorField::new(t.sig.clone(), p, r, comps)
    }

    /// The connection in the primed chart of `change`, with the derivative
    /// terms of the horizontal blocks taken along `delta_gamma`.
    pub fn transform(&self, change: &FrameChange) -> Result<DConnection> {
        let (p, r) = (self.p(), self.r());
        if change.p() != p || change.dims() != self.dims() {
            return Err(Error::DimensionMismatch(
                "frame change and connection dimensions differ".to_string(),
            ));
        }
        let frame_p = change.transform_frame(&self.frame)?;
        let [lam, li, mm, mi] = change.parts().map(|t| t.clone());
        let this = self.clone();
        let mut deps = self.dependence();
        for t in [&lam, &li, &mm, &mi] {
            deps.extend(t.dependence());
        }
        let d = self.dims();
        let nv = d.nvars();
        let total: usize = block_sizes(p, r).iter().sum();
        let all = tensor_fn(d, vec![total], deps, move |at, order| {
            let fr = this.frame.jets(at, order)?;
            let b = this.eval_blocks(at, order)?;
            let lam = lam.eval(at, order)?.data;
            let mm = mm.eval(at, order)?.data;
            let li1 = li.eval(at, next_order(order)?)?.data;
            let mi1 = mi.eval(at, next_order(order)?)?.data;
            let li: Vec<Jet> = li1.iter().map(|j| j.truncate(order)).collect();
            let mi: Vec<Jet> = mi1.iter().map(|j| j.truncate(order)).collect();
            let dli: Vec<Vec<Jet>> = li1.iter().map(|j| fr.deltas(j)).collect::<Result<_>>()?;
            let dmi: Vec<Vec<Jet>> = mi1.iter().map(|j| fr.deltas(j)).collect::<Result<_>>()?;
            let z = || Jet::constant(0.0, nv, order);
            let mut out = Vec::with_capacity(total);
            // H'^a'_{b'g'} = Lam^a'_a [delta_g(Li^a_b') + H^a_{bg} Li^b_b'] Li^g_g'
            for ap in 0..p {
                for bp in 0..p {
                    for gp in 0..p {
                        let mut s = z();
                        for a in 0..p {
                            for g in 0..p {
                                let mut inner = dli[a * p + bp][g].clone();
                                for bb in 0..p {
                                    inner = &inner + &(&b.hh[(a * p + bb) * p + g] * &li[bb * p + bp]);
                                }
                                s = &s + &(&(&lam[ap * p + a] * &inner) * &li[g * p + gp]);
                            }
                        }
                        out.push(s);
                    }
                }
            }
            // Hv'^a'_{b'g'} = M^a'_a [delta_g(Mi^a_b') + Hv^a_{bg} Mi^b_b'] Li^g_g'
            for ap in 0..r {
                for bp in 0..r {
                    for gp in 0..p {
                        let mut s = z();
                        for a in 0..r {
                            for g in 0..p {
                                let mut inner = dmi[a * r + bp][g].clone();
                                for bb in 0..r {
                                    inner = &inner + &(&b.hv[(a * r + bb) * p + g] * &mi[bb * r + bp]);
                                }
                                s = &s + &(&(&mm[ap * r + a] * &inner) * &li[g * p + gp]);
                            }
                        }
                        out.push(s);
                    }
                }
            }
            // Vh'^a'_{b'c'} = Lam^a'_a Vh^a_{bc} Li^b_b' Mi^c_c'
            for ap in 0..p {
                for bp in 0..p {
                    for cp in 0..r {
                        let mut s = z();
                        for a in 0..p {
                            for bb in 0..p {
                                for c in 0..r {
                                    let t = &(&lam[ap * p + a] * &b.vh[(a * p + bb) * r + c])
                                        * &(&li[bb * p + bp] * &mi[c * r + cp]);
                                    s = &s + &t;
                                }
                            }
                        }
                        out.push(s);
                    }
                }
            }
            // Vv'^a'_{b'c'} = M^a'_a Vv^a_{bc} Mi^b_b' Mi^c_c'
            for ap in 0..r {
                for bp in 0..r {
                    for cp in 0..r {
                        let mut s = z();
                        for a in 0..r {
                            for bb in 0..r {
                                for c in 0..r {
                                    let t = &(&mm[ap * r + a] * &b.vv[(a * r + bb) * r + c])
                                        * &(&mi[bb * r + bp] * &mi[c * r + cp]);
                                    s = &s + &t;
                                }
                            }
                        }
                        out.push(s);
                    }
                }
            }
            Ok(out)
        });
        DConnection::from_joint(frame_p, change.pull_to_primed(&all))
    }
}

/// A contiguous window of a flat tensor, reshaped.
pub(crate) fn sub_tensor(t: &Tensor, start: usize, shape: Vec<usize>) -> Tensor {
    let n: usize = shape.iter().product();
    let t = t.clone();
    tensor_fn(t.dims(), shape, t.dependence(), move |at, order| {
        let mut d = t.eval(at, order)?.data;
        d.truncate(start + n);
        Ok(d.split_off(start))
    })
}

/// Fixes the last slot of a d-tensor.
fn slice_last(t: &DTensorField, k: usize) -> Result<DTensorField> {
    let mut slots = t.sig.slots.clone();
    let last = slots.pop().expect("derivative slot");
    let n = last.dim(t.p, t.r);
    let sig = IndexSignature::new(slots)?;
    let c = t.comps.clone();
    let comps = tensor_fn(c.dims(), sig.shape(t.p, t.r), c.dependence(), move |at, order| {
        let d = c.eval(at, order)?.data;
        Ok(d.into_iter().skip(k).step_by(n).collect())
    });
    DTensorField::new(sig, t.p, t.r, comps)
}

/// `d Gamma^a_gamma / dy^b` stored `[a][b][gamma]`.
pub(crate) fn berwald_block(frame: &AdaptedFrame) -> Tensor {
    let (p, r, d) = (frame.p(), frame.r(), frame.dims());
    let g = frame.connection().gamma().clone();
    let deps = g.dependence();
    tensor_fn(d, vec![r, r, p], deps, move |at, order| {
        let gj = g.eval(at, next_order(order)?)?.data;
        let mut out = Vec::with_capacity(r * r * p);
        for a in 0..r {
            for b in 0..r {
                for gm in 0..p {
                    out.push(gj[a * p + gm].partial(d.m + b)?);
                }
            }
        }
        Ok(out)
    })
}

/// Jet-level covariant derivative. `t` carries one order more than the
/// frame and blocks; the result has the direction as its last index.
pub fn cov_deriv_jets(
    sig: &IndexSignature,
    p: usize,
    r: usize,
    t: &[Jet],
    fr: &FrameJets,
    b: &Blocks,
    dir: Family,
) -> Vec<Jet> {
    let shape = sig.shape(p, r);
    let ndir = match dir {
        Family::H => p,
        Family::V => r,
    };
    let (bh, bv) = match dir {
        Family::H => (&b.hh, &b.hv),
        Family::V => (&b.vh, &b.vv),
    };
    // strides of each slot in row-major order
    let mut strides = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    let order = fr.order();
    let t0: Vec<Jet> = t.iter().map(|j| j.truncate(order)).collect();
    let mut out = Vec::with_capacity(t.len() * ndir);
    for (flat, tj) in t.iter().enumerate() {
        let base = match dir {
            Family::H => fr.deltas(tj),
            Family::V => fr.verticals(tj),
        }
        .expect("order checked by caller");
        let idx = unravel(&shape, flat);
        for g in 0..ndir {
            // one term per slot, summed exactly so that relabelling the
            // slots cannot change the result
            let mut terms = Vec::with_capacity(sig.len() + 1);
            terms.push(base[g].clone());
            for (slot, sl) in sig.slots().iter().enumerate() {
                let (blk, n) = match sl.family {
                    Family::H => (bh, p),
                    Family::V => (bv, r),
                };
                let i = idx[slot];
                let rest = flat - i * strides[slot];
                let mut c = Jet::constant(0.0, fr.nvars(), order);
                for e in 0..n {
                    let other = &t0[rest + e * strides[slot]];
                    c = match sl.variance {
                        // + B^i_{e g} T[..e..]
                        Variance::Contra => &c + &(&blk[(i * n + e) * ndir + g] * other),
                        // - B^e_{i g} T[..e..]
                        Variance::Co => &c - &(&blk[(e * n + i) * ndir + g] * other),
                    };
                }
                terms.push(c);
            }
            out.push(jet::exact_sum(&terms).expect("non-empty"));
        }
    }
    out
}

/// Round trips of every coefficient family through `change` and back, the
/// mutual-inverse residual of `change`, and exactness of the identity change
/// (tolerance zero).
pub fn transform_round_trip(
    change: &FrameChange,
    conn: &DConnection,
    samples: &SampleSet,
    tol: f64,
) -> Result<ValidationReport> {
    let pts = &samples.points;
    let frame = conn.frame();
    let mut rep = ValidationReport::new(samples);
    let inv_res = sampling::sweep_max(pts, |at| change.residual_at(at))?;
    rep.push(Residual::from_extremum("transition_inverse", &inv_res, TRANSITION_TOL, pts));

    let back = change.inverse();
    let frame_b = back.transform_frame(&change.transform_frame(frame)?)?;
    let conn_b = conn.transform(change)?.transform(&back)?;
    let id = FrameChange::identity(conn.dims(), conn.p());
    let frame_i = id.transform_frame(frame)?;
    let conn_i = conn.transform(&id)?;
    let families = |f: &AdaptedFrame, c: &DConnection| {
        [
            ("gamma", f.connection().gamma().clone()),
            ("anchor", f.algebroid().anchor().clone()),
            ("structure", f.algebroid().structure().clone()),
            ("dconnection", c.joint().clone()),
        ]
    };
    for ((name, orig), (_, trip)) in families(frame, conn).into_iter().zip(families(&frame_b, &conn_b)) {
        let e = sampling::tensor_gap(&trip, &orig, pts)?;
        rep.push(Residual::from_extremum(format!("{name}_round_trip"), &e, tol, pts));
    }
    let mut exact = Extremum { value: 0.0, argmax: None };
    for ((_, orig), (_, ident)) in families(frame, conn).into_iter().zip(families(&frame_i, &conn_i)) {
        let e = sampling::tensor_gap(&ident, &orig, pts)?;
        if exact.argmax.is_none() || e.value > exact.value {
            exact = e;
        }
    }
    rep.push(Residual::from_extremum("identity_exact", &exact, 0.0, pts));
    Ok(rep)
}

/// A normal d-connection (`p = r`): one horizontal block `H^a_{bc}` and one
/// vertical block `V^a_{bc}`, each shared by both index families.
#[derive(Clone)]
pub struct NormalDConnection {
    frame: AdaptedFrame,
    h: Tensor,
    v: Tensor,
}

impl NormalDConnection {
    pub fn new(frame: AdaptedFrame, h: Tensor, v: Tensor) -> Result<Self> {
        let (p, r) = (frame.p(), frame.r());
        if p != r {
            return Err(Error::DimensionMismatch(format!(
                "normal d-connection needs p = r (got p = {p}, r = {r})"
            )));
        }
        for (name, t) in [("h", &h), ("v", &v)] {
            if t.shape() != [r, r, r] || t.dims() != frame.dims() {
                return Err(Error::DimensionMismatch(format!(
                    "block {name} has shape {:?}, expected [{r}, {r}, {r}]",
                    t.shape()
                )));
            }
        }
        Ok(NormalDConnection { frame, h, v })
    }

    pub fn frame(&self) -> &AdaptedFrame {
        &self.frame
    }

    pub fn h(&self) -> &Tensor {
        &self.h
    }

    pub fn v(&self) -> &Tensor {
        &self.v
    }

    pub fn to_dconnection(&self) -> DConnection {
        DConnection::new(
            self.frame.clone(),
            self.h.clone(),
            self.h.clone(),
            self.v.clone(),
            self.v.clone(),
        )
        .expect("shapes checked at construction")
    }
}
