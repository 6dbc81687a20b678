//! Scalar and tensor fields over total-space coordinates `(x, y)`.
//!
//! Every field evaluates to [`Jet`]s whose variable list is the base
//! coordinates `x1..xm` followed by the fiber coordinates `y1..yr`.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jet::{Jet, MAX_ORDER};

/// A point `(x, y)` of the total space.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Point {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Point { x, y }
    }

    /// The concatenated coordinate list `x` then `y`.
    pub fn coords(&self) -> Vec<f64> {
        let mut c = self.x.clone();
        c.extend_from_slice(&self.y);
        c
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.x.len(), self.y.len())
    }
}

/// Coordinate counts of a total space: `m` base and `r` fiber coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims {
    pub m: usize,
    pub r: usize,
}

impl Dims {
    pub fn new(m: usize, r: usize) -> Self {
        Dims { m, r }
    }

    pub fn nvars(&self) -> usize {
        self.m + self.r
    }

    /// Jet variable index of `v`.
    pub fn index(&self, v: Var) -> usize {
        match v {
            Var::X(i) => i,
            Var::Y(a) => self.m + a,
        }
    }

    pub fn var(&self, index: usize) -> Var {
        if index < self.m {
            Var::X(index)
        } else {
            Var::Y(index - self.m)
        }
    }

    pub fn check(&self, at: &Point) -> Result<()> {
        if at.x.len() != self.m || at.y.len() != self.r {
            return Err(Error::DimensionMismatch(format!(
                "point has ({}, {}) coordinates, field expects ({}, {})",
                at.x.len(),
                at.y.len(),
                self.m,
                self.r
            )));
        }
        if at.x.iter().chain(&at.y).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite point coordinate".to_string()));
        }
        Ok(())
    }
}

/// A coordinate variable, zero-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    X(usize),
    Y(usize),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::Y(a) => write!(f, "y{}", a + 1),
        }
    }
}

/// A smooth real function of `(x, y)` that evaluates to jets.
///
/// Implementations must be pure. `jet` may assume the point has already been
/// checked against [`ScalarField::dims`] and that `order <= MAX_ORDER`.
pub trait ScalarField: Send + Sync {
    fn dims(&self) -> Dims;

    /// Variables the field may depend on. Partials with respect to any other
    /// variable are zero.
    fn dependence(&self) -> BTreeSet<Var>;

    fn jet(&self, at: &Point, order: usize) -> Result<Jet>;
}

pub type Field = Arc<dyn ScalarField>;

/// Checked evaluation of a field's jet.
pub fn eval_jet(f: &dyn ScalarField, at: &Point, order: usize) -> Result<Jet> {
    if order > MAX_ORDER {
        return Err(Error::OrderExceeded {
            requested: order,
            max: MAX_ORDER,
        });
    }
    f.dims().check(at)?;
    f.jet(at, order)
}

pub fn eval(f: &dyn ScalarField, at: &Point) -> Result<f64> {
    Ok(eval_jet(f, at, 0)?.value())
}

pub fn is_x_only(f: &dyn ScalarField) -> bool {
    f.dependence().iter().all(|v| matches!(v, Var::X(_)))
}

/// Central-difference estimate of `df/dvar` with step `h`.
pub fn fd_partial(f: &dyn ScalarField, at: &Point, var: Var, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Invalid(format!("finite-difference step {h}")));
    }
    let shift = |d: f64| {
        let mut p = at.clone();
        match var {
            Var::X(i) => p.x[i] += d,
            Var::Y(a) => p.y[a] += d,
        }
        p
    };
    let fp = eval(f, &shift(h))?;
    let fm = eval(f, &shift(-h))?;
    Ok((fp - fm) / (2.0 * h))
}

/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-5;

struct Constant {
    dims: Dims,
    value: f64,
}

impl ScalarField for Constant {
    fn dims(&self) -> Dims {
        self.dims
    }
    fn dependence(&self) -> BTreeSet<Var> {
        BTreeSet::new()
    }
    fn jet(&self, _at: &Point, order: usize) -> Result<Jet> {
        Ok(Jet::constant(self.value, self.dims.nvars(), order))
    }
}

pub fn constant(dims: Dims, value: f64) -> Field {
    Arc::new(Constant { dims, value })
}

pub fn zero(dims: Dims) -> Field {
    constant(dims, 0.0)
}

/// The coordinate function of `v`.
pub fn coordinate(dims: Dims, v: Var) -> Field {
    let idx = dims.index(v);
    from_fn(dims, [v], move |at, order| {
        let c = at.coords();
        Ok(Jet::variable(c[idx], idx, c.len(), order))
    })
}

struct FnField<F> {
    dims: Dims,
    deps: BTreeSet<Var>,
    f: F,
}

impl<F> ScalarField for FnField<F>
where
    F: Fn(&Point, usize) -> Result<Jet> + Send + Sync,
{
    fn dims(&self) -> Dims {
        self.dims
    }
    fn dependence(&self) -> BTreeSet<Var> {
        self.deps.clone()
    }
    fn jet(&self, at: &Point, order: usize) -> Result<Jet> {
        (self.f)(at, order)
    }
}

/// A field from a closure producing its jet.
pub fn from_fn<F>(dims: Dims, deps: impl IntoIterator<Item = Var>, f: F) -> Field
where
    F: Fn(&Point, usize) -> Result<Jet> + Send + Sync + 'static,
{
    Arc::new(FnField {
        dims,
        deps: deps.into_iter().collect(),
        f,
    })
}

pub fn union_deps<'a>(fields: impl IntoIterator<Item = &'a Field>) -> BTreeSet<Var> {
    let mut s = BTreeSet::new();
    for f in fields {
        s.extend(f.dependence());
    }
    s
}

/// `df/dv`, evaluated from one extra jet order of `f`.
pub fn partial(f: &Field, v: Var) -> Field {
    let dims = f.dims();
    let idx = dims.index(v);
    let inner = f.clone();
    let deps = if f.dependence().contains(&v) {
        f.dependence()
    } else {
        BTreeSet::new()
    };
    from_fn(dims, deps, move |at, order| {
        if order + 1 > MAX_ORDER {
            return Err(Error::OrderExceeded {
                requested: order + 1,
                max: MAX_ORDER,
            });
        }
        inner.jet(at, order + 1)?.partial(idx)
    })
}

fn binary(f: &Field, g: &Field, op: fn(&Jet, &Jet) -> Result<Jet>) -> Field {
    assert_eq!(f.dims(), g.dims(), "combining fields over different spaces");
    let (a, b) = (f.clone(), g.clone());
    from_fn(f.dims(), union_deps([f, g]), move |at, order| {
        op(&a.jet(at, order)?, &b.jet(at, order)?)
    })
}

pub fn add(f: &Field, g: &Field) -> Field {
    binary(f, g, |a, b| Ok(a + b))
}

pub fn sub(f: &Field, g: &Field) -> Field {
    binary(f, g, |a, b| Ok(a - b))
}

pub fn mul(f: &Field, g: &Field) -> Field {
    binary(f, g, |a, b| Ok(a * b))
}

pub fn div(f: &Field, g: &Field) -> Field {
    binary(f, g, |a, b| a.checked_div(b))
}

pub fn scale(f: &Field, c: f64) -> Field {
    let a = f.clone();
    from_fn(f.dims(), f.dependence(), move |at, order| {
        Ok(a.jet(at, order)?.scale(c))
    })
}

/// Sum of a non-empty list of fields.
pub fn sum(fields: &[Field]) -> Field {
    assert!(!fields.is_empty(), "sum of no fields");
    let fs = fields.to_vec();
    from_fn(fields[0].dims(), union_deps(fields), move |at, order| {
        let mut acc = fs[0].jet(at, order)?;
        for f in &fs[1..] {
            acc = &acc + &f.jet(at, order)?;
        }
        Ok(acc)
    })
}

/// `f` pulled back along a coordinate map: the result evaluated at `q` is
/// `f(map(q))`, where `map` lists the `m + r` coordinates of `f`'s space as
/// fields over the new space `dims`.
pub fn compose(f: &Field, dims: Dims, map: &[Field]) -> Field {
    assert_eq!(map.len(), f.dims().nvars(), "composition arity");
    let fd = f.dims();
    let outer = f.clone();
    let inner = map.to_vec();
    let deps: BTreeSet<Var> = f
        .dependence()
        .iter()
        .flat_map(|v| inner[fd.index(*v)].dependence())
        .collect();
    from_fn(dims, deps, move |at, order| {
        let jets = inner
            .iter()
            .map(|g| g.jet(at, order))
            .collect::<Result<Vec<_>>>()?;
        let image = Point::new(
            jets[..fd.m].iter().map(Jet::value).collect(),
            jets[fd.m..].iter().map(Jet::value).collect(),
        );
        fd.check(&image)?;
        Ok(outer.jet(&image, order)?.compose(&jets))
    })
}

/// A dense array of jets, row-major over `shape`.
#[derive(Clone, Debug)]
pub struct JetArray {
    pub shape: Vec<usize>,
    pub data: Vec<Jet>,
}

impl JetArray {
    pub fn new(shape: Vec<usize>, data: Vec<Jet>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        JetArray { shape, data }
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        offset(&self.shape, idx)
    }

    pub fn get(&self, idx: &[usize]) -> &Jet {
        &self.data[self.offset(idx)]
    }

    pub fn values(&self) -> Vec<f64> {
        self.data.iter().map(Jet::value).collect()
    }
}

/// Row-major offset of a multi-index.
pub fn offset(shape: &[usize], idx: &[usize]) -> usize {
    debug_assert_eq!(shape.len(), idx.len());
    idx.iter()
        .zip(shape)
        .fold(0, |acc, (&i, &n)| {
            debug_assert!(i < n);
            acc * n + i
        })
}

/// Inverse of [`offset`].
pub fn unravel(shape: &[usize], mut flat: usize) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for (slot, &n) in shape.iter().enumerate().rev() {
        idx[slot] = flat % n;
        flat /= n;
    }
    idx
}

/// A field with array-valued components evaluated together.
pub trait TensorField: Send + Sync {
    fn dims(&self) -> Dims;
    fn shape(&self) -> &[usize];
    fn dependence(&self) -> BTreeSet<Var>;
    fn eval(&self, at: &Point, order: usize) -> Result<JetArray>;
}

pub type Tensor = Arc<dyn TensorField>;

/// A tensor whose components are independent scalar fields.
pub struct FieldArray {
    dims: Dims,
    shape: Vec<usize>,
    fields: Vec<Field>,
}

impl FieldArray {
    pub fn new(dims: Dims, shape: Vec<usize>, fields: Vec<Field>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if fields.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} components for shape {:?}",
                fields.len(),
                shape
            )));
        }
        if let Some(f) = fields.iter().find(|f| f.dims() != dims) {
            return Err(Error::DimensionMismatch(format!(
                "component over {:?}, array over {:?}",
                f.dims(),
                dims
            )));
        }
        Ok(FieldArray {
            dims,
            shape,
            fields,
        })
    }

    pub fn zeros(dims: Dims, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        let z = zero(dims);
        FieldArray {
            dims,
            shape,
            fields: vec![z; n],
        }
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn get(&self, idx: &[usize]) -> &Field {
        &self.fields[offset(&self.shape, idx)]
    }

    pub fn into_tensor(self) -> Tensor {
        Arc::new(self)
    }
}

impl TensorField for FieldArray {
    fn dims(&self) -> Dims {
        self.dims
    }
    fn shape(&self) -> &[usize] {
        &self.shape
    }
    fn dependence(&self) -> BTreeSet<Var> {
        union_deps(&self.fields)
    }
    fn eval(&self, at: &Point, order: usize) -> Result<JetArray> {
        let data = self
            .fields
            .iter()
            .map(|f| f.jet(at, order))
            .collect::<Result<Vec<_>>>()?;
        Ok(JetArray::new(self.shape.clone(), data))
    }
}

struct FnTensor<F> {
    dims: Dims,
    shape: Vec<usize>,
    deps: BTreeSet<Var>,
    f: F,
}

impl<F> TensorField for FnTensor<F>
where
    F: Fn(&Point, usize) -> Result<Vec<Jet>> + Send + Sync,
{
    fn dims(&self) -> Dims {
        self.dims
    }
    fn shape(&self) -> &[usize] {
        &self.shape
    }
    fn dependence(&self) -> BTreeSet<Var> {
        self.deps.clone()
    }
    fn eval(&self, at: &Point, order: usize) -> Result<JetArray> {
        let data = (self.f)(at, order)?;
        debug_assert_eq!(data.len(), self.shape.iter().product::<usize>());
        Ok(JetArray::new(self.shape.clone(), data))
    }
}

/// A tensor from a closure producing all components (row-major).
pub fn tensor_fn<F>(dims: Dims, shape: Vec<usize>, deps: BTreeSet<Var>, f: F) -> Tensor
where
    F: Fn(&Point, usize) -> Result<Vec<Jet>> + Send + Sync + 'static,
{
    Arc::new(FnTensor {
        dims,
        shape,
        deps,
        f,
    })
}

/// Checked evaluation of a tensor.
pub fn eval_tensor(t: &dyn TensorField, at: &Point, order: usize) -> Result<JetArray> {
    if order > MAX_ORDER {
        return Err(Error::OrderExceeded {
            requested: order,
            max: MAX_ORDER,
        });
    }
    t.dims().check(at)?;
    t.eval(at, order)
}

/// Tensor analogue of [`compose`]: every component pulled back along `map`.
pub fn compose_tensor(t: &Tensor, dims: Dims, map: &[Field]) -> Tensor {
    let td = t.dims();
    assert_eq!(map.len(), td.nvars(), "composition arity");
    let outer = t.clone();
    let inner = map.to_vec();
    let deps: BTreeSet<Var> = t
        .dependence()
        .iter()
        .flat_map(|v| inner[td.index(*v)].dependence())
        .collect();
    tensor_fn(dims, t.shape().to_vec(), deps, move |at, order| {
        let jets = inner
            .iter()
            .map(|g| g.jet(at, order))
            .collect::<Result<Vec<_>>>()?;
        let image = Point::new(
            jets[..td.m].iter().map(Jet::value).collect(),
            jets[td.m..].iter().map(Jet::value).collect(),
        );
        td.check(&image)?;
        Ok(outer
            .eval(&image, order)?
            .data
            .iter()
            .map(|j| j.compose(&jets))
            .collect())
    })
}

/// One component of a tensor as a scalar field.
pub fn component(t: &Tensor, idx: &[usize]) -> Field {
    let off = offset(t.shape(), idx);
    let t2 = t.clone();
    from_fn(t.dims(), t.dependence(), move |at, order| {
        Ok(t2.eval(at, order)?.data.swap_remove(off))
    })
}

/// All components of a tensor as scalar fields.
pub fn components(t: &Tensor) -> Vec<Field> {
    let n: usize = t.shape().iter().product();
    (0..n)
        .map(|k| component(t, &unravel(t.shape(), k)))
        .collect()
}
