//! Ready-made geometries: the classical half-plane, `so(3)`, an exponential
//! frame, a Randers norm, and seeded random data for property checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebroid::{FrameDiffeoData, GeneralizedAlgebroid};
use crate::dtensor::DConnection;
use crate::error::Result;
use crate::field::{Dims, Field, FieldArray, Point, Tensor};
use crate::lagrange::{FundamentalFunction, TorsionPair};
use crate::lang;
use crate::metric::{MetricStructure, ObataData};
use crate::nlconn::{AdaptedFrame, FrameChange, NonlinearConnection};
use crate::sampling::{self, SampleSet, SampleSpec};

/// An adapted frame with a metric on it.
#[derive(Clone)]
pub struct Geometry {
    pub frame: AdaptedFrame,
    pub metric: MetricStructure,
}

/// Parses a row-major list of expressions into a tensor of `shape`.
pub fn tensor(dims: Dims, shape: Vec<usize>, src: &[String]) -> Result<Tensor> {
    let fields: Vec<Field> = src.iter().map(|s| lang::field(s, dims)).collect::<Result<_>>()?;
    Ok(FieldArray::new(dims, shape, fields)?.into_tensor())
}

fn strs(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn zeros(dims: Dims, shape: Vec<usize>) -> Tensor {
    FieldArray::zeros(dims, shape).into_tensor()
}

/// `diag(1/x2^2, 1/x2^2)` on both families over the standard algebroid of
/// the plane with `Gamma = 0`.
pub fn poincare() -> Result<Geometry> {
    let dims = Dims::new(2, 2);
    let alg = GeneralizedAlgebroid::standard(dims);
    let frame = AdaptedFrame::new(alg, NonlinearConnection::zero(dims, 2))?;
    let g = tensor(dims, vec![2, 2], &strs(&["1/x2^2", "0", "0", "1/x2^2"]))?;
    let metric = MetricStructure::new(g.clone(), g)?;
    Ok(Geometry { frame, metric })
}

/// The half-plane box with `x2` in `[0.5, 2]`.
pub fn poincare_samples(count: usize, seed: u64) -> Result<SampleSet> {
    sampling::generate(&SampleSpec::new(
        vec![(-1.0, 1.0), (0.5, 2.0)],
        vec![(-1.0, 1.0), (-1.0, 1.0)],
        count,
        seed,
    ))
}

/// `L^c_{ab} = eps_{abc}` with zero anchor over a 3-dimensional base,
/// identity metric and `Gamma = 0`.
pub fn so3() -> Result<Geometry> {
    let dims = Dims::new(3, 3);
    let mut l = vec!["0".to_string(); 27];
    for (a, b, c, s) in [
        (0, 1, 2, 1),
        (1, 2, 0, 1),
        (2, 0, 1, 1),
        (1, 0, 2, -1),
        (2, 1, 0, -1),
        (0, 2, 1, -1),
    ] {
        l[(c * 3 + a) * 3 + b] = s.to_string();
    }
    let alg = GeneralizedAlgebroid::new(dims, 3, zeros(dims, vec![3, 3]), tensor(dims, vec![3, 3, 3], &l)?)?;
    let frame = AdaptedFrame::new(alg, NonlinearConnection::zero(dims, 3))?;
    let eye = identity(dims, 3)?;
    let metric = MetricStructure::new(eye.clone(), eye)?;
    Ok(Geometry { frame, metric })
}

pub fn identity(dims: Dims, n: usize) -> Result<Tensor> {
    let v: Vec<String> = (0..n * n)
        .map(|k| if k / n == k % n { "1" } else { "0" }.to_string())
        .collect();
    tensor(dims, vec![n, n], &v)
}

/// Standard algebroid of `R^m`, `Gamma = 0`, identity metric blocks.
pub fn flat(m: usize, r: usize) -> Result<Geometry> {
    let dims = Dims::new(m, r);
    let frame = AdaptedFrame::new(GeneralizedAlgebroid::standard(dims), NonlinearConnection::zero(dims, m))?;
    let metric = MetricStructure::new(identity(dims, m)?, identity(dims, r)?)?;
    Ok(Geometry { frame, metric })
}

/// The frame `theta_1 = d/dx1`, `theta_2 = exp(x1) d/dx2` on the plane.
pub fn frame_exp(r: usize) -> Result<FrameDiffeoData> {
    let dims = Dims::new(2, r);
    let theta = tensor(dims, vec![2, 2], &strs(&["1", "0", "0", "exp(x1)"]))?;
    let inv = tensor(dims, vec![2, 2], &strs(&["1", "0", "0", "exp(-x1)"]))?;
    FrameDiffeoData::new(dims, theta, inv)
}

/// `F = |y| + b y1` on a base of dimension `m`.
pub fn randers(m: usize, r: usize, b: f64) -> Result<FundamentalFunction> {
    let dims = Dims::new(m, r);
    let norm: Vec<String> = (1..=r).map(|a| format!("y{a}^2")).collect();
    let src = format!("sqrt({}) + {b:?}*y1", norm.join(" + "));
    Ok(FundamentalFunction::finsler(lang::field(&src, dims)?))
}

/// `F = |y|`.
pub fn euclidean_norm(m: usize, r: usize) -> Result<FundamentalFunction> {
    randers(m, r, 0.0)
}

/// Seeded random data: polynomial coefficients drawn from `[-0.5, 0.5]` and
/// rounded to three decimals, so every object is also a short expression.
pub struct RandomGeometry {
    rng: ChaCha8Rng,
    pub dims: Dims,
    pub p: usize,
}

impl RandomGeometry {
    /// `m = p` in `{2, 3}` and `r` in `{1, 2, 3}`, chosen from the seed.
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(2..=3);
        let r = rng.random_range(1..=3);
        RandomGeometry {
            rng,
            dims: Dims::new(m, r),
            p: m,
        }
    }

    pub fn with_dims(seed: u64, m: usize, r: usize) -> Self {
        RandomGeometry {
            rng: ChaCha8Rng::seed_from_u64(seed),
            dims: Dims::new(m, r),
            p: m,
        }
    }

    fn coeff(&mut self) -> f64 {
        (self.rng.random_range(-0.5..0.5_f64) * 1000.0).round() / 1000.0
    }

    /// Affine in every coordinate plus one random quadratic term.
    pub fn poly(&mut self) -> String {
        let d = self.dims;
        let mut s = format!("{:?}", self.coeff());
        for k in 0..d.nvars() {
            s += &format!(" + {:?}*{}", self.coeff(), d.var(k));
        }
        let i = self.rng.random_range(0..d.nvars());
        let j = self.rng.random_range(0..d.nvars());
        s += &format!(" + {:?}*{}*{}", self.coeff(), d.var(i), d.var(j));
        s
    }

    /// Like [`poly`](Self::poly) in the base coordinates only.
    pub fn poly_x(&mut self) -> String {
        let m = self.dims.m;
        let mut s = format!("{:?}", self.coeff());
        for i in 1..=m {
            s += &format!(" + {:?}*x{i}", self.coeff());
        }
        s
    }

    pub fn poly_tensor(&mut self, shape: Vec<usize>) -> Result<Tensor> {
        let n = shape.iter().product();
        let src: Vec<String> = (0..n).map(|_| self.poly()).collect();
        tensor(self.dims, shape, &src)
    }

    /// `A^T A + I` with polynomial `A`, as expressions.
    pub fn spd_strings(&mut self, n: usize) -> Vec<String> {
        let a: Vec<String> = (0..n * n).map(|_| self.poly()).collect();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let terms: Vec<String> = (0..n)
                    .map(|k| format!("({})*({})", a[k * n + i], a[k * n + j]))
                    .collect();
                let mut s = terms.join(" + ");
                if i == j {
                    s += " + 1";
                }
                out.push(s);
            }
        }
        out
    }

    pub fn spd(&mut self, n: usize) -> Result<Tensor> {
        let s = self.spd_strings(n);
        tensor(self.dims, vec![n, n], &s)
    }

    /// `D (I + N)` with `D = diag(exp(c x))` and strictly upper triangular
    /// affine `N` (`n <= 3`), and its inverse written out in closed form.
    fn triangular(&mut self, n: usize) -> (Vec<String>, Vec<String>) {
        let m = self.dims.m;
        let d: Vec<String> = (0..n)
            .map(|a| format!("exp({:?}*x{})", self.coeff(), (a + 1) % m + 1))
            .collect();
        let mut u = vec![vec!["0".to_string(); n]; n];
        for (i, row) in u.iter_mut().enumerate() {
            for cell in row.iter_mut().skip(i + 1) {
                *cell = format!("({})", self.poly_x());
            }
        }
        // (I + N)^{-1}
        let mut inv = vec![vec!["0".to_string(); n]; n];
        for (i, row) in inv.iter_mut().enumerate() {
            row[i] = "1".to_string();
        }
        if n >= 2 {
            inv[0][1] = format!("-{}", u[0][1]);
        }
        if n == 3 {
            inv[1][2] = format!("-{}", u[1][2]);
            inv[0][2] = format!("({}*{} - {})", u[0][1], u[1][2], u[0][2]);
        }
        let mut fwd = Vec::with_capacity(n * n);
        let mut back = Vec::with_capacity(n * n);
        for a in 0..n {
            for i in 0..n {
                let e = if a == i { "1".to_string() } else { u[a][i].clone() };
                fwd.push(format!("{}*{}", d[a], e));
            }
        }
        for j in 0..n {
            for g in 0..n {
                back.push(format!("{}/{}", inv[j][g], d[g]));
            }
        }
        (fwd, back)
    }

    /// `theta = D (I + N)`, see [`triangular`](Self::triangular).
    pub fn frame(&mut self) -> Result<FrameDiffeoData> {
        let m = self.dims.m;
        let (theta, theta_inv) = self.triangular(m);
        FrameDiffeoData::new(
            self.dims,
            tensor(self.dims, vec![m, m], &theta)?,
            tensor(self.dims, vec![m, m], &theta_inv)?,
        )
    }

    /// Triangular `Lambda` and `M` and the base map `x'_k = s_k x_k + t_k +
    /// q_k x_{k-1}^2`, all with closed-form inverses.
    pub fn frame_change(&mut self) -> Result<FrameChange> {
        let (d, p, m) = (self.dims, self.p, self.dims.m);
        let (l, li) = self.triangular(p);
        let (mm, mi) = self.triangular(d.r);
        let mut fwd = Vec::with_capacity(m);
        let mut back: Vec<String> = Vec::with_capacity(m);
        for k in 0..m {
            let s = 1.0 + self.coeff();
            let t = self.coeff();
            let q = if k == 0 { 0.0 } else { self.coeff() };
            let prev = if k == 0 { "0".to_string() } else { back[k - 1].clone() };
            fwd.push(format!("{s:?}*x{} + {t:?} + {q:?}*x{}^2", k + 1, k.max(1)));
            back.push(format!("((x{} - {t:?} - {q:?}*({prev})^2)/{s:?})", k + 1));
        }
        FrameChange::new(
            d,
            p,
            tensor(d, vec![p, p], &l)?,
            tensor(d, vec![p, p], &li)?,
            tensor(d, vec![d.r, d.r], &mm)?,
            tensor(d, vec![d.r, d.r], &mi)?,
            tensor(d, vec![m], &fwd)?,
            tensor(d, vec![m], &back)?,
        )
    }

    /// Frame-derived algebroid, polynomial `Gamma`, SPD metric blocks.
    pub fn geometry(&mut self, probes: &[Point]) -> Result<Geometry> {
        let (p, r) = (self.p, self.dims.r);
        let alg = self.frame()?.algebroid(probes)?;
        let gamma = self.poly_tensor(vec![r, p])?;
        let frame = AdaptedFrame::new(alg, NonlinearConnection::new(self.dims, p, gamma)?)?;
        let metric = MetricStructure::new(self.spd(p)?, self.spd(r)?)?;
        Ok(Geometry { frame, metric })
    }

    pub fn dconnection(&mut self, frame: &AdaptedFrame) -> Result<DConnection> {
        let (p, r) = (self.p, self.dims.r);
        DConnection::new(
            frame.clone(),
            self.poly_tensor(vec![p, p, p])?,
            self.poly_tensor(vec![r, r, p])?,
            self.poly_tensor(vec![p, p, r])?,
            self.poly_tensor(vec![r, r, r])?,
        )
    }

    pub fn obata_data(&mut self) -> Result<ObataData> {
        let (p, r) = (self.p, self.dims.r);
        Ok(ObataData {
            xh: self.poly_tensor(vec![p, p, p])?,
            yh: self.poly_tensor(vec![r, r, p])?,
            xv: self.poly_tensor(vec![p, p, r])?,
            yv: self.poly_tensor(vec![r, r, r])?,
        })
    }

    /// `X^a_{bc} = P^a_{bc} - P^a_{cb}` with polynomial `P`.
    pub fn antisymmetric(&mut self) -> Result<Tensor> {
        let r = self.dims.r;
        let mut src = vec!["0".to_string(); r * r * r];
        for a in 0..r {
            for b in 0..r {
                for c in b + 1..r {
                    let q = self.poly();
                    src[(a * r + b) * r + c] = q.clone();
                    src[(a * r + c) * r + b] = format!("-({q})");
                }
            }
        }
        tensor(self.dims, vec![r, r, r], &src)
    }

    pub fn torsions(&mut self) -> Result<TorsionPair> {
        let t = self.antisymmetric()?;
        let s = self.antisymmetric()?;
        TorsionPair::new(t, s)
    }

    /// Samples in `[-1, 1]` on every coordinate.
    pub fn samples(&self, count: usize, seed: u64) -> Result<SampleSet> {
        sampling::generate(&SampleSpec::cube(self.dims.m, self.dims.r, -1.0, 1.0, count, seed))
    }
}
