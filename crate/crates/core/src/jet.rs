//! Truncated multivariate Taylor jets.
//!
//! A [`Jet`] carries the value of a scalar function together with all of its
//! partial derivatives up to a fixed order (at most [`MAX_ORDER`]) with
//! respect to an ordered list of variables. Arithmetic on jets propagates the
//! derivatives exactly (forward mode), so every derivative the geometry code
//! uses is limited by floating-point rounding only.
//!
//! Second and third derivatives are stored densely, but only the canonical
//! entries (`i <= j <= k`) are ever computed; the rest are mirrored, so the
//! stored arrays are exactly symmetric.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Highest derivative order a jet can carry.
pub const MAX_ORDER: usize = 3;

#[derive(Clone, PartialEq)]
pub struct Jet {
    order: usize,
    nvars: usize,
    value: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    third: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("Jet");
        s.field("order", &self.order).field("value", &self.value);
        if self.order >= 1 {
            s.field("first", &self.first);
        }
        if self.order >= 2 {
            s.field("second", &self.second);
        }
        s.finish()
    }
}

fn check_order(order: usize) -> Result<()> {
    if order > MAX_ORDER {
        Err(Error::OrderExceeded {
            requested: order,
            max: MAX_ORDER,
        })
    } else {
        Ok(())
    }
}

impl Jet {
    /// A jet whose value is `value` and whose derivatives all vanish.
    pub fn constant(value: f64, nvars: usize, order: usize) -> Self {
        assert!(order <= MAX_ORDER, "jet order {order} > {MAX_ORDER}");
        Jet {
            order,
            nvars,
            value,
            first: if order >= 1 { vec![0.0; nvars] } else { Vec::new() },
            second: if order >= 2 { vec![0.0; nvars * nvars] } else { Vec::new() },
            third: if order >= 3 {
                vec![0.0; nvars * nvars * nvars]
            } else {
                Vec::new()
            },
        }
    }

    /// The jet of the coordinate function `t_index` evaluated at `value`.
    pub fn variable(value: f64, index: usize, nvars: usize, order: usize) -> Self {
        assert!(index < nvars);
        let mut j = Self::constant(value, nvars, order);
        if order >= 1 {
            j.first[index] = 1.0;
        }
        j
    }

    /// Seeds one jet per coordinate of `point`.
    pub fn seed(point: &[f64], order: usize) -> Result<Vec<Jet>> {
        check_order(order)?;
        let n = point.len();
        Ok(point
            .iter()
            .enumerate()
            .map(|(i, &v)| Jet::variable(v, i, n, order))
            .collect())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn first(&self) -> &[f64] {
        &self.first
    }

    pub fn d1(&self, i: usize) -> f64 {
        self.first[i]
    }

    pub fn d2(&self, i: usize, j: usize) -> f64 {
        self.second[i * self.nvars + j]
    }

    pub fn d3(&self, i: usize, j: usize, k: usize) -> f64 {
        self.third[(i * self.nvars + j) * self.nvars + k]
    }

    /// Row-major `nvars x nvars` Hessian (empty below order 2).
    pub fn second(&self) -> &[f64] {
        &self.second
    }

    pub fn third(&self) -> &[f64] {
        &self.third
    }

    pub fn zero_like(&self) -> Jet {
        Jet::constant(0.0, self.nvars, self.order)
    }

    pub fn constant_like(&self, value: f64) -> Jet {
        Jet::constant(value, self.nvars, self.order)
    }

    /// Drops derivatives above `order`.
    pub fn truncate(&self, order: usize) -> Jet {
        if order >= self.order {
            return self.clone();
        }
        let mut j = self.clone();
        j.order = order;
        if order < 3 {
            j.third = Vec::new();
        }
        if order < 2 {
            j.second = Vec::new();
        }
        if order < 1 {
            j.first = Vec::new();
        }
        j
    }

    /// The jet of `d/dt_var` of this function, one order lower.
    pub fn partial(&self, var: usize) -> Result<Jet> {
        if self.order == 0 {
            return Err(Error::Invalid(
                "cannot differentiate an order-0 jet".to_string(),
            ));
        }
        let n = self.nvars;
        let order = self.order - 1;
        let mut j = Jet::constant(self.first[var], n, order);
        if order >= 1 {
            for i in 0..n {
                j.first[i] = self.d2(var, i);
            }
        }
        if order >= 2 {
            for i in 0..n {
                for k in 0..n {
                    j.second[i * n + k] = self.d3(var, i, k);
                }
            }
        }
        Ok(j)
    }

    /// All first partials as jets one order lower.
    pub fn gradient(&self) -> Result<Vec<Jet>> {
        (0..self.nvars).map(|i| self.partial(i)).collect()
    }

    fn binary_order(&self, other: &Jet) -> usize {
        assert_eq!(
            self.nvars, other.nvars,
            "jets over different variable lists"
        );
        self.order.min(other.order)
    }

    fn fill_sym2(&mut self, f: impl Fn(usize, usize) -> f64) {
        let n = self.nvars;
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                self.second[i * n + j] = v;
                self.second[j * n + i] = v;
            }
        }
    }

    fn fill_sym3(&mut self, f: impl Fn(usize, usize, usize) -> f64) {
        let n = self.nvars;
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    let v = f(i, j, k);
                    for (a, b, c) in [
                        (i, j, k),
                        (i, k, j),
                        (j, i, k),
                        (j, k, i),
                        (k, i, j),
                        (k, j, i),
                    ] {
                        self.third[(a * n + b) * n + c] = v;
                    }
                }
            }
        }
    }

    pub fn add_scalar(&self, c: f64) -> Jet {
        let mut j = self.clone();
        j.value += c;
        j
    }

    pub fn scale(&self, c: f64) -> Jet {
        let mut j = self.clone();
        j.value *= c;
        j.first.iter_mut().for_each(|v| *v *= c);
        j.second.iter_mut().for_each(|v| *v *= c);
        j.third.iter_mut().for_each(|v| *v *= c);
        j
    }

    fn zip(&self, other: &Jet, op: impl Fn(f64, f64) -> f64) -> Jet {
        let order = self.binary_order(other);
        let mut j = Jet::constant(op(self.value, other.value), self.nvars, order);
        if order >= 1 {
            for (o, (a, b)) in j.first.iter_mut().zip(self.first.iter().zip(&other.first)) {
                *o = op(*a, *b);
            }
        }
        if order >= 2 {
            for (o, (a, b)) in j
                .second
                .iter_mut()
                .zip(self.second.iter().zip(&other.second))
            {
                *o = op(*a, *b);
            }
        }
        if order >= 3 {
            for (o, (a, b)) in j.third.iter_mut().zip(self.third.iter().zip(&other.third)) {
                *o = op(*a, *b);
            }
        }
        j
    }

    fn product(&self, g: &Jet) -> Jet {
        let f = self;
        let order = f.binary_order(g);
        let mut h = Jet::constant(f.value * g.value, f.nvars, order);
        if order >= 1 {
            for i in 0..f.nvars {
                h.first[i] = f.first[i] * g.value + f.value * g.first[i];
            }
        }
        if order >= 2 {
            h.fill_sym2(|i, j| {
                f.d2(i, j) * g.value
                    + f.first[i] * g.first[j]
                    + f.first[j] * g.first[i]
                    + f.value * g.d2(i, j)
            });
        }
        if order >= 3 {
            h.fill_sym3(|i, j, k| {
                f.d3(i, j, k) * g.value
                    + f.d2(i, j) * g.first[k]
                    + f.d2(i, k) * g.first[j]
                    + f.d2(j, k) * g.first[i]
                    + f.first[i] * g.d2(j, k)
                    + f.first[j] * g.d2(i, k)
                    + f.first[k] * g.d2(i, j)
                    + f.value * g.d3(i, j, k)
            });
        }
        h
    }

    /// Quotient `self / g`; a zero denominator is a [`Error::NonSmoothPoint`].
    pub fn checked_div(&self, g: &Jet) -> Result<Jet> {
        if g.value == 0.0 {
            return Err(Error::NonSmoothPoint("division by zero".to_string()));
        }
        let f = self;
        let order = f.binary_order(g);
        let n = f.nvars;
        let gv = g.value;
        let mut q = Jet::constant(f.value / gv, n, order);
        let qv = q.value;
        if order >= 1 {
            for i in 0..n {
                q.first[i] = (f.first[i] - qv * g.first[i]) / gv;
            }
        }
        if order >= 2 {
            let q1 = q.first.clone();
            q.fill_sym2(|i, j| {
                (f.d2(i, j) - q1[i] * g.first[j] - q1[j] * g.first[i] - qv * g.d2(i, j)) / gv
            });
        }
        if order >= 3 {
            let q1 = q.first.clone();
            let q2 = q.second.clone();
            q.fill_sym3(|i, j, k| {
                let q2 = |a: usize, b: usize| q2[a * n + b];
                (f.d3(i, j, k)
                    - q2(i, j) * g.first[k]
                    - q2(i, k) * g.first[j]
                    - q2(j, k) * g.first[i]
                    - q1[i] * g.d2(j, k)
                    - q1[j] * g.d2(i, k)
                    - q1[k] * g.d2(i, j)
                    - qv * g.d3(i, j, k))
                    / gv
            });
        }
        Ok(q)
    }

    /// Applies a univariate function given its value and first three
    /// derivatives at `self.value()`.
    pub fn chain(&self, phi: [f64; 4]) -> Jet {
        let f = self;
        let [p0, p1, p2, p3] = phi;
        let mut h = Jet::constant(p0, f.nvars, f.order);
        if f.order >= 1 {
            for i in 0..f.nvars {
                h.first[i] = p1 * f.first[i];
            }
        }
        if f.order >= 2 {
            h.fill_sym2(|i, j| p1 * f.d2(i, j) + p2 * f.first[i] * f.first[j]);
        }
        if f.order >= 3 {
            h.fill_sym3(|i, j, k| {
                p1 * f.d3(i, j, k)
                    + p2 * (f.d2(i, j) * f.first[k]
                        + f.d2(i, k) * f.first[j]
                        + f.d2(j, k) * f.first[i])
                    + p3 * f.first[i] * f.first[j] * f.first[k]
            });
        }
        h
    }

    pub fn exp(&self) -> Jet {
        let e = self.value.exp();
        self.chain([e, e, e, e])
    }

    pub fn ln(&self) -> Result<Jet> {
        let v = self.value;
        if v <= 0.0 {
            return Err(Error::NonSmoothPoint(format!("ln at non-positive argument {v}")));
        }
        let r = 1.0 / v;
        Ok(self.chain([v.ln(), r, -r * r, 2.0 * r * r * r]))
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = (self.value.sin(), self.value.cos());
        self.chain([s, c, -s, -c])
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = (self.value.sin(), self.value.cos());
        self.chain([c, -s, -c, s])
    }

    pub fn tan(&self) -> Result<Jet> {
        let c = self.value.cos();
        if c == 0.0 {
            return Err(Error::NonSmoothPoint(format!("tan pole at {}", self.value)));
        }
        let t = self.value.tan();
        let s2 = 1.0 + t * t;
        Ok(self.chain([t, s2, 2.0 * t * s2, 2.0 * s2 * (1.0 + 3.0 * t * t)]))
    }

    pub fn sqrt(&self) -> Result<Jet> {
        let v = self.value;
        if v < 0.0 || (v == 0.0 && self.order > 0) {
            return Err(Error::NonSmoothPoint(format!("sqrt at {v}")));
        }
        let s = v.sqrt();
        if self.order == 0 {
            return Ok(self.chain([s, 0.0, 0.0, 0.0]));
        }
        let d1 = 0.5 / s;
        let d2 = -0.5 * d1 / v;
        let d3 = -1.5 * d2 / v;
        Ok(self.chain([s, d1, d2, d3]))
    }

    pub fn abs(&self) -> Result<Jet> {
        let v = self.value;
        if v == 0.0 && self.order > 0 {
            return Err(Error::NonSmoothPoint("abs at its kink 0".to_string()));
        }
        let sgn = if v < 0.0 { -1.0 } else { 1.0 };
        Ok(self.chain([v.abs(), sgn, 0.0, 0.0]))
    }

    /// Integer power; a zero base with a negative exponent is non-smooth.
    pub fn powi(&self, n: i32) -> Result<Jet> {
        let v = self.value;
        if n < 0 && v == 0.0 {
            return Err(Error::NonSmoothPoint(format!("0^{n}")));
        }
        let nf = n as f64;
        let d = |k: i32| -> f64 {
            let mut c = 1.0;
            for t in 0..k {
                c *= nf - t as f64;
            }
            if c == 0.0 {
                0.0
            } else {
                c * v.powi(n - k)
            }
        };
        Ok(self.chain([v.powi(n), d(1), d(2), d(3)]))
    }

    /// Substitutes `inner` (jets of this jet's variables as functions of new
    /// variables) into the Taylor polynomial carried by `self`.
    pub fn compose(&self, inner: &[Jet]) -> Jet {
        assert_eq!(inner.len(), self.nvars, "composition arity");
        let nn = inner.first().map(|j| j.nvars).unwrap_or(0);
        let order = inner
            .iter()
            .map(|j| j.order)
            .min()
            .unwrap_or(self.order)
            .min(self.order);
        let n = self.nvars;
        let mut h = Jet::constant(self.value, nn, order);
        if order >= 1 {
            for a in 0..nn {
                h.first[a] = (0..n).map(|i| self.first[i] * inner[i].first[a]).sum();
            }
        }
        if order >= 2 {
            h.fill_sym2(|a, b| {
                let mut s = 0.0;
                for i in 0..n {
                    s += self.first[i] * inner[i].d2(a, b);
                    for j in 0..n {
                        s += self.d2(i, j) * inner[i].first[a] * inner[j].first[b];
                    }
                }
                s
            });
        }
        if order >= 3 {
            h.fill_sym3(|a, b, c| {
                let mut s = 0.0;
                for i in 0..n {
                    let ui = &inner[i];
                    s += self.first[i] * ui.d3(a, b, c);
                    for j in 0..n {
                        let uj = &inner[j];
                        s += self.d2(i, j)
                            * (ui.d2(a, b) * uj.first[c]
                                + ui.d2(a, c) * uj.first[b]
                                + ui.d2(b, c) * uj.first[a]);
                        for k in 0..n {
                            s += self.d3(i, j, k) * ui.first[a] * uj.first[b] * inner[k].first[c];
                        }
                    }
                }
                s
            });
        }
        h
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        self.zip(rhs, |a, b| a + b)
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        self.zip(rhs, |a, b| a - b)
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.product(rhs)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        let mut j = self.clone();
        j.value = -j.value;
        j.first.iter_mut().for_each(|v| *v = -*v);
        j.second.iter_mut().for_each(|v| *v = -*v);
        j.third.iter_mut().for_each(|v| *v = -*v);
        j
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: &Jet) -> Jet {
                (&self).$m(rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        -&self
    }
}

/// Sum of jets; `None` for an empty iterator.
pub fn sum<'a>(mut it: impl Iterator<Item = &'a Jet>) -> Option<Jet> {
    let first = it.next()?.clone();
    Some(it.fold(first, |acc, j| &acc + j))
}

/// Correctly rounded sum of the terms, so the result does not depend on
/// their order. Falls back to plain summation for non-finite input.
pub fn fsum(terms: &[f64]) -> f64 {
    if terms.iter().any(|v| !v.is_finite()) {
        return terms.iter().sum();
    }
    // Shewchuk's non-overlapping partials
    let mut partials: Vec<f64> = Vec::new();
    for &t in terms {
        let mut x = t;
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    let Some(mut n) = partials.len().checked_sub(1) else {
        return 0.0;
    };
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    // round half-way cases correctly
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

/// Coefficient-wise [`fsum`] of jets of equal order; `None` when empty.
pub fn exact_sum(terms: &[Jet]) -> Option<Jet> {
    let first = terms.first()?;
    let order = terms.iter().map(|t| t.order).min()?;
    let mut out = Jet::constant(0.0, first.nvars, order);
    let mut buf = Vec::with_capacity(terms.len());
    let mut col = |get: &dyn Fn(&Jet) -> f64| {
        buf.clear();
        buf.extend(terms.iter().map(get));
        fsum(&buf)
    };
    out.value = col(&|t| t.value);
    for k in 0..out.first.len() {
        out.first[k] = col(&|t| t.first[k]);
    }
    for k in 0..out.second.len() {
        out.second[k] = col(&|t| t.second[k]);
    }
    for k in 0..out.third.len() {
        out.third[k] = col(&|t| t.third[k]);
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var2(x: f64, y: f64, order: usize) -> (Jet, Jet) {
        (Jet::variable(x, 0, 2, order), Jet::variable(y, 1, 2, order))
    }

    #[test]
    fn fsum_is_order_free() {
        let v = [1e16, 1.0, -1e16, 3.5e-7, 0.1, 0.2, -0.3];
        let mut w = v;
        w.reverse();
        assert_eq!(fsum(&v).to_bits(), fsum(&w).to_bits());
        assert_eq!(fsum(&[0.1, 0.2, 0.3]), 0.6);
        assert_eq!(fsum(&[1.0, 1e100, 1.0, -1e100]), 2.0);
        assert_eq!(fsum(&[]), 0.0);
    }

    #[test]
    fn square_at_three() {
        let x = Jet::variable(3.0, 0, 1, 2);
        let f = &x * &x;
        assert_eq!(f.value(), 9.0);
        assert_eq!(f.d1(0), 6.0);
        assert_eq!(f.d2(0, 0), 2.0);
    }

    #[test]
    fn sine_at_zero() {
        let y = Jet::variable(0.0, 0, 1, 1);
        let f = y.sin();
        assert_eq!(f.value(), 0.0);
        assert_eq!(f.d1(0), 1.0);
    }

    #[test]
    fn product_rule_third_order() {
        // f = x^2 y^3 ; d^3 f / dx dy dy = 2x * 6y = 12 x y
        let (x, y) = var2(1.5, -0.5, 3);
        let f = &(&x * &x) * &(&(&y * &y) * &y);
        assert!((f.d3(0, 1, 1) - 12.0 * 1.5 * -0.5).abs() < 1e-14);
        assert!((f.d3(1, 1, 1) - 6.0 * 1.5 * 1.5).abs() < 1e-14);
        assert_eq!(f.d3(0, 0, 0), 0.0);
        assert_eq!(f.d3(0, 1, 1), f.d3(1, 0, 1));
        assert_eq!(f.d3(1, 1, 0), f.d3(0, 1, 1));
    }

    #[test]
    fn quotient_matches_reciprocal_chain() {
        let (x, y) = var2(0.7, 1.3, 3);
        let q = x.checked_div(&y).unwrap();
        let r = y.powi(-1).unwrap();
        let p = &x * &r;
        for (a, b) in q.third().iter().zip(p.third()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(x.checked_div(&x.zero_like()).is_err());
    }

    #[test]
    fn hessian_is_exactly_symmetric() {
        let (x, y) = var2(0.3, 0.9, 2);
        let f = (&x * &y).exp().sin();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(f.d2(i, j).to_bits(), f.d2(j, i).to_bits());
            }
        }
    }

    #[test]
    fn partial_lowers_order() {
        let (x, y) = var2(2.0, 3.0, 3);
        let f = &(&x * &x) * &y; // x^2 y
        let fx = f.partial(0).unwrap(); // 2 x y
        assert_eq!(fx.order(), 2);
        assert_eq!(fx.value(), 12.0);
        assert_eq!(fx.d1(0), 6.0);
        assert_eq!(fx.d1(1), 4.0);
        assert_eq!(fx.d2(0, 1), 2.0);
    }

    #[test]
    fn compose_is_chain_rule() {
        // outer u(a,b) = a*b ; inner a = t^2, b = sin t  -> t^2 sin t
        let t = Jet::variable(0.8, 0, 1, 3);
        let a = &t * &t;
        let b = t.sin();
        let (ua, ub) = var2(a.value(), b.value(), 3);
        let outer = &ua * &ub;
        let h = outer.compose(&[a.clone(), b.clone()]);
        let direct = &a * &b;
        assert!((h.value() - direct.value()).abs() < 1e-15);
        for k in 0..1 {
            assert!((h.d1(k) - direct.d1(k)).abs() < 1e-14);
        }
        assert!((h.d2(0, 0) - direct.d2(0, 0)).abs() < 1e-13);
        assert!((h.d3(0, 0, 0) - direct.d3(0, 0, 0)).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        let z = Jet::variable(0.0, 0, 1, 1);
        assert!(matches!(z.sqrt(), Err(Error::NonSmoothPoint(_))));
        assert!(matches!(z.abs(), Err(Error::NonSmoothPoint(_))));
        assert!(matches!(z.ln(), Err(Error::NonSmoothPoint(_))));
        assert!(Jet::constant(0.0, 1, 0).sqrt().is_ok());
        assert!(Jet::constant(-1.0, 1, 0).sqrt().is_err());
    }

    #[test]
    fn order_cap() {
        assert!(matches!(
            Jet::seed(&[1.0], 4),
            Err(Error::OrderExceeded { requested: 4, .. })
        ));
    }
}
