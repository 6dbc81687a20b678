//! Small dense linear algebra over `f64` and over jets.

use crate::error::{Error, Result};
use crate::jet::Jet;

/// Relative pivot tolerance for inversion.
pub const PIVOT_TOL: f64 = 1e-12;

/// Relative threshold used for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Row-major `n x n` inverse by Gauss-Jordan elimination with partial
/// pivoting. A pivot below `PIVOT_TOL` times the largest entry is singular.
pub fn inverse(a: &[f64], n: usize) -> Option<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    let scale = max_abs(a);
    if n > 0 && scale == 0.0 {
        return None;
    }
    let mut m = a.to_vec();
    let mut inv = identity(n);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .expect("non-empty");
        if !(m[piv * n + col].abs() > PIVOT_TOL * scale) {
            return None;
        }
        swap_rows(&mut m, n, piv, col);
        swap_rows(&mut inv, n, piv, col);
        let p = m[col * n + col];
        for k in 0..n {
            m[col * n + k] /= p;
            inv[col * n + k] /= p;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = m[row * n + col];
            if f == 0.0 {
                continue;
            }
            for k in 0..n {
                m[row * n + k] -= f * m[col * n + k];
                inv[row * n + k] -= f * inv[col * n + k];
            }
        }
    }
    Some(inv)
}

fn swap_rows<T>(m: &mut [T], n: usize, a: usize, b: usize) {
    if a != b {
        for k in 0..n {
            m.swap(a * n + k, b * n + k);
        }
    }
}

pub fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

/// `a (r x k) * b (k x c)`, row-major.
pub fn matmul(a: &[f64], b: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[i * c + j] = (0..k).map(|t| a[i * k + t] * b[t * c + j]).sum();
        }
    }
    out
}

/// `max |a b - I|` for square matrices.
pub fn identity_residual(a: &[f64], b: &[f64], n: usize) -> f64 {
    let p = matmul(a, b, n, n, n);
    let id = identity(n);
    p.iter()
        .zip(&id)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Inverse of a square matrix of jets. Pivoting follows the values, and
/// derivatives are carried through the elimination exactly.
pub fn inverse_jets(a: &[Jet], n: usize) -> Result<Vec<Jet>> {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return Ok(Vec::new());
    }
    let vals: Vec<f64> = a.iter().map(Jet::value).collect();
    let scale = max_abs(&vals);
    let singular = || Error::SingularMetric(format!("{n}x{n} matrix is singular"));
    if scale == 0.0 {
        return Err(singular());
    }
    let mut m = a.to_vec();
    let mut inv: Vec<Jet> = (0..n * n)
        .map(|k| a[0].constant_like(if k / n == k % n { 1.0 } else { 0.0 }))
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| {
                m[i * n + col]
                    .value()
                    .abs()
                    .total_cmp(&m[j * n + col].value().abs())
            })
            .expect("non-empty");
        if !(m[piv * n + col].value().abs() > PIVOT_TOL * scale) {
            return Err(singular());
        }
        swap_rows(&mut m, n, piv, col);
        swap_rows(&mut inv, n, piv, col);
        let p = m[col * n + col].clone();
        for k in 0..n {
            m[col * n + k] = m[col * n + k].checked_div(&p)?;
            inv[col * n + k] = inv[col * n + k].checked_div(&p)?;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = m[row * n + col].clone();
            for k in 0..n {
                let t = &f * &m[col * n + k];
                m[row * n + k] = &m[row * n + k] - &t;
                let t = &f * &inv[col * n + k];
                inv[row * n + k] = &inv[row * n + k] - &t;
            }
        }
    }
    Ok(inv)
}

/// Rank of an `r x c` matrix by full-pivot elimination; entries below
/// `rel_tol` times the largest entry count as zero.
pub fn rank(a: &[f64], r: usize, c: usize, rel_tol: f64) -> usize {
    let scale = max_abs(a);
    if scale == 0.0 {
        return 0;
    }
    let mut m = a.to_vec();
    let mut rank = 0;
    let mut rows: Vec<usize> = (0..r).collect();
    let mut cols: Vec<usize> = (0..c).collect();
    while !rows.is_empty() && !cols.is_empty() {
        let mut best = (0, 0, 0.0_f64);
        for (ri, &i) in rows.iter().enumerate() {
            for (ci, &j) in cols.iter().enumerate() {
                let v = m[i * c + j].abs();
                if v > best.2 {
                    best = (ri, ci, v);
                }
            }
        }
        if !(best.2 > rel_tol * scale) {
            break;
        }
        let pi = rows.swap_remove(best.0);
        let pj = cols.swap_remove(best.1);
        let p = m[pi * c + pj];
        for &i in &rows {
            let f = m[i * c + pj] / p;
            for &j in &cols {
                m[i * c + j] -= f * m[pi * c + j];
            }
        }
        rank += 1;
    }
    rank
}

/// Pivots of a symmetric pivoted block factorization `P A P^T = L D L^T`
/// with 1x1 and 2x2 diagonal blocks. Each 2x2 block contributes its two
/// eigenvalues, so the sign pattern of the returned values equals the
/// inertia of `a`.
pub fn symmetric_pivots(a: &[f64], n: usize) -> Vec<f64> {
    const ALPHA: f64 = 0.6404;
    let mut s = a.to_vec();
    let mut live: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(n);
    while !live.is_empty() {
        let (mut di, mut dmax) = (live[0], -1.0_f64);
        for &i in &live {
            if s[i * n + i].abs() > dmax {
                dmax = s[i * n + i].abs();
                di = i;
            }
        }
        let (mut ok, mut ol, mut omax) = (0, 0, 0.0_f64);
        for (x, &i) in live.iter().enumerate() {
            for &j in &live[x + 1..] {
                if s[i * n + j].abs() > omax {
                    omax = s[i * n + j].abs();
                    (ok, ol) = (i, j);
                }
            }
        }
        if dmax >= ALPHA * omax {
            let d = s[di * n + di];
            out.push(d);
            live.retain(|&i| i != di);
            if d != 0.0 {
                for &i in &live {
                    for &j in &live {
                        s[i * n + j] -= s[i * n + di] * s[di * n + j] / d;
                    }
                }
            }
        } else {
            let (a11, a12, a22) = (s[ok * n + ok], s[ok * n + ol], s[ol * n + ol]);
            let det = a11 * a22 - a12 * a12;
            let mean = 0.5 * (a11 + a22);
            let rad = (0.25 * (a11 - a22).powi(2) + a12 * a12).sqrt();
            out.push(mean + rad);
            out.push(mean - rad);
            live.retain(|&i| i != ok && i != ol);
            for &i in &live {
                for &j in &live {
                    let (ci1, ci2) = (s[i * n + ok], s[i * n + ol]);
                    let (c1j, c2j) = (s[ok * n + j], s[ol * n + j]);
                    // C B^{-1} C^T with B^{-1} = [[a22, -a12], [-a12, a11]] / det
                    let v = (ci1 * (a22 * c1j - a12 * c2j) + ci2 * (-a12 * c1j + a11 * c2j)) / det;
                    s[i * n + j] -= v;
                }
            }
        }
    }
    out
}

/// `(positive, negative, zero)` pivot counts, zero meaning below `tol`
/// relative to the largest entry.
pub fn inertia(a: &[f64], n: usize, tol: f64) -> (usize, usize, usize) {
    let scale = max_abs(a).max(f64::MIN_POSITIVE);
    let mut c = (0, 0, 0);
    for p in symmetric_pivots(a, n) {
        if p > tol * scale {
            c.0 += 1;
        } else if p < -tol * scale {
            c.1 += 1;
        } else {
            c.2 += 1;
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_diagonal() {
        let a = [0.25, 0.0, 0.0, 0.25];
        assert_eq!(inverse(&a, 2).unwrap(), vec![4.0, 0.0, 0.0, 4.0]);
        assert!(inverse(&[1.0, 2.0, 2.0, 4.0], 2).is_none());
        assert!(inverse(&[0.0; 4], 2).is_none());
    }

    #[test]
    fn jet_inverse_derivative() {
        // d/dt (1/t) = -1/t^2 through a 1x1 matrix
        let t = Jet::variable(2.0, 0, 1, 2);
        let inv = inverse_jets(&[t], 1).unwrap();
        assert_eq!(inv[0].value(), 0.5);
        assert_eq!(inv[0].d1(0), -0.25);
        assert_eq!(inv[0].d2(0, 0), 0.25);
    }

    #[test]
    fn ranks() {
        assert_eq!(rank(&identity(3), 3, 3, RANK_TOL), 3);
        assert_eq!(rank(&[1.0, 2.0, 2.0, 4.0], 2, 2, RANK_TOL), 1);
        assert_eq!(rank(&[0.0; 4], 2, 2, RANK_TOL), 0);
    }

    #[test]
    fn inertia_counts() {
        assert_eq!(inertia(&[0.0, 1.0, 1.0, 0.0], 2, 1e-10), (1, 1, 0));
        assert_eq!(inertia(&[2.0, 1.0, 1.0, 2.0], 2, 1e-10), (2, 0, 0));
        assert_eq!(inertia(&[1.0, 0.0, 0.0, 0.0], 2, 1e-10), (1, 0, 1));
        let a = [1.0, 2.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, -3.0];
        assert_eq!(inertia(&a, 3, 1e-10), (1, 2, 0));
    }
}
