//! Seeded sample points and residual aggregation.
//!
//! Point `i` is drawn from its own ChaCha stream (`seed`, stream `i`), so the
//! list depends only on the `SampleSpec` and never on scheduling. Sweeps evaluate
//! points in parallel and then reduce sequentially in point order; ties keep
//! the earliest point.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{Point, Tensor};

/// Default lower bound on `|y|` when the zero section is excluded.
pub const DEFAULT_FIBER_FLOOR: f64 = 1e-3;

const MAX_REDRAWS: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSpec {
    pub x_box: Vec<(f64, f64)>,
    pub y_box: Vec<(f64, f64)>,
    pub count: usize,
    pub seed: u64,
    /// When set, points with `|y|` below the floor are redrawn.
    pub fiber_floor: Option<f64>,
}

impl SampleSpec {
    pub fn new(x_box: Vec<(f64, f64)>, y_box: Vec<(f64, f64)>, count: usize, seed: u64) -> Self {
        SampleSpec {
            x_box,
            y_box,
            count,
            seed,
            fiber_floor: None,
        }
    }

    pub fn with_fiber_floor(mut self, floor: f64) -> Self {
        self.fiber_floor = Some(floor);
        self
    }

    /// Same box for every coordinate.
    pub fn cube(m: usize, r: usize, lo: f64, hi: f64, count: usize, seed: u64) -> Self {
        Self::new(vec![(lo, hi); m], vec![(lo, hi); r], count, seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub spec: SampleSpec,
    pub points: Vec<Point>,
}

fn check_box(name: &str, b: &[(f64, f64)]) -> Result<()> {
    for (i, &(lo, hi)) in b.iter().enumerate() {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(Error::EmptyBox(format!("{name}[{i}] = [{lo}, {hi}]")));
        }
    }
    Ok(())
}

fn draw(rng: &mut ChaCha8Rng, b: &[(f64, f64)]) -> Vec<f64> {
    b.iter()
        .map(|&(lo, hi)| {
            let u: f64 = rng.random();
            (lo + (hi - lo) * u).min(hi)
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Generates the point list of `spec`.
pub fn generate(spec: &SampleSpec) -> Result<SampleSet> {
    check_box("x_box", &spec.x_box)?;
    check_box("y_box", &spec.y_box)?;
    if spec.count == 0 {
        return Err(Error::Invalid("sample count must be at least 1".to_string()));
    }
    if let Some(floor) = spec.fiber_floor {
        let far: Vec<f64> = spec
            .y_box
            .iter()
            .map(|&(lo, hi)| lo.abs().max(hi.abs()))
            .collect();
        if norm(&far) < floor {
            return Err(Error::EmptyBox(format!(
                "fiber floor {floor} excludes the whole fiber box"
            )));
        }
    }
    let mut points = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let x = draw(&mut rng, &spec.x_box);
        let mut y = draw(&mut rng, &spec.y_box);
        if let Some(floor) = spec.fiber_floor {
            let mut tries = 0;
            while norm(&y) < floor {
                tries += 1;
                if tries > MAX_REDRAWS {
                    return Err(Error::EmptyBox(format!(
                        "no fiber point with norm >= {floor} after {MAX_REDRAWS} draws"
                    )));
                }
                y = draw(&mut rng, &spec.y_box);
            }
        }
        points.push(Point::new(x, y));
    }
    Ok(SampleSet {
        spec: spec.clone(),
        points,
    })
}

/// Largest value of a residual over a point list.
#[derive(Clone, Debug, PartialEq)]
pub struct Extremum {
    pub value: f64,
    pub argmax: Option<usize>,
}

/// Evaluates `f` at every point (in parallel) and returns, per output slot,
/// the maximum and the index of the first point attaining it. NaN counts as
/// infinity.
pub fn sweep<F>(points: &[Point], slots: usize, f: F) -> Result<Vec<Extremum>>
where
    F: Fn(&Point) -> Result<Vec<f64>> + Sync,
{
    let values: Vec<Result<Vec<f64>>> = points.par_iter().map(&f).collect();
    let mut out = vec![
        Extremum {
            value: 0.0,
            argmax: None
        };
        slots
    ];
    for (i, v) in values.into_iter().enumerate() {
        let v = v?;
        debug_assert_eq!(v.len(), slots);
        for (slot, x) in out.iter_mut().zip(v) {
            let x = if x.is_nan() { f64::INFINITY } else { x };
            if slot.argmax.is_none() || x > slot.value {
                slot.value = x;
                slot.argmax = Some(i);
            }
        }
    }
    Ok(out)
}

/// Single-slot [`sweep`].
pub fn sweep_max<F>(points: &[Point], f: F) -> Result<Extremum>
where
    F: Fn(&Point) -> Result<f64> + Sync,
{
    Ok(sweep(points, 1, |p| Ok(vec![f(p)?]))?.remove(0))
}

/// Largest componentwise `|a - b|` of two tensors of equal shape.
pub fn tensor_gap(a: &Tensor, b: &Tensor, points: &[Point]) -> Result<Extremum> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "cannot compare shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    sweep_max(points, |at| {
        let (u, v) = (a.eval(at, 0)?.values(), b.eval(at, 0)?.values());
        Ok(max_abs(u.iter().zip(&v).map(|(x, y)| x - y)))
    })
}

/// Largest `|component|` of a tensor.
pub fn tensor_max(t: &Tensor, points: &[Point]) -> Result<Extremum> {
    sweep_max(points, |at| Ok(max_abs(t.eval(at, 0)?.values())))
}

/// `max |a_i|`, NaN-propagating.
pub fn max_abs(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |m: f64, v| {
        if v.is_nan() || m.is_nan() {
            f64::NAN
        } else {
            m.max(v.abs())
        }
    })
}

/// A named residual compared against its tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub argmax: Option<Point>,
}

impl Residual {
    pub fn new(name: impl Into<String>, value: f64, tolerance: f64, argmax: Option<Point>) -> Self {
        Residual {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
            argmax,
        }
    }

    pub fn from_extremum(
        name: impl Into<String>,
        e: &Extremum,
        tolerance: f64,
        points: &[Point],
    ) -> Self {
        Self::new(name, e.value, tolerance, e.argmax.map(|i| points[i].clone()))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub residuals: Vec<Residual>,
    pub seed: Option<u64>,
    pub sample_count: usize,
    /// Wall-clock time per stage; informational only.
    pub durations: Vec<(String, Duration)>,
}

impl ValidationReport {
    pub fn new(samples: &SampleSet) -> Self {
        ValidationReport {
            residuals: Vec::new(),
            seed: Some(samples.spec.seed),
            sample_count: samples.points.len(),
            durations: Vec::new(),
        }
    }

    pub fn pass(&self) -> bool {
        self.residuals.iter().all(|r| r.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Residual> {
        self.residuals.iter().find(|r| r.name == name)
    }

    pub fn push(&mut self, r: Residual) {
        self.residuals.push(r);
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.residuals.extend(other.residuals);
        self.durations.extend(other.durations);
    }
}
