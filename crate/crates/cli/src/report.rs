//! The JSON report.
//!
//! Numbers are written with 17 significant digits so that every double
//! survives a round trip; non-finite values become the strings `"NaN"`,
//! `"Infinity"` and `"-Infinity"`.

use algcalc_core::sampling::Residual;
use algcalc_core::Point;
use serde::ser::Error as _;
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

pub const REPORT_SCHEMA_VERSION: u64 = 1;

/// A double serialized in round-trip exact scientific notation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_nan() {
            s.serialize_str("NaN")
        } else if v.is_infinite() {
            s.serialize_str(if v > 0.0 { "Infinity" } else { "-Infinity" })
        } else {
            RawValue::from_string(format!("{v:.16e}"))
                .map_err(S::Error::custom)?
                .serialize(s)
        }
    }
}

/// A nested array of numbers.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Nested {
    Leaf(Num),
    List(Vec<Nested>),
}

impl Nested {
    /// Row-major `values` reshaped to `shape`.
    pub fn from_flat(values: &[f64], shape: &[usize]) -> Nested {
        match shape.split_first() {
            None => Nested::Leaf(Num(values[0])),
            Some((&n, rest)) => {
                let stride: usize = rest.iter().product();
                Nested::List(
                    (0..n)
                        .map(|i| Nested::from_flat(&values[i * stride..(i + 1) * stride], rest))
                        .collect(),
                )
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JsonPoint {
    pub x: Vec<Num>,
    pub y: Vec<Num>,
}

impl From<&Point> for JsonPoint {
    fn from(p: &Point) -> Self {
        JsonPoint {
            x: p.x.iter().copied().map(Num).collect(),
            y: p.y.iter().copied().map(Num).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: Num,
    pub tolerance: Num,
    pub pass: bool,
    pub argmax: Option<JsonPoint>,
}

impl From<&Residual> for Check {
    fn from(r: &Residual) -> Self {
        Check {
            name: r.name.clone(),
            value: Num(r.value),
            tolerance: Num(r.tolerance),
            pass: r.pass,
            argmax: r.argmax.as_ref().map(JsonPoint::from),
        }
    }
}

/// Largest absolute value of a quantity over the samples.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub max: Num,
    pub argmax: Option<JsonPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Nested,
}

/// Coefficients of one object at one probe point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub probe: JsonPoint,
    pub entries: Vec<Entry>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u64,
    pub command: String,
    pub seed: u64,
    pub sample_count: usize,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub summary: Vec<Summary>,
    pub tables: Vec<Table>,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<JsonPoint>>,
}

impl Report {
    pub fn new(command: &str, seed: u64, sample_count: usize) -> Self {
        Report {
            schema_version: REPORT_SCHEMA_VERSION,
            command: command.to_string(),
            seed,
            sample_count,
            pass: true,
            checks: Vec::new(),
            summary: Vec::new(),
            tables: Vec::new(),
            notes: Vec::new(),
            samples: None,
        }
    }

    pub fn push(&mut self, r: &Residual) {
        self.pass &= r.pass;
        self.checks.push(Check::from(r));
    }

    pub fn extend<'a>(&mut self, rs: impl IntoIterator<Item = &'a Residual>) {
        for r in rs {
            self.push(r);
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
