//! Ten BBOB-style function classes.
//!
//! Each class is evaluated on `z = R (x - optimum_shift)` (plus class-specific
//! conditioning) and offset by `f_offset`. `R` is the identity unless the
//! instance carries a `rotation_seed`. The asymmetry and oscillation warpings
//! of the full BBOB pipeline are not applied.
//!
//! Every class except `linear_slope` attains `f_offset` at `x = optimum_shift`.
//! `linear_slope` is minimized on the boundary point `5 * sign(optimum_shift)`
//! and is constant beyond it.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{parse_field, InstanceRecord};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionClass {
    Sphere,
    Ellipsoid,
    Rastrigin,
    Rosenbrock,
    SchaffersF7,
    Discus,
    BentCigar,
    SharpRidge,
    DifferentPowers,
    LinearSlope,
}

impl FunctionClass {
    pub const ALL: [FunctionClass; 10] = [
        FunctionClass::Sphere,
        FunctionClass::Ellipsoid,
        FunctionClass::Rastrigin,
        FunctionClass::Rosenbrock,
        FunctionClass::SchaffersF7,
        FunctionClass::Discus,
        FunctionClass::BentCigar,
        FunctionClass::SharpRidge,
        FunctionClass::DifferentPowers,
        FunctionClass::LinearSlope,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FunctionClass::Sphere => "sphere",
            FunctionClass::Ellipsoid => "ellipsoid",
            FunctionClass::Rastrigin => "rastrigin",
            FunctionClass::Rosenbrock => "rosenbrock",
            FunctionClass::SchaffersF7 => "schaffers_f7",
            FunctionClass::Discus => "discus",
            FunctionClass::BentCigar => "bent_cigar",
            FunctionClass::SharpRidge => "sharp_ridge",
            FunctionClass::DifferentPowers => "different_powers",
            FunctionClass::LinearSlope => "linear_slope",
        }
    }

    /// Whether the minimum sits at `optimum_shift` (false only for the linear slope).
    pub fn optimum_at_shift(self) -> bool {
        self != FunctionClass::LinearSlope
    }
}

impl fmt::Display for FunctionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FunctionClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        FunctionClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown function class `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionInstance {
    pub id: String,
    pub function_class: FunctionClass,
    pub dimension: usize,
    pub optimum_shift: Vec<f64>,
    pub rotation_seed: Option<u64>,
    pub f_offset: f64,
}

impl FunctionInstance {
    pub fn new(id: impl Into<String>, class: FunctionClass, optimum_shift: Vec<f64>) -> Self {
        FunctionInstance {
            id: id.into(),
            function_class: class,
            dimension: optimum_shift.len(),
            optimum_shift,
            rotation_seed: None,
            f_offset: 0.0,
        }
    }
}

impl InstanceRecord for FunctionInstance {
    fn id(&self) -> &str {
        &self.id
    }

    fn csv_header(instances: &[Self]) -> Result<Vec<String>> {
        let n = instances[0].dimension;
        if instances.iter().any(|i| i.dimension != n || i.optimum_shift.len() != n) {
            return Err(Error::config("instances", "function instances in one file must share a dimension"));
        }
        let mut h = vec!["instance_id".to_string(), "function_class".into(), "dimension".into()];
        h.extend((1..=n).map(|i| format!("optimum_shift_{i}")));
        h.push("rotation_seed".into());
        h.push("f_offset".into());
        Ok(h)
    }

    fn to_csv_row(&self) -> Vec<String> {
        let mut row = vec![
            self.id.clone(),
            self.function_class.to_string(),
            self.dimension.to_string(),
        ];
        row.extend(self.optimum_shift.iter().map(f64::to_string));
        row.push(self.rotation_seed.map(|s| s.to_string()).unwrap_or_default());
        row.push(self.f_offset.to_string());
        row
    }

    fn from_csv_row(header: &[String], row: &[String]) -> std::result::Result<Self, String> {
        if header.len() < 6 {
            return Err(format!("function files need at least 6 columns, header has {}", header.len()));
        }
        let n = header.len() - 5;
        let dimension: usize = parse_field(row, 2, "dimension")?;
        if dimension != n {
            return Err(format!("dimension {dimension} does not match {n} optimum_shift columns"));
        }
        let optimum_shift = (0..n)
            .map(|i| parse_field(row, 3 + i, &header[3 + i]))
            .collect::<std::result::Result<Vec<f64>, _>>()?;
        let rot = row[3 + n].trim();
        let rotation_seed = if rot.is_empty() {
            None
        } else {
            Some(rot.parse().map_err(|e| format!("column `rotation_seed` value `{rot}`: {e}"))?)
        };
        Ok(FunctionInstance {
            id: row[0].clone(),
            function_class: row[1].trim().parse()?,
            dimension,
            optimum_shift,
            rotation_seed,
            f_offset: parse_field(row, 4 + n, "f_offset")?,
        })
    }
}

/// Uniformly random rotation (Haar measure) drawn from `seed`.
pub fn random_rotation(n: usize, rotation_seed: u64) -> DMatrix<f64> {
    let mut rng = seed::rng_for(rotation_seed, "rotation", n as u64);
    let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// An instance prepared for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Objective {
    class: FunctionClass,
    shift: DVector<f64>,
    rotation: Option<DMatrix<f64>>,
    f_offset: f64,
}

impl Objective {
    pub fn new(instance: &FunctionInstance) -> Self {
        Objective {
            class: instance.function_class,
            shift: DVector::from_column_slice(&instance.optimum_shift),
            rotation: instance
                .rotation_seed
                .map(|s| random_rotation(instance.dimension, s)),
            f_offset: instance.f_offset,
        }
    }

    pub fn dimension(&self) -> usize {
        self.shift.len()
    }

    pub fn f_offset(&self) -> f64 {
        self.f_offset
    }

    pub fn class(&self) -> FunctionClass {
        self.class
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dimension() {
            return Err(Error::Domain(format!(
                "point has dimension {}, function has {}",
                x.len(),
                self.dimension()
            )));
        }
        if self.class == FunctionClass::LinearSlope {
            return Ok(self.f_offset + linear_slope(x, &self.shift));
        }
        let d = x - &self.shift;
        let z = match &self.rotation {
            Some(r) => r * d,
            None => d,
        };
        Ok(self.f_offset + base_value(self.class, z.as_slice()))
    }
}

pub fn evaluate_function(instance: &FunctionInstance, x: &[f64]) -> Result<f64> {
    Objective::new(instance).evaluate(&DVector::from_column_slice(x))
}

/// `(i - 1) / (n - 1)` for 0-based `i`, defined as 0 in one dimension.
fn ramp(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        i as f64 / (n - 1) as f64
    }
}

fn base_value(class: FunctionClass, z: &[f64]) -> f64 {
    let n = z.len();
    match class {
        FunctionClass::Sphere => z.iter().map(|v| v * v).sum(),
        FunctionClass::Ellipsoid => z
            .iter()
            .enumerate()
            .map(|(i, v)| 10f64.powf(6.0 * ramp(i, n)) * v * v)
            .sum(),
        FunctionClass::Rastrigin => {
            10.0 * (n as f64 - z.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>())
                + z.iter().map(|v| v * v).sum::<f64>()
        }
        FunctionClass::Rosenbrock => z
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0] + 1.0, w[1] + 1.0);
                100.0 * (a * a - b).powi(2) + (a - 1.0).powi(2)
            })
            .sum(),
        FunctionClass::SchaffersF7 => {
            let conditioned: Vec<f64> = z
                .iter()
                .enumerate()
                .map(|(i, v)| 10f64.powf(0.5 * ramp(i, n)) * v)
                .collect();
            let terms: Vec<f64> = if n == 1 {
                vec![conditioned[0].abs()]
            } else {
                conditioned.windows(2).map(|w| (w[0] * w[0] + w[1] * w[1]).sqrt()).collect()
            };
            let mean = terms
                .iter()
                .map(|&s| s.sqrt() + s.sqrt() * (50.0 * s.powf(0.2)).sin().powi(2))
                .sum::<f64>()
                / terms.len() as f64;
            mean * mean
        }
        FunctionClass::Discus => 1e6 * z[0] * z[0] + z[1..].iter().map(|v| v * v).sum::<f64>(),
        FunctionClass::BentCigar => z[0] * z[0] + 1e6 * z[1..].iter().map(|v| v * v).sum::<f64>(),
        FunctionClass::SharpRidge => z[0] * z[0] + 100.0 * z[1..].iter().map(|v| v * v).sum::<f64>().sqrt(),
        FunctionClass::DifferentPowers => z
            .iter()
            .enumerate()
            .map(|(i, v)| v.abs().powf(2.0 + 4.0 * ramp(i, n)))
            .sum::<f64>()
            .sqrt(),
        FunctionClass::LinearSlope => unreachable!("handled on raw coordinates"),
    }
}

/// Slope pointing at the corner `5 * sign(shift)`; flat beyond it.
fn linear_slope(x: &DVector<f64>, shift: &DVector<f64>) -> f64 {
    let n = x.len();
    (0..n)
        .map(|i| {
            let sign = if shift[i] < 0.0 { -1.0 } else { 1.0 };
            let s = sign * 10f64.powf(ramp(i, n));
            let x_opt = 5.0 * sign;
            let z = if x_opt * x[i] < 25.0 { x[i] } else { x_opt };
            5.0 * s.abs() - s * z
        })
        .sum()
}
