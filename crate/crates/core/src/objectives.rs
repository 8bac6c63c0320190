//! Synthetic benchmark functions in maximization form and the
//! good / weak / poor hypothesis factory.

use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{Hypothesis, SearchSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Function {
    Ackley,
    Levy,
    Branin,
    Sphere,
}

impl Function {
    pub fn name(&self) -> &'static str {
        match self {
            Function::Ackley => "ackley",
            Function::Levy => "levy",
            Function::Branin => "branin",
            Function::Sphere => "sphere",
        }
    }
}

impl FromStr for Function {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ackley" => Ok(Function::Ackley),
            "levy" => Ok(Function::Levy),
            "branin" => Ok(Function::Branin),
            "sphere" => Ok(Function::Sphere),
            other => Err(Error::Config(format!("unknown objective `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    Good,
    Weak,
    Poor,
}

impl FromStr for Quality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "good" => Ok(Quality::Good),
            "weak" => Ok(Quality::Weak),
            "poor" => Ok(Quality::Poor),
            other => Err(Error::Config(format!("unknown hypothesis quality `{other}`"))),
        }
    }
}

impl fmt::Display for Quality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quality::Good => "good",
            Quality::Weak => "weak",
            Quality::Poor => "poor",
        })
    }
}

/// A benchmark instance: function, dimension, canonical domain and optimum.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveSpec {
    pub function: Function,
    pub bounds: SearchSpace,
    pub optimum_x: Vec<f64>,
    pub optimum_value: f64,
}

impl ObjectiveSpec {
    pub fn new(function: Function, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("objective dimension must be positive".into()));
        }
        let (bounds, optimum_x) = match function {
            Function::Ackley => (SearchSpace::cube(dim, -32.768, 32.768)?, vec![0.0; dim]),
            Function::Levy => (SearchSpace::cube(dim, -10.0, 10.0)?, vec![1.0; dim]),
            Function::Sphere => (SearchSpace::cube(dim, -5.12, 5.12)?, vec![0.0; dim]),
            Function::Branin => {
                if dim != 2 {
                    return Err(Error::InvalidArgument(format!("branin is defined for d = 2, got {dim}")));
                }
                (SearchSpace::new(vec![-5.0, 0.0], vec![10.0, 15.0])?, vec![PI, 2.275])
            }
        };
        let optimum_value = -raw_value(function, &optimum_x);
        Ok(Self { function, bounds, optimum_x, optimum_value })
    }

    /// Parses a registry key such as `ackley:9` or `branin` (dimension 2 by default).
    pub fn from_key(key: &str) -> Result<Self> {
        let (name, dim) = match key.split_once(':') {
            Some((n, d)) => (
                n,
                d.parse::<usize>().map_err(|_| Error::Config(format!("bad dimension in objective key `{key}`")))?,
            ),
            None => (key, 2),
        };
        Self::new(name.parse()?, dim)
    }

    pub fn key(&self) -> String {
        format!("{}:{}", self.function.name(), self.dim())
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    /// Negated standard test-function value.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.bounds.check_dim(x)?;
        if !self.bounds.contains(x) {
            return Err(Error::InvalidArgument(format!("point {x:?} outside the {} domain", self.function.name())));
        }
        Ok(self.value(x))
    }

    /// [`evaluate`](Self::evaluate) without the domain check.
    pub fn value(&self, x: &[f64]) -> f64 {
        -raw_value(self.function, x)
    }

    /// Box of side `width` centered per coordinate at the quality's anchor,
    /// clipped to the domain.
    pub fn quality_hypothesis(&self, quality: Quality, width: f64) -> Result<Hypothesis> {
        let lb = self.bounds.lower();
        let ub = self.bounds.upper();
        let half = width / 2.0;
        if !(width > 0.0) || (0..self.dim()).any(|i| width > ub[i] - lb[i]) {
            return Err(Error::InvalidArgument(format!("hypothesis width {width} does not fit the domain")));
        }
        let center: Vec<f64> = (0..self.dim())
            .map(|i| {
                let opt = self.optimum_x[i];
                match quality {
                    Quality::Poor => lb[i] + half,
                    Quality::Weak => opt - 0.2 * (opt - lb[i]) - half,
                    Quality::Good => opt,
                }
            })
            .collect();
        let lower: Vec<f64> = center.iter().zip(lb).map(|(c, l)| (c - half).max(*l)).collect();
        let upper: Vec<f64> = center.iter().zip(ub).map(|(c, u)| (c + half).min(*u)).collect();
        Hypothesis::axis_box(quality.to_string(), &self.bounds, &lower, &upper)
    }
}

fn raw_value(f: Function, x: &[f64]) -> f64 {
    match f {
        Function::Ackley => ackley(x),
        Function::Levy => levy(x),
        Function::Branin => branin(x),
        Function::Sphere => x.iter().map(|v| v * v).sum(),
    }
}

fn ackley(x: &[f64]) -> f64 {
    let (a, b, c) = (20.0, 0.2, 2.0 * PI);
    let d = x.len() as f64;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / d;
    let cs = x.iter().map(|v| (c * v).cos()).sum::<f64>() / d;
    -a * (-b * sq.sqrt()).exp() - cs.exp() + a + E
}

fn levy(x: &[f64]) -> f64 {
    let w: Vec<f64> = x.iter().map(|v| 1.0 + (v - 1.0) / 4.0).collect();
    let d = w.len();
    let head = (PI * w[0]).sin().powi(2);
    let mid: f64 = w[..d - 1]
        .iter()
        .map(|wi| (wi - 1.0).powi(2) * (1.0 + 10.0 * (PI * wi + 1.0).sin().powi(2)))
        .sum();
    let wd = w[d - 1];
    let tail = (wd - 1.0).powi(2) * (1.0 + (2.0 * PI * wd).sin().powi(2));
    head + mid + tail
}

fn branin(x: &[f64]) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0
}
