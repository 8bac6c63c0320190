//! Box-bounded search domains and expert hypotheses expressed as linear
//! constraint systems `A x = b`, `B x <= c` over that domain.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Relative tolerance applied to equality rows: `|A_r x - b_r| <= EQ_TOL_REL * ||A_r||`.
pub const EQ_TOL_REL: f64 = 1e-9;

/// Number of rejection draws used to certify that a hypothesis is non-empty.
pub const CERTIFY_ATTEMPTS: usize = 10_000;

/// Default rejection budget for a single uniform draw inside a hypothesis.
pub const DEFAULT_MAX_ATTEMPTS: usize = 100_000;

const CERTIFY_SEED: u64 = 0x6879_7062_6f5f_6365;

/// The global box domain `X`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
    names: Option<Vec<String>>,
}

impl SearchSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidArgument("search space needs at least one dimension".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::InvalidArgument(format!(
                "bounds length mismatch: {} lower vs {} upper",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::InvalidArgument(format!(
                    "axis {i}: lower bound {l} must be finite and below upper bound {u}"
                )));
            }
        }
        Ok(Self { lower, upper, names: None })
    }

    /// The same bounds on every axis.
    pub fn cube(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn with_names<S: Into<String>>(mut self, names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "{} names given for a {}-dimensional space",
                names.len(),
                self.dim()
            )));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::InvalidArgument(format!("duplicate coordinate name `{n}`")));
            }
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Coordinate label, falling back to `x{i}` for unnamed spaces.
    pub fn name(&self, i: usize) -> String {
        match &self.names {
            Some(n) => n[i].clone(),
            None => format!("x{i}"),
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        (0..self.dim()).find(|&i| self.name(i) == name)
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "point has dimension {}, space has {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.as_box().sample(rng)
    }

    pub fn as_box(&self) -> AxisBox {
        AxisBox { lower: self.lower.clone(), upper: self.upper.clone() }
    }

    /// Maps a point into the unit cube spanned by the bounds.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (v - l) / (u - l))
            .collect()
    }
}

/// An axis-aligned box whose axes may be degenerate (`lower == upper`), as
/// produced by pinning a coordinate with an equality row.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl AxisBox {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn is_pinned(&self, axis: usize) -> bool {
        self.lower[axis] == self.upper[axis]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| {
                if l == u {
                    l
                } else {
                    let t: f64 = rng.random();
                    (l + t * (u - l)).min(u)
                }
            })
            .collect()
    }
}

/// One linear row `coeffs · x (op) rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl LinearRow {
    pub fn new(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, rhs }
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    /// `Some((axis, coeff))` when exactly one coefficient is nonzero.
    fn single_axis(&self) -> Option<(usize, f64)> {
        let mut found = None;
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a != 0.0 {
                if found.is_some() {
                    return None;
                }
                found = Some((i, a));
            }
        }
        found
    }
}

/// An expert hypothesis: the subspace `H = {x in X : A x = b, B x <= c}`.
///
/// Construction certifies that the subspace is non-empty by rejection
/// sampling from its bounding box, so every `Hypothesis` value can be
/// sampled from.
#[derive(Clone, Debug)]
pub struct Hypothesis {
    label: String,
    space: SearchSpace,
    eq: Vec<LinearRow>,
    ineq: Vec<LinearRow>,
    eq_tol_rel: f64,
    bbox: AxisBox,
}

impl Hypothesis {
    pub fn new(
        label: impl Into<String>,
        space: &SearchSpace,
        eq: Vec<LinearRow>,
        ineq: Vec<LinearRow>,
    ) -> Result<Self> {
        Self::with_eq_tolerance(label, space, eq, ineq, EQ_TOL_REL)
    }

    /// Like [`Hypothesis::new`] with a custom relative equality tolerance,
    /// for systems with general (non axis-aligned) equality rows.
    pub fn with_eq_tolerance(
        label: impl Into<String>,
        space: &SearchSpace,
        eq: Vec<LinearRow>,
        ineq: Vec<LinearRow>,
        eq_tol_rel: f64,
    ) -> Result<Self> {
        let label = label.into();
        if eq.is_empty() && ineq.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "hypothesis `{label}` has no constraint rows"
            )));
        }
        if !(eq_tol_rel >= 0.0) {
            return Err(Error::InvalidArgument("equality tolerance must be nonnegative".into()));
        }
        for row in eq.iter().chain(&ineq) {
            if row.coeffs.len() != space.dim() {
                return Err(Error::InvalidArgument(format!(
                    "hypothesis `{label}`: row width {} does not match dimension {}",
                    row.coeffs.len(),
                    space.dim()
                )));
            }
            if !row.rhs.is_finite() || row.coeffs.iter().any(|a| !a.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "hypothesis `{label}`: non-finite coefficient"
                )));
            }
        }
        let bbox = Self::compute_bbox(&label, space, &eq, &ineq)?;
        let h = Self { label, space: space.clone(), eq, ineq, eq_tol_rel, bbox };
        h.certify()?;
        Ok(h)
    }

    /// The axis-aligned box `[lower, upper]` (clipped to the space) as a hypothesis.
    pub fn axis_box(
        label: impl Into<String>,
        space: &SearchSpace,
        lower: &[f64],
        upper: &[f64],
    ) -> Result<Self> {
        space.check_dim(lower)?;
        space.check_dim(upper)?;
        let d = space.dim();
        let mut ineq = Vec::with_capacity(2 * d);
        for i in 0..d {
            let mut lo = vec![0.0; d];
            lo[i] = -1.0;
            ineq.push(LinearRow::new(lo, -lower[i]));
            let mut hi = vec![0.0; d];
            hi[i] = 1.0;
            ineq.push(LinearRow::new(hi, upper[i]));
        }
        Self::new(label, space, vec![], ineq)
    }

    pub fn builder(label: impl Into<String>, space: &SearchSpace) -> HypothesisBuilder<'_> {
        HypothesisBuilder { label: label.into(), space, eq: vec![], ineq: vec![], error: None }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn eq_rows(&self) -> &[LinearRow] {
        &self.eq
    }

    pub fn ineq_rows(&self) -> &[LinearRow] {
        &self.ineq
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// Membership using the per-row default equality tolerance.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        self.space.check_dim(x)?;
        Ok(self.ineq_ok(x)
            && self
                .eq
                .iter()
                .all(|r| (r.dot(x) - r.rhs).abs() <= self.eq_tol_rel * r.norm()))
    }

    /// Membership with an absolute equality tolerance.
    pub fn contains_with_tol(&self, x: &[f64], eq_tol: f64) -> Result<bool> {
        self.space.check_dim(x)?;
        if !(eq_tol >= 0.0) {
            return Err(Error::InvalidArgument("eq_tol must be nonnegative".into()));
        }
        Ok(self.ineq_ok(x) && self.eq.iter().all(|r| (r.dot(x) - r.rhs).abs() <= eq_tol))
    }

    fn ineq_ok(&self, x: &[f64]) -> bool {
        self.ineq.iter().all(|r| r.dot(x) <= r.rhs)
    }

    /// Tightest box from single-variable rows, intersected with the space.
    pub fn bounding_box(&self) -> &AxisBox {
        &self.bbox
    }

    fn compute_bbox(
        label: &str,
        space: &SearchSpace,
        eq: &[LinearRow],
        ineq: &[LinearRow],
    ) -> Result<AxisBox> {
        let mut lower = space.lower().to_vec();
        let mut upper = space.upper().to_vec();
        let mut pinned: Vec<Option<f64>> = vec![None; space.dim()];
        for row in eq {
            if let Some((k, a)) = row.single_axis() {
                let v = row.rhs / a;
                if let Some(prev) = pinned[k] {
                    if prev != v {
                        return Err(Error::InfeasibleHypothesis {
                            label: label.to_string(),
                            reason: format!("axis {k} pinned to both {prev} and {v}"),
                        });
                    }
                }
                pinned[k] = Some(v);
            }
        }
        for row in ineq {
            if let Some((k, a)) = row.single_axis() {
                let v = row.rhs / a;
                if a > 0.0 {
                    upper[k] = upper[k].min(v);
                } else {
                    lower[k] = lower[k].max(v);
                }
            }
        }
        for (k, p) in pinned.iter().enumerate() {
            if let Some(v) = *p {
                if v < lower[k] || v > upper[k] {
                    return Err(Error::InfeasibleHypothesis {
                        label: label.to_string(),
                        reason: format!("axis {k} pinned to {v} outside [{}, {}]", lower[k], upper[k]),
                    });
                }
                lower[k] = v;
                upper[k] = v;
            }
        }
        if let Some(k) = (0..lower.len()).find(|&k| lower[k] > upper[k]) {
            return Err(Error::InfeasibleHypothesis {
                label: label.to_string(),
                reason: format!("empty interval [{}, {}] on axis {k}", lower[k], upper[k]),
            });
        }
        Ok(AxisBox { lower, upper })
    }

    fn certify(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(CERTIFY_SEED);
        match self.sample_uniform(&mut rng, CERTIFY_ATTEMPTS) {
            Ok(_) => Ok(()),
            Err(Error::FeasibilityBudgetExhausted { .. }) => Err(Error::InfeasibleHypothesis {
                label: self.label.clone(),
                reason: format!(
                    "no feasible point in {CERTIFY_ATTEMPTS} draws from its bounding box"
                ),
            }),
            Err(e) => Err(e),
        }
    }

    /// Uniform draw over the feasible region by rejection from the bounding box.
    /// Axis-aligned equality rows pin their coordinate exactly.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R, max_attempts: usize) -> Result<Vec<f64>> {
        for _ in 0..max_attempts {
            let x = self.bbox.sample(rng);
            if self.contains(&x)? {
                return Ok(x);
            }
        }
        Err(Error::FeasibilityBudgetExhausted { label: self.label.clone(), attempts: max_attempts })
    }

    /// Observations of `d` that fall inside this hypothesis, in order.
    pub fn filter_dataset(&self, d: &Dataset) -> Dataset {
        d.filter(|x| self.contains(x).unwrap_or(false))
    }

    pub fn filter_dataset_with_tol(&self, d: &Dataset, eq_tol: f64) -> Dataset {
        d.filter(|x| self.contains_with_tol(x, eq_tol).unwrap_or(false))
    }

    /// Reads a hypothesis definition file (TOML).
    ///
    /// ```toml
    /// label = "farm"
    /// [space]
    /// names = ["Water", "Fertilizer", "CO2"]
    /// lower = [0.5, 5.0, 300.0]
    /// upper = [7.0, 85.0, 1000.0]
    ///
    /// [[ineq]]
    /// Water = -1.0
    /// op = "<="
    /// rhs = -1.5
    /// ```
    ///
    /// Coefficients are keyed by coordinate name and default to zero. `op` is
    /// `=` for `eq` rows and `<=` (or `>=`, stored negated) for `ineq` rows.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: HypothesisFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("hypothesis file: {e}")))?;
        let mut space = SearchSpace::new(file.space.lower, file.space.upper)?;
        if let Some(names) = file.space.names {
            space = space.with_names(names)?;
        }
        let mut eq = Vec::new();
        for row in &file.eq {
            let (r, op) = row.to_row(&space)?;
            if op != "=" && op != "==" {
                return Err(Error::Config(format!("eq row uses operator `{op}`, expected `=`")));
            }
            eq.push(r);
        }
        let mut ineq = Vec::new();
        for row in &file.ineq {
            let (mut r, op) = row.to_row(&space)?;
            match op.as_str() {
                "<=" | "<" => {}
                ">=" | ">" => {
                    r.coeffs.iter_mut().for_each(|a| *a = -*a);
                    r.rhs = -r.rhs;
                }
                other => {
                    return Err(Error::Config(format!(
                        "ineq row uses operator `{other}`, expected `<=` or `>=`"
                    )))
                }
            }
            ineq.push(r);
        }
        Self::new(file.label, &space, eq, ineq)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml_str(&text)
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} eq, {} ineq)", self.label, self.eq.len(), self.ineq.len())
    }
}

#[derive(Deserialize)]
struct HypothesisFile {
    label: String,
    space: SpaceSection,
    #[serde(default)]
    eq: Vec<BTreeMap<String, toml::Value>>,
    #[serde(default)]
    ineq: Vec<BTreeMap<String, toml::Value>>,
}

#[derive(Deserialize)]
struct SpaceSection {
    names: Option<Vec<String>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

trait RowSpec {
    fn to_row(&self, space: &SearchSpace) -> Result<(LinearRow, String)>;
}

fn toml_number(v: &toml::Value) -> Option<f64> {
    match v {
        toml::Value::Float(f) => Some(*f),
        toml::Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

impl RowSpec for BTreeMap<String, toml::Value> {
    fn to_row(&self, space: &SearchSpace) -> Result<(LinearRow, String)> {
        let mut coeffs = vec![0.0; space.dim()];
        let mut op = None;
        let mut rhs = None;
        for (key, value) in self {
            match key.as_str() {
                "op" => {
                    op = Some(
                        value
                            .as_str()
                            .ok_or_else(|| Error::Config("`op` must be a string".into()))?
                            .to_string(),
                    )
                }
                "rhs" => {
                    rhs = Some(
                        toml_number(value).ok_or_else(|| Error::Config("`rhs` must be a number".into()))?,
                    )
                }
                name => {
                    let i = space
                        .index_of(name)
                        .ok_or_else(|| Error::Config(format!("unknown coordinate `{name}`")))?;
                    coeffs[i] = toml_number(value)
                        .ok_or_else(|| Error::Config(format!("coefficient of `{name}` must be a number")))?;
                }
            }
        }
        let rhs = rhs.ok_or_else(|| Error::Config("constraint row missing `rhs`".into()))?;
        let op = op.unwrap_or_else(|| "<=".to_string());
        Ok((LinearRow::new(coeffs, rhs), op))
    }
}

/// Name-based construction of constraint rows.
///
/// Strict inequalities are stored non-strict with the same bound.
pub struct HypothesisBuilder<'a> {
    label: String,
    space: &'a SearchSpace,
    eq: Vec<LinearRow>,
    ineq: Vec<LinearRow>,
    error: Option<Error>,
}

impl<'a> HypothesisBuilder<'a> {
    fn row(&mut self, terms: &[(&str, f64)], rhs: f64, sign: f64) -> Option<LinearRow> {
        let mut coeffs = vec![0.0; self.space.dim()];
        for (name, a) in terms {
            match self.space.index_of(name) {
                Some(i) => coeffs[i] += sign * a,
                None => {
                    self.error.get_or_insert(Error::InvalidArgument(format!(
                        "unknown coordinate `{name}` in hypothesis `{}`",
                        self.label
                    )));
                    return None;
                }
            }
        }
        Some(LinearRow::new(coeffs, sign * rhs))
    }

    /// `Σ a_i x_i <= rhs`
    pub fn le(mut self, terms: &[(&str, f64)], rhs: f64) -> Self {
        if let Some(r) = self.row(terms, rhs, 1.0) {
            self.ineq.push(r);
        }
        self
    }

    /// `Σ a_i x_i >= rhs`, stored as `-Σ a_i x_i <= -rhs`.
    pub fn ge(mut self, terms: &[(&str, f64)], rhs: f64) -> Self {
        if let Some(r) = self.row(terms, rhs, -1.0) {
            self.ineq.push(r);
        }
        self
    }

    pub fn lt(self, terms: &[(&str, f64)], rhs: f64) -> Self {
        self.le(terms, rhs)
    }

    pub fn gt(self, terms: &[(&str, f64)], rhs: f64) -> Self {
        self.ge(terms, rhs)
    }

    pub fn eq(mut self, terms: &[(&str, f64)], rhs: f64) -> Self {
        if let Some(r) = self.row(terms, rhs, 1.0) {
            self.eq.push(r);
        }
        self
    }

    /// `lo <= Σ a_i x_i <= hi`
    pub fn between(self, terms: &[(&str, f64)], lo: f64, hi: f64) -> Self {
        self.ge(terms, lo).le(terms, hi)
    }

    pub fn build(self) -> Result<Hypothesis> {
        if let Some(e) = self.error {
            return Err(e);
        }
        Hypothesis::new(self.label, self.space, self.eq, self.ineq)
    }
}
