//! Zero-mean Gaussian-process regression with a Matérn-5/2 kernel.
//!
//! Inputs are mapped into the unit cube of an owning [`SearchSpace`] before
//! kernel evaluation, so lengthscales refer to normalized coordinates.
//! Hyperparameters are fitted by multistart Nelder-Mead on the log marginal
//! likelihood in log-parameter space.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nelder_mead::NelderMead;
use crate::space::SearchSpace;

/// Fixed Matérn smoothness.
pub const SMOOTHNESS: f64 = 2.5;

/// Log-space bounds for every hyperparameter.
pub const PARAM_MIN: f64 = 1e-4;
pub const PARAM_MAX: f64 = 1e4;

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct KernelParams {
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn new(signal_variance: f64, lengthscales: Vec<f64>, noise_variance: f64) -> Result<Self> {
        if !(signal_variance > 0.0 && signal_variance.is_finite()) {
            return Err(Error::InvalidArgument(format!("signal variance {signal_variance} must be positive")));
        }
        if lengthscales.is_empty() || lengthscales.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidArgument("lengthscales must be positive".into()));
        }
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise variance {noise_variance} must be nonnegative")));
        }
        Ok(Self { signal_variance, lengthscales, noise_variance })
    }

    /// Same lengthscale on every axis.
    pub fn isotropic(dim: usize, signal_variance: f64, lengthscale: f64, noise_variance: f64) -> Result<Self> {
        Self::new(signal_variance, vec![lengthscale; dim], noise_variance)
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }
}

/// `sv · (1 + √5 r + 5r²/3) · exp(−√5 r)` with `r` the lengthscale-weighted distance.
pub fn matern52(x: &[f64], z: &[f64], params: &KernelParams) -> f64 {
    let r2: f64 = x
        .iter()
        .zip(z)
        .zip(&params.lengthscales)
        .map(|((a, b), l)| {
            let t = (a - b) / l;
            t * t
        })
        .sum();
    matern52_from_r2(r2, params.signal_variance)
}

#[inline]
fn matern52_from_r2(r2: f64, signal_variance: f64) -> f64 {
    let s5r = (5.0 * r2).sqrt();
    signal_variance * (1.0 + s5r + 5.0 * r2 / 3.0) * (-s5r).exp()
}

/// Input normalization applied before kernel evaluation.
#[derive(Clone, Debug, PartialEq)]
pub enum InputScaling {
    Identity,
    UnitCube { lower: Vec<f64>, width: Vec<f64> },
}

impl InputScaling {
    pub fn from_space(space: &SearchSpace) -> Self {
        InputScaling::UnitCube {
            lower: space.lower().to_vec(),
            width: space.lower().iter().zip(space.upper()).map(|(l, u)| u - l).collect(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            InputScaling::Identity => x.to_vec(),
            InputScaling::UnitCube { lower, width } => {
                x.iter().zip(lower.iter().zip(width)).map(|(v, (l, w))| (v - l) / w).collect()
            }
        }
    }
}

/// Point prediction of the posterior.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl Prediction {
    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Anything that yields a Gaussian posterior at a point.
pub trait Surrogate {
    fn dim(&self) -> usize;
    fn predict(&self, x: &[f64]) -> Prediction;
}

#[derive(Clone, Debug)]
pub struct GpFitOptions {
    /// Run marginal-likelihood optimization; otherwise use the init params verbatim.
    pub optimize: bool,
    /// Number of local searches; the first starts at the init params.
    pub restarts: usize,
    pub optimize_noise: bool,
    /// Share one lengthscale across all axes.
    pub isotropic: bool,
    /// Objective evaluations per restart; 0 picks `30 · (parameters + 1)`.
    pub max_evals: usize,
}

impl Default for GpFitOptions {
    fn default() -> Self {
        Self { optimize: true, restarts: 5, optimize_noise: false, isotropic: false, max_evals: 0 }
    }
}

impl GpFitOptions {
    pub fn fixed() -> Self {
        Self { optimize: false, ..Self::default() }
    }
}

/// A fitted (or prior) Gaussian process.
#[derive(Clone, Debug)]
pub struct GpModel {
    scaling: InputScaling,
    train_x: Vec<Vec<f64>>,
    train_y: Vec<f64>,
    params: KernelParams,
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
}

/// Pairwise squared per-axis differences, cached across likelihood evaluations.
struct PairCache {
    n: usize,
    d: usize,
    sq: Vec<f64>,
}

impl PairCache {
    fn new(xs: &[Vec<f64>]) -> Self {
        let n = xs.len();
        let d = xs.first().map_or(0, Vec::len);
        let mut sq = Vec::with_capacity(n * (n.saturating_sub(1)) / 2 * d);
        for i in 0..n {
            for j in 0..i {
                for k in 0..d {
                    let t = xs[i][k] - xs[j][k];
                    sq.push(t * t);
                }
            }
        }
        Self { n, d, sq }
    }

    fn kernel_matrix(&self, params: &KernelParams, diag_add: f64) -> DMatrix<f64> {
        let inv_l2: Vec<f64> = params.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
        let mut k = DMatrix::zeros(self.n, self.n);
        let mut idx = 0;
        for i in 0..self.n {
            for j in 0..i {
                let r2: f64 = (0..self.d).map(|a| self.sq[idx + a] * inv_l2[a]).sum();
                idx += self.d;
                let v = matern52_from_r2(r2, params.signal_variance);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            k[(i, i)] = params.signal_variance + diag_add;
        }
        k
    }
}

fn cholesky_with_jitter(
    cache: &PairCache,
    params: &KernelParams,
) -> Option<(DMatrix<f64>, f64)> {
    let mut jitter = 0.0;
    loop {
        let k = cache.kernel_matrix(params, params.noise_variance + jitter);
        if let Some(c) = k.cholesky() {
            return Some((c.unpack(), jitter));
        }
        jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
        if jitter > JITTER_MAX * (1.0 + 1e-9) {
            return None;
        }
    }
}

fn lml_from_chol(chol: &DMatrix<f64>, y: &DVector<f64>) -> (f64, DVector<f64>) {
    let n = y.len();
    let z = chol.solve_lower_triangular(y).expect("triangular factor has nonzero diagonal");
    let alpha = chol.tr_solve_lower_triangular(&z).expect("triangular factor has nonzero diagonal");
    let log_det_half: f64 = (0..n).map(|i| chol[(i, i)].ln()).sum();
    let lml = -0.5 * y.dot(&alpha) - log_det_half - 0.5 * n as f64 * (2.0 * PI).ln();
    (lml, alpha)
}

impl GpModel {
    /// The zero-data prior: mean 0 and variance `signal_variance` everywhere.
    pub fn prior(params: KernelParams, scaling: InputScaling) -> Self {
        Self {
            scaling,
            train_x: vec![],
            train_y: vec![],
            params,
            chol: DMatrix::zeros(0, 0),
            alpha: DVector::zeros(0),
            jitter: 0.0,
        }
    }

    pub fn fit_dataset<R: Rng + ?Sized>(
        data: &Dataset,
        scaling: InputScaling,
        init: &KernelParams,
        opts: &GpFitOptions,
        rng: &mut R,
    ) -> Result<Self> {
        Self::fit(data.xs(), data.ys(), scaling, init, opts, rng)
    }

    pub fn fit<R: Rng + ?Sized>(
        xs: &[Vec<f64>],
        ys: &[f64],
        scaling: InputScaling,
        init: &KernelParams,
        opts: &GpFitOptions,
        rng: &mut R,
    ) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::InvalidData("cannot fit a GP on zero observations".into()));
        }
        if xs.len() != ys.len() {
            return Err(Error::InvalidData(format!("{} inputs but {} targets", xs.len(), ys.len())));
        }
        if let Some(i) = ys.iter().position(|y| !y.is_finite()) {
            return Err(Error::InvalidData(format!("target {i} is not finite: {}", ys[i])));
        }
        let d = init.dim();
        if let Some(x) = xs.iter().find(|x| x.len() != d) {
            return Err(Error::InvalidData(format!(
                "input of dimension {} for a {d}-dimensional kernel",
                x.len()
            )));
        }
        let train_x: Vec<Vec<f64>> = xs.iter().map(|x| scaling.apply(x)).collect();
        let cache = PairCache::new(&train_x);
        let y = DVector::from_column_slice(ys);

        let params = if opts.optimize {
            optimize_params(&cache, &y, init, opts, rng)
        } else {
            init.clone()
        };
        let (chol, jitter) = cholesky_with_jitter(&cache, &params)
            .ok_or(Error::IllConditionedKernel { max_jitter: JITTER_MAX })?;
        let (_, alpha) = lml_from_chol(&chol, &y);
        Ok(Self { scaling, train_x, train_y: ys.to_vec(), params, chol, alpha, jitter })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn scaling(&self) -> &InputScaling {
        &self.scaling
    }

    pub fn n_train(&self) -> usize {
        self.train_y.len()
    }

    /// Diagonal jitter that was needed on top of the noise variance.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Lower Cholesky factor of `K + (noise + jitter) I` over the (scaled) training inputs.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    fn cross_cov(&self, xs: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.train_x.len(),
            self.train_x.iter().map(|t| matern52(t, xs, &self.params)),
        )
    }

    /// Posterior variance before clamping at zero.
    pub fn predict_unclamped(&self, x: &[f64]) -> Prediction {
        let xs = self.scaling.apply(x);
        if self.train_x.is_empty() {
            return Prediction { mean: 0.0, variance: self.params.signal_variance };
        }
        let k = self.cross_cov(&xs);
        let mean = k.dot(&self.alpha);
        let v = self.chol.solve_lower_triangular(&k).expect("nonzero diagonal");
        let variance = self.params.signal_variance - v.norm_squared();
        Prediction { mean, variance }
    }

    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        if self.train_x.is_empty() {
            return 0.0;
        }
        let xs = self.scaling.apply(x);
        self.train_x
            .iter()
            .zip(self.alpha.iter())
            .map(|(t, a)| a * matern52(t, &xs, &self.params))
            .sum()
    }

    /// `−½ yᵀα − Σ log diag(L) − (n/2) log 2π`; zero for the prior.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.train_y.len();
        if n == 0 {
            return 0.0;
        }
        let y = DVector::from_column_slice(&self.train_y);
        let log_det_half: f64 = (0..n).map(|i| self.chol[(i, i)].ln()).sum();
        -0.5 * y.dot(&self.alpha) - log_det_half - 0.5 * n as f64 * (2.0 * PI).ln()
    }
}

impl Surrogate for GpModel {
    fn dim(&self) -> usize {
        self.params.dim()
    }

    fn predict(&self, x: &[f64]) -> Prediction {
        let p = self.predict_unclamped(x);
        Prediction { mean: p.mean, variance: p.variance.max(0.0) }
    }
}

/// Log marginal likelihood for `params` on the given inputs; `None` when the
/// kernel matrix cannot be factorized.
fn lml_for(cache: &PairCache, y: &DVector<f64>, params: &KernelParams) -> Option<f64> {
    let (chol, _) = cholesky_with_jitter(cache, params)?;
    Some(lml_from_chol(&chol, y).0)
}

struct ParamLayout {
    dim: usize,
    isotropic: bool,
    noise: bool,
}

impl ParamLayout {
    fn len(&self) -> usize {
        1 + if self.isotropic { 1 } else { self.dim } + usize::from(self.noise)
    }

    fn encode(&self, p: &KernelParams) -> Vec<f64> {
        let clamp = |v: f64| v.clamp(PARAM_MIN, PARAM_MAX).ln();
        let mut v = vec![clamp(p.signal_variance)];
        if self.isotropic {
            let g = p.lengthscales.iter().map(|l| l.ln()).sum::<f64>() / p.dim() as f64;
            v.push(g.exp().clamp(PARAM_MIN, PARAM_MAX).ln());
        } else {
            v.extend(p.lengthscales.iter().map(|l| clamp(*l)));
        }
        if self.noise {
            v.push(clamp(p.noise_variance));
        }
        v
    }

    fn decode(&self, v: &[f64], fixed_noise: f64) -> KernelParams {
        let signal_variance = v[0].exp();
        let (lengthscales, next) = if self.isotropic {
            (vec![v[1].exp(); self.dim], 2)
        } else {
            (v[1..=self.dim].iter().map(|t| t.exp()).collect(), 1 + self.dim)
        };
        let noise_variance = if self.noise { v[next].exp() } else { fixed_noise };
        KernelParams { signal_variance, lengthscales, noise_variance }
    }
}

fn optimize_params<R: Rng + ?Sized>(
    cache: &PairCache,
    y: &DVector<f64>,
    init: &KernelParams,
    opts: &GpFitOptions,
    rng: &mut R,
) -> KernelParams {
    let layout = ParamLayout { dim: init.dim(), isotropic: opts.isotropic, noise: opts.optimize_noise };
    let p = layout.len();
    let lo = vec![PARAM_MIN.ln(); p];
    let hi = vec![PARAM_MAX.ln(); p];
    let nm = NelderMead {
        max_evals: if opts.max_evals == 0 { 30 * (p + 1) } else { opts.max_evals },
        ..NelderMead::default()
    };
    let objective = |v: &[f64]| -> f64 {
        match lml_for(cache, y, &layout.decode(v, init.noise_variance)) {
            Some(l) => -l,
            None => f64::INFINITY,
        }
    };

    let start = layout.encode(init);
    let init_lml = lml_for(cache, y, init).unwrap_or(f64::NEG_INFINITY);
    let mut best = (init.clone(), init_lml);
    for r in 0..opts.restarts.max(1) {
        let x0: Vec<f64> = if r == 0 {
            start.clone()
        } else {
            start
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let z: f64 = StandardNormal.sample(rng);
                    (s + z).clamp(lo[i], hi[i])
                })
                .collect()
        };
        let m = nm.minimize(objective, &x0, &lo, &hi);
        if -m.f > best.1 {
            best = (layout.decode(&m.x, init.noise_variance), -m.f);
        }
    }
    best.0
}

/// A [`GpModel`] fitted on standardized targets `(y − μ) / σ`, reporting
/// predictions back in the original units.
#[derive(Clone, Debug)]
pub struct StandardizedGp {
    gp: GpModel,
    y_mean: f64,
    y_std: f64,
}

impl StandardizedGp {
    pub fn prior(params: KernelParams, scaling: InputScaling) -> Self {
        Self { gp: GpModel::prior(params, scaling), y_mean: 0.0, y_std: 1.0 }
    }

    pub fn fit<R: Rng + ?Sized>(
        data: &Dataset,
        scaling: InputScaling,
        init: &KernelParams,
        opts: &GpFitOptions,
        rng: &mut R,
    ) -> Result<Self> {
        let n = data.len() as f64;
        let ys = data.ys();
        let y_mean = ys.iter().sum::<f64>() / n.max(1.0);
        let var = ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n.max(1.0);
        let y_std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let scaled: Vec<f64> = ys.iter().map(|y| (y - y_mean) / y_std).collect();
        let gp = GpModel::fit(data.xs(), &scaled, scaling, init, opts, rng)?;
        Ok(Self { gp, y_mean, y_std })
    }

    pub fn inner(&self) -> &GpModel {
        &self.gp
    }
}

impl Surrogate for StandardizedGp {
    fn dim(&self) -> usize {
        self.gp.dim()
    }

    fn predict(&self, x: &[f64]) -> Prediction {
        let p = self.gp.predict(x);
        Prediction { mean: self.y_mean + self.y_std * p.mean, variance: p.variance * self.y_std * self.y_std }
    }
}
