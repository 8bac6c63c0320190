//! Box-constrained Nelder-Mead minimizer used for kernel hyperparameter search.

#[derive(Clone, Debug)]
pub struct NelderMead {
    pub max_evals: usize,
    pub initial_step: f64,
    pub ftol: f64,
    pub xtol: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self { max_evals: 200, initial_step: 0.5, ftol: 1e-9, xtol: 1e-6 }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
}

impl NelderMead {
    /// Minimizes `f` starting from `x0`, clamping every trial point into
    /// `[lower, upper]`. Non-finite objective values are treated as `+inf`.
    /// The returned value is never worse than `f(x0)`.
    pub fn minimize<F>(&self, mut f: F, x0: &[f64], lower: &[f64], upper: &[f64]) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        let n = x0.len();
        let clamp = |x: &mut Vec<f64>| {
            for i in 0..n {
                x[i] = x[i].clamp(lower[i], upper[i]);
            }
        };
        let mut evals = 0usize;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        };

        let mut start = x0.to_vec();
        clamp(&mut start);
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        let f0 = eval(&start, &mut evals);
        simplex.push((start.clone(), f0));
        for i in 0..n {
            let mut v = start.clone();
            v[i] += self.initial_step;
            if v[i] > upper[i] {
                v[i] = start[i] - self.initial_step;
            }
            clamp(&mut v);
            let fv = eval(&v, &mut evals);
            simplex.push((v, fv));
        }

        while evals < self.max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[n].1;
            let spread = (worst - best).abs();
            let size = simplex[1..]
                .iter()
                .flat_map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if (spread.is_finite() && spread <= self.ftol * (1.0 + best.abs())) && size <= self.xtol {
                break;
            }
            if n == 0 {
                break;
            }

            let mut centroid = vec![0.0; n];
            for (v, _) in &simplex[..n] {
                for i in 0..n {
                    centroid[i] += v[i] / n as f64;
                }
            }
            let toward = |t: f64, from: &[f64]| -> Vec<f64> {
                let mut p: Vec<f64> = (0..n).map(|i| centroid[i] + t * (from[i] - centroid[i])).collect();
                for i in 0..n {
                    p[i] = p[i].clamp(lower[i], upper[i]);
                }
                p
            };

            let worst_x = simplex[n].0.clone();
            let reflected = toward(-1.0, &worst_x);
            let fr = eval(&reflected, &mut evals);
            if fr < simplex[0].1 {
                let expanded = toward(-2.0, &worst_x);
                let fe = eval(&expanded, &mut evals);
                simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (reflected, fr);
                continue;
            }
            let (contracted, fc) = if fr < simplex[n].1 {
                let c = toward(-0.5, &worst_x);
                let fc = eval(&c, &mut evals);
                (c, fc)
            } else {
                let c = toward(0.5, &worst_x);
                let fc = eval(&c, &mut evals);
                (c, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (contracted, fc);
                continue;
            }
            // shrink toward the best vertex
            let best_x = simplex[0].0.clone();
            for k in 1..=n {
                let mut v: Vec<f64> =
                    (0..n).map(|i| best_x[i] + 0.5 * (simplex[k].0[i] - best_x[i])).collect();
                clamp(&mut v);
                let fv = eval(&v, &mut evals);
                simplex[k] = (v, fv);
            }
        }

        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, fx) = simplex.swap_remove(0);
        if fx <= f0 {
            Minimum { x, f: fx, evals }
        } else {
            Minimum { x: start, f: f0, evals }
        }
    }
}
