//! Weighted L2-regularized logistic regression solved by damped Newton steps.

use serde::{Deserialize, Serialize};

use super::LearnError;
use crate::inference::sigmoid;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticParams {
    /// Penalty on the squared norm of the weights; the bias is not penalized.
    pub l2: f64,
    /// Stop once the gradient norm is at most this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self { l2: 1e-3, tol: 1e-8, max_iter: 200 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    /// Objective at the start and after every accepted step.
    pub loss_history: Vec<f64>,
    pub gradient_norm: f64,
}

impl LogisticFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        crate::inference::logistic_output(&self.weights, self.bias, x.iter().copied())
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// The weighted objective `sum_i w_i [log(1 + e^{z_i}) - y_i z_i] + l2 |w|^2`
/// with `z_i = w.x_i + b`. Parameters are laid out as `[w..., b]`.
#[derive(Clone, Copy, Debug)]
pub struct LogisticProblem<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
    sample_weights: &'a [f64],
    l2: f64,
    dim: usize,
}

impl<'a> LogisticProblem<'a> {
    pub fn new(x: &'a [Vec<f64>], y: &'a [bool], sample_weights: &'a [f64], l2: f64) -> Result<Self, LearnError> {
        if x.len() != y.len() || x.len() != sample_weights.len() {
            return Err(LearnError::LengthMismatch(format!(
                "{} rows, {} labels, {} weights",
                x.len(),
                y.len(),
                sample_weights.len()
            )));
        }
        if !y.iter().any(|&l| l) || y.iter().all(|&l| l) {
            return Err(LearnError::OneSided);
        }
        let dim = x[0].len();
        if x.iter().any(|r| r.len() != dim) {
            return Err(LearnError::LengthMismatch("ragged design matrix".into()));
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(LearnError::NonFinite("feature value"));
        }
        if sample_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(LearnError::NonFinite("sample weight"));
        }
        if !l2.is_finite() || l2 < 0.0 {
            return Err(LearnError::NonFinite("l2 penalty"));
        }
        Ok(Self { x, y, sample_weights, l2, dim })
    }

    /// Number of parameters including the bias.
    pub fn len(&self) -> usize {
        self.dim + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn z(&self, theta: &[f64], row: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (w, v) in theta[..self.dim].iter().zip(row) {
            acc += w * v;
        }
        acc + theta[self.dim]
    }

    pub fn loss(&self, theta: &[f64]) -> f64 {
        let mut total = 0.0;
        for ((row, &y), &s) in self.x.iter().zip(self.y).zip(self.sample_weights) {
            let z = self.z(theta, row);
            total += s * (softplus(z) - if y { z } else { 0.0 });
        }
        total + self.l2 * theta[..self.dim].iter().map(|w| w * w).sum::<f64>()
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.len()];
        for ((row, &y), &s) in self.x.iter().zip(self.y).zip(self.sample_weights) {
            let r = s * (sigmoid(self.z(theta, row)) - y as u8 as f64);
            for (gj, v) in g.iter_mut().zip(row) {
                *gj += r * v;
            }
            g[self.dim] += r;
        }
        for j in 0..self.dim {
            g[j] += 2.0 * self.l2 * theta[j];
        }
        g
    }

    /// Row-major Hessian.
    pub fn hessian(&self, theta: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut h = vec![0.0; n * n];
        let mut xt = vec![1.0; n];
        for (row, &s) in self.x.iter().zip(self.sample_weights) {
            let p = sigmoid(self.z(theta, row));
            let c = s * p * (1.0 - p);
            if c == 0.0 {
                continue;
            }
            xt[..self.dim].copy_from_slice(row);
            for a in 0..n {
                let ca = c * xt[a];
                for b in a..n {
                    h[a * n + b] += ca * xt[b];
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                h[a * n + b] = h[b * n + a];
            }
        }
        for j in 0..self.dim {
            h[j * n + j] += 2.0 * self.l2;
        }
        h
    }
}

/// Solves `a x = b` for symmetric positive definite `a` (row-major, n x n).
pub fn cholesky_solve(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Minimizes the weighted logistic objective from zero with Newton steps,
/// Armijo backtracking and a growing diagonal shift when the Hessian is not
/// numerically positive definite.
pub fn fit_logistic(
    x: &[Vec<f64>],
    y: &[bool],
    sample_weights: &[f64],
    params: &LogisticParams,
) -> Result<LogisticFit, LearnError> {
    let problem = LogisticProblem::new(x, y, sample_weights, params.l2)?;
    let n = problem.len();
    let mut theta = vec![0.0; n];
    let mut loss = problem.loss(&theta);
    let mut history = vec![loss];
    let mut grad = problem.gradient(&theta);
    let mut iterations = 0;
    while iterations < params.max_iter && norm(&grad) > params.tol {
        iterations += 1;
        let mut h = problem.hessian(&theta);
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut shift = 0.0;
        let step = loop {
            if let Some(s) = cholesky_solve(&h, &neg) {
                break s;
            }
            let bump = if shift == 0.0 { 1e-12 } else { shift * 9.0 };
            shift += bump;
            for j in 0..n {
                h[j * n + j] += bump;
            }
            if shift > 1e6 {
                // fall back to steepest descent
                break neg.clone();
            }
        };
        let slope: f64 = grad.iter().zip(&step).map(|(g, s)| g * s).sum();
        if slope >= 0.0 {
            break;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let l = problem.loss(&cand);
            if l <= loss + 1e-4 * t * slope {
                accepted = Some((cand, l));
                break;
            }
            t *= 0.5;
        }
        let Some((next, l)) = accepted else { break };
        theta = next;
        loss = l;
        history.push(loss);
        grad = problem.gradient(&theta);
    }
    let bias = theta[n - 1];
    theta.truncate(n - 1);
    if theta.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
        return Err(LearnError::NonFinite("fitted weight"));
    }
    Ok(LogisticFit { weights: theta, bias, iterations, loss_history: history, gradient_norm: norm(&grad) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn symmetric_data_gives_zero_weights() {
        let x = vec![vec![1.0, -2.0], vec![1.0, -2.0], vec![-1.0, 2.0], vec![-1.0, 2.0]];
        let y = vec![true, false, true, false];
        let fit = fit_logistic(&x, &y, &[0.25; 4], &LogisticParams::default()).unwrap();
        assert_eq!(fit.weights, vec![0.0, 0.0]);
        assert_eq!(fit.bias, 0.0);
    }

    #[test]
    fn separable_1d_gives_positive_weight() {
        let x: Vec<Vec<f64>> = [-3.0, -2.0, -0.5, 0.5, 1.0, 2.5].iter().map(|&v| vec![v]).collect();
        let y = vec![false, false, false, true, true, true];
        let params = LogisticParams { l2: 0.1, ..Default::default() };
        let fit = fit_logistic(&x, &y, &[1.0 / 6.0; 6], &params).unwrap();
        assert!(fit.weights[0] > 0.0);
        assert!(fit.gradient_norm <= params.tol);
        // loss along the weight axis at the optimum bias rises when w shrinks to 0
        let problem = LogisticProblem::new(&x, &y, &[1.0 / 6.0; 6], 0.1).unwrap();
        assert!(problem.loss(&[fit.weights[0], fit.bias]) < problem.loss(&[0.0, fit.bias]));
    }

    #[test]
    fn one_sided_or_non_finite_input_is_rejected() {
        let x = vec![vec![1.0], vec![2.0]];
        assert_eq!(fit_logistic(&x, &[true, true], &[0.5, 0.5], &LogisticParams::default()), Err(LearnError::OneSided));
        let bad = vec![vec![f64::NAN], vec![2.0]];
        assert!(matches!(
            fit_logistic(&bad, &[true, false], &[0.5, 0.5], &LogisticParams::default()),
            Err(LearnError::NonFinite(_))
        ));
    }

    #[test]
    fn cholesky_solves_small_system() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let x = cholesky_solve(&a, &[2.0, 1.0]).unwrap();
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-12);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-12);
        assert!(cholesky_solve(&[0.0], &[1.0]).is_none());
    }

    pub(crate) fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<bool>, Vec<f64>, Vec<f64>) {
        let n = rng.gen_range(4..30);
        let d = rng.gen_range(1..6);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let mut y: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        y[0] = true;
        y[1] = false;
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let theta: Vec<f64> = (0..=d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (x, y, w, theta)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (x, y, w, theta) = random_instance(&mut rng);
            let p = LogisticProblem::new(&x, &y, &w, 0.05).unwrap();
            let g = p.gradient(&theta);
            for j in 0..theta.len() {
                let h = 1e-5;
                let mut up = theta.clone();
                let mut down = theta.clone();
                up[j] += h;
                down[j] -= h;
                let fd = (p.loss(&up) - p.loss(&down)) / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-5 * g[j].abs().max(1.0), "{fd} vs {}", g[j]);
            }
        }
    }

    proptest! {
        #[test]
        fn loss_never_increases(seed in 0u64..500, l2 in 0.0f64..0.5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (x, y, w, _) = random_instance(&mut rng);
            let fit = fit_logistic(&x, &y, &w, &LogisticParams { l2, tol: 1e-10, max_iter: 100 }).unwrap();
            for pair in fit.loss_history.windows(2) {
                prop_assert!(pair[1] <= pair[0]);
            }
        }
    }
}
