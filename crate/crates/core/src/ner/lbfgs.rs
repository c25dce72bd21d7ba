//! Limited-memory quasi-Newton minimization of `f(x) + c1 * |x|_1` for a
//! smooth `f` (orthant-wise L-BFGS). With `c1 = 0` this is plain L-BFGS.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OwlqnParams {
    pub c1: f64,
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop once `|pseudo-gradient| <= epsilon * max(1, |x|)`.
    pub epsilon: f64,
    /// Stop once the relative decrease over one step falls below this.
    pub delta: f64,
    pub max_linesearch: usize,
}

impl Default for OwlqnParams {
    fn default() -> Self {
        OwlqnParams { c1: 0.0, memory: 6, max_iterations: 100, epsilon: 1e-5, delta: 1e-7, max_linesearch: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    SmallDecrease,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimReport {
    /// Objective value before the first step and after every accepted step.
    pub losses: Vec<f64>,
    pub iterations: usize,
    pub stop: StopReason,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

fn pseudo_gradient(x: &[f64], g: &[f64], c1: f64, out: &mut [f64]) {
    for i in 0..x.len() {
        out[i] = if c1 == 0.0 {
            g[i]
        } else if x[i] > 0.0 {
            g[i] + c1
        } else if x[i] < 0.0 {
            g[i] - c1
        } else if g[i] + c1 < 0.0 {
            g[i] + c1
        } else if g[i] - c1 > 0.0 {
            g[i] - c1
        } else {
            0.0
        };
    }
}

/// Minimizes `f(x) + c1 * |x|_1` from `x0`. `f` writes the gradient of its
/// smooth part into the second argument and returns its value.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, params: &OwlqnParams) -> (Vec<f64>, OptimReport)
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let c1 = params.c1;
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g) + c1 * l1(&x);
    let mut pg = vec![0.0; n];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut losses = vec![fx];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];

    for iter in 0..params.max_iterations {
        pseudo_gradient(&x, &g, c1, &mut pg);
        let pg_norm = dot(&pg, &pg).sqrt();
        if pg_norm <= params.epsilon * dot(&x, &x).sqrt().max(1.0) {
            return (x, OptimReport { losses, iterations: iter, stop: StopReason::Converged });
        }

        // two-loop recursion
        let mut d = pg.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &d);
            for i in 0..n {
                d[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for i in 0..n {
                d[i] += s[i] * (a - b);
            }
        }
        for i in 0..n {
            d[i] = -d[i];
            if c1 > 0.0 && d[i] * pg[i] >= 0.0 {
                d[i] = 0.0;
            }
        }

        let orthant: Vec<f64> = (0..n)
            .map(|i| match (x[i], pg[i]) {
                (xi, _) if xi != 0.0 => xi.signum(),
                (_, p) if p < 0.0 => 1.0,
                (_, p) if p > 0.0 => -1.0,
                _ => 0.0,
            })
            .collect();
        let mut step = if history.is_empty() { 1.0 / pg_norm } else { 1.0 };
        let mut accepted = None;
        for _ in 0..params.max_linesearch {
            for i in 0..n {
                let v = x[i] + step * d[i];
                x_new[i] = if c1 > 0.0 && v * orthant[i] <= 0.0 { 0.0 } else { v };
            }
            let f_new = f(&x_new, &mut g_new) + c1 * l1(&x_new);
            let decrease: f64 = (0..n).map(|i| pg[i] * (x_new[i] - x[i])).sum();
            if f_new <= fx + 1e-4 * decrease && f_new <= fx {
                accepted = Some(f_new);
                break;
            }
            step *= 0.5;
        }
        let Some(f_new) = accepted else {
            return (x, OptimReport { losses, iterations: iter, stop: StopReason::LineSearchFailed });
        };

        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 {
            if history.len() == params.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        let prev = fx;
        fx = f_new;
        losses.push(fx);
        if (prev - fx) / prev.abs().max(1.0) < params.delta {
            return (x, OptimReport { losses, iterations: iter + 1, stop: StopReason::SmallDecrease });
        }
    }
    let iterations = params.max_iterations;
    (x, OptimReport { losses, iterations, stop: StopReason::MaxIterations })
}
