//! Unconstrained quasi-Newton minimization.
//!
//! Plain BFGS on the inverse Hessian with a backtracking Armijo line search.
//! Estimation maps the constrained parameter space onto `ℝ^K` first, so no
//! bounds are handled here. The objective may signal an inadmissible point by
//! returning `None`; the line search then backtracks.

/// Stopping rules.
#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Converged once `‖∇f‖∞ ≤ gtol`.
    pub gtol: f64,
    /// Relative change in `f` regarded as no progress.
    pub ftol: f64,
    /// Longest step allowed, in Euclidean norm.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions { max_iter: 500, gtol: 1e-8, ftol: 1e-15, max_step: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    /// Several successive iterations changed `f` by less than `ftol`.
    NoProgress,
    /// No step along the search direction decreased `f`.
    LineSearch,
    MaxIterations,
    /// The starting point was inadmissible.
    BadStart,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    /// Accepted objective values, starting with `f(x0)`.
    pub trace: Vec<f64>,
}

impl Minimum {
    pub fn grad_norm(&self) -> f64 {
        inf_norm(&self.grad)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`, where `f(x, grad)` returns the value and writes the gradient.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> Option<f64>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let fx = match f(&x, &mut g) {
        Some(v) if v.is_finite() && g.iter().all(|v| v.is_finite()) => v,
        _ => {
            return Minimum { x, f: f64::INFINITY, grad: g, iterations: 0, termination: Termination::BadStart, trace: vec![] }
        }
    };
    let mut fx = fx;
    let mut trace = vec![fx];
    let mut h = identity(n);
    let mut fresh_h = true;
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut stalls = 0;

    for iter in 0..opts.max_iter {
        if inf_norm(&g) <= opts.gtol {
            return Minimum { x, f: fx, grad: g, iterations: iter, termination: Termination::Gradient, trace };
        }
        for i in 0..n {
            d[i] = -dot(&h[i * n..(i + 1) * n], &g);
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            h = identity(n);
            fresh_h = true;
            d.iter_mut().zip(&g).for_each(|(d, g)| *d = -g);
            slope = dot(&g, &d);
        }
        let norm_d = dot(&d, &d).sqrt();
        let mut step = if norm_d > opts.max_step { opts.max_step / norm_d } else { 1.0 };
        if fresh_h && iter == 0 {
            step = step.min(1.0 / inf_norm(&g).max(1e-300)).min(1.0);
        }

        // backtracking with safeguarded quadratic interpolation
        let mut accepted = None;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            match f(&x_new, &mut g_new) {
                Some(v) if v.is_finite() && g_new.iter().all(|g| g.is_finite()) => {
                    if v <= fx + 1e-4 * step * slope {
                        accepted = Some(v);
                        break;
                    }
                    let denom = 2.0 * (v - fx - slope * step);
                    let interp = if denom > 0.0 { -slope * step * step / denom } else { 0.5 * step };
                    step = interp.clamp(0.1 * step, 0.5 * step);
                }
                _ => step *= 0.25,
            }
        }
        let Some(f_new) = accepted else {
            if !fresh_h {
                h = identity(n);
                fresh_h = true;
                continue;
            }
            return Minimum { x, f: fx, grad: g, iterations: iter, termination: Termination::LineSearch, trace };
        };

        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh_h {
                let scale = sy / dot(&y, &y);
                h.iter_mut().enumerate().for_each(|(k, v)| *v = if k % (n + 1) == 0 { scale } else { 0.0 });
                fresh_h = false;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }

        let progress = (fx - f_new).abs() <= opts.ftol * (1.0 + fx.abs());
        stalls = if progress { stalls + 1 } else { 0 };
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        fx = f_new;
        trace.push(fx);
        if stalls >= 5 {
            return Minimum { x, f: fx, grad: g, iterations: iter + 1, termination: Termination::NoProgress, trace };
        }
    }
    let termination = if inf_norm(&g) <= opts.gtol { Termination::Gradient } else { Termination::MaxIterations };
    Minimum { x, f: fx, grad: g, iterations: opts.max_iter, termination, trace }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ` with `ρ = 1/(sᵀy)`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            Some((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2))
        };
        let m = minimize(f, &[-1.2, 1.0], &BfgsOptions::default());
        assert_eq!(m.termination, Termination::Gradient);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6);
        assert!(m.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn respects_inadmissible_region() {
        // minimum of (x-3)^2 restricted to x < 2 via None outside
        let f = |x: &[f64], g: &mut [f64]| {
            if x[0] >= 2.0 {
                return None;
            }
            g[0] = 2.0 * (x[0] - 3.0) + 1.0 / (2.0 - x[0]);
            Some((x[0] - 3.0).powi(2) - (2.0 - x[0]).ln())
        };
        let m = minimize(f, &[0.0], &BfgsOptions::default());
        assert!(m.x[0] < 2.0);
        assert!(m.grad_norm() < 1e-6);
    }

    #[test]
    fn bad_start() {
        let m = minimize(|_: &[f64], _: &mut [f64]| None, &[0.0], &BfgsOptions::default());
        assert_eq!(m.termination, Termination::BadStart);
    }
}
