//! Nonlinear conjugate gradient (Polak-Ribière+) with a strong-Wolfe line
//! search over a flat parameter vector.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::tensor::{dot, norm2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearchConfig {
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Function evaluations allowed per line search.
    pub max_trials: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            c2: 0.1,
            max_trials: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CgUpdate {
    PolakRibierePlus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    /// Stop when `|f_prev - f| / (1 + |f_prev|)` drops below this.
    pub rel_f_tol: f64,
    /// Stop when `‖g‖ / (1 + |f|)` drops below this.
    pub grad_tol: f64,
    pub line_search: LineSearchConfig,
    pub cg_update: CgUpdate,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            rel_f_tol: 1e-10,
            grad_tol: 1e-9,
            line_search: LineSearchConfig::default(),
            cg_update: CgUpdate::PolakRibierePlus,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ls = &self.line_search;
        if !(0.0 < ls.c1 && ls.c1 < ls.c2 && ls.c2 < 1.0) {
            return domain(format!(
                "line search needs 0 < c1 < c2 < 1, got c1={} c2={}",
                ls.c1, ls.c2
            ));
        }
        if ls.max_trials == 0 || self.max_iterations == 0 {
            return domain("iteration and trial limits must be positive");
        }
        if !(self.rel_f_tol > 0.0 && self.grad_tol > 0.0) {
            return domain("tolerances must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    RelFTol,
    GradTol,
    MaxIterations,
    LineSearchFailure,
}

impl Termination {
    /// Whether the run stopped on one of the convergence tests.
    pub fn converged(self) -> bool {
        matches!(self, Termination::RelFTol | Termination::GradTol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    pub final_point: Vec<f64>,
    pub final_f: f64,
    pub final_grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Objective at the start and after every accepted step.
    pub f_trace: Vec<f64>,
    /// Times the conjugate direction failed the descent test and was
    /// replaced by steepest descent.
    pub steepest_descent_resets: usize,
}

const DESCENT_TOL: f64 = 1e-12;

struct Trial {
    alpha: f64,
    f: f64,
    slope: f64,
    grad: Vec<f64>,
}

enum LineSearch {
    Accepted(Trial),
    Failed(Option<Trial>),
}

struct Problem<'a, F> {
    fg: F,
    x: &'a [f64],
    dir: &'a [f64],
    point: Vec<f64>,
    evaluations: usize,
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> Problem<'_, F> {
    fn eval(&mut self, alpha: f64) -> Trial {
        for ((p, &x), &d) in self.point.iter_mut().zip(self.x).zip(self.dir) {
            *p = x + alpha * d;
        }
        let mut grad = vec![0.0; self.x.len()];
        let mut f = (self.fg)(&self.point, &mut grad);
        self.evaluations += 1;
        if !f.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            f = f64::INFINITY;
        }
        let slope = if f.is_finite() {
            dot(&grad, self.dir)
        } else {
            f64::NAN
        };
        Trial {
            alpha,
            f,
            slope,
            grad,
        }
    }
}

/// Minimizer of the cubic through two points with known slopes; `None`
/// when the interpolant has no real minimizer.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let x = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    x.is_finite().then_some(x)
}

fn strong_wolfe<F: FnMut(&[f64], &mut [f64]) -> f64>(
    prob: &mut Problem<'_, F>,
    f0: f64,
    slope0: f64,
    alpha0: f64,
    cfg: &LineSearchConfig,
) -> LineSearch {
    let armijo = |t: &Trial| t.f <= f0 + cfg.c1 * t.alpha * slope0;
    let curvature = |t: &Trial| t.slope.abs() <= -cfg.c2 * slope0;

    let mut best: Option<Trial> = None;
    let keep_best = |best: &mut Option<Trial>, t: &Trial| {
        if t.f < f0 && best.as_ref().is_none_or(|b| t.f < b.f) {
            *best = Some(Trial {
                alpha: t.alpha,
                f: t.f,
                slope: t.slope,
                grad: t.grad.clone(),
            });
        }
    };

    let mut trials = 0;
    let mut prev = Trial {
        alpha: 0.0,
        f: f0,
        slope: slope0,
        grad: Vec::new(),
    };
    let mut alpha = alpha0;

    // Bracketing phase.
    let (mut lo, mut hi) = loop {
        if trials == cfg.max_trials {
            return LineSearch::Failed(best);
        }
        let cur = prob.eval(alpha);
        trials += 1;
        keep_best(&mut best, &cur);
        if !armijo(&cur) || (trials > 1 && cur.f >= prev.f) {
            break (prev, cur);
        }
        if curvature(&cur) {
            return LineSearch::Accepted(cur);
        }
        if cur.slope >= 0.0 {
            break (cur, prev);
        }
        let step = cur.alpha - prev.alpha;
        let (lower, upper) = (cur.alpha + 1.1 * step, cur.alpha + 10.0 * step);
        alpha = cubic_min(prev.alpha, prev.f, prev.slope, cur.alpha, cur.f, cur.slope)
            .filter(|x| *x > lower)
            .map_or(upper, |x| x.min(upper));
        prev = cur;
    };

    // Zoom phase: `lo` satisfies sufficient decrease and has the lowest f
    // seen in the bracket.
    loop {
        if trials == cfg.max_trials {
            return LineSearch::Failed(best);
        }
        let (left, right) = if lo.alpha < hi.alpha {
            (lo.alpha, hi.alpha)
        } else {
            (hi.alpha, lo.alpha)
        };
        let width = right - left;
        if width <= f64::EPSILON * right.abs().max(f64::MIN_POSITIVE) {
            return LineSearch::Failed(best);
        }
        let guess = if hi.f.is_finite() && hi.slope.is_finite() {
            cubic_min(lo.alpha, lo.f, lo.slope, hi.alpha, hi.f, hi.slope)
        } else {
            None
        };
        let margin = 0.1 * width;
        let a = guess
            .filter(|x| *x > left + margin && *x < right - margin)
            .unwrap_or(0.5 * (left + right));
        let cur = prob.eval(a);
        trials += 1;
        keep_best(&mut best, &cur);
        if !armijo(&cur) || cur.f >= lo.f {
            hi = cur;
        } else {
            if curvature(&cur) {
                return LineSearch::Accepted(cur);
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
}

/// Minimizes a smooth function given as `fg(x, grad) -> f`, where `fg`
/// writes the gradient at `x` into `grad`.
pub fn minimize<F>(mut fg: F, x0: Vec<f64>, cfg: &OptimizerConfig) -> Result<OptimizeOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    cfg.validate()?;
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = fg(&x, &mut g);
    let mut evaluations = 1;
    let mut f_trace = vec![f];
    let mut resets = 0;

    let finish =
        |x: Vec<f64>, f: f64, g: &[f64], iterations, evaluations, termination, f_trace, resets| {
            OptimizeOutcome {
                final_point: x,
                final_f: f,
                final_grad_norm: norm2(g),
                iterations,
                evaluations,
                termination,
                f_trace,
                steepest_descent_resets: resets,
            }
        };

    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Ok(finish(
            x,
            f,
            &g,
            0,
            evaluations,
            Termination::LineSearchFailure,
            f_trace,
            resets,
        ));
    }
    if norm2(&g) / (1.0 + f.abs()) < cfg.grad_tol {
        return Ok(finish(
            x,
            f,
            &g,
            0,
            evaluations,
            Termination::GradTol,
            f_trace,
            resets,
        ));
    }

    let restart_every = n.max(1);
    let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut prev_step: Option<(f64, f64)> = None;

    for iter in 1..=cfg.max_iterations {
        let mut slope = dot(&g, &d);
        if slope >= -DESCENT_TOL * norm2(&g) * norm2(&d) {
            log::debug!("iteration {iter}: non-descent direction, resetting to steepest descent");
            resets += 1;
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
            slope = -dot(&g, &g);
        }
        let alpha0 = match prev_step {
            Some((alpha, prev_slope)) => alpha * prev_slope / slope,
            None => 1.0 / norm2(&d),
        };
        let alpha0 = if alpha0.is_finite() && alpha0 > 0.0 {
            alpha0
        } else {
            1.0 / norm2(&d)
        };

        let mut prob = Problem {
            fg: &mut fg,
            x: &x,
            dir: &d,
            point: vec![0.0; n],
            evaluations: 0,
        };
        let outcome = strong_wolfe(&mut prob, f, slope, alpha0, &cfg.line_search);
        evaluations += prob.evaluations;

        let trial = match outcome {
            LineSearch::Accepted(t) => t,
            LineSearch::Failed(best) => {
                if let Some(t) = best {
                    x.iter_mut()
                        .zip(&d)
                        .for_each(|(xi, di)| *xi += t.alpha * di);
                    f = t.f;
                    g = t.grad;
                    f_trace.push(f);
                }
                return Ok(finish(
                    x,
                    f,
                    &g,
                    iter,
                    evaluations,
                    Termination::LineSearchFailure,
                    f_trace,
                    resets,
                ));
            }
        };

        let f_prev = f;
        x.iter_mut()
            .zip(&d)
            .for_each(|(xi, di)| *xi += trial.alpha * di);
        let g_new = trial.grad;
        f = trial.f;
        f_trace.push(f);

        let gg = dot(&g, &g);
        let beta = if iter % restart_every == 0 {
            0.0
        } else {
            let num: f64 = g_new.iter().zip(&g).map(|(a, b)| a * (a - b)).sum();
            (num / gg).max(0.0)
        };
        d.iter_mut()
            .zip(&g_new)
            .for_each(|(di, gi)| *di = -gi + beta * *di);
        prev_step = Some((trial.alpha, slope));
        g = g_new;

        if norm2(&g) / (1.0 + f.abs()) < cfg.grad_tol {
            return Ok(finish(
                x,
                f,
                &g,
                iter,
                evaluations,
                Termination::GradTol,
                f_trace,
                resets,
            ));
        }
        if (f_prev - f).abs() / (1.0 + f_prev.abs()) < cfg.rel_f_tol {
            return Ok(finish(
                x,
                f,
                &g,
                iter,
                evaluations,
                Termination::RelFTol,
                f_trace,
                resets,
            ));
        }
    }
    let iters = cfg.max_iterations;
    Ok(finish(
        x,
        f,
        &g,
        iters,
        evaluations,
        Termination::MaxIterations,
        f_trace,
        resets,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64], g: &mut [f64]) -> f64 {
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi = 2.0 * xi;
        }
        dot(x, x)
    }

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    fn assert_monotone(trace: &[f64]) {
        for w in trace.windows(2) {
            assert!(w[1] <= w[0], "trace increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn sphere_converges_quickly() {
        let x0 = vec![0.3, -1.7, 2.2, 0.05, -0.9];
        let out = minimize(sphere, x0, &OptimizerConfig::default()).unwrap();
        assert!(out.iterations <= 60);
        assert!(out.final_f < 1e-20, "f = {}", out.final_f);
        assert!(out.termination.converged());
        assert_monotone(&out.f_trace);
    }

    #[test]
    fn rosenbrock_reaches_minimizer() {
        let out = minimize(rosenbrock, vec![-1.2, 1.0], &OptimizerConfig::default()).unwrap();
        assert!(
            out.final_f <= 1e-12,
            "f = {} after {:?}",
            out.final_f,
            out.termination
        );
        assert!(out.iterations <= 10_000);
        assert!((out.final_point[0] - 1.0).abs() < 1e-5);
        assert!((out.final_point[1] - 1.0).abs() < 1e-5);
        assert_monotone(&out.f_trace);
    }

    #[test]
    fn stationary_start_stops_immediately() {
        let out = minimize(sphere, vec![0.0; 3], &OptimizerConfig::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.termination, Termination::GradTol);
        assert_eq!(out.f_trace, vec![0.0]);
    }

    #[test]
    fn deterministic() {
        let a = minimize(rosenbrock, vec![-1.2, 1.0], &OptimizerConfig::default()).unwrap();
        let b = minimize(rosenbrock, vec![-1.2, 1.0], &OptimizerConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_line_search_constants() {
        let mut cfg = OptimizerConfig::default();
        cfg.line_search.c2 = 1e-5;
        assert!(minimize(sphere, vec![1.0], &cfg).is_err());
    }

    #[test]
    fn line_search_failure_keeps_best_point() {
        // Gradient that lies about the slope: the line search can never
        // satisfy the curvature condition but some trials still decrease f.
        let liar = |x: &[f64], g: &mut [f64]| {
            g[0] = 1e3 * (x[0] - 1.0).signum();
            (x[0] - 1.0).abs()
        };
        let cfg = OptimizerConfig {
            line_search: LineSearchConfig {
                max_trials: 5,
                ..Default::default()
            },
            ..Default::default()
        };
        let out = minimize(liar, vec![0.0], &cfg).unwrap();
        assert!(out.final_f <= 1.0);
        assert_monotone(&out.f_trace);
    }

    #[test]
    fn narrow_valley_converges_monotonically() {
        // rotated, non-quadratic valley
        let f = |x: &[f64], g: &mut [f64]| {
            let u = x[0] + x[1];
            let v = x[0] - x[1];
            g[0] = 4.0 * u.powi(3) + 200.0 * v;
            g[1] = 4.0 * u.powi(3) - 200.0 * v;
            u.powi(4) + 100.0 * v * v
        };
        let out = minimize(f, vec![2.0, -0.5], &OptimizerConfig::default()).unwrap();
        assert_monotone(&out.f_trace);
        assert!(out.final_f < 1e-6);
    }
}
